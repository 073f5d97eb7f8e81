//! Multipartition master–worker scheduling of station subproblems.
//!
//! The worker fleet is described as named partitions, each with a worker
//! count and an optional per-task time limit, mirroring heterogeneous
//! compute pools. Stations are split across partitions at random in
//! proportion to worker counts, then load-balanced inside each partition
//! by sorting on neighborhood size and dealing round-robin. Tasks that
//! hit their partition's time limit are recorded and resubmitted without
//! a deadline, so every task is ultimately solved.
//!
//! Partitions are emulated in-process by thread pools; tasks are pure
//! functions of their station, workers share nothing mutable, and results
//! are aggregated in station order, so the outcome is identical for any
//! worker configuration under a fixed seed.

use crate::subproblem::{SubproblemError, SubproblemSolution};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::sync::mpsc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct PartitionSpec {
    pub name: String,
    pub worker_count: usize,
    /// Per-task wall-clock budget; `None` means unlimited.
    pub time_limit: Option<Duration>,
}

impl PartitionSpec {
    pub fn new(name: &str, worker_count: usize, time_limit: Option<Duration>) -> Self {
        PartitionSpec {
            name: name.into(),
            worker_count,
            time_limit,
        }
    }

    /// A single unlimited pool with the given parallelism.
    pub fn single_pool(workers: usize) -> Vec<PartitionSpec> {
        vec![PartitionSpec::new("pool", workers, None)]
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("no partitions configured")]
    NoPartitions,
    #[error("partition {0} has zero workers")]
    EmptyPartition(String),
    #[error("station {station} failed on partition {partition}: {source}")]
    TaskFailed {
        station: usize,
        partition: String,
        #[source]
        source: SubproblemError,
    },
    #[error("station {station} failed after resubmission: {source}")]
    ResubmissionFailed {
        station: usize,
        #[source]
        source: SubproblemError,
    },
}

#[derive(Debug, Clone, Default)]
pub struct PartitionReport {
    pub name: String,
    pub assigned: Vec<usize>,
    pub completed: Vec<usize>,
    /// Tasks that hit the partition's time limit.
    pub failed: Vec<usize>,
    pub wall: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct ScheduleReport {
    pub partitions: Vec<PartitionReport>,
    /// Tasks rerun without a deadline after a timeout.
    pub resubmitted: Vec<usize>,
    pub wall: Duration,
}

impl ScheduleReport {
    /// Every station appears exactly once across completed sets.
    pub fn is_complete(&self, stations: &[usize]) -> bool {
        let mut completed: Vec<usize> = self
            .partitions
            .iter()
            .flat_map(|p| p.completed.iter().copied())
            .chain(self.resubmitted.iter().copied())
            .collect();
        completed.sort_unstable();
        let mut expected = stations.to_vec();
        expected.sort_unstable();
        completed == expected
    }
}

/// Seeded random split of stations across partitions, proportional to
/// worker counts (largest-remainder rounding, so sizes are within one of
/// exact proportionality).
pub fn partition_tasks(
    stations: &[usize],
    partitions: &[PartitionSpec],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let total_workers: usize = partitions.iter().map(|p| p.worker_count).sum();
    let n = stations.len();
    let mut quotas: Vec<usize> = Vec::with_capacity(partitions.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(partitions.len());
    for (idx, p) in partitions.iter().enumerate() {
        let exact = n as f64 * p.worker_count as f64 / total_workers as f64;
        quotas.push(exact.floor() as usize);
        remainders.push((exact - exact.floor(), idx));
    }
    let assigned: usize = quotas.iter().sum();
    // Distribute the leftover to the largest remainders, ties by index.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for r in remainders.iter().take(n - assigned) {
        quotas[r.1] += 1;
    }

    let mut shuffled = stations.to_vec();
    shuffled.shuffle(rng);
    let mut out = Vec::with_capacity(partitions.len());
    let mut cursor = 0;
    for quota in quotas {
        out.push(shuffled[cursor..cursor + quota].to_vec());
        cursor += quota;
    }
    out
}

/// Round-robin batches after sorting by task size descending (ties by
/// station id): worker `i` receives positions `i, i+w, i+2w, ...`.
pub fn balance_within_partition(
    tasks: &[(usize, usize)], // (station, size)
    worker_count: usize,
) -> Vec<Vec<usize>> {
    let mut sorted = tasks.to_vec();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut batches = vec![Vec::new(); worker_count];
    for (pos, (station, _)) in sorted.into_iter().enumerate() {
        batches[pos % worker_count].push(station);
    }
    batches
}

/// Run one dual iteration's worth of subproblems across the partitions.
///
/// `task_size` is the load-balancing proxy (neighborhood size); `solve`
/// must be a pure function of the station and deadline. Timed-out tasks
/// from limited partitions are resubmitted without a deadline; a task
/// failing without a deadline is unrecoverable. Results come back sorted
/// by station so aggregation is independent of completion order.
pub fn execute_iteration<S, F>(
    stations: &[usize],
    partitions: &[PartitionSpec],
    rng: &mut ChaCha8Rng,
    task_size: S,
    solve: F,
) -> Result<(Vec<SubproblemSolution>, ScheduleReport), ScheduleError>
where
    S: Fn(usize) -> usize,
    F: Fn(usize, Option<Instant>) -> Result<SubproblemSolution, SubproblemError> + Sync,
{
    if partitions.is_empty() {
        return Err(ScheduleError::NoPartitions);
    }
    for p in partitions {
        if p.worker_count == 0 {
            return Err(ScheduleError::EmptyPartition(p.name.clone()));
        }
    }

    let started = Instant::now();
    let split = partition_tasks(stations, partitions, rng);
    let mut reports: Vec<PartitionReport> = Vec::with_capacity(partitions.len());
    let mut solutions: Vec<SubproblemSolution> = Vec::with_capacity(stations.len());
    let mut timed_out: Vec<usize> = Vec::new();
    let mut hard_failure: Option<ScheduleError> = None;

    for (spec, assigned) in partitions.iter().zip(&split) {
        let partition_start = Instant::now();
        let sized: Vec<(usize, usize)> = assigned.iter().map(|&j| (j, task_size(j))).collect();
        let batches = balance_within_partition(&sized, spec.worker_count);

        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| {
            for batch in &batches {
                let tx = tx.clone();
                let solve = &solve;
                let limit = spec.time_limit;
                scope.spawn(move || {
                    for &station in batch {
                        let deadline = limit.map(|d| Instant::now() + d);
                        let result = solve(station, deadline);
                        if tx.send((station, result)).is_err() {
                            return;
                        }
                    }
                });
            }
            drop(tx);

            let mut report = PartitionReport {
                name: spec.name.clone(),
                assigned: assigned.clone(),
                ..PartitionReport::default()
            };
            for (station, result) in rx.iter() {
                match result {
                    Ok(sol) => {
                        report.completed.push(station);
                        solutions.push(sol);
                    }
                    Err(SubproblemError::DeadlineExceeded { .. })
                        if spec.time_limit.is_some() =>
                    {
                        report.failed.push(station);
                        timed_out.push(station);
                    }
                    Err(source) => {
                        if hard_failure.is_none() {
                            hard_failure = Some(ScheduleError::TaskFailed {
                                station,
                                partition: spec.name.clone(),
                                source,
                            });
                        }
                    }
                }
            }
            report.completed.sort_unstable();
            report.failed.sort_unstable();
            report.wall = partition_start.elapsed();
            reports.push(report);
        });
        if let Some(err) = hard_failure {
            return Err(err);
        }
    }

    // Resubmission: timed-out tasks rerun without a deadline, standing in
    // for the unlimited partition.
    timed_out.sort_unstable();
    for &station in &timed_out {
        match solve(station, None) {
            Ok(sol) => solutions.push(sol),
            Err(source) => {
                return Err(ScheduleError::ResubmissionFailed { station, source });
            }
        }
    }

    solutions.sort_by_key(|s| s.station);
    let report = ScheduleReport {
        partitions: reports,
        resubmitted: timed_out,
        wall: started.elapsed(),
    };
    Ok((solutions, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn dummy_solution(station: usize) -> SubproblemSolution {
        SubproblemSolution {
            station,
            objective_value: -(station as f64),
            open: false,
            chargers: vec![],
            assignments: vec![],
            household_ids: vec![],
            wait_minutes: vec![],
            cuts_used: 0,
            converged: true,
        }
    }

    #[test]
    fn one_partition_takes_everything() {
        let stations: Vec<usize> = (0..17).collect();
        let parts = PartitionSpec::single_pool(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let split = partition_tasks(&stations, &parts, &mut rng);
        assert_eq!(split.len(), 1);
        assert_eq!(split[0].len(), 17);
    }

    #[test]
    fn identical_seeds_identical_split() {
        let stations: Vec<usize> = (0..100).collect();
        let parts = vec![
            PartitionSpec::new("a", 4, None),
            PartitionSpec::new("b", 2, None),
        ];
        let a = partition_tasks(&stations, &parts, &mut ChaCha8Rng::seed_from_u64(5));
        let b = partition_tasks(&stations, &parts, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes_proportional_to_workers() {
        let stations: Vec<usize> = (0..2011).collect();
        let parts = vec![
            PartitionSpec::new("short", 400, Some(Duration::from_secs(3600))),
            PartitionSpec::new("group", 180, None),
            PartitionSpec::new("open", 100, Some(Duration::from_secs(48 * 3600))),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let split = partition_tasks(&stations, &parts, &mut rng);
        let total_workers = 680.0;
        for (spec, part) in parts.iter().zip(&split) {
            let exact = 2011.0 * spec.worker_count as f64 / total_workers;
            assert!(
                (part.len() as f64 - exact).abs() <= 1.0,
                "{}: {} vs {exact}",
                spec.name,
                part.len()
            );
        }
        let total: usize = split.iter().map(|s| s.len()).sum();
        assert_eq!(total, 2011);
    }

    #[test]
    fn round_robin_after_size_sort() {
        let tasks = vec![(10, 9), (11, 7), (12, 5), (13, 3)];
        let batches = balance_within_partition(&tasks, 2);
        assert_eq!(batches[0], vec![10, 12]);
        assert_eq!(batches[1], vec![11, 13]);
    }

    #[test]
    fn single_worker_gets_sorted_batch() {
        let tasks = vec![(1, 2), (2, 9), (3, 5)];
        let batches = balance_within_partition(&tasks, 1);
        assert_eq!(batches[0], vec![2, 3, 1]);
    }

    #[test]
    fn equal_sizes_balanced_within_one() {
        let tasks: Vec<(usize, usize)> = (0..10).map(|i| (i, 4)).collect();
        let batches = balance_within_partition(&tasks, 3);
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn all_tasks_complete_without_timeouts() {
        let stations: Vec<usize> = (0..25).collect();
        let parts = vec![
            PartitionSpec::new("a", 3, Some(Duration::from_secs(60))),
            PartitionSpec::new("b", 2, None),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (solutions, report) = execute_iteration(
            &stations,
            &parts,
            &mut rng,
            |_| 1,
            |station, _| Ok(dummy_solution(station)),
        )
        .unwrap();
        assert_eq!(solutions.len(), 25);
        assert!(report.resubmitted.is_empty());
        assert!(report.is_complete(&stations));
        // Sorted aggregation.
        for (i, sol) in solutions.iter().enumerate() {
            assert_eq!(sol.station, i);
        }
    }

    #[test]
    fn injected_timeout_is_resubmitted_exactly_once() {
        let stations: Vec<usize> = (0..12).collect();
        let parts = vec![
            PartitionSpec::new("limited", 2, Some(Duration::from_secs(1))),
            PartitionSpec::new("unlimited", 2, None),
        ];
        // Find a station landing on the limited partition for this seed.
        let split = partition_tasks(&stations, &parts, &mut ChaCha8Rng::seed_from_u64(9));
        let victim = split[0][0];

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (solutions, report) = execute_iteration(
            &stations,
            &parts,
            &mut rng,
            |_| 1,
            |station, deadline| {
                if station == victim && deadline.is_some() {
                    Err(SubproblemError::DeadlineExceeded { station })
                } else {
                    Ok(dummy_solution(station))
                }
            },
        )
        .unwrap();
        assert_eq!(report.resubmitted, vec![victim]);
        assert_eq!(solutions.len(), 12);
        assert!(report.is_complete(&stations));
    }

    #[test]
    fn results_identical_across_worker_counts() {
        let stations: Vec<usize> = (0..40).collect();
        let collect = |workers: usize| {
            let parts = PartitionSpec::single_pool(workers);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let (solutions, _) = execute_iteration(
                &stations,
                &parts,
                &mut rng,
                |j| j % 7,
                |station, _| Ok(dummy_solution(station)),
            )
            .unwrap();
            solutions
                .iter()
                .map(|s| (s.station, s.objective_value))
                .collect::<Vec<_>>()
        };
        let one = collect(1);
        let four = collect(4);
        let eight = collect(8);
        assert_eq!(one, four);
        assert_eq!(one, eight);
    }

    #[test]
    fn hard_failure_propagates() {
        let stations: Vec<usize> = (0..4).collect();
        let parts = PartitionSpec::single_pool(2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let err = execute_iteration(
            &stations,
            &parts,
            &mut rng,
            |_| 1,
            |station, _| {
                if station == 2 {
                    Err(SubproblemError::EnumerationCapExceeded {
                        station,
                        combinations: 1e9,
                        cap: 30_000,
                    })
                } else {
                    Ok(dummy_solution(station))
                }
            },
        )
        .unwrap_err();
        assert!(matches!(err, ScheduleError::TaskFailed { station: 2, .. }));
    }
}
