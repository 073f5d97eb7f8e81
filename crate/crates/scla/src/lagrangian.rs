//! The dual controller: multiplier state, Lagrangian assembly, adaptive
//! subgradient updates, and the outer solve loop.
//!
//! The coupling constraints — full assignment per household, the two
//! budgets, and the station-count cap — are priced into the objective
//! with nonnegative multipliers. For fixed multipliers the model splits
//! into independent station subproblems whose sum, plus the multiplier
//! constants, is a valid lower bound on the optimum. Multipliers move
//! along the constraint-violation subgradients with per-group step
//! lengths `lambda in (0, 2)` that adapt by outcome: a worse bound shrinks
//! every step (red), an improved bound with an aligned direction grows it
//! (green), an improved bound with a reversed direction keeps it
//! (yellow). The rounding heuristic runs every iteration to refresh the
//! upper bound, and the loop stops on gap tolerance, iteration cap, or
//! wall-clock cap.

use crate::instance::Instance;
use crate::parallel::{self, PartitionSpec, ScheduleError, ScheduleReport};
use crate::rounding::{
    evaluate_solution, primal_heuristic, FeasibleSolution, FractionalSolution, RoundingFailure,
    RoundingMode,
};
use crate::subproblem::{
    solve_station_subproblem, SubproblemInput, SubproblemOptions, SubproblemSolution,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("scheduler failure: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("rounding failed irreparably at iteration {iteration}: {source}")]
    Rounding {
        iteration: usize,
        #[source]
        source: RoundingFailure,
    },
}

/// Nonnegative Lagrange multipliers: one per household for the assignment
/// constraint, plus scalars for the station budget, charger budget, and
/// station-count cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub zeta: Vec<f64>,
    pub beta_phi: f64,
    pub beta_xi: f64,
    pub nu: f64,
}

impl Multipliers {
    pub fn zeros(n_households: usize) -> Self {
        Multipliers {
            zeta: vec![0.0; n_households],
            beta_phi: 0.0,
            beta_xi: 0.0,
            nu: 0.0,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.zeta.iter().all(|&z| z >= 0.0)
            && self.beta_phi >= 0.0
            && self.beta_xi >= 0.0
            && self.nu >= 0.0
    }
}

/// Constraint-violation subgradients at one iteration's solutions.
#[derive(Debug, Clone)]
pub struct Subgradients {
    /// `1 - sum_jk x_ijk` per household.
    pub zeta: Vec<f64>,
    /// `f_phi(y) - B_phi`.
    pub beta_phi: f64,
    /// `f_xi(s) - B_xi`.
    pub beta_xi: f64,
    /// `sum_j y_j - Y_max`.
    pub nu: f64,
}

/// Per-group step length parameters, all kept inside (0, 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLengths {
    pub zeta: f64,
    pub beta_phi: f64,
    pub beta_xi: f64,
    pub nu: f64,
}

impl StepLengths {
    pub fn uniform(v: f64) -> Self {
        StepLengths {
            zeta: v,
            beta_phi: v,
            beta_xi: v,
            nu: v,
        }
    }

    pub fn in_domain(&self) -> bool {
        [self.zeta, self.beta_phi, self.beta_xi, self.nu]
            .iter()
            .all(|&l| l > 0.0 && l < 2.0)
    }
}

const STEP_MIN: f64 = 1e-4;
const STEP_MAX: f64 = 2.0 - 1e-6;

/// Aggregate dual value: subproblem sum plus the multiplier constants.
pub fn lagrangian_value(
    subproblem_objectives: &[f64],
    multipliers: &Multipliers,
    instance: &Instance,
) -> f64 {
    let params = &instance.params;
    let zeta_sum: f64 = multipliers.zeta.iter().sum();
    subproblem_objectives.iter().sum::<f64>() + zeta_sum
        - multipliers.beta_phi * params.station_budget
        - multipliers.beta_xi * params.charger_budget
        - multipliers.nu * params.max_stations as f64
}

/// Subgradients of the dual function at the aggregated solutions.
pub fn subgradients(solutions: &[SubproblemSolution], instance: &Instance) -> Subgradients {
    let mut zeta = vec![1.0; instance.num_households()];
    let mut open_cost = 0.0;
    let mut install_cost = 0.0;
    let mut open_count = 0usize;
    for sol in solutions {
        if sol.open {
            open_count += 1;
            open_cost += instance.stations[sol.station].open_cost;
        }
        for (k, &s) in sol.chargers.iter().enumerate() {
            install_cost += s as f64 * instance.charger_types[k].install_cost;
        }
        for (slot, &household) in sol.household_ids.iter().enumerate() {
            let total: f64 = sol.assignments[slot].iter().sum();
            zeta[household] -= total;
        }
    }
    Subgradients {
        zeta,
        beta_phi: open_cost - instance.params.station_budget,
        beta_xi: install_cost - instance.params.charger_budget,
        nu: open_count as f64 - instance.params.max_stations as f64,
    }
}

/// One multiplier-group update: `eta <- max(0, eta + step * g)` with
/// `step = lambda * delta / ||g||^2`; a zero-norm group stays put.
fn update_group(values: &mut [f64], gradients: &[f64], lambda: f64, delta: f64) {
    let norm2: f64 = gradients.iter().map(|g| g * g).sum();
    if norm2 <= 0.0 {
        return;
    }
    let step = lambda * delta / norm2;
    for (v, g) in values.iter_mut().zip(gradients) {
        *v = (*v + step * g).max(0.0);
    }
}

/// Apply the subgradient step to every group. `delta = UB - L(best)` must
/// be positive; nonpositive values freeze the update (the caller flags
/// it).
pub fn update_multipliers(
    multipliers: &Multipliers,
    gradients: &Subgradients,
    step_lengths: &StepLengths,
    delta: f64,
) -> Multipliers {
    let mut next = multipliers.clone();
    if delta <= 0.0 || !delta.is_finite() {
        return next;
    }
    update_group(&mut next.zeta, &gradients.zeta, step_lengths.zeta, delta);
    update_group(
        std::slice::from_mut(&mut next.beta_phi),
        &[gradients.beta_phi],
        step_lengths.beta_phi,
        delta,
    );
    update_group(
        std::slice::from_mut(&mut next.beta_xi),
        &[gradients.beta_xi],
        step_lengths.beta_xi,
        delta,
    );
    update_group(
        std::slice::from_mut(&mut next.nu),
        &[gradients.nu],
        step_lengths.nu,
        delta,
    );
    next
}

/// Red/yellow/green adaptation of the per-group step lengths.
///
/// No improvement over the best bound shrinks every group by 0.9 (red).
/// Otherwise each group runs the directional test `d = <g - g_avg, g>`:
/// nonnegative grows the group by 1.1 (green), negative keeps it
/// (yellow). Results are clamped into (0, 2).
pub fn adapt_step_lengths(
    step_lengths: &StepLengths,
    improved: bool,
    gradients: &Subgradients,
    averaged: &Subgradients,
) -> StepLengths {
    let clamp = |l: f64| l.clamp(STEP_MIN, STEP_MAX);
    if !improved {
        return StepLengths {
            zeta: clamp(step_lengths.zeta * 0.9),
            beta_phi: clamp(step_lengths.beta_phi * 0.9),
            beta_xi: clamp(step_lengths.beta_xi * 0.9),
            nu: clamp(step_lengths.nu * 0.9),
        };
    }
    let adapt_vec = |lambda: f64, g: &[f64], avg: &[f64]| {
        let d: f64 = g
            .iter()
            .zip(avg)
            .map(|(gi, ai)| (gi - ai) * gi)
            .sum();
        if d >= 0.0 {
            clamp(lambda * 1.1)
        } else {
            lambda
        }
    };
    StepLengths {
        zeta: adapt_vec(step_lengths.zeta, &gradients.zeta, &averaged.zeta),
        beta_phi: adapt_vec(
            step_lengths.beta_phi,
            &[gradients.beta_phi],
            &[averaged.beta_phi],
        ),
        beta_xi: adapt_vec(
            step_lengths.beta_xi,
            &[gradients.beta_xi],
            &[averaged.beta_xi],
        ),
        nu: adapt_vec(step_lengths.nu, &[gradients.nu], &[averaged.nu]),
    }
}

/// Exponential moving average of subgradients with factor 0.5.
fn average_gradients(previous: &Subgradients, current: &Subgradients) -> Subgradients {
    Subgradients {
        zeta: previous
            .zeta
            .iter()
            .zip(&current.zeta)
            .map(|(p, c)| 0.5 * p + 0.5 * c)
            .collect(),
        beta_phi: 0.5 * previous.beta_phi + 0.5 * current.beta_phi,
        beta_xi: 0.5 * previous.beta_xi + 0.5 * current.beta_xi,
        nu: 0.5 * previous.nu + 0.5 * current.nu,
    }
}

#[derive(Debug, Clone)]
pub struct DualConfig {
    /// Primal-dual gap tolerance for termination.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    pub rounding_mode: RoundingMode,
    pub seed: u64,
    pub subproblem: SubproblemOptions,
    pub partitions: Vec<PartitionSpec>,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            tolerance: 0.01,
            max_iterations: 100,
            time_limit: None,
            rounding_mode: RoundingMode::Deterministic,
            seed: 0,
            subproblem: SubproblemOptions::default(),
            partitions: PartitionSpec::single_pool(4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Dual value at this iteration's multipliers.
    pub lower_bound: f64,
    pub best_lower_bound: f64,
    pub upper_bound: f64,
    /// `1 - L / UB` at this iteration.
    pub gap: f64,
    pub step_lengths: StepLengths,
    pub seconds: f64,
    /// Subproblems whose cut loop did not converge (bounds stay valid).
    pub non_converged: usize,
    /// Rounding produced no admissible solution this iteration.
    pub rounding_rejected: bool,
    /// Multiplier updates were frozen (no finite positive delta).
    pub frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
    TimeCap,
}

#[derive(Debug)]
pub struct DualOutcome {
    pub multipliers: Multipliers,
    pub best_multipliers: Multipliers,
    pub best_lower_bound: f64,
    pub upper_bound: f64,
    pub best_solution: Option<FeasibleSolution>,
    pub history: Vec<IterationRecord>,
    pub schedule_reports: Vec<ScheduleReport>,
    pub termination: Termination,
}

impl DualOutcome {
    /// `|UB - LB| / UB`, the method's own gap.
    pub fn model_gap(&self) -> f64 {
        relative_gap(self.best_lower_bound, self.upper_bound)
    }

    /// Full per-iteration CSV including the per-group step lengths.
    pub fn write_history_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "iter,L,UB,gap,lambda_zeta,lambda_beta_phi,lambda_beta_xi,lambda_nu,seconds"
        )?;
        for r in &self.history {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.3}",
                r.iteration,
                r.lower_bound,
                r.upper_bound,
                r.gap,
                r.step_lengths.zeta,
                r.step_lengths.beta_phi,
                r.step_lengths.beta_xi,
                r.step_lengths.nu,
                r.seconds
            )?;
        }
        Ok(())
    }
}

pub fn relative_gap(lower: f64, upper: f64) -> f64 {
    if !upper.is_finite() {
        return f64::INFINITY;
    }
    if upper.abs() <= f64::EPSILON {
        return 0.0;
    }
    (upper - lower).abs() / upper.abs()
}

/// Solve all station subproblems at the given multipliers.
fn solve_all(
    instance: &Instance,
    candidates: &[usize],
    multipliers: &Multipliers,
    config: &DualConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<SubproblemSolution>, ScheduleReport), ScheduleError> {
    parallel::execute_iteration(
        candidates,
        &config.partitions,
        rng,
        |j| instance.neighborhoods.households_for[j].len(),
        |station, deadline| {
            let input = SubproblemInput::build(
                instance,
                station,
                &multipliers.zeta,
                multipliers.beta_phi,
                multipliers.beta_xi,
                multipliers.nu,
                config.subproblem.clone(),
                deadline,
            );
            solve_station_subproblem(&input)
        },
    )
}

/// The outer dual loop. Starts from zero multipliers, alternates
/// subproblem solves, rounding, multiplier steps, and step-length
/// adaptation until the gap tolerance, iteration cap, or time cap hits.
pub fn run_dual_loop(instance: &Instance, config: &DualConfig) -> Result<DualOutcome, DualError> {
    let started = Instant::now();
    let candidates: Vec<usize> = (0..instance.num_stations())
        .filter(|&j| instance.stations[j].candidate)
        .collect();

    let mut schedule_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut schedule_reports: Vec<ScheduleReport> = Vec::new();

    let mut multipliers = Multipliers::zeros(instance.num_households());
    let mut best_multipliers = multipliers.clone();
    let mut step_lengths = StepLengths::uniform(0.1);
    let mut upper_bound = f64::INFINITY;
    let mut best_solution: Option<FeasibleSolution> = None;

    // Iteration 0: evaluate the dual at zero and seed the upper bound.
    let (mut solutions, report) =
        solve_all(instance, &candidates, &multipliers, config, &mut schedule_rng)?;
    schedule_reports.push(report);
    let objectives: Vec<f64> = solutions.iter().map(|s| s.objective_value).collect();
    let mut lower = lagrangian_value(&objectives, &multipliers, instance);
    let mut best_lower = lower;

    let round_and_update =
        |iteration: usize,
         solutions: &[SubproblemSolution],
         upper_bound: &mut f64,
         best_solution: &mut Option<FeasibleSolution>|
         -> Result<bool, DualError> {
            let frac = FractionalSolution::from_subproblems(instance, solutions);
            let mut rng = ChaCha8Rng::seed_from_u64(
                config
                    .seed
                    .wrapping_add((iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            match primal_heuristic(instance, &frac, config.rounding_mode, &mut rng) {
                Ok(solution) => {
                    let report = evaluate_solution(&solution, instance);
                    if report.feasible && report.budgets.all_ok() {
                        let objective = report.cost.total();
                        if objective < *upper_bound {
                            *upper_bound = objective;
                            *best_solution = Some(solution);
                        }
                        Ok(false)
                    } else {
                        // Structurally or budget-infeasible: never used
                        // for the upper bound.
                        Ok(true)
                    }
                }
                Err(RoundingFailure::CoverageImpossible(hh)) => Err(DualError::Rounding {
                    iteration,
                    source: RoundingFailure::CoverageImpossible(hh),
                }),
                Err(_) => Ok(true),
            }
        };

    let rejected = round_and_update(0, &solutions, &mut upper_bound, &mut best_solution)?;
    let mut gap = 1.0 - lower / upper_bound.max(f64::EPSILON);
    if upper_bound.is_infinite() {
        gap = f64::INFINITY;
    }
    let non_converged = solutions.iter().filter(|s| !s.converged).count();
    history.push(IterationRecord {
        iteration: 0,
        lower_bound: lower,
        best_lower_bound: best_lower,
        upper_bound,
        gap,
        step_lengths,
        seconds: started.elapsed().as_secs_f64(),
        non_converged,
        rounding_rejected: rejected,
        frozen: false,
    });

    let mut averaged: Option<Subgradients> = None;
    let mut termination = Termination::IterationCap;
    if gap <= config.tolerance {
        termination = Termination::Converged;
    } else {
        for iteration in 1..=config.max_iterations {
            if let Some(limit) = config.time_limit {
                if started.elapsed() >= limit {
                    termination = Termination::TimeCap;
                    break;
                }
            }

            // Step direction from the previous iteration's solutions.
            let gradients = subgradients(&solutions, instance);
            let delta = upper_bound - best_lower;
            let frozen = !(delta.is_finite() && delta > 0.0);
            if !frozen {
                multipliers =
                    update_multipliers(&multipliers, &gradients, &step_lengths, delta);
            }

            // Evaluate the dual at the new multipliers.
            let (new_solutions, report) =
                solve_all(instance, &candidates, &multipliers, config, &mut schedule_rng)?;
            schedule_reports.push(report);
            let objectives: Vec<f64> =
                new_solutions.iter().map(|s| s.objective_value).collect();
            lower = lagrangian_value(&objectives, &multipliers, instance);

            let rejected =
                round_and_update(iteration, &new_solutions, &mut upper_bound, &mut best_solution)?;

            // Adapt step lengths against the incumbent, then move it.
            let improved = lower > best_lower;
            let avg = averaged
                .take()
                .map(|prev| average_gradients(&prev, &gradients))
                .unwrap_or_else(|| gradients.clone());
            step_lengths = adapt_step_lengths(&step_lengths, improved, &gradients, &avg);
            averaged = Some(avg);
            if improved {
                best_lower = lower;
                best_multipliers = multipliers.clone();
            }

            gap = if upper_bound.is_finite() {
                1.0 - lower / upper_bound.max(f64::EPSILON)
            } else {
                f64::INFINITY
            };
            let non_converged = new_solutions.iter().filter(|s| !s.converged).count();
            history.push(IterationRecord {
                iteration,
                lower_bound: lower,
                best_lower_bound: best_lower,
                upper_bound,
                gap,
                step_lengths,
                seconds: started.elapsed().as_secs_f64(),
                non_converged,
                rounding_rejected: rejected,
                frozen,
            });
            solutions = new_solutions;

            if gap <= config.tolerance {
                termination = Termination::Converged;
                break;
            }
        }
    }

    Ok(DualOutcome {
        multipliers,
        best_multipliers,
        best_lower_bound: best_lower,
        upper_bound,
        best_solution,
        history,
        schedule_reports,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_scenario, LocationChoice, Policy, ScenarioSpec};

    fn small_spec(seed: u64) -> ScenarioSpec {
        let mut spec = ScenarioSpec::baseline(seed);
        spec.n_households = 12;
        spec.n_taz = 4;
        spec.n_depots = 2;
        spec.locations = LocationChoice::Both;
        spec.policy = Policy::Multi;
        spec.k_c = 2;
        // Shrink charger menu so subproblem enumeration stays tiny.
        spec.charger_types.truncate(2);
        for ct in spec.charger_types.iter_mut() {
            ct.max_per_station = 3;
        }
        spec
    }

    #[test]
    fn lagrangian_value_arithmetic() {
        let inst = generate_scenario(&small_spec(1)).unwrap();
        let mut m = Multipliers::zeros(inst.num_households());
        // sum SP = -10, sum zeta = 50, others zero.
        m.zeta = vec![50.0 / 12.0; 12];
        let v = lagrangian_value(&[-4.0, -6.0], &m, &inst);
        assert!((v - 40.0).abs() < 1e-9);

        // beta_phi prices the station budget.
        let mut m2 = Multipliers::zeros(inst.num_households());
        m2.beta_phi = 1.0;
        let v2 = lagrangian_value(&[0.0], &m2, &inst);
        assert!((v2 + inst.params.station_budget).abs() < 1e-9);
    }

    #[test]
    fn zero_multipliers_close_everything() {
        let inst = generate_scenario(&small_spec(2)).unwrap();
        let m = Multipliers::zeros(inst.num_households());
        let config = DualConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let candidates: Vec<usize> = (0..inst.num_stations())
            .filter(|&j| inst.stations[j].candidate)
            .collect();
        let (solutions, _) = solve_all(&inst, &candidates, &m, &config, &mut rng).unwrap();
        assert!(solutions.iter().all(|s| !s.open));
        let objectives: Vec<f64> = solutions.iter().map(|s| s.objective_value).collect();
        assert_eq!(lagrangian_value(&objectives, &m, &inst), 0.0);

        // All-closed solutions leave every household uncovered.
        let g = subgradients(&solutions, &inst);
        assert!(g.zeta.iter().all(|&z| (z - 1.0).abs() < 1e-12));
        assert!((g.nu - (-(inst.params.max_stations as f64))).abs() < 1e-9);
    }

    #[test]
    fn step_size_formula_and_projection() {
        let m = Multipliers {
            zeta: vec![0.0, 0.01],
            beta_phi: 0.0,
            beta_xi: 0.0,
            nu: 0.0,
        };
        let g = Subgradients {
            zeta: vec![20.0, -10.0],
            beta_phi: 0.0,
            beta_xi: 0.0,
            nu: 0.0,
        };
        // lambda = 0.1, delta = 100, ||g||^2 = 500 -> step 0.02.
        let next = update_multipliers(&m, &g, &StepLengths::uniform(0.1), 100.0);
        assert!((next.zeta[0] - 0.4).abs() < 1e-12);
        // 0.01 - 0.2 projects to zero.
        assert_eq!(next.zeta[1], 0.0);
        // Zero-norm groups unchanged.
        assert_eq!(next.nu, 0.0);
        assert!(next.is_nonnegative());
    }

    #[test]
    fn red_yellow_green_adaptation() {
        let g = Subgradients {
            zeta: vec![1.0, 1.0],
            beta_phi: 2.0,
            beta_xi: -1.0,
            nu: 0.5,
        };
        let steps = StepLengths::uniform(1.0);

        // Red: every group shrinks.
        let red = adapt_step_lengths(&steps, false, &g, &g);
        assert!((red.zeta - 0.9).abs() < 1e-12);
        assert!((red.nu - 0.9).abs() < 1e-12);

        // Green boundary: g == averaged means d = 0 >= 0, so grow.
        let green = adapt_step_lengths(&steps, true, &g, &g);
        assert!((green.zeta - 1.1).abs() < 1e-12);

        // Yellow: averaged larger than g in the same direction flips the
        // sign of d for positive entries.
        let avg = Subgradients {
            zeta: vec![3.0, 3.0],
            beta_phi: 5.0,
            beta_xi: -3.0,
            nu: 2.0,
        };
        let yellow = adapt_step_lengths(&steps, true, &g, &avg);
        assert_eq!(yellow.zeta, 1.0);
        assert_eq!(yellow.beta_phi, 1.0);

        // Clamp: growth never reaches 2.
        let near_two = StepLengths::uniform(1.9999);
        let clamped = adapt_step_lengths(&near_two, true, &g, &g);
        assert!(clamped.zeta < 2.0);
        assert!(clamped.in_domain());
    }

    #[test]
    fn trivial_tolerance_stops_after_first_iteration() {
        let inst = generate_scenario(&small_spec(3)).unwrap();
        let config = DualConfig {
            tolerance: 1.0,
            max_iterations: 50,
            ..DualConfig::default()
        };
        let out = run_dual_loop(&inst, &config).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn dual_loop_bookkeeping_invariants() {
        let inst = generate_scenario(&small_spec(4)).unwrap();
        let config = DualConfig {
            tolerance: 1e-9,
            max_iterations: 12,
            ..DualConfig::default()
        };
        let out = run_dual_loop(&inst, &config).unwrap();
        assert!(!out.history.is_empty());
        let mut best_l = f64::NEG_INFINITY;
        let mut ub = f64::INFINITY;
        for r in &out.history {
            assert!(r.best_lower_bound >= best_l - 1e-12, "best L regressed");
            assert!(r.upper_bound <= ub + 1e-12, "UB regressed");
            best_l = r.best_lower_bound;
            ub = r.upper_bound;
            assert!(r.step_lengths.in_domain());
            assert!(r.upper_bound >= r.best_lower_bound - 1e-6);
        }
        assert!(out.multipliers.is_nonnegative());
        assert!(out.best_solution.is_some());
    }

    #[test]
    fn dual_loop_is_deterministic() {
        let inst = generate_scenario(&small_spec(5)).unwrap();
        let config = DualConfig {
            tolerance: 1e-9,
            max_iterations: 6,
            ..DualConfig::default()
        };
        let a = run_dual_loop(&inst, &config).unwrap();
        let b = run_dual_loop(&inst, &config).unwrap();
        let trace = |o: &DualOutcome| {
            o.history
                .iter()
                .map(|r| (r.lower_bound, r.upper_bound))
                .collect::<Vec<_>>()
        };
        assert_eq!(trace(&a), trace(&b));
    }

    #[test]
    fn history_csv_has_step_length_columns() {
        let inst = generate_scenario(&small_spec(6)).unwrap();
        let config = DualConfig {
            tolerance: 0.5,
            max_iterations: 3,
            ..DualConfig::default()
        };
        let out = run_dual_loop(&inst, &config).unwrap();
        let mut buf = Vec::new();
        out.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "iter,L,UB,gap,lambda_zeta,lambda_beta_phi,lambda_beta_xi,lambda_nu,seconds"
        );
        assert!(text.lines().count() >= 2);
    }
}
