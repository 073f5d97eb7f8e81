//! Exact solver for the station-level dual subproblem.
//!
//! For fixed multipliers the relaxed model separates by station. Each
//! station subproblem decides: open or not, how many chargers of each type
//! (integer), and fractional household assignments, minimizing adjusted
//! opening and installation charges plus detour, waiting, and multiplier
//! terms, subject to queue stability, the waiting-time cap, and the
//! at-most-one-charger-per-household inequality.
//!
//! The integer part is handled by enumerating charger configurations
//! (the all-zero configuration is the closed station, objective 0). For a
//! fixed configuration the rest is a convex program: the bilinear
//! waiting-cost term is linearized exactly with McCormick rows, and the
//! nonlinear waiting-time definition is outer-approximated by supporting
//! hyperplanes of the convex transform, added until the linearized waiting
//! times match the true Erlang-C values. Configurations are visited in
//! order of total charger count, then lexicographically, so ties resolve
//! to the fewest chargers; a fixed-charge bound prunes hopeless
//! configurations and terminates the enumeration early.
//!
//! Solves are pure per input and run concurrently from the scheduler; the
//! deadline is checked cooperatively between configuration evaluations.

use crate::instance::{Instance, MINUTES_PER_DAY};
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, Relation};
use crate::queueing::{self, CutCoefficients};
use std::collections::HashMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubproblemError {
    #[error("station {station}: {combinations:.0} charger configurations exceed the enumeration cap {cap}")]
    EnumerationCapExceeded {
        station: usize,
        combinations: f64,
        cap: usize,
    },
    #[error("station {station}: deadline exceeded")]
    DeadlineExceeded { station: usize },
    #[error("station {station}: inner LP failed: {source}")]
    Lp {
        station: usize,
        #[source]
        source: LpError,
    },
}

#[derive(Debug, Clone)]
pub struct SubproblemOptions {
    /// Hard cap on the number of charger configurations to enumerate.
    pub enumeration_cap: usize,
    /// Cut rounds per configuration before giving up on convergence.
    pub max_cuts: usize,
    /// Relative tolerance of the inner convergence test.
    pub inner_tolerance: f64,
    /// Fixed-charge pruning of the configuration enumeration.
    pub prune: bool,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        SubproblemOptions {
            enumeration_cap: 30_000,
            max_cuts: 50,
            inner_tolerance: 1e-6,
            prune: true,
        }
    }
}

/// Everything one station solve needs, detached from the instance so it
/// can cross a worker boundary as a value.
#[derive(Debug, Clone)]
pub struct SubproblemInput {
    pub station: usize,
    /// `(1 + beta_phi) * C_phi_j + nu`.
    pub adjusted_open_cost: f64,
    pub chargers: Vec<SpCharger>,
    pub households: Vec<SpHousehold>,
    pub epsilon: f64,
    /// Waiting cost, USD per minute.
    pub wait_cost: f64,
    pub options: SubproblemOptions,
    pub deadline: Option<Instant>,
}

#[derive(Debug, Clone)]
pub struct SpCharger {
    /// Service rate, per day.
    pub mu_day: f64,
    /// Service rate, per minute.
    pub mu_min: f64,
    /// `(1 + beta_xi) * C_xi_k`, USD per day per charger.
    pub adjusted_install_cost: f64,
    /// Per-station cap on this type.
    pub cap: u32,
    /// `EW + 1/mu`, minutes.
    pub wait_cap: f64,
}

#[derive(Debug, Clone)]
pub struct SpHousehold {
    /// Index into the instance household list.
    pub household: usize,
    /// Charging rate, per day.
    pub lambda: f64,
    /// `C_delta * T_delta * lambda * multiplier - zeta_i`, USD per day.
    pub assign_coefficient: f64,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub station: usize,
    /// Optimal adjusted objective; zero for a closed station, possibly
    /// negative otherwise.
    pub objective_value: f64,
    pub open: bool,
    /// Chargers per type.
    pub chargers: Vec<u32>,
    /// Fractional assignments, `[household slot][charger type]`, aligned
    /// with `household_ids`.
    pub assignments: Vec<Vec<f64>>,
    /// Instance household indices for the slots above.
    pub household_ids: Vec<usize>,
    /// Expected time in system per type, minutes (zero where no chargers).
    pub wait_minutes: Vec<f64>,
    pub cuts_used: usize,
    /// False when some inner loop hit the cut cap; the objective is then
    /// still a valid lower bound.
    pub converged: bool,
}

impl SubproblemSolution {
    fn closed(station: usize, n_households: usize, n_types: usize, ids: Vec<usize>) -> Self {
        SubproblemSolution {
            station,
            objective_value: 0.0,
            open: false,
            chargers: vec![0; n_types],
            assignments: vec![vec![0.0; n_types]; n_households],
            household_ids: ids,
            wait_minutes: vec![0.0; n_types],
            cuts_used: 0,
            converged: true,
        }
    }
}

impl SubproblemInput {
    /// Assemble the inputs for one candidate station from the instance and
    /// the current multipliers.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        instance: &Instance,
        station: usize,
        zeta: &[f64],
        beta_phi: f64,
        beta_xi: f64,
        nu: f64,
        options: SubproblemOptions,
        deadline: Option<Instant>,
    ) -> SubproblemInput {
        let params = &instance.params;
        let chargers = instance
            .charger_types
            .iter()
            .map(|ct| SpCharger {
                mu_day: ct.mu,
                mu_min: ct.mu_per_minute(),
                adjusted_install_cost: (1.0 + beta_xi) * ct.install_cost,
                cap: ct.max_per_station,
                wait_cap: ct.wait_cap_minutes(params),
            })
            .collect();
        let households = instance.neighborhoods.households_for[station]
            .iter()
            .map(|&i| SpHousehold {
                household: i,
                lambda: instance.households[i].lambda,
                assign_coefficient: instance.detour_cost_per_day(i, station) - zeta[i],
            })
            .collect();
        SubproblemInput {
            station,
            adjusted_open_cost: (1.0 + beta_phi) * instance.stations[station].open_cost + nu,
            chargers,
            households,
            epsilon: params.epsilon,
            wait_cost: params.wait_cost,
            options,
            deadline,
        }
    }
}

/// Result of the inner convex program for one fixed configuration.
#[derive(Debug, Clone)]
pub enum InnerOutcome {
    Feasible {
        /// `[household slot][positive-type slot]`.
        x: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        /// LP waiting times per positive-type slot, minutes.
        w: Vec<f64>,
        /// Variable part of the objective (no fixed charges).
        value: f64,
    },
    Infeasible,
}

/// Solve the LP relaxation for a fixed charger configuration under the
/// given cuts. `config` is indexed by charger type; only strictly positive
/// entries produce variables. `cuts` maps a type index to the hyperplanes
/// accumulated for its current server count.
pub fn inner_congestion_lp(
    input: &SubproblemInput,
    config: &[u32],
    cuts: &HashMap<usize, Vec<CutCoefficients>>,
) -> Result<InnerOutcome, SubproblemError> {
    let positive: Vec<usize> = (0..config.len()).filter(|&k| config[k] > 0).collect();
    assert!(
        !positive.is_empty(),
        "inner LP requires at least one charger"
    );
    let n_h = input.households.len();
    let n_t = positive.len();
    let x_base = 0;
    let q_base = n_h * n_t;
    let w_base = 2 * n_h * n_t;
    let n_vars = 2 * n_h * n_t + n_t;

    let mut lp = LinearProgram::new(n_vars);
    for slot in 0..n_h {
        for (t, &k) in positive.iter().enumerate() {
            lp.set_bounds(x_base + slot * n_t + t, 0.0, 1.0);
            lp.set_bounds(q_base + slot * n_t + t, 0.0, input.chargers[k].wait_cap);
        }
    }
    for (t, &k) in positive.iter().enumerate() {
        let ch = &input.chargers[k];
        lp.set_bounds(w_base + t, 1.0 / ch.mu_min, ch.wait_cap);
    }

    for (slot, hh) in input.households.iter().enumerate() {
        for t in 0..n_t {
            lp.objective[x_base + slot * n_t + t] = hh.assign_coefficient;
            lp.objective[q_base + slot * n_t + t] = input.wait_cost * hh.lambda;
        }
    }

    // At most one charger type per household.
    for slot in 0..n_h {
        let mut row = vec![0.0; n_vars];
        for t in 0..n_t {
            row[x_base + slot * n_t + t] = 1.0;
        }
        lp.add_row(row, Relation::Le, 1.0);
    }

    for (t, &k) in positive.iter().enumerate() {
        let ch = &input.chargers[k];
        let servers = config[k] as f64;

        // Queue stability with the safety margin.
        let mut row = vec![0.0; n_vars];
        for (slot, hh) in input.households.iter().enumerate() {
            row[x_base + slot * n_t + t] = hh.lambda;
        }
        lp.add_row(row, Relation::Le, ch.mu_day * servers * (1.0 - input.epsilon));

        // Chargers of a type need fractional users: s <= cap * sum_i x.
        let mut row = vec![0.0; n_vars];
        for slot in 0..n_h {
            row[x_base + slot * n_t + t] = 1.0;
        }
        lp.add_row(row, Relation::Ge, servers / ch.cap as f64);

        // Supporting hyperplanes of the waiting-time transform:
        // W >= (A + B*rho) / (mu*s) + 1/mu with rho expressed through x.
        if let Some(cut_list) = cuts.get(&k) {
            for cut in cut_list {
                let mut row = vec![0.0; n_vars];
                row[w_base + t] = 1.0;
                for (slot, hh) in input.households.iter().enumerate() {
                    row[x_base + slot * n_t + t] =
                        -cut.slope_b * hh.lambda / (ch.mu_day * servers * ch.mu_min * servers);
                }
                let rhs = cut.intercept_a / (ch.mu_min * servers) + 1.0 / ch.mu_min;
                lp.add_row(row, Relation::Ge, rhs);
            }
        }
    }

    // McCormick envelope of q = W * x on [0, wait_cap] x [0, 1].
    for slot in 0..n_h {
        for (t, &k) in positive.iter().enumerate() {
            let cap = input.chargers[k].wait_cap;
            let xi = x_base + slot * n_t + t;
            let qi = q_base + slot * n_t + t;
            let wi = w_base + t;

            let mut row = vec![0.0; n_vars];
            row[qi] = 1.0;
            row[wi] = -1.0;
            row[xi] = -cap;
            lp.add_row(row, Relation::Ge, -cap);

            let mut row = vec![0.0; n_vars];
            row[qi] = 1.0;
            row[xi] = -cap;
            lp.add_row(row, Relation::Le, 0.0);

            let mut row = vec![0.0; n_vars];
            row[qi] = 1.0;
            row[wi] = -1.0;
            lp.add_row(row, Relation::Le, 0.0);
        }
    }

    let sol = solve_lp(&lp).map_err(|source| SubproblemError::Lp {
        station: input.station,
        source,
    })?;
    match sol.status {
        LpStatus::Infeasible => Ok(InnerOutcome::Infeasible),
        LpStatus::Unbounded => unreachable!("all variables are boxed"),
        LpStatus::Optimal => {
            let x: Vec<Vec<f64>> = (0..n_h)
                .map(|slot| {
                    (0..n_t)
                        .map(|t| sol.values[x_base + slot * n_t + t])
                        .collect()
                })
                .collect();
            let q: Vec<Vec<f64>> = (0..n_h)
                .map(|slot| {
                    (0..n_t)
                        .map(|t| sol.values[q_base + slot * n_t + t])
                        .collect()
                })
                .collect();
            let w: Vec<f64> = (0..n_t).map(|t| sol.values[w_base + t]).collect();
            Ok(InnerOutcome::Feasible {
                x,
                q,
                w,
                value: sol.objective_value,
            })
        }
    }
}

/// Exact optimum of the relaxed station subproblem.
pub fn solve_station_subproblem(
    input: &SubproblemInput,
) -> Result<SubproblemSolution, SubproblemError> {
    let n_types = input.chargers.len();
    let n_h = input.households.len();
    let ids: Vec<usize> = input.households.iter().map(|h| h.household).collect();

    let combinations: f64 = input
        .chargers
        .iter()
        .map(|c| c.cap as f64 + 1.0)
        .product();
    if combinations > input.options.enumeration_cap as f64 {
        return Err(SubproblemError::EnumerationCapExceeded {
            station: input.station,
            combinations,
            cap: input.options.enumeration_cap,
        });
    }

    // Closed station: the always-feasible baseline.
    let mut best = SubproblemSolution::closed(input.station, n_h, n_types, ids.clone());
    if n_h == 0 {
        // Nobody can be assigned here, so the usage-link constraint forces
        // every configuration to zero chargers.
        return Ok(best);
    }

    // Lower bound on the variable objective part, valid for every
    // configuration: each assignment coefficient at its best, waiting
    // costs dropped (they are nonnegative).
    let variable_lower_bound: f64 = input
        .households
        .iter()
        .map(|h| h.assign_coefficient.min(0.0))
        .sum();
    let min_install = input
        .chargers
        .iter()
        .map(|c| c.adjusted_install_cost)
        .fold(f64::INFINITY, f64::min);

    // Configurations ordered by total charger count, then
    // lexicographically: the preferred representative of an objective tie
    // is met first.
    let mut configs: Vec<Vec<u32>> = Vec::new();
    let mut current = vec![0u32; n_types];
    'outer: loop {
        configs.push(current.clone());
        let mut k = n_types;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            if current[k] < input.chargers[k].cap {
                current[k] += 1;
                for v in current[k + 1..].iter_mut() {
                    *v = 0;
                }
                break;
            }
            current[k] = 0;
        }
    }
    configs.sort_by_key(|c| (c.iter().map(|&v| v as u64).sum::<u64>(), c.clone()));

    let mut cut_pool: HashMap<(usize, u32), Vec<CutCoefficients>> = HashMap::new();
    let mut total_cuts = 0usize;

    for config in configs.iter().skip(1) {
        if let Some(deadline) = input.deadline {
            if Instant::now() >= deadline {
                return Err(SubproblemError::DeadlineExceeded {
                    station: input.station,
                });
            }
        }

        let total: u64 = config.iter().map(|&v| v as u64).sum();
        let fixed: f64 = input.adjusted_open_cost
            + config
                .iter()
                .zip(&input.chargers)
                .map(|(&s, c)| s as f64 * c.adjusted_install_cost)
                .sum::<f64>();

        if input.options.prune {
            // Cheapest possible fixed charge at this total count; counts
            // only grow from here, so the whole tail is prunable.
            let min_fixed_at_count = input.adjusted_open_cost + total as f64 * min_install;
            if min_fixed_at_count + variable_lower_bound >= best.objective_value {
                break;
            }
            if fixed + variable_lower_bound >= best.objective_value {
                continue;
            }
        }

        match solve_fixed_config(input, config, &mut cut_pool)? {
            ConfigOutcome::Infeasible => {}
            ConfigOutcome::Solved {
                value,
                x,
                w,
                cuts_added,
                converged,
            } => {
                total_cuts += cuts_added;
                let objective = fixed + value;
                if objective < best.objective_value {
                    let positive: Vec<usize> = (0..n_types).filter(|&k| config[k] > 0).collect();
                    let mut assignments = vec![vec![0.0; n_types]; n_h];
                    for (slot, row) in x.iter().enumerate() {
                        for (t, &k) in positive.iter().enumerate() {
                            assignments[slot][k] = row[t];
                        }
                    }
                    let mut wait_minutes = vec![0.0; n_types];
                    for (t, &k) in positive.iter().enumerate() {
                        wait_minutes[k] = w[t];
                    }
                    best = SubproblemSolution {
                        station: input.station,
                        objective_value: objective,
                        open: true,
                        chargers: config.clone(),
                        assignments,
                        household_ids: ids.clone(),
                        wait_minutes,
                        cuts_used: 0,
                        converged,
                    };
                }
            }
        }
    }

    best.cuts_used = total_cuts;
    Ok(best)
}

enum ConfigOutcome {
    Infeasible,
    Solved {
        value: f64,
        /// `[household slot][positive-type slot]`.
        x: Vec<Vec<f64>>,
        /// Converged waiting times per positive-type slot, minutes.
        w: Vec<f64>,
        cuts_added: usize,
        converged: bool,
    },
}

/// Kelley loop for one configuration: solve the LP, compare the linearized
/// waiting times against the true Erlang-C values at the realized
/// utilizations, add supporting hyperplanes where underestimated, repeat.
/// Cuts are pooled by (type, server count) so configurations sharing a
/// count reuse them; they stay valid because the transform only depends on
/// that pair.
fn solve_fixed_config(
    input: &SubproblemInput,
    config: &[u32],
    cut_pool: &mut HashMap<(usize, u32), Vec<CutCoefficients>>,
) -> Result<ConfigOutcome, SubproblemError> {
    let positive: Vec<usize> = (0..config.len()).filter(|&k| config[k] > 0).collect();
    let mut cuts_added = 0usize;

    for round in 0..=input.options.max_cuts {
        let mut cuts: HashMap<usize, Vec<CutCoefficients>> = HashMap::new();
        for &k in &positive {
            if let Some(list) = cut_pool.get(&(k, config[k])) {
                cuts.insert(k, list.clone());
            }
        }
        let outcome = inner_congestion_lp(input, config, &cuts)?;
        let (x, w, value) = match outcome {
            InnerOutcome::Infeasible => return Ok(ConfigOutcome::Infeasible),
            InnerOutcome::Feasible { x, w, value, .. } => (x, w, value),
        };

        // Realized utilization and true waiting time per positive type.
        let mut worst_gap = 0.0f64;
        let mut true_w = vec![0.0; positive.len()];
        for (t, &k) in positive.iter().enumerate() {
            let ch = &input.chargers[k];
            let servers = config[k];
            let load: f64 = input
                .households
                .iter()
                .zip(&x)
                .map(|(hh, row)| hh.lambda * row[t])
                .sum();
            // The stability row keeps the load at or below (1-eps)
            // capacity up to LP tolerance; clip before differentiating.
            let rho = (load / (ch.mu_day * servers as f64)).clamp(0.0, 1.0 - input.epsilon);
            let w_true = queueing::expected_time_in_system(rho, servers as usize, ch.mu_min)
                .expect("utilization is clipped into the stable domain");
            true_w[t] = w_true;
            let gap = w_true - w[t];
            if gap > input.options.inner_tolerance * (1.0 + w_true) {
                worst_gap = worst_gap.max(gap);
                if rho > 0.0 {
                    let cut = queueing::cut_at(rho, servers as usize)
                        .expect("anchor is strictly inside (0, 1)");
                    cut_pool.entry((k, servers)).or_default().push(cut);
                    cuts_added += 1;
                }
            }
        }

        if worst_gap <= 0.0 || round == input.options.max_cuts {
            return Ok(ConfigOutcome::Solved {
                value,
                x,
                w: true_w,
                cuts_added,
                // On the final round the LP value is still a valid lower
                // bound even though the waits have not converged.
                converged: worst_gap <= 0.0,
            });
        }
    }
    unreachable!("loop returns on the final round");
}

/// Minutes-denominated service rate of a per-day rate.
pub fn per_minute(mu_day: f64) -> f64 {
    mu_day / MINUTES_PER_DAY
}
