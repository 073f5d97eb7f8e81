//! The primal feasibility heuristic and solution evaluation.
//!
//! Dual iterations produce fractional station-level allocations. Three
//! steps turn them into a feasible plan:
//!
//! 1. **Coverage.** Starting from the stations the subproblems opened,
//!    open further stations one at a time, chosen randomly with
//!    probability proportional to how many still-uncovered households
//!    each would cover, until every household is covered.
//! 2. **Assignment.** Deterministic mode walks households in descending
//!    demand order and fixes each to the first station–charger pair that
//!    can absorb it, growing charger counts as needed while respecting
//!    stability and the waiting-time cap; candidate pairs are tried in
//!    order of fractional weight, then installation cost, usage count and
//!    current waiting time. Probabilistic mode instead normalizes the
//!    fractional weights into assignment probabilities and sizes chargers
//!    for the resulting effective rates.
//! 3. **Overload repair.** Households that could not be assigned trigger
//!    opening the closed station that covers most of them, and assignment
//!    reruns; no new station means the heuristic stalls and reports
//!    failure instead of looping.
//!
//! [`evaluate_solution`] re-derives waiting times from the queueing
//! formulas at the realized rates and checks every model constraint,
//! reporting violations rather than silently accepting them. Budget
//! violations do not make a solution structurally infeasible; they are
//! flagged so the caller can exclude it from upper-bound updates.

use crate::instance::{Instance, StationKind};
use crate::queueing;
use crate::subproblem::SubproblemSolution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    Deterministic,
    Probabilistic,
}

#[derive(Debug, Error)]
pub enum RoundingFailure {
    #[error("households {0:?} cannot be covered by any station")]
    CoverageImpossible(Vec<usize>),
    #[error("assignment stalled with {unassigned:?} unassigned and no station left to open")]
    Stalled { unassigned: Vec<usize> },
    #[error("probabilistic sizing failed at station {station} charger type {charger}: no feasible charger count for rate {rate}")]
    SizingFailed {
        station: usize,
        charger: usize,
        rate: f64,
    },
}

/// One household's (possibly split) assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assignment {
    pub station: usize,
    pub charger: usize,
    /// 1.0 in deterministic mode; the long-run probability otherwise.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// Station opening cost per day.
    pub opening: f64,
    /// Charger installation cost per day.
    pub installation: f64,
    /// Detour cost per day (including the detour multiplier).
    pub detour: f64,
    /// Congestion (waiting) cost per day.
    pub waiting: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.opening + self.installation + self.detour + self.waiting
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BudgetFlags {
    pub station_budget_ok: bool,
    pub charger_budget_ok: bool,
    pub station_count_ok: bool,
}

impl BudgetFlags {
    pub fn all_ok(&self) -> bool {
        self.station_budget_ok && self.charger_budget_ok && self.station_count_ok
    }
}

/// A feasible (or budget-flagged) plan produced by the heuristic.
#[derive(Debug, Clone)]
pub struct FeasibleSolution {
    pub mode: RoundingMode,
    /// Open flag per station.
    pub open: Vec<bool>,
    /// Chargers per station and type.
    pub chargers: Vec<Vec<u32>>,
    /// Per household, assignments with weights summing to one.
    pub assignment: Vec<Vec<Assignment>>,
    /// Expected time in system per station and type, minutes; zero where
    /// no chargers are installed.
    pub wait: Vec<Vec<f64>>,
    pub cost: CostBreakdown,
    pub budgets: BudgetFlags,
}

impl FeasibleSolution {
    pub fn objective(&self) -> f64 {
        self.cost.total()
    }

    /// Effective charging rate per station and type implied by the
    /// assignment weights, per day.
    pub fn effective_rates(&self, instance: &Instance) -> Vec<Vec<f64>> {
        let mut rates = vec![vec![0.0; instance.num_charger_types()]; instance.num_stations()];
        for (i, list) in self.assignment.iter().enumerate() {
            for a in list {
                rates[a.station][a.charger] += instance.households[i].lambda * a.weight;
            }
        }
        rates
    }
}

/// Aggregated fractional output of one dual iteration, indexed for the
/// heuristic: per-household weight lookup plus the station seeds.
#[derive(Debug, Clone)]
pub struct FractionalSolution {
    /// Per household: (station, charger, weight) with weight > 0.
    pub weights: Vec<Vec<(usize, usize, f64)>>,
    pub y_seed: Vec<bool>,
    pub s_seed: Vec<Vec<u32>>,
    pub w_seed: Vec<Vec<f64>>,
}

impl FractionalSolution {
    pub fn from_subproblems(instance: &Instance, solutions: &[SubproblemSolution]) -> Self {
        let mut frac = FractionalSolution::empty(instance);
        for sol in solutions {
            frac.y_seed[sol.station] = sol.open;
            frac.s_seed[sol.station] = sol.chargers.clone();
            frac.w_seed[sol.station] = sol.wait_minutes.clone();
            for (slot, &household) in sol.household_ids.iter().enumerate() {
                for (k, &x) in sol.assignments[slot].iter().enumerate() {
                    if x > 0.0 {
                        frac.weights[household].push((sol.station, k, x));
                    }
                }
            }
        }
        frac
    }

    /// An empty seed (no stations open, no fractional weights).
    pub fn empty(instance: &Instance) -> Self {
        FractionalSolution {
            weights: vec![Vec::new(); instance.num_households()],
            y_seed: vec![false; instance.num_stations()],
            s_seed: vec![vec![0; instance.num_charger_types()]; instance.num_stations()],
            w_seed: vec![vec![0.0; instance.num_charger_types()]; instance.num_stations()],
        }
    }

    fn weight_of(&self, household: usize, station: usize, charger: usize) -> f64 {
        self.weights[household]
            .iter()
            .find(|(j, k, _)| *j == station && *k == charger)
            .map_or(0.0, |(_, _, w)| *w)
    }
}

/// Coverage step: open stations until every household can reach an open
/// one. Selection is randomized proportionally to marginal coverage.
/// Returns the updated open flags and the set of households left
/// uncovered (empty whenever every household has a nonempty neighborhood).
pub fn adaptive_station_opening(
    instance: &Instance,
    y_seed: &[bool],
    rng: &mut ChaCha8Rng,
) -> (Vec<bool>, BTreeSet<usize>) {
    let mut open = y_seed.to_vec();
    let mut uncovered: BTreeSet<usize> = (0..instance.num_households()).collect();
    for (i, js) in instance.neighborhoods.stations_for.iter().enumerate() {
        if js.iter().any(|&j| open[j]) {
            uncovered.remove(&i);
        }
    }

    while !uncovered.is_empty() {
        // Weight = how many uncovered households the station would cover.
        let mut candidates: Vec<(usize, usize)> = Vec::new();
        for (j, households) in instance.neighborhoods.households_for.iter().enumerate() {
            if open[j] {
                continue;
            }
            let w = households.iter().filter(|i| uncovered.contains(i)).count();
            if w > 0 {
                candidates.push((j, w));
            }
        }
        if candidates.is_empty() {
            break;
        }
        let total: usize = candidates.iter().map(|(_, w)| w).sum();
        let mut draw = rng.gen_range(0..total);
        let chosen = candidates
            .iter()
            .find(|(_, w)| {
                if draw < *w {
                    true
                } else {
                    draw -= w;
                    false
                }
            })
            .map(|(j, _)| *j)
            .expect("total weight covers every draw");
        open[chosen] = true;
        for &i in &instance.neighborhoods.households_for[chosen] {
            uncovered.remove(&i);
        }
    }
    (open, uncovered)
}

/// Result of one assignment pass.
#[derive(Debug)]
pub struct AssignmentPass {
    pub assignment: Vec<Vec<Assignment>>,
    pub chargers: Vec<Vec<u32>>,
    pub wait: Vec<Vec<f64>>,
    /// Stations actually used by the pass.
    pub open: Vec<bool>,
    pub unassigned: BTreeSet<usize>,
}

/// One pass of household assignment over the currently open stations.
pub fn assignment_iteration(
    instance: &Instance,
    frac: &FractionalSolution,
    open: &[bool],
    mode: RoundingMode,
    rng: &mut ChaCha8Rng,
) -> Result<AssignmentPass, RoundingFailure> {
    let n_stations = instance.num_stations();
    let n_types = instance.num_charger_types();
    let mut assignment: Vec<Vec<Assignment>> = vec![Vec::new(); instance.num_households()];
    let mut unassigned: BTreeSet<usize> = BTreeSet::new();

    // Charger counts start from the subproblem seeds at open stations;
    // loads start from zero so the recorded waits match the rates the
    // pass actually commits.
    let mut chargers: Vec<Vec<u32>> = (0..n_stations)
        .map(|j| {
            if open[j] {
                frac.s_seed[j].clone()
            } else {
                vec![0; n_types]
            }
        })
        .collect();
    let mut wait: Vec<Vec<f64>> = (0..n_stations)
        .map(|j| {
            (0..n_types)
                .map(|k| {
                    if open[j] && frac.s_seed[j][k] > 0 {
                        frac.w_seed[j][k]
                    } else {
                        1.0 / instance.charger_types[k].mu_per_minute()
                    }
                })
                .collect()
        })
        .collect();
    let mut load: Vec<Vec<f64>> = vec![vec![0.0; n_types]; n_stations];
    let mut users: Vec<Vec<u32>> = vec![vec![0; n_types]; n_stations];

    match mode {
        RoundingMode::Probabilistic => {
            for i in 0..instance.num_households() {
                let eligible: Vec<(usize, usize, f64)> = frac.weights[i]
                    .iter()
                    .filter(|(j, _, _)| open[*j])
                    .copied()
                    .collect();
                let total: f64 = eligible.iter().map(|(_, _, w)| w).sum();
                if total <= 0.0 {
                    unassigned.insert(i);
                    continue;
                }
                for (j, k, w) in eligible {
                    let p = w / total;
                    assignment[i].push(Assignment {
                        station: j,
                        charger: k,
                        weight: p,
                    });
                    load[j][k] += instance.households[i].lambda * p;
                    users[j][k] += 1;
                }
            }
            // Size chargers for the effective rates.
            for j in 0..n_stations {
                for k in 0..n_types {
                    if load[j][k] > 0.0 {
                        match smallest_feasible_count(instance, k, load[j][k]) {
                            Some(_) => {
                                let (s, _) =
                                    smallest_feasible_count(instance, k, load[j][k]).unwrap();
                                let count = chargers[j][k].max(s);
                                let ct = &instance.charger_types[k];
                                let rho = load[j][k] / (ct.mu * count as f64);
                                chargers[j][k] = count;
                                wait[j][k] = queueing::expected_time_in_system(
                                    rho,
                                    count as usize,
                                    ct.mu_per_minute(),
                                )
                                .expect("stability guaranteed by sizing");
                            }
                            None => {
                                return Err(RoundingFailure::SizingFailed {
                                    station: j,
                                    charger: k,
                                    rate: load[j][k],
                                });
                            }
                        }
                    }
                }
            }
        }
        RoundingMode::Deterministic => {
            // Households in descending demand order, ties by index.
            let mut order: Vec<usize> = (0..instance.num_households()).collect();
            order.sort_by(|&a, &b| {
                instance.households[b]
                    .lambda
                    .partial_cmp(&instance.households[a].lambda)
                    .unwrap()
                    .then(a.cmp(&b))
            });

            for &i in &order {
                let accessible: Vec<usize> = instance.neighborhoods.stations_for[i]
                    .iter()
                    .copied()
                    .filter(|&j| open[j])
                    .collect();
                if accessible.is_empty() {
                    unassigned.insert(i);
                    continue;
                }
                // Candidate pairs ordered by fractional weight, then cost
                // with lighter usage preferred, then current wait;
                // remaining ties break at random.
                let mut keyed: Vec<((f64, f64, u32, f64, u64), (usize, usize))> = Vec::new();
                for &j in &accessible {
                    for k in 0..n_types {
                        keyed.push((
                            (
                                -frac.weight_of(i, j, k),
                                instance.charger_types[k].install_cost,
                                users[j][k],
                                wait[j][k],
                                rng.gen::<u64>(),
                            ),
                            (j, k),
                        ));
                    }
                }
                keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

                let mut placed = false;
                for (_, (j, k)) in keyed {
                    if check_and_assign(
                        instance,
                        i,
                        j,
                        k,
                        1.0,
                        &mut load,
                        &mut chargers,
                        &mut wait,
                    ) {
                        assignment[i].push(Assignment {
                            station: j,
                            charger: k,
                            weight: 1.0,
                        });
                        users[j][k] += 1;
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    unassigned.insert(i);
                }
            }
        }
    }

    // A station is open exactly when someone uses it; unused charger
    // banks are removed.
    let mut open_out = vec![false; n_stations];
    for list in &assignment {
        for a in list {
            open_out[a.station] = true;
        }
    }
    for j in 0..n_stations {
        for k in 0..n_types {
            if load[j][k] <= 0.0 {
                chargers[j][k] = 0;
                wait[j][k] = 0.0;
            }
        }
        if !open_out[j] {
            chargers[j] = vec![0; n_types];
            wait[j] = vec![0.0; n_types];
        }
    }

    Ok(AssignmentPass {
        assignment,
        chargers,
        wait,
        open: open_out,
        unassigned,
    })
}

/// Feasibility-checked commitment of one household (or probability mass)
/// to a station–charger pair, growing the charger count when needed.
/// Returns whether the assignment was committed; on success the load,
/// charger count, and wait tables are updated.
#[allow(clippy::too_many_arguments)]
pub fn check_and_assign(
    instance: &Instance,
    household: usize,
    station: usize,
    charger: usize,
    weight: f64,
    load: &mut [Vec<f64>],
    chargers: &mut [Vec<u32>],
    wait: &mut [Vec<f64>],
) -> bool {
    let ct = &instance.charger_types[charger];
    let cap = ct.max_per_station;
    let committed = load[station][charger] + weight * instance.households[household].lambda;
    let required = (committed / (ct.mu * (1.0 - instance.params.epsilon)))
        .ceil()
        .max(1.0) as u32;
    if required > cap {
        return false;
    }
    let mut count = chargers[station][charger].max(required);
    let wait_cap = ct.wait_cap_minutes(&instance.params);
    while count <= cap {
        let rho = committed / (count as f64 * ct.mu);
        if rho >= 1.0 {
            break;
        }
        let w = queueing::expected_time_in_system(rho, count as usize, ct.mu_per_minute())
            .expect("rho < 1 by construction");
        if w <= wait_cap {
            load[station][charger] = committed;
            chargers[station][charger] = count;
            wait[station][charger] = w;
            return true;
        }
        count += 1;
    }
    false
}

/// Smallest charger count satisfying stability and the waiting cap for a
/// given effective rate, with the resulting wait.
fn smallest_feasible_count(instance: &Instance, charger: usize, rate: f64) -> Option<(u32, f64)> {
    let ct = &instance.charger_types[charger];
    let required = (rate / (ct.mu * (1.0 - instance.params.epsilon)))
        .ceil()
        .max(1.0) as u32;
    let wait_cap = ct.wait_cap_minutes(&instance.params);
    let mut count = required;
    while count <= ct.max_per_station {
        let rho = rate / (count as f64 * ct.mu);
        if rho < 1.0 {
            let w = queueing::expected_time_in_system(rho, count as usize, ct.mu_per_minute())
                .expect("rho < 1 by construction");
            if w <= wait_cap {
                return Some((count, w));
            }
        }
        count += 1;
    }
    None
}

/// Overload repair: open the closed station covering the most unassigned
/// households. Returns the station opened, if any.
pub fn add_overload_station(
    instance: &Instance,
    unassigned: &BTreeSet<usize>,
    open: &mut [bool],
) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None; // (coverage, station)
    for (j, households) in instance.neighborhoods.households_for.iter().enumerate() {
        if open[j] {
            continue;
        }
        let coverage = households.iter().filter(|i| unassigned.contains(i)).count();
        if coverage == 0 {
            continue;
        }
        let better = match best {
            None => true,
            // Ties go to the lower station index.
            Some((c, b)) => coverage > c || (coverage == c && j < b),
        };
        if better {
            best = Some((coverage, j));
        }
    }
    if let Some((_, j)) = best {
        open[j] = true;
        Some(j)
    } else {
        None
    }
}

/// The full three-step heuristic.
pub fn primal_heuristic(
    instance: &Instance,
    frac: &FractionalSolution,
    mode: RoundingMode,
    rng: &mut ChaCha8Rng,
) -> Result<FeasibleSolution, RoundingFailure> {
    let (mut open, uncovered) = adaptive_station_opening(instance, &frac.y_seed, rng);
    if !uncovered.is_empty() {
        return Err(RoundingFailure::CoverageImpossible(
            uncovered.into_iter().collect(),
        ));
    }

    // Assignment runs at least once; repair opens at most one station per
    // round. A repeated open-set state means no progress is possible.
    let mut seen_states: BTreeSet<Vec<bool>> = BTreeSet::new();
    loop {
        if !seen_states.insert(open.clone()) {
            return Err(RoundingFailure::Stalled { unassigned: vec![] });
        }
        let pass = assignment_iteration(instance, frac, &open, mode, rng)?;
        if pass.unassigned.is_empty() {
            return Ok(finish(instance, mode, pass));
        }
        // Continue from the stations the pass actually used, plus one
        // repair station for the stragglers.
        let mut next_open = pass.open.clone();
        let opened = add_overload_station(instance, &pass.unassigned, &mut next_open);
        if opened.is_none() {
            return Err(RoundingFailure::Stalled {
                unassigned: pass.unassigned.into_iter().collect(),
            });
        }
        open = next_open;
    }
}

fn finish(instance: &Instance, mode: RoundingMode, pass: AssignmentPass) -> FeasibleSolution {
    let mut solution = FeasibleSolution {
        mode,
        open: pass.open,
        chargers: pass.chargers,
        assignment: pass.assignment,
        wait: pass.wait,
        cost: CostBreakdown::default(),
        budgets: BudgetFlags {
            station_budget_ok: true,
            charger_budget_ok: true,
            station_count_ok: true,
        },
    };
    let report = evaluate_solution(&solution, instance);
    solution.cost = report.cost;
    solution.budgets = report.budgets;
    solution
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub cost: CostBreakdown,
    pub budgets: BudgetFlags,
    pub checks: Vec<ConstraintCheck>,
    /// All structural constraints hold (budgets excluded).
    pub feasible: bool,
    /// Budgets and the station-count cap hold as well.
    pub fully_feasible: bool,
}

impl EvaluationReport {
    pub fn failed_checks(&self) -> Vec<&ConstraintCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Re-derive waiting times from the queueing model at the realized rates
/// and check every constraint of the planning model. The stored `wait`
/// field is compared against the recomputation and flagged when stale.
pub fn evaluate_solution(solution: &FeasibleSolution, instance: &Instance) -> EvaluationReport {
    let n_stations = instance.num_stations();
    let n_types = instance.num_charger_types();
    let params = &instance.params;
    let mut checks: Vec<ConstraintCheck> = Vec::new();
    let check = |checks: &mut Vec<ConstraintCheck>, name: &str, pass: bool, detail: String| {
        checks.push(ConstraintCheck {
            name: name.to_string(),
            pass,
            detail,
        });
    };

    let rates = solution.effective_rates(instance);
    let mut users = vec![vec![0usize; n_types]; n_stations];
    let mut weight_sum_ok = true;
    let mut membership_ok = true;
    let mut open_link_ok = true;
    let mut weight_detail = String::new();
    for (i, list) in solution.assignment.iter().enumerate() {
        let total: f64 = list.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            weight_sum_ok = false;
            if weight_detail.is_empty() {
                weight_detail = format!(
                    "household {} has total weight {total}",
                    instance.households[i].id
                );
            }
        }
        if solution.mode == RoundingMode::Deterministic
            && (list.len() != 1 || (list[0].weight - 1.0).abs() > 1e-12)
        {
            weight_sum_ok = false;
        }
        for a in list {
            if !instance.neighborhoods.stations_for[i].contains(&a.station) {
                membership_ok = false;
            }
            if !solution.open[a.station] {
                open_link_ok = false;
            }
            if a.weight > 0.0 {
                users[a.station][a.charger] += 1;
            }
        }
    }
    check(
        &mut checks,
        "full-assignment",
        weight_sum_ok,
        if weight_sum_ok {
            "every household fully assigned".into()
        } else {
            weight_detail
        },
    );
    check(
        &mut checks,
        "neighborhood-membership",
        membership_ok,
        "assignments stay within each household's reachable stations".into(),
    );
    check(
        &mut checks,
        "assignment-open-link",
        open_link_ok,
        "assignments only reference open stations".into(),
    );

    let candidate_ok = (0..n_stations).all(|j| !solution.open[j] || instance.stations[j].candidate);
    check(
        &mut checks,
        "candidate-only",
        candidate_ok,
        "open stations are candidates in this scenario".into(),
    );

    // Queueing constraints at the realized rates, and the recomputed cost.
    let mut stability_ok = true;
    let mut wait_cap_ok = true;
    let mut usage_link_ok = true;
    let mut charger_cap_ok = true;
    let mut open_charger_ok = true;
    let mut wait_consistent = true;
    let mut recomputed_wait = vec![vec![0.0f64; n_types]; n_stations];
    let mut cost = CostBreakdown::default();

    for j in 0..n_stations {
        let mut any_charger = false;
        for k in 0..n_types {
            let s = solution.chargers[j][k];
            let rate = rates[j][k];
            let ct = &instance.charger_types[k];
            if s > ct.max_per_station {
                charger_cap_ok = false;
            }
            if s as usize > ct.max_per_station as usize * users[j][k] {
                // s <= cap * number of users (zero users forces zero).
                usage_link_ok = false;
            }
            if s > 0 {
                any_charger = true;
                if rate > ct.mu * s as f64 * (1.0 - params.epsilon) + 1e-9 {
                    stability_ok = false;
                    continue;
                }
                let rho = rate / (ct.mu * s as f64);
                let w = match queueing::expected_time_in_system(
                    rho.min(1.0 - 1e-12),
                    s as usize,
                    ct.mu_per_minute(),
                ) {
                    Ok(w) => w,
                    Err(_) => {
                        stability_ok = false;
                        continue;
                    }
                };
                recomputed_wait[j][k] = w;
                if w > ct.wait_cap_minutes(params) + 1e-9 {
                    wait_cap_ok = false;
                }
                if (solution.wait[j][k] - w).abs() > 1e-6 * (1.0 + w) {
                    wait_consistent = false;
                }
            } else if rate > 1e-12 {
                // Load without chargers violates stability outright.
                stability_ok = false;
            }
        }
        if solution.open[j] {
            cost.opening += instance.stations[j].open_cost;
            if !any_charger {
                open_charger_ok = false;
            }
        }
        for k in 0..n_types {
            cost.installation +=
                solution.chargers[j][k] as f64 * instance.charger_types[k].install_cost;
        }
    }

    for (i, list) in solution.assignment.iter().enumerate() {
        for a in list {
            if a.weight <= 0.0 {
                continue;
            }
            cost.detour += a.weight * instance.detour_cost_per_day(i, a.station);
            cost.waiting += a.weight
                * instance.households[i].lambda
                * params.wait_cost
                * recomputed_wait[a.station][a.charger];
        }
    }

    check(
        &mut checks,
        "stability",
        stability_ok,
        "realized rates respect the stability margin".into(),
    );
    check(
        &mut checks,
        "wait-cap",
        wait_cap_ok,
        "expected time in system within the cap".into(),
    );
    check(
        &mut checks,
        "charger-usage-link",
        usage_link_ok,
        "chargers imply assigned households".into(),
    );
    check(
        &mut checks,
        "charger-cap",
        charger_cap_ok,
        "per-station charger caps respected".into(),
    );
    check(
        &mut checks,
        "open-charger-link",
        open_charger_ok,
        "open stations have at least one charger".into(),
    );
    check(
        &mut checks,
        "wait-consistency",
        wait_consistent,
        "stored waits match the recomputed queueing values".into(),
    );

    let budgets = BudgetFlags {
        station_budget_ok: cost.opening <= params.station_budget + 1e-9,
        charger_budget_ok: cost.installation <= params.charger_budget + 1e-9,
        station_count_ok: solution.open.iter().filter(|&&o| o).count()
            <= params.max_stations as usize,
    };
    check(
        &mut checks,
        "station-budget",
        budgets.station_budget_ok,
        format!(
            "opening cost {:.2} vs budget {:.2}",
            cost.opening, params.station_budget
        ),
    );
    check(
        &mut checks,
        "charger-budget",
        budgets.charger_budget_ok,
        format!(
            "installation cost {:.2} vs budget {:.2}",
            cost.installation, params.charger_budget
        ),
    );
    check(
        &mut checks,
        "station-count",
        budgets.station_count_ok,
        format!(
            "{} open vs cap {}",
            solution.open.iter().filter(|&&o| o).count(),
            params.max_stations
        ),
    );

    let feasible = checks
        .iter()
        .filter(|c| {
            !matches!(
                c.name.as_str(),
                "station-budget" | "charger-budget" | "station-count"
            )
        })
        .all(|c| c.pass);
    let fully_feasible = feasible && budgets.all_ok();

    EvaluationReport {
        cost,
        budgets,
        checks,
        feasible,
        fully_feasible,
    }
}

/// Solution document written by the CLI: open stations with charger
/// vectors and waits, the assignment list, costs, and feasibility flags.
pub fn solution_document(
    solution: &FeasibleSolution,
    report: &EvaluationReport,
    instance: &Instance,
) -> serde_json::Value {
    let stations: Vec<serde_json::Value> = (0..instance.num_stations())
        .filter(|&j| solution.open[j])
        .map(|j| {
            serde_json::json!({
                "id": instance.stations[j].id,
                "kind": instance.stations[j].kind,
                "agency": instance.stations[j].agency,
                "chargers": solution.chargers[j],
                "wait_minutes": solution.wait[j],
            })
        })
        .collect();
    let assignments: Vec<serde_json::Value> = solution
        .assignment
        .iter()
        .enumerate()
        .flat_map(|(i, list)| {
            list.iter()
                .map(|a| {
                    serde_json::json!({
                        "household": instance.households[i].id,
                        "station": instance.stations[a.station].id,
                        "charger": instance.charger_types[a.charger].id,
                        "weight": a.weight,
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect();
    serde_json::json!({
        "mode": solution.mode,
        "objective": solution.objective(),
        "cost": solution.cost,
        "budgets": solution.budgets,
        "feasible": report.feasible,
        "fully_feasible": report.fully_feasible,
        "stations": stations,
        "assignments": assignments,
        "checks": report.checks,
    })
}

/// Parse a solution document back into a checked in-memory solution.
/// Ids are resolved against the instance; unknown ids are errors.
pub fn parse_solution_document(
    text: &str,
    instance: &Instance,
) -> Result<FeasibleSolution, SolutionParseError> {
    #[derive(serde::Deserialize)]
    struct StationDoc {
        id: String,
        chargers: Vec<u32>,
        wait_minutes: Vec<f64>,
    }
    #[derive(serde::Deserialize)]
    struct AssignmentDoc {
        household: String,
        station: String,
        charger: String,
        weight: f64,
    }
    #[derive(serde::Deserialize)]
    struct Doc {
        mode: RoundingModeDoc,
        stations: Vec<StationDoc>,
        assignments: Vec<AssignmentDoc>,
    }
    #[derive(serde::Deserialize)]
    #[serde(rename_all = "lowercase")]
    enum RoundingModeDoc {
        Deterministic,
        Probabilistic,
    }

    let doc: Doc = serde_json::from_str(text)?;
    let n_types = instance.num_charger_types();
    let mut solution = FeasibleSolution {
        mode: match doc.mode {
            RoundingModeDoc::Deterministic => RoundingMode::Deterministic,
            RoundingModeDoc::Probabilistic => RoundingMode::Probabilistic,
        },
        open: vec![false; instance.num_stations()],
        chargers: vec![vec![0; n_types]; instance.num_stations()],
        assignment: vec![Vec::new(); instance.num_households()],
        wait: vec![vec![0.0; n_types]; instance.num_stations()],
        cost: CostBreakdown::default(),
        budgets: BudgetFlags {
            station_budget_ok: true,
            charger_budget_ok: true,
            station_count_ok: true,
        },
    };

    for st in doc.stations {
        let j = instance
            .station_idx(&st.id)
            .ok_or_else(|| SolutionParseError::UnknownId("station", st.id.clone()))?;
        if st.chargers.len() != n_types || st.wait_minutes.len() != n_types {
            return Err(SolutionParseError::Shape(format!(
                "station {} carries {} charger entries, instance has {n_types} types",
                st.id,
                st.chargers.len()
            )));
        }
        solution.open[j] = true;
        solution.chargers[j] = st.chargers;
        solution.wait[j] = st.wait_minutes;
    }
    let household_idx: std::collections::HashMap<&str, usize> = instance
        .households
        .iter()
        .enumerate()
        .map(|(i, h)| (h.id.as_str(), i))
        .collect();
    let charger_idx: std::collections::HashMap<&str, usize> = instance
        .charger_types
        .iter()
        .enumerate()
        .map(|(k, c)| (c.id.as_str(), k))
        .collect();
    for a in doc.assignments {
        let i = *household_idx
            .get(a.household.as_str())
            .ok_or_else(|| SolutionParseError::UnknownId("household", a.household.clone()))?;
        let j = instance
            .station_idx(&a.station)
            .ok_or_else(|| SolutionParseError::UnknownId("station", a.station.clone()))?;
        let k = *charger_idx
            .get(a.charger.as_str())
            .ok_or_else(|| SolutionParseError::UnknownId("charger", a.charger.clone()))?;
        solution.assignment[i].push(Assignment {
            station: j,
            charger: k,
            weight: a.weight,
        });
    }
    Ok(solution)
}

#[derive(Debug, Error)]
pub enum SolutionParseError {
    #[error("invalid solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown {0} id `{1}`")]
    UnknownId(&'static str, String),
    #[error("{0}")]
    Shape(String),
}

/// GeoJSON of the opened stations with their charger mix and waits.
pub fn stations_geojson(solution: &FeasibleSolution, instance: &Instance) -> serde_json::Value {
    let features: Vec<serde_json::Value> = (0..instance.num_stations())
        .filter(|&j| solution.open[j])
        .map(|j| {
            let st = &instance.stations[j];
            let mut properties = serde_json::Map::new();
            properties.insert("id".into(), serde_json::json!(st.id));
            properties.insert(
                "kind".into(),
                serde_json::json!(match st.kind {
                    StationKind::Taz => "taz",
                    StationKind::Depot => "depot",
                }),
            );
            properties.insert("agency".into(), serde_json::json!(st.agency));
            for (k, ct) in instance.charger_types.iter().enumerate() {
                properties.insert(
                    format!("chargers_{}", ct.id),
                    serde_json::json!(solution.chargers[j][k]),
                );
                properties.insert(
                    format!("wait_minutes_{}", ct.id),
                    serde_json::json!(solution.wait[j][k]),
                );
            }
            serde_json::json!({
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [st.position.lon, st.position.lat],
                },
                "properties": serde_json::Value::Object(properties),
            })
        })
        .collect();
    serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    })
}
