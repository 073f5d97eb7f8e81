//! The `scla` command line: scenario generation, solving, rounding-only
//! runs, solution evaluation, and sensitivity sweeps.
//!
//! Commands
//! - `generate` writes a synthetic instance JSON.
//! - `solve` runs the dual decomposition (or the exhaustive oracle) and
//!   emits `solution.json`, `bounds.csv` (header `iter,L,UB,gap,seconds`),
//!   `stations.geojson`, and `summary.json` in the output directory.
//! - `round` runs one zero-multiplier subproblem pass plus the rounding
//!   heuristic, without the dual loop.
//! - `evaluate` re-checks a solution file against an instance and prints
//!   one pass/fail line per constraint.
//! - `sweep` re-solves across a percentage grid on one parameter and
//!   writes `sweep.csv`.
//!
//! A run-config JSON file can predefine solver settings; explicit flags
//! win over the file. Artifacts are deterministic under a fixed seed and
//! config, except for the wall-clock `seconds` column of `bounds.csv`.

use crate::instance::{
    generate_scenario, load_instance, save_instance, Instance, LocationChoice, Policy,
    ScenarioSpec, TravelModel,
};
use crate::lagrangian::{run_dual_loop, DualConfig, DualOutcome};
use crate::oracle::{solve_exact, OracleLimits, OracleOutcome};
use crate::parallel::PartitionSpec;
use crate::rounding::{
    evaluate_solution, parse_solution_document, primal_heuristic, solution_document,
    stations_geojson, EvaluationReport, FeasibleSolution, FractionalSolution, RoundingMode,
};
use crate::subproblem::{solve_station_subproblem, SubproblemInput, SubproblemOptions};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "scla",
    version,
    about = "Congestion-aware charger location and allocation planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance file.
    Generate(GenerateArgs),
    /// Solve an instance and write solution artifacts.
    Solve(SolveArgs),
    /// Run the rounding heuristic once, without the dual loop.
    Round(RoundArgs),
    /// Check a solution file against an instance.
    Evaluate(EvaluateArgs),
    /// Re-solve across a parameter grid and report objective changes.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LocationsArg {
    Taz,
    Depot,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Single,
    Multi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Lagrangian dual decomposition with McCormick-relaxed subproblems.
    LagrangianMcc,
    /// Exhaustive oracle (tiny instances only).
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoundingArg {
    Deterministic,
    Probabilistic,
}

impl From<RoundingArg> for RoundingMode {
    fn from(value: RoundingArg) -> Self {
        match value {
            RoundingArg::Deterministic => RoundingMode::Deterministic,
            RoundingArg::Probabilistic => RoundingMode::Probabilistic,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output instance path.
    #[arg(short, long, default_value = "instance.json")]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    households: usize,
    #[arg(long, default_value_t = 20)]
    taz: usize,
    #[arg(long, default_value_t = 4)]
    depots: usize,
    #[arg(long, value_enum, default_value_t = LocationsArg::Both)]
    locations: LocationsArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::Multi)]
    policy: PolicyArg,
    /// Neighborhood size: nearest eligible stations per household.
    #[arg(long, default_value_t = 2)]
    kc: usize,
    /// Average deliveries per vehicle per day (charge probability is the
    /// reciprocal).
    #[arg(long, default_value_t = 120.0)]
    deliveries_per_vehicle: f64,
    /// Travel speed for the great-circle travel model, km/h.
    #[arg(long, default_value_t = 30.0)]
    speed_kmh: f64,
    /// Detour cost, USD per minute.
    #[arg(long)]
    detour_cost: Option<f64>,
    /// Waiting cost, USD per minute.
    #[arg(long)]
    wait_cost: Option<f64>,
    /// Station opening budget, USD per day.
    #[arg(long)]
    station_budget: Option<f64>,
    /// Charger installation budget, USD per day.
    #[arg(long)]
    charger_budget: Option<f64>,
    /// Cap on open stations.
    #[arg(long)]
    max_stations: Option<u32>,
    /// Cap on expected queueing delay, minutes.
    #[arg(long)]
    max_wait: Option<f64>,
    /// Stability margin in (0, 1).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Scaling on the detour cost term.
    #[arg(long)]
    detour_cost_multiplier: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Run-config JSON; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Primal-dual gap tolerance in (0, 1].
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    time_limit_secs: Option<f64>,
    #[arg(long, value_enum)]
    rounding: Option<RoundingArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for one unlimited partition with this many workers.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file.
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Exit successfully when the oracle proves infeasibility.
    #[arg(long)]
    expect_infeasible: bool,
}

#[derive(Args)]
struct RoundArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = RoundingArg::Deterministic)]
    mode: RoundingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    instance: PathBuf,
    solution: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    instance: PathBuf,
    /// Parameter to scale.
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated percentage increases, e.g. "0,50,100" (use negative
    /// values for decreases).
    #[arg(long)]
    grid: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV path.
    #[arg(long, default_value = "sweep.csv")]
    output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    /// Station opening costs.
    StationCost,
    /// Waiting cost coefficient.
    WaitCost,
    /// Charger installation costs.
    ChargerCost,
    /// Charger service rates.
    Mu,
}

impl SweepParam {
    fn name(&self) -> &'static str {
        match self {
            SweepParam::StationCost => "station-cost",
            SweepParam::WaitCost => "wait-cost",
            SweepParam::ChargerCost => "charger-cost",
            SweepParam::Mu => "mu",
        }
    }
}

/// Run-config file schema; every field optional so flags can fill gaps.
#[derive(Debug, Default, Deserialize)]
struct RunConfigFile {
    method: Option<String>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    time_limit_seconds: Option<f64>,
    rounding_mode: Option<String>,
    seed: Option<u64>,
    partitions: Option<Vec<PartitionConfig>>,
    output_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PartitionConfig {
    name: String,
    workers: usize,
    time_limit_seconds: Option<f64>,
}

/// Resolved solver settings after merging file and flags.
struct Resolved {
    method: MethodArg,
    dual: DualConfig,
    output_dir: Option<PathBuf>,
}

fn resolve_solver(args: &SolverArgs) -> Result<Resolved> {
    let file: RunConfigFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading run config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing run config {}", path.display()))?
        }
        None => RunConfigFile::default(),
    };

    let method = match args.method {
        Some(m) => m,
        None => match file.method.as_deref() {
            Some("oracle") => MethodArg::Oracle,
            Some("lagrangian-mcc") | None => MethodArg::LagrangianMcc,
            Some(other) => bail!("unknown method `{other}` in run config"),
        },
    };
    let rounding_mode = match args.rounding {
        Some(r) => r.into(),
        None => match file.rounding_mode.as_deref() {
            Some("probabilistic") => RoundingMode::Probabilistic,
            Some("deterministic") | None => RoundingMode::Deterministic,
            Some(other) => bail!("unknown rounding mode `{other}` in run config"),
        },
    };
    let partitions = match (&args.workers, &file.partitions) {
        (Some(w), _) => PartitionSpec::single_pool(*w),
        (None, Some(list)) => list
            .iter()
            .map(|p| {
                PartitionSpec::new(
                    &p.name,
                    p.workers,
                    p.time_limit_seconds.map(Duration::from_secs_f64),
                )
            })
            .collect(),
        (None, None) => PartitionSpec::single_pool(4),
    };
    let tolerance = args.tolerance.or(file.tolerance).unwrap_or(0.01);
    if !(tolerance > 0.0 && tolerance <= 1.0) {
        bail!("tolerance must lie in (0, 1], got {tolerance}");
    }
    let max_iterations = args.max_iterations.or(file.max_iterations).unwrap_or(100);
    if max_iterations == 0 {
        bail!("max iterations must be positive");
    }
    let time_limit = args
        .time_limit_secs
        .or(file.time_limit_seconds)
        .map(Duration::from_secs_f64);

    Ok(Resolved {
        method,
        dual: DualConfig {
            tolerance,
            max_iterations,
            time_limit,
            rounding_mode,
            seed: args.seed.or(file.seed).unwrap_or(0),
            subproblem: SubproblemOptions::default(),
            partitions,
        },
        output_dir: file.output_dir.map(PathBuf::from),
    })
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Round(args) => cmd_round(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let mut spec = ScenarioSpec::baseline(args.seed);
    spec.n_households = args.households;
    spec.n_taz = args.taz;
    spec.n_depots = args.depots;
    spec.locations = match args.locations {
        LocationsArg::Taz => LocationChoice::Taz,
        LocationsArg::Depot => LocationChoice::Depot,
        LocationsArg::Both => LocationChoice::Both,
    };
    spec.policy = match args.policy {
        PolicyArg::Single => Policy::Single,
        PolicyArg::Multi => Policy::Multi,
    };
    spec.k_c = args.kc;
    spec.deliveries_per_vehicle = args.deliveries_per_vehicle;
    spec.travel_model = TravelModel::GreatCircle {
        speed_kmh: args.speed_kmh,
    };
    if let Some(v) = args.detour_cost {
        spec.params.detour_cost = v;
    }
    if let Some(v) = args.wait_cost {
        spec.params.wait_cost = v;
    }
    if let Some(v) = args.station_budget {
        spec.params.station_budget = v;
    }
    if let Some(v) = args.charger_budget {
        spec.params.charger_budget = v;
    }
    if let Some(v) = args.max_stations {
        spec.params.max_stations = v;
    }
    if let Some(v) = args.max_wait {
        spec.params.max_wait = v;
    }
    if let Some(v) = args.epsilon {
        spec.params.epsilon = v;
    }
    if let Some(v) = args.detour_cost_multiplier {
        spec.params.detour_cost_multiplier = v;
    }

    let instance = generate_scenario(&spec)?;
    save_instance(&instance, &args.output)?;
    println!(
        "wrote {} ({} households, {} stations, {} charger types)",
        args.output.display(),
        instance.num_households(),
        instance.num_stations(),
        instance.num_charger_types()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Per-type charger totals and mean waits over stations hosting the type.
fn fleet_summary(solution: &FeasibleSolution, instance: &Instance) -> serde_json::Value {
    let per_type: Vec<serde_json::Value> = (0..instance.num_charger_types())
        .map(|k| {
            let total: u32 = (0..instance.num_stations())
                .map(|j| solution.chargers[j][k])
                .sum();
            let hosts: Vec<usize> = (0..instance.num_stations())
                .filter(|&j| solution.chargers[j][k] > 0)
                .collect();
            let mean_wait = if hosts.is_empty() {
                0.0
            } else {
                hosts.iter().map(|&j| solution.wait[j][k]).sum::<f64>() / hosts.len() as f64
            };
            serde_json::json!({
                "charger": instance.charger_types[k].id,
                "total": total,
                "mean_wait_minutes": mean_wait,
            })
        })
        .collect();
    serde_json::json!(per_type)
}

fn write_solution_artifacts(
    out_dir: &Path,
    solution: &FeasibleSolution,
    report: &EvaluationReport,
    instance: &Instance,
) -> Result<()> {
    write_json(
        &out_dir.join("solution.json"),
        &solution_document(solution, report, instance),
    )?;
    write_json(
        &out_dir.join("stations.geojson"),
        &stations_geojson(solution, instance),
    )?;
    Ok(())
}

fn write_bounds_csv(path: &Path, rows: &[(usize, f64, f64, f64, f64)]) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::from("iter,L,UB,gap,seconds\n");
    for (iter, l, ub, gap, seconds) in rows {
        let _ = writeln!(text, "{iter},{l},{ub},{gap},{seconds:.3}");
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let resolved = resolve_solver(&args.solver)?;
    let out_dir = resolved.output_dir.unwrap_or(args.out_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let instance = load_instance(&args.instance)?;

    match resolved.method {
        MethodArg::Oracle => {
            let started = std::time::Instant::now();
            match solve_exact(&instance, &OracleLimits::default(), true)? {
                OracleOutcome::Optimal {
                    objective,
                    solution,
                } => {
                    let report = evaluate_solution(&solution, &instance);
                    write_solution_artifacts(&out_dir, &solution, &report, &instance)?;
                    write_bounds_csv(
                        &out_dir.join("bounds.csv"),
                        &[(0, objective, objective, 0.0, started.elapsed().as_secs_f64())],
                    )?;
                    let summary = serde_json::json!({
                        "method": "oracle",
                        "objective": objective,
                        "lower_bound": objective,
                        "upper_bound": objective,
                        "model_gap": 0.0,
                        "open_stations": solution.open.iter().filter(|&&o| o).count(),
                        "fleet": fleet_summary(&solution, &instance),
                    });
                    write_json(&out_dir.join("summary.json"), &summary)?;
                    println!("oracle optimum: {objective:.6} (gap 0)");
                    println!("{}", serde_json::to_string_pretty(&summary["fleet"])?);
                    Ok(ExitCode::SUCCESS)
                }
                OracleOutcome::Infeasible => {
                    println!("oracle verdict: infeasible");
                    if args.expect_infeasible {
                        Ok(ExitCode::SUCCESS)
                    } else {
                        Ok(ExitCode::from(2))
                    }
                }
            }
        }
        MethodArg::LagrangianMcc => {
            let outcome = run_dual_loop(&instance, &resolved.dual)?;
            let rows: Vec<(usize, f64, f64, f64, f64)> = outcome
                .history
                .iter()
                .map(|r| (r.iteration, r.lower_bound, r.upper_bound, r.gap, r.seconds))
                .collect();
            write_bounds_csv(&out_dir.join("bounds.csv"), &rows)?;

            let summary_core = serde_json::json!({
                "method": "lagrangian-mcc",
                "lower_bound": outcome.best_lower_bound,
                "upper_bound": outcome.upper_bound,
                "model_gap": outcome.model_gap(),
                "iterations": outcome.history.len(),
            });
            match &outcome.best_solution {
                Some(solution) => {
                    let report = evaluate_solution(solution, &instance);
                    write_solution_artifacts(&out_dir, solution, &report, &instance)?;
                    let mut summary = summary_core;
                    summary["objective"] = serde_json::json!(solution.objective());
                    summary["open_stations"] =
                        serde_json::json!(solution.open.iter().filter(|&&o| o).count());
                    summary["fleet"] = fleet_summary(solution, &instance);
                    write_json(&out_dir.join("summary.json"), &summary)?;
                    println!(
                        "bounds: L = {:.6}, UB = {:.6}, model gap = {:.4}%",
                        outcome.best_lower_bound,
                        outcome.upper_bound,
                        100.0 * outcome.model_gap()
                    );
                    println!("{}", serde_json::to_string_pretty(&summary["fleet"])?);
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    write_json(&out_dir.join("summary.json"), &summary_core)?;
                    eprintln!("no feasible solution found within the run limits");
                    Ok(ExitCode::from(2))
                }
            }
        }
    }
}

fn cmd_round(args: RoundArgs) -> Result<ExitCode> {
    let instance = load_instance(&args.instance)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    // One zero-multiplier pass seeds the fractional solution.
    let zeta = vec![0.0; instance.num_households()];
    let candidates: Vec<usize> = (0..instance.num_stations())
        .filter(|&j| instance.stations[j].candidate)
        .collect();
    let mut solutions = Vec::new();
    for &station in &candidates {
        let input = SubproblemInput::build(
            &instance,
            station,
            &zeta,
            0.0,
            0.0,
            0.0,
            SubproblemOptions::default(),
            None,
        );
        solutions.push(solve_station_subproblem(&input)?);
    }
    let frac = FractionalSolution::from_subproblems(&instance, &solutions);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let solution = primal_heuristic(&instance, &frac, args.mode.into(), &mut rng)?;
    let report = evaluate_solution(&solution, &instance);
    write_solution_artifacts(&args.out_dir, &solution, &report, &instance)?;
    print_report(&report);
    if report.feasible && report.budgets.all_ok() {
        println!("objective: {:.6}", solution.objective());
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn print_report(report: &EvaluationReport) {
    for check in &report.checks {
        println!(
            "{} {}: {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let instance = load_instance(&args.instance)?;
    let text = std::fs::read_to_string(&args.solution)
        .with_context(|| format!("reading {}", args.solution.display()))?;
    let solution = parse_solution_document(&text, &instance)?;
    let report = evaluate_solution(&solution, &instance);
    print_report(&report);
    println!("objective: {:.6}", report.cost.total());
    if report.feasible && report.budgets.all_ok() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

/// Clone the instance with one parameter family scaled by `factor`.
fn scaled_instance(base: &Instance, param: SweepParam, factor: f64) -> Result<Instance> {
    let mut params = base.params.clone();
    let mut stations = base.stations.clone();
    let mut charger_types = base.charger_types.clone();
    match param {
        SweepParam::StationCost => {
            for st in stations.iter_mut() {
                st.open_cost *= factor;
            }
        }
        SweepParam::WaitCost => params.wait_cost *= factor,
        SweepParam::ChargerCost => {
            for ct in charger_types.iter_mut() {
                ct.install_cost *= factor;
            }
        }
        SweepParam::Mu => {
            for ct in charger_types.iter_mut() {
                ct.mu *= factor;
            }
        }
    }
    Ok(Instance::assemble(
        params,
        charger_types,
        stations,
        base.households.clone(),
        base.policy,
        base.travel_model,
        base.travel_matrix.clone(),
    )?)
}

fn solve_objective(instance: &Instance, resolved: &Resolved) -> Result<Option<f64>> {
    match resolved.method {
        MethodArg::Oracle => match solve_exact(instance, &OracleLimits::default(), true)? {
            OracleOutcome::Optimal { objective, .. } => Ok(Some(objective)),
            OracleOutcome::Infeasible => Ok(None),
        },
        MethodArg::LagrangianMcc => {
            let outcome: DualOutcome = run_dual_loop(instance, &resolved.dual)?;
            Ok(outcome.best_solution.as_ref().map(|s| s.objective()))
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let resolved = resolve_solver(&args.solver)?;
    let instance = load_instance(&args.instance)?;
    let grid: Vec<f64> = args
        .grid
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value `{s}`"))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        bail!("the sweep grid is empty");
    }

    let baseline = solve_objective(&instance, &resolved)?
        .context("baseline run produced no feasible solution")?;

    use std::fmt::Write as _;
    let mut csv = String::from("param,pct_increase,objective,change_pct\n");
    for &pct in &grid {
        let factor = 1.0 + pct / 100.0;
        if factor <= 0.0 {
            bail!("percentage {pct} drives the parameter nonpositive");
        }
        let objective = if pct == 0.0 {
            Some(baseline)
        } else {
            solve_objective(&scaled_instance(&instance, args.param, factor)?, &resolved)?
        };
        match objective {
            Some(obj) => {
                let change = 100.0 * (obj - baseline) / baseline;
                let _ = writeln!(csv, "{},{pct},{obj},{change}", args.param.name());
                println!("{} {pct:+}% -> {obj:.6} ({change:+.2}%)", args.param.name());
            }
            None => {
                let _ = writeln!(csv, "{},{pct},,", args.param.name());
                println!("{} {pct:+}% -> infeasible", args.param.name());
            }
        }
    }
    std::fs::write(&args.output, csv)
        .with_context(|| format!("writing {}", args.output.display()))?;
    println!("wrote {}", args.output.display());
    Ok(ExitCode::SUCCESS)
}
