//! Command-line front end. `run` parses arguments, dispatches and maps errors
//! to exit codes; JSON reports go to stdout and a one-line summary to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::experiment::{
    gap_experiment, parse_sigma_spec, summarize, write_csv, ExperimentConfig, Problem,
};
use crate::graph::{bfs_distances, graph_from_matrix, DistanceMap, DEFAULT_ZERO_TOL};
use crate::instance::{
    generate_normal, generate_row_stochastic, load_instance, save_instance, to_json, CostRanges,
    Metadata, NormalConfig, ProblemInstance, RowStochasticConfig,
};
use crate::kalman::{DareOptions, IndicatorVector, Trace};
use crate::noise::compute_noise_bound;
use crate::oracle::{brute_gkfsa, brute_gkfsp, brute_rgkfsp, OracleConfig, OracleResult};
use crate::resilient::{build_reduction_instance, reduction_threshold, solve_rgkfsp, SubsetSumInstance};
use crate::solvers::{solve_gkfsa, solve_gkfsp, SolveReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Objective gap tolerated by `verify`.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "kfsp", version, about = "Sensor placement and attack for networked Kalman filtering")]
struct Cli {
    #[command(flatten)]
    tol: TolArgs,
    #[command(subcommand)]
    command: Command,
}

/// Numerical settings; flags override values from `--config`.
#[derive(Debug, Args)]
#[command(next_help_heading = "Numerical settings")]
struct TolArgs {
    /// JSON file with default tolerances and caps
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Relative convergence tolerance of the Riccati iteration
    #[arg(long, global = true)]
    conv_tol: Option<f64>,
    /// Iteration cap of the Riccati iteration
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Relative cutoff for pseudo-inverses
    #[arg(long, global = true)]
    svd_tol: Option<f64>,
    /// Relative rank tolerance of the PBH tests
    #[arg(long, global = true)]
    rank_tol: Option<f64>,
    /// Brute-force size cap for placement and attack
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Brute-force size cap for resilient placement
    #[arg(long, global = true)]
    resilient_cap: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    conv_tol: Option<f64>,
    max_iter: Option<usize>,
    svd_tol: Option<f64>,
    rank_tol: Option<f64>,
    cap: Option<usize>,
    resilient_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProblemArg {
    Gkfsp,
    Gkfsa,
    Rgkfsp,
}

impl From<ProblemArg> for Problem {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Gkfsp => Problem::Gkfsp,
            ProblemArg::Gkfsa => Problem::Gkfsa,
            ProblemArg::Rgkfsp => Problem::Rgkfsp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Stochastic,
    Normal,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cheapest-distance sensor placement
    Place { instance: PathBuf },
    /// Greedy layer attack on a placement
    Attack {
        instance: PathBuf,
        /// Placement as a bit string (`0101`) or comma list (`0,1,0,1`)
        #[arg(long)]
        placement: String,
    },
    /// Attack-resilient placement
    Resilient { instance: PathBuf },
    /// Compare solvers against brute-force enumeration
    Verify {
        instance: PathBuf,
        /// Problem to check; all three when omitted
        #[arg(long, value_enum)]
        problem: Option<ProblemArg>,
        /// Placement attacked when checking the attack problem (default: all nodes)
        #[arg(long)]
        placement: Option<String>,
    },
    /// Suboptimality bound of a placement under the instance's sensor noise
    Bound {
        instance: PathBuf,
        #[arg(long)]
        placement: String,
    },
    /// Noisy-sensor gap experiment on random graphs, written as CSV
    Experiment {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        #[arg(long, default_value_t = 100)]
        realizations: usize,
        /// Comma list or `start:stop:count`
        #[arg(long, default_value = "0.01,0.1,0.5")]
        sigma_v2: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: logical cores)
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 15)]
        edges: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma_w2: f64,
        #[arg(long, default_value_t = 10)]
        cost_max: u64,
        #[arg(long)]
        budget_max: Option<u64>,
        /// Placement attacked in the attack experiment (default: all nodes)
        #[arg(long)]
        placement: Option<String>,
    },
    /// Build the resilient-placement instance encoding a subset-sum instance
    ReduceSubsetSum {
        /// Comma-separated positive sizes
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<u64>,
        #[arg(long)]
        target: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a random instance file
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra edges on top of the cycle (stochastic)
        #[arg(long, default_value_t = 0)]
        extra_edges: usize,
        /// Total nonzero entries of A (normal; default n + n/2)
        #[arg(long)]
        edges: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        sigma_w2: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_v2: f64,
        #[arg(long, default_value_t = 10)]
        cost_max: u64,
        #[arg(long)]
        budget_max: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Settings {
    dare: DareOptions,
    oracle: OracleConfig,
}

impl TolArgs {
    fn resolve(&self) -> Result<Settings> {
        let file: ConfigFile = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?,
            None => ConfigFile::default(),
        };
        let d = DareOptions::default();
        let dare = DareOptions {
            conv_tol: self.conv_tol.or(file.conv_tol).unwrap_or(d.conv_tol),
            max_iter: self.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
            svd_tol: self.svd_tol.or(file.svd_tol).unwrap_or(d.svd_tol),
            rank_tol: self.rank_tol.or(file.rank_tol).unwrap_or(d.rank_tol),
        };
        if !(dare.conv_tol > 0.0 && dare.svd_tol > 0.0 && dare.rank_tol > 0.0 && dare.max_iter > 0) {
            return Err(Error::Argument("tolerances and iteration cap must be positive".into()));
        }
        let o = OracleConfig::default();
        let oracle = OracleConfig {
            cap: self.cap.or(file.cap).unwrap_or(o.cap),
            resilient_cap: self.resilient_cap.or(file.resilient_cap).unwrap_or(o.resilient_cap),
            dare,
            ..o
        };
        Ok(Settings { dare, oracle })
    }
}

impl Settings {
    fn tolerances(&self) -> Value {
        json!({
            "conv_tol": self.dare.conv_tol,
            "max_iter": self.dare.max_iter,
            "svd_tol": self.dare.svd_tol,
            "rank_tol": self.dare.rank_tol,
            "zero_tol": DEFAULT_ZERO_TOL,
            "oracle_cap": self.oracle.cap,
            "resilient_cap": self.oracle.resilient_cap,
            "verify_tol": VERIFY_TOL,
        })
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Mismatch(_) => EXIT_MISMATCH,
        Error::Divergence { .. } | Error::Unstable { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Runs the command line `argv` (including the program name), writing to the
/// process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, report: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn distances(inst: &ProblemInstance) -> Result<DistanceMap> {
    let g = graph_from_matrix(inst.system.a(), DEFAULT_ZERO_TOL)?;
    bfs_distances(&g, inst.system.input_node())
}

fn zero_noise(inst: &ProblemInstance) -> Result<()> {
    if inst.system.noise().is_zero() {
        Ok(())
    } else {
        Err(Error::Argument(
            "this command needs an instance with zero sensor noise (V = 0)".into(),
        ))
    }
}

fn parse_placement(s: &str, n: usize) -> Result<IndicatorVector> {
    let mu = IndicatorVector::parse(s)?;
    if mu.len() != n {
        return Err(Error::Argument(format!(
            "placement `{s}` has {} entries, instance has {n} nodes",
            mu.len()
        )));
    }
    Ok(mu)
}

fn trace_json(t: Trace) -> Value {
    serde_json::to_value(t).expect("trace serializes")
}

fn solve_json(r: &SolveReport) -> Value {
    json!({
        "chosen": r.chosen.to_string(),
        "chosen_nodes": r.chosen.support(),
        "zeta": serde_json::to_value(r.zeta).expect("zeta serializes"),
        "trace_priori": trace_json(r.objective),
        "trace_posteriori": trace_json(r.objective_posteriori),
        "spent": r.spent,
    })
}

fn oracle_json(r: &OracleResult) -> Value {
    json!({
        "best": r.best.to_string(),
        "optimal": r.optimal.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "objective": trace_json(r.objective),
        "worst_attack": r.worst_attack.as_ref().map(|a| a.to_string()),
        "evaluated_count": r.evaluated_count,
    })
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let settings = cli.tol.resolve()?;
    match &cli.command {
        Command::Place { instance } => {
            let inst = load_instance(instance)?;
            zero_noise(&inst)?;
            let r = solve_gkfsp(&inst.system, &inst.costs, &distances(&inst)?)?;
            let node = r.chosen.support()[0];
            let mut report = solve_json(&r);
            report["command"] = json!("place");
            report["node"] = json!(node);
            report["tolerances"] = settings.tolerances();
            emit(out, &report)?;
            writeln!(err, "placed sensor at node {node} (zeta {}), trace {}", r.zeta, r.objective)?;
        }
        Command::Attack { instance, placement } => {
            let inst = load_instance(instance)?;
            zero_noise(&inst)?;
            let mu = parse_placement(placement, inst.n())?;
            let r = solve_gkfsa(&inst.system, &inst.costs, &mu, &distances(&inst)?, &settings.dare)?;
            let mut report = solve_json(&r);
            report["command"] = json!("attack");
            report["placement"] = json!(mu.to_string());
            report["surviving"] = json!(mu.without(&r.chosen).to_string());
            report["tolerances"] = settings.tolerances();
            emit(out, &report)?;
            writeln!(err, "attack {} leaves trace {}", r.chosen, r.objective)?;
        }
        Command::Resilient { instance } => {
            let inst = load_instance(instance)?;
            zero_noise(&inst)?;
            let r = solve_rgkfsp(&inst.system, &inst.costs, &distances(&inst)?, &settings.dare)?;
            let mut report = solve_json(&r);
            report["command"] = json!("resilient");
            report["worst_attack"] = json!(r.attack.as_ref().map(|a| a.to_string()));
            report["tolerances"] = settings.tolerances();
            emit(out, &report)?;
            writeln!(
                err,
                "placement {} withstands worst attack with trace {}",
                r.chosen, r.objective
            )?;
        }
        Command::Verify {
            instance,
            problem,
            placement,
        } => {
            let inst = load_instance(instance)?;
            zero_noise(&inst)?;
            let problems: Vec<Problem> = match problem {
                Some(p) => vec![(*p).into()],
                None => Problem::ALL.to_vec(),
            };
            let mu = match placement {
                Some(s) => parse_placement(s, inst.n())?,
                None => IndicatorVector::ones(inst.n()),
            };
            let (checks, all_ok) = verify(&inst, &problems, &mu, &settings)?;
            let report = json!({
                "command": "verify",
                "instance": instance.display().to_string(),
                "checks": checks,
                "agree": all_ok,
                "tolerances": settings.tolerances(),
            });
            emit(out, &report)?;
            if !all_ok {
                writeln!(err, "verification FAILED")?;
                return Ok(EXIT_MISMATCH);
            }
            writeln!(err, "solvers agree with brute force on {} problem(s)", problems.len())?;
        }
        Command::Bound {
            instance,
            placement,
        } => {
            let inst = load_instance(instance)?;
            let mu = parse_placement(placement, inst.n())?;
            let r = compute_noise_bound(&inst.system, &mu, &settings.dare)?;
            let report = json!({
                "command": "bound",
                "placement": mu.to_string(),
                "trace_sigma": r.sigma.trace(),
                "trace_sigma_post": r.sigma_post.trace(),
                "trace_e": r.trace_e,
                "trace_e_post": r.trace_e_post,
                "trace_e_post_product": r.trace_e_post_product,
                "bound_priori": r.bound_priori,
                "bound_posteriori": r.bound_posteriori,
                "closed_loop_radius": r.closed_loop_radius,
                "excited_radius": r.excited_radius,
                "lyapunov_iterations": r.lyapunov_iterations,
                "tolerances": settings.tolerances(),
            });
            emit(out, &report)?;
            writeln!(
                err,
                "trace E = {:.6e}; noisy trace <= {:.6}",
                r.trace_e, r.bound_priori
            )?;
        }
        Command::Experiment {
            problem,
            realizations,
            sigma_v2,
            seed,
            out: path,
            jobs,
            n,
            edges,
            sigma_w2,
            cost_max,
            budget_max,
            placement,
        } => {
            let cfg = ExperimentConfig {
                problem: (*problem).into(),
                realizations: *realizations,
                sigma_v2: parse_sigma_spec(sigma_v2)?,
                seed: *seed,
                graph: NormalConfig {
                    n: *n,
                    edge_count: *edges,
                    sigma_w2: *sigma_w2,
                    costs: CostRanges {
                        cost_max: *cost_max,
                        budget_max: *budget_max,
                    },
                    ..NormalConfig::default()
                },
                attack_placement: placement.as_deref().map(|s| parse_placement(s, *n)).transpose()?,
                oracle: settings.oracle,
            };
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                pool = pool.num_threads((*j).max(1));
            }
            let pool = pool
                .build()
                .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
            let rows = pool.install(|| gap_experiment(&cfg))?;
            write_csv(&rows, fs::File::create(path)?)?;
            let summary = summarize(&rows, VERIFY_TOL);
            let report = json!({
                "command": "experiment",
                "out": path.display().to_string(),
                "config": cfg,
                "summary": summary,
                "tolerances": settings.tolerances(),
            });
            emit(out, &report)?;
            writeln!(
                err,
                "{} rows, {} bound violations, {} rows with unstable A-KC, median bound/gap {:?}",
                summary.rows, summary.bound_violations, summary.unbounded_rows, summary.median_bound_ratio
            )?;
            if summary.bound_violations > 0 {
                return Ok(EXIT_MISMATCH);
            }
        }
        Command::ReduceSubsetSum {
            sizes,
            target,
            out: path,
        } => {
            let ss = SubsetSumInstance::new(sizes.clone(), *target)?;
            let (system, costs) = build_reduction_instance(&ss)?;
            let threshold = reduction_threshold(&system, &ss);
            let inst = ProblemInstance::new(
                system,
                costs,
                Metadata {
                    name: Some(format!("subset-sum-reduction-k{target}")),
                    seed: None,
                    generator: Some("subset_sum_reduction".into()),
                    rejections: None,
                },
            )?;
            save_instance(&inst, path)?;
            let report = json!({
                "command": "reduce-subset-sum",
                "out": path.display().to_string(),
                "n": inst.n(),
                "h": inst.costs.placement_costs,
                "H": inst.costs.placement_budget,
                "f": inst.costs.attack_costs,
                "F": inst.costs.attack_budget,
                "threshold": threshold,
                "tolerances": settings.tolerances(),
            });
            emit(out, &report)?;
            writeln!(err, "wrote {}-node instance to {}", inst.n(), path.display())?;
        }
        Command::Gen {
            kind,
            n,
            seed,
            extra_edges,
            edges,
            sigma_w2,
            sigma_v2,
            cost_max,
            budget_max,
            out: path,
        } => {
            let costs = CostRanges {
                cost_max: *cost_max,
                budget_max: *budget_max,
            };
            let inst = match kind {
                GenKind::Stochastic => generate_row_stochastic(
                    &RowStochasticConfig {
                        costs,
                        ..RowStochasticConfig::new(*n, *extra_edges)
                    },
                    *seed,
                )?,
                GenKind::Normal => generate_normal(
                    &NormalConfig {
                        n: *n,
                        edge_count: edges.unwrap_or(n + n / 2),
                        sigma_w2: *sigma_w2,
                        sigma_v2: *sigma_v2,
                        costs,
                        ..NormalConfig::default()
                    },
                    *seed,
                )?,
            };
            write_text(path, &to_json(&inst)?)?;
            let report = json!({
                "command": "gen",
                "out": path.display().to_string(),
                "n": inst.n(),
                "metadata": inst.metadata,
                "assumptions": inst.check_assumptions()?,
                "tolerances": settings.tolerances(),
            });
            emit(out, &report)?;
            writeln!(err, "wrote {}", path.display())?;
        }
    }
    Ok(EXIT_OK)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn verify(
    inst: &ProblemInstance,
    problems: &[Problem],
    placement: &IndicatorVector,
    settings: &Settings,
) -> Result<(Vec<Value>, bool)> {
    let sys = &inst.system;
    let costs = &inst.costs;
    let dmap = distances(inst)?;
    let mut checks = Vec::new();
    let mut all_ok = true;
    for &p in problems {
        let (alg, oracle) = match p {
            Problem::Gkfsp => (
                solve_gkfsp(sys, costs, &dmap).map(|r| r.objective),
                brute_gkfsp(sys, costs, &settings.oracle),
            ),
            Problem::Gkfsa => (
                solve_gkfsa(sys, costs, placement, &dmap, &settings.dare).map(|r| r.objective),
                brute_gkfsa(sys, costs, placement, &settings.oracle),
            ),
            Problem::Rgkfsp => (
                solve_rgkfsp(sys, costs, &dmap, &settings.dare).map(|r| r.objective),
                brute_rgkfsp(sys, costs, &settings.oracle),
            ),
        };
        let (ok, entry) = match (alg, oracle) {
            (Ok(a), Ok(o)) => {
                let ok = a.approx_eq(o.objective, VERIFY_TOL);
                (
                    ok,
                    json!({ "problem": p, "solver": trace_json(a), "oracle": oracle_json(&o), "agree": ok }),
                )
            }
            // both sides must agree that nothing is affordable
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {
                (true, json!({ "problem": p, "infeasible": true, "agree": true }))
            }
            (Err(e), _) | (_, Err(e)) if !matches!(e, Error::Infeasible(_)) => return Err(e),
            (a, o) => (
                false,
                json!({
                    "problem": p,
                    "solver": a.map(trace_json).map_err(|e| e.to_string()).unwrap_or_else(Value::String),
                    "oracle": o.map(|r| oracle_json(&r)).map_err(|e| e.to_string()).unwrap_or_else(Value::String),
                    "agree": false,
                }),
            ),
        };
        all_ok &= ok;
        checks.push(entry);
    }
    Ok((checks, all_ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(
            std::iter::once("kfsp").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_capture(&["place", "x.json", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn missing_file_is_usage_error() {
        let (code, _, _) = run_capture(&["place", "/nonexistent/instance.json"]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Infeasible("x".into())), EXIT_INFEASIBLE);
        assert_eq!(exit_code(&Error::Mismatch("x".into())), EXIT_MISMATCH);
        assert_eq!(exit_code(&Error::Unstable { spectral_radius: 1.2 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Argument("x".into())), EXIT_USAGE);
    }
}
