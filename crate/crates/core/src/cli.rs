//! The `approxdiag` command line.
//!
//! Exit codes: 0 result produced, 2 inconclusive, 3 infeasible observation,
//! 4 precondition failure, 64 usage error, 70 internal error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::abstraction::{build_abstraction, solve_epsilon, AbstractionError, AbstractionParams, BuildOptions};
use crate::bench::bench_scaling;
use crate::bridge::{self, BridgeError, Direction, Mode, PlantVerdict};
use crate::diagnosis::{self, DiagnosisError, FaultSpec};
use crate::finsys::FiniteSystem;
use crate::regions::BoxUnion;
use crate::report::{self, canonical, envelope};
use crate::system::{parse_system, validate_certificate, Certificate, SystemDef};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(name = "approxdiag", version, about = "Approximate diagnosability of incrementally stable control systems")]
pub struct Cli {
    /// Print a canonical JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "APPROXDIAG_THREADS")]
    threads: Option<usize>,
    /// Print per-phase wall-clock times to stderr and add them to the report.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a system config and sample its incremental stability certificate.
    Validate {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build the symbolic model of a system and write it as JSON.
    Abstract {
        config: PathBuf,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, conflicts_with = "solve_epsilon")]
        epsilon: Option<f64>,
        /// Use the smallest admissible epsilon (the default without --epsilon).
        #[arg(long)]
        solve_epsilon: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decide diagnosability of a finite model.
    CheckFts {
        model: PathBuf,
        /// Comma-separated state indices, or a region JSON file.
        #[arg(long)]
        faults: String,
        #[arg(long)]
        rho: f64,
        /// Also run the brute-force oracle up to this horizon.
        #[arg(long, value_name = "T")]
        brute_force: Option<usize>,
    },
    /// Run the diagnoser on outputs read from stdin, one JSON array per line.
    Monitor {
        model: PathBuf,
        #[arg(long)]
        faults: String,
        #[arg(long)]
        rho: f64,
    },
    /// Transfer a finite-model verdict to the plant.
    Check {
        config: PathBuf,
        /// Fault region JSON file.
        #[arg(long)]
        faults: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Neighbourhood multiple for prove mode (default: ceil(2 epsilon / eta)).
        #[arg(long)]
        k: Option<u64>,
        /// Sweep k up to this value in prove mode, stopping at the first success.
        #[arg(long)]
        k_max: Option<u64>,
        /// Only accept prove-mode bounds below this radius.
        #[arg(long)]
        rho_target: Option<f64>,
        /// Radius to refute.
        #[arg(long, required_if_eq("mode", "refute"))]
        rho: Option<f64>,
        /// Abstraction state parameter (default: the config's eta).
        #[arg(long)]
        eta: Option<f64>,
        /// Abstraction input parameter (default: the abstraction eta).
        #[arg(long)]
        mu: Option<f64>,
        /// Relation precision (default: smallest admissible).
        #[arg(long)]
        epsilon: Option<f64>,
        /// On an inconclusive result, halve eta and mu up to this many times.
        #[arg(long, default_value_t = 0)]
        refine: u32,
    },
    /// Search for plant trajectories that refute diagnosability.
    Falsify {
        config: PathBuf,
        #[arg(long)]
        faults: PathBuf,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 30)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Abstraction size and time across state dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        dims: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Prove,
    Refute,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Precondition(String),
    #[error("observation {step} is inconsistent with the model")]
    Infeasible { step: usize },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Precondition(_) => EXIT_PRECONDITION,
            CliError::Infeasible { .. } => EXIT_INFEASIBLE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn pre(e: impl std::fmt::Display) -> CliError {
    CliError::Precondition(e.to_string())
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        match e {
            BridgeError::Sandwich => CliError::Internal(e.to_string()),
            e => pre(e),
        }
    }
}

impl From<AbstractionError> for CliError {
    fn from(e: AbstractionError) -> Self {
        pre(e)
    }
}

impl From<DiagnosisError> for CliError {
    fn from(e: DiagnosisError) -> Self {
        match e {
            DiagnosisError::InfeasibleObservation { step } => CliError::Infeasible { step },
            e => pre(e),
        }
    }
}

/// What a subcommand produced.
struct Outcome {
    command: &'static str,
    status: &'static str,
    code: i32,
    digest: Option<String>,
    body: Value,
    text: String,
}

#[derive(Default)]
struct Timings {
    enabled: bool,
    phases: Vec<(String, f64)>,
}

impl Timings {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if self.enabled {
            eprintln!("[timing] {phase}: {ms:.3} ms");
        }
        self.phases.push((phase.to_owned(), ms));
        out
    }
}

fn body<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable report")
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| pre(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<(String, SystemDef, Certificate), CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| pre(format!("{}: not UTF-8", path.display())))?;
    let (sys, cert) = parse_system(&text).map_err(|e| pre(format!("{}: {e}", path.display())))?;
    Ok((report::digest(&bytes), sys, cert))
}

fn load_model(path: &Path) -> Result<(String, FiniteSystem), CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| pre(format!("{}: not UTF-8", path.display())))?;
    let model = FiniteSystem::from_json(&text).map_err(|e| pre(format!("{}: {e}", path.display())))?;
    Ok((report::digest(&bytes), model))
}

fn load_region(path: &Path) -> Result<BoxUnion, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| pre(format!("{}: {e}", path.display())))
}

/// Fault states from `1,2,5` or from the states of a region file.
fn fault_states(model: &FiniteSystem, arg: &str) -> Result<Vec<usize>, CliError> {
    let indices: Result<Vec<usize>, _> = arg.split(',').map(|s| s.trim().parse::<usize>()).collect();
    if let Ok(v) = indices {
        return Ok(v);
    }
    let region = load_region(Path::new(arg))?;
    if region.dim() != model.dim() {
        return Err(pre(format!("fault region has dimension {}, model has {}", region.dim(), model.dim())));
    }
    let mut out = Vec::new();
    for s in 0..model.num_states() {
        if region.contains(&model.embed(s)).map_err(pre)? {
            out.push(s);
        }
    }
    Ok(out)
}

fn cmd_validate(config: &Path, samples: usize, seed: u64, t: &mut Timings) -> Result<Outcome, CliError> {
    let (digest, sys, cert) = t.time("parse", || load_config(config))?;
    let r = t.time("sample", || validate_certificate(&sys, &cert, samples, seed));
    let text = format!(
        "{}: {} samples, sandwich {:e}, decrease {:e}, lipschitz {:e}, numeric failures {}",
        if r.pass { "PASS" } else { "FAIL" },
        r.samples,
        r.sandwich_violation,
        r.decrease_violation,
        r.lipschitz_violation,
        r.numeric_failures
    );
    Ok(Outcome {
        command: "validate",
        status: if r.pass { "pass" } else { "fail" },
        code: if r.pass { EXIT_OK } else { EXIT_PRECONDITION },
        digest: Some(digest),
        body: body(&r),
        text,
    })
}

fn resolve_params(cert: &Certificate, eta: f64, mu: f64, epsilon: Option<f64>) -> Result<AbstractionParams, CliError> {
    let epsilon = match epsilon {
        Some(e) => e,
        None => solve_epsilon(cert, eta, mu)?,
    };
    Ok(AbstractionParams { epsilon, eta, mu })
}

fn cmd_abstract(config: &Path, eta: f64, mu: f64, epsilon: Option<f64>, output: &Path, t: &mut Timings) -> Result<Outcome, CliError> {
    let (digest, sys, cert) = t.time("parse", || load_config(config))?;
    let params = resolve_params(&cert, eta, mu, epsilon)?;
    let opts = BuildOptions { config_digest: digest.clone(), ..BuildOptions::default() };
    let model = t.time("abstract", || build_abstraction(&sys, &cert, &params, &opts))?;
    let json = t.time("serialize", || model.to_json());
    std::fs::write(output, json).map_err(|e| pre(format!("{}: {e}", output.display())))?;
    let text = format!(
        "wrote {}: {} states, {} transitions, {} initial (epsilon {}, eta {}, mu {})",
        output.display(),
        model.num_states(),
        model.num_transitions(),
        model.initial().len(),
        params.epsilon,
        params.eta,
        params.mu
    );
    Ok(Outcome {
        command: "abstract",
        status: "ok",
        code: EXIT_OK,
        digest: Some(digest),
        body: json!({
            "params": params,
            "states": model.num_states(),
            "transitions": model.num_transitions(),
            "initial": model.initial().len(),
            "inputs": model.num_inputs(),
        }),
        text,
    })
}

fn cmd_check_fts(model_path: &Path, faults: &str, rho: f64, brute: Option<usize>, t: &mut Timings) -> Result<Outcome, CliError> {
    let (digest, model) = t.time("load", || load_model(model_path))?;
    let spec = FaultSpec::new(fault_states(&model, faults)?, rho);
    let verdict = t.time("check", || diagnosis::check_diagnosability(&model, &spec))?;
    let mut text = match (verdict.diagnosable, verdict.delta) {
        (true, Some(d)) => format!("diagnosable, delta {d}"),
        _ => "not diagnosable".to_owned(),
    };
    if let Some(w) = &verdict.alarm_window {
        text.push_str(&format!(", alarm window {w}"));
    }
    if let Some(w) = &verdict.witness {
        text.push_str(&format!("\nwitness faulty {:?}\nwitness safe   {:?}", w.faulty, w.safe));
        if let Some(l) = w.loop_start {
            text.push_str(&format!("\nloop from step {l}"));
        }
    }
    let mut b = json!({ "faults": spec.faults, "rho": rho, "verdict": verdict });
    if let Some(h) = brute {
        let oracle = t.time("brute_force", || diagnosis::brute_force_check(&model, &spec, h, diagnosis::BRUTE_FORCE_LIMIT))?;
        text.push_str(&format!(
            "\nbrute force (horizon {h}): {}",
            match oracle.delta {
                Some(d) if oracle.diagnosable => format!("diagnosable, minimal delay {d}"),
                _ => "not diagnosable".to_owned(),
            }
        ));
        b["brute_force"] = json!({ "horizon": h, "verdict": oracle });
    }
    Ok(Outcome { command: "check-fts", status: "ok", code: EXIT_OK, digest: Some(digest), body: b, text })
}

fn cmd_monitor(model_path: &Path, faults: &str, rho: f64, t: &mut Timings) -> Result<Outcome, CliError> {
    let (digest, model) = t.time("load", || load_model(model_path))?;
    let spec = FaultSpec::new(fault_states(&model, faults)?, rho);
    let d = t.time("synthesize", || diagnosis::synthesize_diagnoser(&model, &spec))?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut decisions = Vec::new();
    let mut belief = None;
    let mut failure = None;
    for (step, line) in stdin.lock().lines().enumerate() {
        let line = line.map_err(|e| pre(format!("stdin: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let y: Vec<f64> = serde_json::from_str(&line).map_err(|e| pre(format!("line {}: {e}", step + 1)))?;
        let Some(sym) = model.symbol_of(&y) else {
            failure = Some(CliError::Infeasible { step: decisions.len() });
            break;
        };
        let next = match &belief {
            None => d.start(sym).map(|b| {
                let dec = d.decision(&b);
                (b, dec)
            }),
            Some(b) => d.step(b, sym, decisions.len()),
        };
        match next {
            Ok((b, dec)) => {
                decisions.push(dec);
                belief = Some(b);
                if !json_mode() {
                    writeln!(out, "{dec}").map_err(|e| CliError::Internal(e.to_string()))?;
                    out.flush().map_err(|e| CliError::Internal(e.to_string()))?;
                }
            }
            Err(e) => {
                failure = Some(e.into());
                break;
            }
        }
    }
    if let Some(e) = failure {
        if json_mode() {
            let v = envelope("monitor", "infeasible", Some(&digest), &json!({ "decisions": decisions, "error": e.to_string() }));
            println!("{}", canonical(&v));
        }
        return Err(e);
    }
    Ok(Outcome {
        command: "monitor",
        status: "ok",
        code: EXIT_OK,
        digest: Some(digest),
        body: json!({ "decisions": decisions, "delay": d.delta }),
        text: String::new(),
    })
}

thread_local! {
    static JSON_MODE: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

fn json_mode() -> bool {
    JSON_MODE.with(|c| c.get())
}

#[derive(Serialize)]
struct Round {
    eta: f64,
    mu: f64,
    epsilon: f64,
    states: usize,
    transitions: usize,
    /// `(k, outcome)` pairs tried in prove mode.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    frontier: Vec<Value>,
}

fn direction_text(v: &PlantVerdict) -> String {
    match &v.conclusion {
        Direction::DiagnosableForRhoAbove { bound } => format!("DIAGNOSABLE for every rho > {bound}"),
        Direction::NotDiagnosableForRho { rho } => format!("NOT DIAGNOSABLE for rho = {rho}"),
        Direction::Inconclusive { reason } => format!("INCONCLUSIVE: {reason}"),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    config: &Path,
    faults: &Path,
    mode: ModeArg,
    k: Option<u64>,
    k_max: Option<u64>,
    rho_target: Option<f64>,
    rho: Option<f64>,
    eta: Option<f64>,
    mu: Option<f64>,
    epsilon: Option<f64>,
    refine: u32,
    t: &mut Timings,
) -> Result<Outcome, CliError> {
    let (digest, sys, cert) = t.time("parse", || load_config(config))?;
    let region = load_region(faults)?;
    if mode == ModeArg::Refute && (k.is_some() || k_max.is_some() || rho_target.is_some()) {
        return Err(CliError::Usage("--k, --k-max and --rho-target apply to prove mode only".into()));
    }
    let eta0 = eta.unwrap_or(sys.eta);
    let mu0 = mu.unwrap_or(eta0);
    let mut rounds = Vec::new();
    let mut last = None;
    for r in 0..=refine {
        let scale = 0.5f64.powi(r as i32);
        let params = resolve_params(&cert, eta0 * scale, mu0 * scale, epsilon)?;
        let opts = BuildOptions { config_digest: digest.clone(), ..BuildOptions::default() };
        let model = t.time(&format!("abstract[{r}]"), || build_abstraction(&sys, &cert, &params, &opts))?;
        let mut round = Round {
            eta: params.eta,
            mu: params.mu,
            epsilon: params.epsilon,
            states: model.num_states(),
            transitions: model.num_transitions(),
            frontier: Vec::new(),
        };
        let verdict = match mode {
            ModeArg::Refute => t.time(&format!("conclude[{r}]"), || bridge::conclude(&sys, &cert, &params, &model, &region, Mode::Refute, None, rho))?,
            ModeArg::Prove => {
                let k_lo = k.unwrap_or_else(|| bridge::default_k(params.epsilon, params.eta));
                let k_hi = k_max.unwrap_or(k_lo).max(k_lo);
                let mut chosen = None;
                for kk in k_lo..=k_hi {
                    let bound = bridge::prove_bound(params.epsilon, params.eta, kk);
                    if rho_target.is_some_and(|target| bound >= target) {
                        round.frontier.push(json!({ "k": kk, "bound": bound, "outcome": "above_target" }));
                        break;
                    }
                    let v = t.time(&format!("conclude[{r},k={kk}]"), || {
                        bridge::conclude(&sys, &cert, &params, &model, &region, Mode::Prove, Some(kk), None)
                    })?;
                    let done = !v.is_inconclusive();
                    round.frontier.push(json!({
                        "k": kk,
                        "bound": bound,
                        "outcome": if done { "diagnosable" } else { "inconclusive" },
                    }));
                    chosen = Some(v);
                    if done {
                        break;
                    }
                }
                match chosen {
                    Some(v) => v,
                    None => PlantVerdict {
                        mode: Mode::Prove,
                        conclusion: Direction::Inconclusive {
                            reason: format!("2*epsilon + k*eta is not below the target for any k >= {k_lo}"),
                        },
                        epsilon: params.epsilon,
                        eta: params.eta,
                        mu: params.mu,
                        k: Some(k_lo),
                        k_prime: None,
                        rho: None,
                        rho_hat: k_lo as f64 * params.eta,
                        faults: bridge::fault_lattice_dilated(&region, params.epsilon, params.eta, &sys.x0, &model)?,
                        finite: None,
                        templates: None,
                    },
                }
            }
        };
        rounds.push(round);
        let done = !verdict.is_inconclusive();
        last = Some(verdict);
        if done {
            break;
        }
    }
    let verdict = last.expect("at least one round");
    let inconclusive = verdict.is_inconclusive();
    let mut text = direction_text(&verdict);
    for (i, r) in rounds.iter().enumerate() {
        text.push_str(&format!(
            "\nround {i}: eta {}, mu {}, epsilon {}, {} states, {} transitions",
            r.eta, r.mu, r.epsilon, r.states, r.transitions
        ));
    }
    if let Some(f) = &verdict.finite {
        text.push_str(&format!(
            "\nfinite check: {} ({} lattice fault points, {} states, rho_hat {})",
            if f.diagnosable { "diagnosable" } else { "not diagnosable" },
            verdict.faults.lattice_points,
            verdict.faults.states.len(),
            verdict.rho_hat
        ));
    }
    Ok(Outcome {
        command: "check",
        status: if inconclusive { "inconclusive" } else { "ok" },
        code: if inconclusive { EXIT_INCONCLUSIVE } else { EXIT_OK },
        digest: Some(digest),
        body: json!({ "verdict": verdict, "rounds": rounds }),
        text,
    })
}

fn cmd_falsify(config: &Path, faults: &Path, rho: f64, trials: u64, horizon: usize, seed: u64, t: &mut Timings) -> Result<Outcome, CliError> {
    let (digest, sys, _) = t.time("parse", || load_config(config))?;
    let region = load_region(faults)?;
    let r = t.time("falsify", || bridge::falsify_plant(&sys, &region, rho, trials, horizon, seed))?;
    let text = match &r.counterexample {
        Some(c) => {
            bridge::validate_counterexample(&sys, &region, rho, c).map_err(CliError::Internal)?;
            format!(
                "counterexample in trial {}: fault at step {}, safe margin {}\nfaulty x(0) = {:?}\nsafe   x(0) = {:?}",
                c.trial, c.fault_time, c.safe_margin, c.faulty[0], c.safe[0]
            )
        }
        None => format!("no counterexample in {trials} trials of horizon {horizon}"),
    };
    Ok(Outcome {
        command: "falsify",
        status: if r.counterexample.is_some() { "counterexample" } else { "none" },
        code: EXIT_OK,
        digest: Some(digest),
        body: body(&r),
        text,
    })
}

fn cmd_bench(dims: &[usize], t: &mut Timings) -> Result<Outcome, CliError> {
    if let Some(&n) = dims.iter().find(|&&n| n == 0 || n > 8) {
        return Err(CliError::Usage(format!("dimension {n} is outside 1..=8")));
    }
    let rows = t.time("bench", || bench_scaling(dims))?;
    let mut text = String::from("n  states  transitions  wall_ms");
    for r in &rows {
        text.push_str(&format!("\n{}  {}  {}  {:.3}", r.n, r.states, r.transitions, r.wall_ms));
    }
    Ok(Outcome { command: "bench", status: "ok", code: EXIT_OK, digest: None, body: json!({ "rows": rows }), text })
}

fn dispatch(cli: &Cli, t: &mut Timings) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Validate { config, samples, seed } => cmd_validate(config, *samples, *seed, t),
        Command::Abstract { config, eta, mu, epsilon, solve_epsilon: _, output } => cmd_abstract(config, *eta, *mu, *epsilon, output, t),
        Command::CheckFts { model, faults, rho, brute_force } => cmd_check_fts(model, faults, *rho, *brute_force, t),
        Command::Monitor { model, faults, rho } => cmd_monitor(model, faults, *rho, t),
        Command::Check { config, faults, mode, k, k_max, rho_target, rho, eta, mu, epsilon, refine } => {
            cmd_check(config, faults, *mode, *k, *k_max, *rho_target, *rho, *eta, *mu, *epsilon, *refine, t)
        }
        Command::Falsify { config, faults, rho, trials, horizon, seed } => cmd_falsify(config, faults, *rho, *trials, *horizon, *seed, t),
        Command::Bench { dims } => cmd_bench(dims, t),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // the global pool can only be built once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    JSON_MODE.with(|c| c.set(cli.json));
    let mut timings = Timings { enabled: cli.timings, phases: Vec::new() };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli, &mut timings)))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(CliError::Internal(msg))
        });
    match result {
        Ok(o) => {
            if cli.json {
                let mut v = envelope(o.command, o.status, o.digest.as_deref(), &o.body);
                if cli.timings {
                    v["timings_ms"] = timings.phases.iter().map(|(k, ms)| (k.clone(), json!(ms))).collect::<serde_json::Map<_, _>>().into();
                }
                println!("{}", canonical(&v));
            } else if !o.text.is_empty() {
                println!("{}", o.text);
            }
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
