//! Command-line driver: loads problem files, runs the solvers, writes CSV/JSON
//! artifacts and reports a [`RunRecord`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use perideval::analysis::{
    bellman_bound, check_order_condition, check_spectral_gap, fourier_oracle_for, random_histories, stability_report,
    HypothesisMode,
};
use perideval::ivp::{mild_residual, solve_ivp, HistorySegment, Trajectory};
use perideval::operators::{growth_constant, spectrum};
use perideval::periodic::{picard_solve, PeriodicTrajectory, PicardOptions};
use perideval::problems::{load_problem, ProblemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Relative sup-norm discrepancy accepted by `oracle`.
pub const ORACLE_TOLERANCE: f64 = 1e-4;
/// Picard tolerance used for the reference orbit in `stability`.
pub const STABILITY_ORBIT_TOL: f64 = 1e-13;
const DECAY_CSV_ROWS: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "perideval",
    version,
    about = "Positive periodic solutions of delayed evolution equations"
)]
pub struct Cli {
    /// Directory for output artifacts.
    #[arg(long, global = true, env = "PERIDEVAL_OUT", default_value = "./out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report lambda1, nu0, stability and the growth constant M.
    Spectrum(ConfigArg),
    /// Picard iteration for the periodic solution.
    Periodic {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        picard: PicardArgs,
    },
    /// Integrate the delay initial value problem.
    Ivp {
        #[command(flatten)]
        config: ConfigArg,
        /// `zero`, `constant:<c>` or `orbit`.
        #[arg(long, default_value = "zero")]
        history: HistoryKind,
        /// Final time (default: 10 periods).
        #[arg(long)]
        t_end: Option<f64>,
        /// Step (default: omega / steps_M).
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        picard: PicardArgs,
    },
    /// Spectral gap and sampled order condition.
    Check {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "H2")]
        mode: HypothesisMode,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Measure the attraction rate towards the periodic solution.
    Stability {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 8)]
        histories: usize,
        /// Final time (default: 40).
        #[arg(long)]
        t_end: Option<f64>,
        /// Step (default: omega / steps_M).
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        picard: PicardArgs,
    },
    /// Saturated delay integral inequality against its exponential bound.
    Gronwall {
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        c2: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Compare Picard against the closed-form Fourier solution.
    Oracle {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        picard: PicardArgs,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct PicardArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistoryKind {
    Zero,
    Constant(f64),
    Orbit,
}

impl FromStr for HistoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(HistoryKind::Zero),
            "orbit" => Ok(HistoryKind::Orbit),
            _ => match s.strip_prefix("constant:") {
                Some(c) => c
                    .parse()
                    .map(HistoryKind::Constant)
                    .map_err(|e| format!("bad constant `{c}`: {e}")),
                None => Err(format!("expected zero, constant:<c> or orbit, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] perideval::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid argument `{flag}`: {reason}")]
    Argument { flag: &'static str, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use perideval::Error as E;
        match self {
            CliError::Engine(e) => match e {
                E::NotExponentiallyStable { .. } | E::Hypothesis(_) | E::Resonance { .. } => EXIT_CHECK_FAILED,
                E::Numerical { .. } | E::Singular { .. } | E::Divergence { .. } => EXIT_NUMERICAL,
                E::Structural(_)
                | E::Validation { .. }
                | E::Domain(_)
                | E::Configuration(_)
                | E::ConeViolation { .. }
                | E::Parse { .. } => EXIT_CONFIG,
            },
            CliError::Io { .. } | CliError::Argument { .. } => EXIT_CONFIG,
        }
    }
}

/// Summary of one invocation, printed as JSON on stdout.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config_label: String,
    pub outputs: BTreeMap<String, Value>,
    pub artifact_paths: Vec<PathBuf>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    fn new(command: &str, label: &str) -> Self {
        RunRecord {
            command: command.to_string(),
            config_label: label.to_string(),
            outputs: BTreeMap::new(),
            artifact_paths: Vec::new(),
            exit_code: EXIT_OK,
            error: None,
        }
    }

    fn put(&mut self, key: &str, value: impl Serialize) {
        self.outputs
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn fail(&mut self, code: i32, message: impl Into<String>) {
        if self.exit_code == EXIT_OK {
            self.exit_code = code;
        }
        self.error.get_or_insert(message.into());
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Periodic { .. } => "periodic",
            Command::Ivp { .. } => "ivp",
            Command::Check { .. } => "check",
            Command::Stability { .. } => "stability",
            Command::Gronwall { .. } => "gronwall",
            Command::Oracle { .. } => "oracle",
        }
    }
}

/// Runs a parsed command line. Errors are folded into the record's exit code.
pub fn run(cli: &Cli) -> RunRecord {
    let name = cli.command.name();
    let mut record = RunRecord::new(name, "");
    let out = Output::new(&cli.out_dir);
    let result = match &cli.command {
        Command::Spectrum(c) => cmd_spectrum(&c.config, &out, &mut record),
        Command::Periodic { config, picard } => cmd_periodic(&config.config, *picard, &out, &mut record),
        Command::Ivp {
            config,
            history,
            t_end,
            dt,
            picard,
        } => cmd_ivp(&config.config, *history, *t_end, *dt, *picard, &out, &mut record),
        Command::Check { config, mode, samples } => cmd_check(&config.config, *mode, *samples, &out, &mut record),
        Command::Stability {
            config,
            histories,
            t_end,
            dt,
            picard,
        } => cmd_stability(&config.config, *histories, *t_end, *dt, *picard, &out, &mut record),
        Command::Gronwall { c1, c2, tau, t_end, dt } => cmd_gronwall(*c1, *c2, *tau, *t_end, *dt, &out, &mut record),
        Command::Oracle { config, picard } => cmd_oracle(&config.config, *picard, &out, &mut record),
    };
    if let Err(e) = result {
        record.exit_code = e.exit_code();
        record.error = Some(e.to_string());
    }
    record
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Output { dir: dir.to_path_buf() }
    }

    fn write(&self, name: &str, contents: &str, record: &mut RunRecord) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|source| CliError::Io {
            path: self.dir.clone(),
            source,
        })?;
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        record.artifact_paths.push(path);
        Ok(())
    }

    fn write_json(&self, name: &str, value: &impl Serialize, record: &mut RunRecord) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        self.write(name, &text, record)
    }
}

fn load(path: &Path, record: &mut RunRecord) -> Result<ProblemSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = load_problem(&text)?;
    record.config_label = spec.label.clone();
    Ok(spec)
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_header(first: &str, prefix: &str, n: usize) -> String {
    let mut s = first.to_string();
    for i in 1..=n {
        let _ = write!(s, ",{prefix}{i}");
    }
    s.push('\n');
    s
}

fn csv_row(out: &mut String, t: f64, values: impl IntoIterator<Item = f64>) {
    out.push_str(&fmt_f64(t));
    for v in values {
        out.push(',');
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

fn periodic_csv(u: &PeriodicTrajectory) -> String {
    let mut s = csv_header("t", "u_", u.dim());
    for j in 0..u.steps() {
        csv_row(&mut s, u.time(j), u.values().column(j).iter().copied());
    }
    s
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.values.first().map_or(0, |v| v.len());
    let mut s = csv_header("t", "u_", dim);
    for (j, v) in traj.values.iter().enumerate() {
        csv_row(&mut s, traj.time(j), v.iter().copied());
    }
    s
}

fn picard_options(spec: &ProblemSpec, args: PicardArgs) -> Result<PicardOptions, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Argument {
            flag: "--tol",
            reason: format!("must be > 0, got {}", args.tol),
        });
    }
    if args.max_iter == 0 {
        return Err(CliError::Argument {
            flag: "--max-iter",
            reason: "must be >= 1".into(),
        });
    }
    Ok(PicardOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        interpolate_delay: spec.interpolate_delay,
    })
}

fn positive(flag: &'static str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Argument {
            flag,
            reason: format!("must be > 0, got {v}"),
        })
    }
}

// number of periodic grid steps matching dt
fn steps_for_dt(omega: f64, dt: f64) -> Result<usize, CliError> {
    let m = (omega / dt).round();
    if m < 1.0 || (m * dt - omega).abs() > 1e-9 * omega {
        return Err(
            perideval::Error::Configuration(format!("dt = {dt} does not divide the period omega = {omega}")).into(),
        );
    }
    Ok(m as usize)
}

fn cmd_spectrum(config: &Path, out: &Output, record: &mut RunRecord) -> Result<(), CliError> {
    let spec = load(config, record)?;
    let gen = spec.generator();
    let info = spectrum(gen)?;
    let m = growth_constant(gen, &info, spec.omega)?;
    record.put("lambda1", info.lambda1);
    record.put("nu0", info.nu0);
    record.put("exp_stable", info.exp_stable);
    record.put("growth_constant_m", m);
    let doc = json!({
        "label": spec.label,
        "dimension": gen.dimension(),
        "metzler_ok": gen.metzler_ok(),
        "self_adjoint": gen.self_adjoint(),
        "lambda1": info.lambda1,
        "nu0": info.nu0,
        "exp_stable": info.exp_stable,
        "growth_constant_m": m,
        "eigenvalues": info.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    });
    out.write_json("spectrum.json", &doc, record)
}

fn cmd_periodic(config: &Path, args: PicardArgs, out: &Output, record: &mut RunRecord) -> Result<(), CliError> {
    let spec = load(config, record)?;
    let opts = picard_options(&spec, args)?;
    let res = picard_solve(spec.generator(), &spec.nonlinearity, spec.omega, spec.steps_m, opts)?;
    let summary = res.summary();
    record.put("iterations", summary.iterations);
    record.put("residual", summary.residual);
    record.put("positivity_violation", summary.positivity_violation);
    record.put("sup_norm", summary.sup_norm);
    record.put("converged", summary.converged);
    out.write("periodic.csv", &periodic_csv(&res.solution), record)?;
    let doc = json!({
        "label": spec.label,
        "omega": spec.omega,
        "steps_M": spec.steps_m,
        "tol": opts.tol,
        "max_iter": opts.max_iter,
        "iterations": summary.iterations,
        "residual": summary.residual,
        "positivity_violation": summary.positivity_violation,
        "monotonicity_violation": summary.monotonicity_violation,
        "sup_norm": summary.sup_norm,
        "converged": summary.converged,
    });
    out.write_json("periodic.json", &doc, record)?;
    if !summary.converged {
        record.fail(
            EXIT_CHECK_FAILED,
            format!(
                "Picard iteration did not converge after {} iterations",
                summary.iterations
            ),
        );
    }
    Ok(())
}

fn cmd_ivp(
    config: &Path,
    history: HistoryKind,
    t_end: Option<f64>,
    dt: Option<f64>,
    args: PicardArgs,
    out: &Output,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let spec = load(config, record)?;
    let dt = positive("--dt", dt.unwrap_or(spec.dt()))?;
    let t_end = positive("--t-end", t_end.unwrap_or(10.0 * spec.omega))?;
    let tau = spec.nonlinearity.delay_tau;
    let n = spec.generator().dimension();
    let steps = (tau / dt).round() as usize;
    let hist = match history {
        HistoryKind::Zero => HistorySegment::constant(tau, steps, DVector::zeros(n))?,
        HistoryKind::Constant(c) => HistorySegment::constant(tau, steps, DVector::from_element(n, c))?,
        HistoryKind::Orbit => {
            let m = steps_for_dt(spec.omega, dt)?;
            let opts = picard_options(&spec, args)?;
            let res = picard_solve(spec.generator(), &spec.nonlinearity, spec.omega, m, opts)?;
            if !res.converged {
                record.fail(EXIT_CHECK_FAILED, "periodic orbit for the history did not converge");
            }
            HistorySegment::from_periodic(&res.solution, tau)?
        }
    };
    let traj = solve_ivp(spec.generator(), &spec.nonlinearity, &hist, t_end, dt)?;
    let last = traj.len() - 1;
    let checks: Vec<f64> = (1..=10).map(|k| traj.time(k * last / 10)).collect();
    let residual = mild_residual(spec.generator(), &spec.nonlinearity, &traj, &hist, &checks)?;
    let final_state = &traj.values[last];
    record.put("t_end", traj.t_end());
    record.put("dt", dt);
    record.put("mild_residual", residual);
    record.put("final_sup_norm", final_state.amax());
    out.write("trajectory.csv", &trajectory_csv(&traj), record)?;
    let doc = json!({
        "label": spec.label,
        "history": match history {
            HistoryKind::Zero => "zero".to_string(),
            HistoryKind::Constant(c) => format!("constant:{c}"),
            HistoryKind::Orbit => "orbit".to_string(),
        },
        "t_end": traj.t_end(),
        "dt": dt,
        "steps": last,
        "check_times": checks,
        "mild_residual": residual,
        "min_entry": traj.values.iter().map(|v| v.min()).fold(f64::INFINITY, f64::min),
        "final_sup_norm": final_state.amax(),
    });
    out.write_json("ivp.json", &doc, record)
}

fn cmd_check(
    config: &Path,
    mode: HypothesisMode,
    samples: usize,
    out: &Output,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let spec = load(config, record)?;
    if samples == 0 {
        return Err(CliError::Argument {
            flag: "--samples",
            reason: "must be >= 1".into(),
        });
    }
    let f = &spec.nonlinearity;
    let info = spectrum(spec.generator())?;
    let gap = check_spectral_gap(f.c1, f.c2, f.delay_tau, info.lambda1.max(0.0), mode)?;
    let order = check_order_condition(f, f.c1, f.c2, samples, spec.seed)?;
    record.put("mode", mode.to_string());
    record.put("margin", gap.margin);
    record.put("sigma", gap.sigma);
    record.put("gap_satisfied", gap.satisfied);
    record.put("violations", order.violations);
    record.put("order_passed", order.passed);
    let doc = json!({
        "label": spec.label,
        "gap": gap,
        "order": order,
    });
    out.write_json("check.json", &doc, record)?;
    if !gap.satisfied {
        record.fail(
            EXIT_CHECK_FAILED,
            format!("{mode} gap condition fails (margin {})", gap.margin),
        );
    }
    if !order.passed {
        record.fail(
            EXIT_CHECK_FAILED,
            format!(
                "order condition violated in {} of {} samples",
                order.violations, order.samples
            ),
        );
    }
    Ok(())
}

fn cmd_stability(
    config: &Path,
    n_histories: usize,
    t_end: Option<f64>,
    dt: Option<f64>,
    args: PicardArgs,
    out: &Output,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let spec = load(config, record)?;
    let dt = positive("--dt", dt.unwrap_or(spec.dt()))?;
    let t_end = positive("--t-end", t_end.unwrap_or(40.0))?;
    if n_histories == 0 {
        return Err(CliError::Argument {
            flag: "--histories",
            reason: "must be >= 1".into(),
        });
    }
    let gen = spec.generator();
    let f = &spec.nonlinearity;
    let m = steps_for_dt(spec.omega, dt)?;
    let mut opts = picard_options(&spec, args)?;
    opts.tol = opts.tol.min(STABILITY_ORBIT_TOL);
    let orbit = picard_solve(gen, f, spec.omega, m, opts)?;
    if !orbit.converged {
        record.put("orbit_residual", orbit.residual);
        record.fail(EXIT_CHECK_FAILED, "periodic solution did not converge");
        return Ok(());
    }
    let scale = (2.0 * orbit.solution.sup_norm()).max(1.0);
    let histories = random_histories(gen.dimension(), f.delay_tau, dt, n_histories, spec.seed, scale)?;
    let report = stability_report(gen, f, &orbit.solution, &histories, t_end, dt)?;
    record.put("sigma_theory", report.sigma_theory);
    record.put("measured_rate", report.measured_rate);
    record.put("all_decayed", report.all_decayed);
    record.put("passed", report.passed);

    let rows = report.histories.first().map_or(0, |h| h.curve.len());
    let stride = rows.div_ceil(DECAY_CSV_ROWS).max(1);
    let mut csv = csv_header("t", "d_", report.histories.len());
    let mut j = 0;
    while j < rows {
        csv_row(&mut csv, j as f64 * dt, report.histories.iter().map(|h| h.curve[j]));
        j = if j + 1 < rows && j + stride >= rows {
            rows - 1
        } else {
            j + stride
        };
    }
    out.write("decay.csv", &csv, record)?;
    let doc = json!({
        "label": spec.label,
        "seed": spec.seed,
        "orbit_iterations": orbit.iterations,
        "orbit_residual": orbit.residual,
        "report": report,
    });
    out.write_json("stability.json", &doc, record)?;
    if let Some(i) = report.failed_history {
        record.fail(EXIT_CHECK_FAILED, format!("history {i} diverged"));
    } else if !report.all_decayed {
        record.fail(EXIT_CHECK_FAILED, "a history failed to decay");
    } else if !report.passed {
        record.fail(
            EXIT_CHECK_FAILED,
            format!(
                "measured rate {:?} below {} x sigma = {}",
                report.measured_rate,
                perideval::analysis::RATE_SLACK,
                report.sigma_theory
            ),
        );
    }
    Ok(())
}

fn cmd_gronwall(
    c1: f64,
    c2: f64,
    tau: f64,
    t_end: f64,
    dt: f64,
    out: &Output,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    record.config_label = format!("c1={c1},c2={c2},tau={tau}");
    let steps = (tau / dt).round() as usize;
    let hist = HistorySegment::constant(tau, steps, DVector::from_element(1, 1.0))?;
    let res = bellman_bound(&hist, c1, c2, t_end, dt)?;
    let mut csv = String::from("t,phi,bound,margin\n");
    for (j, (v, b)) in res.trajectory.values.iter().zip(&res.bound).enumerate() {
        csv_row(&mut csv, res.trajectory.time(j), [v[0], *b, b - v[0]]);
    }
    out.write("gronwall.csv", &csv, record)?;
    record.put("min_margin", res.min_margin);
    record.put("holds", res.holds);
    if !res.holds {
        record.fail(
            EXIT_CHECK_FAILED,
            format!("bound violated (min margin {})", res.min_margin),
        );
    }
    Ok(())
}

fn cmd_oracle(config: &Path, args: PicardArgs, out: &Output, record: &mut RunRecord) -> Result<(), CliError> {
    let spec = load(config, record)?;
    let gen = spec.generator();
    let f = &spec.nonlinearity;
    let oracle = match fourier_oracle_for(gen, f, spec.steps_m) {
        Ok(o) => o,
        Err(e @ perideval::Error::Resonance { mode, magnitude }) => {
            record.put("resonance_mode", mode);
            record.put("resonance_magnitude", magnitude);
            out.write_json(
                "oracle.json",
                &json!({
                    "label": spec.label,
                    "resonance": { "mode": mode, "magnitude": magnitude },
                }),
                record,
            )?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let opts = picard_options(&spec, args)?;
    let res = picard_solve(gen, f, spec.omega, spec.steps_m, opts)?;
    let scale = oracle.sup_norm();
    let diff = (res.solution.values() - oracle.values()).amax();
    let relative = if scale > 0.0 { diff / scale } else { diff };
    record.put("relative_discrepancy", relative);
    record.put("picard_converged", res.converged);
    out.write_json(
        "oracle.json",
        &json!({
            "label": spec.label,
            "steps_M": spec.steps_m,
            "oracle_sup_norm": scale,
            "absolute_discrepancy": diff,
            "relative_discrepancy": relative,
            "picard_iterations": res.iterations,
            "picard_converged": res.converged,
            "tolerance": ORACLE_TOLERANCE,
        }),
        record,
    )?;
    if !res.converged {
        record.fail(EXIT_CHECK_FAILED, "Picard iteration did not converge");
    }
    if !(relative <= ORACLE_TOLERANCE) {
        record.fail(
            EXIT_CHECK_FAILED,
            format!("relative discrepancy {relative:e} exceeds {ORACLE_TOLERANCE:e}"),
        );
    }
    Ok(())
}
