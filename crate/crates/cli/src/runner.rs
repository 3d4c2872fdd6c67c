use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use prox_admm::diagnostics::{default_slack, monotonicity_violations};
use prox_admm::engine;
use prox_admm::instances::{
    hvac_initial_point, make_hvac, make_random_instance_with, p1, p1_start, suggested_params, RandomSpec, P1_EPSILON,
    P1_MAX_ITERS,
};
use prox_admm::oracle::{constrained_grid_search, multistart_penalty_solve};
use prox_admm::params::build_derived;
use prox_admm::{
    stationarity_measure, sufficient_decrease_audit, validate_params, AdmmError, AlgoParams, CoupledProblem,
    OracleResult, RunOptions, RunResult, StopReason, TraceRecord, ValidationReport,
};
use thiserror::Error;

use crate::config::{ExperimentConfig, HvacScale, InstanceKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Solver(#[from] AdmmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Instance(String),
}

pub const TRACE_HEADER: &str = "iter,Tc,AL,regAL,residual_norm,primal_step,dual_step,lambda_norm,stationarity,sufficient_decrease_ok,lambda_bound_ok";

/// Problem, parameters and starting point resolved from a config.
pub struct Setup {
    pub problem: CoupledProblem<f64>,
    pub params: AlgoParams<f64>,
    pub x0: Vec<f64>,
    pub lambda0: Vec<f64>,
    /// `key=value` for parameters not given explicitly
    pub defaults: Vec<String>,
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let o = cfg.params;
    let mut defaults = Vec::new();
    let (problem, base, x0, lambda0) = match cfg.instance {
        InstanceKind::P1 => {
            let (problem, presets) = p1::<f64>();
            let preset = presets
                .into_iter()
                .find(|p| p.name == cfg.preset)
                .ok_or_else(|| CliError::Instance(format!("unknown preset {}", cfg.preset)))?;
            let mut s = preset.params;
            s.epsilon = P1_EPSILON;
            s.max_iters = P1_MAX_ITERS;
            let (x0, l0) = p1_start::<f64>();
            (problem, s, x0, l0)
        }
        InstanceKind::Hvac => {
            let hp = cfg.hvac_params().map_err(CliError::Instance)?;
            if cfg.hvac.scale == Some(HvacScale::Full) {
                eprintln!(
                    "warning: full-size building ({} zones, {} slots) can take a long time",
                    hp.zones, hp.horizon
                );
            }
            let problem = make_hvac::<f64>(&hp)?;
            let s = suggested_params(&problem, o.rho_factor.unwrap_or(4.0), 1e-8, 400)?;
            let x0 = hvac_initial_point::<f64>(&hp);
            let m = problem.m();
            (problem, s, x0, vec![0.0; m])
        }
        InstanceKind::Random => {
            let r = cfg.random;
            let problem = make_random_instance_with::<f64>(RandomSpec {
                n_agents: r.n_agents,
                dims: r.dims,
                m_rows: r.m_rows,
                seed: cfg.seed,
                convex: r.convex,
                coupling_weight: r.coupling_weight,
            })?;
            let s = suggested_params(&problem, o.rho_factor.unwrap_or(4.0), 1e-10, 3000)?;
            let x0 = problem.bounds().midpoint();
            let m = problem.m();
            (problem, s, x0, vec![0.0; m])
        }
    };
    let mut pick = |key: &str, given: Option<f64>, base: f64| {
        given.unwrap_or_else(|| {
            defaults.push(format!("{key}={}", real(base)));
            base
        })
    };
    let rho = pick("rho", o.rho, base.rho);
    let tau = pick("tau", o.tau, base.tau);
    let beta = pick("beta", o.beta, base.beta);
    let c = pick("c", o.c, base.c);
    let epsilon = pick("epsilon", o.epsilon, base.epsilon);
    let max_iters = o.max_iters.unwrap_or_else(|| {
        defaults.push(format!("max_iters={}", base.max_iters));
        base.max_iters
    });
    let params = AlgoParams::new(rho, tau, beta, c, epsilon, max_iters)?;
    Ok(Setup {
        problem,
        params,
        x0,
        lambda0,
        defaults,
    })
}

/// 17 significant digits, enough to round-trip any `f64`.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn reals(v: &[f64]) -> String {
    v.iter().map(|&x| real(x)).collect::<Vec<_>>().join(",")
}

pub fn trace_csv(trace: &[TraceRecord<f64>]) -> String {
    let mut s = String::with_capacity(64 + trace.len() * 220);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            real(r.tc),
            real(r.al),
            real(r.reg_al),
            real(r.residual_norm),
            real(r.primal_step),
            real(r.dual_step),
            real(r.lambda_norm),
            real(r.stationarity),
            r.sufficient_decrease_ok,
            r.lambda_bound_ok
        );
    }
    s
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

/// What a finished run produced; `exit_code` follows the documented scheme.
pub struct Outcome {
    pub result: RunResult<f64>,
    pub exit_code: i32,
    pub summary: String,
}

pub fn exit_code(stop: StopReason) -> i32 {
    match stop {
        StopReason::LyapunovConverged => 0,
        StopReason::MaxIters => 2,
        StopReason::AuditFailure => 3,
    }
}

fn validation_lines(out: &mut String, v: &ValidationReport<f64>) {
    let _ = writeln!(out, "validation.passes={}", v.passes);
    let _ = writeln!(out, "validation.q_min_eig={}", real(v.q_min_eig));
    let _ = writeln!(out, "validation.ax_min_eig={}", real(v.ax_min_eig));
    let _ = writeln!(out, "validation.a_lambda={}", real(v.a_lambda));
    let _ = writeln!(out, "validation.c_min={}", real(v.c_min));
    for m in &v.messages {
        let _ = writeln!(out, "validation.message={m}");
    }
}

/// Runs the engine and writes `trace.csv` and `summary.txt` into the
/// configured output directory.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let setup = build_setup(cfg)?;
    let validation = validate_params(&setup.problem, &setup.params)?;
    let options = RunOptions {
        workers: cfg.workers,
        strict: cfg.strict_audits,
        force: cfg.force,
        record_history: false,
    };
    let started = Instant::now();
    let result = engine::run(
        &setup.problem,
        setup.params,
        cfg.settings,
        options,
        &setup.x0,
        &setup.lambda0,
    )?;
    let wall = started.elapsed().as_secs_f64();

    let st = &result.final_state;
    let report =
        stationarity_measure(&setup.problem, &st.x, &result.scaled_lambda)?.with_certificate(&setup.params, &st.lambda);
    let derived = build_derived(&setup.problem, &setup.params)?;
    let slack = default_slack(cfg.settings.grad_tol);
    let audit = sufficient_decrease_audit(&result.trace, &derived, None, &slack);
    let mono = monotonicity_violations(&result.trace, &slack);
    let code = exit_code(result.stop_reason);

    let mut s = String::new();
    let _ = writeln!(s, "instance={}", cfg.instance.as_str());
    if cfg.instance == InstanceKind::P1 {
        let _ = writeln!(s, "preset={}", cfg.preset);
    }
    let _ = writeln!(s, "seed={}", cfg.seed);
    for d in cfg.defaults_applied.iter().chain(&setup.defaults) {
        let _ = writeln!(s, "default.{d}");
    }
    let p = &setup.params;
    let _ = writeln!(s, "params.rho={}", real(p.rho));
    let _ = writeln!(s, "params.tau={}", real(p.tau));
    let _ = writeln!(s, "params.beta={}", real(p.beta));
    let _ = writeln!(s, "params.c={}", real(p.c));
    let _ = writeln!(s, "params.epsilon={}", real(p.epsilon));
    let _ = writeln!(s, "params.max_iters={}", p.max_iters);
    validation_lines(&mut s, &validation);
    let _ = writeln!(s, "forced={}", result.forced);
    let _ = writeln!(s, "stop_reason={}", result.stop_reason.as_str());
    let _ = writeln!(s, "exit_code={code}");
    let _ = writeln!(s, "iterations={}", result.trace.len());
    let _ = writeln!(s, "inner_cap_hits={}", result.inner_cap_hits);
    let _ = writeln!(s, "initial_tc={}", real(result.initial_tc));
    let _ = writeln!(s, "final_tc={}", real(st.tc));
    let _ = writeln!(s, "objective={}", real(setup.problem.objective(&st.x)?));
    let _ = writeln!(s, "x={}", reals(&st.x));
    let _ = writeln!(s, "lambda={}", reals(&st.lambda));
    let _ = writeln!(s, "lambda_hat={}", reals(&result.hat_lambda));
    let _ = writeln!(s, "lambda_scaled={}", reals(&result.scaled_lambda));
    let _ = writeln!(s, "stationarity.kkt_distance={}", real(report.kkt_distance));
    let _ = writeln!(s, "stationarity.residual_norm={}", real(report.residual_norm));
    let _ = writeln!(s, "stationarity.total={}", real(report.total));
    let _ = writeln!(
        s,
        "stationarity.certified_eps={}",
        real(report.certified_eps.unwrap_or(f64::NAN))
    );
    let _ = writeln!(s, "audit.sufficient_decrease_violations={}", audit.len());
    let _ = writeln!(s, "audit.monotonicity_violations={}", mono.len());
    let _ = writeln!(
        s,
        "audit.lambda_bound_ok={}",
        result.trace.iter().all(|r| r.lambda_bound_ok)
    );
    let _ = writeln!(s, "wall_time_s={wall:.6}");

    fs::create_dir_all(&cfg.output_dir).map_err(|source| CliError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    write(&cfg.output_dir, "trace.csv", &trace_csv(&result.trace))?;
    write(&cfg.output_dir, "summary.txt", &s)?;
    Ok(Outcome {
        result,
        exit_code: code,
        summary: s,
    })
}

/// [`execute`] mapped to a process exit code; errors print to stderr and
/// give `1`.
pub fn run_experiment(cfg: &ExperimentConfig) -> i32 {
    match execute(cfg) {
        Ok(o) => o.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Prints the parameter check; exit `0` when it passes, `4` otherwise.
pub fn validate(cfg: &ExperimentConfig) -> Result<(String, i32), CliError> {
    let setup = build_setup(cfg)?;
    let v = validate_params(&setup.problem, &setup.params)?;
    let mut s = String::new();
    validation_lines(&mut s, &v);
    Ok((s, if v.passes { 0 } else { 4 }))
}

/// Grid search when the feasible set reduces to at most three free
/// coordinates, otherwise multistart penalized descent.
pub fn oracle(cfg: &ExperimentConfig) -> Result<OracleResult<f64>, CliError> {
    let setup = build_setup(cfg)?;
    let o = cfg.oracle;
    match constrained_grid_search(&setup.problem, o.resolution) {
        Err(AdmmError::DimensionTooLarge(_)) => {
            Ok(multistart_penalty_solve(&setup.problem, o.penalty, o.starts, cfg.seed)?)
        }
        r => Ok(r?),
    }
}

pub fn oracle_text(r: &OracleResult<f64>) -> String {
    format!(
        "method={:?}\nvalue={}\nevaluations={}\nx={}\n",
        r.method,
        real(r.value),
        r.evaluations,
        reals(&r.x_best)
    )
}
