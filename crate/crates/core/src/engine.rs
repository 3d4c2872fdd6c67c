//! The outer proximal-ADMM loop: Jacobian primal updates against a frozen
//! snapshot, discounted dual update, Lyapunov bookkeeping and per-iteration
//! audits.

use rayon::prelude::*;

use crate::diagnostics::{self, discounted_sum_relative_error};
use crate::error::{AdmmError, Result};
use crate::linalg::{solve, Matrix};
use crate::params::{build_derived, validate_params, AlgoParams, DerivedConstants};
use crate::problem::{CoupledProblem, ProximalMatrix};
use crate::scalar::{self, Real};
use crate::subproblem::{default_init_step, projected_gradient_solve, SolverSettings, SubproblemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState<T> {
    /// `x^k`
    pub x: Vec<T>,
    /// `lambda^k`
    pub lambda: Vec<T>,
    /// `x^{k-1}`
    pub x_prev: Vec<T>,
    /// `lambda^{k-1}`
    pub lambda_prev: Vec<T>,
    /// `A x^k - b`
    pub residual: Vec<T>,
    pub iter: usize,
    /// Lyapunov value `T_c^k` attached to this state.
    pub tc: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    pub iter: usize,
    pub tc: T,
    pub al: T,
    pub reg_al: T,
    pub residual_norm: T,
    pub primal_step: T,
    pub dual_step: T,
    pub lambda_norm: T,
    /// Approximate-stationarity total at `(x^{k+1}, lambda^k + rho (A x^{k+1} - b))`.
    pub stationarity: T,
    pub sufficient_decrease_ok: bool,
    pub lambda_bound_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    LyapunovConverged,
    MaxIters,
    AuditFailure,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LyapunovConverged => "LyapunovConverged",
            Self::MaxIters => "MaxIters",
            Self::AuditFailure => "AuditFailure",
        }
    }
}

/// Dual iterate and the residual that produced it, kept when history is on.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRecord<T> {
    pub lambda: Vec<T>,
    pub residual: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<T> {
    pub final_state: IterateState<T>,
    pub trace: Vec<TraceRecord<T>>,
    pub stop_reason: StopReason,
    /// `lambda^K + rho (A x^K - b)`
    pub hat_lambda: Vec<T>,
    /// `(1 + tau) lambda^K`
    pub scaled_lambda: Vec<T>,
    /// `T_c^0`
    pub initial_tc: T,
    /// Set when the run started despite a failed parameter validation.
    pub forced: bool,
    /// Outer iterations in which at least one subproblem hit its inner cap.
    pub inner_cap_hits: usize,
    /// `history[k]` holds `lambda^k` and `A x^k - b`; present when requested.
    pub history: Option<Vec<DualRecord<T>>>,
    /// Worst relative gap between the recursive duals and the unrolled
    /// discounted sum at `k in {1, 10, 100, K}` (history runs only).
    pub dual_unroll_max_rel_err: Option<T>,
}

type Step<T> = (IterateState<T>, TraceRecord<T>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Concurrent subproblem solves; `0` or `1` runs them sequentially.
    pub workers: usize,
    /// Abort with `AuditFailure` on the first flagged audit.
    pub strict: bool,
    /// Run even when the parameter condition fails.
    pub force: bool,
    pub record_history: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            strict: false,
            force: false,
            record_history: false,
        }
    }
}

/// `F(x) + <lambda, A x - b> + rho/2 |A x - b|^2`
pub fn augmented_lagrangian<T: Real>(
    problem: &CoupledProblem<T>,
    params: &AlgoParams<T>,
    x: &[T],
    lambda: &[T],
) -> Result<T> {
    if lambda.len() != problem.m() {
        return Err(AdmmError::DimensionMismatch {
            what: "multiplier",
            expected: problem.m(),
            found: lambda.len(),
        });
    }
    let f = problem.objective(x)?;
    let r = problem.coupling_residual(x);
    let v = f + scalar::dot(lambda, &r) + T::lit(0.5) * params.rho * scalar::norm_sq(&r);
    if !v.is_finite() {
        return Err(AdmmError::NonFiniteValue("augmented Lagrangian"));
    }
    Ok(v)
}

/// Augmented Lagrangian minus `tau / (2 rho) |lambda|^2`.
pub fn regularized_al<T: Real>(
    problem: &CoupledProblem<T>,
    params: &AlgoParams<T>,
    x: &[T],
    lambda: &[T],
) -> Result<T> {
    let al = augmented_lagrangian(problem, params, x, lambda)?;
    Ok(al - params.tau / (T::lit(2.0) * params.rho) * scalar::norm_sq(lambda))
}

/// `T_c^{k+1} = L+(x^{k+1}, lambda^{k+1}) + c [ (1 - 2 tau^2)/(2 rho) |dlambda|^2
///  + 1/2 |x^{k+1} - x^k|^2_Q + L_g/2 |x^k - x^{k-1}|^2 ]`
///
/// `state_next` carries `(x^{k+1}, lambda^{k+1})`, `state` carries
/// `(x^k, lambda^k, x^{k-1})`.
pub fn lyapunov<T: Real>(
    problem: &CoupledProblem<T>,
    params: &AlgoParams<T>,
    derived: &DerivedConstants<T>,
    state_next: &IterateState<T>,
    state: &IterateState<T>,
) -> Result<T> {
    let two = T::lit(2.0);
    let reg = regularized_al(problem, params, &state_next.x, &state_next.lambda)?;
    let dl = scalar::dist_sq(&state_next.lambda, &state.lambda);
    let dx = scalar::sub(&state_next.x, &state.x);
    let dx_prev = scalar::dist_sq(&state.x, &state.x_prev);
    let tau = params.tau;
    let bracket = (T::one() - two * tau * tau) / (two * params.rho) * dl
        + derived.q.quad_form(&dx) / two
        + problem.lipschitz_g() / two * dx_prev;
    let v = reg + params.c * bracket;
    if !v.is_finite() {
        return Err(AdmmError::NonFiniteValue("Lyapunov function"));
    }
    Ok(v)
}

/// `lambda^{k+1} = (1 - tau) lambda^k + rho (A x^{k+1} - b)`
pub fn dual_update<T: Real>(params: &AlgoParams<T>, lambda: &[T], residual_next: &[T]) -> Vec<T> {
    let keep = T::one() - params.tau;
    lambda
        .iter()
        .zip(residual_next)
        .map(|(&l, &r)| keep * l + params.rho * r)
        .collect()
}

/// Approximate projection of `x0` onto `{A x = b} ∩ X` by alternating
/// projections (affine set, then box). Returns the box-feasible final point.
pub fn feasible_start<T: Real>(problem: &CoupledProblem<T>, x0: &[T], rounds: usize) -> Result<Vec<T>> {
    let a = problem.coupling_matrix();
    let aat = a.transpose().gram();
    let mut x = problem.bounds().project(x0);
    if problem.m() == 0 {
        return Ok(x);
    }
    for _ in 0..rounds {
        let r = problem.coupling_residual(&x);
        let y = solve(&aat, &r)?;
        let corr = a.tr_mul_vec(&y);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi = *xi - *ci;
        }
        problem.bounds().project_in_place(&mut x);
    }
    Ok(x)
}

/// Everything fixed for the duration of a run.
pub struct Engine<'a, T: Real> {
    problem: &'a CoupledProblem<T>,
    params: AlgoParams<T>,
    derived: DerivedConstants<T>,
    settings: SolverSettings<T>,
    options: RunOptions,
    prox_grams: Vec<Option<Matrix<T>>>,
    init_steps: Vec<T>,
    lambda_bound: T,
    pool: Option<rayon::ThreadPool>,
}

impl<'a, T: Real> Engine<'a, T> {
    pub fn new(
        problem: &'a CoupledProblem<T>,
        params: AlgoParams<T>,
        settings: SolverSettings<T>,
        options: RunOptions,
    ) -> Result<Self> {
        settings.check()?;
        let derived = build_derived(problem, &params)?;
        let prox_grams = problem
            .agents()
            .iter()
            .map(|a| match a.proximal() {
                ProximalMatrix::Identity => None,
                ProximalMatrix::Dense(b) => Some(b.gram()),
            })
            .collect();
        let init_steps = problem
            .agents()
            .iter()
            .map(|a| match settings.init_step {
                Some(s) => Ok(s),
                None => default_init_step(a, params.rho, params.beta),
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = if options.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.workers)
                    .build()
                    .map_err(|e| AdmmError::InvalidParams(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            problem,
            params,
            derived,
            settings,
            options,
            prox_grams,
            init_steps,
            lambda_bound: T::infinity(),
            pool,
        })
    }

    pub fn derived(&self) -> &DerivedConstants<T> {
        &self.derived
    }

    pub fn params(&self) -> &AlgoParams<T> {
        &self.params
    }

    /// Initial state with `x^{-1} = x^0`, `lambda^{-1} = lambda^0`, so
    /// `T_c^0 = L+(x^0, lambda^0)`.
    pub fn initial_state(&self, x0: &[T], lambda0: &[T]) -> Result<IterateState<T>> {
        if x0.len() != self.problem.n() {
            return Err(AdmmError::DimensionMismatch {
                what: "x0",
                expected: self.problem.n(),
                found: x0.len(),
            });
        }
        if lambda0.len() != self.problem.m() {
            return Err(AdmmError::DimensionMismatch {
                what: "lambda0",
                expected: self.problem.m(),
                found: lambda0.len(),
            });
        }
        let x = self.problem.bounds().project(x0);
        let tc = regularized_al(self.problem, &self.params, &x, lambda0)?;
        Ok(IterateState {
            residual: self.problem.coupling_residual(&x),
            x_prev: x.clone(),
            x,
            lambda: lambda0.to_vec(),
            lambda_prev: lambda0.to_vec(),
            iter: 0,
            tc,
        })
    }

    /// Solves every agent subproblem against the snapshot in `state`.
    /// Returns the new stacked primal point and whether any inner solve hit
    /// its cap.
    pub fn primal_update(&self, state: &IterateState<T>) -> Result<(Vec<T>, bool)> {
        let (_, grad_g) = self.problem.composite_eval(&state.x)?;
        let solve_agent = |i: usize| -> Result<(Vec<T>, bool)> {
            let agent = self.problem.agent(i);
            let range = self.problem.block_range(i);
            let x_block = &state.x[range.clone()];
            let own = agent.coupling().mul_vec(x_block);
            let partial: Vec<T> = state.residual.iter().zip(&own).map(|(&r, &o)| r - o).collect();
            let spec = SubproblemSpec {
                agent_index: i,
                agent,
                x_block,
                lambda: &state.lambda,
                grad_g_i: &grad_g[range],
                partial_residual: partial,
                rho: self.params.rho,
                beta: self.params.beta,
                prox_gram: self.prox_grams[i].as_ref(),
            };
            let settings = SolverSettings {
                init_step: Some(self.init_steps[i]),
                ..self.settings
            };
            let out = projected_gradient_solve(&spec, agent.bounds(), x_block, &settings)?;
            Ok((out.x, !out.converged))
        };
        let n_agents = self.problem.num_agents();
        let blocks: Vec<Result<(Vec<T>, bool)>> = match &self.pool {
            Some(pool) => pool.install(|| (0..n_agents).into_par_iter().map(solve_agent).collect()),
            None => (0..n_agents).map(solve_agent).collect(),
        };
        let mut x_next = Vec::with_capacity(self.problem.n());
        let mut capped = false;
        for b in blocks {
            let (xb, c) = b?;
            x_next.extend(xb);
            capped |= c;
        }
        Ok((x_next, capped))
    }

    /// One full outer iteration.
    pub fn iterate(&self, state: &IterateState<T>) -> Result<(IterateState<T>, TraceRecord<T>)> {
        Ok(self.iterate_inner(state)?.0)
    }

    /// Also reports whether any inner solve hit its iteration cap.
    fn iterate_inner(&self, state: &IterateState<T>) -> Result<(Step<T>, bool)> {
        let (x_next, capped) = self.primal_update(state)?;
        let residual_next = self.problem.coupling_residual(&x_next);
        let lambda_next = dual_update(&self.params, &state.lambda, &residual_next);
        let mut next = IterateState {
            x: x_next,
            lambda: lambda_next,
            x_prev: state.x.clone(),
            lambda_prev: state.lambda.clone(),
            residual: residual_next,
            iter: state.iter + 1,
            tc: T::zero(),
        };
        next.tc = lyapunov(self.problem, &self.params, &self.derived, &next, state)?;

        let primal_sq = scalar::dist_sq(&next.x, &state.x);
        let dual_sq = scalar::dist_sq(&next.lambda, &state.lambda);
        let slack = T::lit(100.0) * self.settings.grad_tol * (T::one() + state.tc.abs());
        let allowed = -self.derived.a_x_mineig * primal_sq - self.derived.a_lambda * dual_sq + slack;
        let hat: Vec<T> = state
            .lambda
            .iter()
            .zip(&next.residual)
            .map(|(&l, &r)| l + self.params.rho * r)
            .collect();
        let stationarity = diagnostics::stationarity_measure(self.problem, &next.x, &hat)?.total;
        let lambda_norm = scalar::norm(&next.lambda);
        let al = augmented_lagrangian(self.problem, &self.params, &next.x, &next.lambda)?;
        let record = TraceRecord {
            iter: next.iter,
            tc: next.tc,
            al,
            reg_al: al - self.params.tau / (T::lit(2.0) * self.params.rho) * scalar::norm_sq(&next.lambda),
            residual_norm: scalar::norm(&next.residual),
            primal_step: primal_sq.sqrt(),
            dual_step: dual_sq.sqrt(),
            lambda_norm,
            stationarity,
            // the decrease inequality needs x^{k-1}, so the first step is not audited
            sufficient_decrease_ok: state.iter == 0 || next.tc - state.tc <= allowed,
            lambda_bound_ok: lambda_norm <= self.lambda_bound,
        };
        Ok(((next, record), capped))
    }

    /// Runs until `|T_c^{k+1} - T_c^k| <= epsilon` or `max_iters`.
    pub fn run(&mut self, x0: &[T], lambda0: &[T]) -> Result<RunResult<T>> {
        let report = validate_params(self.problem, &self.params)?;
        if !report.passes && !self.options.force {
            return Err(AdmmError::InvalidParams(report.messages.join("; ")));
        }
        self.lambda_bound = if self.params.tau > T::zero() {
            scalar::norm(lambda0) + self.params.rho * self.problem.residual_upper_bound() / self.params.tau
        } else {
            T::infinity()
        };

        let mut state = self.initial_state(x0, lambda0)?;
        let initial_tc = state.tc;
        let mut trace = Vec::new();
        let mut history = self.options.record_history.then(|| {
            vec![DualRecord {
                lambda: state.lambda.clone(),
                residual: state.residual.clone(),
            }]
        });
        let mut inner_cap_hits = 0;
        let mut stop = StopReason::MaxIters;
        for _ in 0..self.params.max_iters {
            let ((next, record), capped) = self.iterate_inner(&state)?;
            inner_cap_hits += usize::from(capped);
            let delta = (next.tc - state.tc).abs();
            let audit_failed = !(record.sufficient_decrease_ok && record.lambda_bound_ok);
            if let Some(h) = history.as_mut() {
                h.push(DualRecord {
                    lambda: next.lambda.clone(),
                    residual: next.residual.clone(),
                });
            }
            trace.push(record);
            state = next;
            if self.options.strict && audit_failed {
                stop = StopReason::AuditFailure;
                break;
            }
            if delta <= self.params.epsilon {
                stop = StopReason::LyapunovConverged;
                break;
            }
        }

        let dual_unroll_max_rel_err = history.as_ref().map(|h| {
            let last = h.len() - 1;
            [1usize, 10, 100, last]
                .into_iter()
                .filter(|&k| k >= 1 && k <= last)
                .map(|k| discounted_sum_relative_error(h, &self.params, k))
                .fold(T::zero(), T::max)
        });
        let hat_lambda = state
            .lambda
            .iter()
            .zip(&state.residual)
            .map(|(&l, &r)| l + self.params.rho * r)
            .collect();
        let scaled_lambda = state.lambda.iter().map(|&l| (T::one() + self.params.tau) * l).collect();
        Ok(RunResult {
            final_state: state,
            trace,
            stop_reason: stop,
            hat_lambda,
            scaled_lambda,
            initial_tc,
            forced: !report.passes,
            inner_cap_hits,
            history,
            dual_unroll_max_rel_err,
        })
    }
}

/// Convenience wrapper: builds an [`Engine`] and runs it.
pub fn run<T: Real>(
    problem: &CoupledProblem<T>,
    params: AlgoParams<T>,
    settings: SolverSettings<T>,
    options: RunOptions,
    x0: &[T],
    lambda0: &[T],
) -> Result<RunResult<T>> {
    Engine::new(problem, params, settings, options)?.run(x0, lambda0)
}
