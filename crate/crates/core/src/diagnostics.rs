//! Certificates checked after (or during) a run: approximate stationarity,
//! the multiplier bound, the Lyapunov decrease, and distance to a reference.

use crate::engine::{DualRecord, TraceRecord};
use crate::error::{AdmmError, Result};
use crate::params::{AlgoParams, DerivedConstants};
use crate::problem::CoupledProblem;
use crate::scalar::{self, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport<T> {
    /// `dist(grad f + grad g + A^T mu + N_X(x), 0)`
    pub kkt_distance: T,
    pub residual_norm: T,
    /// `kkt_distance + residual_norm`
    pub total: T,
    /// `tau / rho * |lambda|` when a limit multiplier was supplied.
    pub certified_eps: Option<T>,
}

impl<T: Real> StationarityReport<T> {
    pub fn with_certificate(mut self, params: &AlgoParams<T>, lambda: &[T]) -> Self {
        self.certified_eps = Some(certified_epsilon(params, lambda));
        self
    }
}

pub fn certified_epsilon<T: Real>(params: &AlgoParams<T>, lambda: &[T]) -> T {
    params.tau / params.rho * scalar::norm(lambda)
}

/// Distance of `grad F(x) + A^T multiplier` to the negated box normal cone,
/// plus the coupling residual. A coordinate counts as active when it lies
/// within `1e-9 (1 + u_j - l_j)` of a bound.
pub fn stationarity_measure<T: Real>(
    problem: &CoupledProblem<T>,
    x: &[T],
    multiplier: &[T],
) -> Result<StationarityReport<T>> {
    if multiplier.len() != problem.m() {
        return Err(AdmmError::DimensionMismatch {
            what: "multiplier",
            expected: problem.m(),
            found: multiplier.len(),
        });
    }
    let bounds = problem.bounds();
    if let Some(j) = x
        .iter()
        .zip(bounds.lower().iter().zip(bounds.upper()))
        .position(|(&v, (&l, &u))| v < l || v > u)
    {
        return Err(AdmmError::InfeasiblePoint(j));
    }
    let (_, grad) = problem.total_eval(x)?;
    let at = problem.coupling_matrix().tr_mul_vec(multiplier);
    let mut acc = T::zero();
    for j in 0..x.len() {
        let v = grad[j] + at[j];
        let (l, u) = (bounds.lower()[j], bounds.upper()[j]);
        let tol = T::attainable_tol(1e-9) * (T::one() + (u - l));
        let at_lower = x[j] - l <= tol;
        let at_upper = u - x[j] <= tol;
        let contrib = match (at_lower, at_upper) {
            (true, true) => T::zero(),
            (true, false) => (-v).max(T::zero()),
            (false, true) => v.max(T::zero()),
            (false, false) => v.abs(),
        };
        acc = acc + contrib * contrib;
    }
    let kkt = acc.sqrt();
    let residual_norm = scalar::norm(&problem.coupling_residual(x));
    Ok(StationarityReport {
        kkt_distance: kkt,
        residual_norm,
        total: kkt + residual_norm,
        certified_eps: None,
    })
}

/// True iff every record satisfies `|lambda^k| <= |lambda^0| + rho * delta / tau`.
pub fn lambda_bound_check<T: Real>(
    trace: &[TraceRecord<T>],
    params: &AlgoParams<T>,
    delta_max_bound: T,
    lambda0_norm: T,
) -> bool {
    let bound = lambda0_norm + params.rho * delta_max_bound / params.tau;
    trace.iter().all(|r| r.lambda_norm <= bound)
}

/// Default audit slack `100 * grad_tol * (1 + |T_c^k|)`.
pub fn default_slack<T: Real>(grad_tol: T) -> impl Fn(usize, T) -> T {
    move |_k, tc| T::lit(100.0) * grad_tol * (T::one() + tc.abs())
}

/// Iterations `k + 1` where
/// `T_c^{k+1} - T_c^k > -a_x |dx|^2 - a_lambda |dlambda|^2 + slack(k, T_c^k)`.
/// `initial_tc`, when given, lets the first record be audited against `T_c^0`.
pub fn sufficient_decrease_audit<T: Real>(
    trace: &[TraceRecord<T>],
    derived: &DerivedConstants<T>,
    initial_tc: Option<T>,
    slack_fn: impl Fn(usize, T) -> T,
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = initial_tc;
    for r in trace {
        if let Some(p) = prev {
            let allowed = -derived.a_x_mineig * r.primal_step * r.primal_step
                - derived.a_lambda * r.dual_step * r.dual_step
                + slack_fn(r.iter - 1, p);
            if r.tc - p > allowed {
                out.push(r.iter);
            }
        }
        prev = Some(r.tc);
    }
    out
}

/// Iterations where `T_c^{k+1} > T_c^k + slack(k, T_c^k)`, comparing
/// consecutive trace records.
pub fn monotonicity_violations<T: Real>(trace: &[TraceRecord<T>], slack_fn: impl Fn(usize, T) -> T) -> Vec<usize> {
    trace
        .windows(2)
        .filter(|w| w[1].tc > w[0].tc + slack_fn(w[0].iter, w[0].tc))
        .map(|w| w[1].iter)
        .collect()
}

/// `|x_hat - x_ref| / |x_ref|`.
pub fn suboptimality<T: Real>(x_hat: &[T], x_ref: &[T]) -> Result<T> {
    let d = scalar::dist(x_hat, x_ref);
    let r = scalar::norm(x_ref);
    if r == T::zero() {
        return Err(AdmmError::ZeroReference {
            absolute: d.to_f64_lossy(),
        });
    }
    Ok(d / r)
}

/// Relative gap at iteration `k` between the recursive dual iterate and
/// `(1 - tau)^k lambda^0 + sum_{l=1}^{k} (1 - tau)^{k-l} rho (A x^l - b)`,
/// normalised by the summed magnitudes of the terms.
pub fn discounted_sum_relative_error<T: Real>(history: &[DualRecord<T>], params: &AlgoParams<T>, k: usize) -> T {
    let keep = T::one() - params.tau;
    let mut unrolled: Vec<T> = history[0].lambda.iter().map(|&l| keep.powi(k as i32) * l).collect();
    let mut scale = keep.powi(k as i32) * scalar::norm(&history[0].lambda);
    for (l, rec) in history.iter().enumerate().take(k + 1).skip(1) {
        let w = keep.powi((k - l) as i32) * params.rho;
        for (u, &r) in unrolled.iter_mut().zip(&rec.residual) {
            *u = *u + w * r;
        }
        scale = scale + w * scalar::norm(&rec.residual);
    }
    let gap = scalar::dist(&unrolled, &history[k].lambda);
    if scale == T::zero() {
        gap
    } else {
        gap / scale
    }
}

/// Finite lower bound for every `T_c^k` (with `Q` positive semidefinite):
/// `min_X F - (tau/(2 rho) + (1 - tau)^2/(4 rho)) B^2`, where
/// `B = |lambda^0| + rho delta / tau` bounds every multiplier.
pub fn lyapunov_lower_certificate<T: Real>(
    params: &AlgoParams<T>,
    min_f_lower: T,
    lambda0_norm: T,
    delta_max_bound: T,
) -> T {
    let two = T::lit(2.0);
    let b = lambda0_norm + params.rho * delta_max_bound / params.tau;
    let keep = T::one() - params.tau;
    min_f_lower - (params.tau / (two * params.rho) + keep * keep / (two * two * params.rho)) * b * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::p1;

    fn rec(iter: usize, tc: f64, lambda_norm: f64) -> TraceRecord<f64> {
        TraceRecord {
            iter,
            tc,
            al: tc,
            reg_al: tc,
            residual_norm: 0.0,
            primal_step: 0.1,
            dual_step: 0.1,
            lambda_norm,
            stationarity: 0.0,
            sufficient_decrease_ok: true,
            lambda_bound_ok: true,
        }
    }

    #[test]
    fn stationarity_zero_field_and_active_bounds() {
        let (problem, _) = p1::<f64>();
        // interior point, multiplier cancelling grad F exactly: grad_i F = 0.3t^2 + 0.1t
        let t = 0.5;
        let mu = -(0.3 * t * t + 0.1 * t);
        let r = stationarity_measure(&problem, &[t, t], &[mu]).unwrap();
        assert!(r.kkt_distance.abs() < 1e-15);
        assert_eq!(r.total, r.residual_norm);

        // x_1 at its lower bound with v_1 > 0 contributes nothing
        let x = [-1.0, 0.3];
        let (_, g) = problem.total_eval(&x).unwrap();
        let mu = -g[1];
        let r = stationarity_measure(&problem, &x, &[mu]).unwrap();
        assert!(g[0] + mu > 0.0);
        assert!(r.kkt_distance.abs() < 1e-15);
    }

    #[test]
    fn stationarity_rejects_out_of_box() {
        let (problem, _) = p1::<f64>();
        assert_eq!(
            stationarity_measure(&problem, &[1.5, 0.0], &[0.0]),
            Err(AdmmError::InfeasiblePoint(0))
        );
    }

    #[test]
    fn multiplier_scan_matches_measure_minimum() {
        let (problem, _) = p1::<f64>();
        let mut best = (f64::INFINITY, 0.0);
        let steps = 400_000;
        for k in 0..=steps {
            let mu = -2.0 + 4.0 * k as f64 / steps as f64;
            let r = stationarity_measure(&problem, &[0.5, 0.5], &[mu]).unwrap();
            if r.kkt_distance < best.0 {
                best = (r.kkt_distance, mu);
            }
        }
        // each interior coordinate contributes |0.125 + mu|
        assert!((best.1 + 0.125).abs() <= 1e-5);
        assert!(best.0 <= 2f64.sqrt() * 1e-5);
    }

    #[test]
    fn lambda_bound_detection() {
        let (_, presets) = p1::<f64>();
        let s1 = presets[0].params;
        let trace = vec![rec(1, 0.0, 10.0), rec(2, 0.0, 299.0)];
        assert!(lambda_bound_check(&trace, &s1, 3.0, 0.0));
        let trace = vec![rec(1, 0.0, 10.0), rec(2, 0.0, 301.0)];
        assert!(!lambda_bound_check(&trace, &s1, 3.0, 0.0));
    }

    #[test]
    fn decrease_audit_flags_ascent() {
        let (problem, presets) = p1::<f64>();
        let d = crate::params::build_derived(&problem, &presets[0].params).unwrap();
        let trace = vec![rec(1, 5.0, 0.0), rec(2, 3.0, 0.0), rec(3, 1.0, 0.0)];
        assert!(sufficient_decrease_audit(&trace, &d, None, default_slack(1e-9)).is_empty());
        let trace = vec![rec(1, 5.0, 0.0), rec(2, 6.0, 0.0), rec(3, 1.0, 0.0)];
        assert_eq!(
            sufficient_decrease_audit(&trace, &d, None, default_slack(1e-9)),
            vec![2]
        );
        assert_eq!(monotonicity_violations(&trace, default_slack(1e-9)), vec![2]);
    }

    #[test]
    fn suboptimality_examples() {
        let star = [0.5, 0.5];
        assert_eq!(suboptimality(&star, &star).unwrap(), 0.0);
        let s: f64 = suboptimality(&[0.4997, 0.4997], &star).unwrap();
        assert!((s - 6.0e-4).abs() < 1e-9);
        let s: f64 = suboptimality(&[0.4994, 0.4994], &star).unwrap();
        assert!((s - 1.2e-3).abs() < 1e-9);
        assert!(matches!(
            suboptimality(&[1.0, 0.0], &[0.0, 0.0]),
            Err(AdmmError::ZeroReference { absolute }) if absolute == 1.0
        ));
    }
}
