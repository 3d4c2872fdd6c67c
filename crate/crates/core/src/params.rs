//! Algorithm parameters, the matrix constants of the convergence analysis,
//! and the pre-run check of the parameter condition.

use crate::error::{AdmmError, Result};
use crate::linalg::{min_eigenvalue_symmetric, Matrix};
use crate::problem::CoupledProblem;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgoParams<T> {
    /// Penalty `rho > 0`.
    pub rho: T,
    /// Dual discount `tau in [0, 1)`; `0` recovers classic ADMM.
    pub tau: T,
    /// Proximal weight `beta >= 0`.
    pub beta: T,
    /// Lyapunov weight `c`.
    pub c: T,
    /// Stopping threshold on successive Lyapunov values.
    pub epsilon: T,
    pub max_iters: usize,
}

impl<T: Real> AlgoParams<T> {
    pub fn new(rho: T, tau: T, beta: T, c: T, epsilon: T, max_iters: usize) -> Result<Self> {
        let p = Self {
            rho,
            tau,
            beta,
            c,
            epsilon,
            max_iters,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(AdmmError::InvalidParams(msg));
        if !(self.rho > T::zero() && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.tau >= T::zero() && self.tau < T::one()) {
            return bad(format!("tau must lie in [0, 1), got {}", self.tau));
        }
        if !(self.beta >= T::zero() && self.beta.is_finite()) {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.c >= T::zero() && self.c.is_finite()) {
            return bad(format!("c must be nonnegative, got {}", self.c));
        }
        if !(self.epsilon > T::zero()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        Ok(())
    }

    /// `(2c tau (1 + tau) - (2 - tau)) / (2 rho)`
    pub fn a_lambda(&self) -> T {
        let two = T::lit(2.0);
        (two * self.c * self.tau * (T::one() + self.tau) - (two - self.tau)) / (two * self.rho)
    }

    /// `(2 - tau) / (2 tau (1 + tau))`; infinite at `tau = 0`.
    pub fn c_min(&self) -> T {
        c_min(self.tau)
    }
}

pub fn c_min<T: Real>(tau: T) -> T {
    let two = T::lit(2.0);
    if tau <= T::zero() {
        return T::infinity();
    }
    (two - tau) / (two * tau * (T::one() + tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants<T> {
    /// `L_f + L_g`
    pub rho_f: T,
    /// `diag(A_i^T A_i)`
    pub g_a: Matrix<T>,
    /// `diag(B_i^T B_i)`
    pub g_b: Matrix<T>,
    /// `A^T A`
    pub ata: Matrix<T>,
    /// `rho G_A + beta G_B - rho A^T A`, symmetrized.
    pub q: Matrix<T>,
    /// Smallest eigenvalue of
    /// `(2 rho G_A + 2 beta G_B - rho A^T A - (2c + 1) rho_F I) / 2`.
    pub a_x_mineig: T,
    pub a_lambda: T,
    pub c_min: T,
}

impl<T: Real> DerivedConstants<T> {
    /// The matrix whose smallest eigenvalue is `a_x_mineig`.
    pub fn a_x_matrix(&self, params: &AlgoParams<T>) -> Matrix<T> {
        let two = T::lit(2.0);
        let mut m = self
            .g_a
            .scaled(two * params.rho)
            .add(&self.g_b.scaled(two * params.beta))
            .sub(&self.ata.scaled(params.rho));
        m.add_diagonal(-(two * params.c + T::one()) * self.rho_f);
        let mut m = m.scaled(T::lit(0.5));
        m.symmetrize();
        m
    }
}

pub fn build_derived<T: Real>(problem: &CoupledProblem<T>, params: &AlgoParams<T>) -> Result<DerivedConstants<T>> {
    params.check()?;
    let ga_blocks: Vec<Matrix<T>> = problem.agents().iter().map(|a| a.coupling().gram()).collect();
    let gb_blocks: Vec<Matrix<T>> = problem.agents().iter().map(|a| a.proximal().gram(a.dim())).collect();
    let g_a = Matrix::block_diag(&ga_blocks);
    let g_b = Matrix::block_diag(&gb_blocks);
    let ata = problem.coupling_matrix().gram();
    if g_a.rows() != problem.n() || ata.rows() != problem.n() {
        return Err(AdmmError::DimensionMismatch {
            what: "derived matrices",
            expected: problem.n(),
            found: g_a.rows(),
        });
    }
    let mut q = g_a
        .scaled(params.rho)
        .add(&g_b.scaled(params.beta))
        .sub(&ata.scaled(params.rho));
    q.symmetrize();
    let mut derived = DerivedConstants {
        rho_f: problem.lipschitz_f() + problem.lipschitz_g(),
        g_a,
        g_b,
        ata,
        q,
        a_x_mineig: T::zero(),
        a_lambda: params.a_lambda(),
        c_min: params.c_min(),
    };
    derived.a_x_mineig = min_eigenvalue_symmetric(&derived.a_x_matrix(params))?;
    Ok(derived)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    pub passes: bool,
    pub q_min_eig: T,
    pub ax_min_eig: T,
    pub a_lambda: T,
    pub c_min: T,
    pub messages: Vec<String>,
}

/// Checks the convergence condition on `(tau, rho, beta, B_i, c)`:
/// `tau in (0,1)`, `c > c_min(tau)`, the `a_x` matrix positive definite and
/// `Q` positive semidefinite up to `1e-9 (1 + max|Q_ij|)`.
pub fn validate_params<T: Real>(problem: &CoupledProblem<T>, params: &AlgoParams<T>) -> Result<ValidationReport<T>> {
    let d = build_derived(problem, params)?;
    let q_min_eig = min_eigenvalue_symmetric(&d.q)?;
    let tol_psd = T::attainable_tol(1e-9) * (T::one() + d.q.max_abs());

    let mut messages = Vec::new();
    let tau_ok = params.tau > T::zero() && params.tau < T::one();
    messages.push(format!(
        "tau = {} {} (0, 1)",
        params.tau,
        if tau_ok { "in" } else { "NOT in" }
    ));
    let c_ok = params.c > d.c_min;
    messages.push(format!(
        "c = {} {} c_min = {}",
        params.c,
        if c_ok { ">" } else { "<=" },
        d.c_min
    ));
    let ax_ok = d.a_x_mineig > T::zero();
    messages.push(format!(
        "min eig of a_x matrix = {:e} ({})",
        d.a_x_mineig,
        if ax_ok { "positive" } else { "NOT positive" }
    ));
    let q_ok = q_min_eig >= -tol_psd;
    messages.push(format!(
        "min eig of Q = {:e} ({})",
        q_min_eig,
        if q_ok { "PSD within tolerance" } else { "NOT PSD" }
    ));
    messages.push(format!("a_lambda = {:e}", d.a_lambda));

    Ok(ValidationReport {
        passes: tau_ok && c_ok && ax_ok && q_ok,
        q_min_eig,
        ax_min_eig: d.a_x_mineig,
        a_lambda: d.a_lambda,
        c_min: d.c_min,
        messages,
    })
}

/// Right-hand side of the penalty lower bound that makes the limit point
/// `target_eps`-stationary when started from `lambda0 = 0`, `A x0 = b`:
///
/// `eps^-1 tau (4 + c(1 - 2tau^2) + c/2) d_F + (c L_g / 2)|x0|^2
///  + eps^-1 tau (c L_g / 2)|x0|^2 + eps^-1 tau (c rho_F / 4) d_x`
pub fn corollary_rho_bound<T: Real>(
    problem: &CoupledProblem<T>,
    params: &AlgoParams<T>,
    target_eps: T,
    d_f: T,
    d_x: T,
    x0_norm_sq: T,
) -> Result<T> {
    if !(target_eps > T::zero()) {
        return Err(AdmmError::NonPositiveEps);
    }
    let (tau, c) = (params.tau, params.c);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let lg = problem.lipschitz_g();
    let rho_f = problem.lipschitz_f() + lg;
    let inv = tau / target_eps;
    let lead = four + c * (T::one() - two * tau * tau) + c / two;
    Ok(inv * lead * d_f
        + c * lg / two * x0_norm_sq
        + inv * (c * lg / two) * x0_norm_sq
        + inv * (c * rho_f / four) * d_x)
}

/// `max_{x, y in X} ||x - y||^2` for the stacked box.
pub fn box_diameter_sq<T: Real>(problem: &CoupledProblem<T>) -> T {
    problem.bounds().diameter_sq()
}

/// Smallest `beta` (with identity `B_i`) meeting both matrix conditions for
/// the given `(rho, c)`, scaled by `margin > 1`.
pub fn minimal_beta<T: Real>(problem: &CoupledProblem<T>, rho: T, c: T, margin: T) -> Result<T> {
    let g_a = Matrix::block_diag(&problem.agents().iter().map(|a| a.coupling().gram()).collect::<Vec<_>>());
    let ata = problem.coupling_matrix().gram();
    let rho_f = problem.lipschitz_f() + problem.lipschitz_g();
    let two = T::lit(2.0);
    // 2 beta > (2c+1) rho_F - lambda_min(2 rho G_A - rho A^T A)
    let mut m1 = g_a.scaled(two * rho).sub(&ata.scaled(rho));
    m1.symmetrize();
    let need_ax = ((two * c + T::one()) * rho_f - min_eigenvalue_symmetric(&m1)?) / two;
    // beta >= -lambda_min(rho G_A - rho A^T A)
    let mut m2 = g_a.scaled(rho).sub(&ata.scaled(rho));
    m2.symmetrize();
    let need_q = -min_eigenvalue_symmetric(&m2)?;
    Ok(need_ax.max(need_q).max(T::zero()) * margin + T::lit(1e-6))
}
