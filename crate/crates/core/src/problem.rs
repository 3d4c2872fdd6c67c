//! Problem template: agents with private objectives and box sets, a shared
//! smooth composite term, and linear coupling `sum_i A_i x_i = b`.
//!
//! Agent blocks are concatenated in the order they are supplied; agent `i`
//! owns coordinates `offsets[i]..offsets[i + 1]` of the stacked vector.

use std::fmt;
use std::sync::Arc;

use crate::error::{AdmmError, Result};
use crate::lcg::Lcg64;
use crate::linalg::Matrix;
use crate::scalar::{self, Real};

/// Objective oracle returning the value and gradient at a point.
pub type Oracle<T> = Arc<dyn Fn(&[T]) -> (T, Vec<T>) + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> BoxSet<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(AdmmError::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(AdmmError::InvalidBox("box must have dimension >= 1".into()));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(AdmmError::InvalidBox(format!("coordinate {j} is unbounded")));
            }
            if l > u {
                return Err(AdmmError::InvalidBox(format!(
                    "coordinate {j}: lower {l} exceeds upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: T, upper: T) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// Euclidean projection (componentwise clamp).
    pub fn project(&self, x: &[T]) -> Vec<T> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, x: &mut [T]) {
        debug_assert_eq!(x.len(), self.dim());
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(l).min(u);
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((&v, &l), &u)| v >= l && v <= u)
    }

    /// `max_{x,y in box} ||x - y||^2`, exact for boxes.
    pub fn diameter_sq(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (u - l) * (u - l))
            .sum()
    }

    pub fn midpoint(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (l + u) * half)
            .collect()
    }

    pub fn concat(boxes: &[&BoxSet<T>]) -> Result<Self> {
        let lower = boxes.iter().flat_map(|b| b.lower.iter().copied()).collect();
        let upper = boxes.iter().flat_map(|b| b.upper.iter().copied()).collect();
        Self::new(lower, upper)
    }
}

/// Proximal weighting `B_i` in `beta/2 ||x_i - x_i^k||^2_{B_i^T B_i}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProximalMatrix<T> {
    Identity,
    Dense(Matrix<T>),
}

impl<T: Real> ProximalMatrix<T> {
    /// `B^T B` for a block of dimension `dim`.
    pub fn gram(&self, dim: usize) -> Matrix<T> {
        match self {
            Self::Identity => Matrix::identity(dim),
            Self::Dense(b) => b.gram(),
        }
    }
}

/// Value and gradient of one oracle call.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub grad: Vec<T>,
    /// Set when the point was outside the agent's box.
    pub out_of_box: bool,
}

#[derive(Clone)]
pub struct AgentSpec<T> {
    objective: Oracle<T>,
    bounds: BoxSet<T>,
    coupling: Matrix<T>,
    proximal: ProximalMatrix<T>,
    lipschitz_f: T,
}

impl<T: Real> fmt::Debug for AgentSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentSpec")
            .field("dim", &self.dim())
            .field("bounds", &self.bounds)
            .field("coupling", &self.coupling)
            .field("proximal", &self.proximal)
            .field("lipschitz_f", &self.lipschitz_f)
            .finish_non_exhaustive()
    }
}

impl<T: Real> AgentSpec<T> {
    pub fn new(objective: Oracle<T>, bounds: BoxSet<T>, coupling: Matrix<T>, lipschitz_f: T) -> Result<Self> {
        if coupling.cols() != bounds.dim() {
            return Err(AdmmError::DimensionMismatch {
                what: "coupling columns vs agent dimension",
                expected: bounds.dim(),
                found: coupling.cols(),
            });
        }
        if !(lipschitz_f >= T::zero() && lipschitz_f.is_finite()) {
            return Err(AdmmError::InvalidProblem(format!(
                "agent Lipschitz modulus must be finite and nonnegative, got {lipschitz_f}"
            )));
        }
        Ok(Self {
            objective,
            bounds,
            coupling,
            proximal: ProximalMatrix::Identity,
            lipschitz_f,
        })
    }

    pub fn with_proximal(mut self, b: Matrix<T>) -> Result<Self> {
        if b.rows() != self.dim() || b.cols() != self.dim() {
            return Err(AdmmError::DimensionMismatch {
                what: "proximal matrix",
                expected: self.dim(),
                found: b.rows(),
            });
        }
        self.proximal = ProximalMatrix::Dense(b);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &BoxSet<T> {
        &self.bounds
    }

    pub fn coupling(&self) -> &Matrix<T> {
        &self.coupling
    }

    pub fn proximal(&self) -> &ProximalMatrix<T> {
        &self.proximal
    }

    pub fn lipschitz_f(&self) -> T {
        self.lipschitz_f
    }

    pub fn objective(&self) -> &Oracle<T> {
        &self.objective
    }

    /// Evaluates `f_i` and its gradient.
    pub fn agent_objective_eval(&self, x_i: &[T]) -> Result<Evaluation<T>> {
        if x_i.len() != self.dim() {
            return Err(AdmmError::DimensionMismatch {
                what: "agent point",
                expected: self.dim(),
                found: x_i.len(),
            });
        }
        let (value, grad) = (self.objective)(x_i);
        if grad.len() != self.dim() {
            return Err(AdmmError::DimensionMismatch {
                what: "agent gradient",
                expected: self.dim(),
                found: grad.len(),
            });
        }
        if !value.is_finite() || !scalar::all_finite(&grad) {
            return Err(AdmmError::NonFiniteValue("agent objective"));
        }
        Ok(Evaluation {
            value,
            grad,
            out_of_box: !self.bounds.contains(x_i),
        })
    }
}

#[derive(Clone)]
pub struct CoupledProblem<T> {
    agents: Vec<AgentSpec<T>>,
    composite: Oracle<T>,
    rhs: Vec<T>,
    lipschitz_f: T,
    lipschitz_g: T,
    offsets: Vec<usize>,
    coupling: Matrix<T>,
    bounds: BoxSet<T>,
}

impl<T: Real> fmt::Debug for CoupledProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoupledProblem")
            .field("agents", &self.agents)
            .field("rhs", &self.rhs)
            .field("lipschitz_f", &self.lipschitz_f)
            .field("lipschitz_g", &self.lipschitz_g)
            .finish_non_exhaustive()
    }
}

impl<T: Real> CoupledProblem<T> {
    pub fn new(
        agents: Vec<AgentSpec<T>>,
        composite: Oracle<T>,
        rhs: Vec<T>,
        lipschitz_f: T,
        lipschitz_g: T,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(AdmmError::InvalidProblem("at least one agent required".into()));
        }
        let m = rhs.len();
        for a in &agents {
            if a.coupling.rows() != m {
                return Err(AdmmError::DimensionMismatch {
                    what: "coupling rows vs rhs length",
                    expected: m,
                    found: a.coupling.rows(),
                });
            }
        }
        for (name, v) in [("L_f", lipschitz_f), ("L_g", lipschitz_g)] {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(AdmmError::InvalidProblem(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        let mut offsets = Vec::with_capacity(agents.len() + 1);
        offsets.push(0);
        for a in &agents {
            offsets.push(offsets.last().copied().unwrap_or(0) + a.dim());
        }
        let blocks: Vec<Matrix<T>> = agents.iter().map(|a| a.coupling.clone()).collect();
        let coupling = if m == 0 {
            Matrix::zeros(0, *offsets.last().unwrap())
        } else {
            Matrix::hstack(&blocks)?
        };
        let boxes: Vec<&BoxSet<T>> = agents.iter().map(|a| &a.bounds).collect();
        let bounds = BoxSet::concat(&boxes)?;
        Ok(Self {
            agents,
            composite,
            rhs,
            lipschitz_f,
            lipschitz_g,
            offsets,
            coupling,
            bounds,
        })
    }

    pub fn n(&self) -> usize {
        *self.offsets.last().expect("offsets nonempty")
    }

    pub fn m(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentSpec<T>] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentSpec<T> {
        &self.agents[i]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn block<'a>(&self, x: &'a [T], i: usize) -> &'a [T] {
        &x[self.block_range(i)]
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn lipschitz_f(&self) -> T {
        self.lipschitz_f
    }

    pub fn lipschitz_g(&self) -> T {
        self.lipschitz_g
    }

    /// Stacked coupling matrix `A = [A_1 ... A_N]`.
    pub fn coupling_matrix(&self) -> &Matrix<T> {
        &self.coupling
    }

    /// Product of the agent boxes.
    pub fn bounds(&self) -> &BoxSet<T> {
        &self.bounds
    }

    pub fn composite_oracle(&self) -> &Oracle<T> {
        &self.composite
    }

    fn check_len(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n() {
            return Err(AdmmError::DimensionMismatch {
                what: "stacked point",
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `g(x)` and `grad g(x)`; the slice for agent `i` is
    /// `grad[problem.block_range(i)]`.
    pub fn composite_eval(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        self.check_len(x)?;
        let (v, g) = (self.composite)(x);
        if g.len() != self.n() {
            return Err(AdmmError::DimensionMismatch {
                what: "composite gradient",
                expected: self.n(),
                found: g.len(),
            });
        }
        if !v.is_finite() || !scalar::all_finite(&g) {
            return Err(AdmmError::NonFiniteValue("composite objective"));
        }
        Ok((v, g))
    }

    /// `F(x) = g(x) + sum_i f_i(x_i)` and its gradient.
    pub fn total_eval(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        let (mut value, mut grad) = self.composite_eval(x)?;
        for (i, agent) in self.agents.iter().enumerate() {
            let range = self.block_range(i);
            let e = agent.agent_objective_eval(&x[range.clone()])?;
            value = value + e.value;
            for (g, d) in grad[range].iter_mut().zip(&e.grad) {
                *g = *g + *d;
            }
        }
        Ok((value, grad))
    }

    pub fn objective(&self, x: &[T]) -> Result<T> {
        Ok(self.total_eval(x)?.0)
    }

    /// `A x - b`.
    pub fn coupling_residual(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n());
        self.coupling
            .mul_vec(x)
            .into_iter()
            .zip(&self.rhs)
            .map(|(ax, &b)| ax - b)
            .collect()
    }

    /// Upper bound on `max_{x in X} ||A x - b||` from row-wise interval
    /// extremes; exact when `m = 1`.
    pub fn residual_upper_bound(&self) -> T {
        let lo = self.bounds.lower();
        let hi = self.bounds.upper();
        let mut total = T::zero();
        for (r, &b) in self.rhs.iter().enumerate() {
            let row = self.coupling.row(r);
            let (mut max, mut min) = (T::zero(), T::zero());
            for ((&a, &l), &u) in row.iter().zip(lo).zip(hi) {
                if a >= T::zero() {
                    max = max + a * u;
                    min = min + a * l;
                } else {
                    max = max + a * l;
                    min = min + a * u;
                }
            }
            let worst = (max - b).abs().max((min - b).abs());
            total = total + worst * worst;
        }
        total.sqrt()
    }
}

/// Free-function form of [`BoxSet::project`].
pub fn project_box<T: Real>(bounds: &BoxSet<T>, x: &[T]) -> Vec<T> {
    bounds.project(x)
}

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub points: usize,
    /// Largest `|fd - grad| / (1 + |grad|)` seen.
    pub worst_relative_error: f64,
    pub passed: bool,
}

/// Central differences with `h = 1e-6 (1 + |x_j|)` at `points` uniformly
/// random in-box points; passes when every component satisfies
/// `|fd - grad_j| <= rel_tol (1 + |grad_j|)`.
pub fn finite_difference_check(
    oracle: &Oracle<f64>,
    bounds: &BoxSet<f64>,
    points: usize,
    seed: u64,
    rel_tol: f64,
) -> GradientCheck {
    let mut rng = Lcg64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x: Vec<f64> = bounds
            .lower()
            .iter()
            .zip(bounds.upper())
            .map(|(&l, &u)| rng.uniform(l, u))
            .collect();
        let (_, grad) = oracle(&x);
        let mut xp = x.clone();
        for j in 0..x.len() {
            let h = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            let fp = oracle(&xp).0;
            xp[j] = x[j] - h;
            let fm = oracle(&xp).0;
            xp[j] = x[j];
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / (1.0 + grad[j].abs()));
        }
    }
    GradientCheck {
        points,
        worst_relative_error: worst,
        passed: worst <= rel_tol,
    }
}

/// Largest observed `||grad(x) - grad(y)|| / ||x - y||` over random in-box
/// pairs; a valid modulus `L` satisfies `ratio <= L + 1e-8`.
pub fn sampled_lipschitz_ratio(oracle: &Oracle<f64>, bounds: &BoxSet<f64>, pairs: usize, seed: u64) -> f64 {
    let mut rng = Lcg64::new(seed);
    let sample = |rng: &mut Lcg64| -> Vec<f64> {
        bounds
            .lower()
            .iter()
            .zip(bounds.upper())
            .map(|(&l, &u)| rng.uniform(l, u))
            .collect()
    };
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let d = scalar::dist(&x, &y);
        if d == 0.0 {
            continue;
        }
        let gx = oracle(&x).1;
        let gy = oracle(&y).1;
        worst = worst.max(scalar::dist(&gx, &gy) / d);
    }
    worst
}

/// Stacked-`f` oracle `x -> sum_i f_i(x_i)` for sampling checks.
pub fn stacked_local_oracle(problem: &CoupledProblem<f64>) -> Oracle<f64> {
    let p = problem.clone();
    Arc::new(move |x: &[f64]| {
        let mut value = 0.0;
        let mut grad = vec![0.0; x.len()];
        for (i, agent) in p.agents().iter().enumerate() {
            let r = p.block_range(i);
            let (v, g) = (agent.objective())(&x[r.clone()]);
            value += v;
            grad[r].copy_from_slice(&g);
        }
        (value, grad)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(coef: f64) -> Oracle<f64> {
        Arc::new(move |x: &[f64]| (coef * x[0].powi(3), vec![3.0 * coef * x[0] * x[0]]))
    }

    fn p1_like() -> CoupledProblem<f64> {
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let agents = (0..2)
            .map(|_| AgentSpec::new(cubic(0.1), BoxSet::uniform(1, -1.0, 1.0).unwrap(), one.clone(), 0.6).unwrap())
            .collect();
        let g: Oracle<f64> = Arc::new(|x: &[f64]| (0.1 * x[0] * x[1], vec![0.1 * x[1], 0.1 * x[0]]));
        CoupledProblem::new(agents, g, vec![1.0], 0.6, 0.2).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSet::<f64>::new(vec![], vec![]).is_err());
        assert!(BoxSet::new(vec![f64::NEG_INFINITY], vec![0.0]).is_err());
        assert!(BoxSet::new(vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let b = BoxSet::uniform(1, -1.0, 1.0).unwrap();
        assert_eq!(project_box(&b, &[0.3]), vec![0.3]);
        assert_eq!(project_box(&b, &[2.5]), vec![1.0]);
        let b2 = BoxSet::uniform(2, -1.0, 1.0).unwrap();
        assert_eq!(project_box(&b2, &[-3.0, 0.7]), vec![-1.0, 0.7]);
    }

    #[test]
    fn agent_eval_examples() {
        let p = p1_like();
        let e = p.agent(0).agent_objective_eval(&[0.5]).unwrap();
        assert!((e.value - 0.0125).abs() < 1e-15 && (e.grad[0] - 0.075).abs() < 1e-15);
        let e = p.agent(0).agent_objective_eval(&[0.0]).unwrap();
        assert_eq!((e.value, e.grad[0]), (0.0, 0.0));
        let e = p.agent(0).agent_objective_eval(&[1.0]).unwrap();
        assert!((e.value - 0.1).abs() < 1e-15 && (e.grad[0] - 0.3).abs() < 1e-15);
        assert!(!e.out_of_box);
        assert!(p.agent(0).agent_objective_eval(&[1.5]).unwrap().out_of_box);
    }

    #[test]
    fn non_finite_oracle_is_rejected() {
        let bad: Oracle<f64> = Arc::new(|_x: &[f64]| (f64::NAN, vec![0.0]));
        let a = AgentSpec::new(
            bad,
            BoxSet::uniform(1, 0.0, 1.0).unwrap(),
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            0.0,
        )
        .unwrap();
        assert_eq!(
            a.agent_objective_eval(&[0.5]),
            Err(AdmmError::NonFiniteValue("agent objective"))
        );
    }

    #[test]
    fn composite_examples() {
        let p = p1_like();
        let (v, g) = p.composite_eval(&[0.5, 0.5]).unwrap();
        assert!((v - 0.025).abs() < 1e-15);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[1] - 0.05).abs() < 1e-15);
        let (v, g) = p.composite_eval(&[0.0, 0.7]).unwrap();
        assert_eq!(v, 0.0);
        assert!((g[0] - 0.07).abs() < 1e-15 && g[1] == 0.0);
        let (v, g) = p.composite_eval(&[1.0, -1.0]).unwrap();
        assert!((v + 0.1).abs() < 1e-15);
        assert!((g[0] + 0.1).abs() < 1e-15 && (g[1] - 0.1).abs() < 1e-15);
        assert!(p.composite_eval(&[1.0]).is_err());
    }

    #[test]
    fn residual_examples() {
        let p = p1_like();
        assert_eq!(p.coupling_residual(&[0.5, 0.5]), vec![0.0]);
        assert!(p.coupling_residual(&[0.2, 0.8])[0].abs() < 1e-15);
        assert_eq!(p.coupling_residual(&[1.0, 1.0]), vec![1.0]);
    }

    #[test]
    fn residual_bound_examples() {
        assert_eq!(p1_like().residual_upper_bound(), 3.0);

        let zero: Oracle<f64> = Arc::new(|x: &[f64]| (0.0, vec![0.0; x.len()]));
        let single = AgentSpec::new(
            zero.clone(),
            BoxSet::uniform(1, 0.0, 0.0).unwrap(),
            Matrix::identity(1),
            0.0,
        )
        .unwrap();
        let p = CoupledProblem::new(vec![single], zero.clone(), vec![0.0], 0.0, 0.0).unwrap();
        assert_eq!(p.residual_upper_bound(), 0.0);

        let mk = |c: f64| {
            AgentSpec::new(
                zero.clone(),
                BoxSet::uniform(1, -1.0, 1.0).unwrap(),
                Matrix::from_rows(&[vec![c]]).unwrap(),
                0.0,
            )
            .unwrap()
        };
        let p = CoupledProblem::new(vec![mk(1.0), mk(-1.0)], zero, vec![0.0], 0.0, 0.0).unwrap();
        assert_eq!(p.residual_upper_bound(), 2.0);
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let zero: Oracle<f64> = Arc::new(|x: &[f64]| (0.0, vec![0.0; x.len()]));
        let a = AgentSpec::new(
            zero.clone(),
            BoxSet::uniform(1, 0.0, 1.0).unwrap(),
            Matrix::identity(1),
            0.0,
        )
        .unwrap();
        assert!(CoupledProblem::new(vec![a], zero, vec![0.0, 1.0], 0.0, 0.0).is_err());
    }
}
