//! Ground-truth solvers for desk-scale instances: a dense grid over the
//! coupled feasible set (after eliminating `m` coordinates through the
//! coupling equations) and a multistart penalized projected-gradient
//! search. Neither shares code with the ADMM path.

use rayon::prelude::*;

use crate::error::{AdmmError, Result};
use crate::lcg::Lcg64;
use crate::linalg::{solve, Matrix};
use crate::problem::{BoxSet, CoupledProblem};
use crate::scalar::{self, Real};

const MAX_REDUCED_DIM: usize = 3;
const REFINE_ROUNDS: usize = 3;
const REFINE_RESOLUTION: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Grid,
    Multistart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub x_best: Vec<T>,
    /// `F(x_best)`
    pub value: T,
    pub method: OracleMethod,
    pub evaluations: usize,
}

/// Affine parametrization `x_E = c0 - M x_F` of `{A x = b}`.
struct Reduction<T> {
    free: Vec<usize>,
    eliminated: Vec<usize>,
    offset: Vec<T>,
    map: Matrix<T>,
}

fn reduce<T: Real>(problem: &CoupledProblem<T>) -> Result<Reduction<T>> {
    let a = problem.coupling_matrix();
    let (m, n) = (a.rows(), a.cols());
    // column-pivoted elimination on [A | b]; dependent rows are dropped when
    // consistent
    let mut work = a.clone();
    let mut rhs = problem.rhs().to_vec();
    let mut chosen = Vec::with_capacity(m);
    let mut kept = Vec::with_capacity(m);
    let scale = T::one().max(a.max_abs());
    let tol = T::lit(1e-12) * scale;
    for r in 0..m {
        let best = (0..n)
            .filter(|c| !chosen.contains(c))
            .max_by(|&i, &j| work[(r, i)].abs().partial_cmp(&work[(r, j)].abs()).expect("finite"));
        let piv = best.map_or(T::zero(), |c| work[(r, c)]);
        if piv.abs() <= tol {
            if rhs[r].abs() <= tol * (T::one() + scalar::max_abs(problem.rhs())) {
                continue;
            }
            return Err(AdmmError::EmptyFeasibleGrid);
        }
        let best = best.expect("pivot column");
        for rr in (r + 1)..m {
            let f = work[(rr, best)] / piv;
            for c in 0..n {
                work[(rr, c)] = work[(rr, c)] - f * work[(r, c)];
            }
            rhs[rr] = rhs[rr] - f * rhs[r];
        }
        chosen.push(best);
        kept.push(r);
    }
    let k = kept.len();
    chosen.sort_unstable();
    let free: Vec<usize> = (0..n).filter(|c| !chosen.contains(c)).collect();
    let sub = |cols: &[usize]| {
        let mut out = Matrix::zeros(k, cols.len());
        for (i, &r) in kept.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] = a[(r, c)];
            }
        }
        out
    };
    let a_e = sub(&chosen);
    let a_f = sub(&free);
    let b: Vec<T> = kept.iter().map(|&r| problem.rhs()[r]).collect();
    let offset = if k == 0 { vec![] } else { solve(&a_e, &b)? };
    let mut map = Matrix::zeros(k, free.len());
    for j in 0..free.len() {
        let col: Vec<T> = (0..k).map(|r| a_f[(r, j)]).collect();
        let sol = solve(&a_e, &col)?;
        for r in 0..k {
            map[(r, j)] = sol[r];
        }
    }
    Ok(Reduction {
        free,
        eliminated: chosen,
        offset,
        map,
    })
}

impl<T: Real> Reduction<T> {
    /// Full point for free coordinates `z`, or `None` when an eliminated
    /// coordinate leaves its box.
    fn lift(&self, bounds: &BoxSet<T>, z: &[T]) -> Option<Vec<T>> {
        let n = self.free.len() + self.eliminated.len();
        let mut x = vec![T::zero(); n];
        for (k, &c) in self.free.iter().enumerate() {
            x[c] = z[k];
        }
        let mz = self.map.mul_vec(z);
        for (r, &c) in self.eliminated.iter().enumerate() {
            let v = self.offset[r] - mz[r];
            let (l, u) = (bounds.lower()[c], bounds.upper()[c]);
            let tol = T::attainable_tol(1e-12) * (T::one() + (u - l));
            if v < l - tol || v > u + tol {
                return None;
            }
            x[c] = v.max(l).min(u);
        }
        Some(x)
    }
}

/// Axis-aligned grid: `resolution` nodes per axis between `lo` and `hi`.
struct Grid<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    res: usize,
}

impl<T: Real> Grid<T> {
    fn len(&self) -> usize {
        self.res.pow(self.lo.len() as u32)
    }

    fn spacing(&self, axis: usize) -> T {
        if self.res <= 1 {
            T::zero()
        } else {
            (self.hi[axis] - self.lo[axis]) / T::from_usize_lossy(self.res - 1)
        }
    }

    /// Node for a lexicographic index (first axis most significant).
    fn node(&self, mut index: usize) -> Vec<T> {
        let d = self.lo.len();
        let mut z = vec![T::zero(); d];
        for axis in (0..d).rev() {
            let k = index % self.res;
            index /= self.res;
            z[axis] = if self.res <= 1 {
                (self.lo[axis] + self.hi[axis]) * T::lit(0.5)
            } else if k == self.res - 1 {
                self.hi[axis]
            } else {
                self.lo[axis] + self.spacing(axis) * T::from_usize_lossy(k)
            };
        }
        z
    }
}

/// Lexicographically-first minimum of `eval` over the grid.
fn grid_argmin<T, F>(grid: &Grid<T>, eval: F) -> Option<(T, usize)>
where
    T: Real,
    F: Fn(usize) -> Option<T> + Sync,
{
    (0..grid.len())
        .into_par_iter()
        .filter_map(|i| eval(i).map(|v| (v, i)))
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
}

/// Dense grid over the reduced feasible set, followed by a few local
/// refinements around the incumbent.
pub fn constrained_grid_search<T: Real>(problem: &CoupledProblem<T>, resolution: usize) -> Result<OracleResult<T>> {
    let red = reduce(problem)?;
    let d = red.free.len();
    if d > MAX_REDUCED_DIM {
        return Err(AdmmError::DimensionTooLarge(d));
    }
    let bounds = problem.bounds();
    let flo: Vec<T> = red.free.iter().map(|&c| bounds.lower()[c]).collect();
    let fhi: Vec<T> = red.free.iter().map(|&c| bounds.upper()[c]).collect();
    let res = resolution.max(1);
    let eval_at = |grid: &Grid<T>, i: usize| -> Option<T> {
        let x = red.lift(bounds, &grid.node(i))?;
        problem.objective(&x).ok()
    };

    let mut grid = Grid {
        lo: flo.clone(),
        hi: fhi.clone(),
        res,
    };
    let mut evaluations = grid.len();
    let (mut best_v, best_i) = grid_argmin(&grid, |i| eval_at(&grid, i)).ok_or(AdmmError::EmptyFeasibleGrid)?;
    let mut best_z = grid.node(best_i);

    if d > 0 && res > 1 {
        for _ in 0..REFINE_ROUNDS {
            let lo: Vec<T> = (0..d)
                .map(|a| (best_z[a] - grid.spacing(a) * T::lit(2.0)).max(flo[a]))
                .collect();
            let hi: Vec<T> = (0..d)
                .map(|a| (best_z[a] + grid.spacing(a) * T::lit(2.0)).min(fhi[a]))
                .collect();
            grid = Grid {
                lo,
                hi,
                res: res.min(REFINE_RESOLUTION),
            };
            evaluations += grid.len();
            if let Some((v, i)) = grid_argmin(&grid, |i| eval_at(&grid, i)) {
                if v < best_v {
                    best_v = v;
                    best_z = grid.node(i);
                }
            }
        }
    }
    let x_best = red.lift(bounds, &best_z).expect("incumbent is feasible");
    Ok(OracleResult {
        x_best,
        value: best_v,
        method: OracleMethod::Grid,
        evaluations,
    })
}

/// Extremes of `F` over a full-box grid (coupling ignored), with
/// Lipschitz-corrected bounds valid for the whole box:
/// `min F >= min_y (F(y) - |grad F(y)| r) - L r^2 / 2`, `r` the half cell
/// diagonal and `L = L_f + L_g`; symmetrically for the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExtremes<T> {
    pub min_value: T,
    pub min_lower_bound: T,
    pub argmin: Vec<T>,
    pub max_value: T,
    pub max_upper_bound: T,
    pub argmax: Vec<T>,
}

pub fn box_grid_extremes<T: Real>(problem: &CoupledProblem<T>, resolution: usize) -> Result<GridExtremes<T>> {
    let n = problem.n();
    if n > MAX_REDUCED_DIM + 1 {
        return Err(AdmmError::DimensionTooLarge(n));
    }
    let bounds = problem.bounds();
    let grid = Grid {
        lo: bounds.lower().to_vec(),
        hi: bounds.upper().to_vec(),
        res: resolution.max(2),
    };
    let half_diag = (0..n).map(|a| grid.spacing(a) * grid.spacing(a)).sum::<T>().sqrt() * T::lit(0.5);
    let lip = problem.lipschitz_f() + problem.lipschitz_g();
    let curv = lip * half_diag * half_diag * T::lit(0.5);
    let evals: Vec<(T, T, usize)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (v, g) = problem
                .total_eval(&grid.node(i))
                .unwrap_or((T::nan(), vec![T::nan(); n]));
            (v, scalar::norm(&g), i)
        })
        .collect();
    if evals.iter().any(|e| !e.0.is_finite() || !e.1.is_finite()) {
        return Err(AdmmError::NonFiniteValue("grid objective"));
    }
    let mut out = GridExtremes {
        min_value: T::infinity(),
        min_lower_bound: T::infinity(),
        argmin: vec![],
        max_value: T::neg_infinity(),
        max_upper_bound: T::neg_infinity(),
        argmax: vec![],
    };
    let (mut imin, mut imax) = (0, 0);
    for &(v, gn, i) in &evals {
        if v < out.min_value {
            out.min_value = v;
            imin = i;
        }
        if v > out.max_value {
            out.max_value = v;
            imax = i;
        }
        out.min_lower_bound = out.min_lower_bound.min(v - gn * half_diag);
        out.max_upper_bound = out.max_upper_bound.max(v + gn * half_diag);
    }
    out.min_lower_bound = out.min_lower_bound - curv;
    out.max_upper_bound = out.max_upper_bound + curv;
    out.argmin = grid.node(imin);
    out.argmax = grid.node(imax);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PenaltySettings {
    tol: f64,
    max_iters: usize,
}

const PENALTY: PenaltySettings = PenaltySettings {
    tol: 1e-10,
    max_iters: 200_000,
};

/// Projected gradient with Barzilai-Borwein trial steps and monotone Armijo
/// backtracking; stops when `|P(x - grad) - x| <= tol`.
fn penalized_descent<T: Real>(
    problem: &CoupledProblem<T>,
    weight: T,
    start: &[T],
    evaluations: &mut usize,
) -> Result<(Vec<T>, T)> {
    let bounds = problem.bounds();
    let a = problem.coupling_matrix();
    let eval = |x: &[T], count: &mut usize| -> Result<(T, Vec<T>)> {
        *count += 1;
        let (f, mut g) = problem.total_eval(x)?;
        let r = problem.coupling_residual(x);
        let pen = a.tr_mul_vec(&r);
        for (gi, pi) in g.iter_mut().zip(&pen) {
            *gi = *gi + T::lit(2.0) * weight * *pi;
        }
        Ok((f + weight * scalar::norm_sq(&r), g))
    };
    let mut x = bounds.project(start);
    let (mut fx, mut gx) = eval(&x, evaluations)?;
    let mut step = T::one() / (T::one() + T::lit(2.0) * weight);
    let tol = T::lit(PENALTY.tol);
    for _ in 0..PENALTY.max_iters {
        let probe: Vec<T> = x.iter().zip(&gx).map(|(&xi, &gi)| xi - gi).collect();
        if scalar::dist(&bounds.project(&probe), &x) <= tol {
            break;
        }
        let mut s = step;
        let (xn, fnew, gn) = loop {
            let raw: Vec<T> = x.iter().zip(&gx).map(|(&xi, &gi)| xi - s * gi).collect();
            let trial = bounds.project(&raw);
            let d = scalar::sub(&trial, &x);
            let (ft, gt) = eval(&trial, evaluations)?;
            let slack = T::epsilon() * T::lit(4.0) * fx.abs();
            if ft <= fx + T::lit(1e-4) * scalar::dot(&gx, &d) + slack {
                break (trial, ft, gt);
            }
            s = s * T::lit(0.5);
            if s < T::lit(1e-30) {
                return Ok((x, fx));
            }
        };
        let sk = scalar::sub(&xn, &x);
        let yk = scalar::sub(&gn, &gx);
        let sy = scalar::dot(&sk, &yk);
        step = if sy > T::zero() {
            (scalar::norm_sq(&sk) / sy).max(T::lit(1e-12)).min(T::lit(1e12))
        } else {
            (s * T::lit(2.0)).min(T::lit(1e12))
        };
        if scalar::norm(&sk) == T::zero() {
            break;
        }
        x = xn;
        fx = fnew;
        gx = gn;
    }
    Ok((x, fx))
}

/// Minimizes `F(x) + w |A x - b|^2` over the box from each start (with a
/// short continuation `w/1000, w/100, w/10, w`) and keeps the best
/// penalized value. `value` reports the unpenalized `F`.
pub fn multistart_penalty_solve_from<T: Real>(
    problem: &CoupledProblem<T>,
    penalty_weight: T,
    starts: &[Vec<T>],
) -> Result<OracleResult<T>> {
    if !(penalty_weight > T::zero()) {
        return Err(AdmmError::InvalidParams("penalty weight must be positive".into()));
    }
    let mut evaluations = 0;
    let mut best: Option<(T, Vec<T>)> = None;
    for s in starts {
        let mut x = s.clone();
        let mut pen = T::zero();
        for scale in [1e-3, 1e-2, 1e-1, 1.0] {
            let (xn, v) = penalized_descent(problem, penalty_weight * T::lit(scale), &x, &mut evaluations)?;
            x = xn;
            pen = v;
        }
        if best.as_ref().is_none_or(|(b, _)| pen < *b) {
            best = Some((pen, x));
        }
    }
    let (_, x_best) = best.ok_or_else(|| AdmmError::InvalidParams("no starts supplied".into()))?;
    Ok(OracleResult {
        value: problem.objective(&x_best)?,
        x_best,
        method: OracleMethod::Multistart,
        evaluations,
    })
}

/// Same as [`multistart_penalty_solve_from`] with `starts` points drawn
/// uniformly from the box by [`Lcg64`] seeded with `seed`.
pub fn multistart_penalty_solve<T: Real>(
    problem: &CoupledProblem<T>,
    penalty_weight: T,
    starts: usize,
    seed: u64,
) -> Result<OracleResult<T>> {
    let mut rng = Lcg64::new(seed);
    let b = problem.bounds();
    let points: Vec<Vec<T>> = (0..starts.max(1))
        .map(|_| {
            b.lower()
                .iter()
                .zip(b.upper())
                .map(|(&l, &u)| {
                    let w = T::lit(rng.next_f64());
                    l + (u - l) * w
                })
                .collect()
        })
        .collect();
    multistart_penalty_solve_from(problem, penalty_weight, &points)
}
