//! Ready-made instances: the two-agent cubic toy problem with its four
//! parameter presets, a multi-zone HVAC predictive-control instance, and a
//! seeded random generator.

use std::sync::Arc;

use crate::error::{AdmmError, Result};
use crate::lcg::Lcg64;
use crate::linalg::{max_eigenvalue_symmetric, spectral_norm_symmetric, Matrix};
use crate::params::{minimal_beta, AlgoParams};
use crate::problem::{AgentSpec, BoxSet, CoupledProblem, Oracle};
use crate::scalar::Real;

/// Named parameter tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset<T> {
    pub name: &'static str,
    pub params: AlgoParams<T>,
}

pub const P1_EPSILON: f64 = 1e-10;
pub const P1_MAX_ITERS: usize = 2000;

/// `(tau, rho, beta, c)` for S1..S4.
const P1_TUPLES: [(&str, f64, f64, f64, f64); 4] = [
    ("S1", 0.1, 10.0, 10.0, 8.7),
    ("S2", 0.1, 20.0, 20.0, 8.7),
    ("S3", 0.05, 5.0, 16.0, 18.6),
    ("S4", 0.05, 10.0, 16.0, 18.6),
];

/// `min 0.1 x1^3 + 0.1 x2^3 + 0.1 x1 x2  s.t. x1 + x2 = 1, x in [-1, 1]^2`,
/// one scalar agent per coordinate, with presets S1..S4.
pub fn p1<T: Real>() -> (CoupledProblem<T>, Vec<Preset<T>>) {
    let cubic: Oracle<T> = Arc::new(|x: &[T]| {
        let t = x[0];
        (T::lit(0.1) * t * t * t, vec![T::lit(0.3) * t * t])
    });
    let agent = || {
        AgentSpec::new(
            cubic.clone(),
            BoxSet::uniform(1, -T::one(), T::one()).expect("valid box"),
            Matrix::identity(1),
            T::lit(0.6),
        )
        .expect("valid agent")
    };
    let g: Oracle<T> = Arc::new(|x: &[T]| {
        let k = T::lit(0.1);
        (k * x[0] * x[1], vec![k * x[1], k * x[0]])
    });
    let problem = CoupledProblem::new(vec![agent(), agent()], g, vec![T::one()], T::lit(0.6), T::lit(0.2))
        .expect("valid instance");
    let presets = P1_TUPLES
        .iter()
        .map(|&(name, tau, rho, beta, c)| Preset {
            name,
            params: AlgoParams::new(
                T::lit(rho),
                T::lit(tau),
                T::lit(beta),
                T::lit(c),
                T::lit(P1_EPSILON),
                P1_MAX_ITERS,
            )
            .expect("valid preset"),
        })
        .collect();
    (problem, presets)
}

/// `(x0, lambda0) = ((0.2, 0.8), 0)`.
pub fn p1_start<T: Real>() -> (Vec<T>, Vec<T>) {
    (vec![T::lit(0.2), T::lit(0.8)], vec![T::zero()])
}

/// Same as [`p1`].
pub fn make_p1<T: Real>() -> (CoupledProblem<T>, Vec<Preset<T>>) {
    p1()
}

pub fn p1_preset<T: Real>(name: &str) -> Option<Preset<T>> {
    p1::<T>().1.into_iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// Building and tariff data for the HVAC instance (cooling mode: outdoor air
/// hotter than supply air, `C_ii < 0`). Zones are 0-based here.
#[derive(Debug, Clone, PartialEq)]
pub struct HvacParams {
    pub zones: usize,
    pub horizon: usize,
    /// slot length in hours
    pub dt: f64,
    pub price: Vec<f64>,
    pub cp: f64,
    pub dr: f64,
    pub eta: f64,
    pub kappa_f: f64,
    pub t_out: Vec<f64>,
    pub t_cool: f64,
    pub a_self: Vec<f64>,
    /// `(i, j, A_ij)`, `j` a neighbour of `i`
    pub a_neigh: Vec<(usize, usize, f64)>,
    pub c_self: Vec<f64>,
    /// `d_load[i][t]`
    pub d_load: Vec<Vec<f64>>,
    pub t_min: f64,
    pub t_max: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub m_bar: f64,
    pub penalty_m: f64,
    /// initial zone temperatures (fixed, not decision variables)
    pub t_init: Vec<f64>,
    pub adjacency: Vec<Vec<usize>>,
}

impl Default for HvacParams {
    fn default() -> Self {
        Self::synthesized(3, 8)
    }
}

impl HvacParams {
    /// Zones on a line (each adjacent to its predecessor and successor),
    /// half-hour slots, sinusoidal outdoor temperature and price, and an
    /// occupancy bump in the middle of the horizon. `D_ii` folds the leak
    /// towards outdoor air into the load.
    pub fn synthesized(zones: usize, horizon: usize) -> Self {
        let n = zones.max(1);
        let h = horizon.max(1);
        let phase = |t: usize| std::f64::consts::PI * (t as f64 + 0.5) / h as f64;
        let price: Vec<f64> = (0..h).map(|t| 0.15 + 0.1 * phase(t).sin()).collect();
        let t_out: Vec<f64> = (0..h).map(|t| 30.0 + 3.0 * phase(t).sin()).collect();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut v = vec![];
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        let a_self = vec![0.85; n];
        let mut a_neigh = vec![];
        for (i, nb) in adjacency.iter().enumerate() {
            for &j in nb {
                a_neigh.push((i, j, 0.03));
            }
        }
        let d_load = (0..n)
            .map(|i| {
                let leak = 1.0 - a_self[i] - 0.03 * adjacency[i].len() as f64;
                (0..h)
                    .map(|t| {
                        let occ = 0.3 + 0.3 * (i as f64 + 1.0) / n as f64 * phase(t).sin();
                        leak * t_out[t] + occ
                    })
                    .collect()
            })
            .collect();
        Self {
            zones: n,
            horizon: h,
            dt: 0.5,
            price,
            cp: 1.005,
            dr: 0.3,
            eta: 0.9,
            kappa_f: 0.5,
            t_out,
            t_cool: 13.0,
            a_self,
            a_neigh,
            c_self: vec![-0.25; n],
            d_load,
            t_min: 24.0,
            t_max: 26.0,
            m_min: 0.1,
            m_max: 1.0,
            m_bar: 0.7 * n as f64,
            penalty_m: 10.0,
            t_init: vec![25.5; n],
            adjacency,
        }
    }

    /// Ten zones over a day of half-hour slots. Slow at desk scale.
    pub fn full_scale() -> Self {
        Self::synthesized(10, 48)
    }

    pub fn check(&self) -> Result<()> {
        let (n, h) = (self.zones, self.horizon);
        let bad = |s: String| Err(AdmmError::InfeasibleBounds(s));
        if n == 0 || h == 0 {
            return bad("zones and horizon must be positive".into());
        }
        if !(self.t_min < self.t_max) {
            return bad(format!("comfort band [{}, {}] is empty", self.t_min, self.t_max));
        }
        if !(self.m_min <= self.m_max) {
            return bad(format!("flow band [{}, {}] is empty", self.m_min, self.m_max));
        }
        if !(self.m_bar >= n as f64 * self.m_min) {
            return bad(format!(
                "flow cap {} below {} zones at minimum flow {}",
                self.m_bar, n, self.m_min
            ));
        }
        let lens = [
            ("price", self.price.len(), h),
            ("t_out", self.t_out.len(), h),
            ("a_self", self.a_self.len(), n),
            ("c_self", self.c_self.len(), n),
            ("d_load", self.d_load.len(), n),
            ("t_init", self.t_init.len(), n),
            ("adjacency", self.adjacency.len(), n),
        ];
        for (what, found, expected) in lens {
            if found != expected {
                return Err(AdmmError::DimensionMismatch { what, expected, found });
            }
        }
        if let Some(row) = self.d_load.iter().find(|r| r.len() != h) {
            return Err(AdmmError::DimensionMismatch {
                what: "d_load row",
                expected: h,
                found: row.len(),
            });
        }
        for (i, nb) in self.adjacency.iter().enumerate() {
            if nb.iter().any(|&j| j >= n || j == i) {
                return bad(format!("zone {i} has an invalid neighbour list"));
            }
        }
        let all = [
            self.dt,
            self.cp,
            self.dr,
            self.eta,
            self.kappa_f,
            self.t_cool,
            self.t_min,
            self.t_max,
            self.m_min,
            self.m_max,
            self.m_bar,
            self.penalty_m,
        ];
        let vectors = self
            .price
            .iter()
            .chain(&self.t_out)
            .chain(&self.a_self)
            .chain(&self.c_self)
            .chain(&self.t_init)
            .chain(self.d_load.iter().flatten())
            .chain(self.a_neigh.iter().map(|e| &e.2));
        if all.iter().chain(vectors).any(|v| !v.is_finite()) {
            return Err(AdmmError::NonFiniteValue("hvac parameter"));
        }
        if self.penalty_m < 0.0 || self.kappa_f < 0.0 || self.price.iter().any(|&c| c < 0.0) {
            return bad("penalty, fan coefficient and prices must be nonnegative".into());
        }
        Ok(())
    }

    fn neighbour_weight(&self, i: usize, j: usize) -> f64 {
        self.a_neigh.iter().filter(|e| e.0 == i && e.1 == j).map(|e| e.2).sum()
    }

    /// Zones whose temperature agent `i` keeps a copy of (itself included), sorted.
    pub fn copied_zones(&self, i: usize) -> Vec<usize> {
        let mut s = self.adjacency[i].clone();
        s.push(i);
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Position of every decision variable in the stacked vector. Agents
/// `0..zones` are the zones, agent `zones` holds the consensus temperatures
/// and the flow-cap slacks.
#[derive(Debug, Clone, PartialEq)]
pub struct HvacLayout {
    pub zones: usize,
    pub horizon: usize,
    /// `copies[i]` lists `(j, start)`: `T^{ij}_t` for `t = 1..=T` at `start + t - 1`
    pub copies: Vec<Vec<(usize, usize)>>,
    /// `flows[i]`: `m^i_t` for `t = 0..T` at `flows[i] + t`
    pub flows: Vec<usize>,
    /// `consensus + j * T + t - 1` holds the consensus temperature of zone `j`
    pub consensus: usize,
    /// `slack + t`
    pub slack: usize,
    pub n: usize,
}

impl HvacLayout {
    pub fn new(p: &HvacParams) -> Self {
        let h = p.horizon;
        let mut copies = vec![];
        let mut flows = vec![];
        let mut at = 0;
        for i in 0..p.zones {
            let mut c = vec![];
            for j in p.copied_zones(i) {
                c.push((j, at));
                at += h;
            }
            copies.push(c);
            flows.push(at);
            at += h;
        }
        let consensus = at;
        let slack = consensus + p.zones * h;
        Self {
            zones: p.zones,
            horizon: h,
            copies,
            flows,
            consensus,
            slack,
            n: slack + h,
        }
    }

    pub fn own_temperature(&self, i: usize) -> usize {
        self.copies[i].iter().find(|c| c.0 == i).expect("own copy").1
    }

    pub fn temperature_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .copies
            .iter()
            .flatten()
            .flat_map(|&(_, s)| s..s + self.horizon)
            .collect();
        v.extend(self.consensus..self.slack);
        v
    }

    pub fn flow_indices(&self) -> Vec<usize> {
        self.flows.iter().flat_map(|&s| s..s + self.horizon).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }
    fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
    fn add(self, o: Self) -> Self {
        Self::new(self.lo + o.lo, self.hi + o.hi)
    }
    fn scale(self, k: f64) -> Self {
        if k >= 0.0 {
            Self::new(k * self.lo, k * self.hi)
        } else {
            Self::new(k * self.hi, k * self.lo)
        }
    }
    fn mul(self, o: Self) -> Self {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Self::new(
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
    fn mag(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Per-zone data in the agent's local coordinates.
#[derive(Debug, Clone)]
struct ZoneModel {
    h: usize,
    own: usize,
    /// `(local start, A_ij, initial temperature of j)` for neighbours
    neigh: Vec<(usize, f64, f64)>,
    flow: usize,
    dim: usize,
    a_ii: f64,
    c_ii: f64,
    t_cool: f64,
    t_init: f64,
    d: Vec<f64>,
    /// coefficient of `m_t`
    lin_m: Vec<f64>,
    /// coefficient of `m_t (T_t - T^c)`
    bil: Vec<f64>,
    penalty: f64,
}

impl ZoneModel {
    fn build(p: &HvacParams, i: usize) -> Self {
        let h = p.horizon;
        let zones = p.copied_zones(i);
        let mut own = 0;
        let mut neigh = vec![];
        for (k, &j) in zones.iter().enumerate() {
            if j == i {
                own = k * h;
            } else {
                neigh.push((k * h, p.neighbour_weight(i, j), p.t_init[j]));
            }
        }
        let flow = zones.len() * h;
        let w: Vec<f64> = (0..h).map(|t| p.price[t] * p.dt * p.cp).collect();
        Self {
            h,
            own,
            neigh,
            flow,
            dim: flow + h,
            a_ii: p.a_self[i],
            c_ii: p.c_self[i],
            t_cool: p.t_cool,
            t_init: p.t_init[i],
            d: p.d_load[i].clone(),
            lin_m: (0..h).map(|t| w[t] * (1.0 - p.dr) * (p.t_out[t] - p.t_cool)).collect(),
            bil: (0..h).map(|t| w[t] * p.eta * p.dr).collect(),
            penalty: p.penalty_m,
        }
    }

    /// Value of `T_t` (slot `t = 0` is the fixed initial state).
    fn temp<T: Real>(&self, x: &[T], start: usize, t: usize, init: f64) -> T {
        if t == 0 {
            T::lit(init)
        } else {
            x[start + t - 1]
        }
    }

    fn eval<T: Real>(&self, x: &[T]) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); self.dim];
        let mut val = T::zero();
        let (c, tc) = (T::lit(self.c_ii), T::lit(self.t_cool));
        for t in 0..self.h {
            let m = x[self.flow + t];
            let tt = self.temp(x, self.own, t, self.t_init);
            let lift = tt - tc;
            // electricity
            val = val + T::lit(self.lin_m[t]) * m + T::lit(self.bil[t]) * m * lift;
            grad[self.flow + t] = grad[self.flow + t] + T::lit(self.lin_m[t]) + T::lit(self.bil[t]) * lift;
            if t > 0 {
                grad[self.own + t - 1] = grad[self.own + t - 1] + T::lit(self.bil[t]) * m;
            }
            // dynamics penalty
            let mut r = x[self.own + t] - T::lit(self.a_ii) * tt - c * m * lift - T::lit(self.d[t]);
            for &(s, a, init) in &self.neigh {
                r = r - T::lit(a) * self.temp(x, s, t, init);
            }
            let k = T::lit(2.0 * self.penalty) * r;
            val = val + T::lit(self.penalty) * r * r;
            grad[self.own + t] = grad[self.own + t] + k;
            if t > 0 {
                grad[self.own + t - 1] = grad[self.own + t - 1] - k * (T::lit(self.a_ii) + c * m);
                for &(s, a, _) in &self.neigh {
                    grad[s + t - 1] = grad[s + t - 1] - k * T::lit(a);
                }
            }
            grad[self.flow + t] = grad[self.flow + t] - k * c * lift;
        }
        (val, grad)
    }

    /// `lambda_max` of an entrywise bound on `|Hessian|` over the box.
    fn lipschitz(&self, p: &HvacParams) -> Result<f64> {
        let temp = Interval::new(p.t_min, p.t_max);
        let flow = Interval::new(p.m_min, p.m_max);
        let mut hb = Matrix::<f64>::zeros(self.dim, self.dim);
        for t in 0..self.h {
            let tt = if t == 0 { Interval::point(self.t_init) } else { temp };
            let lift = tt.add(Interval::point(-self.t_cool));
            // r = T_{t+1} - a T_t - sum a_ij T^j_t - c m (T_t - Tc) - d
            let mut r = temp
                .add(tt.scale(-self.a_ii))
                .add(flow.mul(lift).scale(-self.c_ii))
                .add(Interval::point(-self.d[t]));
            for &(_, a, init) in &self.neigh {
                let tj = if t == 0 { Interval::point(init) } else { temp };
                r = r.add(tj.scale(-a));
            }
            let mut g: Vec<(usize, f64)> = vec![(self.own + t, 1.0)];
            g.push((self.flow + t, lift.scale(-self.c_ii).mag()));
            if t > 0 {
                g.push((
                    self.own + t - 1,
                    Interval::point(-self.a_ii).add(flow.scale(-self.c_ii)).mag(),
                ));
                for &(s, a, _) in &self.neigh {
                    g.push((s + t - 1, a.abs()));
                }
            }
            let two_m = 2.0 * self.penalty;
            for &(a, ga) in &g {
                for &(b, gb) in &g {
                    hb[(a, b)] += two_m * ga * gb;
                }
            }
            if t > 0 {
                let cross = two_m * r.mag() * self.c_ii.abs() + self.bil[t].abs();
                let (a, b) = (self.own + t - 1, self.flow + t);
                hb[(a, b)] += cross;
                hb[(b, a)] += cross;
            }
        }
        max_eigenvalue_symmetric(&hb)
    }
}

/// Zone agents hold their own and neighbour temperature trajectories and
/// their flows; the last agent holds the consensus temperatures and the
/// flow-cap slacks. `f_i` is zone `i`'s electricity cost plus `M` times its
/// squared dynamics residuals; `g` is the shared fan-power term.
pub fn make_hvac<T: Real>(p: &HvacParams) -> Result<CoupledProblem<T>> {
    p.check()?;
    let layout = HvacLayout::new(p);
    let (nz, h) = (p.zones, p.horizon);
    let copies: usize = layout.copies.iter().map(Vec::len).sum();
    let m = copies * h + h;
    let mut agents = Vec::with_capacity(nz + 1);
    let mut lf = 0.0f64;
    let mut row = 0;
    for i in 0..nz {
        let model = ZoneModel::build(p, i);
        let li = model.lipschitz(p)?;
        lf = lf.max(li);
        let mut a = Matrix::zeros(m, model.dim);
        for k in 0..layout.copies[i].len() {
            for t in 0..h {
                a[(row, k * h + t)] = T::one();
                row += 1;
            }
        }
        for t in 0..h {
            a[(copies * h + t, model.flow + t)] = T::one();
        }
        let mut lower = vec![T::lit(p.t_min); model.flow];
        let mut upper = vec![T::lit(p.t_max); model.flow];
        lower.extend(vec![T::lit(p.m_min); h]);
        upper.extend(vec![T::lit(p.m_max); h]);
        let bounds = BoxSet::new(lower, upper)?;
        let oracle: Oracle<T> = Arc::new(move |x: &[T]| model.eval(x));
        agents.push(AgentSpec::new(oracle, bounds, a, T::lit(li))?);
    }
    let dim0 = nz * h + h;
    let mut a0 = Matrix::zeros(m, dim0);
    let mut r = 0;
    for i in 0..nz {
        for &(j, _) in &layout.copies[i] {
            for t in 0..h {
                a0[(r, j * h + t)] = -T::one();
                r += 1;
            }
        }
    }
    for t in 0..h {
        a0[(copies * h + t, nz * h + t)] = T::one();
    }
    let mut lower = vec![T::lit(p.t_min); nz * h];
    let mut upper = vec![T::lit(p.t_max); nz * h];
    lower.extend(vec![T::zero(); h]);
    upper.extend(vec![T::lit(p.m_bar - nz as f64 * p.m_min); h]);
    let zero: Oracle<T> = Arc::new(|x: &[T]| (T::zero(), vec![T::zero(); x.len()]));
    agents.push(AgentSpec::new(zero, BoxSet::new(lower, upper)?, a0, T::zero())?);

    let mut rhs = vec![T::zero(); copies * h];
    rhs.extend(vec![T::lit(p.m_bar); h]);

    let fan: Vec<f64> = (0..h).map(|t| p.price[t] * p.kappa_f * p.dt).collect();
    let lg = fan.iter().map(|w| 2.0 * w * nz as f64).fold(0.0, f64::max);
    let flows = layout.flows.clone();
    let n = layout.n;
    let g: Oracle<T> = Arc::new(move |x: &[T]| {
        let mut grad = vec![T::zero(); n];
        let mut val = T::zero();
        for t in 0..h {
            let s: T = flows.iter().map(|&f| x[f + t]).sum();
            let w = T::lit(fan[t]);
            val = val + w * s * s;
            for &f in &flows {
                grad[f + t] = T::lit(2.0) * w * s;
            }
        }
        (val, grad)
    });
    CoupledProblem::new(agents, g, rhs, T::lit(lf), T::lit(lg))
}

/// Deliberately inconsistent start: zone copies at the initial temperatures
/// (clipped to the comfort band), consensus at the band midpoint, minimum
/// flows, zero slack.
pub fn hvac_initial_point<T: Real>(p: &HvacParams) -> Vec<T> {
    let layout = HvacLayout::new(p);
    let mut x = vec![T::zero(); layout.n];
    for i in 0..p.zones {
        for &(j, s) in &layout.copies[i] {
            let v = p.t_init[j].max(p.t_min).min(p.t_max);
            for t in 0..p.horizon {
                x[s + t] = T::lit(v);
            }
        }
        for t in 0..p.horizon {
            x[layout.flows[i] + t] = T::lit(p.m_min);
        }
    }
    let mid = 0.5 * (p.t_min + p.t_max);
    for v in &mut x[layout.consensus..layout.slack] {
        *v = T::lit(mid);
    }
    x
}

/// `(tau, c) = (0.1, 8.7)`, `rho = rho_factor (L_f + L_g)` and the smallest
/// admissible `beta` (identity `B_i`) times 1.05.
pub fn suggested_params<T: Real>(
    problem: &CoupledProblem<T>,
    rho_factor: T,
    epsilon: T,
    max_iters: usize,
) -> Result<AlgoParams<T>> {
    let rho_f = problem.lipschitz_f() + problem.lipschitz_g();
    let rho = rho_factor * rho_f.max(T::lit(1e-3));
    let c = T::lit(8.7);
    let beta = minimal_beta(problem, rho, c, T::lit(1.05))?;
    AlgoParams::new(rho, T::lit(0.1), beta, c, epsilon, max_iters)
}

/// [`suggested_params`] with `rho = 4 (L_f + L_g)` and `epsilon = 1e-8`.
pub fn hvac_params<T: Real>(problem: &CoupledProblem<T>, max_iters: usize) -> Result<AlgoParams<T>> {
    suggested_params(problem, T::lit(4.0), T::lit(1e-8), max_iters)
}

/// Knobs for [`make_random_instance_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub n_agents: usize,
    pub dims: usize,
    pub m_rows: usize,
    pub seed: u64,
    /// PSD `P_i` and no sine term
    pub convex: bool,
    /// weight of the shared quadratic `g`
    pub coupling_weight: f64,
}

/// `f_i(x) = x'P_i x / 2 + q_i'x + gamma_i sum_j sin(x_j)` on `[-1, 1]^dims`
/// with indefinite symmetric `P_i`, `g(x) = eps x'R'R x / 2`, and
/// `b = A x_feas` for a random in-box `x_feas`.
pub fn make_random_instance<T: Real>(
    n_agents: usize,
    dims: usize,
    m_rows: usize,
    seed: u64,
) -> Result<CoupledProblem<T>> {
    make_random_instance_with(RandomSpec {
        n_agents,
        dims,
        m_rows,
        seed,
        convex: false,
        coupling_weight: 0.05,
    })
}

pub fn make_random_instance_with<T: Real>(spec: RandomSpec) -> Result<CoupledProblem<T>> {
    let RandomSpec {
        n_agents,
        dims,
        m_rows,
        seed,
        convex,
        coupling_weight,
    } = spec;
    if n_agents == 0 || dims == 0 || m_rows == 0 {
        return Err(AdmmError::InvalidProblem("sizes must be positive".into()));
    }
    let mut rng = Lcg64::new(seed);
    let n = n_agents * dims;
    let mut agents = Vec::with_capacity(n_agents);
    let mut x_feas = Vec::with_capacity(n);
    let mut lf = 0.0f64;
    let mut blocks = vec![];
    for _ in 0..n_agents {
        let mut p = Matrix::<f64>::zeros(dims, dims);
        if convex {
            let mut l = Matrix::<f64>::zeros(dims, dims);
            for r in 0..dims {
                for c in 0..dims {
                    l[(r, c)] = rng.uniform(-1.0, 1.0);
                }
            }
            p = l.gram().scaled(1.0 / dims as f64);
            p.add_diagonal(0.1);
        } else {
            for r in 0..dims {
                for c in r..dims {
                    let v = rng.uniform(-1.0, 1.0);
                    p[(r, c)] = v;
                    p[(c, r)] = v;
                }
            }
        }
        let q: Vec<f64> = (0..dims).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let gamma = if convex { 0.0 } else { rng.uniform(0.0, 0.5) };
        let mut a = Matrix::<f64>::zeros(m_rows, dims);
        for r in 0..m_rows {
            for c in 0..dims {
                a[(r, c)] = rng.uniform(-1.0, 1.0);
            }
        }
        x_feas.extend((0..dims).map(|_| rng.uniform(-0.5, 0.5)));
        let li = spectral_norm_symmetric(&p)? + gamma;
        lf = lf.max(li);
        let pt = to_t::<T>(&p);
        let qt: Vec<T> = q.iter().map(|&v| T::lit(v)).collect();
        let gt = T::lit(gamma);
        let oracle: Oracle<T> = Arc::new(move |x: &[T]| {
            let px = pt.mul_vec(x);
            let mut val = T::zero();
            let mut grad = vec![T::zero(); x.len()];
            for j in 0..x.len() {
                val = val + T::lit(0.5) * x[j] * px[j] + qt[j] * x[j] + gt * x[j].sin();
                grad[j] = px[j] + qt[j] + gt * x[j].cos();
            }
            (val, grad)
        });
        blocks.push(a.clone());
        agents.push(AgentSpec::new(
            oracle,
            BoxSet::uniform(dims, -T::one(), T::one())?,
            to_t(&a),
            T::lit(li),
        )?);
    }
    let mut r = Matrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = rng.uniform(-1.0, 1.0) / (n as f64).sqrt();
        }
    }
    let h = r.gram().scaled(coupling_weight);
    let lg = spectral_norm_symmetric(&h)?;
    let a = Matrix::hstack(&blocks)?;
    let rhs: Vec<T> = a.mul_vec(&x_feas).into_iter().map(T::lit).collect();
    let ht = to_t::<T>(&h);
    let g: Oracle<T> = Arc::new(move |x: &[T]| {
        let hx = ht.mul_vec(x);
        let val = x.iter().zip(&hx).map(|(&a, &b)| a * b).sum::<T>() * T::lit(0.5);
        (val, hx)
    });
    CoupledProblem::new(agents, g, rhs, T::lit(lf), T::lit(lg))
}

/// The in-box point the right-hand side was built from.
pub fn random_feasible_point(spec: RandomSpec) -> Vec<f64> {
    let mut rng = Lcg64::new(spec.seed);
    let mut out = vec![];
    let per_p = if spec.convex {
        spec.dims * spec.dims
    } else {
        spec.dims * (spec.dims + 1) / 2
    };
    for _ in 0..spec.n_agents {
        for _ in 0..per_p + spec.dims + usize::from(!spec.convex) + spec.m_rows * spec.dims {
            rng.next_u64();
        }
        out.extend((0..spec.dims).map(|_| rng.uniform(-0.5, 0.5)));
    }
    out
}

fn to_t<T: Real>(m: &Matrix<f64>) -> Matrix<T> {
    Matrix::from_row_major(m.rows(), m.cols(), m.as_slice().iter().map(|&v| T::lit(v)).collect()).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::validate_params;
    use crate::problem::{finite_difference_check, sampled_lipschitz_ratio, stacked_local_oracle};

    #[test]
    fn p1_moduli_and_feasible_point() {
        let (p, presets) = p1::<f64>();
        assert_eq!(p.lipschitz_f(), 0.6);
        assert_eq!(p.lipschitz_g(), 0.2);
        assert_eq!(p.coupling_residual(&[0.5, 0.5]), vec![0.0]);
        assert!((p.objective(&[0.5, 0.5]).unwrap() - 0.05).abs() < 1e-15);
        let names: Vec<_> = presets.iter().map(|s| s.name).collect();
        assert_eq!(names, ["S1", "S2", "S3", "S4"]);
        let s3 = validate_params(&p, &presets[2].params).unwrap();
        assert!(s3.passes);
        assert!((s3.c_min - 1.95 / 0.105).abs() < 1e-12);
    }

    #[test]
    fn hvac_structure() {
        let hp = HvacParams::default();
        let p = make_hvac::<f64>(&hp).unwrap();
        let layout = HvacLayout::new(&hp);
        assert_eq!(p.n(), layout.n);
        assert_eq!(p.num_agents(), hp.zones + 1);
        let a = p.coupling_matrix();
        let consensus = layout.consensus..layout.n;
        for r in 0..a.rows() {
            let shared: Vec<f64> = consensus.clone().map(|c| a[(r, c)]).filter(|v| *v != 0.0).collect();
            assert_eq!(shared.len(), 1, "row {r}");
            assert!(shared[0].abs() == 1.0);
        }
        let x0 = hvac_initial_point::<f64>(&hp);
        assert!(p.bounds().contains(&x0));
        assert!(crate::scalar::norm(&p.coupling_residual(&x0)) > 0.0);
    }

    #[test]
    fn hvac_fan_gradient_is_symmetric_across_zones() {
        let hp = HvacParams::default();
        let p = make_hvac::<f64>(&hp).unwrap();
        let layout = HvacLayout::new(&hp);
        let x = hvac_initial_point::<f64>(&hp);
        let (_, g) = p.composite_eval(&x).unwrap();
        for t in 0..hp.horizon {
            let w = 2.0 * hp.price[t] * hp.kappa_f * hp.dt * hp.zones as f64 * hp.m_min;
            for &f in &layout.flows {
                assert!((g[f + t] - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hvac_gradients_and_moduli() {
        let hp = HvacParams::default();
        let p = make_hvac::<f64>(&hp).unwrap();
        let local = stacked_local_oracle(&p);
        let fd = finite_difference_check(&local, p.bounds(), 20, 3, 1e-5);
        assert!(fd.passed, "{fd:?}");
        let ratio = sampled_lipschitz_ratio(&local, p.bounds(), 200, 5);
        assert!(ratio <= p.lipschitz_f());
    }

    #[test]
    fn hvac_rejects_bad_bands() {
        let hp = HvacParams {
            m_bar: 0.1,
            ..HvacParams::default()
        };
        assert!(matches!(make_hvac::<f64>(&hp), Err(AdmmError::InfeasibleBounds(_))));
        let hp = HvacParams {
            t_min: 27.0,
            ..HvacParams::default()
        };
        assert!(matches!(make_hvac::<f64>(&hp), Err(AdmmError::InfeasibleBounds(_))));
    }

    #[test]
    fn random_instance_is_reproducible_and_feasible() {
        let spec = RandomSpec {
            n_agents: 3,
            dims: 2,
            m_rows: 2,
            seed: 11,
            convex: false,
            coupling_weight: 0.05,
        };
        let a = make_random_instance_with::<f64>(spec).unwrap();
        let b = make_random_instance_with::<f64>(spec).unwrap();
        assert_eq!(a.coupling_matrix(), b.coupling_matrix());
        assert_eq!(a.rhs(), b.rhs());
        let x = vec![0.3, -0.2, 0.9, 0.1, -0.7, 0.4];
        assert_eq!(a.total_eval(&x).unwrap(), b.total_eval(&x).unwrap());
        let xf = random_feasible_point(spec);
        assert!(a.coupling_residual(&xf).iter().all(|v| v.abs() < 1e-15));
        let ratio = sampled_lipschitz_ratio(&stacked_local_oracle(&a), a.bounds(), 200, 1);
        assert!(ratio <= a.lipschitz_f());
    }
}
