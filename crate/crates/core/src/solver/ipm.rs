//! Primal-dual interior-point method with a filter line search.
//!
//! Inequality rows receive slacks, which are condensed out of the Newton
//! system; the remaining KKT matrix
//!
//! ```text
//! [ W + Σx + δw·I    Jᵀ ]
//! [ J               −D  ]
//! ```
//!
//! is factorized blockwise through [`ArrowSystem`], and `δw` is raised until
//! the inertia is `(n, m, 0)`.

use log::{debug, trace};
use serde::{Deserialize, Serialize};

use super::{SolveStatus, SolverSettings};
use crate::formulation::Qcqp;
use crate::linalg::{ArrowFactor, ArrowSystem, Inertia};

const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA_PHI: f64 = 1e-8;
const KAPPA_SOC: f64 = 0.99;
const MAX_SOC: usize = 4;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const PIVOT_ZERO: f64 = 1e-13;
const MAX_REFINE: usize = 10;
const REFINE_TOL: f64 = 1e-14;

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Scaled objective.
    pub objective: f64,
    pub mu: f64,
    pub inf_pr: f64,
    pub inf_du: f64,
    pub compl: f64,
    pub reg: f64,
    pub alpha_pr: f64,
    pub alpha_du: f64,
    pub ls_trials: usize,
}

pub(crate) struct IpmOutput {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub zl: Vec<f64>,
    pub zu: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Position of a variable or row inside the arrowhead system.
#[derive(Debug, Clone, Copy)]
struct Pos {
    block: Option<usize>,
    local: usize,
}

struct Structure {
    var_pos: Vec<Pos>,
    row_pos: Vec<Pos>,
    block_dims: Vec<usize>,
    border_dim: usize,
}

impl Structure {
    fn new(q: &Qcqp) -> Self {
        let nb = q.n_blocks();
        let mut nv = vec![0usize; nb + 1];
        let slot = |b: Option<usize>| b.unwrap_or(nb);
        let var_pos: Vec<Pos> = q
            .var_block
            .iter()
            .map(|&b| {
                let s = slot(b);
                nv[s] += 1;
                Pos {
                    block: b,
                    local: nv[s] - 1,
                }
            })
            .collect();
        let mut nr = vec![0usize; nb + 1];
        let row_pos: Vec<Pos> = q
            .constraints
            .iter()
            .map(|c| {
                let s = slot(c.block);
                nr[s] += 1;
                Pos {
                    block: c.block,
                    local: nv[s] + nr[s] - 1,
                }
            })
            .collect();
        Self {
            var_pos,
            row_pos,
            block_dims: (0..nb).map(|b| nv[b] + nr[b]).collect(),
            border_dim: nv[nb] + nr[nb],
        }
    }

    fn add(&self, sys: &mut ArrowSystem, a: Pos, b: Pos, v: f64) {
        match (a.block, b.block) {
            (Some(x), Some(y)) => {
                debug_assert_eq!(x, y, "entry couples two blocks");
                sys.blocks[x].add(a.local, b.local, v);
            }
            (Some(x), None) => sys.add_coupling(x, a.local, b.local, v),
            (None, Some(y)) => sys.add_coupling(y, b.local, a.local, v),
            (None, None) => sys.border.add(a.local, b.local, v),
        }
    }

    fn zero_rhs(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            self.block_dims.iter().map(|&d| vec![0.0; d]).collect(),
            vec![0.0; self.border_dim],
        )
    }

    fn set(&self, rhs: &mut (Vec<Vec<f64>>, Vec<f64>), p: Pos, v: f64) {
        match p.block {
            Some(b) => rhs.0[b][p.local] = v,
            None => rhs.1[p.local] = v,
        }
    }

    fn get(&self, rhs: &(Vec<Vec<f64>>, Vec<f64>), p: Pos) -> f64 {
        match p.block {
            Some(b) => rhs.0[b][p.local],
            None => rhs.1[p.local],
        }
    }
}

/// Iterate of the barrier problem.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    /// Slack per row (unused for equality rows).
    s: Vec<f64>,
    lambda: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    vl: Vec<f64>,
    vu: Vec<f64>,
}

#[derive(Clone)]
struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dl: Vec<f64>,
}

pub(crate) struct Ipm<'a> {
    q: &'a Qcqp,
    st: Structure,
    settings: &'a SolverSettings,
    obj_scale: f64,
    ineq: Vec<bool>,
    /// Jacobian rows, recomputed at each iterate.
    jac: Vec<Vec<(usize, f64)>>,
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

/// Moves `v` strictly inside `[l, u]` as IPOPT does.
fn push_inside(v: f64, l: f64, u: f64, k: f64) -> f64 {
    let pl = if finite(l) {
        let mut p = k * l.abs().max(1.0);
        if finite(u) {
            p = p.min(k * (u - l));
        }
        p
    } else {
        0.0
    };
    let pu = if finite(u) {
        let mut p = k * u.abs().max(1.0);
        if finite(l) {
            p = p.min(k * (u - l));
        }
        p
    } else {
        0.0
    };
    let mut v = v;
    if finite(l) {
        v = v.max(l + pl);
    }
    if finite(u) {
        v = v.min(u - pu);
    }
    if finite(l) && finite(u) && l + pl > u - pu {
        v = 0.5 * (l + u);
    }
    v
}

/// Largest `α ∈ (0, 1]` keeping `v + α d` at least `τ` of the way inside.
fn frac_to_bound(v: &[f64], d: &[f64], lo: &[f64], up: &[f64], tau: f64, mask: Option<&[bool]>) -> f64 {
    let mut a = 1.0f64;
    for i in 0..v.len() {
        if mask.is_some_and(|m| !m[i]) || d[i] == 0.0 {
            continue;
        }
        if d[i] < 0.0 && finite(lo[i]) {
            a = a.min(-tau * (v[i] - lo[i]) / d[i]);
        }
        if d[i] > 0.0 && finite(up[i]) {
            a = a.min(tau * (up[i] - v[i]) / d[i]);
        }
    }
    a.max(0.0)
}

type Rhs = (Vec<Vec<f64>>, Vec<f64>);

fn max_abs(v: &Rhs) -> f64 {
    v.0.iter().flatten().chain(&v.1).fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Iterative refinement of `sys·x = b` until the residual stops shrinking.
fn refine(sys: &ArrowSystem, fac: &ArrowFactor, b: &Rhs, x: &mut Rhs) {
    let scale = max_abs(b).max(1.0);
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_REFINE {
        let (y, y0) = sys.mul(&x.0, &x.1);
        let mut r: Rhs = (
            b.0.iter().zip(&y).map(|(bi, yi)| bi.iter().zip(yi).map(|(a, c)| a - c).collect()).collect(),
            b.1.iter().zip(&y0).map(|(a, c)| a - c).collect(),
        );
        let res = max_abs(&r);
        if res <= REFINE_TOL * scale || res >= 0.5 * prev {
            break;
        }
        prev = res;
        fac.solve(&mut r.0, &mut r.1);
        for (xi, ri) in x.0.iter_mut().zip(&r.0) {
            xi.iter_mut().zip(ri).for_each(|(a, c)| *a += c);
        }
        x.1.iter_mut().zip(&r.1).for_each(|(a, c)| *a += c);
    }
}

/// Same for nonnegative multipliers.
fn frac_to_zero(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut a = 1.0f64;
    for i in 0..z.len() {
        if dz[i] < 0.0 {
            a = a.min(-tau * z[i] / dz[i]);
        }
    }
    a.max(0.0)
}

impl<'a> Ipm<'a> {
    pub fn new(q: &'a Qcqp, settings: &'a SolverSettings) -> Self {
        let ineq = q.constraints.iter().map(|c| !c.is_equality()).collect();
        Self {
            q,
            st: Structure::new(q),
            settings,
            obj_scale: 1.0,
            ineq,
            jac: Vec::new(),
        }
    }

    pub fn obj_scale(&self) -> f64 {
        self.obj_scale
    }

    fn n(&self) -> usize {
        self.q.n_vars()
    }

    fn m(&self) -> usize {
        self.q.n_rows()
    }

    fn update_jacobian(&mut self, x: &[f64]) {
        let n = self.n();
        let mut dense = vec![0.0; n];
        self.jac = self
            .q
            .constraints
            .iter()
            .map(|c| {
                let vars = c.form.variables();
                c.form.add_gradient(x, 1.0, &mut dense);
                let row = vars.iter().map(|&v| (v, dense[v])).collect();
                for &v in &vars {
                    dense[v] = 0.0;
                }
                row
            })
            .collect();
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.obj_scale * self.q.objective.eval(x)
    }

    fn grad_f(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        self.q.objective.add_gradient(x, self.obj_scale, &mut g);
        g
    }

    /// Constraint residuals `g(x) − b` (equalities) or `g(x) − s`.
    fn residuals(&self, x: &[f64], s: &[f64]) -> Vec<f64> {
        self.q
            .constraints
            .iter()
            .enumerate()
            .map(|(r, c)| {
                let g = c.form.eval(x);
                if self.ineq[r] {
                    g - s[r]
                } else {
                    g - c.lower
                }
            })
            .collect()
    }

    fn theta(&self, x: &[f64], s: &[f64]) -> f64 {
        self.residuals(x, s).iter().map(|v| v.abs()).sum()
    }

    fn barrier(&self, x: &[f64], s: &[f64], mu: f64) -> f64 {
        let q = self.q;
        let mut phi = self.objective(x);
        for j in 0..self.n() {
            if finite(q.lower[j]) {
                phi -= mu * (x[j] - q.lower[j]).ln();
            }
            if finite(q.upper[j]) {
                phi -= mu * (q.upper[j] - x[j]).ln();
            }
        }
        for (r, c) in q.constraints.iter().enumerate() {
            if !self.ineq[r] {
                continue;
            }
            if finite(c.lower) {
                phi -= mu * (s[r] - c.lower).ln();
            }
            if finite(c.upper) {
                phi -= mu * (c.upper - s[r]).ln();
            }
        }
        phi
    }

    /// `(∇_x φ, ∇_s φ)` of the barrier function.
    fn barrier_grad(&self, p: &Point, mu: f64) -> (Vec<f64>, Vec<f64>) {
        let q = self.q;
        let mut gx = self.grad_f(&p.x);
        for j in 0..self.n() {
            if finite(q.lower[j]) {
                gx[j] -= mu / (p.x[j] - q.lower[j]);
            }
            if finite(q.upper[j]) {
                gx[j] += mu / (q.upper[j] - p.x[j]);
            }
        }
        let mut gs = vec![0.0; self.m()];
        for (r, c) in q.constraints.iter().enumerate() {
            if !self.ineq[r] {
                continue;
            }
            if finite(c.lower) {
                gs[r] -= mu / (p.s[r] - c.lower);
            }
            if finite(c.upper) {
                gs[r] += mu / (c.upper - p.s[r]);
            }
        }
        (gx, gs)
    }

    /// `∇f + Jᵀλ − z_L + z_U` and `−λ − v_L + v_U` (inequality rows).
    fn dual_residuals(&self, p: &Point) -> (Vec<f64>, Vec<f64>) {
        let mut gx = self.grad_f(&p.x);
        for (r, row) in self.jac.iter().enumerate() {
            for &(j, a) in row {
                gx[j] += a * p.lambda[r];
            }
        }
        for j in 0..self.n() {
            gx[j] += p.zu[j] - p.zl[j];
        }
        let gs = (0..self.m())
            .map(|r| {
                if self.ineq[r] {
                    -p.lambda[r] - p.vl[r] + p.vu[r]
                } else {
                    0.0
                }
            })
            .collect();
        (gx, gs)
    }

    /// `(inf_du / s_d, inf_pr, max |compl − μ| / s_c)`.
    fn errors(&self, p: &Point, mu: f64) -> (f64, f64, f64) {
        let q = self.q;
        let (gx, gs) = self.dual_residuals(p);
        let inf_du = gx.iter().chain(&gs).fold(0.0f64, |a, v| a.max(v.abs()));
        let inf_pr = self
            .residuals(&p.x, &p.s)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let mut compl = 0.0f64;
        let mut zsum = 0.0;
        let mut nbounds = 0usize;
        for j in 0..self.n() {
            if finite(q.lower[j]) {
                compl = compl.max((p.zl[j] * (p.x[j] - q.lower[j]) - mu).abs());
                zsum += p.zl[j];
                nbounds += 1;
            }
            if finite(q.upper[j]) {
                compl = compl.max((p.zu[j] * (q.upper[j] - p.x[j]) - mu).abs());
                zsum += p.zu[j];
                nbounds += 1;
            }
        }
        for (r, c) in q.constraints.iter().enumerate() {
            if !self.ineq[r] {
                continue;
            }
            if finite(c.lower) {
                compl = compl.max((p.vl[r] * (p.s[r] - c.lower) - mu).abs());
                zsum += p.vl[r];
                nbounds += 1;
            }
            if finite(c.upper) {
                compl = compl.max((p.vu[r] * (c.upper - p.s[r]) - mu).abs());
                zsum += p.vu[r];
                nbounds += 1;
            }
        }
        let lsum: f64 = p.lambda.iter().map(|v| v.abs()).sum();
        let s_d = (S_MAX.max((lsum + zsum) / ((self.m() + nbounds).max(1) as f64))) / S_MAX;
        let s_c = (S_MAX.max(zsum / (nbounds.max(1) as f64))) / S_MAX;
        (inf_du / s_d, inf_pr, compl / s_c)
    }

    fn sigma_x(&self, p: &Point) -> Vec<f64> {
        let q = self.q;
        (0..self.n())
            .map(|j| {
                let mut s = 0.0;
                if finite(q.lower[j]) {
                    s += p.zl[j] / (p.x[j] - q.lower[j]);
                }
                if finite(q.upper[j]) {
                    s += p.zu[j] / (q.upper[j] - p.x[j]);
                }
                s
            })
            .collect()
    }

    fn sigma_s(&self, p: &Point) -> Vec<f64> {
        self.q
            .constraints
            .iter()
            .enumerate()
            .map(|(r, c)| {
                if !self.ineq[r] {
                    return 0.0;
                }
                let mut s = 0.0;
                if finite(c.lower) {
                    s += p.vl[r] / (p.s[r] - c.lower);
                }
                if finite(c.upper) {
                    s += p.vu[r] / (c.upper - p.s[r]);
                }
                s
            })
            .collect()
    }

    /// KKT matrix without regularization and with the slack diagonal left out.
    fn assemble_base(&self, p: &Point, sigma_x: &[f64]) -> ArrowSystem {
        let st = &self.st;
        let mut sys = ArrowSystem::new(&st.block_dims, st.border_dim);
        let vp = &st.var_pos;
        self.q.objective.for_each_hessian(|i, j, h| {
            st.add(&mut sys, vp[i], vp[j], self.obj_scale * h);
        });
        for (r, c) in self.q.constraints.iter().enumerate() {
            let l = p.lambda[r];
            if l != 0.0 {
                c.form.for_each_hessian(|i, j, h| st.add(&mut sys, vp[i], vp[j], l * h));
            }
            for &(j, a) in &self.jac[r] {
                st.add(&mut sys, st.row_pos[r], vp[j], a);
            }
        }
        for j in 0..self.n() {
            st.add(&mut sys, vp[j], vp[j], sigma_x[j]);
        }
        sys
    }

    fn regularized(&self, base: &ArrowSystem, sigma_s: &[f64], dw: f64, dc: f64) -> ArrowSystem {
        let st = &self.st;
        let mut sys = base.clone();
        if dw != 0.0 {
            for j in 0..self.n() {
                st.add(&mut sys, st.var_pos[j], st.var_pos[j], dw);
            }
        }
        for r in 0..self.m() {
            let d = if self.ineq[r] {
                1.0 / (sigma_s[r] + dw) + dc
            } else {
                dc
            };
            if d != 0.0 {
                st.add(&mut sys, st.row_pos[r], st.row_pos[r], -d);
            }
        }
        sys
    }

    /// Solves the condensed system for `(dx, dλ)` and recovers `ds`.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sys: &ArrowSystem,
        fac: &ArrowFactor,
        rx: &[f64],
        rs: &[f64],
        rc: &[f64],
        sigma_s: &[f64],
        dw: f64,
    ) -> Direction {
        let st = &self.st;
        let mut rhs = st.zero_rhs();
        for j in 0..self.n() {
            st.set(&mut rhs, st.var_pos[j], rx[j]);
        }
        for r in 0..self.m() {
            let v = if self.ineq[r] {
                rc[r] + rs[r] / (sigma_s[r] + dw)
            } else {
                rc[r]
            };
            st.set(&mut rhs, st.row_pos[r], v);
        }
        let b = rhs.clone();
        fac.solve(&mut rhs.0, &mut rhs.1);
        refine(sys, fac, &b, &mut rhs);
        let dx: Vec<f64> = (0..self.n()).map(|j| st.get(&rhs, st.var_pos[j])).collect();
        let dl: Vec<f64> = (0..self.m()).map(|r| st.get(&rhs, st.row_pos[r])).collect();
        let ds = (0..self.m())
            .map(|r| {
                if self.ineq[r] {
                    (rs[r] + dl[r]) / (sigma_s[r] + dw)
                } else {
                    0.0
                }
            })
            .collect();
        Direction { dx, ds, dl }
    }

    fn initial_point(&mut self, x0: &[f64]) -> Point {
        let q = self.q;
        let k = self.settings.bound_push;
        let x: Vec<f64> = (0..self.n())
            .map(|j| push_inside(x0[j].clamp(q.lower[j], q.upper[j]), q.lower[j], q.upper[j], k))
            .collect();
        let s = q
            .constraints
            .iter()
            .enumerate()
            .map(|(r, c)| {
                if self.ineq[r] {
                    push_inside(c.form.eval(&x).clamp(c.lower, c.upper), c.lower, c.upper, k)
                } else {
                    0.0
                }
            })
            .collect();
        let g = {
            let mut g = vec![0.0; self.n()];
            q.objective.add_gradient(&x, 1.0, &mut g);
            g
        };
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.obj_scale = if gmax > 0.0 { (100.0 / gmax).min(1.0) } else { 1.0 };
        let ones_if = |cond: &dyn Fn(usize) -> bool, len: usize| -> Vec<f64> {
            (0..len).map(|i| if cond(i) { 1.0 } else { 0.0 }).collect()
        };
        let zl = ones_if(&|j| finite(q.lower[j]), self.n());
        let zu = ones_if(&|j| finite(q.upper[j]), self.n());
        let vl = ones_if(&|r| self.ineq[r] && finite(q.constraints[r].lower), self.m());
        let vu = ones_if(&|r| self.ineq[r] && finite(q.constraints[r].upper), self.m());
        Point {
            x,
            s,
            lambda: vec![0.0; self.m()],
            zl,
            zu,
            vl,
            vu,
        }
    }

    fn step_primal(&self, p: &Point, d: &Direction, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let x = p.x.iter().zip(&d.dx).map(|(a, b)| a + alpha * b).collect();
        let s = p.s.iter().zip(&d.ds).map(|(a, b)| a + alpha * b).collect();
        (x, s)
    }

    fn alpha_primal(&self, p: &Point, d: &Direction, tau: f64) -> f64 {
        let q = self.q;
        let ax = frac_to_bound(&p.x, &d.dx, &q.lower, &q.upper, tau, None);
        let (sl, su): (Vec<f64>, Vec<f64>) = q.constraints.iter().map(|c| (c.lower, c.upper)).unzip();
        let as_ = frac_to_bound(&p.s, &d.ds, &sl, &su, tau, Some(&self.ineq));
        ax.min(as_)
    }

    /// Bound-multiplier steps from the primal step.
    fn dual_steps(&self, p: &Point, d: &Direction, mu: f64) -> [Vec<f64>; 4] {
        let q = self.q;
        let n = self.n();
        let m = self.m();
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for j in 0..n {
            if finite(q.lower[j]) {
                let gap = p.x[j] - q.lower[j];
                dzl[j] = (mu - p.zl[j] * gap - p.zl[j] * d.dx[j]) / gap;
            }
            if finite(q.upper[j]) {
                let gap = q.upper[j] - p.x[j];
                dzu[j] = (mu - p.zu[j] * gap + p.zu[j] * d.dx[j]) / gap;
            }
        }
        let mut dvl = vec![0.0; m];
        let mut dvu = vec![0.0; m];
        for (r, c) in q.constraints.iter().enumerate() {
            if !self.ineq[r] {
                continue;
            }
            if finite(c.lower) {
                let gap = p.s[r] - c.lower;
                dvl[r] = (mu - p.vl[r] * gap - p.vl[r] * d.ds[r]) / gap;
            }
            if finite(c.upper) {
                let gap = c.upper - p.s[r];
                dvu[r] = (mu - p.vu[r] * gap + p.vu[r] * d.ds[r]) / gap;
            }
        }
        [dzl, dzu, dvl, dvu]
    }

    /// Keeps every bound multiplier within a factor `κ_Σ` of `μ / gap`.
    fn reset_multipliers(&self, p: &mut Point, mu: f64) {
        let q = self.q;
        let clamp = |z: &mut f64, gap: f64| {
            let lo = mu / (KAPPA_SIGMA * gap);
            let hi = KAPPA_SIGMA * mu / gap;
            *z = z.clamp(lo, hi.max(lo));
        };
        for j in 0..self.n() {
            if finite(q.lower[j]) {
                clamp(&mut p.zl[j], p.x[j] - q.lower[j]);
            }
            if finite(q.upper[j]) {
                clamp(&mut p.zu[j], q.upper[j] - p.x[j]);
            }
        }
        for (r, c) in q.constraints.iter().enumerate() {
            if !self.ineq[r] {
                continue;
            }
            if finite(c.lower) {
                clamp(&mut p.vl[r], p.s[r] - c.lower);
            }
            if finite(c.upper) {
                clamp(&mut p.vu[r], c.upper - p.s[r]);
            }
        }
    }

    /// Runs the method from `x0`. `accept` receives the reduced iterate
    /// whenever the internal termination test passes and may veto it.
    pub fn run(
        &mut self,
        x0: &[f64],
        mut accept: impl FnMut(&[f64], &[f64], &[f64], &[f64], f64) -> bool,
    ) -> IpmOutput {
        let settings = self.settings;
        let n = self.n();
        let m = self.m();
        let mut p = self.initial_point(x0);
        let mut mu = settings.mu_init;
        let mu_min = settings.kkt_tol.min(settings.feas_tol) / (KAPPA_EPS + 1.0);
        let mut tau = TAU_MIN.max(1.0 - mu);
        let mut trace = Vec::new();
        let mut last_dw = 0.0f64;
        let mut filter: Vec<(f64, f64)> = Vec::new();
        let theta0 = self.theta(&p.x, &p.s);
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut failures = 0usize;
        let expected = Inertia {
            positive: n,
            negative: m,
            zero: 0,
        };

        let finish = |status, p: &Point, it, trace| IpmOutput {
            status,
            x: p.x.clone(),
            lambda: p.lambda.clone(),
            zl: p.zl.clone(),
            zu: p.zu.clone(),
            iterations: it,
            trace,
        };

        for iter in 0..=settings.max_iter {
            self.update_jacobian(&p.x);
            let (du0, pr0, co0) = self.errors(&p, 0.0);
            if du0 <= settings.kkt_tol
                && pr0 <= settings.feas_tol
                && co0 <= settings.kkt_tol
                && accept(&p.x, &p.lambda, &p.zl, &p.zu, self.obj_scale)
            {
                debug!("converged after {iter} iterations");
                return finish(SolveStatus::Optimal, &p, iter, trace);
            }
            if iter == settings.max_iter {
                return finish(SolveStatus::IterationLimit, &p, iter, trace);
            }

            // Barrier update.
            loop {
                let (du, pr, co) = self.errors(&p, mu);
                if mu <= mu_min || du.max(pr).max(co) > KAPPA_EPS * mu {
                    break;
                }
                mu = mu_min.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                tau = TAU_MIN.max(1.0 - mu);
                filter.clear();
            }

            // Newton system with inertia correction.
            let sigma_x = self.sigma_x(&p);
            let sigma_s = self.sigma_s(&p);
            let base = self.assemble_base(&p, &sigma_x);
            let (mut dw, mut dc) = (0.0f64, 0.0f64);
            let fac = loop {
                let sys = self.regularized(&base, &sigma_s, dw, dc);
                let fac = sys.factor(PIVOT_ZERO);
                let inertia = fac.inertia();
                if inertia == expected {
                    break Some((sys, fac));
                }
                trace!("iter {iter}: inertia {inertia:?} with dw={dw:e} dc={dc:e}");
                if inertia.zero > 0 && dc == 0.0 {
                    dc = 1e-8 * mu.powf(0.25);
                    continue;
                }
                dw = if dw == 0.0 {
                    if last_dw == 0.0 {
                        settings.reg_init
                    } else {
                        settings.reg_init.max(last_dw / 3.0)
                    }
                } else {
                    dw * settings.reg_factor
                };
                if dw > settings.reg_max {
                    break None;
                }
            };
            let Some((sys, fac)) = fac else {
                debug!("iter {iter}: regularization exceeded {:e}", settings.reg_max);
                return finish(SolveStatus::NumericalFailure, &p, iter, trace);
            };
            if dw > 0.0 {
                last_dw = dw;
            }

            let (gx, gs) = self.barrier_grad(&p, mu);
            let mut rx = gx.clone();
            for (r, row) in self.jac.iter().enumerate() {
                for &(j, a) in row {
                    rx[j] += a * p.lambda[r];
                }
            }
            rx.iter_mut().for_each(|v| *v = -*v);
            let rs: Vec<f64> = (0..m)
                .map(|r| if self.ineq[r] { -(gs[r] - p.lambda[r]) } else { 0.0 })
                .collect();
            let c = self.residuals(&p.x, &p.s);
            let rc: Vec<f64> = c.iter().map(|v| -v).collect();
            let d = self.direction(&sys, &fac, &rx, &rs, &rc, &sigma_s, dw);

            // Filter line search.
            let alpha_max = self.alpha_primal(&p, &d, tau);
            let theta = c.iter().map(|v| v.abs()).sum::<f64>();
            let phi = self.barrier(&p.x, &p.s, mu);
            let dphi: f64 = gx.iter().zip(&d.dx).map(|(a, b)| a * b).sum::<f64>()
                + gs.iter().zip(&d.ds).map(|(a, b)| a * b).sum::<f64>();
            let tiny = d
                .dx
                .iter()
                .zip(&p.x)
                .all(|(dx, x)| dx.abs() <= 10.0 * f64::EPSILON * (1.0 + x.abs()));

            let acceptable = |th: f64, ph: f64, alpha: f64, filter: &[(f64, f64)]| -> Option<bool> {
                if !th.is_finite() || !ph.is_finite() || th > theta_max {
                    return None;
                }
                if filter.iter().any(|&(tf, pf)| th >= tf && ph >= pf) {
                    return None;
                }
                let switching = dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA * theta.powf(S_THETA);
                if theta <= theta_min && switching {
                    (ph <= phi + ETA_PHI * alpha * dphi).then_some(true)
                } else {
                    (th <= (1.0 - GAMMA_THETA) * theta || ph <= phi - GAMMA_PHI * theta).then_some(false)
                }
            };

            #[allow(clippy::type_complexity)]
            let mut accepted: Option<(Vec<f64>, Vec<f64>, f64, Direction, bool)> = None;
            let mut trials = 0usize;
            if tiny {
                let (x, s) = self.step_primal(&p, &d, alpha_max);
                accepted = Some((x, s, alpha_max, d.clone(), true));
            } else {
                let mut alpha = alpha_max;
                while alpha > 1e-12 {
                    trials += 1;
                    let (xt, st) = self.step_primal(&p, &d, alpha);
                    let th = self.theta(&xt, &st);
                    let ph = self.barrier(&xt, &st, mu);
                    if let Some(ftype) = acceptable(th, ph, alpha, &filter) {
                        accepted = Some((xt, st, alpha, d.clone(), ftype));
                        break;
                    }
                    if trials == 1 && th >= theta {
                        // Second-order corrections.
                        let mut c_soc: Vec<f64> = c.clone();
                        let mut theta_old = theta;
                        let mut alpha_soc = alpha;
                        let mut th_trial = self.residuals(&xt, &st);
                        for _ in 0..MAX_SOC {
                            for r in 0..m {
                                c_soc[r] = alpha_soc * c_soc[r] + th_trial[r];
                            }
                            let rc_soc: Vec<f64> = c_soc.iter().map(|v| -v).collect();
                            let ds = self.direction(&sys, &fac, &rx, &rs, &rc_soc, &sigma_s, dw);
                            alpha_soc = self.alpha_primal(&p, &ds, tau);
                            let (xs, ss) = self.step_primal(&p, &ds, alpha_soc);
                            let th_s = self.theta(&xs, &ss);
                            let ph_s = self.barrier(&xs, &ss, mu);
                            trials += 1;
                            if let Some(ftype) = acceptable(th_s, ph_s, alpha, &filter) {
                                accepted = Some((xs, ss, alpha_soc, ds, ftype));
                                break;
                            }
                            if th_s > KAPPA_SOC * theta_old {
                                break;
                            }
                            theta_old = th_s;
                            th_trial = self.residuals(&xs, &ss);
                        }
                        if accepted.is_some() {
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
            }

            let (xn, sn, alpha, dir, ftype) = match accepted {
                Some(a) => {
                    failures = 0;
                    a
                }
                None => {
                    failures += 1;
                    debug!("iter {iter}: line search failed ({failures} in a row)");
                    if failures > 8 {
                        let status = if theta > 1e2 * settings.feas_tol {
                            SolveStatus::Infeasible
                        } else {
                            SolveStatus::NumericalFailure
                        };
                        return finish(status, &p, iter, trace);
                    }
                    filter.clear();
                    let (x, s) = self.step_primal(&p, &d, alpha_max);
                    (x, s, alpha_max, d, true)
                }
            };
            if !ftype {
                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
            }

            let [dzl, dzu, dvl, dvu] = self.dual_steps(&p, &dir, mu);
            let alpha_du = frac_to_zero(&p.zl, &dzl, tau)
                .min(frac_to_zero(&p.zu, &dzu, tau))
                .min(frac_to_zero(&p.vl, &dvl, tau))
                .min(frac_to_zero(&p.vu, &dvu, tau));
            p.x = xn;
            p.s = sn;
            for r in 0..m {
                p.lambda[r] += alpha * dir.dl[r];
            }
            for j in 0..n {
                p.zl[j] += alpha_du * dzl[j];
                p.zu[j] += alpha_du * dzu[j];
            }
            for r in 0..m {
                p.vl[r] += alpha_du * dvl[r];
                p.vu[r] += alpha_du * dvu[r];
            }
            self.reset_multipliers(&mut p, mu);

            let rec = IterationRecord {
                iter,
                objective: self.objective(&p.x),
                mu,
                inf_pr: pr0,
                inf_du: du0,
                compl: co0,
                reg: dw,
                alpha_pr: alpha,
                alpha_du,
                ls_trials: trials,
            };
            debug!(
                "{:4} obj {:+.8e} mu {:.2e} pr {:.2e} du {:.2e} co {:.2e} reg {:.1e} a {:.2e}/{:.2e} ls {}",
                rec.iter, rec.objective, rec.mu, rec.inf_pr, rec.inf_du, rec.compl, rec.reg, rec.alpha_pr, rec.alpha_du, rec.ls_trials
            );
            trace.push(rec);
        }
        unreachable!("loop returns at max_iter")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_respects_both_bounds() {
        assert_eq!(push_inside(0.0, 0.0, 1.0, 1e-2), 1e-2);
        assert_eq!(push_inside(5.0, f64::NEG_INFINITY, 1.0, 1e-2), 0.99);
        assert_eq!(push_inside(0.5, f64::NEG_INFINITY, f64::INFINITY, 1e-2), 0.5);
        let v = push_inside(0.0, 0.0, 1e-6, 1e-2);
        assert!(v > 0.0 && v < 1e-6);
    }

    #[test]
    fn fraction_to_boundary_stops_short() {
        let a = frac_to_bound(&[1.0], &[-2.0], &[0.0], &[f64::INFINITY], 0.99, None);
        assert!((a - 0.495).abs() < 1e-15);
    }
}
