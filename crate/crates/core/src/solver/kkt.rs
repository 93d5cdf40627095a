use serde::{Deserialize, Serialize};

use crate::formulation::Qcqp;

/// First-order optimality residuals of a point of the full problem.
///
/// Stationarity and complementarity are scaled by the multiplier-size
/// factors `s_d` and `s_c` (both at least 1), stationarity refers to the
/// objective multiplied by `obj_scale`, and feasibility is the largest row
/// or bound violation in problem units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, kkt_tol: f64, feas_tol: f64) -> bool {
        self.stationarity <= kkt_tol && self.complementarity <= kkt_tol && self.feasibility <= feas_tol
    }
}

const S_MAX: f64 = 100.0;

/// Recomputes [`KktResiduals`] from scratch. Multipliers follow the sign
/// convention `obj_scale·∇f + Jᵀλ − z_L + z_U = 0`, with `λ_r > 0` when the
/// upper side of row `r` is active.
pub fn kkt_residuals(q: &Qcqp, x: &[f64], lambda: &[f64], zl: &[f64], zu: &[f64], obj_scale: f64) -> KktResiduals {
    let n = q.n_vars();
    let g = q.lagrangian_gradient(x, obj_scale, lambda);
    let mut stat = 0.0f64;
    for j in 0..n {
        stat = stat.max((g[j] - zl[j] + zu[j]).abs());
    }

    let mut compl = 0.0f64;
    let mut zsum = 0.0;
    let mut nbounds = 0usize;
    for j in 0..n {
        if q.lower[j].is_finite() {
            compl = compl.max(zl[j] * (x[j] - q.lower[j]));
            zsum += zl[j];
            nbounds += 1;
        }
        if q.upper[j].is_finite() {
            compl = compl.max(zu[j] * (q.upper[j] - x[j]));
            zsum += zu[j];
            nbounds += 1;
        }
        compl = compl.max(-zl[j]).max(-zu[j]);
    }
    let mut lsum = 0.0;
    for (c, &l) in q.constraints.iter().zip(lambda) {
        lsum += l.abs();
        if c.is_equality() {
            continue;
        }
        let a = c.form.eval(x);
        let (vl, vu) = ((-l).max(0.0), l.max(0.0));
        if c.lower.is_finite() {
            compl = compl.max(vl * (a - c.lower));
            nbounds += 1;
        } else {
            compl = compl.max(vl);
        }
        if c.upper.is_finite() {
            compl = compl.max(vu * (c.upper - a));
            nbounds += 1;
        } else {
            compl = compl.max(vu);
        }
        zsum += l.abs();
    }
    let s_d = S_MAX.max((lsum + zsum) / ((q.n_rows() + nbounds).max(1) as f64)) / S_MAX;
    let s_c = S_MAX.max(zsum / (nbounds.max(1) as f64)) / S_MAX;
    KktResiduals {
        stationarity: stat / s_d,
        feasibility: q.max_violation(x),
        complementarity: compl / s_c,
    }
}
