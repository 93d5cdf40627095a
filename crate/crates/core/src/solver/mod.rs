//! Local solution of the planning NLP by a primal-dual interior-point method.

mod ipm;
pub mod kkt;
pub mod presolve;

use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

pub use ipm::IterationRecord;
pub use kkt::{kkt_residuals, KktResiduals};

use crate::error::{Error, Result};
use crate::formulation::{eval_objective, flat_start, NlpProblem, Qcqp};
use crate::network::NetworkCase;
use presolve::{presolve, Presolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    IterationLimit,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Scaled stationarity and complementarity tolerance.
    pub kkt_tol: f64,
    /// Constraint violation tolerance, p.u.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Initial barrier parameter.
    pub mu_init: f64,
    /// Relative distance by which the start is pushed inside its bounds.
    pub bound_push: f64,
    /// First nonzero Hessian regularization.
    pub reg_init: f64,
    /// Regularization growth factor on wrong inertia.
    pub reg_factor: f64,
    /// Largest regularization tried before giving up.
    pub reg_max: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            feas_tol: 1e-6,
            max_iter: 500,
            mu_init: 0.1,
            bound_push: 1e-2,
            reg_init: 1e-8,
            reg_factor: 10.0,
            reg_max: 1e10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kkt_tol", self.kkt_tol),
            ("feas_tol", self.feas_tol),
            ("mu_init", self.mu_init),
            ("bound_push", self.bound_push),
            ("reg_init", self.reg_init),
            ("reg_max", self.reg_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.reg_factor <= 1.0 {
            return Err(Error::InvalidArgument("reg_factor must exceed 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::network::hex_digest(&serde_json::to_vec(self).expect("settings serialize"))
    }
}

/// Solution of a bare [`Qcqp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Row multipliers for the objective scaled by `objective_scale`.
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective_scale: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Solves `q` starting from `x0` (clipped into the bounds).
pub fn solve_qcqp(q: &Qcqp, settings: &SolverSettings, x0: &[f64]) -> QcqpSolution {
    let fail = |status, x: Vec<f64>| QcqpSolution {
        status,
        residuals: KktResiduals {
            feasibility: q.max_violation(&x),
            ..Default::default()
        },
        lambda: vec![0.0; q.n_rows()],
        z_lower: vec![0.0; q.n_vars()],
        z_upper: vec![0.0; q.n_vars()],
        x,
        objective_scale: 1.0,
        iterations: 0,
        trace: Vec::new(),
    };
    let pre: Presolved = match presolve(q, settings.feas_tol) {
        Ok(p) => p,
        Err(e) => {
            debug!("presolve: {e:?}");
            return fail(SolveStatus::Infeasible, x0.to_vec());
        }
    };
    debug!(
        "presolve: {} -> {} variables, {} -> {} rows",
        q.n_vars(),
        pre.reduced.n_vars(),
        q.n_rows(),
        pre.reduced.n_rows()
    );
    let xr0 = pre.restrict_x(x0);
    let mut ipm = ipm::Ipm::new(&pre.reduced, settings);
    let mut full_check = |xr: &[f64], l: &[f64], zl: &[f64], zu: &[f64], scale: f64| -> bool {
        let x = pre.expand_x(xr);
        let (lambda, zlf, zuf) = pre.recover_duals(q, &x, scale, l, zl, zu);
        kkt_residuals(q, &x, &lambda, &zlf, &zuf, scale).within(settings.kkt_tol, settings.feas_tol)
    };
    let out = ipm.run(&xr0, &mut full_check);
    let scale = ipm.obj_scale();
    let mut x = pre.expand_x(&out.x);
    let (lambda, z_lower, z_upper) = pre.recover_duals(q, &x, scale, &out.lambda, &out.zl, &out.zu);
    let mut residuals = kkt_residuals(q, &x, &lambda, &z_lower, &z_upper, scale);
    if out.status == SolveStatus::Optimal {
        if let Some((xp, rp)) = polish(q, &x, &lambda, &z_lower, &z_upper, scale, settings) {
            x = xp;
            residuals = rp;
        }
    }
    QcqpSolution {
        status: out.status,
        x,
        lambda,
        z_lower,
        z_upper,
        objective_scale: scale,
        residuals,
        iterations: out.iterations,
        trace: out.trace,
    }
}

/// Moves variables whose bound multiplier dominates their distance to the
/// bound onto that bound, one at a time, keeping each move only while the
/// point stays KKT-acceptable. The barrier leaves such variables a little
/// inside, which shows up as spurious objective differences between
/// problems that differ only in an unused option.
fn polish(
    q: &Qcqp,
    x: &[f64],
    lambda: &[f64],
    zl: &[f64],
    zu: &[f64],
    scale: f64,
    settings: &SolverSettings,
) -> Option<(Vec<f64>, KktResiduals)> {
    let mut xp = x.to_vec();
    let mut best: Option<KktResiduals> = None;
    for i in 0..x.len() {
        let (l, u) = (q.lower[i], q.upper[i]);
        let target = if l.is_finite() && x[i] != l && x[i] - l <= settings.feas_tol && zl[i] > x[i] - l {
            l
        } else if u.is_finite() && x[i] != u && u - x[i] <= settings.feas_tol && zu[i] > u - x[i] {
            u
        } else {
            continue;
        };
        let old = xp[i];
        xp[i] = target;
        let r = kkt_residuals(q, &xp, lambda, zl, zu, scale);
        if r.within(settings.kkt_tol, settings.feas_tol) {
            best = Some(r);
        } else {
            xp[i] = old;
        }
    }
    let r = best?;
    (q.objective.eval(&xp) <= q.objective.eval(x)).then_some((xp, r))
}

/// Local solution of an [`NlpProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective in MW (curtailment) or EUR/h (expected cost).
    pub objective: f64,
    /// Primal point in the layout of the problem.
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective_scale: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub wall_time_s: f64,
    #[serde(default)]
    pub trace: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves from the flat start.
pub fn solve(problem: &NlpProblem, settings: &SolverSettings) -> SolveResult {
    solve_from(problem, settings, &flat_start(problem))
}

/// Solves from an explicit starting point in the problem layout.
pub fn solve_from(problem: &NlpProblem, settings: &SolverSettings, x0: &[f64]) -> SolveResult {
    let t = Instant::now();
    let sol = solve_qcqp(&problem.qcqp, settings, x0);
    let (objective, _) = eval_objective(problem, &sol.x);
    SolveResult {
        status: sol.status,
        objective,
        x: sol.x,
        lambda: sol.lambda,
        z_lower: sol.z_lower,
        z_upper: sol.z_upper,
        objective_scale: sol.objective_scale,
        residuals: sol.residuals,
        iterations: sol.iterations,
        wall_time_s: t.elapsed().as_secs_f64(),
        trace: sol.trace,
    }
}

/// Starting point for `problem` taken from a previous solution: the primal
/// point clipped into the new bounds.
pub fn warm_start_from(result: &SolveResult, problem: &NlpProblem) -> Result<Vec<f64>> {
    let q = &problem.qcqp;
    if result.x.len() != q.n_vars() {
        return Err(Error::LayoutMismatch {
            expected: q.n_vars(),
            found: result.x.len(),
        });
    }
    Ok(result
        .x
        .iter()
        .zip(q.lower.iter().zip(&q.upper))
        .map(|(&v, (&l, &u))| v.clamp(l, u))
        .collect())
}

/// Per-solution summary in engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub status: SolveStatus,
    pub objective: f64,
    /// `(line id, reinforcement MVA)` for every reinforceable line.
    pub line_investment: Vec<(u32, f64)>,
    /// `(flex id, capacity MW)` for every investable provider.
    pub flex_investment: Vec<(u32, f64)>,
    pub blocks: Vec<BlockSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub scenario: u32,
    pub state: u32,
    /// Total load curtailment, MW.
    pub load_curtailment: f64,
    /// Total renewable curtailment, MW.
    pub res_curtailment: f64,
}

pub fn summarize(case: &NetworkCase, problem: &NlpProblem, result: &SolveResult) -> SolutionSummary {
    let base = problem.base_mva;
    let x = &result.x;
    let lay = &problem.layout;
    SolutionSummary {
        status: result.status,
        objective: result.objective,
        line_investment: case
            .lines
            .iter()
            .zip(&lay.li)
            .filter_map(|(l, v)| v.map(|v| (l.id, x[v] * base)))
            .collect(),
        flex_investment: case
            .flex_providers
            .iter()
            .zip(&lay.fi)
            .filter_map(|(f, v)| v.map(|v| (f.id, x[v] * base)))
            .collect(),
        blocks: lay
            .blocks
            .iter()
            .map(|sv| BlockSummary {
                scenario: case.scenarios[sv.scenario].id,
                state: case.states[sv.state].k,
                load_curtailment: sv.lc.iter().map(|&v| x[v] * base).sum(),
                res_curtailment: sv.rc.iter().map(|&v| x[v] * base).sum(),
            })
            .collect(),
    }
}
