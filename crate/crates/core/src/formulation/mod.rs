//! Translation of a planning case and a coalition of enabled investment
//! options into one quadratically-constrained NLP covering every
//! (scenario, state) pair.
//!
//! All quantities are per-unit on `base_mva`; voltages are rectangular
//! (`e + jf`). Problem size, with `N` buses, `L` lines, `G` generators,
//! `F` flex providers, `S` scenarios, `K` states and `C` contingencies:
//!
//! * variables: `S·K·(4N + 4L + 2G + 4F) + |LI| + |FI|`
//! * rows: `S·[(K − C)·r(L) + C·r(L − 1)]` with
//!   `r(l) = 6l + 3N + 4|FI|` (four flow definitions and two thermal rows
//!   per in-service line, P/Q balance and voltage per bus, four cap rows per
//!   investable flex provider).

mod build;
pub mod check;
mod dump;
pub mod layout;
pub mod qcqp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use build::build_nlp;
pub use dump::dump_nlp;
pub use layout::{ModelDims, StateVars, VariableLayout};
pub use qcqp::{Constraint, QuadForm, Qcqp};

use crate::network::NetworkCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Total load curtailment over all scenarios, states and buses, MW.
    MinCurtailment,
    /// Probability-weighted operating cost plus investment cost, EUR/h.
    MinExpectedCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    From,
    To,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlexDir {
    PUp,
    PDown,
    QUp,
    QDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum RowKind {
    FlowP { line: u32, end: End },
    FlowQ { line: u32, end: End },
    BalanceP { bus: u32 },
    BalanceQ { bus: u32 },
    Thermal { line: u32, end: End },
    Voltage { bus: u32 },
    FlexCap { flex: u32, dir: FlexDir },
}

/// What a constraint row models and which (scenario, state) it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowInfo {
    pub kind: RowKind,
    /// Scenario index.
    pub scenario: usize,
    /// State index.
    pub state: usize,
}

impl RowInfo {
    pub fn describe(&self, case: &NetworkCase) -> String {
        let tag = format!(
            "(s{},k{})",
            case.scenarios[self.scenario].id, case.states[self.state].k
        );
        let end = |e: End| match e {
            End::From => "from",
            End::To => "to",
        };
        let body = match self.kind {
            RowKind::FlowP { line, end: e } => format!("flow_p[line {line} {}]", end(e)),
            RowKind::FlowQ { line, end: e } => format!("flow_q[line {line} {}]", end(e)),
            RowKind::BalanceP { bus } => format!("balance_p[bus {bus}]"),
            RowKind::BalanceQ { bus } => format!("balance_q[bus {bus}]"),
            RowKind::Thermal { line, end: e } => format!("thermal[line {line} {}]", end(e)),
            RowKind::Voltage { bus } => format!("voltage[bus {bus}]"),
            RowKind::FlexCap { flex, dir } => format!("flex_cap[flex {flex} {dir:?}]"),
        };
        format!("{body}{tag}")
    }
}

/// A built NLP together with the metadata needed to interpret its points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpProblem {
    pub qcqp: Qcqp,
    pub layout: VariableLayout,
    /// One entry per row of `qcqp.constraints`.
    pub rows: Vec<RowInfo>,
    pub objective: ObjectiveKind,
    pub base_mva: f64,
    /// Sorted ids of the enabled investment options.
    pub enabled: Vec<u32>,
}

/// Row activities at `x`, in declared order.
///
/// Every equality row is written with a zero right-hand side, so for flow
/// definitions and balances the activity is the residual itself. Thermal and
/// flex-cap rows are `<= 0`; voltage rows carry `[v_min², v_max²]`.
pub fn eval_constraints(problem: &NlpProblem, x: &[f64]) -> Vec<f64> {
    problem.qcqp.activities(x)
}

/// Objective value (MW or EUR/h) and its exact gradient.
pub fn eval_objective(problem: &NlpProblem, x: &[f64]) -> (f64, Vec<f64>) {
    let q = &problem.qcqp;
    (q.objective.eval(x), q.objective_gradient(x))
}

/// Worst relative derivative errors, `|a − b| / max(1, |a|, |b|)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub jacobian: f64,
    pub gradient: f64,
    pub hessian_vector: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        self.jacobian.max(self.gradient).max(self.hessian_vector)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Compares analytic first and second derivatives with central finite
/// differences of step `h` at `x`.
///
/// The Hessian-vector check uses the Lagrangian with pseudo-random
/// multipliers and direction drawn from `seed`.
pub fn derivative_check(problem: &NlpProblem, x: &[f64], h: f64, seed: u64) -> DerivativeReport {
    let q = &problem.qcqp;
    let mut report = DerivativeReport::default();
    let mut xp = x.to_vec();

    for c in &q.constraints {
        let mut g = vec![0.0; x.len()];
        c.form.add_gradient(x, 1.0, &mut g);
        for v in c.form.variables() {
            xp[v] = x[v] + h;
            let up = c.form.eval(&xp);
            xp[v] = x[v] - h;
            let dn = c.form.eval(&xp);
            xp[v] = x[v];
            report.jacobian = report.jacobian.max(rel_err(g[v], (up - dn) / (2.0 * h)));
        }
    }

    let (_, grad) = eval_objective(problem, x);
    for v in q.objective.variables() {
        xp[v] = x[v] + h;
        let up = q.objective.eval(&xp);
        xp[v] = x[v] - h;
        let dn = q.objective.eval(&xp);
        xp[v] = x[v];
        report.gradient = report.gradient.max(rel_err(grad[v], (up - dn) / (2.0 * h)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda: Vec<f64> = (0..q.n_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dir: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut hv = vec![0.0; x.len()];
    q.objective.add_hessian_vector(&dir, 1.0, &mut hv);
    for (c, &l) in q.constraints.iter().zip(&lambda) {
        c.form.add_hessian_vector(&dir, l, &mut hv);
    }
    let shifted = |sign: f64| -> Vec<f64> {
        let pt: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + sign * h * d).collect();
        q.lagrangian_gradient(&pt, 1.0, &lambda)
    };
    let (gp, gm) = (shifted(1.0), shifted(-1.0));
    for i in 0..x.len() {
        let fd = (gp[i] - gm[i]) / (2.0 * h);
        report.hessian_vector = report.hessian_vector.max(rel_err(hv[i], fd));
    }
    report
}

/// Flat start: `e = 1`, `f = 0`, generators at the midpoint of their
/// limits, everything else zero (before any interior push).
pub fn flat_start(problem: &NlpProblem) -> Vec<f64> {
    problem.qcqp.initial.clone()
}
