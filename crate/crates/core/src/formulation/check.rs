//! Physical checks of a point, recomputed from the case data rather than
//! from the assembled rows.

use serde::Serialize;

use super::layout::VariableLayout;
use crate::network::NetworkCase;

/// Complex power leaving bus `n` towards `m` through a series admittance.
pub fn branch_flow(g: f64, b: f64, (en, fn_): (f64, f64), (em, fm): (f64, f64)) -> (f64, f64) {
    let mag = en * en + fn_ * fn_;
    let cross = en * em + fn_ * fm;
    let sine = fn_ * em - en * fm;
    (
        mag * g - cross * g - sine * b,
        -mag * b + cross * b - sine * g,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BusMismatch {
    pub scenario: usize,
    pub state: usize,
    pub bus: u32,
    /// Active mismatch, p.u.
    pub p: f64,
    /// Reactive mismatch, p.u.
    pub q: f64,
}

/// Power balance at every bus of every block with line flows computed from
/// the voltages. Captures errors in both the flow definitions and the
/// balance rows.
pub fn balance_mismatches(case: &NetworkCase, layout: &VariableLayout, x: &[f64]) -> Vec<BusMismatch> {
    let base = case.base_mva;
    let mut out = Vec::new();
    for sv in &layout.blocks {
        let outaged = case.states[sv.state].outaged_line;
        let volt = |i: usize| (x[sv.e[i]], x[sv.f[i]]);
        let mut p = vec![0.0; case.buses.len()];
        let mut q = vec![0.0; case.buses.len()];
        for (i, _) in case.buses.iter().enumerate() {
            let ld = case.loading(sv.scenario, i);
            p[i] = (ld.res_p - ld.demand_p) / base + x[sv.lc[i]] - x[sv.rc[i]];
            q[i] = -ld.demand_q / base;
        }
        for (g, gen) in case.generators.iter().enumerate() {
            let i = case.bus_index(gen.bus).unwrap();
            p[i] += x[sv.pg[g]];
            q[i] += x[sv.qg[g]];
        }
        for (f, flex) in case.flex_providers.iter().enumerate() {
            let i = case.bus_index(flex.bus).unwrap();
            p[i] += x[sv.p_up[f]] - x[sv.p_dn[f]];
            q[i] += x[sv.q_up[f]] - x[sv.q_dn[f]];
        }
        for line in case.lines.iter().filter(|l| Some(l.id) != outaged) {
            let a = case.bus_index(line.from_bus).unwrap();
            let c = case.bus_index(line.to_bus).unwrap();
            let (pa, qa) = branch_flow(line.g, line.b, volt(a), volt(c));
            let (pc, qc) = branch_flow(line.g, line.b, volt(c), volt(a));
            p[a] -= pa;
            q[a] -= qa;
            p[c] -= pc;
            q[c] -= qc;
        }
        for (i, bus) in case.buses.iter().enumerate() {
            out.push(BusMismatch {
                scenario: sv.scenario,
                state: sv.state,
                bus: bus.id,
                p: p[i],
                q: q[i],
            });
        }
    }
    out
}

/// Largest `|p|` or `|q|` mismatch over all buses and blocks, p.u.
pub fn max_balance_mismatch(case: &NetworkCase, layout: &VariableLayout, x: &[f64]) -> f64 {
    balance_mismatches(case, layout, x)
        .iter()
        .map(|m| m.p.abs().max(m.q.abs()))
        .fold(0.0, f64::max)
}

/// Largest excess of `p² + q²` over `(S̄ + LI)²` at any in-service branch end,
/// with flows computed from voltages, in p.u.².
pub fn max_thermal_excess(case: &NetworkCase, layout: &VariableLayout, x: &[f64]) -> f64 {
    let base = case.base_mva;
    let mut worst = f64::NEG_INFINITY;
    for sv in &layout.blocks {
        let outaged = case.states[sv.state].outaged_line;
        let volt = |i: usize| (x[sv.e[i]], x[sv.f[i]]);
        for (l, line) in case.lines.iter().enumerate() {
            if Some(line.id) == outaged {
                continue;
            }
            let a = case.bus_index(line.from_bus).unwrap();
            let c = case.bus_index(line.to_bus).unwrap();
            let rating = line.s_max / base + layout.li[l].map_or(0.0, |v| x[v]);
            for (p, q) in [
                branch_flow(line.g, line.b, volt(a), volt(c)),
                branch_flow(line.g, line.b, volt(c), volt(a)),
            ] {
                worst = worst.max(p * p + q * q - rating * rating);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_formula_matches_hand_substitution() {
        let (p, q) = branch_flow(10.0, -30.0, (1.0, 0.0), (0.95, 0.0));
        assert!((p - 0.5).abs() < 1e-12);
        assert!((q - 1.5).abs() < 1e-12);
    }

    #[test]
    fn equal_voltages_carry_no_flow() {
        assert_eq!(branch_flow(3.0, -7.0, (1.0, 0.0), (1.0, 0.0)), (0.0, 0.0));
    }
}
