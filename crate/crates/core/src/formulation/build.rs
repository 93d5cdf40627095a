use std::collections::BTreeSet;

use super::layout::{ModelDims, VariableLayout};
use super::qcqp::{Constraint, QuadForm, Qcqp};
use super::{End, FlexDir, NlpProblem, ObjectiveKind, RowInfo, RowKind};
use crate::error::{Error, Result};
use crate::network::NetworkCase;

const INF: f64 = f64::INFINITY;

/// Appends the two flow-definition rows of one branch end.
///
/// `p - [(en²+fn²)G - (en em + fn fm)G - (fn em - en fm)B] = 0`
/// `q - [-(en²+fn²)B + (en em + fn fm)B - (fn em - en fm)G] = 0`
fn flow_rows(
    p: usize,
    q: usize,
    (en, fn_, em, fm): (usize, usize, usize, usize),
    g: f64,
    b: f64,
) -> (QuadForm, QuadForm) {
    let mut rp = QuadForm::new();
    rp.lin(p, 1.0)
        .quad(en, en, -g)
        .quad(fn_, fn_, -g)
        .quad(en, em, g)
        .quad(fn_, fm, g)
        .quad(fn_, em, b)
        .quad(en, fm, -b);
    let mut rq = QuadForm::new();
    rq.lin(q, 1.0)
        .quad(en, en, b)
        .quad(fn_, fn_, b)
        .quad(en, em, -b)
        .quad(fn_, fm, -b)
        .quad(fn_, em, g)
        .quad(en, fm, -g);
    (rp, rq)
}

/// Builds the monolithic NLP for `case` with the options in `enabled`
/// available to the planner.
pub fn build_nlp(case: &NetworkCase, enabled: &[u32], objective: ObjectiveKind) -> Result<NlpProblem> {
    let mut on = BTreeSet::new();
    for &id in enabled {
        if case.option(id).is_none() {
            return Err(Error::UnknownOption(id));
        }
        on.insert(id);
    }
    let base = case.base_mva;
    let layout = VariableLayout::new(case);
    let n = layout.n_vars;
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut initial = vec![0.0; n];
    let mut var_block = vec![None; n];
    let mut constraints = Vec::new();
    let mut rows = Vec::new();

    let bus_of = |id: u32| case.bus_index(id).expect("validated bus reference");
    let reference = case.reference_bus();
    let ends: Vec<(usize, usize)> = case
        .lines
        .iter()
        .map(|l| (bus_of(l.from_bus), bus_of(l.to_bus)))
        .collect();
    let gen_bus: Vec<usize> = case.generators.iter().map(|g| bus_of(g.bus)).collect();
    let flex_bus: Vec<usize> = case.flex_providers.iter().map(|f| bus_of(f.bus)).collect();

    // First-stage investment variables.
    for (l, line) in case.lines.iter().enumerate() {
        if let Some(v) = layout.li[l] {
            let open = case.line_option(line.id).is_some_and(|o| on.contains(&o));
            upper[v] = if open { line.li_max / base } else { 0.0 };
        }
    }
    for (f, flex) in case.flex_providers.iter().enumerate() {
        if let Some(v) = layout.fi[f] {
            let open = case.flex_option(flex.id).is_some_and(|o| on.contains(&o));
            upper[v] = if open { flex.fi_max / base } else { 0.0 };
        }
    }

    let mut obj = QuadForm::new();

    for (b, sv) in layout.blocks.iter().enumerate() {
        let (s, k) = (sv.scenario, sv.state);
        for v in sv
            .e
            .iter()
            .chain(&sv.f)
            .chain(&sv.p_from)
            .chain(&sv.q_from)
            .chain(&sv.p_to)
            .chain(&sv.q_to)
            .chain(&sv.pg)
            .chain(&sv.qg)
            .chain(&sv.p_up)
            .chain(&sv.p_dn)
            .chain(&sv.q_up)
            .chain(&sv.q_dn)
            .chain(&sv.lc)
            .chain(&sv.rc)
        {
            var_block[*v] = Some(b);
        }
        let outaged = case.states[k].outaged_line;
        let row = |kind: RowKind| RowInfo {
            kind,
            scenario: s,
            state: k,
        };

        // Voltages.
        for (i, bus) in case.buses.iter().enumerate() {
            let (e, f) = (sv.e[i], sv.f[i]);
            lower[e] = -bus.v_max;
            upper[e] = bus.v_max;
            lower[f] = -bus.v_max;
            upper[f] = bus.v_max;
            initial[e] = 1.0;
            if Some(i) == reference {
                lower[e] = 0.0;
                upper[f] = 0.0;
                lower[f] = 0.0;
            }
        }

        // Flows: free when in service, fixed at zero when outaged.
        let in_service: Vec<usize> = (0..case.lines.len())
            .filter(|&l| Some(case.lines[l].id) != outaged)
            .collect();
        for l in 0..case.lines.len() {
            let live = in_service.contains(&l);
            for v in [sv.p_from[l], sv.q_from[l], sv.p_to[l], sv.q_to[l]] {
                lower[v] = if live { -INF } else { 0.0 };
                upper[v] = if live { INF } else { 0.0 };
            }
        }
        for &l in &in_service {
            let line = &case.lines[l];
            let (a, c) = ends[l];
            let (rp, rq) = flow_rows(
                sv.p_from[l],
                sv.q_from[l],
                (sv.e[a], sv.f[a], sv.e[c], sv.f[c]),
                line.g,
                line.b,
            );
            let (tp, tq) = flow_rows(
                sv.p_to[l],
                sv.q_to[l],
                (sv.e[c], sv.f[c], sv.e[a], sv.f[a]),
                line.g,
                line.b,
            );
            for (form, kind) in [
                (rp, RowKind::FlowP { line: line.id, end: End::From }),
                (rq, RowKind::FlowQ { line: line.id, end: End::From }),
                (tp, RowKind::FlowP { line: line.id, end: End::To }),
                (tq, RowKind::FlowQ { line: line.id, end: End::To }),
            ] {
                constraints.push(Constraint {
                    form,
                    lower: 0.0,
                    upper: 0.0,
                    block: Some(b),
                });
                rows.push(row(kind));
            }
        }

        // Generators.
        for (g, gen) in case.generators.iter().enumerate() {
            let (p, q) = (sv.pg[g], sv.qg[g]);
            lower[p] = gen.p_min / base;
            upper[p] = gen.p_max / base;
            lower[q] = gen.q_min / base;
            upper[q] = gen.q_max / base;
            initial[p] = 0.5 * (lower[p] + upper[p]);
            initial[q] = 0.5 * (lower[q] + upper[q]);
        }

        // Flexibility: investable providers get a wide variable bound and an
        // explicit cap row coupling the modulation to FI.
        for (f, flex) in case.flex_providers.iter().enumerate() {
            let caps = [
                (sv.p_up[f], flex.p_up_base, FlexDir::PUp),
                (sv.p_dn[f], flex.p_dn_base, FlexDir::PDown),
                (sv.q_up[f], flex.q_up_base, FlexDir::QUp),
                (sv.q_dn[f], flex.q_dn_base, FlexDir::QDown),
            ];
            match layout.fi[f] {
                Some(fi) => {
                    for (v, cap, dir) in caps {
                        upper[v] = (cap + flex.fi_max) / base;
                        let mut form = QuadForm::new().with_constant(-cap / base);
                        form.lin(v, 1.0).lin(fi, -1.0);
                        constraints.push(Constraint {
                            form,
                            lower: -INF,
                            upper: 0.0,
                            block: Some(b),
                        });
                        rows.push(row(RowKind::FlexCap { flex: flex.id, dir }));
                    }
                }
                None => {
                    for (v, cap, _) in caps {
                        upper[v] = cap / base;
                    }
                }
            }
        }

        // Curtailment bounds.
        for i in 0..case.buses.len() {
            let ld = case.loading(s, i);
            upper[sv.lc[i]] = ld.demand_p / base;
            upper[sv.rc[i]] = ld.res_p / base;
        }

        // Bus balances.
        for (i, bus) in case.buses.iter().enumerate() {
            let ld = case.loading(s, i);
            let mut p = QuadForm::new().with_constant((ld.res_p - ld.demand_p) / base);
            let mut q = QuadForm::new().with_constant(-ld.demand_q / base);
            for g in (0..case.generators.len()).filter(|&g| gen_bus[g] == i) {
                p.lin(sv.pg[g], 1.0);
                q.lin(sv.qg[g], 1.0);
            }
            for f in (0..case.flex_providers.len()).filter(|&f| flex_bus[f] == i) {
                p.lin(sv.p_up[f], 1.0).lin(sv.p_dn[f], -1.0);
                q.lin(sv.q_up[f], 1.0).lin(sv.q_dn[f], -1.0);
            }
            p.lin(sv.lc[i], 1.0).lin(sv.rc[i], -1.0);
            for &l in &in_service {
                if ends[l].0 == i {
                    p.lin(sv.p_from[l], -1.0);
                    q.lin(sv.q_from[l], -1.0);
                }
                if ends[l].1 == i {
                    p.lin(sv.p_to[l], -1.0);
                    q.lin(sv.q_to[l], -1.0);
                }
            }
            for (form, kind) in [
                (p, RowKind::BalanceP { bus: bus.id }),
                (q, RowKind::BalanceQ { bus: bus.id }),
            ] {
                constraints.push(Constraint {
                    form,
                    lower: 0.0,
                    upper: 0.0,
                    block: Some(b),
                });
                rows.push(row(kind));
            }
        }

        // Thermal limits at both ends: p² + q² - LI² - 2 S LI - S² <= 0.
        for &l in &in_service {
            let line = &case.lines[l];
            let smax = line.s_max / base;
            for (p, q, end) in [
                (sv.p_from[l], sv.q_from[l], End::From),
                (sv.p_to[l], sv.q_to[l], End::To),
            ] {
                let mut form = QuadForm::new().with_constant(-smax * smax);
                form.quad(p, p, 1.0).quad(q, q, 1.0);
                if let Some(li) = layout.li[l] {
                    form.quad(li, li, -1.0).lin(li, -2.0 * smax);
                }
                constraints.push(Constraint {
                    form,
                    lower: -INF,
                    upper: 0.0,
                    block: Some(b),
                });
                rows.push(row(RowKind::Thermal { line: line.id, end }));
            }
        }

        // Voltage magnitude.
        for (i, bus) in case.buses.iter().enumerate() {
            let mut form = QuadForm::new();
            form.quad(sv.e[i], sv.e[i], 1.0).quad(sv.f[i], sv.f[i], 1.0);
            constraints.push(Constraint {
                form,
                lower: bus.v_min * bus.v_min,
                upper: bus.v_max * bus.v_max,
                block: Some(b),
            });
            rows.push(row(RowKind::Voltage { bus: bus.id }));
        }

        // Objective contribution of this block.
        match objective {
            ObjectiveKind::MinCurtailment => {
                for &v in &sv.lc {
                    obj.lin(v, base);
                }
            }
            ObjectiveKind::MinExpectedCost => {
                let pi = case.weight(s, k);
                for (g, gen) in case.generators.iter().enumerate() {
                    obj.constant += pi * gen.cost_c0;
                    obj.lin(sv.pg[g], pi * gen.cost_c1 * base);
                    if gen.cost_c2 != 0.0 {
                        obj.quad(sv.pg[g], sv.pg[g], pi * gen.cost_c2 * base * base);
                    }
                }
                for &v in &sv.lc {
                    obj.lin(v, pi * case.c_curt_load * base);
                }
                for &v in &sv.rc {
                    obj.lin(v, pi * case.c_curt_res * base);
                }
                for (f, flex) in case.flex_providers.iter().enumerate() {
                    obj.lin(sv.p_up[f], pi * flex.c_flex * base);
                    obj.lin(sv.p_dn[f], pi * flex.c_flex * base);
                }
            }
        }
    }

    if objective == ObjectiveKind::MinExpectedCost {
        for (l, line) in case.lines.iter().enumerate() {
            if let Some(v) = layout.li[l] {
                obj.lin(v, line.c_inv * base);
            }
        }
        for (f, flex) in case.flex_providers.iter().enumerate() {
            if let Some(v) = layout.fi[f] {
                obj.lin(v, flex.c_inv * base);
            }
        }
    }

    let qcqp = Qcqp {
        lower,
        upper,
        var_block,
        constraints,
        objective: obj,
        initial,
    };
    let dims = ModelDims::of(case);
    if qcqp.n_vars() != dims.n_vars() {
        return Err(Error::LayoutMismatch {
            expected: dims.n_vars(),
            found: qcqp.n_vars(),
        });
    }
    qcqp.check_structure().map_err(Error::Structure)?;

    let enabled: Vec<u32> = on.into_iter().collect();
    Ok(NlpProblem {
        qcqp,
        layout,
        rows,
        objective,
        base_mva: base,
        enabled,
    })
}
