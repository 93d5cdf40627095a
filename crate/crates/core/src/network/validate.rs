use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::case::{NetworkCase, OptionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Offending entity, e.g. `line 3` or `scenario 1`.
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.entity, self.message)
    }
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn error(&mut self, entity: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            entity: entity.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, entity: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Warning,
            entity: entity.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, entity: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.error(entity, message);
        }
    }
}

fn duplicates<I: IntoIterator<Item = u32>>(ids: I) -> Vec<u32> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dup.insert(id);
        }
    }
    dup.into_iter().collect()
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Checks every case invariant. Returns one diagnostic per violation; an
/// empty list means the case is valid.
pub fn validate_case(case: &NetworkCase) -> Vec<Diagnostic> {
    let mut c = Collector(Vec::new());

    c.check(
        case.base_mva.is_finite() && case.base_mva > 0.0,
        "case",
        format!("base_mva must be positive, got {}", case.base_mva),
    );
    c.check(
        finite_nonneg(case.c_curt_load),
        "case",
        "c_curt_load must be nonnegative",
    );
    c.check(
        finite_nonneg(case.c_curt_res),
        "case",
        "c_curt_res must be nonnegative",
    );

    // Buses.
    c.check(!case.buses.is_empty(), "case", "no buses");
    for id in duplicates(case.buses.iter().map(|b| b.id)) {
        c.error(format!("bus {id}"), "duplicate bus id");
    }
    let bus_ids: BTreeSet<u32> = case.buses.iter().map(|b| b.id).collect();
    for b in &case.buses {
        let e = format!("bus {}", b.id);
        c.check(
            b.v_min > 0.0 && b.v_min <= b.v_max && b.v_max.is_finite(),
            &e,
            format!("voltage bounds must satisfy 0 < v_min <= v_max (got {}, {})", b.v_min, b.v_max),
        );
        c.check(finite_nonneg(b.demand_p), &e, "demand_p must be nonnegative");
        c.check(b.demand_q.is_finite(), &e, "demand_q must be finite");
        c.check(finite_nonneg(b.res_p), &e, "res_p must be nonnegative");
    }
    let refs: Vec<u32> = case
        .buses
        .iter()
        .filter(|b| b.is_reference)
        .map(|b| b.id)
        .collect();
    match refs.len() {
        0 => c.error("case", "missing reference bus"),
        1 => {}
        _ => c.error(
            format!("bus {}", refs[1]),
            format!("duplicate reference bus (also bus {})", refs[0]),
        ),
    }

    // Lines.
    for id in duplicates(case.lines.iter().map(|l| l.id)) {
        c.error(format!("line {id}"), "duplicate line id");
    }
    for l in &case.lines {
        let e = format!("line {}", l.id);
        c.check(l.from_bus != l.to_bus, &e, "from_bus equals to_bus");
        c.check(
            bus_ids.contains(&l.from_bus),
            &e,
            format!("unknown from_bus {}", l.from_bus),
        );
        c.check(
            bus_ids.contains(&l.to_bus),
            &e,
            format!("unknown to_bus {}", l.to_bus),
        );
        c.check(
            l.g.is_finite() && l.b.is_finite(),
            &e,
            "series admittance must be finite",
        );
        c.check(
            l.s_max.is_finite() && l.s_max > 0.0,
            &e,
            "s_max must be positive",
        );
        c.check(finite_nonneg(l.li_max), &e, "li_max must be nonnegative");
        c.check(finite_nonneg(l.c_inv), &e, "c_inv must be nonnegative");
    }

    // Generators.
    for id in duplicates(case.generators.iter().map(|g| g.id)) {
        c.error(format!("generator {id}"), "duplicate generator id");
    }
    for g in &case.generators {
        let e = format!("generator {}", g.id);
        c.check(bus_ids.contains(&g.bus), &e, format!("unknown bus {}", g.bus));
        c.check(g.p_min <= g.p_max, &e, "p_min exceeds p_max");
        c.check(g.q_min <= g.q_max, &e, "q_min exceeds q_max");
        c.check(
            [g.p_min, g.p_max, g.q_min, g.q_max, g.cost_c0, g.cost_c1]
                .iter()
                .all(|v| v.is_finite()),
            &e,
            "limits and costs must be finite",
        );
        c.check(finite_nonneg(g.cost_c2), &e, "cost_c2 must be nonnegative");
    }

    // Flexibility providers.
    for id in duplicates(case.flex_providers.iter().map(|f| f.id)) {
        c.error(format!("flex {id}"), "duplicate flex provider id");
    }
    for f in &case.flex_providers {
        let e = format!("flex {}", f.id);
        c.check(bus_ids.contains(&f.bus), &e, format!("unknown bus {}", f.bus));
        c.check(
            [f.p_up_base, f.p_dn_base, f.q_up_base, f.q_dn_base]
                .iter()
                .all(|&v| finite_nonneg(v)),
            &e,
            "base capacities must be nonnegative",
        );
        c.check(finite_nonneg(f.fi_max), &e, "fi_max must be nonnegative");
        c.check(finite_nonneg(f.c_flex), &e, "c_flex must be nonnegative");
        c.check(finite_nonneg(f.c_inv), &e, "c_inv must be nonnegative");
    }

    // Scenarios.
    c.check(!case.scenarios.is_empty(), "case", "no scenarios");
    for id in duplicates(case.scenarios.iter().map(|s| s.id)) {
        c.error(format!("scenario {id}"), "duplicate scenario id");
    }
    for s in &case.scenarios {
        let e = format!("scenario {}", s.id);
        c.check(
            finite_nonneg(s.weight),
            &e,
            format!("weight must be nonnegative, got {}", s.weight),
        );
        for o in &s.overrides {
            if !bus_ids.contains(&o.bus) {
                c.error(&e, format!("override references unknown bus {}", o.bus));
            }
            if o.demand_p.is_some_and(|v| !finite_nonneg(v)) {
                c.error(&e, format!("override demand_p at bus {} is negative", o.bus));
            }
            if o.res_p.is_some_and(|v| !finite_nonneg(v)) {
                c.error(&e, format!("override res_p at bus {} is negative", o.bus));
            }
        }
    }

    // States.
    for k in duplicates(case.states.iter().map(|s| s.k)) {
        c.error(format!("state {k}"), "duplicate state index");
    }
    let line_ids: BTreeSet<u32> = case.lines.iter().map(|l| l.id).collect();
    c.check(
        case.states.iter().any(|s| s.k == 0),
        "case",
        "missing normal state k = 0",
    );
    let mut outaged = BTreeMap::new();
    for s in &case.states {
        let e = format!("state {}", s.k);
        c.check(
            finite_nonneg(s.weight),
            &e,
            format!("weight must be nonnegative, got {}", s.weight),
        );
        match (s.k, s.outaged_line) {
            (0, Some(_)) => c.error(&e, "normal state must not have an outaged line"),
            (0, None) => {}
            (_, None) => c.error(&e, "contingency state without an outaged line"),
            (k, Some(line)) => {
                if !line_ids.contains(&line) {
                    c.error(&e, format!("outaged line {line} does not exist"));
                } else if let Some(prev) = outaged.insert(line, k) {
                    c.error(&e, format!("line {line} already outaged in state {prev}"));
                }
            }
        }
    }

    // Options.
    for id in duplicates(case.options.iter().map(|o| o.id)) {
        c.error(format!("option {id}"), "duplicate option id");
    }
    let flex_ids: BTreeSet<u32> = case.flex_providers.iter().map(|f| f.id).collect();
    let mut devices = BTreeSet::new();
    for o in &case.options {
        let e = format!("option {}", o.id);
        let exists = match o.kind {
            OptionKind::LineReinforcement { line } => line_ids.contains(&line),
            OptionKind::FlexCapacity { flex } => flex_ids.contains(&flex),
        };
        c.check(exists, &e, "referenced device does not exist");
        if !devices.insert(o.kind) {
            c.error(&e, "device already covered by another option");
        }
    }
    if case.options.len() > 64 {
        c.warn(
            "case",
            format!(
                "{} options exceed the 64-player coalition limit; screen before running a game",
                case.options.len()
            ),
        );
    }

    // Connectivity, only meaningful once references resolve.
    let structural_ok = !c.0.iter().any(|d| {
        d.severity == Severity::Error && (d.entity.starts_with("line") || d.entity.starts_with("bus"))
    });
    if structural_ok && !case.buses.is_empty() {
        if !is_connected(case, None) {
            c.error("case", "network is not connected in the normal state");
        } else {
            for s in case.states.iter().filter(|s| s.k > 0) {
                if let Some(line) = s.outaged_line {
                    if line_ids.contains(&line) && !is_connected(case, Some(line)) {
                        c.error(
                            format!("line {line}"),
                            format!("outage in state {} islands part of the network", s.k),
                        );
                    }
                }
            }
        }
    }

    c.0
}

/// Breadth-first search over in-service lines; true iff every bus is reached.
pub fn is_connected(case: &NetworkCase, outaged_line: Option<u32>) -> bool {
    let n = case.buses.len();
    if n == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for l in case.lines.iter().filter(|l| Some(l.id) != outaged_line) {
        if let (Some(a), Some(b)) = (case.bus_index(l.from_bus), case.bus_index(l.to_bus)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}
