//! Import of MATPOWER-style `.m` case files.
//!
//! Only `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and (optionally)
//! `mpc.gencost` are read. Branches become pure series admittances with
//! `g = r/(r²+x²)`, `b = −x/(r²+x²)`; line charging and tap ratios are dropped.

use std::collections::BTreeMap;

use log::warn;

use super::case::{
    Bus, Generator, InvestmentOption, Line, NetworkCase, OptionKind, Scenario, SystemState,
};
use super::validate::is_connected;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ImportOptions {
    pub c_curt_load: f64,
    pub c_curt_res: f64,
    /// Weight of the normal state.
    pub normal_weight: f64,
    /// Weight of every contingency state.
    pub contingency_weight: f64,
    /// Add an N-1 state for every non-islanding line.
    pub contingencies: bool,
    /// Rating used when `rateA` is zero (unlimited), MVA.
    pub unlimited_rating: f64,
    /// Reinforcement cap given to every line (0 disables line options).
    pub line_li_max: f64,
    pub line_c_inv: f64,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            c_curt_load: 1e4,
            c_curt_res: 100.0,
            normal_weight: 0.95,
            contingency_weight: 0.05,
            contingencies: true,
            unlimited_rating: 9999.0,
            line_li_max: 0.0,
            line_c_inv: 0.0,
        }
    }
}

/// Converts series resistance/reactance to series conductance/susceptance.
pub fn series_admittance(r: f64, x: f64) -> (f64, f64) {
    let z2 = r * r + x * x;
    (r / z2, -x / z2)
}

fn parse_err(message: impl Into<String>) -> Error {
    Error::Parse {
        what: "MATPOWER case".into(),
        message: message.into(),
    }
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| match l.find('%') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Collects `mpc.<name> = [ ... ];` matrices and `mpc.<name> = value;` scalars.
type Fields = (BTreeMap<String, Vec<Vec<f64>>>, BTreeMap<String, f64>);

fn parse_fields(text: &str) -> Result<Fields> {
    let text = strip_comments(text);
    let mut matrices = BTreeMap::new();
    let mut scalars = BTreeMap::new();
    let mut rest = text.as_str();
    while let Some(pos) = rest.find("mpc.") {
        rest = &rest[pos + 4..];
        let Some(eq) = rest.find('=') else { break };
        let name = rest[..eq].trim().to_string();
        let after = rest[eq + 1..].trim_start();
        if let Some(body) = after.strip_prefix('[') {
            let end = body
                .find(']')
                .ok_or_else(|| parse_err(format!("unterminated matrix mpc.{name}")))?;
            let mut rows = Vec::new();
            for row in body[..end].split([';', '\n']) {
                let vals: Vec<f64> = row
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("mpc.{name}: {e}")))?;
                if !vals.is_empty() {
                    rows.push(vals);
                }
            }
            matrices.insert(name, rows);
            rest = &body[end + 1..];
        } else {
            let end = after.find(';').unwrap_or(after.len());
            let token = after[..end].trim();
            if let Ok(v) = token.parse::<f64>() {
                scalars.insert(name, v);
            }
            rest = &after[end..];
        }
    }
    Ok((matrices, scalars))
}

fn col(row: &[f64], i: usize, what: &str) -> Result<f64> {
    row.get(i)
        .copied()
        .ok_or_else(|| parse_err(format!("{what}: missing column {}", i + 1)))
}

/// Builds a single-scenario planning case from MATPOWER text.
pub fn import_matpower(text: &str, name: &str, opts: &ImportOptions) -> Result<NetworkCase> {
    let (matrices, scalars) = parse_fields(text)?;
    let base_mva = scalars.get("baseMVA").copied().unwrap_or(100.0);
    let bus_rows = matrices
        .get("bus")
        .ok_or_else(|| parse_err("missing mpc.bus"))?;
    let gen_rows = matrices.get("gen").cloned().unwrap_or_default();
    let branch_rows = matrices
        .get("branch")
        .ok_or_else(|| parse_err("missing mpc.branch"))?;
    let gencost = matrices.get("gencost").cloned().unwrap_or_default();

    let mut buses = Vec::with_capacity(bus_rows.len());
    for r in bus_rows {
        let id = col(r, 0, "bus")? as u32;
        buses.push(Bus {
            id,
            v_min: col(r, 12, "bus")?,
            v_max: col(r, 11, "bus")?,
            demand_p: col(r, 2, "bus")?.max(0.0),
            demand_q: col(r, 3, "bus")?,
            res_p: 0.0,
            is_reference: col(r, 1, "bus")? as i64 == 3,
        });
        if col(r, 4, "bus")? != 0.0 || col(r, 5, "bus")? != 0.0 {
            warn!("bus {id}: shunt admittance ignored");
        }
    }

    let mut generators = Vec::new();
    for (i, r) in gen_rows.iter().enumerate() {
        if col(r, 7, "gen")? <= 0.0 {
            continue;
        }
        let (c2, c1, c0) = match gencost.get(i) {
            Some(c) if c.first() == Some(&2.0) => {
                let n = col(c, 3, "gencost")? as usize;
                let coeffs = &c[4..4 + n.min(c.len() - 4)];
                let get = |from_end: usize| -> f64 {
                    coeffs
                        .len()
                        .checked_sub(from_end + 1)
                        .map(|j| coeffs[j])
                        .unwrap_or(0.0)
                };
                (get(2), get(1), get(0))
            }
            _ => (0.0, 0.0, 0.0),
        };
        generators.push(Generator {
            id: i as u32 + 1,
            bus: col(r, 0, "gen")? as u32,
            p_min: col(r, 9, "gen")?,
            p_max: col(r, 8, "gen")?,
            q_min: col(r, 4, "gen")?,
            q_max: col(r, 3, "gen")?,
            cost_c0: c0,
            cost_c1: c1,
            cost_c2: c2.max(0.0),
        });
    }

    let mut lines = Vec::new();
    for (i, r) in branch_rows.iter().enumerate() {
        if r.len() > 10 && r[10] <= 0.0 {
            continue;
        }
        let (g, b) = series_admittance(col(r, 2, "branch")?, col(r, 3, "branch")?);
        let rate = col(r, 5, "branch")?;
        let ratio = r.get(8).copied().unwrap_or(0.0);
        if ratio != 0.0 && ratio != 1.0 {
            warn!("branch {}: tap ratio {ratio} ignored", i + 1);
        }
        lines.push(Line {
            id: i as u32 + 1,
            from_bus: col(r, 0, "branch")? as u32,
            to_bus: col(r, 1, "branch")? as u32,
            g,
            b,
            s_max: if rate > 0.0 { rate } else { opts.unlimited_rating },
            li_max: opts.line_li_max,
            c_inv: opts.line_c_inv,
        });
    }

    let mut case = NetworkCase {
        name: name.to_string(),
        base_mva,
        c_curt_load: opts.c_curt_load,
        c_curt_res: opts.c_curt_res,
        buses,
        lines,
        generators,
        flex_providers: Vec::new(),
        scenarios: vec![Scenario {
            id: 1,
            weight: 1.0,
            overrides: Vec::new(),
        }],
        states: vec![SystemState {
            k: 0,
            outaged_line: None,
            weight: opts.normal_weight,
        }],
        options: Vec::new(),
    };

    if opts.contingencies {
        let mut k = 1;
        for l in case.lines.clone() {
            if is_connected(&case, Some(l.id)) {
                case.states.push(SystemState {
                    k,
                    outaged_line: Some(l.id),
                    weight: opts.contingency_weight,
                });
                k += 1;
            }
        }
    }
    if opts.line_li_max > 0.0 {
        case.options = case
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| InvestmentOption {
                id: i as u32 + 1,
                kind: OptionKind::LineReinforcement { line: l.id },
            })
            .collect();
    }
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::validate_case;

    const CASE3: &str = r#"
function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm	Va	baseKV	zone	Vmax	Vmin
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	90	30	0	0	1	1	0	345	1	1.1	0.9;
	3	1	100	35	0	0	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	250	250	250	0	0	1	-360	360;
	1	3	0.02	0.2	0	0	250	250	0	0	1	-360	360;
	2	3	0.01	0.1	0	150	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.11	5	150;
];
"#;

    #[test]
    fn branch_impedance_maps_to_series_admittance() {
        let (g, b) = series_admittance(0.01, 0.1);
        assert!((g - 0.01 / 0.0101).abs() < 1e-12);
        assert!((b + 0.1 / 0.0101).abs() < 1e-12);
    }

    #[test]
    fn imports_three_bus_case() {
        let opts = ImportOptions {
            line_li_max: 50.0,
            ..Default::default()
        };
        let case = import_matpower(CASE3, "case3", &opts).unwrap();
        assert_eq!(case.buses.len(), 3);
        assert_eq!(case.lines.len(), 3);
        assert_eq!(case.generators.len(), 1);
        assert_eq!(case.generators[0].cost_c2, 0.11);
        assert_eq!(case.generators[0].cost_c1, 5.0);
        assert_eq!(case.generators[0].cost_c0, 150.0);
        assert_eq!(case.lines[1].s_max, opts.unlimited_rating);
        // A triangle survives every single outage.
        assert_eq!(case.states.len(), 4);
        assert_eq!(case.options.len(), 3);
        assert!(validate_case(&case).is_empty(), "{:?}", validate_case(&case));
    }

    #[test]
    fn missing_branch_table_is_a_parse_error() {
        let err = import_matpower("mpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1.1 0.9];", "x", &ImportOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
