use serde::{Deserialize, Serialize};

use crate::network::NetworkCase;

/// Variable indices of one (scenario, state) operating block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVars {
    pub scenario: usize,
    pub state: usize,
    pub e: Vec<usize>,
    pub f: Vec<usize>,
    /// Flow leaving the from-end, per line.
    pub p_from: Vec<usize>,
    pub q_from: Vec<usize>,
    /// Flow leaving the to-end, per line.
    pub p_to: Vec<usize>,
    pub q_to: Vec<usize>,
    pub pg: Vec<usize>,
    pub qg: Vec<usize>,
    pub p_up: Vec<usize>,
    pub p_dn: Vec<usize>,
    pub q_up: Vec<usize>,
    pub q_dn: Vec<usize>,
    pub lc: Vec<usize>,
    pub rc: Vec<usize>,
}

/// Dense mapping from model entities to flat variable indices.
///
/// Operating blocks are laid out contiguously in scenario-major order
/// (`block = scenario * n_states + state`), followed by the first-stage
/// investment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub n_scenarios: usize,
    pub n_states: usize,
    pub blocks: Vec<StateVars>,
    /// Reinforcement variable per line (None when the line has no option).
    pub li: Vec<Option<usize>>,
    /// Capacity-expansion variable per flex provider.
    pub fi: Vec<Option<usize>>,
    /// Variables per operating block.
    pub block_size: usize,
    pub n_vars: usize,
}

/// Entity counts that determine the problem size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub buses: usize,
    pub lines: usize,
    pub generators: usize,
    pub flex: usize,
    pub scenarios: usize,
    pub states: usize,
    pub contingencies: usize,
    pub reinforceable_lines: usize,
    pub investable_flex: usize,
}

impl ModelDims {
    pub fn of(case: &NetworkCase) -> Self {
        Self {
            buses: case.buses.len(),
            lines: case.lines.len(),
            generators: case.generators.len(),
            flex: case.flex_providers.len(),
            scenarios: case.scenarios.len(),
            states: case.states.len(),
            contingencies: case.states.iter().filter(|s| s.outaged_line.is_some()).count(),
            reinforceable_lines: case
                .lines
                .iter()
                .filter(|l| case.line_option(l.id).is_some())
                .count(),
            investable_flex: case
                .flex_providers
                .iter()
                .filter(|f| case.flex_option(f.id).is_some())
                .count(),
        }
    }

    /// Variables per operating block: `4N + 4L + 2G + 4F`
    /// (e, f, LC, RC per bus; four flows per line; P, Q per generator;
    /// four modulation directions per flex provider).
    pub fn vars_per_block(&self) -> usize {
        4 * self.buses + 4 * self.lines + 2 * self.generators + 4 * self.flex
    }

    /// `S·K·(4N + 4L + 2G + 4F) + |LI| + |FI|`.
    pub fn n_vars(&self) -> usize {
        self.scenarios * self.states * self.vars_per_block()
            + self.reinforceable_lines
            + self.investable_flex
    }

    /// Rows of one block with `in_service` lines: four flow definitions and
    /// two thermal limits per line, P/Q balance and voltage per bus, and four
    /// capacity rows per investable flex provider.
    pub fn rows_per_block(&self, in_service: usize) -> usize {
        6 * in_service + 3 * self.buses + 4 * self.investable_flex
    }

    /// `S·[(K − C)·rows(L) + C·rows(L − 1)]` with `C` contingency states.
    pub fn n_rows(&self) -> usize {
        let normal = self.states - self.contingencies;
        self.scenarios
            * (normal * self.rows_per_block(self.lines)
                + self.contingencies * self.rows_per_block(self.lines.saturating_sub(1)))
    }
}

impl VariableLayout {
    pub fn new(case: &NetworkCase) -> Self {
        let nb = case.buses.len();
        let nl = case.lines.len();
        let ng = case.generators.len();
        let nf = case.flex_providers.len();
        let mut next = 0usize;
        let mut take = |n: usize| -> Vec<usize> {
            let v: Vec<usize> = (next..next + n).collect();
            next += n;
            v
        };
        let block_size = 4 * nb + 4 * nl + 2 * ng + 4 * nf;
        let mut blocks = Vec::with_capacity(case.scenarios.len() * case.states.len());
        for s in 0..case.scenarios.len() {
            for k in 0..case.states.len() {
                blocks.push(StateVars {
                    scenario: s,
                    state: k,
                    e: take(nb),
                    f: take(nb),
                    p_from: take(nl),
                    q_from: take(nl),
                    p_to: take(nl),
                    q_to: take(nl),
                    pg: take(ng),
                    qg: take(ng),
                    p_up: take(nf),
                    p_dn: take(nf),
                    q_up: take(nf),
                    q_dn: take(nf),
                    lc: take(nb),
                    rc: take(nb),
                });
            }
        }
        let li = case
            .lines
            .iter()
            .map(|l| case.line_option(l.id).map(|_| take(1)[0]))
            .collect();
        let fi = case
            .flex_providers
            .iter()
            .map(|f| case.flex_option(f.id).map(|_| take(1)[0]))
            .collect();
        Self {
            n_scenarios: case.scenarios.len(),
            n_states: case.states.len(),
            blocks,
            li,
            fi,
            block_size,
            n_vars: next,
        }
    }

    pub fn block_index(&self, scenario: usize, state: usize) -> usize {
        scenario * self.n_states + state
    }

    pub fn block(&self, scenario: usize, state: usize) -> &StateVars {
        &self.blocks[self.block_index(scenario, state)]
    }

    /// Block owning variable `idx`, `None` for investment variables.
    pub fn block_of(&self, idx: usize) -> Option<usize> {
        let per = self.block_size;
        (per > 0 && idx < per * self.blocks.len()).then(|| idx / per)
    }

    /// Name such as `e[bus 3](s1,k0)` or `LI[line 2]`.
    pub fn describe(&self, case: &NetworkCase, idx: usize) -> String {
        if let Some(l) = self.li.iter().position(|&v| v == Some(idx)) {
            return format!("LI[line {}]", case.lines[l].id);
        }
        if let Some(f) = self.fi.iter().position(|&v| v == Some(idx)) {
            return format!("FI[flex {}]", case.flex_providers[f].id);
        }
        let Some(b) = self.block_of(idx) else {
            return format!("x{idx}");
        };
        let sv = &self.blocks[b];
        let tag = format!(
            "(s{},k{})",
            case.scenarios[sv.scenario].id, case.states[sv.state].k
        );
        let groups: [(&str, &str, &Vec<usize>); 14] = [
            ("e", "bus", &sv.e),
            ("f", "bus", &sv.f),
            ("p_from", "line", &sv.p_from),
            ("q_from", "line", &sv.q_from),
            ("p_to", "line", &sv.p_to),
            ("q_to", "line", &sv.q_to),
            ("Pg", "gen", &sv.pg),
            ("Qg", "gen", &sv.qg),
            ("Pup", "flex", &sv.p_up),
            ("Pdn", "flex", &sv.p_dn),
            ("Qup", "flex", &sv.q_up),
            ("Qdn", "flex", &sv.q_dn),
            ("LC", "bus", &sv.lc),
            ("RC", "bus", &sv.rc),
        ];
        for (name, entity, idxs) in groups {
            if let Some(pos) = idxs.iter().position(|&v| v == idx) {
                let id = match entity {
                    "bus" => case.buses[pos].id,
                    "line" => case.lines[pos].id,
                    "gen" => case.generators[pos].id,
                    _ => case.flex_providers[pos].id,
                };
                return format!("{name}[{entity} {id}]{tag}");
            }
        }
        format!("x{idx}")
    }
}
