use serde::{Deserialize, Serialize};

/// A network node. Powers are in MW/MVAr, voltages in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub v_min: f64,
    pub v_max: f64,
    /// Base-case active demand; scenarios may override it.
    #[serde(default)]
    pub demand_p: f64,
    #[serde(default)]
    pub demand_q: f64,
    /// Available renewable injection.
    #[serde(default)]
    pub res_p: f64,
    #[serde(default)]
    pub is_reference: bool,
}

/// Series branch `g + jb` (p.u.) without shunt charging or taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub g: f64,
    pub b: f64,
    /// Apparent power rating, MVA.
    pub s_max: f64,
    /// Maximum reinforcement, MVA.
    #[serde(default)]
    pub li_max: f64,
    /// Levelised reinforcement cost, EUR per MVA and hour.
    #[serde(default)]
    pub c_inv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Cost polynomial `c0 + c1 P + c2 P^2` with P in MW, result in EUR/h.
    #[serde(default)]
    pub cost_c0: f64,
    #[serde(default)]
    pub cost_c1: f64,
    #[serde(default)]
    pub cost_c2: f64,
}

/// Storage or demand response able to move active/reactive injection up and down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexProvider {
    pub id: u32,
    pub bus: u32,
    #[serde(default)]
    pub p_up_base: f64,
    #[serde(default)]
    pub p_dn_base: f64,
    #[serde(default)]
    pub q_up_base: f64,
    #[serde(default)]
    pub q_dn_base: f64,
    /// Maximum capacity expansion, MW.
    #[serde(default)]
    pub fi_max: f64,
    /// Activation price, EUR/MWh.
    #[serde(default)]
    pub c_flex: f64,
    /// Levelised investment cost, EUR per MW and hour.
    #[serde(default)]
    pub c_inv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusOverride {
    pub bus: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub res_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u32,
    pub weight: f64,
    #[serde(default)]
    pub overrides: Vec<BusOverride>,
}

/// Operating state: `k = 0` is the intact network, `k >= 1` has one line out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outaged_line: Option<u32>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptionKind {
    LineReinforcement { line: u32 },
    FlexCapacity { flex: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentOption {
    pub id: u32,
    #[serde(flatten)]
    pub kind: OptionKind,
}

fn default_base_mva() -> f64 {
    100.0
}

fn default_c_curt_res() -> f64 {
    100.0
}

/// A complete planning instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    /// Load curtailment penalty, EUR/MWh.
    pub c_curt_load: f64,
    /// Renewable curtailment penalty, EUR/MWh.
    #[serde(default = "default_c_curt_res")]
    pub c_curt_res: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub flex_providers: Vec<FlexProvider>,
    pub scenarios: Vec<Scenario>,
    pub states: Vec<SystemState>,
    #[serde(default)]
    pub options: Vec<InvestmentOption>,
}

/// Demand and renewable availability of one bus in one scenario (MW/MVAr).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusLoading {
    pub demand_p: f64,
    pub demand_q: f64,
    pub res_p: f64,
}

impl NetworkCase {
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_index(&self, id: u32) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn flex_index(&self, id: u32) -> Option<usize> {
        self.flex_providers.iter().position(|f| f.id == id)
    }

    pub fn option_index(&self, id: u32) -> Option<usize> {
        self.options.iter().position(|o| o.id == id)
    }

    pub fn option(&self, id: u32) -> Option<&InvestmentOption> {
        self.options.iter().find(|o| o.id == id)
    }

    pub fn reference_bus(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_reference)
    }

    pub fn option_ids(&self) -> Vec<u32> {
        self.options.iter().map(|o| o.id).collect()
    }

    /// Effective loading of bus `bus` (index) in scenario `scenario` (index).
    pub fn loading(&self, scenario: usize, bus: usize) -> BusLoading {
        let b = &self.buses[bus];
        let mut out = BusLoading {
            demand_p: b.demand_p,
            demand_q: b.demand_q,
            res_p: b.res_p,
        };
        for o in self.scenarios[scenario]
            .overrides
            .iter()
            .filter(|o| o.bus == b.id)
        {
            if let Some(v) = o.demand_p {
                out.demand_p = v;
            }
            if let Some(v) = o.demand_q {
                out.demand_q = v;
            }
            if let Some(v) = o.res_p {
                out.res_p = v;
            }
        }
        out
    }

    /// Human-readable label of an investment option, e.g. `line 1-4` or `flex bus 2`.
    pub fn option_label(&self, id: u32) -> String {
        match self.option(id).map(|o| o.kind) {
            Some(OptionKind::LineReinforcement { line }) => match self.line_index(line) {
                Some(l) => format!("line {}-{}", self.lines[l].from_bus, self.lines[l].to_bus),
                None => format!("line #{line}"),
            },
            Some(OptionKind::FlexCapacity { flex }) => match self.flex_index(flex) {
                Some(f) => format!("flex bus {}", self.flex_providers[f].bus),
                None => format!("flex #{flex}"),
            },
            None => format!("option #{id}"),
        }
    }

    /// Investment option reinforcing line `line_id`, if any.
    pub fn line_option(&self, line_id: u32) -> Option<u32> {
        self.options.iter().find_map(|o| match o.kind {
            OptionKind::LineReinforcement { line } if line == line_id => Some(o.id),
            _ => None,
        })
    }

    pub fn flex_option(&self, flex_id: u32) -> Option<u32> {
        self.options.iter().find_map(|o| match o.kind {
            OptionKind::FlexCapacity { flex } if flex == flex_id => Some(o.id),
            _ => None,
        })
    }

    /// Probability-like weight of (scenario, state) used by the expected-cost objective.
    pub fn weight(&self, scenario: usize, state: usize) -> f64 {
        self.scenarios[scenario].weight * self.states[state].weight
    }
}
