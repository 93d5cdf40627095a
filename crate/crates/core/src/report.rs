//! Report data derived from a finished [`GameResult`]: a long-format CSV of
//! marginal contributions and a JSON bundle with per-player summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Coalition, Estimator, Game, GameResult, Metric};
use crate::solver::SolverSettings;

/// Run metadata copied into every report artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub case_name: String,
    pub case_hash: String,
    pub settings_hash: String,
    pub settings: SolverSettings,
    pub metric: Metric,
    pub unit: String,
    pub estimator: Estimator,
    pub baseline_objective: f64,
    pub coalitions: usize,
}

/// Five-number summary plus mean of one player's contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl McSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerReport {
    pub option: u32,
    pub label: String,
    pub shapley: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_err: Option<f64>,
    pub individual: Option<f64>,
    pub grand_marginal: Option<f64>,
    pub mc: McSummary,
}

/// One marginal contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub player: u32,
    pub label: String,
    pub coalition_size: usize,
    pub coalition: Coalition,
    pub mc_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: ReportMetadata,
    pub players: Vec<PlayerReport>,
    pub mc_table: Vec<McRow>,
}

/// Checks that the artifact holds values and that every contribution and
/// summary number matches the stored coalition values.
pub fn verify(result: &GameResult) -> Result<()> {
    let n = result.n_players();
    if result.values.is_empty() || result.mc_samples.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyGame);
    }
    if result.mc_samples.len() != n || result.shapley.len() != n {
        return Err(Error::Inconsistent(format!("{n} players but {} sample lists", result.mc_samples.len())));
    }
    let store = result.store();
    for (i, samples) in result.mc_samples.iter().enumerate() {
        for s in samples {
            let (Some(a), Some(b)) = (store.value(s.coalition.with(i)), store.value(s.coalition)) else {
                return Err(Error::Inconsistent(format!(
                    "player {i} sample at {} has no stored values",
                    s.coalition
                )));
            };
            if a - b != s.value {
                return Err(Error::Inconsistent(format!(
                    "player {i} sample at {} differs from its stored values",
                    s.coalition
                )));
            }
        }
    }
    Ok(())
}

pub fn metadata(result: &GameResult) -> ReportMetadata {
    ReportMetadata {
        tool_version: result.tool_version.clone(),
        case_name: result.case_name.clone(),
        case_hash: result.case_hash.clone(),
        settings_hash: result.settings_hash.clone(),
        settings: result.settings.clone(),
        metric: result.metric,
        unit: result.unit.clone(),
        estimator: result.estimator.clone(),
        baseline_objective: result.baseline_objective,
        coalitions: result.values.len(),
    }
}

fn rows(result: &GameResult) -> Vec<McRow> {
    let mut out = Vec::new();
    for (p, samples) in result.players.iter().zip(&result.mc_samples) {
        for s in samples {
            out.push(McRow {
                player: p.option,
                label: p.label.clone(),
                coalition_size: s.coalition.len(),
                coalition: s.coalition,
                mc_value: s.value,
            });
        }
    }
    out
}

pub fn bundle(result: &GameResult) -> Result<ReportBundle> {
    verify(result)?;
    let players = result
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mcs: Vec<f64> = result.mc_samples[i].iter().map(|s| s.value).collect();
            PlayerReport {
                option: p.option,
                label: p.label.clone(),
                shapley: result.shapley[i],
                std_err: result.std_err.as_ref().map(|e| e[i]),
                individual: result.individual[i],
                grand_marginal: result.grand_marginal[i],
                mc: McSummary::of(&mcs).unwrap_or(McSummary {
                    count: 0,
                    mean: f64::NAN,
                    min: f64::NAN,
                    q1: f64::NAN,
                    median: f64::NAN,
                    q3: f64::NAN,
                    max: f64::NAN,
                }),
            }
        })
        .collect();
    Ok(ReportBundle {
        metadata: metadata(result),
        players,
        mc_table: rows(result),
    })
}

pub fn to_json(result: &GameResult) -> Result<String> {
    let b = bundle(result)?;
    Ok(serde_json::to_string_pretty(&b).expect("bundle serializes") + "\n")
}

/// Long-format CSV, one row per marginal contribution, preceded by `#`
/// metadata lines.
pub fn to_csv(result: &GameResult) -> Result<String> {
    verify(result)?;
    let meta = metadata(result);
    let mut out = String::new();
    out.push_str(&format!("# tool_version: {}\n", meta.tool_version));
    out.push_str(&format!("# case: {} ({})\n", meta.case_name, meta.case_hash));
    out.push_str(&format!("# settings_hash: {}\n", meta.settings_hash));
    out.push_str(&format!("# metric: {} [{}]\n", meta.metric, meta.unit));
    out.push_str(&format!(
        "# estimator: {}\n",
        serde_json::to_string(&meta.estimator).expect("estimator serializes")
    ));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["player", "label", "coalition_size", "coalition", "mc_value"])
        .map_err(csv_err)?;
    for r in rows(result) {
        w.write_record([
            r.player.to_string(),
            r.label,
            r.coalition_size.to_string(),
            r.coalition.0.to_string(),
            format!("{:?}", r.mc_value),
        ])
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("csv is utf-8"));
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        what: "csv".into(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let s = McSummary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
        assert!(McSummary::of(&[]).is_none());
    }
}
