//! The coalitional game over investment options: characteristic values from
//! planning solves, screening, and exact or sampled Shapley values.

pub mod coalition;
pub mod shapley;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use coalition::{Coalition, MAX_PLAYERS};
pub use shapley::{
    marginal_contribution, marginal_contributions, monotonicity_violations, permutation_coalitions,
    sample_permutations, shapley_exact, shapley_from_permutations, shapley_from_samples, shapley_weights, Game,
    McSample, MonotonicityViolation, SampledShapley, TableGame,
};

use crate::error::{Error, Result};
use crate::formulation::{build_nlp, ObjectiveKind};
use crate::network::{case_hash, NetworkCase};
use crate::runner::{self, unix_now, Evaluation, Journal, RunKey, RunManifest};
use crate::solver::{self, SolveStatus, SolverSettings};

/// Default cap on players for the full game.
pub const DEFAULT_PLAYER_CAP: usize = 20;

/// Default relative floor below which a marginal contribution is flagged.
pub const DEFAULT_MC_FLOOR: f64 = -1e-4;

/// What a coalition's value measures. Both are reductions relative to the
/// empty coalition, so larger is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Avoided load curtailment, MW summed over scenarios, states and buses.
    AvoidedCurtailment,
    /// Expected cost reduction, EUR/h.
    ExpectedCostReduction,
}

impl Metric {
    pub fn objective_kind(self) -> ObjectiveKind {
        match self {
            Metric::AvoidedCurtailment => ObjectiveKind::MinCurtailment,
            Metric::ExpectedCostReduction => ObjectiveKind::MinExpectedCost,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::AvoidedCurtailment => "avoided_curtailment",
            Metric::ExpectedCostReduction => "expected_cost_reduction",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::AvoidedCurtailment => "MW",
            Metric::ExpectedCostReduction => "EUR/h",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A player: one investment option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub option: u32,
    pub label: String,
}

/// `v(S)` together with the solve behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicValue {
    pub coalition: Coalition,
    pub metric: Metric,
    /// Baseline objective minus this coalition's objective; `None` unless
    /// both solves are optimal.
    pub value: Option<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    #[serde(default)]
    pub repaired: bool,
}

/// Run-time knobs for game evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOptions {
    pub workers: usize,
    /// Journal file; values are kept in memory only when `None`.
    pub journal: Option<PathBuf>,
    /// Reuse a matching journal instead of starting over.
    pub resume: bool,
    pub player_cap: usize,
    /// Relative floor for flagging negative marginal contributions.
    pub mc_floor: f64,
    /// Re-solve flagged coalitions warm-started from their subset.
    pub repair: bool,
}

impl Default for GameOptions {
    fn default() -> Self {
        Self {
            workers: runner::default_workers(),
            journal: None,
            resume: false,
            player_cap: DEFAULT_PLAYER_CAP,
            mc_floor: DEFAULT_MC_FLOOR,
            repair: true,
        }
    }
}

/// Solver-backed characteristic function with a value store.
pub struct Evaluator<'a> {
    case: &'a NetworkCase,
    players: Vec<u32>,
    metric: Metric,
    settings: SolverSettings,
    key: RunKey,
    records: BTreeMap<Coalition, Evaluation>,
    journal: Option<Journal>,
    workers: usize,
    estimator: String,
    solves: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        case: &'a NetworkCase,
        players: &[u32],
        metric: Metric,
        settings: &SolverSettings,
        opts: &GameOptions,
    ) -> Result<Self> {
        settings.validate()?;
        if opts.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        if players.len() >= MAX_PLAYERS {
            return Err(Error::TooManyPlayers {
                players: players.len(),
                cap: MAX_PLAYERS - 1,
            });
        }
        for (k, &id) in players.iter().enumerate() {
            if case.option(id).is_none() {
                return Err(Error::UnknownOption(id));
            }
            if players[..k].contains(&id) {
                return Err(Error::InvalidArgument(format!("option {id} listed twice")));
            }
        }
        let key = RunKey {
            case_hash: case_hash(case),
            metric,
            settings_hash: settings.hash(),
            players: players.to_vec(),
        };
        let (journal, records) = match &opts.journal {
            Some(path) => {
                let (j, r) = Journal::open(path, key.clone(), opts.resume)?;
                if !r.is_empty() {
                    info!("resumed {} journaled coalition(s) from {}", r.len(), path.display());
                }
                (Some(j), r)
            }
            None => (None, BTreeMap::new()),
        };
        Ok(Self {
            case,
            players: players.to_vec(),
            metric,
            settings: settings.clone(),
            key,
            records,
            journal,
            workers: opts.workers,
            estimator: "exact".into(),
            solves: 0,
        })
    }

    pub fn players(&self) -> &[u32] {
        &self.players
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn key(&self) -> &RunKey {
        &self.key
    }

    /// Solves performed by this evaluator (journal replays excluded).
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn records(&self) -> &BTreeMap<Coalition, Evaluation> {
        &self.records
    }

    /// Option ids enabled in `c`, ascending.
    pub fn enabled(&self, c: Coalition) -> Vec<u32> {
        let mut ids: Vec<u32> = c.members().map(|i| self.players[i]).collect();
        ids.sort_unstable();
        ids
    }

    fn check(&self, c: Coalition) -> Result<()> {
        if c.fits(self.players.len()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "coalition {c} exceeds {} players",
                self.players.len()
            )))
        }
    }

    fn solve_one(&self, c: Coalition, warm: Option<Coalition>) -> (Evaluation, Option<Vec<f64>>) {
        let t = Instant::now();
        let failed = |status| Evaluation {
            coalition: c,
            objective: 0.0,
            status,
            iterations: 0,
            wall_time_s: t.elapsed().as_secs_f64(),
            repaired: false,
            t_unix: unix_now(),
        };
        let kind = self.metric.objective_kind();
        let problem = match build_nlp(self.case, &self.enabled(c), kind) {
            Ok(p) => p,
            Err(e) => {
                warn!("coalition {c}: {e}");
                return (failed(SolveStatus::NumericalFailure), None);
            }
        };
        let result = match warm {
            None => solver::solve(&problem, &self.settings),
            Some(s) => {
                let (_, x) = self.solve_one(s, None);
                let Some(x) = x else {
                    return (failed(SolveStatus::NumericalFailure), None);
                };
                // Options are closed by bounds only, so layouts agree.
                let mut start = x;
                for (v, (&l, &u)) in start.iter_mut().zip(problem.qcqp.lower.iter().zip(&problem.qcqp.upper)) {
                    *v = v.clamp(l, u);
                }
                solver::solve_from(&problem, &self.settings, &start)
            }
        };
        let ev = Evaluation {
            coalition: c,
            objective: result.objective,
            status: result.status,
            iterations: result.iterations,
            wall_time_s: t.elapsed().as_secs_f64(),
            repaired: warm.is_some(),
            t_unix: unix_now(),
        };
        let x = result.is_optimal().then_some(result.x);
        (ev, x)
    }

    /// Solves every coalition in `plan` without an optimal stored value.
    /// Returns the number of solves performed.
    pub fn ensure(&mut self, plan: &[Coalition]) -> Result<usize> {
        for &c in plan {
            self.check(c)?;
        }
        let done: BTreeMap<Coalition, Evaluation> = self
            .records
            .iter()
            .filter(|(_, e)| e.is_optimal())
            .map(|(c, e)| (*c, e.clone()))
            .collect();
        let mut journal = self.journal.take();
        let this = &*self;
        let mut fresh = Vec::new();
        let res = runner::execute(plan, &done, self.workers, |c| this.solve_one(c, None).0, |ev| {
            if !ev.is_optimal() {
                warn!("coalition {}: solver status {}", ev.coalition, ev.status);
            }
            if let Some(j) = journal.as_mut() {
                j.append(&ev)?;
            }
            fresh.push(ev);
            Ok(())
        });
        self.journal = journal;
        for ev in fresh {
            self.records.insert(ev.coalition, ev);
        }
        let n = res?;
        self.solves += n;
        self.save_manifest()?;
        Ok(n)
    }

    /// Objective of the empty coalition, when optimal.
    pub fn baseline(&self) -> Option<f64> {
        self.records
            .get(&Coalition::EMPTY)
            .filter(|e| e.is_optimal())
            .map(|e| e.objective)
    }

    pub fn characteristic_value(&self, c: Coalition) -> Option<CharacteristicValue> {
        let ev = self.records.get(&c)?;
        Some(CharacteristicValue {
            coalition: c,
            metric: self.metric,
            value: self.value(c),
            objective: ev.objective,
            status: ev.status,
            repaired: ev.repaired,
        })
    }

    /// Every stored characteristic value, in mask order.
    pub fn values(&self) -> Vec<CharacteristicValue> {
        self.records
            .keys()
            .filter_map(|&c| self.characteristic_value(c))
            .collect()
    }

    pub fn failed(&self) -> Vec<Coalition> {
        self.records
            .values()
            .filter(|e| !e.is_optimal())
            .map(|e| e.coalition)
            .collect()
    }

    /// Re-solves coalitions that lose value when a player joins, starting
    /// from the smaller coalition's solution, and keeps the better local
    /// optimum. Repeats until nothing improves. Returns the coalitions whose
    /// values changed.
    pub fn repair_monotonicity(&mut self, floor: f64) -> Result<Vec<Coalition>> {
        let mut changed = std::collections::BTreeSet::new();
        for pass in 0..4 {
            let violations = monotonicity_violations(&*self, floor);
            if violations.is_empty() {
                break;
            }
            // Warm-start each offending superset from its best subset.
            let mut source: BTreeMap<Coalition, Coalition> = BTreeMap::new();
            for v in &violations {
                let t = v.coalition.with(v.player);
                let better = match source.get(&t) {
                    Some(&s) => self.value(v.coalition) > self.value(s),
                    None => true,
                };
                if better {
                    source.insert(t, v.coalition);
                }
            }
            info!(
                "monotonicity pass {}: {} violation(s), re-solving {} coalition(s)",
                pass + 1,
                violations.len(),
                source.len()
            );
            let plan: Vec<Coalition> = source.keys().copied().collect();
            let this = &*self;
            let mut fresh = Vec::new();
            let n = runner::execute(&plan, &BTreeMap::new(), self.workers, |t| this.solve_one(t, Some(source[&t])).0, |ev| {
                fresh.push(ev);
                Ok(())
            })?;
            self.solves += 2 * n;
            let mut improved = 0;
            for ev in fresh {
                let old = &self.records[&ev.coalition];
                if ev.is_optimal() && (!old.is_optimal() || ev.objective < old.objective) {
                    if let Some(j) = self.journal.as_mut() {
                        j.append(&ev)?;
                    }
                    changed.insert(ev.coalition);
                    self.records.insert(ev.coalition, ev);
                    improved += 1;
                }
            }
            if improved == 0 {
                break;
            }
        }
        let remaining = monotonicity_violations(&*self, floor);
        if !remaining.is_empty() {
            warn!("{} monotonicity violation(s) remain after re-solve", remaining.len());
        }
        self.save_manifest()?;
        Ok(changed.into_iter().collect())
    }

    fn save_manifest(&self) -> Result<()> {
        let Some(j) = &self.journal else { return Ok(()) };
        let mut m = RunManifest::from_records(self.key.clone(), self.estimator.clone(), &self.records, j.created_unix());
        m.updated_unix = m.updated_unix.max(unix_now());
        m.save(j.manifest_path())
    }
}

impl Game for Evaluator<'_> {
    fn n_players(&self) -> usize {
        self.players.len()
    }

    fn value(&self, s: Coalition) -> Option<f64> {
        let base = self.baseline()?;
        if s.is_empty() {
            return Some(0.0);
        }
        self.records
            .get(&s)
            .filter(|e| e.is_optimal())
            .map(|e| base - e.objective)
    }
}

/// `v(S)` for a single coalition over `players`, solving the baseline too.
pub fn characteristic_value(
    case: &NetworkCase,
    players: &[u32],
    coalition: Coalition,
    metric: Metric,
    settings: &SolverSettings,
) -> Result<CharacteristicValue> {
    let mut ev = Evaluator::new(case, players, metric, settings, &GameOptions {
        workers: 1,
        ..GameOptions::default()
    })?;
    ev.ensure(&[Coalition::EMPTY, coalition])?;
    if ev.baseline().is_none() {
        return Err(Error::Solver(format!(
            "baseline solve ended with status {}",
            ev.records[&Coalition::EMPTY].status
        )));
    }
    let cv = ev.characteristic_value(coalition).expect("evaluated");
    if cv.value.is_none() {
        return Err(Error::Solver(format!("coalition {coalition}: status {}", cv.status)));
    }
    Ok(cv)
}

/// One row of a screening table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenEntry {
    pub option: u32,
    pub label: String,
    /// `v({i})`, absent when the solve failed.
    pub value: Option<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// True when another option has the same value.
    pub tied: bool,
}

/// Options ranked by their individual value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub tool_version: String,
    pub case_hash: String,
    pub settings_hash: String,
    pub metric: Metric,
    pub baseline_objective: f64,
    pub entries: Vec<ScreenEntry>,
}

impl Screening {
    /// Ids of the first `k` ranked options with a value.
    pub fn top(&self, k: usize) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|e| e.value.is_some())
            .take(k)
            .map(|e| e.option)
            .collect()
    }
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

/// Ranks every option of `case` by `v({i})`, descending. Equal values keep
/// id order and are flagged as ties; failed solves go last.
pub fn screen_options(
    case: &NetworkCase,
    metric: Metric,
    settings: &SolverSettings,
    opts: &GameOptions,
) -> Result<Screening> {
    let ids = case.option_ids();
    let mut ev = Evaluator::new(case, &ids, metric, settings, opts)?;
    let mut plan = vec![Coalition::EMPTY];
    plan.extend((0..ids.len()).map(|i| Coalition::EMPTY.with(i)));
    ev.ensure(&plan)?;
    let Some(baseline_objective) = ev.baseline() else {
        return Err(Error::Solver(format!(
            "baseline solve ended with status {}",
            ev.records[&Coalition::EMPTY].status
        )));
    };
    let mut entries: Vec<ScreenEntry> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let c = Coalition::EMPTY.with(i);
            let rec = &ev.records()[&c];
            ScreenEntry {
                option: id,
                label: case.option_label(id),
                value: ev.value(c),
                objective: rec.objective,
                status: rec.status,
                tied: false,
            }
        })
        .collect();
    entries.sort_by(|a, b| match (a.value, b.value) {
        (Some(x), Some(y)) if !same_value(x, y) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        _ => a.option.cmp(&b.option),
    });
    for k in 0..entries.len() {
        let Some(v) = entries[k].value else { continue };
        entries[k].tied = entries
            .iter()
            .enumerate()
            .any(|(j, e)| j != k && e.value.is_some_and(|w| same_value(v, w)));
    }
    Ok(Screening {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        case_hash: ev.key().case_hash.clone(),
        settings_hash: ev.key().settings_hash.clone(),
        metric,
        baseline_objective,
        entries,
    })
}

/// How the Shapley values were obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Sampled {
        permutations: usize,
        seed: u64,
        used: usize,
        skipped: usize,
    },
}

/// Everything computed for one game. Deterministic for fixed inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub tool_version: String,
    pub case_name: String,
    pub case_hash: String,
    pub settings_hash: String,
    pub settings: SolverSettings,
    pub metric: Metric,
    pub unit: String,
    pub estimator: Estimator,
    pub players: Vec<Player>,
    pub baseline_objective: f64,
    /// Stored values in mask order.
    pub values: Vec<CharacteristicValue>,
    /// Marginal-contribution samples per player.
    pub mc_samples: Vec<Vec<McSample>>,
    pub shapley: Vec<f64>,
    /// Standard errors of sampled estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_err: Option<Vec<f64>>,
    /// `v({i})`.
    pub individual: Vec<Option<f64>>,
    /// `v(N) − v(N∖{i})`.
    pub grand_marginal: Vec<Option<f64>>,
    pub monotonicity_violations: Vec<MonotonicityViolation>,
    /// Coalitions whose value came from a warm-started re-solve.
    pub repaired: Vec<Coalition>,
    pub failed: Vec<Coalition>,
}

impl GameResult {
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn grand_value(&self) -> Option<f64> {
        let g = Coalition::grand(self.players.len());
        self.values.iter().find(|v| v.coalition == g).and_then(|v| v.value)
    }

    /// Stored values as a [`Game`].
    pub fn store(&self) -> StoredGame {
        StoredGame {
            n: self.players.len(),
            values: self
                .values
                .iter()
                .filter_map(|v| v.value.map(|x| (v.coalition, x)))
                .collect(),
        }
    }
}

/// Game over a finished value table.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredGame {
    n: usize,
    values: BTreeMap<Coalition, f64>,
}

impl Game for StoredGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn value(&self, s: Coalition) -> Option<f64> {
        self.values.get(&s).copied()
    }
}

fn players_of(case: &NetworkCase, ids: &[u32]) -> Vec<Player> {
    ids.iter()
        .map(|&id| Player {
            option: id,
            label: case.option_label(id),
        })
        .collect()
}

fn assemble(
    ev: &Evaluator,
    estimator: Estimator,
    mc_samples: Vec<Vec<McSample>>,
    shapley: Vec<f64>,
    std_err: Option<Vec<f64>>,
    floor: f64,
    repaired: Vec<Coalition>,
) -> GameResult {
    let n = ev.n_players();
    let grand = Coalition::grand(n);
    GameResult {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        case_name: ev.case.name.clone(),
        case_hash: ev.key.case_hash.clone(),
        settings_hash: ev.key.settings_hash.clone(),
        settings: ev.settings.clone(),
        metric: ev.metric,
        unit: ev.metric.unit().into(),
        estimator,
        players: players_of(ev.case, &ev.players),
        baseline_objective: ev.baseline().unwrap_or(f64::NAN),
        values: ev.values(),
        mc_samples,
        shapley,
        std_err,
        individual: (0..n).map(|i| ev.value(Coalition::EMPTY.with(i))).collect(),
        grand_marginal: (0..n)
            .map(|i| marginal_contribution(ev, i, grand.without(i)).ok())
            .collect(),
        monotonicity_violations: monotonicity_violations(ev, floor),
        repaired,
        failed: ev.failed(),
    }
}

fn require_baseline(ev: &Evaluator) -> Result<()> {
    match ev.baseline() {
        Some(_) => Ok(()),
        None => Err(Error::Solver(format!(
            "baseline solve ended with status {}",
            ev.records.get(&Coalition::EMPTY).map_or(SolveStatus::NumericalFailure, |e| e.status)
        ))),
    }
}

/// Evaluates all `2^N` coalitions of `players` and the exact Shapley values.
pub fn run_full_game(
    case: &NetworkCase,
    players: &[u32],
    metric: Metric,
    settings: &SolverSettings,
    opts: &GameOptions,
) -> Result<GameResult> {
    if players.len() > opts.player_cap {
        return Err(Error::TooManyPlayers {
            players: players.len(),
            cap: opts.player_cap,
        });
    }
    let mut ev = Evaluator::new(case, players, metric, settings, opts)?;
    let plan: Vec<Coalition> = Coalition::all(players.len()).collect();
    ev.ensure(&plan)?;
    require_baseline(&ev)?;
    let repaired = if opts.repair {
        ev.repair_monotonicity(opts.mc_floor)?
    } else {
        Vec::new()
    };
    let failed = ev.failed();
    if !failed.is_empty() {
        return Err(Error::Solver(format!(
            "{} coalition(s) not optimal (first {}); rerun with resume to retry them",
            failed.len(),
            failed[0]
        )));
    }
    let n = players.len();
    let mc_samples = (0..n)
        .map(|i| marginal_contributions(&ev, i))
        .collect::<Result<Vec<_>>>()?;
    let shapley = mc_samples.iter().map(|s| shapley_from_samples(n, s)).collect();
    Ok(assemble(&ev, Estimator::Exact, mc_samples, shapley, None, opts.mc_floor, repaired))
}

/// Permutation-sampling Shapley estimates from `m` orderings drawn with
/// `seed`. Orderings that touch a failed coalition are skipped.
#[allow(clippy::too_many_arguments)]
pub fn shapley_sampled(
    case: &NetworkCase,
    players: &[u32],
    metric: Metric,
    m: usize,
    seed: u64,
    settings: &SolverSettings,
    opts: &GameOptions,
) -> Result<GameResult> {
    if m == 0 {
        return Err(Error::InvalidArgument("at least one permutation is needed".into()));
    }
    let mut ev = Evaluator::new(case, players, metric, settings, opts)?;
    ev.estimator = format!("sampled({m}, {seed})");
    let n = players.len();
    let perms = sample_permutations(n, m, seed);
    let mut plan = permutation_coalitions(&perms);
    let grand = Coalition::grand(n);
    for i in 0..n {
        plan.push(Coalition::EMPTY.with(i));
        plan.push(grand.without(i));
    }
    ev.ensure(&plan)?;
    require_baseline(&ev)?;
    let repaired = if opts.repair {
        ev.repair_monotonicity(opts.mc_floor)?
    } else {
        Vec::new()
    };
    let s = shapley_from_permutations(&ev, &perms);
    if s.skipped > 0 {
        warn!("{} of {m} permutation(s) skipped over failed coalitions", s.skipped);
    }
    if s.used == 0 {
        return Err(Error::Solver("every permutation touched a failed coalition".into()));
    }
    let estimator = Estimator::Sampled {
        permutations: m,
        seed,
        used: s.used,
        skipped: s.skipped,
    };
    Ok(assemble(&ev, estimator, s.samples, s.mean, Some(s.std_err), opts.mc_floor, repaired))
}
