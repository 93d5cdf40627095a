//! Parallel coalition evaluation with an append-only journal.
//!
//! # Journal format
//!
//! A journal is newline-delimited JSON. The first line is a header:
//!
//! ```text
//! {"kind":"header","format":"sctep-journal/1","tool_version":"…","case_hash":"…",
//!  "metric":"avoided_curtailment","settings_hash":"…","players":[1,2,…],
//!  "created_unix":1700000000}
//! ```
//!
//! Every later line records one finished solve:
//!
//! | field          | meaning                                              |
//! |----------------|------------------------------------------------------|
//! | `kind`         | `"value"`                                            |
//! | `coalition`    | bitmask over the header's player list                |
//! | `objective`    | objective of the solve (MW or EUR/h)                 |
//! | `status`       | solver status (`optimal`, `iteration_limit`, …)      |
//! | `iterations`   | interior-point iterations                            |
//! | `wall_time_s`  | solve time                                           |
//! | `repaired`     | true when the value replaced an earlier local optimum |
//! | `t_unix`       | completion time, seconds since the epoch             |
//!
//! A coalition may appear more than once; the last record wins. The
//! manifest (`<journal>.manifest.json`) summarizes the journal and can be
//! rebuilt from it with [`RunManifest::from_journal`].

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Coalition, Metric};
use crate::solver::SolveStatus;

pub const JOURNAL_FORMAT: &str = "sctep-journal/1";

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SCTEP_WORKERS";

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&w: &usize| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Outcome of one coalition solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub coalition: Coalition,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time_s: f64,
    #[serde(default)]
    pub repaired: bool,
    #[serde(default)]
    pub t_unix: u64,
}

impl Evaluation {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Identity of a run; stored values are reused only when it matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunKey {
    pub case_hash: String,
    pub metric: Metric,
    pub settings_hash: String,
    /// Option ids in player order.
    pub players: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        format: String,
        tool_version: String,
        #[serde(flatten)]
        key: RunKey,
        created_unix: u64,
    },
    Value(Evaluation),
}

/// Append-only journal file.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    key: RunKey,
    created_unix: u64,
}

impl Journal {
    /// Creates a fresh journal, replacing any existing file.
    pub fn create(path: impl AsRef<Path>, key: RunKey) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let created_unix = unix_now();
        let header = Line::Header {
            format: JOURNAL_FORMAT.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            key: key.clone(),
            created_unix,
        };
        writeln!(file, "{}", serde_json::to_string(&header).expect("header serializes"))
            .map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file,
            key,
            created_unix,
        })
    }

    /// Reopens an existing journal for appending. Fails when its header does
    /// not match `key`. Returns the replayed records (last record per
    /// coalition).
    pub fn resume(path: impl AsRef<Path>, key: &RunKey) -> Result<(Self, BTreeMap<Coalition, Evaluation>)> {
        let path = path.as_ref().to_path_buf();
        let replay = replay(&path)?;
        if &replay.key != key {
            let what = if replay.key.case_hash != key.case_hash {
                "case hash differs"
            } else if replay.key.metric != key.metric {
                "metric differs"
            } else if replay.key.settings_hash != key.settings_hash {
                "solver settings differ"
            } else {
                "player list differs"
            };
            return Err(Error::JournalMismatch(format!("{}: {what}", path.display())));
        }
        let mut file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let ends_clean = std::fs::read(&path)
            .map_err(|e| Error::io(&path, e))?
            .last()
            .is_none_or(|&b| b == b'\n');
        if !ends_clean {
            writeln!(file).map_err(|e| Error::io(&path, e))?;
        }
        Ok((
            Self {
                path,
                file,
                key: replay.key,
                created_unix: replay.created_unix,
            },
            replay.records,
        ))
    }

    /// Resumes `path` when it exists and `resume` is set, else starts fresh.
    pub fn open(path: impl AsRef<Path>, key: RunKey, resume: bool) -> Result<(Self, BTreeMap<Coalition, Evaluation>)> {
        if resume && path.as_ref().exists() {
            Self::resume(path, &key)
        } else {
            Ok((Self::create(path, key)?, BTreeMap::new()))
        }
    }

    pub fn append(&mut self, ev: &Evaluation) -> Result<()> {
        let line = serde_json::to_string(&Line::Value(ev.clone())).expect("record serializes");
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn key(&self) -> &RunKey {
        &self.key
    }

    pub fn manifest_path(&self) -> PathBuf {
        manifest_path(&self.path)
    }

    pub fn created_unix(&self) -> u64 {
        self.created_unix
    }
}

pub fn manifest_path(journal: &Path) -> PathBuf {
    let mut s = journal.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

struct Replay {
    key: RunKey,
    created_unix: u64,
    records: BTreeMap<Coalition, Evaluation>,
    last_unix: u64,
}

fn replay(path: &Path) -> Result<Replay> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |n: usize, m: String| Error::Parse {
        what: format!("{} line {n}", path.display()),
        message: m,
    };
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty journal".into()))?
        .map_err(|e| Error::io(path, e))?;
    let (key, created_unix) = match serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))? {
        Line::Header { format, key, created_unix, .. } => {
            if format != JOURNAL_FORMAT {
                return Err(parse_err(1, format!("unsupported format {format}")));
            }
            (key, created_unix)
        }
        Line::Value(_) => return Err(parse_err(1, "missing header".into())),
    };
    let mut records = BTreeMap::new();
    let mut last_unix = created_unix;
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line) {
            Ok(Line::Value(ev)) => {
                last_unix = last_unix.max(ev.t_unix);
                records.insert(ev.coalition, ev);
            }
            Ok(Line::Header { .. }) => return Err(parse_err(k + 2, "second header".into())),
            // A torn final line after a crash is dropped.
            Err(e) => warn!("{}: skipping unreadable line {}: {e}", path.display(), k + 2),
        }
    }
    Ok(Replay {
        key,
        created_unix,
        records,
        last_unix,
    })
}

/// Summary of a run, kept next to its journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub key: RunKey,
    /// `"exact"` or `"sampled(M, seed)"`.
    pub estimator: String,
    pub completed: Vec<Coalition>,
    pub failed: Vec<Coalition>,
    pub created_unix: u64,
    pub updated_unix: u64,
}

impl RunManifest {
    pub fn from_records(
        key: RunKey,
        estimator: String,
        records: &BTreeMap<Coalition, Evaluation>,
        created_unix: u64,
    ) -> Self {
        let (ok, bad): (Vec<_>, Vec<_>) = records.values().partition(|e| e.is_optimal());
        Self {
            key,
            estimator,
            completed: ok.iter().map(|e| e.coalition).collect(),
            failed: bad.iter().map(|e| e.coalition).collect(),
            created_unix,
            updated_unix: records.values().map(|e| e.t_unix).max().unwrap_or(created_unix).max(created_unix),
        }
    }

    /// Rebuilds the manifest by replaying a journal.
    pub fn from_journal(path: impl AsRef<Path>, estimator: String) -> Result<Self> {
        let r = replay(path.as_ref())?;
        let mut m = Self::from_records(r.key, estimator, &r.records, r.created_unix);
        m.updated_unix = r.last_unix;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Evaluates every coalition of `plan` not already present in `done`, once
/// each, on `workers` threads. `eval` runs on the workers; `sink` receives
/// results one at a time on the calling thread in completion order. Returns
/// the number of evaluations performed.
pub fn execute<E, S>(plan: &[Coalition], done: &BTreeMap<Coalition, Evaluation>, workers: usize, eval: E, mut sink: S) -> Result<usize>
where
    E: Fn(Coalition) -> Evaluation + Sync,
    S: FnMut(Evaluation) -> Result<()>,
{
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let mut todo: Vec<Coalition> = plan.iter().copied().filter(|c| !done.contains_key(c)).collect();
    todo.sort();
    todo.dedup();
    if todo.is_empty() {
        return Ok(0);
    }
    let workers = workers.min(todo.len());
    info!("evaluating {} coalitions on {workers} worker(s)", todo.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Evaluation>();
    let mut sink_result = Ok(());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, todo, eval) = (&next, &todo, &eval);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&c) = todo.get(k) else { break };
                if tx.send(eval(c)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for ev in rx {
            if sink_result.is_ok() {
                sink_result = sink(ev);
                if sink_result.is_err() {
                    // Stop handing out work; in-flight solves finish.
                    next.store(usize::MAX / 2, Ordering::Relaxed);
                }
            }
        }
    });
    sink_result.map(|_| todo.len())
}
