//! C ABI over `sctep_core`.
//!
//! Every fallible call returns an [`SctepStatus`]; on failure the message is
//! available from [`sctep_last_error`] until the next call on the same
//! thread. Objects are opaque handles released with their `_free` function.
//! Strings returned by the library are freed with [`sctep_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sctep_core::formulation::build_nlp;
use sctep_core::game::{self, Coalition, GameOptions, GameResult, Metric, TableGame};
use sctep_core::network::{self, NetworkCase};
use sctep_core::solver::{self, SolveResult, SolveStatus, SolverSettings};
use sctep_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SctepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    InvalidArgument = 6,
    Solver = 7,
    Game = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Objective of a solve or metric of a game.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SctepMetric {
    /// Load curtailment; game values are avoided curtailment, MW.
    Curtailment = 0,
    /// Expected cost; game values are cost reductions, EUR/h.
    Cost = 1,
}

impl From<SctepMetric> for Metric {
    fn from(m: SctepMetric) -> Self {
        match m {
            SctepMetric::Curtailment => Metric::AvoidedCurtailment,
            SctepMetric::Cost => Metric::ExpectedCostReduction,
        }
    }
}

/// Solver outcome as an integer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SctepSolveStatus {
    Optimal = 0,
    IterationLimit = 1,
    Infeasible = 2,
    NumericalFailure = 3,
}

impl From<SolveStatus> for SctepSolveStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => SctepSolveStatus::Optimal,
            SolveStatus::IterationLimit => SctepSolveStatus::IterationLimit,
            SolveStatus::Infeasible => SctepSolveStatus::Infeasible,
            SolveStatus::NumericalFailure => SctepSolveStatus::NumericalFailure,
        }
    }
}

/// A validated planning case.
pub struct SctepCase(NetworkCase);

/// Result of one planning solve.
pub struct SctepSolution(SolveResult);

/// Result of a game evaluation.
pub struct SctepGame(GameResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> SctepStatus {
    match e {
        Error::Io { .. } => SctepStatus::Io,
        Error::Parse { .. } => SctepStatus::Parse,
        Error::Validation(_) => SctepStatus::Validation,
        Error::UnknownOption(_) | Error::InvalidArgument(_) | Error::LayoutMismatch { .. } => {
            SctepStatus::InvalidArgument
        }
        Error::Solver(_) => SctepStatus::Solver,
        _ => SctepStatus::Game,
    }
}

struct Fail(SctepStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SctepStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SctepStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SctepStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SctepStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SctepStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn settings_arg(p: *const c_char) -> Result<SolverSettings, Fail> {
    let s = if p.is_null() {
        SolverSettings::default()
    } else {
        let text = str_arg(p, "settings")?;
        serde_json::from_str(text).map_err(|e| Fail(SctepStatus::Parse, format!("settings: {e}")))?
    };
    s.validate()?;
    Ok(s)
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies `src` into the caller's buffer, reporting the needed length.
unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize, needed: *mut usize) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = src.len();
    }
    if len < src.len() {
        return Err(Fail(
            SctepStatus::BufferTooSmall,
            format!("buffer holds {len}, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sctep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn sctep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by the library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sctep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a case JSON file.
#[no_mangle]
pub unsafe extern "C" fn sctep_case_load(path: *const c_char, out: *mut *mut SctepCase) -> SctepStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let case = network::load_case(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SctepCase(case)));
        Ok(())
    })
}

/// Parses and validates a case from JSON text.
#[no_mangle]
pub unsafe extern "C" fn sctep_case_from_json(json: *const c_char, out: *mut *mut SctepCase) -> SctepStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let case = network::ensure_valid(network::parse_case(str_arg(json, "json")?)?)?;
        *out = Box::into_raw(Box::new(SctepCase(case)));
        Ok(())
    })
}

/// The bundled five-bus case.
#[no_mangle]
pub unsafe extern "C" fn sctep_case_bundled(out: *mut *mut SctepCase) -> SctepStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(SctepCase(network::case5())));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sctep_case_free(case: *mut SctepCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Investment option ids in catalogue order. `needed` (nullable) receives
/// the count even when `len` is too small.
#[no_mangle]
pub unsafe extern "C" fn sctep_case_option_ids(
    case: *const SctepCase,
    buf: *mut u32,
    len: usize,
    needed: *mut usize,
) -> SctepStatus {
    guard(|| {
        let case = case.as_ref().ok_or_else(|| null("case"))?;
        copy_out(&case.0.option_ids(), buf, len, needed)
    })
}

/// Solves from the flat start with the options in `enabled` available.
/// `settings_json` may be null for defaults. A non-optimal solve still
/// returns `Ok`; query [`sctep_solution_status`].
#[no_mangle]
pub unsafe extern "C" fn sctep_solve(
    case: *const SctepCase,
    objective: SctepMetric,
    enabled: *const u32,
    n_enabled: usize,
    settings_json: *const c_char,
    out: *mut *mut SctepSolution,
) -> SctepStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let case = case.as_ref().ok_or_else(|| null("case"))?;
        let ids = slice_arg(enabled, n_enabled, "enabled")?;
        let settings = settings_arg(settings_json)?;
        let problem = build_nlp(&case.0, ids, Metric::from(objective).objective_kind())?;
        *out = Box::into_raw(Box::new(SctepSolution(solver::solve(&problem, &settings))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sctep_solution_status(sol: *const SctepSolution, out: *mut SctepSolveStatus) -> SctepStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(|| null("solution"))?;
        *out_arg(out, "out")? = sol.0.status.into();
        Ok(())
    })
}

/// Objective in MW (curtailment) or EUR/h (cost).
#[no_mangle]
pub unsafe extern "C" fn sctep_solution_objective(sol: *const SctepSolution, out: *mut f64) -> SctepStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(|| null("solution"))?;
        *out_arg(out, "out")? = sol.0.objective;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sctep_solution_free(sol: *mut SctepSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Evaluates the game over `players` (option ids). `samples == 0` runs the
/// exact game; otherwise Shapley values are estimated from `samples`
/// orderings drawn with `seed`. `workers == 0` uses the default count.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sctep_game_run(
    case: *const SctepCase,
    metric: SctepMetric,
    players: *const u32,
    n_players: usize,
    samples: usize,
    seed: u64,
    workers: usize,
    settings_json: *const c_char,
    out: *mut *mut SctepGame,
) -> SctepStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let case = case.as_ref().ok_or_else(|| null("case"))?;
        let players = slice_arg(players, n_players, "players")?;
        let settings = settings_arg(settings_json)?;
        let mut opts = GameOptions::default();
        if workers > 0 {
            opts.workers = workers;
        }
        let m = Metric::from(metric);
        let r = if samples == 0 {
            game::run_full_game(&case.0, players, m, &settings, &opts)?
        } else {
            game::shapley_sampled(&case.0, players, m, samples, seed, &settings, &opts)?
        };
        *out = Box::into_raw(Box::new(SctepGame(r)));
        Ok(())
    })
}

/// Shapley values in player order.
#[no_mangle]
pub unsafe extern "C" fn sctep_game_shapley(
    g: *const SctepGame,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> SctepStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("game"))?;
        copy_out(&g.0.shapley, buf, len, needed)
    })
}

/// The game result as JSON; free with [`sctep_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sctep_game_to_json(g: *const SctepGame, out: *mut *mut c_char) -> SctepStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = g.as_ref().ok_or_else(|| null("game"))?;
        *out = into_c_string(serde_json::to_string(&g.0).expect("game serializes"));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sctep_game_free(g: *mut SctepGame) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Exact Shapley values of an `n`-player game given as `2^n` values indexed
/// by coalition bitmask. Writes `n` values to `out`.
#[no_mangle]
pub unsafe extern "C" fn sctep_shapley_table(n: usize, values: *const f64, n_values: usize, out: *mut f64) -> SctepStatus {
    guard(|| {
        if n == 0 || n > 24 {
            return Err(Fail(SctepStatus::InvalidArgument, format!("{n} players; 1 to 24 supported")));
        }
        let v = slice_arg(values, n_values, "values")?;
        let g = TableGame::new(n, v.to_vec())?;
        let sh = game::shapley_exact(&g)?;
        copy_out(&sh, out, n, ptr::null_mut())
    })
}

/// Marginal contribution `v(S ∪ {i}) − v(S)` in a table game.
#[no_mangle]
pub unsafe extern "C" fn sctep_marginal_contribution(
    n: usize,
    values: *const f64,
    n_values: usize,
    player: usize,
    coalition: u64,
    out: *mut f64,
) -> SctepStatus {
    guard(|| {
        let v = slice_arg(values, n_values, "values")?;
        let g = TableGame::new(n, v.to_vec())?;
        *out_arg(out, "out")? = game::marginal_contribution(&g, player, Coalition(coalition))?;
        Ok(())
    })
}
