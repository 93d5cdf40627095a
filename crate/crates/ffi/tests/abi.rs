use std::ffi::{CStr, CString};
use std::ptr;

use sctep_ffi::*;

fn last_error() -> String {
    let p = sctep_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(sctep_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bundled_case_options_and_solve() {
    unsafe {
        let mut case = ptr::null_mut();
        assert_eq!(sctep_case_bundled(&mut case), SctepStatus::Ok);

        let mut needed = 0usize;
        let mut small = [0u32; 2];
        assert_eq!(
            sctep_case_option_ids(case, small.as_mut_ptr(), small.len(), &mut needed),
            SctepStatus::BufferTooSmall
        );
        assert_eq!(needed, 8);
        let mut ids = vec![0u32; needed];
        assert_eq!(sctep_case_option_ids(case, ids.as_mut_ptr(), ids.len(), ptr::null_mut()), SctepStatus::Ok);
        assert_eq!(ids, (1..=8).collect::<Vec<u32>>());

        let mut sol = ptr::null_mut();
        assert_eq!(
            sctep_solve(case, SctepMetric::Curtailment, ptr::null(), 0, ptr::null(), &mut sol),
            SctepStatus::Ok
        );
        let mut st = SctepSolveStatus::NumericalFailure;
        assert_eq!(sctep_solution_status(sol, &mut st), SctepStatus::Ok);
        assert_eq!(st, SctepSolveStatus::Optimal);
        let mut obj = 0.0;
        assert_eq!(sctep_solution_objective(sol, &mut obj), SctepStatus::Ok);
        assert!(obj > 1.0);
        sctep_solution_free(sol);

        let unknown = [99u32];
        assert_eq!(
            sctep_solve(case, SctepMetric::Cost, unknown.as_ptr(), 1, ptr::null(), &mut sol),
            SctepStatus::InvalidArgument
        );
        assert!(sol.is_null());
        assert!(!last_error().is_empty());

        let bad = CString::new("{\"kkt_tol\": -1}").unwrap();
        assert_eq!(
            sctep_solve(case, SctepMetric::Cost, ptr::null(), 0, bad.as_ptr(), &mut sol),
            SctepStatus::InvalidArgument
        );
        assert!(last_error().contains("kkt_tol"));
        sctep_case_free(case);
    }
}

#[test]
fn one_player_game_through_the_abi() {
    unsafe {
        let mut case = ptr::null_mut();
        assert_eq!(sctep_case_bundled(&mut case), SctepStatus::Ok);
        let players = [7u32];
        let mut g = ptr::null_mut();
        assert_eq!(
            sctep_game_run(case, SctepMetric::Curtailment, players.as_ptr(), 1, 0, 0, 1, ptr::null(), &mut g),
            SctepStatus::Ok
        );
        let mut sh = [0.0f64; 1];
        assert_eq!(sctep_game_shapley(g, sh.as_mut_ptr(), 1, ptr::null_mut()), SctepStatus::Ok);
        assert!(sh[0] > 0.0);

        let mut json = ptr::null_mut();
        assert_eq!(sctep_game_to_json(g, &mut json), SctepStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["shapley"][0].as_f64().unwrap(), sh[0]);
        sctep_string_free(json);
        sctep_game_free(g);
        sctep_case_free(case);
    }
}

#[test]
fn table_games() {
    // Glove game: player 0 holds a left glove, players 1 and 2 right gloves.
    let v = [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    let mut out = [0.0f64; 3];
    unsafe {
        assert_eq!(sctep_shapley_table(3, v.as_ptr(), v.len(), out.as_mut_ptr()), SctepStatus::Ok);
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((out[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((out[2] - 1.0 / 6.0).abs() < 1e-12);

        let mut mc = 0.0;
        assert_eq!(sctep_marginal_contribution(3, v.as_ptr(), v.len(), 0, 0b010, &mut mc), SctepStatus::Ok);
        assert_eq!(mc, 1.0);

        assert_eq!(sctep_shapley_table(3, v.as_ptr(), 7, out.as_mut_ptr()), SctepStatus::InvalidArgument);
        assert_eq!(sctep_shapley_table(0, v.as_ptr(), 1, out.as_mut_ptr()), SctepStatus::InvalidArgument);
    }
}

#[test]
fn null_and_bad_inputs_are_reported() {
    unsafe {
        assert_eq!(sctep_case_bundled(ptr::null_mut()), SctepStatus::NullPointer);
        let mut case = ptr::null_mut();
        assert_eq!(sctep_case_load(ptr::null(), &mut case), SctepStatus::NullPointer);
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/case.json").unwrap();
        assert_eq!(sctep_case_load(missing.as_ptr(), &mut case), SctepStatus::Io);
        assert!(case.is_null());

        let junk = CString::new("{not json").unwrap();
        assert_eq!(sctep_case_from_json(junk.as_ptr(), &mut case), SctepStatus::Parse);

        let mut obj = 0.0;
        assert_eq!(sctep_solution_objective(ptr::null(), &mut obj), SctepStatus::NullPointer);
        let mut sol = ptr::null_mut();
        assert_eq!(
            sctep_solve(ptr::null(), SctepMetric::Cost, ptr::null(), 0, ptr::null(), &mut sol),
            SctepStatus::NullPointer
        );

        // Freeing null handles is a no-op.
        sctep_case_free(ptr::null_mut());
        sctep_solution_free(ptr::null_mut());
        sctep_game_free(ptr::null_mut());
        sctep_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sctep.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["SctepStatus", "SctepMetric", "SctepSolveStatus", "SctepCase", "SctepGame"] {
        assert!(header.contains(ty), "{ty} missing from header");
    }
}
