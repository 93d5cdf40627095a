use sctep_core::game::{
    characteristic_value, run_full_game, screen_options, shapley_sampled, Coalition, Evaluator, Game, GameOptions,
    Metric,
};
use sctep_core::network::case5;
use sctep_core::runner::RunManifest;
use sctep_core::solver::SolverSettings;

fn opts(workers: usize) -> GameOptions {
    GameOptions {
        workers,
        ..GameOptions::default()
    }
}

#[test]
fn empty_coalition_is_zero_and_dead_line_adds_nothing() {
    let case = case5();
    let s = SolverSettings::default();
    let ids = case.option_ids();
    let empty = characteristic_value(&case, &ids, Coalition::EMPTY, Metric::AvoidedCurtailment, &s).unwrap();
    assert_eq!(empty.value, Some(0.0));
    // Option 5 reinforces line 3-4.
    let k = ids.iter().position(|&i| i == 5).unwrap();
    let l34 = characteristic_value(&case, &ids, Coalition::EMPTY.with(k), Metric::AvoidedCurtailment, &s).unwrap();
    assert!(l34.value.unwrap().abs() < 1e-3, "{:?}", l34.value);
}

#[test]
fn screening_values_are_reused_by_the_game() {
    let case = case5();
    let s = SolverSettings::default();
    let scr = screen_options(&case, Metric::AvoidedCurtailment, &s, &opts(1)).unwrap();
    assert_eq!(scr.entries.len(), 8);
    for w in scr.entries.windows(2) {
        let (a, b) = (w[0].value.unwrap(), w[1].value.unwrap());
        assert!(a >= b - 1e-6 * a.abs().max(1.0));
        if w[0].tied && w[1].tied && (a - b).abs() < 1e-6 {
            assert!(w[0].option < w[1].option);
        }
    }
    // The zero-value lines are tied at the bottom.
    let bottom: Vec<u32> = scr.entries[5..].iter().map(|e| e.option).collect();
    assert_eq!(bottom, vec![1, 5, 6]);
    assert!(scr.entries[5..].iter().all(|e| e.tied));

    let kept = scr.top(2);
    let g = run_full_game(&case, &kept, Metric::AvoidedCurtailment, &s, &opts(1)).unwrap();
    for (i, id) in kept.iter().enumerate() {
        let e = scr.entries.iter().find(|e| e.option == *id).unwrap();
        assert_eq!(g.individual[i], e.value);
    }
    assert_eq!(g.values.len(), 4);
    assert_eq!(g.mc_samples[0].len(), 2);
}

#[test]
fn one_player_game_pays_its_value() {
    let case = case5();
    let s = SolverSettings::default();
    let g = run_full_game(&case, &[7], Metric::AvoidedCurtailment, &s, &opts(1)).unwrap();
    assert_eq!(g.shapley[0], g.individual[0].unwrap());
    assert!(g.shapley[0] > 0.0);
}

#[test]
fn worker_count_does_not_change_the_result() {
    let case = case5();
    let s = SolverSettings::default();
    let a = run_full_game(&case, &[2, 7], Metric::ExpectedCostReduction, &s, &opts(1)).unwrap();
    let b = run_full_game(&case, &[2, 7], Metric::ExpectedCostReduction, &s, &opts(3)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn journal_resume_skips_finished_coalitions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.journal");
    let case = case5();
    let s = SolverSettings::default();
    let o = GameOptions {
        workers: 1,
        journal: Some(path.clone()),
        resume: true,
        ..GameOptions::default()
    };
    let players = [3, 4, 8];
    let all: Vec<Coalition> = Coalition::all(3).collect();
    {
        let mut ev = Evaluator::new(&case, &players, Metric::AvoidedCurtailment, &s, &o).unwrap();
        assert_eq!(ev.ensure(&all[..5]).unwrap(), 5);
    }
    let mut ev = Evaluator::new(&case, &players, Metric::AvoidedCurtailment, &s, &o).unwrap();
    assert_eq!(ev.ensure(&all).unwrap(), 3);
    assert_eq!(ev.ensure(&all).unwrap(), 0);
    let m = RunManifest::load(path.with_extension("journal.manifest.json")).unwrap();
    assert_eq!(m.completed.len(), 8);
    let replayed = RunManifest::from_journal(&path, "exact".into()).unwrap();
    assert_eq!(replayed.completed, m.completed);

    // A different metric must not reuse the journal.
    let err = Evaluator::new(&case, &players, Metric::ExpectedCostReduction, &s, &o);
    assert!(err.is_err());

    // Sampling over the finished store needs no new solves.
    let r = shapley_sampled(&case, &players, Metric::AvoidedCurtailment, 40, 3, &s, &o).unwrap();
    let exact = sctep_core::game::shapley_exact(&ev).unwrap();
    assert_eq!(r.values.len(), 8);
    assert!((r.shapley.iter().sum::<f64>() - ev.value(Coalition::grand(3)).unwrap()).abs() < 1e-6);
    assert!(exact.iter().sum::<f64>() > 0.0);
}

#[test]
fn too_many_players_is_refused() {
    let case = case5();
    let o = GameOptions {
        player_cap: 3,
        ..opts(1)
    };
    let err = run_full_game(&case, &case.option_ids(), Metric::AvoidedCurtailment, &SolverSettings::default(), &o);
    assert!(matches!(err, Err(sctep_core::Error::TooManyPlayers { players: 8, cap: 3 })));
}
