use proptest::prelude::*;
use sctep_core::game::{
    marginal_contribution, sample_permutations, shapley_exact, shapley_from_permutations, Coalition, Game, TableGame,
};

/// Average of prefix marginal contributions over all `n!` orderings.
fn brute_force(g: &TableGame) -> Vec<f64> {
    let n = g.n_players();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = vec![0.0; n];
    let mut count = 0usize;
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let mut visit = |p: &[usize]| {
        let mut s = Coalition::EMPTY;
        for &i in p {
            let t = s.with(i);
            total[i] += g.value(t).unwrap() - g.value(s).unwrap();
            s = t;
        }
        count += 1;
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    total.iter().map(|t| t / count as f64).collect()
}

fn glove() -> TableGame {
    TableGame::from_fn(3, |s| f64::from(u8::from(s.contains(0) && (s.contains(1) || s.contains(2)))))
}

/// Monotone game: sum of member weights plus pairwise synergies, zero at ∅.
fn monotone_game(n: usize, w: &[f64], syn: &[f64]) -> TableGame {
    TableGame::from_fn(n, |s| {
        let mut v = 0.0;
        for i in s.members() {
            v += w[i];
            for j in s.members().filter(|&j| j > i) {
                v += syn[i * n + j];
            }
        }
        v
    })
}

fn game_strategy() -> impl Strategy<Value = TableGame> {
    (1usize..=8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.0f64..100.0, n),
            prop::collection::vec(0.0f64..10.0, n * n),
        )
            .prop_map(|(n, w, syn)| monotone_game(n, &w, &syn))
    })
}

fn arbitrary_game() -> impl Strategy<Value = TableGame> {
    (1usize..=7).prop_flat_map(|n| {
        prop::collection::vec(-50.0f64..50.0, 1usize << n).prop_map(move |mut v| {
            v[0] = 0.0;
            TableGame::new(n, v).unwrap()
        })
    })
}

#[test]
fn glove_game_matches_permutation_oracle() {
    let g = glove();
    let sh = shapley_exact(&g).unwrap();
    let bf = brute_force(&g);
    for i in 0..3 {
        assert!((sh[i] - bf[i]).abs() < 1e-12);
    }
    assert!((sh[0] - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(marginal_contribution(&g, 0, Coalition::from_members([1])).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_matches_permutation_average(g in game_strategy()) {
        let sh = shapley_exact(&g).unwrap();
        let bf = brute_force(&g);
        let scale = sh.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in sh.iter().zip(&bf) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn exact_matches_oracle_on_arbitrary_games(g in arbitrary_game()) {
        let sh = shapley_exact(&g).unwrap();
        let bf = brute_force(&g);
        for (a, b) in sh.iter().zip(&bf) {
            prop_assert!((a - b).abs() <= 1e-12 * 50.0);
        }
    }

    #[test]
    fn efficiency(g in game_strategy()) {
        let n = g.n_players();
        let sh = shapley_exact(&g).unwrap();
        let vn = g.value(Coalition::grand(n)).unwrap();
        prop_assert!((sh.iter().sum::<f64>() - vn).abs() <= 1e-9 * vn.abs().max(1.0));
    }

    #[test]
    fn additive_game_pays_weights(w in prop::collection::vec(-10.0f64..10.0, 1..=8)) {
        let n = w.len();
        let g = TableGame::from_fn(n, |s| s.members().map(|i| w[i]).sum());
        let sh = shapley_exact(&g).unwrap();
        for (a, b) in sh.iter().zip(&w) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let est = shapley_from_permutations(&g, &sample_permutations(n, 3, 7));
        for ((m, se), b) in est.mean.iter().zip(&est.std_err).zip(&w) {
            prop_assert!((m - b).abs() < 1e-12);
            prop_assert!(*se < 1e-12);
        }
    }

    #[test]
    fn dummy_player_gets_exactly_zero(g in game_strategy(), k in 0usize..8) {
        // Append a player that never changes any value.
        let n = g.n_players();
        let d = k % (n + 1);
        let ext = TableGame::from_fn(n + 1, |s| {
            let mut m = 0u64;
            for i in s.members().filter(|&i| i != d) {
                m |= 1 << if i > d { i - 1 } else { i };
            }
            g.value(Coalition(m)).unwrap()
        });
        prop_assert_eq!(shapley_exact(&ext).unwrap()[d], 0.0);
    }

    #[test]
    fn symmetric_players_get_equal_values(w in prop::collection::vec(0.0f64..10.0, 2..=7), a in 0.0f64..5.0) {
        // Players 0 and 1 share weight and synergy profile.
        let n = w.len();
        let mut w = w;
        w[1] = w[0];
        let g = TableGame::from_fn(n, |s| {
            let base: f64 = s.members().map(|i| w[i]).sum();
            base + if s.contains(0) || s.contains(1) { a * s.len() as f64 } else { 0.0 }
        });
        let sh = shapley_exact(&g).unwrap();
        prop_assert_eq!(sh[0], sh[1]);
    }
}

#[test]
fn sampled_estimates_are_deterministic() {
    let g = monotone_game(6, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.5; 36]);
    let a = shapley_from_permutations(&g, &sample_permutations(6, 200, 11));
    let b = shapley_from_permutations(&g, &sample_permutations(6, 200, 11));
    assert_eq!(a, b);
}

#[test]
fn standard_error_shrinks_as_inverse_root() {
    let g = TableGame::from_fn(6, |s| {
        let k = s.len() as f64;
        k * k + if s.contains(0) { 3.0 } else { 0.0 } * k
    });
    let se = |m| shapley_from_permutations(&g, &sample_permutations(6, m, 5)).std_err;
    let (s100, s400, s1600) = (se(100), se(400), se(1600));
    for i in 0..6 {
        for (a, b) in [(s100[i], s400[i]), (s400[i], s1600[i])] {
            let ratio = a / b;
            assert!((1.0..=4.0).contains(&ratio), "player {i}: ratio {ratio}");
        }
    }
}
