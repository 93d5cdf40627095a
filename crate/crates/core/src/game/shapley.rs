//! Marginal contributions and Shapley values over a characteristic function.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coalition::Coalition;
use crate::error::{Error, Result};

/// A cooperative game: `n` players and a (possibly partial) value table.
pub trait Game {
    fn n_players(&self) -> usize;
    /// `v(S)`, or `None` when the value is not known.
    fn value(&self, s: Coalition) -> Option<f64>;
}

/// A game with every value listed, indexed by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n >= 32 || values.len() != 1usize << n {
            return Err(Error::InvalidArgument(format!(
                "a table game of {n} players needs 2^{n} values, got {}",
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, v: impl Fn(Coalition) -> f64) -> Self {
        Self {
            n,
            values: Coalition::all(n).map(v).collect(),
        }
    }
}

impl Game for TableGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn value(&self, s: Coalition) -> Option<f64> {
        self.values.get(s.0 as usize).copied()
    }
}

fn lookup(game: &impl Game, s: Coalition) -> Result<f64> {
    game.value(s).ok_or_else(|| Error::MissingCoalition(s.to_string()))
}

/// `v(S ∪ {i}) − v(S)`.
pub fn marginal_contribution(game: &impl Game, i: usize, s: Coalition) -> Result<f64> {
    if i >= game.n_players() {
        return Err(Error::InvalidArgument(format!("player {i} out of range")));
    }
    if s.contains(i) {
        return Err(Error::InvalidArgument(format!("player {i} already in {s}")));
    }
    Ok(lookup(game, s.with(i))? - lookup(game, s)?)
}

/// One marginal-contribution sample: player joins `coalition`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub coalition: Coalition,
    pub value: f64,
}

/// All `2^(n−1)` marginal contributions of player `i`, in mask order.
pub fn marginal_contributions(game: &impl Game, i: usize) -> Result<Vec<McSample>> {
    let n = game.n_players();
    Coalition::all(n)
        .filter(|s| !s.contains(i))
        .map(|s| {
            Ok(McSample {
                coalition: s,
                value: marginal_contribution(game, i, s)?,
            })
        })
        .collect()
}

/// `|S|! (n − |S| − 1)! / n!` for each coalition size `|S| = 0..n`.
pub fn shapley_weights(n: usize) -> Vec<f64> {
    // 1 / (n · C(n−1, s)), with the binomial built incrementally.
    let mut w = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        w.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    w
}

/// Shapley value from precomputed per-player samples: marginal
/// contributions are summed per coalition size in sorted order, so players
/// with identical profiles get bit-identical values and all-zero profiles
/// give exactly zero.
pub fn shapley_from_samples(n: usize, samples: &[McSample]) -> f64 {
    let w = shapley_weights(n);
    let mut by_size: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in samples {
        by_size[s.coalition.len()].push(s.value);
    }
    by_size
        .iter_mut()
        .enumerate()
        .map(|(size, v)| {
            v.sort_by(f64::total_cmp);
            w[size] * v.iter().sum::<f64>()
        })
        .sum()
}

/// Exact Shapley values; needs every one of the `2^n` values.
pub fn shapley_exact(game: &impl Game) -> Result<Vec<f64>> {
    let n = game.n_players();
    if n >= 32 {
        return Err(Error::TooManyPlayers { players: n, cap: 31 });
    }
    (0..n)
        .map(|i| Ok(shapley_from_samples(n, &marginal_contributions(game, i)?)))
        .collect()
}

/// `m` uniformly random orderings of `n` players, reproducible from `seed`.
pub fn sample_permutations(n: usize, m: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect()
}

/// Every coalition the given orderings visit (all prefixes), sorted.
pub fn permutation_coalitions(perms: &[Vec<usize>]) -> Vec<Coalition> {
    let mut set = std::collections::BTreeSet::new();
    for p in perms {
        let mut s = Coalition::EMPTY;
        set.insert(s);
        for &i in p {
            s = s.with(i);
            set.insert(s);
        }
    }
    set.into_iter().collect()
}

/// Permutation-sampling estimate of the Shapley value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledShapley {
    pub mean: Vec<f64>,
    /// Standard error of each mean (zero with fewer than two samples).
    pub std_err: Vec<f64>,
    /// Orderings whose coalitions were all available.
    pub used: usize,
    /// Orderings skipped because a coalition value was missing.
    pub skipped: usize,
    /// Marginal contributions per player, in the order drawn.
    pub samples: Vec<Vec<McSample>>,
}

/// Averages prefix marginal contributions over `perms`.
pub fn shapley_from_permutations(game: &impl Game, perms: &[Vec<usize>]) -> SampledShapley {
    let n = game.n_players();
    let mut samples: Vec<Vec<McSample>> = vec![Vec::new(); n];
    let mut skipped = 0;
    'perm: for p in perms {
        let mut s = Coalition::EMPTY;
        let mut row = Vec::with_capacity(n);
        let Some(mut prev) = game.value(s) else {
            skipped += 1;
            continue;
        };
        for &i in p {
            let t = s.with(i);
            let Some(v) = game.value(t) else {
                skipped += 1;
                continue 'perm;
            };
            row.push((i, McSample {
                coalition: s,
                value: v - prev,
            }));
            s = t;
            prev = v;
        }
        for (i, mc) in row {
            samples[i].push(mc);
        }
    }
    let used = perms.len() - skipped;
    let mut mean = vec![0.0; n];
    let mut std_err = vec![0.0; n];
    for i in 0..n {
        if used == 0 {
            mean[i] = f64::NAN;
            std_err[i] = f64::NAN;
            continue;
        }
        let m = samples[i].iter().map(|s| s.value).sum::<f64>() / used as f64;
        mean[i] = m;
        if used > 1 {
            let var = samples[i].iter().map(|s| (s.value - m).powi(2)).sum::<f64>() / (used - 1) as f64;
            std_err[i] = (var / used as f64).sqrt();
        }
    }
    SampledShapley {
        mean,
        std_err,
        used,
        skipped,
        samples,
    }
}

/// A pair `S ⊂ S ∪ {i}` whose values decrease by more than the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub coalition: Coalition,
    pub player: usize,
    pub mc: f64,
}

/// Marginal contributions below `floor · max(1, |v(S ∪ {i})|)` (floor is
/// negative), over all known adjacent pairs.
pub fn monotonicity_violations(game: &impl Game, floor: f64) -> Vec<MonotonicityViolation> {
    let n = game.n_players();
    let mut out = Vec::new();
    for s in Coalition::all(n) {
        let Some(vs) = game.value(s) else { continue };
        for i in 0..n {
            if s.contains(i) {
                continue;
            }
            let Some(vt) = game.value(s.with(i)) else { continue };
            let mc = vt - vs;
            if mc < floor * vt.abs().max(1.0) {
                out.push(MonotonicityViolation {
                    coalition: s,
                    player: i,
                    mc,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn glove() -> TableGame {
        TableGame::from_fn(3, |s| {
            if s.contains(0) && (s.contains(1) || s.contains(2)) {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn glove_game_marginals_and_values() {
        let g = glove();
        assert_eq!(marginal_contribution(&g, 0, Coalition::EMPTY).unwrap(), 0.0);
        assert_eq!(marginal_contribution(&g, 0, Coalition::from_members([1])).unwrap(), 1.0);
        let sh = shapley_exact(&g).unwrap();
        for (a, b) in sh.iter().zip([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn small_stores_and_errors() {
        let g = TableGame::new(2, vec![0.0, 2.0, 0.0, 5.0]).unwrap();
        assert_eq!(marginal_contribution(&g, 1, Coalition::from_members([0])).unwrap(), 3.0);
        assert!(marginal_contribution(&g, 1, Coalition::from_members([1])).is_err());
        assert!(TableGame::new(2, vec![0.0; 3]).is_err());
        let sym = TableGame::new(2, vec![0.0, 1.5, 1.5, 4.0]).unwrap();
        assert_eq!(shapley_exact(&sym).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn weights_sum_to_one_over_subsets() {
        for n in 1..12 {
            let w = shapley_weights(n);
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += ws * binom;
                binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn permutations_are_reproducible() {
        assert_eq!(sample_permutations(8, 5, 3), sample_permutations(8, 5, 3));
        assert_ne!(sample_permutations(8, 5, 3), sample_permutations(8, 5, 4));
        let p = permutation_coalitions(&sample_permutations(4, 3, 1));
        assert_eq!(p[0], Coalition::EMPTY);
        assert!(p.contains(&Coalition::grand(4)));
    }

    #[test]
    fn missing_values_skip_permutations() {
        struct Partial;
        impl Game for Partial {
            fn n_players(&self) -> usize {
                2
            }
            fn value(&self, s: Coalition) -> Option<f64> {
                (s != Coalition::from_members([1])).then_some(s.len() as f64)
            }
        }
        let r = shapley_from_permutations(&Partial, &[vec![0, 1], vec![1, 0]]);
        assert_eq!((r.used, r.skipped), (1, 1));
        assert_eq!(r.mean, vec![1.0, 1.0]);
        assert!(shapley_exact(&Partial).is_err());
    }

    #[test]
    fn detects_decreasing_values() {
        let g = TableGame::new(2, vec![0.0, 1.0, 0.5, 0.9998]).unwrap();
        let v = monotonicity_violations(&g, -1e-4);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].coalition, v[0].player), (Coalition::from_members([0]), 1));
        let ok = TableGame::new(2, vec![0.0, 1.0, 0.5, 0.999_95]).unwrap();
        assert!(monotonicity_violations(&ok, -1e-4).is_empty());
    }
}
