use serde::{Deserialize, Serialize};

/// Most players a [`Coalition`] bitmask can hold.
pub const MAX_PLAYERS: usize = 64;

/// A set of players, bit `i` standing for player `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(pub u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    /// All of `n` players.
    pub fn grand(n: usize) -> Self {
        assert!(n <= MAX_PLAYERS, "at most {MAX_PLAYERS} players");
        if n == MAX_PLAYERS {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Self {
        Coalition(members.into_iter().fold(0, |m, i| m | 1u64 << i))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        Coalition(self.0 | 1u64 << i)
    }

    pub fn without(self, i: usize) -> Self {
        Coalition(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// Member indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                return None;
            }
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        })
    }

    /// True when no bit at or above `n` is set.
    pub fn fits(self, n: usize) -> bool {
        self.is_subset_of(Coalition::grand(n))
    }

    /// Every coalition of `n` players, in mask order.
    pub fn all(n: usize) -> impl Iterator<Item = Coalition> {
        assert!(n < MAX_PLAYERS, "enumeration needs fewer than {MAX_PLAYERS} players");
        (0..1u64 << n).map(Coalition)
    }
}

impl std::fmt::Display for Coalition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_operations() {
        let c = Coalition::from_members([0, 3, 5]);
        assert_eq!(c.0, 0b101001);
        assert!(c.contains(3) && !c.contains(1));
        assert_eq!(c.with(1).len(), 4);
        assert_eq!(c.without(3).members().collect::<Vec<_>>(), vec![0, 5]);
        assert!(c.without(0).is_subset_of(c));
        assert!(!c.fits(5) && c.fits(6));
        assert_eq!(c.to_string(), "{0,3,5}");
        assert_eq!(Coalition::grand(64).len(), 64);
        assert_eq!(Coalition::all(3).count(), 8);
    }
}
