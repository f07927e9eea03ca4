//! Pulse arithmetic: levels and the `prev` checkpoint map.

use std::fmt;

use crate::error::{Error, Result};

pub type Pulse = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Finite(u32),
    Infinity,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Finite(l) => write!(f, "{l}"),
            Level::Infinity => f.write_str("inf"),
        }
    }
}

/// Exponent of the largest power of two dividing `p`.
pub fn level(p: Pulse) -> Level {
    if p == 0 {
        Level::Infinity
    } else {
        Level::Finite(p.trailing_zeros())
    }
}

/// Finite level of a positive pulse.
pub(crate) fn lvl(p: Pulse) -> u32 {
    debug_assert!(p > 0);
    p.trailing_zeros()
}

/// Largest pulse `q ≤ p − 2^level(p)` whose level is `level(p) + 1`, or 0 when none exists.
pub fn prev(p: Pulse) -> Pulse {
    if p == 0 {
        return 0;
    }
    let l = lvl(p);
    let q = p - (1 << l);
    if q == 0 {
        0
    } else if lvl(q) == l + 1 {
        q
    } else {
        q - (1 << (l + 1))
    }
}

pub fn prev2(p: Pulse) -> Pulse {
    prev(prev(p))
}

pub fn registration_radius(p: Pulse) -> Result<u64> {
    if p == 0 {
        return Err(Error::PulseZero);
    }
    Ok(1u64 << (lvl(p) + 5))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumeration oracle straight from the definition.
    pub(crate) fn prev_brute(p: Pulse) -> Pulse {
        if p == 0 {
            return 0;
        }
        let l = p.trailing_zeros();
        (1..=p - (1 << l)).rev().find(|&q| q.trailing_zeros() == l + 1).unwrap_or(0)
    }

    #[test]
    fn level_examples() {
        assert_eq!(level(0), Level::Infinity);
        assert_eq!(level(1), Level::Finite(0));
        assert_eq!(level(12), Level::Finite(2));
        assert!(Level::Finite(31) < Level::Infinity);
    }

    #[test]
    fn prev_examples() {
        assert_eq!(prev(0), 0);
        assert_eq!(prev(6), 4);
        assert_eq!(prev(1), 0);
        assert_eq!(prev(5), 2);
    }

    #[test]
    fn radius_examples() {
        assert_eq!(registration_radius(1).unwrap(), 32);
        assert_eq!(registration_radius(4).unwrap(), 128);
        assert_eq!(registration_radius(6).unwrap(), 64);
        assert!(matches!(registration_radius(0), Err(Error::PulseZero)));
    }

    #[test]
    fn closed_form_matches_enumeration_small() {
        for p in 0..=4096 {
            assert_eq!(prev(p), prev_brute(p), "p={p}");
        }
    }

    proptest! {
        #[test]
        fn prev_is_strictly_coarser_and_close(p in 1u32..1 << 20) {
            let q = prev(p);
            let l = lvl(p);
            prop_assert!(q < p);
            prop_assert!(q == 0 || lvl(q) == l + 1);
            prop_assert!(p - q <= 3 << l);
            prop_assert!(p - prev2(p) <= 9 << l);
        }
    }
}
