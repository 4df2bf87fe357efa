//! One-dimensional marginal laws and counting laws.

mod counting;
mod marginal;

use std::fmt;

use serde::{Serialize, Serializer};

pub use counting::{Counting, ZetaLaw, MAX_COUNT};
pub use marginal::{AtomicLaw, Example11, Marginal};

/// A real number or `+inf`, used for means and limits that may diverge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    /// The value as an `f64`, with `+inf` for the infinite case.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            ExtendedReal::Finite(v)
        } else {
            ExtendedReal::Infinite
        }
    }

    pub(crate) fn map(self, f: impl FnOnce(f64) -> f64) -> Self {
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::from_f64(f(v)),
            ExtendedReal::Infinite => ExtendedReal::Infinite,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(v) => s.serialize_f64(*v),
            ExtendedReal::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Heavy-tail classes a law can be declared to belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TailClass {
    /// Long-tailed.
    L,
    /// Dominatedly varying.
    D,
    /// Subexponential.
    S,
    /// `S*`: finite mean, integrated product relation.
    SStar,
    /// Strongly subexponential (`S_*`).
    StrongSubexp,
    /// Heavy-tailed.
    HeavyK,
}

impl fmt::Display for TailClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TailClass::L => "L",
            TailClass::D => "D",
            TailClass::S => "S",
            TailClass::SStar => "S*",
            TailClass::StrongSubexp => "S_*",
            TailClass::HeavyK => "K",
        };
        f.write_str(s)
    }
}
