//! Damping regime of `p̈ + a ṗ + b p = ε v`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::stls::LinearParams;
use crate::Error;

/// Relative tolerance for the critical boundary.
const CRITICAL_RTOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DampingCriterion {
    /// Underdamped iff `b > a²`.
    PaperAB,
    /// Underdamped iff `a² < 4b`, the textbook discriminant.
    StandardA2LessThan4B,
}

impl fmt::Display for DampingCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PaperAB => "paper-ab",
            Self::StandardA2LessThan4B => "standard",
        })
    }
}

impl FromStr for DampingCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "paper-ab" | "paperab" | "b>a2" => Ok(Self::PaperAB),
            "standard" | "a2<4b" => Ok(Self::StandardA2LessThan4B),
            _ => Err(Error::parameter(format!("unknown damping criterion {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingClass {
    pub regime: Regime,
    pub a: f64,
    pub b: f64,
    pub criterion: DampingCriterion,
}

pub fn classify_damping(params: &LinearParams, criterion: DampingCriterion) -> DampingClass {
    let (a, b) = (params.a, params.b);
    // underdamped iff lhs < rhs
    let (lhs, rhs) = match criterion {
        DampingCriterion::PaperAB => (a * a, b),
        DampingCriterion::StandardA2LessThan4B => (a * a, 4.0 * b),
    };
    let regime = if (lhs - rhs).abs() <= CRITICAL_RTOL * lhs.abs().max(rhs.abs()) {
        Regime::Critical
    } else if lhs < rhs {
        Regime::Underdamped
    } else {
        Regime::Overdamped
    };
    DampingClass { regime, a, b, criterion }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DampingCriterion::*;

    fn class(a: f64, b: f64, c: DampingCriterion) -> Regime {
        classify_damping(&LinearParams::new(a, b, 1.0).unwrap(), c).regime
    }

    #[test]
    fn examples() {
        assert_eq!(class(0.0, 1.0, PaperAB), Regime::Underdamped);
        assert_eq!(class(0.0, 1.0, StandardA2LessThan4B), Regime::Underdamped);
        assert_eq!(class(2.0, 1.0, StandardA2LessThan4B), Regime::Critical);
        assert_eq!(class(8.7, 220.0, PaperAB), Regime::Underdamped);
        assert_eq!(class(44.2, 408.0, StandardA2LessThan4B), Regime::Overdamped);
        assert_eq!(class(27.5, 455.0, PaperAB), Regime::Overdamped);
        assert_eq!(class(27.5, 455.0, StandardA2LessThan4B), Regime::Underdamped);
        assert_eq!(class(0.0, 0.0, PaperAB), Regime::Critical);
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("standard".parse::<DampingCriterion>().unwrap(), StandardA2LessThan4B);
        assert_eq!("paper-ab".parse::<DampingCriterion>().unwrap(), PaperAB);
        assert!("other".parse::<DampingCriterion>().is_err());
    }
}
