//! Connection classes and phase labels.
//!
//! A load's decision triple is interpreted through its connection class:
//! index 0/1/2 means AN/BN/CN for single-phase loads, AB/BC/CA for two-phase
//! (delta) loads, and "which phase the meter measures" for three-phase loads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionClass {
    Single,
    Two,
    Three,
}

impl ConnectionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectionClass::Single => "single",
            ConnectionClass::Two => "two",
            ConnectionClass::Three => "three",
        }
    }
}

impl fmt::Display for ConnectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Human-readable phase connection: a phase for wye meters, a phase pair for
/// delta meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseLabel {
    A,
    B,
    C,
    AB,
    BC,
    CA,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 6] = [
        PhaseLabel::A,
        PhaseLabel::B,
        PhaseLabel::C,
        PhaseLabel::AB,
        PhaseLabel::BC,
        PhaseLabel::CA,
    ];

    /// Builds the label for decision index `index` (0..3) of a load of class `class`.
    pub fn from_index(class: ConnectionClass, index: usize) -> PhaseLabel {
        assert!(index < 3, "phase index out of range: {index}");
        match class {
            ConnectionClass::Single | ConnectionClass::Three => {
                [PhaseLabel::A, PhaseLabel::B, PhaseLabel::C][index]
            }
            ConnectionClass::Two => [PhaseLabel::AB, PhaseLabel::BC, PhaseLabel::CA][index],
        }
    }

    pub fn index(self) -> usize {
        match self {
            PhaseLabel::A | PhaseLabel::AB => 0,
            PhaseLabel::B | PhaseLabel::BC => 1,
            PhaseLabel::C | PhaseLabel::CA => 2,
        }
    }

    pub fn is_pair(self) -> bool {
        matches!(self, PhaseLabel::AB | PhaseLabel::BC | PhaseLabel::CA)
    }

    /// Whether this label is meaningful for a load of `class`.
    pub fn fits(self, class: ConnectionClass) -> bool {
        match class {
            ConnectionClass::Two => self.is_pair(),
            _ => !self.is_pair(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::A => "A",
            PhaseLabel::B => "B",
            PhaseLabel::C => "C",
            PhaseLabel::AB => "AB",
            PhaseLabel::BC => "BC",
            PhaseLabel::CA => "CA",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(PhaseLabel::A),
            "B" => Ok(PhaseLabel::B),
            "C" => Ok(PhaseLabel::C),
            "AB" => Ok(PhaseLabel::AB),
            "BC" => Ok(PhaseLabel::BC),
            "CA" => Ok(PhaseLabel::CA),
            other => Err(Error::Schema(format!("unknown phase label `{other}`"))),
        }
    }
}
