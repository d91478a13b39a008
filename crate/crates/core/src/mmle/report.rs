use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LoadSolution;
use crate::error::{Error, Result};
use crate::phase::{ConnectionClass, PhaseLabel};
use crate::stats::{accuracy, ResidualSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TargetOnly,
    Voting,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::TargetOnly => "target-only",
            Method::Voting => "voting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticsLevel {
    #[default]
    None,
    Summary,
    Full,
}

impl FromStr for DiagnosticsLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "summary" => Ok(Self::Summary),
            "full" => Ok(Self::Full),
            other => Err(Error::Schema(format!("unknown diagnostics level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub load: String,
    pub class: ConnectionClass,
    pub phase: PhaseLabel,
    /// Solutions placing this load on option 0, 1, 2.
    pub votes: [usize; 3],
    pub f_m: f64,
    pub target_only: PhaseLabel,
    pub voting: PhaseLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub subproblems: usize,
    pub total_iterations: usize,
    pub max_kkt_residual: f64,
    pub degenerate: usize,
}

impl SolverSummary {
    pub fn from_solutions(sols: &[LoadSolution]) -> Self {
        let cands = sols.iter().flat_map(|s| &s.candidates);
        let mut out = Self {
            subproblems: 0,
            total_iterations: 0,
            max_kkt_residual: 0.0,
            degenerate: 0,
        };
        for c in cands {
            out.subproblems += 1;
            out.total_iterations += c.relaxed.iterations;
            out.max_kkt_residual = out.max_kkt_residual.max(c.relaxed.kkt_residual);
            out.degenerate += usize::from(c.relaxed.degenerate);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemReport {
    pub load: String,
    pub phase: usize,
    pub relaxed_objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub degenerate: bool,
    pub f_m: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub method: Method,
    pub assignments: Vec<LoadReport>,
    pub sum_f_target_only: f64,
    pub sum_f_voting: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_diagnostics: Option<Vec<ResidualSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subproblems: Option<Vec<SubproblemReport>>,
}

impl IdentificationReport {
    pub fn labels(&self) -> BTreeMap<String, PhaseLabel> {
        self.assignments.iter().map(|a| (a.load.clone(), a.phase)).collect()
    }

    pub fn sum_f(&self) -> f64 {
        match self.method {
            Method::TargetOnly => self.sum_f_target_only,
            Method::Voting => self.sum_f_voting,
        }
    }

    /// Scores the final assignment and stores the result.
    pub fn score(&mut self, truth: &BTreeMap<String, PhaseLabel>) -> Result<f64> {
        let acc = accuracy(&self.labels(), truth)?;
        self.accuracy = Some(acc);
        Ok(acc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
