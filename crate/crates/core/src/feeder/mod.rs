//! Feeder description: primary nodes, three-phase line sections, single- and
//! two-phase service branches, and loads.
//!
//! All quantities are stored in per-unit on the feeder's declared bases. The
//! voltage base is line-to-neutral and the power base is per phase, so the
//! impedance base is `V_base^2 / S_base`.

mod admittance;
mod parse;
mod reduction;

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64;

pub use admittance::{assemble_admittance, AdmittanceMatrix};
pub use parse::parse_feeder;
pub use reduction::{
    expand_single_phase_branch, expand_two_phase_branch, reduce_network,
    reduce_single_phase_branch, reduce_two_phase_branch, BranchReduction, ReducedLoad,
    ReducedNetwork,
};

use crate::error::{Error, Result};
use crate::phase::{ConnectionClass, PhaseLabel};

/// Three-phase series impedance of one line section, per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSection {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub z: Matrix3<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchImpedance {
    Single(Complex64),
    Two(Matrix2<Complex64>),
}

impl BranchImpedance {
    pub fn class(&self) -> ConnectionClass {
        match self {
            BranchImpedance::Single(_) => ConnectionClass::Single,
            BranchImpedance::Two(_) => ConnectionClass::Two,
        }
    }
}

/// A single- or two-phase lateral feeding exactly one load.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceBranch {
    pub id: String,
    pub node: usize,
    pub impedance: BranchImpedance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    Node(usize),
    Branch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: String,
    pub attachment: Attachment,
    pub class: ConnectionClass,
    /// Known connection, when the file carries one (used as simulation truth).
    pub phase: Option<PhaseLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub base_voltage_v: f64,
    pub base_power_va: f64,
    /// Node identifiers; index 0 is the substation.
    pub nodes: Vec<String>,
    pub lines: Vec<LineSection>,
    pub service_branches: Vec<ServiceBranch>,
    pub loads: Vec<Load>,
}

impl FeederModel {
    /// Number of non-substation primary nodes.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn m(&self) -> usize {
        self.loads.len()
    }

    pub fn impedance_base(&self) -> f64 {
        self.base_voltage_v * self.base_voltage_v / self.base_power_va
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_voltage_v.is_finite() && self.base_voltage_v > 0.0) {
            return Err(Error::NonPositive {
                what: "base_voltage_v",
                value: self.base_voltage_v,
            });
        }
        if !(self.base_power_va.is_finite() && self.base_power_va > 0.0) {
            return Err(Error::NonPositive {
                what: "base_power_va",
                value: self.base_power_va,
            });
        }
        if self.nodes.len() < 2 {
            return Err(Error::Schema(
                "at least a substation and one primary node are required".into(),
            ));
        }
        check_unique("node", self.nodes.iter())?;
        check_unique("line", self.lines.iter().map(|l| &l.id))?;
        check_unique("service branch", self.service_branches.iter().map(|b| &b.id))?;
        check_unique("load", self.loads.iter().map(|l| &l.id))?;

        let n_nodes = self.nodes.len();
        for line in &self.lines {
            if line.from >= n_nodes || line.to >= n_nodes {
                return Err(Error::UnknownNode(format!("index on line {}", line.id)));
            }
            if line.from == line.to {
                return Err(Error::Schema(format!("line {} is a self-loop", line.id)));
            }
            if line.z.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFiniteImpedance(format!("line {}", line.id)));
            }
        }
        for branch in &self.service_branches {
            if branch.node == 0 || branch.node >= n_nodes {
                return Err(Error::Schema(format!(
                    "service branch {} must hang off a non-substation primary node",
                    branch.id
                )));
            }
            let finite = match &branch.impedance {
                BranchImpedance::Single(z) => z.re.is_finite() && z.im.is_finite(),
                BranchImpedance::Two(z) => z.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            };
            if !finite {
                return Err(Error::NonFiniteImpedance(format!("service branch {}", branch.id)));
            }
        }

        let mut branch_used = vec![false; self.service_branches.len()];
        for load in &self.loads {
            let invalid = |reason: String| Error::InvalidLoad {
                id: load.id.clone(),
                reason,
            };
            match load.attachment {
                Attachment::Node(n) => {
                    if n == 0 {
                        return Err(invalid("loads cannot attach to the substation".into()));
                    }
                    if n >= n_nodes {
                        return Err(invalid(format!("node index {n} out of range")));
                    }
                }
                Attachment::Branch(b) => {
                    let branch = self
                        .service_branches
                        .get(b)
                        .ok_or_else(|| invalid(format!("branch index {b} out of range")))?;
                    if branch_used[b] {
                        return Err(invalid(format!(
                            "service branch {} already serves another load",
                            branch.id
                        )));
                    }
                    branch_used[b] = true;
                    if branch.impedance.class() != load.class {
                        return Err(invalid(format!(
                            "class `{}` does not match {}-phase branch {}",
                            load.class,
                            branch.impedance.class(),
                            branch.id
                        )));
                    }
                }
            }
            if let Some(phase) = load.phase {
                if !phase.fits(load.class) {
                    return Err(invalid(format!(
                        "phase `{phase}` is not valid for class `{}`",
                        load.class
                    )));
                }
            }
        }
        if self.loads.is_empty() {
            return Err(Error::Schema("feeder has no loads".into()));
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let n_nodes = self.nodes.len();
        let mut adjacency = vec![Vec::new(); n_nodes];
        for line in &self.lines {
            adjacency[line.from].push(line.to);
            adjacency[line.to].push(line.from);
        }
        let mut seen = vec![false; n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.nodes[i].clone())),
            None => Ok(()),
        }
    }

    /// Whether the line graph contains a cycle (a meshed primary).
    pub fn is_meshed(&self) -> bool {
        // A connected graph is a tree iff it has exactly V - 1 edges; parallel
        // lines count as a cycle.
        self.lines.len() >= self.nodes.len()
    }

    /// Removes the named service branches from the model. Their loads are
    /// attached directly to the branch's primary node.
    pub fn without_branches(&self, ids: &[String]) -> Result<FeederModel> {
        for id in ids {
            if !self.service_branches.iter().any(|b| &b.id == id) {
                return Err(Error::UnknownBranch(id.clone()));
            }
        }
        let mut kept = Vec::new();
        let mut remap = vec![None; self.service_branches.len()];
        for (i, b) in self.service_branches.iter().enumerate() {
            if !ids.contains(&b.id) {
                remap[i] = Some(kept.len());
                kept.push(b.clone());
            }
        }
        let loads = self
            .loads
            .iter()
            .map(|load| {
                let attachment = match load.attachment {
                    Attachment::Branch(b) => match remap[b] {
                        Some(nb) => Attachment::Branch(nb),
                        None => Attachment::Node(self.service_branches[b].node),
                    },
                    other => other,
                };
                Load {
                    attachment,
                    ..load.clone()
                }
            })
            .collect();
        Ok(FeederModel {
            service_branches: kept,
            loads,
            ..self.clone()
        })
    }
}

fn check_unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}
