use std::collections::HashMap;

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64;
use serde::Deserialize;

use super::{Attachment, BranchImpedance, FeederModel, LineSection, Load, ServiceBranch};
use crate::error::{Error, Result};
use crate::phase::{ConnectionClass, PhaseLabel};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Number(i64),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Text(s) => s,
            RawId::Number(n) => n.to_string(),
        }
    }
}

type RawComplex = [f64; 2];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeeder {
    base_voltage_v: f64,
    base_power_va: f64,
    nodes: Vec<RawNode>,
    lines: Vec<RawLine>,
    #[serde(default)]
    service_branches: Vec<RawBranch>,
    loads: Vec<RawLoad>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: RawId,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    #[serde(default)]
    id: Option<RawId>,
    from: RawId,
    to: RawId,
    z_ohm: [[RawComplex; 3]; 3],
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawBranchKind {
    Single,
    Two,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawBranchZ {
    Scalar(RawComplex),
    Block([[RawComplex; 2]; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    id: RawId,
    node: RawId,
    kind: RawBranchKind,
    z_ohm: RawBranchZ,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    id: RawId,
    #[serde(default)]
    node: Option<RawId>,
    #[serde(default)]
    branch: Option<RawId>,
    class: ConnectionClass,
    #[serde(default)]
    phase: Option<String>,
}

fn c(raw: RawComplex) -> Complex64 {
    Complex64::new(raw[0], raw[1])
}

/// Parses and validates a feeder JSON document, converting impedances from
/// ohms to per-unit. The first entry of `nodes` is the substation.
pub fn parse_feeder(text: &str) -> Result<FeederModel> {
    let raw: RawFeeder = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let z_base = raw.base_voltage_v * raw.base_voltage_v / raw.base_power_va;
    if !(z_base.is_finite() && z_base > 0.0) {
        return Err(Error::Schema(format!(
            "bases must be positive (base_voltage_v={}, base_power_va={})",
            raw.base_voltage_v, raw.base_power_va
        )));
    }

    let nodes: Vec<String> = raw.nodes.into_iter().map(|n| n.id.into_string()).collect();
    let mut node_index = HashMap::new();
    for (i, id) in nodes.iter().enumerate() {
        if node_index.insert(id.clone(), i).is_some() {
            return Err(Error::DuplicateId {
                kind: "node",
                id: id.clone(),
            });
        }
    }
    let lookup_node = |id: &str| node_index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.into()));

    let mut lines = Vec::with_capacity(raw.lines.len());
    for (k, line) in raw.lines.into_iter().enumerate() {
        let id = line.id.map(RawId::into_string).unwrap_or_else(|| k.to_string());
        let from = lookup_node(&line.from.into_string())?;
        let to = lookup_node(&line.to.into_string())?;
        let z = Matrix3::from_fn(|r, col| c(line.z_ohm[r][col]) / z_base);
        lines.push(LineSection { id, from, to, z });
    }

    let branch_ids: Vec<String> = raw
        .service_branches
        .iter()
        .map(|b| match &b.id {
            RawId::Text(s) => s.clone(),
            RawId::Number(n) => n.to_string(),
        })
        .collect();
    let mut service_branches = Vec::with_capacity(raw.service_branches.len());
    for (b, id) in raw.service_branches.into_iter().zip(&branch_ids) {
        let host = b.node.into_string();
        let node = match node_index.get(&host) {
            Some(&n) => n,
            None if branch_ids.contains(&host) => return Err(Error::BranchChain(id.clone())),
            None => return Err(Error::UnknownNode(host)),
        };
        let impedance = match (b.kind, b.z_ohm) {
            (RawBranchKind::Single, RawBranchZ::Scalar(z)) => BranchImpedance::Single(c(z) / z_base),
            (RawBranchKind::Two, RawBranchZ::Block(z)) => {
                BranchImpedance::Two(Matrix2::from_fn(|r, col| c(z[r][col]) / z_base))
            }
            (RawBranchKind::Single, _) => {
                return Err(Error::Schema(format!(
                    "service branch {id}: single-phase branch needs a scalar z_ohm [re, im]"
                )))
            }
            (RawBranchKind::Two, _) => {
                return Err(Error::Schema(format!(
                    "service branch {id}: two-phase branch needs a 2x2 z_ohm block"
                )))
            }
        };
        service_branches.push(ServiceBranch {
            id: id.clone(),
            node,
            impedance,
        });
    }

    let mut loads = Vec::with_capacity(raw.loads.len());
    for load in raw.loads {
        let id = load.id.into_string();
        let attachment = match (load.node, load.branch) {
            (Some(node), None) => Attachment::Node(lookup_node(&node.into_string())?),
            (None, Some(branch)) => {
                let branch = branch.into_string();
                let b = branch_ids
                    .iter()
                    .position(|x| *x == branch)
                    .ok_or(Error::UnknownBranch(branch))?;
                Attachment::Branch(b)
            }
            _ => {
                return Err(Error::InvalidLoad {
                    id,
                    reason: "exactly one of `node` or `branch` is required".into(),
                })
            }
        };
        let phase = load.phase.as_deref().map(str::parse::<PhaseLabel>).transpose()?;
        loads.push(Load {
            id,
            attachment,
            class: load.class,
            phase,
        });
    }

    let model = FeederModel {
        base_voltage_v: raw.base_voltage_v,
        base_power_va: raw.base_power_va,
        nodes,
        lines,
        service_branches,
        loads,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "base_voltage_v": 2401.8,
        "base_power_va": 333333.3,
        "nodes": [{"id": "sub"}, {"id": "n1"}],
        "lines": [{"from": "sub", "to": "n1", "z_ohm": [
            [[0.3, 0.6], [0.1, 0.2], [0.1, 0.2]],
            [[0.1, 0.2], [0.3, 0.6], [0.1, 0.2]],
            [[0.1, 0.2], [0.1, 0.2], [0.3, 0.6]]]}],
        "loads": [{"id": "L1", "node": "n1", "class": "single"}]
    }"#;

    #[test]
    fn minimal_file_parses() {
        let model = parse_feeder(MINIMAL).unwrap();
        assert_eq!(model.n(), 1);
        assert_eq!(model.m(), 1);
        let z_base = 2401.8f64 * 2401.8 / 333333.3;
        assert!((model.lines[0].z[(0, 0)].re - 0.3 / z_base).abs() < 1e-15);
    }

    #[test]
    fn unknown_node_is_reported() {
        let text = MINIMAL.replace(r#""to": "n1""#, r#""to": "n9""#);
        let err = parse_feeder(&text).unwrap_err();
        assert!(err.to_string().contains("unknown node"), "{err}");
    }

    #[test]
    fn duplicate_load_rejected() {
        let text = MINIMAL.replace(
            r#"[{"id": "L1", "node": "n1", "class": "single"}]"#,
            r#"[{"id": "L1", "node": "n1", "class": "single"}, {"id": "L1", "node": "n1", "class": "three"}]"#,
        );
        assert!(matches!(parse_feeder(&text), Err(Error::DuplicateId { kind: "load", .. })));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let text = MINIMAL.replace(r#"{"id": "n1"}]"#, r#"{"id": "n1"}, {"id": "island"}]"#);
        assert!(matches!(parse_feeder(&text), Err(Error::Disconnected(n)) if n == "island"));
    }

    #[test]
    fn nonfinite_impedance_rejected() {
        // serde_json has no NaN literal, so overflow to infinity instead
        let text = MINIMAL.replacen("[0.3, 0.6]", "[1e999, 0.6]", 1);
        let err = parse_feeder(&text).unwrap_err();
        assert!(matches!(err, Error::NonFiniteImpedance(_) | Error::Schema(_)), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = MINIMAL.replace(r#""from": "sub", "#, "");
        let err = parse_feeder(&text).unwrap_err().to_string();
        assert!(err.contains("from"), "{err}");
    }

    #[test]
    fn branch_chains_rejected() {
        let text = MINIMAL.replace(
            r#""loads""#,
            r#""service_branches": [
                {"id": "b1", "node": "n1", "kind": "single", "z_ohm": [0.1, 0.05]},
                {"id": "b2", "node": "b1", "kind": "single", "z_ohm": [0.1, 0.05]}],
            "loads""#,
        );
        assert!(matches!(parse_feeder(&text), Err(Error::BranchChain(b)) if b == "b2"));
    }

    #[test]
    fn class_must_match_branch_kind() {
        let text = MINIMAL
            .replace(
                r#""loads""#,
                r#""service_branches": [{"id": "b1", "node": "n1", "kind": "two",
                    "z_ohm": [[[0.1, 0.05], [0.02, 0.01]], [[0.02, 0.01], [0.1, 0.05]]]}],
                "loads""#,
            )
            .replace(r#""node": "n1", "class": "single""#, r#""branch": "b1", "class": "single""#);
        assert!(matches!(parse_feeder(&text), Err(Error::InvalidLoad { .. })));
    }
}
