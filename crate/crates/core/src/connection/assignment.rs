use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{ConnectionClass, PhaseLabel};

/// One-hot phase decision per load, stored compactly as the index of the
/// hot entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseAssignment {
    ids: Vec<String>,
    classes: Vec<ConnectionClass>,
    phases: Vec<u8>,
}

impl PhaseAssignment {
    pub fn new(ids: Vec<String>, classes: Vec<ConnectionClass>, phases: Vec<usize>) -> Result<Self> {
        if ids.len() != classes.len() || classes.len() != phases.len() {
            return Err(Error::Dimension(format!(
                "{} ids, {} classes, {} phases",
                ids.len(),
                classes.len(),
                phases.len()
            )));
        }
        if let Some(p) = phases.iter().find(|&&p| p > 2) {
            return Err(Error::Dimension(format!("phase index {p} out of range")));
        }
        Ok(Self {
            ids,
            classes,
            phases: phases.into_iter().map(|p| p as u8).collect(),
        })
    }

    /// Every load on phase index 0.
    pub fn uniform(ids: Vec<String>, classes: Vec<ConnectionClass>) -> Self {
        let phases = vec![0; classes.len()];
        Self { ids, classes, phases }
    }

    pub fn from_labels(ids: Vec<String>, classes: Vec<ConnectionClass>, labels: &[PhaseLabel]) -> Result<Self> {
        if labels.len() != classes.len() {
            return Err(Error::Dimension(format!("{} labels for {} loads", labels.len(), classes.len())));
        }
        for ((id, class), label) in ids.iter().zip(&classes).zip(labels) {
            if !label.fits(*class) {
                return Err(Error::InvalidLoad {
                    id: id.clone(),
                    reason: format!("label {label} does not fit class {class}"),
                });
            }
        }
        Self::new(ids, classes, labels.iter().map(|l| l.index()).collect())
    }

    /// Builds from a flat 0/1 decision vector of length 3M.
    pub fn from_vector(ids: Vec<String>, classes: Vec<ConnectionClass>, x: &[f64]) -> Result<Self> {
        if x.len() != 3 * classes.len() {
            return Err(Error::Dimension(format!("decision vector of length {}", x.len())));
        }
        let mut phases = Vec::with_capacity(classes.len());
        for (m, triple) in x.chunks(3).enumerate() {
            let ones: Vec<usize> = (0..3).filter(|&i| triple[i] == 1.0).collect();
            if ones.len() != 1 || triple.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Dimension(format!("triple {m} is not one-hot: {triple:?}")));
            }
            phases.push(ones[0]);
        }
        Self::new(ids, classes, phases)
    }

    pub fn m(&self) -> usize {
        self.phases.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn classes(&self) -> &[ConnectionClass] {
        &self.classes
    }

    pub fn phase(&self, m: usize) -> usize {
        self.phases[m] as usize
    }

    pub fn phases(&self) -> impl Iterator<Item = usize> + '_ {
        self.phases.iter().map(|&p| p as usize)
    }

    pub fn class(&self, m: usize) -> ConnectionClass {
        self.classes[m]
    }

    pub fn label(&self, m: usize) -> PhaseLabel {
        PhaseLabel::from_index(self.classes[m], self.phase(m))
    }

    pub fn triple(&self, m: usize) -> [f64; 3] {
        let mut t = [0.0; 3];
        t[self.phase(m)] = 1.0;
        t
    }

    /// Flat decision vector `[x_1^1, x_1^2, x_1^3, ..., x_M^3]`.
    pub fn to_vector(&self) -> Vec<f64> {
        (0..self.m()).flat_map(|m| self.triple(m)).collect()
    }

    pub fn set_phase(&mut self, m: usize, phase: usize) {
        assert!(phase < 3);
        self.phases[m] = phase as u8;
    }

    pub fn with_phase(&self, m: usize, phase: usize) -> Self {
        let mut out = self.clone();
        out.set_phase(m, phase);
        out
    }

    /// Loads whose decision differs, ignoring three-phase loads when
    /// `ignore_three_phase` is set.
    pub fn differences(&self, other: &PhaseAssignment, ignore_three_phase: bool) -> Vec<usize> {
        (0..self.m().min(other.m()))
            .filter(|&m| self.phases[m] != other.phases[m])
            .filter(|&m| !(ignore_three_phase && self.classes[m] == ConnectionClass::Three))
            .collect()
    }

    /// Decodes the `code`-th assignment in lexicographic order, first load
    /// most significant. Valid for `code < 3^M`.
    pub fn from_code(ids: Vec<String>, classes: Vec<ConnectionClass>, mut code: u64) -> Self {
        let m = classes.len();
        let mut phases = vec![0u8; m];
        for k in (0..m).rev() {
            phases[k] = (code % 3) as u8;
            code /= 3;
        }
        Self { ids, classes, phases }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    #[test]
    fn vector_round_trip() {
        let classes = vec![ConnectionClass::Single, ConnectionClass::Two, ConnectionClass::Three];
        let a = PhaseAssignment::new(ids(3), classes.clone(), vec![2, 0, 1]).unwrap();
        let x = a.to_vector();
        assert_eq!(x, vec![0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(PhaseAssignment::from_vector(ids(3), classes, &x).unwrap(), a);
        assert_eq!(a.label(1), PhaseLabel::AB);
    }

    #[test]
    fn rejects_non_one_hot() {
        let classes = vec![ConnectionClass::Single];
        assert!(PhaseAssignment::from_vector(ids(1), classes.clone(), &[1., 1., 0.]).is_err());
        assert!(PhaseAssignment::from_vector(ids(1), classes, &[0.5, 0.5, 0.]).is_err());
    }

    #[test]
    fn codes_enumerate_lexicographically() {
        let classes = vec![ConnectionClass::Single; 2];
        let a = PhaseAssignment::from_code(ids(2), classes, 5);
        assert_eq!(a.phases().collect::<Vec<_>>(), vec![1, 2]);
    }
}
