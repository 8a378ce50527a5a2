//! JSON instance files:
//! `{ "points": [ids], "A": [ids], "w": [[..]], "metrics": { name: [[..]] } }`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metric::{DistMatrix, FiniteMetricSpace, MetricFamily, MetricMode, SubsetPair};

/// Largest asymmetry tolerated by the loader.
pub const LOAD_SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub points: Vec<String>,
    #[serde(rename = "A")]
    pub subset: Vec<String>,
    pub w: DistMatrix,
    pub metrics: BTreeMap<String, DistMatrix>,
}

impl InstanceFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instance serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn check_symmetric(d: &DistMatrix) -> Result<()> {
    for i in 0..d.len() {
        for j in (i + 1)..d.len() {
            let (upper, lower) = (d.get(i, j), d.get(j, i));
            if (upper - lower).abs() > LOAD_SYMMETRY_TOLERANCE {
                return Err(Error::Asymmetric { i, j, upper, lower });
            }
        }
    }
    Ok(())
}

/// A loaded, re-validated instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub pair: SubsetPair,
    pub family: MetricFamily,
    pub digest: String,
}

impl Instance {
    /// Rejects structural defects, asymmetric matrices, an ambient `w` that is
    /// not a metric, and family members of the wrong size. Family members are
    /// otherwise accepted as given.
    pub fn from_file(file: InstanceFile) -> Result<Self> {
        check_symmetric(&file.w)?;
        let digest = file.digest();
        let space = FiniteMetricSpace::new(file.points, file.w, MetricMode::Metric)?;
        let pair = SubsetPair::from_ids(space, &file.subset)?;
        for d in file.metrics.values() {
            if d.len() != pair.subset_len() {
                return Err(Error::DimensionMismatch {
                    expected: pair.subset_len(),
                    found: d.len(),
                });
            }
            check_symmetric(d)?;
        }
        Ok(Self {
            pair,
            family: file.metrics,
            digest,
        })
    }

    pub fn parse(json: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn metric(&self, name: &str) -> Result<&DistMatrix> {
        self.family
            .get(name)
            .ok_or_else(|| Error::UnknownMetric(name.to_owned()))
    }

    pub fn to_file(&self) -> InstanceFile {
        let space = self.pair.ambient();
        InstanceFile {
            points: space.points().to_vec(),
            subset: self
                .pair
                .subset()
                .iter()
                .map(|&i| space.points()[i].clone())
                .collect(),
            w: space.dist().clone(),
            metrics: self.family.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "points": ["a1", "a2", "x"],
        "A": ["a1", "a2"],
        "w": [[0, 2, 1], [2, 0, 1.5], [1, 1.5, 0]],
        "metrics": { "m": [[0, 2], [2, 0]], "z": [[0, 0], [0, 0]] }
    }"#;

    #[test]
    fn loads_and_round_trips() {
        let inst = Instance::parse(SMALL).unwrap();
        assert_eq!(inst.pair.subset(), &[0, 1]);
        assert_eq!(inst.metric("m").unwrap().get(0, 1), 2.0);
        assert!(matches!(inst.metric("nope"), Err(Error::UnknownMetric(_))));
        let again = Instance::parse(&inst.to_file().to_json()).unwrap();
        assert_eq!(again.to_file(), inst.to_file());
        assert_eq!(again.digest, inst.digest);
    }

    #[test]
    fn rejects_asymmetry_beyond_tolerance() {
        let bad = SMALL.replace("[1, 1.5, 0]", "[1, 1.5000001, 0]");
        assert!(matches!(
            Instance::parse(&bad),
            Err(Error::Asymmetric { .. })
        ));
        let tiny = SMALL.replace("[1, 1.5, 0]", "[1, 1.5000000000000004, 0]");
        assert!(Instance::parse(&tiny).is_ok());
    }

    #[test]
    fn rejects_structural_defects() {
        let ragged = SMALL.replace("[2, 0, 1.5]", "[2, 0]");
        assert!(matches!(Instance::parse(&ragged), Err(Error::Json(_))));
        let unknown = SMALL.replace(r#""A": ["a1", "a2"]"#, r#""A": ["a1", "q"]"#);
        assert!(matches!(
            Instance::parse(&unknown),
            Err(Error::UnknownPoint(_))
        ));
        let wrong_size = SMALL.replace(r#""m": [[0, 2], [2, 0]]"#, r#""m": [[0]]"#);
        assert!(matches!(
            Instance::parse(&wrong_size),
            Err(Error::DimensionMismatch { .. })
        ));
        let not_metric = SMALL.replace(
            "[[0, 2, 1], [2, 0, 1.5], [1, 1.5, 0]]",
            "[[0, 5, 1], [5, 0, 1.5], [1, 1.5, 0]]",
        );
        assert!(matches!(
            Instance::parse(&not_metric),
            Err(Error::InvalidMetric { .. })
        ));
    }
}
