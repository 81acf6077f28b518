use serde::{Deserialize, Serialize};

use super::layer::{PALayer, PermSide};
use super::net::SmallNet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::patterns::{generate_mask, validate_mask, Mask, SparseLayer, StructurePattern};
use crate::permutation::{project_birkhoff, IndexMap, SoftPermutation};
use crate::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk network: weights as float64 on active positions (row-major order),
/// permutations as index arrays when hardened and row-major matrices otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layers: Vec<LayerRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub structure: MaskRecord,
    pub values: Vec<f64>,
    pub perm: PermRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(default)]
    pub side: PermSide,
}

/// Pattern descriptor plus explicit positions for families whose support the
/// descriptor does not determine (N:M, unstructured).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    #[serde(flatten)]
    pub pattern: StructurePattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermRecord {
    pub n: usize,
    pub hardened: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_map: Option<IndexMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
}

impl MaskRecord {
    pub fn from_mask(mask: &Mask) -> Self {
        let pattern = mask.descriptor().clone();
        let active = (!pattern.determines_support()).then(|| mask.positions().collect());
        Self { pattern, active }
    }

    pub fn to_mask(&self, rows: usize, cols: usize) -> Result<Mask> {
        let mask = match &self.active {
            Some(active) => Mask::from_positions(rows, cols, active.iter().copied(), self.pattern.clone())?,
            None => generate_mask(&self.pattern, rows, cols, 0)?,
        };
        if !validate_mask(&mask) {
            return Err(Error::Structure(format!("stored {} mask does not validate", self.pattern.family_name())));
        }
        Ok(mask)
    }
}

impl PermRecord {
    pub fn from_perm<T: Scalar>(p: &SoftPermutation<T>) -> Self {
        match p.index_map() {
            Some(map) => Self { n: p.n(), hardened: true, index_map: Some(map.clone()), matrix: None },
            None => Self {
                n: p.n(),
                hardened: false,
                index_map: None,
                matrix: Some(p.matrix().as_slice().iter().map(|v| v.to_f64_lossy()).collect()),
            },
        }
    }

    pub fn to_perm<T: Scalar>(&self) -> Result<SoftPermutation<T>> {
        if self.hardened {
            let map =
                self.index_map.clone().ok_or_else(|| Error::Config("hardened permutation without index_map".into()))?;
            if map.len() != self.n {
                return Err(Error::Dimension(format!("index map of length {} for n={}", map.len(), self.n)));
            }
            Ok(SoftPermutation::from_index_map(map))
        } else {
            let data = self.matrix.as_ref().ok_or_else(|| Error::Config("soft permutation without matrix".into()))?;
            let m = Matrix::from_vec(self.n, self.n, data.iter().map(|&v| T::lit(v)).collect())
                .ok_or_else(|| Error::Dimension(format!("{} matrix entries for n={}", data.len(), self.n)))?;
            // Zero iterations: keeps stored values, records their deviation.
            project_birkhoff(&m, 0, T::lit(crate::permutation::PROJECTION_TOL))
        }
    }
}

impl Checkpoint {
    pub fn from_net<T: Scalar>(net: &SmallNet<T>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                rows: l.rows(),
                cols: l.cols(),
                structure: MaskRecord::from_mask(l.weights().mask()),
                values: l.weights().values().iter().map(|v| v.to_f64_lossy()).collect(),
                perm: PermRecord::from_perm(l.perm()),
                bias: l.bias().map(|b| b.iter().map(|v| v.to_f64_lossy()).collect()),
                side: l.side(),
            })
            .collect();
        Self { version: CHECKPOINT_VERSION, layers }
    }

    pub fn to_net<T: Scalar>(&self) -> Result<SmallNet<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Version(self.version));
        }
        let layers = self
            .layers
            .iter()
            .map(|rec| {
                let mask = rec.structure.to_mask(rec.rows, rec.cols)?;
                let weights = SparseLayer::new(mask, rec.values.iter().map(|&v| T::lit(v)).collect())?;
                let bias = rec.bias.as_ref().map(|b| b.iter().map(|&v| T::lit(v)).collect());
                PALayer::new(weights, rec.perm.to_perm()?, bias, rec.side)
            })
            .collect::<Result<Vec<_>>>()?;
        SmallNet::new(layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    /// Parses and version-checks a checkpoint.
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(s)?;
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => Ok(serde_json::from_value(raw)?),
            Some(v) => Err(Error::Version(v as u32)),
            None => Err(Error::Config("checkpoint has no version field".into())),
        }
    }
}
