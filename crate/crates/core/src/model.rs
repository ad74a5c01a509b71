//! JSON model file: net centers, hyperword topics, SCORE vertices, kernel and
//! bandwidth. Floats are written with 17 significant digits.

use std::path::Path;

use nalgebra::DMatrix;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::density::{make_kernel, DensityError, DensityModel, KernelType};
use crate::net::{NetError, VoronoiNet};
use crate::tscore::TopicFit;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model version {0} is not supported")]
    VersionUnsupported(u32),
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub order: usize,
    #[serde(rename = "type")]
    pub kind: KernelType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(serialize_with = "ser_f64")]
    pub h: f64,
    pub kernel: KernelSpec,
    #[serde(serialize_with = "ser_rows")]
    pub centers: Vec<Vec<f64>>,
    #[serde(rename = "A_net", serialize_with = "ser_rows")]
    pub a_net: Vec<Vec<f64>>,
    #[serde(serialize_with = "ser_vec")]
    pub singular_values: Vec<f64>,
    #[serde(serialize_with = "ser_rows")]
    pub vertices: Vec<Vec<f64>>,
    #[serde(serialize_with = "ser_vec")]
    pub xi1: Vec<f64>,
}

fn raw(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    };
    RawValue::from_string(text).expect("valid JSON number")
}

fn ser_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    raw(*v).serialize(s)
}

fn ser_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        seq.serialize_element(&raw(x))?;
    }
    seq.end()
}

struct Row<'a>(&'a [f64]);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ser_vec(self.0, s)
    }
}

fn ser_rows<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in rows {
        seq.serialize_element(&Row(r))?;
    }
    seq.end()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>, ModelError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Inconsistent(format!("{what} rows must have {ncols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_model(model: &DensityModel) -> Self {
        let fit = &model.fit;
        let net = &fit.net;
        Self {
            version: MODEL_VERSION,
            k: fit.k(),
            d: net.dim(),
            m: net.len(),
            h: model.h(),
            kernel: KernelSpec {
                order: model.kernel().order(),
                kind: model.kernel().kind(),
            },
            centers: (0..net.len()).map(|m| net.center(m).to_vec()).collect(),
            a_net: matrix_rows(&fit.a_net),
            singular_values: fit.singular_values.clone(),
            vertices: matrix_rows(&fit.vertices),
            xi1: fit.xi1.clone(),
        }
    }

    /// Rebuilds the fit and density model. SCORE intermediates that are not
    /// stored (ratios, barycentric coordinates) come back empty.
    pub fn to_model(&self) -> Result<DensityModel, ModelError> {
        if self.version != MODEL_VERSION {
            return Err(ModelError::VersionUnsupported(self.version));
        }
        if self.centers.len() != self.m || self.a_net.len() != self.m || self.xi1.len() != self.m {
            return Err(ModelError::Inconsistent(format!("expected {} hyperwords", self.m)));
        }
        if self.k < 1 || self.vertices.len() != self.k {
            return Err(ModelError::Inconsistent(format!("expected {} vertices", self.k)));
        }
        let centers_ok = self.centers.iter().all(|c| c.len() == self.d);
        if !centers_ok {
            return Err(ModelError::Inconsistent(format!("centers must have {} entries", self.d)));
        }
        let net = VoronoiNet::new(self.d, self.centers.iter().flatten().copied().collect())?;
        let fit = TopicFit {
            a_net: rows_matrix(&self.a_net, self.k, "A_net")?,
            singular_values: self.singular_values.clone(),
            xi1: self.xi1.clone(),
            ratios: DMatrix::zeros(0, self.k - 1),
            vertices: rows_matrix(&self.vertices, self.k - 1, "vertices")?,
            vertex_rows: Vec::new(),
            pi: DMatrix::zeros(0, self.k),
            net,
        };
        Ok(DensityModel::new(fit, self.h, make_kernel(self.kernel.order)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
