//! The model document: a fixed polytope, or a parameterized family with
//! its networks, plus the coordinate map both live in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::paramnet::{MlpDoc, MlpParams};
use crate::polytope::{AffineNorm, Polytope};

pub const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub schema: u32,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// row-major `M × n`
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub norm: AffineNorm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Fixed(Polytope),
    /// The stored `(A, b)` is the family at the center of its box.
    Parameterized(MlpParams),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Fixed(p) => p.dim(),
            Model::Parameterized(net) => net.n,
        }
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            Model::Fixed(_) => 0,
            Model::Parameterized(net) => net.theta_dim,
        }
    }

    /// The polytope for `theta` (empty for fixed models).
    pub fn polytope(&self, theta: &[f64]) -> Result<Polytope> {
        match self {
            Model::Fixed(p) => {
                if !theta.is_empty() {
                    return Err(Error::Invalid("fixed model takes no theta".into()));
                }
                Ok(p.clone())
            }
            Model::Parameterized(net) => net.polytope_at(theta),
        }
    }

    pub fn to_doc(&self) -> Result<ModelDoc> {
        let (p, mlp) = match self {
            Model::Fixed(p) => (p.clone(), None),
            Model::Parameterized(net) => (net.polytope_at(&net.theta_box.center())?, Some(net.to_doc())),
        };
        Ok(ModelDoc {
            schema: MODEL_SCHEMA,
            n: p.dim(),
            m: p.rows(),
            a: p.a().as_slice().to_vec(),
            b: p.b().to_vec(),
            norm: p.norm().clone(),
            mlp,
        })
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        if doc.schema != MODEL_SCHEMA {
            return Err(Error::Parse(format!("unsupported model schema {}", doc.schema)));
        }
        if doc.b.len() != doc.m || doc.norm.dim() != doc.n {
            return Err(Error::Dimension("model b or norm length".into()));
        }
        let a = Matrix::from_row_major(doc.m, doc.n, doc.a.clone())?;
        let p = Polytope::from_unit_rows(a, doc.b.clone(), doc.norm.clone())?;
        match &doc.mlp {
            None => Ok(Model::Fixed(p)),
            Some(mlp) => Ok(Model::Parameterized(MlpParams::from_doc(
                mlp,
                doc.m,
                doc.n,
                doc.norm.clone(),
            )?)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_doc()?)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        Model::from_doc(&doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Model::from_json(&text)
    }
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io(format!("{}: {e}", path.display()))
    })
}
