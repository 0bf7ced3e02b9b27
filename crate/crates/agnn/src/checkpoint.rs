//! Versioned JSON checkpoints. Floats are written with round-trip precision,
//! so a save/load cycle reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use agnn_core::model::{AgnnModel, Fusion, Head, Mode, ModelConfig};
use agnn_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::{file_error, Error, Result};

pub const FORMAT: &str = "agnn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeadSpec {
    NodeClassifier { classes: usize },
    GraphRegressor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub widths: Vec<usize>,
    pub fusion: String,
    pub mode: String,
    pub head: HeadSpec,
    pub dropout: f64,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &AgnnModel) -> Self {
        let c = model.config();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            widths: c.widths.clone(),
            fusion: c.fusion.name().into(),
            mode: c.mode.name().into(),
            head: match c.head {
                Head::NodeClassifier { classes } => HeadSpec::NodeClassifier { classes },
                Head::GraphRegressor => HeadSpec::GraphRegressor,
            },
            dropout: c.dropout,
            tensors: model
                .params()
                .iter()
                .map(|t| TensorRecord {
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<AgnnModel> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format `{}`",
                self.format
            )));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let config = ModelConfig {
            widths: self.widths,
            fusion: self.fusion.parse::<Fusion>()?,
            head: match self.head {
                HeadSpec::NodeClassifier { classes } => Head::NodeClassifier { classes },
                HeadSpec::GraphRegressor => Head::GraphRegressor,
            },
            mode: self.mode.parse::<Mode>()?,
            dropout: self.dropout,
        };
        let params = self
            .tensors
            .into_iter()
            .map(|t| Tensor::new(t.rows, t.cols, t.data))
            .collect::<agnn_core::Result<Vec<_>>>()?;
        Ok(AgnnModel::from_parts(config, params)?)
    }
}

pub fn to_string(model: &AgnnModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Checkpoint::from_model(
        model,
    ))?)
}

pub fn from_str(text: &str) -> Result<AgnnModel> {
    serde_json::from_str::<Checkpoint>(text)?.into_model()
}

pub fn save(path: &Path, model: &AgnnModel) -> Result<()> {
    crate::report::write_atomic(path, to_string(model)?.as_bytes())
}

pub fn load(path: &Path) -> Result<AgnnModel> {
    from_str(&fs::read_to_string(path).map_err(file_error(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for (fusion, mode) in [
            (Fusion::Sum, Mode::Directed),
            (Fusion::Concat, Mode::UndirectedTied),
            (Fusion::Max, Mode::Directed),
        ] {
            let config = ModelConfig {
                widths: vec![5, 7, 3],
                fusion,
                head: Head::NodeClassifier { classes: 3 },
                mode,
                dropout: 0.5,
            };
            let model = AgnnModel::init(config, 42).unwrap();
            let back = from_str(&to_string(&model).unwrap()).unwrap();
            assert_eq!(back.config(), model.config());
            for (a, b) in model.params().iter().zip(back.params()) {
                let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b));
            }
        }
    }

    #[test]
    fn rejects_foreign_or_damaged_files() {
        let model = AgnnModel::init(
            ModelConfig {
                widths: vec![2, 2],
                fusion: Fusion::Sum,
                head: Head::GraphRegressor,
                mode: Mode::Directed,
                dropout: 0.0,
            },
            1,
        )
        .unwrap();
        let mut ck = Checkpoint::from_model(&model);
        ck.version = 99;
        assert!(matches!(ck.clone().into_model(), Err(Error::Checkpoint(_))));
        ck.version = VERSION;
        ck.tensors.pop();
        assert!(ck.into_model().is_err());
        assert!(from_str("{").is_err());
    }
}
