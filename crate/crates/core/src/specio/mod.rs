//! File formats and the command-line front end.

mod cli;
mod dataset;
mod metrics;
mod nnet;
mod props;

use std::path::Path;

pub use cli::{run, run_from};
pub use dataset::Dataset;
pub use metrics::{eval_metrics, property_holds, Metrics};
pub use nnet::{nnet_to_string, parse_nnet, parse_nnet_str, write_nnet, NnetModel, Normalization};
pub use props::{parse_properties, properties_from_str, write_properties, PropertyRecord};

use crate::error::{Error, Result};
use crate::network::Network;

/// A network plus, for NNet models, the normalization that maps physical
/// inputs onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub normalization: Option<Normalization>,
}

impl Model {
    pub fn plain(network: Network) -> Self {
        Model {
            network,
            normalization: None,
        }
    }

    /// Maps a physical input into network coordinates.
    pub fn prepare_input(&self, x: &[f64]) -> Vec<f64> {
        match &self.normalization {
            Some(n) => n.normalize_input(x),
            None => x.to_vec(),
        }
    }

    pub fn prepare_dataset(&self, data: &Dataset) -> Result<Dataset> {
        Dataset::new(
            data.inputs().iter().map(|x| self.prepare_input(x).into()).collect(),
            data.labels().to_vec(),
        )
    }

    pub fn with_network(&self, network: Network) -> Self {
        Model {
            network,
            normalization: self.normalization.clone(),
        }
    }
}

impl From<NnetModel> for Model {
    fn from(m: NnetModel) -> Self {
        Model {
            network: m.network,
            normalization: Some(m.normalization),
        }
    }
}

fn is_nnet(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("nnet"))
}

/// Loads a `.nnet` file or, for any other extension, a JSON network.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    if is_nnet(path) {
        return parse_nnet(path).map(Model::from);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let network: Network = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(Model::plain(network))
}

/// Writes NNet for `.nnet` paths (which needs normalization constants) and
/// JSON otherwise.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_nnet(path) {
        let Some(norm) = &model.normalization else {
            return Err(Error::InvalidArgument(
                "writing NNet needs normalization constants; use a .json path".into(),
            ));
        };
        let m = NnetModel {
            network: model.network.clone(),
            normalization: norm.clone(),
        };
        return write_nnet(&m, path);
    }
    let text = serde_json::to_string_pretty(&model.network)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
