//! Trained networks on disk, in the tensor file format.

use std::path::Path;

use beamlab_core::autodiff::CTensor;
use beamlab_core::channels::ScenarioConfig;
use beamlab_core::nets::{LossWeights, NetKey, NetSpec, Network, Trained};
use beamlab_core::pilots::LmmseEstimator;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::tensorfile::TensorFile;

/// Networks, the scenario they were trained for and the last epoch run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub scenario: ScenarioConfig,
    pub trained: Trained,
    pub epoch: usize,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn from_json<T: DeserializeOwned>(file: &TensorFile, key: &str, path: &Path) -> Result<T> {
    let raw = file
        .meta
        .get(key)
        .ok_or_else(|| LabError::format("checkpoint", path, format!("missing {key}")))?;
    serde_json::from_str(raw).map_err(|e| LabError::format("checkpoint", path, format!("{key}: {e}")))
}

impl Checkpoint {
    pub fn to_file(&self) -> TensorFile {
        let mut f = TensorFile::default();
        f.meta.insert("scenario".into(), json(&self.scenario));
        f.meta.insert("spec".into(), json(&self.trained.spec));
        f.meta.insert("weights".into(), json(&self.trained.weights));
        f.meta.insert("epoch".into(), self.epoch.to_string());
        let keys: Vec<&str> = self.trained.nets.iter().map(|(k, _)| k.name()).collect();
        f.meta.insert("networks".into(), json(&keys));
        f.meta
            .insert("lmmse_cells".into(), self.trained.lmmse.len().to_string());
        for (key, net) in &self.trained.nets {
            f.push_params(&format!("{}/", key.name()), net.params());
        }
        for (j, est) in self.trained.lmmse.iter().enumerate() {
            f.meta.insert(format!("lmmse.{j}.noise"), json(&est.noise));
            for (name, m) in [("r", &est.r), ("b", &est.b), ("mean", &est.mean), ("q", &est.q)] {
                f.tensors.push(crate::tensorfile::Entry {
                    name: format!("lmmse/{j}/{name}"),
                    trainable: false,
                    value: CTensor::from_cmat(m),
                });
            }
        }
        f
    }

    pub fn from_file(f: &TensorFile, path: &Path) -> Result<Self> {
        let bad = |msg: String| LabError::format("checkpoint", path, msg);
        let scenario: ScenarioConfig = from_json(f, "scenario", path)?;
        let spec: NetSpec = from_json(f, "spec", path)?;
        let weights: LossWeights = from_json(f, "weights", path)?;
        let epoch: usize = from_json(f, "epoch", path)?;
        let keys: Vec<String> = from_json(f, "networks", path)?;
        let cells: usize = from_json(f, "lmmse_cells", path)?;
        let mut nets = Vec::with_capacity(keys.len());
        for name in keys {
            let key = NetKey::parse(&name).map_err(|e| bad(e.to_string()))?;
            let mut net = Network::new(spec.clone(), key.role(), scenario.power, 0)?;
            net.load_values(&f.params(&format!("{name}/")))?;
            nets.push((key, net));
        }
        let mut lmmse = Vec::with_capacity(cells);
        for j in 0..cells {
            let mat = |name: &str| -> Result<_> {
                let t = f
                    .get(&format!("lmmse/{j}/{name}"))
                    .ok_or_else(|| bad(format!("missing LMMSE tensor {j}/{name}")))?;
                Ok(t.to_cmat()?)
            };
            lmmse.push(LmmseEstimator {
                r: mat("r")?,
                b: mat("b")?,
                mean: mat("mean")?,
                q: mat("q")?,
                noise: from_json(f, &format!("lmmse.{j}.noise"), path)?,
            });
        }
        Ok(Checkpoint {
            scenario,
            trained: Trained {
                spec,
                weights,
                nets,
                lmmse,
            },
            epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().save(path)
    }

    /// Loads a checkpoint; a missing file is [`LabError::MissingCheckpoint`].
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(LabError::MissingCheckpoint(path.to_path_buf()));
        }
        Self::from_file(&TensorFile::load(path)?, path)
    }
}
