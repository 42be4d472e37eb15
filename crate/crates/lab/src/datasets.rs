//! Dataset generation and the on-disk dataset directory.
//!
//! A dataset directory holds `manifest.json` (scenario config, seed, count,
//! config hash and a tensor index) next to one raw little-endian `f64` blob
//! per tensor. Complex tensors store interleaved real/imaginary pairs.

use std::path::{Path, PathBuf};

use beamlab_core::channels::{generate_sample, Dataset, Labels, MappingState, Sample, ScenarioConfig};
use beamlab_core::solvers::default_labels;
use beamlab_core::{CMat, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "beamlab-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorIndex {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub complex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: ScenarioConfig,
    pub seed: u64,
    /// Index of the first sample; the rest follow consecutively.
    pub first_index: usize,
    pub count: usize,
    pub labeled: bool,
    pub config_hash: String,
    pub tensors: Vec<TensorIndex>,
}

/// SHA-256 of the canonical JSON of everything that determines a dataset.
pub fn config_hash(cfg: &ScenarioConfig, first_index: usize, count: usize, labeled: bool) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        config: &'a ScenarioConfig,
        first_index: usize,
        count: usize,
        labeled: bool,
    }
    let bytes = serde_json::to_vec(&Key {
        config: cfg,
        first_index,
        count,
        labeled,
    })
    .expect("plain data serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Generates `count` samples in parallel. Every sample draws from its own
/// RNG stream, so the result equals the sequential builder for any thread
/// count. Solver failures name the sample.
pub fn generate(cfg: &ScenarioConfig, count: usize, labeled: bool) -> Result<Dataset> {
    generate_range(cfg, 0, count, labeled)
}

/// Like [`generate`] for samples `first_index..first_index + count`. Test
/// sets use a range after the training samples so that both share the
/// scenario's mapping state.
pub fn generate_range(cfg: &ScenarioConfig, first_index: usize, count: usize, labeled: bool) -> Result<Dataset> {
    cfg.validate()?;
    let mapping = MappingState::draw(cfg);
    let samples = (first_index..first_index + count)
        .into_par_iter()
        .map(|index| -> Result<Sample> {
            let mut s = generate_sample(cfg, &mapping, index).map_err(|e| LabError::Core(e.at_sample(index)))?;
            if labeled {
                let labels =
                    default_labels(cfg, &s).map_err(|e| LabError::Solver(format!("labelling sample {index}: {e}")))?;
                s.labels = Some(labels);
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: cfg.clone(),
        mapping,
        samples,
    })
}

fn push_mats(out: &mut Vec<f64>, ms: &[CMat]) {
    for m in ms {
        for z in m.as_slice() {
            out.push(z.re);
            out.push(z.im);
        }
    }
}

fn write_blob(dir: &Path, file: &str, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let path = dir.join(file);
    std::fs::write(&path, bytes).map_err(LabError::io(path))
}

fn matrix_shape(ms: &[CMat]) -> (usize, usize) {
    ms.first().map_or((0, 0), |m| m.shape())
}

/// Writes `ds` into `dir` (created if needed) and returns the manifest.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    let cfg = &ds.config;
    let count = ds.len();
    let first_index = ds.samples.first().map_or(0, |s| s.index);
    if ds.samples.iter().enumerate().any(|(i, s)| s.index != first_index + i) {
        return Err(LabError::Shape("sample indices are not consecutive".into()));
    }
    let bs = cfg.n_cells;
    let mut tensors = Vec::new();
    let mut emit = |name: &str, shape: Vec<usize>, complex: bool, values: Vec<f64>| -> Result<()> {
        let file = format!("{name}.bin");
        write_blob(dir, &file, &values)?;
        tensors.push(TensorIndex {
            name: name.to_string(),
            file,
            shape,
            complex,
        });
        Ok(())
    };
    type Field = fn(&Sample) -> &Vec<CMat>;
    let fields: [(&str, Field); 4] = [
        ("uplink", |s| &s.uplink),
        ("received", |s| &s.received),
        ("input", |s| &s.input),
        ("downlink", |s| &s.downlink),
    ];
    for (name, get) in fields {
        let (r, c) = ds.samples.first().map_or((0, 0), |s| matrix_shape(get(s)));
        if ds.samples.first().is_some_and(|s| get(s).is_empty()) {
            continue;
        }
        let mut values = Vec::with_capacity(2 * count * bs * r * c);
        for s in &ds.samples {
            if get(s).len() != bs || get(s).iter().any(|m| m.shape() != (r, c)) {
                return Err(LabError::Shape(format!(
                    "sample {} has a ragged {name} tensor",
                    s.index
                )));
            }
            push_mats(&mut values, get(s));
        }
        emit(name, vec![count, bs, r, c], true, values)?;
    }
    let labeled = ds.is_labeled();
    if labeled {
        let p_len = ds.samples[0].labels.as_ref().map_or(0, |l| l.p.len());
        let q_len = ds.samples[0]
            .labels
            .as_ref()
            .and_then(|l| l.q.as_ref())
            .map(|q| q.len());
        let mut p = Vec::with_capacity(count * p_len);
        let mut q = Vec::new();
        for s in &ds.samples {
            let l = s.labels.as_ref().expect("labeled dataset");
            if l.p.len() != p_len || l.q.as_ref().map(|q| q.len()) != q_len {
                return Err(LabError::Shape(format!("sample {} has ragged labels", s.index)));
            }
            p.extend(&l.p);
            q.extend(l.q.iter().flatten());
        }
        emit("labels_p", vec![count, p_len], false, p)?;
        if let Some(q_len) = q_len {
            emit("labels_q", vec![count, q_len], false, q)?;
        }
    }
    let users = ds.mapping.scalars.len();
    let mut unitaries = Vec::new();
    push_mats(&mut unitaries, &ds.mapping.unitaries);
    let (ur, uc) = matrix_shape(&ds.mapping.unitaries);
    emit("mapping_unitaries", vec![users, ur, uc], true, unitaries)?;
    let scalars = ds.mapping.scalars.iter().flat_map(|z| [z.re, z.im]).collect();
    emit("mapping_scalars", vec![users], true, scalars)?;

    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: 1,
        config: cfg.clone(),
        seed: cfg.seed,
        first_index,
        count,
        labeled,
        config_hash: config_hash(cfg, first_index, count, labeled),
        tensors,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
    std::fs::write(&path, text + "\n").map_err(LabError::io(path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(LabError::io(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| LabError::format("dataset manifest", &path, e))?;
    if m.format != FORMAT || m.version != 1 {
        return Err(LabError::format("dataset manifest", &path, "unknown format or version"));
    }
    if m.seed != m.config.seed || m.config_hash != config_hash(&m.config, m.first_index, m.count, m.labeled) {
        return Err(LabError::format(
            "dataset manifest",
            &path,
            "config hash does not match the config",
        ));
    }
    Ok(m)
}

struct Blob {
    shape: Vec<usize>,
    values: Vec<f64>,
    complex: bool,
}

impl Blob {
    fn complex_at(&self, offset: usize, len: usize) -> Vec<C64> {
        self.values[2 * offset..2 * (offset + len)]
            .chunks_exact(2)
            .map(|c| C64::new(c[0], c[1]))
            .collect()
    }
}

fn read_blob(dir: &Path, t: &TensorIndex) -> Result<Blob> {
    let path: PathBuf = dir.join(&t.file);
    let bytes = std::fs::read(&path).map_err(LabError::io(&path))?;
    let n: usize = t.shape.iter().product::<usize>() * if t.complex { 2 } else { 1 };
    if bytes.len() != 8 * n {
        return Err(LabError::format(
            "dataset blob",
            &path,
            format!("expected {n} values, found {} bytes", bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Blob {
        shape: t.shape.clone(),
        values,
        complex: t.complex,
    })
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let bad = |msg: String| LabError::format("dataset", dir, msg);
    let blob = |name: &str| -> Result<Option<Blob>> {
        m.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| read_blob(dir, t))
            .transpose()
    };
    let cfg = m.config.clone();
    cfg.validate()?;
    let bs = cfg.n_cells;
    let mats = |b: &Option<Blob>, i: usize| -> Result<Vec<CMat>> {
        let Some(b) = b else { return Ok(Vec::new()) };
        if b.shape.len() != 4 || b.shape[0] != m.count || b.shape[1] != bs || !b.complex {
            return Err(bad(format!(
                "tensor shape {:?} does not fit {} samples of {bs} BSs",
                b.shape, m.count
            )));
        }
        let (r, c) = (b.shape[2], b.shape[3]);
        (0..bs)
            .map(|j| Ok(CMat::from_vec(r, c, b.complex_at((i * bs + j) * r * c, r * c))?))
            .collect()
    };
    let uplink = blob("uplink")?;
    let received = blob("received")?;
    let input = blob("input")?;
    let downlink = blob("downlink")?;
    if uplink.is_none() || input.is_none() || downlink.is_none() {
        return Err(bad("uplink, input and downlink tensors are required".into()));
    }
    let labels_p = blob("labels_p")?;
    let labels_q = blob("labels_q")?;
    if m.labeled != labels_p.is_some() {
        return Err(bad("label tensors disagree with the labeled flag".into()));
    }
    let row = |b: &Blob, i: usize| -> Result<Vec<f64>> {
        if b.shape.len() != 2 || b.shape[0] != m.count || b.complex {
            return Err(bad(format!(
                "label shape {:?} does not fit {} samples",
                b.shape, m.count
            )));
        }
        let w = b.shape[1];
        Ok(b.values[i * w..(i + 1) * w].to_vec())
    };
    let mut samples = Vec::with_capacity(m.count);
    for i in 0..m.count {
        let labels = match &labels_p {
            Some(p) => Some(Labels {
                p: row(p, i)?,
                q: labels_q.as_ref().map(|q| row(q, i)).transpose()?,
            }),
            None => None,
        };
        samples.push(Sample {
            index: m.first_index + i,
            uplink: mats(&uplink, i)?,
            received: mats(&received, i)?,
            input: mats(&input, i)?,
            downlink: mats(&downlink, i)?,
            labels,
        });
    }
    let (Some(u), Some(s)) = (blob("mapping_unitaries")?, blob("mapping_scalars")?) else {
        return Err(bad("mapping tensors are required".into()));
    };
    if u.shape.len() != 3 || s.shape.len() != 1 || u.shape[0] != s.shape[0] {
        return Err(bad("mapping tensors have inconsistent shapes".into()));
    }
    let (users, r, c) = (u.shape[0], u.shape[1], u.shape[2]);
    let mapping = MappingState {
        unitaries: (0..users)
            .map(|k| Ok(CMat::from_vec(r, c, u.complex_at(k * r * c, r * c))?))
            .collect::<Result<_>>()?,
        scalars: s.complex_at(0, users),
    };
    Ok(Dataset {
        config: cfg,
        mapping,
        samples,
    })
}
