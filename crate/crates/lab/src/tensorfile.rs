//! Parameter checkpoint format.
//!
//! A UTF-8 text header followed by a raw payload:
//!
//! ```text
//! beamlab-tensors 1
//! meta <key> <single-line value>
//! tensor <name> <param|buffer> <real|complex> <d0,d1,...|scalar> <offset>
//! end
//! <payload>
//! ```
//!
//! The payload stores every tensor's complex entries as interleaved
//! real/imaginary little-endian `f64` pairs. `offset` counts `f64` values
//! from the start of the payload. Round trips are bit exact.

use std::collections::BTreeMap;
use std::path::Path;

use beamlab_core::autodiff::{CTensor, Params};
use beamlab_core::C64;

use crate::error::{LabError, Result};

const MAGIC: &str = "beamlab-tensors 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub trainable: bool,
    pub value: CTensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Entry>,
}

impl TensorFile {
    pub fn push_params(&mut self, prefix: &str, params: &Params) {
        for (name, value, trainable) in params.iter() {
            self.tensors.push(Entry {
                name: format!("{prefix}{name}"),
                trainable,
                value: value.clone(),
            });
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn params(&self, prefix: &str) -> Params {
        let mut params = Params::new();
        for e in &self.tensors {
            if let Some(name) = e.name.strip_prefix(prefix) {
                if e.trainable {
                    params.add(name, e.value.clone());
                } else {
                    params.add_buffer(name, e.value.clone());
                }
            }
        }
        params
    }

    pub fn get(&self, name: &str) -> Option<&CTensor> {
        self.tensors.iter().find(|e| e.name == name).map(|e| &e.value)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::from(MAGIC);
        header.push('\n');
        for (k, v) in &self.meta {
            header.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for e in &self.tensors {
            let shape = if e.value.shape().is_empty() {
                "scalar".to_string()
            } else {
                e.value
                    .shape()
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let kind = if e.trainable { "param" } else { "buffer" };
            let field = if e.value.is_real() { "real" } else { "complex" };
            header.push_str(&format!("tensor {} {kind} {field} {shape} {offset}\n", e.name));
            offset += 2 * e.value.len();
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.reserve(offset * 8);
        for e in &self.tensors {
            for z in e.value.data() {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| LabError::format("checkpoint", path, msg);
        let mut lines = Vec::new();
        let mut pos = 0usize;
        loop {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("header is not terminated".into()))?;
            let line = std::str::from_utf8(&rest[..nl]).map_err(|e| bad(e.to_string()))?;
            pos += nl + 1;
            if line == "end" {
                break;
            }
            lines.push(line);
        }
        if lines.first() != Some(&MAGIC) {
            return Err(bad("unknown format tag".into()));
        }
        let payload = &bytes[pos..];
        if !payload.len().is_multiple_of(8) {
            return Err(bad("payload is not a whole number of f64 values".into()));
        }
        let floats: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut file = TensorFile::default();
        let mut expected = 0usize;
        for line in &lines[1..] {
            let (tag, rest) = line.split_once(' ').ok_or_else(|| bad(format!("bad line {line:?}")))?;
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    file.meta.insert(k.to_string(), v.to_string());
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let [name, kind, field, shape, offset] = f[..] else {
                        return Err(bad(format!("bad tensor line {line:?}")));
                    };
                    let shape: Vec<usize> = if shape == "scalar" {
                        Vec::new()
                    } else {
                        shape
                            .split(',')
                            .map(|d| d.parse().map_err(|_| bad(format!("bad shape in {line:?}"))))
                            .collect::<Result<_>>()?
                    };
                    let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset in {line:?}")))?;
                    let n: usize = shape.iter().product();
                    if offset != expected || offset + 2 * n > floats.len() {
                        return Err(bad(format!("tensor {name} lies outside the payload")));
                    }
                    expected = offset + 2 * n;
                    let data: Vec<C64> = floats[offset..offset + 2 * n]
                        .chunks_exact(2)
                        .map(|c| C64::new(c[0], c[1]))
                        .collect();
                    let trainable = match kind {
                        "param" => true,
                        "buffer" => false,
                        _ => return Err(bad(format!("unknown tensor kind {kind:?}"))),
                    };
                    let value = match field {
                        "complex" => CTensor::from_complex(&shape, data),
                        "real" if data.iter().all(|z| z.im == 0.0) => {
                            CTensor::from_real(&shape, data.iter().map(|z| z.re).collect())
                        }
                        _ => return Err(bad(format!("bad field type in {line:?}"))),
                    }
                    .map_err(|e| bad(e.to_string()))?;
                    file.tensors.push(Entry {
                        name: name.to_string(),
                        trainable,
                        value,
                    });
                }
                _ => return Err(bad(format!("unknown header tag {tag:?}"))),
            }
        }
        if expected != floats.len() {
            return Err(bad("payload has trailing data".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(LabError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(LabError::io(path))?;
        Self::from_bytes(&bytes, path)
    }
}
