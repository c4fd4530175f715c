//! Model persistence.
//!
//! File layout: magic `PNETCKPT`, format version (u32 LE), manifest length
//! (u64 LE), a UTF-8 manifest, then the parameter payload as raw
//! little-endian f64 words. The manifest has three sections:
//!
//! ```text
//! [config]      key=value lines (the ModelConfig encoding)
//! [norm]        names=... / mean=... / std=... comma lists
//! [tensors]     <name> <d0xd1x...> <element offset> per parameter, in order
//! ```
//!
//! Float stats are written with the shortest round-trip formatting, so
//! save → load → save is byte-identical.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, PeriodNet};

pub const CKPT_MAGIC: &[u8; 8] = b"PNETCKPT";
pub const CKPT_VERSION: u32 = 1;

/// One named parameter as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CkptTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// A complete, self-describing snapshot of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub stats: NormStats,
    pub tensors: Vec<CkptTensor>,
}

impl Checkpoint {
    /// Snapshots a model's parameters together with its normalization stats.
    pub fn capture(model: &PeriodNet, stats: &NormStats) -> Self {
        let tensors = model
            .named_parameters()
            .into_iter()
            .map(|(name, t)| CkptTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data(),
            })
            .collect();
        Checkpoint {
            config: model.cfg.clone(),
            stats: stats.clone(),
            tensors,
        }
    }

    /// Rebuilds the model and loads the stored parameters into it. Tensor
    /// names and shapes must match the config-derived architecture exactly.
    pub fn restore(&self) -> Result<PeriodNet> {
        let model = PeriodNet::init(self.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        let params = model.named_parameters();
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "config implies {} parameters, checkpoint stores {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for ((name, param), stored) in params.into_iter().zip(&self.tensors) {
            if name != stored.name {
                return Err(Error::Checkpoint(format!(
                    "parameter order mismatch: expected {name:?}, found {:?}",
                    stored.name
                )));
            }
            if param.shape() != stored.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?}: shape {:?} does not match config shape {:?}",
                    stored.shape,
                    param.shape()
                )));
            }
            param.set_data(&stored.data)?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::from("[config]\n");
        for (k, v) in self.config.to_kv() {
            manifest.push_str(&format!("{k}={v}\n"));
        }
        manifest.push_str("[norm]\n");
        manifest.push_str(&format!("names={}\n", self.stats.names.join(",")));
        manifest.push_str(&format!("mean={}\n", join_floats(&self.stats.mean)));
        manifest.push_str(&format!("std={}\n", join_floats(&self.stats.std)));
        manifest.push_str("[tensors]\n");
        let mut offset = 0usize;
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            manifest.push_str(&format!("{} {} {offset}\n", t.name, dims.join("x")));
            offset += t.data.len();
        }

        let mut out = Vec::with_capacity(8 + 4 + 8 + manifest.len() + offset * 8);
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 {
            return Err(fail("file too short for header"));
        }
        if &bytes[..8] != CKPT_MAGIC {
            return Err(fail("bad magic; not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CKPT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {CKPT_VERSION})"
            )));
        }
        let manifest_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let payload_start = 20 + manifest_len;
        if bytes.len() < payload_start {
            return Err(fail("manifest extends past end of file"));
        }
        let manifest = std::str::from_utf8(&bytes[20..payload_start])
            .map_err(|_| fail("manifest is not UTF-8"))?;
        let payload = &bytes[payload_start..];

        let (config, stats, directory) = parse_manifest(manifest)?;
        let total: usize = directory.iter().map(|(_, shape, _)| numel(shape)).sum();
        if payload.len() != total * 8 {
            return Err(Error::Checkpoint(format!(
                "payload holds {} bytes, directory expects {}",
                payload.len(),
                total * 8
            )));
        }
        let mut tensors = Vec::with_capacity(directory.len());
        let mut expect_offset = 0usize;
        for (name, shape, offset) in directory {
            if offset != expect_offset {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?}: offset {offset} is not contiguous (expected {expect_offset})"
                )));
            }
            let n = numel(&shape);
            let data = payload[offset * 8..(offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            expect_offset += n;
            tensors.push(CkptTensor { name, shape, data });
        }
        Ok(Checkpoint { config, stats, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn join_floats(vals: &[f64]) -> String {
    vals.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad float in manifest: {s:?}")))
        })
        .collect()
}

type Directory = Vec<(String, Vec<usize>, usize)>;

fn parse_manifest(text: &str) -> Result<(ModelConfig, NormStats, Directory)> {
    let fail = |msg: String| Error::Checkpoint(msg);
    let mut section = "";
    let mut kv = Vec::new();
    let mut names = None;
    let mut mean = None;
    let mut std = None;
    let mut directory = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name {
                "config" | "norm" | "tensors" => name,
                _ => return Err(fail(format!("unknown manifest section {name:?}"))),
            };
            continue;
        }
        match section {
            "config" => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| fail(format!("malformed config line {line:?}")))?;
                kv.push((k.to_string(), v.to_string()));
            }
            "norm" => match line.split_once('=') {
                Some(("names", v)) => {
                    names = Some(v.split(',').map(str::to_string).collect::<Vec<_>>())
                }
                Some(("mean", v)) => mean = Some(parse_floats(v)?),
                Some(("std", v)) => std = Some(parse_floats(v)?),
                _ => return Err(fail(format!("malformed norm line {line:?}"))),
            },
            "tensors" => {
                let mut parts = line.split_whitespace();
                let (name, dims, offset) = (parts.next(), parts.next(), parts.next());
                let (Some(name), Some(dims), Some(offset), None) = (name, dims, offset, parts.next())
                else {
                    return Err(fail(format!("malformed tensor line {line:?}")));
                };
                let shape: Vec<usize> = dims
                    .split('x')
                    .map(|d| {
                        d.parse()
                            .map_err(|_| fail(format!("bad dimension {d:?} for tensor {name:?}")))
                    })
                    .collect::<Result<_>>()?;
                let offset: usize = offset
                    .parse()
                    .map_err(|_| fail(format!("bad offset for tensor {name:?}")))?;
                directory.push((name.to_string(), shape, offset));
            }
            _ => return Err(fail(format!("content before first section: {line:?}"))),
        }
    }
    let config = ModelConfig::from_kv(&kv)?;
    let names = names.ok_or_else(|| fail("manifest missing norm names".into()))?;
    let (mean, std) = (
        mean.ok_or_else(|| fail("manifest missing norm mean".into()))?,
        std.ok_or_else(|| fail("manifest missing norm std".into()))?,
    );
    if names.len() != mean.len() || mean.len() != std.len() {
        return Err(fail("norm names, mean, and std lengths differ".into()));
    }
    Ok((config, NormStats { names, mean, std }, directory))
}
