//! The `NPMK` binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NPMK" | u32 version | u8 kind (0 model, 1 alphas, 2 permutations)
//! architecture: u32 n, n × u64 widths, then per hidden layer
//!               u8 batchnorm flag [+ f64 eps + f64 momentum when set]
//! provenance:   u64 seed | 32-byte config hash | u32 len + UTF-8 note
//! u32 tensor count, per tensor:
//!               u16 len + UTF-8 name | u32 ndim | ndim × u64 dims | f64 data
//! ```
//!
//! Permutations are stored as f64 tensors of their indices.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::align::PermutationSet;
use crate::error::{Error, Result};
use crate::merge::AlphaSet;
use crate::nn::{BatchNorm, Layer, MlpSpec, ModelParams};
use crate::numerics::{Permutation, Tensor};

pub const MAGIC: &[u8; 4] = b"NPMK";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Model = 0,
    Alphas = 1,
    Permutations = 2,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub note: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: [u8; 32], note: impl Into<String>) -> Self {
        Self {
            seed,
            config_hash,
            note: note.into(),
        }
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.config_hash)
    }

    /// Errors when the stored hash differs from `expected`, unless `force`.
    pub fn check_hash(&self, expected: &[u8; 32], force: bool) -> Result<()> {
        if force || &self.config_hash == expected {
            return Ok(());
        }
        Err(Error::input(format!(
            "checkpoint was produced by config {} but the current config hashes to {} (use --force to override)",
            self.hash_hex(),
            hex(expected)
        )))
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per hidden layer BatchNorm settings recorded in the header.
type BnHeader = Vec<Option<(f64, f64)>>;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Model(ModelParams),
    Alphas { spec: MlpSpec, alphas: AlphaSet },
    Permutations { spec: MlpSpec, perms: PermutationSet },
}

impl Payload {
    pub fn kind(&self) -> Kind {
        match self {
            Payload::Model(_) => Kind::Model,
            Payload::Alphas { .. } => Kind::Alphas,
            Payload::Permutations { .. } => Kind::Permutations,
        }
    }

    fn spec(&self) -> &MlpSpec {
        match self {
            Payload::Model(m) => m.spec(),
            Payload::Alphas { spec, .. } | Payload::Permutations { spec, .. } => spec,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub payload: Payload,
    pub provenance: Provenance,
}

fn trainable_names(spec: &MlpSpec) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..spec.num_layers() {
        names.push(format!("layer{}.weight", l + 1));
        names.push(format!("layer{}.bias", l + 1));
        if spec.batchnorm.get(l).copied().unwrap_or(false) {
            names.push(format!("layer{}.bn.gamma", l + 1));
            names.push(format!("layer{}.bn.beta", l + 1));
        }
    }
    names
}

fn bn_header(payload: &Payload) -> BnHeader {
    match payload {
        Payload::Model(m) => m.layers()[..m.spec().num_hidden()]
            .iter()
            .map(|l| l.bn.as_ref().map(|bn| (bn.eps, bn.momentum)))
            .collect(),
        other => {
            let spec = other.spec();
            spec.batchnorm
                .iter()
                .map(|&b| b.then_some((crate::nn::model::DEFAULT_BN_EPS, crate::nn::model::DEFAULT_BN_MOMENTUM)))
                .collect()
        }
    }
}

fn named_tensors(payload: &Payload) -> Vec<(String, Tensor)> {
    match payload {
        Payload::Model(m) => m.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        Payload::Alphas { spec, alphas } => trainable_names(spec)
            .into_iter()
            .map(|n| format!("alpha.{n}"))
            .zip(alphas.tensors().iter().cloned())
            .collect(),
        Payload::Permutations { perms, .. } => perms
            .perms()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let data = p.as_slice().iter().map(|&v| v as f64).collect();
                (
                    format!("perm.layer{}", i + 1),
                    Tensor::new(vec![p.len()], data).expect("nonempty"),
                )
            })
            .collect(),
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(ckpt.payload.kind() as u8);
    let spec = ckpt.payload.spec();
    out.extend_from_slice(&(spec.widths.len() as u32).to_le_bytes());
    for &w in &spec.widths {
        out.extend_from_slice(&(w as u64).to_le_bytes());
    }
    for bn in bn_header(&ckpt.payload) {
        match bn {
            Some((eps, momentum)) => {
                out.push(1);
                out.extend_from_slice(&eps.to_le_bytes());
                out.extend_from_slice(&momentum.to_le_bytes());
            }
            None => out.push(0),
        }
    }
    let p = &ckpt.provenance;
    out.extend_from_slice(&p.seed.to_le_bytes());
    out.extend_from_slice(&p.config_hash);
    out.extend_from_slice(&(p.note.len() as u32).to_le_bytes());
    out.extend_from_slice(p.note.as_bytes());
    let tensors = named_tensors(&ckpt.payload);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.name.to_string(),
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                path: self.name.to_string(),
                offset: self.bytes.len() as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String> {
        let start = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            path: self.name.to_string(),
            offset: start as u64,
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

/// Decodes a checkpoint; `name` appears in error messages.
pub fn decode(bytes: &[u8], name: &str) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, name };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic, expected NPMK"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos -= 4;
        return Err(r.err(format!("unsupported version {version}")));
    }
    let kind = match r.u8("kind")? {
        0 => Kind::Model,
        1 => Kind::Alphas,
        2 => Kind::Permutations,
        k => {
            r.pos -= 1;
            return Err(r.err(format!("unknown payload kind {k}")));
        }
    };
    let n = r.u32("width count")? as usize;
    if !(3..=1024).contains(&n) {
        r.pos -= 4;
        return Err(r.err(format!("implausible layer count {n}")));
    }
    let mut widths = Vec::with_capacity(n);
    for _ in 0..n {
        let w = r.u64("width")?;
        if w == 0 || w > u32::MAX as u64 {
            r.pos -= 8;
            return Err(r.err(format!("implausible width {w}")));
        }
        widths.push(w as usize);
    }
    let mut bn: BnHeader = Vec::with_capacity(n - 2);
    for _ in 0..n - 2 {
        bn.push(match r.u8("batchnorm flag")? {
            0 => None,
            1 => Some((r.f64("bn eps")?, r.f64("bn momentum")?)),
            f => {
                r.pos -= 1;
                return Err(r.err(format!("batchnorm flag must be 0 or 1, got {f}")));
            }
        });
    }
    let spec = MlpSpec::new(widths, bn.iter().map(Option::is_some).collect())?;
    let seed = r.u64("seed")?;
    let config_hash: [u8; 32] = r.take(32, "config hash")?.try_into().unwrap();
    let note_len = r.u32("note length")? as usize;
    let note = r.string(note_len, "note")?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16("tensor name length")? as usize;
        let tname = r.string(len, "tensor name")?;
        let ndim = r.u32("ndim")? as usize;
        if ndim == 0 || ndim > 8 {
            r.pos -= 4;
            return Err(r.err(format!("tensor {tname}: bad ndim {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("dimension")? as usize);
        }
        let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let numel = match numel {
            Some(v) if v > 0 && v.checked_mul(8).is_some() => v,
            _ => return Err(r.err(format!("tensor {tname}: bad shape {shape:?}"))),
        };
        let start = r.pos;
        let raw = r.take(numel * 8, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format {
            path: name.to_string(),
            offset: start as u64,
            message: format!("tensor {tname}: {e}"),
        })?;
        tensors.push((tname, t));
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let payload = build_payload(kind, spec, &bn, tensors).map_err(|e| match e {
        Error::Format { .. } => e,
        other => Error::Format {
            path: name.to_string(),
            offset: bytes.len() as u64,
            message: other.to_string(),
        },
    })?;
    Ok(Checkpoint {
        payload,
        provenance: Provenance {
            seed,
            config_hash,
            note,
        },
    })
}

fn expect_names(got: &[(String, Tensor)], want: &[String]) -> Result<()> {
    let names: Vec<&str> = got.iter().map(|(n, _)| n.as_str()).collect();
    if names != want.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::input(format!(
            "tensor names {names:?} do not match the architecture, expected {want:?}"
        )));
    }
    Ok(())
}

fn build_payload(kind: Kind, spec: MlpSpec, bn: &BnHeader, tensors: Vec<(String, Tensor)>) -> Result<Payload> {
    match kind {
        Kind::Model => {
            let expected: Vec<String> = ModelParams::zeros(&spec)
                .named_tensors()
                .into_iter()
                .map(|(n, _)| n)
                .collect();
            expect_names(&tensors, &expected)?;
            let mut it = tensors.into_iter().map(|(_, t)| t);
            let mut layers = Vec::with_capacity(spec.num_layers());
            for l in 0..spec.num_layers() {
                let weight = it.next().unwrap();
                let bias = it.next().unwrap();
                let norm = bn.get(l).copied().flatten().map(|(eps, momentum)| BatchNorm {
                    gamma: it.next().unwrap(),
                    beta: it.next().unwrap(),
                    running_mean: it.next().unwrap(),
                    running_var: it.next().unwrap(),
                    momentum,
                    eps,
                });
                layers.push(Layer { weight, bias, bn: norm });
            }
            Ok(Payload::Model(ModelParams::from_layers(spec, layers)?))
        }
        Kind::Alphas => {
            let expected: Vec<String> = trainable_names(&spec)
                .into_iter()
                .map(|n| format!("alpha.{n}"))
                .collect();
            expect_names(&tensors, &expected)?;
            let alphas = AlphaSet::from_tensors(tensors.into_iter().map(|(_, t)| t).collect())?;
            alphas.check_fits(&ModelParams::zeros(&spec))?;
            Ok(Payload::Alphas { spec, alphas })
        }
        Kind::Permutations => {
            let expected: Vec<String> = (1..=spec.num_hidden()).map(|l| format!("perm.layer{l}")).collect();
            expect_names(&tensors, &expected)?;
            let perms = tensors
                .into_iter()
                .map(|(_, t)| {
                    let idx = t
                        .data()
                        .iter()
                        .map(|&v| {
                            if v >= 0.0 && v.fract() == 0.0 && v < t.len() as f64 {
                                Ok(v as usize)
                            } else {
                                Err(Error::input(format!("permutation entry {v} is not an index")))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Permutation::new(idx)
                })
                .collect::<Result<Vec<_>>>()?;
            let set = PermutationSet::new(perms);
            set.check_fits(&ModelParams::zeros(&spec))?;
            Ok(Payload::Permutations { spec, perms: set })
        }
    }
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

pub fn save_model(path: &Path, model: &ModelParams, provenance: Provenance) -> Result<()> {
    save(
        path,
        &Checkpoint {
            payload: Payload::Model(model.clone()),
            provenance,
        },
    )
}

/// Loads a model checkpoint, rejecting other payload kinds.
pub fn load_model(path: &Path) -> Result<(ModelParams, Provenance)> {
    let ckpt = load(path)?;
    match ckpt.payload {
        Payload::Model(m) => Ok((m, ckpt.provenance)),
        other => Err(Error::input(format!(
            "{} holds a {:?} payload, not a model",
            path.display(),
            other.kind()
        ))),
    }
}
