//! Binary containers: `GMED` datasets and `GMEM` checkpoints.
//!
//! All integers and floats are little-endian.

use std::io::{self, Read, Write};

use gme_core::featurize::{FeatureKind, NormStats};
use gme_core::nn::{AdamState, LayerSpec, Model, ModelSpec, RunningStats};
use gme_core::pipeline::{Classifier, Dataset, Sample};
use gme_core::Label;

pub const DATASET_MAGIC: &[u8; 4] = b"GMED";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMEM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError::Invalid(msg.into()))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self, limit: u64, what: &str) -> Result<usize, FormatError> {
        let v = self.u64()?;
        if v > limit {
            return invalid(format!("{what} = {v} exceeds {limit}"));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let mut raw = vec![0u8; n * 8];
        self.inner.read_exact(&mut raw)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<(), FormatError> {
        if &self.bytes::<4>()? != magic {
            return invalid(format!("not a {} file", String::from_utf8_lossy(magic)));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return invalid(format!("unsupported version {v}"));
        }
        Ok(())
    }
    fn expect_end(&mut self) -> Result<(), FormatError> {
        let mut b = [0u8; 1];
        if self.inner.read(&mut b)? != 0 {
            return invalid("trailing bytes after payload");
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Largest accepted feature length (GHZ-diagonal at 30 qubits).
const MAX_FEATURES: u64 = 1 << 30;

/// Layout: magic, version, kind u8, n u16, count u64, feature length u64,
/// generator config digest (32 bytes, zero when unknown), then per sample
/// label i8, marginal flag u8, source seed u64 and the features.
pub fn encode_dataset(ds: &Dataset, generator: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(59 + ds.len() * (10 + 8 * ds.feature_length));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(ds.kind.code());
    out.extend_from_slice(&(ds.n_qubits as u16).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.feature_length as u64).to_le_bytes());
    out.extend_from_slice(generator);
    for s in &ds.samples {
        out.push(s.label.as_i8() as u8);
        out.push(s.marginal as u8);
        out.extend_from_slice(&s.source_seed.to_le_bytes());
        put_f64s(&mut out, &s.features);
    }
    out
}

pub fn read_dataset(r: impl Read) -> Result<Dataset, FormatError> {
    Ok(read_dataset_with_generator(r)?.0)
}

/// The dataset and the digest of the configuration that generated it.
pub fn read_dataset_with_generator(r: impl Read) -> Result<(Dataset, [u8; 32]), FormatError> {
    let mut r = Reader { inner: r };
    r.header(DATASET_MAGIC)?;
    let Some(kind) = FeatureKind::from_code(r.u8()?) else {
        return invalid("unknown feature kind");
    };
    let n = r.u16()? as usize;
    if !(2..=30).contains(&n) {
        return invalid(format!("qubit count {n} out of range"));
    }
    let count = r.usize(u32::MAX as u64, "sample count")?;
    let length = r.usize(MAX_FEATURES, "feature length")?;
    if length != kind.length(n) {
        return invalid(format!("feature length {length} does not match {kind:?} at n = {n}"));
    }
    let generator = r.bytes::<32>()?;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for k in 0..count {
        let Some(label) = Label::from_i8(r.u8()? as i8) else {
            return invalid(format!("sample {k}: label must be -1 or +1"));
        };
        let marginal = match r.u8()? {
            0 => false,
            1 => true,
            v => return invalid(format!("sample {k}: marginal flag {v}")),
        };
        let source_seed = r.u64()?;
        let features = r.f64s(length)?;
        if features.iter().any(|v| !v.is_finite()) {
            return invalid(format!("sample {k}: non-finite feature"));
        }
        samples.push(Sample {
            features,
            label,
            marginal,
            source_seed,
        });
    }
    r.expect_end()?;
    let ds = Dataset::new(kind, n, samples).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok((ds, generator))
}

/// What a checkpoint was trained on, for the train-split guard.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub dataset_sha256: [u8; 32],
    pub split_seed: u64,
    pub train_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub classifier: Classifier,
    pub provenance: Option<Provenance>,
    pub adam: Option<AdamState>,
}

fn layer_tag(l: &LayerSpec) -> u8 {
    match l {
        LayerSpec::Conv1d { .. } => 1,
        LayerSpec::BatchNorm { .. } => 2,
        LayerSpec::Relu => 3,
        LayerSpec::MaxPool => 4,
        LayerSpec::Se { .. } => 5,
        LayerSpec::GlobalPool => 6,
        LayerSpec::Dense { .. } => 7,
        LayerSpec::Softmax => 8,
    }
}

/// Layout: magic, version, kind u8, n u16, input length/channels u64, layer
/// count u32, per layer (tag u8, two u64 fields or f64 eps + pad, output
/// length/channels u64), SE flag u8 and reduction u64, parameters, batchnorm
/// running statistics, normalization statistics, optional provenance,
/// optional Adam state.
pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let c = &ck.classifier;
    let spec = c.model.spec();
    let shapes = spec.shapes().expect("model spec was validated at build");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(c.kind.code());
    out.extend_from_slice(&(c.n_qubits as u16).to_le_bytes());
    out.extend_from_slice(&(spec.input_length as u64).to_le_bytes());
    out.extend_from_slice(&(spec.input_channels as u64).to_le_bytes());
    out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
    for (l, &(len, ch)) in spec.layers.iter().zip(&shapes[1..]) {
        out.push(layer_tag(l));
        let (a, b): (u64, u64) = match *l {
            LayerSpec::Conv1d { kernel, out } => (kernel as u64, out as u64),
            LayerSpec::BatchNorm { eps } => (eps.to_bits(), 0),
            LayerSpec::Se { reduction } => (reduction as u64, 0),
            LayerSpec::Dense { out } => (out as u64, 0),
            _ => (0, 0),
        };
        for v in [a, b, len as u64, ch as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let se = spec.layers.iter().find_map(|l| match l {
        LayerSpec::Se { reduction } => Some(*reduction),
        _ => None,
    });
    out.push(se.is_some() as u8);
    out.extend_from_slice(&(se.unwrap_or(0) as u64).to_le_bytes());
    out.extend_from_slice(&(c.model.num_params() as u64).to_le_bytes());
    put_f64s(&mut out, c.model.params());
    out.extend_from_slice(&(c.model.running().len() as u32).to_le_bytes());
    for rs in c.model.running() {
        out.extend_from_slice(&(rs.mean.len() as u64).to_le_bytes());
        put_f64s(&mut out, &rs.mean);
        put_f64s(&mut out, &rs.var);
    }
    out.extend_from_slice(&(c.stats.len() as u64).to_le_bytes());
    put_f64s(&mut out, &c.stats.mean);
    put_f64s(&mut out, &c.stats.scale);
    match &ck.provenance {
        Some(p) => {
            out.push(1);
            out.extend_from_slice(&p.dataset_sha256);
            out.extend_from_slice(&p.split_seed.to_le_bytes());
            out.extend_from_slice(&p.train_fraction.to_le_bytes());
        }
        None => out.push(0),
    }
    match &ck.adam {
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&a.t.to_le_bytes());
            put_f64s(&mut out, &a.m);
            put_f64s(&mut out, &a.v);
        }
        None => out.push(0),
    }
    out
}

pub fn read_checkpoint(r: impl Read) -> Result<Checkpoint, FormatError> {
    let mut r = Reader { inner: r };
    r.header(CHECKPOINT_MAGIC)?;
    let Some(kind) = FeatureKind::from_code(r.u8()?) else {
        return invalid("unknown feature kind");
    };
    let n_qubits = r.u16()? as usize;
    let input_length = r.usize(MAX_FEATURES, "input length")?;
    let input_channels = r.usize(1 << 16, "input channels")?;
    let count = r.u32()? as usize;
    if count > 64 {
        return invalid(format!("{count} layers"));
    }
    let mut layers = Vec::with_capacity(count);
    let mut stored_shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = r.u8()?;
        let (a, b) = (r.u64()?, r.u64()?);
        stored_shapes.push((r.u64()? as usize, r.u64()? as usize));
        let small = |v: u64| -> Result<usize, FormatError> {
            if v == 0 || v > 1 << 16 {
                invalid(format!("layer field {v} out of range"))
            } else {
                Ok(v as usize)
            }
        };
        layers.push(match tag {
            1 => LayerSpec::Conv1d {
                kernel: small(a)?,
                out: small(b)?,
            },
            2 => LayerSpec::BatchNorm { eps: f64::from_bits(a) },
            3 => LayerSpec::Relu,
            4 => LayerSpec::MaxPool,
            5 => LayerSpec::Se { reduction: small(a)? },
            6 => LayerSpec::GlobalPool,
            7 => LayerSpec::Dense { out: small(a)? },
            8 => LayerSpec::Softmax,
            t => return invalid(format!("unknown layer tag {t}")),
        });
    }
    let spec = ModelSpec {
        input_length,
        input_channels,
        layers,
    };
    let shapes = spec.shapes().map_err(|e| FormatError::Invalid(e.to_string()))?;
    if shapes[1..] != stored_shapes[..] {
        return invalid("stored layer shapes disagree with the layer list");
    }
    let se_flag = r.u8()?;
    let reduction = r.u64()?;
    let actual = spec.layers.iter().find_map(|l| match l {
        LayerSpec::Se { reduction } => Some(*reduction as u64),
        _ => None,
    });
    if (se_flag == 1) != actual.is_some() || actual.unwrap_or(0) != reduction {
        return invalid("SE header disagrees with the layer list");
    }
    let n_params = r.usize(1 << 32, "parameter count")?;
    let params = r.f64s(n_params)?;
    let bn = r.u32()? as usize;
    if bn > count {
        return invalid("more batchnorm statistics than layers");
    }
    let mut running = Vec::with_capacity(bn);
    for _ in 0..bn {
        let c = r.usize(1 << 16, "batchnorm channels")?;
        running.push(RunningStats {
            mean: r.f64s(c)?,
            var: r.f64s(c)?,
        });
    }
    let norm_len = r.usize(MAX_FEATURES, "normalization length")?;
    if norm_len != input_length * input_channels {
        return invalid("normalization statistics do not match the input length");
    }
    let stats = NormStats {
        mean: r.f64s(norm_len)?,
        scale: r.f64s(norm_len)?,
    };
    let provenance = match r.u8()? {
        0 => None,
        1 => Some(Provenance {
            dataset_sha256: r.bytes()?,
            split_seed: r.u64()?,
            train_fraction: r.f64()?,
        }),
        v => return invalid(format!("provenance flag {v}")),
    };
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            Some(AdamState {
                t,
                m: r.f64s(n_params)?,
                v: r.f64s(n_params)?,
            })
        }
        v => return invalid(format!("optimizer flag {v}")),
    };
    r.expect_end()?;
    if input_length != kind.length(n_qubits) {
        return invalid("input length does not match the feature kind");
    }
    let model = Model::from_parts(spec, params, running).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(Checkpoint {
        classifier: Classifier {
            kind,
            n_qubits,
            stats,
            model,
        },
        provenance,
        adam,
    })
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| io::Error::other("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}
