//! Little-endian parameter checkpoints.
//!
//! Layout: magic `RLVC`, format version (u32), kind tag (u32), affine layer
//! count L (u32), L + 1 layer widths (u32 each), then every parameter as an
//! `f64` in layer order (W0 row-major out × in, b0, W1, b1, ...).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::dense::{DenseNet, LEAKY_SLOPE};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RLVC";
pub const FORMAT_VERSION: u32 = 1;

/// What a checkpoint holds; stored in the header so a reward model cannot be
/// loaded as a generator by mistake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Net = 0,
    Generator = 1,
    CriticX0 = 2,
    CriticXt = 3,
    RewardModel = 4,
    Classifier = 5,
}

impl CheckpointKind {
    fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => Self::Net,
            1 => Self::Generator,
            2 => Self::CriticX0,
            3 => Self::CriticXt,
            4 => Self::RewardModel,
            5 => Self::Classifier,
            _ => return None,
        })
    }
}

pub fn encode(net: &DenseNet, kind: CheckpointKind) -> Vec<u8> {
    let dims = net.layer_dims();
    let mut out = Vec::with_capacity(16 + 4 * dims.len() + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&((dims.len() - 1) as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for p in net.flat_params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Decode a checkpoint, requiring the given kind.
pub fn decode(bytes: &[u8], expected: CheckpointKind, origin: &Path) -> Result<DenseNet> {
    let bad = |msg: &str| Error::invalid(origin, msg.to_string());
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("missing RLVC magic"));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let tag = r.u32().ok_or_else(|| bad("truncated header"))?;
    let kind = CheckpointKind::from_tag(tag).ok_or_else(|| bad(&format!("unknown kind tag {tag}")))?;
    if kind != expected {
        return Err(bad(&format!("checkpoint holds {kind:?}, expected {expected:?}")));
    }
    let layers = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    if layers == 0 || layers > 64 {
        return Err(bad(&format!("implausible layer count {layers}")));
    }
    let mut dims = Vec::with_capacity(layers + 1);
    for _ in 0..=layers {
        dims.push(r.u32().ok_or_else(|| bad("truncated layer widths"))? as usize);
    }
    if dims.contains(&0) {
        return Err(bad("zero layer width"));
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut wm = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            wm.push(r.f64().ok_or_else(|| bad("truncated parameters"))?);
        }
        let mut bv = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            bv.push(r.f64().ok_or_else(|| bad("truncated parameters"))?);
        }
        weights.push(Array2::from_shape_vec((fan_out, fan_in), wm).expect("sized"));
        biases.push(Array1::from(bv));
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    DenseNet::from_layers(weights, biases, LEAKY_SLOPE)
        .map_err(|e| bad(&format!("invalid parameters: {e}")))
}

pub fn save(net: &DenseNet, kind: CheckpointKind, path: &Path) -> Result<()> {
    fs::write(path, encode(net, kind)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, kind: CheckpointKind) -> Result<DenseNet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, kind, path)
}
