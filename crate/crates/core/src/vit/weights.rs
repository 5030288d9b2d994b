//! Named parameter tensors and the `VHW1` weight file.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! "VHW1"
//! u64            entry count
//! per entry:
//!   u16          name length in bytes
//!   [u8]         UTF-8 name
//!   u8           rank
//!   [u32; rank]  extents
//!   [f32; n]     row-major values, n = product of extents
//! ```
//!
//! Entries are written in name order, so equal stores serialise to equal
//! bytes.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::ViTConfig;

pub const MAGIC: &[u8; 4] = b"VHW1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Weights(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total scalar parameter count.
    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Keeps only entries whose name satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> WeightStore {
        WeightStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// A store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> WeightStore {
        WeightStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Checks that the store holds exactly `expected`, shape for shape.
    pub fn check_exact(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        for (name, shape) in expected {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Weights(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        if self.tensors.len() != expected.len() {
            let known: std::collections::HashSet<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
            let extra: Vec<&str> = self.names().filter(|n| !known.contains(n)).collect();
            return Err(Error::Weights(format!("unexpected parameters: {}", extra.join(", "))));
        }
        Ok(())
    }

    /// Ensures two stores share names and shapes.
    pub fn check_same_layout(&self, other: &WeightStore) -> Result<()> {
        if self.tensors.len() != other.tensors.len()
            || self
                .tensors
                .iter()
                .zip(&other.tensors)
                .any(|((ka, va), (kb, vb))| ka != kb || va.shape() != vb.shape())
        {
            return Err(Error::Weights("parameter sets differ in names or shapes".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.element_count() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::WeightFormat("missing VHW1 magic".into()));
        }
        let count = r.u64()?;
        let mut tensors = BTreeMap::new();
        for i in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::WeightFormat(format!("entry {i}: name is not UTF-8")))?
                .to_string();
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::WeightFormat(format!("entry {name}: truncated or oversized tensor")))?;
            let data: Vec<f32> = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::WeightFormat(format!("entry {name}: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::WeightFormat(format!("duplicate entry {name}")));
            }
        }
        if r.remaining() != 0 {
            return Err(Error::WeightFormat(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::WeightFormat("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Short content hash used to bind feature caches to the weights that
/// produced them.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Identity string `<preset>@<checksum>` for a backbone.
pub fn backbone_id(cfg: &ViTConfig, weights: &WeightStore) -> String {
    format!("{}@{}", cfg.name, checksum(&weights.to_bytes()))
}

/// Random backbone: truncated normal (σ = 0.02) for matrices, CLS and
/// positional embeddings; zero biases; unit layer-norm gains.
pub fn init_backbone(cfg: &ViTConfig, rng: &mut Rng) -> Result<WeightStore> {
    cfg.validate()?;
    let mut store = WeightStore::new();
    for (name, shape) in cfg.parameter_shapes() {
        store.insert(name.clone(), init_tensor(&name, &shape, rng));
    }
    Ok(store)
}

pub(crate) fn init_tensor(name: &str, shape: &[usize], rng: &mut Rng) -> Tensor {
    if name.contains("norm") && name.ends_with(".weight") {
        Tensor::full(shape, 1.0)
    } else if name.ends_with(".bias") {
        Tensor::zeros(shape)
    } else {
        Tensor::from_fn(shape, |_| rng.truncated_normal(0.02) as f32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vit::preset;

    fn small_store() -> WeightStore {
        let mut s = WeightStore::new();
        s.insert("b", Tensor::vector(vec![1.0, -2.5, 3.25]).unwrap());
        s.insert("a.weight", Tensor::matrix(2, 2, vec![0.5, f32::MIN_POSITIVE, -0.0, 1e30]).unwrap());
        s
    }

    #[test]
    fn round_trip_is_lossless() {
        let s = small_store();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"VHW1");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 2);
        let back = WeightStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn exact_layout_of_one_entry() {
        let mut s = WeightStore::new();
        s.insert("w", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let mut expect = b"VHW1".to_vec();
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&1u16.to_le_bytes());
        expect.push(b'w');
        expect.push(2);
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1f32.to_le_bytes());
        expect.extend_from_slice(&2f32.to_le_bytes());
        assert_eq!(s.to_bytes(), expect);
    }

    #[test]
    fn rejects_malformed_files() {
        let bytes = small_store().to_bytes();
        assert!(WeightStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(WeightStore::from_bytes(&extra).is_err());
        assert!(WeightStore::from_bytes(b"VHW2").is_err());
        // Huge declared count with no entries.
        let mut lying = b"VHW1".to_vec();
        lying.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(WeightStore::from_bytes(&lying).is_err());
        // NaN payload.
        let mut nan = WeightStore::new();
        nan.insert("x", Tensor::vector(vec![0.0]).unwrap());
        let mut b = nan.to_bytes();
        let n = b.len();
        b[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(WeightStore::from_bytes(&b).is_err());
    }

    #[test]
    fn exact_check_flags_missing_extra_and_misshaped() {
        let cfg = preset("vit-mini/8").unwrap();
        let shapes = cfg.parameter_shapes();
        let store = init_backbone(&cfg, &mut Rng::new(0)).unwrap();
        store.check_exact(&shapes).unwrap();

        let mut extra = store.clone();
        extra.insert("head.0.weight", Tensor::zeros(&[1]));
        assert!(extra.check_exact(&shapes).unwrap_err().to_string().contains("head.0.weight"));

        let missing = store.filtered(|n| n != "norm.bias");
        assert!(missing.check_exact(&shapes).is_err());

        let mut bad = store.clone();
        bad.insert("cls_token", Tensor::zeros(&[2, 64]));
        assert!(bad.check_exact(&shapes).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = preset("vit-mini/8").unwrap();
        let a = init_backbone(&cfg, &mut Rng::new(3)).unwrap();
        let b = init_backbone(&cfg, &mut Rng::new(3)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.get("blocks.0.norm1.weight").unwrap().data()[0], 1.0);
        assert_eq!(a.get("blocks.1.mlp.fc2.bias").unwrap().max_abs(), 0.0);
        assert!(a.get("pos_embed").unwrap().max_abs() <= 0.04);
        assert_eq!(backbone_id(&cfg, &a), backbone_id(&cfg, &b));
    }
}
