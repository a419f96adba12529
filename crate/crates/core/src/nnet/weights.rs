//! Parameter storage, the "MPW1" weights container and seeded initializers.
//!
//! MPW1 layout: magic `MPWGT001`, `u32` tensor count, then per tensor a `u16`
//! name length, the UTF-8 name, a `u8` rank, `rank` `u32` extents and the
//! values as little-endian `f32`. All integers are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Network, Tensor};
use crate::error::{Error, Result};

pub const MPW_MAGIC: &[u8; 8] = b"MPWGT001";
const FORMAT: &str = "MPW1 weights";

/// Named parameter tensors. Values are held as `f64` but are always
/// representable in `f32`, so a save/load round trip is lossless.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Weights {
    tensors: BTreeMap<String, Tensor>,
}

impl Weights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor, rounding its values to `f32` precision.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let t = t.map(|v| v as f32 as f64);
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::UnboundWeight(name.to_string()))
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

    /// Checks that every parameter of `net` is present with the right shape.
    pub fn check_bound(&self, net: &Network) -> Result<()> {
        for spec in net.param_specs() {
            let t = self.require(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::shape(
                    format!("{} {:?}", spec.name, spec.shape),
                    format!("{:?}", t.shape()),
                ));
            }
        }
        Ok(())
    }

    /// All parameters zero except batch-norm scale and variance, which are one
    /// (batch-norm becomes the identity up to `eps`).
    pub fn zeros_for(net: &Network) -> Self {
        let mut w = Weights::new();
        for spec in net.param_specs() {
            let fill = if spec.name.ends_with(".gamma") || spec.name.ends_with(".var") {
                1.0
            } else {
                0.0
            };
            w.insert(spec.name, Tensor::full(spec.shape, fill));
        }
        w
    }

    /// he_normal: kernels drawn from N(0, 2 / fan_in), biases and shifts zero,
    /// batch-norm statistics at their identity values. Parameters are drawn in
    /// node order from a single seeded stream.
    pub fn he_normal(net: &Network, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Weights::zeros_for(net);
        for spec in net.param_specs() {
            if let Some(fan_in) = spec.fan_in {
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
                let data = (0..spec.len()).map(|_| dist.sample(&mut rng)).collect();
                w.insert(spec.name, Tensor::new(spec.shape, data).expect("shape from spec"));
            }
        }
        w
    }

    /// Replaces batch-norm statistics and affine terms with seeded values so
    /// normalisation is exercised non-trivially (mean ~ U(-0.1, 0.1),
    /// var ~ U(0.5, 1.5), gamma ~ U(0.8, 1.2), beta ~ U(-0.1, 0.1)).
    pub fn perturb_batchnorm(&mut self, seed: u64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = self.tensors.keys().cloned().collect();
        for name in names {
            let range = if name.ends_with(".mean") || name.ends_with(".beta") {
                (-0.1, 0.1)
            } else if name.ends_with(".var") {
                (0.5, 1.5)
            } else if name.ends_with(".gamma") {
                (0.8, 1.2)
            } else {
                continue;
            };
            let t = &self.tensors[&name];
            let data = (0..t.len()).map(|_| rng.random_range(range.0..range.1)).collect();
            let t = Tensor::new(t.shape().to_vec(), data).expect("same shape");
            self.insert(name, t);
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MPW_MAGIC);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            if name.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
                return Err(Error::invalid("weights", format!("tensor '{name}' cannot be encoded")));
            }
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(t.rank() as u8);
            for &e in t.shape() {
                let e = u32::try_from(e).map_err(|_| Error::invalid("weights", "extent exceeds u32"))?;
                buf.extend_from_slice(&e.to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(std::io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
            if bytes.len() - pos < n {
                return Err(Error::format(FORMAT, bytes.len() as u64, format!("truncated while reading {what}")));
            }
            let at = pos;
            pos += n;
            Ok((at, &bytes[at..at + n]))
        };
        let (_, magic) = take(8, "magic")?;
        if let Some(bad) = magic.iter().zip(MPW_MAGIC).position(|(a, b)| a != b) {
            return Err(Error::format(FORMAT, bad as u64, "bad magic"));
        }
        let count = u32::from_le_bytes(take(4, "tensor count")?.1.try_into().unwrap());
        let mut out = Weights::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(take(2, "name length")?.1.try_into().unwrap()) as usize;
            let (at, raw) = take(len, "name")?;
            let name = std::str::from_utf8(raw)
                .map_err(|_| Error::format(FORMAT, at as u64, "tensor name is not UTF-8"))?
                .to_string();
            if out.tensors.contains_key(&name) {
                return Err(Error::format(FORMAT, at as u64, format!("duplicate tensor '{name}'")));
            }
            let rank = take(1, "rank")?.1[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(take(4, "extent")?.1.try_into().unwrap()) as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::format(FORMAT, at as u64, "tensor size overflows"))?;
            let (_, raw) = take(n, "values")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            out.tensors.insert(name, Tensor::new(shape, data)?);
        }
        if pos != bytes.len() {
            return Err(Error::format(FORMAT, pos as u64, "trailing bytes after last tensor"));
        }
        Ok(out)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&fs::read(path)?)
    }
}
