//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "HSACCKP1"
//! precision  u8       4 (f32) or 8 (f64)
//! meta_len   u32      followed by meta_len bytes of UTF-8 metadata
//! net_count  u32
//! per network:
//!   name_len u32, name bytes
//!   activation u8
//!   layer_count u32
//!   dims       (layer_count + 1) x u32
//!   per layer: weight (in x out, row-major), then bias (out)
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Layer, MlpParams};
use crate::error::{Error, Result};
use crate::real::Real;

const MAGIC: &[u8; 8] = b"HSACCKP1";

/// Named networks plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub meta: String,
    pub networks: Vec<(String, MlpParams<F>)>,
}

impl<F: Real> Checkpoint<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(F::BYTES);
        put_u32(&mut out, self.meta.len());
        out.extend_from_slice(self.meta.as_bytes());
        put_u32(&mut out, self.networks.len());
        for (name, net) in &self.networks {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            out.push(net.activation().tag());
            put_u32(&mut out, net.layers().len());
            for d in net.dims() {
                put_u32(&mut out, d);
            }
            for layer in net.layers() {
                // `iter` walks logical row-major order regardless of memory layout.
                for &w in layer.weight.iter() {
                    w.write_le(&mut out);
                }
                for &b in layer.bias.iter() {
                    b.write_le(&mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let precision = r.take(1)?[0];
        if precision != F::BYTES {
            return Err(Error::Checkpoint(format!(
                "checkpoint stores {precision}-byte floats, reader expects {}",
                F::BYTES
            )));
        }
        let meta_len = r.u32()?;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let count = r.u32()?;
        let mut networks = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()?;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("network name is not UTF-8".into()))?;
            let activation = Activation::from_tag(r.take(1)?[0])
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation in {name}")))?;
            let layer_count = r.u32()?;
            let dims = (0..=layer_count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let mut layers = Vec::with_capacity(layer_count);
            for w in dims.windows(2) {
                let (i, o) = (w[0], w[1]);
                let weight = Array2::from_shape_vec((i, o), r.floats::<F>(i * o)?)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                let bias = Array1::from_vec(r.floats::<F>(o)?);
                layers.push(Layer { weight, bias });
            }
            networks.push((name, MlpParams::from_layers(layers, activation)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { meta, networks })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn network(&self, name: &str) -> Option<&MlpParams<F>> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn floats<F: Real>(&mut self, n: usize) -> Result<Vec<F>> {
        let width = F::BYTES as usize;
        let raw = self.take(n.checked_mul(width).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(width).map(F::read_le).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f32> {
        Checkpoint {
            meta: "{\"latent_dim\":3}".into(),
            networks: vec![
                ("encoder.0".into(), MlpParams::init(&[4, 6, 3], 1).unwrap()),
                ("head.0->1".into(), MlpParams::init(&[3, 5, 3], 2).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trips_bit_identically() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.write(&path).unwrap();
        assert_eq!(Checkpoint::<f32>::read(&path).unwrap(), ck);
        assert!(ck.network("head.0->1").is_some());
    }

    #[test]
    fn rejects_wrong_precision_and_truncation() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
    }
}
