//! Linear toy encoder: project raw tokens, then L2-normalize each row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{dot, l2_normalize, TokenMatrix};

/// Trainable `d_in x d_out` projection, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    d_in: usize,
    d_out: usize,
    projection: Vec<f64>,
}

/// An encoded matrix together with the pre-normalization activations needed for backprop.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub raw: TokenMatrix,
    pub projected: TokenMatrix,
    pub normalized: TokenMatrix,
}

impl ToyEncoder {
    pub fn new(d_in: usize, d_out: usize, projection: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 || projection.len() != d_in * d_out {
            return Err(Error::Structural(format!(
                "projection of {} values does not match {d_in}x{d_out}",
                projection.len()
            )));
        }
        if projection.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("projection has non-finite entries".into()));
        }
        Ok(Self {
            d_in,
            d_out,
            projection,
        })
    }

    /// Gaussian init scaled by `1/sqrt(d_in)`.
    pub fn random(d_in: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        let projection = (0..d_in * d_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self {
            d_in,
            d_out,
            projection,
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut projection = vec![0.0; d * d];
        (0..d).for_each(|i| projection[i * d + i] = 1.0);
        Self {
            d_in: d,
            d_out: d,
            projection,
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            projection: vec![0.0; d_in * d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        &mut self.projection
    }

    /// Plain gradient-descent update.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) {
        debug_assert_eq!(grad.len(), self.projection.len());
        for (p, g) in self.projection.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }

    pub fn encode_full(&self, raw: &TokenMatrix) -> Result<Encoded> {
        if raw.dim() != self.d_in {
            return Err(Error::Usage(format!(
                "raw token dimension {} does not match encoder input {}",
                raw.dim(),
                self.d_in
            )));
        }
        let mut out = Vec::with_capacity(raw.len() * self.d_out);
        for row in raw.rows() {
            for j in 0..self.d_out {
                out.push(
                    (0..self.d_in)
                        .map(|i| row[i] * self.projection[i * self.d_out + j])
                        .sum(),
                );
            }
        }
        let projected = TokenMatrix::from_flat(self.d_out, out)?;
        let normalized = l2_normalize(&projected);
        Ok(Encoded {
            raw: raw.clone(),
            projected,
            normalized,
        })
    }

    pub fn encode(&self, raw: &TokenMatrix) -> Result<TokenMatrix> {
        Ok(self.encode_full(raw)?.normalized)
    }

    /// Accumulates `dL/dP` into `acc` given `dL/d(normalized)`.
    /// Zero rows are treated as constant and pass no gradient.
    pub fn backprop(&self, enc: &Encoded, grad_normalized: &TokenMatrix, acc: &mut [f64]) {
        for l in 0..enc.raw.len() {
            let u = enc.projected.row(l);
            let norm = dot(u, u).sqrt();
            if norm == 0.0 {
                continue;
            }
            let v = enc.normalized.row(l);
            let g = grad_normalized.row(l);
            let vg = dot(v, g);
            let x = enc.raw.row(l);
            for j in 0..self.d_out {
                let du = (g[j] - v[j] * vg) / norm;
                if du == 0.0 {
                    continue;
                }
                for i in 0..self.d_in {
                    acc[i * self.d_out + j] += x[i] * du;
                }
            }
        }
    }

    /// Writes `u32 LE header length | JSON header | d_in*d_out f64 LE`.
    pub fn save_checkpoint(&self, path: &Path, step: u64) -> Result<()> {
        let header = serde_json::to_vec(&CheckpointHeader {
            d_in: self.d_in,
            d_out: self.d_out,
            step,
        })?;
        let mut f = File::create(path)?;
        f.write_all(&(header.len() as u32).to_le_bytes())?;
        f.write_all(&header)?;
        for x in &self.projection {
            f.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
        if bytes.len() < 4 {
            return Err(bad("truncated checkpoint"));
        }
        let hlen = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(4..4 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        let data = &bytes[4 + hlen..];
        if data.len() != header.d_in * header.d_out * 8 {
            return Err(bad("payload size does not match header dims"));
        }
        let projection = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((Self::new(header.d_in, header.d_out, projection)?, header))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d_in: usize,
    pub d_out: usize,
    pub step: u64,
}
