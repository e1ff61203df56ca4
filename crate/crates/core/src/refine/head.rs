use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::embedding::format::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};
use crate::util;

pub const MODEL_MAGIC: &[u8; 4] = b"SIA1";

/// Default latent dimension.
pub const DEFAULT_OUT_DIM: usize = 50;

/// The affine map `x ↦ Wx + b` shared by both branches of the Siamese pass.
///
/// There is exactly one parameter set; "both branches" are just two calls
/// to [`ProjectionHead::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead<F> {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    weights: Vec<F>,
    bias: Vec<F>,
}

impl<F: Scalar> ProjectionHead<F> {
    /// Fan-in uniform initialization in `[-1/√in_dim, 1/√in_dim]` with zero bias.
    pub fn init(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Argument("projection dimensions must be positive".into()));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut rng = util::rng(seed);
        let weights = (0..in_dim * out_dim).map(|_| F::of(rng.random_range(-bound..=bound))).collect();
        Ok(Self { in_dim, out_dim, weights, bias: vec![F::zero(); out_dim] })
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<F>, bias: Vec<F>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Argument("projection dimensions must be positive".into()));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Argument(format!(
                "parameter shapes ({}, {}) do not match {out_dim}×{in_dim}",
                weights.len(),
                bias.len()
            )));
        }
        if !all_finite(&weights) || !all_finite(&bias) {
            return Err(Error::Domain("projection parameters must be finite".into()));
        }
        Ok(Self { in_dim, out_dim, weights, bias })
    }

    /// `[I 0]`-style head: copies the first `min(in, out)` coordinates.
    pub fn identity(in_dim: usize, out_dim: usize) -> Result<Self> {
        let mut weights = vec![F::zero(); in_dim * out_dim];
        for r in 0..in_dim.min(out_dim) {
            weights[r * in_dim + r] = F::one();
        }
        Self::from_parts(in_dim, out_dim, weights, vec![F::zero(); out_dim])
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [F] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [F] {
        &mut self.bias
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| crate::scalar::dot(row, x) + b)
            .collect()
    }

    pub fn forward_f32(&self, x: &[f32]) -> Vec<F> {
        let x: Vec<F> = x.iter().map(|&v| F::of_f32(v)).collect();
        self.forward(&x)
    }

    pub fn cast<G: Scalar>(&self) -> ProjectionHead<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::of(x.to_f64_lossy())).collect();
        ProjectionHead { in_dim: self.in_dim, out_dim: self.out_dim, weights: conv(&self.weights), bias: conv(&self.bias) }
    }

    /// In-place `θ ← θ − lr·∇θ`.
    pub(crate) fn sgd_step(&mut self, grad_w: &[F], grad_b: &[F], lr: F) {
        for (w, g) in self.weights.iter_mut().zip(grad_w) {
            *w -= lr * *g;
        }
        for (b, g) in self.bias.iter_mut().zip(grad_b) {
            *b -= lr * *g;
        }
    }

    /// `SIA1` layout: magic, `u32` in_dim, `u32` out_dim, row-major `f32`
    /// weights, then `f32` bias, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = |d: usize| u32::try_from(d).map_err(|_| Error::Argument(format!("dimension {d} exceeds u32")));
        let mut buf = Vec::with_capacity(12 + 4 * (self.weights.len() + self.bias.len()));
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&dims(self.in_dim)?.to_le_bytes());
        buf.extend_from_slice(&dims(self.out_dim)?.to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::format(bytes.len() as u64, "model file shorter than header"));
        }
        if &bytes[..4] != MODEL_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"SIA1\""));
        }
        let in_dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let out_dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = (in_dim as u64 * out_dim as u64) + out_dim as u64;
        let expected = 12 + 4 * n;
        if bytes.len() as u64 != expected {
            return Err(Error::format(
                (bytes.len() as u64).min(expected),
                format!("expected {expected} bytes for a {out_dim}×{in_dim} head, found {}", bytes.len()),
            ));
        }
        let values: Vec<F> = bytes[12..]
            .chunks_exact(4)
            .map(|c| F::of_f32(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let (w, b) = values.split_at(in_dim * out_dim);
        Self::from_parts(in_dim, out_dim, w.to_vec(), b.to_vec()).map_err(|e| Error::format(12, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        write_atomic(path.as_ref(), &buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}
