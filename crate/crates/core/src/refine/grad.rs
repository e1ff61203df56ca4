//! Analytic gradients of both losses through cosine similarity and the
//! affine head.
//!
//! For latents `u, v` with `s = cos(u, v)`:
//! `∂s/∂u = (v̂ − s·û) / ‖u‖`. A latent gradient `g` for input `x` adds
//! `g xᵀ` to `∂L/∂W` and `g` to `∂L/∂b`.

use super::head::ProjectionHead;
use super::loss::row_nll;
use super::train::{LossKind, TrainingConfig};
use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// Loss value and parameter gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub loss: F,
    /// Row-major, same layout as [`ProjectionHead::weights`].
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Gradients<F> {
    fn zeros(head: &ProjectionHead<F>) -> Self {
        Self { loss: F::zero(), weights: vec![F::zero(); head.weights().len()], bias: vec![F::zero(); head.out_dim()] }
    }

    fn accumulate(&mut self, g_latent: &[F], x: &[F]) {
        let in_dim = x.len();
        for (r, &g) in g_latent.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            self.bias[r] += g;
            for (w, &xc) in self.weights[r * in_dim..(r + 1) * in_dim].iter_mut().zip(x) {
                *w += g * xc;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TripletInput<'a, F> {
    pub anchor: &'a [F],
    pub positive: &'a [F],
    pub negative: &'a [F],
}

/// Raw (pre-head) input vectors for one training batch.
#[derive(Debug, Clone)]
pub enum BatchInput<'a, F> {
    Triplets(Vec<TripletInput<'a, F>>),
    Pairs { anchors: Vec<&'a [F]>, positives: Vec<&'a [F]> },
}

struct Latent<F> {
    norm: F,
    unit: Vec<F>,
}

fn latent<F: Scalar>(head: &ProjectionHead<F>, x: &[F]) -> Result<Latent<F>> {
    if x.len() != head.in_dim() {
        return Err(Error::Domain(format!("input of length {} for head with in_dim {}", x.len(), head.in_dim())));
    }
    let z = head.forward(x);
    let n = norm(&z);
    if n == F::zero() || !n.is_finite() {
        return Err(Error::Domain("latent vector has zero or non-finite norm".into()));
    }
    Ok(Latent { norm: n, unit: z.iter().map(|&v| v / n).collect() })
}

/// `coef · ∂cos(u,v)/∂u`, added into `out`.
fn add_cos_grad<F: Scalar>(out: &mut [F], u: &Latent<F>, v: &Latent<F>, cos: F, coef: F) {
    let k = coef / u.norm;
    for ((o, &vu), &uu) in out.iter_mut().zip(&v.unit).zip(&u.unit) {
        *o += k * (vu - cos * uu);
    }
}

/// Mean triplet loss over the batch and its gradient. Triplets with a
/// non-positive hinge argument contribute nothing.
pub fn triplet_gradients<F: Scalar>(
    head: &ProjectionHead<F>,
    batch: &[TripletInput<'_, F>],
    margin: F,
) -> Result<Gradients<F>> {
    if batch.is_empty() {
        return Err(Error::Domain("empty triplet batch".into()));
    }
    let mut grads = Gradients::zeros(head);
    let inv = F::one() / F::of(batch.len() as f64);
    let out_dim = head.out_dim();
    for t in batch {
        let (a, p, n) = (latent(head, t.anchor)?, latent(head, t.positive)?, latent(head, t.negative)?);
        let s_ap = dot(&a.unit, &p.unit);
        let s_an = dot(&a.unit, &n.unit);
        let hinge = s_an - s_ap + margin;
        if hinge <= F::zero() {
            continue;
        }
        grads.loss += hinge * inv;
        let mut ga = vec![F::zero(); out_dim];
        let mut gp = vec![F::zero(); out_dim];
        let mut gn = vec![F::zero(); out_dim];
        add_cos_grad(&mut ga, &a, &n, s_an, inv);
        add_cos_grad(&mut ga, &a, &p, s_ap, -inv);
        add_cos_grad(&mut gp, &p, &a, s_ap, -inv);
        add_cos_grad(&mut gn, &n, &a, s_an, inv);
        grads.accumulate(&ga, t.anchor);
        grads.accumulate(&gp, t.positive);
        grads.accumulate(&gn, t.negative);
    }
    Ok(grads)
}

/// Mean MNR loss over the batch and its gradient. With
/// `Gᵢⱼ = (softmaxᵢⱼ − δᵢⱼ)·scale/N`, `∂L/∂aᵢ = Σⱼ Gᵢⱼ ∂cosᵢⱼ/∂aᵢ` and
/// `∂L/∂pⱼ = Σᵢ Gᵢⱼ ∂cosᵢⱼ/∂pⱼ`.
pub fn mnr_gradients<F: Scalar>(
    head: &ProjectionHead<F>,
    anchors: &[&[F]],
    positives: &[&[F]],
    scale: F,
) -> Result<Gradients<F>> {
    let n = anchors.len();
    if n == 0 || n != positives.len() {
        return Err(Error::Domain(format!("mnr needs N ≥ 1 matched rows, got {n} and {}", positives.len())));
    }
    let a: Vec<Latent<F>> = anchors.iter().map(|x| latent(head, x)).collect::<Result<_>>()?;
    let p: Vec<Latent<F>> = positives.iter().map(|x| latent(head, x)).collect::<Result<_>>()?;
    let inv_n = F::one() / F::of(n as f64);
    let out_dim = head.out_dim();

    let mut grads = Gradients::zeros(head);
    let mut ga = vec![vec![F::zero(); out_dim]; n];
    let mut gp = vec![vec![F::zero(); out_dim]; n];
    let mut cos = vec![F::zero(); n];
    let mut row = vec![F::zero(); n];
    for i in 0..n {
        for j in 0..n {
            cos[j] = dot(&a[i].unit, &p[j].unit);
            row[j] = scale * cos[j];
        }
        grads.loss += row_nll(&row, i) * inv_n;
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = row.iter().map(|&s| (s - max).exp()).collect();
        let total: F = exps.iter().copied().sum();
        for j in 0..n {
            let indicator = if i == j { F::one() } else { F::zero() };
            let g = (exps[j] / total - indicator) * scale * inv_n;
            add_cos_grad(&mut ga[i], &a[i], &p[j], cos[j], g);
            add_cos_grad(&mut gp[j], &p[j], &a[i], cos[j], g);
        }
    }
    for i in 0..n {
        grads.accumulate(&ga[i], anchors[i]);
        grads.accumulate(&gp[i], positives[i]);
    }
    Ok(grads)
}

/// Dispatches on the configured loss. The batch shape must match it.
pub fn gradients<F: Scalar>(batch: &BatchInput<'_, F>, head: &ProjectionHead<F>, config: &TrainingConfig) -> Result<Gradients<F>> {
    match (config.loss, batch) {
        (LossKind::Triplet, BatchInput::Triplets(t)) => triplet_gradients(head, t, F::of(config.margin)),
        (LossKind::Mnr, BatchInput::Pairs { anchors, positives }) => {
            mnr_gradients(head, anchors, positives, F::of(config.scale))
        }
        (kind, _) => Err(Error::Argument(format!("batch shape does not match {kind:?} loss"))),
    }
}
