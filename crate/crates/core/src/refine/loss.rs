//! Cosine geometry and the two contrastive objectives.

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// `⟨u,v⟩ / (‖u‖‖v‖)`, clamped to `[-1, 1]`. Zero-norm input is a domain error.
pub fn cosine_similarity<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!("length mismatch {} vs {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::Domain("cosine of a zero-norm vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).max(-F::one()).min(F::one()))
}

pub fn cosine_distance<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    Ok(F::one() - cosine_similarity(u, v)?)
}

/// `max(0, d(a,p) − d(a,n) + margin)` with cosine distance `d`.
pub fn triplet_loss<F: Scalar>(anchor: &[F], positive: &[F], negative: &[F], margin: F) -> Result<F> {
    let d_pos = cosine_distance(anchor, positive)?;
    let d_neg = cosine_distance(anchor, negative)?;
    Ok((d_pos - d_neg + margin).max(F::zero()))
}

/// `−log softmax(row)[target]`, shifted by the row maximum. The terms other
/// than the maximum go through `ln_1p` so that near-zero losses keep their
/// relative precision.
pub(crate) fn row_nll<F: Scalar>(row: &[F], target: usize) -> F {
    let (jmax, max) = row
        .iter()
        .copied()
        .enumerate()
        .fold((0, F::neg_infinity()), |best, (j, x)| if x > best.1 { (j, x) } else { best });
    let rest: F = row.iter().enumerate().filter(|&(j, _)| j != jmax).map(|(_, &x)| (x - max).exp()).sum();
    (max - row[target]) + rest.ln_1p()
}

/// Multiple-negatives ranking loss with in-batch negatives.
///
/// Row `i` scores `s_ij = scale · cos(aᵢ, pⱼ)` against every positive in the
/// batch; the loss is the mean over rows of `−log softmax(sᵢ)ᵢ`.
pub fn mnr_loss<F: Scalar, A: AsRef<[F]>, P: AsRef<[F]>>(anchors: &[A], positives: &[P], scale: F) -> Result<F> {
    if anchors.is_empty() || anchors.len() != positives.len() {
        return Err(Error::Domain(format!("mnr needs N ≥ 1 matched rows, got {} and {}", anchors.len(), positives.len())));
    }
    let n = anchors.len();
    let mut total = F::zero();
    let mut row = vec![F::zero(); n];
    for (i, a) in anchors.iter().enumerate() {
        for (j, p) in positives.iter().enumerate() {
            row[j] = scale * cosine_similarity(a.as_ref(), p.as_ref())?;
        }
        total += row_nll(&row, i);
    }
    Ok((total / F::of(n as f64)).max(F::zero()))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0f64, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        // 1 − 32/(√14·√77)
        let d = cosine_distance(&[1.0f64, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(d, 0.025_368_153_802_923_9, epsilon = 1e-12);
        assert!(cosine_similarity(&[0.0f64, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn triplet_examples() {
        let (a, p, n) = ([1.0f64, 0.0], [1.0, 0.0], [0.0, 1.0]);
        assert_eq!(triplet_loss(&a, &p, &n, 0.5).unwrap(), 0.0);
        assert_eq!(triplet_loss(&a, &n, &p, 0.5).unwrap(), 1.5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let l = triplet_loss(&a, &[h, h], &n, 0.8).unwrap();
        // max(0, (1 − 1/√2) − 1 + 0.8)
        assert_abs_diff_eq!(l, 0.092_893_218_813_452_5, epsilon = 1e-12);
    }

    #[test]
    fn mnr_examples() {
        assert_eq!(mnr_loss(&[[1.0f64, 2.0]], &[[3.0, -1.0]], 20.0).unwrap(), 0.0);
        let same = [[1.0f64, 0.0], [1.0, 0.0]];
        assert_abs_diff_eq!(mnr_loss(&same, &same, 1.0).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        let ortho = [[1.0f64, 0.0], [0.0, 1.0]];
        // −log(e²⁰/(e²⁰+1)) = log(1 + e⁻²⁰)
        let expected = (-20.0f64).exp().ln_1p();
        assert_abs_diff_eq!(mnr_loss(&ortho, &ortho, 20.0).unwrap(), expected, epsilon = 1e-18);
        assert!((expected - 2.061e-9).abs() < 1e-12);
        assert!(mnr_loss::<f64, [f64; 2], [f64; 2]>(&[], &[], 1.0).is_err());
        assert!(mnr_loss(&[[0.0f64, 0.0]], &[[1.0, 0.0]], 1.0).is_err());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn triplet_is_bounded(a in vec_strategy(6), p in vec_strategy(6), n in vec_strategy(6), m in 0.0f64..2.0) {
            let l = triplet_loss(&a, &p, &n, m).unwrap();
            prop_assert!(l >= 0.0 && l <= 2.0 + m + 1e-12);
        }

        #[test]
        fn mnr_is_bounded(rows in prop::collection::vec((vec_strategy(5), vec_strategy(5)), 1..8), scale in 0.1f64..40.0) {
            let (a, p): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            let l = mnr_loss(&a, &p, scale).unwrap();
            prop_assert!(l >= 0.0 && l <= 2.0 * scale + (a.len() as f64).ln() + 1e-9);
        }

        #[test]
        fn cosine_is_scale_invariant(u in vec_strategy(8), v in vec_strategy(8), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
            let diff = cosine_similarity(&u, &v).unwrap() - cosine_similarity(&scaled, &v).unwrap();
            prop_assert!(diff.abs() < 1e-6);
            let l1 = triplet_loss(&u, &v, &[1.0; 8], 0.3).unwrap();
            let l2 = triplet_loss(&scaled, &v, &[1.0; 8], 0.3).unwrap();
            prop_assert!((l1 - l2).abs() < 1e-6);
        }
    }
}
