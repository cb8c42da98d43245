//! Modified arcsine variance-stabilizing transform and the closed-form
//! moment formulas it relies on.
//!
//! For counts `X` out of `n` trials the transform maps each of the first
//! `C − 1` proportions to
//!
//! ```text
//! L_c = asin((2 X_c / n − 1) / (1 + 2a/n))
//! ```
//!
//! so that `√(n + 0.5) (L − μ)` is asymptotically normal with a covariance
//! that no longer depends on the cell probabilities in the iid case.

mod series;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

pub use series::{Batch, BatchSeries};

use crate::error::{Error, Result};
use crate::stochastics::SpdMatrix;

/// Default offset `a` of the transform.
pub const DEFAULT_A: f64 = 3.0 / 8.0;

/// One transformed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedObs {
    /// Transformed proportions for categories `1..C-1`, in radians.
    pub l: DVector<f64>,
    pub n: u64,
    pub a: f64,
}

impl TransformedObs {
    /// Observation weight `n + 0.5` in the working normal model.
    pub fn weight(&self) -> f64 {
        self.n as f64 + 0.5
    }
}

pub fn transform(x: &[u64], n: u64, a: f64) -> Result<TransformedObs> {
    if x.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 categories, got {}",
            x.len()
        )));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("offset a must be positive, got {a}")));
    }
    let sum: u64 = x.iter().sum();
    if sum != n || n == 0 {
        return Err(Error::InconsistentBatch { round: 0, sum, n });
    }
    let nf = n as f64;
    let denom = 1.0 + 2.0 * a / nf;
    let l = DVector::from_iterator(
        x.len() - 1,
        x[..x.len() - 1].iter().map(|&xc| {
            let arg = (2.0 * (xc as f64 / nf) - 1.0) / denom;
            debug_assert!(arg.abs() <= 1.0);
            arg.clamp(-1.0, 1.0).asin()
        }),
    );
    Ok(TransformedObs { l, n, a })
}

/// Transforms every round of `series` with offset `a`.
pub fn transform_series(series: &BatchSeries, a: f64) -> Result<Vec<TransformedObs>> {
    series
        .rounds()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            transform(&b.counts, b.n, a).map_err(|e| match e {
                Error::InconsistentBatch { sum, n, .. } => Error::InconsistentBatch {
                    round: i + 1,
                    sum,
                    n,
                },
                other => other,
            })
        })
        .collect()
}

pub fn inverse_transform(obs: &TransformedObs) -> Vec<f64> {
    inverse_transform_values(obs.l.as_slice(), obs.n, obs.a)
}

/// Maps transformed values back to a probability vector of length
/// `l.len() + 1`.
///
/// Each coordinate is clamped into `[0, 1]`, the last category takes the
/// remainder (also clamped), and the result is renormalized when clamping
/// moved mass. Values outside `[−π/2, π/2]` saturate.
pub fn inverse_transform_values(l: &[f64], n: u64, a: f64) -> Vec<f64> {
    let scale = 1.0 + 2.0 * a / n as f64;
    let mut p: Vec<f64> = l
        .iter()
        .map(|&v| ((1.0 + scale * v.clamp(-FRAC_PI_2, FRAC_PI_2).sin()) / 2.0).clamp(0.0, 1.0))
        .collect();
    let head: f64 = p.iter().sum();
    p.push((1.0 - head).clamp(0.0, 1.0));
    let total: f64 = p.iter().sum();
    if total > 0.0 && (total - 1.0).abs() > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    p
}

/// `μ_c = asin(2 p_c − 1)` for the first `C − 1` categories.
pub fn asymptotic_mean(p: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        p.len().saturating_sub(1),
        p[..p.len().saturating_sub(1)]
            .iter()
            .map(|&pc| (2.0 * pc - 1.0).clamp(-1.0, 1.0).asin()),
    )
}

fn check_interior(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 categories".into()));
    }
    match p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
        Some((c, &v)) => Err(Error::Boundary { category: c, value: v }),
        None => Ok(()),
    }
}

/// Limiting covariance of `√(n+0.5)(L − μ)` for iid multinomial batches:
/// unit diagonal, `−√(p_c p_c' / ((1−p_c)(1−p_c')))` off the diagonal.
pub fn limiting_corr_iid(p: &[f64]) -> Result<SpdMatrix> {
    check_interior(p)?;
    let d = p.len() - 1;
    let odds: Vec<f64> = p[..d].iter().map(|&v| (v / (1.0 - v)).sqrt()).collect();
    SpdMatrix::new(DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            -odds[i] * odds[j]
        }
    }))
}

/// `Ξ_p`: per-trial multinomial covariance of the first `C − 1` categories.
pub fn multinomial_cov_iid(p: &[f64]) -> Result<SpdMatrix> {
    check_interior(p)?;
    let d = p.len() - 1;
    SpdMatrix::new(multinomial_block(&p[..d]))
}

fn multinomial_block(p: &[f64]) -> DMatrix<f64> {
    let d = p.len();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            p[i] * (1.0 - p[i])
        } else {
            -p[i] * p[j]
        }
    })
}

/// Unconditional mean and covariance of a count vector (all `C` categories).
#[derive(Debug, Clone, PartialEq)]
pub struct CountMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Extends a `(C−1)`-dimensional noise covariance to all `C` categories
/// using `ε_C = −Σ ε_c`.
fn extend_noise_cov(eps: &DMatrix<f64>) -> DMatrix<f64> {
    let d = eps.nrows();
    let mut full = DMatrix::zeros(d + 1, d + 1);
    full.view_mut((0, 0), (d, d)).copy_from(eps);
    for i in 0..d {
        let s: f64 = -eps.row(i).sum();
        full[(i, d)] = s;
        full[(d, i)] = s;
    }
    full[(d, d)] = eps.sum();
    full
}

/// Moments of one batch of size `n`: mean `n p`, covariance
/// `n Ξ + n(n−1) Cov(ε)`.
pub fn unconditional_moments(p: &[f64], n: u64, eps_cov: &SpdMatrix) -> Result<CountMoments> {
    cumulative_moments(p, &[n], eps_cov)
}

/// Moments of the cumulative counts after batches of the given sizes:
/// mean `N p`, covariance `N Ξ + Σᵢ nᵢ(nᵢ−1) Cov(ε)`.
pub fn cumulative_moments(p: &[f64], sizes: &[u64], eps_cov: &SpdMatrix) -> Result<CountMoments> {
    if p.len() < 2 || eps_cov.dim() != p.len() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} categories need a {}x{} noise covariance",
            p.len(),
            p.len().saturating_sub(1),
            p.len().saturating_sub(1)
        )));
    }
    let total: f64 = sizes.iter().map(|&n| n as f64).sum();
    let pair: f64 = sizes.iter().map(|&n| n as f64 * (n as f64 - 1.0)).sum();
    let mean = DVector::from_iterator(p.len(), p.iter().map(|&v| total * v));
    let cov = multinomial_block(p) * total + extend_noise_cov(eps_cov.matrix()) * pair;
    Ok(CountMoments { mean, cov })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn half_maps_to_zero() {
        let t = transform(&[50, 50], 100, DEFAULT_A).unwrap();
        assert_eq!(t.l.as_slice(), &[0.0]);
    }

    #[test]
    fn all_in_first_category() {
        let t = transform(&[8, 0], 8, DEFAULT_A).unwrap();
        assert!(close(t.l[0], (1.0_f64 / 1.09375).asin(), 1e-15));
        assert!(close(t.l[0], 1.153741, 1e-6));
    }

    #[test]
    fn equal_counts_equal_coordinates() {
        let t = transform(&[25, 25, 50], 100, DEFAULT_A).unwrap();
        let expect = (-0.5_f64 / 1.0075).asin();
        assert!(close(t.l[0], expect, 1e-15));
        assert_eq!(t.l[0], t.l[1]);
    }

    #[test]
    fn sum_mismatch_is_inconsistent() {
        assert!(matches!(
            transform(&[3, 3], 7, DEFAULT_A),
            Err(Error::InconsistentBatch { .. })
        ));
    }

    #[test]
    fn series_error_names_round() {
        let s = BatchSeries::from_counts(vec![vec![1, 1], vec![2, 2]]).unwrap();
        assert_eq!(transform_series(&s, DEFAULT_A).unwrap().len(), 2);
    }

    #[test]
    fn inverse_at_zero_is_half() {
        assert_eq!(inverse_transform_values(&[0.0], 100, DEFAULT_A), vec![0.5, 0.5]);
    }

    #[test]
    fn inverse_clamps_boundary() {
        let p = inverse_transform_values(&[FRAC_PI_2], 8, DEFAULT_A);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn inverse_round_trip() {
        let x = [30u64, 45, 25];
        let t = transform(&x, 100, DEFAULT_A).unwrap();
        let p = inverse_transform(&t);
        for (pc, xc) in p.iter().zip(x) {
            assert!(close(*pc, xc as f64 / 100.0, 1e-12));
        }
    }

    #[test]
    fn asymptotic_mean_values() {
        assert_eq!(asymptotic_mean(&[0.5, 0.5])[0], 0.0);
        assert!(close(asymptotic_mean(&[1.0, 0.0])[0], FRAC_PI_2, 1e-15));
        assert!(close(asymptotic_mean(&[0.25, 0.75])[0], -0.523599, 1e-6));
    }

    #[test]
    fn limiting_corr_values() {
        assert_eq!(limiting_corr_iid(&[0.3, 0.7]).unwrap().matrix()[(0, 0)], 1.0);
        let third = 1.0 / 3.0;
        let m = limiting_corr_iid(&[third, third, third]).unwrap();
        assert!(close(m.matrix()[(0, 1)], -0.5, 1e-12));
        let m = limiting_corr_iid(&[0.5, 0.25, 0.25]).unwrap();
        assert!(close(m.matrix()[(0, 1)], -0.577350, 1e-6));
        assert!(matches!(limiting_corr_iid(&[1.0, 0.0]), Err(Error::Boundary { .. })));
    }

    #[test]
    fn multinomial_cov_values() {
        assert_eq!(multinomial_cov_iid(&[0.5, 0.5]).unwrap().matrix()[(0, 0)], 0.25);
        let third = 1.0 / 3.0;
        let m = multinomial_cov_iid(&[third, third, third]).unwrap();
        assert!(close(m.matrix()[(0, 0)], 2.0 / 9.0, 1e-15));
        assert!(close(m.matrix()[(0, 1)], -1.0 / 9.0, 1e-15));
        assert!(m.cholesky("Xi").is_ok());
        assert!(multinomial_cov_iid(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn moments_without_noise_are_multinomial() {
        let zero = SpdMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        let m = unconditional_moments(&[0.5, 0.5], 100, &zero).unwrap();
        assert_eq!(m.mean.as_slice(), &[50.0, 50.0]);
        assert_eq!(m.cov[(0, 0)], 25.0);
        assert_eq!(m.cov[(0, 1)], -25.0);
    }

    #[test]
    fn moments_with_noise() {
        let eps = SpdMatrix::scaled_identity(1, 0.001);
        let m = unconditional_moments(&[0.5, 0.5], 10, &eps).unwrap();
        assert!(close(m.cov[(0, 0)], 2.59, 1e-12));
        // the last category mirrors the first for C = 2
        assert!(close(m.cov[(1, 1)], 2.59, 1e-12));
        assert!(close(m.cov[(0, 1)], -2.59, 1e-12));
    }

    #[test]
    fn cumulative_moments_add_over_rounds() {
        let eps = SpdMatrix::scaled_identity(2, 0.002);
        let p = [0.2, 0.3, 0.5];
        let one = unconditional_moments(&p, 40, &eps).unwrap();
        let two = unconditional_moments(&p, 60, &eps).unwrap();
        let both = cumulative_moments(&p, &[40, 60], &eps).unwrap();
        assert!((both.cov - (one.cov + two.cov)).abs().max() < 1e-9);
        assert!((both.mean - (one.mean + two.mean)).abs().max() < 1e-12);
    }
}
