use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, Gamma, StandardNormal};

use super::{RngStream, SpdMatrix};
use crate::error::{Error, Result};

/// Proposal budget for one truncated-normal draw.
pub const TRUNCATION_BUDGET: usize = 1_000_000;

const SIMPLEX_TOL: f64 = 1e-9;

pub fn standard_normal_vector(dim: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// `mean + F z` with `F Fᵀ = cov`. Exact-zero rows/columns of `cov` are
/// point masses at the corresponding mean coordinate.
pub fn sample_mvn(mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut RngStream) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let factor = cov.factor("cov")?;
    Ok(mean + factor * standard_normal_vector(mean.len(), rng))
}

/// Draw `S` with `S⁻¹ ~ Wishart(scale⁻¹, dof)` via the Bartlett decomposition.
///
/// With `scale = U Uᵀ` and Bartlett factor `A` (lower, `A_ii² ~ χ²(dof − i)`,
/// standard normal below the diagonal), `S = (U A⁻ᵀ)(U A⁻ᵀ)ᵀ`. Real-valued
/// `dof > dim − 1` is accepted.
pub fn sample_inverse_wishart(scale: &SpdMatrix, dof: f64, rng: &mut RngStream) -> Result<SpdMatrix> {
    let d = scale.dim();
    if !(dof > d as f64 - 1.0) || !dof.is_finite() {
        return Err(Error::InvalidDof { dof, dim: d });
    }
    let u = scale.cholesky("inverse-Wishart scale")?.l();
    let a = bartlett_factor(d, dof, rng)?;
    let a_inv_t = a
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Factorization {
            matrix: "Bartlett factor".into(),
        })?;
    let b = u * a_inv_t;
    SpdMatrix::symmetrized(&b * b.transpose())
}

fn bartlett_factor(d: usize, dof: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(dof - i as f64)
            .map_err(|_| Error::InvalidDof { dof, dim: d })?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(a)
}

/// Gamma-normalization Dirichlet sampler.
pub fn sample_dirichlet(conc: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if conc.is_empty() {
        return Err(Error::Empty("dirichlet concentration".into()));
    }
    let gammas = conc
        .iter()
        .map(|&a| {
            if a > 0.0 && a.is_finite() {
                Gamma::new(a, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))
            } else {
                Err(Error::InvalidParameter(format!(
                    "dirichlet concentration must be positive, got {a}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    // underflow to an exact zero is possible for tiny concentrations; redraw
    for _ in 0..1000 {
        let g: Vec<f64> = gammas.iter().map(|d| d.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 && g.iter().all(|&x| x > 0.0) {
            return Ok(g.into_iter().map(|x| x / total).collect());
        }
    }
    Err(Error::InvalidParameter(
        "dirichlet concentrations too small to produce an interior draw".into(),
    ))
}

/// Checks `probs` against the simplex (tolerance 1e-9) and returns a
/// renormalized copy with tiny negatives set to zero.
pub fn normalize_probs(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(Error::Empty("probability vector".into()));
    }
    let mut out = Vec::with_capacity(probs.len());
    for (c, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < -SIMPLEX_TOL {
            return Err(Error::InvalidParameter(format!(
                "probability {p} at category {c} is negative"
            )));
        }
        out.push(p.max(0.0));
    }
    let total: f64 = out.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL.max(1e-9 * probs.len() as f64) {
        return Err(Error::InvalidParameter(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial(n: u64, probs: &[f64], rng: &mut RngStream) -> Result<Vec<u64>> {
    let probs = normalize_probs(probs)?;
    Ok(multinomial_unchecked(n, &probs, rng))
}

pub(crate) fn multinomial_unchecked(n: u64, probs: &[f64], rng: &mut RngStream) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let Some(last) = probs.iter().rposition(|&p| p > 0.0) else {
        return counts;
    };
    let mut left_n = n;
    let mut left_mass = 1.0_f64;
    for c in 0..last {
        if left_n == 0 {
            break;
        }
        let q = if left_mass > 0.0 {
            (probs[c] / left_mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let x = if q <= 0.0 {
            0
        } else if q >= 1.0 {
            left_n
        } else {
            Binomial::new(left_n, q)
                .expect("binomial parameters validated")
                .sample(rng)
        };
        counts[c] = x;
        left_n -= x;
        left_mass -= probs[c];
    }
    counts[last] += left_n;
    counts
}

/// Draw `ε ~ N(0, cov)` conditioned on the cell probabilities `p + (ε, −Σε)`
/// lying in `[0, 1]`, by rejection.
pub fn sample_truncated_mvn_on_simplex_support(
    p: &[f64],
    cov: &SpdMatrix,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    sample_truncated_with_budget(p, cov, TRUNCATION_BUDGET, rng)
}

pub fn sample_truncated_with_budget(
    p: &[f64],
    cov: &SpdMatrix,
    budget: usize,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let factor = TruncatedSimplexNoise::new(p, cov)?;
    factor.sample(budget, rng)
}

/// Prepared truncated sampler: the covariance factor is computed once and
/// reused across draws.
#[derive(Debug, Clone)]
pub struct TruncatedSimplexNoise {
    p: Vec<f64>,
    factor: DMatrix<f64>,
}

impl TruncatedSimplexNoise {
    pub fn new(p: &[f64], cov: &SpdMatrix) -> Result<Self> {
        if p.len() < 2 || cov.dim() != p.len() - 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} categories need a {}x{} covariance, got {}x{}",
                p.len(),
                p.len().saturating_sub(1),
                p.len().saturating_sub(1),
                cov.dim(),
                cov.dim()
            )));
        }
        if let Some((c, &v)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Boundary { category: c, value: v });
        }
        Ok(Self {
            p: p.to_vec(),
            factor: cov.factor("noise covariance")?,
        })
    }

    pub fn in_support(&self, eps: &DVector<f64>) -> bool {
        let mut sum = 0.0;
        for (c, e) in eps.iter().enumerate() {
            let q = self.p[c] + e;
            if !(0.0..=1.0).contains(&q) {
                return false;
            }
            sum += e;
        }
        let last = self.p[self.p.len() - 1] - sum;
        (0.0..=1.0).contains(&last)
    }

    pub fn sample(&self, budget: usize, rng: &mut RngStream) -> Result<DVector<f64>> {
        let d = self.factor.nrows();
        let mut z = DVector::zeros(d);
        let mut eps = DVector::zeros(d);
        for _ in 0..budget {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            eps.gemv(1.0, &self.factor, &z, 0.0);
            if self.in_support(&eps) {
                return Ok(eps);
            }
        }
        Err(Error::SupportTooTight {
            attempts: budget,
            accepted: 0,
            acceptance_rate: 0.0,
        })
    }
}
