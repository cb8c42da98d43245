use nalgebra::{DMatrix, DVector};

use super::HierarchicalPrior;
use crate::error::{Error, Result};
use crate::stochastics::{
    cholesky_with_jitter, sample_inverse_wishart, standard_normal_vector, RngStream, SpdMatrix,
};
use crate::vst::TransformedObs;

/// Weighted sufficient statistics of the transformed batches, with
/// weights `wᵢ = nᵢ + 0.5`.
///
/// The scatter is stored about the weighted mean so that
/// `Σ wᵢ (Lᵢ − μ)(Lᵢ − μ)ᵀ = scatter + W (L̄ − μ)(L̄ − μ)ᵀ` stays accurate
/// for large total weight.
#[derive(Debug, Clone)]
pub struct ObsSummary {
    pub batches: usize,
    pub total_weight: f64,
    pub weighted_sum: DVector<f64>,
    pub weighted_mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

impl ObsSummary {
    pub fn new(dim: usize, data: &[TransformedObs]) -> Result<Self> {
        if let Some(o) = data.iter().find(|o| o.l.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "observation has dimension {}, model has {dim}",
                o.l.len()
            )));
        }
        let total_weight: f64 = data.iter().map(TransformedObs::weight).sum();
        let mut weighted_sum = DVector::zeros(dim);
        for o in data {
            weighted_sum.axpy(o.weight(), &o.l, 1.0);
        }
        let weighted_mean = if total_weight > 0.0 {
            &weighted_sum / total_weight
        } else {
            DVector::zeros(dim)
        };
        let mut scatter = DMatrix::zeros(dim, dim);
        for o in data {
            let r = &o.l - &weighted_mean;
            scatter.ger(o.weight(), &r, &r, 1.0);
        }
        Ok(Self {
            batches: data.len(),
            total_weight,
            weighted_sum,
            weighted_mean,
            scatter,
        })
    }

    /// `Σ wᵢ (Lᵢ − μ)(Lᵢ − μ)ᵀ`.
    pub fn residual_scatter(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.scatter.clone();
        if self.total_weight > 0.0 {
            let shift = &self.weighted_mean - mu;
            out.ger(self.total_weight, &shift, &shift, 1.0);
        }
        out
    }
}

/// `Σ | μ, data ~ IW(Ψ + Σ wᵢ (Lᵢ − μ)(Lᵢ − μ)ᵀ, ν + j)`.
pub fn sample_sigma_cond(
    mu: &DVector<f64>,
    data: &[TransformedObs],
    prior: &HierarchicalPrior,
    rng: &mut RngStream,
) -> Result<SpdMatrix> {
    let summary = ObsSummary::new(prior.dim(), data)?;
    sigma_cond(mu, &summary, prior, rng)
}

pub(crate) fn sigma_cond_params(
    mu: &DVector<f64>,
    summary: &ObsSummary,
    prior: &HierarchicalPrior,
) -> Result<(SpdMatrix, f64)> {
    let scale = SpdMatrix::symmetrized(prior.psi.matrix() + summary.residual_scatter(mu))?;
    Ok((scale, prior.nu + summary.batches as f64))
}

pub(crate) fn sigma_cond(
    mu: &DVector<f64>,
    summary: &ObsSummary,
    prior: &HierarchicalPrior,
    rng: &mut RngStream,
) -> Result<SpdMatrix> {
    let (scale, dof) = sigma_cond_params(mu, summary, prior)?;
    sample_inverse_wishart(&scale, dof, rng)
}

pub(crate) fn sigma_p_cond_params(mu: &DVector<f64>, prior: &HierarchicalPrior) -> Result<(SpdMatrix, f64)> {
    let r = mu - &prior.alpha;
    let scale = SpdMatrix::symmetrized(prior.psi_p.matrix() + &r * r.transpose())?;
    Ok((scale, prior.nu_p + 1.0))
}

/// `Σ_p | μ ~ IW(Ψ_p + (μ − α)(μ − α)ᵀ, ν_p + 1)`.
pub fn sample_sigma_p_cond(
    mu: &DVector<f64>,
    prior: &HierarchicalPrior,
    rng: &mut RngStream,
) -> Result<SpdMatrix> {
    if mu.len() != prior.dim() {
        return Err(Error::DimensionMismatch("mu vs prior".into()));
    }
    let (scale, dof) = sigma_p_cond_params(mu, prior)?;
    sample_inverse_wishart(&scale, dof, rng)
}

/// `μ | Σ, Σ_p, data ~ N(V⁻¹[Σ_p⁻¹ α + Σ⁻¹ Σ wᵢ Lᵢ], V⁻¹)` with
/// `V = Σ_p⁻¹ + (N_j + j/2) Σ⁻¹`.
pub fn sample_mu_cond(
    sigma: &SpdMatrix,
    sigma_p: &SpdMatrix,
    data: &[TransformedObs],
    prior: &HierarchicalPrior,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let summary = ObsSummary::new(prior.dim(), data)?;
    mu_cond(sigma, sigma_p, &summary, prior, rng)
}

/// Mean and precision-Cholesky of the conditional for μ.
pub(crate) fn mu_cond_params(
    sigma: &SpdMatrix,
    sigma_p: &SpdMatrix,
    summary: &ObsSummary,
    prior: &HierarchicalPrior,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = prior.dim();
    if sigma.dim() != d || sigma_p.dim() != d {
        return Err(Error::DimensionMismatch("covariance vs prior".into()));
    }
    let sigma_ch = sigma.cholesky("Sigma")?;
    let sigma_p_ch = sigma_p.cholesky("Sigma_p")?;
    let sigma_inv = sigma_ch.inverse();
    let sigma_p_inv = sigma_p_ch.inverse();

    let precision = &sigma_p_inv + &sigma_inv * summary.total_weight;
    let precision = (&precision + precision.transpose()) * 0.5;
    let rhs = sigma_p_ch.solve(&prior.alpha) + sigma_ch.solve(&summary.weighted_sum);
    let v_ch = cholesky_with_jitter(&precision, "V")?;
    Ok((v_ch.solve(&rhs), v_ch.l()))
}

pub(crate) fn mu_cond(
    sigma: &SpdMatrix,
    sigma_p: &SpdMatrix,
    summary: &ObsSummary,
    prior: &HierarchicalPrior,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let (mean, v_lower) = mu_cond_params(sigma, sigma_p, summary, prior)?;
    // V = L Lᵀ, so L⁻ᵀ z has covariance V⁻¹
    let z = standard_normal_vector(mean.len(), rng);
    let noise = v_lower
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Factorization { matrix: "V".into() })?;
    Ok(mean + noise)
}
