use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::stochastics::SpdMatrix;
use crate::vst::asymptotic_mean;

/// Hierarchical prior `μ ~ N(α, Σ_p)`, `Σ ~ IW(Ψ, ν)`, `Σ_p ~ IW(Ψ_p, ν_p)`
/// on the transformed scale (dimension `C − 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPrior {
    pub alpha: DVector<f64>,
    pub psi: SpdMatrix,
    pub nu: f64,
    pub psi_p: SpdMatrix,
    pub nu_p: f64,
}

pub const DEFAULT_DOF: f64 = 5.0;

impl HierarchicalPrior {
    pub fn new(alpha: DVector<f64>, psi: SpdMatrix, nu: f64, psi_p: SpdMatrix, nu_p: f64) -> Result<Self> {
        let d = alpha.len();
        if d == 0 {
            return Err(Error::InvalidParameter("prior mean must be nonempty".into()));
        }
        if psi.dim() != d || psi_p.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "prior mean has dimension {d}, scale matrices are {}x{} and {}x{}",
                psi.dim(),
                psi.dim(),
                psi_p.dim(),
                psi_p.dim()
            )));
        }
        for dof in [nu, nu_p] {
            if !(dof > d as f64 - 1.0) || !dof.is_finite() {
                return Err(Error::InvalidDof { dof, dim: d });
            }
        }
        psi.cholesky("Psi")?;
        psi_p.cholesky("Psi_p")?;
        Ok(Self {
            alpha,
            psi,
            nu,
            psi_p,
            nu_p,
        })
    }

    /// Identity scales, `ν = ν_p = 5`, and `α` at the transformed image of
    /// the uniform share vector.
    pub fn default_for(categories: usize) -> Result<Self> {
        if categories < 2 {
            return Err(Error::InvalidParameter("need at least 2 categories".into()));
        }
        let uniform = vec![1.0 / categories as f64; categories];
        Self::with_alpha_shares(&uniform)
    }

    /// Default scales and degrees of freedom with `α` taken from a share
    /// vector (e.g. a previous election's vote shares), rescaled to sum
    /// to one and mapped to the transformed scale.
    pub fn with_alpha_shares(shares: &[f64]) -> Result<Self> {
        if shares.len() < 2 || shares.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "prior shares must be at least 2 nonnegative values".into(),
            ));
        }
        let total: f64 = shares.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("prior shares sum to zero".into()));
        }
        let scaled: Vec<f64> = shares.iter().map(|s| s / total).collect();
        let d = shares.len() - 1;
        Self::new(
            asymptotic_mean(&scaled),
            SpdMatrix::identity(d),
            DEFAULT_DOF,
            SpdMatrix::identity(d),
            DEFAULT_DOF,
        )
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `E[Σ_p]` when it exists (`ν_p > d + 1`), otherwise `Ψ_p` itself.
    pub fn sigma_p_center(&self) -> SpdMatrix {
        let d = self.dim() as f64;
        if self.nu_p > d + 1.0 {
            SpdMatrix::new(self.psi_p.matrix() / (self.nu_p - d - 1.0))
                .expect("scaled SPD matrix stays symmetric")
        } else {
            self.psi_p.clone()
        }
    }
}
