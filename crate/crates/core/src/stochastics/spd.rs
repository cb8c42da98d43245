use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const SYMMETRY_RTOL: f64 = 1e-12;

/// A symmetric positive (semi-)definite matrix.
///
/// Construction checks shape and symmetry only; definiteness is checked
/// when a factorization is requested, under the jitter policy of
/// [`SpdMatrix::cholesky`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..m.nrows() {
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || !b.is_finite() || (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
            if !m[(i, i)].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite diagonal entry at {i}"
                )));
            }
        }
        Ok(Self(m))
    }

    /// Symmetrizes `m` as `(m + mᵀ)/2` before wrapping. For matrices that
    /// are symmetric up to floating-point drift from products.
    pub fn symmetrized(m: DMatrix<f64>) -> Result<Self> {
        let s = (&m + m.transpose()) * 0.5;
        Self::new(s)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self(DMatrix::identity(dim, dim) * scale)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("matrix rows must form a square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Cholesky factorization with a single jitter retry: on failure,
    /// `1e-10 · trace / dim` is added to the diagonal and the factorization
    /// attempted once more.
    pub fn cholesky(&self, label: &str) -> Result<Cholesky<f64, Dyn>> {
        cholesky_with_jitter(&self.0, label)
    }

    /// Lower factor `F` with `F Fᵀ = self`, allowing exact-zero rows and
    /// columns, which become point-mass directions.
    pub fn factor(&self, label: &str) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let live: Vec<usize> = (0..d)
            .filter(|&i| (0..d).any(|j| self.0[(i, j)] != 0.0))
            .collect();
        if live.len() == d {
            return Ok(cholesky_with_jitter(&self.0, label)?.l());
        }
        let mut out = DMatrix::zeros(d, d);
        if live.is_empty() {
            return Ok(out);
        }
        let sub = DMatrix::from_fn(live.len(), live.len(), |i, j| self.0[(live[i], live[j])]);
        let l = cholesky_with_jitter(&sub, label)?.l();
        for (a, &i) in live.iter().enumerate() {
            for (b, &j) in live.iter().enumerate() {
                out[(i, j)] = l[(a, b)];
            }
        }
        Ok(out)
    }
}

pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>, label: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch);
    }
    let d = m.nrows();
    let jitter = 1e-10 * m.trace() / d as f64;
    if jitter > 0.0 && jitter.is_finite() {
        let mut jittered = m.clone();
        for i in 0..d {
            jittered[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(jittered) {
            return Ok(ch);
        }
    }
    Err(Error::Factorization {
        matrix: label.to_string(),
    })
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SpdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
