use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::weighted_qr;

/// Relative residual norm below which a column counts as a linear
/// combination of the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Named regressor columns of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// (X'WX)^{-1}, row-major.
    pub inverse_gram: Vec<f64>,
}

/// Minimizes Σ wᵢ (yᵢ − xᵢ'b)² by Householder QR of √W X.
pub fn wls_fit(design: &Design, y: &[f64], weights: &[f64]) -> Result<WlsFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("regression sample"));
    }
    if weights.len() != n || design.columns.iter().any(|c| c.len() != n) {
        return Err(Error::Invalid("design, outcome and weights differ in length".into()));
    }
    if design.n_cols() == 0 {
        return Err(Error::Invalid("design has no columns".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Invalid("regression weights must be positive".into()));
    }
    let qr = weighted_qr(&design.columns, y, weights, RANK_TOLERANCE).map_err(|bad| {
        Error::RankDeficient {
            columns: bad.into_iter().map(|j| design.names[j].clone()).collect(),
        }
    })?;
    let coefficients = qr.coefficients();
    let residuals = (0..n)
        .map(|i| {
            y[i] - design
                .columns
                .iter()
                .zip(&coefficients)
                .map(|(c, b)| c[i] * b)
                .sum::<f64>()
        })
        .collect();
    Ok(WlsFit {
        coefficients,
        residuals,
        inverse_gram: qr.inverse_gram(),
    })
}
