use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::wls::{Design, WlsFit};
use crate::error::{Error, Result};
use crate::linalg::sandwich;

/// Cluster-robust covariance with its small-sample correction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterVcov {
    /// Row-major `p × p`.
    pub matrix: Vec<f64>,
    pub p: usize,
    pub n_clusters: usize,
    /// (M/(M−1))·((N−1)/(N−K)).
    pub small_sample_factor: f64,
}

impl ClusterVcov {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.p + j]
    }

    pub fn se(&self, i: usize) -> f64 {
        libm::sqrt(self.get(i, i).max(0.0))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.p).map(<[f64]>::to_vec).collect()
    }
}

/// Sandwich estimator B⁻¹ (Σ_g s_g s_g') B⁻¹ with B = X'WX and cluster scores
/// s_g = Σ_{i∈g} wᵢ xᵢ eᵢ, scaled by (M/(M−1))·((N−1)/(N−K)).
///
/// K is the number of design columns plus `absorbed_dof`.
pub fn cluster_vcov<C: Ord>(
    design: &Design,
    fit: &WlsFit,
    weights: &[f64],
    clusters: &[C],
    absorbed_dof: usize,
) -> Result<ClusterVcov> {
    let n = fit.residuals.len();
    let p = design.n_cols();
    if clusters.len() != n || weights.len() != n {
        return Err(Error::Invalid("cluster ids, weights and residuals differ in length".into()));
    }
    let mut members: BTreeMap<&C, Vec<usize>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let m = members.len();
    if m < 2 {
        return Err(Error::TooFewClusters(m));
    }
    let k = p + absorbed_dof;
    if n <= k {
        return Err(Error::Degenerate(alloc::format!(
            "{n} observations leave no residual degrees of freedom for {k} parameters"
        )));
    }
    let mut meat = vec![0.0; p * p];
    let mut score = vec![0.0; p];
    for rows in members.values() {
        score.iter_mut().for_each(|s| *s = 0.0);
        for &i in rows {
            let we = weights[i] * fit.residuals[i];
            for (s, col) in score.iter_mut().zip(&design.columns) {
                *s += col[i] * we;
            }
        }
        for a in 0..p {
            for b in 0..p {
                meat[a * p + b] += score[a] * score[b];
            }
        }
    }
    let mf = m as f64;
    let factor = (mf / (mf - 1.0)) * ((n as f64 - 1.0) / (n - k) as f64);
    let mut matrix = sandwich(&fit.inverse_gram, &meat, p);
    matrix.iter_mut().for_each(|v| *v *= factor);
    Ok(ClusterVcov {
        matrix,
        p,
        n_clusters: m,
        small_sample_factor: factor,
    })
}

#[cfg(test)]
mod tests {
    use super::super::wls::wls_fit;
    use super::*;

    fn small() -> (Design, Vec<f64>, Vec<f64>) {
        let mut d = Design::default();
        d.push("const", vec![1.0; 6]);
        d.push("x", vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        (d, vec![0.1, 1.3, 1.7, 3.4, 3.9, 5.2], vec![1.0, 2.0, 1.0, 0.5, 1.0, 1.5])
    }

    #[test]
    fn single_cluster_is_an_error() {
        let (d, y, w) = small();
        let f = wls_fit(&d, &y, &w).unwrap();
        assert_eq!(
            cluster_vcov(&d, &f, &w, &[0u8; 6], 0),
            Err(Error::TooFewClusters(1))
        );
    }

    #[test]
    fn symmetric_with_nonnegative_diagonal() {
        let (d, y, w) = small();
        let f = wls_fit(&d, &y, &w).unwrap();
        let v = cluster_vcov(&d, &f, &w, &[0, 0, 1, 1, 2, 2], 0).unwrap();
        assert_eq!(v.n_clusters, 3);
        assert_eq!(v.get(0, 1), v.get(1, 0));
        assert!(v.get(0, 0) >= 0.0 && v.get(1, 1) >= 0.0);
        assert!((v.small_sample_factor - 1.5 * 5.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_weight_scaling_is_neutral() {
        let (d, y, w) = small();
        let w3: Vec<f64> = w.iter().map(|x| 3.0 * x).collect();
        let cl = [0, 0, 1, 1, 2, 2];
        let a = cluster_vcov(&d, &wls_fit(&d, &y, &w).unwrap(), &w, &cl, 0).unwrap();
        let b = cluster_vcov(&d, &wls_fit(&d, &y, &w3).unwrap(), &w3, &cl, 0).unwrap();
        for (x, z) in a.matrix.iter().zip(&b.matrix) {
            assert!((x - z).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
}
