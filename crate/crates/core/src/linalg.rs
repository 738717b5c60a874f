//! Small dense least-squares kernels.

use alloc::vec;
use alloc::vec::Vec;

/// Householder QR of a weighted design, with sequential rank detection.
pub(crate) struct WeightedQr {
    /// Upper-triangular factor, row-major `p × p`.
    r: Vec<f64>,
    p: usize,
    /// First `p` entries of Q'(√w y).
    qty: Vec<f64>,
}

/// Factorizes `diag(√w) X` column by column. A column whose norm, after
/// removing its projection on the earlier accepted columns, falls below
/// `rel_tol` times its own norm is reported as collinear. Returns the indices
/// of all collinear columns on failure.
pub(crate) fn weighted_qr(
    columns: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    rel_tol: f64,
) -> Result<WeightedQr, Vec<usize>> {
    let n = y.len();
    let sw: Vec<f64> = w.iter().map(|&x| libm::sqrt(x)).collect();
    let mut a: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| c.iter().zip(&sw).map(|(x, s)| x * s).collect())
        .collect();
    let mut b: Vec<f64> = y.iter().zip(&sw).map(|(x, s)| x * s).collect();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut accepted: Vec<usize> = Vec::new();
    let mut collinear = Vec::new();

    for j in 0..a.len() {
        // apply earlier reflections to this column
        for (k, v) in &reflectors {
            apply_reflector(v, *k, &mut a[j]);
        }
        let k = accepted.len();
        let full = norm(&a[j]);
        let tail = norm(&a[j][k..]);
        if k >= n || full == 0.0 || tail <= rel_tol * full {
            collinear.push(j);
            continue;
        }
        let alpha = if a[j][k] > 0.0 { -tail } else { tail };
        let mut v = a[j][k..].to_vec();
        v[0] -= alpha;
        let vn = norm(&v);
        for x in v.iter_mut() {
            *x /= vn;
        }
        apply_reflector(&v, k, &mut a[j]);
        apply_reflector(&v, k, &mut b);
        reflectors.push((k, v));
        accepted.push(j);
    }
    if !collinear.is_empty() {
        return Err(collinear);
    }
    let p = accepted.len();
    let mut r = vec![0.0; p * p];
    for (col, &j) in accepted.iter().enumerate() {
        for row in 0..=col {
            r[row * p + col] = a[j][row];
        }
    }
    Ok(WeightedQr {
        r,
        p,
        qty: b[..p].to_vec(),
    })
}

fn norm(v: &[f64]) -> f64 {
    // scaled to avoid overflow on large outcome columns
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let ss: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * libm::sqrt(ss)
}

fn apply_reflector(v: &[f64], offset: usize, x: &mut [f64]) {
    let tail = &mut x[offset..];
    let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
    for (t, vi) in tail.iter_mut().zip(v) {
        *t -= 2.0 * dot * vi;
    }
}

impl WeightedQr {
    pub(crate) fn coefficients(&self) -> Vec<f64> {
        let p = self.p;
        let mut beta = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = self.qty[i];
            for j in i + 1..p {
                s -= self.r[i * p + j] * beta[j];
            }
            beta[i] = s / self.r[i * p + i];
        }
        beta
    }

    /// (X'WX)^{-1} = R^{-1} R^{-T}, row-major.
    pub(crate) fn inverse_gram(&self) -> Vec<f64> {
        let p = self.p;
        // R^{-1}, upper triangular
        let mut rinv = vec![0.0; p * p];
        for col in 0..p {
            rinv[col * p + col] = 1.0 / self.r[col * p + col];
            for i in (0..col).rev() {
                let mut s = 0.0;
                for k in i + 1..=col {
                    s += self.r[i * p + k] * rinv[k * p + col];
                }
                rinv[i * p + col] = -s / self.r[i * p + i];
            }
        }
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let s: f64 = (j..p).map(|k| rinv[i * p + k] * rinv[j * p + k]).sum();
                out[i * p + j] = s;
                out[j * p + i] = s;
            }
        }
        out
    }
}

/// Row-major `p × p` product `a b c`.
pub(crate) fn sandwich(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut ab = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let aik = a[i * p + k];
            for j in 0..p {
                ab[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let x = ab[i * p + k];
            for j in 0..p {
                out[i * p + j] += x * a[k * p + j];
            }
        }
    }
    // exact symmetry
    for i in 0..p {
        for j in i + 1..p {
            let m = 0.5 * (out[i * p + j] + out[j * p + i]);
            out[i * p + j] = m;
            out[j * p + i] = m;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // y = 1 + 2x exactly
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let one = vec![1.0; 4];
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let qr = weighted_qr(&[one, x], &y, &[1.0, 2.0, 0.5, 1.0], 1e-10).ok().unwrap();
        let b = qr.coefficients();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_gram_matches_closed_form() {
        // X = [1 0; 1 1; 1 2], unit weights: X'X = [3 3; 3 5], inverse = [5 -3; -3 3]/6
        let qr = weighted_qr(
            &[vec![1.0; 3], vec![0.0, 1.0, 2.0]],
            &[0.0; 3],
            &[1.0; 3],
            1e-10,
        )
        .ok()
        .unwrap();
        let inv = qr.inverse_gram();
        let expect = [5.0 / 6.0, -0.5, -0.5, 0.5];
        for (a, b) in inv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reports_collinear_columns() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![2.0, 4.0, 6.0, 8.0];
        let c = vec![1.0, 0.0, 1.0, 0.0];
        let z = vec![0.0; 4];
        let err = weighted_qr(&[a, c, b, z], &[1.0; 4], &[1.0; 4], 1e-10)
            .err()
            .unwrap();
        assert_eq!(err, vec![2, 3]);
    }
}
