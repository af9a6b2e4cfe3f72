use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Fitted parameters of a G-component Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl MixtureParams {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let g = weights.len();
        if g == 0 || means.len() != g || covariances.len() != g {
            return Err(Error::InvalidArgument("inconsistent component counts".into()));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d)
            || covariances.iter().any(|c| c.shape() != (d, d))
        {
            return Err(Error::InvalidArgument("inconsistent dimensions".into()));
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub fn g(&self) -> usize {
        self.weights.len()
    }

    pub fn d(&self) -> usize {
        self.means[0].len()
    }

    pub(crate) fn prepare(&self) -> Result<Prepared> {
        let p = self.d();
        let mut inv_chol = Vec::with_capacity(self.g() * p * p);
        let mut log_norm = Vec::with_capacity(self.g());
        let base = p as f64 * (2.0 * std::f64::consts::PI).ln();
        for (k, cov) in self.covariances.iter().enumerate() {
            // nalgebra is column-major; the matrix is symmetric so the buffer
            // doubles as row-major.
            let mut l: Vec<f64> = cov.as_slice().to_vec();
            if !linalg::cholesky_in_place(&mut l, p) {
                return Err(Error::Singular);
            }
            if linalg::chol_rcond(&l, p) <= f64::EPSILON {
                return Err(Error::Singular);
            }
            let log_det: f64 = 2.0 * (0..p).map(|i| l[i * p + i].ln()).sum::<f64>();
            let w = self.weights[k];
            let log_w = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
            log_norm.push(log_w - 0.5 * (base + log_det));
            // rows of L⁻¹, so the quadratic form is |L⁻¹(x − μ)|²
            let mut inv = vec![0.0; p * p];
            let mut e = vec![0.0; p];
            for c in 0..p {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[c] = 1.0;
                linalg::forward_solve(&l, p, &mut e);
                for r in c..p {
                    inv[r * p + c] = e[r];
                }
            }
            inv_chol.extend_from_slice(&inv);
        }
        Ok(Prepared {
            p,
            means: self.means.concat(),
            inv_chol,
            log_norm,
        })
    }
}

/// Inverse Cholesky factors and log normalizing constants ready for density
/// evaluation.
pub(crate) struct Prepared {
    p: usize,
    /// G×p, row-major.
    means: Vec<f64>,
    /// G blocks of p×p lower-triangular L⁻¹, row-major.
    inv_chol: Vec<f64>,
    log_norm: Vec<f64>,
}

impl Prepared {
    /// Writes log(π_k φ(x | μ_k, Σ_k)) for each component into `out`.
    #[inline]
    pub fn component_log_densities(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let p = self.p;
        let diff = &mut scratch[..p];
        for (((o, mu), inv), ln) in out
            .iter_mut()
            .zip(self.means.chunks_exact(p))
            .zip(self.inv_chol.chunks_exact(p * p))
            .zip(&self.log_norm)
        {
            for ((d, a), b) in diff.iter_mut().zip(x).zip(mu) {
                *d = a - b;
            }
            let mut quad = 0.0;
            for (r, row) in inv.chunks_exact(p).enumerate() {
                let y: f64 = row[..=r].iter().zip(&diff[..=r]).map(|(a, b)| a * b).sum();
                quad += y * y;
            }
            *o = ln - 0.5 * quad;
        }
    }

    /// Writes log(π_k φ(x_i | μ_k, Σ_k)) for every row into `out` and raises
    /// `max` to it elementwise, with `xc` holding the data column by column.
    /// `tmp` needs n entries.
    pub fn log_densities_cols(
        &self,
        k: usize,
        xc: &[f64],
        n: usize,
        tmp: &mut [f64],
        out: &mut [f64],
        max: &mut [f64],
    ) {
        let p = self.p;
        let mu = &self.means[k * p..(k + 1) * p];
        let inv = &self.inv_chol[k * p * p..(k + 1) * p * p];
        let ln = self.log_norm[k];
        let (tmp, out, max) = (&mut tmp[..n], &mut out[..n], &mut max[..n]);
        match p {
            1 => return fixed_log_densities::<1>(xc, n, mu, inv, ln, out, max),
            2 => return fixed_log_densities::<2>(xc, n, mu, inv, ln, out, max),
            3 => return fixed_log_densities::<3>(xc, n, mu, inv, ln, out, max),
            4 => return fixed_log_densities::<4>(xc, n, mu, inv, ln, out, max),
            _ => {}
        }
        for r in 0..p {
            let (a, m) = (inv[r * p], mu[0]);
            for (t, x) in tmp.iter_mut().zip(&xc[..n]) {
                *t = a * (x - m);
            }
            for c in 1..=r {
                let (a, m) = (inv[r * p + c], mu[c]);
                if a == 0.0 {
                    continue;
                }
                for (t, x) in tmp.iter_mut().zip(&xc[c * n..(c + 1) * n]) {
                    *t += a * (x - m);
                }
            }
            let first = r == 0;
            if r + 1 == p {
                for ((o, t), mx) in out.iter_mut().zip(tmp.iter()).zip(max.iter_mut()) {
                    let q = if first { t * t } else { *o + t * t };
                    *o = ln - 0.5 * q;
                    *mx = mx.max(*o);
                }
            } else if first {
                for (o, t) in out.iter_mut().zip(tmp.iter()) {
                    *o = t * t;
                }
            } else {
                for (o, t) in out.iter_mut().zip(tmp.iter()) {
                    *o += t * t;
                }
            }
        }
    }
}

/// Single-pass form of `Prepared::log_densities_cols` for a fixed small
/// dimension; same operations in the same order.
fn fixed_log_densities<const P: usize>(
    xc: &[f64],
    n: usize,
    mu: &[f64],
    inv: &[f64],
    ln: f64,
    out: &mut [f64],
    max: &mut [f64],
) {
    let cols: [&[f64]; P] = std::array::from_fn(|c| &xc[c * n..][..n]);
    let m: [f64; P] = std::array::from_fn(|c| mu[c]);
    let a: [[f64; P]; P] = std::array::from_fn(|r| std::array::from_fn(|c| inv[r * P + c]));
    let (out, max) = (&mut out[..n], &mut max[..n]);
    for i in 0..n {
        let d: [f64; P] = std::array::from_fn(|c| cols[c][i] - m[c]);
        let mut q = 0.0;
        for r in 0..P {
            let mut t = a[r][0] * d[0];
            for c in 1..=r {
                t += a[r][c] * d[c];
            }
            q = if r == 0 { t * t } else { q + t * t };
        }
        let v = ln - 0.5 * q;
        out[i] = v;
        max[i] = max[i].max(v);
    }
}

/// log Σ exp(v), stable for large magnitudes.
#[inline]
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, g: usize, p: usize) -> MixtureParams {
        let mut covs = Vec::new();
        let mut means = Vec::new();
        for _ in 0..g {
            let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            covs.push(&a * a.transpose() + DMatrix::identity(p, p) * 0.3);
            means.push((0..p).map(|_| rng.random_range(-2.0..2.0)).collect());
        }
        let w: Vec<f64> = (0..g).map(|_| rng.random_range(0.1..1.0)).collect();
        let t: f64 = w.iter().sum();
        MixtureParams::new(w.iter().map(|v| v / t).collect(), means, covs).unwrap()
    }

    #[test]
    fn column_densities_match_row_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 1..=6 {
            let (g, n) = (3, 37);
            let params = random_params(&mut rng, g, p);
            let prep = params.prepare().unwrap();
            let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-4.0..4.0)).collect();
            let xc = crate::linalg::transpose(&x, n, p);
            let mut tmp = vec![0.0; n];
            let mut max = vec![f64::NEG_INFINITY; n];
            let mut cols = vec![0.0; g * n];
            for (k, col) in cols.chunks_exact_mut(n).enumerate() {
                prep.log_densities_cols(k, &xc, n, &mut tmp, col, &mut max);
            }
            let mut scratch = vec![0.0; p];
            let mut row = vec![0.0; g];
            for i in 0..n {
                prep.component_log_densities(&x[i * p..(i + 1) * p], &mut scratch, &mut row);
                for k in 0..g {
                    assert!((cols[k * n + i] - row[k]).abs() < 1e-10, "p {p} row {i} comp {k}");
                }
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!((max[i] - m).abs() < 1e-10);
            }
        }
    }
}
