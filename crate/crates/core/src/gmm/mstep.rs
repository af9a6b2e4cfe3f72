//! Constrained maximum-likelihood updates for each covariance model.
//!
//! Every model starts from the weighted scatter matrices
//! W_k = Σ_i z_ik (x_i − μ_k)(x_i − μ_k)ᵀ and maps them to covariances obeying
//! the model's equality pattern. VEI and VEV have no closed form; they
//! alternate volume and shape updates, warm-started from the previous shape
//! so each M-step never lowers the expected complete-data log-likelihood.

use nalgebra::{DMatrix, SymmetricEigen};

use super::model::CovarianceModel;
use super::params::MixtureParams;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

const MIN_MASS: f64 = 1e-10;
pub(crate) const INNER_MAX_ITER: usize = 20;
pub(crate) const INNER_TOL: f64 = 1e-8;

pub(crate) struct Sufficient {
    pub nk: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub scatter: Vec<DMatrix<f64>>,
}

/// Weighted counts, means and scatter matrices from column-wise data `xc`
/// (p columns of n) and responsibilities `zc` (G columns of n). Off-diagonal
/// scatter is left at zero unless `full`.
pub(crate) fn sufficient_cols(xc: &[f64], n: usize, p: usize, zc: &[f64], g: usize, full: bool) -> Result<Sufficient> {
    let mut nk = vec![0.0; g];
    let mut means = vec![vec![0.0; p]; g];
    let mut scatter = Vec::with_capacity(g);
    for k in 0..g {
        let z = &zc[k * n..(k + 1) * n];
        let m = linalg::sum(z);
        if !(m >= MIN_MASS) {
            return Err(Error::ComponentCollapse { component: k, mass: m });
        }
        nk[k] = m;
        if let Some((mu, w)) = match p {
            1 => Some(fixed_moments::<1>(xc, n, z, m, full)),
            2 => Some(fixed_moments::<2>(xc, n, z, m, full)),
            3 => Some(fixed_moments::<3>(xc, n, z, m, full)),
            4 => Some(fixed_moments::<4>(xc, n, z, m, full)),
            _ => None,
        } {
            means[k] = mu;
            scatter.push(w);
            continue;
        }
        let mu: Vec<f64> = (0..p).map(|j| linalg::dot(z, &xc[j * n..(j + 1) * n]) / m).collect();
        let mut w = DMatrix::zeros(p, p);
        for r in 0..p {
            for c in r..if full { p } else { r + 1 } {
                let v = linalg::centered_cross(z, &xc[r * n..(r + 1) * n], mu[r], &xc[c * n..(c + 1) * n], mu[c]);
                w[(r, c)] = v;
                w[(c, r)] = v;
            }
        }
        means[k] = mu;
        scatter.push(w);
    }
    Ok(Sufficient { nk, means, scatter })
}

/// Weighted mean and scatter of one component for a fixed small dimension,
/// each in a single pass over the rows.
fn fixed_moments<const P: usize>(xc: &[f64], n: usize, z: &[f64], mass: f64, full: bool) -> (Vec<f64>, DMatrix<f64>) {
    let cols: [&[f64]; P] = std::array::from_fn(|c| &xc[c * n..][..n]);
    let z = &z[..n];
    let mut sums = [0.0; P];
    for i in 0..n {
        for c in 0..P {
            sums[c] += z[i] * cols[c][i];
        }
    }
    let mu: [f64; P] = std::array::from_fn(|c| sums[c] / mass);
    let mut acc = [[0.0; P]; P];
    for i in 0..n {
        let d: [f64; P] = std::array::from_fn(|c| cols[c][i] - mu[c]);
        for r in 0..P {
            let wr = z[i] * d[r];
            if full {
                for c in r..P {
                    acc[r][c] += wr * d[c];
                }
            } else {
                acc[r][r] += wr * d[r];
            }
        }
    }
    let scatter = DMatrix::from_fn(P, P, |r, c| if r <= c { acc[r][c] } else { acc[c][r] });
    (mu.to_vec(), scatter)
}

fn geometric_mean(v: &[f64]) -> Result<f64> {
    if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Singular);
    }
    Ok((v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp())
}

/// Eigen-decomposition with eigenvalues sorted in decreasing order.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let p = m.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn rotate(vectors: &DMatrix<f64>, diag: &[f64]) -> DMatrix<f64> {
    let p = diag.len();
    let scaled = DMatrix::from_fn(p, p, |r, c| vectors[(r, c)] * diag[c]);
    let m = scaled * vectors.transpose();
    // symmetrize rounding noise
    DMatrix::from_fn(p, p, |r, c| 0.5 * (m[(r, c)] + m[(c, r)]))
}

fn diag_matrix(diag: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag))
}

/// Alternates volume and shape updates for models with a shared shape and
/// per-component volumes. `per_comp[k]` holds the eigenvalues (or diagonal)
/// of W_k, paired elementwise with the shape.
fn volume_shape_iteration(
    per_comp: &[Vec<f64>],
    nk: &[f64],
    hint: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = per_comp[0].len();
    let mut shape: Vec<f64> = match hint {
        Some(h) if h.len() == p && h.iter().all(|&v| v > 0.0) => h.to_vec(),
        _ => {
            let total: Vec<f64> = (0..p).map(|j| per_comp.iter().map(|w| w[j]).sum()).collect();
            let gm = geometric_mean(&total)?;
            total.iter().map(|v| v / gm).collect()
        }
    };
    let mut volumes = vec![0.0; per_comp.len()];
    for _ in 0..INNER_MAX_ITER {
        let mut change = 0.0f64;
        for (k, w) in per_comp.iter().enumerate() {
            let v = w.iter().zip(&shape).map(|(a, s)| a / s).sum::<f64>() / (p as f64 * nk[k]);
            if !(v > 0.0) {
                return Err(Error::Singular);
            }
            if volumes[k] > 0.0 {
                change = change.max(((v - volumes[k]) / volumes[k]).abs());
            } else {
                change = f64::INFINITY;
            }
            volumes[k] = v;
        }
        let b: Vec<f64> = (0..p)
            .map(|j| per_comp.iter().zip(&volumes).map(|(w, v)| w[j] / v).sum())
            .collect();
        let gm = geometric_mean(&b)?;
        for (s, bj) in shape.iter_mut().zip(&b) {
            let new = bj / gm;
            change = change.max(((new - *s) / *s).abs());
            *s = new;
        }
        if change < INNER_TOL {
            break;
        }
    }
    Ok((volumes, shape))
}

/// Result of an M-step: parameters plus the shared shape for models that
/// iterate, used to warm-start the next M-step.
pub(crate) struct MStep {
    pub params: MixtureParams,
    pub shape: Option<Vec<f64>>,
}

pub(crate) fn m_step_rows(
    model: CovarianceModel,
    x: &[f64],
    p: usize,
    z: &[f64],
    g: usize,
    shape_hint: Option<&[f64]>,
) -> Result<MStep> {
    let n = x.len() / p;
    let xc = linalg::transpose(x, n, p);
    let zc = linalg::transpose(z, n, g);
    m_step_cols(model, &xc, n, p, &zc, g, shape_hint)
}

/// M-step on column-wise data and responsibilities (see `sufficient_cols`).
pub(crate) fn m_step_cols(
    model: CovarianceModel,
    xc: &[f64],
    n: usize,
    p: usize,
    zc: &[f64],
    g: usize,
    shape_hint: Option<&[f64]>,
) -> Result<MStep> {
    use CovarianceModel::*;
    model.check(p)?;
    let full = matches!(model, EEE | EEV | VEV | VVV);
    let suf = sufficient_cols(xc, n, p, zc, g, full)?;
    let n = n as f64;
    let Sufficient { nk, means, scatter } = suf;
    let pf = p as f64;
    let total = || {
        let mut w = DMatrix::zeros(p, p);
        for s in &scatter {
            w += s;
        }
        w
    };
    let mut shape = None;
    let covariances: Vec<DMatrix<f64>> = match model {
        E | EII => {
            let lambda = total().trace() / (n * pf);
            vec![DMatrix::identity(p, p) * lambda; g]
        }
        V | VII => scatter
            .iter()
            .zip(&nk)
            .map(|(w, m)| DMatrix::identity(p, p) * (w.trace() / (pf * m)))
            .collect(),
        EEI => {
            let d: Vec<f64> = total().diagonal().iter().map(|v| v / n).collect();
            vec![diag_matrix(&d); g]
        }
        VEI => {
            let diags: Vec<Vec<f64>> = scatter.iter().map(|w| w.diagonal().iter().copied().collect()).collect();
            let (vol, a) = volume_shape_iteration(&diags, &nk, shape_hint)?;
            let out = vol
                .iter()
                .map(|v| diag_matrix(&a.iter().map(|s| s * v).collect::<Vec<_>>()))
                .collect();
            shape = Some(a);
            out
        }
        EVI => {
            let diags: Vec<Vec<f64>> = scatter.iter().map(|w| w.diagonal().iter().copied().collect()).collect();
            let gms = diags.iter().map(|d| geometric_mean(d)).collect::<Result<Vec<_>>>()?;
            let lambda = gms.iter().sum::<f64>() / n;
            diags
                .iter()
                .zip(&gms)
                .map(|(d, gm)| diag_matrix(&d.iter().map(|v| lambda * v / gm).collect::<Vec<_>>()))
                .collect()
        }
        VVI => scatter
            .iter()
            .zip(&nk)
            .map(|(w, m)| diag_matrix(&w.diagonal().iter().map(|v| v / m).collect::<Vec<_>>()))
            .collect(),
        EEE => vec![total() / n; g],
        EEV => {
            let eig: Vec<_> = scatter.iter().map(sorted_eigen).collect();
            let omega: Vec<f64> = (0..p).map(|j| eig.iter().map(|(v, _)| v[j]).sum::<f64>() / n).collect();
            eig.iter().map(|(_, vecs)| rotate(vecs, &omega)).collect()
        }
        VEV => {
            let eig: Vec<_> = scatter.iter().map(sorted_eigen).collect();
            let values: Vec<Vec<f64>> = eig.iter().map(|(v, _)| v.clone()).collect();
            let (vol, a) = volume_shape_iteration(&values, &nk, shape_hint)?;
            let out = eig
                .iter()
                .zip(&vol)
                .map(|((_, vecs), v)| rotate(vecs, &a.iter().map(|s| s * v).collect::<Vec<_>>()))
                .collect();
            shape = Some(a);
            out
        }
        VVV => scatter.iter().zip(&nk).map(|(w, m)| w / *m).collect(),
    };
    let weights = nk.iter().map(|m| m / n).collect();
    let params = MixtureParams::new(weights, means, covariances)?;
    params.prepare()?;
    Ok(MStep { params, shape })
}

/// M-step for `model` given responsibilities `z` (n×G).
pub fn m_step(model: CovarianceModel, data: &Dataset, z: &DMatrix<f64>) -> Result<MixtureParams> {
    if z.nrows() != data.n() || z.ncols() == 0 {
        return Err(Error::InvalidArgument("responsibility matrix has wrong shape".into()));
    }
    let p = data.d();
    let g = z.ncols();
    let x = data.row_major(&(0..p).collect::<Vec<_>>(), None);
    let zr: Vec<f64> = (0..z.nrows()).flat_map(|i| z.row(i).iter().copied().collect::<Vec<_>>()).collect();
    Ok(m_step_rows(model, &x, p, &zr, g, None)?.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Two clouds: the second is the first shifted by (20, -20, 10).
    fn two_clouds(seed: u64, per: usize) -> (Dataset, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let base: Vec<Vec<f64>> = (0..per)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let c: f64 = StandardNormal.sample(&mut rng);
                vec![a, 0.5 * a + b, 2.0 * c]
            })
            .collect();
        rows.extend(base.iter().cloned());
        rows.extend(base.iter().map(|r| vec![r[0] + 20.0, r[1] - 20.0, r[2] + 10.0]));
        let z = DMatrix::from_fn(2 * per, 2, |i, k| if (i < per) == (k == 0) { 1.0 } else { 0.0 });
        (Dataset::from_rows(&rows).unwrap(), z)
    }

    fn mle_cov(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let n = rows.len() as f64;
        let p = rows[0].len();
        let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = DMatrix::from_fn(p, p, |a, b| {
            rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n
        });
        (mean, cov)
    }

    #[test]
    fn fixed_moments_match_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in 1..=5 {
            let n = 23;
            let x: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z: Vec<f64> = (0..n).map(|i| 0.1 + (i % 4) as f64 * 0.3).collect();
            let xc = linalg::transpose(&x, n, p);
            let suf = sufficient_cols(&xc, n, p, &z, 1, true).unwrap();
            let m: f64 = z.iter().sum();
            for a in 0..p {
                let mu_a = (0..n).map(|i| z[i] * x[i * p + a]).sum::<f64>() / m;
                assert!((suf.means[0][a] - mu_a).abs() < 1e-12);
                for b in 0..p {
                    let mu_b = (0..n).map(|i| z[i] * x[i * p + b]).sum::<f64>() / m;
                    let w: f64 = (0..n).map(|i| z[i] * (x[i * p + a] - mu_a) * (x[i * p + b] - mu_b)).sum();
                    assert!((suf.scatter[0][(a, b)] - w).abs() < 1e-10, "p {p} ({a},{b})");
                }
            }
            let diag = sufficient_cols(&xc, n, p, &z, 1, false).unwrap();
            for a in 0..p {
                for b in 0..p {
                    let expect = if a == b { suf.scatter[0][(a, b)] } else { 0.0 };
                    assert_eq!(diag.scatter[0][(a, b)], expect);
                }
            }
        }
    }

    fn rows_of(data: &Dataset, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        range.map(|i| (0..data.d()).map(|j| data.get(i, j)).collect()).collect()
    }

    #[test]
    fn vvv_hard_labels_give_cloud_mles() {
        let (data, z) = two_clouds(1, 40);
        let params = m_step(CovarianceModel::VVV, &data, &z).unwrap();
        for (k, range) in [(0, 0..40), (1, 40..80)] {
            let (mean, cov) = mle_cov(&rows_of(&data, range));
            for j in 0..3 {
                assert!((params.means[k][j] - mean[j]).abs() < 1e-12);
            }
            assert!((&params.covariances[k] - cov).abs().max() < 1e-12);
        }
        assert_eq!(params.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn eii_pooled_variance() {
        let (data, z) = two_clouds(2, 30);
        let params = m_step(CovarianceModel::EII, &data, &z).unwrap();
        // pooled mean squared deviation per coordinate
        let mut ss = 0.0;
        for range in [0..30, 30..60] {
            let rows = rows_of(&data, range);
            let (mean, _) = mle_cov(&rows);
            for r in &rows {
                ss += r.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        let sigma2 = ss / 60.0 / 3.0;
        for c in &params.covariances {
            assert!((c - DMatrix::identity(3, 3) * sigma2).abs().max() < 1e-12);
        }
    }

    #[test]
    fn eee_equals_within_cloud_covariance() {
        let (data, z) = two_clouds(3, 50);
        let params = m_step(CovarianceModel::EEE, &data, &z).unwrap();
        let (_, cov) = mle_cov(&rows_of(&data, 0..50));
        for c in &params.covariances {
            assert!((c - &cov).abs().max() < 1e-10);
        }
    }

    #[test]
    fn empty_component_collapses() {
        let (data, mut z) = two_clouds(4, 10);
        for i in 0..20 {
            z[(i, 0)] = 1.0;
            z[(i, 1)] = 0.0;
        }
        assert!(matches!(
            m_step(CovarianceModel::VVV, &data, &z),
            Err(Error::ComponentCollapse { component: 1, .. })
        ));
    }

    #[test]
    fn singular_scatter_fails() {
        // component of 2 points in 3 dimensions has rank-1 scatter
        let rows = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![5.0, 1.0, 2.0],
            vec![6.0, -1.0, 3.0],
            vec![7.0, 2.0, 2.5],
            vec![5.5, 0.0, 4.0],
        ];
        let data = Dataset::from_rows(&rows).unwrap();
        let z = DMatrix::from_fn(6, 2, |i, k| if (i < 2) == (k == 0) { 1.0 } else { 0.0 });
        assert!(matches!(m_step(CovarianceModel::VVV, &data, &z), Err(Error::Singular)));
        assert!(m_step(CovarianceModel::EEE, &data, &z).is_ok());
    }
}
