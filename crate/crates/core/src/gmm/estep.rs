use nalgebra::DMatrix;

use super::params::{log_sum_exp, MixtureParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

fn check_dims(params: &MixtureParams, data: &Dataset) -> Result<()> {
    if params.d() != data.d() {
        return Err(Error::InvalidArgument(format!(
            "mixture has dimension {}, data has {}",
            params.d(),
            data.d()
        )));
    }
    Ok(())
}

/// Per-observation log mixture density log Σ_g π_g φ(x_i | μ_g, Σ_g).
pub fn log_density(params: &MixtureParams, data: &Dataset) -> Result<Vec<f64>> {
    check_dims(params, data)?;
    let p = data.d();
    let x = data.row_major(&(0..p).collect::<Vec<_>>(), None);
    let prep = params.prepare()?;
    let g = params.g();
    let mut scratch = vec![0.0; p];
    let mut comp = vec![0.0; g];
    Ok(x
        .chunks_exact(p)
        .map(|row| {
            prep.component_log_densities(row, &mut scratch, &mut comp);
            log_sum_exp(&comp)
        })
        .collect())
}

/// Responsibilities and log-likelihood for row-major data. `z` is n×G
/// row-major.
pub(crate) fn e_step_rows(
    params: &MixtureParams,
    x: &[f64],
    p: usize,
    z: &mut Vec<f64>,
) -> Result<f64> {
    let n = x.len() / p;
    let xc = linalg::transpose(x, n, p);
    let mut zc = Vec::new();
    let loglik = e_step_cols(params, &xc, n, &mut zc, &mut Vec::new())?;
    *z = linalg::transpose(&zc, params.g(), n);
    Ok(loglik)
}

/// Column-wise E-step: `xc` holds the p data columns back to back and `zc`
/// receives the G responsibility columns. `work` is reusable scratch.
pub(crate) fn e_step_cols(
    params: &MixtureParams,
    xc: &[f64],
    n: usize,
    zc: &mut Vec<f64>,
    work: &mut Vec<f64>,
) -> Result<f64> {
    let prep = params.prepare()?;
    let g = params.g();
    zc.resize(n * g, 0.0);
    work.resize(3 * n, 0.0);
    let (tmp, rest) = work.split_at_mut(n);
    let (max, sum) = rest.split_at_mut(n);
    max.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
    for (k, col) in zc.chunks_exact_mut(n).enumerate() {
        prep.log_densities_cols(k, xc, n, tmp, col, max);
    }
    if max.iter().any(|m| !m.is_finite()) {
        return Err(Error::Singular);
    }
    sum.iter_mut().for_each(|v| *v = 0.0);
    for col in zc.chunks_exact_mut(n) {
        for ((v, m), s) in col.iter_mut().zip(max.iter()).zip(sum.iter_mut()) {
            *v = (*v - m).exp();
            *s += *v;
        }
    }
    // Each row sum lies in [1, G], so products over short runs of rows stay
    // finite and one logarithm covers the run.
    let chunk = (300.0 / (g as f64).log10().max(1.0)) as usize;
    let mut loglik = linalg::sum(max);
    for run in sum.chunks_mut(chunk.clamp(1, 256)) {
        let mut prod = 1.0;
        for s in run.iter_mut() {
            prod *= *s;
            *s = 1.0 / *s;
        }
        loglik += prod.ln();
    }
    for col in zc.chunks_exact_mut(n) {
        for (v, inv) in col.iter_mut().zip(sum.iter()) {
            *v *= inv;
        }
    }
    if !loglik.is_finite() {
        return Err(Error::Singular);
    }
    Ok(loglik)
}

/// E-step: z[i,g] ∝ π_g φ(x_i | μ_g, Σ_g) with rows normalized, plus the
/// log-likelihood of the data.
pub fn e_step(params: &MixtureParams, data: &Dataset) -> Result<(DMatrix<f64>, f64)> {
    check_dims(params, data)?;
    let p = data.d();
    let x = data.row_major(&(0..p).collect::<Vec<_>>(), None);
    let mut z = Vec::new();
    let loglik = e_step_rows(params, &x, p, &mut z)?;
    let g = params.g();
    Ok((DMatrix::from_row_slice(data.n(), g, &z), loglik))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn univariate(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> MixtureParams {
        MixtureParams::new(
            weights,
            means.into_iter().map(|m| vec![m]).collect(),
            vars.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_mode() {
        let params = univariate(vec![1.0], vec![0.0], vec![1.0]);
        let data = Dataset::from_rows(&[vec![0.0]]).unwrap();
        let ld = log_density(&params, &data).unwrap();
        assert!((ld[0] + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn symmetric_mixture_matches_direct_sum() {
        let a = 3.0;
        let params = univariate(vec![0.5, 0.5], vec![-a, a], vec![1.0, 1.0]);
        let data = Dataset::from_rows(&[vec![0.0], vec![0.7], vec![-2.2]]).unwrap();
        let ld = log_density(&params, &data).unwrap();
        let phi = |x: f64, m: f64| {
            (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        for (i, x) in [0.0, 0.7, -2.2].into_iter().enumerate() {
            let direct = (0.5 * phi(x, -a) + 0.5 * phi(x, a)).ln();
            assert!((ld[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_component_is_ignored() {
        let mix = univariate(vec![1.0, 0.0], vec![0.3, 5.0], vec![2.0, 1.0]);
        let one = univariate(vec![1.0], vec![0.3], vec![2.0]);
        let data = Dataset::from_rows(&[vec![-1.0], vec![4.0]]).unwrap();
        let a = log_density(&mix, &data).unwrap();
        let b = log_density(&one, &data).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let params = MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
        )
        .unwrap();
        let data = Dataset::from_rows(&[vec![0.0, 3.0]]).unwrap();
        let (z, _) = e_step(&params, &data).unwrap();
        assert!((z[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((z[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_component_responsibility_is_one() {
        let params = univariate(vec![1.0], vec![0.0], vec![1.0]);
        let data = Dataset::from_rows(&[vec![1.0], vec![-40.0]]).unwrap();
        let (z, ll) = e_step(&params, &data).unwrap();
        assert!(z.iter().all(|&v| v == 1.0));
        let direct: f64 = log_density(&params, &data).unwrap().iter().sum();
        assert!((ll - direct).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 3;
        let mut covs = Vec::new();
        let mut means = Vec::new();
        for _ in 0..3 {
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            covs.push(&a * a.transpose() + DMatrix::identity(d, d) * 0.5);
            means.push((0..d).map(|_| rng.random_range(-3.0..3.0)).collect());
        }
        let params = MixtureParams::new(vec![0.2, 0.3, 0.5], means, covs).unwrap();
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let (z, _) = e_step(&params, &data).unwrap();
        for i in 0..10 {
            let s: f64 = z.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_spd_covariance_errors() {
        let params = MixtureParams::new(
            vec![1.0],
            vec![vec![0.0, 0.0]],
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])],
        )
        .unwrap();
        let data = Dataset::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(log_density(&params, &data), Err(Error::Singular)));
    }
}
