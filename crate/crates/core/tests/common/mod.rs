#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use varsel::gmm::{CovarianceModel, MixtureParams};
use varsel::Dataset;

pub fn data_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// A random EM problem: data from a G-component mixture with random means
/// and covariances, plus a random initial partition.
pub struct FitCase {
    pub data: Dataset,
    pub g: usize,
    pub model: CovarianceModel,
    pub init: Vec<usize>,
}

pub fn fit_case(seed: u64) -> FitCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(1..=4);
    let g = rng.random_range(1..=4);
    let n = rng.random_range(40..=120);
    let models: &[CovarianceModel] = if p == 1 {
        &CovarianceModel::UNIVARIATE
    } else {
        &CovarianceModel::MULTIVARIATE
    };
    let model = models[rng.random_range(0..models.len())];
    let means: Vec<Vec<f64>> = (0..g).map(|_| (0..p).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
    let factors: Vec<DMatrix<f64>> = (0..g)
        .map(|_| DMatrix::from_fn(p, p, |i, j| if i == j { rng.random_range(0.5..1.5) } else { rng.random_range(-0.5..0.5) }))
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut init = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % g;
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let row: Vec<f64> = (0..p)
            .map(|a| means[k][a] + (0..p).map(|b| factors[k][(a, b)] * z[b]).sum::<f64>())
            .collect();
        rows.push(row);
        // mostly right, sometimes perturbed
        init.push(if rng.random::<f64>() < 0.2 { rng.random_range(0..g) } else { k });
    }
    for (k, slot) in init.iter_mut().take(g).enumerate() {
        *slot = k;
    }
    FitCase {
        data: Dataset::from_rows(&rows).unwrap(),
        g,
        model,
        init,
    }
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn volume(m: &DMatrix<f64>) -> f64 {
    m.determinant().powf(1.0 / m.nrows() as f64)
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

fn max_rel_vec(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel(*x, *y, scale)).fold(0.0, f64::max)
}

/// Largest relative departure of fitted covariances from the equality and
/// structure pattern of `model`.
pub fn constraint_violation(model: CovarianceModel, params: &MixtureParams) -> f64 {
    use CovarianceModel::*;
    let covs = &params.covariances;
    let p = params.d();
    let scale = covs.iter().map(|c| c.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    let offdiag = |c: &DMatrix<f64>| {
        let mut w: f64 = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    w = w.max(c[(i, j)].abs() / scale);
                }
            }
        }
        w
    };
    let spherical = |c: &DMatrix<f64>| {
        let d = c.diagonal();
        (0..p).map(|i| rel(d[i], d[0], scale)).fold(offdiag(c), f64::max)
    };
    let all_equal = |w: &mut f64| {
        for c in covs {
            *w = w.max((c - &covs[0]).amax() / scale);
        }
    };
    let lambdas: Vec<f64> = covs.iter().map(volume).collect();
    let lscale = lambdas.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let equal_volume = |w: &mut f64| {
        for l in &lambdas {
            *w = w.max(rel(*l, lambdas[0], lscale));
        }
    };
    let diag_shapes: Vec<Vec<f64>> = covs
        .iter()
        .zip(&lambdas)
        .map(|(c, l)| c.diagonal().iter().map(|v| v / l).collect())
        .collect();
    let eig_shapes: Vec<Vec<f64>> = covs
        .iter()
        .zip(&lambdas)
        .map(|(c, l)| sorted_eigenvalues(c).into_iter().map(|v| v / l).collect())
        .collect();
    let sscale = |s: &[Vec<f64>]| s.iter().flatten().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    match model {
        E | EII | EEI | EEE => {
            all_equal(&mut worst);
            if model == EII {
                worst = worst.max(spherical(&covs[0]));
            }
            if model == EEI {
                worst = worst.max(offdiag(&covs[0]));
            }
        }
        V | VVV => {}
        VII => {
            for c in covs {
                worst = worst.max(spherical(c));
            }
        }
        VEI | EVI | VVI => {
            for c in covs {
                worst = worst.max(offdiag(c));
            }
            if model == VEI {
                let s = sscale(&diag_shapes);
                for d in &diag_shapes {
                    worst = worst.max(max_rel_vec(d, &diag_shapes[0], s));
                }
            }
            if model == EVI {
                equal_volume(&mut worst);
            }
        }
        EEV | VEV => {
            let s = sscale(&eig_shapes);
            for e in &eig_shapes {
                worst = worst.max(max_rel_vec(e, &eig_shapes[0], s));
            }
            if model == EEV {
                equal_volume(&mut worst);
            }
        }
    }
    worst
}

/// Largest drop between consecutive log-likelihoods.
pub fn max_decrease(path: &[f64]) -> f64 {
    path.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
