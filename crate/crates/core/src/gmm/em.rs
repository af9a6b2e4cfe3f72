use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::estep::e_step_cols;
use super::model::{bic, n_params, CovarianceModel};
use super::mstep::m_step_cols;
use super::params::MixtureParams;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// EM and initialization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative log-likelihood change |l_t − l_{t−1}| / (1 + |l_t|) at which EM stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Criterion for the agglomerative initialization: EII, EEE or VVV.
    pub hc_model: CovarianceModel,
    /// Center, rotate and rescale the rows by their singular value
    /// decomposition before agglomerating.
    pub hc_svd: bool,
    /// Retry with an EEE initialization when every fit from the VVV tree fails.
    pub allow_eee: bool,
    /// Build the initialization tree on a row sub-sample.
    pub samp: bool,
    /// Sub-sample size; `None` means round(n/2).
    pub sampsize: Option<usize>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 1000,
            hc_model: CovarianceModel::VVV,
            hc_svd: true,
            allow_eee: true,
            samp: false,
            sampsize: None,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !matches!(
            self.hc_model,
            CovarianceModel::EII | CovarianceModel::EEE | CovarianceModel::VVV
        ) {
            return Err(Error::InvalidArgument(format!(
                "hierarchical criterion must be EII, EEE or VVV, got {}",
                self.hc_model
            )));
        }
        if self.sampsize == Some(0) {
            return Err(Error::InvalidArgument("sampsize must be at least 1".into()));
        }
        Ok(())
    }

    /// Rows used by the initialization tree for an n-row dataset.
    pub fn init_rows(&self, n: usize) -> Result<Option<Vec<usize>>> {
        if !self.samp {
            return Ok(None);
        }
        let size = self
            .sampsize
            .unwrap_or(((n as f64) / 2.0).round() as usize)
            .clamp(1, n);
        if size >= n {
            return Ok(None);
        }
        crate::data::subsample_rows(n, size, self.seed).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: MixtureParams,
    pub model: CovarianceModel,
    pub g: usize,
    pub n: usize,
    pub loglik: f64,
    pub df: usize,
    pub bic: f64,
    /// n×G responsibilities.
    pub z: DMatrix<f64>,
    /// MAP labels, 0-based; ties go to the lowest component.
    pub classification: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each E-step.
    pub loglik_path: Vec<f64>,
}

impl FitResult {
    /// Component sizes of the MAP partition.
    pub fn clustering_table(&self) -> Vec<usize> {
        let mut counts = vec![0; self.g];
        for &c in &self.classification {
            counts[c] += 1;
        }
        counts
    }
}

pub(crate) struct EmCore {
    pub params: MixtureParams,
    pub loglik: f64,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub path: Vec<f64>,
}

pub(crate) fn em_rows(
    x: &[f64],
    p: usize,
    g: usize,
    model: CovarianceModel,
    z: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EmCore> {
    let n = x.len() / p;
    let xc = linalg::transpose(x, n, p);
    let mut zc = linalg::transpose(&z, n, g);
    let mut work = Vec::new();
    let mut step = m_step_cols(model, &xc, n, p, &zc, g, None)?;
    let mut path = Vec::new();
    let mut prev = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        let ll = e_step_cols(&step.params, &xc, n, &mut zc, &mut work)?;
        path.push(ll);
        iterations = it;
        if g == 1 || (prev.is_finite() && (ll - prev).abs() / (1.0 + ll.abs()) < tol) {
            converged = true;
            break;
        }
        prev = ll;
        if it == max_iter {
            break;
        }
        step = m_step_cols(model, &xc, n, p, &zc, g, step.shape.as_deref())?;
    }
    let loglik = *path.last().expect("at least one E-step");
    Ok(EmCore {
        params: step.params,
        loglik,
        z: linalg::transpose(&zc, g, n),
        iterations,
        converged,
        path,
    })
}

pub(crate) fn map_labels(z: &[f64], g: usize) -> Vec<usize> {
    z.chunks_exact(g)
        .map(|row| {
            let mut best = 0;
            for k in 1..g {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn one_hot(labels: &[usize], g: usize) -> Vec<f64> {
    let mut z = vec![0.0; labels.len() * g];
    for (i, &l) in labels.iter().enumerate() {
        z[i * g + l] = 1.0;
    }
    z
}

pub(crate) fn finish(
    core: EmCore,
    model: CovarianceModel,
    g: usize,
    n: usize,
    p: usize,
) -> Result<FitResult> {
    let df = n_params(model, p, g)?;
    let bic_value = bic(core.loglik, df, n);
    if !bic_value.is_finite() {
        return Err(Error::Singular);
    }
    let classification = map_labels(&core.z, g);
    Ok(FitResult {
        params: core.params,
        model,
        g,
        n,
        loglik: core.loglik,
        df,
        bic: bic_value,
        z: DMatrix::from_row_slice(n, g, &core.z),
        classification,
        converged: core.converged,
        iterations: core.iterations,
        loglik_path: core.path,
    })
}

/// Runs EM from a hard partition with `g` non-empty classes labelled 0..g.
/// An `Err` is a failed fit (collapsed component, singular covariance): its
/// BIC is unavailable.
pub fn em_fit(
    data: &Dataset,
    g: usize,
    model: CovarianceModel,
    init_partition: &[usize],
    opts: &FitOptions,
) -> Result<FitResult> {
    opts.validate()?;
    let p = data.d();
    model.check(p)?;
    if init_partition.len() != data.n() {
        return Err(Error::InvalidArgument("partition length differs from n".into()));
    }
    if g == 0 || init_partition.iter().any(|&l| l >= g) {
        return Err(Error::InvalidArgument(format!("partition labels must lie in 0..{g}")));
    }
    let x = data.row_major(&(0..p).collect::<Vec<_>>(), None);
    let z = one_hot(init_partition, g);
    let core = em_rows(&x, p, g, model, z, opts.tol, opts.max_iter)?;
    finish(core, model, g, data.n(), p)
}
