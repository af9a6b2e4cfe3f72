//! Gaussian linear regression BIC of one variable on a set of others.
//!
//! Fits use the centered cross-product matrix of the regressors, so any
//! regressor subset costs one small Cholesky factorization once the
//! moments are in hand.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::bic;
use crate::linalg;

/// Residual variance below this fraction of var(y) counts as an exact fit.
const DEGENERATE_RATIO: f64 = 1e-10;
/// A regressor whose squared Cholesky pivot falls below this fraction of its
/// centered sum of squares is treated as collinear with earlier ones.
const COLLINEAR_RATIO: f64 = 1e-10;
/// Largest regressor count searched exhaustively in subset mode.
pub const EXHAUSTIVE_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMode {
    /// Regress on every clustering variable.
    All,
    /// Regress on the BIC-best subset of the clustering variables.
    #[default]
    Subset,
}

impl fmt::Display for RegressionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressionMode::All => "all",
            RegressionMode::Subset => "subset",
        })
    }
}

impl FromStr for RegressionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(RegressionMode::All),
            "subset" => Ok(RegressionMode::Subset),
            other => Err(Error::InvalidArgument(format!("unknown regression mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Positions of the chosen regressors within the supplied columns.
    pub regressors: Vec<usize>,
    /// Intercept followed by one slope per regressor.
    pub coefficients: Vec<f64>,
    /// MLE residual variance RSS / n.
    pub sigma2: f64,
    pub loglik: f64,
    pub df: usize,
    pub bic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Issue {
    Collinear,
    ExactFit,
}

impl From<Issue> for Error {
    fn from(issue: Issue) -> Self {
        Error::DegenerateRegression(
            match issue {
                Issue::Collinear => "rank-deficient regressors",
                Issue::ExactFit => "response is an exact linear fit",
            }
            .into(),
        )
    }
}

/// Centered first and second moments of (X, y).
struct Moments {
    n: usize,
    k: usize,
    x_mean: Vec<f64>,
    y_mean: f64,
    /// Centered Xᵀ X, row-major k×k.
    sxx: Vec<f64>,
    /// Centered Xᵀ y.
    sxy: Vec<f64>,
    syy: f64,
}

impl Moments {
    fn new(y: &[f64], x: &[&[f64]]) -> Result<Self> {
        let n = y.len();
        let k = x.len();
        if let Some(col) = x.iter().find(|c| c.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "regressor has {} rows, response has {n}",
                col.len()
            )));
        }
        if n <= k + 2 {
            return Err(Error::DegenerateRegression(format!(
                "{n} observations cannot support {k} regressors"
            )));
        }
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let x_mean: Vec<f64> = x.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let xc: Vec<Vec<f64>> = x
            .iter()
            .zip(&x_mean)
            .map(|(c, m)| c.iter().map(|v| v - m).collect())
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let mut sxx = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let v = dot(&xc[a], &xc[b]);
                sxx[a * k + b] = v;
                sxx[b * k + a] = v;
            }
        }
        let sxy = xc.iter().map(|c| dot(c, &yc)).collect();
        let syy = dot(&yc, &yc);
        Ok(Self {
            n,
            k,
            x_mean,
            y_mean,
            sxx,
            sxy,
            syy,
        })
    }

    /// Fits the regression on the regressor positions `subset`.
    fn fit(&self, subset: &[usize]) -> std::result::Result<RegressionFit, Issue> {
        let m = subset.len();
        let nf = self.n as f64;
        let mut l = vec![0.0; m * m];
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate() {
                l[a * m + b] = self.sxx[i * self.k + j];
            }
        }
        if !linalg::cholesky_in_place(&mut l, m) {
            return Err(Issue::Collinear);
        }
        for (a, &i) in subset.iter().enumerate() {
            let piv = l[a * m + a];
            if piv * piv <= COLLINEAR_RATIO * self.sxx[i * self.k + i] {
                return Err(Issue::Collinear);
            }
        }
        let mut w: Vec<f64> = subset.iter().map(|&i| self.sxy[i]).collect();
        linalg::forward_solve(&l, m, &mut w);
        let rss = (self.syy - w.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        let sigma2 = rss / nf;
        if !(sigma2 > DEGENERATE_RATIO * self.syy / nf) {
            return Err(Issue::ExactFit);
        }
        // back-substitute Lᵀ β = w
        let mut beta = w;
        for a in (0..m).rev() {
            let mut s = beta[a];
            for b in a + 1..m {
                s -= l[b * m + a] * beta[b];
            }
            beta[a] = s / l[a * m + a];
        }
        let intercept = self.y_mean
            - subset
                .iter()
                .zip(&beta)
                .map(|(&i, b)| b * self.x_mean[i])
                .sum::<f64>();
        let loglik = -nf / 2.0 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
        let df = m + 2;
        let mut coefficients = Vec::with_capacity(m + 1);
        coefficients.push(intercept);
        coefficients.extend(beta);
        Ok(RegressionFit {
            regressors: subset.to_vec(),
            coefficients,
            sigma2,
            loglik,
            df,
            bic: bic(loglik, df, self.n),
        })
    }
}

/// OLS regression of `y` on all columns of `x` (possibly none).
pub fn reg_bic(y: &[f64], x: &[&[f64]]) -> Result<RegressionFit> {
    let mom = Moments::new(y, x)?;
    Ok(mom.fit(&(0..x.len()).collect::<Vec<_>>())?)
}

/// Regression of `y` on `x` (mode `All`) or on the BIC-best subset of `x`
/// (mode `Subset`; exhaustive up to [`EXHAUSTIVE_MAX`] columns, forward
/// stepwise beyond). Ties go to the smaller subset, then the one found first.
pub fn reg_subset_bic(y: &[f64], x: &[&[f64]], mode: RegressionMode) -> Result<RegressionFit> {
    let mom = Moments::new(y, x)?;
    let k = x.len();
    match mode {
        RegressionMode::All => Ok(mom.fit(&(0..k).collect::<Vec<_>>())?),
        RegressionMode::Subset if k <= EXHAUSTIVE_MAX => exhaustive(&mom),
        RegressionMode::Subset => stepwise(&mom),
    }
}

/// Keeps the better of `best` and `fit`. Collinear subsets are skipped; an
/// exact fit makes the whole regression degenerate.
fn consider(
    best: &mut Option<RegressionFit>,
    fit: std::result::Result<RegressionFit, Issue>,
) -> Result<()> {
    match fit {
        Ok(f) => {
            if best.as_ref().is_none_or(|b| f.bic > b.bic) {
                *best = Some(f);
            }
            Ok(())
        }
        Err(Issue::Collinear) => Ok(()),
        Err(issue) => Err(issue.into()),
    }
}

fn exhaustive(mom: &Moments) -> Result<RegressionFit> {
    let k = mom.k;
    let mut masks: Vec<u32> = (0..1u32 << k).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut best = None;
    let mut subset = Vec::with_capacity(k);
    for mask in masks {
        subset.clear();
        subset.extend((0..k).filter(|&i| mask & (1 << i) != 0));
        consider(&mut best, mom.fit(&subset))?;
    }
    best.ok_or_else(|| Error::DegenerateRegression("no regressor subset could be fitted".into()))
}

fn stepwise(mom: &Moments) -> Result<RegressionFit> {
    let mut best = mom.fit(&[]).map_err(Error::from)?;
    loop {
        let mut step: Option<RegressionFit> = None;
        for i in 0..mom.k {
            if best.regressors.contains(&i) {
                continue;
            }
            let mut subset = best.regressors.clone();
            subset.push(i);
            consider(&mut step, mom.fit(&subset))?;
        }
        match step {
            Some(s) if s.bic > best.bic => best = s,
            _ => return Ok(best),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn exact_linear_response_is_degenerate() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!(matches!(reg_bic(&y, &[&x]), Err(Error::DegenerateRegression(_))));
    }

    #[test]
    fn intercept_only_is_marginal_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = normals(&mut rng, 50);
        let fit = reg_bic(&y, &[]).unwrap();
        let n = 50.0;
        let m = y.iter().sum::<f64>() / n;
        let s2 = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let ll = -n / 2.0 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0);
        assert_eq!(fit.df, 2);
        assert!((fit.bic - (2.0 * ll - 2.0 * n.ln())).abs() < 1e-10);
    }

    #[test]
    fn slope_matches_closed_form_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 500;
        let x = normals(&mut rng, n);
        let e = normals(&mut rng, n);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 2.0 * a + b).collect();
        let fit = reg_bic(&y, &[&x]).unwrap();

        // (DᵀD)⁻¹ Dᵀ y with the design D = [1, x]
        let d = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let yv = DVector::from_vec(y.clone());
        let dtd = d.transpose() * &d;
        let beta = dtd.clone().try_inverse().unwrap() * d.transpose() * &yv;
        let resid = &yv - &d * &beta;
        let rss = resid.dot(&resid);
        let s2 = rss / n as f64;
        let ll = -(n as f64) / 2.0 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0);
        let expect = 2.0 * ll - 3.0 * (n as f64).ln();
        assert!((fit.bic - expect).abs() < 1e-8);
        let unbiased = rss / (n - 2) as f64;
        let cov = dtd.try_inverse().unwrap() * unbiased;
        for j in 0..2 {
            let truth = [0.0, 2.0][j];
            assert!((fit.coefficients[j] - truth).abs() < 3.0 * cov[(j, j)].sqrt());
            assert!((fit.coefficients[j] - beta[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn all_mode_equals_reg_bic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = normals(&mut rng, 40);
        let y = normals(&mut rng, 40);
        let a = reg_subset_bic(&y, &[&x], RegressionMode::All).unwrap();
        let b = reg_bic(&y, &[&x]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn independent_response_picks_null_model() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x1 = normals(&mut rng, 1000);
            let x2 = normals(&mut rng, 1000);
            let y = normals(&mut rng, 1000);
            let fit = reg_subset_bic(&y, &[&x1, &x2], RegressionMode::Subset).unwrap();
            if fit.regressors.is_empty() {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn strong_single_dependence_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| normals(&mut rng, 1000)).collect();
        let e = normals(&mut rng, 1000);
        let y: Vec<f64> = cols[1].iter().zip(&e).map(|(a, b)| 3.0 * a + b).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let fit = reg_subset_bic(&y, &refs, RegressionMode::Subset).unwrap();
        assert_eq!(fit.regressors, vec![1]);
    }

    #[test]
    fn noise_regressor_raises_loglik_and_df() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normals(&mut rng, 60);
        let z = normals(&mut rng, 60);
        let y = normals(&mut rng, 60);
        let a = reg_bic(&y, &[&x]).unwrap();
        let b = reg_bic(&y, &[&x, &z]).unwrap();
        assert!(b.loglik >= a.loglik);
        assert_eq!(b.df, a.df + 1);
    }

    #[test]
    fn collinear_columns_are_skipped_in_subset_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = normals(&mut rng, 80);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let e = normals(&mut rng, 80);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + b).collect();
        assert!(reg_bic(&y, &[&x, &x2]).is_err());
        let fit = reg_subset_bic(&y, &[&x, &x2], RegressionMode::Subset).unwrap();
        assert_eq!(fit.regressors.len(), 1);
    }

    #[test]
    fn too_few_rows() {
        assert!(reg_bic(&[1.0, 2.0, 3.0], &[&[1.0, 0.0, 2.0]]).is_err());
    }

    #[test]
    fn stepwise_beyond_exhaustive_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cols: Vec<Vec<f64>> = (0..12).map(|_| normals(&mut rng, 300)).collect();
        let e = normals(&mut rng, 300);
        let y: Vec<f64> = (0..300).map(|i| 2.0 * cols[3][i] - 1.5 * cols[9][i] + e[i]).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let fit = reg_subset_bic(&y, &refs, RegressionMode::Subset).unwrap();
        let null = reg_bic(&y, &[]).unwrap();
        let mut chosen = fit.regressors.clone();
        chosen.sort_unstable();
        assert!(chosen.contains(&3) && chosen.contains(&9));
        assert!(fit.bic >= null.bic);
    }
}
