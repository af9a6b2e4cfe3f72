use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::em::{em_rows, finish, one_hot, FitOptions, FitResult};
use super::hc::{extend_partition_rows, hclust_rows, quantile_partition, svd_scale, HcTree};
use super::model::CovarianceModel;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// BIC of every (G, model) pair tried; `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicTable {
    pub gs: Vec<usize>,
    pub models: Vec<CovarianceModel>,
    /// Row-major over (G, model).
    pub values: Vec<Option<f64>>,
}

impl BicTable {
    pub fn get(&self, g: usize, model: CovarianceModel) -> Option<f64> {
        let gi = self.gs.iter().position(|&x| x == g)?;
        let mi = self.models.iter().position(|&m| m == model)?;
        self.values[gi * self.models.len() + mi]
    }

    pub fn render(&self) -> String {
        let mut out = String::from("   ");
        for m in &self.models {
            let _ = write!(out, " {:>10}", m.code());
        }
        out.push('\n');
        for (gi, g) in self.gs.iter().enumerate() {
            let _ = write!(out, "{g:>3}");
            for mi in 0..self.models.len() {
                match self.values[gi * self.models.len() + mi] {
                    Some(v) => {
                        let _ = write!(out, " {v:>10.3}");
                    }
                    None => {
                        let _ = write!(out, " {:>10}", "NA");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Every fit tried by a BIC search together with the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSearch {
    pub best: FitResult,
    pub table: BicTable,
    /// Criterion of the tree that initialized the G ≥ 2 fits.
    pub hc_model: CovarianceModel,
}

/// Fits every (G, model) pair from the hierarchical initialization and
/// returns the finite-BIC maximizer.
pub fn best_fit(
    data: &Dataset,
    gs: &[usize],
    models: &[CovarianceModel],
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_models(data, gs, models, opts).map(|s| s.best)
}

/// Like [`best_fit`], also returning the BIC table.
pub fn fit_models(
    data: &Dataset,
    gs: &[usize],
    models: &[CovarianceModel],
    opts: &FitOptions,
) -> Result<ModelSearch> {
    let p = data.d();
    let x = data.row_major(&(0..p).collect::<Vec<_>>(), None);
    fit_models_rows(&x, p, gs, models, opts)
}

pub(crate) fn fit_models_rows(
    x: &[f64],
    p: usize,
    gs: &[usize],
    models: &[CovarianceModel],
    opts: &FitOptions,
) -> Result<ModelSearch> {
    opts.validate()?;
    if gs.is_empty() || models.is_empty() {
        return Err(Error::InvalidArgument("component and model lists must be non-empty".into()));
    }
    if gs.contains(&0) {
        return Err(Error::InvalidArgument("component counts must be at least 1".into()));
    }
    for m in models {
        m.check(p)?;
    }
    let n = x.len() / p;
    let mut values = vec![None; gs.len() * models.len()];
    let mut fits: Vec<Option<FitResult>> = vec![None; gs.len() * models.len()];

    let run = |hc: Option<&Initializer>, only_multi: bool, values: &mut Vec<Option<f64>>, fits: &mut Vec<Option<FitResult>>| {
        for (gi, &g) in gs.iter().enumerate() {
            if only_multi && g == 1 {
                continue;
            }
            let labels = if g == 1 {
                Some(vec![0; n])
            } else if p == 1 {
                Some(quantile_partition(x, g))
            } else {
                hc.and_then(|h| h.labels(x, p, g))
            };
            let Some(labels) = labels else { continue };
            for (mi, &model) in models.iter().enumerate() {
                let z = one_hot(&labels, g);
                let fit = em_rows(x, p, g, model, z, opts.tol, opts.max_iter)
                    .and_then(|core| finish(core, model, g, n, p));
                let idx = gi * models.len() + mi;
                match fit {
                    Ok(f) => {
                        values[idx] = Some(f.bic);
                        fits[idx] = Some(f);
                    }
                    Err(_) => {
                        values[idx] = None;
                        fits[idx] = None;
                    }
                }
            }
        }
    };

    let needs_tree = p > 1 && gs.iter().any(|&g| g > 1);
    let mut hc_model = opts.hc_model;
    let sample = opts.init_rows(n)?;
    let tree = if needs_tree {
        Some(Initializer::build(x, p, hc_model, sample.as_deref(), opts.hc_svd)?)
    } else {
        None
    };
    run(tree.as_ref(), false, &mut values, &mut fits);

    let tree_fits_failed = gs
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 1)
        .all(|(gi, _)| (0..models.len()).all(|mi| values[gi * models.len() + mi].is_none()));
    if needs_tree && tree_fits_failed && opts.allow_eee && hc_model == CovarianceModel::VVV {
        hc_model = CovarianceModel::EEE;
        let tree = Initializer::build(x, p, hc_model, sample.as_deref(), opts.hc_svd)?;
        run(Some(&tree), true, &mut values, &mut fits);
    }

    // Row-major (G, model) order already encodes the tie rule.
    let mut best: Option<usize> = None;
    for (idx, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|b| *v > values[b].unwrap()) {
                best = Some(idx);
            }
        }
    }
    let best = best.ok_or(Error::NoModel)?;
    Ok(ModelSearch {
        best: fits[best].take().expect("fit present for finite BIC"),
        table: BicTable {
            gs: gs.to_vec(),
            models: models.to_vec(),
            values,
        },
        hc_model,
    })
}

struct Initializer {
    tree: HcTree,
    sampled: bool,
}

impl Initializer {
    fn build(
        x: &[f64],
        p: usize,
        criterion: CovarianceModel,
        rows: Option<&[usize]>,
        svd: bool,
    ) -> Result<Self> {
        let n = x.len() / p;
        let (used, sub): (Vec<usize>, Option<Vec<f64>>) = match rows {
            Some(r) => {
                let mut sub = Vec::with_capacity(r.len() * p);
                for &i in r {
                    sub.extend_from_slice(&x[i * p..(i + 1) * p]);
                }
                (r.to_vec(), Some(sub))
            }
            None => ((0..n).collect(), None),
        };
        let input = sub.as_deref().unwrap_or(x);
        let merges = if svd {
            let (z, q) = svd_scale(input, p);
            hclust_rows(&z, q, criterion)?
        } else {
            hclust_rows(input, p, criterion)?
        };
        Ok(Self {
            sampled: rows.is_some(),
            tree: HcTree::from_parts(used, merges),
        })
    }

    /// Labels on all rows for a G-class cut, or `None` if the tree is too
    /// small.
    fn labels(&self, x: &[f64], p: usize, g: usize) -> Option<Vec<usize>> {
        let part = self.tree.partition(g).ok()?;
        if self.sampled {
            extend_partition_rows(x, p, self.tree.rows(), &part).ok()
        } else {
            Some(part)
        }
    }
}

impl FitResult {
    /// Text summary: model, G, log-likelihood, n, df, BIC and cluster sizes.
    pub fn summary(&self) -> String {
        let rule = "-".repeat(52);
        let mut out = String::new();
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "Gaussian finite mixture model fitted by EM algorithm");
        let _ = writeln!(out, "{rule}");
        out.push('\n');
        let noun = if self.g == 1 { "component" } else { "components" };
        let _ = writeln!(
            out,
            "{} ({}) model with {} {noun}:",
            self.model.code(),
            self.model.description(),
            self.g
        );
        out.push('\n');
        let ll = format_sig(self.loglik, 7);
        let bic = format_sig(self.bic, 7);
        let n = self.n.to_string();
        let df = self.df.to_string();
        let w = [
            ll.len().max(15),
            n.len().max(1),
            df.len().max(2),
            bic.len().max(3),
        ];
        let _ = writeln!(
            out,
            " {:>w0$} {:>w1$} {:>w2$} {:>w3$}",
            "log.likelihood",
            "n",
            "df",
            "BIC",
            w0 = w[0] - 1,
            w1 = w[1],
            w2 = w[2],
            w3 = w[3]
        );
        let _ = writeln!(
            out,
            " {:>w0$} {:>w1$} {:>w2$} {:>w3$}",
            ll,
            n,
            df,
            bic,
            w0 = w[0] - 1,
            w1 = w[1],
            w2 = w[2],
            w3 = w[3]
        );
        out.push('\n');
        let _ = writeln!(out, "Clustering table:");
        let counts = self.clustering_table();
        let cw: Vec<usize> = counts
            .iter()
            .enumerate()
            .map(|(k, c)| (k + 1).to_string().len().max(c.to_string().len()))
            .collect();
        let header: Vec<String> = (0..self.g).map(|k| format!("{:>w$}", k + 1, w = cw[k])).collect();
        let row: Vec<String> = counts.iter().enumerate().map(|(k, c)| format!("{c:>w$}", w = cw[k])).collect();
        let _ = writeln!(out, "{}", header.join(" "));
        let _ = writeln!(out, "{}", row.join(" "));
        out
    }
}

/// Formats with `digits` significant digits, dropping trailing zeros.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let mag = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_column(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
        Dataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_normal_closed_form() {
        let data = normal_column(1, 80);
        let fit = best_fit(&data, &[1], &[CovarianceModel::E], &FitOptions::default()).unwrap();
        let col = data.column(0);
        let n = 80.0;
        let m = col.iter().sum::<f64>() / n;
        let s2 = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let ll = -n / 2.0 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0);
        assert_eq!(fit.df, 2);
        assert!((fit.bic - (2.0 * ll - 2.0 * n.ln())).abs() < 1e-9);
    }

    #[test]
    fn table_records_every_pair() {
        let data = normal_column(2, 50);
        let s = fit_models(&data, &[1, 2, 3], &CovarianceModel::UNIVARIATE, &FitOptions::default()).unwrap();
        assert_eq!(s.table.values.len(), 6);
        let best = s.table.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.best.bic, best);
        assert!(s.table.render().contains("E"));
    }

    #[test]
    fn wrong_dimension_model_is_rejected() {
        let data = normal_column(3, 20);
        assert!(best_fit(&data, &[1], &[CovarianceModel::VVV], &FitOptions::default()).is_err());
    }

    #[test]
    fn all_failures_give_no_model() {
        let data = Dataset::from_rows(&vec![vec![1.0, 2.0]; 10]).unwrap();
        let res = best_fit(&data, &[1, 2], &[CovarianceModel::VVV], &FitOptions::default());
        assert!(matches!(res, Err(Error::NoModel)));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(-1241.006, 7), "-1241.006");
        assert_eq!(format_sig(-2842.2981, 7), "-2842.298");
        assert_eq!(format_sig(-392.93971, 7), "-392.9397");
        assert_eq!(format_sig(-1029.3790, 7), "-1029.379");
    }
}
