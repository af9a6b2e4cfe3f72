use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::options::SearchOptions;
use super::trace::extended_f64;
use crate::data::{Dataset, VariableSet};
use crate::error::{Error, Result};
use crate::gmm::fit_models_rows;
use crate::regress::{reg_bic, reg_subset_bic};

/// Evidence that a candidate carries cluster structure beyond the selected
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicDiffResult {
    pub candidate: usize,
    /// Best clustering BIC (G ≥ 2) on the set plus the candidate; −∞ when
    /// every fit failed.
    #[serde(with = "extended_f64")]
    pub bic_clust_joint: f64,
    /// Best clustering BIC on the set alone; 0 for the empty set, −∞ when
    /// every fit failed.
    #[serde(with = "extended_f64")]
    pub bic_clust_s: f64,
    /// Regression BIC of the candidate on the set; +∞ for an exact fit.
    #[serde(with = "extended_f64")]
    pub bic_reg: f64,
    #[serde(with = "extended_f64")]
    pub bic_not_clust: f64,
    #[serde(with = "extended_f64")]
    pub diff: f64,
    pub note: Option<String>,
}

/// Runs `tasks` on up to `workers` threads and returns their results in
/// task order. A panicking task yields `Err` with the panic message.
pub fn run_parallel<T, F>(tasks: Vec<F>, workers: usize) -> Vec<std::result::Result<T, String>>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    run_on(Some(&pool), tasks)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "evaluation panicked".to_string()
    }
}

fn run_on<T, F>(pool: Option<&rayon::ThreadPool>, tasks: Vec<F>) -> Vec<std::result::Result<T, String>>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let guarded = |f: F| catch_unwind(AssertUnwindSafe(f)).map_err(panic_message);
    match pool {
        Some(pool) => pool.install(|| tasks.into_par_iter().map(guarded).collect()),
        None => tasks.into_iter().map(guarded).collect(),
    }
}

/// Outcome of the best clustering fit on one variable set.
#[derive(Debug, Clone, PartialEq)]
enum SetFit {
    Bic(f64),
    Failed,
    Panicked(String),
}

/// Scores candidates for one dataset and option set, caching the best
/// clustering BIC of every variable set it has fitted.
pub struct Evaluator<'a> {
    data: &'a Dataset,
    opts: &'a SearchOptions,
    gs: Vec<usize>,
    columns: Vec<Vec<f64>>,
    cache: HashMap<Vec<usize>, SetFit>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(data: &'a Dataset, opts: &'a SearchOptions) -> Result<Self> {
        opts.validate()?;
        let pool = match opts.parallel {
            Some(w) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            ),
            None => None,
        };
        Ok(Self {
            data,
            opts,
            gs: opts.clustering_gs(),
            columns: (0..data.d()).map(|j| data.column(j)).collect(),
            cache: HashMap::new(),
            pool,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn options(&self) -> &SearchOptions {
        self.opts
    }

    fn fit_set(data: &Dataset, opts: &SearchOptions, gs: &[usize], set: &[usize]) -> SetFit {
        let x = data.row_major(set, None);
        match fit_models_rows(&x, set.len(), gs, opts.models_for(set.len()), &opts.fit_options) {
            Ok(s) => SetFit::Bic(s.best.bic),
            Err(_) => SetFit::Failed,
        }
    }

    /// Fits every uncached non-empty set, fanning out over the worker pool.
    fn ensure(&mut self, sets: Vec<Vec<usize>>) {
        let mut missing: Vec<Vec<usize>> = Vec::new();
        for s in sets {
            if !s.is_empty() && !self.cache.contains_key(&s) && !missing.contains(&s) {
                missing.push(s);
            }
        }
        if missing.is_empty() {
            return;
        }
        let (data, opts, gs) = (self.data, self.opts, &self.gs);
        let tasks: Vec<_> = missing
            .iter()
            .map(|s| move || Self::fit_set(data, opts, gs, s))
            .collect();
        let results = run_on(self.pool.as_ref(), tasks);
        for (set, r) in missing.into_iter().zip(results) {
            let fit = r.unwrap_or_else(SetFit::Panicked);
            self.cache.insert(set, fit);
        }
    }

    /// Best clustering BIC on `set` (G ≥ 2), or `None` if no model could be
    /// fitted. Fits and caches on demand.
    pub fn clustering_bic(&mut self, set: &VariableSet) -> Option<f64> {
        let key = set.sorted();
        if key.is_empty() {
            return None;
        }
        self.ensure(vec![key.clone()]);
        match self.cache[&key] {
            SetFit::Bic(b) => Some(b),
            _ => None,
        }
    }

    fn regression(&self, s: &[usize], i: usize) -> std::result::Result<f64, String> {
        let y = &self.columns[i];
        let x: Vec<&[f64]> = s.iter().map(|&j| self.columns[j].as_slice()).collect();
        let fit = if x.is_empty() {
            reg_bic(y, &[])
        } else {
            reg_subset_bic(y, &x, self.opts.regression_mode)
        };
        fit.map(|f| f.bic).map_err(|e| e.to_string())
    }

    /// Scores `(set, candidate)` pairs. All clustering fits they need are
    /// computed first, in parallel; the cache is only written between
    /// fan-outs.
    pub fn evaluate(&mut self, pairs: &[(VariableSet, usize)]) -> Result<Vec<BicDiffResult>> {
        for (s, i) in pairs {
            s.check(self.data.d())?;
            if *i >= self.data.d() {
                return Err(Error::ColumnOutOfRange { index: *i, d: self.data.d() });
            }
            if s.contains(*i) {
                return Err(Error::InvalidArgument(format!("candidate {i} is already selected")));
            }
        }
        let mut needed = Vec::new();
        for (s, i) in pairs {
            needed.push(s.sorted());
            needed.push(s.with(*i).sorted());
        }
        self.ensure(needed);
        Ok(pairs.iter().map(|(s, i)| self.score(s, *i)).collect())
    }

    fn score(&self, s: &VariableSet, i: usize) -> BicDiffResult {
        let base_key = s.sorted();
        let joint_key = s.with(i).sorted();
        let mut notes = Vec::new();
        let lookup = |key: &Vec<usize>, notes: &mut Vec<String>| match &self.cache[key] {
            SetFit::Bic(b) => *b,
            SetFit::Failed => f64::NEG_INFINITY,
            SetFit::Panicked(msg) => {
                notes.push(format!("evaluation panicked: {msg}"));
                f64::NEG_INFINITY
            }
        };
        let joint = lookup(&joint_key, &mut notes);
        let base = if base_key.is_empty() { 0.0 } else { lookup(&base_key, &mut notes) };
        let reg = match self.regression(&base_key, i) {
            Ok(b) => b,
            Err(msg) => {
                notes.push(format!("degenerate candidate: {msg}"));
                f64::INFINITY
            }
        };
        let not_clust = base + reg;
        let diff = if joint == f64::NEG_INFINITY || reg == f64::INFINITY {
            if joint == f64::NEG_INFINITY && notes.is_empty() {
                notes.push("no clustering model could be fitted".into());
            }
            f64::NEG_INFINITY
        } else {
            joint - not_clust
        };
        BicDiffResult {
            candidate: i,
            bic_clust_joint: joint,
            bic_clust_s: base,
            bic_reg: reg,
            bic_not_clust: not_clust,
            diff,
            note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        }
    }

    /// Scores every candidate for inclusion and returns the one with the
    /// largest difference (ties to the lowest column) plus all results in
    /// candidate order.
    pub fn propose_add(
        &mut self,
        s: &VariableSet,
        candidates: &[usize],
    ) -> Result<(BicDiffResult, Vec<BicDiffResult>)> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("no candidates to propose".into()));
        }
        let pairs: Vec<_> = candidates.iter().map(|&i| (s.clone(), i)).collect();
        let all = self.evaluate(&pairs)?;
        let best = pick(&all, |a, b| a > b);
        Ok((best, all))
    }

    /// Scores every member of `s` for removal and returns the one with the
    /// smallest difference (ties to the lowest column) plus all results in
    /// member order.
    pub fn propose_remove(&mut self, s: &VariableSet) -> Result<(BicDiffResult, Vec<BicDiffResult>)> {
        if s.is_empty() {
            return Err(Error::InvalidArgument("no selected variables to remove".into()));
        }
        let pairs: Vec<_> = s.indices().iter().map(|&j| (s.without(j), j)).collect();
        let all = self.evaluate(&pairs)?;
        let best = pick(&all, |a, b| a < b);
        Ok((best, all))
    }
}

/// First-best by `better`, breaking ties by the lowest candidate column.
fn pick(all: &[BicDiffResult], better: impl Fn(f64, f64) -> bool) -> BicDiffResult {
    let mut best = &all[0];
    for r in &all[1..] {
        if better(r.diff, best.diff) || (r.diff == best.diff && r.candidate < best.candidate) {
            best = r;
        }
    }
    best.clone()
}

/// Stand-alone score of candidate `i` against the set `s`.
pub fn bic_diff(data: &Dataset, s: &VariableSet, i: usize, opts: &SearchOptions) -> Result<BicDiffResult> {
    let mut ev = Evaluator::new(data, opts)?;
    Ok(ev.evaluate(&[(s.clone(), i)])?.remove(0))
}

pub fn propose_add(
    data: &Dataset,
    s: &VariableSet,
    candidates: &[usize],
    opts: &SearchOptions,
) -> Result<(BicDiffResult, Vec<BicDiffResult>)> {
    Evaluator::new(data, opts)?.propose_add(s, candidates)
}

pub fn propose_remove(
    data: &Dataset,
    s: &VariableSet,
    opts: &SearchOptions,
) -> Result<(BicDiffResult, Vec<BicDiffResult>)> {
    Evaluator::new(data, opts)?.propose_remove(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(candidate: usize, diff: f64) -> BicDiffResult {
        BicDiffResult {
            candidate,
            bic_clust_joint: 0.0,
            bic_clust_s: 0.0,
            bic_reg: 0.0,
            bic_not_clust: 0.0,
            diff,
            note: None,
        }
    }

    #[test]
    fn add_tie_goes_to_lowest_column() {
        let all = vec![result(3, -5.0), result(1, 12.0), result(4, 12.0)];
        assert_eq!(pick(&all, |a, b| a > b).candidate, 1);
        let all = vec![result(4, 12.0), result(1, 12.0)];
        assert_eq!(pick(&all, |a, b| a > b).candidate, 1);
    }

    #[test]
    fn remove_picks_minimum() {
        let all = vec![result(0, 3.0), result(2, -7.0), result(5, -7.0)];
        assert_eq!(pick(&all, |a, b| a < b).candidate, 2);
    }

    #[test]
    fn parallel_results_keep_order_and_catch_panics() {
        let tasks: Vec<Box<dyn FnOnce() -> usize + Send>> = (0..10)
            .map(|i| -> Box<dyn FnOnce() -> usize + Send> {
                if i == 3 {
                    Box::new(|| panic!("boom"))
                } else {
                    Box::new(move || i * i)
                }
            })
            .collect();
        let out = run_parallel(tasks, 4);
        assert_eq!(out.len(), 10);
        for (i, r) in out.iter().enumerate() {
            if i == 3 {
                assert_eq!(r.as_ref().unwrap_err(), "boom");
            } else {
                assert_eq!(*r.as_ref().unwrap(), i * i);
            }
        }
        let more_workers = run_parallel((0..2).map(|i| move || i).collect::<Vec<_>>(), 16);
        assert_eq!(more_workers, vec![Ok(0), Ok(1)]);
    }
}
