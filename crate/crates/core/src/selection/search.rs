use serde::{Deserialize, Serialize};

use super::engine::{BicDiffResult, Evaluator};
use super::options::{Direction, SearchKind, SearchOptions};
use super::trace::{render_report, Decision, StepType, TraceEntry};
use crate::data::{Dataset, VariableSet};
use crate::error::{Error, Result};
use crate::gmm::{fit_models, FitResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub search: SearchKind,
    pub direction: Direction,
    /// Selected columns in selection order.
    pub subset: VariableSet,
    pub trace: Vec<TraceEntry>,
    /// Best model over the full component range on the selected columns.
    pub final_fit: Option<FitResult>,
    /// Columns dropped for good by the headlong lower level.
    pub candidates_discarded: Vec<usize>,
    pub iterations: usize,
    pub warning: Option<String>,
}

impl SearchResult {
    pub fn subset_names<'a>(&self, data: &'a Dataset) -> Vec<&'a str> {
        self.subset.names(data)
    }

    /// The console report: header, trace table and selected subset.
    pub fn report(&self, data: &Dataset) -> String {
        render_report(self.search, self.direction, &self.trace, &self.subset_names(data))
    }

    /// The set the search started from.
    pub fn initial_set(&self, d: usize) -> VariableSet {
        match self.direction {
            Direction::Forward => VariableSet::new(),
            Direction::Backward => VariableSet::all(d),
        }
    }

    /// Applies the accepted steps of the trace to the initial set.
    pub fn replay(&self, d: usize) -> VariableSet {
        let mut s = self.initial_set(d);
        for e in &self.trace {
            if e.decision == Decision::Accepted {
                match e.step_type {
                    StepType::Add => {
                        s.push(e.variable);
                    }
                    StepType::Remove => {
                        s.remove(e.variable);
                    }
                }
            }
        }
        s
    }
}

struct Recorder<'e, 'a> {
    ev: &'e mut Evaluator<'a>,
    trace: Vec<TraceEntry>,
}

impl Recorder<'_, '_> {
    fn record(&mut self, r: &BicDiffResult, step_type: StepType, decision: Decision, after: &VariableSet) {
        let bic = self.ev.clustering_bic(after);
        let data = self.ev.data();
        self.trace.push(TraceEntry {
            step: self.trace.len() + 1,
            variable: r.candidate,
            variable_name: data.name(r.candidate).to_string(),
            bic,
            bic_difference: r.diff,
            step_type,
            decision,
        });
    }
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.d() < 2 {
        return Err(Error::InvalidArgument("variable selection needs at least two columns".into()));
    }
    Ok(())
}

fn finish(
    data: &Dataset,
    opts: &SearchOptions,
    subset: VariableSet,
    trace: Vec<TraceEntry>,
    discarded: Vec<usize>,
    iterations: usize,
    mut warning: Option<String>,
) -> Result<SearchResult> {
    let final_fit = if subset.is_empty() {
        None
    } else {
        let sub = data.subset_columns(&subset)?;
        let models = opts.models_for(subset.len());
        match fit_models(&sub, &opts.g_range, models, &opts.fit_options) {
            Ok(s) => Some(s.best),
            Err(Error::NoModel) => {
                warning.get_or_insert_with(|| "no model could be fitted on the selected subset".into());
                None
            }
            Err(e) => return Err(e),
        }
    };
    Ok(SearchResult {
        search: opts.search,
        direction: opts.direction,
        subset,
        trace,
        final_fit,
        candidates_discarded: discarded,
        iterations,
        warning,
    })
}

fn excluded(d: usize, s: &VariableSet, discarded: &[usize]) -> Vec<usize> {
    (0..d).filter(|&j| !s.contains(j) && !discarded.contains(&j)).collect()
}

/// Stepwise search alternating inclusion and exclusion proposals.
///
/// Forward runs start empty and try an inclusion then an exclusion each
/// iteration; backward runs start from every column and try an exclusion
/// then an inclusion. With `forcetwo`, the first two forward inclusions are
/// accepted regardless of evidence, exclusions need at least three selected
/// columns, and backward inclusions need at least three excluded columns.
/// The search stops once an iteration changes nothing, or at `itermax`.
pub fn greedy_search(data: &Dataset, opts: &SearchOptions) -> Result<SearchResult> {
    check_data(data)?;
    let mut ev = Evaluator::new(data, opts)?;
    let d = data.d();
    let t = opts.bic_diff_threshold;
    let min_remove = if opts.forcetwo { 3 } else { 2 };
    let min_add_pool = if opts.forcetwo && opts.direction == Direction::Backward { 3 } else { 1 };
    let mut rec = Recorder { ev: &mut ev, trace: Vec::new() };
    let mut s = match opts.direction {
        Direction::Forward => VariableSet::new(),
        Direction::Backward => VariableSet::all(d),
    };
    let mut warning = None;
    let mut iterations = 0;

    let add_step = |rec: &mut Recorder, s: &mut VariableSet| -> Result<bool> {
        let pool = excluded(d, s, &[]);
        if pool.len() < min_add_pool {
            return Ok(false);
        }
        let (best, _) = rec.ev.propose_add(s, &pool)?;
        let forced = opts.forcetwo && opts.direction == Direction::Forward && s.len() < 2;
        let accept = forced || best.diff > t;
        if accept {
            s.push(best.candidate);
        }
        let decision = if accept { Decision::Accepted } else { Decision::Rejected };
        rec.record(&best, StepType::Add, decision, s);
        Ok(accept)
    };
    let remove_step = |rec: &mut Recorder, s: &mut VariableSet| -> Result<bool> {
        if s.len() < min_remove {
            return Ok(false);
        }
        let (worst, _) = rec.ev.propose_remove(s)?;
        let accept = worst.diff < -t;
        if accept {
            s.remove(worst.candidate);
        }
        let decision = if accept { Decision::Accepted } else { Decision::Rejected };
        rec.record(&worst, StepType::Remove, decision, s);
        Ok(accept)
    };

    while iterations < opts.itermax {
        iterations += 1;
        let changed = match opts.direction {
            Direction::Forward => {
                let a = add_step(&mut rec, &mut s)?;
                let r = remove_step(&mut rec, &mut s)?;
                a || r
            }
            Direction::Backward => {
                let r = remove_step(&mut rec, &mut s)?;
                if s.is_empty() {
                    warning = Some("every variable was removed".to_string());
                    break;
                }
                let a = add_step(&mut rec, &mut s)?;
                a || r
            }
        };
        if !changed {
            break;
        }
    }
    if s.is_empty() && warning.is_none() && opts.direction == Direction::Backward {
        warning = Some("every variable was removed".to_string());
    }
    let trace = rec.trace;
    finish(data, opts, s, trace, Vec::new(), iterations, warning)
}

/// Headlong forward search.
///
/// An inclusion step scans the remaining candidates in column order and
/// accepts the first whose difference exceeds `bic_upper`; candidates
/// scanned with a difference below `bic_lower` are discarded for good. An
/// exclusion step scans the selected columns in column order and removes the
/// first whose difference falls below `bic_upper`, discarding it if it is
/// also below `bic_lower`. Forced inclusions take the largest difference
/// when nothing clears `bic_upper`. Each step adds one trace entry: the
/// accepted column, or the best-scoring scanned column marked rejected.
pub fn headlong_search(data: &Dataset, opts: &SearchOptions) -> Result<SearchResult> {
    check_data(data)?;
    if opts.direction != Direction::Forward {
        return Err(Error::InvalidArgument(
            "headlong search is only available in the forward direction".into(),
        ));
    }
    let mut ev = Evaluator::new(data, opts)?;
    let d = data.d();
    let (upper, lower) = (opts.bic_upper, opts.bic_lower);
    let min_remove = if opts.forcetwo { 3 } else { 2 };
    let mut rec = Recorder { ev: &mut ev, trace: Vec::new() };
    let mut s = VariableSet::new();
    let mut discarded: Vec<usize> = Vec::new();
    let mut iterations = 0;

    while iterations < opts.itermax {
        iterations += 1;
        let mut changed = false;

        // inclusion
        let pool = excluded(d, &s, &discarded);
        if !pool.is_empty() {
            let forced = opts.forcetwo && s.len() < 2;
            let mut scanned: Vec<BicDiffResult> = Vec::new();
            let mut chosen: Option<BicDiffResult> = None;
            for &i in &pool {
                let r = rec.ev.evaluate(&[(s.clone(), i)])?.remove(0);
                if r.diff > upper {
                    chosen = Some(r);
                    break;
                }
                scanned.push(r);
            }
            let best_scanned = scanned.iter().cloned().reduce(|a, b| {
                if b.diff > a.diff || (b.diff == a.diff && b.candidate < a.candidate) {
                    b
                } else {
                    a
                }
            });
            if chosen.is_none() && forced {
                chosen = best_scanned.clone();
            }
            for r in &scanned {
                let taken = chosen.as_ref().is_some_and(|c| c.candidate == r.candidate);
                if r.diff < lower && !taken {
                    discarded.push(r.candidate);
                }
            }
            match chosen {
                Some(c) => {
                    s.push(c.candidate);
                    changed = true;
                    rec.record(&c, StepType::Add, Decision::Accepted, &s);
                }
                None => {
                    if let Some(b) = best_scanned {
                        rec.record(&b, StepType::Add, Decision::Rejected, &s);
                    }
                }
            }
        }

        // exclusion
        if s.len() >= min_remove {
            let mut members = s.indices().to_vec();
            members.sort_unstable();
            let mut removed: Option<BicDiffResult> = None;
            let mut worst: Option<BicDiffResult> = None;
            for j in members {
                let r = rec.ev.evaluate(&[(s.without(j), j)])?.remove(0);
                if r.diff < upper {
                    removed = Some(r);
                    break;
                }
                if worst.as_ref().is_none_or(|w| r.diff < w.diff) {
                    worst = Some(r);
                }
            }
            match removed {
                Some(r) => {
                    s.remove(r.candidate);
                    if r.diff < lower {
                        discarded.push(r.candidate);
                    }
                    changed = true;
                    rec.record(&r, StepType::Remove, Decision::Accepted, &s);
                }
                None => {
                    if let Some(w) = worst {
                        rec.record(&w, StepType::Remove, Decision::Rejected, &s);
                    }
                }
            }
        }

        if !changed {
            break;
        }
    }
    discarded.sort_unstable();
    let trace = rec.trace;
    finish(data, opts, s, trace, discarded, iterations, None)
}

/// Runs the search selected by `opts.search`.
pub fn search(data: &Dataset, opts: &SearchOptions) -> Result<SearchResult> {
    match opts.search {
        SearchKind::Greedy => greedy_search(data, opts),
        SearchKind::Headlong => headlong_search(data, opts),
    }
}
