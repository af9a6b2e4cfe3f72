use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{CovarianceModel, FitOptions};
use crate::regress::RegressionMode;

/// Default values shared by the library and the command line.
pub mod defaults {
    pub const G_RANGE: &str = "1:9";
    pub const DIRECTION: &str = "forward";
    pub const SEARCH: &str = "greedy";
    pub const BIC_DIFF: f64 = 0.0;
    pub const BIC_UPPER: f64 = 0.0;
    pub const BIC_LOWER: f64 = -10.0;
    pub const ITERMAX: usize = 100;
    pub const FORCETWO: bool = true;
    pub const REGRESSION: &str = "subset";
    pub const HC_MODEL: &str = "VVV";
    pub const SAMP: bool = false;
    pub const TOL: f64 = 1e-5;
    pub const MAX_ITER: usize = 1000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    Greedy,
    Headlong,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(Error::InvalidArgument(format!("unknown direction {other:?}"))),
        }
    }
}

impl fmt::Display for SearchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchKind::Greedy => "greedy",
            SearchKind::Headlong => "headlong",
        })
    }
}

impl FromStr for SearchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(SearchKind::Greedy),
            "headlong" => Ok(SearchKind::Headlong),
            other => Err(Error::InvalidArgument(format!("unknown search {other:?}"))),
        }
    }
}

/// Parses a component list: "a:b" for an inclusive range or a comma list.
pub fn parse_g_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("invalid component list {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let gs: Vec<usize> = if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if gs.is_empty() || gs.contains(&0) {
        return Err(bad());
    }
    Ok(gs)
}

/// Parses a comma-separated list of covariance model codes.
pub fn parse_models(s: &str) -> Result<Vec<CovarianceModel>> {
    s.split(',').map(|t| t.trim().parse()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Candidate component counts; clustering evidence uses those ≥ 2.
    pub g_range: Vec<usize>,
    /// Models for single-variable sets.
    pub em_models_1: Vec<CovarianceModel>,
    /// Models for multi-variable sets.
    pub em_models_2: Vec<CovarianceModel>,
    pub direction: Direction,
    pub search: SearchKind,
    /// Greedy acceptance threshold: add when diff > t, remove when diff < −t.
    pub bic_diff_threshold: f64,
    /// Headlong acceptance level.
    pub bic_upper: f64,
    /// Headlong discard level.
    pub bic_lower: f64,
    /// Cap on search iterations; each iteration is one inclusion and one
    /// exclusion step.
    pub itermax: usize,
    /// Accept the first two inclusions regardless of evidence.
    pub forcetwo: bool,
    pub fit_options: FitOptions,
    pub regression_mode: RegressionMode,
    /// Worker count for candidate evaluation; `None` runs on the caller.
    pub parallel: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            g_range: parse_g_range(defaults::G_RANGE).expect("valid default"),
            em_models_1: CovarianceModel::UNIVARIATE.to_vec(),
            em_models_2: CovarianceModel::MULTIVARIATE.to_vec(),
            direction: defaults::DIRECTION.parse().expect("valid default"),
            search: defaults::SEARCH.parse().expect("valid default"),
            bic_diff_threshold: defaults::BIC_DIFF,
            bic_upper: defaults::BIC_UPPER,
            bic_lower: defaults::BIC_LOWER,
            itermax: defaults::ITERMAX,
            forcetwo: defaults::FORCETWO,
            fit_options: FitOptions {
                tol: defaults::TOL,
                max_iter: defaults::MAX_ITER,
                hc_model: defaults::HC_MODEL.parse().expect("valid default"),
                samp: defaults::SAMP,
                ..FitOptions::default()
            },
            regression_mode: defaults::REGRESSION.parse().expect("valid default"),
            parallel: None,
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.g_range.is_empty() || self.g_range.iter().all(|&g| g < 2) {
            return invalid("g_range must contain a component count of at least 2");
        }
        if self.g_range.contains(&0) {
            return invalid("component counts must be at least 1");
        }
        if self.em_models_1.iter().any(|m| !m.is_univariate()) {
            return invalid("em_models_1 must hold univariate models");
        }
        if self.em_models_2.iter().any(|m| m.is_univariate()) {
            return invalid("em_models_2 must hold multivariate models");
        }
        if self.em_models_1.is_empty() || self.em_models_2.is_empty() {
            return invalid("model lists must be non-empty");
        }
        if self.bic_lower.is_nan() || self.bic_upper.is_nan() || self.bic_diff_threshold.is_nan() {
            return invalid("thresholds must not be NaN");
        }
        if self.bic_lower > self.bic_upper {
            return invalid("bic_lower must not exceed bic_upper");
        }
        if self.itermax == 0 {
            return invalid("itermax must be at least 1");
        }
        if self.search == SearchKind::Headlong && self.direction == Direction::Backward {
            return invalid("headlong search is only available in the forward direction");
        }
        if self.parallel == Some(0) {
            return invalid("parallel worker count must be at least 1");
        }
        self.fit_options.validate()
    }

    /// Component counts used for clustering evidence.
    pub(crate) fn clustering_gs(&self) -> Vec<usize> {
        self.g_range.iter().copied().filter(|&g| g >= 2).collect()
    }

    pub(crate) fn models_for(&self, k: usize) -> &[CovarianceModel] {
        if k == 1 {
            &self.em_models_1
        } else {
            &self.em_models_2
        }
    }
}
