//! Seeded synthetic-data generators.
//!
//! Every generator draws from ChaCha8 seeded with the caller's seed, and
//! multivariate normals are sampled through the lower Cholesky factor of
//! their covariance, so output is bit-identical across platforms. Labels are
//! 0-based.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{default_names, Dataset, VariableSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Maugis1,
    Maugis4,
    Maugis5,
    Maugis7,
    /// Three spherical groups on five columns plus twenty noise columns.
    Wt,
    Twovar5,
    Twovar10,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Maugis1,
        ScenarioId::Maugis4,
        ScenarioId::Maugis5,
        ScenarioId::Maugis7,
        ScenarioId::Wt,
        ScenarioId::Twovar5,
        ScenarioId::Twovar10,
    ];
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::Maugis1 => "maugis1",
            ScenarioId::Maugis4 => "maugis4",
            ScenarioId::Maugis5 => "maugis5",
            ScenarioId::Maugis7 => "maugis7",
            ScenarioId::Wt => "wt",
            ScenarioId::Twovar5 => "twovar5",
            ScenarioId::Twovar10 => "twovar10",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.to_string() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// A generator call: scenario, size and seed. `size` is the row count, or
/// the per-group count for [`ScenarioId::Wt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: Dataset,
    pub labels: Vec<usize>,
    /// Columns that carry the cluster structure.
    pub truth: VariableSet,
}

impl ScenarioSpec {
    pub fn generate(&self) -> Result<Generated> {
        match self.id {
            ScenarioId::Maugis1 => gen_maugis(1, self.size, self.seed),
            ScenarioId::Maugis4 => gen_maugis(4, self.size, self.seed),
            ScenarioId::Maugis5 => gen_maugis(5, self.size, self.seed),
            ScenarioId::Maugis7 => gen_maugis(7, self.size, self.seed),
            ScenarioId::Wt => gen_wt(self.size, self.seed),
            ScenarioId::Twovar5 => gen_twovar(TwovarVariant::Five, self.size, self.seed),
            ScenarioId::Twovar10 => gen_twovar(TwovarVariant::Ten, self.size, self.seed),
        }
    }
}

/// Per-replicate seed derived from a base seed.
pub fn replicate_seed(base: u64, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(replicate as u64 + 1);
    rng.random()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Lower Cholesky factor of a small covariance given row-major.
fn chol(cov: &[f64], p: usize) -> Vec<f64> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = cov[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = if i == j { s.sqrt() } else { s / l[j * p + j] };
        }
    }
    l
}

fn mvn(rng: &mut ChaCha8Rng, mean: &[f64], l: &[f64], out: &mut [f64]) {
    let p = mean.len();
    let z: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
    for i in 0..p {
        out[i] = mean[i] + (0..=i).map(|k| l[i * p + k] * z[k]).sum::<f64>();
    }
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 {
        return Err(Error::InvalidArgument("size must be at least 1".into()));
    }
    Ok(())
}

fn finish(rows: Vec<Vec<f64>>, labels: Vec<usize>, truth: Vec<usize>) -> Result<Generated> {
    let d = rows[0].len();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Ok(Generated {
        data: Dataset::from_columns(&columns, default_names(d))?,
        labels,
        truth: VariableSet::from_indices(truth)?,
    })
}

/// Regression coefficients (2 × 8, row-major) and noise variances for a
/// four-cluster scenario.
fn maugis_params(id: u8) -> Option<([f64; 16], [f64; 8])> {
    let ones = [1.0; 8];
    match id {
        1 => Some(([0.0; 16], ones)),
        4 => Some((
            [
                0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
            ones,
        )),
        5 => Some((
            [
                0.5, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0,
            ],
            [1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0],
        )),
        7 => Some((
            [
                0.5, 0.0, 2.0, 0.0, 2.0, 0.5, 2.0, 0.0, //
                0.0, 1.0, 0.0, 3.0, 0.5, 1.0, 0.0, 3.0,
            ],
            [1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0],
        )),
        _ => None,
    }
}

/// Four-cluster, ten-column scenario: the first two columns are clustered
/// and the other eight are a linear function of them plus Gaussian noise.
pub fn gen_maugis(id: u8, n: usize, seed: u64) -> Result<Generated> {
    let (beta, omega) = maugis_params(id)
        .ok_or_else(|| Error::InvalidArgument(format!("unsupported scenario {id}; expected 1, 4, 5 or 7")))?;
    check_size(n)?;
    const MEANS: [[f64; 2]; 4] = [[-2.0, -2.0], [-2.0, 2.0], [2.0, -2.0], [2.0, 2.0]];
    const CUM: [f64; 4] = [0.3, 0.5, 0.8, 1.0];
    let sd: Vec<f64> = omega.iter().map(|v| v.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let k = CUM.iter().position(|&c| u < c).unwrap_or(3);
        let x1 = MEANS[k][0] + normal(&mut rng);
        let x2 = MEANS[k][1] + normal(&mut rng);
        let mut row = vec![x1, x2];
        for j in 0..8 {
            row.push(x1 * beta[j] + x2 * beta[8 + j] + sd[j] * normal(&mut rng));
        }
        rows.push(row);
        labels.push(k);
    }
    finish(rows, labels, vec![0, 1])
}

/// Three groups of `n_g` rows: five spherical clustering columns with means
/// 1.7, 0 and −1.7, then twenty standard-normal noise columns.
pub fn gen_wt(n_g: usize, seed: u64) -> Result<Generated> {
    check_size(n_g)?;
    const MU: f64 = 1.7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(3 * n_g);
    let mut labels = Vec::with_capacity(3 * n_g);
    for (k, m) in [MU, 0.0, -MU].into_iter().enumerate() {
        for _ in 0..n_g {
            let row: Vec<f64> = (0..25)
                .map(|j| if j < 5 { m } else { 0.0 } + normal(&mut rng))
                .collect();
            rows.push(row);
            labels.push(k);
        }
    }
    finish(rows, labels, (0..5).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwovarVariant {
    Five,
    Ten,
}

/// Two correlated-Gaussian groups on the first two columns with equal
/// proportions, plus dependent and independent noise columns (five or ten
/// columns in total).
pub fn gen_twovar(variant: TwovarVariant, n: usize, seed: u64) -> Result<Generated> {
    check_size(n)?;
    const MU1: [f64; 2] = [0.0, 0.0];
    const MU2: [f64; 2] = [3.0, 3.0];
    let l1 = chol(&[1.0, 0.5, 0.5, 1.0], 2);
    let l2 = chol(&[1.5, -0.7, -0.7, 1.5], 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut pair = [0.0; 2];
    for _ in 0..n {
        let u: f64 = rng.random();
        let k = usize::from(u >= 0.5);
        if k == 0 {
            mvn(&mut rng, &MU1, &l1, &mut pair);
        } else {
            mvn(&mut rng, &MU2, &l2, &mut pair);
        }
        let mut row = pair.to_vec();
        row.push(pair[0] + normal(&mut rng));
        if variant == TwovarVariant::Ten {
            row.push(pair[1] + normal(&mut rng));
        }
        row.push(1.5 + 2.0 * normal(&mut rng));
        row.push(2.0 + normal(&mut rng));
        if variant == TwovarVariant::Ten {
            mvn(&mut rng, &MU1, &l1, &mut pair);
            row.extend_from_slice(&pair);
            mvn(&mut rng, &MU2, &l2, &mut pair);
            row.extend_from_slice(&pair);
        }
        rows.push(row);
        labels.push(k);
    }
    finish(rows, labels, vec![0, 1])
}
