//! Model-based agglomerative hierarchical clustering used to initialize EM.
//!
//! Starting from singletons, each step merges the pair of clusters whose
//! union costs least under the classification likelihood of the chosen
//! criterion:
//!
//! - EII: increase in total within-cluster sum of squares (Ward).
//! - VVV: Σ_k n_k log det((W_k + α I) / n_k), with α the average
//!   per-variable variance of the data; the ridge keeps small clusters well
//!   defined.
//! - EEE: log det(W + α I) for the pooled within-cluster scatter W.
//!
//! Ties go to the lexicographically smallest (i, j) pair of cluster ids, a
//! cluster being identified by its smallest row position.

use super::model::CovarianceModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// The merge sequence of an agglomeration over `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct HcTree {
    rows: Vec<usize>,
    merges: Vec<(usize, usize)>,
}

impl HcTree {
    pub(crate) fn from_parts(rows: Vec<usize>, merges: Vec<(usize, usize)>) -> Self {
        Self { rows, merges }
    }

    /// Rows of the source dataset the tree was built on.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n_used(&self) -> usize {
        self.rows.len()
    }

    /// Merges as (kept, absorbed) positions into `rows`, in merge order.
    pub fn merges(&self) -> &[(usize, usize)] {
        &self.merges
    }

    /// Hard partition of the used rows into `g` classes, labelled 0..g in
    /// order of first appearance.
    pub fn partition(&self, g: usize) -> Result<Vec<usize>> {
        let n = self.n_used();
        if g == 0 || g > n {
            return Err(Error::InvalidArgument(format!(
                "cannot cut a tree over {n} rows into {g} classes"
            )));
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(a, b) in &self.merges[..n - g] {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            parent[rb] = ra;
        }
        let mut label_of_root = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            out.push(label_of_root[r]);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    Ward,
    Unconstrained,
    Common,
}

fn criterion_for(model: CovarianceModel, p: usize) -> Result<Criterion> {
    use CovarianceModel::*;
    Ok(match model {
        EII | E => Criterion::Ward,
        VVV | V => Criterion::Unconstrained,
        EEE if p == 1 => Criterion::Ward,
        EEE => Criterion::Common,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unsupported hierarchical criterion {other}"
            )))
        }
    })
}

/// Agglomerates the rows of `data` (or only `rows`, if given) under
/// `criterion` ∈ {EII, EEE, VVV}.
pub fn hclust_init(
    data: &Dataset,
    criterion: CovarianceModel,
    rows: Option<&[usize]>,
) -> Result<HcTree> {
    let p = data.d();
    let cols: Vec<usize> = (0..p).collect();
    let used: Vec<usize> = match rows {
        Some(r) => {
            if let Some(&bad) = r.iter().find(|&&i| i >= data.n()) {
                return Err(Error::InvalidArgument(format!("row {bad} out of range")));
            }
            r.to_vec()
        }
        None => (0..data.n()).collect(),
    };
    let x = data.row_major(&cols, Some(&used));
    hclust_rows(&x, p, criterion).map(|merges| HcTree { rows: used, merges })
}

pub(crate) fn hclust_rows(x: &[f64], p: usize, model: CovarianceModel) -> Result<Vec<(usize, usize)>> {
    let n = x.len() / p;
    if n == 0 {
        return Err(Error::InvalidArgument("no rows to cluster".into()));
    }
    let criterion = criterion_for(model, p)?;
    Ok(match criterion {
        Criterion::Common => agglomerate_common(x, p),
        c => LocalAgglomeration::new(x, p, c).run(),
    })
}

/// Centers the rows, rotates them onto their principal axes and divides
/// each axis by the square root of its singular value. Axes with a
/// vanishing singular value are dropped. Returns the rows and their new
/// width.
pub(crate) fn svd_scale(x: &[f64], p: usize) -> (Vec<f64>, usize) {
    let n = x.len() / p;
    let mut m = nalgebra::DMatrix::from_row_slice(n, p, x);
    for j in 0..p {
        let mu = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mu);
    }
    let svd = m.clone().svd(false, true);
    let (Some(v_t), sv) = (svd.v_t, svd.singular_values) else {
        return (x.to_vec(), p);
    };
    let top = sv.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > top * 1e-12).collect();
    if keep.is_empty() {
        return (x.to_vec(), p);
    }
    let z = &m * v_t.transpose();
    let q = keep.len();
    let mut out = Vec::with_capacity(n * q);
    for i in 0..n {
        for &k in &keep {
            out.push(z[(i, k)] / sv[k].sqrt());
        }
    }
    (out, q)
}

/// Initial classes for univariate data: G intervals between sample
/// quantiles (type-7 interpolation), dropping the left ends of the narrowest
/// intervals when ties leave surplus breakpoints.
pub fn quantile_partition(x: &[f64], g: usize) -> Vec<usize> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let quantile = |prob: f64| {
        let h = (n - 1) as f64 * prob;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let mut points = g;
    let mut q: Vec<f64>;
    loop {
        points += 1;
        q = (0..points).map(|i| quantile(i as f64 / (points - 1) as f64)).collect();
        q.dedup();
        if q.len() > g || points > n + 1 {
            break;
        }
    }
    if q.len() > g + 1 {
        let mut order: Vec<usize> = (0..q.len() - 1).collect();
        order.sort_by(|&a, &b| (q[a + 1] - q[a]).total_cmp(&(q[b + 1] - q[b])));
        let mut drop = order[..q.len() - g - 1].to_vec();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for i in drop {
            q.remove(i);
        }
    }
    let eps = f64::EPSILON.sqrt();
    let last = q.len() - 1;
    q[0] = sorted[0] - eps;
    q[last] = sorted[n - 1] + eps;
    x.iter()
        .map(|&v| (0..last).rfind(|&i| v >= q[i]).unwrap_or(0))
        .collect()
}

/// Average per-variable variance of the rows, floored at machine epsilon.
fn ridge(x: &[f64], p: usize) -> f64 {
    let n = x.len() / p;
    let mut mean = vec![0.0; p];
    for row in x.chunks_exact(p) {
        for j in 0..p {
            mean[j] += row[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let ss: f64 = x
        .chunks_exact(p)
        .map(|row| row.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    (ss / (n * p) as f64).max(f64::EPSILON)
}

#[inline]
fn pair_key(cost: f64, i: usize, j: usize) -> (f64, usize, usize) {
    (cost, i.min(j), i.max(j))
}

#[inline]
fn key_less(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (a.1, a.2) < (b.1, b.2),
    }
}

/// Agglomeration for criteria whose merge cost depends only on the two
/// clusters involved. Each cluster tracks its cheapest partner among the
/// clusters with a larger id, so every pair is seen from its smaller end;
/// after a merge only clusters whose partner got dearer or disappeared are
/// rescanned.
struct LocalAgglomeration {
    p: usize,
    criterion: Criterion,
    alpha: f64,
    size: Vec<f64>,
    mean: Vec<f64>,
    scatter: Vec<f64>,
    own: Vec<f64>,
    active: Vec<usize>,
    best: Vec<(f64, usize)>,
    scratch: Vec<f64>,
    chol: Vec<f64>,
    /// Condensed upper-triangular table of current pair costs, when small
    /// enough to hold.
    cache: Option<Vec<f64>>,
}

/// Largest row count for which pair costs are tabulated.
const CACHE_MAX_ROWS: usize = 10_000;

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl LocalAgglomeration {
    fn new(x: &[f64], p: usize, criterion: Criterion) -> Self {
        let n = x.len() / p;
        let alpha = ridge(x, p);
        let with_scatter = criterion == Criterion::Unconstrained;
        let mut s = Self {
            p,
            criterion,
            alpha,
            size: vec![1.0; n],
            mean: x.to_vec(),
            scatter: if with_scatter { vec![0.0; n * p * p] } else { Vec::new() },
            own: vec![0.0; n],
            active: (0..n).collect(),
            best: vec![(f64::INFINITY, usize::MAX); n],
            scratch: vec![0.0; p * p],
            chol: vec![0.0; p * p],
            cache: None,
        };
        if with_scatter {
            s.scratch.iter_mut().for_each(|v| *v = 0.0);
            let singleton = s.unconstrained_cost(1.0);
            s.own.iter_mut().for_each(|c| *c = singleton);
        }
        s
    }

    /// Fills `scratch` with the scatter of the union of clusters a and b.
    fn union_scatter(&mut self, a: usize, b: usize) {
        let p = self.p;
        let (na, nb) = (self.size[a], self.size[b]);
        let c = na * nb / (na + nb);
        let (ma, mb) = (&self.mean[a * p..(a + 1) * p], &self.mean[b * p..(b + 1) * p]);
        let (wa, wb) = (
            &self.scatter[a * p * p..(a + 1) * p * p],
            &self.scatter[b * p * p..(b + 1) * p * p],
        );
        for r in 0..p {
            let dr = ma[r] - mb[r];
            for col in 0..p {
                let idx = r * p + col;
                self.scratch[idx] = wa[idx] + wb[idx] + c * dr * (ma[col] - mb[col]);
            }
        }
    }

    fn unconstrained_cost(&mut self, n_union: f64) -> f64 {
        let p = self.p;
        for r in 0..p {
            for c in 0..p {
                let v = self.scratch[r * p + c] + if r == c { self.alpha } else { 0.0 };
                self.chol[r * p + c] = v / n_union;
            }
        }
        if !linalg::cholesky_in_place(&mut self.chol, p) {
            return f64::INFINITY;
        }
        let log_det: f64 = 2.0 * (0..p).map(|i| self.chol[i * p + i].ln()).sum::<f64>();
        n_union * log_det
    }

    fn merge_cost(&mut self, a: usize, b: usize) -> f64 {
        let p = self.p;
        match self.criterion {
            Criterion::Ward => {
                let (na, nb) = (self.size[a], self.size[b]);
                let ma = &self.mean[a * p..(a + 1) * p];
                let mb = &self.mean[b * p..(b + 1) * p];
                let d2: f64 = ma.iter().zip(mb).map(|(x, y)| (x - y) * (x - y)).sum();
                na * nb / (na + nb) * d2
            }
            Criterion::Unconstrained => {
                self.union_scatter(a, b);
                let n_union = self.size[a] + self.size[b];
                self.unconstrained_cost(n_union) - self.own[a] - self.own[b]
            }
            Criterion::Common => unreachable!("global criterion"),
        }
    }

    /// Current cost of merging clusters i and j, from the table when present.
    fn cost(&mut self, i: usize, j: usize) -> f64 {
        let (a, b) = (i.min(j), i.max(j));
        match &self.cache {
            Some(t) => t[tri_index(self.size.len(), a, b)],
            None => self.merge_cost(a, b),
        }
    }

    /// Recomputes the cheapest partner of `i` among active clusters above it.
    fn rescan(&mut self, i: usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        let active = std::mem::take(&mut self.active);
        let start = active.partition_point(|&j| j <= i);
        for &j in &active[start..] {
            let c = self.cost(i, j);
            if best.1 == usize::MAX || c < best.0 {
                best = (c, j);
            }
        }
        self.active = active;
        self.best[i] = best;
    }

    fn absorb(&mut self, a: usize, b: usize) {
        let p = self.p;
        let (na, nb) = (self.size[a], self.size[b]);
        let n_union = na + nb;
        if self.criterion == Criterion::Unconstrained {
            self.union_scatter(a, b);
            self.own[a] = self.unconstrained_cost(n_union);
            self.scatter[a * p * p..(a + 1) * p * p].copy_from_slice(&self.scratch);
        }
        for j in 0..p {
            self.mean[a * p + j] = (na * self.mean[a * p + j] + nb * self.mean[b * p + j]) / n_union;
        }
        self.size[a] = n_union;
    }

    fn run(mut self) -> Vec<(usize, usize)> {
        let n = self.size.len();
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        if (2..=CACHE_MAX_ROWS).contains(&n) {
            let mut table = vec![0.0; n * (n - 1) / 2];
            for i in 0..n {
                for j in i + 1..n {
                    table[tri_index(n, i, j)] = self.merge_cost(i, j);
                }
            }
            self.cache = Some(table);
        }
        for i in 0..n {
            self.rescan(i);
        }
        let mut costs = Vec::with_capacity(n);
        while self.active.len() > 1 {
            let mut pick = (f64::INFINITY, usize::MAX, usize::MAX);
            for &i in &self.active {
                let (c, j) = self.best[i];
                if j == usize::MAX {
                    continue;
                }
                let k = pair_key(c, i, j);
                if pick.1 == usize::MAX || key_less(k, pick) {
                    pick = k;
                }
            }
            let (a, b) = (pick.1, pick.2);
            self.absorb(a, b);
            self.active.retain(|&k| k != b);
            merges.push((a, b));

            let others: Vec<usize> = self.active.iter().copied().filter(|&k| k != a).collect();
            costs.clear();
            let mut best_a = (f64::INFINITY, usize::MAX);
            for &k in &others {
                let c = self.merge_cost(a.min(k), a.max(k));
                if let Some(t) = self.cache.as_mut() {
                    t[tri_index(n, a.min(k), a.max(k))] = c;
                }
                costs.push(c);
                if k > a && (best_a.1 == usize::MAX || c < best_a.0) {
                    best_a = (c, k);
                }
            }
            self.best[a] = best_a;
            for (idx, &k) in others.iter().enumerate() {
                let (bc, bj) = self.best[k];
                if k > a {
                    if bj == b {
                        self.rescan(k);
                    }
                    continue;
                }
                let c = costs[idx];
                // Costs to every other cluster are unchanged and were no
                // lower than the old best, so a rescan is needed only when
                // the merged cluster got dearer than that best.
                if bj == a && c <= bc || bj == b && c < bc {
                    self.best[k] = (c, a);
                } else if bj == a || bj == b {
                    self.rescan(k);
                } else if c < bc || c == bc && a < bj {
                    self.best[k] = (c, a);
                }
            }
        }
        merges
    }
}

/// EEE agglomeration: the pooled scatter changes with every merge, so all
/// pair costs are recomputed each step (cubic in the number of rows).
fn agglomerate_common(x: &[f64], p: usize) -> Vec<(usize, usize)> {
    let n = x.len() / p;
    let alpha = ridge(x, p);
    let mut size = vec![1.0; n];
    let mut mean = x.to_vec();
    let mut pooled = vec![0.0; p * p];
    for j in 0..p {
        pooled[j * p + j] = alpha;
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut delta = vec![0.0; p];
    while active.len() > 1 {
        let mut l = pooled.clone();
        let ok = linalg::cholesky_in_place(&mut l, p);
        debug_assert!(ok);
        let mut pick = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let c = size[i] * size[j] / (size[i] + size[j]);
                for k in 0..p {
                    delta[k] = mean[i * p + k] - mean[j * p + k];
                }
                linalg::forward_solve(&l, p, &mut delta);
                let cost = c * delta.iter().map(|v| v * v).sum::<f64>();
                let key = pair_key(cost, i, j);
                if pick.1 == usize::MAX || key_less(key, pick) {
                    pick = key;
                }
            }
        }
        let (a, b) = (pick.1, pick.2);
        let c = size[a] * size[b] / (size[a] + size[b]);
        for r in 0..p {
            for s in 0..p {
                pooled[r * p + s] += c * (mean[a * p + r] - mean[b * p + r]) * (mean[a * p + s] - mean[b * p + s]);
            }
        }
        let nu = size[a] + size[b];
        for k in 0..p {
            mean[a * p + k] = (size[a] * mean[a * p + k] + size[b] * mean[b * p + k]) / nu;
        }
        size[a] = nu;
        active.retain(|&k| k != b);
        merges.push((a, b));
    }
    merges
}

/// Extends a partition of the sampled `rows` to every row of `data`.
/// Sampled rows keep their labels; the rest join the class with the nearest
/// centroid, i.e. the highest density under a pooled spherical Gaussian fit
/// to the sampled classes.
pub fn extend_partition(data: &Dataset, rows: &[usize], partition: &[usize]) -> Result<Vec<usize>> {
    if rows.len() != partition.len() {
        return Err(Error::InvalidArgument("partition does not cover rows".into()));
    }
    let p = data.d();
    let cols: Vec<usize> = (0..p).collect();
    let x = data.row_major(&cols, None);
    extend_partition_rows(&x, p, rows, partition)
}

pub(crate) fn extend_partition_rows(
    x: &[f64],
    p: usize,
    rows: &[usize],
    partition: &[usize],
) -> Result<Vec<usize>> {
    let n = x.len() / p;
    let g = partition.iter().copied().max().map_or(0, |m| m + 1);
    let mut centroid = vec![0.0; g * p];
    let mut count = vec![0.0; g];
    let mut labels = vec![usize::MAX; n];
    for (&r, &l) in rows.iter().zip(partition) {
        if r >= n {
            return Err(Error::InvalidArgument(format!("row {r} out of range")));
        }
        labels[r] = l;
        count[l] += 1.0;
        for j in 0..p {
            centroid[l * p + j] += x[r * p + j];
        }
    }
    for l in 0..g {
        for j in 0..p {
            centroid[l * p + j] /= count[l];
        }
    }
    for i in 0..n {
        if labels[i] != usize::MAX {
            continue;
        }
        let row = &x[i * p..(i + 1) * p];
        let mut best = (f64::INFINITY, 0);
        for l in 0..g {
            let d2: f64 = row
                .iter()
                .zip(&centroid[l * p..(l + 1) * p])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < best.0 {
                best = (d2, l);
            }
        }
        labels[i] = best.1;
    }
    Ok(labels)
}
