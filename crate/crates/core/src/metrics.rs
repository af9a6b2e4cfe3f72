//! Partition agreement and variable-selection error measures.

use std::collections::HashMap;

use crate::data::VariableSet;
use crate::error::{Error, Result};

/// Largest cluster count for which [`class_error`] enumerates every
/// one-to-one mapping.
pub const EXHAUSTIVE_CLUSTERS: usize = 8;

/// Cross-tabulation of two labelings: rows index the first, columns the
/// second, each in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn choose2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

impl ContingencyTable {
    pub fn from_labels(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidArgument(format!(
                "labelings have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(Error::InvalidArgument("labelings are empty".into()));
        }
        let (ca, ra) = compact(a);
        let (cb, rb) = compact(b);
        let mut counts = vec![vec![0u64; rb]; ra];
        for (i, j) in ca.into_iter().zip(cb) {
            counts[i][j] += 1;
        }
        Ok(Self { counts })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("table rows must be non-empty and equally long".into()));
        }
        let t = Self { counts };
        if t.n() == 0 {
            return Err(Error::InvalidArgument("table is empty".into()));
        }
        Ok(t)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.counts[0].len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let cols = self.counts[0].len();
        Self {
            counts: (0..cols).map(|j| self.counts.iter().map(|r| r[j]).collect()).collect(),
        }
    }

    /// Hubert–Arabie adjusted Rand index; 1 when both sides have a single
    /// class.
    pub fn ari(&self) -> f64 {
        let index: f64 = self.counts.iter().flatten().map(|&c| choose2(c)).sum();
        let sa: f64 = self.row_sums().into_iter().map(choose2).sum();
        let sb: f64 = self.col_sums().into_iter().map(choose2).sum();
        let total = choose2(self.n());
        let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
        let max = 0.5 * (sa + sb);
        if max == expected {
            return 1.0;
        }
        (index - expected) / (max - expected)
    }

    /// Unadjusted Rand index: the fraction of pairs on which the labelings
    /// agree.
    pub fn rand(&self) -> f64 {
        let total = choose2(self.n());
        if total == 0.0 {
            return 1.0;
        }
        let same_both: f64 = self.counts.iter().flatten().map(|&c| choose2(c)).sum();
        let same_a: f64 = self.row_sums().into_iter().map(choose2).sum();
        let same_b: f64 = self.col_sums().into_iter().map(choose2).sum();
        let diff_both = total - same_a - same_b + same_both;
        (same_both + diff_both) / total
    }

    /// Misclassification rate with rows as truth and columns as clusters,
    /// under the best mapping of clusters to classes.
    pub fn class_error(&self) -> f64 {
        let n = self.n() as f64;
        let classes = self.counts.len();
        let clusters = self.counts[0].len();
        // cluster-major weights
        let w: Vec<Vec<u64>> = (0..clusters)
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        let correct = if clusters > classes {
            w.iter().map(|col| *col.iter().max().unwrap_or(&0)).sum::<u64>()
        } else if clusters <= EXHAUSTIVE_CLUSTERS {
            best_injective(&w, classes)
        } else {
            greedy_injective(&w, classes)
        };
        (self.n() - correct) as f64 / n
    }
}

/// Maximum total weight of a one-to-one assignment of clusters to classes,
/// by dynamic programming over subsets of clusters.
fn best_injective(w: &[Vec<u64>], classes: usize) -> u64 {
    let k = w.len();
    let full = (1usize << k) - 1;
    let mut dp: Vec<Option<u64>> = vec![None; 1 << k];
    dp[0] = Some(0);
    for class in 0..classes {
        let prev = dp.clone();
        for mask in 0..=full {
            let Some(base) = prev[mask] else { continue };
            for (j, col) in w.iter().enumerate() {
                if mask & (1 << j) == 0 {
                    let next = mask | (1 << j);
                    let v = base + col[class];
                    if dp[next].is_none_or(|d| v > d) {
                        dp[next] = Some(v);
                    }
                }
            }
        }
    }
    dp[full].unwrap_or(0)
}

/// Repeatedly matches the largest remaining cell.
fn greedy_injective(w: &[Vec<u64>], classes: usize) -> u64 {
    let mut used_cluster = vec![false; w.len()];
    let mut used_class = vec![false; classes];
    let mut total = 0;
    for _ in 0..w.len().min(classes) {
        let mut best: Option<(u64, usize, usize)> = None;
        for (j, col) in w.iter().enumerate() {
            if used_cluster[j] {
                continue;
            }
            for (c, &v) in col.iter().enumerate() {
                if !used_class[c] && best.is_none_or(|b| v > b.0) {
                    best = Some((v, j, c));
                }
            }
        }
        let Some((v, j, c)) = best else { break };
        used_cluster[j] = true;
        used_class[c] = true;
        total += v;
    }
    total
}

pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::from_labels(a, b)?.ari())
}

/// Classification error rate 1 − Rand.
pub fn cer(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(1.0 - ContingencyTable::from_labels(a, b)?.rand())
}

pub fn class_error(truth: &[usize], cluster: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::from_labels(truth, cluster)?.class_error())
}

/// Variable selection error rate: |selected △ truth| / d.
pub fn vser(selected: &VariableSet, truth: &VariableSet, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    selected.check(d)?;
    truth.check(d)?;
    let sym = (0..d).filter(|&j| selected.contains(j) != truth.contains(j)).count();
    Ok(sym as f64 / d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn crabs_mod1() -> ContingencyTable {
        ContingencyTable::from_counts(vec![
            vec![49, 0, 0, 1],
            vec![11, 0, 39, 0],
            vec![0, 5, 0, 45],
            vec![0, 50, 0, 0],
        ])
        .unwrap()
    }

    fn crabs_mod2() -> ContingencyTable {
        ContingencyTable::from_counts(vec![
            vec![0, 50, 0, 0],
            vec![0, 10, 40, 0],
            vec![3, 0, 0, 47],
            vec![50, 0, 0, 0],
        ])
        .unwrap()
    }

    #[test]
    fn reference_tables() {
        assert!((crabs_mod1().ari() - 0.793786).abs() < 1e-6);
        assert!((crabs_mod2().ari() - 0.8399679).abs() < 1e-6);
        assert_eq!(crabs_mod1().class_error(), 0.085);
        assert_eq!(crabs_mod2().class_error(), 0.065);
    }

    #[test]
    fn cer_four_points() {
        let v = cer(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
        assert!((v - 4.0 / 6.0).abs() < 1e-12);
    }

    /// Pair-enumeration Rand index.
    fn rand_oracle(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let mut agree = 0usize;
        let mut total = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                total += 1;
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
        agree as f64 / total as f64
    }

    #[test]
    fn cer_matches_pair_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a: Vec<usize> = (0..100).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..100).map(|_| rng.random_range(0..5)).collect();
        assert!((cer(&a, &b).unwrap() - (1.0 - rand_oracle(&a, &b))).abs() < 1e-12);
    }

    #[test]
    fn identical_and_degenerate() {
        let a = [0, 0, 1, 2, 2, 2];
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert_eq!(cer(&a, &a).unwrap(), 0.0);
        assert_eq!(class_error(&a, &a).unwrap(), 0.0);
        assert_eq!(ari(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert!(ari(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn more_clusters_than_classes_maps_many_to_one() {
        let truth = [0, 0, 0, 0, 1, 1, 1, 1];
        let clust = [0, 0, 1, 1, 2, 2, 3, 2];
        assert!((class_error(&truth, &clust).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_fallback_beyond_limit() {
        let truth: Vec<usize> = (0..20).collect();
        let clust: Vec<usize> = (0..20).map(|i| (i + 1) % 20).collect();
        assert_eq!(class_error(&truth, &clust).unwrap(), 0.0);
    }

    #[test]
    fn vser_examples() {
        let all = VariableSet::all(10);
        let truth = VariableSet::from_indices(vec![0, 1]).unwrap();
        assert!((vser(&all, &truth, 10).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(vser(&truth, &truth, 10).unwrap(), 0.0);
        assert!((vser(&VariableSet::new(), &truth, 10).unwrap() - 0.2).abs() < 1e-12);
    }

    /// Exhaustive one-to-one mapping over permutations, for small tables.
    fn class_error_oracle(truth: &[usize], clust: &[usize], k: usize, c: usize) -> f64 {
        fn perms(k: usize, c: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for x in 0..c {
                if !cur.contains(&x) {
                    cur.push(x);
                    perms(k, c, cur, out);
                    cur.pop();
                }
            }
        }
        let mut all = Vec::new();
        perms(k, c, &mut Vec::new(), &mut all);
        let best = all
            .iter()
            .map(|m| truth.iter().zip(clust).filter(|(t, l)| m[**l] == **t).count())
            .max()
            .unwrap();
        1.0 - best as f64 / truth.len() as f64
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn symmetric_and_relabel_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..5), 2..60),
            shift in 1usize..50,
        ) {
            let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let b2: Vec<usize> = b.iter().map(|x| (x * 7 + shift) % 97).collect();
            let r = ari(&a, &b).unwrap();
            prop_assert!((r - ari(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((r - ari(&a, &b2).unwrap()).abs() < 1e-12);
            let c = cer(&a, &b).unwrap();
            prop_assert!((c - cer(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c - (1.0 - rand_oracle(&a, &b))).abs() < 1e-12);
        }

        #[test]
        fn class_error_is_optimal_and_bounded(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 4..40),
        ) {
            let (t, tk) = compact(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let (l, lk) = compact(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            let e = class_error(&t, &l).unwrap();
            prop_assert!(e <= 1.0 - 1.0 / tk as f64 + 1e-12);
            if lk <= tk {
                prop_assert!((e - class_error_oracle(&t, &l, lk, tk)).abs() < 1e-12);
            }
        }

        #[test]
        fn vser_bounds(sel in proptest::collection::btree_set(0usize..12, 0..12),
                       tru in proptest::collection::btree_set(0usize..12, 0..12)) {
            let s = VariableSet::from_indices(sel.into_iter().collect()).unwrap();
            let t = VariableSet::from_indices(tru.into_iter().collect()).unwrap();
            let v = vser(&s, &t, 12).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(vser(&s, &s, 12).unwrap(), 0.0);
        }
    }
}
