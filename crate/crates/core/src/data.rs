//! Numeric datasets: CSV ingestion, column projection and row sub-sampling.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n×d matrix of finite reals with unique column names.
///
/// Immutable once built; every constructor validates finiteness, shape and
/// name uniqueness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (n, d) = values.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidData(format!("empty {n}x{d} matrix")));
        }
        if names.len() != d {
            return Err(Error::InvalidData(format!(
                "{} column names for {d} columns",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate column name {name:?}")));
            }
        }
        for j in 0..d {
            for i in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: i + 1,
                        col: j + 1,
                        cell: v.to_string(),
                    });
                }
            }
        }
        Ok(Self { values, names })
    }

    /// Builds a dataset from row vectors, naming columns `X1..Xd`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Arity {
                row: i + 1,
                found: r.len(),
                expected: d,
            });
        }
        let values = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(values, default_names(d))
    }

    /// Builds a dataset from column vectors with the given names.
    pub fn from_columns(columns: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidData("columns have unequal lengths".into()));
        }
        let values = DMatrix::from_fn(n, d, |i, j| columns[j][i]);
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, col: usize) -> &str {
        &self.names[col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.values.column(col).iter().copied().collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    /// Row-major copy of the given columns restricted to `rows` (all rows
    /// when `None`). This is the layout the mixture code iterates over.
    pub fn row_major(&self, cols: &[usize], rows: Option<&[usize]>) -> Vec<f64> {
        let p = cols.len();
        match rows {
            Some(rows) => {
                let mut out = Vec::with_capacity(rows.len() * p);
                for &i in rows {
                    out.extend(cols.iter().map(|&j| self.values[(i, j)]));
                }
                out
            }
            None => {
                let n = self.n();
                let mut out = vec![0.0; n * p];
                for (k, &j) in cols.iter().enumerate() {
                    for (i, v) in self.values.column(j).iter().enumerate() {
                        out[i * p + k] = *v;
                    }
                }
                out
            }
        }
    }

    /// Projects onto `vars`, keeping their order and names.
    pub fn subset_columns(&self, vars: &VariableSet) -> Result<Dataset> {
        if vars.is_empty() {
            return Err(Error::InvalidArgument(
                "empty column selection is not a dataset".into(),
            ));
        }
        vars.check(self.d())?;
        let idx = vars.indices();
        let values = DMatrix::from_fn(self.n(), idx.len(), |i, k| self.values[(i, idx[k])]);
        let names = idx.iter().map(|&j| self.names[j].clone()).collect();
        Dataset::new(values, names)
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::InvalidArgument(format!(
                "row {bad} out of range for {} rows",
                self.n()
            )));
        }
        let values = DMatrix::from_fn(rows.len(), self.d(), |i, j| self.values[(rows[i], j)]);
        Dataset::new(values, self.names.clone())
    }
}

pub fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("X{j}")).collect()
}

/// Ordered list of distinct column indices. The order records selection
/// history: first-selected first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableSet(Vec<usize>);

impl VariableSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &i in &indices {
            if !seen.insert(i) {
                return Err(Error::InvalidArgument(format!("duplicate column index {i}")));
            }
        }
        Ok(Self(indices))
    }

    pub fn all(d: usize) -> Self {
        Self((0..d).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }

    /// Appends `i`; returns false when already present.
    pub fn push(&mut self, i: usize) -> bool {
        if self.contains(i) {
            return false;
        }
        self.0.push(i);
        true
    }

    /// Removes `i`; returns false when absent.
    pub fn remove(&mut self, i: usize) -> bool {
        match self.0.iter().position(|&x| x == i) {
            Some(pos) => {
                self.0.remove(pos);
                true
            }
            None => false,
        }
    }

    pub fn without(&self, i: usize) -> Self {
        Self(self.0.iter().copied().filter(|&x| x != i).collect())
    }

    pub fn with(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.push(i);
        out
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.0.clone();
        v.sort_unstable();
        v
    }

    pub fn check(&self, d: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i >= d) {
            Some(&index) => Err(Error::ColumnOutOfRange { index, d }),
            None => Ok(()),
        }
    }

    pub fn names<'a>(&self, data: &'a Dataset) -> Vec<&'a str> {
        self.0.iter().map(|&i| data.name(i)).collect()
    }
}

fn classify_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let t = cell.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::NonFinite {
            row,
            col,
            cell: t.to_string(),
        }),
        Err(_) => {
            let missing = t.is_empty() || t.eq_ignore_ascii_case("na");
            if missing {
                Err(Error::NonFinite {
                    row,
                    col,
                    cell: t.to_string(),
                })
            } else if t.chars().any(char::is_alphabetic) {
                Err(Error::Categorical {
                    row,
                    col,
                    cell: t.to_string(),
                })
            } else {
                Err(Error::Parse {
                    row,
                    col,
                    cell: t.to_string(),
                })
            }
        }
    }
}

/// Parses comma-separated numeric text. Locations in errors are 1-based data
/// rows (the header is not counted) and 1-based columns.
pub fn parse_csv(text: &str, header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let names = if header {
        match records.next() {
            Some(rec) => {
                let rec = rec.map_err(|e| Error::InvalidData(e.to_string()))?;
                Some(rec.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>())
            }
            None => return Err(Error::InvalidData("empty file".into())),
        }
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected = names.as_ref().map(Vec::len);
    for (r, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::InvalidData(e.to_string()))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        let width = *expected.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::Arity {
                row: r + 1,
                found: rec.len(),
                expected: width,
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| classify_cell(cell, r + 1, c + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    let d = rows[0].len();
    let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    Dataset::new(values, names.unwrap_or_else(|| default_names(d)))
}

pub fn read_csv(path: impl AsRef<Path>, header: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, header)
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", data.names().join(","))?;
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.d()).map(|j| data.get(i, j).to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Draws `size` distinct row indices uniformly without replacement, returned
/// sorted ascending. ChaCha8 seeded from `seed` makes the draw reproducible
/// across platforms.
pub fn subsample_rows(n: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 || size > n {
        return Err(Error::InvalidArgument(format!(
            "sample size {size} outside 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, n, size).into_vec();
    rows.sort_unstable();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_header_file() {
        let d = parse_csv("a,b\n1,2\n3,4\n5,6", true).unwrap();
        assert_eq!((d.n(), d.d()), (3, 2));
        assert_eq!(d.names(), ["a", "b"]);
        assert_eq!(d.get(2, 1), 6.0);
    }

    #[test]
    fn headerless_names() {
        let d = parse_csv("1,2\n3,4", false).unwrap();
        assert_eq!(d.names(), ["X1", "X2"]);
    }

    #[test]
    fn na_cell_reports_location() {
        let err = parse_csv("a,b\n1,2\n3,NA\n", true).unwrap_err();
        match err {
            Error::NonFinite { row, col, .. } => assert_eq!((row, col), (2, 2)),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn categorical_cell_is_rejected() {
        let err = parse_csv("a,b\n1,male\n", true).unwrap_err();
        assert!(matches!(err, Error::Categorical { row: 1, col: 2, .. }));
        assert!(err.to_string().contains("categorical variables are not allowed"));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(
            parse_csv("a,b\n1,2\n3\n", true),
            Err(Error::Arity { row: 2, .. })
        ));
    }

    #[test]
    fn projection_keeps_order() {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..5).map(|j| (10 * i + j) as f64).collect())
            .collect();
        let d = Dataset::from_rows(&rows).unwrap();
        let s = d
            .subset_columns(&VariableSet::from_indices(vec![4, 1]).unwrap())
            .unwrap();
        assert_eq!(s.names(), ["X5", "X2"]);
        assert_eq!(s.column(0), vec![4.0, 14.0, 24.0]);
        assert_eq!(s.column(1), vec![1.0, 11.0, 21.0]);

        let same = d.subset_columns(&VariableSet::all(5)).unwrap();
        assert_eq!(same, d);

        assert!(d.subset_columns(&VariableSet::new()).is_err());
        assert!(matches!(
            d.subset_columns(&VariableSet::from_indices(vec![5]).unwrap()),
            Err(Error::ColumnOutOfRange { index: 5, d: 5 })
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(parse_csv("a,a\n1,2\n", true).is_err());
    }

    #[test]
    fn full_subsample_is_every_row() {
        assert_eq!(subsample_rows(10, 10, 99).unwrap(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn subsample_is_seeded() {
        let a = subsample_rows(1000, 200, 1).unwrap();
        let b = subsample_rows(1000, 200, 1).unwrap();
        let c = subsample_rows(1000, 200, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(subsample_rows(10, 0, 1).is_err());
        assert!(subsample_rows(10, 11, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            vec![0.1, -3.25e-7, 1e300],
            vec![std::f64::consts::PI, 2.0, -0.0],
        ];
        let mut d = Dataset::from_rows(&rows).unwrap();
        d.names = vec!["alpha".into(), "b c".into(), "z".into()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&d, &path).unwrap();
        let back = read_csv(&path, true).unwrap();
        assert_eq!(back.names(), d.names());
        for i in 0..2 {
            for j in 0..3 {
                let (a, b) = (d.get(i, j), back.get(i, j));
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn subsample_sorted_distinct_in_bounds(n in 1usize..500, frac in 0.0f64..1.0, seed: u64) {
            let size = ((n as f64 * frac).ceil() as usize).clamp(1, n);
            let rows = subsample_rows(n, size, seed).unwrap();
            prop_assert_eq!(rows.len(), size);
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(rows.iter().all(|&r| r < n));
        }
    }
}
