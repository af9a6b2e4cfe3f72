//! Timing harness and Amdahl's-law fitting.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupPoint {
    pub workers: usize,
    /// Wall time in seconds.
    pub seconds: f64,
}

/// Wall times per worker count; the point with one worker is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSeries {
    points: Vec<SpeedupPoint>,
}

impl SpeedupSeries {
    pub fn new(mut points: Vec<SpeedupPoint>) -> Result<Self> {
        points.sort_by_key(|p| p.workers);
        if points.is_empty() {
            return Err(Error::InvalidArgument("speedup series is empty".into()));
        }
        if points.iter().any(|p| p.workers == 0) {
            return Err(Error::InvalidArgument("worker counts must be at least 1".into()));
        }
        if points.windows(2).any(|w| w[0].workers == w[1].workers) {
            return Err(Error::InvalidArgument("worker counts must be distinct".into()));
        }
        if points.iter().any(|p| !(p.seconds > 0.0 && p.seconds.is_finite())) {
            return Err(Error::InvalidArgument("times must be positive and finite".into()));
        }
        if points[0].workers != 1 {
            return Err(Error::InvalidArgument("series needs a one-worker baseline".into()));
        }
        Ok(Self { points })
    }

    /// Series whose times are the reciprocals of the given speedups.
    pub fn from_speedups(pairs: &[(usize, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(w, s)| SpeedupPoint { workers: w, seconds: 1.0 / s }).collect())
    }

    pub fn points(&self) -> &[SpeedupPoint] {
        &self.points
    }

    pub fn baseline(&self) -> f64 {
        self.points[0].seconds
    }

    /// Observed speedups t_1 / t_P.
    pub fn speedups(&self) -> Vec<(usize, f64)> {
        let t1 = self.baseline();
        self.points.iter().map(|p| (p.workers, t1 / p.seconds)).collect()
    }

    /// CSV with columns P, t_P and s_P.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("P,t_P,s_P\n");
        for (p, (_, s)) in self.points.iter().zip(self.speedups()) {
            let _ = writeln!(out, "{},{},{}", p.workers, p.seconds, s);
        }
        out
    }

    /// Reads a CSV with a `P` column and either `t_P` or `s_P`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::InvalidArgument(e.to_string()))?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let p_col = find("P").ok_or_else(|| Error::InvalidArgument("missing P column".into()))?;
        let (col, is_time) = match (find("t_P"), find("s_P")) {
            (Some(c), _) => (c, true),
            (None, Some(c)) => (c, false),
            _ => return Err(Error::InvalidArgument("missing t_P or s_P column".into())),
        };
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let parse_err = |c: usize| Error::Parse {
                row: i + 2,
                col: c + 1,
                cell: rec.get(c).unwrap_or("").to_string(),
            };
            let workers: usize = rec.get(p_col).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err(p_col))?;
            let v: f64 = rec.get(col).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err(col))?;
            let seconds = if is_time { v } else { 1.0 / v };
            points.push(SpeedupPoint { workers, seconds });
        }
        Self::new(points)
    }
}

/// Median of `repetitions` timed calls of `task`, with the output of the
/// last call.
pub fn time_median<T>(repetitions: usize, mut task: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = task()?;
        times.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
        last = Some(out);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok((median, last.expect("at least one repetition")))
}

#[derive(Debug, Clone)]
pub struct Measured<T> {
    pub series: SpeedupSeries,
    /// Output of the last repetition at each worker count.
    pub outputs: Vec<(usize, T)>,
}

/// Times `task(workers)` for each worker count, `repetitions` times each,
/// keeping the median. A failing run aborts with the worker count attached.
pub fn measure<T>(
    repetitions: usize,
    workers: &[usize],
    mut task: impl FnMut(usize) -> Result<T>,
) -> Result<Measured<T>> {
    let mut points = Vec::new();
    let mut outputs = Vec::new();
    for &w in workers {
        let (seconds, out) = time_median(repetitions, || task(w)).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::InvalidArgument(m),
            other => Error::InvalidArgument(format!("run with {w} workers failed: {other}")),
        })?;
        points.push(SpeedupPoint { workers: w, seconds });
        outputs.push((w, out));
    }
    Ok(Measured {
        series: SpeedupSeries::new(points)?,
        outputs,
    })
}

/// Amdahl's law: speedup on `p` workers with sequential fraction `f`.
pub fn amdahl_speedup(f: f64, p: usize) -> f64 {
    1.0 / (f + (1.0 - f) / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmdahlFit {
    pub f: f64,
    /// 1 / f; infinite when f = 0.
    pub s_max: f64,
    /// Sum of squared speedup residuals at `f`.
    pub residual: f64,
}

impl AmdahlFit {
    pub fn to_csv(&self) -> String {
        format!("f,s_max,residual\n{},{},{}\n", self.f, self.s_max, self.residual)
    }
}

fn sse(obs: &[(usize, f64)], f: f64) -> f64 {
    obs.iter().map(|&(p, s)| (s - amdahl_speedup(f, p)).powi(2)).sum()
}

/// Least-squares sequential fraction over [0, 1]: a grid of 101 points
/// brackets the minimum, golden-section search refines it, and the best of
/// the grid, the refinement and both endpoints wins.
pub fn amdahl_fit(series: &SpeedupSeries) -> Result<AmdahlFit> {
    if series.points().len() < 2 {
        return Err(Error::InvalidArgument("amdahl fit needs at least two worker counts".into()));
    }
    let obs = series.speedups();
    let obj = |f: f64| sse(&obs, f);
    const GRID: usize = 100;
    let grid: Vec<(f64, f64)> = (0..=GRID).map(|i| {
        let f = i as f64 / GRID as f64;
        (f, obj(f))
    }).collect();
    let (best_i, _) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");
    let mut lo = best_i.saturating_sub(1) as f64 / GRID as f64;
    let mut hi = (best_i + 1).min(GRID) as f64 / GRID as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (obj(a), obj(b));
    while hi - lo > 1e-10 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = obj(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = obj(b);
        }
    }
    let refined = 0.5 * (lo + hi);
    let mut best = (refined, obj(refined));
    for cand in grid.iter().copied() {
        if cand.1 <= best.1 && (cand.0 == 0.0 || cand.0 == 1.0 || cand.1 < best.1) {
            best = cand;
        }
    }
    let (f, residual) = best;
    let s_max = if f == 0.0 { f64::INFINITY } else { 1.0 / f };
    Ok(AmdahlFit { f, s_max, residual })
}

/// Static SVG of observed speedups with the fitted curve.
pub fn speedup_svg(series: &SpeedupSeries, fit: &AmdahlFit) -> String {
    let obs = series.speedups();
    let p_max = obs.last().map_or(1, |o| o.0).max(2) as f64;
    let s_top = obs
        .iter()
        .map(|o| o.1)
        .chain([amdahl_speedup(fit.f, p_max as usize)])
        .fold(1.0, f64::max)
        * 1.1;
    let (w, h, m) = (480.0, 360.0, 40.0);
    let x = |p: f64| m + (p - 1.0) / (p_max - 1.0) * (w - 2.0 * m);
    let y = |s: f64| h - m - s / s_top * (h - 2.0 * m);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <line x1=\"{m}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - m,
        w - m
    );
    let curve: Vec<String> = (0..=100)
        .map(|i| {
            let p = 1.0 + (p_max - 1.0) * i as f64 / 100.0;
            let s = 1.0 / (fit.f + (1.0 - fit.f) / p);
            format!("{:.2},{:.2}", x(p), y(s))
        })
        .collect();
    let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"steelblue\" points=\"{}\"/>", curve.join(" "));
    for (p, s) in obs {
        let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\"/>", x(p as f64), y(s));
    }
    let _ = writeln!(
        out,
        "<text x=\"{m}\" y=\"20\" font-size=\"12\">f = {:.3}, S_max = {:.2}</text>\n</svg>",
        fit.f, fit.s_max
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: f64) -> SpeedupSeries {
        let pairs: Vec<(usize, f64)> = (1..=10).map(|p| (p, amdahl_speedup(f, p))).collect();
        SpeedupSeries::from_speedups(&pairs).unwrap()
    }

    #[test]
    fn recovers_sequential_fraction() {
        let fit = amdahl_fit(&synthetic(0.13)).unwrap();
        assert!((fit.f - 0.13).abs() < 1e-4);
        assert!((fit.s_max - 1.0 / 0.13).abs() < 1e-2);
    }

    #[test]
    fn perfect_and_sequential_extremes() {
        let perfect = SpeedupSeries::from_speedups(&[(1, 1.0), (2, 2.0), (4, 4.0), (8, 8.0)]).unwrap();
        let fit = amdahl_fit(&perfect).unwrap();
        assert_eq!(fit.f, 0.0);
        assert!(fit.s_max.is_infinite());
        let flat = SpeedupSeries::from_speedups(&[(1, 1.0), (2, 1.0), (4, 1.0)]).unwrap();
        let fit = amdahl_fit(&flat).unwrap();
        assert_eq!(fit.f, 1.0);
        assert_eq!(fit.s_max, 1.0);
    }

    #[test]
    fn single_point_is_degenerate() {
        let s = SpeedupSeries::from_speedups(&[(1, 1.0)]).unwrap();
        assert!(amdahl_fit(&s).is_err());
    }

    #[test]
    fn series_validation() {
        assert!(SpeedupSeries::from_speedups(&[(1, 1.0), (1, 2.0)]).is_err());
        assert!(SpeedupSeries::from_speedups(&[(2, 1.0), (4, 2.0)]).is_err());
        assert!(SpeedupSeries::new(vec![SpeedupPoint { workers: 1, seconds: 0.0 }]).is_err());
    }

    #[test]
    fn amdahl_monotone_on_grid() {
        for p in 2..=16 {
            for i in 0..100 {
                let (f0, f1) = (i as f64 / 100.0, (i + 1) as f64 / 100.0);
                assert!(amdahl_speedup(f1, p) < amdahl_speedup(f0, p));
            }
        }
        for i in 0..100 {
            let f = i as f64 / 100.0;
            for p in 1..16 {
                assert!(amdahl_speedup(f, p + 1) > amdahl_speedup(f, p));
            }
        }
    }

    #[test]
    fn fit_beats_every_grid_point() {
        let noisy = SpeedupSeries::from_speedups(&[(1, 1.0), (2, 1.7), (3, 2.6), (4, 2.9), (6, 4.1), (8, 4.4)]).unwrap();
        let fit = amdahl_fit(&noisy).unwrap();
        let obs = noisy.speedups();
        for i in 0..=1000 {
            assert!(fit.residual <= sse(&obs, i as f64 / 1000.0) + 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = synthetic(0.2);
        let back = SpeedupSeries::from_csv(&s.to_csv()).unwrap();
        for (a, b) in s.points().iter().zip(back.points()) {
            assert_eq!(a.workers, b.workers);
            assert!((a.seconds - b.seconds).abs() < 1e-12);
        }
        let only_s = SpeedupSeries::from_csv("P,s_P\n1,1\n2,1.5\n").unwrap();
        assert!((only_s.speedups()[1].1 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn measure_single_baseline() {
        let mut calls = 0;
        let m = measure(3, &[1], |w| {
            calls += 1;
            Ok(w * 10)
        })
        .unwrap();
        assert_eq!(calls, 3);
        assert_eq!(m.series.points().len(), 1);
        assert_eq!(m.outputs, vec![(1, 10)]);
        assert!(measure(0, &[1], |_| Ok(())).is_err());
    }

    #[test]
    fn measure_reports_failing_configuration() {
        let err = measure(1, &[1, 2], |w| if w == 2 { Err(Error::NoModel) } else { Ok(()) }).unwrap_err();
        assert!(err.to_string().contains("2 workers"));
    }

    #[test]
    fn svg_mentions_fit() {
        let s = synthetic(0.13);
        let svg = speedup_svg(&s, &amdahl_fit(&s).unwrap());
        assert!(svg.starts_with("<svg") && svg.contains("f = 0.130"));
    }
}
