use std::fmt;

use serde::{Deserialize, Serialize};

use super::options::{Direction, SearchKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepType {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accepted,
    Rejected,
}

impl fmt::Display for StepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepType::Add => "Add",
            StepType::Remove => "Remove",
        })
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accepted => "Accepted",
            Decision::Rejected => "Rejected",
        })
    }
}

/// One proposal of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based position in the trace.
    pub step: usize,
    pub variable: usize,
    pub variable_name: String,
    /// BIC of the best clustering model on the selected set once the step
    /// is decided; `None` when that set is empty or could not be fitted.
    pub bic: Option<f64>,
    #[serde(with = "extended_f64")]
    pub bic_difference: f64,
    pub step_type: StepType,
    pub decision: Decision,
}

/// JSON numbers cannot hold infinities, so those are written as strings.
pub(crate) mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("Inf")
        } else {
            s.serialize_str("-Inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "Inf" => Ok(f64::INFINITY),
                "-Inf" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid number {other:?}"))),
            },
        }
    }
}

/// Formats a numeric column the way R prints a data frame: every value gets
/// the decimals needed to show it to 7 significant digits, and the column
/// uses the largest such count.
fn format_column(values: &[Option<f64>]) -> Vec<String> {
    let decimals = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite() && **v != 0.0)
        .map(|&v| {
            let sci = format!("{:.6e}", v.abs());
            let (mantissa, exp) = sci.split_once('e').expect("scientific format");
            let exp: i64 = exp.parse().expect("exponent");
            let digits = mantissa.replace('.', "");
            let sig = digits.trim_end_matches('0').len().max(1) as i64;
            (sig - 1 - exp).max(0) as usize
        })
        .max()
        .unwrap_or(0);
    values
        .iter()
        .map(|v| match v {
            None => "NA".to_string(),
            Some(x) if x.is_nan() => "NaN".to_string(),
            Some(x) if *x == f64::INFINITY => "Inf".to_string(),
            Some(x) if *x == f64::NEG_INFINITY => "-Inf".to_string(),
            Some(x) => format!("{x:.decimals$}"),
        })
        .collect()
}

/// Five-column table of trace entries.
pub fn render_trace(entries: &[TraceEntry]) -> String {
    let headers = ["Variable proposed", "BIC", "BIC difference", "Type of step", "Decision"];
    let rownames: Vec<String> = entries.iter().map(|e| e.step.to_string()).collect();
    let bics = format_column(&entries.iter().map(|e| e.bic).collect::<Vec<_>>());
    let diffs = format_column(&entries.iter().map(|e| Some(e.bic_difference)).collect::<Vec<_>>());
    let columns: Vec<Vec<String>> = vec![
        entries.iter().map(|e| e.variable_name.clone()).collect(),
        bics,
        diffs,
        entries.iter().map(|e| e.step_type.to_string()).collect(),
        entries.iter().map(|e| e.decision.to_string()).collect(),
    ];
    let widths: Vec<usize> = columns
        .iter()
        .zip(headers)
        .map(|(col, h)| col.iter().map(|s| s.chars().count()).chain([h.len()]).max().unwrap_or(0) + 1)
        .collect();
    let rw = rownames.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut out = format!("{:rw$}", "");
    for (h, w) in headers.iter().zip(&widths) {
        out.push_str(&format!(" {h:>w$}"));
    }
    out.push('\n');
    for (r, name) in rownames.iter().enumerate() {
        out.push_str(&format!("{name:<rw$}"));
        for (col, w) in columns.iter().zip(&widths) {
            let cell = &col[r];
            let pad = w.saturating_sub(cell.chars().count());
            out.push(' ');
            out.push_str(&" ".repeat(pad));
            out.push_str(cell);
        }
        out.push('\n');
    }
    out
}

/// Full console report: search header, trace table and selected subset.
pub fn render_report(
    search: SearchKind,
    direction: Direction,
    entries: &[TraceEntry],
    subset_names: &[&str],
) -> String {
    let header = match search {
        SearchKind::Greedy => format!("Stepwise ({direction}) greedy search:"),
        SearchKind::Headlong => format!("Headlong ({direction}) search:"),
    };
    let subset = if subset_names.is_empty() {
        "(none)".to_string()
    } else {
        subset_names.join(", ")
    };
    format!("{header}\n{}\nSelected subset: {subset}\n", render_trace(entries))
}

/// One JSON record per line.
pub fn trace_to_jsonl(entries: &[TraceEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("trace entries serialize") + "\n")
        .collect()
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<TraceEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::InvalidArgument(format!("trace line {}: {e}", i + 1)))
        })
        .collect()
}
