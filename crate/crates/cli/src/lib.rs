//! Argument definitions and command runners for the `varsel` binary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use varsel::bench::{amdahl_fit, measure, speedup_svg, SpeedupSeries};
use varsel::data::{read_csv, write_csv};
use varsel::datagen::ScenarioSpec;
use varsel::gmm::{fit_models, CovarianceModel, FitOptions};
use varsel::metrics::{ari, cer, class_error, vser};
use varsel::regress::RegressionMode;
use varsel::selection::{
    defaults, parse_g_range, parse_models, search, trace_to_jsonl, Direction, SearchKind, SearchOptions,
};
use varsel::{Dataset, Error, VariableSet};

#[derive(Debug, Parser)]
#[command(name = "varsel", version, about = "Variable selection for Gaussian model-based clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a variable-selection search and print its trace.
    Select(SelectArgs),
    /// Fit mixture models by BIC and print the best one.
    Fit(FitArgs),
    /// Generate a synthetic dataset with labels and true clustering columns.
    Gen(GenArgs),
    /// Compare labelings or variable sets.
    Metrics(MetricsArgs),
    /// Time searches across worker counts, or fit Amdahl's law to a series.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with one numeric column per variable.
    pub input: PathBuf,
    /// The first line holds data, not column names.
    #[arg(long)]
    pub no_header: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset, Error> {
        read_csv(&self.input, !self.no_header)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmArgs {
    /// Component counts, "a:b" or a comma list.
    #[arg(long, default_value = defaults::G_RANGE)]
    pub g: String,
    /// Agglomerative initialization criterion (EII, EEE or VVV).
    #[arg(long, default_value = defaults::HC_MODEL)]
    pub hc_model: String,
    /// Build the initialization tree on a row sub-sample.
    #[arg(long, default_value_t = defaults::SAMP, action = clap::ArgAction::Set)]
    pub samp: bool,
    /// Sub-sample size; half the rows when omitted.
    #[arg(long)]
    pub sampsize: Option<usize>,
    /// Seed for the row sub-sample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = defaults::TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = defaults::MAX_ITER)]
    pub max_iter: usize,
}

impl EmArgs {
    fn fit_options(&self) -> Result<FitOptions, Error> {
        Ok(FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            hc_model: self.hc_model.parse()?,
            samp: self.samp,
            sampsize: self.sampsize,
            seed: self.seed,
            ..FitOptions::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub em: EmArgs,
    /// Models for single-variable sets (comma list).
    #[arg(long)]
    pub em_models1: Option<String>,
    /// Models for multi-variable sets (comma list).
    #[arg(long)]
    pub em_models2: Option<String>,
    /// greedy or headlong.
    #[arg(long, default_value = defaults::SEARCH)]
    pub search: String,
    /// forward or backward.
    #[arg(long, default_value = defaults::DIRECTION)]
    pub direction: String,
    #[arg(long, default_value_t = defaults::BIC_DIFF, allow_negative_numbers = true)]
    pub bic_diff: f64,
    #[arg(long, default_value_t = defaults::BIC_UPPER, allow_negative_numbers = true)]
    pub bic_upper: f64,
    #[arg(long, default_value_t = defaults::BIC_LOWER, allow_negative_numbers = true)]
    pub bic_lower: f64,
    #[arg(long, default_value_t = defaults::ITERMAX)]
    pub itermax: usize,
    #[arg(long, default_value_t = defaults::FORCETWO, action = clap::ArgAction::Set)]
    pub forcetwo: bool,
    /// subset or all.
    #[arg(long, default_value = defaults::REGRESSION)]
    pub regression: String,
    /// Worker threads for candidate evaluation.
    #[arg(long)]
    pub parallel: Option<usize>,
}

impl SearchArgs {
    pub fn options(&self) -> Result<SearchOptions, Error> {
        let base = SearchOptions::default();
        let opts = SearchOptions {
            g_range: parse_g_range(&self.em.g)?,
            em_models_1: match &self.em_models1 {
                Some(s) => parse_models(s)?,
                None => base.em_models_1,
            },
            em_models_2: match &self.em_models2 {
                Some(s) => parse_models(s)?,
                None => base.em_models_2,
            },
            direction: self.direction.parse::<Direction>()?,
            search: self.search.parse::<SearchKind>()?,
            bic_diff_threshold: self.bic_diff,
            bic_upper: self.bic_upper,
            bic_lower: self.bic_lower,
            itermax: self.itermax,
            forcetwo: self.forcetwo,
            fit_options: self.em.fit_options()?,
            regression_mode: self.regression.parse::<RegressionMode>()?,
            parallel: self.parallel,
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Write the trace as JSON lines.
    #[arg(long)]
    pub trace_log: Option<PathBuf>,
    /// Write the full result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub em: EmArgs,
    /// Covariance models (comma list); all models valid for the data when omitted.
    #[arg(long)]
    pub models: Option<String>,
    /// Columns to use, by name or 1-based position (comma list).
    #[arg(long)]
    pub subset: Option<String>,
    /// Labels file to score the classification against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Write the fit as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// maugis1, maugis4, maugis5, maugis7, wt, twovar5 or twovar10.
    #[arg(long)]
    pub scenario: String,
    /// Row count (rows per group for wt).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Data CSV path; labels and truth files are written alongside.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// First labels file.
    #[arg(long, requires = "b")]
    pub a: Option<PathBuf>,
    /// Second labels file; with --a, the truth for the classification error.
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
    /// Selected columns (comma list of 1-based positions or names).
    #[arg(long, requires_all = ["truth_set", "d"])]
    pub selected: Option<String>,
    /// True clustering columns, or a truth file written by `gen`.
    #[arg(long)]
    pub truth_set: Option<String>,
    /// Total number of columns.
    #[arg(long)]
    pub d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Fit Amdahl's law to a CSV with columns P and t_P (or s_P).
    #[arg(long, conflicts_with = "input")]
    pub amdahl: Option<PathBuf>,
    /// Dataset to time searches on.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub no_header: bool,
    /// Worker counts, comma list.
    #[arg(long, default_value = "1")]
    pub workers: String,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Write the series as CSV; the fit goes to a `.fit.csv` file beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a speedup plot as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Process exit status for a library error: 1 for invalid input, 2 for
/// failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_)
        | Error::NoModel
        | Error::Singular
        | Error::ComponentCollapse { .. }
        | Error::DegenerateRegression(_) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Select(a) => cmd_select(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Metrics(a) => cmd_metrics(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("result serializes") + "\n"
}

pub fn cmd_select(args: &SelectArgs) -> Result<String, Error> {
    let opts = args.search.options()?;
    let data = args.input.load()?;
    let result = search(&data, &opts)?;
    if let Some(w) = &result.warning {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.trace_log {
        fs::write(path, trace_to_jsonl(&result.trace))?;
    }
    if let Some(path) = &args.out {
        fs::write(path, to_json(&result))?;
    }
    Ok(result.report(&data))
}

/// Resolves a comma list of column names or 1-based positions.
fn resolve_columns(spec: &str, names: &[String]) -> Result<VariableSet, Error> {
    let cols = spec
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            if let Some(j) = names.iter().position(|n| n == t) {
                return Ok(j);
            }
            match t.parse::<usize>() {
                Ok(k) if (1..=names.len()).contains(&k) => Ok(k - 1),
                _ => Err(Error::InvalidArgument(format!("unknown column {t:?}"))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if cols.is_empty() {
        return Err(Error::InvalidArgument("empty column list".into()));
    }
    VariableSet::from_indices(cols)
}

/// Reads one label per line (first field); a non-numeric first line is a
/// header.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, Error> {
    let text = fs::read_to_string(path)?;
    let mut lines: Vec<&str> = text
        .lines()
        .map(|l| l.split(',').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .collect();
    if lines.first().is_some_and(|l| l.parse::<f64>().is_err()) {
        lines.remove(0);
    }
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let labels = lines
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect::<Vec<_>>();
    if labels.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no labels", path.display())));
    }
    Ok(labels)
}

pub fn cmd_fit(args: &FitArgs) -> Result<String, Error> {
    let opts = args.em.fit_options()?;
    opts.validate()?;
    let gs = parse_g_range(&args.em.g)?;
    let mut data = args.input.load()?;
    if let Some(spec) = &args.subset {
        let cols = resolve_columns(spec, data.names())?;
        data = data.subset_columns(&cols)?;
    }
    let models: Vec<CovarianceModel> = match &args.models {
        Some(s) => parse_models(s)?,
        None if data.d() == 1 => CovarianceModel::UNIVARIATE.to_vec(),
        None => CovarianceModel::MULTIVARIATE.to_vec(),
    };
    let fit = fit_models(&data, &gs, &models, &opts)?.best;
    let mut out = fit.summary();
    if let Some(path) = &args.truth {
        let truth = read_labels(path)?;
        let _ = writeln!(out, "\nARI: {:.7}", ari(&truth, &fit.classification)?);
        let _ = writeln!(out, "Classification error: {:.4}", class_error(&truth, &fit.classification)?);
    }
    if let Some(path) = &args.out {
        fs::write(path, to_json(&fit))?;
    }
    Ok(out)
}

/// Sidecar paths for a generated dataset: labels CSV and truth-set file.
pub fn sidecars(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("labels.csv"), out.with_extension("truth.txt"))
}

pub fn cmd_gen(args: &GenArgs) -> Result<String, Error> {
    let spec = ScenarioSpec {
        id: args.scenario.parse()?,
        size: args.n,
        seed: args.seed,
    };
    let g = spec.generate()?;
    write_csv(&g.data, &args.out)?;
    let (labels_path, truth_path) = sidecars(&args.out);
    let mut labels = String::from("class\n");
    for l in &g.labels {
        let _ = writeln!(labels, "{}", l + 1);
    }
    fs::write(&labels_path, labels)?;
    fs::write(&truth_path, g.truth.names(&g.data).join(",") + "\n")?;
    Ok(format!(
        "wrote {} rows x {} columns to {}\n",
        g.data.n(),
        g.data.d(),
        args.out.display()
    ))
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<String, Error> {
    let mut out = String::new();
    if let (Some(a), Some(b)) = (&args.a, &args.b) {
        let la = read_labels(a)?;
        let lb = read_labels(b)?;
        let _ = writeln!(out, "ARI: {:.7}", ari(&la, &lb)?);
        let _ = writeln!(out, "CER: {:.7}", cer(&la, &lb)?);
        let _ = writeln!(out, "Classification error: {:.7}", class_error(&lb, &la)?);
    }
    if let (Some(sel), Some(truth), Some(d)) = (&args.selected, &args.truth_set, args.d) {
        let truth = match fs::read_to_string(truth) {
            Ok(text) => text.trim().to_string(),
            Err(_) => truth.clone(),
        };
        let names: Vec<String> = varsel::data::default_names(d);
        let s = resolve_columns(sel, &names)?;
        let t = resolve_columns(&truth, &names)?;
        let _ = writeln!(out, "VSER: {:.7}", vser(&s, &t, d)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(
            "give --a and --b, or --selected with --truth-set and --d".into(),
        ));
    }
    Ok(out)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<String, Error> {
    let series = if let Some(path) = &args.amdahl {
        SpeedupSeries::from_csv(&fs::read_to_string(path)?)?
    } else if let Some(input) = &args.input {
        let data = read_csv(input, !args.no_header)?;
        let opts = args.search.options()?;
        let workers: Vec<usize> = args
            .workers
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("invalid worker count {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        let measured = measure(args.repetitions, &workers, |w| {
            let o = SearchOptions {
                parallel: Some(w),
                ..opts.clone()
            };
            search(&data, &o).map(|r| r.subset)
        })?;
        for (w, subset) in &measured.outputs {
            eprintln!("{w} workers: {}", subset.names(&data).join(", "));
        }
        measured.series
    } else {
        return Err(Error::InvalidArgument("give --amdahl or --input".into()));
    };
    let mut out = series.to_csv();
    let fit = (series.points().len() >= 2).then(|| amdahl_fit(&series)).transpose()?;
    if let Some(fit) = &fit {
        let _ = writeln!(out, "f = {:.4}, s_max = {:.4}", fit.f, fit.s_max);
    }
    if let Some(path) = &args.out {
        fs::write(path, series.to_csv())?;
        if let Some(fit) = &fit {
            fs::write(path.with_extension("fit.csv"), fit.to_csv())?;
        }
    }
    if let (Some(path), Some(fit)) = (&args.svg, &fit) {
        fs::write(path, speedup_svg(&series, fit))?;
    }
    Ok(out)
}
