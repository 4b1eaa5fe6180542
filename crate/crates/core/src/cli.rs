//! Command-line front end.
//!
//! Every subcommand writes its machine-readable report to stdout (JSON by
//! default) and progress or human-readable notes to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::coverage_report;
use crate::ccap::{read_profile, write_profile};
use crate::coverage::{build_coverage_matrix, CoverageMatrix};
use crate::error::{Error, Result};
use crate::outlier::{outlier_model, OutlierModel, DEFAULT_K_SIGMA};
use crate::profile::ActivationProfile;
use crate::selection::{
    brute_force_optimal, greedy_select, select_max_actvar, select_max_ppl, select_random, select_stratified,
    ActVarScore, SelectionResult, DEFAULT_ENUMERATION_CAP,
};
use crate::surrogate::{adaptive_refine, check_surrogate_bound, simulate_deficits, surrogate_loss, DeficitMode};
use crate::synthgen::{generate_pool, PoolConfig, Scenario};

#[derive(Debug, Parser)]
#[command(name = "calib-cover", version, about = "Outlier-coverage calibration set selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic activation profile.
    Gen(GenArgs),
    /// Choose a calibration subset.
    Select(SelectArgs),
    /// Coverage report for an existing selection.
    Analyze(AnalyzeArgs),
    /// Simulate clipping deficits and check the surrogate bound.
    Surrogate(SurrogateArgs),
    /// One round of per-layer threshold refinement.
    Adaptive(AdaptiveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Greedy,
    Random,
    MaxPpl,
    MaxActvar,
    Stratified,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    WorstCase,
    UniformFraction,
}

impl From<ModeArg> for DeficitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::WorstCase => DeficitMode::WorstCase,
            ModeArg::UniformFraction => DeficitMode::UniformFraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ScoreArg {
    AllChannels,
    LayerMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "kebab-case")]
pub enum ScenarioArg {
    Uniform,
    DominantLayer,
    RedundantPool,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Uniform => Scenario::Uniform,
            ScenarioArg::DominantLayer => Scenario::DominantLayer,
            ScenarioArg::RedundantPool => Scenario::RedundantPool,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(short, long)]
    pub output: PathBuf,
    /// small, medium, redundant or dominant
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON file or `key = value` lines
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated layer widths
    #[arg(long)]
    pub layer_dims: Option<String>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub redundancy: Option<f64>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    /// Extra overrides, e.g. `--set dominant_multiplier=20`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Threshold multiplier used to report the measured outlier fraction
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MethodOpts {
    #[arg(long, value_enum, default_value = "greedy")]
    pub method: MethodArg,
    #[arg(short = 'K', long)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bins for the stratified baseline
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value = "all_channels")]
    pub actvar_score: ScoreArg,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Selection JSON; the index list goes next to it with a `.txt` extension
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub index_list: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    #[command(flatten)]
    pub method: MethodOpts,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Selection JSON or newline-delimited index list
    #[arg(short, long)]
    pub selection: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Existing selection; without it one is made with --method and -K
    #[arg(short, long, conflicts_with = "budget")]
    pub selection: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    #[arg(long, value_enum, default_value = "greedy")]
    pub method: MethodArg,
    #[arg(short = 'K', long, required_unless_present = "selection")]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value = "uniform_fraction")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AdaptiveArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(short = 'K', long)]
    pub budget: usize,
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    #[arg(long, default_value_t = 4.0)]
    pub k_sigma_low: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    match run(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, stdout, stderr),
        Command::Select(a) => cmd_select(a, stdout, stderr),
        Command::Analyze(a) => cmd_analyze(a, stdout, stderr),
        Command::Surrogate(a) => cmd_surrogate(a, stdout, stderr),
        Command::Adaptive(a) => cmd_adaptive(a, stdout, stderr),
    }
}

fn load_profile(path: &Path) -> Result<ActivationProfile> {
    let file = fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_profile(std::io::BufReader::new(file))
}

fn check_path(path: &Path, what: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Config(format!("{what} path is empty")));
    }
    Ok(())
}

fn emit<T: Serialize>(value: &T, text: impl FnOnce() -> String, format: Format, output: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    if let Some(path) = output {
        check_path(path, "output")?;
        fs::write(path, format!("{json}\n"))?;
    }
    match format {
        Format::Json => writeln!(stdout, "{json}")?,
        Format::Text => write!(stdout, "{}", text())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct GenReport<'a> {
    output: &'a Path,
    bytes: u64,
    num_samples: usize,
    num_layers: usize,
    layer_dims: &'a [usize],
    k_sigma: f64,
    outlier_channels: usize,
    outlier_fraction: f64,
    config: &'a PoolConfig,
}

fn pool_config(a: &GenArgs) -> Result<PoolConfig> {
    let mut cfg = match (&a.preset, &a.config) {
        (Some(name), _) => PoolConfig::preset(name)?,
        (None, Some(path)) => PoolConfig::from_file(path)?,
        (None, None) => PoolConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.samples {
        cfg.num_samples = v;
    }
    if let Some(v) = &a.layer_dims {
        cfg.set("layer_dims", v)?;
    }
    if let Some(v) = a.outlier_fraction {
        cfg.outlier_fraction = v;
    }
    if let Some(v) = a.sparsity {
        cfg.sparsity = v;
    }
    if let Some(v) = a.redundancy {
        cfg.redundancy = v;
    }
    if let Some(v) = a.scenario {
        cfg.scenario = v.into();
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_gen(a: &GenArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    check_path(&a.output, "output")?;
    let cfg = pool_config(a)?;
    let profile = generate_pool(&cfg)?;
    let model = outlier_model(&profile, a.k_sigma)?;
    let file = fs::File::create(&a.output)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", a.output.display())))?;
    let bytes = write_profile(&profile, std::io::BufWriter::new(file))?;
    let report = GenReport {
        output: &a.output,
        bytes,
        num_samples: profile.num_samples,
        num_layers: profile.num_layers(),
        layer_dims: &profile.layer_dims,
        k_sigma: a.k_sigma,
        outlier_channels: model.channels.len(),
        outlier_fraction: model.outlier_fraction(),
        config: &cfg,
    };
    writeln!(
        stderr,
        "wrote {} ({} bytes): N={} L={} outlier fraction {:.4} at k={}",
        a.output.display(),
        bytes,
        report.num_samples,
        report.num_layers,
        report.outlier_fraction,
        a.k_sigma
    )?;
    let text = || {
        format!(
            "N {}\nL {}\noutlier_fraction {:.6}\n",
            report.num_samples, report.num_layers, report.outlier_fraction
        )
    };
    emit(&report, text, a.format, None, stdout)
}

struct Prepared {
    profile: ActivationProfile,
    model: OutlierModel,
    coverage: CoverageMatrix,
}

fn prepare(input: &Path, k_sigma: f64) -> Result<Prepared> {
    check_path(input, "input")?;
    let profile = load_profile(input)?;
    let model = outlier_model(&profile, k_sigma)?;
    let coverage = build_coverage_matrix(&profile, &model)?;
    Ok(Prepared { profile, model, coverage })
}

fn run_method(p: &Prepared, method: MethodArg, budget: usize, seed: u64, bins: usize, score: ScoreArg) -> Result<SelectionResult> {
    let score = match score {
        ScoreArg::AllChannels => ActVarScore::AllChannels,
        ScoreArg::LayerMeans => ActVarScore::LayerMeans,
    };
    let result = match method {
        MethodArg::Greedy => greedy_select(&p.coverage, budget),
        MethodArg::Random => select_random(p.profile.num_samples, budget, seed),
        MethodArg::MaxPpl => select_max_ppl(&p.profile, budget)?,
        MethodArg::MaxActvar => select_max_actvar(&p.profile, budget, score),
        MethodArg::Stratified => select_stratified(&p.profile, budget, bins, seed)?,
        MethodArg::Oracle => brute_force_optimal(&p.coverage, budget, DEFAULT_ENUMERATION_CAP)?,
    };
    result.evaluate(&p.coverage)
}

fn index_list_path(a: &SelectArgs) -> Result<PathBuf> {
    let path = a.index_list.clone().unwrap_or_else(|| a.output.with_extension("txt"));
    if path == a.output {
        return Err(Error::Config(format!(
            "index list would overwrite the selection file {}; pass --index-list",
            a.output.display()
        )));
    }
    Ok(path)
}

pub fn cmd_select(a: &SelectArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    check_path(&a.output, "output")?;
    let list_path = index_list_path(a)?;
    let p = prepare(&a.input, a.k_sigma)?;
    let m = &a.method;
    let result = run_method(&p, m.method, m.budget, m.seed, m.bins, m.actvar_score)?;
    fs::write(&list_path, result.to_index_list())?;
    writeln!(
        stderr,
        "{}: {} of {} samples, objective {:.6} over {} outlier channels; index list at {}",
        result.method,
        result.selected.len(),
        p.profile.num_samples,
        result.objective.unwrap_or(0.0),
        p.model.channels.len(),
        list_path.display()
    )?;
    let text = || {
        format!(
            "method {}\nK {}\nobjective {}\nselected {:?}\n",
            result.method,
            result.budget,
            result.objective.unwrap_or(0.0),
            result.selected
        )
    };
    emit(&result, text, a.format, Some(&a.output), stdout)
}

/// Reads a selection written by `select`, or a plain index list.
pub fn read_selection(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let sel: SelectionResult = serde_json::from_str(&text)?;
        return Ok(sel.selected);
    }
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse()
                .map_err(|_| Error::Config(format!("{}: {l:?} is not a sample index", path.display())))
        })
        .collect()
}

pub fn cmd_analyze(a: &AnalyzeArgs, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> Result<()> {
    let p = prepare(&a.input, a.k_sigma)?;
    let selection = read_selection(&a.selection)?;
    let report = coverage_report(&selection, &p.coverage)?;
    emit(&report, || report.to_string(), a.format, a.output.as_deref(), stdout)
}

#[derive(Serialize)]
struct SurrogateOutput<'a> {
    mode: DeficitMode,
    seed: u64,
    selected: &'a [usize],
    #[serde(flatten)]
    report: &'a crate::surrogate::SurrogateReport,
}

pub fn cmd_surrogate(a: &SurrogateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let p = prepare(&a.input, a.k_sigma)?;
    let selection = match (&a.selection, a.budget) {
        (Some(path), _) => read_selection(path)?,
        (None, Some(k)) => run_method(&p, a.method, k, a.seed, a.bins, ScoreArg::AllChannels)?.selected,
        (None, None) => return Err(Error::Config("pass --selection or -K".into())),
    };
    let mode = DeficitMode::from(a.mode);
    let deficits = simulate_deficits(&p.model, &p.coverage, &selection, a.seed, mode)?;
    let report = surrogate_loss(&deficits, &p.model)?;
    let out = SurrogateOutput { mode, seed: a.seed, selected: &selection, report: &report };
    let text = || {
        let mut s = format!("L_sur {}\nbound {}\nslack {}\n", report.l_sur, report.bound, report.slack);
        for l in &report.per_layer {
            s += &format!("layer {:>3}  error {:.6}  share {:.4}\n", l.layer, l.error, l.share);
        }
        s
    };
    emit(&out, text, a.format, a.output.as_deref(), stdout)?;
    let slack = check_surrogate_bound(&report, &p.model, &p.coverage, &selection)?;
    writeln!(stderr, "bound holds with slack {slack}")?;
    Ok(())
}

pub fn cmd_adaptive(a: &AdaptiveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    check_path(&a.input, "input")?;
    let profile = load_profile(&a.input)?;
    let outcome = adaptive_refine(&profile, a.k_sigma, a.k_sigma_low, a.budget, a.seed)?;
    writeln!(
        stderr,
        "flagged layers {:?}; L_sur {} -> {}",
        outcome.flagged, outcome.initial.report.l_sur, outcome.refined.report.l_sur
    )?;
    let text = || {
        format!(
            "flagged {:?}\ninitial {:?} L_sur {}\nrefined {:?} L_sur {}\n",
            outcome.flagged,
            outcome.initial.selection.selected,
            outcome.initial.report.l_sur,
            outcome.refined.selection.selected,
            outcome.refined.report.l_sur
        )
    };
    emit(&outcome, text, a.format, a.output.as_deref(), stdout)
}
