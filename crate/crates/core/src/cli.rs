//! Command-line front end. Each command writes its outputs plus a JSON run
//! manifest holding every resolved parameter; `gcm replay <manifest>` runs it
//! again.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::compare::{compare, split_groups, standard_runs, write_compare_csv};
use crate::error::{Error, Result};
use crate::eval::{cross_validate_by, default_lambda_grid, evaluate_model, write_groups_csv, CvPlan, SelectionLevel};
use crate::expansion::{expand, AffineScaler, ExpansionSpec};
use crate::io::model_file::{ExpansionRecord, ModelFile, ModelMetadata, Provenance};
use crate::io::synth::{generate, generate_binary, GeneratorSpec};
use crate::io::{file_sha256, load, save, DataFormat};
use crate::model::{Dataset, Hyperparams};
use crate::solver::SolverConfig;
use crate::train::{train, Algorithm, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "gcm", version, about = "Group classification machine: train, evaluate and compare group-level linear classifiers")]
pub struct Cli {
    /// Worker threads for objective evaluation.
    #[arg(long, global = true, env = "GCM_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Train a model and save it as JSON.
    Train(TrainArgs),
    /// Write candidate- and group-level ROC curves and AUCs.
    Evaluate(EvaluateArgs),
    /// Pick λ by cross-validation over groups.
    Cv(CvArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train all four algorithms on one split and tabulate their AUCs.
    Compare(CompareArgs),
    /// Run the command recorded in a manifest again.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => DataFormat::Text,
            FormatArg::Binary => DataFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionArg {
    Candidate,
    Group,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_lambda(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("lambda must lie in (0, 1], got {v}"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn parse_non_negative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be non-negative and finite, got {v}"))
    }
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dataset file (text or binary; detected from the first bytes).
    #[arg(long)]
    pub data: PathBuf,
    /// Override format detection.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct FeatureArgs {
    /// Standardise features before expansion; the scaler is fitted on the
    /// training data and stored in the model.
    #[arg(long)]
    pub scale: bool,
    /// Polynomial expansion degree (1 keeps the raw features).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub expand_degree: Option<u32>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::default().max_iterations)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = SolverConfig::default().grad_inf_tolerance, value_parser = parse_non_negative)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().rel_obj_tolerance, value_parser = parse_non_negative)]
    pub obj_tol: f64,
    /// L-BFGS curvature pairs kept.
    #[arg(long, default_value_t = SolverConfig::default().memory_pairs, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub memory: usize,
    /// MI-SVM outer iteration cap.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub max_outer: usize,
}

impl SolverArgs {
    fn options(&self, threads: usize) -> TrainOptions {
        TrainOptions {
            solver: SolverConfig {
                max_iterations: self.max_iterations,
                grad_inf_tolerance: self.grad_tol,
                rel_obj_tolerance: self.obj_tol,
                memory_pairs: self.memory,
                ..SolverConfig::default()
            },
            threads,
            misvm_max_outer_iterations: self.max_outer,
            ..TrainOptions::default()
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// gcm, gcm-nogroup, svm or misvm.
    #[arg(long, default_value = "gcm", value_parser = parse_algorithm)]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 0.5, value_parser = parse_lambda)]
    pub lambda: f64,
    /// Huber penalty width.
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    pub epsilon: f64,
    /// Hinge smoothing width (0 is the exact hinge).
    #[arg(long, default_value_t = 0.5, value_parser = parse_non_negative)]
    pub delta: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// ROC/AUC report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one line per group with its score and argmax row.
    #[arg(long)]
    pub groups_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "gcm", value_parser = parse_algorithm)]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5, value_parser = parse_non_negative)]
    pub delta: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated λ grid (default 0.05, 0.10, …, 0.95).
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    pub lambdas: Option<Vec<f64>>,
    /// AUC level that picks λ (default: group for gcm and misvm, candidate
    /// otherwise).
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Per-λ score CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Base configuration: fig5-regime or easy.
    #[arg(long, default_value = "fig5-regime")]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub pos_groups: Option<usize>,
    #[arg(long)]
    pub neg_groups: Option<usize>,
    #[arg(long)]
    pub min_candidates: Option<usize>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Output format (default binary for `.bin` files, text otherwise).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    fn spec(&self) -> Result<GeneratorSpec> {
        let mut spec = GeneratorSpec::preset(&self.preset, self.seed)?;
        if let Some(v) = self.pos_groups {
            spec.n_pos_groups = v;
        }
        if let Some(v) = self.neg_groups {
            spec.n_neg_groups = v;
        }
        if let Some(v) = self.min_candidates {
            spec.min_candidates = v;
        }
        if let Some(v) = self.max_candidates {
            spec.max_candidates = v;
        }
        if let Some(v) = self.dim {
            spec.d = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn output_format(&self) -> DataFormat {
        match self.format {
            Some(f) => f.into(),
            None if self.out.extension().is_some_and(|e| e == "bin") => DataFormat::Binary,
            None => DataFormat::Text,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Dataset to split into training and test groups.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub data: Option<PathBuf>,
    /// Independent test set; disables the split.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Generate the data from this preset instead of reading a file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Generator seed for `--preset`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// With `--preset`: test on a second generated set with this seed
    /// instead of splitting.
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(long, default_value_t = 0.5, value_parser = parse_fraction)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 0.5, value_parser = parse_fraction)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5, value_parser = parse_non_negative)]
    pub delta: f64,
    /// Huber width of the exact-hinge SVM and MI-SVM baselines.
    #[arg(long, default_value_t = 100.0, value_parser = parse_positive)]
    pub svm_epsilon: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(value_name = "MANIFEST")]
    pub recorded: PathBuf,
}

/// Everything needed to run a command again, plus what it produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub threads: usize,
    /// The command with every parameter resolved to its final value.
    pub invocation: Command,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file, keyed by path.
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub termination: Option<String>,
    pub summary: serde_json::Value,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    termination: Option<String>,
    summary: serde_json::Value,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    load(&args.data, args.format.map(Into::into))
}

/// Fits the optional scaler on `data` and applies scaling then expansion.
fn prepare_training(data: &Dataset, features: &FeatureArgs) -> Result<(Dataset, Option<AffineScaler>, Option<ExpansionRecord>)> {
    let scaler = features.scale.then(|| AffineScaler::fit(data));
    let scaled = match &scaler {
        Some(s) => s.transform(data)?,
        None => data.clone(),
    };
    match features.expand_degree {
        Some(k) if k > 1 => Ok((
            expand(&scaled, &ExpansionSpec::new(k))?,
            scaler,
            Some(ExpansionRecord::new(data.dim(), k)),
        )),
        _ => Ok((scaled, scaler, None)),
    }
}

fn run_train(args: &TrainArgs, threads: usize) -> Result<Outcome> {
    let raw = load_data(&args.data)?;
    let (data, scaler, expansion) = prepare_training(&raw, &args.features)?;
    let hp = Hyperparams::new(args.lambda, args.epsilon, args.delta)?;
    let opts = args.solver.options(threads);
    let report = train(&data, args.algo, &hp, &opts)?;
    let termination = report.trace.termination.to_string();
    let provenance = Provenance {
        dataset_sha256: Some(file_sha256(&args.data.data)?),
        outer_iterations: report.outer_iterations,
        solver: Some(opts.solver.clone()),
        threads: Some(threads),
        ..Provenance::from_trace(&report.trace)
    };
    let file = ModelFile::new(
        report.model,
        ModelMetadata {
            algorithm: args.algo,
            hyperparams: hp,
            input_dim: raw.dim(),
            scaler,
            expansion,
            provenance,
        },
    )?;
    file.save(&args.out)?;
    log::info!("{} model written to {}", args.algo, args.out.display());
    Ok(Outcome {
        inputs: vec![args.data.data.clone()],
        outputs: vec![args.out.clone()],
        seed: None,
        termination: Some(termination),
        summary: serde_json::json!({
            "iterations": report.trace.iterations,
            "final_objective": report.trace.final_objective(),
            "outer_iterations": report.outer_iterations,
        }),
    })
}

fn run_evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let file = ModelFile::load(&args.model)?;
    let data = file.prepare(&load_data(&args.data)?)?;
    let (report, groups) = evaluate_model(&file.model, &data)?;
    let mut out = create(&args.out)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.groups_out {
        let mut g = create(path)?;
        write_groups_csv(&groups, &mut g)?;
        g.flush()?;
        outputs.push(path.clone());
    }
    Ok(Outcome {
        inputs: vec![args.model.clone(), args.data.data.clone()],
        outputs,
        seed: None,
        termination: None,
        summary: serde_json::json!({
            "candidate_auc": report.candidate_auc,
            "group_auc": report.group_auc,
        }),
    })
}

fn run_cv(args: &CvArgs, threads: usize) -> Result<Outcome> {
    let raw = load_data(&args.data)?;
    let (data, _, _) = prepare_training(&raw, &args.features)?;
    let plan = CvPlan {
        folds: args.folds,
        lambda_grid: args.lambdas.clone().unwrap_or_else(default_lambda_grid),
        seed: args.seed,
    };
    let selection = match args.selection {
        Some(SelectionArg::Candidate) => SelectionLevel::Candidate,
        Some(SelectionArg::Group) => SelectionLevel::Group,
        None => SelectionLevel::for_algorithm(args.algo),
    };
    let opts = args.solver.options(threads);
    let outcome = cross_validate_by(&data, args.algo, &plan, args.epsilon, args.delta, &opts, selection)?;
    let mut out = create(&args.out)?;
    writeln!(out, "lambda,mean_group_auc,mean_candidate_auc,folds_used")?;
    for s in &outcome.scores {
        writeln!(out, "{},{},{},{}", s.lambda, s.mean_group_auc, s.mean_candidate_auc, s.folds_used)?;
    }
    writeln!(out, "# best_lambda={} selection={:?}", outcome.best_lambda, outcome.selection)?;
    out.flush()?;
    Ok(Outcome {
        inputs: vec![args.data.data.clone()],
        outputs: vec![args.out.clone()],
        seed: Some(args.seed),
        termination: None,
        summary: serde_json::json!({
            "best_lambda": outcome.best_lambda,
            "selection": outcome.selection,
            "lambda_grid": plan.lambda_grid,
        }),
    })
}

fn run_synth(args: &SynthArgs) -> Result<Outcome> {
    let spec = args.spec()?;
    let format = args.output_format();
    match format {
        DataFormat::Binary => {
            generate_binary(&spec, create(&args.out)?)?.flush()?;
        }
        DataFormat::Text => save(&generate(&spec)?, &args.out, DataFormat::Text)?,
    }
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec![args.out.clone()],
        seed: Some(args.seed),
        termination: None,
        summary: serde_json::json!({ "spec": spec, "format": format }),
    })
}

fn run_compare(args: &CompareArgs, threads: usize) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let data = match (&args.data, &args.preset) {
        (Some(path), _) => {
            inputs.push(path.clone());
            load(path, None)?
        }
        (None, Some(name)) => generate(&GeneratorSpec::preset(name, args.seed)?)?,
        (None, None) => return Err(Error::config("compare needs --data or --preset")),
    };
    let independent = match (&args.test_data, &args.preset, args.test_seed) {
        (Some(path), _, _) => {
            inputs.push(path.clone());
            Some(load(path, None)?)
        }
        (None, Some(name), Some(seed)) => Some(generate(&GeneratorSpec::preset(name, seed)?)?),
        _ => None,
    };
    let (fit, test) = match independent {
        Some(test) => (data, test),
        None => split_groups(&data, args.test_fraction, args.split_seed)?,
    };
    let hp = Hyperparams::new(args.lambda, args.epsilon, args.delta)?;
    let rows = compare(&fit, &test, &standard_runs(&hp, args.svm_epsilon)?, &args.solver.options(threads))?;
    let mut out = create(&args.out)?;
    write_compare_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(Outcome {
        inputs,
        outputs: vec![args.out.clone()],
        seed: args.preset.as_ref().map(|_| args.seed),
        termination: None,
        summary: serde_json::to_value(&rows)?,
    })
}

fn manifest_path(cmd: &Command, explicit: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    let out = match cmd {
        Command::Train(a) => &a.out,
        Command::Evaluate(a) => &a.out,
        Command::Cv(a) => &a.out,
        Command::Synth(a) => &a.out,
        Command::Compare(a) => &a.out,
        Command::Replay(_) => return None,
    };
    let mut name = out.file_name()?.to_os_string();
    name.push(".manifest.json");
    Some(out.with_file_name(name))
}

/// Runs one command and writes its manifest; returns the manifest.
pub fn execute(command: &Command, threads: usize, manifest: Option<&Path>) -> Result<RunManifest> {
    if let Command::Replay(r) = command {
        let recorded = RunManifest::load(&r.recorded)?;
        return execute(&recorded.invocation, recorded.threads, manifest);
    }
    let start = Instant::now();
    let outcome = match command {
        Command::Train(a) => run_train(a, threads)?,
        Command::Evaluate(a) => run_evaluate(a)?,
        Command::Cv(a) => run_cv(a, threads)?,
        Command::Synth(a) => run_synth(a)?,
        Command::Compare(a) => run_compare(a, threads)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let hashes = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| Ok((p.display().to_string(), file_sha256(p)?)))
            .collect()
    };
    let run = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        invocation: command.clone(),
        inputs: hashes(&outcome.inputs)?,
        outputs: hashes(&outcome.outputs)?,
        seed: outcome.seed,
        termination: outcome.termination,
        summary: outcome.summary,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(path) = manifest_path(command, manifest) {
        let mut out = create(&path)?;
        serde_json::to_writer_pretty(&mut out, &run)?;
        writeln!(out)?;
        out.flush()?;
    }
    Ok(run)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 2 usage, 3 data, 4 numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let threads = usize::try_from(cli.threads).unwrap_or(usize::MAX);
    match execute(&cli.command, threads, cli.manifest.as_deref()) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
