//! Command-line interface: data generation, model fitting, evaluation and
//! reporting, plus manifest-driven reproduction runs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::blockmodel::{load_model, save_model, ModelBundle, ModelKind};
use crate::curvefit::{fit_exponential, fit_power_law, parse_points};
use crate::datasets::{
    dataset_digest, ensure_normalized, format_f64, load_dataset, save_dataset, Channel, Role, TimeSeriesDataset,
};
use crate::estimate::{estimate_miso_bundle, select_best, EstimateError, EstimationProblem, FitReport, Ranking, SearchConfig};
use crate::estimate::report::{fmt_metric, parse_metric};
use crate::geometry::{deformation_dataset, parse_markers, DeformationMode};
use crate::metrics;
use crate::plant::{
    builtin_catalog, find_plant, generate_excitation, parse_catalog, simulate_plant, standard_suite, ExcitationProgram,
    Pattern, PlantError, PlantSpec, STANDARD_DT,
};

pub const REPORT_SCHEMA: &str = "blockid-report v1";
pub const SELECTION_SCHEMA: &str = "blockid-selection v1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            EstimateError::InvalidProblem(_) | EstimateError::MismatchedProblems(_) => CliError::Data(e.to_string()),
            _ => CliError::Estimation(e.to_string()),
        }
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::UnknownPlant { .. } | PlantError::Program(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Human,
    Kv,
}

#[derive(Debug, Parser)]
#[command(name = "blockid", version, about = "Block-oriented identification of piezoresistive deformation sensors")]
pub struct Cli {
    /// Run a full reproduction described by a manifest file.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Worker threads for the order search.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Random seed; overrides any manifest seed.
    #[arg(long, global = true, env = "BLOCKID_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchArgs {
    #[arg(long)]
    pub max_poles: Option<usize>,
    #[arg(long)]
    pub max_zeros: Option<usize>,
    #[arg(long)]
    pub breakpoints: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        let d = SearchConfig::default();
        SearchConfig {
            max_poles: self.max_poles.unwrap_or(d.max_poles),
            max_zeros: self.max_zeros.unwrap_or(d.max_zeros),
            breakpoints: self.breakpoints.unwrap_or(d.breakpoints),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed,
            tolerances: d.tolerances,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Identification datasets.
    #[arg(long = "ident", required = true, num_args = 1..)]
    pub identification: Vec<PathBuf>,
    /// Validation datasets.
    #[arg(long = "valid", required = true, num_args = 1..)]
    pub validation: Vec<PathBuf>,
    /// Output channel index; all outputs when omitted.
    #[arg(long)]
    pub output: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate datasets from a catalog plant.
    #[command(allow_negative_numbers = true)]
    Gen {
        #[arg(long)]
        plant: String,
        /// Plant catalog file (defaults to the built-in catalog).
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Output noise as a fraction of the output range.
        #[arg(long)]
        noise: Option<f64>,
        /// Single custom program instead of the standard suite:
        /// step-cycles, gradual-increase or mixed-parallel.
        #[arg(long)]
        pattern: Option<String>,
        /// Pressure levels in kPa, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        on: f64,
        #[arg(long, default_value_t = 10.0)]
        off: f64,
        #[arg(long, default_value_t = 3)]
        cycles: usize,
        /// Dataset name for a custom program.
        #[arg(long)]
        name: Option<String>,
    },
    /// Fit one model kind.
    Fit {
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Fit every model kind and select the best.
    Search {
        /// Kinds to fit (default: all four).
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Metrics of a saved model on datasets.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
    },
    /// Predicted outputs of a saved model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power-law or exponential fit of two-column points.
    Curvefit {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = Law::Power)]
        law: Law,
    },
    /// Deformation dataset from marker coordinates.
    Geometry {
        #[arg(long)]
        markers: PathBuf,
        #[arg(long, value_enum)]
        mode: GeometryMode,
        /// Rest length in mm (contraction mode).
        #[arg(long)]
        rest_length: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the best model from report files.
    Select {
        #[arg(required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Law {
    Power,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryMode {
    Curvature,
    Contraction,
}

/// Reproduction run description (TOML). Relative paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// `search` (default) or `fit`.
    #[serde(default)]
    pub command: Option<String>,
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Generate the standard suite from this plant first.
    pub plant: Option<String>,
    pub catalog: Option<PathBuf>,
    pub noise: Option<f64>,
    #[serde(default)]
    pub identification: Vec<PathBuf>,
    #[serde(default)]
    pub validation: Vec<PathBuf>,
    pub kinds: Option<Vec<String>>,
    pub output: Option<usize>,
    pub format: Option<Format>,
    #[serde(default)]
    pub search: SearchArgs,
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its standard output.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    let seed = cli.seed;
    let format = cli.format;
    match (cli.manifest, cli.command) {
        (Some(_), Some(_)) => Err(CliError::Usage("--manifest cannot be combined with a subcommand".into())),
        (None, None) => Err(CliError::Usage("a subcommand or --manifest is required (see --help)".into())),
        (Some(path), None) => run_manifest(&path, seed, format),
        (None, Some(cmd)) => {
            let seed = seed.unwrap_or(0);
            let format = format.unwrap_or(Format::Human);
            match cmd {
                Command::Gen {
                    plant,
                    catalog,
                    out,
                    noise,
                    pattern,
                    levels,
                    on,
                    off,
                    cycles,
                    name,
                } => {
                    let spec = plant_spec(&plant, catalog.as_deref(), noise)?;
                    let written = match pattern {
                        None => gen_suite(&spec, seed, &out)?,
                        Some(p) => {
                            let program = ExcitationProgram {
                                pattern: p.parse::<Pattern>()?,
                                levels,
                                on_duration: on,
                                off_duration: off,
                                cycles,
                                channels: spec.input_count(),
                            };
                            let name = name.unwrap_or_else(|| format!("{}-{}", spec.name, program.pattern));
                            vec![gen_custom(&spec, &program, seed, &name, &out)?]
                        }
                    };
                    Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
                }
                Command::Fit {
                    kind,
                    data,
                    out,
                    search,
                } => {
                    let kind = parse_kind(&kind)?;
                    let fitted = fit_kinds(&data.identification, &data.validation, data.output, &[kind], &search.config(seed), &out)?;
                    Ok(render_fits(&fitted, format))
                }
                Command::Search {
                    kinds,
                    data,
                    out,
                    search,
                } => {
                    let kinds = parse_kinds(&kinds)?;
                    let fitted = fit_kinds(&data.identification, &data.validation, data.output, &kinds, &search.config(seed), &out)?;
                    let mut text = render_fits(&fitted, format);
                    text.push_str(&write_selection(&fitted, seed, &out, format)?);
                    Ok(text)
                }
                Command::Eval { model, data } => cmd_eval(&model, &data, format),
                Command::Simulate { model, data, out } => cmd_simulate(&model, &data, &out),
                Command::Curvefit { points, law } => cmd_curvefit(&points, law, format),
                Command::Geometry {
                    markers,
                    mode,
                    rest_length,
                    out,
                } => cmd_geometry(&markers, mode, rest_length, &out),
                Command::Select { reports, out } => cmd_select(&reports, out.as_deref(), format),
            }
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, CliError> {
    s.parse().map_err(|e: crate::blockmodel::ModelError| CliError::Usage(e.to_string()))
}

fn parse_kinds(list: &[String]) -> Result<Vec<ModelKind>, CliError> {
    if list.is_empty() {
        return Ok(ModelKind::ALL.to_vec());
    }
    list.iter().map(|s| parse_kind(s)).collect()
}

fn plant_spec(name: &str, catalog: Option<&Path>, noise: Option<f64>) -> Result<PlantSpec, CliError> {
    let plants = match catalog {
        Some(path) => parse_catalog(&fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?)?,
        None => builtin_catalog(),
    };
    let spec = find_plant(&plants, name)?;
    Ok(match noise {
        Some(n) => spec.with_noise(n),
        None => spec,
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn stamp(ds: TimeSeriesDataset) -> TimeSeriesDataset {
    ds.with_metadata("version", env!("CARGO_PKG_VERSION"))
}

fn gen_suite(spec: &PlantSpec, seed: u64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out)?;
    let mut written = Vec::new();
    for ds in standard_suite(spec, seed)? {
        let path = out.join(format!("{}.csv", ds.name()));
        save_dataset(&stamp(ds), &path).map_err(data_err)?;
        written.push(path);
    }
    Ok(written)
}

fn gen_custom(spec: &PlantSpec, program: &ExcitationProgram, seed: u64, name: &str, out: &Path) -> Result<PathBuf, CliError> {
    create_dir(out)?;
    let pressure = generate_excitation(program, STANDARD_DT)?;
    let ds = simulate_plant(spec, &pressure, STANDARD_DT, seed, name, Role::Validation)?;
    let path = out.join(format!("{name}.csv"));
    save_dataset(&stamp(ds), &path).map_err(data_err)?;
    Ok(path)
}

fn load_with_role(paths: &[PathBuf], role: Role) -> Result<Vec<Arc<TimeSeriesDataset>>, CliError> {
    paths
        .iter()
        .map(|p| {
            let ds = load_dataset(p).map_err(data_err)?;
            Ok(Arc::new(ensure_normalized(&ds.with_role(role))))
        })
        .collect()
}

/// One fitted kind: bundle, per-output reports and the written files.
pub struct FittedKind {
    pub kind: ModelKind,
    pub bundle: ModelBundle,
    pub reports: Vec<FitReport>,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
}

impl FittedKind {
    fn ranking(&self) -> Ranking {
        summary_ranking(self.kind.to_string(), &self.reports.iter().map(|r| r.ranking()).collect::<Vec<_>>())
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Output-averaged ranking of a multi-output model.
fn summary_ranking(label: String, per_output: &[Ranking]) -> Ranking {
    Ranking {
        label,
        average_fit: mean_defined(per_output.iter().map(|r| r.average_fit)),
        average_scaled_rms: mean_defined(per_output.iter().map(|r| r.average_scaled_rms)),
        parameters: per_output.iter().map(|r| r.parameters).sum(),
    }
}

fn fit_kinds(
    ident: &[PathBuf],
    valid: &[PathBuf],
    output: Option<usize>,
    kinds: &[ModelKind],
    config: &SearchConfig,
    out: &Path,
) -> Result<Vec<FittedKind>, CliError> {
    config.validate()?;
    let id = load_with_role(ident, Role::Identification)?;
    let val = load_with_role(valid, Role::Validation)?;
    if id.is_empty() || val.is_empty() {
        return Err(CliError::Data("at least one identification and one validation dataset are required".into()));
    }
    let outputs: Vec<usize> = match output {
        Some(j) => vec![j],
        None => (0..id[0].output_count()).collect(),
    };
    if outputs.is_empty() {
        return Err(CliError::Data(format!("dataset '{}' has no output channels", id[0].name())));
    }
    create_dir(out)?;
    let mut fitted = Vec::new();
    for &kind in kinds {
        let problems = outputs
            .iter()
            .map(|&j| EstimationProblem::new(id.clone(), val.clone(), j, kind, config.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let est = estimate_miso_bundle(&problems)?;
        let model_path = out.join(format!("model-{}.txt", kind.short_name()));
        let report_path = out.join(format!("report-{}.txt", kind.short_name()));
        save_model(&est.bundle, &model_path).map_err(data_err)?;
        write_file(&report_path, &report_text(kind, &est.bundle, &est.reports))?;
        fitted.push(FittedKind {
            kind,
            bundle: est.bundle,
            reports: est.reports,
            model_path,
            report_path,
        });
    }
    Ok(fitted)
}

fn kv_text(kv: &[(String, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn provenance_kv(bundle: &ModelBundle) -> Vec<(String, String)> {
    let p = bundle.provenance();
    let mut kv = vec![
        ("provenance.tool_version".to_string(), p.tool_version.clone()),
        ("provenance.seed".to_string(), p.seed.to_string()),
        ("provenance.settings".to_string(), p.settings.clone()),
    ];
    for (i, (name, digest)) in p.datasets.iter().zip(&p.digests).enumerate() {
        kv.push((format!("provenance.dataset.{i}"), format!("{name} sha256:{digest}")));
    }
    kv
}

/// Key-value report of one fitted kind.
pub fn report_text(kind: ModelKind, bundle: &ModelBundle, reports: &[FitReport]) -> String {
    let mut kv = vec![("schema".to_string(), REPORT_SCHEMA.to_string())];
    kv.extend(provenance_kv(bundle));
    let summary = summary_ranking(kind.to_string(), &reports.iter().map(|r| r.ranking()).collect::<Vec<_>>());
    kv.push(("summary.kind".into(), kind.to_string()));
    kv.push(("summary.outputs".into(), reports.len().to_string()));
    kv.push(("summary.average_fit".into(), fmt_metric(summary.average_fit)));
    kv.push(("summary.average_scaled_rms".into(), fmt_metric(summary.average_scaled_rms)));
    kv.push(("summary.parameters".into(), summary.parameters.to_string()));
    for (j, r) in reports.iter().enumerate() {
        kv.extend(r.to_key_values(&format!("output.{j}.")));
    }
    kv_text(&kv)
}

fn render_fits(fitted: &[FittedKind], format: Format) -> String {
    let mut s = String::new();
    for f in fitted {
        match format {
            Format::Human => {
                for r in &f.reports {
                    s.push_str(&r.render());
                }
                let _ = writeln!(s, "model written to {}", f.model_path.display());
            }
            Format::Kv => s.push_str(&report_text(f.kind, &f.bundle, &f.reports)),
        }
    }
    s
}

fn selection_text(rankings: &[Ranking], best: Option<usize>, seed: u64, sources: &[String]) -> String {
    let mut kv = vec![
        ("schema".to_string(), SELECTION_SCHEMA.to_string()),
        ("provenance.tool_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("provenance.seed".to_string(), seed.to_string()),
    ];
    for (i, (r, src)) in rankings.iter().zip(sources).enumerate() {
        kv.push((format!("candidate.{i}.label"), r.label.clone()));
        kv.push((format!("candidate.{i}.source"), src.clone()));
        kv.push((format!("candidate.{i}.average_fit"), fmt_metric(r.average_fit)));
        kv.push((format!("candidate.{i}.average_scaled_rms"), fmt_metric(r.average_scaled_rms)));
        kv.push((format!("candidate.{i}.parameters"), r.parameters.to_string()));
    }
    kv.push((
        "selected".into(),
        best.map_or_else(|| "none".to_string(), |b| rankings[b].label.clone()),
    ));
    kv_text(&kv)
}

fn render_selection(rankings: &[Ranking], best: Option<usize>, format: Format, kv: &str) -> String {
    match format {
        Format::Kv => kv.to_string(),
        Format::Human => {
            let mut s = format!("  {:<20} {:>9} {:>11} {:>11}\n", "model", "fit %", "rms %", "parameters");
            for (i, r) in rankings.iter().enumerate() {
                let mark = if Some(i) == best { " <- selected" } else { "" };
                let _ = writeln!(
                    s,
                    "  {:<20} {:>9} {:>11} {:>11}{mark}",
                    r.label,
                    fmt_metric(r.average_fit),
                    fmt_metric(r.average_scaled_rms),
                    r.parameters
                );
            }
            s
        }
    }
}

fn write_selection(fitted: &[FittedKind], seed: u64, out: &Path, format: Format) -> Result<String, CliError> {
    let rankings: Vec<Ranking> = fitted.iter().map(FittedKind::ranking).collect();
    let best = select_best(&rankings);
    let sources: Vec<String> = fitted
        .iter()
        .map(|f| f.report_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let kv = selection_text(&rankings, best, seed, &sources);
    write_file(&out.join("selection.txt"), &kv)?;
    Ok(render_selection(&rankings, best, format, &kv))
}

fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}

fn cmd_select(paths: &[PathBuf], out: Option<&Path>, format: Format) -> Result<String, CliError> {
    let mut rankings = Vec::new();
    let mut sources = Vec::new();
    let mut seed = 0;
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        let kv = parse_kv(&text);
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        if get("schema") != Some(REPORT_SCHEMA) {
            return Err(CliError::Data(format!("{} is not a report file", path.display())));
        }
        let parameters = get("summary.parameters")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Data(format!("{}: missing summary.parameters", path.display())))?;
        seed = get("provenance.seed").and_then(|v| v.parse().ok()).unwrap_or(seed);
        rankings.push(Ranking {
            label: get("summary.kind").unwrap_or("unknown").to_string(),
            average_fit: get("summary.average_fit").and_then(parse_metric),
            average_scaled_rms: get("summary.average_scaled_rms").and_then(parse_metric),
            parameters,
        });
        sources.push(path.display().to_string());
    }
    let best = select_best(&rankings);
    let kv = selection_text(&rankings, best, seed, &sources);
    if let Some(out) = out {
        write_file(out, &kv)?;
    }
    Ok(render_selection(&rankings, best, format, &kv))
}

fn cmd_eval(model: &Path, data: &[PathBuf], format: Format) -> Result<String, CliError> {
    let bundle = load_model(model).map_err(data_err)?;
    let mut kv = vec![("schema".to_string(), "blockid-eval v1".to_string())];
    let mut human = String::new();
    for (i, path) in data.iter().enumerate() {
        let ds = ensure_normalized(&load_dataset(path).map_err(data_err)?);
        let pred = predict(&bundle, &ds)?;
        kv.push((format!("dataset.{i}.name"), ds.name().to_string()));
        kv.push((format!("dataset.{i}.sha256"), dataset_digest(&ds)));
        let _ = writeln!(human, "{}", ds.name());
        for (j, yhat) in pred.iter().enumerate() {
            let y = ds.output(j).ok_or_else(|| CliError::Data(format!("dataset '{}' lacks output {j}", ds.name())))?;
            let fit = metrics::nrmse_fit(y, yhat).ok();
            let rms = metrics::scaled_rms(y, yhat).ok();
            let name = &bundle.output_names()[j];
            kv.push((format!("dataset.{i}.output.{j}.name"), name.clone()));
            kv.push((format!("dataset.{i}.output.{j}.fit"), fmt_metric(fit)));
            kv.push((format!("dataset.{i}.output.{j}.scaled_rms"), fmt_metric(rms)));
            let _ = writeln!(human, "  {name:<16} fit {:>9} %  scaled RMS {:>9} %", fmt_metric(fit), fmt_metric(rms));
        }
    }
    Ok(match format {
        Format::Kv => kv_text(&kv),
        Format::Human => human,
    })
}

fn predict(bundle: &ModelBundle, ds: &TimeSeriesDataset) -> Result<Vec<Vec<f64>>, CliError> {
    if ds.input_count() != bundle.input_count() {
        return Err(CliError::Data(format!(
            "model expects {} inputs, dataset '{}' has {}",
            bundle.input_count(),
            ds.name(),
            ds.input_count()
        )));
    }
    let cols = ds.input_columns();
    bundle
        .models()
        .iter()
        .map(|m| m.simulate(&cols).map_err(data_err))
        .collect()
}

fn cmd_simulate(model: &Path, data: &Path, out: &Path) -> Result<String, CliError> {
    let bundle = load_model(model).map_err(data_err)?;
    let ds = ensure_normalized(&load_dataset(data).map_err(data_err)?);
    let pred = predict(&bundle, &ds)?;
    let units: Vec<String> = (0..pred.len())
        .map(|j| ds.outputs().get(j).map(|c| c.unit.clone()).unwrap_or_default())
        .collect();
    let outputs = pred
        .into_iter()
        .zip(bundle.output_names())
        .zip(units)
        .map(|((v, n), u)| Channel::new(n.clone(), u, v))
        .collect();
    let sim = TimeSeriesDataset::new(format!("{}-simulated", ds.name()), ds.sample_period(), ds.role(), ds.inputs().to_vec(), outputs)
        .map_err(data_err)?
        .assume_normalized()
        .with_metadata("source", format!("sha256:{}", dataset_digest(&ds)))
        .with_metadata("seed", bundle.provenance().seed.to_string());
    save_dataset(&stamp(sim), out).map_err(data_err)?;
    Ok(format!("wrote {}\n", out.display()))
}

fn cmd_curvefit(points: &Path, law: Law, format: Format) -> Result<String, CliError> {
    let text = fs::read_to_string(points).map_err(|e| data_err(format!("{}: {e}", points.display())))?;
    let pts = parse_points(&text).map_err(CliError::Data)?;
    let kv: Vec<(String, String)> = match law {
        Law::Power => {
            let f = fit_power_law(&pts).map_err(data_err)?;
            vec![
                ("law".into(), "power".into()),
                ("model".into(), "p = C (1 - phi/100)^n".into()),
                ("points".into(), pts.len().to_string()),
                ("c".into(), format_f64(f.c)),
                ("n".into(), format_f64(f.n)),
                ("r_squared".into(), format_f64(f.r_squared)),
            ]
        }
        Law::Exponential => {
            let f = fit_exponential(&pts).map_err(data_err)?;
            vec![
                ("law".into(), "exponential".into()),
                ("model".into(), "y = a exp(b x)".into()),
                ("points".into(), pts.len().to_string()),
                ("a".into(), format_f64(f.a)),
                ("b".into(), format_f64(f.b)),
                ("r_squared".into(), format_f64(f.r_squared)),
            ]
        }
    };
    Ok(match format {
        Format::Kv => kv_text(&kv),
        Format::Human => kv
            .iter()
            .map(|(k, v)| match v.parse::<f64>() {
                Ok(x) if k != "points" => format!("{k:<10} {x:.6}\n"),
                _ => format!("{k:<10} {v}\n"),
            })
            .collect(),
    })
}

fn cmd_geometry(markers: &Path, mode: GeometryMode, rest_length: Option<f64>, out: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(markers).map_err(|e| data_err(format!("{}: {e}", markers.display())))?;
    let frames = parse_markers(&text).map_err(data_err)?;
    let mode = match (mode, rest_length) {
        (GeometryMode::Curvature, _) => DeformationMode::Curvature,
        (GeometryMode::Contraction, Some(l)) => DeformationMode::Contraction { rest_length: l },
        (GeometryMode::Contraction, None) => return Err(CliError::Usage("contraction mode needs --rest-length".into())),
    };
    let name = markers.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "markers".into());
    let ds = deformation_dataset(&name, &frames, mode).map_err(data_err)?;
    save_dataset(&stamp(ds), out).map_err(data_err)?;
    Ok(format!("wrote {}\n", out.display()))
}

/// Loads a manifest, applying the seed override.
pub fn load_manifest(path: &Path, seed_override: Option<u64>) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let mut m: RunManifest = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed_override {
        m.seed = s;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    m.out = resolve(&m.out);
    m.catalog = m.catalog.as_ref().map(resolve);
    m.identification = m.identification.iter().map(resolve).collect();
    m.validation = m.validation.iter().map(resolve).collect();
    Ok(m)
}

fn run_manifest(path: &Path, seed: Option<u64>, format: Option<Format>) -> Result<String, CliError> {
    let m = load_manifest(path, seed)?;
    let format = format.or(m.format).unwrap_or(Format::Human);
    let mut ident = m.identification.clone();
    let mut valid = m.validation.clone();
    let mut text = String::new();
    if let Some(plant) = &m.plant {
        let spec = plant_spec(plant, m.catalog.as_deref(), m.noise)?;
        let data_dir = m.out.join("data");
        for p in gen_suite(&spec, m.seed, &data_dir)? {
            let ds = load_dataset(&p).map_err(data_err)?;
            match ds.role() {
                Role::Identification => ident.push(p),
                Role::Validation => valid.push(p),
            }
        }
        let _ = writeln!(text, "generated {} datasets from plant '{plant}'", ident.len() + valid.len());
    }
    let kinds = parse_kinds(m.kinds.as_deref().unwrap_or(&[]))?;
    let config = m.search.config(m.seed);
    match m.command.as_deref().unwrap_or("search") {
        "search" => {
            let fitted = fit_kinds(&ident, &valid, m.output, &kinds, &config, &m.out)?;
            text.push_str(&render_fits(&fitted, format));
            text.push_str(&write_selection(&fitted, m.seed, &m.out, format)?);
        }
        "fit" => {
            if kinds.len() != 1 {
                return Err(CliError::Usage("a fit manifest names exactly one kind".into()));
            }
            let fitted = fit_kinds(&ident, &valid, m.output, &kinds, &config, &m.out)?;
            text.push_str(&render_fits(&fitted, format));
        }
        other => return Err(CliError::Usage(format!("unknown manifest command '{other}'"))),
    }
    Ok(text)
}
