//! Simulation-error identification of block-oriented models.
//!
//! Every candidate order `(poles, zeros)` with `zeros < poles` is fitted by
//! damped least squares on the free-run simulation error over all
//! identification records. Candidates are then ranked by their average
//! NRMSE fit over identification and validation records. Wiener-Hammerstein
//! models are assembled in two stages along two paths and the better path
//! is kept.

mod init;
mod lm;
pub mod report;
pub mod structure;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::blockmodel::{BlockModel, ModelBundle, ModelError, ModelKind, PiecewiseLinearMap, Provenance};
use crate::datasets::{dataset_digest, Role, TimeSeriesDataset};
use crate::lti::TransferFunction;
use crate::metrics::{self, mean_and_standard_error};

pub use lm::Termination;
pub use report::{select_best, CandidateSummary, DatasetFit, FitReport, Ranking, StageInfo, WhPath};
pub use structure::{ModelStructure, Order};

use lm::{LeastSquares, LmSettings};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid estimation problem: {0}")]
    InvalidProblem(String),
    #[error("this estimator handles {expected}, problem asks for {got}")]
    WrongKind { expected: String, got: ModelKind },
    #[error("{kind} estimation failed: no stable candidate converged ({} diagnostics)", diagnostics.len())]
    EstimationFailed { kind: ModelKind, diagnostics: Vec<String> },
    #[error("problems do not share the same datasets: {0}")]
    MismatchedProblems(String),
    #[error("bundle estimation failed for output '{failed}' after completing {completed:?}: {source}")]
    PartialBundle {
        completed: Vec<String>,
        failed: String,
        #[source]
        source: Box<EstimateError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Local-minimum detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopTolerances {
    /// Stop when the cost fell by less than this fraction over `decrease_window` iterations.
    pub relative_decrease: f64,
    pub decrease_window: usize,
    /// Infinity norm of the cost gradient.
    pub gradient: f64,
    /// Euclidean norm of the parameter step.
    pub step: f64,
}

impl Default for StopTolerances {
    fn default() -> Self {
        Self {
            relative_decrease: 1e-9,
            decrease_window: 5,
            gradient: 1e-8,
            step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub max_poles: usize,
    pub max_zeros: usize,
    pub breakpoints: usize,
    pub max_iterations: usize,
    /// Tries per candidate for nonlinear models (linear models use one).
    pub restarts: usize,
    pub seed: u64,
    pub tolerances: StopTolerances,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_poles: 10,
            max_zeros: 10,
            breakpoints: 10,
            max_iterations: 200,
            restarts: 2,
            seed: 0,
            tolerances: StopTolerances::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: String| Err(EstimateError::InvalidConfig(m));
        if self.max_poles < 1 {
            return bad("max_poles must be at least 1".into());
        }
        if self.restarts < 1 {
            return bad("restarts must be at least 1".into());
        }
        if !(5..=10).contains(&self.breakpoints) {
            return bad(format!("breakpoints must lie in [5, 10], got {}", self.breakpoints));
        }
        let t = &self.tolerances;
        if !(t.relative_decrease > 0.0 && t.gradient > 0.0 && t.step > 0.0) || t.decrease_window == 0 {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    /// Admissible `(poles, zeros)` pairs in search order.
    pub fn orders(&self) -> Vec<Order> {
        let mut out = Vec::new();
        for poles in 1..=self.max_poles {
            for zeros in 0..poles.min(self.max_zeros + 1) {
                out.push(Order::new(poles, zeros));
            }
        }
        out
    }

    pub fn describe(&self) -> String {
        format!(
            "max_poles={} max_zeros={} breakpoints={} max_iterations={} restarts={} seed={} rel_decrease={:e} window={} grad_tol={:e} step_tol={:e}",
            self.max_poles,
            self.max_zeros,
            self.breakpoints,
            self.max_iterations,
            self.restarts,
            self.seed,
            self.tolerances.relative_decrease,
            self.tolerances.decrease_window,
            self.tolerances.gradient,
            self.tolerances.step
        )
    }

    fn lm_settings(&self) -> LmSettings {
        LmSettings {
            max_iterations: self.max_iterations,
            relative_decrease: self.tolerances.relative_decrease,
            decrease_window: self.tolerances.decrease_window,
            gradient: self.tolerances.gradient,
            step: self.tolerances.step,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    identification: Vec<Arc<TimeSeriesDataset>>,
    validation: Vec<Arc<TimeSeriesDataset>>,
    output: usize,
    kind: ModelKind,
    config: SearchConfig,
}

impl EstimationProblem {
    /// All datasets must have normalized inputs, the same input count and
    /// the same sample period.
    pub fn new(
        identification: Vec<Arc<TimeSeriesDataset>>,
        validation: Vec<Arc<TimeSeriesDataset>>,
        output: usize,
        kind: ModelKind,
        config: SearchConfig,
    ) -> Result<Self, EstimateError> {
        config.validate()?;
        let bad = |m: String| Err(EstimateError::InvalidProblem(m));
        if identification.is_empty() {
            return bad("at least one identification dataset is required".into());
        }
        if validation.is_empty() {
            return bad("at least one validation dataset is required".into());
        }
        let first = &identification[0];
        let m = first.input_count();
        if m == 0 {
            return bad(format!("dataset '{}' has no input channels", first.name()));
        }
        for ds in identification.iter().chain(&validation) {
            if ds.input_count() != m {
                return bad(format!("dataset '{}' has {} inputs, expected {m}", ds.name(), ds.input_count()));
            }
            if ds.sample_period() != first.sample_period() {
                return bad(format!("dataset '{}' has a different sample period", ds.name()));
            }
            if ds.output(output).is_none() {
                return bad(format!("dataset '{}' has no output channel {output}", ds.name()));
            }
            if !ds.is_normalized() {
                return bad(format!("dataset '{}' inputs are not normalized", ds.name()));
            }
        }
        for v in &validation {
            if identification.iter().any(|i| Arc::ptr_eq(i, v) || i.name() == v.name()) {
                return bad(format!("dataset '{}' is used for both identification and validation", v.name()));
            }
        }
        Ok(Self {
            identification,
            validation,
            output,
            kind,
            config,
        })
    }

    pub fn with_kind(&self, kind: ModelKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn identification(&self) -> &[Arc<TimeSeriesDataset>] {
        &self.identification
    }

    pub fn validation(&self) -> &[Arc<TimeSeriesDataset>] {
        &self.validation
    }

    pub fn output_name(&self) -> String {
        self.identification[0].outputs()[self.output].name.clone()
    }

    pub fn input_count(&self) -> usize {
        self.identification[0].input_count()
    }

    fn data(&self) -> Data {
        let records = self
            .identification
            .iter()
            .map(|d| (d, Role::Identification))
            .chain(self.validation.iter().map(|d| (d, Role::Validation)))
            .map(|(d, role)| Record {
                name: d.name().to_string(),
                role,
                inputs: d.inputs().iter().map(|c| c.samples.clone()).collect(),
                output: d.outputs()[self.output].samples.clone(),
            })
            .collect();
        Data {
            records,
            output: self.output_name(),
        }
    }
}

/// A fitted model with its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub model: BlockModel,
    pub report: FitReport,
}

#[derive(Debug, Clone)]
pub struct BundleEstimate {
    pub bundle: ModelBundle,
    pub reports: Vec<FitReport>,
}

#[derive(Debug, Clone)]
struct Record {
    name: String,
    role: Role,
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Record {
    fn input_slices(&self) -> Vec<&[f64]> {
        self.inputs.iter().map(Vec::as_slice).collect()
    }
}

#[derive(Debug, Clone)]
struct Data {
    records: Vec<Record>,
    output: String,
}

impl Data {
    fn identification(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.role == Role::Identification)
    }

    fn input_count(&self) -> usize {
        self.records[0].inputs.len()
    }

    /// RMS of the identification outputs; 1 when they are all zero.
    fn output_scale(&self) -> f64 {
        let (sum, n) = self
            .identification()
            .flat_map(|r| r.output.iter())
            .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
        let rms = (sum / n.max(1) as f64).sqrt();
        if rms > 0.0 && rms.is_finite() {
            rms
        } else {
            1.0
        }
    }

    /// Same outputs, inputs replaced by a model's single predicted channel.
    fn driven_by(&self, model: &BlockModel) -> Result<Data, ModelError> {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(Record {
                    name: r.name.clone(),
                    role: r.role,
                    inputs: vec![model.simulate(&r.input_slices())?],
                    output: r.output.clone(),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Data {
            records,
            output: self.output.clone(),
        })
    }
}

/// Simulation error on outputs divided by `scale`.
struct SimulationError<'a> {
    structure: &'a ModelStructure,
    records: Vec<(Vec<&'a [f64]>, Vec<f64>)>,
    rows: usize,
}

impl<'a> SimulationError<'a> {
    fn new(structure: &'a ModelStructure, data: &'a Data, scale: f64) -> Self {
        let records: Vec<(Vec<&[f64]>, Vec<f64>)> = data
            .identification()
            .map(|r| (r.input_slices(), r.output.iter().map(|v| v / scale).collect()))
            .collect();
        let rows = records.iter().map(|r| r.1.len()).sum();
        Self {
            structure,
            records,
            rows,
        }
    }
}

impl LeastSquares for SimulationError<'_> {
    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.rows);
        for (inputs, y) in &self.records {
            let yhat = self.structure.simulate(p, inputs)?;
            out.extend(y.iter().zip(&yhat).map(|(a, b)| a - b));
        }
        Some(out)
    }

    fn residuals_and_jacobian(&self, p: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let np = p.len();
        let mut r = Vec::with_capacity(self.rows);
        let mut jac = DMatrix::<f64>::zeros(self.rows, np);
        let mut row0 = 0;
        for (inputs, y) in &self.records {
            let (yhat, cols) = self.structure.simulate_with_sensitivities(p, inputs)?;
            r.extend(y.iter().zip(&yhat).map(|(a, b)| a - b));
            let n = y.len();
            for (c, col) in cols.iter().enumerate() {
                let dst = &mut jac.as_mut_slice()[c * self.rows + row0..c * self.rows + row0 + n];
                for (d, s) in dst.iter_mut().zip(col) {
                    *d = -s;
                }
            }
            row0 += n;
        }
        Some((r, jac))
    }
}

/// Sum of squared simulation errors over the identification records of
/// `data` for the parameter vector `p` (outputs in original units).
pub fn identification_cost(model: &BlockModel, datasets: &[&TimeSeriesDataset], output: usize) -> Result<f64, ModelError> {
    let mut cost = 0.0;
    for d in datasets {
        let yhat = model.simulate(&d.input_columns())?;
        let y = d.output(output).unwrap_or_default();
        cost += y.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(cost)
}

#[derive(Debug, Clone)]
struct Evaluation {
    datasets: Vec<DatasetFit>,
    identification_cost: f64,
}

fn evaluate(model: &BlockModel, data: &Data) -> Result<Evaluation, ModelError> {
    let mut datasets = Vec::with_capacity(data.records.len());
    let mut cost = 0.0;
    for r in &data.records {
        let yhat = model.simulate(&r.input_slices())?;
        if r.role == Role::Identification {
            cost += r.output.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        datasets.push(DatasetFit {
            name: r.name.clone(),
            role: r.role,
            fit: metrics::nrmse_fit(&r.output, &yhat).ok(),
            scaled_rms: metrics::scaled_rms(&r.output, &yhat).ok(),
            n_samples: r.output.len(),
        });
    }
    Ok(Evaluation {
        datasets,
        identification_cost: cost,
    })
}

fn mean_se(values: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        (None, None)
    } else {
        let (m, se) = mean_and_standard_error(&values);
        (Some(m), Some(se))
    }
}

fn build_report(model: &BlockModel, eval: Evaluation, output: &str) -> FitReport {
    let fits = |role: Option<Role>| -> Vec<f64> {
        eval.datasets
            .iter()
            .filter(|d| role.is_none_or(|r| d.role == r))
            .filter_map(|d| d.fit)
            .collect()
    };
    let (average_fit, fit_standard_error) = mean_se(fits(None));
    let (average_scaled_rms, rms_standard_error) = mean_se(eval.datasets.iter().filter_map(|d| d.scaled_rms).collect());
    FitReport {
        kind: model.kind(),
        output: output.to_string(),
        orders: model.order_summary(),
        parameters: model.parameter_count(),
        identification_cost: eval.identification_cost,
        datasets: eval.datasets.clone(),
        average_fit,
        fit_standard_error,
        average_scaled_rms,
        rms_standard_error,
        identification_fit: mean_se(fits(Some(Role::Identification))).0,
        validation_fit: mean_se(fits(Some(Role::Validation))).0,
        stage: None,
        candidates: Vec::new(),
    }
}

/// Parameters in scaled-output space mapped back to original units.
fn unscale(structure: &ModelStructure, p: &[f64], scale: f64) -> Vec<f64> {
    let mut out = p.to_vec();
    let front_len = structure.front.map_or(0, |o| o.parameter_count() * structure.inputs);
    match (structure.breakpoints, structure.front) {
        (Some(b), _) => {
            for v in &mut out[front_len + b..front_len + 2 * b] {
                *v *= scale;
            }
        }
        (None, Some(order)) => {
            let stride = order.parameter_count();
            for k in 0..structure.inputs {
                for v in &mut out[k * stride..k * stride + order.zeros + 1] {
                    *v *= scale;
                }
            }
        }
        (None, None) => {}
    }
    out
}

fn tf_params(num: &[f64], den: &[f64]) -> Vec<f64> {
    num.iter().chain(&den[1..]).copied().collect()
}

fn signal_range<'a>(signals: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    signals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Deterministic starting point for `structure` on outputs divided by `scale`.
fn initial_parameters(structure: &ModelStructure, data: &Data, scale: f64) -> Vec<f64> {
    let ident: Vec<&Record> = data.identification().collect();
    let scaled: Vec<Vec<f64>> = ident.iter().map(|r| r.output.iter().map(|v| v / scale).collect()).collect();
    let mut params = Vec::with_capacity(structure.parameter_count());
    let mut x_signals: Vec<Vec<f64>> = Vec::new();

    if let Some(order) = structure.front {
        let records: Vec<(Vec<&[f64]>, &[f64])> = ident
            .iter()
            .zip(&scaled)
            .map(|(r, y)| (r.input_slices(), y.as_slice()))
            .collect();
        let fit = init::arx(&records, order);
        for num in &fit.numerators {
            params.extend(tf_params(num, &fit.denominator));
        }
        if structure.breakpoints.is_some() {
            let lin = ModelStructure::linear(structure.inputs, order);
            for r in &ident {
                x_signals.push(lin.simulate(&params, &r.input_slices()).unwrap_or_else(|| vec![0.0; r.output.len()]));
            }
        }
    } else {
        for r in &ident {
            let n = r.output.len();
            x_signals.push((0..n).map(|t| r.inputs.iter().map(|u| u[t]).sum()).collect());
        }
    }

    if let Some(b) = structure.breakpoints {
        let (lo, hi) = signal_range(x_signals.iter().flatten());
        let g = PiecewiseLinearMap::identity(lo, hi, b);
        params.extend_from_slice(g.breakpoints());
        params.extend_from_slice(g.values());
    }

    if let Some(order) = structure.back {
        if structure.front.is_none() {
            let records: Vec<(Vec<&[f64]>, &[f64])> = x_signals
                .iter()
                .zip(&scaled)
                .map(|(x, y)| (vec![x.as_slice()], y.as_slice()))
                .collect();
            let fit = init::arx(&records, order);
            params.extend(tf_params(&fit.numerators[0], &fit.denominator));
        } else {
            let mut num = vec![0.0; order.zeros + 1];
            num[0] = 1.0;
            params.extend(num);
            params.extend(std::iter::repeat_n(0.0, order.poles));
        }
    }
    debug_assert_eq!(params.len(), structure.parameter_count());
    params
}

/// Extra Hammerstein starting point from the over-parameterized
/// equation-error fit at the identity breakpoints.
fn hammerstein_start(structure: &ModelStructure, data: &Data, scale: f64) -> Option<Vec<f64>> {
    let (None, Some(b), Some(order)) = (structure.front, structure.breakpoints, structure.back) else {
        return None;
    };
    let ident: Vec<&Record> = data.identification().collect();
    let x: Vec<Vec<f64>> = ident
        .iter()
        .map(|r| (0..r.output.len()).map(|t| r.inputs.iter().map(|u| u[t]).sum()).collect())
        .collect();
    let y: Vec<Vec<f64>> = ident.iter().map(|r| r.output.iter().map(|v| v / scale).collect()).collect();
    let (lo, hi) = signal_range(x.iter().flatten());
    let g = PiecewiseLinearMap::identity(lo, hi, b);
    let records: Vec<(&[f64], &[f64])> = x.iter().zip(&y).map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
    let fit = init::hammerstein(&records, order, g.breakpoints())?;
    let mut params = g.breakpoints().to_vec();
    params.extend(fit.values);
    params.extend(tf_params(&fit.numerator, &fit.denominator));
    debug_assert_eq!(params.len(), structure.parameter_count());
    Some(params)
}

fn perturb(structure: &ModelStructure, p: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out: Vec<f64> = p
        .iter()
        .map(|v| {
            let sd = 0.1 * v.abs();
            if sd > 0.0 {
                v + Normal::new(0.0, sd).map(|d| d.sample(rng)).unwrap_or(0.0)
            } else {
                *v
            }
        })
        .collect();
    structure.repair(&mut out);
    out
}

struct Fitted {
    order: Order,
    model: BlockModel,
    eval: Evaluation,
    tries: Vec<String>,
}

fn stream_rng(seed: u64, stage: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | index as u64);
    rng
}

fn fit_candidate(
    structure: &ModelStructure,
    order: Order,
    data: &Data,
    config: &SearchConfig,
    scale: f64,
    mut rng: ChaCha8Rng,
) -> Result<Fitted, String> {
    let objective = SimulationError::new(structure, data, scale);
    let settings = config.lm_settings();
    let base = initial_parameters(structure, data, scale);
    let tries = if structure.breakpoints.is_some() { config.restarts } else { 1 };
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(tries + 1);
    starts.push(base.clone());
    for _ in 1..tries {
        starts.push(perturb(structure, &base, &mut rng));
    }
    starts.extend(hammerstein_start(structure, data, scale));
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut costs = Vec::with_capacity(starts.len());
    let mut notes = Vec::new();
    for (t, mut start) in starts.into_iter().enumerate() {
        if !structure.is_feasible(&start) {
            structure.repair(&mut start);
        }
        match lm::minimize(&objective, start, &settings) {
            Some(res) => {
                costs.push(format!("{:.3e} after {} ({:?})", res.cost, res.iterations, res.termination));
                if best.as_ref().is_none_or(|b| res.cost < b.1) {
                    best = Some((res.params, res.cost));
                }
            }
            None => {
                costs.push("infeasible".into());
                notes.push(format!("try {t}: infeasible start"));
            }
        }
    }
    let (params, _) = best.ok_or_else(|| format!("{order}: {}", notes.join("; ")))?;
    let raw = structure
        .to_model(&unscale(structure, &params, scale))
        .map_err(|e| format!("{order}: {e}"))?;
    let model = raw.normalized();
    if !model.is_stable() {
        return Err(format!("{order}: unstable after normalization"));
    }
    let eval = evaluate(&model, data).map_err(|e| format!("{order}: {e}"))?;
    if !eval.identification_cost.is_finite() {
        return Err(format!("{order}: non-finite simulation"));
    }
    Ok(Fitted {
        order,
        model,
        eval,
        tries: costs,
    })
}

/// Exhaustive order search; candidates run in parallel and are reduced in
/// grid order.
fn grid_search(
    data: &Data,
    config: &SearchConfig,
    stage: u64,
    kind: ModelKind,
    make: &(dyn Fn(Order) -> ModelStructure + Sync),
) -> Result<Estimate, EstimateError> {
    let scale = data.output_scale();
    let orders = config.orders();
    let outcomes: Vec<Result<Fitted, String>> = orders
        .par_iter()
        .enumerate()
        .map(|(i, &order)| {
            let structure = make(order);
            fit_candidate(&structure, order, data, config, scale, stream_rng(config.seed, stage, i))
        })
        .collect();

    let mut best: Option<(Ranking, usize)> = None;
    let mut summaries = Vec::with_capacity(outcomes.len());
    let mut reports: Vec<Option<FitReport>> = Vec::with_capacity(outcomes.len());
    for (i, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(f) => {
                let report = build_report(&f.model, f.eval.clone(), &data.output);
                let rank = report.ranking();
                summaries.push(CandidateSummary {
                    label: f.order.to_string(),
                    identification_cost: Some(f.eval.identification_cost),
                    average_fit: report.average_fit,
                    note: Some(f.tries.join("; ")),
                });
                let replace = match &best {
                    None => true,
                    Some((b, _)) => select_best(&[b.clone(), rank.clone()]) == Some(1),
                };
                if replace {
                    best = Some((rank, i));
                }
                reports.push(Some(report));
            }
            Err(msg) => {
                summaries.push(CandidateSummary {
                    label: orders[i].to_string(),
                    identification_cost: None,
                    average_fit: None,
                    note: Some(msg.clone()),
                });
                reports.push(None);
            }
        }
    }
    let Some((_, idx)) = best else {
        return Err(EstimateError::EstimationFailed {
            kind,
            diagnostics: summaries.iter().filter_map(|s| s.note.clone()).collect(),
        });
    };
    let fitted = outcomes[idx].as_ref().expect("selected candidate succeeded");
    let mut report = reports[idx].take().expect("selected candidate has a report");
    report.candidates = summaries;
    Ok(Estimate {
        model: fitted.model.clone(),
        report,
    })
}

mod stage {
    pub const LINEAR: u64 = 1;
    pub const WIENER: u64 = 2;
    pub const HAMMERSTEIN: u64 = 3;
    pub const WH_SECOND_LINEAR: u64 = 4;
    pub const WH_SECOND_HAMMERSTEIN: u64 = 5;
    pub const SERIES: u64 = 6;
}

fn search_linear(data: &Data, config: &SearchConfig, stage: u64) -> Result<Estimate, EstimateError> {
    let m = data.input_count();
    grid_search(data, config, stage, ModelKind::Linear, &|o| ModelStructure::linear(m, o))
}

fn search_wiener(data: &Data, config: &SearchConfig) -> Result<Estimate, EstimateError> {
    let (m, b) = (data.input_count(), config.breakpoints);
    grid_search(data, config, stage::WIENER, ModelKind::Wiener, &|o| ModelStructure::wiener(m, o, b))
}

fn search_hammerstein(data: &Data, config: &SearchConfig, stage: u64) -> Result<Estimate, EstimateError> {
    let (m, b) = (data.input_count(), config.breakpoints);
    grid_search(data, config, stage, ModelKind::Hammerstein, &|o| ModelStructure::hammerstein(m, b, o))
}

/// Linear transfer functions (one per input channel, summed).
pub fn estimate_linear(problem: &EstimationProblem) -> Result<Estimate, EstimateError> {
    if problem.kind != ModelKind::Linear {
        return Err(EstimateError::WrongKind {
            expected: "Linear".into(),
            got: problem.kind,
        });
    }
    search_linear(&problem.data(), &problem.config, stage::LINEAR)
}

/// Hammerstein or Wiener models with estimated breakpoints.
pub fn estimate_block(problem: &EstimationProblem) -> Result<Estimate, EstimateError> {
    let data = problem.data();
    match problem.kind {
        ModelKind::Wiener => search_wiener(&data, &problem.config),
        ModelKind::Hammerstein => search_hammerstein(&data, &problem.config, stage::HAMMERSTEIN),
        other => Err(EstimateError::WrongKind {
            expected: "Hammerstein or Wiener".into(),
            got: other,
        }),
    }
}

fn finish_composite(model: BlockModel, data: &Data, stage_info: StageInfo) -> Result<Estimate, EstimateError> {
    let eval = evaluate(&model, data)?;
    let mut report = build_report(&model, eval, &data.output);
    report.stage = Some(stage_info);
    Ok(Estimate { model, report })
}

fn wh_path_a(data: &Data, config: &SearchConfig) -> Result<Estimate, EstimateError> {
    let wiener = search_wiener(data, config)?;
    let driven = data.driven_by(&wiener.model)?;
    let second = search_linear(&driven, config, stage::WH_SECOND_LINEAR)?;
    let front = wiener.model.front().to_vec();
    let g = wiener.model.nonlinearity().expect("wiener has g").clone();
    let back = second.model.front()[0].clone();
    let composed = BlockModel::wiener_hammerstein(front.clone(), g.clone(), back)?.normalized();
    let first_cost = wiener.report.identification_cost;
    let composed_cost = evaluate(&composed, data)?.identification_cost;
    let kept = composed_cost <= first_cost;
    let model = if kept {
        composed
    } else {
        BlockModel::wiener_hammerstein(front, g, TransferFunction::identity())?
    };
    finish_composite(
        model,
        data,
        StageInfo {
            path: WhPath::WienerThenLinear,
            first_stage_kind: ModelKind::Wiener,
            first_stage_cost: first_cost,
            first_stage_fit: wiener.report.average_fit,
            second_stage_kept: kept,
            alternative_fit: None,
        },
    )
}

fn wh_path_b(data: &Data, config: &SearchConfig) -> Result<Estimate, EstimateError> {
    let linear = search_linear(data, config, stage::LINEAR)?;
    let driven = data.driven_by(&linear.model)?;
    let second = search_hammerstein(&driven, config, stage::WH_SECOND_HAMMERSTEIN)?;
    let front = linear.model.front().to_vec();
    let composed = BlockModel::wiener_hammerstein(
        front.clone(),
        second.model.nonlinearity().expect("hammerstein has g").clone(),
        second.model.back().expect("hammerstein has H2").clone(),
    )?
    .normalized();
    let first_cost = linear.report.identification_cost;
    let composed_cost = evaluate(&composed, data)?.identification_cost;
    let kept = composed_cost <= first_cost;
    let model = if kept {
        composed
    } else {
        let (lo, hi) = signal_range(driven.identification().flat_map(|r| r.inputs[0].iter()));
        BlockModel::wiener_hammerstein(
            front,
            PiecewiseLinearMap::identity(lo, hi, config.breakpoints),
            TransferFunction::identity(),
        )?
    };
    finish_composite(
        model,
        data,
        StageInfo {
            path: WhPath::LinearThenHammerstein,
            first_stage_kind: ModelKind::Linear,
            first_stage_cost: first_cost,
            first_stage_fit: linear.report.average_fit,
            second_stage_kept: kept,
            alternative_fit: None,
        },
    )
}

/// Two-stage Wiener-Hammerstein construction; the path with the higher
/// average fit wins.
pub fn estimate_wh(problem: &EstimationProblem) -> Result<Estimate, EstimateError> {
    if problem.kind != ModelKind::WienerHammerstein {
        return Err(EstimateError::WrongKind {
            expected: "WienerHammerstein".into(),
            got: problem.kind,
        });
    }
    let data = problem.data();
    let a = wh_path_a(&data, &problem.config);
    let b = wh_path_b(&data, &problem.config);
    match (a, b) {
        (Ok(mut a), Ok(mut b)) => {
            let pick_b = select_best(&[a.report.ranking(), b.report.ranking()]) == Some(1);
            let (a_fit, b_fit) = (a.report.average_fit, b.report.average_fit);
            let summaries = vec![
                CandidateSummary {
                    label: WhPath::WienerThenLinear.to_string(),
                    identification_cost: Some(a.report.identification_cost),
                    average_fit: a_fit,
                    note: None,
                },
                CandidateSummary {
                    label: WhPath::LinearThenHammerstein.to_string(),
                    identification_cost: Some(b.report.identification_cost),
                    average_fit: b_fit,
                    note: None,
                },
            ];
            let mut chosen = if pick_b {
                if let Some(s) = b.report.stage.as_mut() {
                    s.alternative_fit = a_fit;
                }
                b
            } else {
                if let Some(s) = a.report.stage.as_mut() {
                    s.alternative_fit = b_fit;
                }
                a
            };
            chosen.report.candidates = summaries;
            Ok(chosen)
        }
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(ea), Err(eb)) => Err(EstimateError::EstimationFailed {
            kind: ModelKind::WienerHammerstein,
            diagnostics: vec![format!("wiener-then-linear: {ea}"), format!("linear-then-hammerstein: {eb}")],
        }),
    }
}

/// Dispatches on the problem's model kind.
pub fn estimate(problem: &EstimationProblem) -> Result<Estimate, EstimateError> {
    match problem.kind {
        ModelKind::Linear => estimate_linear(problem),
        ModelKind::Hammerstein | ModelKind::Wiener => estimate_block(problem),
        ModelKind::WienerHammerstein => estimate_wh(problem),
    }
}

/// Appends a linear block to a fixed model: a linear transfer function is
/// fitted from the prefix output to the measured output while every prefix
/// parameter stays frozen. The extension is kept only if it lowers the
/// identification cost.
pub fn extend_in_series(prefix: &BlockModel, problem: &EstimationProblem) -> Result<Estimate, EstimateError> {
    let data = problem.data();
    let base = evaluate(prefix, &data)?;
    let driven = data.driven_by(prefix)?;
    let extra = search_linear(&driven, &problem.config, stage::SERIES)?;
    let h = extra.model.front()[0].clone();
    let extended = match prefix.kind() {
        ModelKind::Linear => BlockModel::linear(prefix.front().iter().map(|f| f.series(&h)).collect())?,
        ModelKind::Wiener => BlockModel::wiener_hammerstein(
            prefix.front().to_vec(),
            prefix.nonlinearity().expect("wiener has g").clone(),
            h,
        )?,
        ModelKind::Hammerstein => BlockModel::hammerstein(
            prefix.input_count(),
            prefix.nonlinearity().expect("hammerstein has g").clone(),
            prefix.back().expect("hammerstein has H2").series(&h),
        )?,
        ModelKind::WienerHammerstein => BlockModel::wiener_hammerstein(
            prefix.front().to_vec(),
            prefix.nonlinearity().expect("wh has g").clone(),
            prefix.back().expect("wh has H2").series(&h),
        )?,
    };
    let extended = extended.normalized();
    let eval = evaluate(&extended, &data)?;
    let keep = eval.identification_cost <= base.identification_cost && extended.is_stable();
    let (model, eval) = if keep { (extended, eval) } else { (prefix.clone(), base) };
    let report = build_report(&model, eval, &data.output);
    Ok(Estimate { model, report })
}

/// SHA-256 digests of the datasets a problem uses, identification first.
pub fn problem_digests(problem: &EstimationProblem) -> (Vec<String>, Vec<String>) {
    problem
        .identification
        .iter()
        .chain(&problem.validation)
        .map(|d| (d.name().to_string(), dataset_digest(d)))
        .unzip()
}

/// Estimates one model per problem (one problem per output channel).
pub fn estimate_miso_bundle(problems: &[EstimationProblem]) -> Result<BundleEstimate, EstimateError> {
    let Some(first) = problems.first() else {
        return Err(EstimateError::InvalidProblem("no problems given".into()));
    };
    let same = |a: &[Arc<TimeSeriesDataset>], b: &[Arc<TimeSeriesDataset>]| {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| Arc::ptr_eq(x, y) || (x.name() == y.name() && x.inputs() == y.inputs()))
    };
    for p in &problems[1..] {
        if !same(&first.identification, &p.identification) || !same(&first.validation, &p.validation) {
            return Err(EstimateError::MismatchedProblems(format!(
                "output '{}' uses different datasets than output '{}'",
                p.output_name(),
                first.output_name()
            )));
        }
    }
    let mut models = Vec::with_capacity(problems.len());
    let mut reports = Vec::with_capacity(problems.len());
    let mut names = Vec::with_capacity(problems.len());
    for p in problems {
        match estimate(p) {
            Ok(est) => {
                models.push(est.model);
                reports.push(est.report);
                names.push(p.output_name());
            }
            Err(e) => {
                return Err(EstimateError::PartialBundle {
                    completed: names,
                    failed: p.output_name(),
                    source: Box::new(e),
                })
            }
        }
    }
    let (datasets, digests) = problem_digests(first);
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: first.config.seed,
        datasets,
        digests,
        settings: first.config.describe(),
    };
    Ok(BundleEstimate {
        bundle: ModelBundle::new(models, names, provenance)?,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Channel;

    fn record(name: &str, role: Role, u: Vec<f64>, y: Vec<f64>) -> Arc<TimeSeriesDataset> {
        Arc::new(
            TimeSeriesDataset::new(name, 0.1, role, vec![Channel::new("u", "1", u)], vec![Channel::new("y", "", y)])
                .unwrap()
                .assume_normalized(),
        )
    }

    fn square_wave(n: usize, period: usize, level: f64) -> Vec<f64> {
        (0..n).map(|t| if (t / period).is_multiple_of(2) { level } else { 0.0 }).collect()
    }

    fn small_config() -> SearchConfig {
        SearchConfig {
            max_poles: 2,
            max_zeros: 2,
            breakpoints: 5,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn order_grid_is_causal_and_complete() {
        let cfg = SearchConfig::default();
        let orders = cfg.orders();
        assert_eq!(orders.len(), 55);
        assert!(orders.iter().all(|o| o.zeros < o.poles && o.poles <= 10));
        let capped = SearchConfig {
            max_poles: 3,
            max_zeros: 0,
            ..cfg
        };
        assert_eq!(capped.orders(), vec![Order::new(1, 0), Order::new(2, 0), Order::new(3, 0)]);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        assert!(SearchConfig { restarts: 0, ..SearchConfig::default() }.validate().is_err());
        assert!(SearchConfig { breakpoints: 4, ..SearchConfig::default() }.validate().is_err());
        assert!(SearchConfig { max_poles: 0, ..SearchConfig::default() }.validate().is_err());
    }

    #[test]
    fn problem_validation() {
        let a = record("a", Role::Identification, vec![0.0, 1.0], vec![0.0, 1.0]);
        let b = record("b", Role::Validation, vec![0.0, 1.0], vec![0.0, 1.0]);
        let cfg = small_config();
        assert!(EstimationProblem::new(vec![a.clone()], vec![], 0, ModelKind::Linear, cfg.clone()).is_err());
        assert!(EstimationProblem::new(vec![a.clone()], vec![a.clone()], 0, ModelKind::Linear, cfg.clone()).is_err());
        assert!(EstimationProblem::new(vec![a.clone()], vec![b.clone()], 1, ModelKind::Linear, cfg.clone()).is_err());
        let raw = Arc::new(
            TimeSeriesDataset::new("raw", 0.1, Role::Validation, vec![Channel::new("u", "%", vec![0.0, 1.0])], vec![Channel::new("y", "", vec![0.0, 1.0])]).unwrap(),
        );
        assert!(EstimationProblem::new(vec![a.clone()], vec![raw], 0, ModelKind::Linear, cfg.clone()).is_err());
        assert!(EstimationProblem::new(vec![a], vec![b], 0, ModelKind::Linear, cfg).is_ok());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let a = record("a", Role::Identification, square_wave(60, 10, 1.0), square_wave(60, 10, 1.0));
        let b = record("b", Role::Validation, square_wave(60, 7, 1.0), square_wave(60, 7, 1.0));
        let p = EstimationProblem::new(vec![a], vec![b], 0, ModelKind::Wiener, small_config()).unwrap();
        assert!(matches!(estimate_linear(&p), Err(EstimateError::WrongKind { .. })));
        assert!(matches!(estimate_wh(&p), Err(EstimateError::WrongKind { .. })));
        assert!(matches!(estimate_block(&p.with_kind(ModelKind::Linear)), Err(EstimateError::WrongKind { .. })));
    }

    #[test]
    fn first_order_linear_recovery() {
        let tf = TransferFunction::new(vec![0.3], vec![1.0, -0.7]).unwrap();
        let u1 = square_wave(400, 25, -0.6);
        let u2 = square_wave(300, 15, -0.3);
        let a = record("a", Role::Identification, u1.clone(), tf.simulate(&u1));
        let b = record("b", Role::Validation, u2.clone(), tf.simulate(&u2));
        let p = EstimationProblem::new(vec![a], vec![b], 0, ModelKind::Linear, small_config()).unwrap();
        let est = estimate_linear(&p).unwrap();
        assert!(est.report.validation_fit.unwrap() > 99.9, "{:?}", est.report);
        assert!(est.model.is_stable());
        assert_eq!(est.report.candidates.len(), 3);
    }

    #[test]
    fn zero_output_gives_zero_gain_model() {
        let u = square_wave(100, 10, -0.5);
        let a = record("a", Role::Identification, u.clone(), vec![0.0; 100]);
        let b = record("b", Role::Validation, u.clone(), vec![0.0; 100]);
        let p = EstimationProblem::new(vec![a], vec![b], 0, ModelKind::Linear, small_config()).unwrap();
        let est = estimate_linear(&p).unwrap();
        assert!(est.report.average_fit.is_none());
        let y = est.model.simulate(&[&u]).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        assert!(est.model.front()[0].dc_gain().unwrap().abs() < 1e-12);
    }

    #[test]
    fn estimation_is_deterministic() {
        let front = TransferFunction::new(vec![0.5], vec![1.0, -0.5]).unwrap();
        let make = |u: &Vec<f64>| -> Vec<f64> { front.simulate(u).iter().map(|x| x * x + 0.5 * x).collect() };
        let u1 = square_wave(200, 20, -0.8);
        let u2: Vec<f64> = square_wave(200, 13, -0.4);
        let a = record("a", Role::Identification, u1.clone(), make(&u1));
        let b = record("b", Role::Validation, u2.clone(), make(&u2));
        let p = EstimationProblem::new(vec![a], vec![b], 0, ModelKind::Wiener, small_config()).unwrap();
        let first = estimate_block(&p).unwrap();
        let second = estimate_block(&p).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn miso_bundle_rejects_mismatched_datasets() {
        let u = square_wave(60, 10, 1.0);
        let a = record("a", Role::Identification, u.clone(), u.clone());
        let b = record("b", Role::Validation, u.clone(), u.clone());
        let c = record("c", Role::Validation, u.clone(), u.clone());
        let p1 = EstimationProblem::new(vec![a.clone()], vec![b], 0, ModelKind::Linear, small_config()).unwrap();
        let p2 = EstimationProblem::new(vec![a], vec![c], 0, ModelKind::Linear, small_config()).unwrap();
        assert!(matches!(estimate_miso_bundle(&[p1, p2]), Err(EstimateError::MismatchedProblems(_))));
        assert!(matches!(estimate_miso_bundle(&[]), Err(EstimateError::InvalidProblem(_))));
    }
}
