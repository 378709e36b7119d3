//! Static piecewise-linear nonlinearities and block-oriented model
//! composition.
//!
//! Signal flow for every kind, with `m` input channels and one output:
//!
//! ```text
//! Linear             y = sum_k H_k u_k
//! Hammerstein        y = H2( g( sum_k u_k ) )
//! Wiener             y = g( sum_k H1_k u_k )
//! WienerHammerstein  y = H2( g( sum_k H1_k u_k ) )
//! ```
//!
//! For Linear models the per-channel transfer functions live in the
//! `front` slot.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::datasets::format_f64;
use crate::lti::{LtiError, TransferFunction};

pub const MODEL_SCHEMA: &str = "blockid-model v1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid piecewise-linear map: {0}")]
    InvalidMap(String),
    #[error("structure does not match kind {kind}: {reason}")]
    Structure { kind: ModelKind, reason: String },
    #[error("model expects {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("input channels have unequal lengths")]
    RaggedInput,
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Linear,
    Hammerstein,
    Wiener,
    WienerHammerstein,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Linear,
        ModelKind::Hammerstein,
        ModelKind::Wiener,
        ModelKind::WienerHammerstein,
    ];

    pub fn has_front(self) -> bool {
        matches!(self, ModelKind::Linear | ModelKind::Wiener | ModelKind::WienerHammerstein)
    }

    pub fn has_nonlinearity(self) -> bool {
        self != ModelKind::Linear
    }

    pub fn has_back(self) -> bool {
        matches!(self, ModelKind::Hammerstein | ModelKind::WienerHammerstein)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Hammerstein => "hammerstein",
            ModelKind::Wiener => "wiener",
            ModelKind::WienerHammerstein => "wh",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "Linear",
            ModelKind::Hammerstein => "Hammerstein",
            ModelKind::Wiener => "Wiener",
            ModelKind::WienerHammerstein => "WienerHammerstein",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(ModelKind::Linear),
            "hammerstein" | "hs" => Ok(ModelKind::Hammerstein),
            "wiener" => Ok(ModelKind::Wiener),
            "wienerhammerstein" | "wiener-hammerstein" | "wh" => Ok(ModelKind::WienerHammerstein),
            other => Err(ModelError::Format(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Continuous piecewise-linear map with linear extrapolation beyond the
/// outermost breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearMap {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearMap {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if breakpoints.len() < 2 {
            return Err(ModelError::InvalidMap("need at least two breakpoints".into()));
        }
        if breakpoints.len() != values.len() {
            return Err(ModelError::InvalidMap(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidMap("non-finite entry".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidMap("breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints, values })
    }

    /// `g(x) = x` sampled at `count` evenly spaced breakpoints on `[lo, hi]`.
    pub fn identity(lo: f64, hi: f64, count: usize) -> Self {
        let (lo, hi) = if hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        };
        let count = count.max(2);
        let bp: Vec<f64> = (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect();
        Self {
            values: bp.clone(),
            breakpoints: bp,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index `i` of the segment `[x_i, x_{i+1}]` used to evaluate `x`.
    pub fn segment(&self, x: f64) -> usize {
        segment_index(&self.breakpoints, x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_segment(&self.breakpoints, &self.values, x)
    }

    pub fn slope_at(&self, x: f64) -> f64 {
        let i = self.segment(x);
        (self.values[i + 1] - self.values[i]) / (self.breakpoints[i + 1] - self.breakpoints[i])
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    /// `x -> g(scale * x)`.
    pub fn precompose_scale(&self, scale: f64) -> Self {
        let mut pairs: Vec<(f64, f64)> = self
            .breakpoints
            .iter()
            .zip(&self.values)
            .map(|(x, y)| (x / scale, *y))
            .collect();
        if scale < 0.0 {
            pairs.reverse();
        }
        Self {
            breakpoints: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// `x -> scale * g(x)`.
    pub fn postcompose_scale(&self, scale: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|y| y * scale).collect(),
        }
    }
}

pub(crate) fn segment_index(breakpoints: &[f64], x: f64) -> usize {
    let last = breakpoints.len() - 2;
    // first breakpoint strictly greater than x, minus one
    let p = breakpoints.partition_point(|b| *b <= x);
    p.saturating_sub(1).min(last)
}

pub(crate) fn eval_segment(breakpoints: &[f64], values: &[f64], x: f64) -> f64 {
    let i = segment_index(breakpoints, x);
    let (x0, x1) = (breakpoints[i], breakpoints[i + 1]);
    let s = (x - x0) / (x1 - x0);
    values[i] + (values[i + 1] - values[i]) * s
}

/// Free function form of [`PiecewiseLinearMap::eval`].
pub fn eval_pwl(map: &PiecewiseLinearMap, x: f64) -> f64 {
    map.eval(x)
}

fn check_inputs(inputs: &[&[f64]], expected: usize) -> Result<usize, ModelError> {
    if inputs.len() != expected {
        return Err(ModelError::ChannelMismatch {
            expected,
            got: inputs.len(),
        });
    }
    let n = inputs.first().map_or(0, |c| c.len());
    if inputs.iter().any(|c| c.len() != n) {
        return Err(ModelError::RaggedInput);
    }
    Ok(n)
}

/// Simulates `back( g( sum_k front_k u_k ) )` with any static map `g`.
///
/// A `None` front sums the raw inputs; a `None` back passes through.
pub fn simulate_cascade<G: Fn(f64) -> f64>(
    front: Option<&[TransferFunction]>,
    nonlinearity: Option<G>,
    back: Option<&TransferFunction>,
    inputs: &[&[f64]],
) -> Result<Vec<f64>, ModelError> {
    let expected = front.map_or(inputs.len(), |f| f.len());
    let n = check_inputs(inputs, expected)?;
    let mut x = vec![0.0; n];
    for (k, u) in inputs.iter().enumerate() {
        match front {
            Some(tfs) => {
                for (acc, v) in x.iter_mut().zip(tfs[k].simulate(u)) {
                    *acc += v;
                }
            }
            None => {
                for (acc, v) in x.iter_mut().zip(u.iter()) {
                    *acc += v;
                }
            }
        }
    }
    if let Some(g) = nonlinearity {
        for v in &mut x {
            *v = g(*v);
        }
    }
    Ok(match back {
        Some(tf) => tf.simulate(&x),
        None => x,
    })
}

/// One multi-input single-output block-oriented model.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    kind: ModelKind,
    inputs: usize,
    front: Vec<TransferFunction>,
    nonlinearity: Option<PiecewiseLinearMap>,
    back: Option<TransferFunction>,
}

impl BlockModel {
    pub fn new(
        kind: ModelKind,
        inputs: usize,
        front: Vec<TransferFunction>,
        nonlinearity: Option<PiecewiseLinearMap>,
        back: Option<TransferFunction>,
    ) -> Result<Self, ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::Structure {
                kind,
                reason: reason.to_string(),
            })
        };
        if inputs == 0 {
            return fail("at least one input channel is required");
        }
        if kind.has_front() && front.len() != inputs {
            return fail("needs one front transfer function per input channel");
        }
        if !kind.has_front() && !front.is_empty() {
            return fail("must not have front transfer functions");
        }
        if kind.has_nonlinearity() != nonlinearity.is_some() {
            return fail(if kind.has_nonlinearity() {
                "missing static nonlinearity"
            } else {
                "must not have a static nonlinearity"
            });
        }
        if kind.has_back() != back.is_some() {
            return fail(if kind.has_back() {
                "missing back transfer function"
            } else {
                "must not have a back transfer function"
            });
        }
        Ok(Self {
            kind,
            inputs,
            front,
            nonlinearity,
            back,
        })
    }

    pub fn linear(front: Vec<TransferFunction>) -> Result<Self, ModelError> {
        let m = front.len();
        Self::new(ModelKind::Linear, m, front, None, None)
    }

    pub fn hammerstein(inputs: usize, g: PiecewiseLinearMap, back: TransferFunction) -> Result<Self, ModelError> {
        Self::new(ModelKind::Hammerstein, inputs, Vec::new(), Some(g), Some(back))
    }

    pub fn wiener(front: Vec<TransferFunction>, g: PiecewiseLinearMap) -> Result<Self, ModelError> {
        let m = front.len();
        Self::new(ModelKind::Wiener, m, front, Some(g), None)
    }

    pub fn wiener_hammerstein(
        front: Vec<TransferFunction>,
        g: PiecewiseLinearMap,
        back: TransferFunction,
    ) -> Result<Self, ModelError> {
        let m = front.len();
        Self::new(ModelKind::WienerHammerstein, m, front, Some(g), Some(back))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn front(&self) -> &[TransferFunction] {
        &self.front
    }

    pub fn nonlinearity(&self) -> Option<&PiecewiseLinearMap> {
        self.nonlinearity.as_ref()
    }

    pub fn back(&self) -> Option<&TransferFunction> {
        self.back.as_ref()
    }

    pub fn transfer_functions(&self) -> impl Iterator<Item = &TransferFunction> {
        self.front.iter().chain(self.back.as_ref())
    }

    pub fn is_stable(&self) -> bool {
        self.transfer_functions().all(TransferFunction::is_stable)
    }

    pub fn parameter_count(&self) -> usize {
        self.transfer_functions().map(|t| t.parameter_count()).sum::<usize>()
            + self.nonlinearity.as_ref().map_or(0, |g| 2 * g.len())
    }

    /// Short order summary, e.g. `front=2p1z g=10 back=1p0z`.
    pub fn order_summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(tf) = self.front.first() {
            parts.push(format!("front={}p{}z", tf.num_poles(), tf.num_zeros()));
        }
        if let Some(g) = &self.nonlinearity {
            parts.push(format!("g={}", g.len()));
        }
        if let Some(tf) = &self.back {
            parts.push(format!("back={}p{}z", tf.num_poles(), tf.num_zeros()));
        }
        parts.join(" ")
    }

    pub fn simulate(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        let front = self.kind.has_front().then_some(self.front.as_slice());
        match &self.nonlinearity {
            Some(g) => simulate_cascade(front, Some(|x| g.eval(x)), self.back.as_ref(), inputs),
            None => simulate_cascade(front, None::<fn(f64) -> f64>, self.back.as_ref(), inputs),
        }
    }

    /// Rescales so front blocks carry unit DC gain (largest-magnitude
    /// channel for MISO) and the back block carries unit DC gain, folding
    /// the gains into `g`. Linear models are returned unchanged.
    pub fn normalized(&self) -> BlockModel {
        let mut out = self.clone();
        let Some(mut g) = out.nonlinearity.take() else {
            return out;
        };
        if self.kind.has_front() {
            let gains: Vec<f64> = self.front.iter().filter_map(|t| t.dc_gain().ok()).collect();
            let lead = gains.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if gains.len() == self.front.len() && lead.abs() > 1e-12 {
                out.front = self.front.iter().map(|t| t.scaled(1.0 / lead)).collect();
                g = g.precompose_scale(lead);
            }
        }
        if let Some(back) = &self.back {
            if let Ok(gain) = back.dc_gain() {
                if gain.abs() > 1e-12 {
                    out.back = Some(back.scaled(1.0 / gain));
                    g = g.postcompose_scale(gain);
                }
            }
        }
        out.nonlinearity = Some(g);
        out
    }
}

/// Free function form of [`BlockModel::simulate`].
pub fn simulate_model(model: &BlockModel, inputs: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
    model.simulate(inputs)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub datasets: Vec<String>,
    pub digests: Vec<String>,
    pub settings: String,
}

/// One model per output channel, all over the same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    models: Vec<BlockModel>,
    output_names: Vec<String>,
    provenance: Provenance,
}

impl ModelBundle {
    pub fn new(models: Vec<BlockModel>, output_names: Vec<String>, provenance: Provenance) -> Result<Self, ModelError> {
        if models.is_empty() {
            return Err(ModelError::Format("bundle has no models".into()));
        }
        if models.len() != output_names.len() {
            return Err(ModelError::Format("one output name per model is required".into()));
        }
        let m = models[0].input_count();
        if models.iter().any(|md| md.input_count() != m) {
            return Err(ModelError::Format("bundle members disagree on input count".into()));
        }
        Ok(Self {
            models,
            output_names,
            provenance,
        })
    }

    pub fn models(&self) -> &[BlockModel] {
        &self.models
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn input_count(&self) -> usize {
        self.models[0].input_count()
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(", ")
}

fn write_tf(out: &mut Vec<(String, String)>, prefix: &str, tf: &TransferFunction) {
    out.push((format!("{prefix}.numerator"), join_floats(tf.numerator())));
    out.push((format!("{prefix}.denominator"), join_floats(tf.denominator())));
    out.push((format!("{prefix}.delay"), tf.input_delay().to_string()));
}

/// Canonical text form of a bundle.
pub fn bundle_to_string(bundle: &ModelBundle) -> String {
    let p = &bundle.provenance;
    let mut kv: Vec<(String, String)> = vec![
        ("schema".into(), MODEL_SCHEMA.into()),
        ("provenance.tool_version".into(), p.tool_version.clone()),
        ("provenance.seed".into(), p.seed.to_string()),
        ("provenance.datasets".into(), p.datasets.join(", ")),
        ("provenance.digests".into(), p.digests.join(", ")),
        ("provenance.settings".into(), p.settings.clone()),
        ("bundle.inputs".into(), bundle.input_count().to_string()),
        ("bundle.models".into(), bundle.models.len().to_string()),
    ];
    for (j, (model, name)) in bundle.models.iter().zip(&bundle.output_names).enumerate() {
        let pre = format!("model.{j}");
        kv.push((format!("{pre}.output"), name.clone()));
        kv.push((format!("{pre}.kind"), model.kind.to_string()));
        kv.push((
            format!("{pre}.normalization"),
            "front unit-dc (largest channel), back unit-dc, gains folded into g".into(),
        ));
        for (k, tf) in model.front.iter().enumerate() {
            write_tf(&mut kv, &format!("{pre}.front.{k}"), tf);
        }
        if let Some(g) = &model.nonlinearity {
            kv.push((format!("{pre}.nonlinearity.breakpoints"), join_floats(g.breakpoints())));
            kv.push((format!("{pre}.nonlinearity.values"), join_floats(g.values())));
        }
        if let Some(tf) = &model.back {
            write_tf(&mut kv, &format!("{pre}.back"), tf);
        }
    }
    let mut s = String::new();
    for (k, v) in kv {
        s.push_str(&k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    }
    s
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, bundle_to_string(bundle)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_bundle(&text)
}

struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    fn get(&self, key: &str) -> Result<&str, ModelError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ModelError::Format(format!("missing key '{key}'")))
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.0.range(prefix.to_string()..).next().is_some_and(|(k, _)| k.starts_with(prefix))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>, ModelError> {
        let raw = self.get(key)?;
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| ModelError::Format(format!("bad number '{}' in '{key}'", s.trim())))
            })
            .collect()
    }

    fn count(&self, key: &str) -> Result<usize, ModelError> {
        self.get(key)?
            .parse()
            .map_err(|_| ModelError::Format(format!("'{key}' is not a count")))
    }

    fn tf(&self, prefix: &str) -> Result<TransferFunction, ModelError> {
        let tf = TransferFunction::new(
            self.floats(&format!("{prefix}.numerator"))?,
            self.floats(&format!("{prefix}.denominator"))?,
        )?;
        Ok(tf.with_delay(self.count(&format!("{prefix}.delay"))?))
    }
}

pub fn parse_bundle(text: &str) -> Result<ModelBundle, ModelError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ModelError::Format(format!("line {} is not 'key = value'", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let kv = KeyValues(map);
    let schema = kv.get("schema")?;
    if schema != MODEL_SCHEMA {
        return Err(ModelError::Format(format!(
            "schema '{schema}' is not supported (expected '{MODEL_SCHEMA}')"
        )));
    }
    let split_list = |key: &str| -> Result<Vec<String>, ModelError> {
        let raw = kv.get(key)?;
        Ok(if raw.is_empty() {
            Vec::new()
        } else {
            raw.split(',').map(|s| s.trim().to_string()).collect()
        })
    };
    let provenance = Provenance {
        tool_version: kv.get("provenance.tool_version")?.to_string(),
        seed: kv
            .get("provenance.seed")?
            .parse()
            .map_err(|_| ModelError::Format("seed is not an integer".into()))?,
        datasets: split_list("provenance.datasets")?,
        digests: split_list("provenance.digests")?,
        settings: kv.get("provenance.settings")?.to_string(),
    };
    let inputs = kv.count("bundle.inputs")?;
    let count = kv.count("bundle.models")?;
    let mut models = Vec::with_capacity(count);
    let mut names = Vec::with_capacity(count);
    for j in 0..count {
        let pre = format!("model.{j}");
        let kind: ModelKind = kv.get(&format!("{pre}.kind"))?.parse()?;
        names.push(kv.get(&format!("{pre}.output"))?.to_string());
        let mut front = Vec::new();
        while kv.has_prefix(&format!("{pre}.front.{}.", front.len())) {
            front.push(kv.tf(&format!("{pre}.front.{}", front.len()))?);
        }
        let nonlinearity = if kv.has_prefix(&format!("{pre}.nonlinearity.")) {
            Some(PiecewiseLinearMap::new(
                kv.floats(&format!("{pre}.nonlinearity.breakpoints"))?,
                kv.floats(&format!("{pre}.nonlinearity.values"))?,
            )?)
        } else {
            None
        };
        let back = if kv.has_prefix(&format!("{pre}.back.")) {
            Some(kv.tf(&format!("{pre}.back"))?)
        } else {
            None
        };
        let model = BlockModel::new(kind, inputs, front, nonlinearity, back)?;
        if !model.is_stable() {
            return Err(ModelError::Structure {
                kind,
                reason: format!("model {j} has an unstable transfer function"),
            });
        }
        models.push(model);
    }
    ModelBundle::new(models, names, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tf(b: &[f64], a: &[f64]) -> TransferFunction {
        TransferFunction::new(b.to_vec(), a.to_vec()).unwrap()
    }

    fn v_shape() -> PiecewiseLinearMap {
        PiecewiseLinearMap::new(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn pwl_examples() {
        let unit = PiecewiseLinearMap::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(unit.eval(0.5), 0.5);
        assert_eq!(unit.eval(2.0), 2.0);
        assert_eq!(eval_pwl(&v_shape(), -0.5), 0.5);
        assert_eq!(v_shape().eval(-3.0), 3.0);
        assert_eq!(v_shape().eval(1.0), 1.0);
    }

    #[test]
    fn pwl_rejects_unordered_breakpoints() {
        assert!(PiecewiseLinearMap::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(PiecewiseLinearMap::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(PiecewiseLinearMap::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn identity_composition() {
        let id = BlockModel::wiener_hammerstein(
            vec![TransferFunction::identity()],
            PiecewiseLinearMap::identity(-1.0, 1.0, 5),
            TransferFunction::identity(),
        )
        .unwrap();
        let u = [0.3, -0.7, 2.0, -5.0];
        let y = id.simulate(&[&u]).unwrap();
        for (a, b) in y.iter().zip(&u) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hammerstein_with_exact_square_then_delay() {
        let delay = tf(&[0.0, 1.0], &[1.0]);
        let u = [1.0, 2.0, 0.0];
        let y = simulate_cascade(None, Some(|x: f64| x * x), Some(&delay), &[&u]).unwrap();
        assert_eq!(y, vec![0.0, 1.0, 4.0]);
        // PWL through the integer points of x^2 agrees at those points
        let sq = PiecewiseLinearMap::new(vec![-1.0, 0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0, 4.0]).unwrap();
        let model = BlockModel::hammerstein(1, sq, delay).unwrap();
        assert_eq!(model.simulate(&[&u]).unwrap(), vec![0.0, 1.0, 4.0]);
    }

    #[test]
    fn wiener_with_delay_and_v_shape() {
        let model = BlockModel::wiener(vec![tf(&[0.0, 1.0], &[1.0])], v_shape()).unwrap();
        assert_eq!(model.simulate(&[&[1.0, -1.0, 0.0]]).unwrap(), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let model = BlockModel::linear(vec![TransferFunction::identity(); 2]).unwrap();
        assert!(matches!(
            model.simulate(&[&[1.0, 2.0]]),
            Err(ModelError::ChannelMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(model.simulate(&[&[1.0, 2.0], &[1.0]]), Err(ModelError::RaggedInput)));
    }

    #[test]
    fn structure_is_enforced() {
        let g = v_shape();
        let id = TransferFunction::identity;
        assert!(BlockModel::new(ModelKind::Hammerstein, 1, vec![id()], Some(g.clone()), Some(id())).is_err());
        assert!(BlockModel::new(ModelKind::Wiener, 1, vec![id()], Some(g.clone()), Some(id())).is_err());
        assert!(BlockModel::new(ModelKind::Linear, 1, vec![id()], Some(g.clone()), None).is_err());
        assert!(BlockModel::new(ModelKind::WienerHammerstein, 1, vec![id()], None, Some(id())).is_err());
        assert!(BlockModel::new(ModelKind::WienerHammerstein, 2, vec![id()], Some(g), Some(id())).is_err());
    }

    #[test]
    fn miso_sums_front_outputs_before_nonlinearity() {
        let model = BlockModel::wiener(vec![TransferFunction::identity(), tf(&[2.0], &[1.0])], v_shape()).unwrap();
        let y = model.simulate(&[&[1.0, -1.0], &[-1.0, 0.25]]).unwrap();
        assert_eq!(y, vec![1.0, 0.5]);
    }

    #[test]
    fn normalization_preserves_simulation() {
        let front = vec![tf(&[0.4, 0.2], &[1.0, -0.5]), tf(&[-0.1], &[1.0, -0.3])];
        let g = PiecewiseLinearMap::new(vec![-1.0, -0.2, 0.3, 1.5], vec![0.5, -0.1, 0.2, 2.0]).unwrap();
        let back = tf(&[0.3, 0.1], &[1.0, -0.6]);
        let model = BlockModel::wiener_hammerstein(front, g, back).unwrap();
        let norm = model.normalized();
        let lead = norm.front()[0].dc_gain().unwrap();
        assert!((lead - 1.0).abs() < 1e-12);
        assert!((norm.back().unwrap().dc_gain().unwrap() - 1.0).abs() < 1e-12);
        let u1: Vec<f64> = (0..50).map(|i| (0.3 * i as f64).sin()).collect();
        let u2: Vec<f64> = (0..50).map(|i| (0.17 * i as f64).cos()).collect();
        let a = model.simulate(&[&u1, &u2]).unwrap();
        let b = norm.simulate(&[&u1, &u2]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_front_gain_reverses_breakpoints() {
        let model = BlockModel::wiener(vec![tf(&[-2.0], &[1.0])], v_shape()).unwrap();
        let norm = model.normalized();
        assert!(norm.nonlinearity().unwrap().breakpoints().windows(2).all(|w| w[0] < w[1]));
        let u = [0.1, -0.4, 0.9];
        for (x, y) in model.simulate(&[&u]).unwrap().iter().zip(norm.simulate(&[&u]).unwrap()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn sample_bundle() -> ModelBundle {
        let wh = BlockModel::wiener_hammerstein(
            vec![tf(&[0.1, 0.2], &[1.0, -0.7, 0.1]); 2],
            PiecewiseLinearMap::new(vec![-1.0, 0.1, 0.7], vec![0.3, 1.0 / 3.0, -2.0]).unwrap(),
            tf(&[0.25], &[1.0, -0.75]),
        )
        .unwrap();
        let lin = BlockModel::linear(vec![tf(&[1.0 / 7.0], &[1.0, 0.2]), tf(&[0.5, 0.5], &[1.0, -0.1])]).unwrap();
        ModelBundle::new(
            vec![wh, lin],
            vec!["theta_x".into(), "dz".into()],
            Provenance {
                tool_version: "0.1.0".into(),
                seed: 42,
                datasets: vec!["a".into(), "b".into()],
                digests: vec!["00ff".into(), "11ee".into()],
                settings: "max_poles=3".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn bundle_round_trip() {
        let bundle = sample_bundle();
        let text = bundle_to_string(&bundle);
        assert!(text.starts_with("schema = blockid-model v1\n"));
        assert_eq!(parse_bundle(&text).unwrap(), bundle);
        assert_eq!(bundle_to_string(&parse_bundle(&text).unwrap()), text);
    }

    #[test]
    fn load_rejects_inconsistent_files() {
        let text = bundle_to_string(&sample_bundle());
        let wrong_kind = text.replace("model.0.kind = WienerHammerstein", "model.0.kind = Hammerstein");
        assert!(matches!(parse_bundle(&wrong_kind), Err(ModelError::Structure { .. })));
        let wrong_schema = text.replace("blockid-model v1", "blockid-model v9");
        assert!(matches!(parse_bundle(&wrong_schema), Err(ModelError::Format(_))));
        let marker = "model.0.back.denominator = ";
        let start = text.find(marker).unwrap() + marker.len();
        let mut non_monic = text.clone();
        non_monic.replace_range(start..start + 1, "2");
        assert!(matches!(parse_bundle(&non_monic), Err(ModelError::Lti(LtiError::NotMonic(_)))));
    }

    proptest! {
        #[test]
        fn pwl_is_lipschitz(
            mut xs in prop::collection::vec(-5.0f64..5.0, 3..8),
            ys in prop::collection::vec(-5.0f64..5.0, 8),
            probe in -10.0f64..10.0,
            delta in 1e-6f64..1.0,
        ) {
            xs.sort_by(f64::total_cmp);
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            prop_assume!(xs.len() >= 2);
            let g = PiecewiseLinearMap::new(xs.clone(), ys[..xs.len()].to_vec()).unwrap();
            let l = g.max_abs_slope();
            let diff = (g.eval(probe + delta) - g.eval(probe)).abs();
            prop_assert!(diff <= l * delta * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn wh_reduces_to_wiener_and_hammerstein(
            a1 in -0.9f64..0.9,
            b0 in -2.0f64..2.0,
            b1 in -2.0f64..2.0,
            u in prop::collection::vec(-1.0f64..1.0, 2..40),
        ) {
            let h = tf(&[b0, b1], &[1.0, a1]);
            let g = PiecewiseLinearMap::new(vec![-1.0, 0.0, 0.5, 1.0], vec![0.2, -0.3, 0.9, 0.1]).unwrap();
            let id = TransferFunction::identity();
            let wh = BlockModel::wiener_hammerstein(vec![h.clone()], g.clone(), id.clone()).unwrap();
            let w = BlockModel::wiener(vec![h.clone()], g.clone()).unwrap();
            prop_assert_eq!(wh.simulate(&[&u]).unwrap(), w.simulate(&[&u]).unwrap());
            let wh = BlockModel::wiener_hammerstein(vec![id], g.clone(), h.clone()).unwrap();
            let hs = BlockModel::hammerstein(1, g, h).unwrap();
            let first = wh.simulate(&[&u]).unwrap();
            prop_assert_eq!(&first, &hs.simulate(&[&u]).unwrap());
            // purity
            prop_assert_eq!(first, wh.simulate(&[&u]).unwrap());
        }

        #[test]
        fn linear_kind_superposes(
            a in -0.9f64..0.9,
            u1 in prop::collection::vec(-1.0f64..1.0, 30),
            u2 in prop::collection::vec(-1.0f64..1.0, 30),
            alpha in -3.0f64..3.0,
        ) {
            let model = BlockModel::linear(vec![tf(&[0.3, -0.2], &[1.0, a])]).unwrap();
            let mix: Vec<f64> = u1.iter().zip(&u2).map(|(x, y)| alpha * x + y).collect();
            let y = model.simulate(&[&mix]).unwrap();
            let y1 = model.simulate(&[&u1]).unwrap();
            let y2 = model.simulate(&[&u2]).unwrap();
            for t in 0..30 {
                prop_assert!((y[t] - (alpha * y1[t] + y2[t])).abs() < 1e-12 * (1.0 + y[t].abs()) + 1e-12);
            }
        }
    }
}
