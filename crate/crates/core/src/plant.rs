//! Synthetic actuator plants with known structure, used as ground truth.
//!
//! A plant turns gauge-pressure programs into datasets whose input is the
//! resistance change of the embedded sensor (in %) and whose outputs are
//! deformations. The deformation is generated from `dR / 100` by the
//! plant's own blocks, so identifying `dR -> deformation` targets a model
//! of a known class. Constants live in the catalog file `data/plants.toml`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::datasets::{Channel, DatasetError, Role, TimeSeriesDataset};
use crate::lti::{LtiError, TransferFunction};

const BUILTIN_CATALOG: &str = include_str!("../data/plants.toml");

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("unknown plant '{name}'; available plants: {}", available.join(", "))]
    UnknownPlant { name: String, available: Vec<String> },
    #[error("invalid plant '{plant}': {reason}")]
    Invalid { plant: String, reason: String },
    #[error("invalid excitation program: {0}")]
    Program(String),
    #[error("catalog error: {0}")]
    Catalog(String),
    #[error("no load/unload cycle found: {0}")]
    NoCycle(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Linear,
    Wiener,
    Hammerstein,
    WienerHammerstein,
    HystereticFoam,
    Miso3,
}

impl PlantKind {
    fn needs(self) -> (bool, bool, bool) {
        match self {
            PlantKind::Linear => (true, false, false),
            PlantKind::Wiener => (true, true, false),
            PlantKind::Hammerstein => (false, true, true),
            PlantKind::WienerHammerstein | PlantKind::HystereticFoam | PlantKind::Miso3 => (true, true, true),
        }
    }
}

/// `c1 (exp(c2 x) - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Saturation {
    pub c1: f64,
    pub c2: f64,
}

impl Saturation {
    pub fn eval(&self, x: f64) -> f64 {
        self.c1 * (self.c2 * x).exp_m1()
    }
}

/// Pressure (kPa) to resistance change (%): `gain` times a unit-DC
/// first-order lag with pole `pole`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SensingChain {
    pub gain: f64,
    pub pole: f64,
}

impl SensingChain {
    pub fn transfer_function(&self) -> TransferFunction {
        TransferFunction::new(vec![self.gain * (1.0 - self.pole)], vec![1.0, -self.pole])
            .expect("monic first-order lag")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub name: String,
    pub kind: PlantKind,
    pub description: String,
    pub sensing: SensingChain,
    pub front: Option<TransferFunction>,
    pub saturation: Option<Saturation>,
    pub back: Option<TransferFunction>,
    /// Output noise standard deviation as a fraction of the clean range.
    pub noise: f64,
    /// `(name, unit)` per output.
    pub outputs: Vec<(String, String)>,
    /// Side of the equilateral actuator layout, mm (three-input plants).
    pub triangle_side: Option<f64>,
}

impl PlantSpec {
    pub fn input_count(&self) -> usize {
        if self.kind == PlantKind::Miso3 {
            3
        } else {
            1
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    fn validate(&self) -> Result<(), PlantError> {
        let bad = |reason: String| {
            Err(PlantError::Invalid {
                plant: self.name.clone(),
                reason,
            })
        };
        let (f, s, b) = self.kind.needs();
        if f != self.front.is_some() || s != self.saturation.is_some() || b != self.back.is_some() {
            return bad(format!("block set does not match kind {:?}", self.kind));
        }
        for tf in self.front.iter().chain(&self.back) {
            if !tf.is_stable() {
                return bad("transfer function is unstable".into());
            }
        }
        if !(self.sensing.pole.abs() < 1.0) {
            return bad("sensing lag is unstable".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        let expected = if self.kind == PlantKind::Miso3 { 3 } else { 1 };
        if self.outputs.len() != expected {
            return bad(format!("expected {expected} outputs, got {}", self.outputs.len()));
        }
        if self.kind == PlantKind::Miso3 && !self.triangle_side.is_some_and(|s| s > 0.0) {
            return bad("three-input plants need a positive triangle_side".into());
        }
        Ok(())
    }

    /// Deformation of one actuator from normalized resistance change.
    pub fn actuator_response(&self, x: &[f64]) -> Vec<f64> {
        let mut v = match &self.front {
            Some(tf) => tf.simulate(x),
            None => x.to_vec(),
        };
        if let Some(s) = &self.saturation {
            v.iter_mut().for_each(|e| *e = s.eval(*e));
        }
        match &self.back {
            Some(tf) => tf.simulate(&v),
            None => v,
        }
    }

    /// Noise-free outputs for normalized resistance-change inputs.
    pub fn clean_outputs(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self.triangle_side {
            Some(side) if self.kind == PlantKind::Miso3 => self.plate_response(x, side),
            _ => x.iter().map(|c| self.actuator_response(c)).collect(),
        }
    }

    /// Three contractors under a plate. Their free contractions (front
    /// block) combine into heave and two tilt modes; the plate support
    /// stiffens along each mode (odd extension of the saturation), the
    /// geometry turns deflections into tilts (deg) and heave (mm), and the
    /// back block adds the plate's relaxation.
    fn plate_response(&self, x: &[Vec<f64>], side: f64) -> Vec<Vec<f64>> {
        let free: Vec<Vec<f64>> = x
            .iter()
            .map(|c| self.front.as_ref().map_or_else(|| c.clone(), |tf| tf.simulate(c)))
            .collect();
        let deflect = |s: f64| match &self.saturation {
            Some(sat) => -s.signum() * sat.eval(-s.abs()),
            None => s,
        };
        let r = side / 3f64.sqrt();
        let n = x[0].len();
        let mut out = vec![vec![0.0; n]; 3];
        for t in 0..n {
            let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
            for (k, deg) in CORNERS.iter().enumerate() {
                let (s, c) = deg.to_radians().sin_cos();
                sx += free[k][t] * s;
                sy += free[k][t] * c;
                sz += free[k][t];
            }
            out[0][t] = (2.0 * deflect(sx) / (3.0 * r)).atan().to_degrees();
            out[1][t] = (2.0 * deflect(sy) / (3.0 * r)).atan().to_degrees();
            out[2][t] = deflect(sz / 3.0);
        }
        match &self.back {
            Some(tf) => out.iter().map(|o| tf.simulate(o)).collect(),
            None => out,
        }
    }
}

/// Corner angles of the actuator layout, degrees.
const CORNERS: [f64; 3] = [90.0, 210.0, 330.0];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    sensing: SensingChain,
    plant: Vec<RawPlant>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    name: String,
    kind: PlantKind,
    #[serde(default)]
    description: String,
    output: Option<String>,
    unit: Option<String>,
    outputs: Option<Vec<(String, String)>>,
    #[serde(default)]
    noise: f64,
    triangle_side: Option<f64>,
    front: Option<RawTf>,
    saturation: Option<Saturation>,
    back: Option<RawTf>,
}

/// Parses catalog text (TOML).
pub fn parse_catalog(text: &str) -> Result<Vec<PlantSpec>, PlantError> {
    let raw: RawCatalog = toml::from_str(text).map_err(|e| PlantError::Catalog(e.to_string()))?;
    let mut plants = Vec::with_capacity(raw.plant.len());
    for p in raw.plant {
        let tf = |t: Option<RawTf>| -> Result<Option<TransferFunction>, PlantError> {
            t.map(|t| TransferFunction::new(t.num, t.den))
                .transpose()
                .map_err(|e: LtiError| PlantError::Invalid {
                    plant: p.name.clone(),
                    reason: e.to_string(),
                })
        };
        let front = tf(p.front)?;
        let back = tf(p.back)?;
        let outputs = match (p.outputs, p.output) {
            (Some(list), _) => list,
            (None, Some(name)) => vec![(name, p.unit.unwrap_or_default())],
            (None, None) => vec![("deformation".into(), String::new())],
        };
        let spec = PlantSpec {
            name: p.name,
            kind: p.kind,
            description: p.description,
            sensing: raw.sensing,
            front,
            saturation: p.saturation,
            back,
            noise: p.noise,
            outputs,
            triangle_side: p.triangle_side,
        };
        spec.validate()?;
        if plants.iter().any(|q: &PlantSpec| q.name == spec.name) {
            return Err(PlantError::Catalog(format!("duplicate plant '{}'", spec.name)));
        }
        plants.push(spec);
    }
    Ok(plants)
}

/// The catalog shipped with the crate.
pub fn builtin_catalog() -> Vec<PlantSpec> {
    parse_catalog(BUILTIN_CATALOG).expect("built-in catalog is valid")
}

pub fn find_plant(catalog: &[PlantSpec], name: &str) -> Result<PlantSpec, PlantError> {
    catalog
        .iter()
        .find(|p| p.name == name)
        .cloned()
        .ok_or_else(|| PlantError::UnknownPlant {
            name: name.to_string(),
            available: catalog.iter().map(|p| p.name.clone()).collect(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// `level` on for `on_duration`, then off for `off_duration`, repeated.
    /// With several channels every non-empty channel group (singles, pairs,
    /// all) is cycled in turn.
    StepCycles,
    /// Rest, staircase down through `levels` holding each for
    /// `on_duration`, back up through the same levels, rest.
    GradualIncrease,
    /// Two channels driven with overlapping pulses: the first at levels
    /// 0..3, the second at levels 3..5.
    MixedParallel,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::StepCycles => "step-cycles",
            Pattern::GradualIncrease => "gradual-increase",
            Pattern::MixedParallel => "mixed-parallel",
        })
    }
}

impl FromStr for Pattern {
    type Err = PlantError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step-cycles" | "step_cycles" | "step" => Ok(Pattern::StepCycles),
            "gradual-increase" | "gradual_increase" | "gradual" => Ok(Pattern::GradualIncrease),
            "mixed-parallel" | "mixed_parallel" | "mixed" => Ok(Pattern::MixedParallel),
            other => Err(PlantError::Program(format!("unknown pattern '{other}'"))),
        }
    }
}

/// A gauge-pressure program; levels in kPa, durations in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationProgram {
    pub pattern: Pattern,
    pub levels: Vec<f64>,
    pub on_duration: f64,
    pub off_duration: f64,
    pub cycles: usize,
    pub channels: usize,
}

impl ExcitationProgram {
    pub fn step_cycles(level: f64, on: f64, off: f64, cycles: usize) -> Self {
        Self {
            pattern: Pattern::StepCycles,
            levels: vec![level],
            on_duration: on,
            off_duration: off,
            cycles,
            channels: 1,
        }
    }

    /// Down to -60 kPa and back with 10 s holds and 5 s rests.
    pub fn gradual() -> Self {
        Self {
            pattern: Pattern::GradualIncrease,
            levels: vec![-10.0, -20.0, -40.0, -60.0],
            on_duration: 10.0,
            off_duration: 5.0,
            cycles: 1,
            channels: 1,
        }
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::Program(m.into()));
        if !(self.on_duration > 0.0 && self.off_duration > 0.0) {
            return bad("durations must be positive");
        }
        if self.cycles < 1 {
            return bad("at least one cycle is required");
        }
        if self.channels < 1 {
            return bad("at least one channel is required");
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !l.is_finite()) {
            return bad("levels must be finite and non-empty");
        }
        if self.pattern == Pattern::MixedParallel && (self.levels.len() != 5 || self.channels < 2) {
            return bad("mixed-parallel needs 5 levels and at least 2 channels");
        }
        Ok(())
    }
}

fn steps(seconds: f64, dt: f64) -> usize {
    (seconds / dt).round() as usize
}

/// Channel groups for multi-channel step cycles: singles, then pairs, then
/// larger groups, up to all channels.
fn channel_groups(m: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (1u32..(1 << m)).map(|mask| (0..m).filter(|k| mask & (1 << k) != 0).collect()).collect();
    groups.sort_by_key(|g| g.len());
    groups
}

/// Piecewise-constant pressure per channel.
pub fn generate_excitation(program: &ExcitationProgram, dt: f64) -> Result<Vec<Vec<f64>>, PlantError> {
    program.validate()?;
    if !(dt > 0.0) {
        return Err(PlantError::Program(format!("dt must be positive, got {dt}")));
    }
    let m = program.channels;
    let on = steps(program.on_duration, dt);
    let off = steps(program.off_duration, dt);
    let mut out = vec![Vec::new(); m];
    let mut push = |values: &[f64], count: usize| {
        for (ch, v) in out.iter_mut().zip(values) {
            ch.extend(std::iter::repeat_n(*v, count));
        }
    };
    match program.pattern {
        Pattern::StepCycles => {
            let level = program.levels[0];
            let groups = if m == 1 { vec![vec![0]] } else { channel_groups(m) };
            for group in &groups {
                let active: Vec<f64> = (0..m).map(|k| if group.contains(&k) { level } else { 0.0 }).collect();
                for _ in 0..program.cycles {
                    push(&active, on);
                    push(&vec![0.0; m], off);
                }
            }
        }
        Pattern::GradualIncrease => {
            let zeros = vec![0.0; m];
            let down = program.levels.iter();
            let up = program.levels.iter().rev().skip(1);
            for _ in 0..program.cycles {
                push(&zeros, off);
                for l in down.clone().chain(up.clone()) {
                    push(&vec![*l; m], on);
                }
            }
            push(&zeros, off);
        }
        Pattern::MixedParallel => {
            // time base in units of half an on-duration
            let unit = steps(program.on_duration / 2.0, dt);
            let l = &program.levels;
            let a = [0.0, l[0], 0.0, l[1], 0.0, l[2], 0.0];
            let a_len = [1, 2, 2, 2, 2, 2, 3];
            let b = [0.0, l[3], 0.0, l[4], 0.0];
            let b_len = [1, 6, 2, 4, 1];
            for _ in 0..program.cycles {
                let start = out[0].len();
                for (v, k) in a.iter().zip(a_len) {
                    out[0].extend(std::iter::repeat_n(*v, k * unit));
                }
                for (v, k) in b.iter().zip(b_len) {
                    out[1].extend(std::iter::repeat_n(*v, k * unit));
                }
                let len = out[0].len().max(out[1].len());
                for ch in out.iter_mut() {
                    ch.resize(len.max(start), 0.0);
                }
            }
        }
    }
    Ok(out)
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Simulates the plant on pressure traces (kPa, one per input channel).
/// Noise is seeded by `seed` and the dataset name, so each dataset of a
/// suite draws an independent but reproducible stream.
pub fn simulate_plant(
    spec: &PlantSpec,
    pressure: &[Vec<f64>],
    dt: f64,
    seed: u64,
    name: &str,
    role: Role,
) -> Result<TimeSeriesDataset, PlantError> {
    spec.validate()?;
    if pressure.len() != spec.input_count() {
        return Err(PlantError::Program(format!(
            "plant '{}' has {} inputs, program drives {}",
            spec.name,
            spec.input_count(),
            pressure.len()
        )));
    }
    let sensing = spec.sensing.transfer_function();
    let dr: Vec<Vec<f64>> = pressure.iter().map(|p| sensing.simulate(p)).collect();
    let x: Vec<Vec<f64>> = dr.iter().map(|c| c.iter().map(|v| v / 100.0).collect()).collect();
    let mut outputs = spec.clean_outputs(&x);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    for y in outputs.iter_mut() {
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let sd = spec.noise * (hi - lo);
        if sd > 0.0 {
            let dist = Normal::new(0.0, sd).expect("positive sd");
            y.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
        }
    }

    let input_names: Vec<String> = if dr.len() == 1 {
        vec!["dr".into()]
    } else {
        (1..=dr.len()).map(|k| format!("dr{k}")).collect()
    };
    let inputs = dr
        .into_iter()
        .zip(input_names)
        .map(|(v, n)| Channel::new(n, "%", v))
        .collect();
    let outputs = outputs
        .into_iter()
        .zip(&spec.outputs)
        .map(|(v, (n, u))| Channel::new(n.clone(), u.clone(), v))
        .collect();
    Ok(TimeSeriesDataset::new(name, dt, role, inputs, outputs)?
        .with_metadata("plant", spec.name.clone())
        .with_metadata("seed", seed.to_string()))
}

/// Sample period of all standard scenarios, seconds.
pub const STANDARD_DT: f64 = 0.1;

/// One generated experiment of a standard suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub suffix: String,
    pub program: ExcitationProgram,
    pub role: Role,
}

/// The identification/validation split used throughout: steps at -10 and
/// -60 kPa (plus the gradual staircase for single-input plants) identify;
/// steps at -20 and -40 kPa validate. Steps are 10 s on/off; single-input
/// plants run 3 cycles, three-input plants one cycle per channel group.
pub fn standard_scenarios(spec: &PlantSpec) -> Vec<Scenario> {
    let m = spec.input_count();
    let cycles = if m == 1 { 3 } else { 1 };
    let step = |level: f64, role| Scenario {
        suffix: format!("step{}", level as i64),
        program: ExcitationProgram::step_cycles(level, 10.0, 10.0, cycles).with_channels(m),
        role,
    };
    let mut out = vec![step(-10.0, Role::Identification), step(-60.0, Role::Identification)];
    if m == 1 {
        out.push(Scenario {
            suffix: "gradual".into(),
            program: ExcitationProgram::gradual(),
            role: Role::Identification,
        });
    }
    out.push(step(-20.0, Role::Validation));
    out.push(step(-40.0, Role::Validation));
    out
}

/// Generates every standard scenario, named `<plant>-<suffix>`.
pub fn standard_suite(spec: &PlantSpec, seed: u64) -> Result<Vec<TimeSeriesDataset>, PlantError> {
    standard_scenarios(spec)
        .into_iter()
        .map(|s| {
            let p = generate_excitation(&s.program, STANDARD_DT)?;
            simulate_plant(spec, &p, STANDARD_DT, seed, &format!("{}-{}", spec.name, s.suffix), s.role)
        })
        .collect()
}

/// Polynomial in a centred, scaled variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    /// Lowest power first.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub scale: f64,
}

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    fn fit(points: &[(f64, f64)], order: usize) -> Self {
        let n = points.len() as f64;
        let center = points.iter().map(|p| p.0).sum::<f64>() / n;
        let scale = points.iter().map(|p| (p.0 - center).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let a = DMatrix::from_fn(points.len(), order + 1, |i, j| ((points[i].0 - center) / scale).powi(j as i32));
        let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
        let coefficients = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map(|c| c.iter().copied().collect())
            .unwrap_or_else(|_| vec![0.0; order + 1]);
        Self {
            coefficients,
            center,
            scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisLoop {
    /// Samples where the input increases.
    pub loading: Polynomial,
    /// Samples where the input decreases.
    pub unloading: Polynomial,
    /// Input interval covered by both branches.
    pub overlap: (f64, f64),
    /// Integral of |loading - unloading| over the overlap.
    pub area: f64,
    /// `area` divided by the product of the input and output ranges.
    pub relative_area: f64,
}

/// Separates samples by the sign of the input change, fits a polynomial of
/// `order` (2 or 3) per branch and integrates the gap between them.
pub fn hysteresis_loop(dataset: &TimeSeriesDataset, input: usize, output: usize, order: usize) -> Result<HysteresisLoop, PlantError> {
    if !(2..=3).contains(&order) {
        return Err(PlantError::Program(format!("branch order must be 2 or 3, got {order}")));
    }
    let x = dataset
        .inputs()
        .get(input)
        .map(|c| &c.samples)
        .ok_or_else(|| PlantError::NoCycle(format!("dataset has no input {input}")))?;
    let y = dataset
        .output(output)
        .ok_or_else(|| PlantError::NoCycle(format!("dataset has no output {output}")))?;
    let range = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) - v.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let (xr, yr) = (range(x), range(y));
    let eps = 1e-9 * xr;
    let (mut up, mut down) = (Vec::new(), Vec::new());
    for t in 1..x.len() {
        let d = x[t] - x[t - 1];
        if d > eps {
            up.push((x[t], y[t]));
        } else if d < -eps {
            down.push((x[t], y[t]));
        }
    }
    let need = order + 2;
    if up.len() < need || down.len() < need {
        return Err(PlantError::NoCycle(format!(
            "{} increasing and {} decreasing samples, need {need} of each",
            up.len(),
            down.len()
        )));
    }
    let span = |v: &[(f64, f64)]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ul, uh) = span(&up);
    let (dl, dh) = span(&down);
    let (lo, hi) = (ul.max(dl), uh.min(dh));
    if !(hi > lo) {
        return Err(PlantError::NoCycle("branches do not overlap".into()));
    }
    let loading = Polynomial::fit(&up, order);
    let unloading = Polynomial::fit(&down, order);
    let steps = 2000;
    let h = (hi - lo) / steps as f64;
    let gap = |x: f64| (loading.eval(x) - unloading.eval(x)).abs();
    let area = h * ((gap(lo) + gap(hi)) / 2.0 + (1..steps).map(|i| gap(lo + i as f64 * h)).sum::<f64>());
    let relative_area = if xr > 0.0 && yr > 0.0 { area / (xr * yr) } else { 0.0 };
    Ok(HysteresisLoop {
        loading,
        unloading,
        overlap: (lo, hi),
        area,
        relative_area,
    })
}
