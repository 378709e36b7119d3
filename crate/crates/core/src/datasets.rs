//! Time-series datasets, resistance-change preprocessing and the CSV
//! dataset format.
//!
//! File layout:
//!
//! ```text
//! # blockid-dataset v1; dt=0.1; role=identification; inputs=1; outputs=1; name=step-10
//! dr[%],curvature[1/mm]
//! 0.0000000000000000e0,0.0000000000000000e0
//! ...
//! ```
//!
//! Extra `key=value` fields after the five required ones are kept as
//! metadata in sorted order. Numbers are written with 17 significant digits
//! so a save/load round trip is bit-exact.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

pub const DATASET_SCHEMA: &str = "blockid-dataset v1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid resistance trace: {0}")]
    InvalidTrace(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("dataset '{0}' is already normalized")]
    AlreadyNormalized(String),
    #[error("parse error at data row {row} (line {line}), column {column}: {message}")]
    Parse {
        row: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("header error: {0}")]
    Header(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Identification,
    Validation,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Identification => "identification",
            Role::Validation => "validation",
        })
    }
}

impl FromStr for Role {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identification" => Ok(Role::Identification),
            "validation" => Ok(Role::Validation),
            other => Err(DatasetError::Header(format!("unknown role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub unit: String,
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, samples: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            samples,
        }
    }

    fn header(&self) -> String {
        format!("{}[{}]", self.name, self.unit)
    }

    fn from_header(field: &str) -> Self {
        let field = field.trim();
        match (field.find('['), field.ends_with(']')) {
            (Some(open), true) => Channel::new(&field[..open], &field[open + 1..field.len() - 1], Vec::new()),
            _ => Channel::new(field, "", Vec::new()),
        }
    }
}

/// Uniformly sampled multi-channel record. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    name: String,
    sample_period: f64,
    role: Role,
    inputs: Vec<Channel>,
    outputs: Vec<Channel>,
    normalized: bool,
    metadata: BTreeMap<String, String>,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        sample_period: f64,
        role: Role,
        inputs: Vec<Channel>,
        outputs: Vec<Channel>,
    ) -> Result<Self, DatasetError> {
        let name = name.into();
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(DatasetError::Invalid(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if inputs.is_empty() && outputs.is_empty() {
            return Err(DatasetError::Invalid("dataset has no channels".into()));
        }
        let n = inputs.iter().chain(&outputs).next().map_or(0, |c| c.samples.len());
        if n < 2 {
            return Err(DatasetError::Invalid(format!("need at least 2 samples, got {n}")));
        }
        for ch in inputs.iter().chain(&outputs) {
            if ch.samples.len() != n {
                return Err(DatasetError::Invalid(format!(
                    "channel '{}' has {} samples, expected {n}",
                    ch.name,
                    ch.samples.len()
                )));
            }
            if let Some(i) = ch.samples.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::Invalid(format!(
                    "channel '{}' has a non-finite sample at index {i}",
                    ch.name
                )));
            }
        }
        Ok(Self {
            name,
            sample_period,
            role,
            inputs,
            outputs,
            normalized: false,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Marks the inputs as already expressed as fractions.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn inputs(&self) -> &[Channel] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Channel] {
        &self.outputs
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .next()
            .map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn input_columns(&self) -> Vec<&[f64]> {
        self.inputs.iter().map(|c| c.samples.as_slice()).collect()
    }

    pub fn output(&self, index: usize) -> Option<&[f64]> {
        self.outputs.get(index).map(|c| c.samples.as_slice())
    }
}

/// Raw resistance samples in ohms with the unstrained reference `r0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceTrace {
    samples: Vec<f64>,
    r0: f64,
}

impl ResistanceTrace {
    /// `r0` defaults to the first sample.
    pub fn new(samples: Vec<f64>, r0: Option<f64>) -> Result<Self, DatasetError> {
        let r0 = match r0.or_else(|| samples.first().copied()) {
            Some(r) => r,
            None => return Err(DatasetError::InvalidTrace("empty trace".into())),
        };
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(DatasetError::InvalidTrace(format!("r0 must be positive, got {r0}")));
        }
        if let Some(i) = samples.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DatasetError::InvalidTrace(format!(
                "sample {i} is not a positive finite resistance"
            )));
        }
        Ok(Self { samples, r0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }
}

/// Relative resistance change in percent, `100 (R - R0) / R0`.
pub fn compute_resistance_change(trace: &ResistanceTrace) -> Vec<f64> {
    trace
        .samples
        .iter()
        .map(|r| 100.0 * (r - trace.r0) / trace.r0)
        .collect()
}

/// Divides every input channel by 100 (percent to fraction).
pub fn normalize_inputs(dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DatasetError> {
    if dataset.normalized {
        return Err(DatasetError::AlreadyNormalized(dataset.name.clone()));
    }
    let mut out = dataset.clone();
    for ch in &mut out.inputs {
        for v in &mut ch.samples {
            *v /= 100.0;
        }
        if ch.unit == "%" {
            ch.unit = "1".into();
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Normalizes unless the dataset already is.
pub fn ensure_normalized(dataset: &TimeSeriesDataset) -> TimeSeriesDataset {
    normalize_inputs(dataset).unwrap_or_else(|_| dataset.clone())
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Renders the CSV text of a dataset.
pub fn dataset_to_string(dataset: &TimeSeriesDataset) -> String {
    let mut out = format!(
        "# {DATASET_SCHEMA}; dt={}; role={}; inputs={}; outputs={}",
        format_f64(dataset.sample_period),
        dataset.role,
        dataset.inputs.len(),
        dataset.outputs.len()
    );
    let mut meta = dataset.metadata.clone();
    meta.insert("name".into(), dataset.name.clone());
    meta.insert("normalized".into(), dataset.normalized.to_string());
    for (k, v) in &meta {
        out.push_str(&format!("; {k}={v}"));
    }
    out.push('\n');
    let names: Vec<String> = dataset.inputs.iter().chain(&dataset.outputs).map(Channel::header).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    let columns: Vec<&[f64]> = dataset
        .inputs
        .iter()
        .chain(&dataset.outputs)
        .map(|c| c.samples.as_slice())
        .collect();
    for t in 0..dataset.len() {
        let row: Vec<String> = columns.iter().map(|c| format_f64(c[t])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Hex SHA-256 of the canonical text form.
pub fn dataset_digest(dataset: &TimeSeriesDataset) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(dataset_to_string(dataset).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn save_dataset(dataset: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(dataset)).map_err(|e| io_err(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TimeSeriesDataset, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_dataset(&text, &fallback)
}

/// Parses CSV text; `fallback_name` is used when the header has no `name`.
pub fn parse_dataset(text: &str, fallback_name: &str) -> Result<TimeSeriesDataset, DatasetError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DatasetError::Header("empty file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| DatasetError::Header("missing '# blockid-dataset v1' header line".into()))?;
    let mut fields = header.split(';').map(str::trim);
    if fields.next() != Some(DATASET_SCHEMA) {
        return Err(DatasetError::Header(format!("expected schema '{DATASET_SCHEMA}'")));
    }
    let mut kv = BTreeMap::new();
    for field in fields.filter(|f| !f.is_empty()) {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| DatasetError::Header(format!("malformed field '{field}'")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut take = |key: &str| {
        kv.remove(key)
            .ok_or_else(|| DatasetError::Header(format!("missing '{key}' field")))
    };
    let dt: f64 = take("dt")?
        .parse()
        .map_err(|_| DatasetError::Header("dt is not a number".into()))?;
    let role: Role = take("role")?.parse()?;
    let m: usize = take("inputs")?
        .parse()
        .map_err(|_| DatasetError::Header("inputs is not a count".into()))?;
    let p: usize = take("outputs")?
        .parse()
        .map_err(|_| DatasetError::Header("outputs is not a count".into()))?;
    let name = kv.remove("name").unwrap_or_else(|| fallback_name.to_string());
    let normalized = match kv.remove("normalized").as_deref() {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => return Err(DatasetError::Header(format!("bad normalized flag '{other}'"))),
    };

    let names_line = lines
        .next()
        .ok_or_else(|| DatasetError::Header("missing column-name line".into()))?;
    let mut channels: Vec<Channel> = names_line.split(',').map(Channel::from_header).collect();
    if channels.len() != m + p {
        return Err(DatasetError::Header(format!(
            "column-name line has {} names, header declares {}",
            channels.len(),
            m + p
        )));
    }
    for (idx, line) in lines.enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != m + p {
            return Err(DatasetError::Parse {
                row,
                line: row + 2,
                column: cells.len().min(m + p) + 1,
                message: format!("expected {} columns, found {}", m + p, cells.len()),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DatasetError::Parse {
                row,
                line: row + 2,
                column: col + 1,
                message: format!("'{}' is not a number", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Parse {
                    row,
                    line: row + 2,
                    column: col + 1,
                    message: format!("non-finite value '{}'", cell.trim()),
                });
            }
            channels[col].samples.push(v);
        }
    }
    let outputs = channels.split_off(m);
    let mut ds = TimeSeriesDataset::new(name, dt, role, channels, outputs)?;
    ds.normalized = normalized;
    ds.metadata = kv;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> TimeSeriesDataset {
        TimeSeriesDataset::new(
            "test",
            0.1,
            Role::Identification,
            inputs
                .into_iter()
                .enumerate()
                .map(|(i, s)| Channel::new(format!("dr{i}"), "%", s))
                .collect(),
            outputs
                .into_iter()
                .enumerate()
                .map(|(i, s)| Channel::new(format!("y{i}"), "1/mm", s))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn resistance_change_examples() {
        let rc = |r: Vec<f64>, r0| compute_resistance_change(&ResistanceTrace::new(r, Some(r0)).unwrap());
        assert_eq!(rc(vec![1000.0, 1000.0], 1000.0), vec![0.0, 0.0]);
        assert_eq!(rc(vec![1000.0, 900.0], 1000.0), vec![0.0, -10.0]);
        assert_eq!(rc(vec![500.0, 750.0], 500.0), vec![0.0, 50.0]);
    }

    #[test]
    fn resistance_reference_defaults_to_first_sample() {
        let trace = ResistanceTrace::new(vec![250.0, 200.0], None).unwrap();
        assert_eq!(trace.r0(), 250.0);
        assert_eq!(compute_resistance_change(&trace), vec![0.0, -20.0]);
    }

    #[test]
    fn invalid_reference_is_rejected() {
        assert!(matches!(
            ResistanceTrace::new(vec![1.0], Some(0.0)),
            Err(DatasetError::InvalidTrace(_))
        ));
        assert!(ResistanceTrace::new(vec![1.0, -2.0], Some(1.0)).is_err());
    }

    #[test]
    fn normalization_divides_inputs_once() {
        let ds = dataset(vec![vec![-50.0, -80.0]], vec![vec![1.0, 2.0]]);
        let n = normalize_inputs(&ds).unwrap();
        assert_eq!(n.inputs()[0].samples, vec![-0.5, -0.8]);
        assert_eq!(n.outputs()[0].samples, vec![1.0, 2.0]);
        assert!(n.is_normalized());
        assert!(matches!(normalize_inputs(&n), Err(DatasetError::AlreadyNormalized(_))));
        let z = normalize_inputs(&dataset(vec![vec![0.0, 0.0]], vec![vec![0.0, 1.0]])).unwrap();
        assert_eq!(z.inputs()[0].samples, vec![0.0, 0.0]);
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        let short = TimeSeriesDataset::new("x", 0.1, Role::Validation, vec![Channel::new("a", "", vec![1.0])], vec![]);
        assert!(short.is_err());
        let ragged = TimeSeriesDataset::new(
            "x",
            0.1,
            Role::Validation,
            vec![Channel::new("a", "", vec![1.0, 2.0])],
            vec![Channel::new("b", "", vec![1.0, 2.0, 3.0])],
        );
        assert!(ragged.is_err());
        let nan = TimeSeriesDataset::new("x", 0.1, Role::Validation, vec![Channel::new("a", "", vec![1.0, f64::NAN])], vec![]);
        assert!(nan.is_err());
        let dt = TimeSeriesDataset::new("x", 0.0, Role::Validation, vec![Channel::new("a", "", vec![1.0, 2.0])], vec![]);
        assert!(dt.is_err());
    }

    #[test]
    fn parses_well_formed_file() {
        let mut text = String::from("# blockid-dataset v1; dt=0.05; role=validation; inputs=2; outputs=1\na[%],b[%],y[mm]\n");
        for i in 0..100 {
            text.push_str(&format!("{i},{},{}\n", -i, i * 2));
        }
        let ds = parse_dataset(&text, "fallback").unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.name(), "fallback");
        assert_eq!(ds.role(), Role::Validation);
        assert_eq!(ds.input_count(), 2);
        assert_eq!(ds.outputs()[0].unit, "mm");
        assert_eq!(ds.output(0).unwrap()[99], 198.0);
    }

    #[test]
    fn nan_row_is_reported() {
        let mut text = String::from("# blockid-dataset v1; dt=0.1; role=identification; inputs=1; outputs=1\nu,y\n");
        for i in 1..=8 {
            if i == 5 {
                text.push_str("1.0,NaN\n");
            } else {
                text.push_str("1.0,2.0\n");
            }
        }
        match parse_dataset(&text, "x") {
            Err(DatasetError::Parse { row, column, .. }) => {
                assert_eq!(row, 5);
                assert_eq!(column, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_and_missing_header_are_errors() {
        let text = "# blockid-dataset v1; dt=0.1; role=identification; inputs=1; outputs=1\nu,y\n1,2\n3\n";
        assert!(matches!(parse_dataset(text, "x"), Err(DatasetError::Parse { row: 2, .. })));
        assert!(matches!(parse_dataset("u,y\n1,2\n", "x"), Err(DatasetError::Header(_))));
        let no_dt = "# blockid-dataset v1; role=identification; inputs=1; outputs=1\nu,y\n1,2\n3,4\n";
        assert!(matches!(parse_dataset(no_dt, "x"), Err(DatasetError::Header(_))));
    }

    #[test]
    fn metadata_and_flags_survive_round_trip() {
        let ds = dataset(vec![vec![1.0, 2.0]], vec![vec![3.0, 4.0]])
            .with_metadata("seed", "7")
            .assume_normalized();
        let back = parse_dataset(&dataset_to_string(&ds), "other").unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.metadata()["seed"], "7");
    }

    proptest! {
        #[test]
        fn save_load_round_trip_is_bit_exact(
            cols in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 2..30), 1..4),
            dt in 1e-4f64..10.0,
        ) {
            let n = cols.iter().map(Vec::len).min().unwrap();
            let chans: Vec<Channel> = cols
                .iter()
                .enumerate()
                .map(|(i, c)| Channel::new(format!("c{i}"), "u", c[..n].to_vec()))
                .collect();
            let ds = TimeSeriesDataset::new("rt", dt, Role::Identification, chans[..1].to_vec(), chans[1..].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.csv");
            save_dataset(&ds, &path).unwrap();
            let back = load_dataset(&path).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn resistance_change_is_scale_invariant(
            r in prop::collection::vec(1.0f64..1e4, 1..20),
            r0 in 1.0f64..1e4,
            k in 1e-3f64..1e3,
        ) {
            let a = compute_resistance_change(&ResistanceTrace::new(r.clone(), Some(r0)).unwrap());
            let scaled: Vec<f64> = r.iter().map(|v| v * k).collect();
            let b = compute_resistance_change(&ResistanceTrace::new(scaled, Some(r0 * k)).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
            let c = compute_resistance_change(&ResistanceTrace::new(r, None).unwrap());
            prop_assert_eq!(c[0], 0.0);
        }
    }
}
