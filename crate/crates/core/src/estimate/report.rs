//! Fit reports and their key-value text form.

use std::fmt;
use std::str::FromStr;

use crate::blockmodel::ModelKind;
use crate::datasets::Role;

/// Metrics of one model on one dataset. `None` where the metric is
/// undefined (constant or all-zero measured output).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFit {
    pub name: String,
    pub role: Role,
    pub fit: Option<f64>,
    pub scaled_rms: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhPath {
    /// Wiener model, then a linear block on its output.
    WienerThenLinear,
    /// Linear model, then a Hammerstein model on its output.
    LinearThenHammerstein,
}

impl fmt::Display for WhPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WhPath::WienerThenLinear => "wiener-then-linear",
            WhPath::LinearThenHammerstein => "linear-then-hammerstein",
        })
    }
}

/// How a composed model relates to the first stage it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInfo {
    pub path: WhPath,
    pub first_stage_kind: ModelKind,
    pub first_stage_cost: f64,
    pub first_stage_fit: Option<f64>,
    /// False when the second stage did not lower the identification cost
    /// and was replaced by identity blocks.
    pub second_stage_kept: bool,
    pub alternative_fit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSummary {
    pub label: String,
    pub identification_cost: Option<f64>,
    pub average_fit: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub kind: ModelKind,
    pub output: String,
    pub orders: String,
    pub parameters: usize,
    /// Sum of squared simulation errors over the identification datasets.
    pub identification_cost: f64,
    pub datasets: Vec<DatasetFit>,
    pub average_fit: Option<f64>,
    pub fit_standard_error: Option<f64>,
    pub average_scaled_rms: Option<f64>,
    pub rms_standard_error: Option<f64>,
    pub identification_fit: Option<f64>,
    pub validation_fit: Option<f64>,
    pub stage: Option<StageInfo>,
    pub candidates: Vec<CandidateSummary>,
}

impl FitReport {
    pub fn ranking(&self) -> Ranking {
        Ranking {
            label: format!("{} ({})", self.kind, self.output),
            average_fit: self.average_fit,
            average_scaled_rms: self.average_scaled_rms,
            parameters: self.parameters,
        }
    }

    /// `key = value` lines, each key prefixed with `prefix`.
    pub fn to_key_values(&self, prefix: &str) -> Vec<(String, String)> {
        let mut kv = vec![
            (format!("{prefix}kind"), self.kind.to_string()),
            (format!("{prefix}output"), self.output.clone()),
            (format!("{prefix}orders"), self.orders.clone()),
            (format!("{prefix}parameters"), self.parameters.to_string()),
            (format!("{prefix}identification_cost"), format!("{:.6e}", self.identification_cost)),
        ];
        for (i, d) in self.datasets.iter().enumerate() {
            let p = format!("{prefix}dataset.{i}.");
            kv.push((format!("{p}name"), d.name.clone()));
            kv.push((format!("{p}role"), d.role.to_string()));
            kv.push((format!("{p}samples"), d.n_samples.to_string()));
            kv.push((format!("{p}fit"), fmt_metric(d.fit)));
            kv.push((format!("{p}scaled_rms"), fmt_metric(d.scaled_rms)));
        }
        kv.push((format!("{prefix}average.fit"), fmt_metric(self.average_fit)));
        kv.push((format!("{prefix}average.fit_se"), fmt_metric(self.fit_standard_error)));
        kv.push((format!("{prefix}average.scaled_rms"), fmt_metric(self.average_scaled_rms)));
        kv.push((format!("{prefix}average.scaled_rms_se"), fmt_metric(self.rms_standard_error)));
        kv.push((format!("{prefix}average.identification_fit"), fmt_metric(self.identification_fit)));
        kv.push((format!("{prefix}average.validation_fit"), fmt_metric(self.validation_fit)));
        if let Some(stage) = &self.stage {
            kv.push((format!("{prefix}stage.path"), stage.path.to_string()));
            kv.push((format!("{prefix}stage.first_kind"), stage.first_stage_kind.to_string()));
            kv.push((format!("{prefix}stage.first_cost"), format!("{:.6e}", stage.first_stage_cost)));
            kv.push((format!("{prefix}stage.first_fit"), fmt_metric(stage.first_stage_fit)));
            kv.push((format!("{prefix}stage.second_kept"), stage.second_stage_kept.to_string()));
            kv.push((format!("{prefix}stage.alternative_fit"), fmt_metric(stage.alternative_fit)));
        }
        kv
    }

    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} model for '{}' ({}, {} parameters)\n",
            self.kind, self.output, self.orders, self.parameters
        );
        s.push_str(&format!("  {:<24} {:<15} {:>9} {:>11}\n", "dataset", "role", "fit %", "rms %"));
        for d in &self.datasets {
            s.push_str(&format!(
                "  {:<24} {:<15} {:>9} {:>11}\n",
                d.name,
                d.role.to_string(),
                fmt_metric(d.fit),
                fmt_metric(d.scaled_rms)
            ));
        }
        s.push_str(&format!(
            "  average fit {} +- {} %, scaled RMS {} +- {} %\n",
            fmt_metric(self.average_fit),
            fmt_metric(self.fit_standard_error),
            fmt_metric(self.average_scaled_rms),
            fmt_metric(self.rms_standard_error)
        ));
        if let Some(stage) = &self.stage {
            s.push_str(&format!(
                "  built {} (first stage {} cost {:.6e}, second stage {})\n",
                stage.path,
                stage.first_stage_kind,
                stage.first_stage_cost,
                if stage.second_stage_kept { "kept" } else { "dropped" }
            ));
        }
        s
    }
}

/// Metrics are reported with two decimals.
pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "undefined".into(),
    }
}

pub fn parse_metric(s: &str) -> Option<f64> {
    f64::from_str(s.trim()).ok()
}

/// What model selection looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub label: String,
    pub average_fit: Option<f64>,
    pub average_scaled_rms: Option<f64>,
    pub parameters: usize,
}

fn better(a: &Ranking, b: &Ranking) -> bool {
    use std::cmp::Ordering::*;
    let fit = match (a.average_fit, b.average_fit) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Greater,
        (None, Some(_)) => Less,
        (None, None) => Equal,
    };
    if fit != Equal {
        return fit == Greater;
    }
    let rms = match (a.average_scaled_rms, b.average_scaled_rms) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Greater,
        (None, Some(_)) => Less,
        (None, None) => Equal,
    };
    if rms != Equal {
        return rms == Greater;
    }
    a.parameters < b.parameters
}

/// Index of the entry with the highest average fit; ties go to the lower
/// scaled RMS, then to fewer parameters, then to the earlier entry.
pub fn select_best(entries: &[Ranking]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        match best {
            Some(b) if !better(e, &entries[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(label: &str, fit: f64, rms: f64, params: usize) -> Ranking {
        Ranking {
            label: label.into(),
            average_fit: Some(fit),
            average_scaled_rms: Some(rms),
            parameters: params,
        }
    }

    #[test]
    fn selection_examples() {
        let reports = [r("Linear", 76.2, 9.4, 10), r("WH", 83.0, 6.0, 40)];
        assert_eq!(select_best(&reports), Some(1));
        let tie = [r("a", 80.0, 8.0, 5), r("b", 80.0, 6.0, 50)];
        assert_eq!(select_best(&tie), Some(1));
        let tie = [r("a", 80.0, 6.0, 50), r("b", 80.0, 6.0, 5)];
        assert_eq!(select_best(&tie), Some(1));
        assert_eq!(select_best(&[r("only", 1.0, 1.0, 1)]), Some(0));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn undefined_fit_ranks_last() {
        let mut undefined = r("u", 0.0, 0.0, 1);
        undefined.average_fit = None;
        assert_eq!(select_best(&[undefined, r("d", -50.0, 90.0, 9)]), Some(1));
    }

    proptest! {
        #[test]
        fn selection_is_monotone(fits in prop::collection::vec(-100.0f64..100.0, 1..10)) {
            let entries: Vec<Ranking> = fits.iter().enumerate().map(|(i, f)| r(&i.to_string(), *f, 1.0, 1)).collect();
            let best = select_best(&entries).unwrap();
            prop_assert!(fits.iter().all(|f| *f <= fits[best]));
        }
    }
}
