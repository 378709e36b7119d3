//! Deformation from tracked marker coordinates and printing design helpers.
//!
//! Coordinates are in millimetres in image orientation: `y` grows
//! downwards, along gravity. Curvature is reported as an unsigned
//! magnitude.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::datasets::{Channel, Role, TimeSeriesDataset};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("circle fit needs at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("{0}")]
    Domain(String),
    #[error("nozzle height {0} mm is outside the calibrated range [2.5, 10] mm")]
    OutOfCalibration(f64),
    #[error("computed porosity {0:.3}% is negative: mass exceeds volume times bulk density")]
    NegativePorosity(f64),
    #[error("marker file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Marker positions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFrame {
    pub timestamp: f64,
    pub points: Vec<(f64, f64)>,
}

impl MarkerFrame {
    pub fn new(timestamp: f64, points: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::Domain("a frame needs at least one point".into()));
        }
        if !timestamp.is_finite() || points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(GeometryError::Domain("frame values must be finite".into()));
        }
        Ok(Self { timestamp, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    /// 1/mm; zero for collinear points.
    pub curvature: f64,
    /// mm; infinite for collinear points.
    pub radius: f64,
    pub center: Option<(f64, f64)>,
}

/// Relative eigenvalue threshold below which points count as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-12;

/// Algebraic (Kåsa) least-squares circle fit.
///
/// Points are centred on their centroid and scaled to unit RMS radius
/// before solving `u² + v² + D u + E v + F = 0`.
pub fn fit_circle_curvature(frame: &MarkerFrame) -> Result<CircleFit, GeometryError> {
    let pts = &frame.points;
    if pts.len() < 3 {
        return Err(GeometryError::InsufficientPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let spread = (pts.iter().map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sum::<f64>() / n).sqrt();
    let straight = CircleFit {
        curvature: 0.0,
        radius: f64::INFINITY,
        center: None,
    };
    if spread == 0.0 {
        return Ok(straight);
    }
    let uv: Vec<(f64, f64)> = pts.iter().map(|p| ((p.0 - cx) / spread, (p.1 - cy) / spread)).collect();

    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for (u, v) in &uv {
        suu += u * u;
        suv += u * v;
        svv += v * v;
    }
    let eig = SymmetricEigen::new(Matrix2::new(suu, suv, suv, svv)).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo < COLLINEAR_TOLERANCE * hi {
        return Ok(straight);
    }

    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for (u, v) in &uv {
        let row = Vector3::new(*u, *v, 1.0);
        a += row * row.transpose();
        b -= row * (u * u + v * v);
    }
    let Some(sol) = a.lu().solve(&b) else {
        return Ok(straight);
    };
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let r2 = (d * d + e * e) / 4.0 - f;
    if !(r2 > 0.0) {
        return Ok(straight);
    }
    let radius = r2.sqrt() * spread;
    Ok(CircleFit {
        curvature: 1.0 / radius,
        radius,
        center: Some((cx - d / 2.0 * spread, cy - e / 2.0 * spread)),
    })
}

/// Compression strain in percent from a marker's position along the
/// gravity axis: positive when the marker rises (`y` decreases).
pub fn contraction_strain(rest: (f64, f64), current: (f64, f64), rest_length: f64) -> Result<f64, GeometryError> {
    if !(rest_length > 0.0) {
        return Err(GeometryError::Domain(format!("rest length must be positive, got {rest_length}")));
    }
    Ok(100.0 * (rest.1 - current.1) / rest_length)
}

/// Printed sample for porosity estimation: mass in g, volume in cm³, bulk
/// density of the solid material in g/cm³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSample {
    pub mass: f64,
    pub volume: f64,
    pub bulk_density: f64,
}

impl DesignSample {
    pub fn new(mass: f64, volume: f64, bulk_density: f64) -> Result<Self, GeometryError> {
        for (name, v) in [("mass", mass), ("volume", volume), ("bulk density", bulk_density)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            mass,
            volume,
            bulk_density,
        })
    }
}

/// Porosity in percent, rounded to the nearest whole number.
pub fn porosity_from_mass(sample: &DesignSample) -> Result<f64, GeometryError> {
    let phi = 100.0 * (1.0 - sample.mass / (sample.volume * sample.bulk_density));
    let rounded = phi.round();
    if rounded < 0.0 {
        return Err(GeometryError::NegativePorosity(phi));
    }
    Ok(rounded + 0.0)
}

/// Coiling radius in mm for nozzle height `h` in mm.
pub fn coiling_radius(h: f64) -> Result<f64, GeometryError> {
    if !(2.5..=10.0).contains(&h) {
        return Err(GeometryError::OutOfCalibration(h));
    }
    Ok(0.40 * h - 0.3)
}

/// Parses marker CSV: one frame per line as `t,x1,y1[,x2,y2,...]`. A
/// non-numeric first line is taken as a header; `#` lines are comments.
pub fn parse_markers(text: &str) -> Result<Vec<MarkerFrame>, GeometryError> {
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) if frames.is_empty() && i == 0 => continue,
            Err(e) => {
                return Err(GeometryError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        if values.len() < 3 || values.len() % 2 == 0 {
            return Err(GeometryError::Parse {
                line: i + 1,
                message: format!("expected t followed by x,y pairs, got {} values", values.len()),
            });
        }
        let points = values[1..].chunks(2).map(|c| (c[0], c[1])).collect();
        frames.push(MarkerFrame::new(values[0], points).map_err(|e| GeometryError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeformationMode {
    Curvature,
    /// Tracks the first marker relative to its position in the first frame.
    Contraction { rest_length: f64 },
}

/// Converts frames into a one-output dataset (no inputs). The sample period
/// is the mean timestamp step.
pub fn deformation_dataset(name: &str, frames: &[MarkerFrame], mode: DeformationMode) -> Result<TimeSeriesDataset, GeometryError> {
    if frames.len() < 2 {
        return Err(GeometryError::Domain("need at least two frames".into()));
    }
    let dt = (frames[frames.len() - 1].timestamp - frames[0].timestamp) / (frames.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(GeometryError::Domain("timestamps must increase".into()));
    }
    let (channel, unit, values) = match mode {
        DeformationMode::Curvature => (
            "curvature",
            "1/mm",
            frames
                .iter()
                .map(|f| fit_circle_curvature(f).map(|c| c.curvature))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        DeformationMode::Contraction { rest_length } => {
            let rest = frames[0].points[0];
            (
                "strain",
                "%",
                frames
                    .iter()
                    .map(|f| contraction_strain(rest, f.points[0], rest_length))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
    };
    TimeSeriesDataset::new(name, dt, Role::Validation, vec![], vec![Channel::new(channel, unit, values)])
        .map_err(|e| GeometryError::Domain(e.to_string()))
}
