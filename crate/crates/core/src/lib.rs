//! Block-oriented nonlinear system identification for piezoresistive
//! deformation sensing.
//!
//! The crate estimates Linear, Hammerstein, Wiener and Wiener-Hammerstein
//! models that map a sensor's relative resistance change to a deformation
//! (curvature, strain or plate angles), with tools around it:
//!
//! - [`datasets`]: time series, resistance-change preprocessing, CSV files
//! - [`lti`]: discrete transfer functions
//! - [`blockmodel`]: block cascades, piecewise-linear maps, model files
//! - [`estimate`]: order search and simulation-error fitting
//! - [`metrics`]: NRMSE fit and scaled RMS error
//! - [`curvefit`]: power-law and exponential design fits
//! - [`geometry`]: curvature and strain from marker coordinates
//! - [`plant`]: synthetic actuator plants with known structure
//! - [`cli`]: the `blockid` command line

pub mod blockmodel;
pub mod cli;
pub mod curvefit;
pub mod datasets;
pub mod estimate;
pub mod geometry;
pub mod lti;
pub mod metrics;
pub mod plant;

pub use blockmodel::{BlockModel, ModelBundle, ModelKind, PiecewiseLinearMap};
pub use datasets::{Role, TimeSeriesDataset};
pub use estimate::{estimate, EstimationProblem, SearchConfig};
pub use lti::TransferFunction;
