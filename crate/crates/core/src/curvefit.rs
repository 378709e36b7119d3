//! Scalar curve fits for design-space analysis: a porosity power law
//! `p = C (1 - phi/100)^n`, an exponential `a e^(b x)`, and R².

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CurveFitError {
    #[error("at least {needed} points are required, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point {index}: {reason}")]
    Domain { index: usize, reason: String },
    #[error("the x values do not span more than one distinct value")]
    Degenerate,
    #[error("y and yhat differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("R² is undefined for a constant measured signal")]
    ConstantSignal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub c: f64,
    pub n: f64,
    pub r_squared: f64,
}

impl PowerLawFit {
    pub fn eval(&self, porosity: f64) -> f64 {
        self.c * (1.0 - porosity / 100.0).powf(self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

impl ExponentialFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * x).exp()
    }
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64, CurveFitError> {
    if y.len() != yhat.len() {
        return Err(CurveFitError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.len() < 2 {
        return Err(CurveFitError::TooFewPoints { needed: 2, got: y.len() });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(CurveFitError::ConstantSignal);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of a fitted curve; a constant signal scores 1 when reproduced
/// exactly (up to rounding) and negative infinity otherwise.
fn fit_r_squared(y: &[f64], yhat: &[f64]) -> f64 {
    match r_squared(y, yhat) {
        Ok(r) => r,
        Err(_) => {
            let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            if y.iter().zip(yhat).all(|(a, b)| (a - b).abs() <= 1e-12 * scale) {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Ordinary least-squares line `v = intercept + slope u`.
fn line_fit(points: &[(f64, f64)]) -> Result<(f64, f64), CurveFitError> {
    let n = points.len() as f64;
    let mu = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    let suu: f64 = points.iter().map(|p| (p.0 - mu).powi(2)).sum();
    let suv: f64 = points.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    if !(suu > 0.0) {
        return Err(CurveFitError::Degenerate);
    }
    let slope = suv / suu;
    Ok((mv - slope * mu, slope))
}

fn need_points(points: &[(f64, f64)]) -> Result<(), CurveFitError> {
    if points.len() < 3 {
        return Err(CurveFitError::TooFewPoints { needed: 3, got: points.len() });
    }
    Ok(())
}

/// Fits `p = C (1 - phi/100)^n` to `(phi %, p)` pairs as a straight line in
/// log-log coordinates. Repeated porosities are averaged in the log domain
/// first. R² is reported on the original scale.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, CurveFitError> {
    need_points(points)?;
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (i, &(phi, p)) in points.iter().enumerate() {
        if !(phi.is_finite() && (0.0..100.0).contains(&phi)) {
            return Err(CurveFitError::Domain {
                index: i,
                reason: format!("porosity {phi} is outside [0, 100)"),
            });
        }
        if !(p.is_finite() && p > 0.0) {
            return Err(CurveFitError::Domain {
                index: i,
                reason: format!("property value {p} must be positive"),
            });
        }
        let e = groups.entry(phi.to_bits()).or_insert((phi, 0.0, 0));
        e.1 += p.ln();
        e.2 += 1;
    }
    let logs: Vec<(f64, f64)> = groups
        .values()
        .map(|&(phi, sum, k)| ((1.0 - phi / 100.0).ln(), sum / k as f64))
        .collect();
    let (intercept, n) = line_fit(&logs)?;
    let mut fit = PowerLawFit {
        c: intercept.exp(),
        n,
        r_squared: 0.0,
    };
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let yhat: Vec<f64> = points.iter().map(|p| fit.eval(p.0)).collect();
    fit.r_squared = fit_r_squared(&y, &yhat);
    Ok(fit)
}

/// Fits `y = a e^(b x)` by least squares on `ln|y|`; all `y` must share one
/// sign.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ExponentialFit, CurveFitError> {
    need_points(points)?;
    let sign = points[0].1.signum();
    for (i, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() || y == 0.0 || y.signum() != sign {
            return Err(CurveFitError::Domain {
                index: i,
                reason: "y values must be finite, nonzero and of one sign".into(),
            });
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, y.abs().ln())).collect();
    let (intercept, b) = line_fit(&logs)?;
    let mut fit = ExponentialFit {
        a: sign * intercept.exp(),
        b,
        r_squared: 0.0,
    };
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let yhat: Vec<f64> = points.iter().map(|p| fit.eval(p.0)).collect();
    fit.r_squared = fit_r_squared(&y, &yhat);
    Ok(fit)
}

/// Parses two-column `x,y` CSV text. Blank lines, `#` comments and a
/// non-numeric first line are skipped.
pub fn parse_points(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [x, y] => x.parse::<f64>().ok().zip(y.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            None if out.is_empty() && i == 0 => continue,
            None => return Err(format!("line {}: expected two numeric columns, got '{line}'", i + 1)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GRID: [f64; 4] = [68.0, 76.0, 82.0, 86.0];

    fn law(c: f64, n: f64, phi: f64) -> f64 {
        c * (1.0 - phi / 100.0).powf(n)
    }

    #[test]
    fn power_law_recovery_on_porosity_grid() {
        let pts: Vec<_> = GRID.iter().map(|&p| (p, law(2.0, 1.5, p))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.c - 2.0).abs() < 1e-6);
        assert!((fit.n - 1.5).abs() < 1e-6);
        assert!(fit.r_squared >= 1.0 - 1e-9);
        for (phi, p) in &pts {
            assert!((fit.eval(*phi) - p).abs() <= 1e-6 * p);
        }
    }

    #[test]
    fn flat_and_duplicated_power_laws() {
        let flat = fit_power_law(&[(10.0, 4.0), (50.0, 4.0), (80.0, 4.0)]).unwrap();
        assert!(flat.n.abs() < 1e-12);
        assert!((flat.c - 4.0).abs() < 1e-12);
        assert_eq!(flat.r_squared, 1.0);

        let two = fit_power_law(&[(20.0, law(3.0, 2.0, 20.0)), (60.0, law(3.0, 2.0, 60.0)), (60.0, law(3.0, 2.0, 60.0))]).unwrap();
        assert!((two.n - 2.0).abs() < 1e-9 && (two.c - 3.0).abs() < 1e-9);
        assert!((two.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_domain_errors() {
        assert!(matches!(fit_power_law(&[(10.0, 1.0), (20.0, 0.0), (30.0, 1.0)]), Err(CurveFitError::Domain { index: 1, .. })));
        assert!(matches!(fit_power_law(&[(10.0, 1.0), (100.0, 1.0), (30.0, 1.0)]), Err(CurveFitError::Domain { index: 1, .. })));
        assert!(matches!(fit_power_law(&[(10.0, 1.0), (30.0, 1.0)]), Err(CurveFitError::TooFewPoints { .. })));
        assert_eq!(fit_power_law(&[(10.0, 1.0), (10.0, 2.0), (10.0, 3.0)]), Err(CurveFitError::Degenerate));
    }

    #[test]
    fn exponent_sign_follows_trend() {
        // increasing in (1 - phi/100) means decreasing in phi
        let pts = [(60.0, 5.0), (70.0, 3.0), (80.0, 2.0), (90.0, 0.5)];
        assert!(fit_power_law(&pts).unwrap().n > 0.0);
    }

    #[test]
    fn exponential_examples() {
        let pts: Vec<_> = [0.0f64, 0.5, 1.0].iter().map(|&x| (x, (2.0 * x).exp())).collect();
        let fit = fit_exponential(&pts).unwrap();
        assert!((fit.a - 1.0).abs() < 1e-9 && (fit.b - 2.0).abs() < 1e-9);

        let flat = fit_exponential(&[(0.0, 3.0), (1.0, 3.0), (2.0, 3.0)]).unwrap();
        assert!((flat.a - 3.0).abs() < 1e-12 && flat.b.abs() < 1e-12);

        let pts: Vec<_> = [0.0f64, 1.0, 2.0].iter().map(|&x| (x, -0.5 * (-x).exp())).collect();
        let fit = fit_exponential(&pts).unwrap();
        assert!((fit.a + 0.5).abs() < 1e-9 && (fit.b + 1.0).abs() < 1e-9);

        assert!(fit_exponential(&[(0.0, 1.0), (1.0, -1.0), (2.0, 1.0)]).is_err());
        assert!(fit_exponential(&[(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r_squared(&[0.0, 2.0], &[0.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(r_squared(&[1.0, 1.0], &[1.0, 1.0]), Err(CurveFitError::ConstantSignal));
        assert!(r_squared(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn parses_points_with_header() {
        let pts = parse_points("phi,p\n68,1.5\n# note\n76, 1.0\n").unwrap();
        assert_eq!(pts, vec![(68.0, 1.5), (76.0, 1.0)]);
        assert!(parse_points("1,2\n3\n").is_err());
    }

    proptest! {
        #[test]
        fn r_squared_is_self_consistent(c in 0.1f64..10.0, n in -3.0f64..3.0, noise in prop::collection::vec(-0.05f64..0.05, 4)) {
            let pts: Vec<_> = GRID.iter().zip(&noise).map(|(&p, e)| (p, law(c, n, p) * (1.0 + e))).collect();
            let fit = fit_power_law(&pts).unwrap();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let yhat: Vec<f64> = pts.iter().map(|p| fit.c * (1.0 - p.0 / 100.0).powf(fit.n)).collect();
            if let Ok(r) = r_squared(&y, &yhat) {
                prop_assert!((r - fit.r_squared).abs() < 1e-12);
            }
            prop_assert!(fit.r_squared <= 1.0);
        }
    }
}
