//! Discrete-time rational transfer functions in the backward shift operator.
//!
//! A [`TransferFunction`] represents
//!
//! ```text
//!          b0 + b1 q^-1 + ... + b_nb q^-nb
//! H(q) = ----------------------------------- q^-d
//!          1 + a1 q^-1 + ... + a_na q^-na
//! ```
//!
//! with `q^-n x(t) = x(t - n)` and zero initial conditions.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};
use thiserror::Error;

/// Roots within this distance of the unit circle count as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("numerator must have at least one coefficient")]
    EmptyNumerator,
    #[error("denominator must be monic (leading coefficient exactly 1), got {0}")]
    NotMonic(f64),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("DC gain undefined: denominator coefficients sum to zero")]
    UndefinedGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    input_delay: usize,
}

impl TransferFunction {
    /// `denominator` includes the leading 1.
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self, LtiError> {
        if numerator.is_empty() {
            return Err(LtiError::EmptyNumerator);
        }
        match denominator.first() {
            Some(&lead) if lead == 1.0 => {}
            Some(&lead) => return Err(LtiError::NotMonic(lead)),
            None => return Err(LtiError::NotMonic(f64::NAN)),
        }
        if numerator.iter().any(|c| !c.is_finite()) {
            return Err(LtiError::NonFinite("numerator"));
        }
        if denominator.iter().any(|c| !c.is_finite()) {
            return Err(LtiError::NonFinite("denominator"));
        }
        Ok(Self {
            numerator,
            denominator,
            input_delay: 0,
        })
    }

    pub fn identity() -> Self {
        Self {
            numerator: vec![1.0],
            denominator: vec![1.0],
            input_delay: 0,
        }
    }

    pub fn with_delay(mut self, delay: usize) -> Self {
        self.input_delay = delay;
        self
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn input_delay(&self) -> usize {
        self.input_delay
    }

    pub fn num_poles(&self) -> usize {
        self.denominator.len() - 1
    }

    pub fn num_zeros(&self) -> usize {
        self.numerator.len() - 1
    }

    /// Free coefficients: the whole numerator plus the non-leading denominator.
    pub fn parameter_count(&self) -> usize {
        self.numerator.len() + self.denominator.len() - 1
    }

    pub fn is_identity(&self) -> bool {
        self.numerator == [1.0] && self.denominator == [1.0] && self.input_delay == 0
    }

    /// Free-run response from rest.
    pub fn simulate(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        filter_into(
            &self.numerator,
            &self.denominator,
            self.input_delay,
            input,
            &mut out,
        );
        out
    }

    /// Roots of `z^na + a1 z^(na-1) + ... + a_na`, or `None` if the
    /// eigenvalue iteration fails to converge.
    pub fn poles(&self) -> Option<Vec<Complex<f64>>> {
        polynomial_roots(&self.denominator)
    }

    pub fn is_stable(&self) -> bool {
        is_stable_denominator(&self.denominator)
    }

    pub fn dc_gain(&self) -> Result<f64, LtiError> {
        let den: f64 = self.denominator.iter().sum();
        let scale: f64 = self.denominator.iter().map(|c| c.abs()).sum();
        if den.abs() <= 1e-14 * scale {
            return Err(LtiError::UndefinedGain);
        }
        Ok(self.numerator.iter().sum::<f64>() / den)
    }

    /// Cascade `self` followed by `other` (polynomial products).
    pub fn series(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction {
            numerator: poly_mul(&self.numerator, &other.numerator),
            denominator: poly_mul(&self.denominator, &other.denominator),
            input_delay: self.input_delay + other.input_delay,
        }
    }

    pub fn scaled(&self, gain: f64) -> TransferFunction {
        TransferFunction {
            numerator: self.numerator.iter().map(|b| b * gain).collect(),
            denominator: self.denominator.clone(),
            input_delay: self.input_delay,
        }
    }

    /// Same numerator, denominator roots pulled inside the unit circle.
    pub fn stabilized(&self) -> TransferFunction {
        TransferFunction {
            numerator: self.numerator.clone(),
            denominator: stabilize_denominator(&self.denominator),
            input_delay: self.input_delay,
        }
    }
}

/// Direct-form filter with zero initial conditions; `den[0]` must be 1.
pub(crate) fn filter_into(num: &[f64], den: &[f64], delay: usize, input: &[f64], out: &mut [f64]) {
    debug_assert_eq!(input.len(), out.len());
    for t in 0..input.len() {
        let mut acc = 0.0;
        for (i, b) in num.iter().enumerate() {
            let lag = i + delay;
            if lag > t {
                break;
            }
            acc += b * input[t - lag];
        }
        for (j, a) in den.iter().enumerate().skip(1) {
            if j > t {
                break;
            }
            acc -= a * out[t - j];
        }
        out[t] = acc;
    }
}

/// `input / A(q)`, the all-pole part used by sensitivity recursions.
pub(crate) fn all_pole_into(den: &[f64], input: &[f64], out: &mut [f64]) {
    for t in 0..input.len() {
        let mut acc = input[t];
        for (j, a) in den.iter().enumerate().skip(1) {
            if j > t {
                break;
            }
            acc -= a * out[t - j];
        }
        out[t] = acc;
    }
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of the monic polynomial whose coefficients (highest power first)
/// are `coeffs`, via companion-matrix eigenvalues. `None` when the QR
/// iteration does not converge, which happens on some ill-conditioned
/// companions.
pub(crate) fn polynomial_roots(coeffs: &[f64]) -> Option<Vec<Complex<f64>>> {
    let n = coeffs.len().saturating_sub(1);
    match n {
        0 => Some(Vec::new()),
        1 => Some(vec![Complex::new(-coeffs[1], 0.0)]),
        _ => {
            let mut companion = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                companion[(0, j)] = -coeffs[j + 1];
            }
            for i in 1..n {
                companion[(i, i - 1)] = 1.0;
            }
            let schur = Schur::try_new(companion, f64::EPSILON, 200 * n)?;
            Some(schur.complex_eigenvalues().iter().copied().collect())
        }
    }
}

/// Schur-Cohn step-down test: every root of the monic `den` lies strictly
/// inside the circle of radius `radius`.
fn roots_inside(den: &[f64], radius: f64) -> bool {
    // roots of a_k r^-k are the roots of a scaled by 1/r
    let mut a: Vec<f64> = den.iter().scan(1.0, |s, &c| {
        let v = c * *s;
        *s /= radius;
        Some(v)
    }).collect();
    while a.len() > 1 {
        let n = a.len() - 1;
        let k = a[n] / a[0];
        if !(k.abs() < 1.0) {
            return false;
        }
        let d = 1.0 - k * k;
        a = (0..n).map(|i| (a[i] - k * a[n - i]) / d).collect();
    }
    true
}

pub(crate) fn is_stable_denominator(den: &[f64]) -> bool {
    if den.iter().any(|c| !c.is_finite()) {
        return false;
    }
    let limit = 1.0 - STABILITY_MARGIN;
    match den.len() {
        0 | 1 => true,
        2 => den[1].abs() < limit,
        _ => match polynomial_roots(den) {
            Some(roots) => roots.iter().all(|r| r.norm().is_finite() && r.norm() < limit),
            None => roots_inside(den, limit),
        },
    }
}

/// Largest pole radius admitted by [`stabilize_denominator`].
const MAX_PROJECTED_RADIUS: f64 = 0.995;

/// Reflects roots outside the unit circle and clamps the rest to
/// [`MAX_PROJECTED_RADIUS`]; stable inputs come back unchanged.
pub(crate) fn stabilize_denominator(den: &[f64]) -> Vec<f64> {
    if is_stable_denominator(den) {
        return den.to_vec();
    }
    let Some(roots) = polynomial_roots(den) else {
        return contract(den);
    };
    let roots: Vec<Complex<f64>> = roots
        .into_iter()
        .map(|r| {
            let mut radius = r.norm();
            if !radius.is_finite() {
                return Complex::new(0.0, 0.0);
            }
            let mut root = r;
            if radius > 1.0 {
                root = Complex::new(1.0, 0.0) / root.conj();
                radius = root.norm();
            }
            if radius > MAX_PROJECTED_RADIUS {
                root *= MAX_PROJECTED_RADIUS / radius;
            }
            root
        })
        .collect();
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for root in roots {
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += *c;
            next[i + 1] -= *c * root;
        }
        poly = next;
    }
    poly.iter().map(|c| c.re).collect()
}

/// Shrinks all roots by a common factor until they fit inside
/// [`MAX_PROJECTED_RADIUS`]; used when the roots cannot be computed.
fn contract(den: &[f64]) -> Vec<f64> {
    let mut rho = MAX_PROJECTED_RADIUS;
    loop {
        let scaled: Vec<f64> = den.iter().enumerate().map(|(k, c)| c * rho.powi(k as i32)).collect();
        if scaled.iter().all(|c| c.is_finite()) && roots_inside(&scaled, MAX_PROJECTED_RADIUS) {
            return scaled;
        }
        if rho < 1e-6 {
            let mut flat = vec![0.0; den.len()];
            flat[0] = 1.0;
            return flat;
        }
        rho *= 0.5;
    }
}
