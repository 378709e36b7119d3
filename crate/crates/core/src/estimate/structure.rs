//! Flat parameter vectors for block-oriented models, free-run simulation
//! and forward sensitivities of the simulated output.
//!
//! Layout: per-channel front blocks `[b_0..b_nz, a_1..a_na]`, then the
//! breakpoints and values of `g`, then the back block `[b.., a..]`.

use std::fmt;

use crate::blockmodel::{segment_index, BlockModel, ModelError, ModelKind, PiecewiseLinearMap};
use crate::lti::{all_pole_into, filter_into, is_stable_denominator, stabilize_denominator, TransferFunction};

/// Pole and zero counts of one transfer function; the numerator has
/// `zeros + 1` coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Order {
    pub poles: usize,
    pub zeros: usize,
}

impl Order {
    pub fn new(poles: usize, zeros: usize) -> Self {
        Self { poles, zeros }
    }

    pub fn parameter_count(self) -> usize {
        self.poles + self.zeros + 1
    }

    pub fn of(tf: &TransferFunction) -> Self {
        Self::new(tf.num_poles(), tf.num_zeros())
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}p{}z", self.poles, self.zeros)
    }
}

/// Minimum breakpoint spacing relative to the breakpoint span.
const MIN_BREAKPOINT_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStructure {
    pub inputs: usize,
    pub front: Option<Order>,
    pub breakpoints: Option<usize>,
    pub back: Option<Order>,
}

impl ModelStructure {
    pub fn linear(inputs: usize, order: Order) -> Self {
        Self {
            inputs,
            front: Some(order),
            breakpoints: None,
            back: None,
        }
    }

    pub fn wiener(inputs: usize, order: Order, breakpoints: usize) -> Self {
        Self {
            inputs,
            front: Some(order),
            breakpoints: Some(breakpoints),
            back: None,
        }
    }

    pub fn hammerstein(inputs: usize, breakpoints: usize, order: Order) -> Self {
        Self {
            inputs,
            front: None,
            breakpoints: Some(breakpoints),
            back: Some(order),
        }
    }

    pub fn wiener_hammerstein(inputs: usize, front: Order, breakpoints: usize, back: Order) -> Self {
        Self {
            inputs,
            front: Some(front),
            breakpoints: Some(breakpoints),
            back: Some(back),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match (self.front.is_some(), self.breakpoints.is_some(), self.back.is_some()) {
            (true, false, _) => ModelKind::Linear,
            (false, _, _) => ModelKind::Hammerstein,
            (true, true, false) => ModelKind::Wiener,
            (true, true, true) => ModelKind::WienerHammerstein,
        }
    }

    fn front_len(&self) -> usize {
        self.front.map_or(0, |o| o.parameter_count() * self.inputs)
    }

    fn g_offset(&self) -> usize {
        self.front_len()
    }

    fn back_offset(&self) -> usize {
        self.front_len() + 2 * self.breakpoints.unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.back_offset() + self.back.map_or(0, Order::parameter_count)
    }

    /// Extracts the structure and parameter vector of an existing model.
    pub fn from_model(model: &BlockModel) -> (Self, Vec<f64>) {
        let mut params = Vec::new();
        let front = model.front().first().map(Order::of);
        for tf in model.front() {
            params.extend_from_slice(tf.numerator());
            params.extend_from_slice(&tf.denominator()[1..]);
        }
        let breakpoints = model.nonlinearity().map(|g| {
            params.extend_from_slice(g.breakpoints());
            params.extend_from_slice(g.values());
            g.len()
        });
        let back = model.back().map(|tf| {
            params.extend_from_slice(tf.numerator());
            params.extend_from_slice(&tf.denominator()[1..]);
            Order::of(tf)
        });
        (
            Self {
                inputs: model.input_count(),
                front,
                breakpoints,
                back,
            },
            params,
        )
    }

    fn tf_parts(p: &[f64], order: Order) -> (&[f64], Vec<f64>) {
        let nb = order.zeros + 1;
        let mut den = Vec::with_capacity(order.poles + 1);
        den.push(1.0);
        den.extend_from_slice(&p[nb..nb + order.poles]);
        (&p[..nb], den)
    }

    fn front_parts<'a>(&self, p: &'a [f64]) -> Vec<(&'a [f64], Vec<f64>)> {
        match self.front {
            Some(order) => (0..self.inputs)
                .map(|k| Self::tf_parts(&p[k * order.parameter_count()..], order))
                .collect(),
            None => Vec::new(),
        }
    }

    fn g_parts<'a>(&self, p: &'a [f64]) -> Option<(&'a [f64], &'a [f64])> {
        self.breakpoints.map(|b| {
            let off = self.g_offset();
            (&p[off..off + b], &p[off + b..off + 2 * b])
        })
    }

    fn back_parts<'a>(&self, p: &'a [f64]) -> Option<(&'a [f64], Vec<f64>)> {
        self.back.map(|o| Self::tf_parts(&p[self.back_offset()..], o))
    }

    /// Stable denominators, ordered breakpoints, finite entries.
    pub fn is_feasible(&self, p: &[f64]) -> bool {
        if p.len() != self.parameter_count() || p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if self.front_parts(p).iter().any(|(_, den)| !is_stable_denominator(den)) {
            return false;
        }
        if let Some((_, den)) = self.back_parts(p) {
            if !is_stable_denominator(&den) {
                return false;
            }
        }
        if let Some((bp, _)) = self.g_parts(p) {
            let span = bp[bp.len() - 1] - bp[0];
            if !(span > 0.0) || bp.windows(2).any(|w| w[1] - w[0] <= MIN_BREAKPOINT_GAP * span) {
                return false;
            }
        }
        true
    }

    /// Sorts breakpoints, spreads collapsed ones and stabilizes all
    /// denominators in place.
    pub fn repair(&self, p: &mut [f64]) {
        if let Some(order) = self.front {
            let stride = order.parameter_count();
            for k in 0..self.inputs {
                let start = k * stride + order.zeros + 1;
                repair_denominator(&mut p[start..start + order.poles]);
            }
        }
        if let Some(b) = self.breakpoints {
            let off = self.g_offset();
            let mut pairs: Vec<(f64, f64)> = (0..b).map(|i| (p[off + i], p[off + b + i])).collect();
            pairs.sort_by(|a, c| a.0.total_cmp(&c.0));
            let span = (pairs[b - 1].0 - pairs[0].0).max(1e-9);
            let gap = 10.0 * MIN_BREAKPOINT_GAP * span;
            for i in 1..b {
                if pairs[i].0 - pairs[i - 1].0 <= gap {
                    pairs[i].0 = pairs[i - 1].0 + gap;
                }
            }
            for (i, (x, y)) in pairs.into_iter().enumerate() {
                p[off + i] = x;
                p[off + b + i] = y;
            }
        }
        if let Some(order) = self.back {
            let start = self.back_offset() + order.zeros + 1;
            repair_denominator(&mut p[start..start + order.poles]);
        }
    }

    /// Builds the model; fails on infeasible parameters.
    pub fn to_model(&self, p: &[f64]) -> Result<BlockModel, ModelError> {
        let mk = |(num, den): (&[f64], Vec<f64>)| TransferFunction::new(num.to_vec(), den);
        let front = self
            .front_parts(p)
            .into_iter()
            .map(mk)
            .collect::<Result<Vec<_>, _>>()?;
        let g = match self.g_parts(p) {
            Some((bp, val)) => Some(PiecewiseLinearMap::new(bp.to_vec(), val.to_vec())?),
            None => None,
        };
        let back = self.back_parts(p).map(mk).transpose()?;
        BlockModel::new(self.kind(), self.inputs, front, g, back)
    }

    /// Free-run output; `None` when the parameters are infeasible or the
    /// simulation diverges.
    pub fn simulate(&self, p: &[f64], inputs: &[&[f64]]) -> Option<Vec<f64>> {
        self.run(p, inputs, false).map(|(y, _)| y)
    }

    /// Output and its derivative with respect to every parameter, one
    /// column per parameter in layout order.
    pub fn simulate_with_sensitivities(&self, p: &[f64], inputs: &[&[f64]]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        self.run(p, inputs, true)
    }

    fn run(&self, p: &[f64], inputs: &[&[f64]], jac: bool) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        if inputs.len() != self.inputs || !self.is_feasible(p) {
            return None;
        }
        let n = inputs.first().map_or(0, |u| u.len());
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut x = vec![0.0; n];
        let mut buf = vec![0.0; n];

        // front blocks
        if self.front.is_some() {
            for ((num, den), u) in self.front_parts(p).into_iter().zip(inputs) {
                filter_into(num, &den, 0, u, &mut buf);
                if jac {
                    let mut w = vec![0.0; n];
                    all_pole_into(&den, u, &mut w);
                    for i in 0..num.len() {
                        cols.push(shifted(&w, i, 1.0));
                    }
                    let mut v = vec![0.0; n];
                    all_pole_into(&den, &buf, &mut v);
                    for j in 1..den.len() {
                        cols.push(shifted(&v, j, -1.0));
                    }
                }
                for (acc, v) in x.iter_mut().zip(&buf) {
                    *acc += v;
                }
            }
        } else {
            for u in inputs {
                for (acc, v) in x.iter_mut().zip(u.iter()) {
                    *acc += v;
                }
            }
        }

        // static map
        let v = match self.g_parts(p) {
            Some((bp, val)) => {
                let b = bp.len();
                let mut g_cols = if jac { vec![vec![0.0; n]; 2 * b] } else { Vec::new() };
                let mut out = vec![0.0; n];
                for t in 0..n {
                    let i = segment_index(bp, x[t]);
                    let dx = bp[i + 1] - bp[i];
                    let s = (x[t] - bp[i]) / dx;
                    let slope = (val[i + 1] - val[i]) / dx;
                    out[t] = val[i] + (val[i + 1] - val[i]) * s;
                    if jac {
                        for c in cols.iter_mut() {
                            c[t] *= slope;
                        }
                        g_cols[i][t] = slope * (s - 1.0);
                        g_cols[i + 1][t] = -slope * s;
                        g_cols[b + i][t] = 1.0 - s;
                        g_cols[b + i + 1][t] = s;
                    }
                }
                cols.extend(g_cols);
                out
            }
            None => x,
        };

        // back block
        let y = match self.back_parts(p) {
            Some((num, den)) => {
                let mut y = vec![0.0; n];
                filter_into(num, &den, 0, &v, &mut y);
                if jac {
                    for c in cols.iter_mut() {
                        filter_into(num, &den, 0, c, &mut buf);
                        std::mem::swap(c, &mut buf);
                    }
                    let mut w = vec![0.0; n];
                    all_pole_into(&den, &v, &mut w);
                    for i in 0..num.len() {
                        cols.push(shifted(&w, i, 1.0));
                    }
                    let mut z = vec![0.0; n];
                    all_pole_into(&den, &y, &mut z);
                    for j in 1..den.len() {
                        cols.push(shifted(&z, j, -1.0));
                    }
                }
                y
            }
            None => v,
        };
        if y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((y, cols))
    }
}

fn shifted(src: &[f64], lag: usize, sign: f64) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for t in lag..src.len() {
        out[t] = sign * src[t - lag];
    }
    out
}

fn repair_denominator(a: &mut [f64]) {
    let mut den = Vec::with_capacity(a.len() + 1);
    den.push(1.0);
    den.extend_from_slice(a);
    let fixed = stabilize_denominator(&den);
    a.copy_from_slice(&fixed[1..]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_round_trips_through_models() {
        let model = BlockModel::wiener_hammerstein(
            vec![
                TransferFunction::new(vec![0.2, 0.1], vec![1.0, -0.5]).unwrap(),
                TransferFunction::new(vec![0.3, -0.1], vec![1.0, 0.2]).unwrap(),
            ],
            PiecewiseLinearMap::new(vec![-1.0, 0.0, 2.0], vec![0.5, 0.0, 1.0]).unwrap(),
            TransferFunction::new(vec![0.4], vec![1.0, -0.6, 0.05]).unwrap(),
        )
        .unwrap();
        let (structure, params) = ModelStructure::from_model(&model);
        assert_eq!(structure.kind(), ModelKind::WienerHammerstein);
        assert_eq!(params.len(), structure.parameter_count());
        assert_eq!(params.len(), model.parameter_count());
        assert_eq!(structure.to_model(&params).unwrap(), model);
        let u1: Vec<f64> = (0..40).map(|t| (0.2 * t as f64).sin()).collect();
        let u2: Vec<f64> = (0..40).map(|t| (0.05 * t as f64).cos()).collect();
        assert_eq!(
            structure.simulate(&params, &[&u1, &u2]).unwrap(),
            model.simulate(&[&u1, &u2]).unwrap()
        );
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let s = ModelStructure::wiener(1, Order::new(1, 0), 3);
        // b0, a1, bp x3, val x3
        let ok = [1.0, -0.5, -1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert!(s.is_feasible(&ok));
        let mut unstable = ok;
        unstable[1] = -1.5;
        assert!(!s.is_feasible(&unstable));
        let mut unordered = ok;
        unordered[3] = 2.0;
        assert!(!s.is_feasible(&unordered));
        assert!(s.simulate(&unordered, &[&[1.0, 2.0]]).is_none());
        let mut fixed = unordered;
        s.repair(&mut fixed);
        assert!(s.is_feasible(&fixed));
        s.repair(&mut unstable);
        assert!(s.is_feasible(&unstable));
    }
}
