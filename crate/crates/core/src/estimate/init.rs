//! Starting points: least-squares equation-error (ARX) fits with a common
//! denominator, projected onto stable polynomials.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::blockmodel::segment_index;

use super::structure::Order;
use crate::lti::stabilize_denominator;

/// Per-channel numerators and the shared monic denominator.
pub(crate) struct ArxFit {
    pub numerators: Vec<Vec<f64>>,
    pub denominator: Vec<f64>,
}

/// Solves the normal equations with a small ridge; zeros when singular.
fn solve_ridged(mut gram: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let np = rhs.len();
    for a in 0..np {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let trace: f64 = (0..np).map(|i| gram[(i, i)]).sum();
    let ridge = 1e-10 * trace / np as f64 + 1e-300;
    for i in 0..np {
        gram[(i, i)] += ridge;
    }
    Cholesky::new(gram)
        .map(|c| c.solve(rhs))
        .unwrap_or_else(|| DVector::zeros(np))
}

/// Accumulates the upper triangle of `row row^T` and `row y`.
fn accumulate(gram: &mut DMatrix<f64>, rhs: &mut DVector<f64>, row: &[f64], y: f64) {
    for a in 0..row.len() {
        if row[a] == 0.0 {
            continue;
        }
        rhs[a] += row[a] * y;
        for b in a..row.len() {
            gram[(a, b)] += row[a] * row[b];
        }
    }
}

/// Fits `y(t) + sum a_j y(t-j) = sum_k sum_i b_ki u_k(t-i)` over all
/// records, with zero history before each record starts.
pub(crate) fn arx(records: &[(Vec<&[f64]>, &[f64])], order: Order) -> ArxFit {
    let m = records.first().map_or(1, |r| r.0.len());
    let nb = order.zeros + 1;
    let np = order.poles + m * nb;
    let mut gram = DMatrix::<f64>::zeros(np, np);
    let mut rhs = DVector::<f64>::zeros(np);
    let mut row = vec![0.0; np];
    for (inputs, y) in records {
        for t in 0..y.len() {
            for j in 1..=order.poles {
                row[j - 1] = if t >= j { -y[t - j] } else { 0.0 };
            }
            for (k, u) in inputs.iter().enumerate() {
                for i in 0..nb {
                    row[order.poles + k * nb + i] = if t >= i { u[t - i] } else { 0.0 };
                }
            }
            accumulate(&mut gram, &mut rhs, &row, y[t]);
        }
    }
    let theta = solve_ridged(gram, &rhs);
    let mut denominator = vec![1.0];
    denominator.extend(theta.iter().take(order.poles));
    let denominator = stabilize_denominator(&denominator);
    let numerators = (0..m)
        .map(|k| {
            let start = order.poles + k * nb;
            theta.rows(start, nb).iter().copied().collect()
        })
        .collect();
    ArxFit {
        numerators,
        denominator,
    }
}

/// Hammerstein starting point: `g` values at fixed breakpoints, back
/// numerator and stable denominator.
pub(crate) struct HammersteinFit {
    pub values: Vec<f64>,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

/// Over-parameterized equation-error fit with `g` expanded in the hat
/// basis of `breakpoints`, split into `g` and numerator by a rank-one SVD.
/// `None` when the fit carries no signal.
pub(crate) fn hammerstein(records: &[(&[f64], &[f64])], order: Order, breakpoints: &[f64]) -> Option<HammersteinFit> {
    let nb = order.zeros + 1;
    let nk = breakpoints.len();
    let np = order.poles + nb * nk;
    let mut gram = DMatrix::<f64>::zeros(np, np);
    let mut rhs = DVector::<f64>::zeros(np);
    let mut row = vec![0.0; np];
    for (x, y) in records {
        let hats: Vec<(usize, f64)> = x
            .iter()
            .map(|&v| {
                let i = segment_index(breakpoints, v);
                (i, (v - breakpoints[i]) / (breakpoints[i + 1] - breakpoints[i]))
            })
            .collect();
        for t in 0..y.len() {
            row.iter_mut().for_each(|v| *v = 0.0);
            for j in 1..=order.poles.min(t) {
                row[j - 1] = -y[t - j];
            }
            for i in 0..nb.min(t + 1) {
                let (k, s) = hats[t - i];
                let base = order.poles + i * nk;
                row[base + k] = 1.0 - s;
                row[base + k + 1] = s;
            }
            accumulate(&mut gram, &mut rhs, &row, y[t]);
        }
    }
    let theta = solve_ridged(gram, &rhs);
    let coupled = DMatrix::from_fn(nb, nk, |i, k| theta[order.poles + i * nk + k]);
    let svd = coupled.svd(true, true);
    let (top, sigma) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    if !(sigma > 0.0) || !sigma.is_finite() {
        return None;
    }
    let u = svd.u.as_ref()?.column(top).clone_owned();
    let v = svd.v_t.as_ref()?.row(top).clone_owned();
    // sign chosen so g increases overall
    let sign = if v[nk - 1] >= v[0] { 1.0 } else { -1.0 };
    let mut denominator = vec![1.0];
    denominator.extend(theta.iter().take(order.poles));
    Some(HammersteinFit {
        values: v.iter().map(|c| sign * c).collect(),
        numerator: u.iter().map(|b| sign * sigma * b).collect(),
        denominator: stabilize_denominator(&denominator),
    })
}
