//! Adaptive one-dimensional quadrature on top of the double-exponential rule
//! from the `quadrature` crate.
//!
//! A panel's error is the larger of the rule's own estimate and the
//! disagreement between the panel and its two halves.

use crate::error::{Error, Result};
use quadrature::double_exponential;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of accepted per-panel error estimates.
    pub error_estimate: f64,
    pub evaluations: u64,
    pub panels: usize,
}

const MAX_PANELS: usize = 20_000;

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64, u64) {
    let out = double_exponential::integrate(f, a, b, tol);
    (
        out.integral,
        out.error_estimate,
        out.num_function_evaluations as u64,
    )
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    left: f64,
    right: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn evaluate<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    whole: f64,
    tol: f64,
    evals: &mut u64,
) -> Panel {
    let mid = 0.5 * (lo + hi);
    let (left, e_left, n1) = panel(f, lo, mid, 0.5 * tol);
    let (right, e_right, n2) = panel(f, mid, hi, 0.5 * tol);
    *evals += n1 + n2;
    let error = (whole - left - right).abs().max(e_left + e_right);
    Panel {
        lo,
        hi,
        left,
        right,
        error,
    }
}

/// ∫_a^b f with absolute tolerance `tol`. Globally adaptive: the panel with
/// the largest error estimate is bisected until the total meets `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "bad quadrature request [{a}, {b}] tol {tol}"
        )));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            panels: 0,
        });
    }
    if b < a {
        let r = integrate(f, b, a, tol)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    let mut evaluations = 0u64;
    let (whole, _, n0) = panel(&f, a, b, 0.1 * tol);
    evaluations += n0;
    let mut heap = BinaryHeap::new();
    let first = evaluate(&f, a, b, whole, 0.1 * tol, &mut evaluations);
    let mut total_error = first.error;
    let mut value = first.left + first.right;
    let mut magnitude = first.left.abs() + first.right.abs();
    heap.push(first);
    loop {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a:.6e}, {b:.6e}] after {evaluations} evaluations"
            )));
        }
        let floor = 16.0 * f64::EPSILON * magnitude;
        if total_error <= tol.max(floor) {
            return Ok(QuadResult {
                value,
                error_estimate: total_error,
                evaluations,
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if heap.len() + 2 > MAX_PANELS || mid <= worst.lo || mid >= worst.hi {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a:.6e}, {b:.6e}]: error {total_error:.3e} > tol {tol:.3e}, worst panel [{:.6e}, {:.6e}] with error {:.3e}, {} panels, {evaluations} evaluations",
                worst.lo,
                worst.hi,
                worst.error,
                heap.len() + 1
            )));
        }
        let share = 0.1 * tol * (worst.hi - worst.lo) / (b - a);
        let l = evaluate(&f, worst.lo, mid, worst.left, share, &mut evaluations);
        let r = evaluate(&f, mid, worst.hi, worst.right, share, &mut evaluations);
        total_error += l.error + r.error - worst.error;
        value += l.left + l.right + r.left + r.right - worst.left - worst.right;
        magnitude += l.left.abs() + l.right.abs() + r.left.abs() + r.right.abs()
            - worst.left.abs()
            - worst.right.abs();
        heap.push(l);
        heap.push(r);
    }
}

/// ∫_a^∞ f, through x = a + t/(1−t) on [0, 1).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<QuadResult> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Sum of integrals over consecutive breakpoints, so that known kinks or
/// peaks sit on panel boundaries.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    tol: f64,
) -> Result<QuadResult> {
    let pieces = breakpoints.len().saturating_sub(1).max(1);
    let mut total = QuadResult {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 0,
        panels: 0,
    };
    for w in breakpoints.windows(2) {
        let r = integrate(&f, w[0], w[1], tol / pieces as f64)?;
        total.value += r.value;
        total.error_estimate += r.error_estimate;
        total.evaluations += r.evaluations;
        total.panels += r.panels;
    }
    Ok(total)
}
