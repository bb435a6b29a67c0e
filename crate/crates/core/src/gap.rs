//! Gap equations in all four regularizations and the numerical certificates
//! for the lattice sums that enter them.
//!
//! Every equation is written as F(x) = 0 with x = m² ∈ (0, 1) and F strictly
//! increasing, F(0+) < 0 < F(1). The solver brackets in log x (masses can be
//! exponentially small in β), bisects to relative width 1e-6 and polishes
//! with safeguarded Newton.

use crate::error::{Error, Result};
use crate::quad;
use crate::spectral::{build_frequency_lattice, cutoff_lattice_sum, TorusSpec};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Components {
    Finite(usize),
    Infinite,
}

impl Components {
    /// 1 + 2/N, or 1 at N = ∞.
    pub fn factor(&self) -> f64 {
        match self {
            Components::Finite(n) => 1.0 + 2.0 / *n as f64,
            Components::Infinite => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// x/λ + (1+2/N)(1/4π) ln x = −β on the plane. N = ∞ gives m*, finite N gives m**.
    Continuum,
    /// x/λ + (1+2/N) h_L(x) = −β.
    FiniteVolume,
    /// (1+2/N)C¹ + β = (1+2/N)C^m − x/λ with smooth-cutoff counterterms at scale ε.
    CutoffEps(f64),
    /// Same with lattice tadpoles over the n² grid modes.
    LatticeEps(TorusSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapProblem {
    pub lambda: f64,
    pub beta: f64,
    pub components: Components,
    /// Side length L; `None` is the infinite plane.
    pub volume: Option<f64>,
    pub regularization: Regularization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSolution {
    pub m_squared: f64,
    /// F(m²) at the returned root.
    pub residual: f64,
    /// Final bisection bracket in x.
    pub bracket: (f64, f64),
    /// Bound on the truncation error of the infinite lattice sum in F (0 for finite sums).
    pub truncation_certificate: f64,
    pub evaluations: usize,
}

impl GapSolution {
    pub fn mass(&self) -> f64 {
        self.m_squared.sqrt()
    }
}

/// Modified Bessel functions K₀(z), K₁(z) for z > 0 from the trapezoid rule
/// on K_ν(z) = ∫₀^∞ e^{−z cosh t} cosh(νt) dt. The integrand is analytic in
/// the strip |Im t| < π/2, so step 1/16 is exact to rounding.
pub fn bessel_k0_k1(z: f64) -> (f64, f64) {
    assert!(z > 0.0);
    const H: f64 = 1.0 / 16.0;
    // e^{−z(cosh t − 1)} below e^{−745} contributes nothing; scale by e^{−z} at the end.
    let t_max = (1.0 + 745.0 / z).acosh();
    let steps = (t_max / H).ceil() as usize;
    let mut k0 = 0.5;
    let mut k1 = 0.5;
    for i in 1..=steps {
        let ch = (i as f64 * H).cosh();
        let w = (-z * (ch - 1.0)).exp();
        k0 += w;
        k1 += w * ch;
    }
    let scale = H * (-z).exp();
    (k0 * scale, k1 * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSum {
    pub value: f64,
    /// d/dx of the value.
    pub derivative: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

fn attainable(x: f64) -> f64 {
    8.0 * f64::EPSILON * (x.ln().abs() / (4.0 * PI) + 1e-3)
}

/// h_L(x) = L⁻² Σ_{ξ ∈ Λ*_L} (1/(1+|ξ|²) − 1/(x+|ξ|²)), with a certified tail.
///
/// For √x·L ≥ 1 the Poisson-resummed form
/// h_L(x) = (1/4π) ln x + (1/2π) Σ_{j ≠ 0} [K₀(L|j|) − K₀(√x L|j|)]
/// converges exponentially; otherwise exact row sums
/// Σ_{k} 1/(c + (2πk/L)²) = (L/2√c) coth(L√c/2) are added over |k₁| ≤ K.
pub fn lattice_sum_h(m_squared: f64, side_length: f64, tol: f64) -> Result<LatticeSum> {
    check_h_args(m_squared, side_length, tol)?;
    if m_squared.sqrt() * side_length >= 1.0 {
        lattice_sum_h_bessel(m_squared, side_length, tol)
    } else {
        lattice_sum_h_rows(m_squared, side_length, tol)
    }
}

fn check_h_args(x: f64, l: f64, tol: f64) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain(format!("m² must lie in (0, 1], got {x}")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Domain(format!(
            "side length must be positive, got {l}"
        )));
    }
    let floor = attainable(x);
    if !(tol >= floor) {
        return Err(Error::Precision {
            requested: tol,
            attainable: floor,
        });
    }
    Ok(())
}

/// Bound on (1/2π) Σ_{|j|>J} K₀(c|j|), using K₀(z) ≤ √(π/2z) e^{−z}.
fn bessel_tail(c: f64, j: f64) -> f64 {
    let d = FRAC_1_SQRT_2;
    let s0 = j - 2.0 * d;
    let r = j - d;
    (PI / (2.0 * c * s0)).sqrt() * (-c * s0).exp() * (r / c + 1.0 / (c * c))
}

pub fn lattice_sum_h_bessel(x: f64, l: f64, tol: f64) -> Result<LatticeSum> {
    check_h_args(x, l, tol)?;
    let sx = x.sqrt();
    let c = sx * l;
    let mut j_max = 3.0f64;
    while bessel_tail(c, j_max) > 0.1 * tol {
        j_max += 1.0;
    }
    let jm = j_max as i64;
    let mut delta = 0.0;
    let mut ddelta = 0.0;
    let mut terms = 0;
    // (a, b) with a ≥ 1, b ≥ 0 covers ℤ² \ {0} once up to the four rotations.
    for a in 1..=jm {
        for b in 0..=jm {
            let r2 = (a * a + b * b) as f64;
            if r2 > j_max * j_max {
                break;
            }
            let r = r2.sqrt();
            let (k0_one, _) = bessel_k0_k1(l * r);
            let (k0_x, k1_x) = bessel_k0_k1(c * r);
            delta += k0_one - k0_x;
            ddelta += k1_x * l * r / (2.0 * sx);
            terms += 1;
        }
    }
    let value = x.ln() / (4.0 * PI) + 4.0 * delta / (2.0 * PI);
    let derivative = 1.0 / (4.0 * PI * x) + 4.0 * ddelta / (2.0 * PI);
    Ok(LatticeSum {
        value,
        derivative,
        tail_bound: bessel_tail(c, j_max),
        terms,
    })
}

/// Σ_{k∈ℤ} 1/(c + (2πk/l)²) − l/(2√c), i.e. the exponentially small part of the row sum.
fn row_excess(c: f64, l: f64) -> f64 {
    let sc = c.sqrt();
    let y = 0.5 * l * sc;
    l / (2.0 * sc) * 2.0 / (2.0 * y).exp_m1()
}

/// Σ_{k∈ℤ} 1/(c + (2πk/l)²)².
fn row_sum_inv_sq(c: f64, l: f64) -> f64 {
    let sc = c.sqrt();
    let y = 0.5 * l * sc;
    let coth = 1.0 + 2.0 / (2.0 * y).exp_m1();
    let csch2 = 1.0 / (y.sinh() * y.sinh());
    l / 4.0 * coth / (c * sc) + l * l / (8.0 * c) * csch2
}

/// Rigorous bound on the rows |k₁| > K of h_L.
fn rows_tail(x: f64, l: f64, k: f64) -> f64 {
    let q = l / (2.0 * PI);
    2.0 * (1.0 - x) / (l * l)
        * (q.powi(4) / (3.0 * k.powi(3)) + l / 4.0 * q.powi(3) / (2.0 * k * k))
}

pub fn lattice_sum_h_rows(x: f64, l: f64, tol: f64) -> Result<LatticeSum> {
    check_h_args(x, l, tol)?;
    let mut k = 16.0f64;
    while rows_tail(x, l, k) > 0.1 * tol {
        k *= 2.0;
        if k > 1e9 {
            return Err(Error::Precision {
                requested: tol,
                attainable: rows_tail(x, l, k) * 10.0,
            });
        }
    }
    // Refine K downwards to the smallest power-of-two-free value meeting the budget.
    let mut lo = k / 2.0;
    let mut hi = k;
    while hi - lo > 1.0 {
        let mid = (0.5 * (lo + hi)).floor();
        if rows_tail(x, l, mid) > 0.1 * tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kmax = hi as i64;
    let unit = 2.0 * PI / l;
    let row = |k1: i64| -> (f64, f64) {
        let a = (unit * k1 as f64).powi(2);
        let c1 = 1.0 + a;
        let c2 = x + a;
        let (s1, s2) = (c1.sqrt(), c2.sqrt());
        // l/(2√c1) − l/(2√c2), written to avoid cancellation
        let main = 0.5 * l * (c2 - c1) / (s1 * s2 * (s1 + s2));
        let d = main + row_excess(c1, l) - row_excess(c2, l);
        (d, row_sum_inv_sq(c2, l))
    };
    let (mut value, mut derivative) = row(0);
    let mut acc_v = 0.0;
    let mut acc_d = 0.0;
    for k1 in (1..=kmax).rev() {
        let (d, t) = row(k1);
        acc_v += d;
        acc_d += t;
    }
    value += 2.0 * acc_v;
    derivative += 2.0 * acc_d;
    let l2 = l * l;
    Ok(LatticeSum {
        value: value / l2,
        derivative: derivative / l2,
        tail_bound: rows_tail(x, l, kmax as f64),
        terms: kmax as usize + 1,
    })
}

/// Finite spectral sum L⁻² Σ w/(x + s) and its x-derivative.
#[derive(Debug, Clone)]
struct FiniteTadpole {
    weights: Vec<f64>,
    symbols: Vec<f64>,
    volume: f64,
}

impl FiniteTadpole {
    fn cutoff(l: f64, eps: f64) -> Self {
        let mut weights = Vec::new();
        let mut symbols = Vec::new();
        cutoff_lattice_sum(l, eps, |xi, eta| {
            weights.push(eta * eta);
            symbols.push(xi[0] * xi[0] + xi[1] * xi[1]);
            0.0
        });
        Self {
            weights,
            symbols,
            volume: l * l,
        }
    }

    fn lattice(torus: &TorusSpec) -> Self {
        let lat = build_frequency_lattice(torus);
        Self {
            weights: vec![1.0; lat.len()],
            symbols: lat.modes().iter().map(|m| m.lattice).collect(),
            volume: torus.volume(),
        }
    }

    /// Σ w (1/(1+s) − 1/(x+s)) / L², the finite analogue of h_L.
    fn difference(&self, x: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for (w, s) in self.weights.iter().zip(&self.symbols) {
            let inv = 1.0 / (x + s);
            v += w * (x - 1.0) / ((1.0 + s) * (x + s));
            d += w * inv * inv;
        }
        (v / self.volume, d / self.volume)
    }
}

enum Evaluator {
    Continuum,
    FiniteVolume { l: f64, tol: f64 },
    Finite(FiniteTadpole),
}

struct Evaluation {
    value: f64,
    derivative: f64,
    certificate: f64,
}

impl GapProblem {
    pub fn new(
        lambda: f64,
        beta: f64,
        components: Components,
        volume: Option<f64>,
        regularization: Regularization,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
        }
        if let Components::Finite(0) = components {
            return Err(Error::Domain("N must be at least 1".into()));
        }
        match (&regularization, volume) {
            (Regularization::Continuum, Some(_)) => {
                return Err(Error::Domain(
                    "the continuum equation has infinite volume".into(),
                ))
            }
            (Regularization::Continuum, None) => {}
            (_, None) => {
                return Err(Error::Domain(
                    "finite-volume equations need a side length".into(),
                ))
            }
            (_, Some(l)) if !(l > 0.0 && l.is_finite()) => {
                return Err(Error::Domain(format!(
                    "side length must be positive, got {l}"
                )))
            }
            _ => {}
        }
        if let Regularization::CutoffEps(eps) = regularization {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::Domain(format!(
                    "cutoff scale must lie in (0, 1], got {eps}"
                )));
            }
        }
        if let (Regularization::LatticeEps(t), Some(l)) = (&regularization, volume) {
            if (t.side_length() - l).abs() > 1e-12 * l {
                return Err(Error::Domain(
                    "torus side length disagrees with the volume".into(),
                ));
            }
        }
        Ok(Self {
            lambda,
            beta,
            components,
            volume,
            regularization,
        })
    }

    pub fn continuum(lambda: f64, beta: f64) -> Result<Self> {
        Self::new(
            lambda,
            beta,
            Components::Infinite,
            None,
            Regularization::Continuum,
        )
    }

    fn evaluator(&self, tol: f64) -> Evaluator {
        match self.regularization {
            Regularization::Continuum => Evaluator::Continuum,
            Regularization::FiniteVolume => Evaluator::FiniteVolume {
                l: self.volume.expect("validated"),
                tol: 0.01 * tol / self.components.factor(),
            },
            Regularization::CutoffEps(eps) => {
                Evaluator::Finite(FiniteTadpole::cutoff(self.volume.expect("validated"), eps))
            }
            Regularization::LatticeEps(t) => Evaluator::Finite(FiniteTadpole::lattice(&t)),
        }
    }

    fn evaluate(&self, ev: &Evaluator, x: f64) -> Result<Evaluation> {
        let a = self.components.factor();
        let (h, dh, cert) = match ev {
            Evaluator::Continuum => (x.ln() / (4.0 * PI), 1.0 / (4.0 * PI * x), 0.0),
            Evaluator::FiniteVolume { l, tol } => {
                let s = lattice_sum_h(x, *l, tol.max(attainable(x)))?;
                (s.value, s.derivative, a * s.tail_bound)
            }
            Evaluator::Finite(ft) => {
                let (v, d) = ft.difference(x);
                (v, d, 0.0)
            }
        };
        Ok(Evaluation {
            value: x / self.lambda + a * h + self.beta,
            derivative: 1.0 / self.lambda + a * dh,
            certificate: cert,
        })
    }

    /// F(m²), the gap-equation residual.
    pub fn residual(&self, m_squared: f64) -> Result<f64> {
        let ev = self.evaluator(1e-13);
        Ok(self.evaluate(&ev, m_squared)?.value)
    }

    /// An x with F(x) < 0, from elementary lower bounds on each tadpole.
    fn lower_end(&self, ev: &Evaluator) -> f64 {
        let a = self.components.factor();
        let push = self.beta + 1.0 / self.lambda;
        match ev {
            // (1/4π) a ln x < −(β + 1/λ)
            Evaluator::Continuum => (-4.0 * PI * push / a).exp() * 0.5,
            // h ≤ (1 − 1/x)/L² from the zero mode alone
            Evaluator::FiniteVolume { l, .. } => 0.5 / (1.0 + l * l * push / a),
            Evaluator::Finite(ft) => {
                let w0 = ft
                    .weights
                    .iter()
                    .zip(&ft.symbols)
                    .find(|(_, s)| **s == 0.0)
                    .map(|(w, _)| *w)
                    .unwrap_or(1.0);
                let others: f64 = ft
                    .weights
                    .iter()
                    .zip(&ft.symbols)
                    .filter(|(_, s)| **s > 0.0)
                    .map(|(w, s)| w / (1.0 + s))
                    .sum::<f64>()
                    / ft.volume;
                // F(x) ≤ x/λ + β + a(w0/L² + others − w0/(L² x))
                0.5 * a * w0 / ft.volume / (push + a * (w0 / ft.volume + others))
            }
        }
        .min(0.5)
    }

    pub fn solve(&self, tol: f64) -> Result<GapSolution> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let ev = self.evaluator(tol);
        let mut evaluations = 0usize;
        let mut f = |x: f64| -> Result<Evaluation> {
            evaluations += 1;
            self.evaluate(&ev, x)
        };
        let mut lo = self.lower_end(&ev);
        let mut hi = 1.0f64;
        if f(lo)?.value >= 0.0 {
            return Err(Error::Numerical(format!(
                "lower bracket end {lo:.3e} has non-negative residual"
            )));
        }
        while hi / lo - 1.0 > 1e-6 {
            let mid = (lo * hi).sqrt();
            if f(mid)?.value < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = (lo * hi).sqrt();
        let mut e = f(x)?;
        for _ in 0..100 {
            if e.value == 0.0 {
                break;
            }
            if e.value < 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let mut next = x - e.value / e.derivative;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 2.0 * f64::EPSILON * x {
                x = next;
                e = f(x)?;
                break;
            }
            x = next;
            e = f(x)?;
            if e.value.abs() < 1e-3 * tol && hi - lo < 1e-3 {
                break;
            }
        }
        if e.value.abs() > tol {
            return Err(Error::Numerical(format!(
                "gap solver stalled at m² = {x:.15e} with residual {:.3e} > {tol:.1e}",
                e.value
            )));
        }
        Ok(GapSolution {
            m_squared: x,
            residual: e.value,
            bracket: (lo, hi),
            truncation_certificate: e.certificate,
            evaluations,
        })
    }

    /// Plain Newton iteration in t = ln x from an arbitrary start in (0, 1),
    /// with step halving; used to confirm uniqueness of the root.
    pub fn newton_from(&self, start: f64, tol: f64) -> Result<f64> {
        if !(start > 0.0 && start < 1.0) {
            return Err(Error::Domain(format!(
                "start must lie in (0, 1), got {start}"
            )));
        }
        let ev = self.evaluator(tol);
        let mut t = start.ln();
        let mut e = self.evaluate(&ev, t.exp())?;
        for _ in 0..200 {
            if e.value.abs() <= tol {
                return Ok(t.exp());
            }
            let x = t.exp();
            let mut step = -e.value / (x * e.derivative);
            loop {
                let cand = t + step;
                if cand < 0.0 {
                    let ce = self.evaluate(&ev, cand.exp())?;
                    if ce.value.abs() < e.value.abs() {
                        t = cand;
                        e = ce;
                        break;
                    }
                }
                step *= 0.5;
                if step.abs() < 1e-300 {
                    return Err(Error::Numerical("Newton step underflow".into()));
                }
            }
        }
        Err(Error::Numerical(format!(
            "Newton did not converge from {start}"
        )))
    }
}

/// m*²: x/λ + (1/4π) ln x = −β.
pub fn solve_gap_continuum(lambda: f64, beta: f64, tol: f64) -> Result<GapSolution> {
    GapProblem::continuum(lambda, beta)?.solve(tol)
}

/// m**²: x/λ + (1+2/N)(1/4π) ln x = −β.
pub fn solve_gap_continuum_n(
    lambda: f64,
    beta: f64,
    components: usize,
    tol: f64,
) -> Result<GapSolution> {
    GapProblem::new(
        lambda,
        beta,
        Components::Finite(components),
        None,
        Regularization::Continuum,
    )?
    .solve(tol)
}

/// m²: x/λ + (1+2/N) h_L(x) = −β.
pub fn solve_gap_finite(
    lambda: f64,
    beta: f64,
    components: Components,
    side_length: f64,
    tol: f64,
) -> Result<GapSolution> {
    GapProblem::new(
        lambda,
        beta,
        components,
        Some(side_length),
        Regularization::FiniteVolume,
    )?
    .solve(tol)
}

/// m_ε² with smooth-cutoff counterterms at scale `eps`.
pub fn solve_gap_cutoff(
    lambda: f64,
    beta: f64,
    components: Components,
    side_length: f64,
    eps: f64,
    tol: f64,
) -> Result<GapSolution> {
    GapProblem::new(
        lambda,
        beta,
        components,
        Some(side_length),
        Regularization::CutoffEps(eps),
    )?
    .solve(tol)
}

/// m_lat² with lattice tadpoles on `torus`.
pub fn solve_gap_lattice(
    lambda: f64,
    beta: f64,
    components: Components,
    torus: &TorusSpec,
    tol: f64,
) -> Result<GapSolution> {
    GapProblem::new(
        lambda,
        beta,
        components,
        Some(torus.side_length()),
        Regularization::LatticeEps(*torus),
    )?
    .solve(tol)
}

/// exp(−2π(β + 1/λ)) ≤ m* ≤ exp(−2πβ).
pub fn continuum_mass_bounds(lambda: f64, beta: f64) -> (f64, f64) {
    (
        (-2.0 * PI * (beta + 1.0 / lambda)).exp(),
        (-2.0 * PI * beta).exp(),
    )
}

/// Lower bound on the cutoff gap mass for ε ≤ 1:
/// ln m_ε ≥ −8π·N/(N+2)·(β + 1/λ) − 4ε².
pub fn cutoff_mass_lower_bound(lambda: f64, beta: f64, components: Components, eps: f64) -> f64 {
    let ratio = 1.0 / components.factor();
    (-8.0 * PI * ratio * (beta + 1.0 / lambda) - 4.0 * eps * eps).exp()
}

/// Smooth-cutoff tadpole used by the cutoff equation, exposed for reports.
pub fn cutoff_tadpole(m: f64, side_length: f64, eps: f64) -> f64 {
    let m2 = m * m;
    cutoff_lattice_sum(side_length, eps, |xi, eta| {
        eta * eta / (m2 + xi[0] * xi[0] + xi[1] * xi[1])
    }) / (side_length * side_length)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonCheck {
    pub lhs: f64,
    pub lhs_tail_bound: f64,
    pub rhs: f64,
    pub rhs_error: f64,
    pub residual: f64,
}

/// Σ_{k∈ℤ²} m²/(m²L² + |2πk|²)², by exact row sums over |k₁| ≤ K plus a tail bound.
pub fn poisson_lhs(m: f64, side_length: f64) -> (f64, f64) {
    let m2 = m * m;
    let c0 = m2 * side_length * side_length;
    let kmax = 100_000i64;
    let b = 4.0 * PI * PI;
    let mut acc = 0.0;
    for k1 in (1..=kmax).rev() {
        acc += row_sum_inv_sq(c0 + b * (k1 * k1) as f64, 1.0);
    }
    let value = m2 * (row_sum_inv_sq(c0, 1.0) + 2.0 * acc);
    let k = kmax as f64;
    let tail = 2.0 * m2 * (1.0 / (b * b) / (3.0 * k.powi(3)) + 0.25 / b.powf(1.5) / (2.0 * k * k));
    (value, tail)
}

/// Σ_{j∈ℤ} e^{−a j²}.
fn theta_sum(a: f64) -> f64 {
    let jmax = (40.0 / a).sqrt().ceil() as i64 + 1;
    let mut s = 0.0;
    for j in (1..=jmax).rev() {
        s += (-a * (j * j) as f64).exp();
    }
    1.0 + 2.0 * s
}

/// Both sides of the Poisson identity
/// Σ_k m²/(m²L² + |2πk|²)² = ∫₀^∞ e^{−sL²} (1/4π) Σ_k e^{−m²|k|²/(4s)} ds.
pub fn verify_poisson_identity(m: f64, side_length: f64, quad_tol: f64) -> Result<PoissonCheck> {
    if !(m > 0.0 && side_length > 0.0) {
        return Err(Error::Domain("m and L must be positive".into()));
    }
    let (lhs, lhs_tail_bound) = poisson_lhs(m, side_length);
    let l2 = side_length * side_length;
    let m2 = m * m;
    let s_max = 60.0 / l2;
    let integrand = |s: f64| -> f64 {
        if s <= 0.0 {
            return 1.0 / (4.0 * PI);
        }
        let th = theta_sum(m2 / (4.0 * s));
        (-s * l2).exp() * th * th / (4.0 * PI)
    };
    let breaks: Vec<f64> = (0..=6).map(|i| s_max * i as f64 / 6.0).collect();
    let r = quad::integrate_piecewise(integrand, &breaks, 0.1 * quad_tol)?;
    // θ² ≤ 2(1 + 4πs/m²) beyond s_max
    let e = (-s_max * l2).exp();
    let rhs_tail = (e / l2 + 4.0 * PI / m2 * e * (s_max / l2 + 1.0 / (l2 * l2))) / (2.0 * PI);
    let rhs = r.value;
    Ok(PoissonCheck {
        lhs,
        lhs_tail_bound,
        rhs,
        rhs_error: r.error_estimate + rhs_tail,
        residual: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiemannFamily {
    /// (1 − m²)/((1 + |ξ|²)(m² + |ξ|²))
    Paired,
    /// (m² + |ξ|²)^{−4/3}
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannCheck {
    pub family: RiemannFamily,
    pub side_length: f64,
    /// ∫_{ℝ²} f
    pub integral: f64,
    /// (2π/L)² Σ_{ξ ∈ Λ*_L} f(ξ)
    pub riemann_sum: f64,
    pub lower_bound_holds: bool,
    pub gap: f64,
    /// 3(2π/L)² f(0) + 4(2π/L) ∫₀^∞ f(η, 0) dη
    pub gap_bound: f64,
    pub gap_bound_holds: bool,
}

fn power_axis_integral(m: f64) -> Result<f64> {
    let m2 = m * m;
    Ok(quad::integrate_to_infinity(|r| (m2 + r * r).powf(-4.0 / 3.0), 0.0, 1e-13)?.value)
}

fn power_riemann_sum(m: f64, l: f64) -> Result<f64> {
    let m2 = m * m;
    let unit = 2.0 * PI / l;
    let f = |q: f64| (m2 + q).powf(-4.0 / 3.0);
    let kmax: i64 = 400;
    let mut box_sum = f(0.0);
    // axes
    let mut axis = 0.0;
    for k in 1..=kmax {
        axis += f((unit * k as f64).powi(2));
    }
    let mut interior = 0.0;
    for a in 1..=kmax {
        for b in 1..=kmax {
            interior += f(unit * unit * (a * a + b * b) as f64);
        }
    }
    box_sum += 4.0 * axis + 4.0 * interior;
    // outside the cell-aligned square [−A, A]², A = (K + ½)·unit, by the polar integral
    let a = (kmax as f64 + 0.5) * unit;
    let outer = quad::integrate(
        |th: f64| 1.5 * (m2 + (a / th.cos()).powi(2)).powf(-1.0 / 3.0),
        0.0,
        PI / 4.0,
        1e-14,
    )?;
    Ok(unit * unit * box_sum + 8.0 * outer.value)
}

/// Checks (2π/L)² Σ f ≥ ¼ ∫ f and |∫ f − (2π/L)² Σ f| ≤ 3(2π/L)² f(0) + 4(2π/L) ∫₀^∞ f(η,0) dη
/// for both members of the integrand family.
pub fn verify_riemann_bounds(m: f64, side_length: f64) -> Result<Vec<RiemannCheck>> {
    if !(m > 0.0 && m < 1.0 && side_length > 0.0) {
        return Err(Error::Domain("need 0 < m < 1 and L > 0".into()));
    }
    let m2 = m * m;
    let unit = 2.0 * PI / side_length;
    let mut out = Vec::with_capacity(2);

    let integral = PI * (1.0 / m2).ln();
    let h = lattice_sum_h(m2, side_length, 1e-13)?;
    let riemann_sum = -4.0 * PI * PI * h.value;
    let axis = PI / (2.0 * m) - PI / 2.0;
    let f0 = (1.0 - m2) / m2;
    out.push(make_check(
        RiemannFamily::Paired,
        side_length,
        integral,
        riemann_sum,
        unit,
        f0,
        axis,
    ));

    let integral = 3.0 * PI * m.powf(-2.0 / 3.0);
    let riemann_sum = power_riemann_sum(m, side_length)?;
    let axis = power_axis_integral(m)?;
    let f0 = m2.powf(-4.0 / 3.0);
    out.push(make_check(
        RiemannFamily::Power,
        side_length,
        integral,
        riemann_sum,
        unit,
        f0,
        axis,
    ));
    Ok(out)
}

fn make_check(
    family: RiemannFamily,
    l: f64,
    integral: f64,
    riemann_sum: f64,
    unit: f64,
    f0: f64,
    axis: f64,
) -> RiemannCheck {
    let gap = (integral - riemann_sum).abs();
    let gap_bound = 3.0 * unit * unit * f0 + 4.0 * unit * axis;
    RiemannCheck {
        family,
        side_length: l,
        integral,
        riemann_sum,
        lower_bound_holds: riemann_sum >= 0.25 * integral,
        gap,
        gap_bound,
        gap_bound_holds: gap <= gap_bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelsonCheck {
    pub lambda: f64,
    /// ln ∫₀^∞ exp(λM − e^{√M}) dM
    pub log_lhs: f64,
    /// ln(50λ) + 16λ(ln λ)²
    pub log_rhs: f64,
    pub holds: bool,
    /// ln ∫_{48λ}^∞ exp(λM − e^{√M}) dM
    pub log_tail: f64,
    /// ln(4 e^{−12λ})
    pub log_tail_bound: f64,
    pub tail_holds: bool,
}

/// Lemma-A.1 integral bound, evaluated entirely in log space.
pub fn verify_nelson_integral_bound(lambda: f64) -> Result<NelsonCheck> {
    if !(lambda >= std::f64::consts::E) {
        return Err(Error::Domain(format!("lambda must be >= e, got {lambda}")));
    }
    let f = |m: f64| lambda * m - m.sqrt().exp();
    // Critical points solve e^u/(2u) = λ with u = √M: one in (0,1) (local minimum), one above 1 (maximum).
    let g = |u: f64| u.exp() / (2.0 * u) - lambda;
    let bisect = |mut a: f64, mut b: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (g(mid) > 0.0) == (g(a) > 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let u_min = bisect(1e-12, 1.0);
    let u_max = bisect(1.0, 2.0 * (2.0 * lambda).ln() + 2.0);
    let (m_min, m_star) = (u_min * u_min, u_max * u_max);
    let peak = f(m_star);
    let end = 48.0 * lambda;
    let scaled = |m: f64| (f(m) - peak).exp();
    let width = 1.0
        / (u_max.exp() / (4.0 * u_max.powi(3)) * (u_max - 1.0))
            .sqrt()
            .max(1e-3);
    let mut breaks = vec![0.0, m_min, m_star];
    for k in 1..=8 {
        let b = m_star + width * (1u64 << k) as f64;
        if b < end {
            breaks.push(b);
        }
    }
    breaks.push(end);
    let body = quad::integrate_piecewise(scaled, &breaks, 1e-12)?;
    let log_lhs = peak + body.value.ln();
    let base = f(end);
    let tail = quad::integrate_to_infinity(|m| (f(m) - base).exp(), end, 1e-12)?;
    let log_tail = base + tail.value.ln();
    let log_lhs = log_lhs + (log_tail - log_lhs).exp().ln_1p();
    let log_rhs = (50.0 * lambda).ln() + 16.0 * lambda * lambda.ln().powi(2);
    let log_tail_bound = 4f64.ln() - 12.0 * lambda;
    Ok(NelsonCheck {
        lambda,
        log_lhs,
        log_rhs,
        holds: log_lhs <= log_rhs,
        log_tail,
        log_tail_bound,
        tail_holds: log_tail < log_tail_bound,
    })
}

/// ∫₀^∞ e^{−t}... heat-kernel representation of h_L, used to cross-check the sums:
/// h_L(x) = L⁻² ∫₀^∞ (e^{−t} − e^{−tx}) θ_L(t)² dt, θ_L(t) = Σ_k e^{−t(2πk/L)²}.
pub fn lattice_sum_h_heat_kernel(x: f64, l: f64, tol: f64) -> Result<f64> {
    let theta = |t: f64| -> f64 {
        let q = (2.0 * PI / l).powi(2) * t;
        if q > 1.0 {
            theta_sum(q)
        } else {
            // Poisson dual: Σ_k e^{−q k²} = √(π/q) Σ_j e^{−π² j²/q}
            (PI / q).sqrt() * theta_sum(PI * PI / q)
        }
    };
    let integrand = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let th = theta(t);
        // e^{−t} − e^{−tx} = −e^{−tx}·expm1(−t(1−x))
        -(-t * x).exp() * (-(t * (1.0 - x))).exp_m1() * th * th
    };
    let t_end = 60.0 / x;
    let mut breaks = vec![0.0];
    let mut b = 1e-3;
    while b < t_end {
        breaks.push(b);
        b *= 4.0;
    }
    breaks.push(t_end);
    let r = quad::integrate_piecewise(integrand, &breaks, tol * l * l)?;
    Ok(-r.value / (l * l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Principal branch of Lambert W for w ≥ 0 by Halley iteration.
    fn lambert_w(z: f64) -> f64 {
        let mut w = if z < 1.0 {
            z
        } else {
            z.ln() - z.ln().ln().max(0.0)
        };
        for _ in 0..100 {
            let ew = w.exp();
            let f = w * ew - z;
            let step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0));
            w -= step;
            if step.abs() < 1e-16 * w.abs().max(1e-300) {
                break;
            }
        }
        w
    }

    #[test]
    fn bessel_values() {
        // Reference values K₀(1), K₁(1), K₀(5), K₀(0.1).
        let (k0, k1) = bessel_k0_k1(1.0);
        assert_relative_eq!(k0, 0.421_024_438_240_708_3, max_relative = 1e-14);
        assert_relative_eq!(k1, 0.601_907_230_197_234_6, max_relative = 1e-14);
        assert_relative_eq!(
            bessel_k0_k1(5.0).0,
            3.691_098_334_042_594e-3,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            bessel_k0_k1(0.1).0,
            2.427_069_024_702_016_6,
            max_relative = 1e-13
        );
    }

    #[test]
    fn omega_constant() {
        let s = solve_gap_continuum(4.0 * PI, 0.0, 1e-13).unwrap();
        assert!((s.m_squared - 0.567_143_290_4).abs() < 1e-9);
        assert!(s.residual.abs() < 1e-12);
        // x + ln x = 0 by bisection as an independent oracle
        let (mut a, mut b) = (0.1f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid + mid.ln() < 0.0 {
                a = mid
            } else {
                b = mid
            }
        }
        assert_relative_eq!(s.m_squared, 0.5 * (a + b), epsilon = 1e-14);
    }

    #[test]
    fn continuum_matches_lambert_w() {
        for &(l, b) in &[(0.5, 0.0), (1.0, 0.25), (10.0, 1.0), (3.0, 0.1)] {
            let s = solve_gap_continuum(l, b, 1e-13).unwrap();
            let z: f64 = 4.0 * PI / l * (-4.0 * PI * b).exp();
            let w = l / (4.0 * PI) * lambert_w(z);
            assert_relative_eq!(s.m_squared, w, max_relative = 1e-11);
        }
    }

    #[test]
    fn continuum_limits_and_bounds() {
        let s = solve_gap_continuum(1e9, 0.3, 1e-14).unwrap();
        assert_relative_eq!(s.mass(), (-2.0 * PI * 0.3).exp(), max_relative = 1e-7);
        for &l in &[0.5, 1.0, 2.0, 10.0, 1e6] {
            for &b in &[0.0, 0.25, 0.5, 1.0, 2.0] {
                let m = solve_gap_continuum(l, b, 1e-13).unwrap().mass();
                let (lo, hi) = continuum_mass_bounds(l, b);
                assert!(
                    lo <= m && m <= hi * (1.0 + 1e-12),
                    "λ={l} β={b}: {lo} ≤ {m} ≤ {hi}"
                );
            }
        }
    }

    #[test]
    fn expected_mass_at_unit_coupling() {
        let m = solve_gap_continuum(1.0, 0.0, 1e-13).unwrap().mass();
        assert!((m - 0.388).abs() < 2e-3, "{m}");
    }

    #[test]
    fn h_is_zero_at_unit_mass_and_negative_below() {
        for l in [0.5, 2.0, 8.0, 40.0] {
            assert_eq!(lattice_sum_h(1.0, l, 1e-12).unwrap().value, 0.0);
            assert!(lattice_sum_h(0.3, l, 1e-12).unwrap().value < 0.0);
        }
    }

    #[test]
    fn h_methods_agree() {
        for &(x, l) in &[(0.25, 4.0), (0.5, 2.0), (0.09, 8.0), (0.8, 1.5)] {
            let a = lattice_sum_h_bessel(x, l, 1e-13).unwrap();
            let b = lattice_sum_h_rows(x, l, 1e-13).unwrap();
            assert!(
                (a.value - b.value).abs() < 1e-12,
                "x={x} L={l}: {} vs {}",
                a.value,
                b.value
            );
            assert_relative_eq!(a.derivative, b.derivative, max_relative = 1e-9);
        }
    }

    #[test]
    fn h_against_direct_summation_and_heat_kernel() {
        let (x, l) = (0.25f64, 3.0f64);
        let unit = 2.0 * PI / l;
        let r = 600i64;
        let mut direct = 0.0;
        for a in -r..=r {
            for b in -r..=r {
                if a * a + b * b > r * r {
                    continue;
                }
                let q = unit * unit * (a * a + b * b) as f64;
                direct += (x - 1.0) / ((1.0 + q) * (x + q));
            }
        }
        direct /= l * l;
        // omitted |k| > r: |summand| ≤ (1−x)/|ξ|⁴
        let tail = (1.0 - x)
            * (l / (2.0 * PI)).powi(4)
            * crate::spectral::inverse_quartic_tail(r as f64 + 1.0)
            / (l * l);
        let h = lattice_sum_h(x, l, 1e-13).unwrap();
        assert!(
            h.value <= direct && direct - h.value <= tail + 1e-13,
            "{} vs {direct} (tail {tail})",
            h.value
        );
        let hk = lattice_sum_h_heat_kernel(x, l, 1e-12).unwrap();
        assert!((hk - h.value).abs() < 1e-10, "{hk} vs {}", h.value);
    }

    #[test]
    fn h_approaches_log_with_decreasing_constant() {
        let x = 0.25f64;
        let target = x.ln() / (4.0 * PI);
        let consts: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&l| l * x.sqrt() * (lattice_sum_h(x, l, 1e-14).unwrap().value - target).abs())
            .collect();
        assert!(consts[0] < 1.0);
        assert!(consts.windows(2).all(|w| w[1] < w[0]), "{consts:?}");
    }

    #[test]
    fn h_precision_error() {
        assert!(matches!(
            lattice_sum_h(0.5, 4.0, 1e-20),
            Err(Error::Precision { .. })
        ));
        assert!(lattice_sum_h(0.0, 4.0, 1e-10).is_err());
    }

    #[test]
    fn finite_volume_ordering() {
        let tol = 1e-12;
        let mstar = solve_gap_continuum(1.0, 0.0, tol).unwrap().m_squared;
        let mss = solve_gap_continuum_n(1.0, 0.0, 8, tol).unwrap().m_squared;
        assert!(mss >= mstar);
        let mut prev = f64::INFINITY;
        for l in [8.0, 16.0, 32.0, 64.0] {
            let s = solve_gap_finite(1.0, 0.0, Components::Finite(8), l, tol).unwrap();
            assert!(s.residual.abs() < 1e-10 + s.truncation_certificate);
            assert!(s.m_squared <= prev);
            assert!(s.m_squared >= mss, "L={l}: {} < {mss}", s.m_squared);
            prev = s.m_squared;
        }
    }

    #[test]
    fn newton_from_random_starts_agrees_with_bisection() {
        let problems = vec![
            GapProblem::continuum(1.0, 0.0).unwrap(),
            GapProblem::continuum(0.5, 1.0).unwrap(),
            GapProblem::new(
                1.0,
                0.0,
                Components::Finite(8),
                Some(16.0),
                Regularization::FiniteVolume,
            )
            .unwrap(),
            GapProblem::new(
                2.0,
                0.25,
                Components::Finite(4),
                Some(8.0),
                Regularization::CutoffEps(0.25),
            )
            .unwrap(),
            GapProblem::new(
                1.0,
                0.0,
                Components::Finite(4),
                Some(8.0),
                Regularization::LatticeEps(TorusSpec::new(8.0, 32).unwrap()),
            )
            .unwrap(),
        ];
        for p in &problems {
            let s = p.solve(1e-13).unwrap();
            for i in 0..10 {
                let start = 0.05 + 0.09 * i as f64;
                let x = p.newton_from(start, 1e-13).unwrap();
                assert!(
                    (x - s.m_squared).abs() < 1e-10,
                    "{p:?} from {start}: {x} vs {}",
                    s.m_squared
                );
            }
        }
    }

    #[test]
    fn cutoff_solution_bounds_and_convergence() {
        let n = Components::Finite(4);
        let fine = solve_gap_finite(1.0, 0.0, n, 8.0, 1e-12).unwrap().m_squared;
        let mut diffs = Vec::new();
        for k in 2..=6 {
            let eps = 0.5f64.powi(k);
            let s = solve_gap_cutoff(1.0, 0.0, n, 8.0, eps, 1e-12).unwrap();
            assert!(s.mass() >= cutoff_mass_lower_bound(1.0, 0.0, n, eps));
            diffs.push(((s.m_squared - fine).abs(), eps));
        }
        for w in diffs.windows(2) {
            assert!(w[1].0 < w[0].0);
        }
        for (d, eps) in &diffs {
            assert!(*d < 2.0 * eps * eps, "{d} at ε={eps}");
        }
    }

    #[test]
    fn cutoff_fixed_point_reproducible() {
        let s = solve_gap_cutoff(1.0, 0.0, Components::Finite(4), 8.0, 0.25, 1e-12).unwrap();
        // independent plain bisection on the defining equation
        let c = |m: f64| cutoff_tadpole(m, 8.0, 0.25);
        let a = 1.5;
        let g = |x: f64| a * c(1.0) - a * c(x.sqrt()) + x;
        let (mut lo, mut hi) = (1e-6f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((s.m_squared - 0.5 * (lo + hi)).abs() < 1e-10);
        assert!((s.mass() - 0.44).abs() < 0.02, "{}", s.mass());
    }

    #[test]
    fn lattice_solution_trends() {
        let n = Components::Finite(4);
        let fv = solve_gap_finite(1.0, 0.0, n, 8.0, 1e-12).unwrap().m_squared;
        let d: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&g| {
                (solve_gap_lattice(1.0, 0.0, n, &TorusSpec::new(8.0, g).unwrap(), 1e-12)
                    .unwrap()
                    .m_squared
                    - fv)
                    .abs()
            })
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        let t = TorusSpec::new(8.0, 32).unwrap();
        let ms: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&l| solve_gap_lattice(l, 0.0, n, &t, 1e-12).unwrap().m_squared)
            .collect();
        assert!(ms.windows(2).all(|w| w[1] > w[0]), "{ms:?}");
        let big = solve_gap_lattice(1e8, 0.0, n, &t, 1e-12).unwrap().m_squared;
        assert!(big > 0.01 && big < 1.0);
    }

    #[test]
    fn problem_validation() {
        assert!(GapProblem::new(
            1.0,
            0.0,
            Components::Infinite,
            Some(4.0),
            Regularization::Continuum
        )
        .is_err());
        assert!(GapProblem::new(
            1.0,
            0.0,
            Components::Infinite,
            None,
            Regularization::FiniteVolume
        )
        .is_err());
        assert!(GapProblem::new(
            -1.0,
            0.0,
            Components::Infinite,
            None,
            Regularization::Continuum
        )
        .is_err());
        assert!(GapProblem::new(
            1.0,
            -0.1,
            Components::Infinite,
            None,
            Regularization::Continuum
        )
        .is_err());
        assert!(GapProblem::new(
            1.0,
            0.0,
            Components::Finite(2),
            Some(4.0),
            Regularization::CutoffEps(2.0)
        )
        .is_err());
    }

    #[test]
    fn poisson_identity_and_scaling() {
        for &(m, l) in &[(1.0, 1.0), (0.5, 4.0)] {
            let p = verify_poisson_identity(m, l, 1e-12).unwrap();
            assert!(p.residual < 1e-8, "{p:?}");
        }
        let (a, _) = poisson_lhs(0.5, 4.0);
        let (b, _) = poisson_lhs(1.0, 2.0);
        assert_relative_eq!(a, 0.25 * b, max_relative = 1e-12);
    }

    #[test]
    fn riemann_bounds_hold() {
        for l in [1.0, 2.0, 4.0, 8.0] {
            for c in verify_riemann_bounds(0.5, l).unwrap() {
                assert!(c.lower_bound_holds && c.gap_bound_holds, "{c:?}");
            }
        }
        let gaps: Vec<f64> = [8.0, 32.0, 128.0]
            .iter()
            .map(|&l| verify_riemann_bounds(0.5, l).unwrap()[1].gap)
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn riemann_closed_forms_match_quadrature() {
        let m = 0.5f64;
        let i1 = quad::integrate_to_infinity(
            |r| 2.0 * PI * r * (1.0 - m * m) / ((1.0 + r * r) * (m * m + r * r)),
            0.0,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(i1.value, PI * (1.0 / (m * m)).ln(), max_relative = 1e-10);
        let i2 = quad::integrate_to_infinity(
            |r| 2.0 * PI * r * (m * m + r * r).powf(-4.0 / 3.0),
            0.0,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(
            i2.value,
            3.0 * PI * m.powf(-2.0 / 3.0),
            max_relative = 1e-10
        );
        let a1 = quad::integrate_to_infinity(
            |r| 1.0 / (m * m + r * r) - 1.0 / (1.0 + r * r),
            0.0,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(a1.value, PI / (2.0 * m) - PI / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn nelson_bound_in_log_space() {
        for lambda in [std::f64::consts::E, 10.0, 100.0] {
            let c = verify_nelson_integral_bound(lambda).unwrap();
            assert!(c.holds && c.tail_holds, "{c:?}");
            assert!(c.log_lhs.is_finite());
        }
        // direct quadrature at λ = e where nothing overflows
        let e = std::f64::consts::E;
        let direct =
            quad::integrate_to_infinity(|m: f64| (e * m - m.sqrt().exp()).exp(), 0.0, 1e-10)
                .unwrap();
        let c = verify_nelson_integral_bound(e).unwrap();
        assert_relative_eq!(c.log_lhs, direct.value.ln(), max_relative = 1e-8);
        assert!(verify_nelson_integral_bound(2.0).is_err());
    }
}
