//! Estimators for correlators, masses, non-Gaussianity and the Gaussian
//! comparison proxies, plus fitted trend reports.
//!
//! Field-based estimators are accumulators: they reduce each configuration
//! to a few numbers on arrival, so long chains never need to be held in memory.

use crate::error::{Error, Result};
use crate::gap::{continuum_mass_bounds, solve_gap_continuum};
use crate::gff::{FieldConfig, SpectralCovariance, SymbolChoice};
use crate::quad;
use crate::spectral::{build_frequency_lattice, Fft2, TorusSpec};
use crate::stats::{
    block_means, integrated_autocorrelation, jackknife, linear_fit, BinnedSeries, LinearFit,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Pole mass of the lattice propagator 1/(m² + ξ̂²) along one axis:
/// the solution E of (4/ε²) sinh²(εE/2) = m².
pub fn lattice_dispersion_mass(m: f64, spacing: f64) -> f64 {
    2.0 / spacing * (0.5 * spacing * m).asinh()
}

/// Inverse of [`lattice_dispersion_mass`].
pub fn mass_from_pole(energy: f64, spacing: f64) -> f64 {
    2.0 / spacing * (0.5 * spacing * energy).sinh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelatorKind {
    /// ⟨Φ_i(x)Φ_i(x + z·e)⟩
    Point,
    /// ε Σ_y ⟨Φ_i(x)Φ_i(x + z·e + y·e⊥)⟩, the zero-transverse-momentum projection.
    Slice,
}

/// Axis value meaning "averaged over both lattice directions".
pub const BOTH_AXES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlator {
    pub kind: CorrelatorKind,
    /// 0, 1 or [`BOTH_AXES`].
    pub axis: usize,
    pub side_length: f64,
    /// Physical displacements z = ε·j, j = 0..n.
    pub displacements: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub component_averaged: bool,
    pub params_hash: String,
    /// Jackknife blocks of the primary means: n correlator entries followed by
    /// the N component means. Empty for exact correlators.
    #[serde(default)]
    pub blocks: Vec<Vec<f64>>,
}

impl Correlator {
    fn exact(kind: CorrelatorKind, m: f64, torus: &TorusSpec, axis: usize) -> Self {
        let n = torus.grid_points();
        let eps = torus.spacing();
        let l = torus.side_length();
        let m2 = m * m;
        let modes = build_frequency_lattice(torus);
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let z = eps * j as f64;
                match kind {
                    CorrelatorKind::Point => {
                        modes
                            .modes()
                            .iter()
                            .map(|md| (md.xi[axis] * z).cos() / (m2 + md.lattice))
                            .sum::<f64>()
                            / (l * l)
                    }
                    CorrelatorKind::Slice => {
                        modes
                            .modes()
                            .iter()
                            .filter(|md| md.k[1 - axis] == 0)
                            .map(|md| (md.xi[axis] * z).cos() / (m2 + md.lattice))
                            .sum::<f64>()
                            / l
                    }
                }
            })
            .collect();
        Self {
            kind,
            axis,
            side_length: l,
            displacements: (0..n).map(|j| eps * j as f64).collect(),
            errors: vec![0.0; n],
            values,
            component_averaged: true,
            params_hash: String::new(),
            blocks: Vec::new(),
        }
    }

    /// The lattice GFF propagator (1/L²) Σ cos(ξ·z)/(m² + ξ̂²) along `axis`.
    pub fn exact_point(m: f64, torus: &TorusSpec, axis: usize) -> Self {
        Self::exact(CorrelatorKind::Point, m, torus, axis)
    }

    /// (1/L) Σ_{ξ⊥ = 0} cos(ξz)/(m² + ξ̂²), exactly A·cosh(E(z − L/2)) with
    /// E the lattice-dispersion mass.
    pub fn exact_slice(m: f64, torus: &TorusSpec) -> Self {
        Self::exact(CorrelatorKind::Slice, m, torus, 0)
    }

    pub fn with_hash(mut self, hash: &str) -> Self {
        self.params_hash = hash.to_string();
        self
    }

    /// Columnar text: displacement, value, error.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("# z value error\n");
        for ((z, v), e) in self
            .displacements
            .iter()
            .zip(&self.values)
            .zip(&self.errors)
        {
            s.push_str(&format!("{z:.10e} {v:.10e} {e:.10e}\n"));
        }
        s
    }
}

fn connected(primaries: &[f64], n: usize, scale: f64, j: usize) -> f64 {
    let comps = &primaries[n..];
    let mu2 = comps.iter().map(|m| m * m).sum::<f64>() / comps.len() as f64;
    primaries[j] - scale * mu2
}

/// Streaming estimator for [`Correlator`]s: each configuration is reduced
/// to n correlator values plus N component means.
#[derive(Debug, Clone)]
pub struct CorrelatorAccumulator {
    kind: CorrelatorKind,
    axis: usize,
    torus: TorusSpec,
    fft: Fft2,
    rows: Vec<Vec<f64>>,
}

impl CorrelatorAccumulator {
    pub fn new(torus: &TorusSpec, kind: CorrelatorKind, axis: usize) -> Result<Self> {
        if axis > BOTH_AXES {
            return Err(Error::Domain(format!(
                "axis must be 0, 1 or {BOTH_AXES}, got {axis}"
            )));
        }
        Ok(Self {
            kind,
            axis,
            torus: *torus,
            fft: Fft2::new(torus),
            rows: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, field: &FieldConfig) -> Result<()> {
        if field.torus() != &self.torus {
            return Err(Error::Domain(
                "field torus differs from the accumulator torus".into(),
            ));
        }
        let n = self.torus.grid_points();
        let eps = self.torus.spacing();
        let l = self.torus.side_length();
        let nc = field.components();
        let mut row = vec![0.0; n + nc];
        let axes: &[usize] = match self.axis {
            0 => &[0],
            1 => &[1],
            _ => &[0, 1],
        };
        let weight = (nc * axes.len()) as f64;
        for c in 0..nc {
            let phi = field.component(c);
            row[n + c] = phi.iter().sum::<f64>() / (n * n) as f64;
            for &axis in axes {
                match self.kind {
                    CorrelatorKind::Slice => {
                        let mut s = vec![0.0; n];
                        for a in 0..n {
                            for b in 0..n {
                                let (i, _) = if axis == 0 { (a, b) } else { (b, a) };
                                s[i] += eps * phi[a * n + b];
                            }
                        }
                        for (j, r) in row.iter_mut().take(n).enumerate() {
                            let mut acc = 0.0;
                            for t in 0..n {
                                acc += s[t] * s[(t + j) % n];
                            }
                            *r += acc / (n as f64 * l) / weight;
                        }
                    }
                    CorrelatorKind::Point => {
                        let hat = self.fft.forward(phi);
                        let mut marginal = vec![0.0; n];
                        for a in 0..n {
                            for b in 0..n {
                                let k = if axis == 0 { a } else { b };
                                marginal[k] += hat[a * n + b].norm_sqr();
                            }
                        }
                        let l4 = l.powi(4);
                        for (j, r) in row.iter_mut().take(n).enumerate() {
                            let mut acc = 0.0;
                            for (k, p) in marginal.iter().enumerate() {
                                acc += p * (2.0 * PI * (k * j) as f64 / n as f64).cos();
                            }
                            *r += acc / l4 / weight;
                        }
                    }
                }
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Connected correlator with jackknife errors over `n_blocks` consecutive blocks.
    pub fn finish(&self, n_blocks: usize) -> Result<Correlator> {
        if self.rows.len() < 100 {
            return Err(Error::InsufficientSamples {
                needed: 100,
                got: self.rows.len(),
            });
        }
        let n = self.torus.grid_points();
        let scale = match self.kind {
            CorrelatorKind::Point => 1.0,
            CorrelatorKind::Slice => self.torus.side_length(),
        };
        let blocks = block_means(&self.rows, n_blocks.max(2));
        let mut values = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        for j in 0..n {
            let (v, e) = jackknife(&blocks, |p| connected(p, n, scale, j))?;
            values.push(v);
            errors.push(e);
        }
        let eps = self.torus.spacing();
        Ok(Correlator {
            kind: self.kind,
            axis: self.axis,
            side_length: self.torus.side_length(),
            displacements: (0..n).map(|j| eps * j as f64).collect(),
            values,
            errors,
            component_averaged: true,
            params_hash: String::new(),
            blocks,
        })
    }
}

/// Connected two-point function from a set of configurations, averaged over
/// components and translations, with jackknife errors from 20 blocks.
pub fn two_point_function(
    samples: &[FieldConfig],
    axis: usize,
    kind: CorrelatorKind,
) -> Result<Correlator> {
    let first = samples.first().ok_or(Error::InsufficientSamples {
        needed: 100,
        got: 0,
    })?;
    let mut acc = CorrelatorAccumulator::new(first.torus(), kind, axis)?;
    for s in samples {
        acc.push(s)?;
    }
    acc.finish(20)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassFit {
    pub mass: f64,
    pub error: f64,
    pub amplitude: f64,
    pub chi2: f64,
    pub window: (usize, usize),
}

/// Least-squares fit of A·cosh(E(z − L/2)) with A profiled out; returns (E, A, χ²).
fn fit_cosh(z: &[f64], c: &[f64], w: &[f64], half: f64, e_max: f64) -> (f64, f64, f64) {
    let profile = |e: f64| -> (f64, f64) {
        let mut sfc = 0.0;
        let mut sff = 0.0;
        for ((zi, ci), wi) in z.iter().zip(c).zip(w) {
            let f = (e * (zi - half)).cosh();
            sfc += wi * f * ci;
            sff += wi * f * f;
        }
        let a = sfc / sff;
        let chi2: f64 = z
            .iter()
            .zip(c)
            .zip(w)
            .map(|((zi, ci), wi)| wi * (ci - a * (e * (zi - half)).cosh()).powi(2))
            .sum();
        (chi2, a)
    };
    // coarse log grid then golden section
    let mut best = (f64::INFINITY, 1e-4);
    let steps = 400;
    for i in 0..=steps {
        let e = 1e-4 * (e_max / 1e-4).powf(i as f64 / steps as f64);
        let (chi, _) = profile(e);
        if chi < best.0 {
            best = (chi, e);
        }
    }
    let r = (e_max / 1e-4).powf(1.0 / steps as f64);
    let (mut a, mut b) = (best.1 / r, best.1 * r);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if profile(x1).0 < profile(x2).0 {
            b = x2;
        } else {
            a = x1;
        }
        if b - a < 1e-15 * b {
            break;
        }
    }
    let e = 0.5 * (a + b);
    let (chi2, amp) = profile(e);
    (e, amp, chi2)
}

/// Cosh fit over the default window z ∈ [L/4, 3L/4].
pub fn effective_mass(corr: &Correlator, torus: &TorusSpec) -> Result<MassFit> {
    let n = torus.grid_points();
    effective_mass_window(corr, torus, (n / 4, 3 * n / 4))
}

/// Cosh fit C(z) ≈ A cosh(E(z − L/2)) over grid displacements `window` (inclusive),
/// with jackknife error when the correlator carries blocks.
pub fn effective_mass_window(
    corr: &Correlator,
    torus: &TorusSpec,
    window: (usize, usize),
) -> Result<MassFit> {
    let n = torus.grid_points();
    if corr.values.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: corr.values.len(),
        });
    }
    let (lo, hi) = window;
    if !(lo < hi && hi < n) {
        return Err(Error::Domain(format!("bad fit window {window:?}")));
    }
    if let Some(j) = (lo..=hi).find(|&j| !(corr.values[j] > 0.0)) {
        return Err(Error::FitRejected(format!(
            "correlator not positive at z = {:.4} (index {j}, value {:.3e} ± {:.3e})",
            corr.displacements[j], corr.values[j], corr.errors[j]
        )));
    }
    let z: Vec<f64> = corr.displacements[lo..=hi].to_vec();
    let c: Vec<f64> = corr.values[lo..=hi].to_vec();
    let w: Vec<f64> = if corr.errors[lo..=hi].iter().all(|e| *e > 0.0) {
        corr.errors[lo..=hi].iter().map(|e| 1.0 / (e * e)).collect()
    } else {
        c.iter().map(|v| 1.0 / (v * v)).collect()
    };
    let half = 0.5 * torus.side_length();
    let e_max = 20.0 / torus.spacing();
    let (mass, amplitude, chi2) = fit_cosh(&z, &c, &w, half, e_max);
    let error = if corr.blocks.len() >= 2 {
        let scale = match corr.kind {
            CorrelatorKind::Point => 1.0,
            CorrelatorKind::Slice => corr.side_length,
        };
        let (_, err) = jackknife(&corr.blocks, |p| {
            let cj: Vec<f64> = (lo..=hi).map(|j| connected(p, n, scale, j)).collect();
            fit_cosh(&z, &cj, &w, half, e_max).0
        })?;
        err
    } else {
        0.0
    };
    Ok(MassFit {
        mass,
        error,
        amplitude,
        chi2,
        window,
    })
}

/// Moments (1/N)Σ_i X_i^k, k = 1..4, of one configuration's smeared components.
pub fn smeared_moments(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let mut m = [0.0; 4];
    for v in x {
        let v2 = v * v;
        m[0] += v;
        m[1] += v2;
        m[2] += v2 * v;
        m[3] += v2 * v2;
    }
    m.map(|s| s / n)
}

fn kappa4(m: &[f64]) -> f64 {
    let (m1, m2, m3, m4) = (m[0], m[1], m[2], m[3]);
    m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4)
}

/// κ₄ = E[X⁴] − 3E[X²]² of the centered marginal, with jackknife error.
/// `samples[t]` holds X_i = Φ_i.g for every component i of configuration t.
pub fn connected_four_cumulant(samples: &[Vec<f64>]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| smeared_moments(x).to_vec())
        .collect();
    let second: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let n_eff = if second.len() >= 2 {
        integrated_autocorrelation(&second).n_eff
    } else {
        0.0
    };
    if samples.len() < 1000 || n_eff < 1000.0 {
        return Err(Error::InsufficientSamples {
            needed: 1000,
            got: n_eff.min(samples.len() as f64) as usize,
        });
    }
    jackknife(&block_means(&rows, 50), kappa4)
}

/// A smooth compactly supported bump exp(−1/(1 − r²/R²)) centered on a site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: [usize; 2],
    pub radius: f64,
}

impl TestFunction {
    /// Admissible when the support fits inside the torus and covers more than one site.
    pub fn validate(&self, torus: &TorusSpec) -> Result<()> {
        let n = torus.grid_points();
        if self.center[0] >= n || self.center[1] >= n {
            return Err(Error::Domain(
                "test function center outside the grid".into(),
            ));
        }
        if !(self.radius > 2.0 * torus.spacing() && self.radius < 0.5 * torus.side_length()) {
            return Err(Error::Domain(format!(
                "test function radius {} must lie in (2ε, L/2) = ({}, {})",
                self.radius,
                2.0 * torus.spacing(),
                0.5 * torus.side_length()
            )));
        }
        Ok(())
    }

    pub fn grid(&self, torus: &TorusSpec) -> Vec<f64> {
        let n = torus.grid_points();
        let eps = torus.spacing();
        let mut g = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let d = |i: usize, c: usize| {
                    let k = (i as i64 - c as i64).rem_euclid(n as i64);
                    eps * k.min(n as i64 - k) as f64
                };
                let r2 = (d(a, self.center[0]).powi(2) + d(b, self.center[1]).powi(2))
                    / (self.radius * self.radius);
                if r2 < 1.0 {
                    g[a * n + b] = (-1.0 / (1.0 - r2)).exp();
                }
            }
        }
        g
    }
}

/// X_i = ε² Σ_x g(x)Φ_i(x) for every component.
pub fn smear(field: &FieldConfig, g: &[f64]) -> Vec<f64> {
    let eps2 = field.torus().spacing().powi(2);
    (0..field.components())
        .map(|c| {
            eps2 * field
                .component(c)
                .iter()
                .zip(g)
                .map(|(p, w)| p * w)
                .sum::<f64>()
        })
        .collect()
}

/// Var(Z.g) = L⁻² Σ_ξ v(ξ)|ĝ(ξ)|² under the GFF `cov`.
pub fn smeared_gaussian_variance(cov: &SpectralCovariance, g: &[f64]) -> f64 {
    let torus = cov.torus();
    let hat = Fft2::new(torus).forward(g);
    hat.iter()
        .zip(cov.variances())
        .map(|(h, v)| v * h.norm_sqr())
        .sum::<f64>()
        / torus.volume()
}

/// Bounded cylindrical functionals of one smeared component, all with bounded
/// first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CylindricalObservable {
    /// tanh(a·X + b)
    TanhLinear { slope: f64, offset: f64 },
    /// √(1 + (a·X)²)
    SoftAbs { scale: f64 },
}

impl CylindricalObservable {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CylindricalObservable::TanhLinear { slope, offset } => {
                slope.is_finite() && slope != 0.0 && offset.is_finite()
            }
            CylindricalObservable::SoftAbs { scale } => scale.is_finite() && scale != 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "observable {self:?} is not admissible"
            )))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CylindricalObservable::TanhLinear { slope, offset } => (slope * x + offset).tanh(),
            CylindricalObservable::SoftAbs { scale } => (scale * x).hypot(1.0),
        }
    }

    /// E[G(σZ)] for standard normal Z by adaptive quadrature.
    pub fn gaussian_expectation(&self, sigma: f64) -> Result<f64> {
        let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        Ok(quad::integrate_piecewise(
            |z| self.eval(sigma * z) * dens(z),
            &[-40.0, 0.0, 40.0],
            1e-12,
        )?
        .value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableGap {
    pub gap: f64,
    pub error: f64,
    /// E_ν[G] − E_μ[G]
    pub difference: f64,
    pub nu_mean: f64,
    pub mu_mean: f64,
}

/// |E_ν[G(X)] − E_μ[G(Z.g)]| where `nu_samples[t]` are the smeared components
/// of configuration t under ν and μ is the GFF `cov` (E_μ by quadrature).
pub fn cylindrical_observable_gap(
    nu_samples: &[Vec<f64>],
    cov: &SpectralCovariance,
    g: &TestFunction,
    observable: &CylindricalObservable,
) -> Result<ObservableGap> {
    observable.validate()?;
    g.validate(cov.torus())?;
    if nu_samples.len() < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: nu_samples.len(),
        });
    }
    let series: Vec<f64> = nu_samples
        .iter()
        .map(|xs| xs.iter().map(|x| observable.eval(*x)).sum::<f64>() / xs.len() as f64)
        .collect();
    let (nu_mean, error, _) = crate::stats::correlated_mean(&series);
    let sigma = smeared_gaussian_variance(cov, &g.grid(cov.torus())).sqrt();
    let mu_mean = observable.gaussian_expectation(sigma)?;
    let difference = nu_mean - mu_mean;
    Ok(ObservableGap {
        gap: difference.abs(),
        error,
        difference,
        nu_mean,
        mu_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVarianceTable {
    pub torus: TorusSpec,
    /// E|Φ̂_i(ξ)|²/L² per grid mode (FFT storage order), averaged over components.
    pub variances: Vec<f64>,
    pub errors: Vec<f64>,
    pub samples: u64,
}

/// Streaming per-mode variance estimator with binned errors.
#[derive(Debug, Clone)]
pub struct ModeVarianceAccumulator {
    torus: TorusSpec,
    fft: Fft2,
    series: Vec<BinnedSeries>,
}

impl ModeVarianceAccumulator {
    pub fn new(torus: &TorusSpec) -> Self {
        Self {
            torus: *torus,
            fft: Fft2::new(torus),
            series: (0..torus.sites()).map(|_| BinnedSeries::new(64)).collect(),
        }
    }

    pub fn push(&mut self, field: &FieldConfig) -> Result<()> {
        if field.torus() != &self.torus {
            return Err(Error::Domain(
                "field torus differs from the accumulator torus".into(),
            ));
        }
        let l2 = self.torus.volume();
        let nc = field.components();
        let mut power = vec![0.0; self.torus.sites()];
        for c in 0..nc {
            for (p, h) in power.iter_mut().zip(self.fft.forward(field.component(c))) {
                *p += h.norm_sqr() / l2;
            }
        }
        for (s, p) in self.series.iter_mut().zip(power) {
            s.push(p / nc as f64);
        }
        Ok(())
    }

    pub fn finish(&self) -> ModeVarianceTable {
        ModeVarianceTable {
            torus: self.torus,
            variances: self.series.iter().map(|s| s.mean()).collect(),
            errors: self.series.iter().map(|s| s.std_error()).collect(),
            samples: self.series.first().map_or(0, |s| s.count()),
        }
    }
}

pub fn mode_variance_spectrum(samples: &[FieldConfig]) -> Result<ModeVarianceTable> {
    let first = samples
        .first()
        .ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    let mut acc = ModeVarianceAccumulator::new(first.torus());
    for s in samples {
        acc.push(s)?;
    }
    Ok(acc.finish())
}

/// (1/L²) Σ_ξ (c² + symbol(ξ))(√v(ξ) − √v_ref(ξ))²: the H¹_c Wasserstein distance
/// between the centered Gaussians with these mode variances.
pub fn h1_variance_proxy(
    variances: &[f64],
    reference: &[f64],
    cost_mass: f64,
    torus: &TorusSpec,
    symbol: SymbolChoice,
) -> Result<f64> {
    if variances.len() != torus.sites() || reference.len() != torus.sites() {
        return Err(Error::Dimension {
            expected: torus.sites(),
            found: variances.len().min(reference.len()),
        });
    }
    let c2 = cost_mass * cost_mass;
    let lat = build_frequency_lattice(torus);
    Ok(lat
        .modes()
        .iter()
        .zip(variances.iter().zip(reference))
        .map(|(md, (v, r))| {
            let s = match symbol {
                SymbolChoice::Continuum => md.continuum,
                SymbolChoice::Lattice => md.lattice,
            };
            (c2 + s) * (v.max(0.0).sqrt() - r.sqrt()).powi(2)
        })
        .sum::<f64>()
        / torus.volume())
}

/// Proxy of a measured table against the GFF `reference`, with the lattice symbol
/// in the weight and the mean-square bias of √v subtracted using the errors.
pub fn mode_variance_proxy(
    table: &ModeVarianceTable,
    reference: &SpectralCovariance,
    cost_mass: f64,
) -> Result<(f64, f64)> {
    let torus = &table.torus;
    let raw = h1_variance_proxy(
        &table.variances,
        reference.variances(),
        cost_mass,
        torus,
        SymbolChoice::Lattice,
    )?;
    let c2 = cost_mass * cost_mass;
    let lat = build_frequency_lattice(torus);
    // E(√v̂ − √v)² picks up Var(√v̂) ≈ σ²/(4v) from noise alone; report it as the error scale
    let noise: f64 = lat
        .modes()
        .iter()
        .zip(table.variances.iter().zip(&table.errors))
        .map(|(md, (v, e))| (c2 + md.lattice) * e * e / (4.0 * v.max(f64::MIN_POSITIVE)))
        .sum::<f64>()
        / torus.volume();
    Ok((raw, noise))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub abscissa: String,
    pub ordinate: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_errors: Option<Vec<f64>>,
    /// Fit on (ln x, ln y) rather than (x, y).
    pub log_log: bool,
    /// Inclusive index range used by the fit.
    pub window: (usize, usize),
    pub fit: LinearFit,
}

impl TrendReport {
    pub fn new(
        abscissa: &str,
        ordinate: &str,
        x: Vec<f64>,
        y: Vec<f64>,
        y_errors: Option<Vec<f64>>,
        log_log: bool,
        window: Option<(usize, usize)>,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                found: y.len(),
            });
        }
        let window = window.unwrap_or((0, x.len().saturating_sub(1)));
        let mut r = Self {
            abscissa: abscissa.into(),
            ordinate: ordinate.into(),
            x,
            y,
            y_errors,
            log_log,
            window,
            fit: LinearFit {
                slope: 0.0,
                intercept: 0.0,
                slope_error: 0.0,
                intercept_error: 0.0,
                chi2: 0.0,
            },
        };
        r.fit = r.refit()?;
        Ok(r)
    }

    /// Fit recomputed from the stored data.
    pub fn refit(&self) -> Result<LinearFit> {
        let (lo, hi) = self.window;
        if !(lo < hi && hi < self.x.len()) {
            return Err(Error::Domain(format!("bad fit window {:?}", self.window)));
        }
        let xs = &self.x[lo..=hi];
        let ys = &self.y[lo..=hi];
        if self.log_log {
            if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
                return Err(Error::FitRejected("log-log fit needs positive data".into()));
            }
            let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
            let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
            let sig: Option<Vec<f64>> = self
                .y_errors
                .as_ref()
                .map(|e| e[lo..=hi].iter().zip(ys).map(|(e, y)| e / y).collect());
            linear_fit(&lx, &ly, sig.as_deref())
        } else {
            let sig = self.y_errors.as_ref().map(|e| e[lo..=hi].to_vec());
            linear_fit(xs, ys, sig.as_deref())
        }
    }

    pub fn to_columns(&self) -> String {
        let mut s = format!("# {} {} error\n", self.abscissa, self.ordinate);
        for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
            let e = self.y_errors.as_ref().map_or(0.0, |e| e[i]);
            s.push_str(&format!("{x:.10e} {y:.10e} {e:.10e}\n"));
        }
        s.push_str(&format!(
            "# fit window {:?}{}: slope {:.10e} ± {:.3e}, intercept {:.10e} ± {:.3e}\n",
            self.window,
            if self.log_log { " (log-log)" } else { "" },
            self.fit.slope,
            self.fit.slope_error,
            self.fit.intercept,
            self.fit.intercept_error
        ));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScan {
    pub report: TrendReport,
    pub lambda: f64,
    /// slope / (−2π) − 1
    pub slope_relative_deviation: f64,
    /// Every ln m*(β) inside [−2π(β + 1/λ), −2πβ].
    pub within_bounds: bool,
    /// |intercept| ≤ 2π/λ
    pub intercept_within_band: bool,
}

/// ln m*(β) from the continuum gap equation, fitted linearly in β.
pub fn mass_beta_scan(lambda: f64, beta_grid: &[f64]) -> Result<BetaScan> {
    if beta_grid.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: beta_grid.len(),
        });
    }
    let mut y = Vec::with_capacity(beta_grid.len());
    let mut within = true;
    for &b in beta_grid {
        let m = solve_gap_continuum(lambda, b, 1e-14)?.mass();
        let (lo, hi) = continuum_mass_bounds(lambda, b);
        within &= lo <= m && m <= hi * (1.0 + 4.0 * f64::EPSILON);
        y.push(m.ln());
    }
    let report = TrendReport::new(
        "beta",
        "ln_m_star",
        beta_grid.to_vec(),
        y,
        None,
        false,
        None,
    )?;
    Ok(BetaScan {
        lambda,
        slope_relative_deviation: report.fit.slope / (-2.0 * PI) - 1.0,
        within_bounds: within,
        intercept_within_band: report.fit.intercept.abs() <= 2.0 * PI / lambda,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::{sample_gff, GffSampler};
    use crate::rng::StreamKey;
    use crate::spectral::lattice_propagator;
    use approx::assert_relative_eq;

    #[test]
    fn dispersion_round_trip_and_free_pole() {
        let e = lattice_dispersion_mass(0.4, 0.25);
        assert_relative_eq!(mass_from_pole(e, 0.25), 0.4, max_relative = 1e-14);
        assert!(e < 0.4);
        // the slice correlator of the free field is exactly cosh at the pole mass
        let t = TorusSpec::new(16.0, 64).unwrap();
        let c = Correlator::exact_slice(0.4, &t);
        let n = 64;
        let ratio = |j: usize| (c.values[j - 1] + c.values[j + 1]) / (2.0 * c.values[j]);
        for j in [5, 16, 30] {
            assert_relative_eq!(ratio(j), (e * t.spacing()).cosh(), max_relative = 1e-12);
        }
        assert_relative_eq!(c.values[3], c.values[n - 3], max_relative = 1e-12);
    }

    #[test]
    fn effective_mass_recovers_input_on_exact_correlators() {
        for &(m, l) in &[(0.4, 16.0), (0.1875, 16.0), (0.625, 16.0), (0.3, 32.0)] {
            let t = TorusSpec::new(l, 64).unwrap();
            let fit = effective_mass(&Correlator::exact_slice(m, &t), &t).unwrap();
            let e = lattice_dispersion_mass(m, t.spacing());
            assert_relative_eq!(fit.mass, e, max_relative = 1e-8);
        }
    }

    #[test]
    fn exact_point_correlator_matches_propagator() {
        let t = TorusSpec::new(8.0, 16).unwrap();
        let c = Correlator::exact_point(0.5, &t, 1);
        for j in 0..16 {
            assert_relative_eq!(
                c.values[j],
                lattice_propagator(0.5, &t, [0, j as i64]),
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(
            c.values[0],
            SpectralCovariance::new(0.5, &t, SymbolChoice::Lattice)
                .unwrap()
                .site_variance(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gff_correlators_match_closed_forms() {
        let t = TorusSpec::new(8.0, 16).unwrap();
        let cov = SpectralCovariance::new(0.5, &t, SymbolChoice::Lattice).unwrap();
        let mut sampler = GffSampler::new(&cov);
        let mut rng = StreamKey::new(40, 0, 0).rng();
        let mut point = CorrelatorAccumulator::new(&t, CorrelatorKind::Point, 0).unwrap();
        let mut slice = CorrelatorAccumulator::new(&t, CorrelatorKind::Slice, 1).unwrap();
        for _ in 0..2000 {
            let f = sampler.sample(2, &mut rng);
            point.push(&f).unwrap();
            slice.push(&f).unwrap();
        }
        let p = point.finish(20).unwrap();
        let exact = Correlator::exact_point(0.5, &t, 0);
        for j in 0..16 {
            assert!(
                (p.values[j] - exact.values[j]).abs() < 3.5 * p.errors[j],
                "j={j}"
            );
        }
        assert!(p.values[0] > 0.0);
        let s = slice.finish(20).unwrap();
        let es = Correlator::exact_slice(0.5, &t);
        for j in 0..16 {
            assert!(
                (s.values[j] - es.values[j]).abs() < 3.5 * s.errors[j],
                "slice j={j}"
            );
        }
        assert!((s.values[3] - s.values[13]).abs() < 3.0 * (s.errors[3] + s.errors[13]));
        let fit = effective_mass(&s, &t).unwrap();
        let e = lattice_dispersion_mass(0.5, t.spacing());
        assert!((fit.mass - e).abs() < 3.0 * fit.error, "{fit:?} vs {e}");
    }

    #[test]
    fn insufficient_samples_and_rejected_fits() {
        let t = TorusSpec::new(8.0, 16).unwrap();
        let f = sample_gff(
            &SpectralCovariance::new(1.0, &t, SymbolChoice::Lattice).unwrap(),
            1,
            &StreamKey::new(0, 0, 0),
        );
        assert!(matches!(
            two_point_function(&vec![f; 10], 0, CorrelatorKind::Point),
            Err(Error::InsufficientSamples { .. })
        ));
        let mut c = Correlator::exact_slice(0.5, &t);
        c.values[6] = -1.0;
        assert!(matches!(effective_mass(&c, &t), Err(Error::FitRejected(_))));
    }

    #[test]
    fn kappa4_of_gaussian_and_of_uniform() {
        let mut rng = StreamKey::new(41, 0, 0).rng();
        use rand::Rng;
        let g: Vec<Vec<f64>> = (0..20_000)
            .map(|_| vec![rng.sample::<f64, _>(rand_distr::StandardNormal)])
            .collect();
        let (k, e) = connected_four_cumulant(&g).unwrap();
        assert!(k.abs() < 3.0 * e, "{k} ± {e}");
        // uniform on [−1, 1]: κ₄ = 1/5 − 3/9 = −2/15
        let u: Vec<Vec<f64>> = (0..20_000)
            .map(|_| vec![rng.random_range(-1.0..1.0)])
            .collect();
        let (k, e) = connected_four_cumulant(&u).unwrap();
        assert!((k + 2.0 / 15.0).abs() < 3.0 * e);
        assert!(connected_four_cumulant(&g[..500]).is_err());
    }

    #[test]
    fn smeared_variance_and_cylindrical_gap_at_zero_coupling() {
        let t = TorusSpec::new(8.0, 16).unwrap();
        let cov = SpectralCovariance::new(0.6, &t, SymbolChoice::Lattice).unwrap();
        let g = TestFunction {
            center: [8, 8],
            radius: 2.0,
        };
        let grid = g.grid(&t);
        let var = smeared_gaussian_variance(&cov, &grid);
        // direct double sum ε⁴ΣΣ g(x)G(x−y)g(y)
        let eps = t.spacing();
        let mut direct = 0.0;
        let n = 16i64;
        for x in 0..256 {
            for y in 0..256 {
                if grid[x] == 0.0 || grid[y] == 0.0 {
                    continue;
                }
                let d = [(x as i64 / n - y as i64 / n), (x as i64 % n - y as i64 % n)];
                direct += grid[x] * grid[y] * lattice_propagator(0.6, &t, d);
            }
        }
        assert_relative_eq!(var, eps.powi(4) * direct, max_relative = 1e-10);
        let mut sampler = GffSampler::new(&cov);
        let mut rng = StreamKey::new(42, 0, 0).rng();
        let xs: Vec<Vec<f64>> = (0..3000)
            .map(|_| smear(&sampler.sample(2, &mut rng), &grid))
            .collect();
        for obs in [
            CylindricalObservable::SoftAbs { scale: 2.0 },
            CylindricalObservable::TanhLinear {
                slope: 1.0,
                offset: 0.3,
            },
        ] {
            let r = cylindrical_observable_gap(&xs, &cov, &g, &obs).unwrap();
            assert!(r.gap < 3.0 * r.error, "{obs:?}: {r:?}");
        }
        assert!(cylindrical_observable_gap(
            &xs,
            &cov,
            &TestFunction {
                center: [0, 0],
                radius: 5.0
            },
            &CylindricalObservable::SoftAbs { scale: 1.0 }
        )
        .is_err());
        assert!(CylindricalObservable::SoftAbs { scale: f64::NAN }
            .validate()
            .is_err());
        // odd observable: E_μ tanh(aX) = 0
        assert!(
            CylindricalObservable::TanhLinear {
                slope: 1.0,
                offset: 0.0
            }
            .gaussian_expectation(0.7)
            .unwrap()
            .abs()
                < 1e-15
        );
    }

    #[test]
    fn proxy_matches_gaussian_w2_on_exact_variances() {
        let t = TorusSpec::new(6.0, 16).unwrap();
        let a = SpectralCovariance::new(0.5, &t, SymbolChoice::Continuum).unwrap();
        let b = SpectralCovariance::new(0.3, &t, SymbolChoice::Continuum).unwrap();
        let p = h1_variance_proxy(
            a.variances(),
            b.variances(),
            0.3,
            &t,
            SymbolChoice::Continuum,
        )
        .unwrap();
        assert_relative_eq!(
            p,
            crate::gff::gaussian_w2_h1m(0.5, 0.3, 0.3, &t),
            max_relative = 1e-12
        );
        assert_eq!(
            h1_variance_proxy(a.variances(), a.variances(), 0.3, &t, SymbolChoice::Lattice)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn mode_table_matches_gff_variances() {
        let t = TorusSpec::new(4.0, 8).unwrap();
        let cov = SpectralCovariance::new(0.8, &t, SymbolChoice::Lattice).unwrap();
        let mut sampler = GffSampler::new(&cov);
        let mut rng = StreamKey::new(43, 0, 0).rng();
        let mut acc = ModeVarianceAccumulator::new(&t);
        for _ in 0..4000 {
            acc.push(&sampler.sample(2, &mut rng)).unwrap();
        }
        let table = acc.finish();
        let worst = table
            .variances
            .iter()
            .zip(&table.errors)
            .zip(cov.variances())
            .map(|((v, e), x)| (v - x).abs() / e)
            .fold(0.0f64, f64::max);
        assert!(worst < 4.5, "{worst}");
        let (proxy, noise) = mode_variance_proxy(&table, &cov, 0.8).unwrap();
        assert!(proxy < 5.0 * noise, "{proxy} vs {noise}");
    }

    #[test]
    fn beta_scan_slope_and_band() {
        let betas: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
        let s = mass_beta_scan(1e6, &betas).unwrap();
        assert!(s.slope_relative_deviation.abs() < 1e-4);
        assert!(s.within_bounds);
        let s1 = mass_beta_scan(1.0, &betas).unwrap();
        assert!(s1.intercept_within_band && s1.within_bounds);
        let r = s1.report.refit().unwrap();
        assert_eq!(r, s1.report.fit);
    }
}
