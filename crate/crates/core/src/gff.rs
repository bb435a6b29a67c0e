//! Exact sampling of the massive Gaussian free field on the torus and the
//! closed-form Gaussian information geometry between two such fields.
//!
//! Under the transform convention of [`crate::spectral`], a GFF with
//! per-mode variance `v(ξ) = 1/(m² + symbol(ξ))` has `E|Φ̂(ξ)|² = L²·v(ξ)`,
//! site variance `L⁻² Σ_ξ v(ξ)` and, for a smearing φ,
//! `Var(Z.φ) = L⁻² Σ_ξ v(ξ)|φ̂(ξ)|²`.

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::spectral::{
    build_frequency_lattice, inverse_quartic_tail, CountertermScheme, Fft2, HalfSpectrum, TorusSpec,
};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolChoice {
    /// |ξ|²
    Continuum,
    /// ξ̂² = (4/ε²) Σ sin²(εξ_i/2)
    Lattice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCovariance {
    mass: f64,
    torus: TorusSpec,
    symbol: SymbolChoice,
    variances: Vec<f64>,
}

impl SpectralCovariance {
    pub fn new(mass: f64, torus: &TorusSpec, symbol: SymbolChoice) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Domain(format!("mass must be positive, got {mass}")));
        }
        let m2 = mass * mass;
        let variances = build_frequency_lattice(torus)
            .modes()
            .iter()
            .map(|md| {
                let s = match symbol {
                    SymbolChoice::Continuum => md.continuum,
                    SymbolChoice::Lattice => md.lattice,
                };
                1.0 / (m2 + s)
            })
            .collect();
        Ok(Self {
            mass,
            torus: *torus,
            symbol,
            variances,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn torus(&self) -> &TorusSpec {
        &self.torus
    }

    pub fn symbol(&self) -> SymbolChoice {
        self.symbol
    }

    /// 1/(m² + symbol) per mode, in storage order.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// L⁻² Σ v: the exact site variance. With the lattice symbol this is the
    /// lattice tadpole counterterm at this mass.
    pub fn site_variance(&self) -> f64 {
        self.variances.iter().sum::<f64>() / self.torus.volume()
    }

    /// E|Φ̂(ξ)|² = L² v(ξ).
    pub fn mode_second_moment(&self, index: usize) -> f64 {
        self.torus.volume() * self.variances[index]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub scheme: Option<CountertermScheme>,
    /// Free-form RNG lineage, e.g. the `StreamKey` that produced the field.
    pub lineage: String,
}

/// N real components on the n×n grid, stored component-major:
/// `values[i·n² + site]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    torus: TorusSpec,
    components: usize,
    values: Vec<f64>,
    pub metadata: FieldMetadata,
}

impl FieldConfig {
    pub fn new(torus: &TorusSpec, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::Domain("at least one component is required".into()));
        }
        let expected = components * torus.sites();
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite field value at flat index {pos}"
            )));
        }
        Ok(Self {
            torus: *torus,
            components,
            values,
            metadata: FieldMetadata::default(),
        })
    }

    pub fn zeros(torus: &TorusSpec, components: usize) -> Self {
        assert!(components > 0);
        Self {
            torus: *torus,
            components,
            values: vec![0.0; components * torus.sites()],
            metadata: FieldMetadata::default(),
        }
    }

    pub fn torus(&self) -> &TorusSpec {
        &self.torus
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let s = self.torus.sites();
        &self.values[i * s..(i + 1) * s]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.torus.sites();
        &mut self.values[i * s..(i + 1) * s]
    }

    /// ‖Φ(x)‖² at every site.
    pub fn norm2_grid(&self) -> Vec<f64> {
        let s = self.torus.sites();
        let mut out = vec![0.0; s];
        for c in self.values.chunks(s) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v * v;
            }
        }
        out
    }
}

/// Reusable sampler: holds the FFT plan, the conjugate pairing and the
/// per-mode standard deviations.
#[derive(Debug, Clone)]
pub struct GffSampler {
    cov: SpectralCovariance,
    fft: Fft2,
    half: HalfSpectrum,
    buffer: Vec<Complex64>,
}

impl GffSampler {
    pub fn new(cov: &SpectralCovariance) -> Self {
        let torus = *cov.torus();
        Self {
            cov: cov.clone(),
            fft: Fft2::new(&torus),
            half: HalfSpectrum::new(&torus),
            buffer: vec![Complex64::new(0.0, 0.0); torus.sites()],
        }
    }

    pub fn covariance(&self) -> &SpectralCovariance {
        &self.cov
    }

    /// Draw the mode coefficients of one component: self-conjugate modes are
    /// real with variance L²v, each conjugate pair shares one complex Gaussian
    /// with E|Φ̂|² = L²v.
    pub fn sample_modes<R: Rng + ?Sized>(&self, rng: &mut R, modes: &mut [Complex64]) {
        let l2 = self.cov.torus.volume();
        let v = &self.cov.variances;
        for &i in &self.half.self_conjugate {
            let z: f64 = rng.sample(StandardNormal);
            modes[i] = Complex64::new((l2 * v[i]).sqrt() * z, 0.0);
        }
        for &(i, j) in &self.half.pairs {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let s = (0.5 * l2 * v[i]).sqrt();
            modes[i] = Complex64::new(s * a, s * b);
            modes[j] = Complex64::new(s * a, -s * b);
        }
    }

    /// One component into `out` (length n²).
    pub fn sample_component<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        let mut buf = std::mem::take(&mut self.buffer);
        self.sample_modes(rng, &mut buf);
        self.fft.inverse_in_place(&mut buf);
        for (o, z) in out.iter_mut().zip(&buf) {
            *o = z.re;
        }
        self.buffer = buf;
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, components: usize, rng: &mut R) -> FieldConfig {
        let mut field = FieldConfig::zeros(&self.cov.torus, components);
        for i in 0..components {
            self.sample_component(rng, field.component_mut(i));
        }
        field
    }
}

/// N independent GFF components drawn from the stream `key`.
pub fn sample_gff(cov: &SpectralCovariance, components: usize, key: &StreamKey) -> FieldConfig {
    let mut rng = key.rng();
    let mut field = GffSampler::new(cov).sample(components, &mut rng);
    field.metadata.lineage = key.to_string();
    field
}

fn kl_summand(xi2: f64, m_star2: f64, m2: f64) -> f64 {
    let u = (m_star2 - m2) / (xi2 + m2);
    // u − ln(1+u), with ln_1p to keep cancellation under control for large |ξ|
    u - u.ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyDensity {
    /// Grid-mode truncation of the entropy density.
    pub value: f64,
    /// Rigorous bound on the modes of Λ*_L outside the grid.
    pub tail_bound: f64,
}

/// (1/2L²) Σ_ξ [(|ξ|²+m*²)/(|ξ|²+m²) − 1 + ln((|ξ|²+m²)/(|ξ|²+m*²))] over grid modes.
///
/// Each summand is the Kullback–Leibler divergence of the mode marginal of
/// μ_m from that of μ_{m*}, i.e. this is KL(μ_m ‖ μ_{m*}) per unit volume.
pub fn relative_entropy_density(m_star: f64, m: f64, torus: &TorusSpec) -> f64 {
    relative_entropy_density_with_tail(m_star, m, torus).value
}

pub fn relative_entropy_density_with_tail(
    m_star: f64,
    m: f64,
    torus: &TorusSpec,
) -> EntropyDensity {
    assert!(m_star > 0.0 && m > 0.0, "masses must be positive");
    let (ms2, m2) = (m_star * m_star, m * m);
    let l2 = torus.volume();
    let sum: f64 = build_frequency_lattice(torus)
        .modes()
        .iter()
        .map(|md| kl_summand(md.continuum, ms2, m2))
        .sum();
    // Outside the grid |k| ≥ n/2; u − ln(1+u) ≤ u²/(2 min(1, 1+u)) and
    // |u| ≤ |m*² − m²|/|ξ|².
    let q = (ms2 / m2).min(1.0);
    let scale = (torus.side_length() / (2.0 * std::f64::consts::PI)).powi(4);
    let tail_sum = (ms2 - m2).powi(2) * scale / (2.0 * q)
        * inverse_quartic_tail(torus.grid_points() as f64 / 2.0);
    EntropyDensity {
        value: sum / (2.0 * l2),
        tail_bound: tail_sum / (2.0 * l2),
    }
}

/// Squared W₂ distance per unit volume between μ_{m1} and μ_{m2} for the
/// H¹_c cost, summed over grid modes:
/// L⁻² Σ_ξ (c² + |ξ|²)((m1²+|ξ|²)^{−½} − (m2²+|ξ|²)^{−½})².
pub fn gaussian_w2_h1m(m1: f64, m2: f64, cost_mass: f64, torus: &TorusSpec) -> f64 {
    assert!(
        m1 > 0.0 && m2 > 0.0 && cost_mass > 0.0,
        "masses must be positive"
    );
    let c2 = cost_mass * cost_mass;
    build_frequency_lattice(torus)
        .modes()
        .iter()
        .map(|md| {
            let x = md.continuum;
            let d = (m1 * m1 + x).sqrt().recip() - (m2 * m2 + x).sqrt().recip();
            (c2 + x) * d * d
        })
        .sum::<f64>()
        / torus.volume()
}

/// log E exp(A ∫(‖Φ‖² − N·C)) for the GFF with the lattice symbol, C being the
/// matching lattice tadpole.
pub fn wick_mass_log_mgf(a: f64, m: f64, torus: &TorusSpec, components: usize) -> Result<f64> {
    let cov = SpectralCovariance::new(m, torus, SymbolChoice::Lattice)?;
    wick_mass_log_mgf_for(a, &cov, components)
}

/// Same, for any spectral covariance (C = its site variance):
/// −(N/2) Σ_ξ [ln(1 − 2Av) + 2Av].
pub fn wick_mass_log_mgf_for(a: f64, cov: &SpectralCovariance, components: usize) -> Result<f64> {
    if components == 0 {
        return Err(Error::Domain("at least one component is required".into()));
    }
    let torus = cov.torus();
    let lattice = build_frequency_lattice(torus);
    let mut total = 0.0;
    for (md, &v) in lattice.modes().iter().zip(cov.variances()) {
        let margin = 1.0 - 2.0 * a * v;
        if margin <= 0.0 {
            return Err(Error::Divergence {
                k0: md.k[0],
                k1: md.k[1],
                margin,
            });
        }
        let x = -2.0 * a * v;
        total += x.ln_1p() - x;
    }
    Ok(-0.5 * components as f64 * total)
}

/// Closed forms for a diagonal Gaussian candidate against a reference Gaussian,
/// in whitened coordinates: the candidate has mean `Σ^{1/2}·mean_shift` and
/// covariance `diag(ratio_i)·Σ`. Returns (W₂² in the Σ⁻¹ metric, 2·KL).
pub fn talagrand_gaussian_check(mean_shift: &[f64], ratios: &[f64]) -> Result<(f64, f64)> {
    if mean_shift.is_empty() {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if mean_shift.len() != ratios.len() {
        return Err(Error::Dimension {
            expected: mean_shift.len(),
            found: ratios.len(),
        });
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Domain(format!(
            "covariance ratios must be positive, got {r}"
        )));
    }
    let shift: f64 = mean_shift.iter().map(|a| a * a).sum();
    let w2 = shift + ratios.iter().map(|r| (r.sqrt() - 1.0).powi(2)).sum::<f64>();
    let two_h = shift + ratios.iter().map(|r| r - 1.0 - r.ln()).sum::<f64>();
    Ok((w2, two_h))
}
