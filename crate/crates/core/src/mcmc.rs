//! Hybrid Monte Carlo for the lattice sigma model and thermodynamic
//! integration of its partition function.
//!
//! Two equivalent site potentials are kept side by side. The β-form is the
//! lattice density as written, with counterterm C¹ at the reference mass:
//!
//! V_β(s) = (λ/4)[(1/N)s² − 2((1+2/N)C¹ + β)s],  s = ‖Φ(x)‖².
//!
//! The m-Wick form splits off a massive Gaussian and Wick-orders the quartic
//! at mass m:
//!
//! V_m(s) = (m²/2)s + (λ/4N):s²:_m.
//!
//! When m solves the scheme's gap equation the two differ by the constant
//! (λ/4)(N+2)C_m²·L², so they define the same measure. The sampler runs on
//! the m-Wick form, which stays proper at λ = 0.

use crate::error::{Error, Result};
use crate::gap::{solve_gap_cutoff, solve_gap_lattice, Components};
use crate::gff::{FieldConfig, GffSampler, SpectralCovariance, SymbolChoice};
use crate::rng::{RngState, StreamKey, StreamRng};
use crate::spectral::{
    build_frequency_lattice, counterterm, CountertermKind, CountertermScheme, Fft2, TorusSpec,
};
use crate::stats::{correlated_mean, MeasurementRecord};
use crate::wick::{quartic_action_full, WickContext};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    /// For parameters built from a mass this is the β implied by the gap
    /// equation, which may be negative.
    pub beta: f64,
    pub components: usize,
    pub torus: TorusSpec,
    /// Counterterm scheme at the reference mass 1.
    pub scheme: CountertermScheme,
    pub mass: f64,
    /// C¹, the scheme's counterterm at the reference mass.
    pub counterterm_ref: f64,
    /// C^m, the counterterm Wick-ordering the quartic in the m-form.
    pub counterterm_mass: f64,
}

impl ModelParams {
    /// Parameters at (λ, β) with the scheme-consistent gap mass.
    pub fn new(
        lambda: f64,
        beta: f64,
        components: usize,
        torus: &TorusSpec,
        kind: CountertermKind,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!(
                "lambda must be positive, got {lambda}; use ModelParams::free for λ = 0"
            )));
        }
        if components == 0 {
            return Err(Error::Domain("N must be at least 1".into()));
        }
        let n = Components::Finite(components);
        let sol = match kind {
            CountertermKind::LatticeTadpole => solve_gap_lattice(lambda, beta, n, torus, 1e-13)?,
            CountertermKind::CutoffEta => {
                solve_gap_cutoff(lambda, beta, n, torus.side_length(), torus.spacing(), 1e-13)?
            }
        };
        let mut p = Self::with_mass(lambda, sol.mass(), components, torus, kind)?;
        p.beta = beta;
        Ok(p)
    }

    /// Parameters at coupling λ ≥ 0 around a given mass. β is set to the value
    /// that makes `mass` the gap mass (0 at λ = 0).
    pub fn with_mass(
        lambda: f64,
        mass: f64,
        components: usize,
        torus: &TorusSpec,
        kind: CountertermKind,
    ) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!("mass must be positive, got {mass}")));
        }
        if components == 0 {
            return Err(Error::Domain("N must be at least 1".into()));
        }
        let scheme = CountertermScheme::new(kind, 1.0)?;
        let c1 = scheme.value(torus);
        let cm = counterterm(mass, torus, kind);
        let a = 1.0 + 2.0 / components as f64;
        let beta = if lambda > 0.0 {
            a * (cm - c1) - mass * mass / lambda
        } else {
            0.0
        };
        Ok(Self {
            lambda,
            beta,
            components,
            torus: *torus,
            scheme,
            mass,
            counterterm_ref: c1,
            counterterm_mass: cm,
        })
    }

    /// The free lattice GFF of the given mass (λ = 0) in the lattice scheme.
    pub fn free(mass: f64, components: usize, torus: &TorusSpec) -> Result<Self> {
        Self::with_mass(
            0.0,
            mass,
            components,
            torus,
            CountertermKind::LatticeTadpole,
        )
    }

    /// Same mass and scheme at another coupling.
    pub fn at_coupling(&self, lambda: f64) -> Result<Self> {
        Self::with_mass(
            lambda,
            self.mass,
            self.components,
            &self.torus,
            self.scheme.kind,
        )
    }

    pub fn wick_context(&self) -> WickContext {
        WickContext::new(self.counterterm_mass, self.components).expect("validated parameters")
    }

    pub fn covariance(&self) -> SpectralCovariance {
        SpectralCovariance::new(self.mass, &self.torus, SymbolChoice::Lattice)
            .expect("validated parameters")
    }

    fn site_potential(&self, form: ActionForm) -> SitePotential {
        let n = self.components as f64;
        let a = 1.0 + 2.0 / n;
        let c4 = self.lambda / (4.0 * n);
        match form {
            ActionForm::Beta => SitePotential {
                c4,
                c2: -0.5 * self.lambda * (a * self.counterterm_ref + self.beta),
                c0: 0.0,
            },
            ActionForm::MassWick => {
                let c = self.counterterm_mass;
                SitePotential {
                    c4,
                    c2: 0.5 * self.mass * self.mass - 0.5 * self.lambda * a * c,
                    c0: 0.25 * self.lambda * (n + 2.0) * c * c,
                }
            }
        }
    }

    /// S_m − S_β = ε²Σ_x [q‖Φ(x)‖²] + k·L², returned as (q, k). q vanishes at the gap mass.
    pub fn form_difference(&self) -> (f64, f64) {
        let b = self.site_potential(ActionForm::Beta);
        let m = self.site_potential(ActionForm::MassWick);
        (m.c2 - b.c2, m.c0 - b.c0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionForm {
    Beta,
    MassWick,
}

#[derive(Debug, Clone, Copy)]
struct SitePotential {
    c4: f64,
    c2: f64,
    c0: f64,
}

fn check_shape(field: &FieldConfig, params: &ModelParams) -> Result<()> {
    if field.torus() != &params.torus {
        return Err(Error::Domain(
            "field torus differs from the model torus".into(),
        ));
    }
    if field.components() != params.components {
        return Err(Error::Dimension {
            expected: params.components,
            found: field.components(),
        });
    }
    Ok(())
}

/// ½ Σ_x Σ_dir (Φ(x+e) − Φ(x))², the nearest-neighbour part of the action in site units.
fn gradient_energy(field: &FieldConfig) -> f64 {
    let n = field.torus().grid_points();
    let mut total = 0.0;
    for c in 0..field.components() {
        let phi = field.component(c);
        for a in 0..n {
            let up = ((a + 1) % n) * n;
            let row = a * n;
            for b in 0..n {
                let r = if b + 1 == n { 0 } else { b + 1 };
                let v = phi[row + b];
                let d0 = phi[up + b] - v;
                let d1 = phi[row + r] - v;
                total += d0 * d0 + d1 * d1;
            }
        }
    }
    0.5 * total
}

pub fn action_with(field: &FieldConfig, params: &ModelParams, form: ActionForm) -> Result<f64> {
    check_shape(field, params)?;
    let pot = params.site_potential(form);
    let eps2 = params.torus.spacing().powi(2);
    let local: f64 = field
        .norm2_grid()
        .iter()
        .map(|&s| (pot.c4 * s + pot.c2) * s + pot.c0)
        .sum();
    Ok(gradient_energy(field) + eps2 * local)
}

/// S(Φ) = (ε²/2)Σ‖∇_εΦ‖² + (λ/4)ε²Σ[(1/N)‖Φ‖⁴ − 2((1+2/N)C¹ + β)‖Φ‖²].
pub fn lattice_action(field: &FieldConfig, params: &ModelParams) -> Result<f64> {
    action_with(field, params, ActionForm::Beta)
}

/// (ε²/2)Σ(‖∇_εΦ‖² + m²‖Φ‖²) + λ·(1/4N)ε²Σ:‖Φ‖⁴:_m.
pub fn mass_wick_action(field: &FieldConfig, params: &ModelParams) -> Result<f64> {
    action_with(field, params, ActionForm::MassWick)
}

fn gradient_into(
    field: &FieldConfig,
    pot: SitePotential,
    eps2: f64,
    s: &mut [f64],
    out: &mut [f64],
) {
    let n = field.torus().grid_points();
    let sites = n * n;
    s.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..field.components() {
        for (acc, v) in s.iter_mut().zip(field.component(c)) {
            *acc += v * v;
        }
    }
    for (c, g) in out.chunks_mut(sites).enumerate() {
        let phi = field.component(c);
        for a in 0..n {
            let up = ((a + 1) % n) * n;
            let dn = ((a + n - 1) % n) * n;
            let row = a * n;
            for b in 0..n {
                let r = if b + 1 == n { 0 } else { b + 1 };
                let l = if b == 0 { n - 1 } else { b - 1 };
                let x = row + b;
                let v = phi[x];
                let lap = 4.0 * v - phi[up + b] - phi[dn + b] - phi[row + r] - phi[row + l];
                g[x] = lap + eps2 * (4.0 * pot.c4 * s[x] + 2.0 * pot.c2) * v;
            }
        }
    }
}

pub fn action_gradient_with(
    field: &FieldConfig,
    params: &ModelParams,
    form: ActionForm,
) -> Result<FieldConfig> {
    check_shape(field, params)?;
    let mut out = vec![0.0; field.values().len()];
    let mut s = vec![0.0; params.torus.sites()];
    gradient_into(
        field,
        params.site_potential(form),
        params.torus.spacing().powi(2),
        &mut s,
        &mut out,
    );
    FieldConfig::new(&params.torus, params.components, out)
}

/// Exact gradient of [`lattice_action`] with respect to every field value.
pub fn action_gradient(field: &FieldConfig, params: &ModelParams) -> Result<FieldConfig> {
    action_gradient_with(field, params, ActionForm::Beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposed: u64,
    pub accepted: u64,
    pub window_proposed: u64,
    pub window_accepted: u64,
    /// Proposals rejected because the energy was not finite.
    pub nonfinite: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn window_rate(&self) -> f64 {
        if self.window_proposed == 0 {
            0.0
        } else {
            self.window_accepted as f64 / self.window_proposed as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub field: FieldConfig,
    pub step_size: f64,
    pub trajectory_steps: usize,
    /// Relative half-width of the per-trajectory step-size jitter.
    pub jitter: f64,
    pub stats: AcceptanceStats,
    pub rng: StreamRng,
    pub sweep: u64,
    /// Action recorded at every thermalization sweep, for the drift test.
    pub thermal_actions: Vec<f64>,
    momenta: Vec<f64>,
    velocity: Vec<f64>,
    force: Vec<f64>,
    scratch: Vec<f64>,
    kinetic: Option<Kinetic>,
}

/// Fourier-accelerated kinetic term ½pᵀM⁻¹p with M = ε²(m² − Δ) in site units,
/// so every mode of the free action oscillates with unit frequency.
#[derive(Debug, Clone)]
struct Kinetic {
    mass: f64,
    torus: TorusSpec,
    fft: Fft2,
    symbol: Vec<f64>,
    buf: Vec<Complex64>,
}

impl Kinetic {
    fn new(mass: f64, torus: &TorusSpec) -> Self {
        let eps2 = torus.spacing().powi(2);
        let symbol = build_frequency_lattice(torus)
            .modes()
            .iter()
            .map(|md| eps2 * (mass * mass + md.lattice))
            .collect();
        Self {
            mass,
            torus: *torus,
            fft: Fft2::new(torus),
            symbol,
            buf: vec![Complex64::new(0.0, 0.0); torus.sites()],
        }
    }

    /// out ← f(M) x, component by component.
    fn apply(&mut self, x: &[f64], out: &mut [f64], f: impl Fn(f64) -> f64) {
        let sites = self.torus.sites();
        for (xc, oc) in x.chunks(sites).zip(out.chunks_mut(sites)) {
            for (b, v) in self.buf.iter_mut().zip(xc) {
                *b = Complex64::new(*v, 0.0);
            }
            self.fft.forward_in_place(&mut self.buf);
            for (b, d) in self.buf.iter_mut().zip(&self.symbol) {
                *b *= f(*d);
            }
            self.fft.inverse_in_place(&mut self.buf);
            for (o, b) in oc.iter_mut().zip(&self.buf) {
                *o = b.re;
            }
        }
    }
}

/// Everything needed to rebuild a [`ChainState`] bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub values: Vec<f64>,
    pub step_size: f64,
    pub trajectory_steps: usize,
    pub jitter: f64,
    pub stats: AcceptanceStats,
    pub rng: RngState,
    pub sweep: u64,
    pub thermal_actions: Vec<f64>,
}

impl ChainState {
    pub fn new(
        field: FieldConfig,
        step_size: f64,
        trajectory_steps: usize,
        rng: StreamRng,
    ) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) || trajectory_steps == 0 {
            return Err(Error::Domain(
                "step size and trajectory length must be positive".into(),
            ));
        }
        let len = field.values().len();
        let sites = field.torus().sites();
        Ok(Self {
            field,
            step_size,
            trajectory_steps,
            jitter: 0.1,
            stats: AcceptanceStats::default(),
            rng,
            sweep: 0,
            thermal_actions: Vec::new(),
            momenta: vec![0.0; len],
            velocity: vec![0.0; len],
            force: vec![0.0; len],
            scratch: vec![0.0; sites],
            kinetic: None,
        })
    }

    /// A chain started from an exact GFF draw at the model mass, with step
    /// size and trajectory length set from the Gaussian frequencies.
    pub fn initial(params: &ModelParams, key: &StreamKey) -> Result<Self> {
        let mut rng = key.rng();
        let mut field = GffSampler::new(&params.covariance()).sample(params.components, &mut rng);
        field.metadata.lineage = key.to_string();
        // free modes all have unit frequency under the accelerated kinetic term;
        // a quarter period decorrelates them
        let step = 0.25;
        let time = 0.5 * std::f64::consts::PI;
        Self::new(field, step, (time / step).ceil() as usize, rng)
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            values: self.field.values().to_vec(),
            step_size: self.step_size,
            trajectory_steps: self.trajectory_steps,
            jitter: self.jitter,
            stats: self.stats,
            rng: RngState::capture(&self.rng),
            sweep: self.sweep,
            thermal_actions: self.thermal_actions.clone(),
        }
    }

    pub fn from_snapshot(
        snap: &ChainSnapshot,
        torus: &TorusSpec,
        components: usize,
    ) -> Result<Self> {
        let field = FieldConfig::new(torus, components, snap.values.clone())?;
        let mut s = Self::new(
            field,
            snap.step_size,
            snap.trajectory_steps,
            snap.rng.restore(),
        )?;
        s.jitter = snap.jitter;
        s.stats = snap.stats;
        s.sweep = snap.sweep;
        s.thermal_actions = snap.thermal_actions.clone();
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcOutcome {
    pub accepted: bool,
    pub delta_h: f64,
    pub nonfinite: bool,
}

fn kinetic_energy(p: &[f64], v: &[f64]) -> f64 {
    0.5 * p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

/// One HMC trajectory on the m-Wick action: momenta p ~ N(0, M) with the
/// Fourier-accelerated mass matrix, leapfrog with a jittered step, Metropolis
/// on the total energy.
pub fn hmc_step(state: &mut ChainState, params: &ModelParams) -> Result<HmcOutcome> {
    check_shape(&state.field, params)?;
    let pot = params.site_potential(ActionForm::MassWick);
    let eps2 = params.torus.spacing().powi(2);
    let mut kin = match state.kinetic.take() {
        Some(k) if k.mass == params.mass && k.torus == params.torus => k,
        _ => Kinetic::new(params.mass, &params.torus),
    };
    let h0 = mass_wick_action(&state.field, params)?;
    for p in state.force.iter_mut() {
        *p = state.rng.sample(StandardNormal);
    }
    kin.apply(&state.force, &mut state.momenta, f64::sqrt);
    kin.apply(&state.momenta, &mut state.velocity, f64::recip);
    let k0 = kinetic_energy(&state.momenta, &state.velocity);
    let u: f64 = state.rng.random();
    let h = state.step_size * (1.0 + state.jitter * (2.0 * u - 1.0));

    let mut proposal = state.field.clone();
    gradient_into(&proposal, pot, eps2, &mut state.scratch, &mut state.force);
    for (p, f) in state.momenta.iter_mut().zip(&state.force) {
        *p -= 0.5 * h * f;
    }
    for step in 0..state.trajectory_steps {
        kin.apply(&state.momenta, &mut state.velocity, f64::recip);
        for (x, v) in proposal.values_mut().iter_mut().zip(&state.velocity) {
            *x += h * v;
        }
        gradient_into(&proposal, pot, eps2, &mut state.scratch, &mut state.force);
        let w = if step + 1 == state.trajectory_steps {
            0.5 * h
        } else {
            h
        };
        for (p, f) in state.momenta.iter_mut().zip(&state.force) {
            *p -= w * f;
        }
    }
    kin.apply(&state.momenta, &mut state.velocity, f64::recip);
    let k1 = kinetic_energy(&state.momenta, &state.velocity);
    state.kinetic = Some(kin);
    let finite = proposal.values().iter().all(|v| v.is_finite());
    let h1 = if finite {
        mass_wick_action(&proposal, params)? + k1
    } else {
        f64::NAN
    };
    let delta_h = h1 - (h0 + k0);
    let r: f64 = state.rng.random();
    state.stats.proposed += 1;
    state.stats.window_proposed += 1;
    state.sweep += 1;
    if !delta_h.is_finite() {
        state.stats.nonfinite += 1;
        return Ok(HmcOutcome {
            accepted: false,
            delta_h,
            nonfinite: true,
        });
    }
    let accepted = r < (-delta_h).exp();
    if accepted {
        proposal.metadata = state.field.metadata.clone();
        state.field = proposal;
        state.stats.accepted += 1;
        state.stats.window_accepted += 1;
    }
    Ok(HmcOutcome {
        accepted,
        delta_h,
        nonfinite: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    /// Site average of :‖Φ‖²: with C = C^m.
    WickNorm2,
    /// Site average of ‖Φ‖².
    Norm2,
    /// F = (1/4N)ε²Σ:‖Φ‖⁴:_m.
    QuarticAction,
    /// The sampled (m-Wick) action.
    Action,
    /// ‖L⁻²∫Φ‖², the squared magnetization.
    Magnetization2,
}

impl Observable {
    pub const ALL: [Observable; 5] = [
        Observable::WickNorm2,
        Observable::Norm2,
        Observable::QuarticAction,
        Observable::Action,
        Observable::Magnetization2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::WickNorm2 => "wick_norm2",
            Observable::Norm2 => "norm2",
            Observable::QuarticAction => "quartic_action",
            Observable::Action => "action",
            Observable::Magnetization2 => "magnetization2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }

    pub fn measure(&self, field: &FieldConfig, params: &ModelParams) -> Result<f64> {
        let sites = params.torus.sites() as f64;
        Ok(match self {
            Observable::WickNorm2 => {
                let nc = params.components as f64 * params.counterterm_mass;
                field.norm2_grid().iter().map(|s| s - nc).sum::<f64>() / sites
            }
            Observable::Norm2 => field.norm2_grid().iter().sum::<f64>() / sites,
            Observable::QuarticAction => quartic_action_full(field, &params.wick_context())?,
            Observable::Action => mass_wick_action(field, params)?,
            Observable::Magnetization2 => (0..field.components())
                .map(|c| (field.component(c).iter().sum::<f64>() / sites).powi(2))
                .sum(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub thermalization: u64,
    pub measurements: u64,
    pub stride: u64,
}

impl Schedule {
    pub fn new(thermalization: u64, measurements: u64, stride: u64) -> Result<Self> {
        if measurements == 0 || stride == 0 {
            return Err(Error::Domain(
                "measurements and stride must be positive".into(),
            ));
        }
        Ok(Self {
            thermalization,
            measurements,
            stride,
        })
    }

    pub fn total_sweeps(&self) -> u64 {
        self.thermalization + self.measurements * self.stride
    }
}

/// Called after each measured sweep.
pub struct Measurement<'a> {
    pub sweep: u64,
    pub values: &'a [f64],
    pub field: &'a FieldConfig,
    pub delta_h: f64,
}

const TUNE_WINDOW: u64 = 25;

/// Advance `state` through the schedule up to sweep `stop` (or the end).
/// During thermalization the step size is tuned towards 70–85% acceptance
/// at fixed trajectory time, then frozen. Everything depends on the state
/// alone, so a chain restored from a snapshot continues bit-identically.
pub fn advance_chain(
    state: &mut ChainState,
    params: &ModelParams,
    schedule: &Schedule,
    observables: &[Observable],
    stop: Option<u64>,
    mut sink: impl FnMut(Measurement<'_>) -> Result<()>,
) -> Result<()> {
    let end = stop.unwrap_or(u64::MAX).min(schedule.total_sweeps());
    let mut values = vec![0.0; observables.len()];
    while state.sweep < end {
        let thermal = state.sweep < schedule.thermalization;
        let out = hmc_step(state, params)?;
        if thermal {
            state
                .thermal_actions
                .push(mass_wick_action(&state.field, params)?);
            if state.stats.window_proposed == TUNE_WINDOW {
                let rate = state.stats.window_rate();
                let time = state.step_size * state.trajectory_steps as f64;
                // −ln(acceptance) grows like step⁴
                if !(0.70..=0.85).contains(&rate) {
                    let f = (0.775f64.ln() / rate.clamp(0.01, 0.99).ln()).powf(0.25);
                    state.step_size *= f.clamp(0.5, 1.2);
                }
                state.trajectory_steps = (time / state.step_size).round().max(1.0) as usize;
                state.stats.window_proposed = 0;
                state.stats.window_accepted = 0;
            }
            continue;
        }
        if state.sweep == schedule.thermalization + 1 {
            state.stats.window_proposed = 0;
            state.stats.window_accepted = 0;
        }
        if (state.sweep - schedule.thermalization) % schedule.stride == 0 {
            for (v, o) in values.iter_mut().zip(observables) {
                *v = o.measure(&state.field, params)?;
            }
            sink(Measurement {
                sweep: state.sweep,
                values: &values,
                field: &state.field,
                delta_h: out.delta_h,
            })?;
        }
    }
    Ok(())
}

/// Compares the means of the two quarters of the second half of the
/// thermalization action series; returns the separation in σ.
pub fn thermalization_drift(actions: &[f64]) -> Option<f64> {
    if actions.len() < 40 {
        return None;
    }
    let half = &actions[actions.len() / 2..];
    let (a, b) = half.split_at(half.len() / 2);
    let (ma, ea, _) = correlated_mean(a);
    let (mb, eb, _) = correlated_mean(b);
    let e = (ea * ea + eb * eb).sqrt();
    Some(if e > 0.0 { (ma - mb).abs() / e } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub error: f64,
    pub tau_int: f64,
    pub n_eff: f64,
}

impl Summary {
    pub fn of(series: &[f64]) -> Self {
        let (mean, error, ac) = correlated_mean(series);
        Self {
            mean,
            error,
            tau_int: ac.tau_int,
            n_eff: ac.n_eff,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub records: Vec<MeasurementRecord>,
    pub series: Vec<(Observable, Vec<f64>)>,
    pub summaries: Vec<(Observable, Summary)>,
    pub delta_h: Vec<f64>,
    /// Mean of exp(−ΔH) over measured trajectories; 1 for an exact sampler.
    pub exp_minus_delta_h: Summary,
    pub acceptance: f64,
    pub drift_sigmas: Option<f64>,
    /// False when the thermalization drift test exceeds 4σ.
    pub thermalized: bool,
    pub state: ChainState,
}

impl ChainRun {
    pub fn series(&self, o: Observable) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(k, _)| *k == o)
            .map(|(_, v)| v.as_slice())
    }

    pub fn summary(&self, o: Observable) -> Option<Summary> {
        self.summaries
            .iter()
            .find(|(k, _)| *k == o)
            .map(|(_, s)| *s)
    }
}

/// Run a chain from a fresh GFF start. `visit` sees every measured field.
pub fn run_chain_visiting(
    params: &ModelParams,
    schedule: &Schedule,
    observables: &[Observable],
    key: &StreamKey,
    mut visit: impl FnMut(&FieldConfig),
) -> Result<ChainRun> {
    let mut state = ChainState::initial(params, key)?;
    let mut series: Vec<Vec<f64>> =
        vec![Vec::with_capacity(schedule.measurements as usize); observables.len()];
    let mut records = Vec::new();
    let mut delta_h = Vec::with_capacity(schedule.measurements as usize);
    advance_chain(&mut state, params, schedule, observables, None, |m| {
        for ((s, v), o) in series.iter_mut().zip(m.values).zip(observables) {
            s.push(*v);
            records.push(MeasurementRecord::new(o.name(), m.sweep, *v, 0.0, 1.0));
        }
        delta_h.push(m.delta_h);
        visit(m.field);
        Ok(())
    })?;
    let summaries: Vec<(Observable, Summary)> = observables
        .iter()
        .zip(&series)
        .map(|(o, s)| (*o, Summary::of(s)))
        .collect();
    for (o, s) in &summaries {
        records.push(MeasurementRecord::new(
            format!("{}/mean", o.name()),
            state.sweep,
            s.mean,
            s.error,
            s.n_eff,
        ));
    }
    let boltz: Vec<f64> = delta_h
        .iter()
        .map(|d| (-d).exp())
        .filter(|v| v.is_finite())
        .collect();
    let exp_minus_delta_h = Summary::of(&boltz);
    records.push(MeasurementRecord::new(
        "exp_minus_delta_h/mean",
        state.sweep,
        exp_minus_delta_h.mean,
        exp_minus_delta_h.error,
        exp_minus_delta_h.n_eff,
    ));
    let drift_sigmas = thermalization_drift(&state.thermal_actions);
    Ok(ChainRun {
        records,
        series: observables.iter().copied().zip(series).collect(),
        summaries,
        delta_h,
        exp_minus_delta_h,
        acceptance: state.stats.window_rate(),
        drift_sigmas,
        thermalized: drift_sigmas.is_none_or(|s| s <= 4.0),
        state,
    })
}

pub fn run_chain(
    params: &ModelParams,
    schedule: &Schedule,
    observables: &[Observable],
    key: &StreamKey,
) -> Result<ChainRun> {
    run_chain_visiting(params, schedule, observables, key, |_| {})
}

/// E_μ[F] under the lattice GFF of mass m: (L²/4)(N+2)(G − C)² with G the site variance.
pub fn gaussian_quartic_mean(params: &ModelParams) -> f64 {
    let g = params.covariance().site_variance();
    let d = g - params.counterterm_mass;
    0.25 * params.torus.volume() * (params.components as f64 + 2.0) * d * d
}

/// Direct GFF estimate of E_μ[exp(−λF)] and of E_μ[F]: ((mean, se), (mean F, se F)).
pub fn direct_partition_estimate(
    params: &ModelParams,
    samples: usize,
    key: &StreamKey,
) -> Result<((f64, f64), (f64, f64))> {
    if samples < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: samples,
        });
    }
    let ctx = params.wick_context();
    let mut sampler = GffSampler::new(&params.covariance());
    let mut rng = key.rng();
    let mut w = crate::stats::RunningStats::new();
    let mut f = crate::stats::RunningStats::new();
    for _ in 0..samples {
        let field = sampler.sample(params.components, &mut rng);
        let q = quartic_action_full(&field, &ctx)?;
        w.push((-params.lambda * q).exp());
        f.push(q);
    }
    Ok(((w.mean(), w.std_error()), (f.mean(), f.std_error())))
}

/// Coupling nodes 0, λ/2^{k}, …, λ/2, 3λ/4, λ: geometric towards 0 plus one
/// refinement next to the endpoint.
pub fn geometric_lambda_grid(lambda: f64, levels: u32) -> Vec<f64> {
    let mut g = vec![0.0];
    for k in (1..=levels).rev() {
        g.push(lambda / 2f64.powi(k as i32));
    }
    if levels >= 1 {
        g.push(0.75 * lambda);
    }
    g.push(lambda);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiNode {
    pub lambda: f64,
    /// E_{ν_s}[F]
    pub mean_f: f64,
    pub error: f64,
    /// Var_{ν_s}(F) = −d/ds E_{ν_s}[F]
    pub var_f: f64,
    pub var_error: f64,
    pub tau_int: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoIntegration {
    pub nodes: Vec<TiNode>,
    /// (λ_k, log Z(λ_k), error) at every node.
    pub cumulative: Vec<(f64, f64, f64)>,
    pub log_z: f64,
    pub error: f64,
    pub log_z_per_volume: f64,
    pub error_per_volume: f64,
    /// The same integral on every other node.
    pub coarse_log_z: f64,
    pub refinement_sigmas: f64,
    pub volume: f64,
}

/// ∫_a^b f with endpoint values and derivatives (corrected trapezoid):
/// h/2 (f_a + f_b) + h²/12 (f'_a − f'_b).
fn hermite_panel(a: &TiNode, b: &TiNode) -> (f64, f64) {
    let h = b.lambda - a.lambda;
    // f' = −Var
    let v = 0.5 * h * (a.mean_f + b.mean_f) + h * h / 12.0 * (b.var_f - a.var_f);
    let e2 = (0.5 * h).powi(2) * (a.error.powi(2) + b.error.powi(2))
        + (h * h / 12.0).powi(2) * (a.var_error.powi(2) + b.var_error.powi(2));
    (v, e2)
}

fn integrate_nodes(nodes: &[TiNode]) -> (f64, f64) {
    // node errors are independent, but neighbouring panels share a node; combine by weights
    let mut value = 0.0;
    let mut w = vec![0.0; nodes.len()];
    let mut wv = vec![0.0; nodes.len()];
    for (i, p) in nodes.windows(2).enumerate() {
        value += hermite_panel(&p[0], &p[1]).0;
        let h = p[1].lambda - p[0].lambda;
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
        wv[i] -= h * h / 12.0;
        wv[i + 1] += h * h / 12.0;
    }
    let e2: f64 = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (w[i] * n.error).powi(2) + (wv[i] * n.var_error).powi(2))
        .sum();
    (value, e2.sqrt())
}

fn node_estimate(params: &ModelParams, schedule: &Schedule, key: &StreamKey) -> Result<TiNode> {
    let run = run_chain(params, schedule, &[Observable::QuarticAction], key)?;
    let series = run.series(Observable::QuarticAction).expect("measured");
    let s = Summary::of(series);
    let (var_f, var_error) = variance_with_error(series);
    let (mean_f, error) = if params.lambda == 0.0 {
        (gaussian_quartic_mean(params), 0.0)
    } else {
        (s.mean, s.error)
    };
    Ok(TiNode {
        lambda: params.lambda,
        mean_f,
        error,
        var_f,
        var_error,
        tau_int: s.tau_int,
    })
}

/// Sample variance with an autocorrelation-corrected error from the series of squared deviations.
fn variance_with_error(series: &[f64]) -> (f64, f64) {
    let m = crate::stats::mean(series);
    let sq: Vec<f64> = series.iter().map(|x| (x - m).powi(2)).collect();
    let (v, e, _) = correlated_mean(&sq);
    (v, e)
}

/// log Z(λ) = log E_{μ_m}[exp(−λF)] = −∫₀^λ E_{ν_s}[F] ds at fixed mass m, with
/// one independent chain per node. Nodes run in parallel.
pub fn thermo_integrate_log_z(
    base: &ModelParams,
    lambda_grid: &[f64],
    schedule: &Schedule,
    key: &StreamKey,
) -> Result<ThermoIntegration> {
    if lambda_grid.len() < 3 || lambda_grid[0] != 0.0 {
        return Err(Error::Domain(
            "the coupling grid must start at 0 and have at least 3 nodes".into(),
        ));
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "the coupling grid must be strictly increasing".into(),
        ));
    }
    let nodes: Vec<TiNode> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            node_estimate(
                &base.at_coupling(s)?,
                schedule,
                &key.with_chain(key.chain + i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cumulative = vec![(0.0, 0.0, 0.0)];
    for k in 1..nodes.len() {
        let (v, e) = integrate_nodes(&nodes[..=k]);
        cumulative.push((nodes[k].lambda, -v, e));
    }
    let (v, e) = integrate_nodes(&nodes);
    let coarse: Vec<TiNode> = nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 2 == 0 || *i == nodes.len() - 1)
        .map(|(_, n)| *n)
        .collect();
    let (cv, ce) = integrate_nodes(&coarse);
    let sig = (e * e + ce * ce).sqrt();
    let refinement_sigmas = if sig > 0.0 { (v - cv).abs() / sig } else { 0.0 };
    if refinement_sigmas > 3.0 {
        return Err(Error::RefinementRequired {
            sigmas: refinement_sigmas,
        });
    }
    let vol = base.torus.volume();
    Ok(ThermoIntegration {
        nodes,
        cumulative,
        log_z: -v,
        error: e,
        log_z_per_volume: -v / vol,
        error_per_volume: e / vol,
        coarse_log_z: -cv,
        refinement_sigmas,
        volume: vol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub error: f64,
    pub per_volume: f64,
    pub error_per_volume: f64,
    pub log_z: f64,
    pub mean_f: f64,
}

/// H(ν | μ_m^⊗N) = −λE_ν[F] − log Z from a completed integration.
pub fn relative_entropy_from(ti: &ThermoIntegration) -> EntropyEstimate {
    let last = ti.nodes.last().expect("at least three nodes");
    let lambda = last.lambda;
    // H = ∫₀^λ f − λ f(λ): same weights as log Z with −λ added on the last node
    let n = ti.nodes.len();
    let mut w = vec![0.0; n];
    let mut wv = vec![0.0; n];
    for (i, p) in ti.nodes.windows(2).enumerate() {
        let h = p[1].lambda - p[0].lambda;
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
        wv[i] -= h * h / 12.0;
        wv[i + 1] += h * h / 12.0;
    }
    w[n - 1] -= lambda;
    let value = -ti.log_z - lambda * last.mean_f;
    let e2: f64 = ti
        .nodes
        .iter()
        .enumerate()
        .map(|(i, nd)| (w[i] * nd.error).powi(2) + (wv[i] * nd.var_error).powi(2))
        .sum();
    let error = e2.sqrt();
    let vol = ti.volume;
    EntropyEstimate {
        value,
        error,
        per_volume: value / vol,
        error_per_volume: error / vol,
        log_z: ti.log_z,
        mean_f: last.mean_f,
    }
}

pub fn estimate_relative_entropy(
    params: &ModelParams,
    lambda_grid: &[f64],
    schedule: &Schedule,
    key: &StreamKey,
) -> Result<EntropyEstimate> {
    if params.lambda == 0.0 {
        return Ok(EntropyEstimate {
            value: 0.0,
            error: 0.0,
            per_volume: 0.0,
            error_per_volume: 0.0,
            log_z: 0.0,
            mean_f: gaussian_quartic_mean(params),
        });
    }
    if (lambda_grid.last().copied().unwrap_or(0.0) - params.lambda).abs() > 1e-12 * params.lambda {
        return Err(Error::Domain(
            "the coupling grid must end at the model coupling".into(),
        ));
    }
    let ti = thermo_integrate_log_z(params, lambda_grid, schedule, key)?;
    Ok(relative_entropy_from(&ti))
}
