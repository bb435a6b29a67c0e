//! Torus geometry, momentum lattices, the smooth cutoff and the spectral sums
//! (counterterms, Green's functions, H^{-1} pairings) everything else builds on.
//!
//! Conventions, fixed for every module and for checkpoints:
//!
//! * Sites are `x = ε·(a, b)` with `a, b ∈ 0..n`, stored row-major (`a·n + b`).
//! * Modes use FFT storage order: grid index `j ∈ 0..n` maps to the signed
//!   integer `k = j` for `j ≤ n/2` and `k = j − n` otherwise, so
//!   `k ∈ {−n/2+1, …, n/2}` and `ξ = (2π/L)·k`. Mode grids are row-major in `j`.
//! * Forward transform: `Φ̂(ξ) = ε² Σ_x Φ(x) e^{−iξ·x}`.
//!   Inverse transform: `Φ(x) = L⁻² Σ_ξ Φ̂(ξ) e^{iξ·x}`.
//!   Parseval then reads `ε² Σ_x |Φ(x)|² = L⁻² Σ_ξ |Φ̂(ξ)|²`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    side_length: f64,
    grid_points: usize,
}

impl TorusSpec {
    pub fn new(side_length: f64, grid_points: usize) -> Result<Self> {
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::InvalidTorus(format!(
                "side length must be positive, got {side_length}"
            )));
        }
        if grid_points < 4 || grid_points % 2 != 0 {
            return Err(Error::InvalidTorus(format!(
                "grid points must be even and >= 4, got {grid_points}"
            )));
        }
        Ok(Self {
            side_length,
            grid_points,
        })
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    /// ε = L/n.
    pub fn spacing(&self) -> f64 {
        self.side_length / self.grid_points as f64
    }

    /// L².
    pub fn volume(&self) -> f64 {
        self.side_length * self.side_length
    }

    pub fn sites(&self) -> usize {
        self.grid_points * self.grid_points
    }

    /// 2π/L.
    pub fn momentum_unit(&self) -> f64 {
        2.0 * PI / self.side_length
    }

    pub fn signed_mode(&self, j: usize) -> i64 {
        let n = self.grid_points;
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Storage index of a (possibly out of range) integer mode, reduced mod n.
    pub fn mode_index(&self, k: [i64; 2]) -> usize {
        let n = self.grid_points as i64;
        let j0 = k[0].rem_euclid(n) as usize;
        let j1 = k[1].rem_euclid(n) as usize;
        j0 * self.grid_points + j1
    }

    /// ξ̂² = (4/ε²) Σ sin²(ε ξ_i / 2).
    pub fn lattice_symbol(&self, xi: [f64; 2]) -> f64 {
        let eps = self.spacing();
        let s0 = (0.5 * eps * xi[0]).sin();
        let s1 = (0.5 * eps * xi[1]).sin();
        4.0 / (eps * eps) * (s0 * s0 + s1 * s1)
    }
}

impl fmt::Display for TorusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} n={} eps={}",
            self.side_length,
            self.grid_points,
            self.spacing()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: [i64; 2],
    pub xi: [f64; 2],
    /// |ξ|²
    pub continuum: f64,
    /// η(ε|ξ|), the weight paired with |ξ|² under the smooth cutoff.
    pub eta: f64,
    /// ξ̂²
    pub lattice: f64,
}

#[derive(Debug, Clone)]
pub struct FrequencyLattice {
    torus: TorusSpec,
    modes: Vec<Mode>,
}

impl FrequencyLattice {
    pub fn torus(&self) -> &TorusSpec {
        &self.torus
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

pub fn build_frequency_lattice(torus: &TorusSpec) -> FrequencyLattice {
    let n = torus.grid_points();
    let unit = torus.momentum_unit();
    let eps = torus.spacing();
    let mut modes = Vec::with_capacity(n * n);
    for j0 in 0..n {
        for j1 in 0..n {
            let k = [torus.signed_mode(j0), torus.signed_mode(j1)];
            let xi = [unit * k[0] as f64, unit * k[1] as f64];
            let continuum = xi[0] * xi[0] + xi[1] * xi[1];
            modes.push(Mode {
                k,
                xi,
                continuum,
                eta: cutoff_eta(eps * continuum.sqrt()),
                lattice: torus.lattice_symbol(xi),
            });
        }
    }
    FrequencyLattice {
        torus: *torus,
        modes,
    }
}

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// The smooth radial cutoff: 1 on [0, 1/2], 0 on [1, ∞), and the standard
/// C^∞ partition `φ(2−2r)/(φ(2−2r)+φ(2r−1))`, `φ(t) = e^{−1/t}`, in between.
pub fn cutoff_eta(r: f64) -> f64 {
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        let a = bump(2.0 - 2.0 * r);
        let b = bump(2.0 * r - 1.0);
        a / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountertermKind {
    /// L⁻² Σ_{ξ ∈ Λ*_L} η(ε|ξ|)² / (m² + |ξ|²), finite because η truncates.
    CutoffEta,
    /// L⁻² Σ_{grid modes} 1 / (m² + ξ̂²): the exact site variance of the lattice GFF.
    LatticeTadpole,
}

impl CountertermKind {
    pub fn name(&self) -> &'static str {
        match self {
            CountertermKind::CutoffEta => "cutoff-eta",
            CountertermKind::LatticeTadpole => "lattice-tadpole",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cutoff-eta" => Some(CountertermKind::CutoffEta),
            "lattice-tadpole" => Some(CountertermKind::LatticeTadpole),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountertermScheme {
    pub kind: CountertermKind,
    reference_mass: f64,
}

impl CountertermScheme {
    pub fn new(kind: CountertermKind, reference_mass: f64) -> Result<Self> {
        if !(reference_mass.is_finite() && reference_mass > 0.0) {
            return Err(Error::Domain(format!(
                "reference mass must be positive, got {reference_mass}"
            )));
        }
        Ok(Self {
            kind,
            reference_mass,
        })
    }

    pub fn reference_mass(&self) -> f64 {
        self.reference_mass
    }

    pub fn value(&self, torus: &TorusSpec) -> f64 {
        counterterm(self.reference_mass, torus, self.kind)
    }
}

/// Sum of `weight(ξ, η(eps|ξ|))` over the infinite momentum lattice of side `l`,
/// restricted to the support of η (|ξ| < 1/eps).
pub(crate) fn cutoff_lattice_sum(
    l: f64,
    eps: f64,
    mut weight: impl FnMut([f64; 2], f64) -> f64,
) -> f64 {
    let unit = 2.0 * PI / l;
    let kmax = (1.0 / (eps * unit)).floor() as i64 + 1;
    let mut total = 0.0;
    for k0 in -kmax..=kmax {
        for k1 in -kmax..=kmax {
            let xi = [unit * k0 as f64, unit * k1 as f64];
            let r = eps * (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            if r >= 1.0 {
                continue;
            }
            total += weight(xi, cutoff_eta(r));
        }
    }
    total
}

/// Cutoff-scheme counterterm with an explicit cutoff scale, independent of any grid.
pub fn cutoff_counterterm(m: f64, side_length: f64, eps: f64) -> f64 {
    assert!(m > 0.0 && eps > 0.0, "mass and cutoff must be positive");
    let m2 = m * m;
    let sum = cutoff_lattice_sum(side_length, eps, |xi, eta| {
        eta * eta / (m2 + xi[0] * xi[0] + xi[1] * xi[1])
    });
    sum / (side_length * side_length)
}

/// Lattice tadpole L⁻² Σ_grid 1/(m² + ξ̂²).
pub fn lattice_tadpole(m: f64, torus: &TorusSpec) -> f64 {
    assert!(m > 0.0, "mass must be positive");
    let m2 = m * m;
    let lattice = build_frequency_lattice(torus);
    lattice
        .modes()
        .iter()
        .map(|md| 1.0 / (m2 + md.lattice))
        .sum::<f64>()
        / torus.volume()
}

/// The Wick counterterm C at mass `m`. The cutoff scheme uses ε = torus spacing.
pub fn counterterm(m: f64, torus: &TorusSpec, kind: CountertermKind) -> f64 {
    match kind {
        CountertermKind::CutoffEta => cutoff_counterterm(m, torus.side_length(), torus.spacing()),
        CountertermKind::LatticeTadpole => lattice_tadpole(m, torus),
    }
}

/// G_{ε1,ε2}(z) = L⁻² Σ_ξ η(ε1|ξ|) η(ε2|ξ|) cos(ξ·z) / (m² + |ξ|²).
pub fn greens_function(
    m: f64,
    torus: &TorusSpec,
    eps1: f64,
    eps2: f64,
    displacement: [f64; 2],
) -> f64 {
    assert!(m > 0.0 && eps1 > 0.0 && eps2 > 0.0);
    let m2 = m * m;
    let l = torus.side_length();
    let sum = cutoff_lattice_sum(l, eps1.max(eps2), |xi, _| {
        let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        let w = cutoff_eta(eps1 * r) * cutoff_eta(eps2 * r);
        w * (xi[0] * displacement[0] + xi[1] * displacement[1]).cos() / (m2 + r * r)
    });
    sum / (l * l)
}

/// Exact lattice GFF covariance between sites separated by `sites` lattice steps:
/// L⁻² Σ_grid cos(ξ·z) / (m² + ξ̂²), z = ε·sites.
pub fn lattice_propagator(m: f64, torus: &TorusSpec, sites: [i64; 2]) -> f64 {
    let m2 = m * m;
    let eps = torus.spacing();
    let z = [eps * sites[0] as f64, eps * sites[1] as f64];
    let lattice = build_frequency_lattice(torus);
    lattice
        .modes()
        .iter()
        .map(|md| (md.xi[0] * z[0] + md.xi[1] * z[1]).cos() / (m2 + md.lattice))
        .sum::<f64>()
        / torus.volume()
}

/// ⟨φ, ψ⟩ in H^{-1}_m(Λ_L)^N with the continuum symbol, summed over grid modes.
/// Both slices hold N component grids back to back.
pub fn hminus1_inner(phi: &[f64], psi: &[f64], m: f64, torus: &TorusSpec) -> Result<f64> {
    let sites = torus.sites();
    if phi.len() != psi.len() {
        return Err(Error::Dimension {
            expected: phi.len(),
            found: psi.len(),
        });
    }
    if phi.is_empty() || phi.len() % sites != 0 {
        return Err(Error::Dimension {
            expected: sites,
            found: phi.len(),
        });
    }
    let m2 = m * m;
    let lattice = build_frequency_lattice(torus);
    let fft = Fft2::new(torus);
    let mut total = 0.0;
    for (a, b) in phi.chunks(sites).zip(psi.chunks(sites)) {
        let fa = fft.forward(a);
        let fb = fft.forward(b);
        for ((x, y), md) in fa.iter().zip(&fb).zip(lattice.modes()) {
            total += (x * y.conj()).re / (m2 + md.continuum);
        }
    }
    Ok(total / torus.volume())
}

/// Two-dimensional transform pair in the normalization documented at the top
/// of this module. Every even n is supported.
#[derive(Clone)]
pub struct Fft2 {
    torus: TorusSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("torus", &self.torus).finish()
    }
}

impl Fft2 {
    pub fn new(torus: &TorusSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = torus.grid_points();
        Self {
            torus: *torus,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn torus(&self) -> &TorusSpec {
        &self.torus
    }

    fn transform_2d(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let n = self.torus.grid_points();
        plan.process(data);
        transpose_square(data, n);
        plan.process(data);
        transpose_square(data, n);
    }

    /// Φ̂ = ε² · DFT(Φ).
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        assert_eq!(field.len(), self.torus.sites());
        let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data);
        data
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.torus.sites());
        self.transform_2d(&self.forward, data);
        let eps = self.torus.spacing();
        let scale = eps * eps;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Φ = L⁻² · IDFT(Φ̂), unnormalized inverse DFT.
    pub fn inverse(&self, modes: &[Complex64]) -> Vec<Complex64> {
        let mut data = modes.to_vec();
        self.inverse_in_place(&mut data);
        data
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.torus.sites());
        self.transform_2d(&self.inverse, data);
        let scale = 1.0 / self.torus.volume();
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Inverse transform of a conjugate-symmetric mode grid; the imaginary
    /// residue is discarded.
    pub fn inverse_real(&self, modes: &[Complex64]) -> Vec<f64> {
        self.inverse(modes).into_iter().map(|z| z.re).collect()
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Conjugate-symmetric bookkeeping for real fields: the four self-conjugate
/// modes (each component of k in {0, n/2}) and one representative per pair
/// {k, −k}. Sampler, exponential moments and entropy sums all iterate this.
#[derive(Debug, Clone)]
pub struct HalfSpectrum {
    pub self_conjugate: Vec<usize>,
    /// (representative, partner) storage indices with representative < partner.
    pub pairs: Vec<(usize, usize)>,
}

impl HalfSpectrum {
    pub fn new(torus: &TorusSpec) -> Self {
        let n = torus.grid_points();
        let mut self_conjugate = Vec::with_capacity(4);
        let mut pairs = Vec::with_capacity(n * n / 2);
        for j0 in 0..n {
            for j1 in 0..n {
                let idx = j0 * n + j1;
                let partner = ((n - j0) % n) * n + (n - j1) % n;
                if partner == idx {
                    self_conjugate.push(idx);
                } else if idx < partner {
                    pairs.push((idx, partner));
                }
            }
        }
        Self {
            self_conjugate,
            pairs,
        }
    }

    /// Σ over all modes of `f(index)` evaluated once per pair with weight 2.
    pub fn weighted_sum(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let singles: f64 = self.self_conjugate.iter().map(|&i| f(i)).sum();
        let doubles: f64 = self.pairs.iter().map(|&(i, _)| f(i)).sum();
        singles + 2.0 * doubles
    }
}

/// Upper bound on Σ_{k ∈ ℤ², |k| ≥ r} |k|⁻⁴, valid for r ≥ 1.
pub fn inverse_quartic_tail(r: f64) -> f64 {
    assert!(r >= 1.0);
    let d = std::f64::consts::FRAC_1_SQRT_2;
    (1.0 + d / r).powi(4) * PI / ((r - d) * (r - d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus(l: f64, n: usize) -> TorusSpec {
        TorusSpec::new(l, n).unwrap()
    }

    #[test]
    fn torus_validation() {
        assert!(TorusSpec::new(1.0, 2).is_err());
        assert!(TorusSpec::new(1.0, 7).is_err());
        assert!(TorusSpec::new(0.0, 8).is_err());
        assert!(TorusSpec::new(f64::NAN, 8).is_err());
        let t = torus(2.0, 8);
        assert_eq!(t.spacing(), 0.25);
    }

    #[test]
    fn unit_momentum_lattice_has_integer_frequencies() {
        let t = torus(2.0 * PI, 4);
        let lat = build_frequency_lattice(&t);
        assert_eq!(lat.len(), 16);
        let m = lat.modes().iter().find(|m| m.k == [1, 0]).unwrap();
        assert_relative_eq!(m.continuum, 1.0, epsilon = 1e-14);
        let ks: Vec<i64> = (0..4).map(|j| t.signed_mode(j)).collect();
        assert_eq!(ks, vec![0, 1, 2, -1]);
    }

    #[test]
    fn zero_mode_has_vanishing_symbols() {
        for (l, n) in [(1.0, 4), (3.7, 10), (8.0, 32)] {
            let lat = build_frequency_lattice(&torus(l, n));
            let z = lat.modes()[0];
            assert_eq!(z.k, [0, 0]);
            assert_eq!(z.continuum, 0.0);
            assert_eq!(z.lattice, 0.0);
        }
    }

    #[test]
    fn nyquist_lattice_symbol() {
        let t = torus(2.0 * PI, 4);
        let lat = build_frequency_lattice(&t);
        let m = lat.modes().iter().find(|m| m.k == [2, 0]).unwrap();
        // (4/ε²) sin²(π/2) with ε = π/2
        assert_relative_eq!(m.lattice, 16.0 / (PI * PI), epsilon = 1e-13);
        assert_relative_eq!(m.lattice, 1.621_138_938_277_404_4, epsilon = 1e-12);
    }

    #[test]
    fn lattice_symbol_below_continuum_except_zero_mode() {
        for (l, n) in [(1.0, 4), (5.0, 12), (8.0, 32)] {
            for m in build_frequency_lattice(&torus(l, n)).modes() {
                if m.k == [0, 0] {
                    continue;
                }
                assert!(m.lattice < m.continuum, "{:?}", m);
            }
        }
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff_eta(0.25), 1.0);
        assert_eq!(cutoff_eta(0.5), 1.0);
        assert_eq!(cutoff_eta(1.5), 0.0);
        assert_eq!(cutoff_eta(1.0), 0.0);
        assert_relative_eq!(cutoff_eta(0.75), 0.5, epsilon = 1e-15);
        let mut prev = 1.0;
        for i in 1..200 {
            let r = 0.5 + 0.5 * i as f64 / 200.0;
            let v = cutoff_eta(r);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            if (0.6..0.9).contains(&r) {
                assert!(v < prev);
            }
            prev = v;
        }
    }

    #[test]
    fn lattice_tadpole_matches_enumerated_oracle() {
        let t = torus(2.0 * PI, 4);
        // ε = π/2: ξ̂² = (16/π²)(sin²(πk0/4) + sin²(πk1/4)) over k ∈ {-1,0,1,2}².
        let mut oracle = 0.0;
        for k0 in [-1i32, 0, 1, 2] {
            for k1 in [-1i32, 0, 1, 2] {
                let s0 = (PI * k0 as f64 / 4.0).sin().powi(2);
                let s1 = (PI * k1 as f64 / 4.0).sin().powi(2);
                oracle += 1.0 / (1.0 + 16.0 / (PI * PI) * (s0 + s1));
            }
        }
        oracle /= (2.0 * PI).powi(2);
        assert_relative_eq!(
            counterterm(1.0, &t, CountertermKind::LatticeTadpole),
            oracle,
            max_relative = 1e-14
        );
    }

    #[test]
    fn counterterms_strictly_decrease_in_mass() {
        let t = torus(4.0, 16);
        for kind in [CountertermKind::CutoffEta, CountertermKind::LatticeTadpole] {
            let vals: Vec<f64> = [0.2, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&m| counterterm(m, &t, kind))
                .collect();
            for w in vals.windows(2) {
                assert!(w[0] > w[1], "{kind:?}: {vals:?}");
            }
        }
    }

    #[test]
    fn cutoff_counterterm_grows_logarithmically() {
        let values: Vec<f64> = (3..=7)
            .map(|p| {
                let n = 4 * (1usize << p);
                counterterm(1.0, &torus(4.0, n), CountertermKind::CutoffEta)
            })
            .collect();
        let expected = 2f64.ln() / (2.0 * PI);
        for w in values.windows(2) {
            let inc = w[1] - w[0];
            assert!(inc > 0.0);
            assert!(
                (inc - expected).abs() < 0.15 * expected,
                "increment {inc} vs {expected}"
            );
        }
    }

    #[test]
    fn greens_function_reduces_to_counterterm_at_origin() {
        let t = torus(4.0, 16);
        let eps = t.spacing();
        let g0 = greens_function(1.0, &t, eps, eps, [0.0, 0.0]);
        let c = counterterm(1.0, &t, CountertermKind::CutoffEta);
        assert_relative_eq!(g0, c, max_relative = 1e-13);
        let g1 = greens_function(1.0, &t, eps, eps, [1.0, 0.0]);
        assert!(g1 > 0.0 && g1 < c, "g1={g1} c={c}");
    }

    #[test]
    fn greens_function_parity_and_maximum() {
        let t = torus(4.0, 16);
        let e = 0.25;
        let g0 = greens_function(0.7, &t, e, 0.5, [0.0, 0.0]);
        for i in -4..=4 {
            for j in -4..=4 {
                let d = [0.5 * i as f64, 0.5 * j as f64];
                let g = greens_function(0.7, &t, e, 0.5, d);
                let gm = greens_function(0.7, &t, e, 0.5, [-d[0], -d[1]]);
                assert_relative_eq!(g, gm, epsilon = 1e-14);
                if i != 0 || j != 0 {
                    assert!(g < g0);
                }
            }
        }
    }

    #[test]
    fn hminus1_of_constants_only_sees_zero_mode() {
        let t = torus(3.0, 8);
        let c = 1.7;
        let phi = vec![c; t.sites()];
        let ip = hminus1_inner(&phi, &phi, 0.8, &t).unwrap();
        assert_relative_eq!(ip, c * c * 9.0 / 0.64, max_relative = 1e-13);
    }

    #[test]
    fn hminus1_bilinear_and_orthogonal() {
        let t = torus(3.0, 8);
        let eps = t.spacing();
        let site = |a: usize, b: usize| [eps * a as f64, eps * b as f64];
        let unit = t.momentum_unit();
        let mut cos1 = vec![0.0; t.sites()];
        let mut cos2 = vec![0.0; t.sites()];
        for a in 0..8 {
            for b in 0..8 {
                let x = site(a, b);
                cos1[a * 8 + b] = (unit * x[0]).cos();
                cos2[a * 8 + b] = (2.0 * unit * x[1]).cos();
            }
        }
        assert!(hminus1_inner(&cos1, &cos2, 1.0, &t).unwrap().abs() < 1e-13);
        let base = hminus1_inner(&cos1, &cos1, 1.0, &t).unwrap();
        let doubled: Vec<f64> = cos1.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(
            hminus1_inner(&doubled, &cos1, 1.0, &t).unwrap(),
            2.0 * base,
            max_relative = 1e-13
        );
        assert!(hminus1_inner(&cos1, &cos2[..10], 1.0, &t).is_err());
    }

    #[test]
    fn fft_delta_is_flat() {
        let t = torus(2.0, 8);
        let fft = Fft2::new(&t);
        let mut delta = vec![0.0; 64];
        delta[0] = 1.0;
        let eps2 = t.spacing().powi(2);
        for z in fft.forward(&delta) {
            assert_relative_eq!(z.re, eps2, epsilon = 1e-15);
            assert!(z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn fft_round_trip_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..100 {
            let n = [4, 6, 8, 16, 32][trial % 5];
            let t = torus(1.0 + trial as f64 * 0.1, n);
            let fft = Fft2::new(&t);
            let f: Vec<f64> = (0..t.sites())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let back = fft.inverse(&fft.forward(&f));
            let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = f
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b.re).powi(2) + b.im.powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-12 * norm, "trial {trial}: {err}");
        }
    }

    #[test]
    fn parseval_against_direct_dft() {
        let t = torus(2.5, 8);
        let n = 8;
        let eps = t.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = Fft2::new(&t).forward(&f);
        let lat = build_frequency_lattice(&t);
        let mut mode_norm = 0.0;
        for (idx, md) in lat.modes().iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let phase = -(md.xi[0] * eps * a as f64 + md.xi[1] * eps * b as f64);
                    acc += f[a * n + b] * Complex64::from_polar(1.0, phase);
                }
            }
            acc *= eps * eps;
            assert!((acc - fast[idx]).norm() < 1e-13);
            mode_norm += acc.norm_sqr();
        }
        let grid_norm: f64 = eps * eps * f.iter().map(|v| v * v).sum::<f64>();
        assert_relative_eq!(grid_norm, mode_norm / t.volume(), max_relative = 1e-13);
    }

    #[test]
    fn half_spectrum_covers_every_mode_once() {
        for n in [4, 6, 8, 10] {
            let t = torus(1.0, n);
            let hs = HalfSpectrum::new(&t);
            assert_eq!(hs.self_conjugate.len(), 4);
            assert_eq!(hs.self_conjugate.len() + 2 * hs.pairs.len(), n * n);
            let mut seen = vec![0; n * n];
            for &i in &hs.self_conjugate {
                seen[i] += 1;
            }
            for &(a, b) in &hs.pairs {
                seen[a] += 1;
                seen[b] += 1;
                let lat = build_frequency_lattice(&t);
                let ka = lat.modes()[a].k;
                assert_eq!(t.mode_index([-ka[0], -ka[1]]), b);
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn quartic_tail_bound_dominates_direct_sum() {
        for r in [2.0f64, 5.0, 20.0] {
            let mut direct = 0.0;
            let kmax = 2000i64;
            for k0 in -kmax..=kmax {
                for k1 in -kmax..=kmax {
                    let q = (k0 * k0 + k1 * k1) as f64;
                    if q >= r * r {
                        direct += 1.0 / (q * q);
                    }
                }
            }
            assert!(direct < inverse_quartic_tail(r));
            assert!(inverse_quartic_tail(r) < 8.0 * direct);
        }
    }
}
