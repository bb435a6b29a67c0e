//! Hermite polynomials, Wick powers of the N-component field, the quartic
//! interaction and its exact Gaussian covariances.

use crate::error::{Error, Result};
use crate::gff::{FieldConfig, GffSampler, SpectralCovariance};
use crate::spectral::{cutoff_eta, greens_function, CountertermScheme, Fft2, TorusSpec};
use crate::stats::RunningStats;
use num_complex::Complex64;
use rand::Rng;

/// Probabilists' Hermite polynomials H₁..H₄ (leading coefficient +1).
pub fn hermite(order: u32, z: f64) -> Result<f64> {
    match order {
        1 => Ok(z),
        2 => Ok(z * z - 1.0),
        3 => Ok(z * z * z - 3.0 * z),
        4 => {
            let z2 = z * z;
            Ok(z2 * z2 - 6.0 * z2 + 3.0)
        }
        _ => Err(Error::Domain(format!(
            "Hermite order must be in 1..=4, got {order}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WickContext {
    counterterm: f64,
    components: usize,
    pub scheme: Option<CountertermScheme>,
}

impl WickContext {
    pub fn new(counterterm: f64, components: usize) -> Result<Self> {
        if !(counterterm.is_finite() && counterterm >= 0.0) {
            return Err(Error::Domain(format!(
                "counterterm must be >= 0, got {counterterm}"
            )));
        }
        if components == 0 {
            return Err(Error::Domain("at least one component is required".into()));
        }
        Ok(Self {
            counterterm,
            components,
            scheme: None,
        })
    }

    /// Context whose counterterm is the scheme's value on `torus`.
    pub fn from_scheme(
        scheme: CountertermScheme,
        torus: &TorusSpec,
        components: usize,
    ) -> Result<Self> {
        let mut ctx = Self::new(scheme.value(torus), components)?;
        ctx.scheme = Some(scheme);
        Ok(ctx)
    }

    pub fn counterterm(&self) -> f64 {
        self.counterterm
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

fn check_components(field: &FieldConfig, ctx: &WickContext) -> Result<()> {
    if field.components() != ctx.components {
        return Err(Error::Dimension {
            expected: ctx.components,
            found: field.components(),
        });
    }
    Ok(())
}

/// :‖Φ(x)‖²: = ‖Φ(x)‖² − N·C.
pub fn wick_norm2(field: &FieldConfig, ctx: &WickContext) -> Result<Vec<f64>> {
    check_components(field, ctx)?;
    let shift = ctx.components as f64 * ctx.counterterm;
    Ok(field.norm2_grid().into_iter().map(|s| s - shift).collect())
}

/// :‖Φ‖⁴: evaluated at a single site from s = ‖Φ‖².
#[inline]
pub fn wick_norm4_value(s: f64, c: f64, n: usize) -> f64 {
    let nf = n as f64;
    s * s - c * (2.0 * nf + 4.0) * s + c * c * (nf * nf + 2.0 * nf)
}

/// :‖Φ(x)‖⁴: = ‖Φ‖⁴ − C(2N+4)‖Φ‖² + C²(N² + 2N).
pub fn wick_norm4(field: &FieldConfig, ctx: &WickContext) -> Result<Vec<f64>> {
    check_components(field, ctx)?;
    Ok(field
        .norm2_grid()
        .into_iter()
        .map(|s| wick_norm4_value(s, ctx.counterterm, ctx.components))
        .collect())
}

/// (1/4N) ε² Σ_{x ∈ region} :‖Φ(x)‖⁴:. `region` is a site mask of length n².
pub fn quartic_action(field: &FieldConfig, ctx: &WickContext, region: &[bool]) -> Result<f64> {
    let sites = field.torus().sites();
    if region.len() != sites {
        return Err(Error::Dimension {
            expected: sites,
            found: region.len(),
        });
    }
    if !region.iter().any(|&r| r) {
        return Err(Error::Domain("empty integration region".into()));
    }
    let w = wick_norm4(field, ctx)?;
    let eps2 = field.torus().spacing().powi(2);
    let sum: f64 = w
        .iter()
        .zip(region)
        .filter(|(_, &r)| r)
        .map(|(v, _)| v)
        .sum();
    Ok(eps2 * sum / (4.0 * ctx.components as f64))
}

/// Quartic action over the whole torus.
pub fn quartic_action_full(field: &FieldConfig, ctx: &WickContext) -> Result<f64> {
    quartic_action(field, ctx, &vec![true; field.torus().sites()])
}

/// Sharp deterministic lower bound of the quartic action over a region of the
/// given area: (1/4N)(s − C(N+2))² ≥ 0 leaves −(C²/2)(1 + 2/N) per unit area.
pub fn action_lower_bound(ctx: &WickContext, area: f64) -> f64 {
    assert!(area > 0.0, "area must be positive");
    let c = ctx.counterterm;
    -(c * c / 2.0) * (1.0 + 2.0 / ctx.components as f64) * area
}

/// A configuration attaining [`action_lower_bound`]: ‖Φ(x)‖² = C(N+2) at every site.
pub fn action_bound_equality_field(torus: &TorusSpec, ctx: &WickContext) -> FieldConfig {
    let mut f = FieldConfig::zeros(torus, ctx.components);
    let v = (ctx.counterterm * (ctx.components as f64 + 2.0)).sqrt();
    f.component_mut(0).iter_mut().for_each(|x| *x = v);
    f
}

/// Cov((1/N):‖Z_ε(x)‖⁴:, (1/N):‖Z_κ(y)‖⁴:) = 8(1 + 2/N) G_{ε,κ}(x − y)⁴ under the GFF.
pub fn quartic_covariance_exact(
    m: f64,
    torus: &TorusSpec,
    displacement: [f64; 2],
    components: usize,
    eps1: f64,
    eps2: f64,
) -> f64 {
    let g = greens_function(m, torus, eps1, eps2, displacement);
    quartic_prefactor(components) * g.powi(4)
}

/// 8(1 + 2/N), the Wick-contraction count of the normalized quartic pair.
pub fn quartic_prefactor(components: usize) -> f64 {
    8.0 * (1.0 + 2.0 / components as f64)
}

/// Covariance of the GFF of `cov` at every lattice displacement, as an n×n grid.
pub fn covariance_grid(cov: &SpectralCovariance) -> Vec<f64> {
    let fft = Fft2::new(cov.torus());
    let modes: Vec<Complex64> = cov
        .variances()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft.inverse_real(&modes)
}

/// Exact E[(ε² Σ_x (1/N):‖Z(x)‖⁴: φ(x))²] = 8(1+2/N) ε⁴ Σ_{x,y} G(x−y)⁴ φ(x)φ(y),
/// with C matched to the covariance so the quartic Wick power is centered.
pub fn quartic_second_moment_exact(
    cov: &SpectralCovariance,
    components: usize,
    phi: &[f64],
) -> Result<f64> {
    let torus = cov.torus();
    let n = torus.grid_points();
    if phi.len() != torus.sites() {
        return Err(Error::Dimension {
            expected: torus.sites(),
            found: phi.len(),
        });
    }
    let g4: Vec<f64> = covariance_grid(cov)
        .into_iter()
        .map(|g| g.powi(4))
        .collect();
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            let px = phi[a * n + b];
            if px == 0.0 {
                continue;
            }
            for c in 0..n {
                let da = (c + n - a) % n;
                for d in 0..n {
                    let db = (d + n - b) % n;
                    total += px * phi[c * n + d] * g4[da * n + db];
                }
            }
        }
    }
    let eps2 = torus.spacing().powi(2);
    Ok(quartic_prefactor(components) * eps2 * eps2 * total)
}

/// Monte Carlo estimate of E[(ε² Σ_x (1/N):‖Z(x)‖⁴: φ(x))²] from `samples`
/// independent GFF draws. Returns (estimate, standard error).
pub fn mc_quartic_second_moment<R: Rng + ?Sized>(
    cov: &SpectralCovariance,
    components: usize,
    phi: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: samples,
        });
    }
    let torus = *cov.torus();
    if phi.len() != torus.sites() {
        return Err(Error::Dimension {
            expected: torus.sites(),
            found: phi.len(),
        });
    }
    let ctx = WickContext::new(cov.site_variance(), components)?;
    let eps2 = torus.spacing().powi(2);
    let mut sampler = GffSampler::new(cov);
    let mut acc = RunningStats::new();
    for _ in 0..samples {
        let field = sampler.sample(components, rng);
        let w = wick_norm4(&field, &ctx)?;
        let x: f64 = eps2 * w.iter().zip(phi).map(|(w, p)| w * p).sum::<f64>() / components as f64;
        acc.push(x * x);
    }
    Ok((acc.mean(), acc.std_error()))
}

/// Multiply every mode of `field` by η(eps·|ξ|): the smooth-cutoff regularization
/// of a grid field.
pub fn mollify(component: &[f64], torus: &TorusSpec, eps: f64) -> Vec<f64> {
    let fft = Fft2::new(torus);
    let mut modes = fft.forward(component);
    let unit = torus.momentum_unit();
    let n = torus.grid_points();
    for j0 in 0..n {
        for j1 in 0..n {
            let k0 = torus.signed_mode(j0) as f64;
            let k1 = torus.signed_mode(j1) as f64;
            let r = eps * unit * (k0 * k0 + k1 * k1).sqrt();
            modes[j0 * n + j1] *= cutoff_eta(r);
        }
    }
    fft.inverse_real(&modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::SymbolChoice;
    use crate::rng::StreamKey;
    use crate::spectral::{
        build_frequency_lattice, counterterm, lattice_propagator, CountertermKind,
    };
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus(l: f64, n: usize) -> TorusSpec {
        TorusSpec::new(l, n).unwrap()
    }

    /// Σ_i C²H₄(Z_i/√C) + Σ_{i≠j} C²H₂(Z_i/√C)H₂(Z_j/√C).
    fn hermite_product_oracle(z: &[f64], c: f64) -> f64 {
        let sc = c.sqrt();
        let mut total = 0.0;
        for (i, zi) in z.iter().enumerate() {
            for (j, zj) in z.iter().enumerate() {
                total += if i == j {
                    c * c * hermite(4, zi / sc).unwrap()
                } else {
                    c * c * hermite(2, zi / sc).unwrap() * hermite(2, zj / sc).unwrap()
                };
            }
        }
        total
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(2, 0.0).unwrap(), -1.0);
        assert_eq!(hermite(4, 0.0).unwrap(), 3.0);
        assert_eq!(hermite(4, 1.0).unwrap(), -2.0);
        assert!(hermite(0, 1.0).is_err());
        assert!(hermite(5, 1.0).is_err());
    }

    #[test]
    fn hermite_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let z: f64 = rng.random_range(-5.0..5.0);
            for n in 2..=3u32 {
                let lhs = hermite(n + 1, z).unwrap();
                let rhs = z * hermite(n, z).unwrap() - n as f64 * hermite(n - 1, z).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn wick_powers_on_simple_fields() {
        let t = torus(1.0, 4);
        let ctx = WickContext::new(1.0, 3).unwrap();
        let zero = FieldConfig::zeros(&t, 3);
        assert!(wick_norm2(&zero, &ctx).unwrap().iter().all(|&v| v == -3.0));
        let ones = FieldConfig::new(&t, 3, vec![1.0; 48]).unwrap();
        let ctx0 = WickContext::new(0.0, 3).unwrap();
        assert!(wick_norm2(&ones, &ctx0).unwrap().iter().all(|&v| v == 3.0));
        assert!(wick_norm4(&ones, &ctx0).unwrap().iter().all(|&v| v == 9.0));

        let ctx1 = WickContext::new(1.0, 1).unwrap();
        assert!(wick_norm4(&FieldConfig::zeros(&t, 1), &ctx1)
            .unwrap()
            .iter()
            .all(|&v| v == 3.0));

        let mut f = FieldConfig::zeros(&t, 2);
        f.component_mut(0).iter_mut().for_each(|x| *x = 1.0);
        let ctx2 = WickContext::new(1.0, 2).unwrap();
        assert!(wick_norm4(&f, &ctx2).unwrap().iter().all(|&v| v == 1.0));
        assert!(wick_norm4(&f, &ctx).is_err());
    }

    #[test]
    fn collapsed_polynomial_matches_hermite_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..=8usize);
            let c: f64 = rng.random_range(0.01..3.0);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s: f64 = z.iter().map(|v| v * v).sum();
            let poly = wick_norm4_value(s, c, n);
            let oracle = hermite_product_oracle(&z, c);
            let scale = s * s + c * c * (n * n) as f64 + 1.0;
            assert!((poly - oracle).abs() <= 1e-12 * scale, "{poly} vs {oracle}");
        }
    }

    #[test]
    fn quartic_action_constant_and_region() {
        let t = torus(2.0, 8); // ε = 1/4, 16 sites make unit area
        let mut region = vec![false; 64];
        region.iter_mut().take(16).for_each(|r| *r = true);
        for n in [1usize, 2, 5] {
            let ctx = WickContext::new(1.0, n).unwrap();
            let v = quartic_action(&FieldConfig::zeros(&t, n), &ctx, &region).unwrap();
            assert_relative_eq!(v, (n as f64 + 2.0) / 4.0, epsilon = 1e-14);
        }
        let ctx = WickContext::new(1.0, 1).unwrap();
        assert!(quartic_action(&FieldConfig::zeros(&t, 1), &ctx, &[false; 64]).is_err());
    }

    #[test]
    fn lower_bound_and_equality_configuration() {
        let ctx = WickContext::new(1.0, 2).unwrap();
        assert_eq!(
            action_lower_bound(&WickContext::new(0.0, 2).unwrap(), 4.0),
            0.0
        );
        assert_relative_eq!(action_lower_bound(&ctx, 4.0), -4.0, epsilon = 1e-15);
        let t = torus(2.0, 8);
        for n in [1usize, 2, 4, 8] {
            let ctx = WickContext::new(0.37, n).unwrap();
            let f = action_bound_equality_field(&t, &ctx);
            let a = quartic_action_full(&f, &ctx).unwrap();
            assert_relative_eq!(
                a,
                action_lower_bound(&ctx, t.volume()),
                max_relative = 1e-12
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(1..=6usize);
            let ctx = WickContext::new(rng.random_range(0.0..2.0), n).unwrap();
            let vals = (0..n * 64).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f = FieldConfig::new(&t, n, vals).unwrap();
            assert!(quartic_action_full(&f, &ctx).unwrap() >= action_lower_bound(&ctx, t.volume()));
        }
    }

    #[test]
    fn covariance_at_origin_and_prefactor() {
        let t = torus(4.0, 16);
        let eps = t.spacing();
        let c = counterterm(1.0, &t, CountertermKind::CutoffEta);
        assert_relative_eq!(
            quartic_covariance_exact(1.0, &t, [0.0, 0.0], 4, eps, eps),
            8.0 * 1.5 * c.powi(4),
            max_relative = 1e-12
        );
        assert!((quartic_prefactor(1_000_000) - 8.0).abs() < 1e-4);
    }

    #[test]
    fn covariance_grid_is_lattice_propagator() {
        let t = torus(4.0, 8);
        let cov = SpectralCovariance::new(0.9, &t, SymbolChoice::Lattice).unwrap();
        let g = covariance_grid(&cov);
        for (a, b) in [(0usize, 0usize), (1, 0), (3, 2), (7, 5)] {
            let exact = lattice_propagator(0.9, &t, [a as i64, b as i64]);
            assert_relative_eq!(g[a * 8 + b], exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn second_moment_exact_against_direct_double_sum() {
        let t = torus(4.0, 16);
        let cov = SpectralCovariance::new(1.0, &t, SymbolChoice::Lattice).unwrap();
        let mut phi = vec![0.0; 256];
        for a in 0..4 {
            for b in 0..4 {
                phi[a * 16 + b] = 1.0 + 0.1 * (a + b) as f64;
            }
        }
        let mut oracle = 0.0;
        for x in 0..256 {
            for y in 0..256 {
                if phi[x] == 0.0 || phi[y] == 0.0 {
                    continue;
                }
                let d = [
                    (x / 16) as i64 - (y / 16) as i64,
                    (x % 16) as i64 - (y % 16) as i64,
                ];
                oracle += phi[x] * phi[y] * lattice_propagator(1.0, &t, d).powi(4);
            }
        }
        let eps4 = t.spacing().powi(4);
        let n = 3;
        oracle *= 8.0 * (1.0 + 2.0 / n as f64) * eps4;
        assert_relative_eq!(
            quartic_second_moment_exact(&cov, n, &phi).unwrap(),
            oracle,
            max_relative = 1e-10
        );
        let r1 = quartic_second_moment_exact(&cov, 1, &phi).unwrap();
        let r8 = quartic_second_moment_exact(&cov, 8, &phi).unwrap();
        assert_relative_eq!(r1 / r8, 2.4, max_relative = 1e-12);
    }

    #[test]
    fn mc_second_moment_matches_exact() {
        let t = torus(4.0, 16);
        let cov = SpectralCovariance::new(1.0, &t, SymbolChoice::Lattice).unwrap();
        let mut phi = vec![0.0; 256];
        for a in 0..6 {
            for b in 0..6 {
                phi[a * 16 + b] = 1.0;
            }
        }
        let mut rng = StreamKey::new(21, 0, 0).rng();
        assert!(mc_quartic_second_moment(&cov, 2, &phi, 50, &mut rng).is_err());
        let (est, se) = mc_quartic_second_moment(&cov, 2, &phi, 20_000, &mut rng).unwrap();
        let exact = quartic_second_moment_exact(&cov, 2, &phi).unwrap();
        assert!((est - exact).abs() < 4.0 * se, "{est} ± {se} vs {exact}");
        let (zero, _) = mc_quartic_second_moment(&cov, 2, &vec![0.0; 256], 100, &mut rng).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn quartic_wick_power_is_centered() {
        let t = torus(4.0, 8);
        let cov = SpectralCovariance::new(0.8, &t, SymbolChoice::Lattice).unwrap();
        let ctx = WickContext::new(cov.site_variance(), 3).unwrap();
        let mut sampler = GffSampler::new(&cov);
        let mut rng = StreamKey::new(5, 0, 0).rng();
        let mut f2 = RunningStats::new();
        let mut f4 = RunningStats::new();
        for _ in 0..100_000 {
            let f = sampler.sample(3, &mut rng);
            f2.push(crate::stats::mean(&wick_norm2(&f, &ctx).unwrap()));
            f4.push(quartic_action_full(&f, &ctx).unwrap());
        }
        assert!(f2.mean().abs() < 3.0 * f2.std_error());
        assert!(f4.mean().abs() < 3.0 * f4.std_error());
    }

    #[test]
    fn cutoff_differences_shrink() {
        // Var(F_ε − F_κ) decreases as κ → ε for the mollified continuum-symbol field.
        let t = torus(4.0, 32);
        let cov = SpectralCovariance::new(1.0, &t, SymbolChoice::Continuum).unwrap();
        let eg = t.spacing();
        let eps = 2.0 * eg;
        let kappas = [5.0 * eg, 3.5 * eg, 2.5 * eg];
        let lat = build_frequency_lattice(&t);
        let grid_ct = |e: f64| -> f64 {
            lat.modes()
                .iter()
                .zip(cov.variances())
                .map(|(md, v)| cutoff_eta(e * md.continuum.sqrt()).powi(2) * v)
                .sum::<f64>()
                / t.volume()
        };
        assert_relative_eq!(
            grid_ct(eps),
            counterterm(
                1.0,
                &TorusSpec::new(4.0, 16).unwrap(),
                CountertermKind::CutoffEta
            ),
            max_relative = 1e-12
        );
        let mut sampler = GffSampler::new(&cov);
        let mut rng = StreamKey::new(6, 0, 0).rng();
        let mut accs = vec![RunningStats::new(); kappas.len()];
        let f_of = |field: &[f64], e: f64| -> f64 {
            let ctx = WickContext::new(grid_ct(e), 1).unwrap();
            let smooth = FieldConfig::new(&t, 1, mollify(field, &t, e)).unwrap();
            quartic_action_full(&smooth, &ctx).unwrap()
        };
        for _ in 0..400 {
            let f = sampler.sample(1, &mut rng);
            let base = f_of(f.component(0), eps);
            for (k, acc) in kappas.iter().zip(accs.iter_mut()) {
                acc.push(base - f_of(f.component(0), *k));
            }
        }
        let vars: Vec<f64> = accs.iter().map(|a| a.variance()).collect();
        assert!(vars.windows(2).all(|w| w[0] > w[1]), "{vars:?}");
    }
}
