use crate::{timed, Check};
use rand::Rng;
use rand_distr::StandardNormal;
use sigma_core::gap::{solve_gap_lattice, Components};
use sigma_core::gff::{FieldConfig, GffSampler, SpectralCovariance, SymbolChoice};
use sigma_core::rng::StreamKey;
use sigma_core::spectral::TorusSpec;
use sigma_core::stats::RunningStats;
use sigma_core::wick::{
    action_bound_equality_field, action_lower_bound, covariance_grid, quartic_action_full,
    quartic_prefactor, wick_norm4, WickContext,
};

const COMPONENTS: usize = 8;

fn setup() -> sigma_core::Result<(TorusSpec, SpectralCovariance, WickContext)> {
    let torus = TorusSpec::new(8.0, 32)?;
    let m = solve_gap_lattice(1.0, 0.0, Components::Finite(COMPONENTS), &torus, 1e-14)?.mass();
    let cov = SpectralCovariance::new(m, &torus, SymbolChoice::Lattice)?;
    let ctx = WickContext::new(cov.site_variance(), COMPONENTS)?;
    Ok((torus, cov, ctx))
}

pub fn wick_covariance() -> Check {
    timed(
        4,
        "Wick covariance of (1/N):‖Z‖⁴: on a 32² grid, L = 8, N = 8",
        |c| {
            let (torus, cov, ctx) = setup()?;
            let n = torus.grid_points();
            let nf = COMPONENTS as f64;
            let shifts: [[usize; 2]; 5] = [[0, 0], [1, 0], [0, 2], [2, 2], [4, 0]];
            let g = covariance_grid(&cov);
            let samples = 200_000;
            let mut sampler = GffSampler::new(&cov);
            let mut rng = StreamKey::new(4, 0, 0).rng();
            let mut prods = vec![RunningStats::new(); shifts.len()];
            let mut means = RunningStats::new();
            for _ in 0..samples {
                let field = sampler.sample(COMPONENTS, &mut rng);
                let w: Vec<f64> = wick_norm4(&field, &ctx)?
                    .into_iter()
                    .map(|v| v / nf)
                    .collect();
                means.push(w.iter().sum::<f64>() / (n * n) as f64);
                for (acc, s) in prods.iter_mut().zip(&shifts) {
                    let mut t = 0.0;
                    for a in 0..n {
                        let row = ((a + s[0]) % n) * n;
                        for b in 0..n {
                            t += w[a * n + b] * w[row + (b + s[1]) % n];
                        }
                    }
                    acc.push(t / (n * n) as f64);
                }
            }
            c.note(format!("m = {:.10} from the N = 8 lattice gap equation, C = G(0) = {:.6}, {samples} exact GFF samples, mean of (1/N):‖Z‖⁴: = {:.2e} ± {:.1e}", cov.mass(), ctx.counterterm(), means.mean(), means.std_error()));
            let mut printed_ok = true;
            let mut corrected_ok = true;
            for (acc, s) in prods.iter().zip(&shifts) {
                let g4 = g[s[0] * n + s[1]].powi(4);
                let mc = acc.mean();
                let se = acc.std_error();
                let printed = (1.0 + 2.0 / nf) * g4;
                let corrected = quartic_prefactor(COMPONENTS) * g4;
                printed_ok &= (mc - printed).abs() < 3.0 * se;
                corrected_ok &= (mc - corrected).abs() < 3.0 * se;
                c.note(format!(
                "shift {s:?}: MC {mc:.6e} ± {se:.1e}; (1+2/N)G⁴ = {printed:.6e} ({:+.1}σ); 8(1+2/N)G⁴ = {corrected:.6e} ({:+.1}σ)",
                (mc - printed) / se,
                (mc - corrected) / se
            ));
            }
            c.require(
                printed_ok,
                "MC covariance matches (1+2/N)G⁴ within 3 standard errors at all 5 shifts",
            );
            c.note(format!(
            "Wick contraction gives 8(1+2/N)G⁴ (N = 1: Var :Z⁴: = 24C⁴); the MC data {} that identity within 3σ at all 5 shifts",
            if corrected_ok { "match" } else { "do NOT match" }
        ));
            Ok(())
        },
    )
}

pub fn action_bound() -> Check {
    timed(
        5,
        "deterministic lower bound of the m-Wick quartic action",
        |c| {
            let (torus, cov, ctx) = setup()?;
            let area = torus.volume();
            let cc = ctx.counterterm();
            let nf = COMPONENTS as f64;
            let printed = -(cc * cc / 4.0) * (1.0 + 2.0 / nf) * area;
            let sharp = action_lower_bound(&ctx, area);
            let mut rng = StreamKey::new(5, 0, 0).rng();
            let mut sampler = GffSampler::new(&cov);
            let mut min_random = f64::INFINITY;
            let mut min_gff = f64::INFINITY;
            let mut below_printed = 0;
            let mut below_sharp = 0;
            let slack = |b: f64| b - 1e-9 * b.abs();
            for i in 0..1000 {
                // random fields of varying amplitude around the equality shell ‖Φ‖² = C(N+2)
                let amp = (cc * (nf + 2.0) / nf).sqrt() * (0.25 + 1.5 * (i as f64) / 1000.0);
                let v: Vec<f64> = (0..COMPONENTS * torus.sites())
                    .map(|_| amp * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let f = quartic_action_full(&FieldConfig::new(&torus, COMPONENTS, v)?, &ctx)?;
                min_random = min_random.min(f);
                below_printed += usize::from(f < slack(printed));
                below_sharp += usize::from(f < slack(sharp));
                let g = quartic_action_full(&sampler.sample(COMPONENTS, &mut rng), &ctx)?;
                min_gff = min_gff.min(g);
                below_printed += usize::from(g < slack(printed));
                below_sharp += usize::from(g < slack(sharp));
            }
            let eq = quartic_action_full(&action_bound_equality_field(&torus, &ctx), &ctx)?;
            c.note(format!("C = {cc:.6}, |Λ| = {area}; printed bound −(C²/4)(1+2/N)|Λ| = {printed:.6}; sharp bound −(C²/2)(1+2/N)|Λ| = {sharp:.6}"));
            c.note(format!(
                "min over 1000 random fields {min_random:.6}, over 1000 GFF fields {min_gff:.6}"
            ));
            c.require(
                below_printed == 0,
                format!("{below_printed}/2000 sampled fields fall below the printed bound"),
            );
            c.require(
            (eq - printed).abs() <= 1e-9 * printed.abs(),
            format!("equality configuration ‖Φ‖² = C(N+2) attains {eq:.9} vs printed bound {printed:.9}"),
        );
            c.note(format!(
            "sharp bound: {below_sharp}/2000 fields below it, equality configuration attains it to relative {:.1e}",
            (eq - sharp).abs() / sharp.abs()
        ));
            Ok(())
        },
    )
}
