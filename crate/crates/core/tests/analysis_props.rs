use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sigma_core::analysis::{
    effective_mass, lattice_dispersion_mass, mass_from_pole, smear, Correlator, TestFunction,
};
use sigma_core::gff::FieldConfig;
use sigma_core::rng::StreamKey;
use sigma_core::spectral::TorusSpec;
use sigma_core::stats::{block_means, jackknife};

#[test]
fn jackknife_error_of_a_mean_matches_the_standard_error() {
    // exact σ/√n for iid unit normals; 50 blocks give a ±10% estimate
    let mut rng = StreamKey::new(900, 0, 0).rng();
    let n = 20_000;
    let mut ratios = Vec::new();
    for _ in 0..20 {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let (_, e) = jackknife(&block_means(&xs, 50), |m| m[0]).unwrap();
        ratios.push(e * (n as f64).sqrt());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean ratio {mean}");
}

#[test]
fn jackknife_halves_agree_with_the_whole() {
    // nonlinear estimator: the two halves' errors are √2 times the full-sample error
    let mut rng = StreamKey::new(901, 0, 0).rng();
    let xs: Vec<Vec<f64>> = (0..40_000)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            vec![x, x * x]
        })
        .collect();
    let var = |m: &[f64]| m[1] - m[0] * m[0];
    let (v, e) = jackknife(&block_means(&xs, 40), var).unwrap();
    let (v1, e1) = jackknife(&block_means(&xs[..20_000], 40), var).unwrap();
    let (v2, e2) = jackknife(&block_means(&xs[20_000..], 40), var).unwrap();
    assert!((v - 1.0).abs() < 4.0 * e);
    // pooled variance = mean of the halves' variances + (m1 − m2)²/4
    let mean = |ys: &[Vec<f64>]| ys.iter().map(|y| y[0]).sum::<f64>() / ys.len() as f64;
    let dm = mean(&xs[..20_000]) - mean(&xs[20_000..]);
    assert!(((v1 + v2) / 2.0 + dm * dm / 4.0 - v).abs() < 1e-12);
    let half = 0.5 * (e1 + e2) / std::f64::consts::SQRT_2;
    assert!((half / e - 1.0).abs() < 0.3, "{half} vs {e}");
    assert!((v1 - v2).abs() < 4.0 * (e1 * e1 + e2 * e2).sqrt());
}

#[test]
fn smearing_a_constant_field_integrates_the_test_function() {
    let t = TorusSpec::new(8.0, 32).unwrap();
    let g = TestFunction {
        center: [10, 20],
        radius: 2.0,
    };
    let grid = g.grid(&t);
    let f = FieldConfig::new(&t, 2, [vec![1.5; 1024], vec![-0.5; 1024]].concat()).unwrap();
    let s = smear(&f, &grid);
    let integral = grid.iter().sum::<f64>() * t.spacing().powi(2);
    assert!((s[0] - 1.5 * integral).abs() < 1e-12 && (s[1] + 0.5 * integral).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_slice_correlator_gives_back_the_pole_mass(ml in 3.0f64..10.0) {
        let t = TorusSpec::new(16.0, 64).unwrap();
        let m = ml / 16.0;
        let fit = effective_mass(&Correlator::exact_slice(m, &t), &t).unwrap();
        let pole = lattice_dispersion_mass(m, t.spacing());
        prop_assert!((fit.mass - pole).abs() < 1e-8 * pole, "{} vs {}", fit.mass, pole);
        prop_assert!((mass_from_pole(fit.mass, t.spacing()) - m).abs() < 1e-8 * m);
    }

    #[test]
    fn dispersion_round_trip(m in 1e-3f64..5.0, eps in 1e-3f64..1.0) {
        let e = lattice_dispersion_mass(m, eps);
        prop_assert!(e <= m);
        prop_assert!((mass_from_pole(e, eps) - m).abs() <= 1e-12 * m);
    }
}
