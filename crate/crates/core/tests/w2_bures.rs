//! The H¹ Wasserstein distance between lattice GFFs against the general
//! Bures formula on dense real-space covariance matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use sigma_core::gff::gaussian_w2_h1m;
use sigma_core::spectral::TorusSpec;
use std::f64::consts::PI;

fn sqrtm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

fn bures2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ra = sqrtm(a);
    let mid = sqrtm(&(&ra * b * &ra));
    a.trace() + b.trace() - 2.0 * mid.trace()
}

/// (1/L²) Σ_ξ cos(ξ·(x − y)) (c² + |ξ|²)/(m² + |ξ|²): the covariance of W·Φ
/// with W = (c² − Δ)^{1/2}, continuum symbol on grid modes.
fn weighted_covariance(m: f64, c: f64, l: f64, n: usize) -> DMatrix<f64> {
    let signed = |j: usize| {
        if j < n / 2 {
            j as f64
        } else {
            j as f64 - n as f64
        }
    };
    let sites = n * n;
    DMatrix::from_fn(sites, sites, |x, y| {
        let (dx, dy) = (
            (x / n) as f64 - (y / n) as f64,
            (x % n) as f64 - (y % n) as f64,
        );
        let eps = l / n as f64;
        let mut s = 0.0;
        for k0 in 0..n {
            for k1 in 0..n {
                let xi = [2.0 * PI * signed(k0) / l, 2.0 * PI * signed(k1) / l];
                let x2 = xi[0] * xi[0] + xi[1] * xi[1];
                s += (eps * (xi[0] * dx + xi[1] * dy)).cos() * (c * c + x2) / (m * m + x2);
            }
        }
        s / (l * l)
    })
}

#[test]
fn matches_dense_bures_distance() {
    for &(l, n, m1, m2, c) in &[
        (2.0, 4usize, 0.5, 0.9, 0.7),
        (4.0, 6, 0.3, 1.5, 1.0),
        (1.0, 4, 2.0, 0.25, 0.5),
    ] {
        let a = weighted_covariance(m1, c, l, n);
        let b = weighted_covariance(m2, c, l, n);
        // eigenvalues of the dense matrices are (n²/L²)·(per-mode values)
        let oracle = bures2(&a, &b) / (n * n) as f64;
        let got = gaussian_w2_h1m(m1, m2, c, &TorusSpec::new(l, n).unwrap());
        assert!(
            (got - oracle).abs() <= 1e-9 * oracle,
            "L = {l}, n = {n}: {got} vs {oracle}"
        );
    }
}

#[test]
fn symmetric_and_zero_on_the_diagonal() {
    let t = TorusSpec::new(3.0, 8).unwrap();
    assert_eq!(gaussian_w2_h1m(0.7, 0.7, 0.7, &t), 0.0);
    let (a, b) = (
        gaussian_w2_h1m(0.4, 0.9, 0.6, &t),
        gaussian_w2_h1m(0.9, 0.4, 0.6, &t),
    );
    assert!((a - b).abs() <= 1e-15 * a);
}
