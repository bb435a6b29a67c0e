use crate::{timed, Check};
use rand::Rng;
use rand_distr::StandardNormal;
use sigma_core::analysis::ModeVarianceAccumulator;
use sigma_core::gff::FieldConfig;
use sigma_core::mcmc::{
    action_gradient_with, action_with, direct_partition_estimate, geometric_lambda_grid,
    run_chain_visiting, thermo_integrate_log_z, ActionForm, ModelParams, Observable, Schedule,
};
use sigma_core::rng::StreamKey;
use sigma_core::spectral::{CountertermKind, TorusSpec};

pub fn partition_bound() -> Check {
    timed(
        6,
        "Jensen bound E[exp(−λF)] ≥ 1 on the unit square (λ = 0.5, m = 1, N = 4)",
        |c| {
            let torus = TorusSpec::new(1.0, 8)?;
            let params =
                ModelParams::with_mass(0.5, 1.0, 4, &torus, CountertermKind::LatticeTadpole)?;
            let ((z, se), (f, fse)) =
                direct_partition_estimate(&params, 200_000, &StreamKey::new(6, 0, 0))?;
            c.require(z >= 1.0 - 3.0 * se, format!("direct GFF estimate E[exp(−λF)] = {z:.6} ± {se:.1e} ≥ 1 − 3SE (E[F] = {f:.2e} ± {fse:.1e})"));
            let grid = geometric_lambda_grid(0.5, 3);
            let ti = thermo_integrate_log_z(
                &params,
                &grid,
                &Schedule::new(200, 4000, 1)?,
                &StreamKey::new(6, 100, 0),
            )?;
            let mut all = true;
            for &(lambda, log_z, err) in &ti.cumulative {
                let ok = log_z >= -3.0 * err;
                all &= ok;
                c.note(format!(
                    "λ = {lambda:.4}: log Z = {log_z:.6} ± {err:.1e}{}",
                    if ok { "" } else { "  < −3SE" }
                ));
            }
            c.require(all, format!("thermodynamic-integration log Z ≥ −3SE at all {} grid points (refinement {:.2}σ)", ti.cumulative.len(), ti.refinement_sigmas));
            c.note(format!(
                "log Z(0.5) by integration {:.6} ± {:.1e} vs ln of the direct estimate {:.6}",
                ti.log_z,
                ti.error,
                z.ln()
            ));
            Ok(())
        },
    )
}

pub fn sampler_exactness() -> Check {
    timed(
        7,
        "HMC exactness at λ = 0 on a 32² grid with N = 4",
        |c| {
            let torus = TorusSpec::new(8.0, 32)?;
            let params = ModelParams::free(0.5, 4, &torus)?;
            let cov = params.covariance();
            let mut modes = ModeVarianceAccumulator::new(&torus);
            let mut push_err = None;
            let run = run_chain_visiting(
                &params,
                &Schedule::new(300, 20_000, 1)?,
                &[Observable::Norm2, Observable::Magnetization2],
                &StreamKey::new(7, 0, 0),
                |f| {
                    if let Err(e) = modes.push(f) {
                        push_err = Some(e);
                    }
                },
            )?;
            if let Some(e) = push_err {
                return Err(e);
            }
            let table = modes.finish();
            let mut worst: f64 = 0.0;
            let mut worst_mode = 0;
            for (i, ((v, e), x)) in table
                .variances
                .iter()
                .zip(&table.errors)
                .zip(cov.variances())
                .enumerate()
            {
                let z = (v - x).abs() / e;
                if z > worst {
                    worst = z;
                    worst_mode = i;
                }
            }
            let n_eff = [Observable::Norm2, Observable::Magnetization2]
                .iter()
                .filter_map(|o| run.summary(*o))
                .map(|s| s.n_eff)
                .fold(f64::INFINITY, f64::min);
            c.note(format!(
                "{} measured trajectories, acceptance {:.3}, step {:.4} × {} leapfrog steps",
                table.samples, run.acceptance, run.state.step_size, run.state.trajectory_steps
            ));
            c.require(
                n_eff >= 1e4,
                format!(
                    "effective samples (min over ‖Φ‖² and magnetization series) {n_eff:.0} ≥ 10⁴"
                ),
            );
            c.require(worst < 4.0, format!("all {} mode variances within 4σ of the GFF (worst {worst:.2}σ at mode {worst_mode})", table.variances.len()));
            let b = run.exp_minus_delta_h;
            c.require(
                (b.mean - 1.0).abs() < 3.0 * b.error,
                format!("E[exp(−ΔH)] = {:.5} ± {:.1e}", b.mean, b.error),
            );

            // gradient against central differences, interacting model, both action forms
            let model = ModelParams::new(1.0, 0.0, 4, &torus, CountertermKind::LatticeTadpole)?;
            let mut rng = StreamKey::new(7, 1, 0).rng();
            let v: Vec<f64> = (0..4 * torus.sites())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let field = FieldConfig::new(&torus, 4, v)?;
            let mut worst_rel: f64 = 0.0;
            for form in [ActionForm::Beta, ActionForm::MassWick] {
                let grad = action_gradient_with(&field, &model, form)?;
                for _ in 0..20 {
                    let i = rng.random_range(0..field.values().len());
                    let h = 1e-4;
                    let mut up = field.clone();
                    up.values_mut()[i] += h;
                    let mut dn = field.clone();
                    dn.values_mut()[i] -= h;
                    let fd = (action_with(&up, &model, form)? - action_with(&dn, &model, form)?)
                        / (2.0 * h);
                    let g = grad.values()[i];
                    worst_rel = worst_rel.max((fd - g).abs() / g.abs().max(1.0));
                }
            }
            c.require(worst_rel < 1e-6, format!("action gradient vs central differences: worst relative error {worst_rel:.2e} < 1e-6"));
            Ok(())
        },
    )
}
