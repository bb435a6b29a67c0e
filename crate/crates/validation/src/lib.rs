//! Acceptance checks for the sigma model library. Each check runs one
//! end-to-end experiment at fixed seeds and returns a [`Check`] with the
//! numbers behind its verdict.

use std::fmt;
use std::time::Instant;

mod exact;
mod gaussian;
mod large_n;
mod sampling;

pub use exact::{
    continuum_gap, finite_volume_ordering, information_geometry, lattice_sum_certificates,
    mass_bounds,
};
pub use gaussian::{action_bound, wick_covariance};
pub use large_n::{entropy_density_stability, gaussianization, interacting_mass};
pub use sampling::{partition_bound, sampler_exactness};

#[derive(Debug, Clone)]
pub struct Check {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
    pub seconds: f64,
}

impl Check {
    fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            pass: true,
            details: Vec::new(),
            seconds: 0.0,
        }
    }

    /// Record a sub-condition; the check passes only if all of them hold.
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        self.pass &= ok;
        self.details.push(format!(
            "[{}] {}",
            if ok { "ok" } else { "violated" },
            what.into()
        ));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.details.push(format!("[info] {}", what.into()));
    }

    fn fail_with(mut self, err: sigma_core::Error) -> Self {
        self.require(false, format!("error: {err}"));
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} criterion {:>2}: {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds
        )?;
        for d in &self.details {
            writeln!(f, "        {d}")?;
        }
        Ok(())
    }
}

pub type CheckFn = fn() -> Check;

pub const ALL: [CheckFn; 12] = [
    continuum_gap,
    mass_bounds,
    finite_volume_ordering,
    wick_covariance,
    action_bound,
    partition_bound,
    sampler_exactness,
    information_geometry,
    lattice_sum_certificates,
    gaussianization,
    entropy_density_stability,
    interacting_mass,
];

pub(crate) fn timed(
    id: u32,
    title: &'static str,
    body: impl FnOnce(&mut Check) -> sigma_core::Result<()>,
) -> Check {
    let start = Instant::now();
    let mut c = Check::new(id, title);
    let mut c = match body(&mut c) {
        Ok(()) => c,
        Err(e) => c.fail_with(e),
    };
    c.seconds = start.elapsed().as_secs_f64();
    c
}
