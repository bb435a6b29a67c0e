//! Python module `sigma_lattice`: gap equations, lattice GFF sampling, Wick
//! polynomials and HMC chains for the O(N) model on the 2d torus.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sigma_core::analysis;
use sigma_core::gap::{self, Components, GapSolution};
use sigma_core::gff::{self, SpectralCovariance, SymbolChoice};
use sigma_core::mcmc::{self, ModelParams, Observable, Schedule};
use sigma_core::rng::StreamKey;
use sigma_core::spectral::{CountertermKind, TorusSpec};
use sigma_core::wick::{self, WickContext};

fn err(e: sigma_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn components(n: Option<usize>) -> Components {
    n.map_or(Components::Infinite, Components::Finite)
}

fn symbol(name: &str) -> PyResult<SymbolChoice> {
    match name {
        "lattice" => Ok(SymbolChoice::Lattice),
        "continuum" => Ok(SymbolChoice::Continuum),
        _ => Err(PyValueError::new_err(format!(
            "unknown symbol {name:?}, expected \"lattice\" or \"continuum\""
        ))),
    }
}

fn counterterm_kind(name: &str) -> PyResult<CountertermKind> {
    CountertermKind::parse(name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown counterterm {name:?}, expected \"lattice-tadpole\" or \"cutoff-eta\""
        ))
    })
}

/// Periodic square of side `side_length` with `grid_points` sites per axis.
#[pyclass(name = "Torus", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyTorus(TorusSpec);

#[pymethods]
impl PyTorus {
    #[new]
    fn new(side_length: f64, grid_points: usize) -> PyResult<Self> {
        TorusSpec::new(side_length, grid_points)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn side_length(&self) -> f64 {
        self.0.side_length()
    }

    #[getter]
    fn grid_points(&self) -> usize {
        self.0.grid_points()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn __repr__(&self) -> String {
        format!(
            "Torus(side_length={}, grid_points={})",
            self.0.side_length(),
            self.0.grid_points()
        )
    }
}

#[pyclass(name = "GapSolution", frozen)]
struct PyGapSolution(GapSolution);

#[pymethods]
impl PyGapSolution {
    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass()
    }

    #[getter]
    fn m_squared(&self) -> f64 {
        self.0.m_squared
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    #[getter]
    fn bracket(&self) -> (f64, f64) {
        self.0.bracket
    }

    #[getter]
    fn truncation_certificate(&self) -> f64 {
        self.0.truncation_certificate
    }

    fn __repr__(&self) -> String {
        format!(
            "GapSolution(mass={:?}, residual={:e})",
            self.0.mass(),
            self.0.residual
        )
    }
}

/// Gap mass on the plane. `components=None` is the N = ∞ equation.
#[pyfunction]
#[pyo3(signature = (lam, beta, components=None, tol=1e-13))]
fn gap_continuum(
    lam: f64,
    beta: f64,
    components: Option<usize>,
    tol: f64,
) -> PyResult<PyGapSolution> {
    match components {
        None => gap::solve_gap_continuum(lam, beta, tol),
        Some(n) => gap::solve_gap_continuum_n(lam, beta, n, tol),
    }
    .map(PyGapSolution)
    .map_err(err)
}

/// Gap mass on the continuum torus of side `side_length`.
#[pyfunction]
#[pyo3(signature = (lam, beta, side_length, components=None, tol=1e-13))]
fn gap_finite(
    lam: f64,
    beta: f64,
    side_length: f64,
    components: Option<usize>,
    tol: f64,
) -> PyResult<PyGapSolution> {
    gap::solve_gap_finite(lam, beta, self::components(components), side_length, tol)
        .map(PyGapSolution)
        .map_err(err)
}

/// Gap mass of the lattice theory on `torus`.
#[pyfunction]
#[pyo3(signature = (lam, beta, torus, components=None, tol=1e-13))]
fn gap_lattice(
    lam: f64,
    beta: f64,
    torus: PyTorus,
    components: Option<usize>,
    tol: f64,
) -> PyResult<PyGapSolution> {
    gap::solve_gap_lattice(lam, beta, self::components(components), &torus.0, tol)
        .map(PyGapSolution)
        .map_err(err)
}

#[pyfunction]
fn continuum_mass_bounds(lam: f64, beta: f64) -> (f64, f64) {
    gap::continuum_mass_bounds(lam, beta)
}

/// Model parameters for the lattice chain.
#[pyclass(name = "Model", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyModel(ModelParams);

#[pymethods]
impl PyModel {
    /// Parameters at (λ, β) with the scheme-consistent gap mass.
    #[new]
    #[pyo3(signature = (lam, beta, components, torus, counterterm="lattice-tadpole"))]
    fn new(
        lam: f64,
        beta: f64,
        components: usize,
        torus: PyTorus,
        counterterm: &str,
    ) -> PyResult<Self> {
        ModelParams::new(
            lam,
            beta,
            components,
            &torus.0,
            counterterm_kind(counterterm)?,
        )
        .map(Self)
        .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (lam, mass, components, torus, counterterm="lattice-tadpole"))]
    fn with_mass(
        lam: f64,
        mass: f64,
        components: usize,
        torus: PyTorus,
        counterterm: &str,
    ) -> PyResult<Self> {
        ModelParams::with_mass(
            lam,
            mass,
            components,
            &torus.0,
            counterterm_kind(counterterm)?,
        )
        .map(Self)
        .map_err(err)
    }

    #[staticmethod]
    fn free(mass: f64, components: usize, torus: PyTorus) -> PyResult<Self> {
        ModelParams::free(mass, components, &torus.0)
            .map(Self)
            .map_err(err)
    }

    #[getter(lam)]
    fn lambda(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass
    }

    #[getter]
    fn components(&self) -> usize {
        self.0.components
    }

    #[getter]
    fn torus(&self) -> PyTorus {
        PyTorus(self.0.torus)
    }

    /// C^m, the counterterm Wick-ordering the quartic.
    #[getter]
    fn counterterm(&self) -> f64 {
        self.0.counterterm_mass
    }

    /// Expectation of the quartic action under the free field of the model mass.
    fn gaussian_quartic_mean(&self) -> f64 {
        mcmc::gaussian_quartic_mean(&self.0)
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "Model(lam={}, beta={}, mass={}, components={}, counterterm={:?})",
            p.lambda,
            p.beta,
            p.mass,
            p.components,
            p.scheme.kind.name()
        )
    }
}

/// One lattice GFF draw as a list of N component grids, each of length n² in row-major order.
#[pyfunction]
#[pyo3(signature = (mass, torus, components, seed=0, draw=0, symbol="lattice"))]
fn sample_gff(
    py: Python<'_>,
    mass: f64,
    torus: PyTorus,
    components: usize,
    seed: u64,
    draw: u64,
    symbol: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let cov = SpectralCovariance::new(mass, &torus.0, self::symbol(symbol)?).map_err(err)?;
    let f = py.detach(|| gff::sample_gff(&cov, components, &StreamKey::new(seed, 0, draw)));
    Ok((0..components).map(|i| f.component(i).to_vec()).collect())
}

/// Per-site variance of the lattice GFF.
#[pyfunction]
#[pyo3(signature = (mass, torus, symbol="lattice"))]
fn site_variance(mass: f64, torus: PyTorus, symbol: &str) -> PyResult<f64> {
    Ok(
        SpectralCovariance::new(mass, &torus.0, self::symbol(symbol)?)
            .map_err(err)?
            .site_variance(),
    )
}

#[pyfunction]
fn relative_entropy_density(m_star: f64, m: f64, torus: PyTorus) -> f64 {
    gff::relative_entropy_density(m_star, m, &torus.0)
}

/// Squared H¹ Wasserstein distance between two GFFs, per component.
#[pyfunction]
fn gaussian_w2_h1m(m1: f64, m2: f64, cost_mass: f64, torus: PyTorus) -> f64 {
    gff::gaussian_w2_h1m(m1, m2, cost_mass, &torus.0)
}

/// Probabilists' Hermite polynomial He_k(z) for k in 1..=4.
#[pyfunction]
fn hermite(order: u32, z: f64) -> PyResult<f64> {
    wick::hermite(order, z).map_err(err)
}

/// :‖φ‖⁴: at ‖φ‖² = s with counterterm c.
#[pyfunction]
fn wick_norm4_value(s: f64, c: f64, components: usize) -> f64 {
    wick::wick_norm4_value(s, c, components)
}

/// Lower bound of the quartic action over a region of the given area.
#[pyfunction]
fn action_lower_bound(counterterm: f64, components: usize, area: f64) -> PyResult<f64> {
    if !(area > 0.0) {
        return Err(PyValueError::new_err("area must be positive"));
    }
    Ok(wick::action_lower_bound(
        &WickContext::new(counterterm, components).map_err(err)?,
        area,
    ))
}

#[pyfunction]
fn lattice_dispersion_mass(m: f64, spacing: f64) -> f64 {
    analysis::lattice_dispersion_mass(m, spacing)
}

#[pyfunction]
fn mass_from_pole(energy: f64, spacing: f64) -> f64 {
    analysis::mass_from_pole(energy, spacing)
}

fn observables(names: Option<Vec<String>>) -> PyResult<Vec<Observable>> {
    match names {
        None => Ok(Observable::ALL.to_vec()),
        Some(v) => v
            .iter()
            .map(|n| {
                Observable::parse(n)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown observable {n:?}")))
            })
            .collect(),
    }
}

/// Run an HMC chain from a fresh GFF start. Returns a dict with the measured
/// series, their summaries (mean, error, tau_int, n_eff), the acceptance rate
/// and the mean of exp(−ΔH).
#[pyfunction]
#[pyo3(signature = (model, thermalization, measurements, stride=1, seed=0, observables=None))]
fn run_chain<'py>(
    py: Python<'py>,
    model: PyModel,
    thermalization: u64,
    measurements: u64,
    stride: u64,
    seed: u64,
    observables: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let obs = self::observables(observables)?;
    let schedule = Schedule::new(thermalization, measurements, stride).map_err(err)?;
    let run = py
        .detach(|| mcmc::run_chain(&model.0, &schedule, &obs, &StreamKey::new(seed, 0, 0)))
        .map_err(err)?;
    let out = PyDict::new(py);
    let series = PyDict::new(py);
    let summaries = PyDict::new(py);
    for (o, s) in &run.series {
        series.set_item(o.name(), s.clone())?;
    }
    for (o, s) in &run.summaries {
        summaries.set_item(o.name(), (s.mean, s.error, s.tau_int, s.n_eff))?;
    }
    out.set_item("series", series)?;
    out.set_item("summaries", summaries)?;
    out.set_item("acceptance", run.acceptance)?;
    let e = run.exp_minus_delta_h;
    out.set_item("exp_minus_delta_h", (e.mean, e.error))?;
    out.set_item("thermalized", run.thermalized)?;
    Ok(out)
}

/// Relative entropy of the interacting measure with respect to the GFF of the
/// model mass by thermodynamic integration on a geometric coupling grid.
/// Returns (H, error, H/L², error/L², log Z).
#[pyfunction]
#[pyo3(signature = (model, levels, thermalization, measurements, seed=0))]
fn relative_entropy(
    py: Python<'_>,
    model: PyModel,
    levels: u32,
    thermalization: u64,
    measurements: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64, f64, f64)> {
    let schedule = Schedule::new(thermalization, measurements, 1).map_err(err)?;
    let grid = mcmc::geometric_lambda_grid(model.0.lambda, levels);
    let h = py
        .detach(|| {
            mcmc::estimate_relative_entropy(&model.0, &grid, &schedule, &StreamKey::new(seed, 0, 0))
        })
        .map_err(err)?;
    Ok((h.value, h.error, h.per_volume, h.error_per_volume, h.log_z))
}

#[pymodule]
pub fn sigma_lattice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTorus>()?;
    m.add_class::<PyGapSolution>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gap_continuum, m)?)?;
    m.add_function(wrap_pyfunction!(gap_finite, m)?)?;
    m.add_function(wrap_pyfunction!(gap_lattice, m)?)?;
    m.add_function(wrap_pyfunction!(continuum_mass_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gff, m)?)?;
    m.add_function(wrap_pyfunction!(site_variance, m)?)?;
    m.add_function(wrap_pyfunction!(relative_entropy_density, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_w2_h1m, m)?)?;
    m.add_function(wrap_pyfunction!(hermite, m)?)?;
    m.add_function(wrap_pyfunction!(wick_norm4_value, m)?)?;
    m.add_function(wrap_pyfunction!(action_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_dispersion_mass, m)?)?;
    m.add_function(wrap_pyfunction!(mass_from_pole, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(relative_entropy, m)?)?;
    Ok(())
}
