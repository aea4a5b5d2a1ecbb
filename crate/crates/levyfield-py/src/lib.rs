//! Python bindings: the main types (tail models, kernels, convex sets) and
//! operations (tail masses/quantiles, intrinsic volumes, grid counts, the
//! tail constant, field simulation, and the experiment runners).
//!
//! Experiments accept the same TOML text as the CLI and return the JSON
//! payload, so Python callers see exactly the artifacts the CLI writes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use levyfield::config::RunConfig;
use levyfield::extremes;
use levyfield::geometry::{build_grid, ConvexBody, PConvexSet};
use levyfield::regvar::JumpFamily;
use levyfield::rng::{substream, Stream};
use levyfield::simulator::{
    accumulate_field, field_holder_constant, grid_supremum, simulate_heavy, FieldGrid, GridMask,
    SimulationWindow,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A Lévy jump measure with regularly varying right tail.
#[pyclass(name = "TailModel", frozen)]
struct PyTailModel {
    inner: levyfield::TailModel,
}

#[pymethods]
impl PyTailModel {
    #[new]
    #[pyo3(signature = (family, alpha, scale=1.0))]
    fn new(family: &str, alpha: f64, scale: f64) -> PyResult<Self> {
        let family = match family {
            "pareto" => JumpFamily::Pareto,
            "stable" => JumpFamily::Stable,
            "shifted_pareto" => JumpFamily::ShiftedPareto,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown family '{other}' (pareto | stable | shifted_pareto)"
                )))
            }
        };
        Ok(PyTailModel {
            inner: levyfield::TailModel::new(family, alpha, scale).map_err(err)?,
        })
    }

    fn tail_mass(&self, x: f64) -> PyResult<f64> {
        self.inner.tail_mass(x).map_err(err)
    }

    fn tail_quantile(&self, p: f64) -> PyResult<f64> {
        self.inner.tail_quantile(p).map_err(err)
    }

    fn norming_constant(&self, volume: f64) -> PyResult<f64> {
        self.inner.norming_constant(volume).map_err(err)
    }

    fn small_jump_mean(&self, delta: f64) -> PyResult<f64> {
        self.inner.small_jump_mean(delta).map_err(err)
    }

    fn rho_one(&self) -> f64 {
        self.inner.rho_one()
    }

    fn __repr__(&self) -> String {
        format!(
            "TailModel(family={:?}, alpha={}, scale={})",
            self.inner.family, self.inner.alpha, self.inner.scale
        )
    }
}

/// A radial integration kernel, optionally truncated.
#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    inner: levyfield::Kernel,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    #[pyo3(signature = (sigma, dimension, truncation=None))]
    fn gaussian(sigma: f64, dimension: usize, truncation: Option<f64>) -> PyResult<Self> {
        let mut k = levyfield::Kernel::gaussian(sigma, dimension).map_err(err)?;
        if let Some(t) = truncation {
            k = k.truncated(t).map_err(err)?;
        }
        Ok(PyKernel { inner: k })
    }

    #[staticmethod]
    #[pyo3(signature = (epsilon, gamma, dimension, truncation=None))]
    fn power(
        epsilon: f64,
        gamma: f64,
        dimension: usize,
        truncation: Option<f64>,
    ) -> PyResult<Self> {
        let mut k = levyfield::Kernel::power(epsilon, gamma, dimension).map_err(err)?;
        if let Some(t) = truncation {
            k = k.truncated(t).map_err(err)?;
        }
        Ok(PyKernel { inner: k })
    }

    fn eval(&self, u: Vec<f64>) -> PyResult<f64> {
        if u.len() != self.inner.dimension {
            return Err(PyValueError::new_err("point dimension mismatch"));
        }
        Ok(self.inner.eval(&u))
    }

    fn sup_over_set(&self, set: &PyConvexSet, u: Vec<f64>) -> PyResult<f64> {
        check_dims(&set.inner, &u, self.inner.dimension)?;
        Ok(self.inner.sup_over_set(&set.inner, &u))
    }

    /// Tail constant ∫ sup_{v∈B} f^α(v-u) du; returns (value, error_bound).
    #[pyo3(signature = (set, alpha, tol=1e-6))]
    fn alpha_functional(&self, set: &PyConvexSet, alpha: f64, tol: f64) -> PyResult<(f64, f64)> {
        let af = self
            .inner
            .alpha_functional(&set.inner, alpha, tol)
            .map_err(err)?;
        Ok((af.value, af.error_bound))
    }

    fn tail_radius(&self, exponent: f64, budget: f64) -> PyResult<f64> {
        self.inner.tail_radius(exponent, budget).map_err(err)
    }

    /// (constant, index) of the Hölder certificate, or None when truncated.
    fn holder(&self) -> Option<(f64, f64)> {
        self.inner.holder()
    }

    fn length_scale(&self) -> f64 {
        self.inner.length_scale()
    }
}

/// A p-convex index set: a connected union of boxes, balls, or a point.
#[pyclass(name = "ConvexSet", frozen)]
struct PyConvexSet {
    inner: PConvexSet,
}

#[pymethods]
impl PyConvexSet {
    #[staticmethod]
    fn box_(corner: Vec<f64>, sides: Vec<f64>) -> PyResult<Self> {
        Ok(PyConvexSet {
            inner: PConvexSet::single(ConvexBody::cuboid(corner, sides).map_err(err)?),
        })
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        Ok(PyConvexSet {
            inner: PConvexSet::single(ConvexBody::ball(center, radius).map_err(err)?),
        })
    }

    #[staticmethod]
    fn point(at: Vec<f64>) -> Self {
        PyConvexSet {
            inner: PConvexSet::single(ConvexBody::point(at)),
        }
    }

    /// Connected union of sets (each must be a single body).
    #[staticmethod]
    fn union(parts: Vec<PyRef<PyConvexSet>>) -> PyResult<Self> {
        let mut bodies = Vec::new();
        for part in parts {
            bodies.extend(part.inner.bodies.iter().cloned());
        }
        Ok(PyConvexSet {
            inner: PConvexSet::new(bodies).map_err(err)?,
        })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn contains(&self, u: Vec<f64>) -> bool {
        self.inner.contains(&u)
    }

    fn distance(&self, u: Vec<f64>) -> f64 {
        self.inner.distance(&u)
    }

    #[pyo3(signature = (tol=1e-6))]
    fn volume(&self, tol: f64) -> PyResult<(f64, f64)> {
        self.inner.volume(tol).map_err(err)
    }

    /// Intrinsic volumes (V_0..V_d) of the single body.
    fn intrinsic_volumes(&self) -> PyResult<Vec<f64>> {
        if self.inner.bodies.len() != 1 {
            return Err(PyValueError::new_err(
                "intrinsic volumes need a single convex body",
            ));
        }
        Ok(self.inner.bodies[0].intrinsic_volumes())
    }

    fn steiner_volume(&self, r: f64) -> PyResult<f64> {
        if self.inner.bodies.len() != 1 {
            return Err(PyValueError::new_err(
                "steiner volume needs a single convex body",
            ));
        }
        Ok(self.inner.bodies[0].steiner_volume(r))
    }

    fn boundary_tube_bounds(&self, r: f64) -> PyResult<(f64, f64)> {
        if self.inner.bodies.len() != 1 {
            return Err(PyValueError::new_err(
                "tube bounds need a single convex body",
            ));
        }
        Ok(self.inner.bodies[0].boundary_tube_bounds(r))
    }

    /// Cube-grid counts at (k, L): returns (t, p, q).
    fn grid_counts(&self, k: usize, l: usize) -> PyResult<(f64, usize, usize)> {
        let grid = build_grid(&self.inner, k, l).map_err(err)?;
        Ok((grid.t, grid.p_count(), grid.q_count()))
    }

    fn scale(&self, factor: f64) -> Self {
        PyConvexSet {
            inner: self.inner.scale(factor),
        }
    }
}

fn check_dims(set: &PConvexSet, u: &[f64], d: usize) -> PyResult<()> {
    if set.dim() != d || u.len() != d {
        return Err(PyValueError::new_err("dimension mismatch"));
    }
    Ok(())
}

/// Simulates one heavy-part field over `target ⊕ B(margin)` and returns
/// (sup_estimate, upper_bound_or_None, atoms as [(location, magnitude)]).
#[pyfunction]
#[pyo3(signature = (model, kernel, target, margin, grid_step, seed, replicate=0))]
fn simulate_field(
    model: &PyTailModel,
    kernel: &PyKernel,
    target: &PyConvexSet,
    margin: f64,
    grid_step: f64,
    seed: u64,
    replicate: u64,
) -> PyResult<(f64, Option<f64>, Vec<(Vec<f64>, f64)>)> {
    let window = SimulationWindow::new(target.inner.clone(), margin, grid_step, seed, replicate)
        .map_err(err)?;
    let mut rng = substream(seed, replicate, Stream::HeavyJumps);
    let field = simulate_heavy(&window, &model.inner, &kernel.inner, &mut rng);
    let (lo, hi) = target.inner.bbox();
    let mut grid = FieldGrid::covering(&lo, &hi, grid_step).map_err(err)?;
    accumulate_field(&field, &mut grid, 1e-9);
    let mask = GridMask::over(&grid, &target.inner, grid_step);
    let holder = field_holder_constant(&[&field]);
    let sup = grid_supremum(&grid, Some(&mask), holder);
    let atoms = field
        .atoms
        .iter()
        .map(|a| (a.location.clone(), a.magnitude))
        .collect();
    Ok((sup.sup_estimate, sup.upper_bound, atoms))
}

/// Runs one experiment from TOML text and returns the JSON payload string.
/// `kind`: tail | evt | evt_perturbed | oracle | geometry | anticluster | ergodic.
#[pyfunction]
fn run_experiment(kind: &str, config_toml: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml(config_toml).map_err(err)?;
    let report = levyfield::config::validate(&cfg);
    if !report.ok() {
        return Err(PyValueError::new_err(report.render()));
    }
    let result = match kind {
        "tail" => extremes::tail_ratio_experiment(&cfg),
        "evt" | "oracle" => extremes::frechet_experiment(&cfg),
        "evt_perturbed" => extremes::perturbed_frechet_experiment(&cfg),
        "geometry" => extremes::geometry_check(&cfg),
        "anticluster" => extremes::anticluster_diagnostic(&cfg),
        "ergodic" => extremes::ergodic_average_check(&cfg),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown experiment kind '{other}'"
            )))
        }
    }
    .map_err(err)?;
    serde_json::to_string_pretty(&result).map_err(err)
}

/// Validates TOML config text; returns the human-readable report.
#[pyfunction]
fn validate_config(config_toml: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml(config_toml).map_err(err)?;
    Ok(levyfield::config::validate(&cfg).render())
}

#[pymodule]
fn levyfield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTailModel>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyConvexSet>()?;
    m.add_function(wrap_pyfunction!(simulate_field, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    Ok(())
}
