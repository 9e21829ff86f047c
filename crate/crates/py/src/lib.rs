//! Python module `se3_isac`: group types, scenario configuration, episodes, Monte-Carlo runs
//! and the self-checks.

use nalgebra::{Matrix3, Vector3, Vector6};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use se3::lie::{exp_map, log_map};
use se3::scenario::{self, Policy, ScenarioConfig};
use se3::verify::{self, Fault, Level};

create_exception!(se3_isac, Se3IsacError, PyException);

fn err(e: se3::Error) -> PyErr {
    Se3IsacError::new_err(e.to_string())
}

fn rows3(m: &Matrix3<f64>) -> Vec<Vec<f64>> {
    (0..3)
        .map(|r| (0..3).map(|c| m[(r, c)]).collect())
        .collect()
}

#[pyclass(name = "Twist", module = "se3_isac", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyTwist(se3::Twist);

#[pymethods]
impl PyTwist {
    /// Linear part first, then angular.
    #[new]
    fn new(values: [f64; 6]) -> Self {
        Self(se3::Twist::from_slice(&values))
    }

    #[allow(clippy::wrong_self_convention)] // pyo3 methods take &self
    fn to_list(&self) -> Vec<f64> {
        self.0 .0.as_slice().to_vec()
    }

    #[getter]
    fn nu(&self) -> [f64; 3] {
        self.0.nu().into()
    }

    #[getter]
    fn omega(&self) -> [f64; 3] {
        self.0.omega().into()
    }

    fn __repr__(&self) -> String {
        format!("Twist({:?})", self.to_list())
    }
}

#[pyclass(name = "Pose", module = "se3_isac", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPose(se3::Pose);

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (rotation=None, translation=None))]
    fn new(rotation: Option<[[f64; 3]; 3]>, translation: Option<[f64; 3]>) -> PyResult<Self> {
        let rot = rotation.map_or_else(Matrix3::identity, |r| Matrix3::from_fn(|i, j| r[i][j]));
        let pose = se3::Pose::new(rot, Vector3::from(translation.unwrap_or_default()));
        if pose.orthonormality_error() > 1e-9 {
            return Err(Se3IsacError::new_err("rotation is not orthonormal"));
        }
        Ok(Self(pose))
    }

    #[staticmethod]
    #[pyo3(signature = (twist, dt=1.0))]
    fn exp(twist: &PyTwist, dt: f64) -> Self {
        Self(exp_map(&twist.0, dt))
    }

    fn log(&self) -> PyResult<PyTwist> {
        log_map(&self.0).map(PyTwist).map_err(err)
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    fn __mul__(&self, other: &PyPose) -> Self {
        Self(self.0 * other.0)
    }

    /// Right perturbation `T * Exp(delta)`.
    fn plus(&self, delta: &PyTwist) -> Self {
        Self(self.0.plus(&delta.0))
    }

    /// `Log(other^-1 * self)`.
    fn minus(&self, other: &PyPose) -> PyResult<PyTwist> {
        self.0.minus(&other.0).map(PyTwist).map_err(err)
    }

    fn adjoint(&self) -> Vec<Vec<f64>> {
        let a = self.0.adjoint();
        (0..6)
            .map(|r| (0..6).map(|c| a[(r, c)]).collect())
            .collect()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.0.to_matrix();
        (0..4)
            .map(|r| (0..4).map(|c| m[(r, c)]).collect())
            .collect()
    }

    #[getter]
    fn rotation(&self) -> Vec<Vec<f64>> {
        rows3(&self.0.rot)
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.0.trans.into()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pose(rotation={:?}, translation={:?})",
            self.rotation(),
            self.translation()
        )
    }
}

#[pyclass(name = "ScenarioConfig", module = "se3_isac", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(ScenarioConfig);

#[pymethods]
impl PyConfig {
    /// Defaults, optionally overlaid with TOML text.
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        match toml {
            Some(t) => ScenarioConfig::from_toml_str(t).map(Self).map_err(err),
            None => Ok(Self(ScenarioConfig::default())),
        }
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        ScenarioConfig::load(&path).map(Self).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.run.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.0.run.seed = v;
    }

    #[getter]
    fn n_epochs(&self) -> usize {
        self.0.run.n_epochs
    }

    #[setter]
    fn set_n_epochs(&mut self, v: usize) {
        self.0.run.n_epochs = v;
    }

    #[getter]
    fn mc_runs(&self) -> usize {
        self.0.run.mc_runs
    }

    #[setter]
    fn set_mc_runs(&mut self, v: usize) {
        self.0.run.mc_runs = v;
    }

    #[getter]
    fn noise_enabled(&self) -> bool {
        self.0.noise.enabled
    }

    #[setter]
    fn set_noise_enabled(&mut self, v: bool) {
        self.0.noise.enabled = v;
    }

    fn uav_pose(&self) -> PyPose {
        PyPose(self.0.uav_pose())
    }

    fn gu_pose(&self) -> PyPose {
        PyPose(self.0.gu_pose())
    }
}

fn policy(name: &str) -> PyResult<Policy> {
    name.parse().map_err(err)
}

/// One episode as a dict of per-epoch lists; `failure` is None or the error text.
#[pyfunction]
#[pyo3(signature = (config, policy_name="optimized", run=0))]
fn run_episode<'py>(
    py: Python<'py>,
    config: &PyConfig,
    policy_name: &str,
    run: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = policy(policy_name)?;
    let cfg = config.0.clone();
    let trace = py.detach(move || scenario::run_episode(&cfg, p, run));
    let d = PyDict::new(py);
    let col = |f: &dyn Fn(&scenario::EpochRecord) -> Vec<f64>| {
        trace.records.iter().map(f).collect::<Vec<_>>()
    };
    d.set_item("uav_position", col(&|r| r.uav_position.as_slice().to_vec()))?;
    d.set_item("gu_position", col(&|r| r.gu_position.as_slice().to_vec()))?;
    d.set_item("gu_estimate", col(&|r| r.gu_estimate.as_slice().to_vec()))?;
    d.set_item("twist", col(&|r| r.twist.0.as_slice().to_vec()))?;
    d.set_item("zeta", col(&|r| r.zeta.as_slice().to_vec()))?;
    d.set_item("zeta_hat", col(&|r| r.zeta_hat.as_slice().to_vec()))?;
    d.set_item("cpcrb_pose", col(&|r| r.cpcrb_t.as_slice().to_vec()))?;
    d.set_item(
        "logdet_cpcrb_pose",
        trace
            .records
            .iter()
            .map(|r| r.logdet_cpcrb_t)
            .collect::<Vec<_>>(),
    )?;
    d.set_item(
        "nees",
        trace.records.iter().map(|r| r.nees).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "fallback",
        trace.records.iter().map(|r| r.fallback).collect::<Vec<_>>(),
    )?;
    d.set_item("failure", trace.failure.map(|e| e.to_string()))?;
    Ok(d)
}

/// Monte-Carlo aggregate: metrics rows as dicts, mean bias and NEES per epoch.
#[pyfunction]
#[pyo3(signature = (config, policy_name="optimized"))]
fn monte_carlo<'py>(
    py: Python<'py>,
    config: &PyConfig,
    policy_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p = policy(policy_name)?;
    let cfg = config.0.clone();
    let res = py
        .detach(move || scenario::monte_carlo(&cfg, p))
        .map_err(err)?;
    let d = PyDict::new(py);
    let mut rows = Vec::with_capacity(res.rows.len());
    for r in &res.rows {
        let row = PyDict::new(py);
        row.set_item("epoch", r.epoch)?;
        for (k, v) in [
            ("rmse_pos", r.rmse_pos),
            ("rmse_tau", r.rmse_tau),
            ("rmse_phi", r.rmse_phi),
            ("rmse_theta", r.rmse_theta),
            ("rmse_mu", r.rmse_mu),
            ("cpcrb_tau", r.cpcrb_tau),
            ("cpcrb_phi", r.cpcrb_phi),
            ("cpcrb_theta", r.cpcrb_theta),
            ("cpcrb_mu", r.cpcrb_mu),
            ("logdet_cpcrb_T", r.logdet_cpcrb_t),
        ] {
            row.set_item(k, v)?;
        }
        row.set_item("failures", r.failures)?;
        rows.push(row);
    }
    d.set_item("policy", res.policy.name())?;
    d.set_item("rows", rows)?;
    d.set_item(
        "bias",
        res.bias
            .iter()
            .map(|b| b.as_slice().to_vec())
            .collect::<Vec<_>>(),
    )?;
    d.set_item("nees", res.nees.clone())?;
    d.set_item("episodes", res.episodes.len())?;
    d.set_item("failed", res.failed)?;
    Ok(d)
}

/// Runs the self-check batteries; returns a list of dicts with name, passed, metric and detail.
#[pyfunction]
#[pyo3(signature = (level="fast"))]
fn run_checks<'py>(py: Python<'py>, level: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let level = match level {
        "fast" => Level::Fast,
        "full" => Level::Full,
        other => return Err(Se3IsacError::new_err(format!("unknown level `{other}`"))),
    };
    let out = py.detach(move || verify::run_checks(level, Fault::None));
    out.into_iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("name", c.name)?;
            d.set_item("passed", c.passed)?;
            d.set_item("metric", c.metric)?;
            d.set_item("threshold", c.threshold)?;
            d.set_item("detail", c.detail)?;
            d.set_item("seconds", c.seconds)?;
            Ok(d)
        })
        .collect()
}

/// Right Jacobian of the group at `twist`, as nested lists.
#[pyfunction]
fn right_jacobian(twist: &PyTwist) -> Vec<Vec<f64>> {
    let j = se3::lie::right_jacobian(&twist.0);
    (0..6)
        .map(|r| (0..6).map(|c| j[(r, c)]).collect())
        .collect()
}

/// Left-multiplies the twist by the adjoint of `pose`.
#[pyfunction]
fn adjoint_apply(pose: &PyPose, twist: &PyTwist) -> PyTwist {
    let v: Vector6<f64> = pose.0.adjoint() * twist.0 .0;
    PyTwist(se3::Twist(v))
}

#[pymodule]
fn se3_isac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("Se3IsacError", m.py().get_type::<Se3IsacError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTwist>()?;
    m.add_class::<PyPose>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_function(wrap_pyfunction!(right_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(adjoint_apply, m)?)?;
    Ok(())
}
