//! Python bindings: quaternion maps, DMP training/rollout, and the paired
//! closed-loop episode simulation.

use nalgebra::Vector3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cotrans::config::ExperimentConfig;
use cotrans::dmp;
use cotrans::quat::{self, RotVec, UnitQuaternion};
use cotrans::sim::{self, Mode};

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn arr3(v: Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn to_value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One rollout sample: `(t, p, q, pdot, omega)`.
type RolloutRow = (f64, [f64; 3], [f64; 4], [f64; 3], [f64; 3]);

/// Hamilton product of two unit quaternions `[w, x, y, z]`.
#[pyfunction]
fn quat_product(q1: [f64; 4], q2: [f64; 4]) -> [f64; 4] {
    (UnitQuaternion::from_wxyz(q1) * UnitQuaternion::from_wxyz(q2)).wxyz()
}

/// Conjugate (inverse) of a unit quaternion.
#[pyfunction]
fn quat_conjugate(q: [f64; 4]) -> [f64; 4] {
    UnitQuaternion::from_wxyz(q).conjugate().wxyz()
}

/// Quaternion logarithm as a rotation vector.
#[pyfunction]
fn quat_log(q: [f64; 4]) -> PyResult<[f64; 3]> {
    let rv = quat::log(&UnitQuaternion::from_wxyz(q)).map_err(to_value_err)?;
    Ok(arr3(rv.0))
}

/// Quaternion exponential of a rotation vector (`‖v‖ < 2π`).
#[pyfunction]
fn quat_exp(v: [f64; 3]) -> PyResult<[f64; 4]> {
    Ok(quat::exp(RotVec(vec3(v))).map_err(to_value_err)?.wxyz())
}

/// A trained DMP for one signal (position or orientation).
#[pyclass(name = "DmpModel", skip_from_py_object)]
#[derive(Clone)]
struct PyDmpModel {
    inner: dmp::DmpModel,
}

#[pymethods]
impl PyDmpModel {
    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn n_kernels(&self) -> usize {
        self.inner.kernels.len()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyDmpModel { inner: dmp::DmpModel::from_json(text).map_err(to_value_err)? })
    }

    fn __repr__(&self) -> String {
        format!("DmpModel(kind={}, kernels={})", self.inner.kind, self.inner.kernels.len())
    }
}

/// Train position and orientation DMPs from a demonstration.
///
/// `t` is a uniform time grid, `positions` the 3-vectors and `orientations`
/// unit quaternions `[w, x, y, z]` sampled on it.
#[pyfunction]
#[pyo3(signature = (t, positions, orientations, n_kernels = 30, alpha_z = 40.0, beta_z = 10.0))]
fn train(
    t: Vec<f64>,
    positions: Vec<[f64; 3]>,
    orientations: Vec<[f64; 4]>,
    n_kernels: usize,
    alpha_z: f64,
    beta_z: f64,
) -> PyResult<(PyDmpModel, PyDmpModel)> {
    let demo = dmp::Demonstration {
        t,
        positions: positions.into_iter().map(vec3).collect(),
        orientations: orientations.into_iter().map(UnitQuaternion::from_wxyz).collect(),
        velocities: None,
        accelerations: None,
    };
    let models = dmp::train_lwr(&demo, n_kernels, alpha_z, beta_z).map_err(to_value_err)?;
    Ok((PyDmpModel { inner: models.position }, PyDmpModel { inner: models.orientation }))
}

/// Integrate the trained DMP pair to a new target pose.
///
/// Returns per-sample rows `(t, p, q, pdot, omega)`.
#[pyfunction]
#[pyo3(signature = (position, orientation, p0, q0, p_goal, q_goal, tau_p, tau_o, dt = 0.002, t_end = None))]
#[allow(clippy::too_many_arguments)]
fn rollout(
    position: &PyDmpModel,
    orientation: &PyDmpModel,
    p0: [f64; 3],
    q0: [f64; 4],
    p_goal: [f64; 3],
    q_goal: [f64; 4],
    tau_p: f64,
    tau_o: f64,
    dt: f64,
    t_end: Option<f64>,
) -> PyResult<Vec<RolloutRow>> {
    let t_end = t_end.unwrap_or(1.5 * tau_p.max(tau_o));
    let traj = dmp::rollout(
        &position.inner,
        &orientation.inner,
        vec3(p0),
        UnitQuaternion::from_wxyz(q0),
        vec3(p_goal),
        UnitQuaternion::from_wxyz(q_goal),
        tau_p,
        tau_o,
        dt,
        t_end,
    )
    .map_err(to_value_err)?;
    Ok(traj
        .into_iter()
        .map(|pt| (pt.t, arr3(pt.p), pt.q.wxyz(), arr3(pt.pdot), arr3(pt.omega)))
        .collect())
}

/// One transfer task: robot start pose, hidden target pose, intended duration.
#[pyclass(name = "Scenario", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: sim::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (start_p, start_q, target_p, target_q, duration, id = "scenario".to_string()))]
    fn new(
        start_p: [f64; 3],
        start_q: [f64; 4],
        target_p: [f64; 3],
        target_q: [f64; 4],
        duration: f64,
        id: String,
    ) -> Self {
        PyScenario {
            inner: sim::Scenario {
                id,
                start_p: vec3(start_p),
                start_q: UnitQuaternion::from_wxyz(start_q),
                target_p: vec3(target_p),
                target_q: UnitQuaternion::from_wxyz(target_q),
                duration,
            },
        }
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn target_p(&self) -> [f64; 3] {
        arr3(self.inner.target_p)
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    fn __repr__(&self) -> String {
        format!("Scenario(id={}, duration={:.2})", self.inner.id, self.inner.duration)
    }
}

/// Deterministic randomized transfer scenarios.
#[pyfunction]
fn random_scenarios(seed: u64, count: usize) -> Vec<PyScenario> {
    sim::random_scenarios(seed, count).into_iter().map(|inner| PyScenario { inner }).collect()
}

/// Run one closed-loop episode and return the aggregate summary.
///
/// `mode` is `"dmp_ekf"` or `"admittance"`.
#[pyfunction]
fn run_episode<'py>(
    py: Python<'py>,
    position: &PyDmpModel,
    orientation: &PyDmpModel,
    scenario: &PyScenario,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: Mode = mode.parse().map_err(PyValueError::new_err)?;
    let models = cotrans::TrainedModels {
        position: position.inner.clone(),
        orientation: orientation.inner.clone(),
    };
    let setup = ExperimentConfig::with_random_scenarios(0, 0)
        .episode_setup(models)
        .map_err(to_value_err)?;
    let result = sim::run_episode(&setup, mode, &scenario.inner)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("mode", result.mode.to_string())?;
    out.set_item("scenario_id", &result.scenario_id)?;
    out.set_item("work_J", result.work_j)?;
    out.set_item("mean_force_N", result.mean_force_n)?;
    out.set_item("mean_torque_Nm", result.mean_torque_nm)?;
    out.set_item("est_err_pos_m", result.est_err_pos_m)?;
    out.set_item("est_err_ori_rad", result.est_err_ori_rad)?;
    out.set_item("settled", result.settled)?;
    out.set_item("steps", result.rows.len())?;
    out.set_item("max_innovation_residual", result.max_innovation_residual)?;
    Ok(out)
}

#[pymodule]
fn cotrans_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(quat_product, m)?)?;
    m.add_function(wrap_pyfunction!(quat_conjugate, m)?)?;
    m.add_function(wrap_pyfunction!(quat_log, m)?)?;
    m.add_function(wrap_pyfunction!(quat_exp, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(random_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_class::<PyDmpModel>()?;
    m.add_class::<PyScenario>()?;
    Ok(())
}
