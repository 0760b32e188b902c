//! Python bindings: the block spectra, the thermal error channel, the
//! threshold solver, cluster-fidelity estimates, and the revival scheduler,
//! exposed as plain functions returning dicts and tuples.
//!
//! Models are named by string ("2d" or "3d"), lattices by a small vocabulary:
//! "chain-2d", "chain-3d", "hexagon", "star-2d", "star-3d", "honeycomb-NxM",
//! "diamond-N".

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use thermal_mbqc::dynamics_scheduler::{build_schedule, revival_check};
use thermal_mbqc::fusion_pipeline::thermal_fusion_mc;
use thermal_mbqc::model_blocks::{
    exact_spectrum_oracle, spectral_gap, BlockSpec, LatticeAdjacency, Model,
};
use thermal_mbqc::thermal_channel::{self, ChannelRates, ThermalError};

fn parse_model(name: &str) -> PyResult<Model> {
    match name {
        "2d" => Ok(Model::TwoD),
        "3d" => Ok(Model::ThreeD),
        other => Err(PyValueError::new_err(format!(
            "unknown model {other:?}; expected \"2d\" or \"3d\""
        ))),
    }
}

fn parse_lattice(name: &str) -> PyResult<LatticeAdjacency> {
    if let Some(rest) = name.strip_prefix("honeycomb-") {
        let (nx, ny) = rest
            .split_once('x')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .ok_or_else(|| {
                PyValueError::new_err(format!("bad honeycomb size {rest:?}; expected NxM"))
            })?;
        return Ok(LatticeAdjacency::honeycomb_periodic(nx, ny));
    }
    if let Some(rest) = name.strip_prefix("diamond-") {
        let n: usize = rest.parse().map_err(|_| {
            PyValueError::new_err(format!("bad diamond size {rest:?}; expected an integer"))
        })?;
        if n < 2 {
            return Err(PyValueError::new_err("diamond lattice needs size >= 2"));
        }
        return Ok(LatticeAdjacency::diamond_periodic(n));
    }
    match name {
        "chain-2d" => Ok(LatticeAdjacency::two_center_chain(Model::TwoD)),
        "chain-3d" => Ok(LatticeAdjacency::two_center_chain(Model::ThreeD)),
        "hexagon" => Ok(LatticeAdjacency::single_hexagon()),
        "star-2d" => Ok(LatticeAdjacency::star(Model::TwoD)),
        "star-3d" => Ok(LatticeAdjacency::star(Model::ThreeD)),
        other => Err(PyValueError::new_err(format!(
            "unknown lattice {other:?}; expected chain-2d, chain-3d, hexagon, \
             star-2d, star-3d, honeycomb-NxM, or diamond-N"
        ))),
    }
}

fn rates_dict<'py>(py: Python<'py>, r: &ChannelRates) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t_over_delta", r.t_over_delta)?;
    d.set_item("epsilon", r.epsilon)?;
    d.set_item("p1", r.p1)?;
    d.set_item("p2", r.p2)?;
    d.set_item("p3", r.p3)?;
    d.set_item("p_eff", r.p_eff)?;
    Ok(d)
}

/// Exact block spectrum as a list of (energy, multiplicity) pairs, ascending.
#[pyfunction]
fn spectrum(model: &str, delta: f64) -> PyResult<Vec<(f64, u64)>> {
    Ok(exact_spectrum_oracle(BlockSpec::new(parse_model(model)?, delta)))
}

/// First excited minus ground energy (equals delta for both models).
#[pyfunction]
fn gap(model: &str, delta: f64) -> PyResult<f64> {
    Ok(spectral_gap(BlockSpec::new(parse_model(model)?, delta)))
}

/// Revival period of the block evolution, in time units of 1/delta.
#[pyfunction]
fn revival_period(model: &str, delta: f64) -> PyResult<f64> {
    Ok(parse_model(model)?.revival_period(delta))
}

/// (residual at the revival period, residual at half the period); the first
/// should vanish, the second is the control showing half a period is not a
/// revival.
#[pyfunction]
fn revival_residual(model: &str, delta: f64) -> PyResult<(f64, f64)> {
    let check = revival_check(BlockSpec::new(parse_model(model)?, delta));
    Ok((check.residual, check.control_residual))
}

/// Filter-conditioned thermal error rates at one temperature, as a dict with
/// keys t_over_delta, epsilon, p1, p2, p3, p_eff.
#[pyfunction]
fn channel_rates<'py>(
    py: Python<'py>,
    model: &str,
    delta: f64,
    temperature: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = thermal_channel::channel_rates(parse_model(model)?, delta, temperature);
    rates_dict(py, &r)
}

/// Channel rates over a temperature grid; one dict per grid point.
#[pyfunction]
fn temperature_sweep<'py>(
    py: Python<'py>,
    model: &str,
    delta: f64,
    temperatures: Vec<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = thermal_channel::temperature_sweep(parse_model(model)?, delta, &temperatures);
    rows.iter().map(|r| rates_dict(py, r)).collect()
}

/// Temperature at which the effective error rate reaches p_target. Raises
/// ValueError when the target is invalid or not reached in the searched
/// range.
#[pyfunction]
fn threshold_temperature(model: &str, delta: f64, p_target: f64) -> PyResult<f64> {
    thermal_channel::threshold_temperature(parse_model(model)?, delta, p_target).map_err(
        |e| match e {
            ThermalError::InvalidTarget(_) | ThermalError::UnreachableTarget { .. } => {
                PyValueError::new_err(e.to_string())
            }
        },
    )
}

/// Expected cluster fidelity of the full pipeline on thermal blocks, plus the
/// probability mass discarded by the product cutoff.
#[pyfunction]
fn expected_cluster_fidelity(lattice: &str, delta: f64, temperature: f64) -> PyResult<(f64, f64)> {
    let adj = parse_lattice(lattice)?;
    Ok(thermal_channel::expected_cluster_fidelity(&adj, delta, temperature))
}

/// Sampled cluster fidelity: dict with shots, mean_fidelity, std_error.
#[pyfunction]
fn sample_cluster_fidelity<'py>(
    py: Python<'py>,
    lattice: &str,
    delta: f64,
    temperature: f64,
    shots: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let adj = parse_lattice(lattice)?;
    let stats = thermal_fusion_mc(&adj, delta, temperature, shots, seed)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("shots", stats.shots)?;
    d.set_item("mean_fidelity", stats.mean_fidelity)?;
    d.set_item("std_error", stats.std_error)?;
    Ok(d)
}

/// Largest revival index the greedy measurement schedule uses on a lattice
/// (consuming centers in index order).
#[pyfunction]
fn schedule_horizon(lattice: &str) -> PyResult<usize> {
    let adj = parse_lattice(lattice)?;
    let order: Vec<usize> = (0..adj.n_centers).collect();
    build_schedule(&adj, &order)
        .map(|s| s.horizon)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn thermal_mbqc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(gap, m)?)?;
    m.add_function(wrap_pyfunction!(revival_period, m)?)?;
    m.add_function(wrap_pyfunction!(revival_residual, m)?)?;
    m.add_function(wrap_pyfunction!(channel_rates, m)?)?;
    m.add_function(wrap_pyfunction!(temperature_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(expected_cluster_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(sample_cluster_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_horizon, m)?)?;
    Ok(())
}
