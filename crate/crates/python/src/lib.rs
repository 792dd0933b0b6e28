//! Python bindings: shapes are passed as JSON shape configurations.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use residue_lab::conformal::energy_breakdown;
use residue_lab::continuation::{beta_eval, body_beta, body_profile, distance_profile, polygon_beta, ProfileOptions, WeightKind};
use residue_lab::manifold::{ManifoldSpec, Shape, ShapeConfig};
use residue_lab::oracles;
use residue_lab::residues::{body_residues, closed_residues};
use residue_lab::verify::run_check;

fn shape(json: &str) -> Result<ManifoldSpec, String> {
    ShapeConfig::from_json(json).and_then(|c| c.build()).map_err(|e| e.to_string())
}

/// (pole, weight, value, method, error)
pub type ResidueRow = (f64, String, f64, String, f64);

fn real(z: f64) -> Complex64 {
    Complex64::new(z, 0.0)
}

/// Real parts of B(z) for a shape.
pub fn beta_values(json: &str, z: &[f64], weight: &str, order: usize) -> Result<Vec<f64>, String> {
    let spec = shape(json)?;
    let opts = ProfileOptions { order, ..Default::default() };
    let err = |e: residue_lab::continuation::ContinuationError| e.to_string();
    if let Shape::PolygonKnot { vertices } = &spec.shape {
        return z.iter().map(|&x| polygon_beta(vertices, real(x)).map(|b| b.value.re).map_err(err)).collect();
    }
    if spec.is_body {
        let p = body_profile(&spec, &opts).map_err(err)?;
        return z.iter().map(|&x| body_beta(&p, spec.n, real(x)).map(|b| b.value.re).map_err(err)).collect();
    }
    let w = WeightKind::parse(weight).ok_or_else(|| format!("unknown weight '{weight}'"))?;
    let p = distance_profile(&spec, &w, &opts).map_err(err)?;
    z.iter().map(|&x| beta_eval(&p, real(x)).map(|b| b.value.re).map_err(err)).collect()
}

/// Curvature residues of a shape.
pub fn residue_table(json: &str, order: usize) -> Result<Vec<ResidueRow>, String> {
    let spec = shape(json)?;
    let r = if spec.is_body { body_residues(&spec, order) } else { closed_residues(&spec, order) }.map_err(|e| e.to_string())?;
    Ok(r.entries.into_iter().map(|e| (e.pole, e.weight, e.value, e.method, e.error)).collect())
}

/// (gw, weyl, chern, z_energy, r8, r8_nu, residual) of a 4-dimensional hypersurface.
pub fn energies(json: &str, order: usize) -> Result<[f64; 7], String> {
    let b = energy_breakdown(&shape(json)?, order).map_err(|e| e.to_string())?;
    Ok([b.gw, b.weyl, b.chern, b.z_energy, b.r8, b.r8_nu, b.residual])
}

#[pyfunction]
#[pyo3(signature = (shape, z, weight = "one", order = 24))]
fn beta(shape: &str, z: Vec<f64>, weight: &str, order: usize) -> PyResult<Vec<f64>> {
    beta_values(shape, &z, weight, order).map_err(PyValueError::new_err)
}

#[pyfunction]
#[pyo3(signature = (shape, order = 24))]
fn residues(shape: &str, order: usize) -> PyResult<Vec<ResidueRow>> {
    residue_table(shape, order).map_err(PyValueError::new_err)
}

#[pyfunction]
#[pyo3(signature = (shape, order = 24))]
fn energy(shape: &str, order: usize) -> PyResult<(f64, f64, f64, f64, f64, f64, f64)> {
    let [a, b, c, d, e, f, g] = energies(shape, order).map_err(PyValueError::new_err)?;
    Ok((a, b, c, d, e, f, g))
}

#[pyfunction]
fn beta_sphere(n: usize, z: f64) -> PyResult<f64> {
    oracles::beta_sphere(n, real(z)).map(|v| v.re).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn beta_ball(n: usize, z: f64) -> PyResult<f64> {
    oracles::beta_ball(n, real(z)).map(|v| v.re).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// (𝓔, R(−8), R_ν(−8)) closed forms of the spheroid with axis a.
#[pyfunction]
fn spheroid_closed_forms(a: f64) -> PyResult<(f64, f64, f64)> {
    let f = || -> Result<(f64, f64, f64), oracles::OracleError> {
        Ok((oracles::spheroid_gw(a)?, oracles::spheroid_r8(a)?, oracles::spheroid_r8_nu_corrected(a)?))
    };
    f().map_err(|e| PyValueError::new_err(e.to_string()))
}

/// One numbered acceptance check: (passed, detail lines).
#[pyfunction]
fn verify_check(id: usize) -> PyResult<(bool, Vec<String>)> {
    if !(1..=11).contains(&id) {
        return Err(PyRuntimeError::new_err(format!("numeric checks are numbered 1..=11, got {id}")));
    }
    let r = run_check(id);
    Ok((r.passed, r.lines))
}

#[pymodule]
fn residue_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(residues, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(beta_sphere, m)?)?;
    m.add_function(wrap_pyfunction!(beta_ball, m)?)?;
    m.add_function(wrap_pyfunction!(spheroid_closed_forms, m)?)?;
    m.add_function(wrap_pyfunction!(verify_check, m)?)?;
    Ok(())
}
