//! Python bindings: mesh generation, problem setup, the split solves,
//! reconstruction, solvation energy, PQR parsing and the level-set
//! diagnostics.

use pbesolve::coulomb::CoulombField;
use pbesolve::mesh::{generate_disk_mesh, load_mesh, refine_uniform, save_mesh, Mesh};
use pbesolve::model::{ChargeSystem, IonSpecies, PbeProblem, Permittivity, UnitMode};
use pbesolve::solver::{
    reconstruct_phi, solvation_energy, solve_gpbe_regular, solve_lgpbe, BcMode, NewtonParams,
    SplitSolution, Splitting,
};
use pbesolve::verify::{convergence_study, manufactured_case, theta_curve, CaseId};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::sync::Arc;

fn err_to_py(e: pbesolve::Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// The continuous model: permittivities, temperature, ion species.
#[pyclass(name = "Problem")]
#[derive(Clone)]
struct PyProblem {
    inner: PbeProblem,
}

#[pymethods]
impl PyProblem {
    /// Problem(eps_m, eps_s, concentrations, valences, unit_mode="synthetic",
    ///         temperature=298.15)
    #[new]
    #[pyo3(signature = (eps_m, eps_s, concentrations, valences, unit_mode="synthetic", temperature=298.15))]
    fn new(
        eps_m: f64,
        eps_s: f64,
        concentrations: Vec<f64>,
        valences: Vec<i32>,
        unit_mode: &str,
        temperature: f64,
    ) -> PyResult<Self> {
        if concentrations.len() != valences.len() {
            return Err(PyValueError::new_err(
                "concentrations and valences must have equal length",
            ));
        }
        let species = concentrations
            .iter()
            .zip(&valences)
            .map(|(&m, &xi)| IonSpecies::new(m, xi))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err_to_py)?;
        let mode = match unit_mode {
            "synthetic" => UnitMode::Synthetic,
            "physical" => UnitMode::Physical,
            _ => return Err(PyValueError::new_err("unit_mode must be synthetic or physical")),
        };
        let inner = PbeProblem::new(
            eps_m,
            Permittivity::Constant(eps_s),
            temperature,
            species,
            pbesolve::model::PhysicalConstants::default(),
            mode,
        )
        .map_err(err_to_py)?;
        Ok(PyProblem { inner })
    }

    /// The derived ionic prefactor 4 pi e0^2 / (kB T) (1 in synthetic units).
    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(eps_m={}, species={}, scale={})",
            self.inner.eps_m,
            self.inner.species.len(),
            self.inner.scale
        )
    }
}

/// Interface-fitted triangulation of the concentric-disk geometry.
#[pyclass(name = "Mesh")]
#[derive(Clone)]
struct PyMesh {
    inner: Arc<Mesh>,
}

#[pymethods]
impl PyMesh {
    /// Mesh.disk(r_m, r_iel, half_width, resolution)
    #[staticmethod]
    fn disk(r_m: f64, r_iel: f64, half_width: f64, resolution: usize) -> PyResult<Self> {
        let mesh = generate_disk_mesh(r_m, r_iel, half_width, resolution).map_err(err_to_py)?;
        Ok(PyMesh {
            inner: Arc::new(mesh),
        })
    }

    /// Uniform red refinement with circle snapping.
    fn refined(&self) -> PyResult<Self> {
        let mesh = refine_uniform(&self.inner).map_err(err_to_py)?;
        Ok(PyMesh {
            inner: Arc::new(mesh),
        })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.inner.n_triangles()
    }

    #[getter]
    fn max_edge_length(&self) -> f64 {
        self.inner.max_edge_length()
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes.iter().map(|p| (p[0], p[1])).collect()
    }

    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner
            .triangles
            .iter()
            .map(|t| (t[0], t[1], t[2]))
            .collect()
    }

    /// Region tag codes per element: 0 molecule, 1 exclusion layer, 2 ions.
    fn region_tags(&self) -> Vec<i32> {
        self.inner.elem_region.iter().map(|t| t.code()).collect()
    }

    fn save(&self) -> String {
        save_mesh(&self.inner)
    }

    #[staticmethod]
    fn load(text: &str) -> PyResult<Self> {
        Ok(PyMesh {
            inner: Arc::new(load_mesh(text).map_err(err_to_py)?),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh({} nodes, {} triangles)",
            self.inner.n_nodes(),
            self.inner.n_triangles()
        )
    }
}

/// A solved regular component plus its reconstruction.
#[pyclass(name = "Solution")]
struct PySolution {
    solution: SplitSolution,
    field: CoulombField,
    problem: PbeProblem,
    phi_nodal: Vec<f64>,
}

#[pymethods]
impl PySolution {
    /// Nodal values of the regular component u.
    fn u(&self) -> Vec<f64> {
        self.solution.u.values.clone()
    }

    /// Nodal values of the reconstructed full potential.
    fn phi(&self) -> Vec<f64> {
        self.phi_nodal.clone()
    }

    /// Nodal harmonic component (3-term splitting only).
    fn u_harmonic(&self) -> Option<Vec<f64>> {
        self.solution.u_harmonic.as_ref().map(|f| f.values.clone())
    }

    /// Iteration history and certificates.
    fn report(&self, py: Python<'_>) -> PyResult<PyObject> {
        let d = pyo3::types::PyDict::new(py);
        let r = &self.solution.report;
        d.set_item("newton_iterations", r.newton_iterations)?;
        d.set_item("cg_iterations", r.cg_iterations)?;
        d.set_item("final_residual", r.final_residual)?;
        d.set_item("converged", r.converged)?;
        d.set_item("b_max", r.b_max)?;
        let hist: Vec<(usize, f64, f64, f64)> = r
            .history
            .iter()
            .map(|h| (h.iteration, h.residual_norm, h.energy, h.step_length))
            .collect();
        d.set_item("history", hist)?;
        Ok(d.into())
    }

    /// Solvation energy (2-term splitting): (dimensionless, erg).
    fn solvation_energy(&self) -> PyResult<(f64, f64)> {
        let e = solvation_energy(&self.solution, &self.field.charges, &self.problem)
            .map_err(err_to_py)?;
        Ok((e.dimensionless, e.erg))
    }

    /// Level-set measure curve of u on `n` uniform levels.
    fn theta_curve(&self, n: usize) -> PyResult<Vec<(f64, f64)>> {
        pbesolve::verify::theta_curve_of_field(&self.solution.u, n.max(1)).map_err(err_to_py)
    }
}

fn parse_splitting(s: &str) -> PyResult<Splitting> {
    match s {
        "two_term" => Ok(Splitting::TwoTerm),
        "three_term" => Ok(Splitting::ThreeTerm),
        _ => Err(PyValueError::new_err("splitting must be two_term or three_term")),
    }
}

fn parse_bc(s: &str) -> PyResult<BcMode> {
    match s {
        "zero" => Ok(BcMode::Zero),
        "restricted_g" => Ok(BcMode::RestrictedG),
        _ => Err(PyValueError::new_err("bc must be zero or restricted_g")),
    }
}

/// Solve the regular component of the chosen splitting for point charges
/// at `positions` with `valences`.
#[pyfunction]
#[pyo3(signature = (problem, mesh, positions, valences, splitting="two_term", bc="restricted_g", linearized=false, tol=1e-10, max_iterations=50))]
#[allow(clippy::too_many_arguments)]
fn solve(
    problem: &PyProblem,
    mesh: &PyMesh,
    positions: Vec<(f64, f64)>,
    valences: Vec<f64>,
    splitting: &str,
    bc: &str,
    linearized: bool,
    tol: f64,
    max_iterations: usize,
) -> PyResult<PySolution> {
    if positions.len() != valences.len() {
        return Err(PyValueError::new_err("positions and valences must have equal length"));
    }
    let charges = ChargeSystem::new(
        positions
            .iter()
            .zip(&valences)
            .map(|(&(x, y), &z)| pbesolve::model::Charge {
                position: [x, y, 0.0],
                valence: z,
                radius: 0.0,
            })
            .collect(),
        2,
    )
    .map_err(err_to_py)?;
    let field = CoulombField::for_problem(charges, &problem.inner, mesh.inner.diameter())
        .map_err(err_to_py)?;
    pbesolve::solver::check_charges(&mesh.inner, &field.charges).map_err(err_to_py)?;
    let split = parse_splitting(splitting)?;
    let bc_mode = parse_bc(bc)?;
    let params = NewtonParams {
        tol,
        max_iterations,
        ..NewtonParams::default()
    };
    let solution = if linearized {
        solve_lgpbe(&problem.inner, &mesh.inner, &field, split, bc_mode).map_err(err_to_py)?
    } else {
        solve_gpbe_regular(
            &problem.inner,
            &mesh.inner,
            &field,
            split,
            bc_mode,
            &params,
            None,
        )
        .map_err(err_to_py)?
    };
    if !solution.report.converged {
        return Err(PyRuntimeError::new_err(format!(
            "solver did not converge: residual {:.3e} after {} iterations",
            solution.report.final_residual, solution.report.newton_iterations
        )));
    }
    let phi = reconstruct_phi(&solution, &field).map_err(err_to_py)?;
    Ok(PySolution {
        phi_nodal: phi.nodal,
        solution,
        field,
        problem: problem.inner.clone(),
    })
}

/// Parse PQR text into (x, y, z, charge, radius) tuples.
#[pyfunction]
fn parse_pqr(text: &str) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let cs = pbesolve::geometry::ingest_pqr(std::io::Cursor::new(text)).map_err(err_to_py)?;
    Ok(cs
        .charges
        .iter()
        .map(|c| {
            (
                c.position[0],
                c.position[1],
                c.position[2],
                c.valence,
                c.radius,
            )
        })
        .collect())
}

/// Level-set measure curve of nodal values on a mesh.
#[pyfunction]
fn theta_curve_of(mesh: &PyMesh, values: Vec<f64>, levels: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    theta_curve(&mesh.inner, &values, &levels).map_err(err_to_py)
}

/// Run a manufactured convergence study; returns (rows, slope_l2, slope_h1)
/// with rows of (h, l2, h1).
#[pyfunction]
#[pyo3(signature = (case, resolution=16, levels=3))]
fn manufactured_convergence(
    case: &str,
    resolution: usize,
    levels: usize,
) -> PyResult<(Vec<(f64, f64, f64)>, Option<f64>, Option<f64>)> {
    let case = manufactured_case(CaseId::parse(case).map_err(err_to_py)?);
    let mut meshes = vec![Arc::new(
        generate_disk_mesh(
            pbesolve::verify::R_M,
            pbesolve::verify::R_IEL,
            pbesolve::verify::HALF_WIDTH,
            resolution,
        )
        .map_err(err_to_py)?,
    )];
    for _ in 1..levels.max(1) {
        meshes.push(Arc::new(
            refine_uniform(meshes.last().unwrap()).map_err(err_to_py)?,
        ));
    }
    let table = convergence_study(&case, &meshes, &NewtonParams::default());
    if let Some(msg) = table.aborted {
        return Err(PyRuntimeError::new_err(msg));
    }
    Ok((
        table.rows.iter().map(|r| (r.h, r.l2, r.h1)).collect(),
        table.slope_l2,
        table.slope_h1,
    ))
}

#[pymodule]
fn pbesolve_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(parse_pqr, m)?)?;
    m.add_function(wrap_pyfunction!(theta_curve_of, m)?)?;
    m.add_function(wrap_pyfunction!(manufactured_convergence, m)?)?;
    Ok(())
}
