//! Python bindings for the `lssem` solver.

use std::collections::HashMap;
use std::time::Instant;

use lssem::basis;
use lssem::norms;
use lssem::postproc::{compute_errors, convergence_sweep, ErrorReport};
use lssem::solver::{solve_system, SolverConfig};
use lssem::{build_case_mesh, make_case, CaseData, CaseParams, Error, LeastSquaresSystem, Mesh, SpectralField};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::UnknownCase(_) | Error::InvalidOrder { .. } | Error::Layout { .. } | Error::Usage(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn report_dict(r: &ErrorReport) -> HashMap<&'static str, f64> {
    HashMap::from([
        ("case", r.case_id as f64),
        ("W", r.degree as f64),
        ("param", r.param),
        ("E_u", r.e_u),
        ("E_p", r.e_p),
        ("E_c", r.e_c),
        ("iters", r.iterations as f64),
        ("converged", if r.converged { 1.0 } else { 0.0 }),
        ("seconds", r.seconds),
    ])
}

fn nodes(set: lssem::Result<basis::NodeSet1D>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = set.map_err(to_py)?;
    Ok((s.nodes, s.weights))
}

/// `(nodes, weights)` of the n-point Gauss-Lobatto-Legendre rule.
#[pyfunction]
fn gll_nodes(n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    nodes(basis::gll_nodes(n))
}

/// `(nodes, weights)` of the n-point Gauss-Legendre rule.
#[pyfunction]
fn gauss_nodes(n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    nodes(basis::gauss_nodes(n))
}

/// Discrete `H^{1/2}` seminorm matrix on n GLL points, as a list of rows.
#[pyfunction]
fn half_seminorm_matrix(n: usize) -> PyResult<Vec<Vec<f64>>> {
    let s = norms::half_seminorm_matrix(&basis::gll_nodes(n).map_err(to_py)?);
    Ok(s.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// One of the six example problems discretized at degree `w`.
#[pyclass(unsendable)]
struct Problem {
    mesh: Mesh,
    case: CaseData,
    system: LeastSquaresSystem,
    #[pyo3(get)]
    w: usize,
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (case_id, w, re=None, nu=None, quad_extra=3))]
    fn new(case_id: usize, w: usize, re: Option<f64>, nu: Option<f64>, quad_extra: usize) -> PyResult<Self> {
        let mesh = build_case_mesh(case_id).map_err(to_py)?;
        let case = make_case(case_id, CaseParams { reynolds: re, nu }).map_err(to_py)?;
        let system = LeastSquaresSystem::new(&mesh, &case, w, Some(w + quad_extra)).map_err(to_py)?;
        Ok(Self { mesh, case, system, w })
    }

    #[getter]
    fn case_id(&self) -> usize {
        self.case.case_id
    }

    #[getter]
    fn n_dofs(&self) -> usize {
        self.system.n_dofs()
    }

    /// Solves with PCG; returns `(coefficients, error report)`.
    #[pyo3(signature = (tol=1e-10, max_iter=20000))]
    fn solve(&self, tol: f64, max_iter: usize) -> PyResult<(Vec<f64>, HashMap<&'static str, f64>)> {
        let config = SolverConfig { tol, max_iter, ..SolverConfig::default() };
        let start = Instant::now();
        let (x, rep) = solve_system(&self.system, &config).map_err(to_py)?;
        let mut r = compute_errors(&x, &self.case, &self.mesh).map_err(to_py)?;
        r.iterations = rep.iterations;
        r.converged = rep.converged;
        r.seconds = start.elapsed().as_secs_f64();
        Ok((x.into_vec(), report_dict(&r)))
    }

    /// Value of the least-squares functional at `x`.
    fn functional(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.system.evaluate_functional_slice(&x).map_err(to_py)?.total())
    }

    fn normal_action(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let mut y = vec![0.0; x.len()];
        self.system.normal_action(&x, &mut y).map_err(to_py)?;
        Ok(y)
    }

    fn normal_rhs(&self) -> Vec<f64> {
        self.system.normal_rhs().into_vec()
    }

    /// Error norms of `x` against the exact solution.
    fn errors(&self, x: Vec<f64>) -> PyResult<HashMap<&'static str, f64>> {
        let field = SpectralField::from_vec(self.mesh.n_elements(), self.w, x).map_err(to_py)?;
        Ok(report_dict(&compute_errors(&field, &self.case, &self.mesh).map_err(to_py)?))
    }

    /// GLL interpolant of the exact solution.
    fn interpolate_exact(&self) -> PyResult<Vec<f64>> {
        Ok(SpectralField::exact_interpolant(&self.mesh, self.w, &self.case).map_err(to_py)?.into_vec())
    }
}

/// Solves `case_id` for each degree and returns one report per degree.
#[pyfunction]
#[pyo3(signature = (case_id, degrees, re=None, nu=None, tol=1e-10, max_iter=20000))]
fn sweep(
    case_id: usize,
    degrees: Vec<usize>,
    re: Option<f64>,
    nu: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Vec<HashMap<&'static str, f64>>> {
    let mesh = build_case_mesh(case_id).map_err(to_py)?;
    let case = make_case(case_id, CaseParams { reynolds: re, nu }).map_err(to_py)?;
    let config = SolverConfig { tol, max_iter, ..SolverConfig::default() };
    let res = convergence_sweep(&mesh, &case, &degrees, &config).map_err(to_py)?;
    Ok(res.reports.iter().map(report_dict).collect())
}

#[pymodule]
fn lssem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gll_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(half_seminorm_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_class::<Problem>()?;
    Ok(())
}
