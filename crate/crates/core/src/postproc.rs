//! Error norms against the exact solution and convergence sweeps.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::assembly::{LeastSquaresSystem, SpectralField, Var};
use crate::basis::basis_tables;
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::problems::CaseData;
use crate::solver::{solve_system, SolveReport, SolverConfig};

/// Errors of one solve. The solver fields are zero / `true` when the field
/// did not come from a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub case_id: usize,
    pub degree: usize,
    pub param: f64,
    /// Relative broken `H^1` velocity error.
    pub e_u: f64,
    /// Relative `L^2` pressure error after gauge alignment.
    pub e_p: f64,
    /// `|| -div z - h ||_0`.
    pub e_c: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

/// Gauss order used for the error integrals.
pub fn error_quadrature_order(degree: usize) -> usize {
    (2 * degree).max(degree + 3)
}

fn relative(err2: f64, ref2: f64) -> f64 {
    if ref2 > 0.0 {
        (err2 / ref2).sqrt()
    } else {
        err2.sqrt()
    }
}

/// Broken-norm errors of `x` against the exact fields of `case`.
///
/// The discrete pressure is shifted to vanish at the mesh gauge point; the
/// exact pressure already does.
pub fn compute_errors(x: &SpectralField, case: &CaseData, mesh: &Mesh) -> Result<ErrorReport> {
    if x.n_elements() != mesh.n_elements() {
        return Err(Error::Layout { expected: mesh.n_elements(), got: x.n_elements() });
    }
    let w = x.degree();
    let tables = basis_tables(w, error_quadrature_order(w))?;
    let n = w + 1;
    let (e0, e1) = (&tables.to_quad, &tables.to_quad_d1);
    let quad = &tables.quad;
    let gauge = mesh.gauge;
    let gi = tables.gll.nodes.iter().position(|&t| t == gauge.point.0);
    let gj = tables.gll.nodes.iter().position(|&t| t == gauge.point.1);
    let (Some(gi), Some(gj)) = (gi, gj) else {
        return Err(Error::Contract("gauge point is not a GLL node".into()));
    };
    let p_gauge = x.get(gauge.element, Var::P, gi, gj);

    let (mut eu2, mut u2, mut ep2, mut p2, mut ec2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (e, map) in mesh.elements.iter().enumerate() {
        let sample = |v: Var| {
            let u = DMatrix::from_row_slice(n, n, x.block(e, v));
            (e0 * &u * e0.transpose(), e1 * &u * e0.transpose(), e0 * &u * e1.transpose())
        };
        let fields = [sample(Var::U1), sample(Var::U2)];
        let (pv, _, _) = sample(Var::P);
        for (a, &xa) in quad.nodes.iter().enumerate() {
            for (b, &xb) in quad.nodes.iter().enumerate() {
                let m = map.metric(xa, xb);
                let wt = quad.weights[a] * quad.weights[b] * m.jac;
                let ex = case.sample(m.derivs.x);
                let g = &m.inv;
                let mut div = 0.0;
                for (k, (v, dxi, deta)) in fields.iter().enumerate() {
                    let grad = [g[0][0] * dxi[(a, b)] + g[1][0] * deta[(a, b)], g[0][1] * dxi[(a, b)] + g[1][1] * deta[(a, b)]];
                    div += grad[k];
                    let du = v[(a, b)] - ex.u[k];
                    eu2 += wt * (du * du + (grad[0] - ex.grad_u[k][0]).powi(2) + (grad[1] - ex.grad_u[k][1]).powi(2));
                    u2 += wt * (ex.u[k].powi(2) + ex.grad_u[k][0].powi(2) + ex.grad_u[k][1].powi(2));
                }
                let dp = pv[(a, b)] - p_gauge - ex.p;
                ep2 += wt * dp * dp;
                p2 += wt * ex.p * ex.p;
                let h = case.source(m.derivs.x).h;
                ec2 += wt * (-div - h).powi(2);
            }
        }
    }
    Ok(ErrorReport {
        case_id: case.case_id,
        degree: w,
        param: case.param(),
        e_u: relative(eu2, u2),
        e_p: relative(ep2, p2),
        e_c: ec2.sqrt(),
        iterations: 0,
        converged: true,
        seconds: 0.0,
    })
}

/// Builds the system for degree `w`, solves it, and measures the errors.
pub fn solve_and_measure(
    mesh: &Mesh,
    case: &CaseData,
    w: usize,
    config: &SolverConfig,
) -> Result<(SpectralField, ErrorReport)> {
    let start = Instant::now();
    let system = LeastSquaresSystem::new(mesh, case, w, Some(w + config.quad_extra))?;
    let (x, SolveReport { iterations, converged, .. }) = solve_system(&system, config)?;
    let mut report = compute_errors(&x, case, mesh)?;
    report.iterations = iterations;
    report.converged = converged;
    report.seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub reports: Vec<ErrorReport>,
    /// Slope of the least-squares line through `(W, ln E_u)`.
    pub slope_u: Option<f64>,
    pub slope_p: Option<f64>,
    pub slope_c: Option<f64>,
    pub all_converged: bool,
}

/// Least-squares slope of `ln y` against `x`, over the points with `y > 0`.
pub fn log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&a, &v)| (a, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One solve per degree in `degrees` (ascending). Non-converged solves stay
/// in the result with `converged = false`.
pub fn convergence_sweep(mesh: &Mesh, case: &CaseData, degrees: &[usize], config: &SolverConfig) -> Result<SweepResult> {
    if degrees.is_empty() {
        return Err(Error::InvalidParameter("empty degree list".into()));
    }
    if degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("degrees must be strictly ascending: {degrees:?}")));
    }
    let reports = degrees
        .iter()
        .map(|&w| solve_and_measure(mesh, case, w, config).map(|(_, r)| r))
        .collect::<Result<Vec<_>>>()?;
    let ws: Vec<f64> = reports.iter().map(|r| r.degree as f64).collect();
    let col = |f: fn(&ErrorReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    Ok(SweepResult {
        slope_u: log_slope(&ws, &col(|r| r.e_u)),
        slope_p: log_slope(&ws, &col(|r| r.e_p)),
        slope_c: log_slope(&ws, &col(|r| r.e_c)),
        all_converged: reports.iter().all(|r| r.converged),
        reports,
    })
}
