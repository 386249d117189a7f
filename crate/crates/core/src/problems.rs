//! Manufactured exact solutions and the data derived from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{build_case_mesh, Edge, Mesh, Point};

/// Coefficients of `alpha u - nu lap(u) + grad p = f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub nu: f64,
}

impl ProblemSpec {
    pub fn new(alpha: f64, nu: f64) -> Result<Self> {
        if !(alpha >= 0.0 && nu >= 0.0) || (alpha == 0.0 && nu == 0.0) || !alpha.is_finite() || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need alpha >= 0, nu >= 0, not both zero (got alpha={alpha}, nu={nu})"
            )));
        }
        Ok(Self { alpha, nu })
    }
}

/// Exact fields and their derivatives at one point.
///
/// `hess_u[k]` holds `[d_xx, d_xy, d_yy]` of `u_k`; `grad_u[k][m]` is `d u_k / d x_m`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample {
    pub u: [f64; 2],
    pub grad_u: [[f64; 2]; 2],
    pub hess_u: [[f64; 3]; 2],
    pub p: f64,
    pub grad_p: [f64; 2],
}

/// Closed-form exact solutions (pressure without the gauge constant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    /// `u = (sin pi x sin pi y, cos pi x cos pi y)`, `p = 150 (x - 1/2)(y - 1/2)`.
    Trigonometric,
    /// Kovasznay-type fields with decay rate `lambda`.
    Kovasznay { lambda: f64 },
    /// `u = (20 x y^3, 5 (x^4 - y^4))`, `p = 60 x^2 y - 20 y^3`.
    Polynomial,
    /// Cubic velocity, non-solenoidal, on the square with a hole.
    CubicHole,
    /// `u = (x2, x1)`, `p = 0`: reproduced exactly for `W >= 1` on affine meshes.
    Patch,
    Zero,
}

impl ExactSolution {
    pub fn eval(&self, pt: Point) -> FieldSample {
        let [x, y] = pt;
        match *self {
            ExactSolution::Trigonometric => {
                let (s1, c1) = (PI * x).sin_cos();
                let (s2, c2) = (PI * y).sin_cos();
                let pi2 = PI * PI;
                FieldSample {
                    u: [s1 * s2, c1 * c2],
                    grad_u: [[PI * c1 * s2, PI * s1 * c2], [-PI * s1 * c2, -PI * c1 * s2]],
                    hess_u: [[-pi2 * s1 * s2, pi2 * c1 * c2, -pi2 * s1 * s2], [-pi2 * c1 * c2, pi2 * s1 * s2, -pi2 * c1 * c2]],
                    p: 150.0 * (x - 0.5) * (y - 0.5),
                    grad_p: [150.0 * (y - 0.5), 150.0 * (x - 0.5)],
                }
            }
            ExactSolution::Kovasznay { lambda: l } => {
                let k = 2.0 * PI;
                let e = (l * x).exp();
                let (s, c) = (k * y).sin_cos();
                FieldSample {
                    u: [1.0 - e * c, l / k * e * s],
                    grad_u: [[-l * e * c, k * e * s], [l * l / k * e * s, l * e * c]],
                    hess_u: [[-l * l * e * c, l * k * e * s, k * k * e * c], [l * l * l / k * e * s, l * l * e * c, -l * k * e * s]],
                    p: 0.5 * (2.0 * l * x).exp(),
                    grad_p: [l * (2.0 * l * x).exp(), 0.0],
                }
            }
            ExactSolution::Polynomial => FieldSample {
                u: [20.0 * x * y.powi(3), 5.0 * (x.powi(4) - y.powi(4))],
                grad_u: [[20.0 * y.powi(3), 60.0 * x * y * y], [20.0 * x.powi(3), -20.0 * y.powi(3)]],
                hess_u: [[0.0, 60.0 * y * y, 120.0 * x * y], [60.0 * x * x, 0.0, -60.0 * y * y]],
                p: 60.0 * x * x * y - 20.0 * y.powi(3),
                grad_p: [120.0 * x * y, 60.0 * x * x - 60.0 * y * y],
            },
            ExactSolution::CubicHole => FieldSample {
                u: [
                    x + y * y - 2.0 * x * y + x.powi(3) - 3.0 * x * y * y + y * x * x,
                    -y - 2.0 * x * y + y * y - 3.0 * y * x * x + x.powi(3) - x * y * y,
                ],
                grad_u: [
                    [1.0 - 2.0 * y + 3.0 * x * x - 3.0 * y * y + 2.0 * x * y, 2.0 * y - 2.0 * x - 6.0 * x * y + x * x],
                    [-2.0 * y - 6.0 * x * y + 3.0 * x * x - y * y, -1.0 - 2.0 * x + 2.0 * y - 3.0 * x * x - 2.0 * x * y],
                ],
                hess_u: [
                    [6.0 * x + 2.0 * y, -2.0 - 6.0 * y + 2.0 * x, 2.0 - 6.0 * x],
                    [-6.0 * y + 6.0 * x, -2.0 - 6.0 * x - 2.0 * y, 2.0 - 2.0 * x],
                ],
                p: x * y + x + y + x.powi(3) * y * y,
                grad_p: [y + 1.0 + 3.0 * x * x * y * y, x + 1.0 + 2.0 * x.powi(3) * y],
            },
            ExactSolution::Patch => FieldSample {
                u: [y, x],
                grad_u: [[0.0, 1.0], [1.0, 0.0]],
                ..FieldSample::default()
            },
            ExactSolution::Zero => FieldSample::default(),
        }
    }
}

/// Data at one point: `f`, `h = -div u`, and `grad h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSample {
    pub f: [f64; 2],
    pub h: f64,
    pub grad_h: [f64; 2],
}

/// A benchmark problem: exact solution, coefficients and derived data.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub case_id: usize,
    pub spec: ProblemSpec,
    pub exact: ExactSolution,
    /// Added to the pressure so it vanishes at the gauge point.
    pub pressure_shift: f64,
    /// Reynolds number for case 2.
    pub reynolds: Option<f64>,
}

/// Optional overrides for [`make_case`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaseParams {
    pub reynolds: Option<f64>,
    pub nu: Option<f64>,
}

pub const CASE_DESCRIPTIONS: [&str; 6] = [
    "generalized Stokes (alpha=1, nu=1) on [0,1]^2, trigonometric velocity, 2x2 affine elements",
    "Stokes with Reynolds number on [-1/2,1/2]x[0,1], Kovasznay-type fields, 2x2 affine elements",
    "Stokes on the quarter annulus 1<=r<=4, polynomial fields, 4 polar elements",
    "Stokes on [0,1]^2 minus the disk |x-(0.5,0.5)|<0.2, cubic fields, 4 blending elements",
    "Stokes on [0,1]^2 with du/dn - p n = g_N on y=0, trigonometric velocity",
    "Stokes on the quarter annulus with ((grad u + grad u^T) - p I) n = g_N on y=0",
];

pub fn kovasznay_lambda(re: f64) -> f64 {
    re / 2.0 - (re * re / 4.0 + 4.0 * PI * PI).sqrt()
}

/// Builds case `case_id` with the pressure shifted to vanish at `gauge`.
pub fn make_case_with_gauge(case_id: usize, params: CaseParams, gauge: Point) -> Result<CaseData> {
    if case_id != 2 && params.reynolds.is_some() {
        return Err(Error::InvalidParameter(format!("--re only applies to case 2, not case {case_id}")));
    }
    if case_id == 2 && params.nu.is_some() {
        return Err(Error::InvalidParameter("case 2 takes --re, not --nu".into()));
    }
    let nu = params.nu.unwrap_or(1.0);
    let (spec, exact, reynolds) = match case_id {
        1 => (ProblemSpec::new(1.0, nu)?, ExactSolution::Trigonometric, None),
        2 => {
            let re = params.reynolds.unwrap_or(1.0);
            if !(re.is_finite() && re > 0.0) {
                return Err(Error::InvalidParameter(format!("Reynolds number must be positive, got {re}")));
            }
            (ProblemSpec::new(0.0, 1.0 / re)?, ExactSolution::Kovasznay { lambda: kovasznay_lambda(re) }, Some(re))
        }
        3 | 6 => (ProblemSpec::new(0.0, nu)?, ExactSolution::Polynomial, None),
        4 => (ProblemSpec::new(0.0, nu)?, ExactSolution::CubicHole, None),
        5 => (ProblemSpec::new(0.0, nu)?, ExactSolution::Trigonometric, None),
        other => return Err(Error::UnknownCase(other)),
    };
    let pressure_shift = -exact.eval(gauge).p;
    Ok(CaseData { case_id, spec, exact, pressure_shift, reynolds })
}

/// Builds case `case_id`, gauged at the built-in mesh's gauge point.
pub fn make_case(case_id: usize, params: CaseParams) -> Result<CaseData> {
    let mesh = build_case_mesh(case_id)?;
    make_case_with_gauge(case_id, params, mesh.gauge_point())
}

impl CaseData {
    /// A problem with user-chosen exact fields, gauged at `gauge`.
    pub fn custom(exact: ExactSolution, spec: ProblemSpec, gauge: Point) -> Self {
        let pressure_shift = -exact.eval(gauge).p;
        Self { case_id: 0, spec, exact, pressure_shift, reynolds: None }
    }

    /// Exact fields with the gauge shift applied to `p`.
    pub fn sample(&self, pt: Point) -> FieldSample {
        let mut s = self.exact.eval(pt);
        s.p += self.pressure_shift;
        s
    }

    pub fn source(&self, pt: Point) -> SourceSample {
        let s = self.exact.eval(pt);
        let ProblemSpec { alpha, nu } = self.spec;
        let mut f = [0.0; 2];
        for k in 0..2 {
            let lap = s.hess_u[k][0] + s.hess_u[k][2];
            f[k] = alpha * s.u[k] - nu * lap + s.grad_p[k];
        }
        let h = -(s.grad_u[0][0] + s.grad_u[1][1]);
        let grad_h = [-(s.hess_u[0][0] + s.hess_u[1][1]), -(s.hess_u[0][1] + s.hess_u[1][2])];
        SourceSample { f, h, grad_h }
    }

    /// Neumann datum `g_N` for outward normal `n`; `symmetric` selects the
    /// `((grad u + grad u^T) - p I) n` form.
    pub fn neumann_data(&self, pt: Point, n: Point, symmetric: bool) -> [f64; 2] {
        let s = self.sample(pt);
        neumann_value(&s.grad_u, s.p, n, symmetric)
    }

    /// Parameter written to the `param` CSV column: Re for case 2, nu otherwise.
    pub fn param(&self) -> f64 {
        self.reynolds.unwrap_or(self.spec.nu)
    }
}

pub(crate) fn neumann_value(grad_u: &[[f64; 2]; 2], p: f64, n: Point, symmetric: bool) -> [f64; 2] {
    let mut out = [0.0; 2];
    for k in 0..2 {
        let mut v = 0.0;
        for m in 0..2 {
            v += grad_u[k][m] * n[m];
            if symmetric {
                v += grad_u[m][k] * n[m];
            }
        }
        out[k] = v - p * n[k];
    }
    out
}

/// Maximum absolute residual of the momentum and continuity equations at
/// `points`, with derivatives of the closed-form `u`, `p` taken by
/// second-order central differences (step `1e-5`).
pub fn pde_residual_check(case: &CaseData, points: &[Point]) -> f64 {
    residuals(case, points).map(|(r, _)| r).fold(0.0, f64::max)
}

/// Like [`pde_residual_check`], but each residual is divided by
/// `1 + max(|u|, |p|, |f|, |h|)` at its point. The rounding floor of a second
/// difference is about `eps |u| / step^2`, so the absolute check cannot
/// resolve `1e-5` once the fields reach magnitude ~10.
pub fn pde_residual_check_scaled(case: &CaseData, points: &[Point]) -> f64 {
    residuals(case, points).map(|(r, s)| r / (1.0 + s)).fold(0.0, f64::max)
}

fn residuals<'a>(case: &'a CaseData, points: &'a [Point]) -> impl Iterator<Item = (f64, f64)> + 'a {
    let h = 1e-5;
    let ev = move |x: f64, y: f64| case.sample([x, y]);
    points.iter().flat_map(move |&[x, y]| {
        let c = ev(x, y);
        let (xp, xm, yp, ym) = (ev(x + h, y), ev(x - h, y), ev(x, y + h), ev(x, y - h));
        let src = case.source([x, y]);
        let scale = [c.u[0].abs(), c.u[1].abs(), c.p.abs(), src.f[0].abs(), src.f[1].abs(), src.h.abs()]
            .into_iter()
            .fold(0.0, f64::max);
        let mom = |k: usize| {
            let lap = (xp.u[k] + xm.u[k] + yp.u[k] + ym.u[k] - 4.0 * c.u[k]) / (h * h);
            let gp = if k == 0 { (xp.p - xm.p) / (2.0 * h) } else { (yp.p - ym.p) / (2.0 * h) };
            (case.spec.alpha * c.u[k] - case.spec.nu * lap + gp - src.f[k]).abs()
        };
        let div = (xp.u[0] - xm.u[0]) / (2.0 * h) + (yp.u[1] - ym.u[1]) / (2.0 * h);
        [(mom(0), scale), (mom(1), scale), ((-div - src.h).abs(), scale)]
    })
}

/// `oint g.n ds + int h dx`, which vanishes when the data are compatible.
pub fn compatibility_defect(case: &CaseData, mesh: &Mesh, order: usize) -> Result<f64> {
    let q = crate::basis::gauss_nodes(order)?;
    let mut total = 0.0;
    for e in mesh.boundary_edges() {
        let Edge::Boundary { side, .. } = *e else { continue };
        let m = &mesh.elements[side.element];
        for (&t, &w) in q.nodes.iter().zip(&q.weights) {
            let (xi, eta) = side.side.reference_point(t);
            let d = m.derivs(xi, eta);
            let tangent = match side.side {
                crate::geometry::Side::XiMinus | crate::geometry::Side::XiPlus => d.d_eta,
                _ => d.d_xi,
            };
            let ds = tangent[0].hypot(tangent[1]);
            let n = side.side.outward_normal(&d);
            let g = case.sample(d.x).u;
            total += w * ds * (g[0] * n[0] + g[1] * n[1]);
        }
    }
    for m in &mesh.elements {
        for (&a, &wa) in q.nodes.iter().zip(&q.weights) {
            for (&b, &wb) in q.nodes.iter().zip(&q.weights) {
                let d = m.derivs(a, b);
                total += wa * wb * d.jacobian() * case.source(d.x).h;
            }
        }
    }
    Ok(total)
}
