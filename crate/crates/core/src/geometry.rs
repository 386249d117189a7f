//! Element maps from the reference square `S = (-1, 1)^2` and the built-in
//! benchmark meshes.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const CORNER_TOL: f64 = 1e-12;
const MATCH_TOL: f64 = 1e-10;

/// Position and first/second derivatives of a map at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapDerivs {
    pub x: Point,
    pub d_xi: Point,
    pub d_eta: Point,
    pub d_xixi: Point,
    pub d_xieta: Point,
    pub d_etaeta: Point,
}

impl MapDerivs {
    pub fn jacobian(&self) -> f64 {
        self.d_xi[0] * self.d_eta[1] - self.d_eta[0] * self.d_xi[1]
    }
}

/// Inverse-Jacobian metric terms at one reference point.
///
/// `inv[c][a]` is the derivative of reference coordinate `c` with respect to
/// physical coordinate `a`; `d_inv[e]` is its derivative along reference
/// coordinate `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub jac: f64,
    pub sqrt_jac: f64,
    pub inv: [[f64; 2]; 2],
    pub d_inv: [[[f64; 2]; 2]; 2],
    pub d_sqrt_jac: [f64; 2],
    /// Second derivatives `[d_cd x_a]` indexed `[a][c][d]`.
    pub hess: [[[f64; 2]; 2]; 2],
    pub derivs: MapDerivs,
}

impl Metric {
    pub fn new(d: &MapDerivs) -> Self {
        let jac = d.jacobian();
        // jm[a][c] = d x_a / d xi_c
        let jm = [[d.d_xi[0], d.d_eta[0]], [d.d_xi[1], d.d_eta[1]]];
        let inv = [
            [jm[1][1] / jac, -jm[0][1] / jac],
            [-jm[1][0] / jac, jm[0][0] / jac],
        ];
        let mut hess = [[[0.0; 2]; 2]; 2];
        for a in 0..2 {
            hess[a][0][0] = d.d_xixi[a];
            hess[a][0][1] = d.d_xieta[a];
            hess[a][1][0] = d.d_xieta[a];
            hess[a][1][1] = d.d_etaeta[a];
        }
        let sqrt_jac = jac.sqrt();
        let mut d_inv = [[[0.0; 2]; 2]; 2];
        let mut d_sqrt_jac = [0.0; 2];
        for e in 0..2 {
            // dJm/de [a][c] = hess[a][c][e]; dG = -G dJm G
            let mut tmp = [[0.0; 2]; 2];
            for c in 0..2 {
                for b in 0..2 {
                    tmp[c][b] = (0..2).map(|a| inv[c][a] * hess[a][b][e]).sum();
                }
            }
            for c in 0..2 {
                for a in 0..2 {
                    d_inv[e][c][a] = -(0..2).map(|b| tmp[c][b] * inv[b][a]).sum::<f64>();
                }
            }
            // Jacobi: dJ = J tr(G dJm)
            d_sqrt_jac[e] = 0.5 * sqrt_jac * (tmp[0][0] + tmp[1][1]);
        }
        Self { jac, sqrt_jac, inv, d_inv, d_sqrt_jac, hess, derivs: *d }
    }

    /// Coefficients `[u_xi, u_eta, u_xixi, u_xieta, u_etaeta]` of the physical Laplacian.
    pub fn laplacian_coefficients(&self) -> [f64; 5] {
        let g = &self.inv;
        let mut gm = [[0.0; 2]; 2];
        for c in 0..2 {
            for d in 0..2 {
                gm[c][d] = g[c][0] * g[d][0] + g[c][1] * g[d][1];
            }
        }
        let mut v = [0.0; 2];
        for (a, va) in v.iter_mut().enumerate() {
            *va = (0..2)
                .flat_map(|c| (0..2).map(move |d| (c, d)))
                .map(|(c, d)| gm[c][d] * self.hess[a][c][d])
                .sum();
        }
        let c_xi = -(v[0] * g[0][0] + v[1] * g[0][1]);
        let c_eta = -(v[0] * g[1][0] + v[1] * g[1][1]);
        [c_xi, c_eta, gm[0][0], 2.0 * gm[0][1], gm[1][1]]
    }
}

/// A side curve `c(t)`, `t` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Segment { start: Point, end: Point },
    Arc { center: Point, radius: f64, theta_start: f64, theta_end: f64 },
}

impl Curve {
    /// Position, first and second derivative with respect to `t`.
    pub fn eval(&self, t: f64) -> (Point, Point, Point) {
        match *self {
            Curve::Segment { start, end } => {
                let s = 0.5 * (1.0 + t);
                let p = [start[0] + s * (end[0] - start[0]), start[1] + s * (end[1] - start[1])];
                let d = [0.5 * (end[0] - start[0]), 0.5 * (end[1] - start[1])];
                (p, d, [0.0, 0.0])
            }
            Curve::Arc { center, radius, theta_start, theta_end } => {
                let dth = 0.5 * (theta_end - theta_start);
                let th = theta_start + (1.0 + t) * dth;
                let (s, c) = th.sin_cos();
                let p = [center[0] + radius * c, center[1] + radius * s];
                let d = [-radius * s * dth, radius * c * dth];
                let dd = [-radius * c * dth * dth, -radius * s * dth * dth];
                (p, d, dd)
            }
        }
    }

    pub fn point(&self, t: f64) -> Point {
        self.eval(t).0
    }

    fn rotated(&self, center: Point, angle: f64) -> Curve {
        match *self {
            Curve::Segment { start, end } => Curve::Segment {
                start: rotate(start, center, angle),
                end: rotate(end, center, angle),
            },
            Curve::Arc { center: c, radius, theta_start, theta_end } => Curve::Arc {
                center: rotate(c, center, angle),
                radius,
                theta_start: theta_start + angle,
                theta_end: theta_end + angle,
            },
        }
    }
}

fn rotate(p: Point, center: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Analytic map from `S` onto one element.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementMap {
    /// Bilinear map; corners counterclockwise starting at the image of `(-1,-1)`.
    Affine { corners: [Point; 4] },
    /// `r` linear in `xi`, `theta` linear in `eta`.
    PolarAnnulus { r_in: f64, r_out: f64, theta_start: f64, theta_end: f64 },
    /// Gordon–Hall transfinite interpolation of the sides
    /// `[eta=-1, xi=+1, eta=+1, xi=-1]`, each parametrized by the ascending
    /// reference coordinate.
    Blending { sides: [Curve; 4] },
}

pub fn make_affine_map(corners: [Point; 4]) -> Result<ElementMap> {
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        let c = corners[(k + 2) % 4];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidGeometry(format!(
                "quadrilateral {corners:?} is degenerate, reentrant or clockwise at corner {}",
                (k + 1) % 4
            )));
        }
    }
    Ok(ElementMap::Affine { corners })
}

pub fn make_polar_map(r_in: f64, r_out: f64, theta_start: f64, theta_end: f64) -> Result<ElementMap> {
    if !(r_in > 0.0 && r_in < r_out && theta_start < theta_end) {
        return Err(Error::InvalidGeometry(format!(
            "polar element needs 0 < r_in < r_out and theta_start < theta_end, got r=[{r_in}, {r_out}], theta=[{theta_start}, {theta_end}]"
        )));
    }
    Ok(ElementMap::PolarAnnulus { r_in, r_out, theta_start, theta_end })
}

/// Sides in the order `[eta=-1, xi=+1, eta=+1, xi=-1]`.
pub fn make_blending_map(sides: [Curve; 4]) -> Result<ElementMap> {
    let [bottom, right, top, left] = sides;
    let checks = [
        ("bottom/left", bottom.point(-1.0), left.point(-1.0)),
        ("bottom/right", bottom.point(1.0), right.point(-1.0)),
        ("top/left", top.point(-1.0), left.point(1.0)),
        ("top/right", top.point(1.0), right.point(1.0)),
    ];
    for (name, a, b) in checks {
        if dist(a, b) > CORNER_TOL {
            return Err(Error::InvalidGeometry(format!(
                "blending sides do not meet at the {name} corner: {a:?} vs {b:?}"
            )));
        }
    }
    Ok(ElementMap::Blending { sides })
}

impl ElementMap {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ElementMap::Affine { .. } => "affine",
            ElementMap::PolarAnnulus { .. } => "polar",
            ElementMap::Blending { .. } => "blending",
        }
    }

    pub fn point(&self, xi: f64, eta: f64) -> Point {
        self.derivs(xi, eta).x
    }

    pub fn metric(&self, xi: f64, eta: f64) -> Metric {
        Metric::new(&self.derivs(xi, eta))
    }

    pub fn derivs(&self, xi: f64, eta: f64) -> MapDerivs {
        match self {
            ElementMap::Affine { corners } => {
                let n = [
                    0.25 * (1.0 - xi) * (1.0 - eta),
                    0.25 * (1.0 + xi) * (1.0 - eta),
                    0.25 * (1.0 + xi) * (1.0 + eta),
                    0.25 * (1.0 - xi) * (1.0 + eta),
                ];
                let n_xi = [-0.25 * (1.0 - eta), 0.25 * (1.0 - eta), 0.25 * (1.0 + eta), -0.25 * (1.0 + eta)];
                let n_eta = [-0.25 * (1.0 - xi), -0.25 * (1.0 + xi), 0.25 * (1.0 + xi), 0.25 * (1.0 - xi)];
                let n_xieta = [0.25, -0.25, 0.25, -0.25];
                let comb = |w: &[f64; 4]| -> Point {
                    let mut p = [0.0; 2];
                    for k in 0..4 {
                        p[0] += w[k] * corners[k][0];
                        p[1] += w[k] * corners[k][1];
                    }
                    p
                };
                MapDerivs {
                    x: comb(&n),
                    d_xi: comb(&n_xi),
                    d_eta: comb(&n_eta),
                    d_xixi: [0.0; 2],
                    d_xieta: comb(&n_xieta),
                    d_etaeta: [0.0; 2],
                }
            }
            ElementMap::PolarAnnulus { r_in, r_out, theta_start, theta_end } => {
                let dr = 0.5 * (r_out - r_in);
                let dt = 0.5 * (theta_end - theta_start);
                let r = r_in + (1.0 + xi) * dr;
                let th = theta_start + (1.0 + eta) * dt;
                let (s, c) = th.sin_cos();
                MapDerivs {
                    x: [r * c, r * s],
                    d_xi: [dr * c, dr * s],
                    d_eta: [-r * dt * s, r * dt * c],
                    d_xixi: [0.0, 0.0],
                    d_xieta: [-dr * dt * s, dr * dt * c],
                    d_etaeta: [-r * dt * dt * c, -r * dt * dt * s],
                }
            }
            ElementMap::Blending { sides } => {
                let [bottom, right, top, left] = sides;
                let (b, db, ddb) = bottom.eval(xi);
                let (t, dt, ddt) = top.eval(xi);
                let (l, dl, ddl) = left.eval(eta);
                let (r, dr, ddr) = right.eval(eta);
                let c00 = bottom.point(-1.0);
                let c10 = bottom.point(1.0);
                let c01 = top.point(-1.0);
                let c11 = top.point(1.0);
                let mut m = MapDerivs {
                    x: [0.0; 2],
                    d_xi: [0.0; 2],
                    d_eta: [0.0; 2],
                    d_xixi: [0.0; 2],
                    d_xieta: [0.0; 2],
                    d_etaeta: [0.0; 2],
                };
                let (xm, xp, em, ep) = (0.5 * (1.0 - xi), 0.5 * (1.0 + xi), 0.5 * (1.0 - eta), 0.5 * (1.0 + eta));
                for a in 0..2 {
                    let corner = xm * em * c00[a] + xp * em * c10[a] + xm * ep * c01[a] + xp * ep * c11[a];
                    let corner_xi = 0.5 * (-em * c00[a] + em * c10[a] - ep * c01[a] + ep * c11[a]);
                    let corner_eta = 0.5 * (-xm * c00[a] - xp * c10[a] + xm * c01[a] + xp * c11[a]);
                    let corner_xieta = 0.25 * (c00[a] - c10[a] - c01[a] + c11[a]);
                    m.x[a] = xm * l[a] + xp * r[a] + em * b[a] + ep * t[a] - corner;
                    m.d_xi[a] = 0.5 * (r[a] - l[a]) + em * db[a] + ep * dt[a] - corner_xi;
                    m.d_eta[a] = xm * dl[a] + xp * dr[a] + 0.5 * (t[a] - b[a]) - corner_eta;
                    m.d_xixi[a] = em * ddb[a] + ep * ddt[a];
                    m.d_etaeta[a] = xm * ddl[a] + xp * ddr[a];
                    m.d_xieta[a] = 0.5 * (dr[a] - dl[a]) + 0.5 * (dt[a] - db[a]) - corner_xieta;
                }
                m
            }
        }
    }
}

/// One side of the reference square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    XiMinus,
    XiPlus,
    EtaMinus,
    EtaPlus,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::EtaMinus, Side::XiPlus, Side::EtaPlus, Side::XiMinus];

    /// Reference point of the side at edge parameter `t` (ascending reference coordinate).
    pub fn reference_point(self, t: f64) -> (f64, f64) {
        match self {
            Side::XiMinus => (-1.0, t),
            Side::XiPlus => (1.0, t),
            Side::EtaMinus => (t, -1.0),
            Side::EtaPlus => (t, 1.0),
        }
    }

    /// Tensor index `(i, j)` of trace node `k` on an `n`-point GLL grid.
    pub fn node(self, k: usize, n: usize) -> (usize, usize) {
        match self {
            Side::XiMinus => (0, k),
            Side::XiPlus => (n - 1, k),
            Side::EtaMinus => (k, 0),
            Side::EtaPlus => (k, n - 1),
        }
    }

    /// Outward unit normal from the map derivatives at a point on this side.
    pub fn outward_normal(self, d: &MapDerivs) -> Point {
        let v = match self {
            Side::XiPlus => [d.d_eta[1], -d.d_eta[0]],
            Side::XiMinus => [-d.d_eta[1], d.d_eta[0]],
            Side::EtaPlus => [-d.d_xi[1], d.d_xi[0]],
            Side::EtaMinus => [d.d_xi[1], -d.d_xi[0]],
        };
        let s = v[0].hypot(v[1]);
        [v[0] / s, v[1] / s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcTag {
    Dirichlet,
    /// `du/dn - p n = g_N`
    NeumannA,
    /// `((grad u + grad u^T) - p I) n = g_N`
    NeumannB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SideRef {
    pub element: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Traces are compared on `a`'s parametrization; `reversed` means `b`
    /// runs the other way.
    Interior { a: SideRef, b: SideRef, reversed: bool },
    Boundary { side: SideRef, tag: BcTag },
}

/// Element and reference point where the pressure is pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauge {
    pub element: usize,
    pub point: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub elements: Vec<ElementMap>,
    pub edges: Vec<Edge>,
    pub gauge: Gauge,
}

impl Mesh {
    /// Pairs element sides with coincident endpoints into interior edges and
    /// tags the rest with `tag_boundary(side midpoint)`.
    pub fn from_elements(elements: Vec<ElementMap>, tag_boundary: impl Fn(Point) -> BcTag) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidGeometry("mesh has no elements".into()));
        }
        let ends = |s: SideRef| -> (Point, Point) {
            let m = &elements[s.element];
            let (x0, y0) = s.side.reference_point(-1.0);
            let (x1, y1) = s.side.reference_point(1.0);
            (m.point(x0, y0), m.point(x1, y1))
        };
        let all: Vec<SideRef> = (0..elements.len())
            .flat_map(|e| Side::ALL.iter().map(move |&side| SideRef { element: e, side }))
            .collect();
        let mut used = vec![false; all.len()];
        let mut edges = Vec::new();
        for i in 0..all.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let (p0, p1) = ends(all[i]);
            let mut partner = None;
            for j in (i + 1)..all.len() {
                if used[j] || all[j].element == all[i].element {
                    continue;
                }
                let (q0, q1) = ends(all[j]);
                if dist(p0, q0) < MATCH_TOL && dist(p1, q1) < MATCH_TOL {
                    partner = Some((j, false));
                } else if dist(p0, q1) < MATCH_TOL && dist(p1, q0) < MATCH_TOL {
                    partner = Some((j, true));
                }
                if partner.is_some() {
                    break;
                }
            }
            match partner {
                Some((j, reversed)) => {
                    used[j] = true;
                    edges.push(Edge::Interior { a: all[i], b: all[j], reversed });
                }
                None => {
                    let (x, y) = all[i].side.reference_point(0.0);
                    let mid = elements[all[i].element].point(x, y);
                    edges.push(Edge::Boundary { side: all[i], tag: tag_boundary(mid) });
                }
            }
        }
        Ok(Self { elements, edges, gauge: Gauge { element: 0, point: (-1.0, -1.0) } })
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| matches!(e, Edge::Interior { .. }))
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| matches!(e, Edge::Boundary { .. }))
    }

    pub fn has_neumann(&self) -> bool {
        self.edges
            .iter()
            .any(|e| matches!(e, Edge::Boundary { tag: BcTag::NeumannA | BcTag::NeumannB, .. }))
    }

    /// Physical location of the pressure gauge.
    pub fn gauge_point(&self) -> Point {
        let (xi, eta) = self.gauge.point;
        self.elements[self.gauge.element].point(xi, eta)
    }

    /// Same mesh with every interior edge's `a` and `b` swapped.
    pub fn with_swapped_interior_edges(&self) -> Mesh {
        let edges = self
            .edges
            .iter()
            .map(|e| match *e {
                Edge::Interior { a, b, reversed } => Edge::Interior { a: b, b: a, reversed },
                other => other,
            })
            .collect();
        Mesh { elements: self.elements.clone(), edges, gauge: self.gauge }
    }
}

fn rect_grid(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Vec<ElementMap>> {
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    let cells = [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)];
    cells
        .iter()
        .map(|&(a, b, c, d)| make_affine_map([[a, c], [b, c], [b, d], [a, d]]))
        .collect()
}

pub const HOLE_CENTER: Point = [0.5, 0.5];
pub const HOLE_RADIUS: f64 = 0.2;

/// Four blending elements around the hole, cut along the square's diagonals.
fn square_with_hole() -> Result<Vec<ElementMap>> {
    let c = HOLE_CENTER;
    let on_circle = |th: f64| [c[0] + HOLE_RADIUS * th.cos(), c[1] + HOLE_RADIUS * th.sin()];
    let (t0, t1) = (5.0 * FRAC_PI_4, 7.0 * FRAC_PI_4);
    let bottom = [
        Curve::Segment { start: [0.0, 0.0], end: [1.0, 0.0] },
        Curve::Segment { start: [1.0, 0.0], end: on_circle(t1) },
        Curve::Arc { center: c, radius: HOLE_RADIUS, theta_start: t0, theta_end: t1 },
        Curve::Segment { start: [0.0, 0.0], end: on_circle(t0) },
    ];
    (0..4)
        .map(|k| {
            let angle = k as f64 * FRAC_PI_2;
            let sides = bottom.map(|s| s.rotated(c, angle));
            make_blending_map(sides)
        })
        .collect()
}

pub fn build_case_mesh(case_id: usize) -> Result<Mesh> {
    let on_x_axis = |p: Point| p[1].abs() < 1e-12;
    match case_id {
        1 => Mesh::from_elements(rect_grid(0.0, 1.0, 0.0, 1.0)?, |_| BcTag::Dirichlet),
        2 => Mesh::from_elements(rect_grid(-0.5, 0.5, 0.0, 1.0)?, |_| BcTag::Dirichlet),
        3 | 6 => {
            let mut elements = Vec::with_capacity(4);
            for (t0, t1) in [(0.0, FRAC_PI_4), (FRAC_PI_4, FRAC_PI_2)] {
                for (r0, r1) in [(1.0, 2.0), (2.0, 4.0)] {
                    elements.push(make_polar_map(r0, r1, t0, t1)?);
                }
            }
            if case_id == 3 {
                Mesh::from_elements(elements, |_| BcTag::Dirichlet)
            } else {
                Mesh::from_elements(elements, |p| if on_x_axis(p) { BcTag::NeumannB } else { BcTag::Dirichlet })
            }
        }
        4 => Mesh::from_elements(square_with_hole()?, |_| BcTag::Dirichlet),
        5 => Mesh::from_elements(rect_grid(0.0, 1.0, 0.0, 1.0)?, |p| {
            if on_x_axis(p) {
                BcTag::NeumannA
            } else {
                BcTag::Dirichlet
            }
        }),
        other => Err(Error::UnknownCase(other)),
    }
}
