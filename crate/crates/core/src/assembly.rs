//! The least-squares functional and its matrix-free normal operator.
//!
//! Every term of the functional has the form `(B x - c)^T M (B x - c)` where
//! `B` is a linear residual operator on the nodal unknowns, `c` the data and
//! `M` a symmetric quadratic form:
//!
//! * volume rows (momentum, continuity and the two reference derivatives of
//!   the continuity residual) live on a tensor Gauss grid, `M = diag(w_a w_b)`;
//! * edge rows (jumps, Dirichlet and Neumann residuals) live on the GLL trace
//!   grid of one side, `M` is the `L^2`, `H^{1/2}` or `H^{3/2}` edge form;
//! * the pressure gauge is a single scalar row with unit weight.
//!
//! The normal operator `A = sum B^T M B` is applied term by term and never
//! stored.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::basis::{basis_tables, BasisTables};
use crate::error::{Error, Result};
use crate::geometry::{BcTag, Edge, Mesh, Metric, Side};
use crate::norms::EdgeNormTables;
use crate::problems::CaseData;

pub const N_VARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    U1 = 0,
    U2 = 1,
    P = 2,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::U1, Var::U2, Var::P];

    fn velocity(k: usize) -> Var {
        [Var::U1, Var::U2][k]
    }
}

/// Nodal values of `u1`, `u2`, `p` on every element's tensor GLL grid.
///
/// Flat layout: element-major, then variable, then `i * (W+1) + j` with `i`
/// the `xi` index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    n_elements: usize,
    n: usize,
    data: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(n_elements: usize, degree: usize) -> Self {
        let n = degree + 1;
        Self { n_elements, n, data: vec![0.0; N_VARS * n_elements * n * n] }
    }

    pub fn from_vec(n_elements: usize, degree: usize, data: Vec<f64>) -> Result<Self> {
        let n = degree + 1;
        let expected = N_VARS * n_elements * n * n;
        if data.len() != expected {
            return Err(Error::Layout { expected, got: data.len() });
        }
        Ok(Self { n_elements, n, data })
    }

    /// Samples `f(physical point) -> [u1, u2, p]` at every GLL node.
    pub fn interpolate(mesh: &Mesh, degree: usize, f: impl Fn([f64; 2]) -> [f64; 3]) -> Result<Self> {
        let gll = crate::basis::gll_nodes(degree + 1)?;
        let mut field = Self::zeros(mesh.n_elements(), degree);
        let n = degree + 1;
        for (e, m) in mesh.elements.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let vals = f(m.point(gll.nodes[i], gll.nodes[j]));
                    for v in Var::ALL {
                        field.set(e, v, i, j, vals[v as usize]);
                    }
                }
            }
        }
        Ok(field)
    }

    /// Nodal interpolant of the (gauge-shifted) exact solution.
    pub fn exact_interpolant(mesh: &Mesh, degree: usize, case: &CaseData) -> Result<Self> {
        Self::interpolate(mesh, degree, |pt| {
            let s = case.sample(pt);
            [s.u[0], s.u[1], s.p]
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn degree(&self) -> usize {
        self.n - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, element: usize, var: Var, i: usize, j: usize) -> usize {
        ((element * N_VARS + var as usize) * self.n + i) * self.n + j
    }

    pub fn get(&self, element: usize, var: Var, i: usize, j: usize) -> f64 {
        self.data[self.index(element, var, i, j)]
    }

    pub fn set(&mut self, element: usize, var: Var, i: usize, j: usize, value: f64) {
        let k = self.index(element, var, i, j);
        self.data[k] = value;
    }

    pub fn block(&self, element: usize, var: Var) -> &[f64] {
        let s = self.index(element, var, 0, 0);
        &self.data[s..s + self.n * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Row-major dense matrix used for the 1D sweeps.
#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *yr = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// `out[a][b] = sum_ij A[a][i] B[b][j] u[i][j]`
fn tensor_apply(a: &Dense, b: &Dense, u: &[f64], out: &mut [f64]) {
    let (n, qa, qb) = (a.cols, a.rows, b.rows);
    let mut t = vec![0.0; n * qb];
    for i in 0..n {
        for bb in 0..qb {
            let mut s = 0.0;
            for j in 0..n {
                s += b.at(bb, j) * u[i * n + j];
            }
            t[i * qb + bb] = s;
        }
    }
    for aa in 0..qa {
        for bb in 0..qb {
            let mut s = 0.0;
            for i in 0..n {
                s += a.at(aa, i) * t[i * qb + bb];
            }
            out[aa * qb + bb] = s;
        }
    }
}

/// Adds `A^T r B` (the transpose of [`tensor_apply`]) to `out`.
fn tensor_apply_transpose(a: &Dense, b: &Dense, r: &[f64], out: &mut [f64]) {
    let (n, qa, qb) = (a.cols, a.rows, b.rows);
    let mut t = vec![0.0; qa * n];
    for aa in 0..qa {
        for j in 0..n {
            let mut s = 0.0;
            for bb in 0..qb {
                s += r[aa * qb + bb] * b.at(bb, j);
            }
            t[aa * n + j] = s;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for aa in 0..qa {
                s += a.at(aa, i) * t[aa * n + j];
            }
            out[i * n + j] += s;
        }
    }
}

/// Reference derivative evaluated on the volume quadrature grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum VolKind {
    Val = 0,
    Xi = 1,
    Eta = 2,
    XiXi = 3,
    XiEta = 4,
    EtaEta = 5,
}

const N_VOL_KINDS: usize = 6;

impl VolKind {
    fn first(c: usize) -> VolKind {
        [VolKind::Xi, VolKind::Eta][c]
    }

    fn second(c: usize, e: usize) -> VolKind {
        match (c, e) {
            (0, 0) => VolKind::XiXi,
            (1, 1) => VolKind::EtaEta,
            _ => VolKind::XiEta,
        }
    }
}

/// Which part of the functional a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Momentum,
    Continuity,
    JumpValue,
    JumpGradient,
    JumpPressure,
    Dirichlet,
    Neumann,
    Gauge,
}

/// Value of the functional split by term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FunctionalBreakdown {
    pub momentum: f64,
    pub continuity: f64,
    pub jump_value: f64,
    pub jump_gradient: f64,
    pub jump_pressure: f64,
    pub dirichlet: f64,
    pub neumann: f64,
    pub gauge: f64,
}

impl FunctionalBreakdown {
    pub fn total(&self) -> f64 {
        self.momentum
            + self.continuity
            + self.jump_value
            + self.jump_gradient
            + self.jump_pressure
            + self.dirichlet
            + self.neumann
            + self.gauge
    }

    pub fn jumps(&self) -> f64 {
        self.jump_value + self.jump_gradient + self.jump_pressure
    }

    fn add(&mut self, kind: TermKind, v: f64) {
        match kind {
            TermKind::Momentum => self.momentum += v,
            TermKind::Continuity => self.continuity += v,
            TermKind::JumpValue => self.jump_value += v,
            TermKind::JumpGradient => self.jump_gradient += v,
            TermKind::JumpPressure => self.jump_pressure += v,
            TermKind::Dirichlet => self.dirichlet += v,
            TermKind::Neumann => self.neumann += v,
            TermKind::Gauge => self.gauge += v,
        }
    }
}

#[derive(Debug, Clone)]
struct VolumeTerm {
    var: Var,
    kind: VolKind,
    coef: Vec<f64>,
}

#[derive(Debug, Clone)]
struct VolumeRow {
    kind: TermKind,
    label: &'static str,
    terms: Vec<VolumeTerm>,
    data: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ElementOp {
    rows: Vec<VolumeRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum TraceKind {
    Val,
    Xi,
    Eta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeNorm {
    L2,
    Half,
    ThreeHalf,
}

#[derive(Debug, Clone)]
struct EdgeTerm {
    element: usize,
    side: Side,
    var: Var,
    kind: TraceKind,
    reversed: bool,
    coef: Vec<f64>,
}

#[derive(Debug, Clone)]
struct EdgeRow {
    kind: TermKind,
    label: String,
    norm: EdgeNorm,
    terms: Vec<EdgeTerm>,
    data: Vec<f64>,
}

/// One variable of a field sampled on an element's volume quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSample {
    pub points: Vec<[f64; 2]>,
    pub value: Vec<f64>,
    pub gradient: Vec<[f64; 2]>,
    pub laplacian: Vec<f64>,
}

/// Identifies one residual operator `B_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorId {
    Volume { element: usize, row: usize },
    Edge(usize),
    Gauge,
}

/// Coefficient accumulator keyed by `(var, kind)` with deterministic order.
struct Terms<K: Ord + Copy> {
    map: BTreeMap<(Var, K), Vec<f64>>,
    len: usize,
}

impl<K: Ord + Copy> Terms<K> {
    fn new(len: usize) -> Self {
        Self { map: BTreeMap::new(), len }
    }

    fn add(&mut self, var: Var, kind: K, point: usize, v: f64) {
        let len = self.len;
        self.map.entry((var, kind)).or_insert_with(|| vec![0.0; len])[point] += v;
    }
}

/// Cached residual operators and data for one mesh, degree, and case.
#[derive(Debug, Clone)]
pub struct LeastSquaresSystem {
    degree: usize,
    n: usize,
    q: usize,
    n_elements: usize,
    tables: Arc<BasisTables>,
    edge_tables: EdgeNormTables,
    diff: Dense,
    /// `[values, first derivatives, second derivatives]`, GLL -> quadrature.
    sweeps: [Dense; 3],
    quad_weights: Vec<f64>,
    norm_mats: [Dense; 3],
    elements: Vec<ElementOp>,
    edge_rows: Vec<EdgeRow>,
    rows_of_edge: Vec<Vec<usize>>,
    gauge_index: usize,
    mesh: Mesh,
    case: CaseData,
}

impl LeastSquaresSystem {
    /// Volume residuals use a Gauss rule with `quad_order` points per direction
    /// (`W + 3` by default).
    pub fn new(mesh: &Mesh, case: &CaseData, degree: usize, quad_order: Option<usize>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidOrder { order: degree, min: 1 });
        }
        let quad_order = quad_order.unwrap_or(degree + 3);
        if quad_order < degree + 1 {
            return Err(Error::InvalidOrder { order: quad_order, min: degree + 1 });
        }
        let tables = basis_tables(degree, quad_order)?;
        let n = degree + 1;
        let q = quad_order;
        let edge_tables = EdgeNormTables::new(&tables.gll);
        let mut quad_weights = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..q {
                quad_weights[a * q + b] = tables.quad.weights[a] * tables.quad.weights[b];
            }
        }
        let gauge = mesh.gauge;
        let find = |t: f64| tables.gll.nodes.iter().position(|&x| x == t);
        let (Some(gi), Some(gj)) = (find(gauge.point.0), find(gauge.point.1)) else {
            return Err(Error::Contract(format!("gauge point {:?} is not a GLL node", gauge.point)));
        };
        if gauge.element >= mesh.n_elements() {
            return Err(Error::Contract(format!("gauge element {} out of range", gauge.element)));
        }
        let gauge_index = ((gauge.element * N_VARS + Var::P as usize) * n + gi) * n + gj;

        let mut sys = Self {
            degree,
            n,
            q,
            n_elements: mesh.n_elements(),
            diff: Dense::from_dmatrix(&tables.diff),
            sweeps: [
                Dense::from_dmatrix(&tables.to_quad),
                Dense::from_dmatrix(&tables.to_quad_d1),
                Dense::from_dmatrix(&tables.to_quad_d2),
            ],
            norm_mats: [
                Dense::from_dmatrix(&edge_tables.mass),
                Dense::from_dmatrix(&edge_tables.half),
                Dense::from_dmatrix(&edge_tables.three_half),
            ],
            tables,
            edge_tables,
            quad_weights,
            elements: Vec::new(),
            edge_rows: Vec::new(),
            rows_of_edge: Vec::new(),
            gauge_index,
            mesh: mesh.clone(),
            case: case.clone(),
        };
        sys.elements = (0..mesh.n_elements()).map(|e| sys.build_element(e)).collect::<Result<_>>()?;
        sys.build_edges()?;
        Ok(sys)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_dofs(&self) -> usize {
        N_VARS * self.n_elements * self.n * self.n
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn case(&self) -> &CaseData {
        &self.case
    }

    pub fn tables(&self) -> &BasisTables {
        &self.tables
    }

    pub fn edge_tables(&self) -> &EdgeNormTables {
        &self.edge_tables
    }

    pub fn gauge_index(&self) -> usize {
        self.gauge_index
    }

    pub fn zero_field(&self) -> SpectralField {
        SpectralField::zeros(self.n_elements, self.degree)
    }

    fn check_len(&self, got: usize) -> Result<()> {
        let expected = self.n_dofs();
        if got != expected {
            return Err(Error::Layout { expected, got });
        }
        Ok(())
    }

    fn block_offset(&self, element: usize, var: Var) -> usize {
        (element * N_VARS + var as usize) * self.n * self.n
    }

    fn build_element(&self, e: usize) -> Result<ElementOp> {
        let map = &self.mesh.elements[e];
        let q = self.q;
        let nodes = &self.tables.quad.nodes;
        let crate::problems::ProblemSpec { alpha, nu } = self.case.spec;
        let mut mom = [Terms::<VolKind>::new(q * q), Terms::new(q * q)];
        let mut cont = Terms::<VolKind>::new(q * q);
        let mut dcont = [Terms::<VolKind>::new(q * q), Terms::new(q * q)];
        let mut data = vec![vec![0.0; q * q]; 5];
        for a in 0..q {
            for b in 0..q {
                let pt = a * q + b;
                let m = map.metric(nodes[a], nodes[b]);
                if !(m.jac > 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "non-positive Jacobian {} in element {e} at ({}, {})",
                        m.jac, nodes[a], nodes[b]
                    )));
                }
                let sj = m.sqrt_jac;
                let g = &m.inv;
                let lap = m.laplacian_coefficients();
                let lap_kinds = [VolKind::Xi, VolKind::Eta, VolKind::XiXi, VolKind::XiEta, VolKind::EtaEta];
                for (k, row) in mom.iter_mut().enumerate() {
                    let v = Var::velocity(k);
                    row.add(v, VolKind::Val, pt, alpha * sj);
                    for (kind, c) in lap_kinds.iter().zip(lap) {
                        row.add(v, *kind, pt, -nu * sj * c);
                    }
                    row.add(Var::P, VolKind::Xi, pt, sj * g[0][k]);
                    row.add(Var::P, VolKind::Eta, pt, sj * g[1][k]);
                }
                // phi = -sqrt(J) div u; div u = sum_{a,c} inv[c][a] d u_a / d xi_c
                for comp in 0..2 {
                    let v = Var::velocity(comp);
                    for c in 0..2 {
                        cont.add(v, VolKind::first(c), pt, -sj * g[c][comp]);
                        for (ed, row) in dcont.iter_mut().enumerate() {
                            let coef = -m.d_sqrt_jac[ed] * g[c][comp] - sj * m.d_inv[ed][c][comp];
                            row.add(v, VolKind::first(c), pt, coef);
                            row.add(v, VolKind::second(c, ed), pt, -sj * g[c][comp]);
                        }
                    }
                }
                let src = self.case.source(m.derivs.x);
                data[0][pt] = src.f[0] * sj;
                data[1][pt] = src.f[1] * sj;
                data[2][pt] = src.h * sj;
                let tangents = [m.derivs.d_xi, m.derivs.d_eta];
                for ed in 0..2 {
                    let dh = src.grad_h[0] * tangents[ed][0] + src.grad_h[1] * tangents[ed][1];
                    data[3 + ed][pt] = dh * sj + src.h * m.d_sqrt_jac[ed];
                }
            }
        }
        let finish = |t: Terms<VolKind>| -> Vec<VolumeTerm> {
            t.map.into_iter().map(|((var, kind), coef)| VolumeTerm { var, kind, coef }).collect()
        };
        let [m0, m1] = mom;
        let [d0, d1] = dcont;
        let mut data = data.into_iter();
        let mut row = |kind, label, t| VolumeRow { kind, label, terms: finish(t), data: data.next().unwrap() };
        let rows = vec![
            row(TermKind::Momentum, "momentum x1", m0),
            row(TermKind::Momentum, "momentum x2", m1),
            row(TermKind::Continuity, "continuity", cont),
            row(TermKind::Continuity, "continuity d/dxi", d0),
            row(TermKind::Continuity, "continuity d/deta", d1),
        ];
        Ok(ElementOp { rows })
    }

    fn side_metrics(&self, element: usize, side: Side) -> Vec<Metric> {
        let nodes = &self.tables.gll.nodes;
        (0..self.n)
            .map(|k| {
                let (i, j) = side.node(k, self.n);
                self.mesh.elements[element].metric(nodes[i], nodes[j])
            })
            .collect()
    }

    fn build_edges(&mut self) -> Result<()> {
        let n = self.n;
        let mut rows = Vec::new();
        let mut rows_of_edge = Vec::new();
        for (edge_idx, edge) in self.mesh.edges.iter().enumerate() {
            let mut mine = Vec::new();
            match *edge {
                Edge::Interior { a, b, reversed } => {
                    let ma = self.side_metrics(a.element, a.side);
                    let mb = self.side_metrics(b.element, b.side);
                    let node_b = |k: usize| if reversed { n - 1 - k } else { k };
                    let term = |sr: crate::geometry::SideRef, var, kind, rev, coef| EdgeTerm {
                        element: sr.element,
                        side: sr.side,
                        var,
                        kind,
                        reversed: rev,
                        coef,
                    };
                    for v in [Var::U1, Var::U2] {
                        mine.push(rows.len());
                        rows.push(EdgeRow {
                            kind: TermKind::JumpValue,
                            label: format!("edge {edge_idx}: jump {v:?}"),
                            norm: EdgeNorm::L2,
                            terms: vec![
                                term(b, v, TraceKind::Val, reversed, vec![1.0; n]),
                                term(a, v, TraceKind::Val, false, vec![-1.0; n]),
                            ],
                            data: vec![0.0; n],
                        });
                    }
                    for v in [Var::U1, Var::U2] {
                        for x in 0..2 {
                            let cb = |c: usize| (0..n).map(|k| mb[node_b(k)].inv[c][x]).collect::<Vec<_>>();
                            let ca = |c: usize| (0..n).map(|k| -ma[k].inv[c][x]).collect::<Vec<_>>();
                            mine.push(rows.len());
                            rows.push(EdgeRow {
                                kind: TermKind::JumpGradient,
                                label: format!("edge {edge_idx}: jump d{v:?}/dx{}", x + 1),
                                norm: EdgeNorm::Half,
                                terms: vec![
                                    term(b, v, TraceKind::Xi, reversed, cb(0)),
                                    term(b, v, TraceKind::Eta, reversed, cb(1)),
                                    term(a, v, TraceKind::Xi, false, ca(0)),
                                    term(a, v, TraceKind::Eta, false, ca(1)),
                                ],
                                data: vec![0.0; n],
                            });
                        }
                    }
                    mine.push(rows.len());
                    rows.push(EdgeRow {
                        kind: TermKind::JumpPressure,
                        label: format!("edge {edge_idx}: jump P"),
                        norm: EdgeNorm::Half,
                        terms: vec![
                            term(b, Var::P, TraceKind::Val, reversed, vec![1.0; n]),
                            term(a, Var::P, TraceKind::Val, false, vec![-1.0; n]),
                        ],
                        data: vec![0.0; n],
                    });
                }
                Edge::Boundary { side, tag: BcTag::Dirichlet } => {
                    let ms = self.side_metrics(side.element, side.side);
                    for (k, v) in [Var::U1, Var::U2].into_iter().enumerate() {
                        let data = ms.iter().map(|m| self.case.sample(m.derivs.x).u[k]).collect();
                        mine.push(rows.len());
                        rows.push(EdgeRow {
                            kind: TermKind::Dirichlet,
                            label: format!("edge {edge_idx}: Dirichlet {v:?}"),
                            norm: EdgeNorm::ThreeHalf,
                            terms: vec![EdgeTerm {
                                element: side.element,
                                side: side.side,
                                var: v,
                                kind: TraceKind::Val,
                                reversed: false,
                                coef: vec![1.0; n],
                            }],
                            data,
                        });
                    }
                }
                Edge::Boundary { side, tag } => {
                    let symmetric = tag == BcTag::NeumannB;
                    let ms = self.side_metrics(side.element, side.side);
                    let normals: Vec<_> = ms.iter().map(|m| side.side.outward_normal(&m.derivs)).collect();
                    for comp in 0..2 {
                        let mut t = Terms::<TraceKind>::new(n);
                        for (node, (m, nrm)) in ms.iter().zip(&normals).enumerate() {
                            let g = &m.inv;
                            for x in 0..2 {
                                // n_x * d u_comp / d x_x
                                t.add(Var::velocity(comp), TraceKind::Xi, node, nrm[x] * g[0][x]);
                                t.add(Var::velocity(comp), TraceKind::Eta, node, nrm[x] * g[1][x]);
                                if symmetric {
                                    // n_x * d u_x / d x_comp
                                    t.add(Var::velocity(x), TraceKind::Xi, node, nrm[x] * g[0][comp]);
                                    t.add(Var::velocity(x), TraceKind::Eta, node, nrm[x] * g[1][comp]);
                                }
                            }
                            t.add(Var::P, TraceKind::Val, node, -nrm[comp]);
                        }
                        let terms = t
                            .map
                            .into_iter()
                            .map(|((var, kind), coef)| EdgeTerm {
                                element: side.element,
                                side: side.side,
                                var,
                                kind,
                                reversed: false,
                                coef,
                            })
                            .collect();
                        let data = ms
                            .iter()
                            .zip(&normals)
                            .map(|(m, nrm)| self.case.neumann_data(m.derivs.x, *nrm, symmetric)[comp])
                            .collect();
                        mine.push(rows.len());
                        rows.push(EdgeRow {
                            kind: TermKind::Neumann,
                            label: format!("edge {edge_idx}: Neumann component {}", comp + 1),
                            norm: EdgeNorm::Half,
                            terms,
                            data,
                        });
                    }
                }
            }
            rows_of_edge.push(mine);
        }
        self.edge_rows = rows;
        self.rows_of_edge = rows_of_edge;
        Ok(())
    }

    /// Reference-derivative fields of one element on the quadrature grid,
    /// indexed `[var][kind]`.
    fn ref_fields(&self, e: usize, x: &[f64], needed: &[[bool; N_VOL_KINDS]; N_VARS]) -> Vec<Vec<f64>> {
        let qq = self.q * self.q;
        let mut out = vec![Vec::new(); N_VARS * N_VOL_KINDS];
        for v in Var::ALL {
            let off = self.block_offset(e, v);
            let block = &x[off..off + self.n * self.n];
            for k in 0..N_VOL_KINDS {
                if !needed[v as usize][k] {
                    continue;
                }
                let (a, b) = self.sweep_pair(k);
                let mut f = vec![0.0; qq];
                tensor_apply(a, b, block, &mut f);
                out[v as usize * N_VOL_KINDS + k] = f;
            }
        }
        out
    }

    fn sweep_pair(&self, kind: usize) -> (&Dense, &Dense) {
        let [e0, e1, e2] = &self.sweeps;
        match kind {
            0 => (e0, e0),
            1 => (e1, e0),
            2 => (e0, e1),
            3 => (e2, e0),
            4 => (e1, e1),
            _ => (e0, e2),
        }
    }

    fn needed_kinds(rows: &[&VolumeRow]) -> [[bool; N_VOL_KINDS]; N_VARS] {
        let mut needed = [[false; N_VOL_KINDS]; N_VARS];
        for r in rows {
            for t in &r.terms {
                needed[t.var as usize][t.kind as usize] = true;
            }
        }
        needed
    }

    fn volume_forward(&self, e: usize, rows: &[&VolumeRow], x: &[f64]) -> Vec<Vec<f64>> {
        let fields = self.ref_fields(e, x, &Self::needed_kinds(rows));
        rows.iter()
            .map(|row| {
                let mut r = vec![0.0; self.q * self.q];
                for t in &row.terms {
                    let f = &fields[t.var as usize * N_VOL_KINDS + t.kind as usize];
                    for ((ri, c), fv) in r.iter_mut().zip(&t.coef).zip(f) {
                        *ri += c * fv;
                    }
                }
                r
            })
            .collect()
    }

    fn volume_adjoint(&self, e: usize, rows: &[&VolumeRow], weighted: &[Vec<f64>], y: &mut [f64]) {
        let qq = self.q * self.q;
        let mut bars = vec![Vec::new(); N_VARS * N_VOL_KINDS];
        for (row, w) in rows.iter().zip(weighted) {
            for t in &row.terms {
                let slot = &mut bars[t.var as usize * N_VOL_KINDS + t.kind as usize];
                if slot.is_empty() {
                    *slot = vec![0.0; qq];
                }
                for ((s, c), wv) in slot.iter_mut().zip(&t.coef).zip(w) {
                    *s += c * wv;
                }
            }
        }
        for v in Var::ALL {
            let off = self.block_offset(e, v);
            for k in 0..N_VOL_KINDS {
                let bar = &bars[v as usize * N_VOL_KINDS + k];
                if bar.is_empty() {
                    continue;
                }
                let (a, b) = self.sweep_pair(k);
                tensor_apply_transpose(a, b, bar, &mut y[off..off + self.n * self.n]);
            }
        }
    }

    fn trace(&self, x: &[f64], t: &EdgeTerm, node: usize) -> f64 {
        let n = self.n;
        let off = self.block_offset(t.element, t.var);
        let u = &x[off..off + n * n];
        let (i, j) = t.side.node(node, n);
        match t.kind {
            TraceKind::Val => u[i * n + j],
            TraceKind::Xi => (0..n).map(|m| self.diff.at(i, m) * u[m * n + j]).sum(),
            TraceKind::Eta => (0..n).map(|m| self.diff.at(j, m) * u[i * n + m]).sum(),
        }
    }

    fn trace_scatter(&self, y: &mut [f64], t: &EdgeTerm, node: usize, val: f64) {
        let n = self.n;
        let off = self.block_offset(t.element, t.var);
        let u = &mut y[off..off + n * n];
        let (i, j) = t.side.node(node, n);
        match t.kind {
            TraceKind::Val => u[i * n + j] += val,
            TraceKind::Xi => {
                for m in 0..n {
                    u[m * n + j] += self.diff.at(i, m) * val;
                }
            }
            TraceKind::Eta => {
                for m in 0..n {
                    u[i * n + m] += self.diff.at(j, m) * val;
                }
            }
        }
    }

    fn edge_forward(&self, row: &EdgeRow, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; n];
        for t in &row.terms {
            for (k, rk) in r.iter_mut().enumerate() {
                let node = if t.reversed { n - 1 - k } else { k };
                *rk += t.coef[k] * self.trace(x, t, node);
            }
        }
        r
    }

    fn edge_adjoint(&self, row: &EdgeRow, s: &[f64], y: &mut [f64]) {
        let n = self.n;
        for t in &row.terms {
            for k in 0..n {
                let node = if t.reversed { n - 1 - k } else { k };
                self.trace_scatter(y, t, node, t.coef[k] * s[k]);
            }
        }
    }

    fn norm_matrix(&self, norm: EdgeNorm) -> &Dense {
        match norm {
            EdgeNorm::L2 => &self.norm_mats[0],
            EdgeNorm::Half => &self.norm_mats[1],
            EdgeNorm::ThreeHalf => &self.norm_mats[2],
        }
    }

    /// `R(x)` split by term.
    pub fn evaluate_functional(&self, x: &SpectralField) -> Result<FunctionalBreakdown> {
        self.evaluate_functional_slice(x.as_slice())
    }

    pub fn evaluate_functional_slice(&self, x: &[f64]) -> Result<FunctionalBreakdown> {
        self.check_len(x.len())?;
        let mut out = FunctionalBreakdown::default();
        for (e, op) in self.elements.iter().enumerate() {
            let rows: Vec<&VolumeRow> = op.rows.iter().collect();
            let res = self.volume_forward(e, &rows, x);
            for (row, r) in rows.iter().zip(res) {
                let v: f64 = r
                    .iter()
                    .zip(&row.data)
                    .zip(&self.quad_weights)
                    .map(|((ri, ci), w)| w * (ri - ci) * (ri - ci))
                    .sum();
                out.add(row.kind, v);
            }
        }
        let mut s = vec![0.0; self.n];
        for row in &self.edge_rows {
            let mut r = self.edge_forward(row, x);
            for (ri, ci) in r.iter_mut().zip(&row.data) {
                *ri -= ci;
            }
            self.norm_matrix(row.norm).matvec(&r, &mut s);
            out.add(row.kind, r.iter().zip(&s).map(|(a, b)| a * b).sum());
        }
        out.gauge = x[self.gauge_index] * x[self.gauge_index];
        Ok(out)
    }

    /// `y = A x` with `A = sum_i B_i^T M_i B_i`.
    pub fn normal_action(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len())?;
        self.check_len(y.len())?;
        y.fill(0.0);
        for (e, op) in self.elements.iter().enumerate() {
            let rows: Vec<&VolumeRow> = op.rows.iter().collect();
            let mut res = self.volume_forward(e, &rows, x);
            for r in res.iter_mut() {
                for (ri, w) in r.iter_mut().zip(&self.quad_weights) {
                    *ri *= w;
                }
            }
            self.volume_adjoint(e, &rows, &res, y);
        }
        let mut s = vec![0.0; self.n];
        for row in &self.edge_rows {
            let r = self.edge_forward(row, x);
            self.norm_matrix(row.norm).matvec(&r, &mut s);
            self.edge_adjoint(row, &s, y);
        }
        y[self.gauge_index] += x[self.gauge_index];
        Ok(())
    }

    pub fn apply(&self, x: &SpectralField) -> Result<SpectralField> {
        let mut y = self.zero_field();
        self.normal_action(x.as_slice(), y.as_mut_slice())?;
        Ok(y)
    }

    /// `r = sum_i B_i^T M_i c_i`; the minimizer solves `A x = r`.
    pub fn normal_rhs(&self) -> SpectralField {
        let mut y = self.zero_field();
        let out = y.as_mut_slice();
        for (e, op) in self.elements.iter().enumerate() {
            let rows: Vec<&VolumeRow> = op.rows.iter().collect();
            let weighted: Vec<Vec<f64>> = rows
                .iter()
                .map(|row| row.data.iter().zip(&self.quad_weights).map(|(c, w)| c * w).collect())
                .collect();
            self.volume_adjoint(e, &rows, &weighted, out);
        }
        let mut s = vec![0.0; self.n];
        for row in &self.edge_rows {
            self.norm_matrix(row.norm).matvec(&row.data, &mut s);
            self.edge_adjoint(row, &s, out);
        }
        y
    }

    /// Both components of the Neumann operator on a Neumann-tagged edge, at
    /// the edge's GLL trace nodes.
    pub fn neumann_trace(&self, x: &SpectralField, edge: usize) -> Result<[Vec<f64>; 2]> {
        self.check_len(x.len())?;
        match self.mesh.edges.get(edge) {
            Some(Edge::Boundary { tag: BcTag::NeumannA | BcTag::NeumannB, .. }) => {}
            Some(other) => return Err(Error::Contract(format!("edge {edge} is not a Neumann edge: {other:?}"))),
            None => return Err(Error::Contract(format!("edge {edge} does not exist"))),
        }
        let rows = &self.rows_of_edge[edge];
        Ok([
            self.edge_forward(&self.edge_rows[rows[0]], x.as_slice()),
            self.edge_forward(&self.edge_rows[rows[1]], x.as_slice()),
        ])
    }

    /// Values and physical derivatives of `var` on element `e`'s quadrature
    /// grid, through the same operator chain as the volume residuals.
    pub fn quadrature_sample(&self, x: &SpectralField, element: usize, var: Var) -> Result<QuadratureSample> {
        self.check_len(x.len())?;
        if element >= self.n_elements {
            return Err(Error::Contract(format!("element {element} out of range")));
        }
        let mut needed = [[false; N_VOL_KINDS]; N_VARS];
        needed[var as usize] = [true; N_VOL_KINDS];
        let f = self.ref_fields(element, x.as_slice(), &needed);
        let f = &f[var as usize * N_VOL_KINDS..(var as usize + 1) * N_VOL_KINDS];
        let nodes = &self.tables.quad.nodes;
        let q = self.q;
        let mut out = QuadratureSample { points: Vec::new(), value: Vec::new(), gradient: Vec::new(), laplacian: Vec::new() };
        for a in 0..q {
            for b in 0..q {
                let pt = a * q + b;
                let m = self.mesh.elements[element].metric(nodes[a], nodes[b]);
                let g = &m.inv;
                let (ux, ue) = (f[1][pt], f[2][pt]);
                out.points.push(m.derivs.x);
                out.value.push(f[0][pt]);
                out.gradient.push([g[0][0] * ux + g[1][0] * ue, g[0][1] * ux + g[1][1] * ue]);
                let lap = m.laplacian_coefficients();
                out.laplacian.push((1..N_VOL_KINDS).map(|k| lap[k - 1] * f[k][pt]).sum());
            }
        }
        Ok(out)
    }

    /// Every residual operator in the functional.
    pub fn residual_operators(&self) -> Vec<OperatorId> {
        let mut ids = Vec::new();
        for (e, op) in self.elements.iter().enumerate() {
            ids.extend((0..op.rows.len()).map(|row| OperatorId::Volume { element: e, row }));
        }
        ids.extend((0..self.edge_rows.len()).map(OperatorId::Edge));
        ids.push(OperatorId::Gauge);
        ids
    }

    pub fn operator_label(&self, id: OperatorId) -> String {
        match id {
            OperatorId::Volume { element, row } => format!("element {element}: {}", self.elements[element].rows[row].label),
            OperatorId::Edge(r) => self.edge_rows[r].label.clone(),
            OperatorId::Gauge => "pressure gauge".into(),
        }
    }

    pub fn operator_kind(&self, id: OperatorId) -> TermKind {
        match id {
            OperatorId::Volume { element, row } => self.elements[element].rows[row].kind,
            OperatorId::Edge(r) => self.edge_rows[r].kind,
            OperatorId::Gauge => TermKind::Gauge,
        }
    }

    /// Length of the residual vector produced by `id`.
    pub fn operator_range_len(&self, id: OperatorId) -> usize {
        match id {
            OperatorId::Volume { .. } => self.q * self.q,
            OperatorId::Edge(_) => self.n,
            OperatorId::Gauge => 1,
        }
    }

    /// `B_id x`.
    pub fn residual_apply(&self, id: OperatorId, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        Ok(match id {
            OperatorId::Volume { element, row } => {
                let r = &self.elements[element].rows[row];
                self.volume_forward(element, &[r], x).pop().unwrap_or_default()
            }
            OperatorId::Edge(r) => self.edge_forward(&self.edge_rows[r], x),
            OperatorId::Gauge => vec![x[self.gauge_index]],
        })
    }

    /// `B_id^T r`.
    pub fn residual_adjoint(&self, id: OperatorId, r: &[f64]) -> Result<Vec<f64>> {
        let expected = self.operator_range_len(id);
        if r.len() != expected {
            return Err(Error::Layout { expected, got: r.len() });
        }
        let mut y = vec![0.0; self.n_dofs()];
        match id {
            OperatorId::Volume { element, row } => {
                let row = &self.elements[element].rows[row];
                self.volume_adjoint(element, &[row], &[r.to_vec()], &mut y);
            }
            OperatorId::Edge(k) => self.edge_adjoint(&self.edge_rows[k], r, &mut y),
            OperatorId::Gauge => y[self.gauge_index] = r[0],
        }
        Ok(y)
    }
}
