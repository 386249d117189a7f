//! Quadratic forms for the fractional trace norms on `I = (-1, 1)` and the
//! `H^1(S)` / `H^2(S)` Gram matrices over the tensor GLL nodal basis.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::{diff_matrix, gauss_nodes, interp_matrix, NodeSet1D};
use crate::error::{Error, Result};

/// `|w|^2_{1/2,I}` as a matrix on GLL nodal values of a degree `n-1`
/// polynomial `w`.
///
/// The divided difference `(w(s) - w(t)) / (s - t)` is a polynomial of degree
/// `n-2` in each variable (with `w'(s)` on the diagonal), so a tensor Gauss
/// rule with `n` points integrates its square exactly.
pub fn half_seminorm_matrix(trace_nodes: &NodeSet1D) -> DMatrix<f64> {
    let n = trace_nodes.len();
    let g = gauss_nodes(n).expect("n >= 1");
    let e = interp_matrix(trace_nodes, &g).0;
    let ed = &e * &diff_matrix(trace_nodes).0;
    let mut s = DMatrix::zeros(n, n);
    let mut row = DVector::zeros(n);
    for a in 0..n {
        for b in 0..n {
            if a == b {
                row.copy_from(&ed.row(a).transpose());
            } else {
                let inv = 1.0 / (g.nodes[a] - g.nodes[b]);
                for k in 0..n {
                    row[k] = (e[(a, k)] - e[(b, k)]) * inv;
                }
            }
            s.ger(g.weights[a] * g.weights[b], &row, &row, 1.0);
        }
    }
    symmetrized(s)
}

/// Exact `L^2(I)` mass matrix on GLL nodal values.
pub fn mass_matrix(trace_nodes: &NodeSet1D) -> DMatrix<f64> {
    let g = gauss_nodes(trace_nodes.len()).expect("n >= 1");
    let e = interp_matrix(trace_nodes, &g).0;
    let w = DMatrix::from_diagonal(&DVector::from_vec(g.weights.clone()));
    symmetrized(e.transpose() * w * e)
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Edge quadratic forms for traces with `n = W + 1` GLL nodes.
#[derive(Debug, Clone)]
pub struct EdgeNormTables {
    pub mass: DMatrix<f64>,
    pub half_seminorm: DMatrix<f64>,
    /// `mass + half_seminorm`: the full `||.||^2_{1/2,I}`.
    pub half: DMatrix<f64>,
    /// `||w||^2_0 + ||w'||^2_{1/2}` with `w'` the edge-parameter derivative.
    pub three_half: DMatrix<f64>,
    pub diff: DMatrix<f64>,
}

impl EdgeNormTables {
    pub fn new(trace_nodes: &NodeSet1D) -> Self {
        let mass = mass_matrix(trace_nodes);
        let half_seminorm = half_seminorm_matrix(trace_nodes);
        let half = &mass + &half_seminorm;
        let diff = diff_matrix(trace_nodes).0;
        let three_half = symmetrized(&mass + diff.transpose() * &half * &diff);
        Self { mass, half_seminorm, half, three_half, diff }
    }
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    v.dot(&(m * &v))
}

/// `||w||^2_{1/2,I}` of the polynomial with nodal values `v`.
pub fn edge_norm_half(v: &[f64], tables: &EdgeNormTables) -> f64 {
    quad_form(&tables.half, v)
}

/// `||w||^2_0 + ||w'||^2_{1/2}` of the polynomial with nodal values `v`.
pub fn edge_norm_threehalf(v: &[f64], tables: &EdgeNormTables) -> f64 {
    quad_form(&tables.three_half, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sobolev {
    H1,
    H2,
}

/// Full `H^1(S)` or `H^2(S)` Gram matrix on the `(W+1)^2` tensor GLL basis,
/// indexed `i * (W+1) + j` with `i` the `xi` index.
pub fn square_gram(degree: usize, quad: &NodeSet1D, which: Sobolev) -> Result<DMatrix<f64>> {
    if quad.len() < degree + 1 {
        return Err(Error::InvalidOrder { order: quad.len(), min: degree + 1 });
    }
    let gll = crate::basis::gll_nodes(degree + 1)?;
    let d = diff_matrix(&gll).0;
    let e0 = interp_matrix(&gll, quad).0;
    let e1 = &e0 * &d;
    let e2 = &e1 * &d;
    let w = DMatrix::from_diagonal(&DVector::from_vec(quad.weights.clone()));
    let m = e0.transpose() * &w * &e0;
    let k = e1.transpose() * &w * &e1;
    let mut g = m.kronecker(&m) + k.kronecker(&m) + m.kronecker(&k);
    if which == Sobolev::H2 {
        let k2 = e2.transpose() * &w * &e2;
        g += k2.kronecker(&m) + k.kronecker(&k) + m.kronecker(&k2);
    }
    Ok(symmetrized(g))
}

/// Gram matrices on `S` and their Cholesky factors.
#[derive(Debug, Clone)]
pub struct SquareGramTables {
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub chol_g1: Cholesky<f64, Dyn>,
    pub chol_g2: Cholesky<f64, Dyn>,
}

impl SquareGramTables {
    /// Oversampled Gauss rule of order `W + 3`.
    pub fn new(degree: usize) -> Result<Self> {
        let quad = gauss_nodes(degree + 3)?;
        let g1 = square_gram(degree, &quad, Sobolev::H1)?;
        let g2 = square_gram(degree, &quad, Sobolev::H2)?;
        Self::from_matrices(g1, g2)
    }

    pub fn from_matrices(g1: DMatrix<f64>, g2: DMatrix<f64>) -> Result<Self> {
        let chol_g1 = Cholesky::new(g1.clone()).ok_or_else(|| Error::NotSpd("H1 Gram matrix".into()))?;
        let chol_g2 = Cholesky::new(g2.clone()).ok_or_else(|| Error::NotSpd("H2 Gram matrix".into()))?;
        Ok(Self { g1, g2, chol_g1, chol_g2 })
    }
}
