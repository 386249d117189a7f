//! One-dimensional nodal bases on `[-1, 1]`.
//!
//! Gauss–Lobatto–Legendre (GLL) nodes carry the unknowns; Gauss–Legendre
//! nodes are used for oversampled integration. Differentiation and
//! interpolation matrices are built from barycentric weights.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Gll,
    Gauss,
}

/// Quadrature nodes and weights on `[-1, 1]`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet1D {
    pub kind: NodeKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeSet1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature sum of `f` over the nodes.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // P'_n from the three-term identity; the endpoint limit is n(n+1)/2 * x^(n+1).
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for k in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - k] - nodes[k]);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        let w = 0.5 * (weights[k] + weights[n - 1 - k]);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

/// GLL nodes: the endpoints plus the roots of `P'_{n-1}`.
pub fn gll_nodes(n: usize) -> Result<NodeSet1D> {
    if n < 2 {
        return Err(Error::InvalidOrder { order: n, min: 2 });
    }
    let deg = n - 1;
    let df = deg as f64;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[deg] = 1.0;
    for (k, node) in nodes.iter_mut().enumerate().take(deg).skip(1) {
        let mut x = -(std::f64::consts::PI * k as f64 / df).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(deg, x);
            // Legendre ODE gives P'' in terms of P and P'.
            let d2p = (2.0 * x * dp - df * (df + 1.0) * p) / (1.0 - x * x);
            let dx = dp / d2p;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        *node = x;
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre(deg, x);
            2.0 / (df * (df + 1.0) * p * p)
        })
        .collect();
    symmetrize(&mut nodes, &mut weights);
    Ok(NodeSet1D { kind: NodeKind::Gll, nodes, weights })
}

/// Gauss–Legendre nodes: the roots of `P_n`.
pub fn gauss_nodes(n: usize) -> Result<NodeSet1D> {
    if n < 1 {
        return Err(Error::InvalidOrder { order: n, min: 1 });
    }
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = -(std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    symmetrize(&mut nodes, &mut weights);
    Ok(NodeSet1D { kind: NodeKind::Gauss, nodes, weights })
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let prod: f64 = (0..x.len())
                .filter(|&k| k != j)
                .map(|k| x[j] - x[k])
                .product();
            1.0 / prod
        })
        .collect()
}

/// Nodal differentiation matrix of the degree `n-1` interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix(pub DMatrix<f64>);

/// Maps nodal values on a source grid to values of the same polynomial on a target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpMatrix(pub DMatrix<f64>);

pub fn diff_matrix(nodes: &NodeSet1D) -> DiffMatrix {
    let x = &nodes.nodes;
    let n = x.len();
    let lam = barycentric_weights(x);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = lam[j] / lam[i] / (x[i] - x[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        // negative-sum trick keeps D * 1 = 0 to round-off
        d[(i, i)] = diag;
    }
    DiffMatrix(d)
}

pub fn interp_matrix(source: &NodeSet1D, target: &NodeSet1D) -> InterpMatrix {
    InterpMatrix(interp_matrix_at(&source.nodes, &target.nodes))
}

/// Barycentric (second form) interpolation from `source` nodes to arbitrary points.
pub fn interp_matrix_at(source: &[f64], points: &[f64]) -> DMatrix<f64> {
    let n = source.len();
    let lam = barycentric_weights(source);
    let mut m = DMatrix::zeros(points.len(), n);
    for (r, &t) in points.iter().enumerate() {
        if let Some(j) = source.iter().position(|&s| s == t) {
            m[(r, j)] = 1.0;
            continue;
        }
        let terms: Vec<f64> = (0..n).map(|j| lam[j] / (t - source[j])).collect();
        let denom: f64 = terms.iter().sum();
        for j in 0..n {
            m[(r, j)] = terms[j] / denom;
        }
    }
    m
}

/// All one-dimensional operators for a given polynomial degree and volume
/// quadrature order.
#[derive(Debug, Clone)]
pub struct BasisTables {
    /// Polynomial degree `W`; the GLL grid has `W + 1` nodes.
    pub degree: usize,
    pub gll: NodeSet1D,
    pub quad: NodeSet1D,
    /// GLL differentiation matrix, `(W+1) x (W+1)`.
    pub diff: DMatrix<f64>,
    /// GLL -> quadrature values.
    pub to_quad: DMatrix<f64>,
    /// GLL -> quadrature first derivatives.
    pub to_quad_d1: DMatrix<f64>,
    /// GLL -> quadrature second derivatives.
    pub to_quad_d2: DMatrix<f64>,
}

impl BasisTables {
    pub fn new(degree: usize, quad_order: usize) -> Result<Self> {
        let gll = gll_nodes(degree + 1)?;
        let quad = gauss_nodes(quad_order)?;
        let diff = diff_matrix(&gll).0;
        let to_quad = interp_matrix(&gll, &quad).0;
        let to_quad_d1 = &to_quad * &diff;
        let to_quad_d2 = &to_quad_d1 * &diff;
        Ok(Self { degree, gll, quad, diff, to_quad, to_quad_d1, to_quad_d2 })
    }

    pub fn n(&self) -> usize {
        self.degree + 1
    }

    pub fn q(&self) -> usize {
        self.quad.len()
    }
}

type TableCache = Mutex<HashMap<(usize, usize), Arc<BasisTables>>>;

/// Shared, immutable tables keyed by `(degree, quad_order)`.
pub fn basis_tables(degree: usize, quad_order: usize) -> Result<Arc<BasisTables>> {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = guard.get(&(degree, quad_order)) {
        return Ok(Arc::clone(t));
    }
    let t = Arc::new(BasisTables::new(degree, quad_order)?);
    guard.insert((degree, quad_order), Arc::clone(&t));
    Ok(t)
}
