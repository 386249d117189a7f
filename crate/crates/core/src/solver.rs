//! Preconditioned conjugate gradients on the normal equations.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{LeastSquaresSystem, SpectralField, N_VARS};
use crate::error::{Error, Result};
use crate::norms::SquareGramTables;

/// Symmetric linear operator acting on flat vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

impl LinearOperator for LeastSquaresSystem {
    fn dim(&self) -> usize {
        self.n_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.normal_action(x, y)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols() || y.len() != self.nrows() {
            return Err(Error::Layout { expected: self.ncols(), got: x.len() });
        }
        let r = self * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
        Ok(())
    }
}

/// `P^{-1}` for PCG.
///
/// The block form applies `G2^{-1}` to each element's `u1` and `u2` blocks and
/// `G1^{-1}` to its `p` block. The Gram matrices live on the reference square,
/// so one factorization serves every element.
#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity,
    Block { n_elements: usize, degree: usize, grams: Arc<SquareGramTables> },
}

impl Preconditioner {
    pub fn block_diagonal(n_elements: usize, degree: usize) -> Result<Self> {
        let grams = Arc::new(SquareGramTables::new(degree)?);
        Ok(Self::Block { n_elements, degree, grams })
    }

    /// Block preconditioner from explicit Gram tables.
    pub fn from_grams(n_elements: usize, degree: usize, grams: SquareGramTables) -> Result<Self> {
        let nn = (degree + 1) * (degree + 1);
        for g in [&grams.g1, &grams.g2] {
            if g.shape() != (nn, nn) {
                return Err(Error::Layout { expected: nn, got: g.nrows() });
            }
        }
        Ok(Self::Block { n_elements, degree, grams: Arc::new(grams) })
    }

    pub fn for_system(system: &LeastSquaresSystem) -> Result<Self> {
        Self::block_diagonal(system.n_elements(), system.degree())
    }

    /// `z = P^{-1} r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        if r.len() != z.len() {
            return Err(Error::Layout { expected: r.len(), got: z.len() });
        }
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Block { n_elements, degree, grams } => {
                let nn = (degree + 1) * (degree + 1);
                let expected = N_VARS * n_elements * nn;
                if r.len() != expected {
                    return Err(Error::Layout { expected, got: r.len() });
                }
                for (k, (rb, zb)) in r.chunks(nn).zip(z.chunks_mut(nn)).enumerate() {
                    let chol = if k % N_VARS == 2 { &grams.chol_g1 } else { &grams.chol_g2 };
                    let s = chol.solve(&DVector::from_column_slice(rb));
                    zb.copy_from_slice(s.as_slice());
                }
            }
        }
        Ok(())
    }

    pub fn apply_field(&self, v: &SpectralField) -> Result<SpectralField> {
        let mut out = v.clone();
        self.apply(v.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||A x - r||_{P^{-1}} / ||r||_{P^{-1}}` at exit.
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Volume quadrature uses `W + quad_extra` Gauss points per direction.
    pub quad_extra: usize,
    pub preconditioned: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20000, quad_extra: 3, preconditioned: true }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// PCG from the zero vector.
pub fn pcg_solve(
    action: &dyn LinearOperator,
    rhs: &[f64],
    precond: &Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    pcg_solve_monitored(action, rhs, precond, tol, max_iter, &mut |_, _| {})
}

/// [`pcg_solve`] calling `monitor(k, x_k)` after every iterate update.
pub fn pcg_solve_monitored(
    action: &dyn LinearOperator,
    rhs: &[f64],
    precond: &Preconditioner,
    tol: f64,
    max_iter: usize,
    monitor: &mut dyn FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = action.dim();
    if rhs.len() != n {
        return Err(Error::Layout { expected: n, got: rhs.len() });
    }
    let start = Instant::now();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z)?;
    let mut rz = dot(&r, &z);
    if !rz.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let b_norm = rz.max(0.0).sqrt();
    let report = |iterations, residual, converged| SolveReport {
        iterations,
        residual,
        converged,
        seconds: start.elapsed().as_secs_f64(),
    };
    if b_norm == 0.0 {
        return Ok((x, report(0, 0.0, true)));
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut residual = 1.0;
    for k in 1..=max_iter {
        action.apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::Divergence { iteration: k });
        }
        if pap <= 0.0 {
            return Err(Error::NotSpd(format!("p^T A p = {pap} at iteration {k}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        monitor(k, &x);
        precond.apply(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        if !rz_new.is_finite() {
            return Err(Error::Divergence { iteration: k });
        }
        residual = rz_new.max(0.0).sqrt() / b_norm;
        if residual <= tol {
            return Ok((x, report(k, residual, true)));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, report(max_iter, residual, false)))
}

/// Builds the normal equations for `system` and solves them.
pub fn solve_system(system: &LeastSquaresSystem, config: &SolverConfig) -> Result<(SpectralField, SolveReport)> {
    let precond = if config.preconditioned { Preconditioner::for_system(system)? } else { Preconditioner::Identity };
    let rhs = system.normal_rhs();
    let (x, report) = pcg_solve(system, rhs.as_slice(), &precond, config.tol, config.max_iter)?;
    Ok((SpectralField::from_vec(system.n_elements(), system.degree(), x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_case_mesh;
    use crate::problems::{make_case, CaseParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn case1_system(w: usize) -> LeastSquaresSystem {
        let mesh = build_case_mesh(1).unwrap();
        let case = make_case(1, CaseParams::default()).unwrap();
        LeastSquaresSystem::new(&mesh, &case, w, None).unwrap()
    }

    #[test]
    fn identity_grams_give_identity() {
        let nn = 16;
        let eye = DMatrix::identity(nn, nn);
        let grams = SquareGramTables::from_matrices(eye.clone(), eye).unwrap();
        let p = Preconditioner::from_grams(2, 3, grams).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_vec(6 * nn, &mut rng);
        let mut z = vec![0.0; v.len()];
        p.apply(&v, &mut z).unwrap();
        assert_eq!(z, v);
    }

    #[test]
    fn block_preconditioner_is_linear_symmetric_positive() {
        let p = Preconditioner::block_diagonal(4, 5).unwrap();
        let len = 3 * 4 * 36;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let apply = |v: &[f64]| {
            let mut z = vec![0.0; len];
            p.apply(v, &mut z).unwrap();
            z
        };
        for _ in 0..100 {
            let v = random_vec(len, &mut rng);
            assert!(dot(&apply(&v), &v) > 0.0);
        }
        let (v, w) = (random_vec(len, &mut rng), random_vec(len, &mut rng));
        let (a, b) = (0.7, -2.3);
        let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply(&comb);
        let (pv, pw) = (apply(&v), apply(&w));
        let scale = lhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..len {
            assert!((lhs[i] - (a * pv[i] + b * pw[i])).abs() <= 1e-12 * scale.max(1.0));
        }
        let (s1, s2) = (dot(&pv, &w), dot(&v, &pw));
        assert!((s1 - s2).abs() <= 1e-12 * s1.abs().max(1.0));
        assert!(matches!(p.apply(&v[1..], &mut vec![0.0; len - 1]), Err(Error::Layout { .. })));
    }

    #[test]
    fn diagonal_stub_terminates() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let (x, rep) = pcg_solve(&a, &[2.0, 1.0], &Preconditioner::Identity, 1e-14, 10).unwrap();
        assert!(rep.converged && rep.iterations <= 2);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs() {
        let sys = case1_system(3);
        let p = Preconditioner::for_system(&sys).unwrap();
        let (x, rep) = pcg_solve(&sys, &vec![0.0; sys.n_dofs()], &p, 1e-10, 100).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_values_are_reported() {
        struct Broken;
        impl LinearOperator for Broken {
            fn dim(&self) -> usize {
                3
            }
            fn apply(&self, _: &[f64], y: &mut [f64]) -> Result<()> {
                y.fill(f64::NAN);
                Ok(())
            }
        }
        let r = pcg_solve(&Broken, &[1.0, 0.0, 0.0], &Preconditioner::Identity, 1e-10, 10);
        assert!(matches!(r, Err(Error::Divergence { iteration: 1 })));
        assert!(pcg_solve(&Broken, &[1.0, 0.0, 0.0], &Preconditioner::Identity, 0.0, 10).is_err());
    }

    #[test]
    fn energy_error_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40;
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
        let x_star = DVector::from_vec(random_vec(n, &mut rng));
        let b = &a * &x_star;
        let mut energies = Vec::new();
        let mut mon = |_: usize, x: &[f64]| {
            let e = DVector::from_column_slice(x) - &x_star;
            energies.push(e.dot(&(&a * &e)));
        };
        let (_, rep) = pcg_solve_monitored(&a, b.as_slice(), &Preconditioner::Identity, 1e-12, 500, &mut mon).unwrap();
        assert!(rep.converged);
        let e0 = x_star.dot(&(&a * &x_star));
        let mut prev = e0;
        for e in energies {
            assert!(e <= prev * (1.0 + 1e-12) + 1e-20, "{e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn case1_degree4_iterations_and_determinism() {
        let sys = case1_system(4);
        let cfg = SolverConfig::default();
        let (x1, r1) = solve_system(&sys, &cfg).unwrap();
        let (x2, r2) = solve_system(&sys, &cfg).unwrap();
        assert!(r1.converged && r1.residual <= cfg.tol);
        assert!((45..=1135).contains(&r1.iterations), "iterations {}", r1.iterations);
        assert_eq!(r1.iterations, r2.iterations);
        assert!(x1.as_slice().iter().zip(x2.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn preconditioned_counts_grow_slower() {
        let count = |w: usize, preconditioned: bool| {
            let cfg = SolverConfig { preconditioned, ..SolverConfig::default() };
            solve_system(&case1_system(w), &cfg).unwrap().1.iterations as f64
        };
        for w in [4, 5] {
            let pre = count(w, true) / count(w - 1, true);
            let plain = count(w, false) / count(w - 1, false);
            assert!(pre < plain, "W={w}: preconditioned ratio {pre} vs {plain}");
        }
    }
}
