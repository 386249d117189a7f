use lssem::assembly::LeastSquaresSystem;
use lssem::basis::{diff_matrix, gauss_nodes, gll_nodes, interp_matrix, NodeSet1D};
use lssem::geometry::build_case_mesh;
use lssem::norms::{edge_norm_half, half_seminorm_matrix, EdgeNormTables};
use lssem::problems::{make_case, CaseParams};
use lssem::solver::Preconditioner;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

/// `(exact integral over [-1, 1], sum of |terms|)` of the monomial expansion.
fn monomial_integral(c: &[f64]) -> (f64, f64) {
    let mut exact = 0.0;
    let mut scale = 0.0;
    for (k, ck) in c.iter().enumerate() {
        let m = 2.0 / (k as f64 + 1.0);
        if k % 2 == 0 {
            exact += ck * m;
        }
        scale += ck.abs() * m;
    }
    (exact, scale)
}

fn check_exactness(set: &NodeSet1D, coefs: &[f64]) -> Result<(), TestCaseError> {
    let q = set.integrate(|x| horner(coefs, x));
    let (exact, scale) = monomial_integral(coefs);
    prop_assert!((q - exact).abs() <= 1e-13 * scale.max(1e-300), "{} vs {}", q, exact);
    Ok(())
}

fn coefficients(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, max_len..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauss_is_exact_to_degree_2n_minus_1((n, c) in (1usize..=20).prop_flat_map(|n| (Just(n), coefficients(2 * n)))) {
        check_exactness(&gauss_nodes(n).unwrap(), &c)?;
    }

    #[test]
    fn gll_is_exact_to_degree_2n_minus_3((n, c) in (2usize..=20).prop_flat_map(|n| (Just(n), coefficients(2 * n - 2)))) {
        check_exactness(&gll_nodes(n).unwrap(), &c)?;
    }

    #[test]
    fn nodes_are_symmetric(n in 2usize..=30) {
        for set in [gll_nodes(n).unwrap(), gauss_nodes(n).unwrap()] {
            for i in 0..n {
                prop_assert!((set.nodes[i] + set.nodes[n - 1 - i]).abs() <= 1e-15);
                prop_assert!((set.weights[i] - set.weights[n - 1 - i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn differentiation_is_exact_on_monomials(n in 2usize..=16) {
        let g = gll_nodes(n).unwrap();
        let d = diff_matrix(&g).0;
        for k in 0..n {
            for i in 0..n {
                let dv: f64 = (0..n).map(|j| d[(i, j)] * g.nodes[j].powi(k as i32)).sum();
                let exact = if k == 0 { 0.0 } else { k as f64 * g.nodes[i].powi(k as i32 - 1) };
                prop_assert!((dv - exact).abs() <= 1e-12 * (k as f64).max(1.0), "n={} k={} i={}", n, k, i);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials(
        (n, c, m) in (2usize..=16).prop_flat_map(|n| (Just(n), coefficients(n), 1usize..=24))
    ) {
        let src = gll_nodes(n).unwrap();
        let dst = gauss_nodes(m).unwrap();
        let e = interp_matrix(&src, &dst).0;
        let vals: Vec<f64> = src.nodes.iter().map(|&x| horner(&c, x)).collect();
        for (a, &y) in dst.nodes.iter().enumerate() {
            let v: f64 = (0..n).map(|k| e[(a, k)] * vals[k]).sum();
            prop_assert!((v - horner(&c, y)).abs() <= 1e-12);
        }
    }

    #[test]
    fn half_seminorm_is_psd(v in prop::collection::vec(-10.0f64..10.0, 9)) {
        let g = gll_nodes(9).unwrap();
        let s = half_seminorm_matrix(&g);
        let sv = &s * nalgebra::DVector::from_column_slice(&v);
        let q: f64 = v.iter().zip(sv.iter()).map(|(a, b)| a * b).sum();
        prop_assert!(q >= -1e-12);
    }

    #[test]
    fn half_norm_scales_quadratically(v in prop::collection::vec(-1.0f64..1.0, 7), k in -8i32..8, alpha in -5.0f64..5.0) {
        let t = EdgeNormTables::new(&gll_nodes(7).unwrap());
        let base = edge_norm_half(&v, &t);
        // powers of two scale every rounding step exactly
        let pow2 = 2f64.powi(k);
        let scaled: Vec<f64> = v.iter().map(|x| pow2 * x).collect();
        prop_assert_eq!(edge_norm_half(&scaled, &t), pow2 * pow2 * base);
        let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
        prop_assert!((edge_norm_half(&scaled, &t) - alpha * alpha * base).abs() <= 1e-14 * alpha * alpha * base.max(1e-300));
    }
}

#[test]
fn half_seminorm_null_space_is_constants() {
    for n in 2..=17 {
        let s = half_seminorm_matrix(&gll_nodes(n).unwrap());
        let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() <= 1e-12, "n={n}: {}", eig[0]);
        assert!(eig[1] > 1e-6, "n={n}: second eigenvalue {}", eig[1]);
    }
}

#[test]
fn jacobian_positive_up_to_degree_16() {
    for id in 1..=6 {
        let mesh = build_case_mesh(id).unwrap();
        for w in 1..=16 {
            let q = gauss_nodes(w + 3).unwrap();
            for m in &mesh.elements {
                for &a in &q.nodes {
                    for &b in &q.nodes {
                        assert!(m.metric(a, b).jac > 0.0, "case {id} W={w}");
                    }
                }
            }
        }
    }
}

fn seeded(seed: u64, len: usize) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normal_action_is_symmetric_and_nonnegative(case_id in 1usize..=6, w in 2usize..=6, seed in any::<u64>()) {
        let mesh = build_case_mesh(case_id).unwrap();
        let case = make_case(case_id, CaseParams::default()).unwrap();
        let sys = LeastSquaresSystem::new(&mesh, &case, w, None).unwrap();
        let n = sys.n_dofs();
        let (v, u) = (seeded(seed, n), seeded(seed ^ 0x9e37_79b9, n));
        let (mut av, mut au) = (vec![0.0; n], vec![0.0; n]);
        sys.normal_action(&v, &mut av).unwrap();
        sys.normal_action(&u, &mut au).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (x, y) = (dot(&av, &u), dot(&v, &au));
        prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(y.abs()));
        prop_assert!(dot(&av, &v) >= 0.0);
    }

    #[test]
    fn preconditioner_is_spd(w in 1usize..=10, seed in any::<u64>()) {
        let p = Preconditioner::block_diagonal(3, w).unwrap();
        let n = 3 * 3 * (w + 1) * (w + 1);
        let (v, u) = (seeded(seed, n), seeded(seed.wrapping_add(1), n));
        let (mut pv, mut pu) = (vec![0.0; n], vec![0.0; n]);
        p.apply(&v, &mut pv).unwrap();
        p.apply(&u, &mut pu).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        prop_assert!(dot(&pv, &v) > 0.0);
        let (x, y) = (dot(&pv, &u), dot(&v, &pu));
        prop_assert!((x - y).abs() <= 1e-9 * dot(&pv, &v).max(dot(&pu, &u)));
    }
}
