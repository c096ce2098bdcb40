use fracgcl::fde::{multipliers, skip_multipliers, solve_caputo_pc, solve_linear_spectral, solve_with_skips};
use fracgcl::graph::{eigendecompose, normalized_laplacian, Graph, SpectralBasis};
use fracgcl::special::MlEvalConfig;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_connected(n: usize, seed: u64) -> (DMatrix<f64>, SpectralBasis) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i, 1.0));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.2) {
                edges.push((i, j, 1.0));
            }
        }
    }
    let g = Graph::new(n, &edges).unwrap();
    assert!(g.is_connected());
    let l = normalized_laplacian(&g);
    let b = eigendecompose(&l).unwrap();
    (l, b)
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn stepper_matches_spectral_solution() {
    for (k, n) in [10usize, 14, 20].into_iter().enumerate() {
        let (l, basis) = random_connected(n, 100 + k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let y0 = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let exact = solve_linear_spectral(&basis, &y0, alpha, 2.0).unwrap();
            let tr = solve_caputo_pc(|_, y| -(&l * y), &y0, alpha, 2.0, 1e-3).unwrap();
            let e = rel_err(tr.last(), &exact);
            assert!(e < 1e-3, "n={n} alpha={alpha}: rel err {e:e}");
        }
    }
}

#[test]
fn halving_step_reduces_error() {
    let (l, basis) = random_connected(12, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y0 = DMatrix::from_fn(12, 2, |_, _| rng.gen_range(-1.0..1.0));
    for alpha in [0.25, 0.5, 0.75, 1.0] {
        let exact = solve_linear_spectral(&basis, &y0, alpha, 1.0).unwrap();
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&h| rel_err(solve_caputo_pc(|_, y| -(&l * y), &y0, alpha, 1.0, h).unwrap().last(), &exact))
            .collect();
        let order = (errs[1] / errs[2]).log2();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "alpha={alpha}: {errs:?}");
        assert!(order > 0.0);
        if alpha == 1.0 {
            assert!((order - 2.0).abs() < 0.2, "order {order}");
        }
    }
}

#[test]
fn spectral_path_conserves_frequency_zero() {
    let (_, basis) = random_connected(15, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y0 = DMatrix::from_fn(15, 4, |_, _| rng.gen_range(-1.0..1.0));
    let c0 = basis.gft_matrix(&y0).unwrap().row(0).into_owned();
    for alpha in [0.1, 0.5, 1.0] {
        for t in [0.1, 3.0, 50.0] {
            let y = solve_linear_spectral(&basis, &y0, alpha, t).unwrap();
            let c = basis.gft_matrix(&y).unwrap().row(0).into_owned();
            assert!((c - &c0).abs().max() < 1e-12);
        }
    }
}

#[test]
fn multipliers_non_increasing_in_frequency() {
    let cfg = MlEvalConfig::default();
    for seed in 0..4 {
        let (_, basis) = random_connected(18, seed);
        for alpha in [0.05, 0.3, 0.7, 1.0] {
            for t in [0.5, 5.0, 20.0] {
                let m = multipliers(&basis, alpha, t, &cfg).unwrap();
                assert!(m.windows(2).all(|w| w[1] <= w[0]), "alpha={alpha} t={t}");
                let s = skip_multipliers(&basis, alpha, t, 3, &cfg).unwrap();
                assert!(s.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }
}

#[test]
fn skips_equal_repeated_diffuse_and_add() {
    let (_, basis) = random_connected(10, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = DMatrix::from_fn(10, 2, |_, _| rng.gen_range(-1.0..1.0));
    let (alpha, tau, m) = (0.4, 2.5, 4);
    let mut y = x.clone();
    for _ in 0..m {
        y = solve_linear_spectral(&basis, &y, alpha, tau).unwrap() + &x;
    }
    let direct = solve_with_skips(&basis, &x, alpha, tau, m).unwrap();
    assert!(rel_err(&direct, &y) < 1e-13);
}
