use std::fs;

use fracgcl::graph::{eigendecompose, normalized_laplacian, Graph};
use fracgcl::io::{
    load_dataset, load_matrix_csv, matrix_from_bytes, matrix_to_bytes, save_dataset, synth_cycle, synth_grid,
    synth_path, synth_sbm, SynthSpec,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn modularity(g: &Graph, labels: &[i64]) -> f64 {
    let a = g.adjacency();
    let k = g.degrees();
    let two_m: f64 = k.sum();
    let mut q = 0.0;
    for i in 0..g.n_nodes() {
        for j in 0..g.n_nodes() {
            if labels[i] == labels[j] {
                q += a[(i, j)] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

#[test]
fn square_grid_is_a_four_cycle() {
    let ev = |g: &Graph| eigendecompose(&normalized_laplacian(g)).unwrap().eigenvalues().to_vec();
    let (a, b) = (ev(&synth_grid(2, 2).unwrap()), ev(&synth_cycle(4).unwrap()));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    let g = synth_grid(2, 2).unwrap();
    assert_eq!(g.n_edges(), 4);
    assert!(g.degrees().iter().all(|&d| d == 2.0));
}

#[test]
fn path_spectrum_matches_closed_form() {
    let n = 7;
    let ev = eigendecompose(&normalized_laplacian(&synth_path(n).unwrap())).unwrap();
    for (k, l) in ev.eigenvalues().iter().enumerate() {
        let expect = 1.0 - (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        assert!((l - expect).abs() < 1e-12, "{k}: {l} vs {expect}");
    }
}

#[test]
fn block_structure_drives_modularity() {
    let flat = synth_sbm(&SynthSpec { n: 300, p_in: 0.05, p_out: 0.05, ..SynthSpec::fixture(31) }).unwrap();
    assert!(modularity(&flat.graph, &flat.labels).abs() < 0.05);
    let blocks = synth_sbm(&SynthSpec { n: 300, ..SynthSpec::fixture(31) }).unwrap();
    assert!(modularity(&blocks.graph, &blocks.labels) > 0.4);
}

#[test]
fn corrupted_matrix_bytes_never_load_wrong_shape() {
    let m = DMatrix::from_fn(5, 3, |i, j| i as f64 - 0.5 * j as f64);
    let good = matrix_to_bytes(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..2000 {
        let mut b = good.clone();
        match rng.gen_range(0..3) {
            0 => {
                let i = rng.gen_range(0..b.len());
                b[i] ^= 1 << rng.gen_range(0..8);
            }
            1 => b.truncate(rng.gen_range(0..b.len())),
            _ => b.extend((0..rng.gen_range(1..16)).map(|_| rng.gen::<u8>())),
        }
        if let Ok(x) = matrix_from_bytes(&b) {
            assert_eq!(x.len() * 8 + 24, b.len());
        }
    }
}

#[test]
fn empty_matrix_roundtrips() {
    let m = DMatrix::<f64>::zeros(0, 0);
    let b = matrix_to_bytes(&m);
    assert_eq!(b.len(), 24);
    assert_eq!(matrix_from_bytes(&b).unwrap().shape(), (0, 0));
    let wide = DMatrix::<f64>::zeros(0, 4);
    assert_eq!(matrix_from_bytes(&matrix_to_bytes(&wide)).unwrap().shape(), (0, 4));
}

#[test]
fn csv_rejects_nan_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    fs::write(&p, "x0,x1\n1.0,2.0\n3.0,NaN\n").unwrap();
    let msg = load_matrix_csv(&p).unwrap_err().to_string();
    assert!(msg.contains('3') && msg.contains("column 1"), "{msg}");
}

#[test]
fn dataset_roundtrip_and_corrupt_files() {
    let ds = synth_sbm(&SynthSpec { n: 42, ..SynthSpec::fixture(33) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = save_dataset(dir.path(), &ds).unwrap();
    let back = load_dataset(&paths.edges, &paths.features, &paths.labels, &paths.splits).unwrap();
    assert_eq!(back.graph.n_edges(), ds.graph.n_edges());
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.splits, ds.splits);
    assert!((back.features - &ds.features).abs().max() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let originals: Vec<_> = [&paths.edges, &paths.features, &paths.labels, &paths.splits]
        .iter()
        .map(|p| (p.to_path_buf(), fs::read(p).unwrap()))
        .collect();
    for _ in 0..200 {
        let (path, bytes) = &originals[rng.gen_range(0..originals.len())];
        let mut b = bytes.clone();
        for _ in 0..rng.gen_range(1..4) {
            let i = rng.gen_range(0..b.len());
            b[i] = rng.gen();
        }
        fs::write(path, &b).unwrap();
        if let Ok(d) = load_dataset(&paths.edges, &paths.features, &paths.labels, &paths.splits) {
            assert_eq!(d.features.nrows(), d.n_nodes());
            assert_eq!(d.labels.len(), d.n_nodes());
            assert!(d.features.iter().all(|v| v.is_finite()));
            d.splits.validate(d.n_nodes()).unwrap();
        }
        fs::write(path, bytes).unwrap();
    }
}
