//! Spectral-domain oracles: the Chebyshev filter must agree with explicit
//! eigendecomposition, and the Laplacian spectra must sit where theory says.

mod common;

use common::jacobi_eigh;
use gcns_core::cheb::{cheb_basis, cheb_conv_forward, ChebConvParams, GraphOperator};
use gcns_core::data::make_synthetic;
use gcns_core::graph::{build_graph, estimate_lambda_max};
use ndarray::{Array2, Array3};

fn fixture_graph(n_channels: usize) -> gcns_core::graph::CorrelationGraph {
    let dataset = make_synthetic(n_channels, 40, 3, 17, 1.5).unwrap();
    build_graph(&dataset).unwrap()
}

#[test]
fn eigensolver_sanity() {
    // Known spectrum: [[2,1],[1,2]] has eigenvalues 1 and 3.
    let m = ndarray::array![[2.0, 1.0], [1.0, 2.0]];
    let (vals, vecs) = jacobi_eigh(&m);
    assert!((vals[0] - 1.0).abs() < 1e-12);
    assert!((vals[1] - 3.0).abs() < 1e-12);
    // Reconstruction: V diag(vals) V^T = M.
    let mut recon = Array2::<f64>::zeros((2, 2));
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                recon[[i, j]] += vals[k] * vecs[[i, k]] * vecs[[j, k]];
            }
        }
    }
    for (a, b) in recon.iter().zip(m.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn normalized_laplacian_spectrum_in_unit_band() {
    for n in [6, 8, 10] {
        let graph = fixture_graph(n);
        let lap = gcns_core::graph::laplacians(&graph.adjacency, &graph.degrees);
        let (vals, _) = jacobi_eigh(&lap.normalized);
        for v in &vals {
            assert!(*v >= -1e-9 && *v <= 2.0 + 1e-9, "eigenvalue {v} outside [0,2]");
        }
        // The scaled operator lives in [-1, 1].
        let (svals, _) = jacobi_eigh(&lap.scaled);
        for v in &svals {
            assert!(v.abs() <= 1.0 + 1e-6, "scaled eigenvalue {v} outside [-1,1]");
        }
    }
}

#[test]
fn lambda_max_matches_dense_oracle() {
    for n in [5, 8, 10] {
        let graph = fixture_graph(n);
        let lap = gcns_core::graph::laplacians(&graph.adjacency, &graph.degrees);
        let (vals, _) = jacobi_eigh(&lap.normalized);
        let top = *vals.last().unwrap();
        let estimated = estimate_lambda_max(&lap.normalized);
        assert!(
            ((estimated - top) / top).abs() < 1e-5,
            "n={n}: power iteration {estimated} vs oracle {top}"
        );
    }
}

#[test]
fn chebyshev_filter_matches_eigendecomposition() {
    // y[:, fo] = sum_fi U diag(sum_k theta[fi,fo,k] T_k(lambda)) U^T x[:, fi]
    // computed entirely in the spectral domain, against the recursion.
    let graph = fixture_graph(9);
    let lap = gcns_core::graph::laplacians(&graph.adjacency, &graph.degrees);
    let (vals, vecs) = jacobi_eigh(&lap.scaled);
    let n = 9;
    let (f_in, f_out, order) = (2, 3, 4);

    let mut state = 0x1234_5678_u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let theta = Array3::from_shape_fn((f_in, f_out, order), |_| next());
    let x = Array2::from_shape_fn((n, f_in), |_| next());

    // Spectral-domain oracle.
    let mut expected = Array2::<f64>::zeros((n, f_out));
    // T_k(lambda) per eigenvalue by the scalar recursion.
    let mut t = vec![vec![0.0; order]; n];
    for (i, &l) in vals.iter().enumerate() {
        t[i][0] = 1.0;
        if order > 1 {
            t[i][1] = l;
        }
        for k in 2..order {
            t[i][k] = 2.0 * l * t[i][k - 1] - t[i][k - 2];
        }
    }
    for fo in 0..f_out {
        for fi in 0..f_in {
            // xhat = U^T x[:, fi]
            let mut xhat = vec![0.0; n];
            for e in 0..n {
                for row in 0..n {
                    xhat[e] += vecs[[row, e]] * x[[row, fi]];
                }
            }
            for e in 0..n {
                let gain: f64 = (0..order).map(|k| theta[[fi, fo, k]] * t[e][k]).sum();
                let coef = gain * xhat[e];
                for row in 0..n {
                    expected[[row, fo]] += vecs[[row, e]] * coef;
                }
            }
        }
    }

    let op = GraphOperator::from_matrix(&lap.scaled);
    let params = ChebConvParams {
        order,
        theta,
        bias: Array2::zeros((n, f_out)),
    };
    let actual = cheb_conv_forward(&params, &cheb_basis(&op, &x, order).unwrap()).unwrap();
    for (a, b) in actual.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-10, "recursion {a} vs spectral {b}");
    }
}
