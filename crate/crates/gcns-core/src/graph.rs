//! Electrode graph construction from signal correlations: Pearson matrix,
//! adjacency |P| - I, degrees, combinatorial and normalized Laplacians, and
//! the scaled Laplacian consumed by the Chebyshev filters.

use ndarray::Array2;

use crate::data::SignalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CorrelationGraph {
    pub n_nodes: usize,
    pub pcc: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub degrees: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LaplacianSet {
    pub combinatorial: Array2<f64>,
    pub normalized: Array2<f64>,
    pub lambda_max: f64,
    pub scaled: Array2<f64>,
}

/// Pearson correlation between every pair of channels, computed over all
/// samples. Constant channels (zero variance) get a zero row/column with
/// diagonal 1.
pub fn pcc_matrix(dataset: &SignalDataset) -> Result<Array2<f64>> {
    let n = dataset.n_channels;
    let m = dataset.n_samples;
    if m < 2 {
        return Err(Error::InvalidDataset(
            "correlation needs at least 2 samples".into(),
        ));
    }
    let mut means = vec![0.0; n];
    for row in dataset.values.outer_iter() {
        for (c, &v) in row.iter().enumerate() {
            means[c] += v;
        }
    }
    for mu in means.iter_mut() {
        *mu /= m as f64;
    }
    // cov[i][j] accumulated in one pass over centered values
    let mut cov = Array2::<f64>::zeros((n, n));
    for row in dataset.values.outer_iter() {
        let centered: Vec<f64> = row.iter().zip(&means).map(|(&v, &mu)| v - mu).collect();
        for i in 0..n {
            for j in i..n {
                cov[[i, j]] += centered[i] * centered[j];
            }
        }
    }
    let sd: Vec<f64> = (0..n).map(|i| cov[[i, i]].sqrt()).collect();
    let mut pcc = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        pcc[[i, i]] = 1.0;
        for j in i + 1..n {
            let denom = sd[i] * sd[j];
            let r = if denom > 0.0 {
                (cov[[i, j]] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            pcc[[i, j]] = r;
            pcc[[j, i]] = r;
        }
    }
    Ok(pcc)
}

/// Full graph: adjacency = |pcc| - I clamped at 0, degrees = row sums.
pub fn build_graph(dataset: &SignalDataset) -> Result<CorrelationGraph> {
    let pcc = pcc_matrix(dataset)?;
    let n = dataset.n_channels;
    let mut adjacency = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                adjacency[[i, j]] = pcc[[i, j]].abs();
            }
        }
    }
    let degrees = row_sums(&adjacency);
    Ok(CorrelationGraph {
        n_nodes: n,
        pcc,
        adjacency,
        degrees,
    })
}

pub fn row_sums(adjacency: &Array2<f64>) -> Vec<f64> {
    adjacency.outer_iter().map(|row| row.sum()).collect()
}

/// Combinatorial L = D - A and normalized L = I - D^{-1/2} A D^{-1/2}.
/// Degree-0 nodes keep an identity row in the normalized form. The scaled
/// Laplacian 2L/lambda_max - I is built from the normalized one; an edgeless
/// graph uses the theoretical normalized-spectrum bound 2.0 for lambda_max.
pub fn laplacians(adjacency: &Array2<f64>, degrees: &[f64]) -> LaplacianSet {
    let n = degrees.len();
    let mut combinatorial = -adjacency.clone();
    for i in 0..n {
        combinatorial[[i, i]] += degrees[i];
    }
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut normalized = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        normalized[[i, i]] = 1.0;
        for j in 0..n {
            if i != j {
                normalized[[i, j]] = -adjacency[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    let has_edges = degrees.iter().any(|&d| d > 0.0);
    let lambda_max = if has_edges {
        estimate_lambda_max(&normalized)
    } else {
        2.0
    };
    let mut scaled = normalized.mapv(|v| 2.0 * v / lambda_max);
    for i in 0..n {
        scaled[[i, i]] -= 1.0;
    }
    LaplacianSet {
        combinatorial,
        normalized,
        lambda_max,
        scaled,
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
/// Rayleigh-quotient estimate: relative-change tolerance 1e-9, at most 1000
/// iterations, with fallback 2.0 (the normalized-Laplacian bound) when
/// degenerate or non-convergent.
pub fn estimate_lambda_max(matrix: &Array2<f64>) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 2.0;
    }
    // Deterministic non-degenerate start vector.
    let mut v: Vec<f64> = (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    if nv == 0.0 {
        return 2.0;
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut prev = 0.0_f64;
    for _ in 0..1000 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += matrix[[i, j]] * v[j];
            }
            w[i] = acc;
        }
        // Rayleigh quotient v'Lv (v is unit length), accurate to the square
        // of the eigenvector error for symmetric input.
        let lambda: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let wn = norm(&w);
        if wn < 1e-12 || lambda < 1e-12 {
            return 2.0;
        }
        for x in w.iter_mut() {
            *x /= wn;
        }
        let converged = (lambda - prev).abs() <= 1e-9 * lambda.max(1e-12);
        v = w;
        prev = lambda;
        if converged {
            return lambda;
        }
    }
    if prev > 1e-12 {
        prev
    } else {
        2.0
    }
}
