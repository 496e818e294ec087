//! Dense brute-force references shared by the integration suites.
//!
//! Everything here works on explicit `n x n` matrices with plain loops so the
//! sparse edge-list implementations in the library have an independent oracle
//! to agree with.

use jsdmp::graph::Graph;
use jsdmp::matrix::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense 0/1 adjacency of the self-looped, symmetrized graph.
pub fn dense_adjacency(g: &Graph) -> Matrix {
    let n = g.num_nodes();
    let mut a = Matrix::zeros(n, n);
    for (&u, &v) in g.src().iter().zip(g.dst()) {
        a.set(u, v, 1.0);
    }
    a
}

/// Dense `D^{-1/2} A D^{-1/2}` of the self-looped graph.
pub fn dense_gcn_matrix(g: &Graph) -> Matrix {
    let n = g.num_nodes();
    let a = dense_adjacency(g);
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = (g.degree(i) as f64 * g.degree(j) as f64).sqrt();
            out.set(i, j, a.at(i, j) / d);
        }
    }
    out
}

/// Scatter a per-edge column (canonical edge order) into a dense matrix.
pub fn dense_from_edge_values(g: &Graph, vals: &[f64]) -> Matrix {
    assert_eq!(vals.len(), g.num_directed_edges());
    let mut out = Matrix::zeros(g.num_nodes(), g.num_nodes());
    for (e, (&u, &v)) in g.src().iter().zip(g.dst()).enumerate() {
        out.set(u, v, vals[e]);
    }
    out
}

/// Symmetric normalization of a dense weighted adjacency: each entry divided
/// by the geometric mean of its endpoints' row sums.
pub fn dense_sym_normalize(w: &Matrix) -> Matrix {
    let n = w.rows();
    let sums: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, w.at(i, j) / (sums[i] * sums[j]).sqrt());
        }
    }
    out
}

/// Dense two-layer graph convolution reference: propagate with the fixed
/// `D^{-1/2} A D^{-1/2}` matrix, ReLU between layers, identity at the output.
pub fn dense_gcn_forward(g: &Graph, x: &Matrix, w0: &Matrix, w1: &Matrix) -> Matrix {
    let a_hat = dense_gcn_matrix(g);
    let h = a_hat.matmul(&x.matmul(w0).unwrap()).unwrap();
    let h = h.map(|v| v.max(0.0));
    a_hat.matmul(&h.matmul(w1).unwrap()).unwrap()
}

/// Softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / z).collect()
}

/// Jensen-Shannon divergence between two distributions, direct formula with
/// the `0 ln 0 = 0` convention.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(&ai, _)| ai > 0.0)
            .map(|(&ai, &mi)| ai * (ai / mi).ln())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(&a, &b)| 0.5 * (a + b)).collect();
    0.5 * (kl(p, &m) + kl(q, &m))
}

/// Connected random graph: a ring through all nodes plus random chords.
pub fn random_graph(n: usize, chords: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..chords {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push((u, v));
        }
    }
    Graph::build(n, &edges).unwrap()
}

/// Random matrix with entries uniform in `(-1, 1)`.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}
