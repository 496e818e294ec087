//! Sparse undirected graphs with mandatory self-loops.
//!
//! Construction symmetrizes and deduplicates the raw edge list, then adds
//! exactly one self-loop per node. Edges are kept twice, once per direction,
//! sorted by `(src, dst)`; that fixed order is what makes every downstream
//! scatter-add deterministic.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    csr_offsets: Vec<usize>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Build from raw `(u, v)` pairs. Input may contain duplicates, both
    /// orientations, and self-loops; the result is canonical either way.
    pub fn build(n: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (pos, &(u, v)) in raw_edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::Index(format!(
                    "edge {pos} = ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            set.insert((u, v));
            set.insert((v, u));
        }
        for i in 0..n {
            set.insert((i, i));
        }
        let mut src = Vec::with_capacity(set.len());
        let mut dst = Vec::with_capacity(set.len());
        for (u, v) in set {
            src.push(u);
            dst.push(v);
        }
        let mut csr_offsets = vec![0usize; n + 1];
        for &u in &src {
            csr_offsets[u + 1] += 1;
        }
        for i in 0..n {
            csr_offsets[i + 1] += csr_offsets[i];
        }
        let degrees = (0..n)
            .map(|i| csr_offsets[i + 1] - csr_offsets[i])
            .collect();
        Ok(Graph {
            n,
            src,
            dst,
            csr_offsets,
            degrees,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Number of stored directed edges, self-loops included.
    pub fn num_directed_edges(&self) -> usize {
        self.src.len()
    }

    /// Unique undirected edges, self-loops excluded.
    pub fn num_undirected_edges(&self) -> usize {
        (self.src.len() - self.n) / 2
    }

    /// Source endpoint per directed edge, in canonical order.
    pub fn src(&self) -> &[usize] {
        &self.src
    }

    /// Destination endpoint per directed edge, in canonical order.
    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    /// Neighbor count including the node itself.
    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Neighbors of `i` (self included), ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.dst[self.csr_offsets[i]..self.csr_offsets[i + 1]]
    }

    /// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}` of the
    /// self-looped graph, one triplet per stored directed edge.
    pub fn normalized_laplacian(&self) -> SparseMatrix {
        let triplets = self
            .src
            .iter()
            .zip(&self.dst)
            .map(|(&i, &j)| {
                let w = if i == j {
                    1.0 - 1.0 / self.degrees[i] as f64
                } else {
                    -1.0 / ((self.degrees[i] * self.degrees[j]) as f64).sqrt()
                };
                (i, j, w)
            })
            .collect();
        SparseMatrix {
            n: self.n,
            triplets,
        }
    }

    /// Fraction of non-loop directed edges whose endpoints share a label.
    pub fn edge_homophily(&self, labels: &[usize]) -> f64 {
        let mut same = 0usize;
        let mut total = 0usize;
        for (&u, &v) in self.src.iter().zip(&self.dst) {
            if u == v {
                continue;
            }
            total += 1;
            if labels[u] == labels[v] {
                same += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            same as f64 / total as f64
        }
    }
}
