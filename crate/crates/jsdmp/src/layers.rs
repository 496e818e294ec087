//! The per-edge computation at the heart of both models.
//!
//! For a directed edge (i, j) the raw weight is
//!
//! ```text
//! E_ij = exp(S_ij - gamma * D_ij)
//! ```
//!
//! where `S_ij` adds an attention score on the mapped features to an inner
//! product of latent positions, and `D_ij` blends a Jensen-Shannon divergence
//! over the feature rows with one over the positions. Raw weights are then
//! symmetrically normalized by the per-node weight sums.
//!
//! Everything here runs on the autodiff tape, so each quantity is trainable
//! end to end.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, EXP_CLAMP};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

/// How the Jensen-Shannon term treats its input rows.
///
/// `Normalized` (the default) pushes each row through a softmax first, which
/// keeps the divergence a true bounded JS divergence on distributions.
/// `Literal` feeds raw rows into the KL terms and forms the midpoint as
/// `softmax(F_i + F_j) / 2`; it requires non-negative inputs and is kept for
/// fidelity with the formula as printed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DivergenceMode {
    Normalized,
    Literal,
}

impl DivergenceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DivergenceMode::Normalized => "normalized",
            DivergenceMode::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(DivergenceMode::Normalized),
            "literal" => Ok(DivergenceMode::Literal),
            _ => Err(Error::Config(format!(
                "unknown divergence mode {s:?}, expected normalized or literal"
            ))),
        }
    }
}

/// Trainable state of one divergence-weighted layer.
///
/// `beta_raw` parameterizes the divergence mix through a sigmoid, keeping the
/// blend strictly inside (0, 1); `gamma` scales how strongly divergence
/// suppresses an edge.
#[derive(Clone, Debug)]
pub struct JsdmpLayerParams {
    /// Feature map, `d_in x d_out`.
    pub w_f: Matrix,
    /// Latent position map, `latent x latent`.
    pub w_x: Matrix,
    /// Attention vector on concatenated mapped features, `2*d_out x 1`.
    pub attn: Matrix,
    /// Pre-sigmoid divergence mix, `1 x 1`.
    pub beta_raw: Matrix,
    /// Divergence strength, `1 x 1`.
    pub gamma: Matrix,
}

impl JsdmpLayerParams {
    pub fn init(d_in: usize, d_out: usize, latent: usize, rng: &mut ChaCha8Rng) -> Self {
        JsdmpLayerParams {
            w_f: Matrix::glorot_uniform(d_in, d_out, rng),
            w_x: Matrix::glorot_uniform(latent, latent, rng),
            attn: Matrix::glorot_uniform(2 * d_out, 1, rng),
            beta_raw: Matrix::zeros(1, 1),
            gamma: Matrix::filled(1, 1, 1.0),
        }
    }
}

/// Tape-bound copies of [`JsdmpLayerParams`], in registration order.
#[derive(Clone)]
pub struct BoundLayerParams {
    pub w_f: Tensor,
    pub w_x: Tensor,
    pub attn: Tensor,
    pub beta_raw: Tensor,
    pub gamma: Tensor,
}

impl JsdmpLayerParams {
    pub fn bind(&self, tape: &Tape) -> BoundLayerParams {
        BoundLayerParams {
            w_f: tape.leaf(&self.w_f, true),
            w_x: tape.leaf(&self.w_x, true),
            attn: tape.leaf(&self.attn, true),
            beta_raw: tape.leaf(&self.beta_raw, true),
            gamma: tape.leaf(&self.gamma, true),
        }
    }
}

/// Raw and normalized per-edge weights, both `E x 1` in canonical edge order.
#[derive(Clone)]
pub struct EdgeWeights {
    pub values: Tensor,
    pub normalized: Tensor,
}

/// Map features and latent positions through their layer matrices.
pub fn map_features(
    f_in: &Tensor,
    x_in: &Tensor,
    w_f: &Tensor,
    w_x: &Tensor,
) -> Result<(Tensor, Tensor)> {
    Ok((f_in.matmul(w_f)?, x_in.matmul(w_x)?))
}

/// Attention part of the similarity: `a . concat(F_i, F_j)` per edge.
pub fn attention_similarity(f: &Tensor, g: &Graph, attn: &Tensor) -> Result<Tensor> {
    let d = f.cols();
    if attn.rows() != 2 * d || attn.cols() != 1 {
        return Err(Error::Dimension(format!(
            "attention vector is {}x{}, features have width {d}",
            attn.rows(),
            attn.cols()
        )));
    }
    let a_i = attn.slice_rows(0, d)?;
    let a_j = attn.slice_rows(d, d)?;
    let fi = f.gather_rows(g.src())?;
    let fj = f.gather_rows(g.dst())?;
    fi.matmul(&a_i)?.add(&fj.matmul(&a_j)?)
}

/// Positional part of the similarity: `<X_i, X_j>` per edge.
pub fn position_similarity(x: &Tensor, g: &Graph) -> Result<Tensor> {
    let xi = x.gather_rows(g.src())?;
    let xj = x.gather_rows(g.dst())?;
    Ok(xi.hadamard(&xj)?.row_sum())
}

/// Full similarity `S_ij = a . concat(F_i, F_j) + <X_i, X_j>`.
pub fn similarity(f: &Tensor, x: &Tensor, g: &Graph, attn: &Tensor) -> Result<Tensor> {
    attention_similarity(f, g, attn)?.add(&position_similarity(x, g)?)
}

/// Per-edge Jensen-Shannon divergence `E x 1` between the rows of `h` at each
/// edge's endpoints.
fn jensen_shannon_per_edge(h: &Tensor, g: &Graph, mode: DivergenceMode) -> Result<Tensor> {
    let (pi, pj, m) = match mode {
        DivergenceMode::Normalized => {
            let p = h.row_softmax();
            let pi = p.gather_rows(g.src())?;
            let pj = p.gather_rows(g.dst())?;
            let m = pi.add(&pj)?.scale(0.5);
            (pi, pj, m)
        }
        DivergenceMode::Literal => {
            if let Some(flat) = h.value().data().iter().position(|&v| v < 0.0) {
                let (r, c) = (flat / h.cols(), flat % h.cols());
                return Err(Error::Domain(format!(
                    "literal divergence needs non-negative rows, found a negative \
                     entry at ({r}, {c}); use the normalized mode for signed inputs"
                )));
            }
            let fi = h.gather_rows(g.src())?;
            let fj = h.gather_rows(g.dst())?;
            let m = fi.add(&fj)?.row_softmax().scale(0.5);
            (fi, fj, m)
        }
    };
    let lm = m.log()?;
    let ti = pi.hadamard(&pi.log()?.sub(&lm)?)?;
    let tj = pj.hadamard(&pj.log()?.sub(&lm)?)?;
    Ok(ti.add(&tj)?.row_sum().scale(0.5))
}

/// Divergence between feature rows (the context side).
pub fn contextual_divergence(f: &Tensor, g: &Graph, mode: DivergenceMode) -> Result<Tensor> {
    jensen_shannon_per_edge(f, g, mode)
}

/// Divergence between latent position rows (the structure side).
pub fn structural_divergence(x: &Tensor, g: &Graph, mode: DivergenceMode) -> Result<Tensor> {
    jensen_shannon_per_edge(x, g, mode)
}

/// Blend of the two divergences: `beta * D_ctx + (1 - beta) * D_str`.
/// `beta` is a 1x1 tensor and must lie strictly inside (0, 1).
pub fn combined_divergence(d_ctx: &Tensor, d_str: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let b = beta.scalar()?;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Config(format!(
            "divergence mix beta must lie in (0, 1), got {b}"
        )));
    }
    let one_minus = beta.scale(-1.0).add_scalar(1.0);
    d_ctx.scale_by(beta)?.add(&d_str.scale_by(&one_minus)?)
}

/// Raw edge weights `exp(S - gamma * D)`, with the exponent clamped to
/// `±EXP_CLAMP` so extreme scores saturate instead of overflowing.
pub fn edge_weights(s: &Tensor, d: &Tensor, gamma: &Tensor) -> Result<Tensor> {
    let exponent = s.sub(&d.scale_by(gamma)?)?;
    if let Some(e) = exponent.first_nan() {
        return Err(Error::Domain(format!(
            "edge weight exponent is NaN at edge {e}"
        )));
    }
    Ok(exponent.clamp(-EXP_CLAMP, EXP_CLAMP).exp())
}

/// Symmetric normalization: each weight is divided by the geometric mean of
/// its endpoints' total incident weight. With all weights equal to one this
/// reduces to the usual `D^{-1/2} A D^{-1/2}` of the self-looped graph.
pub fn sym_normalize(e: &Tensor, g: &Graph) -> Result<Tensor> {
    if e.rows() != g.num_directed_edges() || e.cols() != 1 {
        return Err(Error::Dimension(format!(
            "edge weights are {}x{}, graph has {} directed edges",
            e.rows(),
            e.cols(),
            g.num_directed_edges()
        )));
    }
    let sums = e.scatter_sum_rows(g.src(), g.num_nodes())?;
    let inv = sums.rsqrt()?;
    let di = inv.gather_rows(g.src())?;
    let dj = inv.gather_rows(g.dst())?;
    e.hadamard(&di)?.hadamard(&dj)
}

/// One message-passing sweep: `out_i = sum_{j in N(i)} phi_ij * f_j`.
pub fn aggregate(phi: &Tensor, f: &Tensor, g: &Graph) -> Result<Tensor> {
    if phi.rows() != g.num_directed_edges() || phi.cols() != 1 {
        return Err(Error::Dimension(format!(
            "normalized weights are {}x{}, graph has {} directed edges",
            phi.rows(),
            phi.cols(),
            g.num_directed_edges()
        )));
    }
    if f.rows() != g.num_nodes() {
        return Err(Error::Dimension(format!(
            "feature rows {} do not match {} nodes",
            f.rows(),
            g.num_nodes()
        )));
    }
    let msgs = f.gather_rows(g.dst())?.scale_rows(phi)?;
    msgs.scatter_sum_rows(g.src(), g.num_nodes())
}
