//! The two architectures built on divergence-weighted edges.
//!
//! `DMPGCN` recomputes edge weights inside every convolution layer from that
//! layer's mapped features. `DMPPRG` runs a small MLP first, computes edge
//! weights once from the MLP output, then propagates it repeatedly and takes
//! a learned combination of all propagation depths.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{
    aggregate, attention_similarity, combined_divergence, contextual_divergence, edge_weights,
    position_similarity, structural_divergence, sym_normalize, BoundLayerParams, DivergenceMode,
    EdgeWeights, JsdmpLayerParams,
};
use crate::matrix::Matrix;

/// Which parts of the edge-weight computation are active.
///
/// `None` is the plain-GCN degenerate mode: every edge weight is 1 and the
/// divergence machinery (and its regularizer) is switched off entirely.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    ContextOnly,
    StructureOnly,
    None,
}

impl Ablation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::ContextOnly => "context_only",
            Ablation::StructureOnly => "structure_only",
            Ablation::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "context_only" => Ok(Ablation::ContextOnly),
            "structure_only" => Ok(Ablation::StructureOnly),
            "none" => Ok(Ablation::None),
            _ => Err(Error::Config(format!(
                "unknown ablation {s:?}, expected full, context_only, structure_only or none"
            ))),
        }
    }

    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::ContextOnly,
        Ablation::StructureOnly,
        Ablation::None,
    ];
}

/// Random one-hot latent positions: each node starts on a coordinate axis.
pub fn init_latent_positions(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if classes == 0 {
        return Err(Error::Config(
            "latent positions need at least one class".into(),
        ));
    }
    let mut x = Matrix::zeros(n, classes);
    for i in 0..n {
        let hot = rng.random_range(0..classes);
        x.set(i, hot, 1.0);
    }
    Ok(x)
}

/// Everything the training loop needs from one recorded forward pass.
pub struct ForwardPass {
    /// Raw class scores, `n x classes`.
    pub logits: Tensor,
    /// Tape-bound parameter leaves, in [`Model::params`] order.
    pub bound: Vec<Tensor>,
    /// The bound latent positions (also present in `bound`).
    pub x_base: Tensor,
}

/// Edge weights and their normalization for one layer, honoring the ablation.
fn edge_phi(
    bl: &BoundLayerParams,
    f_mapped: &Tensor,
    x_base: &Tensor,
    g: &Graph,
    ablation: Ablation,
    mode: DivergenceMode,
) -> Result<EdgeWeights> {
    let e = match ablation {
        Ablation::None => f_mapped
            .tape()
            .constant(&Matrix::filled(g.num_directed_edges(), 1, 1.0)),
        Ablation::Full => {
            let x_mapped = x_base.matmul(&bl.w_x)?;
            let s = attention_similarity(f_mapped, g, &bl.attn)?
                .add(&position_similarity(&x_mapped, g)?)?;
            let d_ctx = contextual_divergence(f_mapped, g, mode)?;
            let d_str = structural_divergence(&x_mapped, g, mode)?;
            let beta = bl.beta_raw.sigmoid();
            let d = combined_divergence(&d_ctx, &d_str, &beta)?;
            edge_weights(&s, &d, &bl.gamma)?
        }
        Ablation::ContextOnly => {
            let s = attention_similarity(f_mapped, g, &bl.attn)?;
            let d = contextual_divergence(f_mapped, g, mode)?;
            edge_weights(&s, &d, &bl.gamma)?
        }
        Ablation::StructureOnly => {
            let x_mapped = x_base.matmul(&bl.w_x)?;
            let s = position_similarity(&x_mapped, g)?;
            let d = structural_divergence(&x_mapped, g, mode)?;
            edge_weights(&s, &d, &bl.gamma)?
        }
    };
    let phi = sym_normalize(&e, g)?;
    Ok(EdgeWeights {
        values: e,
        normalized: phi,
    })
}

/// Divergence-weighted graph convolution stack.
#[derive(Clone, Debug)]
pub struct DmpGcnModel {
    pub layers: Vec<JsdmpLayerParams>,
    /// Learned latent positions, `n x classes`.
    pub x_base: Matrix,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub ablation: Ablation,
    pub divergence_mode: DivergenceMode,
}

impl DmpGcnModel {
    /// Two convolution layers, hidden width `hidden_dim`, latent positions
    /// initialized one-hot.
    pub fn new(
        n: usize,
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        ablation: Ablation,
        divergence_mode: DivergenceMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_classes == 0 || input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive, got input {input_dim}, \
                 hidden {hidden_dim}, classes {num_classes}"
            )));
        }
        Ok(DmpGcnModel {
            layers: vec![
                JsdmpLayerParams::init(input_dim, hidden_dim, num_classes, rng),
                JsdmpLayerParams::init(hidden_dim, num_classes, num_classes, rng),
            ],
            x_base: init_latent_positions(n, num_classes, rng)?,
            input_dim,
            hidden_dim,
            num_classes,
            dropout: 0.75,
            ablation,
            divergence_mode,
        })
    }

    fn forward(
        &self,
        tape: &Tape,
        features: &Matrix,
        graph: &Graph,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        check_inputs(features, graph, self.x_base.rows(), self.input_dim)?;
        let bound: Vec<Tensor> = self
            .param_entries()
            .iter()
            .map(|(_, m)| tape.leaf(m, true))
            .collect();
        let x_base = bound.last().expect("x_base bound").clone();
        let mut h = tape.constant(features);
        let layer_count = self.layers.len();
        for k in 0..layer_count {
            let bl = BoundLayerParams {
                w_f: bound[5 * k].clone(),
                w_x: bound[5 * k + 1].clone(),
                attn: bound[5 * k + 2].clone(),
                beta_raw: bound[5 * k + 3].clone(),
                gamma: bound[5 * k + 4].clone(),
            };
            h = h.dropout(self.dropout, training, rng)?;
            let f_mapped = h.matmul(&bl.w_f)?;
            let phi = edge_phi(
                &bl,
                &f_mapped,
                &x_base,
                graph,
                self.ablation,
                self.divergence_mode,
            )?;
            h = aggregate(&phi.normalized, &f_mapped, graph)?;
            if k + 1 < layer_count {
                h = h.relu();
            }
        }
        Ok(ForwardPass {
            logits: h,
            bound,
            x_base,
        })
    }

    fn param_entries(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.w_f"), &l.w_f));
            out.push((format!("layer{k}.w_x"), &l.w_x));
            out.push((format!("layer{k}.attn"), &l.attn));
            out.push((format!("layer{k}.beta_raw"), &l.beta_raw));
            out.push((format!("layer{k}.gamma"), &l.gamma));
        }
        out.push(("x_base".into(), &self.x_base));
        out
    }

    fn param_entries_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{k}.w_f"), &mut l.w_f));
            out.push((format!("layer{k}.w_x"), &mut l.w_x));
            out.push((format!("layer{k}.attn"), &mut l.attn));
            out.push((format!("layer{k}.beta_raw"), &mut l.beta_raw));
            out.push((format!("layer{k}.gamma"), &mut l.gamma));
        }
        out.push(("x_base".into(), &mut self.x_base));
        out
    }

    fn is_trainable(&self, name: &str) -> bool {
        match self.ablation {
            Ablation::Full => true,
            Ablation::ContextOnly => !name.ends_with(".w_x") && !name.ends_with(".beta_raw"),
            Ablation::StructureOnly => !name.ends_with(".attn") && !name.ends_with(".beta_raw"),
            Ablation::None => name.ends_with(".w_f"),
        }
    }
}

/// MLP followed by repeated propagation with depth-wise mixing weights.
#[derive(Clone, Debug)]
pub struct DmpPrgModel {
    pub mlp_w1: Matrix,
    pub mlp_w2: Matrix,
    /// Edge-weight parameters; `w_f` remaps the MLP output for scoring only.
    pub edge: JsdmpLayerParams,
    /// Mixing weights over propagation depths 0..=k, `(k+1) x 1`.
    pub lambda: Matrix,
    pub x_base: Matrix,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub k_steps: usize,
    pub dropout: f64,
    pub ablation: Ablation,
    pub divergence_mode: DivergenceMode,
}

/// Restart probability behind the default depth profile.
pub const PPR_ALPHA: f64 = 0.1;

/// Personalized-PageRank mixing profile `alpha (1-alpha)^k`, with the
/// remaining tail mass assigned to the deepest step so the weights sum to 1.
pub fn ppr_profile(k: usize, alpha: f64) -> Vec<f64> {
    let mut lambda: Vec<f64> = (0..=k)
        .map(|i| alpha * (1.0 - alpha).powi(i as i32))
        .collect();
    lambda[k] = (1.0 - alpha).powi(k as i32);
    lambda
}

impl DmpPrgModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        k_steps: usize,
        ablation: Ablation,
        divergence_mode: DivergenceMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_classes == 0 || input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive, got input {input_dim}, \
                 hidden {hidden_dim}, classes {num_classes}"
            )));
        }
        Ok(DmpPrgModel {
            mlp_w1: Matrix::glorot_uniform(input_dim, hidden_dim, rng),
            mlp_w2: Matrix::glorot_uniform(hidden_dim, num_classes, rng),
            edge: JsdmpLayerParams::init(num_classes, num_classes, num_classes, rng),
            lambda: Matrix::new(k_steps + 1, 1, ppr_profile(k_steps, PPR_ALPHA))
                .expect("profile length"),
            x_base: init_latent_positions(n, num_classes, rng)?,
            input_dim,
            hidden_dim,
            num_classes,
            k_steps,
            dropout: 0.5,
            ablation,
            divergence_mode,
        })
    }

    fn forward(
        &self,
        tape: &Tape,
        features: &Matrix,
        graph: &Graph,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        check_inputs(features, graph, self.x_base.rows(), self.input_dim)?;
        let bound: Vec<Tensor> = self
            .param_entries()
            .iter()
            .map(|(_, m)| tape.leaf(m, true))
            .collect();
        let (w1, w2) = (bound[0].clone(), bound[1].clone());
        let bl = BoundLayerParams {
            w_f: bound[2].clone(),
            w_x: bound[3].clone(),
            attn: bound[4].clone(),
            beta_raw: bound[5].clone(),
            gamma: bound[6].clone(),
        };
        let lambda = bound[7].clone();
        let x_base = bound[8].clone();

        let h = tape
            .constant(features)
            .dropout(self.dropout, training, rng)?;
        let h = h.matmul(&w1)?.relu();
        let h = h.dropout(self.dropout, training, rng)?;
        let f0 = h.matmul(&w2)?;

        let f_scored = f0.matmul(&bl.w_f)?;
        let phi = edge_phi(
            &bl,
            &f_scored,
            &x_base,
            graph,
            self.ablation,
            self.divergence_mode,
        )?;

        let mut acc = f0.scale_by(&lambda.slice_rows(0, 1)?)?;
        let mut fk = f0;
        for k in 1..=self.k_steps {
            fk = aggregate(&phi.normalized, &fk, graph)?;
            acc = acc.add(&fk.scale_by(&lambda.slice_rows(k, 1)?)?)?;
        }
        Ok(ForwardPass {
            logits: acc,
            bound,
            x_base,
        })
    }

    fn param_entries(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("mlp.w1".into(), &self.mlp_w1),
            ("mlp.w2".into(), &self.mlp_w2),
            ("edge.w_f".into(), &self.edge.w_f),
            ("edge.w_x".into(), &self.edge.w_x),
            ("edge.attn".into(), &self.edge.attn),
            ("edge.beta_raw".into(), &self.edge.beta_raw),
            ("edge.gamma".into(), &self.edge.gamma),
            ("lambda".into(), &self.lambda),
            ("x_base".into(), &self.x_base),
        ]
    }

    fn param_entries_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("mlp.w1".into(), &mut self.mlp_w1),
            ("mlp.w2".into(), &mut self.mlp_w2),
            ("edge.w_f".into(), &mut self.edge.w_f),
            ("edge.w_x".into(), &mut self.edge.w_x),
            ("edge.attn".into(), &mut self.edge.attn),
            ("edge.beta_raw".into(), &mut self.edge.beta_raw),
            ("edge.gamma".into(), &mut self.edge.gamma),
            ("lambda".into(), &mut self.lambda),
            ("x_base".into(), &mut self.x_base),
        ]
    }

    fn is_trainable(&self, name: &str) -> bool {
        match self.ablation {
            Ablation::Full => true,
            Ablation::ContextOnly => name != "edge.w_x" && name != "edge.beta_raw",
            // The feature remap only feeds attention and the contextual
            // divergence, both inactive here.
            Ablation::StructureOnly => {
                name != "edge.attn" && name != "edge.beta_raw" && name != "edge.w_f"
            }
            Ablation::None => matches!(name, "mlp.w1" | "mlp.w2" | "lambda"),
        }
    }
}

fn check_inputs(features: &Matrix, graph: &Graph, n: usize, input_dim: usize) -> Result<()> {
    if features.rows() != graph.num_nodes() {
        return Err(Error::Dimension(format!(
            "{} feature rows for a graph with {} nodes",
            features.rows(),
            graph.num_nodes()
        )));
    }
    if graph.num_nodes() != n {
        return Err(Error::Dimension(format!(
            "graph has {} nodes but the model was built for {n}",
            graph.num_nodes()
        )));
    }
    if features.cols() != input_dim {
        return Err(Error::Dimension(format!(
            "feature width {} does not match model input width {input_dim}",
            features.cols()
        )));
    }
    Ok(())
}

/// Either architecture behind one interface.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    DmpGcn(DmpGcnModel),
    DmpPrg(DmpPrgModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::DmpGcn(_) => "dmpgcn",
            Model::DmpPrg(_) => "dmpprg",
        }
    }

    pub fn ablation(&self) -> Ablation {
        match self {
            Model::DmpGcn(m) => m.ablation,
            Model::DmpPrg(m) => m.ablation,
        }
    }

    pub fn divergence_mode(&self) -> DivergenceMode {
        match self {
            Model::DmpGcn(m) => m.divergence_mode,
            Model::DmpPrg(m) => m.divergence_mode,
        }
    }

    /// True when the structural regularizer participates in the loss.
    pub fn has_regularizer(&self) -> bool {
        self.ablation() != Ablation::None
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Model::DmpGcn(m) => m.num_classes,
            Model::DmpPrg(m) => m.num_classes,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Model::DmpGcn(m) => m.hidden_dim,
            Model::DmpPrg(m) => m.hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::DmpGcn(m) => m.input_dim,
            Model::DmpPrg(m) => m.input_dim,
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            Model::DmpGcn(m) => m.x_base.rows(),
            Model::DmpPrg(m) => m.x_base.rows(),
        }
    }

    pub fn k_steps(&self) -> usize {
        match self {
            Model::DmpGcn(_) => 0,
            Model::DmpPrg(m) => m.k_steps,
        }
    }

    pub fn dropout(&self) -> f64 {
        match self {
            Model::DmpGcn(m) => m.dropout,
            Model::DmpPrg(m) => m.dropout,
        }
    }

    /// Named parameters in a fixed order, matching [`ForwardPass::bound`].
    pub fn params(&self) -> Vec<(String, &Matrix)> {
        match self {
            Model::DmpGcn(m) => m.param_entries(),
            Model::DmpPrg(m) => m.param_entries(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        match self {
            Model::DmpGcn(m) => m.param_entries_mut(),
            Model::DmpPrg(m) => m.param_entries_mut(),
        }
    }

    /// Whether the named parameter is updated under the current ablation.
    /// Parameters outside the active computation keep zero gradients and are
    /// skipped by the optimizer.
    pub fn is_trainable(&self, name: &str) -> bool {
        match self {
            Model::DmpGcn(m) => m.is_trainable(name),
            Model::DmpPrg(m) => m.is_trainable(name),
        }
    }

    /// Record one forward pass on `tape`. In training mode dropout draws
    /// from `rng`; in eval mode the pass is deterministic and `rng` is
    /// untouched.
    pub fn forward(
        &self,
        tape: &Tape,
        features: &Matrix,
        graph: &Graph,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        match self {
            Model::DmpGcn(m) => m.forward(tape, features, graph, training, rng),
            Model::DmpPrg(m) => m.forward(tape, features, graph, training, rng),
        }
    }

    /// Eval-mode class predictions.
    pub fn predict(&self, features: &Matrix, graph: &Graph) -> Result<Vec<usize>> {
        let tape = Tape::new();
        let mut rng = crate::rng::seeded_rng(0, crate::rng::Domain::Training);
        let pass = self.forward(&tape, features, graph, false, &mut rng)?;
        Ok(pass.logits.argmax_rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_rng, Domain};

    fn rng0() -> ChaCha8Rng {
        seeded_rng(0, Domain::ModelInit)
    }

    #[test]
    fn latent_positions_are_one_hot() {
        let x = init_latent_positions(50, 7, &mut rng0()).unwrap();
        for i in 0..50 {
            let row = x.row(i);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 6);
        }
    }

    #[test]
    fn ppr_profile_sums_to_one_with_tail_mass() {
        for k in [0usize, 1, 5, 10] {
            let p = ppr_profile(k, 0.1);
            assert_eq!(p.len(), k + 1);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "k={k}: sum {sum}");
        }
        assert_eq!(ppr_profile(0, 0.1), vec![1.0]);
    }

    #[test]
    fn single_self_loop_node_with_identity_map_passes_features_through() {
        // One isolated node, one layer, W_f = I, plain-GCN weights: the only
        // message is the self-message with weight 1.
        let g = Graph::build(1, &[]).unwrap();
        let mut rng = rng0();
        let layer = JsdmpLayerParams {
            w_f: Matrix::identity(3),
            w_x: Matrix::identity(3),
            attn: Matrix::zeros(6, 1),
            beta_raw: Matrix::zeros(1, 1),
            gamma: Matrix::filled(1, 1, 1.0),
        };
        let model = Model::DmpGcn(DmpGcnModel {
            layers: vec![layer],
            x_base: init_latent_positions(1, 3, &mut rng).unwrap(),
            input_dim: 3,
            hidden_dim: 3,
            num_classes: 3,
            dropout: 0.75,
            ablation: Ablation::None,
            divergence_mode: DivergenceMode::Normalized,
        });
        let feats = Matrix::from_rows(&[vec![0.4, -1.2, 2.5]]).unwrap();
        let tape = Tape::new();
        let pass = model.forward(&tape, &feats, &g, false, &mut rng).unwrap();
        assert_eq!(pass.logits.value(), feats);
    }

    #[test]
    fn forward_rejects_mismatched_feature_width() {
        let g = Graph::build(4, &[(0, 1), (2, 3)]).unwrap();
        let mut rng = rng0();
        let model = Model::DmpGcn(
            DmpGcnModel::new(
                4,
                8,
                5,
                3,
                Ablation::Full,
                DivergenceMode::Normalized,
                &mut rng,
            )
            .unwrap(),
        );
        let feats = Matrix::zeros(4, 9);
        let tape = Tape::new();
        assert!(model.forward(&tape, &feats, &g, false, &mut rng).is_err());
    }

    #[test]
    fn plain_gcn_mode_ignores_divergence_parameters() {
        // In the `none` ablation the loss must have exactly zero gradient
        // with respect to everything except the feature maps, and the output
        // must not depend on the latent positions at all.
        let g = Graph::build(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let mut rng = rng0();
        let mut gcn = DmpGcnModel::new(
            5,
            6,
            4,
            3,
            Ablation::None,
            DivergenceMode::Normalized,
            &mut rng,
        )
        .unwrap();
        let feats = Matrix::glorot_uniform(5, 6, &mut rng);

        let run = |m: &DmpGcnModel, rng: &mut ChaCha8Rng| {
            let tape = Tape::new();
            let model = Model::DmpGcn(m.clone());
            let pass = model.forward(&tape, &feats, &g, false, rng).unwrap();
            let loss = pass
                .logits
                .softmax_cross_entropy(&[0, 1, 2, 0, 1], &[true; 5])
                .unwrap();
            tape.backward(&loss).unwrap();
            let grads: Vec<Matrix> = pass.bound.iter().map(|t| t.grad()).collect();
            (pass.logits.value(), grads)
        };

        let (out1, grads) = run(&gcn, &mut rng);
        let model = Model::DmpGcn(gcn.clone());
        for ((name, _), grad) in model.params().iter().zip(&grads) {
            let zero = grad.data().iter().all(|&v| v == 0.0);
            if model.is_trainable(name) {
                assert!(!zero, "trainable {name} should receive gradient");
            } else {
                assert!(zero, "{name} should have exactly zero gradient");
            }
        }

        // Replace the latent positions entirely: identical output.
        gcn.x_base = Matrix::filled(5, 3, 0.123);
        let (out2, _) = run(&gcn, &mut rng);
        assert_eq!(out1, out2);
    }

    #[test]
    fn full_forward_is_permutation_equivariant() {
        let n = 6;
        let edges = [(0usize, 1usize), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)];
        let g = Graph::build(n, &edges).unwrap();
        let mut rng = rng0();
        let gcn = DmpGcnModel::new(
            n,
            5,
            4,
            3,
            Ablation::Full,
            DivergenceMode::Normalized,
            &mut rng,
        )
        .unwrap();
        let feats = Matrix::glorot_uniform(n, 5, &mut rng);

        let perm = [2usize, 4, 0, 5, 1, 3];
        let edges_p: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let gp = Graph::build(n, &edges_p).unwrap();
        let permute_rows = |m: &Matrix| {
            let mut out = Matrix::zeros(m.rows(), m.cols());
            for (i, &pi) in perm.iter().enumerate() {
                for c in 0..m.cols() {
                    out.set(pi, c, m.at(i, c));
                }
            }
            out
        };
        let mut gcn_p = gcn.clone();
        gcn_p.x_base = permute_rows(&gcn.x_base);

        let mut rng_fwd = seeded_rng(9, Domain::Training);
        let tape = Tape::new();
        let out = Model::DmpGcn(gcn)
            .forward(&tape, &feats, &g, false, &mut rng_fwd)
            .unwrap()
            .logits
            .value();
        let tape2 = Tape::new();
        let out_p = Model::DmpGcn(gcn_p)
            .forward(&tape2, &permute_rows(&feats), &gp, false, &mut rng_fwd)
            .unwrap()
            .logits
            .value();
        assert!(permute_rows(&out).max_abs_diff(&out_p) < 1e-10);
    }

    #[test]
    fn prg_with_k_zero_is_the_bare_mlp() {
        let g = Graph::build(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut rng = rng0();
        let prg = DmpPrgModel::new(
            4,
            5,
            8,
            3,
            0,
            Ablation::Full,
            DivergenceMode::Normalized,
            &mut rng,
        )
        .unwrap();
        let feats = Matrix::glorot_uniform(4, 5, &mut rng);
        let tape = Tape::new();
        let out = Model::DmpPrg(prg.clone())
            .forward(&tape, &feats, &g, false, &mut rng)
            .unwrap()
            .logits
            .value();
        let want = feats
            .matmul(&prg.mlp_w1)
            .unwrap()
            .map(|v| v.max(0.0))
            .matmul(&prg.mlp_w2)
            .unwrap();
        assert!(out.max_abs_diff(&want) < 1e-12);
    }

    /// Dense propagation oracle: `sum_k lambda_k A_hat^k H` where `A_hat` is
    /// the symmetric-normalized self-looped adjacency.
    fn dense_depth_mix(g: &Graph, h: &Matrix, lambda: &[f64]) -> Matrix {
        let n = g.num_nodes();
        let mut a_hat = Matrix::zeros(n, n);
        for e in 0..g.num_directed_edges() {
            let (u, v) = (g.src()[e], g.dst()[e]);
            a_hat.set(u, v, 1.0 / ((g.degree(u) * g.degree(v)) as f64).sqrt());
        }
        let mut acc = h.scale(lambda[0]);
        let mut fk = h.clone();
        for &l in &lambda[1..] {
            fk = a_hat.matmul(&fk).unwrap();
            acc = acc.add(&fk.scale(l)).unwrap();
        }
        acc
    }

    #[test]
    fn prg_with_unit_edge_weights_matches_dense_restart_series() {
        // lambda frozen at the restart profile and E = 1: the model must
        // reproduce the dense personalized-PageRank style power series.
        let g = Graph::build(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (2, 5)]).unwrap();
        let mut rng = rng0();
        let prg = DmpPrgModel::new(
            6,
            4,
            8,
            3,
            10,
            Ablation::None,
            DivergenceMode::Normalized,
            &mut rng,
        )
        .unwrap();
        let feats = Matrix::glorot_uniform(6, 4, &mut rng);
        let tape = Tape::new();
        let out = Model::DmpPrg(prg.clone())
            .forward(&tape, &feats, &g, false, &mut rng)
            .unwrap()
            .logits
            .value();
        let h = feats
            .matmul(&prg.mlp_w1)
            .unwrap()
            .map(|v| v.max(0.0))
            .matmul(&prg.mlp_w2)
            .unwrap();
        let want = dense_depth_mix(&g, &h, &ppr_profile(10, PPR_ALPHA));
        assert!(out.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn prg_with_terminal_lambda_is_a_pure_power_iteration() {
        let g = Graph::build(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        let mut rng = rng0();
        let mut prg = DmpPrgModel::new(
            5,
            4,
            6,
            2,
            4,
            Ablation::None,
            DivergenceMode::Normalized,
            &mut rng,
        )
        .unwrap();
        let mut lambda = vec![0.0; 5];
        lambda[4] = 1.0;
        prg.lambda = Matrix::new(5, 1, lambda.clone()).unwrap();
        let feats = Matrix::glorot_uniform(5, 4, &mut rng);
        let tape = Tape::new();
        let out = Model::DmpPrg(prg.clone())
            .forward(&tape, &feats, &g, false, &mut rng)
            .unwrap()
            .logits
            .value();
        let h = feats
            .matmul(&prg.mlp_w1)
            .unwrap()
            .map(|v| v.max(0.0))
            .matmul(&prg.mlp_w2)
            .unwrap();
        let want = dense_depth_mix(&g, &h, &lambda);
        assert!(out.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn prg_with_uniform_lambda_averages_depths_on_a_cycle() {
        let g = Graph::build(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let mut rng = rng0();
        let mut prg = DmpPrgModel::new(
            4,
            3,
            5,
            2,
            3,
            Ablation::None,
            DivergenceMode::Normalized,
            &mut rng,
        )
        .unwrap();
        prg.lambda = Matrix::filled(4, 1, 0.25);
        let feats = Matrix::glorot_uniform(4, 3, &mut rng);
        let tape = Tape::new();
        let out = Model::DmpPrg(prg.clone())
            .forward(&tape, &feats, &g, false, &mut rng)
            .unwrap()
            .logits
            .value();
        let h = feats
            .matmul(&prg.mlp_w1)
            .unwrap()
            .map(|v| v.max(0.0))
            .matmul(&prg.mlp_w2)
            .unwrap();
        let want = dense_depth_mix(&g, &h, &[0.25; 4]);
        assert!(out.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn eval_forward_never_consumes_randomness() {
        use rand::RngCore;
        let g = Graph::build(3, &[(0, 1), (1, 2)]).unwrap();
        let mut rng = rng0();
        let model = Model::DmpGcn(
            DmpGcnModel::new(
                3,
                4,
                3,
                2,
                Ablation::Full,
                DivergenceMode::Normalized,
                &mut rng,
            )
            .unwrap(),
        );
        let feats = Matrix::glorot_uniform(3, 4, &mut rng);
        let mut r1 = seeded_rng(5, Domain::Training);
        let mut r2 = seeded_rng(5, Domain::Training);
        let tape = Tape::new();
        model.forward(&tape, &feats, &g, false, &mut r1).unwrap();
        assert_eq!(r1.next_u64(), r2.next_u64());
    }
}
