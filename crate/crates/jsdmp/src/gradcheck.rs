//! Central-difference verification of every model gradient.
//!
//! The checker records one eval-mode forward pass, takes analytic gradients
//! from the tape, then re-evaluates the loss twice per parameter entry with
//! the entry nudged by `+-h`. Relative errors are floored to ignore noise on
//! near-zero gradients.

use crate::data::{synthesize_graph, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::layers::DivergenceMode;
use crate::matrix::SparseMatrix;
use crate::models::{Ablation, DmpGcnModel, DmpPrgModel, Model};
use crate::rng::{seeded_rng, Domain};
use crate::training::structural_regularizer;

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-6;
/// Default pass tolerance on the relative error.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Denominators below this floor count as this floor.
const REL_FLOOR: f64 = 1e-3;

/// Worst relative error over one named parameter.
#[derive(Clone, Debug)]
pub struct GroupResult {
    pub name: String,
    pub max_rel_err: f64,
}

/// Outcome of checking every parameter of one model.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub model: String,
    pub groups: Vec<GroupResult>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_err < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("model\t{}\n", self.model);
        for g in &self.groups {
            out.push_str(&format!("{}\t{}\n", g.name, g.max_rel_err));
        }
        out.push_str(&format!(
            "status\t{}\ttolerance\t{}\n",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tolerance
        ));
        out
    }
}

fn loss_value(model: &Model, ds: &Dataset, mask: &[bool], lap: &SparseMatrix) -> Result<f64> {
    let tape = crate::autodiff::Tape::new();
    let mut rng = seeded_rng(0, Domain::GradCheck);
    let pass = model.forward(&tape, &ds.features, &ds.graph, false, &mut rng)?;
    let ce = pass.logits.softmax_cross_entropy(&ds.labels, mask)?;
    let loss = if model.has_regularizer() {
        ce.add(&structural_regularizer(&pass.x_base, lap)?)?
    } else {
        ce
    };
    loss.scalar()
}

/// Compares analytic gradients of the full loss against central differences
/// for every entry of every parameter. The model is perturbed in place and
/// restored exactly.
pub fn check_model_gradients(
    model: &mut Model,
    ds: &Dataset,
    mask: &[bool],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let lap = ds.graph.normalized_laplacian();

    let tape = crate::autodiff::Tape::new();
    let mut rng = seeded_rng(0, Domain::GradCheck);
    let pass = model.forward(&tape, &ds.features, &ds.graph, false, &mut rng)?;
    let ce = pass.logits.softmax_cross_entropy(&ds.labels, mask)?;
    let loss = if model.has_regularizer() {
        ce.add(&structural_regularizer(&pass.x_base, &lap)?)?
    } else {
        ce
    };
    tape.backward(&loss)?;
    let analytic: Vec<crate::matrix::Matrix> = pass.bound.iter().map(|t| t.grad()).collect();
    drop(pass);
    drop(tape);

    let names: Vec<String> = model.params().iter().map(|(n, _)| n.clone()).collect();
    let mut groups = Vec::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        let entries = analytic[idx].rows() * analytic[idx].cols();
        let mut max_rel = 0.0f64;
        for e in 0..entries {
            let original = model.params_mut()[idx].1.data()[e];
            model.params_mut()[idx].1.data_mut()[e] = original + step;
            let plus = loss_value(model, ds, mask, &lap)?;
            model.params_mut()[idx].1.data_mut()[e] = original - step;
            let minus = loss_value(model, ds, mask, &lap)?;
            model.params_mut()[idx].1.data_mut()[e] = original;

            let finite = (plus - minus) / (2.0 * step);
            let exact = analytic[idx].data()[e];
            let denom = exact.abs().max(finite.abs()).max(REL_FLOOR);
            max_rel = max_rel.max((exact - finite).abs() / denom);
        }
        groups.push(GroupResult {
            name: name.clone(),
            max_rel_err: max_rel,
        });
    }
    Ok(GradCheckReport {
        model: model.kind().into(),
        groups,
        tolerance,
    })
}

/// Builds a small random instance and checks both architectures on it with
/// every term of the loss active. Returns one report per model.
pub fn run_gradcheck(size: usize, seed: u64, tolerance: f64) -> Result<Vec<GradCheckReport>> {
    if size < 4 {
        return Err(Error::Config(format!(
            "gradient checks need at least 4 nodes, got {size}"
        )));
    }
    let mut rng = seeded_rng(seed, Domain::GradCheck);
    let ds = synthesize_graph(
        &SynthConfig {
            nodes: size,
            classes: 2,
            features: 4,
            homophily: 0.6,
            avg_degree: 2,
        },
        &mut rng,
    )?;
    let mask = vec![true; size];

    let mut init_rng = seeded_rng(seed, Domain::ModelInit);
    let mut gcn = Model::DmpGcn(DmpGcnModel::new(
        size,
        ds.num_features(),
        4,
        ds.num_classes,
        Ablation::Full,
        DivergenceMode::Normalized,
        &mut init_rng,
    )?);
    let mut prg = Model::DmpPrg(DmpPrgModel::new(
        size,
        ds.num_features(),
        4,
        ds.num_classes,
        3,
        Ablation::Full,
        DivergenceMode::Normalized,
        &mut init_rng,
    )?);

    Ok(vec![
        check_model_gradients(&mut gcn, &ds, &mask, DEFAULT_STEP, tolerance)?,
        check_model_gradients(&mut prg, &ds, &mask, DEFAULT_STEP, tolerance)?,
    ])
}
