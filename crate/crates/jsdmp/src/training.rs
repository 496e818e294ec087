//! Full-batch training loop with early stopping on validation accuracy.
//!
//! The loss is the masked mean softmax cross-entropy plus, whenever the
//! divergence machinery is active, a structural regularizer on the latent
//! positions. Reports serialize to key/value text and JSON; both forms omit
//! the wall-clock field so repeated runs with one seed produce identical
//! bytes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::autodiff::{Tape, Tensor};
use crate::data::{Dataset, Masks};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, SparseMatrix};
use crate::metrics::{accuracy, nmi};
use crate::models::Model;
use crate::rng::{seeded_rng, Domain};

/// Optimizer schedule and stopping rule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs without a new best validation accuracy before stopping.
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            patience: 50,
            lr: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be nonnegative and finite, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Smoothness plus orthogonality penalty on latent positions:
/// `tr(X^T L X) + || (1/n) X^T X - I ||_F^2`.
pub fn structural_regularizer(x: &Tensor, lap: &SparseMatrix) -> Result<Tensor> {
    let smooth = x.quad_form(lap)?;
    let n = x.rows() as f64;
    let gram = x.transpose().matmul(x)?.scale(1.0 / n);
    let eye = x.tape().constant(&Matrix::identity(x.cols()));
    let dev = gram.sub(&eye)?;
    let ortho = dev.hadamard(&dev)?.sum_all();
    smooth.add(&ortho)
}

/// Masked cross-entropy plus the structural regularizer, unweighted.
pub fn total_loss(
    logits: &Tensor,
    labels: &[usize],
    train_mask: &[bool],
    x: &Tensor,
    lap: &SparseMatrix,
) -> Result<Tensor> {
    let ce = logits.softmax_cross_entropy(labels, train_mask)?;
    let reg = structural_regularizer(x, lap)?;
    ce.add(&reg)
}

/// One epoch's summary line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub regularizer: f64,
    pub val_acc: f64,
}

/// Everything a finished run reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub dataset: String,
    pub ablation: String,
    pub divergence_mode: String,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub test_nmi: f64,
    pub history: Vec<EpochRecord>,
    /// Diagnostic only; never serialized, so reports replay byte-identically.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    /// Key/value text form, one metric per line; per-epoch history follows
    /// the header as one keyed line per epoch.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('\t');
            out.push_str(&v);
            out.push('\n');
        };
        kv("model", self.model.clone());
        kv("dataset", self.dataset.clone());
        kv("ablation", self.ablation.clone());
        kv("divergence_mode", self.divergence_mode.clone());
        kv("seed", self.seed.to_string());
        kv("epochs", self.epochs.to_string());
        kv("patience", self.patience.to_string());
        kv("lr", self.lr.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("epochs_run", self.epochs_run.to_string());
        kv("best_epoch", self.best_epoch.to_string());
        kv("best_val_acc", self.best_val_acc.to_string());
        kv("test_acc", self.test_acc.to_string());
        kv("test_nmi", self.test_nmi.to_string());
        for r in &self.history {
            out.push_str(&format!(
                "epoch\t{}\ttrain_loss\t{}\tregularizer\t{}\tval_acc\t{}\n",
                r.epoch, r.train_loss, r.regularizer, r.val_acc
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Eval-mode accuracy and NMI of `model` on the masked nodes.
pub fn evaluate(model: &Model, ds: &Dataset, mask: &[bool]) -> Result<(f64, f64)> {
    let preds = model.predict(&ds.features, &ds.graph)?;
    Ok((
        accuracy(&preds, &ds.labels, mask)?,
        nmi(&preds, &ds.labels, mask)?,
    ))
}

/// Trains `model` in place and leaves it at the parameters of the best
/// validation epoch.
pub fn train(
    model: &mut Model,
    ds: &Dataset,
    masks: &Masks,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    masks.validate(ds.num_nodes())?;
    let (n_train, n_val, n_test) = masks.counts();
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "all three splits must be nonempty, got train {n_train}, val {n_val}, test {n_test}"
        )));
    }

    let start = Instant::now();
    let lap = ds.graph.normalized_laplacian();
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.clone()).collect();
    let trainable: Vec<bool> = names.iter().map(|n| model.is_trainable(n)).collect();
    let shapes: Vec<(usize, usize)> = model
        .params()
        .iter()
        .zip(&trainable)
        .filter(|(_, &t)| t)
        .map(|((_, m), _)| (m.rows(), m.cols()))
        .collect();
    let trainable_names: Vec<&str> = names
        .iter()
        .zip(&trainable)
        .filter(|(_, &t)| t)
        .map(|(n, _)| n.as_str())
        .collect();
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        &shapes,
    )?;

    let mut rng = seeded_rng(cfg.seed, Domain::Training);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Vec<Matrix> = model.params().iter().map(|(_, m)| (*m).clone()).collect();
    let mut stale = 0usize;
    let mut history = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.epochs {
        let tape = Tape::new();
        let pass = model.forward(&tape, &ds.features, &ds.graph, true, &mut rng)?;
        let ce = pass
            .logits
            .softmax_cross_entropy(&ds.labels, &masks.train)?;
        let (loss, reg_value) = if model.has_regularizer() {
            let reg = structural_regularizer(&pass.x_base, &lap)?;
            let reg_value = reg.scalar()?;
            (ce.add(&reg)?, reg_value)
        } else {
            (ce, 0.0)
        };
        let train_loss = loss.scalar()?;
        if !train_loss.is_finite() {
            return Err(Error::Train(format!(
                "loss became {train_loss} at epoch {epoch}"
            )));
        }
        tape.backward(&loss)?;
        let grads: Vec<Matrix> = pass
            .bound
            .iter()
            .zip(&trainable)
            .filter(|(_, &t)| t)
            .map(|(tensor, _)| tensor.grad())
            .collect();

        let step_mats: Vec<&mut Matrix> = model
            .params_mut()
            .into_iter()
            .zip(&trainable)
            .filter(|(_, &t)| t)
            .map(|((_, m), _)| m)
            .collect();
        let mut step_pairs: Vec<(&str, &mut Matrix)> =
            trainable_names.iter().copied().zip(step_mats).collect();
        adam.step(&mut step_pairs, &grads)
            .map_err(|e| Error::Train(format!("epoch {epoch}: {e}")))?;

        let (val_acc, _) = evaluate(model, ds, &masks.val)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            regularizer: reg_value,
            val_acc,
        });
        epochs_run = epoch;

        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_params = model.params().iter().map(|(_, m)| (*m).clone()).collect();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    for ((_, param), saved) in model.params_mut().into_iter().zip(best_params) {
        *param = saved;
    }
    let (test_acc, test_nmi) = evaluate(model, ds, &masks.test)?;

    Ok(TrainReport {
        model: model.kind().into(),
        dataset: ds.name.clone(),
        ablation: model.ablation().as_str().into(),
        divergence_mode: model.divergence_mode().as_str().into(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        patience: cfg.patience,
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        epochs_run,
        best_epoch,
        best_val_acc: best_val,
        test_acc,
        test_nmi,
        history,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
