//! Persistence round trip: train briefly, save a checkpoint, load it back,
//! and confirm the restored model scores the test split identically.

use jsdmp::checkpoint::{load_checkpoint, save_checkpoint};
use jsdmp::data::{resolve_masks, synthesize_graph, SplitPolicy, SplitSource, SynthConfig};
use jsdmp::layers::DivergenceMode;
use jsdmp::models::{Ablation, DmpGcnModel, Model};
use jsdmp::rng::{seeded_rng, Domain};
use jsdmp::training::{evaluate, train, TrainConfig};

fn main() -> jsdmp::Result<()> {
    let synth = SynthConfig {
        nodes: 200,
        classes: 3,
        features: 16,
        homophily: 0.8,
        avg_degree: 5,
    };
    let ds = synthesize_graph(&synth, &mut seeded_rng(5, Domain::Synthesis))?;
    let split = SplitSource::Policy(SplitPolicy::Fractional);
    let masks = resolve_masks(&ds, split, 0)?;

    let mut model = Model::DmpGcn(DmpGcnModel::new(
        ds.num_nodes(),
        ds.num_features(),
        16,
        ds.num_classes,
        Ablation::Full,
        DivergenceMode::Normalized,
        &mut seeded_rng(0, Domain::ModelInit),
    )?);
    let cfg = TrainConfig {
        epochs: 40,
        seed: 0,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &ds, &masks, &cfg)?;
    println!("trained: test ACC {:.4}", report.test_acc);

    let path = std::env::temp_dir().join("jsdmp_example.ckpt");
    save_checkpoint(&path, &model, 0, &ds.name, split)?;
    println!("saved {}", path.display());

    let (restored, meta) = load_checkpoint(&path)?;
    let (acc, nmi) = evaluate(&restored, &ds, &masks.test)?;
    println!(
        "restored {} ({} ablation): test ACC {:.4}, NMI {:.4}",
        meta.model, meta.ablation, acc, nmi
    );
    assert_eq!(acc, report.test_acc);
    Ok(())
}
