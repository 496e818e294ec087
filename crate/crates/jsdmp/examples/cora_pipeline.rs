//! Full pipeline on the Cora citation benchmark, if a local copy exists:
//! load the TSV directory, train both architectures on a 140/500/1000
//! split, and print test accuracy for each.
//!
//! Fetch the dataset first with `python3 scripts/fetch_cora.py`, or point
//! `JSDMP_CORA_DIR` at an existing copy.

use std::path::PathBuf;

use jsdmp::data::{load_dataset, resolve_masks, SplitPolicy, SplitSource, TrainBudget};
use jsdmp::layers::DivergenceMode;
use jsdmp::models::{Ablation, DmpGcnModel, DmpPrgModel, Model};
use jsdmp::rng::{seeded_rng, Domain};
use jsdmp::training::{train, TrainConfig};

fn main() -> jsdmp::Result<()> {
    let dir = std::env::var("JSDMP_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("datasets/cora"));
    if !dir.join("manifest.tsv").exists() {
        println!("no dataset at {}", dir.display());
        println!("fetch it with: python3 scripts/fetch_cora.py");
        println!("or set JSDMP_CORA_DIR to a dataset directory.");
        return Ok(());
    }

    let ds = load_dataset(&dir)?;
    println!(
        "{}: {} nodes, {} undirected edges, {} features, {} classes",
        ds.name,
        ds.num_nodes(),
        ds.graph.num_undirected_edges(),
        ds.num_features(),
        ds.num_classes
    );

    let split = SplitSource::Policy(SplitPolicy::Planetoid {
        train: TrainBudget::Total(140),
        val: 500,
        test: 1000,
    });
    let masks = resolve_masks(&ds, split, 0)?;
    let cfg = TrainConfig::default();

    let mut gcn = Model::DmpGcn(DmpGcnModel::new(
        ds.num_nodes(),
        ds.num_features(),
        32,
        ds.num_classes,
        Ablation::Full,
        DivergenceMode::Normalized,
        &mut seeded_rng(0, Domain::ModelInit),
    )?);
    let r = train(&mut gcn, &ds, &masks, &cfg)?;
    println!("dmpgcn: test ACC {:.4}, NMI {:.4}", r.test_acc, r.test_nmi);

    let mut prg = Model::DmpPrg(DmpPrgModel::new(
        ds.num_nodes(),
        ds.num_features(),
        64,
        ds.num_classes,
        10,
        Ablation::Full,
        DivergenceMode::Normalized,
        &mut seeded_rng(0, Domain::ModelInit),
    )?);
    let r = train(&mut prg, &ds, &masks, &cfg)?;
    println!("dmpprg: test ACC {:.4}, NMI {:.4}", r.test_acc, r.test_nmi);
    Ok(())
}
