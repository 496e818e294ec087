//! Smallest end-to-end run: synthesize a homophilous graph, train the
//! two-layer model, print the training report.

use jsdmp::data::{resolve_masks, synthesize_graph, SplitPolicy, SplitSource, SynthConfig};
use jsdmp::layers::DivergenceMode;
use jsdmp::models::{Ablation, DmpGcnModel, Model};
use jsdmp::rng::{seeded_rng, Domain};
use jsdmp::training::{train, TrainConfig};

fn main() -> jsdmp::Result<()> {
    let synth = SynthConfig {
        nodes: 400,
        classes: 4,
        features: 30,
        homophily: 0.85,
        avg_degree: 6,
    };
    let ds = synthesize_graph(&synth, &mut seeded_rng(0, Domain::Synthesis))?;
    let masks = resolve_masks(&ds, SplitSource::Policy(SplitPolicy::Fractional), 0)?;

    let mut model = Model::DmpGcn(DmpGcnModel::new(
        ds.num_nodes(),
        ds.num_features(),
        32,
        ds.num_classes,
        Ablation::Full,
        DivergenceMode::Normalized,
        &mut seeded_rng(0, Domain::ModelInit),
    )?);

    let cfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &ds, &masks, &cfg)?;
    print!("{}", report.render_text());
    Ok(())
}
