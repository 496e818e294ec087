//! The on-disk dataset layout: synthesize a graph, write it as a TSV
//! directory, read it back, and confirm nothing changed.

use jsdmp::data::{load_dataset, synthesize_graph, write_dataset, SynthConfig};
use jsdmp::rng::{seeded_rng, Domain};

fn main() -> jsdmp::Result<()> {
    let synth = SynthConfig {
        nodes: 50,
        classes: 3,
        features: 8,
        homophily: 0.8,
        avg_degree: 4,
    };
    let ds = synthesize_graph(&synth, &mut seeded_rng(4, Domain::Synthesis))?;

    let dir = std::env::temp_dir().join("jsdmp_roundtrip_example");
    write_dataset(&ds, &dir)?;
    println!("wrote {}:", dir.display());
    let mut names: Vec<_> = std::fs::read_dir(&dir)?
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for name in names {
        println!("  {name}");
    }

    let back = load_dataset(&dir)?;
    assert_eq!(back.num_nodes(), ds.num_nodes());
    assert_eq!(back.num_classes, ds.num_classes);
    assert_eq!(back.labels, ds.labels);
    assert_eq!(
        back.graph.num_undirected_edges(),
        ds.graph.num_undirected_edges()
    );
    assert_eq!(back.features.max_abs_diff(&ds.features), 0.0);
    println!(
        "reloaded {} nodes / {} undirected edges / {} features, bit-exact",
        back.num_nodes(),
        back.graph.num_undirected_edges(),
        back.num_features()
    );
    Ok(())
}
