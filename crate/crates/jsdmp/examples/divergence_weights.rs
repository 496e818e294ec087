//! The core edge mechanism in isolation: on a 4-node path whose feature rows
//! drift apart node by node, per-edge divergence rises and the resulting
//! edge weight falls, so dissimilar neighbors are heard less.

use jsdmp::autodiff::Tape;
use jsdmp::graph::Graph;
use jsdmp::layers::{contextual_divergence, edge_weights, sym_normalize, DivergenceMode};
use jsdmp::matrix::Matrix;

fn main() -> jsdmp::Result<()> {
    let g = Graph::build(4, &[(0, 1), (1, 2), (2, 3)])?;
    let features = Matrix::from_rows(&[
        vec![2.0, 0.0, 0.0],
        vec![1.8, 0.2, 0.0],
        vec![0.2, 1.8, 0.0],
        vec![0.0, 0.2, 1.8],
    ])?;

    let tape = Tape::new();
    let f = tape.constant(&features);
    let d = contextual_divergence(&f, &g, DivergenceMode::Normalized)?;
    let zero_similarity = tape.constant(&Matrix::zeros(g.num_directed_edges(), 1));
    let gamma = tape.constant(&Matrix::filled(1, 1, 2.0));
    let e = edge_weights(&zero_similarity, &d, &gamma)?;
    let phi = sym_normalize(&e, &g)?;

    let (dv, ev, pv) = (d.value(), e.value(), phi.value());
    println!("edge\tdivergence\tweight\tnormalized");
    for (idx, (&u, &v)) in g.src().iter().zip(g.dst()).enumerate() {
        if u < v {
            println!(
                "{u}-{v}\t{:.4}\t{:.4}\t{:.4}",
                dv.at(idx, 0),
                ev.at(idx, 0),
                pv.at(idx, 0)
            );
        }
    }
    println!();
    println!("rows 0 and 1 almost agree, so edge 0-1 keeps most of its weight;");
    println!("rows 1 and 2 disagree and edge 1-2 is suppressed accordingly.");
    Ok(())
}
