//! Level assignment of a small cell and its undirected form.
use fgp::archgraph::{ArchGraph, OpVocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = OpVocabulary::new(["input", "conv3x3", "conv1x1", "output"])?;
    let g = ArchGraph::from_names(
        &vocab,
        &["input", "conv3x3", "conv1x1", "conv3x3", "output"],
        vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)],
    )?;
    let topo = g.assign_topological_order()?;
    println!("{topo}");
    for v in 0..g.num_nodes() {
        println!("node {v} ({}) in {:?}", vocab.name(g.op(v)).unwrap_or("?"), g.in_neighbors(v)?);
    }
    println!("undirected edge count: {}", g.undirect().edges().len());
    Ok(())
}
