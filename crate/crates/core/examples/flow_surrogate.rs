//! Flow surrogates are invariant to node numbering and separate different
//! topologies.
use fgp::archgraph::ArchGraph;
use fgp::surrogate::{batch_surrogates, compute_surrogate, SurrogateConfig, SurrogateParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SurrogateParams::init(4, SurrogateConfig::default())?;
    let diamond = ArchGraph::from_ops(4, &[0, 1, 2, 1, 3], vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]);
    let relabeled = diamond.permuted(&[4, 2, 0, 3, 1]);
    let chain = ArchGraph::from_ops(4, &[0, 1, 2, 1, 3], vec![(0, 1), (1, 2), (2, 3), (3, 4)]);

    let s = compute_surrogate(&diamond, &params)?;
    println!("diamond   {:?}", s.values());
    println!("relabeled {:?}", compute_surrogate(&relabeled, &params)?.values());
    println!("chain     {:?}", compute_surrogate(&chain, &params)?.values());

    let batch = batch_surrogates(&[diamond, chain], &params)?;
    println!("batch of {} computed in parallel", batch.len());
    Ok(())
}
