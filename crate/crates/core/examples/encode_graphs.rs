//! Embeds a batch of architectures with an untrained encoder and saves a
//! checkpoint.
use fgp::benchdata::SpaceSpec;
use fgp::encoder::{EncoderConfig, EncoderModel};
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SpaceSpec::cell201_like();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let graphs: Vec<_> = (0..4).map(|_| spec.sample(&mut rng)).collect();

    let cfg = EncoderConfig { hidden_dim: 8, ..EncoderConfig::default() };
    let model = EncoderModel::new(cfg, spec.vocab().len(), 8)?;
    let z = model.embed(&graphs)?;
    for (i, g) in graphs.iter().enumerate() {
        println!("{} nodes -> {:.3?}", g.num_nodes(), z.row(i));
    }
    println!("scores {:.4?}", model.score(&graphs)?);

    let ckpt = model.to_checkpoint(serde_json::Map::new());
    let restored = EncoderModel::from_checkpoint(&ckpt)?;
    assert_eq!(restored.score(&graphs)?, model.score(&graphs)?);
    println!("checkpoint round trip ok ({} bytes)", ckpt.to_json().len());
    Ok(())
}
