//! Pre-trains on surrogates and proxies, fine-tunes on 2% of the train
//! split and compares against a scratch encoder.
use fgp::benchdata::{BenchDataset, OracleConfig, SpaceSpec, SyntheticOracle};
use fgp::encoder::{EncoderConfig, EncoderModel};
use fgp::surrogate::{SurrogateConfig, SurrogateParams};
use fgp::training::{evaluate_tau, finetune, pretrain, FinetuneConfig, PretrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ds = BenchDataset::generate(&SpaceSpec::cell201_like(), 600, 5)?;
    ds.label_with(&SyntheticOracle::new(&ds.vocab, OracleConfig::default()))?;
    ds.attach_surrogates(&SurrogateParams::init(ds.vocab.len(), SurrogateConfig::default())?)?;
    ds.make_splits(0.5, 20, 5)?;

    let enc = EncoderConfig { hidden_dim: 32, ..EncoderConfig::default() };
    let ft = FinetuneConfig { train_ratio: 0.02, epochs: 150, ..FinetuneConfig::default() };

    let mut model = EncoderModel::new(enc.clone(), ds.vocab.len(), 8)?;
    let out = pretrain(&mut model, &ds, &PretrainConfig { epochs: 30, ..PretrainConfig::default() })?;
    let (first, last) = (&out.trace[0], &out.trace[out.trace.len() - 1]);
    println!("pretrain loss {:.3} -> {:.3}, labels read: {}", first.total, last.total, ds.label_reads());
    finetune(&mut model, &ds, &ft)?;

    let mut scratch = EncoderModel::new(enc, ds.vocab.len(), 8)?;
    finetune(&mut scratch, &ds, &ft)?;

    println!("test tau pretrained {:.3}", evaluate_tau(&model, &ds, &ds.splits.test)?);
    println!("test tau scratch    {:.3}", evaluate_tau(&scratch, &ds, &ds.splits.test)?);
    Ok(())
}
