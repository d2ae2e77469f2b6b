//! Generates, labels, splits and serializes a small benchmark.
use fgp::benchdata::{BenchDataset, OracleConfig, SpaceSpec, SyntheticOracle};
use fgp::surrogate::{SurrogateConfig, SurrogateParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SpaceSpec::cell101_like();
    let mut ds = BenchDataset::generate(&spec, 200, 11)?;
    ds.label_with(&SyntheticOracle::new(&ds.vocab, OracleConfig::default()))?;
    ds.attach_surrogates(&SurrogateParams::init(ds.vocab.len(), SurrogateConfig::default())?)?;
    ds.make_splits(0.5, 20, 11)?;
    println!(
        "{} graphs: train {}, validation {}, test {}",
        ds.len(),
        ds.splits.train.len(),
        ds.splits.validation.len(),
        ds.splits.test.len()
    );
    let r = &ds.records[0];
    println!("{}: {} nodes, proxy {:.3}", r.id, r.graph.num_nodes(), r.proxy.unwrap_or(f64::NAN));

    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf)?;
    let back = BenchDataset::read_jsonl(buf.as_slice())?;
    println!("jsonl: {} bytes, round trip equal: {}", buf.len(), back == ds);
    Ok(())
}
