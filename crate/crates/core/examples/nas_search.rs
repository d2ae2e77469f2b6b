//! Predictor-guided evolution against random search, using the oracle
//! itself as a perfect predictor.
use fgp::benchdata::{OracleConfig, SpaceSpec, SyntheticOracle};
use fgp::nassearch::{mutate, random_search, reference_best, run_npenas, OraclePredictor, SearchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SpaceSpec::cell201_like();
    let oracle = SyntheticOracle::new(&spec.vocab(), OracleConfig::default());
    let reference = reference_best(&spec, &oracle, 5000, 1)?;

    let parent = spec.sample(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
    let child = mutate(&parent, &spec, 0)?;
    println!("mutation: {} edges -> {} edges", parent.edges().len(), child.edges().len());

    let cfg = SearchConfig { budget: 100, ..SearchConfig::default() };
    let mut predictor = OraclePredictor { oracle: &oracle };
    let evo = run_npenas(&spec, &oracle, &mut predictor, &cfg, reference)?;
    let rnd = random_search(&spec, &oracle, &cfg, reference)?;
    for (a, b) in evo.trace.iter().zip(&rnd.trace) {
        println!("evaluated {:3}: regret evolution {:+.4} random {:+.4}", a.pool_size, a.regret, b.regret);
    }
    Ok(())
}
