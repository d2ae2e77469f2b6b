//! Predictor-guided evolutionary search (NPENAS) and a random-search
//! control over a cell space scored by the synthetic oracle.
//!
//! Each round fits the predictor to the evaluated pool, mutates every pool
//! member a few times, and evaluates the candidates the predictor ranks
//! highest. Traces record best-so-far performance and regret against a
//! reference optimum.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archgraph::{ArchGraph, GraphError};
use crate::benchdata::{canonical_form, CanonicalForm, SpaceSpec, SyntheticOracle};
use crate::encoder::{EncoderError, EncoderModel};
use crate::training::{finetune_graphs, FinetuneConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no valid mutation found in {retries} attempts")]
    MutationExhausted { retries: usize },
    #[error("could not find {needed} unseen architectures")]
    SpaceExhausted { needed: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    OpChange { node: usize, from: usize, to: usize },
    AddEdge(usize, usize),
    RemoveEdge(usize, usize),
}

fn try_mutation<R: Rng + ?Sized>(graph: &ArchGraph, spec: &SpaceSpec, rng: &mut R) -> Option<(ArchGraph, Mutation)> {
    let n = graph.num_nodes();
    let mut ops = graph.ops();
    let mut edges = graph.edges().to_vec();
    let mutation = match rng.random_range(0..3) {
        0 => {
            let inner: Vec<usize> = (0..n).filter(|&v| ops[v] >= 2).collect();
            let &node = inner.choose(rng)?;
            let choices: Vec<usize> = (2..graph.num_ops()).filter(|&o| o != ops[node]).collect();
            let &to = choices.choose(rng)?;
            let from = ops[node];
            ops[node] = to;
            Mutation::OpChange { node, from, to }
        }
        1 => {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || edges.contains(&(a, b)) {
                return None;
            }
            edges.push((a, b));
            Mutation::AddEdge(a, b)
        }
        _ => {
            if edges.is_empty() {
                return None;
            }
            let (a, b) = edges.remove(rng.random_range(0..edges.len()));
            Mutation::RemoveEdge(a, b)
        }
    };
    let out = ArchGraph::from_ops(graph.num_ops(), &ops, edges);
    spec.contains(&out).then_some((out, mutation))
}

/// One random atomic change that keeps the graph inside `spec`.
pub fn mutate_with<R: Rng + ?Sized>(
    graph: &ArchGraph,
    spec: &SpaceSpec,
    rng: &mut R,
    max_retries: usize,
) -> Result<(ArchGraph, Mutation), SearchError> {
    for _ in 0..max_retries {
        if let Some(found) = try_mutation(graph, spec, rng) {
            return Ok(found);
        }
    }
    Err(SearchError::MutationExhausted { retries: max_retries })
}

/// Seeded [`mutate_with`] with the default retry budget of 100.
pub fn mutate(graph: &ArchGraph, spec: &SpaceSpec, seed: u64) -> Result<ArchGraph, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mutate_with(graph, spec, &mut rng, 100).map(|(g, _)| g)
}

/// Scores candidate architectures; refit on the evaluated pool every round.
pub trait Predictor {
    fn fit(&mut self, graphs: &[ArchGraph], performance: &[f64]) -> Result<(), SearchError>;
    fn predict(&self, graphs: &[ArchGraph]) -> Result<Vec<f64>, SearchError>;
}

/// Predicts with the true oracle performance.
pub struct OraclePredictor<'a> {
    pub oracle: &'a SyntheticOracle,
}

impl Predictor for OraclePredictor<'_> {
    fn fit(&mut self, _: &[ArchGraph], _: &[f64]) -> Result<(), SearchError> {
        Ok(())
    }

    fn predict(&self, graphs: &[ArchGraph]) -> Result<Vec<f64>, SearchError> {
        graphs
            .iter()
            .map(|g| Ok(self.oracle.score(g)?.performance))
            .collect()
    }
}

/// An encoder regressor, warm-started once and fine-tuned on the whole pool
/// every round.
pub struct EncoderPredictor {
    pub model: EncoderModel,
    pub finetune: FinetuneConfig,
}

impl Predictor for EncoderPredictor {
    fn fit(&mut self, graphs: &[ArchGraph], performance: &[f64]) -> Result<(), SearchError> {
        finetune_graphs(&mut self.model, graphs, performance, None, &self.finetune)?;
        Ok(())
    }

    fn predict(&self, graphs: &[ArchGraph]) -> Result<Vec<f64>, SearchError> {
        Ok(self.model.score(graphs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub initial: usize,
    pub per_round: usize,
    pub mutants_per_member: usize,
    pub budget: usize,
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            initial: 20,
            per_round: 20,
            mutants_per_member: 5,
            budget: 200,
            max_retries: 100,
            seed: 97,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<(), SearchError> {
        if self.initial == 0 || self.per_round == 0 || self.initial > self.budget {
            return Err(SearchError::InvalidConfig(
                "need 0 < initial <= budget and per_round > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    pub pool_size: usize,
    pub best: f64,
    pub regret: f64,
}

/// Evaluated architectures and the best-so-far trace of one run.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub pool: Vec<(ArchGraph, f64)>,
    pub budget: usize,
    pub round: usize,
    pub seed: u64,
    pub reference: f64,
    pub trace: Vec<TraceRow>,
    seen: HashSet<CanonicalForm>,
    rng: ChaCha8Rng,
}

impl SearchState {
    fn new(budget: usize, seed: u64, reference: f64) -> Self {
        Self {
            pool: Vec::with_capacity(budget),
            budget,
            round: 0,
            seed,
            reference,
            trace: Vec::new(),
            seen: HashSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn best(&self) -> f64 {
        self.pool.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_regret(&self) -> f64 {
        self.reference - self.best()
    }

    pub fn is_done(&self) -> bool {
        self.pool.len() >= self.budget
    }

    /// Evaluates `graph` unless seen before; returns whether it was added.
    fn evaluate(&mut self, graph: ArchGraph, oracle: &SyntheticOracle) -> Result<bool, SearchError> {
        if self.pool.len() >= self.budget || !self.seen.insert(canonical_form(&graph)?) {
            return Ok(false);
        }
        let perf = oracle.score(&graph)?.performance;
        self.pool.push((graph, perf));
        Ok(true)
    }

    fn record(&mut self) {
        let best = self.best();
        self.trace.push(TraceRow {
            round: self.round,
            pool_size: self.pool.len(),
            best,
            regret: self.reference - best,
        });
    }

    fn sample_unseen(&mut self, spec: &SpaceSpec, oracle: &SyntheticOracle, count: usize) -> Result<(), SearchError> {
        let target = (self.pool.len() + count).min(self.budget);
        let mut misses = 0;
        while self.pool.len() < target {
            let g = spec.sample(&mut self.rng);
            if !self.evaluate(g, oracle)? {
                misses += 1;
                if misses > 100 * count.max(1) + 1000 {
                    return Err(SearchError::SpaceExhausted { needed: target - self.pool.len() });
                }
            }
        }
        Ok(())
    }
}

/// Best oracle performance among `samples` random members of `spec`,
/// used as the regret reference.
pub fn reference_best(spec: &SpaceSpec, oracle: &SyntheticOracle, samples: usize, seed: u64) -> Result<f64, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        best = best.max(oracle.score(&spec.sample(&mut rng))?.performance);
    }
    Ok(best)
}

/// Evaluates `cfg.initial` random architectures as round 0.
pub fn init_search(
    spec: &SpaceSpec,
    oracle: &SyntheticOracle,
    cfg: &SearchConfig,
    reference: f64,
) -> Result<SearchState, SearchError> {
    cfg.validate()?;
    let mut state = SearchState::new(cfg.budget, cfg.seed, reference);
    state.sample_unseen(spec, oracle, cfg.initial)?;
    state.record();
    Ok(state)
}

/// One NPENAS round: refit, mutate every pool member, evaluate the
/// `per_round` candidates with the highest predictions.
pub fn npenas_round(
    state: &mut SearchState,
    predictor: &mut dyn Predictor,
    spec: &SpaceSpec,
    oracle: &SyntheticOracle,
    cfg: &SearchConfig,
) -> Result<(), SearchError> {
    let (graphs, perf): (Vec<ArchGraph>, Vec<f64>) = state.pool.iter().cloned().unzip();
    predictor.fit(&graphs, &perf)?;

    let mut candidates = Vec::new();
    let mut forms = HashSet::new();
    for parent in &graphs {
        for _ in 0..cfg.mutants_per_member {
            // re-mutate duplicates within the retry budget
            for _ in 0..cfg.max_retries {
                let (child, _) = mutate_with(parent, spec, &mut state.rng, cfg.max_retries)?;
                let form = canonical_form(&child)?;
                if !state.seen.contains(&form) && forms.insert(form) {
                    candidates.push(child);
                    break;
                }
            }
        }
    }
    let scores = predictor.predict(&candidates)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let want = cfg.per_round.min(state.budget - state.pool.len());
    let mut taken = 0;
    let mut chosen: Vec<Option<ArchGraph>> = candidates.into_iter().map(Some).collect();
    for i in order {
        if taken == want {
            break;
        }
        if state.evaluate(chosen[i].take().expect("each candidate once"), oracle)? {
            taken += 1;
        }
    }
    if taken < want {
        state.sample_unseen(spec, oracle, want - taken)?;
    }
    state.round += 1;
    state.record();
    Ok(())
}

/// Runs NPENAS from a fresh random pool until the budget is spent.
pub fn run_npenas(
    spec: &SpaceSpec,
    oracle: &SyntheticOracle,
    predictor: &mut dyn Predictor,
    cfg: &SearchConfig,
    reference: f64,
) -> Result<SearchState, SearchError> {
    let mut state = init_search(spec, oracle, cfg, reference)?;
    while !state.is_done() {
        npenas_round(&mut state, predictor, spec, oracle, cfg)?;
    }
    Ok(state)
}

/// Uniform sampling of `cfg.budget` unseen architectures, traced every
/// `cfg.per_round` evaluations.
pub fn random_search(
    spec: &SpaceSpec,
    oracle: &SyntheticOracle,
    cfg: &SearchConfig,
    reference: f64,
) -> Result<SearchState, SearchError> {
    cfg.validate()?;
    let mut state = SearchState::new(cfg.budget, cfg.seed, reference);
    state.sample_unseen(spec, oracle, cfg.initial)?;
    state.record();
    while !state.is_done() {
        state.sample_unseen(spec, oracle, cfg.per_round)?;
        state.round += 1;
        state.record();
    }
    Ok(state)
}

/// Writes `round,pool_size,best,regret` after `# ` header lines.
pub fn write_trace_csv<W: Write>(mut out: W, header: &[String], trace: &[TraceRow]) -> std::io::Result<()> {
    for h in header {
        writeln!(out, "# {h}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "pool_size", "best", "regret"])?;
    for r in trace {
        w.write_record([
            r.round.to_string(),
            r.pool_size.to_string(),
            r.best.to_string(),
            r.regret.to_string(),
        ])?;
    }
    w.flush()
}
