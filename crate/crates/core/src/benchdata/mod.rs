//! Synthetic cell benchmarks: space sampling, a seeded performance and
//! proxy oracle, JSONL storage and train/test/validation splits.
//!
//! Performance labels sit behind [`BenchDataset::performance`], which
//! counts every read. Pre-training code can assert the count stayed at zero.

mod canonical;
mod oracle;
mod space;

pub use canonical::{canonical_form, CanonicalForm};
pub use oracle::{OracleConfig, OracleScore, SyntheticOracle};
pub use space::{SpaceFamily, SpaceSpec, INPUT_OP, OUTPUT_OP};

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::archgraph::{ArchGraph, GraphError, OpVocabulary};
use crate::surrogate::{batch_surrogates, BatchError, FlowSurrogate, SurrogateParams};

pub const DATASET_SCHEMA: &str = "fgp-bench/1";

/// Consecutive duplicate draws tolerated before giving up on a space.
const MAX_DUPLICATE_STREAK: usize = 20_000;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: bad or missing field `{field}`")]
    Schema { line: usize, field: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("space exhausted after {found} unique graphs ({requested} requested)")]
    SpaceExhausted { requested: usize, found: usize },
    #[error("cannot split {records} records into {train} train and {val} validation with a non-empty test set")]
    InsufficientRecords { records: usize, train: usize, val: usize },
    #[error("invalid space: {0}")]
    Space(GraphError),
    #[error(transparent)]
    Surrogate(#[from] BatchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// The underlying graph error, if any.
    pub fn graph_error(&self) -> Option<&GraphError> {
        match self {
            BenchError::Graph { source, .. } | BenchError::Space(source) => Some(source),
            _ => None,
        }
    }
}

/// One architecture with optional labels and a cached surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchRecord {
    pub id: String,
    pub graph: ArchGraph,
    pub proxy: Option<f64>,
    pub surrogate: Option<FlowSurrogate>,
    performance: Option<f64>,
}

impl ArchRecord {
    pub fn new(id: impl Into<String>, graph: ArchGraph) -> Self {
        Self {
            id: id.into(),
            graph,
            proxy: None,
            surrogate: None,
            performance: None,
        }
    }

    pub fn with_performance(mut self, performance: Option<f64>) -> Self {
        self.performance = performance;
        self
    }

    pub fn has_performance(&self) -> bool {
        self.performance.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
}

/// Disjoint index sets into [`BenchDataset::records`], each ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Splits {
    fn of(&self, n: usize) -> Vec<Option<Split>> {
        let mut out = vec![None; n];
        for (set, tag) in [
            (&self.train, Split::Train),
            (&self.test, Split::Test),
            (&self.validation, Split::Validation),
        ] {
            for &i in set {
                out[i] = Some(tag);
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct BenchDataset {
    pub vocab: OpVocabulary,
    pub records: Vec<ArchRecord>,
    pub splits: Splits,
    pub provenance: Value,
    label_reads: AtomicUsize,
}

impl Clone for BenchDataset {
    fn clone(&self) -> Self {
        Self {
            vocab: self.vocab.clone(),
            records: self.records.clone(),
            splits: self.splits.clone(),
            provenance: self.provenance.clone(),
            label_reads: AtomicUsize::new(self.label_reads()),
        }
    }
}

/// Structural equality; the label read counter is ignored.
impl PartialEq for BenchDataset {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.records == other.records
            && self.splits == other.splits
            && self.provenance == other.provenance
    }
}

impl BenchDataset {
    pub fn new(vocab: OpVocabulary, records: Vec<ArchRecord>, provenance: Value) -> Self {
        Self {
            vocab,
            records,
            splits: Splits::default(),
            provenance,
            label_reads: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Surrogate length shared by the cached surrogates, if any.
    pub fn k(&self) -> Option<usize> {
        self.records.iter().find_map(|r| r.surrogate.as_ref().map(FlowSurrogate::len))
    }

    /// Reads the performance label of record `index`. Counted.
    pub fn performance(&self, index: usize) -> Option<f64> {
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        self.records[index].performance
    }

    /// Labels of `indices`, each read counted.
    pub fn performances(&self, indices: &[usize]) -> Vec<Option<f64>> {
        indices.iter().map(|&i| self.performance(i)).collect()
    }

    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }

    pub fn graphs(&self) -> Vec<ArchGraph> {
        self.records.iter().map(|r| r.graph.clone()).collect()
    }

    /// Samples `count` distinct (up to isomorphism) graphs of `spec`.
    pub fn generate(spec: &SpaceSpec, count: usize, seed: u64) -> Result<Self, BenchError> {
        spec.check().map_err(BenchError::Space)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut records = Vec::with_capacity(count);
        let mut streak = 0;
        while records.len() < count {
            let g = spec.sample(&mut rng);
            let form = canonical_form(&g).map_err(BenchError::Space)?;
            if seen.insert(form) {
                streak = 0;
                records.push(ArchRecord::new(format!("arch-{:05}", records.len()), g));
            } else {
                streak += 1;
                if streak >= MAX_DUPLICATE_STREAK {
                    return Err(BenchError::SpaceExhausted {
                        requested: count,
                        found: records.len(),
                    });
                }
            }
        }
        let provenance = serde_json::json!({
            "generator": { "space": spec, "count": count, "seed": seed }
        });
        Ok(Self::new(spec.vocab(), records, provenance))
    }

    /// Fills performance and proxy from `oracle`.
    pub fn label_with(&mut self, oracle: &SyntheticOracle) -> Result<(), GraphError> {
        for r in &mut self.records {
            let s = oracle.score(&r.graph)?;
            r.performance = Some(s.performance);
            r.proxy = Some(s.proxy);
        }
        if let Value::Object(map) = &mut self.provenance {
            map.insert(
                "oracle".into(),
                serde_json::to_value(oracle.config()).expect("oracle config serializes"),
            );
        }
        Ok(())
    }

    /// Computes and caches every record's flow surrogate.
    pub fn attach_surrogates(&mut self, params: &SurrogateParams) -> Result<(), BenchError> {
        let surrogates = batch_surrogates(&self.graphs(), params)?;
        for (r, s) in self.records.iter_mut().zip(surrogates) {
            r.surrogate = Some(s);
        }
        Ok(())
    }

    /// Seeded shuffle into `round(train_frac·n)` train records,
    /// `val_count` validation records and the remaining test records.
    pub fn make_splits(&mut self, train_frac: f64, val_count: usize, seed: u64) -> Result<(), BenchError> {
        let n = self.records.len();
        let train = (train_frac.clamp(0.0, 1.0) * n as f64).round() as usize;
        if train + val_count >= n {
            return Err(BenchError::InsufficientRecords {
                records: n,
                train,
                val: val_count,
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let sorted = |s: &[usize]| {
            let mut v = s.to_vec();
            v.sort_unstable();
            v
        };
        self.splits = Splits {
            train: sorted(&order[..train]),
            validation: sorted(&order[train..train + val_count]),
            test: sorted(&order[train + val_count..]),
        };
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), BenchError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), BenchError> {
        let header = Header {
            schema: DATASET_SCHEMA.to_string(),
            vocab: self.vocab.clone(),
            k: self.k(),
            provenance: self.provenance.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        let tags = self.splits.of(self.records.len());
        for (r, split) in self.records.iter().zip(tags) {
            let line = RecordLine {
                id: r.id.clone(),
                nodes: (0..r.graph.num_nodes())
                    .map(|v| self.vocab.name(r.graph.op(v)).unwrap_or("?").to_string())
                    .collect(),
                edges: r.graph.edges().to_vec(),
                performance: r.performance,
                proxy: r.proxy,
                surrogate: r.surrogate.as_ref().map(|s| s.values().to_vec()),
                split,
            };
            writeln!(w, "{}", serde_json::to_string(&line).expect("record serializes"))?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, BenchError> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, BenchError> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => {
                    return Err(BenchError::Schema {
                        line: 1,
                        field: "vocab".into(),
                    })
                }
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break parse_line(i + 1, &line)?;
                }
            }
        };
        let vocab = header.vocab;
        let mut records = Vec::new();
        let mut splits = Splits::default();
        let mut ids = HashMap::new();
        for (i, line) in lines {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine = parse_line(line_no, &line)?;
            let names: Vec<&str> = rec.nodes.iter().map(String::as_str).collect();
            let graph = ArchGraph::from_names(&vocab, &names, rec.edges)
                .map_err(|source| BenchError::Graph { line: line_no, source })?;
            if let (Some(k), Some(s)) = (header.k, &rec.surrogate) {
                if s.len() != k {
                    return Err(BenchError::Schema {
                        line: line_no,
                        field: "surrogate".into(),
                    });
                }
            }
            if ids.insert(rec.id.clone(), line_no).is_some() {
                return Err(BenchError::Schema {
                    line: line_no,
                    field: "id".into(),
                });
            }
            let idx = records.len();
            match rec.split {
                Some(Split::Train) => splits.train.push(idx),
                Some(Split::Test) => splits.test.push(idx),
                Some(Split::Validation) => splits.validation.push(idx),
                None => {}
            }
            records.push(ArchRecord {
                id: rec.id,
                graph,
                proxy: rec.proxy,
                surrogate: rec.surrogate.map(FlowSurrogate),
                performance: rec.performance,
            });
        }
        let mut ds = Self::new(vocab, records, header.provenance);
        ds.splits = splits;
        Ok(ds)
    }
}

/// Generates a dataset; see [`BenchDataset::generate`].
pub fn generate_space(spec: &SpaceSpec, count: usize, seed: u64) -> Result<BenchDataset, BenchError> {
    BenchDataset::generate(spec, count, seed)
}

fn parse_line<T: serde::de::DeserializeOwned>(line: usize, text: &str) -> Result<T, BenchError> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        if e.is_data() {
            // serde reports `missing field `x`` / `unknown field `x``
            let field = msg.split('`').nth(1).unwrap_or("?").to_string();
            if msg.contains("unknown op") || msg.contains("invalid vocabulary") {
                BenchError::Parse { line, message: msg }
            } else {
                BenchError::Schema { line, field }
            }
        } else {
            BenchError::Parse { line, message: msg }
        }
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(default = "default_schema")]
    schema: String,
    vocab: OpVocabulary,
    k: Option<usize>,
    #[serde(default)]
    provenance: Value,
}

fn default_schema() -> String {
    DATASET_SCHEMA.to_string()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
    performance: Option<f64>,
    proxy: Option<f64>,
    surrogate: Option<Vec<f64>>,
    #[serde(default)]
    split: Option<Split>,
}
