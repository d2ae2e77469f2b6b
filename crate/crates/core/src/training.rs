//! Pre-training on flow surrogates and proxy scores, then fine-tuning the
//! regressor on a handful of labeled architectures.

use std::io::Write;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archgraph::ArchGraph;
use crate::benchdata::BenchDataset;
use crate::diffmath::{AdamW, AdamWConfig, DiffError, Matrix, ParamStore, Tape, Var};
use crate::encoder::{EncoderError, EncoderModel, GraphBatch};
use crate::evalmetrics::{kendall_tau, MetricError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("record `{id}` has no cached surrogate")]
    MissingSurrogates { id: String },
    #[error("record `{id}` has no proxy score but the auxiliary loss is enabled")]
    MissingProxyScores { id: String },
    #[error("record `{id}` has no performance label")]
    MissingLabels { id: String },
    #[error("need at least 2 labeled architectures, got {got}")]
    TooFewLabeled { got: usize },
    #[error("need at least 2 items, got {got}")]
    TooFewItems { got: usize },
    #[error("length mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Loss weights `(reconstruction, auxiliary)` searched over in practice.
pub const LAMBDA_PRESETS: [(f64, f64); 3] = [(0.5, 0.5), (1.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 1.0 / 3.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub lambda_rec: f64,
    pub lambda_aux: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Restrict the pre-training pool to the train split.
    pub train_only: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lambda_rec: 0.5,
            lambda_aux: 0.5,
            margin: 0.1,
            batch_size: 256,
            epochs: 200,
            lr: 1e-3,
            weight_decay: 1e-6,
            seed: 97,
            train_only: false,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lambda_rec >= 0.0 && self.lambda_aux >= 0.0) || self.lambda_rec + self.lambda_aux <= 0.0 {
            return bad("loss weights must be non-negative with a positive sum");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub margin: f64,
    /// Fraction of the train split that is labeled.
    pub train_ratio: f64,
    pub epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            train_ratio: 0.01,
            epochs: 300,
            patience: 100,
            lr: 1e-3,
            weight_decay: 1e-6,
            seed: 97,
        }
    }
}

impl FinetuneConfig {
    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// `Σ (s − ŝ)²`.
pub fn reconstruction_loss(pred: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    if pred.len() != target.len() {
        return Err(TrainError::ShapeMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Ordered pairs `(i, j)` with `targets[i] > targets[j]`.
pub fn ranked_pairs(targets: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, ti) in targets.iter().enumerate() {
        for (j, tj) in targets.iter().enumerate() {
            if ti > tj {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// `Σ_{targets[i] > targets[j]} max(0, margin − (scores[i] − scores[j]))`.
pub fn margin_ranking_loss(scores: &[f64], targets: &[f64], margin: f64) -> Result<f64, TrainError> {
    if scores.len() != targets.len() {
        return Err(TrainError::ShapeMismatch {
            left: scores.len(),
            right: targets.len(),
        });
    }
    if scores.len() < 2 {
        return Err(TrainError::TooFewItems { got: scores.len() });
    }
    Ok(ranked_pairs(targets)
        .into_iter()
        .map(|(i, j)| (margin - (scores[i] - scores[j])).max(0.0))
        .sum())
}

/// Batch mean of per-row squared error between `pred` and `target`.
pub fn tape_reconstruction_loss(tape: &mut Tape, pred: Var, target: Matrix) -> Result<Var, TrainError> {
    let rows = target.rows().max(1) as f64;
    let t = tape.constant(target);
    let diff = tape.sub(pred, t)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scalar_mul(total, 1.0 / rows))
}

/// Margin ranking loss of the column `scores`; `None` when every target ties.
pub fn tape_margin_loss(
    tape: &mut Tape,
    scores: Var,
    targets: &[f64],
    margin: f64,
) -> Result<Option<Var>, TrainError> {
    let pairs = ranked_pairs(targets);
    if pairs.is_empty() {
        return Ok(None);
    }
    let diff = tape.pair_diff(scores, Arc::new(pairs))?;
    let neg = tape.scalar_mul(diff, -1.0);
    let shifted = tape.add_scalar(neg, margin);
    let hinge = tape.relu(shifted);
    Ok(Some(tape.sum(hinge)))
}

/// Per-dimension z-scoring of surrogates; zero spread is treated as one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SurrogateNormalizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let k = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; k];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; k];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = std
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub rec: f64,
    pub aux: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub trace: Vec<EpochLoss>,
    pub normalizer: SurrogateNormalizer,
}

/// Writes the loss trace as `epoch,l_rec,l_aux,l_total` after a `# ` header.
pub fn write_loss_csv<W: Write>(out: W, header: &str, trace: &[EpochLoss]) -> std::io::Result<()> {
    let mut out = out;
    writeln!(out, "# {header}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "l_rec", "l_aux", "l_total"])?;
    for e in trace {
        w.write_record([
            e.epoch.to_string(),
            e.rec.to_string(),
            e.aux.to_string(),
            e.total.to_string(),
        ])?;
    }
    w.flush()
}

/// Label-free pre-training. Performance labels are never read.
pub fn pretrain(
    model: &mut EncoderModel,
    dataset: &BenchDataset,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, TrainError> {
    cfg.validate()?;
    let pool: Vec<usize> = if cfg.train_only {
        dataset.splits.train.clone()
    } else {
        (0..dataset.len()).collect()
    };
    if pool.is_empty() {
        return Err(TrainError::TooFewItems { got: 0 });
    }
    let mut surrogates = Vec::with_capacity(pool.len());
    let mut proxies = Vec::with_capacity(pool.len());
    for &i in &pool {
        let r = &dataset.records[i];
        let s = r
            .surrogate
            .as_ref()
            .ok_or_else(|| TrainError::MissingSurrogates { id: r.id.clone() })?;
        if s.len() != model.surrogate_dim() {
            return Err(TrainError::ShapeMismatch {
                left: s.len(),
                right: model.surrogate_dim(),
            });
        }
        surrogates.push(s.values());
        match r.proxy {
            Some(c) => proxies.push(c),
            None if cfg.lambda_aux > 0.0 => return Err(TrainError::MissingProxyScores { id: r.id.clone() }),
            None => proxies.push(0.0),
        }
    }
    let normalizer = SurrogateNormalizer::fit(&surrogates);
    let targets: Vec<Vec<f64>> = surrogates.iter().map(|s| normalizer.apply(s)).collect();
    let k = model.surrogate_dim();

    let mut opt = AdamW::new(cfg.optimizer(), model.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut tape = Tape::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut rec_sum, mut aux_sum, mut tot_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            tape.reset();
            let bound = model.params().bind(&mut tape);
            let batch = GraphBatch::from_graphs(chunk.iter().map(|&j| &dataset.records[pool[j]].graph))?;
            let z = model.encode(&mut tape, &bound, &batch)?;

            let mut terms: Vec<Var> = Vec::new();
            let mut rec_val = 0.0;
            if cfg.lambda_rec > 0.0 {
                let pred = model.decode_surrogate(&mut tape, &bound, z)?;
                let data = chunk.iter().flat_map(|&j| targets[j].iter().copied()).collect();
                let rec = tape_reconstruction_loss(&mut tape, pred, Matrix::from_vec(chunk.len(), k, data)?)?;
                rec_val = tape.value(rec).item();
                terms.push(tape.scalar_mul(rec, cfg.lambda_rec));
            }
            let mut aux_val = 0.0;
            if cfg.lambda_aux > 0.0 {
                let scores = model.predict_proxy(&mut tape, &bound, z)?;
                let t: Vec<f64> = chunk.iter().map(|&j| proxies[j]).collect();
                if let Some(aux) = tape_margin_loss(&mut tape, scores, &t, cfg.margin)? {
                    aux_val = tape.value(aux).item();
                    terms.push(tape.scalar_mul(aux, cfg.lambda_aux));
                }
            }
            let Some(&first) = terms.first() else { continue };
            let mut loss = first;
            for &t in &terms[1..] {
                loss = tape.add(loss, t)?;
            }
            let total = tape.value(loss).item();
            let mut grads = tape.backward(loss)?;
            let g = model.params().collect_grads(&bound, &mut grads);
            opt.step(model.params_mut(), &g)?;
            rec_sum += rec_val;
            aux_sum += aux_val;
            tot_sum += total;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        let e = EpochLoss {
            epoch,
            rec: rec_sum / b,
            aux: aux_sum / b,
            total: tot_sum / b,
        };
        log::debug!("pretrain epoch {epoch}: rec {:.5} aux {:.5} total {:.5}", e.rec, e.aux, e.total);
        trace.push(e);
    }
    Ok(PretrainOutcome { trace, normalizer })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Validation tau of the kept parameters; `None` without a validation set.
    pub best_val_tau: Option<f64>,
    pub losses: Vec<f64>,
}

/// The labeled subset for fine-tuning: `round(train_ratio·|train|)`
/// indices drawn from the train split, at least two when available.
pub fn labeled_subset(dataset: &BenchDataset, cfg: &FinetuneConfig) -> Vec<usize> {
    let train = &dataset.splits.train;
    let count = ((cfg.train_ratio * train.len() as f64).round() as usize)
        .max(2)
        .min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked: Vec<usize> = train.choose_multiple(&mut rng, count).copied().collect();
    picked.sort_unstable();
    picked
}

fn labels(dataset: &BenchDataset, indices: &[usize]) -> Result<Vec<f64>, TrainError> {
    indices
        .iter()
        .map(|&i| {
            dataset.performance(i).ok_or_else(|| TrainError::MissingLabels {
                id: dataset.records[i].id.clone(),
            })
        })
        .collect()
}

/// Fine-tunes on a seeded labeled subset of the train split with early
/// stopping on the validation split.
pub fn finetune(
    model: &mut EncoderModel,
    dataset: &BenchDataset,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome, TrainError> {
    let subset = labeled_subset(dataset, cfg);
    let train_graphs: Vec<ArchGraph> = subset.iter().map(|&i| dataset.records[i].graph.clone()).collect();
    let train_labels = labels(dataset, &subset)?;
    let val = &dataset.splits.validation;
    let validation = if val.len() >= 2 {
        Some((
            val.iter().map(|&i| dataset.records[i].graph.clone()).collect::<Vec<_>>(),
            labels(dataset, val)?,
        ))
    } else {
        None
    };
    finetune_graphs(
        model,
        &train_graphs,
        &train_labels,
        validation.as_ref().map(|(g, y)| (g.as_slice(), y.as_slice())),
        cfg,
    )
}

/// Full-batch margin-ranking fine-tuning of the encoder and regressor.
/// With a validation set the parameters of the best validation tau are kept.
pub fn finetune_graphs(
    model: &mut EncoderModel,
    graphs: &[ArchGraph],
    labels: &[f64],
    validation: Option<(&[ArchGraph], &[f64])>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome, TrainError> {
    if graphs.len() != labels.len() {
        return Err(TrainError::ShapeMismatch {
            left: graphs.len(),
            right: labels.len(),
        });
    }
    if graphs.len() < 2 {
        return Err(TrainError::TooFewLabeled { got: graphs.len() });
    }
    let batch = GraphBatch::from_graphs(graphs)?;
    let mut opt = AdamW::new(cfg.optimizer(), model.params())?;
    let val_tau = |m: &EncoderModel| -> Result<Option<f64>, TrainError> {
        match validation {
            Some((g, y)) => match kendall_tau(y, &m.score(g)?) {
                Ok(t) => Ok(Some(t)),
                Err(MetricError::AllTied) => Ok(Some(0.0)),
                Err(e) => Err(e.into()),
            },
            None => Ok(None),
        }
    };

    let mut best: Option<(f64, usize, ParamStore)> = val_tau(model)?.map(|t| (t, 0, model.params().clone()));
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut tape = Tape::new();
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        tape.reset();
        let bound = model.params().bind(&mut tape);
        let z = model.encode(&mut tape, &bound, &batch)?;
        let y = model.predict_performance(&mut tape, &bound, z)?;
        let grads = match tape_margin_loss(&mut tape, y, labels, cfg.margin)? {
            Some(loss) => {
                losses.push(tape.value(loss).item());
                let mut g = tape.backward(loss)?;
                model.params().collect_grads(&bound, &mut g)
            }
            None => {
                losses.push(0.0);
                model.params().iter().map(|(_, m)| Matrix::zeros(m.rows(), m.cols())).collect()
            }
        };
        opt.step(model.params_mut(), &grads)?;

        if let Some(tau) = val_tau(model)? {
            let (best_tau, best_epoch, _) = best.as_ref().expect("set with validation");
            if tau > *best_tau {
                best = Some((tau, epoch, model.params().clone()));
            } else if epoch - best_epoch >= cfg.patience {
                break;
            }
        }
    }
    let (best_val_tau, best_epoch) = match best {
        Some((tau, epoch, params)) => {
            *model.params_mut() = params;
            (Some(tau), epoch)
        }
        None => (None, epochs_run),
    };
    Ok(FinetuneOutcome {
        epochs_run,
        best_epoch,
        best_val_tau,
        losses,
    })
}

/// Kendall tau between true labels and regressor scores on `indices`.
pub fn evaluate_tau(model: &EncoderModel, dataset: &BenchDataset, indices: &[usize]) -> Result<f64, TrainError> {
    let graphs: Vec<ArchGraph> = indices.iter().map(|&i| dataset.records[i].graph.clone()).collect();
    let truth = labels(dataset, indices)?;
    Ok(kendall_tau(&truth, &model.score(&graphs)?)?)
}
