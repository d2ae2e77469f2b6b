//! The `fgp` command line: `generate`, `surrogate`, `pretrain`, `finetune`,
//! `eval`, `nas` and `pca`.
//!
//! Every command reads an optional JSON [`RunConfig`] (unknown keys are
//! rejected), applies flag overrides, and writes its outputs plus a
//! `config.json` snapshot into a fresh run directory. Files are written to
//! a temporary name and renamed into place. Inputs are loaded before the run
//! directory is created, so a failed command leaves nothing behind.
//!
//! The run seed resolves as `--seed`, then `seed` in the config, then 97.
//! It drives generation, splits, initialisation, training and search, and
//! is echoed in every output. The surrogate and oracle keep their own seeds
//! because they define the experiment rather than one run of it.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::benchdata::{BenchDataset, OracleConfig, SpaceFamily, SpaceSpec, SyntheticOracle};
use crate::diffmath::Checkpoint;
use crate::encoder::{EncoderConfig, EncoderModel};
use crate::evalmetrics::{pca_project, EvalReport};
use crate::nassearch::{
    random_search, reference_best, run_npenas, write_trace_csv, EncoderPredictor, OraclePredictor, Predictor,
    SearchConfig,
};
use crate::surrogate::{write_surrogates_csv, SurrogateConfig, SurrogateParams};
use crate::training::{finetune, labeled_subset, pretrain, write_loss_csv, FinetuneConfig, PretrainConfig};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 97;
/// Parent directory for run directories when `--out` is absent.
pub const OUT_DIR_ENV: &str = "FGP_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub count: usize,
    pub train_frac: f64,
    pub val_count: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            count: 2000,
            train_frac: 0.5,
            val_count: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NasSection {
    pub search: SearchConfig,
    /// Random architectures sampled to estimate the optimum for regret.
    pub reference_samples: usize,
    /// Per-round fine-tuning of the encoder predictor.
    pub predictor: FinetuneConfig,
}

impl Default for NasSection {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            reference_samples: 20_000,
            predictor: FinetuneConfig {
                epochs: 60,
                ..FinetuneConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub percents: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            percents: vec![1.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

/// All settings of a run. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub space: SpaceSpec,
    pub generate: GenerateSection,
    pub oracle: OracleConfig,
    pub surrogate: SurrogateConfig,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub nas: NasSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the seed resolution order and copies the run seed into every
    /// per-run section. Returns the resolved seed.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> u64 {
        let seed = flag.or(self.seed).unwrap_or(DEFAULT_SEED);
        self.seed = Some(seed);
        self.encoder.seed = seed;
        self.pretrain.seed = seed;
        self.finetune.seed = seed;
        self.nas.search.seed = seed;
        self.nas.predictor.seed = seed;
        seed
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run config.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; defaults to $FGP_OUT_DIR (or `runs`)/<unix-time>-seed<seed>.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for batch work such as surrogate computation.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// Reconstruction plus proxy ranking.
    Full,
    /// Reconstruction only.
    Rec,
    /// Proxy ranking only.
    Aux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    Encoder,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Cell201Like,
    Cell101Like,
}

#[derive(Debug, Parser)]
#[command(name = "fgp", version, about = "Flow-based generative pre-training for architecture encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a labeled synthetic benchmark with train/test/validation splits.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
    },
    /// Attach flow surrogates to a dataset and export them as CSV.
    Surrogate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
    /// Pre-train an encoder without performance labels.
    Pretrain {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Override the loss weights with an ablation variant.
        #[arg(long, value_enum)]
        variant: Option<Variant>,
    },
    /// Fine-tune a checkpoint on the labeled subset of the train split.
    Finetune {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Start from a freshly initialised encoder instead of a checkpoint.
        #[arg(long)]
        baseline: bool,
    },
    /// Score predictions on the test split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// CSV with `id,prediction` columns, used instead of a checkpoint.
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
    },
    /// Predictor-guided evolutionary search with a random-search control.
    Nas {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Use a freshly initialised encoder predictor.
        #[arg(long)]
        baseline: bool,
        #[arg(long, value_enum, default_value = "encoder")]
        predictor: PredictorKind,
    },
    /// Project flow surrogates onto two principal components.
    Pca {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Generate { common, .. }
            | Command::Surrogate { common, .. }
            | Command::Pretrain { common, .. }
            | Command::Finetune { common, .. }
            | Command::Eval { common, .. }
            | Command::Nas { common, .. }
            | Command::Pca { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Surrogate { .. } => "surrogate",
            Command::Pretrain { .. } => "pretrain",
            Command::Finetune { .. } => "finetune",
            Command::Eval { .. } => "eval",
            Command::Nas { .. } => "nas",
            Command::Pca { .. } => "pca",
        }
    }
}

/// What a command wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub command: &'static str,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub outputs: Vec<PathBuf>,
}

/// Collects outputs in memory until the command has succeeded.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.add(name, text.into_bytes());
    }

    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn run_dir(out: Option<&Path>, seed: u64) -> PathBuf {
    if let Some(dir) = out {
        return dir.to_path_buf();
    }
    let parent = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    parent.join(format!("{secs}-seed{seed}"))
}

fn required(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let path = flag
        .clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or config `paths.{what}`)")))?;
    if !path.is_file() {
        return Err(Error::Config(format!("{what} `{}` does not exist", path.display())));
    }
    Ok(path)
}

fn load_dataset(path: &Path) -> Result<BenchDataset> {
    BenchDataset::load_jsonl(path).map_err(|e| match e {
        crate::benchdata::BenchError::Io(source) => Error::io(path, source),
        other => other.into(),
    })
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, EncoderModel)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_json(&text)?;
    let model = EncoderModel::from_checkpoint(&ckpt)?;
    Ok((ckpt, model))
}

/// Computes surrogates for records that lack them.
fn ensure_surrogates(ds: &mut BenchDataset, cfg: &SurrogateConfig) -> Result<()> {
    if ds.records.iter().any(|r| r.surrogate.is_none()) {
        let params = SurrogateParams::init(ds.vocab.len(), *cfg)?;
        ds.attach_surrogates(&params)?;
    }
    Ok(())
}

fn jsonl_bytes(ds: &BenchDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf)?;
    Ok(buf)
}

fn header_map(seed: u64, stage: &str) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    m.insert("seed".into(), seed.into());
    m.insert("stage".into(), stage.into());
    m
}

/// Parses argv and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{} (seed {}) -> {}", summary.command, summary.seed, summary.run_dir.display());
            for p in &summary.outputs {
                println!("  {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<RunSummary> {
    let common = cli.command.common().clone();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cfg.resolve_seed(common.seed);
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }

    let mut out = Outputs::new();
    match &cli.command {
        Command::Generate { count, family, .. } => {
            if let Some(f) = family {
                cfg.space = SpaceSpec::for_family(match f {
                    FamilyArg::Cell201Like => SpaceFamily::Cell201Like,
                    FamilyArg::Cell101Like => SpaceFamily::Cell101Like,
                });
            }
            if let Some(c) = count {
                cfg.generate.count = *c;
            }
            cmd_generate(&cfg, seed, &mut out)?;
        }
        Command::Surrogate { dataset, .. } => {
            let path = required(dataset, &cfg.paths.dataset, "dataset")?;
            cfg.paths.dataset = Some(path);
            cmd_surrogate(&cfg, seed, &mut out)?;
        }
        Command::Pretrain { dataset, variant, .. } => {
            let path = required(dataset, &cfg.paths.dataset, "dataset")?;
            cfg.paths.dataset = Some(path);
            match variant {
                Some(Variant::Full) | None => {}
                Some(Variant::Rec) => (cfg.pretrain.lambda_rec, cfg.pretrain.lambda_aux) = (1.0, 0.0),
                Some(Variant::Aux) => (cfg.pretrain.lambda_rec, cfg.pretrain.lambda_aux) = (0.0, 1.0),
            }
            cmd_pretrain(&cfg, seed, &mut out)?;
        }
        Command::Finetune {
            dataset,
            checkpoint,
            baseline,
            ..
        } => {
            cfg.paths.dataset = Some(required(dataset, &cfg.paths.dataset, "dataset")?);
            cfg.paths.checkpoint = if *baseline {
                None
            } else {
                Some(required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?)
            };
            cmd_finetune(&cfg, seed, &mut out)?;
        }
        Command::Eval {
            dataset,
            checkpoint,
            predictions,
            ..
        } => {
            cfg.paths.dataset = Some(required(dataset, &cfg.paths.dataset, "dataset")?);
            if predictions.is_some() || (checkpoint.is_none() && cfg.paths.predictions.is_some()) {
                cfg.paths.predictions = Some(required(predictions, &cfg.paths.predictions, "predictions")?);
                cfg.paths.checkpoint = None;
            } else {
                cfg.paths.checkpoint = Some(required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?);
                cfg.paths.predictions = None;
            }
            cmd_eval(&cfg, seed, &mut out)?;
        }
        Command::Nas {
            checkpoint,
            baseline,
            predictor,
            ..
        } => {
            cfg.paths.checkpoint = match predictor {
                PredictorKind::Encoder if !*baseline => {
                    Some(required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?)
                }
                _ => None,
            };
            cmd_nas(&cfg, seed, *predictor, &mut out)?;
        }
        Command::Pca { dataset, .. } => {
            cfg.paths.dataset = Some(required(dataset, &cfg.paths.dataset, "dataset")?);
            cmd_pca(&cfg, seed, &mut out)?;
        }
    }
    out.add_json("config.json", &cfg);
    let dir = run_dir(common.out.as_deref(), seed);
    let outputs = out.commit(&dir)?;
    Ok(RunSummary {
        command: cli.command.name(),
        seed,
        run_dir: dir,
        outputs,
    })
}

fn dataset_path(cfg: &RunConfig) -> &Path {
    cfg.paths.dataset.as_deref().expect("resolved by run")
}

fn cmd_generate(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let g = &cfg.generate;
    if g.count == 0 {
        return Err(Error::Config("generate.count must be at least 1".into()));
    }
    let mut ds = BenchDataset::generate(&cfg.space, g.count, seed)?;
    ds.label_with(&SyntheticOracle::new(&ds.vocab, cfg.oracle.clone()))?;
    if g.train_frac > 0.0 || g.val_count > 0 {
        ds.make_splits(g.train_frac, g.val_count, seed)?;
    }
    log::info!("generated {} architectures", ds.len());
    out.add("dataset.jsonl", jsonl_bytes(&ds)?);
    Ok(())
}

fn cmd_surrogate(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let mut ds = load_dataset(dataset_path(cfg))?;
    let params = SurrogateParams::init(ds.vocab.len(), cfg.surrogate)?;
    ds.attach_surrogates(&params)?;
    let rows: Vec<_> = ds
        .records
        .iter()
        .map(|r| (r.id.clone(), r.surrogate.clone().expect("just attached")))
        .collect();
    let s = &cfg.surrogate;
    let header = format!(
        "seed={seed} k={} sigma={} alpha={} surrogate_seed={} aggregation={:?}",
        s.k, s.sigma, s.alpha, s.seed, s.aggregation
    );
    let mut csv = Vec::new();
    write_surrogates_csv(&mut csv, &header, &rows).map_err(|e| Error::io("surrogates.csv", e))?;
    out.add("dataset.jsonl", jsonl_bytes(&ds)?);
    out.add("surrogates.csv", csv);
    Ok(())
}

fn cmd_pretrain(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let mut ds = load_dataset(dataset_path(cfg))?;
    ensure_surrogates(&mut ds, &cfg.surrogate)?;
    let k = ds.k().expect("surrogates attached");
    let mut model = EncoderModel::new(cfg.encoder.clone(), ds.vocab.len(), k)?;
    let outcome = pretrain(&mut model, &ds, &cfg.pretrain)?;
    let mut header = header_map(seed, "pretrained");
    header.insert("normalizer".into(), serde_json::to_value(&outcome.normalizer).expect("serializes"));
    header.insert("pretrain".into(), serde_json::to_value(&cfg.pretrain).expect("serializes"));
    header.insert("label_reads".into(), ds.label_reads().into());
    let ckpt = model.to_checkpoint(header);
    let mut csv = Vec::new();
    let head = format!(
        "seed={seed} lambda_rec={} lambda_aux={}",
        cfg.pretrain.lambda_rec, cfg.pretrain.lambda_aux
    );
    write_loss_csv(&mut csv, &head, &outcome.trace).map_err(|e| Error::io("loss.csv", e))?;
    out.add("checkpoint.json", ckpt.to_json().into_bytes());
    out.add("loss.csv", csv);
    Ok(())
}

#[derive(Serialize)]
struct FinetuneSummary {
    seed: u64,
    baseline: bool,
    labeled_ids: Vec<String>,
    epochs_run: usize,
    best_epoch: usize,
    best_val_tau: Option<f64>,
}

fn cmd_finetune(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let ds = load_dataset(dataset_path(cfg))?;
    let mut model = match &cfg.paths.checkpoint {
        Some(path) => load_checkpoint(path)?.1,
        None => EncoderModel::new(cfg.encoder.clone(), ds.vocab.len(), cfg.surrogate.k)?,
    };
    if model.num_ops() != ds.vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint expects {} ops, dataset vocabulary has {}",
            model.num_ops(),
            ds.vocab.len()
        )));
    }
    let outcome = finetune(&mut model, &ds, &cfg.finetune)?;
    let baseline = cfg.paths.checkpoint.is_none();
    let mut header = header_map(seed, "finetuned");
    header.insert("baseline".into(), baseline.into());
    header.insert("finetune".into(), serde_json::to_value(&cfg.finetune).expect("serializes"));
    let summary = FinetuneSummary {
        seed,
        baseline,
        labeled_ids: labeled_subset(&ds, &cfg.finetune)
            .into_iter()
            .map(|i| ds.records[i].id.clone())
            .collect(),
        epochs_run: outcome.epochs_run,
        best_epoch: outcome.best_epoch,
        best_val_tau: outcome.best_val_tau,
    };
    out.add("checkpoint.json", model.to_checkpoint(header).to_json().into_bytes());
    out.add_json("finetune.json", &summary);
    Ok(())
}

fn read_predictions(path: &Path) -> Result<std::collections::HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut map = std::collections::HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let (Some(id), Some(value)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Config(format!("{}: row {} needs id,prediction", path.display(), i + 1)));
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        map.insert(id.trim().to_string(), value);
    }
    Ok(map)
}

fn cmd_eval(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let ds = load_dataset(dataset_path(cfg))?;
    let indices: Vec<usize> = if ds.splits.test.is_empty() {
        (0..ds.len()).filter(|&i| ds.records[i].has_performance()).collect()
    } else {
        ds.splits.test.clone()
    };
    let pred: Vec<f64> = match (&cfg.paths.predictions, &cfg.paths.checkpoint) {
        (Some(path), _) => {
            let map = read_predictions(path)?;
            indices
                .iter()
                .map(|&i| {
                    let id = &ds.records[i].id;
                    map.get(id)
                        .copied()
                        .ok_or_else(|| Error::Config(format!("no prediction for `{id}`")))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(path)) => {
            let (_, model) = load_checkpoint(path)?;
            let graphs: Vec<_> = indices.iter().map(|&i| ds.records[i].graph.clone()).collect();
            model.score(&graphs)?
        }
        (None, None) => return Err(Error::Config("eval needs a checkpoint or predictions".into())),
    };
    let truth: Vec<f64> = indices
        .iter()
        .map(|&i| {
            ds.performance(i)
                .ok_or_else(|| Error::Config(format!("record `{}` has no performance", ds.records[i].id)))
        })
        .collect::<Result<_>>()?;
    let report = EvalReport::compute(&truth, &pred, &cfg.eval.percents, seed)?;
    out.add_json("eval.json", &report);
    Ok(())
}

#[derive(Serialize)]
struct NasSummary {
    seed: u64,
    predictor: String,
    warm_start: bool,
    budget: usize,
    reference: f64,
    npenas_best: f64,
    npenas_final_regret: f64,
    random_best: f64,
    random_final_regret: f64,
}

fn cmd_nas(cfg: &RunConfig, seed: u64, kind: PredictorKind, out: &mut Outputs) -> Result<()> {
    cfg.space.check()?;
    let vocab = cfg.space.vocab();
    let oracle = SyntheticOracle::new(&vocab, cfg.oracle.clone());
    let (mut predictor, label, warm): (Box<dyn Predictor + '_>, &str, bool) = match kind {
        PredictorKind::Oracle => (Box::new(OraclePredictor { oracle: &oracle }), "oracle", false),
        PredictorKind::Encoder => {
            let (model, warm) = match &cfg.paths.checkpoint {
                Some(path) => (load_checkpoint(path)?.1, true),
                None => (EncoderModel::new(cfg.encoder.clone(), vocab.len(), cfg.surrogate.k)?, false),
            };
            if model.num_ops() != vocab.len() {
                return Err(Error::Config("checkpoint vocabulary does not match the space".into()));
            }
            let p = EncoderPredictor {
                model,
                finetune: cfg.nas.predictor.clone(),
            };
            (Box::new(p), "encoder", warm)
        }
    };
    let reference = reference_best(&cfg.space, &oracle, cfg.nas.reference_samples, cfg.oracle.seed)?;
    let search = run_npenas(&cfg.space, &oracle, predictor.as_mut(), &cfg.nas.search, reference)?;
    let control = random_search(&cfg.space, &oracle, &cfg.nas.search, reference)?;

    let header = vec![
        format!("seed={seed} predictor={label} warm_start={warm} reference={reference}"),
        "predictor initialised once per search, then fine-tuned on the whole pool every round".to_string(),
    ];
    let mut trace = Vec::new();
    write_trace_csv(&mut trace, &header, &search.trace).map_err(|e| Error::io("trace.csv", e))?;
    let mut rtrace = Vec::new();
    write_trace_csv(&mut rtrace, &[format!("seed={seed} random search")], &control.trace)
        .map_err(|e| Error::io("random_trace.csv", e))?;
    let summary = NasSummary {
        seed,
        predictor: label.to_string(),
        warm_start: warm,
        budget: cfg.nas.search.budget,
        reference,
        npenas_best: search.best(),
        npenas_final_regret: search.final_regret(),
        random_best: control.best(),
        random_final_regret: control.final_regret(),
    };
    out.add("trace.csv", trace);
    out.add("random_trace.csv", rtrace);
    out.add_json("nas.json", &summary);
    Ok(())
}

fn cmd_pca(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let mut ds = load_dataset(dataset_path(cfg))?;
    ensure_surrogates(&mut ds, &cfg.surrogate)?;
    let vectors: Vec<Vec<f64>> = ds
        .records
        .iter()
        .map(|r| r.surrogate.as_ref().expect("attached").values().to_vec())
        .collect();
    let proj = pca_project(&vectors, 2)?;
    let mut buf = format!(
        "# seed={seed} explained_variance_ratio={},{}\n",
        proj.explained_variance_ratio[0], proj.explained_variance_ratio[1]
    )
    .into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["id", "x", "y", "performance"]).map_err(|e| Error::Config(e.to_string()))?;
        for (i, (r, p)) in ds.records.iter().zip(&proj.points).enumerate() {
            let perf = ds.performance(i).map_or_else(String::new, |v| v.to_string());
            w.write_record([r.id.clone(), p[0].to_string(), p[1].to_string(), perf])
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("pca.csv", e))?;
    }
    out.add("pca.csv", buf);
    Ok(())
}
