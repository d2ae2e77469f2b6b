//! End-to-end acceptance checks. One PASS/FAIL line per criterion is
//! written straight to stderr so it survives output capture.

mod common;

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fgp::archgraph::ArchGraph;
use fgp::benchdata::{BenchDataset, OracleConfig, SpaceSpec, SyntheticOracle};
use fgp::diffmath::{Matrix, ParamStore, Tape};
use fgp::encoder::{EncoderConfig, EncoderModel, GraphBatch};
use fgp::evalmetrics::{kendall_tau, precision_at_percent};
use fgp::nassearch::{random_search, reference_best, run_npenas, EncoderPredictor, SearchConfig};
use fgp::surrogate::{compute_surrogate, SurrogateConfig, SurrogateParams};
use fgp::training::{
    evaluate_tau, finetune, pretrain, tape_margin_loss, tape_reconstruction_loss, FinetuneConfig, PretrainConfig,
};

type Check = Result<String, String>;

fn report(id: usize, name: &str, elapsed: Duration, result: &Check) {
    let (status, detail) = match result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let line = format!("criterion {id} {status} [{name}] {detail} ({:.1}s)\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize, num_ops: usize) -> ArchGraph {
    let n = rng.random_range(1..=max_nodes);
    let ops: Vec<usize> = (0..n).map(|_| rng.random_range(0..num_ops)).collect();
    let p = rng.random_range(0.1..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    ArchGraph::from_ops(num_ops, &ops, edges).permuted(&perm)
}

fn permutation_invariance() -> Check {
    let params = SurrogateParams::init(5, SurrogateConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let g = random_dag(&mut rng, 16, 5);
        let s = compute_surrogate(&g, &params).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
            perm.shuffle(&mut rng);
            let t = compute_surrogate(&g.permuted(&perm), &params).map_err(|e| e.to_string())?;
            for (a, b) in s.values().iter().zip(t.values()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let detail = format!("200 graphs x 5 relabelings, max |diff| = {worst:.2e}");
    if worst <= 1e-9 { Ok(detail) } else { Err(detail) }
}

fn identity_conversion_oracle() -> Check {
    let cfg = SurrogateConfig {
        alpha: 1.0,
        ..SurrogateConfig::default()
    };
    let params = SurrogateParams::init(3, cfg).map_err(|e| e.to_string())?;
    let r = params.init_message().to_vec();
    let mut count = 0;
    let mut worst = 0.0f64;
    for n in 1..=5 {
        for edges in common::forward_dags(n) {
            let ops: Vec<usize> = (0..n).map(|v| v % 3).collect();
            let g = ArchGraph::from_ops(3, &ops, edges.clone());
            let s = compute_surrogate(&g, &params).map_err(|e| e.to_string())?;
            let paths = common::round_trip_paths(n, &edges) as f64;
            for (v, ri) in s.values().iter().zip(&r) {
                worst = worst.max((v - ri * paths).abs());
            }
            count += 1;
        }
    }
    let detail = format!("{count} DAGs with <= 5 nodes, max |s - r*paths| = {worst:.2e}");
    if count >= 50 && worst <= 1e-12 { Ok(detail) } else { Err(detail) }
}

/// Loss of one encoder composite, recomputed from `params`.
fn composite_loss(
    model: &EncoderModel,
    params: &ParamStore,
    batch: &GraphBatch,
    which: usize,
    surrogates: &Matrix,
    targets: &[f64],
) -> (f64, Vec<Matrix>, Vec<bool>) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let z = model.encode(&mut tape, &bound, batch).unwrap();
    let rec = |tape: &mut Tape| {
        let s = model.decode_surrogate(tape, &bound, z).unwrap();
        tape_reconstruction_loss(tape, s, surrogates.clone()).unwrap()
    };
    let loss = match which {
        0 => rec(&mut tape),
        1 => {
            let y = model.predict_performance(&mut tape, &bound, z).unwrap();
            tape_margin_loss(&mut tape, y, targets, 0.1).unwrap().unwrap()
        }
        2 => {
            let c = model.predict_proxy(&mut tape, &bound, z).unwrap();
            tape_margin_loss(&mut tape, c, targets, 0.1).unwrap().unwrap()
        }
        _ => {
            let r = rec(&mut tape);
            let c = model.predict_proxy(&mut tape, &bound, z).unwrap();
            let a = tape_margin_loss(&mut tape, c, targets, 0.1).unwrap().unwrap();
            let r = tape.scalar_mul(r, 0.5);
            let a = tape.scalar_mul(a, 0.5);
            tape.add(r, a).unwrap()
        }
    };
    let value = tape.value(loss).item();
    let pattern = tape.relu_pattern();
    let mut grads = tape.backward(loss).unwrap();
    (value, params.collect_grads(&bound, &mut grads), pattern)
}

/// Largest relative error between analytic and central-difference partials
/// of one composite, or `None` when a difference step crosses a ReLU kink.
fn check_composite(
    model: &EncoderModel,
    batch: &GraphBatch,
    which: usize,
    surrogates: &Matrix,
    targets: &[f64],
    checked: &mut usize,
) -> Option<f64> {
    let h = 1e-5;
    let (_, analytic, pattern) = composite_loss(model, model.params(), batch, which, surrogates, targets);
    let mut params = model.params().clone();
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        for j in 0..grad.data().len() {
            let orig = params.value_by_index(p).data()[j];
            params.value_mut_by_index(p).data_mut()[j] = orig + h;
            let (up, _, pu) = composite_loss(model, &params, batch, which, surrogates, targets);
            params.value_mut_by_index(p).data_mut()[j] = orig - h;
            let (down, _, pd) = composite_loss(model, &params, batch, which, surrogates, targets);
            params.value_mut_by_index(p).data_mut()[j] = orig;
            if pu != pattern || pd != pattern {
                return None;
            }
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            *checked += 1;
        }
    }
    Some(worst)
}

fn gradient_checks() -> Check {
    let spec = SpaceSpec::cell201_like();
    let num_ops = spec.vocab().len();
    let k = 4;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut redraws = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EncoderConfig {
            hidden_dim: 5,
            num_layers: 2,
            epsilon: 0.1,
            epsilon_learnable: seed % 2 == 1,
            decoder_dims: vec![5],
            head_dims: vec![5],
            seed,
        };
        let base = EncoderModel::new(cfg, num_ops, k).map_err(|e| e.to_string())?;
        let graphs: Vec<ArchGraph> = (0..3).map(|_| spec.sample(&mut rng)).collect();
        let batch = GraphBatch::from_graphs(&graphs).map_err(|e| e.to_string())?;
        let surrogates = Matrix::from_vec(3, k, (0..3 * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let targets = [0.2, 0.9, 0.5];
        for which in 0..4 {
            // zero-initialised biases leave dead units exactly on a kink, so
            // jitter every parameter and redraw if a step still crosses one
            let mut attempt = 0;
            loop {
                let mut model = base.clone();
                for p in 0..model.params().len() {
                    for v in model.params_mut().value_mut_by_index(p).data_mut() {
                        *v += rng.random_range(-0.1..0.1);
                    }
                }
                let mut n = 0;
                if let Some(w) = check_composite(&model, &batch, which, &surrogates, &targets, &mut n) {
                    worst = worst.max(w);
                    checked += n;
                    break;
                }
                attempt += 1;
                redraws += 1;
                if attempt == 10 {
                    return Err(format!("seed {seed}: every draw sits within a step of a kink"));
                }
            }
        }
    }
    let detail = format!(
        "20 seeds x 4 composites, {checked} partials, max relative error {worst:.2e} ({redraws} kink redraws)"
    );
    if worst < 1e-4 { Ok(detail) } else { Err(detail) }
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let n = rng.random_range(2..=50);
        // every other instance draws from a small set so ties are common
        let draw = |rng: &mut ChaCha8Rng| {
            if inst % 2 == 0 { rng.random::<f64>() } else { rng.random_range(0..5) as f64 }
        };
        let truth: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let pred: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let all_tied = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        if !all_tied(&truth) && !all_tied(&pred) {
            let fast = kendall_tau(&truth, &pred).map_err(|e| e.to_string())?;
            worst = worst.max((fast - common::tau_all_pairs(&truth, &pred)).abs());
        }
        for pct in [1.0, 5.0, 10.0, 50.0] {
            let fast = precision_at_percent(&truth, &pred, pct).map_err(|e| e.to_string())?;
            worst = worst.max((fast - common::precision_by_sets(&truth, &pred, pct)).abs());
        }
    }
    let detail = format!("100 instances, max deviation {worst:.2e}");
    if worst <= 1e-12 { Ok(detail) } else { Err(detail) }
}

fn diamond_levels() -> Check {
    let g = ArchGraph::from_ops(1, &[0; 5], vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]);
    let topo = g.assign_topological_order().map_err(|e| e.to_string())?;
    let expected: Vec<Vec<usize>> = vec![vec![0], vec![1, 2], vec![3], vec![4]];
    let detail = format!("{topo}");
    if topo.levels() == expected.as_slice() && topo.depth() == 4 { Ok(detail) } else { Err(detail) }
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Pretrained {
    dataset: BenchDataset,
    full: EncoderModel,
    rec: EncoderModel,
    aux: EncoderModel,
}

/// The 2000-graph benchmark and one encoder per loss variant, trained once.
fn pretrained() -> &'static Pretrained {
    static CELL: OnceLock<Pretrained> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = SpaceSpec::cell201_like();
        let mut ds = BenchDataset::generate(&spec, 2000, 97).unwrap();
        ds.label_with(&SyntheticOracle::new(&ds.vocab, OracleConfig::default())).unwrap();
        let sp = SurrogateParams::init(ds.vocab.len(), SurrogateConfig::default()).unwrap();
        ds.attach_surrogates(&sp).unwrap();
        let reads = ds.label_reads();
        let train = |lambda_rec, lambda_aux| {
            let mut m = EncoderModel::new(EncoderConfig::default(), ds.vocab.len(), sp.k()).unwrap();
            let cfg = PretrainConfig {
                lambda_rec,
                lambda_aux,
                epochs: 50,
                ..PretrainConfig::default()
            };
            pretrain(&mut m, &ds, &cfg).unwrap();
            m
        };
        let (full, rec, aux) = (train(0.5, 0.5), train(1.0, 0.0), train(0.0, 1.0));
        assert_eq!(ds.label_reads(), reads, "pretraining read performance labels");
        Pretrained {
            dataset: ds,
            full,
            rec,
            aux,
        }
    })
}

/// Test tau after fine-tuning `model` on 1% of the train split of `seed`.
fn finetuned_tau(model: &EncoderModel, seed: u64) -> f64 {
    let mut ds = pretrained().dataset.clone();
    ds.make_splits(0.5, 40, seed).unwrap();
    assert_eq!((ds.splits.train.len(), ds.splits.test.len(), ds.splits.validation.len()), (1000, 960, 40));
    let mut m = model.clone();
    let cfg = FinetuneConfig {
        seed,
        ..FinetuneConfig::default()
    };
    finetune(&mut m, &ds, &cfg).unwrap();
    evaluate_tau(&m, &ds, &ds.splits.test).unwrap()
}

fn full_taus() -> &'static Vec<f64> {
    static CELL: OnceLock<Vec<f64>> = OnceLock::new();
    CELL.get_or_init(|| SEEDS.iter().map(|&s| finetuned_tau(&pretrained().full, s)).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")
}

fn pretraining_gain() -> Check {
    let vocab = pretrained().dataset.vocab.len();
    let base: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let cfg = EncoderConfig {
                seed: s,
                ..EncoderConfig::default()
            };
            finetuned_tau(&EncoderModel::new(cfg, vocab, 8).unwrap(), s)
        })
        .collect();
    let full = full_taus();
    let gain = mean(full) - mean(&base);
    let worse = full.iter().zip(&base).filter(|(f, b)| f < b).count();
    let detail = format!(
        "pretrained [{}] mean {:.3} vs scratch [{}] mean {:.3}: gain {gain:+.3}, worse in {worse}/5",
        fmt(full),
        mean(full),
        fmt(&base),
        mean(&base)
    );
    if gain >= 0.03 && worse <= 1 { Ok(detail) } else { Err(detail) }
}

fn ablation_direction() -> Check {
    let p = pretrained();
    let full = mean(full_taus());
    let rec: Vec<f64> = SEEDS.iter().map(|&s| finetuned_tau(&p.rec, s)).collect();
    let aux: Vec<f64> = SEEDS.iter().map(|&s| finetuned_tau(&p.aux, s)).collect();
    let (rec, aux) = (mean(&rec), mean(&aux));
    let detail = format!("both losses {full:.3}, reconstruction only {rec:.3}, proxy ranking only {aux:.3}");
    if full + 0.01 >= rec && full + 0.01 >= aux { Ok(detail) } else { Err(detail) }
}

fn nas_harness() -> Check {
    let spec = SpaceSpec::cell201_like();
    let oracle_cfg = OracleConfig::default();
    let oracle = SyntheticOracle::new(&spec.vocab(), oracle_cfg.clone());
    let reference = reference_best(&spec, &oracle, 20_000, oracle_cfg.seed).map_err(|e| e.to_string())?;
    let model = &pretrained().full;
    let mut wins = 0;
    let mut monotone = true;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let cfg = SearchConfig {
            seed,
            ..SearchConfig::default()
        };
        let mut predictor = EncoderPredictor {
            model: model.clone(),
            finetune: FinetuneConfig {
                epochs: 60,
                seed,
                ..FinetuneConfig::default()
            },
        };
        let npenas = run_npenas(&spec, &oracle, &mut predictor, &cfg, reference).map_err(|e| e.to_string())?;
        let random = random_search(&spec, &oracle, &cfg, reference).map_err(|e| e.to_string())?;
        if npenas.pool.len() != 200 || random.pool.len() != 200 {
            return Err("budget not spent exactly".into());
        }
        for run in [&npenas, &random] {
            monotone &= run.trace.windows(2).all(|w| w[1].best >= w[0].best);
        }
        if npenas.final_regret() < random.final_regret() {
            wins += 1;
        }
        lines.push(format!("{:.3}/{:.3}", npenas.final_regret(), random.final_regret()));
    }
    let detail = format!(
        "search beat random in {wins}/10 seeds, traces monotone: {monotone}; regrets [{}]",
        lines.join(" ")
    );
    if wins >= 8 && monotone { Ok(detail) } else { Err(detail) }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut argv = vec!["fgp"];
    argv.extend_from_slice(args);
    match fgp::cli::main_with_args(&argv) {
        0 => Ok(()),
        code => Err(format!("{argv:?} exited with {code}")),
    }
}

fn smoke_pipeline(root: &Path) -> Result<Vec<u8>, String> {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.json");
    let dir = |name: &str| root.join(name).to_string_lossy().into_owned();
    let file = |name: &str, f: &str| root.join(name).join(f).to_string_lossy().into_owned();
    let c = ["--config", config];
    run_cli(&[&["generate", "--out", &dir("gen")][..], &c].concat())?;
    run_cli(&[&["surrogate", "--dataset", &file("gen", "dataset.jsonl"), "--out", &dir("sur")][..], &c].concat())?;
    run_cli(&[&["pretrain", "--dataset", &file("sur", "dataset.jsonl"), "--out", &dir("pre")][..], &c].concat())?;
    run_cli(
        &[
            &[
                "finetune",
                "--dataset",
                &file("sur", "dataset.jsonl"),
                "--checkpoint",
                &file("pre", "checkpoint.json"),
                "--out",
                &dir("ft"),
            ][..],
            &c,
        ]
        .concat(),
    )?;
    run_cli(
        &[
            &[
                "eval",
                "--dataset",
                &file("sur", "dataset.jsonl"),
                "--checkpoint",
                &file("ft", "checkpoint.json"),
                "--out",
                &dir("eval"),
            ][..],
            &c,
        ]
        .concat(),
    )?;
    std::fs::read(root.join("eval").join("eval.json")).map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = smoke_pipeline(a.path())?;
    let second = smoke_pipeline(b.path())?;
    let detail = format!("two smoke pipelines, eval.json {} bytes each", first.len());
    if first == second { Ok(detail) } else { Err(format!("eval.json differs between runs; {detail}")) }
}

#[test]
fn acceptance_suite() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("surrogate permutation invariance", permutation_invariance),
        ("identity-conversion path-count oracle", identity_conversion_oracle),
        ("encoder gradient checks", gradient_checks),
        ("metric oracles", metric_oracles),
        ("topological levels of the five-node example", diamond_levels),
        ("pretraining gain over scratch", pretraining_gain),
        ("loss ablation direction", ablation_direction),
        ("NAS harness", nas_harness),
        ("pipeline determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        report(i + 1, name, start.elapsed(), &result);
        if result.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
