use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{to_batch, Dataset};
use super::folds::kfold_split;
use super::report::{AblationReport, Confusion, EvalReport};
use super::HarnessError;
use crate::dsp::FeatureTensor;
use crate::kv::KvDoc;
use crate::nn::{cross_entropy, Adam, Model, ModelConfig, Optimizer};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Keep the parameters from the epoch with the best validation accuracy
    /// rather than the last epoch.
    pub best_snapshot: bool,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Folds trained concurrently; 0 uses the available parallelism.
    pub threads: usize,
    /// Per-epoch progress on standard error.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.0,
            best_snapshot: true,
            patience: None,
            threads: 0,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("epochs", self.epochs);
        d.set("batch_size", self.batch_size);
        d.set("lr", self.lr);
        d.set("weight_decay", self.weight_decay);
        d.set("best_snapshot", self.best_snapshot);
        d.set("patience", self.patience.map_or("none".to_string(), |p| p.to_string()));
        d
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 || self.batch_size < 2 || !(self.lr > 0.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "epochs {}, batch_size {} (>= 2 for batch norm), lr {}",
                self.epochs, self.batch_size, self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub model: Model,
    pub val_accuracy: f64,
    pub confusion: Confusion,
    /// 1-based epoch the returned model comes from.
    pub best_epoch: usize,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_val_accuracies: Vec<f64>,
}

fn labels_of(samples: &[FeatureTensor], idx: &[usize]) -> Result<Vec<usize>, HarnessError> {
    idx.iter()
        .map(|&i| samples[i].label.map(|l| l.id() as usize).ok_or(HarnessError::Unlabeled(i)))
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

/// Eval-mode confusion matrix over `idx`.
pub fn evaluate(model: &Model, samples: &[FeatureTensor], idx: &[usize]) -> Result<Confusion, HarnessError> {
    let mut conf = Confusion::default();
    let labels = labels_of(samples, idx)?;
    for (chunk, lab) in idx.chunks(64).zip(labels.chunks(64)) {
        let logits = model.predict(&to_batch(samples, chunk)?)?;
        let k = logits.shape()[1];
        for (row, &t) in logits.data().chunks(k).zip(lab) {
            conf.add(t, argmax(row));
        }
    }
    Ok(conf)
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mini-batch Adam training on `train`, validated after every epoch on `val`.
pub fn train_fold(
    model_cfg: &ModelConfig,
    samples: &[FeatureTensor],
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FoldResult, HarnessError> {
    cfg.validate()?;
    if train.len() < 2 || val.is_empty() {
        return Err(HarnessError::TooFewSamples {
            needed: 2,
            got: train.len().min(val.len()),
        });
    }
    if train.iter().any(|i| val.contains(i)) {
        return Err(HarnessError::InvalidConfig("train and validation sets overlap".into()));
    }
    let mut model = Model::new(model_cfg.clone(), seed)?;
    let mut opt = Adam::new(cfg.lr);
    opt.weight_decay = cfg.weight_decay;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order = train.to_vec();

    let mut best: Option<(f64, usize, Model, Confusion)> = None;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_val_accuracies = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for batch in order.chunks(cfg.batch_size) {
            // batch norm cannot train on a single sample
            if batch.len() < 2 {
                continue;
            }
            let x = to_batch(samples, batch)?;
            let y = labels_of(samples, batch)?;
            model.zero_grad();
            let (logits, cache) = model.forward_train(&x)?;
            let (loss, grad) = cross_entropy(&logits, &y)?;
            model.backward(cache, &grad)?;
            opt.step(model.params_mut());
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        epoch_losses.push(loss_sum / seen as f64);
        let conf = evaluate(&model, samples, val)?;
        let acc = conf.accuracy();
        epoch_val_accuracies.push(acc);
        if cfg.verbose {
            eprintln!("  epoch {epoch:>3}  loss {:.4}  val {acc:.4}", loss_sum / seen as f64);
        }
        let improved = best.as_ref().is_none_or(|b| acc > b.0);
        if improved || !cfg.best_snapshot {
            best = Some((acc, epoch, model.clone(), conf));
        }
        if let (Some(p), Some(b)) = (cfg.patience, best.as_ref()) {
            if cfg.best_snapshot && epoch - b.1 >= p {
                break;
            }
        }
    }
    let (val_accuracy, best_epoch, model, confusion) = best.expect("at least one epoch ran");
    Ok(FoldResult {
        model,
        val_accuracy,
        confusion,
        best_epoch,
        epoch_losses,
        epoch_val_accuracies,
    })
}

/// Configuration keys echoed into reports: `k`, `model.*`, `train.*`.
pub fn config_echo(model_cfg: &ModelConfig, cfg: &TrainConfig, k: usize) -> KvDoc {
    let mut d = KvDoc::new();
    d.set("k", k);
    for (key, v) in model_cfg.to_kv().iter() {
        d.set(&format!("model.{key}"), v);
    }
    for (key, v) in cfg.to_kv().iter() {
        d.set(&format!("train.{key}"), v);
    }
    d
}

/// Stratified k-fold cross-validation on one subject. Folds run on up to
/// `cfg.threads` threads; results do not depend on the thread count.
pub fn cross_validate(
    model_cfg: &ModelConfig,
    ds: &Dataset,
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let labels = ds.labels()?;
    let plan = kfold_split(&labels, k, seed)?;
    let threads = match cfg.threads {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(k);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(f64, Confusion), HarnessError>>>> = Mutex::new((0..k).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::SeqCst);
                if f >= k {
                    break;
                }
                let train = plan.train_indices(f);
                let r = train_fold(model_cfg, &ds.samples, &train, &plan.folds[f], cfg, fold_seed(seed, f))
                    .map(|r| (r.val_accuracy, r.confusion));
                if cfg.verbose {
                    if let Ok((acc, _)) = &r {
                        eprintln!("fold {f}: {acc:.4}");
                    }
                }
                results.lock().unwrap()[f] = Some(r);
            });
        }
    });
    let folds = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every fold ran"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_folds(ds.subject_id, seed, &folds, config_echo(model_cfg, cfg, k)))
}

/// Cross-validates the full model, the model without CBAM and the
/// post-activation variant, with the same folds and seeds.
pub fn ablation_study(
    model_cfg: &ModelConfig,
    ds: &Dataset,
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<AblationReport, HarnessError> {
    let variants = [
        ("acpa", model_cfg.clone()),
        (
            "cbam_off",
            ModelConfig {
                cbam_enabled: false,
                ..model_cfg.clone()
            },
        ),
        (
            "postact",
            ModelConfig {
                preactivation: false,
                ..model_cfg.clone()
            },
        ),
    ];
    let mut rows = Vec::new();
    for (name, mc) in variants {
        if cfg.verbose {
            eprintln!("ablation: {name}");
        }
        rows.push((name.to_string(), cross_validate(&mc, ds, k, cfg, seed)?));
    }
    Ok(AblationReport { rows })
}
