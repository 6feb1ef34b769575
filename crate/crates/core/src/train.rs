//! Mini-batch training, early stopping and k-fold cross-validation.

use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, ParameterSet, Tape};
use crate::dataset::{stratified_folds, Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{argmax, batch_nll_loss, GsaPoolNet, Mode, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub folds: usize,
    /// Upper bound on folds trained concurrently.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            lr: 5e-4,
            weight_decay: 1e-4,
            patience: 50,
            seed: 0,
            folds: 10,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.jobs == 0 {
            return Err(Error::Config(
                "epochs, batch_size, patience and jobs must be positive".into(),
            ));
        }
        if !self.lr.is_finite()
            || self.lr < 0.0
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
        {
            return Err(Error::Config(format!(
                "lr {} / weight_decay {} must be non-negative",
                self.lr, self.weight_decay
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "folds must be >= 2, got {}",
                self.folds
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Per-epoch history of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub valid_accuracy: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

/// Mean loss and accuracy of `graphs` in evaluation mode.
pub fn evaluate(
    model: &GsaPoolNet,
    params: &ParameterSet,
    graphs: &[&Graph],
) -> Result<(f64, f64)> {
    if graphs.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for g in graphs {
        let (lp, _) = model.predict(params, g)?;
        if g.label() >= lp.len() {
            return Err(Error::LabelOutOfRange {
                label: g.label(),
                num_classes: lp.len(),
            });
        }
        loss -= lp[g.label()];
        if argmax(&lp) == g.label() {
            correct += 1;
        }
    }
    let n = graphs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn accuracy(model: &GsaPoolNet, params: &ParameterSet, graphs: &[&Graph]) -> Result<f64> {
    Ok(evaluate(model, params, graphs)?.1)
}

/// Trains from a fresh initialization drawn from `seed` and returns the
/// parameters of the epoch with the lowest validation loss.
pub fn train_fold(
    model: &GsaPoolNet,
    train: &[&Graph],
    valid: &[&Graph],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ParameterSet, Curves)> {
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    model.init(&mut params, &mut rng)?;
    let mut adam = Adam::new(cfg.adam());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curves = Curves::default();
    let mut best: Option<(f64, ParameterSet)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bindings = params.bind(&mut tape);
            let mut items = Vec::with_capacity(batch.len());
            for &i in batch {
                let out =
                    model.forward(&mut tape, &bindings, train[i], &mut Mode::Train(&mut rng))?;
                items.push((out.log_probs, train[i].label()));
            }
            let loss = batch_nll_loss(&mut tape, &items)?;
            epoch_loss += tape.value(loss).item() * batch.len() as f64;
            let grads = tape.backward(loss)?;
            params.zero_grad();
            params.accumulate(&bindings, &grads)?;
            adam.step(&mut params)?;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let (valid_loss, valid_acc) = evaluate(model, &params, valid)?;
        curves.train_loss.push(train_loss);
        curves.valid_loss.push(valid_loss);
        curves.valid_accuracy.push(valid_acc);
        debug!("epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} acc {valid_acc:.3}");

        if best.as_ref().is_none_or(|(l, _)| valid_loss < *l) {
            best = Some((valid_loss, params.snapshot()));
            curves.best_epoch = epoch;
        } else if epoch - curves.best_epoch >= cfg.patience {
            info!("early stop at epoch {epoch}, best {}", curves.best_epoch);
            break;
        }
    }
    let (_, best) = best.expect("at least one epoch");
    Ok((best, curves))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub curves: Curves,
}

/// Result of one model trained on one split.
pub struct FoldOutcome {
    pub report: FoldReport,
    pub params: ParameterSet,
}

/// Trains on `split` with seed `seed` and scores the kept checkpoint on the
/// split's test graphs.
pub fn run_split(
    d: &Dataset,
    split: &Split,
    model: &GsaPoolNet,
    cfg: &TrainConfig,
    fold: usize,
    seed: u64,
) -> Result<FoldOutcome> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| &d.graphs[i]).collect::<Vec<_>>();
    let (train, valid, test) = (pick(&split.train), pick(&split.valid), pick(&split.test));
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let (params, curves) = train_fold(model, &train, &valid, cfg, seed)?;
    let test_accuracy = accuracy(model, &params, &test)?;
    info!(
        "fold {fold}: test accuracy {test_accuracy:.4} (best epoch {})",
        curves.best_epoch
    );
    Ok(FoldOutcome {
        report: FoldReport {
            fold,
            seed,
            test_accuracy,
            curves,
        },
        params,
    })
}

/// Everything needed to re-run an experiment, plus its results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub dataset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub folds: Vec<FoldReport>,
}

impl Metrics {
    pub fn from_folds(
        dataset: &str,
        model: ModelConfig,
        train: TrainConfig,
        folds: Vec<FoldReport>,
    ) -> Self {
        let fold_accuracies: Vec<f64> = folds.iter().map(|f| f.test_accuracy).collect();
        let (mean, std) = mean_std(&fold_accuracies);
        Self {
            dataset: dataset.to_string(),
            model,
            train,
            fold_accuracies,
            mean,
            std,
            folds,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// `mean ± std` in percent.
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stratified k-fold cross-validation. Fold `f` trains with seed
/// `cfg.seed + f`; at most `cfg.jobs` folds run at once.
pub fn cross_validate(d: &Dataset, mcfg: &ModelConfig, cfg: &TrainConfig) -> Result<Metrics> {
    cfg.validate()?;
    let model = GsaPoolNet::new(mcfg.clone(), d.feature_dim, d.num_classes)?;
    let plan = stratified_folds(d, cfg.folds, cfg.seed)?;
    let labels = d.labels();
    let run = |f: usize| -> Result<FoldReport> {
        let split = plan.split(f, &labels)?;
        let seed = cfg.seed.wrapping_add(f as u64);
        Ok(run_split(d, &split, &model, cfg, f, seed)?.report)
    };
    let reports: Vec<FoldReport> = if cfg.jobs <= 1 {
        (0..cfg.folds).map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..cfg.folds)
                .into_par_iter()
                .map(run)
                .collect::<Result<_>>()
        })?
    };
    Ok(Metrics::from_folds(
        &d.name,
        mcfg.clone(),
        cfg.clone(),
        reports,
    ))
}

/// One CSV row per graph: index, label, embedding values.
pub fn write_embeddings_csv<W: Write>(
    mut w: W,
    model: &GsaPoolNet,
    params: &ParameterSet,
    d: &Dataset,
) -> Result<()> {
    let dim = 2 * model.config().hidden_dim;
    let header: Vec<String> = ["graph_id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..dim).map(|j| format!("e{j}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, g) in d.graphs.iter().enumerate() {
        let (_, emb) = model.predict(params, g)?;
        let vals: Vec<String> = emb.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{i},{},{}", g.label(), vals.join(","))?;
    }
    Ok(())
}
