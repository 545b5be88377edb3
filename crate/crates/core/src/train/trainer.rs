use std::time::Instant;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{argmax_rows, softmax};
use crate::arch::{Model, Precision};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::{Graph, Prng, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub precision: Precision,
    /// Rescale the gradient when its global L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
    /// Evaluate the test set every this many epochs (0 disables it). The
    /// final epoch is always evaluated when a test set is given.
    pub eval_every: usize,
    /// Check every graph value for NaN/Inf as it is produced.
    pub check_finite: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 500,
            seed: 0,
            shuffle: true,
            precision: Precision::Train,
            clip_norm: None,
            eval_every: 1,
            check_finite: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a finite non-negative number"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("clip_norm", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Summary of one training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the forward passes made while training this epoch.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

impl Metrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,test_acc,seconds";

    /// One CSV line without newline. With `timing` off the seconds column is
    /// written as 0 so files from identical runs compare equal.
    pub fn csv_row(&self, timing: bool) -> String {
        format!(
            "{},{:.9},{:.6},{},{:.3}",
            self.epoch,
            self.train_loss,
            self.train_acc,
            self.test_acc.map(|a| format!("{a:.6}")).unwrap_or_default(),
            if timing { self.seconds } else { 0.0 }
        )
    }
}

/// Renders a whole metrics stream, header included.
pub fn metrics_csv(metrics: &[Metrics], timing: bool) -> String {
    let mut s = String::from(Metrics::CSV_HEADER);
    s.push('\n');
    for m in metrics {
        s.push_str(&m.csv_row(timing));
        s.push('\n');
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Model snapshot at its best test accuracy.
#[derive(Clone, Debug)]
pub struct BestModel<T> {
    pub epoch: usize,
    pub test_acc: f64,
    pub model: Model<T>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub metrics: Vec<Metrics>,
    pub adam: AdamState<T>,
    pub best: Option<BestModel<T>>,
}

impl<T> TrainOutcome<T> {
    pub fn final_metrics(&self) -> Option<&Metrics> {
        self.metrics.last()
    }
}

/// Minibatch Adam training with per-epoch metrics.
pub struct Trainer<T> {
    config: TrainConfig,
    resume: Option<AdamState<T>>,
    keep_best: bool,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            config,
            resume: None,
            keep_best: false,
        })
    }

    /// Continue from existing optimizer moments.
    pub fn resume(mut self, state: AdamState<T>) -> Self {
        self.resume = Some(state);
        self
    }

    /// Keep a copy of the model at its best test accuracy.
    pub fn keep_best(mut self, on: bool) -> Self {
        self.keep_best = on;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Trains `model` in place. `observer` sees every epoch's metrics and may
    /// stop the run early.
    pub fn run(
        self,
        model: &mut Model<T>,
        train: &Dataset,
        test: Option<&Dataset>,
        mut observer: impl FnMut(&Metrics) -> Control,
    ) -> Result<TrainOutcome<T>> {
        let cfg = &self.config;
        if train.is_empty() {
            return Err(Error::data("training set is empty"));
        }
        check_compatible(model, train)?;
        if let Some(t) = test {
            check_compatible(model, t)?;
        }
        let mut adam = match self.resume {
            Some(s) => s,
            None => {
                let shapes: Vec<Vec<usize>> = model
                    .named_tensors()
                    .iter()
                    .map(|(_, t)| t.shape().to_vec())
                    .collect();
                AdamState::new(shapes.iter().map(Vec::as_slice), cfg.adam)
            }
        };
        let mut prng = Prng::new(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut metrics = Vec::with_capacity(cfg.epochs);
        let mut best: Option<BestModel<T>> = None;

        for epoch in 1..=cfg.epochs {
            let start = Instant::now();
            if cfg.shuffle {
                prng.shuffle(&mut order);
            }
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
                let step = train_step(model, &mut adam, train, idx, cfg)
                    .map_err(|e| at_batch(e, epoch, b))?;
                loss_sum += step.loss * idx.len() as f64;
                correct += step.correct;
            }
            let evaluate_now = test.is_some()
                && (epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0));
            let test_acc = match test {
                Some(t) if evaluate_now => Some(evaluate(model, t, cfg.batch_size)?.accuracy),
                _ => None,
            };
            let m = Metrics {
                epoch,
                train_loss: loss_sum / train.len() as f64,
                train_acc: correct as f64 / train.len() as f64,
                test_acc,
                seconds: start.elapsed().as_secs_f64(),
            };
            if let (true, Some(acc)) = (self.keep_best, test_acc) {
                if best.as_ref().is_none_or(|b| acc > b.test_acc) {
                    best = Some(BestModel {
                        epoch,
                        test_acc: acc,
                        model: model.clone(),
                    });
                }
            }
            let control = observer(&m);
            metrics.push(m);
            if control == Control::Stop {
                break;
            }
        }
        Ok(TrainOutcome { metrics, adam, best })
    }
}

struct StepResult {
    loss: f64,
    correct: usize,
}

fn at_batch(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

fn train_step<T: Scalar>(
    model: &mut Model<T>,
    adam: &mut AdamState<T>,
    data: &Dataset,
    idx: &[usize],
    cfg: &TrainConfig,
) -> Result<StepResult> {
    let labels = data.batch_labels(idx);
    let mut g = Graph::new();
    g.set_check_finite(cfg.check_finite);
    let vars = model.bind(&mut g);
    let x = g.constant(data.batch::<T>(idx)?);
    let logits = model.forward_graph(&mut g, &vars, x)?;
    let loss = g.softmax_cross_entropy(logits, &labels)?;
    let loss_value = g.value(loss).item()?.as_f64();
    if !loss_value.is_finite() {
        let culprit = match g.first_non_finite() {
            Some((v, tag)) => format!("first non-finite value at node #{} ({tag})", v.index()),
            None => "no non-finite intermediate found".to_string(),
        };
        return Err(Error::NonFinite(format!("loss is {loss_value}; {culprit}")));
    }
    let correct = argmax_rows(g.value(logits))?
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count();

    let mut grads = g.backward(loss)?;
    let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut grad_tensors: Vec<Tensor<T>> = Vec::with_capacity(vars.params.len());
    for (k, &v) in vars.params.iter().enumerate() {
        let gt = grads
            .take(v)
            .unwrap_or_else(|| Tensor::zeros(g.shape(v).to_vec()));
        if !gt.all_finite() {
            return Err(Error::NonFinite(format!("gradient of `{}` is not finite", names[k])));
        }
        grad_tensors.push(gt);
    }
    if let Some(max_norm) = cfg.clip_norm {
        let norm = grad_tensors
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.as_f64() * v.as_f64()))
            .sum::<f64>()
            .sqrt();
        if norm > max_norm {
            let s = T::cast(max_norm / norm);
            for t in &mut grad_tensors {
                t.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let grad_refs: Vec<&Tensor<T>> = grad_tensors.iter().collect();
    let mut params = model.tensors_mut();
    adam_step(&mut params, &grad_refs, adam, cfg.learning_rate)?;
    Ok(StepResult {
        loss: loss_value,
        correct,
    })
}

fn check_compatible<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<()> {
    let cfg = model.config();
    if data.channels() != cfg.input_channels {
        return Err(Error::config(
            "input_channels",
            format!(
                "model expects {} channels but the dataset has {}",
                cfg.input_channels,
                data.channels()
            ),
        ));
    }
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= cfg.num_classes) {
        return Err(Error::data(format!(
            "label {bad} outside the model's {} classes",
            cfg.num_classes
        )));
    }
    Ok(())
}

/// Accuracy and confusion counts (`confusion[true][predicted]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub confusion: Vec<Vec<usize>>,
}

/// Predicted class of every sample (argmax, ties to the lowest class).
pub fn predict<T: Scalar>(model: &Model<T>, data: &Dataset, batch_size: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    for_each_logits(model, data, batch_size, |logits| {
        out.extend(argmax_rows(logits)?);
        Ok(())
    })?;
    Ok(out)
}

/// Class probabilities `[N × K]` of every sample.
pub fn predict_proba<T: Scalar>(
    model: &Model<T>,
    data: &Dataset,
    batch_size: usize,
) -> Result<Tensor<T>> {
    let mut values = Vec::with_capacity(data.len() * model.config().num_classes);
    for_each_logits(model, data, batch_size, |logits| {
        values.extend_from_slice(softmax(logits)?.data());
        Ok(())
    })?;
    Tensor::new(vec![data.len(), model.config().num_classes], values)
}

fn for_each_logits<T: Scalar>(
    model: &Model<T>,
    data: &Dataset,
    batch_size: usize,
    mut f: impl FnMut(&Tensor<T>) -> Result<()>,
) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be positive"));
    }
    check_compatible_channels(model, data)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size) {
        f(&model.forward(&data.batch::<T>(chunk)?)?)?;
    }
    Ok(())
}

fn check_compatible_channels<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<()> {
    let c = model.config().input_channels;
    if data.channels() != c {
        return Err(Error::config(
            "input_channels",
            format!("model expects {c} channels but the dataset has {}", data.channels()),
        ));
    }
    Ok(())
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let preds = predict(model, data, batch_size)?;
    Ok(score(&preds, data.labels(), model.config().num_classes))
}

/// Accuracy and confusion matrix of `predictions` against `labels`.
pub fn score(predictions: &[usize], labels: &[usize], classes: usize) -> Evaluation {
    let k = classes
        .max(predictions.iter().max().map_or(0, |&m| m + 1))
        .max(labels.iter().max().map_or(0, |&m| m + 1));
    let mut confusion = vec![vec![0; k]; k];
    let mut correct = 0;
    for (&p, &l) in predictions.iter().zip(labels) {
        confusion[l][p] += 1;
        correct += usize::from(p == l);
    }
    let total = labels.len();
    Evaluation {
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        correct,
        total,
        confusion,
    }
}
