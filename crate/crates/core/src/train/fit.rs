use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImages;
use crate::error::{Error, Result};
use crate::imaging::{augment, extract_channel, resize_bilinear, AugmentSpec, ChannelMode, RasterImage};
use crate::nn::{GradientAt, Gradients, Head, Network};
use crate::tensor::Tensor;
use crate::train::loss::{sample_loss, LossKind};
use crate::train::optim::{adam_step, OptimizerKind, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Batches per epoch drawn from a continuously reshuffled stream.
    /// `None` means one pass over the training set.
    pub steps_per_epoch: Option<usize>,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Worker threads for per-sample gradients. Results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 100,
            steps_per_epoch: None,
            early_stop_patience: 10,
            seed: 0,
            loss: LossKind::CategoricalCe,
            threads: None,
        }
    }
}

impl TrainConfig {
    /// Batch 256 with 120 steps per epoch.
    pub fn material_profile() -> Self {
        Self {
            batch_size: 256,
            steps_per_epoch: Some(120),
            ..Self::default()
        }
    }

    pub fn binary() -> Self {
        Self {
            loss: LossKind::BinaryCe,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if self.steps_per_epoch == Some(0) || self.threads == Some(0) {
            return bad("steps_per_epoch and threads must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub channel: ChannelMode,
    #[serde(default)]
    pub augment: Option<AugmentSpec>,
}

impl Preprocessing {
    pub fn new(channel: ChannelMode) -> Self {
        Self {
            channel,
            augment: None,
        }
    }
}

/// Resizes to the network's input extent if needed, then extracts channels.
pub fn prepare_input(img: &RasterImage, input_shape: [usize; 3], channel: ChannelMode) -> Result<Tensor<f32>> {
    let [h, w, c] = input_shape;
    if channel.output_channels() != c {
        return Err(Error::ChannelMismatch(format!(
            "{channel:?} yields {} channels, network expects {c}",
            channel.output_channels()
        )));
    }
    if img.height() == h && img.width() == w {
        extract_channel(img, channel)
    } else {
        extract_channel(&resize_bilinear(img, h, w), channel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            ));
        }
        out
    }
}

/// Stops once `patience` epochs pass without a strictly lower monitored value.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        let improved = value < self.best || self.best_epoch == 0;
        if improved {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        (improved, self.since_best >= self.patience)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub predicted: usize,
    /// Network output: class probabilities, or the positive-class score for a binary head.
    pub output: Vec<f32>,
}

impl Prediction {
    /// Probability of the predicted class.
    pub fn confidence(&self) -> f32 {
        if self.output.len() == 1 {
            if self.predicted == 1 {
                self.output[0]
            } else {
                1.0 - self.output[0]
            }
        } else {
            self.output[self.predicted]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

fn predicted_class(output: &[f32], head: Head) -> usize {
    match head {
        Head::Binary => usize::from(output[0] > 0.5),
        Head::Multiclass(_) => Tensor::from_vec(output.to_vec()).argmax(),
    }
}

fn head_classes(head: Head) -> usize {
    match head {
        Head::Binary => 2,
        Head::Multiclass(k) => k,
    }
}

fn check_data(net: &Network<f32>, data: &LabeledImages) -> Result<Head> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.images.len() != data.labels.len() {
        return Err(Error::LengthMismatch(data.images.len(), data.labels.len()));
    }
    let head = net.head()?;
    let k = head_classes(head);
    if data.classes.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, network head predicts {k}",
            data.classes.len()
        )));
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    Ok(head)
}

fn loss_for(head: Head) -> LossKind {
    match head {
        Head::Binary => LossKind::BinaryCe,
        Head::Multiclass(_) => LossKind::CategoricalCe,
    }
}

fn thread_pool(threads: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match threads {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}"))),
        _ => Ok(None),
    }
}

/// Maps `f` over `items`, possibly in parallel, and feeds results to
/// `consume` strictly in item order.
fn for_each_ordered<R, F, C>(pool: Option<&rayon::ThreadPool>, items: &[usize], f: F, mut consume: C) -> Result<()>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync,
    C: FnMut(R) -> Result<()>,
{
    match pool {
        None => {
            for &i in items {
                consume(f(i)?)?;
            }
        }
        Some(pool) => {
            for chunk in items.chunks(pool.current_num_threads().max(1)) {
                let results: Vec<Result<R>> = pool.install(|| chunk.par_iter().map(|&i| f(i)).collect());
                for r in results {
                    consume(r?)?;
                }
            }
        }
    }
    Ok(())
}

fn prepare_all(net: &Network<f32>, data: &LabeledImages, channel: ChannelMode) -> Result<Vec<Tensor<f32>>> {
    data.images
        .iter()
        .map(|img| prepare_input(img, net.input_shape(), channel))
        .collect()
}

fn evaluate_prepared(
    net: &Network<f32>,
    inputs: &[Tensor<f32>],
    labels: &[usize],
    head: Head,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Evaluation> {
    let kind = loss_for(head);
    let order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(inputs.len());
    for_each_ordered(
        pool,
        &order,
        |i| net.forward(&inputs[i]),
        |out| {
            let label = labels[predictions.len()];
            let output = out.into_data();
            let predicted = predicted_class(&output, head);
            loss += sample_loss(&output, label, kind);
            correct += usize::from(predicted == label);
            predictions.push(Prediction {
                label,
                predicted,
                output,
            });
            Ok(())
        },
    )?;
    let n = inputs.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        predictions,
    })
}

/// Loss, accuracy and per-image predictions without augmentation.
pub fn evaluate(net: &Network<f32>, data: &LabeledImages, channel: ChannelMode) -> Result<Evaluation> {
    evaluate_threaded(net, data, channel, None)
}

pub fn evaluate_threaded(
    net: &Network<f32>,
    data: &LabeledImages,
    channel: ChannelMode,
    threads: Option<usize>,
) -> Result<Evaluation> {
    let head = check_data(net, data)?;
    let inputs = prepare_all(net, data, channel)?;
    let pool = thread_pool(threads)?;
    evaluate_prepared(net, &inputs, &data.labels, head, pool.as_ref())
}

struct SampleStream {
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    pos: usize,
}

impl SampleStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            perm: (0..n).collect(),
            pos: n,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.perm.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn epoch_batches(&mut self, batch: usize, steps: Option<usize>) -> Vec<Vec<usize>> {
        match steps {
            None => {
                if self.pos != 0 {
                    self.reshuffle();
                }
                self.pos = self.perm.len();
                self.perm.chunks(batch).map(<[usize]>::to_vec).collect()
            }
            Some(steps) => (0..steps)
                .map(|_| {
                    (0..batch)
                        .map(|_| {
                            if self.pos == self.perm.len() {
                                self.reshuffle();
                            }
                            self.pos += 1;
                            self.perm[self.pos - 1]
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Trains `net` in place and leaves it holding the best-validation-loss weights.
pub fn fit(
    net: &mut Network<f32>,
    train: &LabeledImages,
    val: &LabeledImages,
    cfg: &TrainConfig,
    prep: &Preprocessing,
) -> Result<TrainHistory> {
    cfg.validate()?;
    let head = check_data(net, train)?;
    check_data(net, val)?;
    if train.classes != val.classes {
        return Err(Error::ShapeMismatch("train and validation class lists differ".into()));
    }
    if cfg.loss != loss_for(head) {
        return Err(Error::InvalidConfig(format!(
            "{:?} loss does not match a {head:?} head",
            cfg.loss
        )));
    }
    if let Some(spec) = &prep.augment {
        spec.validate()?;
    }
    let pool = thread_pool(cfg.threads)?;
    let pool = pool.as_ref();
    let train_inputs = prepare_all(net, train, prep.channel)?;
    let val_inputs = prepare_all(net, val, prep.channel)?;

    let mut state = OptimizerState::new(net.params());
    let mut stream = SampleStream::new(train_inputs.len(), cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best_params: Vec<Tensor<f32>> = net.params().into_iter().cloned().collect();
    let mut records = Vec::new();
    let mut stopped_early = false;
    let mut draws: u64 = 0;

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in stream.epoch_batches(cfg.batch_size, cfg.steps_per_epoch) {
            let mut grads = Gradients::zeros_like(net);
            let base = draws;
            let model: &Network<f32> = net;
            for_each_ordered(
                pool,
                &(0..batch.len()).collect::<Vec<_>>(),
                |slot| {
                    let i = batch[slot];
                    let input = match &prep.augment {
                        Some(spec) => augment(&train_inputs[i], spec, base + slot as u64)?,
                        None => train_inputs[i].clone(),
                    };
                    let (out, cache) = model.forward_cached(&input)?;
                    let label = train.labels[i];
                    let mut upstream = out.clone();
                    match head {
                        Head::Binary => upstream.data_mut()[0] -= label as f32,
                        Head::Multiclass(_) => upstream.data_mut()[label] -= 1.0,
                    }
                    let g = model.backward_with(&cache, &upstream, GradientAt::Logits, false)?;
                    let output = out.into_data();
                    Ok((g, sample_loss(&output, label, cfg.loss), predicted_class(&output, head) == label))
                },
                |(g, loss, hit)| {
                    grads.accumulate(&g);
                    loss_sum += loss;
                    correct += usize::from(hit);
                    Ok(())
                },
            )?;
            draws += batch.len() as u64;
            seen += batch.len();
            grads.scale(1.0 / batch.len() as f32);
            adam_step(&mut net.params_mut(), &grads.params, &mut state, cfg)?;
        }

        let eval = evaluate_prepared(net, &val_inputs, &val.labels, head, pool)?;
        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
        });
        let (improved, stop) = stopper.observe(epoch, eval.loss);
        if improved {
            best_params = net.params().into_iter().cloned().collect();
        }
        if stop {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    for (p, best) in net.params_mut().into_iter().zip(best_params) {
        *p = best;
    }
    Ok(TrainHistory {
        records,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}
