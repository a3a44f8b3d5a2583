//! Parameter initialisation, the learning-rate schedule, momentum SGD and
//! the training loop.

mod checkpoint;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{synth_glyphs, Dataset};
use crate::error::{LclError, Result};
use crate::model::{
    lcnn_graph, pair_tensor, predict, target_tensor, BoundParams, Episode, ModelParams, ModelSpec, Mode, ParamKind,
};
use crate::sampler::{make_batch, rng_stream, sample_trials, Lcc};
use crate::tensor::{grad_check, GradCheckConfig, GradCheckReport, Graph, NodeId, Tensor};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint,
    CheckpointMeta, FORMAT_VERSION,
};

/// Rng stream used for parameter initialisation.
pub const INIT_STREAM: u64 = 0;
/// Rng stream used for training batches.
pub const DATA_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Contexts per mini-batch (`N`).
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    /// Last step at the initial learning rate.
    pub d1: u64,
    /// Last step at a tenth of it.
    pub d2: u64,
    /// Total optimizer steps (`m`).
    pub max_steps: u64,
    pub seed: u64,
    /// Intermediate checkpoint cadence in steps; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 40,
            lr0: 0.1,
            momentum: 0.9,
            d1: 44_800,
            d2: 51_200,
            max_steps: 57_600,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(LclError::config("train.batch_size", "must be at least 1"));
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(LclError::config("train.lr0", "must be a finite non-negative number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LclError::config("train.momentum", "must lie in [0, 1)"));
        }
        if self.d1 == 0 {
            return Err(LclError::config("train.d1", "must be positive"));
        }
        if self.d1 >= self.d2 {
            return Err(LclError::config(
                "train.d1",
                format!("d1 ({}) must be smaller than d2 ({})", self.d1, self.d2),
            ));
        }
        if self.d2 >= self.max_steps {
            return Err(LclError::config(
                "train.d2",
                format!("d2 ({}) must be smaller than max_steps ({})", self.d2, self.max_steps),
            ));
        }
        Ok(())
    }
}

/// `lr0` up to and including step `d1`, `lr0 / 10` up to `d2`, `lr0 / 100` after.
pub fn lr_schedule(step: u64, cfg: &TrainConfig) -> f64 {
    if step <= cfg.d1 {
        cfg.lr0
    } else if step <= cfg.d2 {
        cfg.lr0 / 10.0
    } else {
        cfg.lr0 / 100.0
    }
}

/// Weights ~ normal(0, 2 / fan_in); gammas 1, betas and biases 0; running
/// statistics mean 0, var 1.
pub fn init_params<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<ModelParams> {
    ModelParams::from_fn(spec.clone(), |p| match p.kind {
        ParamKind::ConvWeight | ParamKind::DenseWeight => {
            let std = (2.0 / p.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            (0..p.numel()).map(|_| normal.sample(rng) as f32).collect()
        }
        ParamKind::BnGamma => vec![1.0; p.numel()],
        ParamKind::BnBeta | ParamKind::DenseBias => vec![0.0; p.numel()],
    })
}

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub velocity: BTreeMap<String, Tensor<f32>>,
    /// Updates applied so far.
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let velocity = params
            .tensors()
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.dims().to_vec()).expect("parameter shapes are valid")))
            .collect();
        OptimizerState { velocity, step: 0 }
    }
}

/// `v <- momentum * v - lr * g; p <- p + v`, elementwise.
pub fn momentum_update(p: &mut [f32], v: &mut [f32], g: &[f32], lr: f32, momentum: f32) {
    assert!(p.len() == v.len() && v.len() == g.len(), "momentum_update: length mismatch");
    for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

/// One classical-momentum step over every parameter. Fails without
/// touching anything if a gradient is missing, misshapen or non-finite.
pub fn sgd_momentum_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor<f32>>,
    state: &mut OptimizerState,
    lr: f32,
    momentum: f32,
) -> Result<()> {
    for (name, p) in params.tensors() {
        let g = grads
            .get(name)
            .ok_or_else(|| LclError::contract(format!("no gradient for `{name}`")))?;
        if g.shape() != p.shape() {
            return Err(LclError::shape(format!(
                "gradient of `{name}` is {}, parameter is {}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.all_finite() {
            let bad = g.data().iter().filter(|v| !v.is_finite()).count();
            return Err(LclError::NonFinite {
                step: state.step,
                message: format!("{bad} non-finite gradient values in `{name}`"),
            });
        }
        if state.velocity.get(name).map(|v| v.shape()) != Some(p.shape()) {
            return Err(LclError::shape(format!("velocity for `{name}` does not match the parameter")));
        }
    }
    for (name, p) in params.tensors_mut() {
        let v = state.velocity.get_mut(name).expect("checked above");
        momentum_update(p.data_mut(), v.data_mut(), grads[name].data(), lr, momentum);
    }
    state.step += 1;
    Ok(())
}

/// Outcome of one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Zero-based index of the step (the schedule is evaluated at this value).
    pub step: u64,
    pub lr: f64,
    pub loss: f32,
    /// Contexts of the batch whose argmin hit the positive slot (train-mode forward).
    pub correct: usize,
    pub contexts: usize,
}

pub(crate) fn episodes<'a>(dataset: &'a Dataset, batch: &[Lcc]) -> Vec<Episode<'a>> {
    batch
        .iter()
        .map(|lcc| Episode {
            recognizing: dataset.pixels(lcc.recognizing[0]),
            candidates: lcc.contrastive.iter().map(|c| dataset.pixels(c.sample)).collect(),
        })
        .collect()
}

pub struct Trainer {
    params: ModelParams,
    optimizer: OptimizerState,
    cfg: TrainConfig,
    data_rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh parameters from stream `(seed, INIT_STREAM)`; batches will come from `(seed, DATA_STREAM)`.
    pub fn new(spec: &ModelSpec, cfg: &TrainConfig) -> Result<Self> {
        spec.validate()?;
        let params = init_params(spec, &mut rng_stream(cfg.seed, INIT_STREAM))?;
        Ok(Self::from_params(params, cfg))
    }

    pub fn from_params(params: ModelParams, cfg: &TrainConfig) -> Self {
        Trainer {
            optimizer: OptimizerState::new(&params),
            params,
            cfg: cfg.clone(),
            data_rng: rng_stream(cfg.seed, DATA_STREAM),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> u64 {
        self.optimizer.step
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            step: self.optimizer.step,
            seed: self.cfg.seed,
        }
    }

    pub fn next_batch(&mut self, dataset: &Dataset) -> Result<Vec<Lcc>> {
        make_batch(
            dataset,
            self.cfg.batch_size,
            self.params.spec().num_contrastive,
            &mut self.data_rng,
        )
    }

    /// Forward in train mode, loss, backward, momentum update, running-stat update.
    pub fn step_on(&mut self, dataset: &Dataset, batch: &[Lcc]) -> Result<StepRecord> {
        let spec = self.params.spec().clone();
        let step = self.optimizer.step;
        let lr = lr_schedule(step, &self.cfg);

        let pairs = pair_tensor::<f32>(&episodes(dataset, batch), spec.num_contrastive, spec.image_size)?;
        let positives: Vec<usize> = batch.iter().map(Lcc::positive_index).collect();
        let targets = target_tensor::<f32>(&positives, spec.num_contrastive)?;

        let mut graph = Graph::new();
        let bound = crate::model::bind_params(&mut graph, &self.params, true);
        let input = graph.constant(pairs);
        let fwd = lcnn_graph(&mut graph, &bound, &self.params, input, Mode::Train)?;
        let loss_node = graph.contrastive_loss(fwd.cpla, &targets)?;
        let loss = graph.value(loss_node).item()?;
        if !loss.is_finite() {
            return Err(LclError::NonFinite {
                step,
                message: format!("loss is {loss}"),
            });
        }
        let correct = graph
            .value(fwd.cpla)
            .data()
            .chunks_exact(spec.num_contrastive)
            .zip(&positives)
            .filter(|(row, &p)| predict(row).ok() == Some(p))
            .count();

        let mut grads = graph.backward(loss_node)?;
        let grads: BTreeMap<String, Tensor<f32>> = bound
            .iter()
            .map(|(name, id)| {
                let g = grads
                    .take(id)
                    .ok_or_else(|| LclError::contract(format!("no gradient reached `{name}`")))?;
                Ok((name.to_string(), g))
            })
            .collect::<Result<_>>()?;
        sgd_momentum_step(
            &mut self.params,
            &grads,
            &mut self.optimizer,
            lr as f32,
            self.cfg.momentum as f32,
        )?;
        self.params.apply_batch_stats(&fwd.batch_stats)?;
        Ok(StepRecord {
            step,
            lr,
            loss,
            correct,
            contexts: batch.len(),
        })
    }

    /// Draws the next batch from the data stream and trains on it.
    pub fn step(&mut self, dataset: &Dataset) -> Result<StepRecord> {
        let batch = self.next_batch(dataset)?;
        self.step_on(dataset, &batch)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
    pub trace: Vec<StepRecord>,
}

/// A dataset can feed training if it has at least `L` categories and one of them has two samples.
pub fn check_trainable(dataset: &Dataset, num_contrastive: usize) -> Result<()> {
    if dataset.num_categories() < num_contrastive {
        return Err(LclError::config(
            "data",
            format!(
                "training set has {} categories, L = {num_contrastive} needs at least that many",
                dataset.num_categories()
            ),
        ));
    }
    if !dataset.categories().iter().any(|c| c.samples.len() >= 2) {
        return Err(LclError::config("data", "no training category has two samples"));
    }
    Ok(())
}

/// Runs `cfg.max_steps` steps. `observer` sees the trainer after every step
/// (for logging or intermediate checkpoints); an error from it stops training.
pub fn train<F>(spec: &ModelSpec, cfg: &TrainConfig, dataset: &Dataset, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&Trainer, &StepRecord) -> Result<()>,
{
    cfg.validate()?;
    spec.validate()?;
    if dataset.image_size() != spec.image_size {
        return Err(LclError::config(
            "model.image_size",
            format!(
                "model expects {} px images, dataset holds {} px",
                spec.image_size,
                dataset.image_size()
            ),
        ));
    }
    check_trainable(dataset, spec.num_contrastive)?;
    let mut trainer = Trainer::new(spec, cfg)?;
    let mut trace = Vec::with_capacity(cfg.max_steps as usize);
    for _ in 0..cfg.max_steps {
        let rec = trainer.step(dataset)?;
        observer(&trainer, &rec)?;
        trace.push(rec);
    }
    let meta = trainer.meta();
    Ok(TrainOutcome {
        params: trainer.into_params(),
        meta,
        trace,
    })
}

/// CSV with header `step,lr,loss`.
pub fn loss_trace_csv(trace: &[StepRecord]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in trace {
        let _ = writeln!(s, "{},{},{}", r.step, r.lr, r.loss);
    }
    s
}

pub fn write_loss_trace(path: &Path, trace: &[StepRecord]) -> Result<()> {
    fs::write(path, loss_trace_csv(trace)).map_err(|e| LclError::io(format!("writing {}", path.display()), e))
}

/// Full-network gradient check in 64-bit: depth 1, L = 3, 8x8 synthetic
/// pairs, `contexts` contexts, batch norm in training mode.
pub fn lcnn_grad_check(cfg: &GradCheckConfig, contexts: usize) -> Result<GradCheckReport> {
    let spec = ModelSpec::new(1, 8, 3);
    let dataset = synth_glyphs(6, 3, spec.image_size, cfg.seed)?;
    let batch = sample_trials(&dataset, spec.num_contrastive, 1, contexts, cfg.seed)?;
    let pairs = pair_tensor::<f64>(&episodes(&dataset, &batch), spec.num_contrastive, spec.image_size)?;
    let positives: Vec<usize> = batch.iter().map(Lcc::positive_index).collect();
    let targets = target_tensor::<f64>(&positives, spec.num_contrastive)?;

    // Non-trivial gammas, betas and biases so their gradients are generic.
    let mut rng = rng_stream(cfg.seed, INIT_STREAM);
    let base = init_params(&spec, &mut rng)?;
    let mut params: ModelParams<f64> = base.cast();
    let jitter = Normal::new(0.0, 0.1).expect("valid sigma");
    for (name, t) in params.tensors_mut() {
        if name.ends_with(".gamma") || name.ends_with(".beta") || name.ends_with(".bias") {
            for v in t.data_mut() {
                *v += jitter.sample(&mut rng);
            }
        }
    }

    let names: Vec<String> = params.tensors().keys().cloned().collect();
    let values: Vec<Tensor<f64>> = params.tensors().values().cloned().collect();
    let forward = |graph: &mut Graph<f64>, ids: &[NodeId]| -> Result<NodeId> {
        let bound = BoundParams::from_ids(names.iter().cloned().zip(ids.iter().copied()));
        let input = graph.constant(pairs.clone());
        let fwd = lcnn_graph(graph, &bound, &params, input, Mode::Train)?;
        graph.contrastive_loss(fwd.cpla, &targets)
    };
    grad_check(&values, forward, cfg)
}
