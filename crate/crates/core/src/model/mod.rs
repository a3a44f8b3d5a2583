//! The pair-contrast network: a weight-shared residual embedding network
//! applied to every (recognizing, contrastive) image pair, followed by one
//! dense layer that scores all pairs of a context jointly.

mod loss;
mod network;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LclError, Result};
use crate::tensor::{BatchStats, Element, Tensor};

pub use loss::{contrastive_loss, predict, CplaVector};
pub use network::{
    bind_params, deg_forward, dp_forward, fewshot_forward, lcnn_forward, lcnn_graph, pair_tensor,
    target_tensor, BoundParams, Episode, ForwardOutput, GraphForward, Mode, BN_EPS,
};

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Residual units per stage (`n`).
    pub depth: usize,
    /// Side length of the square input images.
    pub image_size: usize,
    /// Channels of a stacked pair; always 2 (recognizing, contrastive).
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    /// Width of the difference embedding and of the last stage.
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Contrastive objects per context (`L`).
    pub num_contrastive: usize,
}

fn default_in_channels() -> usize {
    2
}

fn default_embed_dim() -> usize {
    64
}

impl ModelSpec {
    pub fn new(depth: usize, image_size: usize, num_contrastive: usize) -> Self {
        ModelSpec {
            depth,
            image_size,
            in_channels: 2,
            embed_dim: 64,
            num_contrastive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(LclError::config("model.depth", "must be at least 1"));
        }
        if self.in_channels != 2 {
            return Err(LclError::config("model.in_channels", "pairs always have 2 channels"));
        }
        if self.embed_dim < 4 || self.embed_dim % 4 != 0 {
            return Err(LclError::config("model.embed_dim", "must be a positive multiple of 4"));
        }
        if self.num_contrastive < 2 {
            return Err(LclError::config("model.num_contrastive", "need at least 2 contrastive objects"));
        }
        if self.image_size < 2 {
            return Err(LclError::config("model.image_size", "must be at least 2"));
        }
        Ok(())
    }

    /// Weighted layers: two convs per unit over three stages, the stem conv and the dense layer.
    pub fn layer_count(&self) -> usize {
        (self.depth * 2) * 3 + 2
    }

    pub fn stage_widths(&self) -> [usize; 3] {
        [self.embed_dim / 4, self.embed_dim / 2, self.embed_dim]
    }

    /// Residual units in forward order.
    pub fn units(&self) -> Vec<UnitLayout> {
        let widths = self.stage_widths();
        let mut units = Vec::with_capacity(3 * self.depth);
        let mut in_ch = widths[0];
        for (s, &out_ch) in widths.iter().enumerate() {
            for u in 0..self.depth {
                let stride = if s > 0 && u == 0 { 2 } else { 1 };
                units.push(UnitLayout {
                    prefix: format!("deg.stage{}.unit{}", s + 1, u + 1),
                    in_channels: in_ch,
                    out_channels: out_ch,
                    stride,
                    projection: in_ch != out_ch || stride != 1,
                });
                in_ch = out_ch;
            }
        }
        units
    }
}

/// One pre-activation residual unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitLayout {
    pub prefix: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub projection: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    ConvWeight,
    DenseWeight,
    DenseBias,
    BnGamma,
    BnBeta,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    fn new(name: impl Into<String>, dims: Vec<usize>, kind: ParamKind) -> Self {
        ParamSpec {
            name: name.into(),
            dims,
            kind,
        }
    }

    /// Inputs feeding one output unit.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            ParamKind::ConvWeight => self.dims[1..].iter().product(),
            ParamKind::DenseWeight => self.dims[0],
            _ => 1,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Batch-norm layers (name prefix, channels) in forward order.
pub fn bn_layers(spec: &ModelSpec) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for unit in spec.units() {
        out.push((format!("{}.bn1", unit.prefix), unit.in_channels));
        out.push((format!("{}.bn2", unit.prefix), unit.out_channels));
    }
    out.push(("deg.final_bn".to_string(), spec.embed_dim));
    out
}

/// Every trainable tensor of the network with its shape.
pub fn build_deg(spec: &ModelSpec) -> Result<Vec<ParamSpec>> {
    spec.validate()?;
    let widths = spec.stage_widths();
    let mut out = vec![ParamSpec::new(
        "deg.stem.conv",
        vec![widths[0], spec.in_channels, 3, 3],
        ParamKind::ConvWeight,
    )];
    for unit in spec.units() {
        let p = &unit.prefix;
        out.push(ParamSpec::new(format!("{p}.bn1.gamma"), vec![unit.in_channels], ParamKind::BnGamma));
        out.push(ParamSpec::new(format!("{p}.bn1.beta"), vec![unit.in_channels], ParamKind::BnBeta));
        out.push(ParamSpec::new(
            format!("{p}.conv1"),
            vec![unit.out_channels, unit.in_channels, 3, 3],
            ParamKind::ConvWeight,
        ));
        out.push(ParamSpec::new(format!("{p}.bn2.gamma"), vec![unit.out_channels], ParamKind::BnGamma));
        out.push(ParamSpec::new(format!("{p}.bn2.beta"), vec![unit.out_channels], ParamKind::BnBeta));
        out.push(ParamSpec::new(
            format!("{p}.conv2"),
            vec![unit.out_channels, unit.out_channels, 3, 3],
            ParamKind::ConvWeight,
        ));
        if unit.projection {
            out.push(ParamSpec::new(
                format!("{p}.proj"),
                vec![unit.out_channels, unit.in_channels, 1, 1],
                ParamKind::ConvWeight,
            ));
        }
    }
    out.push(ParamSpec::new("deg.final_bn.gamma", vec![spec.embed_dim], ParamKind::BnGamma));
    out.push(ParamSpec::new("deg.final_bn.beta", vec![spec.embed_dim], ParamKind::BnBeta));
    out.extend(dp_params(spec));
    Ok(out)
}

fn dp_params(spec: &ModelSpec) -> Vec<ParamSpec> {
    let l = spec.num_contrastive;
    vec![
        ParamSpec::new("dp.weight", vec![l * spec.embed_dim, l], ParamKind::DenseWeight),
        ParamSpec::new("dp.bias", vec![l], ParamKind::DenseBias),
    ]
}

/// Exponential moving averages of batch-norm statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// False until a training step (or initialisation / checkpoint load) provides values.
    pub recorded: bool,
}

/// Weight of the old value in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.99;

impl<T: Element> RunningStats<T> {
    pub fn unrecorded(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            recorded: false,
        }
    }

    pub fn initial(channels: usize) -> Self {
        RunningStats {
            recorded: true,
            ..Self::unrecorded(channels)
        }
    }

    /// `new = 0.99 * old + 0.01 * batch`.
    pub fn update(&mut self, batch: &BatchStats<T>) {
        let keep = T::from_f64(BN_MOMENTUM);
        let take = T::one() - keep;
        for (m, &b) in self.mean.iter_mut().zip(&batch.mean) {
            *m = keep * *m + take * b;
        }
        for (v, &b) in self.var.iter_mut().zip(&batch.var) {
            *v = keep * *v + take * b;
        }
        self.recorded = true;
    }
}

/// All learnable tensors plus batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Element = f32> {
    spec: ModelSpec,
    tensors: BTreeMap<String, Tensor<T>>,
    bn_stats: BTreeMap<String, RunningStats<T>>,
}

impl<T: Element> ModelParams<T> {
    /// Checks every tensor and statistic against the shapes derived from `spec`.
    pub fn new(
        spec: ModelSpec,
        tensors: BTreeMap<String, Tensor<T>>,
        bn_stats: BTreeMap<String, RunningStats<T>>,
    ) -> Result<Self> {
        let manifest = build_deg(&spec)?;
        if tensors.len() != manifest.len() {
            return Err(LclError::shape(format!(
                "expected {} parameter tensors for this spec, got {}",
                manifest.len(),
                tensors.len()
            )));
        }
        for p in &manifest {
            let t = tensors
                .get(&p.name)
                .ok_or_else(|| LclError::shape(format!("missing parameter `{}`", p.name)))?;
            t.expect_dims(&p.name, &p.dims)?;
        }
        let layers = bn_layers(&spec);
        if bn_stats.len() != layers.len() {
            return Err(LclError::shape(format!(
                "expected {} batch-norm layers, got {}",
                layers.len(),
                bn_stats.len()
            )));
        }
        for (name, c) in &layers {
            let s = bn_stats
                .get(name)
                .ok_or_else(|| LclError::shape(format!("missing running stats `{name}`")))?;
            if s.mean.len() != *c || s.var.len() != *c {
                return Err(LclError::shape(format!(
                    "running stats `{name}` have {}/{} channels, expected {c}",
                    s.mean.len(),
                    s.var.len()
                )));
            }
        }
        Ok(ModelParams {
            spec,
            tensors,
            bn_stats,
        })
    }

    /// Every tensor filled by `fill(param)`; running stats at their initial values.
    pub fn from_fn(spec: ModelSpec, mut fill: impl FnMut(&ParamSpec) -> Vec<T>) -> Result<Self> {
        let manifest = build_deg(&spec)?;
        let mut tensors = BTreeMap::new();
        for p in &manifest {
            tensors.insert(p.name.clone(), Tensor::new(p.dims.clone(), fill(p))?);
        }
        let bn_stats = bn_layers(&spec)
            .into_iter()
            .map(|(name, c)| (name, RunningStats::initial(c)))
            .collect();
        Self::new(spec, tensors, bn_stats)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| LclError::contract(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| LclError::contract(format!("unknown parameter `{name}`")))
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn bn_stats(&self) -> &BTreeMap<String, RunningStats<T>> {
        &self.bn_stats
    }

    pub fn running_stats(&self, layer: &str) -> Result<&RunningStats<T>> {
        self.bn_stats
            .get(layer)
            .ok_or_else(|| LclError::contract(format!("unknown batch-norm layer `{layer}`")))
    }

    pub fn running_stats_mut(&mut self, layer: &str) -> Result<&mut RunningStats<T>> {
        self.bn_stats
            .get_mut(layer)
            .ok_or_else(|| LclError::contract(format!("unknown batch-norm layer `{layer}`")))
    }

    /// Folds training-mode batch statistics into the running averages.
    pub fn apply_batch_stats(&mut self, stats: &[(String, BatchStats<T>)]) -> Result<()> {
        for (name, s) in stats {
            self.running_stats_mut(name)?.update(s);
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Element>(&self) -> ModelParams<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::from_f64(x.to_f64_lossy())).collect::<Vec<U>>();
        ModelParams {
            spec: self.spec.clone(),
            tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
            bn_stats: self
                .bn_stats
                .iter()
                .map(|(k, s)| {
                    (
                        k.clone(),
                        RunningStats {
                            mean: conv(&s.mean),
                            var: conv(&s.var),
                            recorded: s.recorded,
                        },
                    )
                })
                .collect(),
        }
    }
}
