use std::collections::BTreeMap;

use super::{CplaVector, ModelParams};
use crate::error::{LclError, Result};
use crate::tensor::{BatchStats, Element, Graph, NodeId, Tensor};

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are reported for the caller to fold in.
    Train,
    /// Stored running statistics; every pair is processed independently.
    Eval,
}

/// Parameter name -> graph node.
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    ids: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| LclError::contract(format!("parameter `{name}` is not bound to this graph")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Binding for nodes created elsewhere (e.g. by a gradient checker).
    pub fn from_ids(ids: impl IntoIterator<Item = (String, NodeId)>) -> Self {
        BoundParams {
            ids: ids.into_iter().collect(),
        }
    }
}

pub fn bind_params<T: Element>(graph: &mut Graph<T>, params: &ModelParams<T>, trainable: bool) -> BoundParams {
    let ids = params
        .tensors()
        .iter()
        .map(|(name, t)| {
            let id = if trainable {
                graph.param(t.clone())
            } else {
                graph.constant(t.clone())
            };
            (name.clone(), id)
        })
        .collect();
    BoundParams { ids }
}

struct Ctx<'a, T: Element> {
    graph: &'a mut Graph<T>,
    bound: &'a BoundParams,
    params: &'a ModelParams<T>,
    mode: Mode,
    stats: Vec<(String, BatchStats<T>)>,
}

impl<T: Element> Ctx<'_, T> {
    fn bn(&mut self, layer: &str, x: NodeId) -> Result<NodeId> {
        let gamma = self.bound.id(&format!("{layer}.gamma"))?;
        let beta = self.bound.id(&format!("{layer}.beta"))?;
        match self.mode {
            Mode::Train => {
                let (y, s) = self.graph.batch_norm_train(x, gamma, beta, BN_EPS)?;
                self.stats.push((layer.to_string(), s));
                Ok(y)
            }
            Mode::Eval => {
                let rs = self.params.running_stats(layer)?;
                if !rs.recorded {
                    return Err(LclError::UninitializedStats(layer.to_string()));
                }
                self.graph.batch_norm_eval(x, gamma, beta, &rs.mean, &rs.var, BN_EPS)
            }
        }
    }

    fn bn_relu(&mut self, layer: &str, x: NodeId) -> Result<NodeId> {
        let y = self.bn(layer, x)?;
        self.graph.relu(y)
    }

    fn conv(&mut self, name: &str, x: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let w = self.bound.id(name)?;
        self.graph.conv2d(x, w, stride, pad)
    }
}

/// Difference embeddings `[B, embed_dim]` for a `[B, 2, H, W]` pair batch.
///
/// Channel 0 holds the recognizing image, channel 1 the contrastive image.
pub fn deg_forward<T: Element>(
    graph: &mut Graph<T>,
    bound: &BoundParams,
    params: &ModelParams<T>,
    pairs: NodeId,
    mode: Mode,
) -> Result<(NodeId, Vec<(String, BatchStats<T>)>)> {
    let spec = params.spec();
    let dims = graph.value(pairs).dims().to_vec();
    if dims.len() != 4 || dims[1] != spec.in_channels {
        return Err(LclError::shape(format!(
            "pair batch must be [B,{},H,W], got {dims:?}",
            spec.in_channels
        )));
    }
    if dims[2] != spec.image_size || dims[3] != spec.image_size {
        return Err(LclError::shape(format!(
            "model expects {0}x{0} images, got {1}x{2}",
            spec.image_size, dims[2], dims[3]
        )));
    }
    let mut ctx = Ctx {
        graph,
        bound,
        params,
        mode,
        stats: Vec::new(),
    };
    let mut h = ctx.conv("deg.stem.conv", pairs, 1, 1)?;
    for unit in spec.units() {
        let p = &unit.prefix;
        let pre = ctx.bn_relu(&format!("{p}.bn1"), h)?;
        let shortcut = if unit.projection {
            ctx.conv(&format!("{p}.proj"), pre, unit.stride, 0)?
        } else {
            h
        };
        let t = ctx.conv(&format!("{p}.conv1"), pre, unit.stride, 1)?;
        let t = ctx.bn_relu(&format!("{p}.bn2"), t)?;
        let t = ctx.conv(&format!("{p}.conv2"), t, 1, 1)?;
        h = ctx.graph.add(t, shortcut)?;
    }
    let h = ctx.bn_relu("deg.final_bn", h)?;
    let emb = ctx.graph.global_avg_pool(h)?;
    Ok((emb, ctx.stats))
}

/// Joint activations `[N, L]` from `[N*L, D]` embeddings ordered context-major.
pub fn dp_forward<T: Element>(
    graph: &mut Graph<T>,
    bound: &BoundParams,
    embeddings: NodeId,
    num_contrastive: usize,
) -> Result<NodeId> {
    let dims = graph.value(embeddings).dims().to_vec();
    if dims.len() != 2 || num_contrastive == 0 || dims[0] % num_contrastive != 0 {
        return Err(LclError::shape(format!(
            "embeddings {dims:?} cannot be grouped into contexts of {num_contrastive}"
        )));
    }
    let n = dims[0] / num_contrastive;
    let block = graph.reshape(embeddings, vec![n, num_contrastive * dims[1]])?;
    let w = bound.id("dp.weight")?;
    let b = bound.id("dp.bias")?;
    let w_dims = graph.value(w).dims();
    if w_dims[1] != num_contrastive {
        return Err(LclError::shape(format!(
            "difference perceptron was built for L = {}, contexts have L = {num_contrastive}",
            w_dims[1]
        )));
    }
    let logits = graph.dense(block, w, b)?;
    graph.sigmoid(logits)
}

pub struct GraphForward<T> {
    pub embeddings: NodeId,
    /// `[N, L]` activations.
    pub cpla: NodeId,
    pub batch_stats: Vec<(String, BatchStats<T>)>,
}

pub fn lcnn_graph<T: Element>(
    graph: &mut Graph<T>,
    bound: &BoundParams,
    params: &ModelParams<T>,
    pairs: NodeId,
    mode: Mode,
) -> Result<GraphForward<T>> {
    let (embeddings, batch_stats) = deg_forward(graph, bound, params, pairs, mode)?;
    let cpla = dp_forward(graph, bound, embeddings, params.spec().num_contrastive)?;
    Ok(GraphForward {
        embeddings,
        cpla,
        batch_stats,
    })
}

/// Image views for one one-shot context.
#[derive(Clone, Debug)]
pub struct Episode<'a> {
    pub recognizing: &'a [f32],
    pub candidates: Vec<&'a [f32]>,
}

/// Stacks every (recognizing, candidate) pair into `[N*L, 2, S, S]`.
pub fn pair_tensor<T: Element>(episodes: &[Episode<'_>], num_contrastive: usize, image_size: usize) -> Result<Tensor<T>> {
    if episodes.is_empty() {
        return Err(LclError::contract("at least one context is required"));
    }
    let plane = image_size * image_size;
    let mut data = Vec::with_capacity(episodes.len() * num_contrastive * 2 * plane);
    for (i, ep) in episodes.iter().enumerate() {
        if ep.candidates.len() != num_contrastive {
            return Err(LclError::contract(format!(
                "context {i} has {} contrastive objects, expected {num_contrastive}",
                ep.candidates.len()
            )));
        }
        if ep.recognizing.len() != plane || ep.candidates.iter().any(|c| c.len() != plane) {
            return Err(LclError::contract(format!(
                "context {i} contains an image that is not {image_size}x{image_size}"
            )));
        }
        for cand in &ep.candidates {
            data.extend(ep.recognizing.iter().map(|&v| T::from_f64(v as f64)));
            data.extend(cand.iter().map(|&v| T::from_f64(v as f64)));
        }
    }
    Tensor::new(vec![episodes.len() * num_contrastive, 2, image_size, image_size], data)
}

/// Expected activations: 0 at the positive slot, 1 elsewhere.
pub fn target_tensor<T: Element>(positives: &[usize], num_contrastive: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::one(); positives.len() * num_contrastive];
    for (row, &p) in positives.iter().enumerate() {
        if p >= num_contrastive {
            return Err(LclError::contract(format!(
                "positive index {p} out of range for L = {num_contrastive}"
            )));
        }
        data[row * num_contrastive + p] = T::zero();
    }
    Tensor::new(vec![positives.len(), num_contrastive], data)
}

pub struct ForwardOutput {
    pub cpla: Vec<CplaVector>,
    /// Empty in eval mode.
    pub batch_stats: Vec<(String, BatchStats<f32>)>,
}

/// Runs the whole network over a batch of contexts.
///
/// Train mode does not touch `params`; fold `batch_stats` in with
/// [`ModelParams::apply_batch_stats`] if the running averages should move.
pub fn lcnn_forward(params: &ModelParams, episodes: &[Episode<'_>], mode: Mode) -> Result<ForwardOutput> {
    let spec = params.spec();
    let pairs = pair_tensor::<f32>(episodes, spec.num_contrastive, spec.image_size)?;
    let mut graph = Graph::new();
    let bound = bind_params(&mut graph, params, false);
    let input = graph.constant(pairs);
    let out = lcnn_graph(&mut graph, &bound, params, input, mode)?;
    let l = spec.num_contrastive;
    let cpla = graph
        .value(out.cpla)
        .data()
        .chunks_exact(l)
        .map(|row| CplaVector(row.to_vec()))
        .collect();
    Ok(ForwardOutput {
        cpla,
        batch_stats: out.batch_stats,
    })
}

/// Few-shot context: one one-shot context per recognizing image over the
/// shared candidates, activations summed elementwise.
pub fn fewshot_forward(
    params: &ModelParams,
    recognizing: &[&[f32]],
    candidates: &[&[f32]],
    mode: Mode,
) -> Result<CplaVector> {
    if recognizing.is_empty() {
        return Err(LclError::contract("few-shot context needs at least one recognizing image"));
    }
    let episodes: Vec<Episode<'_>> = recognizing
        .iter()
        .map(|&r| Episode {
            recognizing: r,
            candidates: candidates.to_vec(),
        })
        .collect();
    let out = lcnn_forward(params, &episodes, mode)?;
    let mut rows = out.cpla.into_iter();
    let mut total = rows.next().expect("at least one row");
    for row in rows {
        for (acc, v) in total.0.iter_mut().zip(row.0) {
            *acc += v;
        }
    }
    Ok(total)
}
