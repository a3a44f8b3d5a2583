//! Central finite-difference verification of graph gradients (64-bit only).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, Tensor};
use crate::error::{LclError, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Coordinates sampled from each parameter tensor (all of them if the tensor is smaller).
    pub coords_per_tensor: usize,
    pub seed: u64,
    /// Inject a broken relu backward (test fixture).
    pub corrupt_backward: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            coords_per_tensor: 12,
            seed: 0,
            corrupt_backward: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// (tensor index, flat element index) of the worst coordinate.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backward-pass gradients against central differences.
///
/// `forward` receives a fresh graph and one param node per tensor in
/// `params` (same order) and must return a scalar node. It has to be
/// deterministic; batch norm in training mode is fine because batch
/// statistics are a pure function of the inputs.
pub fn grad_check<F>(params: &[Tensor<f64>], forward: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    if params.is_empty() {
        return Err(LclError::contract("grad_check needs at least one parameter"));
    }
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = forward(&mut g, &ids)?;
        g.value(out).item()
    };

    let mut g = Graph::new();
    if cfg.corrupt_backward {
        g.corrupt_relu_backward();
    }
    let ids: Vec<NodeId> = params.iter().map(|t| g.param(t.clone())).collect();
    let out = forward(&mut g, &ids)?;
    let grads = g.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (ti, id) in ids.iter().enumerate() {
        let n = params[ti].numel();
        let analytic = grads.get(*id);
        let picks: Vec<usize> = if n <= cfg.coords_per_tensor {
            (0..n).collect()
        } else {
            let mut v = index::sample(&mut rng, n, cfg.coords_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        for i in picks {
            let base = params[ti].data()[i];
            work[ti].data_mut()[i] = base + cfg.h;
            let plus = eval(&work)?;
            work[ti].data_mut()[i] = base - cfg.h;
            let minus = eval(&work)?;
            work[ti].data_mut()[i] = base;

            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic.map_or(0.0, |t| t.data()[i]);
            let err = relative_error(a, numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = (ti, i);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
