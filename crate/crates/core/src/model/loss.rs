use serde::{Deserialize, Serialize};

use crate::error::{LclError, Result};
use crate::tensor::{Element, Tensor};

/// Activations of the `L` contrastive pairs of one context. The lowest one
/// marks the predicted positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CplaVector(pub Vec<f32>);

impl CplaVector {
    pub fn predict(&self) -> Result<usize> {
        predict(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Index of the minimum activation; ties resolve to the lowest index.
pub fn predict<T: PartialOrd + Copy>(activations: &[T]) -> Result<usize> {
    let (first, rest) = activations
        .split_first()
        .ok_or_else(|| LclError::contract("cannot predict from an empty activation vector"))?;
    let mut best = (0, *first);
    for (i, &v) in rest.iter().enumerate() {
        if v < best.1 {
            best = (i + 1, v);
        }
    }
    Ok(best.0)
}

/// Mean over all `N*L` entries of `-(z ln a + (1 - z) ln(1 - a))`, with `a`
/// clamped to `[1e-7, 1 - 1e-7]`. `z = 0` marks the positive object.
pub fn contrastive_loss<T: Element>(activations: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    if activations.shape() != targets.shape() {
        return Err(LclError::shape(format!(
            "activations {} and targets {} differ in shape",
            activations.shape(),
            targets.shape()
        )));
    }
    crate::tensor::validate_targets(targets)?;
    Ok(crate::tensor::contrastive_loss_value(
        activations.data(),
        targets.data(),
    ))
}
