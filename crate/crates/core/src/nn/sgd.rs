use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Rescale gradients so their joint L2 norm never exceeds this.
    #[serde(default)]
    pub grad_clip_norm: Option<f64>,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(crate::Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(crate::Error::Config(format!(
                "momentum {} must lie in [0, 1)",
                self.momentum
            )));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(crate::Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Momentum SGD state: one velocity buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    pub config: OptimizerConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        OptimizerState {
            config,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }
}

pub fn global_norm<T: Real>(grads: &[&[T]]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&v| v * v)
        .sum::<T>()
        .sqrt()
}

/// `v ← μ·v − η·g`, `θ ← θ + v`, after optional global-norm clipping of `g`.
pub fn sgd_step<T: Real>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut OptimizerState<T>,
) -> Result<()> {
    contract!(
        params.len() == grads.len(),
        "{} parameter tensors but {} gradients",
        params.len(),
        grads.len()
    );
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        contract!(
            p.len() == g.len(),
            "parameter {i} has {} elements, gradient {}",
            p.len(),
            g.len()
        );
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
    }
    contract!(
        state.velocity.len() == params.len()
            && state.velocity.iter().zip(params.iter()).all(|(v, p)| v.len() == p.len()),
        "optimizer state was built for a different parameter set"
    );
    let mut scale = T::one();
    if let Some(clip) = state.config.grad_clip_norm {
        let clip = T::lit(clip);
        let norm = global_norm(grads);
        if norm > clip {
            scale = clip / norm;
        }
    }
    let lr = T::lit(state.config.learning_rate);
    let mu = T::lit(state.config.momentum);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((pk, &gk), vk) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vk = mu * *vk - lr * (gk * scale);
            *pk += *vk;
        }
    }
    Ok(())
}
