use crate::error::{contract, Result};
use crate::nn::activation::sigmoid_scalar;
use crate::tensor::{Real, Tensor};

/// Mean weighted binary cross-entropy on logits.
///
/// Each pixel contributes `w·(max(z,0) − z·y + ln(1 + e^{−|z|}))` where
/// `w = pos_weight` for positive labels and 1 otherwise; the total is divided
/// by the pixel count. The returned gradient is `w·(σ(z) − y)/N`.
pub fn sigmoid_ce_loss<T: Real>(
    logits: &Tensor<T>,
    labels: &Tensor<T>,
    pos_weight: T,
) -> Result<(T, Tensor<T>)> {
    contract!(
        logits.shape() == labels.shape(),
        "logits {} and labels {} differ in shape",
        logits.shape(),
        labels.shape()
    );
    contract!(pos_weight > T::zero(), "positive weight must be > 0");
    contract!(!logits.is_empty(), "loss over an empty tensor");
    let inv_n = T::one() / T::from_usize(logits.len()).expect("pixel count");
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.data().iter().zip(labels.data()) {
        contract!(
            y == T::zero() || y == T::one(),
            "label {:?} outside {{0, 1}}",
            y
        );
        let w = if y == T::one() { pos_weight } else { T::one() };
        let l = z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        total += w * l;
        grad.push(w * (sigmoid_scalar(z) - y) * inv_n);
    }
    Ok((total * inv_n, Tensor::from_vec(logits.shape(), grad)?))
}
