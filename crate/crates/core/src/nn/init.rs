use rand::Rng;

use crate::tensor::{Real, Shape, Tensor};

/// Zero-mean uniform weights with standard deviation `√(2 / fan_in)`.
pub fn he_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, shape: Shape, fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..shape.len())
        .map(|_| T::lit(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("generated length")
}
