use crate::error::{contract, Result};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient is zero at exactly zero.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    contract!(
        x.shape() == grad_out.shape(),
        "relu gradient has shape {}, input is {}",
        grad_out.shape(),
        x.shape()
    );
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

#[inline]
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn relu_clamps_and_routes() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::filled(x.shape(), 7.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 7.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid_scalar(-800.0f64), 0.0);
        assert_eq!(sigmoid_scalar(800.0f64), 1.0);
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
    }
}
