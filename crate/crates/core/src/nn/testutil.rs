use rand::Rng;

use crate::nn::conv::ConvParams;
use crate::tensor::{Real, Shape, Tensor};

pub fn random_tensor<T: Real>(rng: &mut impl Rng, shape: Shape) -> Tensor<T> {
    let data = (0..shape.len())
        .map(|_| T::lit(rng.gen_range(-1.0..1.0)))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Textbook nested-loop cross-correlation.
pub fn direct_conv(x: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
    let ys = p.output_shape(x.shape()).unwrap();
    let (kh, kw) = p.kernel();
    let xs = x.shape();
    Tensor::from_fn(ys, |n, o, oy, ox| {
        let mut acc = p.bias[o];
        for c in 0..xs.c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                    let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += x.at(n, c, iy as usize, ix as usize) * p.weight.at(o, c, ky, kx);
                    }
                }
            }
        }
        acc
    })
}
