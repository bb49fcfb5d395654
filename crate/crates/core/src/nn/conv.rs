use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Learnable 2-D convolution: cross-correlation plus per-channel bias.
///
/// `weight` is `(out_c, in_c, kh, kw)`. Padding is symmetric zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub pad: usize,
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output length of a strided, padded window scan, or `None` if no window fits.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl<T: Real> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>, stride: usize, pad: usize) -> Result<Self> {
        contract!(stride > 0, "convolution stride must be positive");
        contract!(
            bias.len() == weight.shape().n,
            "bias length {} does not match {} output channels",
            bias.len(),
            weight.shape().n
        );
        Ok(ConvParams {
            weight,
            bias,
            stride,
            pad,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape().h, self.weight.shape().w)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel() == (1, 1) && self.stride == 1 && self.pad == 0
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        contract!(
            input.c == self.in_channels(),
            "convolution expects {} input channels, got {} (input {input})",
            self.in_channels(),
            input.c
        );
        let (kh, kw) = self.kernel();
        let oh = conv_out_len(input.h, kh, self.stride, self.pad);
        let ow = conv_out_len(input.w, kw, self.stride, self.pad);
        match (oh, ow) {
            (Some(h), Some(w)) => Ok(Shape::new(input.n, self.out_channels(), h, w)),
            _ => Err(crate::Error::Contract(format!(
                "{kh}x{kw} kernel with pad {} does not fit input {input}",
                self.pad
            ))),
        }
    }

    fn window(&self, input: Shape, output: Shape) -> Window {
        let (kh, kw) = self.kernel();
        Window {
            kh,
            kw,
            stride: self.stride,
            pad_top: self.pad,
            pad_left: self.pad,
            img_h: input.h,
            img_w: input.w,
            out_h: output.h,
            out_w: output.w,
        }
    }
}

/// Placement of kernel windows over an image: the shared geometry of
/// `im2col` (convolution) and its adjoint `col2im` (transposed convolution).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub img_h: usize,
    pub img_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    fn placements(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = o * self.stride + k;
        if pos < pad || pos - pad >= limit {
            None
        } else {
            Some(pos - pad)
        }
    }
}

/// Unfolds `channels` image planes into a `(channels·kh·kw) × (out_h·out_w)` matrix.
pub(crate) fn im2col<T: Real>(img: &[T], channels: usize, win: &Window, cols: &mut [T]) {
    let p = win.placements();
    let img_plane = win.img_h * win.img_w;
    for ch in 0..channels {
        let plane = &img[ch * img_plane..(ch + 1) * img_plane];
        for ky in 0..win.kh {
            for kx in 0..win.kw {
                let row = ((ch * win.kh + ky) * win.kw + kx) * p;
                let dst = &mut cols[row..row + p];
                for oy in 0..win.out_h {
                    let line = &mut dst[oy * win.out_w..(oy + 1) * win.out_w];
                    match win.source(oy, ky, win.pad_top, win.img_h) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            let src = &plane[iy * win.img_w..(iy + 1) * win.img_w];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match win.source(ox, kx, win.pad_left, win.img_w) {
                                    Some(ix) => src[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating overlaps.
/// Contributions that land in the padding are dropped.
pub(crate) fn col2im_add<T: Real>(cols: &[T], channels: usize, win: &Window, img: &mut [T]) {
    let p = win.placements();
    let img_plane = win.img_h * win.img_w;
    for ch in 0..channels {
        let plane = &mut img[ch * img_plane..(ch + 1) * img_plane];
        for ky in 0..win.kh {
            for kx in 0..win.kw {
                let row = ((ch * win.kh + ky) * win.kw + kx) * p;
                let src = &cols[row..row + p];
                for oy in 0..win.out_h {
                    let Some(iy) = win.source(oy, ky, win.pad_top, win.img_h) else {
                        continue;
                    };
                    let dst = &mut plane[iy * win.img_w..(iy + 1) * win.img_w];
                    let line = &src[oy * win.out_w..(oy + 1) * win.out_w];
                    for (ox, &v) in line.iter().enumerate() {
                        if let Some(ix) = win.source(ox, kx, win.pad_left, win.img_w) {
                            dst[ix] += v;
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ys = p.output_shape(xs)?;
    let win = p.window(xs, ys);
    let k = p.in_channels() * win.kh * win.kw;
    let np = ys.plane();
    let oc = p.out_channels();
    let mut y = Tensor::zeros(ys);
    let mut cols = if p.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * np]
    };
    for n in 0..xs.n {
        let rhs: &[T] = if p.is_pointwise() {
            x.item(n)
        } else {
            im2col(x.item(n), xs.c, &win, &mut cols);
            &cols
        };
        let out = y.item_mut(n);
        T::gemm(
            oc,
            k,
            np,
            T::one(),
            p.weight.data(),
            (k, 1),
            rhs,
            (np, 1),
            T::zero(),
            out,
            (np, 1),
        );
        for (o, &b) in p.bias.iter().enumerate() {
            for v in &mut out[o * np..(o + 1) * np] {
                *v += b;
            }
        }
    }
    Ok(y)
}

pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let ys = p.output_shape(xs)?;
    contract!(
        grad_out.shape() == ys,
        "convolution gradient has shape {}, forward output is {ys}",
        grad_out.shape()
    );
    let win = p.window(xs, ys);
    let k = p.in_channels() * win.kh * win.kw;
    let np = ys.plane();
    let oc = p.out_channels();
    let pointwise = p.is_pointwise();
    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gb = vec![T::zero(); oc];
    let mut cols = vec![T::zero(); if pointwise { 0 } else { k * np }];
    let mut gcols = vec![T::zero(); if pointwise { 0 } else { k * np }];
    for n in 0..xs.n {
        let gy = grad_out.item(n);
        for (o, b) in gb.iter_mut().enumerate() {
            *b += gy[o * np..(o + 1) * np].iter().copied().sum();
        }
        let lhs: &[T] = if pointwise {
            x.item(n)
        } else {
            im2col(x.item(n), xs.c, &win, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        T::gemm(
            oc,
            np,
            k,
            T::one(),
            gy,
            (np, 1),
            lhs,
            (1, np),
            T::one(),
            gw.data_mut(),
            (k, 1),
        );
        // dcols = Wᵀ · dY
        let target: &mut [T] = if pointwise { gx.item_mut(n) } else { &mut gcols };
        T::gemm(
            k,
            oc,
            np,
            T::one(),
            p.weight.data(),
            (1, k),
            gy,
            (np, 1),
            T::zero(),
            target,
            (np, 1),
        );
        if !pointwise {
            col2im_add(&gcols, xs.c, &win, gx.item_mut(n));
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{direct_conv, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Tensor<f64> = random_tensor(&mut rng, Shape::new(2, 1, 5, 4));
        let p = ConvParams::new(
            Tensor::filled(Shape::new(1, 1, 1, 1), 1.0),
            vec![0.0],
            1,
            0,
        )
        .unwrap();
        assert_eq!(conv_forward(&x, &p).unwrap(), x);
        let g = conv_backward(&x, &p, &x).unwrap();
        assert_eq!(g.input, x);
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Tensor<f64> = random_tensor(&mut rng, Shape::new(3, 2, 3, 3));
        let p = ConvParams::new(w, vec![0.5, -1.0, 2.0], 2, 1).unwrap();
        let y = conv_forward(&Tensor::zeros(Shape::new(1, 2, 6, 7)), &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 3, 4));
        for c in 0..3 {
            assert!(y.plane(0, c).iter().all(|&v| v == p.bias[c]));
        }
    }

    #[test]
    fn four_by_four_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 1, 4, 4));
        let w: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 1, 3, 3));
        let p = ConvParams::new(w, vec![0.25], 1, 0).unwrap();
        let y = conv_forward(&x, &p).unwrap();
        let oracle = direct_conv(&x, &p);
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        for (a, b) in y.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 2, 5, 5));
        let w: Tensor<f64> = random_tensor(&mut rng, Shape::new(3, 2, 3, 3));
        let p = ConvParams::new(w, vec![0.1; 3], 1, 1).unwrap();
        let gy = Tensor::zeros(Shape::new(1, 3, 5, 5));
        let g = conv_backward(&x, &p, &gy).unwrap();
        assert_eq!(g.input.max_abs(), 0.0);
        assert_eq!(g.weight.max_abs(), 0.0);
        assert!(g.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn shape_mismatch_names_dimensions() {
        let p = ConvParams::<f32>::new(Tensor::zeros(Shape::new(4, 3, 3, 3)), vec![0.0; 4], 1, 1)
            .unwrap();
        let err = conv_forward(&Tensor::zeros(Shape::new(1, 2, 8, 8)), &p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3 input channels") && msg.contains("got 2"), "{msg}");
        let too_small = conv_forward(
            &Tensor::zeros(Shape::new(1, 3, 1, 1)),
            &ConvParams::new(Tensor::zeros(Shape::new(1, 3, 3, 3)), vec![0.0], 1, 0).unwrap(),
        );
        assert!(too_small.is_err());
        let bad_grad = conv_backward(
            &Tensor::zeros(Shape::new(1, 3, 8, 8)),
            &p,
            &Tensor::zeros(Shape::new(1, 4, 7, 8)),
        );
        assert!(bad_grad.is_err());
    }
}
