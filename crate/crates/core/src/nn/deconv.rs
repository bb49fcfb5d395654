use crate::error::{contract, Result};
use crate::nn::conv::{col2im_add, im2col, Window};
use crate::tensor::{Real, Shape, Tensor};

/// Transposed convolution (the adjoint of [`conv_forward`](super::conv_forward)
/// for the same kernel), used to upsample coarse maps.
///
/// `weight` is `(in_c, out_c, kh, kw)`, which is exactly the layout of the
/// convolution weight it is the adjoint of. `crop` trims that many pixels
/// symmetrically from every border of the full output.
#[derive(Clone, Debug, PartialEq)]
pub struct DeconvParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub crop: usize,
}

#[derive(Clone, Debug)]
pub struct DeconvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DeconvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>, stride: usize, crop: usize) -> Result<Self> {
        contract!(stride > 0, "deconvolution stride must be positive");
        contract!(
            bias.len() == weight.shape().c,
            "bias length {} does not match {} output channels",
            bias.len(),
            weight.shape().c
        );
        Ok(DeconvParams {
            weight,
            bias,
            stride,
            crop,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().c
    }

    /// Uncropped output length `(in − 1)·stride + k` along each axis.
    pub fn full_size(&self, h: usize, w: usize) -> (usize, usize) {
        let ws = self.weight.shape();
        (
            (h.max(1) - 1) * self.stride + ws.h,
            (w.max(1) - 1) * self.stride + ws.w,
        )
    }

    /// Output size with the symmetric `crop` applied.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (fh, fw) = self.full_size(h, w);
        contract!(
            fh > 2 * self.crop && fw > 2 * self.crop,
            "crop {} removes the whole {fh}x{fw} deconvolution output",
            self.crop
        );
        Ok((fh - 2 * self.crop, fw - 2 * self.crop))
    }

    fn window(&self, input: Shape, out_h: usize, out_w: usize) -> Result<Window> {
        contract!(
            input.c == self.in_channels(),
            "deconvolution expects {} input channels, got {} (input {input})",
            self.in_channels(),
            input.c
        );
        let (fh, fw) = self.full_size(input.h, input.w);
        contract!(
            out_h >= 1 && out_w >= 1 && out_h <= fh && out_w <= fw,
            "deconvolution output {out_h}x{out_w} outside 1..={fh}x{fw}"
        );
        let ws = self.weight.shape();
        Ok(Window {
            kh: ws.h,
            kw: ws.w,
            stride: self.stride,
            pad_top: (fh - out_h) / 2,
            pad_left: (fw - out_w) / 2,
            img_h: out_h,
            img_w: out_w,
            out_h: input.h,
            out_w: input.w,
        })
    }
}

pub fn deconv_forward<T: Real>(x: &Tensor<T>, p: &DeconvParams<T>) -> Result<Tensor<T>> {
    let (h, w) = p.output_size(x.shape().h, x.shape().w)?;
    deconv_forward_to(x, p, h, w)
}

/// Transposed convolution whose full output is cropped to `out_h × out_w`,
/// centred (the extra pixel of an odd trim goes to the bottom/right).
pub fn deconv_forward_to<T: Real>(
    x: &Tensor<T>,
    p: &DeconvParams<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>> {
    let xs = x.shape();
    let win = p.window(xs, out_h, out_w)?;
    let oc = p.out_channels();
    let ic = p.in_channels();
    let k = oc * win.kh * win.kw;
    let np = xs.plane();
    let ys = Shape::new(xs.n, oc, out_h, out_w);
    let mut y = Tensor::zeros(ys);
    let mut cols = vec![T::zero(); k * np];
    for n in 0..xs.n {
        // cols = Wᵀ · x
        T::gemm(
            k,
            ic,
            np,
            T::one(),
            p.weight.data(),
            (1, k),
            x.item(n),
            (np, 1),
            T::zero(),
            &mut cols,
            (np, 1),
        );
        let out = y.item_mut(n);
        col2im_add(&cols, oc, &win, out);
        let plane = out_h * out_w;
        for (o, &b) in p.bias.iter().enumerate() {
            for v in &mut out[o * plane..(o + 1) * plane] {
                *v += b;
            }
        }
    }
    Ok(y)
}

/// Gradients of [`deconv_forward_to`]; the output size is read off `grad_out`.
pub fn deconv_backward<T: Real>(
    x: &Tensor<T>,
    p: &DeconvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<DeconvGrads<T>> {
    let xs = x.shape();
    let gs = grad_out.shape();
    contract!(
        gs.n == xs.n && gs.c == p.out_channels(),
        "deconvolution gradient {gs} does not match input {xs} with {} output channels",
        p.out_channels()
    );
    let win = p.window(xs, gs.h, gs.w)?;
    let oc = p.out_channels();
    let ic = p.in_channels();
    let k = oc * win.kh * win.kw;
    let np = xs.plane();
    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gb = vec![T::zero(); oc];
    let mut gcols = vec![T::zero(); k * np];
    let plane = gs.plane();
    for n in 0..xs.n {
        let gy = grad_out.item(n);
        for (o, b) in gb.iter_mut().enumerate() {
            *b += gy[o * plane..(o + 1) * plane].iter().copied().sum();
        }
        im2col(gy, oc, &win, &mut gcols);
        // dx = W · gcols
        T::gemm(
            ic,
            k,
            np,
            T::one(),
            p.weight.data(),
            (k, 1),
            &gcols,
            (np, 1),
            T::zero(),
            gx.item_mut(n),
            (np, 1),
        );
        // dW += x · gcolsᵀ
        T::gemm(
            ic,
            np,
            k,
            T::one(),
            x.item(n),
            (np, 1),
            &gcols,
            (1, np),
            T::one(),
            gw.data_mut(),
            (k, 1),
        );
    }
    Ok(DeconvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::{conv_forward, ConvParams};
    use crate::nn::testutil::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scatter_oracle(x: &Tensor<f64>, p: &DeconvParams<f64>) -> Tensor<f64> {
        let xs = x.shape();
        let ws = p.weight.shape();
        let (fh, fw) = p.full_size(xs.h, xs.w);
        let mut full = vec![0.0; xs.n * ws.c * fh * fw];
        for n in 0..xs.n {
            for i in 0..ws.n {
                for y in 0..xs.h {
                    for xx in 0..xs.w {
                        let v = x.at(n, i, y, xx);
                        for o in 0..ws.c {
                            for ky in 0..ws.h {
                                for kx in 0..ws.w {
                                    let oy = y * p.stride + ky;
                                    let ox = xx * p.stride + kx;
                                    full[((n * ws.c + o) * fh + oy) * fw + ox] +=
                                        v * p.weight.at(i, o, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
        let (oh, ow) = p.output_size(xs.h, xs.w).unwrap();
        Tensor::from_fn(Shape::new(xs.n, ws.c, oh, ow), |n, o, y, xx| {
            full[((n * ws.c + o) * fh + y + p.crop) * fw + xx + p.crop] + p.bias[o]
        })
    }

    #[test]
    fn unit_kernel_stride_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 1, 3, 5));
        let p = DeconvParams::new(Tensor::filled(Shape::new(1, 1, 1, 1), 1.0), vec![0.0], 1, 0)
            .unwrap();
        assert_eq!(deconv_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn stride_two_kernel_four_crop_one_matches_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 1, 2, 2));
        let w: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 1, 4, 4));
        let p = DeconvParams::new(w, vec![0.3], 2, 1).unwrap();
        let y = deconv_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 4, 4));
        let oracle = scatter_oracle(&x, &p);
        for (a, b) in y.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_of_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w: Tensor<f64> = random_tensor(&mut rng, Shape::new(3, 2, 4, 4));
        let conv = ConvParams::new(w.clone(), vec![0.0; 3], 2, 1).unwrap();
        let deconv = DeconvParams::new(w, vec![0.0; 2], 2, 1).unwrap();
        let z: Tensor<f64> = random_tensor(&mut rng, Shape::new(1, 2, 8, 8));
        let cz = conv_forward(&z, &conv).unwrap();
        let y: Tensor<f64> = random_tensor(&mut rng, cz.shape());
        let dy = deconv_forward_to(&y, &deconv, 8, 8).unwrap();
        let lhs = cz.dot(&y).unwrap();
        let rhs = z.dot(&dy).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn rejects_wrong_channels_and_oversized_targets() {
        let p = DeconvParams::<f32>::new(Tensor::zeros(Shape::new(2, 1, 4, 4)), vec![0.0], 2, 1)
            .unwrap();
        assert!(deconv_forward(&Tensor::zeros(Shape::new(1, 3, 2, 2)), &p).is_err());
        assert!(deconv_forward_to(&Tensor::zeros(Shape::new(1, 2, 2, 2)), &p, 7, 6).is_err());
    }
}
