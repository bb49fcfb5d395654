//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerical kernels: convolutions are
//! nested loops, slack matching is all-pairs, precision/recall is a plain
//! per-threshold sweep and gradients are central differences.
#![allow(dead_code)]

use liquidnet::eval::Confusion;
use liquidnet::nn::lstm::zero_state;
use liquidnet::nn::{
    conv_backward, conv_forward, conv_lstm_step, conv_lstm_step_backward, deconv_backward, deconv_forward_to,
    maxpool_backward, maxpool_forward, relu, relu_backward, sigmoid_ce_loss, ConvLstmParams, ConvParams,
    DeconvParams,
};
use liquidnet::{Shape, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn rand_tensor(rng: &mut impl Rng, shape: Shape) -> Tensor<f64> {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn rand_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Values at least `gap` apart so that an argmax never flips under a probe.
pub fn distinct_tensor(rng: &mut impl Rng, shape: Shape, gap: f64) -> Tensor<f64> {
    let mut data: Vec<f64> = (0..shape.len()).map(|i| i as f64 * gap).collect();
    data.shuffle(rng);
    Tensor::from_vec(shape, data).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nested-loop cross-correlation with zero padding.
pub fn direct_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    let mut out = vec![0.0; xs.n * ws.n * oh * ow];
    let mut i = 0;
    for n in 0..xs.n {
        for o in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for c in 0..xs.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy as usize >= xs.h || ix as usize >= xs.w {
                                    continue;
                                }
                                acc += x.at(n, c, iy as usize, ix as usize) * w.at(o, c, ky, kx);
                            }
                        }
                    }
                    out[i] = acc;
                    i += 1;
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(xs.n, ws.n, oh, ow), out).unwrap()
}

/// Transposed convolution by scattering each input pixel's kernel into the
/// full `(in − 1)·stride + k` canvas, then cutting a centred `out_h × out_w`
/// window (an odd trim leaves the extra pixel at the bottom/right).
pub fn scatter_deconv(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &[f64],
    stride: usize,
    out_h: usize,
    out_w: usize,
) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let fh = (xs.h - 1) * stride + ws.h;
    let fw = (xs.w - 1) * stride + ws.w;
    let oc = ws.c;
    let mut full = vec![0.0; xs.n * oc * fh * fw];
    for n in 0..xs.n {
        for c in 0..xs.c {
            for y in 0..xs.h {
                for x_ in 0..xs.w {
                    let v = x.at(n, c, y, x_);
                    for o in 0..oc {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let fy = y * stride + ky;
                                let fx = x_ * stride + kx;
                                full[((n * oc + o) * fh + fy) * fw + fx] += v * w.at(c, o, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    let (top, left) = ((fh - out_h) / 2, (fw - out_w) / 2);
    Tensor::from_fn(Shape::new(xs.n, oc, out_h, out_w), |n, o, y, x_| {
        full[((n * oc + o) * fh + y + top) * fw + x_ + left] + b[o]
    })
}

/// Slack confusion by comparing every pixel with every other pixel.
pub fn brute_confusion(pred: &[bool], gt: &[bool], w: usize, h: usize, slack: usize) -> Confusion {
    let near = |a: usize, b: usize| {
        let (ay, ax) = ((a / w) as isize, (a % w) as isize);
        let (by, bx) = ((b / w) as isize, (b % w) as isize);
        (ay - by).unsigned_abs().max((ax - bx).unsigned_abs()) <= slack
    };
    let n = w * h;
    let mut c = Confusion::default();
    for i in 0..n {
        if pred[i] {
            if (0..n).any(|j| gt[j] && near(i, j)) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        if gt[i] && !(0..n).any(|j| pred[j] && near(i, j)) {
            c.fn_ += 1;
        }
    }
    c
}

/// Per-threshold counts: binarise every heatmap at `≥ t` and sum the
/// all-pairs confusion over frames.
pub fn naive_pr_counts(
    heats: &[Vec<f64>],
    gts: &[Vec<bool>],
    w: usize,
    h: usize,
    slack: usize,
    thresholds: &[f64],
) -> Vec<Confusion> {
    thresholds
        .iter()
        .map(|&t| {
            let mut total = Confusion::default();
            for (heat, gt) in heats.iter().zip(gts) {
                let pred: Vec<bool> = heat.iter().map(|&v| v >= t).collect();
                total += brute_confusion(&pred, gt, w, h, slack);
            }
            total
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Worst relative error of `analytic` against central differences of `f`
/// over every coordinate of `x`.
pub fn fd_max_error(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let up = f(&probe);
        probe[i] = orig - FD_STEP;
        let down = f(&probe);
        probe[i] = orig;
        let e = rel_err(analytic[i], (up - down) / (2.0 * FD_STEP));
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    }
    worst
}

fn with(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

/// Convolution: gradients of `⟨g, conv(x)⟩` in x, weight and bias.
pub fn fd_conv(rng: &mut impl Rng) -> f64 {
    let (c, o, k) = (rng.gen_range(1..=3), rng.gen_range(1..=3), [1, 2, 3][rng.gen_range(0..3)]);
    let stride = rng.gen_range(1..=2);
    let pad = rng.gen_range(0..k);
    let xs = Shape::new(rng.gen_range(1..=2), c, rng.gen_range(k..k + 4), rng.gen_range(k..k + 4));
    let x = rand_tensor(rng, xs);
    let w = rand_tensor(rng, Shape::new(o, c, k, k));
    let b = rand_vec(rng, o);
    let p = ConvParams::new(w.clone(), b.clone(), stride, pad).unwrap();
    let g = rand_tensor(rng, conv_forward(&x, &p).unwrap().shape());
    let grads = conv_backward(&x, &p, &g).unwrap();
    let fx = |v: &[f64]| dot(conv_forward(&with(&x, v), &p).unwrap().data(), g.data());
    let fw = |v: &[f64]| {
        let q = ConvParams::new(with(&w, v), b.clone(), stride, pad).unwrap();
        dot(conv_forward(&x, &q).unwrap().data(), g.data())
    };
    let fb = |v: &[f64]| {
        let q = ConvParams::new(w.clone(), v.to_vec(), stride, pad).unwrap();
        dot(conv_forward(&x, &q).unwrap().data(), g.data())
    };
    fd_max_error(fx, x.data(), grads.input.data())
        .max(fd_max_error(fw, w.data(), grads.weight.data()))
        .max(fd_max_error(fb, &b, &grads.bias))
}

/// Deconvolution to an arbitrary centred crop of its full output.
pub fn fd_deconv(rng: &mut impl Rng) -> f64 {
    let stride = rng.gen_range(1..=3);
    let k = 2 * stride;
    let (c, o) = (rng.gen_range(1..=3), rng.gen_range(1..=2));
    let xs = Shape::new(1, c, rng.gen_range(1..=3), rng.gen_range(1..=3));
    let x = rand_tensor(rng, xs);
    let w = rand_tensor(rng, Shape::new(c, o, k, k));
    let b = rand_vec(rng, o);
    let p = DeconvParams::new(w.clone(), b.clone(), stride, 0).unwrap();
    let (fh, fw_) = p.full_size(x.shape().h, x.shape().w);
    let (oh, ow) = (rng.gen_range(1..=fh), rng.gen_range(1..=fw_));
    let g = rand_tensor(rng, Shape::new(1, o, oh, ow));
    let grads = deconv_backward(&x, &p, &g).unwrap();
    let fx = |v: &[f64]| dot(deconv_forward_to(&with(&x, v), &p, oh, ow).unwrap().data(), g.data());
    let fw = |v: &[f64]| {
        let q = DeconvParams::new(with(&w, v), b.clone(), stride, 0).unwrap();
        dot(deconv_forward_to(&x, &q, oh, ow).unwrap().data(), g.data())
    };
    let fb = |v: &[f64]| {
        let q = DeconvParams::new(w.clone(), v.to_vec(), stride, 0).unwrap();
        dot(deconv_forward_to(&x, &q, oh, ow).unwrap().data(), g.data())
    };
    fd_max_error(fx, x.data(), grads.input.data())
        .max(fd_max_error(fw, w.data(), grads.weight.data()))
        .max(fd_max_error(fb, &b, &grads.bias))
}

/// Max pool routing on odd and even extents with well-separated values.
pub fn fd_pool(rng: &mut impl Rng) -> f64 {
    let s = Shape::new(1, rng.gen_range(1..=2), rng.gen_range(1..=5), rng.gen_range(1..=5));
    let x = distinct_tensor(rng, s, 0.01);
    let pooled = maxpool_forward(&x);
    let g = rand_tensor(rng, pooled.output.shape());
    let gx = maxpool_backward(&pooled, &g).unwrap();
    let f = |v: &[f64]| dot(maxpool_forward(&with(&x, v)).output.data(), g.data());
    fd_max_error(f, x.data(), gx.data())
}

/// ReLU away from its kink.
pub fn fd_relu(rng: &mut impl Rng) -> f64 {
    let s = Shape::new(1, 2, rng.gen_range(1..=4), rng.gen_range(1..=4));
    let x = rand_tensor(rng, s).map(|v| if v.abs() < 0.01 { v + 0.05 } else { v });
    let g = rand_tensor(rng, s);
    let gx = relu_backward(&x, &g).unwrap();
    let f = |v: &[f64]| dot(relu(&with(&x, v)).data(), g.data());
    fd_max_error(f, x.data(), gx.data())
}

/// Weighted sigmoid cross-entropy in the logits.
pub fn fd_loss(rng: &mut impl Rng) -> f64 {
    let s = Shape::new(rng.gen_range(1..=2), 1, rng.gen_range(1..=4), rng.gen_range(1..=4));
    let z = rand_tensor(rng, s).map(|v| 4.0 * v);
    let y = rand_tensor(rng, s).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let pw = rng.gen_range(0.5..10.0);
    let (_, gz) = sigmoid_ce_loss(&z, &y, pw).unwrap();
    let f = |v: &[f64]| sigmoid_ce_loss(&with(&z, v), &y, pw).unwrap().0;
    fd_max_error(f, z.data(), gz.data())
}

/// Three-step conv-LSTM unroll. The objective reads every hidden state and
/// the final cell, so gradients flow through both recurrent paths.
pub fn fd_lstm(rng: &mut impl Rng) -> f64 {
    const STEPS: usize = 3;
    let (xc, hidden) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let (h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let weight = rand_tensor(rng, Shape::new(4 * hidden, xc + hidden, 1, 1)).map(|v| 0.8 * v);
    let bias = rand_vec(rng, 4 * hidden);
    let xs: Vec<Tensor<f64>> = (0..STEPS).map(|_| rand_tensor(rng, Shape::new(1, xc, h, w))).collect();
    let hs = Shape::new(1, hidden, h, w);
    let h0 = rand_tensor(rng, hs);
    let c0 = rand_tensor(rng, hs);
    let gh: Vec<Tensor<f64>> = (0..STEPS).map(|_| rand_tensor(rng, hs)).collect();
    let gc = rand_tensor(rng, hs);

    let params = |wt: &Tensor<f64>, b: &[f64]| {
        ConvLstmParams::new(ConvParams::new(wt.clone(), b.to_vec(), 1, 0).unwrap(), hidden).unwrap()
    };
    let objective = |p: &ConvLstmParams<f64>, xs: &[Tensor<f64>], h0: &Tensor<f64>, c0: &Tensor<f64>| {
        let (mut hp, mut cp) = (h0.clone(), c0.clone());
        let mut total = 0.0;
        for (x, g) in xs.iter().zip(&gh) {
            let s = conv_lstm_step(x, &hp, &cp, p).unwrap();
            total += dot(s.h.data(), g.data());
            hp = s.h;
            cp = s.c;
        }
        total + dot(cp.data(), gc.data())
    };

    let p = params(&weight, &bias);
    let mut steps = Vec::new();
    let (mut hp, mut cp) = (h0.clone(), c0.clone());
    for x in &xs {
        let s = conv_lstm_step(x, &hp, &cp, &p).unwrap();
        hp = s.h.clone();
        cp = s.c.clone();
        steps.push(s);
    }
    let (_, zero) = zero_state(&p, 1, h, w);
    let mut dh_next = zero;
    let mut dc_next = gc.clone();
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = vec![0.0; bias.len()];
    let mut dx = vec![Tensor::zeros(Shape::new(1, xc, h, w)); STEPS];
    for t in (0..STEPS).rev() {
        let mut dh = gh[t].clone();
        dh.add_assign(&dh_next).unwrap();
        let g = conv_lstm_step_backward(&steps[t], &p, &dh, Some(&dc_next)).unwrap();
        dw.add_assign(&g.weight).unwrap();
        for (a, b) in db.iter_mut().zip(&g.bias) {
            *a += b;
        }
        dx[t] = g.x;
        dh_next = g.h_prev;
        dc_next = g.c_prev;
    }

    let mut worst = fd_max_error(|v| objective(&params(&with(&weight, v), &bias), &xs, &h0, &c0), weight.data(), dw.data())
        .max(fd_max_error(|v| objective(&params(&weight, v), &xs, &h0, &c0), &bias, &db))
        .max(fd_max_error(|v| objective(&p, &xs, &with(&h0, v), &c0), h0.data(), dh_next.data()))
        .max(fd_max_error(|v| objective(&p, &xs, &h0, &with(&c0, v)), c0.data(), dc_next.data()));
    for t in 0..STEPS {
        let f = |v: &[f64]| {
            let mut probe = xs.clone();
            probe[t] = with(&xs[t], v);
            objective(&p, &probe, &h0, &c0)
        };
        worst = worst.max(fd_max_error(f, xs[t].data(), dx[t].data()));
    }
    worst
}

pub type FdCase = fn(&mut rand_chacha::ChaCha8Rng) -> f64;

/// Every differentiable layer with its finite-difference probe.
pub const FD_LAYERS: [(&str, FdCase); 6] = [
    ("conv", fd_conv),
    ("deconv", fd_deconv),
    ("pool routing", fd_pool),
    ("relu", fd_relu),
    ("conv-lstm 3-step unroll", fd_lstm),
    ("loss", fd_loss),
];
