use crate::error::{contract, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Result of a 2×2 stride-2 max pool: the pooled map plus, for every output
/// element, the flat index of the input element it was taken from.
#[derive(Clone, Debug)]
pub struct Pooled<T = f32> {
    pub output: Tensor<T>,
    pub argmax: Vec<u32>,
    pub input_shape: Shape,
}

/// Output extent of the pool. Odd inputs are padded bottom/right with −∞,
/// so a trailing row or column still produces an output.
pub fn pooled_shape(s: Shape) -> Shape {
    Shape::new(s.n, s.c, s.h.div_ceil(2), s.w.div_ceil(2))
}

pub fn maxpool_forward<T: Real>(x: &Tensor<T>) -> Pooled<T> {
    let xs = x.shape();
    let ys = pooled_shape(xs);
    let mut out = Vec::with_capacity(ys.len());
    let mut argmax = Vec::with_capacity(ys.len());
    let plane = xs.plane();
    for nc in 0..xs.n * xs.c {
        let base = nc * plane;
        let src = &x.data()[base..base + plane];
        for oy in 0..ys.h {
            for ox in 0..ys.w {
                let mut best = T::neg_infinity();
                let mut best_at = usize::MAX;
                // row-major scan with strict comparison: ties go to the top-left element
                for dy in 0..2 {
                    let y = 2 * oy + dy;
                    if y >= xs.h {
                        continue;
                    }
                    for dx in 0..2 {
                        let xx = 2 * ox + dx;
                        if xx >= xs.w {
                            continue;
                        }
                        let v = src[y * xs.w + xx];
                        if best_at == usize::MAX || v > best {
                            best = v;
                            best_at = y * xs.w + xx;
                        }
                    }
                }
                out.push(best);
                argmax.push((base + best_at) as u32);
            }
        }
    }
    Pooled {
        output: Tensor::from_vec(ys, out).expect("pooled length"),
        argmax,
        input_shape: xs,
    }
}

/// Routes every output gradient to the single input element that won its window.
pub fn maxpool_backward<T: Real>(pooled: &Pooled<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    contract!(
        grad_out.shape() == pooled.output.shape(),
        "pool gradient has shape {}, pooled output is {}",
        grad_out.shape(),
        pooled.output.shape()
    );
    let mut gx = Tensor::zeros(pooled.input_shape);
    let data = gx.data_mut();
    for (&i, &g) in pooled.argmax.iter().zip(grad_out.data()) {
        data[i as usize] += g;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_routes_to_top_left() {
        let x = Tensor::<f64>::filled(Shape::new(1, 1, 4, 4), 3.0);
        let p = maxpool_forward(&x);
        assert!(p.output.data().iter().all(|&v| v == 3.0));
        let g = maxpool_backward(&p, &Tensor::filled(p.output.shape(), 1.0)).unwrap();
        for y in 0..4 {
            for xx in 0..4 {
                let expected = if y % 2 == 0 && xx % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(g.at(0, 0, y, xx), expected);
            }
        }
    }

    #[test]
    fn routes_to_window_maximum() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let p = maxpool_forward(&x);
        assert_eq!(p.output.data(), &[5.0]);
        let g = maxpool_backward(&p, &Tensor::filled(p.output.shape(), 2.5)).unwrap();
        assert_eq!(g.data(), &[0.0, 2.5, 0.0, 0.0]);
    }

    #[test]
    fn odd_sizes_keep_border() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 1, 3, 5), |_, _, y, xx| -((y * 5 + xx) as f64));
        let p = maxpool_forward(&x);
        assert_eq!(p.output.shape(), Shape::new(1, 1, 2, 3));
        // bottom-right window holds only the single element (2,4)
        assert_eq!(p.output.at(0, 0, 1, 2), -14.0);
        assert_eq!(p.output.at(0, 0, 0, 2), -4.0);
    }
}
