//! Convolutional LSTM cell.
//!
//! The four gate transforms are 1×1 convolutions over the channel-wise
//! concatenation `[x, h_prev]`; they are stored stacked in a single
//! convolution whose output channels are laid out gate by gate in the
//! order input, forget, output, candidate. There are no peephole
//! connections: the cell state only enters through the elementwise update.

use crate::error::{contract, Result};
use crate::nn::activation::sigmoid_scalar;
use crate::nn::conv::{conv_backward, conv_forward, ConvParams};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn slot(self) -> usize {
        match self {
            Gate::Input => 0,
            Gate::Forget => 1,
            Gate::Output => 2,
            Gate::Candidate => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams<T = f32> {
    /// Stacked 1×1 gate convolution, `4·hidden` output channels.
    pub gates: ConvParams<T>,
    pub hidden: usize,
}

impl<T: Real> ConvLstmParams<T> {
    pub fn new(gates: ConvParams<T>, hidden: usize) -> Result<Self> {
        contract!(hidden > 0, "LSTM hidden channel count must be positive");
        contract!(
            gates.out_channels() == 4 * hidden,
            "stacked gate convolution has {} outputs, expected 4·{hidden}",
            gates.out_channels()
        );
        contract!(
            gates.kernel() == (1, 1) && gates.stride == 1 && gates.pad == 0,
            "LSTM gates must be 1x1 stride-1 convolutions"
        );
        Ok(ConvLstmParams { gates, hidden })
    }

    /// Channels of the concatenated `[x, h_prev]` gate input.
    pub fn input_channels(&self) -> usize {
        self.gates.in_channels()
    }

    pub fn gate_weight(&self, gate: Gate) -> &[T] {
        let per = self.hidden * self.input_channels();
        &self.gates.weight.data()[gate.slot() * per..(gate.slot() + 1) * per]
    }

    pub fn gate_weight_mut(&mut self, gate: Gate) -> &mut [T] {
        let per = self.hidden * self.input_channels();
        &mut self.gates.weight.data_mut()[gate.slot() * per..(gate.slot() + 1) * per]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[T] {
        &self.gates.bias[gate.slot() * self.hidden..(gate.slot() + 1) * self.hidden]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [T] {
        &mut self.gates.bias[gate.slot() * self.hidden..(gate.slot() + 1) * self.hidden]
    }
}

/// Everything one forward step keeps for its backward pass.
#[derive(Clone, Debug)]
pub struct LstmStep<T = f32> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    input: Tensor<T>,
    /// Post-activation gates, `4·hidden` channels in [`Gate`] order.
    gates: Tensor<T>,
    c_prev: Tensor<T>,
    tanh_c: Tensor<T>,
    x_channels: usize,
}

impl<T: Real> LstmStep<T> {
    /// Activated gate map (σ for input/forget/output, tanh for candidate).
    pub fn gate(&self, gate: Gate) -> Tensor<T> {
        let s = self.gates.shape();
        let hidden = s.c / 4;
        Tensor::from_fn(s.with_channels(hidden), |n, c, y, x| {
            self.gates.at(n, gate.slot() * hidden + c, y, x)
        })
    }

    pub fn c_prev(&self) -> &Tensor<T> {
        &self.c_prev
    }
}

#[derive(Clone, Debug)]
pub struct LstmGrads<T = f32> {
    pub x: Tensor<T>,
    pub h_prev: Tensor<T>,
    pub c_prev: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv_lstm_step<T: Real>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    c_prev: &Tensor<T>,
    p: &ConvLstmParams<T>,
) -> Result<LstmStep<T>> {
    let xs = x.shape();
    let hs = h_prev.shape();
    contract!(
        xs.n == hs.n && xs.h == hs.h && xs.w == hs.w,
        "LSTM input {xs} and recurrent state {hs} are not spatially congruent"
    );
    contract!(
        hs.c == p.hidden,
        "recurrent state has {} channels, cell has {} hidden",
        hs.c,
        p.hidden
    );
    contract!(
        c_prev.shape() == hs,
        "cell state {} does not match recurrent state {hs}",
        c_prev.shape()
    );
    contract!(
        xs.c + hs.c == p.input_channels(),
        "LSTM gates consume {} channels, got {} input + {} recurrent",
        p.input_channels(),
        xs.c,
        hs.c
    );
    let input = Tensor::concat_channels(&[x, h_prev])?;
    let mut gates = conv_forward(&input, &p.gates)?;
    let hidden = p.hidden;
    let plane = hs.plane();
    let block = hidden * plane;
    let mut c = Tensor::zeros(hs);
    let mut tanh_c = Tensor::zeros(hs);
    let mut h = Tensor::zeros(hs);
    for n in 0..hs.n {
        let g = gates.item_mut(n);
        let (sig, cand) = g.split_at_mut(3 * block);
        for v in sig.iter_mut() {
            *v = sigmoid_scalar(*v);
        }
        for v in cand.iter_mut() {
            *v = v.tanh();
        }
        let (ig, rest) = sig.split_at(block);
        let (fg, og) = rest.split_at(block);
        let cp = c_prev.item(n);
        let cn = c.item_mut(n);
        for k in 0..block {
            cn[k] = fg[k] * cp[k] + ig[k] * cand[k];
        }
        let tc = tanh_c.item_mut(n);
        for k in 0..block {
            tc[k] = cn[k].tanh();
        }
        let hn = h.item_mut(n);
        for k in 0..block {
            hn[k] = og[k] * tc[k];
        }
    }
    Ok(LstmStep {
        h,
        c,
        input,
        gates,
        c_prev: c_prev.clone(),
        tanh_c,
        x_channels: xs.c,
    })
}

/// Backward through one cell step.
///
/// `grad_h` is the total gradient reaching `h` (from the layer above and from
/// the next step); `grad_c` is the gradient flowing back into `c` from the next
/// step, or `None` at the final step.
pub fn conv_lstm_step_backward<T: Real>(
    step: &LstmStep<T>,
    p: &ConvLstmParams<T>,
    grad_h: &Tensor<T>,
    grad_c: Option<&Tensor<T>>,
) -> Result<LstmGrads<T>> {
    let hs = step.h.shape();
    contract!(
        grad_h.shape() == hs,
        "LSTM output gradient {} does not match {hs}",
        grad_h.shape()
    );
    if let Some(gc) = grad_c {
        contract!(
            gc.shape() == hs,
            "LSTM cell gradient {} does not match {hs}",
            gc.shape()
        );
    }
    let plane = hs.plane();
    let block = p.hidden * plane;
    let mut dpre = Tensor::zeros(step.gates.shape());
    let mut dc_prev = Tensor::zeros(hs);
    for n in 0..hs.n {
        let g = step.gates.item(n);
        let (ig, rest) = g.split_at(block);
        let (fg, rest) = rest.split_at(block);
        let (og, cand) = rest.split_at(block);
        let tc = step.tanh_c.item(n);
        let cp = step.c_prev.item(n);
        let gh = grad_h.item(n);
        let gc = grad_c.map(|t| t.item(n));
        let d = dpre.item_mut(n);
        let dcp = dc_prev.item_mut(n);
        for k in 0..block {
            let one = T::one();
            let mut dc = gh[k] * og[k] * (one - tc[k] * tc[k]);
            if let Some(gc) = gc {
                dc += gc[k];
            }
            let d_o = gh[k] * tc[k];
            let d_i = dc * cand[k];
            let d_f = dc * cp[k];
            let d_g = dc * ig[k];
            dcp[k] = dc * fg[k];
            d[k] = d_i * ig[k] * (one - ig[k]);
            d[block + k] = d_f * fg[k] * (one - fg[k]);
            d[2 * block + k] = d_o * og[k] * (one - og[k]);
            d[3 * block + k] = d_g * (one - cand[k] * cand[k]);
        }
    }
    let conv = conv_backward(&step.input, &p.gates, &dpre)?;
    let mut parts = conv
        .input
        .split_channels(&[step.x_channels, p.hidden])?
        .into_iter();
    let x = parts.next().expect("two parts");
    let h_prev = parts.next().expect("two parts");
    Ok(LstmGrads {
        x,
        h_prev,
        c_prev: dc_prev,
        weight: conv.weight,
        bias: conv.bias,
    })
}

/// Zero recurrent state `(h, c)` for a cell over an `n × h × w` grid.
pub fn zero_state<T: Real>(p: &ConvLstmParams<T>, n: usize, h: usize, w: usize) -> (Tensor<T>, Tensor<T>) {
    let s = Shape::new(n, p.hidden, h, w);
    (Tensor::zeros(s), Tensor::zeros(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(x_channels: usize, hidden: usize) -> ConvLstmParams<f64> {
        let cin = x_channels + hidden;
        let gates = ConvParams::new(
            Tensor::zeros(Shape::new(4 * hidden, cin, 1, 1)),
            vec![0.0; 4 * hidden],
            1,
            0,
        )
        .unwrap();
        ConvLstmParams::new(gates, hidden).unwrap()
    }

    #[test]
    fn saturated_gates_hold_the_cell() {
        let b = 20.0;
        let mut p = zero_cell(2, 3);
        p.gate_bias_mut(Gate::Forget).fill(b);
        p.gate_bias_mut(Gate::Input).fill(-b);
        p.gate_bias_mut(Gate::Output).fill(-b);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = random_tensor(&mut rng, Shape::new(1, 2, 3, 3));
        let h = random_tensor(&mut rng, Shape::new(1, 3, 3, 3));
        let c = random_tensor(&mut rng, Shape::new(1, 3, 3, 3));
        let step = conv_lstm_step(&x, &h, &c, &p).unwrap();
        for (a, b) in step.c.data().iter().zip(c.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(step.h.max_abs() < 1e-6);
    }

    #[test]
    fn open_input_gate_loads_candidate() {
        let b = 20.0;
        let mut p = zero_cell(1, 1);
        p.gate_bias_mut(Gate::Input).fill(b);
        p.gate_bias_mut(Gate::Forget).fill(-b);
        p.gate_weight_mut(Gate::Candidate)[0] = 0.7; // x channel
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.5, -2.0]).unwrap();
        let (h, c) = zero_state(&p, 1, 1, 2);
        let step = conv_lstm_step(&x, &h, &c, &p).unwrap();
        for (k, &xv) in x.data().iter().enumerate() {
            assert!((step.c.data()[k] - (0.7f64 * xv).tanh()).abs() < 1e-6);
        }
    }

    #[test]
    fn recurrence_holds_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gates = ConvParams::new(
            random_tensor(&mut rng, Shape::new(8, 5, 1, 1)),
            random_tensor::<f32>(&mut rng, Shape::new(1, 1, 1, 8)).into_data(),
            1,
            0,
        )
        .unwrap();
        let p = ConvLstmParams::new(gates, 2).unwrap();
        let x: Tensor<f32> = random_tensor(&mut rng, Shape::new(2, 3, 4, 3));
        let h = random_tensor(&mut rng, Shape::new(2, 2, 4, 3));
        let c = random_tensor(&mut rng, Shape::new(2, 2, 4, 3));
        let step = conv_lstm_step(&x, &h, &c, &p).unwrap();
        let i = step.gate(Gate::Input);
        let f = step.gate(Gate::Forget);
        let o = step.gate(Gate::Output);
        let g = step.gate(Gate::Candidate);
        for k in 0..c.len() {
            let ck = f.data()[k] * c.data()[k] + i.data()[k] * g.data()[k];
            assert_eq!(ck.to_bits(), step.c.data()[k].to_bits());
            let hk = o.data()[k] * ck.tanh();
            assert_eq!(hk.to_bits(), step.h.data()[k].to_bits());
        }
    }

    #[test]
    fn rejects_incongruent_state() {
        let p = zero_cell(2, 3);
        let x = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let h = Tensor::zeros(Shape::new(1, 3, 3, 4));
        let c = Tensor::zeros(Shape::new(1, 3, 3, 4));
        assert!(conv_lstm_step(&x, &h, &c, &p).is_err());
        let h = Tensor::zeros(Shape::new(1, 3, 3, 3));
        let c2 = Tensor::zeros(Shape::new(1, 2, 3, 3));
        assert!(conv_lstm_step(&x, &h, &c2, &p).is_err());
    }
}
