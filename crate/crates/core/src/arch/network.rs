//! The three fully-convolutional layouts and their backward passes.
//!
//! * single-frame: tower → 1×1 conv+relu → 1×1 conv+relu → deconvolution
//! * multi-frame: shared tower per frame → channel concat → two 1×1 → deconvolution
//! * LSTM: tower → conv-LSTM → 1×1 conv+relu → deconvolution, with the previous
//!   heatmap fed back through its own conv tower into the LSTM input.
//!
//! Every tower block is conv (same padding) → relu → 2×2 max pool. The
//! deconvolution has stride `2^tower_depth` and kernel twice that, and its
//! output is cropped to the frame size, so heatmaps are always congruent with
//! the input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::spec::{NetworkSpec, Variant};
use crate::error::{contract, Error, Result};
use crate::nn::activation::{relu, relu_backward, sigmoid};
use crate::nn::checkpoint::{self, NamedTensor};
use crate::nn::conv::{conv_backward, conv_forward, ConvGrads, ConvParams};
use crate::nn::deconv::{deconv_backward, deconv_forward_to, DeconvParams};
use crate::nn::init::he_uniform;
use crate::nn::loss::sigmoid_ce_loss;
use crate::nn::lstm::{conv_lstm_step, conv_lstm_step_backward, ConvLstmParams, Gate, LstmStep};
use crate::nn::pool::{maxpool_backward, maxpool_forward, Pooled};
use crate::tensor::{Real, Shape, Tensor};

/// All learnable tensors of a network. Gradients use the same structure.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<T = f32> {
    pub tower: Vec<ConvParams<T>>,
    /// First 1×1 layer; replaced by the LSTM in the recurrent layout.
    pub head1: Option<ConvParams<T>>,
    pub lstm: Option<ConvLstmParams<T>>,
    pub head2: ConvParams<T>,
    pub feedback: Vec<ConvParams<T>>,
    pub deconv: DeconvParams<T>,
}

pub struct ParamRef<'a, T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [T],
}

pub struct ParamMut<'a, T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a mut [T],
}

fn conv_refs<'a, T: Real>(prefix: &str, p: &'a ConvParams<T>, out: &mut Vec<ParamRef<'a, T>>) {
    out.push(ParamRef {
        name: format!("{prefix}.weight"),
        dims: p.weight.shape().dims().to_vec(),
        data: p.weight.data(),
    });
    out.push(ParamRef {
        name: format!("{prefix}.bias"),
        dims: vec![p.bias.len()],
        data: &p.bias,
    });
}

fn conv_muts<'a, T: Real>(prefix: &str, p: &'a mut ConvParams<T>, out: &mut Vec<ParamMut<'a, T>>) {
    let dims = p.weight.shape().dims().to_vec();
    out.push(ParamMut {
        name: format!("{prefix}.weight"),
        dims,
        data: p.weight.data_mut(),
    });
    out.push(ParamMut {
        name: format!("{prefix}.bias"),
        dims: vec![p.bias.len()],
        data: &mut p.bias,
    });
}

impl<T: Real> NetParams<T> {
    /// Named views in a fixed order (tower, head1, lstm, head2, feedback, deconv).
    pub fn slots(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        for (i, p) in self.tower.iter().enumerate() {
            conv_refs(&format!("tower.{i}"), p, &mut out);
        }
        if let Some(p) = &self.head1 {
            conv_refs("head1", p, &mut out);
        }
        if let Some(l) = &self.lstm {
            conv_refs("lstm", &l.gates, &mut out);
        }
        conv_refs("head2", &self.head2, &mut out);
        for (i, p) in self.feedback.iter().enumerate() {
            conv_refs(&format!("feedback.{i}"), p, &mut out);
        }
        out.push(ParamRef {
            name: "deconv.weight".into(),
            dims: self.deconv.weight.shape().dims().to_vec(),
            data: self.deconv.weight.data(),
        });
        out.push(ParamRef {
            name: "deconv.bias".into(),
            dims: vec![self.deconv.bias.len()],
            data: &self.deconv.bias,
        });
        out
    }

    pub fn slots_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (i, p) in self.tower.iter_mut().enumerate() {
            conv_muts(&format!("tower.{i}"), p, &mut out);
        }
        if let Some(p) = &mut self.head1 {
            conv_muts("head1", p, &mut out);
        }
        if let Some(l) = &mut self.lstm {
            conv_muts("lstm", &mut l.gates, &mut out);
        }
        conv_muts("head2", &mut self.head2, &mut out);
        for (i, p) in self.feedback.iter_mut().enumerate() {
            conv_muts(&format!("feedback.{i}"), p, &mut out);
        }
        let dims = self.deconv.weight.shape().dims().to_vec();
        out.push(ParamMut {
            name: "deconv.weight".into(),
            dims,
            data: self.deconv.weight.data_mut(),
        });
        out.push(ParamMut {
            name: "deconv.bias".into(),
            dims: vec![self.deconv.bias.len()],
            data: &mut self.deconv.bias,
        });
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slots_mut() {
            s.data.fill(T::zero());
        }
        z
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.slots_mut().into_iter().zip(other.slots()) {
            assert_eq!(a.data.len(), b.data.len(), "parameter {} length", a.name);
            for (x, &y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for s in self.slots_mut() {
            for v in s.data.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.slots().iter().map(|s| s.data.len()).sum()
    }

    /// All parameters flattened in slot order.
    pub fn flatten(&self) -> Vec<T> {
        self.slots().iter().flat_map(|s| s.data.iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[T]) {
        let mut offset = 0;
        for s in self.slots_mut() {
            let n = s.data.len();
            s.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    pub fn cast<U: Real>(&self) -> NetParams<U> {
        let conv = |p: &ConvParams<T>| ConvParams {
            weight: p.weight.cast(),
            bias: p.bias.iter().map(|v| U::lit(v.to_f64().unwrap_or(0.0))).collect(),
            stride: p.stride,
            pad: p.pad,
        };
        NetParams {
            tower: self.tower.iter().map(conv).collect(),
            head1: self.head1.as_ref().map(conv),
            lstm: self.lstm.as_ref().map(|l| ConvLstmParams {
                gates: conv(&l.gates),
                hidden: l.hidden,
            }),
            head2: conv(&self.head2),
            feedback: self.feedback.iter().map(conv).collect(),
            deconv: DeconvParams {
                weight: self.deconv.weight.cast(),
                bias: self
                    .deconv
                    .bias
                    .iter()
                    .map(|v| U::lit(v.to_f64().unwrap_or(0.0)))
                    .collect(),
                stride: self.deconv.stride,
                crop: self.deconv.crop,
            },
        }
    }
}

/// How the fed-back prediction is initialised at the first timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Ground-truth label of the first frame (training).
    GroundTruthFirst,
    /// All zeros (evaluation).
    Zeros,
}

/// Recurrent state carried between LSTM timesteps.
#[derive(Clone, Debug)]
pub struct RecurrentState<T = f32> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    /// The network's own heatmap from the previous timestep, in [0, 1].
    pub prev_prediction: Tensor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpttOptions {
    pub pos_weight: f64,
    /// Propagate gradients through the fed-back prediction path.
    pub feedback_gradient: bool,
}

impl Default for BpttOptions {
    fn default() -> Self {
        BpttOptions {
            pos_weight: 1.0,
            feedback_gradient: true,
        }
    }
}

struct BlockTrace<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    pool: Pooled<T>,
}

struct HeadTrace<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
}

fn tower_forward<T: Real>(
    blocks: &[ConvParams<T>],
    x: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<BlockTrace<T>>)> {
    let mut traces = Vec::with_capacity(blocks.len());
    let mut cur = x.clone();
    for p in blocks {
        let pre = conv_forward(&cur, p)?;
        let pool = maxpool_forward(&relu(&pre));
        let next = pool.output.clone();
        traces.push(BlockTrace {
            input: cur,
            pre,
            pool,
        });
        cur = next;
    }
    Ok((cur, traces))
}

fn accumulate_conv<T: Real>(dst: &mut ConvParams<T>, g: &ConvGrads<T>) -> Result<()> {
    dst.weight.add_assign(&g.weight)?;
    for (a, &b) in dst.bias.iter_mut().zip(&g.bias) {
        *a += b;
    }
    Ok(())
}

fn tower_backward<T: Real>(
    blocks: &[ConvParams<T>],
    traces: &[BlockTrace<T>],
    grad_out: Tensor<T>,
    grads: &mut [ConvParams<T>],
) -> Result<Tensor<T>> {
    let mut g = grad_out;
    for ((p, tr), gp) in blocks.iter().zip(traces).zip(grads.iter_mut()).rev() {
        let g_act = maxpool_backward(&tr.pool, &g)?;
        let g_pre = relu_backward(&tr.pre, &g_act)?;
        let cg = conv_backward(&tr.input, p, &g_pre)?;
        accumulate_conv(gp, &cg)?;
        g = cg.input;
    }
    Ok(g)
}

fn head_forward<T: Real>(p: &ConvParams<T>, x: Tensor<T>) -> Result<(Tensor<T>, HeadTrace<T>)> {
    let pre = conv_forward(&x, p)?;
    let out = relu(&pre);
    Ok((out, HeadTrace { input: x, pre }))
}

fn head_backward<T: Real>(
    p: &ConvParams<T>,
    tr: &HeadTrace<T>,
    grad_out: &Tensor<T>,
    grads: &mut ConvParams<T>,
) -> Result<Tensor<T>> {
    let g_pre = relu_backward(&tr.pre, grad_out)?;
    let cg = conv_backward(&tr.input, p, &g_pre)?;
    accumulate_conv(grads, &cg)?;
    Ok(cg.input)
}

/// Trace of the 1×1 head and deconvolution for one prediction.
struct OutputTrace<T> {
    head1: Option<HeadTrace<T>>,
    head2: HeadTrace<T>,
    deconv_in: Tensor<T>,
    logits: Tensor<T>,
}

/// Trace of one LSTM timestep.
struct StepTrace<T> {
    tower: Vec<BlockTrace<T>>,
    prepool: Vec<Pooled<T>>,
    feedback: Vec<BlockTrace<T>>,
    feat_channels: usize,
    fb_channels: usize,
    step: LstmStep<T>,
    output: OutputTrace<T>,
    prob: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Real = f32> {
    spec: NetworkSpec,
    pub params: NetParams<T>,
}

pub fn build_network<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    Network::new(spec.clone(), seed)
}

impl<T: Real> Network<T> {
    /// Builds a network with freshly initialised weights.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = spec.kernel;
        let pad = k / 2;
        let conv = |rng: &mut ChaCha8Rng, out_c: usize, in_c: usize, k: usize, pad: usize| {
            let shape = Shape::new(out_c, in_c, k, k);
            ConvParams::new(he_uniform(rng, shape, in_c * k * k), vec![T::zero(); out_c], 1, pad)
        };
        let mut tower = Vec::with_capacity(spec.tower_depth);
        let mut in_c = spec.input_channels();
        for &c in &spec.tower_channels {
            tower.push(conv(&mut rng, c, in_c, k, pad)?);
            in_c = c;
        }
        let feat_c = in_c;
        let (head1, lstm, head2_in) = match spec.variant {
            Variant::SingleFrameCnn => (
                Some(conv(&mut rng, spec.head_channels, feat_c, 1, 0)?),
                None,
                spec.head_channels,
            ),
            Variant::MultiFrameCnn => (
                Some(conv(&mut rng, spec.head_channels, feat_c * spec.window, 1, 0)?),
                None,
                spec.head_channels,
            ),
            Variant::LstmCnn => {
                let hidden = spec.lstm_hidden;
                let cin = feat_c + spec.feedback_channels + hidden;
                let mut cell = ConvLstmParams::new(conv(&mut rng, 4 * hidden, cin, 1, 0)?, hidden)?;
                cell.gate_bias_mut(Gate::Forget).fill(T::one());
                (None, Some(cell), hidden)
            }
        };
        let head2 = conv(&mut rng, spec.head_channels, head2_in, 1, 0)?;
        let mut feedback = Vec::new();
        if spec.variant == Variant::LstmCnn {
            let mut in_c = 1;
            for _ in 0..spec.feedback_tower_depth {
                feedback.push(conv(&mut rng, spec.feedback_channels, in_c, k, pad)?);
                in_c = spec.feedback_channels;
            }
        }
        let stride = spec.deconv_stride();
        let dk = spec.deconv_kernel();
        let dshape = Shape::new(spec.head_channels, 1, dk, dk);
        let fan_in = spec.head_channels * (dk / stride) * (dk / stride);
        let deconv = DeconvParams::new(he_uniform(&mut rng, dshape, fan_in), vec![T::zero()], stride, stride / 2)?;
        Ok(Network {
            spec,
            params: NetParams {
                tower,
                head1,
                lstm,
                head2,
                feedback,
                deconv,
            },
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }

    /// Copies every parameter whose name and shape match one in `source`.
    /// Returns the names that were copied.
    pub fn copy_matching_from(&mut self, source: &Network<T>) -> Vec<String> {
        let src = source.params.slots();
        let mut copied = Vec::new();
        for dst in self.params.slots_mut() {
            if let Some(s) = src.iter().find(|s| s.name == dst.name && s.dims == dst.dims) {
                dst.data.copy_from_slice(s.data);
                copied.push(dst.name.clone());
            }
        }
        copied
    }

    fn expect_variant(&self, v: Variant, op: &str) -> Result<()> {
        contract!(
            self.spec.variant == v,
            "{op} needs a {v} network, this one is {}",
            self.spec.variant
        );
        Ok(())
    }

    fn check_frame(&self, frame: &Tensor<T>) -> Result<()> {
        let s = frame.shape();
        contract!(
            s.c == self.spec.input_channels(),
            "{} task expects {}-channel frames, got {s}",
            self.spec.task,
            self.spec.input_channels()
        );
        contract!(s.n > 0 && s.h > 0 && s.w > 0, "empty frame {s}");
        Ok(())
    }

    fn check_frames(&self, frames: &[Tensor<T>]) -> Result<Shape> {
        contract!(!frames.is_empty(), "no frames given");
        let s = frames[0].shape();
        for f in frames {
            self.check_frame(f)?;
            contract!(f.shape() == s, "frames differ in shape: {s} vs {}", f.shape());
        }
        Ok(s)
    }

    fn check_labels(&self, labels: &[Tensor<T>], frame: Shape) -> Result<()> {
        let want = frame.with_channels(1);
        for l in labels {
            contract!(l.shape() == want, "label {} does not match heatmap {want}", l.shape());
        }
        Ok(())
    }

    fn output_forward(&self, feat: Tensor<T>, h: usize, w: usize) -> Result<OutputTrace<T>> {
        let p = &self.params;
        let (x, head1) = match &p.head1 {
            Some(h1) => {
                let (out, tr) = head_forward(h1, feat)?;
                (out, Some(tr))
            }
            None => (feat, None),
        };
        let (deconv_in, head2) = head_forward(&p.head2, x)?;
        let logits = deconv_forward_to(&deconv_in, &p.deconv, h, w)?;
        Ok(OutputTrace {
            head1,
            head2,
            deconv_in,
            logits,
        })
    }

    /// Backward through deconvolution and 1×1 layers; returns the gradient
    /// reaching the head input (tower features, or LSTM output).
    fn output_backward(
        &self,
        tr: &OutputTrace<T>,
        grad_logits: &Tensor<T>,
        grads: &mut NetParams<T>,
    ) -> Result<Tensor<T>> {
        let p = &self.params;
        let dg = deconv_backward(&tr.deconv_in, &p.deconv, grad_logits)?;
        grads.deconv.weight.add_assign(&dg.weight)?;
        for (a, &b) in grads.deconv.bias.iter_mut().zip(&dg.bias) {
            *a += b;
        }
        let mut g = head_backward(&p.head2, &tr.head2, &dg.input, &mut grads.head2)?;
        if let (Some(h1), Some(t1), Some(g1)) = (&p.head1, &tr.head1, grads.head1.as_mut()) {
            g = head_backward(h1, t1, &g, g1)?;
        }
        Ok(g)
    }

    fn single_trace(&self, frame: &Tensor<T>) -> Result<(Vec<BlockTrace<T>>, OutputTrace<T>)> {
        let s = frame.shape();
        let (feat, tower) = tower_forward(&self.params.tower, frame)?;
        let out = self.output_forward(feat, s.h, s.w)?;
        Ok((tower, out))
    }

    /// Per-pixel liquid probability for one frame.
    pub fn forward_single(&self, frame: &Tensor<T>) -> Result<Tensor<T>> {
        self.expect_variant(Variant::SingleFrameCnn, "forward_single")?;
        self.check_frame(frame)?;
        let (_, out) = self.single_trace(frame)?;
        Ok(sigmoid(&out.logits))
    }

    fn window_trace(
        &self,
        frames: &[Tensor<T>],
    ) -> Result<(Vec<Vec<BlockTrace<T>>>, Vec<usize>, OutputTrace<T>)> {
        let s = self.check_frames(frames)?;
        contract!(
            frames.len() == self.spec.window,
            "multi-frame network takes exactly {} frames, got {}",
            self.spec.window,
            frames.len()
        );
        let mut feats = Vec::with_capacity(frames.len());
        let mut towers = Vec::with_capacity(frames.len());
        for f in frames {
            let (feat, tr) = tower_forward(&self.params.tower, f)?;
            feats.push(feat);
            towers.push(tr);
        }
        let sizes: Vec<usize> = feats.iter().map(|f| f.shape().c).collect();
        let refs: Vec<&Tensor<T>> = feats.iter().collect();
        let cat = Tensor::concat_channels(&refs)?;
        let out = self.output_forward(cat, s.h, s.w)?;
        Ok((towers, sizes, out))
    }

    /// Heatmap aligned with the last of `window` consecutive frames.
    pub fn forward_window(&self, frames: &[Tensor<T>]) -> Result<Tensor<T>> {
        self.expect_variant(Variant::MultiFrameCnn, "forward_window")?;
        let (_, _, out) = self.window_trace(frames)?;
        Ok(sigmoid(&out.logits))
    }

    /// Multi-frame heatmaps for every frame of a sequence, computing each
    /// frame's tower once. Windows reaching before the first frame repeat it.
    pub fn forward_window_sequence(&self, frames: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        self.expect_variant(Variant::MultiFrameCnn, "forward_window_sequence")?;
        let s = self.check_frames(frames)?;
        let feats = frames
            .iter()
            .map(|f| tower_forward(&self.params.tower, f).map(|(feat, _)| feat))
            .collect::<Result<Vec<_>>>()?;
        let w = self.spec.window;
        let mut out = Vec::with_capacity(frames.len());
        for t in 0..frames.len() {
            let refs: Vec<&Tensor<T>> = (0..w)
                .map(|k| &feats[(t + k + 1).saturating_sub(w)])
                .collect();
            let cat = Tensor::concat_channels(&refs)?;
            out.push(sigmoid(&self.output_forward(cat, s.h, s.w)?.logits));
        }
        Ok(out)
    }

    /// Fresh recurrent state for frames of shape `frame`.
    pub fn initial_state(&self, frame: Shape, first_label: Option<&Tensor<T>>) -> Result<RecurrentState<T>> {
        let lstm = self
            .params
            .lstm
            .as_ref()
            .ok_or_else(|| Error::Contract("recurrent state needs an LSTM network".into()))?;
        let mut fh = frame.h;
        let mut fw = frame.w;
        for _ in 0..self.spec.tower_depth {
            fh = fh.div_ceil(2);
            fw = fw.div_ceil(2);
        }
        let hs = Shape::new(frame.n, lstm.hidden, fh, fw);
        let pred_shape = frame.with_channels(1);
        let prev_prediction = match first_label {
            Some(l) => {
                contract!(l.shape() == pred_shape, "label {} does not match {pred_shape}", l.shape());
                l.clone()
            }
            None => Tensor::zeros(pred_shape),
        };
        Ok(RecurrentState {
            h: Tensor::zeros(hs),
            c: Tensor::zeros(hs),
            prev_prediction,
        })
    }

    fn step_trace(&self, frame: &Tensor<T>, state: &RecurrentState<T>) -> Result<StepTrace<T>> {
        let p = &self.params;
        let lstm = p.lstm.as_ref().expect("LSTM variant");
        let s = frame.shape();
        let (feat, tower) = tower_forward(&p.tower, frame)?;
        let mut prepool = Vec::new();
        let mut fb_in = state.prev_prediction.clone();
        for _ in self.spec.feedback_tower_depth..self.spec.tower_depth {
            let pooled = maxpool_forward(&fb_in);
            fb_in = pooled.output.clone();
            prepool.push(pooled);
        }
        let (fb, feedback) = tower_forward(&p.feedback, &fb_in)?;
        let feat_channels = feat.shape().c;
        let fb_channels = fb.shape().c;
        let x = Tensor::concat_channels(&[&feat, &fb])?;
        let step = conv_lstm_step(&x, &state.h, &state.c, lstm)?;
        let output = self.output_forward(step.h.clone(), s.h, s.w)?;
        let prob = sigmoid(&output.logits);
        Ok(StepTrace {
            tower,
            prepool,
            feedback,
            feat_channels,
            fb_channels,
            step,
            output,
            prob,
        })
    }

    /// Advances the recurrence by one frame and returns its heatmap.
    pub fn step(&self, frame: &Tensor<T>, state: &mut RecurrentState<T>) -> Result<Tensor<T>> {
        self.expect_variant(Variant::LstmCnn, "step")?;
        self.check_frame(frame)?;
        let tr = self.step_trace(frame, state)?;
        state.h = tr.step.h;
        state.c = tr.step.c;
        state.prev_prediction = tr.prob.clone();
        Ok(tr.prob)
    }

    /// Runs the recurrent network over a sequence. `labels` are only read for
    /// [`InitMode::GroundTruthFirst`].
    pub fn forward_sequence(
        &self,
        frames: &[Tensor<T>],
        labels: Option<&[Tensor<T>]>,
        init: InitMode,
    ) -> Result<Vec<Tensor<T>>> {
        self.expect_variant(Variant::LstmCnn, "forward_sequence")?;
        let s = self.check_frames(frames)?;
        let first = match init {
            InitMode::Zeros => None,
            InitMode::GroundTruthFirst => {
                let l = labels
                    .and_then(|l| l.first())
                    .ok_or_else(|| Error::Contract("ground-truth initialisation needs labels".into()))?;
                Some(l)
            }
        };
        let mut state = self.initial_state(s, first)?;
        frames.iter().map(|f| self.step(f, &mut state)).collect()
    }

    /// Dispatches to the variant's inference routine over a whole sequence
    /// (zero-initialised recurrence, repeated-first-frame windows).
    pub fn predict_sequence(&self, frames: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        match self.spec.variant {
            Variant::SingleFrameCnn => frames.iter().map(|f| self.forward_single(f)).collect(),
            Variant::MultiFrameCnn => self.forward_window_sequence(frames),
            Variant::LstmCnn => self.forward_sequence(frames, None, InitMode::Zeros),
        }
    }

    /// Loss and parameter gradients of the single-frame network.
    pub fn loss_and_grads_single(
        &self,
        frame: &Tensor<T>,
        label: &Tensor<T>,
        pos_weight: f64,
    ) -> Result<(T, NetParams<T>)> {
        self.expect_variant(Variant::SingleFrameCnn, "loss_and_grads_single")?;
        self.check_frame(frame)?;
        self.check_labels(std::slice::from_ref(label), frame.shape())?;
        let (tower, out) = self.single_trace(frame)?;
        let (loss, glogits) = sigmoid_ce_loss(&out.logits, label, T::lit(pos_weight))?;
        let mut grads = self.params.zeros_like();
        let gfeat = self.output_backward(&out, &glogits, &mut grads)?;
        tower_backward(&self.params.tower, &tower, gfeat, &mut grads.tower)?;
        Ok((loss, grads))
    }

    /// Loss and gradients of the multi-frame network for a window whose last
    /// frame is labelled by `label`.
    pub fn loss_and_grads_window(
        &self,
        frames: &[Tensor<T>],
        label: &Tensor<T>,
        pos_weight: f64,
    ) -> Result<(T, NetParams<T>)> {
        self.expect_variant(Variant::MultiFrameCnn, "loss_and_grads_window")?;
        let (towers, sizes, out) = self.window_trace(frames)?;
        self.check_labels(std::slice::from_ref(label), frames[0].shape())?;
        let (loss, glogits) = sigmoid_ce_loss(&out.logits, label, T::lit(pos_weight))?;
        let mut grads = self.params.zeros_like();
        let gcat = self.output_backward(&out, &glogits, &mut grads)?;
        for (g, tr) in gcat.split_channels(&sizes)?.into_iter().zip(&towers) {
            tower_backward(&self.params.tower, tr, g, &mut grads.tower)?;
        }
        Ok((loss, grads))
    }

    /// Unrolls the LSTM network over `frames` and returns the summed
    /// per-timestep loss with gradients through the whole unrolled graph.
    pub fn backward_through_time(
        &self,
        frames: &[Tensor<T>],
        labels: &[Tensor<T>],
        init: InitMode,
        opts: &BpttOptions,
    ) -> Result<(T, NetParams<T>)> {
        self.expect_variant(Variant::LstmCnn, "backward_through_time")?;
        let s = self.check_frames(frames)?;
        contract!(
            frames.len() == labels.len(),
            "unroll of {} frames with {} labels",
            frames.len(),
            labels.len()
        );
        contract!(
            frames.len() <= self.spec.unroll,
            "unroll of {} frames exceeds the configured length {}",
            frames.len(),
            self.spec.unroll
        );
        self.check_labels(labels, s)?;
        let pw = T::lit(opts.pos_weight);
        let first = match init {
            InitMode::GroundTruthFirst => Some(&labels[0]),
            InitMode::Zeros => None,
        };
        let mut state = self.initial_state(s, first)?;
        let mut traces = Vec::with_capacity(frames.len());
        let mut loss_grads = Vec::with_capacity(frames.len());
        let mut total = T::zero();
        for (f, l) in frames.iter().zip(labels) {
            let tr = self.step_trace(f, &state)?;
            let (loss, g) = sigmoid_ce_loss(&tr.output.logits, l, pw)?;
            total += loss;
            loss_grads.push(g);
            state.h = tr.step.h.clone();
            state.c = tr.step.c.clone();
            state.prev_prediction = tr.prob.clone();
            traces.push(tr);
        }

        let p = &self.params;
        let lstm = p.lstm.as_ref().expect("LSTM variant");
        let mut grads = p.zeros_like();
        let mut dh_next: Option<Tensor<T>> = None;
        let mut dc_next: Option<Tensor<T>> = None;
        let mut dprob_next: Option<Tensor<T>> = None;
        for (t, tr) in traces.iter().enumerate().rev() {
            let mut glogits = loss_grads[t].clone();
            if let Some(dp) = dprob_next.take() {
                for ((g, &d), &pr) in glogits.data_mut().iter_mut().zip(dp.data()).zip(tr.prob.data()) {
                    *g += d * pr * (T::one() - pr);
                }
            }
            let mut dh = self.output_backward(&tr.output, &glogits, &mut grads)?;
            if let Some(n) = dh_next.take() {
                dh.add_assign(&n)?;
            }
            let lg = conv_lstm_step_backward(&tr.step, lstm, &dh, dc_next.as_ref())?;
            {
                let gl = grads.lstm.as_mut().expect("LSTM grads");
                gl.gates.weight.add_assign(&lg.weight)?;
                for (a, &b) in gl.gates.bias.iter_mut().zip(&lg.bias) {
                    *a += b;
                }
            }
            dh_next = Some(lg.h_prev);
            dc_next = Some(lg.c_prev);
            let mut parts = lg.x.split_channels(&[tr.feat_channels, tr.fb_channels])?.into_iter();
            let dfeat = parts.next().expect("feature part");
            let dfb = parts.next().expect("feedback part");
            tower_backward(&p.tower, &tr.tower, dfeat, &mut grads.tower)?;
            let mut dprev = tower_backward(&p.feedback, &tr.feedback, dfb, &mut grads.feedback)?;
            for pooled in tr.prepool.iter().rev() {
                dprev = maxpool_backward(pooled, &dprev)?;
            }
            if t > 0 && opts.feedback_gradient {
                dprob_next = Some(dprev);
            }
        }
        Ok((total, grads))
    }

    /// Architecture description stored in checkpoints.
    pub fn architecture_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).expect("spec serializes")
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        self.params
            .slots()
            .into_iter()
            .map(|s| NamedTensor {
                name: s.name,
                shape: s.dims,
                data: s.data.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect(),
            })
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save_checkpoint(path, self.architecture_json(), &self.named_tensors())
    }

    /// Loads a checkpoint, checking that its tensors match the stored spec.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (header, tensors) = checkpoint::load_checkpoint(path)?;
        let spec: NetworkSpec = serde_json::from_value(header.architecture)
            .map_err(|e| Error::format(path, format!("architecture: {e}")))?;
        let mut net = Network::new(spec, 0)?;
        let mut slots = net.params.slots_mut();
        if slots.len() != tensors.len() {
            return Err(Error::format(
                path,
                format!("{} tensors stored, architecture has {}", tensors.len(), slots.len()),
            ));
        }
        for (slot, t) in slots.iter_mut().zip(&tensors) {
            if slot.name != t.name || slot.dims != t.shape {
                return Err(Error::format(
                    path,
                    format!(
                        "tensor {} {:?} does not match architecture slot {} {:?}",
                        t.name, t.shape, slot.name, slot.dims
                    ),
                ));
            }
            for (d, &v) in slot.data.iter_mut().zip(&t.data) {
                *d = T::lit(v as f64);
            }
        }
        drop(slots);
        Ok(net)
    }
}
