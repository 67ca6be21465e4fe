//! Fully connected networks with interchangeable error assignment.
//!
//! The forward pass is shared: `y_l = W_l · a_{l-1} (+ b_l)`, `a_l = f(y_l)`,
//! with a linear output layer whose logits feed softmax cross-entropy. The
//! output error is `δa_n = e`. Hidden errors differ by algorithm:
//!
//! - BP: `δa_l = W_{l+1}ᵀ · δa_{l+1} ⊙ f'(a_l)`
//! - DFA: `δa_l = B_l · e ⊙ f'(a_l)` with a dense fixed `B_l`
//! - SDFA/SSDFA: the same product, evaluated only over the nonzeros of each
//!   row of `B_l` in ascending column order. With one nonzero per row it is
//!   `B_{l,i,j} · e_j · f'(a_{l,i})`.
//!
//! All algorithms then use `δW_l = δa_l · a_{l-1}ᵀ`, averaged over the batch.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;

use crate::costmodel::{record_batch, CostCounters, CostReport, LayerCost, NoProbe, Probe};
use crate::data::{argmax, Dataset};
use crate::error::{Error, Result};
use crate::feedback::{angle, build_feedback, build_ssdfa, nonzeros_per_row, AngleReport, FeedbackMatrix};
use crate::numerics::{derive_seed, init_uniform, softmax_xent, softmax_xent_into, Activation, Matrix, Rng, Scalar, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Bp,
    Dfa,
    Sdfa,
    Ssdfa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Bp, Algorithm::Dfa, Algorithm::Sdfa, Algorithm::Ssdfa];

    pub fn uses_feedback(self) -> bool {
        self != Algorithm::Bp
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Dfa => "dfa",
            Algorithm::Sdfa => "sdfa",
            Algorithm::Ssdfa => "ssdfa",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bp" => Ok(Algorithm::Bp),
            "dfa" => Ok(Algorithm::Dfa),
            "sdfa" => Ok(Algorithm::Sdfa),
            "ssdfa" => Ok(Algorithm::Ssdfa),
            other => Err(Error::Config(alloc::format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(Error::Config(alloc::format!("unknown precision '{other}'"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Single => "single",
            Precision::Double => "double",
        })
    }
}

/// Default feedback bound for an `neurons x errors` matrix with `per_row`
/// nonzeros per row: `1/sqrt(neurons * per_row / errors)`. For a dense matrix
/// this is `1/sqrt(neurons)`.
pub fn default_feedback_scale(neurons: usize, errors: usize, per_row: usize) -> f64 {
    1.0 / Float::sqrt(neurons as f64 * per_row as f64 / errors as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    weights: Matrix<T>,
    bias: Option<Vec<T>>,
    activation: Activation,
    feedback: Option<FeedbackMatrix<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Matrix<T>, bias: Option<Vec<T>>, activation: Activation) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weights.rows() {
                return Err(Error::shape("layer bias", weights.shape(), (b.len(), 1)));
            }
        }
        Ok(Layer { weights, bias, activation, feedback: None })
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn feedback(&self) -> Option<&FeedbackMatrix<T>> {
        self.feedback.as_ref()
    }

    pub fn fanin(&self) -> usize {
        self.weights.cols()
    }

    pub fn fanout(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    layers: Vec<Layer<T>>,
}

/// Per-layer pre-activations `y_l` and activations `a_l` of one batch, plus
/// the input. Matrices are feature-major (one column per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    input: Matrix<T>,
    pre: Vec<Matrix<T>>,
    post: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn input(&self) -> &Matrix<T> {
        &self.input
    }

    pub fn pre_activation(&self, layer: usize) -> &Matrix<T> {
        &self.pre[layer]
    }

    pub fn activation(&self, layer: usize) -> &Matrix<T> {
        &self.post[layer]
    }

    /// Logits of the last layer.
    pub fn output(&self) -> &Matrix<T> {
        self.post.last().expect("non-empty network")
    }

    pub fn depth(&self) -> usize {
        self.post.len()
    }

    pub fn batch(&self) -> usize {
        self.input.cols()
    }

    /// Input to layer `layer` (`a_{l-1}`, or `x` for the first layer).
    fn layer_input(&self, layer: usize) -> &Matrix<T> {
        if layer == 0 {
            &self.input
        } else {
            &self.post[layer - 1]
        }
    }
}

/// Batch-mean weight and bias gradients, and the per-sample errors `δa_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Matrix<T>>,
    pub bias: Vec<Option<Vec<T>>>,
    /// `δa_l` per layer, feature-major.
    pub deltas: Vec<Matrix<T>>,
    /// `W_1ᵀ · δa_1`; only BP computes it.
    pub input_delta: Option<Matrix<T>>,
}

impl<T: Scalar> Network<T> {
    /// Random network with widths `dims` (input first). Hidden layers use
    /// `hidden`, the output layer is linear. Weights are uniform in
    /// `±1/sqrt(fanout)`; biases, when enabled, start at zero.
    pub fn new(dims: &[usize], hidden: Activation, bias: bool, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(alloc::format!("invalid architecture {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fanin, fanout) = (w[0], w[1]);
                let weights = init_uniform(fanout, fanin, 1.0 / Float::sqrt(fanout as f64), rng);
                let act = if l == last { Activation::Linear } else { hidden };
                Layer::new(weights, bias.then(|| vec![T::zero(); fanout]), act)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fanout() != pair[1].fanin() {
                return Err(Error::shape("layer chain", pair[0].weights.shape(), pair[1].weights.shape()));
            }
        }
        let net = Network { layers };
        for (l, layer) in net.layers.iter().enumerate() {
            if let Some(fb) = &layer.feedback {
                net.check_feedback(l, fb)?;
            }
        }
        Ok(net)
    }

    /// Builds the network described by `dims` and `cfg`: weights from the
    /// weight stream of `cfg.seed`, feedback matrices for every hidden layer
    /// when the algorithm needs them.
    pub fn for_training(dims: &[usize], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::stream(cfg.seed, Stream::Weights);
        let mut net = Self::new(dims, cfg.hidden_activation, cfg.bias, &mut rng)?;
        if cfg.algorithm.uses_feedback() {
            net.attach_feedback(cfg)?;
        }
        Ok(net)
    }

    /// Builds and attaches feedback for every hidden layer as `cfg` asks.
    /// Layer `l` uses seed `derive_seed(cfg.seed, [feedback, l])`.
    pub fn attach_feedback(&mut self, cfg: &TrainConfig) -> Result<()> {
        let m = self.output_size();
        for l in 0..self.depth() - 1 {
            let n = self.layers[l].fanout();
            let seed = derive_seed(cfg.seed, &[Stream::Feedback as u64 + 100, l as u64]);
            let fb = match cfg.algorithm {
                Algorithm::Bp => return Err(Error::Config("backpropagation uses no feedback matrices".into())),
                Algorithm::Dfa => {
                    let scale = cfg.feedback_scale.unwrap_or_else(|| default_feedback_scale(n, m, m));
                    build_feedback(n, m, m, 0.0, scale, seed)?
                }
                Algorithm::Sdfa => {
                    let rank = cfg.rank.unwrap_or(m);
                    let k = nonzeros_per_row(m, cfg.sparsity).max(1);
                    let scale = cfg.feedback_scale.unwrap_or_else(|| default_feedback_scale(n, m, k));
                    build_feedback(n, m, rank, cfg.sparsity, scale, seed)?
                }
                Algorithm::Ssdfa => {
                    let scale = cfg.feedback_scale.unwrap_or_else(|| default_feedback_scale(n, m, 1));
                    build_ssdfa(n, m, scale, seed)?
                }
            };
            self.set_feedback(l, fb.cast())?;
        }
        Ok(())
    }

    fn check_feedback(&self, layer: usize, fb: &FeedbackMatrix<T>) -> Result<()> {
        if layer + 1 >= self.depth() {
            return Err(Error::Config(alloc::format!("layer {layer} is the output layer and takes no feedback")));
        }
        let want = (self.layers[layer].fanout(), self.output_size());
        if fb.mat().shape() != want {
            return Err(Error::shape("feedback", fb.mat().shape(), want));
        }
        Ok(())
    }

    /// Installs a fixed feedback matrix for hidden layer `layer`.
    pub fn set_feedback(&mut self, layer: usize, fb: FeedbackMatrix<T>) -> Result<()> {
        self.check_feedback(layer, &fb)?;
        self.layers[layer].feedback = Some(fb);
        Ok(())
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer<T> {
        &self.layers[l]
    }

    /// Mutable forward weights of layer `l`. The shape is fixed.
    pub fn weights_mut(&mut self, l: usize) -> &mut [T] {
        self.layers[l].weights.as_mut_slice()
    }

    pub fn bias_mut(&mut self, l: usize) -> Option<&mut [T]> {
        self.layers[l].bias.as_deref_mut()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].fanin()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().unwrap().fanout()
    }

    /// Widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_size()];
        d.extend(self.layers.iter().map(|l| l.fanout()));
        d
    }

    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(|l| l.bias.is_some())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.cast(),
                    bias: l.bias.as_ref().map(|b| b.iter().map(|&v| U::of(v.as_f64())).collect()),
                    activation: l.activation,
                    feedback: l.feedback.as_ref().map(|f| f.cast()),
                })
                .collect(),
        }
    }

    /// Forward pass of a single sample.
    pub fn forward(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        self.forward_batch(Matrix::column(x))
    }

    /// Forward pass of a feature-major batch (`input_size x batch`).
    pub fn forward_batch(&self, input: Matrix<T>) -> Result<ForwardTrace<T>> {
        if input.rows() != self.input_size() {
            return Err(Error::shape("forward", self.layers[0].weights.shape(), input.shape()));
        }
        let mut pre = Vec::with_capacity(self.depth());
        let mut post: Vec<Matrix<T>> = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let a_prev = post.last().unwrap_or(&input);
            let mut y = layer.weights.matmul(a_prev)?;
            if let Some(b) = &layer.bias {
                for (o, &bo) in b.iter().enumerate() {
                    y.row_mut(o).iter_mut().for_each(|v| *v += bo);
                }
            }
            let act = layer.activation;
            let a = if act == Activation::Linear { y.clone() } else { y.map(|v| act.apply(v)) };
            pre.push(y);
            post.push(a);
        }
        Ok(ForwardTrace { input, pre, post })
    }

    /// Softmax cross-entropy loss of one sample.
    pub fn loss(&self, x: &[T], label: usize) -> Result<T> {
        let trace = self.forward(x)?;
        Ok(softmax_xent(trace.output().as_slice(), label)?.0)
    }

    pub fn backward(&self, algorithm: Algorithm, trace: &ForwardTrace<T>, e: &Matrix<T>) -> Result<Gradients<T>> {
        self.backward_probed(algorithm, trace, e, &mut NoProbe)
    }

    /// Single-sample BP.
    pub fn backward_bp(&self, trace: &ForwardTrace<T>, e: &[T]) -> Result<Gradients<T>> {
        self.backward(Algorithm::Bp, trace, &Matrix::column(e))
    }

    /// Single-sample DFA with the dense feedback matrices.
    pub fn backward_dfa(&self, trace: &ForwardTrace<T>, e: &[T]) -> Result<Gradients<T>> {
        self.backward(Algorithm::Dfa, trace, &Matrix::column(e))
    }

    /// Single-sample sparse DFA over the nonzeros of the feedback matrices.
    pub fn backward_sdfa(&self, trace: &ForwardTrace<T>, e: &[T]) -> Result<Gradients<T>> {
        self.backward(Algorithm::Sdfa, trace, &Matrix::column(e))
    }

    /// Backward pass for `algorithm` given the output errors `e`
    /// (`outputs x batch`). Every kernel reports its counts to `probe`.
    pub fn backward_probed<P: Probe>(
        &self,
        algorithm: Algorithm,
        trace: &ForwardTrace<T>,
        e: &Matrix<T>,
        probe: &mut P,
    ) -> Result<Gradients<T>> {
        let depth = self.depth();
        let batch = trace.batch();
        if trace.depth() != depth {
            return Err(Error::Input(alloc::format!("trace has {} layers, network {}", trace.depth(), depth)));
        }
        if e.shape() != (self.output_size(), batch) {
            return Err(Error::shape("output error", (self.output_size(), batch), e.shape()));
        }
        probe.samples(batch);

        let mut deltas: Vec<Option<Matrix<T>>> = vec![None; depth];
        deltas[depth - 1] = Some(e.clone());
        let mut input_delta = None;

        match algorithm {
            Algorithm::Bp => {
                for l in (0..depth).rev() {
                    let layer = &self.layers[l];
                    let delta = deltas[l].as_ref().expect("filled from above");
                    let prop = layer.weights.tr_matmul(delta)?;
                    let w = layer.weights.len() as u64;
                    let a = layer.fanout() as u64;
                    let incoming = if l + 1 < depth { self.layers[l + 1].fanout() } else { self.output_size() } as u64;
                    // error product, neuron state read and main-memory traffic
                    record_batch(probe, l, batch, LayerCost { reads: a, writes: 0, macs: w, movement_words: w + a + incoming });
                    if l == 0 {
                        input_delta = Some(prop);
                    } else {
                        let below = &self.layers[l - 1];
                        deltas[l - 1] = Some(apply_derivative(prop, trace.activation(l - 1), below.activation));
                    }
                }
            }
            Algorithm::Dfa | Algorithm::Sdfa | Algorithm::Ssdfa => {
                for l in 0..depth - 1 {
                    let layer = &self.layers[l];
                    let fb = layer.feedback.as_ref().ok_or(Error::MissingFeedback { layer: l })?;
                    let a_l = trace.activation(l);
                    let (delta, b) = if algorithm == Algorithm::Dfa {
                        let projected = fb.mat().matmul(e)?;
                        (apply_derivative(projected, a_l, layer.activation), fb.mat().len() as u64)
                    } else {
                        (sparse_feedback(fb, e, a_l, layer.activation), fb.nnz() as u64)
                    };
                    record_batch(probe, l, batch, LayerCost { reads: b, writes: 0, macs: b, movement_words: b });
                    deltas[l] = Some(delta);
                }
            }
        }

        let deltas: Vec<Matrix<T>> = deltas.into_iter().map(|d| d.expect("every layer assigned")).collect();
        let inv_batch = T::one() / T::of(batch as f64);
        let mut weights = Vec::with_capacity(depth);
        let mut bias = Vec::with_capacity(depth);
        for (l, layer) in self.layers.iter().enumerate() {
            let delta = &deltas[l];
            let mut gw = delta.matmul(&trace.layer_input(l).transpose())?;
            if batch > 1 {
                gw.scale(inv_batch);
            }
            let w = gw.len() as u64;
            // synapse update: one read, one write and one MAC per weight
            record_batch(probe, l, batch, LayerCost { reads: w, writes: w, macs: w, movement_words: 0 });
            weights.push(gw);
            bias.push(layer.bias.as_ref().map(|_| {
                (0..delta.rows())
                    .map(|o| delta.row(o).iter().fold(T::zero(), |s, &v| s + v) * inv_batch)
                    .collect()
            }));
        }
        Ok(Gradients { weights, bias, deltas, input_delta })
    }

    /// `W_l ← W_l − lr·δW_l` (and the bias alike). Feedback is untouched.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) -> Result<()> {
        if grads.weights.len() != self.depth() {
            return Err(Error::Input(alloc::format!("{} gradients for {} layers", grads.weights.len(), self.depth())));
        }
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            layer.weights.sub_scaled(lr, gw)?;
            if let (Some(b), Some(gb)) = (layer.bias.as_mut(), gb) {
                if b.len() != gb.len() {
                    return Err(Error::shape("bias step", (b.len(), 1), (gb.len(), 1)));
                }
                b.iter_mut().zip(gb).for_each(|(b, &g)| *b -= lr * g);
            }
        }
        Ok(())
    }

    /// Class predictions, argmax with ties to the lowest index.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<usize>> {
        if !data.is_empty() && data.dim() != self.input_size() {
            return Err(Error::shape("predict", (self.input_size(), 1), (data.dim(), 1)));
        }
        let mut out = Vec::with_capacity(data.len());
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(EVAL_CHUNK) {
            let trace = self.forward_batch(data.gather(chunk))?;
            let logits = trace.output();
            for b in 0..chunk.len() {
                out.push(argmax((0..logits.rows()).map(|o| logits[(o, b)])));
            }
        }
        Ok(out)
    }

    /// Fraction of correctly classified samples; 0 for an empty set.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(data)?;
        let correct = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// Alignment angle of hidden layer `layer`'s feedback with the product of
    /// the forward weights above it.
    pub fn angle(&self, layer: usize) -> Result<AngleReport> {
        let fb = self.layers.get(layer).and_then(|l| l.feedback.as_ref()).ok_or(Error::MissingFeedback { layer })?;
        let chain: Vec<Matrix<f64>> = self.layers[layer + 1..].iter().map(|l| l.weights.cast()).collect();
        let deg = angle(&fb.mat().cast(), &chain)?;
        Ok(AngleReport { layer, angle_degrees: deg })
    }

    /// Angles for every hidden layer with feedback, or just the first.
    pub fn angles(&self, all_layers: bool) -> Result<Vec<AngleReport>> {
        let hidden = self.depth() - 1;
        let upto = if all_layers { hidden } else { hidden.min(1) };
        (0..upto).filter(|&l| self.layers[l].feedback.is_some()).map(|l| self.angle(l)).collect()
    }
}

const EVAL_CHUNK: usize = 500;

fn apply_derivative<T: Scalar>(mut m: Matrix<T>, a: &Matrix<T>, act: Activation) -> Matrix<T> {
    for (v, &ai) in m.as_mut_slice().iter_mut().zip(a.as_slice()) {
        *v *= act.derivative(ai);
    }
    m
}

fn sparse_feedback<T: Scalar>(fb: &FeedbackMatrix<T>, e: &Matrix<T>, a: &Matrix<T>, act: Activation) -> Matrix<T> {
    let batch = e.cols();
    let rows = fb.sparse();
    let mut out = Matrix::zeros(fb.neurons(), batch);
    for i in 0..fb.neurons() {
        let (cols, vals) = rows.row(i);
        for b in 0..batch {
            let mut s = T::zero();
            for (&j, &w) in cols.iter().zip(vals) {
                s += w * e[(j, b)];
            }
            out[(i, b)] = s * act.derivative(a[(i, b)]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    /// Per-epoch learning-rate multiplier.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bias: bool,
    pub precision: Precision,
    pub hidden_activation: Activation,
    /// SDFA rank; defaults to the output count.
    pub rank: Option<usize>,
    /// SDFA sparsity.
    pub sparsity: f64,
    /// Overrides the default feedback bound.
    pub feedback_scale: Option<f64>,
    /// Log angles for every hidden layer instead of the first.
    pub all_angles: bool,
    /// Count backward-pass costs during training.
    pub count_costs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Bp,
            lr: 0.01,
            lr_decay: 0.97,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            bias: false,
            precision: Precision::Single,
            hidden_activation: Activation::Tanh,
            rank: None,
            sparsity: 0.0,
            feedback_scale: None,
            all_angles: false,
            count_costs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(alloc::format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(alloc::format!("lr decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if let Some(s) = self.feedback_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(alloc::format!("feedback scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy of the predictions made during the epoch, before each
    /// batch's update.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub angles: Vec<AngleReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Angles before the first update.
    pub initial_angles: Vec<AngleReport>,
    pub epochs: Vec<EpochMetrics>,
    /// Per-sample backward costs when `count_costs` is set.
    pub costs: Option<CostReport>,
}

impl TrainReport {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }

    pub fn final_angles(&self) -> &[AngleReport] {
        self.epochs.last().map_or(&[], |e| &e.angles)
    }
}

/// Minibatch SGD on `train`, evaluating on `test` after every epoch.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_observed(net, train, test, cfg, |_| {})
}

/// [`train`] that calls `on_epoch` after each epoch.
pub fn train_observed<T: Scalar>(
    net: &mut Network<T>,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    if cfg.count_costs {
        let mut counters = CostCounters::new();
        let mut report = train_probed(net, train, test, cfg, &mut counters, on_epoch)?;
        report.costs = Some(counters.per_sample(cfg.algorithm));
        Ok(report)
    } else {
        train_probed(net, train, test, cfg, &mut NoProbe, on_epoch)
    }
}

/// [`train_observed`] with an explicit probe for the backward kernels.
pub fn train_probed<T: Scalar, P: Probe>(
    net: &mut Network<T>,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    probe: &mut P,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.dim() != net.input_size() || train.classes() != net.output_size() {
        return Err(Error::shape(
            "train data",
            (net.input_size(), net.output_size()),
            (train.dim(), train.classes()),
        ));
    }
    let angles_wanted = cfg.algorithm.uses_feedback();
    let initial_angles = if angles_wanted { net.angles(cfg.all_angles)? } else { Vec::new() };

    let m = net.output_size();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle = Rng::stream(cfg.seed, Stream::Shuffle);
    let mut lr = cfg.lr;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut column = vec![T::zero(); m];
    let mut err_col = vec![T::zero(); m];

    for epoch in 1..=cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let trace = net.forward_batch(train.gather(chunk))?;
            let logits = trace.output();
            let mut e = Matrix::zeros(m, chunk.len());
            for (b, &i) in chunk.iter().enumerate() {
                for o in 0..m {
                    column[o] = logits[(o, b)];
                }
                let label = train.labels()[i];
                loss_sum += softmax_xent_into(&column, label, &mut err_col).as_f64();
                if argmax(column.iter().copied()) == label {
                    correct += 1;
                }
                for o in 0..m {
                    e[(o, b)] = err_col[o];
                }
            }
            let grads = net.backward_probed(cfg.algorithm, &trace, &e, probe)?;
            net.sgd_step(&grads, T::of(lr))?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let test_accuracy = test.map(|t| net.evaluate(t)).transpose()?;
        let angles = if angles_wanted { net.angles(cfg.all_angles)? } else { Vec::new() };
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss,
            train_accuracy: correct as f64 / train.len() as f64,
            test_accuracy,
            angles,
        };
        on_epoch(&metrics);
        epochs.push(metrics);
        lr *= cfg.lr_decay;
    }
    Ok(TrainReport { initial_angles, epochs, costs: None })
}

/// Per-sample backward costs of one training step on `sample`.
pub fn instrument<T: Scalar>(net: &Network<T>, algorithm: Algorithm, x: &[T], label: usize) -> Result<CostReport> {
    let trace = net.forward(x)?;
    let (_, e) = softmax_xent(trace.output().as_slice(), label)?;
    let mut counters = CostCounters::new();
    net.backward_probed(algorithm, &trace, &Matrix::column(&e), &mut counters)?;
    Ok(counters.per_sample(algorithm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net64(dims: &[usize], act: Activation, seed: u64) -> Network<f64> {
        Network::new(dims, act, false, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn identity_linear_forward() {
        let layer = Layer::new(Matrix::<f64>::identity(3), None, Activation::Linear).unwrap();
        let net = Network::from_layers(vec![layer.clone(), layer]).unwrap();
        let x = [0.5, -1.0, 2.0];
        assert_eq!(net.forward(&x).unwrap().output().as_slice(), &x);
    }

    #[test]
    fn zero_weights_give_zero_preactivations() {
        let mk = |o, i| Layer::new(Matrix::<f64>::zeros(o, i), None, Activation::Tanh).unwrap();
        let net = Network::from_layers(vec![mk(4, 3), mk(2, 4)]).unwrap();
        let t = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        for l in 0..2 {
            assert!(t.pre_activation(l).as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_shape_error() {
        let net = net64(&[3, 2], Activation::Tanh, 0);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn single_layer_bp_is_outer_product() {
        let net = net64(&[3, 2], Activation::Tanh, 1);
        let x = [0.2, -0.4, 0.9];
        let t = net.forward(&x).unwrap();
        let e = [0.3, -0.7];
        let g = net.backward_bp(&t, &e).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.weights[0][(o, i)], e[o] * x[i]);
            }
        }
    }

    #[test]
    fn dfa_without_feedback_is_a_config_error() {
        let net = net64(&[4, 3, 2], Activation::Tanh, 2);
        let t = net.forward(&[0.0; 4]).unwrap();
        assert_eq!(net.backward_dfa(&t, &[1.0, 0.0]).unwrap_err(), Error::MissingFeedback { layer: 0 });
    }

    #[test]
    fn feedback_shape_is_checked() {
        let mut net = net64(&[4, 3, 2], Activation::Tanh, 2);
        let fb = build_feedback(4, 2, 2, 0.0, 1.0, 0).unwrap();
        assert!(matches!(net.set_feedback(0, fb), Err(Error::Shape { .. })));
        let fb = build_feedback(2, 2, 2, 0.0, 1.0, 0).unwrap();
        assert!(matches!(net.set_feedback(1, fb), Err(Error::Config(_))));
    }

    #[test]
    fn ssdfa_three_scalar_product() {
        // one hidden neuron wired to error 3 with weight 0.5, linear activation
        let mut b = Matrix::zeros(1, 4);
        b[(0, 3)] = 0.5;
        let l1 = Layer::new(Matrix::from_rows(&[[1.0]]).unwrap(), None, Activation::Linear).unwrap();
        let l2 = Layer::new(Matrix::zeros(4, 1), None, Activation::Linear).unwrap();
        let mut net = Network::from_layers(vec![l1, l2]).unwrap();
        net.set_feedback(0, FeedbackMatrix::from_dense(b, 1, 0.75, 0)).unwrap();
        let t = net.forward(&[1.0]).unwrap();
        let g = net.backward_sdfa(&t, &[0.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(g.deltas[0].as_slice(), &[1.0]);
    }

    #[test]
    fn lr_zero_leaves_network_unchanged() {
        let mut net = net64(&[5, 4, 3], Activation::Tanh, 3);
        let before = net.clone();
        let t = net.forward(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let g = net.backward_bp(&t, &[0.1, -0.2, 0.1]).unwrap();
        net.sgd_step(&g, 0.0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn algorithm_parsing() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!("fa".parse::<Algorithm>(), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr_decay: 1.5, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr_decay: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn default_feedback_scales() {
        assert_eq!(default_feedback_scale(400, 10, 10), 0.05);
        assert!((default_feedback_scale(400, 10, 1) - 1.0 / 40f64.sqrt()).abs() < 1e-15);
    }
}
