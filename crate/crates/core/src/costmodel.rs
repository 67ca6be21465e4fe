//! Backward-pass cost model: reads, writes, MACs and data movement.
//!
//! Counts are per training sample and exclude the forward pass. With
//! `|W_l| = fanin * fanout`, `|A_l| = fanout` and `M` outputs, each layer is
//! charged:
//!
//! | algorithm | reads | writes | MACs | movement |
//! |-----------|-------|--------|------|----------|
//! | BP        | `|W_l| + |A_l|` | `|W_l|` | `2|W_l|` | `|W_l| + |A_l| + |E_{l+1}|` |
//! | DFA       | `|W_l| + |B_l|` | `|W_l|` | `|W_l| + |B_l|` | `|B_l|` |
//! | SDFA      | `|W_l| + |b_l|` | `|W_l|` | `|W_l| + |b_l|` | `|b_l|` |
//!
//! where `|E_{l+1}|` is the width of the error vector arriving from above
//! (the next layer's fanout, or `M` for the output layer), `|B_l| =
//! fanout * M` and `|b_l|` is the nonzero count of the sparse feedback
//! matrix. The output layer has no feedback matrix, so under DFA/SDFA it only
//! pays for its weight update. BP movement is main-memory traffic; DFA/SDFA
//! movement is error words delivered to neurons.
//!
//! A weight word is charged one read and one write per sample no matter how
//! many kernels touch it, and the BP error product `W_lᵀ·δa_l` is computed
//! for every layer including the first.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::Algorithm;

/// Bytes per moved word when reporting megabytes.
pub const BYTES_PER_WORD: u64 = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerCost {
    pub reads: u64,
    pub writes: u64,
    pub macs: u64,
    pub movement_words: u64,
}

impl LayerCost {
    pub fn movement_mb(&self) -> f64 {
        (self.movement_words * BYTES_PER_WORD) as f64 / 1e6
    }

    fn add(&mut self, other: &LayerCost) {
        self.reads += other.reads;
        self.writes += other.writes;
        self.macs += other.macs;
        self.movement_words += other.movement_words;
    }

    fn times(self, n: u64) -> LayerCost {
        LayerCost {
            reads: self.reads * n,
            writes: self.writes * n,
            macs: self.macs * n,
            movement_words: self.movement_words * n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub algorithm: Algorithm,
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    pub fn total(&self) -> LayerCost {
        let mut t = LayerCost::default();
        self.layers.iter().for_each(|l| t.add(l));
        t
    }
}

/// Layer widths of a fully connected stack, input first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    dims: Vec<usize>,
    feedback_nonzeros: Option<Vec<usize>>,
}

impl NetShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Input(alloc::format!("invalid layer widths {dims:?}")));
        }
        Ok(NetShape { dims, feedback_nonzeros: None })
    }

    /// Attaches the per-hidden-layer feedback nonzero counts `|b_l|` used by
    /// SDFA.
    pub fn with_feedback_nonzeros(mut self, nnz: Vec<usize>) -> Result<Self> {
        if nnz.len() != self.hidden_layers() {
            return Err(Error::Input(alloc::format!(
                "{} feedback counts for {} hidden layers",
                nnz.len(),
                self.hidden_layers()
            )));
        }
        self.feedback_nonzeros = Some(nnz);
        Ok(self)
    }

    /// `|b_l|` for `k` nonzeros per feedback row.
    pub fn with_nonzeros_per_row(self, k: usize) -> Result<Self> {
        let nnz = (0..self.hidden_layers()).map(|l| self.fanout(l) * k).collect();
        self.with_feedback_nonzeros(nnz)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers() - 1
    }

    pub fn fanin(&self, layer: usize) -> usize {
        self.dims[layer]
    }

    pub fn fanout(&self, layer: usize) -> usize {
        self.dims[layer + 1]
    }

    pub fn outputs(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// `|W|`.
    pub fn weights(&self) -> u64 {
        (0..self.layers()).map(|l| (self.fanin(l) * self.fanout(l)) as u64).sum()
    }

    /// Neurons across all hidden layers.
    pub fn hidden_neurons(&self) -> u64 {
        (0..self.hidden_layers()).map(|l| self.fanout(l) as u64).sum()
    }

    pub fn feedback_nonzeros(&self) -> Option<&[usize]> {
        self.feedback_nonzeros.as_deref()
    }
}

/// Closed-form per-sample backward cost of `algorithm` on `shape`.
pub fn analytic_cost(shape: &NetShape, algorithm: Algorithm) -> Result<CostReport> {
    let layers = shape.layers();
    let m = shape.outputs() as u64;
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let w = (shape.fanin(l) * shape.fanout(l)) as u64;
        let a = shape.fanout(l) as u64;
        let hidden = l + 1 < layers;
        let update = LayerCost { reads: w, writes: w, macs: w, movement_words: 0 };
        let cost = match algorithm {
            Algorithm::Bp => {
                let incoming = if hidden { shape.fanout(l + 1) as u64 } else { m };
                LayerCost { reads: w + a, writes: w, macs: 2 * w, movement_words: w + a + incoming }
            }
            _ if !hidden => update,
            Algorithm::Dfa => feedback_cost(update, a * m),
            Algorithm::Ssdfa => feedback_cost(update, a),
            Algorithm::Sdfa => {
                let nnz = shape
                    .feedback_nonzeros()
                    .ok_or_else(|| Error::Input("SDFA cost needs per-layer feedback nonzero counts".into()))?;
                feedback_cost(update, nnz[l] as u64)
            }
        };
        out.push(cost);
    }
    Ok(CostReport { algorithm, layers: out })
}

fn feedback_cost(update: LayerCost, b: u64) -> LayerCost {
    LayerCost { reads: update.reads + b, writes: update.writes, macs: update.macs + b, movement_words: b }
}

/// The fully connected stacks used for the cost comparisons.
///
/// `alexnet_fc` and `vgg16_fc` are the shared 4096-4096-1000 classifier
/// stack; the `_full` variants add the projection from the flattened
/// convolutional features (9216 for AlexNet, 7x7x512 = 25088 for VGG16).
pub fn builtin_shapes() -> Vec<(&'static str, NetShape)> {
    let mk = |d: &[usize]| NetShape::new(d.to_vec()).expect("static shape");
    vec![
        ("mnist_fc", mk(&[784, 400, 10])),
        ("cifar10_fc", mk(&[3072, 1000, 1000, 1000, 10])),
        ("cifar100_fc", mk(&[3072, 1000, 1000, 1000, 100])),
        ("alexnet_fc", mk(&[4096, 4096, 1000])),
        ("vgg16_fc", mk(&[4096, 4096, 1000])),
        ("alexnet_fc_full", mk(&[9216, 4096, 4096, 1000])),
        ("vgg16_fc_full", mk(&[25088, 4096, 4096, 1000])),
    ]
}

/// Looks up a builtin shape; `cifar_fc` is accepted for `cifar10_fc`.
pub fn builtin_shape(name: &str) -> Option<NetShape> {
    let name = if name == "cifar_fc" { "cifar10_fc" } else { name };
    builtin_shapes().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}

/// Sink for counts emitted by the backward kernels.
pub trait Probe {
    /// `n` samples enter a backward pass.
    fn samples(&mut self, n: usize);
    fn record(&mut self, layer: usize, cost: LayerCost);
}

/// Discards all counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProbe;

impl Probe for NoProbe {
    #[inline(always)]
    fn samples(&mut self, _: usize) {}
    #[inline(always)]
    fn record(&mut self, _: usize, _: LayerCost) {}
}

/// Accumulates counts over any number of backward passes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostCounters {
    layers: Vec<LayerCost>,
    samples: u64,
}

impl CostCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples
    }

    pub fn totals(&self) -> &[LayerCost] {
        &self.layers
    }

    /// Per-sample counts. Every sample of a run costs the same, so the
    /// division is exact.
    pub fn per_sample(&self, algorithm: Algorithm) -> CostReport {
        let n = self.samples.max(1);
        let layers = self
            .layers
            .iter()
            .map(|c| LayerCost {
                reads: c.reads / n,
                writes: c.writes / n,
                macs: c.macs / n,
                movement_words: c.movement_words / n,
            })
            .collect();
        CostReport { algorithm, layers }
    }
}

impl Probe for CostCounters {
    fn samples(&mut self, n: usize) {
        self.samples += n as u64;
    }

    fn record(&mut self, layer: usize, cost: LayerCost) {
        if self.layers.len() <= layer {
            self.layers.resize(layer + 1, LayerCost::default());
        }
        self.layers[layer].add(&cost);
    }
}

/// Records `cost` once per sample of a batch of `batch` columns.
#[inline]
pub(crate) fn record_batch<P: Probe>(probe: &mut P, layer: usize, batch: usize, cost: LayerCost) {
    probe.record(layer, cost.times(batch as u64));
}
