//! Sequential network container, forward pass with an activation tape, and
//! reverse-mode backpropagation.

use rand_distr::{Distribution, Normal};

use super::layers::{
    Activation, ConvLayer, DenseLayer, FusedMbConvBlock, Layer, LayerCache, MbConvBlock, Padding,
    PoolSpec,
};
use super::loss::softmax_cross_entropy;
use super::Tensor4;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const INIT_STREAM: u64 = 0x494e_4954;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    PlainConv,
    MbConv,
    FusedMbConv,
    Pool,
    Flatten,
    Dense,
}

/// Architecture description of one stage of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    pub kind: BlockKind,
    /// Output channels (conv blocks) or units (dense).
    pub out: usize,
    /// Kernel size for convs, window for pools.
    pub kernel: usize,
    pub stride: usize,
    pub expansion: usize,
    pub se_reduction: usize,
    pub skip: bool,
    pub activation: Activation,
}

impl BlockSpec {
    const BASE: BlockSpec = BlockSpec {
        kind: BlockKind::Flatten,
        out: 0,
        kernel: 1,
        stride: 1,
        expansion: 1,
        se_reduction: 4,
        skip: false,
        activation: Activation::Relu,
    };

    pub fn conv(out: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        Self {
            kind: BlockKind::PlainConv,
            out,
            kernel,
            stride,
            activation,
            ..Self::BASE
        }
    }

    pub fn mbconv(out: usize, expansion: usize, se_reduction: usize, skip: bool) -> Self {
        Self {
            kind: BlockKind::MbConv,
            out,
            kernel: 3,
            expansion,
            se_reduction,
            skip,
            ..Self::BASE
        }
    }

    pub fn fused_mbconv(out: usize, expansion: usize, se_reduction: usize, skip: bool) -> Self {
        Self {
            kind: BlockKind::FusedMbConv,
            out,
            kernel: 3,
            expansion,
            se_reduction,
            skip,
            ..Self::BASE
        }
    }

    pub fn pool(window: usize, stride: usize) -> Self {
        Self {
            kind: BlockKind::Pool,
            kernel: window,
            stride,
            ..Self::BASE
        }
    }

    pub fn flatten() -> Self {
        Self::BASE
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        Self {
            kind: BlockKind::Dense,
            out: units,
            activation,
            ..Self::BASE
        }
    }
}

/// Parameter gradients, one vector per parameter tensor in
/// [`LayerStack::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= k);
    }
}

/// Everything a backward pass (or Grad-CAM) needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ActivationTape {
    net_version: u64,
    caches: Vec<LayerCache>,
    /// Output of every layer; the last one is the logits.
    outputs: Vec<Tensor4>,
}

impl ActivationTape {
    pub fn is_complete(&self) -> bool {
        !self.caches.is_empty()
    }

    pub fn caches(&self) -> &[LayerCache] {
        &self.caches
    }

    /// Output of layer `i`.
    pub fn output(&self, i: usize) -> Option<&Tensor4> {
        self.outputs.get(i)
    }

    pub fn logits(&self) -> Option<&Tensor4> {
        self.outputs.last()
    }

    /// Concatenated branch decisions of every layer.
    pub fn branch_pattern(&self, net: &LayerStack) -> Vec<u64> {
        self.caches
            .iter()
            .zip(&net.layers)
            .flat_map(|(c, l)| c.branch_pattern(l))
            .collect()
    }
}

/// Sequential network with a fixed input shape.
#[derive(Clone, Debug)]
pub struct LayerStack {
    input_dims: (usize, usize, usize),
    layers: Vec<Layer>,
    /// Bumped on every mutable access; only used to detect stale tapes.
    version: u64,
}

impl PartialEq for LayerStack {
    fn eq(&self, other: &Self) -> bool {
        self.input_dims == other.input_dims && self.layers == other.layers
    }
}

impl LayerStack {
    pub fn new(input_dims: (usize, usize, usize), layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network has no layers".into()));
        }
        let net = Self {
            input_dims,
            layers,
            version: 0,
        };
        net.output_dims()?;
        Ok(net)
    }

    /// Builds a network from stage descriptions, He-initialized from `seed`.
    pub fn from_blocks(
        input_dims: (usize, usize, usize),
        blocks: &[BlockSpec],
        seed: u64,
    ) -> Result<Self> {
        let mut dims = input_dims;
        let mut layers = Vec::with_capacity(blocks.len());
        for b in blocks {
            let layer = match b.kind {
                BlockKind::PlainConv => Layer::Conv(ConvLayer::new(
                    dims.0,
                    b.out,
                    (b.kernel, b.kernel),
                    b.stride,
                    Padding::Same,
                    1,
                    b.activation,
                )?),
                BlockKind::MbConv => Layer::MbConv(MbConvBlock::new(
                    dims.0,
                    b.out,
                    b.expansion,
                    b.kernel,
                    b.stride,
                    b.se_reduction,
                    b.skip,
                    b.activation,
                )?),
                BlockKind::FusedMbConv => Layer::FusedMbConv(FusedMbConvBlock::new(
                    dims.0,
                    b.out,
                    b.expansion,
                    b.stride,
                    b.se_reduction,
                    b.skip,
                    b.activation,
                )?),
                BlockKind::Pool => Layer::Pool(PoolSpec::new(b.kernel, b.stride)?),
                BlockKind::Flatten => Layer::Flatten,
                BlockKind::Dense => Layer::Dense(DenseLayer::new(
                    dims.0 * dims.1 * dims.2,
                    b.out,
                    b.activation,
                )?),
            };
            dims = layer.output_dims(dims)?;
            layers.push(layer);
        }
        let mut net = Self::new(input_dims, layers)?;
        net.initialize(seed);
        Ok(net)
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn initialize(&mut self, seed: u64) {
        let fans: Vec<usize> = self.layers.iter().flat_map(|l| l.param_fan_ins()).collect();
        for (i, (p, fan)) in self.params_mut().into_iter().zip(fans).enumerate() {
            if fan == 0 {
                p.fill(0.0);
                continue;
            }
            let normal = Normal::new(0.0, (2.0 / fan as f64).sqrt()).expect("finite std");
            let mut rng = rng_for(seed, &[INIT_STREAM, i as u64]);
            p.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        }
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        self.input_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn output_dims(&self) -> Result<(usize, usize, usize)> {
        self.layers
            .iter()
            .try_fold(self.input_dims, |d, l| l.output_dims(d))
    }

    /// Dims of the output of every layer.
    pub fn layer_output_dims(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut d = self.input_dims;
        self.layers
            .iter()
            .map(|l| {
                d = l.output_dims(d)?;
                Ok(d)
            })
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.output_dims().map(|(c, h, w)| c * h * w).unwrap_or(0)
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Index of the first flatten layer.
    pub fn flatten_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, Layer::Flatten))
    }

    pub fn forward(
        &self,
        x: &Tensor4,
        keep_activations: bool,
    ) -> Result<(Tensor4, ActivationTape)> {
        if x.sample_dims() != self.input_dims {
            return Err(Error::ShapeMismatch(format!(
                "network input {:?} but got {:?}",
                self.input_dims,
                x.sample_dims()
            )));
        }
        let mut tape = ActivationTape {
            net_version: self.version,
            caches: Vec::new(),
            outputs: Vec::new(),
        };
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&cur)?;
            if keep_activations {
                tape.caches.push(cache);
                tape.outputs.push(y.clone());
            }
            cur = y;
        }
        Ok((cur, tape))
    }

    /// Runs layers `start..` on `x`, which must be the input of layer `start`.
    pub fn forward_from(&self, start: usize, x: &Tensor4) -> Result<Tensor4> {
        let mut cur = x.clone();
        for layer in &self.layers[start..] {
            cur = layer.forward(&cur)?.0;
        }
        Ok(cur)
    }

    fn check_tape(&self, tape: &ActivationTape) -> Result<()> {
        if !tape.is_complete() {
            return Err(Error::StaleTape(
                "forward pass ran without keep_activations".into(),
            ));
        }
        if tape.net_version != self.version || tape.caches.len() != self.layers.len() {
            return Err(Error::StaleTape(
                "network changed since the forward pass".into(),
            ));
        }
        Ok(())
    }

    /// Backpropagates `d_output` (gradient w.r.t. the logits) down to the
    /// input of layer `stop`. Returns that input gradient and the parameter
    /// gradients of layers `stop..`, in parameter order.
    pub fn backprop(
        &self,
        tape: &ActivationTape,
        d_output: &Tensor4,
        stop: usize,
    ) -> Result<(Tensor4, Gradients)> {
        self.check_tape(tape)?;
        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len() - stop);
        let mut grad = d_output.clone();
        for i in (stop..self.layers.len()).rev() {
            let (dx, g) = self.layers[i].backward(&tape.caches[i], &grad)?;
            per_layer.push(g);
            grad = dx;
        }
        per_layer.reverse();
        Ok((grad, Gradients(per_layer.into_iter().flatten().collect())))
    }

    /// Mean softmax cross-entropy and its gradient for every parameter.
    pub fn backward(&self, tape: &ActivationTape, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_tape(tape)?;
        let logits = tape.logits().expect("complete tape");
        let (loss, dlogits) = softmax_cross_entropy(logits, labels)?;
        let (_, grads) = self.backprop(tape, &dlogits, 0)?;
        Ok((loss, grads))
    }
}

pub fn forward(
    net: &LayerStack,
    x: &Tensor4,
    keep_activations: bool,
) -> Result<(Tensor4, ActivationTape)> {
    net.forward(x, keep_activations)
}

pub fn backward(
    net: &LayerStack,
    tape: &ActivationTape,
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    net.backward(tape, labels)
}
