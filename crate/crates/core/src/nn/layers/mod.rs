//! Layer types with explicit forward caches and hand-written backward passes.

mod activation;
mod blocks;
mod conv;
mod dense;
mod pool;
mod se;

pub use activation::{relu, sigmoid, Activation};
pub use blocks::{FusedMbConvBlock, FusedMbConvCache, MbConvBlock, MbConvCache};
pub use conv::{ConvCache, ConvLayer, Padding};
pub use dense::{DenseCache, DenseLayer};
pub use pool::{pooled_len, PoolCache, PoolSpec};
pub use se::{SeBlock, SeCache};

use super::Tensor4;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Pool(PoolSpec),
    Se(SeBlock),
    MbConv(MbConvBlock),
    FusedMbConv(FusedMbConvBlock),
    Flatten,
    Dense(DenseLayer),
}

#[derive(Clone, Debug)]
pub enum LayerCache {
    Conv(ConvCache),
    Pool(PoolCache),
    Se(SeCache),
    MbConv(MbConvCache),
    FusedMbConv(FusedMbConvCache),
    Flatten([usize; 4]),
    Dense(DenseCache),
}

fn push_relu_mask(out: &mut Vec<u64>, pre: &Tensor4, act: Activation) {
    if act == Activation::Relu {
        out.extend(pre.data().iter().map(|&z| (z > 0.0) as u64));
    }
}

fn conv_branches(out: &mut Vec<u64>, c: &ConvCache, layer: &ConvLayer) {
    push_relu_mask(out, &c.pre, layer.activation);
}

fn se_branches(out: &mut Vec<u64>, c: &SeCache) {
    push_relu_mask(out, &c.reduce.pre, Activation::Relu);
}

impl LayerCache {
    /// Discrete choices made during the forward pass (ReLU on/off, pool
    /// winners). Finite-difference checks compare these to detect steps
    /// that cross a kink.
    pub fn branch_pattern(&self, layer: &Layer) -> Vec<u64> {
        let mut out = Vec::new();
        match (self, layer) {
            (LayerCache::Conv(c), Layer::Conv(l)) => conv_branches(&mut out, c, l),
            (LayerCache::Pool(c), _) => out.extend(c.argmax.iter().map(|&i| i as u64)),
            (LayerCache::Se(c), _) => se_branches(&mut out, c),
            (LayerCache::MbConv(c), Layer::MbConv(l)) => {
                conv_branches(&mut out, &c.expand, &l.expand);
                conv_branches(&mut out, &c.depthwise, &l.depthwise);
                se_branches(&mut out, &c.se);
                conv_branches(&mut out, &c.project, &l.project);
            }
            (LayerCache::FusedMbConv(c), Layer::FusedMbConv(l)) => {
                conv_branches(&mut out, &c.fused, &l.fused);
                se_branches(&mut out, &c.se);
                conv_branches(&mut out, &c.project, &l.project);
            }
            (LayerCache::Dense(c), Layer::Dense(l)) => {
                push_relu_mask(&mut out, &c.pre, l.activation)
            }
            _ => {}
        }
        out
    }
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Pool(_) => "maxpool",
            Layer::Se(_) => "se",
            Layer::MbConv(_) => "mbconv",
            Layer::FusedMbConv(_) => "fused_mbconv",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn output_dims(&self, dims: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        match self {
            Layer::Conv(l) => l.output_dims(dims),
            Layer::Pool(p) => p.output_dims(dims),
            Layer::Se(s) => {
                if dims.0 != s.channels {
                    return Err(crate::Error::ShapeMismatch(format!(
                        "SE expects {} channels, got {}",
                        s.channels, dims.0
                    )));
                }
                Ok(dims)
            }
            Layer::MbConv(b) => b.output_dims(dims),
            Layer::FusedMbConv(b) => b.output_dims(dims),
            Layer::Flatten => Ok((dims.0 * dims.1 * dims.2, 1, 1)),
            Layer::Dense(d) => {
                if dims.0 * dims.1 * dims.2 != d.inputs {
                    return Err(crate::Error::ShapeMismatch(format!(
                        "dense expects {} inputs, got {}",
                        d.inputs,
                        dims.0 * dims.1 * dims.2
                    )));
                }
                Ok((d.outputs, 1, 1))
            }
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, LayerCache)> {
        Ok(match self {
            Layer::Conv(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Conv(c))
            }
            Layer::Pool(p) => {
                let (y, c) = p.forward(x)?;
                (y, LayerCache::Pool(c))
            }
            Layer::Se(s) => {
                let (y, c) = s.forward(x)?;
                (y, LayerCache::Se(c))
            }
            Layer::MbConv(b) => {
                let (y, c) = b.forward(x)?;
                (y, LayerCache::MbConv(c))
            }
            Layer::FusedMbConv(b) => {
                let (y, c) = b.forward(x)?;
                (y, LayerCache::FusedMbConv(c))
            }
            Layer::Flatten => {
                let dims = x.dims();
                (
                    x.clone().reshape([dims[0], x.sample_len(), 1, 1])?,
                    LayerCache::Flatten(dims),
                )
            }
            Layer::Dense(d) => {
                let (y, c) = d.forward(x)?;
                (y, LayerCache::Dense(c))
            }
        })
    }

    /// Gradient w.r.t. the layer input plus parameter gradients in
    /// [`Layer::params`] order.
    pub fn backward(&self, cache: &LayerCache, dy: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        let mismatch =
            || crate::Error::StaleTape(format!("cache does not belong to a {} layer", self.name()));
        match (self, cache) {
            (Layer::Conv(l), LayerCache::Conv(c)) => l.backward(c, dy),
            (Layer::Pool(p), LayerCache::Pool(c)) => Ok((p.backward(c, dy)?, Vec::new())),
            (Layer::Se(s), LayerCache::Se(c)) => s.backward(c, dy),
            (Layer::MbConv(b), LayerCache::MbConv(c)) => b.backward(c, dy),
            (Layer::FusedMbConv(b), LayerCache::FusedMbConv(c)) => b.backward(c, dy),
            (Layer::Flatten, LayerCache::Flatten(dims)) => {
                Ok((dy.clone().reshape(*dims)?, Vec::new()))
            }
            (Layer::Dense(d), LayerCache::Dense(c)) => d.backward(c, dy),
            _ => Err(mismatch()),
        }
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        fn se(s: &SeBlock) -> [&Vec<f64>; 4] {
            [
                &s.reduce.weight,
                &s.reduce.bias,
                &s.expand.weight,
                &s.expand.bias,
            ]
        }
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Pool(_) | Layer::Flatten => Vec::new(),
            Layer::Se(s) => se(s).to_vec(),
            Layer::MbConv(b) => {
                let mut v = vec![
                    &b.expand.weight,
                    &b.expand.bias,
                    &b.depthwise.weight,
                    &b.depthwise.bias,
                ];
                v.extend(se(&b.se));
                v.extend([&b.project.weight, &b.project.bias]);
                v
            }
            Layer::FusedMbConv(b) => {
                let mut v = vec![&b.fused.weight, &b.fused.bias];
                v.extend(se(&b.se));
                v.extend([&b.project.weight, &b.project.bias]);
                v
            }
            Layer::Dense(d) => vec![&d.weight, &d.bias],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        fn se(s: &mut SeBlock) -> [&mut Vec<f64>; 4] {
            [
                &mut s.reduce.weight,
                &mut s.reduce.bias,
                &mut s.expand.weight,
                &mut s.expand.bias,
            ]
        }
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Pool(_) | Layer::Flatten => Vec::new(),
            Layer::Se(s) => se(s).into_iter().collect(),
            Layer::MbConv(b) => {
                let mut v = vec![
                    &mut b.expand.weight,
                    &mut b.expand.bias,
                    &mut b.depthwise.weight,
                    &mut b.depthwise.bias,
                ];
                v.extend(se(&mut b.se));
                v.extend([&mut b.project.weight, &mut b.project.bias]);
                v
            }
            Layer::FusedMbConv(b) => {
                let mut v = vec![&mut b.fused.weight, &mut b.fused.bias];
                v.extend(se(&mut b.se));
                v.extend([&mut b.project.weight, &mut b.project.bias]);
                v
            }
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
        }
    }

    /// Fan-in of each parameter tensor (0 for biases), for initialization.
    pub(crate) fn param_fan_ins(&self) -> Vec<usize> {
        let se = |s: &SeBlock| [s.reduce.inputs, 0, s.expand.inputs, 0];
        match self {
            Layer::Conv(l) => vec![l.fan_in(), 0],
            Layer::Pool(_) | Layer::Flatten => Vec::new(),
            Layer::Se(s) => se(s).to_vec(),
            Layer::MbConv(b) => {
                let mut v = vec![b.expand.fan_in(), 0, b.depthwise.fan_in(), 0];
                v.extend(se(&b.se));
                v.extend([b.project.fan_in(), 0]);
                v
            }
            Layer::FusedMbConv(b) => {
                let mut v = vec![b.fused.fan_in(), 0];
                v.extend(se(&b.se));
                v.extend([b.project.fan_in(), 0]);
                v
            }
            Layer::Dense(d) => vec![d.inputs, 0],
        }
    }
}
