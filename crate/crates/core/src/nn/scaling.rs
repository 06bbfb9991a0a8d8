use super::layers::Activation;
use super::net::BlockSpec;
use crate::error::{Error, Result};
use crate::imagecore::round_half_up;

/// Compound scaling of depth, width and input resolution by powers of
/// fixed constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    /// Blocks per stage of the base model.
    pub base_depth: usize,
    /// Stem channels of the base model.
    pub base_width: usize,
    /// Input side length of the base model.
    pub base_resolution: usize,
}

impl Default for ScalingConfig {
    /// A desk-sized base model: one block per stage, 8 stem channels, 32 px.
    fn default() -> Self {
        Self {
            alpha: 1.2,
            beta: 1.1,
            gamma: 1.15,
            phi: 0.0,
            base_depth: 1,
            base_width: 8,
            base_resolution: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScaledDims {
    pub depth: usize,
    pub width: usize,
    pub resolution: usize,
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.beta > 1.0 && self.gamma > 1.0) {
            return Err(Error::InvalidParameter(
                "scaling constants must exceed 1".into(),
            ));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scaling coefficient {} must be >= 0",
                self.phi
            )));
        }
        if self.base_depth == 0 || self.base_width == 0 || self.base_resolution == 0 {
            return Err(Error::InvalidParameter(
                "base depth, width and resolution must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `(round(a^phi d0), round(b^phi w0), round(g^phi r0))`, each at least 1.
pub fn compound_scale(cfg: &ScalingConfig) -> ScaledDims {
    let scale =
        |c: f64, base: usize| (round_half_up(c.powf(cfg.phi) * base as f64) as usize).max(1);
    ScaledDims {
        depth: scale(cfg.alpha, cfg.base_depth),
        width: scale(cfg.beta, cfg.base_width),
        resolution: scale(cfg.gamma, cfg.base_resolution),
    }
}

/// Hidden units of the dense layer inserted after flattening.
pub const HEAD_UNITS: usize = 256;

/// Stem conv, Fused-MBConv stage, pool, MBConv stage, 1x1 conv, pool,
/// flatten, 256-unit dense, class head.
pub fn standard_architecture(dims: &ScaledDims, classes: usize) -> Vec<BlockSpec> {
    let w = dims.width;
    let mut blocks = vec![BlockSpec::conv(w, 3, 2, Activation::Relu)];
    for _ in 0..dims.depth {
        blocks.push(BlockSpec::fused_mbconv(w, 2, 4, true));
    }
    blocks.push(BlockSpec::pool(2, 2));
    blocks.push(BlockSpec::mbconv(2 * w, 4, 4, false));
    for _ in 1..dims.depth {
        blocks.push(BlockSpec::mbconv(2 * w, 4, 4, true));
    }
    blocks.push(BlockSpec::conv(4 * w, 1, 1, Activation::Relu));
    blocks.push(BlockSpec::pool(2, 2));
    blocks.push(BlockSpec::flatten());
    blocks.push(BlockSpec::dense(HEAD_UNITS, Activation::Relu));
    blocks.push(BlockSpec::dense(classes, Activation::Identity));
    blocks
}
