use super::{Activation, DenseCache, DenseLayer};
use crate::error::{Error, Result};
use crate::nn::Tensor4;

/// Squeeze-and-excitation: global average pool, bottleneck dense + ReLU,
/// expand dense + sigmoid, channelwise rescale of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct SeBlock {
    pub channels: usize,
    pub reduce: DenseLayer,
    pub expand: DenseLayer,
}

#[derive(Clone, Debug)]
pub struct SeCache {
    pub input: Tensor4,
    pub reduce: DenseCache,
    pub expand: DenseCache,
    /// (batch, channels, 1, 1) gate values.
    pub gate: Tensor4,
}

impl SeBlock {
    /// Bottleneck width is `ceil(channels / reduction)`, at least 1.
    pub fn new(channels: usize, reduction: usize) -> Result<Self> {
        if channels == 0 || reduction == 0 {
            return Err(Error::InvalidParameter(
                "SE channels and reduction must be >= 1".into(),
            ));
        }
        let hidden = channels.div_ceil(reduction).max(1);
        Ok(Self {
            channels,
            reduce: DenseLayer::new(channels, hidden, Activation::Relu)?,
            expand: DenseLayer::new(hidden, channels, Activation::Sigmoid)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.reduce.outputs
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, SeCache)> {
        if x.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "SE expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        let (n, c) = (x.batch(), x.channels());
        let area = x.plane_len() as f64;
        let mut squeezed = Tensor4::zeros([n, c, 1, 1]);
        for b in 0..n {
            for ch in 0..c {
                squeezed.data_mut()[b * c + ch] = x.plane(b, ch).iter().sum::<f64>() / area;
            }
        }
        let (hidden, reduce) = self.reduce.forward(&squeezed)?;
        let (gate, expand) = self.expand.forward(&hidden)?;
        let mut y = x.clone();
        for b in 0..n {
            for ch in 0..c {
                let g = gate.data()[b * c + ch];
                y.plane_mut(b, ch).iter_mut().for_each(|v| *v *= g);
            }
        }
        Ok((
            y,
            SeCache {
                input: x.clone(),
                reduce,
                expand,
                gate,
            },
        ))
    }

    /// Returns (d input, [reduce.w, reduce.b, expand.w, expand.b]).
    pub fn backward(&self, cache: &SeCache, dy: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        let x = &cache.input;
        if dy.dims() != x.dims() {
            return Err(Error::ShapeMismatch(
                "SE upstream gradient does not match input".into(),
            ));
        }
        let (n, c) = (x.batch(), x.channels());
        let area = x.plane_len() as f64;
        let mut dx = dy.clone();
        let mut dgate = Tensor4::zeros([n, c, 1, 1]);
        for b in 0..n {
            for ch in 0..c {
                let g = cache.gate.data()[b * c + ch];
                let dyp = dy.plane(b, ch);
                dgate.data_mut()[b * c + ch] =
                    dyp.iter().zip(x.plane(b, ch)).map(|(d, v)| d * v).sum();
                dx.plane_mut(b, ch).iter_mut().for_each(|v| *v *= g);
            }
        }
        let (dhidden, mut g_expand) = self.expand.backward(&cache.expand, &dgate)?;
        let (dsqueezed, mut grads) = self.reduce.backward(&cache.reduce, &dhidden)?;
        for b in 0..n {
            for ch in 0..c {
                let ds = dsqueezed.data()[b * c + ch] / area;
                dx.plane_mut(b, ch).iter_mut().for_each(|v| *v += ds);
            }
        }
        grads.append(&mut g_expand);
        Ok((dx, grads))
    }
}

/// The five stages written out with plain loops, for tests.
#[cfg(test)]
pub(crate) fn se_reference(se: &SeBlock, x: &Tensor4) -> Tensor4 {
    let (n, c, h) = (x.batch(), x.channels(), se.hidden());
    let mut y = x.clone();
    for b in 0..n {
        let pooled: Vec<f64> = (0..c)
            .map(|ch| x.plane(b, ch).iter().sum::<f64>() / x.plane_len() as f64)
            .collect();
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                (se.reduce.bias[j]
                    + (0..c)
                        .map(|i| se.reduce.weight[j * c + i] * pooled[i])
                        .sum::<f64>())
                .max(0.0)
            })
            .collect();
        for ch in 0..c {
            let z = se.expand.bias[ch]
                + (0..h)
                    .map(|j| se.expand.weight[ch * h + j] * hidden[j])
                    .sum::<f64>();
            let g = 1.0 / (1.0 + (-z).exp());
            y.plane_mut(b, ch).iter_mut().for_each(|v| *v *= g);
        }
    }
    y
}
