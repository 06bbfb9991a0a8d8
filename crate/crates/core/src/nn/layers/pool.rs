use crate::error::{Error, Result};
use crate::nn::Tensor4;

/// Max pooling with square window `window` and step `stride`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    pub input_dims: [usize; 4],
    /// Flat input index of the winning element for every output element.
    pub argmax: Vec<usize>,
}

/// `floor((u - r) / h) + 1`, or `None` when the window does not fit.
pub fn pooled_len(u: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || u < window {
        None
    } else {
        Some((u - window) / stride + 1)
    }
}

impl PoolSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::InvalidParameter(
                "pool window and stride must be >= 1".into(),
            ));
        }
        Ok(Self { window, stride })
    }

    pub fn output_dims(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        match (
            pooled_len(h, self.window, self.stride),
            pooled_len(w, self.window, self.stride),
        ) {
            (Some(oh), Some(ow)) => Ok((c, oh, ow)),
            _ => Err(Error::ShapeMismatch(format!(
                "pool window {} exceeds input {h}x{w}",
                self.window
            ))),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, PoolCache)> {
        let (c, oh, ow) = self.output_dims(x.sample_dims())?;
        let (h, w) = (x.rows(), x.cols());
        let mut out = Tensor4::zeros([x.batch(), c, oh, ow]);
        let mut argmax = Vec::with_capacity(out.data().len());
        for n in 0..x.batch() {
            for ch in 0..c {
                let base = x.index(n, ch, 0, 0);
                let plane = x.plane(n, ch);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let (mut best, mut best_i) = (f64::NEG_INFINITY, 0);
                        for dy in 0..self.window {
                            for dx in 0..self.window {
                                let i = (oy * self.stride + dy) * w + ox * self.stride + dx;
                                if plane[i] > best {
                                    best = plane[i];
                                    best_i = i;
                                }
                            }
                        }
                        let o = out.index(n, ch, oy, ox);
                        out.data_mut()[o] = best;
                        argmax.push(base + best_i);
                    }
                }
                debug_assert!(h >= self.window);
            }
        }
        Ok((
            out,
            PoolCache {
                input_dims: x.dims(),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &PoolCache, dy: &Tensor4) -> Result<Tensor4> {
        if dy.data().len() != cache.argmax.len() {
            return Err(Error::ShapeMismatch(
                "pool upstream gradient does not match output".into(),
            ));
        }
        let mut dx = Tensor4::zeros(cache.input_dims);
        for (&i, &g) in cache.argmax.iter().zip(dy.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }
}
