use super::Activation;
use crate::error::{Error, Result};
use crate::nn::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    Valid,
    /// Output size `ceil(u / stride)`, padding split with the extra row/col at the end.
    Same,
}

/// 2-D cross-correlation with bias and a trailing activation. `groups ==
/// in_channels == out_channels` gives a depthwise convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: Padding,
    pub groups: usize,
    pub activation: Activation,
    /// (out, in / groups, kh, kw)
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvCache {
    pub input: Tensor4,
    pub pre: Tensor4,
    pub output: Tensor4,
}

/// Output length along one axis and the leading pad.
pub(crate) fn conv_axis(
    len: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if len < k {
                None
            } else {
                Some(((len - k) / stride + 1, 0))
            }
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(len);
            Some((out, total / 2))
        }
    }
}

impl ConvLayer {
    /// Zero-initialized layer; weights are filled by the caller or initializer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
        groups: usize,
        activation: Activation,
    ) -> Result<Self> {
        if kernel.0 == 0 || kernel.1 == 0 || stride == 0 || groups == 0 {
            return Err(Error::InvalidParameter(
                "kernel, stride and groups must be >= 1".into(),
            ));
        }
        if !in_channels.is_multiple_of(groups) || !out_channels.is_multiple_of(groups) {
            return Err(Error::InvalidParameter(format!(
                "groups {groups} must divide channels {in_channels}->{out_channels}"
            )));
        }
        let wlen = out_channels * (in_channels / groups) * kernel.0 * kernel.1;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
            activation,
            weight: vec![0.0; wlen],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn fan_in(&self) -> usize {
        (self.in_channels / self.groups) * self.kernel.0 * self.kernel.1
    }

    pub fn output_dims(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        if c != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let oh = conv_axis(h, self.kernel.0, self.stride, self.padding);
        let ow = conv_axis(w, self.kernel.1, self.stride, self.padding);
        match (oh, ow) {
            (Some((oh, _)), Some((ow, _))) => Ok((self.out_channels, oh, ow)),
            _ => Err(Error::ShapeMismatch(format!(
                "kernel {:?} larger than input {h}x{w}",
                self.kernel
            ))),
        }
    }

    fn geometry(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let (oh, pt) = conv_axis(h, self.kernel.0, self.stride, self.padding).expect("checked");
        let (ow, pl) = conv_axis(w, self.kernel.1, self.stride, self.padding).expect("checked");
        (oh, ow, pt, pl)
    }

    /// Output index range along one axis for which `o*stride + k - pad` lies in `[0, len)`.
    fn valid_range(out: usize, len: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
        let lo = if pad > k {
            (pad - k).div_ceil(stride)
        } else {
            0
        };
        // o*stride + k - pad <= len - 1
        let hi = if len + pad > k {
            ((len - 1 + pad - k) / stride + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Convolution without bias or activation.
    fn correlate(&self, x: &Tensor4) -> Result<Tensor4> {
        let (oc, oh, ow) = self.output_dims(x.sample_dims())?;
        let (h, w) = (x.rows(), x.cols());
        let (_, _, pt, pl) = self.geometry(h, w);
        let (kh, kw) = self.kernel;
        let icpg = self.in_channels / self.groups;
        let ocpg = self.out_channels / self.groups;
        let s = self.stride;
        let mut out = Tensor4::zeros([x.batch(), oc, oh, ow]);
        for n in 0..x.batch() {
            for o in 0..oc {
                let g = o / ocpg;
                let mut acc = vec![0.0; oh * ow];
                for il in 0..icpg {
                    let plane = x.plane(n, g * icpg + il);
                    for ky in 0..kh {
                        let (oy0, oy1) = Self::valid_range(oh, h, ky, pt, s);
                        for kx in 0..kw {
                            let wv = self.weight[((o * icpg + il) * kh + ky) * kw + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            let (ox0, ox1) = Self::valid_range(ow, w, kx, pl, s);
                            for oy in oy0..oy1 {
                                let iy = oy * s + ky - pt;
                                let row = &plane[iy * w..(iy + 1) * w];
                                let dst = &mut acc[oy * ow..(oy + 1) * ow];
                                for ox in ox0..ox1 {
                                    dst[ox] += wv * row[ox * s + kx - pl];
                                }
                            }
                        }
                    }
                }
                out.plane_mut(n, o).copy_from_slice(&acc);
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, ConvCache)> {
        let mut pre = self.correlate(x)?;
        let plane = pre.plane_len();
        for (i, v) in pre.data_mut().iter_mut().enumerate() {
            *v += self.bias[(i / plane) % self.out_channels];
        }
        let output = pre.map(|z| self.activation.apply(z));
        Ok((
            output.clone(),
            ConvCache {
                input: x.clone(),
                pre,
                output,
            },
        ))
    }

    /// Returns (d input, [d weight, d bias]).
    pub fn backward(&self, cache: &ConvCache, dy: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        if dy.dims() != cache.output.dims() {
            return Err(Error::ShapeMismatch(format!(
                "conv upstream gradient {:?} vs output {:?}",
                dy.dims(),
                cache.output.dims()
            )));
        }
        let x = &cache.input;
        let mut dz = dy.clone();
        if self.activation != Activation::Identity {
            for ((d, &z), &y) in dz
                .data_mut()
                .iter_mut()
                .zip(cache.pre.data())
                .zip(cache.output.data())
            {
                *d *= self.activation.derivative(z, y);
            }
        }
        let (h, w) = (x.rows(), x.cols());
        let (oh, ow, pt, pl) = self.geometry(h, w);
        let (kh, kw) = self.kernel;
        let icpg = self.in_channels / self.groups;
        let ocpg = self.out_channels / self.groups;
        let s = self.stride;
        let mut dx = Tensor4::zeros(x.dims());
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.bias.len()];
        for n in 0..x.batch() {
            for (o, db_o) in db.iter_mut().enumerate() {
                let g = o / ocpg;
                let dplane = dz.plane(n, o);
                *db_o += dplane.iter().sum::<f64>();
                for il in 0..icpg {
                    let ic = g * icpg + il;
                    for ky in 0..kh {
                        let (oy0, oy1) = Self::valid_range(oh, h, ky, pt, s);
                        for kx in 0..kw {
                            let widx = ((o * icpg + il) * kh + ky) * kw + kx;
                            let wv = self.weight[widx];
                            let (ox0, ox1) = Self::valid_range(ow, w, kx, pl, s);
                            let mut gw = 0.0;
                            {
                                let plane = x.plane(n, ic);
                                for oy in oy0..oy1 {
                                    let iy = oy * s + ky - pt;
                                    let row = &plane[iy * w..(iy + 1) * w];
                                    let drow = &dplane[oy * ow..(oy + 1) * ow];
                                    for ox in ox0..ox1 {
                                        gw += drow[ox] * row[ox * s + kx - pl];
                                    }
                                }
                            }
                            dw[widx] += gw;
                            if wv != 0.0 {
                                let dxp = dx.plane_mut(n, ic);
                                for oy in oy0..oy1 {
                                    let iy = oy * s + ky - pt;
                                    let drow = &dplane[oy * ow..(oy + 1) * ow];
                                    let dst = &mut dxp[iy * w..(iy + 1) * w];
                                    for ox in ox0..ox1 {
                                        dst[ox * s + kx - pl] += wv * drow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((dx, vec![dw, db]))
    }
}

/// Straight nested-loop convolution used as a reference in tests.
#[cfg(test)]
pub(crate) fn conv_reference(layer: &ConvLayer, x: &Tensor4) -> Tensor4 {
    let (oc, oh, ow) = layer.output_dims(x.sample_dims()).unwrap();
    let (oh2, pt) = conv_axis(x.rows(), layer.kernel.0, layer.stride, layer.padding).unwrap();
    let (_, pl) = conv_axis(x.cols(), layer.kernel.1, layer.stride, layer.padding).unwrap();
    assert_eq!(oh, oh2);
    let icpg = layer.in_channels / layer.groups;
    let ocpg = layer.out_channels / layer.groups;
    let mut out = Tensor4::zeros([x.batch(), oc, oh, ow]);
    for n in 0..x.batch() {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[o];
                    for il in 0..icpg {
                        let ic = (o / ocpg) * icpg + il;
                        for ky in 0..layer.kernel.0 {
                            for kx in 0..layer.kernel.1 {
                                let iy = (oy * layer.stride + ky) as isize - pt as isize;
                                let ix = (ox * layer.stride + kx) as isize - pl as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= x.rows() as isize
                                    || ix >= x.cols() as isize
                                {
                                    continue;
                                }
                                let wv = layer.weight
                                    [((o * icpg + il) * layer.kernel.0 + ky) * layer.kernel.1 + kx];
                                acc += wv * x.at(n, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    let i = out.index(n, o, oy, ox);
                    out.data_mut()[i] = layer.activation.apply(acc);
                }
            }
        }
    }
    out
}
