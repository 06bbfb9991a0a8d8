use super::Activation;
use crate::error::{Error, Result};
use crate::nn::Tensor4;

/// Fully connected layer over `(batch, inputs, 1, 1)` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// (outputs, inputs)
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Tensor4,
    pub pre: Tensor4,
    pub output: Tensor4,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidParameter(
                "dense layer sizes must be >= 1".into(),
            ));
        }
        Ok(Self {
            inputs,
            outputs,
            activation,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, DenseCache)> {
        if x.sample_len() != self.inputs {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.sample_len()
            )));
        }
        let n = x.batch();
        let mut pre = Tensor4::zeros([n, self.outputs, 1, 1]);
        for b in 0..n {
            let xs = x.sample(b);
            for o in 0..self.outputs {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let z = self.bias[o] + row.iter().zip(xs).map(|(w, v)| w * v).sum::<f64>();
                pre.data_mut()[b * self.outputs + o] = z;
            }
        }
        let output = pre.map(|z| self.activation.apply(z));
        Ok((
            output.clone(),
            DenseCache {
                input: x.clone(),
                pre,
                output,
            },
        ))
    }

    /// Returns (d input, [d weight, d bias]); d input has the input's dims.
    pub fn backward(&self, cache: &DenseCache, dy: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        if dy.dims() != cache.output.dims() {
            return Err(Error::ShapeMismatch(
                "dense upstream gradient does not match output".into(),
            ));
        }
        let n = dy.batch();
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.outputs];
        let mut dx = Tensor4::zeros(cache.input.dims());
        for b in 0..n {
            let xs = cache.input.sample(b);
            for o in 0..self.outputs {
                let k = b * self.outputs + o;
                let dz = dy.data()[k]
                    * self
                        .activation
                        .derivative(cache.pre.data()[k], cache.output.data()[k]);
                if dz == 0.0 {
                    continue;
                }
                db[o] += dz;
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let grow = &mut dw[o * self.inputs..(o + 1) * self.inputs];
                for (g, v) in grow.iter_mut().zip(xs) {
                    *g += dz * v;
                }
                let dxs = &mut dx.data_mut()[b * self.inputs..(b + 1) * self.inputs];
                for (d, w) in dxs.iter_mut().zip(row) {
                    *d += dz * w;
                }
            }
        }
        Ok((dx, vec![dw, db]))
    }
}
