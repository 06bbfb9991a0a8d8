use super::{Activation, ConvCache, ConvLayer, Padding, SeBlock, SeCache};
use crate::error::{Error, Result};
use crate::nn::Tensor4;

/// Inverted residual block: 1x1 expand conv, depthwise conv, SE, 1x1
/// projection conv, each conv followed by the activation; optional skip.
#[derive(Clone, Debug, PartialEq)]
pub struct MbConvBlock {
    pub expand: ConvLayer,
    pub depthwise: ConvLayer,
    pub se: SeBlock,
    pub project: ConvLayer,
    pub skip: bool,
}

#[derive(Clone, Debug)]
pub struct MbConvCache {
    pub expand: ConvCache,
    pub depthwise: ConvCache,
    pub se: SeCache,
    pub project: ConvCache,
}

/// Fused variant: one 3x3 conv replaces expand + depthwise.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedMbConvBlock {
    pub fused: ConvLayer,
    pub se: SeBlock,
    pub project: ConvLayer,
    pub skip: bool,
}

#[derive(Clone, Debug)]
pub struct FusedMbConvCache {
    pub fused: ConvCache,
    pub se: SeCache,
    pub project: ConvCache,
}

fn check_skip(skip: bool, in_ch: usize, out_ch: usize, stride: usize) -> Result<()> {
    if skip && (in_ch != out_ch || stride != 1) {
        return Err(Error::InvalidParameter(format!(
            "skip connection needs matching shapes ({in_ch}->{out_ch}, stride {stride})"
        )));
    }
    Ok(())
}

fn add_skip(mut y: Tensor4, x: &Tensor4, skip: bool) -> Tensor4 {
    if skip {
        y.add_assign(x);
    }
    y
}

impl MbConvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        expansion: usize,
        kernel: usize,
        stride: usize,
        se_reduction: usize,
        skip: bool,
        activation: Activation,
    ) -> Result<Self> {
        check_skip(skip, in_ch, out_ch, stride)?;
        let mid = in_ch * expansion.max(1);
        Ok(Self {
            expand: ConvLayer::new(in_ch, mid, (1, 1), 1, Padding::Valid, 1, activation)?,
            depthwise: ConvLayer::new(
                mid,
                mid,
                (kernel, kernel),
                stride,
                Padding::Same,
                mid,
                activation,
            )?,
            se: SeBlock::new(mid, se_reduction)?,
            project: ConvLayer::new(mid, out_ch, (1, 1), 1, Padding::Valid, 1, activation)?,
            skip,
        })
    }

    pub fn output_dims(&self, dims: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let d = self.expand.output_dims(dims)?;
        let d = self.depthwise.output_dims(d)?;
        self.project.output_dims(d)
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, MbConvCache)> {
        let (a, expand) = self.expand.forward(x)?;
        let (b, depthwise) = self.depthwise.forward(&a)?;
        let (c, se) = self.se.forward(&b)?;
        let (d, project) = self.project.forward(&c)?;
        if self.skip && d.dims() != x.dims() {
            return Err(Error::ShapeMismatch(
                "MBConv skip with mismatched shapes".into(),
            ));
        }
        Ok((
            add_skip(d, x, self.skip),
            MbConvCache {
                expand,
                depthwise,
                se,
                project,
            },
        ))
    }

    pub fn backward(&self, cache: &MbConvCache, dy: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        let (dc, g_project) = self.project.backward(&cache.project, dy)?;
        let (db, g_se) = self.se.backward(&cache.se, &dc)?;
        let (da, g_dw) = self.depthwise.backward(&cache.depthwise, &db)?;
        let (mut dx, mut grads) = self.expand.backward(&cache.expand, &da)?;
        if self.skip {
            dx.add_assign(dy);
        }
        grads.extend(g_dw);
        grads.extend(g_se);
        grads.extend(g_project);
        Ok((dx, grads))
    }
}

impl FusedMbConvBlock {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        expansion: usize,
        stride: usize,
        se_reduction: usize,
        skip: bool,
        activation: Activation,
    ) -> Result<Self> {
        check_skip(skip, in_ch, out_ch, stride)?;
        let mid = in_ch * expansion.max(1);
        Ok(Self {
            fused: ConvLayer::new(in_ch, mid, (3, 3), stride, Padding::Same, 1, activation)?,
            se: SeBlock::new(mid, se_reduction)?,
            project: ConvLayer::new(mid, out_ch, (1, 1), 1, Padding::Valid, 1, activation)?,
            skip,
        })
    }

    pub fn output_dims(&self, dims: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let d = self.fused.output_dims(dims)?;
        self.project.output_dims(d)
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, FusedMbConvCache)> {
        let (a, fused) = self.fused.forward(x)?;
        let (b, se) = self.se.forward(&a)?;
        let (c, project) = self.project.forward(&b)?;
        if self.skip && c.dims() != x.dims() {
            return Err(Error::ShapeMismatch(
                "Fused-MBConv skip with mismatched shapes".into(),
            ));
        }
        Ok((
            add_skip(c, x, self.skip),
            FusedMbConvCache { fused, se, project },
        ))
    }

    pub fn backward(
        &self,
        cache: &FusedMbConvCache,
        dy: &Tensor4,
    ) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        let (db, g_project) = self.project.backward(&cache.project, dy)?;
        let (da, g_se) = self.se.backward(&cache.se, &db)?;
        let (mut dx, mut grads) = self.fused.backward(&cache.fused, &da)?;
        if self.skip {
            dx.add_assign(dy);
        }
        grads.extend(g_se);
        grads.extend(g_project);
        Ok((dx, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::conv::conv_reference;
    use crate::nn::layers::se::se_reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randomize(rng: &mut ChaCha8Rng, params: Vec<&mut Vec<f64>>) {
        for p in params {
            p.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
        }
    }

    fn random_input(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
        let n = dims.iter().product();
        Tensor4::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn close(a: &Tensor4, b: &Tensor4) {
        assert_eq!(a.dims(), b.dims());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    fn open_gate(se: &mut SeBlock) {
        se.expand.bias.fill(800.0);
    }

    #[test]
    fn identity_kernels_pass_non_negative_input() {
        let x = Tensor4::from_vec([1, 2, 4, 4], (0..32).map(|i| i as f64 / 8.0).collect()).unwrap();
        let mut b = MbConvBlock::new(2, 2, 1, 3, 1, 1, false, Activation::Relu).unwrap();
        b.expand.weight.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        b.depthwise.weight.fill(0.0);
        b.depthwise.weight[4] = 1.0;
        b.depthwise.weight[13] = 1.0;
        b.project.weight.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        open_gate(&mut b.se);
        close(&b.forward(&x).unwrap().0, &x);

        let mut f = FusedMbConvBlock::new(2, 2, 1, 1, 1, false, Activation::Relu).unwrap();
        f.fused.weight.fill(0.0);
        f.fused.weight[4] = 1.0; // out 0, in 0, center
        f.fused.weight[3 * 9 + 4] = 1.0; // out 1, in 1, center
        f.project.weight.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        open_gate(&mut f.se);
        close(&f.forward(&x).unwrap().0, &x);
    }

    #[test]
    fn zeroed_projection_with_skip_is_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_input(&mut rng, [2, 3, 4, 4]);
        let mut b = MbConvBlock::new(3, 3, 2, 3, 1, 2, true, Activation::Identity).unwrap();
        randomize(
            &mut rng,
            vec![&mut b.expand.weight, &mut b.depthwise.weight],
        );
        close(&b.forward(&x).unwrap().0, &x);
        let mut f = FusedMbConvBlock::new(3, 3, 2, 1, 2, true, Activation::Identity).unwrap();
        randomize(&mut rng, vec![&mut f.fused.weight]);
        close(&f.forward(&x).unwrap().0, &x);
    }

    #[test]
    fn mbconv_equals_stage_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for skip in [false, true] {
            let mut b = MbConvBlock::new(2, 2, 3, 3, 1, 2, skip, Activation::Relu).unwrap();
            randomize(
                &mut rng,
                vec![
                    &mut b.expand.weight,
                    &mut b.expand.bias,
                    &mut b.depthwise.weight,
                ],
            );
            randomize(
                &mut rng,
                vec![
                    &mut b.se.reduce.weight,
                    &mut b.se.expand.weight,
                    &mut b.project.weight,
                ],
            );
            let x = random_input(&mut rng, [1, 2, 4, 4]);
            let stages = conv_reference(&b.expand, &x);
            let stages = conv_reference(&b.depthwise, &stages);
            let stages = se_reference(&b.se, &stages);
            let mut expected = conv_reference(&b.project, &stages);
            if skip {
                expected.add_assign(&x);
            }
            close(&b.forward(&x).unwrap().0, &expected);
        }
    }

    #[test]
    fn fused_equals_stage_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (skip, stride) in [(false, 2), (true, 1)] {
            let mut f = FusedMbConvBlock::new(2, 2, 2, stride, 4, skip, Activation::Relu).unwrap();
            randomize(
                &mut rng,
                vec![
                    &mut f.fused.weight,
                    &mut f.fused.bias,
                    &mut f.se.reduce.weight,
                ],
            );
            randomize(
                &mut rng,
                vec![
                    &mut f.se.expand.weight,
                    &mut f.project.weight,
                    &mut f.project.bias,
                ],
            );
            let x = random_input(&mut rng, [1, 2, 4, 4]);
            let stages = se_reference(&f.se, &conv_reference(&f.fused, &x));
            let mut expected = conv_reference(&f.project, &stages);
            if skip {
                expected.add_assign(&x);
            }
            close(&f.forward(&x).unwrap().0, &expected);
        }
    }

    #[test]
    fn skip_requires_matching_shapes() {
        assert!(MbConvBlock::new(2, 4, 2, 3, 1, 2, true, Activation::Relu).is_err());
        assert!(FusedMbConvBlock::new(2, 2, 2, 2, 2, true, Activation::Relu).is_err());
        assert!(MbConvBlock::new(2, 4, 2, 3, 1, 2, false, Activation::Relu).is_ok());
    }
}
