use super::net::{Gradients, LayerStack};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one vector per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &LayerStack) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn update(
        &mut self,
        cfg: &AdamConfig,
        net: &mut LayerStack,
        grads: &Gradients,
    ) -> Result<()> {
        let params = net.params_mut();
        if params.len() != grads.0.len()
            || params.len() != self.m.len()
            || params.iter().zip(&grads.0).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::ShapeMismatch(
                "gradients do not match network parameters".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, BlockSpec};

    fn net() -> LayerStack {
        LayerStack::from_blocks(
            (1, 2, 2),
            &[
                BlockSpec::flatten(),
                BlockSpec::dense(3, Activation::Identity),
            ],
            4,
        )
        .unwrap()
    }

    fn grads_like(net: &LayerStack, f: impl Fn(usize) -> f64) -> Gradients {
        let mut k = 0;
        Gradients(
            net.params()
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|_| {
                            k += 1;
                            f(k)
                        })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut n = net();
        let before = n.clone();
        let mut s = AdamState::new(&n);
        s.update(
            &AdamConfig::default(),
            &mut n,
            &grads_like(&before, |_| 0.0),
        )
        .unwrap();
        assert_eq!(n.params(), before.params());
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut n = net();
        let before = n.clone();
        let g = grads_like(&before, |k| (k as f64 - 7.5) * 0.3);
        let mut s = AdamState::new(&n);
        let cfg = AdamConfig::default();
        s.update(&cfg, &mut n, &g).unwrap();
        for ((a, b), gv) in n.params().iter().zip(before.params()).zip(&g.0) {
            for i in 0..a.len() {
                let expected = cfg.learning_rate * gv[i] / (gv[i].abs() + cfg.epsilon);
                assert!(((b[i] - a[i]) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_steps_differ_from_one_double_step() {
        let cfg = AdamConfig::default();
        let base = net();
        let g = grads_like(&base, |k| k as f64 * 0.1 - 0.4);
        let mut twice = base.clone();
        let mut s = AdamState::new(&twice);
        s.update(&cfg, &mut twice, &g).unwrap();
        s.update(&cfg, &mut twice, &g).unwrap();
        let mut once = base.clone();
        let mut doubled = g.clone();
        doubled.scale(2.0);
        AdamState::new(&once)
            .update(&cfg, &mut once, &doubled)
            .unwrap();
        assert_ne!(twice.params(), once.params());
    }

    #[test]
    fn misaligned_gradients() {
        let mut n = net();
        let mut s = AdamState::new(&n);
        assert!(s
            .update(&AdamConfig::default(), &mut n, &Gradients(vec![vec![0.0]]))
            .is_err());
    }
}
