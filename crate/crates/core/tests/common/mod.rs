//! Helpers shared by the integration test targets.
#![allow(dead_code, clippy::needless_range_loop)]

use kneeaug::nn::{Layer, LayerCache, Tensor4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn randomize_params(rng: &mut ChaCha8Rng, layer: &mut Layer, scale: f64) {
    for p in layer.params_mut() {
        p.iter_mut()
            .for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradStats {
    pub checked: usize,
    pub skipped: usize,
    pub failed: usize,
    pub worst: f64,
}

impl GradStats {
    pub fn merge(&mut self, o: GradStats) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.failed += o.failed;
        self.worst = self.worst.max(o.worst);
    }

    fn record(&mut self, a: f64, n: f64) {
        let e = rel_err(a, n);
        self.checked += 1;
        self.worst = self.worst.max(e);
        if e > FD_TOL {
            self.failed += 1;
        }
    }
}

fn objective(layer: &Layer, x: &Tensor4, r: &Tensor4) -> (f64, Vec<u64>) {
    let (y, cache): (Tensor4, LayerCache) = layer.forward(x).unwrap();
    let v = y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
    (v, cache.branch_pattern(layer))
}

/// Central-difference check of `sum(r * layer(x))` against the layer's
/// backward pass, for every parameter and every input element. Steps that
/// change a ReLU mask or pooling winner are skipped.
pub fn check_layer(layer: &Layer, x: &Tensor4, rng: &mut ChaCha8Rng) -> GradStats {
    let (y, cache) = layer.forward(x).unwrap();
    let r = random_tensor(rng, y.dims());
    let base = cache.branch_pattern(layer);
    let (dx, grads) = layer.backward(&cache, &r).unwrap();
    let mut stats = GradStats::default();
    let h = FD_STEP;
    for (t, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let mut plus = layer.clone();
            plus.params_mut()[t][j] += h;
            let mut minus = layer.clone();
            minus.params_mut()[t][j] -= h;
            let (fp, bp) = objective(&plus, x, &r);
            let (fm, bm) = objective(&minus, x, &r);
            if bp != base || bm != base {
                stats.skipped += 1;
                continue;
            }
            stats.record(g[j], (fp - fm) / (2.0 * h));
        }
    }
    for j in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[j] += h;
        let mut xm = x.clone();
        xm.data_mut()[j] -= h;
        let (fp, bp) = objective(layer, &xp, &r);
        let (fm, bm) = objective(layer, &xm, &r);
        if bp != base || bm != base {
            stats.skipped += 1;
            continue;
        }
        stats.record(dx.data()[j], (fp - fm) / (2.0 * h));
    }
    stats
}
