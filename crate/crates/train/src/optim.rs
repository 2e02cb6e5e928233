//! Adaptive-moment optimizer with decoupled weight decay, global-norm
//! gradient clipping, and a cosine learning-rate schedule.

use std::collections::BTreeMap;

use eqt_model::Params;
use eqt_tensor::Tensor;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Per-parameter first/second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
}

/// What `apply` did with the batch's gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Step taken; reports the pre-clip global norm.
    Applied { pre_clip_norm: f64 },
    /// Non-finite gradients: parameters and moments untouched.
    SkippedNonFinite,
}

impl AdamW {
    pub fn new(params: &Params<f32>) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in params.iter() {
            m.insert(name.clone(), vec![0.0; t.numel()]);
            v.insert(name.clone(), vec![0.0; t.numel()]);
        }
        AdamW { step: 0, m, v }
    }

    /// Clip to `clip_norm`, update moments, and take one decoupled-decay
    /// step at learning rate `lr`. Gradients map parameter names to
    /// same-shaped tensors; missing entries are treated as zero.
    pub fn apply(
        &mut self,
        params: &mut Params<f32>,
        grads: &BTreeMap<String, Tensor<f32>>,
        lr: f64,
        weight_decay: f64,
        clip_norm: f64,
    ) -> StepOutcome {
        assert!(clip_norm > 0.0, "clip_norm must be positive");
        let mut sq = 0.0f64;
        let mut finite = true;
        for g in grads.values() {
            for &x in g.data() {
                let x = x as f64;
                finite &= x.is_finite();
                sq += x * x;
            }
        }
        if !finite || !sq.is_finite() {
            return StepOutcome::SkippedNonFinite;
        }
        let pre_clip_norm = sq.sqrt();
        let scale = clip_scale(pre_clip_norm, clip_norm);

        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);

        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let p = params.get(&name);
            let n = p.numel();
            let m = self.m.get_mut(&name).expect("moment for every parameter");
            let v = self.v.get_mut(&name).expect("moment for every parameter");
            assert_eq!(m.len(), n, "moment shape drifted for {name}");
            let zeros;
            let g: &[f32] = match grads.get(&name) {
                Some(t) => {
                    assert_eq!(t.shape(), p.shape(), "gradient shape mismatch for {name}");
                    t.data()
                }
                None => {
                    zeros = vec![0.0f32; n];
                    &zeros
                }
            };
            let mut out = Vec::with_capacity(n);
            let pd = p.data();
            for i in 0..n {
                let gi = g[i] as f64 * scale;
                let mi = BETA1 * m[i] as f64 + (1.0 - BETA1) * gi;
                let vi = BETA2 * v[i] as f64 + (1.0 - BETA2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / bc1) / ((vi / bc2).sqrt() + EPS) + weight_decay * pd[i] as f64;
                out.push((pd[i] as f64 - lr * update) as f32);
            }
            let shape = p.shape().to_vec();
            params.rebind(&name, Tensor::leaf(&shape, out).expect("same shape"));
        }
        StepOutcome::Applied { pre_clip_norm }
    }
}

/// Multiplier that brings a gradient of global norm `norm` within
/// `clip_norm`; 1 when already inside the ball.
pub fn clip_scale(norm: f64, clip_norm: f64) -> f64 {
    if norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

/// Cosine annealing from `base` at step 0 to exactly 0 at `total` steps.
pub fn cosine_lr(base: f64, step: u64, total: u64) -> f64 {
    assert!(total > 0, "schedule needs at least one step");
    let t = step.min(total) as f64 / total as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Global L2 norm across a gradient map (diagnostics).
pub fn global_norm(grads: &BTreeMap<String, Tensor<f32>>) -> f64 {
    grads
        .values()
        .flat_map(|g| g.data().iter().map(|&x| (x as f64).powi(2)))
        .sum::<f64>()
        .sqrt()
}
