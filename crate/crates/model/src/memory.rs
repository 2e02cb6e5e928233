//! Episodic memory: prototype states updated by EMA, queried by cosine.

use eqt_tensor::ops::{add_const, div, exp, ln, matmul_nt, mul, reshape, scale, sqrt, sum_axis};
use eqt_tensor::{Element, Tensor};

use crate::rng::substream;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MemoryBuffer {
    /// Prototype states, [m, d].
    pub z: Tensor<f32>,
    pub tau: f64,
    pub ema_beta: f64,
    /// Update counts per prototype; sums to the number of update calls.
    pub usage: Vec<u64>,
}

impl MemoryBuffer {
    /// Unit-variance Gaussian prototypes scaled by 1/√d.
    pub fn init(m: usize, d: usize, tau: f64, ema_beta: f64, root_seed: u64) -> Self {
        assert!(m >= 1, "memory needs at least one prototype");
        let mut rng = substream(root_seed, "memory.init", 0, 0);
        let scale = 1.0 / (d as f64).sqrt();
        let data: Vec<f32> = (0..m * d)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (g * scale) as f32
            })
            .collect();
        MemoryBuffer {
            z: Tensor::from_vec(&[m, d], data).expect("sized buffer"),
            tau,
            ema_beta,
            usage: vec![0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: m ≥ 1
    }

    /// Relevance flags: 1 for the k highest cosine(h, z_i), ties to the
    /// lower index; k is clamped to the buffer size.
    pub fn retrieve(&self, h_row: &[f32], k: usize) -> Vec<bool> {
        let m = self.len();
        let k = k.clamp(1, m);
        let d = h_row.len();
        let hn = h_row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        let mut scored: Vec<(usize, f64)> = (0..m)
            .map(|i| {
                let zi = &self.z.data()[i * d..(i + 1) * d];
                let zn = zi.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                let dot: f64 = zi.iter().zip(h_row).map(|(&a, &b)| a as f64 * b as f64).sum();
                let cos = if hn == 0.0 || zn == 0.0 { 0.0 } else { dot / (hn * zn) };
                (i, cos)
            })
            .collect();
        // Stable by construction: sort on (−cos, index).
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut flags = vec![false; m];
        for &(i, _) in scored.iter().take(k) {
            flags[i] = true;
        }
        flags
    }

    /// EMA update of the nearest prototype by raw dot product.
    pub fn update(&mut self, h_star: &[f32]) {
        let (m, d) = (self.len(), self.z.shape()[1]);
        assert_eq!(h_star.len(), d, "memory update: width mismatch");
        let zd = self.z.data();
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for i in 0..m {
            let dot: f64 = zd[i * d..(i + 1) * d]
                .iter()
                .zip(h_star)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        let beta = self.ema_beta;
        let mut data = zd.to_vec();
        for j in 0..d {
            let old = data[best * d + j] as f64;
            data[best * d + j] = (beta * old + (1.0 - beta) * h_star[j] as f64) as f32;
        }
        self.z = Tensor::from_vec(&[m, d], data).expect("sized buffer");
        self.usage[best] += 1;
    }
}

/// −log Σ_i r_i·exp(cos(h, z_i)/τ) per row; rows with no relevant memory
/// contribute exactly 0. `relevance` is a constant 0/1 tensor [g, m].
pub fn energy_mem_rows<T: Element>(
    h_rows: &Tensor<T>,
    z: &Tensor<T>,
    relevance: &Tensor<T>,
    tau: f64,
) -> Tensor<T> {
    let g = h_rows.shape()[0];
    let m = z.shape()[0];
    assert_eq!(relevance.shape(), &[g, m], "relevance must be [g, m]");
    let dots = matmul_nt(h_rows, z); // [g, m]
    let h_norm = sqrt(&sum_axis(&mul(h_rows, h_rows), 1)); // [g, 1]
    let z_norm_row = {
        let zn = sqrt(&sum_axis(&mul(z, z), 1)); // [m, 1]
        reshape(&zn, &[1, m])
    };
    // The tiny offset keeps 0/0 at exactly 0 without disturbing real norms.
    let denom = add_const(&mul(&h_norm, &z_norm_row), T::from_f64(1e-30));
    let cos = div(&dots, &denom);
    let weighted = mul(&exp(&scale(&cos, T::from_f64(1.0 / tau))), relevance);
    let sums = sum_axis(&weighted, 1); // [g, 1]
    // Guard rows whose relevance mask is all-zero: −ln(sum + [sum == 0]).
    let has_rel: Vec<bool> = relevance
        .data()
        .chunks_exact(m)
        .map(|row| row.iter().any(|v| v.to_f64() != 0.0))
        .collect();
    let guard = Tensor::<T>::from_fn(&[g, 1], |i| if has_rel[i] { T::ZERO } else { T::ONE });
    scale(&ln(&eqt_tensor::ops::add(&sums, &guard)), T::from_f64(-1.0))
}
