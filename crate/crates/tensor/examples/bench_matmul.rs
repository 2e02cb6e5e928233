//! Rough single-thread throughput check for the matmul kernels.

use std::time::Instant;

use eqt_tensor::{matmul_nn, matmul_nt, matmul_tn, no_grad, Tensor};

fn bench(name: &str, m: usize, k: usize, n: usize, reps: usize, f: impl Fn(&Tensor<f32>, &Tensor<f32>) -> Tensor<f32>, bk: bool) {
    let a = Tensor::<f32>::from_fn(&[m, k], |i| ((i * 2654435761) % 1000) as f32 / 1000.0 - 0.5);
    let bshape = if bk { [n, k] } else { [k, n] };
    let b = Tensor::<f32>::from_fn(&bshape, |i| ((i * 40503) % 1000) as f32 / 1000.0 - 0.5);
    // warmup
    no_grad(|| { let _ = f(&a, &b); });
    let t0 = Instant::now();
    no_grad(|| {
        for _ in 0..reps {
            let c = f(&a, &b);
            std::hint::black_box(c.data()[0]);
        }
    });
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * (m * k * n * reps) as f64;
    println!("{name} m={m} k={k} n={n}: {:.2} Gflop/s ({:.1} ms/rep)", flops / dt / 1e9, dt * 1000.0 / reps as f64);
}

fn main() {
    bench("nn", 512, 64, 64, 200, |a, b| matmul_nn(a, b), false);
    bench("nn", 4096, 64, 64, 40, |a, b| matmul_nn(a, b), false);
    bench("nn", 9760, 64, 64, 20, |a, b| matmul_nn(a, b), false);
    bench("nn", 4096, 64, 256, 20, |a, b| matmul_nn(a, b), false);
    bench("nt", 4096, 64, 64, 40, |a, b| matmul_nt(a, b), true);
    {
        let a = Tensor::<f32>::from_fn(&[4096, 64], |i| (i % 97) as f32 / 97.0 - 0.5);
        let b = Tensor::<f32>::from_fn(&[4096, 64], |i| (i % 89) as f32 / 89.0 - 0.5);
        no_grad(|| { let _ = matmul_tn(&a, &b); });
        let t0 = Instant::now();
        no_grad(|| {
            for _ in 0..40 {
                let c = matmul_tn(&a, &b);
                std::hint::black_box(c.data()[0]);
            }
        });
        let dt = t0.elapsed().as_secs_f64();
        println!("tn 4096x64ᵀ·4096x64: {:.2} Gflop/s", 2.0 * (4096.0*64.0*64.0*40.0) / dt / 1e9);
    }
    // elementwise throughput
    let x = Tensor::<f32>::from_fn(&[4096 * 64], |i| (i % 100) as f32 / 100.0);
    let t0 = Instant::now();
    no_grad(|| {
        for _ in 0..200 {
            let y = eqt_tensor::exp(&x);
            std::hint::black_box(y.data()[0]);
        }
    });
    println!("exp 262k elems: {:.1} Melem/s", 200.0 * 262144.0 / t0.elapsed().as_secs_f64() / 1e6);
    let t0 = Instant::now();
    no_grad(|| {
        for _ in 0..500 {
            let y = eqt_tensor::add(&x, &x);
            std::hint::black_box(y.data()[0]);
        }
    });
    println!("add 262k elems: {:.1} Melem/s", 500.0 * 262144.0 / t0.elapsed().as_secs_f64() / 1e6);
}
