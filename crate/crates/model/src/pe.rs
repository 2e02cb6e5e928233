//! Fixed sinusoidal positional encoding (sin/cos interleaved, base 10000).

use eqt_tensor::{Element, Tensor};

/// [len, d] with row p: even channel 2i = sin(p·ω_i), odd 2i+1 = cos(p·ω_i),
/// ω_i = 10000^(−2i/d).
pub fn sinusoidal_pe<T: Element>(len: usize, d: usize) -> Tensor<T> {
    assert!(d % 2 == 0, "sinusoidal encoding needs even width, got {d}");
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for j in 0..d {
            let i = (j / 2) as f64;
            let omega = (10000f64).powf(-2.0 * i / d as f64);
            let angle = pos as f64 * omega;
            let v = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            data.push(T::from_f64(v));
        }
    }
    Tensor::from_vec(&[len, d], data).expect("sized encoding")
}

/// Rows of the encoding at the given positions: [n, d].
pub fn pe_rows<T: Element>(positions: &[usize], max_len: usize, d: usize) -> Tensor<T> {
    let table = sinusoidal_pe::<T>(max_len, d);
    let mut data = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        assert!(p < max_len, "position {p} exceeds encoding table {max_len}");
        data.extend_from_slice(&table.data()[p * d..(p + 1) * d]);
    }
    Tensor::from_vec(&[positions.len(), d], data).expect("sized rows")
}
