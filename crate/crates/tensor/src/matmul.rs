//! Matrix products in plain, transposed-left, and transposed-right forms.
//!
//! Three loop orders are provided so backward passes never materialize a
//! transposed copy:
//!   nn: C = A·B     (A is m×k, B is k×n)
//!   nt: C = A·Bᵀ    (A is m×k, B is n×k; contraction over the shared k)
//!   tn: C = Aᵀ·B    (A is r×m, B is r×n; contraction over the shared r)
//!
//! Kernels use fixed accumulation order (row-streaming saxpy for nn/tn,
//! straight dot for nt), so results are bitwise deterministic.

use crate::element::Element;
use crate::op::BackOp;
use crate::tensor::Tensor;

pub(crate) fn kernel_nn<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &ap) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = cv.add(ap.mul(bv));
            }
        }
    }
}

pub(crate) fn kernel_nt<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    // Dot products over k, accumulated in 8 fixed lanes so the reduction
    // vectorizes while keeping one deterministic summation order.
    const LANES: usize = 8;
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut lanes = [T::ZERO; LANES];
            let whole = k - k % LANES;
            let (ah, at) = arow.split_at(whole);
            let (bh, bt) = brow.split_at(whole);
            for (ac, bc) in ah.chunks_exact(LANES).zip(bh.chunks_exact(LANES)) {
                for l in 0..LANES {
                    lanes[l] = lanes[l].add(ac[l].mul(bc[l]));
                }
            }
            let mut acc = T::ZERO;
            for &l in &lanes {
                acc = acc.add(l);
            }
            for (&av, &bv) in at.iter().zip(bt) {
                acc = acc.add(av.mul(bv));
            }
            *cv = cv.add(acc);
        }
    }
}

pub(crate) fn kernel_tn<T: Element>(a: &[T], b: &[T], r: usize, m: usize, n: usize, c: &mut [T]) {
    for i in 0..r {
        let arow = &a[i * m..(i + 1) * m];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &ap) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = cv.add(ap.mul(bv));
            }
        }
    }
}

fn dims2<T: Element>(t: &Tensor<T>, op: &str) -> (usize, usize) {
    assert_eq!(t.rank(), 2, "{op}: expected rank 2, got {:?}", t.shape());
    (t.shape()[0], t.shape()[1])
}

fn dims3<T: Element>(t: &Tensor<T>, op: &str) -> (usize, usize, usize) {
    assert_eq!(t.rank(), 3, "{op}: expected rank 3, got {:?}", t.shape());
    (t.shape()[0], t.shape()[1], t.shape()[2])
}

/// C = A·B for 2-D operands.
pub fn matmul_nn<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = dims2(a, "matmul_nn");
    let (k2, n) = dims2(b, "matmul_nn");
    assert_eq!(k, k2, "matmul_nn: inner dims differ ({:?} · {:?})", a.shape(), b.shape());
    let mut c = vec![T::ZERO; m * n];
    kernel_nn(a.data(), b.data(), m, k, n, &mut c);
    Tensor::derived(c, vec![m, n], BackOp::MatmulNN { a: a.clone(), b: b.clone() })
}

/// C = A·Bᵀ; operands share their second (column) dimension.
pub fn matmul_nt<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = dims2(a, "matmul_nt");
    let (n, k2) = dims2(b, "matmul_nt");
    assert_eq!(k, k2, "matmul_nt: shared dims differ ({:?} · {:?}ᵀ)", a.shape(), b.shape());
    let mut c = vec![T::ZERO; m * n];
    kernel_nt(a.data(), b.data(), m, k, n, &mut c);
    Tensor::derived(c, vec![m, n], BackOp::MatmulNT { a: a.clone(), b: b.clone() })
}

/// C = Aᵀ·B; operands share their first (row) dimension.
pub fn matmul_tn<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (r, m) = dims2(a, "matmul_tn");
    let (r2, n) = dims2(b, "matmul_tn");
    assert_eq!(r, r2, "matmul_tn: shared dims differ ({:?}ᵀ · {:?})", a.shape(), b.shape());
    let mut c = vec![T::ZERO; m * n];
    kernel_tn(a.data(), b.data(), r, m, n, &mut c);
    Tensor::derived(c, vec![m, n], BackOp::MatmulTN { a: a.clone(), b: b.clone() })
}

fn bmm_shapes<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    op: &str,
    shared: impl Fn((usize, usize), (usize, usize)) -> (usize, usize, usize, bool),
) -> (usize, usize, usize, usize) {
    let (ba, ma, ka) = dims3(a, op);
    let (bb, mb, kb) = dims3(b, op);
    assert_eq!(ba, bb, "{op}: batch dims differ ({:?} vs {:?})", a.shape(), b.shape());
    let (m, k, n, ok) = shared((ma, ka), (mb, kb));
    assert!(ok, "{op}: incompatible shapes ({:?} vs {:?})", a.shape(), b.shape());
    (ba, m, k, n)
}

/// Batched C = A·B over matching leading batch dims.
pub fn bmm_nn<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (bs, m, k, n) =
        bmm_shapes(a, b, "bmm_nn", |(m, k), (k2, n)| (m, k, n, k == k2));
    let mut c = vec![T::ZERO; bs * m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..bs {
        kernel_nn(
            &ad[i * m * k..(i + 1) * m * k],
            &bd[i * k * n..(i + 1) * k * n],
            m,
            k,
            n,
            &mut c[i * m * n..(i + 1) * m * n],
        );
    }
    Tensor::derived(c, vec![bs, m, n], BackOp::BmmNN { a: a.clone(), b: b.clone() })
}

/// Batched C = A·Bᵀ.
pub fn bmm_nt<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (bs, m, k, n) =
        bmm_shapes(a, b, "bmm_nt", |(m, k), (n, k2)| (m, k, n, k == k2));
    let mut c = vec![T::ZERO; bs * m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..bs {
        kernel_nt(
            &ad[i * m * k..(i + 1) * m * k],
            &bd[i * n * k..(i + 1) * n * k],
            m,
            k,
            n,
            &mut c[i * m * n..(i + 1) * m * n],
        );
    }
    Tensor::derived(c, vec![bs, m, n], BackOp::BmmNT { a: a.clone(), b: b.clone() })
}

/// Batched C = Aᵀ·B.
pub fn bmm_tn<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (bs, r, m, n) =
        bmm_shapes(a, b, "bmm_tn", |(r, m), (r2, n)| (r, m, n, r == r2));
    let mut c = vec![T::ZERO; bs * m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..bs {
        kernel_tn(
            &ad[i * r * m..(i + 1) * r * m],
            &bd[i * r * n..(i + 1) * r * n],
            r,
            m,
            n,
            &mut c[i * m * n..(i + 1) * m * n],
        );
    }
    Tensor::derived(c, vec![bs, m, n], BackOp::BmmTN { a: a.clone(), b: b.clone() })
}
