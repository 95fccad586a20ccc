//! Row-major matrix kernels. Inner loops run over contiguous rows so they
//! vectorize without reassociating any reduction.

use super::Scalar;

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&av, brow) in arow.iter().zip(b.chunks_exact(n)) {
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] += aᵀ · c` for `a[m×k]`, `c[m×n]`.
pub(crate) fn gemm_at_b_acc<S: Scalar>(
    a: &[S],
    c: &[S],
    out: &mut [S],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for (arow, crow) in a.chunks_exact(k).zip(c.chunks_exact(n)) {
        for (&av, orow) in arow.iter().zip(out.chunks_exact_mut(n)) {
            for (o, &cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
}

/// `out[m×k] += c[m×n] · bᵀ` for `b[k×n]`.
pub(crate) fn gemm_a_bt_acc<S: Scalar>(
    c: &[S],
    b: &[S],
    out: &mut [S],
    m: usize,
    n: usize,
    k: usize,
) {
    let bt = transpose(b, k, n);
    gemm_acc(c, &bt, out, m, n, k);
}

pub(crate) fn transpose<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}
