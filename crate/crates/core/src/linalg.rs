//! Bounds-checked wrappers around the GEMM kernels for row-major buffers.

use crate::scalar::Scalar;

/// Whether an operand is read as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c (m x n) = alpha * op(a) * op(b) + beta * c`, all buffers row-major.
///
/// `a` is stored as `m x k` for [`Op::N`] and `k x m` for [`Op::T`]; likewise
/// `b` is `k x n` or `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<S: Scalar>(
    op_a: Op,
    op_b: Op,
    m: usize,
    k: usize,
    n: usize,
    alpha: S,
    a: &[S],
    b: &[S],
    beta: S,
    c: &mut [S],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs has wrong length");
    assert_eq!(b.len(), k * n, "gemm: rhs has wrong length");
    assert_eq!(c.len(), m * n, "gemm: output has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    // the packed kernel is slow on a transposed rhs; an explicit copy is cheaper
    if op_b == Op::T {
        let mut bt = vec![S::zero(); k * n];
        for (j, row) in b.chunks_exact(k.max(1)).enumerate().take(n) {
            for (p, &v) in row.iter().enumerate() {
                bt[p * n + j] = v;
            }
        }
        return gemm(op_a, Op::N, m, k, n, alpha, a, &bt, beta, c);
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: lengths checked above and strides describe exactly those shapes.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
