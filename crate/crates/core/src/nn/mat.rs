//! Row-major dense kernels over plain `f64` slices.

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k`,
/// `op(b)` is `k x n` and `c` is `m x n`, all row-major. A transposed
/// operand is passed in its stored (untransposed) layout.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every index the strides reach.
    unsafe {
        matrixmultiply::dgemm(
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

/// `y = x * w + bias` for `rows` inputs of width `w_in`.
pub fn affine(x: &[f64], rows: usize, w: &[f64], bias: &[f64], w_in: usize, w_out: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * w_out);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(rows, w_in, w_out, 1.0, x, false, w, false, 1.0, &mut y);
    y
}

/// Backward of [`affine`]: accumulates into `dw` and `db`, returns `dx` when
/// requested.
#[allow(clippy::too_many_arguments)]
pub fn affine_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    w: &[f64],
    w_in: usize,
    w_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    gemm(w_in, rows, w_out, 1.0, x, true, dy, false, 1.0, dw);
    for row in dy.chunks_exact(w_out) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    need_dx.then(|| {
        let mut dx = vec![0.0; rows * w_in];
        gemm(rows, w_out, w_in, 1.0, dy, false, w, true, 0.0, &mut dx);
        dx
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
