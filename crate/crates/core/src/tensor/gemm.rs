//! Cache-blocked dense matrix products over row-major slices.

const JB: usize = 256;
const PB: usize = 128;

/// `c (m×n) (+)= op(a) · op(b)` where `op(a)` is m×k and `op(b)` is k×n.
/// With `ta` the slice `a` holds a k×m matrix; with `tb` the slice `b`
/// holds an n×k matrix.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    n: usize,
    k: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.fill(0.0);
    }
    match (ta, tb) {
        (false, false) => gemm_nn(m, n, k, a, b, c),
        (true, false) => gemm_tn(m, n, k, a, b, c),
        (false, true) => gemm_nt(m, n, k, a, b, c),
        (true, true) => {
            // rare; materialize op(a)
            let mut at = vec![0.0; m * k];
            for p in 0..k {
                for i in 0..m {
                    at[i * k + p] = a[p * m + i];
                }
            }
            gemm_nt(m, n, k, &at, b, c)
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Four output rows share each streamed row of `b`.
#[inline]
fn axpy4(alpha: [f64; 4], x: &[f64], c: &mut [f64], rows: [usize; 4], j0: usize, j1: usize) {
    let len = j1 - j0;
    let (c0, rest) = c[rows[0] + j0..].split_at_mut(rows[1] - rows[0]);
    let (c1, rest) = rest.split_at_mut(rows[2] - rows[1]);
    let (c2, c3) = rest.split_at_mut(rows[3] - rows[2]);
    let (c0, c1, c2, c3) = (&mut c0[..len], &mut c1[..len], &mut c2[..len], &mut c3[..len]);
    for j in 0..len {
        let xv = x[j];
        c0[j] += alpha[0] * xv;
        c1[j] += alpha[1] * xv;
        c2[j] += alpha[2] * xv;
        c3[j] += alpha[3] * xv;
    }
}

/// Shared driver for NN and TN; `a_at(i, p)` reads op(a).
fn gemm_rows(m: usize, n: usize, k: usize, a_at: impl Fn(usize, usize) -> f64, b: &[f64], c: &mut [f64]) {
    let m4 = m - m % 4;
    for j0 in (0..n).step_by(JB) {
        let j1 = (j0 + JB).min(n);
        for p0 in (0..k).step_by(PB) {
            let p1 = (p0 + PB).min(k);
            for i in (0..m4).step_by(4) {
                let rows = [i * n, (i + 1) * n, (i + 2) * n, (i + 3) * n];
                for p in p0..p1 {
                    let alpha = [a_at(i, p), a_at(i + 1, p), a_at(i + 2, p), a_at(i + 3, p)];
                    if alpha == [0.0; 4] {
                        continue;
                    }
                    axpy4(alpha, &b[p * n + j0..p * n + j1], c, rows, j0, j1);
                }
            }
            for i in m4..m {
                let crow = &mut c[i * n + j0..i * n + j1];
                for p in p0..p1 {
                    let av = a_at(i, p);
                    if av != 0.0 {
                        axpy(av, &b[p * n + j0..p * n + j1], crow);
                    }
                }
            }
        }
    }
}

fn gemm_nn(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm_rows(m, n, k, |i, p| a[i * k + p], b, c)
}

fn gemm_tn(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm_rows(m, n, k, |i, p| a[p * m + i], b, c)
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for q in 0..chunks {
        for l in 0..4 {
            acc[l] += x[q * 4 + l] * y[q * 4 + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for q in chunks * 4..x.len() {
        s += x[q] * y[q];
    }
    s
}

fn gemm_nt(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for j in 0..n {
        let brow = &b[j * k..(j + 1) * k];
        for i in 0..m {
            c[i * n + j] += dot(&a[i * k..(i + 1) * k], brow);
        }
    }
}
