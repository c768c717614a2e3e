//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use posegan::maps::ParsingMap;
use posegan::Tensor;

/// Direct O(N²) DFT written from the definition.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64))
                .sum()
        })
        .collect()
}

/// Full 2D spectrum of one real `h×w` plane, rows then columns.
pub fn naive_dft2(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut rows = Vec::with_capacity(h * w);
    for y in 0..h {
        let row: Vec<Complex64> = plane[y * w..(y + 1) * w].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        rows.extend(naive_dft(&row));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for x in 0..w {
        let col: Vec<Complex64> = (0..h).map(|y| rows[y * w + x]).collect();
        for (y, v) in naive_dft(&col).into_iter().enumerate() {
            out[y * w + x] = v;
        }
    }
    out
}

pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

/// Quadruple-loop cross-correlation with zero padding.
pub fn naive_conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (b, c, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (o, k) = (w.dim(0), w.dim(2));
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0; b * o * ho * wo];
    for n in 0..b {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += xd[((n * c + ic) * h + iy as usize) * wd + ix as usize]
                                    * wdat[((oc * c + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((n * o + oc) * ho + oy) * wo + ox] = s;
                }
            }
        }
    }
    out
}

/// Largest singular value of a row-major `m×n` matrix: square root of the
/// largest eigenvalue of `WᵀW`, found by cyclic Jacobi rotations.
pub fn jacobi_sigma_max(w: &[f64], m: usize, n: usize) -> f64 {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (0..m).map(|r| w[r * n + i] * w[r * n + j]).sum();
        }
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max).max(0.0).sqrt()
}

/// Solves a small dense system by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exact optimal transport cost between `a` (length n) and `b` (length m)
/// under `cost[i*m+j]`, by enumerating the vertices of the transport
/// polytope: every basic solution supported on `n+m−1` cells.
pub fn exact_ot(cost: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let cells = n * m;
    let basis = n + m - 1;
    let mut best = f64::INFINITY;
    let mut chosen: Vec<usize> = (0..basis).collect();
    loop {
        // Marginal equations, dropping the last column constraint (redundant).
        let mut rows = Vec::with_capacity(basis);
        let mut rhs = Vec::with_capacity(basis);
        for i in 0..n {
            rows.push(chosen.iter().map(|&c| f64::from(u8::from(c / m == i))).collect::<Vec<_>>());
            rhs.push(a[i]);
        }
        for j in 0..m - 1 {
            rows.push(chosen.iter().map(|&c| f64::from(u8::from(c % m == j))).collect());
            rhs.push(b[j]);
        }
        if let Some(x) = solve(rows, rhs) {
            if x.iter().all(|&v| v >= -1e-12) {
                let c: f64 = chosen.iter().zip(&x).map(|(&cell, &v)| cost[cell] * v).sum();
                best = best.min(c);
            }
        }
        // Next combination in lexicographic order.
        let mut i = basis;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if chosen[i] < cells - basis + i {
                break;
            }
        }
        chosen[i] += 1;
        for k in i + 1..basis {
            chosen[k] = chosen[k - 1] + 1;
        }
    }
}

/// Minimum over all permutation plans of the mean matched cost (uniform
/// square case).
pub fn permutation_ot(cost: &[f64], n: usize) -> f64 {
    fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                rec(cost, n, row + 1, used, acc + cost[row * n + j] / n as f64, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

/// Masked mean of sample `b` of `[B,C,H,W]` over pixels labelled `j`, or the
/// global mean when no pixel carries the label.
pub fn masked_mean(f: &Tensor, map: &ParsingMap, b: usize, j: u8) -> Vec<f64> {
    let (c, h, w) = (f.dim(1), f.dim(2), f.dim(3));
    let mut out = Vec::with_capacity(c);
    let count = (0..h * w).filter(|&p| map.label_at(b, p / w, p % w) == j).count();
    for ch in 0..c {
        let plane = &f.data()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
        let v = if count == 0 {
            plane.iter().sum::<f64>() / (h * w) as f64
        } else {
            (0..h * w)
                .filter(|&p| map.label_at(b, p / w, p % w) == j)
                .map(|p| plane[p])
                .sum::<f64>()
                / count as f64
        };
        out.push(v);
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn squared_distance_matrix(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<f64> {
    let mut c = Vec::with_capacity(x.len() * y.len());
    for p in x {
        for q in y {
            c.push(p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum());
        }
    }
    c
}
