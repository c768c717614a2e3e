//! Reference DFT, radix-2 FFT, and the real 2D FFT pair used by the
//! frequency stream of [`crate::resfft::ResFftBlock`].
//!
//! Conventions: the forward transform is unnormalized
//! (`X[k] = Σ x[j]·e^{−2πi·kj/N}`) and the inverse carries the full `1/(H·W)`
//! factor. Real 2D spectra keep only the non-redundant half of the last
//! axis, `⌊W/2⌋+1` columns, which is the smallest layout that still holds
//! both the DC and Nyquist columns and so inverts exactly. The remaining
//! columns follow from conjugate symmetry, `X[H−u, W−v] = conj(X[u, v])`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// O(N²) DFT straight from the definition. Test oracle only.
pub fn dft1d_reference(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    // reduce kj mod n first so the angle stays small
                    let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    v * Complex64::new(ang.cos(), ang.sin())
                })
                .sum()
        })
        .collect()
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// In-place iterative radix-2 Cooley–Tukey. Unnormalized in both
/// directions; `inverse` flips the twiddle sign.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    check_pow2(n)?;
    let bits = n.trailing_zeros();
    if bits == 0 {
        return Ok(());
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| {
                let ang = sign * 2.0 * PI * k as f64 / len as f64;
                Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
    Ok(())
}

/// Half-spectrum of a real `[B,C,H,W]` field, one `H × (⌊W/2⌋+1)` plane per
/// (batch, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexGrid {
    pub fn new(
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
        re: Vec<f64>,
        im: Vec<f64>,
    ) -> Result<ComplexGrid> {
        check_pow2(height).map_err(|_| Error::MalformedSpectrum(format!("height {height} not a power of two")))?;
        check_pow2(width).map_err(|_| Error::MalformedSpectrum(format!("width {width} not a power of two")))?;
        let expect = batch * channels * height * (width / 2 + 1);
        if re.len() != expect || im.len() != expect || expect == 0 {
            return Err(Error::MalformedSpectrum(format!(
                "expected {expect} entries per part, got re={} im={}",
                re.len(),
                im.len()
            )));
        }
        Ok(ComplexGrid {
            batch,
            channels,
            height,
            width,
            re,
            im,
        })
    }

    pub fn zeros(batch: usize, channels: usize, height: usize, width: usize) -> Result<ComplexGrid> {
        let n = batch * channels * height * (width / 2 + 1);
        ComplexGrid::new(batch, channels, height, width, vec![0.0; n], vec![0.0; n])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Width of the spatial field this spectrum came from.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn half_width(&self) -> usize {
        self.width / 2 + 1
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    fn plane_len(&self) -> usize {
        self.height * self.half_width()
    }

    fn index(&self, b: usize, c: usize, u: usize, v: usize) -> usize {
        ((b * self.channels + c) * self.height + u) * self.half_width() + v
    }

    pub fn get(&self, b: usize, c: usize, u: usize, v: usize) -> Complex64 {
        let i = self.index(b, c, u, v);
        Complex64::new(self.re[i], self.im[i])
    }

    /// Any bin of the implied full `H × W` spectrum, reconstructed through
    /// conjugate symmetry for columns beyond the stored half.
    pub fn full_bin(&self, b: usize, c: usize, u: usize, v: usize) -> Complex64 {
        if v < self.half_width() {
            self.get(b, c, u, v)
        } else {
            self.get(b, c, (self.height - u) % self.height, self.width - v).conj()
        }
    }

    pub fn scale(&self, s: f64) -> ComplexGrid {
        ComplexGrid {
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &ComplexGrid) -> Result<ComplexGrid> {
        if self.re.len() != other.re.len() || self.width != other.width || self.height != other.height {
            return Err(Error::MalformedSpectrum("grid extents differ".into()));
        }
        Ok(ComplexGrid {
            re: self.re.iter().zip(&other.re).map(|(a, b)| a + b).collect(),
            im: self.im.iter().zip(&other.im).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }
}

fn rfft2_plane(x: &[f64], h: usize, w: usize, re: &mut [f64], im: &mut [f64]) {
    let wh = w / 2 + 1;
    let mut rows = vec![Complex64::default(); h * wh];
    let mut row = vec![Complex64::default(); w];
    for y in 0..h {
        for (dst, &v) in row.iter_mut().zip(&x[y * w..(y + 1) * w]) {
            *dst = Complex64::new(v, 0.0);
        }
        fft_in_place(&mut row, false).expect("width checked");
        rows[y * wh..(y + 1) * wh].copy_from_slice(&row[..wh]);
    }
    let mut col = vec![Complex64::default(); h];
    for v in 0..wh {
        for y in 0..h {
            col[y] = rows[y * wh + v];
        }
        fft_in_place(&mut col, false).expect("height checked");
        for u in 0..h {
            re[u * wh + v] = col[u].re;
            im[u * wh + v] = col[u].im;
        }
    }
}

/// Column inverse FFTs over the stored half, then per-row inverse over the
/// full width. With `hermitian` the missing columns are conjugate mirrors
/// (the true inverse); without, they are zero (the adjoint of [`rfft2`]).
/// Unnormalized; returns the real part.
fn half_inverse_plane(re: &[f64], im: &[f64], h: usize, w: usize, hermitian: bool, out: &mut [f64]) {
    let wh = w / 2 + 1;
    let mut cols = vec![Complex64::default(); h * wh];
    let mut col = vec![Complex64::default(); h];
    for v in 0..wh {
        for u in 0..h {
            col[u] = Complex64::new(re[u * wh + v], im[u * wh + v]);
        }
        fft_in_place(&mut col, true).expect("height checked");
        for y in 0..h {
            cols[y * wh + v] = col[y];
        }
    }
    let mut row = vec![Complex64::default(); w];
    for y in 0..h {
        let half = &cols[y * wh..(y + 1) * wh];
        for v in 0..w {
            row[v] = if v < wh {
                half[v]
            } else if hermitian {
                half[w - v].conj()
            } else {
                Complex64::default()
            };
        }
        fft_in_place(&mut row, true).expect("width checked");
        for (o, z) in out[y * w..(y + 1) * w].iter_mut().zip(&row) {
            *o = z.re;
        }
    }
}

fn check_spatial(x: &Tensor) -> Result<(usize, usize, usize, usize)> {
    if x.rank() != 4 {
        return Err(Error::invalid_shape("rfft2", x.shape(), "expected [B,C,H,W]"));
    }
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    check_pow2(h)?;
    check_pow2(w)?;
    Ok((b, c, h, w))
}

/// Per-channel real 2D FFT, unnormalized.
pub fn rfft2(x: &Tensor) -> Result<ComplexGrid> {
    let (b, c, h, w) = check_spatial(x)?;
    let mut grid = ComplexGrid::zeros(b, c, h, w)?;
    let (pl, sp) = (grid.plane_len(), h * w);
    for p in 0..b * c {
        let (re, im) = (&mut grid.re[p * pl..(p + 1) * pl], &mut grid.im[p * pl..(p + 1) * pl]);
        rfft2_plane(&x.data()[p * sp..(p + 1) * sp], h, w, re, im);
    }
    Ok(grid)
}

/// Exact inverse of [`rfft2`]; imaginary parts that a real field cannot
/// carry (DC and Nyquist columns' self-conjugate bins) are projected away.
pub fn irfft2(grid: &ComplexGrid) -> Result<Tensor> {
    let (b, c, h, w) = (grid.batch, grid.channels, grid.height, grid.width);
    let (pl, sp) = (grid.plane_len(), h * w);
    let scale = 1.0 / sp as f64;
    let mut out = vec![0.0; b * c * sp];
    for p in 0..b * c {
        let dst = &mut out[p * sp..(p + 1) * sp];
        half_inverse_plane(&grid.re[p * pl..(p + 1) * pl], &grid.im[p * pl..(p + 1) * pl], h, w, true, dst);
        dst.iter_mut().for_each(|v| *v *= scale);
    }
    Tensor::new(out, &[b, c, h, w])
}

/// Adjoint of [`rfft2`] viewed as a real-linear map `ℝ^{H×W} → ℝ^{2·H×Wh}`:
/// maps `∂L/∂(Re X, Im X)` to `∂L/∂x`. Each stored bin contributes once;
/// no doubling for the mirrored half, since the forward map never produces it.
pub fn rfft2_backward(grad: &ComplexGrid) -> Result<Tensor> {
    let (b, c, h, w) = (grad.batch, grad.channels, grad.height, grad.width);
    let (pl, sp) = (grad.plane_len(), h * w);
    let mut out = vec![0.0; b * c * sp];
    for p in 0..b * c {
        half_inverse_plane(
            &grad.re[p * pl..(p + 1) * pl],
            &grad.im[p * pl..(p + 1) * pl],
            h,
            w,
            false,
            &mut out[p * sp..(p + 1) * sp],
        );
    }
    Tensor::new(out, &[b, c, h, w])
}

/// Adjoint of [`irfft2`]: `(c_v / HW)·rfft2(g)` where `c_v` is 1 on the DC
/// and Nyquist columns and 2 elsewhere.
pub fn irfft2_backward(grad: &Tensor) -> Result<ComplexGrid> {
    let mut g = rfft2(grad)?;
    let (h, w, wh) = (g.height, g.width, g.half_width());
    let base = 1.0 / (h * w) as f64;
    for (i, (re, im)) in g.re.iter_mut().zip(g.im.iter_mut()).enumerate() {
        let v = i % wh;
        let weight = if v == 0 || (w % 2 == 0 && v == w / 2) { base } else { 2.0 * base };
        *re *= weight;
        *im *= weight;
    }
    Ok(g)
}

fn stack_channels(grid: &ComplexGrid) -> Vec<f64> {
    let (b, c, pl) = (grid.batch, grid.channels, grid.plane_len());
    let mut out = Vec::with_capacity(2 * b * c * pl);
    for bi in 0..b {
        out.extend_from_slice(&grid.re[bi * c * pl..(bi + 1) * c * pl]);
        out.extend_from_slice(&grid.im[bi * c * pl..(bi + 1) * c * pl]);
    }
    out
}

fn unstack_channels(data: &[f64], b: usize, c: usize, h: usize, w: usize) -> Result<ComplexGrid> {
    let pl = h * (w / 2 + 1);
    let mut re = Vec::with_capacity(b * c * pl);
    let mut im = Vec::with_capacity(b * c * pl);
    for bi in 0..b {
        let base = bi * 2 * c * pl;
        re.extend_from_slice(&data[base..base + c * pl]);
        im.extend_from_slice(&data[base + c * pl..base + 2 * c * pl]);
    }
    ComplexGrid::new(b, c, h, w, re, im)
}

/// Differentiable `rfft2` with the spectrum laid out as real channels:
/// `[B,C,H,W] → [B,2C,H,⌊W/2⌋+1]`, real parts first, then imaginary parts.
pub fn spectrum_channels(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = check_spatial(x)?;
    let grid = rfft2(x)?;
    let data = stack_channels(&grid);
    Ok(Tensor::from_op("rfft2", data, vec![b, 2 * c, h, w / 2 + 1], vec![x.clone()], move |g, _| {
        let grad = unstack_channels(g, b, c, h, w).expect("shape fixed at forward");
        vec![Some(rfft2_backward(&grad).expect("valid grid").to_vec())]
    }))
}

/// Differentiable inverse of [`spectrum_channels`]; `width` is the original
/// spatial width.
pub fn spatial_from_spectrum(z: &Tensor, width: usize) -> Result<Tensor> {
    if z.rank() != 4 || z.dim(1) % 2 != 0 || z.dim(3) != width / 2 + 1 {
        return Err(Error::MalformedSpectrum(format!(
            "stacked spectrum {:?} does not fit width {width}",
            z.shape()
        )));
    }
    let (b, c, h) = (z.dim(0), z.dim(1) / 2, z.dim(2));
    let grid = unstack_channels(z.data(), b, c, h, width)?;
    let out = irfft2(&grid)?;
    Ok(Tensor::from_op("irfft2", out.to_vec(), vec![b, c, h, width], vec![z.clone()], move |g, _| {
        let gt = Tensor::new(g.to_vec(), &[b, c, h, width]).expect("shape fixed at forward");
        let grid = irfft2_backward(&gt).expect("valid spatial grad");
        vec![Some(stack_channels(&grid))]
    }))
}
