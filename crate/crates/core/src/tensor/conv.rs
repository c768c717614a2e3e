use super::gemm::gemm;
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let Geometry { c, h, w, k, stride, pad, oh, ow } = *self;
        let plane = oh * ow;
        for ci in 0..c {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut cols[((ci * k + ki) * k + kj) * plane..][..plane];
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize { 0.0 } else { srow[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], gx: &mut [f64]) {
        let Geometry { c, h, w, k, stride, pad, oh, ow } = *self;
        let plane = oh * ow;
        for ci in 0..c {
            let dst = &mut gx[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &cols[((ci * k + ki) * k + kj) * plane..][..plane];
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                drow[ix as usize] += row[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Tensor {
    /// 2D cross-correlation (no kernel flip), zero padding.
    /// `x: [B,C,H,W]`, `w: [O,C,k,k]` with odd `k`.
    pub fn conv2d(&self, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        if self.rank() != 4 || weight.rank() != 4 || self.dim(1) != weight.dim(1) {
            return Err(Error::shape("conv2d", self.shape(), weight.shape()));
        }
        let (bs, c, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (o, k) = (weight.dim(0), weight.dim(2));
        if weight.dim(3) != k || k % 2 == 0 {
            return Err(Error::invalid_shape("conv2d", weight.shape(), "kernel must be square with odd size"));
        }
        if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::invalid_shape("conv2d", self.shape(), "kernel larger than padded input"));
        }
        if (h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0 {
            return Err(Error::invalid_shape(
                "conv2d",
                self.shape(),
                format!("non-integral output extent for k={k} stride={stride} pad={pad}"),
            ));
        }
        let geo = Geometry {
            c,
            h,
            w,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        };
        let ckk = c * k * k;
        let plane = geo.oh * geo.ow;
        let mut out = vec![0.0; bs * o * plane];
        let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![0.0; ckk * plane] };
        for b in 0..bs {
            let xb = &self.data()[b * c * h * w..(b + 1) * c * h * w];
            let colb: &[f64] = if geo.is_pointwise() {
                xb
            } else {
                geo.im2col(xb, &mut cols);
                &cols
            };
            gemm(o, plane, ckk, weight.data(), false, colb, false, &mut out[b * o * plane..(b + 1) * o * plane], false);
        }
        let (xc, wc) = (self.clone(), weight.clone());
        Ok(Tensor::from_op(
            "conv2d",
            out,
            vec![bs, o, geo.oh, geo.ow],
            vec![self.clone(), weight.clone()],
            move |g, needs| {
                let mut gx = needs[0].then(|| vec![0.0; bs * c * h * w]);
                let mut gw = needs[1].then(|| vec![0.0; o * ckk]);
                let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![0.0; ckk * plane] };
                let mut gcols = if geo.is_pointwise() { Vec::new() } else { vec![0.0; ckk * plane] };
                for b in 0..bs {
                    let gb = &g[b * o * plane..(b + 1) * o * plane];
                    if let Some(gw) = gw.as_mut() {
                        let xb = &xc.data()[b * c * h * w..(b + 1) * c * h * w];
                        let colb: &[f64] = if geo.is_pointwise() {
                            xb
                        } else {
                            geo.im2col(xb, &mut cols);
                            &cols
                        };
                        gemm(o, ckk, plane, gb, false, colb, true, gw, true);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let gxb = &mut gx[b * c * h * w..(b + 1) * c * h * w];
                        if geo.is_pointwise() {
                            gemm(ckk, plane, o, wc.data(), true, gb, false, gxb, false);
                        } else {
                            gemm(ckk, plane, o, wc.data(), true, gb, false, &mut gcols, false);
                            geo.col2im(&gcols, gxb);
                        }
                    }
                }
                vec![gx, gw]
            },
        ))
    }

    /// 2×2 average pooling with stride 2 over the last two axes.
    pub fn avg_pool2(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 || self.dim(r - 1) % 2 != 0 || self.dim(r - 2) % 2 != 0 {
            return Err(Error::invalid_shape("avg_pool2", self.shape(), "needs even spatial extents"));
        }
        let (h, w) = (self.dim(r - 2), self.dim(r - 1));
        let planes = self.numel() / (h * w);
        let (oh, ow) = (h / 2, w / 2);
        let x = self.data();
        let mut out = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            let src = &x[p * h * w..];
            for y in 0..oh {
                for xx in 0..ow {
                    let s = src[2 * y * w + 2 * xx]
                        + src[2 * y * w + 2 * xx + 1]
                        + src[(2 * y + 1) * w + 2 * xx]
                        + src[(2 * y + 1) * w + 2 * xx + 1];
                    out[p * oh * ow + y * ow + xx] = 0.25 * s;
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        Ok(Tensor::from_op("avg_pool2", out, shape, vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; planes * h * w];
            for p in 0..planes {
                for y in 0..h {
                    for xx in 0..w {
                        gx[p * h * w + y * w + xx] = 0.25 * g[p * oh * ow + (y / 2) * ow + xx / 2];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Nearest-neighbour 2× upsampling over the last two axes.
    pub fn upsample2x(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::invalid_shape("upsample2x", self.shape(), "rank < 2"));
        }
        let (h, w) = (self.dim(r - 2), self.dim(r - 1));
        let planes = self.numel() / (h * w);
        let (oh, ow) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            for y in 0..oh {
                for xx in 0..ow {
                    out[p * oh * ow + y * ow + xx] = x[p * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        Ok(Tensor::from_op("upsample2x", out, shape, vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; planes * h * w];
            for p in 0..planes {
                for y in 0..oh {
                    for xx in 0..ow {
                        gx[p * h * w + (y / 2) * w + xx / 2] += g[p * oh * ow + y * ow + xx];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct quadruple-loop cross-correlation.
    fn conv_oracle(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (bs, c, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (o, k) = (w.dim(0), w.dim(2));
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; bs * o * oh * ow];
        for b in 0..bs {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut s = 0.0;
                        for ci in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (y * stride + ki) as isize - pad as isize;
                                    let ix = (xx * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        s += x.data()[((b * c + ci) * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((oc * c + ci) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        out[((b * o + oc) * oh + y) * ow + xx] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_pointwise_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[2, 1, 5, 4], 1.0, &mut rng);
        let w = Tensor::ones(&[1, 1, 1, 1]);
        assert_eq!(x.conv2d(&w, 1, 0).unwrap().data(), x.data());
    }

    #[test]
    fn all_ones_three_by_three() {
        let x = Tensor::ones(&[1, 1, 3, 3]);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        let y = x.conv2d(&w, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.item(), 9.0);
    }

    #[test]
    fn random_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(stride, pad, k, h) in &[(1, 1, 3, 6), (2, 1, 3, 9), (1, 0, 1, 5), (2, 2, 5, 7), (1, 0, 3, 5)] {
            let x = Tensor::randn(&[2, 3, h, h], 1.0, &mut rng);
            let w = Tensor::randn(&[4, 3, k, k], 1.0, &mut rng);
            let y = x.conv2d(&w, stride, pad).unwrap();
            let expect = conv_oracle(&x, &w, stride, pad);
            for (a, b) in y.data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_integral_extent_is_an_error() {
        let x = Tensor::zeros(&[1, 1, 6, 6]);
        let w = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(x.conv2d(&w, 2, 0).is_err());
        assert!(x.conv2d(&Tensor::zeros(&[1, 1, 2, 2]), 1, 0).is_err());
    }

    #[test]
    fn pool_and_upsample_values() {
        let x = Tensor::from_fn(&[1, 1, 2, 2], |i| i as f64);
        assert_eq!(x.avg_pool2().unwrap().data(), &[1.5]);
        let u = x.upsample2x().unwrap();
        assert_eq!(u.shape(), &[1, 1, 4, 4]);
        assert_eq!(&u.data()[..4], &[0.0, 0.0, 1.0, 1.0]);
        // pooling undoes nearest upsampling
        assert_eq!(u.avg_pool2().unwrap().data(), x.data());
    }

    #[test]
    fn conv_pool_upsample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[2, 2, 5, 5], 1.0, &mut rng);
        let w1 = Tensor::randn(&[3, 2, 3, 3], 0.5, &mut rng);
        let w2 = Tensor::randn(&[2, 3, 1, 1], 0.5, &mut rng);
        let w3 = Tensor::randn(&[2, 2, 3, 3], 0.5, &mut rng);
        let report = check_gradients(&[x, w1, w2, w3], |t| {
            let y = t[0].conv2d(&t[1], 1, 1)?.tanh().conv2d(&t[2], 1, 0)?;
            let z = y.conv2d(&t[3], 2, 1)?.upsample2x()?.avg_pool2()?;
            Ok(z.square().sum())
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
