use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Splits a shape around `axis` into (outer, n, inner).
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
    let mut s = shape.to_vec();
    if keepdim || s.len() == 1 {
        s[axis] = 1;
    } else {
        s.remove(axis);
    }
    s
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.rank() {
        return Err(Error::invalid_shape(op, t.shape(), format!("axis {axis} out of range")));
    }
    Ok(())
}

impl Tensor {
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![s], vec![1], vec![self.clone()], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum::<f64>() / n as f64;
        Tensor::from_op("mean", vec![s], vec![1], vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0] / n as f64; n])]
        })
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        check_axis("sum_axis", self, axis)?;
        let (outer, n, inner) = split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let row = &x[(o * n + k) * inner..(o * n + k + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(row).for_each(|(d, v)| *d += v);
            }
        }
        let shape = reduced_shape(self.shape(), axis, keepdim);
        Ok(Tensor::from_op("sum_axis", out, shape, vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                for k in 0..n {
                    gx[(o * n + k) * inner..(o * n + k + 1) * inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        check_axis("mean_axis", self, axis)?;
        let n = self.dim(axis) as f64;
        Ok(self.sum_axis(axis, keepdim)?.mul_scalar(1.0 / n))
    }

    /// Numerically stable `ln Σ exp` along `axis`.
    pub fn logsumexp_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        check_axis("logsumexp_axis", self, axis)?;
        let (outer, n, inner) = split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| x[(o * n + k) * inner + i];
                let m = (0..n).map(at).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..n).map(|k| (at(k) - m).exp()).sum();
                out[o * inner + i] = m + s.ln();
            }
        }
        let lse = out.clone();
        let xc = self.clone();
        let shape = reduced_shape(self.shape(), axis, keepdim);
        Ok(Tensor::from_op("logsumexp", out, shape, vec![self.clone()], move |g, _| {
            let x = xc.data();
            let mut gx = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let l = lse[o * inner + i];
                    let go = g[o * inner + i];
                    for k in 0..n {
                        let idx = (o * n + k) * inner + i;
                        gx[idx] = go * (x[idx] - l).exp();
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("softmax", self, axis)?;
        let (outer, n, inner) = split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| x[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for k in 0..n {
                    let e = (x[idx(k)] - m).exp();
                    y[idx(k)] = e;
                    s += e;
                }
                for k in 0..n {
                    y[idx(k)] /= s;
                }
            }
        }
        let saved = y.clone();
        Ok(Tensor::from_op("softmax", y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; saved.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * n + k) * inner + i;
                    let dot: f64 = (0..n).map(|k| g[idx(k)] * saved[idx(k)]).sum();
                    for k in 0..n {
                        gx[idx(k)] = saved[idx(k)] * (g[idx(k)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("log_softmax", self, axis)?;
        let (outer, n, inner) = split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| x[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..n).map(|k| (x[idx(k)] - m).exp()).sum::<f64>().ln();
                for k in 0..n {
                    y[idx(k)] = x[idx(k)] - lse;
                }
            }
        }
        let saved = y.clone();
        Ok(Tensor::from_op("log_softmax", y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; saved.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * n + k) * inner + i;
                    let gs: f64 = (0..n).map(|k| g[idx(k)]).sum();
                    for k in 0..n {
                        gx[idx(k)] = g[idx(k)] - saved[idx(k)].exp() * gs;
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}
