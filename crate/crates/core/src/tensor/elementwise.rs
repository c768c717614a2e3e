use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Numpy-style broadcast of two shapes (right-aligned, size-1 expands).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every linear index of `out`, the linear index into a tensor of shape
/// `src` broadcast to `out`.
pub(crate) fn broadcast_index_map(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for i in (0..src.len()).rev() {
        if src[i] != 1 {
            strides[i + offset] = s;
        }
        s *= src[i];
    }
    let n = numel(out);
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut lin = 0usize;
    for _ in 0..n {
        map.push(lin);
        for d in (0..rank).rev() {
            idx[d] += 1;
            lin += strides[d];
            if idx[d] < out[d] {
                break;
            }
            lin -= strides[d] * out[d];
            idx[d] = 0;
        }
    }
    map
}

enum Layout {
    Same,
    Mapped(Vec<usize>, Vec<usize>),
}

fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: fn(f64, f64) -> f64,
    dfa: fn(f64, f64) -> f64,
    dfb: fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::shape(op, a.shape(), b.shape()))?;
    let layout = if a.shape() == b.shape() {
        Layout::Same
    } else {
        Layout::Mapped(
            broadcast_index_map(a.shape(), &out_shape),
            broadcast_index_map(b.shape(), &out_shape),
        )
    };
    let (ad, bd) = (a.data(), b.data());
    let data: Vec<f64> = match &layout {
        Layout::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Layout::Mapped(ma, mb) => ma.iter().zip(mb).map(|(&i, &j)| f(ad[i], bd[j])).collect(),
    };
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(op, data, out_shape, vec![a.clone(), b.clone()], move |g, needs| {
        let (ad, bd) = (ac.data(), bc.data());
        let mut ga = needs[0].then(|| vec![0.0; ad.len()]);
        let mut gb = needs[1].then(|| vec![0.0; bd.len()]);
        match &layout {
            Layout::Same => {
                for k in 0..g.len() {
                    if let Some(ga) = ga.as_mut() {
                        ga[k] = g[k] * dfa(ad[k], bd[k]);
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[k] = g[k] * dfb(ad[k], bd[k]);
                    }
                }
            }
            Layout::Mapped(ma, mb) => {
                for k in 0..g.len() {
                    let (i, j) = (ma[k], mb[k]);
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += g[k] * dfa(ad[i], bd[j]);
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] += g[k] * dfb(ad[i], bd[j]);
                    }
                }
            }
        }
        vec![ga, gb]
    }))
}

/// `df(x, y)` receives the input and output element.
fn unary(op: &'static str, x: &Tensor, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64, keep_out: bool) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let saved_out = keep_out.then(|| data.clone());
    let xc = x.clone();
    Tensor::from_op(op, data, x.shape().to_vec(), vec![x.clone()], move |g, _| {
        let xd = xc.data();
        let gx = match &saved_out {
            Some(y) => g.iter().zip(xd).zip(y).map(|((&g, &x), &y)| g * df(x, y)).collect(),
            None => g.iter().zip(xd).map(|(&g, &x)| g * df(x, 0.0)).collect(),
        };
        vec![Some(gx)]
    })
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary("add", self, other, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary("sub", self, other, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary("mul", self, other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary("div", self, other, |a, b| a / b, |_, b| 1.0 / b, |a, b| -a / (b * b))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op("add_scalar", data, self.shape().to_vec(), vec![self.clone()], |g, _| {
            vec![Some(g.to_vec())]
        })
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op("mul_scalar", data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().map(|v| v * c).collect())]
        })
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    /// Gradient at exactly zero is zero.
    pub fn relu(&self) -> Tensor {
        unary("relu", self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 }, false)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let data = self.data().iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
        let xc = self.clone();
        Tensor::from_op("leaky_relu", data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let gx = g
                .iter()
                .zip(xc.data())
                .map(|(&g, &x)| if x > 0.0 { g } else { slope * g })
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn tanh(&self) -> Tensor {
        unary("tanh", self, f64::tanh, |_, y| 1.0 - y * y, true)
    }

    pub fn sigmoid(&self) -> Tensor {
        unary("sigmoid", self, |x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y), true)
    }

    pub fn exp(&self) -> Tensor {
        unary("exp", self, f64::exp, |_, y| y, true)
    }

    pub fn ln(&self) -> Tensor {
        unary("ln", self, f64::ln, |x, _| 1.0 / x, false)
    }

    pub fn sqrt(&self) -> Tensor {
        unary("sqrt", self, f64::sqrt, |_, y| 0.5 / y, true)
    }

    /// Subgradient 0 at 0.
    pub fn abs(&self) -> Tensor {
        unary(
            "abs",
            self,
            f64::abs,
            |x, _| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
            false,
        )
    }

    pub fn square(&self) -> Tensor {
        unary("square", self, |x| x * x, |x, _| 2.0 * x, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::new(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn add_pairs() {
        let r = t(&[1.0, 2.0], &[2]).add(&t(&[3.0, 4.0], &[2])).unwrap();
        assert_eq!(r.data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_by_zero_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let z = x.mul(&Tensor::zeros(&[3, 4])).unwrap();
        assert_eq!(z.shape(), &[3, 4]);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let err = t(&[1.0, 2.0], &[2]).add(&t(&[1.0, 2.0, 3.0], &[3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn broadcast_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::randn(&[2, 3, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[3, 1], 1.0, &mut rng);
        let out = a.mul(&b).unwrap().add(&b).unwrap().sub(&a).unwrap();
        assert_eq!(out.shape(), &[2, 3, 4]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    let av = a.data()[i * 12 + j * 4 + k];
                    let bv = b.data()[j];
                    let expect = av * bv + bv - av;
                    assert_eq!(out.data()[i * 12 + j * 4 + k], expect);
                }
            }
        }
    }

    #[test]
    fn relu_values_and_subgradient() {
        let x = t(&[-1.0, 2.0, 0.0], &[3]).requires_grad_();
        let y = x.relu();
        assert_eq!(y.data(), &[0.0, 2.0, 0.0]);
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(t(&[-3.0, -0.5], &[2]).relu().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn leaky_relu_slope() {
        let y = t(&[-1.0, 2.0], &[2]).leaky_relu(0.2);
        assert_eq!(y.data(), &[-0.2, 2.0]);
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::randn(&[2, 3], 1.0, &mut rng);
        let b = Tensor::rand_uniform(&[3], 0.5, 2.0, &mut rng);
        let report = check_gradients(&[a, b], |xs| {
            let (a, b) = (&xs[0], &xs[1]);
            let y = a.mul(b)?.add(&a.tanh())?.sub(&b.ln())?.div(b)?;
            let z = y.sigmoid().add(&a.square().exp().mul_scalar(0.1))?;
            Ok(z.add(&b.sqrt())?.abs().add(&a.leaky_relu(0.2))?.sum())
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    proptest::proptest! {
        #[test]
        fn add_and_mul_commute(v in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let n = v.len();
            let a = Tensor::new(v.clone(), &[n]).unwrap();
            let b = Tensor::new(v.iter().rev().copied().collect(), &[n]).unwrap();
            proptest::prop_assert_eq!(a.add(&b).unwrap().to_vec(), b.add(&a).unwrap().to_vec());
            proptest::prop_assert_eq!(a.mul(&b).unwrap().to_vec(), b.mul(&a).unwrap().to_vec());
        }
    }
}
