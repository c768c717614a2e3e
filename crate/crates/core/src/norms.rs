//! Spectral normalization, per-region pooling and the two conditional
//! normalizations of the image generator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::layers::{Conv2d, Linear};
use crate::maps::{ParsingMap, NUM_LABELS};
use crate::tensor::{ParamSet, Tensor};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Power-iteration state for one weight viewed as a `rows × cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SnState {
    pub owner: String,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: f64,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalized(mut x: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm2(&x);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= n);
    Some(x)
}

impl SnState {
    pub fn random<R: Rng + ?Sized>(owner: &str, rows: usize, cols: usize, rng: &mut R) -> SnState {
        let mut draw = |n: usize| loop {
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
            if let Some(x) = normalized(x) {
                break x;
            }
        };
        let u = draw(rows);
        let v = draw(cols);
        SnState {
            owner: owner.to_string(),
            u,
            v,
            sigma: 0.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.u.len()
    }

    pub fn cols(&self) -> usize {
        self.v.len()
    }
}

fn matrix_dims(w: &Tensor, state: &SnState) -> Result<(usize, usize)> {
    let rows = w.dim(0);
    let cols = w.numel() / rows;
    if rows != state.rows() || cols != state.cols() {
        return Err(Error::shape("power_iteration", &[rows, cols], &[state.rows(), state.cols()]));
    }
    Ok((rows, cols))
}

/// One step `v ← Wᵀu/‖·‖, u ← Wv/‖·‖, σ ← uᵀWv`. A zero matrix leaves the
/// vectors untouched and reports `σ = 0`.
pub fn power_iteration_step(w: &Tensor, state: &SnState) -> Result<SnState> {
    let (rows, cols) = matrix_dims(w, state)?;
    let a = w.data();
    let mut wtu = vec![0.0; cols];
    for (i, &ui) in state.u.iter().enumerate() {
        for (j, t) in wtu.iter_mut().enumerate() {
            *t += a[i * cols + j] * ui;
        }
    }
    let zero = SnState {
        sigma: 0.0,
        ..state.clone()
    };
    let Some(v) = normalized(wtu) else { return Ok(zero) };
    let wv: Vec<f64> = (0..rows)
        .map(|i| a[i * cols..(i + 1) * cols].iter().zip(&v).map(|(x, y)| x * y).sum())
        .collect();
    let Some(u) = normalized(wv.clone()) else { return Ok(zero) };
    let sigma = u.iter().zip(&wv).map(|(x, y)| x * y).sum();
    Ok(SnState {
        owner: state.owner.clone(),
        u,
        v,
        sigma,
    })
}

/// `W/σ` with σ held constant in backward. A zero σ returns `W` unchanged.
pub fn spectral_normalize(w: &Tensor, state: &SnState) -> Result<Tensor> {
    matrix_dims(w, state)?;
    if state.sigma <= 0.0 {
        log::warn!("spectral norm of {} is zero; weight left unnormalized", state.owner);
        return Ok(w.clone());
    }
    Ok(w.mul_scalar(1.0 / state.sigma))
}

/// Constant `[B,8,HW]` averaging weights: each row is the normalized mask of
/// one label, or uniform weights when that label is absent.
fn pooling_weights(map: &ParsingMap) -> Result<Tensor> {
    let (b, plane) = (map.batch(), map.height() * map.width());
    let mut data = vec![0.0; b * NUM_LABELS * plane];
    for bi in 0..b {
        let counts = map.histogram(bi);
        let labels = &map.labels()[bi * plane..(bi + 1) * plane];
        for (j, &count) in counts.iter().enumerate() {
            let row = &mut data[(bi * NUM_LABELS + j) * plane..(bi * NUM_LABELS + j + 1) * plane];
            if count == 0 {
                row.fill(1.0 / plane as f64);
            } else {
                let w = 1.0 / count as f64;
                for (r, &l) in row.iter_mut().zip(labels) {
                    if l as usize == j {
                        *r = w;
                    }
                }
            }
        }
    }
    Tensor::new(data, &[b, NUM_LABELS, plane])
}

fn check_extent(op: &'static str, f: &Tensor, map: &ParsingMap) -> Result<()> {
    let s = f.shape();
    if s.len() != 4 || s[0] != map.batch() || s[2] != map.height() || s[3] != map.width() {
        return Err(Error::shape(op, s, &[map.batch(), 0, map.height(), map.width()]));
    }
    Ok(())
}

/// Average of `F` over the pixels labelled `j`, falling back to the global
/// spatial average when the region is empty. Returns `[B,C]`.
pub fn per_region_pool(f: &Tensor, map: &ParsingMap, j: usize) -> Result<Tensor> {
    if j >= NUM_LABELS {
        return Err(Error::LabelOutOfRange(j));
    }
    let styles = RegionStyle::extract(f, map)?;
    let c = f.dim(1);
    styles.tensor().narrow(1, j, 1)?.reshape(&[f.dim(0), c])
}

/// Pooled style vectors for all eight labels, `[B,8,C]`.
#[derive(Clone)]
pub struct RegionStyle {
    tensor: Tensor,
}

impl RegionStyle {
    pub fn extract(f: &Tensor, map: &ParsingMap) -> Result<RegionStyle> {
        check_extent("per_region_pool", f, map)?;
        let (b, c) = (f.dim(0), f.dim(1));
        let plane = map.height() * map.width();
        let flat = f.reshape(&[b, c, plane])?.transpose()?;
        let tensor = pooling_weights(map)?.bmm(&flat)?;
        Ok(RegionStyle { tensor })
    }

    pub fn from_tensor(tensor: Tensor) -> Result<RegionStyle> {
        if tensor.rank() != 3 || tensor.dim(1) != NUM_LABELS {
            return Err(Error::invalid_shape("region style", tensor.shape(), "expected [B,8,C]"));
        }
        Ok(RegionStyle { tensor })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim(2)
    }
}

impl Tensor {
    /// Per-sample, per-channel normalization over the spatial axes.
    pub fn instance_norm(&self, eps: f64) -> Result<Tensor> {
        if self.rank() != 4 {
            return Err(Error::invalid_shape("instance_norm", self.shape(), "expected [B,C,H,W]"));
        }
        let plane = self.dim(2) * self.dim(3);
        let groups = self.dim(0) * self.dim(1);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; groups];
        for g in 0..groups {
            let xs = &x[g * plane..(g + 1) * plane];
            let mean = xs.iter().sum::<f64>() / plane as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[g] = s;
            for (o, v) in y[g * plane..(g + 1) * plane].iter_mut().zip(xs) {
                *o = (v - mean) * s;
            }
        }
        let saved = y.clone();
        Ok(Tensor::from_op("instance_norm", y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for k in 0..groups {
                let r = k * plane..(k + 1) * plane;
                let (gs, ys) = (&g[r.clone()], &saved[r.clone()]);
                let mg = gs.iter().sum::<f64>() / plane as f64;
                let mgy = gs.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / plane as f64;
                for ((o, &gv), &yv) in gx[r].iter_mut().zip(gs).zip(ys) {
                    *o = inv_std[k] * (gv - mg - yv * mgy);
                }
            }
            vec![Some(gx)]
        }))
    }
}

/// Instance norm modulated per pixel by the projected style of the pixel's
/// target label: `IN(F)·(1+γ) + β`.
pub struct RegionNorm {
    pub gamma: Linear,
    pub beta: Linear,
}

impl RegionNorm {
    pub fn new<R: Rng + ?Sized>(name: &str, style_dim: usize, channels: usize, rng: &mut R) -> RegionNorm {
        RegionNorm {
            gamma: Linear::new(&format!("{name}.gamma"), style_dim, channels, rng),
            beta: Linear::new(&format!("{name}.beta"), style_dim, channels, rng),
        }
    }

    pub fn forward(&self, f: &Tensor, target: &ParsingMap, styles: &RegionStyle) -> Result<Tensor> {
        per_region_normalize(f, target, styles, &self.gamma, &self.beta)
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        self.gamma.collect(set)?;
        self.beta.collect(set)
    }
}

pub fn per_region_normalize(
    f: &Tensor,
    target: &ParsingMap,
    styles: &RegionStyle,
    gamma: &Linear,
    beta: &Linear,
) -> Result<Tensor> {
    check_extent("per_region_normalize", f, target)?;
    let (b, c, h, w) = (f.dim(0), f.dim(1), f.dim(2), f.dim(3));
    if styles.tensor().dim(0) != b {
        return Err(Error::shape("per_region_normalize", f.shape(), styles.tensor().shape()));
    }
    let onehot = target.one_hot().reshape(&[b, NUM_LABELS, h * w])?;
    let scatter = |proj: &Linear| -> Result<Tensor> {
        let per_label = proj.forward(styles.tensor())?;
        per_label.transpose()?.bmm(&onehot)?.reshape(&[b, c, h, w])
    };
    let g = scatter(gamma)?;
    let bt = scatter(beta)?;
    f.instance_norm(INSTANCE_NORM_EPS)?.mul(&g.add_scalar(1.0))?.add(&bt)
}

/// Instance norm modulated by scale and shift maps predicted from a
/// source-side feature map: `IN(F)·(1+conv(E)) + conv(E)`.
pub struct SpatialNorm {
    pub gamma: Conv2d,
    pub beta: Conv2d,
}

impl SpatialNorm {
    pub fn new<R: Rng + ?Sized>(name: &str, cond: usize, channels: usize, rng: &mut R) -> SpatialNorm {
        let mut gamma = Conv2d::new(&format!("{name}.gamma"), cond, channels, 3, true, rng);
        let mut beta = Conv2d::new(&format!("{name}.beta"), cond, channels, 3, true, rng);
        for conv in [&mut gamma, &mut beta] {
            let w = conv.weight.tensor().mul_scalar(0.1);
            conv.weight.set_data(w.to_vec()).expect("same shape");
        }
        SpatialNorm { gamma, beta }
    }

    pub fn forward(&self, f: &Tensor, source: &Tensor) -> Result<Tensor> {
        spatial_aware_normalize(f, source, &self.gamma, &self.beta)
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        self.gamma.collect(set)?;
        self.beta.collect(set)
    }
}

pub fn spatial_aware_normalize(f: &Tensor, source: &Tensor, gamma: &Conv2d, beta: &Conv2d) -> Result<Tensor> {
    let (fs, es) = (f.shape(), source.shape());
    if es.len() != 4 || fs.len() != 4 || fs[0] != es[0] || fs[2..] != es[2..] {
        return Err(Error::shape("spatial_aware_normalize", fs, es));
    }
    let g = gamma.forward(source)?;
    let bt = beta.forward(source)?;
    f.instance_norm(INSTANCE_NORM_EPS)?.mul(&g.add_scalar(1.0))?.add(&bt)
}
