//! Image-quality metrics for evaluation.

use crate::error::{Error, Result};
use crate::losses::FeatureNet;
use crate::tensor::{no_grad, Tensor};

pub const PSNR_CAP_DB: f64 = 100.0;

/// `10·log10(max²/MSE)`, capped for identical inputs.
pub fn psnr(a: &[f64], b: &[f64], max_val: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("psnr", &[a.len()], &[b.len()]));
    }
    if max_val <= 0.0 {
        return Err(Error::InvalidArgument(format!("psnr max_val {max_val} must be positive")));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (max_val * max_val / mse).log10()).min(PSNR_CAP_DB))
}

/// PSNR of sample `b` of two `[B,3,H,W]` tensors in `[−1,1]`, after mapping
/// to `[0,1]`.
pub fn image_psnr(a: &Tensor, b: &Tensor, sample: usize) -> Result<f64> {
    if a.shape() != b.shape() || a.rank() != 4 || sample >= a.dim(0) {
        return Err(Error::shape("image_psnr", a.shape(), b.shape()));
    }
    let n = a.numel() / a.dim(0);
    let unit = |t: &Tensor| -> Vec<f64> { t.data()[sample * n..(sample + 1) * n].iter().map(|v| (v + 1.0) / 2.0).collect() };
    psnr(&unit(a), &unit(b), 1.0)
}

/// Feature vectors divided by their channel norm at every position.
fn unit_normalize(f: &[f64], c: usize, plane: usize) -> Vec<f64> {
    let mut out = f.to_vec();
    for p in 0..plane {
        let n = (0..c).map(|k| f[k * plane + p].powi(2)).sum::<f64>().sqrt() + 1e-10;
        for k in 0..c {
            out[k * plane + p] /= n;
        }
    }
    out
}

/// Per-sample distance: the mean over FeatureNet taps of the spatially
/// averaged squared L2 distance between channel-normalized features.
pub fn perceptual_distance(net: &FeatureNet, a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    if a.shape() != b.shape() || a.rank() != 4 {
        return Err(Error::shape("perceptual_distance", a.shape(), b.shape()));
    }
    let (ta, tb) = no_grad(|| -> Result<_> { Ok((net.taps(&a.detach())?, net.taps(&b.detach())?)) })?;
    let batch = a.dim(0);
    let mut dist = vec![0.0; batch];
    for (fa, fb) in ta.iter().zip(&tb) {
        let (c, plane) = (fa.dim(1), fa.dim(2) * fa.dim(3));
        let per = c * plane;
        for (s, d) in dist.iter_mut().enumerate() {
            let na = unit_normalize(&fa.data()[s * per..(s + 1) * per], c, plane);
            let nb = unit_normalize(&fb.data()[s * per..(s + 1) * per], c, plane);
            let sq: f64 = na.iter().zip(&nb).map(|(x, y)| (x - y).powi(2)).sum();
            *d += sq / plane as f64 / ta.len() as f64;
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_closed_forms() {
        let a = vec![0.3; 10];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn perceptual_distance_symmetric_and_zero_on_equal() {
        let net = FeatureNet::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::rand_uniform(&[2, 3, 16, 16], -1.0, 1.0, &mut rng);
        let b = Tensor::rand_uniform(&[2, 3, 16, 16], -1.0, 1.0, &mut rng);
        assert_eq!(perceptual_distance(&net, &a, &a).unwrap(), vec![0.0, 0.0]);
        let ab = perceptual_distance(&net, &a, &b).unwrap();
        let ba = perceptual_distance(&net, &b, &a).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert!(*x > 0.0 && (x - y).abs() < 1e-12);
        }
    }
}
