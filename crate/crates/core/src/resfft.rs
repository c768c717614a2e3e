//! Residual block with a parallel frequency-domain stream.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fourier::{rfft2, spatial_from_spectrum, spectrum_channels};
use crate::layers::Conv2d;
use crate::tensor::{ParamSet, Tensor};

/// `x + conv3(relu(conv3(x))) + irfft(conv1(relu(conv1(rfft(x)))))`.
///
/// The spectrum enters the pointwise convolutions as `2C` real channels.
/// With `use_fft` off the block is a plain residual block.
pub struct ResFftBlock {
    pub spatial1: Conv2d,
    pub spatial2: Conv2d,
    pub freq1: Conv2d,
    pub freq2: Conv2d,
    pub use_fft: bool,
}

impl ResFftBlock {
    /// The output frequency convolution starts at zero, so the frequency
    /// stream is initially silent.
    pub fn new<R: Rng + ?Sized>(name: &str, channels: usize, use_fft: bool, rng: &mut R) -> ResFftBlock {
        let c = channels;
        ResFftBlock {
            spatial1: Conv2d::new(&format!("{name}.spatial1"), c, c, 3, true, rng),
            spatial2: Conv2d::new(&format!("{name}.spatial2"), c, c, 3, true, rng),
            freq1: Conv2d::new(&format!("{name}.freq1"), 2 * c, 2 * c, 1, true, rng),
            freq2: Conv2d::zeros(&format!("{name}.freq2"), 2 * c, 2 * c, 1, true),
            use_fft,
        }
    }

    /// Every weight and bias zero.
    pub fn zeros(name: &str, channels: usize, use_fft: bool) -> ResFftBlock {
        let c = channels;
        ResFftBlock {
            spatial1: Conv2d::zeros(&format!("{name}.spatial1"), c, c, 3, true),
            spatial2: Conv2d::zeros(&format!("{name}.spatial2"), c, c, 3, true),
            freq1: Conv2d::zeros(&format!("{name}.freq1"), 2 * c, 2 * c, 1, true),
            freq2: Conv2d::zeros(&format!("{name}.freq2"), 2 * c, 2 * c, 1, true),
            use_fft,
        }
    }

    pub fn channels(&self) -> usize {
        self.spatial1.weight.shape()[0]
    }

    pub fn spatial_stream(&self, x: &Tensor) -> Result<Tensor> {
        self.spatial2.forward(&self.spatial1.forward(x)?.relu())
    }

    pub fn frequency_stream(&self, x: &Tensor) -> Result<Tensor> {
        let z = spectrum_channels(x)?;
        let y = self.freq2.forward(&self.freq1.forward(&z)?.relu())?;
        spatial_from_spectrum(&y, x.dim(3))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 || x.dim(1) != self.channels() {
            return Err(Error::invalid_shape(
                "res_fft_block",
                x.shape(),
                format!("expected [B,{},H,W]", self.channels()),
            ));
        }
        let out = x.add(&self.spatial_stream(x)?)?;
        if self.use_fft {
            out.add(&self.frequency_stream(x)?)
        } else {
            Ok(out)
        }
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        self.spatial1.collect(set)?;
        self.spatial2.collect(set)?;
        if self.use_fft {
            self.freq1.collect(set)?;
            self.freq2.collect(set)?;
        }
        Ok(())
    }
}

/// Gain of the block at spatial frequency `(ky, kx)`: the channel-pooled
/// spectral magnitude of the output over that of a unit cosine input.
pub fn frequency_response_probe(
    block: &ResFftBlock,
    ky: usize,
    kx: usize,
    height: usize,
    width: usize,
) -> Result<f64> {
    if ky >= height || kx >= width {
        return Err(Error::InvalidArgument(format!(
            "frequency ({ky},{kx}) outside {height}x{width}"
        )));
    }
    let c = block.channels();
    let plane = height * width;
    let x = Tensor::from_fn(&[1, c, height, width], |i| {
        let p = i % plane;
        let (y, xx) = ((p / width) as f64, (p % width) as f64);
        let phase = 2.0 * std::f64::consts::PI * (ky as f64 * y / height as f64 + kx as f64 * xx / width as f64);
        phase.cos()
    });
    let y = crate::no_grad(|| block.forward(&x))?;
    let (sx, sy) = (rfft2(&x)?, rfft2(&y)?);
    let energy = |g: &crate::fourier::ComplexGrid| -> f64 {
        (0..c).map(|ch| g.full_bin(0, ch, ky, kx).norm_sqr()).sum::<f64>()
    };
    Ok((energy(&sy) / energy(&sx)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_param_gradients;
    use crate::tensor::Param;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_1x1(conv: &Conv2d, scale: f64, bias: f64) {
        let n = conv.weight.shape()[0];
        conv.weight
            .set_data((0..n * n).map(|i| if i % (n + 1) == 0 { scale } else { 0.0 }).collect())
            .unwrap();
        conv.bias.as_ref().unwrap().set_data(vec![bias; n]).unwrap();
    }

    #[test]
    fn zero_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::randn(&[2, 3, 4, 8], 1.0, &mut rng);
        let y = ResFftBlock::zeros("b", 3, true).forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_frequency_stream_doubles_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[2, 2, 8, 4], 1.0, &mut rng);
        let block = ResFftBlock::zeros("b", 2, true);
        // relu(z + s) − s == z once the shift exceeds every spectral value
        let shift = 1e3;
        identity_1x1(&block.freq1, 1.0, shift);
        identity_1x1(&block.freq2, 1.0, -shift);
        let y = block.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 2.0 * b).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_of_all_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let block = ResFftBlock::new("b", 2, true, &mut rng);
        block
            .freq2
            .weight
            .set_data(Tensor::randn(&[4, 4, 1, 1], 0.5, &mut rng).to_vec())
            .unwrap();
        let x = Tensor::randn(&[2, 2, 4, 4], 1.0, &mut rng);
        let wts = Tensor::randn(&[2, 2, 4, 4], 1.0, &mut rng);
        let mut set = ParamSet::new();
        block.collect(&mut set).unwrap();
        let params: Vec<Param> = set.iter().cloned().collect();
        assert_eq!(params.len(), 8);
        let r = check_param_gradients(&params, usize::MAX, || block.forward(&x)?.mul(&wts).map(|t| t.sum())).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn without_fft_matches_spatial_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let with = ResFftBlock::new("b", 2, true, &mut rng.clone());
        let without = ResFftBlock::new("b", 2, false, &mut rng);
        assert_eq!(with.spatial1.weight.tensor().data(), without.spatial1.weight.tensor().data());
        let x = Tensor::randn(&[1, 2, 4, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let expect = x.add(&without.spatial_stream(&x).unwrap()).unwrap();
        assert_eq!(without.forward(&x).unwrap().data(), expect.data());
        let mut set = ParamSet::new();
        without.collect(&mut set).unwrap();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn zero_block_has_unit_gain() {
        let block = ResFftBlock::zeros("b", 2, true);
        for (ky, kx) in [(0, 0), (1, 0), (3, 5), (4, 4)] {
            let g = frequency_response_probe(&block, ky, kx, 8, 8).unwrap();
            assert!((g - 1.0).abs() < 1e-12, "{ky},{kx}: {g}");
        }
    }

    #[test]
    fn dc_gain_closed_form() {
        let block = ResFftBlock::zeros("b", 1, true);
        let (a, b) = (0.5, 3.0);
        identity_1x1(&block.freq1, a, 0.0);
        identity_1x1(&block.freq2, b, 0.0);
        let g = frequency_response_probe(&block, 0, 0, 8, 8).unwrap();
        assert!((g - (1.0 + a * b)).abs() < 1e-9, "{g}");
    }

    #[test]
    fn random_block_gain_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = ResFftBlock::new("b", 3, true, &mut rng);
        for ky in 0..8 {
            for kx in 0..8 {
                assert!(frequency_response_probe(&block, ky, kx, 8, 8).unwrap().is_finite());
            }
        }
    }
}
