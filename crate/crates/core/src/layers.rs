//! Parameterized building blocks shared by every network.

use std::cell::RefCell;

use rand::Rng;

use crate::error::Result;
use crate::norms::{power_iteration_step, spectral_normalize, SnState};
use crate::tensor::{no_grad, Param, ParamSet, Tensor};

/// He-normal initialization for a fan-in.
fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

/// Cap on the power-iteration steps run when the state is created.
pub const SN_INIT_STEPS: usize = 1000;

/// Persistent power-iteration state attached to one weight.
pub struct SpectralNorm {
    state: RefCell<SnState>,
}

impl SpectralNorm {
    pub fn new<R: Rng + ?Sized>(weight: &Param, rng: &mut R) -> Result<SpectralNorm> {
        let shape = weight.shape();
        let rows = shape[0];
        let cols = weight.numel() / rows;
        let mut state = SnState::random(weight.name(), rows, cols, rng);
        let w = weight.tensor();
        for _ in 0..SN_INIT_STEPS {
            let next = power_iteration_step(&w, &state)?;
            let settled = (next.sigma - state.sigma).abs() <= 1e-14 * next.sigma.abs();
            state = next;
            if settled {
                break;
            }
        }
        Ok(SpectralNorm {
            state: RefCell::new(state),
        })
    }

    pub fn state(&self) -> SnState {
        self.state.borrow().clone()
    }

    pub fn set_state(&self, state: SnState) {
        *self.state.borrow_mut() = state;
    }

    /// One power-iteration step against the current weight.
    pub fn update(&self, weight: &Param) -> Result<()> {
        let next = no_grad(|| power_iteration_step(&weight.tensor(), &self.state.borrow()))?;
        *self.state.borrow_mut() = next;
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.state.borrow().sigma
    }
}

pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub stride: usize,
    pub pad: usize,
    spectral: Option<SpectralNorm>,
}

impl Conv2d {
    /// `k×k` convolution with "same" padding and He-normal weights.
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, k: usize, bias: bool, rng: &mut R) -> Conv2d {
        let w = Tensor::randn(&[cout, cin, k, k], he_std(cin * k * k), rng);
        Conv2d::from_weight(name, w, bias)
    }

    pub fn zeros(name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> Conv2d {
        Conv2d::from_weight(name, Tensor::zeros(&[cout, cin, k, k]), bias)
    }

    pub fn from_weight(name: &str, weight: Tensor, bias: bool) -> Conv2d {
        let cout = weight.dim(0);
        let k = weight.dim(2);
        Conv2d {
            weight: Param::new(format!("{name}.weight"), weight, true),
            bias: bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros(&[1, cout, 1, 1]), true)),
            stride: 1,
            pad: k / 2,
            spectral: None,
        }
    }

    pub fn frozen(mut self) -> Conv2d {
        self.weight = Param::new(self.weight.name().to_string(), self.weight.tensor(), false);
        self.bias = self
            .bias
            .map(|b| Param::new(b.name().to_string(), b.tensor(), false));
        self
    }

    pub fn with_spectral_norm<R: Rng + ?Sized>(mut self, rng: &mut R) -> Result<Conv2d> {
        self.spectral = Some(SpectralNorm::new(&self.weight, rng)?);
        Ok(self)
    }

    pub fn spectral(&self) -> Option<&SpectralNorm> {
        self.spectral.as_ref()
    }

    /// The weight actually applied: `W/σ` under spectral normalization.
    pub fn effective_weight(&self) -> Result<Tensor> {
        match &self.spectral {
            Some(sn) => spectral_normalize(&self.weight.tensor(), &sn.state.borrow()),
            None => Ok(self.weight.tensor()),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.effective_weight()?, self.stride, self.pad)?;
        match &self.bias {
            Some(b) => y.add(&b.tensor()),
            None => Ok(y),
        }
    }

    pub fn update_spectral(&self) -> Result<()> {
        if let Some(sn) = &self.spectral {
            sn.update(&self.weight)?;
        }
        Ok(())
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        set.push(self.weight.clone())?;
        if let Some(b) = &self.bias {
            set.push(b.clone())?;
        }
        Ok(())
    }
}

/// Affine map over the last axis: `x·W + b` with `W: [in,out]`.
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(name: &str, din: usize, dout: usize, rng: &mut R) -> Linear {
        let w = Tensor::randn(&[din, dout], (1.0 / din as f64).sqrt(), rng);
        Linear::from_weight(name, w)
    }

    pub fn from_weight(name: &str, weight: Tensor) -> Linear {
        let dout = weight.dim(1);
        Linear {
            weight: Param::new(format!("{name}.weight"), weight, true),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[dout]), true),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let din = self.weight.shape()[0];
        let lead: Vec<usize> = x.shape()[..x.rank() - 1].to_vec();
        let rows = x.numel() / din;
        let y = x.reshape(&[rows, din])?.matmul(&self.weight.tensor())?.add(&self.bias.tensor())?;
        let mut shape = lead;
        shape.push(self.weight.shape()[1]);
        y.reshape(&shape)
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        set.push(self.weight.clone())?;
        set.push(self.bias.clone())
    }
}
