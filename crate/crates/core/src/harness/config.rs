//! Flat `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::{DiscriminatorObjective, LossWeights, SinkhornConfig};
use crate::networks::NetConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub image_size: usize,
    pub batch_size: usize,
    pub stage_iters: [usize; 3],
    pub lr_start: f64,
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub net: NetConfig,
    pub use_wasserstein: bool,
    pub disc_objective: DiscriminatorObjective,
    pub weights: LossWeights,
    pub sinkhorn: SinkhornConfig,
    pub seed: u64,
    pub featnet_seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many global iterations (0: final only).
    pub checkpoint_every: usize,
    /// Write a generated sample every this many stage-2/3 iterations (0: never).
    pub sample_every: usize,
    /// Stop after this many global iterations, saving a checkpoint (0: run all).
    pub stop_after: usize,
    /// Moving-average window of the convergence tracker.
    pub conv_window: usize,
    /// Smoothed-loss level counting as converged (0: not tracked).
    pub conv_threshold: f64,
    /// Use at most this many training pairs (0: all).
    pub max_train_pairs: usize,
    pub ablation_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            image_size: 64,
            batch_size: 8,
            stage_iters: [2000, 2000, 1000],
            lr_start: 1e-4,
            lr_end: 1e-6,
            beta1: 0.5,
            beta2: 0.999,
            net: NetConfig::default(),
            use_wasserstein: true,
            disc_objective: DiscriminatorObjective::Hinge,
            weights: LossWeights::default(),
            sinkhorn: SinkhornConfig::default(),
            seed: 0,
            featnet_seed: 1234,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 0,
            sample_every: 0,
            stop_after: 0,
            conv_window: 100,
            conv_threshold: 0.0,
            max_train_pairs: 0,
            ablation_seeds: vec![0, 1, 2],
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: n + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        let flag = |v: &str| parse_bool(v).ok_or_else(|| format!("{key}: expected true/false, got {v:?}"));
        match key {
            "image_size" => self.image_size = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "stage1_iters" => self.stage_iters[0] = num(key, value)?,
            "stage2_iters" => self.stage_iters[1] = num(key, value)?,
            "stage3_iters" => self.stage_iters[2] = num(key, value)?,
            "lr_start" => self.lr_start = num(key, value)?,
            "lr_end" => self.lr_end = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "base_width" => self.net.base_width = num(key, value)?,
            "joints" => self.net.joints = num(key, value)?,
            "parsing_blocks" => self.net.parsing_blocks = num(key, value)?,
            "image_blocks" => self.net.image_blocks = num(key, value)?,
            "disc_scales" => self.net.disc_scales = num(key, value)?,
            "use_fft" => self.net.use_fft = flag(value)?,
            "use_sn" => self.net.use_sn = flag(value)?,
            "use_wasserstein" => self.use_wasserstein = flag(value)?,
            "disc_objective" => {
                self.disc_objective = match value {
                    "hinge" => DiscriminatorObjective::Hinge,
                    "wgan" => DiscriminatorObjective::Wgan,
                    _ => return Err(format!("disc_objective: expected hinge or wgan, got {value:?}")),
                }
            }
            "lambda_parsing_l1" => self.weights.parsing_l1 = num(key, value)?,
            "lambda_cor" => self.weights.cor = num(key, value)?,
            "lambda_l1" => self.weights.l1 = num(key, value)?,
            "lambda_perc" => self.weights.perc = num(key, value)?,
            "lambda_style" => self.weights.style = num(key, value)?,
            "lambda_adv" => self.weights.adv = num(key, value)?,
            "sinkhorn_eps" => self.sinkhorn.eps = num(key, value)?,
            "sinkhorn_iters" => self.sinkhorn.max_iters = num(key, value)?,
            "sinkhorn_tol" => self.sinkhorn.tol = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "featnet_seed" => self.featnet_seed = num(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "sample_every" => self.sample_every = num(key, value)?,
            "stop_after" => self.stop_after = num(key, value)?,
            "conv_window" => self.conv_window = num(key, value)?,
            "conv_threshold" => self.conv_threshold = num(key, value)?,
            "max_train_pairs" => self.max_train_pairs = num(key, value)?,
            "ablation_seeds" => {
                self.ablation_seeds = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config { line: 0, msg: msg.into() });
        if !self.image_size.is_power_of_two() || self.image_size < 16 {
            return fail("image_size must be a power of two of at least 16");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.lr_end <= self.lr_start) || self.lr_end < 0.0 {
            return fail("need 0 <= lr_end <= lr_start");
        }
        if self.net.base_width == 0 || self.net.disc_scales == 0 {
            return fail("base_width and disc_scales must be positive");
        }
        if self.sinkhorn.eps <= 0.0 {
            return fail("sinkhorn_eps must be positive");
        }
        if self.conv_window == 0 {
            return fail("conv_window must be positive");
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let w = &self.weights;
        let objective = match self.disc_objective {
            DiscriminatorObjective::Hinge => "hinge",
            DiscriminatorObjective::Wgan => "wgan",
        };
        let seeds: Vec<String> = self.ablation_seeds.iter().map(u64::to_string).collect();
        let pairs = [
            ("image_size", self.image_size.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("stage1_iters", self.stage_iters[0].to_string()),
            ("stage2_iters", self.stage_iters[1].to_string()),
            ("stage3_iters", self.stage_iters[2].to_string()),
            ("lr_start", format!("{:e}", self.lr_start)),
            ("lr_end", format!("{:e}", self.lr_end)),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("base_width", self.net.base_width.to_string()),
            ("joints", self.net.joints.to_string()),
            ("parsing_blocks", self.net.parsing_blocks.to_string()),
            ("image_blocks", self.net.image_blocks.to_string()),
            ("disc_scales", self.net.disc_scales.to_string()),
            ("use_fft", self.net.use_fft.to_string()),
            ("use_sn", self.net.use_sn.to_string()),
            ("use_wasserstein", self.use_wasserstein.to_string()),
            ("disc_objective", objective.to_string()),
            ("lambda_parsing_l1", w.parsing_l1.to_string()),
            ("lambda_cor", w.cor.to_string()),
            ("lambda_l1", w.l1.to_string()),
            ("lambda_perc", w.perc.to_string()),
            ("lambda_style", w.style.to_string()),
            ("lambda_adv", w.adv.to_string()),
            ("sinkhorn_eps", self.sinkhorn.eps.to_string()),
            ("sinkhorn_iters", self.sinkhorn.max_iters.to_string()),
            ("sinkhorn_tol", format!("{:e}", self.sinkhorn.tol)),
            ("seed", self.seed.to_string()),
            ("featnet_seed", self.featnet_seed.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("sample_every", self.sample_every.to_string()),
            ("stop_after", self.stop_after.to_string()),
            ("conv_window", self.conv_window.to_string()),
            ("conv_threshold", self.conv_threshold.to_string()),
            ("max_train_pairs", self.max_train_pairs.to_string()),
            ("ablation_seeds", seeds.join(",")),
        ];
        let mut s = String::new();
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn total_iters(&self) -> usize {
        self.stage_iters.iter().sum()
    }
}
