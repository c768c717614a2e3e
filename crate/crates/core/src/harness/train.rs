//! Three-stage training: parsing generator alone, image generator against the
//! discriminator, then joint fine-tuning.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::optim::{cosine_lr, Adam};
use crate::error::{Error, Result};
use crate::imageio::RgbImage;
use crate::losses::{
    discriminator_loss, image_loss, parsing_loss, AdversarialTerm, FeatureNet, ImageLossInputs, Loss,
    LossBreakdown, SinkhornDiagnostics,
};
use crate::maps::ParsingMap;
use crate::networks::{Discriminator, ImageGenerator, ImageOutput, ParsingGenerator};
use crate::synthdata::{load_split, resolve_split, Batch, SamplePair};
use crate::tensor::{no_grad, ParamSet, Tensor};

pub const CSV_NAME: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// SplitMix64 finalizer over a seed and a stream tag.
pub(crate) fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Path of the configuration written next to a checkpoint.
pub fn config_sidecar(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

/// All networks of one run.
pub struct Models {
    pub parsing: ParsingGenerator,
    pub image: ImageGenerator,
    pub disc: Discriminator,
    pub features: FeatureNet,
}

impl Models {
    pub fn new(cfg: &RunConfig) -> Result<Models> {
        let rng = |tag| ChaCha8Rng::seed_from_u64(mix(cfg.seed, tag));
        Ok(Models {
            parsing: ParsingGenerator::new(&cfg.net, &mut rng(1)),
            image: ImageGenerator::new(&cfg.net, &mut rng(2)),
            disc: Discriminator::new(&cfg.net, &mut rng(3))?,
            features: FeatureNet::new(cfg.featnet_seed),
        })
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        self.parsing.collect(&mut set)?;
        self.image.collect(&mut set)?;
        self.disc.collect(&mut set)?;
        Ok(set)
    }

    pub fn store(&self, ck: &mut Checkpoint) -> Result<()> {
        ck.store_params(&self.params()?);
        ck.store_spectral(&self.disc.convs());
        Ok(())
    }

    pub fn restore(&self, ck: &Checkpoint) -> Result<()> {
        ck.restore_params(&self.params()?)?;
        ck.restore_spectral(&self.disc.convs())
    }

    /// Rebuilds the networks of a saved run from the checkpoint and its
    /// configuration sidecar.
    pub fn load(checkpoint: &Path) -> Result<(RunConfig, Models)> {
        if !checkpoint.is_file() {
            return Err(Error::Checkpoint(format!("{} does not exist", checkpoint.display())));
        }
        let cfg = RunConfig::load(&config_sidecar(checkpoint))?;
        let ck = Checkpoint::load(checkpoint)?;
        let models = Models::new(&cfg)?;
        models.restore(&ck)?;
        Ok((cfg, models))
    }

    /// Parsing logits for a batch, without recording a graph.
    pub fn parse(&self, batch: &Batch) -> Result<Tensor> {
        no_grad(|| {
            self.parsing
                .forward(&batch.source_pose, &batch.source_parsing, &batch.target_pose)
        })
    }

    /// Source image and pose to parsing map and generated image.
    pub fn infer(&self, batch: &Batch) -> Result<(ParsingMap, Tensor)> {
        no_grad(|| {
            let probs = self.parse(batch)?.softmax(1)?;
            let out = self.image.forward(
                &batch.source,
                &batch.source_parsing,
                &probs,
                &batch.source_pose,
                &batch.target_pose,
            )?;
            Ok((ParsingMap::from_scores(&probs)?, out.image))
        })
    }
}

/// Records a per-iteration loss and locates the first iteration at which its
/// trailing moving average drops below a threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTracker {
    pub window: usize,
    pub values: Vec<f64>,
}

impl ConvergenceTracker {
    pub fn new(window: usize) -> ConvergenceTracker {
        ConvergenceTracker {
            window: window.max(1),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    /// Element `i` averages values `i..i+window`.
    pub fn smoothed(&self) -> Vec<f64> {
        let w = self.window;
        if self.values.len() < w {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.values.len() - w + 1);
        let mut sum: f64 = self.values[..w].iter().sum();
        out.push(sum / w as f64);
        for i in w..self.values.len() {
            sum += self.values[i] - self.values[i - w];
            out.push(sum / w as f64);
        }
        out
    }

    pub fn min_smoothed(&self) -> Option<f64> {
        self.smoothed().into_iter().reduce(f64::min)
    }

    /// Number of recorded iterations until the smoothed loss first fell
    /// below `threshold`.
    pub fn first_hit(&self, threshold: f64) -> Option<usize> {
        self.smoothed()
            .iter()
            .position(|&s| s < threshold)
            .map(|i| i + self.window)
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub iterations: usize,
    pub checkpoint: PathBuf,
    pub csv: PathBuf,
    pub last: Option<LossBreakdown>,
    pub tracker: ConvergenceTracker,
    pub completed: bool,
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub models: Models,
    parsing_params: ParamSet,
    image_params: ParamSet,
    disc_params: ParamSet,
    opt_parsing: Adam,
    opt_image: Adam,
    opt_disc: Adam,
    /// Global iterations completed.
    pub iteration: usize,
    pub tracker: ConvergenceTracker,
    pub last_sinkhorn: Option<SinkhornDiagnostics>,
    pairs: Vec<SamplePair>,
}

impl Trainer {
    /// Loads the training split named by the configuration.
    pub fn new(cfg: RunConfig) -> Result<Trainer> {
        let dir = resolve_split(&cfg.data_dir, "train")?;
        let (_, pairs) = load_split(&dir)?;
        Trainer::with_pairs(cfg, pairs)
    }

    pub fn with_pairs(cfg: RunConfig, mut pairs: Vec<SamplePair>) -> Result<Trainer> {
        cfg.validate()?;
        if cfg.max_train_pairs > 0 {
            pairs.truncate(cfg.max_train_pairs);
        }
        if pairs.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        if let Some(p) = pairs.iter().find(|p| p.size() != cfg.image_size) {
            return Err(Error::Dataset(format!(
                "{} is {}px but image_size is {}",
                p.id,
                p.size(),
                cfg.image_size
            )));
        }
        let models = Models::new(&cfg)?;
        let (beta1, beta2) = (cfg.beta1, cfg.beta2);
        Ok(Trainer {
            parsing_params: models.parsing.params()?,
            image_params: models.image.params()?,
            disc_params: models.disc.params()?,
            models,
            opt_parsing: Adam::new(beta1, beta2),
            opt_image: Adam::new(beta1, beta2),
            opt_disc: Adam::new(beta1, beta2),
            iteration: 0,
            tracker: ConvergenceTracker::new(cfg.conv_window),
            last_sinkhorn: None,
            pairs,
            cfg,
        })
    }

    pub fn pairs(&self) -> &[SamplePair] {
        &self.pairs
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::default();
        self.models.store(&mut ck)?;
        ck.store_adam("parsing", &self.opt_parsing);
        ck.store_adam("image", &self.opt_image);
        ck.store_adam("disc", &self.opt_disc);
        ck.insert_scalar("train.iteration", self.iteration as f64);
        ck.insert("train.convergence", &[self.tracker.values.len()], self.tracker.values.clone());
        Ok(ck)
    }

    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        self.models.restore(ck)?;
        ck.restore_adam("parsing", &mut self.opt_parsing)?;
        ck.restore_adam("image", &mut self.opt_image)?;
        ck.restore_adam("disc", &mut self.opt_disc)?;
        self.iteration = ck.scalar("train.iteration")? as usize;
        self.tracker.values = ck.get("train.convergence")?.data.clone();
        Ok(())
    }

    /// Writes the checkpoint and its configuration sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint()?.save(path)?;
        let side = config_sidecar(path);
        fs::write(&side, self.cfg.to_text()).map_err(|e| Error::io(&side, e))
    }

    pub fn resume_from(&mut self, path: &Path) -> Result<()> {
        self.restore(&Checkpoint::load(path)?)
    }

    /// Stage index, iteration within the stage and stage length.
    fn locate(&self, global: usize) -> (usize, usize, usize) {
        let mut start = 0;
        for (s, &len) in self.cfg.stage_iters.iter().enumerate() {
            if global < start + len {
                return (s, global - start, len);
            }
            start += len;
        }
        unreachable!("iteration {global} past the schedule")
    }

    fn sample_batch(&self, global: usize) -> Result<Batch> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(self.cfg.seed, 100), global as u64));
        let picks: Vec<&SamplePair> = (0..self.cfg.batch_size)
            .map(|_| &self.pairs[rng.random_range(0..self.pairs.len())])
            .collect();
        Batch::from_pairs(&picks)
    }

    fn check(&self, loss: &Loss) -> Result<()> {
        if loss.parts.is_finite() && loss.total.item().is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                report: loss.parts.report(),
            })
        }
    }

    fn disc_step(&mut self, batch: &Batch, fake: &Tensor, cond: &Tensor, lr: f64) -> Result<()> {
        self.disc_params.zero_grad();
        let d = &self.models.disc;
        d.update_spectral()?;
        let real = d.forward(&batch.target, cond)?;
        let fake = d.forward(&fake.detach(), cond)?;
        let loss = discriminator_loss(&real.scores, &fake.scores, self.cfg.disc_objective)?;
        if !loss.item().is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                report: format!("discriminator={}", loss.item()),
            });
        }
        loss.backward()?;
        self.opt_disc.step(&self.disc_params, lr)
    }

    fn generator_loss(&mut self, batch: &Batch, out: &ImageOutput, cond: &Tensor) -> Result<Loss> {
        let d = &self.models.disc;
        let fake = d.forward(&out.image, cond)?;
        let real = if self.cfg.use_wasserstein {
            Some(no_grad(|| d.forward(&batch.target, cond))?.embedding.detach())
        } else {
            None
        };
        let adversarial = match &real {
            Some(real) => AdversarialTerm::Sinkhorn {
                real,
                fake: &fake.embedding,
                config: self.cfg.sinkhorn,
            },
            None => AdversarialTerm::Hinge {
                fake_scores: &fake.scores,
            },
        };
        let inputs = ImageLossInputs {
            generated: &out.image,
            target: &batch.target,
            features: &out.features,
            adversarial,
        };
        let (loss, diag) = image_loss(&self.models.features, inputs, self.cfg.weights)?;
        self.last_sinkhorn = diag;
        Ok(loss)
    }

    fn write_sample(&self, image: &Tensor) -> Result<()> {
        let dir = self.cfg.out_dir.join("samples");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        RgbImage::from_tensor(&image.detach(), 0)?.write_ppm(&dir.join(format!("iter_{:06}.ppm", self.iteration + 1)))
    }

    /// Runs one global iteration and returns its loss components.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let (stage, local, len) = self.locate(self.iteration);
        let lr = cosine_lr(local, len.saturating_sub(1), self.cfg.lr_start, self.cfg.lr_end);
        let batch = self.sample_batch(self.iteration)?;
        let weights = self.cfg.weights;
        let parts = match stage {
            0 => {
                let logits = self
                    .models
                    .parsing
                    .forward(&batch.source_pose, &batch.source_parsing, &batch.target_pose)?;
                let loss = parsing_loss(&logits, &batch.target_parsing, weights)?;
                self.check(&loss)?;
                loss.total.backward()?;
                self.opt_parsing.step(&self.parsing_params, lr)?;
                loss.parts
            }
            _ => {
                let cond = batch.target_parsing.one_hot();
                let logits = if stage == 2 {
                    Some(
                        self.models
                            .parsing
                            .forward(&batch.source_pose, &batch.source_parsing, &batch.target_pose)?,
                    )
                } else {
                    None
                };
                let parsing_in = match &logits {
                    Some(l) => l.softmax(1)?,
                    None => cond.clone(),
                };
                let out = self.models.image.forward(
                    &batch.source,
                    &batch.source_parsing,
                    &parsing_in,
                    &batch.source_pose,
                    &batch.target_pose,
                )?;
                self.disc_step(&batch, &out.image, &cond, lr)?;
                let image = self.generator_loss(&batch, &out, &cond)?;
                let loss = match &logits {
                    Some(l) => {
                        let p = parsing_loss(l, &batch.target_parsing, weights)?;
                        Loss {
                            total: p.total.add(&image.total)?,
                            parts: p.parts.combine(&image.parts),
                        }
                    }
                    None => image,
                };
                self.check(&loss)?;
                loss.total.backward()?;
                if stage == 2 {
                    self.opt_parsing.step(&self.parsing_params, lr)?;
                }
                self.opt_image.step(&self.image_params, lr)?;
                self.disc_params.zero_grad();
                if stage == 1 {
                    self.tracker.push(loss.parts.reconstruction_total());
                }
                if self.cfg.sample_every > 0 && (local + 1) % self.cfg.sample_every == 0 {
                    self.write_sample(&out.image)?;
                }
                loss.parts
            }
        };
        self.iteration += 1;
        Ok(parts)
    }

    /// Keeps the header and rows before the current iteration, so a resumed
    /// run appends exactly where the checkpoint was taken.
    fn open_csv(&self, path: &Path) -> Result<BufWriter<File>> {
        let mut kept = format!("{}\n", LossBreakdown::CSV_HEADER);
        if self.iteration > 0 && path.is_file() {
            let old = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in old.lines().skip(1) {
                let iter = line.split(',').next().and_then(|v| v.parse::<usize>().ok());
                if iter.is_some_and(|i| i < self.iteration) {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
        }
        fs::write(path, kept).map_err(|e| Error::io(path, e))?;
        let file = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(BufWriter::new(file))
    }

    /// Trains to the end of the schedule, or to `stop_after` when it lies
    /// ahead of the current iteration.
    pub fn run(&mut self) -> Result<TrainSummary> {
        let out = self.cfg.out_dir.clone();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let csv_path = out.join(CSV_NAME);
        let mut csv = self.open_csv(&csv_path)?;
        let total = self.cfg.total_iters();
        let stop = if self.cfg.stop_after > self.iteration {
            self.cfg.stop_after.min(total)
        } else {
            total
        };
        let mut last = None;
        while self.iteration < stop {
            let g = self.iteration;
            let parts = match self.step() {
                Ok(p) => p,
                Err(e) => {
                    csv.flush().map_err(|e| Error::io(&csv_path, e))?;
                    return Err(e);
                }
            };
            writeln!(csv, "{}", parts.csv_row(g)).map_err(|e| Error::io(&csv_path, e))?;
            if g % 50 == 0 {
                info!("iter {g}: {}", parts.report());
            }
            last = Some(parts);
            if self.cfg.checkpoint_every > 0 && self.iteration % self.cfg.checkpoint_every == 0 && self.iteration < total {
                self.save(&out.join(format!("ckpt_{:06}.ckpt", self.iteration)))?;
            }
        }
        csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        let completed = self.iteration >= total;
        let checkpoint = if completed {
            out.join(FINAL_CHECKPOINT)
        } else {
            warn!("stopping at iteration {} of {total}", self.iteration);
            out.join(format!("ckpt_{:06}.ckpt", self.iteration))
        };
        self.save(&checkpoint)?;
        Ok(TrainSummary {
            iterations: self.iteration,
            checkpoint,
            csv: csv_path,
            last,
            tracker: self.tracker.clone(),
            completed,
        })
    }
}

/// Trains from scratch, or from `resume` when given.
pub fn train(cfg: RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    let mut trainer = Trainer::new(cfg)?;
    if let Some(path) = resume {
        trainer.resume_from(path)?;
        info!("resumed at iteration {}", trainer.iteration);
    }
    trainer.run()
}
