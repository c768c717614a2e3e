//! Parsing generator, image generator and multi-scale discriminator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Conv2d;
use crate::losses::{FeatureNet, CORRESPONDENCE_TAP};
use crate::maps::{KeypointHeatmap, ParsingMap, NUM_LABELS};
use crate::norms::{RegionNorm, RegionStyle, SpatialNorm};
use crate::resfft::ResFftBlock;
use crate::tensor::{ParamSet, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    pub base_width: usize,
    pub joints: usize,
    pub parsing_blocks: usize,
    pub image_blocks: usize,
    pub disc_scales: usize,
    pub use_fft: bool,
    pub use_sn: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            base_width: 32,
            joints: 8,
            parsing_blocks: 2,
            image_blocks: 1,
            disc_scales: 2,
            use_fft: true,
            use_sn: true,
        }
    }
}

fn check_input(op: &'static str, t: &Tensor, channels: usize, like: &Tensor) -> Result<()> {
    let s = t.shape();
    let l = like.shape();
    if s.len() != 4 || s[1] != channels || s[0] != l[0] || s[2..] != l[2..] {
        return Err(Error::invalid_shape(
            op,
            s,
            format!("expected [{},{channels},{},{}]", l[0], l[2], l[3]),
        ));
    }
    Ok(())
}

/// Halve the resolution, then conv3×3 + ReLU.
struct Down {
    conv: Conv2d,
}

impl Down {
    fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Down {
        Down {
            conv: Conv2d::new(name, cin, cout, 3, true, rng),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.conv.forward(&x.avg_pool2()?)?.relu())
    }
}

/// Double the resolution, concatenate an optional skip, then conv3×3 + ReLU.
struct Up {
    conv: Conv2d,
}

impl Up {
    fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Up {
        Up {
            conv: Conv2d::new(name, cin, cout, 3, true, rng),
        }
    }

    fn forward(&self, x: &Tensor, skip: Option<&Tensor>) -> Result<Tensor> {
        let up = x.upsample2x()?;
        let h = match skip {
            Some(s) => Tensor::concat(&[&up, s], 1)?,
            None => up,
        };
        Ok(self.conv.forward(&h)?.relu())
    }
}

/// U-Net over `(K_S, P_S, K_T)` producing 8-way parsing logits.
pub struct ParsingGenerator {
    stem: Conv2d,
    downs: Vec<Down>,
    blocks: Vec<ResFftBlock>,
    ups: Vec<Up>,
    head: Conv2d,
    joints: usize,
}

impl ParsingGenerator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> ParsingGenerator {
        let b = cfg.base_width;
        let widths = [b, 2 * b, 4 * b, 4 * b, 4 * b];
        let cin = 2 * cfg.joints + NUM_LABELS;
        let stem = Conv2d::new("parsing_gen.stem", cin, b, 3, true, rng);
        let downs = (0..4)
            .map(|i| Down::new(&format!("parsing_gen.down{i}"), widths[i], widths[i + 1], rng))
            .collect();
        let blocks = (0..cfg.parsing_blocks)
            .map(|i| ResFftBlock::new(&format!("parsing_gen.block{i}"), widths[4], cfg.use_fft, rng))
            .collect();
        let ups = (0..4)
            .map(|i| {
                let (deep, skip) = (widths[4 - i], widths[3 - i]);
                Up::new(&format!("parsing_gen.up{i}"), deep + skip, skip, rng)
            })
            .collect();
        let head = Conv2d::new("parsing_gen.head", b, NUM_LABELS, 3, true, rng);
        ParsingGenerator {
            stem,
            downs,
            blocks,
            ups,
            head,
            joints: cfg.joints,
        }
    }

    pub fn head(&self) -> &Conv2d {
        &self.head
    }

    pub fn forward(&self, ks: &KeypointHeatmap, ps: &ParsingMap, kt: &KeypointHeatmap) -> Result<Tensor> {
        let ks = ks.tensor();
        let pst = ps.one_hot();
        check_input("parsing_forward", ks, self.joints, &pst)?;
        check_input("parsing_forward", kt.tensor(), self.joints, &pst)?;
        let x = Tensor::concat(&[ks, &pst, kt.tensor()], 1)?;
        let mut skips = vec![self.stem.forward(&x)?.relu()];
        for d in &self.downs {
            let next = d.forward(skips.last().expect("stem present"))?;
            skips.push(next);
        }
        let mut h = skips.pop().expect("bottleneck present");
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        for up in &self.ups {
            let skip = skips.pop().expect("one skip per up stage");
            h = up.forward(&h, Some(&skip))?;
        }
        self.head.forward(&h)
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        self.stem.collect(set)?;
        for d in &self.downs {
            d.conv.collect(set)?;
        }
        for b in &self.blocks {
            b.collect(set)?;
        }
        for u in &self.ups {
            u.conv.collect(set)?;
        }
        self.head.collect(set)
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        self.collect(&mut set)?;
        Ok(set)
    }
}

pub struct ImageOutput {
    /// `[B,3,H,W]` in `[−1,1]`.
    pub image: Tensor,
    /// Decoder features projected to the correspondence tap's channels.
    pub features: Tensor,
}

/// Texture encoder, pose encoder and a decoder conditioned by region styles
/// and source features.
pub struct ImageGenerator {
    tex_stem: Conv2d,
    tex_downs: [Down; 2],
    pose_stem: Conv2d,
    pose_downs: [Down; 2],
    region_norm: RegionNorm,
    blocks: Vec<ResFftBlock>,
    spatial_norm: SpatialNorm,
    ups: [Up; 2],
    out: Conv2d,
    proj: Conv2d,
    joints: usize,
}

impl ImageGenerator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> ImageGenerator {
        let b = cfg.base_width;
        let deep = 4 * b;
        let tex_stem = Conv2d::new("image_gen.tex_stem", 3 + NUM_LABELS, b, 3, true, rng);
        let tex_downs = [
            Down::new("image_gen.tex_down0", b, 2 * b, rng),
            Down::new("image_gen.tex_down1", 2 * b, deep, rng),
        ];
        let pose_stem = Conv2d::new("image_gen.pose_stem", NUM_LABELS + 2 * cfg.joints, b, 3, true, rng);
        let pose_downs = [
            Down::new("image_gen.pose_down0", b, 2 * b, rng),
            Down::new("image_gen.pose_down1", 2 * b, deep, rng),
        ];
        let region_norm = RegionNorm::new("image_gen.region_norm", deep, deep, rng);
        let blocks = (0..cfg.image_blocks)
            .map(|i| ResFftBlock::new(&format!("image_gen.block{i}"), deep, cfg.use_fft, rng))
            .collect();
        let spatial_norm = SpatialNorm::new("image_gen.spatial_norm", deep, deep, rng);
        let ups = [
            Up::new("image_gen.up0", deep, 2 * b, rng),
            Up::new("image_gen.up1", 2 * b, b, rng),
        ];
        let out = Conv2d::new("image_gen.out", b, 3, 3, true, rng);
        let proj = Conv2d::new(
            "image_gen.proj",
            deep,
            FeatureNet::tap_channels(CORRESPONDENCE_TAP),
            1,
            true,
            rng,
        );
        ImageGenerator {
            tex_stem,
            tex_downs,
            pose_stem,
            pose_downs,
            region_norm,
            blocks,
            spatial_norm,
            ups,
            out,
            proj,
            joints: cfg.joints,
        }
    }

    /// `parsing` holds target-pose label scores (one-hot or probabilities).
    pub fn forward(
        &self,
        source: &Tensor,
        source_parsing: &ParsingMap,
        parsing: &Tensor,
        ks: &KeypointHeatmap,
        kt: &KeypointHeatmap,
    ) -> Result<ImageOutput> {
        let psrc = source_parsing.one_hot();
        check_input("image_forward", source, 3, &psrc)?;
        check_input("image_forward", parsing, NUM_LABELS, &psrc)?;
        check_input("image_forward", ks.tensor(), self.joints, &psrc)?;
        check_input("image_forward", kt.tensor(), self.joints, &psrc)?;

        let mut tex = self.tex_stem.forward(&Tensor::concat(&[source, &psrc], 1)?)?.relu();
        for d in &self.tex_downs {
            tex = d.forward(&tex)?;
        }
        let styles = RegionStyle::extract(&tex, &source_parsing.downsample(4)?)?;

        let pose_in = Tensor::concat(&[parsing, ks.tensor(), kt.tensor()], 1)?;
        let mut h = self.pose_stem.forward(&pose_in)?.relu();
        for d in &self.pose_downs {
            h = d.forward(&h)?;
        }
        let target_map = ParsingMap::from_scores(parsing)?.downsample(4)?;
        h = self.region_norm.forward(&h, &target_map, &styles)?.relu();
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        h = self.spatial_norm.forward(&h, &tex)?;
        let features = self.proj.forward(&h)?;
        for up in &self.ups {
            h = up.forward(&h, None)?;
        }
        let image = self.out.forward(&h)?.tanh();
        Ok(ImageOutput { image, features })
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        self.tex_stem.collect(set)?;
        for d in &self.tex_downs {
            d.conv.collect(set)?;
        }
        self.pose_stem.collect(set)?;
        for d in &self.pose_downs {
            d.conv.collect(set)?;
        }
        self.region_norm.collect(set)?;
        for b in &self.blocks {
            b.collect(set)?;
        }
        self.spatial_norm.collect(set)?;
        for u in &self.ups {
            u.conv.collect(set)?;
        }
        self.out.collect(set)?;
        self.proj.collect(set)
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        self.collect(&mut set)?;
        Ok(set)
    }
}

/// Residual block that halves the resolution:
/// `pool(shortcut(x) + conv(lrelu(conv(x))))`.
struct DiscBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    shortcut: Conv2d,
}

impl DiscBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let body = self.conv2.forward(&self.conv1.forward(x)?.leaky_relu(LEAKY_SLOPE))?;
        self.shortcut.forward(x)?.add(&body)?.avg_pool2()
    }
}

struct DiscScale {
    stem: Conv2d,
    blocks: Vec<DiscBlock>,
    score: Conv2d,
}

pub struct DiscOutput {
    /// One patch-score map per scale.
    pub scores: Vec<Tensor>,
    /// `[B, E]` pooled penultimate features of all scales.
    pub embedding: Tensor,
}

/// Multi-scale conditional patch discriminator over `(image, parsing)`.
pub struct Discriminator {
    scales: Vec<DiscScale>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Result<Discriminator> {
        let b = cfg.base_width;
        let mut sn_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut make = |name: String, cin: usize, cout: usize, k: usize| -> Result<Conv2d> {
            let conv = Conv2d::new(&name, cin, cout, k, true, rng);
            if cfg.use_sn {
                conv.with_spectral_norm(&mut sn_rng)
            } else {
                Ok(conv)
            }
        };
        let mut scales = Vec::with_capacity(cfg.disc_scales);
        for s in 0..cfg.disc_scales {
            let p = format!("disc.s{s}");
            let stem = make(format!("{p}.stem"), 3 + NUM_LABELS, b, 3)?;
            let widths = [b, 2 * b, 4 * b];
            let mut blocks = Vec::new();
            for i in 0..2 {
                let (cin, cout) = (widths[i], widths[i + 1]);
                blocks.push(DiscBlock {
                    conv1: make(format!("{p}.block{i}.conv1"), cin, cout, 3)?,
                    conv2: make(format!("{p}.block{i}.conv2"), cout, cout, 3)?,
                    shortcut: make(format!("{p}.block{i}.shortcut"), cin, cout, 1)?,
                });
            }
            let score = make(format!("{p}.score"), widths[2], 1, 3)?;
            scales.push(DiscScale { stem, blocks, score });
        }
        Ok(Discriminator { scales })
    }

    pub fn forward(&self, image: &Tensor, parsing: &Tensor) -> Result<DiscOutput> {
        check_input("discriminator_forward", parsing, NUM_LABELS, image)?;
        let mut x = Tensor::concat(&[image, parsing], 1)?;
        let mut scores = Vec::with_capacity(self.scales.len());
        let mut pooled = Vec::with_capacity(self.scales.len());
        for (i, scale) in self.scales.iter().enumerate() {
            if i > 0 {
                x = x.avg_pool2()?;
            }
            let mut h = scale.stem.forward(&x)?.leaky_relu(LEAKY_SLOPE).avg_pool2()?;
            for block in &scale.blocks {
                h = block.forward(&h)?.leaky_relu(LEAKY_SLOPE);
            }
            scores.push(scale.score.forward(&h)?);
            pooled.push(h.mean_axis(3, false)?.mean_axis(2, false)?);
        }
        let parts: Vec<&Tensor> = pooled.iter().collect();
        Ok(DiscOutput {
            scores,
            embedding: Tensor::concat(&parts, 1)?,
        })
    }

    pub fn convs(&self) -> Vec<&Conv2d> {
        let mut out = Vec::new();
        for s in &self.scales {
            out.push(&s.stem);
            for b in &s.blocks {
                out.extend([&b.conv1, &b.conv2, &b.shortcut]);
            }
            out.push(&s.score);
        }
        out
    }

    /// One power-iteration step for every normalized weight.
    pub fn update_spectral(&self) -> Result<()> {
        for c in self.convs() {
            c.update_spectral()?;
        }
        Ok(())
    }

    pub fn collect(&self, set: &mut ParamSet) -> Result<()> {
        for c in self.convs() {
            c.collect(set)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        self.collect(&mut set)?;
        Ok(set)
    }
}
