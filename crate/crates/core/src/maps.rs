//! Label fields and keypoint heatmaps that condition the generators.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_LABELS: usize = 8;

/// Gaussian width in pixels for keypoint heatmaps.
pub const HEATMAP_SIGMA: f64 = 1.5;

/// Per-pixel semantic labels in `0..8` for a batch of maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsingMap {
    batch: usize,
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ParsingMap {
    pub fn new(labels: Vec<u8>, batch: usize, height: usize, width: usize) -> Result<ParsingMap> {
        if labels.len() != batch * height * width || batch * height * width == 0 {
            return Err(Error::DataLength {
                len: labels.len(),
                shape: vec![batch, height, width],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_LABELS) {
            return Err(Error::LabelOutOfRange(bad as usize));
        }
        Ok(ParsingMap {
            batch,
            height,
            width,
            labels,
        })
    }

    pub fn uniform(label: u8, batch: usize, height: usize, width: usize) -> Result<ParsingMap> {
        ParsingMap::new(vec![label; batch * height * width], batch, height, width)
    }

    /// Stacks single-sample maps into one batch.
    pub fn stack(maps: &[&ParsingMap]) -> Result<ParsingMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty parsing-map stack".into()))?;
        let mut labels = Vec::new();
        let mut batch = 0;
        for m in maps {
            if (m.height, m.width) != (first.height, first.width) {
                return Err(Error::shape(
                    "parsing stack",
                    &[first.height, first.width],
                    &[m.height, m.width],
                ));
            }
            labels.extend_from_slice(&m.labels);
            batch += m.batch;
        }
        ParsingMap::new(labels, batch, first.height, first.width)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_at(&self, b: usize, y: usize, x: usize) -> u8 {
        self.labels[(b * self.height + y) * self.width + x]
    }

    pub fn sample(&self, b: usize) -> ParsingMap {
        let plane = self.height * self.width;
        ParsingMap {
            batch: 1,
            height: self.height,
            width: self.width,
            labels: self.labels[b * plane..(b + 1) * plane].to_vec(),
        }
    }

    /// Nearest-neighbour subsampling by an integer factor, reading the
    /// centre pixel of each block.
    pub fn downsample(&self, factor: usize) -> Result<ParsingMap> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot downsample {}x{} by {factor}",
                self.height, self.width
            )));
        }
        let (h, w, off) = (self.height / factor, self.width / factor, factor / 2);
        let mut labels = Vec::with_capacity(self.batch * h * w);
        for b in 0..self.batch {
            for y in 0..h {
                for x in 0..w {
                    labels.push(self.label_at(b, y * factor + off, x * factor + off));
                }
            }
        }
        ParsingMap::new(labels, self.batch, h, w)
    }

    /// Binary mask of label `j` as a `[B,1,H,W]` tensor.
    pub fn mask(&self, j: usize) -> Result<Tensor> {
        if j >= NUM_LABELS {
            return Err(Error::LabelOutOfRange(j));
        }
        let data = self.labels.iter().map(|&l| f64::from(l as usize == j)).collect();
        Tensor::new(data, &[self.batch, 1, self.height, self.width])
    }

    /// `[B,8,H,W]` one-hot encoding.
    pub fn one_hot(&self) -> Tensor {
        let plane = self.height * self.width;
        let mut data = vec![0.0; self.batch * NUM_LABELS * plane];
        for b in 0..self.batch {
            for p in 0..plane {
                let l = self.labels[b * plane + p] as usize;
                data[(b * NUM_LABELS + l) * plane + p] = 1.0;
            }
        }
        Tensor::from_fn(&[self.batch, NUM_LABELS, self.height, self.width], |i| data[i])
    }

    /// Per-pixel argmax over the class axis of `[B,8,H,W]` scores.
    pub fn from_scores(scores: &Tensor) -> Result<ParsingMap> {
        let s = scores.shape();
        if s.len() != 4 || s[1] != NUM_LABELS {
            return Err(Error::invalid_shape("argmax", s, "expected [B,8,H,W]"));
        }
        let (b, h, w) = (s[0], s[2], s[3]);
        let plane = h * w;
        let d = scores.data();
        let mut labels = vec![0u8; b * plane];
        for bi in 0..b {
            for p in 0..plane {
                let mut best = 0;
                for c in 1..NUM_LABELS {
                    if d[(bi * NUM_LABELS + c) * plane + p] > d[(bi * NUM_LABELS + best) * plane + p] {
                        best = c;
                    }
                }
                labels[bi * plane + p] = best as u8;
            }
        }
        ParsingMap::new(labels, b, h, w)
    }

    /// Counts of each label within sample `b`.
    pub fn histogram(&self, b: usize) -> [usize; NUM_LABELS] {
        let plane = self.height * self.width;
        let mut counts = [0; NUM_LABELS];
        for &l in &self.labels[b * plane..(b + 1) * plane] {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Fraction of pixels whose labels agree.
    pub fn accuracy(&self, other: &ParsingMap) -> Result<f64> {
        if self.labels.len() != other.labels.len() {
            return Err(Error::shape(
                "accuracy",
                &[self.batch, self.height, self.width],
                &[other.batch, other.height, other.width],
            ));
        }
        let hits = self.labels.iter().zip(&other.labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / self.labels.len() as f64)
    }
}

/// Per-joint Gaussian heatmaps, stored as a `[B,J,H,W]` tensor.
#[derive(Clone)]
pub struct KeypointHeatmap {
    tensor: Tensor,
}

impl KeypointHeatmap {
    /// Renders one sample from joint positions `(x, y)` in pixel units.
    pub fn render(joints: &[(f64, f64)], height: usize, width: usize, sigma: f64) -> Result<KeypointHeatmap> {
        if joints.is_empty() {
            return Err(Error::InvalidArgument("no joints".into()));
        }
        let plane = height * width;
        let inv = 1.0 / (2.0 * sigma * sigma);
        let tensor = Tensor::from_fn(&[1, joints.len(), height, width], |i| {
            let (jx, jy) = joints[i / plane];
            let p = i % plane;
            let (x, y) = ((p % width) as f64, (p / width) as f64);
            (-((x - jx).powi(2) + (y - jy).powi(2)) * inv).exp()
        });
        Ok(KeypointHeatmap { tensor })
    }

    pub fn from_tensor(tensor: Tensor) -> Result<KeypointHeatmap> {
        if tensor.rank() != 4 {
            return Err(Error::invalid_shape("heatmap", tensor.shape(), "expected [B,J,H,W]"));
        }
        Ok(KeypointHeatmap { tensor })
    }

    pub fn stack(maps: &[&KeypointHeatmap]) -> Result<KeypointHeatmap> {
        let parts: Vec<&Tensor> = maps.iter().map(|m| &m.tensor).collect();
        KeypointHeatmap::from_tensor(Tensor::concat(&parts, 0)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn joints(&self) -> usize {
        self.tensor.dim(1)
    }

    /// Location of each channel's maximum as `(x, y)` for sample `b`.
    pub fn peaks(&self, b: usize) -> Vec<(usize, usize)> {
        let s = self.tensor.shape();
        let (j, h, w) = (s[1], s[2], s[3]);
        let d = self.tensor.data();
        (0..j)
            .map(|c| {
                let base = (b * j + c) * h * w;
                let p = (0..h * w)
                    .max_by(|&a, &q| d[base + a].total_cmp(&d[base + q]))
                    .unwrap_or(0);
                (p % w, p / w)
            })
            .collect()
    }
}
