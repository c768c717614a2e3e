//! Held-out evaluation and single-image generation from a checkpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::train::Models;
use crate::error::{Error, Result};
use crate::imageio::{write_pgm, RgbImage};
use crate::losses::cross_entropy;
use crate::maps::ParsingMap;
use crate::metrics::{image_psnr, perceptual_distance};
use crate::synthdata::{load_split, resolve_split, Batch, SamplePair};

pub const EVAL_HEADER: &str = "id,psnr,perceptual_distance";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub psnr: f64,
    pub perceptual_distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParsingMetrics {
    /// Pixel accuracy of the argmax parsing map.
    pub accuracy: f64,
    /// Mean per-pixel cross-entropy.
    pub ce: f64,
}

fn chunks(pairs: &[SamplePair], batch: usize) -> impl Iterator<Item = Result<Batch>> + '_ {
    pairs
        .chunks(batch.max(1))
        .map(|c| Batch::from_pairs(&c.iter().collect::<Vec<_>>()))
}

/// Parsing accuracy and cross-entropy of the parsing generator, averaged
/// over pixels of all pairs.
pub fn parsing_metrics(models: &Models, pairs: &[SamplePair], batch: usize) -> Result<ParsingMetrics> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no pairs to evaluate".into()));
    }
    let (mut acc, mut ce) = (0.0, 0.0);
    for b in chunks(pairs, batch) {
        let b = b?;
        let logits = models.parse(&b)?;
        let w = b.len() as f64 / pairs.len() as f64;
        acc += w * ParsingMap::from_scores(&logits)?.accuracy(&b.target_parsing)?;
        ce += w * cross_entropy(&logits, &b.target_parsing)?.item();
    }
    Ok(ParsingMetrics { accuracy: acc, ce })
}

/// Full pipeline on every pair, compared against the target image.
pub fn evaluate_pairs(models: &Models, pairs: &[SamplePair], batch: usize) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (chunk, b) in pairs.chunks(batch.max(1)).zip(chunks(pairs, batch)) {
        let b = b?;
        let (_, image) = models.infer(&b)?;
        let dist = perceptual_distance(&models.features, &image, &b.target)?;
        for (i, pair) in chunk.iter().enumerate() {
            rows.push(EvalRow {
                id: pair.id.clone(),
                psnr: image_psnr(&image, &b.target, i)?,
                perceptual_distance: dist[i],
            });
        }
    }
    Ok(rows)
}

/// Per-row CSV plus a `mean` row; header only when there are no rows.
pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.id, r.psnr, r.perceptual_distance);
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / n;
        let dist = rows.iter().map(|r| r.perceptual_distance).sum::<f64>() / n;
        let _ = writeln!(s, "mean,{psnr},{dist}");
    }
    s
}

pub fn evaluate(checkpoint: &Path, data: &Path, out: &Path) -> Result<Vec<EvalRow>> {
    let (cfg, models) = Models::load(checkpoint)?;
    let (_, pairs) = load_split(&resolve_split(data, "test")?)?;
    let rows = evaluate_pairs(&models, &pairs, cfg.batch_size)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(out, eval_csv(&rows)).map_err(|e| Error::io(out, e))?;
    Ok(rows)
}

fn find_pair(data: &Path, id: &str) -> Result<SamplePair> {
    let dirs: Vec<PathBuf> = if data.join("manifest.txt").is_file() {
        vec![data.to_path_buf()]
    } else {
        ["train", "test"].iter().map(|s| data.join(s)).filter(|d| d.is_dir()).collect()
    };
    for dir in dirs {
        let (_, pairs) = load_split(&dir)?;
        if let Some(p) = pairs.into_iter().find(|p| p.id == id) {
            return Ok(p);
        }
    }
    Err(Error::Dataset(format!("pair {id:?} not found under {}", data.display())))
}

/// Path of the parsing map written next to a generated image.
pub fn parsing_output_path(image: &Path) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}_parse.pgm"))
}

/// Renders the source figure of `source_id` in the source pose of
/// `pose_id`. Writes the image and its generated parsing map.
pub fn generate(checkpoint: &Path, data: Option<&Path>, source_id: &str, pose_id: &str, out: &Path) -> Result<RgbImage> {
    let (cfg, models) = Models::load(checkpoint)?;
    let data = data.unwrap_or(&cfg.data_dir);
    let src = find_pair(data, source_id)?;
    let pose = find_pair(data, pose_id)?;
    let pair = SamplePair {
        target: pose.source.clone(),
        target_parsing: pose.source_parsing.clone(),
        target_joints: pose.source_joints.clone(),
        ..src
    };
    let batch = Batch::from_pairs(&[&pair])?;
    let (parsing, image) = models.infer(&batch)?;
    let img = RgbImage::from_tensor(&image, 0)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.write_ppm(out)?;
    write_pgm(&parsing, 0, &parsing_output_path(out))?;
    Ok(img)
}
