//! Procedural paired-pose data: textured stick figures rendered in two poses
//! with exact keypoints and label maps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imageio::{pgm_bytes, read_pgm, RgbImage};
use crate::maps::{KeypointHeatmap, ParsingMap, HEATMAP_SIGMA, NUM_LABELS};
use crate::tensor::Tensor;

pub const JOINT_NAMES: [&str; 8] = [
    "head", "neck", "l_elbow", "l_wrist", "r_elbow", "r_wrist", "l_ankle", "r_ankle",
];
pub const NUM_JOINTS: usize = JOINT_NAMES.len();

pub const LABEL_NAMES: [&str; NUM_LABELS] = [
    "background",
    "head",
    "torso",
    "upper_arms",
    "forearms",
    "hips",
    "thighs",
    "shins",
];

/// Canvas border every primitive must keep clear of, in pixels.
const MARGIN: f64 = 2.0;
const MAX_RESAMPLES: u64 = 1000;
/// Minimum visible fraction of each label's painted area in the source pose.
const MIN_VISIBLE: f64 = 0.3;

#[derive(Clone, Copy, Debug)]
struct Texture {
    base: [f64; 3],
    tint: [f64; 3],
    freq: f64,
    angle: f64,
    amp: f64,
    noise: f64,
}

/// Identity-level attributes shared by both poses of a pair.
#[derive(Clone, Debug)]
pub struct Appearance {
    seed: u64,
    background: [f64; 3],
    textures: [Texture; NUM_LABELS],
    scale: f64,
    torso_w: f64,
    limb_w: f64,
}

impl Appearance {
    pub fn from_seed(seed: u64) -> Appearance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11CE);
        let color = |rng: &mut ChaCha8Rng| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
        let g = rng.random_range(0.75..0.95);
        let background = [g, g, g];
        let textures = std::array::from_fn(|_| Texture {
            base: color(&mut rng),
            tint: color(&mut rng),
            freq: rng.random_range(3.0..14.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            amp: rng.random_range(0.0..0.35),
            noise: rng.random_range(0.0..0.08),
        });
        Appearance {
            seed,
            background,
            textures,
            scale: rng.random_range(0.9..1.0),
            torso_w: rng.random_range(0.14..0.18),
            limb_w: rng.random_range(0.9..1.15),
        }
    }
}

/// Articulation of one pose.
#[derive(Clone, Debug)]
pub struct Pose {
    cx: f64,
    tilt: f64,
    arms: [(f64, f64); 2],
    legs: [(f64, f64); 2],
}

impl Pose {
    pub fn from_seed(seed: u64) -> Pose {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0D1);
        let arm = |rng: &mut ChaCha8Rng, side: f64| (side * rng.random_range(0.3..2.2), rng.random_range(-1.2..1.2));
        let leg = |rng: &mut ChaCha8Rng, side: f64| (side * rng.random_range(-0.15..0.6), rng.random_range(-0.8..0.8));
        Pose {
            cx: rng.random_range(0.45..0.55),
            tilt: rng.random_range(-0.1..0.1),
            arms: [arm(&mut rng, -1.0), arm(&mut rng, 1.0)],
            legs: [leg(&mut rng, -1.0), leg(&mut rng, 1.0)],
        }
    }
}

type Point = (f64, f64);

/// A capsule (segment with radius) or a disc when both ends coincide,
/// painted with a texture in its own local frame.
#[derive(Clone, Copy, Debug)]
struct Primitive {
    label: u8,
    a: Point,
    b: Point,
    radius: f64,
    /// Rotation of the local frame for discs.
    frame_angle: f64,
}

impl Primitive {
    fn covers(&self, p: Point) -> bool {
        self.distance(p) <= self.radius
    }

    fn distance(&self, p: Point) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        let (qx, qy) = (self.a.0 + t * dx, self.a.1 + t * dy);
        ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
    }

    /// Coordinates of `p` along and across the primitive's axis.
    fn local(&self, p: Point) -> Point {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len = (dx * dx + dy * dy).sqrt();
        let (ux, uy) = if len == 0.0 {
            (self.frame_angle.cos(), self.frame_angle.sin())
        } else {
            (dx / len, dy / len)
        };
        let (rx, ry) = (p.0 - self.a.0, p.1 - self.a.1);
        (rx * ux + ry * uy, -rx * uy + ry * ux)
    }

    fn bounds_ok(&self, size: f64) -> bool {
        [self.a, self.b].iter().all(|&(x, y)| {
            x - self.radius >= MARGIN
                && y - self.radius >= MARGIN
                && x + self.radius <= size - 1.0 - MARGIN
                && y + self.radius <= size - 1.0 - MARGIN
        })
    }
}

/// Primitives in painter's order plus the exposed keypoints, in pixels.
struct Figure {
    primitives: Vec<Primitive>,
    joints: Vec<Point>,
}

fn rotate(v: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    (v.0 * c - v.1 * s, v.0 * s + v.1 * c)
}

fn add(a: Point, b: Point) -> Point {
    (a.0 + b.0, a.1 + b.1)
}

/// Offset of `len` in direction `angle`, measured from straight down.
fn limb(len: f64, angle: f64) -> Point {
    (len * angle.sin(), len * angle.cos())
}

fn build_figure(app: &Appearance, pose: &Pose, size: usize) -> Figure {
    let n = size as f64;
    let k = app.scale * n;
    let w = app.limb_w;
    let neck = (pose.cx * n, 0.22 * n);
    let down = |len: f64| rotate((0.0, len * k), -pose.tilt);
    let pelvis = add(neck, down(0.25));
    let head_r = 0.07 * k;
    let head = add(neck, rotate((0.0, -(head_r + 0.01 * k)), -pose.tilt));
    let half_hip = rotate((0.055 * k, 0.0), -pose.tilt);
    let hips = [(pelvis.0 - half_hip.0, pelvis.1 - half_hip.1), add(pelvis, half_hip)];
    let half_shoulder = rotate((app.torso_w * k * 0.5, 0.0), -pose.tilt);
    let shoulder_y = add(neck, down(0.02));
    let shoulders = [
        (shoulder_y.0 - half_shoulder.0, shoulder_y.1 - half_shoulder.1),
        add(shoulder_y, half_shoulder),
    ];

    let prim = |label: u8, a: Point, b: Point, radius: f64| Primitive {
        label,
        a,
        b,
        radius,
        frame_angle: pose.tilt,
    };
    let mut primitives = vec![
        prim(2, neck, pelvis, app.torso_w * k * 0.5),
        prim(5, hips[0], hips[1], 0.05 * k),
    ];
    let mut knees = [(0.0, 0.0); 2];
    let mut ankles = [(0.0, 0.0); 2];
    for s in 0..2 {
        let (thigh, bend) = pose.legs[s];
        knees[s] = add(hips[s], limb(0.17 * k, thigh));
        ankles[s] = add(knees[s], limb(0.17 * k, thigh + bend));
    }
    for s in 0..2 {
        primitives.push(prim(6, hips[s], knees[s], 0.035 * k * w));
    }
    for s in 0..2 {
        primitives.push(prim(7, knees[s], ankles[s], 0.03 * k * w));
    }
    let mut elbows = [(0.0, 0.0); 2];
    let mut wrists = [(0.0, 0.0); 2];
    for s in 0..2 {
        let (upper, bend) = pose.arms[s];
        elbows[s] = add(shoulders[s], limb(0.14 * k, upper));
        wrists[s] = add(elbows[s], limb(0.13 * k, upper + bend));
    }
    for s in 0..2 {
        primitives.push(prim(3, shoulders[s], elbows[s], 0.028 * k * w));
    }
    for s in 0..2 {
        primitives.push(prim(4, elbows[s], wrists[s], 0.024 * k * w));
    }
    primitives.push(prim(1, head, head, head_r));

    let joints = vec![head, neck, elbows[0], wrists[0], elbows[1], wrists[1], ankles[0], ankles[1]];
    Figure { primitives, joints }
}

fn hash3(seed: u64, a: i64, b: i64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [a as u64, b as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(31).wrapping_mul(0x94D0_49BB_1331_11EB);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn shade(app: &Appearance, prim: &Primitive, p: Point, size: usize) -> [u8; 3] {
    let tex = &app.textures[prim.label as usize];
    let (t, s) = prim.local(p);
    let (t, s) = (t / size as f64, s / size as f64);
    let phase = 2.0 * std::f64::consts::PI * tex.freq * (t * tex.angle.cos() + s * tex.angle.sin());
    let stripe = tex.amp * phase.sin();
    let cell = 1.0 / 32.0;
    let noise = tex.noise * (2.0 * hash3(app.seed + prim.label as u64, (t / cell).floor() as i64, (s / cell).floor() as i64) - 1.0);
    std::array::from_fn(|c| {
        let v = tex.base[c] + stripe * (tex.tint[c] - tex.base[c]) + noise;
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    })
}

/// A rendered view: image, label map and per-label painted-area counts.
struct Render {
    image: RgbImage,
    labels: Vec<u8>,
    painted: [usize; NUM_LABELS],
}

fn render(app: &Appearance, fig: &Figure, size: usize) -> Render {
    let mut image = RgbImage::new(size, size);
    let bg = app.background.map(|v| (v * 255.0).round() as u8);
    for y in 0..size {
        for x in 0..size {
            image.put(x, y, bg);
        }
    }
    let mut labels = vec![0u8; size * size];
    let mut painted = [0; NUM_LABELS];
    for prim in &fig.primitives {
        let lo = |v: f64| ((v - prim.radius).floor().max(0.0)) as usize;
        let hi = |v: f64| ((v + prim.radius).ceil() as usize).min(size - 1);
        for y in lo(prim.a.1.min(prim.b.1))..=hi(prim.a.1.max(prim.b.1)) {
            for x in lo(prim.a.0.min(prim.b.0))..=hi(prim.a.0.max(prim.b.0)) {
                let p = (x as f64, y as f64);
                if prim.covers(p) {
                    labels[y * size + x] = prim.label;
                    painted[prim.label as usize] += 1;
                    image.put(x, y, shade(app, prim, p, size));
                }
            }
        }
    }
    Render {
        image,
        labels,
        painted,
    }
}

/// Label of the topmost primitive covering pixel `(x, y)`.
fn owner_at(fig: &Figure, x: usize, y: usize) -> u8 {
    let p = (x as f64, y as f64);
    fig.primitives
        .iter()
        .rev()
        .find(|q| q.covers(p))
        .map_or(0, |q| q.label)
}

struct View {
    render: Render,
    joints: Vec<Point>,
    seed: u64,
}

fn draw_pose(app: &Appearance, requested: u64, size: usize, require_all: bool) -> Result<View> {
    for seed in requested..requested.saturating_add(MAX_RESAMPLES) {
        let fig = build_figure(app, &Pose::from_seed(seed), size);
        if !fig.primitives.iter().all(|p| p.bounds_ok(size as f64)) {
            log::debug!("pose seed {seed}: figure leaves the canvas margin, resampling");
            continue;
        }
        let render = render(app, &fig, size);
        if require_all {
            let mut visible = [0usize; NUM_LABELS];
            for &l in &render.labels {
                visible[l as usize] += 1;
            }
            let degenerate = (1..NUM_LABELS)
                .any(|l| visible[l] == 0 || (visible[l] as f64) < MIN_VISIBLE * render.painted[l] as f64);
            if degenerate {
                log::debug!("pose seed {seed}: a region is mostly occluded, resampling");
                continue;
            }
        }
        return Ok(View {
            render,
            joints: fig.joints,
            seed,
        });
    }
    Err(Error::Dataset(format!(
        "no valid pose within {MAX_RESAMPLES} seeds of {requested}"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSeeds {
    pub spec: u64,
    pub pose_a: u64,
    pub pose_b: u64,
}

#[derive(Clone, Debug)]
pub struct SamplePair {
    pub id: String,
    pub seeds: PairSeeds,
    /// Pose seeds actually used after resampling.
    pub used_pose_seeds: (u64, u64),
    pub source: RgbImage,
    pub target: RgbImage,
    pub source_parsing: ParsingMap,
    pub target_parsing: ParsingMap,
    pub source_joints: Vec<(f64, f64)>,
    pub target_joints: Vec<(f64, f64)>,
}

impl SamplePair {
    pub fn size(&self) -> usize {
        self.source.width
    }

    pub fn source_heatmap(&self) -> Result<KeypointHeatmap> {
        KeypointHeatmap::render(&self.source_joints, self.size(), self.size(), HEATMAP_SIGMA)
    }

    pub fn target_heatmap(&self) -> Result<KeypointHeatmap> {
        KeypointHeatmap::render(&self.target_joints, self.size(), self.size(), HEATMAP_SIGMA)
    }

    fn meta(&self) -> String {
        let joints = |js: &[(f64, f64)]| {
            js.iter()
                .map(|(x, y)| format!("{x},{y}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut s = String::new();
        let _ = writeln!(s, "id={}", self.id);
        let _ = writeln!(s, "size={}", self.size());
        let _ = writeln!(s, "spec_seed={}", self.seeds.spec);
        let _ = writeln!(s, "pose_a_seed={}", self.seeds.pose_a);
        let _ = writeln!(s, "pose_b_seed={}", self.seeds.pose_b);
        let _ = writeln!(s, "used_pose_a_seed={}", self.used_pose_seeds.0);
        let _ = writeln!(s, "used_pose_b_seed={}", self.used_pose_seeds.1);
        let _ = writeln!(s, "joint_names={}", JOINT_NAMES.join(","));
        let _ = writeln!(s, "source_joints={}", joints(&self.source_joints));
        let _ = writeln!(s, "target_joints={}", joints(&self.target_joints));
        s
    }

    /// File name suffixes and contents, in checksum order.
    fn files(&self) -> Vec<(String, Vec<u8>)> {
        vec![
            (format!("{}_src.ppm", self.id), self.source.ppm_bytes()),
            (format!("{}_tgt.ppm", self.id), self.target.ppm_bytes()),
            (format!("{}_src_parse.pgm", self.id), pgm_bytes(&self.source_parsing, 0)),
            (format!("{}_tgt_parse.pgm", self.id), pgm_bytes(&self.target_parsing, 0)),
            (format!("{}_meta.txt", self.id), self.meta().into_bytes()),
        ]
    }

    pub fn checksum(&self) -> String {
        checksum_of(self.files().iter().map(|(_, b)| b.as_slice()))
    }
}

fn checksum_of<'a>(parts: impl Iterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Renders one pair. Pose A must show every label; either pose is
/// resampled with an incremented seed when it is invalid.
pub fn generate(spec_seed: u64, pose_a_seed: u64, pose_b_seed: u64, size: usize) -> Result<SamplePair> {
    generate_with_id(format!("pair_{spec_seed}"), spec_seed, pose_a_seed, pose_b_seed, size)
}

fn generate_with_id(id: String, spec: u64, pose_a: u64, pose_b: u64, size: usize) -> Result<SamplePair> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!("image size {size} below 16")));
    }
    let app = Appearance::from_seed(spec);
    let a = draw_pose(&app, pose_a, size, true)?;
    let b = if pose_b == pose_a {
        draw_pose(&app, pose_a, size, true)?
    } else {
        draw_pose(&app, pose_b, size, false)?
    };
    if a.seed != pose_a || b.seed != pose_b {
        log::debug!("{id}: resampled pose seeds ({pose_a},{pose_b}) -> ({},{})", a.seed, b.seed);
    }
    Ok(SamplePair {
        seeds: PairSeeds {
            spec,
            pose_a,
            pose_b,
        },
        used_pose_seeds: (a.seed, b.seed),
        source_parsing: ParsingMap::new(a.render.labels, 1, size, size)?,
        target_parsing: ParsingMap::new(b.render.labels, 1, size, size)?,
        source: a.render.image,
        target: b.render.image,
        source_joints: a.joints,
        target_joints: b.joints,
        id,
    })
}

/// Recomputes the label map from primitive geometry alone, front to back.
pub fn ownership_oracle(spec_seed: u64, pose_seed: u64, size: usize) -> ParsingMap {
    let app = Appearance::from_seed(spec_seed);
    let fig = build_figure(&app, &Pose::from_seed(pose_seed), size);
    let labels = (0..size * size).map(|i| owner_at(&fig, i % size, i / size)).collect();
    ParsingMap::new(labels, 1, size, size).expect("labels in range")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub seeds: PairSeeds,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub split: String,
    pub size: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = format!("# split={} size={}\n", self.split, self.size);
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                e.id, e.seeds.spec, e.seeds.pose_a, e.seeds.pose_b, e.checksum
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut split = String::new();
        let mut size = 0;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("split", v)) => split = v.to_string(),
                        Some(("size", v)) => {
                            size = v.parse().map_err(|_| Error::Dataset(format!("manifest line {}: bad size", n + 1)))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| -> Result<u64> {
                s.parse()
                    .map_err(|_| Error::Dataset(format!("manifest line {}: bad seed {s:?}", n + 1)))
            };
            if f.len() != 5 {
                return Err(Error::Dataset(format!("manifest line {}: expected 5 fields", n + 1)));
            }
            entries.push(ManifestEntry {
                id: f[0].to_string(),
                seeds: PairSeeds {
                    spec: num(f[1])?,
                    pose_a: num(f[2])?,
                    pose_b: num(f[3])?,
                },
                checksum: f[4].to_string(),
            });
        }
        if size == 0 {
            return Err(Error::Dataset("manifest has no size header".into()));
        }
        Ok(Manifest { split, size, entries })
    }
}

/// Appearance seeds: train uses even offsets and test odd ones, so the two
/// splits never share a figure.
fn spec_seed(master: u64, index: usize, test: bool) -> u64 {
    master.wrapping_mul(1 << 24).wrapping_add(2 * index as u64 + u64::from(test))
}

fn build_split(split: &str, n: usize, master: u64, size: usize, test: bool) -> Result<(Manifest, Vec<SamplePair>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ if test { 0x7E57 } else { 0x7A1F });
    let mut entries = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let spec = spec_seed(master, i, test);
        let pose_a = rng.random::<u32>() as u64;
        let pose_b = rng.random::<u32>() as u64;
        let pair = generate_with_id(format!("{split}_{i:05}"), spec, pose_a, pose_b, size)?;
        entries.push(ManifestEntry {
            id: pair.id.clone(),
            seeds: pair.seeds,
            checksum: pair.checksum(),
        });
        pairs.push(pair);
    }
    Ok((
        Manifest {
            split: split.to_string(),
            size,
            entries,
        },
        pairs,
    ))
}

pub struct Split {
    pub train: Manifest,
    pub test: Manifest,
    pub train_pairs: Vec<SamplePair>,
    pub test_pairs: Vec<SamplePair>,
}

/// Builds train and test splits with disjoint appearance seeds.
pub fn make_split(n_train: usize, n_test: usize, master_seed: u64, size: usize) -> Result<Split> {
    let (train, train_pairs) = build_split("train", n_train, master_seed, size, false)?;
    let (test, test_pairs) = build_split("test", n_test, master_seed, size, true)?;
    Ok(Split {
        train,
        test,
        train_pairs,
        test_pairs,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_split_dir(dir: &Path, manifest: &Manifest, pairs: &[SamplePair]) -> Result<()> {
    let pairs_dir = dir.join("pairs");
    fs::create_dir_all(&pairs_dir).map_err(|e| Error::io(&pairs_dir, e))?;
    for pair in pairs {
        for (name, bytes) in pair.files() {
            write(&pairs_dir.join(name), &bytes)?;
        }
    }
    write(&dir.join("manifest.txt"), manifest.to_text().as_bytes())
}

/// Writes `DIR/train` and `DIR/test`, each with a manifest and `pairs/`.
pub fn make_data(out: &Path, n_train: usize, n_test: usize, master_seed: u64, size: usize) -> Result<Split> {
    let split = make_split(n_train, n_test, master_seed, size)?;
    write_split_dir(&out.join("train"), &split.train, &split.train_pairs)?;
    write_split_dir(&out.join("test"), &split.test, &split.test_pairs)?;
    Ok(split)
}

/// Resolves a split directory: `dir` itself when it holds a manifest,
/// otherwise `dir/<default_split>`.
pub fn resolve_split(dir: &Path, default_split: &str) -> Result<PathBuf> {
    if dir.join("manifest.txt").is_file() {
        return Ok(dir.to_path_buf());
    }
    let sub = dir.join(default_split);
    if sub.join("manifest.txt").is_file() {
        return Ok(sub);
    }
    Err(Error::Dataset(format!("no manifest.txt under {}", dir.display())))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Manifest::parse(&text)
}

fn parse_joints(v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(';')
        .map(|xy| {
            let (x, y) = xy
                .split_once(',')
                .ok_or_else(|| Error::Dataset(format!("bad joint {xy:?}")))?;
            let p = |s: &str| s.parse::<f64>().map_err(|_| Error::Dataset(format!("bad coordinate {s:?}")));
            Ok((p(x)?, p(y)?))
        })
        .collect()
}

/// Loads every pair of a split directory, verifying checksums.
pub fn load_split(dir: &Path) -> Result<(Manifest, Vec<SamplePair>)> {
    let manifest = read_manifest(dir)?;
    let pairs_dir = dir.join("pairs");
    let mut pairs = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let path = |suffix: &str| pairs_dir.join(format!("{}{suffix}", e.id));
        let read = |p: &Path| fs::read(p).map_err(|err| Error::io(p, err));
        let suffixes = ["_src.ppm", "_tgt.ppm", "_src_parse.pgm", "_tgt_parse.pgm", "_meta.txt"];
        let bytes: Vec<Vec<u8>> = suffixes.iter().map(|s| read(&path(s))).collect::<Result<_>>()?;
        let sum = checksum_of(bytes.iter().map(Vec::as_slice));
        if sum != e.checksum {
            return Err(Error::Dataset(format!("{}: checksum mismatch", e.id)));
        }
        let meta = String::from_utf8_lossy(&bytes[4]).into_owned();
        let field = |k: &str| -> Result<&str> {
            meta.lines()
                .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Dataset(format!("{}: meta lacks {k}", e.id)))
        };
        let seed = |k: &str| -> Result<u64> { field(k)?.parse().map_err(|_| Error::Dataset(format!("{}: bad {k}", e.id))) };
        pairs.push(SamplePair {
            id: e.id.clone(),
            seeds: e.seeds,
            used_pose_seeds: (seed("used_pose_a_seed")?, seed("used_pose_b_seed")?),
            source: RgbImage::read_ppm(&path("_src.ppm"))?,
            target: RgbImage::read_ppm(&path("_tgt.ppm"))?,
            source_parsing: read_pgm(&path("_src_parse.pgm"))?,
            target_parsing: read_pgm(&path("_tgt_parse.pgm"))?,
            source_joints: parse_joints(field("source_joints")?)?,
            target_joints: parse_joints(field("target_joints")?)?,
        });
    }
    Ok((manifest, pairs))
}

/// Stacked network inputs for a set of pairs.
pub struct Batch {
    pub source: Tensor,
    pub target: Tensor,
    pub source_parsing: ParsingMap,
    pub target_parsing: ParsingMap,
    pub source_pose: KeypointHeatmap,
    pub target_pose: KeypointHeatmap,
}

impl Batch {
    pub fn from_pairs(pairs: &[&SamplePair]) -> Result<Batch> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let src: Vec<Tensor> = pairs.iter().map(|p| p.source.to_tensor()).collect();
        let tgt: Vec<Tensor> = pairs.iter().map(|p| p.target.to_tensor()).collect();
        let ks: Vec<KeypointHeatmap> = pairs.iter().map(|p| p.source_heatmap()).collect::<Result<_>>()?;
        let kt: Vec<KeypointHeatmap> = pairs.iter().map(|p| p.target_heatmap()).collect::<Result<_>>()?;
        let sp: Vec<&ParsingMap> = pairs.iter().map(|p| &p.source_parsing).collect();
        let tp: Vec<&ParsingMap> = pairs.iter().map(|p| &p.target_parsing).collect();
        Ok(Batch {
            source: Tensor::concat(&src.iter().collect::<Vec<_>>(), 0)?,
            target: Tensor::concat(&tgt.iter().collect::<Vec<_>>(), 0)?,
            source_parsing: ParsingMap::stack(&sp)?,
            target_parsing: ParsingMap::stack(&tp)?,
            source_pose: KeypointHeatmap::stack(&ks.iter().collect::<Vec<_>>())?,
            target_pose: KeypointHeatmap::stack(&kt.iter().collect::<Vec<_>>())?,
        })
    }

    pub fn len(&self) -> usize {
        self.source.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
