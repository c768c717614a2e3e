//! Ablation grid over spectral normalization, the Sinkhorn adversarial term
//! and the frequency stream.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::info;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::eval::evaluate_pairs;
use super::train::{ConvergenceTracker, Trainer};
use crate::error::{Error, Result};
use crate::synthdata::{load_split, resolve_split, SamplePair};

/// Multiplier on the pilot run's minimum smoothed loss.
pub const PILOT_FACTOR: f64 = 1.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    NoSn,
    NoWass,
    NoBoth,
    NoFft,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::NoSn, Variant::NoWass, Variant::NoBoth, Variant::NoFft];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSn => "no-sn",
            Variant::NoWass => "no-wass",
            Variant::NoBoth => "no-both",
            Variant::NoFft => "no-fft",
        }
    }

    /// `(use_fft, use_sn, use_wasserstein)`.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::Full => (true, true, true),
            Variant::NoSn => (true, false, true),
            Variant::NoWass => (true, true, false),
            Variant::NoBoth => (true, false, false),
            Variant::NoFft => (false, true, true),
        }
    }

    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        let (fft, sn, wass) = self.flags();
        cfg.net.use_fft = fft;
        cfg.net.use_sn = sn;
        cfg.use_wasserstein = wass;
        cfg
    }

    pub fn parse_list(s: &str) -> Result<Vec<Variant>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let v: Variant = part.parse()?;
            if !out.contains(&v) {
                out.push(v);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty variant list".into()));
        }
        Ok(out)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub tracker: ConvergenceTracker,
    pub psnr: f64,
    pub perceptual_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantRow {
    pub variant: Variant,
    /// Median over seeds; runs that never reach the threshold count as one
    /// past the stage length.
    pub iterations: f64,
    pub converged_runs: usize,
    pub perceptual_distance: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub threshold: f64,
    pub runs: Vec<RunResult>,
    pub rows: Vec<VariantRow>,
    pub censor_at: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl AblationReport {
    pub fn iterations_of(&self, run: &RunResult) -> usize {
        run.tracker.first_hit(self.threshold).unwrap_or(self.censor_at)
    }

    pub fn row(&self, variant: Variant) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn table_csv(&self) -> String {
        let mut s = String::from("variant,iterations,converged_runs,perceptual_distance,psnr\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.variant.name(),
                r.iterations,
                r.converged_runs,
                r.perceptual_distance,
                r.psnr
            );
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("variant,seed,iterations,converged,min_smoothed,perceptual_distance,psnr\n");
        for r in &self.runs {
            let hit = r.tracker.first_hit(self.threshold);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.variant.name(),
                r.seed,
                self.iterations_of(r),
                hit.is_some(),
                r.tracker.min_smoothed().unwrap_or(f64::NAN),
                r.perceptual_distance,
                r.psnr
            );
        }
        s
    }
}

/// Runs the parsing stage once per seed and frequency-stream setting, then
/// continues every variant from that shared state.
struct Runner<'a> {
    base: &'a RunConfig,
    train: &'a [SamplePair],
    test: &'a [SamplePair],
    stage1: BTreeMap<(u64, bool), Checkpoint>,
}

impl Runner<'_> {
    fn seeded(&self, variant: Variant, seed: u64) -> RunConfig {
        let mut cfg = variant.apply(self.base);
        cfg.seed = seed;
        cfg.stop_after = 0;
        cfg.checkpoint_every = 0;
        cfg.out_dir = self.base.out_dir.join(variant.name()).join(format!("seed{seed}"));
        cfg
    }

    fn stage1(&mut self, seed: u64, fft: bool) -> Result<Checkpoint> {
        if let Some(ck) = self.stage1.get(&(seed, fft)) {
            return Ok(ck.clone());
        }
        let mut cfg = self.seeded(if fft { Variant::Full } else { Variant::NoFft }, seed);
        cfg.stage_iters = [self.base.stage_iters[0], 0, 0];
        cfg.sample_every = 0;
        cfg.out_dir = self.base.out_dir.join("stage1").join(format!("fft{}_seed{seed}", u8::from(fft)));
        let mut t = Trainer::with_pairs(cfg, self.train.to_vec())?;
        t.run()?;
        let ck = t.checkpoint()?;
        self.stage1.insert((seed, fft), ck.clone());
        Ok(ck)
    }

    fn run(&mut self, variant: Variant, seed: u64) -> Result<RunResult> {
        let shared = self.stage1(seed, variant.flags().0)?;
        let cfg = self.seeded(variant, seed);
        let mut t = Trainer::with_pairs(cfg.clone(), self.train.to_vec())?;
        t.restore(&shared)?;
        info!("ablation {} seed {seed}", variant.name());
        t.run()?;
        let rows = evaluate_pairs(&t.models, self.test, cfg.batch_size)?;
        let n = rows.len().max(1) as f64;
        Ok(RunResult {
            variant,
            seed,
            tracker: t.tracker.clone(),
            psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            perceptual_distance: rows.iter().map(|r| r.perceptual_distance).sum::<f64>() / n,
        })
    }
}

/// Runs every variant for every configured seed on the given data.
pub fn ablate_pairs(
    base: &RunConfig,
    variants: &[Variant],
    train: &[SamplePair],
    test: &[SamplePair],
) -> Result<AblationReport> {
    if base.ablation_seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    let mut runner = Runner {
        base,
        train,
        test,
        stage1: BTreeMap::new(),
    };
    let mut runs = Vec::new();
    for &seed in &base.ablation_seeds {
        for &v in variants {
            runs.push(runner.run(v, seed)?);
        }
    }
    let threshold = if base.conv_threshold > 0.0 {
        base.conv_threshold
    } else {
        let pilot_seed = base.ablation_seeds[0];
        let pilot = match runs.iter().find(|r| r.variant == Variant::Full && r.seed == pilot_seed) {
            Some(r) => r.tracker.clone(),
            None => runner.run(Variant::Full, pilot_seed)?.tracker,
        };
        let min = pilot.min_smoothed().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "pilot run has fewer than {} recorded iterations",
                pilot.window
            ))
        })?;
        PILOT_FACTOR * min
    };
    let mut report = AblationReport {
        threshold,
        runs,
        rows: Vec::new(),
        censor_at: base.stage_iters[1] + 1,
    };
    for &v in variants {
        let mine: Vec<&RunResult> = report.runs.iter().filter(|r| r.variant == v).collect();
        let iters: Vec<f64> = mine.iter().map(|r| report.iterations_of(r) as f64).collect();
        report.rows.push(VariantRow {
            variant: v,
            iterations: median(&iters),
            converged_runs: mine.iter().filter(|r| r.tracker.first_hit(threshold).is_some()).count(),
            perceptual_distance: median(&mine.iter().map(|r| r.perceptual_distance).collect::<Vec<_>>()),
            psnr: median(&mine.iter().map(|r| r.psnr).collect::<Vec<_>>()),
        });
    }
    Ok(report)
}

/// Loads the data named by the configuration, runs the grid and writes
/// `ablation.csv` and `ablation_runs.csv` to the output directory.
pub fn ablate(base: &RunConfig, variants: &[Variant]) -> Result<AblationReport> {
    let (_, mut train) = load_split(&resolve_split(&base.data_dir, "train")?)?;
    if base.max_train_pairs > 0 {
        train.truncate(base.max_train_pairs);
    }
    let (_, test) = load_split(&base.data_dir.join("test"))?;
    let report = ablate_pairs(base, variants, &train, &test)?;
    write_report(&report, &base.out_dir)?;
    Ok(report)
}

pub fn write_report(report: &AblationReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [("ablation.csv", report.table_csv()), ("ablation_runs.csv", report.runs_csv())] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_roundtrip_and_flags_differ_in_one_mechanism() {
        let all = Variant::parse_list("full,no-sn,no-wass,no-both,no-fft").unwrap();
        assert_eq!(all, Variant::ALL.to_vec());
        assert!(Variant::parse_list("full,bogus").is_err());
        let base = RunConfig::default();
        for v in Variant::ALL {
            let cfg = v.apply(&base);
            assert_eq!(cfg.net.base_width, base.net.base_width);
            assert_eq!(cfg.seed, base.seed);
        }
        assert_eq!(Variant::NoBoth.flags(), (true, false, false));
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
