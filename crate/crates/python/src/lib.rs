//! Python bindings: configuration, training, evaluation, generation and the
//! numeric building blocks (FFT, spectral norm, Sinkhorn, PSNR).

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use posegan::fourier::{irfft2, rfft2, ComplexGrid};
use posegan::harness::{self, RunConfig, Trainer as CoreTrainer, Variant};
use posegan::losses::{sinkhorn_distance as core_sinkhorn, LossBreakdown, SinkhornConfig};
use posegan::norms::{power_iteration_step, SnState};
use posegan::{synthdata, Error, Tensor};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NonFiniteLoss { .. } | Error::Checkpoint(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what} must be a non-empty rectangular list of rows")));
    }
    Tensor::new(rows.concat(), &[rows.len(), cols]).map_err(to_py)
}

fn breakdown(parts: &LossBreakdown) -> BTreeMap<String, f64> {
    parts.components().iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Run configuration in the flat `key = value` format.
#[pyclass(unsendable)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Config> {
        let inner = match text {
            Some(t) => RunConfig::parse(t).map_err(to_py)?,
            None => RunConfig::default(),
        };
        Ok(Config { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Config> {
        Ok(Config {
            inner: RunConfig::load(&path).map_err(to_py)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, value).map_err(PyValueError::new_err)?;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn total_iters(&self) -> usize {
        self.inner.total_iters()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(image_size={}, stages={:?}, out_dir={:?})",
            self.inner.image_size,
            self.inner.stage_iters,
            self.inner.out_dir
        )
    }
}

/// Step-by-step training on a synthetic split generated in memory or loaded
/// from the configured data directory.
#[pyclass(unsendable)]
struct Trainer {
    inner: CoreTrainer,
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (config, n_train = None, data_seed = 0))]
    fn new(config: &Config, n_train: Option<usize>, data_seed: u64) -> PyResult<Trainer> {
        let cfg = config.inner.clone();
        let inner = match n_train {
            Some(n) => {
                let split = synthdata::make_split(n, 0, data_seed, cfg.image_size).map_err(to_py)?;
                CoreTrainer::with_pairs(cfg, split.train_pairs)
            }
            None => CoreTrainer::new(cfg),
        }
        .map_err(to_py)?;
        Ok(Trainer { inner })
    }

    #[getter]
    fn iteration(&self) -> usize {
        self.inner.iteration
    }

    /// One global iteration; returns the loss components.
    fn step(&mut self) -> PyResult<BTreeMap<String, f64>> {
        if self.inner.iteration >= self.inner.cfg.total_iters() {
            return Err(PyValueError::new_err("schedule already complete"));
        }
        self.inner.step().map(|p| breakdown(&p)).map_err(to_py)
    }

    /// Trains to the end of the schedule; returns the checkpoint path.
    fn run(&mut self) -> PyResult<PathBuf> {
        self.inner.run().map(|s| s.checkpoint).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn resume_from(&mut self, path: PathBuf) -> PyResult<()> {
        self.inner.resume_from(&path).map_err(to_py)
    }

    /// Parsing accuracy and cross-entropy over the training pairs.
    fn parsing_metrics(&self) -> PyResult<(f64, f64)> {
        let m = harness::eval::parsing_metrics(&self.inner.models, self.inner.pairs(), self.inner.cfg.batch_size)
            .map_err(to_py)?;
        Ok((m.accuracy, m.ce))
    }
}

/// Writes a synthetic dataset; returns the train and test ids.
#[pyfunction]
#[pyo3(signature = (out, n_train, n_test, seed, size = 64))]
fn make_data(out: PathBuf, n_train: usize, n_test: usize, seed: u64, size: usize) -> PyResult<(Vec<String>, Vec<String>)> {
    let split = synthdata::make_data(&out, n_train, n_test, seed, size).map_err(to_py)?;
    let ids = |m: &synthdata::Manifest| m.entries.iter().map(|e| e.id.clone()).collect();
    Ok((ids(&split.train), ids(&split.test)))
}

/// Trains from a configuration file; returns the final checkpoint path.
#[pyfunction]
#[pyo3(signature = (config, resume = None))]
fn train(config: &Config, resume: Option<PathBuf>) -> PyResult<PathBuf> {
    harness::train(config.inner.clone(), resume.as_deref())
        .map(|s| s.checkpoint)
        .map_err(to_py)
}

/// Scores a checkpoint on a test split; returns `(id, psnr, perceptual_distance)` rows.
#[pyfunction]
fn evaluate(checkpoint: PathBuf, data: PathBuf, out: PathBuf) -> PyResult<Vec<(String, f64, f64)>> {
    let rows = harness::evaluate(&checkpoint, &data, &out).map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.id, r.psnr, r.perceptual_distance)).collect())
}

/// Renders `source` in the pose of `pose`; returns `(width, height)`.
#[pyfunction]
#[pyo3(signature = (checkpoint, source, pose, out, data = None))]
fn generate(checkpoint: PathBuf, source: &str, pose: &str, out: PathBuf, data: Option<PathBuf>) -> PyResult<(usize, usize)> {
    let img = harness::generate(&checkpoint, data.as_deref(), source, pose, &out).map_err(to_py)?;
    Ok((img.width, img.height))
}

/// Runs the ablation grid; returns `(variant, iterations, perceptual_distance, psnr)` rows.
#[pyfunction]
#[pyo3(signature = (config, variants = "full,no-sn,no-wass,no-both,no-fft"))]
fn ablate(config: &Config, variants: &str) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let variants = Variant::parse_list(variants).map_err(to_py)?;
    let report = harness::ablate(&config.inner, &variants).map_err(to_py)?;
    Ok(report
        .rows
        .iter()
        .map(|r| (r.variant.name().to_string(), r.iterations, r.perceptual_distance, r.psnr))
        .collect())
}

/// Half spectrum of a real power-of-two plane as `(re, im)` row lists.
#[pyfunction]
fn fft2(plane: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let m = matrix(&plane, "plane")?;
    let (h, w) = (m.dim(0), m.dim(1));
    let grid = rfft2(&m.reshape(&[1, 1, h, w]).map_err(to_py)?).map_err(to_py)?;
    let hw = grid.half_width();
    let rows = |v: &[f64]| v.chunks(hw).map(<[f64]>::to_vec).collect();
    Ok((rows(grid.re()), rows(grid.im())))
}

/// Inverse of [`fft2`] for a plane of the given width.
#[pyfunction]
fn ifft2(re: Vec<Vec<f64>>, im: Vec<Vec<f64>>, width: usize) -> PyResult<Vec<Vec<f64>>> {
    let r = matrix(&re, "re")?;
    let i = matrix(&im, "im")?;
    if r.shape() != i.shape() {
        return Err(PyValueError::new_err("re and im differ in shape"));
    }
    let grid = ComplexGrid::new(1, 1, r.dim(0), width, r.to_vec(), i.to_vec()).map_err(to_py)?;
    let x = irfft2(&grid).map_err(to_py)?;
    Ok(x.data().chunks(width).map(<[f64]>::to_vec).collect())
}

/// Largest singular value estimated by `steps` power iterations.
#[pyfunction]
#[pyo3(signature = (weight, steps = 100, seed = 0))]
fn spectral_norm(weight: Vec<Vec<f64>>, steps: usize, seed: u64) -> PyResult<f64> {
    use rand::SeedableRng;
    let w = matrix(&weight, "weight")?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut st = SnState::random("w", w.dim(0), w.dim(1), &mut rng);
    for _ in 0..steps {
        st = power_iteration_step(&w, &st).map_err(to_py)?;
    }
    Ok(st.sigma)
}

/// Entropic OT cost between two uniformly weighted point clouds.
#[pyfunction]
#[pyo3(signature = (x, y, eps = 0.05, max_iters = 100, tol = 1e-6))]
fn sinkhorn_distance(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, eps: f64, max_iters: usize, tol: f64) -> PyResult<f64> {
    let cfg = SinkhornConfig { eps, max_iters, tol };
    let r = core_sinkhorn(&matrix(&x, "x")?, &matrix(&y, "y")?, cfg).map_err(to_py)?;
    Ok(r.cost.item())
}

#[pyfunction]
#[pyo3(signature = (a, b, max_val = 1.0))]
fn psnr(a: Vec<f64>, b: Vec<f64>, max_val: f64) -> PyResult<f64> {
    posegan::metrics::psnr(&a, &b, max_val).map_err(to_py)
}

#[pymodule]
fn posegan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Trainer>()?;
    m.add_function(wrap_pyfunction!(make_data, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(fft2, m)?)?;
    m.add_function(wrap_pyfunction!(ifft2, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_norm, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn_distance, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add("LOSS_CSV_HEADER", LossBreakdown::CSV_HEADER)?;
    Ok(())
}
