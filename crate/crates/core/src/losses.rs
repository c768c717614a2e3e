//! Training objectives: parsing, image reconstruction, feature statistics,
//! entropic optimal transport and the discriminator's own loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Conv2d;
use crate::maps::{ParsingMap, NUM_LABELS};
use crate::tensor::{no_grad, Tensor};

/// Index of the feature tap used by the correspondence loss (quarter
/// resolution).
pub const CORRESPONDENCE_TAP: usize = 1;

/// Fixed random-weight feature extractor: four conv3×3 + ReLU + avg-pool
/// stages with a tap after each.
pub struct FeatureNet {
    stages: Vec<Conv2d>,
}

impl FeatureNet {
    pub const WIDTHS: [usize; 5] = [3, 8, 16, 32, 32];

    pub fn new(seed: u64) -> FeatureNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stages = (0..4)
            .map(|i| {
                let (cin, cout) = (Self::WIDTHS[i], Self::WIDTHS[i + 1]);
                Conv2d::new(&format!("featnet.{i}"), cin, cout, 3, true, &mut rng).frozen()
            })
            .collect();
        FeatureNet { stages }
    }

    pub fn tap_channels(tap: usize) -> usize {
        Self::WIDTHS[tap + 1]
    }

    pub fn taps(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            h = conv.forward(&h)?.relu().avg_pool2()?;
            out.push(h.clone());
        }
        Ok(out)
    }

    /// Taps of a target image, never part of a gradient graph.
    pub fn target_taps(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        no_grad(|| self.taps(&x.detach()))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("l1_loss", a, b)?;
    Ok(a.sub(b)?.abs().mean())
}

/// Mean over pixels of `−log softmax(logits)[true label]`.
pub fn cross_entropy(logits: &Tensor, target: &ParsingMap) -> Result<Tensor> {
    let s = logits.shape();
    if s.len() != 4 || s[1] != NUM_LABELS {
        return Err(Error::invalid_shape("cross_entropy", s, "expected [B,8,H,W]"));
    }
    if (s[0], s[2], s[3]) != (target.batch(), target.height(), target.width()) {
        return Err(Error::shape("cross_entropy", s, &[target.batch(), NUM_LABELS, target.height(), target.width()]));
    }
    let pixels = (s[0] * s[2] * s[3]) as f64;
    let picked = logits.log_softmax(1)?.mul(&target.one_hot())?.sum();
    Ok(picked.mul_scalar(-1.0 / pixels))
}

/// Mean squared difference between generator features and target features.
pub fn correspondence_loss(features: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape("correspondence_loss", features, target)?;
    Ok(features.sub(target)?.square().mean())
}

pub fn perceptual_loss(net: &FeatureNet, generated: &Tensor, target: &Tensor) -> Result<Tensor> {
    let targets = net.target_taps(target)?;
    perceptual_from_taps(&net.taps(generated)?, &targets)
}

fn perceptual_from_taps(gen: &[Tensor], target: &[Tensor]) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0);
    for (g, t) in gen.iter().zip(target) {
        total = total.add(&l1_loss(g, t)?)?;
    }
    Ok(total)
}

/// `[B,C,C]` channel Gram matrices normalized by `C·H·W`.
pub fn gram(f: &Tensor) -> Result<Tensor> {
    if f.rank() != 4 {
        return Err(Error::invalid_shape("gram", f.shape(), "expected [B,C,H,W]"));
    }
    let (b, c, plane) = (f.dim(0), f.dim(1), f.dim(2) * f.dim(3));
    let flat = f.reshape(&[b, c, plane])?;
    Ok(flat.bmm(&flat.transpose()?)?.mul_scalar(1.0 / (c * plane) as f64))
}

pub fn style_loss(net: &FeatureNet, generated: &Tensor, target: &Tensor) -> Result<Tensor> {
    let targets = net.target_taps(target)?;
    style_from_taps(&net.taps(generated)?, &targets)
}

fn style_from_taps(gen: &[Tensor], target: &[Tensor]) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0);
    for (g, t) in gen.iter().zip(target) {
        total = total.add(&l1_loss(&gram(g)?, &gram(t)?)?)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    pub eps: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            eps: 0.05,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

pub struct SinkhornResult {
    /// `⟨γ, C⟩`, differentiable with respect to both point sets.
    pub cost: Tensor,
    /// L1 violation of the source marginal at exit.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_weights(w: &[f64], n: usize, which: &str) -> Result<()> {
    if w.len() != n {
        return Err(Error::InvalidWeights(format!("{which}: {} weights for {n} points", w.len())));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidWeights(format!("{which}: negative or non-finite weight")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("{which}: weights sum to {s}")));
    }
    Ok(())
}

/// `[n,m]` squared Euclidean distances between rows of `x` and `y`.
pub fn squared_distances(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1) {
        return Err(Error::shape("squared_distances", x.shape(), y.shape()));
    }
    let (n, m, d) = (x.dim(0), y.dim(0), x.dim(1));
    let diff = x.reshape(&[n, 1, d])?.sub(&y.reshape(&[1, m, d])?)?;
    diff.square().sum_axis(2, false)
}

fn ln_weights(w: &[f64], shape: &[usize]) -> Result<Tensor> {
    Tensor::new(w.iter().map(|v| v.ln()).collect(), shape)
}

/// Entropic optimal transport between weighted point sets `x: [n,d]` and
/// `y: [m,d]` under squared Euclidean cost, by log-domain Sinkhorn updates
/// that stay on the autodiff graph.
pub fn sinkhorn(x: &Tensor, a: &[f64], y: &Tensor, b: &[f64], cfg: SinkhornConfig) -> Result<SinkhornResult> {
    if cfg.eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("sinkhorn eps {} must be positive", cfg.eps)));
    }
    let cost = squared_distances(x, y)?;
    let (n, m) = (cost.dim(0), cost.dim(1));
    check_weights(a, n, "source")?;
    check_weights(b, m, "target")?;
    let log_a = ln_weights(a, &[n, 1])?;
    let log_b = ln_weights(b, &[1, m])?;
    let inv = 1.0 / cfg.eps;
    let scaled = cost.mul_scalar(-inv);

    let mut f = Tensor::zeros(&[n, 1]);
    let mut g = Tensor::zeros(&[1, m]);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        f = scaled.add(&g.mul_scalar(inv))?.add(&log_b)?.logsumexp_axis(1, true)?.mul_scalar(-cfg.eps);
        g = scaled.add(&f.mul_scalar(inv))?.add(&log_a)?.logsumexp_axis(0, true)?.mul_scalar(-cfg.eps);
        residual = row_residual(scaled.data(), f.data(), g.data(), a, b, inv);
        if residual < cfg.tol {
            break;
        }
    }
    if residual >= cfg.tol {
        log::warn!("sinkhorn stopped after {iterations} iterations with marginal residual {residual:.3e}");
    }
    let log_plan = scaled.add(&f.mul_scalar(inv))?.add(&g.mul_scalar(inv))?.add(&log_a)?.add(&log_b)?;
    let total = log_plan.exp().mul(&cost)?.sum();
    Ok(SinkhornResult {
        cost: total,
        residual,
        iterations,
        converged: residual < cfg.tol,
    })
}

fn row_residual(scaled: &[f64], f: &[f64], g: &[f64], a: &[f64], b: &[f64], inv: f64) -> f64 {
    let m = g.len();
    a.iter()
        .enumerate()
        .map(|(i, &ai)| {
            let row: f64 = (0..m)
                .map(|j| (scaled[i * m + j] + (f[i] + g[j]) * inv).exp() * ai * b[j])
                .sum();
            (row - ai).abs()
        })
        .sum()
}

/// Sinkhorn cost between two batches of embeddings, each an empirical
/// distribution with uniform weights.
pub fn sinkhorn_distance(real: &Tensor, fake: &Tensor, cfg: SinkhornConfig) -> Result<SinkhornResult> {
    let a = vec![1.0 / real.dim(0) as f64; real.dim(0)];
    let b = vec![1.0 / fake.dim(0) as f64; fake.dim(0)];
    sinkhorn(real, &a, fake, &b, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub parsing_l1: f64,
    pub cor: f64,
    pub l1: f64,
    pub perc: f64,
    pub style: f64,
    pub adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            parsing_l1: 5.0,
            cor: 1.0,
            l1: 5.0,
            perc: 1.0,
            style: 100.0,
            adv: 1.0,
        }
    }
}

/// Unweighted loss components together with the weights that combine them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub parsing_l1: f64,
    pub ce: f64,
    pub l1: f64,
    pub cor: f64,
    pub perc: f64,
    pub style: f64,
    pub wass: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "iter,l1,ce,cor,perc,style,wass,total";

    pub fn weighted_total(&self) -> f64 {
        let w = &self.weights;
        w.parsing_l1 * self.parsing_l1
            + self.ce
            + w.cor * self.cor
            + w.l1 * self.l1
            + w.perc * self.perc
            + w.style * self.style
            + w.adv * self.wass
    }

    /// Sum of the parsing and image breakdowns of a joint step.
    pub fn combine(&self, other: &LossBreakdown) -> LossBreakdown {
        LossBreakdown {
            parsing_l1: self.parsing_l1 + other.parsing_l1,
            ce: self.ce + other.ce,
            l1: self.l1 + other.l1,
            cor: self.cor + other.cor,
            perc: self.perc + other.perc,
            style: self.style + other.style,
            wass: self.wass + other.wass,
            total: self.total + other.total,
            weights: self.weights,
        }
    }

    /// Generator objective without the adversarial term.
    pub fn reconstruction_total(&self) -> f64 {
        self.total - self.weights.adv * self.wass
    }

    /// One CSV row; the `l1` column reports both L1 terms summed.
    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{iter},{},{},{},{},{},{},{}",
            self.parsing_l1 + self.l1,
            self.ce,
            self.cor,
            self.perc,
            self.style,
            self.wass,
            self.total
        )
    }

    pub fn components(&self) -> [(&'static str, f64); 8] {
        [
            ("parsing_l1", self.parsing_l1),
            ("ce", self.ce),
            ("l1", self.l1),
            ("cor", self.cor),
            ("perc", self.perc),
            ("style", self.style),
            ("wass", self.wass),
            ("total", self.total),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|(_, v)| v.is_finite())
    }

    pub fn report(&self) -> String {
        self.components()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A differentiable total together with its component values.
pub struct Loss {
    pub total: Tensor,
    pub parts: LossBreakdown,
}

/// `λ·L1(softmax(logits), onehot(target)) + CE(logits, target)`.
pub fn parsing_loss(logits: &Tensor, target: &ParsingMap, weights: LossWeights) -> Result<Loss> {
    let probs = logits.softmax(1)?;
    let l1 = l1_loss(&probs, &target.one_hot())?;
    let ce = cross_entropy(logits, target)?;
    let total = l1.mul_scalar(weights.parsing_l1).add(&ce)?;
    Ok(Loss {
        parts: LossBreakdown {
            parsing_l1: l1.item(),
            ce: ce.item(),
            total: total.item(),
            weights,
            ..Default::default()
        },
        total,
    })
}

/// The adversarial contribution to the generator objective.
pub enum AdversarialTerm<'a> {
    /// Sinkhorn cost between discriminator embeddings of real and fake batches.
    Sinkhorn {
        real: &'a Tensor,
        fake: &'a Tensor,
        config: SinkhornConfig,
    },
    /// `−mean(D(fake))` summed over scales.
    Hinge { fake_scores: &'a [Tensor] },
    None,
}

pub struct ImageLossInputs<'a> {
    pub generated: &'a Tensor,
    pub target: &'a Tensor,
    /// Generator features projected to the correspondence tap's shape.
    pub features: &'a Tensor,
    pub adversarial: AdversarialTerm<'a>,
}

/// `λ_c·cor + λ_ℓ·L1 + λ_p·perc + λ_s·style + λ_a·adv`. Also returns the
/// Sinkhorn diagnostics when that term was used.
pub fn image_loss(
    net: &FeatureNet,
    inputs: ImageLossInputs<'_>,
    weights: LossWeights,
) -> Result<(Loss, Option<SinkhornDiagnostics>)> {
    let ImageLossInputs {
        generated,
        target,
        features,
        adversarial,
    } = inputs;
    let target_taps = net.target_taps(target)?;
    let gen_taps = net.taps(generated)?;
    let l1 = l1_loss(generated, target)?;
    let cor = correspondence_loss(features, &target_taps[CORRESPONDENCE_TAP])?;
    let perc = perceptual_from_taps(&gen_taps, &target_taps)?;
    let style = style_from_taps(&gen_taps, &target_taps)?;
    let mut diag = None;
    let adv = match adversarial {
        AdversarialTerm::Sinkhorn { real, fake, config } => {
            let r = sinkhorn_distance(real, fake, config)?;
            diag = Some(SinkhornDiagnostics {
                residual: r.residual,
                iterations: r.iterations,
                converged: r.converged,
            });
            r.cost
        }
        AdversarialTerm::Hinge { fake_scores } => {
            let mut t = Tensor::scalar(0.0);
            for s in fake_scores {
                t = t.sub(&s.mean())?;
            }
            t
        }
        AdversarialTerm::None => Tensor::scalar(0.0),
    };
    let total = cor
        .mul_scalar(weights.cor)
        .add(&l1.mul_scalar(weights.l1))?
        .add(&perc.mul_scalar(weights.perc))?
        .add(&style.mul_scalar(weights.style))?
        .add(&adv.mul_scalar(weights.adv))?;
    let parts = LossBreakdown {
        l1: l1.item(),
        cor: cor.item(),
        perc: perc.item(),
        style: style.item(),
        wass: adv.item(),
        total: total.item(),
        weights,
        ..Default::default()
    };
    Ok((Loss { total, parts }, diag))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornDiagnostics {
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiscriminatorObjective {
    #[default]
    Hinge,
    Wgan,
}

/// Summed over scales. Hinge: `mean(relu(1−D(real))) + mean(relu(1+D(fake)))`;
/// WGAN critic: `mean(D(fake)) − mean(D(real))`.
pub fn discriminator_loss(real: &[Tensor], fake: &[Tensor], objective: DiscriminatorObjective) -> Result<Tensor> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} real vs {} fake score maps",
            real.len(),
            fake.len()
        )));
    }
    let mut total = Tensor::scalar(0.0);
    for (r, f) in real.iter().zip(fake) {
        let term = match objective {
            DiscriminatorObjective::Hinge => r
                .neg()
                .add_scalar(1.0)
                .relu()
                .mean()
                .add(&f.add_scalar(1.0).relu().mean())?,
            DiscriminatorObjective::Wgan => f.mean().sub(&r.mean())?,
        };
        total = total.add(&term)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn l1_cases() {
        let mut r = rng(0);
        let a = Tensor::randn(&[2, 3], 1.0, &mut r);
        assert_eq!(l1_loss(&a, &a).unwrap().item(), 0.0);
        assert!((l1_loss(&a.add_scalar(1.0), &a).unwrap().item() - 1.0).abs() < 1e-12);
        let b = Tensor::randn(&[2, 3], 1.0, &mut r);
        let expect: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 6.0;
        assert!((l1_loss(&a, &b).unwrap().item() - expect).abs() < 1e-12);
        assert!(l1_loss(&a, &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let map = ParsingMap::new(vec![0, 1, 2, 7], 1, 2, 2).unwrap();
        let uniform = cross_entropy(&Tensor::zeros(&[1, 8, 2, 2]), &map).unwrap().item();
        assert!((uniform - 8f64.ln()).abs() < 1e-12);
        let confident = cross_entropy(&map.one_hot().mul_scalar(20.0), &map).unwrap().item();
        assert!((confident - (7.0 * (-20f64).exp()).ln_1p()).abs() < 1e-15);
        assert!(cross_entropy(&map.one_hot().mul_scalar(21.0), &map).unwrap().item() < 1e-8);

        let mut r = rng(1);
        let logits = Tensor::randn(&[1, 8, 2, 2], 2.0, &mut r);
        let d = logits.data();
        let mut expect = 0.0;
        for p in 0..4 {
            let z: f64 = (0..8).map(|c| d[c * 4 + p].exp()).sum();
            let l = map.labels()[p] as usize;
            expect -= (d[l * 4 + p].exp() / z).ln();
        }
        assert!((cross_entropy(&logits, &map).unwrap().item() - expect / 4.0).abs() < 1e-12);
        assert!(cross_entropy(&Tensor::zeros(&[1, 7, 2, 2]), &map).is_err());
    }

    #[test]
    fn gram_cases() {
        let g = gram(&Tensor::full(&[1, 1, 3, 3], 2.0)).unwrap();
        assert!((g.item() - 4.0).abs() < 1e-12);
        let f = Tensor::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0], &[1, 2, 2, 2]).unwrap();
        let g = gram(&f).unwrap();
        assert_eq!(g.data()[1], 0.0);
        assert_eq!(g.data()[2], 0.0);
    }

    #[test]
    fn feature_losses_vanish_on_equal_images() {
        let net = FeatureNet::new(3);
        let mut r = rng(2);
        let img = Tensor::rand_uniform(&[1, 3, 16, 16], -1.0, 1.0, &mut r);
        assert_eq!(perceptual_loss(&net, &img, &img).unwrap().item(), 0.0);
        assert_eq!(style_loss(&net, &img, &img).unwrap().item(), 0.0);
        assert!(perceptual_loss(&net, &img.mul_scalar(2.0), &img).unwrap().item() > 0.0);
        let taps = net.taps(&img).unwrap();
        assert_eq!(taps[CORRESPONDENCE_TAP].shape(), &[1, FeatureNet::tap_channels(1), 4, 4]);
    }

    #[test]
    fn sinkhorn_rejects_bad_weights() {
        let x = Tensor::zeros(&[2, 1]);
        let r = sinkhorn(&x, &[0.5, 0.6], &x, &[0.5, 0.5], SinkhornConfig::default());
        assert!(matches!(r, Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn sinkhorn_point_masses() {
        let x = Tensor::new(vec![0.0, 0.0], &[1, 2]).unwrap();
        let y = Tensor::new(vec![0.6, 0.8], &[1, 2]).unwrap();
        let cfg = SinkhornConfig {
            eps: 1e-3,
            ..Default::default()
        };
        let r = sinkhorn(&x, &[1.0], &y, &[1.0], cfg).unwrap();
        assert!((r.cost.item() - 1.0).abs() < 1e-2);
        assert!(r.converged);
    }

    #[test]
    fn sinkhorn_self_distance_small() {
        let mut r = rng(4);
        let x = Tensor::randn(&[4, 3], 1.0, &mut r);
        let w = [0.25; 4];
        let cfg = SinkhornConfig {
            eps: 1e-3,
            max_iters: 2000,
            tol: 1e-6,
        };
        assert!(sinkhorn(&x, &w, &x, &w, cfg).unwrap().cost.item() < 1e-2);
    }

    #[test]
    fn sinkhorn_reports_non_convergence() {
        let mut r = rng(5);
        let x = Tensor::randn(&[5, 2], 1.0, &mut r);
        let y = Tensor::randn(&[5, 2], 1.0, &mut r);
        let w = [0.2; 5];
        let cfg = SinkhornConfig {
            eps: 1e-3,
            max_iters: 1,
            tol: 1e-12,
        };
        let res = sinkhorn(&x, &w, &y, &w, cfg).unwrap();
        assert!(!res.converged && res.iterations == 1 && res.residual > 0.0);
    }

    #[test]
    fn sinkhorn_gradient_through_iterations() {
        let mut r = rng(6);
        let x = Tensor::randn(&[3, 2], 1.0, &mut r);
        let y = Tensor::randn(&[4, 2], 1.0, &mut r);
        let a = [0.2, 0.5, 0.3];
        let b = [0.25; 4];
        let cfg = SinkhornConfig {
            eps: 0.5,
            max_iters: 30,
            tol: 0.0,
        };
        let rep = check_gradients(&[x, y], |t| Ok(sinkhorn(&t[0], &a, &t[1], &b, cfg)?.cost)).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn parsing_loss_components() {
        let map = ParsingMap::new(vec![3, 3, 1, 0], 1, 2, 2).unwrap();
        let perfect = parsing_loss(&map.one_hot().mul_scalar(40.0), &map, LossWeights::default()).unwrap();
        assert!(perfect.parts.total < 1e-12);
        let mut r = rng(7);
        let logits = Tensor::randn(&[1, 8, 2, 2], 1.0, &mut r);
        let w = LossWeights {
            parsing_l1: 0.0,
            ..Default::default()
        };
        let only_ce = parsing_loss(&logits, &map, w).unwrap();
        assert!((only_ce.parts.total - cross_entropy(&logits, &map).unwrap().item()).abs() < 1e-12);
        let full = parsing_loss(&logits, &map, LossWeights::default()).unwrap();
        assert!((full.parts.total - full.parts.weighted_total()).abs() < 1e-9);
    }

    #[test]
    fn discriminator_loss_cases() {
        let hi = vec![Tensor::full(&[2, 1, 2, 2], 1.5)];
        let lo = vec![Tensor::full(&[2, 1, 2, 2], -1.0)];
        assert_eq!(discriminator_loss(&hi, &lo, DiscriminatorObjective::Hinge).unwrap().item(), 0.0);
        let z = vec![Tensor::zeros(&[2, 1, 2, 2])];
        assert_eq!(discriminator_loss(&z, &z, DiscriminatorObjective::Hinge).unwrap().item(), 2.0);
        let mut r = rng(8);
        let real = Tensor::randn(&[3, 1, 2, 2], 1.0, &mut r);
        let fake = Tensor::randn(&[3, 1, 2, 2], 1.0, &mut r);
        let expect: f64 = real.data().iter().map(|v| (1.0 - v).max(0.0)).sum::<f64>() / 12.0
            + fake.data().iter().map(|v| (1.0 + v).max(0.0)).sum::<f64>() / 12.0;
        let got = discriminator_loss(&[real.clone()], &[fake.clone()], DiscriminatorObjective::Hinge).unwrap();
        assert!((got.item() - expect).abs() < 1e-12);
        let wgan = discriminator_loss(&[real.clone()], &[fake.clone()], DiscriminatorObjective::Wgan).unwrap();
        assert!((wgan.item() - (fake.mean().item() - real.mean().item())).abs() < 1e-12);
    }

    #[test]
    fn image_loss_single_weight_selects_component() {
        let net = FeatureNet::new(1);
        let mut r = rng(9);
        let g = Tensor::rand_uniform(&[2, 3, 16, 16], -1.0, 1.0, &mut r);
        let t = Tensor::rand_uniform(&[2, 3, 16, 16], -1.0, 1.0, &mut r);
        let feats = Tensor::randn(&[2, 16, 4, 4], 1.0, &mut r);
        let er = Tensor::randn(&[2, 5], 1.0, &mut r);
        let ef = Tensor::randn(&[2, 5], 1.0, &mut r);
        let run = |w: LossWeights| {
            let inputs = ImageLossInputs {
                generated: &g,
                target: &t,
                features: &feats,
                adversarial: AdversarialTerm::Sinkhorn {
                    real: &er,
                    fake: &ef,
                    config: SinkhornConfig::default(),
                },
            };
            image_loss(&net, inputs, w).unwrap().0.parts
        };
        let zero = LossWeights {
            parsing_l1: 0.0,
            cor: 0.0,
            l1: 0.0,
            perc: 0.0,
            style: 0.0,
            adv: 0.0,
        };
        assert_eq!(run(zero).total, 0.0);
        let all = run(LossWeights::default());
        assert!((all.total - all.weighted_total()).abs() < 1e-9);
        assert!((run(LossWeights { perc: 1.0, ..zero }).total - all.perc).abs() < 1e-12);
        assert!((run(LossWeights { adv: 1.0, ..zero }).total - all.wass).abs() < 1e-12);
    }
}
