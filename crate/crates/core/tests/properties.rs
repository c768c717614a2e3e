//! Randomized invariants across the numeric core, the losses and the harness.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use posegan::fourier::{irfft2, rfft2};
use posegan::harness::optim::cosine_lr;
use posegan::harness::Checkpoint;
use posegan::losses::{
    cross_entropy, l1_loss, parsing_loss, perceptual_loss, sinkhorn_distance, style_loss, FeatureNet, LossBreakdown,
    LossWeights, SinkhornConfig,
};
use posegan::maps::{ParsingMap, NUM_LABELS};
use posegan::metrics::{perceptual_distance, psnr};
use posegan::norms::{per_region_pool, power_iteration_step, spectral_normalize, SnState};
use posegan::resfft::ResFftBlock;
use posegan::Tensor;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig::with_cases(cases)
}

fn pow2() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![2usize, 4, 8, 16])
}

fn seeded(seed: u64, shape: &[usize]) -> Tensor {
    Tensor::rand_uniform(shape, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn fft_is_linear(h in pow2(), w in pow2(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = seeded(seed, &[1, 2, h, w]);
        let y = seeded(seed ^ 0xabc, &[1, 2, h, w]);
        let lhs = rfft2(&x.mul_scalar(a).add(&y.mul_scalar(b)).unwrap()).unwrap();
        let rhs = rfft2(&x).unwrap().scale(a).add(&rfft2(&y).unwrap().scale(b)).unwrap();
        prop_assert!(common::max_abs_diff(lhs.re(), rhs.re()) < 1e-9);
        prop_assert!(common::max_abs_diff(lhs.im(), rhs.im()) < 1e-9);
    }

    #[test]
    fn fft_satisfies_parseval(h in pow2(), w in pow2(), seed in any::<u64>()) {
        let x = seeded(seed, &[1, 1, h, w]);
        let spec = rfft2(&x).unwrap();
        let energy: f64 = x.data().iter().map(|v| v * v).sum();
        let mut spectral = 0.0;
        for u in 0..h {
            for v in 0..w {
                spectral += spec.full_bin(0, 0, u, v).norm_sqr();
            }
        }
        spectral /= (h * w) as f64;
        prop_assert!((energy - spectral).abs() <= 1e-6 * energy.max(1e-12));
    }

    #[test]
    fn full_spectrum_is_conjugate_symmetric(h in pow2(), w in pow2(), seed in any::<u64>()) {
        let spec = rfft2(&seeded(seed, &[1, 1, h, w])).unwrap();
        let full = common::naive_dft2(seeded(seed, &[1, 1, h, w]).data(), h, w);
        for u in 0..h {
            for v in 0..w {
                let mirrored = full[((h - u) % h) * w + (w - v) % w];
                prop_assert!((mirrored - full[u * w + v].conj()).norm() < 1e-9);
                prop_assert!((spec.full_bin(0, 0, u, v) - full[u * w + v]).norm() < 1e-9);
            }
        }
        prop_assert!(common::max_abs_diff(irfft2(&spec).unwrap().data(), seeded(seed, &[1, 1, h, w]).data()) < 1e-9);
    }

    #[test]
    fn add_and_mul_commute(seed in any::<u64>(), n in 1usize..12) {
        let a = seeded(seed, &[n, 3]);
        let b = seeded(seed.wrapping_add(1), &[n, 3]);
        prop_assert_eq!(a.add(&b).unwrap().to_vec(), b.add(&a).unwrap().to_vec());
        prop_assert_eq!(a.mul(&b).unwrap().to_vec(), b.mul(&a).unwrap().to_vec());
    }

    #[test]
    fn matmul_with_identity_and_associativity(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, n in 1usize..6) {
        let a = seeded(seed, &[m, k]);
        let b = seeded(seed ^ 1, &[k, n]);
        let c = seeded(seed ^ 2, &[n, 2]);
        let eye = Tensor::from_fn(&[k, k], |i| if i / k == i % k { 1.0 } else { 0.0 });
        prop_assert_eq!(a.matmul(&eye).unwrap().to_vec(), a.to_vec());
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(common::max_abs_diff(left.data(), right.data()) < 1e-12);
        let oracle = common::naive_matmul(a.data(), b.data(), m, k, n);
        prop_assert!(common::max_abs_diff(a.matmul(&b).unwrap().data(), &oracle) < 1e-12);
    }

    #[test]
    fn identity_pointwise_conv_is_identity(seed in any::<u64>(), c in 1usize..4, h in 1usize..6, w in 1usize..6) {
        let x = seeded(seed, &[2, c, h, w]);
        let k = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 });
        prop_assert_eq!(x.conv2d(&k, 1, 0).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn conv_matches_direct_loop(seed in any::<u64>(), stride in 1usize..3, pad in 0usize..2) {
        let x = seeded(seed, &[2, 2, 7, 7]);
        let k = seeded(seed ^ 7, &[3, 2, 3, 3]);
        let got = x.conv2d(&k, stride, pad).unwrap();
        prop_assert!(common::max_abs_diff(got.data(), &common::naive_conv2d(&x, &k, stride, pad)) < 1e-12);
    }

    #[test]
    fn shared_subexpression_gradient_equals_unrolled(seed in any::<u64>()) {
        let data = seeded(seed, &[5]).to_vec();
        let x = Tensor::new(data.clone(), &[5]).unwrap().requires_grad_();
        let s = x.tanh();
        s.mul(&s).unwrap().add(&s).unwrap().sum().backward().unwrap();
        let y = Tensor::new(data, &[5]).unwrap().requires_grad_();
        y.tanh().mul(&y.tanh()).unwrap().add(&y.tanh()).unwrap().sum().backward().unwrap();
        prop_assert!(common::max_abs_diff(&x.grad().unwrap(), &y.grad().unwrap()) < 1e-14);
    }

    #[test]
    fn power_iteration_keeps_unit_vectors_and_bounds_gain(seed in any::<u64>(), m in 1usize..10, n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Tensor::randn(&[m, n], 1.0, &mut rng);
        let mut st = SnState::random("w", m, n, &mut rng);
        let mut prev = 0.0f64;
        let wtw = w.transpose().unwrap().matmul(&w).unwrap();
        let mut sym = SnState::random("s", n, n, &mut rng);
        for _ in 0..500 {
            st = power_iteration_step(&w, &st).unwrap();
            let un: f64 = st.u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let vn: f64 = st.v.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((un - 1.0).abs() < 1e-9 && (vn - 1.0).abs() < 1e-9);
            sym = power_iteration_step(&wtw, &sym).unwrap();
            prop_assert!(sym.sigma >= prev - 1e-9 * prev.max(1.0));
            prev = sym.sigma;
        }
        let wsn = spectral_normalize(&w, &st).unwrap();
        for _ in 0..10 {
            let h = Tensor::randn(&[n, 1], 1.0, &mut rng);
            let out = wsn.matmul(&h).unwrap();
            let gain = out.data().iter().map(|v| v * v).sum::<f64>().sqrt()
                / h.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(gain <= 1.0 + 1e-3);
        }
    }

    #[test]
    fn region_pools_reconstruct_global_mean(seed in any::<u64>(), h in 1usize..7, w in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Tensor::randn(&[1, 3, h, w], 1.0, &mut rng);
        let labels: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_range(&mut rng, 0..NUM_LABELS as u8)).collect();
        let map = ParsingMap::new(labels, 1, h, w).unwrap();
        let hist = map.histogram(0);
        let mut recon = [0.0; 3];
        for (j, &count) in hist.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let pooled = per_region_pool(&f, &map, j).unwrap();
            for c in 0..3 {
                recon[c] += pooled.data()[c] * count as f64 / (h * w) as f64;
            }
        }
        for c in 0..3 {
            let global = f.data()[c * h * w..(c + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
            prop_assert!((recon[c] - global).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_breakdown_total_matches_parts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::randn(&[2, NUM_LABELS, 4, 4], 2.0, &mut rng);
        let labels: Vec<u8> = (0..32).map(|i| (i % NUM_LABELS) as u8).collect();
        let map = ParsingMap::new(labels, 2, 4, 4).unwrap();
        let loss = parsing_loss(&logits, &map, LossWeights::default()).unwrap();
        prop_assert!((loss.parts.weighted_total() - loss.parts.total).abs() < 1e-9);
        prop_assert!((loss.total.item() - loss.parts.total).abs() < 1e-12);
        prop_assert!(loss.parts.parsing_l1 >= 0.0 && loss.parts.ce >= 0.0);
        let joint = loss.parts.combine(&LossBreakdown { l1: 0.5, total: 2.5, weights: LossWeights::default(), ..Default::default() });
        prop_assert!((joint.weighted_total() - joint.total).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_error(base in 0.0f64..0.5, e1 in 0.001f64..0.2, extra in 0.001f64..0.2) {
        let a = vec![base; 16];
        let b1: Vec<f64> = a.iter().map(|v| v + e1).collect();
        let b2: Vec<f64> = a.iter().map(|v| v + e1 + extra).collect();
        prop_assert!(psnr(&a, &b1, 1.0).unwrap() > psnr(&a, &b2, 1.0).unwrap());
    }

    #[test]
    fn cosine_schedule_is_monotone_with_exact_endpoints(total in 1usize..500) {
        prop_assert_eq!(cosine_lr(0, total, 1e-4, 1e-6), 1e-4);
        prop_assert_eq!(cosine_lr(total, total, 1e-4, 1e-6), 1e-6);
        for s in 0..total {
            prop_assert!(cosine_lr(s + 1, total, 1e-4, 1e-6) <= cosine_lr(s, total, 1e-4, 1e-6));
        }
    }

    #[test]
    fn checkpoint_bytes_roundtrip(entries in prop::collection::btree_map("[a-z.]{1,12}", prop::collection::vec(-1e6f64..1e6, 0..20), 0..6)) {
        let mut ck = Checkpoint::default();
        for (name, data) in &entries {
            ck.insert(name.clone(), &[data.len()], data.clone());
        }
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back, ck);
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn sinkhorn_is_symmetric_and_self_minimal(seed in any::<u64>(), n in 2usize..6) {
        let p = seeded(seed, &[n, 3]).mul_scalar(0.3);
        let q = seeded(seed ^ 99, &[n, 3]).mul_scalar(0.3);
        let cfg = SinkhornConfig { eps: 0.1, max_iters: 100_000, tol: 1e-11 };
        let pq = sinkhorn_distance(&p, &q, cfg).unwrap().cost.item();
        let qp = sinkhorn_distance(&q, &p, cfg).unwrap().cost.item();
        let pp = sinkhorn_distance(&p, &p, cfg).unwrap().cost.item();
        prop_assert!((pq - qp).abs() < 1e-9);
        prop_assert!(pp <= pq + 1e-9);
    }

    #[test]
    fn image_losses_nonnegative_and_zero_on_equal(seed in any::<u64>()) {
        let net = FeatureNet::new(5);
        let a = seeded(seed, &[1, 3, 16, 16]);
        let b = seeded(seed ^ 5, &[1, 3, 16, 16]);
        for f in [perceptual_loss, style_loss] {
            prop_assert!(f(&net, &a, &b).unwrap().item() >= 0.0);
            prop_assert_eq!(f(&net, &a, &a).unwrap().item(), 0.0);
        }
        prop_assert!(l1_loss(&a, &b).unwrap().item() >= 0.0);
        prop_assert_eq!(l1_loss(&a, &a).unwrap().item(), 0.0);
        let d = perceptual_distance(&net, &a, &b).unwrap();
        let r = perceptual_distance(&net, &b, &a).unwrap();
        prop_assert!(common::max_abs_diff(&d, &r) < 1e-9 && d[0] >= 0.0);
        let map = ParsingMap::new((0..256).map(|i| (i % NUM_LABELS) as u8).collect(), 1, 16, 16).unwrap();
        prop_assert!(cross_entropy(&seeded(seed, &[1, NUM_LABELS, 16, 16]), &map).unwrap().item() >= 0.0);
    }

    #[test]
    fn res_fft_block_preserves_shape_and_zero_block_is_identity(seed in any::<u64>(), c in 1usize..4, h in pow2(), w in pow2(), fft in any::<bool>()) {
        let x = seeded(seed, &[2, c, h, w]);
        let block = ResFftBlock::new("b", c, fft, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(block.forward(&x).unwrap().shape().to_vec(), x.shape().to_vec());
        let zero = ResFftBlock::zeros("z", c, fft);
        prop_assert_eq!(zero.forward(&x).unwrap().to_vec(), x.to_vec());
    }
}
