use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenesum::linalg::Matrix;
use scenesum::selector::*;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn identity_autoencoder(dim: usize) -> Autoencoder {
    let mut net = Autoencoder::zeros(Architecture::new(dim, vec![], dim).unwrap());
    for l in net.encoder.layers.iter_mut().chain(net.decoder.layers.iter_mut()) {
        for i in 0..dim {
            l.weights[i * dim + i] = 1.0;
        }
    }
    net
}

fn settings(mode: TrainMode) -> LossSettings {
    LossSettings {
        mode,
        ..Default::default()
    }
}

fn finite_difference(net: &Autoencoder, input: &LossInput, s: &LossSettings, step: f64) -> Vec<f64> {
    let n = net.param_count();
    (0..n)
        .map(|p| {
            let mut plus = net.clone();
            *plus.values_mut().nth(p).unwrap() += step;
            let mut minus = net.clone();
            *minus.values_mut().nth(p).unwrap() -= step;
            let lp = total_loss(&plus, input, s).unwrap().total;
            let lm = total_loss(&minus, input, s).unwrap().total;
            (lp - lm) / (2.0 * step)
        })
        .collect()
}

#[test]
fn gradient_matches_central_differences() {
    // 4 -> 3 -> 2 encoder, two clusters of two samples each.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Autoencoder::init(Architecture::new(4, vec![3], 2).unwrap(), 9);
    let clusters = vec![random_matrix(&mut rng, 2, 4), random_matrix(&mut rng, 2, 4)];
    let gt = random_matrix(&mut rng, 2, 4);
    for mode in [TrainMode::SelfSupervised, TrainMode::Supervised] {
        let input = LossInput {
            clusters: &clusters,
            gt_inputs: Some(&gt),
        };
        let s = settings(mode);
        let (_, grad) = loss_and_grad(&net, &input, &s).unwrap();
        let fd = finite_difference(&net, &input, &s, 1e-4);
        for (a, f) in grad.values().zip(&fd) {
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-6);
            assert!(rel < 1e-4, "{mode:?}: analytic {a} vs fd {f}");
        }
    }
}

#[test]
fn max_pooling_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Autoencoder::init(Architecture::new(3, vec![4], 3).unwrap(), 2);
    let clusters: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 2, 3)).collect();
    let input = LossInput {
        clusters: &clusters,
        gt_inputs: None,
    };
    let s = LossSettings {
        pooling: Pooling::Max,
        ..Default::default()
    };
    let (_, grad) = loss_and_grad(&net, &input, &s).unwrap();
    let fd = finite_difference(&net, &input, &s, 1e-6);
    for (a, f) in grad.values().zip(&fd) {
        assert!((a - f).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {f}");
    }
}

/// Straight-line recomputation of reconstruction + ordered-pair InfoNCE +
/// ground-truth pull, with plain cosine similarity.
fn oracle_loss(net: &Autoencoder, clusters: &[Matrix], gt: Option<&Matrix>) -> f64 {
    let f = |x: &[f64]| net.encode(x).unwrap();
    let g = |h: &[f64]| net.decode(h).unwrap();
    let mut recon = 0.0;
    let mut m = 0.0;
    let mut pools = Vec::new();
    for c in clusters {
        let mut p = vec![0.0; net.architecture.latent_dim];
        for x in c.iter_rows() {
            let h = f(x);
            let r = g(&h);
            for i in 0..x.len() {
                recon += (x[i] - r[i]).powi(2);
            }
            m += 1.0;
            for d in 0..p.len() {
                p[d] += h[d] / c.rows() as f64;
            }
        }
        pools.push(p);
    }
    let cos = |a: &[f64], b: &[f64]| {
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        ab / (na * nb)
    };
    let mut nce = 0.0;
    for a in 0..pools.len() {
        for b in 0..pools.len() {
            if a != b {
                let num = cos(&pools[a], &pools[a]).exp();
                let den = num + cos(&pools[a], &pools[b]).exp();
                nce += -(num / den).ln();
            }
        }
    }
    let mut sup = 0.0;
    if let Some(gt) = gt {
        for (j, x) in gt.iter_rows().enumerate() {
            let h = f(x);
            sup += h.iter().zip(&pools[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        sup /= pools.len() as f64;
    }
    recon / m + nce + sup
}

#[test]
fn total_loss_matches_monolithic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..5 {
        let net = Autoencoder::init(Architecture::new(4, vec![], 2).unwrap(), trial);
        let clusters: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 2, 4)).collect();
        let gt = random_matrix(&mut rng, 3, 4);
        let input = LossInput {
            clusters: &clusters,
            gt_inputs: Some(&gt),
        };
        let self_sup = total_loss(&net, &input, &settings(TrainMode::SelfSupervised)).unwrap();
        assert!((self_sup.total - oracle_loss(&net, &clusters, None)).abs() < 1e-10);
        let sup = total_loss(&net, &input, &settings(TrainMode::Supervised)).unwrap();
        assert!((sup.total - oracle_loss(&net, &clusters, Some(&gt))).abs() < 1e-10);
        // The supervised objective only adds a non-negative term.
        assert!(sup.gt > 0.0 && sup.total >= self_sup.total);
    }
}

#[test]
fn perfect_autoencoder_with_orthogonal_pools() {
    let net = identity_autoencoder(2);
    let clusters = vec![
        Matrix::from_rows(&[[1.0, 0.0], [3.0, 0.0]]).unwrap(),
        Matrix::from_rows(&[[0.0, 2.0], [0.0, 0.5]]).unwrap(),
    ];
    let input = LossInput {
        clusters: &clusters,
        gt_inputs: None,
    };
    let terms = total_loss(&net, &input, &LossSettings::default()).unwrap();
    assert_eq!(terms.recon, 0.0);
    let expected = 2.0 * (1.0 + (-1.0f64).exp()).ln();
    assert!((terms.total - expected).abs() < 1e-9);
    assert!((expected - 0.626524).abs() < 1e-6);
}

#[test]
fn gt_term_vanishes_when_keyframes_encode_to_pools() {
    let net = identity_autoencoder(2);
    let clusters = vec![
        Matrix::from_rows(&[[1.0, 1.0], [3.0, 1.0]]).unwrap(),
        Matrix::from_rows(&[[0.0, 2.0], [-2.0, 0.0]]).unwrap(),
    ];
    let gt = Matrix::from_rows(&[[2.0, 1.0], [-1.0, 1.0]]).unwrap();
    let input = LossInput {
        clusters: &clusters,
        gt_inputs: Some(&gt),
    };
    let sup = total_loss(&net, &input, &settings(TrainMode::Supervised)).unwrap();
    let unsup = total_loss(&net, &input, &settings(TrainMode::SelfSupervised)).unwrap();
    assert_eq!(sup.gt, 0.0);
    assert_eq!(sup.total, unsup.total);
}

#[test]
fn reconstruction_gradient_vanishes_at_perfect_reconstruction() {
    let net = identity_autoencoder(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clusters: Vec<Matrix> = (0..2).map(|_| random_matrix(&mut rng, 3, 3)).collect();
    let input = LossInput {
        clusters: &clusters,
        gt_inputs: None,
    };
    let s = LossSettings {
        weights: LossWeights {
            recon: 1.0,
            nce: 0.0,
            gt: 0.0,
        },
        ..Default::default()
    };
    let (terms, grad) = loss_and_grad(&net, &input, &s).unwrap();
    assert_eq!(terms.recon, 0.0);
    assert!(grad.values().all(|&g| g == 0.0));
}

#[test]
fn gradient_is_linear_in_contrastive_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Autoencoder::init(Architecture::new(4, vec![3], 2).unwrap(), 1);
    let clusters: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 2, 4)).collect();
    let input = LossInput {
        clusters: &clusters,
        gt_inputs: None,
    };
    let with = |recon: f64, nce: f64| {
        let s = LossSettings {
            weights: LossWeights { recon, nce, gt: 1.0 },
            ..Default::default()
        };
        loss_and_grad(&net, &input, &s).unwrap().1
    };
    let recon_only = with(1.0, 0.0);
    let single = with(1.0, 1.0);
    let double = with(1.0, 2.0);
    for ((r, s), d) in recon_only.values().zip(single.values()).zip(double.values()) {
        let nce_part = s - r;
        assert!((d - r - 2.0 * nce_part).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn self_similarity_loss_is_log_two(p in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        prop_assume!(p.iter().any(|v| v.abs() > 1e-3));
        prop_assert!((infonce_pair(&p, &p).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn infonce_is_scale_invariant(
        pair in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..6),
        alpha in 0.01f64..100.0,
        beta in 0.01f64..100.0,
    ) {
        let a: Vec<f64> = pair.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pair.iter().map(|p| p.1).collect();
        prop_assume!(a.iter().any(|v| v.abs() > 1e-2) && b.iter().any(|v| v.abs() > 1e-2));
        let sa: Vec<f64> = a.iter().map(|v| alpha * v).collect();
        let sb: Vec<f64> = b.iter().map(|v| beta * v).collect();
        let l = infonce_pair(&a, &b).unwrap();
        prop_assert!((infonce_pair(&sa, &sb).unwrap() - l).abs() < 1e-10);
        // log(1 + e^{s-1}) lies between the antipodal and identical values.
        prop_assert!(l >= (1.0 + (-2.0f64).exp()).ln() - 1e-12 && l <= std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn recon_loss_nonnegative_and_zero_only_on_equality(
        vals in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..20),
    ) {
        let x = Matrix::from_vec(vals.len(), 1, vals.iter().map(|v| v.0).collect()).unwrap();
        let y = Matrix::from_vec(vals.len(), 1, vals.iter().map(|v| v.1).collect()).unwrap();
        let l = recon_loss(&x, &y).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, x == y);
        prop_assert_eq!(recon_loss(&x, &x).unwrap(), 0.0);
    }
}
