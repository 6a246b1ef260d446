use log::warn;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::{loss_and_grad, pool, LossInput, LossSettings, LossWeights, Pooling, TrainMode};
use super::network::{Architecture, Autoencoder};
use crate::clustering::{sample_cluster, ClusterPartition};
use crate::dataset::SceneDataset;
use crate::linalg::{argmin, sq_dist, Matrix};
use crate::summary::SummaryResult;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Upper bound on frames per step (`k * sample_size`).
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_dims: Vec<usize>,
    pub latent_dim: usize,
    /// Frames drawn from every cluster per step.
    pub sample_size: usize,
    pub mode: TrainMode,
    pub pooling: Pooling,
    pub weights: LossWeights,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 100,
            hidden_dims: vec![128],
            latent_dim: 64,
            sample_size: 8,
            mode: TrainMode::SelfSupervised,
            pooling: Pooling::Mean,
            weights: LossWeights::default(),
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings: 2048-d embedding, batch 64, Adam at 1e-3, 100 epochs.
    pub fn full_scale() -> Self {
        TrainConfig {
            latent_dim: 2048,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 || self.sample_size == 0 || self.latent_dim == 0 {
            return fail("batch_size, sample_size and latent_dim must be positive".into());
        }
        if self.hidden_dims.contains(&0) {
            return fail("hidden layer widths must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return fail("adam betas must lie in [0, 1)".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail("adam eps must be positive".into());
        }
        let w = self.weights;
        if [w.recon, w.nce, w.gt]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return fail("loss weights must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            weights: self.weights,
            pooling: self.pooling,
            mode: self.mode,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Per-cluster sample size after applying the batch cap.
    pub fn effective_sample_size(&self, k: usize) -> usize {
        if k * self.sample_size <= self.batch_size {
            self.sample_size
        } else {
            (self.batch_size / k).max(1)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Autoencoder,
    /// Mean loss of each epoch.
    pub history: Vec<f64>,
    pub sample_size: usize,
}

/// Fits the autoencoder on cluster samples of `ds`.
pub fn train(ds: &SceneDataset, partition: &ClusterPartition, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = ds.n_frames();
    if partition.n_frames() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: partition.n_frames(),
        });
    }
    let k = partition.k;
    if k < 2 {
        return Err(Error::TooFewClusters(k));
    }
    let features = ds.feature_matrix();
    let gt_inputs = match cfg.mode {
        TrainMode::Supervised => {
            let kf = partition.gt_keyframes.as_ref().ok_or(Error::MissingGtKeyframes)?;
            Some(features.select_rows(kf))
        }
        TrainMode::SelfSupervised => None,
    };

    let sample_size = cfg.effective_sample_size(k);
    if sample_size != cfg.sample_size {
        warn!(
            "{k} clusters x {} samples exceeds batch size {}; using {sample_size} per cluster",
            cfg.sample_size, cfg.batch_size
        );
    }
    let arch = Architecture::new(ds.dim(), cfg.hidden_dims.clone(), cfg.latent_dim)?;
    let mut params = Autoencoder::init(arch, cfg.seed);
    let mut adam = Adam::new(cfg.adam(), params.param_count());
    let settings = cfg.loss_settings();
    let steps_per_epoch = n.div_ceil(k * sample_size);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut counter = 0u64;
    for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let clusters = (0..k)
                .map(|j| {
                    let s = sample_cluster(partition, j, sample_size, cfg.seed, counter)?;
                    Ok(features.select_rows(&s.frame_indices))
                })
                .collect::<Result<Vec<Matrix>>>()?;
            counter += 1;
            let input = LossInput {
                clusters: &clusters,
                gt_inputs: gt_inputs.as_ref(),
            };
            let (terms, grad) = loss_and_grad(&params, &input, &settings)?;
            adam.step(&mut params, &grad);
            epoch_loss += terms.total;
        }
        let mean = epoch_loss / steps_per_epoch as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at epoch {}",
                history.len()
            )));
        }
        history.push(mean);
    }
    Ok(TrainOutcome {
        params,
        history,
        sample_size,
    })
}

/// Picks, per cluster, the frame whose encoding is nearest the pooled
/// encoding of the whole cluster. Keyframes are returned in cluster order.
pub fn select_keyframes(
    params: &Autoencoder,
    ds: &SceneDataset,
    partition: &ClusterPartition,
    pooling: Pooling,
) -> Result<SummaryResult> {
    if partition.n_frames() != ds.n_frames() {
        return Err(Error::DimensionMismatch {
            expected: ds.n_frames(),
            actual: partition.n_frames(),
        });
    }
    let features = ds.feature_matrix();
    let frames = partition
        .members
        .iter()
        .enumerate()
        .map(|(j, members)| {
            if members.is_empty() {
                return Err(Error::EmptyCluster(j));
            }
            let codes = members
                .iter()
                .map(|&i| params.encode(features.row(i)))
                .collect::<Result<Vec<_>>>()?;
            let codes = Matrix::from_rows(&codes)?;
            let p = pool(&codes, pooling)?;
            let best = argmin(codes.iter_rows().map(|h| sq_dist(h, &p))).expect("nonempty");
            Ok(members[best])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryResult::new("scenesum", frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cluster_features;
    use crate::dataset::{generate_synthetic, SyntheticConfig};

    fn small_scene() -> SceneDataset {
        generate_synthetic(&SyntheticConfig {
            n_frames: 120,
            dim: 12,
            seed: 5,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 15,
            hidden_dims: vec![16],
            latent_dim: 8,
            sample_size: 4,
            seed: 3,
            learning_rate: 3e-3,
            ..Default::default()
        }
    }

    #[test]
    fn full_scale_is_valid() {
        let cfg = TrainConfig::full_scale();
        cfg.validate().unwrap();
        assert_eq!(
            (cfg.batch_size, cfg.learning_rate, cfg.latent_dim, cfg.epochs),
            (64, 0.001, 2048, 100)
        );
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: f64::NAN,
                ..Default::default()
            },
            TrainConfig {
                beta1: 1.0,
                ..Default::default()
            },
            TrainConfig {
                latent_dim: 0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn batch_cap_shrinks_samples() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.effective_sample_size(4), 8);
        assert_eq!(cfg.effective_sample_size(10), 6);
        assert_eq!(cfg.effective_sample_size(40), 1);
        assert_eq!(cfg.effective_sample_size(100), 1);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = small_scene();
        let p = cluster_features(&ds.feature_matrix(), 4, 0, true).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let out = train(&ds, &p, &cfg).unwrap();
        assert!(out.history.is_empty());
        let arch = Architecture::new(12, vec![16], 8).unwrap();
        assert_eq!(out.params, Autoencoder::init(arch, cfg.seed));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let ds = small_scene();
        let p = cluster_features(&ds.feature_matrix(), 4, 0, true).unwrap();
        let a = train(&ds, &p, &small_cfg()).unwrap();
        assert!(a.history.iter().all(|v| v.is_finite()));
        assert!(
            a.history.last().unwrap() < a.history.first().unwrap(),
            "{:?}",
            a.history
        );
        let b = train(&ds, &p, &small_cfg()).unwrap();
        let bits = |n: &Autoencoder| n.values().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
    }

    #[test]
    fn supervised_needs_gt() {
        let ds = small_scene();
        let p = cluster_features(&ds.feature_matrix(), 4, 0, true).unwrap();
        let cfg = TrainConfig {
            mode: TrainMode::Supervised,
            ..small_cfg()
        };
        assert!(matches!(train(&ds, &p, &cfg), Err(Error::MissingGtKeyframes)));
    }

    fn identity_encoder(dim: usize) -> Autoencoder {
        let mut net = Autoencoder::zeros(Architecture::new(dim, vec![], dim).unwrap());
        for l in net.encoder.layers.iter_mut().chain(net.decoder.layers.iter_mut()) {
            for i in 0..dim {
                l.weights[i * dim + i] = 1.0;
            }
        }
        net
    }

    #[test]
    fn singleton_clusters_select_themselves() {
        let ds = SceneDataset::new("s", 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], None).unwrap();
        let p = ClusterPartition::from_labels(3, vec![2, 0, 1]).unwrap();
        let s = select_keyframes(&identity_encoder(2), &ds, &p, Pooling::Mean).unwrap();
        assert_eq!(s.frames, vec![1, 2, 0]);
    }

    #[test]
    fn duplicated_frame_beats_outlier() {
        // Cluster 0 = {v, w, v}: the mean sits nearer v, and of the two
        // v-frames the lower index wins.
        let v = [1.0f32, 1.0];
        let w = [4.0f32, -2.0];
        let mut feats = Vec::new();
        for r in [v, w, v, [9.0, 9.0]] {
            feats.extend_from_slice(&r);
        }
        let ds = SceneDataset::new("d", 2, feats, None).unwrap();
        let p = ClusterPartition::from_labels(2, vec![0, 0, 0, 1]).unwrap();
        let s = select_keyframes(&identity_encoder(2), &ds, &p, Pooling::Mean).unwrap();
        let mean = [(1.0 + 4.0 + 1.0) / 3.0, (1.0 - 2.0 + 1.0) / 3.0];
        let d = |r: [f32; 2]| (r[0] as f64 - mean[0]).powi(2) + (r[1] as f64 - mean[1]).powi(2);
        assert!(d(v) < d(w));
        assert_eq!(s.frames, vec![0, 3]);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let ds = SceneDataset::new("s", 2, vec![0.0; 4], None).unwrap();
        let p = ClusterPartition::from_labels(3, vec![0, 2]).unwrap();
        assert!(matches!(
            select_keyframes(&identity_encoder(2), &ds, &p, Pooling::Mean),
            Err(Error::EmptyCluster(1))
        ));
    }
}
