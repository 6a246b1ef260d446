//! End-to-end runs: summarize a dataset with a named method, score the
//! result, and aggregate sweeps over `(method, k, seed)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{change_detect_summary, random_summary, uniform_summary, vsumm_centroid};
use crate::clustering::{cluster_features, gt_pose_clustering};
use crate::dataset::{Pose, SceneDataset};
use crate::metrics::{auc_with, divergence_curve, DivergenceCurve, Integration};
use crate::selector::{select_keyframes, train, TrainConfig, TrainMode};
use crate::summary::SummaryResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Scenesum,
    ScenesumSupervised,
    Uniform,
    Random,
    Vsumm,
    Change,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Scenesum,
        Method::ScenesumSupervised,
        Method::Uniform,
        Method::Random,
        Method::Vsumm,
        Method::Change,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Scenesum => "scenesum",
            Method::ScenesumSupervised => "scenesum-supervised",
            Method::Uniform => "uniform",
            Method::Random => "random",
            Method::Vsumm => "vsumm",
            Method::Change => "change",
        }
    }

    pub fn needs_poses(self) -> bool {
        self == Method::ScenesumSupervised
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarizeConfig {
    pub k: usize,
    pub seed: u64,
    /// Capacity-balanced clusters for the two-stage methods.
    pub balanced: bool,
    pub train: TrainConfig,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig {
            k: 20,
            seed: 0,
            balanced: true,
            train: TrainConfig::default(),
        }
    }
}

pub fn summarize(ds: &SceneDataset, method: Method, cfg: &SummarizeConfig) -> Result<SummaryResult> {
    let n = ds.n_frames();
    let k = cfg.k;
    let summary = match method {
        Method::Uniform => uniform_summary(n, k)?,
        Method::Random => random_summary(n, k, cfg.seed)?,
        Method::Vsumm => vsumm_centroid(&ds.feature_matrix(), k, cfg.seed)?,
        Method::Change => change_detect_summary(&ds.feature_matrix(), k)?,
        Method::Scenesum | Method::ScenesumSupervised => {
            let (partition, mode) = if method == Method::ScenesumSupervised {
                let p = gt_pose_clustering(ds.poses(), k, cfg.seed, cfg.balanced)?;
                (p, TrainMode::Supervised)
            } else {
                let p = cluster_features(&ds.feature_matrix(), k, cfg.seed, cfg.balanced)?;
                (p, TrainMode::SelfSupervised)
            };
            let train_cfg = TrainConfig {
                mode,
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let outcome = train(ds, &partition, &train_cfg)?;
            select_keyframes(&outcome.params, ds, &partition, train_cfg.pooling)?
        }
    };
    let mut config = serde_json::to_value(cfg).expect("config serializes");
    config["method"] = method.name().into();
    config["train"]["mode"] = serde_json::to_value(if method == Method::ScenesumSupervised {
        TrainMode::Supervised
    } else {
        TrainMode::SelfSupervised
    })
    .expect("mode serializes");
    Ok(SummaryResult {
        method: method.name().to_string(),
        ..summary
    }
    .with_config(config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub method: String,
    pub k: usize,
    pub r_max: f64,
    pub steps: usize,
    pub auc: f64,
    #[serde(skip)]
    pub curve: DivergenceCurve,
}

pub fn keyframe_positions(ds: &SceneDataset, frames: &[usize]) -> Result<Vec<Pose>> {
    let poses = ds.require_poses()?;
    frames
        .iter()
        .map(|&f| {
            poses
                .get(f)
                .copied()
                .ok_or(Error::InvalidClusterCount { k: f, n: poses.len() })
        })
        .collect()
}

pub fn evaluate(
    ds: &SceneDataset,
    summary: &SummaryResult,
    r_max: f64,
    steps: usize,
    rule: Integration,
) -> Result<Evaluation> {
    let positions = keyframe_positions(ds, &summary.frames)?;
    let curve = divergence_curve(&positions, r_max, steps)?;
    Ok(Evaluation {
        method: summary.method.clone(),
        k: summary.k,
        r_max,
        steps,
        auc: auc_with(&curve, rule)?,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub method: Method,
    pub k: usize,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub r_max: f64,
    pub steps: usize,
    pub integration: Integration,
}

impl SweepPlan {
    /// Cells in `(method, k, seed)` order.
    pub fn cells(&self) -> Vec<(Method, usize, u64)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            for &k in &self.ks {
                for &s in &self.seeds {
                    out.push((m, k, s));
                }
            }
        }
        out
    }
}

pub fn run_cell(
    ds: &SceneDataset,
    plan: &SweepPlan,
    base: &SummarizeConfig,
    (method, k, seed): (Method, usize, u64),
) -> Result<SweepCell> {
    let cfg = SummarizeConfig {
        k,
        seed,
        ..base.clone()
    };
    let summary = summarize(ds, method, &cfg)?;
    let eval = evaluate(ds, &summary, plan.r_max, plan.steps, plan.integration)?;
    Ok(SweepCell {
        method,
        k,
        seed,
        auc: eval.auc,
    })
}

/// Sequential sweep; cells are returned in plan order.
pub fn run_sweep(ds: &SceneDataset, plan: &SweepPlan, base: &SummarizeConfig) -> Result<Vec<SweepCell>> {
    plan.cells()
        .into_iter()
        .map(|c| run_cell(ds, plan, base, c))
        .collect()
}

/// Mean and sample standard deviation per `(method, k)`, in order of first appearance.
pub fn aggregate(cells: &[SweepCell]) -> Vec<SweepAggregate> {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.method, c.k)) {
            keys.push((c.method, c.k));
        }
    }
    keys.into_iter()
        .map(|(method, k)| {
            let v: Vec<f64> = cells
                .iter()
                .filter(|c| c.method == method && c.k == k)
                .map(|c| c.auc)
                .collect();
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SweepAggregate {
                method,
                k,
                runs: n,
                mean,
                sd,
            }
        })
        .collect()
}

/// `method,k,seed,auc,sd`: one row per cell (empty `sd`), then one
/// `seed=avg` row per `(method, k)` carrying the mean AUC and its SD.
pub fn sweep_csv(cells: &[SweepCell], aggregates: &[SweepAggregate]) -> String {
    let mut out = String::from("method,k,seed,auc,sd\n");
    for c in cells {
        out.push_str(&format!("{},{},{},{},\n", c.method, c.k, c.seed, c.auc));
    }
    for a in aggregates {
        out.push_str(&format!("{},{},avg,{},{}\n", a.method, a.k, a.mean, a.sd));
    }
    out
}
