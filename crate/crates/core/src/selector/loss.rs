//! Training objective: reconstruction + pairwise cluster InfoNCE, plus an
//! optional pull of each pooled feature toward the encoding of its
//! ground-truth keyframe. Gradients are derived by hand.

use serde::{Deserialize, Serialize};

use super::network::Autoencoder;
use crate::linalg::{dot, norm, Matrix};
use crate::{Error, Result};

/// Added to vector norms inside the training objective so that a collapsed
/// pooled feature does not divide by zero.
pub const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    SelfSupervised,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recon: f64,
    pub nce: f64,
    pub gt: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            nce: 1.0,
            gt: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossSettings {
    pub weights: LossWeights,
    pub pooling: Pooling,
    pub mode: TrainMode,
}

/// Unweighted terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon: f64,
    pub nce: f64,
    pub gt: f64,
    pub total: f64,
}

/// Reduces `N x D` latent rows to one `D` vector.
pub fn pool(rows: &Matrix, pooling: Pooling) -> Result<Vec<f64>> {
    if rows.rows() == 0 {
        return Err(Error::EmptyInput("pool over zero rows"));
    }
    Ok(pool_with_argmax(rows.iter_rows(), rows.cols(), pooling).0)
}

/// Returns the pooled vector and, for max pooling, the winning row per column.
fn pool_with_argmax<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    dim: usize,
    pooling: Pooling,
) -> (Vec<f64>, Vec<usize>) {
    match pooling {
        Pooling::Mean => {
            let mut acc = vec![0.0; dim];
            let mut n = 0usize;
            for r in rows {
                acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                n += 1;
            }
            acc.iter_mut().for_each(|a| *a /= n as f64);
            (acc, Vec::new())
        }
        Pooling::Max => {
            let mut acc = vec![f64::NEG_INFINITY; dim];
            let mut arg = vec![0usize; dim];
            for (i, r) in rows.enumerate() {
                for (d, &v) in r.iter().enumerate() {
                    if v > acc[d] {
                        acc[d] = v;
                        arg[d] = i;
                    }
                }
            }
            (acc, arg)
        }
    }
}

/// Mean over samples of the squared L2 reconstruction error.
pub fn recon_loss(x: &Matrix, x_rec: &Matrix) -> Result<f64> {
    if x.rows() != x_rec.rows() || x.cols() != x_rec.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.rows() * x.cols(),
            actual: x_rec.rows() * x_rec.cols(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("reconstruction batch"));
    }
    let total: f64 = x
        .as_slice()
        .iter()
        .zip(x_rec.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / x.rows() as f64)
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `-log(e^{s_aa} / (e^{s_aa} + e^{s_ab}))` with `s = cosine`.
fn infonce_from_sims(s_aa: f64, s_ab: f64) -> f64 {
    // log(1 + e^{s_ab - s_aa}), stable for either sign.
    let d = s_ab - s_aa;
    if d > 0.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    }
}

/// Contrastive loss treating the pooled features of two clusters as a
/// negative pair.
pub fn infonce_pair(p_a: &[f64], p_b: &[f64]) -> Result<f64> {
    let s_aa = cosine_sim(p_a, p_a)?;
    let s_ab = cosine_sim(p_a, p_b)?;
    Ok(infonce_from_sims(s_aa, s_ab))
}

fn guarded_cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / ((norm(a) + NORM_GUARD) * (norm(b) + NORM_GUARD))
}

/// Gradient of `guarded_cos(a, b)` with respect to `a`.
fn guarded_cos_grad_first(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (la, lb) = (norm(a), norm(b));
    let (na, nb) = (la + NORM_GUARD, lb + NORM_GUARD);
    let ab = dot(a, b);
    let radial = if la > 0.0 { ab / (na * na * nb * la) } else { 0.0 };
    a.iter()
        .zip(b)
        .map(|(ai, bi)| bi / (na * nb) - radial * ai)
        .collect()
}

/// Inputs for one evaluation of the objective.
#[derive(Debug, Clone, Copy)]
pub struct LossInput<'a> {
    /// One `N_j x input_dim` matrix of sampled frames per cluster.
    pub clusters: &'a [Matrix],
    /// `k x input_dim` features of the ground-truth keyframes, row `j` for cluster `j`.
    pub gt_inputs: Option<&'a Matrix>,
}

struct Forward {
    enc: Vec<Vec<Vec<Vec<f64>>>>,
    dec: Vec<Vec<Vec<Vec<f64>>>>,
    pools: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    gt_enc: Vec<Vec<Vec<f64>>>,
    terms: LossTerms,
}

fn check(params: &Autoencoder, input: &LossInput, settings: &LossSettings) -> Result<()> {
    let k = input.clusters.len();
    if k < 2 {
        return Err(Error::TooFewClusters(k));
    }
    if let Some(j) = input.clusters.iter().position(|c| c.rows() == 0) {
        return Err(Error::EmptyCluster(j));
    }
    let dim = params.architecture.input_dim;
    for c in input.clusters {
        if c.cols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: c.cols(),
            });
        }
    }
    if settings.mode == TrainMode::Supervised {
        let gt = input.gt_inputs.ok_or(Error::MissingGtKeyframes)?;
        if gt.rows() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: gt.rows(),
            });
        }
    }
    Ok(())
}

fn forward(params: &Autoencoder, input: &LossInput, settings: &LossSettings) -> Result<Forward> {
    check(params, input, settings)?;
    let latent = params.architecture.latent_dim;
    let k = input.clusters.len();
    let w = settings.weights;

    let mut enc = Vec::with_capacity(k);
    let mut dec = Vec::with_capacity(k);
    let mut pools = Vec::with_capacity(k);
    let mut argmax = Vec::with_capacity(k);
    let mut recon_sum = 0.0;
    let mut n_samples = 0usize;
    for cluster in input.clusters {
        let mut ce = Vec::with_capacity(cluster.rows());
        let mut cd = Vec::with_capacity(cluster.rows());
        for x in cluster.iter_rows() {
            let e = params.encoder.trace(x)?;
            let d = params.decoder.trace(e.last().expect("output"))?;
            let rec = d.last().expect("output");
            recon_sum += x.iter().zip(rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            n_samples += 1;
            ce.push(e);
            cd.push(d);
        }
        let (p, am) = pool_with_argmax(
            ce.iter().map(|t| t.last().expect("output").as_slice()),
            latent,
            settings.pooling,
        );
        pools.push(p);
        argmax.push(am);
        enc.push(ce);
        dec.push(cd);
    }
    let recon = recon_sum / n_samples as f64;

    let mut nce = 0.0;
    for a in 0..k {
        let s_aa = guarded_cos(&pools[a], &pools[a]);
        for b in 0..k {
            if a != b {
                nce += infonce_from_sims(s_aa, guarded_cos(&pools[a], &pools[b]));
            }
        }
    }

    let mut gt = 0.0;
    let mut gt_enc = Vec::new();
    if settings.mode == TrainMode::Supervised {
        let gt_inputs = input.gt_inputs.expect("checked");
        for (j, x) in gt_inputs.iter_rows().enumerate() {
            let e = params.encoder.trace(x)?;
            let h = e.last().expect("output");
            gt += h
                .iter()
                .zip(&pools[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            gt_enc.push(e);
        }
        gt /= k as f64;
    }

    let total = w.recon * recon + w.nce * nce + w.gt * gt;
    Ok(Forward {
        enc,
        dec,
        pools,
        argmax,
        gt_enc,
        terms: LossTerms {
            recon,
            nce,
            gt,
            total,
        },
    })
}

/// Evaluates the objective on one set of cluster samples.
pub fn total_loss(params: &Autoencoder, input: &LossInput, settings: &LossSettings) -> Result<LossTerms> {
    Ok(forward(params, input, settings)?.terms)
}

/// Objective value and its exact gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &Autoencoder,
    input: &LossInput,
    settings: &LossSettings,
) -> Result<(LossTerms, Autoencoder)> {
    let fw = forward(params, input, settings)?;
    let w = settings.weights;
    let k = input.clusters.len();
    let latent = params.architecture.latent_dim;
    let mut grads = params.zeros_like();

    // Gradient w.r.t. each pooled feature.
    let mut d_pool = vec![vec![0.0; latent]; k];
    if w.nce != 0.0 {
        for a in 0..k {
            let pa = &fw.pools[a];
            let s_aa = guarded_cos(pa, pa);
            // d s_aa / d p_a: both arguments are p_a.
            let g_self: Vec<f64> = guarded_cos_grad_first(pa, pa).iter().map(|v| 2.0 * v).collect();
            for b in 0..k {
                if a == b {
                    continue;
                }
                let pb = &fw.pools[b];
                let s_ab = guarded_cos(pa, pb);
                // dL/ds_ab = sigma, dL/ds_aa = -sigma.
                let sigma = 1.0 / (1.0 + (s_aa - s_ab).exp());
                let coef = w.nce * sigma;
                let ga = guarded_cos_grad_first(pa, pb);
                let gb = guarded_cos_grad_first(pb, pa);
                for d in 0..latent {
                    d_pool[a][d] += coef * (ga[d] - g_self[d]);
                    d_pool[b][d] += coef * gb[d];
                }
            }
        }
    }

    if settings.mode == TrainMode::Supervised && w.gt != 0.0 {
        for (j, trace) in fw.gt_enc.iter().enumerate() {
            let h = trace.last().expect("output");
            let diff: Vec<f64> = h
                .iter()
                .zip(&fw.pools[j])
                .map(|(a, b)| w.gt * 2.0 / k as f64 * (a - b))
                .collect();
            d_pool[j].iter_mut().zip(&diff).for_each(|(p, g)| *p -= g);
            params.encoder.backward(trace, &diff, &mut grads.encoder);
        }
    }

    let n_samples: usize = input.clusters.iter().map(Matrix::rows).sum();
    let recon_scale = w.recon * 2.0 / n_samples as f64;
    for (j, cluster) in input.clusters.iter().enumerate() {
        let n_j = cluster.rows();
        for (i, x) in cluster.iter_rows().enumerate() {
            let dec_trace = &fw.dec[j][i];
            let rec = dec_trace.last().expect("output");
            let d_rec: Vec<f64> = rec.iter().zip(x).map(|(r, v)| recon_scale * (r - v)).collect();
            let mut d_h = params.decoder.backward(dec_trace, &d_rec, &mut grads.decoder);
            match settings.pooling {
                Pooling::Mean => {
                    for (g, p) in d_h.iter_mut().zip(&d_pool[j]) {
                        *g += p / n_j as f64;
                    }
                }
                Pooling::Max => {
                    for (d, g) in d_h.iter_mut().enumerate() {
                        if fw.argmax[j][d] == i {
                            *g += d_pool[j][d];
                        }
                    }
                }
            }
            params.encoder.backward(&fw.enc[j][i], &d_h, &mut grads.encoder);
        }
    }
    Ok((fw.terms, grads))
}
