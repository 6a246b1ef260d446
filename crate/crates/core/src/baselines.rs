//! Classic summarizers used as comparison points.

use rand::seq::index;

use crate::clustering::{kmeans, KMeansOptions};
use crate::linalg::{argmin, sq_dist, Matrix};
use crate::rng::{rng_for, TAG_RANDOM_SUMMARY};
use crate::summary::SummaryResult;
use crate::{Error, Result};

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    Ok(())
}

/// Evenly spaced frames `round(i (n-1) / (k-1))`, endpoints included.
pub fn uniform_summary(n: usize, k: usize) -> Result<SummaryResult> {
    check_k(n, k)?;
    let frames = if k == 1 {
        vec![0]
    } else {
        (0..k)
            .map(|i| (i as f64 * (n - 1) as f64 / (k - 1) as f64).round() as usize)
            .collect()
    };
    Ok(SummaryResult::new("uniform", frames))
}

/// `k` distinct frames drawn uniformly without replacement, sorted.
pub fn random_summary(n: usize, k: usize, seed: u64) -> Result<SummaryResult> {
    check_k(n, k)?;
    let mut rng = rng_for(seed, &[TAG_RANDOM_SUMMARY]);
    let mut frames = index::sample(&mut rng, n, k).into_vec();
    frames.sort_unstable();
    Ok(SummaryResult::new("random", frames))
}

/// k-means on features; per cluster, the frame nearest its centroid.
///
/// A cluster left empty by k-means takes the nearest frame not already
/// chosen, so the summary always has `k` distinct frames.
pub fn vsumm_centroid(features: &Matrix, k: usize, seed: u64) -> Result<SummaryResult> {
    check_k(features.rows(), k)?;
    let fit = kmeans(features, k, seed, KMeansOptions::default())?;
    let mut members = vec![Vec::new(); k];
    for (i, &l) in fit.labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut frames = vec![usize::MAX; k];
    let mut taken = vec![false; features.rows()];
    for (j, m) in members.iter().enumerate() {
        let c = fit.centroids.row(j);
        if let Some(best) = argmin(m.iter().map(|&i| sq_dist(features.row(i), c))) {
            frames[j] = m[best];
            taken[m[best]] = true;
        }
    }
    for (j, slot) in frames.iter_mut().enumerate() {
        if *slot != usize::MAX {
            continue;
        }
        let c = fit.centroids.row(j);
        let best = argmin((0..features.rows()).map(|i| {
            if taken[i] {
                f64::INFINITY
            } else {
                sq_dist(features.row(i), c)
            }
        }))
        .expect("k <= n leaves a free frame");
        *slot = best;
        taken[best] = true;
    }
    Ok(SummaryResult::new("vsumm", frames))
}

/// Content-change detection: frames with the largest L1 jump from their
/// predecessor (frame 0 scores zero), returned in ascending order.
pub fn change_detect_summary(features: &Matrix, k: usize) -> Result<SummaryResult> {
    let n = features.rows();
    check_k(n, k)?;
    let scores = change_scores(features);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut frames = order[..k].to_vec();
    frames.sort_unstable();
    Ok(SummaryResult::new("change", frames))
}

pub fn change_scores(features: &Matrix) -> Vec<f64> {
    (0..features.rows())
        .map(|t| {
            if t == 0 {
                0.0
            } else {
                features
                    .row(t)
                    .iter()
                    .zip(features.row(t - 1))
                    .map(|(a, b)| (a - b).abs())
                    .sum()
            }
        })
        .collect()
}
