//! Stage one: split the frame sequence into `k` clusters of nearly equal size.
//!
//! Clusters are fitted with k-means++ / Lloyd and then re-assigned under a
//! capacity constraint. The supervised path clusters ground-truth poses
//! instead of features and records the frame nearest each pose centroid.
//!
//! Ties are always broken toward the lowest index (frame or centroid).

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Pose;
use crate::linalg::{argmin, dist, sq_dist, Matrix};
use crate::rng::{rng_for, TAG_KMEANS, TAG_SAMPLE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub k: usize,
    pub labels: Vec<usize>,
    #[serde(skip)]
    pub members: Vec<Vec<usize>>,
    #[serde(skip)]
    pub centroids: Option<Matrix>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gt_keyframes: Option<Vec<usize>>,
}

impl ClusterPartition {
    /// Builds a partition from labels. Members are listed in ascending frame order.
    pub fn from_labels(k: usize, labels: Vec<usize>) -> Result<Self> {
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidClusterCount { k, n: labels.len() });
            }
            members[l].push(i);
        }
        Ok(ClusterPartition {
            k,
            labels,
            members,
            centroids: None,
            gt_keyframes: None,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Sets centroids to the mean of each cluster's rows in `points`.
    pub fn with_member_means(mut self, points: &Matrix) -> Self {
        let mut c = Matrix::zeros(self.k, points.cols());
        for (j, m) in self.members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let row = c.row_mut(j);
            for &i in m {
                for (r, v) in row.iter_mut().zip(points.row(i)) {
                    *r += v;
                }
            }
            row.iter_mut().for_each(|r| *r /= m.len() as f64);
        }
        self.centroids = Some(c);
        self
    }

    /// JSON export: `{"k", "labels", "gt_keyframes"?}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("partition serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            k: usize,
            labels: Vec<usize>,
            gt_keyframes: Option<Vec<usize>>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<partition>".into(),
            source,
        })?;
        let mut p = ClusterPartition::from_labels(raw.k, raw.labels)?;
        p.gt_keyframes = raw.gt_keyframes;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    /// Inertia after each assignment step, in iteration order.
    pub inertia_history: Vec<f64>,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let j = argmin(centroids.iter_rows().map(|c| sq_dist(point, c))).expect("k >= 1");
    (j, sq_dist(point, centroids.row(j)))
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, l) in labels.iter_mut().enumerate() {
        let (j, d) = nearest(points.row(i), centroids);
        *l = j;
        inertia += d;
    }
    inertia
}

fn kmeans_pp_init(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut d2: Vec<f64> = points
        .iter_rows()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Every remaining point coincides with a chosen centre.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansFit> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering input".into()));
    }
    let mut rng = rng_for(seed, &[TAG_KMEANS]);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut inertia_history = Vec::new();
    let d = points.cols();

    for _ in 0..opts.max_iter {
        inertia_history.push(assign(points, &centroids, &mut labels));

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut updated = sums;
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                updated.row_mut(j).iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        for j in empty {
            // Reseed at the point worst served by its current centroid.
            let far = argmin(
                labels
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| -sq_dist(points.row(i), updated.row(l))),
            )
            .expect("n >= 1");
            let p = points.row(far).to_vec();
            updated.row_mut(j).copy_from_slice(&p);
            // Keep the reseeded point from being reused by another empty cluster.
            labels[far] = j;
            counts[j] = 1;
        }

        let shift = (0..k)
            .map(|j| dist(centroids.row(j), updated.row(j)))
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < opts.tol {
            break;
        }
    }
    inertia_history.push(assign(points, &centroids, &mut labels));
    Ok(KMeansFit {
        centroids,
        labels,
        inertia_history,
    })
}

/// Greedy capacity-constrained assignment.
///
/// Frames are visited in descending order of the gap between their second
/// nearest and nearest centroid; each goes to the nearest centroid that still
/// has room. A cluster may only grow past `floor(n/k)` while enough frames
/// remain to bring every other cluster up to `floor(n/k)`, so with the
/// default cap every size is `floor(n/k)` or `ceil(n/k)`.
pub fn balance_assignment(points: &Matrix, centroids: &Matrix, cap: usize) -> Result<Vec<usize>> {
    let n = points.rows();
    let k = centroids.rows();
    if k == 0 {
        return Err(Error::InvalidClusterCount { k, n });
    }
    if cap.saturating_mul(k) < n {
        return Err(Error::InfeasibleCapacity { cap, k, n });
    }
    let floor = (n / k).min(cap);

    let dists: Vec<Vec<f64>> = points
        .iter_rows()
        .map(|p| centroids.iter_rows().map(|c| dist(p, c)).collect())
        .collect();
    let margin = |row: &[f64]| -> f64 {
        if row.len() < 2 {
            return 0.0;
        }
        let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
        for &d in row {
            if d < a {
                b = a;
                a = d;
            } else if d < b {
                b = d;
            }
        }
        b - a
    };
    let margins: Vec<f64> = dists.iter().map(|r| margin(r)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ascending frame order among equal margins.
    order.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]));

    let mut sizes = vec![0usize; k];
    let mut labels = vec![usize::MAX; n];
    let mut deficit = floor * k;
    for (placed, &i) in order.iter().enumerate() {
        let remaining_after = n - placed - 1;
        let mut ranked: Vec<usize> = (0..k).collect();
        ranked.sort_by(|&a, &b| dists[i][a].total_cmp(&dists[i][b]));
        let target = ranked
            .into_iter()
            .find(|&j| sizes[j] < cap && (sizes[j] < floor || remaining_after >= deficit))
            .ok_or(Error::InfeasibleCapacity { cap, k, n })?;
        if sizes[target] < floor {
            deficit -= 1;
        }
        sizes[target] += 1;
        labels[i] = target;
    }
    Ok(labels)
}

pub fn default_cap(n: usize, k: usize) -> usize {
    n.div_ceil(k)
}

/// Feature-space clustering: k-means, then balancing when `balanced` is set.
pub fn cluster_features(points: &Matrix, k: usize, seed: u64, balanced: bool) -> Result<ClusterPartition> {
    let fit = kmeans(points, k, seed, KMeansOptions::default())?;
    let labels = if balanced {
        balance_assignment(points, &fit.centroids, default_cap(points.rows(), k))?
    } else {
        fit.labels
    };
    Ok(ClusterPartition::from_labels(k, labels)?.with_member_means(points))
}

fn pose_matrix(poses: &[Pose]) -> Matrix {
    let rows: Vec<[f64; 3]> = poses.iter().map(Pose::to_array).collect();
    Matrix::from_rows(&rows).expect("fixed width")
}

/// Clusters ground-truth poses and marks, per cluster, the frame whose pose
/// is nearest the pose centroid.
pub fn gt_pose_clustering(
    poses: Option<&[Pose]>,
    k: usize,
    seed: u64,
    balanced: bool,
) -> Result<ClusterPartition> {
    let poses = poses.ok_or(Error::MissingPoses)?;
    let points = pose_matrix(poses);
    let mut partition = cluster_features(&points, k, seed, balanced)?;
    let centroids = partition.centroids.as_ref().expect("set by cluster_features");
    let keyframes = partition
        .members
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let c = centroids.row(j);
            let best = argmin(m.iter().map(|&i| sq_dist(points.row(i), c))).ok_or(Error::EmptyCluster(j))?;
            Ok(m[best])
        })
        .collect::<Result<Vec<_>>>()?;
    partition.gt_keyframes = Some(keyframes);
    Ok(partition)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSample {
    pub cluster_id: usize,
    pub frame_indices: Vec<usize>,
}

/// Draws `size` members of one cluster: without replacement when the cluster
/// is large enough, with replacement otherwise. The stream is keyed by
/// `(seed, cluster_id, counter)`.
pub fn sample_cluster(
    partition: &ClusterPartition,
    cluster_id: usize,
    size: usize,
    seed: u64,
    counter: u64,
) -> Result<ClusterSample> {
    let members = partition
        .members
        .get(cluster_id)
        .filter(|m| !m.is_empty())
        .ok_or(Error::EmptyCluster(cluster_id))?;
    let mut rng = rng_for(seed, &[TAG_SAMPLE, cluster_id as u64, counter]);
    let frame_indices = if size <= members.len() {
        index::sample(&mut rng, members.len(), size)
            .into_iter()
            .map(|i| members[i])
            .collect()
    } else {
        (0..size)
            .map(|_| members[rng.gen_range(0..members.len())])
            .collect()
    };
    Ok(ClusterSample {
        cluster_id,
        frame_indices,
    })
}
