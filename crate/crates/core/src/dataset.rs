//! Pose-tagged frame sequences: the in-memory model, the on-disk manifest
//! format, and a seeded random-walk generator.
//!
//! On disk a dataset is a JSON manifest next to a raw little-endian `f32`
//! feature matrix and an optional `frame,x,y,z` pose table.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::{rng_for, TAG_FEATURES, TAG_NOISE, TAG_WALK};
use crate::{Error, Result};

/// Odometry position of a frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Pose { x, y, z }
    }

    pub fn planar(x: f64, y: f64) -> Self {
        Pose { x, y, z: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    scene_id: String,
    dim: usize,
    features: Vec<f32>,
    poses: Option<Vec<Pose>>,
}

impl SceneDataset {
    /// Validates and wraps a row-major `n_frames x dim` feature buffer.
    pub fn new(
        scene_id: impl Into<String>,
        dim: usize,
        features: Vec<f32>,
        poses: Option<Vec<Pose>>,
    ) -> Result<Self> {
        if dim == 0 || features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !features.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: features.len() % dim,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features".into()));
        }
        let n = features.len() / dim;
        if let Some(p) = &poses {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: p.len(),
                });
            }
            if p.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite("poses".into()));
            }
        }
        Ok(SceneDataset {
            scene_id: scene_id.into(),
            dim,
            features,
            poses,
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn n_frames(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Features widened to `f64`; all downstream arithmetic runs in `f64`.
    pub fn feature_matrix(&self) -> Matrix {
        let data = self.features.iter().map(|&v| v as f64).collect();
        Matrix::from_vec(self.n_frames(), self.dim, data).expect("validated shape")
    }

    pub fn poses(&self) -> Option<&[Pose]> {
        self.poses.as_deref()
    }

    pub fn require_poses(&self) -> Result<&[Pose]> {
        self.poses().ok_or(Error::MissingPoses)
    }

    pub fn without_poses(mut self) -> Self {
        self.poses = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scene_id: String,
    pub n_frames: usize,
    pub dim: usize,
    pub features: String,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<String>,
    /// Settings that produced the dataset, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

const DTYPE_F32LE: &str = "f32le";
const FEATURES_FILE: &str = "features.f32";
const POSES_FILE: &str = "poses.csv";

fn sibling(manifest_path: &Path, rel: &str) -> PathBuf {
    manifest_path
        .parent()
        .map(|p| p.join(rel))
        .unwrap_or_else(|| PathBuf::from(rel))
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<SceneDataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    if manifest.dtype != DTYPE_F32LE {
        return Err(Error::UnsupportedFormat(format!(
            "feature dtype {:?}",
            manifest.dtype
        )));
    }
    if manifest.n_frames == 0 || manifest.dim == 0 {
        return Err(Error::EmptyDataset);
    }

    let feat_path = sibling(manifest_path, &manifest.features);
    let bytes = fs::read(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
    let expected = manifest.n_frames * manifest.dim * 4;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: feat_path,
            expected,
            actual: bytes.len(),
        });
    }
    let features: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let poses = match &manifest.poses {
        Some(rel) => Some(read_pose_table(&sibling(manifest_path, rel), manifest.n_frames)?),
        None => None,
    };
    SceneDataset::new(manifest.scene_id, manifest.dim, features, poses)
}

fn read_pose_table(path: &Path, n_frames: usize) -> Result<Vec<Pose>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedPose {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["frame", "x", "y", "z"] {
        return Err(Error::MalformedPose {
            row: 0,
            reason: format!("unexpected header {:?}", header),
        });
    }
    let mut poses = Vec::with_capacity(n_frames);
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let bad = |reason: String| Error::MalformedPose { row, reason };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", record.len())));
        }
        let frame: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad frame index {:?}", &record[0])))?;
        if frame != i {
            return Err(bad(format!("frame index {frame} out of order, expected {i}")));
        }
        let mut coords = [0.0f64; 3];
        for (c, field) in coords.iter_mut().zip(record.iter().skip(1)) {
            *c = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad coordinate {field:?}")))?;
        }
        let pose = Pose::new(coords[0], coords[1], coords[2]);
        if !pose.is_finite() {
            return Err(bad("non-finite coordinate".into()));
        }
        poses.push(pose);
    }
    if poses.len() != n_frames {
        return Err(Error::MalformedPose {
            row: poses.len(),
            reason: format!("expected {n_frames} rows, got {}", poses.len()),
        });
    }
    Ok(poses)
}

/// Writes the manifest plus its feature binary (and pose table, if any) into
/// the manifest's directory.
pub fn save_dataset(ds: &SceneDataset, manifest_path: impl AsRef<Path>) -> Result<()> {
    save_dataset_with_config(ds, manifest_path, None)
}

/// As [`save_dataset`], recording `config` in the manifest.
pub fn save_dataset_with_config(
    ds: &SceneDataset,
    manifest_path: impl AsRef<Path>,
    config: Option<serde_json::Value>,
) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    if ds.n_frames() == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let feat_path = sibling(manifest_path, FEATURES_FILE);
    let mut bytes = Vec::with_capacity(ds.features.len() * 4);
    for v in &ds.features {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&feat_path, bytes).map_err(|e| Error::io(&feat_path, e))?;

    let poses_rel = if let Some(poses) = ds.poses() {
        let pose_path = sibling(manifest_path, POSES_FILE);
        // `{}` on f64 prints the shortest string that parses back exactly.
        let mut table = String::from("frame,x,y,z\n");
        for (i, p) in poses.iter().enumerate() {
            table.push_str(&format!("{i},{},{},{}\n", p.x, p.y, p.z));
        }
        fs::write(&pose_path, table).map_err(|e| Error::io(&pose_path, e))?;
        Some(POSES_FILE.to_string())
    } else {
        None
    };

    let manifest = Manifest {
        scene_id: ds.scene_id.clone(),
        n_frames: ds.n_frames(),
        dim: ds.dim,
        features: FEATURES_FILE.to_string(),
        dtype: DTYPE_F32LE.to_string(),
        poses: poses_rel,
        config,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, json + "\n").map_err(|e| Error::io(manifest_path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Random Fourier features of the planar position; nearby frames look alike.
    PoseCorrelated,
    /// Features drawn independently of where the frame was taken.
    AppearanceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_frames: usize,
    pub box_side: f64,
    pub step_sigma: f64,
    pub feature_mode: FeatureMode,
    pub dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_frames: 500,
            box_side: 20.0,
            step_sigma: 1.0,
            feature_mode: FeatureMode::PoseCorrelated,
            dim: 64,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_frames == 0 {
            return fail("n_frames must be positive");
        }
        if !(self.box_side > 0.0 && self.box_side.is_finite()) {
            return fail("box_side must be positive");
        }
        if !(self.step_sigma > 0.0 && self.step_sigma.is_finite()) {
            return fail("step_sigma must be positive");
        }
        if self.dim < 2 {
            return fail("dim must be at least 2");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be non-negative");
        }
        Ok(())
    }
}

/// Spatial frequencies are drawn with standard deviation
/// `FREQUENCIES_PER_BOX / box_side`, so the feature kernel has a length scale
/// of one fifth of the box.
const FREQUENCIES_PER_BOX: f64 = 5.0;

/// Folds `v` back into `[0, side]` by mirroring at the walls.
fn reflect(mut v: f64, side: f64) -> f64 {
    // A single step may be several box widths long; reduce modulo the
    // mirror period first.
    let period = 2.0 * side;
    v = v.rem_euclid(period);
    if v > side {
        v = period - v;
    }
    v
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SceneDataset> {
    cfg.validate()?;
    let n = cfg.n_frames;
    let side = cfg.box_side;

    let step = Normal::new(0.0, cfg.step_sigma).expect("validated sigma");
    let mut walk_rng = rng_for(cfg.seed, &[TAG_WALK]);
    let mut poses = Vec::with_capacity(n);
    let mut pos = Pose::planar(side / 2.0, side / 2.0);
    poses.push(pos);
    for _ in 1..n {
        pos.x = reflect(pos.x + step.sample(&mut walk_rng), side);
        pos.y = reflect(pos.y + step.sample(&mut walk_rng), side);
        poses.push(pos);
    }

    let mut feat_rng = rng_for(cfg.seed, &[TAG_FEATURES]);
    let phase = Uniform::new(0.0, std::f64::consts::TAU);
    let mut features = Vec::with_capacity(n * cfg.dim);
    match cfg.feature_mode {
        FeatureMode::PoseCorrelated => {
            let freq = Normal::new(0.0, FREQUENCIES_PER_BOX / side).expect("positive");
            let waves: Vec<(f64, f64, f64)> = (0..cfg.dim)
                .map(|_| {
                    (
                        freq.sample(&mut feat_rng),
                        freq.sample(&mut feat_rng),
                        phase.sample(&mut feat_rng),
                    )
                })
                .collect();
            for p in &poses {
                features.extend(
                    waves
                        .iter()
                        .map(|&(wx, wy, phi)| (wx * p.x + wy * p.y + phi).cos()),
                );
            }
        }
        FeatureMode::AppearanceOnly => {
            // Same marginal distribution as the pose-correlated mode.
            for _ in 0..n * cfg.dim {
                features.push(feat_rng.sample(phase).cos());
            }
        }
    }

    let features: Vec<f32> = if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        let mut noise_rng = rng_for(cfg.seed, &[TAG_NOISE]);
        features
            .into_iter()
            .map(|v| (v + noise.sample(&mut noise_rng)) as f32)
            .collect()
    } else {
        features.into_iter().map(|v| v as f32).collect()
    };

    let mode = match cfg.feature_mode {
        FeatureMode::PoseCorrelated => "pose",
        FeatureMode::AppearanceOnly => "appearance",
    };
    SceneDataset::new(
        format!("synthetic-{mode}-{}", cfg.seed),
        cfg.dim,
        features,
        Some(poses),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny() -> SceneDataset {
        SceneDataset::new(
            "tiny",
            2,
            vec![0.5, -1.25, 3.0, 1e-7, f32::MAX, -0.0],
            Some(vec![
                Pose::new(0.1, 0.2, 0.0),
                Pose::new(1.0 / 3.0, -2.5, 7.0),
                Pose::new(1e300, 0.0, -1e-300),
            ]),
        )
        .unwrap()
    }

    #[test]
    fn load_three_frames() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        save_dataset(&tiny(), &path).unwrap();
        assert_eq!(fs::metadata(dir.path().join(FEATURES_FILE)).unwrap().len(), 24);
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.n_frames(), 3);
        assert_eq!(ds.poses().unwrap().len(), 3);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        let ds = tiny();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        let bits = |d: &SceneDataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ds), bits(&back));
        assert_eq!(ds.poses(), back.poses());
        assert_eq!(ds.scene_id(), back.scene_id());
    }

    #[test]
    fn short_feature_file_is_size_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&tiny(), &path).unwrap();
        fs::write(dir.path().join(FEATURES_FILE), [0u8; 16]).unwrap();
        match load_dataset(&path) {
            Err(Error::SizeMismatch {
                expected: 24,
                actual: 16,
                ..
            }) => {}
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let dir = tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn nan_in_features_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&tiny(), &path).unwrap();
        let mut bytes = fs::read(dir.path().join(FEATURES_FILE)).unwrap();
        bytes[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(dir.path().join(FEATURES_FILE), bytes).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::NonFinite(_))));
    }

    #[test]
    fn malformed_pose_row_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&tiny(), &path).unwrap();
        fs::write(
            dir.path().join(POSES_FILE),
            "frame,x,y,z\n0,1,2,3\n1,abc,2,3\n2,1,2,3\n",
        )
        .unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::MalformedPose { row: 2, .. })
        ));
    }

    #[test]
    fn poseless_manifest_omits_entry() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&tiny().without_poses(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains("poses"));
        assert!(load_dataset(&path).unwrap().poses().is_none());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            SceneDataset::new("e", 4, vec![], None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            seed: 7,
            n_frames: 200,
            ..Default::default()
        };
        assert_eq!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&cfg).unwrap()
        );
        let other = SyntheticConfig { seed: 8, ..cfg };
        assert_ne!(
            generate_synthetic(&other).unwrap().features(),
            generate_synthetic(&SyntheticConfig {
                seed: 7,
                ..other.clone()
            })
            .unwrap()
            .features()
        );
    }

    #[test]
    fn walk_stays_in_box() {
        for mode in [FeatureMode::PoseCorrelated, FeatureMode::AppearanceOnly] {
            let cfg = SyntheticConfig {
                n_frames: 2000,
                box_side: 5.0,
                step_sigma: 3.0,
                feature_mode: mode,
                seed: 3,
                ..Default::default()
            };
            let ds = generate_synthetic(&cfg).unwrap();
            for p in ds.poses().unwrap() {
                assert!((0.0..=5.0).contains(&p.x) && (0.0..=5.0).contains(&p.y), "{p:?}");
                assert_eq!(p.z, 0.0);
            }
        }
    }

    #[test]
    fn reflect_mirrors_at_walls() {
        assert_eq!(reflect(-1.0, 10.0), 1.0);
        assert_eq!(reflect(12.0, 10.0), 8.0);
        assert_eq!(reflect(25.0, 10.0), 5.0);
        assert_eq!(reflect(4.0, 10.0), 4.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = [
            SyntheticConfig {
                box_side: 0.0,
                ..Default::default()
            },
            SyntheticConfig {
                step_sigma: -1.0,
                ..Default::default()
            },
            SyntheticConfig {
                dim: 1,
                ..Default::default()
            },
            SyntheticConfig {
                noise_sigma: -0.1,
                ..Default::default()
            },
            SyntheticConfig {
                n_frames: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(generate_synthetic(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn nearby_frames_have_closer_features() {
        // Brute force over all pairs of a 500-frame walk.
        let cfg = SyntheticConfig {
            seed: 11,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let poses = ds.poses().unwrap();
        let x = ds.feature_matrix();
        let (mut near, mut n_near, mut far, mut n_far) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..ds.n_frames() {
            for j in i + 1..ds.n_frames() {
                let pd = poses[i].distance(&poses[j]);
                let fd = crate::linalg::dist(x.row(i), x.row(j));
                if pd < cfg.box_side / 10.0 {
                    near += fd;
                    n_near += 1;
                } else if pd > cfg.box_side / 2.0 {
                    far += fd;
                    n_far += 1;
                }
            }
        }
        assert!(n_near > 0 && n_far > 0);
        assert!(near / (n_near as f64) < far / (n_far as f64));
    }
}
