//! WebAssembly bindings for the in-browser demo: generate a synthetic walk,
//! summarize it with any method, and score the summary.

use serde_json::json;
use wasm_bindgen::prelude::*;

use scenesum::dataset::{generate_synthetic, FeatureMode, SceneDataset, SyntheticConfig};
use scenesum::metrics::Integration;
use scenesum::pipeline::{evaluate, summarize, Method, SummarizeConfig};
use scenesum::selector::TrainConfig;
use scenesum::{Error, SummaryResult};

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_mode(mode: &str) -> Result<FeatureMode, Error> {
    match mode {
        "pose-correlated" => Ok(FeatureMode::PoseCorrelated),
        "appearance-only" => Ok(FeatureMode::AppearanceOnly),
        other => Err(Error::InvalidConfig(format!("unknown feature mode {other:?}"))),
    }
}

/// A generated walk held on the Rust side.
#[wasm_bindgen]
pub struct Scene {
    ds: SceneDataset,
}

impl Scene {
    pub fn generate(n_frames: usize, dim: usize, mode: &str, seed: u32) -> Result<Scene, Error> {
        let cfg = SyntheticConfig {
            n_frames,
            dim,
            feature_mode: parse_mode(mode)?,
            seed: seed.into(),
            ..Default::default()
        };
        Ok(Scene {
            ds: generate_synthetic(&cfg)?,
        })
    }

    pub fn summary_frames(
        &self,
        method: &str,
        k: usize,
        seed: u32,
        epochs: usize,
    ) -> Result<Vec<u32>, Error> {
        let cfg = SummarizeConfig {
            k,
            seed: seed.into(),
            train: TrainConfig {
                epochs,
                ..Default::default()
            },
            ..Default::default()
        };
        let s = summarize(&self.ds, method.parse::<Method>()?, &cfg)?;
        Ok(s.frames.iter().map(|&f| f as u32).collect())
    }

    /// `{"auc", "thresholds", "values"}` as JSON text.
    pub fn curve_json(&self, frames: &[u32], r_max: f64, steps: usize) -> Result<String, Error> {
        let summary = SummaryResult::new("demo", frames.iter().map(|&f| f as usize).collect());
        let e = evaluate(&self.ds, &summary, r_max, steps, Integration::Trapezoid)?;
        Ok(json!({
            "auc": e.auc,
            "thresholds": e.curve.thresholds,
            "values": e.curve.values,
        })
        .to_string())
    }
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(n_frames: usize, dim: usize, mode: &str, seed: u32) -> Result<Scene, JsError> {
        Scene::generate(n_frames, dim, mode, seed).map_err(to_js)
    }

    #[wasm_bindgen(getter)]
    pub fn n_frames(&self) -> usize {
        self.ds.n_frames()
    }

    /// Planar positions flattened as `x0, y0, x1, y1, ...`.
    pub fn positions(&self) -> Vec<f64> {
        self.ds
            .poses()
            .map(|p| p.iter().flat_map(|q| [q.x, q.y]).collect())
            .unwrap_or_default()
    }

    pub fn summarize(&self, method: &str, k: usize, seed: u32, epochs: usize) -> Result<Vec<u32>, JsError> {
        self.summary_frames(method, k, seed, epochs).map_err(to_js)
    }

    pub fn evaluate(&self, frames: &[u32], r_max: f64, steps: usize) -> Result<String, JsError> {
        self.curve_json(frames, r_max, steps).map_err(to_js)
    }
}
