//! JSON run configuration: strict schema, validation before any compute,
//! and dotted-path `--set key=value` overrides.

use crate::fusion::{InitMode, TrainingSchedule};
use crate::geometry::{CameraIntrinsics, VoxelGridSpec};
use crate::lifter::{LiftMode, OffsetPattern, SIGMA_MIN};
use crate::memory::ConfidenceParams;
use crate::refiner::{GrmStrategy, RefineMode};
use crate::scene::{DepthNoise, RoomSpec, TrajectorySpec};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
    #[error("bad --set override '{0}': expected key.path=value")]
    BadOverride(String),
    #[error("--set path '{0}' does not exist in the config")]
    UnknownOverridePath(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub room: RoomSpec,
    #[serde(default)]
    pub depth_noise: Option<DepthNoise>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub trajectory: TrajectorySpec,
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, ConfigError> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LifterConfig {
    pub mode: LiftMode,
    pub k: usize,
    pub pattern: OffsetPattern,
    pub radius_px: f64,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(default)]
    pub normalize_gate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalsSource {
    /// Simulator ground-truth normals.
    GroundTruth,
    /// Cross product of depth-map finite differences.
    FromDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrmApply {
    /// Regularize only the anchors spawned this frame.
    Local,
    /// Regularize the whole pool each frame.
    Global,
    /// Both call sites.
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GrmConfig {
    pub strategy: GrmStrategy,
    pub adjacency_radius_voxels: f64,
    pub steps_local: usize,
    pub steps_global: usize,
    pub lr: f64,
    pub apply: GrmApply,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RefinerConfig {
    pub mode: RefineMode,
    pub delta_max: f64,
    /// Along-ray spawn jitter magnitude (meters), modeling upstream depth
    /// error that refinement must absorb.
    pub anchor_jitter: f64,
    pub pose_noise_frac: f64,
    pub pose_noise_seed: u64,
    pub normals: NormalsSource,
    pub grm: GrmConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    pub sigma_geo: f64,
    pub temperature: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub max_pool: usize,
    pub stride: usize,
    pub logit_scale: f64,
    pub anchor_scale: f64,
    pub cull_uncertain_spawns: bool,
}

impl MemoryConfig {
    pub fn confidence(&self) -> ConfidenceParams {
        ConfidenceParams {
            sigma_geo: self.sigma_geo,
            temperature: self.temperature,
            tau_min: self.tau_min,
            tau_max: self.tau_max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub init: InitMode,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub resolution: f64,
}

impl GridConfig {
    pub fn spec(&self) -> Result<VoxelGridSpec, ConfigError> {
        VoxelGridSpec::new(
            Vector3::new(self.origin[0], self.origin[1], self.origin[2]),
            (self.dims[0], self.dims[1], self.dims[2]),
            self.resolution,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub grid: GridConfig,
    pub theta_occ: f64,
    pub boundary_dist: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub lifter: LifterConfig,
    pub refiner: RefinerConfig,
    pub memory: MemoryConfig,
    pub fusion: FusionConfig,
    pub schedule: TrainingSchedule,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Rejects any out-of-range value before any compute happens.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |msg: String| Err(ConfigError::Invalid(msg));
        self.camera.intrinsics()?;
        let grid = self.eval.grid.spec()?;

        if self.lifter.k < 1 {
            return inv(format!("lifter.k must be >= 1 (got {})", self.lifter.k));
        }
        if self.lifter.radius_px <= 0.0 {
            return inv(format!("lifter.radius_px must be positive (got {})", self.lifter.radius_px));
        }
        if self.lifter.alpha < 0.0 {
            return inv(format!("lifter.alpha must be >= 0 (got {})", self.lifter.alpha));
        }
        if self.lifter.sigma < SIGMA_MIN {
            return inv(format!("lifter.sigma must be >= {SIGMA_MIN} (got {})", self.lifter.sigma));
        }
        if let LiftMode::HardThreshold { tau } = self.lifter.mode {
            if !(tau > 0.0 && tau <= 1.0) {
                return inv(format!("hard_threshold tau must be in (0, 1] (got {tau})"));
            }
        }
        if self.refiner.delta_max <= 0.0 {
            return inv(format!("refiner.delta_max must be positive (got {})", self.refiner.delta_max));
        }
        if self.refiner.anchor_jitter < 0.0 {
            return inv(format!("refiner.anchor_jitter must be >= 0 (got {})", self.refiner.anchor_jitter));
        }
        if !(0.0..=0.2).contains(&self.refiner.pose_noise_frac) {
            return inv(format!(
                "refiner.pose_noise_frac must be in [0, 0.2] (got {})",
                self.refiner.pose_noise_frac
            ));
        }
        match self.refiner.grm.strategy {
            GrmStrategy::Uniform { weight } if !(0.0..=1.0).contains(&weight) => {
                return inv(format!("grm uniform weight must be in [0, 1] (got {weight})"));
            }
            GrmStrategy::SemanticAdaptive { structural, object } => {
                for v in [structural, object] {
                    if !(0.0..=1.0).contains(&v) {
                        return inv(format!("grm kappa {v} outside [0, 1]"));
                    }
                }
            }
            _ => {}
        }
        if self.refiner.grm.adjacency_radius_voxels <= 0.0 || self.refiner.grm.lr <= 0.0 {
            return inv("grm adjacency radius and lr must be positive".to_string());
        }
        self.memory
            .confidence()
            .validate()
            .map_err(ConfigError::Invalid)?;
        if self.memory.stride < 1 {
            return inv(format!("memory.stride must be >= 1 (got {})", self.memory.stride));
        }
        if self.memory.max_pool == 0 {
            return inv("memory.max_pool must be positive".to_string());
        }
        let res = grid.resolution;
        if !(0.5 * res..=4.0 * res).contains(&self.memory.anchor_scale) {
            return inv(format!(
                "memory.anchor_scale {} outside [0.5, 4] voxels ({}..{})",
                self.memory.anchor_scale,
                0.5 * res,
                4.0 * res
            ));
        }
        if self.memory.logit_scale <= 0.0 {
            return inv(format!("memory.logit_scale must be positive (got {})", self.memory.logit_scale));
        }
        self.schedule.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.theta_occ <= 0.0 {
            return inv(format!("eval.theta_occ must be positive (got {})", self.eval.theta_occ));
        }
        if self.camera.trajectory.n_frames < 1 {
            return inv("trajectory.n_frames must be >= 1".to_string());
        }
        Ok(())
    }
}

/// Parses an override value: JSON first (numbers, booleans, arrays,
/// quoted strings), bare text as a string.
fn parse_override_value(raw: &str) -> serde_json::Value {
    serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()))
}

/// Applies one `key.path=value` override onto a JSON tree. Every path
/// segment except the last must already exist; the last may replace or add
/// a field (the typed parse still rejects unknown keys afterwards).
pub fn apply_override(tree: &mut serde_json::Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    if path.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let segments: Vec<&str> = path.split('.').collect();
    let mut node = tree;
    for seg in &segments[..segments.len() - 1] {
        node = node
            .get_mut(*seg)
            .ok_or_else(|| ConfigError::UnknownOverridePath(path.to_string()))?;
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| ConfigError::UnknownOverridePath(path.to_string()))?;
    obj.insert(segments[segments.len() - 1].to_string(), parse_override_value(raw_value));
    Ok(())
}

/// Loads, overrides, env-patches, parses, and validates a run config.
///
/// `OCC_SEED` in the environment overrides the global seed.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, overrides)
}

/// Same as [`load_config`] but from an in-memory JSON string.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut tree: serde_json::Value = serde_json::from_str(text)?;
    for spec in overrides {
        apply_override(&mut tree, spec)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(tree)?;
    if let Ok(seed) = std::env::var("OCC_SEED") {
        let parsed = seed
            .parse::<u64>()
            .map_err(|_| ConfigError::Invalid(format!("OCC_SEED '{seed}' is not a u64")))?;
        cfg.seed = parsed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The packaged reference scene every acceptance threshold binds to.
pub const BENCH_ROOM_JSON: &str = include_str!("../configs/bench_room.json");
/// Wall-heavy companion scene for the regularization ablation.
pub const BENCH_WALL_JSON: &str = include_str!("../configs/bench_wall.json");

pub fn bench_room_config() -> RunConfig {
    parse_config(BENCH_ROOM_JSON, &[]).expect("packaged bench_room.json must be valid")
}

pub fn bench_wall_config() -> RunConfig {
    parse_config(BENCH_WALL_JSON, &[]).expect("packaged bench_wall.json must be valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packaged_configs_parse_and_validate() {
        let room = bench_room_config();
        assert_eq!(room.eval.grid.dims, [60, 60, 36]);
        assert_eq!(room.camera.trajectory.n_frames, 30);
        let wall = bench_wall_config();
        assert!(wall.scene.room.n_objects < room.scene.room.n_objects);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut tree: serde_json::Value = serde_json::from_str(BENCH_ROOM_JSON).unwrap();
        tree.as_object_mut()
            .unwrap()
            .insert("bogus_key".into(), serde_json::json!(1));
        let err = serde_json::from_value::<RunConfig>(tree).unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn out_of_range_value_rejected() {
        let err = parse_config(BENCH_ROOM_JSON, &["memory.tau_min=0.9".to_string()]).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }

    #[test]
    fn overrides_apply_and_nest() {
        let cfg = parse_config(
            BENCH_ROOM_JSON,
            &[
                "seed=7".to_string(),
                "lifter.sigma=1.0".to_string(),
                "lifter.mode.kind=hard_projection".to_string(),
                "scene.room.n_objects=2".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lifter.sigma, 1.0);
        assert_eq!(cfg.lifter.mode, LiftMode::HardProjection);
        assert_eq!(cfg.scene.room.n_objects, 2);
    }

    #[test]
    fn bad_override_paths_rejected() {
        assert!(matches!(
            parse_config(BENCH_ROOM_JSON, &["nope.such.path=1".to_string()]),
            Err(ConfigError::UnknownOverridePath(_))
        ));
        assert!(matches!(
            parse_config(BENCH_ROOM_JSON, &["justakey".to_string()]),
            Err(ConfigError::BadOverride(_))
        ));
        // Adding an unknown leaf is caught by the typed parse.
        assert!(parse_config(BENCH_ROOM_JSON, &["lifter.fake=1".to_string()]).is_err());
    }

    #[test]
    fn env_seed_override() {
        // Env vars are process-global; run both cases in one test.
        std::env::set_var("OCC_SEED", "123456");
        let cfg = parse_config(BENCH_ROOM_JSON, &[]).unwrap();
        std::env::remove_var("OCC_SEED");
        assert_eq!(cfg.seed, 123456);
        let cfg = parse_config(BENCH_ROOM_JSON, &[]).unwrap();
        assert_ne!(cfg.seed, 123456);
    }
}
