//! Tag-managed Gaussian memory pool with hybrid confidence verification.
//!
//! The pool holds one Gaussian primitive per verified surface observation.
//! Every frame, each primitive is classified against the current view
//! (consistent / conflicting / occluded / out of view), scored by the
//! product of a geometric reprojection kernel and a calibrated semantic
//! confidence,
//!
//! ```text
//! C_geo  = exp(-(d_proj - D(u,v))² / (2σ_geo²))
//! C_sem  = clamp((max softmax(l/T) - τ_min) / (τ_max - τ_min), 0, 1)
//! C_final = 1[tag = reused] · C_geo · C_sem,     λ = 1 - C_final
//! ```
//!
//! and updated with strength λ: verified history freezes (λ ≈ 0), fresh or
//! conflicting anchors move and relabel (λ ≈ 1), and hard conflicts are
//! re-initialized. New anchors spawn in observed but uncovered regions.

use crate::fusion::FusionWeights;
use crate::geometry::{backproject, project_point, CameraIntrinsics, Pose, VoxelGridSpec};
use crate::lifter::{
    combine_samples, lift_samples, FeatureMap, GateParams, LiftError, LiftMode, SampleConfig,
};
use crate::par;
use crate::refiner::{predict_depth_residual, predict_free_residual, RefineMode};
use crate::scene::{DepthFrame, NUM_CLASSES};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("primitive projects outside the image")]
    OutOfView,
    #[error("no observed surface at the primitive's pixel")]
    NoSurface,
    #[error("spawn request ({0}) exceeds the pool capacity ({1})")]
    PoolOverflow(usize, usize),
    #[error("pool file has a bad magic or truncated payload")]
    BadFormat,
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source tag: fresh spawn (0.0) or verified, reused history (1.0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    New,
    Reused,
}

impl Tag {
    pub fn value(self) -> f64 {
        match self {
            Tag::New => 0.0,
            Tag::Reused => 1.0,
        }
    }
}

/// One unit of Gaussian memory. `normal` is pipeline state (regularization
/// and decode placement); it is not part of the serialized format.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub id: u64,
    pub position: Vector3<f64>,
    pub scale: f64,
    pub logits: [f64; NUM_CLASSES],
    pub tag: Tag,
    pub last_confidence: f64,
    pub normal: Vector3<f64>,
}

/// Confidence kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceParams {
    pub sigma_geo: f64,
    pub temperature: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self { sigma_geo: 0.5, temperature: 0.5, tau_min: 0.2, tau_max: 0.8 }
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.sigma_geo <= 0.0 {
            return Err(format!("sigma_geo must be positive (got {})", self.sigma_geo));
        }
        if self.temperature <= 0.0 {
            return Err(format!("temperature must be positive (got {})", self.temperature));
        }
        if !(0.0 <= self.tau_min && self.tau_min < self.tau_max && self.tau_max <= 1.0) {
            return Err(format!(
                "need 0 <= tau_min < tau_max <= 1 (got {} / {})",
                self.tau_min, self.tau_max
            ));
        }
        Ok(())
    }
}

/// The global memory: primitives in id order plus the voxel volume they
/// describe.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPool {
    pub primitives: Vec<GaussianPrimitive>,
    pub frame_counter: u64,
    pub grid: VoxelGridSpec,
    next_id: u64,
}

impl GaussianPool {
    pub fn new(grid: VoxelGridSpec) -> Self {
        Self { primitives: Vec::new(), frame_counter: 0, grid, next_id: 0 }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Ids at or above this value belong to primitives created after the
    /// call (used to identify the current frame's additions).
    pub fn high_watermark(&self) -> u64 {
        self.next_id
    }
}

/// How a primitive relates to the current view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    VisibleConsistent,
    VisibleConflicting,
    Occluded,
    OutOfView,
}

/// Index partition of a pool by [`Visibility`]; exhaustive and disjoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisibilityPartition {
    pub visible_consistent: Vec<usize>,
    pub visible_conflicting: Vec<usize>,
    pub occluded: Vec<usize>,
    pub out_of_view: Vec<usize>,
}

impl VisibilityPartition {
    pub fn total(&self) -> usize {
        self.visible_consistent.len()
            + self.visible_conflicting.len()
            + self.occluded.len()
            + self.out_of_view.len()
    }
}

/// Classifies one world point against a rendered view. The occlusion and
/// conflict bands are both 3σ_geo wide, matching the confidence kernel.
pub fn classify_visibility(
    position: &Vector3<f64>,
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ConfidenceParams,
) -> Visibility {
    let (u, v, d_proj) = match project_point(intr, pose, position) {
        Ok(x) => x,
        Err(_) => return Visibility::OutOfView,
    };
    let observed = match depth.sample_depth_near(u, v, d_proj) {
        Some(d) => d,
        None => return Visibility::OutOfView,
    };
    let band = 3.0 * params.sigma_geo;
    if observed.is_finite() && d_proj > observed + band {
        Visibility::Occluded
    } else if !observed.is_finite() || (d_proj - observed).abs() > band {
        // Floating in front of the observed surface (or of empty space).
        Visibility::VisibleConflicting
    } else {
        Visibility::VisibleConsistent
    }
}

/// Partitions the whole pool by visibility.
pub fn visibility_check(
    pool: &GaussianPool,
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ConfidenceParams,
) -> VisibilityPartition {
    let classes = par::map_slice(&pool.primitives, |p| {
        classify_visibility(&p.position, depth, intr, pose, params)
    });
    let mut part = VisibilityPartition::default();
    for (i, c) in classes.into_iter().enumerate() {
        match c {
            Visibility::VisibleConsistent => part.visible_consistent.push(i),
            Visibility::VisibleConflicting => part.visible_conflicting.push(i),
            Visibility::Occluded => part.occluded.push(i),
            Visibility::OutOfView => part.out_of_view.push(i),
        }
    }
    part
}

/// Geometric reprojection confidence in [0, 1].
pub fn geo_confidence(
    position: &Vector3<f64>,
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ConfidenceParams,
) -> Result<f64, MemoryError> {
    let (u, v, d_proj) = match project_point(intr, pose, position) {
        Ok(x) => x,
        Err(_) => return Err(MemoryError::OutOfView),
    };
    let observed = depth.sample_depth_near(u, v, d_proj).ok_or(MemoryError::OutOfView)?;
    if !observed.is_finite() {
        return Err(MemoryError::NoSurface);
    }
    let r = d_proj - observed;
    Ok((-(r * r) / (2.0 * params.sigma_geo * params.sigma_geo)).exp())
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES], temperature: f64) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits.iter()) {
        *o = ((l - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}

/// Temperature-scaled class distribution and the thresholded semantic
/// confidence derived from its peak.
pub fn calibrate_semantic(
    logits: &[f64; NUM_CLASSES],
    params: &ConfidenceParams,
) -> ([f64; NUM_CLASSES], f64) {
    let p = softmax(logits, params.temperature);
    let peak = p.iter().cloned().fold(0.0f64, f64::max);
    let c_sem = ((peak - params.tau_min) / (params.tau_max - params.tau_min)).clamp(0.0, 1.0);
    (p, c_sem)
}

/// Hybrid confidence and the differential update ratio λ = 1 - C_final.
/// New anchors (tag 0) get zero confidence regardless of the scores.
pub fn final_confidence(tag: Tag, c_geo: f64, c_sem: f64) -> (f64, f64) {
    let c_final = tag.value() * c_geo * c_sem;
    (c_final, 1.0 - c_final)
}

/// Voxel-cell occupancy set for "is this cell already covered" queries.
///
/// Cells are keyed by the *evidence cell*: the anchor position moved half a
/// voxel inward along its surface normal, matching where decode places the
/// anchor's mass. Surface points sit exactly on cell boundaries, so keying
/// the raw position would flip cells under sub-voxel noise and let anchors
/// stack per surface cell.
struct CoverageIndex {
    origin: Vector3<f64>,
    cell: f64,
    occupied: std::collections::HashSet<(i64, i64, i64)>,
}

impl CoverageIndex {
    fn new<'a>(
        grid: &VoxelGridSpec,
        anchors: impl Iterator<Item = (&'a Vector3<f64>, &'a Vector3<f64>)>,
    ) -> Self {
        let mut idx = Self {
            origin: grid.origin,
            cell: grid.resolution,
            occupied: std::collections::HashSet::new(),
        };
        for (p, n) in anchors {
            let key = idx.key(p, n);
            idx.occupied.insert(key);
        }
        idx
    }

    fn key(&self, p: &Vector3<f64>, normal: &Vector3<f64>) -> (i64, i64, i64) {
        let inset = p - normal * (0.5 * self.cell);
        (
            ((inset.x - self.origin.x) / self.cell).floor() as i64,
            ((inset.y - self.origin.y) / self.cell).floor() as i64,
            ((inset.z - self.origin.z) / self.cell).floor() as i64,
        )
    }

    fn covered(&self, p: &Vector3<f64>, normal: &Vector3<f64>) -> bool {
        self.occupied.contains(&self.key(p, normal))
    }
}

/// Spawn parameters shared by [`spawn_anchors`] and [`update_pool`].
#[derive(Debug, Clone, Copy)]
pub struct SpawnParams {
    pub stride: usize,
    pub scale: f64,
    pub logit_scale: f64,
}

/// One candidate anchor per stride×stride pixel block whose (bilinear)
/// block-center depth is finite and whose backprojection lands in a voxel
/// cell not already holding a primitive. Logits start as a scaled one-hot
/// of the pixel class; the pipeline replaces them with lifted features.
pub fn spawn_anchors(
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    spawn: &SpawnParams,
    pool: &GaussianPool,
) -> Vec<GaussianPrimitive> {
    assert!(spawn.stride >= 1);
    let coverage = CoverageIndex::new(
        &pool.grid,
        pool.primitives.iter().map(|p| (&p.position, &p.normal)),
    );
    let blocks_x = depth.width.div_ceil(spawn.stride);
    let blocks_y = depth.height.div_ceil(spawn.stride);
    let max_u = (depth.width - 1) as f64;
    let max_v = (depth.height - 1) as f64;

    let candidates = par::map_indexed(blocks_x * blocks_y, |idx| {
        let bx = idx % blocks_x;
        let by = idx / blocks_x;
        let u = (bx * spawn.stride) as f64 + (spawn.stride - 1) as f64 / 2.0;
        let v = (by * spawn.stride) as f64 + (spawn.stride - 1) as f64 / 2.0;
        let (u, v) = (u.min(max_u), v.min(max_v));
        let d = depth.sample_depth(u, v)?;
        if !d.is_finite() {
            return None;
        }
        let position = backproject(intr, pose, u, v, d).ok()?;
        let normal = depth
            .sample_normal(u, v)
            .unwrap_or_else(|| Vector3::new(0.0, 0.0, 1.0));
        if coverage.covered(&position, &normal) {
            return None;
        }
        let class = depth.class_at(
            (u.round() as usize).min(depth.width - 1),
            (v.round() as usize).min(depth.height - 1),
        );
        let mut logits = [0.0; NUM_CLASSES];
        logits[class as usize] = spawn.logit_scale;
        Some(GaussianPrimitive {
            id: 0, // assigned at insertion
            position,
            scale: spawn.scale,
            logits,
            tag: Tag::New,
            last_confidence: 0.0,
            normal,
        })
    });
    candidates.into_iter().flatten().collect()
}

/// Everything `update_pool` needs from the current frame.
pub struct FrameContext<'a> {
    pub depth: &'a DepthFrame,
    pub features: &'a FeatureMap,
    pub intr: &'a CameraIntrinsics,
    pub pose: &'a Pose,
}

/// Pool update policy.
#[derive(Debug, Clone)]
pub struct UpdateConfig {
    pub conf: ConfidenceParams,
    pub gate: GateParams,
    pub lift_mode: LiftMode,
    pub samples: SampleConfig,
    pub normalize_gate: bool,
    pub fusion: FusionWeights,
    pub refine_mode: RefineMode,
    pub delta_max: f64,
    pub spawn: SpawnParams,
    pub max_pool: usize,
    /// Along-ray jitter applied to fresh spawns before lifting, modeling
    /// upstream depth error; refinement is expected to remove it.
    pub spawn_jitter: f64,
    pub jitter_seed: u64,
    /// Drop fresh spawns whose calibrated semantic confidence is below
    /// 0.5: ambiguous silhouette blends and gate-starved samples.
    pub cull_uncertain_spawns: bool,
}

/// Per-tier counts from one [`update_pool`] call.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UpdateReport {
    pub retained_out_of_view: usize,
    pub retained_occluded: usize,
    pub discarded_stale: usize,
    pub frozen: usize,
    pub updated: usize,
    pub reinitialized: usize,
    pub discarded_invalid: usize,
    pub spawned: usize,
    pub culled_spawns: usize,
    pub evicted: usize,
    pub pool_size: usize,
}

/// Lifts the current frame's feature at a position and fuses it with a
/// history vector into fresh logits.
fn fresh_logits(
    position: &Vector3<f64>,
    hist: &[f64; NUM_CLASSES],
    ctx: &FrameContext,
    cfg: &UpdateConfig,
) -> Result<[f64; NUM_CLASSES], LiftError> {
    let set = lift_samples(
        position, ctx.features, ctx.depth, ctx.intr, ctx.pose,
        &cfg.gate, cfg.lift_mode, &cfg.samples,
    )?;
    let feat = combine_samples(&set, ctx.features.channels, cfg.normalize_gate);
    let mut curr = [0.0; NUM_CLASSES];
    for (c, f) in curr.iter_mut().zip(feat.iter()) {
        *c = cfg.spawn.logit_scale * f;
    }
    Ok(cfg.fusion.fuse_fixed(hist, &curr))
}

/// Moves a position toward the observed surface with strength `lambda`,
/// according to the configured refinement search space.
fn refine_position(
    position: &Vector3<f64>,
    lambda: f64,
    cam: &Vector3<f64>,
    ctx: &FrameContext,
    cfg: &UpdateConfig,
) -> Vector3<f64> {
    match cfg.refine_mode {
        RefineMode::None => *position,
        RefineMode::Ray => {
            let delta_d =
                predict_depth_residual(position, ctx.depth, ctx.intr, ctx.pose, cfg.delta_max)
                    .unwrap_or(0.0);
            let dir = position - cam;
            let dist = dir.norm();
            if dist > 1e-9 && lambda * delta_d > -dist {
                position + dir * (lambda * delta_d / dist)
            } else {
                *position
            }
        }
        RefineMode::Free3d => {
            let dv = predict_free_residual(position, ctx.depth, ctx.intr, ctx.pose, cfg.delta_max)
                .unwrap_or_else(|_| Vector3::zeros());
            position + dv * lambda
        }
    }
}

enum Decision {
    RetainUntouched,
    Discard,
    Update {
        position: Vector3<f64>,
        logits: [f64; NUM_CLASSES],
        confidence: f64,
        normal: Option<Vector3<f64>>,
    },
    Reinitialize {
        position: Vector3<f64>,
        logits: [f64; NUM_CLASSES],
        confidence: f64,
        normal: Option<Vector3<f64>>,
    },
}

/// One streaming step: verify, update, spawn, and bound the pool.
pub fn update_pool(
    pool: &mut GaussianPool,
    ctx: &FrameContext,
    cfg: &UpdateConfig,
) -> Result<UpdateReport, MemoryError> {
    let mut report = UpdateReport::default();
    let cam = ctx.pose.camera_center();
    let reinit_geo_floor = (-4.5f64).exp(); // C_geo at a 3σ residual

    // Phase 1 (parallel): score every primitive and decide its fate.
    let decisions: Vec<(Visibility, Decision)> = par::map_slice(&pool.primitives, |prim| {
        let vis = classify_visibility(&prim.position, ctx.depth, ctx.intr, ctx.pose, &cfg.conf);
        let decision = match vis {
            // Leaving the view is not evidence against an anchor; only
            // stale anchors contradicted by geometry (occluded before they
            // were ever verified) are dropped.
            Visibility::OutOfView => Decision::RetainUntouched,
            Visibility::Occluded => {
                if prim.tag == Tag::Reused {
                    Decision::RetainUntouched
                } else {
                    Decision::Discard
                }
            }
            Visibility::VisibleConsistent | Visibility::VisibleConflicting => {
                let c_geo = geo_confidence(&prim.position, ctx.depth, ctx.intr, ctx.pose, &cfg.conf)
                    .unwrap_or(0.0);
                let (_, c_sem) = calibrate_semantic(&prim.logits, &cfg.conf);
                // A geometrically consistent anchor counts as verified
                // history from here on: its tag flips to reused before the
                // hybrid score, so λ = 1 - C_geo·C_sem on its second
                // sighting. Conflicting anchors score with their current
                // tag, which sends unverified ones (λ = 1) to
                // re-initialization or discard.
                let scored_tag = match vis {
                    Visibility::VisibleConsistent => Tag::Reused,
                    _ => prim.tag,
                };
                let (c_final, lambda) = final_confidence(scored_tag, c_geo, c_sem);

                let pixel = project_point(ctx.intr, ctx.pose, &prim.position).ok();
                let observed = pixel.and_then(|(u, v, d)| ctx.depth.sample_depth_near(u, v, d));
                let fresh_normal = pixel.and_then(|(u, v, _)| ctx.depth.sample_normal(u, v));

                if lambda > 0.5 && c_geo < reinit_geo_floor {
                    // Hard conflict: rebuild from the current observation.
                    match (pixel, observed) {
                        (Some((u, v, _)), Some(d)) if d.is_finite() => {
                            let position = backproject(ctx.intr, ctx.pose, u, v, d)
                                .expect("finite positive depth");
                            match fresh_logits(&position, &[0.0; NUM_CLASSES], ctx, cfg) {
                                Ok(logits) => {
                                    let (_, conf) = calibrate_semantic(&logits, &cfg.conf);
                                    Decision::Reinitialize {
                                        position,
                                        logits,
                                        confidence: conf * 0.0, // tag resets to New => C_final = 0
                                        normal: fresh_normal,
                                    }
                                }
                                Err(_) => Decision::Discard,
                            }
                        }
                        // Nothing observable along its pixel: invalid.
                        _ => Decision::Discard,
                    }
                } else {
                    let position = refine_position(&prim.position, lambda, &cam, ctx, cfg);
                    match fresh_logits(&position, &prim.logits, ctx, cfg) {
                        Ok(fresh) => {
                            let mut logits = [0.0; NUM_CLASSES];
                            for i in 0..NUM_CLASSES {
                                logits[i] = (1.0 - lambda) * prim.logits[i] + lambda * fresh[i];
                            }
                            Decision::Update { position, logits, confidence: c_final, normal: fresh_normal }
                        }
                        Err(_) => Decision::Discard,
                    }
                }
            }
        };
        (vis, decision)
    });

    // Phase 2 (sequential commit, id order preserved).
    let mut survivors: Vec<GaussianPrimitive> = Vec::with_capacity(pool.primitives.len());
    let mut reinit_requests: Vec<(Vector3<f64>, [f64; NUM_CLASSES], f64, Option<Vector3<f64>>)> = Vec::new();
    for (prim, (vis, decision)) in pool.primitives.iter().zip(decisions.into_iter()) {
        match decision {
            Decision::RetainUntouched => {
                match vis {
                    Visibility::OutOfView => report.retained_out_of_view += 1,
                    Visibility::Occluded => report.retained_occluded += 1,
                    _ => {}
                }
                survivors.push(prim.clone());
            }
            Decision::Discard => {
                match vis {
                    Visibility::OutOfView | Visibility::Occluded => report.discarded_stale += 1,
                    _ => report.discarded_invalid += 1,
                }
            }
            Decision::Update { position, logits, confidence, normal } => {
                if confidence >= 0.99 {
                    report.frozen += 1;
                } else {
                    report.updated += 1;
                }
                let mut p = prim.clone();
                p.position = position;
                p.logits = logits;
                p.tag = Tag::Reused;
                p.last_confidence = confidence;
                if let Some(n) = normal {
                    p.normal = n;
                }
                survivors.push(p);
            }
            Decision::Reinitialize { position, logits, confidence, normal } => {
                report.reinitialized += 1;
                reinit_requests.push((position, logits, confidence, normal));
            }
        }
    }
    pool.primitives = survivors;

    // Re-initialized anchors rejoin as fresh primitives with new ids.
    for (position, logits, confidence, normal) in reinit_requests {
        let id = pool.fresh_id();
        pool.primitives.push(GaussianPrimitive {
            id,
            position,
            scale: cfg.spawn.scale,
            logits,
            tag: Tag::New,
            last_confidence: confidence,
            normal: normal.unwrap_or_else(|| Vector3::new(0.0, 0.0, 1.0)),
        });
    }

    // Phase 3: spawn in observed-but-uncovered regions, jitter along the
    // ray, lift, optionally cull unverified spawns, then snap to surface.
    let mut spawns = spawn_anchors(ctx.depth, ctx.intr, ctx.pose, &cfg.spawn, pool);
    if spawns.len() > cfg.max_pool {
        return Err(MemoryError::PoolOverflow(spawns.len(), cfg.max_pool));
    }
    if cfg.spawn_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.jitter_seed ^ pool.frame_counter);
        for s in spawns.iter_mut() {
            let dir = s.position - cam;
            let dist = dir.norm();
            if dist > 1e-9 {
                let j = rng.gen_range(-cfg.spawn_jitter..=cfg.spawn_jitter);
                // Never jitter across the camera.
                let j = j.max(-0.9 * dist);
                s.position += dir * (j / dist);
            }
        }
    }

    let spawn_outcomes: Vec<Option<GaussianPrimitive>> = par::map_slice(&spawns, |s| {
        let logits = fresh_logits(&s.position, &[0.0; NUM_CLASSES], ctx, cfg).ok()?;
        let (_, c_sem) = calibrate_semantic(&logits, &cfg.conf);
        // A spawn whose lifted semantics stay ambiguous (calibrated peak
        // below the midpoint of the confidence band) is an invalid random
        // anchor: typically a silhouette-blend sample floating between two
        // surfaces, or one the gate found no depth-consistent evidence for.
        if cfg.cull_uncertain_spawns && c_sem < 0.5 {
            return None;
        }
        // λ = 1 for new anchors: a full refinement step toward the surface.
        let mut out = s.clone();
        out.position = refine_position(&s.position, 1.0, &cam, ctx, cfg);
        out.logits = logits;
        out.last_confidence = c_sem;
        Some(out)
    });
    for outcome in spawn_outcomes {
        match outcome {
            Some(mut p) => {
                p.id = pool.fresh_id();
                report.spawned += 1;
                pool.primitives.push(p);
            }
            None => report.culled_spawns += 1,
        }
    }

    // Phase 4: bound the pool, evicting the least trusted (newest first on
    // ties) so verified history survives.
    if pool.primitives.len() > cfg.max_pool {
        let mut order: Vec<usize> = (0..pool.primitives.len()).collect();
        order.sort_by(|&a, &b| {
            let pa = &pool.primitives[a];
            let pb = &pool.primitives[b];
            pa.last_confidence
                .partial_cmp(&pb.last_confidence)
                .unwrap()
                .then(pb.id.cmp(&pa.id))
        });
        let excess = pool.primitives.len() - cfg.max_pool;
        let mut drop: Vec<usize> = order.into_iter().take(excess).collect();
        drop.sort_unstable();
        for idx in drop.into_iter().rev() {
            pool.primitives.remove(idx);
            report.evicted += 1;
        }
    }

    pool.primitives.sort_by_key(|p| p.id);
    pool.frame_counter += 1;
    report.pool_size = pool.primitives.len();
    Ok(report)
}

const POOL_MAGIC: &[u8; 6] = b"GPOOL1";

/// Serializes primitives: magic "GPOOL1", little-endian u32 count, then per
/// primitive {u64 id, 3×f32 pos, f32 scale, 12×f32 logits, f32 tag,
/// f32 conf}.
pub fn save_pool(path: &Path, primitives: &[GaussianPrimitive]) -> Result<(), MemoryError> {
    let mut buf = Vec::with_capacity(10 + primitives.len() * 76);
    buf.extend_from_slice(POOL_MAGIC);
    buf.extend_from_slice(&(primitives.len() as u32).to_le_bytes());
    for p in primitives {
        buf.extend_from_slice(&p.id.to_le_bytes());
        for c in 0..3 {
            buf.extend_from_slice(&(p.position[c] as f32).to_le_bytes());
        }
        buf.extend_from_slice(&(p.scale as f32).to_le_bytes());
        for l in &p.logits {
            buf.extend_from_slice(&(*l as f32).to_le_bytes());
        }
        buf.extend_from_slice(&(p.tag.value() as f32).to_le_bytes());
        buf.extend_from_slice(&(p.last_confidence as f32).to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Loads a GPOOL1 file. The normal field is not serialized; loaded
/// primitives carry a +z placeholder.
pub fn load_pool(path: &Path) -> Result<Vec<GaussianPrimitive>, MemoryError> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 10 || &bytes[..6] != POOL_MAGIC {
        return Err(MemoryError::BadFormat);
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let record = 8 + 4 * (3 + 1 + NUM_CLASSES + 2);
    if bytes.len() != 10 + count * record {
        return Err(MemoryError::BadFormat);
    }
    let mut out = Vec::with_capacity(count);
    let mut off = 10;
    let f32_at = |bytes: &[u8], off: &mut usize| {
        let v = f32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap());
        *off += 4;
        v as f64
    };
    for _ in 0..count {
        let id = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        let position = Vector3::new(
            f32_at(&bytes, &mut off),
            f32_at(&bytes, &mut off),
            f32_at(&bytes, &mut off),
        );
        let scale = f32_at(&bytes, &mut off);
        let mut logits = [0.0; NUM_CLASSES];
        for l in logits.iter_mut() {
            *l = f32_at(&bytes, &mut off);
        }
        let tag = if f32_at(&bytes, &mut off) >= 0.5 { Tag::Reused } else { Tag::New };
        let last_confidence = f32_at(&bytes, &mut off);
        out.push(GaussianPrimitive {
            id,
            position,
            scale,
            logits,
            tag,
            last_confidence,
            normal: Vector3::new(0.0, 0.0, 1.0),
        });
    }
    Ok(out)
}
