//! Procedural indoor scenes with analytic ground truth.
//!
//! A scene is a set of axis-aligned solids (structural slabs, furniture
//! boxes, thin wall panels) carrying semantic labels. Everything the
//! pipeline consumes — depth maps, surface normals, per-pixel semantics,
//! voxelized occupancy, camera trajectories — is derived from it in closed
//! form, so tests can check the pipeline against exact geometry instead of
//! recorded data.

use crate::eval::SemanticVoxelGrid;
use crate::geometry::{CameraIntrinsics, Pose, VoxelGridSpec};
use crate::par;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_CLASSES: usize = 12;

/// Corner disagreement (meters) beyond which a continuous depth read is
/// treated as straddling a discontinuity.
pub const DEPTH_EDGE_BAND: f64 = 0.3;

/// Semantic vocabulary: 11 named classes plus `Empty`, as dense codes 0..11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticClass {
    Empty = 0,
    Ceiling = 1,
    Floor = 2,
    Wall = 3,
    Window = 4,
    Chair = 5,
    Bed = 6,
    Sofa = 7,
    Table = 8,
    Tvs = 9,
    Furniture = 10,
    Objects = 11,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; NUM_CLASSES] = [
        SemanticClass::Empty,
        SemanticClass::Ceiling,
        SemanticClass::Floor,
        SemanticClass::Wall,
        SemanticClass::Window,
        SemanticClass::Chair,
        SemanticClass::Bed,
        SemanticClass::Sofa,
        SemanticClass::Table,
        SemanticClass::Tvs,
        SemanticClass::Furniture,
        SemanticClass::Objects,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Architectural classes that receive strong planar regularization.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            SemanticClass::Ceiling | SemanticClass::Floor | SemanticClass::Wall | SemanticClass::Window
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Empty => "empty",
            SemanticClass::Ceiling => "ceiling",
            SemanticClass::Floor => "floor",
            SemanticClass::Wall => "wall",
            SemanticClass::Window => "window",
            SemanticClass::Chair => "chair",
            SemanticClass::Bed => "bed",
            SemanticClass::Sofa => "sofa",
            SemanticClass::Table => "table",
            SemanticClass::Tvs => "tvs",
            SemanticClass::Furniture => "furniture",
            SemanticClass::Objects => "objects",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("camera center {0:?} is outside the scene bounds")]
    CameraOutsideScene([f64; 3]),
    #[error("voxel grid extends outside the scene bounds")]
    GridOutsideScene,
    #[error("trajectory leaves the scene bounds at frame {0}")]
    PathLeavesBounds(usize),
    #[error("consecutive trajectory steps exceed 0.3 m (got {0:.3})")]
    StepTooLarge(f64),
    #[error("pose perturbation fraction {0} outside [0, 0.2]")]
    FracOutOfRange(f64),
}

/// Axis-aligned box, `lo` inclusive / `hi` exclusive for point membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl Aabb {
    pub fn new(lo: Vector3<f64>, hi: Vector3<f64>) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        p.x >= self.lo.x
            && p.x < self.hi.x
            && p.y >= self.lo.y
            && p.y < self.hi.y
            && p.z >= self.lo.z
            && p.z < self.hi.z
    }

    pub fn volume(&self) -> f64 {
        (self.hi - self.lo).iter().product()
    }

    pub fn encloses(&self, other: &Aabb) -> bool {
        (0..3).all(|a| other.lo[a] >= self.lo[a] - 1e-9 && other.hi[a] <= self.hi[a] + 1e-9)
    }

    /// Distance from `p` to the box surface (0 on the boundary). Inside the
    /// box this is the distance to the nearest face.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        let mut outside2 = 0.0;
        let mut inside = f64::INFINITY;
        for a in 0..3 {
            let below = self.lo[a] - p[a];
            let above = p[a] - self.hi[a];
            if below > 0.0 {
                outside2 += below * below;
            } else if above > 0.0 {
                outside2 += above * above;
            } else {
                inside = inside.min((-below).min(-above));
            }
        }
        if outside2 > 0.0 {
            outside2.sqrt()
        } else {
            inside
        }
    }

    /// First intersection of a ray (unit direction) with the box from the
    /// outside: returns `(t, outward_normal)` of the entry face.
    pub fn ray_entry(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        let mut enter_axis = 0usize;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < self.lo[a] || origin[a] > self.hi[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let mut t0 = (self.lo[a] - origin[a]) * inv;
            let mut t1 = (self.hi[a] - origin[a]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            if t0 > t_enter {
                t_enter = t0;
                enter_axis = a;
            }
            t_exit = t_exit.min(t1);
        }
        if t_enter > t_exit || t_exit <= 1e-9 || t_enter <= 1e-9 {
            // Misses, exits behind the origin, or starts inside: no entry face.
            return None;
        }
        let mut normal = Vector3::zeros();
        normal[enter_axis] = -dir[enter_axis].signum();
        Some((t_enter, normal))
    }
}

/// What a solid stands for; all three are AABBs geometrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolidKind {
    /// Structural surface slab (floor, ceiling, walls).
    Slab,
    /// Free-standing furniture box.
    Box,
    /// Thin panel mounted on a wall (windows, screens).
    Panel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solid {
    pub kind: SolidKind,
    pub class: SemanticClass,
    pub aabb: Aabb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub solids: Vec<Solid>,
    pub bounds: Aabb,
}

impl SceneModel {
    /// Semantic label at a world point; overlaps resolved by the
    /// smallest-volume solid (objects beat walls).
    pub fn class_at(&self, p: &Vector3<f64>) -> SemanticClass {
        let mut best: Option<(f64, SemanticClass)> = None;
        for s in &self.solids {
            if s.aabb.contains(p) {
                let vol = s.aabb.volume();
                if best.map_or(true, |(bv, _)| vol < bv) {
                    best = Some((vol, s.class));
                }
            }
        }
        best.map_or(SemanticClass::Empty, |(_, c)| c)
    }

    /// Distance from `p` to the nearest solid surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.solids
            .iter()
            .map(|s| s.aabb.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest ray hit over all solids: `(t, outward_normal, class)`.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>, SemanticClass)> {
        let mut best: Option<(f64, Vector3<f64>, SemanticClass)> = None;
        for s in &self.solids {
            if let Some((t, n)) = s.aabb.ray_entry(origin, dir) {
                if best.map_or(true, |(bt, _, _)| t < bt) {
                    best = Some((t, n, s.class));
                }
            }
        }
        best
    }
}

/// Room generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub extent: [f64; 3],
    pub n_objects: usize,
    #[serde(default = "default_thickness")]
    pub surface_thickness: f64,
}

fn default_thickness() -> f64 {
    0.08
}

const OBJECT_BOX_CLASSES: [SemanticClass; 6] = [
    SemanticClass::Chair,
    SemanticClass::Bed,
    SemanticClass::Sofa,
    SemanticClass::Table,
    SemanticClass::Furniture,
    SemanticClass::Objects,
];
const PANEL_CLASSES: [SemanticClass; 2] = [SemanticClass::Window, SemanticClass::Tvs];

/// Builds a closed room (floor, ceiling, 4 walls) plus `n_objects`
/// deterministic furniture boxes and wall panels.
pub fn build_scene(seed: u64, spec: &RoomSpec) -> Result<SceneModel, SceneError> {
    let [ex, ey, ez] = spec.extent;
    let th = spec.surface_thickness;
    if ex < 1.0 || ey < 1.0 || ez < 1.0 {
        return Err(SceneError::InvalidSpec(format!(
            "room extent must be >= 1 m per axis (got {:?})",
            spec.extent
        )));
    }
    if th <= 0.0 || th * 4.0 >= ex.min(ey).min(ez) {
        return Err(SceneError::InvalidSpec(format!(
            "surface thickness {th} incompatible with extent {:?}",
            spec.extent
        )));
    }

    let v = Vector3::new;
    let mut solids = vec![
        Solid { kind: SolidKind::Slab, class: SemanticClass::Floor, aabb: Aabb::new(v(0.0, 0.0, 0.0), v(ex, ey, th)) },
        Solid { kind: SolidKind::Slab, class: SemanticClass::Ceiling, aabb: Aabb::new(v(0.0, 0.0, ez - th), v(ex, ey, ez)) },
        // x walls span full y; y walls are inset so no two slabs overlap.
        Solid { kind: SolidKind::Slab, class: SemanticClass::Wall, aabb: Aabb::new(v(0.0, 0.0, th), v(th, ey, ez - th)) },
        Solid { kind: SolidKind::Slab, class: SemanticClass::Wall, aabb: Aabb::new(v(ex - th, 0.0, th), v(ex, ey, ez - th)) },
        Solid { kind: SolidKind::Slab, class: SemanticClass::Wall, aabb: Aabb::new(v(th, 0.0, th), v(ex - th, th, ez - th)) },
        Solid { kind: SolidKind::Slab, class: SemanticClass::Wall, aabb: Aabb::new(v(th, ey - th, th), v(ex - th, ey, ez - th)) },
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = v(ex / 2.0, ey / 2.0, 0.0);
    let mut n_panels = 0usize;
    let mut n_boxes = 0usize;
    for i in 0..spec.n_objects {
        if i % 3 == 2 {
            // Thin panel on a wall interior face.
            let wall = n_panels % 4;
            let class = PANEL_CLASSES[n_panels % PANEL_CLASSES.len()];
            n_panels += 1;
            let w = rng.gen_range(0.6..1.0);
            let h = rng.gen_range(0.5..0.8);
            // One voxel deep: like the structural slabs, panels occupy a
            // full cell so voxelized ground truth is well-posed.
            let depth = 0.08;
            let zc = rng.gen_range(1.2..1.6);
            let along = rng.gen_range(0.3..0.7);
            let (lo, hi) = match wall {
                0 => {
                    let yc = th + along * (ey - 2.0 * th);
                    (v(th, yc - w / 2.0, zc - h / 2.0), v(th + depth, yc + w / 2.0, zc + h / 2.0))
                }
                1 => {
                    let yc = th + along * (ey - 2.0 * th);
                    (v(ex - th - depth, yc - w / 2.0, zc - h / 2.0), v(ex - th, yc + w / 2.0, zc + h / 2.0))
                }
                2 => {
                    let xc = th + along * (ex - 2.0 * th);
                    (v(xc - w / 2.0, th, zc - h / 2.0), v(xc + w / 2.0, th + depth, zc + h / 2.0))
                }
                _ => {
                    let xc = th + along * (ex - 2.0 * th);
                    (v(xc - w / 2.0, ey - th - depth, zc - h / 2.0), v(xc + w / 2.0, ey - th, zc + h / 2.0))
                }
            };
            solids.push(Solid { kind: SolidKind::Panel, class, aabb: Aabb::new(lo, hi) });
        } else {
            // Furniture box on the floor, kept in a perimeter ring so the
            // camera orbit around the room center stays clear.
            let class = OBJECT_BOX_CLASSES[n_boxes % OBJECT_BOX_CLASSES.len()];
            let slot = n_boxes % 8;
            n_boxes += 1;
            let angle = slot as f64 * std::f64::consts::FRAC_PI_4 + rng.gen_range(-0.15..0.15);
            let half = v(rng.gen_range(0.25..0.45), rng.gen_range(0.25..0.45), 0.0);
            // Desk-height furniture: an eye-level camera sees over it, so
            // walls behind objects stay observable along an orbit.
            let height = rng.gen_range(0.4..0.7);
            let ring = (ex.min(ey)) / 2.0 - th - half.x.max(half.y) - 0.15;
            let c = center + v(angle.cos(), angle.sin(), 0.0) * ring;
            let lo = v(c.x - half.x, c.y - half.y, th);
            let hi = v(c.x + half.x, c.y + half.y, th + height);
            solids.push(Solid { kind: SolidKind::Box, class, aabb: Aabb::new(lo, hi) });
        }
    }

    let bounds = Aabb::new(v(0.0, 0.0, 0.0), v(ex, ey, ez));
    debug_assert!(solids.iter().all(|s| bounds.encloses(&s.aabb)));
    Ok(SceneModel { solids, bounds })
}

/// Per-pixel depth (camera-frame z, `+inf` when nothing is hit), outward
/// unit normals, and semantic labels for one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
    pub semantics: Vec<SemanticClass>,
}

impl DepthFrame {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn normal_at(&self, x: usize, y: usize) -> Vector3<f64> {
        self.normals[y * self.width + x]
    }

    pub fn class_at(&self, x: usize, y: usize) -> SemanticClass {
        self.semantics[y * self.width + x]
    }

    /// Bilinear depth at continuous pixel coordinates. Returns `None`
    /// outside the sampling domain; `+inf` if any contributing corner has
    /// no surface.
    pub fn sample_depth(&self, u: f64, v: f64) -> Option<f64> {
        bilinear(self.width, self.height, u, v, |x, y| self.at(x, y))
    }

    /// Edge-aware depth read for geometric verification: across a depth
    /// discontinuity (or next to a no-hit pixel) bilinear blends surfaces
    /// that do not exist, so when the contributing corners disagree by more
    /// than [`DEPTH_EDGE_BAND`] this returns the corner nearest to
    /// `reference` instead of the blend.
    pub fn sample_depth_near(&self, u: f64, v: f64, reference: f64) -> Option<f64> {
        if !(u >= 0.0 && u <= (self.width - 1) as f64 && v >= 0.0 && v <= (self.height - 1) as f64)
        {
            return None;
        }
        let x0 = (u.floor() as usize).min(self.width - 1);
        let y0 = (v.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let corners = [
            ((1.0 - fx) * (1.0 - fy), x0, y0),
            (fx * (1.0 - fy), x1, y0),
            ((1.0 - fx) * fy, x0, y1),
            (fx * fy, x1, y1),
        ];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut any_infinite = false;
        for (w, x, y) in corners {
            if w == 0.0 {
                continue;
            }
            let d = self.at(x, y);
            if d.is_finite() {
                lo = lo.min(d);
                hi = hi.max(d);
            } else {
                any_infinite = true;
            }
        }
        if lo > hi {
            // No finite contributing corner at all.
            return Some(f64::INFINITY);
        }
        if any_infinite || hi - lo > DEPTH_EDGE_BAND {
            let mut best = f64::INFINITY;
            let mut best_gap = f64::INFINITY;
            for (w, x, y) in corners {
                if w == 0.0 {
                    continue;
                }
                let d = self.at(x, y);
                let gap = if d.is_finite() { (d - reference).abs() } else { f64::INFINITY };
                if gap < best_gap {
                    best_gap = gap;
                    best = d;
                }
            }
            Some(best)
        } else {
            self.sample_depth(u, v)
        }
    }

    /// Bilinear normal (renormalized) at continuous pixel coordinates.
    pub fn sample_normal(&self, u: f64, v: f64) -> Option<Vector3<f64>> {
        let x = bilinear(self.width, self.height, u, v, |x, y| self.normal_at(x, y).x)?;
        let y = bilinear(self.width, self.height, u, v, |x, y| self.normal_at(x, y).y)?;
        let z = bilinear(self.width, self.height, u, v, |x, y| self.normal_at(x, y).z)?;
        let n = Vector3::new(x, y, z);
        let norm = n.norm();
        if norm > 1e-9 && norm.is_finite() {
            Some(n / norm)
        } else {
            None
        }
    }
}

/// Weighted bilinear interpolation over a scalar field sampled at integer
/// pixel coordinates. Corners with zero weight are ignored, so infinities
/// cannot poison an on-grid sample.
pub(crate) fn bilinear<F: Fn(usize, usize) -> f64>(
    width: usize,
    height: usize,
    u: f64,
    v: f64,
    f: F,
) -> Option<f64> {
    if !(u >= 0.0 && u <= (width - 1) as f64 && v >= 0.0 && v <= (height - 1) as f64) {
        return None;
    }
    let x0 = (u.floor() as usize).min(width - 1);
    let y0 = (v.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let corners = [
        ((1.0 - fx) * (1.0 - fy), x0, y0),
        (fx * (1.0 - fy), x1, y0),
        ((1.0 - fx) * fy, x0, y1),
        (fx * fy, x1, y1),
    ];
    let mut acc = 0.0;
    for (w, x, y) in corners {
        if w == 0.0 {
            continue;
        }
        let val = f(x, y);
        if !val.is_finite() {
            return Some(f64::INFINITY);
        }
        acc += w * val;
    }
    Some(acc)
}

/// Optional zero-mean Gaussian depth noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DepthNoise {
    pub sigma: f64,
    pub seed: u64,
}

/// Raycasts the scene into a [`DepthFrame`]. Depth is the camera-frame z
/// of the nearest hit; pixels whose ray escapes (e.g. through an opening)
/// get `+inf` depth, zero normal, and the `Empty` class.
pub fn render_depth(
    scene: &SceneModel,
    intr: &CameraIntrinsics,
    pose: &Pose,
    noise: Option<DepthNoise>,
) -> Result<DepthFrame, SceneError> {
    let cam = pose.camera_center();
    if !scene.bounds.contains(&cam) {
        return Err(SceneError::CameraOutsideScene([cam.x, cam.y, cam.z]));
    }
    let (w, h) = (intr.width, intr.height);
    let pixels = par::map_indexed(w * h, |idx| {
        let x = idx % w;
        let y = idx / w;
        let dir_cam = Vector3::new(
            (x as f64 - intr.cx) / intr.fx,
            (y as f64 - intr.cy) / intr.fy,
            1.0,
        );
        let cos_axis = 1.0 / dir_cam.norm();
        let dir_world = pose.direction_to_world(&dir_cam.normalize());
        match scene.raycast(&cam, &dir_world) {
            Some((t, n, class)) => (t * cos_axis, n, class),
            None => (f64::INFINITY, Vector3::zeros(), SemanticClass::Empty),
        }
    });

    let mut depth = Vec::with_capacity(w * h);
    let mut normals = Vec::with_capacity(w * h);
    let mut semantics = Vec::with_capacity(w * h);
    for (d, n, c) in pixels {
        depth.push(d);
        normals.push(n);
        semantics.push(c);
    }

    if let Some(nz) = noise {
        if nz.sigma > 0.0 {
            let gauss = Normal::new(0.0, nz.sigma)
                .map_err(|e| SceneError::InvalidSpec(format!("depth noise: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(nz.seed);
            for d in depth.iter_mut() {
                if d.is_finite() {
                    *d = (*d + gauss.sample(&mut rng)).max(1e-6);
                }
            }
        }
    }

    Ok(DepthFrame { width: w, height: h, depth, normals, semantics })
}

/// Voxelizes ground-truth occupancy: each voxel labeled by a point-in-solid
/// test at its center, smallest solid winning overlaps.
pub fn gt_occupancy(scene: &SceneModel, spec: &VoxelGridSpec) -> Result<SemanticVoxelGrid, SceneError> {
    let max = spec.world_max();
    let grid_box = Aabb::new(spec.origin, max);
    if !scene.bounds.encloses(&grid_box) {
        return Err(SceneError::GridOutsideScene);
    }
    let labels = par::map_indexed(spec.len(), |idx| {
        let (i, j, k) = spec.unlinear(idx);
        scene.class_at(&spec.voxel_center(i, j, k)).code()
    });
    Ok(SemanticVoxelGrid { spec: *spec, labels })
}

/// Circular look-at trajectory parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub n_frames: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
    pub look_at: [f64; 3],
}

/// Generates `n_frames` look-at poses on a closed circle. Consecutive
/// camera centers are verified to be at most 0.3 m apart.
pub fn gen_trajectory(scene: &SceneModel, traj: &TrajectorySpec) -> Result<Vec<Pose>, SceneError> {
    if traj.n_frames == 0 {
        return Err(SceneError::InvalidSpec("trajectory needs n_frames >= 1".into()));
    }
    let target = Vector3::new(traj.look_at[0], traj.look_at[1], traj.look_at[2]);
    let mut poses = Vec::with_capacity(traj.n_frames);
    let mut prev: Option<Vector3<f64>> = None;
    for i in 0..traj.n_frames {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / traj.n_frames as f64;
        let eye = Vector3::new(
            traj.center[0] + traj.radius * theta.cos(),
            traj.center[1] + traj.radius * theta.sin(),
            traj.height,
        );
        if !scene.bounds.contains(&eye) {
            return Err(SceneError::PathLeavesBounds(i));
        }
        if let Some(p) = prev {
            let step = (eye - p).norm();
            if step > 0.3 + 1e-9 {
                return Err(SceneError::StepTooLarge(step));
            }
        }
        prev = Some(eye);
        let pose = Pose::look_at(eye, target)
            .map_err(|_| SceneError::InvalidSpec("look-at target coincides with camera".into()))?;
        poses.push(pose);
    }
    Ok(poses)
}

/// Jitters the pose translation by per-axis uniform noise of magnitude
/// `frac * ||t||`; rotation is unchanged. Deterministic per seed.
pub fn perturb_pose(pose: &Pose, frac: f64, seed: u64) -> Result<Pose, SceneError> {
    if !(0.0..=0.2).contains(&frac) {
        return Err(SceneError::FracOutOfRange(frac));
    }
    if frac == 0.0 {
        return Ok(*pose);
    }
    let mag = frac * pose.translation().norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = Vector3::new(
        rng.gen_range(-mag..=mag),
        rng.gen_range(-mag..=mag),
        rng.gen_range(-mag..=mag),
    );
    Ok(Pose::new(*pose.rotation(), pose.translation() + delta).expect("rotation unchanged"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{backproject, ray_through};
    use approx::assert_abs_diff_eq;

    fn room4() -> RoomSpec {
        RoomSpec { extent: [4.0, 4.0, 2.4], n_objects: 0, surface_thickness: 0.08 }
    }

    fn small_intr() -> CameraIntrinsics {
        CameraIntrinsics::new(40.0, 40.0, 23.5, 17.5, 48, 36).unwrap()
    }

    #[test]
    fn empty_room_has_six_structural_solids() {
        let scene = build_scene(0, &room4()).unwrap();
        assert_eq!(scene.solids.len(), 6);
        assert!(scene.solids.iter().all(|s| s.kind == SolidKind::Slab));
    }

    #[test]
    fn build_is_deterministic() {
        let spec = RoomSpec { n_objects: 5, ..room4() };
        assert_eq!(build_scene(0, &spec).unwrap(), build_scene(0, &spec).unwrap());
    }

    #[test]
    fn object_count_adds_to_structurals() {
        let spec = RoomSpec { n_objects: 3, ..room4() };
        let scene = build_scene(0, &spec).unwrap();
        assert_eq!(scene.solids.len(), 9);
        assert!(scene.solids.iter().all(|s| scene.bounds.encloses(&s.aabb)));
    }

    #[test]
    fn too_small_room_rejected() {
        let spec = RoomSpec { extent: [0.5, 4.0, 2.4], ..room4() };
        assert!(matches!(build_scene(0, &spec), Err(SceneError::InvalidSpec(_))));
    }

    #[test]
    fn head_on_wall_depth_and_normal() {
        let scene = build_scene(0, &room4()).unwrap();
        // Camera 1 m from the x=4 wall's inner face (x = 3.92), facing +x.
        let eye = Vector3::new(2.92, 2.0, 1.2);
        let pose = Pose::look_at(eye, Vector3::new(3.92, 2.0, 1.2)).unwrap();
        let intr = small_intr();
        let frame = render_depth(&scene, &intr, &pose, None).unwrap();
        // Principal point is at (23.5, 17.5); pixel (23, 17) is 0.5 px off
        // axis, close enough for an axis-aligned wall (z-depth is constant
        // across the wall).
        let d = frame.at(23, 17);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
        let n = frame.normal_at(23, 17);
        assert_abs_diff_eq!(n, Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(frame.class_at(23, 17), SemanticClass::Wall);
    }

    #[test]
    fn zero_noise_is_identical() {
        let scene = build_scene(0, &room4()).unwrap();
        let pose = Pose::look_at(Vector3::new(2.0, 2.0, 1.2), Vector3::new(3.9, 2.0, 1.2)).unwrap();
        let intr = small_intr();
        let clean = render_depth(&scene, &intr, &pose, None).unwrap();
        let zero = render_depth(&scene, &intr, &pose, Some(DepthNoise { sigma: 0.0, seed: 1 })).unwrap();
        assert_eq!(clean, zero);
    }

    #[test]
    fn camera_outside_scene_rejected() {
        let scene = build_scene(0, &room4()).unwrap();
        let pose = Pose::look_at(Vector3::new(-1.0, 2.0, 1.2), Vector3::new(2.0, 2.0, 1.2)).unwrap();
        assert!(matches!(
            render_depth(&scene, &small_intr(), &pose, None),
            Err(SceneError::CameraOutsideScene(_))
        ));
    }

    #[test]
    fn open_scene_escaping_rays_are_infinite() {
        // A floor-only scene: rays pointing up never hit anything.
        let scene = SceneModel {
            solids: vec![Solid {
                kind: SolidKind::Slab,
                class: SemanticClass::Floor,
                aabb: Aabb::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(4.0, 4.0, 0.08)),
            }],
            bounds: Aabb::new(Vector3::zeros(), Vector3::new(4.0, 4.0, 2.4)),
        };
        let pose = Pose::look_at(Vector3::new(2.0, 2.0, 1.0), Vector3::new(2.0, 2.0, 2.2)).unwrap();
        let frame = render_depth(&scene, &small_intr(), &pose, None).unwrap();
        assert!(frame.at(23, 17).is_infinite());
        assert_eq!(frame.class_at(23, 17), SemanticClass::Empty);
    }

    #[test]
    fn depth_pixels_backproject_onto_surfaces() {
        let spec = RoomSpec { n_objects: 4, ..room4() };
        let scene = build_scene(3, &spec).unwrap();
        let intr = small_intr();
        let pose = Pose::look_at(Vector3::new(2.0, 2.0, 1.4), Vector3::new(3.5, 2.5, 1.0)).unwrap();
        let frame = render_depth(&scene, &intr, &pose, None).unwrap();
        let cam = pose.camera_center();
        for y in 0..frame.height {
            for x in 0..frame.width {
                let d = frame.at(x, y);
                if !d.is_finite() {
                    continue;
                }
                let p = backproject(&intr, &pose, x as f64, y as f64, d).unwrap();
                assert!(
                    scene.surface_distance(&p) < 1e-6,
                    "pixel ({x},{y}) backprojects {} m off-surface",
                    scene.surface_distance(&p)
                );
                // Outward-facing normal opposes the viewing ray.
                let ray = ray_through(&cam, &p).unwrap();
                assert!(frame.normal_at(x, y).dot(&ray.direction) < 0.0);
            }
        }
    }

    #[test]
    fn gt_occupancy_labels_floor_and_air() {
        let scene = build_scene(0, &room4()).unwrap();
        let spec = VoxelGridSpec::new(Vector3::zeros(), (50, 50, 30), 0.08).unwrap();
        let grid = gt_occupancy(&scene, &spec).unwrap();
        // Voxel centered inside the floor slab.
        assert_eq!(grid.label(10, 10, 0), SemanticClass::Floor.code());
        // Mid-air voxel.
        assert_eq!(grid.label(25, 25, 15), SemanticClass::Empty.code());
        // Determinism.
        assert_eq!(grid, gt_occupancy(&scene, &spec).unwrap());
    }

    #[test]
    fn gt_occupancy_rejects_grid_outside_bounds() {
        let scene = build_scene(0, &room4()).unwrap();
        let spec = VoxelGridSpec::new(Vector3::new(-1.0, 0.0, 0.0), (10, 10, 10), 0.08).unwrap();
        assert!(matches!(gt_occupancy(&scene, &spec), Err(SceneError::GridOutsideScene)));
    }

    #[test]
    fn gt_occupancy_agrees_with_supersampling_oracle() {
        let spec = RoomSpec { n_objects: 4, extent: [4.0, 4.0, 2.4], surface_thickness: 0.3 };
        let scene = build_scene(5, &spec).unwrap();
        let grid_spec = VoxelGridSpec::new(Vector3::new(0.2, 0.2, 0.2), (8, 8, 8), 0.25).unwrap();
        let grid = gt_occupancy(&scene, &grid_spec).unwrap();

        // Oracle: 27-point lattice per voxel, majority vote, ties resolved
        // by the center sample.
        let mut agree = 0usize;
        for idx in 0..grid_spec.len() {
            let (i, j, k) = grid_spec.unlinear(idx);
            let base = grid_spec.origin
                + Vector3::new(i as f64, j as f64, k as f64) * grid_spec.resolution;
            let mut votes = [0usize; NUM_CLASSES];
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        let p = base
                            + Vector3::new(a as f64, b as f64, c as f64)
                                * (grid_spec.resolution / 2.0);
                        votes[scene.class_at(&p) as usize] += 1;
                    }
                }
            }
            let center_label = grid.label(i, j, k) as usize;
            let max_votes = *votes.iter().max().unwrap();
            let winners: Vec<usize> =
                (0..NUM_CLASSES).filter(|&c| votes[c] == max_votes).collect();
            let oracle = if winners.contains(&center_label) {
                center_label
            } else {
                winners[0]
            };
            if oracle == grid.label(i, j, k) as usize {
                agree += 1;
            }
        }
        let frac = agree as f64 / grid_spec.len() as f64;
        assert!(frac >= 0.95, "supersampling agreement only {frac:.3}");
    }

    #[test]
    fn empty_room_shell_fraction_is_analytic() {
        let spec = room4();
        let scene = build_scene(0, &spec).unwrap();
        let grid_spec = VoxelGridSpec::new(Vector3::zeros(), (50, 50, 30), 0.08).unwrap();
        let grid = gt_occupancy(&scene, &grid_spec).unwrap();
        let occupied = grid.labels.iter().filter(|&&l| l != 0).count() as f64;
        let frac = occupied / grid_spec.len() as f64;
        let [ex, ey, ez] = spec.extent;
        let th = spec.surface_thickness;
        let shell = ex * ey * ez - (ex - 2.0 * th) * (ey - 2.0 * th) * (ez - 2.0 * th);
        let expected = shell / (ex * ey * ez);
        assert!((frac - expected).abs() < 0.02, "shell fraction {frac:.4} vs {expected:.4}");
    }

    #[test]
    fn trajectory_single_frame_and_closure() {
        let scene = build_scene(0, &room4()).unwrap();
        let traj = TrajectorySpec {
            n_frames: 30,
            center: [2.0, 2.0],
            radius: 1.0,
            height: 1.5,
            look_at: [2.0, 2.0, 1.2],
        };
        let poses = gen_trajectory(&scene, &traj).unwrap();
        assert_eq!(poses.len(), 30);
        let step = (poses[1].camera_center() - poses[0].camera_center()).norm();
        let closure = (poses[29].camera_center() - poses[0].camera_center()).norm();
        assert!(step <= 0.3);
        assert!(closure <= step + 1e-9);

        let single = gen_trajectory(&scene, &TrajectorySpec { n_frames: 1, ..traj.clone() }).unwrap();
        assert_eq!(single.len(), 1);
        assert_abs_diff_eq!(
            single[0].camera_center(),
            Vector3::new(3.0, 2.0, 1.5),
            epsilon = 1e-12
        );

        let fixed = gen_trajectory(&scene, &TrajectorySpec { radius: 0.0, n_frames: 5, ..traj }).unwrap();
        for p in &fixed {
            assert_abs_diff_eq!(p.camera_center(), fixed[0].camera_center(), epsilon = 1e-12);
        }
    }

    #[test]
    fn trajectory_out_of_bounds_rejected() {
        let scene = build_scene(0, &room4()).unwrap();
        let traj = TrajectorySpec {
            n_frames: 64,
            center: [2.0, 2.0],
            radius: 2.5,
            height: 1.5,
            look_at: [2.0, 2.0, 1.2],
        };
        assert!(matches!(gen_trajectory(&scene, &traj), Err(SceneError::PathLeavesBounds(_))));
    }

    #[test]
    fn perturb_pose_contract() {
        let pose = Pose::look_at(Vector3::new(2.0, 1.0, 1.5), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(perturb_pose(&pose, 0.0, 9).unwrap(), pose);
        assert_eq!(perturb_pose(&pose, 0.05, 9).unwrap(), perturb_pose(&pose, 0.05, 9).unwrap());
        let p = perturb_pose(&pose, 0.05, 9).unwrap();
        let bound = 0.05 * pose.translation().norm();
        let delta = p.translation() - pose.translation();
        assert!(delta.amax() <= bound + 1e-12);
        assert_eq!(p.rotation(), pose.rotation());
        assert!(matches!(perturb_pose(&pose, 0.5, 1), Err(SceneError::FracOutOfRange(_))));
    }
}
