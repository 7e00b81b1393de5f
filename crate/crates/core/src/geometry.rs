//! Pinhole camera geometry, rigid poses, rays, and voxel-grid indexing.
//!
//! Conventions used throughout the crate:
//!
//! - Right-handed camera frame: +z forward, +x right, +y down
//!   (pixel `v` grows downward). Depth is the camera-frame z coordinate.
//! - Poses are camera-from-world: `p_cam = R * p_world + t`, so the
//!   camera center in world coordinates is `-Rᵀ t`.
//! - Voxels own the half-open cell `[lo, hi)` along every axis, so a
//!   boundary point maps to exactly one voxel.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Minimum camera-frame depth for a point to count as "in front".
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("depth must be positive (got {0})")]
    NonPositiveDepth(f64),
    #[error("ray endpoints coincide; direction is undefined")]
    DegenerateRay,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (max deviation {0:.3e})")]
    InvalidRotation(f64),
}

/// Pinhole intrinsics: focal lengths, principal point, and image size,
/// all in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// True when continuous pixel coordinates fall inside the sampling
    /// domain `[0, width-1] x [0, height-1]`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u <= (self.width - 1) as f64 && v >= 0.0 && v <= (self.height - 1) as f64
    }
}

/// Rigid camera-from-world transform. Rotation is kept as an orthonormal
/// matrix, checked at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        let det_dev = (rotation.determinant() - 1.0).abs();
        if dev > ORTHONORMAL_TOL || det_dev > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidRotation(dev.max(det_dev)));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in the world frame: `-Rᵀ t`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Rotates a direction from camera to world frame.
    pub fn direction_to_world(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * d
    }

    pub fn inverse(&self) -> Self {
        let rot_t = self.rotation.transpose();
        Self { rotation: rot_t, translation: -(rot_t * self.translation) }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Look-at pose: camera at `eye`, +z toward `target`, +y down
    /// (world up is +z).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-9 {
            return Err(GeometryError::DegenerateRay);
        }
        let z_c = forward.normalize();
        let world_up = Vector3::new(0.0, 0.0, 1.0);
        let mut x_c = z_c.cross(&world_up);
        if x_c.norm() < 1e-9 {
            // Looking straight up or down; pick an arbitrary horizontal right.
            x_c = Vector3::new(1.0, 0.0, 0.0);
        }
        let x_c = x_c.normalize();
        let y_c = z_c.cross(&x_c);
        let rotation = Matrix3::from_rows(&[x_c.transpose(), y_c.transpose(), z_c.transpose()]);
        let translation = -(rotation * eye);
        Pose::new(rotation, translation)
    }
}

/// Half-line in world coordinates with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn point_at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Dense voxel grid layout: world origin, per-axis counts, and cubic cell
/// size in meters. Linear indexing is x-fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridSpec {
    pub origin: Vector3<f64>,
    pub dims: (usize, usize, usize),
    pub resolution: f64,
}

impl VoxelGridSpec {
    pub fn new(
        origin: Vector3<f64>,
        dims: (usize, usize, usize),
        resolution: f64,
    ) -> Result<Self, GeometryError> {
        if resolution <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "voxel resolution must be positive (got {resolution})"
            )));
        }
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "grid dims must all be >= 1 (got {dims:?})"
            )));
        }
        Ok(Self { origin, dims, resolution })
    }

    pub fn len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of voxel (i, j, k), x-fastest.
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    /// Inverse of [`linear`](Self::linear).
    pub fn unlinear(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.dims.0;
        let j = (idx / self.dims.0) % self.dims.1;
        let k = idx / (self.dims.0 * self.dims.1);
        (i, j, k)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                (i as f64 + 0.5) * self.resolution,
                (j as f64 + 0.5) * self.resolution,
                (k as f64 + 0.5) * self.resolution,
            )
    }

    /// World-space AABB covered by the grid.
    pub fn world_max(&self) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                self.dims.0 as f64 * self.resolution,
                self.dims.1 as f64 * self.resolution,
                self.dims.2 as f64 * self.resolution,
            )
    }
}

/// Projects a world point through a pose and intrinsics, returning
/// continuous pixel coordinates and the camera-frame depth.
///
/// The returned (u, v) may lie outside the image; callers check bounds.
pub fn project_point(
    intr: &CameraIntrinsics,
    pose: &Pose,
    p_world: &Vector3<f64>,
) -> Result<(f64, f64, f64), GeometryError> {
    let p_cam = pose.world_to_camera(p_world);
    if p_cam.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { z: p_cam.z });
    }
    let inv_z = 1.0 / p_cam.z;
    let u = intr.fx * p_cam.x * inv_z + intr.cx;
    let v = intr.fy * p_cam.y * inv_z + intr.cy;
    Ok((u, v, p_cam.z))
}

/// Inverse of [`project_point`]: pixel coordinates plus camera-frame depth
/// back to a world point.
pub fn backproject(
    intr: &CameraIntrinsics,
    pose: &Pose,
    u: f64,
    v: f64,
    depth: f64,
) -> Result<Vector3<f64>, GeometryError> {
    if depth <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let x = (u - intr.cx) / intr.fx * depth;
    let y = (v - intr.cy) / intr.fy * depth;
    Ok(pose.camera_to_world(&Vector3::new(x, y, depth)))
}

/// Ray from `origin` through `target`, with unit direction.
pub fn ray_through(origin: &Vector3<f64>, target: &Vector3<f64>) -> Result<Ray, GeometryError> {
    let diff = target - origin;
    let norm = diff.norm();
    if norm <= 1e-9 {
        return Err(GeometryError::DegenerateRay);
    }
    Ok(Ray { origin: *origin, direction: diff / norm })
}

/// Voxel index containing a world point, or `None` when outside the grid.
pub fn world_to_voxel(spec: &VoxelGridSpec, p: &Vector3<f64>) -> Option<(usize, usize, usize)> {
    let rel = (p - spec.origin) / spec.resolution;
    let i = rel.x.floor();
    let j = rel.y.floor();
    let k = rel.z.floor();
    if i < 0.0 || j < 0.0 || k < 0.0 {
        return None;
    }
    let (i, j, k) = (i as usize, j as usize, k as usize);
    if i >= spec.dims.0 || j >= spec.dims.1 || k >= spec.dims.2 {
        return None;
    }
    Some((i, j, k))
}
