//! Voxel-grid decoding and occupancy metrics.
//!
//! The Gaussian pool decodes into a dense labeled grid: each primitive
//! spreads its class distribution over nearby voxel centers with an
//! isotropic Gaussian kernel, and a voxel is occupied when enough
//! non-empty mass accumulates. Metrics are the standard trio: class-
//! agnostic SC-IoU, per-class mIoU over classes that are present, and a
//! boundary F1 matched within a Chebyshev voxel distance.

use crate::geometry::{project_point, CameraIntrinsics, Pose, VoxelGridSpec};
use crate::memory::{softmax, GaussianPool};
use crate::par;
use crate::scene::{DepthFrame, SemanticClass, NUM_CLASSES};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// Occupancy mass threshold: a single on-center primitive at scale = res
/// clears it with room to spare.
pub const DEFAULT_THETA_OCC: f64 = 0.25;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("voxel grids have different specs")]
    SpecMismatch,
    #[error("grid file has a bad magic or truncated payload")]
    BadFormat,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense semantic occupancy volume; labels are class codes in x-fastest
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticVoxelGrid {
    pub spec: VoxelGridSpec,
    pub labels: Vec<u8>,
}

impl SemanticVoxelGrid {
    pub fn empty(spec: VoxelGridSpec) -> Self {
        Self { spec, labels: vec![0; spec.len()] }
    }

    pub fn label(&self, i: usize, j: usize, k: usize) -> u8 {
        self.labels[self.spec.linear(i, j, k)]
    }

    pub fn occupied(&self, idx: usize) -> bool {
        self.labels[idx] != SemanticClass::Empty.code()
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Copy with labels outside the mask forced to empty (used to restrict
    /// evaluation to observed voxels).
    pub fn masked(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.labels.len());
        let labels = self
            .labels
            .iter()
            .zip(mask.iter())
            .map(|(&l, &m)| if m { l } else { 0 })
            .collect();
        Self { spec: self.spec, labels }
    }
}

/// Per-primitive kernel weight at a voxel center, zero beyond 3·scale.
fn kernel(dist2: f64, scale: f64) -> f64 {
    let cutoff = 3.0 * scale;
    if dist2 > cutoff * cutoff {
        0.0
    } else {
        (-dist2 / (2.0 * scale * scale)).exp()
    }
}

fn label_from_accumulator(acc: &[f64; NUM_CLASSES], theta_occ: f64) -> u8 {
    let occupied_mass: f64 = acc[1..].iter().sum();
    if occupied_mass < theta_occ {
        return SemanticClass::Empty.code();
    }
    let mut best = 0usize;
    for c in 1..NUM_CLASSES {
        if acc[c] > acc[best] {
            best = c;
        }
    }
    best as u8
}

/// Decodes the pool with a per-voxel neighbor search over a spatial hash.
/// Contributions are summed in ascending primitive index order, so the
/// result is bit-identical to [`decode_pool_brute`].
pub fn decode_pool(pool: &GaussianPool, spec: &VoxelGridSpec, theta_occ: f64) -> SemanticVoxelGrid {
    let probs: Vec<[f64; NUM_CLASSES]> =
        par::map_slice(&pool.primitives, |p| softmax(&p.logits, 1.0));
    let res = spec.resolution;

    // Bucket primitives by cell; insertion in index order keeps each
    // bucket ascending.
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut max_scale = 0.0f64;
    for (idx, p) in pool.primitives.iter().enumerate() {
        let key = (
            ((p.position.x - spec.origin.x) / res).floor() as i64,
            ((p.position.y - spec.origin.y) / res).floor() as i64,
            ((p.position.z - spec.origin.z) / res).floor() as i64,
        );
        cells.entry(key).or_default().push(idx);
        max_scale = max_scale.max(p.scale);
    }
    let reach = ((3.0 * max_scale) / res).ceil() as i64 + 1;

    let labels = par::map_indexed(spec.len(), |vidx| {
        let (i, j, k) = spec.unlinear(vidx);
        let center = spec.voxel_center(i, j, k);
        let (ci, cj, ck) = (i as i64, j as i64, k as i64);
        let mut candidates: Vec<usize> = Vec::new();
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if let Some(bucket) = cells.get(&(ci + dx, cj + dy, ck + dz)) {
                        candidates.extend_from_slice(bucket);
                    }
                }
            }
        }
        candidates.sort_unstable();
        let mut acc = [0.0f64; NUM_CLASSES];
        for pidx in candidates {
            let p = &pool.primitives[pidx];
            let w = kernel((p.position - center).norm_squared(), p.scale);
            if w > 0.0 {
                for c in 0..NUM_CLASSES {
                    acc[c] += probs[pidx][c] * w;
                }
            }
        }
        label_from_accumulator(&acc, theta_occ)
    });
    SemanticVoxelGrid { spec: *spec, labels }
}

/// Reference decode: a full-pool scan per voxel, no spatial index.
pub fn decode_pool_brute(pool: &GaussianPool, spec: &VoxelGridSpec, theta_occ: f64) -> SemanticVoxelGrid {
    let probs: Vec<[f64; NUM_CLASSES]> =
        pool.primitives.iter().map(|p| softmax(&p.logits, 1.0)).collect();
    let labels = par::map_indexed(spec.len(), |vidx| {
        let (i, j, k) = spec.unlinear(vidx);
        let center = spec.voxel_center(i, j, k);
        let mut acc = [0.0f64; NUM_CLASSES];
        for (pidx, p) in pool.primitives.iter().enumerate() {
            let w = kernel((p.position - center).norm_squared(), p.scale);
            if w > 0.0 {
                for c in 0..NUM_CLASSES {
                    acc[c] += probs[pidx][c] * w;
                }
            }
        }
        label_from_accumulator(&acc, theta_occ)
    });
    SemanticVoxelGrid { spec: *spec, labels }
}

/// Class-agnostic occupied-vs-empty IoU; 1.0 when both grids are empty.
pub fn sc_iou(pred: &SemanticVoxelGrid, gt: &SemanticVoxelGrid) -> Result<f64, EvalError> {
    if pred.spec != gt.spec {
        return Err(EvalError::SpecMismatch);
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (p, g) in pred.labels.iter().zip(gt.labels.iter()) {
        let (po, go) = (*p != 0, *g != 0);
        if po && go {
            inter += 1;
        }
        if po || go {
            union += 1;
        }
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Per-class IoUs (semantic classes only) and their mean over classes
/// present in either grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub sc_iou: f64,
    pub per_class_iou: [Option<f64>; NUM_CLASSES - 1],
    pub miou: Option<f64>,
    pub boundary_f1: f64,
}

impl MetricReport {
    pub fn class_iou(&self, class: SemanticClass) -> Option<f64> {
        assert_ne!(class, SemanticClass::Empty);
        self.per_class_iou[class as usize - 1]
    }
}

/// Per-class voxel IoU; classes absent from both grids are excluded from
/// the mean rather than scored zero.
pub fn miou(pred: &SemanticVoxelGrid, gt: &SemanticVoxelGrid) -> Result<([Option<f64>; NUM_CLASSES - 1], Option<f64>), EvalError> {
    if pred.spec != gt.spec {
        return Err(EvalError::SpecMismatch);
    }
    let mut tp = [0usize; NUM_CLASSES];
    let mut fp = [0usize; NUM_CLASSES];
    let mut fnn = [0usize; NUM_CLASSES];
    for (&p, &g) in pred.labels.iter().zip(gt.labels.iter()) {
        if p == g {
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fnn[g as usize] += 1;
        }
    }
    let mut per_class = [None; NUM_CLASSES - 1];
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 1..NUM_CLASSES {
        let denom = tp[c] + fp[c] + fnn[c];
        if denom > 0 {
            let iou = tp[c] as f64 / denom as f64;
            per_class[c - 1] = Some(iou);
            sum += iou;
            count += 1;
        }
    }
    let mean = if count > 0 { Some(sum / count as f64) } else { None };
    Ok((per_class, mean))
}

/// Occupied voxels with at least one empty 6-neighbor; the grid edge
/// counts as empty.
pub fn boundary_mask(grid: &SemanticVoxelGrid) -> Vec<bool> {
    let (nx, ny, nz) = grid.spec.dims;
    let mut mask = vec![false; grid.labels.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.spec.linear(i, j, k);
                if !grid.occupied(idx) {
                    continue;
                }
                let mut exposed = false;
                let neighbors: [(isize, isize, isize); 6] =
                    [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
                for (dx, dy, dz) in neighbors {
                    let (x, y, z) = (i as isize + dx, j as isize + dy, k as isize + dz);
                    if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
                        exposed = true;
                        break;
                    }
                    if !grid.occupied(grid.spec.linear(x as usize, y as usize, z as usize)) {
                        exposed = true;
                        break;
                    }
                }
                mask[idx] = exposed;
            }
        }
    }
    mask
}

/// Dilates a mask by a Chebyshev radius.
fn dilate(mask: &[bool], spec: &VoxelGridSpec, radius: usize) -> Vec<bool> {
    let (nx, ny, nz) = spec.dims;
    let r = radius as isize;
    let mut out = vec![false; mask.len()];
    for k in 0..nz as isize {
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let idx = spec.linear(i as usize, j as usize, k as usize);
                if !mask[idx] {
                    continue;
                }
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (x, y, z) = (i + dx, j + dy, k + dz);
                            if x >= 0 && y >= 0 && z >= 0 && x < nx as isize && y < ny as isize && z < nz as isize {
                                out[spec.linear(x as usize, y as usize, z as usize)] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Boundary F1: precision/recall of boundary voxels matched within a
/// Chebyshev distance of `dist` voxels.
pub fn boundary_f1(pred: &SemanticVoxelGrid, gt: &SemanticVoxelGrid, dist: usize) -> Result<f64, EvalError> {
    if pred.spec != gt.spec {
        return Err(EvalError::SpecMismatch);
    }
    let pb = boundary_mask(pred);
    let gb = boundary_mask(gt);
    let n_pred = pb.iter().filter(|&&b| b).count();
    let n_gt = gb.iter().filter(|&&b| b).count();
    if n_pred == 0 && n_gt == 0 {
        return Ok(1.0);
    }
    if n_pred == 0 || n_gt == 0 {
        return Ok(0.0);
    }
    let gt_dilated = dilate(&gb, &gt.spec, dist);
    let pred_dilated = dilate(&pb, &pred.spec, dist);
    let matched_pred = pb.iter().zip(gt_dilated.iter()).filter(|(&p, &g)| p && g).count();
    let matched_gt = gb.iter().zip(pred_dilated.iter()).filter(|(&g, &p)| g && p).count();
    let precision = matched_pred as f64 / n_pred as f64;
    let recall = matched_gt as f64 / n_gt as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Full metric bundle.
pub fn evaluate(pred: &SemanticVoxelGrid, gt: &SemanticVoxelGrid, boundary_dist: usize) -> Result<MetricReport, EvalError> {
    let (per_class_iou, miou_val) = miou(pred, gt)?;
    Ok(MetricReport {
        sc_iou: sc_iou(pred, gt)?,
        per_class_iou,
        miou: miou_val,
        boundary_f1: boundary_f1(pred, gt, boundary_dist)?,
    })
}

/// True for voxels whose center is in view and not more than `margin`
/// behind the rendered surface — the observed region of one frame.
pub fn observed_mask(
    spec: &VoxelGridSpec,
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    margin: f64,
) -> Vec<bool> {
    par::map_indexed(spec.len(), |idx| {
        let (i, j, k) = spec.unlinear(idx);
        let center = spec.voxel_center(i, j, k);
        let (u, v, d_proj) = match project_point(intr, pose, &center) {
            Ok(x) => x,
            Err(_) => return false,
        };
        match depth.sample_depth(u, v) {
            Some(d) if d.is_finite() => d_proj <= d + margin,
            Some(_) => true, // open space: everything along the ray is observed
            None => false,
        }
    })
}

const GRID_MAGIC: &[u8; 5] = b"SVOX1";

/// Serializes a grid: magic "SVOX1", little-endian u32×3 dims, f32×3
/// origin, f32 resolution, then one u8 label per voxel in x-fastest order.
pub fn save_grid(path: &Path, grid: &SemanticVoxelGrid) -> Result<(), EvalError> {
    let mut buf = Vec::with_capacity(33 + grid.labels.len());
    buf.extend_from_slice(GRID_MAGIC);
    for d in [grid.spec.dims.0, grid.spec.dims.1, grid.spec.dims.2] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for c in 0..3 {
        buf.extend_from_slice(&(grid.spec.origin[c] as f32).to_le_bytes());
    }
    buf.extend_from_slice(&(grid.spec.resolution as f32).to_le_bytes());
    buf.extend_from_slice(&grid.labels);
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<SemanticVoxelGrid, EvalError> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 33 || &bytes[..5] != GRID_MAGIC {
        return Err(EvalError::BadFormat);
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let dims = (u32_at(5), u32_at(9), u32_at(13));
    let origin = nalgebra::Vector3::new(f32_at(17), f32_at(21), f32_at(25));
    let resolution = f32_at(29);
    let spec = VoxelGridSpec::new(origin, dims, resolution).map_err(|_| EvalError::BadFormat)?;
    if bytes.len() != 33 + spec.len() {
        return Err(EvalError::BadFormat);
    }
    let labels = bytes[33..].to_vec();
    if labels.iter().any(|&l| l as usize >= NUM_CLASSES) {
        return Err(EvalError::BadFormat);
    }
    Ok(SemanticVoxelGrid { spec, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{GaussianPrimitive, Tag};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec4() -> VoxelGridSpec {
        VoxelGridSpec::new(Vector3::zeros(), (4, 4, 4), 0.5).unwrap()
    }

    fn grid_with(spec: VoxelGridSpec, cells: &[((usize, usize, usize), SemanticClass)]) -> SemanticVoxelGrid {
        let mut g = SemanticVoxelGrid::empty(spec);
        for ((i, j, k), c) in cells {
            let idx = g.spec.linear(*i, *j, *k);
            g.labels[idx] = c.code();
        }
        g
    }

    fn one_hot_primitive(id: u64, pos: Vector3<f64>, class: SemanticClass, scale: f64) -> GaussianPrimitive {
        let mut logits = [0.0; NUM_CLASSES];
        logits[class as usize] = 4.0;
        GaussianPrimitive {
            id,
            position: pos,
            scale,
            logits,
            tag: Tag::New,
            last_confidence: 0.5,
            normal: Vector3::new(0.0, 0.0, 1.0),
        }
    }

    #[test]
    fn decode_empty_pool_is_all_empty() {
        let pool = GaussianPool::new(spec4());
        let grid = decode_pool(&pool, &spec4(), DEFAULT_THETA_OCC);
        assert_eq!(grid.occupied_count(), 0);
    }

    #[test]
    fn decode_single_primitive_labels_its_voxel() {
        let spec = spec4();
        let mut pool = GaussianPool::new(spec);
        pool.primitives.push(one_hot_primitive(0, spec.voxel_center(1, 2, 1), SemanticClass::Wall, spec.resolution));
        let grid = decode_pool(&pool, &spec, DEFAULT_THETA_OCC);
        assert_eq!(grid.label(1, 2, 1), SemanticClass::Wall.code());
    }

    #[test]
    fn decode_matches_brute_force_bitwise() {
        let spec = VoxelGridSpec::new(Vector3::new(-0.1, 0.0, 0.2), (16, 16, 16), 0.1).unwrap();
        let mut pool = GaussianPool::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for id in 0..100 {
            let class = SemanticClass::ALL[rng.gen_range(0..NUM_CLASSES)];
            let pos = Vector3::new(
                rng.gen_range(-0.2..1.6),
                rng.gen_range(-0.1..1.7),
                rng.gen_range(0.1..1.9),
            );
            let scale = rng.gen_range(0.05..0.2);
            pool.primitives.push(one_hot_primitive(id, pos, class, scale));
        }
        let fast = decode_pool(&pool, &spec, DEFAULT_THETA_OCC);
        let brute = decode_pool_brute(&pool, &spec, DEFAULT_THETA_OCC);
        assert_eq!(fast, brute);
    }

    #[test]
    fn decode_is_shift_equivariant() {
        let spec = spec4();
        let mut pool = GaussianPool::new(spec);
        // Dyadic coordinates: translating pool and origin together is then
        // exact in floating point, so labels must match bit-for-bit.
        for id in 0..10 {
            let f = id as f64;
            pool.primitives.push(one_hot_primitive(
                id,
                Vector3::new(0.25 * f, 1.5 - 0.125 * f, 0.75),
                SemanticClass::ALL[(id % 12) as usize],
                0.25,
            ));
        }
        let shift = Vector3::new(3.25, -1.5, 0.125);
        let mut shifted_pool = pool.clone();
        for p in shifted_pool.primitives.iter_mut() {
            p.position += shift;
        }
        let shifted_spec = VoxelGridSpec::new(spec.origin + shift, spec.dims, spec.resolution).unwrap();
        let a = decode_pool(&pool, &spec, DEFAULT_THETA_OCC);
        let b = decode_pool(&shifted_pool, &shifted_spec, DEFAULT_THETA_OCC);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn sc_iou_cases() {
        let spec = spec4();
        let gt = grid_with(spec, &[((0, 0, 0), SemanticClass::Wall), ((1, 0, 0), SemanticClass::Wall)]);
        assert_eq!(sc_iou(&gt, &gt).unwrap(), 1.0);
        let disjoint = grid_with(spec, &[((3, 3, 3), SemanticClass::Floor)]);
        assert_eq!(sc_iou(&disjoint, &gt).unwrap(), 0.0);
        let overlap = grid_with(spec, &[((1, 0, 0), SemanticClass::Floor), ((2, 0, 0), SemanticClass::Floor)]);
        assert_eq!(sc_iou(&overlap, &gt).unwrap(), 1.0 / 3.0);
        // Both empty.
        let empty = SemanticVoxelGrid::empty(spec);
        assert_eq!(sc_iou(&empty, &empty).unwrap(), 1.0);
        // Symmetry.
        assert_eq!(sc_iou(&overlap, &gt).unwrap(), sc_iou(&gt, &overlap).unwrap());
    }

    #[test]
    fn sc_iou_spec_mismatch() {
        let a = SemanticVoxelGrid::empty(spec4());
        let b = SemanticVoxelGrid::empty(VoxelGridSpec::new(Vector3::zeros(), (5, 4, 4), 0.5).unwrap());
        assert!(matches!(sc_iou(&a, &b), Err(EvalError::SpecMismatch)));
    }

    #[test]
    fn miou_identical_grids() {
        let spec = spec4();
        let gt = grid_with(
            spec,
            &[
                ((0, 0, 0), SemanticClass::Wall),
                ((1, 1, 1), SemanticClass::Floor),
                ((2, 2, 2), SemanticClass::Chair),
            ],
        );
        let (per_class, mean) = miou(&gt, &gt).unwrap();
        assert_eq!(mean, Some(1.0));
        assert_eq!(per_class[SemanticClass::Wall as usize - 1], Some(1.0));
        // Absent classes are excluded, not zero.
        assert_eq!(per_class[SemanticClass::Bed as usize - 1], None);
    }

    #[test]
    fn miou_hand_counted() {
        let spec = spec4();
        // GT: 3 wall voxels. Pred: 2 of them wall, 1 floor, plus 1 extra wall.
        let gt = grid_with(
            spec,
            &[
                ((0, 0, 0), SemanticClass::Wall),
                ((1, 0, 0), SemanticClass::Wall),
                ((2, 0, 0), SemanticClass::Wall),
            ],
        );
        let pred = grid_with(
            spec,
            &[
                ((0, 0, 0), SemanticClass::Wall),
                ((1, 0, 0), SemanticClass::Wall),
                ((2, 0, 0), SemanticClass::Floor),
                ((3, 0, 0), SemanticClass::Wall),
            ],
        );
        let (per_class, mean) = miou(&pred, &gt).unwrap();
        // Wall: TP 2, FP 1, FN 1 → 0.5. Floor: TP 0, FP 1, FN 0 → 0.
        assert_eq!(per_class[SemanticClass::Wall as usize - 1], Some(0.5));
        assert_eq!(per_class[SemanticClass::Floor as usize - 1], Some(0.0));
        assert_eq!(mean, Some(0.25));
    }

    #[test]
    fn perfect_sc_iou_does_not_imply_perfect_miou() {
        let spec = spec4();
        let gt = grid_with(spec, &[((1, 1, 1), SemanticClass::Wall)]);
        let pred = grid_with(spec, &[((1, 1, 1), SemanticClass::Chair)]);
        assert_eq!(sc_iou(&pred, &gt).unwrap(), 1.0);
        let (_, mean) = miou(&pred, &gt).unwrap();
        assert_eq!(mean, Some(0.0));
    }

    #[test]
    fn boundary_f1_identity_and_shifts() {
        let spec = VoxelGridSpec::new(Vector3::zeros(), (12, 12, 12), 0.1).unwrap();
        // A 1-voxel-thick slab at k = 5.
        let slab = |k: usize| {
            let mut g = SemanticVoxelGrid::empty(spec);
            for j in 0..12 {
                for i in 0..12 {
                    let idx = g.spec.linear(i, j, k);
                    g.labels[idx] = SemanticClass::Floor.code();
                }
            }
            g
        };
        let gt = slab(5);
        assert_eq!(boundary_f1(&gt, &gt, 1).unwrap(), 1.0);
        assert_eq!(boundary_f1(&slab(6), &gt, 1).unwrap(), 1.0);
        assert_eq!(boundary_f1(&slab(8), &gt, 1).unwrap(), 0.0);
        // Symmetry.
        assert_eq!(boundary_f1(&slab(6), &gt, 1).unwrap(), boundary_f1(&gt, &slab(6), 1).unwrap());
    }

    #[test]
    fn boundary_f1_empty_cases() {
        let spec = spec4();
        let empty = SemanticVoxelGrid::empty(spec);
        let solid = grid_with(spec, &[((1, 1, 1), SemanticClass::Wall)]);
        assert_eq!(boundary_f1(&empty, &empty, 1).unwrap(), 1.0);
        assert_eq!(boundary_f1(&empty, &solid, 1).unwrap(), 0.0);
        assert_eq!(boundary_f1(&solid, &empty, 1).unwrap(), 0.0);
    }

    #[test]
    fn boundary_includes_grid_edge() {
        let spec = spec4();
        // A fully occupied grid: every face voxel is boundary (edge counts
        // as empty), interior voxels are not.
        let mut g = SemanticVoxelGrid::empty(spec);
        g.labels.fill(SemanticClass::Wall.code());
        let mask = boundary_mask(&g);
        assert!(mask[g.spec.linear(0, 0, 0)]);
        assert!(mask[g.spec.linear(3, 2, 1)]);
        assert!(!mask[g.spec.linear(1, 1, 1)]);
        assert!(!mask[g.spec.linear(2, 2, 2)]);
    }

    #[test]
    fn grid_roundtrip_through_svox1() {
        let spec = VoxelGridSpec::new(Vector3::new(0.25, -1.5, 3.0), (6, 5, 4), 0.125).unwrap();
        let mut grid = SemanticVoxelGrid::empty(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in grid.labels.iter_mut() {
            *l = rng.gen_range(0..NUM_CLASSES as u8);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.svox");
        save_grid(&path, &grid).unwrap();
        let loaded = load_grid(&path).unwrap();
        assert_eq!(grid, loaded);
        let path2 = dir.path().join("grid2.svox");
        save_grid(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.svox");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_grid(&path), Err(EvalError::BadFormat)));
    }
}
