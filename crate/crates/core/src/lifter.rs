//! 2D→3D feature lifting with depth-gated deformable sampling.
//!
//! A 3D query projects to a reference pixel; K offset taps sample the 2D
//! feature map around it, and each tap is weighted by attention and by a
//! Gaussian gate on the gap between the query's projected depth and the
//! depth observed at the tap:
//!
//! ```text
//! F3D(q) = Σ_k A_k · G(d_proj, d_k) · F2D(p_ref + Δp_k)
//! G(a, b) = α · exp(-(a - b)² / (2σ²))
//! ```
//!
//! Four lifting modes share this code path: plain hard projection (one
//! ungated tap), deformable aggregation without a gate, a binary
//! hard-threshold gate, and the full soft gate.

use crate::geometry::{project_point, CameraIntrinsics, GeometryError, Pose};
use crate::scene::{bilinear, DepthFrame, NUM_CLASSES};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest tolerance the gate may be clamped to during fitting.
pub const SIGMA_MIN: f64 = 1e-3;

/// Channel count of the deterministic per-pixel feature: one-hot class
/// plus normalized (u, v, depth).
pub const FEATURE_CHANNELS: usize = NUM_CLASSES + 3;

#[derive(Debug, Error, PartialEq)]
pub enum LiftError {
    #[error("grid pattern requires a perfect-square K (got {0})")]
    BadPattern(usize),
    #[error("sample attention must sum to 1 (got {0})")]
    BadAttention(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Learnable gate parameters: scale `alpha` and depth tolerance `sigma`
/// (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub alpha: f64,
    pub sigma: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        Self { alpha: 1.0, sigma: 0.5 }
    }
}

impl GateParams {
    /// Clamps parameters into their legal region after an optimizer step.
    pub fn clamped(self) -> Self {
        Self { alpha: self.alpha.max(0.0), sigma: self.sigma.max(SIGMA_MIN) }
    }
}

/// Gaussian depth gate weight, in `[0, alpha]`.
pub fn gaussian_gate(d_proj: f64, d_pred: f64, g: &GateParams) -> f64 {
    let r = d_proj - d_pred;
    g.alpha * (-(r * r) / (2.0 * g.sigma * g.sigma)).exp()
}

/// Analytic partial derivatives of [`gaussian_gate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateGradients {
    pub d_alpha: f64,
    pub d_sigma: f64,
    pub d_pred: f64,
}

pub fn gate_gradients(d_proj: f64, d_pred: f64, g: &GateParams) -> GateGradients {
    let r = d_proj - d_pred;
    let s2 = g.sigma * g.sigma;
    let kernel = (-(r * r) / (2.0 * s2)).exp();
    let gate = g.alpha * kernel;
    GateGradients {
        d_alpha: kernel,
        d_sigma: gate * r * r / (s2 * g.sigma),
        d_pred: gate * r / s2,
    }
}

/// Table of lifting variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LiftMode {
    /// Single ungated tap at the reference pixel.
    HardProjection,
    /// Deformable taps, no depth constraint.
    DeformableNoGate,
    /// Binary gate: keep the tap iff the normalized kernel is >= tau.
    HardThreshold { tau: f64 },
    /// Full Gaussian gate.
    SoftGating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPattern {
    Grid,
    Ring,
}

/// Deterministic offset pattern, symmetric about zero: a √K×√K lattice or
/// K points evenly spaced on a circle. K = 1 is the single zero offset.
pub fn gen_offsets(k: usize, pattern: OffsetPattern, radius: f64) -> Result<Vec<[f64; 2]>, LiftError> {
    assert!(k >= 1 && radius > 0.0);
    if k == 1 {
        return Ok(vec![[0.0, 0.0]]);
    }
    match pattern {
        OffsetPattern::Grid => {
            let side = (k as f64).sqrt().round() as usize;
            if side * side != k {
                return Err(LiftError::BadPattern(k));
            }
            let mut offsets = Vec::with_capacity(k);
            for iy in 0..side {
                for ix in 0..side {
                    let fx = -radius + 2.0 * radius * ix as f64 / (side - 1) as f64;
                    let fy = -radius + 2.0 * radius * iy as f64 / (side - 1) as f64;
                    offsets.push([fx, fy]);
                }
            }
            Ok(offsets)
        }
        OffsetPattern::Ring => {
            let mut offsets = Vec::with_capacity(k);
            for i in 0..k {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                offsets.push([radius * theta.cos(), radius * theta.sin()]);
            }
            Ok(offsets)
        }
    }
}

/// Dense per-pixel feature map, channel-fastest layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    /// Deterministic stand-in for a learned image feature: one-hot class
    /// per pixel plus normalized (u, v, depth) context channels. Pixels
    /// with no surface carry the one-hot `Empty` channel.
    pub fn from_frame(frame: &DepthFrame) -> Self {
        let mut map = Self::zeros(frame.width, frame.height, FEATURE_CHANNELS);
        let du = (frame.width - 1).max(1) as f64;
        let dv = (frame.height - 1).max(1) as f64;
        for y in 0..frame.height {
            for x in 0..frame.width {
                let base = (y * frame.width + x) * FEATURE_CHANNELS;
                map.data[base + frame.class_at(x, y) as usize] = 1.0;
                map.data[base + NUM_CLASSES] = x as f64 / du;
                map.data[base + NUM_CLASSES + 1] = y as f64 / dv;
                let d = frame.at(x, y);
                map.data[base + NUM_CLASSES + 2] = if d.is_finite() { (d / 10.0).min(1.0) } else { 1.0 };
            }
        }
        map
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Bilinear feature vector at continuous pixel coordinates, or `None`
    /// outside the sampling domain.
    pub fn sample(&self, u: f64, v: f64) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            out.push(bilinear(self.width, self.height, u, v, |x, y| self.at(x, y, c))?);
        }
        Some(out)
    }
}

/// Sampling configuration: tap count, pattern, and optional externally
/// supplied offsets/attention (defaults: deterministic pattern, uniform
/// attention 1/K).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub k: usize,
    pub pattern: OffsetPattern,
    pub radius: f64,
    pub offsets: Option<Vec<[f64; 2]>>,
    pub attention: Option<Vec<f64>>,
}

impl SampleConfig {
    pub fn new(k: usize, pattern: OffsetPattern, radius: f64) -> Self {
        Self { k, pattern, radius, offsets: None, attention: None }
    }

    fn resolve(&self) -> Result<(Vec<[f64; 2]>, Vec<f64>), LiftError> {
        let offsets = match &self.offsets {
            Some(o) => o.clone(),
            None => gen_offsets(self.k, self.pattern, self.radius)?,
        };
        let attention = match &self.attention {
            Some(a) => {
                let sum: f64 = a.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(LiftError::BadAttention(sum));
                }
                a.clone()
            }
            None => vec![1.0 / offsets.len() as f64; offsets.len()],
        };
        Ok((offsets, attention))
    }
}

/// One resolved tap of a lift: its offset, attention, sampled depth and
/// feature, and the final combination weight used.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub offset: [f64; 2],
    pub attention: f64,
    pub depth: f64,
    pub feature: Vec<f64>,
    pub weight: f64,
    pub in_image: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub p_ref: (f64, f64),
    pub d_proj: f64,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    /// Total in-image combination weight Σ A_k·G_k (the lift's evidence
    /// mass; equals 1 for an ungated on-surface query with α = 1).
    pub fn gate_mass(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }
}

/// Resolves the taps for a query point under a given mode. Out-of-image
/// taps carry zero feature and zero weight.
pub fn lift_samples(
    q: &Vector3<f64>,
    features: &FeatureMap,
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    gate: &GateParams,
    mode: LiftMode,
    cfg: &SampleConfig,
) -> Result<SampleSet, LiftError> {
    let (u, v, d_proj) = project_point(intr, pose, q)?;
    let (offsets, attention) = match mode {
        LiftMode::HardProjection => (vec![[0.0, 0.0]], vec![1.0]),
        _ => cfg.resolve()?,
    };

    let mut samples = Vec::with_capacity(offsets.len());
    for (off, att) in offsets.iter().zip(attention.iter()) {
        let (su, sv) = (u + off[0], v + off[1]);
        let (feature, sampled_depth, in_image) = match features.sample(su, sv) {
            Some(f) => {
                let d = depth.sample_depth(su, sv).unwrap_or(f64::INFINITY);
                (f, d, true)
            }
            None => (vec![0.0; features.channels], f64::INFINITY, false),
        };
        let weight = if !in_image {
            0.0
        } else {
            match mode {
                LiftMode::HardProjection | LiftMode::DeformableNoGate => *att,
                LiftMode::SoftGating => att * gaussian_gate(d_proj, sampled_depth, gate),
                LiftMode::HardThreshold { tau } => {
                    // Normalized kernel, independent of alpha.
                    let r = d_proj - sampled_depth;
                    let kernel = (-(r * r) / (2.0 * gate.sigma * gate.sigma)).exp();
                    if kernel >= tau {
                        *att
                    } else {
                        0.0
                    }
                }
            }
        };
        samples.push(Sample {
            offset: *off,
            attention: *att,
            depth: sampled_depth,
            feature,
            weight,
            in_image,
        });
    }
    Ok(SampleSet { p_ref: (u, v), d_proj, samples })
}

/// Lifts a 3D query into a feature vector (the weighted tap combination).
/// With `normalize` the sum is divided by the total weight plus 1e-8.
pub fn lift_feature(
    q: &Vector3<f64>,
    features: &FeatureMap,
    depth: &DepthFrame,
    intr: &CameraIntrinsics,
    pose: &Pose,
    gate: &GateParams,
    mode: LiftMode,
    cfg: &SampleConfig,
    normalize: bool,
) -> Result<Vec<f64>, LiftError> {
    let set = lift_samples(q, features, depth, intr, pose, gate, mode, cfg)?;
    Ok(combine_samples(&set, features.channels, normalize))
}

/// Folds a resolved sample set into the output feature vector.
pub fn combine_samples(set: &SampleSet, channels: usize, normalize: bool) -> Vec<f64> {
    let mut out = vec![0.0; channels];
    for s in &set.samples {
        if s.weight == 0.0 {
            continue;
        }
        for (o, f) in out.iter_mut().zip(s.feature.iter()) {
            *o += s.weight * f;
        }
    }
    if normalize {
        let denom = set.gate_mass() + 1e-8;
        for o in out.iter_mut() {
            *o /= denom;
        }
    }
    out
}
