//! Temporal fusion and the two-phase training schedule.
//!
//! History and current features combine through one affine recurrent block,
//! `F_fused = W_h·F_hist + W_c·F_curr + b`. Initializing `W_h = 0,
//! W_c = I, b = 0` makes the block an exact identity on the current
//! feature, so a freshly wired temporal stage behaves precisely like the
//! spatial stage it inherits from — no cold-start quality drop.
//!
//! The schedule freezes groups by phase: phase 1 trains only the temporal
//! manager; phase 2 unfreezes the spatial expert at a conservative 0.1×
//! multiplier while the 2D backbone stays at 0×.

use crate::scene::NUM_CLASSES;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("dimension mismatch: weights are {expected}-dim, input is {got}-dim")]
    DimMismatch { expected: usize, got: usize },
    #[error("epoch {0} outside the schedule (1..={1})")]
    EpochOutOfRange(usize, usize),
    #[error("training diverged (non-finite loss) at epoch {0}")]
    Diverged(usize),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Affine recurrent fusion block.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub w_h: DMatrix<f64>,
    pub w_c: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitMode {
    Identity,
    Random { seed: u64, sigma_w: f64 },
}

impl FusionWeights {
    /// Identity initialization: `W_h = 0, W_c = I, b = 0` exactly.
    pub fn identity(c: usize) -> Self {
        Self {
            w_h: DMatrix::zeros(c, c),
            w_c: DMatrix::identity(c, c),
            b: DVector::zeros(c),
        }
    }

    /// Gaussian initialization, deterministic per seed.
    pub fn random(c: usize, seed: u64, sigma_w: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |_: usize, _: usize| {
            // Box-Muller keeps this free of extra distribution deps.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            sigma_w * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let w_h = DMatrix::from_fn(c, c, &mut gauss);
        let w_c = DMatrix::from_fn(c, c, &mut gauss);
        let b = DVector::from_fn(c, |i, _| gauss(i, 0));
        Self { w_h, w_c, b }
    }

    pub fn init(c: usize, mode: InitMode) -> Self {
        match mode {
            InitMode::Identity => Self::identity(c),
            InitMode::Random { seed, sigma_w } => Self::random(c, seed, sigma_w),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `W_h·hist + W_c·curr + b`. Hand-rolled accumulation so the identity
    /// initialization reproduces `curr` bit-for-bit.
    pub fn fuse(&self, hist: &DVector<f64>, curr: &DVector<f64>) -> Result<DVector<f64>, FusionError> {
        let c = self.dim();
        if hist.len() != c || curr.len() != c {
            return Err(FusionError::DimMismatch { expected: c, got: hist.len().max(curr.len()) });
        }
        let mut out = DVector::zeros(c);
        for i in 0..c {
            let mut acc = 0.0f64;
            for j in 0..c {
                acc += self.w_h[(i, j)] * hist[j];
            }
            for j in 0..c {
                acc += self.w_c[(i, j)] * curr[j];
            }
            out[i] = acc + self.b[i];
        }
        Ok(out)
    }

    /// Fixed-size fuse over semantic logit arrays.
    pub fn fuse_fixed(&self, hist: &[f64; NUM_CLASSES], curr: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
        assert_eq!(self.dim(), NUM_CLASSES);
        let out = self
            .fuse(
                &DVector::from_column_slice(hist),
                &DVector::from_column_slice(curr),
            )
            .expect("fixed dims match");
        let mut arr = [0.0; NUM_CLASSES];
        arr.copy_from_slice(out.as_slice());
        arr
    }
}

/// Parameter groups with distinct schedule treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleGroup {
    Backbone,
    SpatialExpert,
    TemporalManager,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupMultipliers {
    pub backbone: f64,
    pub spatial: f64,
    pub temporal: f64,
}

impl GroupMultipliers {
    fn get(&self, group: ModuleGroup) -> f64 {
        match group {
            ModuleGroup::Backbone => self.backbone,
            ModuleGroup::SpatialExpert => self.spatial,
            ModuleGroup::TemporalManager => self.temporal,
        }
    }
}

/// Two-phase schedule with per-group learning-rate multipliers and
/// optional warm-up / cosine modifiers (both off by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSchedule {
    pub total_epochs: usize,
    pub phase1_end: usize,
    pub base_lr: f64,
    pub phase1: GroupMultipliers,
    pub phase2: GroupMultipliers,
    pub warmup_epochs: usize,
    pub cosine_anneal: bool,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            total_epochs: 15,
            phase1_end: 5,
            base_lr: 1e-4,
            phase1: GroupMultipliers { backbone: 0.0, spatial: 0.0, temporal: 1.0 },
            phase2: GroupMultipliers { backbone: 0.0, spatial: 0.1, temporal: 1.0 },
            warmup_epochs: 0,
            cosine_anneal: false,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.phase1_end >= 1 && self.phase1_end < self.total_epochs) {
            return Err(FusionError::InvalidSchedule(format!(
                "need 0 < phase1_end < total_epochs (got {}/{})",
                self.phase1_end, self.total_epochs
            )));
        }
        for m in [&self.phase1, &self.phase2] {
            for v in [m.backbone, m.spatial, m.temporal] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(FusionError::InvalidSchedule(format!(
                        "multiplier {v} outside [0, 1]"
                    )));
                }
            }
        }
        if self.base_lr <= 0.0 {
            return Err(FusionError::InvalidSchedule(format!("base_lr {} <= 0", self.base_lr)));
        }
        Ok(())
    }

    pub fn phase(&self, epoch: usize) -> usize {
        if epoch <= self.phase1_end {
            1
        } else {
            2
        }
    }
}

/// Per-step learning rate for a group at a 1-based epoch:
/// `base_lr × phase multiplier`, times the optional modifiers.
pub fn lr_multiplier(
    group: ModuleGroup,
    epoch: usize,
    sched: &TrainingSchedule,
) -> Result<f64, FusionError> {
    if epoch < 1 || epoch > sched.total_epochs {
        return Err(FusionError::EpochOutOfRange(epoch, sched.total_epochs));
    }
    let mult = if epoch <= sched.phase1_end { sched.phase1.get(group) } else { sched.phase2.get(group) };
    let mut lr = sched.base_lr * mult;
    if sched.warmup_epochs > 0 && epoch <= sched.warmup_epochs {
        lr *= epoch as f64 / sched.warmup_epochs as f64;
    }
    if sched.cosine_anneal && sched.total_epochs > 1 {
        let progress = (epoch - 1) as f64 / (sched.total_epochs - 1) as f64;
        lr *= 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    }
    Ok(lr)
}

/// One supervised example: history feature, raw current feature, oracle
/// target.
#[derive(Debug, Clone)]
pub struct FusionSample {
    pub hist: DVector<f64>,
    pub curr: DVector<f64>,
    pub target: DVector<f64>,
}

/// Synthetic sequence pairs for the toy trainer: targets are one-hot
/// semantics; the current feature is a lightly corrupted target (the
/// trained spatial expert's output), the history a more corrupted one.
pub fn make_toy_dataset(c: usize, n: usize, seed: u64) -> Vec<FusionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let class = rng.gen_range(0..c);
            let mut target = DVector::zeros(c);
            target[class] = 1.0;
            let curr = DVector::from_fn(c, |i, _| target[i] + rng.gen_range(-0.15..0.15));
            let hist = DVector::from_fn(c, |i, _| target[i] + rng.gen_range(-0.4..0.4));
            FusionSample { hist, curr, target }
        })
        .collect()
}

/// Toy model exercising all three schedule groups: a frozen backbone
/// transform, a spatial per-channel scale, and the temporal fusion block.
/// Forward pass: `fuse(hist, spatial ⊙ (backbone · curr))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub backbone: DMatrix<f64>,
    pub spatial: DVector<f64>,
    pub fusion: FusionWeights,
}

impl ToyModel {
    pub fn new(c: usize, init: InitMode) -> Self {
        Self {
            backbone: DMatrix::identity(c, c),
            spatial: DVector::from_element(c, 1.0),
            fusion: FusionWeights::init(c, init),
        }
    }

    pub fn spatial_feature(&self, curr: &DVector<f64>) -> DVector<f64> {
        (&self.backbone * curr).component_mul(&self.spatial)
    }

    pub fn forward(&self, sample: &FusionSample) -> DVector<f64> {
        self.fusion
            .fuse(&sample.hist, &self.spatial_feature(&sample.curr))
            .expect("toy dims are consistent")
    }
}

/// Full-batch mean-squared-error loss and analytic gradients for every
/// parameter group of the toy model.
pub struct ToyGradients {
    pub loss: f64,
    pub d_w_h: DMatrix<f64>,
    pub d_w_c: DMatrix<f64>,
    pub d_b: DVector<f64>,
    pub d_spatial: DVector<f64>,
    pub d_backbone: DMatrix<f64>,
}

pub fn toy_loss_and_grads(model: &ToyModel, data: &[FusionSample]) -> ToyGradients {
    let c = model.fusion.dim();
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut d_w_h = DMatrix::zeros(c, c);
    let mut d_w_c = DMatrix::zeros(c, c);
    let mut d_b = DVector::zeros(c);
    let mut d_spatial = DVector::zeros(c);
    let mut d_backbone = DMatrix::zeros(c, c);
    for s in data {
        let bx = &model.backbone * &s.curr;
        let sx = bx.component_mul(&model.spatial);
        let y = model.fusion.fuse(&s.hist, &sx).expect("dims");
        let err = &y - &s.target;
        loss += err.norm_squared();
        let delta = err * (2.0 / n);
        d_w_h += &delta * s.hist.transpose();
        d_w_c += &delta * sx.transpose();
        d_b += &delta;
        let back = model.fusion.w_c.transpose() * &delta;
        d_spatial += back.component_mul(&bx);
        d_backbone += back.component_mul(&model.spatial) * s.curr.transpose();
    }
    ToyGradients { loss: loss / n, d_w_h, d_w_c, d_b, d_spatial, d_backbone }
}

/// Fraction of samples whose fused argmax matches the target argmax.
pub fn proxy_quality(model: &ToyModel, data: &[FusionSample]) -> f64 {
    let argmax = |v: &DVector<f64>| {
        v.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        }).0
    };
    let hits = data
        .iter()
        .filter(|s| argmax(&model.forward(s)) == argmax(&s.target))
        .count();
    hits as f64 / data.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossPoint {
    /// 0 = initial state, e = after epoch e.
    pub epoch: usize,
    pub phase: usize,
    pub loss: f64,
    pub proxy_quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
    pub model: ToyModel,
}

impl LossCurve {
    pub fn initial_loss(&self) -> f64 {
        self.points[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.points.last().unwrap().loss
    }
}

/// Trains the toy model with full-batch gradient descent under the
/// two-phase schedule, `steps_per_epoch` steps per epoch. Group learning
/// rates come from [`lr_multiplier`]; a zero rate leaves the group's
/// parameters bit-identical.
pub fn train_fusion_toy(
    data: &[FusionSample],
    init: InitMode,
    sched: &TrainingSchedule,
    steps_per_epoch: usize,
) -> Result<LossCurve, FusionError> {
    assert!(!data.is_empty(), "toy trainer needs a nonempty dataset");
    sched.validate()?;
    let c = data[0].target.len();
    let mut model = ToyModel::new(c, init);
    let mut points = Vec::with_capacity(sched.total_epochs + 1);
    let g0 = toy_loss_and_grads(&model, data);
    points.push(LossPoint { epoch: 0, phase: 1, loss: g0.loss, proxy_quality: proxy_quality(&model, data) });

    for epoch in 1..=sched.total_epochs {
        let lr_backbone = lr_multiplier(ModuleGroup::Backbone, epoch, sched)?;
        let lr_spatial = lr_multiplier(ModuleGroup::SpatialExpert, epoch, sched)?;
        let lr_temporal = lr_multiplier(ModuleGroup::TemporalManager, epoch, sched)?;
        for _ in 0..steps_per_epoch {
            let g = toy_loss_and_grads(&model, data);
            if !g.loss.is_finite() {
                return Err(FusionError::Diverged(epoch));
            }
            if lr_temporal != 0.0 {
                model.fusion.w_h -= &g.d_w_h * lr_temporal;
                model.fusion.w_c -= &g.d_w_c * lr_temporal;
                model.fusion.b -= &g.d_b * lr_temporal;
            }
            if lr_spatial != 0.0 {
                model.spatial -= &g.d_spatial * lr_spatial;
            }
            if lr_backbone != 0.0 {
                model.backbone -= &g.d_backbone * lr_backbone;
            }
        }
        let g = toy_loss_and_grads(&model, data);
        if !g.loss.is_finite() {
            return Err(FusionError::Diverged(epoch));
        }
        points.push(LossPoint {
            epoch,
            phase: sched.phase(epoch),
            loss: g.loss,
            proxy_quality: proxy_quality(&model, data),
        });
    }
    Ok(LossCurve { points, model })
}

/// Which analytic gradient a check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradCheckOp {
    Gate,
    Grm,
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub op: GradCheckOp,
    pub trials: usize,
    pub max_rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compares an analytic gradient against central finite differences over
/// random configurations; passes iff the worst relative error is within
/// `tol`.
pub fn check_gradients(op: GradCheckOp, trials: usize, h: f64, tol: f64) -> GradCheckReport {
    assert!(h > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ op as u64);
    let rel = |analytic: f64, fd: f64| {
        let denom = analytic.abs().max(fd.abs()).max(1e-6);
        (analytic - fd).abs() / denom
    };
    let mut max_rel: f64 = 0.0;

    match op {
        GradCheckOp::Gate => {
            use crate::lifter::{gate_gradients, gaussian_gate, GateParams};
            for _ in 0..trials {
                let g = GateParams { alpha: rng.gen_range(0.1..3.0), sigma: rng.gen_range(0.1..2.0) };
                let d_proj = rng.gen_range(0.5..8.0);
                // Residuals in ±[0.3σ, 3σ]: away from the derivative zeros
                // and inside the numerically well-conditioned band.
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let d_pred = d_proj + sign * rng.gen_range(0.3..3.0) * g.sigma;
                let an = gate_gradients(d_proj, d_pred, &g);
                let fd_a = (gaussian_gate(d_proj, d_pred, &GateParams { alpha: g.alpha + h, ..g })
                    - gaussian_gate(d_proj, d_pred, &GateParams { alpha: g.alpha - h, ..g }))
                    / (2.0 * h);
                let fd_s = (gaussian_gate(d_proj, d_pred, &GateParams { sigma: g.sigma + h, ..g })
                    - gaussian_gate(d_proj, d_pred, &GateParams { sigma: g.sigma - h, ..g }))
                    / (2.0 * h);
                let fd_d = (gaussian_gate(d_proj, d_pred + h, &g) - gaussian_gate(d_proj, d_pred - h, &g))
                    / (2.0 * h);
                max_rel = max_rel
                    .max(rel(an.d_alpha, fd_a))
                    .max(rel(an.d_sigma, fd_s))
                    .max(rel(an.d_pred, fd_d));
            }
        }
        GradCheckOp::Grm => {
            use crate::refiner::{build_adjacency, grm_loss, GrmAnchor, GrmStrategy};
            use crate::scene::SemanticClass;
            use nalgebra::Vector3;
            for _ in 0..trials {
                let anchors: Vec<GrmAnchor> = (0..6)
                    .map(|i| {
                        let n = Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(0.2..1.0),
                        )
                        .normalize();
                        GrmAnchor {
                            position: Vector3::new(
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(-1.0..1.0),
                            ),
                            class: if i % 2 == 0 { SemanticClass::Wall } else { SemanticClass::Table },
                            normal: n,
                        }
                    })
                    .collect();
                let pairs = build_adjacency(&anchors, 3.0);
                let strategy = GrmStrategy::default();
                let (_, grads) = grm_loss(&anchors, &pairs, &strategy).unwrap();
                for i in 0..anchors.len() {
                    for axis in 0..3 {
                        let mut plus = anchors.clone();
                        plus[i].position[axis] += h;
                        let mut minus = anchors.clone();
                        minus[i].position[axis] -= h;
                        let (lp, _) = grm_loss(&plus, &pairs, &strategy).unwrap();
                        let (lm, _) = grm_loss(&minus, &pairs, &strategy).unwrap();
                        max_rel = max_rel.max(rel(grads[i][axis], (lp - lm) / (2.0 * h)));
                    }
                }
            }
        }
        GradCheckOp::Fusion => {
            for t in 0..trials {
                let c = 4;
                let data = make_toy_dataset(c, 8, t as u64);
                let mut model = ToyModel::new(c, InitMode::Random { seed: t as u64, sigma_w: 0.3 });
                model.spatial = DVector::from_fn(c, |_, _| rng.gen_range(0.5..1.5));
                let g = toy_loss_and_grads(&model, &data);
                let loss_of = |m: &ToyModel| toy_loss_and_grads(m, &data).loss;
                for i in 0..c {
                    for j in 0..c {
                        for (which, analytic) in
                            [(0, g.d_w_h[(i, j)]), (1, g.d_w_c[(i, j)])]
                        {
                            let mut mp = model.clone();
                            let mut mm = model.clone();
                            if which == 0 {
                                mp.fusion.w_h[(i, j)] += h;
                                mm.fusion.w_h[(i, j)] -= h;
                            } else {
                                mp.fusion.w_c[(i, j)] += h;
                                mm.fusion.w_c[(i, j)] -= h;
                            }
                            let fd = (loss_of(&mp) - loss_of(&mm)) / (2.0 * h);
                            max_rel = max_rel.max(rel(analytic, fd));
                        }
                    }
                    let mut mp = model.clone();
                    let mut mm = model.clone();
                    mp.fusion.b[i] += h;
                    mm.fusion.b[i] -= h;
                    let fd = (loss_of(&mp) - loss_of(&mm)) / (2.0 * h);
                    max_rel = max_rel.max(rel(g.d_b[i], fd));
                }
            }
        }
    }

    GradCheckReport { op, trials, max_rel_err: max_rel, tol, pass: max_rel <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_init_exact_shape() {
        let w = FusionWeights::identity(3);
        assert_eq!(w.w_c, DMatrix::identity(3, 3));
        assert_eq!(w.w_h, DMatrix::zeros(3, 3));
        assert_eq!(w.b, DVector::zeros(3));
    }

    #[test]
    fn identity_fuse_is_bitwise_current() {
        let w = FusionWeights::identity(12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let hist = DVector::from_fn(12, |_, _| rng.gen_range(-5.0..5.0));
            let curr = DVector::from_fn(12, |_, _| rng.gen_range(-5.0..5.0));
            let fused = w.fuse(&hist, &curr).unwrap();
            for (f, c) in fused.iter().zip(curr.iter()) {
                assert_eq!(f.to_bits(), c.to_bits());
            }
        }
    }

    #[test]
    fn fuse_history_and_blend() {
        let mut w = FusionWeights::identity(2);
        std::mem::swap(&mut w.w_h, &mut w.w_c); // W_h = I, W_c = 0
        let hist = DVector::from_column_slice(&[3.0, -1.0]);
        let curr = DVector::from_column_slice(&[9.0, 9.0]);
        assert_eq!(w.fuse(&hist, &curr).unwrap(), hist);

        let blend = FusionWeights {
            w_h: DMatrix::identity(2, 2) * 0.5,
            w_c: DMatrix::identity(2, 2) * 0.5,
            b: DVector::zeros(2),
        };
        let out = blend
            .fuse(
                &DVector::from_column_slice(&[2.0, 0.0]),
                &DVector::from_column_slice(&[0.0, 2.0]),
            )
            .unwrap();
        assert_eq!(out, DVector::from_column_slice(&[1.0, 1.0]));
    }

    #[test]
    fn fuse_rejects_dim_mismatch() {
        let w = FusionWeights::identity(3);
        let err = w.fuse(&DVector::zeros(2), &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, FusionError::DimMismatch { .. }));
    }

    #[test]
    fn random_init_is_deterministic() {
        let a = FusionWeights::random(5, 7, 0.5);
        let b = FusionWeights::random(5, 7, 0.5);
        assert_eq!(a, b);
        assert_ne!(a, FusionWeights::random(5, 8, 0.5));
    }

    #[test]
    fn lr_schedule_paper_values() {
        let sched = TrainingSchedule::default();
        assert_eq!(lr_multiplier(ModuleGroup::SpatialExpert, 3, &sched).unwrap(), 0.0);
        assert_abs_diff_eq!(lr_multiplier(ModuleGroup::SpatialExpert, 8, &sched).unwrap(), 1e-5, epsilon = 1e-20);
        assert_abs_diff_eq!(lr_multiplier(ModuleGroup::TemporalManager, 8, &sched).unwrap(), 1e-4, epsilon = 1e-20);
        assert_eq!(lr_multiplier(ModuleGroup::Backbone, 8, &sched).unwrap(), 0.0);
        assert!(matches!(
            lr_multiplier(ModuleGroup::Backbone, 16, &sched),
            Err(FusionError::EpochOutOfRange(16, 15))
        ));
    }

    #[test]
    fn phase_boundary_is_a_step() {
        let sched = TrainingSchedule::default();
        let at_end = lr_multiplier(ModuleGroup::SpatialExpert, sched.phase1_end, &sched).unwrap();
        let after = lr_multiplier(ModuleGroup::SpatialExpert, sched.phase1_end + 1, &sched).unwrap();
        assert_eq!(at_end, 0.0);
        assert_abs_diff_eq!(after, 0.1 * sched.base_lr, epsilon = 1e-20);
    }

    #[test]
    fn identity_step0_loss_equals_spatial_expert() {
        let data = make_toy_dataset(12, 64, 3);
        let sched = TrainingSchedule { total_epochs: 2, phase1_end: 1, ..Default::default() };
        let curve = train_fusion_toy(&data, InitMode::Identity, &sched, 1).unwrap();
        // The frozen spatial expert predicts spatial_feature(curr) = curr.
        let direct: f64 = data.iter().map(|s| (&s.curr - &s.target).norm_squared()).sum::<f64>()
            / data.len() as f64;
        assert_eq!(curve.initial_loss().to_bits(), direct.to_bits());
    }

    #[test]
    fn random_init_starts_worse_than_identity() {
        let data = make_toy_dataset(12, 128, 5);
        let sched = TrainingSchedule { total_epochs: 2, phase1_end: 1, ..Default::default() };
        let ident = train_fusion_toy(&data, InitMode::Identity, &sched, 0).unwrap();
        for seed in 0..5 {
            let rand = train_fusion_toy(&data, InitMode::Random { seed, sigma_w: 0.5 }, &sched, 0).unwrap();
            assert!(
                rand.initial_loss() > ident.initial_loss(),
                "seed {seed}: random {:.4} vs identity {:.4}",
                rand.initial_loss(),
                ident.initial_loss()
            );
        }
    }

    #[test]
    fn toy_training_loss_non_increasing() {
        let data = make_toy_dataset(8, 64, 11);
        let sched = TrainingSchedule {
            total_epochs: 15,
            phase1_end: 5,
            base_lr: 1e-3,
            ..Default::default()
        };
        let curve = train_fusion_toy(&data, InitMode::Identity, &sched, 10).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-15, "{} -> {}", w[0].loss, w[1].loss);
        }
    }

    #[test]
    fn frozen_groups_stay_bit_identical() {
        let data = make_toy_dataset(6, 32, 2);
        let sched = TrainingSchedule::default();
        let curve = train_fusion_toy(&data, InitMode::Identity, &sched, 5).unwrap();
        // Backbone multiplier is 0 in both phases.
        assert_eq!(curve.model.backbone, DMatrix::identity(6, 6));

        // Run phase 1 only: spatial must be untouched.
        let p1 = TrainingSchedule { total_epochs: 6, phase1_end: 5, ..Default::default() };
        let c1 = train_fusion_toy(&data, InitMode::Identity, &p1, 5).unwrap();
        let _ = c1;
        let p1_only = TrainingSchedule { total_epochs: 6, phase1_end: 5, phase2: p1.phase1, ..Default::default() };
        let c2 = train_fusion_toy(&data, InitMode::Identity, &p1_only, 5).unwrap();
        assert_eq!(c2.model.spatial, DVector::from_element(6, 1.0));
    }

    #[test]
    fn convex_descent_below_lipschitz_rate() {
        // Quadratic objective: with lr < 1/L (L = largest Gram eigenvalue
        // over the stacked inputs), full-batch GD strictly decreases until
        // numerically at the optimum.
        let data = make_toy_dataset(4, 32, 9);
        let c = 4;
        // Gram matrix of the joint regressor z = [hist; spatial(curr); 1].
        let dim = 2 * c + 1;
        let mut gram = DMatrix::zeros(dim, dim);
        for s in &data {
            let mut z = DVector::zeros(dim);
            for i in 0..c {
                z[i] = s.hist[i];
                z[c + i] = s.curr[i];
            }
            z[2 * c] = 1.0;
            gram += &z * z.transpose();
        }
        gram *= 2.0 / data.len() as f64;
        let l_max = gram
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let lr = 0.9 / l_max;
        let sched = TrainingSchedule {
            total_epochs: 2,
            phase1_end: 1,
            base_lr: lr,
            ..Default::default()
        };
        let curve = train_fusion_toy(&data, InitMode::Random { seed: 1, sigma_w: 0.4 }, &sched, 400).unwrap();
        assert!(curve.final_loss() < curve.initial_loss());
        for w in curve.points.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = make_toy_dataset(4, 16, 1);
        let sched = TrainingSchedule {
            total_epochs: 5,
            phase1_end: 1,
            base_lr: 1.0, // far above 1/L
            ..Default::default()
        };
        let result = train_fusion_toy(&data, InitMode::Random { seed: 0, sigma_w: 1.0 }, &sched, 200);
        assert!(matches!(result, Err(FusionError::Diverged(_))));
    }

    #[test]
    fn gradcheck_all_ops_pass() {
        let gate = check_gradients(GradCheckOp::Gate, 200, 1e-5, 1e-5);
        assert!(gate.pass, "gate max rel err {}", gate.max_rel_err);
        let grm = check_gradients(GradCheckOp::Grm, 20, 1e-5, 1e-4);
        assert!(grm.pass, "grm max rel err {}", grm.max_rel_err);
        let fusion = check_gradients(GradCheckOp::Fusion, 5, 1e-5, 1e-6);
        assert!(fusion.pass, "fusion max rel err {}", fusion.max_rel_err);
    }

    #[test]
    fn warmup_and_cosine_shapes() {
        let sched = TrainingSchedule {
            warmup_epochs: 3,
            cosine_anneal: true,
            ..Default::default()
        };
        // Warm-up ramps up over the first epochs.
        let l1 = lr_multiplier(ModuleGroup::TemporalManager, 1, &sched).unwrap();
        let l2 = lr_multiplier(ModuleGroup::TemporalManager, 2, &sched).unwrap();
        assert!(l1 < l2);
        // Cosine decays to zero at the final epoch.
        let last = lr_multiplier(ModuleGroup::TemporalManager, 15, &sched).unwrap();
        assert_abs_diff_eq!(last, 0.0, epsilon = 1e-18);
    }
}
