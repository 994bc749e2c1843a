//! Gaussian primitives and the blend-shape avatar.
//!
//! An avatar is a base [`PrimitiveSet`] plus `K` additive delta sets. One
//! animation frame is produced by weighting the deltas with an expression
//! vector `psi` and adding them onto the base, then applying the rigid head
//! pose.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// Tolerance on quaternion norms accepted as "unit".
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Blended quaternions shorter than this cannot be normalized.
pub const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AvatarError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("blended rotation of primitive {index} has norm {norm:e}")]
    DegenerateRotation { index: usize, norm: f64 },
    #[error("expression weight {index} is not finite")]
    NonFiniteWeight { index: usize },
    #[error("pose rotation is not a unit quaternion (norm {norm})")]
    NonUnitPose { norm: f64 },
}

/// A single renderable 3D Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrimitive {
    pub position: [f32; 3],
    /// Unit quaternion, `(w, x, y, z)`.
    pub rotation: [f32; 4],
    /// Natural log of the per-axis standard deviation.
    pub log_scale: [f32; 3],
    pub opacity: f32,
    pub color: [f32; 3],
}

impl GaussianPrimitive {
    pub fn scale(&self) -> [f32; 3] {
        self.log_scale.map(f32::exp)
    }
}

/// Structure-of-arrays storage for `N` primitives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrimitiveSet {
    pub positions: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
    pub log_scales: Vec<[f32; 3]>,
    pub opacities: Vec<f32>,
    pub colors: Vec<[f32; 3]>,
}

impl PrimitiveSet {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            opacities: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    /// Primitive count. Uses the position array; see [`PrimitiveSet::is_consistent`].
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// True when every field array has the same length.
    pub fn is_consistent(&self) -> bool {
        let n = self.positions.len();
        self.rotations.len() == n
            && self.log_scales.len() == n
            && self.opacities.len() == n
            && self.colors.len() == n
    }

    pub fn push(&mut self, p: GaussianPrimitive) {
        self.positions.push(p.position);
        self.rotations.push(p.rotation);
        self.log_scales.push(p.log_scale);
        self.opacities.push(p.opacity);
        self.colors.push(p.color);
    }

    pub fn get(&self, i: usize) -> GaussianPrimitive {
        GaussianPrimitive {
            position: self.positions[i],
            rotation: self.rotations[i],
            log_scale: self.log_scales[i],
            opacity: self.opacities[i],
            color: self.colors[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = GaussianPrimitive> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

impl FromIterator<GaussianPrimitive> for PrimitiveSet {
    fn from_iter<T: IntoIterator<Item = GaussianPrimitive>>(iter: T) -> Self {
        let mut set = PrimitiveSet::default();
        for p in iter {
            set.push(p);
        }
        set
    }
}

/// Per-primitive additive offsets for one blend shape.
///
/// Rotation offsets are raw quaternion offsets and need not be unit length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeltaSet {
    pub positions: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
    pub log_scales: Vec<[f32; 3]>,
    pub opacities: Vec<f32>,
    pub colors: Vec<[f32; 3]>,
}

impl DeltaSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            log_scales: vec![[0.0; 3]; n],
            opacities: vec![0.0; n],
            colors: vec![[0.0; 3]; n],
        }
    }

    fn field_lengths(&self) -> [(&'static str, usize); 5] {
        [
            ("position", self.positions.len()),
            ("rotation", self.rotations.len()),
            ("log_scale", self.log_scales.len()),
            ("opacity", self.opacities.len()),
            ("color", self.colors.len()),
        ]
    }
}

/// Base primitives plus `K` relative blend shapes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlendShapeAvatar {
    pub base: PrimitiveSet,
    pub deltas: Vec<DeltaSet>,
    pub names: Vec<String>,
}

impl BlendShapeAvatar {
    /// Number of blend shapes, i.e. the accepted expression length.
    pub fn k(&self) -> usize {
        self.deltas.len()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }
}

/// One animation frame: blend weights plus head pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionFrame {
    pub psi: Vec<f32>,
    pub head_rotation: [f32; 4],
    pub head_translation: [f32; 3],
    pub timestamp: f64,
}

impl ExpressionFrame {
    pub fn neutral(k: usize) -> Self {
        Self {
            psi: vec![0.0; k],
            head_rotation: [1.0, 0.0, 0.0, 0.0],
            head_translation: [0.0; 3],
            timestamp: 0.0,
        }
    }
}

fn quat_norm(q: &[f32; 4]) -> f64 {
    q.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt()
}

/// Linear blend of the avatar's shapes for weights `psi`.
///
/// Position, log-scale and color are `base + sum(psi[k] * delta_k)`. Opacity
/// is blended the same way and clamped to `[0, 1]`. Rotations are blended as
/// raw quaternion offsets and renormalized. Zero weights contribute nothing,
/// so `blend(0)` reproduces the base bit-for-bit.
pub fn blend(avatar: &BlendShapeAvatar, psi: &[f32]) -> Result<PrimitiveSet, AvatarError> {
    if psi.len() != avatar.k() {
        return Err(AvatarError::DimensionMismatch {
            expected: avatar.k(),
            actual: psi.len(),
        });
    }
    if let Some(index) = psi.iter().position(|w| !w.is_finite()) {
        return Err(AvatarError::NonFiniteWeight { index });
    }

    let mut out = avatar.base.clone();
    let active: Vec<(f64, &DeltaSet)> = psi
        .iter()
        .zip(&avatar.deltas)
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, d)| (f64::from(*w), d))
        .collect();
    if active.is_empty() {
        return Ok(out);
    }

    // Accumulate in f64 and round once. For a single unit weight this gives
    // exactly the f32 sum base + delta.
    let widen = |v: [f32; 3]| v.map(f64::from);
    let narrow = |v: [f64; 3]| v.map(|c| c as f32);
    for i in 0..out.len() {
        let mut pos = widen(out.positions[i]);
        let mut scale = widen(out.log_scales[i]);
        let mut color = widen(out.colors[i]);
        let mut rot = out.rotations[i].map(f64::from);
        let mut opacity = f64::from(out.opacities[i]);
        for &(w, d) in &active {
            for a in 0..3 {
                pos[a] += w * f64::from(d.positions[i][a]);
                scale[a] += w * f64::from(d.log_scales[i][a]);
                color[a] += w * f64::from(d.colors[i][a]);
            }
            for (r, dr) in rot.iter_mut().zip(d.rotations[i]) {
                *r += w * f64::from(dr);
            }
            opacity += w * f64::from(d.opacities[i]);
        }
        out.positions[i] = narrow(pos);
        out.log_scales[i] = narrow(scale);
        out.colors[i] = narrow(color);
        out.opacities[i] = (opacity as f32).clamp(0.0, 1.0);
        let norm = rot.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm >= DEGENERATE_NORM) {
            return Err(AvatarError::DegenerateRotation { index: i, norm });
        }
        out.rotations[i] = rot.map(|c| (c / norm) as f32);
    }
    Ok(out)
}

pub(crate) fn to_unit_quaternion(q: [f32; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(Quaternion::new(
        f64::from(q[0]),
        f64::from(q[1]),
        f64::from(q[2]),
        f64::from(q[3]),
    ))
}

/// Rigidly transforms a primitive set: `p' = R p + t`, `q' = q_pose * q`.
pub fn apply_pose(
    set: &PrimitiveSet,
    rotation: [f32; 4],
    translation: [f32; 3],
) -> Result<PrimitiveSet, AvatarError> {
    let norm = quat_norm(&rotation);
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(AvatarError::NonUnitPose { norm });
    }
    if rotation == [1.0, 0.0, 0.0, 0.0] && translation == [0.0; 3] {
        return Ok(set.clone());
    }
    let pose = to_unit_quaternion(rotation);
    let t = Vector3::new(
        f64::from(translation[0]),
        f64::from(translation[1]),
        f64::from(translation[2]),
    );

    let mut out = set.clone();
    for (p, q) in out.positions.iter_mut().zip(out.rotations.iter_mut()) {
        let v = Vector3::new(f64::from(p[0]), f64::from(p[1]), f64::from(p[2]));
        let moved = pose * v + t;
        *p = [moved.x as f32, moved.y as f32, moved.z as f32];

        let composed = pose * to_unit_quaternion(*q);
        let c = composed.into_inner();
        *q = [c.w as f32, c.i as f32, c.j as f32, c.k as f32];
    }
    Ok(out)
}

/// One broken invariant found by [`validate_avatar`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch {
        field: String,
        expected: usize,
        actual: usize,
    },
    RangeViolation {
        field: String,
        index: usize,
        value: f64,
    },
    NonUnitRotation {
        index: usize,
        norm: f64,
    },
    NonFinite {
        field: String,
        index: usize,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DimensionMismatch {
                field,
                expected,
                actual,
            } => write!(f, "{field}: expected length {expected}, got {actual}"),
            Violation::RangeViolation {
                field,
                index,
                value,
            } => write!(f, "{field}[{index}] = {value} is out of range"),
            Violation::NonUnitRotation { index, norm } => {
                write!(f, "base.rotation[{index}] has norm {norm}")
            }
            Violation::NonFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
        }
    }
}

fn check_set(set: &PrimitiveSet, report: &mut Vec<Violation>) {
    let n = set.len();
    let lengths = [
        ("base.rotation", set.rotations.len()),
        ("base.log_scale", set.log_scales.len()),
        ("base.opacity", set.opacities.len()),
        ("base.color", set.colors.len()),
    ];
    let mut consistent = true;
    for (field, len) in lengths {
        if len != n {
            consistent = false;
            report.push(Violation::DimensionMismatch {
                field: field.to_string(),
                expected: n,
                actual: len,
            });
        }
    }
    if !consistent {
        return;
    }

    for i in 0..n {
        if set.positions[i].iter().any(|c| !c.is_finite()) {
            report.push(Violation::NonFinite {
                field: "base.position".into(),
                index: i,
            });
        }
        let norm = quat_norm(&set.rotations[i]);
        if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
            report.push(Violation::NonUnitRotation { index: i, norm });
        }
        for &s in &set.log_scales[i] {
            let e = s.exp();
            if !(e.is_finite() && e > 0.0) {
                report.push(Violation::RangeViolation {
                    field: "base.log_scale".into(),
                    index: i,
                    value: f64::from(s),
                });
                break;
            }
        }
        let o = set.opacities[i];
        if !(0.0..=1.0).contains(&o) {
            report.push(Violation::RangeViolation {
                field: "base.opacity".into(),
                index: i,
                value: f64::from(o),
            });
        }
        for &c in &set.colors[i] {
            if !(0.0..=1.0).contains(&c) {
                report.push(Violation::RangeViolation {
                    field: "base.color".into(),
                    index: i,
                    value: f64::from(c),
                });
                break;
            }
        }
    }
}

/// Checks every avatar invariant. An empty report means the asset is valid.
pub fn validate_avatar(avatar: &BlendShapeAvatar) -> Vec<Violation> {
    let mut report = Vec::new();
    check_set(&avatar.base, &mut report);

    let n = avatar.base.len();
    if avatar.names.len() != avatar.deltas.len() {
        report.push(Violation::DimensionMismatch {
            field: "names".into(),
            expected: avatar.deltas.len(),
            actual: avatar.names.len(),
        });
    }
    for (k, delta) in avatar.deltas.iter().enumerate() {
        for (field, len) in delta.field_lengths() {
            if len != n {
                report.push(Violation::DimensionMismatch {
                    field: format!("delta[{k}].{field}"),
                    expected: n,
                    actual: len,
                });
            }
        }
        let finite = delta.positions.iter().flatten().all(|c| c.is_finite())
            && delta.rotations.iter().flatten().all(|c| c.is_finite())
            && delta.log_scales.iter().flatten().all(|c| c.is_finite())
            && delta.opacities.iter().all(|c| c.is_finite())
            && delta.colors.iter().flatten().all(|c| c.is_finite());
        if !finite {
            report.push(Violation::NonFinite {
                field: format!("delta[{k}]"),
                index: k,
            });
        }
    }
    report
}
