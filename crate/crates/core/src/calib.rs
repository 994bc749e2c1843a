//! Multi-view off-axis calibration.
//!
//! A row of `total_views` cameras is spread horizontally behind a shared
//! focal plane. Each camera keeps the base orientation (no toe-in) and gets a
//! sheared projection so the focal-plane window stays fixed in NDC. Points on
//! the focal plane therefore have zero parallax and neighboring views line up
//! for an observer in front of the display.

use nalgebra::{Matrix4, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avatar::PrimitiveSet;
use crate::quilt::LenticularCalib;
use crate::raster::{rasterize, CameraError, CameraView};
use crate::rgba::Image;

pub const MIN_FOV_DEG: f64 = 5.0;
pub const MAX_FOV_DEG: f64 = 45.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("viewer distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("field of view {0} rad is outside (0, pi)")]
    DegenerateFov(f64),
    #[error("invalid display profile: {0}")]
    InvalidProfile(String),
    #[error("invalid rig: {0}")]
    InvalidRig(String),
}

/// Physical and optical constants of the target display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayProfile {
    /// Full horizontal view cone in degrees.
    pub view_cone_deg: f64,
    pub total_views: usize,
    /// Per-view aspect ratio, width over height.
    pub ar: f64,
    /// Height of the active display area in meters.
    pub physical_height: f64,
    pub quilt_cols: usize,
    pub quilt_rows: usize,
    pub view_width: usize,
    pub view_height: usize,
    pub lenticular: LenticularCalib,
}

impl Default for DisplayProfile {
    /// A 48-view portrait display with an 8x6 quilt of 420x560 views.
    fn default() -> Self {
        Self {
            view_cone_deg: 40.0,
            total_views: 48,
            ar: 0.75,
            physical_height: 0.16,
            quilt_cols: 8,
            quilt_rows: 6,
            view_width: 420,
            view_height: 560,
            lenticular: LenticularCalib::default(),
        }
    }
}

impl DisplayProfile {
    pub fn validate(&self) -> Result<(), CalibError> {
        let bad = |m: String| Err(CalibError::InvalidProfile(m));
        if self.total_views != self.quilt_cols * self.quilt_rows {
            return bad(format!(
                "total_views {} != quilt_cols {} * quilt_rows {}",
                self.total_views, self.quilt_cols, self.quilt_rows
            ));
        }
        if self.total_views < 2 {
            return bad(format!("total_views must be at least 2, got {}", self.total_views));
        }
        if !(self.view_cone_deg > 0.0 && self.view_cone_deg < 180.0) {
            return bad(format!("view_cone_deg {} not in (0, 180)", self.view_cone_deg));
        }
        if !(self.ar > 0.0 && self.ar.is_finite()) {
            return bad(format!("ar must be positive, got {}", self.ar));
        }
        if !(self.physical_height > 0.0 && self.physical_height.is_finite()) {
            return bad(format!("physical_height must be positive, got {}", self.physical_height));
        }
        if self.view_width == 0 || self.view_height == 0 {
            return bad("view dimensions must be non-zero".into());
        }
        self.lenticular
            .validate()
            .map_err(|e| CalibError::InvalidProfile(e.to_string()))
    }

    pub fn quilt_width(&self) -> usize {
        self.quilt_cols * self.view_width
    }

    pub fn quilt_height(&self) -> usize {
        self.quilt_rows * self.view_height
    }
}

/// Virtual camera rig for the central view.
#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    /// Half-height of the focal plane, world units.
    pub cam_size: f64,
    /// World-to-camera transform of a camera sitting at the focal-plane
    /// center, looking down its -z axis.
    pub base_view: Matrix4<f64>,
    pub viewer_distance_m: f64,
    pub z_near: f64,
    pub z_far: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            cam_size: 1.0,
            base_view: Matrix4::identity(),
            viewer_distance_m: 0.5,
            z_near: 0.1,
            z_far: 100.0,
        }
    }
}

impl RigConfig {
    pub fn validate(&self) -> Result<(), CalibError> {
        let bad = |m: String| Err(CalibError::InvalidRig(m));
        if !(self.cam_size > 0.0 && self.cam_size.is_finite()) {
            return bad(format!("cam_size must be positive, got {}", self.cam_size));
        }
        if !(self.viewer_distance_m > 0.0) {
            return Err(CalibError::NonPositiveDistance(self.viewer_distance_m));
        }
        if !(self.z_near > 0.0 && self.z_far > self.z_near) {
            return bad(format!(
                "need z_far > z_near > 0, got near {} far {}",
                self.z_near, self.z_far
            ));
        }
        let probe = CameraView {
            view: self.base_view,
            proj: Matrix4::identity(),
            width: 1,
            height: 1,
            z_near: self.z_near,
            z_far: self.z_far,
        };
        probe.validate().map_err(|e| CalibError::InvalidRig(e.to_string()))
    }
}

/// One calibrated view of the rig.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub index: usize,
    /// Angular offset in radians.
    pub alpha_off: f64,
    /// The same offset in degrees, computed directly from the cone angle.
    pub alpha_off_deg: f64,
    /// Lateral camera offset along the base camera's right axis.
    pub t_off: f64,
    pub view: Matrix4<f64>,
    pub proj: Matrix4<f64>,
}

impl ViewSpec {
    pub fn camera(&self, rig: &RigConfig, width: usize, height: usize) -> Result<CameraView, CameraError> {
        CameraView::new(self.view, self.proj, width, height, rig.z_near, rig.z_far)
    }
}

/// Vertical field of view matching the angle the display subtends at distance `d`,
/// clamped to `[5, 45]` degrees.
pub fn fov_of_distance(d: f64, profile: &DisplayProfile) -> Result<f64, CalibError> {
    if !(d > 0.0) {
        return Err(CalibError::NonPositiveDistance(d));
    }
    let raw = 2.0 * (profile.physical_height / (2.0 * d)).atan();
    Ok(raw.clamp(MIN_FOV_DEG.to_radians(), MAX_FOV_DEG.to_radians()))
}

/// OpenGL-style perspective projection, vertical `fov` in radians.
pub fn perspective(fov: f64, ar: f64, z_near: f64, z_far: f64) -> Matrix4<f64> {
    let f = 1.0 / (fov / 2.0).tan();
    let mut p = Matrix4::zeros();
    p[(0, 0)] = f / ar;
    p[(1, 1)] = f;
    p[(2, 2)] = (z_far + z_near) / (z_near - z_far);
    p[(2, 3)] = 2.0 * z_far * z_near / (z_near - z_far);
    p[(3, 2)] = -1.0;
    p
}

/// Signed distance from the cameras to the focal plane along the forward axis;
/// negative because the cameras sit behind it.
pub fn camera_distance(cam_size: f64, fov: f64) -> f64 {
    -cam_size / (fov / 2.0).tan()
}

/// Angular offset of view `i` out of `total`: spans `[-cone/2, +cone/2]`
/// in whatever unit `view_cone` is given.
pub fn view_angle(i: usize, total: usize, view_cone: f64) -> f64 {
    view_cone * (i as f64 / (total - 1) as f64 - 0.5)
}

/// Calibrated view and projection matrices for every view of the display.
pub fn compute_views(rig: &RigConfig, profile: &DisplayProfile) -> Result<Vec<ViewSpec>, CalibError> {
    rig.validate()?;
    let fov = fov_of_distance(rig.viewer_distance_m, profile)?;
    compute_views_with_fov(rig, profile, fov)
}

/// [`compute_views`] with the field of view given directly instead of derived
/// from the viewer distance.
pub fn compute_views_with_fov(
    rig: &RigConfig,
    profile: &DisplayProfile,
    fov: f64,
) -> Result<Vec<ViewSpec>, CalibError> {
    rig.validate()?;
    profile.validate()?;
    if !(fov > 0.0 && fov < std::f64::consts::PI) {
        return Err(CalibError::DegenerateFov(fov));
    }
    let total = profile.total_views;
    let d_cam = camera_distance(rig.cam_size, fov);
    let base_proj = perspective(fov, profile.ar, rig.z_near, rig.z_far);

    Ok((0..total)
        .map(|i| {
            let alpha_off_deg = view_angle(i, total, profile.view_cone_deg);
            let alpha_off = alpha_off_deg.to_radians();
            let t_off = d_cam * alpha_off.tan();

            // Camera at c_f + d_cam * forward + t_off * right, expressed in the
            // base camera frame where forward = -z and right = +x.
            let eye = Vector3::new(t_off, 0.0, -d_cam);
            let view = Matrix4::new_translation(&-eye) * rig.base_view;

            let mut proj = base_proj;
            proj[(0, 2)] -= t_off / (rig.cam_size * profile.ar);

            ViewSpec {
                index: i,
                alpha_off,
                alpha_off_deg,
                t_off,
                view,
                proj,
            }
        })
        .collect())
}

/// Renders every view, in order. Views are rendered in parallel.
pub fn render_views(
    views: &[ViewSpec],
    rig: &RigConfig,
    set: &PrimitiveSet,
    width: usize,
    height: usize,
    background: [f32; 3],
) -> Result<Vec<Image>, CameraError> {
    let cams = views
        .iter()
        .map(|v| v.camera(rig, width, height))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cams.par_iter().map(|cam| rasterize(set, cam, background)).collect())
}
