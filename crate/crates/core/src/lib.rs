//! Holographic quilt rendering for blend-shape Gaussian avatars.
//!
//! The pipeline for one frame is:
//!
//! 1. [`avatar::blend`] the avatar's blend shapes with an expression vector
//!    and [`avatar::apply_pose`] the head pose;
//! 2. [`calib::compute_views`] the off-axis camera for every display view;
//! 3. [`calib::render_views`] with the tiled splat rasterizer;
//! 4. [`quilt::assemble_quilt`] the views, then [`quilt::lenticular_shade`]
//!    for the display-native frame or [`quilt::simulate_observer`] for the
//!    view a viewer at a given angle would see.

// Negated comparisons below are deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avatar;
pub mod calib;
pub mod io;
pub mod quilt;
pub mod raster;
pub mod rgba;
pub mod synthetic;

pub use avatar::{
    apply_pose, blend, validate_avatar, AvatarError, BlendShapeAvatar, DeltaSet, ExpressionFrame,
    GaussianPrimitive, PrimitiveSet, Violation,
};
pub use calib::{
    compute_views, compute_views_with_fov, fov_of_distance, render_views, CalibError, DisplayProfile,
    RigConfig, ViewSpec,
};
pub use quilt::{
    assemble_quilt, extract_view, lenticular_shade, simulate_observer, LenticularCalib, NativeFrame,
    QuiltError, QuiltImage,
};
pub use raster::{
    project_primitive, rasterize, rasterize_reference, CameraError, CameraView, Splat2D,
};
pub use rgba::Image;

/// Blend and pose one expression frame.
pub fn pose_frame(
    avatar: &BlendShapeAvatar,
    frame: &ExpressionFrame,
) -> Result<PrimitiveSet, AvatarError> {
    let blended = blend(avatar, &frame.psi)?;
    apply_pose(&blended, frame.head_rotation, frame.head_translation)
}
