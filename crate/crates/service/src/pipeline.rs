//! One-frame rendering pipeline shared by the CLI, the bench and the live
//! session: blend, pose, calibrate, rasterize, assemble.

use std::sync::Arc;
use std::time::{Duration, Instant};

use holoquilt_core::calib::{compute_views, compute_views_with_fov, ViewSpec};
use holoquilt_core::io::ProfileFile;
use holoquilt_core::quilt::{assemble_quilt, lenticular_shade, NativeFrame, QuiltImage};
use holoquilt_core::raster::rasterize;
use holoquilt_core::{pose_frame, render_views, BlendShapeAvatar, ExpressionFrame, Image, PrimitiveSet};

pub const DEFAULT_BACKGROUND: [f32; 3] = [0.0, 0.0, 0.0];

#[derive(Debug, Clone)]
pub struct Renderer {
    pub avatar: Arc<BlendShapeAvatar>,
    pub profile: ProfileFile,
    pub background: [f32; 3],
}

#[derive(Debug, Clone, Default)]
pub struct StageTimes {
    pub blend: Duration,
    pub raster_per_view: Vec<Duration>,
    pub quilt: Duration,
    pub shade: Duration,
}

impl Renderer {
    pub fn new(avatar: Arc<BlendShapeAvatar>, profile: ProfileFile) -> Self {
        Self {
            avatar,
            profile,
            background: DEFAULT_BACKGROUND,
        }
    }

    /// Views for the profile's rig, optionally at a different viewer distance.
    pub fn views(&self, distance_m: Option<f64>) -> anyhow::Result<Vec<ViewSpec>> {
        let mut rig = self.profile.rig.clone();
        if let Some(d) = distance_m {
            rig.viewer_distance_m = d;
        }
        Ok(compute_views(&rig, &self.profile.display)?)
    }

    pub fn views_with_fov(&self, fov_rad: f64) -> anyhow::Result<Vec<ViewSpec>> {
        Ok(compute_views_with_fov(&self.profile.rig, &self.profile.display, fov_rad)?)
    }

    pub fn pose(&self, frame: &ExpressionFrame) -> anyhow::Result<PrimitiveSet> {
        Ok(pose_frame(&self.avatar, frame)?)
    }

    pub fn render_posed(&self, views: &[ViewSpec], set: &PrimitiveSet) -> anyhow::Result<QuiltImage> {
        let d = &self.profile.display;
        let images = render_views(views, &self.profile.rig, set, d.view_width, d.view_height, self.background)?;
        Ok(assemble_quilt(&images, d.quilt_cols, d.quilt_rows)?)
    }

    pub fn render_quilt(&self, views: &[ViewSpec], frame: &ExpressionFrame) -> anyhow::Result<QuiltImage> {
        let set = self.pose(frame)?;
        self.render_posed(views, &set)
    }

    /// A single view, identical to the same cell of [`Renderer::render_quilt`].
    pub fn render_view(&self, views: &[ViewSpec], index: usize, set: &PrimitiveSet) -> anyhow::Result<Image> {
        let d = &self.profile.display;
        let cam = views[index].camera(&self.profile.rig, d.view_width, d.view_height)?;
        Ok(rasterize(set, &cam, self.background))
    }

    pub fn shade(&self, quilt: &QuiltImage) -> anyhow::Result<NativeFrame> {
        let d = &self.profile.display;
        Ok(lenticular_shade(quilt, &d.lenticular, d.total_views)?)
    }

    /// Full quilt plus native frame with per-stage wall times. Views are
    /// rasterized one after another so each view gets its own timing.
    pub fn timed_frame(
        &self,
        views: &[ViewSpec],
        frame: &ExpressionFrame,
    ) -> anyhow::Result<(QuiltImage, NativeFrame, StageTimes)> {
        let mut times = StageTimes::default();
        let t = Instant::now();
        let set = self.pose(frame)?;
        times.blend = t.elapsed();

        let mut images = Vec::with_capacity(views.len());
        for i in 0..views.len() {
            let t = Instant::now();
            images.push(self.render_view(views, i, &set)?);
            times.raster_per_view.push(t.elapsed());
        }

        let t = Instant::now();
        let d = &self.profile.display;
        let quilt = assemble_quilt(&images, d.quilt_cols, d.quilt_rows)?;
        times.quilt = t.elapsed();

        let t = Instant::now();
        let native = self.shade(&quilt)?;
        times.shade = t.elapsed();
        Ok((quilt, native, times))
    }
}
