//! Screen-space projection and alpha compositing of Gaussian primitives.
//!
//! Two rasterizers share one per-pixel contract. [`rasterize`] bins splats
//! into 16x16 tiles, renders tiles in parallel on the current rayon pool and
//! stops a pixel once its transmittance drops below [`EARLY_STOP_T`].
//! [`rasterize_reference`] visits every splat at every pixel and exists to
//! check the fast path.
//!
//! Each splat's Gaussian is truncated at Mahalanobis distance 3, which is the
//! same 3-sigma footprint used for tile binning. With that support the two
//! paths agree up to the early-termination residue.

use nalgebra::{Matrix2x3, Matrix3, Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use thiserror::Error;

use crate::avatar::{to_unit_quaternion, GaussianPrimitive, PrimitiveSet};
use crate::rgba::Image;

pub const TILE_SIZE: usize = 16;
/// Low-pass dilation added to every screen-space covariance, in px^2.
pub const COV_DILATION: f64 = 0.3;
pub const MAX_ALPHA: f32 = 0.99;
pub const EARLY_STOP_T: f32 = 1e-4;
/// Splat support radius, in standard deviations.
pub const SIGMA_EXTENT: f64 = 3.0;
const CUTOFF_MAHALANOBIS_SQ: f32 = (SIGMA_EXTENT * SIGMA_EXTENT) as f32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("view rotation is not orthonormal (deviation {0:e})")]
    NonOrthonormalView(f64),
    #[error("clip planes must satisfy z_far > z_near > 0 (near {near}, far {far})")]
    BadClipPlanes { near: f64, far: f64 },
    #[error("viewport must be non-empty")]
    EmptyViewport,
}

/// A pinhole camera: world-to-camera `view`, camera-to-clip `proj`, and a
/// viewport in pixels. Column-vector convention; the camera looks down -z.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view: Matrix4<f64>,
    pub proj: Matrix4<f64>,
    pub width: usize,
    pub height: usize,
    pub z_near: f64,
    pub z_far: f64,
}

impl CameraView {
    pub fn new(
        view: Matrix4<f64>,
        proj: Matrix4<f64>,
        width: usize,
        height: usize,
        z_near: f64,
        z_far: f64,
    ) -> Result<Self, CameraError> {
        let cam = Self {
            view,
            proj,
            width,
            height,
            z_near,
            z_far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyViewport);
        }
        if !(self.z_near > 0.0 && self.z_far > self.z_near) {
            return Err(CameraError::BadClipPlanes {
                near: self.z_near,
                far: self.z_far,
            });
        }
        let r: Matrix3<f64> = self.view.fixed_view::<3, 3>(0, 0).into_owned();
        let dev = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !(dev <= 1e-5) {
            return Err(CameraError::NonOrthonormalView(dev));
        }
        Ok(())
    }
}

/// A primitive projected to the screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates, origin at the top-left corner of the viewport.
    pub center: [f32; 2],
    /// Symmetric covariance `[xx, xy, yy]` in px^2, dilation included.
    pub cov: [f32; 3],
    /// Inverse of `cov`, `[xx, xy, yy]`.
    pub conic: [f32; 3],
    /// Distance in front of the camera along its forward axis.
    pub depth: f64,
    pub peak_alpha: f32,
    pub color: [f32; 3],
    /// Index of the source primitive; breaks depth ties.
    pub index: u32,
}

impl Splat2D {
    /// Half-widths of the axis-aligned box bounding the 3-sigma ellipse.
    pub fn extent(&self) -> [f32; 2] {
        let k = SIGMA_EXTENT as f32;
        [k * self.cov[0].sqrt(), k * self.cov[2].sqrt()]
    }

    /// Opacity this splat contributes at pixel-space point `(px, py)`.
    #[inline]
    pub fn alpha_at(&self, px: f32, py: f32) -> f32 {
        let dx = px - self.center[0];
        let dy = py - self.center[1];
        let m = self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy;
        if !(m <= CUTOFF_MAHALANOBIS_SQ) {
            return 0.0;
        }
        (self.peak_alpha * (-0.5 * m).exp()).min(MAX_ALPHA)
    }
}

fn covariance_3d(prim: &GaussianPrimitive) -> Matrix3<f64> {
    let r = to_unit_quaternion(prim.rotation).to_rotation_matrix().into_inner();
    let s = prim.log_scale.map(|l| f64::from(l).exp());
    let s2 = Matrix3::from_diagonal(&Vector3::new(s[0] * s[0], s[1] * s[1], s[2] * s[2]));
    r * s2 * r.transpose()
}

/// Projects one primitive; `None` when it is culled.
///
/// Culled means camera-space depth at or before `z_near`, or a projected
/// center more than three screen-space sigmas outside the viewport.
pub fn project_primitive(prim: &GaussianPrimitive, cam: &CameraView) -> Option<Splat2D> {
    project_indexed(prim, 0, cam)
}

fn project_indexed(prim: &GaussianPrimitive, index: u32, cam: &CameraView) -> Option<Splat2D> {
    let p = prim.position;
    let world = Vector4::new(f64::from(p[0]), f64::from(p[1]), f64::from(p[2]), 1.0);
    let pc = cam.view * world;
    let depth = -pc.z;
    if !(depth > cam.z_near) {
        return None;
    }
    let clip = cam.proj * pc;
    let w = clip.w;
    if !(w > 0.0) {
        return None;
    }
    let (width, height) = (cam.width as f64, cam.height as f64);
    let cx = (clip.x / w + 1.0) * 0.5 * width;
    let cy = (1.0 - clip.y / w) * 0.5 * height;

    // d(ndc)/d(camera xyz) for a general projective matrix, scaled to pixels.
    let pr = cam.proj;
    let mut jac = Matrix2x3::zeros();
    for col in 0..3 {
        let dw = pr[(3, col)];
        jac[(0, col)] = (pr[(0, col)] * w - clip.x * dw) / (w * w) * 0.5 * width;
        jac[(1, col)] = -(pr[(1, col)] * w - clip.y * dw) / (w * w) * 0.5 * height;
    }
    let rot: Matrix3<f64> = cam.view.fixed_view::<3, 3>(0, 0).into_owned();
    let cov_cam = rot * covariance_3d(prim) * rot.transpose();
    let cov2 = jac * cov_cam * jac.transpose();
    let (a, b, c) = (
        cov2[(0, 0)] + COV_DILATION,
        0.5 * (cov2[(0, 1)] + cov2[(1, 0)]),
        cov2[(1, 1)] + COV_DILATION,
    );
    let det = a * c - b * b;
    if !(det > 0.0) || !cx.is_finite() || !cy.is_finite() {
        return None;
    }

    let (ex, ey) = (SIGMA_EXTENT * a.sqrt(), SIGMA_EXTENT * c.sqrt());
    if cx + ex < 0.0 || cx - ex > width || cy + ey < 0.0 || cy - ey > height {
        return None;
    }

    Some(Splat2D {
        center: [cx as f32, cy as f32],
        cov: [a as f32, b as f32, c as f32],
        conic: [(c / det) as f32, (-b / det) as f32, (a / det) as f32],
        depth,
        peak_alpha: prim.opacity,
        color: prim.color,
        index,
    })
}

/// Projects every primitive and returns the survivors sorted front to back,
/// ties broken by primitive index.
pub fn project_sorted(set: &PrimitiveSet, cam: &CameraView) -> Vec<Splat2D> {
    let mut splats: Vec<Splat2D> = (0..set.len())
        .into_par_iter()
        .filter_map(|i| project_indexed(&set.get(i), i as u32, cam))
        .filter(|s| s.peak_alpha > 0.0)
        .collect();
    splats.sort_unstable_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    splats
}

/// Front-to-back compositing of `splats` at the center of pixel `(x, y)`.
///
/// `on_step` sees the transmittance after every splat that contributed.
#[inline]
pub(crate) fn composite<'a>(
    splats: impl Iterator<Item = &'a Splat2D>,
    x: usize,
    y: usize,
    background: [f32; 3],
    early_stop: bool,
    mut on_step: impl FnMut(f32),
) -> [f32; 4] {
    let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
    let mut rgb = [0.0f32; 3];
    let mut t = 1.0f32;
    for s in splats {
        let alpha = s.alpha_at(px, py);
        if alpha <= 0.0 {
            continue;
        }
        let weight = alpha * t;
        for (acc, c) in rgb.iter_mut().zip(s.color) {
            *acc += c * weight;
        }
        t *= 1.0 - alpha;
        on_step(t);
        if early_stop && t < EARLY_STOP_T {
            break;
        }
    }
    [
        (rgb[0] + t * background[0]).clamp(0.0, 1.0),
        (rgb[1] + t * background[1]).clamp(0.0, 1.0),
        (rgb[2] + t * background[2]).clamp(0.0, 1.0),
        1.0,
    ]
}

/// Inclusive pixel range whose centers may fall inside the splat footprint,
/// padded by one pixel on each side.
fn pixel_span(center: f32, extent: f32, limit: usize) -> Option<(usize, usize)> {
    let lo = (center - extent - 0.5).floor() - 1.0;
    let hi = (center + extent - 0.5).ceil() + 1.0;
    if hi < 0.0 || lo > (limit - 1) as f32 {
        return None;
    }
    Some((lo.max(0.0) as usize, (hi as usize).min(limit - 1)))
}

/// Tiled rasterizer. Parallelism comes from the ambient rayon pool; the
/// output is bit-identical for any pool size.
pub fn rasterize(set: &PrimitiveSet, cam: &CameraView, background: [f32; 3]) -> Image {
    let splats = project_sorted(set, cam);
    rasterize_splats(&splats, cam.width, cam.height, background)
}

/// Rasterizes already projected and sorted splats; see [`project_sorted`].
pub fn rasterize_splats(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    background: [f32; 3],
) -> Image {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let [ex, ey] = s.extent();
        let (Some((x0, x1)), Some((y0, y1))) = (
            pixel_span(s.center[0], ex, width),
            pixel_span(s.center[1], ey, height),
        ) else {
            continue;
        };
        for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
            for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                bins[ty * tiles_x + tx].push(si as u32);
            }
        }
    }

    let tiles: Vec<Vec<[f32; 4]>> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let (x0, y0) = (tx * TILE_SIZE, ty * TILE_SIZE);
            let (x1, y1) = ((x0 + TILE_SIZE).min(width), (y0 + TILE_SIZE).min(height));
            let mut buf = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    let members = bin.iter().map(|&i| &splats[i as usize]);
                    buf.push(composite(members, x, y, background, true, |_| {}));
                }
            }
            buf
        })
        .collect();

    let mut image = Image::new(width, height);
    for (t, buf) in tiles.iter().enumerate() {
        let (x0, y0) = ((t % tiles_x) * TILE_SIZE, (t / tiles_x) * TILE_SIZE);
        let tw = (x0 + TILE_SIZE).min(width) - x0;
        for (row, chunk) in buf.chunks_exact(tw).enumerate() {
            image.row_mut(y0 + row)[x0..x0 + tw].copy_from_slice(chunk);
        }
    }
    image
}

/// Naive oracle: every splat at every pixel, no tiles, no early stop.
pub fn rasterize_reference(set: &PrimitiveSet, cam: &CameraView, background: [f32; 3]) -> Image {
    let mut splats: Vec<Splat2D> = (0..set.len())
        .filter_map(|i| project_indexed(&set.get(i), i as u32, cam))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    let mut image = Image::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            image.set(x, y, composite(splats.iter(), x, y, background, false, |_| {}));
        }
    }
    image
}
