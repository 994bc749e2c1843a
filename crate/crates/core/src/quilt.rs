//! Quilt packing, lenticular shading and observer simulation.
//!
//! Views are laid out row-major starting at the bottom-left cell: view 0 is
//! the leftmost cell of the bottom row. Images themselves keep a top-left
//! raster origin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::DisplayProfile;
use crate::rgba::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuiltError {
    #[error("expected {expected} views, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("view index {index} out of range for {total} views")]
    IndexOutOfRange { index: usize, total: usize },
    #[error("invalid lenticular calibration: {0}")]
    InvalidCalib(String),
}

/// Lens-array calibration of a lenticular display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LenticularCalib {
    /// Lenticles per normalized screen width.
    pub pitch: f64,
    /// Slope of the lenticle axis.
    pub tilt: f64,
    /// Phase offset in `[0, 1)`.
    pub center: f64,
    /// Normalized subpixel width, normally `1 / (3 * screen_width_px)`.
    pub subp: f64,
    pub invert_views: bool,
    pub screen_width_px: usize,
    pub screen_height_px: usize,
}

/// Slack, in view units, so phases that land exactly on a view boundary pick
/// the upper view despite f64 rounding.
const PHASE_EPS: f64 = 1e-9;

impl Default for LenticularCalib {
    fn default() -> Self {
        Self {
            pitch: 246.866,
            tilt: -0.1853,
            center: 0.0423,
            subp: 1.0 / (3.0 * 1536.0),
            invert_views: false,
            screen_width_px: 1536,
            screen_height_px: 2048,
        }
    }
}

impl LenticularCalib {
    pub fn validate(&self) -> Result<(), QuiltError> {
        let bad = |m: String| Err(QuiltError::InvalidCalib(m));
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return bad(format!("pitch must be positive, got {}", self.pitch));
        }
        if !(self.subp > 0.0 && self.subp.is_finite()) {
            return bad(format!("subp must be positive, got {}", self.subp));
        }
        if !self.tilt.is_finite() {
            return bad("tilt must be finite".into());
        }
        if !(0.0..1.0).contains(&self.center) {
            return bad(format!("center {} not in [0, 1)", self.center));
        }
        if self.screen_width_px == 0 || self.screen_height_px == 0 {
            return bad("screen dimensions must be non-zero".into());
        }
        Ok(())
    }

    /// View index feeding channel `channel` of screen pixel `(x, y)`.
    #[inline]
    pub fn view_index(&self, x: usize, y: usize, channel: usize, total_views: usize) -> usize {
        let xn = x as f64 / self.screen_width_px as f64;
        let yn = y as f64 / self.screen_height_px as f64;
        let a = (xn + channel as f64 * self.subp) * self.pitch - yn * self.pitch * self.tilt + self.center;
        let view_f = a - a.floor();
        let idx = ((view_f * total_views as f64 + PHASE_EPS).floor() as usize).min(total_views - 1);
        if self.invert_views {
            total_views - 1 - idx
        } else {
            idx
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuiltImage {
    pub image: Image,
    pub cols: usize,
    pub rows: usize,
    pub view_width: usize,
    pub view_height: usize,
    pub view_aspect: f64,
}

impl QuiltImage {
    pub fn total_views(&self) -> usize {
        self.cols * self.rows
    }

    /// Top-left raster origin of the cell holding view `i`.
    pub fn cell_origin(&self, i: usize) -> (usize, usize) {
        cell_origin(i, self.cols, self.rows, self.view_width, self.view_height)
    }

    pub fn is_consistent(&self) -> bool {
        self.image.width == self.cols * self.view_width
            && self.image.height == self.rows * self.view_height
    }
}

fn cell_origin(i: usize, cols: usize, rows: usize, vw: usize, vh: usize) -> (usize, usize) {
    let (col, row) = (i % cols, i / cols);
    (col * vw, (rows - 1 - row) * vh)
}

/// Display-native RGB frame produced by [`lenticular_shade`].
#[derive(Debug, Clone, PartialEq)]
pub struct NativeFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl NativeFrame {
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| [p[0], p[1], p[2], 1.0]).collect(),
        }
    }
}

/// Packs `cols * rows` equally sized views into one quilt.
pub fn assemble_quilt(views: &[Image], cols: usize, rows: usize) -> Result<QuiltImage, QuiltError> {
    if views.len() != cols * rows || views.is_empty() {
        return Err(QuiltError::CountMismatch {
            expected: cols * rows,
            actual: views.len(),
        });
    }
    let (vw, vh) = (views[0].width, views[0].height);
    if let Some((i, v)) = views
        .iter()
        .enumerate()
        .find(|(_, v)| v.width != vw || v.height != vh || v.pixels.len() != vw * vh)
    {
        return Err(QuiltError::DimensionMismatch(format!(
            "view {i} is {}x{}, view 0 is {vw}x{vh}",
            v.width, v.height
        )));
    }

    let mut image = Image::new(cols * vw, rows * vh);
    for (i, view) in views.iter().enumerate() {
        let (x0, y0) = cell_origin(i, cols, rows, vw, vh);
        for y in 0..vh {
            image.row_mut(y0 + y)[x0..x0 + vw].copy_from_slice(view.row(y));
        }
    }
    Ok(QuiltImage {
        image,
        cols,
        rows,
        view_width: vw,
        view_height: vh,
        view_aspect: vw as f64 / vh as f64,
    })
}

/// Copies view `i` back out of a quilt.
pub fn extract_view(quilt: &QuiltImage, i: usize) -> Result<Image, QuiltError> {
    if i >= quilt.total_views() {
        return Err(QuiltError::IndexOutOfRange {
            index: i,
            total: quilt.total_views(),
        });
    }
    let (x0, y0) = quilt.cell_origin(i);
    let mut view = Image::new(quilt.view_width, quilt.view_height);
    for y in 0..quilt.view_height {
        view.row_mut(y)
            .copy_from_slice(&quilt.image.row(y0 + y)[x0..x0 + quilt.view_width]);
    }
    Ok(view)
}

/// Interleaves quilt views into a display-native frame.
///
/// Every subpixel selects one view from the lens phase at its position and
/// copies that view's nearest pixel; views are never blended.
pub fn lenticular_shade(
    quilt: &QuiltImage,
    calib: &LenticularCalib,
    total_views: usize,
) -> Result<NativeFrame, QuiltError> {
    calib.validate()?;
    if total_views != quilt.total_views() || total_views == 0 {
        return Err(QuiltError::DimensionMismatch(format!(
            "total_views {total_views} does not match a {}x{} quilt",
            quilt.cols, quilt.rows
        )));
    }
    if !quilt.is_consistent() {
        return Err(QuiltError::DimensionMismatch(format!(
            "quilt image is {}x{}, cells imply {}x{}",
            quilt.image.width,
            quilt.image.height,
            quilt.cols * quilt.view_width,
            quilt.rows * quilt.view_height
        )));
    }

    let (w, h) = (calib.screen_width_px, calib.screen_height_px);
    let (vw, vh) = (quilt.view_width, quilt.view_height);
    let origins: Vec<(usize, usize)> = (0..total_views).map(|i| quilt.cell_origin(i)).collect();
    let columns: Vec<usize> = (0..w).map(|x| (x * vw / w).min(vw - 1)).collect();

    let mut pixels = vec![[0.0f32; 3]; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let vy = (y * vh / h).min(vh - 1);
        for (x, out) in row.iter_mut().enumerate() {
            let vx = columns[x];
            for (c, slot) in out.iter_mut().enumerate() {
                let (ox, oy) = origins[calib.view_index(x, y, c, total_views)];
                *slot = quilt.image.get(ox + vx, oy + vy)[c];
            }
        }
    });
    Ok(NativeFrame {
        width: w,
        height: h,
        pixels,
    })
}

/// View index an observer at `angle_deg` (0 = straight on) would see.
pub fn observed_view_index(angle_deg: f64, profile: &DisplayProfile) -> usize {
    let total = profile.total_views;
    let u = (angle_deg / profile.view_cone_deg + 0.5).clamp(0.0, 1.0);
    // f64::round rounds half away from zero.
    let idx = ((u * (total - 1) as f64).round() as usize).min(total - 1);
    if profile.lenticular.invert_views {
        total - 1 - idx
    } else {
        idx
    }
}

/// The single view an observer at `angle_deg` would perceive. Angles outside
/// the view cone are clamped to its edge.
pub fn simulate_observer(
    quilt: &QuiltImage,
    angle_deg: f64,
    profile: &DisplayProfile,
) -> Result<Image, QuiltError> {
    if quilt.total_views() != profile.total_views {
        return Err(QuiltError::CountMismatch {
            expected: profile.total_views,
            actual: quilt.total_views(),
        });
    }
    extract_view(quilt, observed_view_index(angle_deg, profile))
}
