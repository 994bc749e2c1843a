//! PNG images and quilt files.
//!
//! PNGs are 8-bit RGBA with straight alpha. Quilt files carry their grid in a
//! `_qs{cols}x{rows}a{aspect}` filename suffix and in a JSON sidecar with the
//! same stem.

use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::quilt::QuiltImage;
use crate::rgba::Image;

pub fn write_image_png(image: &Image, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let buf = RgbaImage::from_raw(image.width as u32, image.height as u32, image.to_rgba8())
        .ok_or_else(|| FormatError::Encode(format!("{}x{} buffer size mismatch", image.width, image.height)))?;
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => FormatError::io(path, io),
        other => FormatError::Encode(other.to_string()),
    })
}

/// PNG bytes for an image, as written by [`write_image_png`].
pub fn encode_png(image: &Image) -> Result<Vec<u8>, FormatError> {
    let buf = RgbaImage::from_raw(image.width as u32, image.height as u32, image.to_rgba8())
        .ok_or_else(|| FormatError::Encode("buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| FormatError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn read_image_png(path: impl AsRef<Path>) -> Result<Image, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| FormatError::Encode(e.to_string()))?
        .into_rgba8();
    let (w, h) = decoded.dimensions();
    Ok(Image::from_rgba8(w as usize, h as usize, decoded.as_raw()).expect("decoder returns w*h*4 bytes"))
}

pub fn quilt_suffix(cols: usize, rows: usize, aspect: f64) -> String {
    format!("_qs{cols}x{rows}a{aspect}")
}

/// Reads `(cols, rows, aspect)` from a file stem such as `face_qs8x6a0.75`.
pub fn parse_quilt_suffix(stem: &str) -> Option<(usize, usize, f64)> {
    let at = stem.rfind("_qs")?;
    let rest = &stem[at + 3..];
    let (cols, rest) = rest.split_once('x')?;
    let (rows, aspect) = rest.split_once('a')?;
    Some((cols.parse().ok()?, rows.parse().ok()?, aspect.parse().ok()?))
}

/// `path` with the quilt suffix inserted before the extension, unless the
/// stem already ends with it. The extension is always `.png`.
pub fn quilt_path(path: impl AsRef<Path>, quilt: &QuiltImage) -> PathBuf {
    let path = path.as_ref();
    let suffix = quilt_suffix(quilt.cols, quilt.rows, quilt.view_aspect);
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "quilt".into());
    let stem = if stem.ends_with(&suffix) { stem } else { stem + &suffix };
    path.with_file_name(format!("{stem}.png"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuiltSidecar {
    pub cols: usize,
    pub rows: usize,
    pub view_width: usize,
    pub view_height: usize,
    pub view_aspect: f64,
    pub total_views: usize,
}

/// Writes the quilt PNG and its JSON sidecar; returns the PNG path.
pub fn save_quilt(quilt: &QuiltImage, path: impl AsRef<Path>) -> Result<PathBuf, FormatError> {
    let png = quilt_path(path, quilt);
    write_image_png(&quilt.image, &png)?;
    let sidecar = QuiltSidecar {
        cols: quilt.cols,
        rows: quilt.rows,
        view_width: quilt.view_width,
        view_height: quilt.view_height,
        view_aspect: quilt.view_aspect,
        total_views: quilt.total_views(),
    };
    let json = png.with_extension("json");
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(&json, text).map_err(|e| FormatError::io(&json, e))?;
    Ok(png)
}

/// Loads a quilt PNG, taking the grid from the sidecar when present and from
/// the filename suffix otherwise.
pub fn load_quilt(path: impl AsRef<Path>) -> Result<QuiltImage, FormatError> {
    let path = path.as_ref();
    let image = read_image_png(path)?;
    let json = path.with_extension("json");
    let (cols, rows) = if json.exists() {
        let text = std::fs::read(&json).map_err(|e| FormatError::io(&json, e))?;
        let s: QuiltSidecar = serde_json::from_slice(&text).map_err(|e| FormatError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        (s.cols, s.rows)
    } else {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (c, r, _) = parse_quilt_suffix(&stem)
            .ok_or_else(|| FormatError::schema("filename", "no _qs{cols}x{rows}a{aspect} suffix"))?;
        (c, r)
    };
    if cols == 0 || rows == 0 || image.width % cols != 0 || image.height % rows != 0 {
        return Err(FormatError::schema(
            "grid",
            format!("{}x{} image does not split into {cols}x{rows} cells", image.width, image.height),
        ));
    }
    let (vw, vh) = (image.width / cols, image.height / rows);
    Ok(QuiltImage {
        image,
        cols,
        rows,
        view_width: vw,
        view_height: vh,
        view_aspect: vw as f64 / vh as f64,
    })
}
