/// Floating-point RGBA image, premultiplied alpha, row-major with the origin
/// at the top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 4]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 4])
    }

    pub fn filled(width: usize, height: usize, value: [f32; 4]) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Opaque image of a single RGB color.
    pub fn solid(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::filled(width, height, [rgb[0], rgb[1], rgb[2], 1.0])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 4] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [f32; 4]) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[[f32; 4]] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [[f32; 4]] {
        &mut self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn is_well_formed(&self) -> bool {
        self.pixels.len() == self.width * self.height
            && self.pixels.iter().flatten().all(|c| c.is_finite())
    }

    /// Largest per-channel absolute difference; `None` when sizes differ.
    pub fn max_abs_diff(&self, other: &Image) -> Option<f32> {
        if self.width != other.width || self.height != other.height {
            return None;
        }
        Some(
            self.pixels
                .iter()
                .flatten()
                .zip(other.pixels.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }

    /// Straight-alpha 8-bit RGBA, rounded to nearest.
    pub fn to_rgba8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 4);
        for p in &self.pixels {
            let a = p[3].clamp(0.0, 1.0);
            for c in &p[..3] {
                let straight = if a > 0.0 { c / a } else { 0.0 };
                out.push(quantize(straight));
            }
            out.push(quantize(a));
        }
        out
    }

    /// Inverse of [`Image::to_rgba8`]; premultiplies on the way in.
    pub fn from_rgba8(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width * height * 4 {
            return None;
        }
        let pixels = bytes
            .chunks_exact(4)
            .map(|px| {
                let a = f32::from(px[3]) / 255.0;
                [
                    f32::from(px[0]) / 255.0 * a,
                    f32::from(px[1]) / 255.0 * a,
                    f32::from(px[2]) / 255.0 * a,
                    a,
                ]
            })
            .collect();
        Some(Self {
            width,
            height,
            pixels,
        })
    }
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
