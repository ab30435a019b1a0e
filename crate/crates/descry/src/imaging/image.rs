//! Grayscale and RGB raster types plus color-space conversions.
//!
//! Pixels are `f64` in [0, 1], row-major, RGB interleaved. The range is an
//! invariant of both types: checked constructors reject violations and every
//! operation in this crate clamps before writing.

use super::ImagingError;

/// A grayscale image. Pixel values stay inside [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// An RGB image with interleaved channels. Values stay inside [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// A detected interest point: position in pixel coordinates of the owning
/// image plus its detector score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl ImageGray {
    /// All-black image of the given size.
    pub fn new(width: usize, height: usize) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        Ok(Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        })
    }

    /// Wraps a pixel buffer, checking length and the [0, 1] range invariant.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        let want = width * height;
        if pixels.len() != want {
            return Err(ImagingError::PixelLengthMismatch {
                got: pixels.len(),
                want,
                width,
                height,
            });
        }
        for &v in &pixels {
            if !(0.0..=1.0).contains(&v) {
                return Err(ImagingError::PixelOutOfRange(v));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    /// Writes one pixel, clamping into [0, 1] to preserve the invariant.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Bilinear sample at real-valued coordinates; out-of-range coordinates
    /// clamp to the edge, so the result always lies in [0, 1].
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (x0, y0, fx, fy) = clamped_cell(x, y, self.width, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tl = self.get(x0, y0);
        let tr = self.get(x1, y0);
        let bl = self.get(x0, y1);
        let br = self.get(x1, y1);
        let top = tl + (tr - tl) * fx;
        let bot = bl + (br - bl) * fx;
        top + (bot - top) * fy
    }

    /// Rectangular copy. The rectangle must lie inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self, ImagingError> {
        if w == 0 || h == 0 {
            return Err(ImagingError::EmptyImage);
        }
        if x0 + w > self.width || y0 + h > self.height {
            return Err(ImagingError::PixelLengthMismatch {
                got: x0.max(y0),
                want: w * h,
                width: self.width,
                height: self.height,
            });
        }
        let mut out = Self::new(w, h)?;
        for y in 0..h {
            let src = (y0 + y) * self.width + x0;
            out.pixels[y * w..(y + 1) * w].copy_from_slice(&self.pixels[src..src + w]);
        }
        Ok(out)
    }
}

impl ImageRgb {
    pub fn new(width: usize, height: usize) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        Ok(Self {
            width,
            height,
            pixels: vec![0.0; width * height * 3],
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        let want = width * height * 3;
        if pixels.len() != want {
            return Err(ImagingError::PixelLengthMismatch {
                got: pixels.len(),
                want,
                width,
                height,
            });
        }
        for &v in &pixels {
            if !(0.0..=1.0).contains(&v) {
                return Err(ImagingError::PixelOutOfRange(v));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        debug_assert!(x < self.width && y < self.height);
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Writes one pixel, clamping each channel into [0, 1].
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        debug_assert!(x < self.width && y < self.height);
        let i = (y * self.width + x) * 3;
        self.pixels[i] = rgb[0].clamp(0.0, 1.0);
        self.pixels[i + 1] = rgb[1].clamp(0.0, 1.0);
        self.pixels[i + 2] = rgb[2].clamp(0.0, 1.0);
    }

    /// Luma conversion with the usual 0.299 / 0.587 / 0.114 weights.
    pub fn to_gray(&self) -> ImageGray {
        let mut pixels = Vec::with_capacity(self.width * self.height);
        for px in self.pixels.chunks_exact(3) {
            let v = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
            pixels.push(v.clamp(0.0, 1.0));
        }
        ImageGray {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

#[inline]
fn clamped_cell(x: f64, y: f64, width: usize, height: usize) -> (usize, usize, f64, f64) {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = xc.floor();
    let y0 = yc.floor();
    (x0 as usize, y0 as usize, xc - x0, yc - y0)
}

/// RGB in [0, 1] to HSV with hue in degrees [0, 360).
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max <= 0.0 { 0.0 } else { delta / max };
    [h.rem_euclid(360.0), s, max]
}

/// HSV with hue in degrees back to RGB in [0, 1].
pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        (r1 + m).clamp(0.0, 1.0),
        (g1 + m).clamp(0.0, 1.0),
        (b1 + m).clamp(0.0, 1.0),
    ]
}
