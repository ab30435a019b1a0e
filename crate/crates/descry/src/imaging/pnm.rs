//! Binary PNM input/output: P5 (grayscale) and P6 (RGB), maxval 255 only.
//!
//! Writes are canonical (`P5\n<w> <h>\n255\n` + payload), so equal images
//! produce byte-equal files. Reads accept any legal whitespace/comment
//! layout in the header.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::image::{ImageGray, ImageRgb};
use super::ImagingError;

/// A decoded PNM file: P5 becomes grayscale, P6 becomes RGB.
#[derive(Clone, Debug)]
pub enum PnmImage {
    Gray(ImageGray),
    Rgb(ImageRgb),
}

/// Quantizes to 8 bits by round-to-nearest after clamping.
#[inline]
fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `img` as a binary P5 file.
pub fn save_pgm(img: &ImageGray, path: &Path) -> Result<(), ImagingError> {
    let mut out = Vec::with_capacity(32 + img.pixels().len());
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(img.pixels().iter().map(|&v| to_byte(v)));
    fs::write(path, out)?;
    Ok(())
}

/// Writes `img` as a binary P6 file.
pub fn save_ppm(img: &ImageRgb, path: &Path) -> Result<(), ImagingError> {
    let mut out = Vec::with_capacity(32 + img.pixels().len());
    write!(out, "P6\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(img.pixels().iter().map(|&v| to_byte(v)));
    fs::write(path, out)?;
    Ok(())
}

/// Loads a binary P5 or P6 file. Pixel bytes map to `byte / 255.0`.
pub fn load_pnm(path: &Path) -> Result<PnmImage, ImagingError> {
    let data = fs::read(path)?;
    let mut cur = Cursor { data: &data, pos: 0 };

    let magic = cur.token()?;
    let channels = match magic.as_str() {
        "P5" => 1usize,
        "P6" => 3usize,
        _ => return Err(ImagingError::PnmBadMagic(magic)),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImagingError::PnmBadMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(ImagingError::PnmBadHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    // Exactly one whitespace byte separates the header from the payload.
    cur.single_whitespace()?;

    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImagingError::PnmBadHeader("dimensions overflow".into()))?;
    let found = data.len() - cur.pos;
    if found < expected {
        return Err(ImagingError::PnmTruncated { expected, found });
    }
    let payload = &data[cur.pos..cur.pos + expected];
    let pixels: Vec<f64> = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(match channels {
        1 => PnmImage::Gray(ImageGray::from_pixels(width, height, pixels)?),
        _ => PnmImage::Rgb(ImageRgb::from_pixels(width, height, pixels)?),
    })
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments, then reads one token.
    fn token(&mut self) -> Result<String, ImagingError> {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImagingError::PnmBadHeader("unexpected end of header".into()));
        }
        String::from_utf8(self.data[start..self.pos].to_vec())
            .map_err(|_| ImagingError::PnmBadHeader("non-ASCII header token".into()))
    }

    fn number(&mut self, what: &str) -> Result<u64, ImagingError> {
        let tok = self.token()?;
        tok.parse::<u64>()
            .map_err(|_| ImagingError::PnmBadHeader(format!("bad {what} {tok:?}")))
    }

    fn single_whitespace(&mut self) -> Result<(), ImagingError> {
        if self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(ImagingError::PnmBadHeader(
                "maxval not followed by a whitespace byte".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn gray_round_trip_is_exact_on_quantized_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let mut img = ImageGray::new(9, 5).unwrap();
        for y in 0..5 {
            for x in 0..9 {
                img.set(x, y, ((x * 5 + y * 31) % 256) as f64 / 255.0);
            }
        }
        save_pgm(&img, &path).unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Gray(back) => assert_eq!(back.pixels(), img.pixels()),
            _ => panic!("expected grayscale"),
        }
    }

    #[test]
    fn rgb_round_trip_is_exact_on_quantized_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let mut img = ImageRgb::new(6, 4).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                img.set(
                    x,
                    y,
                    [
                        (x as f64 * 40.0) / 255.0,
                        (y as f64 * 60.0) / 255.0,
                        ((x + y) as f64 * 20.0) / 255.0,
                    ],
                );
            }
        }
        save_ppm(&img, &path).unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Rgb(back) => assert_eq!(back.pixels(), img.pixels()),
            _ => panic!("expected RGB"),
        }
    }

    #[test]
    fn writes_are_byte_stable() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("1.pgm");
        let p2 = dir.path().join("2.pgm");
        let mut img = ImageGray::new(4, 4).unwrap();
        img.set(2, 2, 0.5);
        save_pgm(&img, &p1).unwrap();
        save_pgm(&img, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# a comment\n2 1\n# another\n255\n".to_vec();
        bytes.extend([10u8, 200u8]);
        std::fs::write(&path, bytes).unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Gray(img) => {
                assert_eq!(img.width(), 2);
                assert!((img.get(0, 0) - 10.0 / 255.0).abs() < 1e-15);
            }
            _ => panic!("expected grayscale"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pnm");
        std::fs::write(&path, b"P3\n1 1\n255\n0 0 0\n").unwrap();
        assert!(matches!(
            load_pnm(&path),
            Err(ImagingError::PnmBadMagic(m)) if m == "P3"
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\n\x00\x01").unwrap();
        assert!(matches!(
            load_pnm(&path),
            Err(ImagingError::PnmTruncated {
                expected: 16,
                found: 2
            })
        ));
    }

    #[test]
    fn wrong_maxval_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(
            load_pnm(&path),
            Err(ImagingError::PnmBadMaxval(65535))
        ));
    }

    #[test]
    fn garbage_header_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\nfoo 1\n255\n\x00").unwrap();
        assert!(matches!(load_pnm(&path), Err(ImagingError::PnmBadHeader(_))));
    }
}
