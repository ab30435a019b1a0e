//! Contrast-limited adaptive histogram equalization on grayscale images.
//!
//! The image is cut into a `tiles` x `tiles` grid. Each cell gets a 256-bin
//! histogram, clipped at `clip` times the uniform bin mass with the excess
//! spread evenly over all bins, and remapped through its inclusive CDF.
//! Output pixels bilinearly blend the CDF lookups of the (up to) four
//! nearest cell centers, which removes visible cell seams.

use super::image::ImageGray;
use super::ImagingError;

const NBINS: usize = 256;

/// Histogram-equalizes `img` adaptively. `clip` must be positive; cells must
/// come out at least 8 px on a side, otherwise the grid is rejected.
pub fn clahe(img: &ImageGray, clip: f64, tiles: usize) -> Result<ImageGray, ImagingError> {
    if !(clip > 0.0) {
        return Err(ImagingError::BadClipLimit(clip));
    }
    if tiles == 0 {
        return Err(ImagingError::ZeroTiles);
    }
    let (w, h) = (img.width(), img.height());
    if w / tiles < 8 || h / tiles < 8 {
        return Err(ImagingError::TileGridTooFine {
            tiles,
            width: w,
            height: h,
        });
    }

    let xb: Vec<usize> = (0..=tiles).map(|t| t * w / tiles).collect();
    let yb: Vec<usize> = (0..=tiles).map(|t| t * h / tiles).collect();

    let mut luts: Vec<Vec<f64>> = Vec::with_capacity(tiles * tiles);
    for ty in 0..tiles {
        for tx in 0..tiles {
            let mut hist = [0.0f64; NBINS];
            let mut count = 0usize;
            for y in yb[ty]..yb[ty + 1] {
                for x in xb[tx]..xb[tx + 1] {
                    hist[bin_of(img.get(x, y))] += 1.0;
                    count += 1;
                }
            }
            luts.push(equalize(&hist, count as f64, clip));
        }
    }

    // Cell centers in pixel coordinates, for the blend weights.
    let cx: Vec<f64> = (0..tiles)
        .map(|t| (xb[t] + xb[t + 1] - 1) as f64 / 2.0)
        .collect();
    let cy: Vec<f64> = (0..tiles)
        .map(|t| (yb[t] + yb[t + 1] - 1) as f64 / 2.0)
        .collect();

    let mut out = ImageGray::new(w, h)?;
    for y in 0..h {
        let (t0y, t1y, wy) = blend(y, &cy);
        for x in 0..w {
            let (t0x, t1x, wx) = blend(x, &cx);
            let b = bin_of(img.get(x, y));
            let v00 = luts[t0y * tiles + t0x][b];
            let v01 = luts[t0y * tiles + t1x][b];
            let v10 = luts[t1y * tiles + t0x][b];
            let v11 = luts[t1y * tiles + t1x][b];
            let top = v00 + (v01 - v00) * wx;
            let bot = v10 + (v11 - v10) * wx;
            out.set(x, y, top + (bot - top) * wy);
        }
    }
    Ok(out)
}

#[inline]
fn bin_of(v: f64) -> usize {
    ((v * NBINS as f64) as usize).min(NBINS - 1)
}

/// Clipped inclusive CDF of one cell histogram. The clip threshold is
/// `clip` times the uniform bin mass; clipped-off excess is redistributed
/// evenly, so total mass (and the final CDF value of 1) is preserved.
fn equalize(hist: &[f64; NBINS], total: f64, clip: f64) -> Vec<f64> {
    let limit = clip * total / NBINS as f64;
    let mut clipped = [0.0f64; NBINS];
    let mut excess = 0.0;
    for (i, &hv) in hist.iter().enumerate() {
        if hv > limit {
            excess += hv - limit;
            clipped[i] = limit;
        } else {
            clipped[i] = hv;
        }
    }
    let share = excess / NBINS as f64;
    let mut lut = Vec::with_capacity(NBINS);
    let mut cum = 0.0;
    for c in clipped.iter() {
        cum += c + share;
        lut.push(cum / total);
    }
    lut
}

/// Neighbor cells and the blend weight for one pixel coordinate. Outside the
/// span of cell centers the nearest cell wins outright.
fn blend(coord: usize, centers: &[f64]) -> (usize, usize, f64) {
    let c = coord as f64;
    let last = centers.len() - 1;
    if c <= centers[0] {
        return (0, 0, 0.0);
    }
    if c >= centers[last] {
        return (last, last, 0.0);
    }
    let mut t = 0;
    while t + 1 < last && centers[t + 1] <= c {
        t += 1;
    }
    let w = (c - centers[t]) / (centers[t + 1] - centers[t]);
    (t, t + 1, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ImageGray {
        let mut img = ImageGray::new(w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = gray(32, 32, |_, _| 0.4);
        let out = clahe(&img, 2.0, 2).unwrap();
        let first = out.get(0, 0);
        assert!(out.pixels().iter().all(|&v| v == first));
    }

    #[test]
    fn two_level_image_maps_levels_to_their_cdf_values() {
        // 30% of pixels at the low level: the inclusive CDF sends the low
        // level to 0.3 and the high level to 1.0. A huge clip factor keeps
        // clipping out of the picture.
        let img = gray(40, 40, |x, y| if (y * 40 + x) < 480 { 0.25 } else { 0.75 });
        let out = clahe(&img, 1e9, 1).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                let want = if (y * 40 + x) < 480 { 0.3 } else { 1.0 };
                assert!(
                    (out.get(x, y) - want).abs() < 1e-12,
                    "({x},{y}) = {} want {want}",
                    out.get(x, y)
                );
            }
        }
    }

    #[test]
    fn single_tile_matches_plain_clipped_equalization() {
        // Independent reference: histogram, clip, uniform redistribution,
        // inclusive CDF, all computed directly here.
        let img = gray(16, 16, |x, y| ((x * 7 + y * 13) % 32) as f64 / 40.0);
        let clip = 2.0;
        let out = clahe(&img, clip, 1).unwrap();

        let mut hist = vec![0.0f64; 256];
        for &v in img.pixels() {
            hist[((v * 256.0) as usize).min(255)] += 1.0;
        }
        let total = 256.0;
        let limit = clip * total / 256.0;
        let mut excess = 0.0;
        for hv in hist.iter_mut() {
            if *hv > limit {
                excess += *hv - limit;
                *hv = limit;
            }
        }
        for hv in hist.iter_mut() {
            *hv += excess / 256.0;
        }
        let mut cdf = vec![0.0f64; 256];
        let mut cum = 0.0;
        for i in 0..256 {
            cum += hist[i];
            cdf[i] = cum / total;
        }
        for y in 0..16 {
            for x in 0..16 {
                let b = ((img.get(x, y) * 256.0) as usize).min(255);
                assert!((out.get(x, y) - cdf[b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn output_stays_in_range() {
        let img = gray(64, 48, |x, y| ((x * 31 + y * 17) % 97) as f64 / 96.0);
        let out = clahe(&img, 2.0, 3).unwrap();
        assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn rejects_grid_finer_than_8px_cells() {
        let img = gray(64, 64, |_, _| 0.5);
        assert!(matches!(
            clahe(&img, 2.0, 9),
            Err(ImagingError::TileGridTooFine { .. })
        ));
        assert!(clahe(&img, 2.0, 8).is_ok());
    }

    #[test]
    fn rejects_bad_clip_and_zero_tiles() {
        let img = gray(32, 32, |_, _| 0.5);
        assert!(matches!(
            clahe(&img, 0.0, 2),
            Err(ImagingError::BadClipLimit(_))
        ));
        assert!(matches!(clahe(&img, 2.0, 0), Err(ImagingError::ZeroTiles)));
    }

    #[test]
    fn blending_is_continuous_across_cell_seams() {
        // A smooth ramp through a 2x2 grid must stay monotone in x after
        // equalization; a seam would show as a jump between adjacent columns.
        let img = gray(64, 64, |x, _| x as f64 / 63.0);
        let out = clahe(&img, 4.0, 2).unwrap();
        for x in 0..63 {
            let step = out.get(x + 1, 32) - out.get(x, 32);
            assert!(step > -1e-9, "column {x} jumps backwards by {step}");
            assert!(step < 0.15, "column {x} jumps by {step}");
        }
    }
}
