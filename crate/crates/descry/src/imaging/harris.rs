//! Harris corner detection: 3x3 Sobel gradients, a 3x3 box-summed structure
//! tensor, response `det - 0.04 * trace^2`, then greedy non-maximum
//! suppression in Chebyshev distance over responses sorted strongest first.

use super::image::{ImageGray, Keypoint};

const HARRIS_K: f64 = 0.04;
const RESPONSE_FLOOR: f64 = 1e-12;

/// Minimum distance from every image border for a returned keypoint. Chosen
/// so a 16 px patch around any keypoint, plus one bilinear neighbor, stays
/// inside the image.
pub const BORDER_MARGIN: usize = 9;

/// Detects up to `max_keypoints` corners, strongest first. Any two returned
/// keypoints are more than `nms_radius` apart in Chebyshev distance, and all
/// lie at least [`BORDER_MARGIN`] px from every border. Images too small to
/// hold the margin yield an empty list rather than an error.
pub fn detect_harris(img: &ImageGray, max_keypoints: usize, nms_radius: usize) -> Vec<Keypoint> {
    let (w, h) = (img.width(), img.height());
    if max_keypoints == 0 || w <= 2 * BORDER_MARGIN || h <= 2 * BORDER_MARGIN {
        return Vec::new();
    }

    // Sobel gradients, zero on the outermost ring.
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| {
                img.get((x as isize + dx) as usize, (y as isize + dy) as usize)
            };
            gx[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }

    // Structure tensor over a 3x3 box window, response clamped to the
    // detectable band. Candidates honor the border margin directly.
    let lo_x = BORDER_MARGIN;
    let hi_x = w - 1 - BORDER_MARGIN;
    let lo_y = BORDER_MARGIN;
    let hi_y = h - 1 - BORDER_MARGIN;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in lo_y..=hi_y {
        for x in lo_x..=hi_x {
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let i = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                    sxx += gx[i] * gx[i];
                    syy += gy[i] * gy[i];
                    sxy += gx[i] * gy[i];
                }
            }
            let det = sxx * syy - sxy * sxy;
            let trace = sxx + syy;
            let r = det - HARRIS_K * trace * trace;
            if r > RESPONSE_FLOOR {
                candidates.push((r, y, x));
            }
        }
    }

    // Strongest first; position breaks exact ties so the order is total.
    candidates.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut picked: Vec<Keypoint> = Vec::new();
    for &(r, y, x) in &candidates {
        let clear = picked.iter().all(|k| {
            let dx = (k.x - x as f64).abs();
            let dy = (k.y - y as f64).abs();
            dx.max(dy) > nms_radius as f64
        });
        if clear {
            picked.push(Keypoint {
                x: x as f64,
                y: y as f64,
                score: r,
            });
            if picked.len() == max_keypoints {
                break;
            }
        }
    }
    picked
}
