//! Fixed-size square patches sampled around keypoints.

use super::image::{ImageGray, Keypoint};

/// A `side` x `side` patch of grayscale values in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTensor {
    side: usize,
    values: Vec<f64>,
}

impl PatchTensor {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn from_values(side: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), side * side);
        Self { side, values }
    }
}

/// Samples the patch grid `(kp.x + j - side/2, kp.y + i - side/2)` with
/// bilinear interpolation. The grid is integer-aligned, so an integer
/// keypoint with full support reads pixels exactly. `side` must be even and
/// at least 8; callers guarantee that, so violations panic.
pub fn extract_patch(img: &ImageGray, kp: &Keypoint, side: usize) -> PatchTensor {
    assert!(side >= 8 && side % 2 == 0, "patch side {side} must be even and >= 8");
    let half = (side / 2) as f64;
    let mut values = Vec::with_capacity(side * side);
    for i in 0..side {
        let y = kp.y + i as f64 - half;
        for j in 0..side {
            let x = kp.x + j as f64 - half;
            values.push(img.sample_bilinear(x, y));
        }
    }
    PatchTensor { side, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageGray {
        let mut img = ImageGray::new(w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, ((x + w * y) % 97) as f64 / 96.0);
            }
        }
        img
    }

    #[test]
    fn integer_keypoint_copies_pixels_exactly() {
        let img = ramp(40, 40);
        let kp = Keypoint {
            x: 20.0,
            y: 17.0,
            score: 0.0,
        };
        let p = extract_patch(&img, &kp, 8);
        for i in 0..8 {
            for j in 0..8 {
                let want = img.get(20 + j - 4, 17 + i - 4);
                assert_eq!(p.values()[i * 8 + j], want);
            }
        }
    }

    #[test]
    fn half_pixel_offset_averages_neighbors() {
        let mut img = ImageGray::new(32, 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                img.set(x, y, x as f64 / 31.0);
            }
        }
        let kp = Keypoint {
            x: 16.5,
            y: 16.0,
            score: 0.0,
        };
        let p = extract_patch(&img, &kp, 8);
        // First grid point is (kp.x - 4, kp.y - 4) = (12.5, 12.0); on a
        // linear ramp bilinear reproduces the ramp value.
        let want = 12.5 / 31.0;
        assert!((p.values()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn patch_values_stay_in_range_near_borders() {
        let img = ramp(16, 16);
        let kp = Keypoint {
            x: 1.0,
            y: 1.0,
            score: 0.0,
        };
        let p = extract_patch(&img, &kp, 8);
        assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    #[should_panic]
    fn odd_patch_side_is_a_contract_violation() {
        let img = ramp(16, 16);
        let kp = Keypoint {
            x: 8.0,
            y: 8.0,
            score: 0.0,
        };
        extract_patch(&img, &kp, 9);
    }
}
