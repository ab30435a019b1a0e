//! Crop pairs related by a known homography, and keypoint reprojection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::imaging::{ImageGray, Keypoint};
use crate::seeds::derive_seed;

use super::homography::Homography;
use super::sample::{sample_homography, HomographyConfig};
use super::GeometryError;

/// Two square crops of one source image. `positive[x] = anchor[h_ap^-1(x)]`
/// up to resampling, so `h_ap` maps anchor coordinates to positive
/// coordinates exactly.
#[derive(Clone, Debug)]
pub struct CropPair {
    pub anchor: ImageGray,
    pub positive: ImageGray,
    pub h_ap: Homography,
    pub source_image_id: u32,
}

/// One anchor-to-positive point pair, both in crop pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub a: (f64, f64),
    pub p: (f64, f64),
}

/// Ordered correspondences; order follows whatever produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    items: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Correspondence> {
        self.items.iter()
    }

    pub fn items(&self) -> &[Correspondence] {
        &self.items
    }
}

/// Cuts an anchor crop and a homography-warped positive crop out of `img`.
///
/// The homography is sampled in crop coordinates, then an integer crop
/// offset is drawn uniformly among all positions where both the anchor and
/// every bilinear sample of the positive stay inside the source image. A
/// source too small for any valid offset fails with `ImageTooSmall`.
pub fn make_pair(
    img: &ImageGray,
    image_id: u32,
    cfg: &HomographyConfig,
    crop_size: usize,
    seed: u64,
) -> Result<CropPair, GeometryError> {
    let (iw, ih) = (img.width(), img.height());
    if crop_size < 16 || crop_size > iw.min(ih) {
        return Err(GeometryError::ImageTooSmall {
            width: iw,
            height: ih,
            crop: crop_size,
        });
    }
    let h = sample_homography(cfg, crop_size, crop_size, derive_seed(seed, 1));
    let hinv = h.inverse()?;

    // Pre-image of the crop square under h; projective maps keep lines
    // straight, so the four corners bound it.
    let c = (crop_size - 1) as f64;
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (x, y) in [(0.0, 0.0), (c, 0.0), (c, c), (0.0, c)] {
        let (px, py) = hinv.apply(x, y)?;
        min_x = min_x.min(px);
        max_x = max_x.max(px);
        min_y = min_y.min(py);
        max_y = max_y.max(py);
    }

    let lo_x = 0f64.max(-min_x).ceil() as i64;
    let hi_x = ((iw - crop_size) as f64).min((iw - 1) as f64 - max_x).floor() as i64;
    let lo_y = 0f64.max(-min_y).ceil() as i64;
    let hi_y = ((ih - crop_size) as f64).min((ih - 1) as f64 - max_y).floor() as i64;
    if lo_x > hi_x || lo_y > hi_y {
        return Err(GeometryError::ImageTooSmall {
            width: iw,
            height: ih,
            crop: crop_size,
        });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 2));
    let ox = rng.random_range(lo_x..=hi_x) as usize;
    let oy = rng.random_range(lo_y..=hi_y) as usize;

    let anchor = img
        .crop(ox, oy, crop_size, crop_size)
        .expect("offset range keeps the anchor inside the image");

    let mut positive = ImageGray::new(crop_size, crop_size)
        .expect("crop size is nonzero");
    for y in 0..crop_size {
        for x in 0..crop_size {
            let (sx, sy) = hinv.apply(x as f64, y as f64)?;
            positive.set(x, y, img.sample_bilinear(sx + ox as f64, sy + oy as f64));
        }
    }

    Ok(CropPair {
        anchor,
        positive,
        h_ap: h,
        source_image_id: image_id,
    })
}

/// Maps keypoints through `h` and keeps those whose image lands at least
/// `margin` px inside the `width` x `height` frame. Output order follows
/// input order; each surviving keypoint produces one correspondence.
pub fn reproject_keypoints(
    kps: &[Keypoint],
    h: &Homography,
    width: usize,
    height: usize,
    margin: usize,
) -> CorrespondenceSet {
    let lo = margin as f64;
    let hi_x = (width - 1 - margin) as f64;
    let hi_y = (height - 1 - margin) as f64;
    let mut items = Vec::new();
    for kp in kps {
        if let Ok((px, py)) = h.apply(kp.x, kp.y) {
            if px >= lo && px <= hi_x && py >= lo && py <= hi_y {
                items.push(Correspondence {
                    a: (kp.x, kp.y),
                    p: (px, py),
                });
            }
        }
    }
    CorrespondenceSet::new(items)
}
