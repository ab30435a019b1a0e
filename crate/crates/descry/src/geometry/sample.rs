//! Random homography sampling for pair synthesis.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::homography::Homography;

/// Ranges for the random homography components. Translation is a fraction
/// of the frame, rotation is in degrees, perspective is the raw magnitude of
/// the two bottom-row coefficients before frame normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomographyConfig {
    pub max_translation_frac: f64,
    pub max_rotation_deg: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub max_perspective: f64,
}

impl Default for HomographyConfig {
    fn default() -> Self {
        Self {
            max_translation_frac: 0.1,
            max_rotation_deg: 15.0,
            scale_lo: 0.85,
            scale_hi: 1.15,
            max_perspective: 0.1,
        }
    }
}

impl HomographyConfig {
    /// Ranges under which every sampled homography is the identity.
    pub fn identity() -> Self {
        Self {
            max_translation_frac: 0.0,
            max_rotation_deg: 0.0,
            scale_lo: 1.0,
            scale_hi: 1.0,
            max_perspective: 0.0,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.max_translation_frac >= 0.0) || !self.max_translation_frac.is_finite() {
            out.push(format!(
                "max_translation_frac must be finite and >= 0, got {}",
                self.max_translation_frac
            ));
        }
        if !(self.max_rotation_deg >= 0.0) || !self.max_rotation_deg.is_finite() {
            out.push(format!(
                "max_rotation_deg must be finite and >= 0, got {}",
                self.max_rotation_deg
            ));
        }
        if !(self.scale_lo > 0.0) || !self.scale_lo.is_finite() {
            out.push(format!("scale_lo must be positive, got {}", self.scale_lo));
        }
        if !(self.scale_hi >= self.scale_lo) || !self.scale_hi.is_finite() {
            out.push(format!(
                "scale_hi must be >= scale_lo, got [{}, {}]",
                self.scale_lo, self.scale_hi
            ));
        }
        if !(self.max_perspective >= 0.0) || !self.max_perspective.is_finite() {
            out.push(format!(
                "max_perspective must be finite and >= 0, got {}",
                self.max_perspective
            ));
        }
        out
    }
}

/// Draws one homography for a `width` x `height` frame. Composition order
/// about the frame center: translation, rotation, scale, perspective (the
/// perspective component acts first on points). Draw order is fixed, so a
/// seed fully determines the result. Identity ranges give the exact
/// identity matrix whatever the seed.
pub fn sample_homography(
    cfg: &HomographyConfig,
    width: usize,
    height: usize,
    seed: u64,
) -> Homography {
    let problems = cfg.problems();
    assert!(problems.is_empty(), "invalid homography config: {problems:?}");
    let w = width as f64;
    let h = height as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let t = cfg.max_translation_frac;
    let tx = rng.random_range(-t * w..=t * w);
    let ty = rng.random_range(-t * h..=t * h);
    let r = cfg.max_rotation_deg.to_radians();
    let theta = rng.random_range(-r..=r);
    let s = rng.random_range(cfg.scale_lo..=cfg.scale_hi);
    let q = cfg.max_perspective;
    let q1 = rng.random_range(-q..=q);
    let q2 = rng.random_range(-q..=q);

    let core = Homography::translation(tx, ty)
        .compose(&Homography::rotation(theta))
        .compose(&Homography::scale(s))
        .compose(&Homography::perspective(2.0 * q1 / w, 2.0 * q2 / h));
    let center = Homography::translation(w / 2.0, h / 2.0);
    let back = Homography::translation(-w / 2.0, -h / 2.0);
    center.compose(&core).compose(&back)
}
