//! Photometric augmentation. One parameter struct drives both the RGB and
//! the grayscale pipeline; stages run in a fixed order (brightness,
//! contrast, hue, saturation, blur, noise, adaptive equalization) and every
//! stage at its identity value is skipped outright, so identity parameters
//! return a bit-equal copy of the input.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::clahe::clahe;
use super::image::{hsv_to_rgb, rgb_to_hsv, ImageGray, ImageRgb};
use super::ImagingError;

/// Parameters for one augmentation draw. `seed` feeds the noise stage only;
/// everything else is deterministic in the field values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Added to every channel. Identity at 0.
    pub brightness_delta: f64,
    /// Scales the distance from mid-gray. Identity at 1.
    pub contrast_factor: f64,
    /// Hue rotation in degrees; ignored by the grayscale pipeline. Identity at 0.
    pub hue_delta_deg: f64,
    /// Saturation scale; ignored by the grayscale pipeline. Identity at 1.
    pub saturation_factor: f64,
    /// Gaussian blur sigma in pixels. Identity at 0.
    pub blur_sigma: f64,
    /// Additive Gaussian noise sigma. Identity at 0.
    pub noise_sigma: f64,
    /// Whether the adaptive-equalization stage runs at all.
    pub clahe_enabled: bool,
    pub clahe_clip: f64,
    pub clahe_tiles: usize,
    /// Seed of the noise stream.
    pub seed: u64,
}

impl AugmentParams {
    /// Parameters under which both pipelines return the input unchanged.
    pub fn identity() -> Self {
        Self {
            brightness_delta: 0.0,
            contrast_factor: 1.0,
            hue_delta_deg: 0.0,
            saturation_factor: 1.0,
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            clahe_enabled: false,
            clahe_clip: 2.0,
            clahe_tiles: 4,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), ImagingError> {
        if !self.brightness_delta.is_finite() || self.brightness_delta.abs() > 1.0 {
            return Err(ImagingError::BadAugmentParam {
                name: "brightness_delta",
                value: self.brightness_delta,
            });
        }
        if !(self.contrast_factor > 0.0) || !self.contrast_factor.is_finite() {
            return Err(ImagingError::BadAugmentParam {
                name: "contrast_factor",
                value: self.contrast_factor,
            });
        }
        if !self.hue_delta_deg.is_finite() {
            return Err(ImagingError::BadAugmentParam {
                name: "hue_delta_deg",
                value: self.hue_delta_deg,
            });
        }
        if !(self.saturation_factor >= 0.0) || !self.saturation_factor.is_finite() {
            return Err(ImagingError::BadAugmentParam {
                name: "saturation_factor",
                value: self.saturation_factor,
            });
        }
        if !(self.blur_sigma >= 0.0) || !self.blur_sigma.is_finite() {
            return Err(ImagingError::BadAugmentParam {
                name: "blur_sigma",
                value: self.blur_sigma,
            });
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(ImagingError::BadAugmentParam {
                name: "noise_sigma",
                value: self.noise_sigma,
            });
        }
        Ok(())
    }
}

// Training-time sampling ranges.
const BRIGHTNESS_MAX: f64 = 0.2;
const CONTRAST_LO: f64 = 0.7;
const CONTRAST_HI: f64 = 1.3;
const HUE_MAX_DEG: f64 = 20.0;
const SAT_LO: f64 = 0.7;
const SAT_HI: f64 = 1.3;
const BLUR_SIGMA_MAX: f64 = 1.5;
const NOISE_SIGMA_MAX: f64 = 0.04;
const CLAHE_PROB: f64 = 0.3;
const CLAHE_CLIP: f64 = 2.0;
const CLAHE_TILES: usize = 4;

/// Draws augmentation parameters from the training ranges. The draw order is
/// fixed (brightness, contrast, hue, saturation, blur, noise, equalization
/// coin), so a given RNG state always yields the same parameters.
pub fn sample_augment_params(rng: &mut ChaCha12Rng, noise_seed: u64) -> AugmentParams {
    let brightness_delta = rng.random_range(-BRIGHTNESS_MAX..=BRIGHTNESS_MAX);
    let contrast_factor = rng.random_range(CONTRAST_LO..=CONTRAST_HI);
    let hue_delta_deg = rng.random_range(-HUE_MAX_DEG..=HUE_MAX_DEG);
    let saturation_factor = rng.random_range(SAT_LO..=SAT_HI);
    let blur_sigma = rng.random_range(0.0..=BLUR_SIGMA_MAX);
    let noise_sigma = rng.random_range(0.0..=NOISE_SIGMA_MAX);
    let clahe_enabled = rng.random_range(0.0..1.0) < CLAHE_PROB;
    AugmentParams {
        brightness_delta,
        contrast_factor,
        hue_delta_deg,
        saturation_factor,
        blur_sigma,
        noise_sigma,
        clahe_enabled,
        clahe_clip: CLAHE_CLIP,
        clahe_tiles: CLAHE_TILES,
        seed: noise_seed,
    }
}

/// Full color pipeline. Stages at identity are skipped, so
/// `augment_color(img, AugmentParams::identity())` is a bit-equal copy.
pub fn augment_color(img: &ImageRgb, p: &AugmentParams) -> Result<ImageRgb, ImagingError> {
    p.validate()?;
    let mut out = img.clone();
    let (w, h) = (out.width(), out.height());

    if p.brightness_delta != 0.0 {
        let mut next = ImageRgb::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                let [r, g, b] = out.get(x, y);
                next.set(
                    x,
                    y,
                    [
                        r + p.brightness_delta,
                        g + p.brightness_delta,
                        b + p.brightness_delta,
                    ],
                );
            }
        }
        out = next;
    }

    if p.contrast_factor != 1.0 {
        let mut next = ImageRgb::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                let px = out.get(x, y);
                next.set(x, y, px.map(|v| (v - 0.5) * p.contrast_factor + 0.5));
            }
        }
        out = next;
    }

    if p.hue_delta_deg != 0.0 || p.saturation_factor != 1.0 {
        let mut next = ImageRgb::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                let [hh, s, v] = rgb_to_hsv(out.get(x, y));
                let hsv = [
                    hh + p.hue_delta_deg,
                    (s * p.saturation_factor).clamp(0.0, 1.0),
                    v,
                ];
                next.set(x, y, hsv_to_rgb(hsv));
            }
        }
        out = next;
    }

    if p.blur_sigma > 0.0 {
        out = blur_rgb(&out, p.blur_sigma)?;
    }

    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(p.seed);
        let mut next = ImageRgb::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                let px = out.get(x, y);
                let noisy = [
                    px[0] + p.noise_sigma * gaussian(&mut rng),
                    px[1] + p.noise_sigma * gaussian(&mut rng),
                    px[2] + p.noise_sigma * gaussian(&mut rng),
                ];
                next.set(x, y, noisy);
            }
        }
        out = next;
    }

    if p.clahe_enabled {
        // Equalize brightness only: run on the HSV value channel, keep hue
        // and saturation.
        let mut vchan = ImageGray::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                vchan.set(x, y, rgb_to_hsv(out.get(x, y))[2]);
            }
        }
        let veq = clahe(&vchan, p.clahe_clip, p.clahe_tiles)?;
        let mut next = ImageRgb::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                let [hh, s, _] = rgb_to_hsv(out.get(x, y));
                next.set(x, y, hsv_to_rgb([hh, s, veq.get(x, y)]));
            }
        }
        out = next;
    }

    Ok(out)
}

/// Grayscale pipeline: same stages and stage order minus hue and saturation,
/// which have no grayscale meaning and are ignored.
pub fn augment_gray(img: &ImageGray, p: &AugmentParams) -> Result<ImageGray, ImagingError> {
    p.validate()?;
    let mut out = img.clone();
    let (w, h) = (out.width(), out.height());

    if p.brightness_delta != 0.0 {
        let mut next = ImageGray::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                next.set(x, y, out.get(x, y) + p.brightness_delta);
            }
        }
        out = next;
    }

    if p.contrast_factor != 1.0 {
        let mut next = ImageGray::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                next.set(x, y, (out.get(x, y) - 0.5) * p.contrast_factor + 0.5);
            }
        }
        out = next;
    }

    if p.blur_sigma > 0.0 {
        let blurred = blur_channel(out.pixels(), w, h, p.blur_sigma);
        let mut next = ImageGray::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                next.set(x, y, blurred[y * w + x]);
            }
        }
        out = next;
    }

    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(p.seed);
        let mut next = ImageGray::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                next.set(x, y, out.get(x, y) + p.noise_sigma * gaussian(&mut rng));
            }
        }
        out = next;
    }

    if p.clahe_enabled {
        out = clahe(&out, p.clahe_clip, p.clahe_tiles)?;
    }

    Ok(out)
}

/// Standard normal via Box-Muller. Uses two uniforms per call; no state is
/// carried between calls, so the stream is a pure function of the RNG state.
fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        k.push((-d * d / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with edge clamp on one channel buffer.
fn blur_channel(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let radius = k.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let sx = (x + i).saturating_sub(radius).min(w - 1);
                acc += kv * src[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut dst = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let sy = (y + i).saturating_sub(radius).min(h - 1);
                acc += kv * tmp[sy * w + x];
            }
            dst[y * w + x] = acc;
        }
    }
    dst
}

fn blur_rgb(img: &ImageRgb, sigma: f64) -> Result<ImageRgb, ImagingError> {
    let (w, h) = (img.width(), img.height());
    let mut chans = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for y in 0..h {
        for x in 0..w {
            let px = img.get(x, y);
            for c in 0..3 {
                chans[c][y * w + x] = px[c];
            }
        }
    }
    let blurred: Vec<Vec<f64>> = chans
        .iter()
        .map(|c| blur_channel(c, w, h, sigma))
        .collect();
    let mut out = ImageRgb::new(w, h)?;
    for y in 0..h {
        for x in 0..w {
            out.set(
                x,
                y,
                [
                    blurred[0][y * w + x],
                    blurred[1][y * w + x],
                    blurred[2][y * w + x],
                ],
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::synth::{generate_synthetic_image, CorpusSpec};

    fn test_rgb() -> ImageRgb {
        let spec = CorpusSpec {
            width: 64,
            height: 64,
            element_count: 4,
        };
        generate_synthetic_image(&spec, 5).unwrap()
    }

    #[test]
    fn identity_params_return_bit_equal_copy() {
        let img = test_rgb();
        let out = augment_color(&img, &AugmentParams::identity()).unwrap();
        assert_eq!(img.pixels(), out.pixels());

        let g = img.to_gray();
        let gout = augment_gray(&g, &AugmentParams::identity()).unwrap();
        assert_eq!(g.pixels(), gout.pixels());
    }

    #[test]
    fn same_params_same_output() {
        let img = test_rgb();
        let mut p = AugmentParams::identity();
        p.brightness_delta = 0.1;
        p.blur_sigma = 0.8;
        p.noise_sigma = 0.02;
        p.seed = 99;
        let a = augment_color(&img, &p).unwrap();
        let b = augment_color(&img, &p).unwrap();
        assert_eq!(a.pixels(), b.pixels());
    }

    #[test]
    fn noise_seed_changes_output() {
        let img = test_rgb();
        let mut p = AugmentParams::identity();
        p.noise_sigma = 0.02;
        p.seed = 1;
        let a = augment_color(&img, &p).unwrap();
        p.seed = 2;
        let b = augment_color(&img, &p).unwrap();
        assert_ne!(a.pixels(), b.pixels());
    }

    #[test]
    fn brightness_shifts_channels() {
        let mut img = ImageRgb::new(8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                img.set(x, y, [0.3, 0.4, 0.5]);
            }
        }
        let mut p = AugmentParams::identity();
        p.brightness_delta = 0.2;
        let out = augment_color(&img, &p).unwrap();
        let px = out.get(3, 3);
        assert!((px[0] - 0.5).abs() < 1e-15);
        assert!((px[1] - 0.6).abs() < 1e-15);
        assert!((px[2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn contrast_pivots_on_mid_gray() {
        let mut img = ImageGray::new(8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                img.set(x, y, 0.5);
            }
        }
        let mut p = AugmentParams::identity();
        p.contrast_factor = 1.3;
        let out = augment_gray(&img, &p).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn blur_preserves_constant_images() {
        let mut img = ImageGray::new(16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, 0.7);
            }
        }
        let mut p = AugmentParams::identity();
        p.blur_sigma = 1.2;
        let out = augment_gray(&img, &p).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn blur_shrinks_variance() {
        let img = test_rgb().to_gray();
        let mut p = AugmentParams::identity();
        p.blur_sigma = 1.5;
        let out = augment_gray(&img, &p).unwrap();
        let var = |im: &ImageGray| {
            let m = im.pixels().iter().sum::<f64>() / im.pixels().len() as f64;
            im.pixels().iter().map(|v| (v - m) * (v - m)).sum::<f64>()
        };
        assert!(var(&out) < var(&img));
    }

    #[test]
    fn gray_pipeline_ignores_hue_and_saturation() {
        let img = test_rgb().to_gray();
        let mut p = AugmentParams::identity();
        p.hue_delta_deg = 15.0;
        p.saturation_factor = 1.2;
        let out = augment_gray(&img, &p).unwrap();
        assert_eq!(img.pixels(), out.pixels());
    }

    #[test]
    fn hue_rotation_changes_color_not_value() {
        let mut img = ImageRgb::new(8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                img.set(x, y, [0.8, 0.2, 0.2]);
            }
        }
        let mut p = AugmentParams::identity();
        p.hue_delta_deg = 120.0;
        let out = augment_color(&img, &p).unwrap();
        let px = out.get(0, 0);
        // 120 degrees sends red toward green; value (max channel) is kept.
        assert!((px[1] - 0.8).abs() < 1e-12, "{px:?}");
        assert!((rgb_to_hsv(px)[2] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_contrast() {
        let img = test_rgb();
        let mut p = AugmentParams::identity();
        p.contrast_factor = 0.0;
        assert!(matches!(
            augment_color(&img, &p),
            Err(ImagingError::BadAugmentParam { name: "contrast_factor", .. })
        ));
    }

    #[test]
    fn sampled_params_stay_in_range() {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for i in 0..200 {
            let p = sample_augment_params(&mut rng, i);
            assert!(p.brightness_delta.abs() <= 0.2);
            assert!((0.7..=1.3).contains(&p.contrast_factor));
            assert!(p.hue_delta_deg.abs() <= 20.0);
            assert!((0.7..=1.3).contains(&p.saturation_factor));
            assert!((0.0..=1.5).contains(&p.blur_sigma));
            assert!((0.0..=0.04).contains(&p.noise_sigma));
            assert!(p.validate().is_ok());
        }
    }
}
