//! Synthetic corpus images: a gradient background with value noise, overlaid
//! with corner-rich elements (checkerboards, polygons, noise patches,
//! gradient rectangles). Fully determined by a `u64` seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::image::ImageRgb;
use super::ImagingError;

/// Size and density parameters for one synthetic image.
#[derive(Clone, Copy, Debug)]
pub struct CorpusSpec {
    pub width: usize,
    pub height: usize,
    /// Number of foreground elements drawn over the background.
    pub element_count: usize,
}

const MIN_SIDE: usize = 64;

#[derive(Clone, Copy)]
enum ElementKind {
    Checker,
    Polygon,
    ValueNoise,
    GradientRect,
}

/// Renders one synthetic image. Equal `(spec, seed)` pairs give bit-equal
/// pixels; different seeds give unrelated content.
pub fn generate_synthetic_image(spec: &CorpusSpec, seed: u64) -> Result<ImageRgb, ImagingError> {
    if spec.width < MIN_SIDE || spec.height < MIN_SIDE {
        return Err(ImagingError::DimensionsTooSmall {
            width: spec.width,
            height: spec.height,
        });
    }
    if spec.element_count == 0 {
        return Err(ImagingError::NoElements);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut img = ImageRgb::new(spec.width, spec.height)?;

    draw_background(&mut img, &mut rng);

    // A shuffled cycle over element kinds guarantees texture variety: any
    // image with four or more elements holds at least one checkerboard, the
    // strongest corner source.
    let mut kinds = [
        ElementKind::Checker,
        ElementKind::Polygon,
        ElementKind::ValueNoise,
        ElementKind::GradientRect,
    ];
    shuffle(&mut kinds, &mut rng);
    for e in 0..spec.element_count {
        match kinds[e % kinds.len()] {
            ElementKind::Checker => draw_checker(&mut img, &mut rng),
            ElementKind::Polygon => draw_polygon(&mut img, &mut rng),
            ElementKind::ValueNoise => draw_value_noise(&mut img, &mut rng),
            ElementKind::GradientRect => draw_gradient_rect(&mut img, &mut rng),
        }
    }
    Ok(img)
}

fn random_color(rng: &mut ChaCha12Rng) -> [f64; 3] {
    [
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..1.0),
    ]
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha12Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Linear two-color gradient along a random direction, plus a low-amplitude
/// value-noise field so flat regions still carry gradient signal.
fn draw_background(img: &mut ImageRgb, rng: &mut ChaCha12Rng) {
    let c0 = random_color(rng);
    let c1 = random_color(rng);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let w = img.width();
    let h = img.height();
    let diag = ((w * w + h * h) as f64).sqrt();

    let cell = 16usize;
    let lat = noise_lattice(w, h, cell, rng);

    for y in 0..h {
        for x in 0..w {
            let proj = (x as f64 * dx + y as f64 * dy) / diag;
            let t = (proj + 1.0) / 2.0;
            let mut px = lerp3(c0, c1, t.clamp(0.0, 1.0));
            let n = (sample_lattice(&lat, w, cell, x, y) - 0.5) * 0.08;
            for c in px.iter_mut() {
                *c += n;
            }
            img.set(x, y, px);
        }
    }
}

struct Lattice {
    cols: usize,
    values: Vec<f64>,
}

fn noise_lattice(w: usize, h: usize, cell: usize, rng: &mut ChaCha12Rng) -> Lattice {
    let cols = w / cell + 2;
    let rows = h / cell + 2;
    let mut values = Vec::with_capacity(cols * rows);
    for _ in 0..cols * rows {
        values.push(rng.random_range(0.0..1.0));
    }
    Lattice { cols, values }
}

fn sample_lattice(lat: &Lattice, _w: usize, cell: usize, x: usize, y: usize) -> f64 {
    let fx = x as f64 / cell as f64;
    let fy = y as f64 / cell as f64;
    let ix = fx.floor() as usize;
    let iy = fy.floor() as usize;
    let tx = fx - ix as f64;
    let ty = fy - iy as f64;
    let at = |cx: usize, cy: usize| lat.values[cy * lat.cols + cx];
    let top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * tx;
    let bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * tx;
    top + (bot - top) * ty
}

/// Random rectangle bounds with a minimum side, clamped inside the image.
fn random_rect(img: &ImageRgb, rng: &mut ChaCha12Rng) -> (usize, usize, usize, usize) {
    let (w, h) = (img.width(), img.height());
    let min_side = 32.min(w / 2).max(8);
    let rw = rng.random_range(min_side..=(w / 2).max(min_side));
    let rh = rng.random_range(min_side..=(h / 2).max(min_side));
    let x0 = rng.random_range(0..=w - rw);
    let y0 = rng.random_range(0..=h - rh);
    (x0, y0, rw, rh)
}

fn draw_checker(img: &mut ImageRgb, rng: &mut ChaCha12Rng) {
    let (x0, y0, rw, rh) = random_rect(img, rng);
    let cell = rng.random_range(8..=16usize);
    let c0 = random_color(rng);
    let c1 = random_color(rng);
    for y in 0..rh {
        for x in 0..rw {
            let parity = (x / cell + y / cell) % 2;
            img.set(x0 + x, y0 + y, if parity == 0 { c0 } else { c1 });
        }
    }
}

fn draw_gradient_rect(img: &mut ImageRgb, rng: &mut ChaCha12Rng) {
    let (x0, y0, rw, rh) = random_rect(img, rng);
    let c0 = random_color(rng);
    let c1 = random_color(rng);
    let horizontal = rng.random_range(0..2u32) == 0;
    for y in 0..rh {
        for x in 0..rw {
            let t = if horizontal {
                x as f64 / (rw - 1).max(1) as f64
            } else {
                y as f64 / (rh - 1).max(1) as f64
            };
            img.set(x0 + x, y0 + y, lerp3(c0, c1, t));
        }
    }
}

fn draw_value_noise(img: &mut ImageRgb, rng: &mut ChaCha12Rng) {
    let (x0, y0, rw, rh) = random_rect(img, rng);
    let cell = rng.random_range(8..=24usize);
    let c0 = random_color(rng);
    let c1 = random_color(rng);
    let lat = noise_lattice(rw, rh, cell, rng);
    for y in 0..rh {
        for x in 0..rw {
            let t = sample_lattice(&lat, rw, cell, x, y);
            img.set(x0 + x, y0 + y, lerp3(c0, c1, t));
        }
    }
}

/// Filled convex-ish polygon: vertices at sorted angles around a center,
/// radii jittered, rasterized by even-odd scanline fill.
fn draw_polygon(img: &mut ImageRgb, rng: &mut ChaCha12Rng) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let r_max = 0.18 * w.min(h);
    let r_min = 0.07 * w.min(h);
    let radius = rng.random_range(r_min..=r_max);
    let cx = rng.random_range(radius..w - radius);
    let cy = rng.random_range(radius..h - radius);
    let n = rng.random_range(3..=7usize);
    let color = random_color(rng);

    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let verts: Vec<(f64, f64)> = angles
        .iter()
        .map(|&a| {
            let r = radius * rng.random_range(0.6..=1.0);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();

    let y_lo = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let y_hi = verts
        .iter()
        .map(|v| v.1)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil()
        .min(h - 1.0) as usize;

    for y in y_lo..=y_hi {
        let yc = y as f64 + 0.5;
        let mut xs: Vec<f64> = Vec::new();
        for i in 0..verts.len() {
            let (x1, y1) = verts[i];
            let (x2, y2) = verts[(i + 1) % verts.len()];
            if (y1 <= yc && yc < y2) || (y2 <= yc && yc < y1) {
                xs.push(x1 + (yc - y1) / (y2 - y1) * (x2 - x1));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            let xa = pair[0].ceil().max(0.0) as usize;
            let xb = pair[1].floor().min(w - 1.0) as usize;
            for x in xa..=xb.min(img.width() - 1) {
                img.set(x, y, color);
            }
        }
    }
}
