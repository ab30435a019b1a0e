//! On-disk corpus layout: `img_00000.ppm ...` plus a `manifest.json` that
//! records sizes and per-image seeds. Generation is parallel but the
//! manifest and files are identical whatever the thread count.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::ImageGray;
use super::pnm::{load_pnm, save_ppm, PnmImage};
use super::synth::{generate_synthetic_image, CorpusSpec};
use super::ImagingError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub elements: usize,
    pub seed: u64,
    pub images: Vec<CorpusImageRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusImageRecord {
    pub id: u32,
    pub file: String,
    pub seed: u64,
}

/// Generates `count` synthetic images into `dir`. Image `i` uses seed
/// `seed ^ i`, so corpora with different base seeds share no images.
/// An existing non-empty directory is refused unless `force` is set.
pub fn write_corpus(
    dir: &Path,
    count: usize,
    spec: &CorpusSpec,
    seed: u64,
    force: bool,
) -> Result<CorpusManifest, ImagingError> {
    if count == 0 {
        return Err(ImagingError::BadManifest(
            "corpus image count must be at least 1".into(),
        ));
    }
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(ImagingError::CorpusDirNotEmpty(dir.display().to_string()));
        }
    }
    fs::create_dir_all(dir)?;

    let rendered: Vec<Result<(CorpusImageRecord, super::image::ImageRgb), ImagingError>> = (0
        ..count)
        .into_par_iter()
        .map(|i| {
            let img_seed = seed ^ i as u64;
            let img = generate_synthetic_image(spec, img_seed)?;
            Ok((
                CorpusImageRecord {
                    id: i as u32,
                    file: format!("img_{i:05}.ppm"),
                    seed: img_seed,
                },
                img,
            ))
        })
        .collect();

    let mut images = Vec::with_capacity(count);
    for item in rendered {
        let (record, img) = item?;
        save_ppm(&img, &dir.join(&record.file))?;
        images.push(record);
    }

    let manifest = CorpusManifest {
        version: 1,
        width: spec.width,
        height: spec.height,
        elements: spec.element_count,
        seed,
        images,
    };
    let mut doc = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ImagingError::BadManifest(e.to_string()))?;
    doc.push('\n');
    fs::write(dir.join(MANIFEST_NAME), doc)?;
    Ok(manifest)
}

/// Loads every corpus image as grayscale, in manifest order, with its id.
pub fn load_corpus_gray(dir: &Path) -> Result<Vec<(u32, ImageGray)>, ImagingError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    if !manifest_path.exists() {
        return Err(ImagingError::BadManifest(format!(
            "missing {} in {}",
            MANIFEST_NAME,
            dir.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| ImagingError::BadManifest(e.to_string()))?;
    if manifest.version != 1 {
        return Err(ImagingError::BadManifest(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    if manifest.images.is_empty() {
        return Err(ImagingError::BadManifest("manifest lists no images".into()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(manifest.images.len());
    for rec in &manifest.images {
        if !seen.insert(rec.id) {
            return Err(ImagingError::BadManifest(format!(
                "duplicate image id {}",
                rec.id
            )));
        }
        let img = match load_pnm(&dir.join(&rec.file))? {
            PnmImage::Gray(g) => g,
            PnmImage::Rgb(c) => c.to_gray(),
        };
        out.push((rec.id, img));
    }
    Ok(out)
}
