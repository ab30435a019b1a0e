//! Run configuration: one strict JSON document covering corpus synthesis,
//! training, and both evaluation protocols. Flags override file values and
//! the resolved document is echoed into every log and report the commands
//! write, so an artifact always names the settings that produced it.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use descry::evaluation::RenderText;
use descry::geometry::{HomographyConfig, RansacConfig};
use descry::mining::Aggregation;
use descry::training::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must be [`CONFIG_VERSION`]. No default: a config file has to say
    /// which schema it was written against.
    pub version: u32,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub matching: MatchingSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            corpus: CorpusSection::default(),
            train: TrainConfig::default(),
            matching: MatchingSection::default(),
            retrieval: RetrievalSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub elements: usize,
    pub seed: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            count: 64,
            width: 256,
            height: 256,
            elements: 24,
            seed: 0,
        }
    }
}

impl CorpusSection {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.count < 1 {
            out.push(format!("corpus.count must be at least 1, got {}", self.count));
        }
        if self.width < 64 || self.height < 64 {
            out.push(format!(
                "corpus images must be at least 64x64, got {}x{}",
                self.width, self.height
            ));
        }
        if self.elements < 1 {
            out.push(format!(
                "corpus.elements must be at least 1, got {}",
                self.elements
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchingSection {
    pub pairs: usize,
    pub seed: u64,
    pub crop_size: usize,
    pub detect_max: usize,
    pub nms_radius: usize,
    /// Reprojection distance counting a match as correct for precision,
    /// recall, and the homography rate.
    pub pixel_thresh: f64,
    /// Inclusive MMA threshold range in pixels, `[lo, hi]`.
    pub thresholds: (usize, usize),
    pub oracle: bool,
    pub homography: HomographyConfig,
    pub ransac: RansacConfig,
}

impl Default for MatchingSection {
    fn default() -> Self {
        Self {
            pairs: 20,
            seed: 0,
            crop_size: 128,
            detect_max: 128,
            nms_radius: 4,
            pixel_thresh: 3.0,
            thresholds: (1, 10),
            oracle: false,
            homography: HomographyConfig::default(),
            ransac: RansacConfig::default(),
        }
    }
}

impl MatchingSection {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pairs < 1 {
            out.push(format!("matching.pairs must be at least 1, got {}", self.pairs));
        }
        if self.crop_size < 32 {
            out.push(format!(
                "matching.crop_size must be at least 32, got {}",
                self.crop_size
            ));
        }
        if self.detect_max < 4 {
            out.push(format!(
                "matching.detect_max must be at least 4, got {}",
                self.detect_max
            ));
        }
        if !(self.pixel_thresh > 0.0) || !self.pixel_thresh.is_finite() {
            out.push(format!(
                "matching.pixel_thresh must be positive and finite, got {}",
                self.pixel_thresh
            ));
        }
        if self.thresholds.0 < 1 || self.thresholds.0 > self.thresholds.1 {
            out.push(format!(
                "matching.thresholds must be an inclusive range of positive pixels, got {}..{}",
                self.thresholds.0, self.thresholds.1
            ));
        }
        out.extend(
            self.homography
                .problems()
                .into_iter()
                .map(|p| format!("matching.homography: {p}")),
        );
        out
    }

    pub fn threshold_list(&self) -> Vec<usize> {
        (self.thresholds.0..=self.thresholds.1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub scenes: usize,
    pub views: usize,
    pub seed: u64,
    pub crop_size: usize,
    pub keypoints_per_view: usize,
    /// Candidates re-ranked by inliers; clamped to the database size.
    pub rerank_depth: usize,
    pub aggregation: Aggregation,
    pub homography: HomographyConfig,
    pub ransac: RansacConfig,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            scenes: 8,
            views: 4,
            seed: 0,
            crop_size: 128,
            keypoints_per_view: 32,
            rerank_depth: 100,
            aggregation: Aggregation::SumRenorm,
            homography: HomographyConfig::default(),
            ransac: RansacConfig::default(),
        }
    }
}

/// Where artifacts live. Flags override these; commands that need a path
/// with neither a flag nor a config entry fail validation by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Report prefix; commands write `<out>.json` and `<out>.txt`.
    pub out: Option<PathBuf>,
}

/// Wraps a report so the serialized artifact carries the settings that
/// produced it under a trailing `config` key, and the text rendering gains
/// a final `config` line.
#[derive(Serialize)]
pub struct WithConfig<'a, R: Serialize> {
    #[serde(flatten)]
    pub report: &'a R,
    pub config: &'a RunConfig,
}

impl<R: Serialize + RenderText> RenderText for WithConfig<'_, R> {
    fn render_text(&self) -> String {
        let mut text = self.report.render_text();
        let config = serde_json::to_string(self.config).expect("config serializes");
        text.push_str("config  ");
        text.push_str(&config);
        text.push('\n');
        text
    }
}

/// Parses `WxH` into `(width, height)`.
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str, name: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("{name} in {s:?} is not a whole number"))
    };
    Ok((parse(w, "width")?, parse(h, "height")?))
}

/// Parses `lo..hi` as an inclusive integer range.
pub fn parse_threshold_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
    let parse = |v: &str, name: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("{name} bound in {s:?} is not a whole number"))
    };
    let (lo, hi) = (parse(lo, "lower")?, parse(hi, "upper")?);
    if lo < 1 || lo > hi {
        return Err(format!("range must satisfy 1 <= lo <= hi, got {lo}..{hi}"));
    }
    Ok((lo, hi))
}
