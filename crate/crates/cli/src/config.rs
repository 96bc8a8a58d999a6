//! Pipeline configuration file.
//!
//! Relative paths resolve against the directory holding the config file. All
//! randomness comes from the root `seed`; the per-section seed fields of the
//! library configs are derived from it and may not be set in the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use session_intent::corpus::SyntheticConfig;
use session_intent::embedding::TrainConfig;
use session_intent::mixture::FitConfig;
use session_intent::pipeline::CorpusParams;
use session_intent::rng::{stage_seed, Stage};
use session_intent::{Error, Result};

const DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub embeddings: PathBuf,
    pub model: PathBuf,
    pub inference: PathBuf,
    pub report_dir: PathBuf,
    /// `page,topic` table written by `generate`; enables accuracy metrics in `analyze`.
    #[serde(default)]
    pub ground_truth_pages: Option<PathBuf>,
    #[serde(default)]
    pub ground_truth_sessions: Option<PathBuf>,
    /// Text export of the trained vectors, written next to the binary file.
    #[serde(default)]
    pub embeddings_text: Option<PathBuf>,
    /// External page vectors (token + floats TSV) compared against the trained ones.
    #[serde(default)]
    pub visual_embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub min_len: usize,
    pub min_count: u64,
    pub sampling_power: f64,
    pub rewrite_table: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let p = CorpusParams::default();
        CorpusSection {
            min_len: p.min_len,
            min_count: p.min_count,
            sampling_power: p.sampling_power,
            rewrite_table: None,
        }
    }
}

impl CorpusSection {
    pub fn params(&self) -> CorpusParams {
        CorpusParams {
            min_len: self.min_len,
            min_count: self.min_count,
            sampling_power: self.sampling_power,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Seconds.
    pub bucket_width: f64,
    /// Seconds.
    pub max_gap: f64,
    /// Candidate intent counts for the BIC sweep in `fit`; empty means fit `fit.k` only.
    pub k_range: Vec<usize>,
    /// Number of most frequent pages in the similarity matrix export.
    pub similarity_pages: usize,
    /// Also train and fit a random-walk corpus of matching size for contrast.
    pub random_walk: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            bucket_width: DAY,
            max_gap: 28.0 * DAY,
            k_range: Vec::new(),
            similarity_pages: 50,
            random_walk: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn reject_section_seeds(value: &serde_json::Value) -> Result<()> {
    for section in ["synthetic", "train", "fit"] {
        if value.get(section).and_then(|s| s.get("seed")).is_some() {
            return Err(Error::Config(format!(
                "{section}.seed is derived from the root seed and cannot be set"
            )));
        }
    }
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Config(format!("invalid config: {e}"));
        let value: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        reject_section_seeds(&value)?;
        let mut cfg: PipelineConfig = serde_json::from_value(value).map_err(bad)?;
        cfg.resolve_paths(base);
        cfg.apply_seed(cfg.seed);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.corpus,
            &mut paths.vocab,
            &mut paths.embeddings,
            &mut paths.model,
            &mut paths.inference,
            &mut paths.report_dir,
        ] {
            join(p);
        }
        for p in [
            &mut paths.ground_truth_pages,
            &mut paths.ground_truth_sessions,
            &mut paths.embeddings_text,
            &mut paths.visual_embeddings,
            &mut self.corpus.rewrite_table,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    /// Sets the root seed and re-derives every stage seed from it.
    pub fn apply_seed(&mut self, root: u64) {
        self.seed = root;
        self.synthetic.seed = stage_seed(root, Stage::Generate);
        self.train.seed = stage_seed(root, Stage::Train);
        self.fit.seed = stage_seed(root, Stage::Fit);
    }

    pub fn random_walk_seed(&self) -> u64 {
        stage_seed(self.seed, Stage::RandomWalk)
    }

    /// Seed for the random-walk contrast run's training and fitting stages.
    pub fn contrast_seed(&self) -> u64 {
        stage_seed(self.seed, Stage::Analyze)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        self.fit.validate()?;
        if self.corpus.min_len == 0 {
            return Err(Error::Config("corpus.min_len must be >= 1".into()));
        }
        if !(self.corpus.sampling_power > 0.0 && self.corpus.sampling_power.is_finite()) {
            return Err(Error::Config("corpus.sampling_power must be > 0".into()));
        }
        let a = &self.analysis;
        if !(a.bucket_width > 0.0 && a.max_gap > 0.0 && a.bucket_width.is_finite() && a.max_gap.is_finite()) {
            return Err(Error::Config(
                "analysis.bucket_width and analysis.max_gap must be > 0".into(),
            ));
        }
        if a.k_range.contains(&0) {
            return Err(Error::Config("analysis.k_range entries must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fails with a config error unless every path exists.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::Config(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

/// Parses `LO..HI` into `LO, LO+1, ..., HI`. Both ends are included, so
/// `1..6` sweeps six models; `LO..=HI` is accepted as a synonym.
pub fn parse_k_range(s: &str) -> std::result::Result<KRange, String> {
    let Some((lo, hi)) = s.split_once("..") else {
        return Err(format!("expected LO..HI, got {s:?}"));
    };
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo == 0 || hi < lo {
        return Err(format!("empty or zero-based k range {s:?}"));
    }
    Ok(KRange((lo..=hi).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KRange(pub Vec<usize>);
