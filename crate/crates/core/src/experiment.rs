//! Dataset ingestion and the end-to-end verification experiment: grayscale
//! conversion, optional inversion, template extraction with an on-disk
//! cache, all-to-all scoring per channel, fusion and report emission.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enhance::EnhanceParams;
use crate::error::{Error, Result};
use crate::features::{
    extract_template, read_template, write_template, Channel, FeatureParams, Template,
    TEMPLATE_MAGIC,
};
use crate::fusion_eval::{
    enumerate_pairs, evaluate, fuse_scores, normalize_scores, relative_improvement,
    write_report_json, write_roc_csv, write_scores_csv, EvalReport, LabeledSample, ScoreChannel,
    ScoreRecord, ScoreSet,
};
use crate::imaging::{
    decode_image, invert, to_gray_luma, to_gray_ordinary, ColorImage, GammaParams, GrayImage,
    LoadedImage,
};
use crate::matcher::{build_cylinders, match_prepared, CylinderDescriptor, MatcherConfig};

pub const DEFAULT_PATTERN: &str = "{subject}_{finger}_{sample}";

/// A file-stem convention such as `{subject}_{finger}_{sample}`. Each of the
/// three fields must appear once; everything else is matched literally.
#[derive(Debug, Clone)]
pub struct FilenamePattern {
    source: String,
    regex: Regex,
}

impl FilenamePattern {
    pub fn new(pattern: &str) -> Result<Self> {
        let field = Regex::new(r"\{([a-z]+)\}").expect("static regex");
        let mut re = String::from("^");
        let mut last = 0;
        let mut seen = HashSet::new();
        for cap in field.captures_iter(pattern) {
            let whole = cap.get(0).expect("group 0");
            let name = &cap[1];
            if !matches!(name, "subject" | "finger" | "sample") {
                return Err(Error::Config(format!(
                    "unknown field {{{name}}} in pattern {pattern:?}"
                )));
            }
            if !seen.insert(name.to_string()) {
                return Err(Error::Config(format!(
                    "field {{{name}}} repeated in pattern {pattern:?}"
                )));
            }
            re.push_str(&regex::escape(&pattern[last..whole.start()]));
            let _ = write!(re, "(?P<{name}>.+?)");
            last = whole.end();
        }
        if seen.len() != 3 {
            return Err(Error::Config(format!(
                "pattern {pattern:?} must name {{subject}}, {{finger}} and {{sample}}"
            )));
        }
        re.push_str(&regex::escape(&pattern[last..]));
        re.push('$');
        Ok(Self {
            source: pattern.to_string(),
            regex: Regex::new(&re).map_err(|e| Error::Config(e.to_string()))?,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// `(subject, finger, sample)` of a file stem.
    pub fn parse(&self, stem: &str) -> Option<(String, String, String)> {
        let c = self.regex.captures(stem)?;
        Some((
            c["subject"].to_string(),
            c["finger"].to_string(),
            c["sample"].to_string(),
        ))
    }
}

impl Default for FilenamePattern {
    fn default() -> Self {
        Self::new(DEFAULT_PATTERN).expect("default pattern is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: String,
    pub finger: String,
    pub sample: String,
}

impl ManifestEntry {
    /// The file stem, unique within a manifest.
    pub fn id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Sorted by id.
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn labels(&self) -> Vec<LabeledSample> {
        self.entries
            .iter()
            .map(|e| LabeledSample {
                id: e.id(),
                subject: e.subject.clone(),
                finger: e.finger.clone(),
            })
            .collect()
    }

    /// Number of distinct `(subject, finger)` classes.
    pub fn class_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| (&e.subject, &e.finger))
            .collect::<HashSet<_>>()
            .len()
    }
}

/// Scans `root` (not recursively) for images named after `pattern`. Files
/// with other extensions are skipped with a warning.
pub fn ingest(root: impl AsRef<Path>, pattern: &FilenamePattern) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let dir = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::new();
    for item in dir {
        let item = item.map_err(|e| Error::io(root, e))?;
        let path = item.path();
        if !path.is_file() {
            continue;
        }
        if !crate::imaging::is_supported_extension(&path) {
            log::warn!("skipping {}: not a supported image", path.display());
            continue;
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (subject, finger, sample) = pattern.parse(&stem).ok_or_else(|| {
            Error::UnparseableName(
                path.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
            )
        })?;
        entries.push(ManifestEntry {
            path,
            subject,
            finger,
            sample,
        });
    }
    entries.sort_by_key(|e| e.id());
    let mut triples = HashSet::new();
    let mut ids = HashSet::new();
    for e in &entries {
        if !triples.insert((&e.subject, &e.finger, &e.sample)) || !ids.insert(e.id()) {
            return Err(Error::DuplicateId(format!(
                "{}_{}_{}",
                e.subject, e.finger, e.sample
            )));
        }
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grayscale {
    Ordinary,
    Luma,
}

/// Everything a run needs besides the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grayscale: Grayscale,
    /// Encoding exponent for Luma conversion.
    pub gamma: f64,
    pub channels: Vec<ScoreChannel>,
    /// Weight of the ridge channel in the fused score.
    pub fusion_weight: f64,
    pub far_targets: Vec<f64>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub pattern: String,
    pub enhance: EnhanceParams,
    pub features: FeatureParams,
    pub matcher: MatcherConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grayscale: Grayscale::Luma,
            gamma: crate::imaging::DEFAULT_GAMMA,
            channels: ScoreChannel::ALL.to_vec(),
            fusion_weight: 0.5,
            far_targets: vec![0.0001, 0.001, 0.01],
            workers: 0,
            output_dir: PathBuf::from("results"),
            pattern: DEFAULT_PATTERN.to_string(),
            enhance: EnhanceParams::default(),
            features: FeatureParams::default(),
            matcher: MatcherConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// TOML, or JSON when the file name ends in `.json`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        // Relative output directories are taken relative to the config file.
        let mut cfg = cfg;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config(
                "at least one channel must be selected".into(),
            ));
        }
        if let Some(t) = self.far_targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Config(format!("FAR target {t} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(Error::Config(format!(
                "fusion weight {} outside [0, 1]",
                self.fusion_weight
            )));
        }
        GammaParams::new(self.gamma).map_err(|e| Error::Config(e.to_string()))?;
        FilenamePattern::new(&self.pattern)?;
        self.enhance
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.matcher
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn wants(&self, c: ScoreChannel) -> bool {
        self.channels.contains(&c)
    }

    /// Template channels that must be extracted; fusion needs both.
    fn template_channels(&self) -> Vec<Channel> {
        let fused = self.wants(ScoreChannel::Fused);
        let mut out = Vec::new();
        if fused || self.wants(ScoreChannel::Ridge) {
            out.push(Channel::Ridge);
        }
        if fused || self.wants(ScoreChannel::Valley) {
            out.push(Channel::Valley);
        }
        out
    }

    /// Hash of the image bytes and of every setting that affects extraction.
    fn cache_key(&self, image: &[u8], channel: Channel) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            version: &'a str,
            format: &'a str,
            grayscale: Grayscale,
            gamma: f64,
            channel: Channel,
            enhance: &'a EnhanceParams,
            features: &'a FeatureParams,
        }
        let key = Key {
            version: env!("CARGO_PKG_VERSION"),
            format: TEMPLATE_MAGIC,
            grayscale: self.grayscale,
            gamma: self.gamma,
            channel,
            enhance: &self.enhance,
            features: &self.features,
        };
        let mut h = Sha256::new();
        h.update(image);
        h.update(serde_json::to_vec(&key).expect("key serializes"));
        hex::encode(h.finalize())
    }
}

/// Converts a decoded image with the configured grayscale rule. Gray inputs
/// are treated as colour images with equal channels.
pub fn to_gray(img: &LoadedImage, grayscale: Grayscale, gamma: f64) -> Result<GrayImage> {
    let color = match img {
        LoadedImage::Color(c) => c.clone(),
        LoadedImage::Gray(g) => {
            let d = g.data().to_vec();
            ColorImage::new(g.width(), g.height(), d.clone(), d.clone(), d)?
        }
    };
    Ok(match grayscale {
        Grayscale::Ordinary => to_gray_ordinary(&color),
        Grayscale::Luma => to_gray_luma(&color, GammaParams::new(gamma)?),
    })
}

/// The image a channel's template is extracted from.
pub fn channel_image(gray: &GrayImage, channel: Channel) -> GrayImage {
    match channel {
        Channel::Ridge => gray.clone(),
        Channel::Valley => invert(gray),
    }
}

/// Directory holding cached templates under an output directory.
pub fn cache_dir(output_dir: &Path) -> PathBuf {
    output_dir.join("templates")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub extracted: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reports: Vec<EvalReport>,
    pub score_sets: Vec<ScoreSet>,
    /// `(image id, channel, message)` for images that produced no template.
    pub failures: Vec<(String, Channel, String)>,
    pub stats: RunStats,
}

fn load_cached(path: &Path, channel: Channel, id: &str) -> Result<Template> {
    let mut t = read_template(path)?;
    if t.channel != channel {
        return Err(Error::Provenance(format!(
            "cached template {} is a {} template, expected {}",
            path.display(),
            t.channel,
            channel
        )));
    }
    t.source_id = id.to_string();
    Ok(t)
}

/// A template with its cylinders; `None` in a slot marks an unusable image.
type Prepared = (Template, Vec<CylinderDescriptor>);

enum Extracted {
    Template(Template, bool),
    Failed(String),
}

fn extract_entry(
    entry: &ManifestEntry,
    bytes: &[u8],
    channel: Channel,
    cfg: &ExperimentConfig,
) -> Result<Extracted> {
    let id = entry.id();
    let path = cache_dir(&cfg.output_dir).join(format!("{}.rvt", cfg.cache_key(bytes, channel)));
    if path.exists() {
        return Ok(Extracted::Template(load_cached(&path, channel, &id)?, true));
    }
    let attempt = || -> Result<Template> {
        let img = decode_image(bytes, &entry.path)?;
        let gray = to_gray(&img, cfg.grayscale, cfg.gamma)?;
        let input = channel_image(&gray, channel);
        let t = extract_template(&input, &cfg.enhance, &cfg.features, id.clone())?.template;
        if t.channel != channel {
            return Err(Error::Provenance(format!(
                "{id}: {channel} template built from a {} image",
                t.channel
            )));
        }
        Ok(t)
    };
    match attempt() {
        Ok(t) => {
            // Write to a private name first so a concurrent reader never
            // sees a partial file.
            let tmp = path.with_extension(format!("rvt.{}", std::process::id()));
            write_template(&t, &tmp)?;
            std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
            Ok(Extracted::Template(t, false))
        }
        Err(e) if e.is_data_error() => Ok(Extracted::Failed(e.to_string())),
        Err(e) => Err(e),
    }
}

fn score_channel(
    manifest: &DatasetManifest,
    templates: &[Option<(Template, Vec<CylinderDescriptor>)>],
    channel: ScoreChannel,
    matcher: &MatcherConfig,
) -> Result<ScoreSet> {
    let index: BTreeMap<String, usize> = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id(), i))
        .collect();
    let pairs: Vec<_> = enumerate_pairs(&manifest.labels())?.collect();
    let records = pairs
        .par_iter()
        .map(|(p, g, genuine)| {
            let outcome = match (&templates[index[p]], &templates[index[g]]) {
                (Some((tp, dp)), Some((tg, dg))) => match_prepared((tp, dp), (tg, dg), matcher),
                _ => crate::matcher::MatchOutcome::UNSCORABLE,
            };
            ScoreRecord {
                probe_id: p.clone(),
                gallery_id: g.clone(),
                genuine: *genuine,
                score: outcome.score,
                scorable: outcome.scorable,
            }
        })
        .collect();
    let mut set = ScoreSet { channel, records };
    set.sort();
    Ok(set)
}

/// Runs the configured experiment and writes templates, score files and
/// reports under `cfg.output_dir`. Templates already in the cache are
/// reused, so an interrupted run can simply be restarted.
pub fn run_experiment(
    manifest: &DatasetManifest,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if manifest.entries.len() < 2 {
        return Err(Error::Degenerate("a run needs at least two images".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_in_pool(manifest, cfg))
}

fn run_in_pool(manifest: &DatasetManifest, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let cache = cache_dir(&cfg.output_dir);
    std::fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;
    let images: Vec<Vec<u8>> = manifest
        .entries
        .par_iter()
        .map(|e| std::fs::read(&e.path).map_err(|err| Error::io(&e.path, err)))
        .collect::<Result<_>>()?;

    let mut stats = RunStats::default();
    let mut failures = Vec::new();
    let mut per_channel: BTreeMap<Channel, Vec<Option<Prepared>>> = BTreeMap::new();
    for channel in cfg.template_channels() {
        let extracted: Vec<Extracted> = manifest
            .entries
            .par_iter()
            .zip(&images)
            .map(|(e, bytes)| extract_entry(e, bytes, channel, cfg))
            .collect::<Result<_>>()?;
        let mut templates = Vec::with_capacity(extracted.len());
        for (e, x) in manifest.entries.iter().zip(extracted) {
            match x {
                Extracted::Template(t, hit) => {
                    if hit {
                        stats.cache_hits += 1;
                    } else {
                        stats.extracted += 1;
                    }
                    templates.push(Some(t));
                }
                Extracted::Failed(msg) => {
                    log::warn!("{} ({channel}): {msg}", e.id());
                    failures.push((e.id(), channel, msg));
                    templates.push(None);
                }
            }
        }
        let prepared = templates
            .into_par_iter()
            .map(|t| match t {
                Some(t) => build_cylinders(&t, &cfg.matcher).map(|d| Some((t, d))),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        per_channel.insert(channel, prepared);
    }

    let mut sets: BTreeMap<ScoreChannel, ScoreSet> = BTreeMap::new();
    for (channel, templates) in &per_channel {
        let sc = match channel {
            Channel::Ridge => ScoreChannel::Ridge,
            Channel::Valley => ScoreChannel::Valley,
        };
        sets.insert(sc, score_channel(manifest, templates, sc, &cfg.matcher)?);
    }
    if cfg.wants(ScoreChannel::Fused) {
        let fused = fuse_scores(
            &normalize_scores(&sets[&ScoreChannel::Ridge])?,
            &normalize_scores(&sets[&ScoreChannel::Valley])?,
            cfg.fusion_weight,
        )?;
        sets.insert(ScoreChannel::Fused, fused);
    }
    sets.retain(|c, _| cfg.wants(*c));

    let mut reports = Vec::new();
    for set in sets.values() {
        reports.push(evaluate(set, &cfg.far_targets)?);
        write_scores_csv(
            set,
            cfg.output_dir.join(format!("scores_{}.csv", set.channel)),
        )?;
    }
    emit_report(&reports, &cfg.output_dir)?;
    write_failures(&failures, &cfg.output_dir)?;
    Ok(ExperimentOutcome {
        reports,
        score_sets: sets.into_values().collect(),
        failures,
        stats,
    })
}

fn write_failures(failures: &[(String, Channel, String)], dir: &Path) -> Result<()> {
    let mut rows = failures.to_vec();
    rows.sort();
    let mut w = csv::Writer::from_writer(Vec::new());
    let row =
        |w: &mut csv::Writer<Vec<u8>>, r: [&str; 3]| w.write_record(r).expect("in-memory write");
    row(&mut w, ["id", "channel", "error"]);
    for (id, channel, msg) in &rows {
        row(&mut w, [id.as_str(), channel.as_str(), msg.as_str()]);
    }
    let bytes = w.into_inner().expect("in-memory flush");
    let path = dir.join("failures.csv");
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Writes `report_<channel>.json`, `roc_<channel>.csv` and `summary.csv`.
/// With a fused report next to single-channel ones, the summary gains the
/// relative EER improvement of fusion over each of them.
pub fn emit_report(reports: &[EvalReport], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if reports.is_empty() {
        return Err(Error::InvalidParameter("no reports to write".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for r in reports {
        let json = dir.join(format!("report_{}.json", r.channel));
        write_report_json(r, &json)?;
        let roc = dir.join(format!("roc_{}.csv", r.channel));
        write_roc_csv(&r.roc, &roc)?;
        written.push(json);
        written.push(roc);
    }
    let summary = dir.join("summary.csv");
    std::fs::write(&summary, summary_csv(reports)).map_err(|e| Error::io(&summary, e))?;
    written.push(summary);
    Ok(written)
}

/// The summary table as CSV text.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    let targets: Vec<String> = reports[0].gar_at_far.keys().cloned().collect();
    let fused = reports.iter().find(|r| r.channel == ScoreChannel::Fused);
    let singles: Vec<&EvalReport> = reports
        .iter()
        .filter(|r| r.channel != ScoreChannel::Fused)
        .collect();
    let compare = fused.is_some() && !singles.is_empty();

    let mut s = String::from("channel,eer");
    for t in &targets {
        let _ = write!(s, ",gar_at_far_{t}");
    }
    s.push_str(",genuine,imposter,unscorable");
    if compare {
        for r in &singles {
            let _ = write!(s, ",eer_improvement_vs_{}", r.channel);
        }
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "{},{}", r.channel, r.eer);
        for t in &targets {
            match r.gar_at_far.get(t).copied().flatten() {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push_str(",unmeasurable"),
            }
        }
        let _ = write!(
            s,
            ",{},{},{}",
            r.counts.genuine, r.counts.imposter, r.counts.unscorable
        );
        if compare {
            for single in &singles {
                s.push(',');
                if r.channel == ScoreChannel::Fused {
                    if let Some(v) = relative_improvement(single.eer, r.eer) {
                        let _ = write!(s, "{v}");
                    }
                }
            }
        }
        s.push('\n');
    }
    s
}
