//! Verification metrics over all-to-all score sets, and score-level fusion
//! of the ridge and valley channels.
//!
//! Conventions: a pair is accepted when `score >= threshold`; the EER is
//! linearly interpolated where `FAR - FRR` changes sign; GAR at a FAR
//! target is read off the step function without interpolation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The convention strings written into every report.
pub const CONVENTIONS: [&str; 5] = [
    "accept when score >= threshold; thresholds are +inf followed by the distinct scores in decreasing order",
    "EER by linear interpolation between the adjacent operating points where FAR - FRR changes sign",
    "GAR at FAR target: lowest-threshold operating point with FAR <= target (step function, no interpolation)",
    "unscorable pairs are kept with score 0 and count as rejections",
    "fused score = w * ridge + (1 - w) * valley after min-max normalization of each channel",
];

/// Which template channel produced a score set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreChannel {
    Ridge,
    Valley,
    Fused,
}

impl ScoreChannel {
    pub const ALL: [ScoreChannel; 3] = [
        ScoreChannel::Ridge,
        ScoreChannel::Valley,
        ScoreChannel::Fused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreChannel::Ridge => "ridge",
            ScoreChannel::Valley => "valley",
            ScoreChannel::Fused => "fused",
        }
    }
}

impl fmt::Display for ScoreChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(ScoreChannel::Ridge),
            "valley" => Ok(ScoreChannel::Valley),
            "fused" => Ok(ScoreChannel::Fused),
            other => Err(Error::InvalidParameter(format!(
                "unknown channel {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub probe_id: String,
    pub gallery_id: String,
    pub genuine: bool,
    pub score: f64,
    /// False when the matcher could not score the pair; `score` is then 0.
    pub scorable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub channel: ScoreChannel,
    pub records: Vec<ScoreRecord>,
}

impl ScoreSet {
    /// Sorts by `(probe_id, gallery_id)`, the order every writer uses.
    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            a.probe_id
                .cmp(&b.probe_id)
                .then_with(|| a.gallery_id.cmp(&b.gallery_id))
        });
    }

    pub fn counts(&self) -> Counts {
        let genuine = self.records.iter().filter(|r| r.genuine).count();
        Counts {
            genuine,
            imposter: self.records.len() - genuine,
            unscorable: self.records.iter().filter(|r| !r.scorable).count(),
        }
    }
}

/// One identifier with its class label. Two samples are genuine mates when
/// subject and finger agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub id: String,
    pub subject: String,
    pub finger: String,
}

/// All unordered pairs of a labeled sample list, produced lazily.
#[derive(Debug, Clone)]
pub struct Pairs {
    samples: Vec<LabeledSample>,
    class: Vec<usize>,
    i: usize,
    j: usize,
    genuine: u64,
    imposter: u64,
}

impl Pairs {
    pub fn genuine_count(&self) -> u64 {
        self.genuine
    }

    pub fn imposter_count(&self) -> u64 {
        self.imposter
    }

    pub fn total(&self) -> u64 {
        self.genuine + self.imposter
    }
}

/// `(probe_id, gallery_id, genuine)`; `probe_id < gallery_id`.
pub type Pair = (String, String, bool);

impl Iterator for Pairs {
    type Item = Pair;

    fn next(&mut self) -> Option<Pair> {
        let n = self.samples.len();
        if self.j >= n {
            self.i += 1;
            self.j = self.i + 1;
        }
        if self.j >= n {
            return None;
        }
        let (i, j) = (self.i, self.j);
        self.j += 1;
        Some((
            self.samples[i].id.clone(),
            self.samples[j].id.clone(),
            self.class[i] == self.class[j],
        ))
    }
}

/// Genuine and imposter counts for classes of the given sizes.
pub fn pair_counts(class_sizes: impl IntoIterator<Item = usize>) -> (u64, u64) {
    let (mut genuine, mut n) = (0u64, 0u64);
    for s in class_sizes {
        let s = s as u64;
        genuine += s * s.saturating_sub(1) / 2;
        n += s;
    }
    (genuine, n * n.saturating_sub(1) / 2 - genuine)
}

/// Every unordered pair exactly once, ordered by id. Counts are known up
/// front; the pairs themselves are streamed.
pub fn enumerate_pairs(samples: &[LabeledSample]) -> Result<Pairs> {
    let mut samples = samples.to_vec();
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = samples.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId(w[0].id.clone()));
    }
    let mut classes: HashMap<(&str, &str), usize> = HashMap::new();
    let mut class = Vec::with_capacity(samples.len());
    let mut sizes: Vec<usize> = Vec::new();
    for s in &samples {
        let next = classes.len();
        let c = *classes
            .entry((s.subject.as_str(), s.finger.as_str()))
            .or_insert(next);
        if c == sizes.len() {
            sizes.push(0);
        }
        sizes[c] += 1;
        class.push(c);
    }
    let (genuine, imposter) = pair_counts(sizes);
    Ok(Pairs {
        samples,
        class,
        i: 0,
        j: 1,
        genuine,
        imposter,
    })
}

/// Min-max normalization to `[0, 1]` over the whole set, unscorable
/// records included, so the result depends only on the stored scores.
pub fn normalize_scores(s: &ScoreSet) -> Result<ScoreSet> {
    let (lo, hi) = s
        .records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.score), hi.max(r.score))
        });
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::Degenerate(
            "normalization needs at least two distinct scores".into(),
        ));
    }
    let records = s
        .records
        .iter()
        .map(|r| ScoreRecord {
            score: (r.score - lo) / (hi - lo),
            ..r.clone()
        })
        .collect();
    Ok(ScoreSet {
        channel: s.channel,
        records,
    })
}

/// `w * a + (1 - w) * b` per pair. The output follows the pair order of `a`.
pub fn fuse_scores(a: &ScoreSet, b: &ScoreSet, w: f64) -> Result<ScoreSet> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParameter(format!(
            "fusion weight {w} outside [0, 1]"
        )));
    }
    if a.channel == b.channel {
        return Err(Error::InvalidParameter(format!(
            "both score sets are {} scores",
            a.channel
        )));
    }
    if a.records.len() != b.records.len() {
        return Err(Error::PairSetMismatch(format!(
            "{} pairs against {}",
            a.records.len(),
            b.records.len()
        )));
    }
    let index: HashMap<(&str, &str), &ScoreRecord> = b
        .records
        .iter()
        .map(|r| ((r.probe_id.as_str(), r.gallery_id.as_str()), r))
        .collect();
    let mut records = Vec::with_capacity(a.records.len());
    for ra in &a.records {
        let rb = index
            .get(&(ra.probe_id.as_str(), ra.gallery_id.as_str()))
            .or_else(|| index.get(&(ra.gallery_id.as_str(), ra.probe_id.as_str())))
            .ok_or_else(|| {
                Error::PairSetMismatch(format!("({}, {}) missing", ra.probe_id, ra.gallery_id))
            })?;
        if rb.genuine != ra.genuine {
            return Err(Error::PairSetMismatch(format!(
                "({}, {}) labeled differently",
                ra.probe_id, ra.gallery_id
            )));
        }
        records.push(ScoreRecord {
            score: w * ra.score + (1.0 - w) * rb.score,
            scorable: ra.scorable || rb.scorable,
            ..ra.clone()
        });
    }
    if index.len() != records.len() {
        return Err(Error::PairSetMismatch("repeated pairs".into()));
    }
    Ok(ScoreSet {
        channel: ScoreChannel::Fused,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub gar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// Decreasing threshold, starting at `+inf`.
    pub points: Vec<RocPoint>,
    pub genuine: usize,
    pub imposter: usize,
}

pub fn compute_roc(s: &ScoreSet) -> Result<Roc> {
    let mut scored: Vec<(f64, bool)> = s.records.iter().map(|r| (r.score, r.genuine)).collect();
    if let Some(r) = s.records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite score for ({}, {})",
            r.probe_id, r.gallery_id
        )));
    }
    let genuine = scored.iter().filter(|p| p.1).count();
    let imposter = scored.len() - genuine;
    if genuine == 0 || imposter == 0 {
        return Err(Error::Degenerate(format!(
            "ROC needs both classes ({genuine} genuine, {imposter} imposter)"
        )));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        gar: 0.0,
    }];
    let (mut g, mut im) = (0usize, 0usize);
    let mut k = 0;
    while k < scored.len() {
        let t = scored[k].0;
        while k < scored.len() && scored[k].0 == t {
            if scored[k].1 {
                g += 1;
            } else {
                im += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: im as f64 / imposter as f64,
            gar: g as f64 / genuine as f64,
        });
    }
    Ok(Roc {
        points,
        genuine,
        imposter,
    })
}

pub fn compute_eer(roc: &Roc) -> f64 {
    let d = |p: &RocPoint| p.far - (1.0 - p.gar);
    for p in &roc.points {
        if d(p) == 0.0 {
            return p.far;
        }
    }
    for w in roc.points.windows(2) {
        let (a, b) = (d(&w[0]), d(&w[1]));
        if a < 0.0 && b > 0.0 {
            let t = a / (a - b);
            return w[0].far + t * (w[1].far - w[0].far);
        }
    }
    // Unreachable for a complete ROC, which runs from d = -1 to d = +1.
    0.5
}

/// GAR at the lowest-threshold operating point whose FAR stays within
/// `far_target`.
pub fn gar_at_far(roc: &Roc, far_target: f64) -> Result<f64> {
    if !(far_target > 0.0 && far_target <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "FAR target {far_target} outside (0, 1]"
        )));
    }
    if far_target * (roc.imposter as f64) < 1.0 {
        return Err(Error::Unmeasurable {
            target: far_target,
            imposters: roc.imposter,
        });
    }
    Ok(roc
        .points
        .iter()
        .take_while(|p| p.far <= far_target)
        .last()
        .map_or(0.0, |p| p.gar))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub genuine: usize,
    pub imposter: usize,
    pub unscorable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channel: ScoreChannel,
    pub eer: f64,
    /// Keyed by the target as written in the configuration; `None` marks
    /// a target below the measurable floor.
    pub gar_at_far: BTreeMap<String, Option<f64>>,
    pub counts: Counts,
    pub conventions: Vec<String>,
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
}

pub fn far_key(target: f64) -> String {
    format!("{target}")
}

pub fn evaluate(s: &ScoreSet, far_targets: &[f64]) -> Result<EvalReport> {
    let roc = compute_roc(s)?;
    let mut gar = BTreeMap::new();
    for &t in far_targets {
        let v = match gar_at_far(&roc, t) {
            Ok(v) => Some(v),
            Err(Error::Unmeasurable { .. }) => None,
            Err(e) => return Err(e),
        };
        gar.insert(far_key(t), v);
    }
    Ok(EvalReport {
        channel: s.channel,
        eer: compute_eer(&roc),
        gar_at_far: gar,
        counts: s.counts(),
        conventions: CONVENTIONS.iter().map(|c| c.to_string()).collect(),
        roc: roc.points,
    })
}

/// Relative improvement of `new` over `old` for an error rate, `(old - new) / old`.
pub fn relative_improvement(old: f64, new: f64) -> Option<f64> {
    (old != 0.0).then(|| (old - new) / old)
}

pub const SCORE_HEADER: [&str; 4] = ["probe_id", "gallery_id", "genuine", "score"];

pub fn write_scores_csv(s: &ScoreSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(SCORE_HEADER).map_err(|e| csv_io(path, e))?;
    for r in &s.records {
        let genuine = if r.genuine { "1" } else { "0" };
        w.write_record([
            r.probe_id.as_str(),
            r.gallery_id.as_str(),
            genuine,
            &r.score.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a score file. The unscorable flag is not stored, so every record
/// comes back scorable; metrics are unaffected because such pairs score 0.
pub fn read_scores_csv(path: impl AsRef<Path>, channel: ScoreChannel) -> Result<ScoreSet> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r.headers().map_err(|e| csv_format(e, 1))?;
    if header.iter().ne(SCORE_HEADER) {
        return Err(Error::ScoreFormat {
            line: 1,
            message: format!("expected header {}", SCORE_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_format(e, 0))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::ScoreFormat { line, message };
        let probe_id = row[0].to_string();
        let gallery_id = row[1].to_string();
        if probe_id == gallery_id {
            return Err(bad(format!("{probe_id} paired with itself")));
        }
        let genuine = match &row[2] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("genuine flag {other:?} is not 0 or 1"))),
        };
        let score: f64 = row[3]
            .parse()
            .map_err(|_| bad(format!("bad score {:?}", &row[3])))?;
        let key = if probe_id < gallery_id {
            (probe_id.clone(), gallery_id.clone())
        } else {
            (gallery_id.clone(), probe_id.clone())
        };
        if !seen.insert(key) {
            return Err(bad(format!("pair ({probe_id}, {gallery_id}) repeated")));
        }
        records.push(ScoreRecord {
            probe_id,
            gallery_id,
            genuine,
            score,
            scorable: true,
        });
    }
    Ok(ScoreSet { channel, records })
}

pub fn write_roc_csv(points: &[RocPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["threshold", "far", "gar"])
        .map_err(|e| csv_io(path, e))?;
    for p in points {
        w.write_record([
            p.threshold.to_string(),
            p.far.to_string(),
            p.gar.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_report_json(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        csv_format(e, 0)
    }
}

fn csv_format(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::ScoreFormat {
        line,
        message: e.to_string(),
    }
}
