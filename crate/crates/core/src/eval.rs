//! Trial construction, equal error rate, and confidence intervals.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::alignment::Corpus;
use crate::error::{Error, Result};
use crate::inventory::strip_comment;

pub const DEFAULT_MAX_NONTARGET_PER_SPEAKER: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll_speaker: String,
    pub enroll_utts: Vec<String>,
    pub trial_utts: Vec<String>,
    pub is_target: bool,
}

impl Trial {
    pub fn enroll_key(&self) -> String {
        self.enroll_utts.join(",")
    }

    pub fn trial_key(&self) -> String {
        self.trial_utts.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
    pub n_enroll: usize,
    pub n_trial: usize,
    pub seed: u64,
    /// Speakers left out for having fewer than `n_enroll + n_trial` utterances.
    pub skipped_speakers: usize,
}

impl TrialList {
    pub fn n_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.is_target).count()
    }

    pub fn n_nontargets(&self) -> usize {
        self.trials.len() - self.n_targets()
    }
}

/// (speaker, enrollment set, trial sets)
type Partition<'a> = (&'a str, Vec<String>, Vec<Vec<String>>);

/// Builds target and nontarget trials.
///
/// Every eligible speaker's utterances are shuffled; the first `n_enroll`
/// form its enrollment set and the rest are cut into disjoint trial sets of
/// `n_trial` (leftovers unused). Each trial set gives one target trial.
/// Each enrollment set is also paired with up to `max_nontarget_per_speaker`
/// trial sets drawn without replacement from the other speakers.
pub fn build_trials<R: Rng + ?Sized>(
    corpus: &Corpus,
    n_enroll: usize,
    n_trial: usize,
    rng: &mut R,
    seed: u64,
    max_nontarget_per_speaker: usize,
) -> Result<TrialList> {
    if n_enroll == 0 || n_trial == 0 {
        return Err(Error::InvalidConfig(
            "n_enroll and n_trial must be at least 1".into(),
        ));
    }
    let needed = n_enroll + n_trial;
    let mut skipped = 0;
    let mut partitions: Vec<Partition> = Vec::new();
    for (speaker, idx) in corpus.by_speaker() {
        if idx.len() < needed {
            skipped += 1;
            continue;
        }
        let mut ids: Vec<String> = idx
            .iter()
            .map(|&i| corpus.utterances()[i].utterance_id.clone())
            .collect();
        ids.shuffle(rng);
        let enroll = ids[..n_enroll].to_vec();
        let sets = ids[n_enroll..]
            .chunks_exact(n_trial)
            .map(<[String]>::to_vec)
            .collect();
        partitions.push((speaker, enroll, sets));
    }
    if partitions.is_empty() {
        return Err(Error::NoEligibleSpeakers);
    }

    let mut trials = Vec::new();
    for (s, (speaker, enroll, sets)) in partitions.iter().enumerate() {
        for set in sets {
            trials.push(Trial {
                enroll_speaker: speaker.to_string(),
                enroll_utts: enroll.clone(),
                trial_utts: set.clone(),
                is_target: true,
            });
        }
        let pool: Vec<&Vec<String>> = partitions
            .iter()
            .enumerate()
            .filter(|&(o, _)| o != s)
            .flat_map(|(_, (_, _, sets))| sets.iter())
            .collect();
        let take = max_nontarget_per_speaker.min(pool.len());
        for i in index::sample(rng, pool.len(), take).into_iter() {
            trials.push(Trial {
                enroll_speaker: speaker.to_string(),
                enroll_utts: enroll.clone(),
                trial_utts: pool[i].clone(),
                is_target: false,
            });
        }
    }

    let list = TrialList {
        trials,
        n_enroll,
        n_trial,
        seed,
        skipped_speakers: skipped,
    };
    if list.n_targets() == 0 || list.n_nontargets() == 0 {
        return Err(Error::DegenerateList(format!(
            "{} targets, {} nontargets",
            list.n_targets(),
            list.n_nontargets()
        )));
    }
    Ok(list)
}

fn label_str(is_target: bool) -> &'static str {
    if is_target {
        "target"
    } else {
        "nontarget"
    }
}

fn parse_label(s: &str, line: usize) -> Result<bool> {
    match s {
        "target" => Ok(true),
        "nontarget" => Ok(false),
        _ => Err(Error::malformed(line, format!("expected target|nontarget, got {s:?}"))),
    }
}

/// Splits `key=value` tokens of a `#` header line.
fn header_fields(line: &str) -> Option<impl Iterator<Item = (&str, &str)>> {
    let rest = line.trim_start().strip_prefix('#')?;
    Some(rest.split_whitespace().filter_map(|tok| tok.split_once('=')))
}

fn parse_ids(field: &str, line: usize) -> Result<Vec<String>> {
    let ids: Vec<String> = field.split(',').map(str::to_string).collect();
    if ids.iter().any(String::is_empty) {
        return Err(Error::malformed(line, "empty utterance id in list"));
    }
    Ok(ids)
}

/// Writes `<enroll_spk> <enroll_utt,...> <trial_utt,...> <target|nontarget>`
/// lines after a `#` header carrying the setup.
pub fn write_trials<W: Write>(list: &TrialList, sink: &mut W) -> Result<()> {
    writeln!(
        sink,
        "# n_enroll={} n_trial={} seed={} skipped_speakers={}",
        list.n_enroll, list.n_trial, list.seed, list.skipped_speakers
    )?;
    for t in &list.trials {
        writeln!(
            sink,
            "{} {} {} {}",
            t.enroll_speaker,
            t.enroll_key(),
            t.trial_key(),
            label_str(t.is_target)
        )?;
    }
    Ok(())
}

pub fn parse_trials<R: BufRead>(source: R) -> Result<TrialList> {
    let mut trials = Vec::new();
    let mut seed = 0;
    let mut skipped = 0;
    let mut setup: Option<(usize, usize)> = None;
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if let Some(fields) = header_fields(&line) {
            for (k, v) in fields {
                match k {
                    "seed" => seed = v.parse().unwrap_or(0),
                    "skipped_speakers" => skipped = v.parse().unwrap_or(0),
                    _ => {}
                }
            }
            continue;
        }
        let mut fields = strip_comment(&line).split_whitespace();
        let Some(speaker) = fields.next() else {
            continue;
        };
        let (Some(enroll), Some(trial), Some(label), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::malformed(line_no, "expected 4 whitespace-separated fields"));
        };
        let trial = Trial {
            enroll_speaker: speaker.to_string(),
            enroll_utts: parse_ids(enroll, line_no)?,
            trial_utts: parse_ids(trial, line_no)?,
            is_target: parse_label(label, line_no)?,
        };
        let shape = (trial.enroll_utts.len(), trial.trial_utts.len());
        match setup {
            None => setup = Some(shape),
            Some(s) if s != shape => {
                return Err(Error::malformed(
                    line_no,
                    format!("trial set sizes {shape:?} differ from {s:?}"),
                ))
            }
            _ => {}
        }
        let enrolled: HashSet<&String> = trial.enroll_utts.iter().collect();
        if trial.trial_utts.iter().any(|u| enrolled.contains(u)) {
            return Err(Error::malformed(line_no, "enrollment and trial sets overlap"));
        }
        trials.push(trial);
    }
    let (n_enroll, n_trial) = setup.unwrap_or((0, 0));
    Ok(TrialList {
        trials,
        n_enroll,
        n_trial,
        seed,
        skipped_speakers: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    LargerIsSimilar,
    SmallerIsSimilar,
}

impl Polarity {
    pub fn flipped(self) -> Self {
        match self {
            Polarity::LargerIsSimilar => Polarity::SmallerIsSimilar,
            Polarity::SmallerIsSimilar => Polarity::LargerIsSimilar,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::LargerIsSimilar => "larger-is-similar",
            Polarity::SmallerIsSimilar => "smaller-is-similar",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "larger-is-similar" => Ok(Polarity::LargerIsSimilar),
            "smaller-is-similar" => Ok(Polarity::SmallerIsSimilar),
            _ => Err(Error::InvalidConfig(format!("unknown polarity {s:?}"))),
        }
    }
}

/// Per-trial scores with their target labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub polarity: Polarity,
    /// (enrollment key, trial key) per score, used when writing score files.
    pub keys: Vec<(String, String)>,
    pub model: String,
    pub setup: (usize, usize),
}

impl ScoreSet {
    /// An anonymous score set, convenient for tests and ad-hoc evaluation.
    pub fn from_scores(scores: Vec<f64>, labels: Vec<bool>, polarity: Polarity) -> Self {
        let keys = (0..scores.len())
            .map(|i| (format!("e{i}"), format!("t{i}")))
            .collect();
        ScoreSet {
            scores,
            labels,
            polarity,
            keys,
            model: "unnamed".into(),
            setup: (0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_nontargets(&self) -> usize {
        self.labels.len() - self.n_targets()
    }
}

/// Writes `<enroll_id> <trial_id> <score> <target|nontarget>` lines after a
/// header recording model, polarity and setup.
pub fn write_scores<W: Write>(set: &ScoreSet, sink: &mut W) -> Result<()> {
    writeln!(
        sink,
        "# model={} polarity={} n_enroll={} n_trial={}",
        set.model, set.polarity, set.setup.0, set.setup.1
    )?;
    for ((score, &label), (e, t)) in set.scores.iter().zip(&set.labels).zip(&set.keys) {
        writeln!(sink, "{e} {t} {score} {}", label_str(label))?;
    }
    Ok(())
}

pub fn parse_scores<R: BufRead>(source: R) -> Result<ScoreSet> {
    let mut set = ScoreSet {
        scores: Vec::new(),
        labels: Vec::new(),
        polarity: Polarity::LargerIsSimilar,
        keys: Vec::new(),
        model: "unnamed".into(),
        setup: (0, 0),
    };
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if let Some(fields) = header_fields(&line) {
            for (k, v) in fields {
                match k {
                    "model" => set.model = v.to_string(),
                    "polarity" => set.polarity = v.parse()?,
                    "n_enroll" => set.setup.0 = v.parse().unwrap_or(0),
                    "n_trial" => set.setup.1 = v.parse().unwrap_or(0),
                    _ => {}
                }
            }
            continue;
        }
        let mut fields = strip_comment(&line).split_whitespace();
        let Some(enroll) = fields.next() else {
            continue;
        };
        let (Some(trial), Some(score), Some(label), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::malformed(line_no, "expected 4 whitespace-separated fields"));
        };
        let score: f64 = score
            .parse()
            .map_err(|_| Error::malformed(line_no, format!("invalid score {score:?}")))?;
        if !score.is_finite() {
            return Err(Error::malformed(line_no, "score is not finite"));
        }
        set.scores.push(score);
        set.labels.push(parse_label(label, line_no)?);
        set.keys.push((enroll.to_string(), trial.to_string()));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    pub eer: f64,
    /// Decision threshold in the score set's own polarity.
    pub threshold: f64,
}

/// Equal error rate by threshold sweep.
///
/// Scores are oriented so that larger means more similar and a trial is
/// accepted when its score is at least the threshold. The sweep visits
/// every distinct score; where FAR and FRR cross between two adjacent
/// operating points the rate and threshold are linearly interpolated. If
/// several points have FAR == FRR exactly, the one with the lowest FRR wins.
pub fn compute_eer(set: &ScoreSet) -> Result<EerPoint> {
    if set.scores.len() != set.labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores, {} labels",
            set.scores.len(),
            set.labels.len()
        )));
    }
    let n_tar = set.n_targets();
    let n_non = set.n_nontargets();
    if n_tar == 0 || n_non == 0 {
        return Err(Error::DegenerateList(format!(
            "{n_tar} targets, {n_non} nontargets"
        )));
    }
    let sign = match set.polarity {
        Polarity::LargerIsSimilar => 1.0,
        Polarity::SmallerIsSimilar => -1.0,
    };
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(set.len());
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        if !s.is_finite() {
            return Err(Error::InvalidConfig(format!("non-finite score {s}")));
        }
        pairs.push((sign * s, l));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Operating points (threshold, far, frr); the last one accepts nothing.
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    let mut rejected_tar = 0usize;
    let mut rejected_non = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        points.push((
            t,
            (n_non - rejected_non) as f64 / n_non as f64,
            rejected_tar as f64 / n_tar as f64,
        ));
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 {
                rejected_tar += 1;
            } else {
                rejected_non += 1;
            }
            i += 1;
        }
    }
    points.push((f64::INFINITY, 0.0, 1.0));

    let j = points
        .iter()
        .position(|&(_, far, frr)| frr - far >= 0.0)
        .expect("last point has frr - far = 1");
    let (t1, far1, frr1) = points[j];
    let (eer, threshold) = if frr1 == far1 || j == 0 {
        (frr1, t1)
    } else {
        let (t0, far0, frr0) = points[j - 1];
        let d0 = frr0 - far0;
        let d1 = frr1 - far1;
        let lambda = -d0 / (d1 - d0);
        let eer = far0 + lambda * (far1 - far0);
        let threshold = if t1.is_finite() {
            t0 + lambda * (t1 - t0)
        } else {
            t0
        };
        (eer, threshold)
    };
    Ok(EerPoint {
        eer,
        threshold: sign * threshold,
    })
}

/// Half-width of the normal-approximation binomial interval,
/// `z * sqrt(eer * (1 - eer) / n_trials)`.
pub fn eer_confidence_interval(eer: f64, n_trials: usize, confidence: f64) -> f64 {
    if n_trials == 0 {
        return f64::NAN;
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(0.5 + confidence / 2.0);
    let p = eer.clamp(0.0, 1.0);
    z * (p * (1.0 - p) / n_trials as f64).sqrt()
}

pub const CI_CONVENTION: &str = "normal-approximation binomial, n = total trials";

/// One cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerReport {
    pub condition: String,
    pub model: String,
    pub n_enroll: usize,
    pub n_trial: usize,
    pub eer: f64,
    pub threshold: f64,
    pub ci: f64,
    pub confidence: f64,
    pub n_trials: usize,
    pub ci_convention: String,
}

impl EerReport {
    /// The interval clamped to [0, 1].
    pub fn interval(&self) -> (f64, f64) {
        (
            (self.eer - self.ci).max(0.0),
            (self.eer + self.ci).min(1.0),
        )
    }
}

#[derive(Debug, Clone)]
pub struct NamedScoreSet {
    pub condition: String,
    pub scores: ScoreSet,
}

pub fn evaluate(sets: &[NamedScoreSet], confidence: f64) -> Result<Vec<EerReport>> {
    sets.iter()
        .map(|named| {
            let point = compute_eer(&named.scores)?;
            let n = named.scores.len();
            Ok(EerReport {
                condition: named.condition.clone(),
                model: named.scores.model.clone(),
                n_enroll: named.scores.setup.0,
                n_trial: named.scores.setup.1,
                eer: point.eer,
                threshold: point.threshold,
                ci: eer_confidence_interval(point.eer, n, confidence),
                confidence,
                n_trials: n,
                ci_convention: CI_CONVENTION.to_string(),
            })
        })
        .collect()
}

/// One JSON object per line.
pub fn write_report<W: Write>(reports: &[EerReport], sink: &mut W) -> Result<()> {
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

/// Text table: rows are (condition, setup), columns are models, cells are
/// EER in percent with the CI half-width.
pub fn render_table(reports: &[EerReport]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut rows: Vec<(&str, usize, usize)> = Vec::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        let row = (r.condition.as_str(), r.n_enroll, r.n_trial);
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let mut out = format!("{:<16} {:>9}", "condition", "(enr,trl)");
    for m in &models {
        out.push_str(&format!(" {m:>16}"));
    }
    out.push('\n');
    for (cond, e, t) in rows {
        out.push_str(&format!("{cond:<16} {:>9}", format!("({e},{t})")));
        for m in &models {
            let cell = reports
                .iter()
                .find(|r| r.condition == cond && r.n_enroll == e && r.n_trial == t && r.model == *m)
                .map(|r| format!("{:.1} ±{:.1}", 100.0 * r.eer, 100.0 * r.ci))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {cell:>16}"));
        }
        out.push('\n');
    }
    out
}
