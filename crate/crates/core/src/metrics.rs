// SPDX-License-Identifier: MIT OR Apache-2.0

//! Music-coherence metrics between a source clip and its edit, plus the
//! deterministic text and audio embeddings used for similarity scores.
//!
//! The embeddings are stand-ins for a contrastive text/audio model: fixed
//! featurisations, not learned. Every report carries [`EMBEDDING_LABEL`] so
//! their similarities are never mistaken for model-based scores.
//!
//! Beats are picked from the per-frame beat probability as local maxima of
//! at least [`BEAT_THRESHOLD`], discarding any peak closer than
//! [`REFRACTORY_SECONDS`] to the previously kept one.

use serde::{Deserialize, Deserializer, Serialize};

use crate::codec_sim::{decode_features, FeatureFrames, TokenGrid};
use crate::error::{Error, Result};
use crate::tensor_ops::Prng;
use crate::text_frontend::Prompt;

/// Beat matching window: estimates strictly closer than this match.
pub const RHYTHM_TOLERANCE: f64 = 0.070;
pub const BEAT_THRESHOLD: f64 = 0.5;
pub const REFRACTORY_SECONDS: f64 = 0.100;
pub const EMBEDDING_DIM: usize = 32;
pub const EMBEDDING_LABEL: &str = "deterministic stand-in embedding (not CLAP)";

/// Autocorrelation lags (frames) of the beat channel used by [`embed_audio`].
pub const BEAT_LAGS: [usize; 8] = [1, 2, 3, 4, 5, 6, 8, 10];
const DYNAMICS_BINS: usize = 8;
const TEXT_EMBED_SALT: u64 = 0x7e57_e3bd_0000_0001;

/// Strictly increasing, nonnegative beat times in seconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BeatTimestamps(Vec<f64>);

impl BeatTimestamps {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Metric("beat times must be finite and >= 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Metric(
                "beat times must be strictly increasing".into(),
            ));
        }
        Ok(Self(times))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_lengths(src: &FeatureFrames, edit: &FeatureFrames) -> Result<usize> {
    if src.len() != edit.len() {
        return Err(Error::Metric(format!(
            "frame counts differ: {} vs {}",
            src.len(),
            edit.len()
        )));
    }
    Ok(src.len())
}

/// Fraction of frames whose pitch classes agree.
pub fn melody_accuracy(src: &FeatureFrames, edit: &FeatureFrames) -> Result<f64> {
    let n = check_lengths(src, edit)?;
    if n == 0 {
        return Err(Error::Metric(
            "melody accuracy needs at least one frame".into(),
        ));
    }
    let hits = src
        .pitch_class
        .iter()
        .zip(&edit.pitch_class)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / n as f64)
}

/// Sample Pearson correlation. NaN when either sequence has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Metric(format!(
            "sequence lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Metric(
            "correlation needs at least two frames".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(f64::NAN);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of the per-frame dynamics.
pub fn dynamics_correlation(src: &FeatureFrames, edit: &FeatureFrames) -> Result<f64> {
    check_lengths(src, edit)?;
    pearson(&src.dynamics, &edit.dynamics)
}

/// Peak-picks the beat channel into timestamps.
pub fn detect_beats(frames: &FeatureFrames) -> BeatTimestamps {
    let b = &frames.beat_prob;
    let mut out: Vec<f64> = Vec::new();
    let mut last: Option<usize> = None;
    for t in 0..b.len() {
        let v = b[t];
        let rises = t == 0 || v > b[t - 1];
        let holds = t + 1 == b.len() || v >= b[t + 1];
        if v < BEAT_THRESHOLD || !rises || !holds {
            continue;
        }
        if let Some(prev) = last {
            if ((t - prev) as f64) / frames.frame_rate < REFRACTORY_SECONDS {
                continue;
            }
        }
        last = Some(t);
        out.push(t as f64 / frames.frame_rate);
    }
    BeatTimestamps(out)
}

/// Number of one-to-one matches with `|ref - est| < tolerance`.
///
/// Walks the reference beats in time order, pairing each with the earliest
/// unused estimate inside its window. On sorted input this is a maximum
/// matching: an estimate too early for the current reference is too early
/// for every later one too.
pub fn count_beat_matches(reference: &[f64], estimated: &[f64], tolerance: f64) -> usize {
    let mut j = 0;
    let mut matches = 0;
    for &r in reference {
        while j < estimated.len() && r - estimated[j] >= tolerance {
            j += 1;
        }
        if j < estimated.len() && (estimated[j] - r).abs() < tolerance {
            matches += 1;
            j += 1;
        }
    }
    matches
}

/// Beat F-measure over one-to-one matches within `tolerance` seconds.
pub fn rhythm_f1(reference: &BeatTimestamps, estimated: &BeatTimestamps, tolerance: f64) -> f64 {
    let (r, e) = (reference.len(), estimated.len());
    if r == 0 && e == 0 {
        return 1.0;
    }
    if r == 0 || e == 0 {
        return 0.0;
    }
    let m = count_beat_matches(&reference.0, &estimated.0, tolerance);
    2.0 * m as f64 / (r + e) as f64
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Unit-norm 32-dimensional featurisation of a clip.
///
/// Layout: 12 pitch-class frequencies, 8 dynamics-histogram frequencies
/// (bins of width 1/8), beat-channel autocorrelation at [`BEAT_LAGS`]
/// (zero where undefined), then mean and standard deviation of dynamics and
/// of the beat channel.
pub fn embed_audio(frames: &FeatureFrames) -> Vec<f64> {
    let n = frames.len().max(1) as f64;
    let mut v = Vec::with_capacity(EMBEDDING_DIM);

    let mut pitch = [0.0; 12];
    for &p in &frames.pitch_class {
        pitch[p as usize] += 1.0 / n;
    }
    v.extend_from_slice(&pitch);

    let mut dyn_hist = [0.0; DYNAMICS_BINS];
    for &d in &frames.dynamics {
        let bin = ((d * DYNAMICS_BINS as f64) as usize).min(DYNAMICS_BINS - 1);
        dyn_hist[bin] += 1.0 / n;
    }
    v.extend_from_slice(&dyn_hist);

    let b = &frames.beat_prob;
    let (beat_mean, beat_std) = mean_std(b);
    let denom: f64 = b.iter().map(|x| (x - beat_mean) * (x - beat_mean)).sum();
    for lag in BEAT_LAGS {
        let r = if denom == 0.0 || lag >= b.len() {
            0.0
        } else {
            (0..b.len() - lag)
                .map(|t| (b[t] - beat_mean) * (b[t + lag] - beat_mean))
                .sum::<f64>()
                / denom
        };
        v.push(r);
    }

    let (dyn_mean, dyn_std) = mean_std(&frames.dynamics);
    v.extend_from_slice(&[dyn_mean, dyn_std, beat_mean, beat_std]);
    debug_assert_eq!(v.len(), EMBEDDING_DIM);
    normalize(v)
}

/// Random direction for one token: 32 uniforms on `[-1, 1)` from [`Prng`]
/// seeded with `fnv1a64(token) ^ salt`.
pub fn token_direction(token: &str) -> Vec<f64> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in token.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = Prng::new(h ^ TEXT_EMBED_SALT);
    (0..EMBEDDING_DIM)
        .map(|_| 2.0 * rng.next_f64() - 1.0)
        .collect()
}

/// Unit-norm bag-of-tokens projection: the normalised sum of the prompt's
/// token directions.
pub fn embed_text(prompt: &Prompt) -> Vec<f64> {
    let mut sum = vec![0.0; EMBEDDING_DIM];
    for token in &prompt.tokens {
        for (s, d) in sum.iter_mut().zip(token_direction(token)) {
            *s += d;
        }
    }
    normalize(sum)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Metric(format!(
            "vector dims differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Metric("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn nan_as_null<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// All metrics of one edit run. Serialized as a flat JSON object; a NaN
/// (degenerate correlation) is written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub melody_accuracy: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub dynamics_correlation: f64,
    pub rhythm_f1: f64,
    pub a2a_similarity: f64,
    pub t2a_similarity_source: f64,
    pub t2a_similarity_edited: f64,
    pub embedding: String,
}

/// Metric names in report column order.
pub const METRIC_NAMES: [&str; 6] = [
    "melody_accuracy",
    "dynamics_correlation",
    "rhythm_f1",
    "a2a_similarity",
    "t2a_similarity_source",
    "t2a_similarity_edited",
];

impl MetricsReport {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.melody_accuracy,
            self.dynamics_correlation,
            self.rhythm_f1,
            self.a2a_similarity,
            self.t2a_similarity_source,
            self.t2a_similarity_edited,
        ]
    }

    /// Names of metrics that came out NaN.
    pub fn degenerate(&self) -> Vec<&'static str> {
        METRIC_NAMES
            .iter()
            .zip(self.values())
            .filter(|(_, v)| v.is_nan())
            .map(|(n, _)| *n)
            .collect()
    }

    /// Every non-NaN value inside its documented range.
    pub fn in_range(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let signed = |v: f64| v.is_nan() || (-1.0..=1.0).contains(&v);
        unit(self.melody_accuracy)
            && signed(self.dynamics_correlation)
            && unit(self.rhythm_f1)
            && [
                self.a2a_similarity,
                self.t2a_similarity_source,
                self.t2a_similarity_edited,
            ]
            .iter()
            .all(|&v| !v.is_nan() && signed(v))
    }
}

/// Scores an edited grid against its source grid and both prompts.
pub fn evaluate(
    source_grid: &TokenGrid,
    edited_grid: &TokenGrid,
    source_prompt: &Prompt,
    edited_prompt: &Prompt,
) -> Result<MetricsReport> {
    let src = decode_features(source_grid);
    let edit = decode_features(edited_grid);
    let src_audio = embed_audio(&src);
    let edit_audio = embed_audio(&edit);
    Ok(MetricsReport {
        melody_accuracy: melody_accuracy(&src, &edit)?,
        dynamics_correlation: dynamics_correlation(&src, &edit)?,
        rhythm_f1: rhythm_f1(&detect_beats(&src), &detect_beats(&edit), RHYTHM_TOLERANCE),
        a2a_similarity: cosine_similarity(&src_audio, &edit_audio)?,
        t2a_similarity_source: cosine_similarity(&embed_text(source_prompt), &edit_audio)?,
        t2a_similarity_edited: cosine_similarity(&embed_text(edited_prompt), &edit_audio)?,
        embedding: EMBEDDING_LABEL.to_string(),
    })
}
