// SPDX-License-Identifier: MIT OR Apache-2.0

//! Discrete codebook token grids, the delay interleaving pattern, and a
//! deterministic mapping from token columns to per-frame musical features.
//!
//! # Delay pattern
//!
//! Codebook `k`'s frame `t` is emitted at decoder step `t + k`, so a grid of
//! `K` codebooks by `T` frames takes `T + K - 1` steps:
//!
//! ```text
//!          step 0   1   2   3
//! cb 0        f0  f1  f2   P
//! cb 1         P  f0  f1  f2
//! ```
//!
//! `P` is the reserved padding index `M`; it exists only in the interleaved
//! view, grid values always lie in `[0, M)`.
//!
//! # Feature decoding
//!
//! Every frame's features are a function of that frame's token column (the
//! `K` tokens `grid[0][t] .. grid[K-1][t]`) and, for the beat channel, of
//! the frame index. Three salted column hashes drive them:
//!
//! ```text
//! h(salt, column) = mix64(fnv1a64(salt as u64 LE bytes ++
//!                                 column tokens as u32 LE bytes))
//! mix64(z): z = (z ^ z>>30) * 0xbf58476d1ce4e5b9
//!           z = (z ^ z>>27) * 0x94d049bb133111eb
//!           z ^ z>>31                               (wrapping arithmetic)
//! ```
//!
//! with salts 1 (pitch), 2 (dynamics) and 3 (beat). Then
//!
//! * `pitch_class = h1 mod 12`
//! * `dynamics = (h2 mod 1000) / 999`
//! * with `u = (h3 mod 1000) / 999` and `phase = t mod 10`:
//!   `beat_prob = 0.4 + 0.6u` on the beat (`phase == 0`),
//!   `0.9u^2` on the off-beat (`phase == 5`), and `0.3u` elsewhere.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Frames between beat-template peaks.
pub const BEAT_PERIOD: usize = 10;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const PITCH_SALT: u64 = 1;
const DYNAMICS_SALT: u64 = 2;
const BEAT_SALT: u64 = 3;

/// Shape and time base of a token grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Number of parallel codebooks.
    pub k: usize,
    /// Codebook size; valid tokens are `0..m`, `m` itself is padding.
    pub m: usize,
    /// Frames per clip.
    pub t: usize,
    /// Frames per second.
    pub frame_rate: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            k: 2,
            m: 64,
            t: 64,
            frame_rate: 25.0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("codebook count K must be >= 1".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidConfig("codebook size M must be >= 2".into()));
        }
        if self.m >= u32::MAX as usize {
            return Err(Error::InvalidConfig("codebook size M too large".into()));
        }
        if self.t < 1 {
            return Err(Error::InvalidConfig("frame count T must be >= 1".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::InvalidConfig("frame_rate must be > 0".into()));
        }
        Ok(())
    }

    /// Decoder steps needed for a full grid: `T + K - 1`.
    pub fn steps(&self) -> usize {
        self.t + self.k - 1
    }

    pub fn pad_token(&self) -> u32 {
        self.m as u32
    }

    /// Frame of codebook `k` emitted at decoder `step`, if any.
    pub fn frame_at(&self, step: usize, codebook: usize) -> Option<usize> {
        step.checked_sub(codebook).filter(|&f| f < self.t)
    }
}

/// `K x T` grid of codebook indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    config: CodecConfig,
    tokens: Vec<Vec<u32>>,
}

impl TokenGrid {
    pub fn new(config: CodecConfig, tokens: Vec<Vec<u32>>) -> Result<Self> {
        config.validate()?;
        if tokens.len() != config.k {
            return Err(Error::InvalidGrid(format!(
                "expected {} codebook rows, got {}",
                config.k,
                tokens.len()
            )));
        }
        for (k, row) in tokens.iter().enumerate() {
            if row.len() != config.t {
                return Err(Error::InvalidGrid(format!(
                    "codebook {k} has {} frames, expected {}",
                    row.len(),
                    config.t
                )));
            }
            if let Some(&bad) = row.iter().find(|&&v| v as usize >= config.m) {
                return Err(Error::InvalidGrid(format!(
                    "codebook {k} holds token {bad}, outside [0, {})",
                    config.m
                )));
            }
        }
        Ok(Self { config, tokens })
    }

    /// Grid filled with token 0.
    pub fn zeros(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tokens: vec![vec![0; config.t]; config.k],
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn tokens(&self) -> &[Vec<u32>] {
        &self.tokens
    }

    pub fn get(&self, codebook: usize, frame: usize) -> u32 {
        self.tokens[codebook][frame]
    }

    pub(crate) fn set(&mut self, codebook: usize, frame: usize, token: u32) {
        debug_assert!((token as usize) < self.config.m);
        self.tokens[codebook][frame] = token;
    }

    /// The `K` tokens of frame `t`, codebook 0 first.
    pub fn column(&self, frame: usize) -> impl Iterator<Item = u32> + '_ {
        self.tokens.iter().map(move |row| row[frame])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses the `{"K","M","T","tokens"}` form. The frame rate is not part
    /// of the wire format and is taken from `frame_rate`.
    pub fn from_json(text: &str, frame_rate: f64) -> Result<Self> {
        let wire: GridWire = serde_json::from_str(text)?;
        wire.into_grid(frame_rate)
    }
}

#[derive(Serialize, Deserialize)]
struct GridWire {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "T")]
    t: usize,
    tokens: Vec<Vec<u32>>,
}

impl GridWire {
    fn into_grid(self, frame_rate: f64) -> Result<TokenGrid> {
        TokenGrid::new(
            CodecConfig {
                k: self.k,
                m: self.m,
                t: self.t,
                frame_rate,
            },
            self.tokens,
        )
    }
}

impl Serialize for TokenGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridWire {
            k: self.config.k,
            m: self.config.m,
            t: self.config.t,
            tokens: self.tokens.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TokenGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = GridWire::deserialize(d)?;
        wire.into_grid(CodecConfig::default().frame_rate)
            .map_err(serde::de::Error::custom)
    }
}

/// One position of the interleaved sequence. `token == M` marks padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelaySlot {
    pub step: usize,
    pub codebook: usize,
    pub token: u32,
}

/// Interleaves `grid` with the delay pattern, ordered by step then codebook.
pub fn apply_delay_pattern(grid: &TokenGrid) -> Vec<DelaySlot> {
    let cfg = grid.config;
    let mut slots = Vec::with_capacity(cfg.steps() * cfg.k);
    for step in 0..cfg.steps() {
        for codebook in 0..cfg.k {
            let token = match cfg.frame_at(step, codebook) {
                Some(frame) => grid.tokens[codebook][frame],
                None => cfg.pad_token(),
            };
            slots.push(DelaySlot {
                step,
                codebook,
                token,
            });
        }
    }
    slots
}

/// Rebuilds the grid from a complete delay schedule, in any slot order.
pub fn invert_delay_pattern(config: CodecConfig, slots: &[DelaySlot]) -> Result<TokenGrid> {
    config.validate()?;
    let steps = config.steps();
    let mut seen = vec![false; steps * config.k];
    let mut grid = TokenGrid::zeros(config)?;
    for slot in slots {
        if slot.step >= steps || slot.codebook >= config.k {
            return Err(Error::Schedule(format!(
                "slot (step {}, codebook {}) lies outside {steps} steps x {} codebooks",
                slot.step, slot.codebook, config.k
            )));
        }
        let idx = slot.step * config.k + slot.codebook;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Schedule(format!(
                "slot (step {}, codebook {}) appears twice",
                slot.step, slot.codebook
            )));
        }
        match config.frame_at(slot.step, slot.codebook) {
            Some(frame) => {
                if slot.token as usize >= config.m {
                    return Err(Error::Schedule(format!(
                        "slot (step {}, codebook {}) must carry a token in [0, {}), got {}",
                        slot.step, slot.codebook, config.m, slot.token
                    )));
                }
                grid.tokens[slot.codebook][frame] = slot.token;
            }
            None => {
                if slot.token != config.pad_token() {
                    return Err(Error::Schedule(format!(
                        "slot (step {}, codebook {}) must be padding ({}), got {}",
                        slot.step,
                        slot.codebook,
                        config.pad_token(),
                        slot.token
                    )));
                }
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Schedule(format!(
            "slot (step {}, codebook {}) is missing",
            missing / config.k,
            missing % config.k
        )));
    }
    Ok(grid)
}

/// Per-frame musical features of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrames {
    pub pitch_class: Vec<u8>,
    pub dynamics: Vec<f64>,
    pub beat_prob: Vec<f64>,
    pub frame_rate: f64,
}

impl FeatureFrames {
    pub fn new(
        pitch_class: Vec<u8>,
        dynamics: Vec<f64>,
        beat_prob: Vec<f64>,
        frame_rate: f64,
    ) -> Result<Self> {
        let n = pitch_class.len();
        if dynamics.len() != n || beat_prob.len() != n {
            return Err(Error::Metric(format!(
                "feature lengths differ: pitch {n}, dynamics {}, beat {}",
                dynamics.len(),
                beat_prob.len()
            )));
        }
        if pitch_class.iter().any(|&p| p >= 12) {
            return Err(Error::Metric("pitch class outside [0, 12)".into()));
        }
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if !dynamics.iter().all(unit) || !beat_prob.iter().all(unit) {
            return Err(Error::Metric(
                "dynamics and beat probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Metric("frame_rate must be > 0".into()));
        }
        Ok(Self {
            pitch_class,
            dynamics,
            beat_prob,
            frame_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.pitch_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitch_class.is_empty()
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn column_hash(salt: u64, column: impl Iterator<Item = u32>) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in salt.to_le_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    for token in column {
        for byte in token.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    mix64(h)
}

fn beat_template(frame: usize, u: f64) -> f64 {
    match frame % BEAT_PERIOD {
        0 => 0.4 + 0.6 * u,
        p if p == BEAT_PERIOD / 2 => 0.9 * u * u,
        _ => 0.3 * u,
    }
}

/// Maps a grid to per-frame features; see the module docs for the formulas.
pub fn decode_features(grid: &TokenGrid) -> FeatureFrames {
    let t = grid.config.t;
    let mut pitch_class = Vec::with_capacity(t);
    let mut dynamics = Vec::with_capacity(t);
    let mut beat_prob = Vec::with_capacity(t);
    for frame in 0..t {
        let h1 = column_hash(PITCH_SALT, grid.column(frame));
        let h2 = column_hash(DYNAMICS_SALT, grid.column(frame));
        let h3 = column_hash(BEAT_SALT, grid.column(frame));
        pitch_class.push((h1 % 12) as u8);
        dynamics.push((h2 % 1000) as f64 / 999.0);
        beat_prob.push(beat_template(frame, (h3 % 1000) as f64 / 999.0));
    }
    FeatureFrames {
        pitch_class,
        dynamics,
        beat_prob,
        frame_rate: grid.config.frame_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, m: usize, t: usize) -> CodecConfig {
        CodecConfig {
            k,
            m,
            t,
            frame_rate: 25.0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(CodecConfig::default().validate().is_ok());
        assert!(cfg(0, 4, 4).validate().is_err());
        assert!(cfg(1, 1, 4).validate().is_err());
        assert!(cfg(1, 4, 0).validate().is_err());
        let mut c = cfg(1, 4, 4);
        c.frame_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_rejects_out_of_range_tokens_and_bad_shapes() {
        assert!(TokenGrid::new(cfg(1, 4, 2), vec![vec![0, 4]]).is_err());
        assert!(TokenGrid::new(cfg(1, 4, 2), vec![vec![0]]).is_err());
        assert!(TokenGrid::new(cfg(2, 4, 2), vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn delay_single_codebook_is_identity() {
        let g = TokenGrid::new(cfg(1, 8, 4), vec![vec![3, 1, 4, 1]]).unwrap();
        let slots = apply_delay_pattern(&g);
        assert_eq!(slots.len(), 4);
        for (i, s) in slots.iter().enumerate() {
            assert_eq!((s.step, s.codebook, s.token), (i, 0, g.get(0, i)));
        }
        assert_eq!(invert_delay_pattern(*g.config(), &slots).unwrap(), g);
    }

    #[test]
    fn delay_two_codebooks_three_frames() {
        // Hand-enumerated schedule: step s carries (cb0, f s) and (cb1, f s-1).
        let g = TokenGrid::new(cfg(2, 8, 3), vec![vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        let slots = apply_delay_pattern(&g);
        let pad = 8;
        let want = [
            (0, 0, 1),
            (0, 1, pad),
            (1, 0, 2),
            (1, 1, 4),
            (2, 0, 3),
            (2, 1, 5),
            (3, 0, pad),
            (3, 1, 6),
        ];
        let got: Vec<_> = slots
            .iter()
            .map(|s| (s.step, s.codebook, s.token))
            .collect();
        assert_eq!(got, want);
        assert_eq!(invert_delay_pattern(*g.config(), &slots).unwrap(), g);
    }

    #[test]
    fn invert_rejects_malformed_schedules() {
        let g = TokenGrid::new(cfg(2, 8, 3), vec![vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        let slots = apply_delay_pattern(&g);

        let mut missing = slots.clone();
        missing.remove(3);
        assert!(matches!(
            invert_delay_pattern(*g.config(), &missing),
            Err(Error::Schedule(_))
        ));

        let mut dup = slots.clone();
        dup[3] = dup[2];
        assert!(invert_delay_pattern(*g.config(), &dup).is_err());

        let mut bad_pad = slots.clone();
        bad_pad[1].token = 0;
        assert!(invert_delay_pattern(*g.config(), &bad_pad).is_err());

        let mut pad_in_body = slots.clone();
        pad_in_body[2].token = 8;
        assert!(invert_delay_pattern(*g.config(), &pad_in_body).is_err());

        let mut outside = slots;
        outside[0].step = 99;
        assert!(invert_delay_pattern(*g.config(), &outside).is_err());
    }

    #[test]
    fn invert_accepts_any_slot_order() {
        let g = TokenGrid::new(
            cfg(3, 5, 4),
            vec![vec![0, 1, 2, 3], vec![4, 3, 2, 1], vec![0, 0, 4, 4]],
        )
        .unwrap();
        let mut slots = apply_delay_pattern(&g);
        slots.reverse();
        assert_eq!(invert_delay_pattern(*g.config(), &slots).unwrap(), g);
    }

    #[test]
    fn decode_features_golden_2x4() {
        // Expected values computed independently by evaluating the documented
        // hash formulas outside this crate.
        let g = TokenGrid::new(cfg(2, 64, 4), vec![vec![0, 1, 2, 63], vec![5, 5, 17, 40]]).unwrap();
        let f = decode_features(&g);
        assert_eq!(f.pitch_class, GOLDEN_PITCH);
        for (a, b) in f.dynamics.iter().zip(GOLDEN_DYNAMICS_MILLE) {
            assert_eq!(*a, b as f64 / 999.0);
        }
        for (t, (a, b)) in f.beat_prob.iter().zip(GOLDEN_BEAT_U_MILLE).enumerate() {
            assert_eq!(*a, beat_template(t, b as f64 / 999.0));
        }
    }

    const GOLDEN_PITCH: [u8; 4] = [2, 3, 3, 9];
    const GOLDEN_DYNAMICS_MILLE: [u64; 4] = [905, 710, 458, 167];
    const GOLDEN_BEAT_U_MILLE: [u64; 4] = [984, 960, 975, 523];

    #[test]
    fn decode_features_is_columnwise() {
        let base = TokenGrid::new(
            cfg(2, 64, 6),
            vec![vec![1, 2, 3, 4, 5, 6], vec![7, 8, 9, 10, 11, 12]],
        )
        .unwrap();
        let mut changed = base.clone();
        changed.set(1, 3, 33);
        let a = decode_features(&base);
        let b = decode_features(&changed);
        for t in 0..6 {
            if t != 3 {
                assert_eq!(a.pitch_class[t], b.pitch_class[t]);
                assert_eq!(a.dynamics[t], b.dynamics[t]);
                assert_eq!(a.beat_prob[t], b.beat_prob[t]);
            }
        }
        assert_ne!(
            (a.pitch_class[3], a.dynamics[3], a.beat_prob[3]),
            (b.pitch_class[3], b.dynamics[3], b.beat_prob[3])
        );
        assert_eq!(decode_features(&base), a);
    }

    #[test]
    fn grid_json_shape() {
        let g = TokenGrid::new(cfg(2, 8, 2), vec![vec![1, 2], vec![3, 4]]).unwrap();
        let json = g.to_json().unwrap();
        assert_eq!(json, r#"{"K":2,"M":8,"T":2,"tokens":[[1,2],[3,4]]}"#);
        assert_eq!(TokenGrid::from_json(&json, 25.0).unwrap(), g);
        assert!(TokenGrid::from_json(r#"{"K":1,"M":2,"T":1,"tokens":[[2]]}"#, 25.0).is_err());
    }
}
