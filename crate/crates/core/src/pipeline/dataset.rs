// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt-pair datasets: one JSON object per line.
//!
//! ```text
//! {"id": "reweight-01", "edit_type": "reweight", "axis": "instrument_change",
//!  "source_prompt": "jazz quartet with piano and trumpet",
//!  "target_prompt": "jazz quartet with piano and trumpet",
//!  "params": {"j_star_token": "trumpet", "c": 2.0}}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edit_engine::{EditSpec, REWEIGHT_RANGE};
use crate::error::{Error, Result};
use crate::text_frontend::{align_prompts, tokenize, Prompt, Vocabulary};

const BUILTIN_DATASET: &str = include_str!("../../fixtures/prompt_pairs.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditType {
    Replace,
    Refine,
    Reweight,
}

impl EditType {
    pub const ALL: [EditType; 3] = [Self::Replace, Self::Refine, Self::Reweight];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Replace => "replace",
            Self::Refine => "refine",
            Self::Reweight => "reweight",
        }
    }
}

impl fmt::Display for EditType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What musical aspect a pair edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    InstrumentChange,
    MoodTonal,
    GenreShift,
    MelodicTransformation,
    HarmonicModification,
    FormStructure,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Self::InstrumentChange,
        Self::MoodTonal,
        Self::GenreShift,
        Self::MelodicTransformation,
        Self::HarmonicModification,
        Self::FormStructure,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReweightParams {
    pub j_star_token: String,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptPair {
    pub id: String,
    pub edit_type: EditType,
    pub axis: Axis,
    pub source_prompt: String,
    pub target_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ReweightParams>,
    /// Index of `params.j_star_token` in the tokenized source prompt; set by
    /// [`PromptPair::validate`].
    #[serde(skip)]
    pub j_star: Option<usize>,
}

impl PromptPair {
    fn invalid(&self, message: impl Into<String>) -> Error {
        Error::InvalidPair {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    /// Checks the pair invariants and resolves the reweight token index.
    pub fn validate(&mut self) -> Result<()> {
        let wrap = |e: Error| self.invalid(e.to_string());
        let source = tokenize(&self.source_prompt).map_err(wrap)?;
        let target = tokenize(&self.target_prompt).map_err(wrap)?;
        match self.edit_type {
            EditType::Replace => {
                if source.len() != target.len() {
                    return Err(self.invalid(format!(
                        "replace prompts must have equal token counts, got {} and {}",
                        source.len(),
                        target.len()
                    )));
                }
            }
            EditType::Refine => {}
            EditType::Reweight => {
                if source != target {
                    return Err(self.invalid("reweight target prompt must equal the source prompt"));
                }
                let Some(params) = &self.params else {
                    return Err(self.invalid("reweight pair needs params {j_star_token, c}"));
                };
                let (lo, hi) = REWEIGHT_RANGE;
                if !(lo..=hi).contains(&params.c) {
                    return Err(self.invalid(format!("c = {} outside [{lo}, {hi}]", params.c)));
                }
                let needle = params.j_star_token.to_lowercase();
                let hits: Vec<usize> = source
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| **t == needle)
                    .map(|(i, _)| i)
                    .collect();
                match hits.as_slice() {
                    [j] => self.j_star = Some(*j),
                    [] => {
                        return Err(self.invalid(format!(
                            "j_star_token {:?} is not in the source prompt",
                            params.j_star_token
                        )))
                    }
                    _ => {
                        return Err(self.invalid(format!(
                            "j_star_token {:?} appears {} times in the source prompt",
                            params.j_star_token,
                            hits.len()
                        )))
                    }
                }
            }
        }
        if self.edit_type != EditType::Reweight && self.params.is_some() {
            return Err(self.invalid("params are only allowed on reweight pairs"));
        }
        Ok(())
    }

    pub fn prompts(&self, vocab: &Vocabulary) -> Result<(Prompt, Prompt)> {
        Ok((
            Prompt::new(&self.source_prompt, vocab)?,
            Prompt::new(&self.target_prompt, vocab)?,
        ))
    }

    /// Edit spec for this pair; `tau` applies to replace and refine.
    pub fn edit_spec(&self, source: &Prompt, target: &Prompt, tau: usize) -> Result<EditSpec> {
        Ok(match self.edit_type {
            EditType::Replace => EditSpec::Replace { tau },
            EditType::Refine => EditSpec::Refine {
                tau,
                alignment: align_prompts(source, target),
            },
            EditType::Reweight => {
                let (Some(j_star), Some(params)) = (self.j_star, &self.params) else {
                    return Err(self.invalid("reweight pair was not validated"));
                };
                EditSpec::Reweight {
                    j_star,
                    c: params.c,
                }
            }
        })
    }
}

/// Parses JSONL text. Blank lines are skipped; ids must be unique.
pub fn parse_dataset(text: &str) -> Result<Vec<PromptPair>> {
    let mut pairs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut pair: PromptPair = serde_json::from_str(line).map_err(|e| Error::DatasetLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        pair.validate()?;
        if !ids.insert(pair.id.clone()) {
            return Err(pair.invalid("duplicate pair id"));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn load_dataset(path: &Path) -> Result<Vec<PromptPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// The 66-pair dataset shipped with the crate.
pub fn builtin_dataset() -> Vec<PromptPair> {
    parse_dataset(BUILTIN_DATASET).expect("bundled dataset is valid")
}
