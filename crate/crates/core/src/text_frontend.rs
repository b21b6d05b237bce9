// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word-level prompt tokenization, the vocabulary, and the token alignment
//! between an original prompt and its edited version.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fallback token for words outside the vocabulary.
pub const UNK_TOKEN: &str = "<unk>";

const BUILTIN_VOCAB: &str = include_str!("../fixtures/vocab.json");

/// Lowercases `raw` and splits it on every character that is not
/// alphanumeric, dropping empty pieces.
pub fn tokenize(raw: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    Ok(tokens)
}

/// Token to id map. Serialized as a flat JSON object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    ids: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from raw texts: `<unk>` is id 0, the remaining
    /// tokens follow in sorted order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut words = std::collections::BTreeSet::new();
        for text in texts {
            words.extend(tokenize(text)?);
        }
        let ids = std::iter::once(UNK_TOKEN.to_string())
            .chain(words.into_iter().filter(|w| w != UNK_TOKEN))
            .enumerate()
            .map(|(id, w)| (w, id as u32))
            .collect();
        Ok(Self { ids })
    }

    pub fn from_map(ids: BTreeMap<String, u32>) -> Result<Self> {
        let mut seen: Vec<u32> = ids.values().copied().collect();
        seen.sort_unstable();
        if seen.iter().enumerate().any(|(i, &id)| id as usize != i) {
            return Err(Error::InvalidConfig(
                "vocabulary ids must be exactly 0..len".into(),
            ));
        }
        Ok(Self { ids })
    }

    /// The vocabulary shipped with the fixture dataset.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_VOCAB).expect("bundled vocabulary is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_map(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.ids)?)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn unk_id(&self) -> Option<u32> {
        self.id(UNK_TOKEN)
    }

    /// Id for `token`, falling back to `<unk>` when present.
    pub fn lookup(&self, token: &str) -> Result<u32> {
        self.id(token)
            .or_else(|| self.unk_id())
            .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))
    }

    /// Reverse lookup; linear, used only for display.
    pub fn token(&self, id: u32) -> Option<&str> {
        self.ids
            .iter()
            .find(|(_, &v)| v == id)
            .map(|(k, _)| k.as_str())
    }
}

/// A tokenized prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub raw: String,
    pub tokens: Vec<String>,
    pub ids: Vec<u32>,
}

impl Prompt {
    pub fn new(raw: &str, vocab: &Vocabulary) -> Result<Self> {
        let tokens = tokenize(raw)?;
        let ids = tokens
            .iter()
            .map(|t| vocab.lookup(t))
            .collect::<Result<_>>()?;
        Ok(Self {
            raw: raw.to_string(),
            tokens,
            ids,
        })
    }

    /// Prompt made directly from vocabulary ids.
    pub fn from_ids(ids: Vec<u32>, vocab: &Vocabulary) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let tokens = ids
            .iter()
            .map(|&id| {
                vocab
                    .token(id)
                    .map(str::to_string)
                    .ok_or(Error::TokenIdOutOfRange {
                        id,
                        size: vocab.len(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            raw: tokens.join(" "),
            tokens,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// For each target-prompt token, the index of its matching source-prompt
/// token, or `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    map: Vec<Option<usize>>,
    source_len: usize,
}

impl Alignment {
    /// Checks that mapped source indices are in range and strictly increasing.
    pub fn new(map: Vec<Option<usize>>, source_len: usize) -> Result<Self> {
        let mut last: Option<usize> = None;
        for (j, src) in map.iter().enumerate() {
            if let Some(i) = *src {
                if i >= source_len {
                    return Err(Error::EditPrecondition(format!(
                        "alignment maps target {j} to source {i}, beyond source length {source_len}"
                    )));
                }
                if last.is_some_and(|l| i <= l) {
                    return Err(Error::EditPrecondition(format!(
                        "alignment is not order preserving at target {j}"
                    )));
                }
                last = Some(i);
            }
        }
        Ok(Self { map, source_len })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            map: (0..len).map(Some).collect(),
            source_len: len,
        }
    }

    pub fn get(&self, target: usize) -> Option<usize> {
        self.map[target]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.map
    }

    pub fn target_len(&self) -> usize {
        self.map.len()
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn matched(&self) -> usize {
        self.map.iter().filter(|m| m.is_some()).count()
    }
}

/// Longest-common-subsequence alignment of `target` onto `source`.
///
/// Among all maximum matchings the one whose map `(A(0), A(1), ...)` is
/// lexicographically smallest wins, with an unmatched entry ranking after
/// every index: earlier target tokens are matched first, each to the
/// leftmost source token that still allows a maximum matching.
pub fn align_prompts(source: &Prompt, target: &Prompt) -> Alignment {
    align_ids(&source.ids, &target.ids)
}

pub(crate) fn align_ids<T: PartialEq>(source: &[T], target: &[T]) -> Alignment {
    let (n, m) = (source.len(), target.len());
    // suffix[i][j] = LCS length of source[i..] and target[j..]
    let mut suffix = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i][j] = if source[i] == target[j] {
                1 + suffix[i + 1][j + 1]
            } else {
                suffix[i + 1][j].max(suffix[i][j + 1])
            };
        }
    }
    let mut map = vec![None; m];
    let mut i = 0;
    for (j, slot) in map.iter_mut().enumerate() {
        let best = suffix[i][j];
        if best == 0 {
            break;
        }
        if let Some(pick) =
            (i..n).find(|&k| source[k] == target[j] && 1 + suffix[k + 1][j + 1] == best)
        {
            *slot = Some(pick);
            i = pick + 1;
        }
    }
    Alignment { map, source_len: n }
}
