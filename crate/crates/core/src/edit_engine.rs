// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention-map editing: capture a source generation, then regenerate under
//! an edited prompt while a hook substitutes edited maps.
//!
//! The three edit functions take the source map `M_t` (from the capture
//! pass) and the freely computed map `M*_t` of the edit pass:
//!
//! * **Replace**: `M*_t` when `t < tau`, otherwise `M_t`.
//! * **Refine**: when `t < tau` the free map; otherwise key column `j` is the
//!   free column where the alignment has no match and source column `A(j)`
//!   where it does.
//! * **Reweight**: source column `j*` scaled by `c` in every head, no row
//!   renormalisation.
//!
//! The edit output `Y` is then combined with the free map `X` by a
//! [`BlendMode`]: hard injection uses `Y`; soft blending uses
//! `alpha X + (1 - alpha) Y` with `alpha = i / N` for 0-based layer `i` of
//! `N`; `Strength(s)` uses `s X + (1 - s) Y` at every layer.
//!
//! `Strength` is an interpolation chosen for the prompt-strength sweep; it
//! has no further theoretical standing.

use serde::{Deserialize, Serialize};

use crate::ar_model::{AttentionMap, AttentionTrace, GenerationHook, HookSite, Model};
use crate::codec_sim::TokenGrid;
use crate::error::{Error, Result};
use crate::metrics;
use crate::parallel::{self, Execution};
use crate::tensor_ops::Matrix;
use crate::text_frontend::{Alignment, Prompt};

/// Edit mechanism and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditSpec {
    Replace { tau: usize },
    Refine { tau: usize, alignment: Alignment },
    Reweight { j_star: usize, c: f64 },
}

/// Inclusive range accepted for the reweight scale.
pub const REWEIGHT_RANGE: (f64, f64) = (-2.0, 2.0);

impl EditSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Replace { .. } => "replace",
            Self::Refine { .. } => "refine",
            Self::Reweight { .. } => "reweight",
        }
    }

    /// Checks the spec against the schedule length and both prompts.
    pub fn validate(&self, n_steps: usize, source: &Prompt, target: &Prompt) -> Result<()> {
        let check_tau = |tau: usize| {
            if tau > n_steps {
                return Err(Error::EditPrecondition(format!(
                    "tau {tau} exceeds the {n_steps}-step schedule"
                )));
            }
            Ok(())
        };
        match self {
            Self::Replace { tau } => {
                check_tau(*tau)?;
                if source.len() != target.len() {
                    return Err(Error::EditPrecondition(format!(
                        "replace needs prompts of equal length, got {} and {}",
                        source.len(),
                        target.len()
                    )));
                }
            }
            Self::Refine { tau, alignment } => {
                check_tau(*tau)?;
                if alignment.target_len() != target.len() || alignment.source_len() != source.len()
                {
                    return Err(Error::EditPrecondition(format!(
                        "alignment covers {}->{} tokens, prompts have {}->{}",
                        alignment.source_len(),
                        alignment.target_len(),
                        source.len(),
                        target.len()
                    )));
                }
            }
            Self::Reweight { j_star, c } => {
                if source.ids != target.ids {
                    return Err(Error::EditPrecondition(
                        "reweight needs the edited prompt to equal the source prompt".into(),
                    ));
                }
                if *j_star >= source.len() {
                    return Err(Error::EditPrecondition(format!(
                        "j* = {j_star} is outside the {}-token prompt",
                        source.len()
                    )));
                }
                if !c.is_finite() || *c < REWEIGHT_RANGE.0 || *c > REWEIGHT_RANGE.1 {
                    return Err(Error::EditPrecondition(format!(
                        "reweight scale c = {c} is outside [-2, 2]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How the edit output is combined with the freely computed map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BlendMode {
    HardInject,
    SoftBlend,
    Strength { s: f64 },
}

impl BlendMode {
    pub fn validate(&self) -> Result<()> {
        if let Self::Strength { s } = self {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::EditPrecondition(format!(
                    "strength {s} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Short label used in reports: `hard`, `soft`, `strength=<s>`.
    pub fn label(&self) -> String {
        match self {
            Self::HardInject => "hard".into(),
            Self::SoftBlend => "soft".into(),
            Self::Strength { s } => format!("strength={s}"),
        }
    }
}

impl std::fmt::Display for BlendMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Extra switches for [`run_edit_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditOptions {
    /// Also inject the source run's self-attention maps, wherever the cross
    /// map is injected.
    pub inject_self_attention: bool,
}

/// Output of a capture pass plus an edit pass.
#[derive(Debug, Clone)]
pub struct EditResult {
    pub source_grid: TokenGrid,
    pub edited_grid: TokenGrid,
    pub source_trace: AttentionTrace,
    pub edited_trace: AttentionTrace,
    /// Steps at which the edit function took its injection branch.
    pub injected_steps: Vec<usize>,
}

fn shape_error(op: &'static str, a: &AttentionMap, b: &AttentionMap) -> Error {
    Error::DimensionMismatch {
        op,
        detail: format!("{}x{} vs {}x{}", a.heads(), a.keys(), b.heads(), b.keys()),
    }
}

/// Replace: the free map before `tau`, the source map from `tau` on.
pub fn edit_replace(
    m_source: &AttentionMap,
    m_free: &AttentionMap,
    t: usize,
    tau: usize,
) -> Result<AttentionMap> {
    if m_source.shape() != m_free.shape() {
        return Err(shape_error("edit_replace", m_source, m_free));
    }
    Ok(if t < tau {
        m_free.clone()
    } else {
        m_source.clone()
    })
}

/// Refine: per key column, the aligned source column or the free column.
pub fn edit_refine(
    m_source: &AttentionMap,
    m_free: &AttentionMap,
    t: usize,
    tau: usize,
    align: &Alignment,
) -> Result<AttentionMap> {
    if align.target_len() != m_free.keys()
        || align.source_len() != m_source.keys()
        || m_source.heads() != m_free.heads()
    {
        return Err(Error::DimensionMismatch {
            op: "edit_refine",
            detail: format!(
                "alignment {}->{} against source {}x{} and free {}x{}",
                align.source_len(),
                align.target_len(),
                m_source.heads(),
                m_source.keys(),
                m_free.heads(),
                m_free.keys()
            ),
        });
    }
    if t < tau {
        return Ok(m_free.clone());
    }
    let mut out = m_free.clone();
    for (j, src) in align.as_slice().iter().enumerate() {
        if let Some(i) = *src {
            for h in 0..out.heads() {
                out.set(h, j, m_source.get(h, i));
            }
        }
    }
    Ok(out)
}

/// Reweight: column `j_star` multiplied by `c` in every head.
pub fn edit_reweight(m_source: &AttentionMap, j_star: usize, c: f64) -> Result<AttentionMap> {
    if j_star >= m_source.keys() {
        return Err(Error::EditPrecondition(format!(
            "j* = {j_star} is outside the {} key columns",
            m_source.keys()
        )));
    }
    let mut out = m_source.clone();
    for h in 0..out.heads() {
        out.set(h, j_star, c * m_source.get(h, j_star));
    }
    Ok(out)
}

/// Mixing weight on the free map for 0-based `layer` of `n_layers`.
pub fn blend_alpha(layer: usize, n_layers: usize, mode: BlendMode) -> f64 {
    match mode {
        BlendMode::HardInject => 0.0,
        BlendMode::SoftBlend => layer as f64 / n_layers as f64,
        BlendMode::Strength { s } => s,
    }
}

/// Combines the free map `x` with the edit output `y`.
///
/// A weight of exactly 0 or 1 returns `y` or `x` untouched.
pub fn blend(
    x: &AttentionMap,
    y: &AttentionMap,
    layer: usize,
    n_layers: usize,
    mode: BlendMode,
) -> Result<AttentionMap> {
    if x.shape() != y.shape() {
        return Err(shape_error("blend", x, y));
    }
    mode.validate()?;
    if n_layers == 0 || layer >= n_layers {
        return Err(Error::EditPrecondition(format!(
            "layer {layer} is outside a {n_layers}-layer stack"
        )));
    }
    let alpha = blend_alpha(layer, n_layers, mode);
    if alpha == 0.0 {
        return Ok(y.clone());
    }
    if alpha == 1.0 {
        return Ok(x.clone());
    }
    let data = x
        .matrix()
        .data()
        .iter()
        .zip(y.matrix().data())
        .map(|(xv, yv)| alpha * xv + (1.0 - alpha) * yv)
        .collect();
    Ok(AttentionMap::new(Matrix::new(x.heads(), x.keys(), data)?))
}

/// Hook driving the edit pass.
struct EditHook<'a> {
    source: &'a AttentionTrace,
    spec: &'a EditSpec,
    mode: BlendMode,
    options: EditOptions,
    injected_steps: Vec<usize>,
}

impl EditHook<'_> {
    fn injects_at(&self, t: usize) -> bool {
        match self.spec {
            EditSpec::Replace { tau } | EditSpec::Refine { tau, .. } => t >= *tau,
            EditSpec::Reweight { .. } => true,
        }
    }
}

impl GenerationHook for EditHook<'_> {
    fn cross_attention(&mut self, site: HookSite, m_free: &AttentionMap) -> Result<AttentionMap> {
        let Some(entry) = self.source.get(site.step, site.layer) else {
            debug_assert!(false, "capture and edit passes share one schedule");
            return Ok(m_free.clone());
        };
        let m_source = &entry.cross;
        let t = site.step;
        let y = match self.spec {
            EditSpec::Replace { tau } => edit_replace(m_source, m_free, t, *tau)?,
            EditSpec::Refine { tau, alignment } => {
                edit_refine(m_source, m_free, t, *tau, alignment)?
            }
            EditSpec::Reweight { j_star, c } => edit_reweight(m_source, *j_star, *c)?,
        };
        if site.layer == 0 && self.injects_at(t) {
            self.injected_steps.push(t);
        }
        blend(m_free, &y, site.layer, site.n_layers, self.mode)
    }

    fn self_attention(
        &mut self,
        site: HookSite,
        m_free: &AttentionMap,
    ) -> Result<Option<AttentionMap>> {
        if !self.options.inject_self_attention || !self.injects_at(site.step) {
            return Ok(None);
        }
        let Some(entry) = self.source.get(site.step, site.layer) else {
            return Ok(None);
        };
        blend(
            m_free,
            &entry.self_attn,
            site.layer,
            site.n_layers,
            self.mode,
        )
        .map(Some)
    }
}

/// Capture pass under `p`, then edit pass under `p_star`, both with
/// `sample_seed`.
pub fn run_edit(
    model: &Model,
    p: &Prompt,
    p_star: &Prompt,
    spec: &EditSpec,
    mode: BlendMode,
    sample_seed: u64,
) -> Result<EditResult> {
    run_edit_with(
        model,
        p,
        p_star,
        spec,
        mode,
        sample_seed,
        EditOptions::default(),
    )
}

pub fn run_edit_with(
    model: &Model,
    p: &Prompt,
    p_star: &Prompt,
    spec: &EditSpec,
    mode: BlendMode,
    sample_seed: u64,
    options: EditOptions,
) -> Result<EditResult> {
    spec.validate(model.config().codec.steps(), p, p_star)?;
    mode.validate()?;
    let (source_grid, source_trace) = model.generate(p, sample_seed, None)?;
    let mut hook = EditHook {
        source: &source_trace,
        spec,
        mode,
        options,
        injected_steps: Vec::new(),
    };
    let (edited_grid, edited_trace) = model.generate(p_star, sample_seed, Some(&mut hook))?;
    let injected_steps = hook.injected_steps;
    Ok(EditResult {
        source_grid,
        edited_grid,
        source_trace,
        edited_trace,
        injected_steps,
    })
}

/// Mean similarities at one prompt strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthRow {
    pub strength: f64,
    /// Source audio vs edited audio.
    pub a2a_similarity: f64,
    /// Source prompt vs edited audio.
    pub t2a_similarity_source: f64,
    /// Edited prompt vs edited audio.
    pub t2a_similarity_edited: f64,
}

/// Runs the edit at `Strength(s)` for every strength and seed and averages
/// the three similarities over seeds.
pub fn prompt_strength_sweep(
    model: &Model,
    p: &Prompt,
    p_star: &Prompt,
    spec: &EditSpec,
    seeds: &[u64],
    strengths: &[f64],
    exec: Execution,
) -> Result<Vec<StrengthRow>> {
    if strengths.is_empty() || seeds.is_empty() {
        return Err(Error::EditPrecondition(
            "strength sweep needs at least one strength and one seed".into(),
        ));
    }
    for &s in strengths {
        BlendMode::Strength { s }.validate()?;
    }
    let jobs: Vec<(f64, u64)> = strengths
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let reports = parallel::map(exec, &jobs, |&(s, seed)| {
        let r = run_edit(model, p, p_star, spec, BlendMode::Strength { s }, seed)?;
        metrics::evaluate(&r.source_grid, &r.edited_grid, p, p_star)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(strengths
        .iter()
        .zip(reports.chunks(seeds.len()))
        .map(|(&strength, chunk)| {
            let n = chunk.len() as f64;
            let mean = |f: fn(&metrics::MetricsReport) -> f64| chunk.iter().map(f).sum::<f64>() / n;
            StrengthRow {
                strength,
                a2a_similarity: mean(|r| r.a2a_similarity),
                t2a_similarity_source: mean(|r| r.t2a_similarity_source),
                t2a_similarity_edited: mean(|r| r.t2a_similarity_edited),
            }
        })
        .collect())
}
