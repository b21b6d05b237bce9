// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention maps, the hook contract for observing and replacing them during
//! generation, and the per-step trace of what the model used.

use crate::error::{Error, Result};
use crate::tensor_ops::Matrix;

/// Attention probabilities for one decoder query: one row per head, one
/// column per key.
///
/// Maps produced by the model have rows summing to one. Edited maps may not.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap(Matrix);

impl AttentionMap {
    pub fn new(matrix: Matrix) -> Self {
        Self(matrix)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Matrix::from_rows(rows).map(Self)
    }

    pub fn heads(&self) -> usize {
        self.0.rows()
    }

    pub fn keys(&self) -> usize {
        self.0.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, head: usize, key: usize) -> f64 {
        self.0.get(head, key)
    }

    pub fn set(&mut self, head: usize, key: usize, v: f64) {
        self.0.set(head, key, v)
    }

    pub fn row(&self, head: usize) -> &[f64] {
        self.0.row(head)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Key column `key` across heads.
    pub fn column(&self, key: usize) -> Vec<f64> {
        self.0.column(key)
    }
}

/// Which attention block of a decoder layer a map belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    Cross,
    SelfAttn,
}

/// Position of a hook call: decoder step and 0-based layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HookSite {
    pub step: usize,
    pub layer: usize,
    pub n_layers: usize,
}

/// Called by [`Model::generate`](super::Model::generate) at every
/// (step, layer) with the freshly computed maps. The returned map is used for
/// the value-weighted sum in place of the computed one and must keep its
/// shape.
pub trait GenerationHook {
    fn cross_attention(&mut self, site: HookSite, computed: &AttentionMap) -> Result<AttentionMap>;

    /// `None` keeps the computed self-attention map.
    fn self_attention(
        &mut self,
        _site: HookSite,
        _computed: &AttentionMap,
    ) -> Result<Option<AttentionMap>> {
        Ok(None)
    }
}

/// Returns every map unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityHook;

impl GenerationHook for IdentityHook {
    fn cross_attention(
        &mut self,
        _site: HookSite,
        computed: &AttentionMap,
    ) -> Result<AttentionMap> {
        Ok(computed.clone())
    }

    fn self_attention(
        &mut self,
        _site: HookSite,
        computed: &AttentionMap,
    ) -> Result<Option<AttentionMap>> {
        Ok(Some(computed.clone()))
    }
}

pub(crate) fn check_shape(site: HookSite, want: &AttentionMap, got: &AttentionMap) -> Result<()> {
    if want.shape() != got.shape() {
        return Err(Error::HookShape {
            step: site.step,
            layer: site.layer,
            want_rows: want.heads(),
            want_cols: want.keys(),
            got_rows: got.heads(),
            got_cols: got.keys(),
        });
    }
    Ok(())
}

/// Maps of one decoder layer at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAttention {
    /// Cross-attention map actually used (after the hook).
    pub cross: AttentionMap,
    /// Self-attention map actually used (after the hook).
    pub self_attn: AttentionMap,
    /// Cross-attention map as computed, before the hook.
    pub cross_computed: AttentionMap,
    /// Self-attention map as computed, before the hook.
    pub self_computed: AttentionMap,
}

impl LayerAttention {
    pub fn used(&self, kind: AttentionKind) -> &AttentionMap {
        match kind {
            AttentionKind::Cross => &self.cross,
            AttentionKind::SelfAttn => &self.self_attn,
        }
    }
}

/// Attention maps of a whole generation, indexed `[step][layer]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    n_layers: usize,
    n_heads: usize,
    steps: Vec<Vec<LayerAttention>>,
}

impl AttentionTrace {
    pub(crate) fn with_capacity(n_layers: usize, n_heads: usize, steps: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            steps: Vec::with_capacity(steps),
        }
    }

    pub(crate) fn push_step(&mut self, layers: Vec<LayerAttention>) {
        debug_assert_eq!(layers.len(), self.n_layers);
        self.steps.push(layers);
    }

    /// Rebuilds a trace from per-step layer entries, validating its shape.
    pub fn from_steps(n_heads: usize, steps: Vec<Vec<LayerAttention>>) -> Result<Self> {
        let n_layers = steps.first().map_or(0, Vec::len);
        for (t, layers) in steps.iter().enumerate() {
            if layers.len() != n_layers {
                return Err(Error::InvalidConfig(format!(
                    "trace step {t} has {} layers, expected {n_layers}",
                    layers.len()
                )));
            }
            for la in layers {
                for m in [
                    &la.cross,
                    &la.self_attn,
                    &la.cross_computed,
                    &la.self_computed,
                ] {
                    if m.heads() != n_heads {
                        return Err(Error::InvalidConfig(format!(
                            "trace step {t} holds a map with {} heads, expected {n_heads}",
                            m.heads()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n_layers,
            n_heads,
            steps,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn get(&self, step: usize, layer: usize) -> Option<&LayerAttention> {
        self.steps.get(step).and_then(|l| l.get(layer))
    }

    pub fn step(&self, step: usize) -> &[LayerAttention] {
        &self.steps[step]
    }

    /// `(step, layer, entry)` in step-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &LayerAttention)> {
        self.steps
            .iter()
            .enumerate()
            .flat_map(|(t, layers)| layers.iter().enumerate().map(move |(i, la)| (t, i, la)))
    }
}
