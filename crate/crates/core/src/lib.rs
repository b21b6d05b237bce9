// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-attention map editing for a small autoregressive transformer that
//! generates discrete multi-codebook "audio" token grids from text.
//!
//! A source clip is generated under prompt `P` while its attention maps are
//! recorded. The edited clip is generated under `P*` with the same sampling
//! seed while a hook substitutes maps built from the recording (replace,
//! refine or reweight), optionally blended with the freely computed maps.
//! Metrics then compare the two clips.
//!
//! ```
//! use attn_edit::{run_edit, BlendMode, EditSpec, Model, ModelConfig, Prompt, Vocabulary};
//!
//! let vocab = Vocabulary::builtin();
//! let model = Model::new(ModelConfig::default()).unwrap();
//! let p = Prompt::new("acoustic guitar solo", &vocab).unwrap();
//! let p_star = Prompt::new("electric guitar solo", &vocab).unwrap();
//! let out = run_edit(&model, &p, &p_star, &EditSpec::Replace { tau: 8 }, BlendMode::HardInject, 1).unwrap();
//! assert_eq!(out.edited_grid.config(), out.source_grid.config());
//! ```

pub mod ar_model;
pub mod codec_sim;
pub mod edit_engine;
pub mod error;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod tensor_ops;
pub mod text_frontend;

pub use ar_model::{
    AttentionKind, AttentionMap, AttentionTrace, GenerationHook, HookSite, IdentityHook, Model,
    ModelConfig,
};
pub use codec_sim::{decode_features, CodecConfig, FeatureFrames, TokenGrid};
pub use edit_engine::{run_edit, run_edit_with, BlendMode, EditOptions, EditResult, EditSpec};
pub use error::{Error, Result};
pub use metrics::{evaluate, MetricsReport};
pub use parallel::Execution;
pub use text_frontend::{align_prompts, Alignment, Prompt, Vocabulary};
