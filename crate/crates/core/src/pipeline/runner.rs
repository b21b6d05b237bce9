// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch execution of prompt-pair datasets and report aggregation.
//!
//! Jobs `(pair, seed)` run independently over the shared model via
//! [`parallel::map`]; aggregation is a sequential reduction over the
//! records in (pair, seed) order, so every table is independent of the
//! execution mode.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ar_model::Model;
use crate::codec_sim::TokenGrid;
use crate::edit_engine::{run_edit, BlendMode, StrengthRow};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport, EMBEDDING_LABEL, METRIC_NAMES};
use crate::parallel::{self, Execution};
use crate::text_frontend::Vocabulary;

use super::dataset::{Axis, EditType, PromptPair};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_STRENGTHS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Caveat attached to every similarity report.
pub const SIMILARITY_NOTE: &str = "similarities use a deterministic stand-in embedding on a randomly initialised toy model; absolute values are not comparable to CLAP scores on pretrained models";

/// Shared settings of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSettings {
    /// Injection threshold for replace and refine pairs.
    pub tau: usize,
    pub exec: Execution,
}

/// Outcome of one (pair, seed, mode) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pair_id: String,
    pub edit_type: EditType,
    pub axis: Axis,
    pub seed: u64,
    pub mode: String,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_grid_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_grid_path: Option<String>,
    /// `(source, edited)` grids, kept in memory until written out.
    #[serde(skip)]
    pub grids: Option<(TokenGrid, TokenGrid)>,
}

fn check_batch(pairs: &[PromptPair], seeds: &[u64]) -> Result<()> {
    if pairs.is_empty() || seeds.is_empty() {
        return Err(Error::EditPrecondition(
            "a batch needs at least one pair and one seed".into(),
        ));
    }
    Ok(())
}

fn jobs<'a>(pairs: &'a [PromptPair], seeds: &[u64]) -> Vec<(&'a PromptPair, u64)> {
    pairs
        .iter()
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect()
}

fn run_one(
    model: &Model,
    vocab: &Vocabulary,
    pair: &PromptPair,
    seed: u64,
    mode: BlendMode,
    tau: usize,
) -> Result<(MetricsReport, TokenGrid, TokenGrid)> {
    let (p, q) = pair.prompts(vocab)?;
    let spec = pair.edit_spec(&p, &q, tau)?;
    let out = run_edit(model, &p, &q, &spec, mode, seed)?;
    let report = metrics::evaluate(&out.source_grid, &out.edited_grid, &p, &q)?;
    Ok((report, out.source_grid, out.edited_grid))
}

/// Runs every pair under every seed. A failing run becomes a record with
/// `error` set; only an empty batch is an error.
pub fn run_dataset(
    model: &Model,
    vocab: &Vocabulary,
    pairs: &[PromptPair],
    seeds: &[u64],
    mode: BlendMode,
    settings: RunSettings,
) -> Result<Vec<RunRecord>> {
    check_batch(pairs, seeds)?;
    mode.validate()?;
    let label = mode.label();
    Ok(parallel::map(
        settings.exec,
        &jobs(pairs, seeds),
        |&(pair, seed)| {
            let outcome = run_one(model, vocab, pair, seed, mode, settings.tau);
            let (metrics, error, grids) = match outcome {
                Ok((m, s, e)) => (Some(m), None, Some((s, e))),
                Err(e) => (None, Some(e.to_string()), None),
            };
            RunRecord {
                pair_id: pair.id.clone(),
                edit_type: pair.edit_type,
                axis: pair.axis,
                seed,
                mode: label.clone(),
                metrics,
                error,
                source_grid_path: None,
                edited_grid_path: None,
                grids,
            }
        },
    ))
}

/// Writes `records.jsonl` plus one JSON file per grid under `dir`, filling
/// in the records' grid paths (relative to `dir`).
pub fn write_records(dir: &Path, records: &mut [RunRecord]) -> Result<()> {
    let grid_dir = dir.join("grids");
    std::fs::create_dir_all(&grid_dir).map_err(|e| Error::io(&grid_dir, e))?;
    let mut lines = String::new();
    for r in records.iter_mut() {
        if let Some((src, edit)) = &r.grids {
            let stem = format!("{}_seed{}_{}", r.pair_id, r.seed, r.mode.replace('=', ""));
            for (suffix, grid, slot) in [
                ("source", src, &mut r.source_grid_path),
                ("edited", edit, &mut r.edited_grid_path),
            ] {
                let rel = format!("grids/{stem}_{suffix}.json");
                let path = dir.join(&rel);
                std::fs::write(&path, grid.to_json()?).map_err(|e| Error::io(&path, e))?;
                *slot = Some(rel);
            }
        }
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    let path = dir.join("records.jsonl");
    std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))
}

/// Mean and population standard deviation of the defined values of one
/// metric over a group of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    /// Values that entered the statistics.
    pub n: usize,
    /// Records that failed or produced an undefined (NaN) value.
    pub missing: usize,
}

impl Stat {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut defined = Vec::new();
        let mut missing = 0;
        for v in values {
            match v {
                Some(x) if !x.is_nan() => defined.push(x),
                _ => missing += 1,
            }
        }
        let n = defined.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
                missing,
            };
        }
        let mean = defined.iter().sum::<f64>() / n as f64;
        let var = defined.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        Self {
            mean,
            std: var.sqrt(),
            n,
            missing,
        }
    }

    pub fn complete(&self) -> bool {
        self.missing == 0
    }

    /// `mean ∓ std` with three decimals, `*` marking an incomplete cell.
    pub fn display(&self) -> String {
        if self.n == 0 {
            return "n/a*".into();
        }
        let star = if self.complete() { "" } else { "*" };
        format!("{:.3} ∓ {:.3}{star}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Edit type name, or `all`.
    pub group: String,
    pub records: usize,
    /// One entry per [`METRIC_NAMES`] column.
    pub stats: Vec<Stat>,
}

/// Per-edit-type and overall mean ∓ std of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub mode: String,
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mode = records.first().map(|r| r.mode.clone()).unwrap_or_default();
        let row = |group: &str, rs: Vec<&RunRecord>| AggregateRow {
            group: group.to_string(),
            records: rs.len(),
            stats: (0..METRIC_NAMES.len())
                .map(|m| {
                    Stat::from_values(rs.iter().map(|r| r.metrics.as_ref().map(|x| x.values()[m])))
                })
                .collect(),
        };
        let mut rows: Vec<AggregateRow> = EditType::ALL
            .iter()
            .filter(|et| records.iter().any(|r| r.edit_type == **et))
            .map(|et| {
                row(
                    et.as_str(),
                    records.iter().filter(|r| r.edit_type == *et).collect(),
                )
            })
            .collect();
        rows.push(row("all", records.iter().collect()));
        Self { mode, rows }
    }

    pub fn row(&self, group: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    /// Long-format CSV: `group,metric,mean,std,n,missing`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["mode", "group", "metric", "mean", "std", "n", "missing"])
            .map_err(io)?;
        for row in &self.rows {
            for (name, s) in METRIC_NAMES.iter().zip(&row.stats) {
                w.write_record([
                    self.mode.clone(),
                    row.group.clone(),
                    name.to_string(),
                    s.mean.to_string(),
                    s.std.to_string(),
                    s.n.to_string(),
                    s.missing.to_string(),
                ])
                .map_err(io)?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)
            .map_err(|e| Error::Parse(e.to_string()))
    }

    /// Fixed-width text table of `mean ∓ std` cells.
    pub fn to_text(&self) -> String {
        let mut out = format!("mode: {}\n{:<10}", self.mode, "group");
        for name in METRIC_NAMES {
            let _ = write!(out, " {name:>24}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<10}", row.group);
            for s in &row.stats {
                let _ = write!(out, " {:>24}", s.display());
            }
            out.push('\n');
        }
        if self
            .rows
            .iter()
            .any(|r| r.stats.iter().any(|s| !s.complete()))
        {
            let _ = writeln!(
                out,
                "* incomplete: some runs failed or gave an undefined value"
            );
        }
        let _ = writeln!(out, "embedding: {EMBEDDING_LABEL}");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendingRow {
    /// `hard` or `soft`.
    pub mode: String,
    /// Edited prompt vs edited audio.
    pub t2a: Stat,
    /// Source audio vs edited audio.
    pub a2a: Stat,
}

/// Hard injection against soft blending on the same pairs and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendingReport {
    pub rows: Vec<BlendingRow>,
    pub note: String,
}

impl BlendingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,t2a_mean,t2a_std,a2a_mean,a2a_std\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.mode, r.t2a.mean, r.t2a.std, r.a2a.mean, r.a2a.std
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<6} {:>20} {:>20}\n", "mode", "T2A", "A2A");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<6} {:>20} {:>20}",
                r.mode,
                r.t2a.display(),
                r.a2a.display()
            );
        }
        let _ = writeln!(out, "note: {}", self.note);
        out
    }
}

pub fn compare_blending(
    model: &Model,
    vocab: &Vocabulary,
    pairs: &[PromptPair],
    seeds: &[u64],
    settings: RunSettings,
) -> Result<BlendingReport> {
    let mut rows = Vec::with_capacity(2);
    for mode in [BlendMode::HardInject, BlendMode::SoftBlend] {
        let records = run_dataset(model, vocab, pairs, seeds, mode, settings)?;
        let metric = |f: fn(&MetricsReport) -> f64| {
            Stat::from_values(records.iter().map(|r| r.metrics.as_ref().map(f)))
        };
        rows.push(BlendingRow {
            mode: mode.label(),
            t2a: metric(|m| m.t2a_similarity_edited),
            a2a: metric(|m| m.a2a_similarity),
        });
    }
    Ok(BlendingReport {
        rows,
        note: SIMILARITY_NOTE.into(),
    })
}

/// Similarity curves over prompt strength, plus the same similarities for
/// unhooked generation under the edited prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthSweep {
    pub rows: Vec<StrengthRow>,
    pub free_generation: StrengthRow,
    pub note: String,
}

impl StrengthSweep {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("strength,a2a_similarity,t2a_similarity_source,t2a_similarity_edited\n");
        let line = |out: &mut String, label: String, r: &StrengthRow| {
            let _ = writeln!(
                out,
                "{label},{},{},{}",
                r.a2a_similarity, r.t2a_similarity_source, r.t2a_similarity_edited
            );
        };
        for r in &self.rows {
            line(&mut out, r.strength.to_string(), r);
        }
        line(&mut out, "free".into(), &self.free_generation);
        out
    }
}

fn mean_row(strength: f64, reports: &[MetricsReport]) -> StrengthRow {
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    StrengthRow {
        strength,
        a2a_similarity: mean(|r| r.a2a_similarity),
        t2a_similarity_source: mean(|r| r.t2a_similarity_source),
        t2a_similarity_edited: mean(|r| r.t2a_similarity_edited),
    }
}

/// Averages A2A and both T2A similarities over every (pair, seed) at each
/// strength. The free-generation row compares the source clip with an
/// unhooked generation under the edited prompt.
pub fn sweep_strength(
    model: &Model,
    vocab: &Vocabulary,
    pairs: &[PromptPair],
    seeds: &[u64],
    strengths: &[f64],
    settings: RunSettings,
) -> Result<StrengthSweep> {
    check_batch(pairs, seeds)?;
    if strengths.is_empty() {
        return Err(Error::EditPrecondition(
            "strength sweep needs a strength".into(),
        ));
    }
    let mut rows = Vec::with_capacity(strengths.len());
    for &s in strengths {
        let mode = BlendMode::Strength { s };
        mode.validate()?;
        let reports = parallel::map(settings.exec, &jobs(pairs, seeds), |&(pair, seed)| {
            run_one(model, vocab, pair, seed, mode, settings.tau).map(|(m, _, _)| m)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        rows.push(mean_row(s, &reports));
    }
    let free = parallel::map(settings.exec, &jobs(pairs, seeds), |&(pair, seed)| {
        let (p, q) = pair.prompts(vocab)?;
        let (src, _) = model.generate(&p, seed, None)?;
        let (edited, _) = model.generate(&q, seed, None)?;
        metrics::evaluate(&src, &edited, &p, &q)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(StrengthSweep {
        rows,
        free_generation: mean_row(f64::NAN, &free),
        note: SIMILARITY_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar_model::ModelConfig;
    use crate::codec_sim::CodecConfig;
    use crate::pipeline::dataset::builtin_dataset;

    fn small_model() -> Model {
        Model::new(ModelConfig {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            codec: CodecConfig {
                t: 16,
                ..CodecConfig::default()
            },
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn stat_examples() {
        let s = Stat::from_values([Some(1.0), Some(3.0)]);
        assert_eq!((s.mean, s.std, s.n, s.missing), (2.0, 1.0, 2, 0));
        let one = Stat::from_values([Some(0.25)]);
        assert_eq!((one.mean, one.std), (0.25, 0.0));
        let gap = Stat::from_values([Some(1.0), None, Some(f64::NAN)]);
        assert_eq!((gap.n, gap.missing), (1, 2));
        assert!(gap.display().ends_with('*'));
        assert_eq!(s.display(), "2.000 ∓ 1.000");
    }

    #[test]
    fn single_run_aggregate_equals_its_metrics() {
        let model = small_model();
        let vocab = Vocabulary::builtin();
        let pairs = &builtin_dataset()[..1];
        let records = run_dataset(
            &model,
            &vocab,
            pairs,
            &[7],
            BlendMode::HardInject,
            RunSettings::default(),
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        let m = records[0].metrics.clone().unwrap();
        let table = AggregateTable::from_records(&records);
        let row = table.row("replace").unwrap();
        for (s, v) in row.stats.iter().zip(m.values()) {
            if v.is_nan() {
                assert_eq!(s.n, 0);
            } else {
                assert_eq!((s.mean, s.std), (v, 0.0));
            }
        }
        assert_eq!(table.row("all").unwrap().stats, row.stats);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let model = small_model();
        let vocab = Vocabulary::builtin();
        let pairs = builtin_dataset();
        let mode = BlendMode::HardInject;
        assert!(run_dataset(&model, &vocab, &[], &[1], mode, RunSettings::default()).is_err());
        assert!(run_dataset(&model, &vocab, &pairs, &[], mode, RunSettings::default()).is_err());
    }

    #[test]
    fn failed_runs_are_recorded() {
        let model = small_model();
        let vocab = Vocabulary::builtin();
        let pairs = &builtin_dataset()[..2];
        let settings = RunSettings {
            tau: 10_000,
            ..RunSettings::default()
        };
        let records = run_dataset(
            &model,
            &vocab,
            pairs,
            &[1, 2],
            BlendMode::HardInject,
            settings,
        )
        .unwrap();
        assert_eq!(records.len(), 4);
        assert!(records
            .iter()
            .all(|r| r.error.is_some() && r.metrics.is_none()));
        let table = AggregateTable::from_records(&records);
        assert!(table
            .rows
            .iter()
            .all(|r| r.stats.iter().all(|s| !s.complete())));
    }

    #[test]
    fn records_are_written_with_grid_paths() {
        let model = small_model();
        let vocab = Vocabulary::builtin();
        let pairs = &builtin_dataset()[..1];
        let mut records = run_dataset(
            &model,
            &vocab,
            pairs,
            &[3],
            BlendMode::SoftBlend,
            RunSettings::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_records(dir.path(), &mut records).unwrap();
        let rel = records[0].edited_grid_path.clone().unwrap();
        let text = std::fs::read_to_string(dir.path().join(rel)).unwrap();
        let grid = TokenGrid::from_json(&text, 25.0).unwrap();
        assert_eq!(&grid, &records[0].grids.as_ref().unwrap().1);
        let lines = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
        let back: RunRecord = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(back.pair_id, records[0].pair_id);
    }
}
