// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention traces as CSV.
//!
//! The long format has one row per weight: `step,layer,head,key_index,weight`.
//! Weights are written in Rust's shortest round-trip decimal form, so reading
//! a dump back reproduces every value bit for bit.

use std::path::Path;

use crate::ar_model::{AttentionKind, AttentionMap, AttentionTrace};
use crate::error::{Error, Result};
use crate::tensor_ops::Matrix;

const HEADER: [&str; 5] = ["step", "layer", "head", "key_index", "weight"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the maps used at every (step, layer) and returns the number of
/// data rows.
pub fn dump_attention(trace: &AttentionTrace, path: &Path, kind: AttentionKind) -> Result<usize> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(HEADER).map_err(|e| csv_err(path, e))?;
    let mut rows = 0;
    for (step, layer, la) in trace.iter() {
        let map = la.used(kind);
        for head in 0..map.heads() {
            for (key, weight) in map.row(head).iter().enumerate() {
                w.write_record([
                    step.to_string(),
                    layer.to_string(),
                    head.to_string(),
                    key.to_string(),
                    weight.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
                rows += 1;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

/// Reads a long-format dump back into maps indexed `[step][layer]`.
///
/// Rows may come in any order but every (step, layer) map must be complete.
pub fn load_attention(path: &Path) -> Result<Vec<Vec<AttentionMap>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut cells: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad =
            |what: &str| Error::Parse(format!("{} row {}: bad {what}", path.display(), i + 2));
        if rec.len() != HEADER.len() {
            return Err(bad("field count"));
        }
        let idx = |j: usize| rec[j].parse::<usize>().map_err(|_| bad(HEADER[j]));
        let weight = rec[4].parse::<f64>().map_err(|_| bad("weight"))?;
        cells.push((idx(0)?, idx(1)?, idx(2)?, idx(3)?, weight));
    }
    let n_steps = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let n_layers = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut dims = vec![vec![(0usize, 0usize); n_layers]; n_steps];
    for &(s, l, h, k, _) in &cells {
        let d = &mut dims[s][l];
        *d = (d.0.max(h + 1), d.1.max(k + 1));
    }
    let mut data: Vec<Vec<Vec<Option<f64>>>> = dims
        .iter()
        .map(|row| row.iter().map(|&(h, k)| vec![None; h * k]).collect())
        .collect();
    for &(s, l, h, k, w) in &cells {
        let slot = &mut data[s][l][h * dims[s][l].1 + k];
        if slot.replace(w).is_some() {
            return Err(Error::Parse(format!(
                "duplicate entry for step {s} layer {l} head {h} key {k}"
            )));
        }
    }
    data.into_iter()
        .enumerate()
        .map(|(s, layers)| {
            layers
                .into_iter()
                .enumerate()
                .map(|(l, vals)| {
                    let (h, k) = dims[s][l];
                    let vals: Option<Vec<f64>> = vals.into_iter().collect();
                    let vals = vals.filter(|v| !v.is_empty()).ok_or_else(|| {
                        Error::Parse(format!("incomplete map at step {s} layer {l}"))
                    })?;
                    Ok(AttentionMap::new(Matrix::new(h, k, vals)?))
                })
                .collect()
        })
        .collect()
}

/// Cross-attention of one layer summed over heads: one row per step, one
/// column per text key. Unedited maps give rows summing to `n_heads`.
pub fn cross_heatmap(trace: &AttentionTrace, layer: usize, computed: bool) -> Result<Matrix> {
    if layer >= trace.n_layers() {
        return Err(Error::InvalidConfig(format!(
            "layer {layer} out of range for a {}-layer trace",
            trace.n_layers()
        )));
    }
    let keys = trace.get(0, layer).map_or(0, |la| la.cross.keys());
    let mut out = Matrix::zeros(trace.n_steps(), keys);
    for step in 0..trace.n_steps() {
        let la = &trace.step(step)[layer];
        let map = if computed {
            &la.cross_computed
        } else {
            &la.cross
        };
        for head in 0..map.heads() {
            for (key, w) in map.row(head).iter().enumerate() {
                out.set(step, key, out.get(step, key) + w);
            }
        }
    }
    Ok(out)
}

/// Writes [`cross_heatmap`] as CSV with header `step,key_0,key_1,...`.
pub fn dump_cross_heatmap(trace: &AttentionTrace, layer: usize, path: &Path) -> Result<()> {
    let heat = cross_heatmap(trace, layer, false)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..heat.cols()).map(|k| format!("key_{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for step in 0..heat.rows() {
        let row: Vec<String> = std::iter::once(step.to_string())
            .chain(heat.row(step).iter().map(f64::to_string))
            .collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
