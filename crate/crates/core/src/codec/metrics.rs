use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::codec::semantic::{cosine, SemanticEmbedder};
use crate::colormap::ColorMapOperator;
use crate::error::{Error, Result};
use crate::oracle::MixtureModel;

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub mode: String,
    pub m: usize,
    pub b_c: u8,
    pub b_s: u8,
    pub rate_bits: usize,
    pub color_mse: f64,
    /// `1 - cos` between the embeddings of input and output.
    pub semantic_dist: f64,
    /// Of the output under the realism model.
    pub loglik: f64,
    pub seed: u64,
}

/// Color, semantic and realism scores of `output` as a reconstruction of
/// `input`. Fills every field except the identifying ones (`id`, `mode`,
/// `b_c`, `b_s`, `rate_bits`, `seed`), which are left empty.
pub fn evaluate_pair(
    input: &[f64],
    output: &[f64],
    op: &ColorMapOperator,
    embedder: &SemanticEmbedder,
    model: &MixtureModel,
) -> Result<MetricRecord> {
    let color_mse = op.apply(input)?.mse(&op.apply(output)?)?;
    let semantic_dist = 1.0 - cosine(&embedder.embed(input)?, &embedder.embed(output)?);
    Ok(MetricRecord {
        id: String::new(),
        mode: String::new(),
        m: op.m(),
        b_c: 0,
        b_s: 0,
        rate_bits: 0,
        color_mse,
        semantic_dist: semantic_dist.max(0.0),
        loglik: model.log_likelihood(output)?,
        seed: 0,
    })
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        Error::Io(e.to_string())
    } else {
        Error::InvalidArgument(format!("metrics csv: {e}"))
    }
}

pub fn write_metrics_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    if records.is_empty() {
        w.write_record(["id", "mode", "m", "b_c", "b_s", "rate_bits", "color_mse", "semantic_dist", "loglik", "seed"])
            .map_err(csv_error)?;
    }
    Ok(w.flush()?)
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}
