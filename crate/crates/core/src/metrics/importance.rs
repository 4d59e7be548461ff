//! Permutation feature importance: the macro-F1 lost when one column is
//! shuffled across the evaluation set.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::confusion::{macro_f1, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::nn::{predict, Dataset, LayerHyper, Model};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

pub const MIN_EVAL_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImportance {
    pub feature: String,
    pub index: usize,
    pub mean_f1_drop: f64,
}

fn score<S: Scalar>(model: &Model<S>, data: &Dataset<S>, hyper: &LayerHyper) -> Result<f64> {
    let pred = predict(model, data, hyper)?;
    macro_f1(&ConfusionMatrix::from_predictions(data.labels(), &pred))
}

/// Ranked importances, largest drop first, ties by schema order. Column `j`,
/// repeat `r` is shuffled with its own stream derived from `(seed, j, r)`, so
/// the result does not depend on thread scheduling.
pub fn permutation_importance<S: Scalar>(
    model: &Model<S>,
    eval: &Dataset<S>,
    schema: &FeatureSchema,
    repeats: usize,
    seed: u64,
    hyper: &LayerHyper,
) -> Result<Vec<FeatureImportance>> {
    if eval.len() < MIN_EVAL_SAMPLES {
        return Err(Error::Config(format!(
            "permutation importance needs at least {MIN_EVAL_SAMPLES} samples, got {}",
            eval.len()
        )));
    }
    if repeats < 1 {
        return Err(Error::Config("importance repeats must be >= 1".into()));
    }
    if schema.len() != eval.dim() || model.input_dim() != eval.dim() {
        return Err(Error::Shape(format!(
            "schema has {} features, data {}, model {}",
            schema.len(),
            eval.dim(),
            model.input_dim()
        )));
    }
    let baseline = score(model, eval, hyper)?;
    let dim = eval.dim();
    let drops = (0..dim)
        .into_par_iter()
        .map(|j| -> Result<f64> {
            let mut total = 0.0;
            for r in 0..repeats {
                let mut rng = substream(seed, Stream::Importance, j as u64, r as u64);
                let mut column: Vec<S> = (0..eval.len()).map(|i| eval.row(i)[j]).collect();
                column.shuffle(&mut rng);
                let mut shuffled = eval.clone();
                for (i, v) in column.into_iter().enumerate() {
                    shuffled.features_mut()[i * dim + j] = v;
                }
                total += baseline - score(model, &shuffled, hyper)?;
            }
            Ok(total / repeats as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut ranked: Vec<FeatureImportance> = schema
        .names()
        .zip(drops)
        .enumerate()
        .map(|(index, (name, drop))| FeatureImportance {
            feature: name.to_string(),
            index,
            mean_f1_drop: drop,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.mean_f1_drop
            .total_cmp(&a.mean_f1_drop)
            .then(a.index.cmp(&b.index))
    });
    Ok(ranked)
}

/// CSV `rank,feature,mean_f1_drop`, rank starting at 1.
pub fn write_importance(path: &Path, ranked: &[FeatureImportance]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "rank,feature,mean_f1_drop").map_err(io)?;
    for (i, f) in ranked.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, f.feature, f.mean_f1_drop).map_err(io)?;
    }
    w.flush().map_err(io)
}
