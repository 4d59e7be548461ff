use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::scalar::Scalar;

/// Row-major feature matrix with class codes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset<S> {
    dim: usize,
    features: Vec<S>,
    labels: Vec<u8>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_parts(dim: usize, features: Vec<S>, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Dataset { dim, features, labels })
    }

    pub fn from_vectors<'a, I>(dim: usize, vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureVector<S>>,
    {
        let mut ds = Dataset::new(dim);
        for v in vectors {
            ds.push(&v.values, v.label.code() as u8)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, row: &[S], label: u8) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Shape(format!(
                "row of width {} pushed into dataset of width {}",
                row.len(),
                self.dim
            )));
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[S] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [S] {
        &mut self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the selected rows into a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> (Vec<S>, Vec<u8>) {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let (features, labels) = self.gather(indices);
        Dataset {
            dim: self.dim,
            features,
            labels,
        }
    }
}

/// Shuffled mini-batch index lists. A trailing batch of a single row is folded
/// into the one before it so every batch supports batch statistics.
pub fn batch_indices<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}
