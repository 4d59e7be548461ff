use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scalar::Scalar;
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    Bias,
    BnGain,
    BnShift,
    RunningMean,
    RunningVar,
}

impl TensorRole {
    /// Running statistics are estimated, not optimized.
    pub fn is_trainable(self) -> bool {
        !matches!(self, TensorRole::RunningMean | TensorRole::RunningVar)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub name: String,
    pub role: TensorRole,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    fn filled(name: String, role: TensorRole, shape: Vec<usize>, value: S) -> Self {
        let len = shape.iter().product();
        Tensor {
            name,
            role,
            shape,
            data: vec![value; len],
        }
    }
}

/// Tensors per hidden block: weight, bias, gain, shift, running mean, running var.
pub const HIDDEN_TENSORS: usize = 6;

/// Layer widths `[N, 2N, 3N, 3N, 4N, 7]` for `N` inputs.
pub fn layer_widths(input_dim: usize) -> Vec<usize> {
    let n = input_dim;
    vec![n, 2 * n, 3 * n, 3 * n, 4 * n, NUM_CLASSES]
}

/// Classifier parameters as an ordered tensor list. Hidden block `l` occupies
/// indices `6l..6l+6`; the output weight and bias come last.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S> {
    widths: Vec<usize>,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Model<S> {
    /// Zeroed parameters with unit gains and running variances.
    pub fn zeros_with_widths(widths: Vec<usize>) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0));
        let mut tensors = Vec::new();
        let hidden = widths.len() - 2;
        for l in 0..hidden {
            let (fan_in, out) = (widths[l], widths[l + 1]);
            let p = format!("hidden{}", l + 1);
            tensors.push(Tensor::filled(format!("{p}.weight"), TensorRole::Weight, vec![fan_in, out], S::zero()));
            tensors.push(Tensor::filled(format!("{p}.bias"), TensorRole::Bias, vec![out], S::zero()));
            tensors.push(Tensor::filled(format!("{p}.bn_gain"), TensorRole::BnGain, vec![out], S::one()));
            tensors.push(Tensor::filled(format!("{p}.bn_shift"), TensorRole::BnShift, vec![out], S::zero()));
            tensors.push(Tensor::filled(format!("{p}.bn_running_mean"), TensorRole::RunningMean, vec![out], S::zero()));
            tensors.push(Tensor::filled(format!("{p}.bn_running_var"), TensorRole::RunningVar, vec![out], S::one()));
        }
        let (fan_in, out) = (widths[hidden], widths[hidden + 1]);
        tensors.push(Tensor::filled("output.weight".into(), TensorRole::Weight, vec![fan_in, out], S::zero()));
        tensors.push(Tensor::filled("output.bias".into(), TensorRole::Bias, vec![out], S::zero()));
        Model { widths, tensors }
    }

    pub fn zeros(input_dim: usize) -> Self {
        Self::zeros_with_widths(layer_widths(input_dim))
    }

    /// Uniform fan-in initialization corrected for the leaky slope:
    /// bound = gain * sqrt(3 / fan_in) with gain^2 = 2 / (1 + slope^2).
    pub fn init(input_dim: usize, leaky_slope: f64, rng: &mut SimRng) -> Self {
        assert!(input_dim >= 1);
        let mut model = Self::zeros(input_dim);
        let gain_sq = 2.0 / (1.0 + leaky_slope * leaky_slope);
        for t in model.tensors.iter_mut().filter(|t| t.role == TensorRole::Weight) {
            let fan_in = t.shape[0] as f64;
            let bound = (gain_sq * 3.0 / fan_in).sqrt();
            for w in t.data.iter_mut() {
                *w = S::lit(rng.gen_range(-bound..bound));
            }
        }
        model
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    /// Index of the first tensor of hidden block `l`.
    pub(crate) fn hidden_base(l: usize) -> usize {
        l * HIDDEN_TENSORS
    }

    pub(crate) fn output_base(&self) -> usize {
        self.hidden_layers() * HIDDEN_TENSORS
    }

    pub(crate) fn t(&self, i: usize) -> &[S] {
        &self.tensors[i].data
    }

    pub(crate) fn t_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.tensors[i].data
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Whether two models have identical layer structure.
    pub fn same_shape(&self, other: &Model<S>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape && a.role == b.role)
    }

    pub fn check_same_shape(&self, other: &Model<S>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "model widths {:?} and {:?} are not combinable",
                self.widths, other.widths
            )))
        }
    }

    /// Same structure, every entry zero (running variances included).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in &mut z.tensors {
            t.data.iter_mut().for_each(|x| *x = S::zero());
        }
        z
    }

    /// Precision conversion, e.g. for checkpoints.
    pub fn cast<T: Scalar>(&self) -> Model<T> {
        Model {
            widths: self.widths.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    role: t.role,
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&x| T::lit(x.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Builds a model from tensors in canonical order; used by checkpoint loading.
    pub fn from_tensors(widths: Vec<usize>, tensors: Vec<Tensor<S>>) -> Result<Self> {
        let template = Self::zeros_with_widths(widths.clone());
        if template.tensors.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors for widths {widths:?}, got {}",
                template.tensors.len(),
                tensors.len()
            )));
        }
        let mut out = Vec::with_capacity(tensors.len());
        for (want, got) in template.tensors.into_iter().zip(tensors) {
            if want.name != got.name || want.shape != got.shape || got.data.len() != want.data.len() {
                return Err(Error::Shape(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
            out.push(Tensor {
                role: want.role,
                ..got
            });
        }
        Ok(Model { widths, tensors: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn widths_for_eight_inputs() {
        let m = Model::<f64>::init(8, 0.1, &mut substream(1, Stream::ModelInit, 0, 0));
        let shapes: Vec<Vec<usize>> = m
            .tensors()
            .iter()
            .filter(|t| t.role == TensorRole::Weight)
            .map(|t| t.shape.clone())
            .collect();
        assert_eq!(
            shapes,
            vec![vec![8, 16], vec![16, 24], vec![24, 24], vec![24, 32], vec![32, 7]]
        );
    }

    #[test]
    fn init_rules_and_determinism() {
        let a = Model::<f64>::init(5, 0.1, &mut substream(9, Stream::ModelInit, 0, 0));
        let b = Model::<f64>::init(5, 0.1, &mut substream(9, Stream::ModelInit, 0, 0));
        assert_eq!(a, b);
        for t in a.tensors() {
            match t.role {
                TensorRole::Bias | TensorRole::BnShift | TensorRole::RunningMean => {
                    assert!(t.data.iter().all(|&x| x == 0.0), "{}", t.name)
                }
                TensorRole::BnGain | TensorRole::RunningVar => {
                    assert!(t.data.iter().all(|&x| x == 1.0), "{}", t.name)
                }
                TensorRole::Weight => {
                    let bound = (3.0 * 2.0 / 1.01 / t.shape[0] as f64).sqrt();
                    assert!(t.data.iter().all(|x| x.abs() <= bound));
                    assert!(t.data.iter().any(|&x| x != 0.0));
                }
            }
        }
    }

    #[test]
    fn shape_signature() {
        let a = Model::<f32>::zeros(4);
        assert!(a.same_shape(&Model::zeros(4)));
        assert!(!a.same_shape(&Model::zeros(5)));
        assert!(a.check_same_shape(&Model::zeros(3)).is_err());
    }
}
