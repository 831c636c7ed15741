//! Feed-forward ReLU classifier with access to penultimate features.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Weight stored as `[fan_in × fan_out]` so a batch is multiplied on the left.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier<T> {
    layer_dims: Vec<usize>,
    seed: u64,
    layers: Vec<Linear<T>>,
}

/// Values produced by a forward pass outside of any gradient computation.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub logits: Tensor<T>,
    pub features: Tensor<T>,
}

pub struct TapeForward<'t, T> {
    pub logits: Var<'t, T>,
    pub features: Var<'t, T>,
}

/// Model parameters recorded as leaves on a tape.
pub struct BoundMlp<'t, T> {
    input_dim: usize,
    params: Vec<(Var<'t, T>, Var<'t, T>)>,
}

impl<T: Scalar> MlpClassifier<T> {
    /// Uniform `±√(6/fan_in)` weights and zero biases, fully determined by `seed`.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = rng::stream(&[seed, tag::INIT]);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.random_range(-bound..=bound)))
                    .collect();
                Ok(Linear {
                    weight: Tensor::matrix(fan_in, fan_out, weight)?,
                    bias: Tensor::zeros(vec![fan_out])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            seed,
            layers,
        })
    }

    pub fn from_layers(layer_dims: &[usize], seed: u64, layers: Vec<Linear<T>>) -> Result<Self> {
        validate_dims(layer_dims)?;
        if layers.len() + 1 != layer_dims.len() {
            return Err(Error::config(format!(
                "{} layers supplied for dims {:?}",
                layers.len(),
                layer_dims
            )));
        }
        for (l, w) in layers.iter().zip(layer_dims.windows(2)) {
            if l.weight.shape() != [w[0], w[1]] || l.bias.shape() != [w[1]] {
                return Err(Error::config(format!(
                    "layer shapes {:?}/{:?} do not match dims {:?}",
                    l.weight.shape(),
                    l.bias.shape(),
                    w
                )));
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            seed,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Width of the penultimate representation (the input width when there
    /// is no hidden layer).
    pub fn feature_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<T>] {
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in order `w0, b0, w1, b1, …`.
    pub fn parameters(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Records parameters on `tape`; `trainable` makes them gradient leaves.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> BoundMlp<'t, T> {
        let params = self
            .layers
            .iter()
            .map(|l| {
                (
                    tape.leaf(l.weight.clone(), trainable),
                    tape.leaf(l.bias.clone(), trainable),
                )
            })
            .collect();
        BoundMlp {
            input_dim: self.input_dim(),
            params,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Forward<T>> {
        let tape = Tape::new();
        let net = self.bind(&tape, false);
        let out = net.forward(tape.constant(x.clone()))?;
        Ok(Forward {
            logits: (*out.logits.value()).clone(),
            features: (*out.features.value()).clone(),
        })
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.logits.argmax_rows())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_dims: self.layer_dims.clone(),
            seed: self.seed,
            weights: self
                .layers
                .iter()
                .map(|l| l.weight.data().iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| l.bias.data().iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        validate_dims(&ck.layer_dims)?;
        let n = ck.layer_dims.len() - 1;
        if ck.weights.len() != n || ck.biases.len() != n {
            return Err(Error::config(format!(
                "checkpoint has {} weight / {} bias arrays for {} layers",
                ck.weights.len(),
                ck.biases.len(),
                n
            )));
        }
        let layers = ck
            .layer_dims
            .windows(2)
            .zip(ck.weights.iter().zip(&ck.biases))
            .map(|(w, (wv, bv))| {
                Ok(Linear {
                    weight: Tensor::matrix(w[0], w[1], wv.iter().map(|&v| T::lit(v)).collect())?,
                    bias: Tensor::vector(bv.iter().map(|&v| T::lit(v)).collect())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(&ck.layer_dims, ck.seed, layers)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

impl<'t, T: Scalar> BoundMlp<'t, T> {
    pub fn forward(&self, x: Var<'t, T>) -> Result<TapeForward<'t, T>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(TensorError::ShapeMismatch {
                op: "mlp forward",
                left: shape,
                right: vec![self.input_dim],
            }
            .into());
        }
        let last = self.params.len() - 1;
        let mut h = x;
        let mut features = x;
        for (i, (w, b)) in self.params.iter().enumerate() {
            h = h.matmul(*w)?.add_row_bias(*b)?;
            if i < last {
                h = h.relu();
                features = h;
            }
        }
        Ok(TapeForward { logits: h, features })
    }

    /// Parameter handles in the same order as [`MlpClassifier::parameters`].
    pub fn parameters(&self) -> impl Iterator<Item = Var<'t, T>> + '_ {
        self.params.iter().flat_map(|(w, b)| [*w, *b])
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::config(format!(
            "layer_dims needs at least input and output widths, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::config(format!("layer_dims must be positive, got {dims:?}")));
    }
    Ok(())
}

/// On-disk model: flat JSON with row-major weight arrays per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    pub seed: u64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}
