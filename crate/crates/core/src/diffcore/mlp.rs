use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{GradTape, Var};
use super::tensor::Tensor;
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "identity" => Ok(Self::Identity),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Identity,
    Sigmoid,
}

/// Fully connected network. `weights[l]` is `d_l x d_{l+1}`, applied as
/// `x W + b` to row-batched inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    activation: Activation,
    output_activation: OutputActivation,
    dropout_rate: f64,
}

impl Mlp {
    /// Zero-initialised network; call [`Mlp::init_params`] before training.
    pub fn new(
        layer_dims: Vec<usize>,
        activation: Activation,
        output_activation: OutputActivation,
        dropout_rate: f64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidShape(format!("bad layer dims {layer_dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!("dropout {dropout_rate} not in [0,1)")));
        }
        let weights = layer_dims.windows(2).map(|w| Tensor::zeros(&[w[0], w[1]])).collect();
        let biases = layer_dims.windows(2).map(|w| Tensor::zeros(&[w[1]])).collect();
        Ok(Self { layer_dims, weights, biases, activation, output_activation, dropout_rate })
    }

    /// `input -> hidden x (layers-1) -> output`, Glorot-initialised from `rng`.
    pub fn with_hidden(
        input: usize,
        hidden: usize,
        layers: usize,
        output: usize,
        activation: Activation,
        dropout_rate: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidConfig("an MLP needs at least one layer".into()));
        }
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, layers - 1));
        dims.push(output);
        let mut net = Self::new(dims, activation, OutputActivation::Identity, dropout_rate)?;
        net.init_params(rng);
        Ok(net)
    }

    /// Single affine layer from explicit parameters.
    pub fn affine(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        let (din, dout) = (weight.rows(), weight.cols());
        if bias.len() != dout {
            return Err(Error::InvalidShape("bias width must match weight columns".into()));
        }
        let mut net = Self::new(vec![din, dout], Activation::Identity, OutputActivation::Identity, 0.0)?;
        net.weights[0] = Tensor::new(vec![din, dout], weight.into_values())?;
        net.biases[0] = Tensor::vector(bias);
        Ok(net)
    }

    /// He-uniform weights `±sqrt(6/d_in)` for layers feeding a ReLU,
    /// Glorot-uniform `±sqrt(6/(d_in+d_out))` otherwise; biases uniform in
    /// `±1/sqrt(d_in)`.
    pub fn init_params(&mut self, rng: &mut dyn RngCore) {
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter_mut().zip(&mut self.biases).enumerate() {
            let (din, dout) = (w.rows(), w.cols());
            let limit = if l < last && self.activation == Activation::Relu {
                (6.0 / din as f64).sqrt()
            } else {
                (6.0 / (din + dout) as f64).sqrt()
            };
            for v in w.values_mut() {
                *v = rng.random_range(-limit..limit);
            }
            let bias_limit = 1.0 / (din as f64).sqrt();
            for v in b.values_mut() {
                *v = rng.random_range(-bias_limit..bias_limit);
            }
        }
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init_params(&mut rng);
        self
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn set_output_activation(&mut self, act: OutputActivation) {
        self.output_activation = act;
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Number of parameter tensors (weight and bias per layer).
    pub fn tensor_count(&self) -> usize {
        2 * self.weights.len()
    }

    /// Records the forward pass on `tape`. `vars` are this network's
    /// parameters in [`Parameters::params`] order; `input` is `batch x d_in`.
    /// Passing an RNG switches on training-mode dropout.
    pub fn forward_tape(
        &self,
        tape: &mut GradTape,
        vars: &[Var],
        input: Var,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        if vars.len() != self.tensor_count() {
            return Err(Error::InvalidShape("parameter vars do not match network".into()));
        }
        let (_, d) = tape.shape(input);
        if d != self.input_dim() {
            return Err(Error::InvalidShape(format!("network expects width {}, got {d}", self.input_dim())));
        }
        let last = self.weights.len() - 1;
        let mut x = input;
        for l in 0..=last {
            let z = tape.matmul(x, vars[2 * l])?;
            x = tape.add_row(z, vars[2 * l + 1])?;
            if l < last {
                x = match self.activation {
                    Activation::Relu => tape.relu(x),
                    Activation::Tanh => tape.tanh(x),
                    Activation::Identity => x,
                };
                if self.dropout_rate > 0.0 {
                    if let Some(rng) = dropout.as_deref_mut() {
                        let keep = 1.0 - self.dropout_rate;
                        let n = tape.value(x).len();
                        let mask = (0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                        x = tape.mul_const(x, mask)?;
                    }
                }
            }
        }
        if self.output_activation == OutputActivation::Sigmoid {
            x = tape.sigmoid(x);
        }
        Ok(x)
    }

    /// Plain evaluation. `input` is a vector of width `d_in` or a
    /// `batch x d_in` matrix; the output keeps the same leading shape.
    pub fn forward(&self, input: &Tensor, training: Option<&mut dyn RngCore>) -> Result<Tensor> {
        if input.last_dim() != self.input_dim() {
            return Err(Error::InvalidShape(format!(
                "network expects width {}, got {}",
                self.input_dim(),
                input.last_dim()
            )));
        }
        let mut tape = GradTape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p)).collect();
        let x = tape.constant(input);
        let y = self.forward_tape(&mut tape, &vars, x, training)?;
        tape.check_finite()?;
        let out = tape.tensor(y).into_values();
        let mut shape = input.shape().to_vec();
        match shape.last_mut() {
            Some(last) => *last = self.output_dim(),
            None => shape = vec![self.output_dim()],
        }
        Tensor::new(shape, out)
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }
}
