use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerSpec, Shape3};
use super::NnError;
use crate::rng::Rng;

/// Serializable description of a network: registry id, input shape, layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub id: String,
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Places every layer, checking that consecutive shapes agree.
    pub fn compile(&self) -> Result<(Vec<Layer>, usize), NnError> {
        let mut shape = self.input;
        if shape.is_empty() {
            return Err(NnError::InvalidArchitecture("empty input shape".into()));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let output = spec.output_shape(shape)?;
            layers.push(Layer {
                spec: *spec,
                input: shape,
                output,
                offset,
            });
            offset += spec.param_count();
            shape = output;
        }
        Ok((layers, offset))
    }

    pub fn output_shape(&self) -> Result<Shape3, NnError> {
        let (layers, _) = self.compile()?;
        Ok(layers.last().map(|l| l.output).unwrap_or(self.input))
    }
}

/// A network with its flat parameter vector. Encoders and decoders are both
/// `Model`s; only their architectures differ.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

pub type EncoderState = Model;
pub type DecoderState = Model;

/// Activations recorded by [`Model::forward_trace`] for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

impl Model {
    /// Fan-in scaled uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self, NnError> {
        let (layers, count) = arch.compile()?;
        let mut params = vec![0.0; count];
        for layer in &layers {
            if let Some(fan_in) = layer.spec.fan_in() {
                let bound = (6.0 / fan_in as f64).sqrt();
                for p in &mut params[layer.offset..layer.offset + layer.spec.weight_count()] {
                    *p = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self { arch, layers, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, NnError> {
        let (layers, count) = arch.compile()?;
        if params.len() != count {
            return Err(NnError::ParameterCount {
                expected: count,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite("parameters".into()));
        }
        Ok(Self { arch, layers, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> Shape3 {
        self.arch.input
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map(|l| l.output.len()).unwrap_or(self.arch.input.len())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        let want = self.arch.input.len();
        if x.len() != want {
            return Err(NnError::ShapeMismatch { expected: want, got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward(&self.params, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, NnError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut y = Vec::new();
            layer.forward(&self.params, activations.last().unwrap(), &mut y);
            activations.push(y);
        }
        Ok(Trace { activations })
    }

    /// Backpropagates `grad_out` through `trace`, adding parameter gradients
    /// into `grads`. Returns the gradient with respect to the input when
    /// `want_input` is set.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut [f64], want_input: bool) -> Option<Vec<f64>> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        assert_eq!(grad_out.len(), self.output_len(), "output gradient size");
        let mut g = grad_out.to_vec();
        let mut gx = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need = i > 0 || want_input;
            layer.backward(
                &self.params,
                &trace.activations[i],
                &trace.activations[i + 1],
                &g,
                grads,
                need.then_some(&mut gx),
            );
            if need {
                std::mem::swap(&mut g, &mut gx);
            }
        }
        want_input.then_some(g)
    }
}
