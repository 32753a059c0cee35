use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Identity,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    /// LSTM-family cell run over a sequence; emits the final hidden state.
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: usize,
    pub output: usize,
    /// Output nonlinearity for dense layers; candidate and cell-output
    /// nonlinearity for recurrent cells (gates are always sigmoid).
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            input,
            output,
            activation,
        }
    }

    pub fn recurrent(input: usize, hidden: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Recurrent,
            input,
            output: hidden,
            activation,
        }
    }

    /// `(name suffix, shape, fan_in)` for every tensor of the layer.
    pub(crate) fn tensors(&self) -> Vec<(&'static str, Vec<usize>, usize)> {
        match self.kind {
            LayerKind::Dense => vec![
                ("weight", vec![self.output, self.input], self.input),
                ("bias", vec![self.output], self.input),
            ],
            LayerKind::Recurrent => {
                let fan_in = self.input + self.output;
                vec![
                    ("w_ih", vec![4 * self.output, self.input], fan_in),
                    ("w_hh", vec![4 * self.output, self.output], fan_in),
                    ("bias", vec![4 * self.output], fan_in),
                ]
            }
        }
    }
}

/// Layer stack of a network. A recurrent layer may only appear first, since
/// it is the only kind that consumes a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Dense stack over `widths` with `hidden` between layers and `output`
    /// after the last one.
    pub fn mlp(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Spec("an mlp needs at least two widths".into()));
        }
        let last = widths.len() - 2;
        NetworkSpec::new(
            widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| LayerSpec::dense(w[0], w[1], if i == last { output } else { hidden }))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Spec("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input == 0 || layer.output == 0 {
                return Err(Error::Spec(format!("layer {i} has a zero width")));
            }
            if layer.kind == LayerKind::Recurrent && i != 0 {
                return Err(Error::Spec(format!(
                    "recurrent layer {i} must be the first layer"
                )));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output != pair[1].input {
                return Err(Error::Spec(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output,
                    i + 1,
                    pair[1].input
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn is_recurrent(&self) -> bool {
        self.layers[0].kind == LayerKind::Recurrent
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.tensors())
            .map(|(_, shape, _)| shape.iter().product::<usize>())
            .sum()
    }
}
