use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

/// A named parameter tensor with its gradient slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Ordered collection of parameter tensors for one network.
///
/// `version` changes every time parameter values are replaced or updated, so
/// a cached forward tape can detect that it no longer matches.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    tensors: Vec<Tensor>,
    seed: u64,
    version: u64,
}

impl ParameterStore {
    pub fn from_tensors(tensors: Vec<Tensor>, seed: u64) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Spec(format!("duplicate parameter name `{}`", t.name)));
            }
            if t.shape.iter().product::<usize>() != t.value.len() {
                return Err(Error::Shape(format!(
                    "tensor `{}` has {} values for shape {:?}",
                    t.name,
                    t.value.len(),
                    t.shape
                )));
            }
        }
        let tensors = tensors
            .into_iter()
            .map(|mut t| {
                t.grad = vec![0.0; t.value.len()];
                t
            })
            .collect();
        Ok(ParameterStore {
            tensors,
            seed,
            version: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version = self.version.wrapping_add(1);
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Mutable access to the tensors. Counts as a parameter update.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.bump_version();
        &mut self.tensors
    }

    pub(crate) fn tensor_at(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub(crate) fn grad_at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.tensors[i].grad
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Overwrites every value with the matching tensor of `other`.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        if self.tensors.len() != other.tensors.len()
            || self
                .tensors
                .iter()
                .zip(&other.tensors)
                .any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(Error::Shape("parameter stores have different layouts".into()));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.value.copy_from_slice(&src.value);
        }
        self.bump_version();
        Ok(())
    }

    /// Checks that the store has exactly the tensors `spec` requires.
    pub fn check_layout(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = layout(spec);
        if expected.len() != self.tensors.len()
            || expected
                .iter()
                .zip(&self.tensors)
                .any(|((name, shape, _), t)| *name != t.name || *shape != t.shape)
        {
            return Err(Error::Shape(
                "parameter store does not match the network spec".into(),
            ));
        }
        Ok(())
    }
}

fn layout(spec: &NetworkSpec) -> Vec<(String, Vec<usize>, usize)> {
    spec.layers
        .iter()
        .enumerate()
        .flat_map(|(i, layer)| {
            layer
                .tensors()
                .into_iter()
                .map(move |(suffix, shape, fan_in)| (format!("layer{i}.{suffix}"), shape, fan_in))
        })
        .collect()
}

/// Draws every parameter from `U(-1/√fan_in, 1/√fan_in)`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<ParameterStore> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layout(spec)
        .into_iter()
        .map(|(name, shape, fan_in)| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut t = Tensor::zeros(name, shape);
            t.value
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
            t
        })
        .collect();
    ParameterStore::from_tensors(tensors, seed)
}
