//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward};
use super::spec::{LayerKind, NetworkSpec};
use super::store::{init_network, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub pass: bool,
}

/// Anything whose parameters live in one or more [`ParameterStore`]s.
pub trait Parameterized {
    fn stores(&self) -> Vec<&ParameterStore>;
    fn stores_mut(&mut self) -> Vec<&mut ParameterStore>;
}

impl Parameterized for ParameterStore {
    fn stores(&self) -> Vec<&ParameterStore> {
        vec![self]
    }

    fn stores_mut(&mut self) -> Vec<&mut ParameterStore> {
        vec![self]
    }
}

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients
/// from producing spurious ratios out of rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the gradients currently held in `model`'s slots against central
/// differences of `loss`, perturbing every parameter in turn.
pub fn compare_with_finite_differences<M, F>(model: &mut M, loss: F, tolerance: f64) -> GradCheckReport
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    let analytic: Vec<Vec<Vec<f64>>> = model
        .stores()
        .iter()
        .map(|s| s.tensors().iter().map(|t| t.grad.clone()).collect())
        .collect();
    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0;
    for (si, store_grads) in analytic.iter().enumerate() {
        for (ti, grads) in store_grads.iter().enumerate() {
            for (k, &a) in grads.iter().enumerate() {
                let orig = model.stores()[si].tensors()[ti].value[k];
                model.stores_mut()[si].tensors_mut()[ti].value[k] = orig + FD_STEP;
                let plus = loss(model);
                model.stores_mut()[si].tensors_mut()[ti].value[k] = orig - FD_STEP;
                let minus = loss(model);
                model.stores_mut()[si].tensors_mut()[ti].value[k] = orig;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let err = relative_error(a, numeric);
                max_rel_error = if err.is_nan() { f64::INFINITY } else { max_rel_error.max(err) };
                checked += 1;
            }
        }
    }
    GradCheckReport {
        max_rel_error,
        checked,
        pass: max_rel_error < tolerance,
    }
}

/// Checks a freshly initialised network on a random input under the random
/// linear loss `L = c·y`.
pub fn gradient_check(spec: &NetworkSpec, seed: u64, tolerance: f64) -> GradCheckReport {
    let mut store = init_network(spec, seed).expect("gradient_check needs a valid spec");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let first = &spec.layers[0];
    let input_len = match first.kind {
        LayerKind::Dense => first.input,
        LayerKind::Recurrent => first.input * rng.random_range(2..=6),
    };
    let input: Vec<f64> = (0..input_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..spec.output_width())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();

    let (_, tape) = forward(&store, spec, &input).expect("input built to fit");
    backward(&mut store, spec, &tape, &weights).expect("fresh tape");
    let loss = |s: &ParameterStore| {
        let (y, _) = forward(s, spec, &input).expect("input built to fit");
        y.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
    };
    compare_with_finite_differences(&mut store, loss, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    #[test]
    fn identity_dense_layer() {
        let spec = NetworkSpec::new(vec![LayerSpec::dense(3, 3, Activation::Identity)]).unwrap();
        let report = gradient_check(&spec, 1, 1e-4);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert!(report.pass);
        assert_eq!(report.checked, 12);
    }

    #[test]
    fn zero_tolerance_never_passes() {
        let spec = NetworkSpec::new(vec![LayerSpec::dense(2, 2, Activation::Identity)]).unwrap();
        assert!(!gradient_check(&spec, 1, 0.0).pass);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let spec = NetworkSpec::new(vec![LayerSpec::dense(2, 1, Activation::Tanh)]).unwrap();
        let mut store = init_network(&spec, 4).unwrap();
        let input = [0.5, -0.25];
        let (_, tape) = forward(&store, &spec, &input).unwrap();
        backward(&mut store, &spec, &tape, &[2.0]).unwrap(); // gradient of 1·y, doubled
        let report = compare_with_finite_differences(
            &mut store,
            |s| forward(s, &spec, &input).unwrap().0[0],
            1e-4,
        );
        assert!(!report.pass);
    }
}
