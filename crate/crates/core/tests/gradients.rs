//! Analytic gradients against an independent central-difference loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tsad_core::nn::{backward, forward, init_network, Activation, LayerSpec, NetworkSpec, ParameterStore};
use tsad_core::vae::VaeModel;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Max relative error over every parameter under the loss `c·f(x)`.
fn worst_error(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = init_network(spec, seed).unwrap();
    let steps = if spec.is_recurrent() { rng.random_range(2..=7) } else { 1 };
    let x: Vec<f64> = (0..spec.input_width() * steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..spec.output_width()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |s: &ParameterStore| -> f64 {
        let (y, _) = forward(s, spec, &x).unwrap();
        y.iter().zip(&c).map(|(a, b)| a * b).sum()
    };
    let (_, tape) = forward(&store, spec, &x).unwrap();
    backward(&mut store, spec, &tape, &c).unwrap();
    let analytic: Vec<Vec<f64>> = store.tensors().iter().map(|t| t.grad.clone()).collect();
    let mut worst: f64 = 0.0;
    for (ti, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let orig = store.tensors()[ti].value[k];
            store.tensors_mut()[ti].value[k] = orig + H;
            let plus = loss(&store);
            store.tensors_mut()[ti].value[k] = orig - H;
            let minus = loss(&store);
            store.tensors_mut()[ti].value[k] = orig;
            worst = worst.max(rel(a, (plus - minus) / (2.0 * H)));
        }
    }
    worst
}

fn specs() -> Vec<(String, NetworkSpec)> {
    let mut out = Vec::new();
    for act in Activation::ALL {
        out.push((
            format!("dense/{act:?}"),
            NetworkSpec::new(vec![LayerSpec::dense(4, 3, act), LayerSpec::dense(3, 2, Activation::Identity)]).unwrap(),
        ));
        out.push((
            format!("recurrent/{act:?}"),
            NetworkSpec::new(vec![LayerSpec::recurrent(2, 3, act), LayerSpec::dense(3, 2, Activation::Identity)]).unwrap(),
        ));
    }
    out
}

#[test]
fn every_layer_kind_and_activation() {
    for (name, spec) in specs() {
        for seed in 0..SEEDS {
            let e = worst_error(&spec, seed);
            assert!(e < TOL, "{name} seed {seed}: relative error {e:e}");
        }
    }
}

fn part(m: &mut VaeModel, which: usize) -> &mut ParameterStore {
    if which == 0 {
        &mut m.encoder.store
    } else {
        &mut m.decoder.store
    }
}

#[test]
fn elbo_gradient() {
    for seed in 0..SEEDS {
        let mut model = VaeModel::new(6, 2, 5, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        model.accumulate_gradients(&x, &eps, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for net in 0..2 {
            let sizes: Vec<usize> = part(&mut model, net).tensors().iter().map(|t| t.len()).collect();
            for (ti, &len) in sizes.iter().enumerate() {
                for k in 0..len {
                    let a = part(&mut model, net).tensors()[ti].grad[k];
                    let orig = part(&mut model, net).tensors()[ti].value[k];
                    part(&mut model, net).tensors_mut()[ti].value[k] = orig + H;
                    let plus = model.loss_with_noise(&x, &eps).unwrap().total;
                    part(&mut model, net).tensors_mut()[ti].value[k] = orig - H;
                    let minus = model.loss_with_noise(&x, &eps).unwrap().total;
                    part(&mut model, net).tensors_mut()[ti].value[k] = orig;
                    worst = worst.max(rel(a, (plus - minus) / (2.0 * H)));
                }
            }
        }
        assert!(worst < TOL, "seed {seed}: {worst:e}");
    }
}
