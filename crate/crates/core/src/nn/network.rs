//! Forward and backward passes for dense stacks with an optional leading
//! LSTM-style recurrent cell.
//!
//! Inputs are flat slices. A dense first layer takes exactly `input` values;
//! a recurrent first layer reads the slice as a sequence of `input`-wide
//! steps, processed left to right from a zero hidden and cell state.

use super::spec::{sigmoid, LayerKind, LayerSpec, NetworkSpec};
use super::store::{init_network, ParameterStore};
use crate::error::{Error, Result};

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    layers: Vec<LayerTape>,
}

#[derive(Debug, Clone)]
enum LayerTape {
    Dense {
        input: Vec<f64>,
        output: Vec<f64>,
    },
    Recurrent {
        inputs: Vec<f64>,
        steps: usize,
        /// Hidden states h_0..h_T, `(T+1)×H`.
        hidden: Vec<f64>,
        /// Cell states c_0..c_T, `(T+1)×H`.
        cell: Vec<f64>,
        /// Post-nonlinearity gates (i, f, g, o) per step, `T×4H`.
        gates: Vec<f64>,
        /// act(c_t) per step, `T×H`.
        cell_act: Vec<f64>,
    },
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += W·x` for row-major `W` of shape `out.len() × x.len()`.
#[inline]
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ·g`.
#[inline]
fn matvec_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi != 0.0 {
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += gi * wij;
            }
        }
    }
}

/// `G += g·xᵀ`.
#[inline]
fn outer_acc(grad: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&gi, row) in g.iter().zip(grad.chunks_exact_mut(cols)) {
        if gi != 0.0 {
            for (r, &xj) in row.iter_mut().zip(x) {
                *r += gi * xj;
            }
        }
    }
}

fn tensor_offsets(spec: &NetworkSpec) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(spec.layers.len());
    let mut next = 0;
    for layer in &spec.layers {
        offsets.push(next);
        next += match layer.kind {
            LayerKind::Dense => 2,
            LayerKind::Recurrent => 3,
        };
    }
    offsets
}

fn check_input(spec: &NetworkSpec, input: &[f64]) -> Result<()> {
    let first = &spec.layers[0];
    let ok = match first.kind {
        LayerKind::Dense => input.len() == first.input,
        LayerKind::Recurrent => !input.is_empty() && input.len() % first.input == 0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "input of length {} does not fit a first layer of width {}",
            input.len(),
            first.input
        )))
    }
}

fn dense_forward(store: &ParameterStore, base: usize, layer: &LayerSpec, x: &[f64]) -> Vec<f64> {
    let w = &store.tensor_at(base).value;
    let mut out = store.tensor_at(base + 1).value.clone();
    matvec_acc(w, x, &mut out);
    out.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
    out
}

struct RecurrentPass {
    hidden: Vec<f64>,
    cell: Vec<f64>,
    gates: Vec<f64>,
    cell_act: Vec<f64>,
}

fn recurrent_forward(
    store: &ParameterStore,
    base: usize,
    layer: &LayerSpec,
    inputs: &[f64],
    record: bool,
) -> RecurrentPass {
    let width = layer.input;
    let h = layer.output;
    let steps = inputs.len() / width;
    let w_ih = &store.tensor_at(base).value;
    let w_hh = &store.tensor_at(base + 1).value;
    let bias = &store.tensor_at(base + 2).value;
    let act = layer.activation;

    let keep = if record { steps + 1 } else { 1 };
    let mut hidden = vec![0.0; keep * h];
    let mut cell = vec![0.0; keep * h];
    let mut gates_all = if record { vec![0.0; steps * 4 * h] } else { Vec::new() };
    let mut cell_act_all = if record { vec![0.0; steps * h] } else { Vec::new() };

    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];
    for t in 0..steps {
        let x = &inputs[t * width..(t + 1) * width];
        z.copy_from_slice(bias);
        matvec_acc(w_ih, x, &mut z);
        matvec_acc(w_hh, &h_prev, &mut z);
        for k in 0..h {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[h + k]);
            let g = act.apply(z[2 * h + k]);
            let o = sigmoid(z[3 * h + k]);
            let c = f * c_prev[k] + i * g;
            let a = act.apply(c);
            c_prev[k] = c;
            h_prev[k] = o * a;
            if record {
                let gt = &mut gates_all[t * 4 * h..(t + 1) * 4 * h];
                gt[k] = i;
                gt[h + k] = f;
                gt[2 * h + k] = g;
                gt[3 * h + k] = o;
                cell_act_all[t * h + k] = a;
            }
        }
        if record {
            hidden[(t + 1) * h..(t + 2) * h].copy_from_slice(&h_prev);
            cell[(t + 1) * h..(t + 2) * h].copy_from_slice(&c_prev);
        }
    }
    if !record {
        hidden.copy_from_slice(&h_prev);
        cell.copy_from_slice(&c_prev);
    }
    RecurrentPass {
        hidden,
        cell,
        gates: gates_all,
        cell_act: cell_act_all,
    }
}

/// Runs the network and records a tape for [`backward`].
pub fn forward(store: &ParameterStore, spec: &NetworkSpec, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
    check_input(spec, input)?;
    let offsets = tensor_offsets(spec);
    let mut tapes = Vec::with_capacity(spec.layers.len());
    let mut current = input.to_vec();
    for (layer, &base) in spec.layers.iter().zip(&offsets) {
        match layer.kind {
            LayerKind::Dense => {
                let out = dense_forward(store, base, layer, &current);
                tapes.push(LayerTape::Dense {
                    input: std::mem::take(&mut current),
                    output: out.clone(),
                });
                current = out;
            }
            LayerKind::Recurrent => {
                let pass = recurrent_forward(store, base, layer, &current, true);
                let steps = current.len() / layer.input;
                let h = layer.output;
                let out = pass.hidden[steps * h..].to_vec();
                tapes.push(LayerTape::Recurrent {
                    inputs: std::mem::take(&mut current),
                    steps,
                    hidden: pass.hidden,
                    cell: pass.cell,
                    gates: pass.gates,
                    cell_act: pass.cell_act,
                });
                current = out;
            }
        }
    }
    Ok((
        current,
        Tape {
            version: store.version(),
            layers: tapes,
        },
    ))
}

/// Forward pass without recording a tape.
pub fn predict(store: &ParameterStore, spec: &NetworkSpec, input: &[f64]) -> Result<Vec<f64>> {
    check_input(spec, input)?;
    let offsets = tensor_offsets(spec);
    let mut current = input.to_vec();
    for (layer, &base) in spec.layers.iter().zip(&offsets) {
        current = match layer.kind {
            LayerKind::Dense => dense_forward(store, base, layer, &current),
            LayerKind::Recurrent => recurrent_forward(store, base, layer, &current, false).hidden,
        };
    }
    Ok(current)
}

/// Accumulates `∂L/∂θ` into the store's gradient slots given `∂L/∂output`
/// and returns `∂L/∂input`.
pub fn backward(
    store: &mut ParameterStore,
    spec: &NetworkSpec,
    tape: &Tape,
    output_grad: &[f64],
) -> Result<Vec<f64>> {
    if tape.version != store.version() || tape.layers.len() != spec.layers.len() {
        return Err(Error::Contract(
            "tape was not produced by a forward pass over the current parameters".into(),
        ));
    }
    if output_grad.len() != spec.output_width() {
        return Err(Error::Shape(format!(
            "output gradient has {} entries, network emits {}",
            output_grad.len(),
            spec.output_width()
        )));
    }
    let offsets = tensor_offsets(spec);
    let mut grad = output_grad.to_vec();
    for ((layer, &base), lt) in spec.layers.iter().zip(&offsets).zip(&tape.layers).rev() {
        grad = match (layer.kind, lt) {
            (LayerKind::Dense, LayerTape::Dense { input, output }) => {
                if input.len() != layer.input || output.len() != layer.output {
                    return Err(Error::Contract("tape shape does not match spec".into()));
                }
                dense_backward(store, base, layer, input, output, &grad)
            }
            (LayerKind::Recurrent, LayerTape::Recurrent { .. }) => {
                recurrent_backward(store, base, layer, lt, &grad)?
            }
            _ => return Err(Error::Contract("tape layer kinds do not match spec".into())),
        };
    }
    Ok(grad)
}

fn dense_backward(
    store: &mut ParameterStore,
    base: usize,
    layer: &LayerSpec,
    input: &[f64],
    output: &[f64],
    upstream: &[f64],
) -> Vec<f64> {
    let dz: Vec<f64> = upstream
        .iter()
        .zip(output)
        .map(|(g, &y)| g * layer.activation.derivative_from_output(y))
        .collect();
    outer_acc(store.grad_at_mut(base), &dz, input);
    store
        .grad_at_mut(base + 1)
        .iter_mut()
        .zip(&dz)
        .for_each(|(b, d)| *b += d);
    let mut dx = vec![0.0; layer.input];
    matvec_t_acc(&store.tensor_at(base).value, &dz, &mut dx);
    dx
}

fn recurrent_backward(
    store: &mut ParameterStore,
    base: usize,
    layer: &LayerSpec,
    lt: &LayerTape,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    let LayerTape::Recurrent {
        inputs,
        steps,
        hidden,
        cell,
        gates,
        cell_act,
    } = lt
    else {
        unreachable!("caller matched the variant");
    };
    let width = layer.input;
    let h = layer.output;
    let steps = *steps;
    if inputs.len() != steps * width || hidden.len() != (steps + 1) * h {
        return Err(Error::Contract("tape shape does not match spec".into()));
    }
    let act = layer.activation;

    let mut g_ih = vec![0.0; 4 * h * width];
    let mut g_hh = vec![0.0; 4 * h * h];
    let mut g_b = vec![0.0; 4 * h];
    let mut dx_all = vec![0.0; inputs.len()];

    let mut dh = upstream.to_vec();
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let w_ih = &store.tensor_at(base).value;
    let w_hh = &store.tensor_at(base + 1).value;
    for t in (0..steps).rev() {
        let gt = &gates[t * 4 * h..(t + 1) * 4 * h];
        let a_c = &cell_act[t * h..(t + 1) * h];
        let c_prev = &cell[t * h..(t + 1) * h];
        for k in 0..h {
            let (i, f, g, o) = (gt[k], gt[h + k], gt[2 * h + k], gt[3 * h + k]);
            let d_o = dh[k] * a_c[k];
            let dck = dc[k] + dh[k] * o * act.derivative_from_output(a_c[k]);
            let d_i = dck * g;
            let d_g = dck * i;
            let d_f = dck * c_prev[k];
            dc[k] = dck * f;
            dz[k] = d_i * i * (1.0 - i);
            dz[h + k] = d_f * f * (1.0 - f);
            dz[2 * h + k] = d_g * act.derivative_from_output(g);
            dz[3 * h + k] = d_o * o * (1.0 - o);
        }
        let x = &inputs[t * width..(t + 1) * width];
        let h_prev = &hidden[t * h..(t + 1) * h];
        outer_acc(&mut g_ih, &dz, x);
        outer_acc(&mut g_hh, &dz, h_prev);
        g_b.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
        matvec_t_acc(w_ih, &dz, &mut dx_all[t * width..(t + 1) * width]);
        dh.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(w_hh, &dz, &mut dh);
    }
    for (slot, g) in [(base, g_ih), (base + 1, g_hh), (base + 2, g_b)] {
        store
            .grad_at_mut(slot)
            .iter_mut()
            .zip(g)
            .for_each(|(a, b)| *a += b);
    }
    Ok(dx_all)
}

/// A network spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub store: ParameterStore,
}

impl Network {
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let store = init_network(&spec, seed)?;
        Ok(Network { spec, store })
    }

    pub fn from_parts(spec: NetworkSpec, store: ParameterStore) -> Result<Self> {
        spec.validate()?;
        store.check_layout(&spec)?;
        Ok(Network { spec, store })
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        forward(&self.store, &self.spec, input)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        predict(&self.store, &self.spec, input)
    }

    pub fn backward(&mut self, tape: &Tape, output_grad: &[f64]) -> Result<Vec<f64>> {
        backward(&mut self.store, &self.spec, tape, output_grad)
    }
}
