use std::sync::Arc;

use rand::Rng as _;

use super::{QFunction, TdSample};
use crate::envs::Transition;
use crate::error::{IqnError, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Shape of a dense feed-forward network. The hidden layers use
/// `activation`; the output layer is linear with one unit per action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self { input_dim, hidden_layers, output_dim, activation: Activation::Relu };
        if arch.widths().contains(&0) {
            return Err(IqnError::input(format!("layer widths must be positive, got {:?}", arch.widths())));
        }
        Ok(arch)
    }

    /// `[input, hidden..., output]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_layers);
        w.push(self.output_dim);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_layers.len() + 1
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn max_width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(0)
    }
}

/// Offsets of one dense layer inside the flat parameter vector. Weights are
/// stored row-major as `[out][in]`, followed by the `out` biases.
#[derive(Clone, Copy, Debug)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug)]
struct Layout {
    arch: MlpArchitecture,
    slots: Vec<LayerSlot>,
    len: usize,
    max_width: usize,
}

impl Layout {
    fn new(arch: MlpArchitecture) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        for w in arch.widths().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            slots.push(LayerSlot { fan_in, fan_out, weights: offset, bias: offset + fan_in * fan_out });
            offset += fan_in * fan_out + fan_out;
        }
        let max_width = arch.max_width();
        Self { arch, slots, len: offset, max_width }
    }
}

/// Parameters of a dense ReLU network, stored as one flat vector.
#[derive(Clone, Debug)]
pub struct MlpParams {
    layout: Arc<Layout>,
    theta: Vec<f64>,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layout.arch == other.layout.arch && self.theta == other.theta
    }
}

impl MlpParams {
    pub fn zeros(arch: MlpArchitecture) -> Self {
        let layout = Layout::new(arch);
        let theta = vec![0.0; layout.len];
        Self { layout: Arc::new(layout), theta }
    }

    /// He-uniform weights (`U(±√(6 / fan_in))`) and zero biases.
    pub fn he_uniform(arch: MlpArchitecture, rng: &mut Rng) -> Self {
        let mut params = Self::zeros(arch);
        for slot in params.layout.slots.clone() {
            let bound = (6.0 / slot.fan_in as f64).sqrt();
            for w in &mut params.theta[slot.weights..slot.bias] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.layout.arch
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn unflatten(arch: MlpArchitecture, theta: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(arch);
        if theta.len() != layout.len {
            return Err(IqnError::input(format!(
                "parameter vector has {} entries, architecture needs {}",
                theta.len(),
                layout.len
            )));
        }
        Ok(Self { layout: Arc::new(layout), theta })
    }

    /// Same architecture, different values; shares the layout allocation.
    pub fn with_values(&self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return Err(IqnError::input(format!(
                "parameter vector has {} entries, architecture needs {}",
                theta.len(),
                self.theta.len()
            )));
        }
        Ok(Self { layout: Arc::clone(&self.layout), theta })
    }

    /// Weight `W[row][col]` of layer `layer` (0 = first hidden layer).
    pub fn weight_mut(&mut self, layer: usize, row: usize, col: usize) -> &mut f64 {
        let slot = self.layout.slots[layer];
        &mut self.theta[slot.weights + row * slot.fan_in + col]
    }

    pub fn bias_mut(&mut self, layer: usize, unit: usize) -> &mut f64 {
        let slot = self.layout.slots[layer];
        &mut self.theta[slot.bias + unit]
    }

    fn check_input(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.layout.arch.input_dim {
            return Err(IqnError::input(format!(
                "state has dimension {}, network expects {}",
                state.len(),
                self.layout.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Q-values of every action at `state`.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_input(state)?;
        let mut scratch = Scratch::new(self.layout.max_width);
        Ok(self.forward_scratch(state, &mut scratch).to_vec())
    }

    fn forward_scratch<'s>(&self, state: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        let Scratch { a, b } = scratch;
        let n_layers = self.layout.slots.len();
        a[..state.len()].copy_from_slice(state);
        let (mut src, mut dst) = (a, b);
        for (l, slot) in self.layout.slots.iter().enumerate() {
            let w = &self.theta[slot.weights..slot.bias];
            let bias = &self.theta[slot.bias..slot.bias + slot.fan_out];
            let input = &src[..slot.fan_in];
            for (o, out) in dst[..slot.fan_out].iter_mut().enumerate() {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                let z = bias[o] + dot(row, input);
                *out = if l + 1 < n_layers { z.max(0.0) } else { z };
            }
            std::mem::swap(&mut src, &mut dst);
        }
        &src[..self.layout.arch.output_dim]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowest-index argmax.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    fn new(width: usize) -> Self {
        Self { a: vec![0.0; width], b: vec![0.0; width] }
    }
}

impl QFunction for MlpParams {
    type Action = usize;

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn q_value(&self, state: &[f64], action: usize) -> Result<f64> {
        let q = self.forward(state)?;
        q.get(action)
            .copied()
            .ok_or_else(|| IqnError::input(format!("action {action} out of range for {} outputs", q.len())))
    }

    fn max_q(&self, state: &[f64]) -> Result<f64> {
        Ok(self.forward(state)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(state)?))
    }

    fn loss_and_gradient(&self, batch: &[TdSample<'_, usize>]) -> Result<(f64, Vec<f64>)> {
        let layout = &*self.layout;
        let n_layers = layout.slots.len();
        let widths = layout.arch.widths();
        // activations[l] is the input of layer l; activations[n_layers] the output.
        let mut activations: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
        let mut delta = vec![0.0; layout.max_width];
        let mut delta_prev = vec![0.0; layout.max_width];
        let mut grad = vec![0.0; layout.len];
        let mut loss = 0.0;

        for sample in batch {
            self.check_input(sample.state)?;
            if sample.action >= layout.arch.output_dim {
                return Err(IqnError::input(format!(
                    "action {} out of range for {} outputs",
                    sample.action, layout.arch.output_dim
                )));
            }
            activations[0].copy_from_slice(sample.state);
            for (l, slot) in layout.slots.iter().enumerate() {
                let (head, tail) = activations.split_at_mut(l + 1);
                let input = &head[l];
                let output = &mut tail[0];
                let w = &self.theta[slot.weights..slot.bias];
                for o in 0..slot.fan_out {
                    let z = self.theta[slot.bias + o] + dot(&w[o * slot.fan_in..(o + 1) * slot.fan_in], input);
                    output[o] = if l + 1 < n_layers { z.max(0.0) } else { z };
                }
            }
            let q = activations[n_layers][sample.action];
            let residual = sample.target - q;
            loss += residual * residual;

            // dL/dQ_a = −2 (target − Q_a); other outputs do not enter the loss.
            let out_dim = layout.arch.output_dim;
            delta[..out_dim].iter_mut().for_each(|d| *d = 0.0);
            delta[sample.action] = -2.0 * residual;

            for l in (0..n_layers).rev() {
                let slot = layout.slots[l];
                let input = &activations[l];
                for o in 0..slot.fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    grad[slot.bias + o] += d;
                    let row = &mut grad[slot.weights + o * slot.fan_in..slot.weights + (o + 1) * slot.fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if l == 0 {
                    break;
                }
                // Back through W, then the ReLU of the previous layer.
                let w = &self.theta[slot.weights..slot.bias];
                for i in 0..slot.fan_in {
                    delta_prev[i] = if input[i] > 0.0 {
                        (0..slot.fan_out).map(|o| w[o * slot.fan_in + i] * delta[o]).sum()
                    } else {
                        0.0
                    };
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
        Ok((loss, grad))
    }

    fn evaluate_transitions(
        &self,
        transitions: &[Transition<usize>],
        q_sa: &mut [f64],
        max_next: &mut [f64],
    ) -> Result<()> {
        let mut scratch = Scratch::new(self.layout.max_width);
        for ((t, q), m) in transitions.iter().zip(q_sa.iter_mut()).zip(max_next.iter_mut()) {
            self.check_input(&t.state)?;
            self.check_input(&t.next_state)?;
            let out = self.forward_scratch(&t.state, &mut scratch);
            *q = *out
                .get(t.action)
                .ok_or_else(|| IqnError::input(format!("action {} out of range", t.action)))?;
            *m = self.forward_scratch(&t.next_state, &mut scratch).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn car_arch() -> MlpArchitecture {
        MlpArchitecture::new(2, vec![50], 2).unwrap()
    }

    #[test]
    fn zero_network_outputs_zeros() {
        let net = MlpParams::zeros(car_arch());
        assert_eq!(net.forward(&[0.3, -1.2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer_passes_state_through() {
        let mut net = MlpParams::zeros(MlpArchitecture::new(2, vec![], 2).unwrap());
        *net.weight_mut(0, 0, 0) = 1.0;
        *net.weight_mut(0, 1, 1) = 1.0;
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn parameter_count_matches_layout() {
        assert_eq!(car_arch().num_params(), 2 * 50 + 50 + 50 * 2 + 2);
        assert_eq!(MlpParams::zeros(car_arch()).num_params(), 252);
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(MlpArchitecture::new(2, vec![0], 2).is_err());
        assert!(MlpArchitecture::new(0, vec![], 2).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let net = MlpParams::zeros(car_arch());
        assert!(matches!(net.forward(&[1.0]), Err(IqnError::Input(_))));
        assert!(matches!(net.q_value(&[1.0, 0.0], 2), Err(IqnError::Input(_))));
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let net = MlpParams::he_uniform(car_arch(), &mut stream(0, Stream::Init));
        let states = [[0.1, 0.2], [-0.7, 1.5], [0.9, -2.0]];
        let batch: Vec<_> = states
            .iter()
            .enumerate()
            .map(|(i, s)| TdSample { state: s, action: i % 2, target: net.q_value(s, i % 2).unwrap() })
            .collect();
        let (loss, grad) = net.loss_and_gradient(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_linear_row_gradient_is_minus_two_delta_times_input() {
        let mut net = MlpParams::zeros(MlpArchitecture::new(2, vec![], 2).unwrap());
        *net.weight_mut(0, 1, 0) = 0.5;
        *net.weight_mut(0, 1, 1) = -1.0;
        *net.bias_mut(0, 1) = 0.25;
        let state = [2.0, 3.0];
        let q = net.q_value(&state, 1).unwrap();
        let delta = 0.75;
        let (loss, grad) = net
            .loss_and_gradient(&[TdSample { state: &state, action: 1, target: q + delta }])
            .unwrap();
        assert!((loss - delta * delta).abs() < 1e-15);
        // θ = [W00, W01, W10, W11, b0, b1]; ∂Q_1/∂θ = [0, 0, s0, s1, 0, 1].
        let expected = [0.0, 0.0, -2.0 * delta * 2.0, -2.0 * delta * 3.0, 0.0, -2.0 * delta];
        for (g, e) in grad.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14, "{grad:?}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = MlpParams::he_uniform(MlpArchitecture::new(3, vec![7, 5], 4).unwrap(), &mut stream(1, Stream::Init));
        let s = [0.2, -0.4, 0.9];
        assert_eq!(net.forward(&s).unwrap(), net.forward(&s).unwrap());
    }

    #[test]
    fn argmax_breaks_ties_towards_lowest_index() {
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn he_uniform_respects_bounds_and_zero_biases() {
        let arch = MlpArchitecture::new(2, vec![50], 2).unwrap();
        let net = MlpParams::he_uniform(arch, &mut stream(3, Stream::Init));
        let theta = net.params();
        let b1 = (6.0f64 / 2.0).sqrt();
        assert!(theta[..100].iter().all(|w| w.abs() <= b1));
        assert!(theta[100..150].iter().all(|&b| b == 0.0));
        assert!(theta[250..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn batch_evaluation_matches_pointwise() {
        let net = MlpParams::he_uniform(car_arch(), &mut stream(4, Stream::Init));
        let ts = vec![
            Transition { state: vec![0.1, 0.5], action: 1, reward: 0.0, next_state: vec![0.2, 0.4], terminal: false },
            Transition { state: vec![-0.3, -1.0], action: 0, reward: 1.0, next_state: vec![1.1, 0.0], terminal: true },
        ];
        let mut q = vec![0.0; 2];
        let mut m = vec![0.0; 2];
        net.evaluate_transitions(&ts, &mut q, &mut m).unwrap();
        for (i, t) in ts.iter().enumerate() {
            assert_eq!(q[i], net.q_value(&t.state, t.action).unwrap());
            assert_eq!(m[i], net.max_q(&t.next_state).unwrap());
        }
    }
}
