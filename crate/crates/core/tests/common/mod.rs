//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use iqn::approximator::{AdamConfig, MlpArchitecture, MlpParams, QFunction};
use iqn::envs::{chain_mdp, collect_uniform_dataset, CarOnHill, TabularEnv, Transition};
use iqn::rng::Rng;
use rand::Rng as _;

/// Double-double number `hi + lo`, enough precision that finite differences
/// of the loss carry no visible rounding error.
#[derive(Clone, Copy, Debug)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let e = (self.hi - (s - bb)) + (o.hi - bb);
        quick_two_sum(s, e + self.lo + o.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Dense ReLU forward pass written from the layout description alone:
/// per layer, `out × in` row-major weights then `out` biases. Also returns
/// the sign pattern of every hidden pre-activation.
pub fn reference_forward(widths: &[usize], theta: &[Dd], x: &[f64]) -> (Vec<Dd>, Vec<bool>) {
    let mut input: Vec<Dd> = x.iter().map(|&v| Dd::from(v)).collect();
    let mut offset = 0;
    let mut pattern = Vec::new();
    let layers = widths.len() - 1;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let bias = offset + fan_in * fan_out;
        let mut out = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let mut z = theta[bias + o];
            for i in 0..fan_in {
                z = z.add(theta[offset + o * fan_in + i].mul(input[i]));
            }
            if l + 1 < layers {
                pattern.push(z.is_positive());
                out.push(if z.is_positive() { z } else { Dd::ZERO });
            } else {
                out.push(z);
            }
        }
        offset = bias + fan_out;
        input = out;
    }
    (input, pattern)
}

pub struct FdSample {
    pub state: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// `Σ (target − Q(s, a))²` in double-double, plus the concatenated
/// activation patterns.
pub fn reference_loss(widths: &[usize], theta: &[Dd], batch: &[FdSample]) -> (Dd, Vec<bool>) {
    let mut loss = Dd::ZERO;
    let mut patterns = Vec::new();
    for s in batch {
        let (q, p) = reference_forward(widths, theta, &s.state);
        let r = Dd::from(s.target).sub(q[s.action]);
        loss = loss.add(r.mul(r));
        patterns.extend(p);
    }
    (loss, patterns)
}

/// Central finite difference of the reference loss in coordinate `j`.
/// Returns `None` when the stencil straddles a ReLU kink.
pub fn central_difference(widths: &[usize], theta: &[f64], batch: &[FdSample], j: usize, h: f64) -> Option<f64> {
    let mut plus: Vec<Dd> = theta.iter().map(|&v| Dd::from(v)).collect();
    let mut minus = plus.clone();
    plus[j] = plus[j].add(Dd::from(h));
    minus[j] = minus[j].sub(Dd::from(h));
    let centre: Vec<Dd> = theta.iter().map(|&v| Dd::from(v)).collect();
    let (lp, pp) = reference_loss(widths, &plus, batch);
    let (lm, pm) = reference_loss(widths, &minus, batch);
    let (_, pc) = reference_loss(widths, &centre, batch);
    if pp != pc || pm != pc {
        return None;
    }
    Some(lp.sub(lm).to_f64() / (2.0 * h))
}

/// Central difference with `h`, shrinking `h` by 1000 (up to three times)
/// while the stencil straddles a kink.
pub fn fd_gradient_coordinate(widths: &[usize], theta: &[f64], batch: &[FdSample], j: usize, h: f64) -> Option<f64> {
    let mut h = h;
    for _ in 0..4 {
        if let Some(g) = central_difference(widths, theta, batch, j, h) {
            return Some(g);
        }
        h *= 1e-3;
    }
    None
}

/// Random small architecture, unit-scale parameters and a random batch.
pub fn random_mlp_problem(rng: &mut Rng) -> (MlpParams, Vec<FdSample>) {
    let input = rng.gen_range(1..=4);
    let hidden: Vec<usize> = (0..rng.gen_range(0..=3)).map(|_| rng.gen_range(1..=10)).collect();
    let output = rng.gen_range(1..=4);
    let arch = MlpArchitecture::new(input, hidden, output).unwrap();
    let theta: Vec<f64> = (0..arch.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let params = MlpParams::unflatten(arch, theta).unwrap();
    let batch = (0..rng.gen_range(1..=16))
        .map(|_| FdSample {
            state: (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            action: rng.gen_range(0..output),
            target: rng.gen_range(-3.0..3.0),
        })
        .collect();
    (params, batch)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

pub fn car_mlp() -> MlpArchitecture {
    MlpArchitecture::new(2, vec![50], 2).unwrap()
}

pub fn he_init(arch: MlpArchitecture) -> impl FnMut(usize, &mut Rng) -> MlpParams {
    move |_, rng| MlpParams::he_uniform(arch.clone(), rng)
}

pub fn car_dataset(n: usize, seed: u64) -> Vec<Transition> {
    collect_uniform_dataset(&mut CarOnHill::default(), n, seed)
}

/// Six-state chain with a 20-step episode limit.
pub fn small_chain() -> TabularEnv {
    chain_mdp(6, 0.9, Some(20)).unwrap()
}

pub fn chain_dataset(n: usize, seed: u64) -> Vec<Transition> {
    collect_uniform_dataset(&mut small_chain(), n, seed)
}

pub fn adam(lr: f64) -> AdamConfig {
    AdamConfig::with_learning_rate(lr)
}

pub fn bits<F: QFunction>(f: &F) -> Vec<u64> {
    f.params().iter().map(|x| x.to_bits()).collect()
}
