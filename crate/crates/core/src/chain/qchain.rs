use rand::Rng as _;
use rayon::prelude::*;

use super::operators::empirical_bellman_optimal;
use crate::approximator::{td_loss_and_gradient, AdamConfig, AdamState, QFunction, TdSample};
use crate::envs::Transition;
use crate::error::{IqnError, Result};
use crate::rng::Rng;

/// Periods are counted in calls to [`QChain::tick`]: gradient events for
/// i-FQI, environment steps for i-DQN.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    /// `D`: rolling target update period.
    pub rolling_period: u64,
    /// `T`: window shift period.
    pub shift_period: u64,
    /// Shifts stop once this many have happened.
    pub max_shifts: Option<u64>,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.rolling_period == 0 || self.shift_period == 0 {
            return Err(IqnError::config("rolling and shift periods must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub ticks: u64,
    pub since_rolling: u64,
    pub since_shift: u64,
    pub shifts: u64,
    pub rolling_updates: u64,
}

/// What became due on a tick. Callers apply the shift before the rolling
/// update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tick {
    pub shift: bool,
    pub rolling: bool,
}

/// `(θ_k^t)_{k=0..K}` at a rolling-update instant, with `params[0] = θ̄_0`
/// and `params[k] = θ_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord<F> {
    pub index: u64,
    /// Number of window shifts before this snapshot.
    pub window: u64,
    pub params: Vec<F>,
}

impl<F> SnapshotRecord<F> {
    pub fn k(&self) -> usize {
        self.params.len() - 1
    }
}

/// `K` online networks `θ_1..θ_K` and `K` targets `θ̄_0..θ̄_{K−1}`; online
/// network `k` regresses onto the empirical Bellman update of target `k − 1`.
/// Indices in this API are 0-based: `online()[i]` is `θ_{i+1}` and
/// `targets()[i]` is `θ̄_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct QChain<F: QFunction> {
    online: Vec<F>,
    targets: Vec<F>,
    optimizers: Vec<AdamState>,
    gamma: f64,
    schedule: Schedule,
    counters: Counters,
}

impl<F: QFunction> QChain<F> {
    /// Starts with `θ̄_0 = target0` and `θ̄_k = θ_k` for `k ≥ 1`.
    pub fn new(target0: F, online: Vec<F>, adam: AdamConfig, gamma: f64, schedule: Schedule) -> Result<Self> {
        if online.is_empty() {
            return Err(IqnError::config("the chain needs K ≥ 1 online networks"));
        }
        schedule.validate()?;
        let dim = target0.num_params();
        if online.iter().any(|f| f.num_params() != dim) {
            return Err(IqnError::config("all networks in the chain must share one architecture"));
        }
        let mut targets = Vec::with_capacity(online.len());
        targets.push(target0);
        targets.extend(online[..online.len() - 1].iter().cloned());
        let optimizers = online.iter().map(|f| AdamState::new(adam, f.num_params())).collect();
        Ok(Self { online, targets, optimizers, gamma, schedule, counters: Counters::default() })
    }

    pub(crate) fn from_parts(
        online: Vec<F>,
        targets: Vec<F>,
        optimizers: Vec<AdamState>,
        gamma: f64,
        schedule: Schedule,
        counters: Counters,
    ) -> Result<Self> {
        if online.is_empty() || online.len() != targets.len() || online.len() != optimizers.len() {
            return Err(IqnError::Format("chain parts have inconsistent lengths".into()));
        }
        Ok(Self { online, targets, optimizers, gamma, schedule, counters })
    }

    pub fn k(&self) -> usize {
        self.online.len()
    }

    pub fn online(&self) -> &[F] {
        &self.online
    }

    pub fn targets(&self) -> &[F] {
        &self.targets
    }

    pub fn optimizers(&self) -> &[AdamState] {
        &self.optimizers
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// The last online network `θ_K`, the furthest Bellman update learned.
    pub fn head(&self) -> &F {
        &self.online[self.online.len() - 1]
    }

    /// Targets of online network `i` (0-based) on `batch`, built from `θ̄_i`.
    pub fn td_targets(&self, i: usize, batch: &[Transition<F::Action>]) -> Result<Vec<f64>> {
        bellman_targets(&self.targets[i], batch, self.gamma)
    }

    /// The `K` QN losses and their gradients on one shared batch.
    pub fn iqn_loss(&self, batch: &[Transition<F::Action>]) -> Result<Vec<(f64, Vec<f64>)>> {
        if batch.is_empty() {
            return Err(IqnError::input("empty batch"));
        }
        (0..self.k())
            .map(|i| {
                let y = self.td_targets(i, batch)?;
                td_loss_and_gradient(&self.online[i], &td_samples(batch, &y))
            })
            .collect()
    }

    /// One Adam step for every online network on its own loss over the shared
    /// batch. All targets are read from the frozen `θ̄` before any update, so
    /// serial and parallel execution agree bitwise. Returns the `K` losses.
    pub fn gradient_update_all(&mut self, batch: &[Transition<F::Action>], parallel: bool) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(IqnError::input("empty batch"));
        }
        let Self { online, targets, optimizers, gamma, .. } = self;
        let targets = &*targets;
        let gamma = *gamma;
        let update = |i: usize, net: &mut F, opt: &mut AdamState| -> Result<f64> {
            let y = bellman_targets(&targets[i], batch, gamma)?;
            let (loss, grad) = td_loss_and_gradient(net, &td_samples(batch, &y))?;
            opt.step(net.params_mut(), &grad)?;
            net.project();
            Ok(loss)
        };
        if parallel && online.len() > 1 {
            online
                .par_iter_mut()
                .zip(optimizers.par_iter_mut())
                .enumerate()
                .map(|(i, (net, opt))| update(i, net, opt))
                .collect()
        } else {
            online
                .iter_mut()
                .zip(optimizers.iter_mut())
                .enumerate()
                .map(|(i, (net, opt))| update(i, net, opt))
                .collect()
        }
    }

    /// `θ̄_k ← θ_k` for `k = 1..K−1`; returns the snapshot taken right after.
    pub fn rolling_target_update(&mut self) -> SnapshotRecord<F> {
        let k = self.k();
        for i in 1..k {
            self.targets[i].clone_from(&self.online[i - 1]);
        }
        self.counters.rolling_updates += 1;
        self.counters.since_rolling = 0;
        self.snapshot()
    }

    /// `θ̄_k ← θ_{k+1}` for `k = 0..K−1`. Online networks keep their values.
    pub fn window_shift(&mut self) {
        for i in 0..self.k() {
            self.targets[i].clone_from(&self.online[i]);
        }
        self.counters.shifts += 1;
        self.counters.since_shift = 0;
    }

    pub fn snapshot(&self) -> SnapshotRecord<F> {
        let mut params = Vec::with_capacity(self.k() + 1);
        params.push(self.targets[0].clone());
        params.extend(self.online.iter().cloned());
        SnapshotRecord { index: self.counters.rolling_updates, window: self.counters.shifts, params }
    }

    /// Uniform 0-based index of the behaviour network.
    pub fn sample_behavior_network(&self, rng: &mut Rng) -> usize {
        sample_behavior_network(self.k(), rng)
    }

    /// Advances the schedule by one unit and reports what is due. The caller
    /// performs the shift and the rolling update.
    pub fn tick(&mut self) -> Tick {
        self.counters.ticks += 1;
        self.counters.since_rolling += 1;
        self.counters.since_shift += 1;
        let shifts_left = self.schedule.max_shifts.map_or(true, |m| self.counters.shifts < m);
        Tick {
            shift: shifts_left && self.counters.since_shift >= self.schedule.shift_period,
            rolling: self.counters.since_rolling >= self.schedule.rolling_period,
        }
    }
}

pub(crate) fn bellman_targets<F: QFunction>(target: &F, batch: &[Transition<F::Action>], gamma: f64) -> Result<Vec<f64>> {
    batch.iter().map(|t| empirical_bellman_optimal(target, t, gamma)).collect()
}

pub(crate) fn td_samples<'a, A: Copy>(batch: &'a [Transition<A>], targets: &[f64]) -> Vec<TdSample<'a, A>> {
    batch
        .iter()
        .zip(targets)
        .map(|(t, &target)| TdSample { state: &t.state, action: t.action, target })
        .collect()
}

/// Uniform over `0..k`. With `k = 1` no randomness is consumed.
pub fn sample_behavior_network(k: usize, rng: &mut Rng) -> usize {
    if k <= 1 {
        0
    } else {
        rng.gen_range(0..k)
    }
}

/// With probability `epsilon` a uniform action, otherwise the argmax with
/// the lowest index winning ties. One uniform draw decides between the two.
pub fn epsilon_greedy_action(q_values: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    if q_values.is_empty() {
        return Err(IqnError::input("no action values"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(IqnError::input(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q_values.len()))
    } else {
        Ok(crate::approximator::argmax(q_values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::{MlpArchitecture, MlpParams};
    use crate::rng::{stream, Stream};

    fn tabular(values: &[[f64; 2]]) -> MlpParams {
        let mut net = MlpParams::zeros(MlpArchitecture::new(values.len(), vec![], 2).unwrap());
        for (s, row) in values.iter().enumerate() {
            for (a, &q) in row.iter().enumerate() {
                *net.weight_mut(0, a, s) = q;
            }
        }
        net
    }

    fn one_hot(s: usize) -> Vec<f64> {
        let mut v = vec![0.0; 3];
        v[s] = 1.0;
        v
    }

    fn batch() -> Vec<Transition> {
        vec![
            Transition { state: one_hot(0), action: 1, reward: 0.5, next_state: one_hot(1), terminal: false },
            Transition { state: one_hot(1), action: 0, reward: -1.0, next_state: one_hot(2), terminal: false },
            Transition { state: one_hot(2), action: 1, reward: 2.0, next_state: one_hot(0), terminal: true },
        ]
    }

    fn schedule() -> Schedule {
        Schedule { rolling_period: 1, shift_period: 10, max_shifts: None }
    }

    fn chain3() -> QChain<MlpParams> {
        let t0 = tabular(&[[0.1, 0.2], [0.3, -0.4], [0.0, 1.0]]);
        let online = vec![
            tabular(&[[1.0, 0.0], [0.5, 0.5], [-1.0, 2.0]]),
            tabular(&[[0.2, 0.2], [0.1, 0.9], [0.3, 0.3]]),
            tabular(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
        ];
        QChain::new(t0, online, AdamConfig::default(), 0.9, schedule()).unwrap()
    }

    #[test]
    fn k2_losses_match_hand_computation() {
        let t0 = tabular(&[[0.1, 0.2], [0.3, -0.4], [0.0, 1.0]]);
        let th1 = tabular(&[[1.0, 0.0], [0.5, 0.5], [-1.0, 2.0]]);
        let th2 = tabular(&[[0.2, 0.2], [0.1, 0.9], [0.3, 0.3]]);
        let chain = QChain::new(t0, vec![th1, th2], AdamConfig::default(), 0.9, schedule()).unwrap();
        let losses = chain.iqn_loss(&batch()).unwrap();
        // Network 1 against θ̄_0: targets 0.5 + 0.9·0.3, −1 + 0.9·1.0, 2.
        let l1 = (0.77f64 - 0.0).powi(2) + (-0.1f64 - 0.5).powi(2) + (2.0f64 - 2.0).powi(2);
        // Network 2 against θ̄_1 = θ_1: targets 0.5 + 0.9·0.5, −1 + 0.9·2.0, 2.
        let l2 = (0.95f64 - 0.2).powi(2) + (0.8f64 - 0.1).powi(2) + (2.0f64 - 0.3).powi(2);
        assert!((losses[0].0 - l1).abs() < 1e-12, "{} vs {l1}", losses[0].0);
        assert!((losses[1].0 - l2).abs() < 1e-12, "{} vs {l2}", losses[1].0);
    }

    #[test]
    fn rolling_update_copies_interior_targets_only() {
        let mut chain = chain3();
        chain.gradient_update_all(&batch(), false).unwrap();
        let theta0 = chain.targets()[0].clone();
        let snap = chain.rolling_target_update();
        assert_eq!(chain.targets()[0], theta0);
        assert_eq!(chain.targets()[1], chain.online()[0]);
        assert_eq!(chain.targets()[2], chain.online()[1]);
        assert_eq!(snap.params[0], theta0);
        assert_eq!(&snap.params[1..], chain.online());
    }

    #[test]
    fn rolling_update_is_noop_for_k1() {
        let mut chain = QChain::new(tabular(&[[1.0, 2.0]; 3]), vec![tabular(&[[0.0, 0.0]; 3])], AdamConfig::default(), 0.9, schedule()).unwrap();
        chain.gradient_update_all(&batch(), false).unwrap();
        let before = chain.targets().to_vec();
        chain.rolling_target_update();
        assert_eq!(chain.targets(), &before[..]);
    }

    #[test]
    fn window_shift_moves_targets_forward() {
        let mut chain = chain3();
        chain.gradient_update_all(&batch(), false).unwrap();
        let online = chain.online().to_vec();
        chain.window_shift();
        assert_eq!(chain.targets(), &online[..]);
        assert_eq!(chain.online(), &online[..]);
        let y = chain.td_targets(0, &batch()).unwrap();
        let expected: Vec<f64> = batch().iter().map(|t| empirical_bellman_optimal(&online[0], t, 0.9).unwrap()).collect();
        assert_eq!(y, expected);
    }

    #[test]
    fn perfect_fit_has_zero_losses() {
        let t0 = tabular(&[[0.0, 0.0]; 3]);
        // Rewards only: with θ̄_0 = 0 the targets are the rewards.
        let th1 = tabular(&[[0.0, 0.5], [-1.0, 0.0], [0.0, 2.0]]);
        let chain = QChain::new(t0, vec![th1], AdamConfig::default(), 0.9, schedule()).unwrap();
        let losses = chain.iqn_loss(&batch()).unwrap();
        assert_eq!(losses[0].0, 0.0);
        assert!(losses[0].1.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn serial_and_parallel_updates_agree_bitwise() {
        let mut a = chain3();
        let mut b = chain3();
        for _ in 0..5 {
            a.gradient_update_all(&batch(), false).unwrap();
            b.gradient_update_all(&batch(), true).unwrap();
            a.rolling_target_update();
            b.rolling_target_update();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_counts_shifts() {
        let mut chain = chain3();
        let mut shifts = 0;
        for _ in 0..20 {
            let tick = chain.tick();
            if tick.shift {
                chain.window_shift();
                shifts += 1;
            }
            if tick.rolling {
                chain.rolling_target_update();
            }
        }
        assert_eq!(shifts, 2);
        assert_eq!(chain.counters().rolling_updates, 20);
    }

    #[test]
    fn behaviour_sampling() {
        let mut rng = stream(3, Stream::Behavior);
        assert!((0..100).all(|_| sample_behavior_network(1, &mut rng) == 0));
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[sample_behavior_network(5, &mut rng)] += 1;
        }
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - 0.2 * n as f64).abs() < 3.0 * sigma), "{counts:?}");
        let a: Vec<usize> = (0..50).map({ let mut r = stream(9, Stream::Behavior); move |_| sample_behavior_network(5, &mut r) }).collect();
        let b: Vec<usize> = (0..50).map({ let mut r = stream(9, Stream::Behavior); move |_| sample_behavior_network(5, &mut r) }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn epsilon_greedy() {
        let mut rng = stream(0, Stream::Exploration);
        assert_eq!(epsilon_greedy_action(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy_action(&[2.0, 2.0], 0.0, &mut rng).unwrap(), 0);
        let n = 60_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[epsilon_greedy_action(&[0.0, 5.0, 0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - p * n as f64).abs() < 3.0 * sigma), "{counts:?}");
        assert!(epsilon_greedy_action(&[], 0.1, &mut rng).is_err());
    }
}
