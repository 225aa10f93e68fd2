//! Approximation errors under `ν`, the sufficient condition for a decreasing
//! error sum between consecutive snapshots, and an observer that records both
//! during training.

use std::io::{Read, Write};

use crate::approximator::QFunction;
use crate::chain::{SnapshotRecord, TrainingObserver};
use crate::codec::{expect_magic, read_f64, read_f64s, read_len, read_u64, write_f64, write_f64s, write_magic, write_u64};
use crate::envs::Transition;
use crate::error::{IqnError, Result};

/// `Q_θ(s_i, a_i)` and `Γ̂Q_θ(t_i)` over a fixed sample of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkEvaluation {
    pub q_sa: Vec<f64>,
    pub backup: Vec<f64>,
}

pub fn evaluate_network<F: QFunction>(net: &F, data: &[Transition<F::Action>], gamma: f64) -> Result<NetworkEvaluation> {
    let mut q_sa = vec![0.0; data.len()];
    let mut max_next = vec![0.0; data.len()];
    net.evaluate_transitions(data, &mut q_sa, &mut max_next)?;
    let backup = data
        .iter()
        .zip(&max_next)
        .map(|(t, &m)| if t.terminal { t.reward } else { t.reward + gamma * m })
        .collect();
    Ok(NetworkEvaluation { q_sa, backup })
}

/// `mean_i (a_i − b_i)²`, summed left to right.
pub fn mean_squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    sum / a.len() as f64
}

/// `‖Γ̂Q_prev − Q_cur‖²_{2,ν}` with `ν` the empirical distribution of `data`.
pub fn approximation_error<F: QFunction>(prev: &F, cur: &F, data: &[Transition<F::Action>], gamma: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(IqnError::input("approximation error needs a non-empty sample"));
    }
    let p = evaluate_network(prev, data, gamma)?;
    let c = evaluate_network(cur, data, gamma)?;
    Ok(mean_squared_distance(&p.backup, &c.q_sa))
}

/// Evaluations of every network of a snapshot, `nets[0]` being `θ_0`.
#[derive(Clone, Debug)]
pub struct SnapshotEvaluation {
    pub index: u64,
    pub window: u64,
    pub nets: Vec<NetworkEvaluation>,
    theta0: Vec<f64>,
}

/// Evaluates a snapshot. When `reuse` holds an evaluation with the same
/// `θ_0`, that network's vectors are copied instead of recomputed.
pub fn evaluate_snapshot<F: QFunction>(
    snap: &SnapshotRecord<F>,
    data: &[Transition<F::Action>],
    gamma: f64,
    reuse: Option<&SnapshotEvaluation>,
) -> Result<SnapshotEvaluation> {
    let theta0 = snap.params[0].params().to_vec();
    let mut nets = Vec::with_capacity(snap.params.len());
    match reuse {
        Some(prev) if prev.theta0 == theta0 && prev.nets[0].q_sa.len() == data.len() => nets.push(prev.nets[0].clone()),
        _ => nets.push(evaluate_network(&snap.params[0], data, gamma)?),
    }
    for net in &snap.params[1..] {
        nets.push(evaluate_network(net, data, gamma)?);
    }
    Ok(SnapshotEvaluation { index: snap.index, window: snap.window, nets, theta0 })
}

/// Quantities compared between snapshots `t` and `t + 1`. Norms are
/// `√(mean of squares)` under `ν`; errors are squared norms.
#[derive(Clone, Debug, PartialEq)]
pub struct Prop1Outcome {
    /// `e_k(t) = ‖Γ̂Q_{θ_{k−1}^t} − Q_{θ_k^t}‖²`, `k = 1..K`.
    pub errors_t: Vec<f64>,
    pub errors_t1: Vec<f64>,
    pub csae_t: f64,
    pub csae_t1: f64,
    /// `‖Γ̂Q_{θ_{k−1}^t} − Q_{θ_k^t}‖`.
    pub before: Vec<f64>,
    /// `‖Γ̂Q_{θ_{k−1}^t} − Q_{θ_k^{t+1}}‖`.
    pub cross: Vec<f64>,
    /// `‖Γ̂Q_{θ_{k−1}^{t+1}} − Γ̂Q_{θ_{k−1}^t}‖`.
    pub displacement: Vec<f64>,
    /// `before − cross ≥ displacement`, per `k`.
    pub eq5: Vec<bool>,
    /// `CSAE(t + 1) ≤ CSAE(t)`.
    pub eq6: bool,
}

impl Prop1Outcome {
    pub fn all_eq5(&self) -> bool {
        self.eq5.iter().all(|&b| b)
    }
}

fn window_errors(e: &SnapshotEvaluation) -> Vec<f64> {
    (1..e.nets.len()).map(|k| mean_squared_distance(&e.nets[k - 1].backup, &e.nets[k].q_sa)).collect()
}

pub fn proposition1_from_evaluations(t: &SnapshotEvaluation, t1: &SnapshotEvaluation) -> Result<Prop1Outcome> {
    if t.nets.len() != t1.nets.len() {
        return Err(IqnError::input(format!(
            "snapshots hold K = {} and K = {}",
            t.nets.len() - 1,
            t1.nets.len() - 1
        )));
    }
    let errors_t = window_errors(t);
    let errors_t1 = window_errors(t1);
    let csae_t = errors_t.iter().sum();
    let csae_t1 = errors_t1.iter().sum();
    let k = errors_t.len();
    let before: Vec<f64> = errors_t.iter().map(|e| e.sqrt()).collect();
    let cross: Vec<f64> =
        (1..=k).map(|k| mean_squared_distance(&t.nets[k - 1].backup, &t1.nets[k].q_sa).sqrt()).collect();
    let displacement: Vec<f64> =
        (1..=k).map(|k| mean_squared_distance(&t1.nets[k - 1].backup, &t.nets[k - 1].backup).sqrt()).collect();
    let eq5 = (0..k).map(|i| before[i] - cross[i] >= displacement[i]).collect();
    Ok(Prop1Outcome { errors_t, errors_t1, csae_t, csae_t1, before, cross, displacement, eq5, eq6: csae_t1 <= csae_t })
}

/// Evaluates both snapshots on `data` and compares them.
pub fn proposition1_check<F: QFunction>(
    snap_t: &SnapshotRecord<F>,
    snap_t1: &SnapshotRecord<F>,
    data: &[Transition<F::Action>],
    gamma: f64,
) -> Result<Prop1Outcome> {
    if snap_t.k() != snap_t1.k() {
        return Err(IqnError::input(format!("snapshots hold K = {} and K = {}", snap_t.k(), snap_t1.k())));
    }
    if data.is_empty() {
        return Err(IqnError::input("proposition check needs a non-empty sample"));
    }
    let a = evaluate_snapshot(snap_t, data, gamma, None)?;
    let b = evaluate_snapshot(snap_t1, data, gamma, Some(&a))?;
    proposition1_from_evaluations(&a, &b)
}

/// Diagnostics of one consecutive snapshot pair `(t, t + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub snapshot: u64,
    pub window: u64,
    pub outcome: Prop1Outcome,
    pub perf_loss: Option<f64>,
}

impl DiagnosticsRecord {
    pub fn csae(&self) -> f64 {
        self.outcome.csae_t
    }

    pub fn next_csae(&self) -> f64 {
        self.outcome.csae_t1
    }

    /// `CSAE(t) − CSAE(t + 1)`.
    pub fn decrease(&self) -> f64 {
        self.outcome.csae_t - self.outcome.csae_t1
    }
}

/// A Bellman iterate that left the window.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub iteration: u64,
    /// `‖Γ̂Q_{n−1} − Q_n‖²_{2,ν}` on the full dataset.
    pub approx_error: f64,
    pub perf_loss: Option<f64>,
}

type PerfFn<'a, F> = Box<dyn FnMut(&F) -> Result<f64> + 'a>;

/// Training observer recording snapshot-pair diagnostics on `pair_data` and
/// iterate errors on `iterate_data`.
pub struct DiagnosticsEngine<'a, F: QFunction> {
    pair_data: &'a [Transition<F::Action>],
    iterate_data: &'a [Transition<F::Action>],
    gamma: f64,
    pair_stride: u64,
    perf: Option<PerfFn<'a, F>>,
    last: Option<SnapshotEvaluation>,
    pub records: Vec<DiagnosticsRecord>,
    pub iterates: Vec<IterateRecord>,
}

impl<'a, F: QFunction> DiagnosticsEngine<'a, F> {
    /// Pairs `(t, t + 1)` are recorded for every `t` divisible by
    /// `pair_stride`, when no window shift separates them.
    pub fn new(
        pair_data: &'a [Transition<F::Action>],
        iterate_data: &'a [Transition<F::Action>],
        gamma: f64,
        pair_stride: u64,
    ) -> Result<Self> {
        if pair_data.is_empty() || iterate_data.is_empty() || pair_stride == 0 {
            return Err(IqnError::input("diagnostics need non-empty samples and a positive stride"));
        }
        Ok(Self {
            pair_data,
            iterate_data,
            gamma,
            pair_stride,
            perf: None,
            last: None,
            records: Vec::new(),
            iterates: Vec::new(),
        })
    }

    /// Performance loss evaluated on every completed iterate.
    pub fn with_performance_loss(mut self, perf: impl FnMut(&F) -> Result<f64> + 'a) -> Self {
        self.perf = Some(Box::new(perf));
        self
    }

    /// `Σ_n ‖Γ̂Q_{n−1} − Q_n‖²` over the completed iterates.
    pub fn error_sum(&self) -> f64 {
        self.iterates.iter().map(|r| r.approx_error).sum()
    }

    /// Records, iterates and the pending pair start, so that a run resumed
    /// from a checkpoint records exactly what an uninterrupted one would.
    pub fn write_state<W: Write>(&self, w: &mut W) -> Result<()> {
        write_magic(w, ENGINE_MAGIC)?;
        write_u64(w, self.records.len() as u64)?;
        for r in &self.records {
            write_record(w, r)?;
        }
        write_u64(w, self.iterates.len() as u64)?;
        for r in &self.iterates {
            write_u64(w, r.iteration)?;
            write_f64(w, r.approx_error)?;
            write_opt(w, r.perf_loss)?;
        }
        match &self.last {
            None => write_u64(w, 0),
            Some(e) => {
                write_u64(w, 1)?;
                write_u64(w, e.index)?;
                write_u64(w, e.window)?;
                write_f64s(w, &e.theta0)?;
                write_u64(w, e.nets.len() as u64)?;
                for n in &e.nets {
                    write_f64s(w, &n.q_sa)?;
                    write_f64s(w, &n.backup)?;
                }
                Ok(())
            }
        }
    }

    /// Replaces the recorded state with one written by [`Self::write_state`].
    pub fn read_state<R: Read>(&mut self, r: &mut R) -> Result<()> {
        expect_magic(r, ENGINE_MAGIC)?;
        let n = read_len(r, 1 << 32)?;
        let records = (0..n).map(|_| read_record(r)).collect::<Result<Vec<_>>>()?;
        let n = read_len(r, 1 << 32)?;
        let iterates = (0..n)
            .map(|_| Ok(IterateRecord { iteration: read_u64(r)?, approx_error: read_f64(r)?, perf_loss: read_opt(r)? }))
            .collect::<Result<Vec<_>>>()?;
        let last = match read_u64(r)? {
            0 => None,
            1 => {
                let index = read_u64(r)?;
                let window = read_u64(r)?;
                let theta0 = read_f64s(r)?;
                let n = read_len(r, 1 << 20)?;
                let nets = (0..n)
                    .map(|_| Ok(NetworkEvaluation { q_sa: read_f64s(r)?, backup: read_f64s(r)? }))
                    .collect::<Result<Vec<_>>>()?;
                if nets.iter().any(|e| e.q_sa.len() != self.pair_data.len()) {
                    return Err(IqnError::Format("stored evaluation does not match the pair sample".into()));
                }
                Some(SnapshotEvaluation { index, window, nets, theta0 })
            }
            other => return Err(IqnError::Format(format!("bad pending-pair flag {other}"))),
        };
        self.records = records;
        self.iterates = iterates;
        self.last = last;
        Ok(())
    }
}

const ENGINE_MAGIC: &[u8; 8] = b"IQNDIAG1";

fn write_opt<W: Write>(w: &mut W, x: Option<f64>) -> Result<()> {
    write_u64(w, u64::from(x.is_some()))?;
    write_f64(w, x.unwrap_or(0.0))
}

fn read_opt<R: Read>(r: &mut R) -> Result<Option<f64>> {
    let flag = read_u64(r)?;
    let x = read_f64(r)?;
    Ok((flag == 1).then_some(x))
}

fn bools_to_f64s(b: &[bool]) -> Vec<f64> {
    b.iter().map(|&x| f64::from(u8::from(x))).collect()
}

fn write_record<W: Write>(w: &mut W, r: &DiagnosticsRecord) -> Result<()> {
    let o = &r.outcome;
    write_u64(w, r.snapshot)?;
    write_u64(w, r.window)?;
    for v in [&o.errors_t, &o.errors_t1, &o.before, &o.cross, &o.displacement] {
        write_f64s(w, v)?;
    }
    write_f64s(w, &bools_to_f64s(&o.eq5))?;
    write_f64(w, o.csae_t)?;
    write_f64(w, o.csae_t1)?;
    write_u64(w, u64::from(o.eq6))?;
    write_opt(w, r.perf_loss)
}

fn read_record<R: Read>(r: &mut R) -> Result<DiagnosticsRecord> {
    let snapshot = read_u64(r)?;
    let window = read_u64(r)?;
    let errors_t = read_f64s(r)?;
    let errors_t1 = read_f64s(r)?;
    let before = read_f64s(r)?;
    let cross = read_f64s(r)?;
    let displacement = read_f64s(r)?;
    let eq5 = read_f64s(r)?.into_iter().map(|x| x == 1.0).collect();
    let csae_t = read_f64(r)?;
    let csae_t1 = read_f64(r)?;
    let eq6 = read_u64(r)? == 1;
    let perf_loss = read_opt(r)?;
    let outcome = Prop1Outcome { errors_t, errors_t1, csae_t, csae_t1, before, cross, displacement, eq5, eq6 };
    Ok(DiagnosticsRecord { snapshot, window, outcome, perf_loss })
}

impl<F: QFunction> TrainingObserver<F> for DiagnosticsEngine<'_, F> {
    fn on_snapshot(&mut self, snap: &SnapshotRecord<F>) -> Result<()> {
        let starts_pair = snap.index % self.pair_stride == 0;
        let ends_pair =
            matches!(&self.last, Some(l) if l.index + 1 == snap.index && l.window == snap.window);
        if !starts_pair && !ends_pair {
            self.last = None;
            return Ok(());
        }
        let reuse = self.last.as_ref().filter(|l| l.window == snap.window);
        let eval = evaluate_snapshot(snap, self.pair_data, self.gamma, reuse)?;
        if ends_pair {
            let prev = self.last.as_ref().expect("pair end implies a stored start");
            let outcome = proposition1_from_evaluations(prev, &eval)?;
            self.records.push(DiagnosticsRecord { snapshot: prev.index, window: prev.window, outcome, perf_loss: None });
        }
        self.last = starts_pair.then_some(eval);
        Ok(())
    }

    fn on_iterate_completed(&mut self, iteration: u64, previous: &F, completed: &F) -> Result<()> {
        let approx_error = approximation_error(previous, completed, self.iterate_data, self.gamma)?;
        let perf_loss = match &mut self.perf {
            Some(f) => Some(f(completed)?),
            None => None,
        };
        self.iterates.push(IterateRecord { iteration, approx_error, perf_loss });
        Ok(())
    }
}

fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

/// Columns `snapshot_t,k,approx_error,csae,eq5_holds,eq6_holds,displacement,perf_loss`:
/// one row per `(t, k)` and a summary row with `k = −1` holding the error
/// sum, the all-`k` displacement condition and the summed displacement.
pub fn write_diagnostics_csv<W: Write>(writer: W, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["snapshot_t", "k", "approx_error", "csae", "eq5_holds", "eq6_holds", "displacement", "perf_loss"])?;
    for r in records {
        let o = &r.outcome;
        let csae = format!("{:?}", o.csae_t);
        let eq6 = u8::from(o.eq6).to_string();
        let perf = opt_cell(r.perf_loss);
        for k in 0..o.errors_t.len() {
            w.write_record([
                r.snapshot.to_string(),
                (k + 1).to_string(),
                format!("{:?}", o.errors_t[k]),
                csae.clone(),
                u8::from(o.eq5[k]).to_string(),
                eq6.clone(),
                format!("{:?}", o.displacement[k]),
                perf.clone(),
            ])?;
        }
        w.write_record([
            r.snapshot.to_string(),
            "-1".into(),
            csae.clone(),
            csae,
            u8::from(o.all_eq5()).to_string(),
            eq6,
            format!("{:?}", o.displacement.iter().sum::<f64>()),
            perf,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `iteration,approx_error,error_sum,perf_loss`, where `error_sum`
/// accumulates the errors of iterations `1..=iteration`.
pub fn write_iterates_csv<W: Write>(writer: W, iterates: &[IterateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "approx_error", "error_sum", "perf_loss"])?;
    let mut sum = 0.0;
    for r in iterates {
        sum += r.approx_error;
        w.write_record([
            r.iteration.to_string(),
            format!("{:?}", r.approx_error),
            format!("{sum:?}"),
            opt_cell(r.perf_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}
