//! Per-seed experiment runs and their on-disk layout.
//!
//! ```text
//! <root>/config.json          resolved config, canonical JSON
//! <root>/run.json             manifest: kind, config hash, run directories
//! <root>/K<k>/seed<s>/        one directory per (window size, seed)
//! <root>/seed<s>/             LQR runs (both window sizes in one directory)
//! <root>/summary.json         per-seed finals, IQM and bootstrap CI
//! <root>/timing.json          wall-clock
//! <root>/plot.csv             long-format plot data
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use iqn::approximator::{MlpArchitecture, MlpParams, QFunction, QuadraticQParams};
use iqn::chain::{IdqnRunner, IfqiRunner, NoObserver};
use iqn::diagnostics::{
    discretized_oracle, exact_value_iteration, lqr_trajectory_experiment, performance_loss, prop2_equivalence_check,
    rollout_horizon, table1_metrics, write_diagnostics_csv, write_iterates_csv, BackupModel, DiagnosticsEngine,
    Discretization, EvaluationGrid,
};
use iqn::envs::{chain_mdp, collect_uniform_dataset, CarOnHill, LqrModel, TabularEnv, Transition};
use iqn::rng::{stream, Stream};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult, Context};
use crate::plot::emit_plot_data;
use crate::summary::{aggregate, RunSummary, Timing, UnitTiming};

pub type Metrics = BTreeMap<String, Option<f64>>;

/// One run: a window size (absent for LQR, which runs both) and a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunUnit {
    pub k: Option<usize>,
    pub seed: u64,
}

impl RunUnit {
    pub fn relative_dir(&self) -> PathBuf {
        match self.k {
            Some(k) => PathBuf::from(format!("K{k}")).join(format!("seed{}", self.seed)),
            None => PathBuf::from(format!("seed{}", self.seed)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub runs: Vec<RunUnit>,
}

pub const MANIFEST: &str = "run.json";
pub const FINAL: &str = "final.json";
pub const CHECKPOINT: &str = "checkpoint.bin";

/// Per-run result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub k: Option<usize>,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ExperimentConfig,
    k: usize,
    seed: u64,
}

pub fn units(config: &ExperimentConfig) -> Vec<RunUnit> {
    let ks: Vec<Option<usize>> = if let Some(t) = &config.ifqi {
        t.window_sizes.iter().copied().map(Some).collect()
    } else if let Some(q) = &config.idqn {
        q.window_sizes.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    ks.into_iter().flat_map(|k| config.seeds.iter().map(move |&seed| RunUnit { k, seed })).collect()
}

/// Writes through a temporary file so readers never see half a file.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).context(|| format!("renaming {} into place", tmp.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Fails unless `path` exists as a writable directory or could be created.
pub fn check_output_path(path: &Path) -> CliResult<()> {
    let mut probe = Some(path);
    while let Some(p) = probe {
        if let Ok(meta) = std::fs::metadata(p) {
            if !meta.is_dir() {
                return Err(CliError::invariant("output_dir", format!("{} is not a directory", p.display())));
            }
            if meta.permissions().readonly() {
                return Err(CliError::invariant("output_dir", format!("{} is not writable", p.display())));
            }
            return Ok(());
        }
        probe = p.parent().filter(|q| !q.as_os_str().is_empty());
    }
    Ok(())
}

/// Car-on-hill pieces shared by every run of an experiment.
struct CarContext {
    env: CarOnHill,
    grid: EvaluationGrid,
    v_star: Vec<f64>,
    horizon: usize,
}

impl CarContext {
    fn new(config: &ExperimentConfig) -> CliResult<Self> {
        let c = config.car_on_hill.as_ref().expect("car section");
        let mut env = CarOnHill::default();
        env.gamma = c.gamma;
        let grid = EvaluationGrid::default();
        let v_star = discretized_oracle(&env, c.oracle_resolution, Discretization::Nearest)
            .and_then(|o| o.lookahead_values_on(&env, &grid, c.oracle_lookahead))
            .context(|| "car-on-hill oracle".into())?;
        Ok(Self { env, grid, v_star, horizon: rollout_horizon(c.gamma, 1e-4) })
    }
}

enum RunContext {
    Car(CarContext),
    None,
}

impl RunContext {
    fn new(config: &ExperimentConfig) -> CliResult<Self> {
        Ok(if config.car_on_hill.is_some() { RunContext::Car(CarContext::new(config)?) } else { RunContext::None })
    }
}

/// Runs every (window size, seed) of `config` under `root`, on `threads`
/// worker threads (all cores when `None`), then writes the summary and plot
/// data.
pub fn run_experiment(config: &ExperimentConfig, root: &Path, threads: Option<usize>) -> CliResult<RunSummary> {
    check_output_path(root)?;
    std::fs::create_dir_all(root).context(|| format!("creating {}", root.display()))?;
    let runs = units(config);
    let manifest = Manifest { kind: config.kind, config_hash: config.hash(), runs: runs.clone() };
    write_file(&root.join("config.json"), pretty_canonical(config).as_bytes())?;
    write_json(&root.join(MANIFEST), &manifest)?;

    let partial = |e: CliError| CliError::Partial { message: e.to_string(), partial: root.to_path_buf() };
    let started = Instant::now();
    let ctx = RunContext::new(config)?;
    let pool = thread_pool(threads)?;
    let timings: Vec<CliResult<UnitTiming>> = pool.install(|| {
        runs.par_iter()
            .map(|unit| {
                let t = Instant::now();
                run_unit(config, &ctx, *unit, &root.join(unit.relative_dir()), None)?;
                Ok(UnitTiming { k: unit.k, seed: unit.seed, seconds: t.elapsed().as_secs_f64() })
            })
            .collect()
    });
    let runs_timing = timings.into_iter().collect::<CliResult<Vec<_>>>().map_err(partial)?;
    let mut summary = aggregate(root).map_err(partial)?;
    let timing = Timing { total_seconds: started.elapsed().as_secs_f64(), runs: runs_timing };
    write_json(&root.join("timing.json"), &timing).map_err(partial)?;
    summary.wall_clock = Some(timing);
    emit_plot_data(root).map_err(partial)?;
    Ok(summary)
}

/// Finishes the run a checkpoint belongs to, then re-aggregates when every
/// run of the experiment is complete.
pub fn resume_experiment(checkpoint: &Path, threads: Option<usize>) -> CliResult<Option<RunSummary>> {
    if !checkpoint.is_file() {
        return Err(CliError::MissingInputs(vec![checkpoint.display().to_string()]));
    }
    let bytes = std::fs::read(checkpoint).context(|| format!("reading {}", checkpoint.display()))?;
    let meta = if bytes.starts_with(b"IQNFQI01") {
        IfqiRunner::<MlpParams>::read_checkpoint_meta(&mut &bytes[..])
    } else if bytes.starts_with(b"IQNDQN01") {
        IdqnRunner::<MlpParams, TabularEnv>::read_checkpoint_meta(&mut &bytes[..])
    } else {
        return Err(CliError::Format(format!("{} is not a run checkpoint", checkpoint.display())));
    }
    .context(|| format!("reading {}", checkpoint.display()))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&meta).map_err(|e| CliError::Format(format!("checkpoint metadata: {e}")))?;
    meta.config.validate()?;
    let run_dir = checkpoint.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let root = run_dir.join("..").join("..");
    let unit = RunUnit { k: Some(meta.k), seed: meta.seed };
    let pool = thread_pool(threads)?;
    pool.install(|| {
        let ctx = RunContext::new(&meta.config)?;
        run_unit(&meta.config, &ctx, unit, &run_dir, Some(&bytes))
    })?;
    match aggregate(&root) {
        Ok(summary) => {
            emit_plot_data(&root)?;
            Ok(Some(summary))
        }
        Err(CliError::MissingInputs(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::invariant("--threads", "must be at least 1"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Format(format!("thread pool: {e}")))
}

pub fn pretty_canonical(config: &ExperimentConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON value serializes");
    text.push('\n');
    text
}

fn run_unit(config: &ExperimentConfig, ctx: &RunContext, unit: RunUnit, dir: &Path, resume: Option<&[u8]>) -> CliResult<()> {
    std::fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))?;
    let metrics = match (config.kind, ctx) {
        (ExperimentKind::IdqnTabular, _) => run_idqn_unit(config, unit, dir, resume)?,
        (ExperimentKind::LqrGeometry, _) => run_lqr_unit(config, unit, dir)?,
        (_, RunContext::Car(car)) => run_car_unit(config, car, unit, dir, resume)?,
        (_, RunContext::None) => unreachable!("car experiments always build a car context"),
    };
    write_json(&dir.join(FINAL), &FinalRecord { k: unit.k, seed: unit.seed, metrics })
}

fn checkpoint_meta(config: &ExperimentConfig, k: usize, seed: u64) -> Vec<u8> {
    serde_json::to_vec(&CheckpointMeta { config: config.clone(), k, seed }).expect("metadata serializes")
}

/// Evenly spaced subsample of at most `n` transitions.
fn subsample(data: &[Transition], n: usize) -> Vec<Transition> {
    let step = (data.len() / n.max(1)).max(1);
    data.iter().step_by(step).take(n).cloned().collect()
}

fn car_dataset(config: &ExperimentConfig, seed: u64) -> Vec<Transition> {
    let c = config.car_on_hill.as_ref().expect("car section");
    let mut env = CarOnHill::default();
    env.gamma = c.gamma;
    collect_uniform_dataset(&mut env, c.samples, c.dataset_seed.unwrap_or(seed))
}

fn run_car_unit(
    config: &ExperimentConfig,
    car: &CarContext,
    unit: RunUnit,
    dir: &Path,
    resume: Option<&[u8]>,
) -> CliResult<Metrics> {
    let k = unit.k.expect("car runs have a window size");
    let t = config.ifqi.as_ref().expect("ifqi section");
    let d = config.diagnostics.as_ref().expect("diagnostics section");
    let ifqi = config.ifqi_config(k, unit.seed);
    let data = car_dataset(config, unit.seed);
    let pairs = if d.pair_stride > 0 { subsample(&data, d.pair_samples) } else { data[..1].to_vec() };
    let arch = MlpArchitecture::new(2, t.hidden.clone(), 2).context(|| "network architecture".into())?;
    let perf = |q: &MlpParams| performance_loss(q, &car.v_star, &car.env, &car.grid, car.horizon);

    let stride = if d.pair_stride > 0 { d.pair_stride } else { u64::MAX };
    let mut engine = DiagnosticsEngine::new(&pairs, &data, ifqi.gamma, stride).context(|| "diagnostics".into())?;
    if d.performance_loss {
        engine = engine.with_performance_loss(perf);
    }
    let what = || format!("i-FQI run K = {k}, seed {}", unit.seed);
    let mut runner = match resume {
        Some(bytes) => {
            let mut r = bytes;
            let (runner, _) = IfqiRunner::resume(ifqi, &data, &MlpParams::zeros(arch.clone()), &mut r).context(what)?;
            engine.read_state(&mut r).context(what)?;
            runner
        }
        None => IfqiRunner::new(ifqi, &data, |_, rng| MlpParams::he_uniform(arch.clone(), rng)).context(what)?,
    };
    let meta = checkpoint_meta(config, k, unit.seed);
    let every = t.checkpoint_every;
    while !runner.is_finished() {
        let next = match every {
            0 => ifqi.gradient_budget,
            e => ((runner.events_done() / e + 1) * e).min(ifqi.gradient_budget),
        };
        runner.run_until(next, &mut engine).context(what)?;
        if every > 0 || runner.is_finished() {
            let mut buf = Vec::new();
            runner.write_checkpoint(&mut buf, &meta).context(what)?;
            engine.write_state(&mut buf).context(what)?;
            write_file(&dir.join(CHECKPOINT), &buf)?;
        }
    }
    let chain = runner.finish(&mut engine).context(what)?;

    let mut buf = Vec::new();
    write_iterates_csv(&mut buf, &engine.iterates).context(what)?;
    write_file(&dir.join("iterates.csv"), &buf)?;
    if d.pair_stride > 0 {
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &engine.records).context(what)?;
        write_file(&dir.join("diagnostics.csv"), &buf)?;
    }

    let head = chain.online().last().expect("chains hold at least one network");
    let final_perf = match engine.iterates.last().and_then(|r| r.perf_loss) {
        Some(p) => p,
        None => perf(head).context(what)?,
    };
    let mut m = Metrics::new();
    m.insert("perf_loss".into(), Some(final_perf));
    m.insert("error_sum".into(), Some(engine.error_sum()));
    if d.pair_stride > 0 && !engine.records.is_empty() {
        let t1 = table1_metrics(&engine.records).context(what)?;
        m.insert("pairs".into(), Some(t1.pairs as f64));
        m.insert("pct_csae_increase".into(), Some(t1.pct_csae_increase));
        m.insert("mean_csae_decrease".into(), Some(t1.mean_csae_decrease));
        m.insert("pct_eq6_given_eq5".into(), t1.pct_eq6_given_eq5);
        m.insert("decrease_share_eq5".into(), t1.decrease_share_eq5);
        m.insert("count_share_eq5".into(), t1.count_share_eq5);
        m.insert("eq5_pairs".into(), Some(t1.eq5_pairs as f64));
        m.insert("eq5_without_eq6".into(), Some(t1.eq5_without_eq6 as f64));
    }
    if config.kind == ExperimentKind::PropChecks {
        let additivity_failures = engine
            .records
            .iter()
            .filter(|r| {
                r.outcome.csae_t.to_bits() != r.outcome.errors_t.iter().sum::<f64>().to_bits()
                    || r.outcome.csae_t1.to_bits() != r.outcome.errors_t1.iter().sum::<f64>().to_bits()
            })
            .count();
        m.insert("csae_additivity_failures".into(), Some(additivity_failures as f64));
        let mut rng = stream(unit.seed, Stream::Probe);
        let probes: Vec<MlpParams> = (0..10).map(|_| MlpParams::he_uniform(arch.clone(), &mut rng)).collect();
        let out = prop2_equivalence_check(head, &pairs, ifqi.gamma, BackupModel::Deterministic, &probes).context(what)?;
        m.insert("prop2_relative_spread".into(), Some(out.spread / out.scale));
    }
    Ok(m)
}

fn run_idqn_unit(config: &ExperimentConfig, unit: RunUnit, dir: &Path, resume: Option<&[u8]>) -> CliResult<Metrics> {
    let k = unit.k.expect("i-DQN runs have a window size");
    let q = config.idqn.as_ref().expect("idqn section");
    let c = config.chain.as_ref().expect("chain section");
    let cfg = config.idqn_config(k, unit.seed);
    let what = || format!("i-DQN run K = {k}, seed {}", unit.seed);
    let env = chain_mdp(c.states, c.gamma, Some(c.horizon)).context(what)?;
    let oracle = exact_value_iteration(&env.mdp, 1e-12).context(what)?;
    let probe_env = env.clone();
    let arch = MlpArchitecture::new(c.states, q.hidden.clone(), 2).context(what)?;
    let mut runner = match resume {
        Some(bytes) => IdqnRunner::resume(cfg, env, &MlpParams::zeros(arch.clone()), &mut &bytes[..]).context(what)?.0,
        None => IdqnRunner::new(cfg, env, |_, rng| MlpParams::he_uniform(arch.clone(), rng)).context(what)?,
    };
    let meta = checkpoint_meta(config, k, unit.seed);
    while !runner.is_finished() {
        let next = match q.checkpoint_every {
            0 => cfg.total_steps,
            e => ((runner.steps_done() / e + 1) * e).min(cfg.total_steps),
        };
        runner.run_until(next, &mut NoObserver).context(what)?;
        let mut buf = Vec::new();
        runner.write_checkpoint(&mut buf, &meta).context(what)?;
        write_file(&dir.join(CHECKPOINT), &buf)?;
    }
    let outcome = runner.finish(&mut NoObserver).context(what)?;
    let head = outcome.chain.online().last().expect("chains hold at least one network");

    let mut returns = csv::Writer::from_writer(Vec::new());
    returns.write_record(["episode", "return"]).map_err(csv_err)?;
    for (i, r) in outcome.episode_returns.iter().enumerate() {
        returns.write_record([i.to_string(), format!("{r:?}")]).map_err(csv_err)?;
    }
    write_file(&dir.join("returns.csv"), &returns.into_inner().map_err(|e| CliError::Format(e.to_string()))?)?;

    let mut values = csv::Writer::from_writer(Vec::new());
    values.write_record(["state", "v_star", "v_learned", "greedy_action", "optimal_action"]).map_err(csv_err)?;
    let (mut value_error, mut policy_optimal) = (0.0f64, true);
    for s in 0..c.states {
        let obs = probe_env.one_hot(s);
        let v = head.max_q(&obs).context(what)?;
        let greedy = head.greedy_action(&obs).context(what)?;
        let optimal = oracle.greedy_action(s);
        if !probe_env.terminal[s] {
            value_error = value_error.max((v - oracle.v[s]).abs());
            policy_optimal &= greedy == optimal;
        }
        values
            .write_record([s.to_string(), format!("{:?}", oracle.v[s]), format!("{v:?}"), greedy.to_string(), optimal.to_string()])
            .map_err(csv_err)?;
    }
    write_file(&dir.join("values.csv"), &values.into_inner().map_err(|e| CliError::Format(e.to_string()))?)?;

    let tail = &outcome.episode_returns[outcome.episode_returns.len().saturating_sub(10)..];
    let mut m = Metrics::new();
    m.insert("value_error".into(), Some(value_error));
    m.insert("greedy_policy_optimal".into(), Some(f64::from(u8::from(policy_optimal))));
    m.insert("episodes".into(), Some(outcome.episode_returns.len() as f64));
    m.insert("gradient_events".into(), Some(outcome.gradient_events as f64));
    m.insert("mean_return_last10".into(), (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64));
    Ok(m)
}

fn run_lqr_unit(config: &ExperimentConfig, unit: RunUnit, dir: &Path) -> CliResult<Metrics> {
    let l = config.lqr.as_ref().expect("lqr section");
    let what = || format!("LQR run seed {}", unit.seed);
    let model = LqrModel::new(l.gamma).context(what)?;
    let mut rng = stream(unit.seed, Stream::Init);
    let m0 = rng.gen_range(l.m_range[0]..l.m_range[1]);
    let g0 = rng.gen_range(l.g_range[0]..l.g_range[1]);
    let init = QuadraticQParams::new(m0, g0);
    let mut path = csv::Writer::from_writer(Vec::new());
    path.write_record(["k", "step", "network", "m", "g", "distance"]).map_err(csv_err)?;
    let mut finals = Vec::new();
    for k in 1..=2 {
        let traj = lqr_trajectory_experiment(&model, k, l.steps, l.learning_rate, init, l.grid).context(what)?;
        for (step, (params, dists)) in traj.path.iter().zip(&traj.distances).enumerate() {
            for (net, (p, dist)) in params.iter().zip(dists).enumerate() {
                path.write_record([
                    k.to_string(),
                    step.to_string(),
                    (net + 1).to_string(),
                    format!("{:?}", p[0]),
                    format!("{:?}", p[1]),
                    format!("{dist:?}"),
                ])
                .map_err(csv_err)?;
            }
        }
        finals.push(traj.final_distance());
    }
    write_file(&dir.join("path.csv"), &path.into_inner().map_err(|e| CliError::Format(e.to_string()))?)?;
    let mut m = Metrics::new();
    m.insert("init_m".into(), Some(m0));
    m.insert("init_g".into(), Some(g0));
    m.insert("distance_qn".into(), Some(finals[0]));
    m.insert("distance_iqn".into(), Some(finals[1]));
    m.insert("iqn_not_farther".into(), Some(f64::from(u8::from(finals[1] <= finals[0]))));
    Ok(m)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Format(e.to_string())
}

/// Prints a short human-readable view of `summary`.
pub fn print_summary(summary: &RunSummary, out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "{} ({} seeds), config {}", summary.kind.name(), summary.seeds.len(), &summary.config_hash[..12])?;
    for g in &summary.groups {
        match g.k {
            Some(k) => writeln!(out, "K = {k}")?,
            None => writeln!(out, "all runs")?,
        }
        for (name, s) in &g.metrics {
            let ci = s.ci95.map_or_else(String::new, |[lo, hi]| format!("  95% CI [{lo:.4e}, {hi:.4e}]"));
            writeln!(out, "  {name:<24} IQM {:.4e}  mean {:.4e}  n {}{ci}", s.iqm, s.mean, s.per_seed.len())?;
        }
    }
    if let Some(t) = &summary.wall_clock {
        writeln!(out, "wall-clock {:.1} s", t.total_seconds)?;
    }
    Ok(())
}
