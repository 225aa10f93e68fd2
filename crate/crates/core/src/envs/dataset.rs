//! Offline datasets: uniform-policy collection and on-disk formats.
//!
//! CSV: header `p,v,a,r,p_next,v_next,terminal` for two-dimensional states
//! (`s0,s1,...,a,r,s0_next,...,terminal` otherwise). Actions are integers,
//! `terminal` is `0`/`1`.
//!
//! Binary: magic `IQNDATA1`, `u64` state dimension, `u64` record count, then
//! per record `state.., action, reward, next_state.., terminal` as
//! little-endian `f64` (action and terminal stored as exact small integers).

use std::io::{Read, Write};

use rand::Rng as _;

use super::{Environment, Transition};
use crate::codec::{expect_magic, read_f64, read_len, write_f64, write_magic, write_u64};
use crate::error::{IqnError, Result};
use crate::rng::{stream, Stream};

const DATA_MAGIC: &[u8; 8] = b"IQNDATA1";

/// Collects exactly `n_samples` transitions with a uniformly random policy,
/// restarting from the environment's initial state on termination or
/// truncation.
pub fn collect_uniform_dataset<E: Environment>(env: &mut E, n_samples: usize, seed: u64) -> Vec<Transition> {
    let mut policy_rng = stream(seed, Stream::Dataset);
    let mut env_rng = stream(seed, Stream::Environment);
    let n_actions = env.n_actions();
    let mut out = Vec::with_capacity(n_samples);
    let mut state = env.reset();
    let mut steps = 0;
    while out.len() < n_samples {
        let action = policy_rng.gen_range(0..n_actions);
        let step = env
            .step(action, &mut env_rng)
            .expect("uniform collection only steps non-terminal states with valid actions");
        steps += 1;
        let truncated = env.episode_limit().is_some_and(|limit| steps >= limit);
        out.push(Transition {
            state: std::mem::take(&mut state),
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminal: step.terminal,
        });
        if step.terminal || truncated {
            state = env.reset();
            steps = 0;
        } else {
            state = step.next_state;
        }
    }
    out
}

fn state_dim(data: &[Transition]) -> Result<usize> {
    let dim = data.first().map_or(0, |t| t.state.len());
    if data.iter().any(|t| t.state.len() != dim || t.next_state.len() != dim) {
        return Err(IqnError::input("transitions have inconsistent state dimensions"));
    }
    Ok(dim)
}

fn csv_header(dim: usize) -> Vec<String> {
    let names: Vec<String> = if dim == 2 {
        vec!["p".into(), "v".into()]
    } else {
        (0..dim).map(|i| format!("s{i}")).collect()
    };
    let mut header = names.clone();
    header.push("a".into());
    header.push("r".into());
    header.extend(names.iter().map(|n| format!("{n}_next")));
    header.push("terminal".into());
    header
}

pub fn write_dataset_csv<W: Write>(writer: W, data: &[Transition]) -> Result<()> {
    let dim = state_dim(data)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(dim))?;
    for t in data {
        let mut row: Vec<String> = t.state.iter().map(|x| format!("{x:?}")).collect();
        row.push(t.action.to_string());
        row.push(format!("{:?}", t.reward));
        row.extend(t.next_state.iter().map(|x| format!("{x:?}")));
        row.push(u8::from(t.terminal).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<Transition>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let width = header.len();
    if width < 5 || (width - 3) % 2 != 0 {
        return Err(IqnError::Format(format!("unexpected dataset header {header:?}")));
    }
    let dim = (width - 3) / 2;
    if header.iter().collect::<Vec<_>>() != csv_header(dim) {
        return Err(IqnError::Format(format!("unexpected dataset header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| IqnError::Format(format!("row {}: column {i}: {e}", line + 1)))
        };
        let state = (0..dim).map(num).collect::<Result<Vec<_>>>()?;
        let action = record[dim]
            .parse::<usize>()
            .map_err(|e| IqnError::Format(format!("row {}: action: {e}", line + 1)))?;
        let reward = num(dim + 1)?;
        let next_state = (dim + 2..2 * dim + 2).map(num).collect::<Result<Vec<_>>>()?;
        let terminal = match &record[2 * dim + 2] {
            "0" => false,
            "1" => true,
            other => return Err(IqnError::Format(format!("row {}: terminal flag {other:?}", line + 1))),
        };
        out.push(Transition { state, action, reward, next_state, terminal });
    }
    Ok(out)
}

pub fn write_dataset_binary<W: Write>(mut w: W, data: &[Transition]) -> Result<()> {
    let dim = state_dim(data)?;
    write_magic(&mut w, DATA_MAGIC)?;
    write_u64(&mut w, dim as u64)?;
    write_u64(&mut w, data.len() as u64)?;
    for t in data {
        for &x in &t.state {
            write_f64(&mut w, x)?;
        }
        write_f64(&mut w, t.action as f64)?;
        write_f64(&mut w, t.reward)?;
        for &x in &t.next_state {
            write_f64(&mut w, x)?;
        }
        write_f64(&mut w, if t.terminal { 1.0 } else { 0.0 })?;
    }
    Ok(())
}

pub fn read_dataset_binary<R: Read>(mut r: R) -> Result<Vec<Transition>> {
    expect_magic(&mut r, DATA_MAGIC)?;
    let dim = read_len(&mut r, 1 << 20)?;
    let n = read_len(&mut r, 1 << 40)?;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let state = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let action = read_f64(&mut r)?;
        if action < 0.0 || action.fract() != 0.0 {
            return Err(IqnError::Format(format!("action {action} is not an index")));
        }
        let reward = read_f64(&mut r)?;
        let next_state = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let terminal = read_f64(&mut r)? != 0.0;
        out.push(Transition { state, action: action as usize, reward, next_state, terminal });
    }
    Ok(out)
}
