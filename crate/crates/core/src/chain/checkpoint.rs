//! Binary chain checkpoints.
//!
//! All integers are little-endian `u64`, floats little-endian `f64`, and
//! vectors are length-prefixed. A chain is written as:
//!
//! ```text
//! magic "IQNCHK01"
//! K, γ, D, T, max_shifts (u64::MAX when unbounded)
//! ticks, since_rolling, since_shift, shifts, rolling_updates
//! K × online θ_k
//! K × target θ̄_k
//! K × Adam (lr, β1, β2, ε, t, m, v)
//! ```
//!
//! The runners append their own state after the chain (see
//! [`IfqiRunner::write_checkpoint`](super::IfqiRunner::write_checkpoint) and
//! [`IdqnRunner::write_checkpoint`](super::IdqnRunner::write_checkpoint)).

use std::io::{Read, Write};

use super::qchain::{Counters, QChain, Schedule};
use crate::approximator::{AdamConfig, AdamState, QFunction};
use crate::codec::{expect_magic, read_f64, read_f64s, read_f64s_into, read_len, read_u64, write_f64, write_f64s, write_magic, write_u64};
use crate::error::{IqnError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IQNCHK01";

pub fn write_chain<F: QFunction, W: Write>(w: &mut W, chain: &QChain<F>) -> Result<()> {
    write_magic(w, CHECKPOINT_MAGIC)?;
    write_u64(w, chain.k() as u64)?;
    write_f64(w, chain.gamma())?;
    let s = chain.schedule();
    write_u64(w, s.rolling_period)?;
    write_u64(w, s.shift_period)?;
    write_u64(w, s.max_shifts.unwrap_or(u64::MAX))?;
    let c = chain.counters();
    for v in [c.ticks, c.since_rolling, c.since_shift, c.shifts, c.rolling_updates] {
        write_u64(w, v)?;
    }
    for f in chain.online().iter().chain(chain.targets()) {
        write_f64s(w, f.params())?;
    }
    for opt in chain.optimizers() {
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = opt.config;
        for x in [learning_rate, beta1, beta2, epsilon] {
            write_f64(w, x)?;
        }
        write_u64(w, opt.t)?;
        write_f64s(w, &opt.m)?;
        write_f64s(w, &opt.v)?;
    }
    Ok(())
}

/// Reads a chain written by [`write_chain`]. `template` supplies the
/// architecture; its parameter values are overwritten.
pub fn read_chain<F: QFunction, R: Read>(r: &mut R, template: &F) -> Result<QChain<F>> {
    expect_magic(r, CHECKPOINT_MAGIC)?;
    let k = read_len(r, 1 << 16)?;
    if k == 0 {
        return Err(IqnError::Format("checkpoint holds an empty chain".into()));
    }
    let gamma = read_f64(r)?;
    let rolling_period = read_u64(r)?;
    let shift_period = read_u64(r)?;
    let max_shifts = match read_u64(r)? {
        u64::MAX => None,
        m => Some(m),
    };
    let schedule = Schedule { rolling_period, shift_period, max_shifts };
    let mut c = [0u64; 5];
    for v in &mut c {
        *v = read_u64(r)?;
    }
    let counters = Counters { ticks: c[0], since_rolling: c[1], since_shift: c[2], shifts: c[3], rolling_updates: c[4] };
    let mut read_net = || -> Result<F> {
        let mut f = template.clone();
        read_f64s_into(r, f.params_mut())?;
        Ok(f)
    };
    let online = (0..k).map(|_| read_net()).collect::<Result<Vec<_>>>()?;
    let targets = (0..k).map(|_| read_net()).collect::<Result<Vec<_>>>()?;
    let dim = template.num_params();
    let mut optimizers = Vec::with_capacity(k);
    for _ in 0..k {
        let config = AdamConfig { learning_rate: read_f64(r)?, beta1: read_f64(r)?, beta2: read_f64(r)?, epsilon: read_f64(r)? };
        let t = read_u64(r)?;
        let m = read_f64s(r)?;
        let v = read_f64s(r)?;
        if m.len() != dim || v.len() != dim {
            return Err(IqnError::Format("optimizer state does not match the architecture".into()));
        }
        optimizers.push(AdamState { config, m, v, t });
    }
    QChain::from_parts(online, targets, optimizers, gamma, schedule, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::{MlpArchitecture, MlpParams};
    use crate::envs::Transition;
    use crate::rng::{stream, Stream};

    #[test]
    fn chain_round_trips_bitwise() {
        let arch = MlpArchitecture::new(2, vec![5], 2).unwrap();
        let mut rng = stream(1, Stream::Init);
        let t0 = MlpParams::he_uniform(arch.clone(), &mut rng);
        let online = (0..3).map(|_| MlpParams::he_uniform(arch.clone(), &mut rng)).collect();
        let schedule = Schedule { rolling_period: 2, shift_period: 7, max_shifts: Some(4) };
        let mut chain = QChain::new(t0, online, AdamConfig::default(), 0.95, schedule).unwrap();
        let batch = vec![Transition { state: vec![0.1, -0.3], action: 1, reward: 0.2, next_state: vec![0.2, 0.1], terminal: false }];
        for _ in 0..3 {
            chain.gradient_update_all(&batch, false).unwrap();
            let tick = chain.tick();
            if tick.rolling {
                chain.rolling_target_update();
            }
        }
        let mut bytes = Vec::new();
        write_chain(&mut bytes, &chain).unwrap();
        let back = read_chain(&mut bytes.as_slice(), &MlpParams::zeros(arch.clone())).unwrap();
        assert_eq!(back, chain);
        let wrong = MlpParams::zeros(MlpArchitecture::new(2, vec![4], 2).unwrap());
        assert!(read_chain(&mut bytes.as_slice(), &wrong).is_err());
        bytes[0] = b'X';
        assert!(matches!(read_chain(&mut bytes.as_slice(), &MlpParams::zeros(arch)), Err(IqnError::Format(_))));
    }
}
