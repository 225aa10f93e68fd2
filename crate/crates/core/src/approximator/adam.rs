use crate::error::{IqnError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1.5e-4 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

/// First/second moment estimates for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self { config, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// In-place bias-corrected Adam update of `params`.
    pub fn step(&mut self, params: &mut [f64], gradient: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || gradient.len() != self.m.len() {
            return Err(IqnError::input(format!(
                "adam dimension mismatch: state {}, params {}, gradient {}",
                self.m.len(),
                params.len(),
                gradient.len()
            )));
        }
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = gradient[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Value-semantics form of [`AdamState::step`].
pub fn adam_step(params: &[f64], gradient: &[f64], state: &AdamState) -> Result<(Vec<f64>, AdamState)> {
    let mut params = params.to_vec();
    let mut state = state.clone();
    state.step(&mut params, gradient)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params_untouched() {
        let state = AdamState::new(AdamConfig::default(), 3);
        let (p, s) = adam_step(&[1.0, -2.0, 0.5], &[0.0; 3], &state).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.t, 1);
        assert!(s.v.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn first_step_matches_scalar_hand_computation() {
        // From m = v = 0 the bias corrections cancel: m̂ = g, v̂ = g².
        let config = AdamConfig { learning_rate: 0.05, beta1: 0.9, beta2: 0.999, epsilon: 1.5e-4 };
        let g = 0.3_f64;
        let (p, _) = adam_step(&[2.0], &[g], &AdamState::new(config, 1)).unwrap();
        let m = 0.1 * g;
        let v = 0.001 * g * g;
        let expected = 2.0 - 0.05 * (m / 0.1) / ((v / 0.001).sqrt() + 1.5e-4);
        assert_eq!(p[0], expected);
        assert!((p[0] - (2.0 - 0.05 * g / (g.abs() + 1.5e-4))).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate_per_step() {
        let config = AdamConfig { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
        let mut state = AdamState::new(config, 2);
        let mut params = vec![0.0, 0.0];
        let grad = [2.5, -0.7];
        for _ in 0..5000 {
            state.step(&mut params, &grad).unwrap();
        }
        let before = params.clone();
        state.step(&mut params, &grad).unwrap();
        // Both moments are fully bias-corrected: Δθ → −lr · sign(g).
        assert!((params[0] - before[0] + 0.01).abs() < 1e-9);
        assert!((params[1] - before[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let state = AdamState::new(AdamConfig::default(), 2);
        assert!(adam_step(&[0.0; 3], &[0.0; 3], &state).is_err());
    }
}
