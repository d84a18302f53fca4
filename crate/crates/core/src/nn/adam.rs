use super::dense::DenseNet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// Betas (0.5, 0.999), the adversarial-training setting.
    pub fn gan(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Betas (0.9, 0.999), used for the linear classifier heads.
    pub fn standard(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam moments over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        })
    }

    pub fn for_net(config: AdamConfig, net: &DenseNet) -> Result<Self> {
        Self::new(config, net.num_params())
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected Adam update over `params` (concatenated in order).
    ///
    /// A non-finite gradient rejects the whole update before anything is
    /// written. A non-finite parameter afterwards is reported as a numeric
    /// failure.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[f64]) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != grads.len() || total != self.first_moment.len() {
            return Err(Error::Usage(format!(
                "Adam buffers misaligned: {} params, {} grads, {} moments",
                total,
                grads.len(),
                self.first_moment.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at index {i}; update rejected"
            )));
        }

        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let bc1 = 1.0 - beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - beta2.powi(self.step_count as i32);

        let mut k = 0;
        for slot in params.iter_mut() {
            for p in slot.iter_mut() {
                let g = grads[k];
                let m = beta1 * self.first_moment[k] + (1.0 - beta1) * g;
                let v = beta2 * self.second_moment[k] + (1.0 - beta2) * g * g;
                self.first_moment[k] = m;
                self.second_moment[k] = v;
                *p -= learning_rate * (m / bc1) / ((v / bc2).sqrt() + epsilon);
                if !p.is_finite() {
                    return Err(Error::Numeric(format!(
                        "parameter {k} became non-finite after Adam step {}",
                        self.step_count
                    )));
                }
                k += 1;
            }
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut DenseNet, grads: &[f64]) -> Result<()> {
        let mut slices = net.param_slices_mut();
        self.step(&mut slices, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut state = AdamState::new(AdamConfig::gan(0.01), 2).unwrap();
        let mut p = [1.0, -2.0];
        state.step(&mut [&mut p], &[0.4, -0.3]).unwrap();
        let after_first = p;
        let m_before = state.first_moment().to_vec();
        for _ in 0..5 {
            state.step(&mut [&mut p], &[0.0, 0.0]).unwrap();
        }
        // Nonzero moments still move params, so check from a fresh state too.
        assert!(state.first_moment()[0].abs() < m_before[0].abs());

        let mut fresh = AdamState::new(AdamConfig::gan(0.01), 2).unwrap();
        let mut q = after_first;
        for _ in 0..100 {
            fresh.step(&mut [&mut q], &[0.0, 0.0]).unwrap();
        }
        assert_eq!(q, after_first);
        assert_eq!(fresh.step_count(), 100);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state = AdamState::new(AdamConfig::gan(0.01), 1).unwrap();
        let mut p = [0.0];
        state.step(&mut [&mut p], &[1.0]).unwrap();
        // m̂ = v̂ = 1, Δ = -lr / (1 + eps)
        assert!((p[0] + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn second_moment_accumulates() {
        let mut state = AdamState::new(AdamConfig::gan(0.01), 1).unwrap();
        let mut p = [0.0];
        state.step(&mut [&mut p], &[1.0]).unwrap();
        let v1 = state.second_moment()[0];
        state.step(&mut [&mut p], &[1.0]).unwrap();
        assert!(state.second_moment()[0] >= v1);
    }

    #[test]
    fn non_finite_gradient_rejected_without_writing() {
        let mut state = AdamState::new(AdamConfig::gan(0.01), 2).unwrap();
        let mut p = [1.0, 2.0];
        let err = state.step(&mut [&mut p], &[0.1, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(state.step_count(), 0);
        assert_eq!(state.first_moment(), &[0.0, 0.0]);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(AdamState::new(AdamConfig::gan(-1.0), 1).is_err());
        let mut c = AdamConfig::gan(0.1);
        c.beta1 = 1.0;
        assert!(AdamState::new(c, 1).is_err());
    }
}
