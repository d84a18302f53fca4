//! Few-step variance-preserving noise schedule and the Gaussian posterior
//! q(x_t | x_0, x_{t+1}) used to build synthesized transitions.
//!
//! Index convention: larger `t` is noisier. `alpha_bar[0] = 1` is the clean
//! state and `alpha_bar[T]` the noisiest; `beta[t - 1]` is the variance added
//! going from `t - 1` to `t`.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Posterior coefficients for stepping from `t + 1` down to `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoefficients {
    /// Weight on the predicted clean feature.
    pub c1: f64,
    /// Weight on the noisier state x_{t+1}.
    pub c2: f64,
    pub variance: f64,
}

impl DiffusionSchedule {
    /// Linear betas from `beta_min` to `beta_max` over `steps` steps.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let beta = if steps == 1 {
            vec![beta_min]
        } else {
            (0..steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(beta)
    }

    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::Config(format!("betas must lie in (0, 1): {beta:?}")));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len() + 1);
        alpha_bar.push(1.0);
        for a in &alpha {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * a);
        }
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
        })
    }

    /// Number of noising steps T.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// β_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// α_t for t in 1..=T.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// ᾱ_t for t in 0..=T.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    fn check_state_index(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::Usage(format!(
                "timestep {t} outside [0, {}]",
                self.steps()
            )));
        }
        Ok(())
    }

    fn check_transition_index(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::Usage(format!(
                "posterior step needs t in [0, {}), got {t}",
                self.steps()
            )));
        }
        Ok(())
    }

    pub fn posterior_coefficients(&self, t: usize) -> Result<PosteriorCoefficients> {
        self.check_transition_index(t)?;
        let ab_t = self.alpha_bar(t);
        let ab_next = self.alpha_bar(t + 1);
        let beta_next = self.beta(t + 1);
        let alpha_next = self.alpha(t + 1);
        let denom = 1.0 - ab_next;
        Ok(PosteriorCoefficients {
            c1: ab_t.sqrt() * beta_next / denom,
            c2: alpha_next.sqrt() * (1.0 - ab_t) / denom,
            variance: beta_next * (1.0 - ab_t) / denom,
        })
    }

    /// √ᾱ_t·x0 + √(1 − ᾱ_t)·ε.
    pub fn forward_noise(&self, x0: ArrayView1<f64>, t: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_state_index(t)?;
        let ab = self.alpha_bar(t);
        let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().map(|x| a * x + s * standard_normal(rng)).collect())
    }

    /// One forward step from state `t` to `t + 1`: √α_{t+1}·x_t + √β_{t+1}·ε.
    pub fn step_noise(&self, xt: ArrayView1<f64>, t: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_transition_index(t)?;
        let (a, s) = (self.alpha(t + 1).sqrt(), self.beta(t + 1).sqrt());
        Ok(xt.iter().map(|x| a * x + s * standard_normal(rng)).collect())
    }

    /// Draw x_t from the posterior given a clean estimate and x_{t+1}.
    pub fn posterior_sample(
        &self,
        x0_hat: ArrayView1<f64>,
        x_next: ArrayView1<f64>,
        t: usize,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        let eps: Vec<f64> = (0..x0_hat.len()).map(|_| standard_normal(rng)).collect();
        self.posterior_with_noise(x0_hat, x_next, t, &eps)
    }

    /// Reparameterized posterior draw: mean + σ·ε with caller-supplied ε.
    pub fn posterior_with_noise(
        &self,
        x0_hat: ArrayView1<f64>,
        x_next: ArrayView1<f64>,
        t: usize,
        eps: &[f64],
    ) -> Result<Vec<f64>> {
        if x0_hat.len() != x_next.len() || eps.len() != x0_hat.len() {
            return Err(Error::Config("posterior inputs differ in length".into()));
        }
        let c = self.posterior_coefficients(t)?;
        let sigma = c.variance.sqrt();
        Ok(x0_hat
            .iter()
            .zip(x_next.iter())
            .zip(eps)
            .map(|((x0, xn), e)| c.c1 * x0 + c.c2 * xn + sigma * e)
            .collect())
    }
}

/// A real transition pair for the transition critic.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedTransition {
    pub x_t: Vec<f64>,
    pub x_next: Vec<f64>,
    pub t: usize,
}

impl DiffusionSchedule {
    /// Sample (x_t, x_{t+1}) consistent with the forward chain from `x0`.
    pub fn sample_transition(
        &self,
        x0: ArrayView1<f64>,
        t: usize,
        rng: &mut Rng,
    ) -> Result<NoisedTransition> {
        self.check_transition_index(t)?;
        let x_t = self.forward_noise(x0, t, rng)?;
        let x_next = self.step_noise(ArrayView1::from(&x_t), t, rng)?;
        Ok(NoisedTransition { x_t, x_next, t })
    }

    /// Per-row posterior coefficients laid out as B×d matrices, for building
    /// the posterior mean on a tape.
    pub fn coefficient_rows(&self, ts: &[usize], d: usize) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        let mut c1 = Array2::zeros((ts.len(), d));
        let mut c2 = Array2::zeros((ts.len(), d));
        let mut sd = Array2::zeros((ts.len(), d));
        for (i, &t) in ts.iter().enumerate() {
            let c = self.posterior_coefficients(t)?;
            c1.row_mut(i).fill(c.c1);
            c2.row_mut(i).fill(c.c2);
            sd.row_mut(i).fill(c.variance.sqrt());
        }
        Ok((c1, c2, sd))
    }
}
