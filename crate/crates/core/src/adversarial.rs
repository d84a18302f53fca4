//! Conditional generator, the clean-feature and transition critics, and their
//! WGAN-GP objectives.
//!
//! The generator reads the noisier state x_{t+1} (with the embedding of
//! timestep t + 1) and predicts a clean feature x̃_0; the posterior step then
//! yields x̃_t, so the synthesized transition (x̃_t, x_{t+1}) lines up with the
//! real transition (x_t, x_{t+1}) shown to the transition critic.

use ndarray::{concatenate, Array2, Axis};

use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::nn::{flatten_grads, BoundNet, DenseNet, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::rng::Rng;
use rand::Rng as _;

/// Width of the sinusoidal timestep embedding.
pub const TIME_EMBED_DIM: usize = 16;

/// Parameter-free sinusoidal embedding of an integer timestep.
pub fn timestep_embedding(t: usize) -> [f64; TIME_EMBED_DIM] {
    let half = TIME_EMBED_DIM / 2;
    let mut out = [0.0; TIME_EMBED_DIM];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

/// Embeddings for a batch of timesteps, B×16.
pub fn embedding_rows(ts: &[usize]) -> Tensor {
    let mut m = Array2::zeros((ts.len(), TIME_EMBED_DIM));
    for (i, &t) in ts.iter().enumerate() {
        for (j, v) in timestep_embedding(t).into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

fn hcat(parts: &[&Tensor]) -> Result<Tensor> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(1), &views).map_err(|_| Error::Config("row counts differ across inputs".into()))
}

fn hidden_width(feature_dim: usize) -> usize {
    4 * feature_dim
}

/// G_θ(ε, z, x_noisy, t) → x̃_0.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    net: DenseNet,
    feature_dim: usize,
    proto_dim: usize,
}

impl Generator {
    pub fn new(feature_dim: usize, proto_dim: usize, rng: &mut Rng) -> Result<Self> {
        let h = hidden_width(feature_dim);
        let input = 2 * feature_dim + proto_dim + TIME_EMBED_DIM;
        let net = DenseNet::new(&[input, h, h, feature_dim], LEAKY_SLOPE, rng)?;
        Self::from_net(net, feature_dim, proto_dim)
    }

    pub fn from_net(net: DenseNet, feature_dim: usize, proto_dim: usize) -> Result<Self> {
        let expected = 2 * feature_dim + proto_dim + TIME_EMBED_DIM;
        if net.input_dim() != expected || net.output_dim() != feature_dim {
            return Err(Error::Config(format!(
                "generator network maps {} → {}, expected {} → {} for d = {}, d_z = {}",
                net.input_dim(),
                net.output_dim(),
                expected,
                feature_dim,
                feature_dim,
                proto_dim
            )));
        }
        Ok(Self {
            net,
            feature_dim,
            proto_dim,
        })
    }

    /// Recover the semantic width from a checkpointed network given d.
    pub fn from_checkpoint_net(net: DenseNet, feature_dim: usize) -> Result<Self> {
        let fixed = 2 * feature_dim + TIME_EMBED_DIM;
        if net.input_dim() <= fixed {
            return Err(Error::Config(format!(
                "generator input width {} too small for d = {feature_dim}",
                net.input_dim()
            )));
        }
        let proto_dim = net.input_dim() - fixed;
        Self::from_net(net, feature_dim, proto_dim)
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn proto_dim(&self) -> usize {
        self.proto_dim
    }

    fn check_batch(&self, eps: &Tensor, z: &Tensor, x_noisy: &Tensor, ts: &[usize]) -> Result<()> {
        let b = eps.nrows();
        let ok = eps.ncols() == self.feature_dim
            && x_noisy.ncols() == self.feature_dim
            && z.ncols() == self.proto_dim
            && z.nrows() == b
            && x_noisy.nrows() == b
            && ts.len() == b;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "generator batch shapes eps {:?}, z {:?}, x {:?}, t {} do not fit d = {}, d_z = {}",
                eps.dim(),
                z.dim(),
                x_noisy.dim(),
                ts.len(),
                self.feature_dim,
                self.proto_dim
            )))
        }
    }

    /// Generator input rows `[ε, z, x_noisy, emb(t)]`.
    pub fn input_rows(&self, eps: &Tensor, z: &Tensor, x_noisy: &Tensor, ts: &[usize]) -> Result<Tensor> {
        self.check_batch(eps, z, x_noisy, ts)?;
        hcat(&[eps, z, x_noisy, &embedding_rows(ts)])
    }

    /// Batched x̃_0; `ts` are the timesteps of the `x_noisy` rows.
    pub fn synthesize_batch(&self, eps: &Tensor, z: &Tensor, x_noisy: &Tensor, ts: &[usize]) -> Result<Tensor> {
        self.net.forward(&self.input_rows(eps, z, x_noisy, ts)?)
    }

    pub fn synthesize(&self, z: &[f64], x_noisy: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row");
        let out = self.synthesize_batch(&row(eps), &row(z), &row(x_noisy), &[t])?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// x̃_0 on a tape with parameters `bound`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundNet,
        eps: &Tensor,
        z: &Tensor,
        x_noisy: &Tensor,
        ts: &[usize],
    ) -> Result<Var> {
        let input = tape.constant(self.input_rows(eps, z, x_noisy, ts)?);
        Ok(bound.forward(tape, input))
    }
}

/// D_x0(x, z) → scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticX0 {
    net: DenseNet,
}

/// D_xt(x_t, x_{t+1}, z, t) → scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticXt {
    net: DenseNet,
}

impl CriticX0 {
    pub fn new(feature_dim: usize, proto_dim: usize, rng: &mut Rng) -> Result<Self> {
        let h = hidden_width(feature_dim);
        Ok(Self {
            net: DenseNet::new(&[feature_dim + proto_dim, h, h, 1], LEAKY_SLOPE, rng)?,
        })
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Config("critic must have a scalar output".into()));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    /// Conditioning columns that follow the feature argument.
    pub fn conditioning(z: &Tensor) -> Tensor {
        z.clone()
    }

    pub fn score(&self, x: &Tensor, z: &Tensor) -> Result<Tensor> {
        self.net.forward(&hcat(&[x, z])?)
    }
}

impl CriticXt {
    pub fn new(feature_dim: usize, proto_dim: usize, rng: &mut Rng) -> Result<Self> {
        let h = hidden_width(feature_dim);
        let input = 2 * feature_dim + proto_dim + TIME_EMBED_DIM;
        Ok(Self {
            net: DenseNet::new(&[input, h, h, 1], LEAKY_SLOPE, rng)?,
        })
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Config("critic must have a scalar output".into()));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn conditioning(x_next: &Tensor, z: &Tensor, ts: &[usize]) -> Result<Tensor> {
        hcat(&[x_next, z, &embedding_rows(ts)])
    }

    pub fn score(&self, x_t: &Tensor, x_next: &Tensor, z: &Tensor, ts: &[usize]) -> Result<Tensor> {
        self.net.forward(&hcat(&[x_t, &Self::conditioning(x_next, z, ts)?])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    pub lambda_gp: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self { lambda_gp: 10.0 }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_gp >= 0.0 && self.lambda_gp.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("lambda_gp must be >= 0, got {}", self.lambda_gp)))
        }
    }
}

/// Tape nodes of one critic objective.
#[derive(Debug, Clone, Copy)]
pub struct CriticTerms {
    pub total: Var,
    pub wasserstein: Var,
    pub penalty: Var,
}

/// −mean D(real) + mean D(fake) + λ·mean((‖∇_x̂ D(x̂)‖ − 1)²), where the
/// critic input is `[first, conditioning]` and x̂ interpolates only the first
/// argument with per-row weights `interp`.
#[allow(clippy::too_many_arguments)]
pub fn wgan_gp_terms(
    tape: &mut Tape,
    critic: &BoundNet,
    real: &Tensor,
    fake: &Tensor,
    conditioning: &Tensor,
    interp: &[f64],
    gp: GpConfig,
) -> Result<CriticTerms> {
    let b = real.nrows();
    if b == 0 {
        return Err(Error::Usage("critic loss on an empty batch".into()));
    }
    if fake.dim() != real.dim() || conditioning.nrows() != b || interp.len() != b {
        return Err(Error::Usage(format!(
            "critic batch sizes differ: real {:?}, fake {:?}, cond {:?}, interp {}",
            real.dim(),
            fake.dim(),
            conditioning.dim(),
            interp.len()
        )));
    }
    gp.validate()?;

    let real_in = tape.constant(hcat(&[real, conditioning])?);
    let fake_in = tape.constant(hcat(&[fake, conditioning])?);
    let d_real = critic.forward(tape, real_in);
    let d_fake = critic.forward(tape, fake_in);
    let m_real = tape.mean_all(d_real);
    let m_fake = tape.mean_all(d_fake);
    let wasserstein = tape.sub(m_fake, m_real);

    let mut mixed = real.clone();
    for (i, mut row) in mixed.rows_mut().into_iter().enumerate() {
        let u = interp[i];
        row.zip_mut_with(&fake.row(i), |r, f| *r = u * *r + (1.0 - u) * f);
    }
    let x_hat = tape.var(mixed);
    let cond = tape.constant(conditioning.clone());
    let hat_in = tape.concat_cols(&[x_hat, cond]);
    let d_hat = critic.forward(tape, hat_in);
    // Rows are independent, so the gradient of the sum is the per-row gradient.
    let s = tape.sum_all(d_hat);
    let grad_x = tape.grad(s, &[x_hat])?[0];
    let norms = tape.row_norms(grad_x);
    let dev = tape.add_scalar(norms, -1.0);
    let sq = tape.mul(dev, dev);
    let penalty = tape.mean_all(sq);
    let weighted = tape.scale(penalty, gp.lambda_gp);
    let total = tape.add(wasserstein, weighted);
    Ok(CriticTerms {
        total,
        wasserstein,
        penalty,
    })
}

/// Loss value, its parts, and the gradient w.r.t. the critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticLoss {
    pub total: f64,
    pub wasserstein: f64,
    pub penalty: f64,
    pub grads: Vec<f64>,
}

fn uniform_weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn critic_loss_with(
    net: &DenseNet,
    real: &Tensor,
    fake: &Tensor,
    conditioning: &Tensor,
    interp: &[f64],
    gp: GpConfig,
) -> Result<CriticLoss> {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape, true);
    let terms = wgan_gp_terms(&mut tape, &bound, real, fake, conditioning, interp, gp)?;
    let grads = tape.grad(terms.total, &bound.params())?;
    Ok(CriticLoss {
        total: tape.scalar(terms.total),
        wasserstein: tape.scalar(terms.wasserstein),
        penalty: tape.scalar(terms.penalty),
        grads: flatten_grads(&tape, &grads),
    })
}

/// Clean-feature critic objective. `fake_x0` is treated as data.
pub fn critic_x0_loss(
    critic: &CriticX0,
    real_x0: &Tensor,
    fake_x0: &Tensor,
    z: &Tensor,
    gp: GpConfig,
    rng: &mut Rng,
) -> Result<CriticLoss> {
    let interp = uniform_weights(real_x0.nrows(), rng);
    critic_x0_loss_with(critic, real_x0, fake_x0, z, &interp, gp)
}

pub fn critic_x0_loss_with(
    critic: &CriticX0,
    real_x0: &Tensor,
    fake_x0: &Tensor,
    z: &Tensor,
    interp: &[f64],
    gp: GpConfig,
) -> Result<CriticLoss> {
    critic_loss_with(critic.net(), real_x0, fake_x0, z, interp, gp)
}

/// Transition critic objective; interpolation touches x_t only.
#[allow(clippy::too_many_arguments)]
pub fn critic_xt_loss(
    critic: &CriticXt,
    real_xt: &Tensor,
    x_next: &Tensor,
    fake_xt: &Tensor,
    z: &Tensor,
    ts: &[usize],
    gp: GpConfig,
    rng: &mut Rng,
) -> Result<CriticLoss> {
    let interp = uniform_weights(real_xt.nrows(), rng);
    critic_xt_loss_with(critic, real_xt, x_next, fake_xt, z, ts, &interp, gp)
}

#[allow(clippy::too_many_arguments)]
pub fn critic_xt_loss_with(
    critic: &CriticXt,
    real_xt: &Tensor,
    x_next: &Tensor,
    fake_xt: &Tensor,
    z: &Tensor,
    ts: &[usize],
    interp: &[f64],
    gp: GpConfig,
) -> Result<CriticLoss> {
    if real_xt.nrows() == 0 {
        return Err(Error::Usage("critic loss on an empty batch".into()));
    }
    let cond = CriticXt::conditioning(x_next, z, ts)?;
    critic_loss_with(critic.net(), real_xt, fake_xt, &cond, interp, gp)
}

/// Everything one adversarial step needs, fixed up front so every random draw
/// is reproducible and the losses are deterministic functions of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialBatch {
    pub real_x0: Tensor,
    pub z: Tensor,
    pub labels: Vec<usize>,
    pub real_xt: Tensor,
    pub x_next: Tensor,
    /// Transition index t per row (x_t → x_{t+1}); the generator sees t + 1.
    pub ts: Vec<usize>,
    /// Generator input noise ε.
    pub gen_noise: Tensor,
    /// Reparameterization noise of the posterior draw.
    pub post_noise: Tensor,
    /// Gradient-penalty interpolation weights for the two critics.
    pub interp_x0: Vec<f64>,
    pub interp_xt: Vec<f64>,
}

impl AdversarialBatch {
    pub fn len(&self) -> usize {
        self.real_x0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn next_steps(&self) -> Vec<usize> {
        self.ts.iter().map(|t| t + 1).collect()
    }
}

/// Synthesized (x̃_0, x̃_t) as tape nodes with generator parameters `bound`.
pub fn synthesize_on_tape(
    tape: &mut Tape,
    gen: &Generator,
    bound: &BoundNet,
    sched: &DiffusionSchedule,
    batch: &AdversarialBatch,
) -> Result<(Var, Var)> {
    let x0 = gen.forward_tape(tape, bound, &batch.gen_noise, &batch.z, &batch.x_next, &batch.next_steps())?;
    let (c1, c2, sd) = sched.coefficient_rows(&batch.ts, gen.feature_dim())?;
    let c1 = tape.constant(c1);
    let scaled = tape.mul(x0, c1);
    let rest = c2 * &batch.x_next + sd * &batch.post_noise;
    let rest = tape.constant(rest);
    let xt = tape.add(scaled, rest);
    Ok((x0, xt))
}

/// Plain (untaped) synthesis of the fake pair for critic updates.
pub fn synthesize_plain(
    gen: &Generator,
    sched: &DiffusionSchedule,
    batch: &AdversarialBatch,
) -> Result<(Tensor, Tensor)> {
    let x0 = gen.synthesize_batch(&batch.gen_noise, &batch.z, &batch.x_next, &batch.next_steps())?;
    let (c1, c2, sd) = sched.coefficient_rows(&batch.ts, gen.feature_dim())?;
    let xt = c1 * &x0 + c2 * &batch.x_next + sd * &batch.post_noise;
    Ok((x0, xt))
}

/// −mean D_x0(x̃_0, z) − mean D_xt(x̃_t, x_{t+1}, z, t), critics frozen.
pub fn generator_adv_terms(
    tape: &mut Tape,
    x0: Var,
    xt: Var,
    critic_x0: &CriticX0,
    critic_xt: &CriticXt,
    batch: &AdversarialBatch,
) -> Result<Var> {
    let cx0 = critic_x0.net().bind(tape, false);
    let cxt = critic_xt.net().bind(tape, false);
    let z = tape.constant(batch.z.clone());
    let in0 = tape.concat_cols(&[x0, z]);
    let d0 = cx0.forward(tape, in0);
    let cond = tape.constant(CriticXt::conditioning(&batch.x_next, &batch.z, &batch.ts)?);
    let int = tape.concat_cols(&[xt, cond]);
    let dt = cxt.forward(tape, int);
    let m0 = tape.mean_all(d0);
    let mt = tape.mean_all(dt);
    let s = tape.add(m0, mt);
    Ok(tape.neg(s))
}

/// Generator adversarial loss and its gradient w.r.t. θ.
pub fn generator_adv_loss(
    gen: &Generator,
    critic_x0: &CriticX0,
    critic_xt: &CriticXt,
    sched: &DiffusionSchedule,
    batch: &AdversarialBatch,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let bound = gen.net().bind(&mut tape, true);
    let (x0, xt) = synthesize_on_tape(&mut tape, gen, &bound, sched, batch)?;
    let loss = generator_adv_terms(&mut tape, x0, xt, critic_x0, critic_xt, batch)?;
    let grads = tape.grad(loss, &bound.params())?;
    Ok((tape.scalar(loss), flatten_grads(&tape, &grads)))
}

/// L_D = L_{D_x0} + L_{D_xt} with gradients for both critics
/// (x0 critic parameters first).
#[derive(Debug, Clone, PartialEq)]
pub struct TotalCriticLoss {
    pub total: f64,
    pub x0: CriticLoss,
    pub xt: CriticLoss,
}

impl TotalCriticLoss {
    pub fn grads(&self) -> Vec<f64> {
        let mut g = self.x0.grads.clone();
        g.extend_from_slice(&self.xt.grads);
        g
    }
}

pub fn total_critic_loss(
    critic_x0: &CriticX0,
    critic_xt: &CriticXt,
    gen: &Generator,
    sched: &DiffusionSchedule,
    batch: &AdversarialBatch,
    gp: GpConfig,
) -> Result<TotalCriticLoss> {
    let (fake_x0, fake_xt) = synthesize_plain(gen, sched, batch)?;
    let x0 = critic_x0_loss_with(critic_x0, &batch.real_x0, &fake_x0, &batch.z, &batch.interp_x0, gp)?;
    let xt = critic_xt_loss_with(
        critic_xt,
        &batch.real_xt,
        &batch.x_next,
        &fake_xt,
        &batch.z,
        &batch.ts,
        &batch.interp_xt,
        gp,
    )?;
    Ok(TotalCriticLoss {
        total: x0.total + xt.total,
        x0,
        xt,
    })
}
