//! The miniature trainer: per-step pairing, diffusion, MSE on the configured
//! target, Adam updates, and the evaluation loop that records metric
//! histories.

use serde::{Deserialize, Serialize};

use crate::diffusion::{flow_interpolate, forward_diffuse};
use crate::error::{Error, Result};
use crate::eval::{sliced_wasserstein, MetricHistory};
use crate::model::{DenoiserModel, PredTarget};
use crate::optim::{Adam, AdamConfig};
use crate::pairing::{apply_pairing, PairingConfig};
use crate::rng::{gaussian_sample, RngState};
use crate::sampler::{sample_ddim, sample_flow_euler};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::tensor::Tensor;

/// Everything the trainer needs besides the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub pairing: PairingConfig,
    pub schedule: ScheduleKind,
    pub schedule_steps: usize,
    pub target: PredTarget,
    pub hidden: Vec<usize>,
    pub time_embed: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            pairing: PairingConfig::Random,
            schedule: ScheduleKind::DdpmLinearBeta,
            schedule_steps: 1000,
            target: PredTarget::Epsilon,
            hidden: vec![128, 128, 128],
            time_embed: 32,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Model, optimizer moments, step counter, rng, and pairing config.
pub struct TrainState {
    pub model: DenoiserModel,
    pub optimizer: Adam,
    pub schedule: NoiseSchedule,
    pub config: TrainerConfig,
    pub rng: RngState,
    pub step: u64,
}

impl TrainState {
    pub fn new(data_dim: usize, config: TrainerConfig) -> Result<Self> {
        if config.batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        config.pairing.validate(config.batch_size)?;
        let schedule = NoiseSchedule::new(config.schedule, config.schedule_steps)?;
        let mut rng = RngState::new(config.seed);
        let model = DenoiserModel::new(
            data_dim,
            &config.hidden,
            config.time_embed,
            config.target,
            &mut rng,
        )?;
        let optimizer = Adam::new(&model, config.adam);
        Ok(Self { model, optimizer, schedule, config, rng, step: 0 })
    }

    /// One optimization step on the given data batch. Samples a timestep per
    /// example, applies the configured pairing, diffuses, regresses the
    /// model output onto the target (epsilon or velocity), and applies one
    /// Adam update. Returns the batch MSE before the update.
    pub fn train_step(&mut self, data_batch: &Tensor) -> Result<f64> {
        let n = data_batch.nrows();
        if n < 1 {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let (images, noises, _) = apply_pairing(&self.config.pairing, data_batch, &mut self.rng)?;

        let d = images.ncols();
        let t_max = self.schedule.t_max();
        let mut x_t = Tensor::zeros(vec![n, d])?;
        let mut target = Tensor::zeros(vec![n, d])?;
        let mut t_norm = vec![0.0; n];
        match self.config.target {
            PredTarget::Epsilon => {
                for i in 0..n {
                    // uniform integer timestep in 1..=T, per example
                    let t = 1 + self.rng.below(t_max);
                    t_norm[i] = t as f64 / t_max as f64;
                    let alpha = self.schedule.alpha(t);
                    let (sa, sn) = (alpha.sqrt(), (1.0 - alpha).sqrt());
                    let (xi, ni) = (images.row(i), noises.row(i));
                    let xt_row = x_t.row_mut(i);
                    for ((o, &xv), &nv) in xt_row.iter_mut().zip(xi).zip(ni) {
                        *o = sa * xv + sn * nv;
                    }
                    target.row_mut(i).copy_from_slice(ni);
                }
            }
            PredTarget::Velocity => {
                for i in 0..n {
                    let t = self.rng.uniform();
                    t_norm[i] = t;
                    let (xi, ni) = (images.row(i), noises.row(i));
                    let xt_row = x_t.row_mut(i);
                    for ((o, &xv), &nv) in xt_row.iter_mut().zip(xi).zip(ni) {
                        *o = (1.0 - t) * xv + t * nv;
                    }
                    let v_row = target.row_mut(i);
                    for ((o, &xv), &nv) in v_row.iter_mut().zip(xi).zip(ni) {
                        *o = nv - xv;
                    }
                }
            }
        }

        let (out, cache) = self.model.forward_cached(&x_t, &t_norm)?;
        let count = (n * d) as f64;
        let mut loss = 0.0;
        let mut grad = Tensor::zeros(vec![n, d])?;
        {
            let g = grad.data_mut();
            for (i, (&o, &t)) in out.data().iter().zip(target.data()).enumerate() {
                let diff = o - t;
                loss += diff * diff;
                g[i] = 2.0 * diff / count;
            }
        }
        loss /= count;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss {loss} at step {} (pairing {}, target {})",
                self.step, self.config.pairing, self.config.target
            )));
        }
        let grads = self.model.backward(&cache, &grad)?;
        self.optimizer.step(&mut self.model, &grads)?;
        self.step += 1;
        Ok(loss)
    }

    /// Draw a random batch of rows (with replacement) from the dataset.
    pub fn sample_batch(&mut self, data: &Tensor) -> Tensor {
        let idx: Vec<usize> = (0..self.config.batch_size)
            .map(|_| self.rng.below(data.nrows()))
            .collect();
        data.gather_rows(&idx)
    }

    /// Generate samples with the sampler matching the training target,
    /// dividing by the pairing's scale factor so outputs live in the
    /// original data range.
    pub fn generate(&self, n_steps: usize, initial_noise: &Tensor) -> Result<Tensor> {
        let raw = match self.config.target {
            PredTarget::Epsilon => sample_ddim(&self.model, &self.schedule, n_steps, initial_noise)?.0,
            PredTarget::Velocity => sample_flow_euler(&self.model, n_steps, initial_noise)?,
        };
        let s = self.config.pairing.scale_factor();
        if s == 1.0 {
            Ok(raw)
        } else {
            Ok(raw.map(|v| v / s))
        }
    }
}

/// Evaluation settings for [`run_training`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub every: u64,
    pub n_samples: usize,
    pub sample_steps: usize,
    pub sw_projections: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { every: 500, n_samples: 4096, sample_steps: 25, sw_projections: 128 }
    }
}

/// Outcome of a full training run.
pub struct TrainRun {
    pub state: TrainState,
    pub losses: MetricHistory,
    pub metrics: MetricHistory,
}

/// Train for `steps` steps, evaluating the sliced Wasserstein distance
/// between generated samples and the dataset on the configured cadence. The
/// evaluation noise and projection directions are fixed per run seed so the
/// metric history is comparable across methods.
pub fn run_training(
    data: &Tensor,
    config: TrainerConfig,
    steps: u64,
    eval: &EvalConfig,
    mut progress: Option<&mut dyn FnMut(u64, f64)>,
) -> Result<TrainRun> {
    let mut state = TrainState::new(data.ncols(), config)?;
    let mut losses = MetricHistory::new("loss");
    let mut metrics = MetricHistory::new("sw");

    // fixed evaluation inputs, shared across runs comparing methods
    const EVAL_NOISE_SEED: u64 = 0xE7A1;
    let mut eval_rng = RngState::new(EVAL_NOISE_SEED);
    let eval_noise = gaussian_sample(&mut eval_rng, &[eval.n_samples, data.ncols()])?;

    for step in 1..=steps {
        let batch = state.sample_batch(data);
        let loss = state.train_step(&batch)?;
        if let Some(cb) = progress.as_deref_mut() {
            cb(step, loss);
        }
        if step % eval.every == 0 || step == steps {
            losses.push(step, loss)?;
            let samples = state.generate(eval.sample_steps, &eval_noise)?;
            const SW_DIRECTION_SEED: u64 = 0x51DE;
            let mut sw_rng = RngState::new(SW_DIRECTION_SEED);
            let sw = sliced_wasserstein(&samples, data, eval.sw_projections, &mut sw_rng)?;
            if metrics.points().last().map(|&(s, _)| s) != Some(step) {
                metrics.push(step, sw)?;
            }
        }
    }
    Ok(TrainRun { state, losses, metrics })
}
