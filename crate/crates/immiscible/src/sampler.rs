//! Deterministic samplers: DDIM with no stochastic term (plus per-step
//! predicted-x0 probes) and Euler integration of a learned velocity field.

use crate::diffusion::predict_x0;
use crate::error::{Error, Result};
use crate::model::{DenoiserModel, PredTarget};
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// Linearly spaced schedule indices from T down to 0 inclusive,
/// `n_steps + 1` entries.
pub fn linear_taus(t_max: usize, n_steps: usize) -> Vec<usize> {
    (0..=n_steps)
        .map(|i| {
            let frac = i as f64 / n_steps as f64;
            ((1.0 - frac) * t_max as f64).round() as usize
        })
        .collect()
}

/// Deterministic DDIM sampling ("no noise during the sampling"), returning
/// the final samples and the predicted-x0 probe at every visited step.
pub fn sample_ddim(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    n_steps: usize,
    initial_noise: &Tensor,
) -> Result<(Tensor, Vec<Tensor>)> {
    if model.target != PredTarget::Epsilon {
        return Err(Error::InvalidArgument(
            "sample_ddim requires an epsilon-target model".into(),
        ));
    }
    if n_steps < 1 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let t_max = schedule.t_max();
    if n_steps > t_max {
        return Err(Error::InvalidArgument(format!(
            "n_steps {n_steps} exceeds schedule T {t_max}"
        )));
    }
    let taus = linear_taus(t_max, n_steps);
    let n = initial_noise.nrows();
    let mut x = initial_noise.clone();
    let mut x0_trajectory = Vec::with_capacity(n_steps);
    for w in taus.windows(2) {
        let (tau, tau_next) = (w[0], w[1]);
        let alpha = schedule.alpha(tau);
        let alpha_next = schedule.alpha(tau_next);
        let t_norm = tau as f64 / t_max as f64;
        let eps = model.forward(&x, &vec![t_norm; n])?;
        let x0 = predict_x0(&x, &eps, alpha)?;
        // deterministic DDIM update (eta = 0)
        let sa = alpha_next.sqrt();
        let sn = (1.0 - alpha_next).sqrt();
        x = x0.zip_with(&eps, |x0v, ev| sa * x0v + sn * ev)?;
        x0_trajectory.push(x0);
    }
    Ok((x, x0_trajectory))
}

/// Euler integration of the learned velocity field from t = 1 to t = 0:
/// x <- x - (1 / n_steps) * v(x, t).
pub fn sample_flow_euler(
    model: &DenoiserModel,
    n_steps: usize,
    initial_noise: &Tensor,
) -> Result<Tensor> {
    if model.target != PredTarget::Velocity {
        return Err(Error::InvalidArgument(
            "sample_flow_euler requires a velocity-target model".into(),
        ));
    }
    if n_steps < 1 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let n = initial_noise.nrows();
    let h = 1.0 / n_steps as f64;
    let mut x = initial_noise.clone();
    for i in 0..n_steps {
        let t = 1.0 - i as f64 * h;
        let v = model.forward(&x, &vec![t; n])?;
        x = x.zip_with(&v, |xv, vv| xv - h * vv)?;
    }
    Ok(x)
}
