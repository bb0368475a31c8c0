//! Forward diffusion, flow interpolation, and the predicted-x0 probe.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// x_t = sqrt(alpha_t) * x + sqrt(1 - alpha_t) * n.
pub fn forward_diffuse(x: &Tensor, n: &Tensor, alpha_t: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha_t) {
        return Err(Error::InvalidArgument(format!(
            "alpha_t must be in [0, 1], got {alpha_t}"
        )));
    }
    let sa = alpha_t.sqrt();
    let sn = (1.0 - alpha_t).sqrt();
    x.zip_with(n, |xv, nv| sa * xv + sn * nv)
}

/// Linear interpolation x_t = (1 - t) * x + t * n with velocity target
/// v = n - x.
pub fn flow_interpolate(x: &Tensor, n: &Tensor, t: f64) -> Result<(Tensor, Tensor)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "flow time must be in [0, 1], got {t}"
        )));
    }
    let x_t = x.zip_with(n, |xv, nv| (1.0 - t) * xv + t * nv)?;
    let v = n.zip_with(x, |nv, xv| nv - xv)?;
    Ok((x_t, v))
}

/// Predicted clean point from the current feature and predicted noise:
/// x_pred0 = x_tau / sqrt(alpha) - (sqrt(1 - alpha) / sqrt(alpha)) * n_pred.
pub fn predict_x0(x_tau: &Tensor, n_pred: &Tensor, alpha_tau: f64) -> Result<Tensor> {
    if !(alpha_tau > 0.0 && alpha_tau <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_tau must be in (0, 1], got {alpha_tau}"
        )));
    }
    let inv_sa = 1.0 / alpha_tau.sqrt();
    let coef = (1.0 - alpha_tau).sqrt() * inv_sa;
    x_tau.zip_with(n_pred, |xv, nv| inv_sa * xv - coef * nv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_sample, RngState};

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn diffuse_endpoints() {
        let x = scalar(2.0);
        let n = scalar(1.0);
        assert_eq!(forward_diffuse(&x, &n, 1.0).unwrap(), x);
        assert_eq!(forward_diffuse(&x, &n, 0.0).unwrap(), n);
    }

    #[test]
    fn diffuse_hand_evaluated() {
        // alpha = 0.25: 0.5 * 2 + sqrt(0.75) * 1 = 1.8660254...
        let out = forward_diffuse(&scalar(2.0), &scalar(1.0), 0.25).unwrap();
        assert!((out.data()[0] - 1.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn diffuse_rejects_bad_inputs() {
        let x = scalar(0.0);
        assert!(forward_diffuse(&x, &x, 1.5).is_err());
        assert!(forward_diffuse(&x, &x, -0.1).is_err());
        let y = Tensor::zeros(vec![2]).unwrap();
        assert!(forward_diffuse(&x, &y, 0.5).is_err());
    }

    #[test]
    fn diffuse_preserves_unit_variance() {
        let mut rng = RngState::new(8);
        let x = gaussian_sample(&mut rng, &[200_000]).unwrap();
        let n = gaussian_sample(&mut rng, &[200_000]).unwrap();
        for alpha in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let xt = forward_diffuse(&x, &n, alpha).unwrap();
            let (_, var, _, _) = crate::rng::sample_moments(xt.data());
            assert!((var - 1.0).abs() < 0.02, "alpha {alpha}: var {var}");
        }
    }

    #[test]
    fn flow_endpoints_and_midpoint() {
        let x = scalar(2.0);
        let n = scalar(0.0);
        let (x0, v0) = flow_interpolate(&x, &n, 0.0).unwrap();
        assert_eq!(x0, x);
        assert_eq!(v0.data(), &[-2.0]);
        let (x1, _) = flow_interpolate(&x, &n, 1.0).unwrap();
        assert_eq!(x1, n);
        let (xm, vm) = flow_interpolate(&x, &n, 0.5).unwrap();
        assert_eq!(xm.data(), &[1.0]);
        assert_eq!(vm.data(), &[-2.0]);
        assert!(flow_interpolate(&x, &n, 1.1).is_err());
    }

    #[test]
    fn predict_x0_at_alpha_one_is_identity() {
        let xt = scalar(3.25);
        let n = scalar(-1.0);
        assert_eq!(predict_x0(&xt, &n, 1.0).unwrap(), xt);
        assert!(predict_x0(&xt, &n, 0.0).is_err());
    }

    #[test]
    fn predict_x0_inverts_forward_diffuse() {
        let mut rng = RngState::new(17);
        let x = gaussian_sample(&mut rng, &[32, 4]).unwrap();
        let n = gaussian_sample(&mut rng, &[32, 4]).unwrap();
        for alpha in [1.0, 0.9, 0.5, 0.1, 1e-4] {
            let xt = forward_diffuse(&x, &n, alpha).unwrap();
            let rec = predict_x0(&xt, &n, alpha).unwrap();
            for (a, b) in rec.data().iter().zip(x.data()) {
                assert!((a - b).abs() <= 1e-12, "alpha {alpha}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn predict_x0_hand_evaluated() {
        // alpha = 0.25: 1.0 / 0.5 - (sqrt(0.75) / 0.5) * 0.5 = 2 - 1.7320508 * 0.5
        let out = predict_x0(&scalar(1.0), &scalar(0.5), 0.25).unwrap();
        assert!((out.data()[0] - 1.133_974_596_215_561_4).abs() < 1e-12);
    }
}
