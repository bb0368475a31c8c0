//! Builtin toy datasets, standardized to zero mean and a configurable
//! pooled standard deviation (default 0.5, mirroring the usual image norm
//! convention).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const DEFAULT_STD: f64 = 0.5;

pub const BUILTIN_NAMES: &[&str] = &[
    "two_moons",
    "eight_gaussians",
    "checkerboard",
    "swiss_roll_2d",
    "blobs",
];

/// Subtract per-column means, then scale every entry so the pooled standard
/// deviation over all entries equals `std`.
pub fn standardize(mut t: Tensor, std: f64) -> Result<Tensor> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::InvalidArgument(format!("std must be positive, got {std}")));
    }
    let (n, d) = (t.nrows(), t.ncols());
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in means.iter_mut().zip(t.row(i)) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let mut pooled = 0.0;
    for i in 0..n {
        for (j, &v) in t.row(i).iter().enumerate() {
            let c = v - means[j];
            pooled += c * c;
        }
    }
    pooled = (pooled / (n * d) as f64).sqrt();
    if pooled == 0.0 {
        return Err(Error::Numerical("constant dataset cannot be standardized".into()));
    }
    let scale = std / pooled;
    for i in 0..n {
        let row = t.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - means[j]) * scale;
        }
    }
    Ok(t)
}

fn two_moons(n: usize, rng: &mut RngState) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    for i in 0..n {
        let ang = rng.uniform() * PI;
        let (x, y) = if i % 2 == 0 {
            (ang.cos(), ang.sin())
        } else {
            (1.0 - ang.cos(), 0.5 - ang.sin())
        };
        data.push(x + 0.07 * rng.normal());
        data.push(y + 0.07 * rng.normal());
    }
    Tensor::from_vec_unchecked(vec![n, 2], data)
}

fn eight_gaussians(n: usize, rng: &mut RngState) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let mode = rng.below(8) as f64;
        let ang = mode * PI / 4.0;
        data.push(4.0 * ang.cos() + 0.4 * rng.normal());
        data.push(4.0 * ang.sin() + 0.4 * rng.normal());
    }
    Tensor::from_vec_unchecked(vec![n, 2], data)
}

fn checkerboard(n: usize, rng: &mut RngState) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    let mut produced = 0;
    while produced < n {
        let x = rng.uniform() * 4.0 - 2.0;
        let y = rng.uniform() * 4.0 - 2.0;
        let cell = (x.floor() as i64 + y.floor() as i64).rem_euclid(2);
        if cell == 0 {
            data.push(x);
            data.push(y);
            produced += 1;
        }
    }
    Tensor::from_vec_unchecked(vec![n, 2], data)
}

fn swiss_roll_2d(n: usize, rng: &mut RngState) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let t = 1.5 * PI + 3.0 * PI * rng.uniform();
        data.push(t * t.cos() / (4.5 * PI) * 4.0 + 0.05 * rng.normal());
        data.push(t * t.sin() / (4.5 * PI) * 4.0 + 0.05 * rng.normal());
    }
    Tensor::from_vec_unchecked(vec![n, 2], data)
}

/// Grayscale raster blobs flattened to d values. d must be s² (one channel)
/// or 3·s² (three channels); each sample is a sum of a few smooth Gaussian
/// bumps, which gives the spatially correlated, image-like structure used by
/// the dimension-matched diagnostics.
fn blobs(n: usize, d: usize, rng: &mut RngState) -> Result<Tensor> {
    let (channels, side) = blob_geometry(d)?;
    let mut data = vec![0.0; n * d];
    for img in data.chunks_mut(d) {
        let n_blobs = 2 + rng.below(3);
        for _ in 0..n_blobs {
            let cx = rng.uniform() * side as f64;
            let cy = rng.uniform() * side as f64;
            let amp = 0.5 + rng.uniform();
            let width = side as f64 * (0.1 + 0.15 * rng.uniform());
            let inv = 1.0 / (2.0 * width * width);
            // channel weights make the blob colored when channels == 3
            let wch: Vec<f64> = (0..channels).map(|_| 0.3 + 0.7 * rng.uniform()).collect();
            for py in 0..side {
                for px in 0..side {
                    let dx = px as f64 - cx;
                    let dy = py as f64 - cy;
                    let g = amp * (-(dx * dx + dy * dy) * inv).exp();
                    for (c, &w) in wch.iter().enumerate() {
                        img[c * side * side + py * side + px] += w * g;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec_unchecked(vec![n, d], data))
}

fn blob_geometry(d: usize) -> Result<(usize, usize)> {
    let isqrt = |v: usize| (v as f64).sqrt().round() as usize;
    let s1 = isqrt(d);
    if s1 * s1 == d {
        return Ok((1, s1));
    }
    if d % 3 == 0 {
        let s3 = isqrt(d / 3);
        if 3 * s3 * s3 == d {
            return Ok((3, s3));
        }
    }
    Err(Error::InvalidArgument(format!(
        "blobs needs d = s^2 or 3*s^2, got {d}"
    )))
}

/// Generate a builtin dataset of `n` points, standardized to `std`.
/// `dim` applies to `blobs` only (ignored by the 2-D builtins).
pub fn generate(name: &str, n: usize, dim: usize, std: f64, rng: &mut RngState) -> Result<Tensor> {
    if n < 2 {
        return Err(Error::InvalidArgument("dataset needs n >= 2".into()));
    }
    let raw = match name {
        "two_moons" => two_moons(n, rng),
        "eight_gaussians" => eight_gaussians(n, rng),
        "checkerboard" => checkerboard(n, rng),
        "swiss_roll_2d" => swiss_roll_2d(n, rng),
        "blobs" => blobs(n, dim, rng)?,
        other => {
            return Err(Error::Config(format!(
                "unknown dataset '{other}'; builtins: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    standardize(raw, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_moments() {
        let mut rng = RngState::new(1);
        for name in ["two_moons", "eight_gaussians", "checkerboard", "swiss_roll_2d"] {
            let t = generate(name, 8192, 2, 0.5, &mut rng).unwrap();
            assert_eq!(t.shape(), &[8192, 2]);
            let mean = t.data().iter().sum::<f64>() / t.numel() as f64;
            assert!(mean.abs() < 0.01, "{name}: mean {mean}");
            let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.numel() as f64;
            assert!((var.sqrt() - 0.5).abs() < 0.01, "{name}: std {}", var.sqrt());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate("eight_gaussians", 256, 2, 0.5, &mut RngState::new(9)).unwrap();
        let b = generate("eight_gaussians", 256, 2, 0.5, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_name_rejected() {
        let mut rng = RngState::new(0);
        assert!(matches!(
            generate("nine_gaussians", 16, 2, 0.5, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn blobs_dimensions() {
        let mut rng = RngState::new(3);
        let t = generate("blobs", 8, 3072, 1.0, &mut rng).unwrap();
        assert_eq!(t.shape(), &[8, 3072]);
        let t2 = generate("blobs", 8, 16, 0.5, &mut rng).unwrap();
        assert_eq!(t2.shape(), &[8, 16]);
        assert!(generate("blobs", 8, 17, 0.5, &mut rng).is_err());
    }

    #[test]
    fn standardize_rejects_bad_std_and_constant_data() {
        let t = Tensor::from_vec(vec![2, 1], vec![1.0, 1.0]).unwrap();
        assert!(standardize(t.clone(), 0.0).is_err());
        assert!(standardize(t, 0.5).is_err());
    }
}
