//! Desk-scale convergence metrics: Fréchet distance between Gaussian fits,
//! sliced Wasserstein distance, and steps-to-threshold bookkeeping.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Covariance handling for [`frechet_gaussian_distance`]: full covariance is
/// intended for small d (toy data), diagonal for anything larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    Full,
    Diagonal,
}

/// Mean and population covariance (divides by m) of the rows.
pub fn fit_moments(samples: &Tensor) -> (Vec<f64>, DMatrix<f64>) {
    let (m, d) = (samples.nrows(), samples.ncols());
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (mu, &v) in mean.iter_mut().zip(samples.row(i)) {
            *mu += v;
        }
    }
    for mu in mean.iter_mut() {
        *mu /= m as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..m {
        let row = samples.row(i);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / m as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues in
/// [-1e-10, 0) clamp to zero, anything lower is an error.
fn sqrtm_psd(mat: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-10 {
                return Err(Error::Numerical(format!(
                    "{label}: eigenvalue {v:.3e} below -1e-10; matrix not PSD \
                     (min/max eig {:.3e}/{:.3e})",
                    eig.eigenvalues.min(),
                    eig.eigenvalues.max()
                )));
            }
            *v = 0.0;
        }
        *v = v.sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Fréchet distance between the Gaussian fits computed from moments:
/// ||mu_a - mu_b||^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2}).
pub fn frechet_from_moments(
    mean_a: &[f64],
    cov_a: &DMatrix<f64>,
    mean_b: &[f64],
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    if mean_a.len() != mean_b.len() {
        return Err(Error::ShapeMismatch("mean dimensions differ".into()));
    }
    let mean_term: f64 = mean_a
        .iter()
        .zip(mean_b)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let sqrt_a = sqrtm_psd(cov_a, "cov_a")?;
    let inner = &sqrt_a * cov_b * &sqrt_a;
    let cross = sqrtm_psd(&inner, "sqrt(cov_a) cov_b sqrt(cov_a)")?;
    let trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term).max(0.0))
}

/// Fit Gaussians to both sample sets and return their Fréchet distance.
/// `Full` needs m >= d + 1 rows per set; `Diagonal` needs m >= 2 and reduces
/// the trace term to Σ_j (σ_aj − σ_bj)².
pub fn frechet_gaussian_distance(a: &Tensor, b: &Tensor, cov: CovMode) -> Result<f64> {
    let d = a.ncols();
    if d != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "dims differ: {d} vs {}",
            b.ncols()
        )));
    }
    let min_rows = match cov {
        CovMode::Full => d + 1,
        CovMode::Diagonal => 2,
    };
    if a.nrows() < min_rows || b.nrows() < min_rows {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_rows} samples per set for {cov:?} covariance"
        )));
    }
    match cov {
        CovMode::Full => {
            let (mu_a, cov_a) = fit_moments(a);
            let (mu_b, cov_b) = fit_moments(b);
            frechet_from_moments(&mu_a, &cov_a, &mu_b, &cov_b)
        }
        CovMode::Diagonal => {
            let (mu_a, cov_a) = fit_moments(a);
            let (mu_b, cov_b) = fit_moments(b);
            let mean_term: f64 = mu_a
                .iter()
                .zip(&mu_b)
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum();
            let trace_term: f64 = (0..d)
                .map(|j| {
                    let sa = cov_a[(j, j)].max(0.0).sqrt();
                    let sb = cov_b[(j, j)].max(0.0).sqrt();
                    (sa - sb) * (sa - sb)
                })
                .sum();
            Ok(mean_term + trace_term)
        }
    }
}

/// 1-D 2-Wasserstein distance between sorted projections; unequal sizes are
/// compared through quantile interpolation at (i + 0.5) / L midpoints.
fn wasserstein_1d(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if a.len() == b.len() {
        let n = a.len() as f64;
        let acc: f64 = a.iter().zip(&b).map(|(&x, &y)| (x - y) * (x - y)).sum();
        return (acc / n).sqrt();
    }
    let l = a.len().max(b.len());
    let quantile = |sorted: &[f64], q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    let mut acc = 0.0;
    for i in 0..l {
        let q = (i as f64 + 0.5) / l as f64;
        let diff = quantile(&a, q) - quantile(&b, q);
        acc += diff * diff;
    }
    (acc / l as f64).sqrt()
}

/// Average 1-D 2-Wasserstein distance of the two point sets over random unit
/// projection directions drawn from `rng`.
pub fn sliced_wasserstein(
    a: &Tensor,
    b: &Tensor,
    n_projections: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if n_projections < 1 {
        return Err(Error::InvalidArgument("need n_projections >= 1".into()));
    }
    let d = a.ncols();
    if d != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "dims differ: {d} vs {}",
            b.ncols()
        )));
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    let mut total = 0.0;
    let mut dir = vec![0.0; d];
    for _ in 0..n_projections {
        loop {
            rng.fill_normal(&mut dir);
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for v in dir.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
        let project = |t: &Tensor| -> Vec<f64> {
            (0..t.nrows())
                .map(|i| t.row(i).iter().zip(&dir).map(|(&x, &u)| x * u).sum())
                .collect()
        };
        total += wasserstein_1d(project(a), project(b));
    }
    Ok(total / n_projections as f64)
}

/// One logged evaluation series: (step, value) with strictly increasing steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricHistory {
    pub metric: String,
    points: Vec<(u64, f64)>,
}

impl MetricHistory {
    pub fn new(metric: impl Into<String>) -> Self {
        Self { metric: metric.into(), points: Vec::new() }
    }

    pub fn push(&mut self, step: u64, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "metric {} at step {step}: {value}",
                self.metric
            )));
        }
        if let Some(&(last, _)) = self.points.last() {
            if step <= last {
                return Err(Error::InvalidArgument(format!(
                    "steps must be strictly increasing: {step} after {last}"
                )));
            }
        }
        self.points.push((step, value));
        Ok(())
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn best(&self) -> Option<f64> {
        self.points.iter().map(|&(_, v)| v).fold(None, |acc, v| {
            Some(match acc {
                None => v,
                Some(a) => a.min(v),
            })
        })
    }

    /// JSON-lines form: one {"step", "metric", "value", "run_id"} per point.
    pub fn to_jsonl(&self, run_id: &str) -> String {
        let mut out = String::new();
        for &(step, value) in &self.points {
            out.push_str(
                &serde_json::json!({
                    "step": step,
                    "metric": self.metric,
                    "value": value,
                    "run_id": run_id,
                })
                .to_string(),
            );
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, metric: &str) -> Result<Self> {
        let mut hist = MetricHistory::new(metric);
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line)?;
            if v["metric"].as_str() == Some(metric) {
                let step = v["step"].as_u64().ok_or_else(|| {
                    Error::Format(format!("bad step in metrics line: {line}"))
                })?;
                let value = v["value"].as_f64().ok_or_else(|| {
                    Error::Format(format!("bad value in metrics line: {line}"))
                })?;
                hist.push(step, value)?;
            }
        }
        Ok(hist)
    }
}

/// Smallest logged step whose value is <= threshold; `None` if never reached.
pub fn steps_to_threshold(history: &MetricHistory, threshold: f64) -> Option<u64> {
    history
        .points()
        .iter()
        .find(|&&(_, v)| v <= threshold)
        .map(|&(s, _)| s)
}

/// Training-step speedup of `immiscible` over `vanilla` at the threshold set
/// by vanilla's best value. `None` if immiscible never reaches it.
pub fn speedup_ratio(vanilla: &MetricHistory, immiscible: &MetricHistory) -> Result<Option<f64>> {
    if vanilla.metric != immiscible.metric {
        return Err(Error::InvalidArgument(format!(
            "metric mismatch: {} vs {}",
            vanilla.metric, immiscible.metric
        )));
    }
    if vanilla.is_empty() || immiscible.is_empty() {
        return Err(Error::InvalidArgument("empty metric history".into()));
    }
    let threshold = vanilla.best().unwrap();
    let steps_vanilla = steps_to_threshold(vanilla, threshold)
        .expect("vanilla reaches its own best") as f64;
    Ok(steps_to_threshold(immiscible, threshold).map(|s| steps_vanilla / s as f64))
}
