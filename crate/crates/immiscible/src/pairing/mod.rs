//! Image–noise coupling strategies: random baseline, batch linear
//! assignment, KNN candidate selection, and image scaling.

mod lap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{gaussian_sample, RngState};
use crate::tensor::{sq_dist, Tensor};

/// Cost metric for the assignment coupling. Plain L2 is the default; squared
/// L2 is cheaper and standard in minibatch-OT practice, and the two can pick
/// different assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    L2,
    SqL2,
}

/// Method tag carried by [`PairingResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMethod {
    Random,
    Assignment,
    Knn,
    Scaled,
}

impl std::fmt::Display for PairingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PairingMethod::Random => "random",
            PairingMethod::Assignment => "assignment",
            PairingMethod::Knn => "knn",
            PairingMethod::Scaled => "scaled",
        };
        f.write_str(s)
    }
}

/// A bijection between a data batch and a noise batch, with per-pair L2
/// distances and method metadata. Serializes to JSON for logging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingResult {
    /// Image `i` is paired with noise `permutation[i]`.
    pub permutation: Vec<usize>,
    /// L2 distance between image `i` and its paired noise.
    pub pair_distance: Vec<f64>,
    pub method: PairingMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl PairingResult {
    pub fn mean_distance(&self) -> f64 {
        self.pair_distance.iter().sum::<f64>() / self.pair_distance.len() as f64
    }

    fn check_bijection(&self) -> bool {
        let n = self.permutation.len();
        let mut seen = vec![false; n];
        for &j in &self.permutation {
            if j >= n || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        true
    }
}

fn row_l2(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Configured pairing strategy, as selected by run configs and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PairingConfig {
    Random,
    Assignment {
        #[serde(default = "default_metric")]
        metric: CostMetric,
    },
    Knn {
        k: usize,
    },
    Scaled {
        s: f64,
        inner: Box<PairingConfig>,
    },
}

fn default_metric() -> CostMetric {
    CostMetric::L2
}

impl PairingConfig {
    pub fn method_tag(&self) -> PairingMethod {
        match self {
            PairingConfig::Random => PairingMethod::Random,
            PairingConfig::Assignment { .. } => PairingMethod::Assignment,
            PairingConfig::Knn { .. } => PairingMethod::Knn,
            PairingConfig::Scaled { .. } => PairingMethod::Scaled,
        }
    }

    pub fn knn_k(&self) -> Option<usize> {
        match self {
            PairingConfig::Knn { k } => Some(*k),
            PairingConfig::Scaled { inner, .. } => inner.knn_k(),
            _ => None,
        }
    }

    /// Overall image multiplier applied before diffusion (1 when unscaled);
    /// generated samples divide by this before evaluation.
    pub fn scale_factor(&self) -> f64 {
        match self {
            PairingConfig::Scaled { s, inner } => s * inner.scale_factor(),
            _ => 1.0,
        }
    }

    pub fn validate(&self, batch_size: usize) -> Result<()> {
        match self {
            PairingConfig::Random => Ok(()),
            PairingConfig::Assignment { .. } => {
                if batch_size < 2 {
                    Err(Error::InvalidArgument(
                        "assignment pairing needs batch size >= 2".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            PairingConfig::Knn { k } => {
                if *k == 0 {
                    Err(Error::InvalidArgument("knn requires k >= 1".into()))
                } else {
                    Ok(())
                }
            }
            PairingConfig::Scaled { s, inner } => {
                if !(*s > 0.0) || !s.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "scale factor must be positive and finite, got {s}"
                    )));
                }
                if matches!(**inner, PairingConfig::Scaled { .. }) {
                    return Err(Error::InvalidArgument(
                        "nested scaled pairing; fold the factors instead".into(),
                    ));
                }
                inner.validate(batch_size)
            }
        }
    }
}

impl std::fmt::Display for PairingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairingConfig::Random => write!(f, "random"),
            PairingConfig::Assignment { metric } => write!(
                f,
                "assignment({})",
                match metric {
                    CostMetric::L2 => "l2",
                    CostMetric::SqL2 => "sq_l2",
                }
            ),
            PairingConfig::Knn { k } => write!(f, "knn(k={k})"),
            PairingConfig::Scaled { s, inner } => write!(f, "scaled(s={s}, {inner})"),
        }
    }
}

/// Run the configured pairing on a batch. Returns the effective images
/// (scaled when configured), the noise batch reordered so row i pairs with
/// image i, and the pairing metadata. Scaled pairing applies the inner
/// strategy to the scaled images.
pub fn apply_pairing(
    config: &PairingConfig,
    images: &Tensor,
    rng: &mut RngState,
) -> Result<(Tensor, Tensor, PairingResult)> {
    match config {
        PairingConfig::Random => {
            let (noises, result) = pair_random(images, rng)?;
            Ok((images.clone(), noises, result))
        }
        PairingConfig::Assignment { metric } => {
            let n = images.nrows();
            let d = images.ncols();
            let noises = gaussian_sample(rng, &[n, d])?;
            let result = pair_assignment(images, &noises, *metric)?;
            let aligned = noises.gather_rows(&result.permutation);
            Ok((images.clone(), aligned, result))
        }
        PairingConfig::Knn { k } => {
            let (noises, result) = knn_select(images, *k, rng)?;
            Ok((images.clone(), noises, result))
        }
        PairingConfig::Scaled { s, inner } => {
            let scaled = scale_images(images, *s)?;
            let (eff, noises, mut result) = apply_pairing(inner, &scaled, rng)?;
            result.method = PairingMethod::Scaled;
            result.scale = Some(*s);
            Ok((eff, noises, result))
        }
    }
}

/// Vanilla coupling: one fresh Gaussian per image, identity permutation.
pub fn pair_random(images: &Tensor, rng: &mut RngState) -> Result<(Tensor, PairingResult)> {
    let n = images.nrows();
    let d = images.ncols();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let noises = gaussian_sample(rng, &[n, d])?;
    let pair_distance = (0..n).map(|i| row_l2(images.row(i), noises.row(i))).collect();
    let result = PairingResult {
        permutation: (0..n).collect(),
        pair_distance,
        method: PairingMethod::Random,
        k: None,
        scale: None,
    };
    Ok((noises, result))
}

/// Minimum-total-cost bijection between equal-size image and noise batches.
/// The permutation minimizes Σ_i cost(image_i, noise_{π(i)}) over all
/// bijections; the reported `pair_distance` is always plain L2.
pub fn pair_assignment(
    images: &Tensor,
    noises: &Tensor,
    metric: CostMetric,
) -> Result<PairingResult> {
    let n = images.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if n != noises.nrows() || images.ncols() != noises.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "images {}x{} vs noises {}x{}",
            n,
            images.ncols(),
            noises.nrows(),
            noises.ncols()
        )));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let ri = images.row(i);
        let crow = &mut cost[i * n..(i + 1) * n];
        for (j, c) in crow.iter_mut().enumerate() {
            let sq = sq_dist(ri, noises.row(j));
            *c = match metric {
                CostMetric::SqL2 => sq,
                CostMetric::L2 => sq.sqrt(),
            };
        }
    }
    let permutation = lap::solve(&cost, n)?;
    let pair_distance = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| row_l2(images.row(i), noises.row(j)))
        .collect();
    Ok(PairingResult {
        permutation,
        pair_distance,
        method: PairingMethod::Assignment,
        k: None,
        scale: None,
    })
}

/// KNN noise selection: `k` fresh Gaussian candidates per image, keep the
/// L2-closest, ties to the lowest candidate index. Candidates are drawn
/// image-by-image in batch order from the single rng stream (image 0's k
/// candidates first, then image 1's, ...), consuming exactly n·k·d draws, so
/// runs are replayable.
pub fn knn_select(
    images: &Tensor,
    k: usize,
    rng: &mut RngState,
) -> Result<(Tensor, PairingResult)> {
    if k == 0 {
        return Err(Error::InvalidArgument("knn requires k >= 1".into()));
    }
    let n = images.nrows();
    let d = images.ncols();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut selected = vec![0.0; n * d];
    let mut pair_distance = vec![0.0; n];
    let mut cand = vec![0.0; k * d];
    for i in 0..n {
        rng.fill_normal(&mut cand);
        let ri = images.row(i);
        let mut best = 0usize;
        let mut best_sq = f64::INFINITY;
        for j in 0..k {
            let sq = sq_dist(ri, &cand[j * d..(j + 1) * d]);
            if sq < best_sq {
                best_sq = sq;
                best = j;
            }
        }
        selected[i * d..(i + 1) * d].copy_from_slice(&cand[best * d..(best + 1) * d]);
        pair_distance[i] = best_sq.sqrt();
    }
    let noises = Tensor::from_vec_unchecked(vec![n, d], selected);
    let result = PairingResult {
        permutation: (0..n).collect(),
        pair_distance,
        method: PairingMethod::Knn,
        k: Some(k),
        scale: None,
    };
    Ok((noises, result))
}

/// Multiply every element by `s`; the noise space is untouched. Generated
/// samples are divided by `s` after sampling so outputs stay in the original
/// data range.
pub fn scale_images(images: &Tensor, s: f64) -> Result<Tensor> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive and finite, got {s}"
        )));
    }
    Ok(images.map(|v| v * s))
}
