//! Measurement instruments: noise-cluster miscibility, moment-matched KL to
//! the standard Gaussian, perturbation stability of trained samplers, the
//! k-sweep table, and PCA trajectory projection with crossing counts.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::DenoiserModel;
use crate::pairing::PairingConfig;
use crate::rng::{gaussian_sample, RngState};
use crate::sampler::sample_ddim;
use crate::schedule::NoiseSchedule;
use crate::tensor::{sq_dist, Tensor};

/// Noise-cluster separation for one pairing method: each image accumulates m
/// paired noises, the score is the mean +- std of pairwise L2 distances
/// between the per-image cluster centroids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiscibilityReport {
    pub method: String,
    pub n_images: usize,
    pub points_per_cluster: usize,
    pub dim: usize,
    pub mean_centroid_distance: f64,
    pub std_centroid_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: u64,
}

/// Accumulate m pairing rounds where `pair_round` returns the noise aligned
/// to each image for that round, then reduce centroids to the score.
pub fn miscibility_from_rounds(
    images: &Tensor,
    m: usize,
    mut pair_round: impl FnMut(&Tensor, &mut RngState) -> Result<Tensor>,
    rng: &mut RngState,
) -> Result<(f64, f64)> {
    let n = images.nrows();
    let d = images.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument("miscibility needs n_images >= 2".into()));
    }
    let mut sums = vec![0.0; n * d];
    for _ in 0..m {
        let noises = pair_round(images, rng)?;
        if noises.nrows() != n || noises.ncols() != d {
            return Err(Error::ShapeMismatch(
                "pairing round returned wrong noise shape".into(),
            ));
        }
        for i in 0..n {
            let dst = &mut sums[i * d..(i + 1) * d];
            for (s, &v) in dst.iter_mut().zip(noises.row(i)) {
                *s += v;
            }
        }
    }
    let inv = 1.0 / m as f64;
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let ci = &sums[i * d..(i + 1) * d];
            let cj = &sums[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for (&a, &b) in ci.iter().zip(cj) {
                let diff = (a - b) * inv;
                acc += diff * diff;
            }
            dists.push(acc.sqrt());
        }
    }
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let var = dists.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / dists.len() as f64;
    Ok((mean, var.sqrt()))
}

/// Run the configured pairing over fresh noise batches until each of the
/// fixed `images` has accumulated `m` paired/selected noises, then report the
/// centroid-distance statistic.
pub fn miscibility_score(
    pairing: &PairingConfig,
    images: &Tensor,
    m: usize,
    rng: &mut RngState,
) -> Result<MiscibilityReport> {
    if m < 100 {
        return Err(Error::InvalidArgument("miscibility needs m >= 100".into()));
    }
    pairing.validate(images.nrows())?;
    let seed = rng.seed();
    let (mean, std) = miscibility_from_rounds(
        images,
        m,
        |imgs, r| {
            let (_, noises, _) = crate::pairing::apply_pairing(pairing, imgs, r)?;
            Ok(noises)
        },
        rng,
    )?;
    Ok(MiscibilityReport {
        method: pairing.method_tag().to_string(),
        n_images: images.nrows(),
        points_per_cluster: m,
        dim: images.ncols(),
        mean_centroid_distance: mean,
        std_centroid_distance: std,
        k: pairing.knn_k(),
        seed,
    })
}

/// E||N(0, I_d)|| = sqrt(2) * Gamma((d+1)/2) / Gamma(d/2).
pub fn chi_mean(d: usize) -> f64 {
    let d = d as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)).exp()
}

/// Closed-form expectation of the random-pairing miscibility score: the
/// centroids of i.i.d. clusters are N(0, I/m), so a centroid difference is
/// N(0, 2I/m) and its expected norm is sqrt(2/m) * E||N(0, I_d)||.
pub fn expected_random_score(d: usize, m: usize) -> f64 {
    (2.0 / m as f64).sqrt() * chi_mean(d)
}

/// Moment-matched KL divergence to the standard Gaussian: fit a mean and
/// per-dimension variance, return Σ_j (σ_j² + μ_j² − 1 − ln σ_j²) / 2. Only
/// relative comparisons between sample sets are meaningful.
pub fn kl_to_gaussian(samples: &Tensor) -> Result<f64> {
    let (m, d) = (samples.nrows(), samples.ncols());
    if m < 1000 {
        return Err(Error::InvalidArgument(format!(
            "kl_to_gaussian needs at least 1000 samples, got {m}"
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (mu, &v) in mean.iter_mut().zip(samples.row(i)) {
            *mu += v;
        }
    }
    for mu in mean.iter_mut() {
        *mu /= m as f64;
    }
    let mut var = vec![0.0; d];
    for i in 0..m {
        for ((s, &v), &mu) in var.iter_mut().zip(samples.row(i)).zip(&mean) {
            let c = v - mu;
            *s += c * c;
        }
    }
    let mut kl = 0.0;
    for (j, (&v, &mu)) in var.iter().zip(&mean).enumerate() {
        let sigma2 = v / m as f64;
        if sigma2 == 0.0 {
            return Err(Error::Numerical(format!("zero variance in dimension {j}")));
        }
        kl += 0.5 * (sigma2 + mu * mu - 1.0 - sigma2.ln());
    }
    Ok(kl)
}

/// Base noise, additive perturbations, and weights for the stability study:
/// N_tot = N_orig + W * N_pert.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub base: Tensor,
    pub perturbations: Vec<Tensor>,
    pub weights: Vec<f64>,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.perturbations.is_empty() {
            return Err(Error::InvalidArgument("need at least one perturbation".into()));
        }
        for p in &self.perturbations {
            if p.shape() != self.base.shape() {
                return Err(Error::ShapeMismatch(
                    "perturbation shape differs from base noise".into(),
                ));
            }
        }
        if self.weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
        }
        if !self.weights.contains(&0.0) {
            return Err(Error::InvalidArgument("weights must include 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub weight: f64,
    pub deviations: Vec<f64>,
    pub mean_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub rows: Vec<PerturbationRow>,
    /// Mean pairwise distance between independent samples; the scale against
    /// which deviations are judged.
    pub reference_scale: f64,
    pub sampler_steps: usize,
}

/// For each weight W and perturbation, sample from N_orig + W * N_pert and
/// measure the L2 deviation of the output from the W = 0 output.
pub fn perturbation_study(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    spec: &PerturbationSpec,
    sampler_steps: usize,
    rng: &mut RngState,
) -> Result<PerturbationReport> {
    spec.validate()?;
    let (base_out, _) = sample_ddim(model, schedule, sampler_steps, &spec.base)?;
    if base_out.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "sampler produced non-finite output; model looks untrained or corrupt".into(),
        ));
    }
    let mut rows = Vec::with_capacity(spec.weights.len());
    for &w in &spec.weights {
        let mut deviations = Vec::with_capacity(spec.perturbations.len());
        for pert in &spec.perturbations {
            let noise = spec.base.zip_with(pert, |b, p| b + w * p)?;
            let (out, _) = sample_ddim(model, schedule, sampler_steps, &noise)?;
            deviations.push(sq_dist(out.data(), base_out.data()).sqrt());
        }
        let mean_deviation = deviations.iter().sum::<f64>() / deviations.len() as f64;
        rows.push(PerturbationRow { weight: w, deviations, mean_deviation });
    }

    // independent-sample reference scale
    let n_ref = 64;
    let d = spec.base.ncols();
    let ref_noise = gaussian_sample(rng, &[n_ref, d])?;
    let (ref_out, _) = sample_ddim(model, schedule, sampler_steps, &ref_noise)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..n_ref {
        for j in i + 1..n_ref {
            acc += sq_dist(ref_out.row(i), ref_out.row(j)).sqrt();
            count += 1;
        }
    }
    Ok(PerturbationReport {
        rows,
        reference_scale: acc / count as f64,
        sampler_steps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepKRow {
    pub k: usize,
    pub mean_distance: f64,
    /// Percent change of the mean image-noise distance vs k = 1.
    pub distance_delta_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_to_threshold: Option<u64>,
}

/// Mean min-of-k image-noise distance per k, as a percentage change against
/// the k = 1 baseline. Candidates use common random numbers: one pool of
/// max(k) draws per image, with k-prefixes standing in for k fresh draws;
/// marginals per k are unchanged and the delta column becomes exactly
/// monotone.
pub fn sweep_k(images: &Tensor, k_values: &[usize], rng: &mut RngState) -> Result<Vec<SweepKRow>> {
    if k_values.is_empty() {
        return Err(Error::InvalidArgument("empty k grid".into()));
    }
    if k_values[0] != 1 || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "k_values must be sorted ascending and include 1".into(),
        ));
    }
    let n = images.nrows();
    let d = images.ncols();
    let max_k = *k_values.last().unwrap();
    // mean min-distance per k over all images
    let mut sums = vec![0.0; k_values.len()];
    let mut cand = vec![0.0; max_k * d];
    for i in 0..n {
        rng.fill_normal(&mut cand);
        let row = images.row(i);
        let mut running_min = f64::INFINITY;
        let mut slot = 0;
        for j in 0..max_k {
            let sq = sq_dist(row, &cand[j * d..(j + 1) * d]);
            if sq < running_min {
                running_min = sq;
            }
            if slot < k_values.len() && j + 1 == k_values[slot] {
                sums[slot] += running_min.sqrt();
                slot += 1;
            }
        }
    }
    let base = sums[0] / n as f64;
    Ok(k_values
        .iter()
        .zip(&sums)
        .map(|(&k, &s)| {
            let mean = s / n as f64;
            SweepKRow {
                k,
                mean_distance: mean,
                distance_delta_pct: (mean - base) / base * 100.0,
                steps_to_threshold: None,
            }
        })
        .collect())
}

/// Fit PCA on the pooled predicted-x0 points and return the top-2 projection
/// per trajectory per step. Rank-deficient directions zero-pad; component
/// signs are fixed (largest-magnitude entry positive) so reruns match.
pub fn trajectory_projection(x0_steps: &[Tensor]) -> Result<Vec<Vec<[f64; 2]>>> {
    if x0_steps.is_empty() {
        return Err(Error::InvalidArgument("no trajectory steps given".into()));
    }
    let n_traj = x0_steps[0].nrows();
    let d = x0_steps[0].ncols();
    if n_traj < 2 {
        return Err(Error::InvalidArgument("need at least 2 trajectories".into()));
    }
    for t in x0_steps {
        if t.nrows() != n_traj || t.ncols() != d {
            return Err(Error::ShapeMismatch("inconsistent trajectory tensors".into()));
        }
    }
    let n_steps = x0_steps.len();
    let total = n_traj * n_steps;

    // pool and center
    let mut mean = vec![0.0; d];
    for t in x0_steps {
        for i in 0..n_traj {
            for (m, &v) in mean.iter_mut().zip(t.row(i)) {
                *m += v;
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= total as f64;
    }
    let mut pooled = vec![0.0; total * d];
    for (s, t) in x0_steps.iter().enumerate() {
        for i in 0..n_traj {
            let dst = &mut pooled[(s * n_traj + i) * d..(s * n_traj + i + 1) * d];
            for ((o, &v), &m) in dst.iter_mut().zip(t.row(i)).zip(&mean) {
                *o = v - m;
            }
        }
    }

    let components = principal_components(&pooled, total, d);

    let mut out = vec![vec![[0.0; 2]; n_steps]; n_traj];
    for s in 0..n_steps {
        for i in 0..n_traj {
            let row = &pooled[(s * n_traj + i) * d..(s * n_traj + i + 1) * d];
            for c in 0..2 {
                out[i][s][c] = match &components[c] {
                    Some(v) => row.iter().zip(v).map(|(&x, &u)| x * u).sum(),
                    None => 0.0,
                };
            }
        }
    }
    Ok(out)
}

/// Top-2 unit eigenvectors of the covariance of centered rows; `None` for
/// directions with (near-)zero variance.
fn principal_components(centered: &[f64], n: usize, d: usize) -> [Option<Vec<f64>>; 2] {
    let scale_estimate = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let tiny = 1e-12 * scale_estimate.max(1e-300);

    let fix_sign = |v: &mut Vec<f64>| {
        let mut idx = 0;
        let mut best = 0.0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if v[idx] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    };

    if d <= 256 {
        let mut cov = nalgebra::DMatrix::zeros(d, d);
        for i in 0..n {
            let row = &centered[i * d..(i + 1) * d];
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / n as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut comps: [Option<Vec<f64>>; 2] = [None, None];
        for c in 0..2.min(d) {
            let idx = order[c];
            if eig.eigenvalues[idx] > tiny {
                let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
                fix_sign(&mut v);
                comps[c] = Some(v);
            }
        }
        comps
    } else {
        // matrix-free power iteration with deflation for large d
        let matvec = |v: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for i in 0..n {
                let row = &centered[i * d..(i + 1) * d];
                let dot: f64 = row.iter().zip(v).map(|(&x, &u)| x * u).sum();
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += dot * x;
                }
            }
            for o in out.iter_mut() {
                *o /= n as f64;
            }
        };
        let mut comps: [Option<Vec<f64>>; 2] = [None, None];
        let mut found: Vec<Vec<f64>> = Vec::new();
        for c in 0..2 {
            // deterministic start vector
            let mut v: Vec<f64> = (0..d)
                .map(|j| 1.0 / ((j + 1 + c) as f64).sqrt())
                .collect();
            let mut buf = vec![0.0; d];
            let mut lambda = 0.0;
            for _ in 0..500 {
                for prev in &found {
                    let dot: f64 = v.iter().zip(prev).map(|(&a, &b)| a * b).sum();
                    for (x, &p) in v.iter_mut().zip(prev) {
                        *x -= dot * p;
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-300 {
                    break;
                }
                for x in v.iter_mut() {
                    *x /= norm;
                }
                matvec(&v, &mut buf);
                let new_lambda: f64 = v.iter().zip(&buf).map(|(&a, &b)| a * b).sum();
                let delta = (new_lambda - lambda).abs();
                lambda = new_lambda;
                std::mem::swap(&mut v, &mut buf);
                if delta <= 1e-14 * lambda.abs().max(1e-300) {
                    break;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 && lambda > tiny {
                for x in v.iter_mut() {
                    *x /= norm;
                }
                let mut unit = v.clone();
                fix_sign(&mut unit);
                comps[c] = Some(unit);
                found.push(v);
            }
        }
        comps
    }
}

/// Count proper pairwise segment intersections between distinct projected
/// trajectories. Orientation sign tests; touching endpoints and collinear or
/// degenerate configurations do not count.
pub fn crossing_count(trajectories: &[Vec<[f64; 2]>]) -> Result<usize> {
    if trajectories.len() < 2 {
        return Ok(0);
    }
    let steps = trajectories[0].len();
    if trajectories.iter().any(|t| t.len() != steps) {
        return Err(Error::ShapeMismatch(
            "trajectories must have equal step counts".into(),
        ));
    }
    let mut count = 0;
    for a in 0..trajectories.len() {
        for b in a + 1..trajectories.len() {
            let (ta, tb) = (&trajectories[a], &trajectories[b]);
            for u in ta.windows(2) {
                // bounding-box prefilter
                let (ux0, ux1) = minmax(u[0][0], u[1][0]);
                let (uy0, uy1) = minmax(u[0][1], u[1][1]);
                for v in tb.windows(2) {
                    let (vx0, vx1) = minmax(v[0][0], v[1][0]);
                    if vx1 < ux0 || vx0 > ux1 {
                        continue;
                    }
                    let (vy0, vy1) = minmax(v[0][1], v[1][1]);
                    if vy1 < uy0 || vy0 > uy1 {
                        continue;
                    }
                    if segments_cross(u[0], u[1], v[0], v[1]) {
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(count)
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> i8 {
    let v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

pub(crate) fn segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let o1 = orient(p, q, r);
    let o2 = orient(p, q, s);
    let o3 = orient(r, s, p);
    let o4 = orient(r, s, q);
    o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 && o1 != o2 && o3 != o4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::CostMetric;

    #[test]
    fn chi_mean_small_dims() {
        // E||N(0,I_1)|| = sqrt(2/pi); E||N(0,I_4)|| = 3/4 * sqrt(2*pi)... / 1
        assert!((chi_mean(1) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let want4 = 0.75 * (2.0 * std::f64::consts::PI).sqrt();
        assert!((chi_mean(4) - want4).abs() < 1e-12, "{} vs {want4}", chi_mean(4));
    }

    #[test]
    fn random_score_matches_closed_form() {
        let mut rng = RngState::new(1);
        let images = gaussian_sample(&mut rng, &[8, 4]).unwrap();
        let m = 4000;
        let report =
            miscibility_score(&PairingConfig::Random, &images, m, &mut RngState::new(2)).unwrap();
        let expect = expected_random_score(4, m);
        // mean over 28 pairs; allow 3 standard-error-ish slack
        let slack = 3.0 * report.std_centroid_distance / (28f64).sqrt() + 0.15 * expect;
        assert!(
            (report.mean_centroid_distance - expect).abs() < slack,
            "got {} expect {expect}",
            report.mean_centroid_distance
        );
    }

    #[test]
    fn deterministic_clusters_give_exact_score() {
        // image 0 always receives +u, image 1 always receives -u: score = 2||u||
        let images = Tensor::from_vec(vec![2, 3], vec![0.0; 6]).unwrap();
        let u = [0.5, -1.0, 2.0];
        let norm_u = (u.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let (mean, std) = miscibility_from_rounds(
            &images,
            200,
            |_, _| {
                let mut data = Vec::with_capacity(6);
                data.extend_from_slice(&u);
                data.extend(u.iter().map(|v| -v));
                Ok(Tensor::from_vec(vec![2, 3], data).unwrap())
            },
            &mut RngState::new(0),
        )
        .unwrap();
        assert!((mean - 2.0 * norm_u).abs() < 1e-12);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn ordering_on_small_instance() {
        // d = 64 keeps this fast; ordering should already hold
        let mut rng = RngState::new(3);
        let images = gaussian_sample(&mut rng, &[8, 64]).unwrap();
        let m = 2000;
        let score = |cfg: &PairingConfig| {
            miscibility_score(cfg, &images, m, &mut RngState::new(7))
                .unwrap()
                .mean_centroid_distance
        };
        let r = score(&PairingConfig::Random);
        let k = score(&PairingConfig::Knn { k: 8 });
        let a = score(&PairingConfig::Assignment { metric: CostMetric::L2 });
        assert!(a > k, "assignment {a} !> knn {k}");
        assert!(k > r, "knn {k} !> random {r}");
    }

    #[test]
    fn miscibility_rejects_bad_args() {
        let mut rng = RngState::new(0);
        let one = gaussian_sample(&mut rng, &[1, 4]).unwrap();
        let ok = gaussian_sample(&mut rng, &[4, 4]).unwrap();
        assert!(miscibility_score(&PairingConfig::Random, &one, 500, &mut rng).is_err());
        assert!(miscibility_score(&PairingConfig::Random, &ok, 99, &mut rng).is_err());
    }

    #[test]
    fn kl_standardized_samples_give_zero() {
        // construct samples with exactly mean 0 and variance 1 per dimension
        let m = 2000;
        let mut data = Vec::with_capacity(m * 2);
        let mut rng = RngState::new(5);
        let mut col = vec![0.0; m];
        for _ in 0..2 {
            rng.fill_normal(&mut col);
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let s = var.sqrt();
            for v in col.iter_mut() {
                *v = (*v - mean) / s;
            }
            data.extend_from_slice(&col);
        }
        // interleave columns into rows
        let mut rows = vec![0.0; m * 2];
        for i in 0..m {
            rows[i * 2] = data[i];
            rows[i * 2 + 1] = data[m + i];
        }
        let t = Tensor::from_vec(vec![m, 2], rows).unwrap();
        let kl = kl_to_gaussian(&t).unwrap();
        assert!(kl.abs() < 1e-12, "kl {kl}");
    }

    #[test]
    fn kl_mean_shift_closed_form() {
        let m = 5000;
        let mut rng = RngState::new(6);
        let mut t = gaussian_sample(&mut rng, &[m, 3]).unwrap();
        // standardize exactly, then shift by mu
        let mu = [0.5, -0.25, 1.0];
        for j in 0..3 {
            let mut col: Vec<f64> = (0..m).map(|i| t.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let s = var.sqrt();
            for v in col.iter_mut() {
                *v = (*v - mean) / s + mu[j];
            }
            for i in 0..m {
                t.data_mut()[i * 3 + j] = col[i];
            }
        }
        let kl = kl_to_gaussian(&t).unwrap();
        let want: f64 = mu.iter().map(|&v| v * v).sum::<f64>() / 2.0;
        assert!((kl - want).abs() < 1e-9, "kl {kl} want {want}");
    }

    #[test]
    fn kl_preconditions() {
        let mut rng = RngState::new(7);
        let small = gaussian_sample(&mut rng, &[10, 2]).unwrap();
        assert!(kl_to_gaussian(&small).is_err());
        let constant = Tensor::from_vec(vec![1000, 1], vec![1.0; 1000]).unwrap();
        assert!(matches!(kl_to_gaussian(&constant), Err(Error::Numerical(_))));
    }

    #[test]
    fn kl_nonnegative_property() {
        let mut rng = RngState::new(8);
        for seed in 0..5 {
            let mut t = gaussian_sample(&mut RngState::new(800 + seed), &[1500, 4]).unwrap();
            for v in t.data_mut().iter_mut() {
                *v = *v * (0.5 + seed as f64 * 0.3) + 0.1 * seed as f64;
            }
            assert!(kl_to_gaussian(&t).unwrap() >= 0.0);
        }
        let iid = gaussian_sample(&mut rng, &[5000, 8]).unwrap();
        let kl = kl_to_gaussian(&iid).unwrap();
        assert!(kl > 0.0 && kl < 0.05, "iid sampling-noise kl {kl}");
    }

    #[test]
    fn sweep_k_monotone_and_zero_baseline() {
        let mut rng = RngState::new(9);
        let images = gaussian_sample(&mut rng, &[256, 16]).unwrap();
        let rows = sweep_k(&images, &[1, 2, 4, 8], &mut rng).unwrap();
        assert_eq!(rows[0].distance_delta_pct, 0.0);
        for w in rows.windows(2) {
            assert!(w[1].distance_delta_pct <= w[0].distance_delta_pct);
        }
        assert!(sweep_k(&images, &[], &mut rng).is_err());
        assert!(sweep_k(&images, &[2, 4], &mut rng).is_err());
        assert!(sweep_k(&images, &[1, 4, 2], &mut rng).is_err());
    }

    #[test]
    fn projection_of_identical_points_is_zero() {
        let step = Tensor::from_vec(vec![3, 4], vec![2.0; 12]).unwrap();
        let proj = trajectory_projection(&[step.clone(), step]).unwrap();
        for traj in &proj {
            for p in traj {
                assert_eq!(*p, [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn projection_preserves_planar_distances() {
        // points on a 2-D plane embedded in 7 dims
        let mut rng = RngState::new(10);
        let n = 40;
        let d = 7;
        // orthonormal frame
        let mut u = vec![0.0; d];
        let mut w = vec![0.0; d];
        rng.fill_normal(&mut u);
        rng.fill_normal(&mut w);
        let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= nu);
        let dot: f64 = u.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        for (wv, &uv) in w.iter_mut().zip(&u) {
            *wv -= dot * uv;
        }
        let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= nw);

        let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.normal(), 2.0 * rng.normal()]).collect();
        let mut flat = vec![0.0; n * d];
        for (i, c) in coords.iter().enumerate() {
            for j in 0..d {
                flat[i * d + j] = c[0] * u[j] + c[1] * w[j];
            }
        }
        // two steps sharing the same points keeps the test focused on PCA
        let step = Tensor::from_vec(vec![n, d], flat).unwrap();
        let proj = trajectory_projection(&[step.clone(), step]).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let orig = ((coords[i][0] - coords[j][0]).powi(2)
                    + (coords[i][1] - coords[j][1]).powi(2))
                .sqrt();
                let p = ((proj[i][0][0] - proj[j][0][0]).powi(2)
                    + (proj[i][0][1] - proj[j][0][1]).powi(2))
                .sqrt();
                assert!((orig - p).abs() < 1e-8, "pair ({i},{j}): {orig} vs {p}");
            }
        }
    }

    #[test]
    fn projection_is_deterministic() {
        let mut rng = RngState::new(11);
        let a = gaussian_sample(&mut rng, &[6, 5]).unwrap();
        let b = gaussian_sample(&mut rng, &[6, 5]).unwrap();
        let p1 = trajectory_projection(&[a.clone(), b.clone()]).unwrap();
        let p2 = trajectory_projection(&[a, b]).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn power_iteration_path_matches_exact_path() {
        // same planar data seen through both code paths (d > 256 forces
        // power iteration); embed the plane in d = 300
        let mut rng = RngState::new(12);
        let n = 30;
        let d = 300;
        let mut flat = vec![0.0; n * d];
        let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.normal(), 0.3 * rng.normal()]).collect();
        for (i, c) in coords.iter().enumerate() {
            flat[i * d] = c[0];
            flat[i * d + 1] = c[1];
        }
        let step = Tensor::from_vec(vec![n, d], flat).unwrap();
        let proj = trajectory_projection(&[step]).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let orig = ((coords[i][0] - coords[j][0]).powi(2)
                    + (coords[i][1] - coords[j][1]).powi(2))
                .sqrt();
                let p = ((proj[i][0][0] - proj[j][0][0]).powi(2)
                    + (proj[i][0][1] - proj[j][0][1]).powi(2))
                .sqrt();
                assert!((orig - p).abs() < 1e-6, "pair ({i},{j}): {orig} vs {p}");
            }
        }
    }

    #[test]
    fn crossing_basics() {
        // two parallel polylines
        let a = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let b = vec![[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
        assert_eq!(crossing_count(&[a, b]).unwrap(), 0);
        // an X
        let c = vec![[0.0, 0.0], [1.0, 1.0]];
        let d = vec![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(crossing_count(&[c, d]).unwrap(), 1);
        // shared endpoint does not count
        let e = vec![[0.0, 0.0], [1.0, 1.0]];
        let f = vec![[1.0, 1.0], [2.0, 0.0]];
        assert_eq!(crossing_count(&[e, f]).unwrap(), 0);
        // degenerate segment does not count
        let g = vec![[0.5, 0.5], [0.5, 0.5]];
        let h = vec![[0.0, 0.5], [1.0, 0.5]];
        assert_eq!(crossing_count(&[g, h]).unwrap(), 0);
    }

    #[test]
    fn crossing_matches_brute_force_oracle() {
        let mut rng = RngState::new(13);
        for _ in 0..10 {
            let n_traj = 4;
            let steps = 5;
            let trajs: Vec<Vec<[f64; 2]>> = (0..n_traj)
                .map(|_| (0..steps).map(|_| [rng.normal(), rng.normal()]).collect())
                .collect();
            // plain all-pairs oracle without the bbox prefilter
            let mut want = 0;
            for a in 0..n_traj {
                for b in a + 1..n_traj {
                    for u in trajs[a].windows(2) {
                        for v in trajs[b].windows(2) {
                            if segments_cross(u[0], u[1], v[0], v[1]) {
                                want += 1;
                            }
                        }
                    }
                }
            }
            assert_eq!(crossing_count(&trajs).unwrap(), want);
        }
    }

    #[test]
    fn crossing_rejects_unequal_lengths() {
        let a = vec![[0.0, 0.0], [1.0, 0.0]];
        let b = vec![[0.0, 1.0]];
        assert!(crossing_count(&[a, b]).is_err());
    }
}
