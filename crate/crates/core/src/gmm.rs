//! Per-frame Gaussian mixtures fitted by EM, and the soft distance built on
//! their unnormalized kernel membership.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::WarpedClassSet;
use crate::seqmodel::{FrameModels, GestureModel, TrainingParams, REFERENCE_RULE};
use crate::util::{check_finite, mix_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    #[default]
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    /// Requested component count `G`; the fit uses `min(G, distinct points)`.
    pub components: usize,
    pub covariance: CovarianceKind,
    /// Independent k-means++ initialisations; the best final likelihood wins.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tolerance: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 3,
            covariance: CovarianceKind::Full,
            restarts: 1,
            max_iter: 200,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// A fitted mixture. Cholesky factors are cached for evaluation and rebuilt
/// on deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GmmRepr", into = "GmmRepr")]
pub struct GmmModel {
    seed: u64,
    requested_components: usize,
    components: Vec<GmmComponent>,
    dim: usize,
    // lower-triangular factors, row-major d*d each
    chol: Vec<Vec<f64>>,
    log_det: Vec<f64>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.requested_components == other.requested_components
            && self.components == other.components
    }
}

#[derive(Serialize, Deserialize)]
struct GmmRepr {
    seed: u64,
    requested_components: usize,
    components: Vec<GmmComponent>,
}

impl From<GmmModel> for GmmRepr {
    fn from(m: GmmModel) -> Self {
        Self {
            seed: m.seed,
            requested_components: m.requested_components,
            components: m.components,
        }
    }
}

impl TryFrom<GmmRepr> for GmmModel {
    type Error = Error;

    fn try_from(r: GmmRepr) -> Result<Self> {
        GmmModel::from_components(r.components, r.seed, r.requested_components)
    }
}

fn cholesky(cov: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let d = cov.len();
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let l = m.cholesky()?.unpack();
    let mut flat = vec![0.0; d * d];
    let mut log_det = 0.0;
    for i in 0..d {
        for j in 0..=i {
            flat[i * d + j] = l[(i, j)];
        }
        log_det += 2.0 * l[(i, i)].ln();
    }
    Some((flat, log_det))
}

/// Squared Mahalanobis distance through a lower Cholesky factor.
fn mahalanobis_sq(chol: &[f64], d: usize, x: &[f64], mean: &[f64]) -> f64 {
    let mut y = [0.0f64; 16];
    let mut heap;
    let y: &mut [f64] = if d <= 16 {
        &mut y[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    let mut acc = 0.0;
    for i in 0..d {
        let mut s = x[i] - mean[i];
        for j in 0..i {
            s -= chol[i * d + j] * y[j];
        }
        y[i] = s / chol[i * d + i];
        acc += y[i] * y[i];
    }
    acc
}

impl GmmModel {
    /// Builds a mixture from explicit parameters, validating weights and covariances.
    pub fn from_components(components: Vec<GmmComponent>, seed: u64, requested_components: usize) -> Result<Self> {
        let dim = components
            .first()
            .ok_or(Error::Empty("mixture has no components"))?
            .mean
            .len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be positive"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let mut chol = Vec::with_capacity(components.len());
        let mut log_det = Vec::with_capacity(components.len());
        for (k, c) in components.iter().enumerate() {
            if !(c.weight >= 0.0 && c.weight <= 1.0) || c.mean.len() != dim || !check_finite(&c.mean) {
                return Err(Error::invalid(format!("component {k}: invalid weight or mean")));
            }
            if c.covariance.len() != dim || c.covariance.iter().any(|r| r.len() != dim || !check_finite(r)) {
                return Err(Error::invalid(format!("component {k}: covariance must be {dim}x{dim}")));
            }
            for i in 0..dim {
                for j in 0..i {
                    if c.covariance[i][j] != c.covariance[j][i] {
                        return Err(Error::invalid(format!("component {k}: covariance is not symmetric")));
                    }
                }
            }
            let (l, ld) = cholesky(&c.covariance)
                .ok_or_else(|| Error::invalid(format!("component {k}: covariance is not positive-definite")))?;
            chol.push(l);
            log_det.push(ld);
        }
        Ok(Self {
            seed,
            requested_components,
            components,
            dim,
            chol,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// `sum_k w_k exp(-0.5 * (q - mu_k)^T Sigma_k^-1 (q - mu_k))`.
    ///
    /// The Gaussian normalisation constant is deliberately absent, so the
    /// value lies in `[0, 1]` and equals 1 at the mean of a single component.
    pub fn membership(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        Ok(self.membership_unchecked(q))
    }

    pub(crate) fn membership_unchecked(&self, q: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(&self.chol)
            .map(|(c, l)| c.weight * (-0.5 * mahalanobis_sq(l, self.dim, q, &c.mean)).exp())
            .sum()
    }

    /// `exp(-membership)`, in `[e^-1, 1]`.
    pub fn soft_distance(&self, q: &[f64]) -> Result<f64> {
        Ok((-self.membership(q)?).exp())
    }

    /// Observed-data log-likelihood under the normalised mixture density.
    pub fn log_likelihood<P: AsRef<[f64]>>(&self, points: &[P]) -> f64 {
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut logs = vec![0.0; self.components.len()];
        points
            .iter()
            .map(|p| {
                for (k, (c, l)) in self.components.iter().zip(&self.chol).enumerate() {
                    logs[k] = c.weight.ln()
                        - 0.5 * mahalanobis_sq(l, self.dim, p.as_ref(), &c.mean)
                        - 0.5 * self.log_det[k]
                        - self.dim as f64 * half_log_2pi;
                }
                log_sum_exp(&logs)
            })
            .sum()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A fit together with the log-likelihood recorded at every EM iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihoods: Vec<f64>,
}

pub fn fit_gmm<P: AsRef<[f64]>>(points: &[P], config: &GmmConfig, seed: u64) -> Result<GmmModel> {
    fit_gmm_traced(points, config, seed).map(|f| f.model)
}

/// EM with k-means++ initialisation; covariances get `eps * I` added after
/// every M-step, with `eps = max(1e-6 * mean feature variance, 1e-9)`.
pub fn fit_gmm_traced<P: AsRef<[f64]>>(points: &[P], config: &GmmConfig, seed: u64) -> Result<GmmFit> {
    let first = points.first().ok_or(Error::Empty("no points to fit a mixture on"))?;
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::invalid("points must have positive dimension"));
    }
    if config.components == 0 || config.restarts == 0 || config.max_iter == 0 {
        return Err(Error::invalid("components, restarts and max_iter must be positive"));
    }
    let mut data = Vec::with_capacity(points.len() * d);
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        if !check_finite(p) {
            return Err(Error::invalid("points must be finite"));
        }
        data.extend_from_slice(p);
    }
    let n = points.len();
    let g = config.components.min(distinct_count(&data, d));
    let eps = regularization(&data, n, d);

    let mut best: Option<GmmFit> = None;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, restart as u64));
        let fit = Em::new(&data, n, d, g, eps, config.covariance).run(&mut rng, config, seed)?;
        let better = match &best {
            None => true,
            Some(b) => fit.log_likelihoods.last() > b.log_likelihoods.last(),
        };
        if better {
            best = Some(GmmFit {
                model: GmmModel {
                    requested_components: config.components,
                    ..fit.model
                },
                log_likelihoods: fit.log_likelihoods,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

fn distinct_count(data: &[f64], d: usize) -> usize {
    let mut rows: Vec<Vec<u64>> = data
        .chunks_exact(d)
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn regularization(data: &[f64], n: usize, d: usize) -> f64 {
    let mut total_var = 0.0;
    for j in 0..d {
        let mean = data.iter().skip(j).step_by(d).sum::<f64>() / n as f64;
        total_var += data.iter().skip(j).step_by(d).map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    }
    (1e-6 * total_var / d as f64).max(1e-9)
}

struct Em<'a> {
    data: &'a [f64],
    n: usize,
    d: usize,
    g: usize,
    eps: f64,
    kind: CovarianceKind,
    resp: Vec<f64>,
}

impl<'a> Em<'a> {
    fn new(data: &'a [f64], n: usize, d: usize, g: usize, eps: f64, kind: CovarianceKind) -> Self {
        Self {
            data,
            n,
            d,
            g,
            eps,
            kind,
            resp: vec![0.0; n * g],
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn run(mut self, rng: &mut ChaCha8Rng, config: &GmmConfig, seed: u64) -> Result<GmmFit> {
        self.init_kmeans(rng);
        let mut model = self.m_step(seed)?;
        let mut previous: Option<GmmModel> = None;
        let mut trace: Vec<f64> = Vec::new();
        for _ in 0..config.max_iter {
            let ll = self.e_step(&model);
            if let (Some(&prev), Some(p)) = (trace.last(), previous.take()) {
                // the covariance ridge can make a step lose a little likelihood;
                // keep the better model and stop there
                if ll < prev {
                    model = p;
                    break;
                }
            }
            let converged = trace
                .last()
                .is_some_and(|&prev| (ll - prev) <= config.tolerance * prev.abs().max(1e-300));
            trace.push(ll);
            if converged {
                break;
            }
            previous = Some(model);
            model = self.m_step(seed)?;
        }
        Ok(GmmFit {
            model,
            log_likelihoods: trace,
        })
    }

    /// k-means++ seeding followed by a few Lloyd iterations; leaves hard
    /// assignments in `resp`.
    fn init_kmeans(&mut self, rng: &mut ChaCha8Rng) {
        let (n, d, g) = (self.n, self.d, self.g);
        let mut centers: Vec<Vec<f64>> = vec![self.point(rng.random_range(0..n)).to_vec()];
        let mut dist = vec![0.0; n];
        while centers.len() < g {
            for (i, slot) in dist.iter_mut().enumerate() {
                *slot = centers
                    .iter()
                    .map(|c| sq_dist(self.point(i), c))
                    .fold(f64::INFINITY, f64::min);
            }
            let total: f64 = dist.iter().sum();
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            if dist[chosen] == 0.0 {
                chosen = dist.iter().position(|&w| w > 0.0).expect("enough distinct points");
            }
            centers.push(self.point(chosen).to_vec());
        }
        let mut assign = vec![usize::MAX; n];
        for _ in 0..10 {
            let mut changed = false;
            for (i, a) in assign.iter_mut().enumerate() {
                let p = &self.data[i * d..(i + 1) * d];
                let best = (0..g)
                    .min_by(|&x, &y| sq_dist(p, &centers[x]).total_cmp(&sq_dist(p, &centers[y])))
                    .expect("g >= 1");
                if *a != best {
                    *a = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            for (k, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == k).collect();
                if members.is_empty() {
                    continue;
                }
                center.fill(0.0);
                for &i in &members {
                    for (c, v) in center.iter_mut().zip(&self.data[i * d..(i + 1) * d]) {
                        *c += v;
                    }
                }
                center.iter_mut().for_each(|c| *c /= members.len() as f64);
            }
        }
        self.resp.fill(0.0);
        for (i, &a) in assign.iter().enumerate() {
            self.resp[i * g + a] = 1.0;
        }
    }

    fn m_step(&self, seed: u64) -> Result<GmmModel> {
        let (n, d, g) = (self.n, self.d, self.g);
        let mut components = Vec::with_capacity(g);
        let mut weight_total = 0.0;
        for k in 0..g {
            let nk: f64 = (0..n).map(|i| self.resp[i * g + k]).sum();
            let mut mean = vec![0.0; d];
            let mut cov = vec![vec![0.0; d]; d];
            if nk > 0.0 {
                for i in 0..n {
                    let r = self.resp[i * g + k];
                    for (m, v) in mean.iter_mut().zip(self.point(i)) {
                        *m += r * v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= nk);
                for i in 0..n {
                    let r = self.resp[i * g + k];
                    if r == 0.0 {
                        continue;
                    }
                    let p = self.point(i);
                    for a in 0..d {
                        let da = p[a] - mean[a];
                        for b in 0..=a {
                            cov[a][b] += r * da * (p[b] - mean[b]);
                        }
                    }
                }
            } else {
                // dead component: park it on the global mean
                for i in 0..n {
                    for (m, v) in mean.iter_mut().zip(self.point(i)) {
                        *m += v / n as f64;
                    }
                }
            }
            for a in 0..d {
                for b in 0..=a {
                    let v = if nk > 0.0 { cov[a][b] / nk } else { 0.0 };
                    let v = match (self.kind, a == b) {
                        (_, true) => v + self.eps,
                        (CovarianceKind::Diagonal, false) => 0.0,
                        (CovarianceKind::Full, false) => v,
                    };
                    cov[a][b] = v;
                    cov[b][a] = v;
                }
            }
            weight_total += nk;
            components.push(GmmComponent {
                weight: nk,
                mean,
                covariance: cov,
            });
        }
        for c in &mut components {
            c.weight /= weight_total;
        }
        GmmModel::from_components(components, seed, g)
    }

    /// Fills `resp` with posteriors under `model` and returns the log-likelihood.
    fn e_step(&mut self, model: &GmmModel) -> f64 {
        let (n, d, g) = (self.n, self.d, self.g);
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut logs = vec![0.0; g];
        let mut total = 0.0;
        for i in 0..n {
            let p = &self.data[i * d..(i + 1) * d];
            for (k, slot) in logs.iter_mut().enumerate() {
                let c = &model.components[k];
                *slot = c.weight.ln()
                    - 0.5 * mahalanobis_sq(&model.chol[k], d, p, &c.mean)
                    - 0.5 * model.log_det[k]
                    - d as f64 * half_log_2pi;
            }
            let lse = log_sum_exp(&logs);
            total += lse;
            for k in 0..g {
                self.resp[i * g + k] = (logs[k] - lse).exp();
            }
        }
        total
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One mixture per reference frame, each fitted on the `N` warped frames at
/// that position. Frame `t` uses a seed derived from `seed` and `t`.
pub fn train_gmm_gesture_model(warped: &WarpedClassSet, config: &GmmConfig, seed: u64) -> Result<GestureModel> {
    let models = (0..warped.length())
        .map(|t| fit_gmm(&warped.column(t), config, mix_seed(seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    GestureModel::new(
        warped.class_name(),
        warped.reference_id(),
        warped.dim(),
        FrameModels::Gmm(models),
        TrainingParams {
            seed,
            reference_rule: REFERENCE_RULE.to_string(),
            sample_count: warped.warped().len(),
            gmm: Some(config.clone()),
            ape: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> GmmModel {
        GmmModel::from_components(
            vec![GmmComponent {
                weight: 1.0,
                mean,
                covariance: cov,
            }],
            0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn membership_at_mean_is_one() {
        let m = single(vec![1.0, 2.0], vec![vec![2.0, 0.3], vec![0.3, 1.0]]);
        assert_eq!(m.membership(&[1.0, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(m.soft_distance(&[1.0, 2.0]).unwrap(), (-1.0f64).exp());
    }

    #[test]
    fn unit_mahalanobis_ball() {
        let m = single(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_relative_eq!(m.membership(&[1.0, 1.0]).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn far_point_soft_distance_tends_to_one() {
        let m = single(vec![0.0], vec![vec![1.0]]);
        assert_eq!(m.soft_distance(&[1e3]).unwrap(), 1.0);
        assert!(m.membership(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn identical_points_give_regularized_single_component() {
        let pts = vec![[2.0, -1.0]; 7];
        let m = fit_gmm(
            &pts,
            &GmmConfig {
                components: 1,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let c = &m.components()[0];
        assert_eq!(c.weight, 1.0);
        assert_eq!(c.mean, vec![2.0, -1.0]);
        assert_eq!(c.covariance, vec![vec![1e-9, 0.0], vec![0.0, 1e-9]]);
        // G is capped by the number of distinct points
        let m3 = fit_gmm(&pts, &GmmConfig::default(), 1).unwrap();
        assert_eq!(m3.components().len(), 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        let empty: Vec<[f64; 2]> = vec![];
        assert!(fit_gmm(&empty, &GmmConfig::default(), 0).is_err());
        let bad = vec![GmmComponent {
            weight: 0.5,
            mean: vec![0.0],
            covariance: vec![vec![1.0]],
        }];
        assert!(GmmModel::from_components(bad, 0, 1).is_err());
        let not_pd = vec![GmmComponent {
            weight: 1.0,
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        }];
        assert!(GmmModel::from_components(not_pd, 0, 1).is_err());
    }

    #[test]
    fn diagonal_covariance_has_zero_off_diagonal() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 2.0 * i as f64 + (i % 3) as f64]).collect();
        let cfg = GmmConfig {
            components: 1,
            covariance: CovarianceKind::Diagonal,
            ..Default::default()
        };
        let m = fit_gmm(&pts, &cfg, 3).unwrap();
        assert_eq!(m.components()[0].covariance[0][1], 0.0);
    }
}
