//! Approximate convex polytope ensembles: a class is modelled by the convex
//! hulls of `F` random 2-D projections of its points, each optionally grown
//! or shrunk around the projected class center by a parameter `phi`.
//! Membership is the fraction of projections whose polygon contains the
//! projected query.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::align::WarpedClassSet;
use crate::geometry::{contains, convex_hull_2d, HullShape, Point2};
use crate::seqmodel::{FrameModels, GestureModel, TrainingParams, REFERENCE_RULE};
use crate::util::{check_finite, mix_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeConfig {
    /// Number of random projections `F`.
    pub projections: usize,
    /// Projection dimension `p`; only 2 is supported.
    pub projection_dim: usize,
    /// Expansion (`> 0`) or shrink (`< 0`) parameter; 0 keeps the raw hulls.
    pub phi: f64,
}

impl Default for ApeConfig {
    fn default() -> Self {
        Self {
            projections: 25,
            projection_dim: 2,
            phi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedHull {
    /// `2 x d`, row-major.
    projection: Vec<f64>,
    /// Counter-clockwise hull of the projected training points.
    vertices: Vec<Point2>,
    center: Point2,
    /// Convex polygon after displacing every vertex by its `omega`.
    expanded: Vec<Point2>,
    shape: HullShape,
}

impl ProjectedHull {
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn expanded_vertices(&self) -> &[Point2] {
        &self.expanded
    }

    pub fn shape(&self) -> HullShape {
        self.shape
    }

    pub fn project(&self, x: &[f64]) -> Point2 {
        project(&self.projection, x)
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        contains(&self.expanded, self.project(q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeModel {
    dim: usize,
    phi: f64,
    projection_dim: usize,
    seed: u64,
    hulls: Vec<ProjectedHull>,
}

fn project(rho: &[f64], x: &[f64]) -> Point2 {
    let d = x.len();
    let mut out = [0.0; 2];
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = rho[r * d..(r + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum();
    }
    out
}

fn norm2(v: Point2) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Radial displacement of every projected hull vertex.
///
/// Vertex `i` with original-space preimage `x_i` moves away from the projected
/// center by `omega_i = phi * (x_i - c)^T rho^T rho (x_i - c) / ||x_i - c||`.
/// Shrinking is clamped so no vertex crosses the center.
pub fn expand_hull(
    vertices: &[Point2],
    preimages: &[&[f64]],
    projected_center: Point2,
    projection: &[f64],
    center: &[f64],
    phi: f64,
) -> Result<Vec<Point2>> {
    if vertices.len() != preimages.len() {
        return Err(Error::invalid("every hull vertex needs its original-space preimage"));
    }
    let d = center.len();
    let mut out = Vec::with_capacity(vertices.len());
    for (&v, x) in vertices.iter().zip(preimages) {
        let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
        let norm = diff.iter().map(|a| a * a).sum::<f64>().sqrt();
        let radial = [v[0] - projected_center[0], v[1] - projected_center[1]];
        let radial_norm = norm2(radial);
        if norm == 0.0 || radial_norm == 0.0 {
            return Err(Error::invalid("hull vertex coincides with the center"));
        }
        if phi == 0.0 {
            out.push(v);
            continue;
        }
        // (x - c)^T rho^T rho (x - c), summed as ||rho (x - c)||^2
        let quad: f64 = (0..2)
            .map(|r| {
                let row = &projection[r * d..(r + 1) * d];
                row.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>().powi(2)
            })
            .sum();
        let omega = (phi * quad / norm).max(-radial_norm);
        out.push([
            v[0] + omega * radial[0] / radial_norm,
            v[1] + omega * radial[1] / radial_norm,
        ]);
    }
    Ok(out)
}

fn validate_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let d = points
        .first()
        .ok_or(Error::Empty("no points to fit an ensemble on"))?
        .as_ref()
        .len();
    if d == 0 {
        return Err(Error::invalid("points must have positive dimension"));
    }
    for p in points {
        if p.as_ref().len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.as_ref().len(),
            });
        }
        if !check_finite(p.as_ref()) {
            return Err(Error::invalid("points must be finite"));
        }
    }
    Ok(d)
}

/// Draws `F` standard-normal `2 x d` projections from `seed` and fits the ensemble.
pub fn fit_ape<P: AsRef<[f64]>>(points: &[P], config: &ApeConfig, seed: u64) -> Result<ApeModel> {
    let d = validate_points(points)?;
    if config.projection_dim != 2 {
        return Err(Error::invalid(format!(
            "projection dimension {} unsupported; only 2-D projections are implemented",
            config.projection_dim
        )));
    }
    if config.projections == 0 {
        return Err(Error::invalid("need at least one projection"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projections: Vec<Vec<f64>> = (0..config.projections)
        .map(|_| (0..2 * d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    fit_ape_with_projections(points, &projections, config.phi, seed)
}

/// Fits the ensemble on caller-supplied `2 x d` row-major projections.
pub fn fit_ape_with_projections<P: AsRef<[f64]>>(
    points: &[P],
    projections: &[Vec<f64>],
    phi: f64,
    seed: u64,
) -> Result<ApeModel> {
    let d = validate_points(points)?;
    if !phi.is_finite() {
        return Err(Error::invalid("phi must be finite"));
    }
    if projections.is_empty() {
        return Err(Error::invalid("need at least one projection"));
    }
    let n = points.len() as f64;
    let mut center = vec![0.0; d];
    for p in points {
        for (c, v) in center.iter_mut().zip(p.as_ref()) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= n);

    let mut hulls = Vec::with_capacity(projections.len());
    for rho in projections {
        if rho.len() != 2 * d || !check_finite(rho) {
            return Err(Error::invalid(format!("projection must be 2x{d} and finite")));
        }
        let projected: Vec<Point2> = points.iter().map(|p| project(rho, p.as_ref())).collect();
        let hull = convex_hull_2d(&projected)?;
        let vertices: Vec<Point2> = hull.indices.iter().map(|&i| projected[i]).collect();
        let projected_center = project(rho, &center);
        let expanded = match hull.shape {
            HullShape::Point => vertices.clone(),
            shape => {
                let preimages: Vec<&[f64]> = hull.indices.iter().map(|&i| points[i].as_ref()).collect();
                match expand_hull(&vertices, &preimages, projected_center, rho, &center, phi) {
                    Ok(moved) if shape == HullShape::Polygon => {
                        let h = convex_hull_2d(&moved)?;
                        h.indices.iter().map(|&i| moved[i]).collect()
                    }
                    Ok(moved) => moved,
                    // a projected endpoint on the center: nothing to displace
                    Err(_) => vertices.clone(),
                }
            }
        };
        hulls.push(ProjectedHull {
            projection: rho.clone(),
            vertices,
            center: projected_center,
            expanded,
            shape: hull.shape,
        });
    }
    Ok(ApeModel {
        dim: d,
        phi,
        projection_dim: 2,
        seed,
        hulls,
    })
}

impl ApeModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection_dim(&self) -> usize {
        self.projection_dim
    }

    pub fn hulls(&self) -> &[ProjectedHull] {
        &self.hulls
    }

    /// Fraction of projections whose expanded polygon contains `q`.
    pub fn membership(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        Ok(self.membership_unchecked(q))
    }

    pub(crate) fn membership_unchecked(&self, q: &[f64]) -> f64 {
        let inside = self.hulls.iter().filter(|h| h.contains(q)).count();
        inside as f64 / self.hulls.len() as f64
    }

    /// `exp(-membership)`, in `[e^-1, 1]`.
    pub fn soft_distance(&self, q: &[f64]) -> Result<f64> {
        Ok((-self.membership(q)?).exp())
    }
}

/// One ensemble per reference frame, fitted on the warped frames at that
/// position; frame `t` draws its projections from a seed derived from `seed` and `t`.
pub fn train_ape_gesture_model(warped: &WarpedClassSet, config: &ApeConfig, seed: u64) -> Result<GestureModel> {
    let models = (0..warped.length())
        .map(|t| fit_ape(&warped.column(t), config, mix_seed(seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    GestureModel::new(
        warped.class_name(),
        warped.reference_id(),
        warped.dim(),
        FrameModels::Ape(models),
        TrainingParams {
            seed,
            reference_rule: REFERENCE_RULE.to_string(),
            sample_count: warped.warped().len(),
            gmm: None,
            ape: Some(config.clone()),
        },
    )
}
