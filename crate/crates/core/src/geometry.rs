//! Planar convex hulls and point-in-polygon tests.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point2 = [f64; 2];

/// Boundary tolerance, in projected units, for containment tests.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HullShape {
    /// Three or more non-collinear vertices.
    Polygon,
    /// All points collinear: two distinct endpoints.
    Segment,
    /// All points identical.
    Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    /// Counter-clockwise, no collinear vertices, starting at the lowest-x
    /// (then lowest-y) point. Indices refer to the input slice.
    pub indices: Vec<usize>,
    pub shape: HullShape,
}

#[inline]
pub fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain.
pub fn convex_hull_2d(points: &[Point2]) -> Result<Hull> {
    if points.is_empty() {
        return Err(Error::Empty("no points to take the hull of"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() == 1 {
        return Ok(Hull {
            indices: order,
            shape: HullShape::Point,
        });
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // collinear input: the chains collapse onto the two extremes
        let (a, b) = (order[0], order[order.len() - 1]);
        return Ok(Hull {
            indices: vec![a, b],
            shape: HullShape::Segment,
        });
    }
    Ok(Hull {
        indices: hull,
        shape: HullShape::Polygon,
    })
}

fn dist_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Winding-number containment; points within [`BOUNDARY_TOLERANCE`] of the
/// boundary count as inside. One- and two-vertex "polygons" reduce to
/// distance-to-point and distance-to-segment tests.
pub fn contains(polygon: &[Point2], p: Point2) -> bool {
    match polygon.len() {
        0 => false,
        1 => dist_to_segment(p, polygon[0], polygon[0]) <= BOUNDARY_TOLERANCE,
        2 => dist_to_segment(p, polygon[0], polygon[1]) <= BOUNDARY_TOLERANCE,
        n => {
            let mut winding = 0i32;
            for i in 0..n {
                let (a, b) = (polygon[i], polygon[(i + 1) % n]);
                if dist_to_segment(p, a, b) <= BOUNDARY_TOLERANCE {
                    return true;
                }
                if a[1] <= p[1] {
                    if b[1] > p[1] && cross(a, b, p) > 0.0 {
                        winding += 1;
                    }
                } else if b[1] <= p[1] && cross(a, b, p) < 0.0 {
                    winding -= 1;
                }
            }
            winding != 0
        }
    }
}
