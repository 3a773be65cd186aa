//! Poincaré half-space and hyperboloid primitives.
//!
//! Points of the half-space model carry a horizontal part (the first d-1
//! coordinates) and a strictly positive height (the last coordinate). All
//! cone kernels reduce a pair of points to the vertical 2-plane through
//! them, so the quantities that matter downstream are the horizontal gap
//! `delta` and the two heights.

use crate::error::{Error, Result};

/// A point of the Poincaré half-space model: horizontal part plus height.
///
/// Invariants enforced at construction: `height > 0` strictly (height 0 is
/// an ideal point) and every coordinate finite.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpacePoint {
    horizontal: Vec<f64>,
    height: f64,
}

impl HalfSpacePoint {
    pub fn new(horizontal: Vec<f64>, height: f64) -> Result<Self> {
        if !height.is_finite() || height <= 0.0 {
            return Err(Error::InvalidPoint {
                reason: format!("height must be finite and > 0, got {height}"),
            });
        }
        if horizontal.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint {
                reason: "non-finite horizontal coordinate".into(),
            });
        }
        Ok(Self { horizontal, height })
    }

    /// Builds a point from full coordinates; the last entry is the height.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput("half-space point needs >= 1 coordinate"));
        }
        let (head, tail) = coords.split_at(coords.len() - 1);
        Self::new(head.to_vec(), tail[0])
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Full ambient dimension d (horizontal length + 1).
    pub fn dim(&self) -> usize {
        self.horizontal.len() + 1
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.horizontal.clone();
        c.push(self.height);
        c
    }
}

/// A point on the Minkowski hyperboloid, `<x,x>_M = -1` with positive last
/// coordinate. Construction recomputes the last coordinate from the spatial
/// part so the constraint holds exactly; callers must still supply a
/// positive last coordinate (the lower sheet is rejected).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidPoint {
    coords: Vec<f64>,
}

impl HyperboloidPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::EmptyInput("hyperboloid point needs >= 2 coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint {
                reason: "non-finite hyperboloid coordinate".into(),
            });
        }
        let last = *coords.last().unwrap();
        if last <= 0.0 {
            return Err(Error::InvalidPoint {
                reason: format!("hyperboloid last coordinate must be > 0, got {last}"),
            });
        }
        let mut coords = coords;
        let n = coords.len();
        let spatial_sq: f64 = coords[..n - 1].iter().map(|c| c * c).sum();
        if !spatial_sq.is_finite() {
            return Err(Error::NumericRange {
                reason: "hyperboloid spatial norm overflowed".into(),
            });
        }
        coords[n - 1] = (1.0 + spatial_sq).sqrt();
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Manifold dimension d (one less than the ambient coordinate count).
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// acosh with the argument clamped to >= 1. The closed forms feeding this
/// are >= 1 in exact arithmetic; rounding can dip at most ~1e-12 below.
fn acosh_clamped(arg: f64) -> f64 {
    arg.max(1.0).acosh()
}

/// Hyperbolic distance in the half-space model:
/// `arcosh(1 + |u-v|^2 / (2 u_d v_d))`.
pub fn halfspace_distance(u: &HalfSpacePoint, v: &HalfSpacePoint) -> Result<f64> {
    check_dims(u.dim(), v.dim())?;
    let mut sq = (u.height - v.height).powi(2);
    for (a, b) in u.horizontal.iter().zip(&v.horizontal) {
        sq += (a - b) * (a - b);
    }
    Ok(acosh_clamped(1.0 + sq / (2.0 * u.height * v.height)))
}

/// Minkowski bilinear form: spatial dot product minus the product of the
/// last coordinates.
pub fn minkowski_inner(p: &HyperboloidPoint, q: &HyperboloidPoint) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let n = p.coords.len();
    let spatial: f64 = p.coords[..n - 1]
        .iter()
        .zip(&q.coords[..n - 1])
        .map(|(a, b)| a * b)
        .sum();
    Ok(spatial - p.coords[n - 1] * q.coords[n - 1])
}

/// Hyperboloid-model distance `arcosh(-<p,q>_M)`.
pub fn hyperboloid_distance(p: &HyperboloidPoint, q: &HyperboloidPoint) -> Result<f64> {
    let inner = minkowski_inner(p, q)?;
    if !inner.is_finite() {
        return Err(Error::NumericRange {
            reason: "Minkowski inner product overflowed".into(),
        });
    }
    Ok(acosh_clamped(-inner))
}

/// Isometric embedding of the half-space model into the hyperboloid, used
/// to cross-check the two distance formulas against each other.
pub fn halfspace_to_hyperboloid(u: &HalfSpacePoint) -> Result<HyperboloidPoint> {
    let y = u.height;
    let wsq: f64 = u.horizontal.iter().map(|c| c * c).sum();
    let s = wsq + y * y;
    let mut coords: Vec<f64> = u.horizontal.iter().map(|c| c / y).collect();
    coords.push((s - 1.0) / (2.0 * y));
    coords.push((s + 1.0) / (2.0 * y));
    HyperboloidPoint::new(coords)
}

const EXP_SERIES_THRESHOLD: f64 = 1e-6;

/// Exponential map at `x`. The components of `tangent` are taken in the
/// orthonormal frame at `x` (the coordinate frame scaled by the height), so
/// the geodesic distance from `x` to the result equals the Euclidean norm
/// of `tangent`. Below `|v| < 1e-6` the hyperbolic ratios switch to their
/// two-term series to avoid 0/0.
pub fn exp_map(x: &HalfSpacePoint, tangent: &[f64]) -> Result<HalfSpacePoint> {
    check_dims(x.dim(), tangent.len())?;
    if tangent.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidPoint {
            reason: "non-finite tangent coordinate".into(),
        });
    }
    let d = tangent.len();
    let v_d = tangent[d - 1];
    let t = tangent.iter().map(|c| c * c).sum::<f64>().sqrt();

    // horizontal denominator |v|/tanh|v| - v_d, height denominator
    // cosh|v| - v_d sinh|v|/|v|
    let (denom_h, denom_d) = if t < EXP_SERIES_THRESHOLD {
        let t2 = t * t;
        (1.0 + t2 / 3.0 - v_d, 1.0 + t2 / 2.0 - v_d * (1.0 + t2 / 6.0))
    } else {
        (t / t.tanh() - v_d, t.cosh() - v_d * t.sinh() / t)
    };

    let height = x.height / denom_d;
    if !height.is_finite() || height <= 0.0 {
        return Err(Error::NumericRange {
            reason: format!("exp map produced height {height} (tangent norm {t})"),
        });
    }
    let mut horizontal = Vec::with_capacity(d - 1);
    for (xi, vi) in x.horizontal.iter().zip(&tangent[..d - 1]) {
        let c = xi + x.height * vi / denom_h;
        if !c.is_finite() {
            return Err(Error::NumericRange {
                reason: format!("exp map horizontal overflow (tangent norm {t})"),
            });
        }
        horizontal.push(c);
    }
    HalfSpacePoint::new(horizontal, height)
}

/// Reduction of a pair of points to the vertical plane through them:
/// horizontal gap plus the two heights. Every cone kernel is a function of
/// this triple only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneReduction {
    pub delta: f64,
    pub hu: f64,
    pub hv: f64,
}

pub fn reduce_to_plane(u: &HalfSpacePoint, v: &HalfSpacePoint) -> Result<PlaneReduction> {
    check_dims(u.dim(), v.dim())?;
    let delta = u
        .horizontal
        .iter()
        .zip(&v.horizontal)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(PlaneReduction {
        delta,
        hu: u.height,
        hv: v.height,
    })
}

fn check_below_light(p: &HalfSpacePoint, light_height: f64) -> Result<()> {
    if p.height >= light_height {
        return Err(Error::AboveLightSource {
            height: p.height,
            light_height,
        });
    }
    Ok(())
}

/// Penumbral cone membership: does `child` lie in the cone of `parent`
/// under a horosphere light source at `light_height`?
///
/// The cone of a point is bounded by the two radius-h semicircle geodesics
/// through it, so membership is the two-center test: the child must lie
/// inside both circles. Closed inequalities make membership reflexive.
pub fn penumbral_member(
    parent: &HalfSpacePoint,
    child: &HalfSpacePoint,
    light_height: f64,
) -> Result<bool> {
    if light_height <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "light height must be > 0, got {light_height}"
        )));
    }
    check_below_light(parent, light_height)?;
    check_below_light(child, light_height)?;
    let PlaneReduction { delta, hu, hv } = reduce_to_plane(parent, child)?;
    let h2 = light_height * light_height;
    let c = (h2 - hu * hu).sqrt();
    let near = (delta - c) * (delta - c) + hv * hv;
    let far = (delta + c) * (delta + c) + hv * hv;
    Ok(near <= h2 && far <= h2)
}

/// Umbral cone membership: triangle test with slopes ±1/sinh(r).
pub fn umbral_member(
    parent: &HalfSpacePoint,
    child: &HalfSpacePoint,
    ball_radius: f64,
) -> Result<bool> {
    if ball_radius <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "ball radius must be > 0, got {ball_radius}"
        )));
    }
    let PlaneReduction { delta, hu, hv } = reduce_to_plane(parent, child)?;
    Ok(hv <= hu - delta / ball_radius.sinh())
}
