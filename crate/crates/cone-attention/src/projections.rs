//! Maps from Euclidean parameter space onto the hyperbolic models, plus
//! Klein conversions and the Einstein midpoint.
//!
//! The half-space maps share the family `(x_{:-1} f(x_d), f(x_d))`: pick a
//! horosphere via `f` of the last coordinate, then place the remaining
//! coordinates on it. `psi` uses `f = exp` (unbounded height), `xi` uses a
//! scaled sigmoid so the image stays strictly below a light source at
//! height `h`.

use crate::error::{Error, Result};
use crate::geometry::{exp_map, HalfSpacePoint, HyperboloidPoint};

/// `psi(x) = (x_{:-1} e^{x_d}, e^{x_d})`.
pub fn psi(x: &[f64]) -> Result<HalfSpacePoint> {
    if x.is_empty() {
        return Err(Error::EmptyInput("psi input"));
    }
    let last = x[x.len() - 1];
    let f = last.exp();
    if !f.is_finite() || f == 0.0 {
        return Err(Error::NumericRange {
            reason: format!("psi: exp({last}) out of double range"),
        });
    }
    let horizontal: Vec<f64> = x[..x.len() - 1].iter().map(|c| c * f).collect();
    HalfSpacePoint::new(horizontal, f)
}

/// Smallest height `xi` will emit; the sigmoid is clamped here instead of
/// underflowing into subnormals.
pub const XI_HEIGHT_FLOOR: f64 = f64::MIN_POSITIVE;

/// `xi(x) = (x_{:-1} s, s)` with `s = h * sigmoid(x_d)`; the height lies
/// strictly in `(0, h)` for every finite input.
pub fn xi(x: &[f64], light_height: f64) -> Result<HalfSpacePoint> {
    if x.is_empty() {
        return Err(Error::EmptyInput("xi input"));
    }
    if light_height <= 0.0 || !light_height.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "light height must be finite and > 0, got {light_height}"
        )));
    }
    let last = x[x.len() - 1];
    let mut s = light_height / (1.0 + (-last).exp());
    if s < XI_HEIGHT_FLOOR {
        s = XI_HEIGHT_FLOOR;
    }
    // sigmoid rounds to 1 for large x_d; keep the image strictly below h
    if s >= light_height {
        s = light_height * (1.0 - f64::EPSILON);
    }
    let horizontal: Vec<f64> = x[..x.len() - 1].iter().map(|c| c * s).collect();
    HalfSpacePoint::new(horizontal, s)
}

/// Pseudopolar map onto the hyperboloid. The directional part is
/// normalized before scaling; the raw map lands on the hyperboloid only
/// for unit directions, and the `<p,p>_M = -1` constraint is what the
/// distance formula relies on.
pub fn pseudopolar(x: &[f64]) -> Result<HyperboloidPoint> {
    if x.len() < 2 {
        return Err(Error::EmptyInput("pseudopolar needs >= 2 coordinates"));
    }
    let last = x[x.len() - 1];
    let dir = &x[..x.len() - 1];
    let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut coords = Vec::with_capacity(x.len());
    if norm == 0.0 {
        if last != 0.0 {
            return Err(Error::DegenerateDirection);
        }
        coords.extend(std::iter::repeat(0.0).take(dir.len()));
    } else {
        let s = last.sinh();
        if !s.is_finite() {
            return Err(Error::NumericRange {
                reason: format!("pseudopolar: sinh({last}) overflowed"),
            });
        }
        coords.extend(dir.iter().map(|c| c / norm * s));
    }
    coords.push(last.cosh());
    HyperboloidPoint::new(coords)
}

/// Exponential map at the origin `O = (0,...,0,1)` followed by a clamp
/// keeping the image strictly below the light source.
pub fn exp_origin_project(v: &[f64], light_height: f64) -> Result<HalfSpacePoint> {
    if v.is_empty() {
        return Err(Error::EmptyInput("exp-origin input"));
    }
    let origin = HalfSpacePoint::new(vec![0.0; v.len() - 1], 1.0)?;
    let p = exp_map(&origin, v)?;
    let cap = light_height * (1.0 - 1e-9);
    if p.height() > cap {
        return HalfSpacePoint::new(p.horizontal().to_vec(), cap);
    }
    Ok(p)
}

/// Hyperboloid -> Klein: divide through by the last coordinate.
pub fn hyperboloid_to_klein(p: &HyperboloidPoint) -> Vec<f64> {
    let c = p.coords();
    let last = c[c.len() - 1];
    c[..c.len() - 1].iter().map(|x| x / last).collect()
}

/// Klein -> hyperboloid: `(x, 1) / sqrt(1 - |x|^2)`; requires `|x| < 1`.
pub fn klein_to_hyperboloid(x: &[f64]) -> Result<HyperboloidPoint> {
    let norm_sq: f64 = x.iter().map(|c| c * c).sum();
    if norm_sq >= 1.0 {
        return Err(Error::OutsideKleinBall { norm: norm_sq.sqrt() });
    }
    let scale = 1.0 / (1.0 - norm_sq).sqrt();
    let mut coords: Vec<f64> = x.iter().map(|c| c * scale).collect();
    coords.push(scale);
    HyperboloidPoint::new(coords)
}

/// Einstein midpoint on the Klein model: Lorentz-factor weighted average
/// of the points, with `gamma(v) = 1/sqrt(1 - |v|^2)`.
pub fn einstein_midpoint(weights: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("einstein midpoint needs >= 1 point"));
    }
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    let dim = points[0].len();
    let mut lorentz = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        let norm_sq: f64 = p.iter().map(|c| c * c).sum();
        if norm_sq >= 1.0 {
            return Err(Error::OutsideKleinBall { norm: norm_sq.sqrt() });
        }
        lorentz.push(1.0 / (1.0 - norm_sq).sqrt());
    }
    let total: f64 = weights.iter().zip(&lorentz).map(|(w, g)| w * g).sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::NumericRange {
            reason: format!("einstein midpoint weight normalizer {total}"),
        });
    }
    let mut mid = vec![0.0; dim];
    for ((w, g), p) in weights.iter().zip(&lorentz).zip(points) {
        let coeff = w * g / total;
        for (m, c) in mid.iter_mut().zip(p) {
            *m += coeff * c;
        }
    }
    Ok(mid)
}
