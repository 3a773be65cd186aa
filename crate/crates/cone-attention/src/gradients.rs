//! Analytic first derivatives of every logit and projection with respect
//! to the Euclidean pre-projection inputs, plus the finite-difference
//! harness that verifies them.
//!
//! There is no autodiff here: each kernel is a short closed form over the
//! plane reduction `(delta, hu, hv)`, so the chain rule is written out by
//! hand per active branch. Branch ties and the penumbral existence
//! boundary are genuine kinks; gradients there use a fixed subgradient
//! (hu branch first, then hv, then the middle expression) and the result
//! is flagged nonsmooth when the pair sits within 1e-9 of such a point.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{reduce_to_plane, HalfSpacePoint, PlaneReduction};
use crate::kernels::{
    penumbral_eval, umbral_eval, ConeBranch, KernelConfig, KernelKind, ProjectionKind,
};
use crate::matrix::Matrix;
use crate::projections::{pseudopolar, psi, xi};

/// Threshold below which a pair counts as sitting on a nonsmooth point.
pub const NONSMOOTH_EPS: f64 = 1e-9;

/// Gradients of a pairwise logit with respect to both arguments'
/// coordinates.
#[derive(Debug, Clone)]
pub struct PairGrad {
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
    /// True when the pair lies within [`NONSMOOTH_EPS`] of a branch tie or
    /// existence boundary; the returned gradient is the documented
    /// subgradient choice.
    pub nonsmooth: bool,
}

/// Plane-space derivative triple (d/d delta, d/d hu, d/d hv) of a sup2
/// height, for the active branch.
fn cone_plane_grad(
    red: PlaneReduction,
    config: &KernelConfig,
) -> Result<(f64, f64, f64, f64 /* margin */)> {
    let PlaneReduction { delta, hu, hv } = red;
    match config.kind {
        KernelKind::Umbral => {
            let eval = umbral_eval(delta, hu, hv, config.ball_radius);
            let g = match eval.branch {
                ConeBranch::Hu => (0.0, 1.0, 0.0),
                ConeBranch::Hv => (0.0, 0.0, 1.0),
                ConeBranch::Apex => (1.0 / (2.0 * config.ball_radius.sinh()), 0.5, 0.5),
                ConeBranch::Fallback => unreachable!("umbral has no fallback branch"),
            };
            Ok((g.0, g.1, g.2, eval.smoothness_margin))
        }
        KernelKind::Penumbral => {
            let h = config.light_height;
            for height in [hu, hv] {
                if height >= h {
                    return Err(Error::AboveLightSource { height, light_height: h });
                }
            }
            let eval = penumbral_eval(delta, hu, hv, h);
            let g = match eval.branch {
                ConeBranch::Hu => (0.0, 1.0, 0.0),
                ConeBranch::Hv => (0.0, 0.0, 1.0),
                ConeBranch::Apex => {
                    let cu = (h * h - hu * hu).sqrt();
                    let cv = (h * h - hv * hv).sqrt();
                    let m = (cu + cv - delta) / 2.0;
                    let apex = (h * h - m * m).sqrt();
                    (
                        m / (2.0 * apex),
                        m * hu / (2.0 * apex * cu),
                        m * hv / (2.0 * apex * cv),
                    )
                }
                ConeBranch::Fallback => {
                    let (lo, hi, hu_is_lo) = if hu <= hv { (hu, hv, true) } else { (hv, hu, false) };
                    let q = (delta * delta + lo * lo - hi * hi) / (2.0 * delta);
                    let radius = (q * q + hi * hi).sqrt();
                    let dq_ddelta = 0.5 - (lo * lo - hi * hi) / (2.0 * delta * delta);
                    let dr_ddelta = q * dq_ddelta / radius;
                    let dr_dlo = q * lo / (delta * radius);
                    let dr_dhi = hi * (1.0 - q / delta) / radius;
                    if hu_is_lo {
                        (dr_ddelta, dr_dlo, dr_dhi)
                    } else {
                        (dr_ddelta, dr_dhi, dr_dlo)
                    }
                }
            };
            Ok((g.0, g.1, g.2, eval.smoothness_margin))
        }
        other => Err(Error::InvalidConfig(format!(
            "cone gradient requires a cone kernel, got {}",
            other.name()
        ))),
    }
}

/// Lifts a plane-space derivative triple to gradients in full point
/// coordinates, scaled by `scale` (the -gamma or -beta of the logit).
fn lift_plane_grad(
    u: &HalfSpacePoint,
    v: &HalfSpacePoint,
    delta: f64,
    d_delta: f64,
    d_hu: f64,
    d_hv: f64,
    scale: f64,
    mut nonsmooth: bool,
) -> PairGrad {
    let d = u.dim();
    let mut grad_u = vec![0.0; d];
    let mut grad_v = vec![0.0; d];
    if d_delta != 0.0 {
        if delta < NONSMOOTH_EPS {
            // delta -> 0 with an active delta-dependent branch is a kink
            nonsmooth = true;
        } else {
            for i in 0..d - 1 {
                let dir = (u.horizontal()[i] - v.horizontal()[i]) / delta;
                grad_u[i] = scale * d_delta * dir;
                grad_v[i] = -scale * d_delta * dir;
            }
        }
    }
    grad_u[d - 1] = scale * d_hu;
    grad_v[d - 1] = scale * d_hv;
    PairGrad { grad_u, grad_v, nonsmooth }
}

/// Gradient of the cone logit `-gamma * sup2_height` with respect to the
/// half-space coordinates of both points.
pub fn cone_logit_grad(
    u: &HalfSpacePoint,
    v: &HalfSpacePoint,
    config: &KernelConfig,
) -> Result<PairGrad> {
    let red = reduce_to_plane(u, v)?;
    let (d_delta, d_hu, d_hv, margin) = cone_plane_grad(red, config)?;
    Ok(lift_plane_grad(
        u,
        v,
        red.delta,
        d_delta,
        d_hu,
        d_hv,
        -config.gamma,
        margin < NONSMOOTH_EPS,
    ))
}

/// Gradient of `-beta * d_halfspace(u, v) - c` in point coordinates.
pub fn distance_logit_grad_halfspace(
    u: &HalfSpacePoint,
    v: &HalfSpacePoint,
    beta: f64,
) -> Result<PairGrad> {
    let red = reduce_to_plane(u, v)?;
    let PlaneReduction { delta, hu, hv } = red;
    let sq = delta * delta + (hu - hv) * (hu - hv);
    let z = 1.0 + sq / (2.0 * hu * hv);
    let root = (z * z - 1.0).sqrt();
    if root < NONSMOOTH_EPS {
        // coincident points: the distance has a cone-shaped kink at zero
        let d = u.dim();
        return Ok(PairGrad { grad_u: vec![0.0; d], grad_v: vec![0.0; d], nonsmooth: true });
    }
    // dz/d delta = delta / (hu hv); dz/d hu has the quotient-rule tail
    let d_delta = delta / (hu * hv);
    let d_hu = (hu - hv) / (hu * hv) - sq / (2.0 * hu * hu * hv);
    let d_hv = (hv - hu) / (hu * hv) - sq / (2.0 * hv * hv * hu);
    let scale = -beta / root;
    Ok(lift_plane_grad(u, v, delta, d_delta, d_hu, d_hv, scale, false))
}

/// Gradient of `-gamma * |u - v|` on raw vectors.
pub fn laplacian_logit_grad(u: &[f64], v: &[f64], gamma: f64) -> Result<PairGrad> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let dist = u
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist < NONSMOOTH_EPS {
        return Ok(PairGrad {
            grad_u: vec![0.0; u.len()],
            grad_v: vec![0.0; u.len()],
            nonsmooth: true,
        });
    }
    let grad_u: Vec<f64> = u.iter().zip(v).map(|(a, b)| -gamma * (a - b) / dist).collect();
    let grad_v: Vec<f64> = grad_u.iter().map(|g| -g).collect();
    Ok(PairGrad { grad_u, grad_v, nonsmooth: false })
}

/// Gradient of `u . v / sqrt(d)`.
pub fn dot_logit_grad(u: &[f64], v: &[f64]) -> Result<PairGrad> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let scale = 1.0 / (u.len() as f64).sqrt();
    Ok(PairGrad {
        grad_u: v.iter().map(|c| c * scale).collect(),
        grad_v: u.iter().map(|c| c * scale).collect(),
        nonsmooth: false,
    })
}

fn ratio_series(t: f64) -> (f64, f64, f64, f64) {
    // a = t/tanh t, a'/t, c = sinh t / t, c'/t -- series below 1e-4, the
    // closed forms otherwise
    if t < 1e-4 {
        let t2 = t * t;
        (
            1.0 + t2 / 3.0,
            2.0 / 3.0 - 4.0 * t2 / 45.0,
            1.0 + t2 / 6.0,
            1.0 / 3.0 + t2 / 30.0,
        )
    } else {
        let sinh = t.sinh();
        let cosh = t.cosh();
        let a = t * cosh / sinh;
        let aprime_over_t = (cosh / sinh - t / (sinh * sinh)) / t;
        let c = sinh / t;
        let cprime_over_t = (t * cosh - sinh) / (t * t * t);
        (a, aprime_over_t, c, cprime_over_t)
    }
}

/// Jacobian of a Euclidean-to-half-space map at `x`, laid out with one row
/// per output coordinate (horizontal parts first, height last).
pub fn projection_jacobian(x: &[f64], map_kind: ProjectionKind, light_height: f64) -> Result<Matrix> {
    let d = x.len();
    if d == 0 {
        return Err(Error::EmptyInput("projection jacobian input"));
    }
    let mut jac = Matrix::zeros(d, d);
    match map_kind {
        ProjectionKind::Psi => {
            let f = x[d - 1].exp();
            if !f.is_finite() || f == 0.0 {
                return Err(Error::NumericRange {
                    reason: format!("psi jacobian: exp({}) out of range", x[d - 1]),
                });
            }
            for i in 0..d - 1 {
                jac.set(i, i, f);
                jac.set(i, d - 1, x[i] * f);
            }
            jac.set(d - 1, d - 1, f);
        }
        ProjectionKind::Xi => {
            let sig = 1.0 / (1.0 + (-x[d - 1]).exp());
            let s = light_height * sig;
            let sprime = light_height * sig * (1.0 - sig);
            for i in 0..d - 1 {
                jac.set(i, i, s);
                jac.set(i, d - 1, x[i] * sprime);
            }
            jac.set(d - 1, d - 1, sprime);
        }
        ProjectionKind::ExpOrigin => {
            let t = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            let v_d = x[d - 1];
            let (a, aprime_over_t, c, cprime_over_t) = ratio_series(t);
            let denom_h = a - v_d;
            let denom_d = t.cosh() - v_d * c;
            let height = 1.0 / denom_d;
            // dA/dv_j and dB/dv_j share the radial v_j factor
            let da_radial = aprime_over_t; // times v_j
            let db_radial = c - v_d * cprime_over_t; // times v_j
            let clamped = height > light_height * (1.0 - 1e-9);
            for i in 0..d - 1 {
                for j in 0..d {
                    let delta_ij = if i == j { 1.0 } else { 0.0 };
                    let da = da_radial * x[j] - if j == d - 1 { 1.0 } else { 0.0 };
                    jac.set(i, j, delta_ij / denom_h - x[i] * da / (denom_h * denom_h));
                }
            }
            for j in 0..d {
                if clamped {
                    jac.set(d - 1, j, 0.0);
                } else {
                    let db = db_radial * x[j] - if j == d - 1 { c } else { 0.0 };
                    jac.set(d - 1, j, -db / (denom_d * denom_d));
                }
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "projection jacobian supports psi/xi/exp_origin, got {other:?}"
            )));
        }
    }
    Ok(jac)
}

/// Jacobian of the pseudopolar map (unit-normalized direction), one row
/// per hyperboloid coordinate.
pub fn pseudopolar_jacobian(x: &[f64]) -> Result<Matrix> {
    let d = x.len();
    if d < 2 {
        return Err(Error::EmptyInput("pseudopolar jacobian needs >= 2 coordinates"));
    }
    let dir = &x[..d - 1];
    let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let s = x[d - 1].sinh();
    let c = x[d - 1].cosh();
    let mut jac = Matrix::zeros(d, d);
    for i in 0..d - 1 {
        let ui = dir[i] / norm;
        for j in 0..d - 1 {
            let delta_ij = if i == j { 1.0 } else { 0.0 };
            let uj = dir[j] / norm;
            jac.set(i, j, s * (delta_ij - ui * uj) / norm);
        }
        jac.set(i, d - 1, ui * c);
    }
    jac.set(d - 1, d - 1, s);
    Ok(jac)
}

/// `jac^T * point_grad`: pulls a gradient in point coordinates back to the
/// Euclidean inputs.
fn pull_back(jac: &Matrix, point_grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; jac.cols()];
    for (i, g) in point_grad.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        for (j, slot) in out.iter_mut().enumerate() {
            *slot += g * jac.get(i, j);
        }
    }
    out
}

/// Gradient of the configured logit with respect to the Euclidean
/// pre-projection inputs of both arguments (projection included by the
/// chain rule).
pub fn kernel_grad(x_q: &[f64], x_k: &[f64], config: &KernelConfig) -> Result<PairGrad> {
    config.validate()?;
    if x_q.len() != x_k.len() {
        return Err(Error::DimensionMismatch { expected: x_q.len(), got: x_k.len() });
    }
    match config.kind {
        KernelKind::Laplacian => laplacian_logit_grad(x_q, x_k, config.gamma),
        KernelKind::Dot => dot_logit_grad(x_q, x_k),
        KernelKind::DistHyperboloid => {
            let p = pseudopolar(x_q)?;
            let q = pseudopolar(x_k)?;
            let w = -crate::geometry::minkowski_inner(&p, &q)?;
            let root = (w * w - 1.0).sqrt();
            let d = x_q.len();
            if root < NONSMOOTH_EPS {
                return Ok(PairGrad {
                    grad_u: vec![0.0; d],
                    grad_v: vec![0.0; d],
                    nonsmooth: true,
                });
            }
            let scale = -config.beta / root;
            // dw/dp_i = -q_i spatially, +q_last on the last coordinate
            let dp: Vec<f64> = point_distance_direction(q.coords(), scale);
            let dq: Vec<f64> = point_distance_direction(p.coords(), scale);
            let jp = pseudopolar_jacobian(x_q)?;
            let jq = pseudopolar_jacobian(x_k)?;
            Ok(PairGrad {
                grad_u: pull_back(&jp, &dp),
                grad_v: pull_back(&jq, &dq),
                nonsmooth: false,
            })
        }
        KernelKind::Penumbral | KernelKind::Umbral | KernelKind::DistHalfspace => {
            let proj = config.resolved_projection();
            let (u, v) = (project_halfspace(x_q, proj, config)?, project_halfspace(x_k, proj, config)?);
            let point_grad = match config.kind {
                KernelKind::DistHalfspace => distance_logit_grad_halfspace(&u, &v, config.beta)?,
                _ => cone_logit_grad(&u, &v, config)?,
            };
            let ju = projection_jacobian(x_q, proj, config.light_height)?;
            let jv = projection_jacobian(x_k, proj, config.light_height)?;
            Ok(PairGrad {
                grad_u: pull_back(&ju, &point_grad.grad_u),
                grad_v: pull_back(&jv, &point_grad.grad_v),
                nonsmooth: point_grad.nonsmooth,
            })
        }
    }
}

fn point_distance_direction(other: &[f64], scale: f64) -> Vec<f64> {
    let n = other.len();
    let mut g = vec![0.0; n];
    for i in 0..n - 1 {
        g[i] = scale * -other[i];
    }
    g[n - 1] = scale * other[n - 1];
    g
}

fn project_halfspace(x: &[f64], proj: ProjectionKind, config: &KernelConfig) -> Result<HalfSpacePoint> {
    match proj {
        ProjectionKind::Psi => psi(x),
        ProjectionKind::Xi => xi(x, config.light_height),
        ProjectionKind::ExpOrigin => crate::projections::exp_origin_project(x, config.light_height),
        other => Err(Error::InvalidConfig(format!(
            "projection {other:?} not valid for kernel {}",
            config.kind.name()
        ))),
    }
}

/// Central-difference check of an analytic gradient. Returns the worst
/// per-coordinate error, relative to `max(1, |analytic| + |numeric|)`.
pub fn finite_diff_check<F>(f: F, point: &[f64], step: f64, analytic: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if analytic.len() != point.len() {
        return Err(Error::DimensionMismatch { expected: point.len(), got: analytic.len() });
    }
    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let plus = f(&probe)?;
        probe[i] = point[i] - step;
        let minus = f(&probe)?;
        probe[i] = point[i];
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (numeric - analytic[i]).abs() / (analytic[i].abs() + numeric.abs()).max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// How far the pair sits from the nearest gradient kink under `config`
/// (branch tie, existence boundary, coincident points). Infinite for the
/// dot kernel, which is smooth everywhere.
pub fn smoothness_margin(x_q: &[f64], x_k: &[f64], config: &KernelConfig) -> Result<f64> {
    match config.kind {
        KernelKind::Dot => Ok(f64::INFINITY),
        KernelKind::Laplacian => {
            let sq: f64 = x_q.iter().zip(x_k).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(sq.sqrt())
        }
        KernelKind::DistHyperboloid => {
            let p = pseudopolar(x_q)?;
            let q = pseudopolar(x_k)?;
            Ok(crate::geometry::hyperboloid_distance(&p, &q)?)
        }
        KernelKind::DistHalfspace => {
            let proj = config.resolved_projection();
            let u = project_halfspace(x_q, proj, config)?;
            let v = project_halfspace(x_k, proj, config)?;
            crate::geometry::halfspace_distance(&u, &v)
        }
        KernelKind::Penumbral | KernelKind::Umbral => {
            let proj = config.resolved_projection();
            let u = project_halfspace(x_q, proj, config)?;
            let v = project_halfspace(x_k, proj, config)?;
            let red = reduce_to_plane(&u, &v)?;
            let eval = match config.kind {
                KernelKind::Penumbral => {
                    for height in [red.hu, red.hv] {
                        if height >= config.light_height {
                            return Err(Error::AboveLightSource {
                                height,
                                light_height: config.light_height,
                            });
                        }
                    }
                    penumbral_eval(red.delta, red.hu, red.hv, config.light_height)
                }
                _ => umbral_eval(red.delta, red.hu, red.hv, config.ball_radius),
            };
            Ok(eval.smoothness_margin)
        }
    }
}

/// Report from a randomized gradient check run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub samples: usize,
    pub max_rel_err: f64,
}

/// Samples `samples` random pairs kept at least `1e-3` from gradient
/// kinks, compares `kernel_grad` against central differences with the
/// given step, and reports the worst relative error.
pub fn grad_check_random(
    config: &KernelConfig,
    dim: usize,
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    use rand::SeedableRng;
    config.validate()?;
    if dim < 2 {
        return Err(Error::InvalidConfig("gradient check needs dimension >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (x_q, x_k) = sample_smooth_pair(&mut rng, config, dim, 1e-3)?;
        let grads = kernel_grad(&x_q, &x_k, config)?;
        let joint: Vec<f64> = x_q.iter().chain(&x_k).copied().collect();
        let analytic: Vec<f64> = grads.grad_u.iter().chain(&grads.grad_v).copied().collect();
        let eval = |p: &[f64]| scalar_logit_euclidean(&p[..dim], &p[dim..], config);
        let err = finite_diff_check(eval, &joint, step, &analytic)?;
        worst = worst.max(err);
    }
    Ok(GradCheckReport { samples, max_rel_err: worst })
}

/// The configured logit straight from Euclidean inputs (projection
/// included); the scalar function the gradient checks differentiate.
pub fn scalar_logit_euclidean(x_q: &[f64], x_k: &[f64], config: &KernelConfig) -> Result<f64> {
    match config.kind {
        KernelKind::Laplacian => crate::kernels::laplacian_logit(x_q, x_k, config.gamma),
        KernelKind::Dot => crate::kernels::dot_logit(x_q, x_k),
        KernelKind::DistHyperboloid => {
            let p = pseudopolar(x_q)?;
            let q = pseudopolar(x_k)?;
            crate::kernels::distance_logit_hyperboloid(&p, &q, config.beta, config.c)
        }
        KernelKind::DistHalfspace => {
            let proj = config.resolved_projection();
            let u = project_halfspace(x_q, proj, config)?;
            let v = project_halfspace(x_k, proj, config)?;
            crate::kernels::distance_logit_halfspace(&u, &v, config.beta, config.c)
        }
        KernelKind::Penumbral | KernelKind::Umbral => {
            let proj = config.resolved_projection();
            let u = project_halfspace(x_q, proj, config)?;
            let v = project_halfspace(x_k, proj, config)?;
            crate::kernels::cone_logit(&u, &v, config)
        }
    }
}

fn sample_smooth_pair(
    rng: &mut ChaCha8Rng,
    config: &KernelConfig,
    dim: usize,
    min_margin: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    for _ in 0..10_000 {
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()
        };
        let x_q = sample(rng);
        let x_k = sample(rng);
        if config.kind == KernelKind::DistHyperboloid {
            // keep the direction part away from the degenerate origin
            let norm = |x: &[f64]| x[..dim - 1].iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm(&x_q) < 0.3 || norm(&x_k) < 0.3 {
                continue;
            }
        }
        if smoothness_margin(&x_q, &x_k, config)? >= min_margin {
            return Ok((x_q, x_k));
        }
    }
    Err(Error::OracleInconsistency(
        "could not sample a smooth point pair; margins too tight".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn finite_diff_exact_on_affine_and_quadratic() {
        let linear = |p: &[f64]| Ok(3.0 * p[0] - 2.0 * p[1] + 0.5);
        let err = finite_diff_check(linear, &[0.7, -0.3], 1e-6, &[3.0, -2.0]).unwrap();
        assert!(err <= 1e-10, "affine error {err}");

        let quadratic = |p: &[f64]| Ok(p[0] * p[0] + 2.0 * p[0] * p[1]);
        let err = finite_diff_check(quadratic, &[1.0, 2.0], 1e-6, &[6.0, 2.0]).unwrap();
        assert!(err <= 1e-8, "quadratic error {err}");
    }

    #[test]
    fn umbral_tie_uses_documented_subgradient() {
        let cfg = KernelConfig::new(KernelKind::Umbral);
        let u = HalfSpacePoint::new(vec![0.4], 0.8).unwrap();
        let g = cone_logit_grad(&u, &u, &cfg).unwrap();
        assert!(g.nonsmooth);
        assert_eq!(g.grad_u, vec![0.0, -cfg.gamma]);
        assert_eq!(g.grad_v, vec![0.0, 0.0]);
    }

    #[test]
    fn projection_jacobian_pins() {
        // psi at 0: identity on the diagonal
        let j = projection_jacobian(&[0.0, 0.0], ProjectionKind::Psi, 1.0).unwrap();
        assert_eq!(j.get(1, 1), 1.0);
        assert_eq!(j.get(0, 0), 1.0);

        // xi at x_d = 0, h = 1: d height / d x_d = sigmoid'(0) = 1/4
        let j = projection_jacobian(&[0.0, 0.0], ProjectionKind::Xi, 1.0).unwrap();
        assert_eq!(j.get(1, 1), 0.25);
    }

    #[test]
    fn projection_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            for kind in [ProjectionKind::Psi, ProjectionKind::Xi, ProjectionKind::ExpOrigin] {
                let jac = projection_jacobian(&x, kind, 2.5).unwrap();
                for out in 0..3 {
                    let f = |p: &[f64]| -> Result<f64> {
                        let point = match kind {
                            ProjectionKind::Psi => psi(p)?,
                            ProjectionKind::Xi => xi(p, 2.5)?,
                            _ => crate::projections::exp_origin_project(p, 2.5)?,
                        };
                        Ok(point.coords()[out])
                    };
                    let analytic: Vec<f64> = (0..3).map(|j| jac.get(out, j)).collect();
                    let err = finite_diff_check(f, &x, 1e-6, &analytic).unwrap();
                    assert!(err <= 1e-5, "{kind:?} output {out} err {err}");
                }
            }
        }
    }

    #[test]
    fn pseudopolar_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..50 {
            let mut x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            if x[..3].iter().map(|c| c * c).sum::<f64>().sqrt() < 0.3 {
                x[0] += 1.0;
            }
            let jac = pseudopolar_jacobian(&x).unwrap();
            for out in 0..4 {
                let f = |p: &[f64]| Ok(pseudopolar(p)?.coords()[out]);
                let analytic: Vec<f64> = (0..4).map(|j| jac.get(out, j)).collect();
                let err = finite_diff_check(f, &x, 1e-6, &analytic).unwrap();
                assert!(err <= 1e-5, "pseudopolar output {out} err {err}");
            }
        }
    }

    #[test]
    fn kernel_grads_match_finite_differences() {
        for kind in KernelKind::ALL {
            let cfg = KernelConfig::new(kind);
            let report = grad_check_random(&cfg, 4, 25, 1e-6, 71).unwrap();
            assert!(
                report.max_rel_err <= 1e-5,
                "{} grad check failed: {}",
                kind.name(),
                report.max_rel_err
            );
        }
    }

    #[test]
    fn kernel_grads_match_fd_on_override_projections() {
        let mut cfg = KernelConfig::new(KernelKind::Umbral);
        cfg.projection = ProjectionKind::Xi;
        let report = grad_check_random(&cfg, 4, 25, 1e-6, 73).unwrap();
        assert!(report.max_rel_err <= 1e-5, "umbral+xi: {}", report.max_rel_err);

        let mut cfg = KernelConfig::new(KernelKind::DistHalfspace);
        cfg.projection = ProjectionKind::Psi;
        let report = grad_check_random(&cfg, 4, 25, 1e-6, 79).unwrap();
        assert!(report.max_rel_err <= 1e-5, "dist+psi: {}", report.max_rel_err);

        let mut cfg = KernelConfig::new(KernelKind::Penumbral);
        cfg.projection = ProjectionKind::ExpOrigin;
        let report = grad_check_random(&cfg, 4, 25, 1e-6, 83).unwrap();
        assert!(report.max_rel_err <= 1e-5, "penumbral+exp_origin: {}", report.max_rel_err);
    }

    #[test]
    fn gradient_symmetry_under_argument_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for kind in KernelKind::ALL {
            let cfg = KernelConfig::new(kind);
            for _ in 0..200 {
                let (x_q, x_k) = match sample_smooth_pair(&mut rng, &cfg, 3, 1e-6) {
                    Ok(pair) => pair,
                    Err(_) => continue,
                };
                let ab = kernel_grad(&x_q, &x_k, &cfg).unwrap();
                let ba = kernel_grad(&x_k, &x_q, &cfg).unwrap();
                for (a, b) in ab.grad_u.iter().zip(&ba.grad_v) {
                    assert!((a - b).abs() <= 1e-12, "{} asymmetric: {a} vs {b}", kind.name());
                }
                for (a, b) in ab.grad_v.iter().zip(&ba.grad_u) {
                    assert!((a - b).abs() <= 1e-12, "{} asymmetric", kind.name());
                }
            }
        }
    }

    #[test]
    fn laplacian_gradient_magnitude_is_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..200 {
            let u: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = laplacian_logit_grad(&u, &v, 1.7).unwrap();
            if g.nonsmooth {
                continue;
            }
            let mag = g.grad_u.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((mag - 1.7).abs() <= 1e-12, "magnitude {mag}");
        }
    }

    #[test]
    fn nonsmooth_flagging_near_branch_ties() {
        let cfg = KernelConfig::new(KernelKind::Umbral);
        // deep containment: far from any tie
        let u = HalfSpacePoint::new(vec![0.0], 1.0).unwrap();
        let v = HalfSpacePoint::new(vec![0.001], 0.5).unwrap();
        assert!(!cone_logit_grad(&u, &v, &cfg).unwrap().nonsmooth);

        // heights engineered so the hu argument ties the middle expression
        let r = 0.1f64.sinh();
        let delta = 0.01;
        let hv = 1.0 - delta / r; // middle = (hu+hv)/2 + delta/(2r) = hu
        let v = HalfSpacePoint::new(vec![delta], hv).unwrap();
        assert!(cone_logit_grad(&u, &v, &cfg).unwrap().nonsmooth);
    }
}
