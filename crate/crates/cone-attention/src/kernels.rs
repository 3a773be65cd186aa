//! Closed-form similarity logits.
//!
//! The cone kernels score a pair by the Euclidean height of the root of
//! the lowest cone containing both points (their geometric lowest common
//! ancestor): logit = -gamma * height, so a deeper common ancestor means a
//! higher logit. Everything stays in the log domain; `exp` happens only
//! inside the softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    hyperboloid_distance, reduce_to_plane, HalfSpacePoint, HyperboloidPoint, PlaneReduction,
};
use crate::geometry::halfspace_distance;

/// Which similarity kernel scores a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Penumbral,
    Umbral,
    DistHalfspace,
    DistHyperboloid,
    Laplacian,
    Dot,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Penumbral => "penumbral",
            KernelKind::Umbral => "umbral",
            KernelKind::DistHalfspace => "dist_halfspace",
            KernelKind::DistHyperboloid => "dist_hyperboloid",
            KernelKind::Laplacian => "laplacian",
            KernelKind::Dot => "dot",
        }
    }

    pub const ALL: [KernelKind; 6] = [
        KernelKind::Penumbral,
        KernelKind::Umbral,
        KernelKind::DistHalfspace,
        KernelKind::DistHyperboloid,
        KernelKind::Laplacian,
        KernelKind::Dot,
    ];
}

/// How Euclidean inputs reach the model the kernel lives on. `Default`
/// resolves per kernel: xi for penumbral and half-space distance, psi for
/// umbral, pseudopolar for hyperboloid distance, raw vectors otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    #[default]
    Default,
    Psi,
    Xi,
    ExpOrigin,
    Pseudopolar,
}

/// Kernel choice plus every parameter the kernels take. Mirrors the CLI's
/// JSON config document field for field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(rename = "kernel")]
    pub kind: KernelKind,
    /// Softmax temperature gamma.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Penumbral light-source height h.
    #[serde(default = "default_light_height")]
    pub light_height: f64,
    /// Umbral occluder ball radius r.
    #[serde(default = "default_ball_radius")]
    pub ball_radius: f64,
    /// Distance-attention scale beta.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Distance-attention offset c.
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub projection: ProjectionKind,
    #[serde(default = "default_heads")]
    pub heads: usize,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_light_height() -> f64 {
    1.0
}
fn default_ball_radius() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    1.0
}
fn default_heads() -> usize {
    1
}

impl KernelConfig {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            gamma: default_gamma(),
            light_height: default_light_height(),
            ball_radius: default_ball_radius(),
            beta: default_beta(),
            c: 0.0,
            projection: ProjectionKind::Default,
            heads: default_heads(),
        }
    }

    /// Parses the JSON config document (same schema the CLI reads).
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.light_height > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "light_height must be > 0, got {}",
                self.light_height
            )));
        }
        if !(self.ball_radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ball_radius must be > 0, got {}",
                self.ball_radius
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.heads == 0 {
            return Err(Error::InvalidConfig("heads must be >= 1".into()));
        }
        match (self.kind, self.resolved_projection()) {
            (KernelKind::DistHyperboloid, ProjectionKind::Pseudopolar) => {}
            (KernelKind::DistHyperboloid, p) => {
                return Err(Error::InvalidConfig(format!(
                    "dist_hyperboloid requires the pseudopolar projection, got {p:?}"
                )));
            }
            (_, ProjectionKind::Pseudopolar) => {
                return Err(Error::InvalidConfig(
                    "pseudopolar projection only pairs with dist_hyperboloid".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// The projection actually applied, with `Default` resolved per kernel.
    pub fn resolved_projection(&self) -> ProjectionKind {
        match self.projection {
            ProjectionKind::Default => match self.kind {
                KernelKind::Penumbral | KernelKind::DistHalfspace => ProjectionKind::Xi,
                KernelKind::Umbral => ProjectionKind::Psi,
                KernelKind::DistHyperboloid => ProjectionKind::Pseudopolar,
                KernelKind::Laplacian | KernelKind::Dot => ProjectionKind::Default,
            },
            p => p,
        }
    }
}

/// Which argument of the penumbral/umbral max is active. Ties resolve by
/// fixed priority Hu, then Hv, then the apex/middle expression, so the
/// subgradient choice is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ConeBranch {
    Hu,
    Hv,
    Apex,
    Fallback,
}

pub(crate) struct ConeEval {
    pub height: f64,
    pub branch: ConeBranch,
    /// Smallest gap to an inactive max argument (or to the existence
    /// boundary for penumbral); used for nonsmoothness detection.
    pub smoothness_margin: f64,
}

fn max_with_priority(hu: f64, hv: f64, middle: f64) -> (f64, ConeBranch, f64) {
    // first argument wins ties
    let (val, branch) = if hu >= hv && hu >= middle {
        (hu, ConeBranch::Hu)
    } else if hv >= middle {
        (hv, ConeBranch::Hv)
    } else {
        (middle, ConeBranch::Apex)
    };
    let gap = match branch {
        ConeBranch::Hu => (hu - hv).abs().min((hu - middle).abs()),
        ConeBranch::Hv => (hv - hu).abs().min((hv - middle).abs()),
        _ => (middle - hu).abs().min((middle - hv).abs()),
    };
    (val, branch, gap)
}

fn oriented_exists(delta: f64, hu: f64, hv: f64, h: f64) -> bool {
    let c = (h * h - hu * hu).sqrt();
    (delta - c) * (delta - c) + hv * hv < h * h || delta <= c
}

/// Shared-cone existence predicate for the penumbral construction,
/// evaluated as the symmetrized disjunction so orientation cannot matter.
pub fn penumbral_exists(u: &HalfSpacePoint, v: &HalfSpacePoint, light_height: f64) -> Result<bool> {
    check_light(u, v, light_height)?;
    let PlaneReduction { delta, hu, hv } = reduce_to_plane(u, v)?;
    Ok(oriented_exists(delta, hu, hv, light_height) || oriented_exists(delta, hv, hu, light_height))
}

fn check_light(u: &HalfSpacePoint, v: &HalfSpacePoint, h: f64) -> Result<()> {
    if h <= 0.0 {
        return Err(Error::InvalidConfig(format!("light height must be > 0, got {h}")));
    }
    for p in [u, v] {
        if p.height() >= h {
            return Err(Error::AboveLightSource { height: p.height(), light_height: h });
        }
    }
    Ok(())
}

pub(crate) fn penumbral_eval(delta: f64, hu: f64, hv: f64, h: f64) -> ConeEval {
    let cu = (h * h - hu * hu).sqrt();
    let cv = (h * h - hv * hv).sqrt();
    let exists = oriented_exists(delta, hu, hv, h) || oriented_exists(delta, hv, hu, h);
    // distance to the existence boundary delta = cu + cv, in delta units
    let boundary_gap = (delta - (cu + cv)).abs();
    if exists {
        let half_chord = (cu + cv - delta) / 2.0;
        let apex = (h * h - half_chord * half_chord).sqrt();
        let (height, branch, gap) = max_with_priority(hu, hv, apex);
        ConeEval { height, branch, smoothness_margin: gap.min(boundary_gap) }
    } else {
        // height of the lowest light source admitting a shared cone: the
        // circumradius of the axis-centered semicircle through both points.
        // Evaluated with the heights in sorted order so the two argument
        // orders produce bit-identical values.
        assert!(delta > 0.0, "no-cone branch requires delta > 0");
        let (lo, hi) = if hu <= hv { (hu, hv) } else { (hv, hu) };
        let q = (delta * delta + lo * lo - hi * hi) / (2.0 * delta);
        let height = (q * q + hi * hi).sqrt();
        ConeEval { height, branch: ConeBranch::Fallback, smoothness_margin: boundary_gap }
    }
}

/// Height of the root of the lowest penumbral cone containing both points;
/// falls back to the lowest light source admitting such a cone when none
/// exists under height `light_height`. Continuous across that boundary,
/// where both branches equal `light_height`.
pub fn penumbral_height(u: &HalfSpacePoint, v: &HalfSpacePoint, light_height: f64) -> Result<f64> {
    check_light(u, v, light_height)?;
    let PlaneReduction { delta, hu, hv } = reduce_to_plane(u, v)?;
    Ok(penumbral_eval(delta, hu, hv, light_height).height)
}

pub(crate) fn umbral_eval(delta: f64, hu: f64, hv: f64, ball_radius: f64) -> ConeEval {
    let middle = delta / (2.0 * ball_radius.sinh()) + (hu + hv) / 2.0;
    let (height, branch, gap) = max_with_priority(hu, hv, middle);
    ConeEval { height, branch, smoothness_margin: gap }
}

/// Height of the root of the lowest umbral cone containing both points.
pub fn umbral_height(u: &HalfSpacePoint, v: &HalfSpacePoint, ball_radius: f64) -> Result<f64> {
    if ball_radius <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "ball radius must be > 0, got {ball_radius}"
        )));
    }
    let PlaneReduction { delta, hu, hv } = reduce_to_plane(u, v)?;
    Ok(umbral_eval(delta, hu, hv, ball_radius).height)
}

/// Cone-attention logit `-gamma * sup2_height(u, v)`.
pub fn cone_logit(u: &HalfSpacePoint, v: &HalfSpacePoint, config: &KernelConfig) -> Result<f64> {
    let height = match config.kind {
        KernelKind::Penumbral => penumbral_height(u, v, config.light_height)?,
        KernelKind::Umbral => umbral_height(u, v, config.ball_radius)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "cone_logit requires a cone kernel, got {}",
                other.name()
            )));
        }
    };
    Ok(-config.gamma * height)
}

/// Hyperbolic distance attention logit `-beta * d(u, v) - c` in the
/// half-space model.
pub fn distance_logit_halfspace(
    u: &HalfSpacePoint,
    v: &HalfSpacePoint,
    beta: f64,
    c: f64,
) -> Result<f64> {
    Ok(-beta * halfspace_distance(u, v)? - c)
}

/// Same, in the hyperboloid model.
pub fn distance_logit_hyperboloid(
    p: &HyperboloidPoint,
    q: &HyperboloidPoint,
    beta: f64,
    c: f64,
) -> Result<f64> {
    Ok(-beta * hyperboloid_distance(p, q)? - c)
}

/// Laplacian kernel logit `-gamma * |u - v|` on raw vectors.
pub fn laplacian_logit(u: &[f64], v: &[f64], gamma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let dist = u
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(-gamma * dist)
}

/// Scaled dot-product logit `u . v / sqrt(d)`.
pub fn dot_logit(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(dot / (u.len() as f64).sqrt())
}
