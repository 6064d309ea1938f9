//! Declarative model of rigid incomplete edge metrics
//! `g0 = dx^2 + h~ + x^2 kappa` on a neighborhood `(0,1] x B x F` of the
//! singular stratum: configuration types, the edge distance, the coordinate
//! form of the Laplacian, and scalar curvature.
//!
//! Conventions used throughout the crate:
//! * `f = dim F` (link), `b = dim B` (base/edge), `m = 1 + f + b`.
//! * The Laplacian is nonnegative (geometer's sign), so heat flow is
//!   `e^{-t Delta}` and the radial part reads `-d^2/dx^2 - (f/x) d/dx`.
//! * Supported geometries are the rigid products: an isolated cone (point
//!   base) or a flat-torus edge crossed with a cone over a round sphere or a
//!   circle; an explicit link spectrum may stand in for the link when only
//!   spectral data matters.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::Serialize;

/// Decay order of the admissible perturbation tensor on top of the rigid
/// model. Carried for feasibility reporting only; all numerics run on the
/// rigid metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbationDecay {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "x2")]
    QuadraticDecay,
    #[serde(rename = "x4")]
    QuarticDecay,
}

/// The link (F, kappa): the compact fiber whose cone forms the transverse
/// slice of the singular neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LinkSpec<T> {
    /// Round f-sphere of the given radius (metric radius, not curvature).
    RoundSphere { radius: T },
    /// Circle of the given circumference; requires fiber dimension 1.
    Circle { circumference: T },
    /// Spectrum given directly as distinct eigenvalue levels with
    /// multiplicities, plus the (constant) scalar curvature of the link.
    /// Only spectral operations are available for this variant.
    ExplicitSpectrum { levels: Vec<SpectralLevel<T>>, scal_kappa: T },
}

/// One distinct eigenvalue level of a link spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralLevel<T> {
    pub lambda: T,
    pub multiplicity: usize,
}

/// The base (B, h~): the singular stratum itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BaseSpec<T> {
    /// Isolated conical point, b = 0.
    Point,
    /// Flat torus with the given side lengths, b = len(lengths) >= 1.
    FlatTorus { lengths: Vec<T> },
}

/// Validated edge-metric configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeConfig<T> {
    f: usize,
    b: usize,
    pub link: LinkSpec<T>,
    pub base: BaseSpec<T>,
    pub perturbation_decay: PerturbationDecay,
}

impl<T: Scalar> LinkSpec<T> {
    /// Builds the circle link matching a 2-dimensional cone angle `theta`:
    /// the metric `c^2 dz^2` on the unit circle with `c = tan(theta)`, i.e.
    /// circumference `2 pi tan(theta)`. Requires `0 < theta < pi/2`.
    pub fn circle_from_cone_angle(theta: T) -> Result<Self> {
        let half_pi = T::lit(std::f64::consts::FRAC_PI_2);
        if !(theta > T::zero() && theta < half_pi) {
            return Err(Error::Domain(format!(
                "cone angle must lie in (0, pi/2), got {theta}"
            )));
        }
        let two_pi = T::lit(std::f64::consts::TAU);
        Ok(LinkSpec::Circle { circumference: two_pi * theta.tan() })
    }

    /// The cone angle equivalent to a circle link (None for other variants).
    pub fn cone_angle(&self) -> Option<T> {
        match self {
            LinkSpec::Circle { circumference } => {
                Some((*circumference / T::lit(std::f64::consts::TAU)).atan())
            }
            _ => None,
        }
    }

    /// Scalar curvature of (F, kappa); constant for every supported variant.
    pub fn scal_kappa(&self, f: usize) -> T {
        match self {
            LinkSpec::RoundSphere { radius } => {
                T::of_usize(f * f.saturating_sub(1)) / (*radius * *radius)
            }
            LinkSpec::Circle { .. } => T::zero(),
            LinkSpec::ExplicitSpectrum { scal_kappa, .. } => *scal_kappa,
        }
    }

    /// The link with its metric kappa replaced by `c^{-2} kappa`, which
    /// multiplies every eigenvalue (and the scalar curvature) by `c^2`.
    pub fn rescaled(&self, c: T) -> Self {
        match self {
            LinkSpec::RoundSphere { radius } => LinkSpec::RoundSphere { radius: *radius / c },
            LinkSpec::Circle { circumference } => {
                LinkSpec::Circle { circumference: *circumference / c }
            }
            LinkSpec::ExplicitSpectrum { levels, scal_kappa } => LinkSpec::ExplicitSpectrum {
                levels: levels
                    .iter()
                    .map(|l| SpectralLevel { lambda: l.lambda * c * c, multiplicity: l.multiplicity })
                    .collect(),
                scal_kappa: *scal_kappa * c * c,
            },
        }
    }
}

impl<T: Scalar> BaseSpec<T> {
    pub fn dim(&self) -> usize {
        match self {
            BaseSpec::Point => 0,
            BaseSpec::FlatTorus { lengths } => lengths.len(),
        }
    }

    /// Scalar curvature of (B, h~); zero for both supported variants.
    pub fn scal_base(&self) -> T {
        T::zero()
    }
}

impl<T: Scalar> EdgeConfig<T> {
    pub fn new(
        f: usize,
        link: LinkSpec<T>,
        base: BaseSpec<T>,
        perturbation_decay: PerturbationDecay,
    ) -> Result<Self> {
        if f < 1 {
            return Err(Error::InvalidInput("fiber dimension f must be >= 1".into()));
        }
        match &link {
            LinkSpec::RoundSphere { radius } => {
                if !(*radius > T::zero()) {
                    return Err(Error::InvalidInput(format!(
                        "sphere link radius must be positive, got {radius}"
                    )));
                }
            }
            LinkSpec::Circle { circumference } => {
                if f != 1 {
                    return Err(Error::InvalidInput(format!(
                        "circle links have fiber dimension 1, config says f = {f}"
                    )));
                }
                if !(*circumference > T::zero()) {
                    return Err(Error::InvalidInput(format!(
                        "circle circumference must be positive, got {circumference}"
                    )));
                }
            }
            LinkSpec::ExplicitSpectrum { levels, .. } => {
                if levels.is_empty() || levels[0].lambda != T::zero() {
                    return Err(Error::InvalidInput(
                        "explicit spectrum must start with eigenvalue 0".into(),
                    ));
                }
                if levels.iter().any(|l| l.multiplicity == 0) {
                    return Err(Error::InvalidInput(
                        "explicit spectrum multiplicities must be positive".into(),
                    ));
                }
                if levels.windows(2).any(|w| !(w[1].lambda > w[0].lambda)) {
                    return Err(Error::InvalidInput(
                        "explicit spectrum levels must strictly increase".into(),
                    ));
                }
            }
        }
        if let BaseSpec::FlatTorus { lengths } = &base {
            if lengths.is_empty() {
                return Err(Error::InvalidInput("flat torus base needs at least one side".into()));
            }
            if lengths.iter().any(|l| !(*l > T::zero())) {
                return Err(Error::InvalidInput("flat torus side lengths must be positive".into()));
            }
        }
        let b = base.dim();
        Ok(EdgeConfig { f, b, link, base, perturbation_decay })
    }

    /// Fiber dimension dim F.
    pub fn f(&self) -> usize {
        self.f
    }

    /// Base dimension dim B.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Total dimension m = 1 + f + b.
    pub fn m(&self) -> usize {
        1 + self.f + self.b
    }
}

/// A point of the singular neighborhood in coordinates (x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePoint<T> {
    /// Radial coordinate in (0, 1].
    pub x: T,
    /// Base coordinates, length b.
    pub y: Vec<T>,
    /// Link position.
    pub z: LinkPoint<T>,
}

/// Position on the link. `Trivial` marks link-constant data (no position
/// tracked); `Arc` is an arc-length coordinate on a circle link; `Unit` is a
/// unit vector in R^{f+1} for a round-sphere link.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkPoint<T> {
    Trivial,
    Arc(T),
    Unit(Vec<T>),
}

/// Geodesic distance between two link positions under the given link metric.
pub fn link_distance<T: Scalar>(link: &LinkSpec<T>, f: usize, z1: &LinkPoint<T>, z2: &LinkPoint<T>) -> Result<T> {
    match (z1, z2) {
        (LinkPoint::Trivial, LinkPoint::Trivial) => Ok(T::zero()),
        (LinkPoint::Arc(a1), LinkPoint::Arc(a2)) => match link {
            LinkSpec::Circle { circumference } => {
                let l = *circumference;
                let diff = (*a1 - *a2).abs() % l;
                Ok(diff.min(l - diff))
            }
            _ => Err(Error::UnsupportedGeometry(
                "arc-length link positions require a circle link".into(),
            )),
        },
        (LinkPoint::Unit(u1), LinkPoint::Unit(u2)) => match link {
            LinkSpec::RoundSphere { radius } => {
                if u1.len() != f + 1 || u2.len() != f + 1 {
                    return Err(Error::InvalidInput(format!(
                        "sphere link positions must be unit vectors in R^{}",
                        f + 1
                    )));
                }
                let dot: T = u1.iter().zip(u2).map(|(&a, &b)| a * b).sum();
                let clamped = dot.max(-T::one()).min(T::one());
                Ok(*radius * clamped.acos())
            }
            _ => Err(Error::UnsupportedGeometry(
                "unit-vector link positions require a round-sphere link".into(),
            )),
        },
        _ => Err(Error::InvalidInput("mismatched link position kinds".into())),
    }
}

/// The edge distance
/// `d_M(p, q) = sqrt(|x - x'|^2 + (x + x')^2 |z - z'|^2 + |y - y'|^2)`
/// with `|z - z'|` the geodesic distance on the link.
pub fn edge_distance<T: Scalar>(p: &EdgePoint<T>, q: &EdgePoint<T>, cfg: &EdgeConfig<T>) -> Result<T> {
    if p.y.len() != cfg.b() || q.y.len() != cfg.b() {
        return Err(Error::InvalidInput(format!(
            "base coordinate length must be b = {}, got {} and {}",
            cfg.b(),
            p.y.len(),
            q.y.len()
        )));
    }
    let dz = link_distance(&cfg.link, cfg.f(), &p.z, &q.z)?;
    Ok(edge_distance_parts(p.x - q.x, p.x + q.x, dz, base_distance_sq(&cfg.base, &p.y, &q.y)))
}

/// Distance on the base between coordinate vectors (squared). Flat-torus
/// directions wrap to the shorter arc.
pub fn base_distance_sq<T: Scalar>(base: &BaseSpec<T>, y1: &[T], y2: &[T]) -> T {
    match base {
        BaseSpec::Point => T::zero(),
        BaseSpec::FlatTorus { lengths } => lengths
            .iter()
            .zip(y1.iter().zip(y2))
            .map(|(&l, (&a, &b))| {
                let diff = (a - b).abs() % l;
                let d = diff.min(l - diff);
                d * d
            })
            .sum(),
    }
}

/// Assembles the edge distance from precomputed pieces; shared with the
/// pair-scan code in the norm machinery so every caller uses one formula.
#[inline]
pub fn edge_distance_parts<T: Scalar>(dx: T, x_sum: T, dz: T, dy_sq: T) -> T {
    (dx * dx + x_sum * x_sum * dz * dz + dy_sq).sqrt()
}

/// Scalar curvature of the rigid edge metric:
/// `scal(g0) = x^{-2} (scal(kappa) - f(f-1)) + scal(h~)`.
///
/// Bounded as x -> 0 exactly when the link curvature meets the obstruction
/// `scal(kappa) = f(f-1)`.
pub fn scal_rigid<T: Scalar>(cfg: &EdgeConfig<T>, x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::Domain(format!("scal_rigid needs x > 0, got {x}")));
    }
    let f = cfg.f();
    let defect = cfg.link.scal_kappa(f) - T::of_usize(f * (f - 1));
    Ok(defect / (x * x) + cfg.base.scal_base())
}

/// Coefficients of the Laplacian in edge coordinates:
/// `Delta u = -u_xx - (f/x) u_x + x^{-2} Delta_F u + Delta_B u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplacianCoefficients<T> {
    /// Coefficient of the second radial derivative (always -1).
    pub radial_second: T,
    /// Coefficient of the first radial derivative: -f/x.
    pub radial_first: T,
    /// Factor multiplying the link Laplacian: x^{-2}.
    pub link_factor: T,
    /// Factor multiplying the base Laplacian (always 1).
    pub base_factor: T,
}

pub fn laplacian_coefficients<T: Scalar>(cfg: &EdgeConfig<T>, x: T) -> Result<LaplacianCoefficients<T>> {
    if !(x > T::zero()) {
        return Err(Error::Domain(format!("laplacian_coefficients needs x > 0, got {x}")));
    }
    Ok(LaplacianCoefficients {
        radial_second: -T::one(),
        radial_first: -T::of_usize(cfg.f()) / x,
        link_factor: (x * x).recip(),
        base_factor: T::one(),
    })
}

/// Scalar curvature of the conformally changed metric `e^{2u} g` from
/// pointwise samples:
/// `e^{-2u} (scal0 + 2(m-1) Delta u - (m-2)(m-1) |grad u|^2)`,
/// with the nonnegative Laplacian. The transformed flow reads
/// `d/dt u = -(1/2) conformal_scal`.
pub fn conformal_scal<T: Scalar>(m: usize, u: T, grad_sq: T, lap_u: T, scal0: T) -> T {
    debug_assert!(u.is_finite() && grad_sq.is_finite() && lap_u.is_finite() && scal0.is_finite());
    let m1 = T::of_usize(m - 1);
    let m2 = T::of_usize(m - 2);
    let two = T::lit(2.0);
    (-two * u).exp() * (scal0 + two * m1 * lap_u - m2 * m1 * grad_sq)
}
