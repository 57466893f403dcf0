//! Pointwise projection onto the dual feasible set and soft thresholding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VecField;

/// Which pointwise norm the TV term uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvVariant {
    /// Euclidean norm of the pixel gradient.
    Iso,
    /// Sum of the absolute channel values.
    Aniso,
}

impl fmt::Display for TvVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TvVariant::Iso => "iso",
            TvVariant::Aniso => "aniso",
        })
    }
}

impl FromStr for TvVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iso" | "isotropic" => Ok(TvVariant::Iso),
            "aniso" | "anisotropic" => Ok(TvVariant::Aniso),
            other => Err(Error::invalid("tv", format!("unknown variant `{other}`"))),
        }
    }
}

fn require_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

#[inline]
pub(crate) fn scalar_clamp(x: f64, alpha: f64) -> f64 {
    x / f64::max(1.0, x.abs() / alpha)
}

#[inline]
pub(crate) fn pixel_project_iso(a: f64, b: f64, alpha: f64) -> (f64, f64) {
    let scale = f64::max(1.0, a.hypot(b) / alpha);
    (a / scale, b / scale)
}

#[inline]
pub(crate) fn scalar_shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn pixel_shrink_iso(a: f64, b: f64, tau: f64) -> (f64, f64) {
    let mag = a.hypot(b);
    if mag <= tau {
        (0.0, 0.0)
    } else {
        let s = 1.0 - tau / mag;
        (a * s, b * s)
    }
}

/// Projection onto `{|lambda| <= alpha}` per pixel (iso) or per channel
/// (aniso), in the `x / max(1, |x| / alpha)` form.
pub fn project_ball(lambda: &VecField, alpha: f64, variant: TvVariant) -> Result<VecField> {
    require_positive("alpha", alpha)?;
    Ok(project_ball_unchecked(lambda, alpha, variant))
}

pub(crate) fn project_ball_unchecked(
    lambda: &VecField,
    alpha: f64,
    variant: TvVariant,
) -> VecField {
    match variant {
        TvVariant::Iso => lambda.map_pixels(|a, b| pixel_project_iso(a, b, alpha)),
        TvVariant::Aniso => {
            lambda.map_pixels(|a, b| (scalar_clamp(a, alpha), scalar_clamp(b, alpha)))
        }
    }
}

/// Proximal map of `tau * ||.||_1` for the chosen pointwise norm.
pub fn soft_threshold(v: &VecField, tau: f64, variant: TvVariant) -> Result<VecField> {
    require_positive("tau", tau)?;
    Ok(soft_threshold_unchecked(v, tau, variant))
}

pub(crate) fn soft_threshold_unchecked(v: &VecField, tau: f64, variant: TvVariant) -> VecField {
    match variant {
        TvVariant::Iso => v.map_pixels(|a, b| pixel_shrink_iso(a, b, tau)),
        TvVariant::Aniso => v.map_pixels(|a, b| (scalar_shrink(a, tau), scalar_shrink(b, tau))),
    }
}

/// Norm of `v - P_alpha(v) - sigma * S_{alpha/sigma}(v / sigma)`, which the
/// Moreau decomposition makes zero.
pub fn moreau_check(v: &VecField, sigma: f64, alpha: f64, variant: TvVariant) -> Result<f64> {
    require_positive("sigma", sigma)?;
    require_positive("alpha", alpha)?;
    let proj = project_ball_unchecked(v, alpha, variant);
    let shrunk = soft_threshold_unchecked(&v.scaled(1.0 / sigma), alpha / sigma, variant);
    Ok(v.sub(&proj).lin_comb(1.0, &shrunk, -sigma).norm())
}

/// True when every pixel (iso) or channel (aniso) lies within
/// `alpha * (1 + slack)`.
pub fn is_feasible(lambda: &VecField, alpha: f64, variant: TvVariant, slack: f64) -> bool {
    let bound = alpha * (1.0 + slack);
    let pairs = lambda.chan1().iter().zip(lambda.chan2());
    match variant {
        TvVariant::Iso => pairs.into_iter().all(|(a, b)| a.hypot(*b) <= bound),
        TvVariant::Aniso => pairs
            .into_iter()
            .all(|(a, b)| a.abs() <= bound && b.abs() <= bound),
    }
}
