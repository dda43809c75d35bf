//! Light climate and reduced Han photoinhibition kinetics.
//!
//! Light decays exponentially with depth below the free surface,
//! I(x, z) = Is exp(-eps (eta(x) - z)). Along the n-th layer trajectory the
//! submersion depth is (n - 1/2) h(x) / Nz, which gives the per-layer
//! intensity used everywhere in the hot loops.
//!
//! The Han model is reduced to one state C per layer, the fraction of
//! photosynthetic units not photoinhibited, with
//!
//! ```text
//! alpha(I) = kd tau (sigma I)^2 / (tau sigma I + 1) + kr      (relaxation)
//! beta(I)  = alpha(I) - kr                                     (forcing)
//! zeta(I)  = k sigma I / (tau sigma I + 1) - R                 (gross growth)
//! gamma(I) = zeta(I) + R                                       (light capture)
//! ```
//!
//! so C' = (-alpha C + beta) / u along a lap and the local specific growth
//! rate is mu = -gamma C + zeta.

use crate::error::{Error, Result};
use crate::field::LayerField;
use crate::params::{HanParams, LightParams};

/// Relaxation, forcing, light capture and gross growth rates at one
/// intensity, all 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
}

/// Intensity derivatives of the rates, 1/s per (umol m^-2 s^-1).
/// beta and gamma share the slopes of alpha and zeta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSlopes {
    pub dalpha: f64,
    pub dzeta: f64,
}

#[inline]
pub(crate) fn raw_rates(han: &HanParams, i: f64) -> Rates {
    let si = han.sigma * i;
    let denom = han.tau * si + 1.0;
    let beta = han.kd * han.tau * si * si / denom;
    let gamma = han.k * si / denom;
    Rates { alpha: beta + han.kr, beta, gamma, zeta: gamma - han.r }
}

#[inline]
pub(crate) fn raw_slopes(han: &HanParams, i: f64) -> RateSlopes {
    let si = han.sigma * i;
    let denom = han.tau * si + 1.0;
    RateSlopes {
        dalpha: han.kd * han.tau * han.sigma * si * (han.tau * si + 2.0) / (denom * denom),
        dzeta: han.k * han.sigma / (denom * denom),
    }
}

/// Han rates at intensity `i` (umol m^-2 s^-1, non-negative).
pub fn rates(han: &HanParams, i: f64) -> Result<Rates> {
    if !(i >= 0.0) {
        return Err(Error::Domain(format!("light intensity must be non-negative, got {i}")));
    }
    Ok(raw_rates(han, i))
}

/// Intensity derivatives of the Han rates.
pub fn rate_slopes(han: &HanParams, i: f64) -> Result<RateSlopes> {
    if !(i >= 0.0) {
        return Err(Error::Domain(format!("light intensity must be non-negative, got {i}")));
    }
    Ok(raw_slopes(han, i))
}

/// Local specific growth rate mu = -gamma(I) C + zeta(I), 1/s.
pub fn net_growth(han: &HanParams, i: f64, c: f64) -> f64 {
    let r = raw_rates(han, i);
    -r.gamma * c + r.zeta
}

/// Per-layer light intensities I_n(x_i) = Is exp(-eps (n - 1/2) h(x_i) / Nz),
/// one row per layer, top layer first.
pub fn light_field(i_s: f64, eps: f64, h: &[f64], nz: usize) -> LayerField {
    let nodes = h.len();
    let mut field = LayerField::zeros(nz, nodes);
    let inv_nz = 1.0 / nz as f64;
    for i in 0..nodes {
        // one exp per node: I_{n+1} = I_n * t with t the one-layer decay
        let t = (-eps * h[i] * inv_nz).exp();
        let mut v = i_s * t.sqrt();
        for n in 0..nz {
            field.set(n, i, v);
            v *= t;
        }
    }
    field
}

/// Light along advected trajectories: the submersion depth at x is the
/// start depth scaled by u(0)/u(x). Agrees with [`light_field`] because
/// u h is constant; kept as an independent formula for cross-validation.
pub fn light_field_advected(
    i_s: f64,
    eps: f64,
    u: &[f64],
    h0: f64,
    nz: usize,
) -> LayerField {
    let nodes = u.len();
    let u0 = u[0];
    let mut field = LayerField::zeros(nz, nodes);
    for n in 0..nz {
        let depth0 = (n as f64 + 0.5) / nz as f64 * h0;
        let row = field.row_mut(n);
        for i in 0..nodes {
            row[i] = i_s * (-eps * u0 / u[i] * depth0).exp();
        }
    }
    field
}

/// Fixed-volume extinction coefficient, 1/m: the depth a0 absorbs all but
/// `bottom_fraction` of the surface light, eps = ln(1/fraction) / a0.
pub fn extinction_fixed(light: &LightParams, a0: f64) -> Result<f64> {
    if !(a0 > 0.0) {
        return Err(Error::Validation {
            field: "a0",
            message: format!("depth must be positive, got {a0}"),
        });
    }
    Ok((1.0 / light.bottom_fraction).ln() / a0)
}

/// Net growth of the fully relaxed state at intensity `i`:
/// f(I) = zeta(I) - gamma(I) beta(I) / alpha(I). Its smallest positive root
/// is the compensation intensity.
fn equilibrium_growth(han: &HanParams, i: f64) -> f64 {
    let r = raw_rates(han, i);
    r.zeta - r.gamma * r.beta / r.alpha
}

/// Smallest positive intensity where equilibrium growth crosses zero,
/// found by a log-grid sign scan plus bisection. `upper` bounds the search,
/// typically 1000 Is.
pub fn compensation_intensity(han: &HanParams, upper: f64) -> Result<f64> {
    if !(upper > 0.0) {
        return Err(Error::Domain(format!("search bound must be positive, got {upper}")));
    }
    if han.r == 0.0 {
        // f(0) = 0 exactly: zero respiration compensates at darkness
        return Ok(0.0);
    }
    // f(0) = -R < 0; walk a geometric grid until the sign flips
    let lo0 = upper * 1e-16;
    let steps = 640;
    let ratio = (upper / lo0).powf(1.0 / steps as f64);
    let mut lo = 0.0;
    let mut hi = lo0;
    let mut bracketed = false;
    for _ in 0..=steps {
        if equilibrium_growth(han, hi) > 0.0 {
            bracketed = true;
            break;
        }
        lo = hi;
        hi *= ratio;
        if hi > upper {
            hi = upper;
        }
    }
    if !bracketed && equilibrium_growth(han, upper) <= 0.0 {
        return Err(Error::NoCompensation { upper });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = equilibrium_growth(han, mid);
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) < 1e-10 * mid && f.abs() < 1e-14 {
            break;
        }
    }
    Ok(mid)
}

/// Areal biomass closure in the variable-volume regime.
#[derive(Debug, Clone, Copy)]
pub struct ArealBiomass {
    /// Compensation intensity, umol m^-2 s^-1.
    pub i_comp: f64,
    /// Extinction coefficient chosen so the bottom sits at compensation
    /// light: eps = ln(Is / I_comp) / a0, 1/m.
    pub epsilon: f64,
    /// Biomass concentration X = (eps - alpha1) / alpha0, gC/m^3.
    pub concentration: f64,
    /// Standing crop per unit surface, X a0 = alpha2 - alpha3 a0, gC/m^2.
    pub areal: f64,
    /// ln(Is / I_comp) / alpha0, gC/m^2.
    pub alpha2: f64,
    /// alpha1 / alpha0, gC/m^3.
    pub alpha3: f64,
}

/// Evaluate the areal biomass closure at mean depth `a0`: the pond is
/// filled with as much biomass as keeps the bottom of the water column at
/// the compensation intensity.
pub fn areal_biomass(han: &HanParams, light: &LightParams, a0: f64) -> Result<ArealBiomass> {
    if !(a0 > 0.0) {
        return Err(Error::Validation {
            field: "a0",
            message: format!("depth must be positive, got {a0}"),
        });
    }
    let i_comp = compensation_intensity(han, light.i_s * 1e3)?;
    if i_comp >= light.i_s {
        return Err(Error::Domain(format!(
            "surface intensity {} is not above the compensation intensity {}",
            light.i_s, i_comp
        )));
    }
    let ln_ratio = (light.i_s / i_comp).ln();
    let alpha2 = ln_ratio / light.alpha0;
    let alpha3 = light.alpha1 / light.alpha0;
    let areal = alpha2 - alpha3 * a0;
    if areal <= 0.0 {
        return Err(Error::PondTooDeep { a0, value: areal });
    }
    let epsilon = ln_ratio / a0;
    let concentration = (epsilon - light.alpha1) / light.alpha0;
    Ok(ArealBiomass { i_comp, epsilon, concentration, areal, alpha2, alpha3 })
}
