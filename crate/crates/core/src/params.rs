//! Model parameters and the plain-text config format.
//!
//! A config file is UTF-8 text with one `key = value` per line and `#`
//! comments. Every key is optional; missing keys fall back to the defaults
//! below. Parsing is strict: unknown or duplicate keys and non-finite
//! numbers are rejected with the offending line number.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Han photoinhibition kinetics, reduced to the fast single-state form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HanParams {
    /// Repair rate of photoinhibited units, 1/s.
    pub kr: f64,
    /// Damage rate scale, dimensionless in the reduced rate expressions.
    pub kd: f64,
    /// Turnover time of the photosynthetic units, s.
    pub tau: f64,
    /// Effective cross section, m^2/(umol photons).
    pub sigma: f64,
    /// Photosynthetic rate constant, 1/s.
    pub k: f64,
    /// Respiration rate, 1/s.
    pub r: f64,
}

impl Default for HanParams {
    fn default() -> Self {
        Self {
            kr: 6.8e-3,
            kd: 2.99e-4,
            tau: 0.25,
            sigma: 0.047,
            k: 8.7e-6,
            r: 1.389e-7,
        }
    }
}

/// Steady shallow-water flow parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Volume flow rate per unit pond width, m^2/s.
    pub q0: f64,
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
    /// Topography elevation at x = 0, m.
    pub zb0: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { q0: 0.04, g: 9.81, zb0: -0.4 }
    }
}

/// Surface light and the areal biomass closure constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightParams {
    /// Surface light intensity, umol photons m^-2 s^-1.
    pub i_s: f64,
    /// Slope of the extinction coefficient in biomass concentration,
    /// m^2/gC. See the README note on this unit.
    pub alpha0: f64,
    /// Background extinction, 1/m.
    pub alpha1: f64,
    /// Fraction of surface light reaching the pond bottom in the
    /// fixed-volume regime, dimensionless in (0, 1].
    pub bottom_fraction: f64,
}

impl Default for LightParams {
    fn default() -> Self {
        Self { i_s: 2000.0, alpha0: 0.2, alpha1: 10.0, bottom_fraction: 0.01 }
    }
}

/// Grid resolution and problem size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    /// Pond length, m.
    pub length: f64,
    /// Grid spacing, m. Must tile `length` into a whole number of cells.
    pub dx: f64,
    /// Number of vertical layers.
    pub nz: usize,
    /// Number of Fourier sine modes describing the water height.
    pub modes: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self { length: 100.0, dx: 0.01, nz: 7, modes: 5 }
    }
}

impl Discretization {
    /// Number of grid cells; nodes are indexed 0..=nx().
    pub fn nx(&self) -> usize {
        (self.length / self.dx).round() as usize
    }

    /// Number of grid nodes, nx() + 1.
    pub fn nodes(&self) -> usize {
        self.nx() + 1
    }

    /// Coordinate of node i, m.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }
}

/// Full parameter bundle. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub han: HanParams,
    pub flow: FlowParams,
    pub light: LightParams,
    pub grid: Discretization,
    /// Mean water height, m. This is h(0) and the fixed-volume depth scale.
    pub a0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            han: HanParams::default(),
            flow: FlowParams::default(),
            light: LightParams::default(),
            grid: Discretization::default(),
            a0: 0.4,
        }
    }
}

/// Hydraulic head constant for a profile anchored at h(0) = h0:
/// M0 = g (h0 + zb0) + Q0^2 / (2 h0^2), m^2/s^2.
pub fn bind_m0(flow: &FlowParams, h0: f64) -> Result<f64> {
    if !(h0 > 0.0) || !h0.is_finite() {
        return Err(Error::Validation {
            field: "h0",
            message: format!("anchor height must be finite and positive, got {h0}"),
        });
    }
    Ok(flow.g * (h0 + flow.zb0) + flow.q0 * flow.q0 / (2.0 * h0 * h0))
}

impl ModelParams {
    /// Range-check every field. Called by the config loader; call it again
    /// after programmatic edits.
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation {
                    field,
                    message: format!("must be finite and positive, got {v}"),
                })
            }
        }

        positive("kr", self.han.kr)?;
        positive("kd", self.han.kd)?;
        positive("tau", self.han.tau)?;
        positive("sigma", self.han.sigma)?;
        positive("k", self.han.k)?;
        if !self.han.r.is_finite() || self.han.r < 0.0 {
            return Err(Error::Validation {
                field: "R",
                message: format!("must be finite and non-negative, got {}", self.han.r),
            });
        }
        positive("Q0", self.flow.q0)?;
        positive("g", self.flow.g)?;
        if !self.flow.zb0.is_finite() {
            return Err(Error::Validation {
                field: "zb0",
                message: "must be finite".into(),
            });
        }
        positive("Is", self.light.i_s)?;
        positive("alpha0", self.light.alpha0)?;
        if !self.light.alpha1.is_finite() || self.light.alpha1 < 0.0 {
            return Err(Error::Validation {
                field: "alpha1",
                message: format!("must be finite and non-negative, got {}", self.light.alpha1),
            });
        }
        let bf = self.light.bottom_fraction;
        if !bf.is_finite() || bf <= 0.0 || bf > 1.0 {
            return Err(Error::Validation {
                field: "bottom_fraction",
                message: format!("must lie in (0, 1], got {bf}"),
            });
        }
        positive("a0", self.a0)?;
        positive("L", self.grid.length)?;
        positive("dx", self.grid.dx)?;
        if self.grid.nz == 0 {
            return Err(Error::Validation { field: "Nz", message: "must be at least 1".into() });
        }
        let cells = self.grid.length / self.grid.dx;
        let nx = cells.round();
        if nx < 1.0 || (cells - nx).abs() > 1e-6 * nx.max(1.0) {
            return Err(Error::Validation {
                field: "dx",
                message: format!(
                    "grid spacing {} does not tile length {} into whole cells",
                    self.grid.dx, self.grid.length
                ),
            });
        }
        Ok(())
    }
}

/// Keys accepted in config files, in canonical serialization order.
const CONFIG_KEYS: [&str; 18] = [
    "kr", "kd", "tau", "sigma", "k", "R", "Q0", "g", "zb0", "Is", "alpha0", "alpha1",
    "bottom_fraction", "a0", "L", "dx", "Nz", "M",
];

/// Parse config text into a validated parameter bundle.
pub fn parse_config(text: &str) -> Result<ModelParams> {
    let mut params = ModelParams::default();
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::MalformedConfig {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::MalformedConfig {
                line,
                message: "empty key or value".into(),
            });
        }
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::MalformedConfig { line, message: format!("unknown key `{key}`") });
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::MalformedConfig { line, message: format!("duplicate key `{key}`") });
        }

        let fval = |field: &str| -> Result<f64> {
            let v: f64 = value.parse().map_err(|_| Error::MalformedConfig {
                line,
                message: format!("`{value}` is not a number for key `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedConfig {
                    line,
                    message: format!("`{field}` must be finite"),
                });
            }
            Ok(v)
        };
        let uval = |field: &str| -> Result<usize> {
            value.parse().map_err(|_| Error::MalformedConfig {
                line,
                message: format!("`{value}` is not a non-negative integer for key `{field}`"),
            })
        };

        match key {
            "kr" => params.han.kr = fval(key)?,
            "kd" => params.han.kd = fval(key)?,
            "tau" => params.han.tau = fval(key)?,
            "sigma" => params.han.sigma = fval(key)?,
            "k" => params.han.k = fval(key)?,
            "R" => params.han.r = fval(key)?,
            "Q0" => params.flow.q0 = fval(key)?,
            "g" => params.flow.g = fval(key)?,
            "zb0" => params.flow.zb0 = fval(key)?,
            "Is" => params.light.i_s = fval(key)?,
            "alpha0" => params.light.alpha0 = fval(key)?,
            "alpha1" => params.light.alpha1 = fval(key)?,
            "bottom_fraction" => params.light.bottom_fraction = fval(key)?,
            "a0" => params.a0 = fval(key)?,
            "L" => params.grid.length = fval(key)?,
            "dx" => params.grid.dx = fval(key)?,
            "Nz" => params.grid.nz = uval(key)?,
            "M" => params.grid.modes = uval(key)?,
            _ => unreachable!("key membership checked above"),
        }
    }

    params.validate()?;
    Ok(params)
}

/// Load and validate a config file.
pub fn load_config(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Serialize a bundle in canonical key order. `parse_config` on the output
/// reproduces the input bit for bit (floats use shortest round-trip form).
pub fn serialize_config(params: &ModelParams) -> String {
    let mut out = String::new();
    for key in CONFIG_KEYS {
        let value = match key {
            "kr" => params.han.kr.to_string(),
            "kd" => params.han.kd.to_string(),
            "tau" => params.han.tau.to_string(),
            "sigma" => params.han.sigma.to_string(),
            "k" => params.han.k.to_string(),
            "R" => params.han.r.to_string(),
            "Q0" => params.flow.q0.to_string(),
            "g" => params.flow.g.to_string(),
            "zb0" => params.flow.zb0.to_string(),
            "Is" => params.light.i_s.to_string(),
            "alpha0" => params.light.alpha0.to_string(),
            "alpha1" => params.light.alpha1.to_string(),
            "bottom_fraction" => params.light.bottom_fraction.to_string(),
            "a0" => params.a0.to_string(),
            "L" => params.grid.length.to_string(),
            "dx" => params.grid.dx.to_string(),
            "Nz" => params.grid.nz.to_string(),
            "M" => params.grid.modes.to_string(),
            _ => unreachable!(),
        };
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_config_yields_defaults() {
        let p = parse_config("").unwrap();
        assert_eq!(p, ModelParams::default());
        assert_relative_eq!(p.han.kr, 6.8e-3);
        assert_relative_eq!(p.light.i_s, 2000.0);
        assert_eq!(p.grid.nz, 7);
        assert_eq!(p.grid.modes, 5);
        assert_eq!(p.grid.nx(), 10_000);
    }

    #[test]
    fn comments_and_overrides() {
        let text = "# pilot pond\nL = 10 # short raceway\nNz = 3\ntau = 0.3\n";
        let p = parse_config(text).unwrap();
        assert_relative_eq!(p.grid.length, 10.0);
        assert_eq!(p.grid.nz, 3);
        assert_relative_eq!(p.han.tau, 0.3);
        assert_relative_eq!(p.han.kd, 2.99e-4, max_relative = 1e-15);
    }

    #[test]
    fn negative_tau_is_rejected_by_name() {
        let err = parse_config("tau = -1\n").unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "tau"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = parse_config("kr = 1e-3\nwavelength = 5\n").unwrap_err();
        match err {
            Error::MalformedConfig { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("wavelength"));
            }
            other => panic!("expected malformed-config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_malformed() {
        let err = parse_config("L = 10\nL = 20\n").unwrap_err();
        assert!(matches!(err, Error::MalformedConfig { line: 2, .. }));
    }

    #[test]
    fn garbled_line_is_malformed() {
        let err = parse_config("kr 6.8e-3\n").unwrap_err();
        assert!(matches!(err, Error::MalformedConfig { line: 1, .. }));
    }

    #[test]
    fn dx_must_tile_length() {
        let err = parse_config("L = 1\ndx = 0.3\n").unwrap_err();
        assert!(matches!(err, Error::Validation { field: "dx", .. }));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let text = "kr = 7e-3\ntau = 0.251\nsigma = 0.0461\nL = 10\ndx = 0.02\nNz = 4\nM = 3\nzb0 = -0.37\n";
        let p = parse_config(text).unwrap();
        let q = parse_config(&serialize_config(&p)).unwrap();
        assert_eq!(p.han.kr.to_bits(), q.han.kr.to_bits());
        assert_eq!(p.han.tau.to_bits(), q.han.tau.to_bits());
        assert_eq!(p.han.sigma.to_bits(), q.han.sigma.to_bits());
        assert_eq!(p.flow.zb0.to_bits(), q.flow.zb0.to_bits());
        assert_eq!(p, q);
    }

    #[test]
    fn head_constant_at_default_anchor() {
        let flow = FlowParams::default();
        let m0 = bind_m0(&flow, 0.4).unwrap();
        assert_relative_eq!(m0, 0.005, max_relative = 1e-12);
    }

    #[test]
    fn head_constant_rejects_zero_anchor() {
        let flow = FlowParams::default();
        assert!(matches!(
            bind_m0(&flow, 0.0),
            Err(Error::Validation { field: "h0", .. })
        ));
    }

    #[test]
    fn head_constant_inverts_on_the_subcritical_branch() {
        // B(h) = g (h + zb0) + q0^2 / (2 h^2) is monotone increasing above the
        // critical depth (q0^2/g)^(1/3); bisecting B(h) = M0 there must return
        // the anchor height.
        let flow = FlowParams::default();
        let h0 = 0.4;
        let m0 = bind_m0(&flow, h0).unwrap();
        let h_crit = (flow.q0 * flow.q0 / flow.g).powf(1.0 / 3.0);
        let (mut lo, mut hi) = (h_crit, 10.0);
        let bernoulli = |h: f64| flow.g * (h + flow.zb0) + flow.q0 * flow.q0 / (2.0 * h * h);
        assert!(bernoulli(lo) < m0 && bernoulli(hi) > m0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bernoulli(mid) < m0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(0.5 * (lo + hi), h0, max_relative = 1e-12);
    }

    #[test]
    fn grid_nodes_and_coordinates() {
        let d = Discretization { length: 1.0, dx: 0.01, nz: 2, modes: 1 };
        assert_eq!(d.nx(), 100);
        assert_eq!(d.nodes(), 101);
        assert_relative_eq!(d.x(100), 1.0, max_relative = 1e-12);
    }
}
