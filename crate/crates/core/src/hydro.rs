//! Steady shallow-water hydrodynamics of the raceway.
//!
//! The water height is parameterized as a truncated sine series
//!
//! ```text
//! h(x) = a0 + sum_{m=1..M} a_m sin(2 m pi x / L)
//! ```
//!
//! so the pond volume per unit width is a0 L for every choice of the wave
//! coefficients. For a prescribed discharge Q0 the depth-averaged velocity
//! is u = Q0 / h, and the bottom elevation follows from the hydraulic head
//! M0 = u^2/2 + g (h + zb) anchored at x = 0. The free surface is
//! eta = h + zb and the Froude number u / sqrt(g h) stays below 1 on the
//! subcritical branch this model lives on. Heights are derived from the
//! coefficients directly; nothing here root-solves for h.

use crate::error::{Error, Result};
use crate::field::LayerField;
use crate::params::{bind_m0, Discretization, FlowParams};

/// Hard lower bound on the water height, m.
pub const MIN_HEIGHT: f64 = 1e-3;

/// Subcriticality margin: profiles must keep Fr <= 1 - FROUDE_MARGIN.
pub const FROUDE_MARGIN: f64 = 0.02;

/// Water height coefficients: mean depth plus sine-mode amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierProfile {
    /// Mean water height a0, m.
    pub a0: f64,
    /// Amplitudes a_1..a_M, m. `a[m-1]` multiplies sin(2 m pi x / L).
    pub a: Vec<f64>,
}

impl FourierProfile {
    pub fn new(a0: f64, a: Vec<f64>) -> Self {
        Self { a0, a }
    }

    /// Flat profile of depth a0 with the given number of (zero) modes.
    pub fn flat(a0: f64, modes: usize) -> Self {
        Self { a0, a: vec![0.0; modes] }
    }

    pub fn modes(&self) -> usize {
        self.a.len()
    }

    /// Coefficients as one vector [a0, a1, .., aM].
    pub fn coeff_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.a.len() + 1);
        v.push(self.a0);
        v.extend_from_slice(&self.a);
        v
    }

    pub fn from_coeff_vector(v: &[f64]) -> Self {
        Self { a0: v[0], a: v[1..].to_vec() }
    }
}

/// Precomputed sine basis sin(2 m pi x_i / L) for m = 1..=modes on all
/// grid nodes. The series vanishes at both ends; the endpoint entries are
/// stored as exact zeros so h(0) = h(L) = a0 holds bit for bit.
#[derive(Debug, Clone)]
pub struct SineTable {
    modes: usize,
    nodes: usize,
    s: Vec<f64>,
}

impl SineTable {
    pub fn new(disc: &Discretization) -> Self {
        Self::with_modes(disc, disc.modes)
    }

    pub fn with_modes(disc: &Discretization, modes: usize) -> Self {
        let nx = disc.nx();
        let nodes = nx + 1;
        let mut s = vec![0.0; modes * nodes];
        for m in 1..=modes {
            let row = &mut s[(m - 1) * nodes..m * nodes];
            let scale = 2.0 * std::f64::consts::PI * m as f64 / nx as f64;
            for (i, v) in row.iter_mut().enumerate().take(nx).skip(1) {
                *v = (scale * i as f64).sin();
            }
            // row[0] and row[nx] stay exactly 0
        }
        Self { modes, nodes, s }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Basis values of mode m (1-based) on all nodes.
    #[inline]
    pub fn mode(&self, m: usize) -> &[f64] {
        debug_assert!((1..=self.modes).contains(&m));
        &self.s[(m - 1) * self.nodes..m * self.nodes]
    }
}

/// Water heights on all grid nodes. Fails on any non-positive height.
pub fn eval_height(
    profile: &FourierProfile,
    disc: &Discretization,
    table: &SineTable,
) -> Result<Vec<f64>> {
    if profile.modes() > table.modes() {
        return Err(Error::Validation {
            field: "M",
            message: format!(
                "profile has {} modes but the basis table only {}",
                profile.modes(),
                table.modes()
            ),
        });
    }
    let nodes = table.nodes();
    let mut h = vec![profile.a0; nodes];
    for (m, &amp) in profile.a.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        for (hi, si) in h.iter_mut().zip(table.mode(m + 1)) {
            *hi += amp * si;
        }
    }
    for (i, &hi) in h.iter().enumerate() {
        if !(hi > 0.0) {
            return Err(Error::InfeasibleProfile {
                node: i,
                x: disc.x(i),
                reason: format!("water height {hi} m is not positive"),
            });
        }
    }
    Ok(h)
}

/// Steady flow fields on the grid nodes.
#[derive(Debug, Clone)]
pub struct FlowField {
    /// Hydraulic head constant bound at x = 0, m^2/s^2.
    pub m0: f64,
    /// Water height, m.
    pub h: Vec<f64>,
    /// Depth-averaged velocity Q0 / h, m/s.
    pub u: Vec<f64>,
    /// Bottom elevation, m.
    pub zb: Vec<f64>,
    /// Free surface elevation h + zb, m.
    pub eta: Vec<f64>,
    /// Froude number u / sqrt(g h).
    pub fr: Vec<f64>,
}

impl FlowField {
    /// True when every node is strictly subcritical (Fr < 1).
    pub fn is_subcritical(&self) -> bool {
        self.fr.iter().all(|&f| f < 1.0)
    }

    /// Error if any node violates the height floor or the Froude margin.
    pub fn check_feasible(&self, disc: &Discretization) -> Result<()> {
        for (i, (&h, &fr)) in self.h.iter().zip(&self.fr).enumerate() {
            if h < MIN_HEIGHT {
                return Err(Error::InfeasibleProfile {
                    node: i,
                    x: disc.x(i),
                    reason: format!("water height {h} m is below the {MIN_HEIGHT} m floor"),
                });
            }
            if fr > 1.0 - FROUDE_MARGIN {
                return Err(Error::InfeasibleProfile {
                    node: i,
                    x: disc.x(i),
                    reason: format!(
                        "Froude number {fr} exceeds the subcritical margin {}",
                        1.0 - FROUDE_MARGIN
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Derive velocity, topography, surface and Froude fields from a height
/// profile. The head constant is bound at h(0) = a0.
pub fn flow_field(
    profile: &FourierProfile,
    flow: &FlowParams,
    disc: &Discretization,
    table: &SineTable,
) -> Result<FlowField> {
    let h = eval_height(profile, disc, table)?;
    let m0 = bind_m0(flow, profile.a0)?;
    let n = h.len();
    let mut u = vec![0.0; n];
    let mut zb = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut fr = vec![0.0; n];
    let inv_g = 1.0 / flow.g;
    for i in 0..n {
        let hi = h[i];
        u[i] = flow.q0 / hi;
        let kinetic = flow.q0 * flow.q0 / (2.0 * hi * hi);
        eta[i] = (m0 - kinetic) * inv_g;
        zb[i] = eta[i] - hi;
        fr[i] = u[i] / (flow.g * hi).sqrt();
    }
    Ok(FlowField { m0, h, u, zb, eta, fr })
}

/// Smallest height and Froude margins of a profile, without allocating the
/// full flow field. Both margins non-negative means feasible. Returns an
/// error only for non-positive heights.
pub fn feasibility_margins(
    profile: &FourierProfile,
    flow: &FlowParams,
    disc: &Discretization,
    table: &SineTable,
) -> Result<(f64, f64)> {
    let nodes = table.nodes();
    let mut height_margin = f64::INFINITY;
    let mut froude_margin = f64::INFINITY;
    for i in 0..nodes {
        let mut h = profile.a0;
        for (m, &amp) in profile.a.iter().enumerate() {
            h += amp * table.mode(m + 1)[i];
        }
        if !(h > 0.0) {
            return Err(Error::InfeasibleProfile {
                node: i,
                x: disc.x(i),
                reason: format!("water height {h} m is not positive"),
            });
        }
        let fr = flow.q0 / (h * (flow.g * h).sqrt());
        height_margin = height_margin.min(h - MIN_HEIGHT);
        froude_margin = froude_margin.min(1.0 - FROUDE_MARGIN - fr);
    }
    Ok((height_margin, froude_margin))
}

/// Lagrangian layer depths z_n(x) = eta(x) - (n - 1/2) h(x) / Nz for
/// n = 1..=nz, one row per layer.
pub fn layer_depth(eta: &[f64], h: &[f64], nz: usize) -> LayerField {
    let nodes = eta.len();
    let mut z = LayerField::zeros(nz, nodes);
    for n in 0..nz {
        let frac = (n as f64 + 0.5) / nz as f64;
        let row = z.row_mut(n);
        for i in 0..nodes {
            row[i] = eta[i] - frac * h[i];
        }
    }
    z
}

/// Layer depths in incompressibility form: each trajectory starts at
/// z_n(0) = eta(0) - (n - 1/2) h(0) / Nz and is advected so that
/// u(x) (eta(x) - z_n(x)) stays equal to u(0) (eta(0) - z_n(0)).
/// Equal to [`layer_depth`] up to rounding; kept for cross-validation.
pub fn layer_depth_advected(eta: &[f64], u: &[f64], h0: f64, nz: usize) -> LayerField {
    let nodes = eta.len();
    let u0 = u[0];
    let mut z = LayerField::zeros(nz, nodes);
    for n in 0..nz {
        let offset0 = (n as f64 + 0.5) / nz as f64 * h0;
        let row = z.row_mut(n);
        for i in 0..nodes {
            row[i] = eta[i] - u0 / u[i] * offset0;
        }
    }
    z
}

/// Per-mode partial derivatives of h and u at every node, for modes
/// m = 0..=M (row 0 is the mean-depth derivative).
#[derive(Debug, Clone)]
pub struct FlowPartials {
    /// dh/da_m; row 0 is identically 1.
    pub dh: LayerField,
    /// du/da_m = -(u/h) dh/da_m.
    pub du: LayerField,
}

pub fn flow_partials(h: &[f64], u: &[f64], table: &SineTable) -> FlowPartials {
    let nodes = table.nodes();
    assert_eq!(h.len(), nodes);
    let modes = table.modes();
    let mut dh = LayerField::zeros(modes + 1, nodes);
    let mut du = LayerField::zeros(modes + 1, nodes);
    for i in 0..nodes {
        dh.set(0, i, 1.0);
        du.set(0, i, -u[i] / h[i]);
    }
    for m in 1..=modes {
        let basis = table.mode(m);
        let dh_row = dh.row_mut(m);
        dh_row.copy_from_slice(basis);
        let du_row = du.row_mut(m);
        for i in 0..nodes {
            du_row[i] = -u[i] / h[i] * basis[i];
        }
    }
    FlowPartials { dh, du }
}

/// Trapezoid quadrature of the height field, m^2. Equals a0 L for any
/// sine-series profile.
pub fn volume(h: &[f64], dx: f64) -> f64 {
    let n = h.len();
    let interior: f64 = h[1..n - 1].iter().sum();
    dx * (0.5 * h[0] + interior + 0.5 * h[n - 1])
}
