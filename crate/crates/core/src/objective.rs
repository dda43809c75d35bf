//! The two design objectives and their exact gradients.
//!
//! Fixed volume: the mean depth a0 is pinned, the design vector is the
//! sine amplitudes a_1..a_M, and the objective is the average growth rate
//! mu_bar (1/s) of the periodic regime. Variable volume: a0 joins the
//! design vector, the biomass standing crop follows the compensation
//! closure, and the objective is the areal productivity
//! Pi = mu_bar (alpha2 - alpha3 a0) (gC m^-2 s^-1).
//!
//! Gradients are assembled from the adjoint of the discretized dynamics,
//! so they match central finite differences of the discrete objective to
//! near round-off. All per-node sensitivities are linear in the basis
//! values sin(2 m pi x_i / L); the assembly therefore accumulates one
//! basis-independent weight per node and finishes with a dot product per
//! design coefficient.

use std::sync::Arc;

use crate::dynamics::{
    layer_rates, solve_adjoint, solve_periodic, step_maps, LayerRates, PeriodicSolution,
    Permutation, StepMaps,
};
use crate::error::{Error, Result};
use crate::field::LayerField;
use crate::hydro::{
    feasibility_margins, flow_field, layer_depth, FlowField, FourierProfile,
    SineTable,
};
use crate::params::ModelParams;
use crate::photic::{compensation_intensity, light_field, raw_rates, raw_slopes};

/// Which quantity is optimized and over which design vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// a0 frozen; maximize the average growth rate over a_1..a_M.
    Fixed,
    /// a0 free; maximize areal productivity over a_0..a_M.
    Variable,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Regime::Fixed),
            "variable" => Ok(Regime::Variable),
            other => Err(Error::Validation {
                field: "regime",
                message: format!("expected `fixed` or `variable`, got `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Fixed => "fixed",
            Regime::Variable => "variable",
        })
    }
}

/// Regime-specific light closure, precomputed once per context.
#[derive(Debug, Clone, Copy)]
enum LightClosure {
    /// Extinction from the frozen a0 and the bottom light fraction.
    Fixed { eps: f64 },
    /// Extinction and standing crop from the compensation intensity:
    /// eps(a0) = ln(Is/I_comp)/a0, crop alpha2 - alpha3 a0.
    Variable { ln_ratio: f64, alpha2: f64, alpha3: f64 },
}

/// Everything reusable across objective evaluations at different design
/// vectors: parameters, permutation, sine basis, light closure. Cheap to
/// clone; the sine table is shared.
#[derive(Debug, Clone)]
pub struct EvalContext {
    params: ModelParams,
    regime: Regime,
    perm: Permutation,
    table: Arc<SineTable>,
    closure: LightClosure,
}

/// Scalar results of one objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    /// The objective: mu_bar (fixed volume) or Pi (variable volume).
    pub value: f64,
    /// Average growth rate over one lap and all layers, 1/s.
    pub mu_bar: f64,
    /// Standing crop factor: 1 (fixed) or alpha2 - alpha3 a0 (variable).
    pub volume_factor: f64,
    /// Periodic boundary residual of the state solve.
    pub residual: f64,
    pub min_state: f64,
    pub max_state: f64,
}

/// Full diagnostic bundle for reporting and plotting.
#[derive(Debug, Clone)]
pub struct ObjectiveReport {
    pub evaluation: Evaluation,
    /// Objective gradient over the design vector.
    pub gradient: Vec<f64>,
    /// Per-layer contribution to mu_bar; sums to mu_bar.
    pub layer_mu: Vec<f64>,
    pub flow: FlowField,
    /// Mid-layer depths z_n(x), nz x nodes.
    pub layers: LayerField,
    /// Photoinhibition state C_n(x_i), nz x nodes.
    pub state: LayerField,
    pub feasible: bool,
    /// min over nodes of h - h_min, m.
    pub height_margin: f64,
    /// min over nodes of (1 - delta) - Fr.
    pub froude_margin: f64,
}

/// State shared between the value and gradient passes of one evaluation.
struct Forward {
    profile: FourierProfile,
    eps: f64,
    vfac: f64,
    flow: FlowField,
    light: LayerField,
    rates: LayerRates,
    steps: StepMaps,
    sol: PeriodicSolution,
    /// gamma(I_n(x_i)) / u(x_i) per node.
    gamma_over_u: LayerField,
    mu_bar: f64,
    layer_mu: Vec<f64>,
}

impl EvalContext {
    pub fn new(params: ModelParams, regime: Regime, perm: Permutation) -> Result<Self> {
        Self::with_table(params, regime, perm, None)
    }

    /// Like [`EvalContext::new`] but reusing a prebuilt sine table. The
    /// permutation search shares one table across all contexts.
    pub fn with_table(
        params: ModelParams,
        regime: Regime,
        perm: Permutation,
        table: Option<Arc<SineTable>>,
    ) -> Result<Self> {
        params.validate()?;
        if perm.nz() != params.grid.nz {
            return Err(Error::Validation {
                field: "Nz",
                message: format!(
                    "permutation acts on {} layers but the grid has {}",
                    perm.nz(),
                    params.grid.nz
                ),
            });
        }
        let table = match table {
            Some(t) => {
                if t.nodes() != params.grid.nodes() || t.modes() < params.grid.modes {
                    return Err(Error::Validation {
                        field: "M",
                        message: "shared sine table does not match the grid".into(),
                    });
                }
                t
            }
            None => Arc::new(SineTable::new(&params.grid)),
        };
        let closure = match regime {
            Regime::Fixed => LightClosure::Fixed {
                eps: crate::photic::extinction_fixed(&params.light, params.a0)?,
            },
            Regime::Variable => {
                let i_comp = compensation_intensity(&params.han, params.light.i_s * 1e3)?;
                if i_comp >= params.light.i_s {
                    return Err(Error::Domain(format!(
                        "surface intensity {} is not above the compensation intensity {}",
                        params.light.i_s, i_comp
                    )));
                }
                let ln_ratio = (params.light.i_s / i_comp).ln();
                LightClosure::Variable {
                    ln_ratio,
                    alpha2: ln_ratio / params.light.alpha0,
                    alpha3: params.light.alpha1 / params.light.alpha0,
                }
            }
        };
        Ok(Self { params, regime, perm, table, closure })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    pub fn table(&self) -> Arc<SineTable> {
        Arc::clone(&self.table)
    }

    /// Swap the permutation, keeping parameters and cached tables.
    pub fn with_perm(&self, perm: Permutation) -> Result<Self> {
        if perm.nz() != self.params.grid.nz {
            return Err(Error::Validation {
                field: "Nz",
                message: format!(
                    "permutation acts on {} layers but the grid has {}",
                    perm.nz(),
                    self.params.grid.nz
                ),
            });
        }
        let mut ctx = self.clone();
        ctx.perm = perm;
        Ok(ctx)
    }

    /// Design-vector length: M (fixed volume) or M + 1 (variable).
    pub fn dim(&self) -> usize {
        match self.regime {
            Regime::Fixed => self.params.grid.modes,
            Regime::Variable => self.params.grid.modes + 1,
        }
    }

    /// The conventional starting point: flat bottom, a0 from the
    /// parameters.
    pub fn initial_theta(&self) -> Vec<f64> {
        match self.regime {
            Regime::Fixed => vec![0.0; self.params.grid.modes],
            Regime::Variable => {
                let mut v = vec![0.0; self.params.grid.modes + 1];
                v[0] = self.params.a0;
                v
            }
        }
    }

    pub fn profile_of(&self, theta: &[f64]) -> FourierProfile {
        assert_eq!(theta.len(), self.dim(), "design vector length mismatch");
        match self.regime {
            Regime::Fixed => FourierProfile::new(self.params.a0, theta.to_vec()),
            Regime::Variable => FourierProfile::from_coeff_vector(theta),
        }
    }

    pub fn theta_of(&self, profile: &FourierProfile) -> Vec<f64> {
        match self.regime {
            Regime::Fixed => profile.a.clone(),
            Regime::Variable => profile.coeff_vector(),
        }
    }

    /// Extinction coefficient at mean depth a0, per the regime's closure.
    pub fn extinction(&self, a0: f64) -> Result<f64> {
        if !(a0 > 0.0) {
            return Err(Error::Validation {
                field: "a0",
                message: format!("depth must be positive, got {a0}"),
            });
        }
        Ok(match self.closure {
            LightClosure::Fixed { eps } => eps,
            LightClosure::Variable { ln_ratio, .. } => ln_ratio / a0,
        })
    }

    /// Standing crop factor multiplying mu_bar in the objective. Zero is
    /// allowed (the productivity root); negative crop is an error.
    pub fn volume_factor(&self, a0: f64) -> Result<f64> {
        match self.closure {
            LightClosure::Fixed { .. } => Ok(1.0),
            LightClosure::Variable { alpha2, alpha3, .. } => {
                let v = alpha2 - alpha3 * a0;
                if v < 0.0 {
                    return Err(Error::PondTooDeep { a0, value: v });
                }
                Ok(v)
            }
        }
    }

    /// Constraint margins (min height, Froude headroom) without solving
    /// the dynamics. Negative margins mean the profile is infeasible.
    pub fn margins(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let profile = self.profile_of(theta);
        feasibility_margins(&profile, &self.params.flow, &self.params.grid, &self.table)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let fwd = self.forward(theta)?;
        Ok(self.package(&fwd))
    }

    pub fn evaluate_with_gradient(&self, theta: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        let fwd = self.forward(theta)?;
        let grad = self.gradient(&fwd)?;
        Ok((self.package(&fwd), grad))
    }

    /// Average growth rate over `laps` consecutive laps starting from the
    /// periodic fixed point, applying the paddle wheel between laps.
    /// Test oracle: equals the single-lap mu_bar to round-off.
    pub fn multi_lap_mu_bar(&self, theta: &[f64], laps: usize) -> Result<f64> {
        assert!(laps >= 1);
        let fwd = self.forward(theta)?;
        let nz = self.params.grid.nz;
        let nx = self.params.grid.nx();
        let dx = self.params.grid.dx;
        let scale = dx / (self.params.grid.length * nz as f64);
        let r_resp = self.params.han.r;

        let mut current = fwd.sol.start.clone();
        let mut ends = vec![0.0; nz];
        let mut next = vec![0.0; nz];
        let mut total = 0.0;
        for _ in 0..laps {
            let mut lap_mu = 0.0;
            for n in 0..nz {
                let g = fwd.steps.g.row(n);
                let r = fwd.steps.r.row(n);
                let gu = fwd.gamma_over_u.row(n);
                let u = &fwd.flow.u;
                let mut c = current[n];
                let mut sum = 0.5 * (gu[0] * (1.0 - c) - r_resp / u[0]);
                for i in 0..nx {
                    c = g[i] * c + r[i];
                    let w = if i + 1 == nx { 0.5 } else { 1.0 };
                    sum += w * (gu[i + 1] * (1.0 - c) - r_resp / u[i + 1]);
                }
                ends[n] = c;
                lap_mu += scale * sum;
            }
            total += lap_mu;
            self.perm.permute_end_state(&ends, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        Ok(total / laps as f64)
    }

    /// Full diagnostics at one design vector: evaluation, gradient,
    /// per-layer breakdown, flow field, layer depths, state field,
    /// feasibility margins.
    pub fn report(&self, theta: &[f64]) -> Result<ObjectiveReport> {
        let fwd = self.forward(theta)?;
        let gradient = self.gradient(&fwd)?;
        let evaluation = self.package(&fwd);
        let (height_margin, froude_margin) = self.margins(theta)?;
        let layers =
            layer_depth(&fwd.flow.eta, &fwd.flow.h, self.params.grid.nz);
        Ok(ObjectiveReport {
            evaluation,
            gradient,
            layer_mu: fwd.layer_mu,
            flow: fwd.flow,
            layers,
            state: fwd.sol.field,
            feasible: height_margin >= 0.0 && froude_margin >= 0.0,
            height_margin,
            froude_margin,
        })
    }

    fn package(&self, fwd: &Forward) -> Evaluation {
        Evaluation {
            value: fwd.mu_bar * fwd.vfac,
            mu_bar: fwd.mu_bar,
            volume_factor: fwd.vfac,
            residual: fwd.sol.residual,
            min_state: fwd.sol.min_state,
            max_state: fwd.sol.max_state,
        }
    }

    fn forward(&self, theta: &[f64]) -> Result<Forward> {
        let grid = &self.params.grid;
        let nz = grid.nz;
        let nodes = grid.nodes();
        let nx = grid.nx();
        let dx = grid.dx;

        let profile = self.profile_of(theta);
        let flow = flow_field(&profile, &self.params.flow, grid, &self.table)?;
        flow.check_feasible(grid)?;
        let eps = self.extinction(profile.a0)?;
        let vfac = self.volume_factor(profile.a0)?;
        let light = light_field(self.params.light.i_s, eps, &flow.h, nz);
        let rates = layer_rates(&self.params.han, &light, &flow.u);
        let steps = step_maps(&rates, dx)?;
        let sol = solve_periodic(&self.perm, &steps)?;

        // mu_bar by composite trapezoid on the same nodes the scheme uses:
        // the discrete objective is exactly what the adjoint differentiates.
        let r_resp = self.params.han.r;
        let scale = dx / (grid.length * nz as f64);
        let mut gamma_over_u = LayerField::zeros(nz, nodes);
        let mut layer_mu = vec![0.0; nz];
        for n in 0..nz {
            let light_row = light.row(n);
            let c_row = sol.field.row(n);
            let gu_row = gamma_over_u.row_mut(n);
            let mut sum = 0.0;
            for i in 0..nodes {
                let gamma = raw_rates(&self.params.han, light_row[i]).gamma;
                let gu = gamma / flow.u[i];
                gu_row[i] = gu;
                let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
                sum += w * (gu * (1.0 - c_row[i]) - r_resp / flow.u[i]);
            }
            layer_mu[n] = scale * sum;
        }
        let mu_bar = layer_mu.iter().sum();

        Ok(Forward {
            profile,
            eps,
            vfac,
            flow,
            light,
            rates,
            steps,
            sol,
            gamma_over_u,
            mu_bar,
            layer_mu,
        })
    }

    /// Adjoint gradient of the discrete objective. One adjoint solve plus
    /// one fused accumulation pass; the per-mode results are dot products
    /// of a nodal weight vector with the sine basis rows.
    fn gradient(&self, fwd: &Forward) -> Result<Vec<f64>> {
        let grid = &self.params.grid;
        let nz = grid.nz;
        let nodes = grid.nodes();
        let nx = grid.nx();
        let dx = grid.dx;
        let modes = grid.modes;
        let han = &self.params.han;
        let variable = matches!(self.regime, Regime::Variable);
        let a0 = fwd.profile.a0;

        // Objective sensitivity to the state: the adjoint source.
        let mut phi = LayerField::zeros(nz, nodes);
        let base = -fwd.vfac * dx / (grid.length * nz as f64);
        for n in 0..nz {
            let gu = fwd.gamma_over_u.row(n);
            let phi_row = phi.row_mut(n);
            for i in 0..nodes {
                let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
                phi_row[i] = base * w * gu[i];
            }
        }
        let adj = solve_adjoint(&self.perm, &fwd.steps, &phi)?;

        // Nodal weights: grad_theta = sum_i wtot[i] * s_theta[i], with
        // s_theta the basis row (identically 1 for a0). wa0 collects the
        // extra route through d(eps)/d(a0) = -eps/a0 in the variable
        // regime; its ds value is also 1.
        let mut wtot = vec![0.0; nodes];
        let mut wa0 = vec![0.0; nodes];
        // per-layer scratch: full dh-sensitivities of p and q, plus the
        // shared light-only part used by the eps route
        let mut a1 = vec![0.0; nodes];
        let mut b1 = vec![0.0; nodes];
        let mut ax = vec![0.0; nodes];

        let half = 0.5 * dx;
        let half_sq = 0.5 * dx * dx;
        let direct_base = fwd.vfac * dx / (grid.length * nz as f64);
        let r_resp = han.r;

        for n in 0..nz {
            let kappa = (n as f64 + 0.5) / nz as f64;
            let light_row = fwd.light.row(n);
            let c_row = fwd.sol.field.row(n);
            let p_row = fwd.rates.p.row(n);
            let q_row = fwd.rates.q.row(n);
            let gu_row = fwd.gamma_over_u.row(n);
            let adj_row = adj.field.row(n);

            for i in 0..nodes {
                let intensity = light_row[i];
                let c = c_row[i];
                let u = fwd.flow.u[i];
                let h = fwd.flow.h[i];
                let inv_u = 1.0 / u;
                let sl = raw_slopes(han, intensity);
                // dI/dh at fixed eps and du/dh
                let ci = -intensity * kappa * fwd.eps;
                let cu = -u / h;
                // dp/dh and dq/dh split into light and velocity parts;
                // d(beta)/dI = d(alpha)/dI, so the light parts coincide
                let light_part = sl.dalpha * ci * inv_u;
                a1[i] = light_part - p_row[i] * cu * inv_u;
                b1[i] = light_part - q_row[i] * cu * inv_u;

                // direct objective term at fixed state
                let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
                let f = gu_row[i] * (1.0 - c) - r_resp * inv_u;
                let d_light = sl.dzeta * (1.0 - c) * ci * inv_u;
                let d_vel = -f * cu * inv_u;
                wtot[i] += direct_base * w * (d_light + d_vel);

                if variable {
                    let t = -h / a0;
                    ax[i] = light_part * t;
                    wa0[i] += direct_base * w * d_light * t;
                }
            }

            for i in 0..nx {
                let lam = adj_row[i + 1];
                let c = c_row[i];
                let e_lo = -half + half_sq * p_row[i + 1];
                let e_hi = -half + half_sq * p_row[i];
                let f_lo = half - half_sq * p_row[i + 1];
                wtot[i] += lam * (c * a1[i] * e_lo + b1[i] * f_lo);
                wtot[i + 1] +=
                    lam * (c * a1[i + 1] * e_hi + half * b1[i + 1] - half_sq * q_row[i] * a1[i + 1]);
                if variable {
                    wa0[i] += lam * ax[i] * (c * e_lo + f_lo);
                    wa0[i + 1] +=
                        lam * ax[i + 1] * (c * e_hi + half - half_sq * q_row[i]);
                }
            }
        }

        let mut grad = Vec::with_capacity(self.dim());
        if variable {
            let crop_slope = match self.closure {
                LightClosure::Variable { alpha3, .. } => -alpha3,
                LightClosure::Fixed { .. } => unreachable!(),
            };
            let g0: f64 =
                wtot.iter().sum::<f64>() + wa0.iter().sum::<f64>() + crop_slope * fwd.mu_bar;
            grad.push(g0);
        }
        for m in 1..=modes {
            let s = self.table.mode(m);
            let mut acc = 0.0;
            for i in 0..nodes {
                acc += wtot[i] * s[i];
            }
            grad.push(acc);
        }
        Ok(grad)
    }
}

/// Average growth rate of a fixed-volume configuration.
pub fn mu_bar(params: &ModelParams, perm: &Permutation, profile: &FourierProfile) -> Result<f64> {
    let ctx = fixed_ctx(params, perm, profile)?;
    Ok(ctx.evaluate(&profile.a)?.mu_bar)
}

/// Gradient of [`mu_bar`] over a_1..a_M.
pub fn grad_mu_bar(
    params: &ModelParams,
    perm: &Permutation,
    profile: &FourierProfile,
) -> Result<Vec<f64>> {
    let ctx = fixed_ctx(params, perm, profile)?;
    Ok(ctx.evaluate_with_gradient(&profile.a)?.1)
}

/// Areal productivity of a variable-volume configuration.
pub fn productivity(
    params: &ModelParams,
    perm: &Permutation,
    profile: &FourierProfile,
) -> Result<f64> {
    let ctx = EvalContext::new(params.clone(), Regime::Variable, perm.clone())?;
    Ok(ctx.evaluate(&profile.coeff_vector())?.value)
}

/// Gradient of [`productivity`] over a_0..a_M.
pub fn grad_productivity(
    params: &ModelParams,
    perm: &Permutation,
    profile: &FourierProfile,
) -> Result<Vec<f64>> {
    let ctx = EvalContext::new(params.clone(), Regime::Variable, perm.clone())?;
    Ok(ctx.evaluate_with_gradient(&profile.coeff_vector())?.1)
}

fn fixed_ctx(
    params: &ModelParams,
    perm: &Permutation,
    profile: &FourierProfile,
) -> Result<EvalContext> {
    let mut p = params.clone();
    p.a0 = profile.a0;
    EvalContext::new(p, Regime::Fixed, perm.clone())
}
