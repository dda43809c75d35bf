//! Randomized verification of the adjoint gradients against central
//! finite differences.
//!
//! Each instance draws a small random configuration (layer count, mode
//! count, pond length, permutation, profile) and compares every gradient
//! coefficient with a central difference of the objective. The check runs
//! for both regimes and is deterministic for a given seed.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Permutation;
use crate::error::Result;
use crate::objective::{EvalContext, Regime};
use crate::params::ModelParams;

/// Pinned central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Error bound, applied per coefficient as described in
/// [`GradCheckReport`].
pub const TOLERANCE: f64 = 1e-7;

/// Coefficients at least this fraction of the gradient norm must also
/// meet the strict per-coefficient relative bound.
pub const STRICT_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { instances: 20, seed: 42 }
    }
}

/// Outcome of one random instance.
#[derive(Debug, Clone)]
pub struct InstanceReport {
    pub index: usize,
    pub regime: Regime,
    pub nz: usize,
    pub modes: usize,
    pub length: f64,
    /// Permutation images, dash-separated, 1-based.
    pub sigma: String,
    pub theta: Vec<f64>,
    /// max_k |analytic_k - fd_k| / ||fd||_inf.
    pub norm_error: f64,
    /// max over coefficients with |fd_k| >= STRICT_FRACTION ||fd||_inf of
    /// |analytic_k - fd_k| / |fd_k|.
    pub strict_error: f64,
    pub pass: bool,
}

/// Aggregate outcome.
///
/// A coefficient passes when |analytic - fd| <= TOLERANCE * ||fd||_inf;
/// coefficients of magnitude at least STRICT_FRACTION of the norm must
/// also pass the strict relative bound. The norm scaling matters because
/// the finite-difference oracle itself carries rounding noise of about
/// |objective| * 1e-13 / step in absolute terms, which dominates any
/// coefficient that is incidentally far below the gradient norm.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub instances: Vec<InstanceReport>,
    pub max_norm_error: f64,
    pub max_strict_error: f64,
    pub pass: bool,
}

/// Run `cfg.instances` random gradient comparisons, alternating regimes.
/// `base` supplies the physical parameters; grid shape and profile are
/// resampled per instance.
pub fn run(base: &ModelParams, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::with_capacity(cfg.instances);
    let mut max_norm_error = 0.0f64;
    let mut max_strict_error = 0.0f64;

    for index in 0..cfg.instances {
        let regime = if index % 2 == 0 { Regime::Fixed } else { Regime::Variable };
        let nz = *[2usize, 3].choose(&mut rng).unwrap();
        let modes = *[1usize, 2].choose(&mut rng).unwrap();
        let length = *[1.0f64, 10.0].choose(&mut rng).unwrap();
        let mut sigma: Vec<usize> = (0..nz).collect();
        sigma.shuffle(&mut rng);
        let perm = Permutation::from_images(sigma)?;

        let mut params = base.clone();
        params.grid.length = length;
        params.grid.dx = 0.01;
        params.grid.nz = nz;
        params.grid.modes = modes;
        params.a0 = rng.random_range(0.25..0.5);
        // amplitudes small against a0: the profile stays feasible and
        // every finite-difference probe stays feasible too
        let amps: Vec<f64> = (0..modes).map(|_| rng.random_range(-0.04..0.04)).collect();

        let ctx = EvalContext::new(params.clone(), regime, perm.clone())?;
        let theta = match regime {
            Regime::Fixed => amps.clone(),
            Regime::Variable => {
                let mut v = Vec::with_capacity(modes + 1);
                v.push(params.a0);
                v.extend_from_slice(&amps);
                v
            }
        };

        let (_, grad) = ctx.evaluate_with_gradient(&theta)?;
        let mut fd = Vec::with_capacity(theta.len());
        for k in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[k] += FD_STEP;
            minus[k] -= FD_STEP;
            let vp = ctx.evaluate(&plus)?.value;
            let vm = ctx.evaluate(&minus)?.value;
            fd.push((vp - vm) / (2.0 * FD_STEP));
        }

        let norm = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut norm_error = 0.0f64;
        let mut strict_error = 0.0f64;
        for k in 0..theta.len() {
            let gap = (grad[k] - fd[k]).abs();
            norm_error = norm_error.max(gap / norm);
            if fd[k].abs() >= STRICT_FRACTION * norm {
                strict_error = strict_error.max(gap / fd[k].abs());
            }
        }
        let pass = norm_error <= TOLERANCE && strict_error <= TOLERANCE;
        max_norm_error = max_norm_error.max(norm_error);
        max_strict_error = max_strict_error.max(strict_error);
        instances.push(InstanceReport {
            index,
            regime,
            nz,
            modes,
            length,
            sigma: perm.dash_string(),
            theta,
            norm_error,
            strict_error,
            pass,
        });
    }

    let pass = instances.iter().all(|i| i.pass);
    Ok(GradCheckReport { instances, max_norm_error, max_strict_error, pass })
}
