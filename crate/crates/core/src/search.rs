//! Constrained ascent over bottom profiles and exhaustive enumeration of
//! paddle-wheel permutations.
//!
//! Each permutation gets an independent quasi-Newton maximization of the
//! smooth objective, subject to the node-wise water-height floor and the
//! subcriticality cap. Both constraints reduce to a lower bound on the
//! water height at every grid node, so feasibility screening and the
//! stationarity measure share one bound. The search layer runs the
//! per-permutation optimizations in parallel and reduces sequentially so
//! results do not depend on the worker count.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::Permutation;
use crate::error::{Error, Result};
use crate::hydro::{eval_height, flow_partials, FourierProfile, SineTable, FROUDE_MARGIN, MIN_HEIGHT};
use crate::objective::{EvalContext, Regime};
use crate::params::ModelParams;

/// Largest layer count for which exhaustive enumeration is allowed
/// without an explicit override (9! = 362880 optimizations).
pub const MAX_ENUMERATED_NZ: usize = 9;

/// Sufficient-increase coefficient for the backtracking line search.
const ARMIJO: f64 = 1e-4;
/// Step shrink factor between line-search trials.
const BACKTRACK: f64 = 0.5;
/// Trial budget per line search; 0.5^60 is far below the resolution of
/// any representable step, so exhaustion means a genuine stall.
const MAX_BACKTRACKS: usize = 60;
/// Curvature pairs with s'y below this times |s||y| are skipped to keep
/// the inverse Hessian positive definite.
const CURVATURE_FLOOR: f64 = 1e-10;
/// Infinity-norm length of the very first trial step, m.
const FIRST_STEP: f64 = 0.01;
/// Height slack below which a node counts as active for the projected
/// gradient, m.
const ACTIVE_SLACK: f64 = 1e-9;
/// Relative band inside which two optimized values count as tied; ties
/// go to the lexicographically smaller sigma.
const TIE_REL: f64 = 1e-14;

/// Stopping rules for one profile optimization.
#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    /// Hard cap on accepted ascent steps.
    pub max_iterations: usize,
    /// Convergence threshold on the projected gradient infinity norm.
    pub pg_tolerance: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iterations: 500,
            pg_tolerance: 1e-10,
        }
    }
}

/// Result of one constrained maximization.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    /// Final design vector (best feasible iterate).
    pub theta: Vec<f64>,
    /// Objective value at `theta`.
    pub value: f64,
    /// Objective gradient at `theta`.
    pub gradient: Vec<f64>,
    /// Projected gradient infinity norm at `theta`.
    pub projected_gradient: f64,
    /// Accepted ascent steps.
    pub iterations: usize,
    /// Objective evaluations, counting line-search trials.
    pub evaluations: usize,
    /// True when the projected gradient met the tolerance.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let dim = v.len();
    let mut out = vec![0.0; dim];
    for i in 0..dim {
        out[i] = dot(&m[i * dim..(i + 1) * dim], v);
    }
    out
}

fn scaled_identity(dim: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = scale;
    }
    m
}

/// BFGS update of the inverse Hessian (minimization convention):
/// H <- (I - rho s y')H(I - rho y s') + rho s s' with rho = 1/(s'y).
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64]) {
    let dim = s.len();
    let rho = 1.0 / dot(s, y);
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let c = rho * rho * yhy + rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += c * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
        }
    }
}

/// The node-wise lower bound on water height implied by the height floor
/// and the Froude cap Fr <= 1 - margin (Fr is monotone decreasing in h).
pub fn bound_height(params: &ModelParams) -> f64 {
    let cap = 1.0 - FROUDE_MARGIN;
    let crit = (params.flow.q0 / (cap * params.flow.g.sqrt())).powf(2.0 / 3.0);
    MIN_HEIGHT.max(crit)
}

/// Infinity norm of the gradient projected on the feasible cone. At
/// interior points this is the plain gradient norm; at active nodes the
/// bound normals (rows of the height partials) absorb the outward part
/// via a non-negative least-squares fit.
fn projected_gradient_norm(ctx: &EvalContext, theta: &[f64], grad: &[f64]) -> Result<f64> {
    let params = ctx.params();
    let profile = ctx.profile_of(theta);
    let table = ctx.table();
    let h = eval_height(&profile, &params.grid, &table)?;
    let h_lo = bound_height(params);
    let active: Vec<usize> = (0..h.len())
        .filter(|&i| h[i] - h_lo < ACTIVE_SLACK)
        .collect();
    if active.is_empty() {
        return Ok(inf_norm(grad));
    }
    let u: Vec<f64> = h.iter().map(|&hi| params.flow.q0 / hi).collect();
    let partials = flow_partials(&h, &u, &table);
    let dim = grad.len();
    let offset = match ctx.regime() {
        Regime::Fixed => 1,
        Regime::Variable => 0,
    };
    let normals: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| (0..dim).map(|k| partials.dh.get(offset + k, i)).collect())
        .collect();
    let norms2: Vec<f64> = normals.iter().map(|n| dot(n, n)).collect();
    let mut lambda = vec![0.0; normals.len()];
    let mut resid = grad.to_vec();
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for (j, n_j) in normals.iter().enumerate() {
            if norms2[j] == 0.0 {
                continue;
            }
            let step = dot(n_j, &resid) / norms2[j];
            let next = (lambda[j] - step).max(0.0);
            let delta = next - lambda[j];
            if delta != 0.0 {
                for (r, nk) in resid.iter_mut().zip(n_j) {
                    *r += delta * nk;
                }
                lambda[j] = next;
                moved = moved.max(delta.abs());
            }
        }
        if moved <= 1e-18 {
            break;
        }
    }
    Ok(inf_norm(&resid))
}

fn is_feasible(ctx: &EvalContext, theta: &[f64]) -> bool {
    matches!(ctx.margins(theta), Ok((hm, fm)) if hm >= 0.0 && fm >= 0.0)
}

/// Maximizes the context objective from `init` under the water-height
/// and subcriticality bounds.
///
/// BFGS on the negated objective with Armijo backtracking; trial points
/// that violate the bounds (or fail to evaluate) shrink the step, so
/// every accepted iterate is feasible and the value never decreases.
/// Stops when the projected gradient drops below the tolerance or the
/// iteration budget runs out; a line-search stall retries once from a
/// rescaled steepest-ascent direction before giving up. An infeasible
/// starting point is an error.
pub fn optimize_profile(
    ctx: &EvalContext,
    init: &[f64],
    opts: &OptimizeOptions,
) -> Result<OptimizeOutcome> {
    let dim = ctx.dim();
    assert_eq!(init.len(), dim, "design vector length mismatch");
    let (hm, fm) = ctx.margins(init)?;
    if hm < 0.0 || fm < 0.0 {
        return Err(Error::Optimizer(format!(
            "infeasible starting profile: height margin {hm:.6e} m, Froude margin {fm:.6e}"
        )));
    }
    let (mut eval, mut grad) = ctx.evaluate_with_gradient(init)?;
    let mut evaluations = 1usize;
    let mut theta = init.to_vec();

    let fresh_h = |g: &[f64]| {
        let g0 = inf_norm(g);
        let scale = if g0 > 0.0 { FIRST_STEP / g0 } else { 1.0 };
        scaled_identity(dim, scale)
    };
    let mut h_inv = fresh_h(&grad);
    let mut h_has_curvature = false;
    let mut stalled_once = false;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut pg = projected_gradient_norm(ctx, &theta, &grad)?;

    while iterations < opts.max_iterations {
        if pg <= opts.pg_tolerance {
            converged = true;
            break;
        }
        let mut dir = mat_vec(&h_inv, &grad);
        let mut slope = dot(&grad, &dir);
        if !(slope > 0.0) {
            h_inv = fresh_h(&grad);
            h_has_curvature = false;
            dir = mat_vec(&h_inv, &grad);
            slope = dot(&grad, &dir);
            if !(slope > 0.0) {
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted: Option<(Vec<f64>, crate::objective::Evaluation)> = None;
        let mut trial_grad: Option<Vec<f64>> = None;
        for trial_index in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&dir)
                .map(|(t, d)| t + step * d)
                .collect();
            if is_feasible(ctx, &trial) {
                let want = eval.value + ARMIJO * step * slope;
                if trial_index == 0 {
                    if let Ok((ev, g)) = ctx.evaluate_with_gradient(&trial) {
                        evaluations += 1;
                        if ev.value >= want {
                            accepted = Some((trial, ev));
                            trial_grad = Some(g);
                            break;
                        }
                    }
                } else if let Ok(ev) = ctx.evaluate(&trial) {
                    evaluations += 1;
                    if ev.value >= want {
                        accepted = Some((trial, ev));
                        break;
                    }
                }
            }
            step *= BACKTRACK;
        }

        let Some((next_theta, next_eval)) = accepted else {
            if stalled_once || !h_has_curvature {
                break;
            }
            stalled_once = true;
            h_inv = fresh_h(&grad);
            h_has_curvature = false;
            continue;
        };
        stalled_once = false;
        iterations += 1;

        let next_grad = match trial_grad {
            Some(g) => g,
            None => {
                evaluations += 1;
                ctx.evaluate_with_gradient(&next_theta)?.1
            }
        };
        let s: Vec<f64> = next_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad.iter().zip(&next_grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > CURVATURE_FLOOR * norm2(&s) * norm2(&y) {
            if !h_has_curvature {
                h_inv = scaled_identity(dim, sy / dot(&y, &y));
                h_has_curvature = true;
            }
            bfgs_update(&mut h_inv, &s, &y);
        }
        theta = next_theta;
        eval = next_eval;
        grad = next_grad;
        pg = projected_gradient_norm(ctx, &theta, &grad)?;
    }
    if pg <= opts.pg_tolerance {
        converged = true;
    }

    Ok(OptimizeOutcome {
        theta,
        value: eval.value,
        gradient: grad,
        projected_gradient: pg,
        iterations,
        evaluations,
        converged,
    })
}

/// Lazy lexicographic stream over all permutations of a layer count.
#[derive(Debug)]
pub struct PermutationStream {
    current: Option<Vec<usize>>,
}

impl Iterator for PermutationStream {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let images = self.current.as_mut()?;
        let out = Permutation::from_images(images.clone()).expect("stream state is a bijection");
        // advance to the lexicographic successor
        let n = images.len();
        let mut pivot = None;
        for i in (0..n.saturating_sub(1)).rev() {
            if images[i] < images[i + 1] {
                pivot = Some(i);
                break;
            }
        }
        match pivot {
            None => self.current = None,
            Some(i) => {
                let mut j = n - 1;
                while images[j] <= images[i] {
                    j -= 1;
                }
                images.swap(i, j);
                images[i + 1..].reverse();
            }
        }
        Some(out)
    }
}

/// All `nz`! permutations in lexicographic order of the image array.
/// Layer counts above [`MAX_ENUMERATED_NZ`] are refused unless
/// `allow_large` is set.
pub fn enumerate_permutations(nz: usize, allow_large: bool) -> Result<PermutationStream> {
    if nz == 0 {
        return Err(Error::Validation {
            field: "Nz",
            message: "layer count must be at least 1".into(),
        });
    }
    if nz > MAX_ENUMERATED_NZ && !allow_large {
        return Err(Error::PermutationTooLarge {
            nz,
            limit: MAX_ENUMERATED_NZ,
        });
    }
    Ok(PermutationStream {
        current: Some((0..nz).collect()),
    })
}

/// One line of the per-permutation search table.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationRow {
    /// Lexicographic index of the permutation (stable row id).
    pub index: usize,
    /// Dash-separated one-based images, e.g. "2-4-6-7-5-3-1".
    pub sigma: String,
    /// Cycle notation, e.g. "(1 2 4 7)(3 6)(5)".
    pub cycles: String,
    /// Optimized objective value; NaN when the optimization failed.
    pub objective: f64,
    /// True when the returned profile satisfies both bounds.
    pub feasible: bool,
    /// True when the optimizer met its stationarity tolerance.
    pub converged: bool,
    /// Accepted ascent steps spent on this permutation.
    pub iterations: usize,
    /// Optimized profile as [a0, a1, ..., aM]; empty on failure.
    pub coeffs: Vec<f64>,
    /// Failure description when the optimization errored.
    pub error: Option<String>,
}

/// Outcome of the exhaustive permutation search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub regime: Regime,
    /// One row per permutation, in lexicographic order.
    pub rows: Vec<PermutationRow>,
    /// Row index (= lexicographic id) of the winner.
    pub best_index: usize,
    /// Winning permutation.
    pub best_perm: Permutation,
    /// Optimized profile of the winner.
    pub best_profile: FourierProfile,
    /// Objective value of the winner.
    pub best_value: f64,
    /// Gain of the winner over its own flat start.
    pub r1: f64,
    /// Gain of the winner over the identity permutation at the flat start.
    pub r2: f64,
    /// Flat reference profile used by both ratios as [a0, a1, ..., aM].
    /// Fixed regime: the configured a0 with zero modes. Variable regime:
    /// the winner's optimized a0 with zero modes.
    pub flat_coeffs: Vec<f64>,
    /// Objective of the winning permutation on the flat reference.
    pub best_perm_flat_value: f64,
    /// Objective of the identity permutation on the flat reference.
    pub identity_flat_value: f64,
}

fn run_one(
    params: &ModelParams,
    regime: Regime,
    table: Arc<SineTable>,
    perm: &Permutation,
    index: usize,
    init: &[f64],
    opts: &OptimizeOptions,
) -> PermutationRow {
    let sigma = perm.dash_string();
    let cycles = perm.cycle_string();
    let attempt = EvalContext::with_table(params.clone(), regime, perm.clone(), Some(table))
        .and_then(|ctx| optimize_profile(&ctx, init, opts).map(|out| (ctx, out)));
    match attempt {
        Ok((ctx, out)) => PermutationRow {
            index,
            sigma,
            cycles,
            objective: out.value,
            feasible: is_feasible(&ctx, &out.theta),
            converged: out.converged,
            iterations: out.iterations,
            coeffs: ctx.profile_of(&out.theta).coeff_vector(),
            error: None,
        },
        Err(err) => PermutationRow {
            index,
            sigma,
            cycles,
            objective: f64::NAN,
            feasible: false,
            converged: false,
            iterations: 0,
            coeffs: Vec::new(),
            error: Some(err.to_string()),
        },
    }
}

/// Optimizes the profile for every permutation of the configured layer
/// count and reports the best, with gain ratios against the flat
/// baselines.
///
/// Runs on a dedicated thread pool (`workers` = 0 picks the default
/// size). Per-permutation results land in lexicographically ordered
/// slots and the reduction is sequential, so the outcome is bit-for-bit
/// independent of the worker count. A tie within a relative band of
/// 1e-14 keeps the lexicographically smaller sigma. Per-permutation
/// failures are recorded in their rows; the search fails only when
/// every permutation fails.
pub fn search_best(
    params: &ModelParams,
    regime: Regime,
    workers: usize,
    opts: &OptimizeOptions,
    allow_large: bool,
) -> Result<SearchOutcome> {
    params.validate()?;
    let nz = params.grid.nz;
    let perms: Vec<Permutation> = enumerate_permutations(nz, allow_large)?.collect();
    let table = Arc::new(SineTable::new(&params.grid));
    let identity_ctx = EvalContext::with_table(
        params.clone(),
        regime,
        Permutation::identity(nz),
        Some(table.clone()),
    )?;
    let init = identity_ctx.initial_theta();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Optimizer(format!("thread pool construction failed: {e}")))?;
    let rows: Vec<PermutationRow> = pool.install(|| {
        perms
            .par_iter()
            .enumerate()
            .map(|(index, perm)| run_one(params, regime, table.clone(), perm, index, &init, opts))
            .collect()
    });

    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if row.error.is_some() || !row.objective.is_finite() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                let cur = rows[b].objective;
                let band = TIE_REL * cur.abs().max(row.objective.abs());
                if row.objective - cur > band {
                    best = Some(i);
                }
            }
        }
    }
    let best_index = best.ok_or_else(|| {
        Error::Optimizer("every permutation failed to optimize; see the result table".into())
    })?;
    let best_perm = perms[best_index].clone();
    let best_profile = FourierProfile::from_coeff_vector(&rows[best_index].coeffs);
    let best_value = rows[best_index].objective;

    // Both gain ratios compare against a flat profile: the configured
    // start for the fixed regime, the winner's mean depth for the
    // variable regime.
    let flat_theta = match regime {
        Regime::Fixed => init.clone(),
        Regime::Variable => {
            let mut v = vec![0.0; identity_ctx.dim()];
            v[0] = best_profile.a0;
            v
        }
    };
    let best_ctx = identity_ctx.with_perm(best_perm.clone())?;
    let best_perm_flat_value = best_ctx.evaluate(&flat_theta)?.value;
    let identity_flat_value = identity_ctx.evaluate(&flat_theta)?.value;
    let r1 = (best_value - best_perm_flat_value) / best_perm_flat_value;
    let r2 = (best_value - identity_flat_value) / identity_flat_value;
    let flat_coeffs = identity_ctx.profile_of(&flat_theta).coeff_vector();

    Ok(SearchOutcome {
        regime,
        rows,
        best_index,
        best_perm,
        best_profile,
        best_value,
        r1,
        r2,
        flat_coeffs,
        best_perm_flat_value,
        identity_flat_value,
    })
}

/// One pond length in a sweep, with its full search outcome or failure.
#[derive(Debug)]
pub struct SweepPoint {
    pub length: f64,
    pub outcome: Result<SearchOutcome>,
}

/// Runs the exhaustive search at each pond length, keeping every other
/// parameter fixed. Per-length failures are recorded, not fatal.
pub fn sweep_length(
    params: &ModelParams,
    regime: Regime,
    lengths: &[f64],
    workers: usize,
    opts: &OptimizeOptions,
    allow_large: bool,
) -> Vec<SweepPoint> {
    lengths
        .iter()
        .map(|&length| {
            let mut p = params.clone();
            p.grid.length = length;
            let outcome = search_best(&p, regime, workers, opts, allow_large);
            SweepPoint { length, outcome }
        })
        .collect()
}

/// Profile handling for the layer-count refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMode {
    /// Evaluate the flat starting profile.
    Flat,
    /// Optimize the profile at each layer count first.
    Optimized,
}

/// How to pick the permutation at each layer count.
#[derive(Debug, Clone)]
pub enum PermFamily {
    /// Cyclic shift sigma(n) = n + 1 (identity at one layer).
    Shift,
    /// Explicit user-supplied permutation per layer count; layer counts
    /// without an entry are skipped with a note.
    Explicit(BTreeMap<usize, Permutation>),
}

impl PermFamily {
    fn instantiate(&self, nz: usize) -> Result<Option<Permutation>> {
        match self {
            PermFamily::Shift => {
                let images: Vec<usize> = (0..nz).map(|n| (n + 1) % nz).collect();
                Permutation::from_images(images).map(Some)
            }
            PermFamily::Explicit(map) => match map.get(&nz) {
                None => Ok(None),
                Some(perm) => {
                    if perm.nz() != nz {
                        return Err(Error::InvalidPermutation(format!(
                            "mapping for {nz} layers has {} images",
                            perm.nz()
                        )));
                    }
                    Ok(Some(perm.clone()))
                }
            },
        }
    }
}

/// One layer count in the refinement study.
#[derive(Debug, Clone)]
pub struct NzPoint {
    pub nz: usize,
    /// Dash notation of the permutation actually used.
    pub sigma: Option<String>,
    /// Growth rate (fixed-volume objective), when the row was computed.
    pub value: Option<f64>,
    /// Reason the row was skipped or failed.
    pub note: Option<String>,
}

/// Growth rate versus vertical layer count under one permutation
/// family, at the flat or per-count optimized profile. Rows whose
/// permutation cannot be instantiated, or whose evaluation fails, carry
/// a note instead of a value.
pub fn nz_convergence(
    params: &ModelParams,
    nz_values: &[usize],
    family: &PermFamily,
    mode: ProfileMode,
    opts: &OptimizeOptions,
) -> Vec<NzPoint> {
    nz_values
        .iter()
        .map(|&nz| {
            let perm = match family.instantiate(nz) {
                Ok(Some(p)) => p,
                Ok(None) => {
                    return NzPoint {
                        nz,
                        sigma: None,
                        value: None,
                        note: Some("no permutation mapping for this layer count".into()),
                    }
                }
                Err(err) => {
                    return NzPoint {
                        nz,
                        sigma: None,
                        value: None,
                        note: Some(err.to_string()),
                    }
                }
            };
            let sigma = Some(perm.dash_string());
            let mut p = params.clone();
            p.grid.nz = nz;
            let computed = EvalContext::new(p, Regime::Fixed, perm).and_then(|ctx| {
                let init = ctx.initial_theta();
                match mode {
                    ProfileMode::Flat => ctx.evaluate(&init).map(|ev| ev.value),
                    ProfileMode::Optimized => {
                        optimize_profile(&ctx, &init, opts).map(|out| out.value)
                    }
                }
            });
            match computed {
                Ok(value) => NzPoint {
                    nz,
                    sigma,
                    value: Some(value),
                    note: None,
                },
                Err(err) => NzPoint {
                    nz,
                    sigma,
                    value: None,
                    note: Some(err.to_string()),
                },
            }
        })
        .collect()
}
