//! Command drivers: load parameters, call the model library, and write
//! the result files.
//!
//! Every command writes `result.json` (inputs echoed plus outputs) and
//! `timing.json` (wall time, kept out of result.json so results are
//! byte-reproducible) into the output directory; the table-producing
//! commands add `table.csv`, the profile-producing ones `profile.csv`,
//! and `--plots on` adds the SVG files. Writes go through a temp file
//! plus rename so readers never observe a partial file.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use raceway_core::dynamics::Permutation;
use raceway_core::gradcheck::{self, GradCheckConfig};
use raceway_core::hydro::{
    feasibility_margins, flow_field, layer_depth, volume, FlowField, FourierProfile, SineTable,
};
use raceway_core::objective::{EvalContext, Regime};
use raceway_core::params::Discretization;
use raceway_core::search::{
    nz_convergence, optimize_profile, search_best, sweep_length, NzPoint, OptimizeOptions,
    PermFamily, ProfileMode, SearchOutcome, SweepPoint,
};
use raceway_core::{load_config, Error as CoreError, ModelParams};

use crate::args::{
    Cli, Command, CommonArgs, ExportProfileArgs, GradCheckArgs, NzConvergenceArgs, OptimizeArgs,
    ProfileModeArg, SearchArgs, SimulateArgs, SweepLengthArgs,
};
use crate::json::Json;
use crate::svg::{self, Series};

/// Terminal failure: a stable machine-readable kind plus a message.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { kind: "usage", message: message.into() }
    }

    pub fn to_json(&self) -> Json {
        Json::Object(vec![(
            "error",
            Json::Object(vec![
                ("kind", Json::Str(self.kind.to_string())),
                ("message", Json::Str(self.message.clone())),
            ]),
        )])
    }

    /// One compact line on stderr plus a best-effort `error.json`.
    pub fn emit(&self, out_dir: &Path) {
        let doc = self.to_json();
        eprintln!("{}", doc.render_compact());
        if std::fs::create_dir_all(out_dir).is_ok() {
            let _ = write_atomic(&out_dir.join("error.json"), doc.render().as_bytes());
        }
    }
}

impl From<CoreError> for Failure {
    fn from(err: CoreError) -> Self {
        let kind = match &err {
            CoreError::MalformedConfig { .. } => "config",
            CoreError::Validation { .. } => "validation",
            CoreError::InfeasibleProfile { .. } => "infeasible-profile",
            CoreError::NoCompensation { .. } => "no-compensation",
            CoreError::PondTooDeep { .. } => "pond-too-deep",
            CoreError::PermutationTooLarge { .. } => "permutation-too-large",
            CoreError::InvalidPermutation(_) => "invalid-permutation",
            CoreError::Domain(_) => "domain",
            CoreError::UnstableStep { .. } => "unstable-step",
            CoreError::Optimizer(_) => "optimizer",
            CoreError::Io(_) => "io",
        };
        Failure { kind, message: err.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure { kind: "io", message: err.to_string() }
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Search(a) => cmd_search(a),
        Command::SweepLength(a) => cmd_sweep_length(a),
        Command::NzConvergence(a) => cmd_nz_convergence(a),
        Command::ExportProfile(a) => cmd_export_profile(a),
    }
}

// ---------------------------------------------------------------- shared

fn load_params(common: &CommonArgs) -> Result<ModelParams, Failure> {
    let mut params = match &common.config {
        Some(path) => load_config(path)?,
        None => ModelParams::default(),
    };
    if let Some(length) = common.length {
        params.grid.length = length;
    }
    if let Some(nz) = common.nz {
        params.grid.nz = nz;
    }
    if let Some(modes) = common.modes {
        params.grid.modes = modes;
    }
    params.validate()?;
    Ok(params)
}

/// Worker count: flag, else RACEWAY_WORKERS, else 0 (runtime default).
fn resolve_workers(common: &CommonArgs) -> Result<usize, Failure> {
    if let Some(n) = common.workers {
        return Ok(n);
    }
    match std::env::var("RACEWAY_WORKERS") {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("RACEWAY_WORKERS is not a worker count: `{raw}`"))),
        Err(_) => Ok(0),
    }
}

fn parse_perm(spec: &Option<String>, nz: usize) -> Result<Permutation, Failure> {
    match spec {
        None => Ok(Permutation::identity(nz)),
        Some(s) => {
            let perm = Permutation::parse_dash(s)?;
            if perm.nz() != nz {
                return Err(Failure::usage(format!(
                    "permutation `{s}` addresses {} layers but Nz = {nz}",
                    perm.nz()
                )));
            }
            Ok(perm)
        }
    }
}

fn parse_floats(raw: &str, what: &str) -> Result<Vec<f64>, Failure> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Failure::usage(format!("{what}: `{s}` is not a number"))))
        .collect()
}

fn parse_usizes(raw: &str, what: &str) -> Result<Vec<usize>, Failure> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Failure::usage(format!("{what}: `{s}` is not a count"))))
        .collect()
}

/// Full profile coefficients [a0, a1, ..., aM] from `--coeffs`, arity
/// validated against the mode count. Absent means the flat profile at
/// the configured mean depth.
fn parse_coeffs(
    spec: &Option<String>,
    a0_default: f64,
    modes: usize,
) -> Result<(f64, Vec<f64>), Failure> {
    match spec {
        None => Ok((a0_default, vec![0.0; modes])),
        Some(raw) => {
            let values = parse_floats(raw, "--coeffs")?;
            if values.len() != modes + 1 {
                return Err(Failure::usage(format!(
                    "--coeffs lists {} values but a0 plus M = {modes} modes need {}",
                    values.len(),
                    modes + 1
                )));
            }
            Ok((values[0], values[1..].to_vec()))
        }
    }
}

/// `Nz: sigma` lines, `#` comments, for the explicit permutation family.
fn parse_mapping(text: &str) -> Result<BTreeMap<usize, Permutation>, Failure> {
    let mut map = BTreeMap::new();
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
        let Some((lhs, rhs)) = content.split_once(':') else {
            return Err(Failure::usage(format!("mapping line {line}: expected `Nz: sigma`")));
        };
        let nz: usize = lhs
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("mapping line {line}: `{}` is not a layer count", lhs.trim())))?;
        let perm = Permutation::parse_dash(rhs.trim())
            .map_err(|err| Failure::usage(format!("mapping line {line}: {err}")))?;
        if perm.nz() != nz {
            return Err(Failure::usage(format!(
                "mapping line {line}: permutation addresses {} layers, not {nz}",
                perm.nz()
            )));
        }
        if map.insert(nz, perm).is_some() {
            return Err(Failure::usage(format!("mapping line {line}: duplicate entry for {nz} layers")));
        }
    }
    Ok(map)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| std::io::Error::other("path has no file name"))?;
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_timing(out: &Path, command: &str, started: Instant) -> Result<(), Failure> {
    let doc = Json::Object(vec![
        ("command", Json::Str(command.to_string())),
        ("wall_seconds", Json::Float(started.elapsed().as_secs_f64())),
    ]);
    write_atomic(&out.join("timing.json"), doc.render().as_bytes())?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Quotes a CSV cell only when it contains a delimiter, quote, or
/// newline.
fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// The 18 config keys in canonical order, echoed so a run can be
/// reproduced from its result file alone.
fn config_json(p: &ModelParams) -> Json {
    Json::Object(vec![
        ("kr", Json::Float(p.han.kr)),
        ("kd", Json::Float(p.han.kd)),
        ("tau", Json::Float(p.han.tau)),
        ("sigma", Json::Float(p.han.sigma)),
        ("k", Json::Float(p.han.k)),
        ("R", Json::Float(p.han.r)),
        ("Q0", Json::Float(p.flow.q0)),
        ("g", Json::Float(p.flow.g)),
        ("zb0", Json::Float(p.flow.zb0)),
        ("Is", Json::Float(p.light.i_s)),
        ("alpha0", Json::Float(p.light.alpha0)),
        ("alpha1", Json::Float(p.light.alpha1)),
        ("bottom_fraction", Json::Float(p.light.bottom_fraction)),
        ("a0", Json::Float(p.a0)),
        ("L", Json::Float(p.grid.length)),
        ("dx", Json::Float(p.grid.dx)),
        ("Nz", Json::Int(p.grid.nz as i64)),
        ("M", Json::Int(p.grid.modes as i64)),
    ])
}

/// Common head of every result.json. The worker count is deliberately
/// absent: it affects scheduling only, never values, and results must
/// not differ by it.
fn envelope(
    command: &str,
    regime: Option<Regime>,
    params: &ModelParams,
    plots: bool,
) -> Vec<(&'static str, Json)> {
    vec![
        ("command", Json::Str(command.to_string())),
        (
            "regime",
            match regime {
                Some(r) => Json::Str(r.to_string()),
                None => Json::Null,
            },
        ),
        ("config", config_json(params)),
        ("plots", Json::Bool(plots)),
    ]
}

fn profile_csv(flow: &FlowField, grid: &Discretization) -> String {
    let mut out = String::with_capacity(96 * (flow.h.len() + 1));
    out.push_str("x,h,zb,eta,u,Fr\n");
    for i in 0..flow.h.len() {
        let cells =
            [grid.x(i), flow.h[i], flow.zb[i], flow.eta[i], flow.u[i], flow.fr[i]].map(fmt_f);
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn grid_xs(grid: &Discretization) -> Vec<f64> {
    (0..grid.nodes()).map(|i| grid.x(i)).collect()
}

/// profile.csv and, when enabled, topography.svg for one configuration.
fn write_profile_artifacts(
    out: &Path,
    ctx: &EvalContext,
    theta: &[f64],
    plots: bool,
) -> Result<(), Failure> {
    let report = ctx.report(theta)?;
    let grid = &ctx.params().grid;
    write_atomic(&out.join("profile.csv"), profile_csv(&report.flow, grid).as_bytes())?;
    if plots {
        let drawing = svg::topography(&grid_xs(grid), &report.flow, &report.layers);
        write_atomic(&out.join("topography.svg"), drawing.as_bytes())?;
    }
    Ok(())
}

// -------------------------------------------------------------- simulate

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let mut params = load_params(&a.common)?;
    let regime = a.regime.map(|r| r.to_core()).unwrap_or(Regime::Fixed);
    let perm = parse_perm(&a.perm, params.grid.nz)?;
    let (a0, amps) = parse_coeffs(&a.coeffs, params.a0, params.grid.modes)?;
    // The fixed-regime design vector carries amplitudes only; the mean
    // depth must travel through the params for --coeffs to win there.
    params.a0 = a0;

    let ctx = EvalContext::new(params.clone(), regime, perm.clone())?;
    let profile = FourierProfile::new(a0, amps);
    let theta = ctx.theta_of(&profile);
    let report = ctx.report(&theta)?;

    let out = &a.common.out;
    ensure_dir(out)?;
    let ev = &report.evaluation;
    let mut fields = envelope("simulate", Some(regime), &params, a.common.plots.is_on());
    fields.extend([
        ("perm", Json::Str(perm.dash_string())),
        ("cycles", Json::Str(perm.cycle_string())),
        ("coeffs", Json::float_array(&profile.coeff_vector())),
        ("objective", Json::Float(ev.value)),
        ("mu_bar", Json::Float(ev.mu_bar)),
        ("mu_bar_per_day", Json::Float(ev.mu_bar * 86_400.0)),
        ("volume_factor", Json::Float(ev.volume_factor)),
        ("residual", Json::Float(ev.residual)),
        ("min_state", Json::Float(ev.min_state)),
        ("max_state", Json::Float(ev.max_state)),
        ("feasible", Json::Bool(report.feasible)),
        ("height_margin", Json::Float(report.height_margin)),
        ("froude_margin", Json::Float(report.froude_margin)),
        ("layer_mu", Json::float_array(&report.layer_mu)),
    ]);
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_profile_artifacts(out, &ctx, &theta, a.common.plots.is_on())?;
    write_timing(out, "simulate", started)?;
    println!(
        "simulate: objective {:.6e} mu_bar {:.6e} 1/s -> {}",
        ev.value,
        ev.mu_bar,
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------ grad-check

fn cmd_grad_check(a: GradCheckArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let params = load_params(&a.common)?;
    let cfg = GradCheckConfig { instances: a.instances, seed: a.seed };
    let report = gradcheck::run(&params, &cfg)?;

    let out = &a.common.out;
    ensure_dir(out)?;
    let rows: Vec<Json> = report
        .instances
        .iter()
        .map(|r| {
            Json::Object(vec![
                ("index", Json::Int(r.index as i64)),
                ("regime", Json::Str(r.regime.to_string())),
                ("nz", Json::Int(r.nz as i64)),
                ("modes", Json::Int(r.modes as i64)),
                ("length", Json::Float(r.length)),
                ("sigma", Json::Str(r.sigma.clone())),
                ("norm_error", Json::Float(r.norm_error)),
                ("strict_error", Json::Float(r.strict_error)),
                ("pass", Json::Bool(r.pass)),
            ])
        })
        .collect();
    let mut fields = envelope("grad-check", None, &params, a.common.plots.is_on());
    fields.extend([
        ("seed", Json::Int(a.seed as i64)),
        ("instances", Json::Int(a.instances as i64)),
        ("tolerance", Json::Float(gradcheck::TOLERANCE)),
        ("max_norm_error", Json::Float(report.max_norm_error)),
        ("max_strict_error", Json::Float(report.max_strict_error)),
        ("pass", Json::Bool(report.pass)),
        ("rows", Json::Array(rows)),
    ]);
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_timing(out, "grad-check", started)?;
    println!(
        "grad-check: {} instances, max norm error {:.3e}, max strict error {:.3e}, pass {}",
        report.instances.len(),
        report.max_norm_error,
        report.max_strict_error,
        report.pass
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure {
            kind: "gradient-check",
            message: format!(
                "max relative gradient error {:.3e} exceeds {:.0e}",
                report.max_norm_error.max(report.max_strict_error),
                gradcheck::TOLERANCE
            ),
        })
    }
}

// -------------------------------------------------------------- optimize

fn cmd_optimize(a: OptimizeArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let params = load_params(&a.common)?;
    let regime = a.regime.to_core();
    let perm = parse_perm(&a.perm, params.grid.nz)?;

    let ctx = EvalContext::new(params.clone(), regime, perm.clone())?;
    let init = ctx.initial_theta();
    let outcome = optimize_profile(&ctx, &init, &OptimizeOptions::default())?;
    let ev = ctx.evaluate(&outcome.theta)?;
    let (height_margin, froude_margin) = ctx.margins(&outcome.theta)?;

    let out = &a.common.out;
    ensure_dir(out)?;
    let mut fields = envelope("optimize", Some(regime), &params, a.common.plots.is_on());
    fields.extend([
        ("perm", Json::Str(perm.dash_string())),
        ("cycles", Json::Str(perm.cycle_string())),
        ("initial_coeffs", Json::float_array(&ctx.profile_of(&init).coeff_vector())),
        (
            "optimal",
            Json::Object(vec![
                ("coeffs", Json::float_array(&ctx.profile_of(&outcome.theta).coeff_vector())),
                ("objective", Json::Float(outcome.value)),
                ("mu_bar", Json::Float(ev.mu_bar)),
                ("volume_factor", Json::Float(ev.volume_factor)),
                ("projected_gradient", Json::Float(outcome.projected_gradient)),
                ("iterations", Json::Int(outcome.iterations as i64)),
                ("evaluations", Json::Int(outcome.evaluations as i64)),
                ("converged", Json::Bool(outcome.converged)),
                ("height_margin", Json::Float(height_margin)),
                ("froude_margin", Json::Float(froude_margin)),
            ]),
        ),
    ]);
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_profile_artifacts(out, &ctx, &outcome.theta, a.common.plots.is_on())?;
    write_timing(out, "optimize", started)?;
    println!(
        "optimize: objective {:.6e} iterations {} converged {} -> {}",
        outcome.value,
        outcome.iterations,
        outcome.converged,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- search

fn search_table_csv(outcome: &SearchOutcome, modes: usize) -> String {
    let mut out = String::with_capacity(128 * (outcome.rows.len() + 1));
    out.push_str("perm_id,sigma,cycles,objective,feasible,iterations");
    for m in 0..=modes {
        out.push_str(&format!(",a{m}"));
    }
    out.push('\n');
    for row in &outcome.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            row.index,
            row.sigma,
            row.cycles,
            fmt_f(row.objective),
            row.feasible,
            row.iterations
        ));
        for m in 0..=modes {
            out.push(',');
            if let Some(c) = row.coeffs.get(m) {
                out.push_str(&fmt_f(*c));
            }
        }
        out.push('\n');
    }
    out
}

fn best_json(outcome: &SearchOutcome) -> Json {
    let best = &outcome.rows[outcome.best_index];
    Json::Object(vec![
        ("perm_id", Json::Int(best.index as i64)),
        ("sigma", Json::Str(best.sigma.clone())),
        ("cycles", Json::Str(best.cycles.clone())),
        ("objective", Json::Float(best.objective)),
        ("feasible", Json::Bool(best.feasible)),
        ("converged", Json::Bool(best.converged)),
        ("iterations", Json::Int(best.iterations as i64)),
        ("coeffs", Json::float_array(&best.coeffs)),
    ])
}

fn search_summary_json(outcome: &SearchOutcome) -> Vec<(&'static str, Json)> {
    let failed = outcome.rows.iter().filter(|r| r.error.is_some()).count();
    vec![
        ("n_permutations", Json::Int(outcome.rows.len() as i64)),
        ("n_failed", Json::Int(failed as i64)),
        ("best", best_json(outcome)),
        ("r1", Json::Float(outcome.r1)),
        ("r2", Json::Float(outcome.r2)),
        (
            "baselines",
            Json::Object(vec![
                ("flat_coeffs", Json::float_array(&outcome.flat_coeffs)),
                ("best_perm_flat", Json::Float(outcome.best_perm_flat_value)),
                ("identity_flat", Json::Float(outcome.identity_flat_value)),
            ]),
        ),
    ]
}

fn cmd_search(a: SearchArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let params = load_params(&a.common)?;
    let regime = a.regime.to_core();
    let workers = resolve_workers(&a.common)?;
    let outcome =
        search_best(&params, regime, workers, &OptimizeOptions::default(), a.allow_large)?;

    let out = &a.common.out;
    ensure_dir(out)?;
    let mut fields = envelope("search", Some(regime), &params, a.common.plots.is_on());
    fields.push(("allow_large", Json::Bool(a.allow_large)));
    fields.extend(search_summary_json(&outcome));
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_atomic(
        &out.join("table.csv"),
        search_table_csv(&outcome, params.grid.modes).as_bytes(),
    )?;

    let ctx = EvalContext::new(params.clone(), regime, outcome.best_perm.clone())?;
    let theta = ctx.theta_of(&outcome.best_profile);
    write_profile_artifacts(out, &ctx, &theta, a.common.plots.is_on())?;
    write_timing(out, "search", started)?;
    println!(
        "search: best {} cycles {} objective {:.6e} r1 {:.3}% r2 {:.3}% -> {}",
        outcome.rows[outcome.best_index].sigma,
        outcome.rows[outcome.best_index].cycles,
        outcome.best_value,
        100.0 * outcome.r1,
        100.0 * outcome.r2,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------- sweep-length

fn sweep_table_csv(points: &[SweepPoint], modes: usize) -> String {
    let mut out = String::from("length,sigma,cycles,objective,r1,r2");
    for m in 0..=modes {
        out.push_str(&format!(",a{m}"));
    }
    out.push_str(",note\n");
    for point in points {
        out.push_str(&fmt_f(point.length));
        match &point.outcome {
            Ok(res) => {
                let best = &res.rows[res.best_index];
                out.push_str(&format!(
                    ",{},{},{},{},{}",
                    best.sigma,
                    best.cycles,
                    fmt_f(best.objective),
                    fmt_f(res.r1),
                    fmt_f(res.r2)
                ));
                for m in 0..=modes {
                    out.push(',');
                    if let Some(c) = best.coeffs.get(m) {
                        out.push_str(&fmt_f(*c));
                    }
                }
                out.push(',');
            }
            Err(err) => {
                out.push_str(&",,,,,".to_string());
                for _ in 0..=modes {
                    out.push(',');
                }
                out.push_str(&csv_cell(&err.to_string()));
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_sweep_length(a: SweepLengthArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let params = load_params(&a.common)?;
    let regime = a.regime.to_core();
    let workers = resolve_workers(&a.common)?;
    let lengths = parse_floats(&a.lengths, "--lengths")?;
    if lengths.is_empty() {
        return Err(Failure::usage("--lengths lists no values"));
    }
    let points =
        sweep_length(&params, regime, &lengths, workers, &OptimizeOptions::default(), a.allow_large);

    let out = &a.common.out;
    ensure_dir(out)?;
    let rows: Vec<Json> = points
        .iter()
        .map(|point| {
            let mut fields = vec![("length", Json::Float(point.length))];
            match &point.outcome {
                Ok(res) => {
                    fields.push(("ok", Json::Bool(true)));
                    fields.extend(search_summary_json(res));
                }
                Err(err) => {
                    fields.push(("ok", Json::Bool(false)));
                    fields.push(("error", Json::Str(err.to_string())));
                }
            }
            Json::Object(fields)
        })
        .collect();
    let mut fields = envelope("sweep-length", Some(regime), &params, a.common.plots.is_on());
    fields.push(("lengths", Json::float_array(&lengths)));
    fields.push(("allow_large", Json::Bool(a.allow_large)));
    fields.push(("points", Json::Array(rows)));
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_atomic(&out.join("table.csv"), sweep_table_csv(&points, params.grid.modes).as_bytes())?;

    // The best configuration across the sweep gets the profile export.
    let best = points
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok().map(|res| (p.length, res)))
        .max_by(|x, y| x.1.best_value.total_cmp(&y.1.best_value));
    let Some((best_length, best_res)) = best else {
        return Err(Failure {
            kind: "optimizer",
            message: "every sweep point failed; see table.csv".to_string(),
        });
    };
    let mut best_params = params.clone();
    best_params.grid.length = best_length;
    let ctx = EvalContext::new(best_params, regime, best_res.best_perm.clone())?;
    let theta = ctx.theta_of(&best_res.best_profile);
    write_profile_artifacts(out, &ctx, &theta, a.common.plots.is_on())?;

    if a.common.plots.is_on() {
        let ok_points: Vec<(f64, &SearchOutcome)> =
            points.iter().filter_map(|p| p.outcome.as_ref().ok().map(|r| (p.length, r))).collect();
        if ok_points.len() >= 2 {
            let top_label = match regime {
                Regime::Fixed => "growth rate [1/s]",
                Regime::Variable => "productivity [gC/(m^2 s)]",
            };
            let top = Series {
                label: top_label.to_string(),
                points: ok_points.iter().map(|(l, r)| (*l, r.best_value)).collect(),
            };
            let bottom = vec![
                Series {
                    label: "r1 [%]".to_string(),
                    points: ok_points.iter().map(|(l, r)| (*l, 100.0 * r.r1)).collect(),
                },
                Series {
                    label: "r2 [%]".to_string(),
                    points: ok_points.iter().map(|(l, r)| (*l, 100.0 * r.r2)).collect(),
                },
            ];
            let drawing = svg::sweep("L [m]", &top, &bottom);
            write_atomic(&out.join("sweep.svg"), drawing.as_bytes())?;
        }
    }
    write_timing(out, "sweep-length", started)?;
    let failed = points.iter().filter(|p| p.outcome.is_err()).count();
    println!(
        "sweep-length: {} points ({} failed), best at L = {} -> {}",
        points.len(),
        failed,
        best_length,
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------- nz-convergence

fn nz_table_csv(rows: &[NzPoint]) -> String {
    let mut out = String::from("nz,sigma,mu_bar,note\n");
    for row in rows {
        out.push_str(&row.nz.to_string());
        out.push(',');
        if let Some(sigma) = &row.sigma {
            out.push_str(sigma);
        }
        out.push(',');
        if let Some(value) = row.value {
            out.push_str(&fmt_f(value));
        }
        out.push(',');
        if let Some(note) = &row.note {
            out.push_str(&csv_cell(note));
        }
        out.push('\n');
    }
    out
}

fn cmd_nz_convergence(a: NzConvergenceArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let params = load_params(&a.common)?;
    let nz_values = parse_usizes(&a.nz_list, "--nz-list")?;
    if nz_values.is_empty() {
        return Err(Failure::usage("--nz-list lists no values"));
    }
    let family = match &a.mapping {
        Some(path) => PermFamily::Explicit(parse_mapping(&std::fs::read_to_string(path)?)?),
        None => PermFamily::Shift,
    };
    let mode = match a.profile_mode {
        ProfileModeArg::Flat => ProfileMode::Flat,
        ProfileModeArg::Optimized => ProfileMode::Optimized,
    };
    let rows = nz_convergence(&params, &nz_values, &family, mode, &OptimizeOptions::default());

    let out = &a.common.out;
    ensure_dir(out)?;
    let json_rows: Vec<Json> = rows
        .iter()
        .map(|row| {
            Json::Object(vec![
                ("nz", Json::Int(row.nz as i64)),
                ("sigma", Json::opt_str(&row.sigma)),
                ("mu_bar", Json::opt_float(row.value)),
                ("note", Json::opt_str(&row.note)),
            ])
        })
        .collect();
    let mut fields = envelope("nz-convergence", Some(Regime::Fixed), &params, a.common.plots.is_on());
    fields.push((
        "profile_mode",
        Json::Str(
            match a.profile_mode {
                ProfileModeArg::Flat => "flat",
                ProfileModeArg::Optimized => "optimized",
            }
            .to_string(),
        ),
    ));
    fields.push((
        "family",
        Json::Str(if a.mapping.is_some() { "mapping" } else { "shift" }.to_string()),
    ));
    if let Some(path) = &a.mapping {
        fields.push(("mapping_file", Json::Str(path.display().to_string())));
    }
    fields.push(("rows", Json::Array(json_rows)));
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_atomic(&out.join("table.csv"), nz_table_csv(&rows).as_bytes())?;

    if a.common.plots.is_on() {
        let valued: Vec<(f64, f64)> =
            rows.iter().filter_map(|r| r.value.map(|v| (r.nz as f64, v))).collect();
        if valued.len() >= 2 {
            let top = Series { label: "growth rate [1/s]".to_string(), points: valued };
            let drawing = svg::sweep("Nz", &top, &[]);
            write_atomic(&out.join("sweep.svg"), drawing.as_bytes())?;
        }
    }
    write_timing(out, "nz-convergence", started)?;
    let skipped = rows.iter().filter(|r| r.value.is_none()).count();
    println!(
        "nz-convergence: {} rows ({} skipped) -> {}",
        rows.len(),
        skipped,
        out.display()
    );
    Ok(())
}

// --------------------------------------------------------- export-profile

fn cmd_export_profile(a: ExportProfileArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let params = load_params(&a.common)?;
    let (a0, amps) = parse_coeffs(&a.coeffs, params.a0, params.grid.modes)?;
    let profile = FourierProfile::new(a0, amps);
    let table = SineTable::new(&params.grid);
    let flow = flow_field(&profile, &params.flow, &params.grid, &table)?;
    let (height_margin, froude_margin) =
        feasibility_margins(&profile, &params.flow, &params.grid, &table)?;

    let out = &a.common.out;
    ensure_dir(out)?;
    let mut fields = envelope("export-profile", None, &params, a.common.plots.is_on());
    fields.extend([
        ("coeffs", Json::float_array(&profile.coeff_vector())),
        ("volume", Json::Float(volume(&flow.h, params.grid.dx))),
        ("height_margin", Json::Float(height_margin)),
        ("froude_margin", Json::Float(froude_margin)),
        ("feasible", Json::Bool(height_margin >= 0.0 && froude_margin >= 0.0)),
    ]);
    write_atomic(&out.join("result.json"), Json::Object(fields).render().as_bytes())?;
    write_atomic(&out.join("profile.csv"), profile_csv(&flow, &params.grid).as_bytes())?;
    if a.common.plots.is_on() {
        let layers = layer_depth(&flow.eta, &flow.h, params.grid.nz);
        let drawing = svg::topography(&grid_xs(&params.grid), &flow, &layers);
        write_atomic(&out.join("topography.svg"), drawing.as_bytes())?;
    }
    write_timing(out, "export-profile", started)?;
    println!(
        "export-profile: {} nodes, volume {:.6} m^2 -> {}",
        flow.h.len(),
        volume(&flow.h, params.grid.dx),
        out.display()
    );
    Ok(())
}
