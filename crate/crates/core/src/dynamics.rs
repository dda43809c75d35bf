//! Lap dynamics of the photoinhibition state and paddle-wheel mixing.
//!
//! Within a lap each layer n obeys the linear ODE
//! C_n'(x) = (-alpha(I_n(x)) C_n + beta(I_n(x))) / u(x). Heun's explicit
//! trapezoidal scheme makes one grid step an affine update
//! C_{i+1} = g_i C_i + r_i, so a whole lap is C(L) = A C(0) + b per layer
//! with A the product of the step multipliers. The paddle wheel closes the
//! loop: the new occupant of depth n is the layer that finished the lap at
//! depth sigma(n), i.e. C_n(0) = C_{sigma(n)}(L). With every A in (0, 1)
//! the permuted affine system has a unique fixed point, solved in closed
//! form cycle by cycle.
//!
//! The adjoint solver integrates the exact transpose of the discretized
//! scheme backward, reusing the same step multipliers and coupling layers
//! through the inverse permutation. Its output is what makes objective
//! gradients match finite differences of the discrete objective to
//! round-off.

use crate::error::{Error, Result};
use crate::field::LayerField;
use crate::params::HanParams;
use crate::photic::raw_rates;

/// A bijection of the layer indices 0..nz. `image(n)` is sigma(n); after
/// the paddle wheel, depth n holds the layer that finished the lap at
/// depth sigma(n).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(nz: usize) -> Self {
        Self { map: (0..nz).collect() }
    }

    /// Build from 0-based images, validating bijectivity.
    pub fn from_images(map: Vec<usize>) -> Result<Self> {
        let nz = map.len();
        if nz == 0 {
            return Err(Error::InvalidPermutation("empty image list".into()));
        }
        let mut seen = vec![false; nz];
        for &im in &map {
            if im >= nz {
                return Err(Error::InvalidPermutation(format!(
                    "image {} out of range for {} layers",
                    im + 1,
                    nz
                )));
            }
            if seen[im] {
                return Err(Error::InvalidPermutation(format!("image {} repeats", im + 1)));
            }
            seen[im] = true;
        }
        Ok(Self { map })
    }

    /// Build from 1-based images as printed in reports.
    pub fn from_one_based(v: &[usize]) -> Result<Self> {
        if v.iter().any(|&x| x == 0) {
            return Err(Error::InvalidPermutation("images are 1-based, found 0".into()));
        }
        Self::from_images(v.iter().map(|&x| x - 1).collect())
    }

    /// Parse "2-4-6-7-5-3-1" (1-based images).
    pub fn parse_dash(s: &str) -> Result<Self> {
        let v: std::result::Result<Vec<usize>, _> =
            s.split('-').map(|t| t.trim().parse::<usize>()).collect();
        let v = v.map_err(|_| {
            Error::InvalidPermutation(format!("`{s}` is not a dash-separated image list"))
        })?;
        Self::from_one_based(&v)
    }

    pub fn nz(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn image(&self, n: usize) -> usize {
        self.map[n]
    }

    pub fn images(&self) -> &[usize] {
        &self.map
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.map.iter().map(|&x| x + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(n, &im)| n == im)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (n, &im) in self.map.iter().enumerate() {
            inv[im] = n;
        }
        Self { map: inv }
    }

    /// Disjoint cycles, each starting at its smallest element, ordered by
    /// that element. Fixed points appear as singleton cycles.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let nz = self.nz();
        let mut seen = vec![false; nz];
        let mut cycles = Vec::new();
        for start in 0..nz {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut cur = self.map[start];
            while cur != start {
                seen[cur] = true;
                cycle.push(cur);
                cur = self.map[cur];
            }
            cycles.push(cycle);
        }
        cycles
    }

    /// Smallest number of laps after which every layer returns to its
    /// starting depth: the lcm of the cycle lengths.
    pub fn order(&self) -> u64 {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.cycles()
            .iter()
            .map(|c| c.len() as u64)
            .fold(1, |acc, len| acc / gcd(acc, len) * len)
    }

    /// Cycle notation with 1-based labels, e.g. "(1 2 4 7)(3 6)(5)".
    pub fn cycle_string(&self) -> String {
        self.cycles()
            .iter()
            .map(|c| {
                let inner =
                    c.iter().map(|&n| (n + 1).to_string()).collect::<Vec<_>>().join(" ");
                format!("({inner})")
            })
            .collect()
    }

    /// Dash-separated 1-based images, e.g. "2-4-6-7-5-3-1".
    pub fn dash_string(&self) -> String {
        self.map.iter().map(|&n| (n + 1).to_string()).collect::<Vec<_>>().join("-")
    }

    /// Apply the paddle wheel to a vector of lap-end states.
    pub fn permute_end_state(&self, end: &[f64], out: &mut [f64]) {
        for (n, &im) in self.map.iter().enumerate() {
            out[n] = end[im];
        }
    }
}

/// Per-layer, per-node ODE coefficients: relaxation p = alpha/u and
/// forcing q = beta/u, both 1/m.
#[derive(Debug, Clone)]
pub struct LayerRates {
    pub p: LayerField,
    pub q: LayerField,
}

/// Assemble the lap ODE coefficients from a light field and a velocity
/// profile.
pub fn layer_rates(han: &HanParams, light: &LayerField, u: &[f64]) -> LayerRates {
    let nz = light.rows();
    let nodes = light.cols();
    assert_eq!(u.len(), nodes);
    let mut p = LayerField::zeros(nz, nodes);
    let mut q = LayerField::zeros(nz, nodes);
    for n in 0..nz {
        let light_row = light.row(n);
        for i in 0..nodes {
            let r = raw_rates(han, light_row[i]);
            p.set(n, i, r.alpha / u[i]);
            q.set(n, i, r.beta / u[i]);
        }
    }
    LayerRates { p, q }
}

/// Affine Heun steps: over cell i the state updates as
/// C_{i+1} = g_i C_i + r_i with
///
/// ```text
/// g_i = 1 - dx/2 (p_i + p_{i+1}) + dx^2/2 p_i p_{i+1}
/// r_i = dx/2 (q_i + q_{i+1}) - dx^2/2 p_{i+1} q_i
/// ```
///
/// exactly Heun's predictor-corrector applied to the linear right-hand
/// side. The state stays within [0, 1] provided dx max(p) <= 1.
#[derive(Debug, Clone)]
pub struct StepMaps {
    /// Multiplier per layer per cell, nz x nx.
    pub g: LayerField,
    /// Offset per layer per cell, nz x nx.
    pub r: LayerField,
}

impl StepMaps {
    pub fn nz(&self) -> usize {
        self.g.rows()
    }

    /// Number of cells; node count is steps() + 1.
    pub fn steps(&self) -> usize {
        self.g.cols()
    }
}

/// Build the per-cell affine maps. Multipliers outside (0, 1] mean the
/// scheme lost contraction at this resolution and are rejected.
pub fn step_maps(rates: &LayerRates, dx: f64) -> Result<StepMaps> {
    let nz = rates.p.rows();
    let nodes = rates.p.cols();
    let nx = nodes - 1;
    let half = 0.5 * dx;
    let half_sq = 0.5 * dx * dx;
    let mut g = LayerField::zeros(nz, nx);
    let mut r = LayerField::zeros(nz, nx);
    for n in 0..nz {
        let p_row = rates.p.row(n);
        let q_row = rates.q.row(n);
        let g_row = g.row_mut(n);
        for i in 0..nx {
            let gi = 1.0 - half * (p_row[i] + p_row[i + 1]) + half_sq * p_row[i] * p_row[i + 1];
            if !(gi > 0.0 && gi <= 1.0) {
                return Err(Error::UnstableStep { layer: n, step: i });
            }
            g_row[i] = gi;
            r.set(n, i, half * (q_row[i] + q_row[i + 1]) - half_sq * p_row[i + 1] * q_row[i]);
        }
    }
    Ok(StepMaps { g, r })
}

/// One layer's lap map C(L) = a C(0) + b together with the two basis
/// trajectories it was assembled from.
#[derive(Debug, Clone)]
pub struct LapMap {
    /// Homogeneous multiplier, the product of the step multipliers.
    pub a: f64,
    /// Inhomogeneous offset.
    pub b: f64,
    /// Trajectory from C(0) = 1 with the forcing suppressed.
    pub homogeneous: Vec<f64>,
    /// Trajectory from C(0) = 0 with the full forcing.
    pub particular: Vec<f64>,
}

/// Integrate the two basis laps of one layer.
pub fn lap_map(steps: &StepMaps, layer: usize) -> LapMap {
    let nx = steps.steps();
    let g = steps.g.row(layer);
    let r = steps.r.row(layer);
    let mut homogeneous = Vec::with_capacity(nx + 1);
    let mut particular = Vec::with_capacity(nx + 1);
    let mut ch = 1.0;
    let mut cp = 0.0;
    homogeneous.push(ch);
    particular.push(cp);
    for i in 0..nx {
        ch *= g[i];
        cp = g[i] * cp + r[i];
        homogeneous.push(ch);
        particular.push(cp);
    }
    LapMap { a: ch, b: cp, homogeneous, particular }
}

/// All layers' lap-map coefficients (a_n, b_n) without trajectories.
pub fn lap_affine(steps: &StepMaps) -> (Vec<f64>, Vec<f64>) {
    let nz = steps.nz();
    let nx = steps.steps();
    let mut a = Vec::with_capacity(nz);
    let mut b = Vec::with_capacity(nz);
    for n in 0..nz {
        let g = steps.g.row(n);
        let r = steps.r.row(n);
        let mut ch = 1.0;
        let mut cp = 0.0;
        for i in 0..nx {
            ch *= g[i];
            cp = g[i] * cp + r[i];
        }
        a.push(ch);
        b.push(cp);
    }
    (a, b)
}

/// The periodic regime of the permuted lap system.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    /// Lap-start states C_n(0).
    pub start: Vec<f64>,
    /// Full state trajectories, nz x nodes.
    pub field: LayerField,
    /// Per-layer lap multipliers a_n.
    pub lap_a: Vec<f64>,
    /// Per-layer lap offsets b_n.
    pub lap_b: Vec<f64>,
    /// max_n |C_n(0) - C_{sigma(n)}(L)| of the reconstructed field.
    pub residual: f64,
    pub min_state: f64,
    pub max_state: f64,
}

/// Solve C_n(0) = C_{sigma(n)}(L) for the unique periodic state and
/// reconstruct each layer's trajectory with one Heun pass.
pub fn solve_periodic(perm: &Permutation, steps: &StepMaps) -> Result<PeriodicSolution> {
    let nz = steps.nz();
    assert_eq!(perm.nz(), nz, "permutation size does not match layer count");
    let (lap_a, lap_b) = lap_affine(steps);
    let mut start = vec![0.0; nz];

    for cycle in perm.cycles() {
        // Walk the orbit once to close D = coef D + sum, then substitute
        // back around the cycle.
        let n1 = cycle[0];
        let mut coef = 1.0;
        let mut sum = 0.0;
        let mut m = perm.image(n1);
        loop {
            sum += coef * lap_b[m];
            coef *= lap_a[m];
            if m == n1 {
                break;
            }
            m = perm.image(m);
        }
        if coef >= 1.0 {
            return Err(Error::Domain(
                "periodic state is not unique: lap maps do not contract".into(),
            ));
        }
        start[n1] = sum / (1.0 - coef);
        // orbit in image order: n1, sigma(n1), sigma^2(n1), ..
        let mut orbit = Vec::with_capacity(cycle.len());
        let mut cur = n1;
        loop {
            orbit.push(cur);
            cur = perm.image(cur);
            if cur == n1 {
                break;
            }
        }
        for j in (1..orbit.len()).rev() {
            let next = orbit[(j + 1) % orbit.len()];
            start[orbit[j]] = lap_a[next] * start[next] + lap_b[next];
        }
    }

    let nx = steps.steps();
    let mut field = LayerField::zeros(nz, nx + 1);
    let mut min_state = f64::INFINITY;
    let mut max_state = f64::NEG_INFINITY;
    for n in 0..nz {
        let g = steps.g.row(n);
        let r = steps.r.row(n);
        let row = field.row_mut(n);
        let mut c = start[n];
        row[0] = c;
        for i in 0..nx {
            c = g[i] * c + r[i];
            row[i + 1] = c;
        }
        for &v in row.iter() {
            min_state = min_state.min(v);
            max_state = max_state.max(v);
        }
    }

    let mut residual = 0.0f64;
    for n in 0..nz {
        let end = field.get(perm.image(n), nx);
        residual = residual.max((start[n] - end).abs());
    }

    Ok(PeriodicSolution { start, field, lap_a, lap_b, residual, min_state, max_state })
}

/// Iterate `laps` paddle-wheel laps from `c0`. Test oracle for the
/// periodic solver; the search never calls this.
pub fn multi_lap_simulate(
    perm: &Permutation,
    lap_a: &[f64],
    lap_b: &[f64],
    laps: usize,
    c0: &[f64],
) -> Vec<f64> {
    let nz = perm.nz();
    let mut c = c0.to_vec();
    let mut end = vec![0.0; nz];
    for _ in 0..laps {
        for n in 0..nz {
            end[n] = lap_a[n] * c[n] + lap_b[n];
        }
        perm.permute_end_state(&end, &mut c);
    }
    c
}

/// Adjoint state of the discretized lap system.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    /// Adjoint trajectories p_n(x_i), nz x nodes. The multiplier of the
    /// step constraint over cell i is p_n(x_{i+1}).
    pub field: LayerField,
    /// max residual of the permuted boundary coupling.
    pub residual: f64,
}

/// Solve the exact discrete adjoint of [`solve_periodic`]:
///
/// ```text
/// p_{n,i} = g_{n,i} p_{n,i+1} + phi_{n,i}        (backward sweep)
/// p_{n,nx} = phi_{n,nx} + p_{inv_sigma(n),0}     (paddle-wheel coupling)
/// ```
///
/// where `source` holds phi, the objective's sensitivity to the state at
/// each node. Solved cycle by cycle like the forward problem.
pub fn solve_adjoint(
    perm: &Permutation,
    steps: &StepMaps,
    source: &LayerField,
) -> Result<AdjointSolution> {
    let nz = steps.nz();
    let nx = steps.steps();
    assert_eq!(source.rows(), nz);
    assert_eq!(source.cols(), nx + 1);

    // Backward basis sweep per layer: p(0) = a_n p(nx) + offset_n.
    let (lap_a, _) = lap_affine(steps);
    let mut offset = vec![0.0; nz];
    for n in 0..nz {
        let g = steps.g.row(n);
        let phi = source.row(n);
        let mut p = 0.0;
        for i in (0..nx).rev() {
            p = g[i] * p + phi[i];
        }
        offset[n] = p;
    }

    // End values couple through sigma: E_{sigma(m)} = a_m E_m + c_m.
    let mut end = vec![0.0; nz];
    for cycle in perm.cycles() {
        let n1 = cycle[0];
        let mut orbit = Vec::with_capacity(cycle.len());
        let mut cur = n1;
        loop {
            orbit.push(cur);
            cur = perm.image(cur);
            if cur == n1 {
                break;
            }
        }
        let c_of = |m: usize| source.get(perm.image(m), nx) + offset[m];
        let mut coef = 1.0;
        let mut sum = 0.0;
        for &m in &orbit {
            sum = lap_a[m] * sum + c_of(m);
            coef *= lap_a[m];
        }
        if coef >= 1.0 {
            return Err(Error::Domain(
                "adjoint state is not unique: lap maps do not contract".into(),
            ));
        }
        end[n1] = sum / (1.0 - coef);
        for j in 0..orbit.len() - 1 {
            let m = orbit[j];
            end[orbit[j + 1]] = lap_a[m] * end[m] + c_of(m);
        }
    }

    let mut field = LayerField::zeros(nz, nx + 1);
    for n in 0..nz {
        let g = steps.g.row(n);
        let phi = source.row(n);
        let row = field.row_mut(n);
        let mut p = end[n];
        row[nx] = p;
        for i in (0..nx).rev() {
            p = g[i] * p + phi[i];
            row[i] = p;
        }
    }

    let mut residual = 0.0f64;
    for m in 0..nz {
        let n = perm.image(m);
        let expected = source.get(n, nx) + field.get(m, 0);
        residual = residual.max((field.get(n, nx) - expected).abs());
    }

    Ok(AdjointSolution { field, residual })
}
