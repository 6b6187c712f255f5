//! European and American exchange option prices by the method of lines.
//!
//! Each time step runs two nested fixed-point loops. The outer loop freezes
//! the jump integrals computed from the current iterate; the inner loop
//! sweeps the variance lines `m = 1..=M` in Gauss-Seidel order (latest
//! neighbour values) and refreshes line `m = 0` by quadratic extrapolation.
//! For the American option every line also carries its free boundary,
//! located from the sign of the forward-sweep monitor.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exercise_boundary::{boundary_limit, BoundaryLimit};
use crate::grid::{locate_in, Mesh};
use crate::model::ModelParams;
use crate::quadrature::{
    GaussHermiteRule, JumpGeometry, JumpSign, JumpStencil, OutOfRange, DEFAULT_ORDER,
};
use crate::riccati::{
    assemble_interior, assemble_last_line, forward_sweep, locate_free_boundary, reverse_sweep_free,
    reverse_sweep_full, BoundaryConditionKind, ExerciseRule, LineGeometry, LineOperator,
    LineSolution, Neighbors, RightBoundary, TimeStencil,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionStyle {
    European,
    American,
}

impl OptionStyle {
    pub fn name(self) -> &'static str {
        match self {
            OptionStyle::European => "european",
            OptionStyle::American => "american",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub bc: BoundaryConditionKind,
    pub quadrature_order: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tolerance: f64,
    /// Also require the delta change to fall below the tolerance.
    pub strict_convergence: bool,
    /// Also require the free-boundary change to fall below the tolerance.
    pub boundary_convergence: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bc: BoundaryConditionKind::StandardVega,
            quadrature_order: DEFAULT_ORDER,
            max_outer: 50,
            max_inner: 50,
            tolerance: 1e-8,
            strict_convergence: false,
            boundary_convergence: false,
        }
    }
}

impl SolverConfig {
    pub fn with_bc(bc: BoundaryConditionKind) -> Self {
        Self {
            bc,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Price,
    Delta,
    Gamma,
}

/// A field over `(v-index, s-index)` at one time line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub values: Vec<Vec<f64>>,
}

impl Surface {
    fn zeros(kind: SurfaceKind, lines: usize, nodes: usize) -> Self {
        Self {
            kind,
            values: vec![vec![0.0; nodes]; lines],
        }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m]
    }

    pub fn n_lines(&self) -> usize {
        self.values.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn max_abs_diff(&self, other: &Surface) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeLine {
    pub tau: f64,
    pub price: Surface,
    pub delta: Surface,
    pub gamma: Surface,
}

/// Early exercise boundary `A[n][m]` in yield-ratio units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurve {
    pub tau: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    q_spread: f64,
    maturity: f64,
}

impl BoundaryCurve {
    pub fn value(&self, n: usize, m: usize) -> f64 {
        self.a[n][m]
    }

    /// `B = A e^{-(q1 - q2)(T - tau)}`.
    pub fn normalized(&self, n: usize, m: usize) -> f64 {
        self.a[n][m] * (-self.q_spread * (self.maturity - self.tau[n])).exp()
    }

    /// Boundary at time line `n`, linear in `v`.
    pub fn at(&self, n: usize, v: f64) -> f64 {
        let loc = locate_in(&self.v, v);
        loc.interpolate(&self.a[n])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub outer_iterations: usize,
    /// Inner sweeps performed in each outer iteration.
    pub inner_iterations: Vec<usize>,
    pub price_residual: f64,
    pub delta_residual: f64,
    pub boundary_residual: f64,
    pub hit_iteration_cap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub style: OptionStyle,
    pub bc: BoundaryConditionKind,
    pub steps: Vec<StepReport>,
    pub wall_time_s: f64,
    /// Share of quadrature abscissas that fell beyond the spatial mesh.
    pub extrapolation_fraction: f64,
    pub iteration_cap_hits: usize,
}

impl SolveReport {
    pub fn max_outer(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.outer_iterations)
            .max()
            .unwrap_or(0)
    }

    pub fn max_inner(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| s.inner_iterations.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub style: OptionStyle,
    pub params: ModelParams,
    #[serde(skip)]
    pub mesh: Mesh,
    pub lines: Vec<TimeLine>,
    pub boundary: Option<BoundaryCurve>,
    pub report: SolveReport,
}

impl Solution {
    /// Time line at `tau = T`, i.e. calendar time zero.
    pub fn final_line(&self) -> &TimeLine {
        self.lines.last().expect("at least the initial line")
    }

    /// Price at `tau = T`: cubic Lagrange interpolation in `s` on the four
    /// nearest nodes, linear in `v`.
    pub fn price_at(&self, s: f64, v: f64) -> Result<f64> {
        self.value_at(&self.final_line().price, s, v)
    }

    pub fn delta_at(&self, s: f64, v: f64) -> Result<f64> {
        self.value_at(&self.final_line().delta, s, v)
    }

    pub fn value_at(&self, surface: &Surface, s: f64, v: f64) -> Result<f64> {
        let loc = self.mesh.locate(s)?;
        let nodes = self.mesh.s_nodes();
        if loc.extrapolated {
            return Err(Error::InvalidMesh(format!(
                "query s = {s} beyond s_max = {}",
                self.mesh.s_max()
            )));
        }
        if let (OptionStyle::American, Some(b), SurfaceKind::Price) =
            (self.style, &self.boundary, surface.kind)
        {
            let n = self.lines.len() - 1;
            if s >= b.at(n, v) {
                // exercise value at calendar time zero
                return Ok(s - 1.0);
            }
        }
        let vl = locate_in(self.mesh.v_nodes(), v);
        let row_value = |m: usize| cubic_lagrange(nodes, surface.row(m), loc.index, s);
        let lo = row_value(vl.index);
        let hi = row_value(vl.index + 1);
        Ok(lo + vl.weight * (hi - lo))
    }

    /// `A(tau_n, v)` if this is an American solution.
    pub fn boundary_at(&self, n: usize, v: f64) -> Option<f64> {
        self.boundary.as_ref().map(|b| b.at(n, v))
    }
}

/// Four-point Lagrange interpolation around interval `index`.
pub fn cubic_lagrange(nodes: &[f64], values: &[f64], index: usize, x: f64) -> f64 {
    let n = nodes.len();
    if n < 4 {
        let loc = locate_in(nodes, x);
        return loc.interpolate(values);
    }
    let start = index.saturating_sub(1).min(n - 4);
    let xs = &nodes[start..start + 4];
    let ys = &values[start..start + 4];
    let mut total = 0.0;
    for i in 0..4 {
        if x == xs[i] {
            return ys[i];
        }
        let mut basis = 1.0;
        for k in 0..4 {
            if k != i {
                basis *= (x - xs[k]) / (xs[i] - xs[k]);
            }
        }
        total += basis * ys[i];
    }
    total
}

struct Problem<'a> {
    params: &'a ModelParams,
    mesh: &'a Mesh,
    cfg: &'a SolverConfig,
    op: LineOperator,
    stencils: Vec<JumpStencil>,
    style: OptionStyle,
}

struct Iterate {
    value: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    boundary: Vec<f64>,
}

fn max_row_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn extrapolate_row(rows: &[Vec<f64>]) -> Vec<f64> {
    rows[1]
        .iter()
        .zip(&rows[2])
        .zip(&rows[3])
        .map(|((a, b), c)| 3.0 * a - 3.0 * b + c)
        .collect()
}

impl<'a> Problem<'a> {
    fn new(
        params: &'a ModelParams,
        mesh: &'a Mesh,
        cfg: &'a SolverConfig,
        style: OptionStyle,
    ) -> Result<Self> {
        let report = params.validate();
        if !report.is_valid() {
            return Err(Error::InvalidParams(report));
        }
        if !(params.effective_sigma_sq() > 0.0) {
            return Err(Error::Config(
                "effective volatility is zero; the line equations degenerate".into(),
            ));
        }
        if (mesh.maturity() - params.maturity).abs() > 1e-12 * params.maturity {
            return Err(Error::InvalidMesh(format!(
                "mesh maturity {} differs from T = {}",
                mesh.maturity(),
                params.maturity
            )));
        }
        cfg.bc.check_admissible(&params.variance, mesh.v_max())?;
        let rule = GaussHermiteRule::new(cfg.quadrature_order)?;
        let op = LineOperator::new(params, &rule, LineGeometry::YieldRatio);
        let nodes = mesh.s_nodes();
        let mut stencils = Vec::new();
        for (spec, sign) in [
            (&params.jump1, JumpSign::Up),
            (&params.jump2, JumpSign::Down),
        ] {
            if spec.is_active() {
                stencils.push(JumpStencil::new(
                    nodes,
                    spec,
                    sign,
                    &rule,
                    JumpGeometry::Multiplicative,
                    OutOfRange::Linear,
                ));
            }
        }
        Ok(Self {
            params,
            mesh,
            cfg,
            op,
            stencils,
            style,
        })
    }

    fn exercise_rule(&self, tau: f64) -> ExerciseRule {
        let t = self.params.maturity - tau;
        ExerciseRule {
            factor: (-self.params.q1 * t).exp(),
            strike: ((self.params.q1 - self.params.q2) * t).exp(),
        }
    }

    fn initial_line(&self) -> TimeLine {
        let nodes = self.mesh.s_nodes();
        let lines = self.mesh.m_var() + 1;
        let rule = self.exercise_rule(0.0);
        let mut price = Surface::zeros(SurfaceKind::Price, lines, nodes.len());
        let mut delta = Surface::zeros(SurfaceKind::Delta, lines, nodes.len());
        let gamma = Surface::zeros(SurfaceKind::Gamma, lines, nodes.len());
        for m in 0..lines {
            for (j, &s) in nodes.iter().enumerate() {
                price.values[m][j] = rule.value(s).max(0.0);
                delta.values[m][j] = if s > rule.strike {
                    rule.factor
                } else if s == rule.strike {
                    0.5 * rule.factor
                } else {
                    0.0
                };
            }
        }
        TimeLine {
            tau: 0.0,
            price,
            delta,
            gamma,
        }
    }

    /// Line 0 keeps the extrapolated values only where they lie in the
    /// continuation region; beyond its boundary it takes the exercise values.
    fn project_first_line(&self, it: &mut Iterate, rule: &ExerciseRule) {
        let a0 = it.boundary[0];
        for (j, &s) in self.mesh.s_nodes().iter().enumerate() {
            let exercise = rule.value(s);
            if s >= a0 {
                it.value[0][j] = exercise;
                it.delta[0][j] = rule.factor;
                it.gamma[0][j] = 0.0;
            } else if it.value[0][j] < exercise {
                it.value[0][j] = exercise;
            }
        }
    }

    fn jump_terms(&self, value: &[Vec<f64>]) -> Vec<Vec<f64>> {
        value
            .iter()
            .map(|row| {
                let mut out = vec![0.0; row.len()];
                for st in &self.stencils {
                    st.accumulate(row, &mut out);
                }
                out
            })
            .collect()
    }

    fn solve_line(
        &self,
        step: usize,
        m: usize,
        prev: &TimeLine,
        prev2: Option<&TimeLine>,
        it: &Iterate,
        jumps: &[f64],
        rule: &ExerciseRule,
    ) -> Result<(LineSolution, Option<f64>)> {
        let mesh = self.mesh;
        let nodes = mesh.s_nodes();
        let m_last = mesh.m_var();
        let time = TimeStencil::new(
            step,
            mesh.d_tau(),
            prev.price.row(m),
            prev2.map(|p| p.price.row(m)),
        )?;
        let v_m = mesh.v_nodes()[m];
        let coeffs = if m < m_last {
            let nb = Neighbors {
                value_below: &it.value[m - 1],
                delta_below: &it.delta[m - 1],
                value_above: Some(&it.value[m + 1]),
                delta_above: Some(&it.delta[m + 1]),
            };
            assemble_interior(&self.op, nodes, v_m, mesh.d_v(), &time, &nb, jumps)
        } else {
            let nb = Neighbors {
                value_below: &it.value[m - 1],
                delta_below: &it.delta[m - 1],
                value_above: None,
                delta_above: None,
            };
            assemble_last_line(
                &self.op,
                nodes,
                v_m,
                mesh.d_v(),
                &time,
                self.cfg.bc,
                &nb,
                jumps,
            )?
        };
        let state = forward_sweep(&coeffs, nodes)?;
        match self.style {
            OptionStyle::European => Ok((
                reverse_sweep_full(&state, &coeffs, nodes, RightBoundary::ZeroGamma)?,
                None,
            )),
            OptionStyle::American => {
                let fb = locate_free_boundary(&state, nodes, rule)
                    .ok_or(Error::BoundaryEscaped { step, line: m })?;
                let sol = reverse_sweep_free(&state, &coeffs, nodes, &fb, rule)?;
                Ok((sol, Some(fb.location)))
            }
        }
    }

    fn step(
        &self,
        step: usize,
        prev: &TimeLine,
        prev2: Option<&TimeLine>,
        prev_boundary: Option<&[f64]>,
    ) -> Result<(TimeLine, Vec<f64>, StepReport)> {
        let tau = self.mesh.tau_nodes()[step];
        let rule = self.exercise_rule(tau);
        let m_last = self.mesh.m_var();
        let tol = self.cfg.tolerance;
        let mut it = Iterate {
            value: prev.price.values.clone(),
            delta: prev.delta.values.clone(),
            gamma: prev.gamma.values.clone(),
            boundary: prev_boundary.map(<[f64]>::to_vec).unwrap_or_default(),
        };
        let mut report = StepReport {
            step,
            ..StepReport::default()
        };

        for _outer in 0..self.cfg.max_outer {
            report.outer_iterations += 1;
            let jumps = self.jump_terms(&it.value);
            let outer_start = it.value.clone();
            let mut inner_count = 0;
            let mut converged = false;
            for _inner in 0..self.cfg.max_inner {
                inner_count += 1;
                let (mut dv, mut dd, mut db) = (0.0f64, 0.0f64, 0.0f64);
                for m in 1..=m_last {
                    let (sol, boundary) =
                        self.solve_line(step, m, prev, prev2, &it, &jumps[m], &rule)?;
                    dv = dv.max(max_row_diff(&sol.value, &it.value[m]));
                    dd = dd.max(max_row_diff(&sol.delta, &it.delta[m]));
                    if let Some(a) = boundary {
                        db = db.max((a - it.boundary[m]).abs());
                        it.boundary[m] = a;
                    }
                    it.value[m] = sol.value;
                    it.delta[m] = sol.delta;
                    it.gamma[m] = sol.gamma;
                }
                let old_value0 = std::mem::take(&mut it.value[0]);
                let old_delta0 = std::mem::take(&mut it.delta[0]);
                it.value[0] = extrapolate_row(&it.value);
                it.delta[0] = extrapolate_row(&it.delta);
                it.gamma[0] = extrapolate_row(&it.gamma);
                if self.style == OptionStyle::American {
                    let b = &it.boundary;
                    let a0 = (3.0 * b[1] - 3.0 * b[2] + b[3]).max(rule.strike);
                    db = db.max((a0 - it.boundary[0]).abs());
                    it.boundary[0] = a0;
                    self.project_first_line(&mut it, &rule);
                }
                dv = dv.max(max_row_diff(&it.value[0], &old_value0));
                dd = dd.max(max_row_diff(&it.delta[0], &old_delta0));

                report.price_residual = dv;
                report.delta_residual = dd;
                report.boundary_residual = db;
                converged = dv < tol
                    && (!self.cfg.strict_convergence || dd < tol)
                    && (!self.cfg.boundary_convergence || db < tol);
                if converged {
                    break;
                }
            }
            report.inner_iterations.push(inner_count);
            if !converged {
                report.hit_iteration_cap = true;
            }
            if self.stencils.is_empty() {
                break;
            }
            let outer_change = outer_start
                .iter()
                .zip(&it.value)
                .map(|(a, b)| max_row_diff(a, b))
                .fold(0.0, f64::max);
            if outer_change < tol {
                break;
            }
            if report.outer_iterations == self.cfg.max_outer {
                report.hit_iteration_cap = true;
            }
        }
        if report.hit_iteration_cap {
            log::warn!(
                "time step {step}: iteration cap reached (residual {:.3e})",
                report.price_residual
            );
        }
        for (m, row) in it.value.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        stage: "time step",
                        node: m * row.len() + j,
                    });
                }
            }
        }
        let line = TimeLine {
            tau,
            price: Surface {
                kind: SurfaceKind::Price,
                values: it.value,
            },
            delta: Surface {
                kind: SurfaceKind::Delta,
                values: it.delta,
            },
            gamma: Surface {
                kind: SurfaceKind::Gamma,
                values: it.gamma,
            },
        };
        Ok((line, it.boundary, report))
    }

    fn run(&self) -> Result<Solution> {
        let start = Instant::now();
        let n_lines = self.mesh.m_var() + 1;
        let mut boundary_rows: Vec<Vec<f64>> = Vec::new();
        if self.style == OptionStyle::American {
            let a0 = match boundary_limit(self.params) {
                BoundaryLimit::NoEarlyExercise => return Err(Error::NoEarlyExercise),
                b => b.a_at_maturity(self.params).expect("finite limit"),
            };
            if a0 >= self.mesh.s_max() {
                return Err(Error::BoundaryEscaped { step: 0, line: 0 });
            }
            boundary_rows.push(vec![a0; n_lines]);
        }
        let mut lines = vec![self.initial_line()];
        let mut steps = Vec::with_capacity(self.mesh.n_time());
        for n in 1..=self.mesh.n_time() {
            let prev2 = if n >= 3 { Some(&lines[n - 2]) } else { None };
            let (line, boundary, rep) = self.step(
                n,
                &lines[n - 1],
                prev2,
                boundary_rows.last().map(Vec::as_slice),
            )?;
            lines.push(line);
            if self.style == OptionStyle::American {
                boundary_rows.push(boundary);
            }
            steps.push(rep);
        }
        let extrapolation_fraction = if self.stencils.is_empty() {
            0.0
        } else {
            self.stencils
                .iter()
                .map(JumpStencil::extrapolated_fraction)
                .sum::<f64>()
                / self.stencils.len() as f64
        };
        let iteration_cap_hits = steps.iter().filter(|s| s.hit_iteration_cap).count();
        let boundary = (self.style == OptionStyle::American).then(|| BoundaryCurve {
            tau: self.mesh.tau_nodes().to_vec(),
            v: self.mesh.v_nodes().to_vec(),
            a: boundary_rows,
            q_spread: self.params.q1 - self.params.q2,
            maturity: self.params.maturity,
        });
        Ok(Solution {
            style: self.style,
            params: *self.params,
            mesh: self.mesh.clone(),
            lines,
            boundary,
            report: SolveReport {
                style: self.style,
                bc: self.cfg.bc,
                steps,
                wall_time_s: start.elapsed().as_secs_f64(),
                extrapolation_fraction,
                iteration_cap_hits,
            },
        })
    }
}

pub fn solve(
    params: &ModelParams,
    mesh: &Mesh,
    style: OptionStyle,
    cfg: &SolverConfig,
) -> Result<Solution> {
    Problem::new(params, mesh, cfg, style)?.run()
}

pub fn price_european(params: &ModelParams, mesh: &Mesh, cfg: &SolverConfig) -> Result<Solution> {
    solve(params, mesh, OptionStyle::European, cfg)
}

pub fn price_american(params: &ModelParams, mesh: &Mesh, cfg: &SolverConfig) -> Result<Solution> {
    solve(params, mesh, OptionStyle::American, cfg)
}

/// Pointwise `american - european`.
pub fn early_exercise_premium(american: &Surface, european: &Surface) -> Result<Surface> {
    if american.n_lines() != european.n_lines() || american.n_nodes() != european.n_nodes() {
        return Err(Error::SurfaceMismatch(format!(
            "{}x{} vs {}x{}",
            american.n_lines(),
            american.n_nodes(),
            european.n_lines(),
            european.n_nodes()
        )));
    }
    if american.kind != european.kind {
        return Err(Error::SurfaceMismatch(format!(
            "{:?} vs {:?}",
            american.kind, european.kind
        )));
    }
    let values = american
        .values
        .iter()
        .zip(&european.values)
        .map(|(a, e)| a.iter().zip(e).map(|(x, y)| x - y).collect())
        .collect();
    Ok(Surface {
        kind: american.kind,
        values,
    })
}

/// A named set of parameter changes relative to a base parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Override {
    pub label: String,
    pub changes: Vec<(String, f64)>,
}

impl Override {
    pub fn new(label: impl Into<String>, changes: &[(&str, f64)]) -> Self {
        Self {
            label: label.into(),
            changes: changes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn apply(&self, base: &ModelParams) -> Result<ModelParams> {
        let mut p = *base;
        for (k, v) in &self.changes {
            p.set(k, *v)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompStatRow {
    pub label: String,
    pub style: OptionStyle,
    pub s: Vec<f64>,
    /// `V_base - V_override` at `tau = T` and the sampled variance.
    pub difference: Vec<f64>,
}

/// Row of prices at `tau = T` and variance `v` (linear between lines) on every s node.
pub fn price_row(sol: &Solution, v: f64) -> Vec<f64> {
    let line = &sol.final_line().price;
    let vl = locate_in(sol.mesh.v_nodes(), v);
    let lo = line.row(vl.index);
    let hi = line.row(vl.index + 1);
    lo.iter()
        .zip(hi)
        .map(|(a, b)| a + vl.weight * (b - a))
        .collect()
}

/// Price differences against the base parameters for each override and style.
/// Independent solves run in parallel; output order follows the input.
pub fn comparative_statics(
    base: &ModelParams,
    overrides: &[Override],
    mesh: &Mesh,
    cfg: &SolverConfig,
    v_sample: f64,
) -> Result<Vec<CompStatRow>> {
    if overrides.is_empty() {
        return Ok(Vec::new());
    }
    let params: Vec<ModelParams> = overrides
        .iter()
        .map(|o| o.apply(base))
        .collect::<Result<_>>()?;
    let styles = [OptionStyle::European, OptionStyle::American];
    let mut jobs: Vec<(Option<usize>, OptionStyle)> = styles.iter().map(|&s| (None, s)).collect();
    for i in 0..overrides.len() {
        for &s in &styles {
            jobs.push((Some(i), s));
        }
    }
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, style)| {
            let p = i.map_or(base, |i| &params[i]);
            solve(p, mesh, style, cfg).map(|sol| price_row(&sol, v_sample))
        })
        .collect::<Result<_>>()?;
    let s = mesh.s_nodes().to_vec();
    let mut out = Vec::with_capacity(2 * overrides.len());
    for (k, (i, style)) in jobs.iter().enumerate().skip(styles.len()) {
        let base_row = &rows[styles.iter().position(|s| s == style).unwrap()];
        let difference = base_row.iter().zip(&rows[k]).map(|(b, o)| b - o).collect();
        out.push(CompStatRow {
            label: overrides[i.unwrap()].label.clone(),
            style: *style,
            s: s.clone(),
            difference,
        });
    }
    Ok(out)
}
