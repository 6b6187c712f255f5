//! One variance line of the semi-discrete problem.
//!
//! After discretizing `tau` (BDF-2) and `v` (central differences, upwinded
//! drift) the unknown row `V(s)` on line `m` satisfies the linear two-point
//! boundary value problem
//!
//! ```text
//! a V'' + b V' - c V = F + I,      V(s_0) = 0,
//! ```
//!
//! with the right-hand side collecting neighbouring lines, time history and
//! the frozen jump integrals `I`. Writing `V'' = C V + D V' + g` with
//! `C = c/a`, `D = -b/a`, `g = (F + I)/a` and substituting `V = R U + w`,
//! `U = V'`, splits the problem into
//!
//! ```text
//! R' = 1 - D R - C R^2,   w' = -C R w - g R,      R(s_0) = w(s_0) = 0   (forward)
//! U' = (C R + D) U + C w + g                                            (reverse)
//! ```
//!
//! Both sweeps use the trapezoidal rule node to node on the (possibly
//! nonuniform) spatial mesh.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, VarianceParams};
use crate::quadrature::{compensator_drift, GaussHermiteRule};

/// Floor of the `V''` coefficient.
pub const DIFFUSION_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryConditionKind {
    /// `dV/dv = 0` at `v_M`.
    StandardVega,
    /// The pricing equation at `v_M` without the `v`-diffusion and mixed terms.
    VenttselFull,
    /// The pricing equation at `v_M` with every `v`-derivative dropped.
    VenttselConstantVol,
}

impl BoundaryConditionKind {
    pub const ALL: [BoundaryConditionKind; 3] = [
        BoundaryConditionKind::StandardVega,
        BoundaryConditionKind::VenttselFull,
        BoundaryConditionKind::VenttselConstantVol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryConditionKind::StandardVega => "standard-vega",
            BoundaryConditionKind::VenttselFull => "venttsel-full",
            BoundaryConditionKind::VenttselConstantVol => "venttsel-constant-vol",
        }
    }

    /// The full Venttsel condition needs an inward-pointing (or zero) drift at `v_max`.
    pub fn check_admissible(self, variance: &VarianceParams, v_max: f64) -> Result<()> {
        if self == BoundaryConditionKind::VenttselFull {
            let lhs = (variance.xi + variance.lambda) * v_max;
            let rhs = variance.xi * variance.eta;
            if lhs < rhs {
                return Err(Error::InadmissibleBoundary {
                    kind: self.name(),
                    lhs,
                    rhs,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for BoundaryConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryConditionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundaryConditionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown boundary condition `{s}`")))
    }
}

/// Spatial variable of the line problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineGeometry {
    /// `s`, the asset yield ratio (pricing).
    YieldRatio,
    /// `x = ln s` (transition density, which also carries the Ito drift).
    LogRatio,
}

/// Model constants entering the line coefficients.
#[derive(Debug, Clone, Copy)]
pub struct LineOperator {
    pub sigma_sq: f64,
    pub omega: f64,
    pub cross_vol: f64,
    pub compensator: f64,
    pub total_intensity: f64,
    pub variance: VarianceParams,
    pub geometry: LineGeometry,
}

impl LineOperator {
    pub fn new(params: &ModelParams, rule: &GaussHermiteRule, geometry: LineGeometry) -> Self {
        Self {
            sigma_sq: params.effective_sigma_sq(),
            omega: params.variance.omega,
            cross_vol: params.cross_vol_coefficient(),
            compensator: compensator_drift(&params.jump1, &params.jump2, rule),
            total_intensity: params.total_intensity(),
            variance: params.variance,
            geometry,
        }
    }

    #[inline]
    pub fn diffusion(&self, v: f64, s: f64) -> f64 {
        let raw = match self.geometry {
            LineGeometry::YieldRatio => 0.5 * self.sigma_sq * v * s * s,
            LineGeometry::LogRatio => 0.5 * self.sigma_sq * v,
        };
        raw.max(DIFFUSION_FLOOR)
    }

    #[inline]
    pub fn drift(&self, v: f64, s: f64) -> f64 {
        match self.geometry {
            LineGeometry::YieldRatio => -self.compensator * s,
            LineGeometry::LogRatio => -(self.compensator + 0.5 * self.sigma_sq * v),
        }
    }

    /// Coefficient of the mixed derivative `d2V/ds dv`.
    #[inline]
    pub fn mixed(&self, v: f64, s: f64) -> f64 {
        match self.geometry {
            LineGeometry::YieldRatio => self.omega * self.cross_vol * v * s,
            LineGeometry::LogRatio => self.omega * self.cross_vol * v,
        }
    }
}

/// Time-discretization contribution: `V_tau ~ diag * V_n - history`.
#[derive(Debug, Clone, Copy)]
pub struct TimeStencil<'a> {
    diag: f64,
    prev: &'a [f64],
    prev2: Option<&'a [f64]>,
    d_tau: f64,
}

impl<'a> TimeStencil<'a> {
    /// Backward Euler for steps 1 and 2, BDF-2 from step 3 on.
    pub fn new(step: usize, d_tau: f64, prev: &'a [f64], prev2: Option<&'a [f64]>) -> Result<Self> {
        if step >= 3 {
            let prev2 = prev2.ok_or(Error::MissingHistory { step })?;
            Ok(Self {
                diag: 1.5 / d_tau,
                prev,
                prev2: Some(prev2),
                d_tau,
            })
        } else {
            Ok(Self {
                diag: 1.0 / d_tau,
                prev,
                prev2: None,
                d_tau,
            })
        }
    }

    #[inline]
    pub fn diag(&self) -> f64 {
        self.diag
    }

    #[inline]
    pub fn history(&self, j: usize) -> f64 {
        match self.prev2 {
            Some(p2) => (4.0 * self.prev[j] - p2[j]) / (2.0 * self.d_tau),
            None => self.prev[j] / self.d_tau,
        }
    }
}

/// Latest iterates on the neighbouring variance lines.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors<'a> {
    pub value_below: &'a [f64],
    pub delta_below: &'a [f64],
    /// Absent on the last line.
    pub value_above: Option<&'a [f64]>,
    pub delta_above: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub f: Vec<f64>,
    /// `c / a`
    pub big_c: Vec<f64>,
    /// `-b / a`
    pub big_d: Vec<f64>,
    /// `(F + I) / a`
    pub g: Vec<f64>,
}

impl LineCoefficients {
    /// Builds the first-order form from `a, b, c, F` and the jump terms `I`.
    pub fn from_second_order(
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        f: Vec<f64>,
        jumps: &[f64],
    ) -> Self {
        let big_c = c.iter().zip(&a).map(|(c, a)| c / a).collect();
        let big_d = b.iter().zip(&a).map(|(b, a)| -b / a).collect();
        let g = f
            .iter()
            .zip(jumps)
            .zip(&a)
            .map(|((f, i), a)| (f + i) / a)
            .collect();
        Self {
            a,
            b,
            c,
            f,
            big_c,
            big_d,
            g,
        }
    }

    /// Directly specified first-order coefficients (test problems).
    pub fn first_order(big_c: Vec<f64>, big_d: Vec<f64>, g: Vec<f64>) -> Self {
        let n = big_c.len();
        Self {
            a: vec![1.0; n],
            b: big_d.iter().map(|d| -d).collect(),
            c: big_c.clone(),
            f: g.clone(),
            big_c,
            big_d,
            g,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    fn check_finite(&self) -> Result<()> {
        for (j, ((c, d), g)) in self.big_c.iter().zip(&self.big_d).zip(&self.g).enumerate() {
            if !(c.is_finite() && d.is_finite() && g.is_finite()) {
                return Err(Error::NonFinite {
                    stage: "line coefficients",
                    node: j,
                });
            }
        }
        Ok(())
    }
}

/// Coefficients on an interior line `1 <= m <= M-1`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_interior(
    op: &LineOperator,
    nodes: &[f64],
    v_m: f64,
    d_v: f64,
    time: &TimeStencil<'_>,
    nb: &Neighbors<'_>,
    jumps: &[f64],
) -> LineCoefficients {
    let above_v = nb.value_above.expect("interior line needs the line above");
    let above_d = nb.delta_above.expect("interior line needs the line above");
    let mu = op.variance.drift(v_m);
    let up = mu.max(0.0) / d_v;
    let down = mu.min(0.0) / d_v;
    let diff_v = op.omega * op.omega * v_m / (d_v * d_v);
    let c_const = diff_v + op.total_intensity + up - down + time.diag();

    let n = nodes.len();
    let (mut a, mut b, mut c, mut f) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (j, &s) in nodes.iter().enumerate() {
        a.push(op.diffusion(v_m, s));
        b.push(op.drift(v_m, s));
        c.push(c_const);
        let mixed = op.mixed(v_m, s) * (above_d[j] - nb.delta_below[j]) / (2.0 * d_v);
        f.push(
            -0.5 * diff_v * (above_v[j] + nb.value_below[j]) - mixed - up * above_v[j]
                + down * nb.value_below[j]
                - time.history(j),
        );
    }
    LineCoefficients::from_second_order(a, b, c, f, jumps)
}

/// Coefficients on the last line `m = M` under the chosen boundary condition.
#[allow(clippy::too_many_arguments)]
pub fn assemble_last_line(
    op: &LineOperator,
    nodes: &[f64],
    v_max: f64,
    d_v: f64,
    time: &TimeStencil<'_>,
    kind: BoundaryConditionKind,
    nb: &Neighbors<'_>,
    jumps: &[f64],
) -> Result<LineCoefficients> {
    kind.check_admissible(&op.variance, v_max)?;
    let mu = op.variance.drift(v_max);
    let n = nodes.len();
    let (mut a, mut b, mut c, mut f) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    match kind {
        BoundaryConditionKind::StandardVega => {
            // ghost line V_{M+1} = V_M
            let down = mu.min(0.0) / d_v;
            let half_diff = 0.5 * op.omega * op.omega * v_max / (d_v * d_v);
            let c_const = half_diff + op.total_intensity - down + time.diag();
            for (j, &s) in nodes.iter().enumerate() {
                let mixed = op.mixed(v_max, s) / (2.0 * d_v);
                a.push(op.diffusion(v_max, s));
                b.push(op.drift(v_max, s) + mixed);
                c.push(c_const);
                f.push(
                    -half_diff * nb.value_below[j]
                        + mixed * nb.delta_below[j]
                        + down * nb.value_below[j]
                        - time.history(j),
                );
            }
        }
        BoundaryConditionKind::VenttselFull => {
            // backward difference for dV/dv, mu <= 0 by admissibility
            let c_const = op.total_intensity - mu / d_v + time.diag();
            for (j, &s) in nodes.iter().enumerate() {
                a.push(op.diffusion(v_max, s));
                b.push(op.drift(v_max, s));
                c.push(c_const);
                f.push(mu * nb.value_below[j] / d_v - time.history(j));
            }
        }
        BoundaryConditionKind::VenttselConstantVol => {
            let c_const = op.total_intensity + time.diag();
            for (j, &s) in nodes.iter().enumerate() {
                a.push(op.diffusion(v_max, s));
                b.push(op.drift(v_max, s));
                c.push(c_const);
                f.push(-time.history(j));
            }
        }
    }
    Ok(LineCoefficients::from_second_order(a, b, c, f, jumps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
}

/// Trapezoidal step for `R' = 1 - D R - C R^2`: solves
/// `alpha R^2 + beta R - gamma = 0` for the root continuing `r_prev`.
#[inline]
fn riccati_step(r_prev: f64, rhs_prev: f64, h: f64, c_next: f64, d_next: f64) -> Option<f64> {
    let alpha = 0.5 * h * c_next;
    let beta = 1.0 + 0.5 * h * d_next;
    let gamma = r_prev + 0.5 * h * rhs_prev + 0.5 * h;
    if alpha.abs() <= 1e-300 {
        return Some(gamma / beta);
    }
    let disc = beta * beta + 4.0 * alpha * gamma;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (beta + beta.signum() * sq);
    let roots = [q / alpha, if q != 0.0 { -gamma / q } else { f64::NAN }];
    let positive: Vec<f64> = roots.iter().copied().filter(|r| *r >= 0.0).collect();
    match positive.len() {
        2 => Some(positive[0].min(positive[1])),
        1 => Some(positive[0]),
        _ => roots
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .min_by(|x, y| (x - r_prev).abs().partial_cmp(&(y - r_prev).abs()).unwrap()),
    }
}

pub fn forward_sweep(coeffs: &LineCoefficients, nodes: &[f64]) -> Result<RiccatiState> {
    coeffs.check_finite()?;
    let n = nodes.len();
    let (cc, dd, g) = (&coeffs.big_c, &coeffs.big_d, &coeffs.g);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    for j in 0..n - 1 {
        let h = nodes[j + 1] - nodes[j];
        let rj = r[j];
        let rhs = 1.0 - dd[j] * rj - cc[j] * rj * rj;
        let r_next = riccati_step(rj, rhs, h, cc[j + 1], dd[j + 1]).ok_or(Error::NonFinite {
            stage: "forward sweep (R)",
            node: j + 1,
        })?;
        let scale = r_next.abs().max(h);
        if r_next < -1e-12 * scale {
            return Err(Error::NegativeRiccati {
                node: j + 1,
                value: r_next,
            });
        }
        let r_next = r_next.max(0.0);
        let w_next = (w[j] + 0.5 * h * (-cc[j] * rj * w[j] - g[j] * rj)
            - 0.5 * h * g[j + 1] * r_next)
            / (1.0 + 0.5 * h * cc[j + 1] * r_next);
        if !(r_next.is_finite() && w_next.is_finite()) {
            return Err(Error::NonFinite {
                stage: "forward sweep",
                node: j + 1,
            });
        }
        r[j + 1] = r_next;
        w[j + 1] = w_next;
    }
    Ok(RiccatiState { r, w })
}

/// Condition closing the reverse sweep at the right end of the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightBoundary {
    /// `V'' = 0` at the last node.
    ZeroGamma,
    /// `V = 0` at the last node.
    ZeroValue,
}

/// Value, first and second spatial derivative along one line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSolution {
    pub value: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[inline]
fn reverse_step(u_next: f64, p_next: f64, q_next: f64, p: f64, q: f64, h: f64) -> f64 {
    (u_next - 0.5 * h * (p_next * u_next + q_next) - 0.5 * h * q) / (1.0 + 0.5 * h * p)
}

fn check_line(sol: &LineSolution, stage: &'static str) -> Result<()> {
    for (j, ((v, d), g)) in sol.value.iter().zip(&sol.delta).zip(&sol.gamma).enumerate() {
        if !(v.is_finite() && d.is_finite() && g.is_finite()) {
            return Err(Error::NonFinite { stage, node: j });
        }
    }
    Ok(())
}

pub fn reverse_sweep_full(
    state: &RiccatiState,
    coeffs: &LineCoefficients,
    nodes: &[f64],
    right: RightBoundary,
) -> Result<LineSolution> {
    let n = nodes.len();
    let last = n - 1;
    let (cc, dd, g) = (&coeffs.big_c, &coeffs.big_d, &coeffs.g);
    let p: Vec<f64> = (0..n).map(|j| cc[j] * state.r[j] + dd[j]).collect();
    let q: Vec<f64> = (0..n).map(|j| cc[j] * state.w[j] + g[j]).collect();

    let mut u = vec![0.0; n];
    u[last] = match right {
        RightBoundary::ZeroGamma => {
            let mut p_last = p[last];
            if p_last == 0.0 {
                p_last = f64::EPSILON * (cc[last].abs() + dd[last].abs()).max(1.0);
                log::warn!("degenerate far-field coefficient; perturbed to {p_last:e}");
            }
            -q[last] / p_last
        }
        RightBoundary::ZeroValue => {
            if state.r[last] > 0.0 {
                -state.w[last] / state.r[last]
            } else {
                0.0
            }
        }
    };
    for j in (0..last).rev() {
        let h = nodes[j + 1] - nodes[j];
        u[j] = reverse_step(u[j + 1], p[j + 1], q[j + 1], p[j], q[j], h);
    }
    let value: Vec<f64> = (0..n).map(|j| state.r[j] * u[j] + state.w[j]).collect();
    let gamma: Vec<f64> = (0..n)
        .map(|j| cc[j] * value[j] + dd[j] * u[j] + g[j])
        .collect();
    let sol = LineSolution {
        value,
        delta: u,
        gamma,
    };
    check_line(&sol, "reverse sweep")?;
    Ok(sol)
}

/// Exercise data at one time line: value `e (s - k)` and delta `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExerciseRule {
    pub factor: f64,
    pub strike: f64,
}

impl ExerciseRule {
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.factor * (s - self.strike)
    }

    /// Sign function: `R e + w - e (s - k)`, positive left of the boundary.
    #[inline]
    pub fn monitor(&self, r: f64, w: f64, s: f64) -> f64 {
        r * self.factor + w - self.value(s)
    }
}

/// Located free boundary on one line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeBoundary {
    /// First node where the monitor is non-positive.
    pub j_star: usize,
    pub location: f64,
}

/// Natural cubic spline through up to four points, evaluated at `x`.
fn natural_spline_eval(xs: &[f64], ys: &[f64], second: &[f64], x: f64) -> f64 {
    let k = (0..xs.len() - 1)
        .find(|&i| x <= xs[i + 1])
        .unwrap_or(xs.len() - 2);
    let h = xs[k + 1] - xs[k];
    let a = (xs[k + 1] - x) / h;
    let b = (x - xs[k]) / h;
    a * ys[k]
        + b * ys[k + 1]
        + ((a * a * a - a) * second[k] + (b * b * b - b) * second[k + 1]) * h * h / 6.0
}

/// Second derivatives of the natural cubic spline (zero at both ends).
fn natural_spline_second(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal solve for interior second derivatives
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for i in 0..inner {
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
    }
    for i in 1..inner {
        let lower = xs[i + 1] - xs[i];
        let factor = lower / diag[i - 1];
        diag[i] -= factor * upper[i - 1];
        rhs[i] -= factor * rhs[i - 1];
    }
    for i in (0..inner).rev() {
        let next = if i + 1 < inner { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

/// Scans the monitor for its first sign change and places the boundary at
/// the smallest zero of the natural cubic spline through the nodes
/// `j*-2 ..= j*+1` (window shifted inward at the mesh ends).
pub fn locate_free_boundary(
    state: &RiccatiState,
    nodes: &[f64],
    rule: &ExerciseRule,
) -> Option<FreeBoundary> {
    let n = nodes.len();
    let phi = |j: usize| rule.monitor(state.r[j], state.w[j], nodes[j]);
    let j_star = (1..n).find(|&j| phi(j) <= 0.0)?;
    let (lo, hi) = (nodes[j_star - 1], nodes[j_star]);
    if phi(j_star) == 0.0 {
        return Some(FreeBoundary {
            j_star,
            location: hi,
        });
    }
    let width = 4.min(n);
    let start = (j_star as isize - 2).clamp(0, (n - width) as isize) as usize;
    let xs: Vec<f64> = nodes[start..start + width].to_vec();
    let ys: Vec<f64> = (start..start + width).map(phi).collect();
    let second = natural_spline_second(&xs, &ys);
    let spline = |x: f64| natural_spline_eval(&xs, &ys, &second, x);

    // smallest root in (lo, hi): scan, then bisect the first bracketed cell
    const SCAN: usize = 32;
    let mut left = lo;
    let mut f_left = spline(lo);
    let mut bracket = None;
    for k in 1..=SCAN {
        let x = lo + (hi - lo) * k as f64 / SCAN as f64;
        let fx = if k == SCAN { phi(j_star) } else { spline(x) };
        if fx <= 0.0 && f_left > 0.0 {
            bracket = Some((left, x));
            break;
        }
        left = x;
        f_left = fx;
    }
    let (mut a, mut b) = bracket.unwrap_or((lo, hi));
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if spline(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    Some(FreeBoundary {
        j_star,
        location: 0.5 * (a + b),
    })
}

/// Reverse sweep started at the free boundary `A in (s_{j*-1}, s_{j*}]`
/// with `U(A) = e`. Nodes at or beyond `j*` take the exercise values.
pub fn reverse_sweep_free(
    state: &RiccatiState,
    coeffs: &LineCoefficients,
    nodes: &[f64],
    boundary: &FreeBoundary,
    rule: &ExerciseRule,
) -> Result<LineSolution> {
    let n = nodes.len();
    let js = boundary.j_star;
    let (cc, dd, g) = (&coeffs.big_c, &coeffs.big_d, &coeffs.g);
    let mut value = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    for j in js..n {
        value[j] = rule.value(nodes[j]);
        delta[j] = rule.factor;
    }

    let lerp = |arr: &[f64]| {
        let t = (boundary.location - nodes[js - 1]) / (nodes[js] - nodes[js - 1]);
        arr[js - 1] + t * (arr[js] - arr[js - 1])
    };
    let (c_a, d_a, g_a, r_a, w_a) = (lerp(cc), lerp(dd), lerp(g), lerp(&state.r), lerp(&state.w));
    let p_a = c_a * r_a + d_a;
    let q_a = c_a * w_a + g_a;

    let p = |j: usize| cc[j] * state.r[j] + dd[j];
    let q = |j: usize| cc[j] * state.w[j] + g[j];

    let mut u_next = rule.factor;
    let mut p_next = p_a;
    let mut q_next = q_a;
    let mut x_next = boundary.location;
    for j in (0..js).rev() {
        let h = x_next - nodes[j];
        let u = if h > 0.0 {
            reverse_step(u_next, p_next, q_next, p(j), q(j), h)
        } else {
            u_next
        };
        delta[j] = u;
        value[j] = state.r[j] * u + state.w[j];
        gamma[j] = cc[j] * value[j] + dd[j] * u + g[j];
        u_next = u;
        p_next = p(j);
        q_next = q(j);
        x_next = nodes[j];
    }
    let sol = LineSolution {
        value,
        delta,
        gamma,
    };
    check_line(&sol, "free-boundary reverse sweep")?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform(end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| end * i as f64 / n as f64).collect()
    }

    fn operator() -> LineOperator {
        let rule = GaussHermiteRule::new(20).unwrap();
        LineOperator::new(&ModelParams::table1(), &rule, LineGeometry::YieldRatio)
    }

    #[test]
    fn diffusion_examples() {
        let op = operator();
        assert_abs_diff_eq!(op.diffusion(0.56, 1.0), 0.07, epsilon = 1e-15);
        assert_eq!(op.diffusion(0.56, 0.0), DIFFUSION_FLOOR);
    }

    #[test]
    fn no_jump_reduction() {
        let rule = GaussHermiteRule::new(20).unwrap();
        let mut p = ModelParams::table1();
        p.jump1.intensity = 0.0;
        p.jump2.intensity = 0.0;
        let op = LineOperator::new(&p, &rule, LineGeometry::YieldRatio);
        let nodes = uniform(4.0, 8);
        let zeros = vec![0.0; nodes.len()];
        let time = TimeStencil::new(1, 0.1, &zeros, None).unwrap();
        let nb = Neighbors {
            value_below: &zeros,
            delta_below: &zeros,
            value_above: Some(&zeros),
            delta_above: Some(&zeros),
        };
        let v = 0.56;
        let d_v = 0.08;
        let lc = assemble_interior(&op, &nodes, v, d_v, &time, &nb, &zeros);
        assert!(lc.b.iter().all(|&b| b == 0.0));
        let mu = p.variance.drift(v);
        let expected = 0.16 * v / (d_v * d_v) + mu.abs() / d_v + 10.0;
        assert_abs_diff_eq!(lc.c[3], expected, epsilon = 1e-12);
    }

    #[test]
    fn time_stencil_orders() {
        let prev = [2.0];
        let prev2 = [1.0];
        let t1 = TimeStencil::new(2, 0.5, &prev, None).unwrap();
        assert_eq!(t1.diag(), 2.0);
        assert_eq!(t1.history(0), 4.0);
        let t3 = TimeStencil::new(3, 0.5, &prev, Some(&prev2)).unwrap();
        assert_eq!(t3.diag(), 3.0);
        assert_eq!(t3.history(0), 7.0);
        assert!(matches!(
            TimeStencil::new(3, 0.5, &prev, None),
            Err(Error::MissingHistory { step: 3 })
        ));
    }

    #[test]
    fn last_line_variants() {
        let op = operator();
        let nodes = uniform(4.0, 8);
        let n = nodes.len();
        let zeros = vec![0.0; n];
        let time = TimeStencil::new(1, 0.1, &zeros, None).unwrap();
        let below_d: Vec<f64> = (0..n).map(|j| 0.1 * j as f64).collect();
        let nb = Neighbors {
            value_below: &zeros,
            delta_below: &below_d,
            value_above: None,
            delta_above: None,
        };
        let (v_max, d_v) = (2.0, 0.08);
        let vega = assemble_last_line(
            &op,
            &nodes,
            v_max,
            d_v,
            &time,
            BoundaryConditionKind::StandardVega,
            &nb,
            &zeros,
        )
        .unwrap();
        for (j, &s) in nodes.iter().enumerate() {
            let extra = 0.4 * 0.225 * v_max * s / (2.0 * d_v);
            assert_abs_diff_eq!(vega.b[j], -op.compensator * s + extra, epsilon = 1e-12);
            assert_abs_diff_eq!(vega.f[j], extra * below_d[j], epsilon = 1e-12);
        }

        let cv = assemble_last_line(
            &op,
            &nodes,
            v_max,
            d_v,
            &time,
            BoundaryConditionKind::VenttselConstantVol,
            &nb,
            &zeros,
        )
        .unwrap();
        assert!(cv.c.iter().all(|&c| (c - (7.0 + 10.0)).abs() < 1e-12));
        assert!(cv.f.iter().all(|&f| f == 0.0));

        let err = assemble_last_line(
            &op,
            &nodes,
            0.5,
            d_v,
            &time,
            BoundaryConditionKind::VenttselFull,
            &nb,
            &zeros,
        );
        assert!(matches!(err, Err(Error::InadmissibleBoundary { .. })));
    }

    #[test]
    fn boundary_kind_parses() {
        for k in BoundaryConditionKind::ALL {
            assert_eq!(k.name().parse::<BoundaryConditionKind>().unwrap(), k);
        }
        assert!("vega".parse::<BoundaryConditionKind>().is_err());
    }

    #[test]
    fn forward_sweep_trivial_line() {
        let nodes = uniform(3.0, 30);
        let n = nodes.len();
        let lc = LineCoefficients::first_order(vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let st = forward_sweep(&lc, &nodes).unwrap();
        for j in 0..n {
            assert_abs_diff_eq!(st.r[j], nodes[j], epsilon = 1e-14);
            assert_eq!(st.w[j], 0.0);
        }
    }

    #[test]
    fn forward_sweep_linear_riccati() {
        let d = 1.5;
        let mut errs = Vec::new();
        for n in [40usize, 80] {
            let nodes = uniform(2.0, n);
            let k = nodes.len();
            let lc = LineCoefficients::first_order(vec![0.0; k], vec![d; k], vec![0.0; k]);
            let st = forward_sweep(&lc, &nodes).unwrap();
            let err = nodes
                .iter()
                .zip(&st.r)
                .map(|(s, r)| (r - (1.0 - (-d * s).exp()) / d).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 1e-3);
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.2, "{errs:?}");
    }

    #[test]
    fn forward_sweep_constant_source() {
        let gamma = 0.7;
        let nodes = uniform(2.0, 50);
        let k = nodes.len();
        let lc = LineCoefficients::first_order(vec![0.0; k], vec![0.0; k], vec![gamma; k]);
        let st = forward_sweep(&lc, &nodes).unwrap();
        for (s, w) in nodes.iter().zip(&st.w) {
            assert_abs_diff_eq!(*w, -gamma * s * s / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn homogeneous_line_is_zero() {
        let nodes = uniform(4.0, 40);
        let k = nodes.len();
        let lc = LineCoefficients::first_order(vec![2.0; k], vec![0.3; k], vec![0.0; k]);
        let st = forward_sweep(&lc, &nodes).unwrap();
        let sol = reverse_sweep_full(&st, &lc, &nodes, RightBoundary::ZeroGamma).unwrap();
        assert!(sol.value.iter().all(|&v| v == 0.0));
        assert_eq!(sol.delta[k - 1], 0.0);
    }

    /// `V'' = V - (1 + s)` on `[0, L]`, `V(0) = 0`, `V''(L) = 0`: the exact
    /// solution is `1 + s - e^{-s}` plus a growing mode fixed by the far condition.
    fn smooth_problem(n: usize) -> (Vec<f64>, LineSolution) {
        let nodes = uniform(4.0, n);
        let k = nodes.len();
        let g: Vec<f64> = nodes.iter().map(|s| -(1.0 + s)).collect();
        let lc = LineCoefficients::first_order(vec![1.0; k], vec![0.0; k], g);
        let st = forward_sweep(&lc, &nodes).unwrap();
        let sol = reverse_sweep_full(&st, &lc, &nodes, RightBoundary::ZeroGamma).unwrap();
        (nodes, sol)
    }

    #[test]
    fn transform_and_origin_conditions() {
        let (nodes, sol) = smooth_problem(64);
        assert_eq!(nodes[0], 0.0);
        assert_eq!(sol.value[0], 0.0);
    }

    #[test]
    fn self_convergence_is_second_order() {
        let (coarse_nodes, coarse) = smooth_problem(40);
        let (_, mid) = smooth_problem(80);
        let (_, fine) = smooth_problem(160);
        let mut e1 = 0.0f64;
        let mut e2 = 0.0f64;
        for j in 0..coarse_nodes.len() {
            e1 = e1.max((coarse.value[j] - mid.value[2 * j]).abs());
            e2 = e2.max((mid.value[2 * j] - fine.value[4 * j]).abs());
        }
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.15, "observed order {order}");
    }

    #[test]
    fn smooth_problem_matches_exact() {
        // V = 1 + s - e^{-s} + A sinh(s); V''(L) = 0 gives A = e^{-L} / sinh(L)
        let l = 4.0f64;
        let amp = (-l).exp() / l.sinh();
        let exact = |s: f64| 1.0 + s - (-s).exp() + amp * s.sinh();
        let (nodes, sol) = smooth_problem(400);
        for (s, v) in nodes.iter().zip(&sol.value) {
            assert_abs_diff_eq!(*v, exact(*s), epsilon = 1e-4);
        }
    }

    #[test]
    fn free_boundary_on_known_line() {
        // V'' = r^2 V, V(0) = 0 gives V = B sinh(r s); value matching and
        // smooth fit with e (s - k) place the boundary at A - tanh(r A)/r = k.
        let (r, e, k) = (2.0f64, 0.9, 1.0);
        let mut exact_a = 1.5;
        for _ in 0..100 {
            exact_a = k + (r * exact_a).tanh() / r;
        }
        let nodes = uniform(4.0, 800);
        let n = nodes.len();
        let lc = LineCoefficients::first_order(vec![r * r; n], vec![0.0; n], vec![0.0; n]);
        let st = forward_sweep(&lc, &nodes).unwrap();
        let rule = ExerciseRule {
            factor: e,
            strike: k,
        };
        assert_abs_diff_eq!(rule.monitor(st.r[0], st.w[0], 0.0), e * k, epsilon = 1e-15);
        let fb = locate_free_boundary(&st, &nodes, &rule).unwrap();
        assert!(fb.location > nodes[fb.j_star - 1] && fb.location <= nodes[fb.j_star]);
        assert_abs_diff_eq!(fb.location, exact_a, epsilon = 1e-5);

        let sol = reverse_sweep_free(&st, &lc, &nodes, &fb, &rule).unwrap();
        let amp = e / (r * (r * exact_a).cosh());
        for j in 0..n {
            let s = nodes[j];
            let exact = if s < exact_a {
                amp * (r * s).sinh()
            } else {
                rule.value(s)
            };
            assert_abs_diff_eq!(sol.value[j], exact, epsilon = 1e-4);
        }
        assert_eq!(sol.delta[fb.j_star], e);
    }

    #[test]
    fn natural_spline_reproduces_linear_data() {
        let xs = [0.0, 1.0, 2.5, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.8 * x).collect();
        let m = natural_spline_second(&xs, &ys);
        for x in [0.2, 1.7, 2.9] {
            assert_abs_diff_eq!(
                natural_spline_eval(&xs, &ys, &m, x),
                2.0 - 0.8 * x,
                epsilon = 1e-13
            );
        }
    }
}
