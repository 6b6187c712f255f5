//! Joint transition density of `(x = ln s, v)` from the backward Kolmogorov
//! equation, solved with the same line machinery as the pricer.
//!
//! The source is a discrete delta at the node nearest `(x0, v0)`. Every
//! boundary (both `x` ends, `v = 0` and `v = v_max`) is absorbing, so mass can
//! only leave the domain.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::model::ModelParams;
use crate::quadrature::{GaussHermiteRule, JumpGeometry, JumpSign, JumpStencil, OutOfRange};
use crate::riccati::{
    assemble_interior, forward_sweep, reverse_sweep_full, LineGeometry, LineOperator, Neighbors,
    RightBoundary, TimeStencil,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Convergence threshold relative to `max |H|` on the time line.
    pub relative_tolerance: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            max_outer: 50,
            max_inner: 50,
            relative_tolerance: 1e-10,
        }
    }
}

/// `H[m][j]` at one time line, with its mass diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DensityLine {
    pub tau: f64,
    pub values: Vec<Vec<f64>>,
    #[serde(skip)]
    pub delta: Vec<Vec<f64>>,
    /// `sum H dx dv` over the lattice.
    pub mass: f64,
    pub min_value: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityField {
    pub x0: f64,
    pub v0: f64,
    /// Lattice indices `(m, j)` carrying the initial mass.
    pub source: (usize, usize),
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub lines: Vec<DensityLine>,
    pub iteration_cap_hits: usize,
    pub wall_time_s: f64,
}

impl DensityField {
    pub fn final_line(&self) -> &DensityLine {
        self.lines.last().expect("at least the initial line")
    }

    pub fn masses(&self) -> Vec<(f64, f64)> {
        self.lines.iter().map(|l| (l.tau, l.mass)).collect()
    }

    /// `x`-marginal `sum_m H dv` on the final line.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dv = self.v[1] - self.v[0];
        let line = self.final_line();
        (0..self.x.len())
            .map(|j| line.values.iter().map(|row| row[j]).sum::<f64>() * dv)
            .collect()
    }
}

fn nearest(nodes: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, &n) in nodes.iter().enumerate() {
        if (n - x).abs() < (nodes[best] - x).abs() {
            best = i;
        }
    }
    best
}

fn cell_width(nodes: &[f64], j: usize) -> f64 {
    let last = nodes.len() - 1;
    let lo = nodes[j.saturating_sub(1)];
    let hi = nodes[(j + 1).min(last)];
    let span = if j == 0 || j == last { 2.0 } else { 1.0 };
    span * (hi - lo) / 2.0
}

fn central_difference(nodes: &[f64], row: &[f64]) -> Vec<f64> {
    let last = nodes.len() - 1;
    (0..=last)
        .map(|j| {
            let (a, b) = (j.saturating_sub(1), (j + 1).min(last));
            (row[b] - row[a]) / (nodes[b] - nodes[a])
        })
        .collect()
}

fn diagnostics(values: &[Vec<f64>], x: &[f64], dv: f64) -> (f64, f64) {
    let mut mass = 0.0;
    let mut min_value = f64::INFINITY;
    for row in values {
        for (j, &h) in row.iter().enumerate() {
            mass += h * cell_width(x, j) * dv;
            min_value = min_value.min(h);
        }
    }
    (mass, min_value)
}

/// Solves for `H(tau, x, v; x0, v0)` on a log-ratio mesh (see [`Mesh::log_ratio`]).
pub fn solve_density(
    params: &ModelParams,
    mesh: &Mesh,
    x0: f64,
    v0: f64,
    rule: &GaussHermiteRule,
    cfg: &DensityConfig,
) -> Result<DensityField> {
    let start = Instant::now();
    let report = params.validate();
    if !report.is_valid() {
        return Err(Error::InvalidParams(report));
    }
    let x = mesh.s_nodes();
    let v = mesh.v_nodes();
    let (n_x, m_last) = (x.len(), mesh.m_var());
    if m_last < 2 {
        return Err(Error::InvalidMesh(
            "density needs at least two variance intervals".into(),
        ));
    }
    let outside = Error::SourceOutsideMesh { x0, v0 };
    if !(x0 > x[0] && x0 < x[n_x - 1] && v0 > 0.0 && v0 < mesh.v_max()) {
        return Err(outside);
    }
    let (js, ms) = (nearest(x, x0), mesh.nearest_v(v0));
    if js == 0 || js == n_x - 1 || ms == 0 || ms == m_last {
        return Err(outside);
    }

    let d_v = mesh.d_v();
    let op = LineOperator::new(params, rule, LineGeometry::LogRatio);
    let stencils: Vec<JumpStencil> = [
        (&params.jump1, JumpSign::Up),
        (&params.jump2, JumpSign::Down),
    ]
    .into_iter()
    .filter(|(spec, _)| spec.is_active())
    .map(|(spec, sign)| {
        JumpStencil::new(
            x,
            spec,
            sign,
            rule,
            JumpGeometry::Additive,
            OutOfRange::Zero,
        )
    })
    .collect();

    let mut h0 = vec![vec![0.0; n_x]; m_last + 1];
    h0[ms][js] = 1.0 / (cell_width(x, js) * d_v);
    let delta0: Vec<Vec<f64>> = h0.iter().map(|row| central_difference(x, row)).collect();
    let (mass, min_value) = diagnostics(&h0, x, d_v);
    let mut lines = vec![DensityLine {
        tau: 0.0,
        values: h0,
        delta: delta0,
        mass,
        min_value,
        outer_iterations: 0,
        inner_iterations: 0,
    }];

    let zero = vec![0.0; n_x];
    let mut cap_hits = 0;
    for n in 1..=mesh.n_time() {
        let prev = &lines[n - 1];
        let prev2 = if n >= 3 { Some(&lines[n - 2]) } else { None };
        let mut value = prev.values.clone();
        let mut delta = prev.delta.clone();
        let (mut outer_count, mut inner_total) = (0, 0);
        let mut capped = false;
        for _ in 0..cfg.max_outer {
            outer_count += 1;
            let jumps: Vec<Vec<f64>> = value
                .iter()
                .map(|row| {
                    let mut out = vec![0.0; n_x];
                    for st in &stencils {
                        st.accumulate(row, &mut out);
                    }
                    out
                })
                .collect();
            let outer_start = value.clone();
            let mut converged = false;
            for _ in 0..cfg.max_inner {
                inner_total += 1;
                let mut change = 0.0f64;
                let mut scale = 0.0f64;
                for m in 1..m_last {
                    let time = TimeStencil::new(
                        n,
                        mesh.d_tau(),
                        &prev.values[m],
                        prev2.map(|p| p.values[m].as_slice()),
                    )?;
                    let (above_v, above_d) = if m + 1 == m_last {
                        (zero.as_slice(), zero.as_slice())
                    } else {
                        (value[m + 1].as_slice(), delta[m + 1].as_slice())
                    };
                    let nb = Neighbors {
                        value_below: &value[m - 1],
                        delta_below: &delta[m - 1],
                        value_above: Some(above_v),
                        delta_above: Some(above_d),
                    };
                    let coeffs = assemble_interior(&op, x, v[m], d_v, &time, &nb, &jumps[m]);
                    let state = forward_sweep(&coeffs, x)?;
                    let sol = reverse_sweep_full(&state, &coeffs, x, RightBoundary::ZeroValue)?;
                    for (a, b) in sol.value.iter().zip(&value[m]) {
                        change = change.max((a - b).abs());
                        scale = scale.max(a.abs());
                    }
                    value[m] = sol.value;
                    delta[m] = sol.delta;
                }
                if change <= cfg.relative_tolerance * scale.max(f64::MIN_POSITIVE) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                capped = true;
            }
            if stencils.is_empty() {
                break;
            }
            let (mut change, mut scale) = (0.0f64, 0.0f64);
            for (ra, rb) in outer_start.iter().zip(&value) {
                for (a, b) in ra.iter().zip(rb) {
                    change = change.max((a - b).abs());
                    scale = scale.max(b.abs());
                }
            }
            if change <= cfg.relative_tolerance * scale.max(f64::MIN_POSITIVE) {
                break;
            }
            if outer_count == cfg.max_outer {
                capped = true;
            }
        }
        if capped {
            cap_hits += 1;
            log::warn!("density time step {n}: iteration cap reached");
        }
        let (mass, min_value) = diagnostics(&value, x, d_v);
        lines.push(DensityLine {
            tau: mesh.tau_nodes()[n],
            values: value,
            delta,
            mass,
            min_value,
            outer_iterations: outer_count,
            inner_iterations: inner_total,
        });
    }
    Ok(DensityField {
        x0,
        v0,
        source: (ms, js),
        x: x.to_vec(),
        v: v.to_vec(),
        lines,
        iteration_cap_hits: cap_hits,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::DEFAULT_ORDER;

    fn mesh(n: usize) -> Mesh {
        Mesh::log_ratio(n, 25, 0.1, 2.0, 5.0, 200).unwrap()
    }

    #[test]
    fn initial_mass_is_one() {
        let p = ModelParams::table1();
        let rule = GaussHermiteRule::new(DEFAULT_ORDER).unwrap();
        let f = solve_density(&p, &mesh(3), 0.0, 0.56, &rule, &DensityConfig::default()).unwrap();
        assert!((f.lines[0].mass - 1.0).abs() < 1e-14);
        assert_eq!(f.source, (7, 100));
    }

    #[test]
    fn source_outside_rejected() {
        let p = ModelParams::table1();
        let rule = GaussHermiteRule::new(DEFAULT_ORDER).unwrap();
        for (x0, v0) in [
            (6.0, 0.56),
            (0.0, 0.0),
            (0.0, 2.5),
            (-5.0, 0.5),
            (0.0, 1.99),
        ] {
            assert!(matches!(
                solve_density(&p, &mesh(3), x0, v0, &rule, &DensityConfig::default()),
                Err(Error::SourceOutsideMesh { .. })
            ));
        }
    }

    #[test]
    fn jumps_conserve_mass() {
        let rule = GaussHermiteRule::new(DEFAULT_ORDER).unwrap();
        let cfg = DensityConfig::default();
        let with =
            solve_density(&ModelParams::table1(), &mesh(10), 0.0, 0.56, &rule, &cfg).unwrap();
        let mut p = ModelParams::table1();
        p.jump1.intensity = 0.0;
        p.jump2.intensity = 0.0;
        let without = solve_density(&p, &mesh(10), 0.0, 0.56, &rule, &cfg).unwrap();
        assert_eq!(with.iteration_cap_hits, 0);
        for (a, b) in with.lines.iter().zip(&without.lines) {
            assert!(
                (a.mass - b.mass).abs() < 1e-4,
                "tau={} {} {}",
                a.tau,
                a.mass,
                b.mass
            );
            assert!(a.values.iter().flatten().all(|h| h.is_finite()));
        }
        for w in with.lines.windows(2) {
            assert!(w[1].mass >= w[0].mass - 1e-12);
        }
    }

    #[test]
    fn translation_equivariant() {
        let p = ModelParams::table1();
        let rule = GaussHermiteRule::new(DEFAULT_ORDER).unwrap();
        let cfg = DensityConfig::default();
        let base = mesh(5);
        let a = solve_density(&p, &base, 0.3, 0.56, &rule, &cfg).unwrap();
        let b = solve_density(&p, &base.shifted(0.75), 1.05, 0.56, &rule, &cfg).unwrap();
        assert_eq!(a.source, b.source);
        let mut worst = 0.0f64;
        for (la, lb) in a.lines.iter().zip(&b.lines) {
            for (ra, rb) in la.values.iter().zip(&lb.values) {
                for (x, y) in ra.iter().zip(rb) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{worst:e}");
    }

    #[test]
    fn pinned_variance_marginal_is_gaussian() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let mut p = ModelParams::table1();
        p.jump1.intensity = 0.0;
        p.jump2.intensity = 0.0;
        p.variance.omega = 1e-3;
        let tau = 0.05;
        let mesh = Mesh::log_ratio(20, 25, tau, 2.0, 1.0, 400).unwrap();
        let rule = GaussHermiteRule::new(DEFAULT_ORDER).unwrap();
        let v0 = p.variance.eta;
        let f = solve_density(&p, &mesh, 0.0, v0, &rule, &DensityConfig::default()).unwrap();
        let marginal = f.x_marginal();
        let total: f64 = (0..f.x.len())
            .map(|j| marginal[j] * cell_width(&f.x, j))
            .sum();
        let sig2 = p.effective_sigma_sq();
        // Generator drift of ln s without jumps; H is centred at x0 minus drift * tau.
        let drift = -0.5 * sig2 * v0;
        let normal = Normal::new(-drift * tau, (sig2 * v0 * tau).sqrt()).unwrap();
        let mut cdf = 0.0;
        let mut ks = 0.0f64;
        for j in 0..f.x.len() {
            cdf += marginal[j] * cell_width(&f.x, j) / total;
            let edge = if j + 1 < f.x.len() {
                0.5 * (f.x[j] + f.x[j + 1])
            } else {
                f.x[j]
            };
            ks = ks.max((cdf - normal.cdf(edge)).abs());
        }
        assert!(ks < 0.05, "KS distance {ks}");
    }
}
