//! Least-squares Monte Carlo (Longstaff-Schwartz) for the American exchange
//! option under the full stochastic-volatility jump-diffusion.
//!
//! Values are measured in units of the second asset yield process, in which
//! the exercise value at time `t` is `e^{-q1 t} (s - e^{(q1 - q2) t})^+` and
//! needs no further discounting. Paths come in antithetic pairs that share
//! their Poisson jump counts and negate every Gaussian draw. Each pair owns a
//! ChaCha stream keyed by its index, so results do not depend on the thread
//! count. Regression sums are accumulated pair by pair, which makes the
//! estimate invariant (bit for bit) under swapping the members of each pair.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{JumpSpec, ModelParams};

/// Regression functions of the state `(s, v)`: powers `s^1..s^s_degree`,
/// `v^1..v^v_degree`, optionally `s*v` and the exercise value, plus a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BasisSpec {
    pub s_degree: u8,
    pub v_degree: u8,
    pub cross: bool,
    pub payoff: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            s_degree: 3,
            v_degree: 2,
            cross: true,
            payoff: false,
        }
    }
}

impl BasisSpec {
    pub fn len(&self) -> usize {
        1 + self.s_degree as usize
            + self.v_degree as usize
            + self.cross as usize
            + self.payoff as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn fill(&self, s: f64, v: f64, exercise: f64, out: &mut [f64]) {
        out[0] = 1.0;
        let mut k = 1;
        let mut p = 1.0;
        for _ in 0..self.s_degree {
            p *= s;
            out[k] = p;
            k += 1;
        }
        p = 1.0;
        for _ in 0..self.v_degree {
            p *= v;
            out[k] = p;
            k += 1;
        }
        if self.cross {
            out[k] = s * v;
            k += 1;
        }
        if self.payoff {
            out[k] = exercise;
        }
    }

    /// Next smaller basis, dropping the payoff, then the cross term, then degrees.
    fn reduced(&self) -> Option<Self> {
        let mut b = *self;
        if b.payoff {
            b.payoff = false;
        } else if b.cross {
            b.cross = false;
        } else if b.v_degree > 0 {
            b.v_degree -= 1;
        } else if b.s_degree > 0 {
            b.s_degree -= 1;
        } else {
            return None;
        }
        Some(b)
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s:{},v:{}", self.s_degree, self.v_degree)?;
        if self.cross {
            f.write_str(",sv")?;
        }
        if self.payoff {
            f.write_str(",payoff")?;
        }
        Ok(())
    }
}

/// Parses `s:3,v:2,sv,payoff`; omitted items are off (degrees default to 0).
impl FromStr for BasisSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut b = BasisSpec {
            s_degree: 0,
            v_degree: 0,
            cross: false,
            payoff: false,
        };
        let bad = |item: &str| Error::McConfig(format!("bad basis item `{item}`"));
        for item in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match item {
                "sv" => b.cross = true,
                "payoff" => b.payoff = true,
                _ => {
                    let (key, deg) = item.split_once(':').ok_or_else(|| bad(item))?;
                    let deg: u8 = deg.trim().parse().map_err(|_| bad(item))?;
                    if deg > 6 {
                        return Err(bad(item));
                    }
                    match key.trim() {
                        "s" => b.s_degree = deg,
                        "v" => b.v_degree = deg,
                        _ => return Err(bad(item)),
                    }
                }
            }
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub basis: BasisSpec,
    /// Monetary scale of the second asset at `t = 0`.
    pub s2_0: f64,
    pub antithetic: bool,
    /// Swaps the roles of the two members of each antithetic pair.
    pub flip_antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 10_000,
            steps: 1000,
            seed: 20_240_601,
            basis: BasisSpec::default(),
            s2_0: 1.0,
            antithetic: true,
            flip_antithetic: false,
        }
    }
}

impl McConfig {
    fn check(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::McConfig(format!(
                "steps = {} must be at least 2",
                self.steps
            )));
        }
        if self.paths < 2 {
            return Err(Error::McConfig(format!(
                "paths = {} must be at least 2",
                self.paths
            )));
        }
        if self.antithetic && !self.paths.is_multiple_of(2) {
            return Err(Error::McConfig(format!(
                "paths = {} must be even for antithetic pairs",
                self.paths
            )));
        }
        if !(self.s2_0 > 0.0 && self.s2_0.is_finite()) {
            return Err(Error::McConfig(format!(
                "S2(0) = {} must be positive",
                self.s2_0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Smallest basis any exercise date fell back to.
    pub basis: BasisSpec,
    /// Exercise dates whose regression needed a reduced basis.
    pub reduced_dates: usize,
    pub wall_time_s: f64,
}

impl McEstimate {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

const Z_95: f64 = 1.96;

/// One group of paths sharing a stream: a pair, or a single path.
struct Group {
    s: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

struct Dynamics {
    drift_comp: f64,
    sigma: f64,
    rho: f64,
    rho_perp: f64,
    xi_eta: f64,
    kappa: f64,
    omega: f64,
    jumps: [(Option<Poisson<f64>>, JumpSpec, f64); 2],
}

impl Dynamics {
    fn new(params: &ModelParams, dt: f64) -> Result<Self> {
        let j1 = params.jump1;
        let j2 = params.jump2;
        let k1 = (j1.mean + 0.5 * j1.std * j1.std).exp() - 1.0;
        let k2 = (-j2.mean + 0.5 * j2.std * j2.std).exp() - 1.0;
        let poisson = |spec: &JumpSpec| -> Result<Option<Poisson<f64>>> {
            if spec.intensity > 0.0 {
                Poisson::new(spec.intensity * dt)
                    .map(Some)
                    .map_err(|e| Error::McConfig(format!("jump intensity: {e}")))
            } else {
                Ok(None)
            }
        };
        let rho = params.ratio_variance_correlation();
        Ok(Self {
            drift_comp: j1.intensity * k1 + j2.intensity * k2,
            sigma: params.effective_sigma(),
            rho,
            rho_perp: (1.0 - rho * rho).max(0.0).sqrt(),
            xi_eta: params.variance.xi * params.variance.eta,
            kappa: params.variance.xi + params.variance.lambda,
            omega: params.variance.omega,
            jumps: [(poisson(&j1)?, j1, 1.0), (poisson(&j2)?, j2, -1.0)],
        })
    }
}

fn simulate_group(
    dynamics: &Dynamics,
    s0: f64,
    v0: f64,
    cfg: &McConfig,
    dt: f64,
    stream: u64,
) -> Group {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let members = if cfg.antithetic { 2 } else { 1 };
    let signs: [f64; 2] = if cfg.flip_antithetic {
        [-1.0, 1.0]
    } else {
        [1.0, -1.0]
    };
    let n = cfg.steps;
    let mut s = vec![Vec::with_capacity(n + 1); members];
    let mut v = vec![Vec::with_capacity(n + 1); members];
    let mut x = vec![s0.ln(); members];
    let mut var = vec![v0; members];
    for i in 0..members {
        s[i].push(s0 as f32);
        v[i].push(v0 as f32);
    }
    let sqrt_dt = dt.sqrt();
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let mut jump_shift = [0.0f64; 2];
        for (poisson, spec, sign) in &dynamics.jumps {
            if let Some(p) = poisson {
                let count = p.sample(&mut rng) as usize;
                for _ in 0..count {
                    let z: f64 = rng.sample(StandardNormal);
                    for (shift, e) in jump_shift.iter_mut().zip(signs) {
                        *shift += sign * (spec.mean + spec.std * e * z);
                    }
                }
            }
        }
        for i in 0..members {
            let e = signs[i];
            let vp = var[i].max(0.0);
            let w_s = e * z1;
            let w_v = dynamics.rho * w_s + dynamics.rho_perp * e * z2;
            x[i] += (-dynamics.drift_comp - 0.5 * dynamics.sigma * dynamics.sigma * vp) * dt
                + dynamics.sigma * vp.sqrt() * sqrt_dt * w_s
                + jump_shift[i];
            var[i] = (var[i]
                + (dynamics.xi_eta - dynamics.kappa * vp) * dt
                + dynamics.omega * vp.sqrt() * sqrt_dt * w_v)
                .max(0.0);
            s[i].push(x[i].exp() as f32);
            v[i].push(var[i] as f32);
        }
    }
    Group { s, v }
}

fn exercise_value(params: &ModelParams, t: f64, s: f64) -> f64 {
    ((-params.q1 * t).exp() * (s - ((params.q1 - params.q2) * t).exp())).max(0.0)
}

/// Least squares through the Gram matrix with Jacobi scaling; `None` when the
/// scaled Gram matrix is numerically rank deficient.
fn solve_normal(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = gram.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = gram[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if scale.contains(&0.0) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let b = DVector::from_fn(n, |i, _| rhs[i] * scale[i]);
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-11 * smax;
    if svd.singular_values.iter().any(|&sv| sv <= tol) {
        return None;
    }
    let y = svd.solve(&b, tol).ok()?;
    Some(DVector::from_fn(n, |i, _| y[i] * scale[i]))
}

pub fn lsmc_price(params: &ModelParams, s0: f64, v0: f64, cfg: &McConfig) -> Result<McEstimate> {
    let start = Instant::now();
    let report = params.validate();
    if !report.is_valid() {
        return Err(Error::InvalidParams(report));
    }
    cfg.check()?;
    if !(s0 > 0.0 && v0 > 0.0) {
        return Err(Error::McConfig(format!(
            "initial state ({s0}, {v0}) must be positive"
        )));
    }
    let dt = params.maturity / cfg.steps as f64;
    let dynamics = Dynamics::new(params, dt)?;
    let members = if cfg.antithetic { 2 } else { 1 };
    let n_groups = cfg.paths / members;

    let groups: Vec<Group> = (0..n_groups)
        .into_par_iter()
        .map(|g| simulate_group(&dynamics, s0, v0, cfg, dt, g as u64))
        .collect();

    // Realized value of each path under the current policy, grouped like the paths.
    let n = cfg.steps;
    let t_end = params.maturity;
    let mut cash: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            g.s.iter()
                .map(|p| exercise_value(params, t_end, p[n] as f64))
                .collect()
        })
        .collect();

    let mut smallest = cfg.basis;
    let mut reduced_dates = 0;
    let mut row = vec![0.0; cfg.basis.len()];
    for k in (1..n).rev() {
        let t = k as f64 * dt;
        let mut basis = cfg.basis;
        let coef = loop {
            let nb = basis.len();
            row.resize(nb, 0.0);
            let mut gram = DMatrix::<f64>::zeros(nb, nb);
            let mut rhs = DVector::<f64>::zeros(nb);
            let mut itm = 0usize;
            for (g, c) in groups.iter().zip(&cash) {
                let mut pair_gram = DMatrix::<f64>::zeros(nb, nb);
                let mut pair_rhs = DVector::<f64>::zeros(nb);
                let mut any = false;
                for i in 0..members {
                    let s = g.s[i][k] as f64;
                    let ex = exercise_value(params, t, s);
                    if ex <= 0.0 {
                        continue;
                    }
                    any = true;
                    itm += 1;
                    basis.fill(s, g.v[i][k] as f64, ex, &mut row);
                    for a in 0..nb {
                        pair_rhs[a] += row[a] * c[i];
                        for b in 0..nb {
                            pair_gram[(a, b)] += row[a] * row[b];
                        }
                    }
                }
                if any {
                    gram += pair_gram;
                    rhs += pair_rhs;
                }
            }
            if itm == 0 {
                break None;
            }
            if itm >= nb {
                if let Some(beta) = solve_normal(&gram, &rhs) {
                    break Some(beta);
                }
            }
            match basis.reduced() {
                Some(b) => {
                    log::debug!("exercise date {k}: basis {basis} rank deficient, trying {b}");
                    basis = b;
                }
                None => break None,
            }
        };
        if basis != cfg.basis {
            reduced_dates += 1;
            if basis.len() < smallest.len() {
                smallest = basis;
            }
        }
        let Some(beta) = coef else { continue };
        let nb = basis.len();
        row.resize(nb, 0.0);
        for (g, c) in groups.iter().zip(cash.iter_mut()) {
            for i in 0..members {
                let s = g.s[i][k] as f64;
                let ex = exercise_value(params, t, s);
                if ex <= 0.0 {
                    continue;
                }
                basis.fill(s, g.v[i][k] as f64, ex, &mut row);
                let cont: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
                if ex >= cont {
                    c[i] = ex;
                }
            }
        }
    }

    if reduced_dates > 0 {
        log::warn!(
            "regression rank deficient at {reduced_dates} exercise dates; basis reduced down to {smallest}"
        );
    }
    let group_means: Vec<f64> = cash
        .iter()
        .map(|c| {
            if members == 2 {
                0.5 * (c[0] + c[1])
            } else {
                c[0]
            }
        })
        .collect();
    let m = group_means.len() as f64;
    let mean = group_means.iter().sum::<f64>() / m;
    let var = group_means
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / (m - 1.0);
    let se = (var / m).sqrt() * cfg.s2_0;
    let price = mean.max(exercise_value(params, 0.0, s0)) * cfg.s2_0;
    Ok(McEstimate {
        price,
        std_error: se,
        ci_low: price - Z_95 * se,
        ci_high: price + Z_95 * se,
        basis: smallest,
        reduced_dates,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
