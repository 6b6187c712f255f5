//! Limit of the normalized early exercise boundary `B(tau, v)` as `tau -> 0`.
//!
//! The limit is `max{1, x*}` where `x*` is the unique positive root of
//!
//! ```text
//! f(x) = q2 + l1 P[Y1 < -ln x] + l2 P[Y2 > ln x]
//!          - x (q1 + l1 E[e^{Y1}; Y1 < -ln x] + l2 E[e^{-Y2}; Y2 > ln x]).
//! ```
//!
//! For normal log-jumps every truncated moment has a closed form, so no
//! quadrature enters the root. The derivative simplifies to
//! `f'(x) = -(q1 + l1 E[..] + l2 E[..]) < 0` because the boundary terms of
//! the truncated integrals cancel pairwise.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{JumpSpec, ModelParams};

const X_LOW: f64 = 1e-8;
const F_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryLimit {
    Finite {
        x_star: f64,
        b_limit: f64,
        continuous_at_maturity: bool,
    },
    /// `q1 = 0`: the boundary diverges and early exercise is never optimal.
    NoEarlyExercise,
}

impl BoundaryLimit {
    pub fn b_limit(&self) -> Option<f64> {
        match *self {
            BoundaryLimit::Finite { b_limit, .. } => Some(b_limit),
            BoundaryLimit::NoEarlyExercise => None,
        }
    }

    /// `A(0+, v) = b_limit * e^{(q1 - q2) T}` in yield-ratio units.
    pub fn a_at_maturity(&self, params: &ModelParams) -> Option<f64> {
        self.b_limit()
            .map(|b| b * ((params.q1 - params.q2) * params.maturity).exp())
    }
}

/// Which jump leg an intensity sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpLeg {
    First,
    Second,
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `(P[Y1 < -u], E[e^{Y1}; Y1 < -u])` for `Y1 ~ N(alpha, beta^2)`.
fn lower_tail(spec: &JumpSpec, u: f64, n: &Normal) -> (f64, f64) {
    if spec.std > 0.0 {
        let (a, b) = (spec.mean, spec.std);
        let p = n.cdf((-u - a) / b);
        let m = (a + 0.5 * b * b).exp() * n.cdf((-u - a - b * b) / b);
        (p, m)
    } else if spec.mean < -u {
        (1.0, spec.mean.exp())
    } else {
        (0.0, 0.0)
    }
}

/// `(P[Y2 > u], E[e^{-Y2}; Y2 > u])` for `Y2 ~ N(alpha, beta^2)`.
fn upper_tail(spec: &JumpSpec, u: f64, n: &Normal) -> (f64, f64) {
    if spec.std > 0.0 {
        let (a, b) = (spec.mean, spec.std);
        let p = n.cdf((a - u) / b);
        let m = (-a + 0.5 * b * b).exp() * n.cdf((a - b * b - u) / b);
        (p, m)
    } else if spec.mean > u {
        (1.0, (-spec.mean).exp())
    } else {
        (0.0, 0.0)
    }
}

/// Returns `(f(x), f'(x))`.
pub fn limit_function(params: &ModelParams, x: f64) -> (f64, f64) {
    let n = std_normal();
    let u = x.ln();
    let mut constant = params.q2;
    let mut slope = params.q1;
    if params.jump1.is_active() {
        let (p, m) = lower_tail(&params.jump1, u, &n);
        constant += params.jump1.intensity * p;
        slope += params.jump1.intensity * m;
    }
    if params.jump2.is_active() {
        let (p, m) = upper_tail(&params.jump2, u, &n);
        constant += params.jump2.intensity * p;
        slope += params.jump2.intensity * m;
    }
    (constant - x * slope, -slope)
}

pub fn boundary_limit(params: &ModelParams) -> BoundaryLimit {
    if params.q1 == 0.0 {
        return BoundaryLimit::NoEarlyExercise;
    }
    let f = |x: f64| limit_function(params, x);

    let x_star = if f(X_LOW).0 <= 0.0 {
        0.0
    } else {
        let mut lo = X_LOW;
        let mut hi = 1.0;
        while f(hi).0 >= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return BoundaryLimit::NoEarlyExercise;
            }
        }
        solve_bracketed(&f, lo, hi)
    };
    let b_limit = x_star.max(1.0);
    BoundaryLimit::Finite {
        x_star,
        b_limit,
        continuous_at_maturity: x_star <= 1.0,
    }
}

/// Bisection until the bracket is tight, then safeguarded Newton.
fn solve_bracketed(f: &impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (fm, _) = f(mid);
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let (fx, dfx) = f(x);
        if fx.abs() <= F_TOL * 1e-3 {
            break;
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    x
}

/// `b_limit` along a sorted grid of intensities for one jump leg.
pub fn intensity_sweep(params: &ModelParams, leg: JumpLeg, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&intensity| {
            let mut p = *params;
            match leg {
                JumpLeg::First => p.jump1.intensity = intensity,
                JumpLeg::Second => p.jump2.intensity = intensity,
            }
            boundary_limit(&p).b_limit().ok_or(Error::NoEarlyExercise)
        })
        .collect()
}

/// `b_limit` for each `lambda1` in `intensity_grid`.
pub fn boundary_limit_monotonicity_check(
    params: &ModelParams,
    intensity_grid: &[f64],
) -> Result<Vec<f64>> {
    intensity_sweep(params, JumpLeg::First, intensity_grid)
}
