//! Gauss-Hermite rules and the jump-term approximations built on them.
//!
//! With `Y ~ N(alpha, beta^2)` the substitution `y = sqrt(2) beta z + alpha`
//! turns `E[f(Y)]` into `pi^{-1/2} * int f(sqrt(2) beta z + alpha) e^{-z^2} dz`,
//! which an `L`-point rule evaluates as `pi^{-1/2} * sum_l w_l f(...)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::locate_in;
use crate::model::JumpSpec;

pub const DEFAULT_ORDER: usize = 20;
pub const MAX_ORDER: usize = 100;

/// Nodes and weights for `int f(z) e^{-z^2} dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Direction in which a jump moves the state: `+1` multiplies by `e^{Y}`,
/// `-1` by `e^{-Y}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpSign {
    Up,
    Down,
}

impl JumpSign {
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            JumpSign::Up => 1.0,
            JumpSign::Down => -1.0,
        }
    }
}

/// Evaluates the orthonormal Hermite polynomials `p_{n}` and `p_{n-1}` at `x`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 0.0;
    let mut p = PI.powf(-0.25);
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * p - (kf / (kf + 1.0)).sqrt() * p_prev;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

impl GaussHermiteRule {
    /// Golub-Welsch eigen-decomposition of the Jacobi matrix, followed by a
    /// Newton polish of every node and Christoffel-function weights.
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::QuadratureOrder(order));
        }
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let off = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = off;
            jacobi[(k, k - 1)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let n = order;
        for x in nodes.iter_mut() {
            for _ in 0..8 {
                let (p, p_prev) = orthonormal_hermite(n, *x);
                let dp = (2.0 * n as f64).sqrt() * p_prev;
                if dp == 0.0 {
                    break;
                }
                let step = p / dp;
                *x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        // exact antisymmetry of the node set
        for i in 0..n / 2 {
            let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -a;
            nodes[n - 1 - i] = a;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }

        let weights: Vec<f64> = nodes
            .iter()
            .map(|&x| {
                let mut sum = 0.0;
                let mut p_prev = 0.0;
                let mut p = PI.powf(-0.25);
                for k in 0..n {
                    sum += p * p;
                    let kf = k as f64;
                    let next =
                        (2.0 / (kf + 1.0)).sqrt() * x * p - (kf / (kf + 1.0)).sqrt() * p_prev;
                    p_prev = p;
                    p = next;
                }
                1.0 / sum
            })
            .collect();

        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `int f(z) e^{-z^2} dz`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// `E[f(Y)]` for `Y ~ N(mean, std^2)`.
    pub fn expect_normal(&self, mean: f64, std: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * std;
        self.integrate(|z| f(scale * z + mean)) / PI.sqrt()
    }

    /// Multiplicative jump factors `exp(sign * (sqrt(2) beta z_l + alpha))` paired
    /// with normalized weights `w_l / sqrt(pi)`.
    pub fn jump_factors(&self, spec: &JumpSpec, sign: JumpSign) -> Vec<(f64, f64)> {
        self.log_shifts(spec, sign)
            .into_iter()
            .map(|(shift, w)| (shift.exp(), w))
            .collect()
    }

    /// Additive log-shifts `sign * (sqrt(2) beta z_l + alpha)` with normalized weights.
    pub fn log_shifts(&self, spec: &JumpSpec, sign: JumpSign) -> Vec<(f64, f64)> {
        let scale = std::f64::consts::SQRT_2 * spec.std;
        let norm = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| (sign.factor() * (scale * z + spec.mean), w / norm))
            .collect()
    }
}

/// Quadrature estimate of `E[e^{sign*Y} - 1]`, `Y ~ N(alpha, beta^2)`.
pub fn jump_compensator(spec: &JumpSpec, sign: JumpSign, rule: &GaussHermiteRule) -> f64 {
    rule.expect_normal(spec.mean, spec.std, |y| (sign.factor() * y).exp()) - 1.0
}

/// `lambda1 * kappa1 + lambda2 * kappa2^-`, the drift correction of the yield ratio.
pub fn compensator_drift(jump1: &JumpSpec, jump2: &JumpSpec, rule: &GaussHermiteRule) -> f64 {
    let mut k = 0.0;
    if jump1.is_active() {
        k += jump1.intensity * jump_compensator(jump1, JumpSign::Up, rule);
    }
    if jump2.is_active() {
        k += jump2.intensity * jump_compensator(jump2, JumpSign::Down, rule);
    }
    k
}

/// `-lambda * E[f(s e^{sign*Y})]` by quadrature.
pub fn jump_integral(
    sampler: impl Fn(f64) -> f64,
    s: f64,
    spec: &JumpSpec,
    sign: JumpSign,
    rule: &GaussHermiteRule,
) -> f64 {
    if !spec.is_active() {
        return 0.0;
    }
    let e = rule.expect_normal(spec.mean, spec.std, |y| {
        sampler(s * (sign.factor() * y).exp())
    });
    -spec.intensity * e
}

/// How a [`LinearSampler`] treats queries beyond the node range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfRange {
    /// Linear extrapolation from the two end nodes.
    Linear,
    /// Zero outside the nodes.
    Zero,
}

/// Piecewise-linear reconstruction of nodal values.
#[derive(Debug, Clone, Copy)]
pub struct LinearSampler<'a> {
    pub nodes: &'a [f64],
    pub values: &'a [f64],
    pub out_of_range: OutOfRange,
}

impl<'a> LinearSampler<'a> {
    pub fn new(nodes: &'a [f64], values: &'a [f64], out_of_range: OutOfRange) -> Self {
        Self {
            nodes,
            values,
            out_of_range,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let loc = locate_in(self.nodes, x);
        if loc.extrapolated && self.out_of_range == OutOfRange::Zero {
            return 0.0;
        }
        loc.interpolate(self.values)
    }
}

/// Precomputed linear-interpolation weights of one jump integral on a fixed
/// node set, so that `I(x_j) = sum_k weight_k * values[index_k]`.
#[derive(Debug, Clone)]
pub struct JumpStencil {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
    extrapolated: usize,
    evaluations: usize,
}

/// How the stencil maps nodes: multiplicatively (`s e^{y}`) or additively (`x + y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpGeometry {
    Multiplicative,
    Additive,
}

impl JumpStencil {
    pub fn new(
        nodes: &[f64],
        spec: &JumpSpec,
        sign: JumpSign,
        rule: &GaussHermiteRule,
        geometry: JumpGeometry,
        out_of_range: OutOfRange,
    ) -> Self {
        let shifts = if spec.is_active() {
            rule.log_shifts(spec, sign)
        } else {
            Vec::new()
        };
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        let mut extrapolated = 0;
        let mut evaluations = 0;
        offsets.push(0);
        for &x in nodes {
            for &(shift, w) in &shifts {
                let target = match geometry {
                    JumpGeometry::Multiplicative => x * shift.exp(),
                    JumpGeometry::Additive => x + shift,
                };
                let loc = locate_in(nodes, target);
                evaluations += 1;
                if loc.extrapolated {
                    extrapolated += 1;
                    if out_of_range == OutOfRange::Zero {
                        continue;
                    }
                }
                let c = -spec.intensity * w;
                indices.push(loc.index as u32);
                weights.push(c * (1.0 - loc.weight));
                indices.push(loc.index as u32 + 1);
                weights.push(c * loc.weight);
            }
            offsets.push(indices.len());
        }
        Self {
            offsets,
            indices,
            weights,
            extrapolated,
            evaluations,
        }
    }

    /// Applies the stencil at node `j`.
    #[inline]
    pub fn apply_at(&self, j: usize, values: &[f64]) -> f64 {
        let (a, b) = (self.offsets[j], self.offsets[j + 1]);
        self.indices[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&i, &w)| w * values[i as usize])
            .sum()
    }

    /// Adds the stencil applied to `values` into `out`.
    pub fn accumulate(&self, values: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += self.apply_at(j, values);
        }
    }

    /// Fraction of quadrature abscissas that fell outside the node range.
    pub fn extrapolated_fraction(&self) -> f64 {
        if self.evaluations == 0 {
            0.0
        } else {
            self.extrapolated as f64 / self.evaluations as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sqrt_pi() -> f64 {
        PI.sqrt()
    }

    #[test]
    fn order_one_and_two() {
        let r1 = GaussHermiteRule::new(1).unwrap();
        assert_eq!(r1.nodes(), &[0.0]);
        assert_abs_diff_eq!(r1.weights()[0], sqrt_pi(), epsilon = 1e-14);

        let r2 = GaussHermiteRule::new(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(r2.nodes()[0], -h, epsilon = 1e-14);
        assert_abs_diff_eq!(r2.nodes()[1], h, epsilon = 1e-14);
        for &w in r2.weights() {
            assert_abs_diff_eq!(w, sqrt_pi() / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn order_three_known_roots() {
        // H_3 roots are 0 and +-sqrt(3/2); weights sqrt(pi)*{1/6, 2/3, 1/6}
        let r = GaussHermiteRule::new(3).unwrap();
        assert_abs_diff_eq!(r.nodes()[2], 1.5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.weights()[1], sqrt_pi() * 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.weights()[0], sqrt_pi() / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(
            GaussHermiteRule::new(0),
            Err(Error::QuadratureOrder(0))
        ));
        assert!(GaussHermiteRule::new(101).is_err());
        assert!(GaussHermiteRule::new(100).is_ok());
    }

    #[test]
    fn second_moment_order_20() {
        let r = GaussHermiteRule::new(20).unwrap();
        let m2 = r.integrate(|z| z * z);
        assert_abs_diff_eq!(m2, sqrt_pi() / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn rule_invariants_all_orders() {
        for order in 1..=MAX_ORDER {
            let r = GaussHermiteRule::new(order).unwrap();
            let total: f64 = r.weights().iter().sum();
            assert!(
                (total - sqrt_pi()).abs() < 1e-12,
                "order {order}: sum {total}"
            );
            assert!(r.weights().iter().all(|&w| w > 0.0), "order {order}");
            let n = r.order();
            for i in 0..n {
                assert!((r.nodes()[i] + r.nodes()[n - 1 - i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2l_minus_1() {
        // int z^{2k} e^{-z^2} = Gamma(k + 1/2) = (2k-1)!! sqrt(pi) / 2^k
        for order in [5usize, 10, 20, 40] {
            let r = GaussHermiteRule::new(order).unwrap();
            let mut exact = sqrt_pi();
            for k in 0..order {
                let deg = 2 * k;
                let got = r.integrate(|z| z.powi(deg as i32));
                assert!(
                    ((got - exact) / exact).abs() < 1e-10,
                    "order {order} degree {deg}: {got} vs {exact}"
                );
                let odd = r.integrate(|z| z.powi(deg as i32 + 1));
                assert!(odd.abs() < 1e-10 * exact.max(1.0));
                exact *= (2 * k + 1) as f64 / 2.0;
            }
        }
    }

    #[test]
    fn compensator_matches_closed_form() {
        let rule = GaussHermiteRule::new(20).unwrap();
        let spec = JumpSpec::new(5.0, 0.0, 0.2);
        let up = jump_compensator(&spec, JumpSign::Up, &rule);
        assert_abs_diff_eq!(up, 0.02020134, epsilon = 1e-8);
        let down = jump_compensator(&spec, JumpSign::Down, &rule);
        assert_abs_diff_eq!(down, 0.02020134, epsilon = 1e-8);

        let degenerate = JumpSpec::new(1.0, 0.3, 0.0);
        assert_abs_diff_eq!(
            jump_compensator(&degenerate, JumpSign::Up, &rule),
            0.3f64.exp() - 1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn jump_integral_examples() {
        let rule = GaussHermiteRule::new(20).unwrap();
        let none = JumpSpec::new(0.0, 0.0, 0.2);
        assert_eq!(
            jump_integral(|u| u * u, 1.3, &none, JumpSign::Up, &rule),
            0.0
        );

        let spec = JumpSpec::new(5.0, 0.0, 0.2);
        let c = jump_integral(|_| 1.0, 2.7, &spec, JumpSign::Down, &rule);
        assert_abs_diff_eq!(c, -5.0, epsilon = 1e-10);

        let lin = jump_integral(|u| u, 1.0, &spec, JumpSign::Up, &rule);
        assert_abs_diff_eq!(lin, -5.0 * 0.02f64.exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(lin, -5.1010, epsilon = 1e-4);
    }

    #[test]
    fn stencil_agrees_with_direct_integral() {
        let rule = GaussHermiteRule::new(20).unwrap();
        let spec = JumpSpec::new(2.0, 0.1, 0.3);
        let nodes: Vec<f64> = (0..=80).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = nodes
            .iter()
            .map(|&s| (s - 1.0).max(0.0).powf(1.5))
            .collect();
        let stencil = JumpStencil::new(
            &nodes,
            &spec,
            JumpSign::Down,
            &rule,
            JumpGeometry::Multiplicative,
            OutOfRange::Linear,
        );
        let sampler = LinearSampler::new(&nodes, &values, OutOfRange::Linear);
        for j in [0usize, 7, 20, 55, 80] {
            let direct = jump_integral(|u| sampler.eval(u), nodes[j], &spec, JumpSign::Down, &rule);
            assert_abs_diff_eq!(stencil.apply_at(j, &values), direct, epsilon = 1e-12);
        }
        assert!(stencil.extrapolated_fraction() > 0.0);
    }

    proptest! {
        #[test]
        fn quadratic_samplers_match_lognormal_moments(
            c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0,
            alpha in -0.3f64..0.3, beta in 0.01f64..0.5, s in 0.1f64..4.0,
            lambda in 0.0f64..6.0, order in 8usize..30, up in any::<bool>()
        ) {
            let rule = GaussHermiteRule::new(order).unwrap();
            let spec = JumpSpec::new(lambda, alpha, beta);
            let sign = if up { JumpSign::Up } else { JumpSign::Down };
            let got = jump_integral(|u| c0 + c1 * u + c2 * u * u, s, &spec, sign, &rule);
            let sg = sign.factor();
            // E[e^{k sign Y}] = exp(k sign alpha + k^2 beta^2 / 2)
            let m = |k: f64| (k * sg * alpha + 0.5 * k * k * beta * beta).exp();
            let exact = -lambda * (c0 + c1 * s * m(1.0) + c2 * s * s * m(2.0));
            prop_assert!((got - exact).abs() < 1e-8 * exact.abs().max(1.0));
        }

        #[test]
        fn jump_integral_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0.1f64..4.0) {
            let rule = GaussHermiteRule::new(20).unwrap();
            let spec = JumpSpec::new(3.0, 0.05, 0.25);
            let f = |u: f64| (u - 1.0).max(0.0);
            let g = |u: f64| u.sqrt();
            let lhs = jump_integral(|u| a * f(u) + b * g(u), s, &spec, JumpSign::Up, &rule);
            let rhs = a * jump_integral(f, s, &spec, JumpSign::Up, &rule)
                + b * jump_integral(g, s, &spec, JumpSign::Up, &rule);
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
