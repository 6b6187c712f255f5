//! Closed-form exchange option value for the constant-volatility, jump-free
//! limit, in units of the second asset.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MargrabeInputs {
    pub q1: f64,
    pub q2: f64,
    pub sigma_eff: f64,
    /// Time to maturity.
    pub tau: f64,
}

impl MargrabeInputs {
    /// Constant-volatility reduction: each asset volatility is `sigma_i * sqrt(eta)`.
    pub fn from_params(params: &ModelParams, tau: f64) -> Self {
        Self {
            q1: params.q1,
            q2: params.q2,
            sigma_eff: (params.effective_sigma_sq() * params.variance.eta).sqrt(),
            tau,
        }
    }
}

pub fn margrabe_price(s: f64, inp: &MargrabeInputs) -> f64 {
    if inp.tau <= 0.0 {
        return (s - 1.0).max(0.0);
    }
    let df1 = (-inp.q1 * inp.tau).exp();
    let df2 = (-inp.q2 * inp.tau).exp();
    if s <= 0.0 {
        return 0.0;
    }
    let vol = inp.sigma_eff * inp.tau.sqrt();
    if vol <= 0.0 {
        return (df1 * s - df2).max(0.0);
    }
    let n = Normal::standard();
    let d1 = ((s.ln() + (inp.q2 - inp.q1) * inp.tau) + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    df1 * s * n.cdf(d1) - df2 * n.cdf(d2)
}

/// Analytic `dV/ds = e^{-q1 tau} N(d1)`.
pub fn margrabe_delta(s: f64, inp: &MargrabeInputs) -> f64 {
    let df1 = (-inp.q1 * inp.tau).exp();
    if inp.tau <= 0.0 {
        return if s > 1.0 { 1.0 } else { 0.0 };
    }
    let vol = inp.sigma_eff * inp.tau.sqrt();
    if vol <= 0.0 {
        let df2 = (-inp.q2 * inp.tau).exp();
        return if df1 * s > df2 { df1 } else { 0.0 };
    }
    if s <= 0.0 {
        return 0.0;
    }
    let d1 = ((s.ln() + (inp.q2 - inp.q1) * inp.tau) + 0.5 * vol * vol) / vol;
    df1 * Normal::standard().cdf(d1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inputs(q1: f64, q2: f64, sigma_eff: f64, tau: f64) -> MargrabeInputs {
        MargrabeInputs {
            q1,
            q2,
            sigma_eff,
            tau,
        }
    }

    #[test]
    fn at_the_money_symmetric() {
        // 2 N(0.1) - 1 from the error function.
        let expected = statrs::function::erf::erf(0.1 / std::f64::consts::SQRT_2);
        let v = margrabe_price(1.0, &inputs(0.0, 0.0, 0.2, 1.0));
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.0797, epsilon = 5e-5);
    }

    #[test]
    fn zero_vol_is_forward_intrinsic() {
        let inp = inputs(0.05, 0.03, 0.0, 0.5);
        let v = margrabe_price(2.0, &inp);
        assert_abs_diff_eq!(
            v,
            (-0.025f64).exp() * 2.0 - (-0.015f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(margrabe_price(0.5, &inp), 0.0);
        let tiny = margrabe_price(2.0, &inputs(0.05, 0.03, 1e-9, 0.5));
        assert_abs_diff_eq!(tiny, v, epsilon = 1e-12);
    }

    #[test]
    fn expired_is_intrinsic() {
        assert_abs_diff_eq!(
            margrabe_price(1.7, &inputs(0.05, 0.03, 0.3, 0.0)),
            0.7,
            epsilon = 1e-15
        );
        assert_eq!(margrabe_price(0.7, &inputs(0.05, 0.03, 0.3, -1.0)), 0.0);
    }

    #[test]
    fn reduction_from_table1() {
        let inp = MargrabeInputs::from_params(&ModelParams::table1(), 0.5);
        assert_abs_diff_eq!(inp.sigma_eff, (0.25f64 * 0.56).sqrt(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded_delta(
            s in 0.2f64..4.0,
            sig in 0.01f64..1.0,
            q1 in 0.0f64..0.1,
            q2 in 0.0f64..0.1,
            tau in 0.05f64..2.0,
        ) {
            let inp = inputs(q1, q2, sig, tau);
            let h = 1e-5;
            let up = margrabe_price(s + h, &inp);
            let dn = margrabe_price(s - h, &inp);
            let fd = (up - dn) / (2.0 * h);
            let cap = (-q1 * tau).exp();
            prop_assert!(fd >= -1e-8 && fd <= cap + 1e-8);
            prop_assert!((fd - margrabe_delta(s, &inp)).abs() < 1e-6);
            let wider = margrabe_price(s, &inputs(q1, q2, sig + 0.05, tau));
            prop_assert!(wider >= margrabe_price(s, &inp) - 1e-14);
            prop_assert!(margrabe_price(s, &inp) >= (cap * s - (-q2 * tau).exp()).max(0.0) - 1e-12);
        }
    }
}
