//! Model constants under the measure induced by the second asset's yield
//! process, plus their admissibility checks.
//!
//! All quantities here are already expressed under that measure: jump
//! intensities and jump-size laws are the transformed ones, and the variance
//! drift carries the market price of volatility risk `Lambda`. The risk-free
//! rate never enters the transformed pricing equation and is therefore absent.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compound-Poisson jump component with normally distributed log-jump sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    /// Arrival rate (events per year).
    pub intensity: f64,
    /// Mean of the log-jump size.
    pub mean: f64,
    /// Standard deviation of the log-jump size.
    pub std: f64,
}

impl JumpSpec {
    pub const NONE: JumpSpec = JumpSpec {
        intensity: 0.0,
        mean: 0.0,
        std: 0.0,
    };

    pub fn new(intensity: f64, mean: f64, std: f64) -> Self {
        Self {
            intensity,
            mean,
            std,
        }
    }

    pub fn is_active(&self) -> bool {
        self.intensity > 0.0
    }
}

/// Square-root variance process `dv = [xi*eta - (xi+Lambda) v] dt + omega sqrt(v) dZ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceParams {
    pub xi: f64,
    pub eta: f64,
    pub omega: f64,
    pub lambda: f64,
}

impl VarianceParams {
    /// Drift of the variance process at level `v`.
    #[inline]
    pub fn drift(&self, v: f64) -> f64 {
        self.xi * self.eta - (self.xi + self.lambda) * v
    }

    pub fn feller_holds(&self) -> bool {
        2.0 * self.xi * self.eta >= self.omega * self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q1: f64,
    pub q2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho_w: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub variance: VarianceParams,
    pub jump1: JumpSpec,
    pub jump2: JumpSpec,
    /// Maturity in years.
    pub maturity: f64,
}

/// Names accepted by [`ModelParams::set`] and the config loader.
pub const PARAM_KEYS: [&str; 18] = [
    "q1", "q2", "sigma1", "sigma2", "rho_w", "xi", "eta", "Lambda", "omega", "rho1", "rho2",
    "lambda1", "beta_j1", "alpha_j1", "lambda2", "beta_j2", "alpha_j2", "T",
];

impl ModelParams {
    /// The reference parameter set used throughout the numerical experiments.
    pub fn table1() -> Self {
        Self {
            q1: 0.05,
            q2: 0.03,
            sigma1: 0.5,
            sigma2: 0.5,
            rho_w: 0.5,
            rho1: 0.5,
            rho2: 0.05,
            variance: VarianceParams {
                xi: 2.0,
                eta: 0.56,
                omega: 0.4,
                lambda: 0.0,
            },
            jump1: JumpSpec::new(5.0, 0.0, 0.2),
            jump2: JumpSpec::new(2.0, 0.0, 0.2),
            maturity: 0.5,
        }
    }

    /// Squared volatility of the yield ratio per unit variance.
    pub fn effective_sigma_sq(&self) -> f64 {
        let s = self.sigma1 * self.sigma1 + self.sigma2 * self.sigma2
            - 2.0 * self.rho_w * self.sigma1 * self.sigma2;
        s.max(0.0)
    }

    pub fn effective_sigma(&self) -> f64 {
        self.effective_sigma_sq().sqrt()
    }

    /// `sigma1*rho1 - sigma2*rho2`; scales the mixed `s`-`v` derivative.
    pub fn cross_vol_coefficient(&self) -> f64 {
        self.sigma1 * self.rho1 - self.sigma2 * self.rho2
    }

    /// Instantaneous correlation between the yield-ratio and variance shocks.
    pub fn ratio_variance_correlation(&self) -> f64 {
        let sigma = self.effective_sigma();
        if sigma > 0.0 {
            (self.cross_vol_coefficient() / sigma).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn total_intensity(&self) -> f64 {
        self.jump1.intensity + self.jump2.intensity
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let p = self;
        let vp = &p.variance;

        let named = [
            ("q1", p.q1),
            ("q2", p.q2),
            ("sigma1", p.sigma1),
            ("sigma2", p.sigma2),
            ("rho_w", p.rho_w),
            ("rho1", p.rho1),
            ("rho2", p.rho2),
            ("xi", vp.xi),
            ("eta", vp.eta),
            ("omega", vp.omega),
            ("Lambda", vp.lambda),
            ("lambda1", p.jump1.intensity),
            ("alpha_j1", p.jump1.mean),
            ("beta_j1", p.jump1.std),
            ("lambda2", p.jump2.intensity),
            ("alpha_j2", p.jump2.mean),
            ("beta_j2", p.jump2.std),
            ("T", p.maturity),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                v.push(Violation::NonFinite(name));
            }
        }
        if !v.is_empty() {
            return ValidationReport { violations: v };
        }

        for (name, value) in [("q1", p.q1), ("q2", p.q2), ("Lambda", vp.lambda)] {
            if value < 0.0 {
                v.push(Violation::Negative { name, value });
            }
        }
        for (name, value) in [
            ("sigma1", p.sigma1),
            ("sigma2", p.sigma2),
            ("xi", vp.xi),
            ("eta", vp.eta),
            ("omega", vp.omega),
            ("T", p.maturity),
        ] {
            if value <= 0.0 {
                v.push(Violation::NotPositive { name, value });
            }
        }
        if !vp.feller_holds() {
            v.push(Violation::Feller {
                two_xi_eta: 2.0 * vp.xi * vp.eta,
                omega_sq: vp.omega * vp.omega,
            });
        }
        if p.rho_w.abs() > 1.0 {
            v.push(Violation::CorrelationRange {
                name: "rho_w",
                value: p.rho_w,
            });
        }
        let upper = if vp.omega > 0.0 {
            (vp.xi / vp.omega).min(1.0)
        } else {
            1.0
        };
        for (name, value) in [("rho1", p.rho1), ("rho2", p.rho2)] {
            if !(value > -1.0 && value < upper) {
                v.push(Violation::CorrelationBound { name, value, upper });
            }
        }
        for (idx, jump) in [(1u8, &p.jump1), (2u8, &p.jump2)] {
            if jump.intensity < 0.0 {
                v.push(Violation::Negative {
                    name: if idx == 1 { "lambda1" } else { "lambda2" },
                    value: jump.intensity,
                });
            }
            if jump.intensity > 0.0 && jump.std <= 0.0 {
                v.push(Violation::JumpStd {
                    asset: idx,
                    value: jump.std,
                });
            }
        }
        let sig2 = p.sigma1 * p.sigma1 + p.sigma2 * p.sigma2 - 2.0 * p.rho_w * p.sigma1 * p.sigma2;
        if sig2 < 0.0 {
            v.push(Violation::EffectiveVariance(sig2));
        }
        ValidationReport { violations: v }
    }

    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidParams(report))
        }
    }

    /// Sets a parameter by its config key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "q1" => self.q1 = value,
            "q2" => self.q2 = value,
            "sigma1" => self.sigma1 = value,
            "sigma2" => self.sigma2 = value,
            "rho_w" => self.rho_w = value,
            "xi" => self.variance.xi = value,
            "eta" => self.variance.eta = value,
            "Lambda" => self.variance.lambda = value,
            "omega" => self.variance.omega = value,
            "rho1" => self.rho1 = value,
            "rho2" => self.rho2 = value,
            "lambda1" => self.jump1.intensity = value,
            "beta_j1" => self.jump1.std = value,
            "alpha_j1" => self.jump1.mean = value,
            "lambda2" => self.jump2.intensity = value,
            "beta_j2" => self.jump2.std = value,
            "alpha_j2" => self.jump2.mean = value,
            "T" => self.maturity = value,
            other => return Err(Error::UnknownParameter(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        Ok(match key {
            "q1" => self.q1,
            "q2" => self.q2,
            "sigma1" => self.sigma1,
            "sigma2" => self.sigma2,
            "rho_w" => self.rho_w,
            "xi" => self.variance.xi,
            "eta" => self.variance.eta,
            "Lambda" => self.variance.lambda,
            "omega" => self.variance.omega,
            "rho1" => self.rho1,
            "rho2" => self.rho2,
            "lambda1" => self.jump1.intensity,
            "beta_j1" => self.jump1.std,
            "alpha_j1" => self.jump1.mean,
            "lambda2" => self.jump2.intensity,
            "beta_j2" => self.jump2.std,
            "alpha_j2" => self.jump2.mean,
            "T" => self.maturity,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    /// Parses the flat `key = value` config format. Every key must be present
    /// and unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let cfg: ParamsFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg.into())
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }

    /// Renders the parameters in the config format, keys in canonical order.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for key in PARAM_KEYS {
            // get() cannot fail for canonical keys
            let value = self.get(key).unwrap_or(f64::NAN);
            out.push_str(&format!("{key} = {value:?}\n"));
        }
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    q1: f64,
    q2: f64,
    sigma1: f64,
    sigma2: f64,
    rho_w: f64,
    xi: f64,
    eta: f64,
    #[serde(rename = "Lambda")]
    lambda: f64,
    omega: f64,
    rho1: f64,
    rho2: f64,
    lambda1: f64,
    beta_j1: f64,
    alpha_j1: f64,
    lambda2: f64,
    beta_j2: f64,
    alpha_j2: f64,
    #[serde(rename = "T")]
    maturity: f64,
}

impl From<ParamsFile> for ModelParams {
    fn from(f: ParamsFile) -> Self {
        Self {
            q1: f.q1,
            q2: f.q2,
            sigma1: f.sigma1,
            sigma2: f.sigma2,
            rho_w: f.rho_w,
            rho1: f.rho1,
            rho2: f.rho2,
            variance: VarianceParams {
                xi: f.xi,
                eta: f.eta,
                omega: f.omega,
                lambda: f.lambda,
            },
            jump1: JumpSpec::new(f.lambda1, f.alpha_j1, f.beta_j1),
            jump2: JumpSpec::new(f.lambda2, f.alpha_j2, f.beta_j2),
            maturity: f.maturity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonFinite(&'static str),
    Negative {
        name: &'static str,
        value: f64,
    },
    NotPositive {
        name: &'static str,
        value: f64,
    },
    Feller {
        two_xi_eta: f64,
        omega_sq: f64,
    },
    CorrelationRange {
        name: &'static str,
        value: f64,
    },
    CorrelationBound {
        name: &'static str,
        value: f64,
        upper: f64,
    },
    JumpStd {
        asset: u8,
        value: f64,
    },
    EffectiveVariance(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(name) => write!(f, "{name} is not finite"),
            Violation::Negative { name, value } => write!(f, "{name} = {value} must be >= 0"),
            Violation::NotPositive { name, value } => write!(f, "{name} = {value} must be > 0"),
            Violation::Feller {
                two_xi_eta,
                omega_sq,
            } => write!(
                f,
                "Feller condition violated: 2*xi*eta = {two_xi_eta} < omega^2 = {omega_sq}"
            ),
            Violation::CorrelationRange { name, value } => {
                write!(f, "{name} = {value} outside [-1, 1]")
            }
            Violation::CorrelationBound { name, value, upper } => {
                write!(
                    f,
                    "{name} = {value} outside (-1, min(xi/omega, 1) = {upper})"
                )
            }
            Violation::JumpStd { asset, value } => {
                write!(
                    f,
                    "beta_j{asset} = {value} must be > 0 when lambda{asset} > 0"
                )
            }
            Violation::EffectiveVariance(v) => {
                write!(f, "sigma1^2 + sigma2^2 - 2 rho_w sigma1 sigma2 = {v} < 0")
            }
        }
    }
}

/// Outcome of [`ModelParams::validate`]; empty iff every constraint holds.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_feller_violation(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::Feller { .. }))
    }

    pub fn has_correlation_violation(&self) -> bool {
        self.violations.iter().any(|v| {
            matches!(
                v,
                Violation::CorrelationBound { .. } | Violation::CorrelationRange { .. }
            )
        })
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table1_is_valid() {
        let report = ModelParams::table1().validate();
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn feller_violation_reported() {
        let mut p = ModelParams::table1();
        p.variance.xi = 1.0;
        p.variance.eta = 0.01;
        p.variance.omega = 1.0;
        // rho bounds stay inside (-1, min(1, 1)) with rho1 = 0.5
        let r = p.validate();
        assert!(r.has_feller_violation());
    }

    #[test]
    fn correlation_bound_violation_reported() {
        let mut p = ModelParams::table1();
        p.variance.xi = 0.5;
        p.variance.omega = 1.0;
        p.variance.eta = 1.0;
        p.rho1 = 1.0;
        let r = p.validate();
        assert!(r.has_correlation_violation());
        assert!(!r.has_feller_violation());
    }

    #[test]
    fn validate_is_pure() {
        let mut p = ModelParams::table1();
        p.q1 = -0.1;
        assert_eq!(p.validate(), p.validate());
    }

    #[test]
    fn inert_jump_spec_accepted() {
        let mut p = ModelParams::table1();
        p.jump1 = JumpSpec::new(0.0, 3.0, 0.0);
        assert!(p.validate().is_valid());
    }

    #[test]
    fn active_jump_needs_positive_std() {
        let mut p = ModelParams::table1();
        p.jump2.std = 0.0;
        assert!(!p.validate().is_valid());
    }

    #[test]
    fn effective_sigma_examples() {
        let mut p = ModelParams::table1();
        assert_abs_diff_eq!(p.effective_sigma(), 0.5, epsilon = 1e-15);
        p.rho_w = 1.0;
        assert_abs_diff_eq!(p.effective_sigma(), 0.0, epsilon = 1e-15);
        p.rho_w = 0.3;
        p.sigma2 = 0.0;
        assert_abs_diff_eq!(p.effective_sigma(), p.sigma1, epsilon = 1e-15);
    }

    #[test]
    fn cross_vol_examples() {
        let mut p = ModelParams::table1();
        assert_abs_diff_eq!(p.cross_vol_coefficient(), 0.225, epsilon = 1e-15);
        p.rho1 = 0.0;
        p.rho2 = 0.0;
        assert_eq!(p.cross_vol_coefficient(), 0.0);
        p.rho1 = 0.3;
        p.rho2 = 0.3;
        assert_eq!(p.cross_vol_coefficient(), 0.0);
    }

    #[test]
    fn config_roundtrip_and_unknown_keys() {
        let p = ModelParams::table1();
        let text = p.to_config_string();
        let back = ModelParams::from_config_str(&text).unwrap();
        assert_eq!(p, back);

        let bad = format!("{text}lamda1 = 3.0\n");
        assert!(matches!(
            ModelParams::from_config_str(&bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn set_rejects_unknown_key() {
        let mut p = ModelParams::table1();
        assert!(p.set("sigma3", 1.0).is_err());
        p.set("Lambda", 0.25).unwrap();
        assert_eq!(p.variance.lambda, 0.25);
    }
}
