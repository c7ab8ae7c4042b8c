//! Discretizations of the fractional Laplacian `(-Δ)^{α/2}`.

mod integral;
mod spectral;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::registry::Registry;

pub use integral::{SingularIntegralConfig, SingularIntegralLaplacian};
pub use spectral::SpectralLaplacian;

/// Fractional order, `1 < alpha <= 2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 1.0 && alpha <= 2.0 {
            Ok(FracOrder(alpha))
        } else {
            Err(Error::OutOfRange {
                name: "alpha",
                value: alpha,
                expected: "1 < alpha <= 2",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Magnitude of the singular-integral normalizing constant,
/// `2^α Γ((1+α)/2) / (√π |Γ(-α/2)|)`, for `1 < α < 2`.
///
/// Written as `(α/2) 2^α Γ((1+α)/2) / (√π Γ(1-α/2))` to keep every gamma
/// argument positive.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            expected: "1 < alpha < 2 (use the spectral operator at alpha = 2)",
        });
    }
    Ok(0.5 * alpha * 2f64.powf(alpha) * gamma(0.5 * (1.0 + alpha))
        / (std::f64::consts::PI.sqrt() * gamma(1.0 - 0.5 * alpha)))
}

pub trait FractionalLaplacian: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, f: &GridFunction, alpha: f64) -> Result<GridFunction>;
}

/// Registry holding `spectral` and `integral` (the latter with `cfg`).
pub fn registry(cfg: SingularIntegralConfig) -> Registry<dyn FractionalLaplacian> {
    let mut r: Registry<dyn FractionalLaplacian> = Registry::new("fractional Laplacian method");
    r.register("spectral", Box::new(SpectralLaplacian));
    r.register("integral", Box::new(SingularIntegralLaplacian::new(cfg)));
    r
}

pub fn apply_spectral(f: &GridFunction, alpha: f64) -> Result<GridFunction> {
    SpectralLaplacian.apply(f, alpha)
}

pub fn apply_singular_integral(
    f: &GridFunction,
    alpha: f64,
    cfg: &SingularIntegralConfig,
) -> Result<GridFunction> {
    SingularIntegralLaplacian::new(*cfg).apply(f, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_alpha_values() {
        assert!((c_alpha(1.5).unwrap() - 0.2992).abs() < 1e-4);
        // direct form with the negative gamma argument
        for &a in &[1.1, 1.2, 1.5, 1.8, 1.95] {
            let direct = 2f64.powf(a) * gamma(0.5 * (1.0 + a))
                / (std::f64::consts::PI.sqrt() * gamma(-0.5 * a)).abs();
            assert!((c_alpha(a).unwrap() - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn c_alpha_vanishes_at_two() {
        let a = c_alpha(2.0 - 1e-6).unwrap();
        // Γ(-1+δ) ~ -1/δ with δ = 5e-7, so |C| ~ 4 Γ(3/2)/√π · δ = 2δ
        assert!((a - 1e-6).abs() < 1e-8, "{a}");
        assert!(matches!(c_alpha(2.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(c_alpha(1.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn frac_order_bounds() {
        assert!(FracOrder::new(1.0).is_err());
        assert!(FracOrder::new(2.0).is_ok());
        assert!(FracOrder::new(2.1).is_err());
    }

    #[test]
    fn registry_names() {
        let r = registry(SingularIntegralConfig::default());
        assert_eq!(r.names(), vec!["integral", "spectral"]);
        assert_eq!(r.get("spectral").unwrap().name(), "spectral");
    }
}
