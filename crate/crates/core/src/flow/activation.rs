use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Elementwise invertible nonlinearity with strictly positive derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Asinh,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn value(self, a: f64) -> f64 {
        match self {
            Activation::Asinh => a.asinh(),
            Activation::Softplus => softplus(a),
            Activation::Identity => a,
        }
    }

    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Asinh => 1.0 / (1.0 + a * a).sqrt(),
            Activation::Softplus => sigmoid(a),
            Activation::Identity => 1.0,
        }
    }

    #[inline]
    pub fn second_derivative(self, a: f64) -> f64 {
        match self {
            Activation::Asinh => -a / (1.0 + a * a).powf(1.5),
            Activation::Softplus => {
                let s = sigmoid(a);
                s * sigmoid(-a)
            }
            Activation::Identity => 0.0,
        }
    }

    /// `ln φ'(a)`, stable for large |a|.
    #[inline]
    pub fn log_derivative(self, a: f64) -> f64 {
        match self {
            Activation::Asinh => -0.5 * (a * a).ln_1p(),
            Activation::Softplus => -softplus(-a),
            Activation::Identity => 0.0,
        }
    }

    /// `φ''(a) / φ'(a)`, the derivative of [`Self::log_derivative`].
    #[inline]
    pub fn log_derivative_slope(self, a: f64) -> f64 {
        match self {
            Activation::Asinh => -a / (1.0 + a * a),
            Activation::Softplus => sigmoid(-a),
            Activation::Identity => 0.0,
        }
    }

    pub fn inverse(self, y: f64) -> Result<f64> {
        match self {
            Activation::Asinh => Ok(y.sinh()),
            Activation::Identity => Ok(y),
            Activation::Softplus => {
                if !(y > 0.0) {
                    return Err(Error::domain(format!("softplus inverse needs a positive value, got {y}")));
                }
                // ln(e^y - 1)
                Ok(if y > 30.0 { y + (-(-y).exp()).ln_1p() } else { y.exp_m1().ln() })
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Asinh => "asinh",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asinh" => Ok(Activation::Asinh),
            "softplus" => Ok(Activation::Softplus),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Activation; 3] = [Activation::Asinh, Activation::Softplus, Activation::Identity];

    fn grid() -> impl Iterator<Item = f64> {
        (0..=400).map(|i| -20.0 + 0.1 * i as f64)
    }

    #[test]
    fn round_trip_on_grid() {
        for act in ALL {
            for x in grid() {
                let back = act.inverse(act.value(x)).unwrap();
                // softplus loses absolute precision for very negative x where
                // the value underflows towards e^x; compare relative to that
                let tol = match act {
                    Activation::Softplus if x < -15.0 => 1e-6,
                    _ => 1e-10 * x.abs().max(1.0),
                };
                assert!((back - x).abs() <= tol, "{act} at {x}: {back}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in ALL {
            for x in grid() {
                assert!(act.derivative(x) > 0.0);
                let fd = (act.value(x + h) - act.value(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-7, "{act} φ' at {x}");
                let fd2 = (act.derivative(x + h) - act.derivative(x - h)) / (2.0 * h);
                assert!((fd2 - act.second_derivative(x)).abs() < 1e-7, "{act} φ'' at {x}");
                let ld = act.derivative(x).ln();
                assert!((ld - act.log_derivative(x)).abs() < 1e-12);
                let slope = act.second_derivative(x) / act.derivative(x);
                assert!((slope - act.log_derivative_slope(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asinh_derivative_at_zero_is_one() {
        assert_eq!(Activation::Asinh.derivative(0.0), 1.0);
    }

    #[test]
    fn softplus_inverse_domain() {
        assert!(Activation::Softplus.inverse(0.0).is_err());
        assert!(Activation::Softplus.inverse(-1.0).is_err());
    }

    #[test]
    fn parse_names() {
        for act in ALL {
            assert_eq!(act.name().parse::<Activation>().unwrap(), act);
        }
        assert!("relu".parse::<Activation>().is_err());
    }
}
