use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Symmetric smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Kernel {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width (in bandwidth units) of the window used to count supporting points.
    ///
    /// The Gaussian has unbounded support; points beyond three bandwidths carry
    /// about one percent of the peak weight and are not counted as support.
    pub fn window_radius(self) -> f64 {
        match self {
            Kernel::Gaussian => 3.0,
            Kernel::Epanechnikov => 1.0,
        }
    }

    #[inline]
    pub(crate) fn in_window(self, u: f64) -> bool {
        match self {
            Kernel::Gaussian => u.abs() <= 3.0,
            Kernel::Epanechnikov => u.abs() < 1.0,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Gaussian => write!(f, "gaussian"),
            Kernel::Epanechnikov => write!(f, "epanechnikov"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(Kernel::Gaussian),
            "epanechnikov" | "epan" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn densities_integrate_to_one() {
        for k in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let n = 200_000;
            let (a, b) = (-10.0, 10.0);
            let h = (b - a) / n as f64;
            let s: f64 = (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * k.eval(a + i as f64 * h)
                })
                .sum::<f64>()
                * h;
            assert!((s - 1.0).abs() < 1e-6, "{k}: {s}");
        }
    }

    #[test]
    fn epanechnikov_vanishes_outside_unit_interval() {
        assert_eq!(Kernel::Epanechnikov.eval(1.0), 0.0);
        assert_eq!(Kernel::Epanechnikov.eval(-1.5), 0.0);
        assert!(Kernel::Epanechnikov.eval(0.99) > 0.0);
    }

    #[test]
    fn parses_names() {
        assert_eq!("Gaussian".parse::<Kernel>().unwrap(), Kernel::Gaussian);
        assert_eq!("epanechnikov".parse::<Kernel>().unwrap(), Kernel::Epanechnikov);
        assert!("box".parse::<Kernel>().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(u in -20.0f64..20.0) {
            for k in [Kernel::Gaussian, Kernel::Epanechnikov] {
                prop_assert_eq!(k.eval(u), k.eval(-u));
                prop_assert!(k.eval(u) >= 0.0);
            }
        }
    }
}
