//! Epanechnikov kernel, its derivatives, and the reflected three-term stencil
//! used for every density update on `[0, 1]`.
//!
//! `K(u) = 3/4 (1 - u^2)` on `|u| <= 1`. The first derivative is `-3u/2` and the
//! second is the constant `-3/2`, both on the open support `|u| < 1`; at the
//! support edge the derivatives are taken as zero.

use crate::error::{check_unit, Error, Result};

/// Derivative order of the kernel: 0 = density, 1 = slope, 2 = curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelOrder(u8);

impl KernelOrder {
    pub const DENSITY: KernelOrder = KernelOrder(0);
    pub const FIRST: KernelOrder = KernelOrder(1);
    pub const SECOND: KernelOrder = KernelOrder(2);

    pub fn new(order: u8) -> Result<Self> {
        if order <= 2 {
            Ok(KernelOrder(order))
        } else {
            Err(Error::KernelOrder(order))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for KernelOrder {
    type Error = Error;

    fn try_from(order: u8) -> Result<Self> {
        KernelOrder::new(order)
    }
}

/// `R(K) = ∫K²`.
pub const ROUGHNESS: f64 = 0.6;
/// `μ₂(K) = ∫u²K`.
pub const SECOND_MOMENT: f64 = 0.2;

/// Evaluates `K^(m)(u)`. Total on the reals; zero outside the support.
#[inline]
pub fn eval_kernel(u: f64, order: KernelOrder) -> f64 {
    match order.0 {
        0 => epanechnikov(u),
        1 => {
            if u.abs() < 1.0 {
                -1.5 * u
            } else {
                0.0
            }
        }
        _ => {
            if u.abs() < 1.0 {
                -1.5
            } else {
                0.0
            }
        }
    }
}

#[inline(always)]
pub(crate) fn epanechnikov(u: f64) -> f64 {
    let q = 1.0 - u * u;
    if q > 0.0 {
        0.75 * q
    } else {
        0.0
    }
}

/// `(1/h) K((x - center) / h)`.
pub fn eval_kernel_scaled(x: f64, center: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    Ok(scaled(x, center, h))
}

#[inline(always)]
pub(crate) fn scaled(x: f64, center: f64, h: f64) -> f64 {
    epanechnikov((x - center) / h) / h
}

/// `K_h(x - s) + K_h(x + s) + K_h(x - (2 - s))`: the kernel at `s` plus its
/// mirror images across both ends of the unit interval.
pub fn reflected_stencil(x: f64, s: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    check_unit(s)?;
    Ok(reflected(x, s, h))
}

#[inline(always)]
pub(crate) fn reflected(x: f64, s: f64, h: f64) -> f64 {
    scaled(x, s, h) + scaled(x, -s, h) + scaled(x, 2.0 - s, h)
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert_eq!(eval_kernel(0.0, KernelOrder::DENSITY), 0.75);
        assert_eq!(eval_kernel(1.0, KernelOrder::DENSITY), 0.0);
        assert!((eval_kernel(0.5, KernelOrder::DENSITY) - 0.5625).abs() < 1e-15);
        assert!((eval_kernel(0.5, KernelOrder::FIRST) + 0.75).abs() < 1e-15);
        assert_eq!(eval_kernel(0.3, KernelOrder::SECOND), -1.5);
        assert_eq!(eval_kernel(1.0, KernelOrder::FIRST), 0.0);
        assert_eq!(eval_kernel(-1.2, KernelOrder::SECOND), 0.0);
    }

    #[test]
    fn order_out_of_range_rejected() {
        assert!(KernelOrder::new(3).is_err());
        assert!(KernelOrder::try_from(2u8).is_ok());
    }

    #[test]
    fn scaled_values() {
        assert!((eval_kernel_scaled(0.5, 0.5, 0.1).unwrap() - 7.5).abs() < 1e-12);
        assert_eq!(eval_kernel_scaled(0.7, 0.5, 0.1).unwrap(), 0.0);
        assert!((eval_kernel_scaled(0.55, 0.5, 0.1).unwrap() - 5.625).abs() < 1e-12);
        assert_eq!(eval_kernel_scaled(0.5, 0.5, 0.0), Err(Error::InvalidBandwidth(0.0)));
        assert!(eval_kernel_scaled(0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn stencil_values() {
        assert!((reflected_stencil(0.0, 0.0, 0.1).unwrap() - 15.0).abs() < 1e-12);
        assert!((reflected_stencil(0.5, 0.5, 0.1).unwrap() - 7.5).abs() < 1e-12);
        assert!((reflected_stencil(1.0, 1.0, 0.1).unwrap() - 15.0).abs() < 1e-12);
        assert!(reflected_stencil(0.5, 1.2, 0.1).is_err());
        assert!(reflected_stencil(0.5, -0.01, 0.1).is_err());
    }

    fn trapezoid_mass(s: f64, h: f64, g: usize) -> f64 {
        let dx = 1.0 / (g - 1) as f64;
        (0..g)
            .map(|j| {
                let w = if j == 0 || j == g - 1 { 0.5 } else { 1.0 };
                w * reflected(j as f64 * dx, s, h)
            })
            .sum::<f64>()
            * dx
    }

    proptest! {
        #[test]
        fn reflected_stencil_conserves_mass(s in 0.0f64..=1.0, h in 0.02f64..0.3) {
            let g = 2049;
            let dx = 1.0 / (g - 1) as f64;
            let mass = trapezoid_mass(s, h, g);
            // trapezoid error on a piecewise quadratic with kinks at the support edges
            let tol = 2.0 * dx * dx / (h * h) + 4.0 * dx * dx / h;
            prop_assert!((mass - 1.0).abs() <= tol, "mass {} tol {}", mass, tol);
        }

        #[test]
        fn kernel_nonnegative_and_symmetric(u in -3.0f64..3.0) {
            let k = eval_kernel(u, KernelOrder::DENSITY);
            prop_assert!(k >= 0.0);
            prop_assert_eq!(k, eval_kernel(-u, KernelOrder::DENSITY));
        }

        #[test]
        fn first_derivative_matches_central_difference(u in -0.99f64..0.99) {
            let eps = 1e-6;
            let fd = (eval_kernel(u + eps, KernelOrder::DENSITY)
                - eval_kernel(u - eps, KernelOrder::DENSITY)) / (2.0 * eps);
            prop_assert!((fd - eval_kernel(u, KernelOrder::FIRST)).abs() < 1e-6);
        }
    }
}
