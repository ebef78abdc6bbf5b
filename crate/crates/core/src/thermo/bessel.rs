//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Arguments up to [`SERIES_SWITCHOVER`] use the ascending power series,
//! whose terms are all positive, so the sum carries no cancellation error.
//! Beyond it the Hankel asymptotic expansion is summed until its terms
//! stop decreasing. At x = 30 the smallest asymptotic term is ~e^-60, so
//! both branches agree to rounding there.
//!
//! Only non-negative arguments are supported.

/// Argument at which evaluation switches from the power series to the
/// asymptotic expansion.
pub const SERIES_SWITCHOVER: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Zero,
    One,
}

impl Order {
    fn nu(self) -> f64 {
        match self {
            Order::Zero => 0.0,
            Order::One => 1.0,
        }
    }
}

/// `I_ν(x)`. Overflows to infinity for x above ~713; use
/// [`bessel_i_scaled`] or [`bessel_i1_over_i0`] there.
pub fn bessel_i(order: Order, x: f64) -> f64 {
    assert!(x >= 0.0, "bessel_i requires x >= 0, got {x}");
    if x <= SERIES_SWITCHOVER {
        power_series(order, x)
    } else {
        let scaled = asymptotic_scaled(order, x);
        // e^x overflows before the product does for x < 709
        if x < 700.0 {
            scaled * x.exp()
        } else {
            (scaled.ln() + x).exp()
        }
    }
}

/// `e^{-x} I_ν(x)`, finite for every x ≥ 0.
pub fn bessel_i_scaled(order: Order, x: f64) -> f64 {
    assert!(x >= 0.0, "bessel_i_scaled requires x >= 0, got {x}");
    if x <= SERIES_SWITCHOVER {
        power_series(order, x) * (-x).exp()
    } else {
        asymptotic_scaled(order, x)
    }
}

/// `I_1(x) / I_0(x)` without overflow.
pub fn bessel_i1_over_i0(x: f64) -> f64 {
    assert!(x >= 0.0, "bessel_i1_over_i0 requires x >= 0, got {x}");
    if x == 0.0 {
        return 0.0;
    }
    if x <= SERIES_SWITCHOVER {
        power_series(Order::One, x) / power_series(Order::Zero, x)
    } else {
        asymptotic_scaled(Order::One, x) / asymptotic_scaled(Order::Zero, x)
    }
}

/// Ascending series `Σ_k (x/2)^{2k+ν} / (k! (k+ν)!)`.
pub(crate) fn power_series(order: Order, x: f64) -> f64 {
    let nu = order.nu();
    let half = 0.5 * x;
    let q = half * half;
    let mut term = if order == Order::Zero { 1.0 } else { half };
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Hankel expansion of `e^{-x} I_ν(x) = (2πx)^{-1/2} Σ_k (-1)^k a_k(ν) / x^k`.
pub(crate) fn asymptotic_scaled(order: Order, x: f64) -> f64 {
    let mu = 4.0 * order.nu() * order.nu();
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 1.0_f64;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() <= 1e-17 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_i(Order::Zero, 0.0), 1.0);
        assert_eq!(bessel_i(Order::One, 0.0), 0.0);
        assert_eq!(bessel_i1_over_i0(0.0), 0.0);
    }

    #[test]
    fn small_argument_ratio() {
        let x = 1e-6;
        assert!(rel(bessel_i1_over_i0(x), x / 2.0) < 1e-10);
    }

    #[test]
    fn branches_agree_around_switchover() {
        for i in 0..=40 {
            let x = 25.0 + 0.25 * i as f64;
            for order in [Order::Zero, Order::One] {
                let series = power_series(order, x) * (-x).exp();
                let asym = asymptotic_scaled(order, x);
                assert!(rel(asym, series) < 1e-11, "x={x} {order:?}: {series} vs {asym}");
            }
        }
    }

    #[test]
    fn ratio_stays_finite_for_huge_arguments() {
        let r = bessel_i1_over_i0(1e6);
        // I1/I0 ~ 1 - 1/(2x)
        assert!((r - (1.0 - 0.5e-6)).abs() < 1e-12);
        assert!(bessel_i_scaled(Order::Zero, 1e4).is_finite());
    }
}
