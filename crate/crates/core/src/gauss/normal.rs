//! Univariate standard normal functions.

use libm::erfc;
use rand::Rng;
use statrs::function::erf::erfc_inv;

use crate::serde_util::{is_neg_inf, is_pos_inf};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn cdf(x: f64) -> f64 {
    if is_neg_inf(x) {
        return 0.0;
    }
    if is_pos_inf(x) {
        return 1.0;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// `log Φ(x)`, accurate far into the lower tail.
pub fn log_cdf(x: f64) -> f64 {
    if is_neg_inf(x) {
        return f64::NEG_INFINITY;
    }
    if is_pos_inf(x) {
        return 0.0;
    }
    if x > 0.0 {
        (-0.5 * erfc(x / SQRT_2)).ln_1p()
    } else if x > -20.0 {
        (0.5 * erfc(-x / SQRT_2)).ln()
    } else {
        log_pdf(x) + log_mills(-x)
    }
}

/// `log[Φ(-t)/φ(t)]` for `t >= 20` by backward continued fraction.
fn log_mills(t: f64) -> f64 {
    let mut d = t;
    for k in (0..60).rev() {
        d = t + (k as f64 + 1.0) / d;
    }
    -d.ln()
}

/// Inverse of Φ.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `log(Φ(b) − Φ(a))` for `a < b`, stable in both tails.
pub fn log_diff_cdf(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a > 0.0 {
        let pa = log_cdf(-a);
        let pb = log_cdf(-b);
        pa + (-(pb - pa).exp()).ln_1p()
    } else if b < 0.0 {
        let pa = log_cdf(a);
        let pb = log_cdf(b);
        pb + (-(pa - pb).exp()).ln_1p()
    } else {
        let pa = cdf(a);
        let pb = cdf(-b);
        (-pa - pb).ln_1p()
    }
}

/// Inverse Mills ratio `φ(t)/Φ(−t)`, the mean of a standard normal
/// truncated to `[t, ∞)`.
pub fn inv_mills_lower(t: f64) -> f64 {
    if is_neg_inf(t) {
        return 0.0;
    }
    (log_pdf(t) - log_cdf(-t)).exp()
}

/// Draw from a standard normal truncated to `[a, b]`.
///
/// Tail regions use Rayleigh-proposal rejection; narrow central intervals
/// use inversion; wide central intervals use plain rejection.
pub fn sample_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    const TAIL: f64 = 0.66;
    if a > TAIL {
        tail(a, b, rng)
    } else if b < -TAIL {
        -tail(-b, -a, rng)
    } else if b - a > 2.05 {
        loop {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if z >= a && z <= b {
                return z;
            }
        }
    } else {
        let pl = 0.5 * erfc(a / SQRT_2);
        let pu = 0.5 * erfc(b / SQRT_2);
        let u: f64 = rng.random();
        let x = SQRT_2 * erfc_inv(2.0 * (pl - (pl - pu) * u));
        x.clamp(a, b)
    }
}

fn tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let c = 0.5 * a * a;
    let f = if is_pos_inf(b) {
        -1.0
    } else {
        (c - 0.5 * b * b).exp_m1()
    };
    loop {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let x = c - (u * f).ln_1p();
        if v * v * x <= c {
            let z = (2.0 * x).sqrt();
            if z >= a && z <= b {
                return z;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(cdf(1.959963984540054), 0.975, epsilon = 1e-14);
        assert_relative_eq!(quantile(0.975), 1.959963984540054, epsilon = 1e-12);
        assert_relative_eq!(quantile(1e-300), -37.0471, epsilon = 1e-3);
    }

    #[test]
    fn log_cdf_is_continuous_at_switch() {
        let left = log_cdf(-20.0 - 1e-9);
        let right = log_cdf(-20.0 + 1e-9);
        assert_relative_eq!(left, right, max_relative = 1e-8);
        // log Φ(-40) from the asymptotic expansion
        let t: f64 = 40.0;
        let approx = log_pdf(-t) - t.ln() + (1.0 - 1.0 / (t * t) + 3.0 / t.powi(4)).ln();
        assert_relative_eq!(log_cdf(-t), approx, max_relative = 1e-10);
    }

    #[test]
    fn log_diff_matches_direct() {
        for &(a, b) in &[(-1.0, 0.5), (0.2, 3.0), (-4.0, -1.0), (-0.3, f64::INFINITY)] {
            let direct = (cdf(b) - cdf(a)).ln();
            assert_relative_eq!(log_diff_cdf(a, b), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn truncated_draws_respect_bounds_and_mean() {
        let mut rng = seeded(7);
        for &(a, b) in &[
            (1.5, f64::INFINITY),
            (-0.2, 0.3),
            (-5.0, -3.0),
            (-1.0, 4.0),
            (8.0, 8.5),
        ] {
            let n = 40_000;
            let mut s = 0.0;
            for _ in 0..n {
                let z = sample_truncated(a, b, &mut rng);
                assert!(z >= a && z <= b);
                s += z;
            }
            let num = pdf(a) - if b.is_finite() { pdf(b) } else { 0.0 };
            let mean = num / log_diff_cdf(a, b).exp();
            assert!((s / n as f64 - mean).abs() < 0.02, "{a} {b}");
        }
    }
}
