//! Cumulative Fresnel integral `F(t) = ∫_{-∞}^{t} exp(iθ²/2) dθ`.
//!
//! Three branches, switched on `|t|`:
//!
//! * `|t| ≤ 4`: Maclaurin series of `∫_0^t`, added to `F(0) = √π(1+i)/2`;
//! * `4 < |t| < 8`: the tail `G(s) = ∫_s^∞ exp(iθ²/2) dθ` through the
//!   Laplace continued fraction of `erfc(s·e^{-iπ/4}/√2)`;
//! * `|t| ≥ 8`: asymptotic series
//!   `G(s) = (i e^{is²/2}/s) Σ_k (2k−1)!!/(is²)^k`, truncated at its
//!   smallest term (below `1e-14` relative at the switchover).
//!
//! For `t > 0`, `F(t) = F(+∞) − G(t)`; for `t < 0`, `F(t) = G(−t)`.
//! Infinite arguments are the explicit limits `F(−∞) = 0` and
//! `F(+∞) = √π(1+i)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

const SERIES_MAX: f64 = 4.0;
const ASYMPTOTIC_MIN: f64 = 8.0;
const CF_TERMS: usize = 400;

fn i() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

/// `F(+∞) = √π(1+i)`.
pub fn fresnel_plus_infinity() -> Complex64 {
    Complex64::new(PI.sqrt(), PI.sqrt())
}

/// `F(0) = √π(1+i)/2`.
pub fn fresnel_at_zero() -> Complex64 {
    fresnel_plus_infinity() * 0.5
}

/// `c₁ = (1−i)√π`; `F(+∞) = i·c₁` and the connection jump is `−i·F(+∞) = c₁`.
pub fn connection_constant() -> Complex64 {
    Complex64::new(PI.sqrt(), -PI.sqrt())
}

/// `∫_0^t exp(iθ²/2) dθ` by its Maclaurin series.
fn series_from_zero(t: f64) -> Complex64 {
    let t2 = t * t;
    // term_k = (i t²/2)^k / k! · t, summed as term_k/(2k+1)
    let mut term = Complex64::new(t, 0.0);
    let mut sum = term;
    let step = i() * (t2 / 2.0);
    for k in 1..200 {
        term = term * step / k as f64;
        let contrib = term / (2 * k + 1) as f64;
        sum += contrib;
        if contrib.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

/// `G(s) = ∫_s^∞ exp(iθ²/2) dθ` for `s > 0` by continued fraction.
fn tail_continued_fraction(s: f64) -> Complex64 {
    let z = Complex64::from_polar(s / 2f64.sqrt(), -PI / 4.0);
    let mut t = z;
    for k in (1..=CF_TERMS).rev() {
        t = z + (k as f64 / 2.0) / t;
    }
    let phase = Complex64::from_polar(1.0, s * s / 2.0);
    Complex64::new(0.5, 0.5) * phase / t
}

/// `G(s)` for large `s` by the asymptotic series.
fn tail_asymptotic(s: f64) -> Complex64 {
    let x = Complex64::new(0.0, s * s); // i s²
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut prev = f64::INFINITY;
    for k in 1..400 {
        term = term * (2 * k - 1) as f64 / x;
        let mag = term.norm();
        if mag >= prev || mag < 1e-17 {
            if mag < prev {
                sum += term;
            }
            break;
        }
        sum += term;
        prev = mag;
    }
    i() * Complex64::from_polar(1.0 / s, s * s / 2.0) * sum
}

fn tail(s: f64) -> Complex64 {
    debug_assert!(s > 0.0);
    if s >= ASYMPTOTIC_MIN {
        tail_asymptotic(s)
    } else {
        tail_continued_fraction(s)
    }
}

/// Decomposition `F(t) = H(t)·F(+∞) + R(t)` with `H` the unit step; `R`
/// avoids cancellation when differencing nearby large arguments.
fn split(t: f64) -> (bool, Complex64) {
    if t == f64::NEG_INFINITY {
        return (false, Complex64::new(0.0, 0.0));
    }
    if t == f64::INFINITY {
        return (true, Complex64::new(0.0, 0.0));
    }
    if t.abs() <= SERIES_MAX {
        let v = fresnel_at_zero() + series_from_zero(t);
        if t > 0.0 {
            (true, v - fresnel_plus_infinity())
        } else {
            (false, v)
        }
    } else if t > 0.0 {
        (true, -tail(t))
    } else {
        (false, tail(-t))
    }
}

/// `F(t₁) = ∫_{-∞}^{t₁} exp(iθ²/2) dθ`. `±∞` are accepted as limits; NaN
/// propagates.
pub fn fresnel_cumulative(t1: f64) -> Complex64 {
    if t1.is_nan() {
        return Complex64::new(f64::NAN, f64::NAN);
    }
    let (step, rest) = split(t1);
    if step {
        fresnel_plus_infinity() + rest
    } else {
        rest
    }
}

/// `∫_{ta}^{tb} exp(iτ²/(2ε²)) dτ = ε·(F(tb/ε) − F(ta/ε))`.
pub fn fresnel_increment(ta: f64, tb: f64, epsilon: f64) -> Result<Complex64> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if ta.is_nan() || tb.is_nan() {
        return Err(Error::param("ta/tb", "NaN bound"));
    }
    if ta > tb {
        return Err(Error::param("ta", format!("ta = {ta} exceeds tb = {tb}")));
    }
    if ta == tb {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (ha, ra) = split(ta / epsilon);
    let (hb, rb) = split(tb / epsilon);
    let mut diff = rb - ra;
    if hb && !ha {
        diff += fresnel_plus_infinity();
    }
    Ok(diff * epsilon)
}
