//! Closed-form asymptotic objects around the resonance `t₂ = 0`.
//!
//! All fields are slow-frame envelopes `U = Ψ/ε` on a [`Grid1D`].
//!
//! * pre-resonance outer expansion
//!   `U ≈ u¹ + εB₂e^{iθ} + ε³(B₄₁e^{iθ} + B₄₋₁e^{−iθ}) + ε⁴B₅₂e^{2iθ}`;
//! * inner layer in `t₁ = t₂/ε`: `U ≈ w¹(t₁) + εw²(t₁)`, with
//!   `w¹ = u₀ − i f F(t₁)`;
//! * the connection map `v¹(·, 0) = u₀ + (1−i)√π f`;
//! * post-resonance outer expansion `U ≈ v¹ + εA₂e^{iθ}`.
//!
//! The second inner order solves `∂_{t₁}w² = i(∂²w¹ + |w¹|²w¹)` with
//! `w² ~ t₁·∂_{t₂}u¹(·, 0)` as `t₁ → −∞`. Substituting `w¹` reduces it to
//! four scalar integrals of `F`, so only those are integrated numerically:
//!
//! ```text
//! w² = s·t₁ + (f'' + 2|u₀|²f)·J − u₀² f̄·J̄ + 2i u₀|f|²·Iₐ − i ū₀ f²·I_b + |f|²f·I_c
//! J = ∫F = t₁F + i e^{it₁²/2},  Iₐ = ∫|F|²,  I_b = ∫F²,  I_c = ∫|F|²F
//! ```
//!
//! (integrals from `−∞`, `s = i(u₀'' + |u₀|²u₀)`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{same_grid, second_derivative, sup_norm, WaveField};
use crate::fresnel::fresnel_plus_infinity;
use crate::nlse::{ForcingProfile, SweepPhase};

pub use crate::fresnel::{connection_constant, fresnel_cumulative, fresnel_increment};

/// Lower limit of the moment quadrature; the rest is an analytic tail.
pub const INNER_START: f64 = -200.0;
/// Start used for the Richardson-style check of [`INNER_START`].
pub const INNER_CHECK_START: f64 = -400.0;
/// Largest change of the moments allowed between the two starts.
pub const INNER_START_TOL: f64 = 1e-6;
/// Relative tolerance of the numerical large-`t₁` slope/offset checks.
pub const LIMIT_TOL: f64 = 0.01;

const ANCHOR: f64 = -20.0;

/// 10-point Gauss-Legendre nodes and weights on `[−1, 1]` (positive half).
const GAUSS: [(f64, f64); 5] = [
    (0.14887433898163122, 0.295524224714753),
    (0.4333953941292472, 0.2692667193099965),
    (0.6794095682990244, 0.219086362515982),
    (0.8650633666889845, 0.14945134915058036),
    (0.9739065285171717, 0.06667134430868807),
];

fn i() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

/// Number of terms assembled in an ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionOrder {
    #[default]
    Leading,
    Second,
}

/// `(∫|F|², ∫F², ∫|F|²F)` over some interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FresnelMoments {
    pub ia: f64,
    pub ib: Complex64,
    pub ic: Complex64,
}

impl std::ops::Add for FresnelMoments {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        FresnelMoments {
            ia: self.ia + o.ia,
            ib: self.ib + o.ib,
            ic: self.ic + o.ic,
        }
    }
}

impl FresnelMoments {
    fn max_abs_diff(&self, o: &Self) -> f64 {
        (self.ia - o.ia)
            .abs()
            .max((self.ib - o.ib).norm())
            .max((self.ic - o.ic).norm())
    }
}

/// Leading asymptotics of the moments over `(−∞, t]` for `t ≪ −1`.
fn moments_tail(t: f64) -> FresnelMoments {
    let t3 = t * t * t;
    FresnelMoments {
        ia: -1.0 / t,
        ib: -Complex64::from_polar(1.0, t * t) / (2.0 * i() * t3),
        ic: -Complex64::from_polar(1.0, 0.5 * t * t) / (t3 * t),
    }
}

/// Moments over `[a, b]` by Gauss-Legendre panels no wider than `0.5/|t|`.
fn moments_between(a: f64, b: f64) -> FresnelMoments {
    let mut acc = FresnelMoments::default();
    let mut lo = a;
    while lo < b {
        let width = (0.5 / (lo.abs() + 0.25)).min(0.25);
        let hi = (lo + width).min(b);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for &(node, weight) in &GAUSS {
            for t in [mid - half * node, mid + half * node] {
                let f = fresnel_cumulative(t);
                let w = weight * half;
                let m = f.norm_sqr();
                acc.ia += w * m;
                acc.ib += f * f * w;
                acc.ic += f * (m * w);
            }
        }
        lo = hi;
    }
    acc
}

/// Moments over `(−∞, t]` with the quadrature started at `start`.
pub fn fresnel_moments(t: f64, start: f64) -> Result<FresnelMoments> {
    if !(start <= -100.0) || !t.is_finite() {
        return Err(Error::param("start", "moment quadrature needs start <= -100 and finite t"));
    }
    if t <= start {
        return Ok(moments_tail(t));
    }
    Ok(moments_tail(start) + moments_between(start, t))
}

/// `J(t) = ∫_{−∞}^t F = tF(t) + i e^{it²/2}`.
pub fn fresnel_antiderivative(t: f64) -> Complex64 {
    t * fresnel_cumulative(t) + i() * Complex64::from_polar(1.0, 0.5 * t * t)
}

fn zip3<F>(a: &WaveField, b: &WaveField, c: &WaveField, op: F) -> Result<WaveField>
where
    F: Fn(Complex64, Complex64, Complex64) -> Complex64,
{
    same_grid(a, b)?;
    same_grid(a, c)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .zip(c.values())
        .map(|((&x, &y), &z)| op(x, y, z))
        .collect();
    WaveField::new(a.grid(), values)
}

/// `i(∂²u + |u|²u)`, the NLSE time derivative.
pub fn nlse_rhs(u: &WaveField) -> Result<WaveField> {
    let uxx = second_derivative(u)?;
    uxx.zip_with(u, |d2, v| i() * (d2 + v * v.norm_sqr()))
}

fn check_time(t2: f64) -> Result<()> {
    if t2 == 0.0 {
        Err(Error::SingularTime)
    } else if !t2.is_finite() {
        Err(Error::param("t2", "must be finite"))
    } else {
        Ok(())
    }
}

/// Forced mode `ε·(−f/t₂)·e^{iθ(t₂)}` shared by both outer expansions.
pub fn forced_mode(f: &WaveField, t2: f64, epsilon: f64) -> Result<WaveField> {
    check_time(t2)?;
    let c = SweepPhase::new(epsilon)?.carrier(t2) * (-epsilon / t2);
    f.scale(c)
}

/// Pre-resonance outer ansatz (`t₂ < 0`), as a slow-frame envelope.
pub fn outer_pre_field(
    u1: &WaveField,
    f: &ForcingProfile,
    t2: f64,
    epsilon: f64,
    order: ExpansionOrder,
) -> Result<WaveField> {
    let f = f.sample(u1.grid())?;
    outer_pre_field_sampled(u1, &f, t2, epsilon, order)
}

/// [`outer_pre_field`] with the forcing already sampled on the grid.
pub fn outer_pre_field_sampled(
    u1: &WaveField,
    f: &WaveField,
    t2: f64,
    epsilon: f64,
    order: ExpansionOrder,
) -> Result<WaveField> {
    same_grid(u1, f)?;
    check_time(t2)?;
    let phase = SweepPhase::new(epsilon)?;
    let e1 = phase.carrier(t2);
    let lead = u1.zip_with(f, |u, fv| u + e1 * (-fv / t2) * epsilon)?;
    if order == ExpansionOrder::Leading {
        return Ok(lead);
    }
    let fxx = second_derivative(f)?;
    let (e3, e4) = (epsilon.powi(3), epsilon.powi(4));
    let e2 = e1 * e1;
    let values = lead
        .values()
        .iter()
        .zip(u1.values())
        .zip(f.values().iter().zip(fxx.values()))
        .map(|((&l, &u), (&fv, &d2))| {
            let b2 = -fv / t2;
            let b2_t = fv / (t2 * t2);
            let b2_xx = -d2 / t2;
            let b41 = (i() * b2_t + b2_xx + 2.0 * u.norm_sqr() * b2) / t2;
            let b4m1 = -u * u * b2.conj() / t2;
            let b52 = u.conj() * b2 * b2 / (2.0 * t2);
            l + (b41 * e1 + b4m1 * e1.conj()) * e3 + b52 * e2 * e4
        })
        .collect();
    WaveField::new(u1.grid(), values)
}

/// Connection formula `v¹(·, 0) = u₀ + (1−i)√π f`.
pub fn connection_map(u0: &WaveField, f: &ForcingProfile) -> Result<WaveField> {
    let f = f.sample(u0.grid())?;
    connection_map_sampled(u0, &f)
}

/// [`connection_map`] with the forcing already sampled on the grid.
pub fn connection_map_sampled(u0: &WaveField, f: &WaveField) -> Result<WaveField> {
    let c = connection_constant();
    u0.zip_with(f, |u, fv| u + c * fv)
}

/// Post-resonance outer ansatz `v¹ + εA₂e^{iθ}`, `A₂ = −f/t₂` (`t₂ > 0`).
pub fn outer_post_field(
    v1: &WaveField,
    f: &ForcingProfile,
    t2: f64,
    epsilon: f64,
) -> Result<WaveField> {
    let f = f.sample(v1.grid())?;
    outer_post_field_sampled(v1, &f, t2, epsilon)
}

/// [`outer_post_field`] with the forcing already sampled on the grid.
pub fn outer_post_field_sampled(
    v1: &WaveField,
    f: &WaveField,
    t2: f64,
    epsilon: f64,
) -> Result<WaveField> {
    check_time(t2)?;
    if t2 < 0.0 {
        return Err(Error::param("t2", "post-resonance field needs t2 > 0"));
    }
    v1.add(&forced_mode(f, t2, epsilon)?)
}

/// Inner-layer solution for one `(u₀, f)` pair.
///
/// The expensive part of the moment quadrature (from `−∞` to `t₁ = −20`)
/// is done once on construction.
#[derive(Debug, Clone)]
pub struct InnerLayer {
    u0: WaveField,
    f: WaveField,
    slope: WaveField,
    linear: WaveField,
    anchor: FresnelMoments,
}

impl InnerLayer {
    pub fn new(u0: &WaveField, f: &ForcingProfile) -> Result<Self> {
        let f = f.sample(u0.grid())?;
        Self::from_sampled(u0, &f)
    }

    pub fn from_sampled(u0: &WaveField, f: &WaveField) -> Result<Self> {
        same_grid(u0, f)?;
        u0.check_finite()?;
        let slope = nlse_rhs(u0)?;
        let fxx = second_derivative(f)?;
        let linear = zip3(&fxx, u0, f, |d2, u, fv| d2 + 2.0 * u.norm_sqr() * fv)?;
        let anchor = fresnel_moments(ANCHOR, INNER_START)?;
        let check = fresnel_moments(ANCHOR, INNER_CHECK_START)?;
        let drift = anchor.max_abs_diff(&check);
        if drift > INNER_START_TOL {
            return Err(Error::Quadrature(format!(
                "inner moments move by {drift:.3e} when the start is doubled"
            )));
        }
        Ok(InnerLayer {
            u0: u0.clone(),
            f: f.clone(),
            slope,
            linear,
            anchor,
        })
    }

    pub fn u0(&self) -> &WaveField {
        &self.u0
    }

    pub fn forcing(&self) -> &WaveField {
        &self.f
    }

    /// Matching slope `∂_{t₂}u¹(·, 0) = i(u₀'' + |u₀|²u₀)`.
    pub fn pre_slope(&self) -> &WaveField {
        &self.slope
    }

    fn moments(&self, t1: f64) -> Result<FresnelMoments> {
        if t1 <= ANCHOR {
            fresnel_moments(t1, INNER_START)
        } else {
            Ok(self.anchor + moments_between(ANCHOR, t1))
        }
    }

    /// `w¹(t₁) = u₀ − i f F(t₁)`; `t₁ = ±∞` gives the exact limits.
    pub fn leading(&self, t1: f64) -> Result<WaveField> {
        if t1.is_nan() {
            return Err(Error::param("t1", "NaN"));
        }
        let c = -i() * fresnel_cumulative(t1);
        self.u0.zip_with(&self.f, |u, fv| u + c * fv)
    }

    /// `w²(t₁)` for finite `t₁`.
    pub fn second(&self, t1: f64) -> Result<WaveField> {
        if !t1.is_finite() {
            return Err(Error::param("t1", "second inner order grows linearly; t1 must be finite"));
        }
        let m = self.moments(t1)?;
        let j = fresnel_antiderivative(t1);
        let values = self
            .u0
            .values()
            .iter()
            .zip(self.f.values())
            .zip(self.slope.values().iter().zip(self.linear.values()))
            .map(|((&u, &fv), (&s, &lin))| {
                s * t1 + lin * j - u * u * fv.conj() * j.conj()
                    + 2.0 * i() * u * fv.norm_sqr() * m.ia
                    - i() * u.conj() * fv * fv * m.ib
                    + fv * fv.norm_sqr() * m.ic
            })
            .collect();
        WaveField::new(self.u0.grid(), values)
    }

    /// Envelope `w¹ + ε·w²` (second order) or `w¹` (leading).
    pub fn field(&self, t1: f64, epsilon: f64, order: ExpansionOrder) -> Result<WaveField> {
        let w1 = self.leading(t1)?;
        match order {
            ExpansionOrder::Leading => Ok(w1),
            ExpansionOrder::Second => {
                if !(epsilon > 0.0) {
                    return Err(Error::param("epsilon", "must be positive"));
                }
                w1.add(&self.second(t1)?.scale(Complex64::new(epsilon, 0.0))?)
            }
        }
    }

    /// Post-limit field `w¹₀ = w¹(+∞) = u₀ + (1−i)√π f`.
    pub fn post_limit(&self) -> Result<WaveField> {
        connection_map_sampled(&self.u0, &self.f)
    }

    /// Closed-form slope `w²₁ = i(∂²w¹₀ + |w¹₀|²w¹₀)` of `w²` as `t₁ → +∞`.
    pub fn post_slope(&self) -> Result<WaveField> {
        nlse_rhs(&self.post_limit()?)
    }

    /// Closed-form offset `w²₀ = lim (w² − t₁·w²₁)` as `t₁ → +∞`.
    ///
    /// Uses `F = F(∞) − G` with `∫₀^∞G = i`, `∫₀^∞G^k|G|^m` equal to the
    /// corresponding moments over `(−∞, 0]`, and `lim(J − t₁F(∞)) = 0`.
    pub fn post_offset(&self) -> Result<WaveField> {
        let m0 = self.moments(0.0)?;
        let fi = fresnel_plus_infinity();
        let re_ifc = (i() * fi.conj()).re;
        let ca = 2.0 * m0.ia - 2.0 * re_ifc;
        let cb = 2.0 * m0.ib - 2.0 * i() * fi;
        let cc = fi.conj() * m0.ib + 2.0 * fi * m0.ia
            - i() * fi.norm_sqr()
            - 2.0 * fi * re_ifc;
        let values = self
            .u0
            .values()
            .iter()
            .zip(self.f.values())
            .map(|(&u, &fv)| {
                2.0 * i() * u * fv.norm_sqr() * ca - i() * u.conj() * fv * fv * cb
                    + fv * fv.norm_sqr() * cc
            })
            .collect();
        WaveField::new(self.u0.grid(), values)
    }
}

/// Leading (or second-order) inner envelope at `t₁`.
pub fn inner_field(
    u0: &WaveField,
    f: &ForcingProfile,
    t1: f64,
    epsilon: f64,
    order: ExpansionOrder,
) -> Result<WaveField> {
    InnerLayer::new(u0, f)?.field(t1, epsilon, order)
}

/// `(w²₁, w²₀)`, the slope and offset of `w²` as `t₁ → +∞`.
///
/// The closed forms are checked against the computed `w²` at `t₁ = 100`
/// and `200` (finite-difference slope, Richardson-extrapolated offset);
/// a relative mismatch above [`LIMIT_TOL`] is an error.
pub fn w2_limit_slope_and_offset(
    u0: &WaveField,
    f: &ForcingProfile,
) -> Result<(WaveField, WaveField)> {
    let layer = InnerLayer::new(u0, f)?;
    let slope = layer.post_slope()?;
    let offset = layer.post_offset()?;
    let (t_a, t_b) = (100.0, 200.0);
    let wa = layer.second(t_a)?;
    let wb = layer.second(t_b)?;
    let fd = wb.sub(&wa)?.scale(Complex64::new(1.0 / (t_b - t_a), 0.0))?;
    let scale = sup_norm(&slope).max(sup_norm(&offset));
    if scale == 0.0 {
        return Ok((slope, offset));
    }
    let slope_err = sup_norm(&fd.sub(&slope)?);
    // C(T) = w²(T) − T·w²₁ → w²₀ + O(1/T)
    let ca = wa.sub(&slope.scale(Complex64::new(t_a, 0.0))?)?;
    let cb = wb.sub(&slope.scale(Complex64::new(t_b, 0.0))?)?;
    let extrapolated = cb.scale(Complex64::new(2.0, 0.0))?.sub(&ca)?;
    let offset_err = sup_norm(&extrapolated.sub(&offset)?);
    if slope_err > LIMIT_TOL * sup_norm(&slope).max(1e-300) || offset_err > LIMIT_TOL * scale {
        return Err(Error::Quadrature(format!(
            "large-t1 limit of w2 not converged: slope mismatch {slope_err:.3e}, \
             offset mismatch {offset_err:.3e} (scale {scale:.3e})"
        )));
    }
    Ok((slope, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, sup_distance, Grid1D};
    use crate::nlse::{analytic_soliton, pde_residual, Trajectory};
    use std::f64::consts::PI;

    fn grid() -> Grid1D {
        make_grid(512, 40.0).unwrap()
    }

    fn gauss(a: f64) -> ForcingProfile {
        ForcingProfile::gaussian(a, 1.0, 0.0)
    }

    fn index_of_zero(g: &Grid1D) -> usize {
        g.x().iter().position(|&x| x == 0.0).unwrap()
    }

    #[test]
    fn forced_mode_coefficient_at_unit_forcing() {
        let g = grid();
        let j = index_of_zero(&g);
        let eps = 0.1;
        let u = outer_pre_field(&WaveField::zeros(&g), &gauss(1.0), -1.0, eps, ExpansionOrder::Leading)
            .unwrap();
        let want = SweepPhase::new(eps).unwrap().carrier(-1.0) * eps;
        assert!((u.values()[j] - want).norm() < 1e-15);
        assert!(matches!(
            outer_pre_field(&u, &gauss(1.0), 0.0, eps, ExpansionOrder::Leading),
            Err(Error::SingularTime)
        ));
    }

    #[test]
    fn outer_fields_reduce_to_envelope_as_eps_vanishes() {
        let g = grid();
        let u1 = analytic_soliton(&g, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        for order in [ExpansionOrder::Leading, ExpansionOrder::Second] {
            let pre = outer_pre_field(&u1, &gauss(0.5), -0.4, 1e-8, order).unwrap();
            assert!(sup_distance(&pre, &u1).unwrap() < 1e-7);
        }
        let post = outer_post_field(&u1, &gauss(0.5), 0.4, 1e-8).unwrap();
        assert!(sup_distance(&post, &u1).unwrap() < 1e-7);
    }

    #[test]
    fn forced_mode_scales_like_inverse_time() {
        let g = grid();
        let f = gauss(0.7).sample(&g).unwrap();
        let eps = 0.05;
        let mut products = Vec::new();
        for t2 in [-0.8, -0.4, -0.1, 0.2, 0.9] {
            products.push(sup_norm(&forced_mode(&f, t2, eps).unwrap()) / eps * t2.abs());
        }
        for p in &products {
            assert!((p - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn post_coefficient_at_unit_forcing() {
        let g = grid();
        let j = index_of_zero(&g);
        let eps = 0.2;
        let v = outer_post_field(&WaveField::zeros(&g), &gauss(1.0), 1.0, eps).unwrap();
        let a2 = v.values()[j] / (SweepPhase::new(eps).unwrap().carrier(1.0) * eps);
        assert!((a2 - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
        let z = WaveField::zeros(&g);
        assert!(matches!(outer_post_field(&z, &gauss(1.0), 0.0, eps), Err(Error::SingularTime)));
        assert!(outer_post_field(&z, &gauss(1.0), -0.3, eps).is_err());
    }

    /// Residual of the outer ansatz built around an exact unforced soliton.
    fn outer_residual(eps: f64, t2: f64, order: ExpansionOrder) -> f64 {
        let g = make_grid(1024, 40.0).unwrap();
        let f = gauss(0.5);
        let h = 1e-3 * eps * eps / t2.abs();
        let fields = [t2 - h, t2, t2 + h]
            .iter()
            .map(|&t| {
                let u1 = analytic_soliton(&g, 1.0, 0.0, 0.0, 0.0, t).unwrap();
                (t, outer_pre_field(&u1, &f, t, eps, order).unwrap())
            })
            .collect();
        let traj = Trajectory::from_fields(eps, f.sample(&g).unwrap(), fields).unwrap();
        pde_residual(&traj, 1).unwrap()
    }

    #[test]
    fn second_order_outer_terms_cancel_residual() {
        let mut previous = f64::INFINITY;
        for eps in [0.1, 0.05] {
            let lead = outer_residual(eps, -0.4, ExpansionOrder::Leading);
            let second = outer_residual(eps, -0.4, ExpansionOrder::Second);
            assert!(second < 0.3 * lead, "eps={eps}: {second:e} vs {lead:e}");
            assert!(second < 0.25 * previous);
            previous = second;
        }
    }

    #[test]
    fn connection_map_examples() {
        let g = grid();
        let j = index_of_zero(&g);
        let z = WaveField::zeros(&g);
        assert_eq!(sup_norm(&connection_map(&z, &ForcingProfile::none()).unwrap()), 0.0);

        let a = 0.8;
        let v = connection_map(&z, &gauss(a)).unwrap();
        for (x, val) in g.x().iter().zip(v.values()) {
            let want = (2.0 * PI).sqrt() * a * (-x * x).exp();
            assert!((val.norm() - want).abs() < 1e-14);
        }

        let one = WaveField::from_fn(&g, |_| Complex64::new(1.0, 0.0)).unwrap();
        let fone = gauss(1.0).sample(&g).unwrap();
        let w = connection_map_sampled(&one, &fone).unwrap();
        assert!((w.values()[j] - Complex64::new(2.772453850905516, -1.772453850905516)).norm() < 1e-12);
    }

    #[test]
    fn connection_map_is_affine_in_u0() {
        let g = grid();
        let u0 = analytic_soliton(&g, 0.8, 0.3, 1.0, 0.4, 0.0).unwrap();
        let f = ForcingProfile::Sech {
            amplitude: 0.3,
            width: 0.5,
            center: -1.0,
        };
        let lhs = connection_map(&u0, &f)
            .unwrap()
            .sub(&connection_map(&WaveField::zeros(&g), &f).unwrap())
            .unwrap();
        assert!(sup_distance(&lhs, &u0).unwrap() < 1e-15);
    }

    #[test]
    fn inner_leading_limits() {
        let g = grid();
        let u0 = analytic_soliton(&g, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let layer = InnerLayer::new(&u0, &ForcingProfile::none()).unwrap();
        for t1 in [-30.0, 0.0, 7.0] {
            assert_eq!(layer.leading(t1).unwrap(), u0);
        }

        let f = gauss(0.6);
        let layer = InnerLayer::new(&u0, &f).unwrap();
        let conn = connection_map(&u0, &f).unwrap();
        assert_eq!(layer.leading(f64::INFINITY).unwrap(), conn);
        assert_eq!(layer.leading(f64::NEG_INFINITY).unwrap(), u0);
        let fs = layer.forcing().clone();
        for (t1, tol) in [(20.0, 1e-3), (1e3, 1e-8)] {
            // w¹ − limit ≈ −i f e^{it²/2}/(it)
            let tail = fs.scale(-i() * Complex64::from_polar(1.0, 0.5 * t1 * t1) / (i() * t1)).unwrap();
            let gap = layer.leading(t1).unwrap().sub(&conn).unwrap();
            assert!(sup_distance(&gap, &tail).unwrap() <= tol, "t1={t1}");
        }
    }

    #[test]
    fn antiderivative_of_fresnel() {
        let h = 1e-5;
        for t in [-40.0, -6.0, -0.5, 0.0, 3.0, 9.0] {
            let d = (fresnel_antiderivative(t + h) - fresnel_antiderivative(t - h)) / (2.0 * h);
            assert!((d - fresnel_cumulative(t)).norm() < 1e-8, "t={t}");
        }
        assert!(fresnel_antiderivative(-1e4).norm() < 1e-7);
    }

    #[test]
    fn moments_insensitive_to_start() {
        let a = fresnel_moments(-20.0, INNER_START).unwrap();
        let b = fresnel_moments(-20.0, INNER_CHECK_START).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9, "{:e}", a.max_abs_diff(&b));
        assert!((a.ia - 1.0 / 20.0).abs() < 1e-4);
        // derivative of the cumulative moments
        let h = 1e-4;
        let t = 1.3;
        let lo = fresnel_moments(t - h, INNER_START).unwrap();
        let hi = fresnel_moments(t + h, INNER_START).unwrap();
        let f = fresnel_cumulative(t);
        assert!(((hi.ia - lo.ia) / (2.0 * h) - f.norm_sqr()).abs() < 1e-7);
        assert!(((hi.ib - lo.ib) / (2.0 * h) - f * f).norm() < 1e-7);
        assert!(((hi.ic - lo.ic) / (2.0 * h) - f * f.norm_sqr()).norm() < 1e-7);
    }

    #[test]
    fn second_inner_order_solves_its_equation() {
        let g = make_grid(256, 30.0).unwrap();
        let u0 = analytic_soliton(&g, 0.9, 0.2, 0.5, 0.1, 0.0).unwrap();
        let layer = InnerLayer::new(&u0, &gauss(0.5)).unwrap();
        let h = 1e-4;
        for t1 in [-30.0, -3.0, 0.0, 2.5, 15.0] {
            let d = layer
                .second(t1 + h)
                .unwrap()
                .sub(&layer.second(t1 - h).unwrap())
                .unwrap()
                .scale(Complex64::new(0.5 / h, 0.0))
                .unwrap();
            let rhs = nlse_rhs(&layer.leading(t1).unwrap()).unwrap();
            let err = sup_distance(&d, &rhs).unwrap();
            assert!(err < 1e-6 * sup_norm(&rhs).max(1.0), "t1={t1}: {err:e}");
        }
        // matching: w² − s·t₁ → 0 as t₁ → −∞
        let t1 = -150.0;
        let gap = layer
            .second(t1)
            .unwrap()
            .sub(&layer.pre_slope().scale(Complex64::new(t1, 0.0)).unwrap())
            .unwrap();
        assert!(sup_norm(&gap) < 0.02, "{:e}", sup_norm(&gap));
        assert!(layer.second(f64::INFINITY).is_err());
    }

    #[test]
    fn w2_limits_trivial_and_soliton() {
        let g = grid();
        let z = WaveField::zeros(&g);
        let (s, o) = w2_limit_slope_and_offset(&z, &ForcingProfile::none()).unwrap();
        assert_eq!(sup_norm(&s), 0.0);
        assert_eq!(sup_norm(&o), 0.0);

        let u0 = analytic_soliton(&g, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let (s, o) = w2_limit_slope_and_offset(&u0, &ForcingProfile::none()).unwrap();
        // ∂_t U = i a² U at the soliton's phase origin
        let want = u0.scale(i()).unwrap();
        assert!(sup_distance(&s, &want).unwrap() < 1e-6);
        assert!(sup_norm(&o) < 1e-12);
    }

    #[test]
    fn w2_slope_matches_finite_difference() {
        let g = grid();
        let f = gauss(0.5);
        let z = WaveField::zeros(&g);
        let (s, o) = w2_limit_slope_and_offset(&z, &f).unwrap();
        let layer = InnerLayer::new(&z, &f).unwrap();
        let fd = layer
            .second(60.0)
            .unwrap()
            .sub(&layer.second(30.0).unwrap())
            .unwrap()
            .scale(Complex64::new(1.0 / 30.0, 0.0))
            .unwrap();
        assert!(sup_distance(&fd, &s).unwrap() <= 1e-3);
        assert!(sup_norm(&o) > 0.0);

        let u0 = analytic_soliton(&g, 0.8, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(w2_limit_slope_and_offset(&u0, &f).is_ok());
    }

    #[test]
    fn inner_second_order_adds_scaled_correction() {
        let g = grid();
        let u0 = analytic_soliton(&g, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let f = gauss(0.4);
        let lead = inner_field(&u0, &f, -2.0, 0.1, ExpansionOrder::Leading).unwrap();
        let second = inner_field(&u0, &f, -2.0, 0.1, ExpansionOrder::Second).unwrap();
        let w2 = InnerLayer::new(&u0, &f).unwrap().second(-2.0).unwrap();
        let diff = second.sub(&lead).unwrap().scale(Complex64::new(10.0, 0.0)).unwrap();
        assert!(sup_distance(&diff, &w2).unwrap() < 1e-12);
    }
}
