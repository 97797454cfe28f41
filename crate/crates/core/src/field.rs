//! Periodic grid, complex field container, spectral derivatives and integral
//! diagnostics.
//!
//! Wavenumbers use the standard FFT ordering: index `j < n/2` holds
//! `2πj/L`, index `j > n/2` holds `2π(j-n)/L`. The Nyquist index `n/2` is
//! stored as `0` in [`Grid1D::k`] (odd-order derivatives drop it) while
//! [`Grid1D::k_squared`] keeps `(πn/L)²` there.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Grid1D {
    n: usize,
    length: f64,
    dx: f64,
    x: Arc<[f64]>,
    k: Arc<[f64]>,
    k2: Arc<[f64]>,
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D")
            .field("n", &self.n)
            .field("length", &self.length)
            .field("dx", &self.dx)
            .finish()
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length.to_bits() == other.length.to_bits()
    }
}

/// Serializable grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        make_grid(self.n, self.length)
    }
}

/// Builds a periodic grid on `[-length/2, length/2)`.
pub fn make_grid(n: usize, length: f64) -> Result<Grid1D> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::GridLength(length));
    }
    let dx = length / n as f64;
    let x: Vec<f64> = (0..n).map(|j| -length / 2.0 + j as f64 * dx).collect();
    let dk = 2.0 * PI / length;
    let half = n / 2;
    let mut k = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    for j in 0..n {
        let m = if j < half { j as f64 } else { j as f64 - n as f64 };
        k2[j] = (m * dk).powi(2);
        k[j] = if j == half { 0.0 } else { m * dk };
    }
    Ok(Grid1D {
        n,
        length,
        dx,
        x: x.into(),
        k: k.into(),
        k2: k2.into(),
    })
}

impl Grid1D {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Angular wavenumbers, Nyquist entry zeroed.
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Squared wavenumbers, Nyquist entry kept.
    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            length: self.length,
        }
    }

    /// Same domain, `factor` times as many points.
    pub fn refined(&self, factor: usize) -> Result<Grid1D> {
        make_grid(self.n * factor, self.length)
    }
}

/// Forward/inverse FFT pair for one grid size. Holds its own scratch, so
/// each worker owns one.
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Spectral {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn for_grid(grid: &Grid1D) -> Self {
        Self::new(grid.n())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.forward.process_with_scratch(data, &mut self.scratch);
    }

    /// Inverse transform in place, normalized by `1/n`.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, &mut self.scratch);
        let s = 1.0 / self.n as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Multiplies the spectrum by `symbol(j)` for each index `j`.
    pub fn apply_symbol<F>(&mut self, data: &mut [Complex64], symbol: F)
    where
        F: Fn(usize) -> Complex64,
    {
        self.forward(data);
        data.iter_mut()
            .enumerate()
            .for_each(|(j, v)| *v *= symbol(j));
        self.inverse(data);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl WaveField {
    /// Wraps values, rejecting NaN/Inf.
    pub fn new(grid: &Grid1D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::param(
                "values",
                format!("expected {} samples, got {}", grid.n(), values.len()),
            ));
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(WaveField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid1D) -> Self {
        WaveField {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: &Grid1D, f: F) -> Result<Self> {
        let values = grid.x().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_parts(grid: &Grid1D, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        WaveField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self
            .values
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Pointwise map, grid kept.
    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<WaveField> {
        WaveField::new(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<F>(&self, other: &WaveField, f: F) -> Result<WaveField>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        same_grid(self, other)?;
        WaveField::new(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &WaveField) -> Result<WaveField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &WaveField) -> Result<WaveField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: Complex64) -> Result<WaveField> {
        self.map(|v| v * s)
    }

    /// Ratio of the larger edge magnitude to the maximum magnitude.
    pub fn edge_ratio(&self) -> f64 {
        let max = sup_norm(self);
        if max == 0.0 {
            return 0.0;
        }
        let first = self.values[0].norm();
        let last = self.values[self.values.len() - 1].norm();
        first.max(last) / max
    }

    /// Edge-decay diagnostic: fails when `edge_ratio() > tol`.
    pub fn check_edge_decay(&self, tol: f64) -> Result<()> {
        let ratio = self.edge_ratio();
        if ratio > tol {
            Err(Error::NonDecaying { ratio })
        } else {
            Ok(())
        }
    }

    /// Spectral interpolation onto a grid with the same length and more
    /// points (zero padding), or fewer points (truncation).
    pub fn resample(&self, n: usize) -> Result<WaveField> {
        let target = make_grid(n, self.grid.length())?;
        let m = self.grid.n();
        if n == m {
            return Ok(self.clone());
        }
        let mut spec = self.values.clone();
        Spectral::new(m).forward(&mut spec);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let keep = m.min(n) / 2;
        out[..keep].copy_from_slice(&spec[..keep]);
        for j in 1..keep {
            out[n - j] = spec[m - j];
        }
        // split the Nyquist bin of the coarser grid symmetrically
        if n > m {
            let nyq = spec[m / 2] * 0.5;
            out[m / 2] = nyq;
            out[n - m / 2] = nyq;
        } else {
            out[n / 2] = spec[n / 2] + spec[m - n / 2];
        }
        let scale = n as f64 / m as f64;
        let mut sp = Spectral::new(n);
        sp.inverse(&mut out);
        out.iter_mut().for_each(|v| *v *= scale);
        WaveField::new(&target, out)
    }
}

pub(crate) fn same_grid(a: &WaveField, b: &WaveField) -> Result<()> {
    if a.grid != b.grid {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Spectral second derivative: multiply the spectrum by `-k²`.
pub fn second_derivative(field: &WaveField) -> Result<WaveField> {
    field.check_finite()?;
    let mut sp = Spectral::for_grid(field.grid());
    Ok(second_derivative_with(&mut sp, field))
}

pub(crate) fn second_derivative_with(sp: &mut Spectral, field: &WaveField) -> WaveField {
    let k2 = field.grid().k_squared();
    let mut data = field.values().to_vec();
    sp.apply_symbol(&mut data, |j| Complex64::new(-k2[j], 0.0));
    WaveField::from_parts(field.grid(), data)
}

/// Spectral first derivative (Nyquist mode dropped).
pub fn first_derivative(field: &WaveField) -> Result<WaveField> {
    field.check_finite()?;
    let k = field.grid().k();
    let mut data = field.values().to_vec();
    Spectral::for_grid(field.grid()).apply_symbol(&mut data, |j| Complex64::new(0.0, k[j]));
    Ok(WaveField::from_parts(field.grid(), data))
}

/// `∫|u|² dx` by the rectangle rule.
pub fn mass(field: &WaveField) -> f64 {
    field.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * field.grid().dx()
}

/// Same quantity evaluated in spectral space: `(L/n²) Σ|û_k|²`.
pub fn mass_spectral(field: &WaveField) -> f64 {
    let mut data = field.values().to_vec();
    Spectral::for_grid(field.grid()).forward(&mut data);
    let n = field.grid().n() as f64;
    data.iter().map(|v| v.norm_sqr()).sum::<f64>() * field.grid().length() / (n * n)
}

/// `∫(|u_x|² − ½|u|⁴) dx` with a spectral derivative.
pub fn energy(field: &WaveField) -> f64 {
    let ux = match first_derivative(field) {
        Ok(d) => d,
        Err(_) => return f64::NAN,
    };
    let dx = field.grid().dx();
    field
        .values()
        .iter()
        .zip(ux.values())
        .map(|(u, d)| d.norm_sqr() - 0.5 * u.norm_sqr().powi(2))
        .sum::<f64>()
        * dx
}

pub fn sup_norm(field: &WaveField) -> f64 {
    field.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn sup_distance(a: &WaveField, b: &WaveField) -> Result<f64> {
    same_grid(a, b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max))
}

/// `(∫|a−b|² dx)^{1/2}`.
pub fn l2_distance(a: &WaveField, b: &WaveField) -> Result<f64> {
    same_grid(a, b)?;
    Ok((a.values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| (p - q).norm_sqr())
        .sum::<f64>()
        * a.grid().dx())
    .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(16, 16.0).unwrap();
        assert_eq!(g.dx(), 1.0);
        assert_eq!(g.x()[0], -8.0);
        let g = make_grid(1024, 40.0).unwrap();
        assert_eq!(g.dx(), 0.0390625);
        assert!((g.dx() * g.n() as f64 - g.length()).abs() <= f64::EPSILON * 40.0);
        match make_grid(12, 10.0) {
            Err(e @ Error::GridSize(12)) => assert!(e.to_string().contains("n not a power of two")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(make_grid(8, 1.0), Err(Error::GridSize(8))));
        assert!(matches!(make_grid(16, 0.0), Err(Error::GridLength(_))));
        assert!(matches!(make_grid(16, -1.0), Err(Error::GridLength(_))));
    }

    #[test]
    fn wavenumbers_symmetric() {
        let g = make_grid(64, 10.0).unwrap();
        let k = g.k();
        for &kj in k.iter().filter(|&&v| v != 0.0) {
            assert!(k.iter().any(|&v| (v + kj).abs() < 1e-12), "missing -{kj}");
        }
        assert_eq!(k[32], 0.0);
        assert!((g.k_squared()[32] - (PI * 64.0 / 10.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn second_derivative_of_modes() {
        let g = make_grid(128, 20.0).unwrap();
        for m in [1i32, 5, 17, 32] {
            let kk = 2.0 * PI * m as f64 / g.length();
            let u = WaveField::from_fn(&g, |x| Complex64::from_polar(1.0, kk * x)).unwrap();
            let d = second_derivative(&u).unwrap();
            for (a, b) in d.values().iter().zip(u.values()) {
                let want = b * (-kk * kk);
                assert!((a - want).norm() <= 1e-12 * kk * kk, "m={m}");
            }
        }
        let cst = WaveField::from_fn(&g, |_| Complex64::new(2.0, -1.0)).unwrap();
        assert!(sup_norm(&second_derivative(&cst).unwrap()) < 1e-12);
    }

    #[test]
    fn second_derivative_of_sech() {
        // sech(20) ~ 4e-9 leaves a kink in the periodic extension on L = 40,
        // which limits the spectral derivative to ~3e-7 there.
        for (n, l, tol) in [(2048, 60.0, 1e-10), (1024, 40.0, 5e-7)] {
            let g = make_grid(n, l).unwrap();
            let u = WaveField::from_fn(&g, |x| c(sech(x))).unwrap();
            let exact = WaveField::from_fn(&g, |x| c(sech(x) - 2.0 * sech(x).powi(3))).unwrap();
            let d = second_derivative(&u).unwrap();
            let e = sup_distance(&d, &exact).unwrap();
            assert!(e <= tol, "L={l}: {e:e}");
        }
    }

    #[test]
    fn mass_of_solitons() {
        let g = make_grid(1024, 40.0).unwrap();
        assert_eq!(mass(&WaveField::zeros(&g)), 0.0);
        for a in [1.0, 0.5] {
            let u = WaveField::from_fn(&g, |x| c(2f64.sqrt() * a * sech(a * x))).unwrap();
            assert!((mass(&u) - 4.0 * a).abs() <= 1e-8, "a={a}");
        }
    }

    #[test]
    fn energy_of_soliton() {
        let g = make_grid(1024, 40.0).unwrap();
        assert_eq!(energy(&WaveField::zeros(&g)), 0.0);
        let u = WaveField::from_fn(&g, |x| c(2f64.sqrt() * sech(x))).unwrap();
        assert!((energy(&u) + 4.0 / 3.0).abs() <= 1e-6, "{}", energy(&u));
    }

    #[test]
    fn energy_of_plane_wave() {
        let g = make_grid(64, 8.0).unwrap();
        let amp = 0.7;
        let m = 3.0;
        let kk = 2.0 * PI * m / g.length();
        let u = WaveField::from_fn(&g, |x| Complex64::from_polar(amp, kk * x)).unwrap();
        let want = (kk * kk - 0.5 * amp * amp) * amp * amp * g.length();
        assert!((energy(&u) - want).abs() < 1e-10);
    }

    #[test]
    fn sup_metrics() {
        let g = make_grid(32, 4.0).unwrap();
        let u = WaveField::from_fn(&g, |x| Complex64::new(x.sin(), x.cos() * 0.3)).unwrap();
        assert_eq!(sup_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(sup_distance(&u, &WaveField::zeros(&g)).unwrap(), sup_norm(&u));
        let other = WaveField::zeros(&make_grid(64, 4.0).unwrap());
        assert!(matches!(sup_distance(&u, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn parseval() {
        let g = make_grid(256, 30.0).unwrap();
        let u = WaveField::from_fn(&g, |x| Complex64::new((-x * x).exp(), 0.3 * sech(x))).unwrap();
        let a = mass(&u);
        assert!((a - mass_spectral(&u)).abs() <= 1e-12 * a);
    }

    #[test]
    fn fourth_derivative_matches_k4() {
        let g = make_grid(256, 30.0).unwrap();
        let u = WaveField::from_fn(&g, |x| c((-x * x / 4.0).exp())).unwrap();
        let twice = second_derivative(&second_derivative(&u).unwrap()).unwrap();
        let mut data = u.values().to_vec();
        let k2 = g.k_squared().to_vec();
        Spectral::for_grid(&g).apply_symbol(&mut data, |j| c(k2[j] * k2[j]));
        let direct = WaveField::new(&g, data).unwrap();
        assert!(sup_distance(&twice, &direct).unwrap() < 1e-10);
    }

    #[test]
    fn rejects_non_finite() {
        let g = make_grid(16, 1.0).unwrap();
        let mut v = vec![c(0.0); 16];
        v[3] = c(f64::NAN);
        assert!(matches!(WaveField::new(&g, v), Err(Error::NonFinite { index: 3 })));
    }

    #[test]
    fn edge_decay_diagnostic() {
        let g = make_grid(512, 40.0).unwrap();
        let good = WaveField::from_fn(&g, |x| c((-x * x).exp())).unwrap();
        assert!(good.check_edge_decay(1e-8).is_ok());
        let bad = WaveField::from_fn(&g, |x| c(sech(x / 8.0))).unwrap();
        assert!(matches!(bad.check_edge_decay(1e-8), Err(Error::NonDecaying { .. })));
    }

    #[test]
    fn resample_preserves_band_limited_field() {
        let g = make_grid(256, 40.0).unwrap();
        let u = WaveField::from_fn(&g, |x| Complex64::new(sech(x), 0.5 * (-x * x).exp())).unwrap();
        let fine = u.resample(1024).unwrap();
        let exact = WaveField::from_fn(fine.grid(), |x| Complex64::new(sech(x), 0.5 * (-x * x).exp()))
            .unwrap();
        assert!(sup_distance(&fine, &exact).unwrap() < 1e-9);
        let back = fine.resample(256).unwrap();
        assert!(sup_distance(&back, &u).unwrap() < 1e-12);
    }
}
