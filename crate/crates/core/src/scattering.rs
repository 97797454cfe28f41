//! Discrete Zakharov-Shabat spectrum of a decaying potential.
//!
//! ```text
//! v₁' = −iζ v₁ + q v₂,    v₂' = iζ v₂ − q̄ v₁
//! ```
//!
//! Candidates come from a dense eigensolve of the Fourier collocation of
//! `L = [[i∂, −iq], [−iq̄, −i∂]]`; each is polished by a secant iteration on
//! the scattering coefficient `a(ζ)`, evaluated by a fourth-order Magnus
//! transfer matrix across the support of `q`. Candidates whose `|a|` stays
//! above [`REJECT_TOL`] are dropped.
//!
//! With this convention `q = A sech x` has eigenvalues `i(A + ½ − k)`.
//! The NLSE field `U` of `iU_t + U_xx + |U|²U = 0` enters as
//! `q = U/√2` ([`zs_potential`]); the soliton
//! `√2·a·sech(a(x − 2bt))·e^{ibx}` then has `ζ = −b/2 + ia/2`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Spectral, WaveField};

/// Default cutoff on `Im ζ`.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Largest `|a(ζ)|` accepted after refinement.
pub const REJECT_TOL: f64 = 1e-6;
/// Eigenvalues closer than this are the same eigenvalue.
pub const MATCH_TOL: f64 = 1e-6;
/// Edge-to-peak ratio a potential must satisfy.
pub const EDGE_TOL: f64 = 1e-6;

const MIN_COLLOCATION: usize = 64;

fn i() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

/// Maps an NLSE envelope onto the ZS potential, `q = U/√2`.
pub fn zs_potential(u: &WaveField) -> Result<WaveField> {
    u.scale(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0))
}

/// Eigenvalue of the NLSE soliton `√2·a·sech(a(x−2bt−x₀))·e^{i(bx+…)}`.
pub fn soliton_eigenvalue(a: f64, b: f64) -> Complex64 {
    Complex64::new(-0.5 * b, 0.5 * a)
}

/// Solver knobs; the defaults serve every caller in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZsOptions {
    pub threshold: f64,
    /// Collocation size; `None` picks it from the spectral content of `q`.
    #[serde(default)]
    pub collocation: Option<usize>,
    pub max_collocation: usize,
    /// Magnus substeps per grid cell.
    pub substeps: usize,
    /// Cross-check the count with the argument principle.
    pub winding: bool,
}

impl Default for ZsOptions {
    fn default() -> Self {
        ZsOptions {
            threshold: DEFAULT_THRESHOLD,
            collocation: None,
            max_collocation: 512,
            substeps: 1,
            winding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    pub grid_n: usize,
    pub collocation_size: usize,
    pub candidates: usize,
    pub rejected: usize,
    /// `|a(ζ)|` at each returned eigenvalue.
    pub residuals: Vec<f64>,
    /// Largest eigenvalue change between collocation sizes `m/2` and `m`.
    pub doubling_drift: f64,
    /// Zeros of `a` inside the search rectangle by the argument principle.
    pub winding_count: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringData {
    /// Sorted by descending imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub soliton_count: usize,
    pub threshold: f64,
    pub diagnostics: SpectrumDiagnostics,
}

/// Transfer-matrix evaluator of `a(ζ)` for one potential.
pub struct Scattering {
    h: f64,
    /// `q` at the two Gauss points of each substep.
    gauss: Vec<(Complex64, Complex64)>,
    sup_q: f64,
    k_max: f64,
}

impl Scattering {
    pub fn new(q: &WaveField, substeps: usize) -> Result<Self> {
        q.check_finite()?;
        let substeps = substeps.max(1);
        let grid = q.grid();
        let n = grid.n();
        let dx = grid.dx();
        let sup_q = q.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let h = dx / substeps as f64;
        if sup_q == 0.0 {
            return Ok(Scattering {
                h,
                gauss: Vec::new(),
                sup_q,
                k_max: grid.k().iter().fold(0.0f64, |m, k| m.max(k.abs())),
            });
        }
        let cut = 1e-16 * sup_q;
        let first = q.values().iter().position(|v| v.norm() > cut).unwrap_or(0);
        let last = q.values().iter().rposition(|v| v.norm() > cut).unwrap_or(n - 1);
        let lo = first.saturating_sub(1);
        let hi = (last + 1).min(n - 1);

        let c = 3f64.sqrt() / 6.0;
        let offsets: Vec<f64> = (0..substeps)
            .flat_map(|s| {
                let base = s as f64 * h;
                [base + (0.5 - c) * h, base + (0.5 + c) * h]
            })
            .collect();
        let mut sp = Spectral::for_grid(grid);
        let mut spec = q.values().to_vec();
        sp.forward(&mut spec);
        let shifted: Vec<Vec<Complex64>> = offsets
            .iter()
            .map(|&d| {
                let mut s: Vec<Complex64> = spec
                    .iter()
                    .zip(grid.k())
                    .map(|(v, &k)| v * Complex64::from_polar(1.0, k * d))
                    .collect();
                sp.inverse(&mut s);
                s
            })
            .collect();
        let mut gauss = Vec::with_capacity((hi - lo) * substeps);
        #[allow(clippy::needless_range_loop)]
        for j in lo..hi {
            for s in 0..substeps {
                gauss.push((shifted[2 * s][j], shifted[2 * s + 1][j]));
            }
        }
        Ok(Scattering {
            h,
            gauss,
            sup_q,
            k_max: grid.k().iter().fold(0.0f64, |m, k| m.max(k.abs())),
        })
    }

    /// Scattering coefficient `a(ζ) = lim_{x→+∞} φ₁(x)e^{iζx}` for the Jost
    /// solution `φ ~ (1, 0)e^{−iζx}` at `−∞`.
    pub fn a(&self, zeta: Complex64) -> Complex64 {
        let h = self.h;
        let k = 3f64.sqrt() * h * h / 12.0;
        let shift = (i() * zeta * h).exp();
        let (mut p1, mut p2) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        for &(q1, q2) in &self.gauss {
            let o11 = -i() * zeta * h + (q1 * q2.conj() - q2 * q1.conj()) * k;
            let o12 = (q1 + q2) * (0.5 * h) + 2.0 * i() * zeta * (q2 - q1) * k;
            let o21 = -(q1.conj() + q2.conj()) * (0.5 * h) + 2.0 * i() * zeta * (q2.conj() - q1.conj()) * k;
            let lam = (o11 * o11 + o12 * o21).sqrt();
            let ch = lam.cosh();
            let sh = if lam.norm() < 1e-8 {
                Complex64::new(1.0, 0.0) + lam * lam / 6.0
            } else {
                lam.sinh() / lam
            };
            let n1 = (ch + sh * o11) * p1 + sh * o12 * p2;
            let n2 = sh * o21 * p1 + (ch - sh * o11) * p2;
            p1 = n1 * shift;
            p2 = n2 * shift;
        }
        p1
    }

    /// Secant polish of a candidate; returns the root and `|a|` there.
    pub fn refine(&self, seed: Complex64) -> Option<(Complex64, f64)> {
        let mut z0 = seed;
        let mut a0 = self.a(z0);
        let mut z1 = seed + Complex64::new(1e-4, 1e-4) * seed.norm().max(1.0);
        let mut a1 = self.a(z1);
        let mut best = a0.norm().min(a1.norm());
        let mut stalled = 0;
        for _ in 0..80 {
            if !(a1.re.is_finite() && a1.im.is_finite()) {
                return None;
            }
            if a1.norm() < 1e-15 {
                break;
            }
            let denom = a1 - a0;
            if denom.norm() == 0.0 {
                break;
            }
            let mut step = a1 * (z1 - z0) / denom;
            let cap = 0.25 * z1.norm().max(1.0);
            if step.norm() > cap {
                step *= cap / step.norm();
            }
            z0 = z1;
            a0 = a1;
            z1 -= step;
            a1 = self.a(z1);
            if z1.im <= 0.0 || z1.im > self.sup_q + 1.0 {
                return None;
            }
            if step.norm() < 1e-15 * z1.norm().max(1.0) {
                break;
            }
            // spurious candidates wander without reducing |a|
            if a1.norm() < 0.5 * best {
                best = a1.norm();
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 6 {
                    return None;
                }
            }
        }
        let r = a1.norm();
        r.is_finite().then_some((z1, r))
    }

    /// Winding number of `a` around the rectangle `|Re ζ| ≤ X`,
    /// `threshold ≤ Im ζ ≤ Y` (`Y` above `sup|q|`, which bounds `Im ζ`).
    pub fn winding_count(&self, threshold: f64) -> i64 {
        if self.sup_q == 0.0 {
            return 0;
        }
        let x = 0.5 * self.k_max + 1.0;
        let y = self.sup_q + 0.5;
        let corners = [
            Complex64::new(-x, threshold),
            Complex64::new(x, threshold),
            Complex64::new(x, y),
            Complex64::new(-x, y),
        ];
        let mut total = 0.0;
        for s in 0..4 {
            let (za, zb) = (corners[s], corners[(s + 1) % 4]);
            let pieces = ((zb - za).norm() / 0.5).ceil().max(8.0) as usize;
            let mut prev_z = za;
            let mut prev_a = self.a(za);
            for p in 1..=pieces {
                let z = za + (zb - za) * (p as f64 / pieces as f64);
                let az = self.a(z);
                total += self.arg_change(prev_z, prev_a, z, az, 0);
                prev_z = z;
                prev_a = az;
            }
        }
        (total / (2.0 * std::f64::consts::PI)).round() as i64
    }

    fn arg_change(&self, za: Complex64, aa: Complex64, zb: Complex64, ab: Complex64, depth: u32) -> f64 {
        let d = (ab / aa).arg();
        if d.abs() < 0.5 || depth >= 14 {
            return d;
        }
        let zm = 0.5 * (za + zb);
        let am = self.a(zm);
        self.arg_change(za, aa, zm, am, depth + 1) + self.arg_change(zm, am, zb, ab, depth + 1)
    }
}

/// Collocation size capturing the spectral content of `q`.
fn auto_collocation(q: &WaveField, max: usize) -> usize {
    let n = q.grid().n();
    let mut spec = q.values().to_vec();
    Spectral::new(n).forward(&mut spec);
    let power: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total == 0.0 {
        return MIN_COLLOCATION.min(n);
    }
    let mut m = MIN_COLLOCATION.min(n);
    while m < n.min(max) {
        let outside: f64 = (0..n)
            .filter(|&j| {
                let idx = if j <= n / 2 { j } else { n - j };
                idx >= m / 2
            })
            .map(|j| power[j])
            .sum();
        if outside <= 1e-9 * total {
            break;
        }
        m *= 2;
    }
    m
}

/// Candidate eigenvalues from the dense Fourier collocation at size `m`.
fn collocation_candidates(q: &WaveField, m: usize, threshold: f64, sup_q: f64) -> Result<Vec<Complex64>> {
    let qm = q.resample(m)?;
    let grid = qm.grid().clone();
    let mut sp = Spectral::new(m);
    let mut qh = qm.values().to_vec();
    sp.forward(&mut qh);
    qh.iter_mut().for_each(|v| *v /= m as f64);
    let k = grid.k();
    let coef = |j: isize| qh[j.rem_euclid(m as isize) as usize];
    let mat = DMatrix::<Complex64>::from_fn(2 * m, 2 * m, |r, c| {
        let (br, pr) = (r / m, r % m);
        let (bc, pc) = (c / m, c % m);
        let diff = pr as isize - pc as isize;
        match (br, bc) {
            (0, 0) => Complex64::new(if pr == pc { -k[pr] } else { 0.0 }, 0.0),
            (1, 1) => Complex64::new(if pr == pc { k[pr] } else { 0.0 }, 0.0),
            (0, 1) => -i() * coef(diff),
            _ => -i() * coef(-diff).conj(),
        }
    });
    let ev = mat
        .eigenvalues()
        .ok_or_else(|| Error::Quadrature("collocation eigensolve failed".into()))?;
    Ok(ev
        .iter()
        .copied()
        .filter(|z| z.im > 0.5 * threshold && z.im <= sup_q + 1.0)
        .collect())
}

/// Seeds for roots too close to the axis for the periodic collocation to
/// resolve: near-axis collocation eigenvalues lifted just above `threshold`.
fn near_axis_seeds(q: &WaveField, m: usize, threshold: f64) -> Result<Vec<Complex64>> {
    let mut seeds: Vec<Complex64> = collocation_candidates(q, m, -1.0, f64::MAX)?
        .into_iter()
        .chain(collocation_candidates(&q.map(|v| v.conj())?, m, -1.0, f64::MAX)?)
        .filter(|z| z.re.abs() <= 2.0)
        .map(|z| Complex64::new(z.re, 2.0 * threshold))
        .collect();
    seeds.sort_by(|a, b| a.re.total_cmp(&b.re));
    seeds.dedup_by(|a, b| (a.re - b.re).abs() < 0.05);
    Ok(seeds)
}

struct Refined {
    eigenvalues: Vec<Complex64>,
    residuals: Vec<f64>,
    candidates: usize,
    rejected: usize,
}

/// Largest `|a|` at a collocation candidate worth polishing; continuum
/// artifacts sit where `|a| ≳ 1`.
const SEED_TOL: f64 = 0.25;

fn refine_all(sc: &Scattering, candidates: &[Complex64], threshold: f64) -> Refined {
    refine_seeds(sc, candidates, threshold, SEED_TOL)
}

fn refine_seeds(sc: &Scattering, candidates: &[Complex64], threshold: f64, seed_tol: f64) -> Refined {
    let mut found: Vec<(Complex64, f64)> = Vec::new();
    let mut rejected = 0;
    for &c in candidates {
        if sc.a(c).norm() > seed_tol {
            rejected += 1;
            continue;
        }
        match sc.refine(c) {
            Some((z, r)) if r <= REJECT_TOL && z.im >= threshold => {
                if !found.iter().any(|(w, _)| (w - z).norm() < MATCH_TOL) {
                    found.push((z, r));
                }
            }
            _ => rejected += 1,
        }
    }
    found.sort_by(|a, b| b.0.im.total_cmp(&a.0.im));
    Refined {
        eigenvalues: found.iter().map(|p| p.0).collect(),
        residuals: found.iter().map(|p| p.1).collect(),
        candidates: candidates.len(),
        rejected,
    }
}

/// Largest distance from an eigenvalue of one list to the other list;
/// infinite when the counts differ.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .map(|z| b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Discrete spectrum with the default options and the given threshold.
pub fn zs_discrete_spectrum(q: &WaveField, threshold: f64) -> Result<ScatteringData> {
    zs_discrete_spectrum_with(
        q,
        &ZsOptions {
            threshold,
            ..ZsOptions::default()
        },
    )
}

/// Discrete spectrum of `q` in `Im ζ ≥ threshold`.
///
/// The refined spectra from collocation sizes `m/2` and `m` must agree (and
/// the winding count must not exceed the count); otherwise `m` is doubled up
/// to `max_collocation`, after which [`Error::CollocationTooSmall`] is raised.
pub fn zs_discrete_spectrum_with(q: &WaveField, opts: &ZsOptions) -> Result<ScatteringData> {
    if !(opts.threshold > 0.0) {
        return Err(Error::param("threshold", "must be positive"));
    }
    q.check_finite()?;
    let ratio = q.edge_ratio();
    if ratio > EDGE_TOL {
        return Err(Error::NonDecaying { ratio });
    }
    let n = q.grid().n();
    let sc = Scattering::new(q, opts.substeps)?;
    let winding = (opts.winding && sc.sup_q > 0.0).then(|| sc.winding_count(opts.threshold));
    if sc.sup_q == 0.0 {
        return Ok(ScatteringData {
            eigenvalues: Vec::new(),
            soliton_count: 0,
            threshold: opts.threshold,
            diagnostics: SpectrumDiagnostics {
                grid_n: n,
                collocation_size: 0,
                candidates: 0,
                rejected: 0,
                residuals: Vec::new(),
                doubling_drift: 0.0,
                winding_count: Some(0),
            },
        });
    }
    let cap = opts.max_collocation.min(n).max(MIN_COLLOCATION.min(n));
    let mut m = opts
        .collocation
        .unwrap_or_else(|| auto_collocation(q, cap))
        .clamp(MIN_COLLOCATION.min(n), cap);
    let floor = MIN_COLLOCATION.min(n) / 2;
    let mut fine = refine_all(&sc, &collocation_candidates(q, m, opts.threshold, sc.sup_q)?, opts.threshold);
    let mut coarse = refine_all(
        &sc,
        &collocation_candidates(q, (m / 2).max(floor), opts.threshold, sc.sup_q)?,
        opts.threshold,
    );
    loop {
        let drift = spectrum_distance(&coarse.eigenvalues, &fine.eigenvalues);
        let winding_ok = winding.is_none_or(|w| w <= fine.eigenvalues.len() as i64);
        // roots too close to the axis for the collocation
        if drift <= MATCH_TOL && !winding_ok {
            let seeds = near_axis_seeds(q, m, opts.threshold)?;
            let extra = refine_seeds(&sc, &seeds, opts.threshold, f64::INFINITY);
            for (z, r) in extra.eigenvalues.iter().zip(&extra.residuals) {
                if !fine.eigenvalues.iter().any(|w| (w - z).norm() < MATCH_TOL) {
                    fine.eigenvalues.push(*z);
                    fine.residuals.push(*r);
                }
            }
            let mut pairs: Vec<(Complex64, f64)> =
                fine.eigenvalues.drain(..).zip(fine.residuals.drain(..)).collect();
            pairs.sort_by(|a, b| b.0.im.total_cmp(&a.0.im));
            (fine.eigenvalues, fine.residuals) = pairs.into_iter().unzip();
            fine.candidates += extra.candidates;
        }
        let winding_ok = winding.is_none_or(|w| w <= fine.eigenvalues.len() as i64);
        if drift <= MATCH_TOL && winding_ok {
            let count = fine.eigenvalues.len();
            return Ok(ScatteringData {
                soliton_count: count,
                threshold: opts.threshold,
                diagnostics: SpectrumDiagnostics {
                    grid_n: n,
                    collocation_size: m,
                    candidates: fine.candidates,
                    rejected: fine.rejected,
                    residuals: fine.residuals,
                    doubling_drift: drift,
                    winding_count: winding,
                },
                eigenvalues: fine.eigenvalues,
            });
        }
        if 2 * m > cap {
            let drift = if drift.is_finite() { drift } else { f64::MAX };
            return Err(Error::CollocationTooSmall { drift });
        }
        m *= 2;
        coarse = fine;
        fine = refine_all(&sc, &collocation_candidates(q, m, opts.threshold, sc.sup_q)?, opts.threshold);
    }
}

/// Number of discrete eigenvalues above the default threshold.
pub fn soliton_count(q: &WaveField) -> Result<usize> {
    Ok(zs_discrete_spectrum(q, DEFAULT_THRESHOLD)?.soliton_count)
}

/// Robustness of a spectrum under small noise and grid doubling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub base: ScatteringData,
    pub noisy_count: usize,
    pub refined_count: usize,
    /// Largest eigenvalue change over both perturbations.
    pub max_drift: f64,
    /// Smallest `Im ζ` among kept eigenvalues, or among near-miss roots
    /// just below the threshold, measured as distance to the threshold.
    pub threshold_margin: f64,
    pub unstable: bool,
}

/// Margin (in `Im ζ`) inside which a count is flagged as unstable.
pub const UNSTABLE_MARGIN: f64 = 5e-3;

/// Re-runs the spectrum under multiplicative noise of relative size
/// `perturbation_scale` (fixed seed) and on a twice finer grid.
///
/// The count is UNSTABLE when it changes under either perturbation, or when
/// an eigenvalue (kept or rejected only by the threshold) lies within
/// [`UNSTABLE_MARGIN`] of the `Im ζ` cutoff.
pub fn spectrum_stability(q: &WaveField, perturbation_scale: f64) -> Result<StabilityReport> {
    let opts = ZsOptions::default();
    let base = zs_discrete_spectrum_with(q, &opts)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let noisy_values: Vec<Complex64> = q
        .values()
        .iter()
        .map(|v| {
            let xi = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            v * (Complex64::new(1.0, 0.0) + xi * perturbation_scale)
        })
        .collect();
    let noisy = zs_discrete_spectrum_with(&WaveField::new(q.grid(), noisy_values)?, &opts)?;
    let refined = zs_discrete_spectrum_with(&q.resample(2 * q.grid().n())?, &opts)?;

    let drift = |other: &ScatteringData| -> f64 {
        if other.soliton_count != base.soliton_count {
            return f64::INFINITY;
        }
        spectrum_distance(&base.eigenvalues, &other.eigenvalues)
    };
    let max_drift = drift(&noisy).max(drift(&refined));

    // roots just under the cutoff, found with a tiny threshold
    let low = zs_discrete_spectrum_with(
        q,
        &ZsOptions {
            threshold: 1e-6,
            ..opts
        },
    )
    .map(|d| d.eigenvalues)
    .unwrap_or_default();
    let threshold_margin = low
        .iter()
        .chain(&base.eigenvalues)
        .map(|z| (z.im - opts.threshold).abs())
        .fold(f64::INFINITY, f64::min);
    let unstable = noisy.soliton_count != base.soliton_count
        || refined.soliton_count != base.soliton_count
        || threshold_margin < UNSTABLE_MARGIN;
    Ok(StabilityReport {
        noisy_count: noisy.soliton_count,
        refined_count: refined.soliton_count,
        max_drift: if max_drift.is_finite() { max_drift } else { f64::MAX },
        threshold_margin,
        unstable,
        base,
    })
}
