//! End-to-end studies: full simulation against the connection formula,
//! ε-convergence, soliton-count scans and ansatz residual probes.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::asymptotics::{
    connection_map_sampled, forced_mode, outer_pre_field_sampled, ExpansionOrder, InnerLayer,
};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::field::{l2_distance, sup_norm, GridSpec, WaveField};
use crate::nlse::{
    analytic_soliton, dress_forced_mode, evolve_unforced, pde_residual, ForcingProfile,
    InitialCondition, Propagator, SimulationConfig, SolitonParams, Trajectory,
};
use crate::scattering::{
    soliton_count, spectrum_stability, zs_discrete_spectrum, zs_potential, DEFAULT_THRESHOLD,
};

/// Version of every CSV table written by this module.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Versioned reference scenario: L=40, n=1024, ε=0.1, t₂∈[−0.5, 0.5],
/// gaussian forcing of unit width.
pub const REFERENCE_CONFIG_JSON: &str = include_str!("../configs/reference_v1.json");

pub fn reference_config() -> SimulationConfig {
    serde_json::from_str(REFERENCE_CONFIG_JSON).expect("bundled reference config parses")
}

/// Hex SHA-256 of the canonical JSON form of `config`.
pub fn config_hash(config: &SimulationConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Which pieces of the asymptotic solution enter a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOptions {
    /// Include the `(1−i)√π f` jump; off for the ablation.
    pub connection: bool,
    /// `Second` also starts the post-resonance field from `ε·w²₀`.
    pub order: ExpansionOrder,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        ComparisonOptions {
            connection: true,
            order: ExpansionOrder::Leading,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonErrors {
    pub sup_error: f64,
    pub relative_error: f64,
    pub l2_error: f64,
}

fn check_span(config: &SimulationConfig, t2_check: f64) -> Result<()> {
    config.validate()?;
    if !(config.t2_start < 0.0 && t2_check > 0.0 && t2_check <= config.t2_end) {
        return Err(Error::Experiment(format!(
            "resonance not inside the time span: need t2_start < 0 < t2_check <= t2_end, \
             got {} / {t2_check} / {}",
            config.t2_start, config.t2_end
        )));
    }
    Ok(())
}

/// `u¹(·, 0)`: the pre-resonance field evolved without forcing to `t₂ = 0`.
pub fn pre_resonance_limit(config: &SimulationConfig) -> Result<WaveField> {
    let grid = config.grid.build()?;
    let u1 = config.initial.build(&grid, config.t2_start)?;
    evolve_unforced(&u1, config.epsilon, config.t2_start, 0.0, config.dt2)
}

/// Full driven field at `t2_check` with the leading forced mode removed.
fn full_envelope(config: &SimulationConfig, t2_check: f64) -> Result<WaveField> {
    let grid = config.grid.build()?;
    let mut prop = Propagator::new(&grid, config.epsilon, &config.forcing, config.toggles)?;
    let mut initial = config.initial.build(&grid, config.t2_start)?;
    if config.toggles.dress_forced_mode {
        initial = dress_forced_mode(&initial, prop.forcing(), config.t2_start, config.epsilon)?;
    }
    let end = prop
        .propagate(&initial, config.t2_start, t2_check, config.dt2, 0)?
        .last()
        .field
        .clone();
    let f = config.forcing.sample(&grid)?;
    end.sub(&forced_mode(&f, t2_check, config.epsilon)?)
}

/// Post-resonance outer envelope `v` at `t2_check`, evolved from the
/// connection data at `t₂ = 0`.
fn asymptotic_envelope(
    config: &SimulationConfig,
    t2_check: f64,
    opts: ComparisonOptions,
) -> Result<WaveField> {
    let grid = config.grid.build()?;
    let f = config.forcing.sample(&grid)?;
    let u0 = pre_resonance_limit(config)?;
    let mut v0 = if opts.connection {
        connection_map_sampled(&u0, &f)?
    } else {
        u0.clone()
    };
    if opts.order == ExpansionOrder::Second && config.toggles.forcing {
        let offset = InnerLayer::from_sampled(&u0, &f)?.post_offset()?;
        v0 = v0.add(&offset.scale(Complex64::new(config.epsilon, 0.0))?)?;
    }
    evolve_unforced(&v0, config.epsilon, 0.0, t2_check, config.dt2)
}

/// Errors between the full simulation and the connection-formula solution
/// at `t2_check`, both with the known forced mode removed.
pub fn compare_full_vs_asymptotic(
    config: &SimulationConfig,
    t2_check: f64,
    opts: ComparisonOptions,
) -> Result<ComparisonErrors> {
    check_span(config, t2_check)?;
    let full = full_envelope(config, t2_check)?;
    let asym = asymptotic_envelope(config, t2_check, opts)?;
    let diff = full.sub(&asym)?;
    let sup_error = sup_norm(&diff);
    let scale = sup_norm(&asym).max(sup_norm(&full));
    Ok(ComparisonErrors {
        sup_error,
        relative_error: if scale > 0.0 { sup_error / scale } else { 0.0 },
        l2_error: l2_distance(&full, &asym)?,
    })
}

/// `(sup_error, relative_error)` of the leading-order connection formula.
pub fn run_full_vs_asymptotic(config: &SimulationConfig, t2_check: f64) -> Result<(f64, f64)> {
    let e = compare_full_vs_asymptotic(config, t2_check, ComparisonOptions::default())?;
    Ok((e.sup_error, e.relative_error))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub dt2: f64,
    pub sup_error: f64,
    pub relative_error: f64,
    pub l2_error: f64,
    /// Same run without the connection term.
    pub ablated_relative_error: f64,
    /// Same run with the `ε·w²₀` start.
    pub second_relative_error: f64,
    /// Same run on a twice finer grid.
    pub refined_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log(relative_error)` against `log ε`.
    pub slope: f64,
    /// 95% interval of the slope.
    pub slope_interval: (f64, f64),
    pub t2_check: f64,
    pub config: SimulationConfig,
    pub config_hash: String,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    /// Also run every ε on a twice finer grid.
    pub grid_check: bool,
    pub exec: ExecMode,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            grid_check: true,
            exec: ExecMode::Parallel,
        }
    }
}

/// Least-squares line through `(x, y)`; returns the slope and its 95%
/// interval.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<(f64, (f64, f64))> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::Experiment("slope fit needs at least three points".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Experiment("slope fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::Experiment(e.to_string()))?
        .inverse_cdf(0.975);
    Ok((slope, (slope - t * se, slope + t * se)))
}

fn config_for_epsilon(base: &SimulationConfig, eps: f64) -> SimulationConfig {
    let mut c = base.clone();
    c.epsilon = eps;
    c.dt2 = base.dt2.min(SimulationConfig::max_dt2(eps, base.t2_start, base.t2_end));
    c
}

/// Runs the full-vs-asymptotic comparison for each ε (strictly decreasing,
/// at least four values) and fits the error order.
pub fn convergence_study(
    eps_list: &[f64],
    base: &SimulationConfig,
    t2_check: f64,
    opts: ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if eps_list.len() < 4 {
        return Err(Error::Experiment("convergence study needs at least four epsilon values".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Experiment("epsilon values must be strictly decreasing".into()));
    }
    let started = Instant::now();
    check_span(base, t2_check)?;
    let rows: Vec<Result<ConvergenceRow>> = exec::map(opts.exec, eps_list, |&eps| {
        let config = config_for_epsilon(base, eps);
        let main = compare_full_vs_asymptotic(&config, t2_check, ComparisonOptions::default())?;
        let ablated = compare_full_vs_asymptotic(
            &config,
            t2_check,
            ComparisonOptions {
                connection: false,
                ..Default::default()
            },
        )?;
        let second = compare_full_vs_asymptotic(
            &config,
            t2_check,
            ComparisonOptions {
                order: ExpansionOrder::Second,
                ..Default::default()
            },
        )?;
        let refined = if opts.grid_check {
            let mut fine = config.clone();
            fine.grid = GridSpec {
                n: 2 * config.grid.n,
                ..config.grid
            };
            Some(compare_full_vs_asymptotic(&fine, t2_check, ComparisonOptions::default())?.relative_error)
        } else {
            None
        };
        Ok(ConvergenceRow {
            epsilon: eps,
            dt2: config.dt2,
            sup_error: main.sup_error,
            relative_error: main.relative_error,
            l2_error: main.l2_error,
            ablated_relative_error: ablated.relative_error,
            second_relative_error: second.relative_error,
            refined_relative_error: refined,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(r) = rows.iter().find(|r| !(r.relative_error > 0.0)) {
        return Err(Error::Experiment(format!(
            "relative error at eps = {} is not positive; nothing to fit",
            r.epsilon
        )));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.relative_error.ln()).collect();
    let (slope, slope_interval) = fit_slope(&x, &y)?;
    Ok(ConvergenceReport {
        rows,
        slope,
        slope_interval,
        t2_check,
        config: base.clone(),
        config_hash: config_hash(base),
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "schema_version,epsilon,dt2,sup_error,relative_error,l2_error,\
             ablated_relative_error,second_relative_error,refined_relative_error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{CSV_SCHEMA_VERSION},{},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.epsilon,
                r.dt2,
                r.sup_error,
                r.relative_error,
                r.l2_error,
                r.ablated_relative_error,
                r.second_relative_error,
                r.refined_relative_error.map(|v| format!("{v:e}")).unwrap_or_default()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub amplitude: f64,
    pub n_pre: usize,
    pub n_post: usize,
    pub eigenvalues_post: Vec<Complex64>,
    /// Count not robust under noise, grid doubling or the threshold margin.
    pub unstable: bool,
    /// Count in the simulated field at `t2_end`, when the full PDE was run.
    pub full_count: Option<usize>,
    #[serde(default)]
    pub full_eigenvalues: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Amplitudes where `N_post` jumps, bisected to `bisection_tol`.
    pub thresholds: Vec<f64>,
    pub bisection_tol: f64,
    /// ε of the full-PDE cross-check runs.
    pub full_epsilon: Option<f64>,
    pub config: SimulationConfig,
    pub config_hash: String,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub bisection_tol: f64,
    /// ε for the full-PDE cross-check; `None` skips it.
    pub full_epsilon: Option<f64>,
    /// Run the full PDE on every `full_stride`-th amplitude.
    pub full_stride: usize,
    /// Relative noise for the stability check.
    pub perturbation: f64,
    pub exec: ExecMode,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            bisection_tol: 1e-3,
            full_epsilon: None,
            full_stride: 1,
            perturbation: 1e-8,
            exec: ExecMode::Parallel,
        }
    }
}

/// Soliton count of a simulated field at `t2_end`, after removing the
/// leading forced mode.
pub fn simulated_post_spectrum(config: &SimulationConfig) -> Result<Vec<Complex64>> {
    let env = full_envelope(config, config.t2_end)?;
    Ok(zs_discrete_spectrum(&zs_potential(&env)?, DEFAULT_THRESHOLD)?.eigenvalues)
}

fn post_count(u0: &WaveField, base: &ForcingProfile, a: f64) -> Result<usize> {
    let f = base.with_amplitude(a).sample(u0.grid())?;
    soliton_count(&zs_potential(&connection_map_sampled(u0, &f)?)?)
}

/// Counts solitons before and after the resonance for each forcing
/// amplitude (ascending), bisects every jump of `N_post`, and optionally
/// cross-checks `N_post` against the full simulation.
pub fn soliton_scattering_scan(
    amplitudes: &[f64],
    base: &SimulationConfig,
    opts: ScanOptions,
) -> Result<ScanReport> {
    if amplitudes.is_empty() {
        return Err(Error::Experiment("no amplitudes to scan".into()));
    }
    if amplitudes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Experiment("amplitudes must be strictly ascending".into()));
    }
    if !(opts.bisection_tol > 0.0) {
        return Err(Error::param("bisection_tol", "must be positive"));
    }
    let started = Instant::now();
    base.validate()?;
    let u0 = pre_resonance_limit(base)?;
    let n_pre = soliton_count(&zs_potential(&u0)?)?;
    let stride = opts.full_stride.max(1);
    let indexed: Vec<(usize, f64)> = amplitudes.iter().copied().enumerate().collect();
    let rows: Vec<Result<ScanRow>> = exec::map(opts.exec, &indexed, |&(k, a)| {
        let f = base.forcing.with_amplitude(a).sample(u0.grid())?;
        let q = zs_potential(&connection_map_sampled(&u0, &f)?)?;
        let stab = spectrum_stability(&q, opts.perturbation)?;
        let (full_count, full_eigenvalues) = match opts.full_epsilon {
            Some(eps) if k % stride == 0 => {
                let mut c = config_for_epsilon(base, eps);
                c.forcing = base.forcing.with_amplitude(a);
                let ev = simulated_post_spectrum(&c)?;
                (Some(ev.len()), ev)
            }
            _ => (None, Vec::new()),
        };
        Ok(ScanRow {
            amplitude: a,
            n_pre,
            n_post: stab.base.soliton_count,
            eigenvalues_post: stab.base.eigenvalues,
            unstable: stab.unstable,
            full_count,
            full_eigenvalues,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(w) = rows.windows(2).find(|w| w[1].n_post < w[0].n_post) {
        return Err(Error::Experiment(format!(
            "N_post decreases from {} at a = {} to {} at a = {}",
            w[0].n_post, w[0].amplitude, w[1].n_post, w[1].amplitude
        )));
    }
    let mut thresholds = Vec::new();
    for w in rows.windows(2) {
        if w[1].n_post == w[0].n_post {
            continue;
        }
        let (mut lo, mut hi) = (w[0].amplitude, w[1].amplitude);
        let low_count = w[0].n_post;
        while hi - lo > opts.bisection_tol {
            let mid = 0.5 * (lo + hi);
            if post_count(&u0, &base.forcing, mid)? > low_count {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        thresholds.push(0.5 * (lo + hi));
    }
    Ok(ScanReport {
        rows,
        thresholds,
        bisection_tol: opts.bisection_tol,
        full_epsilon: opts.full_epsilon,
        config: base.clone(),
        config_hash: config_hash(base),
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

impl ScanReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "schema_version,amplitude,n_pre,n_post,unstable,full_count,eigenvalues_post\n",
        );
        for r in &self.rows {
            let ev: Vec<String> = r
                .eigenvalues_post
                .iter()
                .map(|z| format!("{:e}{:+e}i", z.re, z.im))
                .collect();
            out.push_str(&format!(
                "{CSV_SCHEMA_VERSION},{},{},{},{},{},{}\n",
                r.amplitude,
                r.n_pre,
                r.n_post,
                r.unstable,
                r.full_count.map(|c| c.to_string()).unwrap_or_default(),
                ev.join(" ")
            ));
        }
        out
    }

    /// Rows whose connection-map and simulated counts disagree, ignoring
    /// rows flagged unstable.
    pub fn full_mismatches(&self) -> Vec<&ScanRow> {
        self.rows
            .iter()
            .filter(|r| !r.unstable && r.full_count.is_some_and(|c| c != r.n_post))
            .collect()
    }
}

/// Single-lobe threshold of the gaussian family: the amplitude at which
/// `∫|q| dx = π/2` for `q = (1−i)√π f/√2`, `f = a·e^{−(x/σ)²}`.
pub fn gaussian_l1_threshold(width: f64) -> f64 {
    0.5 / width
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Pre,
    Inner,
    Post,
}

/// Setup for residual and matching probes: a one-soliton `u¹` and a
/// forcing profile on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProbe {
    pub grid: GridSpec,
    pub soliton: SolitonParams,
    pub forcing: ForcingProfile,
}

impl Default for ResidualProbe {
    fn default() -> Self {
        ResidualProbe {
            grid: GridSpec {
                n: 1024,
                length: 40.0,
            },
            soliton: SolitonParams {
                a: 1.0,
                b: 0.0,
                x0: 0.0,
                phi0: 0.0,
            },
            forcing: ForcingProfile::gaussian(0.5, 1.0, 0.0),
        }
    }
}

impl ResidualProbe {
    fn u1(&self, t2: f64) -> Result<WaveField> {
        let g = self.grid.build()?;
        let s = self.soliton;
        analytic_soliton(&g, s.a, s.b, s.x0, s.phi0, t2)
    }

    fn envelope(
        &self,
        regime: Regime,
        layer: &InnerLayer,
        f: &WaveField,
        eps: f64,
        t2: f64,
        order: ExpansionOrder,
    ) -> Result<WaveField> {
        match regime {
            Regime::Pre => outer_pre_field_sampled(&self.u1(t2)?, f, t2, eps, order),
            Regime::Inner => layer.field(t2 / eps, eps, order),
            Regime::Post => unreachable!("post envelopes are built by evolution"),
        }
    }

    /// Sup-norm PDE residual of the regime's ansatz. `t` is `t₂` for the
    /// outer regimes and `t₁` for the inner one. The post regime has only
    /// the leading envelope, so `order` is ignored there.
    pub fn residual(&self, regime: Regime, eps: f64, t: f64, order: ExpansionOrder) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::param("epsilon", "must lie in (0, 1)"));
        }
        let t2 = if regime == Regime::Inner { eps * t } else { t };
        match regime {
            Regime::Pre if !(t2 < 0.0) => return Err(Error::param("t", "pre regime needs t2 < 0")),
            Regime::Post if !(t2 > 0.0) => return Err(Error::param("t", "post regime needs t2 > 0")),
            _ => {}
        }
        let g = self.grid.build()?;
        let f = self.forcing.sample(&g)?;
        // resolves the fast phase, whose rate is t2/eps^2
        let dt = 1e-4 * eps * eps / eps.max(t2.abs());
        let times = [t2 - dt, t2, t2 + dt];
        let fields: Vec<(f64, WaveField)> = if regime == Regime::Post {
            let v0 = connection_map_sampled(&self.u1(0.0)?, &f)?;
            let va = evolve_unforced(&v0, eps, 0.0, times[0], 1e-3)?;
            let vb = evolve_unforced(&va, eps, times[0], times[1], dt)?;
            let vc = evolve_unforced(&vb, eps, times[1], times[2], dt)?;
            [va, vb, vc]
                .into_iter()
                .zip(times)
                .map(|(v, t)| Ok((t, v.add(&forced_mode(&f, t, eps)?)?)))
                .collect::<Result<_>>()?
        } else {
            let layer = InnerLayer::from_sampled(&self.u1(0.0)?, &f)?;
            times
                .iter()
                .map(|&t| Ok((t, self.envelope(regime, &layer, &f, eps, t, order)?)))
                .collect::<Result<_>>()?
        };
        pde_residual(&Trajectory::from_fields(eps, f, fields)?, 1)
    }

    /// Residual removed by the highest retained correction: the gap between
    /// the leading and second-order residuals.
    pub fn retained_term(&self, regime: Regime, eps: f64, t: f64) -> Result<f64> {
        let lead = self.residual(regime, eps, t, ExpansionOrder::Leading)?;
        let second = self.residual(regime, eps, t, ExpansionOrder::Second)?;
        Ok((lead - second).abs())
    }

    /// Sup-distance between the second-order outer and inner ansätze at
    /// `t₁ = −ε^{−1/2}`.
    pub fn matching_distance(&self, eps: f64) -> Result<f64> {
        let g = self.grid.build()?;
        let f = self.forcing.sample(&g)?;
        let t1 = -eps.powf(-0.5);
        let t2 = eps * t1;
        let outer = outer_pre_field_sampled(&self.u1(t2)?, &f, t2, eps, ExpansionOrder::Second)?;
        let inner =
            InnerLayer::from_sampled(&self.u1(0.0)?, &f)?.field(t1, eps, ExpansionOrder::Second)?;
        Ok(sup_norm(&outer.sub(&inner)?))
    }
}

/// Residual of the second-order ansatz of `regime` under the default probe.
pub fn validate_ansatz_residual(regime: Regime, eps: f64, t: f64) -> Result<f64> {
    ResidualProbe::default().residual(regime, eps, t, ExpansionOrder::Second)
}

/// Builds a reference-style config with a one-soliton initial field.
pub fn with_soliton_initial(base: &SimulationConfig, soliton: SolitonParams) -> SimulationConfig {
    let mut c = base.clone();
    c.initial = InitialCondition::Soliton(soliton);
    c
}
