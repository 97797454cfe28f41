//! Subcommand definitions and dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nlse_lab::asymptotics::connection_map;
use nlse_lab::exec::ExecMode;
use nlse_lab::experiments::{
    convergence_study, reference_config, soliton_scattering_scan, with_soliton_initial,
    ConvergenceOptions, ScanOptions, CSV_SCHEMA_VERSION,
};
use nlse_lab::field::{energy, make_grid, mass, sup_norm, WaveField};
use nlse_lab::fresnel::fresnel_cumulative;
use nlse_lab::nlse::{analytic_soliton, evolve, SimulationConfig, SolitonParams, Trajectory};
use nlse_lab::scattering::{spectrum_stability, zs_discrete_spectrum, zs_potential};
use serde_json::json;

use crate::config::{emit_config, parse_config};
use crate::error::{CliError, CliResult};
use crate::fieldio::{field_to_csv, read_field};
use crate::manifest::RunDir;
use crate::plots::{emit_plots, PlotSource};

#[derive(Debug, Parser)]
#[command(name = "nlse-lab", version, about = "Driven NLSE resonance lab")]
pub struct Cli {
    /// Validate inputs and report planned outputs without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full PDE run: snapshots, diagnostics and a |U| plot.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Connection formula applied to a stored pre-resonance field.
    Connect {
        field: PathBuf,
        /// Config whose `forcing` section is used.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Zakharov-Shabat discrete eigenvalues of a stored field.
    Spectrum {
        field: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        /// Also run the noise and grid-doubling robustness check.
        #[arg(long)]
        stability: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Error of the asymptotic prediction across epsilon.
    Converge {
        /// Base config; the built-in reference scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.14, 0.1, 0.07, 0.05])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.3)]
        t2_check: f64,
        /// Repeat each run on a doubled grid.
        #[arg(long)]
        grid_check: bool,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Soliton count after resonance across forcing amplitudes.
    Scan {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        amplitudes: Vec<f64>,
        /// Replace the initial condition with a soliton of this amplitude.
        #[arg(long)]
        soliton_a: Option<f64>,
        /// Check counts against full simulations at this epsilon.
        #[arg(long)]
        full_eps: Option<f64>,
        #[arg(long, default_value_t = 1)]
        full_stride: usize,
        #[arg(long, default_value_t = 1e-3)]
        bisection_tol: f64,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Table of F(t1), the cumulative Fresnel integral from -infinity.
    FresnelTable {
        #[arg(long, allow_hyphen_values = true)]
        t1_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        t1_max: f64,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Analytic soliton field; `--order N` multiplies the profile by N.
    Soliton {
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 40.0)]
        length: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phi0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t2: f64,
        #[arg(long, default_value_t = 1)]
        order: u32,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct ExecArgs {
    /// Run sequentially instead of on the worker pool.
    #[arg(long)]
    pub sequential: bool,
}

impl ExecArgs {
    fn mode(self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

fn load_base(config: &Option<PathBuf>) -> CliResult<SimulationConfig> {
    match config {
        Some(p) => parse_config(p),
        None => Ok(reference_config()),
    }
}

fn dry_run(out: &mut dyn Write, dir: Option<&Path>, files: &[&str]) -> CliResult<()> {
    match dir {
        Some(d) => writeln!(out, "dry run: inputs valid; would write {} to {}", files.join(", "), d.display())?,
        None => writeln!(out, "dry run: inputs valid; would print to stdout")?,
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{name} must be positive, got {v}")))
    }
}

/// Runs one parsed command line, printing to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let dry = cli.dry_run;
    match cli.command {
        Command::Simulate { config, out_dir } => simulate(&config, &out_dir, dry, out),
        Command::Connect {
            field,
            config,
            out_dir,
        } => connect(&field, &config, out_dir.as_deref(), dry, out),
        Command::Spectrum {
            field,
            threshold,
            stability,
            out_dir,
        } => spectrum(&field, threshold, stability, out_dir.as_deref(), dry, out),
        Command::Converge {
            config,
            eps,
            t2_check,
            grid_check,
            exec,
            out_dir,
        } => {
            let base = load_base(&config)?;
            let files = ["convergence.csv", "convergence.json", "convergence.svg"];
            if dry {
                return dry_run(out, Some(&out_dir), &files);
            }
            let opts = ConvergenceOptions {
                grid_check,
                exec: exec.mode(),
            };
            let report = convergence_study(&eps, &base, t2_check, opts)?;
            let mut run = RunDir::create(
                &out_dir,
                "converge",
                json!({"base": base, "eps": eps, "t2_check": t2_check, "grid_check": grid_check}),
            )?;
            if let Some(p) = &config {
                run.add_input(p)?;
            }
            run.time("study", report.runtime_seconds);
            run.write(files[0], report.to_csv().as_bytes())?;
            run.write(files[1], serde_json::to_string_pretty(&report).expect("report").as_bytes())?;
            emit_plots(PlotSource::Convergence(&report), run.dir())?;
            run.record(files[2]);
            run.finish()?;
            writeln!(
                out,
                "slope {:.4} (95% CI [{:.4}, {:.4}])",
                report.slope, report.slope_interval.0, report.slope_interval.1
            )?;
            Ok(())
        }
        Command::Scan {
            config,
            amplitudes,
            soliton_a,
            full_eps,
            full_stride,
            bisection_tol,
            exec,
            out_dir,
        } => {
            let mut base = load_base(&config)?;
            if let Some(a) = soliton_a {
                positive("soliton-a", a)?;
                base = with_soliton_initial(&base, SolitonParams { a, b: 0.0, x0: 0.0, phi0: 0.0 });
            }
            let files = ["scan.csv", "scan.json", "scan.svg"];
            if dry {
                return dry_run(out, Some(&out_dir), &files);
            }
            let opts = ScanOptions {
                bisection_tol,
                full_epsilon: full_eps,
                full_stride: full_stride.max(1),
                exec: exec.mode(),
                ..Default::default()
            };
            let report = soliton_scattering_scan(&amplitudes, &base, opts)?;
            let mut run = RunDir::create(
                &out_dir,
                "scan",
                json!({"base": base, "amplitudes": amplitudes, "full_eps": full_eps,
                       "full_stride": full_stride, "bisection_tol": bisection_tol}),
            )?;
            if let Some(p) = &config {
                run.add_input(p)?;
            }
            run.time("scan", report.runtime_seconds);
            run.write(files[0], report.to_csv().as_bytes())?;
            run.write(files[1], serde_json::to_string_pretty(&report).expect("report").as_bytes())?;
            emit_plots(PlotSource::Scan(&report), run.dir())?;
            run.record(files[2]);
            run.finish()?;
            let t: Vec<String> = report.thresholds.iter().map(|t| format!("{t:.4}")).collect();
            writeln!(out, "thresholds [{}]", t.join(", "))?;
            for r in report.full_mismatches() {
                writeln!(out, "mismatch at a = {}: map {} full {:?}", r.amplitude, r.n_post, r.full_count)?;
            }
            Ok(())
        }
        Command::FresnelTable {
            t1_min,
            t1_max,
            step,
            out_dir,
        } => {
            positive("step", step)?;
            if !(t1_max >= t1_min) || !t1_min.is_finite() || !t1_max.is_finite() {
                return Err(CliError::usage("--t1-max must be at least --t1-min"));
            }
            let count = ((t1_max - t1_min) / step + 1e-9).floor() as usize + 1;
            if count > 10_000_000 {
                return Err(CliError::usage(format!("{count} rows requested; raise --step")));
            }
            if dry {
                return dry_run(out, out_dir.as_deref(), &["fresnel.csv"]);
            }
            let mut csv = String::from("schema_version,t1,re_f,im_f\n");
            for i in 0..count {
                let t = (t1_min + i as f64 * step).min(t1_max);
                let f = fresnel_cumulative(t);
                csv.push_str(&format!("{CSV_SCHEMA_VERSION},{t},{:e},{:e}\n", f.re, f.im));
            }
            emit_text(
                out,
                out_dir.as_deref(),
                "fresnel-table",
                json!({"t1_min": t1_min, "t1_max": t1_max, "step": step}),
                None,
                "fresnel.csv",
                &csv,
            )
        }
        Command::Soliton {
            n,
            length,
            a,
            b,
            x0,
            phi0,
            t2,
            order,
            out_dir,
        } => {
            let grid = make_grid(n, length)?;
            if order == 0 {
                return Err(CliError::usage("--order must be at least 1"));
            }
            let u = analytic_soliton(&grid, a, b, x0, phi0, t2)?.scale((order as f64).into())?;
            if dry {
                return dry_run(out, out_dir.as_deref(), &["soliton.csv"]);
            }
            emit_text(
                out,
                out_dir.as_deref(),
                "soliton",
                json!({"n": n, "length": length, "a": a, "b": b, "x0": x0,
                       "phi0": phi0, "t2": t2, "order": order}),
                None,
                "soliton.csv",
                &field_to_csv(&u),
            )
        }
    }
}

/// Prints `text` or stores it as `name` under `dir` with a manifest.
fn emit_text(
    out: &mut dyn Write,
    dir: Option<&Path>,
    command: &str,
    config: serde_json::Value,
    input: Option<&Path>,
    name: &str,
    text: &str,
) -> CliResult<()> {
    match dir {
        None => {
            out.write_all(text.as_bytes())?;
        }
        Some(d) => {
            let mut run = RunDir::create(d, command, config)?;
            if let Some(p) = input {
                run.add_input(p)?;
            }
            let path = run.write(name, text.as_bytes())?;
            run.finish()?;
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    Ok(())
}

fn trajectory_csvs(traj: &Trajectory) -> (String, String) {
    let mut snaps = String::from("schema_version,t2,x,re,im\n");
    let mut diag = String::from("schema_version,t2,mass,energy,sup_abs\n");
    for s in traj.snapshots() {
        for (x, v) in s.field.grid().x().iter().zip(s.field.values()) {
            snaps.push_str(&format!("{CSV_SCHEMA_VERSION},{},{x},{:e},{:e}\n", s.t2, v.re, v.im));
        }
        diag.push_str(&format!(
            "{CSV_SCHEMA_VERSION},{},{:e},{:e},{:e}\n",
            s.t2,
            s.mass,
            s.energy,
            sup_norm(&s.field)
        ));
    }
    (snaps, diag)
}

fn simulate(config_path: &Path, out_dir: &Path, dry: bool, out: &mut dyn Write) -> CliResult<()> {
    let config = parse_config(config_path)?;
    let files = ["config.json", "snapshots.csv", "diagnostics.csv", "snapshots.svg"];
    if dry {
        return dry_run(out, Some(out_dir), &files);
    }
    let started = Instant::now();
    let traj = evolve(&config)?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut run = RunDir::create(out_dir, "simulate", serde_json::to_value(&config).expect("config"))?;
    run.add_input(config_path)?;
    run.time("evolve", elapsed);
    let (snaps, diag) = trajectory_csvs(&traj);
    run.write(files[0], emit_config(&config).as_bytes())?;
    run.write(files[1], snaps.as_bytes())?;
    run.write(files[2], diag.as_bytes())?;
    emit_plots(PlotSource::Trajectory(&traj), run.dir())?;
    run.record(files[3]);
    run.finish()?;
    let last = traj.last();
    writeln!(
        out,
        "t2 = {} mass {:.6e} energy {:.6e} sup {:.6e}",
        last.t2,
        mass(&last.field),
        energy(&last.field),
        sup_norm(&last.field)
    )?;
    Ok(())
}

fn connect(
    field_path: &Path,
    config_path: &Path,
    out_dir: Option<&Path>,
    dry: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let u0 = read_field(field_path)?;
    let config = parse_config(config_path)?;
    config.forcing.sample(u0.grid())?;
    if dry {
        return dry_run(out, out_dir, &["connected.csv"]);
    }
    let v = connection_map(&u0, &config.forcing)?;
    let text = field_to_csv(&v);
    match out_dir {
        None => out.write_all(text.as_bytes())?,
        Some(d) => {
            let mut run = RunDir::create(d, "connect", json!({"forcing": config.forcing}))?;
            run.add_input(field_path)?;
            run.add_input(config_path)?;
            let path = run.write("connected.csv", text.as_bytes())?;
            run.finish()?;
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    Ok(())
}

fn spectrum(
    field_path: &Path,
    threshold: f64,
    stability: bool,
    out_dir: Option<&Path>,
    dry: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    positive("threshold", threshold)?;
    let u: WaveField = read_field(field_path)?;
    if dry {
        return dry_run(out, out_dir, &["spectrum.csv"]);
    }
    let q = zs_potential(&u)?;
    let data = zs_discrete_spectrum(&q, threshold)?;
    let mut csv = String::from("schema_version,re_zeta,im_zeta,abs_a\n");
    for (z, r) in data.eigenvalues.iter().zip(&data.diagnostics.residuals) {
        csv.push_str(&format!("{CSV_SCHEMA_VERSION},{:e},{:e},{:e}\n", z.re, z.im, r));
    }
    let unstable = if stability {
        Some(spectrum_stability(&q, 1e-8)?.unstable)
    } else {
        None
    };
    match out_dir {
        None => out.write_all(csv.as_bytes())?,
        Some(d) => {
            let mut run = RunDir::create(
                d,
                "spectrum",
                json!({"threshold": threshold, "stability": stability}),
            )?;
            run.add_input(field_path)?;
            run.write("spectrum.csv", csv.as_bytes())?;
            run.write(
                "spectrum.json",
                serde_json::to_string_pretty(&data).expect("spectrum").as_bytes(),
            )?;
            run.finish()?;
        }
    }
    match unstable {
        Some(true) => writeln!(out, "count {} UNSTABLE", data.soliton_count)?,
        _ => writeln!(out, "count {}", data.soliton_count)?,
    }
    Ok(())
}
