//! Static SVG line plots with the data provenance in a leading comment.

use std::path::{Path, PathBuf};

use nlse_lab::experiments::{ConvergenceReport, ScanReport};
use nlse_lab::nlse::Trajectory;
use plotters::prelude::*;

use crate::error::{CliError, CliResult};
use crate::manifest::write_atomic;

const SIZE: (u32, u32) = (720, 480);

type Series = (&'static str, RGBColor, Vec<(f64, f64)>);

pub enum PlotSource<'a> {
    Convergence(&'a ConvergenceReport),
    Scan(&'a ScanReport),
    Trajectory(&'a Trajectory),
}

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::usage(format!("plot: {e}"))
}

fn with_provenance(svg: String, lines: &[String]) -> String {
    let mut head = format!(
        "<!-- {} {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    for l in lines {
        head.push_str(&format!("     {}\n", l.replace("--", "- -")));
    }
    head.push_str("-->\n");
    match svg.find("<svg") {
        Some(pos) => format!("{}{head}{}", &svg[..pos], &svg[pos..]),
        None => head + &svg,
    }
}

/// Renders the plots for `source` into `out_dir` and returns their paths.
pub fn emit_plots(source: PlotSource, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let (name, svg) = match source {
        PlotSource::Convergence(r) => ("convergence.svg", convergence_svg(r)?),
        PlotSource::Scan(r) => ("scan.svg", scan_svg(r)?),
        PlotSource::Trajectory(t) => ("snapshots.svg", trajectory_svg(t)?),
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    write_atomic(&path, svg.as_bytes())
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(vec![path])
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.1, 1.0);
    }
    (lo / 1.5, hi * 1.5)
}

fn convergence_svg(r: &ConvergenceReport) -> CliResult<String> {
    if r.rows.is_empty() {
        return Err(CliError::usage("nothing to plot"));
    }
    let (x0, x1) = log_range(r.rows.iter().map(|row| row.epsilon));
    let (y0, y1) = log_range(r.rows.iter().flat_map(|row| {
        [row.relative_error, row.ablated_relative_error, row.second_relative_error]
    }));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let caption = format!(
            "relative error vs eps, fitted slope {:.3} [{:.3}, {:.3}]",
            r.slope, r.slope_interval.0, r.slope_interval.1
        );
        let mut chart = ChartBuilder::on(&root)
            .caption(caption, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("eps")
            .y_desc("relative sup error")
            .draw()
            .map_err(plot_err)?;
        let series: [Series; 3] = [
            ("connection formula", BLUE, r.rows.iter().map(|w| (w.epsilon, w.relative_error)).collect()),
            ("without connection term", RED, r.rows.iter().map(|w| (w.epsilon, w.ablated_relative_error)).collect()),
            ("with eps*w2 offset", GREEN, r.rows.iter().map(|w| (w.epsilon, w.second_relative_error)).collect()),
        ];
        for (label, color, pts) in series {
            chart
                .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            chart
                .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    let mut notes = vec![
        format!("source: convergence report, config sha256 {}", r.config_hash),
        format!("t2_check {}, fitted slope {}", r.t2_check, r.slope),
    ];
    notes.extend(r.rows.iter().map(|w| {
        format!("eps {} relative_error {:e} ablated {:e}", w.epsilon, w.relative_error, w.ablated_relative_error)
    }));
    Ok(with_provenance(svg, &notes))
}

/// Corners of the `N_post` staircase: flat between rows, vertical at each
/// bisected threshold.
pub fn staircase_points(r: &ScanReport) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    let Some(first) = r.rows.first() else {
        return pts;
    };
    pts.push((first.amplitude, first.n_post as f64));
    let mut thresholds = r.thresholds.iter();
    for w in r.rows.windows(2) {
        if w[1].n_post != w[0].n_post {
            let a = thresholds
                .next()
                .copied()
                .unwrap_or(0.5 * (w[0].amplitude + w[1].amplitude));
            pts.push((a, w[0].n_post as f64));
            pts.push((a, w[1].n_post as f64));
        }
    }
    let last = r.rows.last().expect("non-empty");
    pts.push((last.amplitude, last.n_post as f64));
    pts
}

fn scan_svg(r: &ScanReport) -> CliResult<String> {
    if r.rows.is_empty() {
        return Err(CliError::usage("nothing to plot"));
    }
    let pts = staircase_points(r);
    let a0 = r.rows.first().map(|w| w.amplitude).unwrap_or(0.0);
    let mut a1 = r.rows.last().map(|w| w.amplitude).unwrap_or(1.0);
    if a1 <= a0 {
        a1 = a0 + 1.0;
    }
    let top = r.rows.iter().map(|w| w.n_post.max(w.full_count.unwrap_or(0))).max().unwrap_or(0) as f64 + 1.0;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("soliton count after resonance", ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(a0..a1, -0.2..top)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("forcing amplitude a")
            .y_desc("N_post")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(pts, BLUE.stroke_width(2)))
            .map_err(plot_err)?
            .label("connection map")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
        chart
            .draw_series(
                r.rows
                    .iter()
                    .filter_map(|w| w.full_count.map(|c| Cross::new((w.amplitude, c as f64), 5, RED))),
            )
            .map_err(plot_err)?
            .label("full simulation")
            .legend(|(x, y)| Cross::new((x + 8, y), 5, RED));
        chart
            .draw_series(
                r.rows
                    .iter()
                    .filter(|w| w.unstable)
                    .map(|w| Circle::new((w.amplitude, w.n_post as f64), 6, BLACK)),
            )
            .map_err(plot_err)?;
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    let jumps: Vec<String> = r.thresholds.iter().map(|t| t.to_string()).collect();
    let notes = vec![
        format!("source: scan report, config sha256 {}", r.config_hash),
        format!("jumps at a = [{}]", jumps.join(", ")),
        "circles mark counts flagged UNSTABLE".to_string(),
    ];
    Ok(with_provenance(svg, &notes))
}

fn trajectory_svg(t: &Trajectory) -> CliResult<String> {
    if t.is_empty() {
        return Err(CliError::usage("nothing to plot"));
    }
    let snaps = t.snapshots();
    let picks: Vec<usize> = if snaps.len() <= 6 {
        (0..snaps.len()).collect()
    } else {
        (0..6).map(|k| k * (snaps.len() - 1) / 5).collect()
    };
    let x = t.grid().x();
    let half = 0.5 * t.grid().length();
    let peak = picks
        .iter()
        .flat_map(|&k| snaps[k].field.values().iter().map(|v| v.norm()))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("|U(x)| snapshots", ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(-half..half, 0.0..1.1 * peak)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("x").y_desc("|U|").draw().map_err(plot_err)?;
        for (j, &k) in picks.iter().enumerate() {
            let color = Palette99::pick(j).to_rgba();
            let s = &snaps[k];
            let pts: Vec<(f64, f64)> = x.iter().zip(s.field.values()).map(|(&x, v)| (x, v.norm())).collect();
            chart
                .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                .map_err(plot_err)?
                .label(format!("t2 = {:.4}", s.t2))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    let notes = vec![format!(
        "source: trajectory, eps {}, {} snapshots, t2 from {} to {}",
        t.epsilon(),
        snaps.len(),
        t.first().t2,
        t.last().t2
    )];
    Ok(with_provenance(svg, &notes))
}
