//! Static SVG plots rendered directly from experiment records: no external
//! services, no binary dependencies, byte-deterministic output.
//!
//! Four standard charts are attempted per record; any chart whose backing
//! data is absent is skipped and the omission reported back so the runner
//! can note it in the record:
//!
//! * `<name>.profile.svg`: radial solution profile.
//! * `<name>.defect.svg`: symmetry defect against grid spacing, log-log,
//!   annotated with the fitted slope.
//! * `<name>.lambda1.svg`: smallest eigenvalue against grid spacing.
//! * `<name>.threshold.svg`: threshold function and barrier curves.

use crate::error::Result;
use crate::harness::record::{loglog_slope, write_atomic, ExperimentRecord};
use std::path::{Path, PathBuf};

/// Files written and omissions observed by [`emit_plots`].
#[derive(Debug, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 612.0;
const TOP: f64 = 42.0;
const BOTTOM: f64 = 388.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct SeriesData {
    label: String,
    points: Vec<(f64, f64)>,
}

struct ChartSpec {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    log_y: bool,
    series: Vec<SeriesData>,
    annotation: Option<String>,
}

/// Emit every chart the record has data for; returns the written paths and
/// a human-readable note per omitted chart.
pub fn emit_plots(record: &ExperimentRecord, dir: &Path) -> Result<PlotOutput> {
    let mut out = PlotOutput::default();

    // Radial profile of the (finest) solution.
    let profile = record
        .series
        .get("profile_r")
        .zip(record.series.get("profile_u"))
        .filter(|(r, u)| r.len() == u.len() && r.len() >= 2);
    match profile {
        Some((r, u)) => {
            let spec = ChartSpec {
                title: format!("{}: radial profile", record.name),
                x_label: "r".into(),
                y_label: "u(r)".into(),
                log_x: false,
                log_y: false,
                series: vec![SeriesData {
                    label: "u".into(),
                    points: r.iter().cloned().zip(u.iter().cloned()).collect(),
                }],
                annotation: None,
            };
            out.files
                .push(write_chart(dir, &record.name, "profile", &spec)?);
        }
        None => out
            .notes
            .push("no radial profile series; profile plot omitted".into()),
    }

    // Symmetry defect vs h, log-log with slope annotation.
    let (h, defect): (Vec<f64>, Vec<f64>) = record
        .grids
        .iter()
        .filter_map(|g| g.defect_inf.map(|d| (g.h_r, d)))
        .filter(|(h, d)| *h > 0.0 && *d > 0.0)
        .unzip();
    if h.len() >= 2 {
        let annotation = loglog_slope(&h, &defect).map(|s| format!("slope = {s:.2}"));
        let spec = ChartSpec {
            title: format!("{}: symmetry defect vs h", record.name),
            x_label: "h_r".into(),
            y_label: "defect_inf".into(),
            log_x: true,
            log_y: true,
            series: vec![SeriesData {
                label: "defect_inf".into(),
                points: h.iter().cloned().zip(defect.iter().cloned()).collect(),
            }],
            annotation,
        };
        out.files
            .push(write_chart(dir, &record.name, "defect", &spec)?);
    } else {
        out.notes
            .push("defect series empty; defect plot omitted".into());
    }

    // Smallest eigenvalue vs h.
    let lam: Vec<(f64, f64)> = record
        .grids
        .iter()
        .filter_map(|g| g.lambda1.map(|l| (g.h_r, l)))
        .collect();
    if lam.len() >= 2 {
        let spec = ChartSpec {
            title: format!("{}: lambda1 vs h", record.name),
            x_label: "h_r".into(),
            y_label: "lambda1".into(),
            log_x: false,
            log_y: false,
            series: vec![SeriesData {
                label: "lambda1".into(),
                points: lam,
            }],
            annotation: None,
        };
        out.files
            .push(write_chart(dir, &record.name, "lambda1", &spec)?);
    } else {
        out.notes
            .push("lambda1 series empty; lambda1 plot omitted".into());
    }

    // Threshold function theta and barrier phi over the annulus.
    let barrier = record.series.get("barrier_r").and_then(|r| {
        let th = record.series.get("barrier_theta")?;
        let ph = record.series.get("barrier_phi")?;
        (r.len() == th.len() && r.len() == ph.len() && r.len() >= 2).then_some((r, th, ph))
    });
    match barrier {
        Some((r, th, ph)) => {
            let spec = ChartSpec {
                title: format!("{}: threshold and barrier", record.name),
                x_label: "r".into(),
                y_label: "value".into(),
                log_x: false,
                log_y: false,
                series: vec![
                    SeriesData {
                        label: "theta".into(),
                        points: r.iter().cloned().zip(th.iter().cloned()).collect(),
                    },
                    SeriesData {
                        label: "phi".into(),
                        points: r.iter().cloned().zip(ph.iter().cloned()).collect(),
                    },
                ],
                annotation: None,
            };
            out.files
                .push(write_chart(dir, &record.name, "threshold", &spec)?);
        }
        None => out
            .notes
            .push("no threshold curves; threshold plot omitted".into()),
    }

    Ok(out)
}

fn write_chart(dir: &Path, name: &str, kind: &str, spec: &ChartSpec) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.{kind}.svg"));
    write_atomic(&path, render_chart(spec).as_bytes())?;
    Ok(path)
}

/// Axis transform: optionally log10, then affine map into pixel space.
struct AxisMap {
    min: f64,
    max: f64,
    log: bool,
    lo_px: f64,
    hi_px: f64,
}

impl AxisMap {
    fn build(values: impl Iterator<Item = f64>, log: bool, lo_px: f64, hi_px: f64) -> AxisMap {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if log && !(v > 0.0) {
                continue;
            }
            let t = if log { v.log10() } else { v };
            min = min.min(t);
            max = max.max(t);
        }
        if !min.is_finite() || !max.is_finite() {
            min = 0.0;
            max = 1.0;
        }
        if max - min < 1e-12 {
            let pad = if max == 0.0 { 0.5 } else { max.abs() * 0.1 + 0.1 };
            min -= pad;
            max += pad;
        } else {
            let pad = 0.05 * (max - min);
            min -= pad;
            max += pad;
        }
        AxisMap {
            min,
            max,
            log,
            lo_px,
            hi_px,
        }
    }

    fn to_px(&self, v: f64) -> Option<f64> {
        let t = if self.log {
            if !(v > 0.0) {
                return None;
            }
            v.log10()
        } else {
            v
        };
        let s = (t - self.min) / (self.max - self.min);
        Some(self.lo_px + s * (self.hi_px - self.lo_px))
    }

    /// Five tick positions in data space (inverse-transformed for log).
    fn ticks(&self) -> Vec<f64> {
        (0..5)
            .map(|k| {
                let t = self.min + (self.max - self.min) * k as f64 / 4.0;
                if self.log {
                    10f64.powf(t)
                } else {
                    t
                }
            })
            .collect()
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn render_chart(spec: &ChartSpec) -> String {
    let xmap = AxisMap::build(
        spec.series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0)),
        spec.log_x,
        LEFT,
        RIGHT,
    );
    let ymap = AxisMap::build(
        spec.series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1)),
        spec.log_y,
        BOTTOM,
        TOP,
    );

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        (LEFT + RIGHT) / 2.0,
        spec.title
    ));

    // Grid lines and tick labels.
    for tv in xmap.ticks() {
        if let Some(px) = xmap.to_px(tv) {
            svg.push_str(&format!(
                "  <line x1=\"{px:.2}\" y1=\"{TOP}\" x2=\"{px:.2}\" y2=\"{BOTTOM}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
            ));
            svg.push_str(&format!(
                "  <text x=\"{px:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                BOTTOM + 18.0,
                fmt_tick(tv)
            ));
        }
    }
    for tv in ymap.ticks() {
        if let Some(py) = ymap.to_px(tv) {
            svg.push_str(&format!(
                "  <line x1=\"{LEFT}\" y1=\"{py:.2}\" x2=\"{RIGHT}\" y2=\"{py:.2}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
            ));
            svg.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
                LEFT - 8.0,
                py + 4.0,
                fmt_tick(tv)
            ));
        }
    }

    // Axes frame.
    svg.push_str(&format!(
        "  <rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        RIGHT - LEFT,
        BOTTOM - TOP
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 10.0,
        spec.x_label
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        spec.y_label
    ));

    // Series polylines and markers.
    for (k, s) in spec.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter_map(|(x, y)| Some((xmap.to_px(*x)?, ymap.to_px(*y)?)))
            .collect();
        if pts.len() >= 2 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            svg.push_str(&format!(
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        for (x, y) in &pts {
            svg.push_str(&format!(
                "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
        // Legend entry.
        let ly = TOP + 16.0 + 16.0 * k as f64;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            RIGHT - 110.0,
            RIGHT - 86.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            RIGHT - 80.0,
            ly + 4.0,
            s.label
        ));
    }

    if let Some(note) = &spec.annotation {
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\">{note}</text>\n",
            LEFT + 12.0,
            TOP + 20.0
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
