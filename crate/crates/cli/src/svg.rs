//! Self-contained SVG line charts for per-volunteer metric series.
//! No external assets, no timestamps: the same bundle always renders
//! byte-identical documents.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use skintrack_core::normalize::NormalizationMethod;

use crate::error::{Error, Result};
use crate::pipeline::ReportBundle;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_TOP: f64 = 46.0;
const PLOT_RIGHT: f64 = 620.0;
const PLOT_BOTTOM: f64 = 440.0;

/// Line colours for the three LAB channels.
const CHANNEL_COLOURS: [(&str, &str); 3] = [("l", "#1f77b4"), ("a", "#d62728"), ("b", "#e8a000")];

/// Distinct line colours for the all-volunteers chart.
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#335533", "#aa3377",
];

fn dash_for(method: NormalizationMethod) -> &'static str {
    match method {
        NormalizationMethod::Original => "",
        NormalizationMethod::HistEqualY => "8 4",
        NormalizationMethod::Clahe => "3 3",
        NormalizationMethod::ColourCard => "10 3 2 3",
    }
}

struct ChartSeries<'a> {
    label: String,
    colour: &'a str,
    dash: &'a str,
    points: &'a [(NaiveDate, f64)],
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Compact deterministic number for tick labels.
fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn render_chart(title: &str, y_label: &str, series: &[ChartSeries]) -> String {
    let mut dates: BTreeSet<NaiveDate> = BTreeSet::new();
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(d, v) in s.points {
            dates.insert(d);
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let (d0, d1) = match (dates.first(), dates.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return String::new(),
    };
    let span_days = (d1 - d0).num_days().max(1) as f64;
    // Flat or single-point data still gets a visible band.
    if y_max <= y_min {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = (y_max - y_min) * 0.05;
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let x_of = |d: NaiveDate| {
        if dates.len() == 1 {
            (PLOT_LEFT + PLOT_RIGHT) / 2.0
        } else {
            PLOT_LEFT + (d - d0).num_days() as f64 / span_days * (PLOT_RIGHT - PLOT_LEFT)
        }
    };
    let y_of = |v: f64| PLOT_BOTTOM - (v - y_min) / (y_max - y_min) * (PLOT_BOTTOM - PLOT_TOP);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="17">{}</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        escape_xml(title)
    );

    // Axes.
    let _ = writeln!(
        out,
        r#"<line x1="{PLOT_LEFT:.2}" y1="{PLOT_TOP:.2}" x2="{PLOT_LEFT:.2}" y2="{PLOT_BOTTOM:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{PLOT_LEFT:.2}" y1="{PLOT_BOTTOM:.2}" x2="{PLOT_RIGHT:.2}" y2="{PLOT_BOTTOM:.2}" stroke="black"/>"#
    );

    // Horizontal grid and y tick labels.
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            out,
            r##"<line x1="{PLOT_LEFT:.2}" y1="{y:.2}" x2="{PLOT_RIGHT:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            PLOT_LEFT - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }

    // Date ticks: at most six, evenly chosen over the observed dates.
    let step = dates.len().div_ceil(6).max(1);
    for (i, &d) in dates.iter().enumerate() {
        if i % step != 0 && i != dates.len() - 1 {
            continue;
        }
        let x = x_of(d);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{PLOT_BOTTOM:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            PLOT_BOTTOM + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{d}</text>"#,
            PLOT_BOTTOM + 20.0
        );
    }

    // Axis labels.
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">date</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 44.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        escape_xml(y_label)
    );

    // Series polylines, markers and legend.
    for (si, s) in series.iter().enumerate() {
        if s.points.len() > 1 {
            let mut pts = String::new();
            for &(d, v) in s.points {
                let _ = write!(pts, "{:.2},{:.2} ", x_of(d), y_of(v));
            }
            let dash = if s.dash.is_empty() {
                String::new()
            } else {
                format!(r#" stroke-dasharray="{}""#, s.dash)
            };
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#,
                pts.trim_end(),
                s.colour
            );
        }
        for &(d, v) in s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                x_of(d),
                y_of(v),
                s.colour
            );
        }
        let ly = PLOT_TOP + 16.0 * si as f64;
        let dash = if s.dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{}""#, s.dash)
        };
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.6"{dash}/>"#,
            PLOT_RIGHT + 14.0,
            PLOT_RIGHT + 44.0,
            s.colour
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            PLOT_RIGHT + 50.0,
            ly + 4.0,
            escape_xml(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn channel_colour(metric_name: &str) -> &'static str {
    CHANNEL_COLOURS
        .iter()
        .find(|(ch, _)| metric_name == format!("colour_{ch}"))
        .map(|&(_, c)| c)
        .unwrap_or("#333333")
}

fn write_svg(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Renders every chart under `out_dir/plots`: one colour chart and one
/// wrinkle chart per volunteer, plus the combined wrinkle chart.
pub fn emit_svg_plots(bundle: &ReportBundle, out_dir: &Path) -> Result<()> {
    let plot_dir = out_dir.join("plots");
    std::fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;

    let mut volunteer_ids: Vec<&str> = bundle
        .series
        .iter()
        .map(|s| s.volunteer_id.as_str())
        .collect();
    volunteer_ids.dedup();

    for id in &volunteer_ids {
        let colour: Vec<ChartSeries> = bundle
            .series
            .iter()
            .filter(|s| {
                s.volunteer_id == *id && s.method.is_some() && s.metric_name.starts_with("colour_")
            })
            .map(|s| ChartSeries {
                label: format!(
                    "{} {}",
                    s.metric_name.trim_start_matches("colour_"),
                    s.method.unwrap().slug()
                ),
                colour: channel_colour(&s.metric_name),
                dash: dash_for(s.method.unwrap()),
                points: &s.points,
            })
            .collect();
        if !colour.is_empty() {
            let svg = render_chart(
                &format!("{} {id} skin colour", bundle.trial_id),
                "CIELAB value",
                &colour,
            );
            write_svg(&plot_dir.join(format!("colour_{id}.svg")), &svg)?;
        }

        let wrinkle: Vec<ChartSeries> = bundle
            .series
            .iter()
            .filter(|s| s.volunteer_id == *id && s.metric_name == "wrinkle_ratio")
            .map(|s| ChartSeries {
                label: "wrinkle ratio".into(),
                colour: "#2ca02c",
                dash: "",
                points: &s.points,
            })
            .collect();
        if !wrinkle.is_empty() {
            let svg = render_chart(
                &format!("{} {id} wrinkle ratio", bundle.trial_id),
                "wrinkle ratio",
                &wrinkle,
            );
            write_svg(&plot_dir.join(format!("wrinkle_{id}.svg")), &svg)?;
        }
    }

    let combined: Vec<ChartSeries> = bundle
        .series
        .iter()
        .filter(|s| s.metric_name == "wrinkle_ratio")
        .enumerate()
        .map(|(i, s)| ChartSeries {
            label: s.volunteer_id.clone(),
            colour: PALETTE[i % PALETTE.len()],
            dash: "",
            points: &s.points,
        })
        .collect();
    if !combined.is_empty() {
        let svg = render_chart(
            &format!("{} wrinkle ratio, all volunteers", bundle.trial_id),
            "wrinkle ratio",
            &combined,
        );
        write_svg(&plot_dir.join("wrinkle_all_volunteers.svg"), &svg)?;
    }
    Ok(())
}
