//! Polar diagram of angular errors as a standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::{ErrorStats, SLIDING_POINTS};
use crate::Result;

const SIZE: f64 = 480.0;
const CENTER: f64 = SIZE / 2.0;
const RADIUS: f64 = 190.0;

/// Smallest value of the form {1, 2, 5} x 10^k not below `v`.
fn nice_ceiling(v: f64) -> f64 {
    if !(v > 1.0) {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * p)
        .find(|&c| c >= v)
        .unwrap_or(10.0 * p)
}

fn point(theta_deg: f64, r: f64) -> (f64, f64) {
    let a = theta_deg.to_radians();
    (CENTER + r * a.cos(), CENTER - r * a.sin())
}

fn circle_path(r: f64) -> String {
    // two half arcs; a zero radius still yields a valid path
    format!(
        "M {:.3} {CENTER:.3} a {r:.3} {r:.3} 0 1 0 {:.3} 0 a {r:.3} {r:.3} 0 1 0 {:.3} 0 Z",
        CENTER - r,
        2.0 * r,
        -2.0 * r
    )
}

/// SVG markup with three layers: `interquartile` (shaded ring between the
/// global quartiles), `global-median` (dashed circle) and `sliding-median`
/// (solid curve, one vertex per degree where data exist).
pub fn polar_svg(stats: &ErrorStats, title: &str) -> String {
    let peak = stats
        .sliding_median
        .iter()
        .flatten()
        .copied()
        .chain([stats.median, stats.interquartile.1])
        .fold(0.0, f64::max);
    let r_max = nice_ceiling(peak);
    let scale = RADIUS / r_max;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r##"<rect width="{SIZE}" height="{SIZE}" fill="#ffffff"/>"##);

    let _ = writeln!(s, r##"<g id="grid" fill="none" stroke="#c8c8c8" stroke-width="0.5">"##);
    for k in 1..=4 {
        let r = RADIUS * k as f64 / 4.0;
        let _ = writeln!(s, r#"<circle cx="{CENTER}" cy="{CENTER}" r="{r:.3}"/>"#);
        let _ = writeln!(
            s,
            r##"<text x="{:.3}" y="{:.3}" font-size="9" fill="#707070" stroke="none">{}°</text>"##,
            CENTER + 2.0,
            CENTER - r - 2.0,
            fmt_tick(r_max * k as f64 / 4.0)
        );
    }
    for az in (0..360).step_by(30) {
        let (x, y) = point(az as f64, RADIUS);
        let _ = writeln!(s, r#"<line x1="{CENTER}" y1="{CENTER}" x2="{x:.3}" y2="{y:.3}"/>"#);
        let (tx, ty) = point(az as f64, RADIUS + 14.0);
        let label = if az > 180 { az - 360 } else { az };
        let _ = writeln!(
            s,
            r##"<text x="{tx:.3}" y="{ty:.3}" font-size="10" fill="#404040" stroke="none" text-anchor="middle" dominant-baseline="middle">{label}°</text>"##
        );
    }
    let _ = writeln!(s, "</g>");

    let (q25, q75) = stats.interquartile;
    let _ = writeln!(
        s,
        r##"<g id="interquartile" fill="#4a7bb7" fill-opacity="0.25" stroke="none">"##
    );
    let _ = writeln!(
        s,
        r#"<path fill-rule="evenodd" d="{} {}"/>"#,
        circle_path(q75 * scale),
        circle_path(q25 * scale)
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(
        s,
        r##"<g id="global-median" fill="none" stroke="#202020" stroke-width="1.2" stroke-dasharray="5 4">"##
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{CENTER}" cy="{CENTER}" r="{:.3}"/>"#,
        stats.median * scale
    );
    let _ = writeln!(s, "</g>");

    let present = stats.sliding_median.iter().filter(|v| v.is_some()).count();
    let mut d = String::new();
    let mut pen_down = false;
    for (i, v) in stats.sliding_median.iter().enumerate() {
        match v {
            Some(e) => {
                let (x, y) = point(-180.0 + i as f64, e * scale);
                let _ = write!(d, "{}{x:.3} {y:.3} ", if pen_down { "L " } else { "M " });
                pen_down = true;
            }
            None => pen_down = false,
        }
    }
    if present == SLIDING_POINTS {
        d.push('Z');
    }
    let _ = writeln!(
        s,
        r##"<g id="sliding-median" fill="none" stroke="#c0392b" stroke-width="1.5" data-samples="{present}">"##
    );
    if !d.is_empty() {
        let _ = writeln!(s, r#"<path d="{}"/>"#, d.trim_end());
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn polar_error_plot(stats: &ErrorStats, title: &str, path: &Path) -> Result<()> {
    std::fs::write(path, polar_svg(stats, title))?;
    Ok(())
}
