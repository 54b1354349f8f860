//! Markdown tables and polar plots from a benchmark summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bench::{snr_label, BenchReport};
use crate::plot::polar_error_plot;
use crate::Result;

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn markdown(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# Benchmark, {} ({} split)\n",
        report.environment,
        report.split.name()
    );
    let _ = writeln!(s, "## Angular error (degrees)\n");
    let _ = writeln!(s, "| method | SNR (dB) | n | mean | median | q25 | q75 | status |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for c in &report.cells {
        let e = c.error_stats.as_ref();
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            c.method,
            snr_label(c.snr_db),
            c.n,
            opt(e.map(|e| e.mean_abs), 2),
            opt(e.map(|e| e.median), 2),
            opt(e.map(|e| e.interquartile.0), 2),
            opt(e.map(|e| e.interquartile.1), 2),
            c.failure.as_deref().unwrap_or("ok")
        );
    }
    if report.cells.iter().any(|c| c.classification.is_some()) {
        let _ = writeln!(s, "\n## Classification\n");
        let _ = writeln!(
            s,
            "| method | SNR (dB) | classes | accuracy (%) | Δθ_class | Δθ | card Ω_m | P_adj (%) | β | α |"
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|");
        for c in &report.cells {
            if let Some(k) = &c.classification {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {:.1} | {:.2} | {:.2} | {} | {} | {} | {:.2} |",
                    c.method,
                    snr_label(c.snr_db),
                    k.n_classes,
                    100.0 * k.accuracy,
                    k.delta_theta_class,
                    k.delta_theta,
                    k.card_omega_m,
                    opt(k.p_adj, 1),
                    opt(k.beta, 2),
                    k.alpha_half
                );
            }
        }
    }
    let _ = writeln!(s, "\n## Runtime\n");
    let _ = writeln!(s, "| method | sources | total (s) | mean per source (ms) |");
    let _ = writeln!(s, "|---|---|---|---|");
    for r in &report.runtimes {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.3} |",
            r.method, r.sources, r.total_seconds, r.mean_ms_per_source
        );
    }
    s
}

/// Writes `report.md` and one polar plot per successful cell into `dir`.
pub fn write_report(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let md = dir.join("report.md");
    std::fs::write(&md, markdown(report))?;
    let mut written = vec![md];
    for c in &report.cells {
        if let Some(e) = &c.error_stats {
            let name = format!("polar_{}_snr_{}.svg", c.method, snr_label(c.snr_db));
            let path = dir.join(name);
            let title = format!("{} at SNR {} dB, {}", c.method, snr_label(c.snr_db), c.environment);
            polar_error_plot(e, &title, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}
