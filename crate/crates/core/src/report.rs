//! Report writers: a flat CSV, a markdown table per policy, and a
//! DS-retention matrix as CSV and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{AggregateRow, RobustnessReport, RowKind, SettingRow};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_MD: &str = "report.md";
pub const RETENTION_CSV: &str = "retention.csv";
pub const RETENTION_SVG: &str = "retention.svg";

const AGG_LABELS: [(&str, &str); 3] = [
    ("avg_perturb", "Avg. perturb."),
    ("avg_latency", "Avg. latency"),
    ("avg_all", "Avg. all perturb."),
];

fn kind_str(kind: RowKind) -> &'static str {
    match kind {
        RowKind::Baseline => "baseline",
        RowKind::Perturbation => "perturbation",
        RowKind::Latency => "latency",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn aggregates(
    report_row: &crate::metrics::PolicyReport,
) -> [(&'static str, &'static str, Option<AggregateRow>); 3] {
    let a = &report_row.aggregates;
    [
        (AGG_LABELS[0].0, AGG_LABELS[0].1, a.avg_perturb),
        (AGG_LABELS[1].0, AGG_LABELS[1].1, a.avg_latency),
        (AGG_LABELS[2].0, AGG_LABELS[2].1, a.avg_all),
    ]
}

/// One line per (policy, row) including the aggregate rows.
pub fn to_csv(report: &RobustnessReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record([
        "policy",
        "setting",
        "label",
        "kind",
        "rd",
        "ds",
        "sr",
        "eff",
        "comf",
        "completed",
        "routes",
        "failed_routes",
    ])
    .map_err(csv_err)?;
    for p in &report.policies {
        for row in std::iter::once(&p.baseline).chain(&p.rows) {
            w.write_record([
                p.policy.clone(),
                row.setting.clone(),
                row.label.clone(),
                kind_str(row.kind).to_string(),
                fmt_opt(row.rd),
                format!("{:.4}", row.ds),
                format!("{:.4}", row.sr),
                format!("{:.4}", row.eff),
                format!("{:.4}", row.comf),
                row.completed.to_string(),
                row.routes.to_string(),
                row.failed_routes.join(";"),
            ])
            .map_err(csv_err)?;
        }
        for (key, label, agg) in aggregates(p) {
            let Some(a) = agg else { continue };
            w.write_record([
                p.policy.clone(),
                key.to_string(),
                label.to_string(),
                "aggregate".to_string(),
                fmt_opt(a.rd),
                format!("{:.4}", a.ds),
                format!("{:.4}", a.sr),
                format!("{:.4}", a.eff),
                format!("{:.4}", a.comf),
                "true".to_string(),
                a.rows.to_string(),
                String::new(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn md_row(out: &mut String, label: &str, cols: [Option<f64>; 5]) {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(
        out,
        "| {label} | {} | {} | {} | {} | {} |",
        cell(cols[0]),
        cell(cols[1]),
        cell(cols[2]),
        cell(cols[3]),
        cell(cols[4])
    );
}

fn row_cols(r: &SettingRow) -> [Option<f64>; 5] {
    [r.rd, Some(r.ds), Some(r.sr), Some(r.eff), Some(r.comf)]
}

/// Markdown tables: baseline, one row per setting, then the three averages.
pub fn to_markdown(report: &RobustnessReport) -> String {
    let mut out = String::from("# Robustness report\n");
    let mut incomplete = false;
    for p in &report.policies {
        let _ = write!(
            out,
            "\n## {}\n\n| Setting | RD | DS | SR | Eff | Comf |\n|---|---:|---:|---:|---:|---:|\n",
            p.policy
        );
        md_row(&mut out, &p.baseline.label, row_cols(&p.baseline));
        for r in &p.rows {
            let label = if r.completed {
                r.label.clone()
            } else {
                incomplete = true;
                format!("{} *", r.label)
            };
            md_row(&mut out, &label, row_cols(r));
        }
        for (_, label, agg) in aggregates(p) {
            match agg {
                Some(a) => md_row(
                    &mut out,
                    &format!("**{label}**"),
                    [a.rd, Some(a.ds), Some(a.sr), Some(a.eff), Some(a.comf)],
                ),
                None => md_row(&mut out, &format!("**{label}**"), [None; 5]),
            }
        }
    }
    if incomplete {
        out.push_str("\n\\* some routes errored; the row is excluded from the averages.\n");
    }
    out
}

/// Settings in first-seen order across policies.
fn setting_columns(report: &RobustnessReport) -> Vec<(String, String)> {
    let mut cols: Vec<(String, String)> = Vec::new();
    for p in &report.policies {
        for r in &p.rows {
            if !cols.iter().any(|(s, _)| *s == r.setting) {
                cols.push((r.setting.clone(), r.label.clone()));
            }
        }
    }
    cols
}

/// DS retention, `DS / DS_clean`, per policy and setting. `None` when the
/// clean DS is zero or the setting is missing.
pub fn retention_matrix(
    report: &RobustnessReport,
) -> (Vec<String>, Vec<String>, Vec<Vec<Option<f64>>>) {
    let cols = setting_columns(report);
    let mut rows = Vec::new();
    for p in &report.policies {
        let clean = p.baseline.ds;
        rows.push(
            cols.iter()
                .map(|(s, _)| {
                    p.rows
                        .iter()
                        .find(|r| r.setting == *s)
                        .filter(|_| clean > 0.0)
                        .map(|r| r.ds / clean)
                })
                .collect(),
        );
    }
    (
        report.policies.iter().map(|p| p.policy.clone()).collect(),
        cols.into_iter().map(|(_, l)| l).collect(),
        rows,
    )
}

pub fn retention_csv(report: &RobustnessReport) -> Result<String> {
    let (policies, labels, m) = retention_matrix(report);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    let mut header = vec!["policy".to_string()];
    header.extend(labels);
    w.write_record(&header).map_err(csv_err)?;
    for (p, row) in policies.iter().zip(&m) {
        let mut rec = vec![p.clone()];
        rec.extend(row.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Red (0) to green (1) ramp.
fn ramp(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let r = (220.0 * (1.0 - t) + 40.0 * t).round() as u8;
    let g = (60.0 * (1.0 - t) + 170.0 * t).round() as u8;
    let b = (60.0 * (1.0 - t) + 80.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Static heatmap of the retention matrix.
pub fn retention_svg(report: &RobustnessReport) -> String {
    let (policies, labels, m) = retention_matrix(report);
    let (cell_w, cell_h, left, top) = (72.0, 28.0, 130.0, 110.0);
    let width = left + cell_w * labels.len() as f64 + 10.0;
    let height = top + cell_h * policies.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    for (j, l) in labels.iter().enumerate() {
        let x = left + cell_w * (j as f64 + 0.5);
        let y = top - 6.0;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" transform="rotate(-45 {x} {y})">{}</text>"#,
            xml_escape(l)
        );
    }
    for (i, p) in policies.iter().enumerate() {
        let y = top + cell_h * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell_h * 0.65,
            xml_escape(p)
        );
        for (j, v) in m[i].iter().enumerate() {
            let x = left + cell_w * j as f64;
            let (fill, text) = match v {
                Some(v) => (ramp(*v), format!("{v:.2}")),
                None => ("#cccccc".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{text}</text>"#,
                x + cell_w / 2.0,
                y + cell_h * 0.65
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes all report files into `dir` and returns their paths.
pub fn write_report(report: &RobustnessReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (REPORT_CSV, to_csv(report)?),
        (REPORT_MD, to_markdown(report)),
        (RETENTION_CSV, retention_csv(report)?),
        (RETENTION_SVG, retention_svg(report)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ComfortLimits, MotionStats, Penalties, PolicyReport, RouteResult};
    use crate::world::{Infraction, InfractionKind, RouteStatus};

    fn results(ds_like: &[(f64, usize)]) -> Vec<RouteResult> {
        ds_like
            .iter()
            .enumerate()
            .map(|(i, &(completion, collisions))| {
                let stats = MotionStats::new(ComfortLimits::default(), 10.0, 20);
                let inf = (0..collisions)
                    .map(|t| Infraction {
                        kind: InfractionKind::CollisionVehicle,
                        tick: t as u64,
                    })
                    .collect();
                RouteResult::new(
                    format!("r{i}"),
                    completion,
                    inf,
                    &stats,
                    RouteStatus::Completed,
                )
            })
            .collect()
    }

    fn sample() -> RobustnessReport {
        let pen = Penalties::default();
        let base = SettingRow::from_results(
            "baseline",
            "Baseline",
            RowKind::Baseline,
            &results(&[(1.0, 0), (1.0, 0)]),
            &pen,
            None,
        );
        let gps = SettingRow::from_results(
            "gps-5m",
            "GPS 5 m",
            RowKind::Perturbation,
            &results(&[(1.0, 1), (1.0, 0)]),
            &pen,
            Some(base.ds),
        );
        let lat = SettingRow::from_results(
            "latency-100ms",
            "Latency 100 ms",
            RowKind::Latency,
            &results(&[(0.5, 0), (1.0, 0)]),
            &pen,
            Some(base.ds),
        );
        RobustnessReport {
            policies: vec![PolicyReport::new("full-pursuit", base, vec![gps, lat])],
        }
    }

    #[test]
    fn csv_has_rows_and_aggregates() {
        let csv = to_csv(&sample()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 3);
        assert!(lines[2].starts_with("full-pursuit,gps-5m,GPS 5 m,perturbation,0.2000,80.0000"));
        assert!(lines[3].contains("latency-100ms"));
        assert!(
            lines[6].starts_with("full-pursuit,avg_all,Avg. all perturb.,aggregate,0.2250,77.5000")
        );
    }

    #[test]
    fn markdown_shape() {
        let md = to_markdown(&sample());
        assert!(md.contains("| Setting | RD | DS | SR | Eff | Comf |"));
        assert!(md.contains("| Baseline | 0.00 | 100.00 |"));
        assert!(md.contains("| GPS 5 m | 0.20 | 80.00 | 50.00 |"));
        assert!(md.contains("| **Avg. latency** | 0.25 | 75.00 |"));
    }

    #[test]
    fn retention_values() {
        let (p, l, m) = retention_matrix(&sample());
        assert_eq!(p, vec!["full-pursuit"]);
        assert_eq!(l, vec!["GPS 5 m", "Latency 100 ms"]);
        assert_eq!(m[0], vec![Some(0.8), Some(0.75)]);
        let svg = retention_svg(&sample());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 3);
    }

    #[test]
    fn baseline_only_report() {
        let mut r = sample();
        r.policies[0].rows.clear();
        r.policies[0].aggregates = crate::metrics::aggregate(&[]);
        let csv = to_csv(&r).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
    }
}
