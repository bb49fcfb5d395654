//! CSV tables and SVG overlays comparing networks.
//!
//! Precision is reported as 1 when nothing is predicted and recall as 1 when
//! the ground truth is empty; the SVG footer repeats this convention.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::eval::pr::{average_precision_points, PrCurve, PrPoint};
use crate::eval::slack::Confusion;
use crate::io::write_atomic;

pub const REPORT_CSV: &str = "report.csv";
pub const AP_CSV: &str = "ap.csv";
pub const NEGATIVES_CSV: &str = "negatives.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedCurve {
    pub network: String,
    pub task: String,
    pub curve: PrCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub network: String,
    pub task: String,
    pub slack: usize,
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub network: String,
    pub task: String,
    pub slack: usize,
    pub average_precision: f64,
}

/// False-positive pixel rate of one network on liquid-free sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeRow {
    pub network: String,
    pub task: String,
    pub threshold: f64,
    pub pixels: u64,
    pub false_positive_pixels: u64,
    pub false_positive_rate: f64,
}

pub fn report_rows(curves: &[NamedCurve]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for nc in curves {
        for (slack, pts) in nc.curve.slacks.iter().zip(&nc.curve.points) {
            for p in pts {
                rows.push(ReportRow {
                    network: nc.network.clone(),
                    task: nc.task.clone(),
                    slack: *slack,
                    threshold: p.threshold,
                    tp: p.counts.tp,
                    fp: p.counts.fp,
                    fn_: p.counts.fn_,
                    precision: p.precision,
                    recall: p.recall,
                });
            }
        }
    }
    rows
}

/// Groups rows by (task, network, slack) in first-appearance order of rows
/// sorted by task then network then slack.
fn grouped(rows: &[ReportRow]) -> BTreeMap<(String, String, usize), Vec<&ReportRow>> {
    let mut g: BTreeMap<(String, String, usize), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        g.entry((r.task.clone(), r.network.clone(), r.slack)).or_default().push(r);
    }
    for v in g.values_mut() {
        v.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    }
    g
}

pub fn ap_rows(rows: &[ReportRow]) -> Vec<ApRow> {
    grouped(rows)
        .into_iter()
        .map(|((task, network, slack), rs)| {
            let pts: Vec<PrPoint> = rs
                .iter()
                .map(|r| PrPoint {
                    threshold: r.threshold,
                    counts: Confusion {
                        tp: r.tp,
                        fp: r.fp,
                        fn_: r.fn_,
                    },
                    precision: r.precision,
                    recall: r.recall,
                })
                .collect();
            ApRow {
                network,
                task,
                slack,
                average_precision: average_precision_points(&pts),
            }
        })
        .collect()
}

fn csv_bytes<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(rows.is_empty().then_some(false).unwrap_or(true)).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(|e| Error::format(path, e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_atomic(path, &csv_bytes(path, rows, header)?)
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    read_csv(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub ap: PathBuf,
    pub negatives: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Writes `report.csv`, `ap.csv`, `negatives.csv` and one SVG per task.
pub fn compare_report(curves: &[NamedCurve], negatives: &[NegativeRow], out_dir: &Path) -> Result<ReportFiles> {
    contract!(!curves.is_empty(), "a comparison report needs at least one curve");
    crate::io::create_dir_all(out_dir)?;
    let rows = report_rows(curves);
    let report = out_dir.join(REPORT_CSV);
    write_csv(&report, &rows, &[])?;
    let ap = out_dir.join(AP_CSV);
    write_csv(&ap, &ap_rows(&rows), &[])?;
    let neg = out_dir.join(NEGATIVES_CSV);
    write_csv(
        &neg,
        negatives,
        &["network", "task", "threshold", "pixels", "false_positive_pixels", "false_positive_rate"],
    )?;
    let plots = plot_report(&rows, out_dir)?;
    Ok(ReportFiles {
        report,
        ap,
        negatives: neg,
        plots,
    })
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const DASHES: [&str; 5] = ["", "6,3", "2,3", "8,3,2,3", "1,2"];

/// SVG overlay for one task: one polyline per (network, slack).
pub fn render_svg(task: &str, rows: &[ReportRow]) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (60.0, 180.0, 40.0, 70.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |r: f64| left + r * pw;
    let y = |p: f64| top + (1.0 - p) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">Precision/recall, task {task}</text>"#, left + pw / 2.0);
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{top}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, x(v), x(v), top + ph);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, y(v), left + pw, y(v));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, x(v), top + ph + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">recall</text>"#, left + pw / 2.0, top + ph + 34.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">precision</text>"#, top + ph / 2.0, top + ph / 2.0);
    let groups = grouped(rows);
    let networks: Vec<&String> = {
        let mut n: Vec<&String> = groups.keys().map(|k| &k.1).collect();
        n.dedup();
        n
    };
    let slacks: Vec<usize> = {
        let mut v: Vec<usize> = groups.keys().map(|k| k.2).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut legend_y = top + 6.0;
    for ((_, network, slack), rs) in &groups {
        let ni = networks.iter().position(|n| *n == network).unwrap_or(0);
        let si = slacks.iter().position(|v| v == slack).unwrap_or(0);
        let color = COLORS[ni % COLORS.len()];
        let dash = DASHES[si % DASHES.len()];
        let pts: Vec<String> = rs
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.recall), y(r.precision)))
            .collect();
        let dash_attr = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
        let _ = writeln!(
            s,
            r#"<polyline data-network="{network}" data-slack="{slack}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} points="{}"/>"#,
            pts.join(" ")
        );
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{legend_y:.1}" x2="{}" y2="{legend_y:.1}" stroke="{color}" stroke-width="1.5"{dash_attr}/>"#, lx + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}">{network} slack {slack}</text>"#, lx + 30.0, legend_y + 4.0);
        legend_y += 16.0;
    }
    let _ = writeln!(
        s,
        r##"<text x="{left}" y="{:.1}" font-size="10" fill="#555">Precision is 1 when nothing is predicted; recall is 1 when there is no liquid. Slack is a Chebyshev radius in pixels.</text>"##,
        h - 10.0
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `pr_<task>.svg` for every task in `rows`.
pub fn plot_report(rows: &[ReportRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Config("report has no rows; nothing to plot".into()));
    }
    crate::io::create_dir_all(out_dir)?;
    let mut by_task: BTreeMap<&str, Vec<ReportRow>> = BTreeMap::new();
    for r in rows {
        by_task.entry(&r.task).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (task, rs) in by_task {
        let path = out_dir.join(format!("pr_{task}.svg"));
        write_atomic(&path, render_svg(task, &rs).as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::pr::{pr_curve, EvalConfig, Target};
    use crate::tensor::{Shape, Tensor};

    fn curve() -> PrCurve {
        let gt = Tensor::<f32>::from_fn(Shape::new(1, 1, 5, 5), |_, _, y, x| if x == y { 1.0 } else { 0.0 });
        let heat = Tensor::<f32>::from_fn(gt.shape(), |_, _, y, x| ((x + 2 * y) % 7) as f32 / 7.0);
        pr_curve(&[heat], &[gt], &EvalConfig::new(Target::VisibleLiquid)).unwrap()
    }

    #[test]
    fn one_ap_row_per_slack_and_ties_agree() {
        let c = curve();
        let curves = vec![
            NamedCurve { network: "cnn".into(), task: "detect".into(), curve: c.clone() },
            NamedCurve { network: "mf".into(), task: "detect".into(), curve: c },
        ];
        let ap = ap_rows(&report_rows(&curves));
        assert_eq!(ap.len(), 8);
        for s in [0, 1, 2, 4] {
            let v: Vec<f64> = ap.iter().filter(|r| r.slack == s).map(|r| r.average_precision).collect();
            assert_eq!(v[0], v[1]);
        }
    }

    #[test]
    fn report_round_trips_and_plots_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let curves = vec![NamedCurve { network: "lstm".into(), task: "track".into(), curve: curve() }];
        let files = compare_report(&curves, &[], dir.path()).unwrap();
        let rows = read_report(&files.report).unwrap();
        assert_eq!(rows, report_rows(&curves));
        let svg = std::fs::read_to_string(&files.plots[0]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg, render_svg("track", &rows));
        let neg = std::fs::read_to_string(&files.negatives).unwrap();
        assert!(neg.starts_with("network,task,threshold"));
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_report(&[], dir.path()).is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn malformed_csv_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "network,task\ncnn\n").unwrap();
        assert!(matches!(read_report(&p), Err(Error::Format { .. })));
    }
}
