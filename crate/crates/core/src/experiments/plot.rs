//! Static SVG line plots of trajectory CSVs with a logarithmic y axis.

use crate::dynamics::csv_header;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    RelErr,
    SingularValues,
    Distances,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rel_err" => Ok(PlotKind::RelErr),
            "singular_values" => Ok(PlotKind::SingularValues),
            "distances" => Ok(PlotKind::Distances),
            other => Err(format!("unknown plot kind `{other}`")),
        }
    }
}

impl PlotKind {
    fn y_label(self) -> &'static str {
        match self {
            PlotKind::RelErr => "relative error E_s(t)",
            PlotKind::SingularValues => "singular value of U_t",
            PlotKind::Distances => "distance to Z_s*",
        }
    }

    fn title(self) -> &'static str {
        match self {
            PlotKind::RelErr => "Relative error against rank-s truncations",
            PlotKind::SingularValues => "Leading singular values",
            PlotKind::Distances => "Distance to best rank-s solutions",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A parsed trajectory CSV.
#[derive(Clone, Debug)]
pub struct TrajectoryTable {
    pub r_star: usize,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<Vec<(f64, Option<f64>)>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| (r[0].unwrap_or(f64::NAN), r[idx])).collect())
    }
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let n_sv = header.iter().filter(|h| h.starts_with("sv")).count();
    if n_sv < 2 {
        let col = header.get(2).cloned().unwrap_or_else(|| "sv1".into());
        return Err(Error::Schema {
            column: col,
            detail: "expected at least two singular-value columns sv1, sv2".into(),
        });
    }
    let r_star = n_sv - 1;
    let expected = csv_header(r_star);
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(Error::Schema {
                    column: got.clone(),
                    detail: format!("expected `{want}` at position {}", i + 1),
                })
            }
            None => {
                return Err(Error::Schema {
                    column: want.clone(),
                    detail: "missing".into(),
                })
            }
        }
    }
    if let Some(extra) = header.get(expected.len()) {
        return Err(Error::Schema {
            column: extra.clone(),
            detail: "unexpected extra column".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let mut row = Vec::with_capacity(header.len());
        for (i, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                row.push(None);
            } else {
                let v = cell.parse::<f64>().map_err(|_| Error::Schema {
                    column: header[i].clone(),
                    detail: format!("`{cell}` is not a number"),
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    Ok(TrajectoryTable { r_star, header, rows })
}

pub fn series_for(table: &TrajectoryTable, kind: PlotKind) -> Vec<Series> {
    let cols: Vec<(String, String)> = match kind {
        PlotKind::RelErr => (1..=table.r_star).map(|s| (format!("rel_err_{s}"), format!("E_{s}"))).collect(),
        PlotKind::SingularValues => (1..=table.r_star + 1).map(|i| (format!("sv{i}"), format!("sigma_{i}"))).collect(),
        PlotKind::Distances => (1..=table.r_star).map(|s| (format!("dist_Z{s}"), format!("Z_{s}*"))).collect(),
    };
    cols.into_iter()
        .map(|(col, label)| Series {
            label,
            points: table
                .column(&col)
                .unwrap_or_default()
                .into_iter()
                .filter_map(|(t, v)| v.map(|v| (t, v)))
                .collect(),
        })
        .collect()
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `series` on shared axes. Non-positive or non-finite values are
/// dropped (they have no place on a log axis) and series left empty are
/// omitted from the plot and the legend.
pub fn render_svg(kind: PlotKind, series: &[Series]) -> String {
    let drawn: Vec<(&Series, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts = s
                .points
                .iter()
                .copied()
                .filter(|(t, v)| t.is_finite() && v.is_finite() && *v > 0.0)
                .collect::<Vec<_>>();
            (s, pts)
        })
        .filter(|(_, p)| !p.is_empty())
        .collect();

    let all = drawn.iter().flat_map(|(_, p)| p.iter());
    let (mut t_max, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, v) in all {
        t_max = t_max.max(t);
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    let (dec_lo, mut dec_hi) = (lo.floor(), hi.ceil());
    if dec_hi <= dec_lo {
        dec_hi = dec_lo + 1.0;
    }
    if t_max <= 0.0 {
        t_max = 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |t: f64| LEFT + pw * t / t_max;
    let y = |v: f64| TOP + ph * (dec_hi - v.log10()) / (dec_hi - dec_lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        fmt(LEFT + pw / 2.0),
        escape(kind.title())
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        fmt(pw),
        fmt(ph)
    );

    let decades = (dec_hi - dec_lo) as i64;
    let step = (decades / 10 + 1).max(1);
    let mut e = dec_lo as i64;
    while e <= dec_hi as i64 {
        let yy = y(10f64.powi(e as i32));
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="#dddddd"/>"##,
            fmt(yy),
            fmt(LEFT + pw)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">1e{e}</text>"#,
            fmt(LEFT - 6.0),
            fmt(yy + 4.0)
        );
        e += step;
    }
    for i in 0..=5 {
        let t = t_max * i as f64 / 5.0;
        let xx = x(t);
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#,
            fmt(xx),
            fmt(TOP + ph),
            fmt(TOP + ph + 5.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(xx),
            fmt(TOP + ph + 18.0),
            t.round()
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration t</text>"#,
        fmt(LEFT + pw / 2.0),
        fmt(HEIGHT - 15.0)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        fmt(TOP + ph / 2.0),
        escape(kind.y_label())
    );

    for (i, (s, pts)) in drawn.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(t, v)| format!("{},{}", fmt(x(t)), fmt(y(v)))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="2"/>"#,
            fmt(lx),
            fmt(ly),
            fmt(lx + 20.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            fmt(lx + 26.0),
            fmt(ly + 4.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Reads every CSV, checks its schema and writes one SVG. With several
/// inputs each series label is prefixed by the file stem.
pub fn cmd_plot(csv_paths: &[&Path], out_path: &Path, kind: PlotKind) -> Result<()> {
    let mut series = Vec::new();
    for path in csv_paths {
        let table = parse_trajectory_csv(&std::fs::read_to_string(path)?)?;
        let mut s = series_for(&table, kind);
        if csv_paths.len() > 1 {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            for item in &mut s {
                item.label = format!("{stem}: {}", item.label);
            }
        }
        series.extend(s);
    }
    std::fs::write(out_path, render_svg(kind, &series))?;
    Ok(())
}
