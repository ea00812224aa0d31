use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// Pass iff `observed <= bound + slack` (or the bound is vacuous).
    Check,
    /// Reported for context; always passes.
    Info,
}

/// One configuration of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub case: String,
    pub kind: RowKind,
    pub n: Option<usize>,
    pub eps: Option<f64>,
    pub observed: f64,
    pub bound: f64,
    pub ratio: Option<f64>,
    pub slack: f64,
    /// MC standard error, bootstrap spread or discretization estimate.
    pub error_estimate: Option<f64>,
    /// Bound at least 1 on a probability-scale quantity.
    pub vacuous: bool,
    pub pass: bool,
    pub note: String,
}

impl ReportRow {
    pub fn check(experiment: &str, case: impl Into<String>, observed: f64, bound: f64, slack: f64) -> Self {
        let mut row = Self {
            experiment: experiment.to_owned(),
            case: case.into(),
            kind: RowKind::Check,
            n: None,
            eps: None,
            observed,
            bound,
            ratio: None,
            slack,
            error_estimate: None,
            vacuous: false,
            pass: false,
            note: String::new(),
        };
        row.refresh();
        row
    }

    pub fn info(experiment: &str, case: impl Into<String>, observed: f64) -> Self {
        let mut row = Self::check(experiment, case, observed, 0.0, 0.0);
        row.kind = RowKind::Info;
        row.refresh();
        row
    }

    /// Marks a probability-scale check: a bound of at least 1 passes
    /// automatically.
    pub fn probability_scale(mut self) -> Self {
        self.vacuous = self.bound >= 1.0;
        self.refresh();
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_error(mut self, e: f64) -> Self {
        self.error_estimate = Some(e);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn refresh(&mut self) {
        self.ratio = (self.kind == RowKind::Check && self.bound != 0.0 && self.bound.is_finite())
            .then(|| self.observed / self.bound);
        self.pass = match self.kind {
            RowKind::Info => true,
            RowKind::Check => self.vacuous || self.observed <= self.bound + self.slack,
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn new(name: &str, config: &ExperimentConfig, rows: Vec<ReportRow>) -> Self {
        Self {
            name: name.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed,
            config_hash: config.hash(),
            config: serde_json::to_value(config).expect("config serializes"),
            rows,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn rows_for<'a>(&'a self, experiment: &'a str) -> impl Iterator<Item = &'a ReportRow> {
        self.rows.iter().filter(move |r| r.experiment == experiment)
    }

    pub fn merge(mut self, other: ExperimentReport) -> Self {
        self.name = format!("{}+{}", self.name, other.name);
        self.rows.extend(other.rows);
        self
    }

    pub fn load_json(path: &Path) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Log-log plot of observed and bound against `n`, one series per `ε`
    /// (rows without `ε` share one series). Nonpositive values have no
    /// logarithm and are left out of the polylines.
    pub fn to_svg_string(&self) -> String {
        let mut series: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
        for r in &self.rows {
            if let (Some(n), RowKind::Check) = (r.n, r.kind) {
                if n > 0 {
                    let key = r.eps.map_or_else(|| "none".to_owned(), |e| e.to_string());
                    series.entry(key).or_default().push(r);
                }
            }
        }
        let (w, h, pad) = (640.0, 420.0, 50.0);
        let pts = series.values().flatten();
        let xs: Vec<f64> = pts.clone().map(|r| (r.n.unwrap() as f64).log10()).collect();
        let ys: Vec<f64> = pts
            .flat_map(|r| [r.observed, r.bound])
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(f64::log10)
            .collect();
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if v.is_empty() {
                (0.0, 1.0)
            } else if hi - lo < 1e-9 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
        let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(svg, r#"<title>{}: observed (solid) vs bound (dashed), log-log in n</title>"#, self.name);
        let _ = writeln!(
            svg,
            r##"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
            w - 2.0 * pad,
            h - 2.0 * pad
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12">log10 n in [{x0:.3}, {x1:.3}], log10 value in [{y0:.3}, {y1:.3}]</text>"#,
            pad,
            pad - 10.0
        );
        for (i, (eps, rows)) in series.iter().enumerate() {
            let mut rows = rows.clone();
            rows.sort_by_key(|r| r.n);
            let color = palette[i % palette.len()];
            let line = |f: &dyn Fn(&ReportRow) -> f64| {
                rows.iter()
                    .filter(|r| f(r) > 0.0 && f(r).is_finite())
                    .map(|r| format!("{:.2},{:.2}", px((r.n.unwrap() as f64).log10()), py(f(r).log10())))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(svg, r#"<g class="series" data-eps="{eps}">"#);
            let _ = writeln!(
                svg,
                r##"<polyline fill="none" stroke="{color}" points="{}"/>"##,
                line(&|r| r.observed)
            );
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-dasharray="6,4" points="{}"/>"#,
                line(&|r| r.bound)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">eps = {eps}</text>"#,
                w - pad - 90.0,
                pad + 16.0 * (i as f64 + 1.0)
            );
            let _ = writeln!(svg, "</g>");
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Svg => "svg",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(HarnessError::Usage(format!("unknown report format {other:?}"))),
        }
    }
}

/// Writes `<out_dir>/<name>.<ext>` and returns the path.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, out_dir: &Path) -> Result<PathBuf, HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::Usage("report has no rows".into()));
    }
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}.{}", report.name, format.extension()));
    let body = match format {
        ReportFormat::Csv => report.to_csv_string()?,
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Svg => report.to_svg_string(),
    };
    fs::write(&path, body)?;
    Ok(path)
}
