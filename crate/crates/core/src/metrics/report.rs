use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{EvalReport, MetricsError};

/// Tag used for the aggregate row of the CSV report.
pub const TOTAL_ROW: &str = "TOTAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (expected json or csv)")),
        }
    }
}

/// One row per generator, then a `TOTAL` row: rate columns hold the means
/// of the rows above (so `ap` is mAP and `balanced_acc` is avg-acc), count
/// columns hold sums. Rates are printed with six decimals.
pub fn report_to_csv(report: &EvalReport) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| MetricsError::Format(e.to_string());
    w.write_record(["tag", "ap", "real_acc", "fake_acc", "balanced_acc", "n_real", "n_fake"])
        .map_err(err)?;
    let f = |x: f64| format!("{x:.6}");
    for g in &report.generators {
        w.write_record([
            g.generator_tag.clone(),
            f(g.ap),
            f(g.real_acc),
            f(g.fake_acc),
            f(g.balanced_acc),
            g.n_real.to_string(),
            g.n_fake.to_string(),
        ])
        .map_err(err)?;
    }
    let n = report.generators.len() as f64;
    let mean = |sel: fn(&super::GeneratorMetrics) -> f64| report.generators.iter().map(sel).sum::<f64>() / n;
    w.write_record([
        TOTAL_ROW.to_string(),
        f(report.map),
        f(mean(|g| g.real_acc)),
        f(mean(|g| g.fake_acc)),
        f(report.avg_acc),
        report.generators.iter().map(|g| g.n_real).sum::<usize>().to_string(),
        report.generators.iter().map(|g| g.n_fake).sum::<usize>().to_string(),
    ])
    .map_err(err)?;
    let bytes = w.into_inner().map_err(|e| MetricsError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Full-precision JSON mirror of the report.
pub fn report_to_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<EvalReport, MetricsError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| MetricsError::Format(e.to_string()))
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<(), MetricsError> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => report_to_csv(report)?,
    };
    fs::write(path, text).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}
