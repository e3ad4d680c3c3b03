//! CSV report emission: one file per metric series plus the trial-level
//! summary, disagreement and correlation tables. Output is fully
//! deterministic for a given bundle.

use std::path::Path;

use skintrack_core::normalize::NormalizationMethod;

use crate::error::{Error, Result};
use crate::pipeline::{MetricSeries, ReportBundle};

/// Row order of the disagreement table.
pub const MSE_METHOD_ORDER: [NormalizationMethod; 4] = [
    NormalizationMethod::Original,
    NormalizationMethod::Clahe,
    NormalizationMethod::ColourCard,
    NormalizationMethod::HistEqualY,
];

/// Column order of the correlation table.
pub const CORRELATION_METHOD_ORDER: [NormalizationMethod; 4] = [
    NormalizationMethod::ColourCard,
    NormalizationMethod::HistEqualY,
    NormalizationMethod::Clahe,
    NormalizationMethod::Original,
];

/// Human-readable method name for the disagreement table.
pub fn mse_label(method: NormalizationMethod) -> &'static str {
    match method {
        NormalizationMethod::Original => "Original",
        NormalizationMethod::Clahe => "CLAHE",
        NormalizationMethod::ColourCard => "CC Normalised",
        NormalizationMethod::HistEqualY => "Histogram",
    }
}

/// Column heading for the correlation table.
pub fn correlation_label(method: NormalizationMethod) -> &'static str {
    match method {
        NormalizationMethod::ColourCard => "ColorNorm",
        NormalizationMethod::HistEqualY => "Histequal",
        NormalizationMethod::Clahe => "CLAHE",
        NormalizationMethod::Original => "Original",
    }
}

/// Formats a real with at least six significant digits, no scientific
/// notation, stable across runs.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let decimals = (5 - v.abs().log10().floor() as i64).max(0) as usize;
    format!("{v:.decimals$}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn series_rows(series: &MetricSeries) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["date".to_string(), "value".to_string()]];
    for &(date, value) in &series.points {
        rows.push(vec![date.to_string(), sig6(value)]);
    }
    rows
}

fn summary_rows(bundle: &ReportBundle) -> Vec<Vec<String>> {
    let header = ["parameter", "% variation", "significant", "p value", "test"];
    let mut rows = vec![header.map(str::to_string).to_vec()];
    for row in &bundle.summary {
        rows.push(vec![
            row.parameter.clone(),
            sig6(row.percent_variation),
            row.result.significant.to_string(),
            sig6(row.result.p_value),
            row.result.test_kind.label().to_string(),
        ]);
    }
    rows
}

fn opt_sig6(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

fn mse_rows(bundle: &ReportBundle) -> Vec<Vec<String>> {
    let header = ["image_type", "mse_l", "mse_a", "mse_b"];
    let mut rows = vec![header.map(str::to_string).to_vec()];
    for method in MSE_METHOD_ORDER {
        let Some(row) = bundle.mse.iter().find(|r| r.method == method) else {
            continue;
        };
        rows.push(vec![
            mse_label(method).to_string(),
            opt_sig6(row.values[0]),
            opt_sig6(row.values[1]),
            opt_sig6(row.values[2]),
        ]);
    }
    rows
}

fn correlation_rows(bundle: &ReportBundle) -> Vec<Vec<String>> {
    let methods: Vec<NormalizationMethod> = CORRELATION_METHOD_ORDER
        .into_iter()
        .filter(|m| bundle.methods.contains(m))
        .collect();
    let mut header = vec!["colour_parameter".to_string()];
    header.extend(methods.iter().map(|&m| correlation_label(m).to_string()));
    let mut rows = vec![header];
    for row in &bundle.correlation {
        let mut out = vec![format!("{}*", row.channel.to_uppercase())];
        for &method in &methods {
            let value = row
                .values
                .iter()
                .find(|(m, _)| *m == method)
                .and_then(|&(_, v)| v);
            out.push(opt_sig6(value));
        }
        rows.push(out);
    }
    rows
}

fn skipped_rows(bundle: &ReportBundle) -> Vec<Vec<String>> {
    let header = ["volunteer_id", "date", "site", "stage", "error"];
    let mut rows = vec![header.map(str::to_string).to_vec()];
    for s in &bundle.skipped {
        rows.push(vec![
            s.volunteer_id.clone(),
            s.date.to_string(),
            s.site.label().to_string(),
            s.stage.to_string(),
            s.error.clone(),
        ]);
    }
    rows
}

/// Writes every CSV artifact under `out_dir`: `summary.csv`, `mse.csv`,
/// `correlation.csv`, `skipped.csv` and one `series/<id>__<metric>.csv`
/// per metric series.
pub fn emit_csv(bundle: &ReportBundle, out_dir: &Path) -> Result<()> {
    let series_dir = out_dir.join("series");
    std::fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;

    write_csv(&out_dir.join("summary.csv"), &summary_rows(bundle))?;
    write_csv(&out_dir.join("mse.csv"), &mse_rows(bundle))?;
    write_csv(&out_dir.join("correlation.csv"), &correlation_rows(bundle))?;
    write_csv(&out_dir.join("skipped.csv"), &skipped_rows(bundle))?;
    for series in &bundle.series {
        let path = series_dir.join(format!("{}.csv", series.file_stem()));
        write_csv(&path, &series_rows(series))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_keeps_six_significant_digits() {
        assert_eq!(sig6(0.0742), "0.0742000");
        assert_eq!(sig6(123.456789), "123.457");
        assert_eq!(sig6(-0.0001234567), "-0.000123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1.00000");
    }

    #[test]
    fn labels_cover_every_method() {
        for m in NormalizationMethod::ALL {
            assert!(!mse_label(m).is_empty());
            assert!(!correlation_label(m).is_empty());
        }
    }
}
