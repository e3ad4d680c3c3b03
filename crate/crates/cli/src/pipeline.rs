//! Trial orchestration: runs every smartphone session through the
//! configured normalizations, extracts per-volunteer colour and wrinkle
//! series, merges ingested device readings and computes the trial
//! statistics. Per-session failures become skipped-session records so
//! one bad image never aborts a run.

use std::path::PathBuf;

use chrono::NaiveDate;
use rayon::prelude::*;
use skintrack_core::align::{
    compute_descriptors, detect_keypoints, estimate_transform, match_knn, AlignTransform,
    Descriptor, Keypoint, TransformKind,
};
use skintrack_core::image::{load_image, save_gray, save_image, to_grayscale, ImageGray};
use skintrack_core::metrics::{
    apply_normalization, skin_colour, sobel_combined, wrinkle_for_session, wrinkle_ratio_in_roi,
};
use skintrack_core::normalize::NormalizationMethod;
use skintrack_core::stats::{self, TestResult};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, SessionRecord, Site, VolunteerRecord, ANTERA_PARAMETERS};

pub const LAB_CHANNELS: [&str; 3] = ["l", "a", "b"];

/// One longitudinal series of a scalar metric for one volunteer.
#[derive(Debug, Clone)]
pub struct MetricSeries {
    pub volunteer_id: String,
    /// `colour_l` | `colour_a` | `colour_b` | `wrinkle_ratio` | `antera_*`.
    pub metric_name: String,
    /// Set for smartphone colour series, absent for wrinkle and antera.
    pub method: Option<NormalizationMethod>,
    /// Strictly date-ascending.
    pub points: Vec<(NaiveDate, f64)>,
}

impl MetricSeries {
    /// Unique file stem for the per-series CSV.
    pub fn file_stem(&self) -> String {
        match self.method {
            Some(m) => format!("{}__{}__{}", self.volunteer_id, self.metric_name, m.slug()),
            None => format!("{}__{}", self.volunteer_id, self.metric_name),
        }
    }
}

/// A session the pipeline could not measure, with the failing stage.
#[derive(Debug, Clone)]
pub struct SkippedSession {
    pub volunteer_id: String,
    pub date: NaiveDate,
    pub site: Site,
    pub stage: &'static str,
    pub error: String,
}

/// First-versus-last paired comparison for one trial parameter.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub parameter: String,
    pub percent_variation: f64,
    pub result: TestResult,
}

/// Day-1 smartphone-versus-device disagreement per LAB channel.
#[derive(Debug, Clone)]
pub struct MseRow {
    pub method: NormalizationMethod,
    /// L, a, b order; `None` when not computable.
    pub values: [Option<f64>; 3],
}

/// Day-1 smartphone-versus-device correlation for one LAB channel.
#[derive(Debug, Clone)]
pub struct CorrelationRow {
    pub channel: &'static str,
    /// One entry per configured method, in the bundle's method order.
    pub values: Vec<(NormalizationMethod, Option<f64>)>,
}

#[derive(Debug)]
pub struct ReportBundle {
    pub trial_id: String,
    pub alpha: f64,
    pub methods: Vec<NormalizationMethod>,
    pub series: Vec<MetricSeries>,
    pub summary: Vec<SummaryRow>,
    pub mse: Vec<MseRow>,
    pub correlation: Vec<CorrelationRow>,
    pub skipped: Vec<SkippedSession>,
}

/// Where to put per-session intermediate images, when requested.
#[derive(Debug, Clone)]
pub struct Intermediates {
    pub dir: PathBuf,
}

struct VolunteerOutput {
    series: Vec<MetricSeries>,
    skipped: Vec<SkippedSession>,
}

fn skip(
    v: &VolunteerRecord,
    s: &SessionRecord,
    stage: &'static str,
    error: impl ToString,
) -> SkippedSession {
    SkippedSession {
        volunteer_id: v.id.clone(),
        date: s.date,
        site: s.site,
        stage,
        error: error.to_string(),
    }
}

fn sorted_sessions(v: &VolunteerRecord, site: Site) -> Vec<&SessionRecord> {
    let mut sessions: Vec<_> = v.smartphone_sessions(site).collect();
    sessions.sort_by_key(|s| s.date);
    sessions
}

fn intermediate_path(
    inter: &Intermediates,
    v: &VolunteerRecord,
    date: NaiveDate,
    suffix: &str,
) -> Result<PathBuf> {
    let dir = inter.dir.join(&v.id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir.join(format!("{date}_{suffix}.png")))
}

/// Measures mean CIELAB skin colour on every cheek session under every
/// configured method. Sessions without their own region reuse the
/// reference region verbatim: cheek framing is assumed steady, unlike
/// the temple series which is explicitly aligned.
fn process_cheek(
    v: &VolunteerRecord,
    manifest: &Manifest,
    inter: Option<&Intermediates>,
    out: &mut VolunteerOutput,
) {
    let sessions = sorted_sessions(v, Site::Cheek);
    if sessions.is_empty() {
        return;
    }
    let reference_roi = v
        .reference_record(Site::Cheek)
        .and_then(|r| r.roi.clone())
        .expect("validated: cheek reference region present");

    // points[method][channel] accumulates in date order.
    let methods = &manifest.config.methods;
    let mut points: Vec<[Vec<(NaiveDate, f64)>; 3]> =
        methods.iter().map(|_| Default::default()).collect();

    for session in sessions {
        let path = session.image_path.as_ref().expect("smartphone session");
        let img = match load_image(path) {
            Ok(img) => img,
            Err(e) => {
                out.skipped.push(skip(v, session, "load", e));
                continue;
            }
        };
        let roi = session.roi.as_ref().unwrap_or(&reference_roi);
        for (mi, &method) in methods.iter().enumerate() {
            let card = session.card.as_ref().map(|c| (c, &manifest.card_layout));
            let normalized = match apply_normalization(&img, method, &manifest.config.clahe, card) {
                Ok(img) => img,
                Err(e) => {
                    let msg = format!("{}: {e}", method.slug());
                    out.skipped.push(skip(v, session, "normalize", msg));
                    continue;
                }
            };
            if let Some(inter) = inter {
                let suffix = format!("cheek_{}", method.slug());
                if let Err(e) = intermediate_path(inter, v, session.date, &suffix)
                    .and_then(|p| save_image(&p, &normalized).map_err(Error::from))
                {
                    out.skipped.push(skip(v, session, "persist", e));
                }
            }
            match skin_colour(&normalized, roi) {
                Ok(lab) => {
                    for (ci, value) in [lab.l, lab.a, lab.b].into_iter().enumerate() {
                        points[mi][ci].push((session.date, value));
                    }
                }
                Err(e) => {
                    let msg = format!("{}: {e}", method.slug());
                    out.skipped.push(skip(v, session, "colour", msg));
                }
            }
        }
    }

    for (mi, &method) in methods.iter().enumerate() {
        for (ci, channel) in LAB_CHANNELS.iter().enumerate() {
            if points[mi][ci].is_empty() {
                continue;
            }
            out.series.push(MetricSeries {
                volunteer_id: v.id.clone(),
                metric_name: format!("colour_{channel}"),
                method: Some(method),
                points: std::mem::take(&mut points[mi][ci]),
            });
        }
    }
}

struct SiftFeatures {
    keypoints: Vec<Keypoint>,
    descriptors: Vec<Descriptor>,
}

fn extract_features(img: &ImageGray, max_keypoints: usize) -> skintrack_core::Result<SiftFeatures> {
    let keypoints = detect_keypoints(img, max_keypoints)?;
    let descriptors = compute_descriptors(img, &keypoints);
    Ok(SiftFeatures {
        keypoints,
        descriptors,
    })
}

fn align_to_reference(
    reference: &SiftFeatures,
    img: &ImageGray,
    manifest: &Manifest,
) -> skintrack_core::Result<AlignTransform> {
    let session = extract_features(img, manifest.config.max_keypoints)?;
    let matches = match_knn(
        &reference.descriptors,
        &session.descriptors,
        manifest.config.ratio_threshold,
    )?;
    estimate_transform(
        &matches,
        &reference.keypoints,
        &session.keypoints,
        TransformKind::Similarity,
        manifest.config.seed,
    )
}

/// Measures the wrinkle ratio on every temple session. The manually
/// drawn reference region is measured in place on its own session and
/// carried onto the others through a feature-based similarity fit.
fn process_temple(
    v: &VolunteerRecord,
    manifest: &Manifest,
    inter: Option<&Intermediates>,
    out: &mut VolunteerOutput,
) {
    let sessions = sorted_sessions(v, Site::Temple);
    if sessions.is_empty() {
        return;
    }
    let reference = v
        .reference_record(Site::Temple)
        .expect("validated: temple reference region present");
    let reference_roi = reference.roi.as_ref().expect("reference region");

    let ref_path = reference.image_path.as_ref().expect("smartphone session");
    let ref_gray = match load_image(ref_path) {
        Ok(img) => to_grayscale(&img),
        Err(e) => {
            // Without the reference image nothing can be aligned; each
            // temple session is reported individually.
            for session in &sessions {
                out.skipped.push(skip(v, session, "load", &e));
            }
            return;
        }
    };
    // Feature extraction on the reference image is shared by every
    // follow-up session of this volunteer.
    let mut ref_features: Option<skintrack_core::Result<SiftFeatures>> = None;

    let mut points = Vec::new();
    for session in sessions {
        let (gray, measured) = if session.date == reference.date {
            (
                ref_gray.clone(),
                wrinkle_ratio_in_roi(&ref_gray, reference_roi),
            )
        } else {
            let path = session.image_path.as_ref().expect("smartphone session");
            let gray = match load_image(path) {
                Ok(img) => to_grayscale(&img),
                Err(e) => {
                    out.skipped.push(skip(v, session, "load", e));
                    continue;
                }
            };
            // A session carrying its own region is measured directly.
            if let Some(roi) = &session.roi {
                (gray.clone(), wrinkle_ratio_in_roi(&gray, roi))
            } else {
                let features = ref_features.get_or_insert_with(|| {
                    extract_features(&ref_gray, manifest.config.max_keypoints)
                });
                let transform = match features {
                    Ok(f) => align_to_reference(f, &gray, manifest),
                    Err(e) => {
                        out.skipped.push(skip(v, session, "align", &*e));
                        continue;
                    }
                };
                match transform {
                    Ok(t) => (gray.clone(), wrinkle_for_session(&gray, reference_roi, &t)),
                    Err(e) => {
                        out.skipped.push(skip(v, session, "align", e));
                        continue;
                    }
                }
            }
        };
        if let Some(inter) = inter {
            if let Err(e) = intermediate_path(inter, v, session.date, "temple_edges")
                .and_then(|p| save_gray(&p, &sobel_combined(&gray)).map_err(Error::from))
            {
                out.skipped.push(skip(v, session, "persist", e));
            }
        }
        match measured {
            Ok(value) => points.push((session.date, value)),
            Err(e) => out.skipped.push(skip(v, session, "wrinkle", e)),
        }
    }
    if !points.is_empty() {
        out.series.push(MetricSeries {
            volunteer_id: v.id.clone(),
            metric_name: "wrinkle_ratio".into(),
            method: None,
            points,
        });
    }
}

/// Folds ingested device readings into per-parameter series.
fn process_antera(v: &VolunteerRecord, out: &mut VolunteerOutput) {
    let mut sessions: Vec<_> = v.antera_sessions().collect();
    sessions.sort_by_key(|s| s.date);
    for key in ANTERA_PARAMETERS {
        let points: Vec<(NaiveDate, f64)> = sessions
            .iter()
            .filter_map(|s| s.parameters.get(key).map(|&v| (s.date, v)))
            .collect();
        if points.is_empty() {
            continue;
        }
        out.series.push(MetricSeries {
            volunteer_id: v.id.clone(),
            metric_name: format!("antera_{key}"),
            method: None,
            points,
        });
    }
}

fn process_volunteer(
    v: &VolunteerRecord,
    manifest: &Manifest,
    inter: Option<&Intermediates>,
) -> VolunteerOutput {
    let mut out = VolunteerOutput {
        series: Vec::new(),
        skipped: Vec::new(),
    };
    process_cheek(v, manifest, inter, &mut out);
    process_temple(v, manifest, inter, &mut out);
    process_antera(v, &mut out);
    out
}

/// Looks up a finished series by name and method.
fn find_series<'a>(
    series: &'a [MetricSeries],
    volunteer_id: &str,
    metric_name: &str,
    method: Option<NormalizationMethod>,
) -> Option<&'a MetricSeries> {
    series.iter().find(|s| {
        s.volunteer_id == volunteer_id && s.metric_name == metric_name && s.method == method
    })
}

/// Per-volunteer (first, last) pairs for one parameter, volunteers with
/// fewer than two sessions contributing nothing.
fn first_last_pairs(
    series: &[MetricSeries],
    volunteer_ids: &[String],
    metric_name: &str,
    method: Option<NormalizationMethod>,
) -> (Vec<f64>, Vec<f64>) {
    let mut first = Vec::new();
    let mut last = Vec::new();
    for id in volunteer_ids {
        if let Some(s) = find_series(series, id, metric_name, method) {
            if s.points.len() >= 2 {
                first.push(s.points.first().unwrap().1);
                last.push(s.points.last().unwrap().1);
            }
        }
    }
    (first, last)
}

fn summary_row(
    series: &[MetricSeries],
    volunteer_ids: &[String],
    parameter: String,
    metric_name: &str,
    method: Option<NormalizationMethod>,
    alpha: f64,
) -> Option<SummaryRow> {
    let (first, last) = first_last_pairs(series, volunteer_ids, metric_name, method);
    let result = stats::paired_compare(&first, &last, alpha).ok()?;
    let percent_variation = stats::percent_variation(&first, &last).ok()?;
    Some(SummaryRow {
        parameter,
        percent_variation,
        result,
    })
}

fn build_summary(
    series: &[MetricSeries],
    volunteer_ids: &[String],
    methods: &[NormalizationMethod],
    alpha: f64,
) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for key in ANTERA_PARAMETERS {
        let name = format!("antera_{key}");
        rows.extend(summary_row(
            series,
            volunteer_ids,
            name.clone(),
            &name,
            None,
            alpha,
        ));
    }
    for channel in LAB_CHANNELS {
        for &method in methods {
            let metric = format!("colour_{channel}");
            let parameter = format!("{metric}_{}", method.slug());
            rows.extend(summary_row(
                series,
                volunteer_ids,
                parameter,
                &metric,
                Some(method),
                alpha,
            ));
        }
    }
    rows.extend(summary_row(
        series,
        volunteer_ids,
        "wrinkle_ratio".into(),
        "wrinkle_ratio",
        None,
        alpha,
    ));
    rows
}

/// Day-1 LAB values: for each volunteer with both a device reading and
/// a smartphone colour series under `method`, the earliest value of
/// each. Vectors are aligned across channels.
fn day_one_pairs(
    series: &[MetricSeries],
    volunteer_ids: &[String],
    method: NormalizationMethod,
) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
    let mut antera: [Vec<f64>; 3] = Default::default();
    let mut phone: [Vec<f64>; 3] = Default::default();
    for id in volunteer_ids {
        let device: Vec<_> = LAB_CHANNELS
            .iter()
            .map(|ch| find_series(series, id, &format!("antera_colour_{ch}"), None))
            .collect();
        let smart: Vec<_> = LAB_CHANNELS
            .iter()
            .map(|ch| find_series(series, id, &format!("colour_{ch}"), Some(method)))
            .collect();
        if device.iter().any(|s| s.is_none()) || smart.iter().any(|s| s.is_none()) {
            continue;
        }
        for ci in 0..3 {
            antera[ci].push(device[ci].unwrap().points.first().unwrap().1);
            phone[ci].push(smart[ci].unwrap().points.first().unwrap().1);
        }
    }
    (antera, phone)
}

fn build_mse_and_correlation(
    series: &[MetricSeries],
    volunteer_ids: &[String],
    methods: &[NormalizationMethod],
) -> (Vec<MseRow>, Vec<CorrelationRow>) {
    let mut mse_rows = Vec::new();
    let mut corr: Vec<CorrelationRow> = LAB_CHANNELS
        .iter()
        .map(|&channel| CorrelationRow {
            channel,
            values: Vec::new(),
        })
        .collect();
    for &method in methods {
        let (antera, phone) = day_one_pairs(series, volunteer_ids, method);
        let mut values = [None; 3];
        for ci in 0..3 {
            values[ci] = stats::mse(&antera[ci], &phone[ci]).ok();
            let r = stats::pearson(&antera[ci], &phone[ci]).ok();
            corr[ci].values.push((method, r));
        }
        mse_rows.push(MseRow { method, values });
    }
    (mse_rows, corr)
}

/// Runs the whole trial and assembles the report bundle. Per-session
/// problems are recorded, not fatal; an entirely unusable trial is.
pub fn run_pipeline(manifest: &Manifest, inter: Option<&Intermediates>) -> Result<ReportBundle> {
    let outputs: Vec<VolunteerOutput> = manifest
        .volunteers
        .par_iter()
        .map(|v| process_volunteer(v, manifest, inter))
        .collect();

    let mut series = Vec::new();
    let mut skipped = Vec::new();
    for out in outputs {
        series.extend(out.series);
        skipped.extend(out.skipped);
    }
    if series.is_empty() {
        return Err(Error::EmptyData(
            "no session produced a single measurement".into(),
        ));
    }
    // Deterministic report order, independent of worker scheduling.
    series.sort_by(|a, b| {
        (&a.volunteer_id, &a.metric_name, a.method.map(|m| m.slug())).cmp(&(
            &b.volunteer_id,
            &b.metric_name,
            b.method.map(|m| m.slug()),
        ))
    });
    skipped.sort_by(|a, b| {
        (&a.volunteer_id, a.date, a.site, a.stage, &a.error).cmp(&(
            &b.volunteer_id,
            b.date,
            b.site,
            b.stage,
            &b.error,
        ))
    });

    let volunteer_ids: Vec<String> = manifest.volunteers.iter().map(|v| v.id.clone()).collect();
    let methods = manifest.config.methods.clone();
    let alpha = manifest.config.alpha;
    let summary = build_summary(&series, &volunteer_ids, &methods, alpha);
    let (mse, correlation) = build_mse_and_correlation(&series, &volunteer_ids, &methods);

    Ok(ReportBundle {
        trial_id: manifest.trial_id.clone(),
        alpha,
        methods,
        series,
        summary,
        mse,
        correlation,
        skipped,
    })
}
