//! Trial manifest: JSON document listing volunteers, their imaging
//! sessions and the pipeline configuration, validated eagerly so that
//! a `run` starts from a consistent picture of the trial.
//!
//! All file paths inside the manifest are resolved relative to the
//! manifest's own directory. Antera readings can live inline in a
//! session record or in a sidecar CSV referenced by `antera_csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use skintrack_core::card::{CardAnnotation, CardLayout};
use skintrack_core::color::LabColour;
use skintrack_core::image::Roi;
use skintrack_core::normalize::{ClaheConfig, NormalizationMethod};

use crate::error::{Error, Result};

/// Imaging site on the volunteer's face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Cheek,
    Temple,
}

impl Site {
    pub fn label(self) -> &'static str {
        match self {
            Site::Cheek => "cheek",
            Site::Temple => "temple",
        }
    }
}

/// Capture device for one session record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Smartphone,
    Antera,
}

/// One validated imaging or measurement session.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub date: NaiveDate,
    pub site: Site,
    pub device: Device,
    /// Absolute path; present exactly for smartphone records.
    pub image_path: Option<PathBuf>,
    /// Named readings; present exactly for antera records.
    pub parameters: BTreeMap<String, f64>,
    pub card: Option<CardAnnotation>,
    pub roi: Option<Roi>,
}

#[derive(Debug, Clone)]
pub struct VolunteerRecord {
    pub id: String,
    pub reference_session: usize,
    pub sessions: Vec<SessionRecord>,
}

impl VolunteerRecord {
    /// Date of the session the manual regions were drawn on.
    pub fn reference_date(&self) -> NaiveDate {
        self.sessions[self.reference_session].date
    }

    /// The ROI-bearing smartphone record for `site` at the reference
    /// date. Validation guarantees it exists for sites in use.
    pub fn reference_record(&self, site: Site) -> Option<&SessionRecord> {
        let date = self.reference_date();
        self.sessions.iter().find(|s| {
            s.device == Device::Smartphone && s.site == site && s.date == date && s.roi.is_some()
        })
    }

    pub fn smartphone_sessions(&self, site: Site) -> impl Iterator<Item = &SessionRecord> {
        self.sessions
            .iter()
            .filter(move |s| s.device == Device::Smartphone && s.site == site)
    }

    pub fn antera_sessions(&self) -> impl Iterator<Item = &SessionRecord> {
        self.sessions.iter().filter(|s| s.device == Device::Antera)
    }
}

/// Pipeline knobs; every field has a sensible default so a minimal
/// manifest can omit the whole block.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub methods: Vec<NormalizationMethod>,
    pub clahe: ClaheConfig,
    pub ratio_threshold: f64,
    pub seed: u64,
    pub alpha: f64,
    pub max_keypoints: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            methods: NormalizationMethod::ALL.to_vec(),
            clahe: ClaheConfig::default(),
            ratio_threshold: 0.75,
            seed: 7,
            alpha: 0.05,
            max_keypoints: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub trial_id: String,
    pub volunteers: Vec<VolunteerRecord>,
    pub card_layout: CardLayout,
    pub config: PipelineConfig,
    /// Directory the manifest was loaded from (for intermediates etc.).
    pub base_dir: PathBuf,
}

// ---------------------------------------------------------------------
// Raw serde mirror of the JSON document.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    trial_id: String,
    card_layout_path: String,
    #[serde(default)]
    antera_csv: Option<String>,
    #[serde(default)]
    config: Option<RawConfig>,
    volunteers: Vec<RawVolunteer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    methods: Option<Vec<String>>,
    #[serde(default)]
    clahe: Option<RawClahe>,
    #[serde(default)]
    ratio_threshold: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    max_keypoints: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClahe {
    tiles_x: u32,
    tiles_y: u32,
    #[serde(default)]
    clip_limit: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVolunteer {
    id: String,
    reference_session: usize,
    sessions: Vec<RawSession>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    date: NaiveDate,
    site: Site,
    device: Device,
    #[serde(default)]
    image_path: Option<String>,
    #[serde(default)]
    parameters: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    card_corners: Option<[[f64; 2]; 4]>,
    #[serde(default)]
    roi: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCardLayout {
    rows: usize,
    cols: usize,
    key_patch: [usize; 2],
    margin: f64,
    reference: Vec<[f64; 3]>,
}

/// Column order of the antera sidecar CSV.
pub const ANTERA_CSV_HEADER: [&str; 8] = [
    "volunteer_id",
    "date",
    "colour_l",
    "colour_a",
    "colour_b",
    "wrinkle_overall_size",
    "wrinkle_depth",
    "wrinkle_max_depth",
];

/// Canonical antera parameter keys (everything after the id and date).
pub const ANTERA_PARAMETERS: [&str; 6] = [
    "colour_l",
    "colour_a",
    "colour_b",
    "wrinkle_overall_size",
    "wrinkle_depth",
    "wrinkle_max_depth",
];

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads and fully validates a card layout document.
pub fn load_card_layout(path: &Path) -> Result<CardLayout> {
    let raw: RawCardLayout =
        serde_json::from_str(&read_to_string(path)?).map_err(|e| parse_err(path, e))?;
    let reference = raw
        .reference
        .iter()
        .map(|&[l, a, b]| LabColour { l, a, b })
        .collect();
    CardLayout::new(
        raw.rows,
        raw.cols,
        reference,
        (raw.key_patch[0], raw.key_patch[1]),
        raw.margin,
    )
    .map_err(|e| Error::Validation(format!("card layout {}: {e}", path.display())))
}

fn build_config(raw: Option<RawConfig>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    let Some(raw) = raw else { return Ok(cfg) };
    if let Some(methods) = raw.methods {
        if methods.is_empty() {
            return Err(Error::Validation("config.methods must not be empty".into()));
        }
        let mut parsed = Vec::new();
        for slug in &methods {
            let m = NormalizationMethod::from_slug(slug).ok_or_else(|| {
                Error::Validation(format!(
                    "unknown normalization method {slug:?} (expected one of original, histeq, clahe, card)"
                ))
            })?;
            if !parsed.contains(&m) {
                parsed.push(m);
            }
        }
        cfg.methods = parsed;
    }
    if let Some(c) = raw.clahe {
        let clahe = ClaheConfig {
            tiles_x: c.tiles_x,
            tiles_y: c.tiles_y,
            clip_limit: c.clip_limit,
        };
        clahe
            .validate()
            .map_err(|e| Error::Validation(format!("config.clahe: {e}")))?;
        cfg.clahe = clahe;
    }
    if let Some(r) = raw.ratio_threshold {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Validation(format!(
                "config.ratio_threshold {r} not in (0, 1]"
            )));
        }
        cfg.ratio_threshold = r;
    }
    if let Some(s) = raw.seed {
        cfg.seed = s;
    }
    if let Some(a) = raw.alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Validation(format!("config.alpha {a} not in (0, 1)")));
        }
        cfg.alpha = a;
    }
    if let Some(k) = raw.max_keypoints {
        if k < 10 {
            return Err(Error::Validation(format!(
                "config.max_keypoints {k} is too small to align anything"
            )));
        }
        cfg.max_keypoints = k;
    }
    Ok(cfg)
}

fn build_session(raw: RawSession, base: &Path, ctx: &str) -> Result<SessionRecord> {
    let mut record = SessionRecord {
        date: raw.date,
        site: raw.site,
        device: raw.device,
        image_path: None,
        parameters: BTreeMap::new(),
        card: None,
        roi: None,
    };
    match raw.device {
        Device::Smartphone => {
            let rel = raw.image_path.ok_or_else(|| {
                Error::Validation(format!("{ctx}: smartphone session needs image_path"))
            })?;
            if raw.parameters.is_some() {
                return Err(Error::Validation(format!(
                    "{ctx}: smartphone session must not carry antera parameters"
                )));
            }
            let path = base.join(rel);
            if !path.is_file() {
                return Err(Error::Validation(format!(
                    "{ctx}: image file not found: {}",
                    path.display()
                )));
            }
            record.image_path = Some(path);
        }
        Device::Antera => {
            let params = raw.parameters.ok_or_else(|| {
                Error::Validation(format!("{ctx}: antera session needs parameters"))
            })?;
            if params.is_empty() {
                return Err(Error::Validation(format!(
                    "{ctx}: antera parameters must not be empty"
                )));
            }
            if raw.image_path.is_some() {
                return Err(Error::Validation(format!(
                    "{ctx}: antera session must not carry image_path"
                )));
            }
            record.parameters = params;
        }
    }
    if let Some(corners) = raw.card_corners {
        let pts = corners.map(|[x, y]| (x, y));
        record.card = Some(
            CardAnnotation::new(pts)
                .map_err(|e| Error::Validation(format!("{ctx}: card_corners: {e}")))?,
        );
    }
    if let Some(poly) = raw.roi {
        let pts: Vec<(f64, f64)> = poly.iter().map(|&[x, y]| (x, y)).collect();
        record.roi =
            Some(Roi::new(pts).map_err(|e| Error::Validation(format!("{ctx}: roi: {e}")))?);
    }
    Ok(record)
}

fn merge_antera_csv(path: &Path, volunteers: &mut [VolunteerRecord]) -> Result<()> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let expected: Vec<&str> = ANTERA_CSV_HEADER.to_vec();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: format!("header {got:?}, expected {expected:?}"),
        });
    }
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let fail = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message: format!("row {}: {message}", line + 2),
        };
        let id = &row[0];
        let date: NaiveDate = row[1]
            .parse()
            .map_err(|e| fail(format!("date {:?}: {e}", &row[1])))?;
        let mut parameters = BTreeMap::new();
        for (i, key) in ANTERA_PARAMETERS.iter().enumerate() {
            let cell = &row[i + 2];
            let value: f64 = cell
                .parse()
                .map_err(|e| fail(format!("{key} {cell:?}: {e}")))?;
            parameters.insert((*key).to_string(), value);
        }
        let v = volunteers
            .iter_mut()
            .find(|v| v.id == id)
            .ok_or_else(|| fail(format!("unknown volunteer id {id:?}")))?;
        v.sessions.push(SessionRecord {
            date,
            site: Site::Cheek,
            device: Device::Antera,
            image_path: None,
            parameters,
            card: None,
            roi: None,
        });
    }
    Ok(())
}

fn validate_volunteer(v: &VolunteerRecord, card_required: bool) -> Result<()> {
    let ctx = format!("volunteer {:?}", v.id);
    if v.sessions.is_empty() {
        return Err(Error::Validation(format!("{ctx}: no sessions")));
    }
    let reference = v.sessions.get(v.reference_session).ok_or_else(|| {
        Error::Validation(format!(
            "{ctx}: reference_session {} out of range ({} sessions)",
            v.reference_session,
            v.sessions.len()
        ))
    })?;
    if reference.device != Device::Smartphone {
        return Err(Error::Validation(format!(
            "{ctx}: reference_session must point at a smartphone record"
        )));
    }
    let ref_date = reference.date;
    // Every site with smartphone coverage must have a manual region on
    // the reference date; later sessions inherit or align against it.
    for site in [Site::Cheek, Site::Temple] {
        let in_use = v.smartphone_sessions(site).next().is_some();
        if in_use && v.reference_record(site).is_none() {
            return Err(Error::Validation(format!(
                "{ctx}: no roi-bearing smartphone {} record on reference date {ref_date}",
                site.label()
            )));
        }
    }
    // Duplicate (device, site, date) would corrupt the series.
    let mut seen = BTreeSet::new();
    for s in &v.sessions {
        let key = (matches!(s.device, Device::Antera), s.site, s.date);
        if !seen.insert(key) {
            return Err(Error::Validation(format!(
                "{ctx}: duplicate {} {} session on {}",
                if key.0 { "antera" } else { "smartphone" },
                s.site.label(),
                s.date
            )));
        }
    }
    if card_required {
        for s in v.smartphone_sessions(Site::Cheek) {
            if s.card.is_none() {
                return Err(Error::Validation(format!(
                    "{ctx}: cheek session {} needs card_corners for card normalization",
                    s.date
                )));
            }
        }
    }
    Ok(())
}

/// Command-line knobs that take precedence over the manifest config.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub methods: Option<Vec<NormalizationMethod>>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
}

/// Loads a manifest and validates every invariant eagerly: unique ids,
/// resolvable paths, well-formed regions, reference-session coverage.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    load_manifest_with(path, &ConfigOverrides::default())
}

/// [`load_manifest`] with command-line overrides applied before
/// validation, so e.g. dropping the card method also drops its
/// annotation requirements.
pub fn load_manifest_with(path: &Path, overrides: &ConfigOverrides) -> Result<Manifest> {
    let raw: RawManifest =
        serde_json::from_str(&read_to_string(path)?).map_err(|e| parse_err(path, e))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    if raw.trial_id.trim().is_empty() {
        return Err(Error::Validation("trial_id must not be empty".into()));
    }
    let mut config = build_config(raw.config)?;
    if let Some(methods) = &overrides.methods {
        if methods.is_empty() {
            return Err(Error::Validation("--methods must not be empty".into()));
        }
        config.methods = methods.clone();
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(alpha) = overrides.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Validation(format!("--alpha {alpha} not in (0, 1)")));
        }
        config.alpha = alpha;
    }
    let card_layout = load_card_layout(&base_dir.join(&raw.card_layout_path))?;

    let mut ids = BTreeSet::new();
    let mut volunteers = Vec::with_capacity(raw.volunteers.len());
    for rv in raw.volunteers {
        if rv.id.trim().is_empty() {
            return Err(Error::Validation("volunteer id must not be empty".into()));
        }
        if !ids.insert(rv.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate volunteer id {:?}",
                rv.id
            )));
        }
        let mut sessions = Vec::with_capacity(rv.sessions.len());
        for (i, rs) in rv.sessions.into_iter().enumerate() {
            let ctx = format!("volunteer {:?} session {i}", rv.id);
            sessions.push(build_session(rs, &base_dir, &ctx)?);
        }
        volunteers.push(VolunteerRecord {
            id: rv.id,
            reference_session: rv.reference_session,
            sessions,
        });
    }
    if volunteers.is_empty() {
        return Err(Error::Validation("manifest lists no volunteers".into()));
    }

    if let Some(rel) = &raw.antera_csv {
        let path = base_dir.join(rel);
        if !path.is_file() {
            return Err(Error::Validation(format!(
                "antera_csv not found: {}",
                path.display()
            )));
        }
        merge_antera_csv(&path, &mut volunteers)?;
    }

    let card_required = config.methods.contains(&NormalizationMethod::ColourCard);
    for v in &volunteers {
        validate_volunteer(v, card_required)?;
    }

    Ok(Manifest {
        trial_id: raw.trial_id,
        volunteers,
        card_layout,
        config,
        base_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, contents: &str) {
        std::fs::write(path, contents).unwrap();
    }

    fn tiny_png(path: &Path) {
        let mut img = skintrack_core::image::ImageRgb::new(4, 4);
        for p in img.pixels_mut() {
            p.copy_from_slice(&[180, 140, 120]);
        }
        skintrack_core::image::save_image(path, &img).unwrap();
    }

    fn layout_json() -> &'static str {
        r#"{"rows":1,"cols":2,"key_patch":[0,1],"margin":0.5,
            "reference":[[50,0,0],[60,10,-10]]}"#
    }

    fn minimal_manifest(dir: &Path) -> PathBuf {
        write(&dir.join("card_layout.json"), layout_json());
        tiny_png(&dir.join("a.png"));
        tiny_png(&dir.join("b.png"));
        let manifest = r#"{
            "trial_id": "t1",
            "card_layout_path": "card_layout.json",
            "config": {"methods": ["original"]},
            "volunteers": [{
                "id": "V01",
                "reference_session": 0,
                "sessions": [
                    {"date":"2025-01-06","site":"cheek","device":"smartphone",
                     "image_path":"a.png","roi":[[0,0],[3,0],[3,3],[0,3]]},
                    {"date":"2025-01-09","site":"cheek","device":"smartphone",
                     "image_path":"b.png"}
                ]
            }]
        }"#;
        let path = dir.join("manifest.json");
        write(&path, manifest);
        path
    }

    #[test]
    fn minimal_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_manifest(&minimal_manifest(dir.path())).unwrap();
        assert_eq!(m.trial_id, "t1");
        assert_eq!(m.volunteers.len(), 1);
        assert_eq!(m.volunteers[0].sessions.len(), 2);
        assert_eq!(m.config.methods, vec![NormalizationMethod::Original]);
        assert!(m.volunteers[0].sessions[0]
            .image_path
            .as_ref()
            .unwrap()
            .is_file());
    }

    #[test]
    fn duplicate_volunteer_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("card_layout.json"), layout_json());
        tiny_png(&dir.path().join("a.png"));
        let manifest = r#"{
            "trial_id": "t1",
            "card_layout_path": "card_layout.json",
            "volunteers": [
                {"id":"V01","reference_session":0,"sessions":[
                    {"date":"2025-01-06","site":"cheek","device":"smartphone",
                     "image_path":"a.png","roi":[[0,0],[3,0],[3,3],[0,3]],
                     "card_corners":[[0,0],[3,0],[3,3],[0,3]]}]},
                {"id":"V01","reference_session":0,"sessions":[
                    {"date":"2025-01-06","site":"cheek","device":"smartphone",
                     "image_path":"a.png","roi":[[0,0],[3,0],[3,3],[0,3]],
                     "card_corners":[[0,0],[3,0],[3,3],[0,3]]}]}
            ]
        }"#;
        let path = dir.path().join("manifest.json");
        write(&path, manifest);
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate volunteer id")));
    }

    #[test]
    fn missing_image_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("card_layout.json"), layout_json());
        let manifest = r#"{
            "trial_id": "t1",
            "card_layout_path": "card_layout.json",
            "config": {"methods": ["original"]},
            "volunteers": [{"id":"V01","reference_session":0,"sessions":[
                {"date":"2025-01-06","site":"cheek","device":"smartphone",
                 "image_path":"nope.png","roi":[[0,0],[3,0],[3,3],[0,3]]}]}]
        }"#;
        let path = dir.path().join("manifest.json");
        write(&path, manifest);
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("not found")));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn reference_session_must_carry_roi_for_used_sites() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("card_layout.json"), layout_json());
        tiny_png(&dir.path().join("a.png"));
        tiny_png(&dir.path().join("t.png"));
        // Temple session exists but there is no temple roi on the
        // reference date.
        let manifest = r#"{
            "trial_id": "t1",
            "card_layout_path": "card_layout.json",
            "config": {"methods": ["original"]},
            "volunteers": [{"id":"V01","reference_session":0,"sessions":[
                {"date":"2025-01-06","site":"cheek","device":"smartphone",
                 "image_path":"a.png","roi":[[0,0],[3,0],[3,3],[0,3]]},
                {"date":"2025-01-06","site":"temple","device":"smartphone",
                 "image_path":"t.png"}]}]
        }"#;
        let path = dir.path().join("manifest.json");
        write(&path, manifest);
        let err = load_manifest(&path).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("temple")),
            "{err}"
        );
    }

    #[test]
    fn card_method_requires_card_corners() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("card_layout.json"), layout_json());
        tiny_png(&dir.path().join("a.png"));
        let manifest = r#"{
            "trial_id": "t1",
            "card_layout_path": "card_layout.json",
            "config": {"methods": ["card"]},
            "volunteers": [{"id":"V01","reference_session":0,"sessions":[
                {"date":"2025-01-06","site":"cheek","device":"smartphone",
                 "image_path":"a.png","roi":[[0,0],[3,0],[3,3],[0,3]]}]}]
        }"#;
        let path = dir.path().join("manifest.json");
        write(&path, manifest);
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("card_corners")));
    }

    #[test]
    fn antera_csv_rows_merge_into_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = minimal_manifest(dir.path());
        // Rewrite the manifest to reference a sidecar CSV.
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        let text = text.replace(
            "\"card_layout_path\": \"card_layout.json\",",
            "\"card_layout_path\": \"card_layout.json\",\n\"antera_csv\": \"antera.csv\",",
        );
        write(&manifest_path, &text);
        write(
            &dir.path().join("antera.csv"),
            "volunteer_id,date,colour_l,colour_a,colour_b,wrinkle_overall_size,wrinkle_depth,wrinkle_max_depth\n\
             V01,2025-01-06,61.5,13.0,15.5,0.41,0.12,0.53\n\
             V01,2025-02-02,60.9,13.2,14.1,0.44,0.13,0.55\n",
        );
        let m = load_manifest(&manifest_path).unwrap();
        let antera: Vec<_> = m.volunteers[0].antera_sessions().collect();
        assert_eq!(antera.len(), 2);
        assert_eq!(antera[0].parameters["colour_b"], 15.5);
        assert_eq!(antera[1].date, NaiveDate::from_ymd_opt(2025, 2, 2).unwrap());
    }

    #[test]
    fn unknown_volunteer_in_antera_csv_fails() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = minimal_manifest(dir.path());
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        let text = text.replace(
            "\"card_layout_path\": \"card_layout.json\",",
            "\"card_layout_path\": \"card_layout.json\",\n\"antera_csv\": \"antera.csv\",",
        );
        write(&manifest_path, &text);
        write(
            &dir.path().join("antera.csv"),
            "volunteer_id,date,colour_l,colour_a,colour_b,wrinkle_overall_size,wrinkle_depth,wrinkle_max_depth\n\
             V99,2025-01-06,61.5,13.0,15.5,0.41,0.12,0.53\n",
        );
        let err = load_manifest(&manifest_path).unwrap_err();
        assert!(matches!(err, Error::Csv { ref message, .. } if message.contains("V99")));
    }

    #[test]
    fn parse_errors_carry_location_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        write(&path, "{\n  \"trial_id\": 5\n}");
        let err = load_manifest(&path).unwrap_err();
        match err {
            Error::Parse { message, .. } => {
                assert!(message.contains("line"), "{message}")
            }
            other => panic!("expected parse error, got {other}"),
        }
    }
}
