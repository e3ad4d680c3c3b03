//! Synthetic-trial generator: writes a complete, self-consistent trial
//! directory (manifest, card layout, device CSV, smartphone images)
//! with known ground truth. Half the volunteers get a declining CIELAB
//! b channel and a growing wrinkle-line density; the other half stay
//! nearly flat, so end-to-end tests can assert detection both ways.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use skintrack_core::color::{lab_to_rgb_f64, LabColour};
use skintrack_core::image::{save_image, ImageRgb};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub volunteers: usize,
    pub sessions: usize,
    pub size: u32,
}

impl FixtureSpec {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            seed: 7,
            volunteers: 12,
            sessions: 10,
            size: 512,
        }
    }
}

/// Volunteers in the first half of the roster receive the injected
/// drift; the rest are controls.
pub fn is_drifted(index: usize, volunteers: usize) -> bool {
    index < volunteers / 2
}

pub fn volunteer_id(index: usize) -> String {
    format!("V{:02}", index + 1)
}

/// Total injected decline of the skin b channel over the whole trial.
pub const DRIFTED_B_DECLINE: f64 = 6.0;
/// Residual decline applied to control volunteers.
pub const CONTROL_B_DECLINE: f64 = 0.25;

const CARD_ROWS: usize = 2;
const CARD_COLS: usize = 4;
const KEY_PATCH: (usize, usize) = (1, 3);
const CARD_MARGIN: f64 = 0.5;

/// Printed patch colours, row-major; the key patch is a vivid purple.
const CARD_REFERENCE: [[f64; 3]; 8] = [
    [52.0, 48.0, 26.0],
    [66.0, -34.0, 36.0],
    [54.0, 6.0, -42.0],
    [80.0, 4.0, 64.0],
    [92.0, 1.0, 3.0],
    [52.0, 1.0, 1.0],
    [38.0, 20.0, -26.0],
    [42.0, 44.0, -38.0],
];

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 1, 6).unwrap()
}

fn session_date(index: usize) -> NaiveDate {
    start_date() + chrono::Days::new(3 * index as u64)
}

/// Geometry derived from the image side length.
struct Geometry {
    patch: u32,
    card_x0: u32,
    card_y0: u32,
    cheek_roi: [u32; 2],
    temple_roi: [u32; 2],
    line_x: [u32; 2],
    line_band: [u32; 2],
}

impl Geometry {
    fn new(size: u32) -> Self {
        let patch = size / 18;
        let margin = size / 32;
        Self {
            patch,
            card_x0: margin,
            card_y0: margin,
            cheek_roi: [size * 5 / 16, size * 7 / 8],
            temple_roi: [size / 4, size * 3 / 4],
            line_x: [size / 3, size * 2 / 3],
            line_band: [size / 4 + size / 16, size * 3 / 4 - size / 16],
        }
    }

    fn card_corners(&self) -> [[u32; 2]; 4] {
        let x1 = self.card_x0 + self.patch * CARD_COLS as u32;
        let y1 = self.card_y0 + self.patch * CARD_ROWS as u32;
        [
            [self.card_x0, self.card_y0],
            [x1, self.card_y0],
            [x1, y1],
            [self.card_x0, y1],
        ]
    }
}

/// Smooth value-noise field in [0, 1], bilinear over a random lattice.
fn noise_field(width: u32, height: u32, cell: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
    let lattice = |gx: u32, gy: u32| grid[(gy * gw + gx) as usize];
    let mut out = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (gx, gy) = (fx.floor() as u32, fy.floor() as u32);
            let (ax, ay) = (fx - gx as f64, fy - gy as f64);
            let top = lattice(gx, gy) * (1.0 - ax) + lattice(gx + 1, gy) * ax;
            let bot = lattice(gx, gy + 1) * (1.0 - ax) + lattice(gx + 1, gy + 1) * ax;
            out.push(top * (1.0 - ay) + bot * ay);
        }
    }
    out
}

/// Continuous base plus offset, rounded once. Keeping the base unquantized
/// lets zero-mean noise act as dither, so region means converge on the
/// base instead of inheriting its rounding error.
fn add_noise(base: [f64; 3], offset: f64) -> [u8; 3] {
    base.map(|c| (c + offset).round().clamp(0.0, 255.0) as u8)
}

/// Skin-toned canvas: one base colour modulated by coarse blotches and
/// fine grain, both zero-mean so the region mean stays on the base.
fn textured_canvas(
    size: u32,
    base: [f64; 3],
    coarse_amp: f64,
    fine_amp: f64,
    rng: &mut ChaCha8Rng,
) -> ImageRgb {
    let coarse = noise_field(size, size, 16, rng);
    let mut img = ImageRgb::new(size, size);
    for (idx, p) in img.pixels_mut().enumerate() {
        let offset = (coarse[idx] - 0.5) * 2.0 * coarse_amp + rng.gen_range(-fine_amp..=fine_amp);
        p.copy_from_slice(&add_noise(base, offset));
    }
    img
}

/// Paints the colour card with a light dither so patch means survive
/// RGB quantization.
fn paint_card(img: &mut ImageRgb, geo: &Geometry, cast: LabColour, rng: &mut ChaCha8Rng) {
    for row in 0..CARD_ROWS {
        for col in 0..CARD_COLS {
            let [l, a, b] = CARD_REFERENCE[row * CARD_COLS + col];
            let lab = LabColour::new(l + cast.l, a + cast.a, b + cast.b).clamped();
            let base = lab_to_rgb_f64(lab);
            let x0 = geo.card_x0 + col as u32 * geo.patch;
            let y0 = geo.card_y0 + row as u32 * geo.patch;
            for y in y0..y0 + geo.patch {
                for x in x0..x0 + geo.patch {
                    let offset = rng.gen_range(-2.0..=2.0);
                    img.set(x, y, add_noise(base, offset));
                }
            }
        }
    }
}

fn draw_wrinkle_lines(img: &mut ImageRgb, geo: &Geometry, positions: &[u32], count: usize) {
    for &y in positions.iter().take(count) {
        for yy in y..y + 2 {
            for x in geo.line_x[0]..geo.line_x[1] {
                let darker = img.get(x, yy).map(|c| (c as f64 * 0.5) as u8);
                img.set(x, yy, darker);
            }
        }
    }
}

fn bilinear_rgb(img: &ImageRgb, x: f64, y: f64) -> [u8; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ax, ay) = (x - x0, y - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let clamp = |v: i64, hi: u32| v.clamp(0, hi as i64 - 1) as u32;
    let sample =
        |dx: i64, dy: i64| img.get(clamp(ix + dx, img.width()), clamp(iy + dy, img.height()));
    let mut out = [0u8; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let top = sample(0, 0)[c] as f64 * (1.0 - ax) + sample(1, 0)[c] as f64 * ax;
        let bot = sample(0, 1)[c] as f64 * (1.0 - ax) + sample(1, 1)[c] as f64 * ax;
        *slot = (top * (1.0 - ay) + bot * ay).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// output(p) = src(T⁻¹ p) for the similarity about the image centre;
/// every session image passes through this resampling exactly once so
/// sharpness stays comparable across the series.
fn warp_similarity(src: &ImageRgb, angle: f64, scale: f64, tx: f64, ty: f64) -> ImageRgb {
    let (w, h) = (src.width(), src.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let inv_scale = 1.0 / scale;
    let (cos_a, sin_a) = ((-angle).cos(), (-angle).sin());
    let mut out = ImageRgb::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let sx = inv_scale * (cos_a * dx - sin_a * dy) + cx;
            let sy = inv_scale * (sin_a * dx + cos_a * dy) + cy;
            out.set(x, y, bilinear_rgb(src, sx, sy));
        }
    }
    out
}

struct VolunteerTruth {
    id: String,
    skin: LabColour,
    b_decline: f64,
    drifted: bool,
}

fn volunteer_truth(index: usize, volunteers: usize) -> VolunteerTruth {
    let drifted = is_drifted(index, volunteers);
    VolunteerTruth {
        id: volunteer_id(index),
        skin: LabColour::new(
            58.0 + (index % 5) as f64 * 2.5,
            9.0 + (index % 4) as f64 * 1.8,
            14.0 + (index % 6) as f64 * 1.2,
        ),
        b_decline: if drifted {
            DRIFTED_B_DECLINE
        } else {
            CONTROL_B_DECLINE
        },
        drifted,
    }
}

/// True skin colour of a volunteer at one session, before any cast.
fn skin_at_session(truth: &VolunteerTruth, session: usize, sessions: usize) -> LabColour {
    let progress = session as f64 / (sessions - 1).max(1) as f64;
    LabColour::new(
        truth.skin.l,
        truth.skin.a,
        truth.skin.b - truth.b_decline * progress,
    )
}

fn rect_json(r: [u32; 2]) -> serde_json::Value {
    json!([[r[0], r[0]], [r[1], r[0]], [r[1], r[1]], [r[0], r[1]]])
}

/// Generates the full trial under `spec.out_dir` and returns the path
/// of the manifest document.
pub fn generate(spec: &FixtureSpec) -> Result<PathBuf> {
    if spec.volunteers < 2 || spec.sessions < 2 {
        return Err(Error::Validation(
            "fixture needs at least 2 volunteers and 2 sessions".into(),
        ));
    }
    if spec.size < 128 {
        return Err(Error::Validation(
            "fixture image side must be at least 128".into(),
        ));
    }
    let geo = Geometry::new(spec.size);
    let images_dir = spec.out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut antera_csv = String::from(
        "volunteer_id,date,colour_l,colour_a,colour_b,wrinkle_overall_size,wrinkle_depth,wrinkle_max_depth\n",
    );
    let mut volunteers_json = Vec::new();

    for vi in 0..spec.volunteers {
        let truth = volunteer_truth(vi, spec.volunteers);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x9e37_79b9 + vi as u64));
        let vdir = images_dir.join(&truth.id);
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;

        // Reference-frame temple canvas, fixed for the whole series so
        // cross-session features correspond.
        // High-contrast blotches so feature detection has plenty to
        // anchor on; the fine grain stays small relative to the line
        // darkening so the wrinkle ramp dominates the edge budget.
        let temple_base = lab_to_rgb_f64(LabColour::new(
            truth.skin.l,
            truth.skin.a + 3.0,
            truth.skin.b + 2.0,
        ));
        let temple_canvas = textured_canvas(spec.size, temple_base, 50.0, 10.0, &mut rng);
        let max_lines = 4 + spec.sessions - 1;
        let band = geo.line_band;
        let line_positions: Vec<u32> = (0..max_lines)
            .map(|i| {
                let step = (band[1] - band[0]) / max_lines as u32;
                band[0] + i as u32 * step + rng.gen_range(0..step.max(4) / 2)
            })
            .collect();

        let mut sessions_json = Vec::new();
        for si in 0..spec.sessions {
            let date = session_date(si);
            let cast = LabColour::new(
                rng.gen_range(-3.0..=3.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.5..=1.5),
            );
            let skin = skin_at_session(&truth, si, spec.sessions);
            let skin_with_cast =
                LabColour::new(skin.l + cast.l, skin.a + cast.a, skin.b + cast.b).clamped();

            // Cheek: fresh grain each visit, card painted under the
            // same cast as the skin.
            let cheek_base = lab_to_rgb_f64(skin_with_cast);
            let mut cheek = textured_canvas(spec.size, cheek_base, 6.0, 8.0, &mut rng);
            paint_card(&mut cheek, &geo, cast, &mut rng);
            let cheek_name = format!("{date}_cheek.png");
            save_image(&vdir.join(&cheek_name), &cheek)?;

            // Temple: reference-frame content plus the session's line
            // count, then one similarity warp.
            let mut temple = temple_canvas.clone();
            let lines = if truth.drifted { 4 + si } else { 4 };
            draw_wrinkle_lines(&mut temple, &geo, &line_positions, lines);
            let (angle, scale, tx, ty) = if si == 0 {
                (0.0, 1.0, 0.5, 0.5)
            } else {
                (
                    rng.gen_range(-0.05..=0.05),
                    rng.gen_range(0.98..=1.02),
                    rng.gen_range(-6.0..=6.0),
                    rng.gen_range(-6.0..=6.0),
                )
            };
            let temple = warp_similarity(&temple, angle, scale, tx, ty);
            let temple_name = format!("{date}_temple.png");
            save_image(&vdir.join(&temple_name), &temple)?;

            let mut cheek_json = json!({
                "date": date.to_string(),
                "site": "cheek",
                "device": "smartphone",
                "image_path": format!("images/{}/{cheek_name}", truth.id),
                "card_corners": geo.card_corners(),
            });
            let mut temple_json = json!({
                "date": date.to_string(),
                "site": "temple",
                "device": "smartphone",
                "image_path": format!("images/{}/{temple_name}", truth.id),
            });
            if si == 0 {
                cheek_json["roi"] = rect_json(geo.cheek_roi);
                temple_json["roi"] = rect_json(geo.temple_roi);
            }
            sessions_json.push(cheek_json);
            sessions_json.push(temple_json);

            // Device readings at the first and last visit only.
            if si == 0 || si == spec.sessions - 1 {
                let wrinkle_scale = if truth.drifted && si > 0 { 0.88 } else { 1.0 };
                let row = format!(
                    "{},{},{:.3},{:.3},{:.3},{:.4},{:.4},{:.4}\n",
                    truth.id,
                    date,
                    skin.l + rng.gen_range(-0.3..=0.3),
                    skin.a + rng.gen_range(-0.3..=0.3),
                    skin.b + rng.gen_range(-0.3..=0.3),
                    (0.45 + rng.gen_range(-0.02..=0.02)) * wrinkle_scale,
                    (0.12 + rng.gen_range(-0.005..=0.005)) * wrinkle_scale,
                    (0.55 + rng.gen_range(-0.02..=0.02)) * wrinkle_scale,
                );
                antera_csv.push_str(&row);
            }
        }

        volunteers_json.push(json!({
            "id": truth.id,
            "reference_session": 0,
            "sessions": sessions_json,
        }));
    }

    let layout = json!({
        "rows": CARD_ROWS,
        "cols": CARD_COLS,
        "key_patch": [KEY_PATCH.0, KEY_PATCH.1],
        "margin": CARD_MARGIN,
        "reference": CARD_REFERENCE,
    });
    let manifest = json!({
        "trial_id": format!("synthetic-{:04x}", spec.seed),
        "card_layout_path": "card_layout.json",
        "antera_csv": "antera.csv",
        "config": {
            "methods": ["original", "histeq", "clahe", "card"],
            "seed": 7,
            "alpha": 0.05,
            "max_keypoints": 500,
        },
        "volunteers": volunteers_json,
    });

    let write = |name: &str, text: String| -> Result<()> {
        let path = spec.out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write(
        "card_layout.json",
        serde_json::to_string_pretty(&layout).expect("layout serializes"),
    )?;
    write("antera.csv", antera_csv)?;
    let manifest_path = spec.out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
