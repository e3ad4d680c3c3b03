//! Command-line entry point: trial validation and runs, single-image
//! normalization and wrinkle measurement, paired statistics over a CSV,
//! and the synthetic-trial generator.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use skintrack::error::{Error, Result};
use skintrack::fixture;
use skintrack::manifest::{load_card_layout, load_manifest, load_manifest_with, ConfigOverrides};
use skintrack::pipeline::{run_pipeline, Intermediates};
use skintrack::report::{emit_csv, sig6};
use skintrack::svg::emit_svg_plots;
use skintrack_core::card::CardAnnotation;
use skintrack_core::image::{load_image, save_image, to_grayscale, Roi};
use skintrack_core::metrics::{apply_normalization, wrinkle_ratio_in_roi};
use skintrack_core::normalize::{ClaheConfig, NormalizationMethod};
use skintrack_core::stats;

#[derive(Parser)]
#[command(
    name = "skintrack",
    version,
    about = "Smartphone-image skin colour and wrinkle tracking for cosmetic trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a trial manifest and check every invariant.
    Validate {
        /// Path of the manifest JSON document.
        manifest: PathBuf,
    },
    /// Process a whole trial and write CSV and SVG reports.
    Run {
        /// Path of the manifest JSON document.
        manifest: PathBuf,
        /// Output directory for reports.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated normalization methods
        /// (original, histeq, clahe, card); overrides the manifest.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Alignment RANSAC seed; overrides the manifest.
        #[arg(long)]
        seed: Option<u64>,
        /// Significance level; overrides the manifest.
        #[arg(long)]
        alpha: Option<f64>,
        /// Persist normalized and edge images under <out>/intermediates.
        #[arg(long)]
        keep_intermediates: bool,
    },
    /// Normalize one image and write the result.
    Normalize {
        /// Input image (PNG or JPEG).
        image: PathBuf,
        /// Normalization method: original, histeq, clahe or card.
        #[arg(long)]
        method: String,
        /// Card-grid corners as x1,y1,x2,y2,x3,y3,x4,y4
        /// (top-left, top-right, bottom-right, bottom-left).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        card_corners: Option<Vec<f64>>,
        /// Card layout JSON document (required by the card method).
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Output path; defaults to <input stem>_<method>.png.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the wrinkle ratio inside a polygon.
    Wrinkle {
        /// Input image (PNG or JPEG).
        image: PathBuf,
        /// Polygon vertices as x1,y1,x2,y2,... (at least three points).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        roi: Vec<f64>,
    },
    /// Paired comparison over a two-column CSV (baseline, final).
    Stats {
        /// CSV file with a header row and two numeric columns.
        csv: PathBuf,
        /// Significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Generate a synthetic trial with known drift for tests and demos.
    GenFixture {
        /// Directory to generate the trial into.
        #[arg(long)]
        out: PathBuf,
        /// Seed for all synthetic content.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        volunteers: usize,
        #[arg(long, default_value_t = 10)]
        sessions: usize,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 512)]
        size: u32,
    },
}

fn parse_points(values: &[f64], what: &str) -> Result<Vec<(f64, f64)>> {
    if !values.len().is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "{what}: odd number of coordinates ({})",
            values.len()
        )));
    }
    Ok(values.chunks_exact(2).map(|c| (c[0], c[1])).collect())
}

fn parse_methods(slugs: &[String]) -> Result<Vec<NormalizationMethod>> {
    let mut methods = Vec::new();
    for slug in slugs {
        let m = NormalizationMethod::from_slug(slug).ok_or_else(|| {
            Error::Validation(format!(
                "unknown normalization method {slug:?} (expected one of original, histeq, clahe, card)"
            ))
        })?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

fn cmd_validate(manifest: &Path) -> Result<()> {
    let m = load_manifest(manifest)?;
    let sessions: usize = m.volunteers.iter().map(|v| v.sessions.len()).sum();
    println!(
        "manifest ok: trial {} with {} volunteers, {} sessions",
        m.trial_id,
        m.volunteers.len(),
        sessions
    );
    Ok(())
}

fn cmd_run(
    manifest_path: &Path,
    out: &Path,
    methods: Option<Vec<String>>,
    seed: Option<u64>,
    alpha: Option<f64>,
    keep_intermediates: bool,
) -> Result<()> {
    let overrides = ConfigOverrides {
        methods: methods.as_deref().map(parse_methods).transpose()?,
        seed,
        alpha,
    };
    let manifest = load_manifest_with(manifest_path, &overrides)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let inter = keep_intermediates.then(|| Intermediates {
        dir: out.join("intermediates"),
    });
    let bundle = run_pipeline(&manifest, inter.as_ref())?;
    emit_csv(&bundle, out)?;
    emit_svg_plots(&bundle, out)?;
    for s in &bundle.skipped {
        eprintln!(
            "warning: skipped {} {} {} at stage {}: {}",
            s.volunteer_id,
            s.site.label(),
            s.date,
            s.stage,
            s.error
        );
    }
    println!(
        "trial {}: {} series, {} summary rows, {} skipped sessions -> {}",
        bundle.trial_id,
        bundle.series.len(),
        bundle.summary.len(),
        bundle.skipped.len(),
        out.display()
    );
    Ok(())
}

fn cmd_normalize(
    image: &Path,
    method: &str,
    card_corners: Option<Vec<f64>>,
    layout: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let method = NormalizationMethod::from_slug(method).ok_or_else(|| {
        Error::Validation(format!(
            "unknown normalization method {method:?} (expected one of original, histeq, clahe, card)"
        ))
    })?;
    let img = load_image(image)?;
    let card_ctx = if method == NormalizationMethod::ColourCard {
        let corners = card_corners
            .ok_or_else(|| Error::Validation("the card method needs --card-corners".into()))?;
        let layout_path =
            layout.ok_or_else(|| Error::Validation("the card method needs --layout".into()))?;
        let pts = parse_points(&corners, "--card-corners")?;
        let pts: [(f64, f64); 4] = pts
            .try_into()
            .map_err(|_| Error::Validation("--card-corners needs exactly four points".into()))?;
        let annotation = CardAnnotation::new(pts)
            .map_err(|e| Error::Validation(format!("--card-corners: {e}")))?;
        Some((annotation, load_card_layout(&layout_path)?))
    } else {
        None
    };
    let normalized = apply_normalization(
        &img,
        method,
        &ClaheConfig::default(),
        card_ctx.as_ref().map(|(a, l)| (a, l)),
    )?;
    let out_path = out.unwrap_or_else(|| {
        let stem = image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        image.with_file_name(format!("{stem}_{}.png", method.slug()))
    });
    save_image(&out_path, &normalized)?;
    println!("{}", out_path.display());
    Ok(())
}

fn cmd_wrinkle(image: &Path, roi: &[f64]) -> Result<()> {
    let pts = parse_points(roi, "--roi")?;
    let roi = Roi::new(pts).map_err(|e| Error::Validation(format!("--roi: {e}")))?;
    let gray = to_grayscale(&load_image(image)?);
    let ratio = wrinkle_ratio_in_roi(&gray, &roi)?;
    println!("{}", sig6(ratio));
    Ok(())
}

fn cmd_stats(csv_path: &Path, alpha: f64) -> Result<()> {
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::Csv {
        path: csv_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut baseline = Vec::new();
    let mut last = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let fail = |message: String| Error::Csv {
            path: csv_path.to_path_buf(),
            message: format!("row {}: {message}", line + 2),
        };
        let row = row.map_err(|e| Error::Csv {
            path: csv_path.to_path_buf(),
            message: e.to_string(),
        })?;
        if row.len() < 2 {
            return Err(fail(format!("{} columns, expected 2", row.len())));
        }
        let parse = |cell: &str| {
            cell.trim()
                .parse::<f64>()
                .map_err(|e| fail(format!("{cell:?}: {e}")))
        };
        baseline.push(parse(&row[0])?);
        last.push(parse(&row[1])?);
    }
    if baseline.is_empty() {
        return Err(Error::EmptyData(format!(
            "{} has no data rows",
            csv_path.display()
        )));
    }
    let result = stats::paired_compare(&baseline, &last, alpha)?;
    println!("test: {}", result.test_kind.label());
    println!("statistic: {}", sig6(result.statistic));
    println!("p value: {}", sig6(result.p_value));
    println!("significant: {}", result.significant);
    match result.normality_p {
        Some(p) => println!("normality p: {}", sig6(p)),
        None => println!("normality p: n/a"),
    }
    if let Ok(pv) = stats::percent_variation(&baseline, &last) {
        println!("percent variation: {}", sig6(pv));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { manifest } => cmd_validate(&manifest),
        Command::Run {
            manifest,
            out,
            methods,
            seed,
            alpha,
            keep_intermediates,
        } => cmd_run(&manifest, &out, methods, seed, alpha, keep_intermediates),
        Command::Normalize {
            image,
            method,
            card_corners,
            layout,
            out,
        } => cmd_normalize(&image, &method, card_corners, layout, out),
        Command::Wrinkle { image, roi } => cmd_wrinkle(&image, &roi),
        Command::Stats { csv, alpha } => cmd_stats(&csv, alpha),
        Command::GenFixture {
            out,
            seed,
            volunteers,
            sessions,
            size,
        } => {
            let manifest = fixture::generate(&fixture::FixtureSpec {
                out_dir: out,
                seed,
                volunteers,
                sessions,
                size,
            })?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
