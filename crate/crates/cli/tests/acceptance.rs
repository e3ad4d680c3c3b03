//! Acceptance checks for the whole toolkit, one test per criterion:
//! colour-space fidelity, normalization behaviour, alignment recovery,
//! wrinkle metrics, statistics oracles, the synthetic end-to-end trial
//! and fault tolerance. Each test prints a single PASS line; failures
//! panic with the offending measurement.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skintrack_core::align::{
    compute_descriptors, detect_keypoints, estimate_transform, match_knn, Keypoint, MatchPair,
    TransformKind,
};
use skintrack_core::card::{
    locate_patch_region, measure_patch, normalize_by_card, CardAnnotation, CardLayout,
};
use skintrack_core::color::{
    lab_to_rgb_f64, lab_to_rgb_px, rgb_to_lab_px, rgb_to_yuv, yuv_to_rgb, LabColour,
};
use skintrack_core::image::{ImageGray, ImageRgb};
use skintrack_core::metrics::{laplacian, sobel_x, wrinkle_ratio};
use skintrack_core::normalize::{clahe_gray, histogram_equalize_gray, ClaheConfig};
use skintrack_core::stats::{
    paired_compare, paired_t_test, shapiro_wilk, wilcoxon_signed_rank, TestKind,
};

/// Serializes the two pipeline-heavy tests so the timing bound is not
/// distorted by a concurrently running sibling.
static PIPELINE_LOCK: Mutex<()> = Mutex::new(());

#[test]
fn criterion_1_colour_round_trips() {
    let start = Instant::now();
    let vals: Vec<u8> = (0..32u16).map(|i| (i * 8) as u8).collect();

    let mut worst_lab = 0i32;
    for &r in &vals {
        for &g in &vals {
            for &b in &vals {
                let px = [r, g, b];
                let back = lab_to_rgb_px(rgb_to_lab_px(px));
                for c in 0..3 {
                    worst_lab = worst_lab.max((back[c] as i32 - px[c] as i32).abs());
                }
            }
        }
    }
    assert!(
        worst_lab <= 1,
        "rgb->lab->rgb worst per-channel error {worst_lab} > 1"
    );

    // The YUV sweep goes through the image-level conversion the
    // pipeline uses (quantized luma, continuous chroma).
    let mut img = ImageRgb::new(256, 128);
    let mut i = 0u32;
    for &r in &vals {
        for &g in &vals {
            for &b in &vals {
                img.set(i % 256, i / 256, [r, g, b]);
                i += 1;
            }
        }
    }
    let back = yuv_to_rgb(&rgb_to_yuv(&img));
    let mut worst_yuv = 0i32;
    for (a, b) in img.pixels().zip(back.pixels()) {
        for c in 0..3 {
            worst_yuv = worst_yuv.max((a[c] as i32 - b[c] as i32).abs());
        }
    }
    assert!(
        worst_yuv <= 2,
        "rgb->yuv->rgb worst per-channel error {worst_yuv} > 2"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 10.0,
        "lattice sweep took {elapsed:.1}s, budget 10s"
    );
    println!(
        "criterion 1 (colour round trips over the 32^3 lattice): PASS \
         (lab error <= {worst_lab}, yuv error <= {worst_yuv}, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_2_normalization_properties() {
    let img = textured_gray(96, 96, 42);

    let once = histogram_equalize_gray(&img);
    let twice = histogram_equalize_gray(&once);
    let worst = once
        .as_raw()
        .iter()
        .zip(twice.as_raw())
        .map(|(a, b)| (*a as i32 - *b as i32).abs())
        .max()
        .unwrap();
    assert!(worst <= 1, "re-equalization moved a pixel by {worst} > 1");

    // The remap must be a single nondecreasing value map.
    let mut map: [Option<u8>; 256] = [None; 256];
    for (&src, &dst) in img.as_raw().iter().zip(once.as_raw()) {
        match map[src as usize] {
            None => map[src as usize] = Some(dst),
            Some(prev) => assert_eq!(prev, dst, "input {src} remapped inconsistently"),
        }
    }
    let mut last = 0u8;
    for &v in map.iter().flatten() {
        assert!(v >= last, "remap decreases: {v} after {last}");
        last = v;
    }

    let degenerate = ClaheConfig {
        tiles_x: 1,
        tiles_y: 1,
        clip_limit: Some(u32::MAX),
    };
    let clahe = clahe_gray(&img, &degenerate).unwrap();
    assert_eq!(
        clahe.as_raw(),
        once.as_raw(),
        "1x1-tile unclipped CLAHE differs from global equalization"
    );

    // Card correction fixed point: after correcting a uniformly cast
    // image, the key patch must re-measure at its printed reference.
    let reference = LabColour::new(42.0, 44.0, -38.0);
    let layout = CardLayout::new(1, 1, vec![reference], (0, 0), 0.5).unwrap();
    let ann =
        CardAnnotation::new([(16.0, 16.0), (80.0, 16.0), (80.0, 80.0), (16.0, 80.0)]).unwrap();
    let mut worst_fixed = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cast = LabColour::new(
            rng.gen_range(-4.0..=4.0),
            rng.gen_range(-2.0..=2.0),
            rng.gen_range(-2.0..=2.0),
        );
        let shifted = LabColour::new(
            reference.l + cast.l,
            reference.a + cast.a,
            reference.b + cast.b,
        );
        let base = lab_to_rgb_f64(shifted);
        let mut card = ImageRgb::new(96, 96);
        for y in 0..96 {
            for x in 0..96 {
                let noise = rng.gen_range(-2.0..=2.0);
                card.set(
                    x,
                    y,
                    base.map(|c| (c + noise).round().clamp(0.0, 255.0) as u8),
                );
            }
        }
        let corrected = normalize_by_card(&card, Some(&ann), &layout).unwrap();
        let region = locate_patch_region(&layout, &ann, 0, 0).unwrap();
        let observed = measure_patch(&corrected, &region).unwrap().lab;
        let err = (observed.l - reference.l)
            .abs()
            .max((observed.a - reference.a).abs())
            .max((observed.b - reference.b).abs());
        assert!(
            err <= 1.5,
            "seed {seed}: corrected key patch {err:.3} LAB units off"
        );
        worst_fixed = worst_fixed.max(err);
    }
    println!(
        "criterion 2 (normalization properties, card fixed point): PASS \
         (worst fixed-point error {worst_fixed:.3} LAB)"
    );
}

#[test]
fn criterion_3_alignment_recovery() {
    // Matching an image against itself must recover the identity.
    let img = textured_gray(192, 192, 5);
    let kps = detect_keypoints(&img, 500).unwrap();
    let desc = compute_descriptors(&img, &kps);
    let matches = match_knn(&desc, &desc, 0.75).unwrap();
    let t = estimate_transform(&matches, &kps, &kps, TransformKind::Similarity, 1).unwrap();
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    for (row, irow) in t.matrix.iter().zip(&identity) {
        for (c, ic) in row.iter().zip(irow) {
            assert!((c - ic).abs() <= 1e-3, "self-match matrix {:?}", t.matrix);
        }
    }

    // Known similarity with 30% planted outlier correspondences.
    let angle = 15f64.to_radians();
    let scale = 1.1;
    let (tx, ty) = (13.7, -8.2);
    let mut recovered = 0u32;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let query: Vec<Keypoint> = (0..40)
            .map(|_| Keypoint::at(rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0)))
            .collect();
        let mut train: Vec<Keypoint> = query
            .iter()
            .map(|k| {
                Keypoint::at(
                    scale * (angle.cos() * k.x - angle.sin() * k.y) + tx,
                    scale * (angle.sin() * k.x + angle.cos() * k.y) + ty,
                )
            })
            .collect();
        for slot in train.iter_mut().take(12) {
            *slot = Keypoint::at(rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0));
        }
        let matches: Vec<MatchPair> = (0..40)
            .map(|i| MatchPair {
                query_idx: i,
                train_idx: i,
                distance: 0.0,
                ratio: 0.0,
            })
            .collect();
        let est =
            estimate_transform(&matches, &query, &train, TransformKind::Similarity, trial).unwrap();
        let rot_err = (est.rotation() - angle).abs();
        let scale_err = (est.scale() - scale).abs() / scale;
        if rot_err <= 0.5f64.to_radians() && scale_err <= 0.01 {
            recovered += 1;
        }
    }
    assert!(
        recovered >= 95,
        "similarity recovered in {recovered}/100 trials, need 95"
    );
    println!(
        "criterion 3 (alignment recovery): PASS (identity exact, {recovered}/100 outlier trials)"
    );
}

#[test]
fn criterion_4_wrinkle_metrics() {
    for v in [1u8, 128, 255] {
        let flat = ImageGray::from_raw(40, 40, vec![v; 1600]);
        assert_eq!(
            wrinkle_ratio(&flat).unwrap(),
            0.0,
            "constant {v} image must score 0"
        );
    }

    // Edge density ladder: each added line must strictly raise the score.
    let rows = [30u32, 60, 90, 120, 150];
    let mut prev = -1.0f64;
    for k in 1..=5 {
        let mut img = ImageGray::from_raw(200, 200, vec![180; 40000]);
        for &row in rows.iter().take(k) {
            for y in row..row + 2 {
                for x in 20..180 {
                    img.set(x, y, 60);
                }
            }
        }
        let w = wrinkle_ratio(&img).unwrap();
        assert!(w > prev, "score {w} not above {prev} at {k} lines");
        prev = w;
    }

    // Hand-checked kernels: a 0|255 vertical step saturates the
    // horizontal gradient, a linear ramp has zero interior Laplacian.
    let mut step = ImageGray::new(8, 8);
    for y in 0..8 {
        for x in 4..8 {
            step.set(x, y, 255);
        }
    }
    let gx = sobel_x(&step);
    assert_eq!(gx.get(3, 4), 255);
    assert_eq!(gx.get(4, 3), 255);
    assert_eq!(gx.get(1, 4), 0);
    assert_eq!(gx.get(6, 4), 0);

    let mut ramp = ImageGray::new(16, 16);
    for y in 0..16 {
        for x in 0..16 {
            ramp.set(x, y, (10 + 7 * x) as u8);
        }
    }
    let lap = laplacian(&ramp);
    for y in 1..15 {
        for x in 1..15 {
            assert_eq!(lap.get(x, y), 0, "ramp Laplacian nonzero at ({x}, {y})");
        }
    }
    println!("criterion 4 (wrinkle metrics): PASS (zero on flats, strict ladder, exact kernels)");
}

#[test]
fn criterion_5_statistics_oracles() {
    let zeros = [0.0; 3];
    let d123 = [1.0, 2.0, 3.0];

    let (t, p) = paired_t_test(&zeros, &d123).unwrap();
    assert!((t - 3.4641).abs() < 1e-3, "t = {t}");
    assert!((p - 0.0742).abs() < 1e-3, "p = {p}");

    let (w, p) = wilcoxon_signed_rank(&zeros, &d123).unwrap();
    assert_eq!(w, 6.0, "W+ = {w}");
    assert!((p - 0.25).abs() < 1e-12, "exact p = {p}");

    // The exact signed-rank p must agree with full enumeration for
    // every n up to 10 and several sign patterns.
    for n in 3usize..=10 {
        for pattern in 0..3u32 {
            let diffs: Vec<f64> = (0..n)
                .map(|i| {
                    let magnitude = (i + 1) as f64 * 0.37;
                    let negative = match pattern {
                        0 => false,
                        1 => i % 2 == 1,
                        _ => i < n / 3,
                    };
                    if negative {
                        -magnitude
                    } else {
                        magnitude
                    }
                })
                .collect();
            let before = vec![0.0; n];
            let (w_obs, p_exact) = wilcoxon_signed_rank(&before, &diffs).unwrap();
            let w_obs = w_obs.round() as u64;
            let (mut le, mut ge) = (0u64, 0u64);
            for mask in 0..(1u64 << n) {
                let w_mask: u64 = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| (i + 1) as u64)
                    .sum();
                if w_mask <= w_obs {
                    le += 1;
                }
                if w_mask >= w_obs {
                    ge += 1;
                }
            }
            let p_brute = (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0);
            assert!(
                (p_exact - p_brute).abs() < 1e-12,
                "n={n} pattern={pattern}: exact {p_exact} vs enumeration {p_brute}"
            );
        }
    }

    let (w, _) = shapiro_wilk(&[-1.0, 0.0, 1.0]).unwrap();
    assert!((w - 1.0).abs() < 1e-9, "symmetric triple W = {w}");
    let strengths = [
        148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0, 236.0,
    ];
    let (w, p) = shapiro_wilk(&strengths).unwrap();
    assert!((w - 0.7888).abs() < 1e-3, "published-example W = {w}");
    assert!((p - 0.0067).abs() < 1e-3, "published-example p = {p}");

    // Decision shape at alpha 0.05: p near 0.010 flags, p near 0.067
    // does not. Both difference sets are arithmetic, so the normality
    // gate routes them to the paired t-test.
    let significant = paired_compare(&zeros, &[4.73011, 5.73011, 6.73011], 0.05).unwrap();
    assert_eq!(significant.test_kind, TestKind::PairedT);
    assert!(
        (significant.p_value - 0.010).abs() < 5e-4,
        "p = {}",
        significant.p_value
    );
    assert!(significant.significant);
    let negative = paired_compare(&zeros, &[1.117, 2.117, 3.117], 0.05).unwrap();
    assert_eq!(negative.test_kind, TestKind::PairedT);
    assert!(
        (negative.p_value - 0.067).abs() < 5e-4,
        "p = {}",
        negative.p_value
    );
    assert!(!negative.significant);

    println!("criterion 5 (statistics oracles): PASS (t/Wilcoxon/Shapiro-Wilk oracles, decisions at alpha 0.05)");
}

#[test]
fn criterion_6_synthetic_trial_end_to_end() {
    let _guard = PIPELINE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture");
    run_cli(&[
        "gen-fixture",
        "--out",
        fixture.to_str().unwrap(),
        "--seed",
        "7",
        "--volunteers",
        "12",
        "--sessions",
        "10",
        "--size",
        "512",
    ]);
    let manifest = fixture.join("manifest.json");
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");

    let started = Instant::now();
    run_cli(&[
        "run",
        manifest.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < 60.0,
        "pipeline run took {elapsed:.1}s, budget 60s"
    );
    run_cli(&[
        "run",
        manifest.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);

    // Drift direction and magnitude per volunteer: the first half of
    // the roster received the injected decline.
    for vi in 1..=12u32 {
        let vid = format!("V{vi:02}");
        let drifted = vi <= 6;
        for method in ["original", "histeq", "clahe", "card"] {
            let pts = read_series(&out1, &format!("{vid}__colour_b__{method}"));
            assert_eq!(pts.len(), 10, "{vid} {method} series incomplete");
            let delta = pts.last().unwrap().1 - pts.first().unwrap().1;
            if drifted {
                assert!(
                    delta < 0.0,
                    "{vid} {method}: drift direction missed (delta {delta:+.3})"
                );
            }
        }
        let card: Vec<f64> = read_series(&out1, &format!("{vid}__colour_b__card"))
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        let delta = card.last().unwrap() - card.first().unwrap();
        let range = card.iter().cloned().fold(f64::MIN, f64::max)
            - card.iter().cloned().fold(f64::MAX, f64::min);
        if drifted {
            assert!(
                delta < -3.0,
                "{vid}: corrected drift {delta:+.3}, expected below -3"
            );
        } else {
            assert!(
                range < 1.0,
                "{vid}: control series wobbles {range:.3}, expected below 1"
            );
        }

        let wrinkle: Vec<f64> = read_series(&out1, &format!("{vid}__wrinkle_ratio"))
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        assert_eq!(wrinkle.len(), 10, "{vid} wrinkle series incomplete");
        let ratio = wrinkle.last().unwrap() / wrinkle.first().unwrap();
        let mean = wrinkle.iter().sum::<f64>() / wrinkle.len() as f64;
        let rel_range = (wrinkle.iter().cloned().fold(f64::MIN, f64::max)
            - wrinkle.iter().cloned().fold(f64::MAX, f64::min))
            / mean;
        if drifted {
            assert!(
                ratio >= 1.4,
                "{vid}: wrinkle ramp {ratio:.3}, expected >= 1.4"
            );
        } else {
            assert!(
                rel_range < 0.2,
                "{vid}: control wrinkle wobbles {rel_range:.3}"
            );
        }
    }

    // Trial-level decisions: the drifted parameter flags under every
    // route, the stable channels stay quiet.
    let summary = read_summary(&out1);
    for param in [
        "antera_colour_b",
        "colour_b_card",
        "colour_b_original",
        "wrinkle_ratio",
    ] {
        assert!(summary[param], "{param} not significant");
    }
    for param in [
        "colour_l_card",
        "colour_a_card",
        "antera_colour_l",
        "antera_colour_a",
    ] {
        assert!(!summary[param], "{param} unexpectedly significant");
    }

    let skipped = std::fs::read_to_string(out1.join("skipped.csv")).unwrap();
    assert_eq!(
        skipped.lines().count(),
        1,
        "unexpected skipped sessions:\n{skipped}"
    );

    let tree1 = snapshot_tree(&out1);
    let tree2 = snapshot_tree(&out2);
    assert_eq!(
        tree1.keys().collect::<Vec<_>>(),
        tree2.keys().collect::<Vec<_>>(),
        "the two runs produced different file sets"
    );
    for (path, bytes) in &tree1 {
        assert_eq!(
            bytes,
            &tree2[path],
            "{} differs between identical runs",
            path.display()
        );
    }

    println!(
        "criterion 6 (synthetic trial end to end): PASS \
         (drift 6/6, controls 6/6 flat, run {elapsed:.1}s, {} files byte-identical)",
        tree1.len()
    );
}

#[test]
fn criterion_7_fault_tolerance() {
    let _guard = PIPELINE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture");
    run_cli(&[
        "gen-fixture",
        "--out",
        fixture.to_str().unwrap(),
        "--seed",
        "11",
        "--volunteers",
        "8",
        "--sessions",
        "6",
        "--size",
        "512",
    ]);
    let manifest = fixture.join("manifest.json");
    let out_base = dir.path().join("base");
    let out_damaged = dir.path().join("damaged");
    run_cli(&[
        "run",
        manifest.to_str().unwrap(),
        "--out",
        out_base.to_str().unwrap(),
    ]);

    // Corrupt one mid-trial cheek image; first and last sessions stay
    // intact, so every first/last statistic must be unaffected.
    let victim = fixture.join("images/V02/2025-01-12_cheek.png");
    assert!(
        victim.exists(),
        "expected fixture image at {}",
        victim.display()
    );
    std::fs::write(&victim, b"not a png any more").unwrap();

    let output = run_cli(&[
        "run",
        manifest.to_str().unwrap(),
        "--out",
        out_damaged.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("V02"),
        "no warning about the corrupt session:\n{stderr}"
    );

    let skipped = std::fs::read_to_string(out_damaged.join("skipped.csv")).unwrap();
    let rows: Vec<&str> = skipped.lines().skip(1).collect();
    assert_eq!(
        rows.len(),
        1,
        "expected exactly one skipped session:\n{skipped}"
    );
    assert!(
        rows[0].starts_with("V02,2025-01-12,cheek,load,"),
        "unexpected skip record: {}",
        rows[0]
    );

    let base = snapshot_tree(&out_base);
    let damaged = snapshot_tree(&out_damaged);
    assert_eq!(
        base.keys().collect::<Vec<_>>(),
        damaged.keys().collect::<Vec<_>>(),
        "file sets diverged"
    );
    let mut affected = 0u32;
    for (path, bytes) in &base {
        let name = path.to_string_lossy();
        let expect_change = name.ends_with("skipped.csv")
            || name.contains("V02__colour")
            || name.ends_with("colour_V02.svg");
        if expect_change {
            affected += 1;
            assert_ne!(
                bytes, &damaged[path],
                "{name} should reflect the lost session"
            );
        } else {
            assert_eq!(bytes, &damaged[path], "{name} changed although unrelated");
        }
    }
    // skipped.csv + 12 colour series (3 channels x 4 methods) + 1 chart.
    assert_eq!(affected, 14, "unexpected change footprint");

    // The damaged colour series must drop exactly the corrupted date
    // and keep every other measurement bit-identical.
    for channel in ["l", "a", "b"] {
        for method in ["original", "histeq", "clahe", "card"] {
            let stem = format!("V02__colour_{channel}__{method}");
            let full = read_series(&out_base, &stem);
            let partial = read_series(&out_damaged, &stem);
            let expected: Vec<(String, f64)> = full
                .into_iter()
                .filter(|(date, _)| date != "2025-01-12")
                .collect();
            assert_eq!(partial, expected, "{stem} diverges beyond the lost session");
        }
    }

    println!(
        "criterion 7 (fault tolerance): PASS (exit 0, one skip record, blast radius 14 files)"
    );
}

/// Runs the CLI binary, asserting success.
fn run_cli(args: &[&str]) -> Output {
    let exe = env!("CARGO_BIN_EXE_skintrack");
    let output = Command::new(exe)
        .args(args)
        .output()
        .unwrap_or_else(|e| panic!("failed to spawn {exe}: {e}"));
    assert!(
        output.status.success(),
        "`skintrack {}` failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Reads a `date,value` series written by the pipeline.
fn read_series(out_dir: &Path, stem: &str) -> Vec<(String, f64)> {
    let path = out_dir.join("series").join(format!("{stem}.csv"));
    let mut reader =
        csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("open {}: {e}", path.display()));
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].parse().unwrap())
        })
        .collect()
}

/// Maps summary parameters to their significance verdicts.
fn read_summary(out_dir: &Path) -> BTreeMap<String, bool> {
    let mut reader = csv::Reader::from_path(out_dir.join("summary.csv")).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), &r[2] == "true")
        })
        .collect()
}

/// All files under `dir` keyed by relative path.
fn snapshot_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(cur) = stack.pop() {
        for entry in std::fs::read_dir(&cur).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Multi-octave value noise with fine grain, enough structure for
/// stable keypoints and non-degenerate histograms.
fn textured_gray(width: u32, height: u32, seed: u64) -> ImageGray {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = 16u32;
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
    let lattice = |gx: u32, gy: u32| grid[(gy * gw + gx) as usize];
    let mut img = ImageGray::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (gx, gy) = (fx.floor() as u32, fy.floor() as u32);
            let (ax, ay) = (fx - gx as f64, fy - gy as f64);
            let top = lattice(gx, gy) * (1.0 - ax) + lattice(gx + 1, gy) * ax;
            let bot = lattice(gx, gy + 1) * (1.0 - ax) + lattice(gx + 1, gy + 1) * ax;
            let coarse = top * (1.0 - ay) + bot * ay;
            let v = 90.0 + coarse * 110.0 + rng.gen_range(-14.0..=14.0);
            img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    img
}
