//! Cross-session image alignment: keypoint detection and description,
//! ratio-test descriptor matching, and robust similarity or affine
//! estimation with a seeded random sample consensus loop.
//!
//! Transforms map query-image coordinates into train-image coordinates
//! as a 2x3 row-major matrix `[[a, b, tx], [c, d, ty]]`.

mod sift;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{ImageGray, Roi};

/// Sub-pixel interest point in base-image pixel coordinates.
#[derive(Debug, Clone)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Blur level (in base-image pixels) the point was detected at.
    pub scale: f64,
    /// Dominant gradient angle, radians in [0, 2pi).
    pub orientation: f64,
    /// Refined DoG contrast magnitude; larger is stronger.
    pub response: f64,
    pub(crate) octave: u8,
    pub(crate) layer: u8,
}

impl Keypoint {
    /// Keypoint at a known location, for synthetic correspondences and
    /// for describing externally chosen points at the base scale.
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            scale: sift::SIGMA0,
            orientation: 0.0,
            response: 0.0,
            octave: 0,
            layer: 1,
        }
    }
}

/// 128-element gradient histogram, L2-normalized.
#[derive(Debug, Clone)]
pub struct Descriptor(pub [f32; 128]);

impl Descriptor {
    /// Euclidean distance between two descriptors.
    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Detects interest points, strongest first, at most `max_count`.
pub fn detect_keypoints(img: &ImageGray, max_count: usize) -> Result<Vec<Keypoint>> {
    if img.width() < sift::MIN_IMAGE_SIDE || img.height() < sift::MIN_IMAGE_SIDE {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min_width: sift::MIN_IMAGE_SIDE,
            min_height: sift::MIN_IMAGE_SIDE,
        });
    }
    let pyramid = sift::build_pyramid(img);
    let mut kps = sift::detect(img, &pyramid);
    // Strongest first; the positional tie break keeps ordering stable.
    kps.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
            .then(a.orientation.partial_cmp(&b.orientation).unwrap())
    });
    kps.truncate(max_count);
    Ok(kps)
}

/// Descriptors for the given keypoints, one per keypoint in order.
pub fn compute_descriptors(img: &ImageGray, keypoints: &[Keypoint]) -> Vec<Descriptor> {
    if keypoints.is_empty() {
        return Vec::new();
    }
    let pyramid = sift::build_pyramid(img);
    keypoints
        .iter()
        .map(|kp| sift::describe(&pyramid, kp))
        .collect()
}

/// One accepted correspondence from the ratio-test matcher.
#[derive(Debug, Clone)]
pub struct MatchPair {
    pub query_idx: usize,
    pub train_idx: usize,
    /// Descriptor distance of the best neighbour.
    pub distance: f64,
    /// Best-to-second-best distance ratio (0 when no second neighbour).
    pub ratio: f64,
}

/// Nearest-neighbour matching with Lowe's ratio test and one-to-one
/// train assignment (best distance wins).
pub fn match_knn(
    query: &[Descriptor],
    train: &[Descriptor],
    ratio_threshold: f64,
) -> Result<Vec<MatchPair>> {
    if query.is_empty() || train.is_empty() {
        return Err(Error::EmptyDescriptorSet);
    }
    let mut candidates = Vec::new();
    for (qi, q) in query.iter().enumerate() {
        let mut best = f64::INFINITY;
        let mut best_idx = 0usize;
        let mut second = f64::INFINITY;
        for (ti, t) in train.iter().enumerate() {
            let d = q.distance(t);
            if d < best {
                second = best;
                best = d;
                best_idx = ti;
            } else if d < second {
                second = d;
            }
        }
        // second stays infinite for a single-element train set, which
        // makes the ratio zero and accepts the lone neighbour.
        let ratio = if second > 0.0 {
            if second.is_finite() {
                best / second
            } else {
                0.0
            }
        } else {
            // Two identical train descriptors at distance zero are
            // indistinguishable; treat as maximally ambiguous.
            1.0
        };
        if ratio < ratio_threshold {
            candidates.push(MatchPair {
                query_idx: qi,
                train_idx: best_idx,
                distance: best,
                ratio,
            });
        }
    }
    // Greedy one-to-one resolution, best (smallest) distance first.
    candidates.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then(a.query_idx.cmp(&b.query_idx))
            .then(a.train_idx.cmp(&b.train_idx))
    });
    let mut used_train = std::collections::HashSet::new();
    let mut matches: Vec<MatchPair> = candidates
        .into_iter()
        .filter(|m| used_train.insert(m.train_idx))
        .collect();
    matches.sort_by_key(|m| m.query_idx);
    Ok(matches)
}

/// Model family fitted by [`estimate_transform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Rotation, uniform scale and translation (4 degrees of freedom).
    Similarity,
    /// Full 2x3 affine map (6 degrees of freedom).
    Affine,
}

impl TransformKind {
    fn minimal_samples(self) -> usize {
        match self {
            TransformKind::Similarity => 2,
            TransformKind::Affine => 3,
        }
    }
}

/// Estimated 2-d transform plus consensus diagnostics.
#[derive(Debug, Clone)]
pub struct AlignTransform {
    pub kind: TransformKind,
    /// Row-major `[[a, b, tx], [c, d, ty]]`.
    pub matrix: [[f64; 3]; 2],
    pub inlier_count: usize,
    /// Root-mean-square reprojection error over the inliers.
    pub inlier_rms: f64,
}

impl AlignTransform {
    pub fn identity(kind: TransformKind) -> Self {
        Self {
            kind,
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            inlier_count: 0,
            inlier_rms: 0.0,
        }
    }

    /// Maps a query-space point into train space.
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let m = &self.matrix;
        (
            m[0][0] * p.0 + m[0][1] * p.1 + m[0][2],
            m[1][0] * p.0 + m[1][1] * p.1 + m[1][2],
        )
    }

    /// Inverse map; fails on a singular linear part.
    pub fn invert(&self) -> Result<AlignTransform> {
        let m = &self.matrix;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::SingularTransform);
        }
        let ia = m[1][1] / det;
        let ib = -m[0][1] / det;
        let ic = -m[1][0] / det;
        let id = m[0][0] / det;
        Ok(AlignTransform {
            kind: self.kind,
            matrix: [
                [ia, ib, -(ia * m[0][2] + ib * m[1][2])],
                [ic, id, -(ic * m[0][2] + id * m[1][2])],
            ],
            inlier_count: self.inlier_count,
            inlier_rms: self.inlier_rms,
        })
    }

    /// Rotation angle in radians (meaningful for similarity models).
    pub fn rotation(&self) -> f64 {
        self.matrix[1][0].atan2(self.matrix[0][0])
    }

    /// Uniform scale factor (meaningful for similarity models).
    pub fn scale(&self) -> f64 {
        self.matrix[0][0].hypot(self.matrix[1][0])
    }
}

const RANSAC_MAX_ITERATIONS: usize = 2000;
const RANSAC_INLIER_THRESHOLD: f64 = 3.0;
/// Consensus is rejected only when it is both under half the matches
/// and under this absolute floor.
const RANSAC_MIN_ABSOLUTE: usize = 8;

/// One correspondence as ((query x, query y), (train x, train y)).
type PointPair = ((f64, f64), (f64, f64));

/// Least-squares similarity fit (closed form on centered coordinates).
fn fit_similarity(pairs: &[PointPair]) -> Option<[[f64; 3]; 2]> {
    let n = pairs.len() as f64;
    let (mut mx, mut my, mut mu, mut mv) = (0.0, 0.0, 0.0, 0.0);
    for ((x, y), (u, v)) in pairs {
        mx += x;
        my += y;
        mu += u;
        mv += v;
    }
    mx /= n;
    my /= n;
    mu /= n;
    mv /= n;
    let (mut sa, mut sb, mut s) = (0.0, 0.0, 0.0);
    for ((x, y), (u, v)) in pairs {
        let (xc, yc, uc, vc) = (x - mx, y - my, u - mu, v - mv);
        sa += xc * uc + yc * vc;
        sb += xc * vc - yc * uc;
        s += xc * xc + yc * yc;
    }
    if s < 1e-12 {
        return None;
    }
    let a = sa / s;
    let b = sb / s;
    let tx = mu - a * mx + b * my;
    let ty = mv - b * mx - a * my;
    Some([[a, -b, tx], [b, a, ty]])
}

/// Least-squares affine fit via the 3x3 normal equations, solved twice
/// (once per output row) with Cramer's rule.
fn fit_affine(pairs: &[PointPair]) -> Option<[[f64; 3]; 2]> {
    let n = pairs.len() as f64;
    let (mut sxx, mut sxy, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sxu, mut syu, mut su) = (0.0, 0.0, 0.0);
    let (mut sxv, mut syv, mut sv) = (0.0, 0.0, 0.0);
    for ((x, y), (u, v)) in pairs {
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sx += x;
        sy += y;
        sxu += x * u;
        syu += y * u;
        su += u;
        sxv += x * v;
        syv += y * v;
        sv += v;
    }
    let m = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
    let det = det3(&m);
    if det.abs() < 1e-9 {
        return None;
    }
    let solve = |r: [f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut mm = m;
            for row in 0..3 {
                mm[row][i] = r[row];
            }
            *slot = det3(&mm) / det;
        }
        out
    };
    let row0 = solve([sxu, syu, su]);
    let row1 = solve([sxv, syv, sv]);
    Some([row0, row1])
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn fit(kind: TransformKind, pairs: &[PointPair]) -> Option<[[f64; 3]; 2]> {
    match kind {
        TransformKind::Similarity => fit_similarity(pairs),
        TransformKind::Affine => fit_affine(pairs),
    }
}

/// Robustly estimates the transform taking query keypoints onto train
/// keypoints from ratio-test matches. Deterministic for a given seed.
pub fn estimate_transform(
    matches: &[MatchPair],
    query_kps: &[Keypoint],
    train_kps: &[Keypoint],
    kind: TransformKind,
    seed: u64,
) -> Result<AlignTransform> {
    let minimal = kind.minimal_samples();
    if matches.len() < minimal {
        return Err(Error::InsufficientMatches {
            needed: minimal,
            got: matches.len(),
        });
    }
    let pairs: Vec<PointPair> = matches
        .iter()
        .map(|m| {
            let q = &query_kps[m.query_idx];
            let t = &train_kps[m.train_idx];
            ((q.x, q.y), (t.x, t.y))
        })
        .collect();
    let n = pairs.len();
    let thr2 = RANSAC_INLIER_THRESHOLD * RANSAC_INLIER_THRESHOLD;

    let residual2 = |m: &[[f64; 3]; 2], pair: &PointPair| -> f64 {
        let (p, q) = pair;
        let px = m[0][0] * p.0 + m[0][1] * p.1 + m[0][2];
        let py = m[1][0] * p.0 + m[1][1] * p.1 + m[1][2];
        (px - q.0).powi(2) + (py - q.1).powi(2)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_inliers: Vec<usize> = Vec::new();
    let mut sample = vec![0usize; minimal];
    for _ in 0..RANSAC_MAX_ITERATIONS {
        // Rejection-sample distinct match indices.
        for i in 0..minimal {
            loop {
                let idx = rng.gen_range(0..n);
                if !sample[..i].contains(&idx) {
                    sample[i] = idx;
                    break;
                }
            }
        }
        let chosen: Vec<_> = sample.iter().map(|&i| pairs[i]).collect();
        let Some(model) = fit(kind, &chosen) else {
            continue;
        };
        let inliers: Vec<usize> = (0..n)
            .filter(|&i| residual2(&model, &pairs[i]) <= thr2)
            .collect();
        if inliers.len() > best_inliers.len() {
            best_inliers = inliers;
            if best_inliers.len() == n {
                break;
            }
        }
    }

    let half = n.div_ceil(2);
    if best_inliers.len() < half && best_inliers.len() < RANSAC_MIN_ABSOLUTE {
        return Err(Error::NoConsensus {
            best_inliers: best_inliers.len(),
            matches: n,
        });
    }

    let inlier_pairs: Vec<_> = best_inliers.iter().map(|&i| pairs[i]).collect();
    let matrix = fit(kind, &inlier_pairs).ok_or(Error::NoConsensus {
        best_inliers: best_inliers.len(),
        matches: n,
    })?;
    let rms = (inlier_pairs
        .iter()
        .map(|p| residual2(&matrix, p))
        .sum::<f64>()
        / inlier_pairs.len() as f64)
        .sqrt();
    Ok(AlignTransform {
        kind,
        matrix,
        inlier_count: inlier_pairs.len(),
        inlier_rms: rms,
    })
}

/// Maps a polygon drawn on the query image into train-image space.
pub fn transfer_roi(roi: &Roi, transform: &AlignTransform) -> Result<Roi> {
    let vertices: Vec<(f64, f64)> = roi.vertices().iter().map(|&p| transform.apply(p)).collect();
    Roi::new(vertices)
}
