//! Paired statistics for before/after trial data.
//!
//! The decision flow mirrors common clinical practice: differences are
//! first screened with the Shapiro-Wilk normality test (the AS R94
//! approximation); normal-looking differences get a paired t-test,
//! anything else the Wilcoxon signed-rank test. The signed-rank p-value
//! is exact (full sign-flip distribution) for 25 or fewer non-zero
//! differences without rank ties, and a tie-corrected,
//! continuity-corrected normal approximation otherwise.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Which test produced a [`TestResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    PairedT,
    WilcoxonSignedRank,
}

impl TestKind {
    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            TestKind::PairedT => "paired-t",
            TestKind::WilcoxonSignedRank => "wilcoxon",
        }
    }
}

/// Outcome of a paired comparison.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub test_kind: TestKind,
    /// t statistic, or the positive-rank sum W+ for the signed-rank test.
    pub statistic: f64,
    pub p_value: f64,
    /// True when `p_value < alpha`.
    pub significant: bool,
    pub alpha: f64,
    /// Shapiro-Wilk p-value of the differences, when it was computable.
    pub normality_p: Option<f64>,
}

fn check_finite(sample: &[f64]) -> Result<()> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample);
    }
    Ok(())
}

fn paired_differences(before: &[f64], after: &[f64]) -> Result<Vec<f64>> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            left: before.len(),
            right: after.len(),
        });
    }
    check_finite(before)?;
    check_finite(after)?;
    Ok(after.iter().zip(before).map(|(a, b)| a - b).collect())
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Shapiro-Wilk normality test (Royston's AS R94 approximation).
/// Returns `(w, p_value)`.
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64)> {
    check_finite(sample)?;
    let n = sample.len();
    if n < 3 {
        return Err(Error::SampleTooSmall { needed: 3, got: n });
    }
    let mut x: Vec<f64> = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let range = x[n - 1] - x[0];
    if range < 1e-19 {
        return Err(Error::ZeroVariance);
    }

    let an = n as f64;
    let n2 = n / 2;
    let normal = Normal::new(0.0, 1.0).unwrap();

    // Half-vector of weights; full vector is antisymmetric.
    let mut a = vec![0.0f64; n2];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let an25 = an + 0.25;
        let mut summ2 = 0.0;
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = normal.inverse_cdf((i as f64 + 1.0 - 0.375) / an25);
            summ2 += *ai * *ai;
        }
        summ2 *= 2.0;
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - a[0] / ssumm2;
        let (i1, fac) = if n > 5 {
            let a2 = -a[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * a[0] * a[0] - 2.0 * a[1] * a[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            (2usize, fac)
        } else {
            (
                1usize,
                ((summ2 - 2.0 * a[0] * a[0]) / (1.0 - 2.0 * a1 * a1)).sqrt(),
            )
        };
        a[0] = a1;
        for ai in a.iter_mut().skip(i1) {
            *ai = -*ai / fac;
        }
    }

    // W as the squared correlation between the ordered data and the
    // antisymmetric weight vector (numerically stable form).
    let full_weight = |i: usize| -> f64 {
        // 0-based index into the sorted sample.
        let j = n - 1 - i;
        if i < j {
            -a[i]
        } else if i > j {
            a[j]
        } else {
            0.0
        }
    };
    let mean_x: f64 = x.iter().sum::<f64>() / an;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    let mean_a: f64 = (0..n).map(full_weight).sum::<f64>() / an;
    for (i, xi) in x.iter().enumerate() {
        let asa = full_weight(i) - mean_a;
        let xsx = (xi - mean_x) / range;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(0.0, 1.0);

    // P-value branches of the approximation.
    const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];
    let p = if n == 3 {
        // Exact small-sample form, 6/pi * (asin(sqrt(W)) - pi/3).
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let y = (1.0 - w).ln();
        let (m, s, y) = if n <= 11 {
            let gamma = poly(&G, an);
            if y >= gamma {
                return Ok((w, 0.0));
            }
            let y = -(gamma - y).ln();
            (poly(&C3, an), poly(&C4, an).exp(), y)
        } else {
            let xx = an.ln();
            (poly(&C5, xx), poly(&C6, xx).exp(), y)
        };
        (1.0 - normal.cdf((y - m) / s)).clamp(0.0, 1.0)
    };
    Ok((w, p))
}

/// Two-sided paired t-test. Returns `(t, p_value)`.
pub fn paired_t_test(before: &[f64], after: &[f64]) -> Result<(f64, f64)> {
    let d = paired_differences(before, after)?;
    let n = d.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { needed: 2, got: n });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(Error::ZeroVarianceDifferences);
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, n as f64 - 1.0).unwrap();
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok((t, p))
}

/// Ranks with ties shared as averages. Input must be positive values.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Indices i..=j share the average of ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided signed-rank p-value for integer ranks 1..=n (no
/// ties): full distribution of W+ over all 2^n sign assignments,
/// computed by dynamic programming.
fn wilcoxon_exact_p(n: usize, w_plus: f64) -> f64 {
    let total = n * (n + 1) / 2;
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for rank in 1..=n {
        for s in (rank..=total).rev() {
            counts[s] += counts[s - rank];
        }
    }
    let denom = (1u64 << n) as f64;
    let w = w_plus.round() as usize;
    let p_le: u64 = counts[..=w].iter().sum();
    let p_ge: u64 = counts[w..].iter().sum();
    let p = 2.0 * (p_le.min(p_ge) as f64) / denom;
    p.min(1.0)
}

const WILCOXON_EXACT_LIMIT: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired data. Zero differences
/// are dropped; the statistic is W+, the rank sum of positive
/// differences. Returns `(w_plus, p_value)`.
pub fn wilcoxon_signed_rank(before: &[f64], after: &[f64]) -> Result<(f64, f64)> {
    let d: Vec<f64> = paired_differences(before, after)?
        .into_iter()
        .filter(|v| *v != 0.0)
        .collect();
    if d.is_empty() {
        return Err(Error::AllDifferencesZero);
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();

    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let has_ties = sorted.windows(2).any(|w| w[0] == w[1]);

    let p = if !has_ties && n <= WILCOXON_EXACT_LIMIT {
        wilcoxon_exact_p(n, w_plus)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // Tie correction subtracts sum(t^3 - t)/48 over tie groups.
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return Err(Error::ZeroVarianceDifferences);
        }
        let dev = w_plus - mean;
        // Continuity correction of half a rank toward the mean.
        let z = (dev - 0.5 * dev.signum()) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
    };
    Ok((w_plus, p))
}

/// Normality-gated paired comparison: Shapiro-Wilk on the differences,
/// then a paired t-test when they look normal at `alpha`, otherwise the
/// Wilcoxon signed-rank test. Differences with zero spread skip the
/// normality screen and go straight to the rank test.
pub fn paired_compare(before: &[f64], after: &[f64], alpha: f64) -> Result<TestResult> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let d = paired_differences(before, after)?;
    let normality = match shapiro_wilk(&d) {
        Ok((_, p)) => Some(p),
        Err(Error::ZeroVariance) => None,
        Err(e) => return Err(e),
    };
    let use_t = normality.map(|p| p >= alpha).unwrap_or(false);
    let (kind, statistic, p_value) = if use_t {
        let (t, p) = paired_t_test(before, after)?;
        (TestKind::PairedT, t, p)
    } else {
        let (w, p) = wilcoxon_signed_rank(before, after)?;
        (TestKind::WilcoxonSignedRank, w, p)
    };
    Ok(TestResult {
        test_kind: kind,
        statistic,
        p_value,
        significant: p_value < alpha,
        alpha,
        normality_p: normality,
    })
}

/// Mean squared difference between two equal-length series.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    check_finite(a)?;
    check_finite(b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: a.len(),
        });
    }
    check_finite(a)?;
    check_finite(b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Percent change of the mean relative to the baseline mean,
/// `|mean(final) - mean(baseline)| / |mean(baseline)| * 100`.
pub fn percent_variation(baseline: &[f64], last: &[f64]) -> Result<f64> {
    if baseline.is_empty() || last.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    check_finite(baseline)?;
    check_finite(last)?;
    let mb = baseline.iter().sum::<f64>() / baseline.len() as f64;
    let ml = last.iter().sum::<f64>() / last.len() as f64;
    if mb == 0.0 {
        return Err(Error::ZeroBaselineMean);
    }
    Ok((ml - mb).abs() / mb.abs() * 100.0)
}
