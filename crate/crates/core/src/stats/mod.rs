//! Welch's two-sample t-test and seeded bootstrap comparisons.

mod special;

pub use special::{ln_gamma, regularized_incomplete_beta, student_t_cdf, student_t_sf, two_sided_p};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, mean, percentile_sorted, sample_variance};
use crate::par;

pub const MIN_RESAMPLES: usize = 100;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations per sample, got {n1} and {n2}")]
    SampleTooSmall { needed: usize, n1: usize, n2: usize },
    #[error("both samples are constant and equal; t is undefined")]
    ZeroVariance,
    #[error("bootstrap needs at least {MIN_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
    #[error("non-finite observation {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    #[serde(with = "crate::numeric::extended_float")]
    pub t: f64,
    #[serde(with = "crate::numeric::extended_float")]
    pub df: f64,
    pub p_two_sided: f64,
    pub n1: usize,
    pub n2: usize,
    pub mean1: f64,
    pub mean2: f64,
    /// Both samples were constant with different means: `t` is infinite,
    /// `p` is 0 and `df` falls back to `n1 + n2 - 2`.
    #[serde(default)]
    pub flagged: bool,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(StatsError::NonFinite(*x)),
        None => Ok(()),
    }
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_t(sample1: &[f64], sample2: &[f64]) -> Result<WelchResult, StatsError> {
    let (n1, n2) = (sample1.len(), sample2.len());
    if n1 < 2 || n2 < 2 {
        return Err(StatsError::SampleTooSmall { needed: 2, n1, n2 });
    }
    check_finite(sample1)?;
    check_finite(sample2)?;
    let m1 = mean(sample1).expect("non-empty");
    let m2 = mean(sample2).expect("non-empty");
    let v1 = sample_variance(sample1).expect("n >= 2");
    let v2 = sample_variance(sample2).expect("n >= 2");
    let (a, b) = (v1 / n1 as f64, v2 / n2 as f64);
    let se2 = a + b;
    if se2 == 0.0 {
        if m1 == m2 {
            return Err(StatsError::ZeroVariance);
        }
        log::warn!("Welch test on two constant samples; reporting t = ±inf");
        return Ok(WelchResult {
            t: if m1 > m2 { f64::INFINITY } else { f64::NEG_INFINITY },
            df: (n1 + n2 - 2) as f64,
            p_two_sided: 0.0,
            n1,
            n2,
            mean1: m1,
            mean2: m2,
            flagged: true,
        });
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / (a * a / (n1 - 1) as f64 + b * b / (n2 - 1) as f64);
    Ok(WelchResult { t, df, p_two_sided: two_sided_p(t, df), n1, n2, mean1: m1, mean2: m2, flagged: false })
}

/// Statistic compared by [`bootstrap_diff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    /// Absolute value of the mean. Used for novelty, whose per-story
    /// contributions are signed deviations from the corpus baseline.
    AbsMean,
}

impl Statistic {
    pub fn eval(self, xs: &[f64]) -> f64 {
        let s = match self {
            Statistic::Mean => compensated_sum(xs.iter().copied()),
            Statistic::AbsMean => compensated_sum(xs.iter().copied()).abs(),
        };
        s / xs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `statistic(sample1) - statistic(sample2)` on the full samples.
    pub estimate: f64,
    pub ci95: (f64, f64),
    pub resamples: usize,
    pub seed: u64,
}

impl BootstrapResult {
    pub fn excludes_zero(&self) -> bool {
        self.ci95.0 > 0.0 || self.ci95.1 < 0.0
    }
}

fn resample(rng: &mut ChaCha8Rng, xs: &[f64], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]));
}

/// Percentile bootstrap of the difference in `statistic` between two
/// independent samples. Resample `i` draws from its own ChaCha8 stream, so
/// results do not depend on scheduling.
pub fn bootstrap_diff(
    sample1: &[f64],
    sample2: &[f64],
    statistic: Statistic,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, StatsError> {
    let (n1, n2) = (sample1.len(), sample2.len());
    if n1 < 2 || n2 < 2 {
        return Err(StatsError::SampleTooSmall { needed: 2, n1, n2 });
    }
    if resamples < MIN_RESAMPLES {
        return Err(StatsError::TooFewResamples(resamples));
    }
    check_finite(sample1)?;
    check_finite(sample2)?;
    let mut diffs = par::map_range(resamples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut buf = Vec::with_capacity(n1.max(n2));
        resample(&mut rng, sample1, &mut buf);
        let a = statistic.eval(&buf);
        resample(&mut rng, sample2, &mut buf);
        a - statistic.eval(&buf)
    });
    diffs.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        estimate: statistic.eval(sample1) - statistic.eval(sample2),
        ci95: (percentile_sorted(&diffs, 0.025), percentile_sorted(&diffs, 0.975)),
        resamples,
        seed,
    })
}
