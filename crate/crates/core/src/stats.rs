//! Small statistical toolbox shared by the estimators: streaming moments,
//! confidence intervals, and the goodness-of-fit tests used to compare
//! simulated laws.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Default confidence level used throughout.
pub const DEFAULT_LEVEL: f64 = 0.99;

/// Two-sided standard normal quantile for a confidence level.
pub fn z_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self, level: f64) -> Estimate {
        Estimate::normal(self.mean(), self.std_error(), level)
    }
}

/// A point value with a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl Estimate {
    /// A value known in closed form: zero-width interval.
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            std_error: 0.0,
            ci_low: value,
            ci_high: value,
            level: 1.0,
        }
    }

    pub fn normal(value: f64, std_error: f64, level: f64) -> Self {
        let half = z_value(level) * std_error;
        Estimate {
            value,
            std_error,
            ci_low: value - half,
            ci_high: value + half,
            level,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    /// Scales value and interval by a nonnegative constant.
    pub fn scaled(&self, k: f64) -> Self {
        Estimate {
            value: self.value * k,
            std_error: self.std_error * k,
            ci_low: self.ci_low * k,
            ci_high: self.ci_high * k,
            level: self.level,
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_value(level);
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let centre = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Proportion estimate with a Wilson interval.
pub fn proportion(successes: u64, n: u64, level: f64) -> Estimate {
    let p = if n == 0 { f64::NAN } else { successes as f64 / n as f64 };
    let (lo, hi) = wilson_interval(successes, n, level);
    Estimate {
        value: p,
        std_error: if n == 0 { f64::NAN } else { (p * (1.0 - p) / n as f64).sqrt() },
        ci_low: lo,
        ci_high: hi,
        level,
    }
}

/// Kolmogorov–Smirnov distance between a sample and a distribution given by
/// its CDF `F(x) = P[X <= x]` and left limit `F(x-) = P[X < x]`.
/// `sorted` must be sorted ascending.
pub fn ks_distance<F, G>(sorted: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((cdf_left(x) - below).abs()).max((cdf(x) - at).abs());
        i = j;
    }
    d
}

/// Asymptotic Kolmogorov survival function `P[K > lambda]`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if (k as u64) % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Wasserstein-1 distance between two equal-size samples after mapping
/// `[0, inf]` onto `[0, 1]` with `x / (1 + x)`. Metrizes weak convergence on
/// the compactified half line.
pub fn compact_wasserstein(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "samples must have equal size");
    let map = |v: &[f64]| {
        let mut m: Vec<f64> = v
            .iter()
            .map(|&x| if x.is_infinite() { 1.0 } else { x / (1.0 + x) })
            .collect();
        m.sort_by(f64::total_cmp);
        m
    };
    let (a, b) = (map(a), map(b));
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Result of a chi-square test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn chi_square_sf(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN)
}

/// Groups consecutive categories so that every group has expected count
/// at least `min_expected`; `weights` are the expected counts per category.
fn pool_categories(weights: &[f64], min_expected: f64) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= min_expected {
            groups.push((start, k + 1));
            start = k + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        match groups.last_mut() {
            Some(last) => last.1 = weights.len(),
            None => groups.push((0, weights.len())),
        }
    }
    groups
}

/// Goodness of fit of observed category counts against category
/// probabilities. The last probability should carry the residual tail mass.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquareTest {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let groups = pool_categories(&expected, 5.0);
    let mut stat = 0.0;
    for &(s, e) in &groups {
        let o: u64 = observed[s..e].iter().sum();
        let ex: f64 = expected[s..e].iter().sum();
        if ex > 0.0 {
            stat += (o as f64 - ex).powi(2) / ex;
        }
    }
    let df = groups.len().saturating_sub(1);
    ChiSquareTest {
        statistic: stat,
        df,
        p_value: chi_square_sf(stat, df),
    }
}

/// Chi-square test of homogeneity between two samples of nonnegative
/// integer counts. Returns `None` when the pooled table has a single
/// category (nothing to compare).
pub fn chi_square_homogeneity(a: &[usize], b: &[usize]) -> Option<ChiSquareTest> {
    let max = a.iter().chain(b).copied().max()?;
    let mut ca = vec![0u64; max + 1];
    let mut cb = vec![0u64; max + 1];
    for &v in a {
        ca[v] += 1;
    }
    for &v in b {
        cb[v] += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    // expected count of the smaller sample drives pooling
    let frac = na.min(nb) / total;
    let weights: Vec<f64> = ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (x + y) as f64 * frac)
        .collect();
    let groups = pool_categories(&weights, 5.0);
    if groups.len() < 2 {
        return None;
    }
    let mut stat = 0.0;
    for &(s, e) in &groups {
        let oa: u64 = ca[s..e].iter().sum();
        let ob: u64 = cb[s..e].iter().sum();
        let col = (oa + ob) as f64;
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (oa as f64 - ea).powi(2) / ea + (ob as f64 - eb).powi(2) / eb;
    }
    let df = groups.len() - 1;
    Some(ChiSquareTest {
        statistic: stat,
        df,
        p_value: chi_square_sf(stat, df),
    })
}

/// Sample lag-1 autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let denom: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / denom
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(
    values: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - tail) * resamples as f64).ceil() as usize).min(resamples - 1);
    (means[lo], means[hi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn accumulator_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = MeanAccumulator::new();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = MeanAccumulator::new();
        let mut b = MeanAccumulator::new();
        xs[..300].iter().for_each(|&x| a.push(x));
        xs[300..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean() - whole.mean()).abs() < 1e-12);
        assert!((a.variance() - whole.variance()).abs() < 1e-9);
    }

    #[test]
    fn z_value_99() {
        assert!((z_value(0.99) - 2.5758).abs() < 1e-3);
    }

    #[test]
    fn wilson_zero_successes_has_positive_upper() {
        let (lo, hi) = wilson_interval(0, 2000, 0.99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.004);
    }

    #[test]
    fn ks_against_point_mass_is_zero_for_exact_sample() {
        let s = vec![0.5; 10];
        let cdf = |x: f64| if x >= 0.5 { 1.0 } else { 0.0 };
        let left = |x: f64| if x > 0.5 { 1.0 } else { 0.0 };
        assert_eq!(ks_distance(&s, cdf, left), 0.0);
    }

    #[test]
    fn gof_accepts_true_law() {
        // Geometric(1/2) counts drawn exactly in proportion
        let probs = [0.5, 0.25, 0.125, 0.125];
        let obs = [500, 250, 125, 125];
        let t = chi_square_gof(&obs, &probs);
        assert!(t.statistic < 1e-12 && t.p_value > 0.99);
    }

    #[test]
    fn homogeneity_detects_shift() {
        let a: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let b: Vec<usize> = (0..1000).map(|i| 1 + i % 2).collect();
        assert!(chi_square_homogeneity(&a, &b).unwrap().p_value < 1e-6);
        assert!(chi_square_homogeneity(&a, &a).unwrap().p_value > 0.99);
        assert!(chi_square_homogeneity(&[0, 0], &[0, 0]).is_none());
    }

    #[test]
    fn ks_two_sample_same_sample() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn bootstrap_covers_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..400).map(|i| (i % 10) as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&v, 0.99, 400, &mut rng);
        assert!(lo < 4.5 && 4.5 < hi);
    }
}
