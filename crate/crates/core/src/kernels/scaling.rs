use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distribution::TailDistribution;
use crate::error::{Error, Result};

pub const PILOT_SIZE: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    AnalyticQuantile,
    EmpiricalQuantile,
}

/// The normalizer `b(t)`, an upper `1/t` quantile of `H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFunction {
    pub mode: ScalingMode,
    pub alpha: f64,
    /// Pareto scale in analytic mode.
    pub scale: f64,
    /// Sorted pilot draws in empirical mode.
    #[serde(skip)]
    pub sample_for_empirical: Option<Arc<Vec<f64>>>,
}

impl ScalingFunction {
    /// `b(t) = scale * t^(1/alpha)`.
    pub fn pareto(alpha: f64, scale: f64) -> Self {
        ScalingFunction {
            mode: ScalingMode::AnalyticQuantile,
            alpha,
            scale,
            sample_for_empirical: None,
        }
    }

    /// Empirical quantiles of `sample`. Beyond `t = len` the quantile is
    /// extended by `t^(1/alpha)`.
    pub fn empirical(mut sample: Vec<f64>, alpha: f64) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InsufficientData("empty pilot sample".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        sample.sort_by(f64::total_cmp);
        Ok(ScalingFunction {
            mode: ScalingMode::EmpiricalQuantile,
            alpha,
            scale: 1.0,
            sample_for_empirical: Some(Arc::new(sample)),
        })
    }

    /// Analytic for Pareto `H`, otherwise from `PILOT_SIZE` draws.
    pub fn for_law<R: Rng + ?Sized>(h: &TailDistribution, alpha: f64, rng: &mut R) -> Result<Self> {
        Self::for_law_with_pilot(h, alpha, PILOT_SIZE, rng)
    }

    pub fn for_law_with_pilot<R: Rng + ?Sized>(
        h: &TailDistribution,
        alpha: f64,
        pilot: usize,
        rng: &mut R,
    ) -> Result<Self> {
        h.validate()?;
        match h {
            TailDistribution::Pareto { alpha, scale } => Ok(Self::pareto(*alpha, *scale)),
            _ => Self::empirical((0..pilot).map(|_| h.sample(rng)).collect(), alpha),
        }
    }

    pub fn b(&self, t: f64) -> f64 {
        match &self.sample_for_empirical {
            None => self.scale * t.powf(1.0 / self.alpha),
            Some(s) => {
                let n = s.len();
                let nf = n as f64;
                if t <= 1.0 {
                    return s[0];
                }
                if t > nf {
                    return s[n - 1] * (t / nf).powf(1.0 / self.alpha);
                }
                // ceil(n (1 - 1/t)) order statistic
                let k = ((nf * (1.0 - 1.0 / t)).ceil() as usize).clamp(1, n);
                s[k - 1]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_pareto_scaling() {
        let b = ScalingFunction::pareto(2.0, 1.0);
        assert_eq!(b.b(100.0), 10.0);
        assert_eq!(b.mode, ScalingMode::AnalyticQuantile);
    }

    #[test]
    fn empirical_is_monotone_and_unbounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = TailDistribution::lognormal(0.0, 1.0);
        let b = ScalingFunction::for_law_with_pilot(&h, 1.0, 10_000, &mut rng).unwrap();
        assert_eq!(b.mode, ScalingMode::EmpiricalQuantile);
        let mut prev = 0.0;
        for e in 0..40 {
            let v = b.b(1.5f64.powi(e));
            assert!(v >= prev);
            prev = v;
        }
        assert!(b.b(1e12) > 1e6);
    }

    #[test]
    fn empirical_tracks_the_true_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = TailDistribution::lognormal(0.0, 1.0);
        let b = ScalingFunction::for_law_with_pilot(&h, 1.0, 200_000, &mut rng).unwrap();
        let truth = h.quantile(1.0 - 1.0 / 100.0);
        assert!((b.b(100.0) / truth - 1.0).abs() < 0.03);
    }
}
