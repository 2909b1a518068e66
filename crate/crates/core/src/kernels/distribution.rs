use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A law on `[0, inf)`. Used for the multiplicative factor `Z`, the
/// additive noise `W`, and the return law `H` out of the atom.
///
/// Serialized as `{"family": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum TailDistribution {
    /// `P[X > x] = (scale / x)^alpha` for `x >= scale`.
    Pareto { alpha: f64, scale: f64 },
    DeterministicPoint { value: f64 },
    /// `exp(mu + sigma N)`.
    Lognormal { mu: f64, sigma: f64 },
    /// Mass `p_zero` at 0, otherwise a draw from `base`.
    MixtureWithPointMassAtZero {
        p_zero: f64,
        base: Box<TailDistribution>,
    },
    /// Finite discrete law; weights need not be normalized.
    UserTable { values: Vec<f64>, weights: Vec<f64> },
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl TailDistribution {
    pub fn pareto(alpha: f64) -> Self {
        TailDistribution::Pareto { alpha, scale: 1.0 }
    }

    pub fn point(value: f64) -> Self {
        TailDistribution::DeterministicPoint { value }
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Self {
        TailDistribution::Lognormal { mu, sigma }
    }

    pub fn with_zero_mass(p_zero: f64, base: TailDistribution) -> Self {
        TailDistribution::MixtureWithPointMassAtZero {
            p_zero,
            base: Box::new(base),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        match self {
            TailDistribution::Pareto { alpha, scale } => {
                if !finite_pos(*alpha) || !finite_pos(*scale) {
                    return Err(Error::invalid(format!(
                        "pareto needs alpha > 0 and scale > 0, got alpha={alpha}, scale={scale}"
                    )));
                }
            }
            TailDistribution::DeterministicPoint { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::invalid(format!(
                        "deterministic point must be finite and >= 0, got {value}"
                    )));
                }
            }
            TailDistribution::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::invalid(format!(
                        "lognormal needs finite mu and sigma >= 0, got mu={mu}, sigma={sigma}"
                    )));
                }
            }
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                if !(0.0..=1.0).contains(p_zero) {
                    return Err(Error::invalid(format!("p_zero must lie in [0,1], got {p_zero}")));
                }
                base.validate()?;
            }
            TailDistribution::UserTable { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::invalid(
                        "user table needs matching, nonempty values and weights",
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("user table values must be finite and >= 0"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                    || weights.iter().sum::<f64>() <= 0.0
                {
                    return Err(Error::invalid("user table weights must be >= 0 with positive sum"));
                }
            }
        }
        Ok(())
    }

    /// Sorted `(value, probability)` atoms of a user table.
    fn table_atoms(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
        let total: f64 = weights.iter().sum();
        let mut atoms: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| (v, w / total))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }

    /// Left-continuous inverse CDF, `inf{x : F(x) >= p}`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            TailDistribution::Pareto { alpha, scale } => {
                if p >= 1.0 {
                    f64::INFINITY
                } else {
                    scale * (1.0 - p).powf(-1.0 / alpha)
                }
            }
            TailDistribution::DeterministicPoint { value } => *value,
            TailDistribution::Lognormal { mu, sigma } => {
                if p <= 0.0 {
                    0.0
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    (mu + sigma * std_normal().inverse_cdf(p)).exp()
                }
            }
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                if p <= *p_zero {
                    0.0
                } else {
                    base.quantile((p - p_zero) / (1.0 - p_zero))
                }
            }
            TailDistribution::UserTable { values, weights } => {
                let mut acc = 0.0;
                let atoms = Self::table_atoms(values, weights);
                for &(v, w) in &atoms {
                    acc += w;
                    if acc >= p - 1e-15 {
                        return v;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }

    /// Draw via the quantile transform of a given uniform `u` in `[0, 1)`.
    pub fn sample_with_uniform(&self, u: f64) -> f64 {
        self.quantile(u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TailDistribution::Pareto { alpha, scale } => {
                // 1 - u lies in (0, 1]
                let u: f64 = rng.random();
                scale * (1.0 - u).powf(-1.0 / alpha)
            }
            TailDistribution::DeterministicPoint { value } => *value,
            TailDistribution::Lognormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                if *p_zero >= 1.0 || rng.random::<f64>() < *p_zero {
                    0.0
                } else {
                    base.sample(rng)
                }
            }
            TailDistribution::UserTable { .. } => self.quantile(rng.random()),
        }
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.sf(x)
    }

    /// `P[X < x]`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x) - self.atom_at(x)
    }

    /// Probability of the single point `{x}`.
    pub fn atom_at(&self, x: f64) -> f64 {
        match self {
            TailDistribution::DeterministicPoint { value } => {
                if *value == x {
                    1.0
                } else {
                    0.0
                }
            }
            TailDistribution::Lognormal { sigma, mu } if *sigma == 0.0 => {
                if mu.exp() == x {
                    1.0
                } else {
                    0.0
                }
            }
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                let z = if x == 0.0 { *p_zero } else { 0.0 };
                z + (1.0 - p_zero) * base.atom_at(x)
            }
            TailDistribution::UserTable { values, weights } => Self::table_atoms(values, weights)
                .iter()
                .filter(|a| a.0 == x)
                .map(|a| a.1)
                .sum(),
            _ => 0.0,
        }
    }

    /// Survival function `P[X > x]`, computed without cancellation in the tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            TailDistribution::Pareto { alpha, scale } => {
                if x <= *scale {
                    1.0
                } else {
                    (scale / x).powf(*alpha)
                }
            }
            TailDistribution::DeterministicPoint { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            TailDistribution::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else if *sigma == 0.0 {
                    if x < mu.exp() {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    std_normal().sf((x.ln() - mu) / sigma)
                }
            }
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                (1.0 - p_zero) * base.sf(x)
            }
            TailDistribution::UserTable { values, weights } => Self::table_atoms(values, weights)
                .iter()
                .filter(|a| a.0 > x)
                .map(|a| a.1)
                .sum(),
        }
    }

    /// Exact draw from the law restricted to `(lo, hi]`, by inverse CDF.
    /// Returns `None` when the interval carries no mass.
    pub fn sample_between<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
        if let TailDistribution::Pareto { alpha, scale } = self {
            // work on the survival scale to keep precision far in the tail
            let s_lo = self.sf(lo);
            let s_hi = self.sf(hi);
            if s_lo <= s_hi {
                return None;
            }
            let u: f64 = rng.random();
            let s = s_hi + (1.0 - u) * (s_lo - s_hi);
            let x = scale * s.powf(-1.0 / alpha);
            return Some(x.clamp(lo.max(*scale), hi));
        }
        let f_lo = self.cdf(lo);
        let f_hi = self.cdf(hi);
        if f_hi <= f_lo {
            return None;
        }
        let u: f64 = rng.random();
        // p in (f_lo, f_hi]
        let p = f_lo + (1.0 - u) * (f_hi - f_lo);
        Some(self.quantile(p).clamp(lo, hi))
    }

    /// Mass of `(lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        (self.sf(lo) - self.sf(hi)).max(0.0)
    }

    pub fn point_mass_at_zero(&self) -> f64 {
        self.atom_at(0.0)
    }

    /// Index of regular variation of the upper tail, when there is one.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            TailDistribution::Pareto { alpha, .. } => Some(*alpha),
            TailDistribution::MixtureWithPointMassAtZero { base, .. } => base.tail_index(),
            _ => None,
        }
    }

    /// `E X^p` for `p > 0`; `None` when infinite.
    pub fn moment(&self, p: f64) -> Option<f64> {
        match self {
            TailDistribution::Pareto { alpha, scale } => {
                (*alpha > p).then(|| alpha * scale.powf(p) / (alpha - p))
            }
            TailDistribution::DeterministicPoint { value } => Some(value.powf(p)),
            TailDistribution::Lognormal { mu, sigma } => {
                Some((p * mu + 0.5 * p * p * sigma * sigma).exp())
            }
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                if *p_zero >= 1.0 {
                    Some(0.0)
                } else {
                    base.moment(p).map(|m| (1.0 - p_zero) * m)
                }
            }
            TailDistribution::UserTable { values, weights } => Some(
                Self::table_atoms(values, weights)
                    .iter()
                    .map(|(v, w)| w * v.powf(p))
                    .sum(),
            ),
        }
    }

    /// `E log X`; `-inf` when `X` has an atom at zero.
    pub fn mean_log(&self) -> f64 {
        if self.point_mass_at_zero() > 0.0 {
            return f64::NEG_INFINITY;
        }
        match self {
            TailDistribution::Pareto { alpha, scale } => scale.ln() + 1.0 / alpha,
            TailDistribution::DeterministicPoint { value } => value.ln(),
            TailDistribution::Lognormal { mu, .. } => *mu,
            TailDistribution::MixtureWithPointMassAtZero { base, .. } => base.mean_log(),
            TailDistribution::UserTable { values, weights } => Self::table_atoms(values, weights)
                .iter()
                .map(|(v, w)| w * v.ln())
                .sum(),
        }
    }

    /// `Some((p0, rho))` when the law is `p0 * delta_0 + (1 - p0) * delta_rho`.
    pub fn as_two_point(&self) -> Option<(f64, f64)> {
        match self {
            TailDistribution::DeterministicPoint { value } => {
                if *value == 0.0 {
                    Some((1.0, 0.0))
                } else {
                    Some((0.0, *value))
                }
            }
            TailDistribution::Lognormal { mu, sigma } if *sigma == 0.0 => Some((0.0, mu.exp())),
            TailDistribution::MixtureWithPointMassAtZero { p_zero, base } => {
                let (q0, rho) = base.as_two_point()?;
                Some((p_zero + (1.0 - p_zero) * q0, rho))
            }
            _ => None,
        }
    }
}
