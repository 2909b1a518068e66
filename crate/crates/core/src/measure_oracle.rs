//! The limit measures `nu_alpha`, `nu(dx, dy) = nu_alpha(dx) P[x Y in dy]` and
//! `mu`, plus truncation certificates for the cluster Poisson sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::TailDistribution;
use crate::rng::Streams;
use crate::stats::{proportion, Estimate, MeanAccumulator, DEFAULT_LEVEL};
use crate::tail_chain::{analytic_sup_moments, run_sup, TailChainOptions};

/// `nu_alpha(lo, hi] = lo^(-alpha) - hi^(-alpha)`.
pub fn nu_alpha_mass(alpha: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let a = if lo <= 0.0 { f64::INFINITY } else { lo.powf(-alpha) };
    let b = if hi.is_infinite() { 0.0 } else { hi.powf(-alpha) };
    a - b
}

/// Exact draw from `nu_alpha` restricted to `(lo, hi]`, `lo > 0`.
pub fn sample_nu_alpha<R: Rng + ?Sized>(alpha: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let s_lo = lo.powf(-alpha);
    let s_hi = if hi.is_infinite() { 0.0 } else { hi.powf(-alpha) };
    let u: f64 = rng.random();
    // survival level in (s_hi, s_lo]
    let s = s_hi + (1.0 - u) * (s_lo - s_hi);
    s.powf(-1.0 / alpha).clamp(lo, hi)
}

/// A sample of `Y` as a sorted array with suffix sums of `Y^alpha`.
///
/// `denominator` is the number of independent draws the values come from;
/// several values per draw are allowed, so the sample encodes the measure
/// `E sum_i 1{Y_i in .}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalY {
    pub alpha: f64,
    sorted: Vec<f64>,
    suffix_pow: Vec<f64>,
    pub denominator: f64,
    /// Values at or below this level were dropped; tail queries must stay above it.
    pub floor: f64,
}

impl EmpiricalY {
    pub fn new(values: Vec<f64>, alpha: f64) -> Result<Self> {
        let d = values.len() as f64;
        Self::with_denominator(values, alpha, d, 0.0)
    }

    pub fn with_denominator(mut values: Vec<f64>, alpha: f64, denominator: f64, floor: f64) -> Result<Self> {
        if !(denominator > 0.0) {
            return Err(Error::InsufficientData("empty Y sample".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("Y sample must be finite and >= 0"));
        }
        values.sort_by(f64::total_cmp);
        let mut suffix_pow = vec![0.0; values.len() + 1];
        for i in (0..values.len()).rev() {
            suffix_pow[i] = suffix_pow[i + 1] + values[i].powf(alpha);
        }
        Ok(EmpiricalY {
            alpha,
            sorted: values,
            suffix_pow,
            denominator,
            floor,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    fn first_above(&self, u: f64) -> usize {
        self.sorted.partition_point(|&v| v <= u)
    }

    /// `E[Y^alpha 1{Y > u}]`.
    pub fn tail_moment(&self, u: f64) -> f64 {
        self.suffix_pow[self.first_above(u)] / self.denominator
    }

    /// `P[Y > u]`.
    pub fn tail_prob(&self, u: f64) -> f64 {
        (self.sorted.len() - self.first_above(u)) as f64 / self.denominator
    }

    pub fn moment(&self) -> f64 {
        self.suffix_pow[0] / self.denominator
    }

    pub fn max(&self) -> f64 {
        self.sorted.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YLaw {
    Deterministic { value: f64 },
    Empirical(EmpiricalY),
}

/// `nu(dx, dy) = nu_alpha(dx) P[x Y in dy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMeasureSpec {
    pub alpha: f64,
    pub y_law: YLaw,
}

impl ProductMeasureSpec {
    pub fn deterministic(alpha: f64, value: f64) -> Self {
        ProductMeasureSpec {
            alpha,
            y_law: YLaw::Deterministic { value },
        }
    }

    pub fn empirical(alpha: f64, values: Vec<f64>) -> Result<Self> {
        Ok(ProductMeasureSpec {
            alpha,
            y_law: YLaw::Empirical(EmpiricalY::new(values, alpha)?),
        })
    }

    fn tail_moment(&self, u: f64) -> f64 {
        match &self.y_law {
            YLaw::Deterministic { value } => {
                if *value > u {
                    value.powf(self.alpha)
                } else {
                    0.0
                }
            }
            YLaw::Empirical(e) => e.tail_moment(u),
        }
    }

    fn tail_prob(&self, u: f64) -> f64 {
        match &self.y_law {
            YLaw::Deterministic { value } => (*value > u) as u8 as f64,
            YLaw::Empirical(e) => e.tail_prob(u),
        }
    }
}

/// `nu([0, x] x (y, inf]) = y^(-alpha) E[Y^alpha 1{Y > y/x}] - x^(-alpha) P[Y > y/x]`.
pub fn nu_box(spec: &ProductMeasureSpec, x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::invalid("y must be > 0"));
    }
    if !(x > 0.0) {
        return Err(Error::invalid("x must be > 0"));
    }
    if let YLaw::Empirical(e) = &spec.y_law {
        if e.values().is_empty() {
            return Err(Error::InsufficientData("empty Y sample".into()));
        }
    }
    let a = spec.alpha;
    let u = y / x;
    let first = y.powf(-a) * spec.tail_moment(u);
    let second = if x.is_infinite() {
        0.0
    } else {
        x.powf(-a) * spec.tail_prob(u)
    };
    Ok((first - second).max(0.0))
}

const STRATUM_RATIO: f64 = 1.001;

/// Monte Carlo value of `int_{(0, x]} nu_alpha(ds) P[s Y > y]`, stratified
/// over the sorted `Y` sample. Within a stratum with largest value `m`,
/// `s` is drawn from `nu_alpha` restricted to `(y / m, x]`.
pub fn nu_box_monte_carlo(
    spec: &ProductMeasureSpec,
    x: f64,
    y: f64,
    n_samples: usize,
    streams: &Streams,
) -> Result<Estimate> {
    if !(y > 0.0 && x > 0.0) {
        return Err(Error::invalid("x and y must be > 0"));
    }
    let a = spec.alpha;
    // (values in stratum, total weight of stratum)
    let strata: Vec<(&[f64], f64)> = match &spec.y_law {
        YLaw::Deterministic { value } => {
            let v = std::slice::from_ref(value);
            vec![(v, 1.0)]
        }
        YLaw::Empirical(e) => {
            let vals = e.values();
            if vals.is_empty() {
                return Err(Error::InsufficientData("empty Y sample".into()));
            }
            // geometric strata: within one, max / min <= STRATUM_RATIO
            let mut out = Vec::new();
            let mut start = 0;
            for j in 1..=vals.len() {
                if j == vals.len() || vals[j] > STRATUM_RATIO * vals[start] {
                    let c = &vals[start..j];
                    out.push((c, c.len() as f64 / e.denominator));
                    start = j;
                }
            }
            out
        }
    };
    let masses: Vec<f64> = strata
        .iter()
        .map(|(vals, w)| {
            let m = vals[vals.len() - 1];
            if m <= 0.0 {
                0.0
            } else {
                w * nu_alpha_mass(a, y / m, x)
            }
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if total == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let mut value = 0.0;
    let mut var = 0.0;
    for (idx, ((vals, w), mass)) in strata.iter().zip(&masses).enumerate() {
        if *mass == 0.0 {
            continue;
        }
        let n_k = ((n_samples as f64 * mass / total).ceil() as usize).max(2);
        let lo = y / vals[vals.len() - 1];
        let inner = nu_alpha_mass(a, lo, x);
        let acc = streams.fold(
            &format!("nu-box-{idx}"),
            n_k,
            || 0u64,
            |hits, _, rng| {
                let s = sample_nu_alpha(a, lo, x, rng);
                let v = vals[rng.random_range(0..vals.len())];
                if s * v > y {
                    *hits += 1;
                }
            },
            |a, b| *a += b,
        );
        let p = acc as f64 / n_k as f64;
        let scale = w * inner;
        value += scale * p;
        var += scale * scale * p * (1.0 - p) / n_k as f64;
    }
    Ok(if var == 0.0 {
        Estimate::exact(value)
    } else {
        Estimate::normal(value, var.sqrt(), DEFAULT_LEVEL)
    })
}

/// `(lo, hi]`, or `[lo, hi]` when `lo_closed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    /// `null` in JSON stands for infinity.
    #[serde(with = "infinite_as_null")]
    pub hi: f64,
    #[serde(default)]
    pub lo_closed: bool,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Interval {
    pub fn open_closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: true,
        }
    }

    /// `(a, inf]`.
    pub fn above(a: f64) -> Self {
        Self::open_closed(a, f64::INFINITY)
    }

    /// `[0, inf]`.
    pub fn everything() -> Self {
        Self::closed(0.0, f64::INFINITY)
    }

    pub fn contains(&self, v: f64) -> bool {
        (v > self.lo || (self.lo_closed && v == self.lo)) && v <= self.hi
    }
}

/// `mu(I_0 x I_1 x ... x I_m)` with `mu(dx_0, ..., dx_m) =
/// nu_alpha(dx_0) P_{x_0}[(T_1, ..., T_m) in .]`.
pub fn mu_cylinder(
    alpha: f64,
    g: &TailDistribution,
    cylinder: &[Interval],
    n_reps: usize,
    streams: &Streams,
) -> Result<Estimate> {
    g.validate()?;
    let Some(first) = cylinder.first() else {
        return Err(Error::invalid("cylinder needs at least one interval"));
    };
    if !(first.lo > 0.0) {
        return Err(Error::invalid("the first interval must be bounded away from 0"));
    }
    if n_reps == 0 {
        return Err(Error::invalid("n_reps must be >= 1"));
    }
    let mass = nu_alpha_mass(alpha, first.lo, first.hi);
    if mass == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let rest = &cylinder[1..];
    let hits = streams.fold(
        "mu-cylinder",
        n_reps,
        || 0u64,
        |hits, _, rng| {
            let x0 = sample_nu_alpha(alpha, first.lo, first.hi, rng);
            let mut t = x0;
            for iv in rest {
                t *= g.sample(rng);
                if !iv.contains(t) {
                    return;
                }
            }
            *hits += 1;
        },
        |a, b| *a += b,
    );
    Ok(proportion(hits, n_reps as u64, DEFAULT_LEVEL).scaled(mass))
}

/// `E[sup_{j>=1} xi(j)^alpha]` is finite: closed form for two-point laws,
/// otherwise `E xi^alpha < 1`.
pub fn sup_moment_certified(g: &TailDistribution, alpha: f64) -> bool {
    match analytic_sup_moments(g, alpha) {
        Some(r) => r.is_ok(),
        None => g.moment(alpha).is_some_and(|m| m < 1.0),
    }
}

/// Which tail functional a bound uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFunctional {
    /// `E[S^alpha 1{S > u}]`, `S = sup_{j>=1} xi(j)`: bounds missed stacks.
    Sup,
    /// `E[sum_{j>=1} xi(j)^alpha 1{xi(j) > u}]`: bounds missed points.
    Points,
}

/// `(s_max / q) a^(-alpha) tail_moment(a / delta)`.
pub fn truncation_error_bound<F>(alpha: f64, tail_moment: F, s_max: f64, q: f64, a: f64, delta: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a > 0.0 && delta > 0.0 && q >= 1.0 && s_max > 0.0) {
        return Err(Error::invalid("need a > 0, delta > 0, q >= 1, s_max > 0"));
    }
    Ok(s_max / q * a.powf(-alpha) * tail_moment(a / delta))
}

/// Tail moments of the tail chain, in closed form where possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TailMoments {
    /// `G = p0 delta_0 + (1 - p0) delta_rho`.
    TwoPoint { p0: f64, rho: f64, alpha: f64 },
    /// `G = LN(mu, sigma^2)`; `xi(j) ~ LN(j mu, j sigma^2)`.
    Lognormal { mu: f64, sigma: f64, alpha: f64 },
    /// Samples of `S` and of all `xi(j) > 1`, from the same paths.
    MonteCarlo { sup: EmpiricalY, points: EmpiricalY },
}

const SERIES_TERMS: usize = 100_000;

impl TailMoments {
    /// Closed form when available, otherwise `n_paths` simulated tail chains.
    pub fn for_law(g: &TailDistribution, alpha: f64, n_paths: usize, streams: &Streams) -> Result<Self> {
        g.validate()?;
        if !sup_moment_certified(g, alpha) {
            return Err(Error::MomentNotCertified(
                "E sup xi(j)^alpha < infinity could not be established".into(),
            ));
        }
        if let Some((p0, rho)) = g.as_two_point() {
            return Ok(TailMoments::TwoPoint { p0, rho, alpha });
        }
        if let TailDistribution::Lognormal { mu, sigma } = *g {
            if sigma > 0.0 {
                return Ok(TailMoments::Lognormal { mu, sigma, alpha });
            }
        }
        Self::monte_carlo(g, alpha, n_paths, streams)
    }

    pub fn monte_carlo(g: &TailDistribution, alpha: f64, n_paths: usize, streams: &Streams) -> Result<Self> {
        if !sup_moment_certified(g, alpha) {
            return Err(Error::MomentNotCertified(
                "E sup xi(j)^alpha < infinity could not be established".into(),
            ));
        }
        let opts = TailChainOptions::default();
        let per_path: Vec<(f64, Vec<f64>)> = streams.map("tail-moments", n_paths, |_, rng| {
            let mut big = Vec::new();
            let mut prod = 1.0;
            let mut sup: f64 = 0.0;
            for n in 1..=opts.horizon {
                prod *= g.sample(rng);
                sup = sup.max(prod);
                if prod > 1.0 {
                    big.push(prod);
                }
                if prod == 0.0 || (prod < opts.kill_epsilon && n >= opts.horizon_min) {
                    break;
                }
            }
            (sup, big)
        });
        let d = n_paths as f64;
        let sups: Vec<f64> = per_path.iter().map(|p| p.0).collect();
        let points: Vec<f64> = per_path.into_iter().flat_map(|p| p.1).collect();
        Ok(TailMoments::MonteCarlo {
            sup: EmpiricalY::with_denominator(sups, alpha, d, 0.0)?,
            points: EmpiricalY::with_denominator(points, alpha, d, 1.0)?,
        })
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, TailMoments::MonteCarlo { .. })
    }

    /// The chosen tail moment at `u`. Monte Carlo point moments need `u >= 1`.
    pub fn tail_moment(&self, functional: TailFunctional, u: f64) -> f64 {
        match (self, functional) {
            (TailMoments::TwoPoint { p0, rho, alpha }, TailFunctional::Sup) => {
                two_point_sup_tail(*p0, *rho, *alpha, u)
            }
            (TailMoments::TwoPoint { p0, rho, alpha }, TailFunctional::Points) => {
                let r = (1.0 - p0) * rho.powf(*alpha);
                series(|j| {
                    let level = rho.powi(j as i32);
                    (level > u).then(|| r.powi(j as i32))
                })
            }
            (TailMoments::Lognormal { mu, sigma, alpha }, TailFunctional::Points) => {
                let n = Normal::standard();
                let ln_u = u.ln();
                series(|j| {
                    let m = j as f64 * mu;
                    let s = (j as f64).sqrt() * sigma;
                    let term = (alpha * m + 0.5 * alpha * alpha * s * s).exp()
                        * n.sf((ln_u - m - alpha * s * s) / s);
                    Some(term)
                })
            }
            (TailMoments::Lognormal { .. }, TailFunctional::Sup) => {
                // S^alpha 1{S > u} <= sum_j xi(j)^alpha 1{xi(j) > u}
                self.tail_moment(TailFunctional::Points, u)
            }
            (TailMoments::MonteCarlo { sup, .. }, TailFunctional::Sup) => sup.tail_moment(u),
            (TailMoments::MonteCarlo { points, .. }, TailFunctional::Points) => {
                if u < points.floor {
                    f64::INFINITY
                } else {
                    points.tail_moment(u)
                }
            }
        }
    }
}

fn two_point_sup_tail(p0: f64, rho: f64, alpha: f64, u: f64) -> f64 {
    if p0 >= 1.0 || rho == 0.0 {
        return 0.0;
    }
    if rho <= 1.0 {
        return if rho > u { (1.0 - p0) * rho.powf(alpha) } else { 0.0 };
    }
    // S = rho^K, P[K = k] = p0 (1 - p0)^k
    let r = (1.0 - p0) * rho.powf(alpha);
    series(|k| (rho.powi(k as i32) > u).then(|| p0 * r.powi(k as i32)))
}

/// Sums `term(j)` for `j >= 1`; `None` terms count as zero. Stops once the
/// terms have been negligible for a while.
fn series<F: Fn(usize) -> Option<f64>>(term: F) -> f64 {
    let mut total = 0.0;
    let mut small = 0;
    for j in 1..=SERIES_TERMS {
        let t = term(j).unwrap_or(0.0);
        total += t;
        if t <= 1e-18 * total.max(1e-300) {
            small += 1;
            if small > 200 && total > 0.0 {
                break;
            }
            if small > 5000 {
                break;
            }
        } else {
            small = 0;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCertificate {
    pub level: f64,
    pub delta: f64,
    /// Bound on expected missed points above `level` in `[0, s_max]`.
    pub bound: f64,
    /// Bound on expected missed stacks reaching above `level`.
    pub stack_bound: f64,
    pub tolerance: f64,
    pub halvings: u32,
    pub analytic: bool,
}

pub const DEFAULT_TRUNCATION_TOLERANCE: f64 = 1e-3;

/// Halves `delta` from `min(delta_start, level)` until the missed-point
/// bound falls below `tolerance`.
pub fn certify_delta(
    moments: &TailMoments,
    alpha: f64,
    s_max: f64,
    q: f64,
    level: f64,
    delta_start: f64,
    tolerance: f64,
) -> Result<DeltaCertificate> {
    let mut delta = delta_start.min(level);
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be > 0"));
    }
    for halvings in 0..64 {
        let bound = truncation_error_bound(
            alpha,
            |u| moments.tail_moment(TailFunctional::Points, u),
            s_max,
            q,
            level,
            delta,
        )?;
        if bound < tolerance {
            let stack_bound = truncation_error_bound(
                alpha,
                |u| moments.tail_moment(TailFunctional::Sup, u),
                s_max,
                q,
                level,
                delta,
            )?;
            return Ok(DeltaCertificate {
                level,
                delta,
                bound,
                stack_bound,
                tolerance,
                halvings,
                analytic: moments.is_analytic(),
            });
        }
        delta *= 0.5;
    }
    Err(Error::MomentNotCertified(format!(
        "no delta >= {delta} brings the truncation bound below {tolerance}"
    )))
}

/// Expected number of limit points above `level` in `[0, s_max]` from seeds
/// in `(0, delta]`, estimated on `n_reps` tail-chain paths. Given a path,
/// the seed integral is exact: `sum_j ((xi(j)/a)^alpha - delta^(-alpha))^+`.
pub fn missed_points_monte_carlo(
    g: &TailDistribution,
    alpha: f64,
    s_max: f64,
    q: f64,
    level: f64,
    delta: f64,
    n_reps: usize,
    streams: &Streams,
) -> Result<Estimate> {
    g.validate()?;
    if !(level >= delta && delta > 0.0) {
        return Err(Error::invalid("need 0 < delta <= level"));
    }
    let opts = TailChainOptions::default();
    let floor = delta.powf(-alpha);
    let acc = streams.fold(
        "missed-points",
        n_reps,
        MeanAccumulator::new,
        |acc, _, rng| {
            let mut prod = 1.0;
            let mut total = 0.0;
            for n in 1..=2 * opts.horizon {
                prod *= g.sample(rng);
                let v = (prod / level).powf(alpha) - floor;
                if v > 0.0 {
                    total += v;
                }
                if prod == 0.0 || (prod < opts.kill_epsilon && n >= opts.horizon_min) {
                    break;
                }
            }
            acc.push(total);
        },
        |a, b| a.merge(&b),
    );
    Ok(acc.estimate(DEFAULT_LEVEL).scaled(s_max / q))
}

/// A sample of `sup_{j>=1} xi(j)` from `n` tail-chain paths.
pub fn sup_sample(g: &TailDistribution, n: usize, streams: &Streams) -> Result<Vec<f64>> {
    g.validate()?;
    let opts = TailChainOptions::default();
    Ok(streams.map("sup-sample", n, |_, rng| run_sup(g, &opts, rng).sup))
}
