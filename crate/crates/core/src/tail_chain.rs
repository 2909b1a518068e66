//! The tail chain `T_n = T_0 xi(n)`, `xi(n) = xi_1 ... xi_n`, and the limit
//! constants built from its supremum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::TailDistribution;
use crate::rng::Streams;
use crate::stats::{bootstrap_mean_ci, proportion, Estimate, MeanAccumulator, DEFAULT_LEVEL};

pub const DEFAULT_KILL_EPSILON: f64 = 1e-12;
pub const DEFAULT_HORIZON_MIN: usize = 64;
pub const DEFAULT_HORIZON: usize = 1000;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// One realization of the multiplicative random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailChainPath {
    pub xi: Vec<f64>,
    /// `products[n - 1] = xi(n)`; `xi(0) = 1` is implicit.
    pub products: Vec<f64>,
    pub t0: f64,
    /// First `n` with `xi(n) = 0`; `None` stands for infinity.
    pub death_time: Option<usize>,
    /// Stopped by the horizon rather than by death or the kill rule.
    pub truncated: bool,
}

impl TailChainPath {
    /// `xi(n)` for `n >= 0`, zero past death and past the recorded range.
    pub fn product(&self, n: usize) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.products.get(n - 1).copied().unwrap_or(0.0)
        }
    }

    /// `T_n = T_0 xi(n)` for `n = 0..=len`.
    pub fn tail_values(&self) -> Vec<f64> {
        std::iter::once(self.t0)
            .chain(self.products.iter().map(|p| self.t0 * p))
            .collect()
    }

    /// `sup_{j >= m} xi(j)` over the recorded range.
    pub fn sup_from(&self, m: usize) -> f64 {
        if m == 0 {
            return self.sup_from(1).max(1.0);
        }
        self.products
            .iter()
            .skip(m - 1)
            .fold(0.0, |a, &b| a.max(b))
    }

    pub fn sup(&self) -> f64 {
        self.sup_from(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailChainOptions {
    /// Largest number of factors drawn.
    pub horizon: usize,
    pub kill_epsilon: f64,
    /// The kill rule is not applied before this many steps.
    pub horizon_min: usize,
}

impl Default for TailChainOptions {
    fn default() -> Self {
        TailChainOptions {
            horizon: DEFAULT_HORIZON,
            kill_epsilon: DEFAULT_KILL_EPSILON,
            horizon_min: DEFAULT_HORIZON_MIN,
        }
    }
}

impl TailChainOptions {
    pub fn with_horizon(horizon: usize) -> Self {
        TailChainOptions {
            horizon,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if !(self.kill_epsilon > 0.0) {
            return Err(Error::invalid("kill_epsilon must be > 0"));
        }
        Ok(())
    }
}

pub fn simulate_tail_chain<R: Rng + ?Sized>(
    g: &TailDistribution,
    t0: f64,
    horizon: usize,
    kill_epsilon: f64,
    rng: &mut R,
) -> Result<TailChainPath> {
    simulate_tail_chain_with(
        g,
        t0,
        &TailChainOptions {
            horizon,
            kill_epsilon,
            horizon_min: DEFAULT_HORIZON_MIN.min(horizon),
        },
        rng,
    )
}

pub fn simulate_tail_chain_with<R: Rng + ?Sized>(
    g: &TailDistribution,
    t0: f64,
    opts: &TailChainOptions,
    rng: &mut R,
) -> Result<TailChainPath> {
    g.validate()?;
    opts.validate()?;
    if !(t0 >= 0.0) {
        return Err(Error::invalid("T0 must be >= 0"));
    }
    let mut xi = Vec::new();
    let mut products = Vec::new();
    let mut prod = 1.0;
    let mut death_time = None;
    let mut truncated = true;
    for n in 1..=opts.horizon {
        let x = g.sample(rng);
        prod *= x;
        xi.push(x);
        products.push(prod);
        if prod == 0.0 {
            death_time = Some(n);
            truncated = false;
            break;
        }
        if prod < opts.kill_epsilon && n >= opts.horizon_min {
            truncated = false;
            break;
        }
    }
    Ok(TailChainPath {
        xi,
        products,
        t0,
        death_time,
        truncated,
    })
}

/// The supremum of one path, recorded at the horizon and at twice the horizon.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SupRun {
    pub sup: f64,
    pub sup_half: f64,
    pub first: f64,
    pub truncated: bool,
}

/// Runs `xi(n)` up to `2 * horizon` steps (or fewer when killed), keeping
/// the running supremum at the horizon as well.
pub(crate) fn run_sup<R: Rng + ?Sized>(g: &TailDistribution, opts: &TailChainOptions, rng: &mut R) -> SupRun {
    let mut prod = 1.0;
    let mut sup: f64 = 0.0;
    let mut sup_half = f64::NAN;
    let mut first = 0.0;
    let limit = 2 * opts.horizon;
    let mut truncated = true;
    for n in 1..=limit {
        let x = g.sample(rng);
        if n == 1 {
            first = x;
        }
        prod *= x;
        sup = sup.max(prod);
        if n == opts.horizon {
            sup_half = sup;
        }
        if prod == 0.0 || (prod < opts.kill_epsilon && n >= opts.horizon_min) {
            truncated = false;
            break;
        }
    }
    if sup_half.is_nan() {
        sup_half = sup;
    }
    SupRun {
        sup,
        sup_half,
        first,
        truncated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transience {
    TransientByAtom,
    TransientByDrift,
    NotTransient,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransienceReport {
    pub verdict: Transience,
    pub point_mass_at_zero: f64,
    /// `E log xi_1` in closed form.
    pub mean_log: f64,
    /// Monte Carlo estimate of `E log xi_1` over the positive draws.
    pub mean_log_estimate: Option<Estimate>,
}

impl TransienceReport {
    pub fn is_transient(&self) -> bool {
        matches!(
            self.verdict,
            Transience::TransientByAtom | Transience::TransientByDrift
        )
    }
}

/// Decides whether `xi(n) -> 0` almost surely.
pub fn check_transience<R: Rng + ?Sized>(
    g: &TailDistribution,
    alpha: f64,
    n_probe: usize,
    rng: &mut R,
) -> Result<TransienceReport> {
    g.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be > 0"));
    }
    let p0 = g.point_mass_at_zero();
    let mut acc = MeanAccumulator::new();
    for _ in 0..n_probe {
        let x = g.sample(rng);
        if x > 0.0 {
            acc.push(x.ln());
        }
    }
    let mean_log_estimate = (acc.count() > 1).then(|| acc.estimate(DEFAULT_LEVEL));
    let mean_log = g.mean_log();
    let verdict = if p0 > 0.0 {
        Transience::TransientByAtom
    } else if mean_log.is_finite() || mean_log == f64::INFINITY {
        if mean_log < 0.0 {
            Transience::TransientByDrift
        } else {
            Transience::NotTransient
        }
    } else {
        match mean_log_estimate {
            Some(e) if e.ci_high < 0.0 => Transience::TransientByDrift,
            Some(e) if e.ci_low > 0.0 => Transience::NotTransient,
            _ => Transience::Inconclusive,
        }
    };
    Ok(TransienceReport {
        verdict,
        point_mass_at_zero: p0,
        mean_log,
        mean_log_estimate,
    })
}

fn require_transient(g: &TailDistribution, alpha: f64) -> Result<TransienceReport> {
    let mut rng = Streams::new(0).rng("transience-probe", 0);
    let report = check_transience(g, alpha, 10_000, &mut rng)?;
    if !report.is_transient() {
        return Err(Error::NotTransient(format!(
            "E log xi = {} and G({{0}}) = {}; the supremum of xi(n) need not be finite",
            report.mean_log, report.point_mass_at_zero
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonCheck {
    pub horizon: usize,
    /// Mean of `sup^alpha` at `2 * horizon` minus the mean at `horizon`,
    /// on the same paths.
    pub difference: Estimate,
    pub truncated_fraction: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupStatistics {
    pub alpha: f64,
    pub p_sup_le_1: Estimate,
    pub e_sup_alpha: Estimate,
    pub e_sup_alpha_above_1: Estimate,
    /// Per-path `1{S <= 1} + S^alpha 1{S > 1}`.
    pub c: Estimate,
    /// Per-path `1{S <= 1} (1 - S^alpha)`.
    pub theta: Estimate,
    pub e_xi_alpha: Estimate,
    pub n_reps: usize,
    /// Whether `E sup^(2 alpha) < infinity` is certified; otherwise the
    /// unbounded functionals carry bootstrap intervals.
    pub variance_certified: bool,
    pub horizon_check: HorizonCheck,
}

/// Monte Carlo estimates of `P[S <= 1]`, `E S^alpha` and `E S^alpha 1{S > 1}`
/// for `S = sup_{j >= 1} xi(j)`.
pub fn sup_statistics(
    g: &TailDistribution,
    alpha: f64,
    horizon: usize,
    n_reps: usize,
    streams: &Streams,
) -> Result<SupStatistics> {
    sup_statistics_with(g, alpha, &TailChainOptions::with_horizon(horizon), n_reps, streams)
}

#[derive(Default, Clone, Copy)]
struct SupAcc {
    le1: u64,
    pow: MeanAccumulator,
    above: MeanAccumulator,
    c: MeanAccumulator,
    theta: MeanAccumulator,
    first: MeanAccumulator,
    diff: MeanAccumulator,
    truncated: u64,
}

pub fn sup_statistics_with(
    g: &TailDistribution,
    alpha: f64,
    opts: &TailChainOptions,
    n_reps: usize,
    streams: &Streams,
) -> Result<SupStatistics> {
    opts.validate()?;
    require_transient(g, alpha)?;
    if n_reps < 2 {
        return Err(Error::invalid("n_reps must be >= 2"));
    }
    let variance_certified = match g.as_two_point() {
        Some((p0, rho)) => (1.0 - p0) * rho.powf(2.0 * alpha) < 1.0 || rho <= 1.0,
        None => g.moment(2.0 * alpha).is_some_and(|m| m < 1.0),
    };
    let label = "sup-statistics";
    let runs: Vec<SupRun> = streams.map(label, n_reps, |_, rng| run_sup(g, opts, rng));
    let mut acc = SupAcc::default();
    for r in &runs {
        let s_pow = r.sup.powf(alpha);
        let le1 = r.sup <= 1.0;
        acc.le1 += le1 as u64;
        acc.pow.push(s_pow);
        acc.above.push(if le1 { 0.0 } else { s_pow });
        acc.c.push(if le1 { 1.0 } else { s_pow });
        acc.theta.push(if le1 { 1.0 - s_pow } else { 0.0 });
        acc.first.push(r.first.powf(alpha));
        acc.diff.push(s_pow - r.sup_half.powf(alpha));
        acc.truncated += r.truncated as u64;
    }
    let level = DEFAULT_LEVEL;
    let mut e_sup_alpha = acc.pow.estimate(level);
    let mut e_above = acc.above.estimate(level);
    let mut c = acc.c.estimate(level);
    if !variance_certified {
        // percentile intervals, widened to at least the normal ones
        let mut rng = streams.rng("sup-bootstrap", 0);
        let per_path: [fn(f64, f64) -> f64; 3] = [
            |s, a| s.powf(a),
            |s, a| if s > 1.0 { s.powf(a) } else { 0.0 },
            |s, a| if s > 1.0 { s.powf(a) } else { 1.0 },
        ];
        for (est, f) in [&mut e_sup_alpha, &mut e_above, &mut c].into_iter().zip(per_path) {
            let values: Vec<f64> = runs.iter().map(|r| f(r.sup, alpha)).collect();
            let (lo, hi) = bootstrap_mean_ci(&values, level, BOOTSTRAP_RESAMPLES, &mut rng);
            est.ci_low = est.ci_low.min(lo);
            est.ci_high = est.ci_high.max(hi);
        }
    }
    let diff = acc.diff.estimate(level);
    let horizon_check = HorizonCheck {
        horizon: opts.horizon,
        difference: diff,
        truncated_fraction: acc.truncated as f64 / n_reps as f64,
        stable: diff.value == 0.0 || diff.value.abs() <= e_sup_alpha.half_width(),
    };
    Ok(SupStatistics {
        alpha,
        p_sup_le_1: proportion(acc.le1, n_reps as u64, level),
        e_sup_alpha,
        e_sup_alpha_above_1: e_above,
        c,
        theta: acc.theta.estimate(level),
        e_xi_alpha: acc.first.estimate(level),
        n_reps,
        variance_certified,
        horizon_check,
    })
}

/// Closed-form sup moments `(P[S <= 1], E S^alpha, E S^alpha 1{S > 1})`
/// for `G = p0 delta_0 + (1 - p0) delta_rho`.
pub fn analytic_sup_moments(g: &TailDistribution, alpha: f64) -> Option<Result<(f64, f64, f64)>> {
    let (p0, rho) = g.as_two_point()?;
    if p0 >= 1.0 || rho == 0.0 {
        return Some(Ok((1.0, 0.0, 0.0)));
    }
    if rho < 1.0 || (rho == 1.0 && p0 > 0.0) {
        return Some(Ok((1.0, (1.0 - p0) * rho.powf(alpha), 0.0)));
    }
    if p0 == 0.0 {
        return Some(Err(Error::NotTransient(format!(
            "G = delta_{rho} does not drive xi(n) to 0"
        ))));
    }
    // S = rho^K with K ~ Geometric on {0, 1, ...}, P[K = k] = (1 - p0)^k p0
    let r = (1.0 - p0) * rho.powf(alpha);
    if r >= 1.0 {
        return Some(Err(Error::MomentNotCertified(format!(
            "E sup xi^alpha is infinite: (1 - p0) rho^alpha = {r} >= 1"
        ))));
    }
    let e = p0 * r / (1.0 - r);
    Some(Ok((p0, e, e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo {
        n_reps: usize,
        level: f64,
        horizon: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub alpha: f64,
    pub q: Option<Estimate>,
    pub e_xi_alpha: Option<Estimate>,
    pub e_sup_alpha: Estimate,
    pub p_sup_le_1: Estimate,
    pub e_sup_alpha_above_1: Estimate,
    pub c: Estimate,
    pub theta_stationary: Estimate,
    pub theta_regenerative: Option<Estimate>,
    pub provenance: Provenance,
}

fn ratio_estimate(num: &Estimate, q: &Estimate) -> Estimate {
    let d = q.value - 1.0;
    let value = num.value / d;
    let se = ((num.std_error / d).powi(2) + (num.value * q.std_error / (d * d)).powi(2)).sqrt();
    if se == 0.0 {
        Estimate::exact(value)
    } else {
        Estimate::normal(value, se, num.level.min(q.level))
    }
}

impl LimitConstants {
    /// Attaches `q` and fills the regenerative extremal index when `q > 1`.
    pub fn with_q(mut self, q: Estimate) -> Self {
        self.theta_regenerative = (q.value > 1.0).then(|| ratio_estimate(&self.e_sup_alpha, &q));
        self.q = Some(q);
        self
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.provenance, Provenance::Analytic)
    }
}

/// `c`, `theta` and the sup moments; closed form for two-point `G`,
/// Monte Carlo otherwise.
pub fn constant_c(
    g: &TailDistribution,
    alpha: f64,
    horizon: usize,
    n_reps: usize,
    streams: &Streams,
) -> Result<LimitConstants> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be > 0"));
    }
    g.validate()?;
    if let Some(res) = analytic_sup_moments(g, alpha) {
        let (p, e, above) = res?;
        let c = p + above;
        return Ok(LimitConstants {
            alpha,
            q: None,
            e_xi_alpha: g.moment(alpha).map(Estimate::exact),
            e_sup_alpha: Estimate::exact(e),
            p_sup_le_1: Estimate::exact(p),
            e_sup_alpha_above_1: Estimate::exact(above),
            c: Estimate::exact(c),
            theta_stationary: Estimate::exact(c - e),
            theta_regenerative: None,
            provenance: Provenance::Analytic,
        });
    }
    constant_c_monte_carlo(g, alpha, horizon, n_reps, streams)
}

/// Always simulates, even when a closed form exists.
pub fn constant_c_monte_carlo(
    g: &TailDistribution,
    alpha: f64,
    horizon: usize,
    n_reps: usize,
    streams: &Streams,
) -> Result<LimitConstants> {
    let s = sup_statistics(g, alpha, horizon, n_reps, streams)?;
    Ok(LimitConstants {
        alpha,
        q: None,
        e_xi_alpha: Some(g.moment(alpha).map(Estimate::exact).unwrap_or(s.e_xi_alpha)),
        e_sup_alpha: s.e_sup_alpha,
        p_sup_le_1: s.p_sup_le_1,
        e_sup_alpha_above_1: s.e_sup_alpha_above_1,
        c: s.c,
        theta_stationary: s.theta,
        theta_regenerative: None,
        provenance: Provenance::MonteCarlo {
            n_reps,
            level: DEFAULT_LEVEL,
            horizon,
        },
    })
}

/// `(theta_stationary, theta_regenerative)`.
pub fn extremal_index(constants: &LimitConstants) -> Result<(Estimate, Estimate)> {
    let q = constants
        .q
        .ok_or_else(|| Error::Undefined("q is required for the regenerative extremal index".into()))?;
    if q.value <= 1.0 {
        return Err(Error::Undefined(format!(
            "regenerative extremal index divides by q - 1 = {}",
            q.value - 1.0
        )));
    }
    Ok((
        constants.theta_stationary,
        ratio_estimate(&constants.e_sup_alpha, &q),
    ))
}

/// Monte Carlo `P[sup_{j >= m} xi(j) > a]` for each `m` in `m_grid`, on
/// shared paths.
pub fn tail_sup_exceedance(
    g: &TailDistribution,
    a: f64,
    m_grid: &[usize],
    opts: &TailChainOptions,
    n_reps: usize,
    streams: &Streams,
) -> Result<Vec<Estimate>> {
    g.validate()?;
    opts.validate()?;
    let hits = streams.fold(
        "tail-sup-exceedance",
        n_reps,
        || vec![0u64; m_grid.len()],
        |acc, _, rng| {
            let path = simulate_tail_chain_with(g, 1.0, opts, rng).expect("validated");
            for (k, &m) in m_grid.iter().enumerate() {
                if path.sup_from(m.max(1)) > a {
                    acc[k] += 1;
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    );
    Ok(hits
        .into_iter()
        .map(|h| proportion(h, n_reps as u64, DEFAULT_LEVEL))
        .collect())
}

/// Monte Carlo `E xi(j)^alpha`.
pub fn product_moment(
    g: &TailDistribution,
    alpha: f64,
    j: usize,
    n_reps: usize,
    streams: &Streams,
) -> Result<Estimate> {
    g.validate()?;
    let acc = streams.fold(
        &format!("product-moment-{j}"),
        n_reps,
        MeanAccumulator::new,
        |acc, _, rng| {
            let p: f64 = (0..j).map(|_| g.sample(rng)).product();
            acc.push(p.powf(alpha));
        },
        |a, b| a.merge(&b),
    );
    Ok(acc.estimate(DEFAULT_LEVEL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn immediate_absorption() {
        let p = simulate_tail_chain(&TailDistribution::point(0.0), 1.0, 10, 1e-12, &mut rng()).unwrap();
        assert_eq!(p.xi, vec![0.0]);
        assert_eq!(p.products, vec![0.0]);
        assert_eq!(p.death_time, Some(1));
        assert!(!p.truncated);
    }

    #[test]
    fn geometric_decay_to_horizon() {
        let p = simulate_tail_chain(&TailDistribution::point(0.5), 1.0, 4, 1e-12, &mut rng()).unwrap();
        assert_eq!(p.products, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(p.death_time, None);
        assert!(p.truncated);
        assert_eq!(p.tail_values(), vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn kill_rule_waits_for_horizon_min() {
        let p = simulate_tail_chain(&TailDistribution::point(1e-3), 1.0, 1000, 1e-12, &mut rng()).unwrap();
        assert_eq!(p.products.len(), DEFAULT_HORIZON_MIN);
        assert!(!p.truncated);
    }

    #[test]
    fn transience_verdicts() {
        let mut r = rng();
        let atom = TailDistribution::with_zero_mass(0.3, TailDistribution::point(2.0));
        assert_eq!(check_transience(&atom, 1.0, 100, &mut r).unwrap().verdict, Transience::TransientByAtom);
        assert_eq!(
            check_transience(&TailDistribution::point(0.5), 1.0, 100, &mut r).unwrap().verdict,
            Transience::TransientByDrift
        );
        assert_eq!(
            check_transience(&TailDistribution::point(1.0), 1.0, 100, &mut r).unwrap().verdict,
            Transience::NotTransient
        );
    }

    #[test]
    fn deterministic_sup_statistics() {
        let s = sup_statistics(&TailDistribution::point(0.5), 2.0, 100, 1000, &Streams::new(1)).unwrap();
        assert_eq!(s.p_sup_le_1.value, 1.0);
        assert!((s.e_sup_alpha.value - 0.25).abs() < 1e-15);
        assert_eq!(s.e_sup_alpha_above_1.value, 0.0);
        let z = sup_statistics(&TailDistribution::point(0.0), 2.0, 100, 1000, &Streams::new(1)).unwrap();
        assert_eq!(z.p_sup_le_1.value, 1.0);
        assert_eq!(z.e_sup_alpha.value, 0.0);
    }

    #[test]
    fn analytic_constants() {
        let s = Streams::new(1);
        let c = constant_c(&TailDistribution::point(0.5), 3.0, 100, 10, &s).unwrap();
        assert_eq!(c.c.value, 1.0);
        assert!(c.is_analytic());
        let z = constant_c(&TailDistribution::point(0.0), 1.0, 100, 10, &s).unwrap();
        assert_eq!(z.c.value, 1.0);
        assert_eq!(z.theta_stationary.value, 1.0);
        assert!(matches!(
            constant_c(&TailDistribution::point(2.0), 1.0, 100, 10, &s),
            Err(Error::NotTransient(_))
        ));
    }

    #[test]
    fn extremal_index_closed_forms() {
        let s = Streams::new(1);
        let c = constant_c(&TailDistribution::point(0.5), 1.0, 100, 10, &s).unwrap();
        assert_eq!(c.theta_stationary.value, 0.5);
        let c = constant_c(&TailDistribution::point(0.7), 2.0, 100, 10, &s).unwrap();
        assert!((c.theta_stationary.value - 0.51).abs() < 1e-12);
        // q = 1 + 1 / (1 - rho^alpha) for det-contract
        let q = 1.0 + 1.0 / (1.0 - 0.49);
        let (ts, tr) = extremal_index(&c.clone().with_q(Estimate::exact(q))).unwrap();
        assert!((ts.value - 0.51).abs() < 1e-12);
        assert!((tr.value - 0.49 * 0.51).abs() < 1e-12);
        assert!(extremal_index(&c.clone().with_q(Estimate::exact(1.0))).is_err());
        assert!(extremal_index(&c).is_err());
    }

    #[test]
    fn expanding_two_point_law() {
        // p0 = 0.5, rho = 1.5, alpha = 1: r = 0.75
        let g = TailDistribution::with_zero_mass(0.5, TailDistribution::point(1.5));
        let (p, e, above) = analytic_sup_moments(&g, 1.0).unwrap().unwrap();
        assert_eq!(p, 0.5);
        assert!((e - 1.5).abs() < 1e-12);
        assert_eq!(e, above);
    }

    #[test]
    fn sup_from_is_monotone() {
        let p = simulate_tail_chain(&TailDistribution::lognormal(0.1, 1.0), 1.0, 200, 1e-12, &mut rng()).unwrap();
        let sups: Vec<f64> = (1..200).map(|m| p.sup_from(m)).collect();
        assert!(sups.windows(2).all(|w| w[1] <= w[0]));
    }
}
