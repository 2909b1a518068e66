//! Monte Carlo checkers for the hypotheses on the chain.
//!
//! Double limits such as `lim_m limsup_t` cannot be computed, so every
//! verdict is read off the largest grid values: `pass` needs the upper
//! confidence bound below the tolerance, `fail` needs the lower bound above
//! it, and anything else is `inconclusive`.
//!
//! Probabilities under `X_0 ~ H` that are scaled by `t` are estimated by
//! stratifying `X_0` and sampling each stratum exactly from the restricted
//! law of `H`. Their intervals are normal intervals of the stratified
//! estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, ScalingFunction};
use crate::measure_oracle::{mu_cylinder, Interval};
use crate::rng::{StreamRng, Streams};
use crate::stats::{proportion, z_value, Estimate, DEFAULT_LEVEL};

pub const DEFAULT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    DriftBack,
    MomentUniform,
    WithinCycle,
    WithinCycleMrv,
    DriftAwayZ,
    CycleRegularity,
    TauTightness,
    RegularityKernel,
    JointRvFull,
}

impl ConditionId {
    pub fn name(self) -> &'static str {
        match self {
            ConditionId::DriftBack => "drift_back",
            ConditionId::MomentUniform => "moment_uniform",
            ConditionId::WithinCycle => "within_cycle",
            ConditionId::WithinCycleMrv => "within_cycle_mrv",
            ConditionId::DriftAwayZ => "drift_away_z",
            ConditionId::CycleRegularity => "cycle_regularity",
            ConditionId::TauTightness => "tau_tightness",
            ConditionId::RegularityKernel => "regularity_kernel",
            ConditionId::JointRvFull => "joint_rv_full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One cell of the evaluated grid. Unused coordinates are left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cylinder: Option<usize>,
    /// Limit value the estimate is compared with, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    pub grid: Vec<GridPoint>,
    pub estimates: Vec<Estimate>,
    pub verdict: Verdict,
    pub rationale: String,
    /// Replicates that hit the step horizon before the event was decided.
    pub truncated: u64,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Small starting points `t u_t` with `u_t -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UFamily {
    InvSqrt,
    InvLog,
    Boundary,
}

impl UFamily {
    pub const ALL: [UFamily; 3] = [UFamily::InvSqrt, UFamily::InvLog, UFamily::Boundary];

    pub fn label(self) -> &'static str {
        match self {
            UFamily::InvSqrt => "t^-1/2",
            UFamily::InvLog => "1/log t",
            UFamily::Boundary => "y(t)",
        }
    }

    pub fn eval(self, kernel: &KernelSpec, t: f64) -> f64 {
        match self {
            UFamily::InvSqrt => t.powf(-0.5),
            UFamily::InvLog => 1.0 / t.ln(),
            UFamily::Boundary => kernel.extremal_boundary_value(t),
        }
    }
}

/// Range of the supremum in the moment condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupRange {
    /// `sup_{j >= m0} X_j^(b(t))`.
    #[default]
    ExtremalComponent,
    /// `sup_{m0 <= j < tau_A} X_j`.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub t_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub delta_grid: Vec<f64>,
    pub a: f64,
    pub delta: f64,
    /// Level `a` for the drift-away check, where paths start exactly at `t`.
    pub a_start: f64,
    pub m0: usize,
    pub sup_range: SupRange,
    pub u_family: Vec<UFamily>,
    pub eta_grid: Vec<f64>,
    pub cylinders: Vec<Vec<Interval>>,
    pub tolerance: f64,
    pub level: f64,
    pub n_reps: usize,
    /// Cap on transitions per replicate.
    pub horizon: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let all = Interval::everything();
        DiagnosticsConfig {
            t_grid: vec![1e2, 1e3, 1e4],
            m_grid: vec![1, 2, 4, 8, 16],
            delta_grid: vec![0.5, 0.1, 0.01],
            a: 1.0,
            delta: 0.5,
            a_start: 0.5,
            m0: 1,
            sup_range: SupRange::ExtremalComponent,
            u_family: UFamily::ALL.to_vec(),
            eta_grid: vec![0.25, 0.1],
            cylinders: vec![
                vec![Interval::above(1.0)],
                vec![Interval::above(1.0), all, Interval::above(0.5)],
                vec![Interval::above(0.5), Interval::above(0.25)],
                vec![all, all, Interval::above(0.5)],
            ],
            tolerance: DEFAULT_TOLERANCE,
            level: DEFAULT_LEVEL,
            n_reps: 10_000,
            horizon: 2_000,
        }
    }
}

impl DiagnosticsConfig {
    fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.t_grid) || self.t_grid.iter().any(|&t| t <= 1.0) || self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("t_grid must be strictly increasing with every t > 1"));
        }
        if !positive(&self.delta_grid) || !positive(&self.eta_grid) {
            return Err(Error::invalid("delta_grid and eta_grid must be positive"));
        }
        if self.m_grid.is_empty() || self.m_grid.contains(&0) {
            return Err(Error::invalid("m_grid must be non-empty with every m >= 1"));
        }
        if !(self.a > 0.0 && self.delta > 0.0 && self.a_start > 0.0) || self.m0 == 0 {
            return Err(Error::invalid("a, delta, a_start must be > 0 and m0 >= 1"));
        }
        if self.n_reps == 0 || self.horizon == 0 {
            return Err(Error::invalid("n_reps and horizon must be >= 1"));
        }
        if self.u_family.is_empty() {
            return Err(Error::invalid("u_family must be non-empty"));
        }
        Ok(())
    }

    fn largest_t(&self) -> f64 {
        self.t_grid.iter().copied().fold(f64::NAN, f64::max)
    }

    fn sorted_m(&self) -> Vec<usize> {
        let mut m = self.m_grid.clone();
        m.sort_unstable();
        m.dedup();
        m
    }
}

fn limit_verdict(e: &Estimate, tol: f64) -> Verdict {
    if e.ci_high < tol {
        Verdict::Pass
    } else if e.ci_low > tol {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Verdicts of the cells `keep` in the last `t` block of `estimates`,
/// which holds `n_t` equal blocks in increasing `t`. A failing cell whose
/// estimate still drops significantly from the previous `t` is
/// inconclusive. Returns the combined verdict and the largest decisive
/// estimate.
fn decide<K: Fn(usize) -> bool>(estimates: &[Estimate], n_t: usize, keep: K, tol: f64) -> (Verdict, Estimate) {
    let block = estimates.len() / n_t;
    let last = &estimates[(n_t - 1) * block..];
    let prev = (n_t > 1).then(|| &estimates[(n_t - 2) * block..(n_t - 1) * block]);
    let mut verdicts = Vec::new();
    let mut worst: Option<Estimate> = None;
    for k in (0..block).filter(|&k| keep(k)) {
        let e = last[k];
        let mut v = limit_verdict(&e, tol);
        if v == Verdict::Fail && prev.is_some_and(|p| e.ci_high < p[k].ci_low) {
            v = Verdict::Inconclusive;
        }
        verdicts.push(v);
        if worst.is_none_or(|w| e.value > w.value) {
            worst = Some(e);
        }
    }
    (combine(verdicts), worst.expect("at least one decisive cell"))
}

/// Worst verdict: any fail fails, then any inconclusive.
fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut out = Verdict::Pass;
    for v in verdicts {
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Inconclusive => out = Verdict::Inconclusive,
            Verdict::Pass => {}
        }
    }
    out
}

/// `X_0, ..., X_{tau_A}` (or up to `horizon` transitions), where `tau_A`
/// is the first `j >= 1` with `X_j` in the atom.
fn trace_cycle(kernel: &KernelSpec, x0: f64, horizon: usize, rng: &mut StreamRng) -> (Vec<f64>, bool) {
    let mut states = Vec::new();
    let mut closed = false;
    kernel.walk(x0, horizon, rng, |j, x| {
        states.push(x);
        closed = j >= 1 && kernel.in_atom(x);
        !closed
    });
    (states, !closed)
}

/// Length of the extremal component: the first `n >= 0` with `X_n <= level`.
fn downcrossing(states: &[f64], level: f64) -> usize {
    states.iter().position(|&x| x <= level).unwrap_or(states.len())
}

#[derive(Clone)]
struct Hits {
    hits: Vec<u64>,
    truncated: u64,
}

impl Hits {
    fn new(k: usize) -> Self {
        Hits {
            hits: vec![0; k],
            truncated: 0,
        }
    }

    fn merge(&mut self, other: Hits) {
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        self.truncated += other.truncated;
    }
}

/// Conditional probabilities of `k` events given `X_0 ~ H` restricted to
/// `(lo, hi]`. `events` fills one flag per event from a traced cycle.
fn conditional_hits<F>(
    kernel: &KernelSpec,
    lo: f64,
    hi: f64,
    k: usize,
    n: usize,
    horizon: usize,
    streams: &Streams,
    label: &str,
    events: F,
) -> Result<Hits>
where
    F: Fn(&[f64], bool, &mut [bool]) + Sync + Send,
{
    if kernel.h_return.mass_between(lo, hi) <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "H puts no mass on ({lo}, {hi}]: nothing to condition on"
        )));
    }
    Ok(streams.fold(
        label,
        n,
        || Hits::new(k),
        |acc, _, rng| {
            let x0 = kernel.h_return.sample_between(lo, hi, rng).unwrap_or(lo);
            let (states, truncated) = trace_cycle(kernel, x0, horizon, rng);
            let mut flags = vec![false; k];
            events(&states, truncated, &mut flags);
            for (h, f) in acc.hits.iter_mut().zip(flags) {
                *h += u64::from(f);
            }
            acc.truncated += u64::from(truncated);
        },
        Hits::merge,
    ))
}

/// Strata edges for `X_0`: `lo`, then doubling from `max(lo, start)` up to
/// `top`, then infinity.
fn strata(lo: f64, start: f64, top: f64) -> Vec<f64> {
    let mut edges = vec![lo];
    let mut e = start.max(lo);
    if e > lo {
        edges.push(e);
    }
    if e <= 0.0 {
        e = f64::MIN_POSITIVE;
    }
    while e < top {
        e = (e * 2.0).min(top);
        edges.push(e);
    }
    edges.push(f64::INFINITY);
    edges.dedup();
    edges
}

/// `t P_H[X_0 in (edges[0], edges.last()], event]` for `k` events at once,
/// with the strata of `edges`.
#[allow(clippy::too_many_arguments)]
fn stratified_scaled<F>(
    kernel: &KernelSpec,
    t: f64,
    edges: &[f64],
    k: usize,
    n_reps: usize,
    horizon: usize,
    level: f64,
    streams: &Streams,
    label: &str,
    events: F,
) -> (Vec<Estimate>, u64)
where
    F: Fn(&[f64], bool, &mut [bool]) + Sync + Send,
{
    let h = &kernel.h_return;
    let cells: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .map(|w| (w[0], w[1], h.mass_between(w[0], w[1])))
        .filter(|c| c.2 > 0.0)
        .collect();
    let per = (n_reps / cells.len().max(1)).max(200);
    let mut value = vec![0.0; k];
    let mut var = vec![0.0; k];
    let mut truncated = 0;
    for (i, &(lo, hi, w)) in cells.iter().enumerate() {
        let hits = conditional_hits(kernel, lo, hi, k, per, horizon, streams, &format!("{label}/s{i}"), &events)
            .expect("stratum has mass");
        truncated += hits.truncated;
        for e in 0..k {
            let p = hits.hits[e] as f64 / per as f64;
            value[e] += t * w * p;
            var[e] += (t * w).powi(2) * p * (1.0 - p) / per as f64;
        }
    }
    let z = z_value(level);
    let est = value
        .into_iter()
        .zip(var)
        .map(|(v, s2)| {
            let se = s2.sqrt();
            Estimate {
                value: v,
                std_error: se,
                ci_low: (v - z * se).max(0.0),
                ci_high: v + z * se,
                level,
            }
        })
        .collect();
    (est, truncated)
}

/// `P[sup_{j >= m} X_j^(b(t)) / b(t) > a | X_0 > delta b(t)]` over `(m, t)`.
pub fn check_drift_back(
    kernel: &KernelSpec,
    b: &ScalingFunction,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    let ms = cfg.sorted_m();
    let t_max = cfg.largest_t();
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    let mut truncated = 0;
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        let bt = b.b(t);
        let level = kernel.downcrossing_level(bt);
        let thr = cfg.a * bt;
        let hits = conditional_hits(
            kernel,
            cfg.delta * bt,
            f64::INFINITY,
            ms.len(),
            cfg.n_reps,
            cfg.horizon,
            streams,
            &format!("drift-back/t{ti}"),
            |s, _, flags| {
                let tau = downcrossing(s, level);
                for (f, &m) in flags.iter_mut().zip(&ms) {
                    *f = s[..tau].iter().skip(m).any(|&x| x > thr);
                }
            },
        )?;
        truncated += hits.truncated;
        for (&m, &h) in ms.iter().zip(&hits.hits) {
            let e = proportion(h, cfg.n_reps as u64, cfg.level);
            grid.push(GridPoint {
                t: Some(t),
                m: Some(m),
                a: Some(cfg.a),
                delta: Some(cfg.delta),
                ..GridPoint::default()
            });
            estimates.push(e);
        }
    }
    let k_last = ms.len() - 1;
    let (verdict, worst) = decide(&estimates, cfg.t_grid.len(), |k| k == k_last, cfg.tolerance);
    Ok(ConditionReport {
        condition_id: ConditionId::DriftBack,
        rationale: format!(
            "conditional exceedance after step m given a start above delta b(t); at t = {t_max}, largest m: {}",
            summary(&worst, cfg.tolerance)
        ),
        grid,
        estimates,
        verdict,
        truncated,
    })
}

fn summary(e: &Estimate, tol: f64) -> String {
    format!("{:.3e} in [{:.3e}, {:.3e}] vs tolerance {tol}", e.value, e.ci_low, e.ci_high)
}

/// `t P[X_0 / b(t) <= delta, sup_{j >= m0} X_j^(b(t)) / b(t) > a]` over
/// `(delta, t)`. With [`SupRange::Cycle`] the supremum runs over
/// `m0 <= j < tau_A` of the chain itself.
pub fn check_moment_uniform(
    kernel: &KernelSpec,
    b: &ScalingFunction,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    let t_max = cfg.largest_t();
    let d_min = cfg.delta_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    let mut truncated = 0;
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        let bt = b.b(t);
        let level = kernel.downcrossing_level(bt);
        let thr = cfg.a * bt;
        for (di, &delta) in cfg.delta_grid.iter().enumerate() {
            let start = match cfg.sup_range {
                SupRange::ExtremalComponent => level,
                SupRange::Cycle => kernel.atom_upper,
            };
            let top = delta * bt;
            let mut edges = strata(-1.0, start, top);
            edges.retain(|&e| e <= top);
            edges.push(top);
            edges.dedup();
            let (est, tr) = stratified_scaled(
                kernel,
                t,
                &edges,
                1,
                cfg.n_reps,
                cfg.horizon,
                cfg.level,
                streams,
                &format!("moment-uniform/t{ti}/d{di}"),
                |s, tr, flags| {
                    let end = match cfg.sup_range {
                        SupRange::ExtremalComponent => downcrossing(s, level),
                        SupRange::Cycle => cycle_end(s, tr),
                    };
                    flags[0] = s[..end].iter().skip(cfg.m0).any(|&x| x > thr);
                },
            );
            truncated += tr;
            grid.push(GridPoint {
                t: Some(t),
                m: Some(cfg.m0),
                a: Some(cfg.a),
                delta: Some(delta),
                ..GridPoint::default()
            });
            estimates.push(est[0]);
        }
    }
    let d_idx = cfg.delta_grid.iter().position(|&d| d == d_min).unwrap();
    let (verdict, e) = decide(&estimates, cfg.t_grid.len(), |k| k == d_idx, cfg.tolerance);
    Ok(ConditionReport {
        condition_id: ConditionId::MomentUniform,
        verdict,
        rationale: format!(
            "t-scaled joint probability of a small start and a late exceedance; at t = {t_max}, delta = {d_min}: {}",
            summary(&e, cfg.tolerance)
        ),
        grid,
        estimates,
        truncated,
    })
}

/// Index of the state in the atom that closes the traced cycle, or the
/// trace length when it was truncated.
fn cycle_end(states: &[f64], truncated_trace: bool) -> usize {
    if truncated_trace {
        states.len()
    } else {
        states.len() - 1
    }
}

/// The post-downcrossing, pre-atom segment: conditionally on a large start,
/// and `t`-scaled under `H`.
pub fn check_within_cycle(
    kernel: &KernelSpec,
    b: &ScalingFunction,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
) -> Result<(ConditionReport, ConditionReport)> {
    kernel.validate()?;
    cfg.validate()?;
    let t_max = cfg.largest_t();
    let horizon = cfg.horizon;
    let mut cond = (Vec::new(), Vec::new(), 0u64);
    let mut mrv = (Vec::new(), Vec::new(), 0u64);
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        let bt = b.b(t);
        let level = kernel.downcrossing_level(bt);
        let thr = cfg.a * bt;
        let event = move |s: &[f64], tr: bool, flags: &mut [bool]| {
            let end = cycle_end(s, tr);
            let tau = downcrossing(s, level);
            flags[0] = tau + 1 < end && s[tau + 1..end].iter().any(|&x| x > thr);
        };
        let hits = conditional_hits(
            kernel,
            cfg.delta * bt,
            f64::INFINITY,
            1,
            cfg.n_reps,
            horizon,
            streams,
            &format!("within-cycle/t{ti}"),
            event,
        )?;
        let e = proportion(hits.hits[0], cfg.n_reps as u64, cfg.level);
        let gp = GridPoint {
            t: Some(t),
            a: Some(cfg.a),
            delta: Some(cfg.delta),
            ..GridPoint::default()
        };
        cond.0.push(gp);
        cond.1.push(e);
        cond.2 += hits.truncated;
        let edges = strata(-1.0, kernel.atom_upper, bt * 1024.0);
        let (est, tr) = stratified_scaled(
            kernel,
            t,
            &edges,
            1,
            cfg.n_reps,
            horizon,
            cfg.level,
            streams,
            &format!("within-cycle-mrv/t{ti}"),
            event,
        );
        mrv.0.push(GridPoint {
            t: Some(t),
            a: Some(cfg.a),
            ..GridPoint::default()
        });
        mrv.1.push(est[0]);
        mrv.2 += tr;
    }
    let empty_note = if kernel.downcrossing_level(b.b(t_max)) <= kernel.atom_upper {
        "; the downcrossing level is sup A, so the segment is empty by construction"
    } else {
        ""
    };
    let n_t = cfg.t_grid.len();
    let (cv, c) = decide(&cond.1, n_t, |_| true, cfg.tolerance);
    let (mv, m) = decide(&mrv.1, n_t, |_| true, cfg.tolerance);
    Ok((
        ConditionReport {
            condition_id: ConditionId::WithinCycle,
            grid: cond.0,
            estimates: cond.1,
            verdict: cv,
            rationale: format!(
                "exceedance between the downcrossing and the return to the atom, given a start above delta b(t); at t = {t_max}: {}{empty_note}",
                summary(&c, cfg.tolerance)
            ),
            truncated: cond.2,
        },
        ConditionReport {
            condition_id: ConditionId::WithinCycleMrv,
            grid: mrv.0,
            estimates: mrv.1,
            verdict: mv,
            rationale: format!(
                "t-scaled exceedance between the downcrossing and the return to the atom; at t = {t_max}: {}{empty_note}",
                summary(&m, cfg.tolerance)
            ),
            truncated: mrv.2,
        },
    ))
}

/// Paths started at `x0`, with `flags` filled from the traced cycle.
fn fixed_start_hits<F>(
    kernel: &KernelSpec,
    x0: f64,
    k: usize,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
    label: &str,
    events: F,
) -> Hits
where
    F: Fn(&[f64], bool, &mut [bool]) + Sync + Send,
{
    streams.fold(
        label,
        cfg.n_reps,
        || Hits::new(k),
        |acc, _, rng| {
            let (states, truncated) = trace_cycle(kernel, x0, cfg.horizon, rng);
            let mut flags = vec![false; k];
            events(&states, truncated, &mut flags);
            for (h, f) in acc.hits.iter_mut().zip(flags) {
                *h += u64::from(f);
            }
            acc.truncated += u64::from(truncated);
        },
        Hits::merge,
    )
}

/// `P_t[sup_{m <= j < tau_A} X_j > t a]`, started exactly at `t`.
pub fn check_drift_away_z(kernel: &KernelSpec, cfg: &DiagnosticsConfig, streams: &Streams) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    let ms = cfg.sorted_m();
    let t_max = cfg.largest_t();
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    let mut truncated = 0;
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        let thr = cfg.a_start * t;
        let hits = fixed_start_hits(kernel, t, ms.len(), cfg, streams, &format!("drift-away/t{ti}"), |s, tr, flags| {
            let end = cycle_end(s, tr);
            for (f, &m) in flags.iter_mut().zip(&ms) {
                *f = s[..end].iter().skip(m).any(|&x| x > thr);
            }
        });
        truncated += hits.truncated;
        for (&m, &h) in ms.iter().zip(&hits.hits) {
            let e = proportion(h, cfg.n_reps as u64, cfg.level);
            grid.push(GridPoint {
                t: Some(t),
                m: Some(m),
                a: Some(cfg.a_start),
                ..GridPoint::default()
            });
            estimates.push(e);
        }
    }
    let k_last = ms.len() - 1;
    let (verdict, e) = decide(&estimates, cfg.t_grid.len(), |k| k == k_last, cfg.tolerance);
    let regime = if kernel.g_zero() > 0.0 {
        "; G({0}) > 0, so this condition is outside its intended regime"
    } else {
        ""
    };
    Ok(ConditionReport {
        condition_id: ConditionId::DriftAwayZ,
        verdict,
        rationale: format!(
            "exceedance of t a at or after step m from X_0 = t; at t = {t_max}, largest m: {}{regime}",
            summary(&e, cfg.tolerance)
        ),
        grid,
        estimates,
        truncated,
    })
}

/// `P_{t u_t}[tau_A > m]` over `(u, m, t)`.
pub fn check_tau_tightness(kernel: &KernelSpec, cfg: &DiagnosticsConfig, streams: &Streams) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    let ms = cfg.sorted_m();
    let t_max = cfg.largest_t();
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    let mut truncated = 0;
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        for (ui, &u) in cfg.u_family.iter().enumerate() {
            let x0 = t * u.eval(kernel, t);
            let hits = fixed_start_hits(kernel, x0, ms.len(), cfg, streams, &format!("tau-tight/t{ti}/u{ui}"), |s, tr, flags| {
                let tau_a = if tr { usize::MAX } else { s.len() - 1 };
                for (f, &m) in flags.iter_mut().zip(&ms) {
                    *f = tau_a > m;
                }
            });
            truncated += hits.truncated;
            for (&m, &h) in ms.iter().zip(&hits.hits) {
                let e = proportion(h, cfg.n_reps as u64, cfg.level);
                grid.push(GridPoint {
                    t: Some(t),
                    m: Some(m),
                    u: Some(u.label().to_string()),
                    ..GridPoint::default()
                });
                estimates.push(e);
            }
        }
    }
    let n_m = ms.len();
    let (verdict, worst) = decide(&estimates, cfg.t_grid.len(), |k| k % n_m == n_m - 1, cfg.tolerance);
    Ok(ConditionReport {
        condition_id: ConditionId::TauTightness,
        verdict,
        rationale: format!(
            "probability that the return to the atom takes more than m steps from t u_t; worst at t = {t_max}, largest m: {}",
            summary(&worst, cfg.tolerance)
        ),
        grid,
        estimates,
        truncated,
    })
}

/// `P_{t u_t}[sup_{1 <= j < tau_A} X_j > t a]` for each `u_t`, with the
/// return-time tightness as the alternative route.
pub fn check_cycle_regularity(
    kernel: &KernelSpec,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    let t_max = cfg.largest_t();
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    let mut truncated = 0;
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        let thr = cfg.a * t;
        for (ui, &u) in cfg.u_family.iter().enumerate() {
            let x0 = t * u.eval(kernel, t);
            let hits = fixed_start_hits(kernel, x0, 1, cfg, streams, &format!("cycle-reg/t{ti}/u{ui}"), |s, tr, flags| {
                let end = cycle_end(s, tr);
                flags[0] = s[..end].iter().skip(1).any(|&x| x > thr);
            });
            truncated += hits.truncated;
            let e = proportion(hits.hits[0], cfg.n_reps as u64, cfg.level);
            grid.push(GridPoint {
                t: Some(t),
                a: Some(cfg.a),
                u: Some(u.label().to_string()),
                ..GridPoint::default()
            });
            estimates.push(e);
        }
    }
    let (direct, _) = decide(&estimates, cfg.t_grid.len(), |_| true, cfg.tolerance);
    let tight = check_tau_tightness(kernel, cfg, streams)?;
    grid.extend(tight.grid);
    estimates.extend(tight.estimates);
    let verdict = match (direct, tight.verdict) {
        (Verdict::Pass, _) | (_, Verdict::Pass) => Verdict::Pass,
        (Verdict::Fail, Verdict::Fail) => Verdict::Fail,
        _ => Verdict::Inconclusive,
    };
    let regime = if kernel.g_zero() == 0.0 {
        "; G({0}) = 0, so this condition is outside its intended regime"
    } else {
        ""
    };
    Ok(ConditionReport {
        condition_id: ConditionId::CycleRegularity,
        verdict,
        rationale: format!(
            "at t = {t_max}, direct route (exceedance of t a before the atom from t u_t): {}; return-time tightness route: {}{regime}",
            direct.name(),
            tight.verdict.name()
        ),
        grid,
        estimates,
        truncated: truncated + tight.truncated,
    })
}

/// `P[step(t u_t) / t > eta]` over `(u, eta, t)`.
pub fn check_regularity_kernel(kernel: &KernelSpec, cfg: &DiagnosticsConfig, streams: &Streams) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    let t_max = cfg.largest_t();
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        for (ui, &u) in cfg.u_family.iter().enumerate() {
            let x0 = t * u.eval(kernel, t);
            let etas = &cfg.eta_grid;
            let hits = streams.fold(
                &format!("regularity/t{ti}/u{ui}"),
                cfg.n_reps,
                || vec![0u64; etas.len()],
                |acc, _, rng| {
                    let y = kernel.step(x0, rng) / t;
                    for (h, &eta) in acc.iter_mut().zip(etas) {
                        *h += u64::from(y > eta);
                    }
                },
                |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            );
            for (&eta, &h) in etas.iter().zip(&hits) {
                let e = proportion(h, cfg.n_reps as u64, cfg.level);
                grid.push(GridPoint {
                    t: Some(t),
                    u: Some(u.label().to_string()),
                    eta: Some(eta),
                    ..GridPoint::default()
                });
                estimates.push(e);
            }
        }
    }
    let (verdict, worst) = decide(&estimates, cfg.t_grid.len(), |_| true, cfg.tolerance);
    Ok(ConditionReport {
        condition_id: ConditionId::RegularityKernel,
        verdict,
        rationale: format!(
            "one-step mass above eta t from t u_t; worst at t = {t_max}: {}",
            summary(&worst, cfg.tolerance)
        ),
        grid,
        estimates,
        truncated: 0,
    })
}

/// Limit of `t P_H[X^(b(t)) / b(t) in C]`. Cylinders bounded away from 0 in
/// the first coordinate use `mu`; a single restricted coordinate
/// `(x, inf]` at `j >= 1` uses `(E xi^alpha)^j x^(-alpha)`.
fn cylinder_reference(
    kernel: &KernelSpec,
    alpha: f64,
    cylinder: &[Interval],
    n_reps: usize,
    streams: &Streams,
) -> Result<Estimate> {
    let first = cylinder[0];
    if first.lo > 0.0 {
        return mu_cylinder(alpha, &kernel.z_law, cylinder, n_reps, streams);
    }
    let restricted: Vec<usize> = (0..cylinder.len())
        .filter(|&j| cylinder[j] != Interval::everything())
        .collect();
    match restricted.as_slice() {
        [j] if *j >= 1 && cylinder[*j].hi.is_infinite() && cylinder[*j].lo > 0.0 => {
            let m = kernel.z_law.moment(alpha).ok_or_else(|| {
                Error::MomentNotCertified(format!("E xi^{alpha} is infinite"))
            })?;
            Ok(Estimate::exact(m.powi(*j as i32) * cylinder[*j].lo.powf(-alpha)))
        }
        _ => Err(Error::invalid(
            "cylinders must exclude 0 in the first coordinate or restrict a single later coordinate to (x, inf]",
        )),
    }
}

/// `t`-scaled empirical cylinder masses of the extremal component against
/// their limits.
pub fn check_joint_rv_full(
    kernel: &KernelSpec,
    alpha: f64,
    b: &ScalingFunction,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
) -> Result<ConditionReport> {
    kernel.validate()?;
    cfg.validate()?;
    if cfg.cylinders.is_empty() || cfg.cylinders.iter().any(|c| c.is_empty()) {
        return Err(Error::invalid("cylinders must be non-empty"));
    }
    let t_max = cfg.largest_t();
    let z = z_value(cfg.level);
    let mut grid = Vec::new();
    let mut estimates = Vec::new();
    let mut verdicts = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for (ci, cyl) in cfg.cylinders.iter().enumerate() {
        let reference = cylinder_reference(kernel, alpha, cyl, cfg.n_reps, &streams.child(&format!("joint-ref/{ci}")))?;
        for (ti, &t) in cfg.t_grid.iter().enumerate() {
            let bt = b.b(t);
            let level = kernel.downcrossing_level(bt);
            let lo = if cyl[0].lo > 0.0 { (cyl[0].lo * bt).max(level) } else { level };
            let edges = strata(lo, lo, lo.max(bt) * 1024.0);
            let steps = cyl.len() - 1;
            let cyl_ref = cyl.clone();
            let (est, tr) = stratified_scaled(
                kernel,
                t,
                &edges,
                1,
                cfg.n_reps,
                steps.max(1),
                cfg.level,
                streams,
                &format!("joint/{ci}/t{ti}"),
                move |s, _, flags| {
                    let tau = downcrossing(s, level);
                    flags[0] = cyl_ref.iter().enumerate().all(|(j, iv)| {
                        let x = if j < tau && j < s.len() { s[j] } else { 0.0 };
                        iv.contains(x / bt)
                    });
                },
            );
            let _ = tr;
            let e = est[0];
            grid.push(GridPoint {
                t: Some(t),
                cylinder: Some(ci),
                reference: Some(reference),
                ..GridPoint::default()
            });
            estimates.push(e);
            if t == t_max {
                let gap = (e.value - reference.value).abs();
                let allowed = z * (e.std_error.powi(2) + reference.std_error.powi(2)).sqrt() + cfg.tolerance;
                worst_gap = worst_gap.max(gap - allowed);
                verdicts.push(if gap <= allowed { Verdict::Pass } else { Verdict::Fail });
            }
        }
    }
    Ok(ConditionReport {
        condition_id: ConditionId::JointRvFull,
        verdict: combine(verdicts),
        rationale: format!(
            "t-scaled cylinder masses of the extremal component against their limits at t = {t_max}; largest excess over the joint interval plus tolerance: {worst_gap:.3e}"
        ),
        grid,
        estimates,
        truncated: 0,
    })
}

/// Every checker with the settings in `cfg`.
pub fn run_all(
    kernel: &KernelSpec,
    alpha: f64,
    b: &ScalingFunction,
    cfg: &DiagnosticsConfig,
    streams: &Streams,
) -> Result<Vec<ConditionReport>> {
    let (within, within_mrv) = check_within_cycle(kernel, b, cfg, &streams.child("within"))?;
    Ok(vec![
        check_drift_back(kernel, b, cfg, &streams.child("drift-back"))?,
        check_moment_uniform(kernel, b, cfg, &streams.child("moment-uniform"))?,
        within,
        within_mrv,
        check_drift_away_z(kernel, cfg, &streams.child("drift-away"))?,
        check_cycle_regularity(kernel, cfg, &streams.child("cycle-regularity"))?,
        check_regularity_kernel(kernel, cfg, &streams.child("regularity"))?,
        check_joint_rv_full(kernel, alpha, b, cfg, &streams.child("joint"))?,
    ])
}

/// Plain-text table, one line per report.
pub fn format_table(reports: &[ConditionReport], color: bool) -> String {
    let mut out = format!("{:<18} {:<13} {}\n", "condition", "verdict", "rationale");
    for r in reports {
        let v = r.verdict.name();
        let shown = if color {
            let code = match r.verdict {
                Verdict::Pass => "32",
                Verdict::Fail => "31",
                Verdict::Inconclusive => "33",
            };
            format!("\x1b[{code}m{v:<13}\x1b[0m")
        } else {
            format!("{v:<13}")
        };
        out.push_str(&format!("{:<18} {shown} {}\n", r.condition_id.name(), r.rationale));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BuiltinKernel, ExtremalBoundary, Perturbation, TailDistribution};

    fn light() -> DiagnosticsConfig {
        DiagnosticsConfig {
            n_reps: 3000,
            t_grid: vec![1e3, 1e4],
            ..DiagnosticsConfig::default()
        }
    }

    fn pareto_b() -> ScalingFunction {
        ScalingFunction::pareto(1.0, 1.0)
    }

    fn jumpy(exponent: f64, probability: f64) -> KernelSpec {
        KernelSpec::new(
            TailDistribution::point(0.5),
            Perturbation::PowerJump {
                exponent,
                probability,
            },
            1.0,
            TailDistribution::pareto(1.0),
        )
    }

    #[test]
    fn contraction_passes_everything() {
        let built = BuiltinKernel::DetContract.default_kernel();
        let reports = run_all(&built.spec, 1.0, &pareto_b(), &light(), &Streams::new(1)).unwrap();
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(r.passed(), "{}: {}", r.condition_id.name(), r.rationale);
            assert!(r.estimates.iter().all(|e| e.value >= 0.0));
        }
    }

    #[test]
    fn unit_multiplier_fails_drift_back() {
        let built = BuiltinKernel::ConstFail.default_kernel();
        let r = check_drift_back(&built.spec, &pareto_b(), &light(), &Streams::new(1)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        // estimates stay near P[X_0 > b | X_0 > b / 2] = 1/2 for every m
        assert!(r.estimates.iter().all(|e| e.contains(0.5)));
        let r = check_drift_away_z(&built.spec, &light(), &Streams::new(1)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn geometric_survival_bound() {
        let built = BuiltinKernel::GeoKill.default_kernel();
        let r = check_drift_back(&built.spec, &pareto_b(), &light(), &Streams::new(4)).unwrap();
        for (g, e) in r.grid.iter().zip(&r.estimates) {
            assert!(e.ci_low <= 0.7f64.powi(g.m.unwrap() as i32), "{g:?} {e:?}");
        }
        assert!(r.passed());
    }

    #[test]
    fn rebound_after_downcrossing_fails_within_cycle() {
        let k = jumpy(2.0, 0.05).with_boundary(ExtremalBoundary::Power {
            coefficient: 4.0,
            exponent: 0.5,
        });
        let (within, _) = check_within_cycle(&k, &pareto_b(), &light(), &Streams::new(2)).unwrap();
        assert_eq!(within.verdict, Verdict::Fail, "{}", within.rationale);
    }

    #[test]
    fn heavy_proportional_noise_fails_moment_uniform() {
        let k = KernelSpec::new(
            TailDistribution::point(0.5),
            Perturbation::Proportional {
                w_law: TailDistribution::Pareto {
                    alpha: 0.5,
                    scale: 0.01,
                },
            },
            1.0,
            TailDistribution::pareto(1.0),
        );
        let r = check_moment_uniform(&k, &pareto_b(), &light(), &Streams::new(3)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{}", r.rationale);
    }

    #[test]
    fn scale_jump_fails_regularity() {
        let r = check_regularity_kernel(&jumpy(2.0, 0.5), &light(), &Streams::new(5)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let r = check_cycle_regularity(&jumpy(2.5, 0.5), &light(), &Streams::new(5)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{}", r.rationale);
    }

    #[test]
    fn exact_cylinder_limits() {
        let built = BuiltinKernel::DetContract.default_kernel();
        let cfg = light();
        let r = check_joint_rv_full(&built.spec, 1.0, &pareto_b(), &cfg, &Streams::new(6)).unwrap();
        // (1, inf] -> 1; j = 2 marginal (0.5, inf] -> (1/2)^2 * 2
        let refs: Vec<f64> = r.grid.iter().map(|g| g.reference.unwrap().value).collect();
        assert!((refs[0] - 1.0).abs() < 1e-12);
        assert!((refs.last().unwrap() - 0.5).abs() < 1e-12);
        assert!(r.passed(), "{}", r.rationale);
    }

    #[test]
    fn cylinder_must_avoid_origin() {
        let built = BuiltinKernel::DetContract.default_kernel();
        let cfg = DiagnosticsConfig {
            cylinders: vec![vec![Interval::everything(), Interval::closed(0.0, 1.0)]],
            ..light()
        };
        assert!(check_joint_rv_full(&built.spec, 1.0, &pareto_b(), &cfg, &Streams::new(6)).is_err());
    }

    #[test]
    fn decreasing_failure_is_inconclusive() {
        let e = |v: f64| Estimate::normal(v, 0.001, 0.99);
        let (v, _) = decide(&[e(0.5), e(0.2)], 2, |_| true, 0.01);
        assert_eq!(v, Verdict::Inconclusive);
        let (v, _) = decide(&[e(0.2), e(0.2)], 2, |_| true, 0.01);
        assert_eq!(v, Verdict::Fail);
        let (v, _) = decide(&[e(0.2), Estimate::exact(0.0)], 2, |_| true, 0.01);
        assert_eq!(v, Verdict::Pass);
    }
}
