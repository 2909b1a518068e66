//! Exceedance point processes `N_n` and the cluster Poisson limits
//! `eta*_delta` and `eta*`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{ChainPath, KernelSpec, TailDistribution};
use crate::measure_oracle::{certify_delta, sample_nu_alpha, DeltaCertificate, TailMoments, DEFAULT_TRUNCATION_TOLERANCE};
use crate::stats::{chi_square_homogeneity, ChiSquareTest};
use crate::tail_chain::TailChainOptions;

pub const MIN_COMPARISON_REPS: usize = 500;
pub const COMPARISON_LEVEL: f64 = 0.01;

/// `[0, s_max] x (mark_floor, inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub s_max: f64,
    pub mark_floor: f64,
}

impl Window {
    pub fn new(s_max: f64, mark_floor: f64) -> Self {
        Window { s_max, mark_floor }
    }

    fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::invalid("s_max must be finite and > 0"));
        }
        if !(self.mark_floor > 0.0) {
            return Err(Error::invalid("mark_floor must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    EmpiricalNn,
    LimitEtaDelta,
    LimitEta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub time: f64,
    pub mark: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stack_id: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatternMeta {
    pub n: Option<usize>,
    pub b_n: Option<f64>,
    pub alpha: Option<f64>,
    pub q: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<Point>,
    pub window: Window,
    pub kind: PatternKind,
    pub meta: PatternMeta,
}

impl PointPattern {
    pub fn empty(window: Window, kind: PatternKind) -> Self {
        PointPattern {
            points: Vec::new(),
            window,
            kind,
            meta: PatternMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_limit(&self) -> bool {
        self.kind != PatternKind::EmpiricalNn
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "mark", "stack_id"])?;
        for p in &self.points {
            w.write_record([
                p.time.to_string(),
                p.mark.to_string(),
                p.stack_id.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Points `(j / n, X_j / b_n)` for `1 <= j <= s_max n` with mark above the floor.
pub fn build_nn(path: &ChainPath, n: usize, b_n: f64, window: Window) -> Result<PointPattern> {
    window.validate()?;
    if n == 0 || !(b_n > 0.0) {
        return Err(Error::invalid("n must be >= 1 and b_n > 0"));
    }
    let j_max = (window.s_max * n as f64).floor() as usize;
    if path.states.len() < j_max + 1 {
        return Err(Error::PathTooShort {
            needed: j_max + 1,
            available: path.states.len(),
        });
    }
    let points = (1..=j_max)
        .filter_map(|j| {
            let mark = path.states[j] / b_n;
            (mark > window.mark_floor).then_some(Point {
                time: j as f64 / n as f64,
                mark,
                stack_id: None,
            })
        })
        .collect();
    Ok(nn_pattern(points, window, n, b_n))
}

fn nn_pattern(points: Vec<Point>, window: Window, n: usize, b_n: f64) -> PointPattern {
    PointPattern {
        points,
        window,
        kind: PatternKind::EmpiricalNn,
        meta: PatternMeta {
            n: Some(n),
            b_n: Some(b_n),
            ..PatternMeta::default()
        },
    }
}

/// `N_n^delta`: only points in cycles whose first state is at least
/// `delta b_n`. The segment before the first atom visit counts as a cycle
/// started at `X_0`.
pub fn build_nn_delta(path: &ChainPath, n: usize, b_n: f64, window: Window, delta: f64) -> Result<PointPattern> {
    let mut full = build_nn(path, n, b_n, window)?;
    let j_max = (window.s_max * n as f64).floor() as usize;
    let mut keep = vec![false; j_max + 1];
    let mut cycle_ok = path.states[0] >= delta * b_n;
    for (j, k) in keep.iter_mut().enumerate() {
        if j > 0 && path.atom_flags[j - 1] {
            cycle_ok = path.states[j] >= delta * b_n;
        }
        *k = cycle_ok;
    }
    full.points.retain(|p| keep[(p.time * n as f64).round() as usize]);
    full.meta.delta = Some(delta);
    Ok(full)
}

/// `N_n` from a fresh chain started at `H`, without storing the path.
pub fn simulate_nn<R: Rng + ?Sized>(
    kernel: &KernelSpec,
    n: usize,
    b_n: f64,
    window: Window,
    rng: &mut R,
) -> Result<PointPattern> {
    window.validate()?;
    if n == 0 || !(b_n > 0.0) {
        return Err(Error::invalid("n must be >= 1 and b_n > 0"));
    }
    let j_max = (window.s_max * n as f64).floor() as usize;
    let x0 = kernel.h_return.sample(rng);
    let mut points = Vec::new();
    let level = window.mark_floor * b_n;
    kernel.walk(x0, j_max, rng, |j, x| {
        if j > 0 && x > level {
            points.push(Point {
                time: j as f64 / n as f64,
                mark: x / b_n,
                stack_id: None,
            });
        }
        true
    });
    Ok(nn_pattern(points, window, n, b_n))
}

/// One vertical stack `i_k xi_k(j)` at time `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStack {
    pub time: f64,
    pub seed_mark: f64,
    /// Marks above the floor, in order of `j`; `marks[0]` is the seed.
    pub marks: Vec<f64>,
    /// `tau*`, the first `j` with `xi(j) = 0`; `None` for infinity.
    pub death_time: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LimitMode {
    /// Exact `eta*_delta`.
    EtaDelta,
    /// `eta*` through `eta*_delta` with `delta` chosen so that fewer than
    /// `tolerance` points above `level` are expected to be missed.
    EtaApprox { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub pattern: PointPattern,
    pub stacks: Vec<ClusterStack>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<DeltaCertificate>,
}

/// Parameters of the cluster Poisson limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitProcess {
    pub alpha: f64,
    pub q: f64,
    pub g: TailDistribution,
    #[serde(default)]
    pub chain: TailChainOptions,
}

impl LimitProcess {
    pub fn new(alpha: f64, q: f64, g: TailDistribution) -> Self {
        LimitProcess {
            alpha,
            q,
            g,
            chain: TailChainOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return Err(Error::invalid("q must be finite and >= 1"));
        }
        self.g.validate()
    }

    /// Stack for seed mark `seed` at `time`, keeping marks above `floor`.
    pub fn stack<R: Rng + ?Sized>(&self, time: f64, seed: f64, floor: f64, rng: &mut R) -> ClusterStack {
        let mut marks = Vec::new();
        if seed > floor {
            marks.push(seed);
        }
        let mut prod = 1.0;
        let mut death_time = None;
        for n in 1..=self.chain.horizon {
            prod *= self.g.sample(rng);
            if prod == 0.0 {
                death_time = Some(n);
                break;
            }
            let m = seed * prod;
            if m > floor {
                marks.push(m);
            }
            if prod < self.chain.kill_epsilon && n >= self.chain.horizon_min {
                break;
            }
        }
        ClusterStack {
            time,
            seed_mark: seed,
            marks,
            death_time,
        }
    }

    /// Stacks whose seeds fall in `(lo, hi]`, over `[0, s_max]`.
    pub fn stacks_between<R: Rng + ?Sized>(
        &self,
        s_max: f64,
        lo: f64,
        hi: f64,
        floor: f64,
        rng: &mut R,
    ) -> Result<Vec<ClusterStack>> {
        if !(lo > 0.0) {
            return Err(Error::invalid("delta must be > 0: the limit has infinitely many stacks"));
        }
        let mass = crate::measure_oracle::nu_alpha_mass(self.alpha, lo, hi);
        let mean = s_max / self.q * mass;
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
                .sample(rng) as usize
        } else {
            0
        };
        let mut stacks: Vec<ClusterStack> = (0..count)
            .map(|_| {
                let time = s_max * rng.random::<f64>();
                let seed = sample_nu_alpha(self.alpha, lo, hi, rng);
                self.stack(time, seed, floor, rng)
            })
            .collect();
        stacks.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(stacks)
    }

    pub fn pattern_from_stacks(&self, stacks: &[ClusterStack], window: Window, kind: PatternKind, delta: f64) -> PointPattern {
        let points = stacks
            .iter()
            .enumerate()
            .flat_map(|(id, s)| {
                s.marks.iter().map(move |&mark| Point {
                    time: s.time,
                    mark,
                    stack_id: Some(id),
                })
            })
            .collect();
        PointPattern {
            points,
            window,
            kind,
            meta: PatternMeta {
                alpha: Some(self.alpha),
                q: Some(self.q),
                delta: Some(delta),
                ..PatternMeta::default()
            },
        }
    }

    /// `eta*_delta` on `window`: Poisson seeds with mean
    /// `(s_max / q) delta^(-alpha)`, uniform times, marks from `nu_alpha`
    /// restricted to `(delta, inf]`, each compounded by a tail chain.
    pub fn sample_eta_delta<R: Rng + ?Sized>(&self, window: Window, delta: f64, rng: &mut R) -> Result<LimitSample> {
        self.validate()?;
        window.validate()?;
        let stacks = self.stacks_between(window.s_max, delta, f64::INFINITY, window.mark_floor, rng)?;
        let pattern = self.pattern_from_stacks(&stacks, window, PatternKind::LimitEtaDelta, delta);
        Ok(LimitSample {
            pattern,
            stacks,
            certificate: None,
        })
    }
}

/// Samples `eta*_delta` exactly, or `eta*` with a certified `delta`.
pub fn sample_limit<R: Rng + ?Sized>(
    process: &LimitProcess,
    window: Window,
    delta: f64,
    mode: LimitMode,
    moments: Option<&TailMoments>,
    rng: &mut R,
) -> Result<LimitSample> {
    process.validate()?;
    window.validate()?;
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be > 0: the limit has infinitely many stacks"));
    }
    match mode {
        LimitMode::EtaDelta => process.sample_eta_delta(window, delta, rng),
        LimitMode::EtaApprox { level } => {
            let owned;
            let moments = match moments {
                Some(m) => m,
                None => {
                    owned = TailMoments::for_law(&process.g, process.alpha, 100_000, &crate::rng::Streams::new(0))?;
                    &owned
                }
            };
            let cert = certify_delta(
                moments,
                process.alpha,
                window.s_max,
                process.q,
                level,
                delta,
                DEFAULT_TRUNCATION_TOLERANCE,
            )?;
            let mut s = process.sample_eta_delta(window, cert.delta, rng)?;
            s.pattern.kind = PatternKind::LimitEta;
            s.certificate = Some(cert);
            Ok(s)
        }
    }
}

/// Points in `[0, s] x (a, inf]`.
pub fn box_count(pattern: &PointPattern, s: f64, a: f64) -> Result<usize> {
    if a < pattern.window.mark_floor {
        return Err(Error::BelowMarkFloor {
            level: a,
            floor: pattern.window.mark_floor,
        });
    }
    if s > pattern.window.s_max {
        return Err(Error::invalid(format!(
            "s = {s} exceeds the window s_max = {}",
            pattern.window.s_max
        )));
    }
    Ok(pattern
        .points
        .iter()
        .filter(|p| p.time <= s && p.mark > a)
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizes {
    /// `histogram[k]` clusters of size `k`; `histogram[0] = 0`.
    pub histogram: Vec<u64>,
    pub n_clusters: u64,
}

impl ClusterSizes {
    fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut histogram = vec![0u64];
        let mut n = 0;
        for s in sizes.into_iter().filter(|&s| s > 0) {
            if histogram.len() <= s {
                histogram.resize(s + 1, 0);
            }
            histogram[s] += 1;
            n += 1;
        }
        ClusterSizes {
            histogram,
            n_clusters: n,
        }
    }

    pub fn merge(&mut self, other: &ClusterSizes) {
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.n_clusters += other.n_clusters;
    }

    pub fn mean(&self) -> f64 {
        let total: u64 = self.histogram.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
        total as f64 / self.n_clusters as f64
    }
}

/// Sizes of clusters of points above `a`. Limit patterns use their stacks;
/// empirical patterns are declustered by runs: consecutive exceedances
/// closer than `gap` in time share a cluster.
pub fn cluster_size_distribution(pattern: &PointPattern, a: f64, gap: f64) -> Result<ClusterSizes> {
    if a < pattern.window.mark_floor {
        return Err(Error::BelowMarkFloor {
            level: a,
            floor: pattern.window.mark_floor,
        });
    }
    if pattern.is_limit() {
        let n_stacks = pattern
            .points
            .iter()
            .filter_map(|p| p.stack_id)
            .max()
            .map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; n_stacks];
        for p in &pattern.points {
            if let (Some(id), true) = (p.stack_id, p.mark > a) {
                sizes[id] += 1;
            }
        }
        return Ok(ClusterSizes::from_sizes(sizes));
    }
    let mut times: Vec<f64> = pattern
        .points
        .iter()
        .filter(|p| p.mark > a)
        .map(|p| p.time)
        .collect();
    times.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut current = 0usize;
    let mut last = f64::NEG_INFINITY;
    for t in times {
        if current > 0 && t - last < gap {
            current += 1;
        } else {
            if current > 0 {
                sizes.push(current);
            }
            current = 1;
        }
        last = t;
    }
    if current > 0 {
        sizes.push(current);
    }
    Ok(ClusterSizes::from_sizes(sizes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxComparison {
    pub s: f64,
    pub a: f64,
    pub mean_empirical: f64,
    pub mean_limit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<ChiSquareTest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub boxes: Vec<BoxComparison>,
    pub n_empirical: usize,
    pub n_limit: usize,
    /// Per-box level after the Bonferroni correction.
    pub per_box_level: f64,
    pub min_p_value: f64,
    pub verdict: Verdict,
}

/// Two-sample chi-square comparison of box-count laws, one test per box,
/// Bonferroni-combined at level 0.01.
pub fn compare_patterns(
    empirical_reps: &[PointPattern],
    limit_reps: &[PointPattern],
    boxes: &[(f64, f64)],
) -> Result<ComparisonReport> {
    if empirical_reps.len() < MIN_COMPARISON_REPS || limit_reps.len() < MIN_COMPARISON_REPS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_COMPARISON_REPS} replicates per side, got {} and {}",
            empirical_reps.len(),
            limit_reps.len()
        )));
    }
    let counts = |reps: &[PointPattern], s: f64, a: f64| -> Result<Vec<usize>> {
        reps.iter().map(|p| box_count(p, s, a)).collect()
    };
    let mut out = Vec::with_capacity(boxes.len());
    for &(s, a) in boxes {
        let ce = counts(empirical_reps, s, a)?;
        let cl = counts(limit_reps, s, a)?;
        let mean = |c: &[usize]| c.iter().sum::<usize>() as f64 / c.len() as f64;
        let test = chi_square_homogeneity(&ce, &cl);
        out.push(BoxComparison {
            s,
            a,
            mean_empirical: mean(&ce),
            mean_limit: mean(&cl),
            note: test.is_none().then(|| "degenerate box skipped".to_string()),
            test,
        });
    }
    let tested: Vec<f64> = out.iter().filter_map(|b| b.test.map(|t| t.p_value)).collect();
    let per_box_level = COMPARISON_LEVEL / tested.len().max(1) as f64;
    let min_p_value = tested.iter().copied().fold(1.0, f64::min);
    Ok(ComparisonReport {
        boxes: out,
        n_empirical: empirical_reps.len(),
        n_limit: limit_reps.len(),
        per_box_level,
        min_p_value,
        verdict: if min_p_value < per_box_level {
            Verdict::Inconsistent
        } else {
            Verdict::Consistent
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w() -> Window {
        Window::new(1.0, 1.0)
    }

    #[test]
    fn zero_path_is_empty() {
        let p = ChainPath::from_states(vec![0.0; 11], 1.0);
        assert!(build_nn(&p, 10, 1.0, w()).unwrap().is_empty());
    }

    #[test]
    fn single_exceedance() {
        let mut s = vec![0.0; 11];
        s[3] = 2.0 * 5.0;
        let p = ChainPath::from_states(s, 1.0);
        let pat = build_nn(&p, 10, 5.0, w()).unwrap();
        assert_eq!(pat.points.len(), 1);
        assert!((pat.points[0].time - 0.3).abs() < 1e-15);
        assert_eq!(pat.points[0].mark, 2.0);
    }

    #[test]
    fn short_path_rejected() {
        let p = ChainPath::from_states(vec![0.0; 5], 1.0);
        assert!(matches!(build_nn(&p, 10, 1.0, w()), Err(Error::PathTooShort { .. })));
    }

    #[test]
    fn box_counts() {
        let pat = PointPattern {
            points: vec![Point {
                time: 0.3,
                mark: 2.0,
                stack_id: None,
            }],
            ..PointPattern::empty(w(), PatternKind::EmpiricalNn)
        };
        assert_eq!(box_count(&PointPattern::empty(w(), PatternKind::EmpiricalNn), 1.0, 1.0).unwrap(), 0);
        assert_eq!(box_count(&pat, 0.5, 1.0).unwrap(), 1);
        assert_eq!(box_count(&pat, 0.2, 1.0).unwrap(), 0);
        assert!(matches!(box_count(&pat, 0.5, 0.5), Err(Error::BelowMarkFloor { .. })));
    }

    #[test]
    fn killed_chain_gives_single_point_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lp = LimitProcess::new(1.0, 2.0, TailDistribution::point(0.0));
        let s = lp.sample_eta_delta(Window::new(20.0, 0.5), 1.0, &mut rng).unwrap();
        assert!(!s.stacks.is_empty());
        assert!(s.stacks.iter().all(|st| st.marks.len() == 1 && st.marks[0] == st.seed_mark));
        let sizes = cluster_size_distribution(&s.pattern, 1.0, 0.0).unwrap();
        assert_eq!(sizes.histogram.len(), 2);
    }

    #[test]
    fn deterministic_compounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lp = LimitProcess::new(1.0, 2.0, TailDistribution::point(0.5));
        let st = lp.stack(0.1, 4.0, 1.0, &mut rng);
        assert_eq!(st.marks, vec![4.0, 2.0]);
        let st = lp.stack(0.1, 4.0, 0.9, &mut rng);
        assert_eq!(st.marks, vec![4.0, 2.0, 1.0]);
    }

    #[test]
    fn zero_delta_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lp = LimitProcess::new(1.0, 2.0, TailDistribution::point(0.5));
        assert!(sample_limit(&lp, w(), 0.0, LimitMode::EtaDelta, None, &mut rng).is_err());
    }

    #[test]
    fn runs_declustering() {
        let mk = |t: f64| Point {
            time: t,
            mark: 2.0,
            stack_id: None,
        };
        let pat = PointPattern {
            points: vec![mk(0.1), mk(0.11), mk(0.5)],
            ..PointPattern::empty(w(), PatternKind::EmpiricalNn)
        };
        let zero = cluster_size_distribution(&pat, 1.0, 0.0).unwrap();
        assert_eq!(zero.histogram, vec![0, 3]);
        let runs = cluster_size_distribution(&pat, 1.0, 0.05).unwrap();
        assert_eq!(runs.histogram, vec![0, 1, 1]);
    }

    #[test]
    fn delta_restricted_nn_drops_small_cycles() {
        // cycles start at 1 (value 5) and 4 (value 0.6); atom is [0, 0.5]
        let p = ChainPath::from_states(vec![0.1, 5.0, 2.5, 0.4, 3.0, 1.5, 0.2, 0.1, 0.1, 0.1, 0.1], 0.5);
        let full = build_nn(&p, 10, 1.0, Window::new(1.0, 1.0)).unwrap();
        assert_eq!(full.len(), 4);
        let d = build_nn_delta(&p, 10, 1.0, Window::new(1.0, 1.0), 4.0).unwrap();
        assert_eq!(d.points.iter().map(|p| p.mark).collect::<Vec<_>>(), vec![5.0, 2.5]);
    }
}
