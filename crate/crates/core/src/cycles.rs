//! Regenerative cycles: renewal times, cycle maxima, downcrossing times and
//! estimators of `q` and of the cycle-maximum tail constant.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{ChainPath, Init, KernelSpec, Perturbation, ScalingFunction, TailDistribution};
use crate::rng::Streams;
use crate::stats::{proportion, z_value, Estimate, MeanAccumulator, DEFAULT_LEVEL};
use crate::tail_chain::LimitConstants;

/// One cycle `C_k`, indices relative to the full path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub start: usize,
    /// Number of states, `tau_A + 1`.
    pub length: usize,
    pub tau_a: usize,
    pub tau_t: usize,
    pub max_value: f64,
    /// Maximum over the first `tau_t` states; 0 when that range is empty.
    pub max_extremal: f64,
    pub first_state: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleDecomposition {
    pub initial_cycle: CycleRecord,
    pub cycles: Vec<CycleRecord>,
    /// `S_0, S_1, ...`
    pub renewal_times: Vec<usize>,
    pub q_hat: Option<Estimate>,
    pub threshold: f64,
    pub atom_upper: f64,
    pub path_len: usize,
}

impl CycleDecomposition {
    pub fn n_cycles(&self) -> usize {
        self.cycles.len()
    }

    /// States covered by `C_0, C_1, ...`; the rest is the discarded tail.
    pub fn steps_consumed(&self) -> usize {
        self.renewal_times.last().copied().unwrap_or(0)
    }

    /// Number of atom visits among the consumed states.
    pub fn atom_visits(&self) -> usize {
        self.renewal_times.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["start", "tau_A", "tau_t", "max_value", "max_extremal", "first_state"])?;
        for c in &self.cycles {
            w.write_record([
                c.start.to_string(),
                c.tau_a.to_string(),
                c.tau_t.to_string(),
                c.max_value.to_string(),
                c.max_extremal.to_string(),
                c.first_state.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn record(states: &[f64], start: usize, end: usize, threshold: f64) -> CycleRecord {
    let seg = &states[start..end];
    let tau_t = seg.iter().position(|&x| x <= threshold).unwrap_or(seg.len() - 1);
    CycleRecord {
        start,
        length: seg.len(),
        tau_a: seg.len() - 1,
        tau_t,
        max_value: seg.iter().fold(0.0, |a: f64, &b| a.max(b)),
        max_extremal: seg[..tau_t].iter().fold(0.0, |a: f64, &b| a.max(b)),
        first_state: seg[0],
    }
}

/// Splits `path` at its atom visits. `threshold` is the downcrossing level
/// `t y(t)` and must not lie below the atom.
pub fn decompose(path: &ChainPath, threshold: f64) -> Result<CycleDecomposition> {
    if path.is_empty() {
        return Err(Error::invalid("path is empty"));
    }
    if !(threshold >= path.atom_upper) {
        return Err(Error::invalid(format!(
            "downcrossing level {threshold} lies below the atom bound {}",
            path.atom_upper
        )));
    }
    let states = &path.states;
    let renewal_times: Vec<usize> = path
        .atom_flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(j, _)| j + 1)
        .collect();
    if renewal_times.is_empty() {
        return Err(Error::NoRegeneration);
    }
    let initial_cycle = record(states, 0, renewal_times[0], threshold);
    let cycles: Vec<CycleRecord> = renewal_times
        .windows(2)
        .map(|w| record(states, w[0], w[1], threshold))
        .collect();
    let q_hat = (!cycles.is_empty()).then(|| {
        let mut acc = MeanAccumulator::new();
        cycles.iter().for_each(|c| acc.push(c.length as f64));
        if acc.variance() == 0.0 {
            Estimate::exact(acc.mean())
        } else {
            acc.estimate(DEFAULT_LEVEL)
        }
    });
    Ok(CycleDecomposition {
        initial_cycle,
        cycles,
        renewal_times,
        q_hat,
        threshold,
        atom_upper: path.atom_upper,
        path_len: states.len(),
    })
}

/// `X_{S_{k-1} + j}` for `j < tau_t`.
pub fn extremal_component<'a>(cycle: &CycleRecord, path: &'a ChainPath) -> &'a [f64] {
    &path.states[cycle.start..cycle.start + cycle.tau_t]
}

/// Extremal component of an arbitrary segment for a given downcrossing level.
pub fn extremal_prefix(segment: &[f64], threshold: f64) -> &[f64] {
    let end = segment
        .iter()
        .position(|&x| x <= threshold)
        .unwrap_or(segment.len());
    &segment[..end]
}

/// `q = E_H tau_A + 1` in closed form, for `Z` two-point with `rho < 1`,
/// `phi = 0` and `H = Pareto(alpha, a_max)`.
pub fn analytic_q(kernel: &KernelSpec) -> Option<f64> {
    if kernel.phi != Perturbation::Zero {
        return None;
    }
    let (p0, rho) = kernel.z_law.as_two_point()?;
    let TailDistribution::Pareto { alpha, scale } = kernel.h_return else {
        return None;
    };
    if scale != kernel.atom_upper || rho >= 1.0 {
        return None;
    }
    // P[tau_A >= k] = ((1 - p0) rho^alpha)^(k - 1)
    Some(1.0 + 1.0 / (1.0 - (1.0 - p0) * rho.powf(alpha)))
}

/// `q_hat` from one path of `n_steps` started from `H`.
pub fn estimate_q(kernel: &KernelSpec, n_steps: usize, streams: &Streams) -> Result<Estimate> {
    let mut rng = streams.rng("estimate-q", 0);
    let path = kernel.simulate_path(Init::FromH, n_steps, &mut rng)?;
    decompose(&path, kernel.atom_upper)?
        .q_hat
        .ok_or_else(|| Error::InsufficientData("no complete cycle".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub x: f64,
    pub count: usize,
    /// `t * count / n_cycles`.
    pub scaled_frequency: f64,
    pub zero_count: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub points: Vec<TailPoint>,
    /// Intercept with `alpha` held fixed.
    pub c_hat: Estimate,
    /// Free log-log slope, when at least two nonzero points exist.
    pub alpha_hat: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitRow {
    pub t: f64,
    pub b_t: f64,
    pub full_cycle: TailFit,
    pub extremal_component: TailFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitReport {
    pub alpha: f64,
    pub n_cycles: usize,
    pub rows: Vec<TailFitRow>,
}

impl TailFitReport {
    pub fn last(&self) -> &TailFitRow {
        self.rows.last().expect("at least one t")
    }
}

pub const MIN_FIT_CYCLES: usize = 1000;

/// Fits `t P_H[max / b(t) > x] ~ c x^(-alpha)` at each `t`, on full-cycle
/// maxima and on extremal-component maxima.
pub fn cycle_max_tail_fit(
    decomp: &CycleDecomposition,
    b: &ScalingFunction,
    alpha: f64,
    t_grid: &[f64],
    x_grid: &[f64],
) -> Result<TailFitReport> {
    let n = decomp.cycles.len();
    if n < MIN_FIT_CYCLES {
        return Err(Error::InsufficientData(format!(
            "{n} cycles, need at least {MIN_FIT_CYCLES}"
        )));
    }
    if t_grid.is_empty() || x_grid.is_empty() {
        return Err(Error::invalid("t_grid and x_grid must be nonempty"));
    }
    let mut xs = x_grid.to_vec();
    xs.sort_by(f64::total_cmp);
    if xs[0] <= 0.0 {
        return Err(Error::invalid("x_grid must be positive"));
    }
    let full: Vec<f64> = decomp.cycles.iter().map(|c| c.max_value).collect();
    let ext: Vec<f64> = decomp.cycles.iter().map(|c| c.max_extremal).collect();
    let mut rows = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let b_t = b.b(t);
        let full_fit = fit_one(&full, t, b_t, alpha, &xs);
        let ext_fit = fit_one(&ext, t, b_t, alpha, &xs);
        match (full_fit, ext_fit) {
            (Some(f), Some(e)) => rows.push(TailFitRow {
                t,
                b_t,
                full_cycle: f,
                extremal_component: e,
            }),
            _ if i + 1 == t_grid.len() => {
                return Err(Error::InsufficientData(format!(
                    "no exceedances of x b(t) at the largest t = {t}"
                )))
            }
            _ => {}
        }
    }
    Ok(TailFitReport {
        alpha,
        n_cycles: n,
        rows,
    })
}

fn fit_one(maxima: &[f64], t: f64, b_t: f64, alpha: f64, xs: &[f64]) -> Option<TailFit> {
    let n = maxima.len() as f64;
    let points: Vec<TailPoint> = xs
        .iter()
        .map(|&x| {
            let count = maxima.iter().filter(|&&m| m > x * b_t).count();
            TailPoint {
                x,
                count,
                scaled_frequency: t * count as f64 / n,
                zero_count: count == 0,
            }
        })
        .collect();
    let used: Vec<&TailPoint> = points.iter().filter(|p| !p.zero_count).collect();
    if used.is_empty() {
        return None;
    }
    let k = used.len();
    let p: Vec<f64> = used.iter().map(|q| q.count as f64 / n).collect();
    // Cov(log p_i, log p_j) = (1 - p_i) / (n p_i) for x_i <= x_j (nested events)
    let cov = |i: usize, j: usize| {
        let lo = i.min(j);
        (1.0 - p[lo]) / (n * p[lo])
    };
    let y: Vec<f64> = used.iter().map(|q| q.scaled_frequency.ln()).collect();
    let lx: Vec<f64> = used.iter().map(|q| q.x.ln()).collect();
    let w: Vec<f64> = used.iter().map(|q| q.count as f64).collect();
    let w_sum: f64 = w.iter().sum();
    let a: Vec<f64> = w.iter().map(|wi| wi / w_sum).collect();
    let log_c: f64 = (0..k).map(|i| a[i] * (y[i] + alpha * lx[i])).sum();
    let mut var = 0.0;
    for i in 0..k {
        for j in 0..k {
            var += a[i] * a[j] * cov(i, j);
        }
    }
    let se_log = var.max(0.0).sqrt();
    let c = log_c.exp();
    let z = z_value(DEFAULT_LEVEL);
    let c_hat = Estimate {
        value: c,
        std_error: c * se_log,
        ci_low: (log_c - z * se_log).exp(),
        ci_high: (log_c + z * se_log).exp(),
        level: DEFAULT_LEVEL,
    };
    let alpha_hat = (k >= 2).then(|| {
        // weighted least squares of y on log x; slope = -alpha
        let mx: f64 = (0..k).map(|i| a[i] * lx[i]).sum();
        let sxx: f64 = (0..k).map(|i| a[i] * (lx[i] - mx).powi(2)).sum();
        let g: Vec<f64> = (0..k).map(|i| a[i] * (lx[i] - mx) / sxx).collect();
        let slope: f64 = (0..k).map(|i| g[i] * y[i]).sum();
        let mut v = 0.0;
        for i in 0..k {
            for j in 0..k {
                v += g[i] * g[j] * cov(i, j);
            }
        }
        Estimate::normal(-slope, v.max(0.0).sqrt(), DEFAULT_LEVEL)
    });
    Some(TailFit {
        points,
        c_hat,
        alpha_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxLawRow {
    pub x: f64,
    pub empirical: Estimate,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxLawReport {
    pub n: usize,
    pub b_n: f64,
    pub n_reps: usize,
    pub rows: Vec<MaxLawRow>,
    pub sup_distance: f64,
    /// Largest half width of the per-point intervals.
    pub monte_carlo_half_width: f64,
}

/// Empirical `P[M_n <= b_n x]` against `exp(-c x^(-alpha) / q)`, with
/// `M_n = max(X_1, ..., X_n)` for a chain started from `H`.
pub fn max_distribution_check(
    kernel: &KernelSpec,
    b: &ScalingFunction,
    n: usize,
    x_grid: &[f64],
    n_reps: usize,
    constants: &LimitConstants,
    streams: &Streams,
) -> Result<MaxLawReport> {
    kernel.validate()?;
    let q = constants
        .q
        .ok_or_else(|| Error::Undefined("q is required for the maximum law".into()))?
        .value;
    if n == 0 || n_reps == 0 {
        return Err(Error::invalid("n and n_reps must be >= 1"));
    }
    let b_n = b.b(n as f64);
    let maxima: Vec<f64> = streams.map("max-law", n_reps, |_, rng| {
        let x0 = kernel.h_return.sample(rng);
        let mut m: f64 = 0.0;
        kernel.walk(x0, n, rng, |j, x| {
            if j > 0 {
                m = m.max(x);
            }
            true
        });
        m
    });
    let rows: Vec<MaxLawRow> = x_grid
        .iter()
        .map(|&x| {
            let below = maxima.iter().filter(|&&m| m <= b_n * x).count() as u64;
            MaxLawRow {
                x,
                empirical: proportion(below, n_reps as u64, DEFAULT_LEVEL),
                limit: (-constants.c.value / q * x.powf(-constants.alpha)).exp(),
            }
        })
        .collect();
    let sup_distance = rows
        .iter()
        .map(|r| (r.empirical.value - r.limit).abs())
        .fold(0.0, f64::max);
    let monte_carlo_half_width = rows
        .iter()
        .map(|r| r.empirical.half_width())
        .fold(0.0, f64::max);
    Ok(MaxLawReport {
        n,
        b_n,
        n_reps,
        rows,
        sup_distance,
        monte_carlo_half_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(states: &[f64], a: f64) -> ChainPath {
        ChainPath::from_states(states.to_vec(), a)
    }

    #[test]
    fn hand_trace() {
        let p = path(&[5.0, 0.2, 3.0, 0.1, 7.0, 0.4], 0.5);
        let d = decompose(&p, 0.5).unwrap();
        assert_eq!(d.renewal_times, vec![2, 4, 6]);
        assert_eq!(d.initial_cycle.start, 0);
        assert_eq!(d.initial_cycle.length, 2);
        assert_eq!(d.cycles.len(), 2);
        assert_eq!((d.cycles[0].start, d.cycles[0].tau_a, d.cycles[0].first_state), (2, 1, 3.0));
        assert_eq!((d.cycles[1].start, d.cycles[1].tau_a, d.cycles[1].max_value), (4, 1, 7.0));
    }

    #[test]
    fn path_inside_atom() {
        let p = path(&[0.1, 0.2, 0.3, 0.0], 0.5);
        let d = decompose(&p, 0.5).unwrap();
        assert!(d.cycles.iter().all(|c| c.length == 1 && c.tau_a == 0));
        assert_eq!(d.q_hat.unwrap().value, 1.0);
    }

    #[test]
    fn downcrossing_coincides_with_atom_entry() {
        let p = path(&[10.0, 5.0, 2.5, 1.25, 0.4], 0.5);
        let d = decompose(&p, 0.5).unwrap();
        assert_eq!(d.initial_cycle.tau_t, 4);
        assert_eq!(d.initial_cycle.tau_a, 4);
        assert!(d.cycles.is_empty());
        assert!(d.q_hat.is_none());
    }

    #[test]
    fn no_atom_visit() {
        assert!(matches!(decompose(&path(&[3.0, 2.0], 1.0), 1.0), Err(Error::NoRegeneration)));
    }

    #[test]
    fn extremal_components() {
        assert_eq!(extremal_prefix(&[10.0, 5.0, 0.4], 0.5), &[10.0, 5.0]);
        assert!(extremal_prefix(&[0.3], 0.5).is_empty());
        // states after the first downcrossing are excluded
        assert_eq!(extremal_prefix(&[10.0, 0.4, 3.0, 0.2], 0.5), &[10.0]);
        let p = path(&[0.1, 10.0, 0.4, 3.0, 0.2], 0.3);
        let d = decompose(&p, 0.5).unwrap();
        assert_eq!(extremal_component(&d.cycles[0], &p), &[10.0]);
        assert_eq!(d.cycles[0].max_extremal, 10.0);
        assert_eq!(d.cycles[0].max_value, 10.0);
    }

    #[test]
    fn threshold_below_atom_rejected() {
        assert!(decompose(&path(&[0.1], 1.0), 0.5).is_err());
    }

    #[test]
    fn analytic_q_det_contract() {
        let k = crate::kernels::BuiltinKernel::DetContract.default_kernel();
        assert!((analytic_q(&k.spec).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_count_points_are_flagged() {
        let cycles: Vec<CycleRecord> = (0..2000)
            .map(|i| CycleRecord {
                start: i,
                length: 1,
                tau_a: 0,
                tau_t: 0,
                max_value: 1.0 + (i % 10) as f64,
                max_extremal: 0.0,
                first_state: 1.0,
            })
            .collect();
        let d = CycleDecomposition {
            initial_cycle: cycles[0],
            cycles,
            renewal_times: vec![],
            q_hat: None,
            threshold: 1.0,
            atom_upper: 1.0,
            path_len: 0,
        };
        let b = ScalingFunction::pareto(1.0, 1.0);
        let r = cycle_max_tail_fit(&d, &b, 1.0, &[1.0], &[2.0, 100.0]);
        // extremal maxima are all zero, so the only t has no fit
        assert!(matches!(r, Err(Error::InsufficientData(_))));
        let fit = fit_one(&d.cycles.iter().map(|c| c.max_value).collect::<Vec<_>>(), 1.0, 1.0, 1.0, &[2.0, 100.0]).unwrap();
        assert!(fit.points[1].zero_count);
        assert_eq!(fit.points[1].scaled_frequency, 0.0);
    }
}
