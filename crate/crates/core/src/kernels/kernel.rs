use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::distribution::TailDistribution;
use crate::error::{Error, Result};
use crate::rng::SeedRecord;
use crate::stats::{compact_wasserstein, z_value, DEFAULT_LEVEL};

pub const SPEC_VERSION: u32 = 1;
pub const DEFAULT_CYCLE_CAP: u64 = 10_000_000;

fn default_version() -> u32 {
    SPEC_VERSION
}

fn default_cap() -> u64 {
    DEFAULT_CYCLE_CAP
}

/// The perturbation `phi(x, W)` in `psi(x, (Z, W)) = Z x + phi(x, W)`.
///
/// `Zero`, `AdditiveNoise` and `BoundedCustom` satisfy `phi(t, w) / t -> 0`.
/// `Proportional` and `PowerJump` do not; they exist to build kernels that
/// break the hypotheses on purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "params", rename_all = "snake_case")]
pub enum Perturbation {
    Zero,
    /// `phi(x, W) = W`.
    AdditiveNoise { w_law: TailDistribution },
    /// `phi(x, W) = g(x) W`, with `g` linear between `knots` and flat
    /// outside them. Without `w_law`, `W = 1`.
    BoundedCustom {
        knots: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_law: Option<TailDistribution>,
    },
    /// `phi(x, W) = x W`.
    Proportional { w_law: TailDistribution },
    /// With probability `probability` the next state is `x^exponent`
    /// instead of `Z x`.
    PowerJump { exponent: f64, probability: f64 },
}

impl Perturbation {
    fn validate(&self) -> Result<()> {
        match self {
            Perturbation::Zero => Ok(()),
            Perturbation::AdditiveNoise { w_law } | Perturbation::Proportional { w_law } => {
                w_law.validate()
            }
            Perturbation::BoundedCustom { knots, w_law } => {
                if knots.is_empty() {
                    return Err(Error::invalid("bounded_custom needs at least one knot"));
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::invalid("bounded_custom knots must be strictly increasing in x"));
                }
                if knots.iter().any(|k| !k[0].is_finite() || !(k[1].is_finite() && k[1] >= 0.0)) {
                    return Err(Error::invalid("bounded_custom knot values must be finite and >= 0"));
                }
                if let Some(w) = w_law {
                    w.validate()?;
                }
                Ok(())
            }
            Perturbation::PowerJump {
                exponent,
                probability,
            } => {
                if !(exponent.is_finite() && *exponent > 0.0) || !(0.0..=1.0).contains(probability) {
                    return Err(Error::invalid(
                        "power_jump needs exponent > 0 and probability in [0,1]",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Whether `phi(t, w) / t -> 0`, the form under which `K` is in `D(G)`.
    pub fn preserves_attraction(&self) -> bool {
        matches!(
            self,
            Perturbation::Zero | Perturbation::AdditiveNoise { .. } | Perturbation::BoundedCustom { .. }
        )
    }

    fn interpolate(knots: &[[f64; 2]], x: f64) -> f64 {
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if x <= first[0] {
            return first[1];
        }
        if x >= last[0] {
            return last[1];
        }
        let i = knots.partition_point(|k| k[0] <= x);
        let (a, b) = (knots[i - 1], knots[i]);
        a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
    }
}

/// The extremal boundary `y(t)`. The value in force is always joined with
/// `a_max / t`, so `t y(t) >= sup A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtremalBoundary {
    /// `y(t) = a_max / t`.
    #[default]
    AtomScaled,
    /// `y(t) = coefficient * t^(-exponent)`.
    Power { coefficient: f64, exponent: f64 },
}

/// Where a path starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    FromH,
    Fixed(f64),
}

/// A transition kernel on `[0, inf)` with the atom `A = [0, atom_upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default = "default_version")]
    pub spec_version: u32,
    pub z_law: TailDistribution,
    pub phi: Perturbation,
    pub atom_upper: f64,
    pub h_return: TailDistribution,
    #[serde(default)]
    pub boundary: ExtremalBoundary,
    /// Largest allowed number of consecutive steps outside the atom.
    #[serde(default = "default_cap")]
    pub cycle_cap: u64,
}

/// One simulated trajectory `X_0..X_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPath {
    pub states: Vec<f64>,
    pub atom_flags: Vec<bool>,
    pub atom_upper: f64,
    pub seed: Option<SeedRecord>,
    pub kernel_id: String,
}

impl ChainPath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// A path built from given states, e.g. for tests and imported data.
    pub fn from_states(states: Vec<f64>, atom_upper: f64) -> Self {
        let atom_flags = states.iter().map(|&x| x <= atom_upper).collect();
        ChainPath {
            states,
            atom_flags,
            atom_upper,
            seed: None,
            kernel_id: String::new(),
        }
    }

    pub fn with_seed(mut self, seed: SeedRecord) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub t: f64,
    pub ks_distance: f64,
    /// Half width of the simultaneous band for the KS statistic.
    pub ks_half_width: f64,
    /// Wasserstein-1 distance after the map `x -> x / (1 + x)`.
    pub weak_distance: f64,
    /// The same distance between two independent samples from `G`.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub u: f64,
    pub n_samples: usize,
    pub rows: Vec<DomainRow>,
    pub threshold: f64,
    pub consistent: bool,
}

const WEAK_TOLERANCE: f64 = 0.01;

impl KernelSpec {
    pub fn new(
        z_law: TailDistribution,
        phi: Perturbation,
        atom_upper: f64,
        h_return: TailDistribution,
    ) -> Self {
        KernelSpec {
            spec_version: SPEC_VERSION,
            z_law,
            phi,
            atom_upper,
            h_return,
            boundary: ExtremalBoundary::AtomScaled,
            cycle_cap: DEFAULT_CYCLE_CAP,
        }
    }

    pub fn with_boundary(mut self, boundary: ExtremalBoundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::SchemaVersion {
                found: self.spec_version,
                expected: SPEC_VERSION,
            });
        }
        self.z_law.validate()?;
        self.h_return.validate()?;
        self.phi.validate()?;
        if !(self.atom_upper.is_finite() && self.atom_upper > 0.0) {
            return Err(Error::invalid(format!(
                "atom_upper must be finite and > 0, got {}",
                self.atom_upper
            )));
        }
        if let ExtremalBoundary::Power {
            coefficient,
            exponent,
        } = self.boundary
        {
            if !(coefficient > 0.0 && coefficient.is_finite() && exponent > 0.0 && exponent.is_finite()) {
                return Err(Error::invalid("power boundary needs coefficient > 0 and exponent > 0"));
            }
        }
        if self.cycle_cap == 0 {
            return Err(Error::invalid("cycle_cap must be >= 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let k: KernelSpec = serde_json::from_str(text)?;
        k.validate()?;
        Ok(k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel spec serializes")
    }

    /// Short content hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        hex::encode(&digest[..8])
    }

    /// `G({0})`, the mass of the tail-chain multiplier at zero.
    pub fn g_zero(&self) -> f64 {
        self.z_law.point_mass_at_zero()
    }

    #[inline]
    pub fn in_atom(&self, x: f64) -> bool {
        x <= self.atom_upper
    }

    /// One transition from `x`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        if x <= self.atom_upper {
            return self.h_return.sample(rng);
        }
        self.step_outside(x, rng)
    }

    /// `psi(x, (Z, W))` regardless of whether `x` lies in the atom.
    #[inline]
    pub fn step_outside<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z = self.z_law.sample(rng);
        let next = match &self.phi {
            Perturbation::Zero => z * x,
            Perturbation::AdditiveNoise { w_law } => z * x + w_law.sample(rng),
            Perturbation::BoundedCustom { knots, w_law } => {
                let w = w_law.as_ref().map_or(1.0, |w| w.sample(rng));
                z * x + Perturbation::interpolate(knots, x) * w
            }
            Perturbation::Proportional { w_law } => z * x + x * w_law.sample(rng),
            Perturbation::PowerJump {
                exponent,
                probability,
            } => {
                if rng.random::<f64>() < *probability {
                    x.powf(*exponent)
                } else {
                    z * x
                }
            }
        };
        next.max(0.0)
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, init: Init, rng: &mut R) -> Result<f64> {
        match init {
            Init::FromH => Ok(self.h_return.sample(rng)),
            Init::Fixed(x) if x.is_finite() && x >= 0.0 => Ok(x),
            Init::Fixed(x) => Err(Error::invalid(format!("initial state must be finite and >= 0, got {x}"))),
        }
    }

    /// `n_steps` transitions, so `n_steps + 1` states.
    pub fn simulate_path<R: Rng + ?Sized>(&self, init: Init, n_steps: usize, rng: &mut R) -> Result<ChainPath> {
        self.validate()?;
        let x0 = self.initial_state(init, rng)?;
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(x0);
        let mut x = x0;
        let mut outside: u64 = 0;
        let mut excursion_start = 0usize;
        for j in 0..n_steps {
            if self.in_atom(x) {
                outside = 0;
            } else {
                if outside == 0 {
                    excursion_start = j;
                }
                outside += 1;
                if outside > self.cycle_cap {
                    return Err(Error::CycleCap {
                        cap: self.cycle_cap,
                        start: excursion_start,
                    });
                }
            }
            x = self.step(x, rng);
            states.push(x);
        }
        let atom_flags = states.iter().map(|&s| self.in_atom(s)).collect();
        Ok(ChainPath {
            states,
            atom_flags,
            atom_upper: self.atom_upper,
            seed: None,
            kernel_id: self.fingerprint(),
        })
    }

    /// Runs the chain from `x0` and calls `visit(j, x_j)` for `j = 0..`
    /// until it returns `false` or `max_steps` transitions were made.
    /// Returns the number of transitions.
    pub fn walk<R, F>(&self, x0: f64, max_steps: usize, rng: &mut R, mut visit: F) -> usize
    where
        R: Rng + ?Sized,
        F: FnMut(usize, f64) -> bool,
    {
        let mut x = x0;
        if !visit(0, x) {
            return 0;
        }
        for j in 1..=max_steps {
            x = self.step(x, rng);
            if !visit(j, x) {
                return j;
            }
        }
        max_steps
    }

    /// The extremal boundary `y(t)` joined with `a_max / t`.
    pub fn extremal_boundary_value(&self, t: f64) -> f64 {
        let floor = self.atom_upper / t;
        match self.boundary {
            ExtremalBoundary::AtomScaled => floor,
            ExtremalBoundary::Power {
                coefficient,
                exponent,
            } => (coefficient * t.powf(-exponent)).max(floor),
        }
    }

    /// The downcrossing level `t y(t)` on the original scale.
    pub fn downcrossing_level(&self, t: f64) -> f64 {
        t * self.extremal_boundary_value(t)
    }

    /// Compares the law of `step(t u) / (t u)` with `G` along `t_grid`.
    pub fn check_domain_of_attraction<R: Rng + ?Sized>(
        &self,
        t_grid: &[f64],
        u: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<DomainReport> {
        self.validate()?;
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::invalid("u must be > 0"));
        }
        if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
            return Err(Error::invalid("t_grid must be positive and strictly increasing"));
        }
        if n_samples < 2 {
            return Err(Error::invalid("n_samples must be >= 2"));
        }
        let mut reference: Vec<f64> = (0..n_samples).map(|_| self.z_law.sample(rng)).collect();
        let mut second: Vec<f64> = (0..n_samples).map(|_| self.z_law.sample(rng)).collect();
        if reference.iter().chain(&second).any(|v| !v.is_finite()) {
            return Err(Error::invalid("G puts mass at infinity"));
        }
        reference.sort_by(f64::total_cmp);
        second.sort_by(f64::total_cmp);
        let noise_floor = compact_wasserstein(&reference, &second);
        let z = z_value(DEFAULT_LEVEL);
        // Kolmogorov band, roughly 1.63 / sqrt(n) at 99%
        let ks_half_width = (-(0.5 * (1.0 - DEFAULT_LEVEL)).ln() / 2.0).sqrt() / (n_samples as f64).sqrt();
        let threshold = WEAK_TOLERANCE + z * noise_floor;

        let mut rows = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let x = t * u;
            let mut ratios: Vec<f64> = (0..n_samples).map(|_| self.step(x, rng) / x).collect();
            if ratios.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("scaled step escapes to infinity"));
            }
            ratios.sort_by(f64::total_cmp);
            let ks = crate::stats::ks_distance(&ratios, |v| self.z_law.cdf(v), |v| self.z_law.cdf_left(v));
            rows.push(DomainRow {
                t,
                ks_distance: ks,
                ks_half_width,
                weak_distance: compact_wasserstein(&ratios, &reference),
                noise_floor,
            });
        }
        let consistent = rows.last().is_some_and(|r| r.weak_distance <= threshold);
        Ok(DomainReport {
            u,
            n_samples,
            rows,
            threshold,
            consistent,
        })
    }
}
