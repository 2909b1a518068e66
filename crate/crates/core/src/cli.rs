//! Experiment runner behind the `exlab` binary.
//!
//! An [`ExperimentConfig`] fully determines the output bytes: every run
//! writes `summary.json`, the CSV files of its analysis and a
//! `manifest.json` with content hashes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cycles::{analytic_q, cycle_max_tail_fit, decompose, estimate_q, max_distribution_check};
use crate::diagnostics::{format_table, run_all, ConditionReport, DiagnosticsConfig};
use crate::error::{Error, Result};
use crate::kernels::{list_builtin_kernels, BuiltinKernel, Init, KernelSpec, ScalingFunction};
use crate::measure_oracle::TailMoments;
use crate::point_process::{
    compare_patterns, sample_limit, simulate_nn, LimitMode, LimitProcess, PointPattern, Window,
};
use crate::rng::Streams;
use crate::stats::{Estimate, DEFAULT_LEVEL};
use crate::tail_chain::{constant_c, extremal_index, simulate_tail_chain_with, TailChainOptions};

pub const SEED_ENV: &str = "EXLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Simulate,
    Tailchain,
    Cycles,
    LimitSample,
    Converge,
    Diagnose,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Simulate => "simulate",
            Analysis::Tailchain => "tailchain",
            Analysis::Cycles => "cycles",
            Analysis::LimitSample => "limit-sample",
            Analysis::Converge => "converge",
            Analysis::Diagnose => "diagnose",
        }
    }
}

/// A built-in kernel by name, or a full specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelChoice {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Spec(KernelSpec),
}

impl Default for KernelChoice {
    fn default() -> Self {
        KernelChoice::Builtin {
            builtin: BuiltinKernel::DetContract.name().to_string(),
            params: BTreeMap::new(),
        }
    }
}

impl KernelChoice {
    /// The kernel and the tail index of `H` it implies.
    pub fn resolve(&self) -> Result<(KernelSpec, Option<f64>)> {
        match self {
            KernelChoice::Builtin { builtin, params } => {
                let built = BuiltinKernel::from_name(builtin)?.build(params)?;
                Ok((built.spec, Some(built.alpha)))
            }
            KernelChoice::Spec(spec) => {
                spec.validate()?;
                Ok((spec.clone(), spec.h_return.tail_index()))
            }
        }
    }
}

/// Settings that only some analyses read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    pub level: f64,
    pub tail_chain: TailChainOptions,
    /// Cycle threshold; defaults to `sup A`.
    pub threshold: Option<f64>,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub s_max: f64,
    pub mark_floor: Option<f64>,
    pub delta: f64,
    /// Sample `eta*` with a certified `delta` instead of `eta*_delta`.
    pub approximate: bool,
    /// Overrides `q`.
    pub q: Option<f64>,
    /// Multiplies `q` in the limit sampler.
    pub q_scale: f64,
    /// `(s, a)` boxes for the convergence comparison.
    pub boxes: Vec<[f64; 2]>,
    /// Steps used to estimate `q` when it has no closed form.
    pub q_steps: usize,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        let mut boxes = Vec::new();
        for s in [0.25, 0.5, 1.0] {
            for a in [1.0, 2.0, 4.0] {
                boxes.push([s, a]);
            }
        }
        AnalysisParams {
            level: DEFAULT_LEVEL,
            tail_chain: TailChainOptions::default(),
            threshold: None,
            t_grid: vec![1e2, 1e3],
            x_grid: vec![0.5, 1.0, 2.0, 4.0],
            s_max: 1.0,
            mark_floor: None,
            delta: 1.0,
            approximate: false,
            q: None,
            q_scale: 1.0,
            boxes,
            q_steps: 1_000_000,
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kernel: KernelChoice,
    /// Defaults to the tail index of `H`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub analysis: Analysis,
    #[serde(default)]
    pub params: AnalysisParams,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_n() -> usize {
    10_000
}

fn default_reps() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("exlab-out")
}

impl ExperimentConfig {
    pub fn new(analysis: Analysis) -> Self {
        ExperimentConfig {
            kernel: KernelChoice::default(),
            alpha: None,
            n: default_n(),
            n_reps: default_reps(),
            seed: None,
            analysis,
            params: AnalysisParams::default(),
            output_dir: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        if self.n_reps == 0 {
            return Err(Error::invalid("n_reps must be >= 1"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid("alpha must be finite and > 0"));
            }
        }
        let p = &self.params;
        if !(p.level > 0.0 && p.level < 1.0) {
            return Err(Error::invalid("level must lie in (0, 1)"));
        }
        if !(p.s_max > 0.0) || !(p.delta > 0.0) || !(p.q_scale > 0.0) {
            return Err(Error::invalid("s_max, delta and q_scale must be > 0"));
        }
        self.kernel.resolve()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Files and summary produced by one analysis, before they are written.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub summary: Value,
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub build: String,
    pub analysis: Analysis,
    pub files: Vec<FileEntry>,
}

fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn estimate_cells(e: &Estimate) -> [String; 3] {
    [e.value.to_string(), e.ci_low.to_string(), e.ci_high.to_string()]
}

/// Resolved pieces shared by the analyses.
struct Setup {
    kernel: KernelSpec,
    alpha: f64,
    streams: Streams,
}

impl Setup {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let (kernel, h_alpha) = cfg.kernel.resolve()?;
        let alpha = cfg
            .alpha
            .or(h_alpha)
            .ok_or_else(|| Error::invalid("alpha is required when H has no tail index"))?;
        Ok(Setup {
            kernel,
            alpha,
            streams: Streams::new(seed),
        })
    }

    fn scaling(&self) -> Result<ScalingFunction> {
        let mut rng = self.streams.rng("scaling-pilot", 0);
        ScalingFunction::for_law(&self.kernel.h_return, self.alpha, &mut rng)
    }

    fn q(&self, params: &AnalysisParams) -> Result<Estimate> {
        if let Some(q) = params.q {
            return Ok(Estimate::exact(q));
        }
        match analytic_q(&self.kernel) {
            Some(q) => Ok(Estimate::exact(q)),
            None => estimate_q(&self.kernel, params.q_steps, &self.streams.child("q")),
        }
    }
}

/// Runs the analysis without touching the file system.
pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let setup = Setup::new(cfg, seed)?;
    match cfg.analysis {
        Analysis::Simulate => run_simulate(cfg, &setup),
        Analysis::Tailchain => run_tailchain(cfg, &setup),
        Analysis::Cycles => run_cycles(cfg, &setup),
        Analysis::LimitSample => run_limit_sample(cfg, &setup),
        Analysis::Converge => run_converge(cfg, &setup),
        Analysis::Diagnose => run_diagnose(cfg, &setup),
    }
}

fn run_simulate(cfg: &ExperimentConfig, s: &Setup) -> Result<RunOutput> {
    let mut rng = s.streams.rng("simulate", 0);
    let path = s.kernel.simulate_path(Init::FromH, cfg.n, &mut rng)?;
    let csv = csv_bytes(&["index", "state", "in_atom"], |w| {
        for (i, (x, a)) in path.states.iter().zip(&path.atom_flags).enumerate() {
            w.write_record([i.to_string(), x.to_string(), u8::from(*a).to_string()])?;
        }
        Ok(())
    })?;
    let max = path.states.iter().copied().fold(0.0, f64::max);
    Ok(RunOutput {
        summary: json!({
            "kernel_id": path.kernel_id,
            "n_steps": cfg.n,
            "atom_visits": path.atom_flags.iter().filter(|&&a| a).count(),
            "max_state": max,
        }),
        files: vec![("path.csv".into(), csv)],
    })
}

fn run_tailchain(cfg: &ExperimentConfig, s: &Setup) -> Result<RunOutput> {
    let p = &cfg.params;
    let g = &s.kernel.z_law;
    let mut constants = constant_c(g, s.alpha, p.tail_chain.horizon, cfg.n_reps, &s.streams)?;
    let q = s.q(p)?;
    constants = constants.with_q(q);
    let shown = cfg.n_reps.min(100);
    let paths = s.streams.map("tailchain-paths", shown, |_, rng| {
        simulate_tail_chain_with(g, 1.0, &p.tail_chain, rng)
    });
    let csv = csv_bytes(&["rep", "n", "product"], |w| {
        for (rep, path) in paths.into_iter().enumerate() {
            let path = path?;
            for (n, v) in path.products.iter().enumerate() {
                w.write_record([rep.to_string(), n.to_string(), v.to_string()])?;
            }
        }
        Ok(())
    })?;
    let mut summary = serde_json::to_value(&constants)?;
    summary["extremal_index_defined"] = json!(extremal_index(&constants).is_ok());
    summary["c_value"] = json!(constants.c.value);
    summary["theta_stationary_value"] = json!(constants.theta_stationary.value);
    Ok(RunOutput {
        summary,
        files: vec![("tail_paths.csv".into(), csv)],
    })
}

fn run_cycles(cfg: &ExperimentConfig, s: &Setup) -> Result<RunOutput> {
    let p = &cfg.params;
    let mut rng = s.streams.rng("cycles-path", 0);
    let path = s.kernel.simulate_path(Init::FromH, cfg.n, &mut rng)?;
    let threshold = p.threshold.unwrap_or(s.kernel.atom_upper);
    let decomp = decompose(&path, threshold)?;
    let mut csv = Vec::new();
    decomp.write_csv(&mut csv)?;
    let b = s.scaling()?;
    let fit = cycle_max_tail_fit(&decomp, &b, s.alpha, &p.t_grid, &p.x_grid);
    let fit_csv = match &fit {
        Ok(report) => Some(csv_bytes(
            &["t", "b_t", "source", "x", "count", "scaled_frequency"],
            |w| {
                for row in &report.rows {
                    for (source, f) in [("full_cycle", &row.full_cycle), ("extremal_component", &row.extremal_component)] {
                        for pt in &f.points {
                            w.write_record([
                                row.t.to_string(),
                                row.b_t.to_string(),
                                source.into(),
                                pt.x.to_string(),
                                pt.count.to_string(),
                                pt.scaled_frequency.to_string(),
                            ])?;
                        }
                    }
                }
                Ok(())
            },
        )?),
        Err(_) => None,
    };
    let mut files = vec![("cycles.csv".to_string(), csv)];
    if let Some(f) = fit_csv {
        files.push(("tail_fit.csv".into(), f));
    }
    Ok(RunOutput {
        summary: json!({
            "n_cycles": decomp.n_cycles(),
            "threshold": threshold,
            "q_hat": decomp.q_hat,
            "q_analytic": analytic_q(&s.kernel),
            "tail_fit": fit.as_ref().ok(),
            "tail_fit_error": fit.as_ref().err().map(|e| e.to_string()),
        }),
        files,
    })
}

fn limit_process(cfg: &ExperimentConfig, s: &Setup) -> Result<(LimitProcess, Estimate)> {
    let q = s.q(&cfg.params)?;
    let mut lp = LimitProcess::new(s.alpha, q.value * cfg.params.q_scale, s.kernel.z_law.clone());
    lp.chain = cfg.params.tail_chain;
    Ok((lp, q))
}

fn limit_mode(p: &AnalysisParams, level: f64) -> LimitMode {
    if p.approximate {
        LimitMode::EtaApprox { level }
    } else {
        LimitMode::EtaDelta
    }
}

fn moments_for(p: &AnalysisParams, s: &Setup) -> Result<Option<TailMoments>> {
    if !p.approximate {
        return Ok(None);
    }
    TailMoments::for_law(&s.kernel.z_law, s.alpha, 100_000, &s.streams.child("tail-moments")).map(Some)
}

fn run_limit_sample(cfg: &ExperimentConfig, s: &Setup) -> Result<RunOutput> {
    let p = &cfg.params;
    let (lp, q) = limit_process(cfg, s)?;
    let floor = p.mark_floor.unwrap_or(p.delta / 2.0);
    let window = Window::new(p.s_max, floor);
    let moments = moments_for(p, s)?;
    let mode = limit_mode(p, p.delta);
    let samples = s.streams.map("limit-sample", cfg.n_reps, |_, rng| {
        sample_limit(&lp, window, p.delta, mode, moments.as_ref(), rng)
    });
    let samples: Vec<_> = samples.into_iter().collect::<Result<_>>()?;
    let mut points = Vec::new();
    samples[0].pattern.write_csv(&mut points)?;
    let stacks = csv_bytes(&["rep", "stack", "time", "seed_mark", "n_marks", "death_time"], |w| {
        for (rep, smp) in samples.iter().enumerate() {
            for (k, st) in smp.stacks.iter().enumerate() {
                w.write_record([
                    rep.to_string(),
                    k.to_string(),
                    st.time.to_string(),
                    st.seed_mark.to_string(),
                    st.marks.len().to_string(),
                    st.death_time.map(|d| d.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        Ok(())
    })?;
    let n_points: usize = samples.iter().map(|x| x.pattern.len()).sum();
    let n_stacks: usize = samples.iter().map(|x| x.stacks.len()).sum();
    Ok(RunOutput {
        summary: json!({
            "alpha": s.alpha,
            "q": q,
            "q_used": lp.q,
            "window": window,
            "delta": p.delta,
            "mode": mode,
            "certificate": samples[0].certificate,
            "replicates": cfg.n_reps,
            "mean_points": n_points as f64 / cfg.n_reps as f64,
            "mean_stacks": n_stacks as f64 / cfg.n_reps as f64,
        }),
        files: vec![("points.csv".into(), points), ("stacks.csv".into(), stacks)],
    })
}

fn run_converge(cfg: &ExperimentConfig, s: &Setup) -> Result<RunOutput> {
    let p = &cfg.params;
    if p.boxes.is_empty() {
        return Err(Error::invalid("boxes must be non-empty"));
    }
    let boxes: Vec<(f64, f64)> = p.boxes.iter().map(|b| (b[0], b[1])).collect();
    let a_min = boxes.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    let s_max = boxes.iter().map(|b| b.0).fold(0.0, f64::max).max(p.s_max);
    let window = Window::new(s_max, p.mark_floor.unwrap_or(a_min));
    let b = s.scaling()?;
    let b_n = b.b(cfg.n as f64);
    let empirical: Vec<PointPattern> = s
        .streams
        .map("converge-nn", cfg.n_reps, |_, rng| simulate_nn(&s.kernel, cfg.n, b_n, window, rng))
        .into_iter()
        .collect::<Result<_>>()?;
    let (lp, q) = limit_process(cfg, s)?;
    let moments = moments_for(p, s)?;
    let delta = p.delta.min(a_min);
    let mode = limit_mode(p, a_min);
    let limit: Vec<PointPattern> = s
        .streams
        .map("converge-limit", cfg.n_reps, |_, rng| {
            sample_limit(&lp, window, delta, mode, moments.as_ref(), rng).map(|x| x.pattern)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let report = compare_patterns(&empirical, &limit, &boxes)?;
    let constants = constant_c(&s.kernel.z_law, s.alpha, p.tail_chain.horizon, cfg.n_reps.max(10_000), &s.streams)?
        .with_q(q);
    let max_law = max_distribution_check(&s.kernel, &b, cfg.n, &p.x_grid, cfg.n_reps, &constants, &s.streams)?;
    let boxes_csv = csv_bytes(&["s", "a", "mean_empirical", "mean_limit", "p_value"], |w| {
        for bx in &report.boxes {
            w.write_record([
                bx.s.to_string(),
                bx.a.to_string(),
                bx.mean_empirical.to_string(),
                bx.mean_limit.to_string(),
                bx.test.map(|t| t.p_value.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })?;
    let max_csv = csv_bytes(&["x", "empirical", "lo", "hi", "limit"], |w| {
        for r in &max_law.rows {
            let [v, lo, hi] = estimate_cells(&r.empirical);
            w.write_record([r.x.to_string(), v, lo, hi, r.limit.to_string()])?;
        }
        Ok(())
    })?;
    Ok(RunOutput {
        summary: json!({
            "n": cfg.n,
            "b_n": b_n,
            "q": q,
            "q_used": lp.q,
            "comparison": report,
            "max_law": max_law,
            "constants": constants,
        }),
        files: vec![("boxes.csv".into(), boxes_csv), ("max_law.csv".into(), max_csv)],
    })
}

fn run_diagnose(cfg: &ExperimentConfig, s: &Setup) -> Result<RunOutput> {
    let b = s.scaling()?;
    let reports = run_all(&s.kernel, s.alpha, &b, &cfg.params.diagnostics, &s.streams)?;
    let csv = csv_bytes(&["condition", "cell", "grid", "value", "lo", "hi"], |w| {
        for r in &reports {
            for (i, (g, e)) in r.grid.iter().zip(&r.estimates).enumerate() {
                let [v, lo, hi] = estimate_cells(e);
                w.write_record([r.condition_id.name().to_string(), i.to_string(), serde_json::to_string(g)?, v, lo, hi])?;
            }
        }
        Ok(())
    })?;
    Ok(RunOutput {
        summary: json!({ "kernel_id": s.kernel.fingerprint(), "reports": reports }),
        files: vec![("diagnostics.csv".into(), csv)],
    })
}

/// Writes `files`, `summary.json` and `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, seed: u64, out: &RunOutput) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut all: Vec<(String, Vec<u8>)> = out.files.clone();
    let mut summary = serde_json::to_vec_pretty(&json!({
        "analysis": cfg.analysis.name(),
        "seed": seed,
        "result": out.summary,
    }))?;
    summary.push(b'\n');
    all.insert(0, ("summary.json".into(), summary));
    for (name, bytes) in &all {
        fs::write(dir.join(name), bytes)?;
        entries.push(FileEntry {
            path: name.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = Manifest {
        config_sha256: cfg.hash(),
        seed,
        build: build_id(),
        analysis: cfg.analysis,
        files: entries,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

/// Seed from the config, then `EXLAB_SEED`, then 0.
pub fn resolve_seed(cfg: &ExperimentConfig) -> Result<u64> {
    if let Some(s) = cfg.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

/// Runs `cfg` and writes its artifacts. On a runtime guard trip a
/// `diagnostic.json` is written before the error is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<Manifest> {
    let seed = resolve_seed(cfg)?;
    match execute(cfg, seed) {
        Ok(out) => write_outputs(&cfg.output_dir, cfg, seed, &out),
        Err(e) => {
            if e.exit_code() == 3 {
                fs::create_dir_all(&cfg.output_dir)?;
                let text = serde_json::to_vec_pretty(&json!({
                    "analysis": cfg.analysis.name(),
                    "seed": seed,
                    "error": e.to_string(),
                }))?;
                fs::write(cfg.output_dir.join("diagnostic.json"), text)?;
            }
            Err(e)
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "exlab", version, about = "Exceedance clusters of heavy-tailed Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path of the chain.
    Simulate(RunArgs),
    /// Tail chain constants: c, extremal indices, sup moments.
    Tailchain(RunArgs),
    /// Regenerative cycles and the cycle-maximum tail fit.
    Cycles(RunArgs),
    /// Samples of the cluster Poisson limit.
    LimitSample(RunArgs),
    /// Exceedance process against its limit, and the maximum law.
    Converge(RunArgs),
    /// Condition checkers.
    Diagnose(RunArgs),
    /// List the built-in kernels.
    Kernels {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in kernel name.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Built-in kernel parameter, `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_reps: Option<usize>,
    /// Falls back to the config, then to EXLAB_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "out")]
    pub output_dir: Option<PathBuf>,
    /// Any config field by dotted path, `params.delta=0.5`. Values parse as
    /// JSON, or as strings when they are not JSON.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print the summary to standard output.
    #[arg(long)]
    pub json: bool,
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .ok_or_else(|| Error::invalid(format!("expected NAME=VALUE, got '{s}'")))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = json!({});
            } else {
                return Err(Error::invalid(format!("'{path}' does not name an object field")));
            }
        }
        let obj = node.as_object_mut().expect("object");
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*key).to_string()).or_insert(Value::Null);
    }
    Ok(())
}

impl RunArgs {
    /// The config file (or defaults) with every flag applied.
    pub fn config(&self, analysis: Analysis) -> Result<ExperimentConfig> {
        let mut value = match &self.config {
            Some(path) => serde_json::from_str::<Value>(&fs::read_to_string(path)?)?,
            None => serde_json::to_value(ExperimentConfig::new(analysis))?,
        };
        value["analysis"] = json!(analysis.name());
        if self.kernel.is_some() || !self.params.is_empty() {
            let name = match (&self.kernel, value["kernel"].get("builtin")) {
                (Some(k), _) => k.clone(),
                (None, Some(Value::String(k))) => k.clone(),
                _ => return Err(Error::invalid("--param needs a built-in kernel")),
            };
            let mut params = match (&self.kernel, value["kernel"].get("params")) {
                (None, Some(p)) => serde_json::from_value::<BTreeMap<String, f64>>(p.clone())?,
                _ => BTreeMap::new(),
            };
            for p in &self.params {
                let (k, v) = split_pair(p)?;
                let v: f64 = v.parse().map_err(|_| Error::invalid(format!("parameter '{k}' needs a number")))?;
                params.insert(k.to_string(), v);
            }
            value["kernel"] = json!({ "builtin": name, "params": params });
        }
        if let Some(a) = self.alpha {
            value["alpha"] = json!(a);
        }
        if let Some(n) = self.n {
            value["n"] = json!(n);
        }
        if let Some(r) = self.n_reps {
            value["n_reps"] = json!(r);
        }
        if let Some(s) = self.seed {
            value["seed"] = json!(s);
        }
        if let Some(o) = &self.output_dir {
            value["output_dir"] = json!(o);
        }
        for s in &self.sets {
            let (path, raw) = split_pair(s)?;
            let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, path, v)?;
        }
        Ok(serde_json::from_value(value)?)
    }
}

fn print_kernels(json_out: bool, out: &mut impl Write) -> Result<()> {
    let catalog = list_builtin_kernels();
    if json_out {
        writeln!(out, "{}", serde_json::to_string_pretty(&catalog)?)?;
        return Ok(());
    }
    for k in catalog {
        write!(out, "{:<13} {}", k.name, k.summary)?;
        if let Some(note) = k.note {
            write!(out, " [{note}]")?;
        }
        writeln!(out)?;
        for p in k.params {
            writeln!(out, "    {:<12} {:<8} {}", p.name, p.default, p.doc)?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let (analysis, args) = match cli.command {
        Command::Kernels { json } => return print_kernels(json, &mut std::io::stdout().lock()),
        Command::Simulate(a) => (Analysis::Simulate, a),
        Command::Tailchain(a) => (Analysis::Tailchain, a),
        Command::Cycles(a) => (Analysis::Cycles, a),
        Command::LimitSample(a) => (Analysis::LimitSample, a),
        Command::Converge(a) => (Analysis::Converge, a),
        Command::Diagnose(a) => (Analysis::Diagnose, a),
    };
    let threads = args.threads.unwrap_or(0);
    // a second global init only happens in tests; the pool already exists then
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let cfg = args.config(analysis)?;
    eprintln!("exlab: running {} into {}", analysis.name(), cfg.output_dir.display());
    let manifest = run(&cfg)?;
    let summary = fs::read_to_string(cfg.output_dir.join("summary.json"))?;
    if analysis == Analysis::Diagnose {
        let v: Value = serde_json::from_str(&summary)?;
        let reports: Vec<ConditionReport> = serde_json::from_value(v["result"]["reports"].clone())?;
        eprint!("{}", format_table(&reports, std::io::stderr().is_terminal()));
    }
    if args.json {
        print!("{summary}");
    }
    eprintln!("exlab: wrote {} files", manifest.files.len() + 1);
    Ok(())
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("exlab: error: {e}");
            e.exit_code()
        }
    }
}
