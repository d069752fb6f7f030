//! Experiment configuration, Monte Carlo replication, aggregation and trace
//! persistence.
//!
//! A configuration fixes one problem instance and one graph. Replica `r`
//! runs with seed `solver.seed + r`, which keys its initial point,
//! exploration directions and measurement noise.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{self, Certificate, MomentumModel, TheoryConstants};
use crate::error::{Error, Result};
use crate::graph::{self, WeightedDigraph};
use crate::problem::{
    default_domain, scaled_formation_problem, AggregativeProblem, FormationGains, FormationInstance, NoiseRefresh,
};
use crate::smoothing::{expected_increment_sq, ExplorationProcess, ExplorationSpec, MomentumSpec};
use crate::solver::{self, Algorithm, RunTrace, SolverConfig, TraceRow};

/// The problem instance of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// Random formation instance: targets uniform in `[target_low, target_high]^dim`.
    Formation {
        n_agents: usize,
        dim: usize,
        gamma: f64,
        #[serde(default)]
        target_low: f64,
        #[serde(default = "ten")]
        target_high: f64,
        instance_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gains: Option<FormationGains>,
    },
    /// Formation instance read from a JSON file.
    FormationFile {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gains: Option<FormationGains>,
    },
}

fn ten() -> f64 {
    10.0
}

impl ProblemSpec {
    pub fn instance(&self) -> Result<FormationInstance> {
        match self {
            ProblemSpec::Formation { n_agents, dim, gamma, target_low, target_high, instance_seed, .. } => {
                if *n_agents == 0 || *dim == 0 {
                    return Err(Error::InvalidInput("formation needs positive agent count and dimension".into()));
                }
                Ok(FormationInstance::random(*n_agents, *dim, *gamma, *target_low, *target_high, *instance_seed))
            }
            ProblemSpec::FormationFile { path, .. } => FormationInstance::from_json(&fs::read_to_string(path)?),
        }
    }

    pub fn build(&self) -> Result<AggregativeProblem> {
        let inst = self.instance()?;
        let (domain, gains) = match self {
            ProblemSpec::Formation { domain, gains, .. } | ProblemSpec::FormationFile { domain, gains, .. } => (*domain, *gains),
        };
        let domain = domain.unwrap_or_else(|| default_domain(&inst.targets));
        scaled_formation_problem(&inst.targets, &inst.gammas, domain, gains.unwrap_or_default())
    }
}

/// The communication graph of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    ErdosRenyi { edge_prob: f64, seed: u64 },
    File { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self, n_agents: usize) -> Result<WeightedDigraph> {
        match self {
            GraphSpec::ErdosRenyi { edge_prob, seed } => {
                if n_agents == 1 {
                    return Ok(WeightedDigraph::singleton());
                }
                graph::erdos_renyi(n_agents, *edge_prob, *seed)
            }
            GraphSpec::File { path } => WeightedDigraph::read_json(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `w_i ~ N(0, scale · I)`.
    pub scale: f64,
    #[serde(default)]
    pub refresh: NoiseRefresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub graph: GraphSpec,
    pub solver: SolverConfig,
    pub n_monte_carlo: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_format: OutputFormat,
}

impl ExperimentConfig {
    /// The formation experiment with its reference parameters: five robots in
    /// the plane, `γ_i = 2`, an Erdős–Rényi graph with edge probability 0.6,
    /// `α = 2·10⁻³`, `δ = 10⁻⁵`, ten replicas.
    pub fn benchmark_defaults(algorithm: Algorithm, k_max: usize, seed: u64) -> Self {
        let mut solver = SolverConfig::new(algorithm, 2e-3, 1e-5, k_max, seed);
        if algorithm == Algorithm::ArgfreeEm {
            solver.exploration = ExplorationSpec::Momentum {
                momentum: MomentumSpec::RandomSymmetric { low: 0.9, high: 1.0 },
                sigma_v: 0.16,
                sigma_u0: 1.0,
            };
        }
        Self {
            problem: ProblemSpec::Formation {
                n_agents: 5,
                dim: 2,
                gamma: 2.0,
                target_low: 0.0,
                target_high: 10.0,
                instance_seed: seed,
                domain: None,
                gains: None,
            },
            graph: GraphSpec::ErdosRenyi { edge_prob: 0.6, seed },
            solver,
            n_monte_carlo: 10,
            noise: None,
            output_dir: None,
            output_format: OutputFormat::Csv,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_monte_carlo == 0 {
            return Err(Error::InvalidInput("n_monte_carlo must be at least 1".into()));
        }
        if let Some(n) = &self.noise {
            if !(n.scale >= 0.0) {
                return Err(Error::InvalidInput("noise scale must be non-negative".into()));
            }
        }
        for path in [
            match &self.problem {
                ProblemSpec::FormationFile { path, .. } => Some(path),
                _ => None,
            },
            match &self.graph {
                GraphSpec::File { path } => Some(path),
                _ => None,
            },
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(Error::InvalidInput(format!("referenced file {} does not exist", path.display())));
            }
        }
        self.solver.validate()
    }

    /// Build the shared problem (without noise) and graph.
    pub fn build(&self) -> Result<(AggregativeProblem, WeightedDigraph)> {
        let problem = self.problem.build()?;
        let graph = self.graph.build(problem.n_agents())?;
        Ok((problem, graph))
    }
}

/// Mean and population standard deviation of one quantity per recorded row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedStats {
    pub algorithm: Algorithm,
    pub n_runs: usize,
    pub k: Vec<usize>,
    /// `(f − f*)/(f₀ − f*)` when `f*` is known, otherwise the raw loss.
    pub loss_convention: String,
    pub relative_loss: SeriesStats,
    pub grad_norm: SeriesStats,
    pub theta: Vec<SeriesStats>,
}

impl AggregatedStats {
    /// Aggregate completed runs of one configuration.
    pub fn from_traces(traces: &[RunTrace]) -> Result<Self> {
        let first = traces.first().ok_or_else(|| Error::InvalidInput("no traces to aggregate".into()))?;
        let ks: Vec<usize> = first.rows.iter().map(|r| r.k).collect();
        for t in traces {
            if t.rows.iter().map(|r| r.k).ne(ks.iter().copied()) {
                return Err(Error::InvalidInput("traces record different iterations".into()));
            }
        }
        let known = traces.iter().all(|t| t.f_star.is_some());
        let losses: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| match t.f_star {
                Some(fs) if known => relative_loss(t, fs),
                _ => Ok(t.rows.iter().map(|r| r.loss).collect()),
            })
            .collect::<Result<_>>()?;
        let column =
            |f: &dyn Fn(&TraceRow) -> f64| -> Vec<Vec<f64>> { traces.iter().map(|t| t.rows.iter().map(f).collect()).collect() };
        Ok(Self {
            algorithm: first.algorithm,
            n_runs: traces.len(),
            k: ks,
            loss_convention: if known { "(f - f*)/(f0 - f*)".into() } else { "f".into() },
            relative_loss: series(&losses),
            grad_norm: series(&column(&|r| r.grad_norm)),
            theta: (0..5).map(|j| series(&column(&|r| r.theta[j]))).collect(),
        })
    }

    pub fn terminal_relative_loss(&self) -> f64 {
        *self.relative_loss.mean.last().unwrap()
    }

    pub fn terminal_error(&self) -> f64 {
        *self.theta[0].mean.last().unwrap()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["k".to_string(), "relative_loss_mean".into(), "relative_loss_std".into()];
        header.extend(["grad_norm_mean".into(), "grad_norm_std".into()]);
        for j in 1..=5 {
            header.push(format!("theta_{j}_mean"));
            header.push(format!("theta_{j}_std"));
        }
        w.write_record(&header)?;
        for (idx, k) in self.k.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            let mut push = |s: &SeriesStats| {
                rec.push(fmt_f64(s.mean[idx]));
                rec.push(fmt_f64(s.std[idx]));
            };
            push(&self.relative_loss);
            push(&self.grad_norm);
            for t in &self.theta {
                push(t);
            }
            w.write_record(&rec)?;
        }
        into_string(w)
    }
}

/// Per-row mean and population standard deviation over runs.
fn series(runs: &[Vec<f64>]) -> SeriesStats {
    let n = runs.len() as f64;
    let len = runs[0].len();
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for i in 0..len {
        let m = runs.iter().map(|r| r[i]).sum::<f64>() / n;
        let v = runs.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / n;
        mean[i] = m;
        std[i] = v.sqrt();
    }
    SeriesStats { mean, std }
}

/// `(f(x_k) − f*)/(f(x₀) − f*)` for every recorded row.
pub fn relative_loss(trace: &RunTrace, f_star: f64) -> Result<Vec<f64>> {
    let f0 = trace.rows[0].loss;
    let denom = f0 - f_star;
    if denom == 0.0 {
        return Err(Error::InvalidInput("relative loss undefined: f(x₀) = f*".into()));
    }
    Ok(trace.rows.iter().map(|r| (r.loss - f_star) / denom).collect())
}

/// Result of a Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub stats: AggregatedStats,
    pub traces: Vec<RunTrace>,
}

/// Run all replicas (in parallel), aggregate, and persist when an output
/// directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (problem, graph) = cfg.build()?;
    let outcomes: Vec<Result<RunTrace>> = (0..cfg.n_monte_carlo as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.solver.seed.wrapping_add(r);
            run_replica(cfg, &problem, &graph, seed).map_err(|e| Error::Replica { seed, source: Box::new(e) })
        })
        .collect();
    let traces = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let stats = AggregatedStats::from_traces(&traces)?;
    if let Some(dir) = &cfg.output_dir {
        persist(cfg, dir, &traces, &stats)?;
        info!("wrote {} traces to {}", traces.len(), dir.display());
    }
    Ok(ExperimentResult { stats, traces })
}

fn run_replica(cfg: &ExperimentConfig, problem: &AggregativeProblem, graph: &WeightedDigraph, seed: u64) -> Result<RunTrace> {
    let mut p = problem.clone();
    if let Some(noise) = &cfg.noise {
        p = p.with_isotropic_noise(noise.scale, seed, noise.refresh)?;
    }
    let mut sc = cfg.solver.clone();
    sc.seed = seed;
    let trace = solver::run(p, graph.clone(), sc)?;
    info!("replica seed {seed} finished after {} iterations", trace.rows.last().map_or(0, |r| r.k));
    Ok(trace)
}

fn persist(cfg: &ExperimentConfig, dir: &Path, traces: &[RunTrace], stats: &AggregatedStats) -> Result<()> {
    fs::create_dir_all(dir)?;
    let name = cfg.solver.algorithm.name();
    let ext = match cfg.output_format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    for (r, t) in traces.iter().enumerate() {
        export_trace(t, dir.join(format!("trace_{name}_{r:03}.{ext}")), cfg.output_format)?;
    }
    match cfg.output_format {
        OutputFormat::Csv => fs::write(dir.join(format!("stats_{name}.csv")), stats.to_csv()?)?,
        OutputFormat::Json => fs::write(dir.join(format!("stats_{name}.json")), serde_json::to_string_pretty(stats)?)?,
    }
    let meta = serde_json::json!({
        "algorithm": name,
        "n_runs": stats.n_runs,
        "seeds": (0..cfg.n_monte_carlo as u64).map(|r| cfg.solver.seed.wrapping_add(r)).collect::<Vec<_>>(),
        "loss_convention": stats.loss_convention,
        "config": cfg,
    });
    fs::write(dir.join(format!("metadata_{name}.json")), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace files

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// CSV header: `k, x_<agent>_<coord>…, loss, grad_norm, theta_1…theta_5,
/// loss_evals, agg_evals`.
pub fn csv_header(local_dims: &[usize]) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    for (i, &ni) in local_dims.iter().enumerate() {
        h.extend((0..ni).map(|c| format!("x_{i}_{c}")));
    }
    h.extend(["loss".into(), "grad_norm".into()]);
    h.extend((1..=5).map(|j| format!("theta_{j}")));
    h.extend(["loss_evals".into(), "agg_evals".into()]);
    h
}

pub fn trace_to_csv(trace: &RunTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(&trace.local_dims))?;
    for row in &trace.rows {
        let mut rec = vec![row.k.to_string()];
        rec.extend(row.x.iter().map(|&v| fmt_f64(v)));
        rec.push(fmt_f64(row.loss));
        rec.push(fmt_f64(row.grad_norm));
        rec.extend(row.theta.iter().map(|&v| fmt_f64(v)));
        rec.push(row.loss_evals.to_string());
        rec.push(row.agg_evals.to_string());
        w.write_record(&rec)?;
    }
    into_string(w)
}

/// Rows and block layout recovered from a CSV trace. CSV files do not carry
/// the algorithm or `f*`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub local_dims: Vec<usize>,
    pub rows: Vec<TraceRow>,
}

pub fn trace_from_csv(text: &str) -> Result<TraceTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut local_dims: Vec<usize> = Vec::new();
    for name in header.iter().filter(|h| h.starts_with("x_")) {
        let mut parts = name[2..].split('_');
        let agent: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse(format!("bad column {name}")))?;
        if agent == local_dims.len() {
            local_dims.push(0);
        } else if agent + 1 != local_dims.len() {
            return Err(Error::Parse(format!("coordinate columns out of order at {name}")));
        }
        local_dims[agent] += 1;
    }
    if header != csv_header(&local_dims) {
        return Err(Error::Parse("unexpected trace header".into()));
    }
    let n: usize = local_dims.iter().sum();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| parse_f64(&rec[i]);
        let k = rec[0].parse().map_err(|_| Error::Parse(format!("bad iteration index {:?}", &rec[0])))?;
        let x = (1..=n).map(f).collect::<Result<Vec<_>>>()?;
        let mut theta = [0.0; 5];
        for (j, t) in theta.iter_mut().enumerate() {
            *t = f(n + 3 + j)?;
        }
        let count = |i: usize| rec[i].parse::<u64>().map_err(|_| Error::Parse(format!("bad counter {:?}", &rec[i])));
        rows.push(TraceRow {
            k,
            x,
            loss: f(n + 1)?,
            grad_norm: f(n + 2)?,
            theta,
            loss_evals: count(n + 8)?,
            agg_evals: count(n + 9)?,
            elapsed: 0.0,
        });
    }
    Ok(TraceTable { local_dims, rows })
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    k: usize,
    x: Vec<f64>,
    loss: f64,
    grad_norm: Option<f64>,
    theta: Vec<Option<f64>>,
    loss_evals: u64,
    agg_evals: u64,
}

#[derive(Serialize, Deserialize)]
struct JsonTrace {
    algorithm: Algorithm,
    local_dims: Vec<usize>,
    f_star: Option<f64>,
    rows: Vec<JsonRow>,
}

fn opt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

pub fn trace_to_json(trace: &RunTrace) -> Result<String> {
    let jt = JsonTrace {
        algorithm: trace.algorithm,
        local_dims: trace.local_dims.clone(),
        f_star: trace.f_star,
        rows: trace
            .rows
            .iter()
            .map(|r| JsonRow {
                k: r.k,
                x: r.x.clone(),
                loss: r.loss,
                grad_norm: opt(r.grad_norm),
                theta: r.theta.iter().map(|&v| opt(v)).collect(),
                loss_evals: r.loss_evals,
                agg_evals: r.agg_evals,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&jt)?)
}

pub fn trace_from_json(text: &str) -> Result<RunTrace> {
    let jt: JsonTrace = serde_json::from_str(text)?;
    let rows = jt
        .rows
        .into_iter()
        .map(|r| {
            if r.theta.len() != 5 {
                return Err(Error::Parse("theta must have five components".into()));
            }
            let mut theta = [f64::NAN; 5];
            for (t, v) in theta.iter_mut().zip(r.theta) {
                *t = v.unwrap_or(f64::NAN);
            }
            Ok(TraceRow {
                k: r.k,
                x: r.x,
                loss: r.loss,
                grad_norm: r.grad_norm.unwrap_or(f64::NAN),
                theta,
                loss_evals: r.loss_evals,
                agg_evals: r.agg_evals,
                elapsed: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RunTrace { algorithm: jt.algorithm, local_dims: jt.local_dims, f_star: jt.f_star, rows })
}

pub fn export_trace(trace: &RunTrace, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => trace_to_csv(trace)?,
        OutputFormat::Json => trace_to_json(trace)?,
    };
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    Alpha,
    /// `B = κI` with `Σ_v = (1 − κ²)·I`, so the stationary exploration
    /// variance stays at 1 (the i.i.d. value); runs ARGFree-EM.
    MomentumKappa,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Delta => "delta",
            SweepParam::Alpha => "alpha",
            SweepParam::MomentumKappa => "momentum_kappa",
        })
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(SweepParam::Delta),
            "alpha" => Ok(SweepParam::Alpha),
            "momentum_kappa" => Ok(SweepParam::MomentumKappa),
            other => Err(Error::InvalidInput(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Mean over replicas of the final `‖x − x*‖`.
    pub mean_terminal_error: f64,
    pub mean_terminal_relative_loss: f64,
}

/// The configuration `sweep` runs for one parameter value.
pub fn sweep_config(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match param {
        SweepParam::Delta => c.solver.delta = value,
        SweepParam::Alpha => c.solver.alpha = value,
        SweepParam::MomentumKappa => {
            if !(0.0..1.0).contains(&value) {
                return Err(Error::InvalidInput(format!("momentum κ = {value} must lie in [0, 1)")));
            }
            c.solver.algorithm = Algorithm::ArgfreeEm;
            c.solver.exploration = ExplorationSpec::Momentum {
                momentum: MomentumSpec::Scalar { kappa: value },
                sigma_v: 1.0 - value * value,
                sigma_u0: 1.0,
            };
        }
    }
    if let Some(dir) = &cfg.output_dir {
        c.output_dir = Some(dir.join(format!("sweep_{param}_{value}")));
    }
    Ok(c)
}

/// One experiment per value; terminal statistics per row.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let res = run_experiment(&sweep_config(cfg, param, value)?)?;
            Ok(SweepRow {
                value,
                mean_terminal_error: res.stats.terminal_error(),
                mean_terminal_relative_loss: res.stats.terminal_relative_loss(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Certificates

/// Certificate for the configured problem, graph and stepsizes. The
/// increment moment `E‖u_{k+1} − u_k‖²` is `2n` for i.i.d. exploration and
/// the stationary trace formula (summed over agents) with momentum.
pub fn certify_experiment(cfg: &ExperimentConfig) -> Result<Certificate> {
    let (problem, graph) = cfg.build()?;
    let report = graph::validate(&graph);
    let constants = TheoryConstants::from_problem(&problem, &report)?;
    let n = problem.dim();
    let local_dims: Vec<usize> = (0..problem.n_agents()).map(|i| problem.local_dim(i)).collect();
    let (e_du_sq, momentum) = match &cfg.solver.exploration {
        ExplorationSpec::Iid => (2.0 * n as f64, None),
        spec => {
            let ids = (0..local_dims.len() as u64).collect();
            let ex = ExplorationProcess::from_spec(spec, &local_dims, cfg.solver.seed, ids)?;
            let mut b = DMatrix::zeros(n, n);
            let mut sv = DMatrix::zeros(n, n);
            let mut e = 0.0;
            for i in 0..local_dims.len() {
                let bi = ex.momentum_matrix(i).expect("momentum process");
                let svi = ex.innovation_covariance(i).expect("momentum process");
                let r = problem.block(i);
                b.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(bi);
                sv.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(svi);
                e += expected_increment_sq(bi, svi)?;
            }
            (e, Some(MomentumModel { b, sigma_v: sv }))
        }
    };
    certify::certify(cfg.solver.alpha, cfg.solver.delta, &constants, e_du_sq, momentum.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(k_max: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::benchmark_defaults(Algorithm::Argfree, k_max, 3);
        c.n_monte_carlo = 3;
        c
    }

    #[test]
    fn config_round_trip() {
        let mut c = ExperimentConfig::benchmark_defaults(Algorithm::ArgfreeEm, 100, 1);
        c.noise = Some(NoiseSpec { scale: 0.2, refresh: NoiseRefresh::PerRound });
        let s = c.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&s).unwrap(), c);
    }

    #[test]
    fn missing_file_rejected() {
        let mut c = small(1);
        c.graph = GraphSpec::File { path: "/nonexistent/graph.json".into() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_replica_initial_row() {
        let mut c = small(0);
        c.n_monte_carlo = 1;
        let res = run_experiment(&c).unwrap();
        assert_eq!(res.stats.k, vec![0]);
        assert_eq!(res.stats.relative_loss.mean, vec![1.0]);
        assert_eq!(res.stats.relative_loss.std, vec![0.0]);
    }

    #[test]
    fn relative_loss_normalization() {
        let res = run_experiment(&small(20)).unwrap();
        let t = &res.traces[0];
        let rel = relative_loss(t, t.f_star.unwrap()).unwrap();
        assert_eq!(rel[0], 1.0);
        let mut at_opt = t.clone();
        at_opt.rows[1].loss = t.f_star.unwrap();
        assert_eq!(relative_loss(&at_opt, t.f_star.unwrap()).unwrap()[1], 0.0);
        assert!(relative_loss(t, t.rows[0].loss).is_err());
    }

    #[test]
    fn csv_round_trip_and_columns() {
        let res = run_experiment(&small(5)).unwrap();
        let t = &res.traces[0];
        let text = trace_to_csv(t).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').filter(|h| h.starts_with("x_")).count(), 10);
        let back = trace_from_csv(&text).unwrap();
        assert_eq!(back.local_dims, t.local_dims);
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn json_round_trip_with_missing_values() {
        let mut c = small(3);
        c.solver.algorithm = Algorithm::ExactGradientBaseline;
        let t = run_experiment(&c).unwrap().traces.remove(0);
        assert!(t.rows[0].theta[2].is_nan());
        assert_eq!(trace_from_json(&trace_to_json(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn sweep_rows_follow_values() {
        let rows = sweep(&small(5), SweepParam::Delta, &[1e-4]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, 1e-4);
        let c = sweep_config(&small(5), SweepParam::MomentumKappa, 0.5).unwrap();
        assert_eq!(c.solver.algorithm, Algorithm::ArgfreeEm);
        assert!(sweep_config(&small(5), SweepParam::MomentumKappa, 1.0).is_err());
    }

    #[test]
    fn replica_failure_carries_seed() {
        let mut c = small(200);
        c.solver.algorithm = Algorithm::ExactGradientBaseline;
        c.solver.alpha = 50.0;
        match run_experiment(&c).unwrap_err() {
            Error::Replica { seed, source } => {
                assert_eq!(seed, 3);
                assert!(source.is_numerical());
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn certificate_of_benchmark_config() {
        let cert = certify_experiment(&ExperimentConfig::benchmark_defaults(Algorithm::Argfree, 10, 42)).unwrap();
        assert_eq!(cert.e_du_sq, 20.0);
        assert!(cert.eta_numeric > 0.0);
        assert!(cert.epsilon > 0.0 && cert.epsilon_em.is_none());
        let em = certify_experiment(&ExperimentConfig::benchmark_defaults(Algorithm::ArgfreeEm, 10, 42)).unwrap();
        assert!(em.epsilon_em.unwrap() > 0.0);
    }
}
