//! Synchronous-round engines: ARGFree, ARGFree-EM and an exact-gradient
//! tracking baseline.
//!
//! Each ARGFree round performs, for every agent `i`:
//!
//! 1. descent `x_i ← x_i − (α/δ)(p_i − fp_i)·d_i`, with `d_i = u_i` or
//!    `d_i = Σ_{u,i}⁻¹u_i` (EM);
//! 2. a new exploration direction `u_i` (and covariance, EM);
//! 3. dynamic consensus tracking of `φ_i(x_i)`, `φ_i(x_i + δu_i)`,
//!    `f̃_i(x_i, σ_i)` and `f̃_i(x_i + δu_i, s_i)` into `σ_i`, `s_i`, `fp_i`, `p_i`.
//!
//! Step 3 issues two loss and two aggregation queries per agent; the values
//! from the previous round are cached rather than re-queried.

use std::time::Instant;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::certify::{theory_violations, TheoryConstants};
use crate::error::{Error, Result};
use crate::graph::{consensus_gap, validate, WeightedDigraph};
use crate::problem::AggregativeProblem;
use crate::rng::{self, Purpose};
use crate::smoothing::{ExplorationProcess, ExplorationSpec};

/// Iterates with `‖x‖` above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Argfree,
    ArgfreeEm,
    ExactGradientBaseline,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Argfree => "argfree",
            Algorithm::ArgfreeEm => "argfree_em",
            Algorithm::ExactGradientBaseline => "exact_gradient_baseline",
        }
    }
}

/// How `x⁰` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Every coordinate uniform in `[low, high]`, keyed by agent id.
    Uniform {
        low: f64,
        high: f64,
    },
    Given {
        x: Vec<f64>,
    },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Uniform { low: 0.0, high: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub delta: f64,
    #[serde(default)]
    pub exploration: ExplorationSpec,
    pub k_max: usize,
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub warn_on_theory_violation: bool,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Labels keying each agent's random streams; defaults to `0..N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_ids: Option<Vec<u64>>,
}

fn default_record_every() -> usize {
    1
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, alpha: f64, delta: f64, k_max: usize, seed: u64) -> Self {
        Self {
            algorithm,
            alpha,
            delta,
            exploration: ExplorationSpec::Iid,
            k_max,
            seed,
            record_every: 1,
            warn_on_theory_violation: false,
            initial_state: InitialState::default(),
            agent_ids: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("stepsize α = {} must be positive", self.alpha)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput(format!("smoothing step δ = {} must be positive", self.delta)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be at least 1".into()));
        }
        if let InitialState::Uniform { low, high } = self.initial_state {
            if !(low <= high) {
                return Err(Error::InvalidInput("initial box needs low ≤ high".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct OracleCache {
    phi_x: DVector<f64>,
    phi_xu: DVector<f64>,
    loss_x: DVector<f64>,
    loss_xu: DVector<f64>,
    grad_x: DVector<f64>,
    grad_sigma: DVector<f64>,
    jacobians: Vec<DMatrix<f64>>,
}

/// Stacked per-agent state. Vectors are concatenations of agent blocks;
/// `sigma`, `s`, `y` have blocks of length `d`, `fp` and `p` one entry per
/// agent. Fields unused by an algorithm are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub sigma: DVector<f64>,
    pub s: DVector<f64>,
    pub fp: DVector<f64>,
    pub p: DVector<f64>,
    pub y: DVector<f64>,
    pub sigma_u: Vec<DMatrix<f64>>,
    cache: OracleCache,
}

/// `(‖x − x*‖, ‖σ − 𝒥σ‖, ‖s − 𝒥s‖, ‖fp − 𝒥fp‖, ‖p − 𝒥p‖)`; the first entry is
/// dropped when `x*` is unknown.
pub fn theta(state: &SolverState, n_agents: usize, x_star: Option<&DVector<f64>>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(5);
    if let Some(xs) = x_star {
        out.push((&state.x - xs).norm());
    }
    for v in [&state.sigma, &state.s, &state.fp, &state.p] {
        out.push(consensus_gap(v.as_slice(), n_agents)?);
    }
    Ok(out)
}

/// One recorded iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub loss: f64,
    /// `NaN` when the problem has no analytic gradient.
    pub grad_norm: f64,
    /// `NaN` for components that are undefined (unknown `x*`, or tracking
    /// variables the baseline does not have).
    pub theta: [f64; 5],
    pub loss_evals: u64,
    pub agg_evals: u64,
    /// Wall-clock seconds since the run started; not part of equality.
    #[serde(default)]
    pub elapsed: f64,
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for TraceRow {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.x.len() == other.x.len()
            && self.x.iter().zip(&other.x).all(|(a, b)| same(*a, *b))
            && same(self.loss, other.loss)
            && same(self.grad_norm, other.grad_norm)
            && self.theta.iter().zip(&other.theta).all(|(a, b)| same(*a, *b))
            && self.loss_evals == other.loss_evals
            && self.agg_evals == other.agg_evals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub local_dims: Vec<usize>,
    /// Optimal value, when the problem knows its minimizer.
    pub f_star: Option<f64>,
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn n_agents(&self) -> usize {
        self.local_dims.len()
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("a trace always holds the initial row")
    }
}

/// A running instance of one algorithm on one problem and graph.
pub struct Solver {
    problem: AggregativeProblem,
    graph: WeightedDigraph,
    config: SolverConfig,
    exploration: Option<ExplorationProcess>,
    state: SolverState,
    x_star: Option<DVector<f64>>,
    agg_dim: usize,
}

impl Solver {
    /// Build the initial state.
    pub fn new(problem: AggregativeProblem, graph: WeightedDigraph, config: SolverConfig) -> Result<Self> {
        Self::init_with_directions(problem, graph, config, None)
    }

    /// Like [`new`](Self::new), with `u⁰` supplied instead of drawn.
    pub fn init_with_directions(
        mut problem: AggregativeProblem,
        graph: WeightedDigraph,
        config: SolverConfig,
        u0: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        config.validate()?;
        let n_agents = problem.n_agents();
        if graph.n_agents() != n_agents {
            return Err(Error::Dimension { what: "graph agents", expected: n_agents, got: graph.n_agents() });
        }
        let report = validate(&graph);
        if !report.is_valid() {
            return Err(Error::InvalidGraph(format!(
                "doubly stochastic: {}, strongly connected: {}",
                report.doubly_stochastic, report.strongly_connected
            )));
        }
        let agent_ids = match &config.agent_ids {
            Some(ids) if ids.len() != n_agents => {
                return Err(Error::Dimension { what: "agent ids", expected: n_agents, got: ids.len() })
            }
            Some(ids) => ids.clone(),
            None => (0..n_agents as u64).collect(),
        };
        let local_dims: Vec<usize> = (0..n_agents).map(|i| problem.local_dim(i)).collect();
        let x0 = initial_point(&config.initial_state, &problem, &agent_ids, config.seed)?;

        let baseline = config.algorithm == Algorithm::ExactGradientBaseline;
        if baseline && !problem.has_gradients() {
            return Err(Error::MissingGradients);
        }
        let mut exploration = if baseline {
            None
        } else {
            Some(ExplorationProcess::from_spec(&config.exploration, &local_dims, config.seed, agent_ids)?)
        };
        if let (Some(ex), Some(dirs)) = (exploration.as_mut(), u0) {
            if dirs.len() != n_agents {
                return Err(Error::Dimension { what: "initial directions", expected: n_agents, got: dirs.len() });
            }
            for (i, d) in dirs.into_iter().enumerate() {
                if d.len() != local_dims[i] {
                    return Err(Error::Dimension { what: "initial direction", expected: local_dims[i], got: d.len() });
                }
                ex.set_u(i, d);
            }
        }

        problem.begin_measurement(0);
        let agg_dim = problem.agg_dim();
        let x_star = problem.minimizer();
        let state = if baseline {
            init_baseline(&mut problem, x0)?
        } else {
            init_argfree(&mut problem, x0, exploration.as_ref().unwrap(), config.delta)
        };
        let solver = Self { problem, graph, config, exploration, state, x_star, agg_dim };
        solver.check_state()?;
        Ok(solver)
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn problem(&self) -> &AggregativeProblem {
        &self.problem
    }

    pub fn graph(&self) -> &WeightedDigraph {
        &self.graph
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn exploration(&self) -> Option<&ExplorationProcess> {
        self.exploration.as_ref()
    }

    /// One synchronous round with freshly drawn directions.
    pub fn step(&mut self) -> Result<()> {
        self.step_with(None)
    }

    /// One round; `next_u`, when given, replaces the drawn `u^{k+1}`.
    pub fn step_with(&mut self, next_u: Option<&[DVector<f64>]>) -> Result<()> {
        match self.config.algorithm {
            Algorithm::ExactGradientBaseline => self.baseline_step()?,
            _ => self.argfree_step(next_u)?,
        }
        self.check_state()
    }

    fn argfree_step(&mut self, next_u: Option<&[DVector<f64>]>) -> Result<()> {
        let n_agents = self.problem.n_agents();
        let d = self.agg_dim;
        let (alpha, delta) = (self.config.alpha, self.config.delta);
        let em = self.config.algorithm == Algorithm::ArgfreeEm;
        let ex = self.exploration.as_mut().expect("gradient-free solvers own an exploration process");
        let st = &mut self.state;

        // descent with the round-k directions
        for i in 0..n_agents {
            let dir = if em { ex.sigma_inv_u(i)? } else { ex.u(i).clone() };
            let block = self.problem.block(i);
            let scale = alpha / delta * (st.p[i] - st.fp[i]);
            let mut xi = st.x.rows_mut(block.start, block.len());
            xi.axpy(-scale, &dir, 1.0);
        }

        ex.step()?;
        if let Some(dirs) = next_u {
            for (i, u) in dirs.iter().enumerate() {
                ex.set_u(i, u.clone());
            }
        }
        for i in 0..n_agents {
            let block = self.problem.block(i);
            st.u.rows_mut(block.start, block.len()).copy_from(ex.u(i));
            st.sigma_u[i] = ex.sigma_u(i).clone();
        }

        let k = st.k;
        self.problem.begin_measurement(k as u64 + 1);
        let c = &mut st.cache;

        let mut phi_x = DVector::zeros(n_agents * d);
        let mut phi_xu = DVector::zeros(n_agents * d);
        let mut xu = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let block = self.problem.block(i);
            let xi = st.x.rows(block.start, block.len()).clone_owned();
            let xui = &xi + st.u.rows(block.start, block.len()) * delta;
            phi_x.rows_mut(i * d, d).copy_from(&self.problem.agg_map(i, xi.as_slice()));
            phi_xu.rows_mut(i * d, d).copy_from(&self.problem.agg_map(i, xui.as_slice()));
            xu.push(xui);
        }
        st.sigma = self.graph.mix(&st.sigma, d) + &phi_x - &c.phi_x;
        st.s = self.graph.mix(&st.s, d) + &phi_xu - &c.phi_xu;

        let mut loss_x = DVector::zeros(n_agents);
        let mut loss_xu = DVector::zeros(n_agents);
        for i in 0..n_agents {
            let block = self.problem.block(i);
            let xi = st.x.rows(block.start, block.len()).clone_owned();
            loss_x[i] = self.problem.local_loss(i, xi.as_slice(), st.sigma.rows(i * d, d).as_slice());
            loss_xu[i] = self.problem.local_loss(i, xu[i].as_slice(), st.s.rows(i * d, d).as_slice());
        }
        st.fp = self.graph.mix(&st.fp, 1) + &loss_x - &c.loss_x;
        st.p = self.graph.mix(&st.p, 1) + &loss_xu - &c.loss_xu;

        c.phi_x = phi_x;
        c.phi_xu = phi_xu;
        c.loss_x = loss_x;
        c.loss_xu = loss_xu;
        st.k += 1;
        Ok(())
    }

    /// `x_i ← x_i − α(∇₁f̃_i(x_i, σ_i) + ∇φ_i(x_i)·y_i)`, then track
    /// `σ` and `y = (1/N)Σ∇₂f̃_j` by dynamic consensus.
    fn baseline_step(&mut self) -> Result<()> {
        let n_agents = self.problem.n_agents();
        let d = self.agg_dim;
        let alpha = self.config.alpha;
        let st = &mut self.state;
        {
            let c = &st.cache;
            for i in 0..n_agents {
                let block = self.problem.block(i);
                let dir = c.grad_x.rows(block.start, block.len()) + &c.jacobians[i] * st.y.rows(i * d, d);
                let mut xi = st.x.rows_mut(block.start, block.len());
                xi.axpy(-alpha, &dir, 1.0);
            }
        }
        let k = st.k;
        self.problem.begin_measurement(k as u64 + 1);

        let mut phi_x = DVector::zeros(n_agents * d);
        for i in 0..n_agents {
            let block = self.problem.block(i);
            let xi = st.x.rows(block.start, block.len()).clone_owned();
            phi_x.rows_mut(i * d, d).copy_from(&self.problem.agg_map(i, xi.as_slice()));
        }
        st.sigma = self.graph.mix(&st.sigma, d) + &phi_x - &st.cache.phi_x;
        let (grad_x, grad_sigma, jacobians) = baseline_gradients(&mut self.problem, &st.x, &st.sigma)?;
        st.y = self.graph.mix(&st.y, d) + &grad_sigma - &st.cache.grad_sigma;
        st.cache.phi_x = phi_x;
        st.cache.grad_x = grad_x;
        st.cache.grad_sigma = grad_sigma;
        st.cache.jacobians = jacobians;
        st.k += 1;
        Ok(())
    }

    fn check_state(&self) -> Result<()> {
        let st = &self.state;
        let fields = [("x", &st.x), ("sigma", &st.sigma), ("s", &st.s), ("fp", &st.fp), ("p", &st.p), ("y", &st.y)];
        for (name, v) in fields {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { iteration: st.k, what: format!("tracking variable {name}") });
            }
        }
        let norm = st.x.norm();
        if norm > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { iteration: st.k, norm });
        }
        Ok(())
    }

    /// θ of the current state, `NaN` for undefined components.
    pub fn theta(&self) -> [f64; 5] {
        let st = &self.state;
        let n = self.problem.n_agents();
        let gap = |v: &DVector<f64>| {
            if v.is_empty() {
                f64::NAN
            } else {
                consensus_gap(v.as_slice(), n).unwrap_or(f64::NAN)
            }
        };
        [self.x_star.as_ref().map_or(f64::NAN, |xs| (&st.x - xs).norm()), gap(&st.sigma), gap(&st.s), gap(&st.fp), gap(&st.p)]
    }

    /// Snapshot of the current iterate. Loss and gradient norm are exact,
    /// noise-free and not counted as oracle queries.
    pub fn record(&self, started: Instant) -> Result<TraceRow> {
        let x = self.state.x.as_slice();
        let counts = self.problem.oracle_counts();
        Ok(TraceRow {
            k: self.state.k,
            x: x.to_vec(),
            loss: self.problem.exact_loss(x)?,
            grad_norm: self.problem.exact_gradient(x).map_or(f64::NAN, |g| g.norm()),
            theta: self.theta(),
            loss_evals: counts.total_loss_evals(),
            agg_evals: counts.total_agg_evals(),
            elapsed: started.elapsed().as_secs_f64(),
        })
    }

    /// Execute `k_max` rounds, recording every `record_every` rounds and at
    /// the end.
    pub fn run(mut self) -> Result<RunTrace> {
        let started = Instant::now();
        let mut rows = vec![self.record(started)?];
        for k in 1..=self.config.k_max {
            self.step()?;
            if k % self.config.record_every == 0 || k == self.config.k_max {
                rows.push(self.record(started)?);
            }
        }
        let f_star = match &self.x_star {
            Some(xs) => Some(self.problem.exact_loss(xs.as_slice())?),
            None => None,
        };
        Ok(RunTrace {
            algorithm: self.config.algorithm,
            local_dims: (0..self.problem.n_agents()).map(|i| self.problem.local_dim(i)).collect(),
            f_star,
            rows,
        })
    }
}

/// Run one configuration to completion, warning about violated theory
/// preconditions when asked to.
pub fn run(problem: AggregativeProblem, graph: WeightedDigraph, config: SolverConfig) -> Result<RunTrace> {
    if config.warn_on_theory_violation {
        if let Ok(c) = TheoryConstants::from_problem(&problem, &validate(&graph)) {
            for v in theory_violations(config.alpha, config.delta, &c) {
                warn!("theory precondition violated: {v}");
            }
        }
    }
    Solver::new(problem, graph, config)?.run()
}

fn initial_point(init: &InitialState, problem: &AggregativeProblem, ids: &[u64], seed: u64) -> Result<DVector<f64>> {
    match init {
        InitialState::Given { x } => {
            if x.len() != problem.dim() {
                return Err(Error::Dimension { what: "initial state", expected: problem.dim(), got: x.len() });
            }
            Ok(DVector::from_column_slice(x))
        }
        InitialState::Uniform { low, high } => {
            let mut x = DVector::zeros(problem.dim());
            for (i, &id) in ids.iter().enumerate() {
                let mut r = rng::stream(seed, Purpose::InitialState, id, 0);
                for j in problem.block(i) {
                    x[j] = if low == high { *low } else { r.random_range(*low..=*high) };
                }
            }
            Ok(x)
        }
    }
}

fn init_argfree(problem: &mut AggregativeProblem, x: DVector<f64>, ex: &ExplorationProcess, delta: f64) -> SolverState {
    let n_agents = problem.n_agents();
    let d = problem.agg_dim();
    let mut u = DVector::zeros(problem.dim());
    let mut phi_x = DVector::zeros(n_agents * d);
    let mut phi_xu = DVector::zeros(n_agents * d);
    let mut loss_x = DVector::zeros(n_agents);
    let mut loss_xu = DVector::zeros(n_agents);
    for i in 0..n_agents {
        let block = problem.block(i);
        u.rows_mut(block.start, block.len()).copy_from(ex.u(i));
        let xi = x.rows(block.start, block.len()).clone_owned();
        let xui = &xi + ex.u(i) * delta;
        let sigma_i = problem.agg_map(i, xi.as_slice());
        let s_i = problem.agg_map(i, xui.as_slice());
        loss_x[i] = problem.local_loss(i, xi.as_slice(), sigma_i.as_slice());
        loss_xu[i] = problem.local_loss(i, xui.as_slice(), s_i.as_slice());
        phi_x.rows_mut(i * d, d).copy_from(&sigma_i);
        phi_xu.rows_mut(i * d, d).copy_from(&s_i);
    }
    SolverState {
        k: 0,
        x,
        u,
        sigma: phi_x.clone(),
        s: phi_xu.clone(),
        fp: loss_x.clone(),
        p: loss_xu.clone(),
        y: DVector::zeros(0),
        sigma_u: (0..n_agents).map(|i| ex.sigma_u(i).clone()).collect(),
        cache: OracleCache {
            phi_x,
            phi_xu,
            loss_x,
            loss_xu,
            grad_x: DVector::zeros(0),
            grad_sigma: DVector::zeros(0),
            jacobians: Vec::new(),
        },
    }
}

fn baseline_gradients(
    problem: &mut AggregativeProblem,
    x: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>)> {
    let n_agents = problem.n_agents();
    let d = problem.agg_dim();
    let mut grad_x = DVector::zeros(problem.dim());
    let mut grad_sigma = DVector::zeros(n_agents * d);
    let mut jacobians = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let block = problem.block(i);
        let xi = x.rows(block.start, block.len()).clone_owned();
        let (g1, g2) = problem.local_gradients(i, xi.as_slice(), sigma.rows(i * d, d).as_slice())?;
        grad_x.rows_mut(block.start, block.len()).copy_from(&g1);
        grad_sigma.rows_mut(i * d, d).copy_from(&g2);
        jacobians.push(problem.agg_jacobian(i, xi.as_slice())?);
    }
    Ok((grad_x, grad_sigma, jacobians))
}

fn init_baseline(problem: &mut AggregativeProblem, x: DVector<f64>) -> Result<SolverState> {
    let n_agents = problem.n_agents();
    let d = problem.agg_dim();
    let mut phi_x = DVector::zeros(n_agents * d);
    for i in 0..n_agents {
        let block = problem.block(i);
        let xi = x.rows(block.start, block.len()).clone_owned();
        phi_x.rows_mut(i * d, d).copy_from(&problem.agg_map(i, xi.as_slice()));
    }
    let (grad_x, grad_sigma, jacobians) = baseline_gradients(problem, &x, &phi_x)?;
    Ok(SolverState {
        k: 0,
        u: DVector::zeros(0),
        sigma: phi_x.clone(),
        s: DVector::zeros(0),
        fp: DVector::zeros(0),
        p: DVector::zeros(0),
        y: grad_sigma.clone(),
        sigma_u: Vec::new(),
        cache: OracleCache {
            phi_x,
            phi_xu: DVector::zeros(0),
            loss_x: DVector::zeros(0),
            loss_xu: DVector::zeros(0),
            grad_x,
            grad_sigma,
            jacobians,
        },
        x,
    })
}
