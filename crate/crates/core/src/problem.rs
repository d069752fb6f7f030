//! Aggregative cooperative optimization instances behind an oracle-only
//! interface.
//!
//! An instance is a set of `N` local losses `f̃_i(x_i, σ)` coupled through the
//! aggregative variable `σ(x) = (1/N) Σ_i φ_i(x_i)`; the global objective is
//! `f(x) = (1/N) Σ_i f̃_i(x_i, σ(x))`. Solvers only see per-agent oracle
//! queries, which [`AggregativeProblem`] counts. Analytic extras (gradients,
//! the minimizer, regularity constants) are optional and exist for the
//! exact-gradient baseline and for diagnostics.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};

/// Regularity constants of an instance: strong convexity `mu` and the
/// Lipschitz constants of `f` (`l0`), `∇f` (`l1`), the aggregation maps
/// (`l_phi`) and the local losses (`l0_hat`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    pub l0: f64,
    pub l1: f64,
    pub l_phi: f64,
    pub l0_hat: f64,
}

/// The raw model. Implementations must be pure functions of their inputs.
pub trait AggregativeModel: Send + Sync {
    fn n_agents(&self) -> usize;
    fn local_dim(&self, agent: usize) -> usize;
    fn agg_dim(&self) -> usize;
    /// `f̃_i(x_i, σ)`.
    fn local_loss(&self, agent: usize, x_i: &[f64], sigma: &[f64]) -> f64;
    /// `φ_i(x_i)`, of length [`agg_dim`](Self::agg_dim).
    fn agg_map(&self, agent: usize, x_i: &[f64]) -> Vec<f64>;

    /// `(∇₁f̃_i, ∇₂f̃_i)` at `(x_i, σ)`.
    fn local_gradients(&self, _agent: usize, _x_i: &[f64], _sigma: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
    /// `∇φ_i(x_i)` as an `n_i × d` matrix.
    fn agg_jacobian(&self, _agent: usize, _x_i: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    fn minimizer(&self) -> Option<DVector<f64>> {
        None
    }
    fn constants(&self) -> Option<ProblemConstants> {
        None
    }
}

/// Per-agent oracle query counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub loss_evals: Vec<u64>,
    pub agg_evals: Vec<u64>,
    pub gradient_evals: Vec<u64>,
}

impl OracleCounters {
    fn new(n: usize) -> Self {
        Self { loss_evals: vec![0; n], agg_evals: vec![0; n], gradient_evals: vec![0; n] }
    }

    pub fn total_loss_evals(&self) -> u64 {
        self.loss_evals.iter().sum()
    }

    pub fn total_agg_evals(&self) -> u64 {
        self.agg_evals.iter().sum()
    }

    pub fn total_gradient_evals(&self) -> u64 {
        self.gradient_evals.iter().sum()
    }
}

/// When a noisy oracle draws a new perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRefresh {
    /// One draw per agent per measurement epoch (solver round), shared by
    /// every query of that round.
    #[default]
    PerRound,
    /// A fresh draw for every single oracle query.
    PerCall,
}

#[derive(Clone)]
struct MeasurementNoise {
    factors: Vec<DMatrix<f64>>,
    seed: u64,
    refresh: NoiseRefresh,
    calls: Vec<u64>,
}

/// A counted, optionally noisy view of an [`AggregativeModel`].
///
/// Clones share the model but carry their own counters and noise epoch, so
/// Monte Carlo replicas can each own one.
#[derive(Clone)]
pub struct AggregativeProblem {
    model: Arc<dyn AggregativeModel>,
    offsets: Vec<usize>,
    noise: Option<MeasurementNoise>,
    epoch: u64,
    counters: OracleCounters,
}

impl fmt::Debug for AggregativeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AggregativeProblem")
            .field("n_agents", &self.n_agents())
            .field("dim", &self.dim())
            .field("agg_dim", &self.agg_dim())
            .field("noisy", &self.noise.is_some())
            .field("counters", &self.counters)
            .finish()
    }
}

impl AggregativeProblem {
    pub fn new(model: Arc<dyn AggregativeModel>) -> Result<Self> {
        let n = model.n_agents();
        if n == 0 {
            return Err(Error::InvalidInput("problem needs at least one agent".into()));
        }
        if model.agg_dim() == 0 {
            return Err(Error::InvalidInput("aggregative variable must have positive dimension".into()));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            let ni = model.local_dim(i);
            if ni == 0 {
                return Err(Error::InvalidInput(format!("agent {i} has an empty decision variable")));
            }
            offsets.push(offsets[i] + ni);
        }
        Ok(Self { model, offsets, noise: None, epoch: 0, counters: OracleCounters::new(n) })
    }

    pub fn model(&self) -> &Arc<dyn AggregativeModel> {
        &self.model
    }

    pub fn n_agents(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn local_dim(&self, agent: usize) -> usize {
        self.offsets[agent + 1] - self.offsets[agent]
    }

    /// Total decision dimension `n = Σ n_i`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn agg_dim(&self) -> usize {
        self.model.agg_dim()
    }

    /// Index range of agent `i` inside a stacked decision vector.
    pub fn block(&self, agent: usize) -> std::ops::Range<usize> {
        self.offsets[agent]..self.offsets[agent + 1]
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.is_some()
    }

    pub fn has_gradients(&self) -> bool {
        let x = vec![0.0; self.local_dim(0)];
        let s = vec![0.0; self.agg_dim()];
        self.model.local_gradients(0, &x, &s).is_some() && self.model.agg_jacobian(0, &x).is_some()
    }

    pub fn minimizer(&self) -> Option<DVector<f64>> {
        self.model.minimizer()
    }

    pub fn constants(&self) -> Option<ProblemConstants> {
        self.model.constants()
    }

    pub fn oracle_counts(&self) -> &OracleCounters {
        &self.counters
    }

    pub fn reset_counts(&mut self) {
        self.counters = OracleCounters::new(self.n_agents());
    }

    /// Select the measurement epoch. Under measurement noise, every oracle
    /// query issued during one epoch sees the same perturbation `w_i` for
    /// agent `i`; a new epoch draws a fresh one.
    pub fn begin_measurement(&mut self, epoch: u64) {
        self.epoch = epoch;
    }

    pub fn measurement_epoch(&self) -> u64 {
        self.epoch
    }

    /// The point the oracle actually evaluates for agent `i` at `x_i`.
    fn measured(&mut self, agent: usize, x_i: &[f64]) -> Vec<f64> {
        let mut out = x_i.to_vec();
        if let Some(noise) = &mut self.noise {
            let (key, counter) = match noise.refresh {
                NoiseRefresh::PerRound => (agent as u64, self.epoch),
                NoiseRefresh::PerCall => {
                    noise.calls[agent] += 1;
                    ((1 << 63) | agent as u64, noise.calls[agent])
                }
            };
            let mut rng = rng::stream(noise.seed, Purpose::MeasurementNoise, key, counter);
            let z = DVector::from_vec(rng::standard_normal_vec(&mut rng, x_i.len()));
            let w = &noise.factors[agent] * z;
            for (o, wi) in out.iter_mut().zip(w.iter()) {
                *o += wi;
            }
        }
        out
    }

    fn check_local(&self, agent: usize, x_i: &[f64]) {
        assert!(agent < self.n_agents(), "agent index {agent} out of range");
        assert_eq!(x_i.len(), self.local_dim(agent), "local decision of agent {agent} has wrong length");
    }

    /// Loss oracle `(x_i, σ) ↦ f̃_i(x_i, σ)`.
    pub fn local_loss(&mut self, agent: usize, x_i: &[f64], sigma: &[f64]) -> f64 {
        self.check_local(agent, x_i);
        assert_eq!(sigma.len(), self.agg_dim(), "aggregate estimate has wrong length");
        self.counters.loss_evals[agent] += 1;
        let xm = self.measured(agent, x_i);
        self.model.local_loss(agent, &xm, sigma)
    }

    /// Aggregation oracle `x_i ↦ φ_i(x_i)`.
    pub fn agg_map(&mut self, agent: usize, x_i: &[f64]) -> DVector<f64> {
        self.check_local(agent, x_i);
        self.counters.agg_evals[agent] += 1;
        let xm = self.measured(agent, x_i);
        let out = self.model.agg_map(agent, &xm);
        assert_eq!(out.len(), self.agg_dim(), "aggregation map of agent {agent} has wrong output length");
        DVector::from_vec(out)
    }

    /// Gradient oracle `(∇₁f̃_i, ∇₂f̃_i)`; only the exact-gradient baseline
    /// uses it.
    pub fn local_gradients(&mut self, agent: usize, x_i: &[f64], sigma: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_local(agent, x_i);
        self.counters.gradient_evals[agent] += 1;
        let xm = self.measured(agent, x_i);
        let (gx, gs) = self.model.local_gradients(agent, &xm, sigma).ok_or(Error::MissingGradients)?;
        Ok((DVector::from_vec(gx), DVector::from_vec(gs)))
    }

    /// Jacobian oracle `∇φ_i(x_i)` (`n_i × d`).
    pub fn agg_jacobian(&mut self, agent: usize, x_i: &[f64]) -> Result<DMatrix<f64>> {
        self.check_local(agent, x_i);
        self.counters.gradient_evals[agent] += 1;
        let xm = self.measured(agent, x_i);
        self.model.agg_jacobian(agent, &xm).ok_or(Error::MissingGradients)
    }

    fn check_full(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { what: "decision vector", expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `σ(x) = (1/N) Σ φ_i(x_i)` through the counted oracles.
    pub fn aggregate(&mut self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_full(x)?;
        let n = self.n_agents();
        let mut sigma = DVector::zeros(self.agg_dim());
        for i in 0..n {
            let block = self.block(i);
            sigma += self.agg_map(i, &x[block]);
        }
        Ok(sigma / n as f64)
    }

    /// `f(x) = (1/N) Σ f̃_i(x_i, σ(x))` through the counted oracles.
    pub fn global_loss(&mut self, x: &[f64]) -> Result<f64> {
        let sigma = self.aggregate(x)?;
        let n = self.n_agents();
        let mut total = 0.0;
        for i in 0..n {
            let block = self.block(i);
            total += self.local_loss(i, &x[block], sigma.as_slice());
        }
        Ok(total / n as f64)
    }

    /// Noise-free, uncounted `f(x)` for diagnostics and traces.
    pub fn exact_loss(&self, x: &[f64]) -> Result<f64> {
        self.check_full(x)?;
        let sigma = self.exact_aggregate(x);
        let n = self.n_agents();
        Ok((0..n).map(|i| self.model.local_loss(i, &x[self.block(i)], sigma.as_slice())).sum::<f64>() / n as f64)
    }

    fn exact_aggregate(&self, x: &[f64]) -> DVector<f64> {
        let n = self.n_agents();
        let mut sigma = DVector::zeros(self.agg_dim());
        for i in 0..n {
            sigma += DVector::from_vec(self.model.agg_map(i, &x[self.block(i)]));
        }
        sigma / n as f64
    }

    /// Noise-free, uncounted `∇f(x)` from the analytic extras:
    /// `∇_{x_i} f = (1/N)(∇₁f̃_i + ∇φ_i · (1/N) Σ_j ∇₂f̃_j)`.
    pub fn exact_gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_full(x)?;
        let n = self.n_agents();
        let sigma = self.exact_aggregate(x);
        let mut g1 = Vec::with_capacity(n);
        let mut mean_g2 = DVector::zeros(self.agg_dim());
        for i in 0..n {
            let (a, b) = self.model.local_gradients(i, &x[self.block(i)], sigma.as_slice()).ok_or(Error::MissingGradients)?;
            g1.push(DVector::from_vec(a));
            mean_g2 += DVector::from_vec(b) / n as f64;
        }
        let mut grad = DVector::zeros(self.dim());
        for (i, g1_i) in g1.into_iter().enumerate() {
            let jac = self.model.agg_jacobian(i, &x[self.block(i)]).ok_or(Error::MissingGradients)?;
            let gi = (g1_i + jac * &mean_g2) / n as f64;
            grad.rows_mut(self.offsets[i], gi.len()).copy_from(&gi);
        }
        Ok(grad)
    }

    /// Wrap the oracles with additive Gaussian measurement noise: a query
    /// about `x_i` is answered at `x_i + w_i`, `w_i ~ N(0, noise_cov[i])`.
    /// The caller's vectors are never modified.
    pub fn with_measurement_noise(mut self, noise_cov: Vec<DMatrix<f64>>, seed: u64, refresh: NoiseRefresh) -> Result<Self> {
        if noise_cov.len() != self.n_agents() {
            return Err(Error::Dimension {
                what: "noise covariances (one per agent)",
                expected: self.n_agents(),
                got: noise_cov.len(),
            });
        }
        let mut factors = Vec::with_capacity(noise_cov.len());
        for (i, c) in noise_cov.iter().enumerate() {
            if c.nrows() != self.local_dim(i) {
                return Err(Error::Dimension { what: "noise covariance", expected: self.local_dim(i), got: c.nrows() });
            }
            linalg::check_psd(c, "noise covariance")?;
            factors.push(linalg::psd_sqrt_factor(c));
        }
        let calls = vec![0; factors.len()];
        self.noise = Some(MeasurementNoise { factors, seed, refresh, calls });
        Ok(self)
    }

    /// Isotropic variant of [`with_measurement_noise`](Self::with_measurement_noise):
    /// `w_i ~ N(0, scale · I)`.
    pub fn with_isotropic_noise(self, scale: f64, seed: u64, refresh: NoiseRefresh) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::InvalidInput(format!("noise scale {scale} must be non-negative")));
        }
        let covs = (0..self.n_agents()).map(|i| DMatrix::identity(self.local_dim(i), self.local_dim(i)) * scale).collect();
        self.with_measurement_noise(covs, seed, refresh)
    }
}

// ---------------------------------------------------------------------------
// Formation-control benchmark

/// Serializable description of a formation benchmark instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationInstance {
    pub targets: Vec<Vec<f64>>,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl FormationInstance {
    /// `n_agents` targets drawn uniformly from `[low, high]^dim`, all weights
    /// equal to `gamma`.
    pub fn random(n_agents: usize, dim: usize, gamma: f64, low: f64, high: f64, seed: u64) -> Self {
        let targets = (0..n_agents)
            .map(|i| {
                let mut r = rng::stream(seed, Purpose::Targets, i as u64, 0);
                (0..dim).map(|_| r.random_range(low..=high)).collect()
            })
            .collect();
        Self { targets, gammas: vec![gamma; n_agents], seed: Some(seed) }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Robots at positions `x_i` pulled toward private targets `r_i` and toward
/// the swarm barycenter:
/// `f̃_i(x_i, σ) = (γ_i/2)‖x_i − r_i‖² + ½‖x_i − σ‖²`, `φ_i(x_i) = x_i`.
///
/// [`FormationGains`] rescales the loss (`s·f̃_i`) and the aggregation map
/// (`φ_i(x_i) = c·x_i`); both default to 1.
#[derive(Debug, Clone)]
pub struct FormationModel {
    targets: Vec<DVector<f64>>,
    gammas: Vec<f64>,
    dim: usize,
    domain: (f64, f64),
    gains: FormationGains,
    x_star: DVector<f64>,
    constants: ProblemConstants,
}

/// Loss scale `s` and aggregation gain `c` of a [`FormationModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationGains {
    pub loss_scale: f64,
    pub agg_gain: f64,
}

impl Default for FormationGains {
    fn default() -> Self {
        Self { loss_scale: 1.0, agg_gain: 1.0 }
    }
}

impl FormationModel {
    pub fn new(targets: &[Vec<f64>], gammas: &[f64], domain: (f64, f64)) -> Result<Self> {
        Self::with_gains(targets, gammas, domain, FormationGains::default())
    }

    pub fn with_gains(targets: &[Vec<f64>], gammas: &[f64], domain: (f64, f64), gains: FormationGains) -> Result<Self> {
        let n = targets.len();
        if n == 0 {
            return Err(Error::InvalidInput("formation needs at least one agent".into()));
        }
        if gammas.len() != n {
            return Err(Error::Dimension { what: "gammas", expected: n, got: gammas.len() });
        }
        if let Some(g) = gammas.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput(format!("formation weight γ = {g} must be positive")));
        }
        if !(gains.loss_scale > 0.0 && gains.agg_gain > 0.0) {
            return Err(Error::InvalidInput("formation gains must be positive".into()));
        }
        let dim = targets[0].len();
        if dim == 0 || targets.iter().any(|t| t.len() != dim) {
            return Err(Error::InvalidInput("all targets must share one positive dimension".into()));
        }
        if !(domain.0 < domain.1) {
            return Err(Error::InvalidInput("domain must satisfy low < high".into()));
        }
        let targets: Vec<DVector<f64>> = targets.iter().map(|t| DVector::from_column_slice(t)).collect();

        let base = coupling_matrix(gammas, gains.agg_gain);
        let chol = base.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("formation Hessian".into()))?;
        let mut x_star = DVector::zeros(n * dim);
        for c in 0..dim {
            let rhs = DVector::from_fn(n, |i, _| gammas[i] * targets[i][c]);
            let sol = chol.solve(&rhs);
            for i in 0..n {
                x_star[i * dim + c] = sol[i];
            }
        }

        let s = gains.loss_scale;
        let eig = base.clone().symmetric_eigenvalues();
        let mu = s * eig.min() / n as f64;
        let l1 = s * eig.max() / n as f64;
        let l0_hat = s * local_lipschitz_bound(&targets, gammas, domain, gains.agg_gain);
        let l0 = s * global_lipschitz_bound(&base, &targets, gammas, domain);
        Ok(Self {
            targets,
            gammas: gammas.to_vec(),
            dim,
            domain,
            gains,
            x_star,
            constants: ProblemConstants { mu, l0, l1, l_phi: gains.agg_gain, l0_hat },
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn gains(&self) -> FormationGains {
        self.gains
    }

    /// `∇²f = (s/N)(diag(γ) + I + (c² − 2c)J) ⊗ I_d`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.targets.len();
        let base = coupling_matrix(&self.gammas, self.gains.agg_gain);
        linalg::kron(&base, &DMatrix::identity(self.dim, self.dim)) * (self.gains.loss_scale / n as f64)
    }
}

/// Per-coordinate `(N/s)·∇²f = diag(γ) + I + (c² − 2c)J`, `J = 𝟙𝟙ᵀ/N`.
fn coupling_matrix(gammas: &[f64], c: f64) -> DMatrix<f64> {
    let n = gammas.len();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { gammas[i] + 1.0 } else { 0.0 };
        diag + (c * c - 2.0 * c) / n as f64
    })
}

/// Largest `‖∇f̃_i(x_i, σ)‖` (unit loss scale) over `x_i ∈ [low, high]^d`,
/// `σ ∈ c·[low, high]^d`. Coordinates separate and `‖·‖²` is convex, so
/// each coordinate maximizes at a corner.
fn local_lipschitz_bound(targets: &[DVector<f64>], gammas: &[f64], (low, high): (f64, f64), c: f64) -> f64 {
    let corners = [(low, c * low), (low, c * high), (high, c * low), (high, c * high)];
    targets
        .iter()
        .zip(gammas)
        .map(|(r, &g)| {
            r.iter()
                .map(|&rc| {
                    corners
                        .iter()
                        .map(|&(x, s)| {
                            let a = g * (x - rc) + (x - s);
                            let b = s - x;
                            a * a + b * b
                        })
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Largest `‖∇f(x)‖` (unit loss scale) over the box. Exact by vertex
/// enumeration for small `n`, otherwise the bound `‖H‖·max‖x‖ + ‖b‖`.
fn global_lipschitz_bound(base: &DMatrix<f64>, targets: &[DVector<f64>], gammas: &[f64], (low, high): (f64, f64)) -> f64 {
    let n_agents = targets.len();
    let dim = targets[0].len();
    let n = n_agents * dim;
    let h = linalg::kron(base, &DMatrix::identity(dim, dim)) / n_agents as f64;
    let b = DVector::from_fn(n, |k, _| gammas[k / dim] * targets[k / dim][k % dim] / n_agents as f64);
    if n <= 16 {
        let mut best: f64 = 0.0;
        for mask in 0u32..(1u32 << n) {
            let x = DVector::from_fn(n, |k, _| if mask & (1 << k) != 0 { high } else { low });
            best = best.max((&h * x - &b).norm());
        }
        best
    } else {
        let radius = (n as f64).sqrt() * low.abs().max(high.abs());
        linalg::max_symmetric_eigenvalue(&h) * radius + b.norm()
    }
}

impl AggregativeModel for FormationModel {
    fn n_agents(&self) -> usize {
        self.targets.len()
    }

    fn local_dim(&self, _agent: usize) -> usize {
        self.dim
    }

    fn agg_dim(&self) -> usize {
        self.dim
    }

    fn local_loss(&self, agent: usize, x_i: &[f64], sigma: &[f64]) -> f64 {
        let r = &self.targets[agent];
        let mut to_target = 0.0;
        let mut to_center = 0.0;
        for c in 0..self.dim {
            to_target += (x_i[c] - r[c]).powi(2);
            to_center += (x_i[c] - sigma[c]).powi(2);
        }
        self.gains.loss_scale * (0.5 * self.gammas[agent] * to_target + 0.5 * to_center)
    }

    fn agg_map(&self, _agent: usize, x_i: &[f64]) -> Vec<f64> {
        x_i.iter().map(|v| self.gains.agg_gain * v).collect()
    }

    fn local_gradients(&self, agent: usize, x_i: &[f64], sigma: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let g = self.gammas[agent];
        let s = self.gains.loss_scale;
        let r = &self.targets[agent];
        let gx = (0..self.dim).map(|c| s * (g * (x_i[c] - r[c]) + (x_i[c] - sigma[c]))).collect();
        let gs = (0..self.dim).map(|c| s * (sigma[c] - x_i[c])).collect();
        Some((gx, gs))
    }

    fn agg_jacobian(&self, _agent: usize, _x_i: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim) * self.gains.agg_gain)
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(self.x_star.clone())
    }

    fn constants(&self) -> Option<ProblemConstants> {
        Some(self.constants)
    }
}

/// Default declared domain for the benchmark's regularity constants: the
/// `[0, 10]` box of the experiments, widened to contain every target.
pub fn default_domain(targets: &[Vec<f64>]) -> (f64, f64) {
    let lo = targets.iter().flatten().cloned().fold(0.0, f64::min);
    let hi = targets.iter().flatten().cloned().fold(10.0, f64::max);
    (lo, hi)
}

/// The formation-control benchmark as a counted problem.
pub fn formation_problem(targets: &[Vec<f64>], gammas: &[f64]) -> Result<AggregativeProblem> {
    formation_problem_on(targets, gammas, default_domain(targets))
}

/// [`formation_problem`] with an explicit domain for the constants.
pub fn formation_problem_on(targets: &[Vec<f64>], gammas: &[f64], domain: (f64, f64)) -> Result<AggregativeProblem> {
    AggregativeProblem::new(Arc::new(FormationModel::new(targets, gammas, domain)?))
}

/// Formation benchmark with rescaled loss and aggregation map.
pub fn scaled_formation_problem(
    targets: &[Vec<f64>],
    gammas: &[f64],
    domain: (f64, f64),
    gains: FormationGains,
) -> Result<AggregativeProblem> {
    AggregativeProblem::new(Arc::new(FormationModel::with_gains(targets, gammas, domain, gains)?))
}

// ---------------------------------------------------------------------------
// Closure-backed models

type LossFn = dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync;
type AggFn = dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync;

/// A model from plain closures, for user-defined instances. Constants, when
/// known, are supplied by the user.
pub struct ClosureModel {
    local_dims: Vec<usize>,
    agg_dim: usize,
    loss: Box<LossFn>,
    agg: Box<AggFn>,
    minimizer: Option<DVector<f64>>,
    constants: Option<ProblemConstants>,
}

impl ClosureModel {
    pub fn new(
        local_dims: Vec<usize>,
        agg_dim: usize,
        loss: impl Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        agg: impl Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { local_dims, agg_dim, loss: Box::new(loss), agg: Box::new(agg), minimizer: None, constants: None }
    }

    pub fn with_minimizer(mut self, x_star: DVector<f64>) -> Self {
        self.minimizer = Some(x_star);
        self
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn into_problem(self) -> Result<AggregativeProblem> {
        AggregativeProblem::new(Arc::new(self))
    }
}

impl AggregativeModel for ClosureModel {
    fn n_agents(&self) -> usize {
        self.local_dims.len()
    }
    fn local_dim(&self, agent: usize) -> usize {
        self.local_dims[agent]
    }
    fn agg_dim(&self) -> usize {
        self.agg_dim
    }
    fn local_loss(&self, agent: usize, x_i: &[f64], sigma: &[f64]) -> f64 {
        (self.loss)(agent, x_i, sigma)
    }
    fn agg_map(&self, agent: usize, x_i: &[f64]) -> Vec<f64> {
        (self.agg)(agent, x_i)
    }
    fn minimizer(&self) -> Option<DVector<f64>> {
        self.minimizer.clone()
    }
    fn constants(&self) -> Option<ProblemConstants> {
        self.constants
    }
}
