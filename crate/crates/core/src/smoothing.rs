//! Gaussian smoothing: the forward-difference oracle, smoothed values,
//! Gaussian moments, the one-step contraction constants and the exploration
//! processes that generate the probing directions `u`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};

/// Smallest admissible eigenvalue of an exploration covariance.
pub const MIN_COVARIANCE_EIGENVALUE: f64 = 1e-12;

/// `((f(x+δu) − f(x))/δ) · Σ⁻¹u`, with exactly two evaluations of `f`.
pub fn forward_difference_oracle<F>(
    mut f: F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    delta: f64,
    sigma_inv_u: &DVector<f64>,
) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("smoothing step δ = {delta} must be positive")));
    }
    if x.len() != u.len() || u.len() != sigma_inv_u.len() {
        return Err(Error::Dimension { what: "exploration direction", expected: x.len(), got: u.len() });
    }
    let f0 = f(x);
    let f1 = f(&(x + u * delta));
    if !f0.is_finite() || !f1.is_finite() {
        return Err(Error::NonFinite { iteration: 0, what: "function value in forward difference".into() });
    }
    Ok(sigma_inv_u * ((f1 - f0) / delta))
}

/// Monte Carlo estimate of `f_δ(x) = E[f(x + δu)]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedEstimate {
    pub mean: f64,
    pub std_err: f64,
}

pub fn gaussian_smoothed_estimate<F>(
    mut f: F,
    x: &DVector<f64>,
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SmoothedEstimate>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = rng::stream(seed, Purpose::MonteCarlo, 0, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let u = DVector::from_vec(rng::standard_normal_vec(&mut rng, x.len()));
        let v = f(&(x + u * delta));
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(SmoothedEstimate { mean, std_err: (var / n).sqrt() })
}

pub fn gaussian_smoothed_value<F>(f: F, x: &DVector<f64>, delta: f64, n_samples: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    Ok(gaussian_smoothed_estimate(f, x, delta, n_samples, seed)?.mean)
}

/// Upper bound on `M_p = E‖u‖^p`, `u ~ N(0, I_n)`.
pub fn moment_bound(p: u32, n: usize) -> f64 {
    let (p, n) = (p as f64, n as f64);
    if p <= 2.0 {
        n.powf(p / 2.0)
    } else {
        (p + n).powf(p / 2.0)
    }
}

/// Monte Carlo estimate of `M_p`.
pub fn empirical_moment(p: u32, n: usize, n_samples: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, Purpose::MonteCarlo, p as u64, n as u64);
    let total: f64 = (0..n_samples)
        .map(|_| {
            let u = DVector::from_vec(rng::standard_normal_vec(&mut rng, n));
            u.norm().powi(p as i32)
        })
        .sum();
    total / n_samples as f64
}

/// Constants of the one-step bound
/// `E‖x − αg_δ(x) − x*‖ ≤ √(1 − β₁)‖x − x*‖ + β₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    pub beta1: f64,
    pub beta2: f64,
}

impl ContractionConstants {
    /// The rate `√(1 − β₁)` is meaningful only for `0 < β₁ < 1`.
    pub fn is_valid(&self) -> bool {
        self.beta1 > 0.0 && self.beta1 < 1.0
    }

    pub fn rate(&self) -> f64 {
        (1.0 - self.beta1).max(0.0).sqrt()
    }
}

pub fn contraction_constants(alpha: f64, delta: f64, mu: f64, l1: f64, n: usize) -> ContractionConstants {
    let n = n as f64;
    let beta1 = alpha * mu * (1.0 - 2.0 * alpha * (n + 4.0) * l1);
    let beta2 = (alpha * delta * delta * l1 * (n + 0.5 * alpha * (n + 6.0).powi(3) * l1)).max(0.0).sqrt();
    ContractionConstants { beta1, beta2 }
}

// ---------------------------------------------------------------------------
// Exploration processes

/// How the momentum matrices `B_i` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentumSpec {
    /// `B_i = κ I`.
    Scalar { kappa: f64 },
    /// `B_i = Q D Qᵀ`, `Q` random orthogonal, `D` uniform in `(low, high)`.
    RandomSymmetric { low: f64, high: f64 },
    /// One row-major square matrix per agent.
    Explicit { matrices: Vec<Vec<Vec<f64>>> },
}

/// Serializable exploration configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExplorationSpec {
    #[default]
    Iid,
    Momentum {
        momentum: MomentumSpec,
        /// `Σ_v = sigma_v · I`.
        sigma_v: f64,
        /// `Σ_u⁰ = sigma_u0 · I`.
        #[serde(default = "one")]
        sigma_u0: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ExplorationSpec {
    pub fn is_momentum(&self) -> bool {
        matches!(self, ExplorationSpec::Momentum { .. })
    }
}

#[derive(Debug, Clone)]
struct MomentumAgent {
    b: DMatrix<f64>,
    sigma_v: DMatrix<f64>,
    sigma_v_factor: DMatrix<f64>,
}

/// Per-agent exploration directions `u_i^k` and covariances `Σ_{u,i}^k`.
///
/// Draws are keyed by `(seed, agent id, k)`, never by call order.
#[derive(Debug, Clone)]
pub struct ExplorationProcess {
    seed: u64,
    agent_ids: Vec<u64>,
    k: u64,
    u: Vec<DVector<f64>>,
    sigma_u: Vec<DMatrix<f64>>,
    momentum: Option<Vec<MomentumAgent>>,
}

impl ExplorationProcess {
    /// i.i.d. standard normal directions, `Σ_u = I` throughout.
    pub fn iid(local_dims: &[usize], seed: u64) -> Self {
        Self::iid_with_ids(local_dims, seed, (0..local_dims.len() as u64).collect())
    }

    pub fn iid_with_ids(local_dims: &[usize], seed: u64, agent_ids: Vec<u64>) -> Self {
        let u = local_dims.iter().zip(&agent_ids).map(|(&ni, &id)| draw_normal(seed, id, 0, ni)).collect();
        let sigma_u = local_dims.iter().map(|&ni| DMatrix::identity(ni, ni)).collect();
        Self { seed, agent_ids, k: 0, u, sigma_u, momentum: None }
    }

    /// Momentum-filtered directions `u^{k+1} = B u^k + v`, `v ~ N(0, Σ_v)`,
    /// starting from `u⁰ ~ N(0, Σ_u⁰)`.
    pub fn momentum(b: Vec<DMatrix<f64>>, sigma_v: Vec<DMatrix<f64>>, sigma_u0: Vec<DMatrix<f64>>, seed: u64) -> Result<Self> {
        let ids = (0..b.len() as u64).collect();
        Self::momentum_with_ids(b, sigma_v, sigma_u0, seed, ids)
    }

    pub fn momentum_with_ids(
        b: Vec<DMatrix<f64>>,
        sigma_v: Vec<DMatrix<f64>>,
        sigma_u0: Vec<DMatrix<f64>>,
        seed: u64,
        agent_ids: Vec<u64>,
    ) -> Result<Self> {
        let n = b.len();
        if sigma_v.len() != n || sigma_u0.len() != n || agent_ids.len() != n {
            return Err(Error::InvalidInput("momentum parameters must be given once per agent".into()));
        }
        let mut agents = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        for i in 0..n {
            let ni = b[i].nrows();
            if !b[i].is_square() || sigma_v[i].shape() != (ni, ni) || sigma_u0[i].shape() != (ni, ni) {
                return Err(Error::Dimension { what: "momentum matrices", expected: ni, got: sigma_v[i].nrows() });
            }
            let rho = linalg::spectral_radius(&b[i]);
            if !(rho < 1.0) {
                return Err(Error::Unstable(rho));
            }
            linalg::check_psd(&sigma_v[i], "innovation covariance")?;
            check_pd(&sigma_u0[i])?;
            let z = draw_normal(seed, agent_ids[i], 0, ni);
            u.push(linalg::psd_sqrt_factor(&sigma_u0[i]) * z);
            agents.push(MomentumAgent {
                b: b[i].clone(),
                sigma_v_factor: linalg::psd_sqrt_factor(&sigma_v[i]),
                sigma_v: sigma_v[i].clone(),
            });
        }
        Ok(Self { seed, agent_ids, k: 0, u, sigma_u: sigma_u0, momentum: Some(agents) })
    }

    /// Build from a serialized spec. Random momentum matrices are drawn from
    /// a dedicated stream keyed by agent id.
    pub fn from_spec(spec: &ExplorationSpec, local_dims: &[usize], seed: u64, agent_ids: Vec<u64>) -> Result<Self> {
        if agent_ids.len() != local_dims.len() {
            return Err(Error::Dimension { what: "agent ids", expected: local_dims.len(), got: agent_ids.len() });
        }
        match spec {
            ExplorationSpec::Iid => Ok(Self::iid_with_ids(local_dims, seed, agent_ids)),
            ExplorationSpec::Momentum { momentum, sigma_v, sigma_u0 } => {
                let b = match momentum {
                    MomentumSpec::Scalar { kappa } => local_dims.iter().map(|&ni| DMatrix::identity(ni, ni) * *kappa).collect(),
                    MomentumSpec::RandomSymmetric { low, high } => {
                        if !(0.0 <= *low && low < high && *high <= 1.0) {
                            return Err(Error::InvalidInput(format!(
                                "momentum eigenvalue range ({low}, {high}) must lie in [0, 1]"
                            )));
                        }
                        local_dims
                            .iter()
                            .zip(&agent_ids)
                            .map(|(&ni, &id)| {
                                let mut r = rng::stream(seed, Purpose::Momentum, id, 0);
                                random_momentum_matrix(ni, *low, *high, &mut r)
                            })
                            .collect()
                    }
                    MomentumSpec::Explicit { matrices } => {
                        if matrices.len() != local_dims.len() {
                            return Err(Error::Dimension {
                                what: "explicit momentum matrices",
                                expected: local_dims.len(),
                                got: matrices.len(),
                            });
                        }
                        matrices.iter().map(|rows| matrix_from_rows(rows)).collect::<Result<Vec<_>>>()?
                    }
                };
                if !(*sigma_v >= 0.0 && *sigma_u0 > 0.0) {
                    return Err(Error::InvalidInput("need sigma_v ≥ 0 and sigma_u0 > 0".into()));
                }
                let sv = local_dims.iter().map(|&ni| DMatrix::identity(ni, ni) * *sigma_v).collect();
                let su = local_dims.iter().map(|&ni| DMatrix::identity(ni, ni) * *sigma_u0).collect();
                Self::momentum_with_ids(b, sv, su, seed, agent_ids)
            }
        }
    }

    pub fn is_momentum(&self) -> bool {
        self.momentum.is_some()
    }

    pub fn n_agents(&self) -> usize {
        self.u.len()
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn u(&self, agent: usize) -> &DVector<f64> {
        &self.u[agent]
    }

    pub fn sigma_u(&self, agent: usize) -> &DMatrix<f64> {
        &self.sigma_u[agent]
    }

    pub fn momentum_matrix(&self, agent: usize) -> Option<&DMatrix<f64>> {
        self.momentum.as_ref().map(|m| &m[agent].b)
    }

    pub fn innovation_covariance(&self, agent: usize) -> Option<&DMatrix<f64>> {
        self.momentum.as_ref().map(|m| &m[agent].sigma_v)
    }

    /// Overwrite the current direction of one agent.
    pub fn set_u(&mut self, agent: usize, u: DVector<f64>) {
        assert_eq!(u.len(), self.u[agent].len(), "direction has wrong length");
        self.u[agent] = u;
    }

    /// `(Σ_{u,i}^k)⁻¹ u_i^k` by a Cholesky solve; `u_i^k` itself in iid mode.
    pub fn sigma_inv_u(&self, agent: usize) -> Result<DVector<f64>> {
        if self.momentum.is_none() {
            return Ok(self.u[agent].clone());
        }
        let chol = self.sigma_u[agent]
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("exploration covariance of agent {agent}")))?;
        Ok(chol.solve(&self.u[agent]))
    }

    /// Advance to `k + 1`: draw the next directions and, in momentum mode,
    /// propagate `Σ_u ← B Σ_u Bᵀ + Σ_v`.
    pub fn step(&mut self) -> Result<()> {
        self.k += 1;
        let k = self.k;
        match &self.momentum {
            None => {
                for (u, &id) in self.u.iter_mut().zip(&self.agent_ids) {
                    *u = draw_normal(self.seed, id, k, u.len());
                }
            }
            Some(agents) => {
                for (i, m) in agents.iter().enumerate() {
                    let z = draw_normal(self.seed, self.agent_ids[i], k, self.u[i].len());
                    self.u[i] = &m.b * &self.u[i] + &m.sigma_v_factor * z;
                    let next = linalg::symmetrize(&(&m.b * &self.sigma_u[i] * m.b.transpose() + &m.sigma_v));
                    check_pd(&next)?;
                    self.sigma_u[i] = next;
                }
            }
        }
        Ok(())
    }
}

/// One exploration step, returning the new directions and covariances.
pub fn exploration_step(process: &mut ExplorationProcess) -> Result<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
    process.step()?;
    Ok((process.u.clone(), process.sigma_u.clone()))
}

fn draw_normal(seed: u64, agent: u64, k: u64, len: usize) -> DVector<f64> {
    let mut r = rng::stream(seed, Purpose::Exploration, agent, k);
    DVector::from_vec(rng::standard_normal_vec(&mut r, len))
}

fn check_pd(m: &DMatrix<f64>) -> Result<()> {
    let lo = linalg::min_symmetric_eigenvalue(&linalg::symmetrize(m));
    if !(lo > MIN_COVARIANCE_EIGENVALUE) {
        return Err(Error::NotPositiveDefinite(format!("exploration covariance has minimum eigenvalue {lo:e}")));
    }
    Ok(())
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("momentum matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Symmetric `Q D Qᵀ` with Haar-random orthogonal `Q` and eigenvalues drawn
/// uniformly from `(low, high)`.
pub fn random_momentum_matrix<R: Rng>(n: usize, low: f64, high: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_vec(n, n, rng::standard_normal_vec(rng, n * n));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix so Q is Haar distributed
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let d = DVector::from_fn(n, |_, _| rng.random_range(low..high));
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

/// Fixed point of `Σ = B Σ Bᵀ + Σ_v` by the doubling iteration
/// `Σ ← Σ + A Σ Aᵀ`, `A ← A²`; the result has residual below 1e-12.
pub fn stationary_covariance(b: &DMatrix<f64>, sigma_v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !b.is_square() || sigma_v.shape() != b.shape() {
        return Err(Error::Dimension { what: "stationary covariance inputs", expected: b.nrows(), got: sigma_v.nrows() });
    }
    let rho = linalg::spectral_radius(b);
    if !(rho < 1.0) {
        return Err(Error::Unstable(rho));
    }
    linalg::check_psd(sigma_v, "innovation covariance")?;
    let mut sigma = sigma_v.clone();
    let mut a = b.clone();
    // Run the doubling to machine precision; the residual test is the
    // acceptance criterion.
    for _ in 0..200 {
        let increment = &a * &sigma * a.transpose();
        sigma += &increment;
        a = &a * &a;
        if increment.norm() <= f64::EPSILON * sigma.norm() {
            break;
        }
    }
    let sigma = linalg::symmetrize(&sigma);
    let residual = (b * &sigma * b.transpose() + sigma_v - &sigma).norm();
    if !(residual <= 1e-12 * sigma.norm().max(1.0)) {
        return Err(Error::Unstable(rho));
    }
    Ok(sigma)
}

/// `E‖u_{k+1} − u_k‖² = tr((B − I) Σ (B − I)ᵀ) + tr(Σ_v)` for the stationary
/// momentum process; `2n` for i.i.d. directions (`B = 0`, `Σ_v = I`).
pub fn expected_increment_sq(b: &DMatrix<f64>, sigma_v: &DMatrix<f64>) -> Result<f64> {
    let sigma = stationary_covariance(b, sigma_v)?;
    let bi = b - DMatrix::identity(b.nrows(), b.ncols());
    Ok((&bi * sigma * bi.transpose()).trace() + sigma_v.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn forward_difference_examples() {
        let f = |x: &DVector<f64>| 0.5 * x[0] * x[0];
        let one = DVector::from_element(1, 1.0);
        let g = forward_difference_oracle(f, &one, &one, 0.1, &one).unwrap();
        assert_relative_eq!(g[0], 1.05, epsilon = 1e-12);

        let zero = DVector::zeros(1);
        assert_eq!(forward_difference_oracle(f, &one, &zero, 0.1, &zero).unwrap()[0], 0.0);

        let c = DVector::from_vec(vec![1.5, -2.0, 0.5]);
        let lin = |x: &DVector<f64>| c.dot(x);
        let x = DVector::from_vec(vec![0.3, 0.1, -4.0]);
        let u = DVector::from_vec(vec![0.7, 1.1, -0.2]);
        for delta in [1e-3, 0.5, 2.0] {
            let g = forward_difference_oracle(lin, &x, &u, delta, &u).unwrap();
            assert_relative_eq!(g, &u * c.dot(&u), epsilon = 1e-9);
        }
    }

    #[test]
    fn forward_difference_counts_and_errors() {
        let mut calls = 0;
        let x = DVector::from_element(2, 1.0);
        forward_difference_oracle(
            |_| {
                calls += 1;
                0.0
            },
            &x,
            &x,
            0.1,
            &x,
        )
        .unwrap();
        assert_eq!(calls, 2);
        assert!(forward_difference_oracle(|_| f64::NAN, &x, &x, 0.1, &x).is_err());
        assert!(forward_difference_oracle(|_| 0.0, &x, &x, 0.0, &x).is_err());
    }

    #[test]
    fn smoothed_constant_and_square() {
        let x = DVector::from_element(3, 2.0);
        assert_eq!(gaussian_smoothed_value(|_| 4.25, &x, 0.7, 10, 1).unwrap(), 4.25);
        let x = DVector::from_element(1, 1.5);
        let est = gaussian_smoothed_estimate(|y| y[0] * y[0], &x, 1.0, 100_000, 3).unwrap();
        assert!((est.mean - (1.5f64.powi(2) + 1.0)).abs() <= 3.0 * est.std_err);
    }

    #[test]
    fn moment_bound_examples() {
        assert_eq!(moment_bound(0, 7), 1.0);
        assert_eq!(moment_bound(2, 5), 5.0);
        assert_eq!(moment_bound(4, 3), 49.0);
        // E‖u‖² = n exactly
        assert!((empirical_moment(2, 3, 100_000, 1) - 3.0).abs() < 0.05);
    }

    #[test]
    fn contraction_constant_examples() {
        let c = contraction_constants(0.01, 0.1, 1.0, 1.0, 1);
        assert_relative_eq!(c.beta1, 0.009, epsilon = 1e-15);
        assert_relative_eq!(c.beta2, 2.715e-4f64.sqrt(), epsilon = 1e-15);
        assert!(c.is_valid());
        let z = contraction_constants(0.0, 0.1, 1.0, 1.0, 1);
        assert_eq!((z.beta1, z.beta2), (0.0, 0.0));
        assert!(!contraction_constants(0.1, 0.1, 1.0, 1.0, 1).is_valid());
    }

    #[test]
    fn momentum_covariance_recursion() {
        let mut p = ExplorationProcess::momentum(vec![scalar(0.5)], vec![scalar(1.0)], vec![scalar(1.0)], 3).unwrap();
        p.step().unwrap();
        assert_relative_eq!(p.sigma_u(0)[(0, 0)], 1.25, epsilon = 1e-15);

        let sv = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let mut z =
            ExplorationProcess::momentum(vec![DMatrix::zeros(2, 2)], vec![sv.clone()], vec![DMatrix::identity(2, 2)], 3).unwrap();
        let (_, cov) = exploration_step(&mut z).unwrap();
        assert_relative_eq!(cov[0], sv, epsilon = 1e-15);
    }

    #[test]
    fn iid_is_deterministic() {
        let run = || {
            let mut p = ExplorationProcess::iid(&[2, 3], 8);
            (0..5)
                .map(|_| {
                    p.step().unwrap();
                    p.u(1).clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        let p = ExplorationProcess::iid(&[2], 8);
        assert_eq!(p.sigma_u(0), &DMatrix::identity(2, 2));
    }

    #[test]
    fn unstable_momentum_rejected() {
        assert!(ExplorationProcess::momentum(vec![scalar(1.0)], vec![scalar(1.0)], vec![scalar(1.0)], 0).is_err());
        assert!(stationary_covariance(&scalar(-1.2), &scalar(1.0)).is_err());
    }

    #[test]
    fn degenerate_covariance_rejected() {
        // B = 0 and Σ_v = 0 collapse Σ_u to zero after one step
        let mut p = ExplorationProcess::momentum(vec![scalar(0.0)], vec![scalar(0.0)], vec![scalar(1.0)], 0).unwrap();
        assert!(p.step().is_err());
    }

    #[test]
    fn stationary_covariance_examples() {
        assert_relative_eq!(stationary_covariance(&scalar(0.5), &scalar(1.0)).unwrap()[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        let sv = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        assert_relative_eq!(stationary_covariance(&DMatrix::zeros(2, 2), &sv).unwrap(), sv, epsilon = 1e-15);
        let (kappa, s2) = (0.9, 0.16);
        let sigma = stationary_covariance(&(DMatrix::identity(3, 3) * kappa), &(DMatrix::identity(3, 3) * s2)).unwrap();
        assert_relative_eq!(sigma, DMatrix::identity(3, 3) * (s2 / (1.0 - kappa * kappa)), epsilon = 1e-12);
    }

    #[test]
    fn increment_second_moment() {
        assert_relative_eq!(
            expected_increment_sq(&DMatrix::zeros(3, 3), &DMatrix::identity(3, 3)).unwrap(),
            6.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(expected_increment_sq(&scalar(0.5), &scalar(1.0)).unwrap(), 0.25 * 4.0 / 3.0 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_momentum_spectrum() {
        let mut r = rng::stream(1, Purpose::Momentum, 0, 0);
        let b = random_momentum_matrix(4, 0.9, 1.0, &mut r);
        assert_relative_eq!(b.clone(), b.transpose(), epsilon = 1e-12);
        let eig = b.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l > 0.9 - 1e-12 && l < 1.0));
    }

    #[test]
    fn spec_round_trip() {
        let spec = ExplorationSpec::Momentum {
            momentum: MomentumSpec::RandomSymmetric { low: 0.9, high: 1.0 - 1e-9 },
            sigma_v: 0.16,
            sigma_u0: 1.0,
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExplorationSpec>(&s).unwrap(), spec);
        assert_eq!(serde_json::from_str::<ExplorationSpec>(r#"{"mode":"iid"}"#).unwrap(), ExplorationSpec::Iid);
    }
}
