//! Closed-form convergence certificates: stepsize bounds, the 5×5
//! contraction matrix `M(α)` and offset `b`, rate estimates and the size of
//! the convergence neighborhood.
//!
//! `ρ(M(α))` is the authoritative rate; the closed-form `η*` values are
//! diagnostics. Two predicates are reported separately and never combined:
//! stepsize feasibility (`α` below all bounds, `δ < α√n`, `L̂₀‖A − I‖ < 1 − ρ_A`)
//! and the row-1 Gershgorin condition `η₁* < 1`, which needs `δ > 2α√n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphReport;
use crate::linalg;
use crate::problem::{AggregativeProblem, ProblemConstants};
use crate::smoothing::{contraction_constants, stationary_covariance};

/// Everything the certificate formulas depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub mu: f64,
    pub l0: f64,
    pub l1: f64,
    pub l_phi: f64,
    pub l0_hat: f64,
    /// Total decision dimension.
    pub n: usize,
    pub n_agents: usize,
    pub d: usize,
    pub rho_a: f64,
    pub norm_a_minus_i: f64,
}

impl TheoryConstants {
    pub fn new(pc: ProblemConstants, n: usize, n_agents: usize, d: usize, report: &GraphReport) -> Result<Self> {
        let c = Self {
            mu: pc.mu,
            l0: pc.l0,
            l1: pc.l1,
            l_phi: pc.l_phi,
            l0_hat: pc.l0_hat,
            n,
            n_agents,
            d,
            rho_a: report.rho_a,
            norm_a_minus_i: report.norm_a_minus_i,
        };
        c.validate()?;
        Ok(c)
    }

    /// Constants of a problem that declares them, on a validated graph.
    pub fn from_problem(problem: &AggregativeProblem, report: &GraphReport) -> Result<Self> {
        let pc =
            problem.constants().ok_or_else(|| Error::InvalidInput("problem does not declare its regularity constants".into()))?;
        Self::new(pc, problem.dim(), problem.n_agents(), problem.agg_dim(), report)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("mu", self.mu), ("L0", self.l0), ("L1", self.l1), ("L_phi", self.l_phi), ("L0_hat", self.l0_hat)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("constant {name} = {v} must be positive")));
            }
        }
        if self.n == 0 || self.n_agents == 0 || self.d == 0 {
            return Err(Error::InvalidInput("dimensions must be positive".into()));
        }
        if !(self.rho_a >= 0.0 && self.rho_a < 1.0) {
            return Err(Error::InvalidInput(format!("rho_A = {} must lie in [0, 1)", self.rho_a)));
        }
        if !(self.norm_a_minus_i >= 0.0) {
            return Err(Error::InvalidInput("‖A − I‖ must be non-negative".into()));
        }
        Ok(())
    }

    fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `√(2(n+4))·L₁ + 2√n/δ`, the factor shared by `α₁*`, `α₂*`, `η₂*`, `η₃*`.
    fn rate_factor(&self, delta: f64) -> f64 {
        (2.0 * (self.n as f64 + 4.0)).sqrt() * self.l1 + 2.0 * self.sqrt_n() / delta
    }

    /// `L_comb² = Lφ² + L̂₀²(1 + Lφ)²`.
    pub fn l_comb_sq(&self) -> f64 {
        self.l_phi.powi(2) + self.l0_hat.powi(2) * (1.0 + self.l_phi).powi(2)
    }

    /// Largest `L̂₀` compatible with the graph: `(1 − ρ_A)/‖A − I‖`.
    pub fn l0_hat_limit(&self) -> f64 {
        if self.norm_a_minus_i == 0.0 {
            f64::INFINITY
        } else {
            (1.0 - self.rho_a) / self.norm_a_minus_i
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeBounds {
    pub alpha_max_centralized: f64,
    pub alpha1_star: f64,
    /// Non-positive when `L̂₀ ≥ (1 − ρ_A)/‖A − I‖`.
    pub alpha2_star: f64,
}

impl StepsizeBounds {
    pub fn min(&self) -> f64 {
        self.alpha_max_centralized.min(self.alpha1_star).min(self.alpha2_star)
    }
}

pub fn stepsize_bounds(c: &TheoryConstants, delta: f64) -> StepsizeBounds {
    let factor = c.rate_factor(delta);
    let alpha_max_centralized = 1.0 / (2.0 * (c.n as f64 + 4.0) * c.l1);
    let alpha1_star = (1.0 - c.rho_a) / (c.l_phi * factor);
    let alpha2_star = (1.0 - c.rho_a - c.l0_hat * c.norm_a_minus_i) / (c.l0_hat * (1.0 + c.l_phi) * factor);
    StepsizeBounds { alpha_max_centralized, alpha1_star, alpha2_star }
}

/// The scalar constants `γ₁ … γ₈` entering `M(α)` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gammas {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub g5: f64,
    pub g6: f64,
    pub g7: f64,
    pub g8: f64,
}

pub fn gammas(alpha: f64, delta: f64, c: &TheoryConstants) -> Gammas {
    let n = c.n as f64;
    let g1 = alpha * n.sqrt() / delta;
    let g2 = 0.5 * alpha * delta * c.l1 * (n + 6.0).powf(1.5);
    let g3 = (2.0 * (n + 4.0)).sqrt() * alpha * c.l1;
    let k = c.l0_hat * (1.0 + c.l_phi);
    Gammas { g1, g2, g3, g4: k * g3, g5: c.l0_hat * c.norm_a_minus_i, g6: k * g1, g7: k * g2, g8: k * delta }
}

/// The contraction matrix `M(α)` of `E[θ_{k+1}] ≤ M(α)E[θ_k] + b`.
pub fn assemble_m(alpha: f64, delta: f64, c: &TheoryConstants) -> DMatrix<f64> {
    let g = gammas(alpha, delta, c);
    let beta = contraction_constants(alpha, delta, c.mu, c.l1, c.n);
    let r = c.rho_a;
    let lp = c.l_phi;
    let top = (1.0 - beta.beta1).max(0.0).sqrt();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(5, 5, &[
        top,       0.0,  0.0,  g.g1,        g.g1,
        lp * g.g3, r,    0.0,  lp * g.g1,   lp * g.g1,
        lp * g.g3, 0.0,  r,    lp * g.g1,   lp * g.g1,
        g.g4,      g.g5, 0.0,  r + g.g6,    g.g6,
        g.g4,      0.0,  g.g5, g.g6,        r + g.g6,
    ]);
    m
}

/// The offset `b`, given `E‖u_{k+1} − u_k‖` (not squared).
pub fn assemble_b(alpha: f64, delta: f64, c: &TheoryConstants, e_du: f64) -> DVector<f64> {
    let g = gammas(alpha, delta, c);
    let beta = contraction_constants(alpha, delta, c.mu, c.l1, c.n);
    let lp = c.l_phi;
    DVector::from_vec(vec![beta.beta2, lp * g.g2, lp * g.g2 + lp * delta * e_du, g.g7, g.g7 + g.g8 * e_du])
}

/// Spectral radius of a non-negative matrix by power iteration (tol 1e-12).
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    linalg::nonnegative_spectral_radius(m, linalg::POWER_TOL, 1_000_000)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimates {
    pub eta1_star: f64,
    pub eta2_star: f64,
    pub eta3_star: f64,
    /// Alternative first estimate with `2nα²/δ²` in place of `2α√n/δ`.
    pub eta1_variant: f64,
}

impl EtaEstimates {
    pub fn max(&self) -> f64 {
        self.eta1_star.max(self.eta2_star).max(self.eta3_star)
    }
}

pub fn eta_estimates(alpha: f64, delta: f64, c: &TheoryConstants) -> EtaEstimates {
    let n = c.n as f64;
    let beta = contraction_constants(alpha, delta, c.mu, c.l1, c.n);
    let top = (1.0 - beta.beta1).max(0.0).sqrt();
    let factor = c.rate_factor(delta);
    EtaEstimates {
        eta1_star: top + 2.0 * alpha * n.sqrt() / delta,
        eta2_star: c.rho_a + alpha * c.l_phi * factor,
        eta3_star: c.rho_a + alpha * c.l0_hat * (1.0 + c.l_phi) * factor + c.l0_hat * c.norm_a_minus_i,
        eta1_variant: top + 2.0 * n * alpha * alpha / (delta * delta),
    }
}

/// Where `E‖u_{k+1} − u_k‖²` enters the accuracy bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonForm {
    /// Squared, as in the closed-form statement.
    Squared,
    /// Unsquared, as produced by the step-by-step derivation.
    Unsquared,
}

/// Accuracy `ε` of the neighborhood:
/// `δ[αL₁n + 2L_comb²·E^q + (α²L₁²/2)(n+6)³(1 + 1.5L_comb²)]^{1/2}`,
/// `E = E‖u_{k+1} − u_k‖²`, `q = 2` (squared) or `1` (unsquared).
pub fn epsilon_bound(alpha: f64, delta: f64, c: &TheoryConstants, e_du_sq: f64, form: EpsilonForm) -> Result<f64> {
    if !(e_du_sq >= 0.0) {
        return Err(Error::InvalidInput(format!("E‖Δu‖² = {e_du_sq} must be non-negative")));
    }
    let n = c.n as f64;
    let lc = c.l_comb_sq();
    let e = match form {
        EpsilonForm::Squared => e_du_sq * e_du_sq,
        EpsilonForm::Unsquared => e_du_sq,
    };
    let inner = alpha * c.l1 * n + 2.0 * lc * e + 0.5 * (alpha * c.l1).powi(2) * (n + 6.0).powi(3) * (1.0 + 1.5 * lc);
    Ok(delta * inner.sqrt())
}

/// Order of the momentum-exploration neighborhood:
/// `δ·max{tr[(B − I)ᵀΣ(B − I) + Σ_v], √n}`, `Σ` the stationary covariance.
pub fn epsilon_order_em(b: &DMatrix<f64>, sigma_v: &DMatrix<f64>, delta: f64, n: usize) -> Result<f64> {
    let sigma = stationary_covariance(b, sigma_v)?;
    let bi = b - DMatrix::identity(b.nrows(), b.ncols());
    let tr = (bi.transpose() * sigma * &bi + sigma_v).trace();
    Ok(delta * tr.max((n as f64).sqrt()))
}

/// Stepsize and graph preconditions of the convergence theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub stepsize_ok: bool,
    pub delta_ok: bool,
    pub l0_hat_ok: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.stepsize_ok && self.delta_ok && self.l0_hat_ok
    }
}

pub fn feasibility(alpha: f64, delta: f64, c: &TheoryConstants) -> Feasibility {
    let bounds = stepsize_bounds(c, delta);
    Feasibility {
        stepsize_ok: alpha > 0.0 && alpha < bounds.min(),
        delta_ok: delta < alpha * (c.n as f64).sqrt(),
        l0_hat_ok: c.l0_hat < c.l0_hat_limit(),
    }
}

/// Human-readable list of violated preconditions (empty when feasible).
pub fn theory_violations(alpha: f64, delta: f64, c: &TheoryConstants) -> Vec<String> {
    let f = feasibility(alpha, delta, c);
    let bounds = stepsize_bounds(c, delta);
    let mut out = Vec::new();
    if !f.stepsize_ok {
        out.push(format!("stepsize α = {alpha:e} is not below min(1/(2(n+4)L₁), α₁*, α₂*) = {:e}", bounds.min()));
    }
    if !f.delta_ok {
        out.push(format!("δ = {delta:e} is not below α√n = {:e}", alpha * (c.n as f64).sqrt()));
    }
    if !f.l0_hat_ok {
        out.push(format!("L̂₀ = {:e} is not below (1 − ρ_A)/‖A − I‖ = {:e}", c.l0_hat, c.l0_hat_limit()));
    }
    out
}

/// Momentum parameters for the momentum-exploration accuracy order.
#[derive(Debug, Clone)]
pub struct MomentumModel {
    pub b: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha: f64,
    pub delta: f64,
    pub constants: TheoryConstants,
    pub alpha_max_centralized: f64,
    pub alpha1_star: f64,
    pub alpha2_star: f64,
    pub feasibility: Feasibility,
    pub feasible: bool,
    pub eta1_star: f64,
    pub eta2_star: f64,
    pub eta3_star: f64,
    pub eta1_variant: f64,
    /// Row-1 Gershgorin condition `η₁* < 1`.
    pub gershgorin_row1: bool,
    pub eta_numeric: f64,
    pub contractive: bool,
    pub e_du_sq: f64,
    pub epsilon: f64,
    pub epsilon_unsquared: f64,
    pub epsilon_em: Option<f64>,
    pub m: Vec<Vec<f64>>,
}

/// Evaluate every certificate quantity. `e_du_sq` is `E‖u_{k+1} − u_k‖²`
/// (`2n` for i.i.d. exploration).
pub fn certify(
    alpha: f64,
    delta: f64,
    c: &TheoryConstants,
    e_du_sq: f64,
    momentum: Option<&MomentumModel>,
) -> Result<Certificate> {
    if !(alpha >= 0.0 && delta > 0.0) {
        return Err(Error::InvalidInput("need α ≥ 0 and δ > 0".into()));
    }
    c.validate()?;
    let bounds = stepsize_bounds(c, delta);
    let feas = feasibility(alpha, delta, c);
    let eta = eta_estimates(alpha, delta, c);
    let m = assemble_m(alpha, delta, c);
    let eta_numeric = spectral_radius(&m)?;
    let epsilon_em = momentum.map(|mm| epsilon_order_em(&mm.b, &mm.sigma_v, delta, c.n)).transpose()?;
    Ok(Certificate {
        alpha,
        delta,
        constants: *c,
        alpha_max_centralized: bounds.alpha_max_centralized,
        alpha1_star: bounds.alpha1_star,
        alpha2_star: bounds.alpha2_star,
        feasibility: feas,
        feasible: feas.all(),
        eta1_star: eta.eta1_star,
        eta2_star: eta.eta2_star,
        eta3_star: eta.eta3_star,
        eta1_variant: eta.eta1_variant,
        gershgorin_row1: eta.eta1_star < 1.0,
        eta_numeric,
        contractive: eta_numeric < 1.0,
        e_du_sq,
        epsilon: epsilon_bound(alpha, delta, c, e_du_sq, EpsilonForm::Squared)?,
        epsilon_unsquared: epsilon_bound(alpha, delta, c, e_du_sq, EpsilonForm::Unsquared)?,
        epsilon_em,
        m: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}
