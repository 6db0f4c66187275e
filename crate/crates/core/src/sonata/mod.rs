//! Block-wise successive convex approximation with block-wise gradient tracking.
//!
//! Each agent keeps the canonical triple `(phi, s, sigma)` per block; the local
//! estimate `x = s / phi` and tracker `y = sigma / phi` are derived views. A
//! round selects one block per agent, solves the strongly convex block
//! subproblem, then mixes `s` and `sigma` with the block-induced column
//! stochastic weights.

mod diagnostics;
mod round;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub(crate) use diagnostics::metrics_with_steps;
pub use diagnostics::{
    check_round_invariants, descent_check, lyapunov_v, metrics, sigma_bar, tracking_residual, weighted_average_sbar,
    MetricsRecord,
};
pub(crate) use round::advance_with_steps;
pub use round::{
    advance, best_response_block, blockwise_gradient_round, cta_round, local_steps, sonata_round, BlockResponse,
    RoundContext, RoundOutput, Variant,
};

use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::pushsum::{scale_blocks, unscale_blocks};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// `(N y)^T (x - x_i) + tau ||x - x_i||^2 + r(x)`; modulus `2 tau`.
    PlainLinearization,
    /// Linearizes `f_i` and the concave part of the penalty; quadratic
    /// `(tau/2) ||x - x_i||^2`, so modulus `tau`.
    DcLinearization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateSpec {
    pub tau: Vec<f64>,
    pub kind: SurrogateKind,
}

impl SurrogateSpec {
    pub fn uniform(agents: usize, tau: f64, kind: SurrogateKind) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { tau: vec![tau; agents], kind })
    }

    /// Strong-convexity modulus of agent `i`'s surrogate quadratic.
    pub fn modulus(&self, agent: usize) -> f64 {
        match self.kind {
            SurrogateKind::PlainLinearization => 2.0 * self.tau[agent],
            SurrogateKind::DcLinearization => self.tau[agent],
        }
    }
}

/// Diminishing rule `gamma_{t+1} = gamma_t (1 - mu gamma_t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizeSchedule {
    gamma0: f64,
    mu: f64,
}

impl StepSizeSchedule {
    pub fn new(gamma0: f64, mu: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0 <= 1.0) {
            return Err(Error::InvalidSchedule(format!("gamma0 = {gamma0} not in (0,1]")));
        }
        if !(mu > 0.0 && mu < 1.0 / gamma0) {
            return Err(Error::InvalidSchedule(format!("mu = {mu} not in (0, 1/gamma0)")));
        }
        Ok(Self { gamma0, mu })
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Infinite iterator `gamma_0, gamma_1, ...`.
    pub fn iter(&self) -> impl Iterator<Item = f64> {
        let mu = self.mu;
        std::iter::successors(Some(self.gamma0), move |&g| Some(g * (1.0 - mu * g)))
    }
}

pub fn step_size_next(gamma: f64, mu: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidSchedule(format!("gamma = {gamma} not in (0,1]")));
    }
    if !(mu >= 0.0 && mu * gamma < 1.0) {
        return Err(Error::InvalidSchedule(format!("mu = {mu} incompatible with gamma = {gamma}")));
    }
    Ok(gamma * (1.0 - mu * gamma))
}

/// Canonical per-agent state.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    /// Push-sum weight per block.
    pub phi: Vec<f64>,
    /// `phi * x`, full length.
    pub s: DVector<f64>,
    /// `phi * y`, full length.
    pub sigma: DVector<f64>,
    /// Gradient signal last injected into the tracker: the full `grad f_i(x)`
    /// for ATC/CTA, the stale block buffer `g_hat` for the block-gradient variant.
    pub grad: DVector<f64>,
}

impl AgentState {
    pub fn x(&self, problem: &ProblemInstance) -> DVector<f64> {
        unscale_blocks(problem.partition(), &self.s, &self.phi)
    }

    pub fn y(&self, problem: &ProblemInstance) -> DVector<f64> {
        unscale_blocks(problem.partition(), &self.sigma, &self.phi)
    }

    /// State with the given `phi`, local estimate and tracker.
    pub fn from_views(
        problem: &ProblemInstance,
        phi: Vec<f64>,
        x: &DVector<f64>,
        y: &DVector<f64>,
        grad: DVector<f64>,
    ) -> Self {
        let s = scale_blocks(problem.partition(), x, &phi);
        let sigma = scale_blocks(problem.partition(), y, &phi);
        Self { phi, s, sigma, grad }
    }
}

/// `phi = 1`, `x = x0[i]` and `y = grad f_i(x0[i])`.
pub fn init_states(problem: &ProblemInstance, x0: &[DVector<f64>]) -> Result<Vec<AgentState>> {
    if x0.len() != problem.agent_count() {
        return Err(Error::DimensionError(format!("{} initial points for {} agents", x0.len(), problem.agent_count())));
    }
    x0.iter()
        .enumerate()
        .map(|(i, x)| {
            if x.len() != problem.dim() {
                return Err(Error::DimensionError("initial point has wrong length".into()));
            }
            let g = problem.local_gradient(i, x);
            Ok(AgentState { phi: vec![1.0; problem.block_count()], s: x.clone(), sigma: g.clone(), grad: g })
        })
        .collect()
}
