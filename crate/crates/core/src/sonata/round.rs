use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AgentState, SurrogateKind, SurrogateSpec};
use crate::error::{Error, Result};
use crate::graphs::WeightMatrix;
use crate::problems::ProblemInstance;
use crate::pushsum::{round_weights, unscale_blocks, MixingRows};
use crate::schedule::BlockSchedule;

/// Ordering of local update and neighbor averaging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Adapt-then-combine with full local gradient refresh.
    Atc,
    /// Combine-then-adapt.
    Cta,
    /// Adapt-then-combine where only the selected block of the gradient is refreshed.
    BlockGradient,
}

/// Read-only data shared by every agent in a round.
#[derive(Clone, Copy)]
pub struct RoundContext<'a> {
    pub problem: &'a ProblemInstance,
    pub base: &'a WeightMatrix,
    pub schedule: &'a BlockSchedule,
    pub surrogate: &'a SurrogateSpec,
}

/// Outcome of one agent's block subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockResponse {
    pub block: usize,
    pub x_tilde: DVector<f64>,
    /// `x_tilde - x_(i,block)`.
    pub delta: DVector<f64>,
    /// Gradient of the surrogate at the current block iterate.
    pub linear: DVector<f64>,
    /// Surrogate strong-convexity modulus.
    pub modulus: f64,
    /// Convex regularizer at the current block iterate.
    pub r_old: f64,
    /// Convex regularizer at `x_tilde`.
    pub r_new: f64,
}

/// Minimizes agent `agent`'s surrogate for `block` plus the convex regularizer
/// over the block's box.
pub fn best_response_block(
    problem: &ProblemInstance,
    surrogate: &SurrogateSpec,
    agent: usize,
    block: usize,
    x_i: &DVector<f64>,
    y_block: &DVector<f64>,
) -> Result<BlockResponse> {
    let xb = problem.block_of(x_i, block);
    if y_block.len() != xb.len() {
        return Err(Error::DimensionError("tracker block has wrong length".into()));
    }
    let mut linear = y_block * problem.agent_count() as f64;
    if surrogate.kind == SurrogateKind::DcLinearization {
        linear -= problem.concave_gradient(&xb);
    }
    let modulus = surrogate.modulus(agent);
    let x_tilde = problem.composite_prox(&xb, &linear, modulus);
    if x_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure(format!("non-finite block minimizer for agent {agent}")));
    }
    let delta = &x_tilde - &xb;
    Ok(BlockResponse {
        block,
        r_old: problem.convex_regularizer(&xb),
        r_new: problem.convex_regularizer(&x_tilde),
        x_tilde,
        delta,
        linear,
        modulus,
    })
}

/// Every agent's block selection and best response at round `t`.
pub fn local_steps(ctx: &RoundContext<'_>, states: &[AgentState], t: usize) -> Result<Vec<BlockResponse>> {
    let problem = ctx.problem;
    (0..states.len())
        .into_par_iter()
        .map(|i| {
            let block = ctx.schedule.select(i, t);
            let x = states[i].x(problem);
            let y_block = problem.block_of(&states[i].sigma, block) / states[i].phi[block];
            best_response_block(problem, ctx.surrogate, i, block, &x, &y_block)
        })
        .collect()
}

/// States after a round together with the local steps taken in it.
#[derive(Clone, Debug)]
pub struct RoundOutput {
    pub states: Vec<AgentState>,
    pub steps: Vec<BlockResponse>,
}

/// Runs one round of the chosen variant.
pub fn advance(
    ctx: &RoundContext<'_>,
    variant: Variant,
    states: &[AgentState],
    gamma: f64,
    t: usize,
) -> Result<RoundOutput> {
    if states.len() != ctx.problem.agent_count() || ctx.base.size() != states.len() {
        return Err(Error::DimensionError("state, problem and weight sizes disagree".into()));
    }
    let steps = local_steps(ctx, states, t)?;
    advance_with_steps(ctx, variant, states, steps, gamma)
}

/// Communication and tracking half of a round, given this round's local steps.
pub(crate) fn advance_with_steps(
    ctx: &RoundContext<'_>,
    variant: Variant,
    states: &[AgentState],
    steps: Vec<BlockResponse>,
    gamma: f64,
) -> Result<RoundOutput> {
    let problem = ctx.problem;
    let partition = problem.partition();
    let selections: Vec<usize> = steps.iter().map(|s| s.block).collect();
    let weights = round_weights(ctx.base, &selections, problem.block_count());
    let rows = MixingRows::new(&weights);

    let phis: Vec<Vec<f64>> = states.iter().map(|s| s.phi.clone()).collect();
    let phi_next = rows.mix_phi(&phis)?;

    // s-update
    let s_next = match variant {
        Variant::Atc | Variant::BlockGradient => {
            let sent: Vec<DVector<f64>> = states
                .iter()
                .zip(&steps)
                .map(|(st, step)| add_block(problem, &st.s, step, gamma * st.phi[step.block]))
                .collect();
            rows.mix_vectors(partition, &sent)
        }
        Variant::Cta => {
            let s: Vec<DVector<f64>> = states.iter().map(|st| st.s.clone()).collect();
            rows.mix_vectors(partition, &s)
                .into_iter()
                .zip(states.iter().zip(&steps))
                .map(|(mixed, (st, step))| add_block(problem, &mixed, step, gamma * st.phi[step.block]))
                .collect()
        }
    };

    let x_next: Vec<DVector<f64>> =
        s_next.iter().zip(&phi_next).map(|(s, p)| unscale_blocks(partition, s, p)).collect();

    // new gradient signal per agent
    let grad_next: Vec<DVector<f64>> = (0..states.len())
        .into_par_iter()
        .map(|i| match variant {
            Variant::Atc | Variant::Cta => problem.local_gradient(i, &x_next[i]),
            Variant::BlockGradient => {
                let l = steps[i].block;
                let fresh = problem.block_gradient(i, l, &x_next[i]);
                let mut g = states[i].grad.clone();
                for (pos, &k) in partition.indices(l).iter().enumerate() {
                    g[k] = fresh[pos];
                }
                g
            }
        })
        .collect();

    let sigma_next = match variant {
        Variant::Atc | Variant::BlockGradient => {
            let sent: Vec<DVector<f64>> =
                states.iter().zip(&grad_next).map(|(st, g)| &st.sigma + g - &st.grad).collect();
            rows.mix_vectors(partition, &sent)
        }
        Variant::Cta => {
            let sigma: Vec<DVector<f64>> = states.iter().map(|st| st.sigma.clone()).collect();
            rows.mix_vectors(partition, &sigma)
                .into_iter()
                .zip(states.iter().zip(&grad_next))
                .map(|(mixed, (st, g))| mixed + g - &st.grad)
                .collect()
        }
    };

    let states = phi_next
        .into_iter()
        .zip(s_next)
        .zip(sigma_next)
        .zip(grad_next)
        .map(|(((phi, s), sigma), grad)| AgentState { phi, s, sigma, grad })
        .collect();
    Ok(RoundOutput { states, steps })
}

/// `v` with `scale * step.delta` added on the step's block.
fn add_block(problem: &ProblemInstance, v: &DVector<f64>, step: &BlockResponse, scale: f64) -> DVector<f64> {
    let mut out = v.clone();
    for (pos, &k) in problem.partition().indices(step.block).iter().enumerate() {
        out[k] += scale * step.delta[pos];
    }
    out
}

/// Adapt-then-combine round.
pub fn sonata_round(ctx: &RoundContext<'_>, states: &[AgentState], gamma: f64, t: usize) -> Result<Vec<AgentState>> {
    advance(ctx, Variant::Atc, states, gamma, t).map(|o| o.states)
}

/// Combine-then-adapt round.
pub fn cta_round(ctx: &RoundContext<'_>, states: &[AgentState], gamma: f64, t: usize) -> Result<Vec<AgentState>> {
    advance(ctx, Variant::Cta, states, gamma, t).map(|o| o.states)
}

/// Adapt-then-combine round with block-wise gradient refresh.
pub fn blockwise_gradient_round(
    ctx: &RoundContext<'_>,
    states: &[AgentState],
    gamma: f64,
    t: usize,
) -> Result<Vec<AgentState>> {
    advance(ctx, Variant::BlockGradient, states, gamma, t).map(|o| o.states)
}
