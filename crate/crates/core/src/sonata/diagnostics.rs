use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::round::{local_steps, BlockResponse, RoundContext, Variant};
use super::AgentState;
use crate::error::{Error, Result};
use crate::problems::{merit_j, ProblemInstance};

/// `(1/N) sum_i s_i`, equal block-wise to `(1/N) sum_i phi_(i,l) x_(i,l)`.
pub fn weighted_average_sbar(states: &[AgentState]) -> DVector<f64> {
    average(states.iter().map(|s| &s.s))
}

/// `(1/N) sum_i sigma_i`.
pub fn sigma_bar(states: &[AgentState]) -> DVector<f64> {
    average(states.iter().map(|s| &s.sigma))
}

fn average<'a>(vs: impl ExactSizeIterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let n = vs.len() as f64;
    let mut it = vs;
    let first = it.next().expect("at least one agent").clone();
    it.fold(first, |acc, v| acc + v) / n
}

/// `|| sigma_bar - (1/N) sum_i grad f_i(x_i) ||_inf`, gradients evaluated fresh.
pub fn tracking_residual(problem: &ProblemInstance, states: &[AgentState]) -> f64 {
    let n = states.len() as f64;
    let avg_grad = states
        .iter()
        .enumerate()
        .map(|(i, st)| problem.local_gradient(i, &st.x(problem)))
        .fold(DVector::zeros(problem.dim()), |acc, g| acc + g)
        / n;
    (sigma_bar(states) - avg_grad).amax()
}

/// `sum_i f_i(s_bar_next) + sum_l sum_i phi_(i,l) r_l(x_(i,l))`.
pub fn lyapunov_v(problem: &ProblemInstance, states: &[AgentState], s_bar_next: &DVector<f64>) -> f64 {
    let smooth = problem.smooth_value(s_bar_next);
    let reg: f64 = states
        .iter()
        .map(|st| {
            let x = st.x(problem);
            (0..problem.block_count()).map(|l| st.phi[l] * problem.regularizer(&problem.block_of(&x, l))).sum::<f64>()
        })
        .sum();
    smooth + reg
}

/// Lemma-level descent inequality for a block best response:
/// `linear^T delta <= -modulus ||delta||^2 - (r_new - r_old) + 1e-9 (1 + ||delta||^2)`.
pub fn descent_check(linear: &DVector<f64>, delta: &DVector<f64>, modulus: f64, r_old: f64, r_new: f64) -> bool {
    let d2 = delta.norm_squared();
    linear.dot(delta) <= -modulus * d2 - (r_new - r_old) + 1e-9 * (1.0 + d2)
}

/// One row of the run trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: usize,
    pub message_exchanges: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub tracking_residual: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub gamma: f64,
    pub delta_sum: f64,
}

impl MetricsRecord {
    pub fn is_finite(&self) -> bool {
        [self.message_exchanges, self.j, self.d, self.r, self.tracking_residual, self.v, self.gamma, self.delta_sum]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Merit values at round `t`. The local steps of round `t` are evaluated to
/// obtain `s_bar^{t+1} = s_bar^t + (gamma/N) sum_i phi_i Delta x_i` (for `V`)
/// and `sum_i ||Delta x_i||` (the per-round proxy for `Delta^t`).
pub fn metrics(ctx: &RoundContext<'_>, states: &[AgentState], gamma: f64, t: usize) -> Result<MetricsRecord> {
    let problem = ctx.problem;
    let steps = local_steps(ctx, states, t)?;
    Ok(metrics_with_steps(problem, states, &steps, gamma, t, ctx.schedule.block_count()))
}

pub(crate) fn metrics_with_steps(
    problem: &ProblemInstance,
    states: &[AgentState],
    steps: &[BlockResponse],
    gamma: f64,
    t: usize,
    block_count: usize,
) -> MetricsRecord {
    let n = states.len() as f64;
    let s_bar = weighted_average_sbar(states);
    let sig_bar = sigma_bar(states);
    let d = states.iter().map(|st| (st.x(problem) - &s_bar).norm()).fold(0.0, f64::max);
    let r = states.iter().map(|st| (st.y(problem) - &sig_bar).norm()).fold(0.0, f64::max);
    let mut s_next = s_bar.clone();
    for (st, step) in states.iter().zip(steps) {
        let w = gamma * st.phi[step.block] / n;
        for (pos, &k) in problem.partition().indices(step.block).iter().enumerate() {
            s_next[k] += w * step.delta[pos];
        }
    }
    MetricsRecord {
        t,
        message_exchanges: t as f64 / block_count as f64,
        j: merit_j(problem, &s_bar),
        d,
        r,
        tracking_residual: tracking_residual(problem, states),
        v: lyapunov_v(problem, states, &s_next),
        gamma,
        delta_sum: steps.iter().map(|s| s.delta.norm()).sum(),
    }
}

/// Checks the per-round identities of a completed round and fails on the first violation:
/// block mass `sum_i phi = N`, positivity of `phi`, conservation of the tracked
/// gradient signal, box feasibility (ATC forms only), the descent inequality of
/// every local step, and the `s_bar` recursion.
pub fn check_round_invariants(
    problem: &ProblemInstance,
    variant: Variant,
    before: &[AgentState],
    after: &[AgentState],
    steps: &[BlockResponse],
    gamma: f64,
    t: usize,
) -> Result<()> {
    let fail = |what: String| Err(Error::InvariantViolation { round: t, what });
    let n = after.len() as f64;

    for l in 0..problem.block_count() {
        let mass: f64 = after.iter().map(|s| s.phi[l]).sum();
        if (mass - n).abs() > 1e-10 {
            return fail(format!("block {l} mass {mass} differs from {n}"));
        }
    }
    if let Some(p) = after.iter().flat_map(|s| s.phi.iter()).find(|&&p| !(p > 0.0)) {
        return fail(format!("non-positive phi {p}"));
    }

    // sigma_bar equals the average injected gradient signal
    let signal = average(after.iter().map(|s| &s.grad));
    let scale = 1.0 + after.iter().map(|s| s.grad.amax()).fold(0.0, f64::max);
    let gap = (sigma_bar(after) - &signal).amax();
    if gap > 1e-8 * scale {
        return fail(format!("tracking identity gap {gap:e}"));
    }
    if matches!(variant, Variant::Atc | Variant::Cta) {
        for (i, st) in after.iter().enumerate() {
            if st.grad != problem.local_gradient(i, &st.x(problem)) {
                return fail(format!("agent {i} cached gradient is stale"));
            }
        }
    }

    // CTA adds the local step after mixing, so its iterates may leave the box
    // whenever gamma exceeds the self weight; feasibility is checked for ATC forms.
    for (i, st) in after.iter().enumerate().filter(|_| variant != Variant::Cta) {
        if !problem.in_box(&st.x(problem), 1e-12) {
            return fail(format!("agent {i} left the feasible box"));
        }
    }

    for (i, step) in steps.iter().enumerate() {
        if !descent_check(&step.linear, &step.delta, step.modulus, step.r_old, step.r_new) {
            return fail(format!("descent inequality fails for agent {i}, block {}", step.block));
        }
    }

    let s_before = weighted_average_sbar(before);
    let s_after = weighted_average_sbar(after);
    let mut predicted = s_before;
    for (st, step) in before.iter().zip(steps) {
        let w = gamma * st.phi[step.block] / n;
        for (pos, &k) in problem.partition().indices(step.block).iter().enumerate() {
            predicted[k] += w * step.delta[pos];
        }
    }
    let err = (&s_after - predicted).amax();
    if err > 1e-10 * s_after.amax().max(1.0) {
        return fail(format!("s_bar recursion off by {err:e}"));
    }
    Ok(())
}
