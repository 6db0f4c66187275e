//! Experiment orchestration: seeding, the round loop, the baseline comparator,
//! metrics persistence and block-count sweeps.

mod baseline;
mod config;
mod output;

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use baseline::{baseline_subgradient_round, metropolis_hastings_weights};
pub use config::{AlgorithmConfig, GraphConfig, ProblemConfig, RunConfig, RunSettings, ScheduleName, VariantName};
pub use output::{metrics_csv_string, read_metrics_csv, write_metrics_csv, write_sweep_csv, METRICS_HEADER};

use crate::error::{Error, Result};
use crate::graphs::{base_weights, gen_erdos_renyi, gen_erdos_renyi_undirected, Digraph};
use crate::partition::BlockPartition;
use crate::problems::{make_sparse_regression, merit_j, ProblemInstance, SparseRegressionSpec};
use crate::pushsum::{consensus_error, pushsum_step, round_weights, PushSumState};
use crate::schedule::BlockSchedule;
use crate::sonata::{
    advance_with_steps, check_round_invariants, init_states, local_steps, metrics_with_steps, AgentState,
    MetricsRecord, RoundContext, StepSizeSchedule, SurrogateSpec, Variant,
};

/// RNG stream labels. Each purpose draws from its own stream of the master
/// seed, so changing one setting (for example `B`) leaves the others intact.
pub mod streams {
    pub const GRAPH: u64 = 1;
    pub const DATA: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SCHEDULE: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Graph, instance and starting points derived from a config.
#[derive(Clone, Debug)]
pub struct Setup {
    pub graph: Digraph,
    pub problem: ProblemInstance,
    pub ground_truth: DVector<f64>,
    pub x0: Vec<DVector<f64>>,
    pub schedule: BlockSchedule,
}

pub fn build_setup(cfg: &RunConfig) -> Result<Setup> {
    cfg.validate()?;
    let g = &cfg.graph;
    let graph = gen_erdos_renyi_undirected(g.n, g.p, &mut stream_rng(cfg.seed, streams::GRAPH), g.max_retries)?;
    let p = &cfg.problem;
    let spec = SparseRegressionSpec {
        agents: g.n,
        dim: p.m,
        rows_per_agent: p.n_i,
        sparsity_frac: p.sparsity_frac,
        noise_var: p.noise_var,
        lambda: p.lambda,
        theta: p.theta,
        k_lower: p.bounds[0],
        k_upper: p.bounds[1],
    };
    let partition = BlockPartition::contiguous(p.m, cfg.algorithm.blocks)?;
    let (problem, ground_truth) = make_sparse_regression(
        &spec,
        partition,
        &mut stream_rng(cfg.seed, streams::DATA),
        &mut stream_rng(cfg.seed, streams::NOISE),
    )?;
    let mut init = stream_rng(cfg.seed, streams::INIT);
    let x0 = (0..g.n)
        .map(|_| problem.project(&DVector::from_fn(p.m, |_, _| init.sample::<f64, _>(StandardNormal))))
        .collect();
    let schedule = match cfg.algorithm.schedule {
        ScheduleName::RoundRobin => BlockSchedule::round_robin(g.n, cfg.algorithm.blocks)?,
        ScheduleName::ShuffledCyclic => {
            BlockSchedule::shuffled_cyclic(cfg.algorithm.blocks, stream_rng(cfg.seed, streams::SCHEDULE).next_u64())?
        }
    };
    Ok(Setup { graph, problem, ground_truth, x0, schedule })
}

/// Trace and final state of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<MetricsRecord>,
    /// Final local estimates `x_i`.
    pub x: Vec<DVector<f64>>,
    /// Final canonical states; `None` for the baseline.
    pub states: Option<Vec<AgentState>>,
    /// Round at which `J < stop_tol_J` first held, if it did.
    pub stopped_at: Option<usize>,
    /// Last evaluated round.
    pub final_round: usize,
    pub setup: Setup,
}

impl RunOutput {
    pub fn last(&self) -> &MetricsRecord {
        self.trace.last().expect("trace always holds the final round")
    }
}

fn variant_of(name: VariantName) -> Option<Variant> {
    match name {
        VariantName::Atc => Some(Variant::Atc),
        VariantName::Cta => Some(Variant::Cta),
        VariantName::Ghat => Some(Variant::BlockGradient),
        VariantName::Baseline => None,
    }
}

/// Runs the configured variant for `max_rounds` rounds or until `J < stop_tol_J`.
///
/// Metrics are evaluated every round (for the stopping test) and recorded
/// every `metrics_stride` rounds, plus the final round.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    let setup = build_setup(cfg)?;
    match variant_of(cfg.algorithm.variant) {
        Some(v) => run_sonata(cfg, setup, v),
        None => run_baseline(cfg, setup),
    }
}

fn should_stop(cfg: &RunConfig, rec: &MetricsRecord) -> bool {
    cfg.run.stop_tol_j > 0.0 && rec.j < cfg.run.stop_tol_j
}

fn checked(rec: MetricsRecord) -> Result<MetricsRecord> {
    if rec.is_finite() {
        Ok(rec)
    } else {
        Err(Error::DivergenceDetected { round: rec.t, what: format!("non-finite metrics {rec:?}") })
    }
}

fn run_sonata(cfg: &RunConfig, setup: Setup, variant: Variant) -> Result<RunOutput> {
    let problem = &setup.problem;
    let base = base_weights(&setup.graph);
    let surrogate = SurrogateSpec::uniform(problem.agent_count(), cfg.algorithm.tau, cfg.algorithm.surrogate)?;
    let ctx = RoundContext { problem, base: &base, schedule: &setup.schedule, surrogate: &surrogate };
    let mut gammas = StepSizeSchedule::new(cfg.algorithm.gamma0, cfg.algorithm.mu)?.iter();
    let mut states = init_states(problem, &setup.x0)?;
    let mut trace = Vec::new();
    let mut stopped_at = None;
    let mut t = 0;
    loop {
        let gamma = gammas.next().expect("step sizes are infinite");
        let steps = local_steps(&ctx, &states, t)?;
        let rec = checked(metrics_with_steps(problem, &states, &steps, gamma, t, problem.block_count()))?;
        let stop = should_stop(cfg, &rec);
        let last = stop || t == cfg.run.max_rounds;
        if last || t % cfg.run.metrics_stride == 0 {
            trace.push(rec);
        }
        if stop {
            stopped_at = Some(t);
        }
        if last {
            break;
        }
        let out = advance_with_steps(&ctx, variant, &states, steps, gamma)?;
        if cfg.run.verify {
            check_round_invariants(problem, variant, &states, &out.states, &out.steps, gamma, t)?;
        }
        states = out.states;
        t += 1;
    }
    let x = states.iter().map(|s| s.x(problem)).collect();
    Ok(RunOutput { trace, x, states: Some(states), stopped_at, final_round: t, setup })
}

fn run_baseline(cfg: &RunConfig, setup: Setup) -> Result<RunOutput> {
    let problem = &setup.problem;
    let weights = metropolis_hastings_weights(&setup.graph)?;
    let mut gammas = StepSizeSchedule::new(cfg.algorithm.gamma0, cfg.algorithm.mu)?.iter();
    let mut x = setup.x0.clone();
    let mut trace = Vec::new();
    let mut stopped_at = None;
    let mut t = 0;
    loop {
        let gamma = gammas.next().expect("step sizes are infinite");
        let next = baseline_subgradient_round(&x, &weights, gamma, problem);
        let rec = checked(baseline_metrics(problem, &x, &next, gamma, t))?;
        let stop = should_stop(cfg, &rec);
        let last = stop || t == cfg.run.max_rounds;
        if last || t % cfg.run.metrics_stride == 0 {
            trace.push(rec);
        }
        if stop {
            stopped_at = Some(t);
        }
        if last {
            break;
        }
        if cfg.run.verify {
            if let Some(i) = next.iter().position(|v| !problem.in_box(v, 1e-12)) {
                return Err(Error::InvariantViolation { round: t, what: format!("agent {i} left the feasible box") });
            }
        }
        x = next;
        t += 1;
    }
    Ok(RunOutput { trace, x, states: None, stopped_at, final_round: t, setup })
}

/// Baseline metrics: `R` and the tracking residual are zero (no tracker),
/// `V` uses unit weights, `delta_sum` is `sum_i ||x_i^{t+1} - x_i^t||`.
/// One message exchange per round.
fn baseline_metrics(
    problem: &ProblemInstance,
    x: &[DVector<f64>],
    next: &[DVector<f64>],
    gamma: f64,
    t: usize,
) -> MetricsRecord {
    let n = x.len() as f64;
    let mean = |vs: &[DVector<f64>]| vs.iter().fold(DVector::zeros(problem.dim()), |acc, v| acc + v) / n;
    let s_bar = mean(x);
    MetricsRecord {
        t,
        message_exchanges: t as f64,
        j: merit_j(problem, &s_bar),
        d: x.iter().map(|v| (v - &s_bar).norm()).fold(0.0, f64::max),
        r: 0.0,
        tracking_residual: 0.0,
        v: problem.smooth_value(&mean(next)) + x.iter().map(|v| problem.regularizer(v)).sum::<f64>(),
        gamma,
        delta_sum: x.iter().zip(next).map(|(a, b)| (b - a).norm()).sum(),
    }
}

/// One row of a completion-time sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub blocks: usize,
    /// First round with `J < tol`, `None` if not reached within `max_rounds`.
    pub t_end: Option<usize>,
}

impl SweepRow {
    /// `t_end / B`, infinite when unreached.
    pub fn normalized(&self) -> f64 {
        self.t_end.map_or(f64::INFINITY, |t| t as f64 / self.blocks as f64)
    }
}

/// Completion tolerance used by [`completion_time_sweep`].
pub const COMPLETION_TOL: f64 = 1e-3;

/// Runs the configured experiment once per block count and records the first
/// round with `J < 1e-3`. The graph and instance are identical across rows.
pub fn completion_time_sweep(cfg: &RunConfig, blocks: &[usize]) -> Result<Vec<SweepRow>> {
    blocks
        .par_iter()
        .map(|&b| {
            let mut c = cfg.clone();
            c.algorithm.blocks = b;
            c.run.stop_tol_j = COMPLETION_TOL;
            c.run.metrics_stride = c.run.max_rounds.max(1);
            let out = run_experiment(&c)?;
            Ok(SweepRow { blocks: b, t_end: out.stopped_at })
        })
        .collect()
}

/// Parameters of the standalone push-sum demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct PushSumDemo {
    pub agents: usize,
    pub blocks: usize,
    pub p: f64,
    pub seed: u64,
    pub rounds: usize,
    pub schedule: ScheduleName,
    /// Coordinates per block.
    pub block_len: usize,
}

/// Unperturbed block-wise push-sum on a directed Erdős–Rényi graph with
/// standard normal initial values. Returns `(round, max_i consensus error)`
/// for rounds `0..=rounds`.
pub fn pushsum_demo(demo: &PushSumDemo) -> Result<Vec<(usize, f64)>> {
    let graph = gen_erdos_renyi(demo.agents, demo.p, &mut stream_rng(demo.seed, streams::GRAPH), 1000)?;
    let dim = demo.blocks * demo.block_len;
    let partition = BlockPartition::contiguous(dim, demo.blocks)?;
    let mut init = stream_rng(demo.seed, streams::INIT);
    let z = (0..demo.agents).map(|_| DVector::from_fn(dim, |_, _| init.sample::<f64, _>(StandardNormal))).collect();
    let schedule = match demo.schedule {
        ScheduleName::RoundRobin => BlockSchedule::round_robin(demo.agents, demo.blocks)?,
        ScheduleName::ShuffledCyclic => {
            BlockSchedule::shuffled_cyclic(demo.blocks, stream_rng(demo.seed, streams::SCHEDULE).next_u64())?
        }
    };
    let base = base_weights(&graph);
    let mut state = PushSumState::new(partition, z)?;
    let max_err = |s: &PushSumState| consensus_error(s).into_iter().fold(0.0, f64::max);
    let mut out = vec![(0, max_err(&state))];
    for t in 0..demo.rounds {
        let weights = round_weights(&base, &schedule.selections(demo.agents, t), demo.blocks);
        state = pushsum_step(&state, &weights)?;
        out.push((t + 1, max_err(&state)));
    }
    Ok(out)
}
