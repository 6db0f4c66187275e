//! Distributed sparse regression with a difference-of-convex log penalty.
//!
//! Agent `i` owns `f_i(x) = ||D_i x - b_i||^2`. The shared regularizer is
//! `r(x) = lambda sum_k r0(x_k)`, split as `lambda eta ||x||_1` (convex,
//! handled by the prox) minus `lambda sum_k r0_minus(x_k)` (concave, linearized).
//! The feasible set is the box `[k_lower, k_upper]^m`.

mod io;
mod prox;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use prox::{
    box_project, eta, oracle_prox_solve, r0, r0_minus, r0_minus_derivative, r0_subgradient, soft_threshold,
};

use crate::error::{Error, Result};
pub use crate::partition::BlockPartition;
use crate::sonata::{SurrogateKind, SurrogateSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct AgentData {
    pub d: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    partition: BlockPartition,
    agents: Vec<AgentData>,
    k_lower: f64,
    k_upper: f64,
    lambda: f64,
    theta: f64,
}

/// Generation parameters for [`make_sparse_regression`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRegressionSpec {
    pub agents: usize,
    pub dim: usize,
    pub rows_per_agent: usize,
    pub sparsity_frac: f64,
    pub noise_var: f64,
    pub lambda: f64,
    pub theta: f64,
    pub k_lower: f64,
    pub k_upper: f64,
}

impl ProblemInstance {
    pub fn new(
        partition: BlockPartition,
        agents: Vec<AgentData>,
        k_lower: f64,
        k_upper: f64,
        lambda: f64,
        theta: f64,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::DimensionError("at least one agent is required".into()));
        }
        for (i, a) in agents.iter().enumerate() {
            if a.d.ncols() != partition.dim() || a.d.nrows() != a.b.len() {
                return Err(Error::DimensionError(format!(
                    "agent {i}: D is {}x{}, b has {} rows, dimension {}",
                    a.d.nrows(),
                    a.d.ncols(),
                    a.b.len(),
                    partition.dim()
                )));
            }
        }
        if !(k_lower <= k_upper) {
            return Err(Error::InvalidArgument(format!("empty box [{k_lower}, {k_upper}]")));
        }
        if !(lambda >= 0.0) || !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("need lambda >= 0 and theta > 0, got {lambda}, {theta}")));
        }
        Ok(Self { partition, agents, k_lower, k_upper, lambda, theta })
    }

    /// Same data under a different block partition.
    pub fn with_partition(&self, partition: BlockPartition) -> Result<Self> {
        if partition.dim() != self.dim() {
            return Err(Error::DimensionError("partition dimension differs".into()));
        }
        Ok(Self { partition, ..self.clone() })
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn block_count(&self) -> usize {
        self.partition.block_count()
    }

    pub fn agent(&self, i: usize) -> &AgentData {
        &self.agents[i]
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.k_lower, self.k_upper)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Weight of the convex `l1` part: `lambda eta(theta)`.
    pub fn l1_weight(&self) -> f64 {
        self.lambda * eta(self.theta)
    }

    pub fn residual(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let a = &self.agents[i];
        &a.d * x - &a.b
    }

    pub fn local_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.residual(i, x).norm_squared()
    }

    /// `2 D_i^T (D_i x - b_i)`, one column dot product per coordinate.
    pub fn local_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let r = self.residual(i, x);
        let d = &self.agents[i].d;
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|k| 2.0 * d.column(k).dot(&r)))
    }

    /// Restriction of [`Self::local_gradient`] to block `l`; bitwise equal to it.
    pub fn block_gradient(&self, i: usize, l: usize, x: &DVector<f64>) -> DVector<f64> {
        let r = self.residual(i, x);
        let d = &self.agents[i].d;
        let idx = self.partition.indices(l);
        DVector::from_iterator(idx.len(), idx.iter().map(|&k| 2.0 * d.column(k).dot(&r)))
    }

    /// `sum_i grad f_i(x)`, summed in agent order.
    pub fn total_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (0..self.agent_count()).map(|i| self.local_gradient(i, x)).fold(DVector::zeros(self.dim()), |acc, g| acc + g)
    }

    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        (0..self.agent_count()).map(|i| self.local_value(i, x)).sum()
    }

    /// `lambda sum_k r0(v_k)` for any slice of coordinates.
    pub fn regularizer(&self, v: &DVector<f64>) -> f64 {
        self.lambda * v.iter().map(|&x| r0(x, self.theta)).sum::<f64>()
    }

    /// Convex part `lambda eta ||v||_1`.
    pub fn convex_regularizer(&self, v: &DVector<f64>) -> f64 {
        self.l1_weight() * v.lp_norm(1)
    }

    /// Gradient of the concave part's negation: `lambda dr0_minus/dx` element-wise.
    pub fn concave_gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|x| self.lambda * r0_minus_derivative(x, self.theta))
    }

    /// `sum_i f_i(x) + r(x)`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.regularizer(x)
    }

    pub fn in_box(&self, v: &DVector<f64>, slack: f64) -> bool {
        v.iter().all(|&x| x >= self.k_lower - slack && x <= self.k_upper + slack)
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        box_project(v, self.k_lower, self.k_upper)
    }

    /// `argmin_{x in box} q^T (x - c) + (modulus/2) ||x - c||^2 + lambda eta ||x||_1`,
    /// i.e. `P_K(S_{lambda eta / modulus}(c - q / modulus))`.
    pub fn composite_prox(&self, center: &DVector<f64>, q: &DVector<f64>, modulus: f64) -> DVector<f64> {
        let step = center - q / modulus;
        self.project(&soft_threshold(&step, self.l1_weight() / modulus))
    }

    /// Block `l` of `v`.
    pub fn block_of(&self, v: &DVector<f64>, l: usize) -> DVector<f64> {
        let idx = self.partition.indices(l);
        DVector::from_iterator(idx.len(), idx.iter().map(|&k| v[k]))
    }
}

/// Draws a ground truth with the smallest `sparsity_frac` fraction of entries
/// zeroed, row-normalized Gaussian measurement matrices and Gaussian noise.
/// `data_rng` drives the signal and matrices, `noise_rng` the measurement noise.
pub fn make_sparse_regression<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    spec: &SparseRegressionSpec,
    partition: BlockPartition,
    data_rng: &mut R1,
    noise_rng: &mut R2,
) -> Result<(ProblemInstance, DVector<f64>)> {
    if partition.dim() != spec.dim {
        return Err(Error::DimensionError(format!(
            "partition covers {} coordinates, problem has {}",
            partition.dim(),
            spec.dim
        )));
    }
    if spec.agents == 0 || spec.dim == 0 || spec.rows_per_agent == 0 {
        return Err(Error::DimensionError("agents, dim and rows must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.sparsity_frac) {
        return Err(Error::InvalidArgument(format!("sparsity fraction {} not in [0,1)", spec.sparsity_frac)));
    }
    if !(spec.noise_var >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
    }
    let m = spec.dim;
    let mut x0 = DVector::from_fn(m, |_, _| data_rng.sample::<f64, _>(StandardNormal));
    let zeros = (spec.sparsity_frac * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| x0[a].abs().total_cmp(&x0[b].abs()));
    for &k in &order[..zeros] {
        x0[k] = 0.0;
    }

    let noise = Normal::new(0.0, spec.noise_var.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
    let mut agents = Vec::with_capacity(spec.agents);
    for _ in 0..spec.agents {
        let mut d = DMatrix::from_fn(spec.rows_per_agent, m, |_, _| data_rng.sample::<f64, _>(StandardNormal));
        for mut row in d.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        let n = DVector::from_fn(spec.rows_per_agent, |_, _| noise.sample(noise_rng));
        let b = &d * &x0 + n;
        agents.push(AgentData { d, b });
    }
    let problem = ProblemInstance::new(partition, agents, spec.k_lower, spec.k_upper, spec.lambda, spec.theta)?;
    Ok((problem, x0))
}

/// Block minimizer used by the distributed algorithm: the linear coefficient
/// is `N y_block` minus the concave-part gradient, the quadratic has modulus
/// `tau` and the shrinkage threshold is `lambda eta / tau`.
pub fn closed_form_block_min(
    problem: &ProblemInstance,
    block: usize,
    x_i: &DVector<f64>,
    y_block: &DVector<f64>,
    tau: f64,
) -> DVector<f64> {
    let xb = problem.block_of(x_i, block);
    let q = y_block * problem.agent_count() as f64 - problem.concave_gradient(&xb);
    problem.composite_prox(&xb, &q, tau)
}

/// Purely local variant: the linear coefficient is agent `i`'s own block
/// gradient `2 D_(i,l)^T (D_i x - b_i)` minus the concave-part gradient.
pub fn local_closed_form_block_min(
    problem: &ProblemInstance,
    agent: usize,
    block: usize,
    x_i: &DVector<f64>,
    tau: f64,
) -> DVector<f64> {
    let xb = problem.block_of(x_i, block);
    let q = problem.block_gradient(agent, block, x_i) - problem.concave_gradient(&xb);
    problem.composite_prox(&xb, &q, tau)
}

/// Stationarity residual
/// `|| s - P_K(S_{lambda eta}(s - (sum_i grad f_i(s) - v(s)))) ||_inf`
/// with `v` the concave-part gradient.
pub fn merit_j(problem: &ProblemInstance, s_bar: &DVector<f64>) -> f64 {
    let g = problem.total_gradient(s_bar) - problem.concave_gradient(s_bar);
    let mapped = problem.composite_prox(s_bar, &g, 1.0);
    (s_bar - mapped).amax()
}

/// Centralized best response `x_hat(w)` for agent `agent`: every block is
/// minimized with the tracker replaced by the exact average gradient at `w`.
pub fn best_response_map(
    problem: &ProblemInstance,
    spec: &SurrogateSpec,
    agent: usize,
    w: &DVector<f64>,
) -> DVector<f64> {
    let n = problem.agent_count() as f64;
    let avg_grad = problem.total_gradient(w) / n;
    let mut out = DVector::zeros(problem.dim());
    for l in 0..problem.block_count() {
        let xb = problem.block_of(w, l);
        let mut q = problem.block_of(&avg_grad, l) * n;
        if spec.kind == SurrogateKind::DcLinearization {
            q -= problem.concave_gradient(&xb);
        }
        let xl = problem.composite_prox(&xb, &q, spec.modulus(agent));
        for (pos, &k) in problem.partition().indices(l).iter().enumerate() {
            out[k] = xl[pos];
        }
    }
    out
}

/// `|| x_hat(w) - w ||_inf`.
pub fn stationarity_residual(problem: &ProblemInstance, spec: &SurrogateSpec, w: &DVector<f64>) -> f64 {
    (best_response_map(problem, spec, 0, w) - w).amax()
}

pub use io::{load_instance, save_instance, INSTANCE_FORMAT_VERSION};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(agents: usize, dim: usize, rows: usize, lambda: f64) -> SparseRegressionSpec {
        SparseRegressionSpec {
            agents,
            dim,
            rows_per_agent: rows,
            sparsity_frac: 0.8,
            noise_var: 0.5,
            lambda,
            theta: 7.0,
            k_lower: -10.0,
            k_upper: 10.0,
        }
    }

    fn instance(agents: usize, dim: usize, rows: usize, blocks: usize, seed: u64) -> (ProblemInstance, DVector<f64>) {
        let mut data = ChaCha8Rng::seed_from_u64(seed);
        let mut noise = ChaCha8Rng::seed_from_u64(seed + 1);
        make_sparse_regression(
            &spec(agents, dim, rows, 0.15),
            BlockPartition::contiguous(dim, blocks).unwrap(),
            &mut data,
            &mut noise,
        )
        .unwrap()
    }

    #[test]
    fn shapes_and_normalized_rows() {
        let (p, x0) = instance(10, 60, 40, 3, 1);
        assert_eq!(p.agent(3).d.shape(), (40, 60));
        assert_eq!(p.agent(3).b.len(), 40);
        assert_eq!(x0.len(), 60);
        for i in 0..10 {
            for row in p.agent(i).d.row_iter() {
                assert!((row.norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sparsity_fraction_is_exact() {
        let (_, x0) = instance(1, 400, 5, 1, 2);
        assert_eq!(x0.iter().filter(|&&v| v == 0.0).count(), 320);
        // survivors dominate the zeroed entries in magnitude
        assert!(x0.iter().filter(|&&v| v != 0.0).all(|v| v.abs() > 0.0));
    }

    #[test]
    fn inconsistent_shapes_rejected() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let part = BlockPartition::contiguous(10, 2).unwrap();
        assert!(matches!(
            make_sparse_regression(&spec(2, 12, 3, 0.1), part.clone(), &mut r, &mut r2),
            Err(Error::DimensionError(_))
        ));
        let mut bad = spec(2, 10, 3, 0.1);
        bad.sparsity_frac = 1.0;
        assert!(make_sparse_regression(&bad, part, &mut r, &mut r2).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, _) = instance(3, 12, 8, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = DVector::from_fn(12, |_, _| rng.sample::<f64, _>(StandardNormal));
            for i in 0..3 {
                let g = p.local_gradient(i, &x);
                let h = 1e-5;
                for k in 0..12 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (p.local_value(i, &xp) - p.local_value(i, &xm)) / (2.0 * h);
                    assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()));
                }
            }
        }
    }

    #[test]
    fn block_gradient_is_exact_restriction() {
        let (p, _) = instance(2, 12, 6, 4, 3);
        let x = DVector::from_fn(12, |k, _| (k as f64).sin());
        let g = p.local_gradient(1, &x);
        for l in 0..4 {
            assert_eq!(p.block_gradient(1, l, &x), p.block_of(&g, l));
        }
    }

    #[test]
    fn closed_form_reduces_to_gradient_step() {
        let (p, _) = instance(2, 6, 4, 2, 4);
        let p = ProblemInstance::new(
            p.partition().clone(),
            (0..2).map(|i| p.agent(i).clone()).collect(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.0,
            7.0,
        )
        .unwrap();
        let x = DVector::from_column_slice(&[0.5, -1.0, 2.0, 0.0, 1.0, 3.0]);
        let y = DVector::from_column_slice(&[0.2, -0.4, 1.0]);
        let got = closed_form_block_min(&p, 1, &x, &y, 10.0);
        let expected = p.block_of(&x, 1) - &y * (2.0 / 10.0);
        assert!((got - expected).amax() < 1e-15);
        let local = local_closed_form_block_min(&p, 0, 0, &x, 10.0);
        let expected = p.block_of(&x, 0) - p.block_gradient(0, 0, &x) / 10.0;
        assert!((local - expected).amax() < 1e-15);
    }

    #[test]
    fn closed_form_stays_in_box() {
        let (p, _) = instance(4, 12, 5, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = DVector::from_fn(12, |_, _| 12.0 * rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(4, |_, _| 50.0 * rng.sample::<f64, _>(StandardNormal));
            let out = closed_form_block_min(&p, 2, &x, &y, 10.0);
            assert!(p.in_box(&out, 0.0));
        }
    }

    #[test]
    fn merit_positive_at_random_point() {
        let (p, _) = instance(4, 12, 6, 3, 10);
        let s = DVector::from_fn(12, |k, _| (k as f64 * 0.7).cos());
        assert!(merit_j(&p, &s) > 0.0);
    }
}
