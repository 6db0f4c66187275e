//! Full-vector distributed projected subgradient comparator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::{Digraph, WeightMatrix};
use crate::problems::{r0_subgradient, ProblemInstance};

/// Doubly stochastic Metropolis–Hastings weights on an undirected graph:
/// `w_ij = 1 / (1 + max(d_i, d_j))` for neighbors, `w_ii = 1 - sum_j w_ij`,
/// with degrees excluding the self-loop.
pub fn metropolis_hastings_weights(g: &Digraph) -> Result<WeightMatrix> {
    if !g.is_symmetric() {
        return Err(Error::InvalidArgument("baseline weights need an undirected graph".into()));
    }
    let n = g.node_count();
    let deg: Vec<usize> = (0..n).map(|i| g.out_degree(i) - 1).collect();
    let mut w = DMatrix::zeros(n, n);
    for (j, i) in g.edges() {
        if i != j {
            w[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    let kappa = w.iter().copied().filter(|&a| a > 0.0).fold(f64::INFINITY, f64::min);
    Ok(WeightMatrix::from_matrix(w, kappa))
}

/// `x_i' = P_K(sum_j w_ij x_j - gamma g_i(x_i))` with `g_i` a subgradient of
/// `f_i + (1/N) lambda sum_k r0(x_k)`; the subgradient of `|.|` at 0 is 0.
pub fn baseline_subgradient_round(
    x: &[DVector<f64>],
    weights: &WeightMatrix,
    gamma: f64,
    problem: &ProblemInstance,
) -> Vec<DVector<f64>> {
    let n = x.len();
    let share = problem.lambda() / n as f64;
    (0..n)
        .map(|i| {
            let mixed =
                weights.row_support(i).into_iter().fold(DVector::zeros(problem.dim()), |acc, (j, a)| acc + &x[j] * a);
            let mut g = problem.local_gradient(i, &x[i]);
            for k in 0..g.len() {
                g[k] += share * r0_subgradient(x[i][k], problem.theta());
            }
            problem.project(&(mixed - g * gamma))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::BlockPartition;
    use crate::problems::AgentData;

    #[test]
    fn weights_are_doubly_stochastic() {
        let g = Digraph::new(4, [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (0, 2), (2, 0)]).unwrap();
        let w = metropolis_hastings_weights(&g).unwrap();
        for i in 0..4 {
            let row: f64 = (0..4).map(|j| w.entry(i, j)).sum();
            let col: f64 = (0..4).map(|j| w.entry(j, i)).sum();
            assert!((row - 1.0).abs() < 1e-15 && (col - 1.0).abs() < 1e-15);
            assert!(w.entry(i, i) > 0.0);
        }
        assert_eq!(w.entry(0, 3), 0.0);
    }

    #[test]
    fn rejects_directed_graph() {
        let g = Digraph::new(2, [(0, 1)]).unwrap();
        assert!(metropolis_hastings_weights(&g).is_err());
    }

    fn one_agent(lambda: f64) -> ProblemInstance {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let b = DVector::from_column_slice(&[1.0, 1.0]);
        ProblemInstance::new(
            BlockPartition::contiguous(2, 1).unwrap(),
            vec![AgentData { d, b }],
            -1e9,
            1e9,
            lambda,
            7.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_step_keeps_consensus() {
        let g = Digraph::complete(3).unwrap();
        let w = metropolis_hastings_weights(&g).unwrap();
        let p = one_agent(0.15);
        let p3 = ProblemInstance::new(
            p.partition().clone(),
            vec![p.agent(0).clone(), p.agent(0).clone(), p.agent(0).clone()],
            -10.0,
            10.0,
            0.15,
            7.0,
        )
        .unwrap();
        let x = vec![DVector::from_column_slice(&[0.5, -0.25]); 3];
        let next = baseline_subgradient_round(&x, &w, 0.0, &p3);
        for v in &next {
            assert!((v - &x[0]).amax() < 1e-15);
        }
    }

    #[test]
    fn single_agent_is_gradient_descent() {
        let p = one_agent(0.0);
        let w = WeightMatrix::identity(1);
        let x = vec![DVector::from_column_slice(&[0.0, 0.0])];
        let next = baseline_subgradient_round(&x, &w, 0.1, &p);
        let expected = &x[0] - p.local_gradient(0, &x[0]) * 0.1;
        assert_eq!(next[0], expected);
    }
}
