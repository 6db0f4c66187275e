//! Block-wise push-sum consensus over the per-block subgraphs induced by the
//! agents' selections.
//!
//! Every step is synchronous: all agents read round-`t` values and produce
//! round-`t+1` values. Receivers accumulate senders in ascending index order,
//! so results do not depend on how the per-agent work is scheduled.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphs::WeightMatrix;
use crate::partition::BlockPartition;

/// Weight matrix `A_l^t` for one block: column `j` is the base column when
/// `selections[j] == block`, otherwise the canonical basis vector `e_j`.
pub fn block_weights(base: &WeightMatrix, selections: &[usize], block: usize) -> WeightMatrix {
    let n = base.size();
    let mut entries = base.matrix().clone();
    for (j, &sel) in selections.iter().enumerate().take(n) {
        if sel != block {
            let mut col = entries.column_mut(j);
            col.fill(0.0);
            col[j] = 1.0;
        }
    }
    WeightMatrix::from_matrix(entries, base.kappa())
}

/// One weight matrix per block for the given round of selections.
pub fn round_weights(base: &WeightMatrix, selections: &[usize], block_count: usize) -> Vec<WeightMatrix> {
    (0..block_count).map(|l| block_weights(base, selections, l)).collect()
}

/// Sparse receiver rows of each block's weight matrix: `rows[l][i]` lists `(j, a_ijl)`.
pub(crate) struct MixingRows {
    rows: Vec<Vec<Vec<(usize, f64)>>>,
}

impl MixingRows {
    pub(crate) fn new(weights: &[WeightMatrix]) -> Self {
        let rows = weights.iter().map(|w| (0..w.size()).map(|i| w.row_support(i)).collect()).collect();
        Self { rows }
    }

    fn agent_count(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// `phi'[i][l] = sum_j a_ijl phi[j][l]`, rejecting non-positive results.
    pub(crate) fn mix_phi(&self, phi: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.agent_count();
        let mixed: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                self.rows
                    .iter()
                    .enumerate()
                    .map(|(l, rows)| rows[i].iter().map(|&(j, a)| a * phi[j][l]).sum())
                    .collect()
            })
            .collect();
        for (i, row) in mixed.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if !(v > 0.0) {
                    return Err(Error::DegenerateWeight { agent: i, block: l, value: v });
                }
            }
        }
        Ok(mixed)
    }

    /// `out[i]_k = sum_j a_ij,l(k) values[j]_k` where `l(k)` owns coordinate `k`.
    pub(crate) fn mix_vectors(&self, partition: &BlockPartition, values: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.agent_count();
        let dim = partition.dim();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut out = DVector::zeros(dim);
                for (l, rows) in self.rows.iter().enumerate() {
                    for &k in partition.indices(l) {
                        out[k] = rows[i].iter().map(|&(j, a)| a * values[j][k]).sum();
                    }
                }
                out
            })
            .collect()
    }
}

/// Per-agent, per-block push-sum weights `phi` and estimates `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct PushSumState {
    partition: BlockPartition,
    phi: Vec<Vec<f64>>,
    z: Vec<DVector<f64>>,
}

impl PushSumState {
    /// `phi = 1` everywhere and the given initial estimates.
    pub fn new(partition: BlockPartition, z: Vec<DVector<f64>>) -> Result<Self> {
        check_vectors(&partition, &z)?;
        let phi = vec![vec![1.0; partition.block_count()]; z.len()];
        Ok(Self { partition, phi, z })
    }

    pub fn from_parts(partition: BlockPartition, phi: Vec<Vec<f64>>, z: Vec<DVector<f64>>) -> Result<Self> {
        check_vectors(&partition, &z)?;
        if phi.len() != z.len() || phi.iter().any(|p| p.len() != partition.block_count()) {
            return Err(Error::DimensionError("phi must be agents x blocks".into()));
        }
        Ok(Self { partition, phi, z })
    }

    pub fn agent_count(&self) -> usize {
        self.z.len()
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn z(&self) -> &[DVector<f64>] {
        &self.z
    }

    /// `sum_i phi[i][l]` per block.
    pub fn mass(&self) -> Vec<f64> {
        (0..self.partition.block_count()).map(|l| self.phi.iter().map(|p| p[l]).sum()).collect()
    }

    /// `sum_i phi_(i,l) z_(i,l)`, assembled as a full vector.
    pub fn weighted_sum(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.partition.dim());
        for (i, z) in self.z.iter().enumerate() {
            for l in 0..self.partition.block_count() {
                for &k in self.partition.indices(l) {
                    out[k] += self.phi[i][l] * z[k];
                }
            }
        }
        out
    }

    /// Plain average `(1/N) sum_i z_i`.
    pub fn average(&self) -> DVector<f64> {
        let n = self.agent_count() as f64;
        self.z.iter().fold(DVector::zeros(self.partition.dim()), |acc, z| acc + z) / n
    }

    pub fn min_phi(&self) -> f64 {
        self.phi.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    fn scaled(&self) -> Vec<DVector<f64>> {
        self.z.iter().zip(&self.phi).map(|(z, phi)| scale_blocks(&self.partition, z, phi)).collect()
    }
}

fn check_vectors(partition: &BlockPartition, z: &[DVector<f64>]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::DimensionError("at least one agent is required".into()));
    }
    if let Some(bad) = z.iter().find(|v| v.len() != partition.dim()) {
        return Err(Error::DimensionError(format!(
            "estimate of length {} does not match dimension {}",
            bad.len(),
            partition.dim()
        )));
    }
    Ok(())
}

/// Multiplies each block of `v` by the matching factor.
pub(crate) fn scale_blocks(partition: &BlockPartition, v: &DVector<f64>, factors: &[f64]) -> DVector<f64> {
    let mut out = v.clone();
    for (l, &f) in factors.iter().enumerate() {
        for &k in partition.indices(l) {
            out[k] *= f;
        }
    }
    out
}

/// Divides each block of `v` by the matching factor.
pub(crate) fn unscale_blocks(partition: &BlockPartition, v: &DVector<f64>, factors: &[f64]) -> DVector<f64> {
    let mut out = v.clone();
    for (l, &f) in factors.iter().enumerate() {
        for &k in partition.indices(l) {
            out[k] /= f;
        }
    }
    out
}

fn check_weights(state: &PushSumState, weights: &[WeightMatrix]) -> Result<()> {
    if weights.len() != state.partition.block_count() || weights.iter().any(|w| w.size() != state.agent_count()) {
        return Err(Error::DimensionError("need one N x N weight matrix per block".into()));
    }
    Ok(())
}

/// Unperturbed block-wise push-sum step.
pub fn pushsum_step(state: &PushSumState, weights: &[WeightMatrix]) -> Result<PushSumState> {
    check_weights(state, weights)?;
    let rows = MixingRows::new(weights);
    let phi = rows.mix_phi(&state.phi)?;
    let mass = rows.mix_vectors(&state.partition, &state.scaled());
    let z = mass.iter().zip(&phi).map(|(m, p)| unscale_blocks(&state.partition, m, p)).collect();
    Ok(PushSumState { partition: state.partition.clone(), phi, z })
}

/// Perturbed step: each sender mixes `z_j + eps_j` instead of `z_j`.
pub fn perturbed_pushsum_step(
    state: &PushSumState,
    weights: &[WeightMatrix],
    eps: &[DVector<f64>],
) -> Result<PushSumState> {
    check_weights(state, weights)?;
    check_vectors(&state.partition, eps)?;
    let rows = MixingRows::new(weights);
    let phi = rows.mix_phi(&state.phi)?;
    let sent: Vec<DVector<f64>> = state
        .z
        .iter()
        .zip(eps)
        .zip(&state.phi)
        .map(|((z, e), p)| scale_blocks(&state.partition, &(z + e), p))
        .collect();
    let mass = rows.mix_vectors(&state.partition, &sent);
    let z = mass.iter().zip(&phi).map(|(m, p)| unscale_blocks(&state.partition, m, p)).collect();
    Ok(PushSumState { partition: state.partition.clone(), phi, z })
}

/// Agent-local buffer holding the most recently acquired block of each signal.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTracker {
    u_hat: DVector<f64>,
}

impl SignalTracker {
    pub fn new(initial: DVector<f64>) -> Self {
        Self { u_hat: initial }
    }

    pub fn u_hat(&self) -> &DVector<f64> {
        &self.u_hat
    }

    /// Copy of the buffer with only `block` refreshed from `signal`.
    pub fn refreshed(&self, partition: &BlockPartition, block: usize, signal: &DVector<f64>) -> Self {
        let mut u_hat = self.u_hat.clone();
        for &k in partition.indices(block) {
            u_hat[k] = signal[k];
        }
        Self { u_hat }
    }
}

/// Block-wise average tracking step.
///
/// Agent `i` refreshes block `selections[i]` of its buffer from `next_signal(i)`
/// (the signal at round `t+1`) and injects the buffer difference:
/// `z'_i = sum_j a_ij (phi_j z_j + u_hat'_j - u_hat_j) / phi'_i`.
pub fn track_average_step(
    state: &PushSumState,
    trackers: &[SignalTracker],
    selections: &[usize],
    weights: &[WeightMatrix],
    next_signal: impl Fn(usize) -> DVector<f64> + Sync,
) -> Result<(PushSumState, Vec<SignalTracker>)> {
    check_weights(state, weights)?;
    if trackers.len() != state.agent_count() || selections.len() != state.agent_count() {
        return Err(Error::DimensionError("one tracker and selection per agent".into()));
    }
    let partition = &state.partition;
    let refreshed: Vec<SignalTracker> = (0..state.agent_count())
        .into_par_iter()
        .map(|i| trackers[i].refreshed(partition, selections[i], &next_signal(i)))
        .collect();
    let rows = MixingRows::new(weights);
    let phi = rows.mix_phi(&state.phi)?;
    let sent: Vec<DVector<f64>> =
        state.scaled().into_iter().enumerate().map(|(i, m)| m + (&refreshed[i].u_hat - &trackers[i].u_hat)).collect();
    let mass = rows.mix_vectors(partition, &sent);
    let z = mass.iter().zip(&phi).map(|(m, p)| unscale_blocks(partition, m, p)).collect();
    Ok((PushSumState { partition: partition.clone(), phi, z }, refreshed))
}

/// Per-agent `sum_l || z_(i,l) - (1/N) sum_j z_(j,l) ||_1`.
pub fn consensus_error(state: &PushSumState) -> Vec<f64> {
    let avg = state.average();
    state.z.iter().map(|z| (z - &avg).lp_norm(1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{base_weights, Digraph};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn non_selecting_columns_become_basis_vectors() {
        let base = base_weights(&Digraph::complete(3).unwrap());
        let a = block_weights(&base, &[0, 1, 0], 0);
        assert_eq!(a.column(0), base.column(0));
        assert_eq!(a.column(1), vec![0.0, 1.0, 0.0]);
        assert_eq!(a.column(2), base.column(2));
        assert!(a.stochasticity_error() <= 1e-15);
    }

    #[test]
    fn two_agent_hand_example() {
        let part = BlockPartition::contiguous(1, 1).unwrap();
        let s = PushSumState::new(part, vec![dv(&[0.0]), dv(&[2.0])]).unwrap();
        let base = base_weights(&Digraph::complete(2).unwrap());
        let w = round_weights(&base, &[0, 0], 1);
        let next = pushsum_step(&s, &w).unwrap();
        assert_eq!(next.phi(), &[vec![1.0], vec![1.0]]);
        assert_eq!(next.z()[0][0], 1.0);
        assert_eq!(next.z()[1][0], 1.0);
    }

    #[test]
    fn identity_weights_leave_state_unchanged() {
        let part = BlockPartition::contiguous(4, 2).unwrap();
        let s = PushSumState::new(part, vec![dv(&[1.0, 2.0, 3.0, 4.0]), dv(&[-1.0, 0.5, 7.0, 2.0])]).unwrap();
        let w = vec![WeightMatrix::identity(2), WeightMatrix::identity(2)];
        assert_eq!(pushsum_step(&s, &w).unwrap(), s);
    }

    #[test]
    fn zero_perturbation_matches_plain_step() {
        let part = BlockPartition::contiguous(2, 2).unwrap();
        let s = PushSumState::new(part, vec![dv(&[1.0, -2.0]), dv(&[3.0, 0.25]), dv(&[0.1, 9.0])]).unwrap();
        let base = base_weights(&Digraph::cycle(3).unwrap());
        let w = round_weights(&base, &[0, 1, 0], 2);
        let zero = vec![DVector::zeros(2); 3];
        assert_eq!(perturbed_pushsum_step(&s, &w, &zero).unwrap(), pushsum_step(&s, &w).unwrap());
    }

    #[test]
    fn consensus_error_examples() {
        let part = BlockPartition::contiguous(1, 1).unwrap();
        let s = PushSumState::new(part.clone(), vec![dv(&[0.0]), dv(&[2.0])]).unwrap();
        assert_eq!(consensus_error(&s), vec![1.0, 1.0]);
        let s = PushSumState::new(part, vec![dv(&[3.0]), dv(&[3.0])]).unwrap();
        assert_eq!(consensus_error(&s), vec![0.0, 0.0]);
    }

    #[test]
    fn single_agent_tracks_its_buffer() {
        let part = BlockPartition::contiguous(2, 2).unwrap();
        let u = |t: usize| dv(&[t as f64, (t * t) as f64]);
        let mut s = PushSumState::new(part.clone(), vec![u(0)]).unwrap();
        let mut tr = vec![SignalTracker::new(u(0))];
        let base = WeightMatrix::identity(1);
        for t in 0..6 {
            let sel = vec![t % 2];
            let w = round_weights(&base, &sel, 2);
            let (ns, ntr) = track_average_step(&s, &tr, &sel, &w, |_| u(t + 1)).unwrap();
            s = ns;
            tr = ntr;
            assert!((&s.z()[0] - tr[0].u_hat()).amax() < 1e-12);
        }
    }

    #[test]
    fn degenerate_weight_detected() {
        let part = BlockPartition::contiguous(1, 1).unwrap();
        let s = PushSumState::from_parts(part, vec![vec![0.0], vec![0.0]], vec![dv(&[1.0]), dv(&[1.0])]).unwrap();
        let w = vec![WeightMatrix::identity(2)];
        assert!(matches!(pushsum_step(&s, &w), Err(Error::DegenerateWeight { .. })));
    }
}
