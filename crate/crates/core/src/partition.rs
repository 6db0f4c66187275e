use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of the coordinates `0..dim` into `B` disjoint index sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    dim: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    /// Validates disjointness and coverage of `0..dim`.
    pub fn new(dim: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::DimensionError("partition needs at least one block".into()));
        }
        let mut seen = vec![false; dim];
        for (l, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::DimensionError(format!("block {l} is empty")));
            }
            for &k in block {
                if k >= dim {
                    return Err(Error::DimensionError(format!("block {l} holds index {k} outside 0..{dim}")));
                }
                if seen[k] {
                    return Err(Error::DimensionError(format!("index {k} appears twice")));
                }
                seen[k] = true;
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::DimensionError(format!("index {k} is not covered")));
        }
        Ok(Self { dim, blocks })
    }

    /// Contiguous equal chunks; `dim` must be divisible by `count`.
    pub fn contiguous(dim: usize, count: usize) -> Result<Self> {
        if count == 0 || !dim.is_multiple_of(count) {
            return Err(Error::DimensionError(format!("{dim} coordinates cannot be split into {count} equal blocks")));
        }
        let size = dim / count;
        let blocks = (0..count).map(|l| (l * size..(l + 1) * size).collect()).collect();
        Self::new(dim, blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn indices(&self, block: usize) -> &[usize] {
        &self.blocks[block]
    }

    pub fn block_len(&self, block: usize) -> usize {
        self.blocks[block].len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Block index owning each coordinate.
    pub fn owner_map(&self) -> Vec<usize> {
        let mut owner = vec![0; self.dim];
        for (l, block) in self.blocks.iter().enumerate() {
            for &k in block {
                owner[k] = l;
            }
        }
        owner
    }
}
