//! On-disk instance container, format version 1.
//!
//! A directory holding:
//!
//! - `manifest.json`: `{"format": "bsonata-instance", "version": 1, "agents", "dim",
//!   "rows": [n_i...], "lambda", "theta", "box": [k_lower|null, k_upper|null],
//!   "partition": [[indices...]...]}`. A `null` bound means unbounded.
//! - `agent_<i>.csv` for `i = 0..agents` (zero-padded to 3 digits): `n_i` lines,
//!   each `b_r,D_r1,...,D_rm` in shortest round-trip scientific notation.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AgentData, ProblemInstance};
use crate::error::{Error, Result};
use crate::partition::BlockPartition;

pub const INSTANCE_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "bsonata-instance";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    agents: usize,
    dim: usize,
    rows: Vec<usize>,
    lambda: f64,
    theta: f64,
    #[serde(rename = "box")]
    bounds: [Option<f64>; 2],
    partition: Vec<Vec<usize>>,
}

fn agent_file(i: usize) -> String {
    format!("agent_{i:03}.csv")
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn save_instance(problem: &ProblemInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (lo, hi) = problem.bounds();
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: INSTANCE_FORMAT_VERSION,
        agents: problem.agent_count(),
        dim: problem.dim(),
        rows: (0..problem.agent_count()).map(|i| problem.agent(i).b.len()).collect(),
        lambda: problem.lambda(),
        theta: problem.theta(),
        bounds: [finite_or_none(lo), finite_or_none(hi)],
        partition: problem.partition().blocks().to_vec(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidArgument(format!("manifest encoding: {e}")))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;

    for i in 0..problem.agent_count() {
        let a = problem.agent(i);
        let mut out = String::new();
        for r in 0..a.b.len() {
            out.push_str(&format!("{:e}", a.b[r]));
            for k in 0..a.d.ncols() {
                out.push_str(&format!(",{:e}", a.d[(r, k)]));
            }
            out.push('\n');
        }
        fs::write(dir.join(agent_file(i)), out)?;
    }
    Ok(())
}

pub fn load_instance(dir: &Path) -> Result<ProblemInstance> {
    let manifest_path = dir.join("manifest.json");
    let parse_err = |path: &Path, msg: String| Error::Parse { path: path.to_path_buf(), msg };
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| parse_err(&manifest_path, e.to_string()))?;
    if manifest.format != FORMAT_TAG || manifest.version != INSTANCE_FORMAT_VERSION {
        return Err(parse_err(&manifest_path, format!("unsupported format {} v{}", manifest.format, manifest.version)));
    }
    if manifest.rows.len() != manifest.agents {
        return Err(parse_err(&manifest_path, "rows list does not match agent count".into()));
    }
    let partition = BlockPartition::new(manifest.dim, manifest.partition)?;

    let mut agents = Vec::with_capacity(manifest.agents);
    for (i, &rows) in manifest.rows.iter().enumerate() {
        let path = dir.join(agent_file(i));
        let text = fs::read_to_string(&path)?;
        let mut b = DVector::zeros(rows);
        let mut d = DMatrix::zeros(rows, manifest.dim);
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        if lines.len() != rows {
            return Err(parse_err(&path, format!("expected {rows} rows, found {}", lines.len())));
        }
        for (r, line) in lines.iter().enumerate() {
            let values: Vec<f64> = line
                .split(',')
                .map(|tok| tok.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(&path, format!("row {r}: {e}")))?;
            if values.len() != manifest.dim + 1 {
                return Err(parse_err(&path, format!("row {r} has {} fields", values.len())));
            }
            b[r] = values[0];
            for k in 0..manifest.dim {
                d[(r, k)] = values[k + 1];
            }
        }
        agents.push(AgentData { d, b });
    }
    let [lo, hi] = manifest.bounds;
    ProblemInstance::new(
        partition,
        agents,
        lo.unwrap_or(f64::NEG_INFINITY),
        hi.unwrap_or(f64::INFINITY),
        manifest.lambda,
        manifest.theta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_sparse_regression, SparseRegressionSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let spec = SparseRegressionSpec {
            agents: 3,
            dim: 8,
            rows_per_agent: 5,
            sparsity_frac: 0.5,
            noise_var: 0.5,
            lambda: 0.15,
            theta: 7.0,
            k_lower: f64::NEG_INFINITY,
            k_upper: 10.0,
        };
        let (p, _) = make_sparse_regression(
            &spec,
            BlockPartition::new(8, vec![vec![0, 5, 6], vec![1, 2], vec![3, 4, 7]]).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(1),
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_instance(&p, dir.path()).unwrap();
        assert_eq!(load_instance(dir.path()).unwrap(), p);
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("manifest.json"),
            r#"{"format":"bsonata-instance","version":9,"agents":0,"dim":1,"rows":[],"lambda":0,"theta":1,"box":[null,null],"partition":[[0]]}"#,
        )
        .unwrap();
        assert!(matches!(load_instance(dir.path()), Err(Error::Parse { .. })));
    }
}
