//! CSV persistence. Floats use Rust's shortest round-trip formatting, so
//! parsing a written file recovers every value exactly. Lines end in LF.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SweepRow;
use crate::error::{Error, Result};
use crate::sonata::MetricsRecord;

pub const METRICS_HEADER: &str = "t,message_exchanges,J,D,R,tracking_residual,V,gamma,delta_sum";

pub fn metrics_csv_string(trace: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in trace {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.t, r.message_exchanges, r.j, r.d, r.r, r.tracking_residual, r.v, r.gamma, r.delta_sum
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_metrics_csv(trace: &[MetricsRecord], path: &Path) -> Result<()> {
    fs::write(path, metrics_csv_string(trace))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    let err = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(err("missing or unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(err(format!("line {}: expected 9 fields", n + 2)));
            }
            let t = fields[0].parse().map_err(|e| err(format!("line {}: {e}", n + 2)))?;
            let mut v = [0.0; 8];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|e| err(format!("line {}: {e}", n + 2)))?;
            }
            Ok(MetricsRecord {
                t,
                message_exchanges: v[0],
                j: v[1],
                d: v[2],
                r: v[3],
                tracking_residual: v[4],
                v: v[5],
                gamma: v[6],
                delta_sum: v[7],
            })
        })
        .collect()
}

/// `B,t_end,t_end_over_B`; unreached rows write `inf` in both columns.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::from("B,t_end,t_end_over_B\n");
    for r in rows {
        let t_end = r.t_end.map_or("inf".to_string(), |t| t.to_string());
        writeln!(out, "{},{},{:?}", r.blocks, t_end, r.normalized()).expect("writing to a String cannot fail");
    }
    fs::write(path, out)?;
    Ok(())
}
