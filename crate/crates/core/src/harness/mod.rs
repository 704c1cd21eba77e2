//! Monte-Carlo driver: channel synthesis, estimation, tracking and recovery
//! per run and sweep point, with NMSE and timing written as CSV rows.

mod output;
mod presets;
mod run;
mod spec;

use std::collections::BTreeMap;

pub use output::{write_csv, write_records, CSV_HEADER};
pub use presets::{preset, Figure, Scale, DESK_HARD_K, DESK_HARD_L};
pub use run::{run_experiment, run_experiment_with, Execution, ExperimentRecord};
pub use spec::{Algorithm, ExperimentSpec, FigureId, SweepAxis, SweepPoint};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm_sq, ComplexMatrix};

/// `||est - truth||_F^2 / ||truth||_F^2` for one realization.
pub fn nmse(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::invalid(format!(
            "nmse: estimate is {:?}, truth is {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = frobenius_norm_sq(truth);
    if denom == 0.0 {
        return Err(Error::invalid("nmse: truth is zero"));
    }
    Ok(frobenius_norm_sq(&(estimate - truth)) / denom)
}

/// Decibels, with exact zero floored at -3000 dB instead of -inf.
pub fn nmse_db(nmse: f64) -> f64 {
    10.0 * nmse.max(1e-300).log10()
}

/// Aggregate over Monte-Carlo runs of one (algorithm, sweep point, slot).
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub params: Vec<(String, f64)>,
    pub slot: usize,
    /// `10 log10` of the mean linear NMSE.
    pub mean_db: f64,
    pub median_db: f64,
    pub runs: usize,
    pub diverged: usize,
}

impl Summary {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Which metric to aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Composite,
    UserChannel,
}

/// Average NMSE in the linear domain over runs, grouped by algorithm, sweep
/// point and slot. Diverged rows are counted but not averaged.
pub fn summarize(records: &[ExperimentRecord], metric: Metric) -> Vec<Summary> {
    let mut groups: BTreeMap<(Algorithm, usize, usize), (Vec<(String, f64)>, Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.algorithm, r.point_index, r.slot))
            .or_insert_with(|| (r.params.clone(), Vec::new(), 0));
        let value = match metric {
            Metric::Composite => r.nmse_gz_db,
            Metric::UserChannel => r.nmse_h_db,
        };
        match value {
            Some(db) if !r.diverged => entry.1.push(db),
            _ if r.diverged => entry.2 += 1,
            _ => {}
        }
    }
    groups
        .into_iter()
        .filter(|(_, (_, v, d))| !v.is_empty() || *d > 0)
        .map(|((algorithm, _, slot), (params, mut dbs, diverged))| {
            let mean_lin = dbs.iter().map(|db| 10f64.powf(db / 10.0)).sum::<f64>() / dbs.len().max(1) as f64;
            dbs.sort_by(f64::total_cmp);
            let median_db = match dbs.len() {
                0 => f64::NAN,
                n if n % 2 == 1 => dbs[n / 2],
                n => nmse_db((10f64.powf(dbs[n / 2 - 1] / 10.0) + 10f64.powf(dbs[n / 2] / 10.0)) / 2.0),
            };
            Summary {
                algorithm,
                params,
                slot,
                mean_db: if dbs.is_empty() { f64::NAN } else { nmse_db(mean_lin) },
                median_db,
                runs: dbs.len(),
                diverged,
            }
        })
        .collect()
}
