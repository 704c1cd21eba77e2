use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::SystemConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    SnrSweep,
    Convergence,
    Runtime,
    PilotSweep,
    Custom,
}

impl FigureId {
    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::SnrSweep => "snr_sweep",
            FigureId::Convergence => "convergence",
            FigureId::Runtime => "runtime",
            FigureId::PilotSweep => "pilot_sweep",
            FigureId::Custom => "custom",
        }
    }
}

/// Declaration order is the row order within a slot in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// BALS from scratch at every recorded slot.
    BalsPerSlot,
    /// RLS tracking from a random `G`, never re-initialized.
    RlsRandomInit,
    /// BALS at the first slot of each `G` period, RLS tracking in between.
    BalsRls,
    /// GAMP recovery of `H` from the `bals_rls` estimate of `Z`.
    Gamp,
    /// Orthogonal-pilot LS recovery of `H` from the same estimate.
    LsOrthogonal,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::BalsPerSlot => "bals_per_slot",
            Algorithm::RlsRandomInit => "rls_random_init",
            Algorithm::BalsRls => "bals_rls",
            Algorithm::Gamp => "gamp",
            Algorithm::LsOrthogonal => "ls_orthogonal",
        }
    }

    pub(crate) fn index(self) -> u64 {
        self as u64
    }
}

/// One swept `SystemConfig` field. Accepts `{"name": .., "values": [..]}` or
/// the pair form `["name", [..]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "AxisRepr")]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AxisRepr {
    Named { name: String, values: Vec<f64> },
    Pair(String, Vec<f64>),
}

impl From<AxisRepr> for SweepAxis {
    fn from(r: AxisRepr) -> Self {
        match r {
            AxisRepr::Named { name, values } | AxisRepr::Pair(name, values) => SweepAxis { name, values },
        }
    }
}

/// Fields a sweep may vary.
const SWEEPABLE: &[&str] = &[
    "n_rx",
    "n_ris",
    "n_users",
    "pilot_len",
    "n_profiles",
    "n_slots",
    "snr_db",
    "forgetting",
    "n_paths_g",
    "n_paths_user",
];

/// A Monte-Carlo study. The last three fields are optional in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub figure_id: FigureId,
    pub base: SystemConfig,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    /// Pair the axes element-wise instead of taking their Cartesian product.
    /// All axes must then have the same length.
    #[serde(default)]
    pub zip: bool,
    pub n_monte_carlo: usize,
    pub algorithms: Vec<Algorithm>,
    /// Slots simulated per run. Defaults to one `G` period (`base.n_slots`).
    #[serde(default)]
    pub total_slots: Option<usize>,
    /// Slots that produce records. Defaults to every slot.
    #[serde(default)]
    pub record_slots: Option<Vec<usize>>,
    /// Measure wall time. Timings are the only non-reproducible output, so
    /// byte-identical reruns need this off.
    #[serde(default = "yes")]
    pub record_runtime: bool,
}

fn yes() -> bool {
    true
}

/// One point of the sweep grid with its resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub config: SystemConfig,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn total_slots_for(&self, cfg: &SystemConfig) -> usize {
        self.total_slots.unwrap_or(cfg.n_slots)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_monte_carlo == 0 {
            return Err(Error::Config("n_monte_carlo must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        let unique: BTreeSet<_> = self.algorithms.iter().collect();
        if unique.len() != self.algorithms.len() {
            return Err(Error::Config("algorithms must not repeat".into()));
        }
        if self.total_slots == Some(0) {
            return Err(Error::Config("total_slots must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for axis in &self.sweep {
            if !SWEEPABLE.contains(&axis.name.as_str()) {
                return Err(Error::Config(format!(
                    "sweep parameter '{}' is not a SystemConfig field (expected one of {})",
                    axis.name,
                    SWEEPABLE.join(", ")
                )));
            }
            if !names.insert(axis.name.as_str()) {
                return Err(Error::Config(format!("sweep parameter '{}' appears twice", axis.name)));
            }
            if axis.values.is_empty() {
                return Err(Error::Config(format!("sweep parameter '{}' has no values", axis.name)));
            }
            if self.zip && axis.values.len() != self.sweep[0].values.len() {
                return Err(Error::Config(format!(
                    "zipped sweep axes differ in length ('{}' has {}, '{}' has {})",
                    self.sweep[0].name,
                    self.sweep[0].values.len(),
                    axis.name,
                    axis.values.len()
                )));
            }
        }
        for point in self.points()? {
            let total = self.total_slots_for(&point.config);
            if let Some(slots) = &self.record_slots {
                if let Some(bad) = slots.iter().find(|&&s| s == 0 || s > total) {
                    return Err(Error::Config(format!("record slot {bad} outside 1..={total}")));
                }
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, first axis slowest, or their
    /// element-wise pairing when `zip` is set. A spec without axes has a
    /// single point at the base configuration.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let mut combos: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        if self.zip && !self.sweep.is_empty() {
            let n = self.sweep.iter().map(|a| a.values.len()).min().unwrap_or(0);
            combos = (0..n)
                .map(|i| self.sweep.iter().map(|a| (a.name.clone(), a.values[i])).collect())
                .collect();
        }
        for axis in self.sweep.iter().filter(|_| !self.zip) {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.name.clone(), v));
                        p
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .enumerate()
            .map(|(index, params)| {
                let config = apply(&self.base, &params)?;
                Ok(SweepPoint { index, params, config })
            })
            .collect()
    }
}

/// Overwrite config fields through their JSON names, then re-validate.
fn apply(base: &SystemConfig, params: &[(String, f64)]) -> Result<SystemConfig> {
    let mut value = serde_json::to_value(base).map_err(|e| Error::Config(e.to_string()))?;
    let obj = value.as_object_mut().expect("SystemConfig serializes to an object");
    for (name, v) in params {
        let number = if v.fract() == 0.0 && *v >= 0.0 && *v < u64::MAX as f64 {
            serde_json::Value::from(*v as u64)
        } else {
            serde_json::Value::from(*v)
        };
        match name.as_str() {
            // One value for every user.
            "n_paths_user" => {
                let m = obj["n_paths_user"].as_array().map_or(0, |a| a.len());
                obj.insert(name.clone(), serde_json::Value::Array(vec![number; m]));
            }
            "n_users" => {
                // Keep the per-user path list in step with the user count.
                let first = obj["n_paths_user"].as_array().and_then(|a| a.first().cloned());
                let m = number.as_u64().unwrap_or(0) as usize;
                if let Some(first) = first {
                    obj.insert("n_paths_user".into(), serde_json::Value::Array(vec![first; m]));
                }
                obj.insert(name.clone(), number);
            }
            _ => {
                obj.insert(name.clone(), number);
            }
        }
    }
    let cfg: SystemConfig = serde_json::from_value(value).map_err(|e| {
        let desc: Vec<String> = params.iter().map(|(n, v)| format!("{n}={v}")).collect();
        Error::Config(format!("sweep point {} is not a valid configuration: {e}", desc.join(", ")))
    })?;
    cfg.validate()?;
    Ok(cfg)
}
