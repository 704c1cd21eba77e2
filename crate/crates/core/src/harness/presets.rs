use super::spec::{Algorithm, ExperimentSpec, FigureId, SweepAxis};
use crate::channel::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Snr,
    Convergence,
    Runtime,
    Pilots,
}

impl std::str::FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "snr" => Ok(Figure::Snr),
            "convergence" => Ok(Figure::Convergence),
            "runtime" => Ok(Figure::Runtime),
            "pilots" => Ok(Figure::Pilots),
            other => Err(format!("unknown figure '{other}' (expected snr, convergence, runtime or pilots)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Minutes on one core.
    Desk,
    /// The full study: 100 runs and the largest surface sizes.
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("unknown scale '{other}' (expected desk or paper)")),
        }
    }
}

fn axis(name: &str, values: &[f64]) -> Vec<SweepAxis> {
    vec![SweepAxis {
        name: name.into(),
        values: values.to_vec(),
    }]
}

/// Hard case of the desk convergence study: a surface with four times more
/// elements than phase profiles, standing in for `K = 256` at full scale.
pub const DESK_HARD_K: usize = 32;
pub const DESK_HARD_L: usize = 8;

pub fn preset(figure: Figure, scale: Scale) -> ExperimentSpec {
    let base = SystemConfig::reference();
    let runs = match scale {
        Scale::Desk => 20,
        Scale::Paper => 100,
    };
    match figure {
        Figure::Snr => ExperimentSpec {
            figure_id: FigureId::SnrSweep,
            base,
            sweep: axis("snr_db", &[0.0, 10.0, 20.0, 30.0]),
            zip: false,
            n_monte_carlo: runs,
            algorithms: vec![Algorithm::BalsPerSlot, Algorithm::RlsRandomInit, Algorithm::BalsRls],
            total_slots: Some(50),
            record_slots: Some(vec![3, 50]),
            record_runtime: true,
        },
        Figure::Convergence => {
            // The last point is the hard case for random initialization.
            let (ks, ls): (&[f64], &[f64]) = match scale {
                Scale::Desk => (&[16.0, 64.0, DESK_HARD_K as f64], &[64.0, 64.0, DESK_HARD_L as f64]),
                Scale::Paper => (&[16.0, 64.0, 256.0], &[64.0, 64.0, 64.0]),
            };
            ExperimentSpec {
                figure_id: FigureId::Convergence,
                base: SystemConfig { snr_db: 10.0, ..base },
                sweep: vec![
                    SweepAxis {
                        name: "n_ris".into(),
                        values: ks.to_vec(),
                    },
                    SweepAxis {
                        name: "n_profiles".into(),
                        values: ls.to_vec(),
                    },
                ],
                zip: true,
                n_monte_carlo: match scale {
                    Scale::Desk => 10,
                    Scale::Paper => 100,
                },
                algorithms: vec![Algorithm::RlsRandomInit, Algorithm::BalsRls],
                // G is redrawn at slot 101.
                total_slots: Some(200),
                record_slots: None,
                record_runtime: true,
            }
        }
        Figure::Runtime => {
            let ks: &[f64] = match scale {
                Scale::Desk => &[16.0, 32.0, 64.0],
                Scale::Paper => &[16.0, 32.0, 64.0, 128.0, 256.0],
            };
            ExperimentSpec {
                figure_id: FigureId::Runtime,
                base: SystemConfig { n_profiles: 64, ..base },
                sweep: axis("n_ris", ks),
                zip: false,
                n_monte_carlo: match scale {
                    Scale::Desk => 3,
                    Scale::Paper => 20,
                },
                algorithms: vec![Algorithm::BalsPerSlot, Algorithm::RlsRandomInit, Algorithm::BalsRls],
                total_slots: Some(10),
                record_slots: None,
                record_runtime: true,
            }
        }
        Figure::Pilots => ExperimentSpec {
            figure_id: FigureId::PilotSweep,
            base: SystemConfig { snr_db: 0.0, ..base },
            sweep: axis("pilot_len", &[5.0, 10.0, 15.0, 20.0]),
            zip: false,
            n_monte_carlo: runs,
            algorithms: vec![Algorithm::Gamp, Algorithm::LsOrthogonal],
            total_slots: Some(1),
            record_slots: None,
            record_runtime: true,
        },
    }
}
