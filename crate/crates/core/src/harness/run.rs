use std::collections::BTreeSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{Algorithm, ExperimentSpec, FigureId, SweepPoint};
use super::{nmse, nmse_db};
use crate::bals::{bals, resolve_scaling, BalsOptions};
use crate::channel::{
    add_noise, gen_phase_profiles, gen_pilots, noise_var_for_power, noiseless_slot, ChannelProcess, ChannelRealization,
    PhaseProfileMatrix, PilotMatrix, SystemConfig,
};
use crate::error::{Error, Result};
use crate::gamp::{ls_orthogonal_baseline, recover_h, GampOptions};
use crate::linalg::ComplexMatrix;
use crate::tensor::SlotTensor;
use crate::tracker::TrackerState;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub figure_id: FigureId,
    pub run_index: usize,
    pub slot: usize,
    pub algorithm: Algorithm,
    /// Swept parameter values of this point, in axis order.
    pub params: Vec<(String, f64)>,
    pub nmse_gz_db: Option<f64>,
    pub nmse_h_db: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub seed: u64,
    pub diverged: bool,
    /// Position of the sweep point in the grid, for ordering only.
    pub point_index: usize,
}

impl ExperimentRecord {
    /// Value of one swept parameter.
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn sort_key(&self) -> (usize, usize, usize, Algorithm) {
        (self.point_index, self.run_index, self.slot, self.algorithm)
    }
}

/// How Monte-Carlo runs are scheduled. Results do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Fan out over a rayon pool; `None` uses the global pool. Without the
    /// `parallel` feature this runs sequentially.
    Parallel { jobs: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { jobs: None }
        } else {
            Execution::Sequential
        }
    }
}

/// RNG stream purposes. Streams depend on (seed, run, purpose) only, so every
/// sweep point of a run sees the same channel and noise draws.
const STREAM_CHANNEL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ALGO: u64 = 16;

fn stream(seed: u64, purpose: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | run as u64);
    rng
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    run_experiment_with(spec, Execution::default())
}

pub fn run_experiment_with(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let points = spec.points()?;
    let tasks: Vec<(&SweepPoint, usize)> = points
        .iter()
        .flat_map(|p| (0..spec.n_monte_carlo).map(move |r| (p, r)))
        .collect();
    let per_task = execute(&tasks, exec, |&(point, run)| run_task(spec, point, run))?;
    let mut records: Vec<ExperimentRecord> = per_task.into_iter().flatten().collect();
    records.sort_by_key(ExperimentRecord::sort_key);
    Ok(records)
}

fn execute<T, F>(tasks: &[T], exec: Execution, f: F) -> Result<Vec<Vec<ExperimentRecord>>>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec<ExperimentRecord>> + Sync + Send,
{
    match exec {
        Execution::Sequential => tasks.iter().map(&f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { jobs } => {
            use rayon::prelude::*;
            let go = || tasks.par_iter().map(&f).collect::<Result<Vec<_>>>();
            match jobs {
                None => go(),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("cannot build a pool of {n} threads: {e}")))?
                    .install(go),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => {
            log::debug!("built without the parallel feature; running sequentially");
            tasks.iter().map(&f).collect()
        }
    }
}

/// Everything one run needs that does not change across its slots.
struct RunContext<'a> {
    spec: &'a ExperimentSpec,
    cfg: &'a SystemConfig,
    point: &'a SweepPoint,
    run: usize,
    seed: u64,
    phi: PhaseProfileMatrix,
    x: PilotMatrix,
    gamp: GampOptions,
}

impl RunContext<'_> {
    fn wants(&self, alg: Algorithm) -> bool {
        self.spec.algorithms.contains(&alg)
    }

    fn record(&self, slot: usize, alg: Algorithm, outcome: Outcome) -> ExperimentRecord {
        let gz = outcome.nmse_gz.map(nmse_db).filter(|v| v.is_finite());
        let h = outcome.nmse_h.map(nmse_db).filter(|v| v.is_finite());
        let diverged = outcome.failed
            || outcome.nmse_gz.is_some() && gz.is_none()
            || outcome.nmse_h.is_some() && h.is_none();
        ExperimentRecord {
            figure_id: self.spec.figure_id,
            run_index: self.run,
            slot,
            algorithm: alg,
            params: self.point.params.clone(),
            nmse_gz_db: if diverged { None } else { gz },
            nmse_h_db: if diverged { None } else { h },
            runtime_ms: if self.spec.record_runtime { outcome.runtime_ms } else { None },
            seed: self.seed,
            diverged,
            point_index: self.point.index,
        }
    }
}

#[derive(Default)]
struct Outcome {
    nmse_gz: Option<f64>,
    nmse_h: Option<f64>,
    runtime_ms: Option<f64>,
    failed: bool,
}

impl Outcome {
    fn failed(runtime_ms: Option<f64>) -> Self {
        Outcome {
            failed: true,
            runtime_ms,
            ..Outcome::default()
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

fn run_task(spec: &ExperimentSpec, point: &SweepPoint, run: usize) -> Result<Vec<ExperimentRecord>> {
    let cfg = &point.config;
    let seed = spec.base.rng_seed;
    let ctx = RunContext {
        spec,
        cfg,
        point,
        run,
        seed,
        phi: gen_phase_profiles(cfg),
        x: gen_pilots(cfg),
        gamp: GampOptions::for_config(cfg),
    };
    let total = spec.total_slots_for(cfg);
    let recorded: BTreeSet<usize> = match &spec.record_slots {
        Some(s) => s.iter().copied().collect(),
        None => (1..=total).collect(),
    };

    let mut process = ChannelProcess::new(cfg.clone(), stream(seed, STREAM_CHANNEL, run));
    let mut noise_rng = stream(seed, STREAM_NOISE, run);
    let algo_rng = |alg: Algorithm| stream(seed, STREAM_ALGO + alg.index(), run);
    let mut rng_bals = algo_rng(Algorithm::BalsPerSlot);
    let mut rng_rls = algo_rng(Algorithm::RlsRandomInit);
    let mut rng_bals_rls = algo_rng(Algorithm::BalsRls);

    let needs_tracked_z = ctx.wants(Algorithm::BalsRls) || ctx.wants(Algorithm::Gamp) || ctx.wants(Algorithm::LsOrthogonal);
    let mut bals_rls: Option<TrackerState> = None;
    let mut rls: Option<TrackerState> = None;
    let mut out = Vec::new();

    for slot in 1..=total {
        let chan = process.next_slot();
        let clean = noiseless_slot(&chan, &ctx.x, &ctx.phi)?;
        let noise_var = noise_var_for_power(clean.mean_power(), cfg.snr_db)?;
        let mut y = clean;
        add_noise(&mut y, noise_var, &mut noise_rng);
        let truth = &chan.g * chan.z(&ctx.x);
        let rec = recorded.contains(&slot);

        if ctx.wants(Algorithm::BalsPerSlot) && rec {
            let (res, ms) = timed(|| bals(&y, &ctx.phi, &BalsOptions::default(), &mut rng_bals));
            let outcome = match res {
                Ok(est) => Outcome {
                    nmse_gz: Some(nmse(&est.composite(), &truth)?),
                    runtime_ms: Some(ms),
                    ..Outcome::default()
                },
                Err(e) => failure(&e, Some(ms))?,
            };
            out.push(ctx.record(slot, Algorithm::BalsPerSlot, outcome));
        }

        if ctx.wants(Algorithm::RlsRandomInit) {
            let (res, ms) = timed(|| -> Result<ComplexMatrix> {
                if slot == 1 {
                    let (state, z1) = TrackerState::random_start(&y, &ctx.phi, cfg.forgetting, &mut rng_rls)?;
                    let gz = state.composite(&z1);
                    rls = Some(state);
                    Ok(gz)
                } else {
                    let state = rls.as_mut().ok_or_else(|| Error::numeric("tracker lost after an earlier failure"))?;
                    let z = state.track_recursive(&y)?;
                    Ok(state.composite(&z))
                }
            });
            let outcome = match res {
                Ok(gz) => Outcome {
                    nmse_gz: Some(nmse(&gz, &truth)?),
                    runtime_ms: Some(ms),
                    ..Outcome::default()
                },
                Err(e) => {
                    // No re-initialization: later slots report diverged too.
                    rls = None;
                    failure(&e, Some(ms))?
                }
            };
            if rec {
                out.push(ctx.record(slot, Algorithm::RlsRandomInit, outcome));
            }
        }

        if needs_tracked_z {
            let period_start = ChannelProcess::<ChaCha8Rng>::is_period_start(slot, cfg.n_slots);
            let (res, ms) = timed(|| step_bals_rls(&mut bals_rls, &y, &ctx, slot, period_start, &mut rng_bals_rls));
            let factors = match res {
                Ok(f) => Ok(f),
                Err(e) => {
                    bals_rls = None;
                    Err(failure(&e, Some(ms))?)
                }
            };
            if rec {
                emit_bals_rls(&ctx, slot, &chan, &truth, factors, ms, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// Per-run algorithm failures become diverged rows; anything else aborts.
fn failure(e: &Error, runtime_ms: Option<f64>) -> Result<Outcome> {
    match e {
        Error::NumericFailure(_) | Error::Divergence { .. } | Error::AmbiguityUnresolvable { .. } => {
            log::debug!("diverged: {e}");
            Ok(Outcome::failed(runtime_ms))
        }
        other => Err(Error::numeric(format!("unexpected failure inside a run: {other}"))),
    }
}

/// Returns `(G_hat, Z_hat)` for this slot, re-running BALS at period starts.
fn step_bals_rls(
    state: &mut Option<TrackerState>,
    y: &SlotTensor,
    ctx: &RunContext<'_>,
    slot: usize,
    period_start: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    match state {
        Some(st) if !period_start => {
            let z = st.track_recursive(y)?;
            Ok((st.g_estimate(), z))
        }
        _ => {
            let est = bals(y, &ctx.phi, &BalsOptions::default(), rng)?;
            // The period ends where the next G draw begins.
            let left = ctx.cfg.n_slots - (slot - 1) % ctx.cfg.n_slots;
            *state = Some(TrackerState::init(&est.g_hat, &est.z_hat, &ctx.phi, ctx.cfg.forgetting)?.with_period(slot, left));
            Ok((est.g_hat, est.z_hat))
        }
    }
}

fn emit_bals_rls(
    ctx: &RunContext<'_>,
    slot: usize,
    chan: &ChannelRealization,
    truth: &ComplexMatrix,
    factors: std::result::Result<(ComplexMatrix, ComplexMatrix), Outcome>,
    ms: f64,
    out: &mut Vec<ExperimentRecord>,
) -> Result<()> {
    let (g_hat, z_hat) = match factors {
        Ok(f) => f,
        Err(failed) => {
            for alg in [Algorithm::BalsRls, Algorithm::Gamp, Algorithm::LsOrthogonal] {
                if ctx.wants(alg) && (alg != Algorithm::LsOrthogonal || ls_applicable(ctx)) {
                    out.push(ctx.record(slot, alg, Outcome::failed(failed.runtime_ms)));
                }
            }
            return Ok(());
        }
    };
    let nmse_gz = nmse(&(&g_hat * &z_hat), truth)?;
    if ctx.wants(Algorithm::BalsRls) {
        out.push(ctx.record(
            slot,
            Algorithm::BalsRls,
            Outcome {
                nmse_gz: Some(nmse_gz),
                runtime_ms: Some(ms),
                ..Outcome::default()
            },
        ));
    }
    if !(ctx.wants(Algorithm::Gamp) || ctx.wants(Algorithm::LsOrthogonal)) {
        return Ok(());
    }
    // Genie removal of the diagonal ambiguity so Z_hat is comparable to H X.
    let z_fixed = match resolve_scaling(&g_hat, &z_hat, Some(&chan.g)) {
        Ok((_, z)) => Some(z),
        Err(e) => {
            failure(&e, None)?;
            None
        }
    };
    let mut recover = |alg: Algorithm, f: &dyn Fn(&ComplexMatrix) -> Result<ComplexMatrix>| -> Result<()> {
        let outcome = match &z_fixed {
            None => Outcome::failed(None),
            Some(z) => {
                let (res, ms) = timed(|| f(z));
                match res {
                    Ok(h_hat) => Outcome {
                        nmse_gz: Some(nmse_gz),
                        nmse_h: Some(nmse(&h_hat, &chan.h)?),
                        runtime_ms: Some(ms),
                        failed: false,
                    },
                    Err(e) => failure(&e, Some(ms))?,
                }
            }
        };
        out.push(ctx.record(slot, alg, outcome));
        Ok(())
    };
    if ctx.wants(Algorithm::Gamp) {
        recover(Algorithm::Gamp, &|z| recover_h(z, &ctx.x, &ctx.gamp))?;
    }
    if ctx.wants(Algorithm::LsOrthogonal) && ls_applicable(ctx) {
        recover(Algorithm::LsOrthogonal, &|z| ls_orthogonal_baseline(z, &ctx.x))?;
    }
    Ok(())
}

/// The orthogonal-pilot baseline needs `S >= M`; shorter pilots get no row.
fn ls_applicable(ctx: &RunContext<'_>) -> bool {
    ctx.cfg.pilot_len >= ctx.cfg.n_users
}
