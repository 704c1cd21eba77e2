use ristrack_core::channel::SystemConfig;
use ristrack_core::harness::{
    nmse_db, run_experiment_with, summarize, write_records, Algorithm, Execution, ExperimentSpec, FigureId, Metric,
    SweepAxis,
};

fn small_spec() -> ExperimentSpec {
    ExperimentSpec {
        figure_id: FigureId::Custom,
        base: SystemConfig {
            n_rx: 8,
            n_ris: 16,
            n_profiles: 16,
            n_users: 5,
            pilot_len: 8,
            n_paths_user: vec![4; 5],
            n_slots: 4,
            snr_db: 15.0,
            rng_seed: 21,
            ..SystemConfig::reference()
        },
        sweep: vec![SweepAxis {
            name: "snr_db".into(),
            values: vec![5.0, 25.0],
        }],
        zip: false,
        n_monte_carlo: 3,
        algorithms: vec![
            Algorithm::BalsPerSlot,
            Algorithm::RlsRandomInit,
            Algorithm::BalsRls,
            Algorithm::Gamp,
            Algorithm::LsOrthogonal,
        ],
        total_slots: Some(6),
        record_slots: None,
        record_runtime: false,
    }
}

fn csv_bytes(spec: &ExperimentSpec, exec: Execution) -> Vec<u8> {
    let mut out = Vec::new();
    write_records(&run_experiment_with(spec, exec).unwrap(), &mut out).unwrap();
    out
}

#[test]
fn same_spec_and_seed_give_identical_bytes() {
    let spec = small_spec();
    let first = csv_bytes(&spec, Execution::Sequential);
    assert_eq!(first, csv_bytes(&spec, Execution::Sequential));
    assert_eq!(first, csv_bytes(&spec, Execution::Parallel { jobs: Some(3) }));

    let mut reseeded = spec.clone();
    reseeded.base.rng_seed += 1;
    assert_ne!(first, csv_bytes(&reseeded, Execution::Sequential));
}

#[test]
fn every_run_slot_and_algorithm_gets_a_row() {
    let spec = small_spec();
    let records = run_experiment_with(&spec, Execution::Sequential).unwrap();
    // 2 points x 3 runs x 6 slots x 5 algorithms
    assert_eq!(records.len(), 180);
    assert!(records.iter().all(|r| !r.diverged && r.runtime_ms.is_none()));
    for r in &records {
        let has_h = matches!(r.algorithm, Algorithm::Gamp | Algorithm::LsOrthogonal);
        assert_eq!(r.nmse_h_db.is_some(), has_h, "{:?}", r.algorithm);
        assert!(r.nmse_gz_db.is_some());
    }
}

#[test]
fn noiseless_bals_is_exact() {
    let mut spec = small_spec();
    spec.sweep.clear();
    spec.base.snr_db = 300.0;
    spec.n_monte_carlo = 1;
    spec.algorithms = vec![Algorithm::BalsPerSlot];
    spec.total_slots = Some(2);
    let records = run_experiment_with(&spec, Execution::Sequential).unwrap();
    for r in records {
        let db = r.nmse_gz_db.unwrap();
        assert!(db < -80.0, "slot {}: {db} dB", r.slot);
    }
}

#[test]
fn summary_mean_is_the_linear_average_of_runs() {
    let spec = small_spec();
    let records = run_experiment_with(&spec, Execution::Sequential).unwrap();
    let summaries = summarize(&records, Metric::Composite);
    assert_eq!(summaries.len(), 2 * 6 * 5);
    for s in &summaries {
        let runs: Vec<f64> = records
            .iter()
            .filter(|r| r.algorithm == s.algorithm && r.slot == s.slot && r.params == s.params)
            .map(|r| 10f64.powf(r.nmse_gz_db.unwrap() / 10.0))
            .collect();
        assert_eq!(runs.len(), s.runs);
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        assert!((s.mean_db - nmse_db(mean)).abs() <= 1e-9);
    }
}

#[test]
fn higher_snr_helps_every_estimator() {
    let spec = small_spec();
    let records = run_experiment_with(&spec, Execution::Sequential).unwrap();
    let summaries = summarize(&records, Metric::Composite);
    for alg in [Algorithm::BalsPerSlot, Algorithm::BalsRls] {
        let at = |snr: f64| {
            summaries
                .iter()
                .find(|s| s.algorithm == alg && s.slot == 6 && s.param("snr_db") == Some(snr))
                .unwrap()
                .mean_db
        };
        assert!(at(25.0) < at(5.0) - 10.0, "{alg:?}: {} vs {}", at(25.0), at(5.0));
    }
}
