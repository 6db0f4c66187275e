use bsonata_core::harness::{
    build_setup, completion_time_sweep, metrics_csv_string, read_metrics_csv, run_experiment, write_metrics_csv,
    RunConfig, VariantName,
};
use bsonata_core::problems::{load_instance, merit_j, save_instance};
use bsonata_core::Error;

fn small(variant: VariantName, rounds: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.graph.n = 5;
    cfg.problem.m = 12;
    cfg.problem.n_i = 10;
    cfg.algorithm.variant = variant;
    cfg.run.max_rounds = rounds;
    cfg
}

#[test]
fn same_config_gives_identical_csv() {
    for v in [VariantName::Atc, VariantName::Cta, VariantName::Ghat, VariantName::Baseline] {
        let cfg = small(v, 60);
        let a = metrics_csv_string(&run_experiment(&cfg).unwrap().trace);
        let b = metrics_csv_string(&run_experiment(&cfg).unwrap().trace);
        assert_eq!(a, b);
    }
}

#[test]
fn trace_is_independent_of_thread_count() {
    let cfg = small(VariantName::Ghat, 80);
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| metrics_csv_string(&run_experiment(&cfg).unwrap().trace))
    };
    assert_eq!(run_with(1), run_with(4));
}

#[test]
fn metrics_file_round_trip() {
    let out = run_experiment(&small(VariantName::Atc, 25)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_metrics_csv(&out.trace, &path).unwrap();
    assert_eq!(read_metrics_csv(&path).unwrap(), out.trace);
}

#[test]
fn early_stop_records_first_round_below_tolerance() {
    let mut cfg = small(VariantName::Atc, 20_000);
    cfg.run.stop_tol_j = 1e-3;
    cfg.run.metrics_stride = 1000;
    let out = run_experiment(&cfg).unwrap();
    let t = out.stopped_at.expect("small instance converges");
    assert_eq!(out.last().t, t);
    assert!(out.last().j < 1e-3);
    assert_eq!(out.final_round, t);
}

#[test]
fn sweep_keeps_the_instance_and_reports_b1() {
    let cfg = small(VariantName::Atc, 20_000);
    let rows = completion_time_sweep(&cfg, &[1, 3]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].blocks, 1);
    let t1 = rows[0].t_end.unwrap();
    assert_eq!(rows[0].normalized(), t1 as f64);
    let a = build_setup(&cfg).unwrap();
    let mut c3 = cfg.clone();
    c3.algorithm.blocks = 3;
    assert_eq!(a.problem.agent(2), build_setup(&c3).unwrap().problem.agent(2));
}

#[test]
fn saved_instance_reloads_exactly() {
    let setup = build_setup(&small(VariantName::Atc, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_instance(&setup.problem, dir.path()).unwrap();
    let back = load_instance(dir.path()).unwrap();
    assert_eq!(back, setup.problem);
    let x = &setup.x0[0];
    assert_eq!(merit_j(&back, x), merit_j(&setup.problem, x));
}

#[test]
fn diverging_run_is_reported() {
    let mut cfg = small(VariantName::Atc, 200);
    cfg.problem.bounds = [-1e300, 1e300];
    cfg.algorithm.tau = 1e-3;
    cfg.algorithm.surrogate = bsonata_core::sonata::SurrogateKind::PlainLinearization;
    match run_experiment(&cfg) {
        Err(Error::DivergenceDetected { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.last().clone())),
    }
}
