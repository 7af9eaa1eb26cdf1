mod common;

use common::{random_volume, rng};
use voxstyle::io::{load_checkpoint, Volume};
use voxstyle::training::{TrainSchedule, Trainer, LOSS_HEADER};
use voxstyle::{Error, ModelConfig};

fn tiny_data(n: usize, seed: u64) -> Vec<Volume> {
    let cfg = ModelConfig::tiny();
    let mut r = rng(seed);
    (0..n).map(|_| random_volume(cfg.output_shape(), &mut r)).collect()
}

fn tiny(steps: u64, seed: u64) -> Trainer {
    let cfg = ModelConfig::tiny();
    let mut s = TrainSchedule::new(&cfg, steps, seed);
    s.path_length.interval = 2;
    Trainer::new(&cfg, s).unwrap()
}

/// Loss log without the wall-clock column.
fn log_without_time(dir: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("loss.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn one_step_emits_one_finite_row() {
    let dir = tempfile::tempdir().unwrap();
    let rows = tiny(1, 0).train(&tiny_data(8, 1), dir.path()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].g_loss.is_finite() && rows[0].d_loss.is_finite());
    let log = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let lines: Vec<_> = log.lines().collect();
    assert_eq!(lines, [LOSS_HEADER, rows[0].csv_row().as_str()]);
    assert_eq!(load_checkpoint(dir.path().join("final.sck")).unwrap().state.step, 1);
}

#[test]
fn same_seed_same_log() {
    let data = tiny_data(8, 2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    tiny(6, 4).train(&data, a.path()).unwrap();
    tiny(6, 4).train(&data, b.path()).unwrap();
    assert_eq!(log_without_time(a.path()), log_without_time(b.path()));
    assert_eq!(
        std::fs::read(a.path().join("final.sck")).unwrap(),
        std::fs::read(b.path().join("final.sck")).unwrap()
    );
    let c = tempfile::tempdir().unwrap();
    tiny(6, 5).train(&data, c.path()).unwrap();
    assert_ne!(log_without_time(a.path()), log_without_time(c.path()));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cfg = ModelConfig::tiny();
    let mut s = TrainSchedule::new(&cfg, 3, 1);
    s.adam.lr = 0.0;
    s.path_length.interval = 1;
    let mut t = Trainer::new(&cfg, s).unwrap();
    let (g, d) = (t.state.g.clone(), t.state.d.clone());
    let data = tiny_data(4, 3);
    for _ in 0..3 {
        t.step(&data).unwrap();
    }
    assert_eq!(t.state.step, 3);
    for (a, b) in t.state.g.values().iter().chain(t.state.d.values()).zip(g.values().iter().chain(d.values())) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let data = tiny_data(8, 6);
    let cfg = ModelConfig::tiny();
    let sched = |steps| {
        let mut s = TrainSchedule::new(&cfg, steps, 9);
        s.path_length.interval = 3;
        s.checkpoint_every = 4;
        s.ema_rampup = Some(0.05);
        s
    };
    let whole = tempfile::tempdir().unwrap();
    Trainer::new(&cfg, sched(10)).unwrap().train(&data, whole.path()).unwrap();

    let part = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(&cfg, sched(10)).unwrap();
    first.schedule.total_steps = 4;
    first.train(&data, part.path()).unwrap();
    let ckpt = load_checkpoint(part.path().join("ckpt-000004.sck")).unwrap();
    Trainer::resume(ckpt, sched(10)).unwrap().train(&data, part.path()).unwrap();

    assert_eq!(log_without_time(whole.path()), log_without_time(part.path()));
    for name in ["ckpt-000008.sck", "final.sck"] {
        assert_eq!(
            std::fs::read(whole.path().join(name)).unwrap(),
            std::fs::read(part.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn non_finite_loss_aborts_with_a_diagnostic_checkpoint() {
    let cfg = ModelConfig::tiny();
    let mut s = TrainSchedule::new(&cfg, 20, 0);
    s.adam.lr = 1e38;
    let dir = tempfile::tempdir().unwrap();
    let err = Trainer::new(&cfg, s).unwrap().train(&tiny_data(4, 7), dir.path()).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    let diag = load_checkpoint(dir.path().join("diagnostic.sck")).unwrap();
    let rows = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap().lines().count() - 1;
    assert_eq!(diag.state.step as usize, rows);
    assert!(!dir.path().join("final.sck").exists());
}

#[test]
fn dataset_shape_mismatch_is_rejected() {
    let wrong = vec![Volume::filled([5, 4, 4], 0.0).unwrap(); 4];
    let dir = tempfile::tempdir().unwrap();
    let err = tiny(1, 0).train(&wrong, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Shape(_)), "{err}");
    assert!(err.is_usage());
}

#[test]
fn zero_steps_is_a_usage_error() {
    let cfg = ModelConfig::tiny();
    let err = Trainer::new(&cfg, TrainSchedule::new(&cfg, 0, 0)).err().unwrap();
    assert_eq!(err.to_string(), "invalid argument: steps must be ≥ 1");
}

#[test]
fn resume_rejects_another_configuration() {
    let t = tiny(1, 0);
    let mut other = ModelConfig::tiny();
    other.fmap_depth = 8;
    assert!(t.checkpoint().check_against(&other).is_err());
}
