use std::path::Path;
use std::process::Command;

use rspider_bench::{run_cell, run_sweep, Algo, ExperimentConfig, CSV_HEADER};

fn rspider(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rspider")).args(args).output().unwrap()
}

fn small() -> ExperimentConfig {
    ExperimentConfig {
        d: 10,
        n: 100,
        deltas: vec![0.1, 0.05],
        epochs: 6,
        seeds: vec![1, 2],
        window: 2,
        ..Default::default()
    }
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn help_and_usage_errors() {
    let help = rspider(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("bench"));
    assert_eq!(rspider(&["bench", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(rspider(&["bench", "--algo", "newton"]).status.code(), Some(1));
    assert_eq!(rspider(&["bench", "--delta", "1.5"]).status.code(), Some(1));
    assert_eq!(rspider(&["gen", "--d", "5", "--n", "10"]).status.code(), Some(1));
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = rspider(&[
        "bench",
        "--algo",
        "rsvrg,spider",
        "--d",
        "8",
        "--n",
        "64",
        "--delta-list",
        "0.2,0.1",
        "--epochs",
        "4",
        "--seeds",
        "1,2",
        "--window",
        "2",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let rows = lines(&out);
    assert_eq!(rows[0], CSV_HEADER.join(","));
    assert_eq!(rows.len(), 1 + 2 * 2 * 2 * 5);
    assert!(rows[1].starts_with("rsvrg,exp,8,64,0.2,1,0,0,"));
    let summary = lines(&dir.path().join("sweep.csv.summary.csv"));
    assert_eq!(summary.len(), 1 + 2 * 2);
    assert!(summary[0].starts_with("algo,delta,inv_delta,median_epochs_to_double_w1,median_epochs_to_double_w2"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "algo = vrpca\nd = 6\nn = 40\ndelta = 0.3\nepochs = 3\nseed = 4\n",
    )
    .unwrap();
    let out = dir.path().join("run.csv");
    let res = rspider(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--epochs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = lines(&out);
    assert_eq!(rows.len(), 1 + 3);
    assert!(rows[1..].iter().all(|r| r.starts_with("vrpca,retract,6,40,0.3,4,")));
}

#[test]
fn gen_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("inst.bin");
    let res = rspider(&[
        "gen",
        "--d",
        "5",
        "--n",
        "12",
        "--delta",
        "0.2",
        "--out",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(std::fs::metadata(&dump).unwrap().len(), 24 + 8 * 5 * 12);

    let res = rspider(&[
        "probe",
        "--d",
        "6",
        "--n",
        "30",
        "--delta",
        "0.2",
        "--probe",
        "fd",
        "--samples",
        "20",
    ]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("probe=fd") && text.contains("pass=true"), "{text}");
}

#[test]
fn one_cell_has_one_row_per_checkpoint() {
    let mut cfg = small();
    cfg.epochs = 6;
    cfg.checkpoint_every = 2;
    cfg.window = 2;
    for algo in Algo::ALL {
        let rows = run_cell(&cfg, algo, 0.1, 3).unwrap();
        assert_eq!(rows.len(), 4, "{algo}");
        for (j, r) in rows.iter().enumerate() {
            assert!(r.ifo >= 200 * j as u64, "{algo}");
            assert_eq!(r.epoch, r.ifo as f64 / 100.0, "{algo}");
        }
        assert!(rows[0].epochs_to_double.is_none() && rows[1].epochs_to_double.is_some());
    }
    cfg.epochs = 0;
    assert_eq!(run_cell(&cfg, Algo::Rsvrg, 0.1, 3).unwrap().len(), 1);
}

#[test]
fn sweep_covers_every_cell() {
    let mut cfg = small();
    cfg.algos = vec![Algo::Rsvrg, Algo::Vrpca];
    cfg.deltas = (1..=8).map(|k| 0.1 / k as f64).collect();
    cfg.seeds = (1..=5).collect();
    cfg.epochs = 2;
    cfg.window = 1;
    cfg.workers = 4;
    let out = run_sweep(&cfg).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.rows.len(), 80 * 3);
    let mut cells: Vec<(String, u64, u64)> = out
        .rows
        .iter()
        .map(|r| (r.algo.to_string(), r.delta.to_bits(), r.seed))
        .collect();
    cells.dedup();
    assert_eq!(cells.len(), 80);
    assert_eq!(out.summary.len(), 16);
}

#[test]
fn output_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.algos = Algo::ALL.to_vec();
    let mut bytes = Vec::new();
    for (i, workers) in [1, 1, 3].into_iter().enumerate() {
        cfg.workers = workers;
        cfg.out = Some(dir.path().join(format!("{i}.csv")));
        run_sweep(&cfg).unwrap();
        bytes.push(std::fs::read(cfg.out.as_ref().unwrap()).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
}

#[test]
fn svrg_variants_agree_early() {
    let cfg = ExperimentConfig {
        d: 20,
        n: 200,
        epochs: 5,
        ..Default::default()
    };
    let a = run_cell(&cfg, Algo::Rsvrg, 0.05, 1).unwrap();
    let b = run_cell(&cfg, Algo::Vrpca, 0.05, 1).unwrap();
    let (x, y) = (a[5].accuracy, b[5].accuracy);
    assert!(x / y <= 2.0 && y / x <= 2.0, "{x} vs {y}");
}
