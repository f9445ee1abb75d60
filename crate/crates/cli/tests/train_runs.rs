mod support;

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use tenproj::config::{resolve, Command, Overrides};
use tenproj::summary::{summarize, summary_csv, summary_epochs};
use tenproj::train::trial_file_names;
use tenproj_nn::metrics::read_metrics_csv;

fn tenproj(args: &[&str], threads: &str) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_tenproj"))
        .args(args)
        .env("TENPROJ_THREADS", threads)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, data: &Path, out: &Path, extra: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("{}{extra}", support::synthetic_config(data, out))).unwrap();
    path.display().to_string()
}

#[test]
fn smoke_run_on_a_small_subset() {
    let tmp = tempfile::tempdir().unwrap();
    support::write_synthetic(tmp.path(), 260, 50, 1);
    let out = tmp.path().join("run");
    let cfg = write_config(
        tmp.path(),
        "smoke.cfg",
        tmp.path(),
        &out,
        "model = model1_tp\ntrials = 1\nepochs = 1\ntrain_limit = 200\nval_limit = 40\n",
    );
    let res = tenproj(&["train", "--config", &cfg], "1");
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (metrics, ckpt) = trial_file_names(0, 1);
    let rows = read_metrics_csv(out.join(&metrics)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].epoch, 1);
    assert!(out.join(&ckpt).exists());
    assert!(out.join("summary.csv").exists());
    assert!(out.join("model.txt").exists());

    // the checkpoint evaluates on the test files
    let res = tenproj(
        &["eval", "--config", &cfg, "--checkpoint", out.join(&ckpt).to_str().unwrap()],
        "1",
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("test_acc"), "{stdout}");
}

#[test]
fn summary_matches_recomputation_from_trial_files() {
    let tmp = tempfile::tempdir().unwrap();
    support::write_synthetic(tmp.path(), 300, 10, 2);
    let out = tmp.path().join("run");
    let text = format!(
        "{}model = model2_avgpool\ntrials = 4\nepochs = 3\ntrain_limit = 120\nval_limit = 50\nsummary_epochs = 2\nseed = 11\n",
        support::synthetic_config(tmp.path(), &out)
    );
    let cfg = resolve(Command::Train, Some(&text), &Overrides::default()).unwrap();
    let outcome = tenproj::run_train(&cfg, &|_| {}).unwrap();
    assert_eq!(outcome.trials.len(), 4);
    for (t, trial) in outcome.trials.iter().enumerate() {
        assert_eq!(trial.index, t);
        assert_eq!(trial.seed, 11 + t as u64);
    }

    let trials: Vec<_> = (0..4)
        .map(|t| read_metrics_csv(out.join(trial_file_names(t, 4).0)).unwrap())
        .collect();
    assert!(trials.iter().all(|rows| rows.len() == 3));
    let epochs = summary_epochs(&[2], 3);
    assert_eq!(epochs, vec![2, 3]);
    let recomputed = summary_csv(&summarize(&trials, &epochs));
    assert_eq!(fs::read_to_string(&outcome.summary_path).unwrap(), recomputed);
    // four rows of data, two metrics per epoch
    assert_eq!(recomputed.lines().count(), 5);
}

#[test]
fn same_seed_gives_identical_metrics_files() {
    let tmp = tempfile::tempdir().unwrap();
    support::write_synthetic(tmp.path(), 250, 10, 3);
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let cfg = write_config(
            tmp.path(),
            &format!("{run}.cfg"),
            tmp.path(),
            &out,
            "model = model1_tp\ntrials = 2\nepochs = 2\ntrain_limit = 100\nval_limit = 40\nseed = 5\nwall_clock = false\n",
        );
        let res = tenproj(&["train", "--config", &cfg], "1");
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        files.push(
            (0..2)
                .map(|t| fs::read(out.join(trial_file_names(t, 2).0)).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(files[0], files[1]);
    // distinct trials use distinct seeds
    assert_ne!(files[0][0], files[0][1]);
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    support::write_synthetic(tmp.path(), 200, 10, 4);
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let cfg = write_config(
            tmp.path(),
            &format!("t{threads}.cfg"),
            tmp.path(),
            &out,
            "model = model2_avgpool\ntrials = 3\nepochs = 1\ntrain_limit = 60\nval_limit = 20\nwall_clock = false\n",
        );
        let res = tenproj(&["train", "--config", &cfg], threads);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        files.push(
            (0..3)
                .map(|t| fs::read(out.join(trial_file_names(t, 3).0)).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn failures_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    // no data files
    let cfg = write_config(
        tmp.path(),
        "nodata.cfg",
        &tmp.path().join("absent"),
        &tmp.path().join("out"),
        "model = model1_tp\nepochs = 1\n",
    );
    let res = tenproj(&["train", "--config", &cfg], "1");
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("training data"));

    // output path is a regular file
    support::write_synthetic(tmp.path(), 100, 10, 5);
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(
        tmp.path(),
        "unwritable.cfg",
        tmp.path(),
        &blocker.join("out"),
        "model = model2_avgpool\nepochs = 1\ntrain_limit = 20\nval_limit = 10\n",
    );
    let res = tenproj(&["train", "--config", &cfg], "1");
    assert_eq!(res.status.code(), Some(1));

    // configuration errors are usage errors
    let cfg = write_config(tmp.path(), "bad.cfg", tmp.path(), tmp.path(), "epochs = banana\n");
    let res = tenproj(&["train", "--config", &cfg], "1");
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("epochs") && stderr.contains("line 7"), "{stderr}");
}

#[test]
fn flag_overrides_reach_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    support::write_synthetic(tmp.path(), 150, 10, 6);
    let out = tmp.path().join("run");
    let cfg = write_config(
        tmp.path(),
        "flags.cfg",
        tmp.path(),
        &out,
        "model = model1_tp\nepochs = 15\ntrials = 5\n",
    );
    let res = tenproj(
        &[
            "train",
            "--config",
            &cfg,
            "--epochs",
            "2",
            "--trials",
            "1",
            "--train-limit",
            "30",
            "--val-limit",
            "10",
            "--model",
            "model2_avgpool",
        ],
        "1",
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(read_metrics_csv(out.join(trial_file_names(0, 1).0)).unwrap().len(), 2);
    assert!(!out.join(trial_file_names(1, 5).0).exists());
    assert!(fs::read_to_string(out.join("model.txt")).unwrap().contains("avgpool"));
}
