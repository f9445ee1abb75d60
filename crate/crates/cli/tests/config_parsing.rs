use std::path::PathBuf;

use tenproj::config::{parse_config_for, resolve, Command, ConfigError, ModelChoice, Overrides};
use tenproj::parse_config;
use tenproj_core::JacobianMode;
use tenproj_nn::LayerSpec;

#[test]
fn epochs_value() {
    let cfg = parse_config("epochs = 15\n").unwrap();
    assert_eq!(cfg.epochs, 15);
}

#[test]
fn type_error_names_line_and_key() {
    let err = parse_config("# comment\nseed = 3\nepochs = banana\n").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("epochs"), "{msg}");
    assert!(msg.contains("banana"), "{msg}");
}

#[test]
fn flag_overrides_file_value() {
    let overrides = Overrides {
        epochs: Some(3),
        ..Overrides::default()
    };
    let cfg = resolve(Command::Train, Some("model = model1_tp\nepochs = 15\n"), &overrides).unwrap();
    assert_eq!(cfg.epochs, 3);
    let cfg = resolve(Command::Train, Some("model = model1_tp\nepochs = 15\n"), &Overrides::default()).unwrap();
    assert_eq!(cfg.epochs, 15);
}

#[test]
fn unknown_and_duplicate_keys() {
    assert_eq!(
        parse_config("epochs = 2\nepoch = 3\n").unwrap_err(),
        ConfigError::UnknownKey {
            line: 2,
            key: "epoch".into()
        }
    );
    assert!(matches!(
        parse_config("seed = 1\n\nseed = 2\n").unwrap_err(),
        ConfigError::Duplicate { line: 3, first: 1, .. }
    ));
    assert!(matches!(parse_config("just words\n").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
}

#[test]
fn missing_required_keys() {
    let err = resolve(Command::Train, Some("epochs = 2\n"), &Overrides::default()).unwrap_err();
    assert_eq!(
        err,
        ConfigError::Missing {
            key: "model",
            command: Command::Train
        }
    );
    let err = resolve(Command::Eval, Some("model = model2_avgpool\n"), &Overrides::default()).unwrap_err();
    assert!(err.to_string().contains("checkpoint"), "{err}");
    // gradcheck and selftest need nothing
    resolve(Command::Gradcheck, None, &Overrides::default()).unwrap();
    resolve(Command::Selftest, None, &Overrides::default()).unwrap();
}

#[test]
fn range_validation() {
    for text in ["epochs = 0", "batch_size = 0", "trials = 0", "val_fraction = 1.5", "lr = -1", "rho = 1"] {
        let full = format!("model = model1_tp\n{text}\n");
        assert!(resolve(Command::Train, Some(&full), &Overrides::default()).is_err(), "{text}");
    }
    let overrides = Overrides {
        trials: Some(0),
        ..Overrides::default()
    };
    assert!(resolve(Command::Train, Some("model = model1_tp\n"), &overrides).is_err());
}

#[test]
fn full_file_roundtrip() {
    let text = "\
command = train
model = model2_avgpool   # the pooling baseline
epochs = 5
batch_size = 64
eval_batch_size = 256
seed = 42
trials = 3
lr = 0.002
rho = 0.95
delta = 1e-8
eps = 0.05
jacobian_mode = paper
val_fraction = 0.2
train_limit = 1000
val_limit = none
summary_epochs = 1, 3, 5
out_dir = /tmp/x
data_dir = /data
train_images = a.idx
checkpoint = c.bin
gradcheck_seeds = 2
wall_clock = false
";
    let cfg = parse_config(text).unwrap();
    assert_eq!(cfg.model, Some(ModelChoice::Model2AvgPool));
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.eval_batch_size), (5, 64, 256));
    assert_eq!((cfg.seed, cfg.trials), (42, 3));
    assert_eq!((cfg.lr, cfg.rho, cfg.delta), (0.002, 0.95, 1e-8));
    assert_eq!(cfg.eps, Some(0.05));
    assert_eq!(cfg.jacobian_mode, Some(JacobianMode::Paper));
    assert_eq!(cfg.val_fraction, 0.2);
    assert_eq!((cfg.train_limit, cfg.val_limit), (Some(1000), None));
    assert_eq!(cfg.summary_epochs, vec![1, 3, 5]);
    assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
    assert_eq!(cfg.data_path(&cfg.train_images), PathBuf::from("/data/a.idx"));
    assert_eq!(cfg.checkpoint, Some(PathBuf::from("c.bin")));
    assert_eq!(cfg.gradcheck_seeds, 2);
    assert!(!cfg.wall_clock);
    cfg.validate().unwrap();
}

#[test]
fn command_comes_from_caller() {
    let cfg = resolve(Command::Gradcheck, Some("command = train\n"), &Overrides::default()).unwrap();
    assert_eq!(cfg.command, Command::Gradcheck);
    let cfg = parse_config_for("command = eval\n", Command::Train).unwrap();
    assert_eq!(cfg.command, Command::Eval);
}

#[test]
fn set_overrides_and_their_errors() {
    let overrides = Overrides {
        set: vec!["lr=0.01".into(), "wall_clock = false".into()],
        model: Some("model1_tp".into()),
        ..Overrides::default()
    };
    let cfg = resolve(Command::Train, Some("lr = 0.5\n"), &overrides).unwrap();
    assert_eq!(cfg.lr, 0.01);
    assert!(!cfg.wall_clock);
    for bad in ["nokey", "bogus=1", "lr=abc"] {
        let overrides = Overrides {
            set: vec![bad.into()],
            ..Overrides::default()
        };
        assert!(resolve(Command::Gradcheck, None, &overrides).is_err(), "{bad}");
    }
}

#[test]
fn projection_settings_reach_the_model() {
    let cfg = resolve(
        Command::Train,
        Some("model = model1_tp\neps = 0.1\njacobian_mode = paper\n"),
        &Overrides::default(),
    )
    .unwrap();
    let spec = cfg.model_spec().unwrap();
    let tp = spec
        .layers
        .iter()
        .find_map(|l| match l {
            LayerSpec::TensorProjection { eps, jacobian_mode, .. } => Some((*eps, *jacobian_mode)),
            _ => None,
        })
        .unwrap();
    assert_eq!(tp, (0.1, JacobianMode::Paper));
}

#[test]
fn custom_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.txt");
    std::fs::write(
        &path,
        "input 28x28x1\ntensor_projection output=7x7x1 eps=0.2\nflatten\ndense units=10 activation=softmax\n",
    )
    .unwrap();
    let text = format!("model = {}\n", path.display());
    let cfg = resolve(Command::Train, Some(&text), &Overrides::default()).unwrap();
    let spec = cfg.model_spec().unwrap();
    // eps from the spec file survives when the config leaves it unset
    assert!(matches!(spec.layers[0], LayerSpec::TensorProjection { eps, .. } if eps == 0.2));

    let text = format!("model = {}\n", dir.path().join("missing.txt").display());
    let cfg = resolve(Command::Train, Some(&text), &Overrides::default()).unwrap();
    assert!(matches!(cfg.model_spec(), Err(ConfigError::Model { .. })));
}

#[test]
fn full_protocol_is_expressible() {
    let cfg = resolve(
        Command::Train,
        Some("model = model1_tp\ntrials = 20\nepochs = 15\nbatch_size = 100\n"),
        &Overrides::default(),
    )
    .unwrap();
    assert_eq!((cfg.trials, cfg.epochs, cfg.train_limit, cfg.val_limit), (20, 15, None, None));
    assert_eq!(tenproj::summary::summary_epochs(&cfg.summary_epochs, cfg.epochs), vec![5, 10, 15]);
}
