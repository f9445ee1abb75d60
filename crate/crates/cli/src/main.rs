use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tenproj::{resolve, run_eval, run_gradcheck, run_selftest, run_train, Command, Overrides, EXIT_USAGE};
use tenproj_core::JacobianMode;

#[derive(Parser)]
#[command(name = "tenproj", version, about = "Train, evaluate and gradient-check TensorProjection networks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train one or more seeded trials and write metrics, checkpoints and a summary
    Train(Opts),
    /// Evaluate a checkpoint on the test files
    Eval(Opts),
    /// Finite-difference checks of every layer's backward pass
    Gradcheck(Opts),
    /// Quick internal consistency checks that need no data
    Selftest(Opts),
}

#[derive(Args)]
struct Opts {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    val_limit: Option<usize>,
    /// model1_tp, model2_avgpool or a model spec file
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// exact or paper
    #[arg(long)]
    jacobian_mode: Option<JacobianMode>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Any other config key, as key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Opts {
    fn overrides(&self) -> Overrides {
        Overrides {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            trials: self.trials,
            train_limit: self.train_limit,
            val_limit: self.val_limit,
            model: self.model.clone(),
            out_dir: self.out_dir.clone(),
            data_dir: self.data_dir.clone(),
            jacobian_mode: self.jacobian_mode,
            checkpoint: self.checkpoint.clone(),
            set: self.set.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Sub::Train(o) => (Command::Train, o),
        Sub::Eval(o) => (Command::Eval, o),
        Sub::Gradcheck(o) => (Command::Gradcheck, o),
        Sub::Selftest(o) => (Command::Selftest, o),
    };
    let text = match &opts.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return ExitCode::from(EXIT_USAGE as u8);
            }
        },
        None => None,
    };
    let cfg = match resolve(command, text.as_deref(), &opts.overrides()) {
        Ok(c) => c,
        Err(e) => {
            match &opts.config {
                Some(p) => eprintln!("error: {}: {e}", p.display()),
                None => eprintln!("error: {e}"),
            }
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let code = match command {
        Command::Train => match run_train(&cfg, &|line| eprintln!("{line}")) {
            Ok(out) => {
                print!("{}", tenproj::summary_csv(&out.summary));
                eprintln!("wrote {} trial(s) and {}", out.trials.len(), out.summary_path.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
        Command::Eval => match run_eval(&cfg) {
            Ok((loss, acc)) => {
                println!("test_loss {loss:.6} test_acc {acc:.4}");
                0
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
        Command::Gradcheck => match run_gradcheck(&cfg) {
            Ok(report) => {
                print!("{}", report.render());
                report.verdict.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
        Command::Selftest => {
            let lines = run_selftest(cfg.seed);
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            i32::from(!lines.iter().all(|l| l.passed))
        }
    };
    ExitCode::from(code as u8)
}
