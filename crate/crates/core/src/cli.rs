//! Command-line front end. Exit codes: 0 on success, 1 when a run or any
//! sweep cell fails, 2 on usage or config errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{cmd_bench, cmd_report, cmd_single, evaluate, train_original, CellMetrics, ForgetMode};
use crate::config::{defaults_help, parse_config, ExperimentConfig};
use crate::error::Error;
use crate::nnkit::{read_checkpoint, write_checkpoint};
use crate::speechgen::{generate, select_forget, Task};
use crate::unlearn::{accuracy, MethodSpec};

#[derive(Parser, Debug)]
#[command(name = "speech-unlearn", version, about = "Machine unlearning on a synthetic speech corpus", after_help = defaults_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Config file (`key = value` lines); defaults apply when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run seed (overrides `seeds`)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// keyword or speaker (overrides `tasks`)
    #[arg(long, value_name = "TASK")]
    task: Option<Task>,
}

#[derive(Args, Debug, Default)]
struct Forget {
    /// Sample-mode forget ratio, e.g. 0.05
    #[arg(long, value_name = "R")]
    forget_ratio: Option<f64>,
    /// Class-mode target class
    #[arg(long, value_name = "C")]
    forget_class: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the corpus and write it as CSV
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train the original model and write its checkpoint
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Train, unlearn once and evaluate; writes f, f' and the epoch trace
    Unlearn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        forget: Forget,
        /// Method tag, optionally with `+sl`
        #[arg(long, value_name = "NAME")]
        method: String,
    },
    /// Evaluate a checkpoint on the partition given by task, seed and forget flags
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        forget: Forget,
        /// Checkpoint to evaluate
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Run the full sweep and write results and reports
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        forget: Forget,
        /// Restrict the sweep to one method
        #[arg(long, value_name = "NAME")]
        method: Option<String>,
        /// Forget ratios 1%..10% in 1% steps
        #[arg(long)]
        full_sweep: bool,
    },
    /// Rebuild report.md from an output directory's CSV files
    Report {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(Error),
    Run(Error),
}

fn load(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Failure::Usage(Error::io(path, e)))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text).map_err(Failure::Usage)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(task) = common.task {
        cfg.tasks = vec![task];
    }
    Ok(cfg)
}

fn method(name: &str) -> std::result::Result<MethodSpec, Failure> {
    name.parse().map_err(Failure::Usage)
}

fn mode(cfg: &ExperimentConfig, forget: &Forget) -> std::result::Result<ForgetMode, Failure> {
    match (forget.forget_ratio, forget.forget_class) {
        (Some(_), Some(_)) => Err(Failure::Usage(Error::invalid(
            "forget",
            "give either --forget-ratio or --forget-class",
        ))),
        (Some(r), None) => Ok(ForgetMode::Ratio(r)),
        (None, Some(c)) => Ok(ForgetMode::Class(c)),
        (None, None) => cfg
            .effective_ratios()
            .first()
            .map(|&r| ForgetMode::Ratio(r))
            .or_else(|| cfg.forget_classes.first().map(|&c| ForgetMode::Class(c)))
            .ok_or_else(|| Failure::Usage(Error::invalid("forget", "no forget ratio or class configured"))),
    }
}

fn print_metrics(label: &str, m: &CellMetrics) {
    print!(
        "{label:<10} D_t {:6.2}  D_f {:6.2}  D_r {:6.2}  MIA {:6.2}",
        m.acc_test, m.acc_forget, m.acc_retain, m.mia
    );
    match m.acc_forget_test {
        Some(v) => println!("  D_f(test) {v:6.2}"),
        None => println!(),
    }
}

fn dispatch(command: Command) -> std::result::Result<i32, Failure> {
    match command {
        Command::Gen { common } => {
            let cfg = load(&common)?;
            let corpus = generate(&cfg.gen).map_err(Failure::Run)?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Run(Error::io(&cfg.out, e)))?;
            let path = cfg.out.join("corpus.csv");
            corpus.write_csv(&path).map_err(Failure::Run)?;
            println!("wrote {} utterances to {}", corpus.len(), path.display());
            Ok(0)
        }
        Command::Train { common } => {
            let cfg = load(&common)?;
            let (task, seed) = (cfg.tasks[0], cfg.seeds[0]);
            let corpus = generate(&cfg.gen).map_err(Failure::Run)?;
            let o = train_original(&cfg, &corpus, task, seed).map_err(Failure::Run)?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Run(Error::io(&cfg.out, e)))?;
            let path = cfg.out.join(format!("{task}_s{seed}_original.ckpt"));
            write_checkpoint(&o.model, &path).map_err(Failure::Run)?;
            let acc = |ids: &[usize]| accuracy(&o.model, &o.data, ids).map(|a| 100.0 * a).map_err(Failure::Run);
            println!(
                "{task} seed {seed}: train {:.2}%  test {:.2}%  ({:.3} s)  -> {}",
                acc(&o.split.train_ids)?,
                acc(&o.split.test_ids)?,
                o.train_seconds,
                path.display()
            );
            Ok(0)
        }
        Command::Unlearn { common, forget, method: name } => {
            let cfg = load(&common)?;
            let spec = method(&name)?;
            let mode = mode(&cfg, &forget)?;
            let out = cmd_single(&cfg, cfg.tasks[0], cfg.seeds[0], mode, spec).map_err(Failure::Run)?;
            print_metrics("Original", &out.original);
            print_metrics(&spec.display_name(), &out.unlearned);
            println!(
                "epochs {}  wall {:.3} s{}",
                out.result.epochs_run,
                out.result.wall_time_seconds,
                if out.result.stopped_by_budget { "  (stopped by budget)" } else { "" }
            );
            if let Some(w) = &out.result.warning {
                println!("warning: {w}");
            }
            println!("f  -> {}", out.original_checkpoint.display());
            println!("f' -> {}", out.unlearned_checkpoint.display());
            println!("trace -> {}", out.trace.display());
            Ok(0)
        }
        Command::Eval { common, forget, checkpoint } => {
            let cfg = load(&common)?;
            let (task, seed) = (cfg.tasks[0], cfg.seeds[0]);
            let mode = mode(&cfg, &forget)?;
            let model = read_checkpoint(&checkpoint).map_err(Failure::Run)?;
            let corpus = generate(&cfg.gen).map_err(Failure::Run)?;
            let data = corpus.task_data(task).map_err(Failure::Run)?;
            let base = crate::speechgen::split(&corpus, task, cfg.test_fraction, seed).map_err(Failure::Run)?;
            let partition = select_forget(&base, &mode.forget_spec(seed), &data.labels).map_err(Failure::Run)?;
            let m = evaluate(&model, &data, &partition).map_err(Failure::Run)?;
            print_metrics("model", &m);
            Ok(0)
        }
        Command::Bench { common, forget, method: name, full_sweep } => {
            let mut cfg = load(&common)?;
            if let Some(name) = name {
                cfg.methods = vec![method(&name)?];
                cfg.superloss = false;
            }
            if full_sweep {
                cfg.full_sweep = true;
            }
            if forget.forget_ratio.is_some() || forget.forget_class.is_some() {
                cfg.full_sweep = false;
                cfg.forget_ratios = forget.forget_ratio.into_iter().collect();
                cfg.forget_classes = forget.forget_class.into_iter().collect();
            }
            let summary = cmd_bench(&cfg).map_err(Failure::Run)?;
            let failed = summary.failed();
            println!(
                "{} rows, {failed} failed; results in {}",
                summary.rows.len(),
                summary.out.display()
            );
            Ok(if failed > 0 { 1 } else { 0 })
        }
        Command::Report { common } => {
            let cfg = load(&common)?;
            let rows = cmd_report(&cfg.out).map_err(Failure::Run)?;
            let path = cfg.out.join("report.md");
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Run(Error::io(&path, e)))?;
            print!("{text}");
            Ok(if rows.iter().any(|r| !r.is_ok()) { 1 } else { 0 })
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

