//! Experiment orchestration: the benchmark sweep, single runs and the
//! files they leave behind.
//!
//! A bench run writes into its output directory:
//!
//! - `config.txt`: the fully resolved config
//! - `results.csv`: one row per (task, mode, forget setting, seed, method)
//!   with accuracies and MIA scores; free of timings, so identical configs
//!   give identical bytes
//! - `timings.csv`: wall times, budgets and epochs run for the same rows
//! - `report.md` and `report_<task>.csv`: seed-averaged tables
//! - `checkpoints/*.ckpt` and `traces/*.tsv`

use std::collections::HashMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::evalkit::{assemble_report, calibrate_mia, mia_score, subset_accuracy, Report, RunRecord, SeedMetrics, Section};
use crate::nnkit::{write_checkpoint, Model};
use crate::speechgen::{generate, select_forget, split, Corpus, ForgetSpec, Partition, Task, TaskData};
use crate::unlearn::{retrain_oracle, run_unlearn, train, Method, MethodSpec, UnlearnConfig, UnlearnResult};

/// How D_f is chosen in one sweep cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForgetMode {
    Ratio(f64),
    Class(usize),
}

impl ForgetMode {
    pub fn section(self) -> Section {
        match self {
            ForgetMode::Ratio(_) => Section::Sample,
            ForgetMode::Class(_) => Section::Class,
        }
    }

    /// The ratio or class index as written in `results.csv`.
    pub fn param(self) -> String {
        match self {
            ForgetMode::Ratio(r) => format!("{r:?}"),
            ForgetMode::Class(c) => c.to_string(),
        }
    }

    fn file_tag(self) -> String {
        match self {
            ForgetMode::Ratio(r) => format!("r{r}"),
            ForgetMode::Class(c) => format!("c{c}"),
        }
    }

    pub fn forget_spec(self, seed: u64) -> ForgetSpec {
        match self {
            ForgetMode::Ratio(ratio) => ForgetSpec::Sample { ratio, seed },
            ForgetMode::Class(target_class) => ForgetSpec::Class { target_class },
        }
    }
}

/// Evaluation of one model on one partition. Percentages.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMetrics {
    pub acc_test: f64,
    pub acc_forget: f64,
    pub acc_retain: f64,
    pub mia: f64,
    /// Class mode: accuracy on test samples of the forgotten class.
    pub acc_forget_test: Option<f64>,
}

/// Accuracies on D_t, D_f, D_r and the MIA score of `model`. The attacker
/// is calibrated on this model's losses with D_r as members and D_t as
/// non-members, then probes D_f.
pub fn evaluate(model: &Model, data: &TaskData, partition: &Partition) -> Result<CellMetrics> {
    let attacker = calibrate_mia(model, data, &partition.retain_ids, &partition.test_ids)?;
    let class_test = partition.forgotten_class_test_ids(&data.labels);
    Ok(CellMetrics {
        acc_test: subset_accuracy(model, data, &partition.test_ids)?,
        acc_forget: subset_accuracy(model, data, &partition.forget_ids)?,
        acc_retain: subset_accuracy(model, data, &partition.retain_ids)?,
        mia: mia_score(&attacker, model, data, &partition.forget_ids)?,
        acc_forget_test: if class_test.is_empty() {
            None
        } else {
            Some(subset_accuracy(model, data, &class_test)?)
        },
    })
}

/// One line of `results.csv` joined with its `timings.csv` line.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub task: Task,
    pub section: Section,
    /// Ratio or class index; empty for nothing.
    pub forget: String,
    pub seed: u64,
    /// `original` or a method spec such as `grad_ascent+sl`.
    pub method: String,
    pub outcome: std::result::Result<CellMetrics, String>,
    pub wall_time: f64,
    pub budget: Option<f64>,
    pub epochs_run: usize,
    pub stopped_by_budget: bool,
}

impl ResultRow {
    pub fn display_name(&self) -> String {
        if self.method == "original" {
            return "Original".into();
        }
        self.method
            .parse::<MethodSpec>()
            .map(|m| m.display_name())
            .unwrap_or_else(|_| self.method.clone())
    }

    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

pub const RESULTS_HEADER: &str =
    "task,mode,forget,seed,method,status,acc_test,acc_forget,acc_retain,mia,acc_forget_test,error";
pub const TIMINGS_HEADER: &str = "task,mode,forget,seed,method,wall_time_s,budget_s,epochs_run,stopped_by_budget";

fn clean(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let key = format!("{},{},{},{},{}", r.task, r.section.name(), r.forget, r.seed, r.method);
        match &r.outcome {
            Ok(m) => writeln!(
                out,
                "{key},ok,{:?},{:?},{:?},{:?},{},",
                m.acc_test,
                m.acc_forget,
                m.acc_retain,
                m.mia,
                m.acc_forget_test.map(|v| format!("{v:?}")).unwrap_or_default()
            ),
            Err(e) => writeln!(out, "{key},failed,,,,,,{}", clean(e)),
        }
        .unwrap();
    }
    out
}

pub fn timings_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{TIMINGS_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:?},{},{},{}",
            r.task,
            r.section.name(),
            r.forget,
            r.seed,
            r.method,
            r.wall_time,
            r.budget.map(|b| format!("{b:?}")).unwrap_or_default(),
            r.epochs_run,
            r.stopped_by_budget
        )
        .unwrap();
    }
    out
}

fn format_err(what: &'static str, line: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        what,
        reason: format!("line {line}: {}", reason.into()),
    }
}

fn parse_section(s: &str) -> Option<Section> {
    [Section::Original, Section::Sample, Section::Class]
        .into_iter()
        .find(|x| x.name() == s)
}

/// Reads back `results.csv` and `timings.csv`.
pub fn parse_results(results: &str, timings: &str) -> Result<Vec<ResultRow>> {
    type Key = (String, String, String, String, String);
    let key = |f: &[&str]| -> Key { (f[0].into(), f[1].into(), f[2].into(), f[3].into(), f[4].into()) };
    let mut times: HashMap<Key, (f64, Option<f64>, usize, bool)> = HashMap::new();
    let mut lines = timings.lines();
    if lines.next() != Some(TIMINGS_HEADER) {
        return Err(format_err("timings.csv", 1, "unexpected header"));
    }
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format_err("timings.csv", i + 2, format!("cannot parse `{line}`"));
        if f.len() != 9 {
            return Err(bad());
        }
        let budget = if f[6].is_empty() { None } else { Some(f[6].parse().map_err(|_| bad())?) };
        times.insert(
            key(&f),
            (
                f[5].parse().map_err(|_| bad())?,
                budget,
                f[7].parse().map_err(|_| bad())?,
                f[8].parse().map_err(|_| bad())?,
            ),
        );
    }

    let mut lines = results.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(format_err("results.csv", 1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format_err("results.csv", i + 2, format!("cannot parse `{line}`"));
        if f.len() != 12 {
            return Err(bad());
        }
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let outcome = match f[5] {
            "ok" => Ok(CellMetrics {
                acc_test: real(f[6])?,
                acc_forget: real(f[7])?,
                acc_retain: real(f[8])?,
                mia: real(f[9])?,
                acc_forget_test: if f[10].is_empty() { None } else { Some(real(f[10])?) },
            }),
            "failed" => Err(f[11].to_string()),
            _ => return Err(bad()),
        };
        let (wall_time, budget, epochs_run, stopped_by_budget) =
            times.get(&key(&f)).copied().unwrap_or((f64::NAN, None, 0, false));
        rows.push(ResultRow {
            task: f[0].parse().map_err(|_| bad())?,
            section: parse_section(f[1]).ok_or_else(bad)?,
            forget: f[2].to_string(),
            seed: f[3].parse().map_err(|_| bad())?,
            method: f[4].to_string(),
            outcome,
            wall_time,
            budget,
            epochs_run,
            stopped_by_budget,
        });
    }
    Ok(rows)
}

/// Seed-averaged report of one task. `Original` metrics come from the
/// sample-mode cells; in class mode an `Original (class)` reference row
/// shows the untouched model on the class partition.
pub fn task_report(rows: &[ResultRow], task: Task) -> Result<Report> {
    let records: Vec<RunRecord> = rows
        .iter()
        .filter(|r| r.task == task)
        .filter_map(|r| {
            let m = r.outcome.as_ref().ok()?;
            Some(RunRecord {
                section: r.section,
                method: r.display_name(),
                metrics: SeedMetrics {
                    seed: r.seed,
                    acc_test: m.acc_test,
                    acc_forget: m.acc_forget,
                    acc_retain: m.acc_retain,
                    mia: m.mia,
                    wall_time: r.wall_time,
                    acc_forget_test: m.acc_forget_test,
                },
            })
        })
        .collect();
    assemble_report(&records)
}

fn task_title(task: Task) -> &'static str {
    match task {
        Task::Keyword => "Keyword spotting",
        Task::Speaker => "Speaker identification",
    }
}

/// Writes `report.md` and `report_<task>.csv` for every task present.
pub fn write_reports(cfg: &ExperimentConfig, rows: &[ResultRow], out: &Path) -> Result<()> {
    let mut md = String::from("# Unlearning benchmark\n\n");
    for &task in &cfg.tasks {
        if !rows.iter().any(|r| r.task == task && r.is_ok()) {
            writeln!(md, "## {}\n\nNo successful runs.\n", task_title(task)).unwrap();
            continue;
        }
        let report = task_report(rows, task)?;
        let classes = match task {
            Task::Keyword => cfg.gen.num_keywords,
            Task::Speaker => cfg.gen.num_speakers,
        };
        md.push_str(&report.to_markdown(task_title(task), classes));
        md.push('\n');
        let path = out.join(format!("report_{task}.csv"));
        std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    let failed: Vec<&ResultRow> = rows.iter().filter(|r| !r.is_ok()).collect();
    if !failed.is_empty() {
        writeln!(md, "## Failed runs\n").unwrap();
        for r in failed {
            let reason = r.outcome.as_ref().err().map(String::as_str).unwrap_or("");
            writeln!(md, "- {} {} {} seed {} {}: {reason}", r.task, r.section.name(), r.forget, r.seed, r.method).unwrap();
        }
    }
    let path = out.join("report.md");
    std::fs::write(&path, md).map_err(|e| Error::io(&path, e))
}

/// Rebuilds the reports of an existing output directory from its
/// `config.txt`, `results.csv` and `timings.csv`.
pub fn cmd_report(out: &Path) -> Result<Vec<ResultRow>> {
    let read = |name: &str| {
        let path = out.join(name);
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    };
    let cfg = parse_config(&read("config.txt")?)?;
    let rows = parse_results(&read("results.csv")?, &read("timings.csv")?)?;
    write_reports(&cfg, &rows, out)?;
    Ok(rows)
}

/// The split and original model of one (task, seed).
#[derive(Clone, Debug)]
pub struct Original {
    pub task: Task,
    pub seed: u64,
    pub data: TaskData,
    pub split: Partition,
    pub model: Model,
    pub train_seconds: f64,
}

pub fn train_original(cfg: &ExperimentConfig, corpus: &Corpus, task: Task, seed: u64) -> Result<Original> {
    let data = corpus.task_data(task)?;
    let split = split(corpus, task, cfg.test_fraction, seed)?;
    let start = Instant::now();
    let model = train(&data, &split, &cfg.train, seed)?;
    Ok(Original {
        task,
        seed,
        data,
        split,
        model,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

fn method_file_tag(method: &str) -> String {
    method.replace('+', "_")
}

fn stage<'a>(cfg: &'a ExperimentConfig, stage: &'static str) -> impl Fn(Error) -> Error + 'a {
    move |e| Error::Stage {
        stage,
        config: cfg.to_text(),
        source: Box::new(e),
    }
}

fn create_dirs(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut dirs = vec![out.to_path_buf(), out.join("traces")];
    if cfg.save_checkpoints {
        dirs.push(out.join("checkpoints"));
    }
    for d in dirs {
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    Ok(())
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs `f`, turning both errors and panics into an error message.
fn isolated<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(payload) => Err(format!("panicked: {}", panic_message(payload))),
    }
}

struct CellContext<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    original: &'a Original,
    mode: ForgetMode,
    methods: &'a [MethodSpec],
}

impl CellContext<'_> {
    fn stem(&self, method: &str) -> String {
        format!(
            "{}_{}_s{}_{}",
            self.original.task,
            self.mode.file_tag(),
            self.original.seed,
            method_file_tag(method)
        )
    }

    fn row(&self, section: Section, method: String, outcome: std::result::Result<CellMetrics, String>) -> ResultRow {
        ResultRow {
            task: self.original.task,
            section,
            forget: self.mode.param(),
            seed: self.original.seed,
            method,
            outcome,
            wall_time: f64::NAN,
            budget: None,
            epochs_run: 0,
            stopped_by_budget: false,
        }
    }

    fn persist(&self, method: &str, result: &UnlearnResult) -> Result<()> {
        let stem = self.stem(method);
        result.write_trace(&self.out.join("traces").join(format!("{stem}.tsv")))?;
        if self.cfg.save_checkpoints {
            write_checkpoint(&result.model, &self.out.join("checkpoints").join(format!("{stem}.ckpt")))?;
        }
        Ok(())
    }

    /// Rows for the Original reference and every method on this cell.
    fn run(&self) -> Vec<ResultRow> {
        let o = self.original;
        let original_section = match self.mode {
            ForgetMode::Ratio(_) => Section::Original,
            ForgetMode::Class(_) => Section::Class,
        };
        let partition = match isolated(|| select_forget(&o.split, &self.mode.forget_spec(o.seed), &o.data.labels)) {
            Ok(p) => p,
            Err(e) => {
                let mut rows = vec![self.row(original_section, "original".into(), Err(e.clone()))];
                rows.extend(self.methods.iter().map(|m| self.row(self.mode.section(), m.to_string(), Err(e.clone()))));
                return rows;
            }
        };

        let mut original_row = self.row(
            original_section,
            "original".into(),
            isolated(|| evaluate(&o.model, &o.data, &partition)),
        );
        original_row.wall_time = o.train_seconds;
        original_row.epochs_run = self.cfg.train.epochs;
        let mut rows = vec![original_row];

        // the retrain oracle both sets the budget and provides its own row
        let oracle = isolated(|| retrain_oracle(&o.data, &partition, &self.cfg.train, o.seed));
        let budget = oracle.as_ref().ok().map(|r| r.wall_time_seconds);

        for &spec in self.methods {
            let tag = spec.to_string();
            let mut row = self.row(self.mode.section(), tag.clone(), Err(String::new()));
            let result = if spec.method == Method::Retrain {
                oracle.clone()
            } else {
                let mut ucfg = UnlearnConfig {
                    method: spec.method,
                    superloss_enabled: spec.superloss,
                    seed: o.seed,
                    ..self.cfg.unlearn.clone()
                };
                if let (true, Some(b)) = (self.cfg.time_budget, budget) {
                    ucfg.time_budget_seconds = b;
                }
                isolated(|| run_unlearn(&o.model, &o.data, &partition, &ucfg))
            };
            row.budget = budget;
            row.outcome = result.and_then(|r| {
                row.wall_time = r.wall_time_seconds;
                row.epochs_run = r.epochs_run;
                row.stopped_by_budget = r.stopped_by_budget;
                isolated(|| {
                    self.persist(&tag, &r)?;
                    evaluate(&r.model, &o.data, &partition)
                })
            });
            rows.push(row);
        }
        rows
    }
}

/// Outcome of a bench run.
#[derive(Debug)]
pub struct BenchSummary {
    pub rows: Vec<ResultRow>,
    pub out: PathBuf,
}

impl BenchSummary {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

fn sort_rows(cfg: &ExperimentConfig, rows: &mut [ResultRow]) {
    let methods: Vec<String> = cfg.effective_methods().iter().map(|m| m.to_string()).collect();
    let ratios: Vec<String> = cfg.effective_ratios().iter().map(|&r| ForgetMode::Ratio(r).param()).collect();
    let classes: Vec<String> = cfg.forget_classes.iter().map(|c| c.to_string()).collect();
    let pos = |list: &[String], v: &str| list.iter().position(|x| x == v).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| {
        let method = if r.method == "original" { 0 } else { 1 + pos(&methods, &r.method) };
        let forget = match r.section {
            Section::Class => pos(&classes, &r.forget),
            _ => pos(&ratios, &r.forget),
        };
        (
            cfg.tasks.iter().position(|&t| t == r.task),
            r.section,
            method,
            forget,
            cfg.seeds.iter().position(|&s| s == r.seed),
        )
    });
}

/// Full sweep: for each task and seed, split and train the original model;
/// then, for every forget setting, run the retrain oracle (which sets the
/// time budget) and every configured method, evaluating each result.
/// Failed cells become failed rows; failures before the sweep abort with
/// the stage name.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<BenchSummary> {
    let out = cfg.out.clone();
    create_dirs(cfg, &out).map_err(stage(cfg, "setup"))?;
    let config_path = out.join("config.txt");
    std::fs::write(&config_path, cfg.to_text()).map_err(|e| stage(cfg, "setup")(Error::io(&config_path, e)))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| stage(cfg, "setup")(Error::invalid("workers", e.to_string())))?;
    let corpus = generate(&cfg.gen).map_err(stage(cfg, "generate"))?;

    let jobs: Vec<(Task, u64)> = cfg
        .tasks
        .iter()
        .flat_map(|&t| cfg.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let originals: Vec<Original> = pool
        .install(|| {
            jobs.par_iter()
                .map(|&(task, seed)| train_original(cfg, &corpus, task, seed))
                .collect::<Result<Vec<_>>>()
        })
        .map_err(stage(cfg, "train"))?;
    if cfg.save_checkpoints {
        for o in &originals {
            let path = out.join("checkpoints").join(format!("{}_s{}_original.ckpt", o.task, o.seed));
            write_checkpoint(&o.model, &path).map_err(stage(cfg, "train"))?;
        }
    }

    let modes: Vec<ForgetMode> = cfg
        .effective_ratios()
        .into_iter()
        .map(ForgetMode::Ratio)
        .chain(cfg.forget_classes.iter().map(|&c| ForgetMode::Class(c)))
        .collect();
    let methods = cfg.effective_methods();
    let cells: Vec<CellContext> = originals
        .iter()
        .flat_map(|o| {
            modes.iter().map(|&mode| CellContext {
                cfg,
                out: &out,
                original: o,
                mode,
                methods: &methods,
            })
        })
        .collect();
    let mut rows: Vec<ResultRow> = pool.install(|| cells.par_iter().flat_map_iter(|c| c.run()).collect());
    sort_rows(cfg, &mut rows);

    let write = |name: &str, text: String| {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("results.csv", results_csv(&rows)).map_err(stage(cfg, "report"))?;
    write("timings.csv", timings_csv(&rows)).map_err(stage(cfg, "report"))?;
    write_reports(cfg, &rows, &out).map_err(stage(cfg, "report"))?;
    Ok(BenchSummary { rows, out })
}

/// Files and metrics of a single run.
#[derive(Debug)]
pub struct SingleOutcome {
    pub original: CellMetrics,
    pub unlearned: CellMetrics,
    pub result: UnlearnResult,
    pub original_checkpoint: PathBuf,
    pub unlearned_checkpoint: PathBuf,
    pub trace: PathBuf,
}

/// One train, one unlearning run and one evaluation, persisting f, f' and
/// the epoch trace under `cfg.out`. The retrain oracle is run first to set
/// the time budget when `time_budget` is on.
pub fn cmd_single(cfg: &ExperimentConfig, task: Task, seed: u64, mode: ForgetMode, method: MethodSpec) -> Result<SingleOutcome> {
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let corpus = generate(&cfg.gen).map_err(stage(cfg, "generate"))?;
    let o = train_original(cfg, &corpus, task, seed).map_err(stage(cfg, "train"))?;
    let partition = select_forget(&o.split, &mode.forget_spec(seed), &o.data.labels).map_err(stage(cfg, "select_forget"))?;

    let mut ucfg = UnlearnConfig {
        method: method.method,
        superloss_enabled: method.superloss,
        seed,
        ..cfg.unlearn.clone()
    };
    if cfg.time_budget && method.method != Method::Retrain && !partition.forget_ids.is_empty() {
        let oracle = retrain_oracle(&o.data, &partition, &cfg.train, seed).map_err(stage(cfg, "retrain_oracle"))?;
        ucfg.time_budget_seconds = oracle.wall_time_seconds;
    }
    let result = run_unlearn(&o.model, &o.data, &partition, &ucfg).map_err(stage(cfg, "unlearn"))?;

    let stem = format!("{task}_{}_s{seed}", mode.file_tag());
    let original_checkpoint = out.join(format!("{task}_s{seed}_original.ckpt"));
    let unlearned_checkpoint = out.join(format!("{stem}_{}.ckpt", method_file_tag(&method.to_string())));
    let trace = out.join(format!("{stem}_{}.tsv", method_file_tag(&method.to_string())));
    write_checkpoint(&o.model, &original_checkpoint)?;
    write_checkpoint(&result.model, &unlearned_checkpoint)?;
    result.write_trace(&trace)?;

    let evaluate_stage = stage(cfg, "evaluate");
    Ok(SingleOutcome {
        original: evaluate(&o.model, &o.data, &partition).map_err(&evaluate_stage)?,
        unlearned: evaluate(&result.model, &o.data, &partition).map_err(&evaluate_stage)?,
        result,
        original_checkpoint,
        unlearned_checkpoint,
        trace,
    })
}
