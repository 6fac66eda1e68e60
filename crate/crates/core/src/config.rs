//! Experiment configuration: a line-based `key = value` file.
//!
//! `#` starts a comment. Values are integers, reals, `true`/`false`, bare
//! strings or comma-separated lists (optionally wrapped in brackets).
//! Forget ratios also accept a percent suffix (`5%`). Absent keys take the
//! defaults listed in [`KEYS`]; unknown keys, duplicates, type mismatches
//! and constraint violations are rejected with the offending line.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::speechgen::{GenSpec, Task, MAX_FORGET_RATIO};
use crate::unlearn::{Method, MethodSpec, TrainSettings, UnlearnConfig};

/// Every recognized key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("num_keywords", "12", "keyword classes K"),
    ("num_speakers", "20", "speaker classes S"),
    ("frames", "10", "frames per utterance T"),
    ("feature_dim", "32", "features per frame d"),
    ("samples_per_class", "50", "utterances per keyword"),
    ("noise_sigma", "0.75", "Gaussian frame noise"),
    ("keyword_scale", "1.0", "keyword template scale"),
    ("speaker_scale", "0.35", "speaker offset scale"),
    ("corpus_seed", "0", "corpus generator seed"),
    ("test_fraction", "0.2", "held-out fraction per class"),
    ("hidden_dims", "64, 32", "hidden layer widths"),
    ("train_lr", "0.05", "learning rate for f and the retrain oracle"),
    ("train_epochs", "30", "epochs for f and the retrain oracle"),
    ("train_batch_size", "32", "minibatch size for f and the retrain oracle"),
    ("lambda", "1.0", "trade-off weight (read by scrub only)"),
    ("lr", "0.1", "unlearning learning rate"),
    ("epochs", "10", "unlearning epochs"),
    ("batch_size", "32", "unlearning minibatch size"),
    ("gamma", "0.5", "salun saliency fraction in [0, 1]"),
    ("superloss", "false", "also run `sl_base` wrapped in SuperLoss"),
    ("sl_base", "grad_ascent", "base method for the SuperLoss wrapper"),
    ("sl_lambda", "20.0", "SuperLoss regularizer"),
    ("sl_ema", "0.9", "SuperLoss threshold EMA factor in (0, 1]"),
    ("time_budget", "true", "cap each method at the retrain oracle's wall time"),
    ("tasks", "keyword, speaker", "tasks to run"),
    ("methods", "grad_ascent, rand_label, salun, scrub, bad_t, retrain", "methods (`+sl` suffix for SuperLoss)"),
    ("forget_ratios", "0.01, 0.05, 0.10", "sample-mode forget ratios (empty disables)"),
    ("full_sweep", "false", "use ratios 1%..10% in 1% steps"),
    ("forget_classes", "0", "class-mode targets (empty disables)"),
    ("seeds", "0, 1, 2, 3, 4", "run seeds"),
    ("workers", "1", "parallel sweep workers"),
    ("save_checkpoints", "true", "write checkpoints/*.ckpt"),
    ("out", "results", "output directory"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub gen: GenSpec,
    pub test_fraction: f64,
    pub train: TrainSettings,
    /// Unlearning hyperparameters shared by all methods; `method` and
    /// `seed` are set per run.
    pub unlearn: UnlearnConfig,
    pub superloss: bool,
    pub sl_base: Method,
    pub time_budget: bool,
    pub tasks: Vec<Task>,
    pub methods: Vec<MethodSpec>,
    pub forget_ratios: Vec<f64>,
    pub full_sweep: bool,
    pub forget_classes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub save_checkpoints: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Methods to run: the configured list plus the SuperLoss variant of
    /// `sl_base` when `superloss` is set.
    pub fn effective_methods(&self) -> Vec<MethodSpec> {
        let mut methods = self.methods.clone();
        let wrapped = MethodSpec {
            method: self.sl_base,
            superloss: true,
        };
        if self.superloss && !methods.contains(&wrapped) {
            methods.push(wrapped);
        }
        methods
    }

    pub fn effective_ratios(&self) -> Vec<f64> {
        if self.full_sweep {
            (1..=10).map(|i| i as f64 / 100.0).collect()
        } else {
            self.forget_ratios.clone()
        }
    }

    /// Renders every key, so that parsing the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let g = &self.gen;
        let u = &self.unlearn;
        let values: Vec<(&str, String)> = vec![
            ("num_keywords", g.num_keywords.to_string()),
            ("num_speakers", g.num_speakers.to_string()),
            ("frames", g.frames.to_string()),
            ("feature_dim", g.feature_dim.to_string()),
            ("samples_per_class", g.samples_per_class.to_string()),
            ("noise_sigma", format!("{:?}", g.noise_sigma)),
            ("keyword_scale", format!("{:?}", g.keyword_scale)),
            ("speaker_scale", format!("{:?}", g.speaker_scale)),
            ("corpus_seed", g.seed.to_string()),
            ("test_fraction", format!("{:?}", self.test_fraction)),
            ("hidden_dims", join(self.train.hidden_dims.iter().map(|d| d.to_string()).collect())),
            ("train_lr", format!("{:?}", self.train.lr)),
            ("train_epochs", self.train.epochs.to_string()),
            ("train_batch_size", self.train.batch_size.to_string()),
            ("lambda", format!("{:?}", u.lambda)),
            ("lr", format!("{:?}", u.lr)),
            ("epochs", u.epochs.to_string()),
            ("batch_size", u.batch_size.to_string()),
            ("gamma", format!("{:?}", u.gamma)),
            ("superloss", self.superloss.to_string()),
            ("sl_base", self.sl_base.tag().to_string()),
            ("sl_lambda", format!("{:?}", u.sl_lambda)),
            ("sl_ema", format!("{:?}", u.sl_ema)),
            ("time_budget", self.time_budget.to_string()),
            ("tasks", join(self.tasks.iter().map(|t| t.name().to_string()).collect())),
            ("methods", join(self.methods.iter().map(|m| m.to_string()).collect())),
            ("forget_ratios", join(self.forget_ratios.iter().map(|r| format!("{r:?}")).collect())),
            ("full_sweep", self.full_sweep.to_string()),
            ("forget_classes", join(self.forget_classes.iter().map(|c| c.to_string()).collect())),
            ("seeds", join(self.seeds.iter().map(|s| s.to_string()).collect())),
            ("workers", self.workers.to_string()),
            ("save_checkpoints", self.save_checkpoints.to_string()),
            ("out", self.out.display().to_string()),
        ];
        let mut text = String::new();
        for (k, v) in values {
            writeln!(text, "{k} = {v}").unwrap();
        }
        text
    }
}

/// Help text listing every key and its default.
pub fn defaults_help() -> String {
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    // Long lists overflow the column rather than widening every line.
    let value_width = KEYS.iter().map(|k| k.1.len()).filter(|&n| n <= 20).max().unwrap_or(0);
    let mut out = String::from("Config keys (key = value; defaults shown):\n");
    for (key, default, doc) in KEYS {
        writeln!(out, "  {key:<width$} = {default:<value_width$}  # {doc}").unwrap();
    }
    out
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            key: self.key.to_string(),
            reason: reason.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, what: &str) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("expected {what}, got `{}`", self.value)))
    }

    fn usize(&self) -> Result<usize> {
        self.parse("a non-negative integer")
    }

    fn u64(&self) -> Result<u64> {
        self.parse("a non-negative integer")
    }

    fn real(&self) -> Result<f64> {
        let v: f64 = self.parse("a real number")?;
        if !v.is_finite() {
            return Err(self.err("must be finite"));
        }
        Ok(v)
    }

    fn bool(&self) -> Result<bool> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(self.err(format!("expected true or false, got `{v}`"))),
        }
    }

    fn items(&self) -> Vec<&str> {
        let inner = self
            .value
            .strip_prefix('[')
            .and_then(|v| v.strip_suffix(']'))
            .unwrap_or(self.value);
        inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    }

    fn list<T>(&self, mut f: impl FnMut(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
        self.items()
            .into_iter()
            .map(|item| f(item).ok_or_else(|| self.err(format!("expected a list of {what}, got `{item}`"))))
            .collect()
    }

    fn check(&self, ok: bool, reason: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.err(reason))
        }
    }
}

fn parse_ratio(item: &str) -> Option<f64> {
    match item.strip_suffix('%') {
        Some(p) => p.trim().parse::<f64>().ok().map(|v| v / 100.0),
        None => item.parse().ok(),
    }
}

/// Parses and validates a config file. The empty string yields the
/// defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            key: content.to_string(),
            reason: "expected `key = value`".into(),
        })?;
        let entry = Entry {
            line,
            key: key.trim(),
            value: value.trim(),
        };
        if !KEYS.iter().any(|k| k.0 == entry.key) {
            return Err(entry.err("unknown key"));
        }
        if let Some(first) = seen.insert(entry.key, line) {
            return Err(entry.err(format!("duplicate key (first set on line {first})")));
        }
        entries.push(entry);
    }

    let defaults: Vec<Entry> = KEYS
        .iter()
        .filter(|k| !seen.contains_key(k.0))
        .map(|&(key, value, _)| Entry { line: 0, key, value })
        .collect();

    let mut gen = GenSpec::default();
    let mut train = TrainSettings::default();
    let mut unlearn = UnlearnConfig::default();
    let mut cfg = ExperimentConfig {
        gen: GenSpec::default(),
        test_fraction: 0.2,
        train: TrainSettings::default(),
        unlearn: UnlearnConfig::default(),
        superloss: false,
        sl_base: Method::GradAscent,
        time_budget: true,
        tasks: Vec::new(),
        methods: Vec::new(),
        forget_ratios: Vec::new(),
        full_sweep: false,
        forget_classes: Vec::new(),
        seeds: Vec::new(),
        workers: 1,
        save_checkpoints: true,
        out: PathBuf::new(),
    };
    let mut line_of: HashMap<&str, usize> = HashMap::new();

    for e in defaults.iter().chain(&entries) {
        line_of.insert(e.key, e.line);
        match e.key {
            "num_keywords" => gen.num_keywords = e.usize()?,
            "num_speakers" => gen.num_speakers = e.usize()?,
            "frames" => gen.frames = e.usize()?,
            "feature_dim" => gen.feature_dim = e.usize()?,
            "samples_per_class" => gen.samples_per_class = e.usize()?,
            "noise_sigma" => {
                gen.noise_sigma = e.real()?;
                e.check(gen.noise_sigma >= 0.0, "must be non-negative")?;
            }
            "keyword_scale" => {
                gen.keyword_scale = e.real()?;
                e.check(gen.keyword_scale > 0.0, "must be positive")?;
            }
            "speaker_scale" => {
                gen.speaker_scale = e.real()?;
                e.check(gen.speaker_scale > 0.0, "must be positive")?;
            }
            "corpus_seed" => gen.seed = e.u64()?,
            "test_fraction" => {
                cfg.test_fraction = e.real()?;
                e.check(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0, "must be in (0, 1)")?;
            }
            "hidden_dims" => {
                train.hidden_dims = e.list(|s| s.parse().ok(), "integers")?;
                e.check(!train.hidden_dims.contains(&0), "widths must be at least 1")?;
            }
            "train_lr" => {
                train.lr = e.real()?;
                e.check(train.lr > 0.0, "must be positive")?;
            }
            "train_epochs" => train.epochs = e.usize()?,
            "train_batch_size" => {
                train.batch_size = e.usize()?;
                e.check(train.batch_size > 0, "must be at least 1")?;
            }
            "lambda" => {
                unlearn.lambda = e.real()?;
                e.check(unlearn.lambda >= 0.0, "must be non-negative")?;
            }
            "lr" => {
                unlearn.lr = e.real()?;
                e.check(unlearn.lr > 0.0, "must be positive")?;
            }
            "epochs" => unlearn.epochs = e.usize()?,
            "batch_size" => {
                unlearn.batch_size = e.usize()?;
                e.check(unlearn.batch_size > 0, "must be at least 1")?;
            }
            "gamma" => {
                unlearn.gamma = e.real()?;
                e.check((0.0..=1.0).contains(&unlearn.gamma), "must be in [0, 1]")?;
            }
            "superloss" => cfg.superloss = e.bool()?,
            "sl_base" => {
                cfg.sl_base = e.value.parse().map_err(|err: Error| e.err(err.to_string()))?;
                e.check(cfg.sl_base != Method::Retrain, "retrain cannot be wrapped")?;
            }
            "sl_lambda" => {
                unlearn.sl_lambda = e.real()?;
                e.check(unlearn.sl_lambda > 0.0, "must be positive")?;
            }
            "sl_ema" => {
                unlearn.sl_ema = e.real()?;
                e.check(unlearn.sl_ema > 0.0 && unlearn.sl_ema <= 1.0, "must be in (0, 1]")?;
            }
            "time_budget" => cfg.time_budget = e.bool()?,
            "tasks" => {
                cfg.tasks = e.list(|s| s.parse().ok(), "tasks (keyword, speaker)")?;
                e.check(!cfg.tasks.is_empty(), "at least one task is required")?;
            }
            "methods" => {
                cfg.methods = Vec::new();
                for item in e.items() {
                    let m: MethodSpec = item.parse().map_err(|err: Error| e.err(err.to_string()))?;
                    e.check(!cfg.methods.contains(&m), "method listed twice")?;
                    cfg.methods.push(m);
                }
            }
            "forget_ratios" => {
                cfg.forget_ratios = e.list(parse_ratio, "ratios")?;
                e.check(
                    cfg.forget_ratios.iter().all(|r| *r > 0.0 && *r <= MAX_FORGET_RATIO + 1e-12),
                    "ratios must be in (0, 0.10]",
                )?;
            }
            "full_sweep" => cfg.full_sweep = e.bool()?,
            "forget_classes" => cfg.forget_classes = e.list(|s| s.parse().ok(), "class indices")?,
            "seeds" => {
                cfg.seeds = e.list(|s| s.parse().ok(), "integers")?;
                e.check(!cfg.seeds.is_empty(), "at least one seed is required")?;
            }
            "workers" => {
                cfg.workers = e.usize()?;
                e.check(cfg.workers > 0, "must be at least 1")?;
            }
            "save_checkpoints" => cfg.save_checkpoints = e.bool()?,
            "out" => {
                e.check(!e.value.is_empty(), "must not be empty")?;
                cfg.out = PathBuf::from(e.value);
            }
            other => unreachable!("key `{other}` is listed in KEYS but not handled"),
        }
    }

    let cross = |key: &str, reason: String| Error::Config {
        line: line_of.get(key).copied().unwrap_or(0),
        key: key.to_string(),
        reason,
    };
    for (key, v) in [
        ("num_keywords", gen.num_keywords),
        ("num_speakers", gen.num_speakers),
        ("frames", gen.frames),
        ("feature_dim", gen.feature_dim),
        ("samples_per_class", gen.samples_per_class),
    ] {
        if v == 0 {
            return Err(cross(key, "must be at least 1".into()));
        }
    }
    for &c in &cfg.forget_classes {
        for &task in &cfg.tasks {
            let k = match task {
                Task::Keyword => gen.num_keywords,
                Task::Speaker => gen.num_speakers,
            };
            if c >= k {
                return Err(cross(
                    "forget_classes",
                    format!("class {c} does not exist for the {task} task ({k} classes)"),
                ));
            }
        }
    }
    if cfg.methods.is_empty() && !cfg.superloss {
        return Err(cross("methods", "no methods to run".into()));
    }
    unlearn.retrain = train.clone();
    cfg.gen = gen;
    cfg.train = train;
    cfg.unlearn = unlearn;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_of(text: &str) -> (usize, String) {
        match parse_config(text) {
            Err(Error::Config { line, key, .. }) => (line, key),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_documented_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.gen, GenSpec::default());
        assert_eq!(cfg.train, TrainSettings::default());
        assert_eq!(cfg.unlearn, UnlearnConfig::default());
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.effective_ratios(), vec![0.01, 0.05, 0.10]);
        assert_eq!(cfg.methods.len(), 6);
        assert_eq!(cfg.tasks, vec![Task::Keyword, Task::Speaker]);
    }

    #[test]
    fn values_and_comments() {
        let cfg = parse_config(
            "# sweep\nepochs = 30\nseeds = [1]\nmethods = grad_ascent, salun+sl  # trailing\nforget_ratios = 5%\n",
        )
        .unwrap();
        assert_eq!(cfg.unlearn.epochs, 30);
        assert_eq!(cfg.seeds, vec![1]);
        assert_eq!(cfg.methods[1], "salun+sl".parse().unwrap());
        assert_eq!(cfg.forget_ratios, vec![0.05]);
    }

    #[test]
    fn errors_name_key_and_line() {
        assert_eq!(err_of("epochs = 3\ngamma = 1.5"), (2, "gamma".into()));
        assert_eq!(err_of("\n\nlearning_rate = 0.1"), (3, "learning_rate".into()));
        assert_eq!(err_of("epochs = many"), (1, "epochs".into()));
        assert_eq!(err_of("superloss = yes"), (1, "superloss".into()));
        assert_eq!(err_of("methods = foo"), (1, "methods".into()));
        assert_eq!(err_of("forget_ratios = 0.2"), (1, "forget_ratios".into()));
        assert_eq!(err_of("lr = 1\nlr = 2"), (2, "lr".into()));
        assert_eq!(err_of("num_keywords = 4\nforget_classes = 7\ntasks = keyword"), (2, "forget_classes".into()));
        assert_eq!(err_of("just words"), (1, "just words".into()));
    }

    #[test]
    fn full_sweep_and_superloss() {
        let cfg = parse_config("full_sweep = true\nsuperloss = true").unwrap();
        assert_eq!(cfg.effective_ratios().len(), 10);
        assert!((cfg.effective_ratios()[9] - 0.10).abs() < 1e-15);
        let methods = cfg.effective_methods();
        assert_eq!(methods.len(), 7);
        assert_eq!(methods[6].to_string(), "grad_ascent+sl");
    }

    #[test]
    fn text_round_trip() {
        let cfg = parse_config("noise_sigma = 0.3\nmethods = bad_t, scrub+sl\nforget_classes =\nseeds = 9, 4").unwrap();
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(parse_config(&ExperimentConfig::default().to_text()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn help_lists_every_key() {
        let help = defaults_help();
        for (k, _, _) in KEYS {
            assert!(help.contains(k));
        }
    }
}
