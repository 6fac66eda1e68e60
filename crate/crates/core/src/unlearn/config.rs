use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnkit::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    GradAscent,
    RandLabel,
    SalUn,
    Scrub,
    BadT,
    Retrain,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GradAscent,
        Method::RandLabel,
        Method::SalUn,
        Method::Scrub,
        Method::BadT,
        Method::Retrain,
    ];

    /// Config / CLI tag.
    pub fn tag(self) -> &'static str {
        match self {
            Method::GradAscent => "grad_ascent",
            Method::RandLabel => "rand_label",
            Method::SalUn => "salun",
            Method::Scrub => "scrub",
            Method::BadT => "bad_t",
            Method::Retrain => "retrain",
        }
    }

    /// Row label used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::GradAscent => "GradAscent",
            Method::RandLabel => "RandLabel",
            Method::SalUn => "SalUn",
            Method::Scrub => "SCRUB",
            Method::BadT => "Bad-T",
            Method::Retrain => "Retrain",
        }
    }

    /// Weight of the retaining term in `L_f(D_f) + λ·L_r(D_r)`. Fixed for
    /// every method except SCRUB, whose λ weighs the embedding penalty.
    pub fn retain_weight(self, configured: f64) -> f64 {
        match self {
            Method::GradAscent => 0.0,
            Method::RandLabel | Method::SalUn | Method::BadT | Method::Retrain => 1.0,
            Method::Scrub => configured,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A method, optionally wrapped in SuperLoss re-weighting. Parsed from
/// `<tag>` or `<tag>+sl`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodSpec {
    pub method: Method,
    pub superloss: bool,
}

impl MethodSpec {
    pub fn plain(method: Method) -> Self {
        Self {
            method,
            superloss: false,
        }
    }

    pub fn display_name(&self) -> String {
        if self.superloss {
            format!("{}+SuperLoss", self.method.display_name())
        } else {
            self.method.display_name().to_string()
        }
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_suffix("+sl") {
            Some(base) => {
                let method: Method = base.parse().map_err(|_| Error::UnknownMethod(s.to_string()))?;
                if method == Method::Retrain {
                    return Err(Error::UnknownMethod(s.to_string()));
                }
                Ok(Self {
                    method,
                    superloss: true,
                })
            }
            None => Ok(Self::plain(s.parse()?)),
        }
    }
}

impl std::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.method.tag())?;
        if self.superloss {
            f.write_str("+sl")?;
        }
        Ok(())
    }
}

/// Architecture and optimizer settings for training from scratch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub hidden_dims: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 32],
            lr: 0.05,
            epochs: 30,
            batch_size: 32,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden_dims", "widths must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("train_lr", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train_batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnConfig {
    pub method: Method,
    /// Trade-off λ. Only SCRUB reads it (as the embedding-penalty weight);
    /// the other methods use their fixed value, see [`Method::retain_weight`].
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of parameters SalUn may update.
    pub gamma: f64,
    pub superloss_enabled: bool,
    /// SuperLoss regularizer on `(log σ)²`.
    pub sl_lambda: f64,
    /// EMA factor for the SuperLoss threshold τ.
    pub sl_ema: f64,
    pub seed: u64,
    /// Epochs stop once the next one is predicted to overrun this.
    pub time_budget_seconds: f64,
    /// Used by [`Method::Retrain`].
    pub retrain: TrainSettings,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self {
            method: Method::GradAscent,
            lambda: 1.0,
            lr: 0.1,
            epochs: 10,
            batch_size: 32,
            gamma: 0.5,
            superloss_enabled: false,
            sl_lambda: 20.0,
            sl_ema: 0.9,
            seed: 0,
            time_budget_seconds: f64::INFINITY,
            retrain: TrainSettings::default(),
        }
    }
}

impl UnlearnConfig {
    pub fn for_method(spec: MethodSpec) -> Self {
        Self {
            method: spec.method,
            superloss_enabled: spec.superloss,
            ..Self::default()
        }
    }

    pub fn method_spec(&self) -> MethodSpec {
        MethodSpec {
            method: self.method,
            superloss: self.superloss_enabled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and non-negative"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma", format!("{} is outside [0, 1]", self.gamma)));
        }
        if !(self.sl_lambda > 0.0 && self.sl_lambda.is_finite()) {
            return Err(Error::invalid("sl_lambda", "must be positive"));
        }
        if !(self.sl_ema > 0.0 && self.sl_ema <= 1.0) {
            return Err(Error::invalid("sl_ema", format!("{} is outside (0, 1]", self.sl_ema)));
        }
        if !(self.time_budget_seconds > 0.0) {
            return Err(Error::invalid("time_budget_seconds", "must be positive"));
        }
        self.retrain.validate()
    }
}

/// Objective terms of one epoch, evaluated on the full subsets after the
/// epoch's last update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Forgetting term on D_f (cross-entropy; corrupted labels for the
    /// random-label methods; KL to the incompetent teacher for Bad-T).
    pub loss_forget: f64,
    /// Retaining term on D_r (cross-entropy, plus λ × embedding distance in
    /// SCRUB's repair phase; KL to the original model for Bad-T).
    pub loss_retain: f64,
    /// SCRUB repair phase only: mean squared embedding distance on D_r.
    pub embedding_distance: Option<f64>,
}

/// How many sample rows fed gradients from each subset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GradientUsage {
    pub forget_rows: usize,
    pub retain_rows: usize,
}

#[derive(Clone, Debug)]
pub struct UnlearnResult {
    /// f'
    pub model: Model,
    pub epochs_run: usize,
    pub wall_time_seconds: f64,
    pub trace: Vec<EpochTrace>,
    pub usage: GradientUsage,
    pub stopped_by_budget: bool,
    pub warning: Option<String>,
}

impl UnlearnResult {
    /// Trace as tab-separated text: header `epoch loss_Df loss_Dr`, one row per epoch.
    pub fn trace_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss_Df\tloss_Dr\n");
        for t in &self.trace {
            writeln!(out, "{}\t{}\t{}", t.epoch, t.loss_forget, t.loss_retain).unwrap();
        }
        out
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.trace_tsv()).map_err(|e| Error::io(path, e))
    }
}
