use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::arms::{EnvKind, RecoveringClass};
use crate::baselines::DEFAULT_BEAM_WIDTH;
use crate::error::{Error, Result};
use crate::training::TrainingConfig;

/// Keys accepted in a config file, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "env",
    "class",
    "good_prob",
    "n",
    "m",
    "runs",
    "horizon",
    "discount",
    "seed",
    "policy",
    "episodes",
    "learning_rate",
    "lr_decay",
    "sigmoid_m",
    "batch_size",
    "checkpoint_interval",
    "hidden",
    "noise_levels",
    "lambda_min",
    "lambda_max",
    "lambda_step",
    "tol",
    "beam_width",
    "qwic_episodes",
    "qwic_candidates",
];

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    WhittleOracle,
    SizeAware,
    Lookahead { depth: usize, beam_width: Option<usize> },
    Qwic,
    /// One checkpoint per arm type, or a single one shared by all arms.
    NeurWin { checkpoints: Vec<PathBuf> },
}

impl PolicySpec {
    pub fn default_for(env: EnvKind) -> Self {
        match env {
            EnvKind::Deadline => Self::WhittleOracle,
            EnvKind::Recovering => Self::Lookahead {
                depth: 1,
                beam_width: None,
            },
            EnvKind::Wireless => Self::SizeAware,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WhittleOracle => f.write_str("whittle-oracle"),
            Self::SizeAware => f.write_str("size-aware"),
            Self::Lookahead { depth, beam_width: None } => write!(f, "lookahead:d={depth}"),
            Self::Lookahead {
                depth,
                beam_width: Some(w),
            } => write!(f, "lookahead:d={depth},beam={w}"),
            Self::Qwic => f.write_str("qwic"),
            Self::NeurWin { checkpoints } => {
                let paths: Vec<String> = checkpoints.iter().map(|p| p.display().to_string()).collect();
                write!(f, "neurwin:ckpt={}", paths.join(","))
            }
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown policy '{s}'"));
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (name, args) {
            ("whittle-oracle", None) => Ok(Self::WhittleOracle),
            ("size-aware", None) => Ok(Self::SizeAware),
            ("qwic", None) => Ok(Self::Qwic),
            ("lookahead", args) => {
                let mut depth = None;
                let mut beam_width = None;
                for part in args.unwrap_or("").split(',').filter(|p| !p.is_empty()) {
                    let (k, v) = part.split_once('=').ok_or_else(bad)?;
                    let v: usize = v.trim().parse().map_err(|_| bad())?;
                    match k.trim() {
                        "d" => depth = Some(v),
                        "beam" => beam_width = Some(v),
                        _ => return Err(bad()),
                    }
                }
                Ok(Self::Lookahead {
                    depth: depth.ok_or_else(|| Error::InvalidArgument("lookahead needs d=N".into()))?,
                    beam_width,
                })
            }
            ("neurwin", Some(args)) => {
                let checkpoints: Vec<PathBuf> = args
                    .split(',')
                    .map(|p| p.trim())
                    .filter(|p| !p.is_empty())
                    .map(|p| PathBuf::from(p.strip_prefix("ckpt=").unwrap_or(p)))
                    .collect();
                if checkpoints.is_empty() {
                    return Err(Error::InvalidArgument("neurwin needs ckpt=PATH".into()));
                }
                Ok(Self::NeurWin { checkpoints })
            }
            _ => Err(bad()),
        }
    }
}

/// Everything an experiment subcommand needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    /// Recovering class for single-arm commands (`train`, `oracle`, ...).
    pub class: RecoveringClass,
    /// Good-channel probability for single wireless arm commands.
    pub good_prob: f64,
    pub n: usize,
    pub m: usize,
    pub runs: usize,
    pub horizon: usize,
    pub discount: f64,
    pub seed: u64,
    pub policy: PolicySpec,
    pub training: TrainingConfig,
    pub noise_levels: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    pub tol: f64,
    pub beam_width: usize,
    pub qwic_episodes: Option<usize>,
    pub qwic_candidates: usize,
}

impl ExperimentConfig {
    pub fn new(env: EnvKind) -> Self {
        let (lambda_min, lambda_max, lambda_step) = match env {
            EnvKind::Recovering => (0.0, 12.0, 0.1),
            _ => (-1.0, 2.0, 0.05),
        };
        Self {
            env,
            class: RecoveringClass::A,
            good_prob: 0.75,
            n: 4,
            m: 1,
            runs: 50,
            horizon: 300,
            discount: 0.99,
            seed: 0,
            policy: PolicySpec::default_for(env),
            training: TrainingConfig::for_env(env),
            noise_levels: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            lambda_min,
            lambda_max,
            lambda_step,
            tol: 1e-6,
            beam_width: DEFAULT_BEAM_WIDTH,
            qwic_episodes: None,
            qwic_candidates: 21,
        }
    }

    /// Sets one key. `env` must already have been chosen.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value '{v}' for {key}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>> {
            v.split(',').filter(|x| !x.trim().is_empty()).map(|x| num(key, x.trim())).collect()
        }
        let v = value.trim();
        match key {
            "env" => {
                let env: EnvKind = v.parse()?;
                if env != self.env {
                    return Err(Error::InvalidArgument(format!(
                        "environment '{env}' conflicts with '{}'",
                        self.env
                    )));
                }
            }
            "class" => self.class = v.parse()?,
            "good_prob" => self.good_prob = num(key, v)?,
            "n" => self.n = num(key, v)?,
            "m" => self.m = num(key, v)?,
            "runs" => self.runs = num(key, v)?,
            "horizon" => {
                self.horizon = num(key, v)?;
                self.training.horizon = self.horizon;
            }
            "discount" => {
                self.discount = num(key, v)?;
                self.training.discount = self.discount;
            }
            "seed" => {
                self.seed = num(key, v)?;
                self.training.seed = self.seed;
            }
            "policy" => self.policy = v.parse()?,
            "episodes" => self.training.episodes = num(key, v)?,
            "learning_rate" => self.training.learning_rate = num(key, v)?,
            "lr_decay" => self.training.lr_decay = num(key, v)?,
            "sigmoid_m" => self.training.sigmoid_m = num(key, v)?,
            "batch_size" => self.training.batch_size = num(key, v)?,
            "checkpoint_interval" => self.training.checkpoint_interval = num(key, v)?,
            "hidden" => {
                self.training.hidden = v
                    .split(',')
                    .filter(|x| !x.trim().is_empty())
                    .map(|x| num(key, x.trim()))
                    .collect::<Result<_>>()?
            }
            "noise_levels" => self.noise_levels = list(key, v)?,
            "lambda_min" => self.lambda_min = num(key, v)?,
            "lambda_max" => self.lambda_max = num(key, v)?,
            "lambda_step" => self.lambda_step = num(key, v)?,
            "tol" => self.tol = num(key, v)?,
            "beam_width" => self.beam_width = num(key, v)?,
            "qwic_episodes" => self.qwic_episodes = Some(num(key, v)?),
            "qwic_candidates" => self.qwic_candidates = num(key, v)?,
            _ => return Err(Error::InvalidArgument(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 || self.m > self.n {
            return bad(format!("need 0 <= M <= N with N >= 1, got N={} M={}", self.n, self.m));
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.good_prob) {
            return bad(format!("good_prob {} outside [0, 1]", self.good_prob));
        }
        if self.noise_levels.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("noise levels must be nonnegative".into());
        }
        if !(self.lambda_step > 0.0 && self.lambda_max > self.lambda_min) {
            return bad("lambda grid needs lambda_max > lambda_min and a positive step".into());
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if self.beam_width == 0 || self.qwic_candidates == 0 {
            return bad("beam_width and qwic_candidates must be positive".into());
        }
        self.training.validate()
    }

    pub fn qwic_episodes(&self) -> usize {
        self.qwic_episodes.unwrap_or(self.training.episodes as usize)
    }
}

/// Parsed `key = value` lines with their 1-based line numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub entries: Vec<(usize, String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected 'key = value', got '{body}'"),
            })?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key '{key}'"),
                });
            }
            entries.push((line, key.to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|e| e.1 == key).map(|e| e.2.as_str())
    }

    /// Applies every entry, reporting failures with their line number.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        for (line, key, value) in &self.entries {
            config.set(key, value).map_err(|e| Error::Config {
                line: *line,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }
}
