//! Experiment specifications and the `key = value` config format.
//!
//! A config file holds one `key = value` pair per line. Blank lines and
//! lines whose first non-blank character is `#` are ignored. Keys not set
//! in the file keep the preset's default; [`ExperimentSpec::to_config_string`]
//! writes every key, and parsing that text gives back an equal spec.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use fdistill_core::distill::{OptimizerKind, TeacherSampling};
use fdistill_core::model::checked_space_size;
use fdistill_core::{DivergenceKind, JsConditionalMode, Objective, TrainConfig, Vocab};
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    TheoremCheck,
    ModeStudy,
    Convergence,
    Efficiency,
    GradCheck,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Self::TheoremCheck, Self::ModeStudy, Self::Convergence, Self::Efficiency, Self::GradCheck];

    /// The command-line verb, also used in configs and results.
    pub fn name(self) -> &'static str {
        match self {
            Self::TheoremCheck => "check-theorem",
            Self::ModeStudy => "mode-study",
            Self::Convergence => "converge",
            Self::Efficiency => "efficiency",
            Self::GradCheck => "grad-check",
        }
    }

    /// Accepts the verb or the upper-case preset name (`MODE_STUDY`).
    pub fn from_name(name: &str) -> Option<Self> {
        let upper = name.trim().to_ascii_uppercase().replace('-', "_");
        match upper.as_str() {
            "CHECK_THEOREM" | "THEOREM_CHECK" => Some(Self::TheoremCheck),
            "MODE_STUDY" => Some(Self::ModeStudy),
            "CONVERGE" | "CONVERGENCE" => Some(Self::Convergence),
            "EFFICIENCY" => Some(Self::Efficiency),
            "GRAD_CHECK" => Some(Self::GradCheck),
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Preset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Scale {
    pub vocab: usize,
    pub horizon: usize,
    pub teacher_order: usize,
    pub student_order: usize,
}

impl Scale {
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.vocab).map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        self.vocab()?;
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".into()));
        }
        for (key, order) in [("teacher_order", self.teacher_order), ("student_order", self.student_order)] {
            if order >= self.horizon {
                return Err(HarnessError::Config(format!(
                    "{key} = {order} must be smaller than horizon = {}",
                    self.horizon
                )));
            }
        }
        checked_space_size(self.vocab, self.horizon).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Everything needed to run one preset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub scale: Scale,
    /// Shared training settings; `train.seed` is the base seed of the run and
    /// `train.objective` is overwritten per objective.
    pub train: TrainConfig,
    pub trials: usize,
    pub output_path: Option<PathBuf>,
    /// Objectives a preset iterates over.
    pub objectives: Vec<Objective>,
    pub student_stationary: bool,
    /// Standard deviation of random teacher logits.
    pub teacher_scale: f64,
    /// Sharpness of the bimodal teacher in the mode study.
    pub sharpness: f64,
    /// Samples per side behind each risk estimate.
    pub risk_samples: usize,
}

fn divergences() -> Vec<Objective> {
    DivergenceKind::ALL.iter().map(|&k| Objective::Divergence(k)).collect()
}

impl ExperimentSpec {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            preset,
            scale: Scale { vocab: 4, horizon: 4, teacher_order: 3, student_order: 3 },
            train: TrainConfig::default(),
            trials: 1,
            output_path: None,
            objectives: divergences(),
            student_stationary: false,
            teacher_scale: 1.0,
            sharpness: 20.0,
            risk_samples: 5000,
        };
        match preset {
            Preset::TheoremCheck => {
                Self { scale: Scale { student_order: 2, ..base.scale }, trials: 50, teacher_scale: 1.5, ..base }
            }
            Preset::ModeStudy => Self {
                scale: Scale { student_order: 0, ..base.scale },
                train: TrainConfig { learning_rate: 0.003, mc_samples_per_step: 4, ..base.train },
                trials: 5,
                student_stationary: true,
                ..base
            },
            Preset::Convergence => Self { trials: 3, ..base },
            Preset::Efficiency => Self {
                train: TrainConfig {
                    steps: 200,
                    learning_rate: 0.01,
                    mc_samples_per_step: 8,
                    offline_cache_size: 500,
                    ..base.train
                },
                trials: 10,
                objectives: [DivergenceKind::Kl, DivergenceKind::Js, DivergenceKind::Tvd]
                    .iter()
                    .map(|&k| Objective::Divergence(k))
                    .collect(),
                teacher_scale: 2.0,
                ..base
            },
            Preset::GradCheck => Self {
                scale: Scale { vocab: 3, horizon: 3, teacher_order: 2, student_order: 1 },
                train: TrainConfig { mc_samples_per_step: 3, ..base.train },
                trials: 10,
                objectives: divergences()
                    .into_iter()
                    .chain([Objective::SeqKd, Objective::Engine, Objective::Mle])
                    .collect(),
                ..base
            },
        }
    }

    /// Checks the spec before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.scale.validate()?;
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.objectives.is_empty() {
            return bad("kind lists no objective".into());
        }
        if self.teacher_scale <= 0.0 || !self.teacher_scale.is_finite() {
            return bad(format!("teacher_scale must be positive, got {}", self.teacher_scale));
        }
        if self.sharpness <= 0.0 || !self.sharpness.is_finite() {
            return bad(format!("sharpness must be positive, got {}", self.sharpness));
        }
        if self.risk_samples == 0 {
            return bad("risk_samples must be at least 1".into());
        }
        for &objective in &self.objectives {
            let mut train = TrainConfig { objective, ..self.train.clone() };
            if self.preset == Preset::Efficiency {
                train.teacher_sampling = TeacherSampling::Offline;
            }
            train.validate().map_err(|e| HarnessError::Config(format!("{objective}: {e}")))?;
        }
        match self.preset {
            Preset::TheoremCheck | Preset::ModeStudy if self.objectives != divergences() => {
                bad(format!("{} always covers kl, rkl, js and tvd; `kind` cannot be set", self.preset))
            }
            Preset::ModeStudy if self.scale.teacher_order + 1 != self.scale.horizon => bad(format!(
                "mode-study needs a full-history teacher: teacher_order must be {}",
                self.scale.horizon - 1
            )),
            _ => Ok(()),
        }
    }

    /// All keys, one per line, in the documented order.
    pub fn to_config_string(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        put("preset", self.preset.name().into());
        put("seed", t.seed.to_string());
        put("trials", self.trials.to_string());
        put("vocab", self.scale.vocab.to_string());
        put("horizon", self.scale.horizon.to_string());
        put("teacher_order", self.scale.teacher_order.to_string());
        put("student_order", self.scale.student_order.to_string());
        put("student_stationary", self.student_stationary.to_string());
        put("teacher_scale", format!("{:?}", self.teacher_scale));
        put("sharpness", format!("{:?}", self.sharpness));
        put("risk_samples", self.risk_samples.to_string());
        put("kind", self.objectives.iter().map(|o| o.name()).collect::<Vec<_>>().join(","));
        put("js_mode", t.js_mode.name().into());
        put("steps", t.steps.to_string());
        put("learning_rate", format!("{:?}", t.learning_rate));
        put("optimizer", optimizer_name(t.optimizer).into());
        put("beta1", format!("{:?}", t.adam_betas.0));
        put("beta2", format!("{:?}", t.adam_betas.1));
        put("mc_samples", t.mc_samples_per_step.to_string());
        put("teacher_sampling", sampling_name(t.teacher_sampling).into());
        put("cache_size", t.offline_cache_size.to_string());
        put("prob_floor", format!("{:?}", t.prob_floor));
        put("beam_width", t.beam_width.to_string());
        if let Some(path) = &self.output_path {
            put("output", path.display().to_string());
        }
        out
    }

    /// Sets one key from its textual value. `Err` carries a message without
    /// location; unknown keys give `Ok(false)`.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        let t = &mut self.train;
        match key {
            "preset" => {
                let preset = Preset::from_name(value).ok_or_else(|| expected("a preset name"))?;
                if preset != self.preset {
                    return Err(format!("preset `{value}` does not match `{}`", self.preset));
                }
            }
            "seed" => t.seed = parse(value, "a non-negative integer")?,
            "trials" => self.trials = parse(value, "a non-negative integer")?,
            "vocab" => self.scale.vocab = parse(value, "a non-negative integer")?,
            "horizon" => self.scale.horizon = parse(value, "a non-negative integer")?,
            "teacher_order" => self.scale.teacher_order = parse(value, "a non-negative integer")?,
            "student_order" => self.scale.student_order = parse(value, "a non-negative integer")?,
            "student_stationary" => self.student_stationary = parse(value, "true or false")?,
            "teacher_scale" => self.teacher_scale = parse(value, "a real number")?,
            "sharpness" => self.sharpness = parse(value, "a real number")?,
            "risk_samples" => self.risk_samples = parse(value, "a non-negative integer")?,
            "kind" => {
                self.objectives = value
                    .split(',')
                    .map(|name| {
                        Objective::from_name(name.trim()).ok_or_else(|| format!("unknown kind `{}`", name.trim()))
                    })
                    .collect::<std::result::Result<_, _>>()?;
            }
            "js_mode" => t.js_mode = JsConditionalMode::from_name(value).ok_or_else(|| expected("exact or mixture"))?,
            "steps" => t.steps = parse(value, "a non-negative integer")?,
            "learning_rate" => t.learning_rate = parse(value, "a real number")?,
            "optimizer" => {
                t.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(expected("adam or sgd")),
                }
            }
            "beta1" => t.adam_betas.0 = parse(value, "a real number")?,
            "beta2" => t.adam_betas.1 = parse(value, "a real number")?,
            "mc_samples" => t.mc_samples_per_step = parse(value, "a non-negative integer")?,
            "teacher_sampling" => {
                t.teacher_sampling = match value {
                    "online" => TeacherSampling::Online,
                    "offline" => TeacherSampling::Offline,
                    _ => return Err(expected("online or offline")),
                }
            }
            "cache_size" => t.offline_cache_size = parse(value, "a non-negative integer")?,
            "prob_floor" => t.prob_floor = parse(value, "a real number")?,
            "beam_width" => t.beam_width = parse(value, "a non-negative integer")?,
            "output" => self.output_path = Some(PathBuf::from(value)),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn expected(what: &str) -> String {
    format!("expected {what}")
}

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| expected(what))
}

fn optimizer_name(kind: OptimizerKind) -> &'static str {
    match kind {
        OptimizerKind::Adam => "adam",
        OptimizerKind::Sgd => "sgd",
    }
}

fn sampling_name(sampling: TeacherSampling) -> &'static str {
    match sampling {
        TeacherSampling::Online => "online",
        TeacherSampling::Offline => "offline",
    }
}

/// The preset named by a `preset` line, if any.
fn declared_preset(text: &str) -> Option<(usize, &str)> {
    text.lines().enumerate().find_map(|(i, line)| {
        let (key, value) = line.split_once('=')?;
        (key.trim() == "preset").then(|| (i + 1, value.trim()))
    })
}

/// Parses config text on top of the defaults of `preset`.
///
/// Without `preset`, the file's own `preset` key decides, falling back to
/// `check-theorem`. The result is validated.
pub fn parse_config_str(text: &str, preset: Option<Preset>, path: &Path) -> Result<ExperimentSpec> {
    let format_err = |line: usize, message: String| HarnessError::Format { path: path.to_path_buf(), line, message };
    let preset = match (preset, declared_preset(text)) {
        (Some(p), _) => p,
        (None, Some((line, name))) => {
            Preset::from_name(name).ok_or_else(|| format_err(line, format!("unknown preset `{name}`")))?
        }
        (None, None) => Preset::TheoremCheck,
    };
    let mut spec = ExperimentSpec::preset(preset);
    let mut seen: Vec<&str> = Vec::new();
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let n = i + 1;
        let (key, value) =
            line.split_once('=').ok_or_else(|| format_err(n, format!("expected `key = value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.contains(&key) {
            return Err(format_err(n, format!("`{key}` is set twice")));
        }
        seen.push(key);
        match spec.set(key, value) {
            Ok(true) => {}
            Ok(false) => unknown.push(format!("{key} (line {n})")),
            Err(message) => return Err(format_err(n, format!("invalid value for `{key}`: `{value}`: {message}"))),
        }
    }
    if !unknown.is_empty() {
        return Err(HarnessError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config(path: &Path, preset: Option<Preset>) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config_str(&text, preset, path)
}
