//! Distillation training for tabular students.
//!
//! Gradients follow the stop-gradient contract: sampled prefixes, and the
//! prefix distributions they were drawn from, are constants. Only the student
//! probabilities written explicitly inside each per-step sum are
//! differentiated, so no score-function term appears.

use alloc::format;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

use crate::decompose::{JsConditionalMode, DEFAULT_PROB_FLOOR};
use crate::divergence::DivergenceKind;
use crate::model::{Autoregressive, Sequence, TabularARModel};
use crate::{Error, Result};

mod grad;
mod optim;
mod train;

pub use grad::{frozen_loss_and_grad, gradient_check, loss_and_grad};
pub use optim::{adam_step, sgd_step, AdamState, ADAM_EPSILON};
pub use train::{build_offline_cache, mle_warm_start, train, StepRecord, TrainOutcome};

/// What a training run minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// One of the step-wise f-divergence losses.
    Divergence(DivergenceKind),
    /// Student NLL of the teacher's beam-search output.
    SeqKd,
    /// `sum_t sum_y -q(y|y'<t) ln p(y|y'<t)` along student samples: the
    /// step-wise RKL loss without its entropy term.
    Engine,
    /// Student NLL of teacher samples.
    Mle,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Self::Divergence(kind) => kind.name(),
            Self::SeqKd => "seqkd",
            Self::Engine => "engine",
            Self::Mle => "mle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "seqkd" => Some(Self::SeqKd),
            "engine" => Some(Self::Engine),
            "mle" => Some(Self::Mle),
            other => DivergenceKind::from_name(other).map(Self::Divergence),
        }
    }

    /// Whether the objective consumes (teacher samples, student samples).
    pub fn sample_sides(self) -> (bool, bool) {
        match self {
            Self::Divergence(kind) => crate::decompose::sample_sides(kind),
            Self::SeqKd | Self::Mle => (true, false),
            Self::Engine => (false, true),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Where teacher sequences come from during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TeacherSampling {
    /// Fresh teacher samples every step.
    Online,
    /// A fixed cache drawn once before training and cycled through.
    Offline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub js_mode: JsConditionalMode,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_betas: (f64, f64),
    pub mc_samples_per_step: usize,
    pub teacher_sampling: TeacherSampling,
    pub offline_cache_size: usize,
    pub seed: u64,
    pub prob_floor: f64,
    /// Beam width for the SeqKD target.
    pub beam_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Divergence(DivergenceKind::Kl),
            js_mode: JsConditionalMode::MixtureOfConditionals,
            steps: 5000,
            learning_rate: 0.05,
            optimizer: OptimizerKind::Adam,
            adam_betas: (0.9, 0.999),
            mc_samples_per_step: 1,
            teacher_sampling: TeacherSampling::Online,
            offline_cache_size: 100,
            seed: 0,
            prob_floor: DEFAULT_PROB_FLOOR,
            beam_width: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!("adam betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if self.mc_samples_per_step == 0 {
            return bad("mc_samples_per_step must be at least 1".into());
        }
        if self.offline_cache_size == 0 {
            return bad("offline_cache_size must be at least 1".into());
        }
        if !(self.prob_floor > 0.0) || self.prob_floor > 1e-6 {
            return bad(format!("prob_floor must lie in (0, 1e-6], got {}", self.prob_floor));
        }
        if self.beam_width == 0 {
            return bad("beam_width must be at least 1".into());
        }
        if matches!(self.objective, Objective::Engine | Objective::SeqKd)
            && self.teacher_sampling == TeacherSampling::Offline
        {
            return bad(format!("{} does not sample the teacher; offline sampling is contradictory", self.objective));
        }
        Ok(())
    }
}

/// Teacher samples drawn once and kept fixed for a whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherSampleCache {
    sequences: Vec<Sequence>,
    origin_seed: u64,
}

impl TeacherSampleCache {
    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn origin_seed(&self) -> u64 {
        self.origin_seed
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Loss, gradient over the student logits, and teacher queries consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub teacher_eval_count: u64,
}

/// Wraps a model and counts conditional-distribution queries.
#[derive(Debug)]
pub struct CountingModel<'a> {
    inner: &'a TabularARModel,
    count: Cell<u64>,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a TabularARModel) -> Self {
        Self { inner, count: Cell::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }

    pub fn model(&self) -> &'a TabularARModel {
        self.inner
    }
}

impl Autoregressive for CountingModel<'_> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn cond_probs_into(&self, prefix: &[usize], out: &mut [f64]) {
        self.count.set(self.count.get() + 1);
        self.inner.cond_probs_into(prefix, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_names_round_trip() {
        for name in ["kl", "rkl", "js", "tvd", "seqkd", "engine", "mle"] {
            assert_eq!(Objective::from_name(name).unwrap().name(), name);
        }
        assert!(Objective::from_name("bleu").is_none());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig { adam_betas: (0.9, 1.0), ..Default::default() };
        assert!(c.validate().is_err());
        c = TrainConfig { prob_floor: 1e-3, ..Default::default() };
        assert!(c.validate().is_err());
        c = TrainConfig {
            objective: Objective::Engine,
            teacher_sampling: TeacherSampling::Offline,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c = TrainConfig { mc_samples_per_step: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
