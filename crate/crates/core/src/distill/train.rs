use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{
    adam_step, loss_and_grad, sgd_step, AdamState, CountingModel, Objective, OptimizerKind, TeacherSampleCache,
    TeacherSampling, TrainConfig,
};
use crate::decompose::check_compatible;
use crate::model::{beam_search, sample, Autoregressive, Sequence, TabularARModel};
use crate::{seed, Error, Result};

/// One line of training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Loss at the parameters before this step's update.
    pub loss: f64,
    pub teacher_evals_cumulative: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub student: TabularARModel,
    pub history: Vec<StepRecord>,
    pub total_teacher_evals: u64,
    /// The offline cache, when one was used.
    pub cache: Option<TeacherSampleCache>,
}

/// Draws `n` teacher samples from a generator seeded with `seed`.
///
/// Costs exactly `n * T` conditional queries on `teacher`.
pub fn build_offline_cache<M: Autoregressive + ?Sized>(teacher: &M, n: usize, seed: u64) -> Result<TeacherSampleCache> {
    if n == 0 {
        return Err(Error::Argument("offline cache needs at least one sequence".into()));
    }
    let mut rng = seed::rng(seed);
    let sequences = (0..n).map(|_| sample(teacher, &mut rng)).collect();
    Ok(TeacherSampleCache { sequences, origin_seed: seed })
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    betas: (f64, f64),
    adam: AdamState,
}

impl Optimizer {
    fn new(config: &TrainConfig, len: usize) -> Self {
        Self { kind: config.optimizer, lr: config.learning_rate, betas: config.adam_betas, adam: AdamState::new(len) }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => adam_step(params, grad, &mut self.adam, self.lr, self.betas),
            OptimizerKind::Sgd => sgd_step(params, grad, self.lr),
        }
    }
}

fn draw<M: Autoregressive + ?Sized, R: Rng + ?Sized>(model: &M, n: usize, rng: &mut R) -> Vec<Sequence> {
    (0..n).map(|_| sample(model, rng)).collect()
}

/// Runs `config.steps` optimizer steps from `student_init`.
///
/// Student samples are drawn fresh every step. Teacher samples are drawn
/// fresh (online) or taken in order, cyclically, from a cache built before
/// the first step (offline). SeqKD uses the teacher's beam-search output as
/// a constant target. Every teacher conditional query, whether for sampling,
/// beam search or loss evaluation, is counted.
///
/// Random streams: student samples use child seed 0 of `config.seed`,
/// online teacher samples child 1, the offline cache child 2.
pub fn train(teacher: &TabularARModel, student_init: &TabularARModel, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_compatible(teacher, student_init)?;
    let counted = CountingModel::new(teacher);
    let mut student = student_init.clone();
    let (use_teacher, use_student) = config.objective.sample_sides();
    let k = config.mc_samples_per_step;

    let mut student_rng = seed::rng(seed::split(config.seed, 0));
    let mut teacher_rng = seed::rng(seed::split(config.seed, 1));

    let cache = match (config.teacher_sampling, use_teacher, config.objective) {
        (TeacherSampling::Offline, true, objective) if objective != Objective::SeqKd => {
            Some(build_offline_cache(&counted, config.offline_cache_size, seed::split(config.seed, 2))?)
        }
        _ => None,
    };
    let hard_target = match config.objective {
        Objective::SeqKd => Some(beam_search(&counted, config.beam_width)?),
        _ => None,
    };

    let mut optimizer = Optimizer::new(config, student.logits().len());
    let mut history = Vec::with_capacity(config.steps);
    let mut loss_evals = 0u64;
    let mut cursor = 0usize;

    for step in 0..config.steps {
        let teacher_seqs: Vec<Sequence> = if let Some(target) = &hard_target {
            vec![target.clone()]
        } else if !use_teacher {
            Vec::new()
        } else if let Some(cache) = &cache {
            let n = cache.len();
            let batch = (0..k).map(|j| cache.sequences[(cursor + j) % n].clone()).collect();
            cursor = (cursor + k) % n;
            batch
        } else {
            draw(&counted, k, &mut teacher_rng)
        };
        let student_seqs = if use_student { draw(&student, k, &mut student_rng) } else { Vec::new() };

        let report = loss_and_grad(teacher, &student, config, &teacher_seqs, &student_seqs)?;
        loss_evals += report.teacher_eval_count;
        history.push(StepRecord { step, loss: report.loss, teacher_evals_cumulative: counted.count() + loss_evals });
        optimizer.step(student.logits_mut(), &report.gradient)?;
    }

    Ok(TrainOutcome { student, history, total_teacher_evals: counted.count() + loss_evals, cache })
}

/// Maximum-likelihood warm start on `data_seqs` with full-batch gradients.
///
/// Runs `config.steps` optimizer steps and returns the iterate with the
/// lowest mean NLL seen, so the result never scores worse than the input.
pub fn mle_warm_start(
    student: &TabularARModel,
    data_seqs: &[Sequence],
    config: &TrainConfig,
) -> Result<TabularARModel> {
    if data_seqs.is_empty() {
        return Err(Error::Argument("warm start needs at least one data sequence".into()));
    }
    let config = TrainConfig { objective: Objective::Mle, teacher_sampling: TeacherSampling::Online, ..config.clone() };
    config.validate()?;
    let mut current = student.clone();
    let mut best = student.clone();
    let mut best_loss = f64::INFINITY;
    let mut optimizer = Optimizer::new(&config, current.logits().len());
    for step in 0..=config.steps {
        // the teacher is never queried for MLE
        let report = loss_and_grad(student, &current, &config, data_seqs, &[])?;
        if report.loss < best_loss {
            best_loss = report.loss;
            best = current.clone();
        }
        if step < config.steps {
            optimizer.step(current.logits_mut(), &report.gradient)?;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::brute_force_seq_divergence;
    use crate::divergence::DivergenceKind;
    use crate::metrics::mean_floored_nll;
    use crate::model::Vocab;

    fn vocab() -> Vocab {
        Vocab::new(3).unwrap()
    }

    #[test]
    fn offline_cache_contract() {
        let teacher = TabularARModel::random(vocab(), 3, 2, false, &mut seed::rng(1), 1.0).unwrap();
        let counted = CountingModel::new(&teacher);
        let a = build_offline_cache(&counted, 7, 99).unwrap();
        assert_eq!(counted.count(), 21);
        assert_eq!(a, build_offline_cache(&teacher, 7, 99).unwrap());
        assert_eq!(a.origin_seed(), 99);
        assert!(build_offline_cache(&teacher, 0, 99).is_err());

        let forced = Sequence::new(vec![1, 2, 0]);
        let det = TabularARModel::deterministic(vocab(), &forced).unwrap();
        let cache = build_offline_cache(&det, 4, 5).unwrap();
        assert!(cache.sequences().iter().all(|s| *s == forced));
    }

    #[test]
    fn warm_start_fits_a_repeated_sequence() {
        let target = Sequence::new(vec![2, 0, 1]);
        let data = vec![target.clone(); 4];
        let init = TabularARModel::zeros(vocab(), 3, 2, false).unwrap();
        let config = TrainConfig { steps: 200, ..Default::default() };
        let fitted = mle_warm_start(&init, &data, &config).unwrap();
        assert!(-fitted.seq_logprob(&target).unwrap() < 0.1);

        let zero = TrainConfig { steps: 0, ..Default::default() };
        assert_eq!(mle_warm_start(&init, &data, &zero).unwrap(), init);
        assert!(mle_warm_start(&init, &[], &config).is_err());
    }

    #[test]
    fn warm_start_on_teacher_samples_reduces_kl() {
        let teacher = TabularARModel::random(vocab(), 3, 2, false, &mut seed::rng(4), 1.5).unwrap();
        let data = build_offline_cache(&teacher, 400, 8).unwrap();
        let init = TabularARModel::random(vocab(), 3, 2, false, &mut seed::rng(5), 1.0).unwrap();
        let config = TrainConfig { steps: 300, ..Default::default() };
        let fitted = mle_warm_start(&init, data.sequences(), &config).unwrap();
        let before = brute_force_seq_divergence(&teacher, &init, DivergenceKind::Kl).unwrap();
        let after = brute_force_seq_divergence(&teacher, &fitted, DivergenceKind::Kl).unwrap();
        assert!(after < before, "{after} !< {before}");
        let floor = config.prob_floor;
        assert!(
            mean_floored_nll(&fitted, data.sequences(), floor).unwrap()
                <= mean_floored_nll(&init, data.sequences(), floor).unwrap()
        );
    }

    #[test]
    fn training_is_deterministic_and_counts_evals() {
        let teacher = TabularARModel::random(vocab(), 3, 2, false, &mut seed::rng(6), 1.0).unwrap();
        let init = TabularARModel::zeros(vocab(), 3, 2, false).unwrap();
        let config = TrainConfig {
            objective: Objective::Divergence(DivergenceKind::Js),
            steps: 50,
            seed: 3,
            ..Default::default()
        };
        let a = train(&teacher, &init, &config).unwrap();
        let b = train(&teacher, &init, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 50);
        // online JS: T queries to sample, T + T to score each step
        assert_eq!(a.total_teacher_evals, 50 * 9);
        assert!(a.history.windows(2).all(|w| w[0].teacher_evals_cumulative < w[1].teacher_evals_cumulative));

        let offline = TrainConfig { teacher_sampling: TeacherSampling::Offline, offline_cache_size: 10, ..config };
        let c = train(&teacher, &init, &offline).unwrap();
        assert_eq!(c.total_teacher_evals, 10 * 3 + 50 * 6);
        let cache = c.cache.unwrap();
        assert_eq!(cache, build_offline_cache(&teacher, 10, seed::split(3, 2)).unwrap());
    }

    #[test]
    fn seqkd_counts_beam_search_once() {
        let teacher = TabularARModel::random(vocab(), 3, 2, false, &mut seed::rng(7), 1.0).unwrap();
        let init = TabularARModel::zeros(vocab(), 3, 2, false).unwrap();
        let config = TrainConfig { objective: Objective::SeqKd, steps: 20, beam_width: 2, ..Default::default() };
        let out = train(&teacher, &init, &config).unwrap();
        // beam of width 2 over 3 positions: 1 + 2 + 2 expansions
        assert_eq!(out.total_teacher_evals, 5);
        let target = beam_search(&teacher, 2).unwrap();
        assert!(out.student.seq_logprob(&target).unwrap() > init.seq_logprob(&target).unwrap());
    }

    #[test]
    fn contradictory_config_is_rejected() {
        let m = TabularARModel::zeros(vocab(), 3, 2, false).unwrap();
        let config = TrainConfig {
            objective: Objective::Engine,
            teacher_sampling: TeacherSampling::Offline,
            ..Default::default()
        };
        assert!(matches!(train(&m, &m, &config), Err(Error::Config(_))));
    }
}
