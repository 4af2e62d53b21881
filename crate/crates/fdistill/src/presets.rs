//! The five experiment presets.
//!
//! Trial `i` of a run with base seed `s` uses the trial seed
//! `seed::split(s, i)`. Within a trial, child stream 3 of the trial seed
//! draws the teacher, child 4 the student initialisation and child 5 any
//! evaluation samples; children 0 to 2 belong to the training loop. Trials
//! run in parallel and their records are returned in trial order, so the
//! output does not depend on scheduling.

use core::f64::consts::LN_2;

use fdistill_core::decompose::{brute_force_seq_divergence, engine_loss_exact, stepwise_exact, student_seq_entropy};
use fdistill_core::distill::{gradient_check, train, StepRecord, TeacherSampling};
use fdistill_core::divergence::pointwise_divergence;
use fdistill_core::metrics::{distinct_ngram, teacher_dist, DEFAULT_TEACHER_DIST_SAMPLES};
use fdistill_core::model::{beam_search, sample};
use fdistill_core::{
    seed, DivergenceKind, JsConditionalMode, Objective, RiskReport, Sequence, TabularARModel, TrainConfig,
};
use rayon::prelude::*;

use crate::config::{ExperimentSpec, Preset};
use crate::error::Result;
use crate::results::{Comparison, ResultRecord};

pub const TEACHER_STREAM: u64 = 3;
pub const STUDENT_STREAM: u64 = 4;
pub const EVAL_STREAM: u64 = 5;

/// Tolerances asserted by the presets.
pub const STEPWISE_TOL: f64 = 1e-9;
pub const BOUND_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const ENGINE_TOL: f64 = 1e-9;
pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;
pub const CONVERGED_JS: f64 = 1e-2;
pub const OFFLINE_REL_GAP: f64 = 0.25;

/// Loss history of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub trial: usize,
    /// `<objective>` or `<objective>-<online|offline>`.
    pub label: String,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub records: Vec<ResultRecord>,
    pub histories: Vec<History>,
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    seed::split(base, trial as u64)
}

/// Runs `spec` and returns its records.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRecord>> {
    Ok(run(spec)?.records)
}

/// Runs `spec`, keeping training histories as well.
pub fn run(spec: &ExperimentSpec) -> Result<Run> {
    spec.validate()?;
    let trials: Vec<Run> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let ctx = Trial { spec, index: trial, seed: trial_seed(spec.train.seed, trial) };
            match spec.preset {
                Preset::TheoremCheck => ctx.theorem_check(),
                Preset::GradCheck => ctx.grad_check(),
                Preset::Convergence => ctx.convergence(),
                Preset::ModeStudy => ctx.mode_study(),
                Preset::Efficiency => ctx.efficiency(),
            }
        })
        .collect::<Result<_>>()?;
    let mut out = Run::default();
    for t in trials {
        out.records.extend(t.records);
        out.histories.extend(t.histories);
    }
    let summary = summarize(spec, &out.records);
    out.records.extend(summary);
    Ok(out)
}

struct Trial<'a> {
    spec: &'a ExperimentSpec,
    index: usize,
    seed: u64,
}

impl Trial<'_> {
    fn record(&self, kind: &str) -> ResultRecord {
        ResultRecord::new(self.spec.preset, Some(self.index), self.seed, self.spec.scale, kind)
    }

    fn random_teacher(&self) -> Result<TabularARModel> {
        let s = &self.spec.scale;
        let mut rng = seed::rng(seed::split(self.seed, TEACHER_STREAM));
        Ok(TabularARModel::random(s.vocab()?, s.horizon, s.teacher_order, false, &mut rng, self.spec.teacher_scale)?)
    }

    fn random_student(&self) -> Result<TabularARModel> {
        let s = &self.spec.scale;
        let mut rng = seed::rng(seed::split(self.seed, STUDENT_STREAM));
        Ok(TabularARModel::random(
            s.vocab()?,
            s.horizon,
            s.student_order,
            self.spec.student_stationary,
            &mut rng,
            self.spec.teacher_scale,
        )?)
    }

    fn zero_student(&self) -> Result<TabularARModel> {
        let s = &self.spec.scale;
        Ok(TabularARModel::zeros(s.vocab()?, s.horizon, s.student_order, self.spec.student_stationary)?)
    }

    fn train_config(&self, objective: Objective) -> TrainConfig {
        TrainConfig { objective, seed: self.seed, ..self.spec.train.clone() }
    }

    fn theorem_check(&self) -> Result<Run> {
        let p = self.random_teacher()?;
        let q = self.random_student()?;
        let mut records = Vec::new();
        let mut brute = [0.0; 4];
        for (i, kind) in DivergenceKind::ALL.into_iter().enumerate() {
            let b = brute_force_seq_divergence(&p, &q, kind)?;
            let s = stepwise_exact(&p, &q, kind, JsConditionalMode::ExactMarginalRatio)?;
            brute[i] = b;
            let mut r = self.record(kind.name());
            r.metric("brute_force", b).metric("stepwise_exact", s);
            match kind {
                DivergenceKind::Tvd => r.check("stepwise_minus_brute", s - b, Comparison::AtLeast, -BOUND_TOL),
                _ => r.check("stepwise_residual", (s - b).abs(), Comparison::AtMost, STEPWISE_TOL),
            };
            records.push(r);
        }

        let rkl = stepwise_exact(&p, &q, DivergenceKind::Rkl, JsConditionalMode::ExactMarginalRatio)?;
        let engine = engine_loss_exact(&p, &q)?;
        let entropy = student_seq_entropy(&q)?;
        let mut r = self.record("engine");
        r.metric("engine_loss", engine).metric("student_entropy", entropy).check(
            "rkl_identity_residual",
            (rkl - (engine - entropy)).abs(),
            Comparison::AtMost,
            ENGINE_TOL,
        );
        records.push(r);

        let (pd, qd) = (p.seq_distribution()?, q.seq_distribution()?);
        let (pv, qv) = (pd.probs().as_slice(), qd.probs().as_slice());
        let [kl, _, js, tvd] = brute;
        let mut r = self.record("all");
        r.check(
            "kl_rkl_duality",
            (kl - pointwise_divergence(qv, pv, DivergenceKind::Rkl)?).abs(),
            Comparison::AtMost,
            SYMMETRY_TOL,
        )
        .check(
            "js_symmetry",
            (js - pointwise_divergence(qv, pv, DivergenceKind::Js)?).abs(),
            Comparison::AtMost,
            SYMMETRY_TOL,
        )
        .check(
            "tvd_symmetry",
            (tvd - pointwise_divergence(qv, pv, DivergenceKind::Tvd)?).abs(),
            Comparison::AtMost,
            SYMMETRY_TOL,
        )
        .check("min_divergence", brute.iter().copied().fold(f64::INFINITY, f64::min), Comparison::AtLeast, 0.0)
        .check("js", js, Comparison::AtMost, LN_2)
        .check("tvd", tvd, Comparison::AtMost, 1.0);
        if kl.is_finite() {
            r.check("pinsker_gap", tvd - (kl / 2.0).sqrt(), Comparison::AtMost, 0.0);
        }
        records.push(r);
        Ok(Run { records, histories: Vec::new() })
    }

    fn grad_check(&self) -> Result<Run> {
        let p = self.random_teacher()?;
        let q = self.random_student()?;
        let k = self.spec.train.mc_samples_per_step;
        let mut rng = seed::rng(seed::split(self.seed, EVAL_STREAM));
        let teacher_seqs: Vec<Sequence> = (0..k).map(|_| sample(&p, &mut rng)).collect();
        let student_seqs: Vec<Sequence> = (0..k).map(|_| sample(&q, &mut rng)).collect();
        let beam = [beam_search(&p, self.spec.train.beam_width)?];
        let mut records = Vec::new();
        for &objective in &self.spec.objectives {
            let config = self.train_config(objective);
            let targets: &[Sequence] = if objective == Objective::SeqKd { &beam } else { &teacher_seqs };
            let rel = gradient_check(&p, &q, &config, targets, &student_seqs, FD_STEP)?;
            let mut r = self.record(objective.name());
            r.check("relative_error", rel, Comparison::AtMost, GRAD_TOL);
            records.push(r);
        }
        Ok(Run { records, histories: Vec::new() })
    }

    fn convergence(&self) -> Result<Run> {
        let p = self.random_teacher()?;
        let init = self.zero_student()?;
        let initial_js = brute_force_seq_divergence(&p, &init, DivergenceKind::Js)?;
        let mut run = Run::default();
        for &objective in &self.spec.objectives {
            let out = train(&p, &init, &self.train_config(objective))?;
            let js = brute_force_seq_divergence(&p, &out.student, DivergenceKind::Js)?;
            let mut r = self.record(objective.name());
            r.metric("initial_js", initial_js).metric("teacher_evals", out.total_teacher_evals as f64).check(
                "final_js",
                js,
                Comparison::AtMost,
                CONVERGED_JS,
            );
            if let Some(last) = out.history.last() {
                r.metric("last_loss", last.loss);
            }
            run.records.push(r);
            run.histories.push(History { trial: self.index, label: objective.name().into(), steps: out.history });
        }
        Ok(run)
    }

    fn mode_study(&self) -> Result<Run> {
        let s = &self.spec.scale;
        let vocab = s.vocab()?;
        let mode_a = Sequence::new(vec![0; s.horizon]);
        let mode_b = Sequence::new(vec![1; s.horizon]);
        let p = TabularARModel::bimodal_teacher(vocab, s.horizon, &mode_a, &mode_b, self.spec.sharpness)?;
        let init = self.zero_student()?;
        let n = self.spec.risk_samples;
        let mut run = Run::default();
        let mut risks = Vec::new();
        for kind in DivergenceKind::ALL {
            let out = train(&p, &init, &self.train_config(Objective::Divergence(kind)))?;
            // the same evaluation stream for every kind
            let mut rng = seed::rng(seed::split(self.seed, EVAL_STREAM));
            let student_samples: Vec<Sequence> = (0..n).map(|_| sample(&out.student, &mut rng)).collect();
            let teacher_samples: Vec<Sequence> = (0..n).map(|_| sample(&p, &mut rng)).collect();
            let risk = RiskReport::new(&p, &out.student, &student_samples, &teacher_samples)?;
            let mut r = self.record(kind.name());
            r.metric("r_llh", risk.r_llh).metric("r_cvg", risk.r_cvg);
            if s.horizon >= 2 {
                r.metric("distinct_2", distinct_ngram(&student_samples, 2)?);
            }
            run.records.push(r);
            run.histories.push(History { trial: self.index, label: kind.name().into(), steps: out.history });
            risks.push(risk);
        }
        let (kl, rkl, js, tvd) = (risks[0], risks[1], risks[2], risks[3]);
        let between = |x: &RiskReport| {
            let inside = |v: f64, a: f64, b: f64| a.min(b) <= v && v <= a.max(b);
            inside(x.r_llh, kl.r_llh, rkl.r_llh) || inside(x.r_cvg, kl.r_cvg, rkl.r_cvg)
        };
        let mut r = self.record("all");
        r.metric("js_between", f64::from(u8::from(between(&js))))
            .metric("tvd_between", f64::from(u8::from(between(&tvd))))
            .check("rkl_minus_kl_cvg", rkl.r_cvg - kl.r_cvg, Comparison::Above, 0.0)
            .check("kl_minus_rkl_llh", kl.r_llh - rkl.r_llh, Comparison::Above, 0.0);
        if s.horizon >= 2 {
            let td_seed = seed::split(self.seed, EVAL_STREAM + 1);
            r.metric("teacher_dist", teacher_dist(&p, DEFAULT_TEACHER_DIST_SAMPLES, td_seed)?);
        }
        run.records.push(r);
        Ok(run)
    }

    fn efficiency(&self) -> Result<Run> {
        let p = self.random_teacher()?;
        let init = self.zero_student()?;
        let mut run = Run::default();
        for &objective in &self.spec.objectives {
            let kind = match objective {
                Objective::Divergence(kind) => kind,
                _ => DivergenceKind::Kl,
            };
            let online = TrainConfig { teacher_sampling: TeacherSampling::Online, ..self.train_config(objective) };
            let offline = TrainConfig { teacher_sampling: TeacherSampling::Offline, ..online.clone() };
            let a = train(&p, &init, &online)?;
            let b = train(&p, &init, &offline)?;
            let da = brute_force_seq_divergence(&p, &a.student, kind)?;
            let db = brute_force_seq_divergence(&p, &b.student, kind)?;
            let mut r = self.record(objective.name());
            r.metric("online_divergence", da)
                .metric("offline_divergence", db)
                .metric("online_teacher_evals", a.total_teacher_evals as f64)
                .check(
                    "offline_teacher_evals",
                    b.total_teacher_evals as f64,
                    Comparison::Below,
                    a.total_teacher_evals as f64,
                )
                .check("relative_divergence_gap", (db - da).abs() / da, Comparison::AtMost, OFFLINE_REL_GAP);
            run.records.push(r);
            let label = objective.name();
            run.histories.push(History { trial: self.index, label: format!("{label}-online"), steps: a.history });
            run.histories.push(History { trial: self.index, label: format!("{label}-offline"), steps: b.history });
        }
        Ok(run)
    }
}

/// Number of trials out of `trials` that must satisfy a per-trial property
/// checked "in at least 4 of 5 seeds".
pub fn required_majority(trials: usize) -> usize {
    (4 * trials).div_ceil(5)
}

fn summarize(spec: &ExperimentSpec, records: &[ResultRecord]) -> Vec<ResultRecord> {
    let mut r = ResultRecord::new(spec.preset, None, spec.train.seed, spec.scale, "all");
    match spec.preset {
        Preset::TheoremCheck => {
            let gaps = records
                .iter()
                .filter(|x| x.kind == "tvd")
                .map(|x| x.metrics["stepwise_exact"] - x.metrics["brute_force"]);
            r.check("max_tvd_gap", gaps.fold(f64::NEG_INFINITY, f64::max), Comparison::Above, 0.0);
        }
        Preset::ModeStudy => {
            let count = |name: &str| records.iter().filter(|x| x.kind == "all").map(|x| x.metrics[name]).sum::<f64>();
            let need = required_majority(spec.trials) as f64;
            r.check("js_between_trials", count("js_between"), Comparison::AtLeast, need).check(
                "tvd_between_trials",
                count("tvd_between"),
                Comparison::AtLeast,
                need,
            );
        }
        _ => return Vec::new(),
    }
    vec![r]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::all_passed;

    fn small(preset: Preset) -> ExperimentSpec {
        let mut spec = ExperimentSpec::preset(preset);
        spec.trials = 2;
        spec.scale.vocab = 3;
        spec.scale.horizon = 3;
        spec.scale.teacher_order = 2;
        spec.scale.student_order = spec.scale.student_order.min(1);
        spec.train.steps = 20;
        spec.risk_samples = 50;
        spec
    }

    #[test]
    fn majority_threshold() {
        assert_eq!(required_majority(5), 4);
        assert_eq!(required_majority(1), 1);
        assert_eq!(required_majority(10), 8);
        assert_eq!(required_majority(3), 3);
    }

    #[test]
    fn theorem_check_records() {
        let records = run_experiment(&small(Preset::TheoremCheck)).unwrap();
        // per trial: four kinds, engine, pair checks; then one summary
        assert_eq!(records.len(), 2 * 6 + 1);
        assert!(all_passed(&records), "{records:#?}");
        assert_eq!(records.last().unwrap().trial, None);
        assert_eq!(records[0].seed, trial_seed(0, 0));
    }

    #[test]
    fn grad_check_covers_every_objective() {
        let records = run_experiment(&small(Preset::GradCheck)).unwrap();
        assert_eq!(records.len(), 2 * 7);
        assert!(all_passed(&records), "{records:#?}");
    }

    #[test]
    fn runs_are_deterministic() {
        for preset in [Preset::Convergence, Preset::ModeStudy, Preset::Efficiency] {
            let spec = small(preset);
            let a = run(&spec).unwrap();
            assert_eq!(a, run(&spec).unwrap());
            assert!(!a.histories.is_empty());
            assert!(a.histories.iter().all(|h| h.steps.len() == 20));
        }
    }

    #[test]
    fn trials_do_not_depend_on_the_trial_count() {
        let mut spec = small(Preset::TheoremCheck);
        let two = run_experiment(&spec).unwrap();
        spec.trials = 3;
        let three = run_experiment(&spec).unwrap();
        assert_eq!(two[..12], three[..12]);
    }

    #[test]
    fn invalid_specs_fail_before_running() {
        let mut spec = small(Preset::Convergence);
        spec.trials = 0;
        assert!(run(&spec).is_err());
    }
}
