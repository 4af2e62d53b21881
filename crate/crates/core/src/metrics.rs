//! Mode-behavior diagnostics.
//!
//! The likelihood risk scores student samples under the teacher (high when
//! the student averages modes into atypical sequences); the coverage risk
//! scores teacher samples under the student (high when teacher modes are
//! missing from the student). Both are in nats per sequence.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decompose::{floored_ln, DEFAULT_PROB_FLOOR};
use crate::model::{sample, Autoregressive, Sequence, TabularARModel};
use crate::{seed, Error, Result};

/// Default number of teacher samples behind [`teacher_dist`].
pub const DEFAULT_TEACHER_DIST_SAMPLES: usize = 5;

/// Both risks for one student.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub r_llh: f64,
    pub r_cvg: f64,
    pub n_samples: usize,
}

impl RiskReport {
    pub fn new(
        teacher: &TabularARModel,
        student: &TabularARModel,
        student_samples: &[Sequence],
        teacher_samples: &[Sequence],
    ) -> Result<Self> {
        Ok(Self {
            r_llh: likelihood_risk(teacher, student_samples)?,
            r_cvg: coverage_risk(student, teacher_samples)?,
            n_samples: student_samples.len().min(teacher_samples.len()),
        })
    }
}

/// Mean of `-sum_t ln max(m(y_t|y_<t), floor)` over `samples`.
pub fn mean_floored_nll(model: &TabularARModel, samples: &[Sequence], floor: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("at least one sample is required".into()));
    }
    let v = model.vocab().size();
    let mut probs = vec![0.0; v];
    let mut total = 0.0;
    for seq in samples {
        seq.check(v, model.horizon())?;
        let tokens = seq.tokens();
        for t in 0..tokens.len() {
            model.cond_probs_into(&tokens[..t], &mut probs);
            total -= floored_ln(probs[tokens[t]], floor);
        }
    }
    Ok(total / samples.len() as f64)
}

/// `R_llh`: average teacher negative log-likelihood of student samples.
pub fn likelihood_risk(teacher: &TabularARModel, student_samples: &[Sequence]) -> Result<f64> {
    mean_floored_nll(teacher, student_samples, DEFAULT_PROB_FLOOR)
}

/// `R_cvg`: average student negative log-likelihood of teacher samples.
pub fn coverage_risk(student: &TabularARModel, teacher_samples: &[Sequence]) -> Result<f64> {
    mean_floored_nll(student, teacher_samples, DEFAULT_PROB_FLOOR)
}

/// Unique n-grams over total n-grams, pooled across samples.
pub fn distinct_ngram(samples: &[Sequence], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("n-gram order must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::Argument("at least one sample is required".into()));
    }
    let mut unique: BTreeSet<&[usize]> = BTreeSet::new();
    let mut total = 0usize;
    for seq in samples {
        if seq.len() < n {
            return Err(Error::Argument(format!("sample of length {} is shorter than n = {n}", seq.len())));
        }
        for gram in seq.tokens().windows(n) {
            unique.insert(gram);
            total += 1;
        }
    }
    Ok(unique.len() as f64 / total as f64)
}

/// Distinct-bigram ratio of `per_input_samples` teacher samples.
pub fn teacher_dist(teacher: &TabularARModel, per_input_samples: usize, seed: u64) -> Result<f64> {
    if per_input_samples < 2 {
        return Err(Error::Argument("teacher_dist needs at least two samples".into()));
    }
    let mut rng = seed::rng(seed);
    let samples: Vec<Sequence> = (0..per_input_samples).map(|_| sample(teacher, &mut rng)).collect();
    distinct_ngram(&samples, 2)
}
