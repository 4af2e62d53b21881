//! Sequence-level divergences and their step-wise forms.
//!
//! Three families of functions live here:
//!
//! * brute-force oracles over the full `V^T` sequence space
//!   ([`brute_force_seq_divergence`], [`engine_loss_exact`],
//!   [`student_seq_entropy`]);
//! * exact step-wise sums, where each position contributes the expected
//!   per-token divergence under the sampling model's prefix distribution
//!   ([`stepwise_exact`]);
//! * the Monte Carlo training losses evaluated on sampled sequences
//!   ([`mc_loss`], [`seqkd_loss`]).
//!
//! For KL, RKL and JS (with exact mixture conditionals) the step-wise sum
//! equals the sequence-level divergence. For TVD it is the average of the
//! teacher-prefix and student-prefix bounds
//! `1/4 E_p[sum_t sum_y |q - p|] + 1/4 E_q[sum_t sum_y |q - p|]`, each of which
//! (taken at weight 1/2 instead of 1/4) upper-bounds the sequence TVD on its own.
//!
//! Monte Carlo losses drop model-independent constants:
//!
//! | kind | excluded constant |
//! |------|-------------------|
//! | KL   | teacher entropy `sum_t H(p(.|y<t))` |
//! | JS   | half the teacher entropy; the `-p log m` cross term is kept |
//! | RKL, TVD | nothing |
//!
//! Losses are averaged over sampled sequences and summed over positions,
//! without length normalization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::divergence::{pointwise_divergence, DivergenceKind};
use crate::math::{abs, exp, ln, log_add_exp};
use crate::model::{prefix_logprobs, Autoregressive, Sequence, TabularARModel};
use crate::{Error, Result};

/// Probability floor applied before logarithms in training-path losses.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

/// How the JS mixture conditional `m(y_t | y_<t)` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JsConditionalMode {
    /// `m(y_1:t) / m(y_1:t-1)` from the sequence-level mixture. Exact.
    ExactMarginalRatio,
    /// `p(y_t|y_<t)/2 + q(y_t|y_<t)/2`. Cheaper, but only an approximation.
    MixtureOfConditionals,
}

impl JsConditionalMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::ExactMarginalRatio => "exact",
            Self::MixtureOfConditionals => "mixture",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exact" => Some(Self::ExactMarginalRatio),
            "mixture" => Some(Self::MixtureOfConditionals),
            _ => None,
        }
    }
}

/// An objective value, flagged by whether student-independent constants are in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub includes_constant: bool,
}

pub(crate) fn check_compatible(teacher: &TabularARModel, student: &TabularARModel) -> Result<()> {
    if teacher.vocab() != student.vocab() || teacher.horizon() != student.horizon() {
        return Err(Error::Incompatible(format!(
            "teacher (V={}, T={}) vs student (V={}, T={})",
            teacher.vocab().size(),
            teacher.horizon(),
            student.vocab().size(),
            student.horizon()
        )));
    }
    Ok(())
}

/// `D(p || q)` between the two full sequence distributions.
pub fn brute_force_seq_divergence(
    teacher: &TabularARModel,
    student: &TabularARModel,
    kind: DivergenceKind,
) -> Result<f64> {
    check_compatible(teacher, student)?;
    let p = teacher.seq_distribution()?;
    let q = student.seq_distribution()?;
    pointwise_divergence(p.probs(), q.probs(), kind)
}

/// Step-wise divergence with every prefix expectation taken exactly.
pub fn stepwise_exact(
    teacher: &TabularARModel,
    student: &TabularARModel,
    kind: DivergenceKind,
    js_mode: JsConditionalMode,
) -> Result<f64> {
    check_compatible(teacher, student)?;
    let v = teacher.vocab().size();
    let horizon = teacher.horizon();
    let teacher_rows = teacher.row_probs();
    let student_rows = student.row_probs();
    let lp = prefix_logprobs(teacher)?;
    let lq = prefix_logprobs(student)?;
    // ln m for every prefix, only needed for the exact JS conditionals
    let lm: Vec<Vec<f64>> = if kind == DivergenceKind::Js && js_mode == JsConditionalMode::ExactMarginalRatio {
        lp.iter().zip(&lq).map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| ln(0.5) + log_add_exp(x, y)).collect()).collect()
    } else {
        Vec::new()
    };

    let mut total = 0.0;
    let mut m_cond = vec![0.0; v];
    for t in 0..horizon {
        for i in 0..lp[t].len() {
            let tr = teacher.row_of_index(t, i);
            let sr = student.row_of_index(t, i);
            let pc = &teacher_rows[tr * v..(tr + 1) * v];
            let qc = &student_rows[sr * v..(sr + 1) * v];
            let wp = exp(lp[t][i]);
            let wq = exp(lq[t][i]);
            let term = match kind {
                DivergenceKind::Kl => weighted(wp, pointwise_divergence(pc, qc, DivergenceKind::Kl)?),
                DivergenceKind::Rkl => weighted(wq, pointwise_divergence(qc, pc, DivergenceKind::Kl)?),
                DivergenceKind::Tvd => {
                    let d = pointwise_divergence(pc, qc, DivergenceKind::Tvd)?;
                    0.5 * wp * d + 0.5 * wq * d
                }
                DivergenceKind::Js => {
                    match js_mode {
                        JsConditionalMode::ExactMarginalRatio => {
                            let base = lm[t][i];
                            if base == f64::NEG_INFINITY {
                                continue;
                            }
                            for (y, slot) in m_cond.iter_mut().enumerate() {
                                *slot = exp(lm[t + 1][i * v + y] - base);
                            }
                        }
                        JsConditionalMode::MixtureOfConditionals => {
                            for ((slot, &a), &b) in m_cond.iter_mut().zip(pc).zip(qc) {
                                *slot = 0.5 * a + 0.5 * b;
                            }
                        }
                    }
                    0.5 * weighted(wp, pointwise_divergence(pc, &m_cond, DivergenceKind::Kl)?)
                        + 0.5 * weighted(wq, pointwise_divergence(qc, &m_cond, DivergenceKind::Kl)?)
                }
            };
            total += term;
        }
    }
    Ok(total)
}

/// `w * d` with zero-weight prefixes contributing nothing, even when `d` is infinite.
fn weighted(w: f64, d: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * d
    }
}

#[inline]
pub(crate) fn floored_ln(x: f64, floor: f64) -> f64 {
    ln(x.max(floor))
}

/// Monte Carlo step-wise loss with the default probability floor.
pub fn mc_loss(
    teacher: &TabularARModel,
    student: &TabularARModel,
    kind: DivergenceKind,
    js_mode: JsConditionalMode,
    teacher_seqs: &[Sequence],
    student_seqs: &[Sequence],
) -> Result<ObjectiveValue> {
    mc_loss_with_floor(teacher, student, kind, js_mode, teacher_seqs, student_seqs, DEFAULT_PROB_FLOOR)
}

/// Which sample lists a divergence consumes: (teacher side, student side).
pub fn sample_sides(kind: DivergenceKind) -> (bool, bool) {
    match kind {
        DivergenceKind::Kl => (true, false),
        DivergenceKind::Rkl => (false, true),
        DivergenceKind::Js | DivergenceKind::Tvd => (true, true),
    }
}

pub(crate) fn check_samples(seqs: &[Sequence], needed: bool, what: &str, v: usize, horizon: usize) -> Result<()> {
    if needed && seqs.is_empty() {
        return Err(Error::Argument(format!("{what} samples are required and must be non-empty")));
    }
    if needed {
        for s in seqs {
            s.check(v, horizon)?;
        }
    }
    Ok(())
}

/// Monte Carlo step-wise loss: averaged over the given samples, summed over
/// positions, with full-vocabulary inner sums. Constants are excluded.
#[allow(clippy::too_many_arguments)]
pub fn mc_loss_with_floor(
    teacher: &TabularARModel,
    student: &TabularARModel,
    kind: DivergenceKind,
    js_mode: JsConditionalMode,
    teacher_seqs: &[Sequence],
    student_seqs: &[Sequence],
    floor: f64,
) -> Result<ObjectiveValue> {
    check_compatible(teacher, student)?;
    let v = teacher.vocab().size();
    let horizon = teacher.horizon();
    let (use_teacher, use_student) = sample_sides(kind);
    check_samples(teacher_seqs, use_teacher, "teacher", v, horizon)?;
    check_samples(student_seqs, use_student, "student", v, horizon)?;

    let mut pc = vec![0.0; v];
    let mut qc = vec![0.0; v];
    let mut mc = vec![0.0; v];

    // Sum over positions along one sequence; `teacher_side` selects which
    // half of a two-sided loss is being evaluated.
    let mut along = |seq: &Sequence, teacher_side: bool| -> f64 {
        let tokens = seq.tokens();
        let mut total = 0.0;
        let (mut lp_pre, mut lq_pre) = (0.0, 0.0);
        for t in 0..horizon {
            let prefix = &tokens[..t];
            teacher.cond_probs_into(prefix, &mut pc);
            student.cond_probs_into(prefix, &mut qc);
            total += match kind {
                DivergenceKind::Kl => -pc.iter().zip(&qc).map(|(&p, &q)| p * floored_ln(q, floor)).sum::<f64>(),
                DivergenceKind::Rkl => {
                    qc.iter().zip(&pc).map(|(&q, &p)| q * (floored_ln(q, floor) - floored_ln(p, floor))).sum::<f64>()
                }
                DivergenceKind::Tvd => 0.25 * pc.iter().zip(&qc).map(|(&p, &q)| abs(q - p)).sum::<f64>(),
                DivergenceKind::Js => {
                    let (wp, wq) = match js_mode {
                        JsConditionalMode::MixtureOfConditionals => (0.5, 0.5),
                        JsConditionalMode::ExactMarginalRatio => prefix_mixture_weights(lp_pre, lq_pre),
                    };
                    for ((m, &p), &q) in mc.iter_mut().zip(&pc).zip(&qc) {
                        *m = wp * p + wq * q;
                    }
                    if teacher_side {
                        -0.5 * pc.iter().zip(&mc).map(|(&p, &m)| p * floored_ln(m, floor)).sum::<f64>()
                    } else {
                        0.5 * qc
                            .iter()
                            .zip(&mc)
                            .map(|(&q, &m)| q * (floored_ln(q, floor) - floored_ln(m, floor)))
                            .sum::<f64>()
                    }
                }
            };
            let y = tokens[t];
            lp_pre += ln(pc[y]);
            lq_pre += ln(qc[y]);
        }
        total
    };

    let mut value = 0.0;
    if use_teacher {
        value += teacher_seqs.iter().map(|s| along(s, true)).sum::<f64>() / teacher_seqs.len() as f64;
    }
    if use_student {
        value += student_seqs.iter().map(|s| along(s, false)).sum::<f64>() / student_seqs.len() as f64;
    }
    Ok(ObjectiveValue { value, includes_constant: false })
}

/// Posterior weights `(p(pre), q(pre)) / (p(pre) + q(pre))` from log prefix probabilities.
///
/// With these, `m(y|pre) = w_p p(y|pre) + w_q q(y|pre)` equals the exact
/// ratio `m(pre, y) / m(pre)`.
pub(crate) fn prefix_mixture_weights(lp: f64, lq: f64) -> (f64, f64) {
    if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
        return (0.5, 0.5);
    }
    let norm = log_add_exp(lp, lq);
    (exp(lp - norm), exp(lq - norm))
}

/// Student-independent constant dropped by [`mc_loss`] for `kind`, in expectation
/// over teacher samples.
pub fn excluded_constant(teacher: &TabularARModel, kind: DivergenceKind) -> Result<f64> {
    Ok(match kind {
        DivergenceKind::Kl => student_seq_entropy(teacher)?,
        DivergenceKind::Js => 0.5 * student_seq_entropy(teacher)?,
        DivergenceKind::Rkl | DivergenceKind::Tvd => 0.0,
    })
}

/// Negative student log-likelihood of a hard target sequence.
pub fn seqkd_loss(student: &TabularARModel, hard_target: &Sequence) -> Result<ObjectiveValue> {
    Ok(ObjectiveValue { value: -student.seq_logprob(hard_target)?, includes_constant: false })
}

/// `E_{Y~q}[-ln p(Y)]` by enumeration.
pub fn engine_loss_exact(teacher: &TabularARModel, student: &TabularARModel) -> Result<f64> {
    check_compatible(teacher, student)?;
    let lp = prefix_logprobs(teacher)?;
    let lq = prefix_logprobs(student)?;
    let horizon = teacher.horizon();
    let mut total = 0.0;
    for (&a, &b) in lp[horizon].iter().zip(&lq[horizon]) {
        if b == f64::NEG_INFINITY {
            continue;
        }
        if a == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        total -= exp(b) * a;
    }
    Ok(total)
}

/// Sequence entropy `-sum_Y q(Y) ln q(Y)` by enumeration.
pub fn student_seq_entropy(student: &TabularARModel) -> Result<f64> {
    let lq = prefix_logprobs(student)?;
    Ok(-lq[student.horizon()].iter().filter(|lp| lp.is_finite()).map(|&lp| exp(lp) * lp).sum::<f64>())
}
