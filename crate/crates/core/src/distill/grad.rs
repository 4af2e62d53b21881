use alloc::vec;

use super::{CountingModel, LossReport, Objective, TrainConfig};
use crate::decompose::{check_compatible, check_samples, floored_ln, prefix_mixture_weights, JsConditionalMode};
use crate::divergence::DivergenceKind;
use crate::math::{abs, ln, sqrt};
use crate::model::{Autoregressive, Sequence, TabularARModel};
use crate::Result;

/// Loss and analytic gradient for `config.objective` on fixed samples.
///
/// For divergence objectives the loss equals
/// [`mc_loss_with_floor`](crate::decompose::mc_loss_with_floor) on the same
/// inputs. `SeqKd` and `Mle` read their targets from `teacher_seqs`;
/// `Engine` reads `student_seqs`.
pub fn loss_and_grad(
    teacher: &TabularARModel,
    student: &TabularARModel,
    config: &TrainConfig,
    teacher_seqs: &[Sequence],
    student_seqs: &[Sequence],
) -> Result<LossReport> {
    frozen_loss_and_grad(teacher, student, student, config, teacher_seqs, student_seqs)
}

#[inline]
fn indicator(x: f64, floor: f64) -> f64 {
    if x > floor {
        1.0
    } else {
        0.0
    }
}

/// `1 / x` where the floor is inactive, zero where it clamps.
#[inline]
fn inv_above(x: f64, floor: f64) -> f64 {
    if x > floor {
        1.0 / x
    } else {
        0.0
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// As [`loss_and_grad`], with prefix-dependent weights read from `frozen`.
///
/// Only the exact-ratio JS mixture uses prefix probabilities; those come
/// from `frozen` while every explicit student factor comes from `student`.
/// Passing the same model twice gives [`loss_and_grad`]; holding `frozen`
/// fixed while perturbing `student` gives the function whose derivative the
/// returned gradient is.
pub fn frozen_loss_and_grad(
    teacher: &TabularARModel,
    student: &TabularARModel,
    frozen: &TabularARModel,
    config: &TrainConfig,
    teacher_seqs: &[Sequence],
    student_seqs: &[Sequence],
) -> Result<LossReport> {
    check_compatible(teacher, student)?;
    check_compatible(teacher, frozen)?;
    let v = teacher.vocab().size();
    let horizon = teacher.horizon();
    let (use_teacher, use_student) = config.objective.sample_sides();
    check_samples(teacher_seqs, use_teacher, "teacher", v, horizon)?;
    check_samples(student_seqs, use_student, "student", v, horizon)?;

    let counted = CountingModel::new(teacher);
    let floor = config.prob_floor;
    let objective = config.objective;
    let needs_teacher = !matches!(objective, Objective::Mle | Objective::SeqKd);
    let exact_js = objective == Objective::Divergence(DivergenceKind::Js)
        && config.js_mode == JsConditionalMode::ExactMarginalRatio;

    let mut gradient = vec![0.0; student.logits().len()];
    let mut loss = 0.0;
    let mut pc = vec![0.0; v];
    let mut qc = vec![0.0; v];
    let mut fc = vec![0.0; v];
    let mut g = vec![0.0; v];

    let mut accumulate = |seqs: &[Sequence], teacher_side: bool| {
        let scale = 1.0 / seqs.len() as f64;
        for seq in seqs {
            let tokens = seq.tokens();
            let (mut lp_pre, mut lf_pre) = (0.0, 0.0);
            for t in 0..horizon {
                let prefix = &tokens[..t];
                if needs_teacher {
                    counted.cond_probs_into(prefix, &mut pc);
                }
                student.cond_probs_into(prefix, &mut qc);
                let y = tokens[t];
                let step = match objective {
                    Objective::Mle | Objective::SeqKd => {
                        g.fill(0.0);
                        g[y] = -inv_above(qc[y], floor);
                        -floored_ln(qc[y], floor)
                    }
                    Objective::Engine => {
                        let mut value = 0.0;
                        for i in 0..v {
                            let lp = floored_ln(pc[i], floor);
                            g[i] = -lp;
                            value -= qc[i] * lp;
                        }
                        value
                    }
                    Objective::Divergence(DivergenceKind::Kl) => {
                        let mut value = 0.0;
                        for i in 0..v {
                            g[i] = -pc[i] * inv_above(qc[i], floor);
                            value -= pc[i] * floored_ln(qc[i], floor);
                        }
                        value
                    }
                    Objective::Divergence(DivergenceKind::Rkl) => {
                        let mut value = 0.0;
                        for i in 0..v {
                            let lq = floored_ln(qc[i], floor);
                            let lp = floored_ln(pc[i], floor);
                            g[i] = lq - lp + indicator(qc[i], floor);
                            value += qc[i] * (lq - lp);
                        }
                        value
                    }
                    Objective::Divergence(DivergenceKind::Tvd) => {
                        let mut value = 0.0;
                        for i in 0..v {
                            g[i] = 0.25 * sign(qc[i] - pc[i]);
                            value += 0.25 * abs(qc[i] - pc[i]);
                        }
                        value
                    }
                    Objective::Divergence(DivergenceKind::Js) => {
                        let (wp, wq) = if exact_js { prefix_mixture_weights(lp_pre, lf_pre) } else { (0.5, 0.5) };
                        let mut value = 0.0;
                        for i in 0..v {
                            let m = wp * pc[i] + wq * qc[i];
                            let lm = floored_ln(m, floor);
                            let dlm = wq * inv_above(m, floor);
                            if teacher_side {
                                g[i] = -0.5 * pc[i] * dlm;
                                value -= 0.5 * pc[i] * lm;
                            } else {
                                let lq = floored_ln(qc[i], floor);
                                g[i] = 0.5 * (lq - lm + indicator(qc[i], floor) - qc[i] * dlm);
                                value += 0.5 * qc[i] * (lq - lm);
                            }
                        }
                        value
                    }
                };
                loss += scale * step;

                // softmax Jacobian: dz_i = q_i (g_i - <q, g>)
                let dot: f64 = qc.iter().zip(&g).map(|(q, g)| q * g).sum();
                let row = student.row_of(prefix);
                for (slot, (&q, &gi)) in gradient[row * v..(row + 1) * v].iter_mut().zip(qc.iter().zip(&g)) {
                    *slot += scale * q * (gi - dot);
                }

                if exact_js {
                    frozen.cond_probs_into(prefix, &mut fc);
                    lp_pre += ln(pc[y]);
                    lf_pre += ln(fc[y]);
                }
            }
        }
    };

    if use_teacher {
        accumulate(teacher_seqs, true);
    }
    if use_student {
        accumulate(student_seqs, false);
    }
    Ok(LossReport { loss, gradient, teacher_eval_count: counted.count() })
}

/// Relative error between the analytic gradient and central differences.
///
/// Each student logit is moved by `±h` while samples and the prefix
/// weights (read from the unperturbed student) stay fixed. Returns
/// `|fd - g| / max(|fd|, |g|)` in the Euclidean norm, or zero when both
/// vanish.
pub fn gradient_check(
    teacher: &TabularARModel,
    student: &TabularARModel,
    config: &TrainConfig,
    teacher_seqs: &[Sequence],
    student_seqs: &[Sequence],
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(crate::Error::Argument(alloc::format!("step must be positive, got {h}")));
    }
    let analytic = loss_and_grad(teacher, student, config, teacher_seqs, student_seqs)?.gradient;
    let mut probe = student.clone();
    let (mut diff, mut fd_norm, mut g_norm) = (0.0, 0.0, 0.0);
    for (i, &g) in analytic.iter().enumerate() {
        let z = student.logits()[i];
        probe.logits_mut()[i] = z + h;
        let up = frozen_loss_and_grad(teacher, &probe, student, config, teacher_seqs, student_seqs)?.loss;
        probe.logits_mut()[i] = z - h;
        let down = frozen_loss_and_grad(teacher, &probe, student, config, teacher_seqs, student_seqs)?.loss;
        probe.logits_mut()[i] = z;
        let fd = (up - down) / (2.0 * h);
        diff += (fd - g) * (fd - g);
        fd_norm += fd * fd;
        g_norm += g * g;
    }
    let scale = fd_norm.max(g_norm);
    Ok(if scale == 0.0 { 0.0 } else { sqrt(diff / scale) })
}
