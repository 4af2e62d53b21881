//! Exact f-divergences between finite categorical distributions.
//!
//! Natural logarithms throughout. Zero probabilities are handled by their
//! exact limits rather than by flooring, so these functions can serve as
//! oracles for identities that must hold to machine precision. Infinite
//! KL/RKL values are reported as `f64::INFINITY`.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use crate::math::{abs, ln};
use crate::{Error, Result};

/// Tolerance on the total mass of a [`ProbVector`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// The four divergences of the f-distill family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DivergenceKind {
    /// Forward KL, `D(p || q)`.
    Kl,
    /// Reverse KL, `D(q || p)`.
    Rkl,
    /// Jensen-Shannon against the mixture `m = (p + q) / 2`.
    Js,
    /// Total variation distance, `1/2 sum |p - q|`.
    Tvd,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 4] = [Self::Kl, Self::Rkl, Self::Js, Self::Tvd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kl => "kl",
            Self::Rkl => "rkl",
            Self::Js => "js",
            Self::Tvd => "tvd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kl" => Some(Self::Kl),
            "rkl" => Some(Self::Rkl),
            "js" => Some(Self::Js),
            "tvd" => Some(Self::Tvd),
            _ => None,
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A categorical distribution over `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates non-negativity and unit mass (within [`NORMALIZATION_TOL`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut total = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
            }
            total += p;
        }
        if abs(total - 1.0) > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("mass is {total}")));
        }
        Ok(Self(probs))
    }

    /// Wraps probabilities produced by a softmax or an exact enumeration.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(abs(probs.iter().sum::<f64>() - 1.0) <= NORMALIZATION_TOL);
        Self(probs)
    }

    pub fn uniform(len: usize) -> Self {
        Self(alloc::vec![1.0 / len as f64; len])
    }

    /// Point mass on `index`.
    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut probs = alloc::vec![0.0; len];
        probs[index] = 1.0;
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// The generator `f` of each divergence, so that `D_f(p||q) = sum q f(p/q)`.
///
/// KL: `t ln t`; RKL: `-ln t`; JS: `-(t+1) ln((t+1)/2) + t ln t`;
/// TVD: `|t - 1| / 2`.
pub fn f_value(kind: DivergenceKind, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("generator argument must be positive, got {t}")));
    }
    Ok(match kind {
        DivergenceKind::Kl => t * ln(t),
        DivergenceKind::Rkl => -ln(t),
        DivergenceKind::Js => -(t + 1.0) * ln((t + 1.0) / 2.0) + t * ln(t),
        DivergenceKind::Tvd => 0.5 * abs(t - 1.0),
    })
}

/// `sum a ln(a / b)` with `0 ln(0/b) = 0` and `+inf` when `a > 0 = b`.
fn kl_sum(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        if x == 0.0 {
            continue;
        }
        if y == 0.0 {
            return f64::INFINITY;
        }
        total += x * (ln(x) - ln(y));
    }
    total
}

/// Divergence of `p` from `q` under `kind`.
///
/// JS is reported with the usual one-half weights,
/// `JS = KL(p||m)/2 + KL(q||m)/2`, which equals half of
/// `sum q f(p/q)` for the JS generator in [`f_value`] and is bounded by `ln 2`.
pub fn pointwise_divergence(p: &[f64], q: &[f64], kind: DivergenceKind) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension { expected: p.len(), got: q.len() });
    }
    Ok(match kind {
        DivergenceKind::Kl => kl_sum(p, q),
        DivergenceKind::Rkl => kl_sum(q, p),
        DivergenceKind::Js => {
            let mut total = 0.0;
            for (&a, &b) in p.iter().zip(q) {
                let m = 0.5 * a + 0.5 * b;
                if a > 0.0 {
                    total += a * (ln(a) - ln(m));
                }
                if b > 0.0 {
                    total += b * (ln(b) - ln(m));
                }
            }
            // Rounding can leave a tiny negative residue when p == q.
            (0.5 * total).max(0.0)
        }
        DivergenceKind::Tvd => 0.5 * p.iter().zip(q).map(|(&a, &b)| abs(a - b)).sum::<f64>(),
    })
}

/// Elementwise average `(p + q) / 2`.
pub fn mixture(p: &ProbVector, q: &ProbVector) -> Result<ProbVector> {
    if p.len() != q.len() {
        return Err(Error::Dimension { expected: p.len(), got: q.len() });
    }
    Ok(ProbVector(p.iter().zip(q.iter()).map(|(&a, &b)| 0.5 * a + 0.5 * b).collect()))
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&x| crate::math::xlogx(x)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::{E, LN_2};
    use proptest::prelude::*;

    #[test]
    fn generator_values() {
        for kind in DivergenceKind::ALL {
            assert_eq!(f_value(kind, 1.0).unwrap(), 0.0);
        }
        assert_eq!(f_value(DivergenceKind::Tvd, 3.0).unwrap(), 1.0);
        assert!((f_value(DivergenceKind::Rkl, E).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(f_value(DivergenceKind::Kl, 0.0), Err(Error::Domain(_))));
        assert!(f_value(DivergenceKind::Js, -1.0).is_err());
    }

    #[test]
    fn hand_evaluated_divergences() {
        let kl = pointwise_divergence(&[0.5, 0.5], &[0.25, 0.75], DivergenceKind::Kl).unwrap();
        let expected = 0.5 * LN_2 + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.143841).abs() < 1e-6);

        let tvd = pointwise_divergence(&[1.0, 0.0], &[0.0, 1.0], DivergenceKind::Tvd).unwrap();
        assert_eq!(tvd, 1.0);
        let js = pointwise_divergence(&[1.0, 0.0], &[0.0, 1.0], DivergenceKind::Js).unwrap();
        assert!((js - LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_limits() {
        let p = [0.6, 0.4];
        let q = [1.0, 0.0];
        assert_eq!(pointwise_divergence(&p, &q, DivergenceKind::Kl).unwrap(), f64::INFINITY);
        // RKL sums q ln(q/p); the index with q = 0 contributes nothing.
        let rkl = pointwise_divergence(&p, &q, DivergenceKind::Rkl).unwrap();
        assert!((rkl - (1.0f64 / 0.6).ln()).abs() < 1e-15);
        let tvd = pointwise_divergence(&p, &q, DivergenceKind::Tvd).unwrap();
        assert!((tvd - 0.4).abs() < 1e-15);
        // JS: the index with q = 0 contributes p ln 2 / 2.
        let js = pointwise_divergence(&p, &q, DivergenceKind::Js).unwrap();
        let m0: f64 = 0.8;
        let expected = 0.5 * (0.6 * (0.6f64 / m0).ln() + 0.4 * LN_2) + 0.5 * (1.0 / m0).ln();
        assert!((js - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = pointwise_divergence(&[1.0], &[0.5, 0.5], DivergenceKind::Kl).unwrap_err();
        assert_eq!(err, Error::Dimension { expected: 1, got: 2 });
        let a = ProbVector::uniform(2);
        let b = ProbVector::uniform(3);
        assert!(mixture(&a, &b).is_err());
    }

    #[test]
    fn mixture_examples() {
        let a = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let b = ProbVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(mixture(&a, &b).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(mixture(&a, &a).unwrap(), a);
        let c = ProbVector::new(vec![0.2, 0.8]).unwrap();
        let d = ProbVector::new(vec![0.6, 0.4]).unwrap();
        let m = mixture(&c, &d).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-15 && (m[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, len).prop_map(|raw| {
            let total: f64 = raw.iter().sum::<f64>() + 1e-3;
            // keep a little mass everywhere so KL stays finite
            raw.iter().map(|x| (x + 1e-3 / raw.len() as f64) / total).collect()
        })
    }

    proptest! {
        #[test]
        fn divergence_properties(p in distribution(5), q in distribution(5)) {
            for kind in DivergenceKind::ALL {
                let d = pointwise_divergence(&p, &q, kind).unwrap();
                prop_assert!(d >= 0.0, "{kind} = {d}");
                prop_assert_eq!(pointwise_divergence(&p, &p, kind).unwrap(), 0.0);
            }
            let kl = pointwise_divergence(&p, &q, DivergenceKind::Kl).unwrap();
            let rkl_swapped = pointwise_divergence(&q, &p, DivergenceKind::Rkl).unwrap();
            prop_assert!((kl - rkl_swapped).abs() <= 1e-12);

            let js = pointwise_divergence(&p, &q, DivergenceKind::Js).unwrap();
            let js_swapped = pointwise_divergence(&q, &p, DivergenceKind::Js).unwrap();
            prop_assert!((js - js_swapped).abs() <= 1e-12);
            prop_assert!(js <= LN_2);

            let tvd = pointwise_divergence(&p, &q, DivergenceKind::Tvd).unwrap();
            let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!((tvd - 0.5 * l1).abs() <= 1e-12);
            prop_assert!(tvd <= 1.0);
            prop_assert!(tvd <= (kl / 2.0).sqrt() + 1e-15);
        }

        #[test]
        fn js_equals_half_generator_sum(p in distribution(4), q in distribution(4)) {
            let via_generator: f64 = p
                .iter()
                .zip(&q)
                .map(|(&a, &b)| b * f_value(DivergenceKind::Js, a / b).unwrap())
                .sum();
            let js = pointwise_divergence(&p, &q, DivergenceKind::Js).unwrap();
            prop_assert!((js - 0.5 * via_generator).abs() <= 1e-12);
        }
    }
}
