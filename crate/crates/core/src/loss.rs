//! Log loss, cumulative loss, regret accounting and log-domain arithmetic.
//!
//! Everything is in nats. A zero probability assigned to the observed label
//! yields an infinite loss rather than an error; accumulators saturate at
//! `+inf`.

use std::fmt;

use crate::error::{Error, Result};
use crate::predictors::Transcript;

/// Probability that the label equals one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ProbValue(f64);

impl ProbValue {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidProbability(value))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 1/2.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Self(0.5)
        } else {
            Self(value.clamp(0.0, 1.0))
        }
    }

    pub const HALF: ProbValue = ProbValue(0.5);

    pub fn get(self) -> f64 {
        self.0
    }

    /// Probability assigned to `label`.
    pub fn prob_of(self, label: Label) -> f64 {
        match label {
            Label::One => self.0,
            Label::Zero => 1.0 - self.0,
        }
    }
}

impl fmt::Display for ProbValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Zero,
    One,
}

impl Label {
    pub fn from_int(v: i64) -> Result<Self> {
        match v {
            0 => Ok(Label::Zero),
            1 => Ok(Label::One),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Label::One
        } else {
            Label::Zero
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Zero => 0,
            Label::One => 1,
        }
    }

    pub fn is_one(self) -> bool {
        self == Label::One
    }

    /// Labels of the `len`-bit word `bits`, most significant bit first.
    pub fn sequence_from_bits(bits: u64, len: usize) -> Vec<Label> {
        (0..len)
            .map(|t| Label::from_bit((bits >> (len - 1 - t)) & 1 == 1))
            .collect()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Nonnegative loss in nats, possibly `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LossValue(f64);

impl LossValue {
    pub const ZERO: LossValue = LossValue(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidParameter(format!("negative loss {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl std::ops::Add for LossValue {
    type Output = LossValue;
    fn add(self, rhs: LossValue) -> LossValue {
        LossValue(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for LossValue {
    fn add_assign(&mut self, rhs: LossValue) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for LossValue {
    fn sum<I: Iterator<Item = LossValue>>(iter: I) -> Self {
        iter.fold(LossValue::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for LossValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Unnormalized weight in log domain; `-inf` encodes zero mass.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogWeight(pub f64);

impl LogWeight {
    pub const ZERO_MASS: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }
}

impl fmt::Display for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `-y ln p - (1-y) ln(1-p)`.
pub fn log_loss(pred: ProbValue, label: Label) -> LossValue {
    LossValue(-pred.prob_of(label).ln())
}

/// Log loss on raw floats; callers guarantee `p` in `[0, 1]`.
#[inline]
pub(crate) fn raw_log_loss(p: f64, label: Label) -> f64 {
    match label {
        Label::One => -p.ln(),
        Label::Zero => -(1.0 - p).ln(),
    }
}

pub fn cumulative_loss(preds: &[ProbValue], labels: &[Label]) -> Result<LossValue> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs labels",
            left: preds.len(),
            right: labels.len(),
        });
    }
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| log_loss(p, y))
        .sum())
}

/// `ln sum exp(v_i)` by max-shifting.
pub fn log_sum_exp(values: &[LogWeight]) -> Result<LogWeight> {
    if values.is_empty() {
        return Err(Error::Empty("log_sum_exp"));
    }
    Ok(LogWeight(lse(values.iter().map(|v| v.0))))
}

/// Max-shifted log-sum-exp over raw values; `-inf` for an empty iterator.
pub(crate) fn lse<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let it = values.into_iter();
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(e^a + e^b)`.
#[inline]
pub(crate) fn lse2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Difference of two cumulative losses, `learner - best`.
///
/// When both are infinite the regret is reported as zero: neither side
/// assigns positive probability to the sequence.
pub fn regret_of(learner: LossValue, best: LossValue) -> f64 {
    if learner.is_infinite() && best.is_infinite() {
        0.0
    } else {
        learner.get() - best.get()
    }
}

/// Learner cumulative loss minus the best expert's loss on the same data.
pub fn pointwise_regret(learner: &Transcript, best_loss: LossValue) -> f64 {
    regret_of(learner.cumulative_loss(), best_loss)
}

/// `ln C(n, k)` for `k = 0..=n`, built by the multiplicative recurrence.
pub fn ln_binomial_row(n: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    row.push(0.0);
    for k in 0..n {
        acc += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
        row.push(acc);
    }
    // Symmetrize so that ln C(n,k) == ln C(n,n-k) exactly.
    for k in 0..=n / 2 {
        row[n - k] = row[k];
    }
    row
}

/// `k ln(k/n) + (n-k) ln(1-k/n)` with `0 ln 0 = 0`.
pub fn bernoulli_mle_log_lik(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = k as f64 / n as f64;
    xlogy(k as f64, p) + xlogy((n - k) as f64, 1.0 - p)
}

/// `x ln y` with `0 ln 0 = 0`.
#[inline]
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: f64) -> ProbValue {
        ProbValue::new(v).unwrap()
    }

    #[test]
    fn log_loss_examples() {
        assert!((log_loss(p(0.5), Label::One).get() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_loss(p(1.0), Label::One).get(), 0.0);
        assert!((log_loss(p(0.25), Label::Zero).get() - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert!(log_loss(p(0.0), Label::One).is_infinite());
        assert!(log_loss(p(1.0), Label::Zero).is_infinite());
    }

    #[test]
    fn prob_value_range() {
        assert!(ProbValue::new(-0.1).is_err());
        assert!(ProbValue::new(1.000_001).is_err());
        assert!(ProbValue::new(f64::NAN).is_err());
        assert!(ProbValue::new(0.0).is_ok());
        assert!(Label::from_int(2).is_err());
    }

    #[test]
    fn cumulative_loss_examples() {
        let two = cumulative_loss(&[p(0.5), p(0.5)], &[Label::One, Label::Zero]).unwrap();
        assert!((two.get() - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(cumulative_loss(&[], &[]).unwrap().get(), 0.0);
        let inf = cumulative_loss(&[p(1.0), p(0.5)], &[Label::Zero, Label::One]).unwrap();
        assert!(inf.is_infinite());
        assert!(matches!(
            cumulative_loss(&[p(0.5)], &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn log_sum_exp_examples() {
        let two = log_sum_exp(&[LogWeight(0.0), LogWeight(0.0)]).unwrap();
        assert!((two.0 - 2f64.ln()).abs() < 1e-15);
        let x = log_sum_exp(&[LogWeight::ZERO_MASS, LogWeight(-3.7)]).unwrap();
        assert_eq!(x.0, -3.7);
        let four = log_sum_exp(&[LogWeight(1f64.ln()), LogWeight(3f64.ln())]).unwrap();
        assert!((four.0 - 4f64.ln()).abs() < 1e-15);
        assert!(log_sum_exp(&[]).is_err());
        let all_zero = log_sum_exp(&[LogWeight::ZERO_MASS, LogWeight::ZERO_MASS]).unwrap();
        assert_eq!(all_zero.0, f64::NEG_INFINITY);
    }

    #[test]
    fn regret_arithmetic() {
        let l = LossValue::new(3.0).unwrap();
        let b = LossValue::new(2.5).unwrap();
        assert!((regret_of(l, b) - 0.5).abs() < 1e-15);
        let ln4 = LossValue::new(2.0 * 2f64.ln()).unwrap();
        assert_eq!(regret_of(ln4, ln4), 0.0);
    }

    #[test]
    fn binomial_row_matches_direct() {
        let row = ln_binomial_row(10);
        let direct = [1.0, 10.0, 45.0, 120.0, 210.0, 252.0, 210.0, 120.0, 45.0, 10.0, 1.0];
        for (k, c) in direct.iter().enumerate() {
            assert!((row[k] - f64::ln(*c)).abs() < 1e-12);
        }
        assert_eq!(ln_binomial_row(0), vec![0.0]);
    }

    #[test]
    fn loss_monotone_on_grid() {
        let grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        for w in grid.windows(2) {
            assert!(log_loss(p(w[0]), Label::One) > log_loss(p(w[1]), Label::One));
            assert!(log_loss(p(w[0]), Label::Zero) < log_loss(p(w[1]), Label::Zero));
        }
    }

    proptest! {
        #[test]
        fn exp_neg_loss_is_likelihood(q in 1e-9f64..1.0 - 1e-9, bit in any::<bool>()) {
            let y = Label::from_bit(bit);
            let lik = if bit { q } else { 1.0 - q };
            prop_assert!(((-log_loss(p(q), y).get()).exp() - lik).abs() < 1e-12);
        }

        #[test]
        fn lse_permutation_invariant_and_dominates_max(
            mut v in proptest::collection::vec(-50.0f64..50.0, 1..12),
            seed in any::<u64>(),
        ) {
            let ws: Vec<LogWeight> = v.iter().map(|&x| LogWeight(x)).collect();
            let a = log_sum_exp(&ws).unwrap().0;
            // deterministic shuffle
            let n = v.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let ws2: Vec<LogWeight> = v.iter().map(|&x| LogWeight(x)).collect();
            let b = log_sum_exp(&ws2).unwrap().0;
            prop_assert!((a - b).abs() < 1e-12);
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a >= max);
            // Strictness is only observable in floating point when a second
            // term is not negligible next to the maximum.
            let close = v.iter().filter(|&&x| max - x < 30.0).count();
            if close > 1 {
                prop_assert!(a > max);
            }
        }

        #[test]
        fn lse_equals_max_when_rest_zero_mass(x in -100.0f64..100.0, k in 0usize..5) {
            let mut ws = vec![LogWeight::ZERO_MASS; k];
            ws.push(LogWeight(x));
            prop_assert_eq!(log_sum_exp(&ws).unwrap().0, x);
        }
    }
}
