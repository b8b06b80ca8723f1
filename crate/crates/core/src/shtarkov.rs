//! Shtarkov sums, fixed-design game values and the lower-bound
//! constructions built on them.
//!
//! All quantities are natural logarithms. Label sequences are indexed as
//! integers with the first label in the most significant bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::experts::{ds_project, CodeBook, DsFamily, ExpertFamily, Feature, LinkFunction};
use crate::loss::{bernoulli_mle_log_lik, ln_binomial_row, lse, lse2, xlogy, Label, LogWeight};

/// Largest horizon for which label sequences are enumerated.
pub const DEFAULT_ENUMERATION_CAP: usize = 22;

/// Evaluates `ln sup_{h in H} p_h(y^T | x^T)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SupOracle {
    /// Finite family along a fixed design; `table[i][t]` is expert `i` at step `t`.
    FiniteMax { table: Vec<Vec<f64>> },
    /// Constant Bernoulli sources with any bias in `[0, 1]`.
    ConstantBernoulliMle,
    /// Constant Bernoulli sources with bias restricted to `[lo, hi]`.
    IntervalBernoulli { lo: f64, hi: f64 },
    /// The `D_s` family on distinct basis features.
    DsClosedForm { s: f64 },
    /// Independent interval-restricted Bernoulli sources, one per block of a
    /// block design in `R^d`; the interval comes from a link's containment
    /// constants.
    BlockProduct { d: usize, lo: f64, hi: f64 },
}

/// `k ln w + (n-k) ln(1-w)` at `w = clamp(k/n, lo, hi)`.
pub fn interval_log_sup(k: usize, n: usize, lo: f64, hi: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let w = (k as f64 / n as f64).clamp(lo, hi);
    xlogy(k as f64, w) + xlogy((n - k) as f64, 1.0 - w)
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidParameter(format!("interval [{lo}, {hi}] not inside [0, 1]")));
    }
    Ok(())
}

impl SupOracle {
    /// Design table of a finite family along `xs`.
    pub fn finite_max(family: &ExpertFamily, xs: &[Feature]) -> Result<Self> {
        Ok(SupOracle::FiniteMax {
            table: family.design_table(xs)?,
        })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        Ok(SupOracle::IntervalBernoulli { lo, hi })
    }

    /// Block product for `w in B_s^d(1)`: per-coordinate interval
    /// `[c1 - c2 d^{-1/s}, c1 + c2 d^{-1/s}]`, checked against the link.
    pub fn block_product(link: &LinkFunction, d: usize, s: f64) -> Result<Self> {
        let (lo, hi) = link.check_containment(d, 1.0 / s)?;
        check_interval(lo, hi)?;
        Ok(SupOracle::BlockProduct { d, lo, hi })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SupOracle::FiniteMax { .. } => "finite-max",
            SupOracle::ConstantBernoulliMle => "constant-bernoulli",
            SupOracle::IntervalBernoulli { .. } => "interval-bernoulli",
            SupOracle::DsClosedForm { .. } => "ds",
            SupOracle::BlockProduct { .. } => "block-product",
        }
    }

    /// Whether the sup depends on `y^T` only through its number of ones.
    pub fn is_exchangeable(&self) -> bool {
        matches!(
            self,
            SupOracle::ConstantBernoulliMle | SupOracle::IntervalBernoulli { .. } | SupOracle::DsClosedForm { .. }
        )
    }

    /// Sup for `k` ones out of `n`, for exchangeable oracles.
    pub fn log_sup_count(&self, k: usize, n: usize) -> Option<f64> {
        match self {
            SupOracle::ConstantBernoulliMle => Some(bernoulli_mle_log_lik(k, n)),
            SupOracle::IntervalBernoulli { lo, hi } => Some(interval_log_sup(k, n, *lo, *hi)),
            SupOracle::DsClosedForm { s } => Some(DsFamily::log_sup(k, *s)),
            _ => None,
        }
    }

    fn check_design(&self, xs: &[Feature]) -> Result<()> {
        match self {
            SupOracle::FiniteMax { table } => {
                let t = table.first().map_or(0, Vec::len);
                if t != xs.len() {
                    return Err(Error::LengthMismatch {
                        what: "design table vs features",
                        left: t,
                        right: xs.len(),
                    });
                }
            }
            SupOracle::BlockProduct { d, .. } => {
                block_index(*d, xs)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// `ln sup_h p_h(ys | xs)`.
    pub fn log_sup(&self, ys: &[Label], xs: &[Feature]) -> Result<f64> {
        if ys.len() != xs.len() {
            return Err(Error::LengthMismatch {
                what: "labels vs features",
                left: ys.len(),
                right: xs.len(),
            });
        }
        self.check_design(xs)?;
        let k = ys.iter().filter(|y| y.is_one()).count();
        if let Some(v) = self.log_sup_count(k, ys.len()) {
            return Ok(v);
        }
        match self {
            SupOracle::FiniteMax { table } => Ok(table
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(ys)
                        .map(|(&p, &y)| if y.is_one() { p.ln() } else { (1.0 - p).ln() })
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)),
            SupOracle::BlockProduct { d, lo, hi } => {
                let blocks = block_index(*d, xs)?;
                let mut ones = vec![0usize; *d];
                let mut counts = vec![0usize; *d];
                for (&b, y) in blocks.iter().zip(ys) {
                    counts[b] += 1;
                    ones[b] += y.is_one() as usize;
                }
                Ok((0..*d).map(|i| interval_log_sup(ones[i], counts[i], *lo, *hi)).sum())
            }
            _ => unreachable!("exchangeable oracles handled above"),
        }
    }
}

/// Block of each feature of a block design: `x = e_i` belongs to block `i`.
fn block_index(d: usize, xs: &[Feature]) -> Result<Vec<usize>> {
    xs.iter()
        .map(|x| {
            let c = x.coords();
            let nonzero: Vec<usize> = (0..c.len()).filter(|&i| c[i] != 0.0).collect();
            if c.len() == d && nonzero.len() == 1 && c[nonzero[0]] == 1.0 {
                Ok(nonzero[0])
            } else {
                Err(Error::InvalidParameter(format!("feature {x} is not a basis vector of R^{d}")))
            }
        })
        .collect()
}

/// Streaming log-sum-exp with a running maximum.
#[derive(Debug, Clone, Copy)]
struct LseAcc {
    max: f64,
    sum: f64,
}

impl LseAcc {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn check_cap(t: usize, cap: usize) -> Result<()> {
    if t > cap {
        Err(Error::EnumerationCap { horizon: t, cap })
    } else {
        Ok(())
    }
}

/// `ln sup_h p_h(y^T|x^T)` for every `y^T`, indexed MSB first.
pub fn leaf_log_sups(oracle: &SupOracle, xs: &[Feature], cap: usize) -> Result<Vec<f64>> {
    let t = xs.len();
    check_cap(t, cap)?;
    oracle.check_design(xs)?;
    let n = 1usize << t;
    match oracle {
        SupOracle::FiniteMax { table } => {
            let mut best = vec![f64::NEG_INFINITY; n];
            for row in table {
                let mut level = vec![0.0f64];
                for &p in row {
                    let (l0, l1) = ((1.0 - p).ln(), p.ln());
                    let mut next = Vec::with_capacity(level.len() * 2);
                    for &v in &level {
                        next.push(v + l0);
                        next.push(v + l1);
                    }
                    level = next;
                }
                for (b, v) in best.iter_mut().zip(level) {
                    if v > *b {
                        *b = v;
                    }
                }
            }
            Ok(best)
        }
        _ if oracle.is_exchangeable() => {
            let by_count: Vec<f64> = (0..=t).map(|k| oracle.log_sup_count(k, t).unwrap_or(0.0)).collect();
            Ok((0..n).map(|i| by_count[(i as u64).count_ones() as usize]).collect())
        }
        _ => (0..n)
            .map(|i| oracle.log_sup(&Label::sequence_from_bits(i as u64, t), xs))
            .collect(),
    }
}

/// `ln S_T(H | x^T) = ln sum_{y^T} sup_h p_h(y^T | x^T)`.
///
/// Exchangeable oracles group sequences by their number of ones; block
/// products factor over blocks; the finite oracle enumerates up to `cap`.
pub fn shtarkov_sum_capped(oracle: &SupOracle, xs: &[Feature], cap: usize) -> Result<LogWeight> {
    let t = xs.len();
    if oracle.is_exchangeable() {
        return Ok(LogWeight(binomial_grouped(oracle, t)));
    }
    if let SupOracle::BlockProduct { d, lo, hi } = oracle {
        let blocks = block_index(*d, xs)?;
        let mut counts = vec![0usize; *d];
        for b in blocks {
            counts[b] += 1;
        }
        return Ok(LogWeight(
            counts.iter().map(|&n| interval_shtarkov(n, *lo, *hi)).sum(),
        ));
    }
    let leaves = leaf_log_sups(oracle, xs, cap)?;
    let mut acc = LseAcc::new();
    for v in leaves {
        acc.push(v);
    }
    Ok(LogWeight(acc.value()))
}

pub fn shtarkov_sum(oracle: &SupOracle, xs: &[Feature]) -> Result<LogWeight> {
    shtarkov_sum_capped(oracle, xs, DEFAULT_ENUMERATION_CAP)
}

fn binomial_grouped(oracle: &SupOracle, t: usize) -> f64 {
    let row = ln_binomial_row(t);
    let mut acc = LseAcc::new();
    for (k, c) in row.iter().enumerate() {
        acc.push(c + oracle.log_sup_count(k, t).unwrap_or(f64::NEG_INFINITY));
    }
    acc.value()
}

/// `ln sum_k C(n,k) sup_{w in [lo,hi]} w^k (1-w)^{n-k}`.
pub fn interval_shtarkov(n: usize, lo: f64, hi: f64) -> f64 {
    let row = ln_binomial_row(n);
    let mut acc = LseAcc::new();
    for (k, c) in row.iter().enumerate() {
        acc.push(c + interval_log_sup(k, n, lo, hi));
    }
    acc.value()
}

/// Restricted binomial Shtarkov sum on `[c1 - c2 d^{-r}, c1 + c2 d^{-r}]`.
pub fn restricted_binomial_shtarkov(n: usize, c1: f64, c2: f64, r: f64, d: usize) -> Result<LogWeight> {
    if n == 0 {
        return Err(Error::InvalidParameter("restricted binomial sum needs n >= 1".into()));
    }
    let h = c2 * (d as f64).powf(-r);
    let (lo, hi) = (c1 - h, c1 + h);
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
        return Err(Error::InvalidParameter(format!("interval [{lo}, {hi}] escapes [0, 1]")));
    }
    Ok(LogWeight(interval_shtarkov(n, lo, hi)))
}

/// Backward-induction values of the fixed-design game.
///
/// Leaves hold `ln sup_h p_h(y^T|x^T)`; each internal node is the
/// log-sum-exp of its two children, so the root is `ln S_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameValueTable {
    /// `levels[t][i]`: value at the depth-`t` prefix whose bits spell `i`.
    levels: Vec<Vec<f64>>,
}

impl GameValueTable {
    pub fn from_leaves(leaves: Vec<f64>) -> Result<Self> {
        if !leaves.len().is_power_of_two() {
            return Err(Error::InvalidParameter("leaf count must be a power of two".into()));
        }
        let t = leaves.len().trailing_zeros() as usize;
        let mut levels = vec![Vec::new(); t + 1];
        levels[t] = leaves;
        for depth in (0..t).rev() {
            let below = &levels[depth + 1];
            levels[depth] = (0..1usize << depth)
                .map(|i| lse2(below[2 * i], below[2 * i + 1]))
                .collect();
        }
        Ok(Self { levels })
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn value(&self, depth: usize, node: usize) -> f64 {
        self.levels[depth][node]
    }

    pub fn root(&self) -> LogWeight {
        LogWeight(self.levels[0][0])
    }

    pub fn leaves(&self) -> &[f64] {
        &self.levels[self.horizon()]
    }

    /// Largest violation of `V(p) = lse(V(p0), V(p1))` over internal nodes.
    pub fn max_recursion_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for depth in 0..self.horizon() {
            for (i, &v) in self.levels[depth].iter().enumerate() {
                let r = lse2(self.levels[depth + 1][2 * i], self.levels[depth + 1][2 * i + 1]);
                if v.is_finite() || r.is_finite() {
                    worst = worst.max((v - r).abs());
                }
            }
        }
        worst
    }

    /// Optimal (NML) probability of label one after the prefix `node` at `depth`.
    pub fn optimal_prediction(&self, depth: usize, node: usize) -> f64 {
        crate::predictors::NmlPredictor::conditional(self, depth, node)
    }
}

pub fn minimax_value_capped(oracle: &SupOracle, xs: &[Feature], cap: usize) -> Result<GameValueTable> {
    GameValueTable::from_leaves(leaf_log_sups(oracle, xs, cap)?)
}

pub fn minimax_value(oracle: &SupOracle, xs: &[Feature]) -> Result<GameValueTable> {
    minimax_value_capped(oracle, xs, DEFAULT_ENUMERATION_CAP)
}

/// Closed form `ln sup_{p in D_s} p(y^T)` and a projected pattern search
/// over `D_s`, both in log domain.
pub fn ds_sup_verify(ys: &[Label], s: f64) -> Result<(LogWeight, LogWeight)> {
    let t = ys.len();
    if t == 0 || t > 8 {
        return Err(Error::InvalidParameter(format!("brute D_s search needs 1 <= T <= 8, got {t}")));
    }
    DsFamily::new(t, s)?;
    let k = ys.iter().filter(|y| y.is_one()).count();
    let closed = DsFamily::log_sup(k, s);
    let objective = |p: &[f64]| -> f64 {
        p.iter()
            .zip(ys)
            .map(|(&v, y)| if y.is_one() { v.ln() } else { (1.0 - v).ln() })
            .sum()
    };

    let mut best_p = vec![0.0; t];
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(t as u32) {
        let mut c = code;
        let raw: Vec<f64> = (0..t)
            .map(|_| {
                let v = (c % 3) as f64 * 0.5;
                c /= 3;
                v
            })
            .collect();
        let p = ds_project(&raw, s);
        let v = objective(&p);
        if v > best {
            best = v;
            best_p = p;
        }
    }

    let mut h = 0.25;
    while h > 1e-10 {
        let mut improved = false;
        for i in 0..t {
            for sign in [1.0, -1.0] {
                let mut cand = best_p.clone();
                cand[i] += sign * h;
                let cand = ds_project(&cand, s);
                let v = objective(&cand);
                if v > best {
                    best = v;
                    best_p = cand;
                    improved = true;
                }
            }
            for j in 0..t {
                if i == j {
                    continue;
                }
                let mut cand = best_p.clone();
                cand[i] += h;
                cand[j] -= h;
                let cand = ds_project(&cand, s);
                let v = objective(&cand);
                if v > best {
                    best = v;
                    best_p = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok((LogWeight(closed), LogWeight(best)))
}

/// Identification lemma for a finite set of distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentificationResult {
    /// `S = sum_x max_p p(x)`.
    pub shtarkov: f64,
    /// `1 - S/|P|`.
    pub bound: f64,
    /// `min_Phi max_p p(Phi != p)` by enumerating every estimator, when
    /// `|P|^{|X|}` is within the cap.
    pub exhaustive_optimum: Option<f64>,
}

pub const IDENTIFICATION_CAP: f64 = 1e6;

pub fn identification_bound(dists: &[Vec<f64>]) -> Result<IdentificationResult> {
    let m = dists.len();
    let n = dists.first().map(Vec::len).ok_or(Error::Empty("distribution set"))?;
    for p in dists {
        if p.len() != n {
            return Err(Error::LengthMismatch {
                what: "outcome spaces",
                left: p.len(),
                right: n,
            });
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("rows must be probability vectors".into()));
        }
    }
    let shtarkov: f64 = (0..n).map(|x| dists.iter().map(|p| p[x]).fold(0.0, f64::max)).sum();
    let bound = 1.0 - shtarkov / m as f64;
    let count = (m as f64).powi(n as i32);
    let exhaustive_optimum = if count <= IDENTIFICATION_CAP {
        let mut best = f64::INFINITY;
        let mut assign = vec![0usize; n];
        let mut correct = vec![0.0; m];
        for code in 0..count as usize {
            let mut c = code;
            for a in assign.iter_mut() {
                *a = c % m;
                c /= m;
            }
            correct.iter_mut().for_each(|v| *v = 0.0);
            for (x, &a) in assign.iter().enumerate() {
                correct[a] += dists[a][x];
            }
            let worst = 1.0 - correct.iter().copied().fold(f64::INFINITY, f64::min);
            best = best.min(worst);
        }
        Some(best)
    } else {
        log::info!("identification: {count:.0} estimators exceed the cap, exhaustive part skipped");
        None
    };
    Ok(IdentificationResult {
        shtarkov,
        bound,
        exhaustive_optimum,
    })
}

/// `T' = d floor(T/d)` features, block `i` all equal to `e_i`.
pub fn block_design_features(d: usize, t: usize) -> Result<Vec<Feature>> {
    if d == 0 || d > t {
        return Err(Error::InvalidParameter(format!("block design needs 1 <= d <= T, got d={d}, T={t}")));
    }
    let n = t / d;
    if n * d != t {
        log::info!("block design: T={t} trimmed to {}", n * d);
    }
    Ok((0..d).flat_map(|i| std::iter::repeat(Feature::basis(d, i)).take(n)).collect())
}

/// `d ln( sum_k C(n,k) sup_{w in I} w^k (1-w)^{n-k} )` with `n = T/d` and
/// `I = [c1 - c2 d^{-1/s}, c1 + c2 d^{-1/s}]` from the link.
pub fn block_shtarkov_lower(d: usize, t: usize, link: &LinkFunction, s: f64) -> Result<LogWeight> {
    if d == 0 || d > t {
        return Err(Error::InvalidParameter(format!("block design needs 1 <= d <= T, got d={d}, T={t}")));
    }
    let n = t / d;
    if n > 100_000 {
        return Err(Error::SizeCap {
            what: "block length",
            size: n as f64,
            cap: 1e5,
        });
    }
    let SupOracle::BlockProduct { lo, hi, .. } = SupOracle::block_product(link, d, s)? else {
        unreachable!()
    };
    Ok(LogWeight(d as f64 * interval_shtarkov(n, lo, hi)))
}

/// Exact `ln sum_k C(T,k) k^{-k/s}` and the formula `((s+1)/(s e)) T^{s/(s+1)}`.
pub fn ds_lower_bound(t: usize, s: f64) -> Result<(LogWeight, f64)> {
    if t > 100_000 {
        return Err(Error::SizeCap {
            what: "D_s horizon",
            size: t as f64,
            cap: 1e5,
        });
    }
    let exact = binomial_grouped(&SupOracle::DsClosedForm { s }, t);
    let formula = (s + 1.0) / (s * std::f64::consts::E) * (t as f64).powf(s / (s + 1.0));
    Ok((LogWeight(exact), formula))
}

/// Outcome of [`hard_class_certificate`].
#[derive(Debug, Clone, PartialEq)]
pub struct HardClassReport {
    pub members: usize,
    pub horizon: usize,
    pub min_distance: usize,
    /// Largest per-source Monte-Carlo misidentification rate.
    pub mc_error: f64,
    /// Binomial standard error of `mc_error`.
    pub mc_sigma: f64,
    pub trials_per_source: usize,
    /// `|M|^2 e^{-alpha T/8}`.
    pub analytic_bound: f64,
    /// `ln(|M|/2)` when the estimated error is at most 1/2.
    pub implied_lower: Option<f64>,
    /// `d ln(RLT/d) - d ln 64 - d ln ln(RLT)`.
    pub formula: f64,
    /// Two members only: the implied bound is `ln 1 = 0`.
    pub uninformative: bool,
}

/// Verifies the codebook, estimates the identification error of the
/// pairwise all-zeros discriminator and reports the implied lower bound.
pub fn hard_class_certificate(
    family: &ExpertFamily,
    codebook: &CodeBook,
    trials: usize,
    seed: u64,
) -> Result<HardClassReport> {
    let ExpertFamily::HardLipschitz(h) = family else {
        return Err(Error::InvalidParameter("certificate needs a hard Lipschitz family".into()));
    };
    let m = h.members();
    let t = h.horizon();
    if codebook.len() != m || codebook.length() != t {
        return Err(Error::Inconsistent("codebook does not match the family".into()));
    }
    for (row, v) in h.table().iter().zip(codebook.vectors()) {
        for (&u, &b) in row.iter().zip(v) {
            if u != if b { h.alpha } else { 0.0 } {
                return Err(Error::Inconsistent("family table disagrees with the codebook".into()));
            }
        }
    }
    let min_distance = codebook.verify();
    if 4 * min_distance < t {
        return Err(Error::Inconsistent(format!("codebook distance {min_distance} < T/4")));
    }

    // For each ordered pair (a, b): positions where a is 0 and b is alpha,
    // and the reverse; keep the larger side.
    let v = codebook.vectors();
    let mut tests: Vec<Vec<(Vec<usize>, bool)>> = vec![vec![(Vec::new(), false); m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let a_zero: Vec<usize> = (0..t).filter(|&i| !v[a][i] && v[b][i]).collect();
            let b_zero: Vec<usize> = (0..t).filter(|&i| v[a][i] && !v[b][i]).collect();
            // `true` means: all zeros on J favors `a`.
            let (j, favors_a) = if a_zero.len() >= b_zero.len() {
                (a_zero, true)
            } else {
                (b_zero, false)
            };
            tests[a][b] = (j, favors_a);
        }
    }
    let winner = |a: usize, b: usize, sample: &[bool]| -> usize {
        let (lo, hi) = (a.min(b), a.max(b));
        let (j, favors_lo) = &tests[lo][hi];
        let all_zero = j.iter().all(|&i| !sample[i]);
        if all_zero == *favors_lo {
            lo
        } else {
            hi
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let trials = trials.max(1);
    let mut sample = vec![false; t];
    for src in 0..m {
        let mut errors = 0usize;
        for _ in 0..trials {
            for (s, &u) in sample.iter_mut().zip(&h.table()[src]) {
                *s = u > 0.0 && rng.gen::<f64>() < u;
            }
            let guess = (0..m)
                .find(|&c| (0..m).all(|o| o == c || winner(c, o, &sample) == c))
                .unwrap_or(0);
            errors += (guess != src) as usize;
        }
        worst = worst.max(errors as f64 / trials as f64);
    }
    let mc_sigma = (worst * (1.0 - worst) / trials as f64).sqrt();
    let analytic_bound = (m * m) as f64 * (-h.alpha * t as f64 / 8.0).exp();
    let implied_lower = (worst <= 0.5).then(|| (m as f64 / 2.0).ln());
    let d = h.dim as f64;
    let rlt = h.radius * h.lipschitz * t as f64;
    let formula = d * (rlt / d).ln() - d * 64f64.ln() - d * rlt.ln().ln();
    Ok(HardClassReport {
        members: m,
        horizon: t,
        min_distance,
        mc_error: worst,
        mc_sigma,
        trials_per_source: trials,
        analytic_bound,
        implied_lower,
        formula,
        uninformative: m == 2,
    })
}

/// Log-sum-exp of a slice of raw values; `-inf` when empty.
pub fn log_sum(values: &[f64]) -> f64 {
    lse(values.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{FiniteDomain, FiniteStatic};

    fn constants(levels: &[f64]) -> ExpertFamily {
        ExpertFamily::FiniteStatic(FiniteStatic::constants(FiniteDomain::indexed(1).unwrap(), levels).unwrap())
    }

    fn xs(t: usize) -> Vec<Feature> {
        vec![Feature::scalar(0.0); t]
    }

    #[test]
    fn shtarkov_examples() {
        let half = SupOracle::finite_max(&constants(&[0.5]), &xs(5)).unwrap();
        assert!(shtarkov_sum(&half, &xs(5)).unwrap().get().abs() < 1e-12);
        let ends = SupOracle::finite_max(&constants(&[0.0, 1.0]), &xs(2)).unwrap();
        assert!((shtarkov_sum(&ends, &xs(2)).unwrap().get() - 2f64.ln()).abs() < 1e-12);
        let s = shtarkov_sum(&SupOracle::ConstantBernoulliMle, &xs(2)).unwrap();
        assert!((s.get() - 2.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grouped_matches_enumeration() {
        for t in 1..=12 {
            for oracle in [
                SupOracle::ConstantBernoulliMle,
                SupOracle::interval(0.3, 0.6).unwrap(),
                SupOracle::DsClosedForm { s: 2.0 },
            ] {
                let grouped = shtarkov_sum(&oracle, &xs(t)).unwrap().get();
                let leaves = leaf_log_sups(&oracle, &xs(t), 22).unwrap();
                let direct = (0..leaves.len())
                    .map(|i| oracle.log_sup(&Label::sequence_from_bits(i as u64, t), &xs(t)).unwrap())
                    .collect::<Vec<_>>();
                assert!((grouped - log_sum(&direct)).abs() < 1e-10);
                assert!(grouped >= -1e-12);
            }
        }
    }

    #[test]
    fn game_table_root_and_recursion() {
        let fam = constants(&[0.2, 0.7, 0.9]);
        let oracle = SupOracle::finite_max(&fam, &xs(6)).unwrap();
        let g = minimax_value(&oracle, &xs(6)).unwrap();
        assert!((g.root().get() - shtarkov_sum(&oracle, &xs(6)).unwrap().get()).abs() < 1e-12);
        assert!(g.max_recursion_error() < 1e-12);

        let single = SupOracle::finite_max(&constants(&[0.3]), &xs(3)).unwrap();
        let g = minimax_value(&single, &xs(3)).unwrap();
        assert!(g.root().get().abs() < 1e-12);
        assert!((g.optimal_prediction(0, 0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap_enforced() {
        let oracle = SupOracle::finite_max(&constants(&[0.3, 0.6]), &xs(24)).unwrap();
        assert!(matches!(
            shtarkov_sum(&oracle, &xs(24)),
            Err(Error::EnumerationCap { horizon: 24, cap: 22 })
        ));
    }

    #[test]
    fn restricted_binomial_examples() {
        let v = interval_shtarkov(1, 0.3, 0.7);
        assert!((v - 1.4f64.ln()).abs() < 1e-12);
        assert!(restricted_binomial_shtarkov(7, 0.4, 0.0, 1.0, 2).unwrap().get().abs() < 1e-12);
        let full = restricted_binomial_shtarkov(9, 0.5, 0.5, 1.0, 1).unwrap().get();
        let mle = shtarkov_sum(&SupOracle::ConstantBernoulliMle, &xs(9)).unwrap().get();
        assert!((full - mle).abs() < 1e-12);
        assert!(restricted_binomial_shtarkov(3, 0.5, 0.9, 0.0, 1).is_err());
    }

    #[test]
    fn ds_examples() {
        let (closed, brute) = ds_sup_verify(&[Label::One, Label::One], 1.0).unwrap();
        assert!((closed.exp() - 0.25).abs() < 1e-12);
        assert!((brute.exp() - 0.25).abs() < 1e-6);
        let (c0, _) = ds_sup_verify(&[Label::Zero; 4], 2.0).unwrap();
        assert_eq!(c0.exp(), 1.0);
        let (c1, b1) = ds_sup_verify(&[Label::Zero, Label::One, Label::Zero], 3.0).unwrap();
        assert_eq!(c1.exp(), 1.0);
        assert!((b1.exp() - 1.0).abs() < 1e-9);

        let (exact, formula) = ds_lower_bound(1, 1.0).unwrap();
        assert!((exact.get() - 2f64.ln()).abs() < 1e-12);
        assert!(exact.get() < formula);
        let (exact, formula) = ds_lower_bound(100, 1.0).unwrap();
        assert!(exact.get() >= formula && formula > 7.35);
        let (exact, _) = ds_lower_bound(30, 1e9).unwrap();
        assert!((exact.get() - 30.0 * 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn identification_examples() {
        let r = identification_bound(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!((r.shtarkov, r.bound, r.exhaustive_optimum), (2.0, 0.0, Some(0.0)));
        let r = identification_bound(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!((r.bound, r.exhaustive_optimum), (0.5, Some(0.5)));
    }

    #[test]
    fn block_design_examples() {
        let x = block_design_features(2, 4).unwrap();
        assert_eq!(x, vec![Feature::basis(2, 0), Feature::basis(2, 0), Feature::basis(2, 1), Feature::basis(2, 1)]);
        assert_eq!(block_design_features(1, 3).unwrap(), vec![Feature::scalar(1.0); 3]);
        assert_eq!(block_design_features(2, 5).unwrap().len(), 4);
        assert!(block_design_features(5, 3).is_err());
    }

    #[test]
    fn block_lower_single_block_and_monotone() {
        let link = LinkFunction::logistic();
        let one = block_shtarkov_lower(1, 50, &link, 2.0).unwrap().get();
        let direct = interval_shtarkov(50, 0.3, 0.7);
        assert!((one - direct).abs() < 1e-12);
        let mut prev = f64::NEG_INFINITY;
        for n in [4, 8, 16, 64, 256] {
            let v = block_shtarkov_lower(4, 4 * n, &link, 2.0).unwrap().get();
            assert!(v >= prev);
            prev = v;
        }
        let oracle = SupOracle::block_product(&link, 2, 2.0).unwrap();
        let x = block_design_features(2, 8).unwrap();
        let enumerated = {
            let leaves = leaf_log_sups(&oracle, &x, 22).unwrap();
            log_sum(&leaves)
        };
        assert!((shtarkov_sum(&oracle, &x).unwrap().get() - enumerated).abs() < 1e-10);
        assert!((block_shtarkov_lower(2, 8, &link, 2.0).unwrap().get() - enumerated).abs() < 1e-10);
    }

    #[test]
    fn hard_class_two_members_uninformative() {
        let (fam, book) = crate::experts::build_hard_lipschitz_class(1, 64, 1.0, 1.0, 0.25, 5).unwrap();
        let r = hard_class_certificate(&fam, &book, 200, 1).unwrap();
        assert!(r.uninformative);
        assert_eq!(r.implied_lower, Some(0.0));
        assert!(r.mc_error <= r.analytic_bound + 3.0 * r.mc_sigma + 1e-12 || r.analytic_bound >= 1.0);
    }
}
