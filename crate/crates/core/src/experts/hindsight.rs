//! Best expert in hindsight.
//!
//! Finite families are enumerated exactly. Parametric static families are
//! searched on a grid over the parameter ball followed by pattern-search
//! refinement; for logistic families, whose loss is convex in `w`, a
//! first-order certificate also yields a lower bound on the infimum.

use std::collections::HashMap;

use rayon::prelude::*;

use super::link::sigmoid;
use super::{ExpertFamily, Feature, GlmFamily, ParamBall, Params};
use crate::error::{Error, Result};
use crate::loss::{raw_log_loss, Label, LossValue};

/// Grid resolution for parametric search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HindsightGrid {
    pub per_axis: usize,
    pub refine: bool,
}

/// Default points per axis: `10^3` for `d <= 2`, `10^2` for `d <= 4`.
pub fn default_axis_resolution(dim: usize) -> Option<usize> {
    match dim {
        1 | 2 => Some(1000),
        3 | 4 => Some(100),
        _ => None,
    }
}

impl HindsightGrid {
    pub fn default_for(dim: usize) -> Result<Self> {
        default_axis_resolution(dim)
            .map(|per_axis| Self {
                per_axis,
                refine: true,
            })
            .ok_or_else(|| {
                Error::InvalidParameter(format!("no default hindsight grid for dimension {dim}"))
            })
    }
}

/// Evaluation budget (grid points times distinct features) above which the
/// per-axis resolution is reduced.
const GRID_WORK_BUDGET: f64 = 2e8;

#[derive(Debug, Clone, PartialEq)]
pub struct Hindsight {
    pub params: Params,
    /// Loss of `params`; an upper bound on the infimum.
    pub loss: LossValue,
    /// Certified lower bound on the infimum, when one is available.
    pub certified_lower: Option<LossValue>,
}

impl Hindsight {
    /// Lower bound if certified, else the achieved loss.
    pub fn conservative_best(&self) -> LossValue {
        self.certified_lower.unwrap_or(self.loss)
    }
}

/// Static data compressed to label counts per distinct feature.
struct Groups {
    features: Vec<Feature>,
    ones: Vec<f64>,
    zeros: Vec<f64>,
}

impl Groups {
    fn new(xs: &[Feature], ys: &[Label]) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut g = Groups {
            features: Vec::new(),
            ones: Vec::new(),
            zeros: Vec::new(),
        };
        for (x, y) in xs.iter().zip(ys) {
            let i = *index.entry(x.key()).or_insert_with(|| {
                g.features.push(x.clone());
                g.ones.push(0.0);
                g.zeros.push(0.0);
                g.features.len() - 1
            });
            if y.is_one() {
                g.ones[i] += 1.0;
            } else {
                g.zeros[i] += 1.0;
            }
        }
        g
    }

    fn len(&self) -> usize {
        self.features.len()
    }

    fn loss_with(&self, value: impl Fn(&Feature) -> f64) -> f64 {
        let mut total = 0.0;
        for ((x, &n1), &n0) in self.features.iter().zip(&self.ones).zip(&self.zeros) {
            total += count_loss(value(x), n1, n0);
        }
        total
    }
}

#[inline]
fn count_loss(v: f64, n1: f64, n0: f64) -> f64 {
    let mut l = 0.0;
    if n1 > 0.0 {
        l += n1 * raw_log_loss(v, Label::One);
    }
    if n0 > 0.0 {
        l += n0 * raw_log_loss(v, Label::Zero);
    }
    l
}

fn check_lengths(xs: &[Feature], ys: &[Label]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            what: "features vs labels",
            left: xs.len(),
            right: ys.len(),
        });
    }
    Ok(())
}

fn loss_value(v: f64) -> LossValue {
    LossValue::new(v.max(0.0)).unwrap_or(LossValue::ZERO)
}

/// Minimizes cumulative log loss over the family on `(xs, ys)`.
///
/// `grid` overrides the default resolution for parametric families and is
/// ignored for finite ones.
pub fn best_in_hindsight(
    family: &ExpertFamily,
    xs: &[Feature],
    ys: &[Label],
    grid: Option<HindsightGrid>,
) -> Result<Hindsight> {
    check_lengths(xs, ys)?;
    match family {
        ExpertFamily::FiniteStatic(f) => {
            let groups = Groups::new(xs, ys);
            let idx: Vec<usize> = groups
                .features
                .iter()
                .map(|x| f.domain().lookup(x))
                .collect::<Result<_>>()?;
            let losses = (0..f.len()).map(|i| {
                let mut total = 0.0;
                for (g, &j) in idx.iter().enumerate() {
                    total += count_loss(f.value_at(i, j), groups.ones[g], groups.zeros[g]);
                }
                total
            });
            Ok(finite_argmin(losses))
        }
        ExpertFamily::FiniteSequential(f) => {
            let mut losses = Vec::with_capacity(f.len());
            for i in 0..f.len() {
                let mut total = 0.0;
                for t in 0..xs.len() {
                    total += raw_log_loss(f.value(i, &xs[..=t])?, ys[t]);
                }
                losses.push(total);
            }
            Ok(finite_argmin(losses.into_iter()))
        }
        ExpertFamily::Ds(f) => ds_hindsight(f.horizon, f.s, xs, ys),
        ExpertFamily::LipschitzParametric(f) => {
            let groups = Groups::new(xs, ys);
            let g = resolve_grid(f.ball, grid, groups.len())?;
            Ok(parametric_search(f.ball, g, &groups, |w, x| f.eval_raw(w, x)))
        }
        ExpertFamily::HardLipschitz(f) => {
            let groups = Groups::new(xs, ys);
            let g = resolve_grid(f.ball(), grid, groups.len())?;
            Ok(parametric_search(f.ball(), g, &groups, |w, x| f.eval_raw(w, x)))
        }
        ExpertFamily::GeneralizedLinear(f) => {
            let groups = Groups::new(xs, ys);
            for x in &groups.features {
                super::check_dim(f.ball.dim, x)?;
            }
            let g = resolve_grid(f.ball, grid, groups.len())?;
            let mut h = parametric_search(f.ball, g, &groups, |w, x| f.eval_raw(w, x));
            if f.link.is_logistic() && !groups.features.is_empty() {
                logistic_polish(f, &groups, &mut h);
            }
            Ok(h)
        }
    }
}

fn finite_argmin(losses: impl Iterator<Item = f64>) -> Hindsight {
    let mut best = (0usize, f64::INFINITY);
    for (i, l) in losses.enumerate() {
        if l < best.1 || (i == 0 && l.is_infinite()) {
            best = (i, l);
        }
    }
    let loss = loss_value(best.1);
    Hindsight {
        params: Params::Index(best.0),
        loss,
        certified_lower: Some(loss),
    }
}

fn ds_hindsight(horizon: usize, s: f64, xs: &[Feature], ys: &[Label]) -> Result<Hindsight> {
    let mut seen = vec![false; horizon];
    let mut p = vec![0.0; horizon];
    let mut ones = Vec::new();
    for (x, y) in xs.iter().zip(ys) {
        let c = x.coords();
        let pos = c.iter().position(|&v| v == 1.0);
        let basis = c.len() == horizon && pos.is_some() && c.iter().filter(|&&v| v != 0.0).count() == 1;
        let t = match pos {
            Some(t) if basis && !seen[t] => t,
            _ => {
                return Err(Error::InvalidParameter(
                    "D_s hindsight needs distinct standard basis features".into(),
                ))
            }
        };
        seen[t] = true;
        if y.is_one() {
            ones.push(t);
        }
    }
    let k = ones.len();
    if k > 0 {
        let level = (k as f64).powf(-1.0 / s);
        for &t in &ones {
            p[t] = level;
        }
    }
    let loss = loss_value(-super::DsFamily::log_sup(k, s));
    Ok(Hindsight {
        params: Params::Vector(p),
        loss,
        certified_lower: Some(loss),
    })
}

fn resolve_grid(ball: ParamBall, grid: Option<HindsightGrid>, groups: usize) -> Result<HindsightGrid> {
    let mut g = match grid {
        Some(g) => g,
        None => HindsightGrid::default_for(ball.dim)?,
    };
    g.per_axis = g.per_axis.max(2);
    let work = (g.per_axis as f64).powi(ball.dim as i32) * groups.max(1) as f64;
    if work > GRID_WORK_BUDGET {
        let reduced = (GRID_WORK_BUDGET / groups.max(1) as f64)
            .powf(1.0 / ball.dim as f64)
            .floor()
            .max(3.0) as usize;
        if reduced < g.per_axis {
            log::warn!(
                "hindsight grid reduced from {} to {} points per axis ({} distinct features)",
                g.per_axis,
                reduced,
                groups
            );
            g.per_axis = reduced;
        }
    }
    Ok(g)
}

fn parametric_search<F>(ball: ParamBall, grid: HindsightGrid, groups: &Groups, eval: F) -> Hindsight
where
    F: Fn(&[f64], &Feature) -> f64 + Sync,
{
    let d = ball.dim;
    let n = grid.per_axis;
    let r = ball.radius;
    let spacing = 2.0 * r / (n - 1) as f64;
    let objective = |w: &[f64]| groups.loss_with(|x| eval(w, x));

    if groups.len() == 0 {
        let loss = LossValue::ZERO;
        return Hindsight {
            params: Params::Vector(vec![0.0; d]),
            loss,
            certified_lower: Some(loss),
        };
    }

    let total = n.pow(d as u32);
    const CHUNK: usize = 4096;
    let chunks = total.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut w = vec![0.0; d];
            let mut best = (usize::MAX, f64::INFINITY);
            for flat in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut rem = flat;
                for coord in w.iter_mut() {
                    *coord = -r + spacing * (rem % n) as f64;
                    rem /= n;
                }
                if !ball.contains(&w) {
                    continue;
                }
                let l = objective(&w);
                if l < best.1 || best.0 == usize::MAX {
                    best = (flat, l);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((usize::MAX, f64::INFINITY), |acc, b| {
            if b.0 != usize::MAX && (acc.0 == usize::MAX || b.1 < acc.1) {
                b
            } else {
                acc
            }
        });

    let mut w = vec![0.0; d];
    let mut f = objective(&w);
    if best.0 != usize::MAX && best.1 < f {
        let mut rem = best.0;
        for coord in w.iter_mut() {
            *coord = -r + spacing * (rem % n) as f64;
            rem /= n;
        }
        f = best.1;
    }

    if grid.refine {
        let mut h = spacing;
        let floor = 1e-10 * r.max(1.0);
        let mut iters = 0;
        while h > floor && iters < 100_000 {
            iters += 1;
            let mut improved = false;
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut cand = w.clone();
                    cand[i] += sign * h;
                    ball.project(&mut cand);
                    let fc = objective(&cand);
                    if fc < f {
                        w = cand;
                        f = fc;
                        improved = true;
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
    }

    Hindsight {
        params: Params::Vector(w),
        loss: loss_value(f),
        certified_lower: None,
    }
}

/// Projected gradient polishing followed by the convexity certificate
/// `inf L >= L(w) - <g, w> + min_{v in ball} <g, v>` with `g = grad L(w)`.
fn logistic_polish(f: &GlmFamily, groups: &Groups, h: &mut Hindsight) {
    let ball = f.ball;
    let Params::Vector(w0) = &h.params else { return };
    let objective = |w: &[f64]| groups.loss_with(|x| sigmoid(x.dot(w)));
    let gradient = |w: &[f64]| {
        let mut g = vec![0.0; w.len()];
        for ((x, &n1), &n0) in groups.features.iter().zip(&groups.ones).zip(&groups.zeros) {
            let coef = (n1 + n0) * sigmoid(x.dot(w)) - n1;
            for (gi, xi) in g.iter_mut().zip(x.coords()) {
                *gi += coef * xi;
            }
        }
        g
    };

    let mut w = w0.clone();
    let mut fw = objective(&w);
    let mut step = 1.0;
    for _ in 0..500 {
        let g = gradient(&w);
        let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            ball.project(&mut cand);
            let fc = objective(&cand);
            if fc < fw {
                w = cand;
                fw = fc;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fw < h.loss.get() {
        h.params = Params::Vector(w.clone());
        h.loss = loss_value(fw);
    }
    let Params::Vector(wb) = &h.params else { return };
    let g = gradient(wb);
    let gw: f64 = g.iter().zip(wb).map(|(a, b)| a * b).sum();
    let lower = h.loss.get() - gw + ball.min_linear(&g);
    h.certified_lower = Some(loss_value(lower.min(h.loss.get())));
}
