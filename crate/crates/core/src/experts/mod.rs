//! Hypothesis families.
//!
//! A family maps a parameter (an index for finite families, a weight vector
//! for parametric ones) and a feature prefix to a probability. Static experts
//! read only the last feature of the prefix; sequential experts may use the
//! whole prefix.
//!
//! Families are immutable once built and can be evaluated concurrently.

mod ds;
mod finite;
mod hard;
mod hindsight;
mod link;
mod table;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::loss::ProbValue;

pub use ds::{ds_project, DsFamily};
pub use finite::{FiniteDomain, FiniteSequential, FiniteStatic};
pub use hard::{build_hard_lipschitz_class, lattice_packing, CodeBook, HardLipschitz};
pub use hindsight::{best_in_hindsight, default_axis_resolution, Hindsight, HindsightGrid};
pub use link::LinkFunction;
pub use table::{FamilyTable, TableMode};

/// A point of the feature space `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature(Vec<f64>);

impl Feature {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().all(|c| c.is_finite()) {
            Ok(Self(coords))
        } else {
            Err(Error::InvalidParameter("feature has a non-finite coordinate".into()))
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self(vec![v])
    }

    /// Standard basis vector `e_i` of `R^d` (zero-based `i`).
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Self(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    /// Bit pattern used as an exact hash key.
    pub(crate) fn key(&self) -> Vec<u64> {
        self.0.iter().map(|c| (c + 0.0).to_bits()).collect()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Feature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let coords = s
            .split(';')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("feature coordinate {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Feature::new(coords)
    }
}

/// `l_s` norm, `s` in `[1, inf]`.
pub fn lp_norm(w: &[f64], s: f64) -> f64 {
    if s.is_infinite() {
        w.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    } else if s == 1.0 {
        w.iter().map(|x| x.abs()).sum()
    } else if s == 2.0 {
        w.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        w.iter().map(|x| x.abs().powf(s)).sum::<f64>().powf(1.0 / s)
    }
}

/// Hoelder conjugate of `s`.
pub fn dual_exponent(s: f64) -> f64 {
    if s == 1.0 {
        f64::INFINITY
    } else if s.is_infinite() {
        1.0
    } else {
        s / (s - 1.0)
    }
}

/// The ball `{w in R^d : ||w||_s <= R}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBall {
    pub dim: usize,
    pub radius: f64,
    pub norm_order: f64,
}

impl ParamBall {
    pub const SLACK: f64 = 1e-12;

    pub fn new(dim: usize, radius: f64, norm_order: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("ball dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("ball radius {radius} must be positive")));
        }
        if !(norm_order >= 1.0) {
            return Err(Error::InvalidParameter(format!("norm order {norm_order} must be >= 1")));
        }
        Ok(Self {
            dim,
            radius,
            norm_order,
        })
    }

    pub fn l2(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, radius, 2.0)
    }

    pub fn norm(&self, w: &[f64]) -> f64 {
        lp_norm(w, self.norm_order)
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim && self.norm(w) <= self.radius + Self::SLACK
    }

    pub fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        let norm = self.norm(w);
        if norm > self.radius + Self::SLACK {
            return Err(Error::OutsideBall {
                norm,
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// Maps `w` into the ball: exact Euclidean projection for `s = 2`,
    /// coordinate clamping for `s = inf`, radial rescaling otherwise.
    pub fn project(&self, w: &mut [f64]) {
        if self.norm_order.is_infinite() {
            for x in w.iter_mut() {
                *x = x.clamp(-self.radius, self.radius);
            }
            return;
        }
        let n = self.norm(w);
        if n > self.radius {
            let scale = self.radius / n;
            for x in w.iter_mut() {
                *x *= scale;
            }
        }
    }

    /// `min_{w in ball} <g, w>`.
    pub fn min_linear(&self, g: &[f64]) -> f64 {
        -self.radius * lp_norm(g, dual_exponent(self.norm_order))
    }
}

/// Parameters selecting one member of a family.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    /// Member index of a finite family.
    Index(usize),
    /// Parameter vector of a parametric family.
    Vector(Vec<f64>),
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Params::Index(i) => write!(f, "#{i}"),
            Params::Vector(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// A sequential function `X* -> [0,1]`.
pub type SequentialFn = Arc<dyn Fn(&[Feature]) -> f64 + Send + Sync>;

/// A parametric map `(w, x) -> [0,1]`.
pub type ParametricFn = Arc<dyn Fn(&[f64], &Feature) -> f64 + Send + Sync>;

/// Indexed collection of sequential predictors; what the mixture predictors
/// aggregate over.
pub trait ExpertSet: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes every member's prediction at the end of `prefix` into `out`.
    fn predict_all(&self, prefix: &[Feature], out: &mut [f64]) -> Result<()>;
}

/// Static family `{f(w, .) : w in ball}` with a declared Lipschitz constant
/// in the ball's norm.
#[derive(Clone)]
pub struct LipschitzFamily {
    pub name: String,
    pub ball: ParamBall,
    pub lipschitz: f64,
    func: ParametricFn,
}

impl LipschitzFamily {
    pub fn new(name: impl Into<String>, ball: ParamBall, lipschitz: f64, func: ParametricFn) -> Self {
        Self {
            name: name.into(),
            ball,
            lipschitz,
            func,
        }
    }

    /// Bernoulli sources with bias `(1 + w)/2`, `w in [-1, 1]`.
    pub fn constant_bernoulli() -> Self {
        let ball = ParamBall::new(1, 1.0, 2.0).expect("valid ball");
        Self::new(
            "constant-bernoulli",
            ball,
            0.5,
            Arc::new(|w: &[f64], _x: &Feature| (1.0 + w[0]) / 2.0),
        )
    }

    pub fn eval_raw(&self, w: &[f64], x: &Feature) -> f64 {
        (self.func)(w, x).clamp(0.0, 1.0)
    }
}

impl fmt::Debug for LipschitzFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFamily")
            .field("name", &self.name)
            .field("ball", &self.ball)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// `{f(<w, x>) : w in ball}` for a link `f`.
#[derive(Debug, Clone)]
pub struct GlmFamily {
    pub ball: ParamBall,
    pub link: LinkFunction,
    /// Declared Lipschitz constant of `w -> f(<w,x>)` over the feature set in use.
    pub lipschitz: f64,
}

impl GlmFamily {
    pub fn logistic(dim: usize, radius: f64, lipschitz: f64) -> Result<Self> {
        Ok(Self {
            ball: ParamBall::l2(dim, radius)?,
            link: LinkFunction::logistic(),
            lipschitz,
        })
    }

    #[inline]
    pub fn eval_raw(&self, w: &[f64], x: &Feature) -> f64 {
        self.link.apply(x.dot(w))
    }
}

/// The hypothesis families this crate knows how to evaluate.
#[derive(Debug, Clone)]
pub enum ExpertFamily {
    FiniteStatic(FiniteStatic),
    FiniteSequential(FiniteSequential),
    LipschitzParametric(LipschitzFamily),
    GeneralizedLinear(GlmFamily),
    Ds(DsFamily),
    HardLipschitz(HardLipschitz),
}

impl ExpertFamily {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExpertFamily::FiniteStatic(_) => "finite-static",
            ExpertFamily::FiniteSequential(_) => "finite-sequential",
            ExpertFamily::LipschitzParametric(_) => "lipschitz",
            ExpertFamily::GeneralizedLinear(_) => "glm",
            ExpertFamily::Ds(_) => "ds",
            ExpertFamily::HardLipschitz(_) => "hard-lipschitz",
        }
    }

    /// Number of members for finite families.
    pub fn finite_len(&self) -> Option<usize> {
        match self {
            ExpertFamily::FiniteStatic(f) => Some(f.len()),
            ExpertFamily::FiniteSequential(f) => Some(f.len()),
            _ => None,
        }
    }

    /// Parameter ball of parametric families.
    pub fn ball(&self) -> Option<ParamBall> {
        match self {
            ExpertFamily::LipschitzParametric(f) => Some(f.ball),
            ExpertFamily::GeneralizedLinear(f) => Some(f.ball),
            ExpertFamily::HardLipschitz(f) => Some(f.ball()),
            _ => None,
        }
    }

    pub fn is_static(&self) -> bool {
        !matches!(self, ExpertFamily::FiniteSequential(_))
    }

    /// Evaluates member `params` on `prefix`; static members read only the
    /// last feature.
    pub fn eval(&self, params: &Params, prefix: &[Feature]) -> Result<ProbValue> {
        let last = prefix.last().ok_or(Error::Empty("feature prefix"))?;
        let v = match (self, params) {
            (ExpertFamily::FiniteStatic(f), Params::Index(i)) => f.value(*i, last)?,
            (ExpertFamily::FiniteSequential(f), Params::Index(i)) => f.value(*i, prefix)?,
            (ExpertFamily::LipschitzParametric(f), Params::Vector(w)) => {
                f.ball.check(w)?;
                f.eval_raw(w, last)
            }
            (ExpertFamily::GeneralizedLinear(f), Params::Vector(w)) => {
                f.ball.check(w)?;
                check_dim(f.ball.dim, last)?;
                f.eval_raw(w, last)
            }
            (ExpertFamily::Ds(f), Params::Vector(p)) => {
                f.check_member(p)?;
                check_dim(f.horizon, last)?;
                f.eval_raw(p, last)
            }
            (ExpertFamily::HardLipschitz(f), Params::Vector(w)) => {
                f.ball().check(w)?;
                check_dim(f.dim, last)?;
                f.eval_raw(w, last)
            }
            (_, other) => {
                return Err(Error::InvalidParameter(format!(
                    "parameter {other} does not fit a {} family",
                    self.kind_name()
                )))
            }
        };
        ProbValue::new(v)
    }

    /// Member values along a fixed design: row `i` holds `h_i(x^t)` for
    /// `t = 1..T`. Only finite families have one.
    pub fn design_table(&self, xs: &[Feature]) -> Result<Vec<Vec<f64>>> {
        let n = self
            .finite_len()
            .ok_or_else(|| Error::InvalidParameter("design table needs a finite family".into()))?;
        let mut rows = vec![vec![0.0; xs.len()]; n];
        for t in 0..xs.len() {
            let prefix = &xs[..=t];
            for (i, row) in rows.iter_mut().enumerate() {
                row[t] = self.eval(&Params::Index(i), prefix)?.get();
            }
        }
        Ok(rows)
    }
}

impl ExpertFamily {
    /// Raw value of a static parametric member without ball or dimension
    /// checks; used for grids that extend past the parameter ball.
    pub fn eval_unchecked(&self, w: &[f64], x: &Feature) -> Result<f64> {
        match self {
            ExpertFamily::LipschitzParametric(f) => Ok(f.eval_raw(w, x)),
            ExpertFamily::GeneralizedLinear(f) => Ok(f.eval_raw(w, x)),
            ExpertFamily::Ds(f) => Ok(f.eval_raw(w, x)),
            ExpertFamily::HardLipschitz(f) => Ok(f.eval_raw(w, x)),
            _ => Err(Error::InvalidParameter(format!(
                "{} family has no parameter vectors",
                self.kind_name()
            ))),
        }
    }
}

/// Finitely many parameter points of a static parametric family.
#[derive(Debug, Clone)]
pub struct ParamGridSet {
    family: ExpertFamily,
    points: Vec<Vec<f64>>,
}

impl ParamGridSet {
    pub fn new(family: ExpertFamily, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("parameter grid"));
        }
        let probe = Feature(vec![0.0; points[0].len()]);
        family.eval_unchecked(&points[0], &probe)?;
        Ok(Self { family, points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn family(&self) -> &ExpertFamily {
        &self.family
    }
}

impl ExpertSet for ParamGridSet {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn predict_all(&self, prefix: &[Feature], out: &mut [f64]) -> Result<()> {
        use rayon::prelude::*;
        let x = prefix.last().ok_or(Error::Empty("feature prefix"))?;
        let eval = |(o, w): (&mut f64, &Vec<f64>)| {
            *o = self.family.eval_unchecked(w, x).unwrap_or(0.5);
        };
        if self.points.len() >= 8192 {
            out.par_iter_mut().zip(self.points.par_iter()).for_each(eval);
        } else {
            out.iter_mut().zip(self.points.iter()).for_each(eval);
        }
        Ok(())
    }
}

pub(crate) fn check_dim(expected: usize, x: &Feature) -> Result<()> {
    if x.dim() != expected {
        Err(Error::DimensionMismatch {
            expected,
            got: x.dim(),
        })
    } else {
        Ok(())
    }
}

/// Evaluates one member; see [`ExpertFamily::eval`].
pub fn eval_expert(family: &ExpertFamily, params: &Params, prefix: &[Feature]) -> Result<ProbValue> {
    family.eval(params, prefix)
}
