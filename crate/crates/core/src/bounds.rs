//! Closed-form regret bounds, all in nats, and the scale tuning of the cover
//! bound.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::covering::ln_cover_size_bound;
use crate::error::{Error, Result};
use crate::loss::ln_binomial_row;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// `2 alpha T + ln |G_alpha|`.
    CoverUpper,
    /// `d ln(2RLT/d + 1) + 2d`.
    LipschitzUpper,
    /// `min{d ln(2RLT/d + 1) + 2d, T}`.
    LipschitzUpperCapped,
    /// `d ln(RLT/d) - d ln 64 - d ln ln(RLT)`.
    LipschitzLower,
    /// `(d/2) ln(2CR^2 T/d + 2) + d/2 + ln 2`.
    HessianUpper,
    /// `ln Vol(W*)/Vol(B_2(sqrt(d/CT))) + d/2 + ln 2`.
    HessianVolumeUpper,
    /// `(d/2) ln(T/d^{(s+2)/s}) - c d`.
    GeneralizedLinearLower,
    /// `(s+1)/(s e) T^{s/(s+1)} - c`.
    DsLower,
    /// `sum_{t <= dfat} C(T,t) ceil(3/(2 alpha))^t` (a count, not nats).
    CoverSize,
}

impl BoundKind {
    pub const ALL: [BoundKind; 9] = [
        BoundKind::CoverUpper,
        BoundKind::LipschitzUpper,
        BoundKind::LipschitzUpperCapped,
        BoundKind::LipschitzLower,
        BoundKind::HessianUpper,
        BoundKind::HessianVolumeUpper,
        BoundKind::GeneralizedLinearLower,
        BoundKind::DsLower,
        BoundKind::CoverSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::CoverUpper => "cover-upper",
            BoundKind::LipschitzUpper => "lipschitz-upper",
            BoundKind::LipschitzUpperCapped => "lipschitz-upper-capped",
            BoundKind::LipschitzLower => "lipschitz-lower",
            BoundKind::HessianUpper => "hessian-upper",
            BoundKind::HessianVolumeUpper => "hessian-volume-upper",
            BoundKind::GeneralizedLinearLower => "generalized-linear-lower",
            BoundKind::DsLower => "ds-lower",
            BoundKind::CoverSize => "cover-size",
        }
    }

    /// Upper bounds on regret, as opposed to lower bounds and counts.
    pub fn is_upper(self) -> bool {
        matches!(
            self,
            BoundKind::CoverUpper
                | BoundKind::LipschitzUpper
                | BoundKind::LipschitzUpperCapped
                | BoundKind::HessianUpper
                | BoundKind::HessianVolumeUpper
        )
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown bound kind {s:?}")))
    }
}

/// Shape of the parameter set in the volume form of the Hessian bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamShape {
    /// `B_2^d(R)`, using the `R` parameter.
    Ball,
    /// `[-a, a]^d`.
    Box { half_width: f64 },
    /// User-supplied `Vol(W*)/Vol(B_2^d(sqrt(d/CT)))`.
    VolumeRatio(f64),
}

/// Named parameters of a bound. Unused parameters are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub t: f64,
    pub d: f64,
    pub radius: f64,
    pub lipschitz: f64,
    pub s: f64,
    pub hessian: f64,
    pub alpha: f64,
    pub cover_size: f64,
    pub dfat: f64,
    pub shape: ParamShape,
    /// Constant of the hidden lower-order term of a lower bound.
    pub lower_const: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            t: 1.0,
            d: 1.0,
            radius: 1.0,
            lipschitz: 1.0,
            s: 2.0,
            hessian: 0.25,
            alpha: 0.1,
            cover_size: 1.0,
            dfat: 0.0,
            shape: ParamShape::Ball,
            lower_const: 0.0,
        }
    }
}

impl BoundParams {
    /// Sets a parameter by name: `T d R L s C alpha cover_size dfat
    /// volume_ratio box_half_width const`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "T" => self.t = value,
            "d" => self.d = value,
            "R" => self.radius = value,
            "L" => self.lipschitz = value,
            "s" => self.s = value,
            "C" => self.hessian = value,
            "alpha" => self.alpha = value,
            "cover_size" => self.cover_size = value,
            "dfat" => self.dfat = value,
            "volume_ratio" => self.shape = ParamShape::VolumeRatio(value),
            "box_half_width" => self.shape = ParamShape::Box { half_width: value },
            "const" => self.lower_const = value,
            _ => return Err(Error::Parse(format!("unknown bound parameter {name:?}"))),
        }
        Ok(())
    }

    /// `(name, value)` pairs of the parameters a kind reads.
    pub fn used_by(&self, kind: BoundKind) -> Vec<(&'static str, f64)> {
        let p = self;
        match kind {
            BoundKind::CoverUpper => vec![("T", p.t), ("alpha", p.alpha), ("cover_size", p.cover_size)],
            BoundKind::LipschitzUpper | BoundKind::LipschitzUpperCapped | BoundKind::LipschitzLower => {
                vec![("T", p.t), ("d", p.d), ("R", p.radius), ("L", p.lipschitz)]
            }
            BoundKind::HessianUpper => vec![("T", p.t), ("d", p.d), ("R", p.radius), ("C", p.hessian)],
            BoundKind::HessianVolumeUpper => {
                let mut v = vec![("T", p.t), ("d", p.d), ("C", p.hessian)];
                match p.shape {
                    ParamShape::Ball => v.push(("R", p.radius)),
                    ParamShape::Box { half_width } => v.push(("box_half_width", half_width)),
                    ParamShape::VolumeRatio(r) => v.push(("volume_ratio", r)),
                }
                v
            }
            BoundKind::GeneralizedLinearLower => vec![("T", p.t), ("d", p.d), ("s", p.s), ("const", p.lower_const)],
            BoundKind::DsLower => vec![("T", p.t), ("s", p.s), ("const", p.lower_const)],
            BoundKind::CoverSize => vec![("T", p.t), ("alpha", p.alpha), ("dfat", p.dfat)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub kind: BoundKind,
    pub params: BoundParams,
}

impl BoundSpec {
    pub fn new(kind: BoundKind, params: BoundParams) -> Self {
        Self { kind, params }
    }
}

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::BoundDomain(what.to_string()))
    }
}

fn positive(v: f64, name: &str) -> Result<()> {
    require(v > 0.0 && !v.is_nan(), &format!("{name} > 0"))
}

fn integer(v: f64, name: &str) -> Result<()> {
    require(v.fract() == 0.0, &format!("{name} integer"))
}

/// `ln` of the volume of the `d`-dimensional unit `l_2` ball.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

/// `ln Vol([-a,a]^d + B_2^d(rho))` by the Steiner formula for the cube.
pub fn ln_box_neighbourhood_volume(d: usize, half_width: f64, rho: f64) -> f64 {
    let row = ln_binomial_row(d);
    let terms = (0..=d).map(|j| {
        let ball = if j == 0 { 0.0 } else { ln_unit_ball_volume(j) + j as f64 * rho.ln() };
        row[j] + (d - j) as f64 * (2.0 * half_width).ln() + ball
    });
    crate::loss::lse(terms)
}

/// Value of a bound in nats (a count for [`BoundKind::CoverSize`]).
pub fn evaluate_bound(spec: &BoundSpec) -> Result<f64> {
    let p = &spec.params;
    let (t, d) = (p.t, p.d);
    match spec.kind {
        BoundKind::CoverUpper => {
            positive(t, "T")?;
            require(p.alpha > 0.0 && p.alpha < 1.0, "0 < alpha < 1")?;
            require(p.cover_size >= 1.0, "cover_size >= 1")?;
            Ok(2.0 * p.alpha * t + p.cover_size.ln())
        }
        BoundKind::LipschitzUpper | BoundKind::LipschitzUpperCapped => {
            positive(t, "T")?;
            positive(d, "d")?;
            positive(p.radius, "R")?;
            positive(p.lipschitz, "L")?;
            let v = d * (2.0 * p.radius * p.lipschitz * t / d + 1.0).ln() + 2.0 * d;
            if spec.kind == BoundKind::LipschitzUpper {
                require(t >= d, "T >= d")?;
                Ok(v)
            } else {
                Ok(v.min(t))
            }
        }
        BoundKind::LipschitzLower => {
            positive(t, "T")?;
            positive(d, "d")?;
            positive(p.radius, "R")?;
            positive(p.lipschitz, "L")?;
            let rlt = p.radius * p.lipschitz * t;
            require(rlt > std::f64::consts::E, "RLT > e")?;
            require(t >= d * rlt.ln(), "T >= d ln(RLT)")?;
            Ok(d * (rlt / d).ln() - d * 64f64.ln() - d * rlt.ln().ln())
        }
        BoundKind::HessianUpper => {
            positive(t, "T")?;
            positive(d, "d")?;
            positive(p.radius, "R")?;
            positive(p.hessian, "C")?;
            Ok(d / 2.0 * (2.0 * p.hessian * p.radius * p.radius * t / d + 2.0).ln()
                + d / 2.0
                + 2f64.ln())
        }
        BoundKind::HessianVolumeUpper => {
            positive(t, "T")?;
            positive(d, "d")?;
            integer(d, "d")?;
            positive(p.hessian, "C")?;
            let rho = (d / (p.hessian * t)).sqrt();
            let dim = d as usize;
            let ln_ratio = match p.shape {
                ParamShape::Ball => {
                    positive(p.radius, "R")?;
                    d * ((p.radius + rho) / rho).ln()
                }
                ParamShape::Box { half_width } => {
                    positive(half_width, "box_half_width")?;
                    ln_box_neighbourhood_volume(dim, half_width, rho)
                        - ln_unit_ball_volume(dim)
                        - d * rho.ln()
                }
                ParamShape::VolumeRatio(r) => {
                    require(r >= 1.0, "volume_ratio >= 1")?;
                    r.ln()
                }
            };
            Ok(ln_ratio + d / 2.0 + 2f64.ln())
        }
        BoundKind::GeneralizedLinearLower => {
            positive(t, "T")?;
            positive(d, "d")?;
            positive(p.s, "s")?;
            require(t >= d, "T >= d")?;
            let exponent = if p.s.is_infinite() { 1.0 } else { (p.s + 2.0) / p.s };
            Ok(d / 2.0 * (t.ln() - exponent * d.ln()) - p.lower_const * d)
        }
        BoundKind::DsLower => {
            require(t >= 0.0, "T >= 0")?;
            require(p.s >= 1.0, "s >= 1")?;
            if t == 0.0 {
                return Ok(0.0);
            }
            Ok((p.s + 1.0) / (p.s * std::f64::consts::E) * t.powf(p.s / (p.s + 1.0)) - p.lower_const)
        }
        BoundKind::CoverSize => {
            positive(t, "T")?;
            integer(t, "T")?;
            require(p.alpha > 0.0, "alpha > 0")?;
            require(p.dfat >= 0.0, "dfat >= 0")?;
            integer(p.dfat, "dfat")?;
            Ok(ln_cover_size_bound(t as usize, p.alpha, p.dfat as usize).exp())
        }
    }
}

/// Grid minimizer of `2 alpha T + ln |G_alpha|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedAlpha {
    pub alpha: f64,
    pub value: f64,
    /// Whether the cover size was nonincreasing in `alpha` on the grid.
    pub monotone: bool,
}

/// `n` log-spaced points in `[lo, hi)`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
}

/// The default tuning grid: 200 log-spaced points in `[1e-6, 1)`.
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1e-6, 1.0, 200)
}

/// Minimizes `2 alpha T + ln_cover_size(alpha)` over `grid`. The cover size
/// is passed in log form so that astronomically large covers stay finite.
pub fn tune_alpha(t: f64, ln_cover_size: impl Fn(f64) -> f64, grid: &[f64]) -> Result<TunedAlpha> {
    if grid.is_empty() {
        return Err(Error::Empty("alpha grid"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sizes: Vec<f64> = sorted.iter().map(|&a| ln_cover_size(a)).collect();
    let monotone = sizes.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    if !monotone {
        log::warn!("cover size is not nonincreasing in alpha on the tuning grid");
    }
    let mut best = TunedAlpha {
        alpha: sorted[0],
        value: f64::INFINITY,
        monotone,
    };
    for (&a, &ln_size) in sorted.iter().zip(&sizes) {
        let v = 2.0 * a * t + ln_size;
        if v < best.value {
            best.alpha = a;
            best.value = v;
        }
    }
    Ok(best)
}
