//! Experiment runner: label adversaries, benchmark matrices from a TOML
//! configuration and the summary CSV.
//!
//! A configuration names one family, one predictor, one adversary and one
//! feature design, plus a `[matrix]` section whose arrays are crossed into
//! cells. Every cell is deterministic given its seed and is identified by a
//! SHA-256 digest of its canonical TOML form.
//!
//! ```toml
//! name = "lipschitz"
//! seed = 7
//!
//! [family]
//! kind = "logistic"
//!
//! [predictor]
//! algorithm = "cover-bayes"
//! alpha = "d/T"
//!
//! [adversary]
//! kind = "greedy"
//!
//! [matrix]
//! d = [1, 2]
//! T = [32, 128]
//! adversary = ["greedy", "iid"]
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{default_alpha_grid, evaluate_bound, tune_alpha, BoundKind, BoundParams, BoundSpec};
use crate::covering::{
    discretize, fat1_number, grid_cover, msoa_cover, msoa_run, rounding_cover, CoverSet, DEFAULT_COVER_CAP,
};
use crate::error::{Error, Result};
use crate::experts::{
    best_in_hindsight, build_hard_lipschitz_class, DsFamily, ExpertFamily, ExpertSet, FamilyTable, Feature,
    FiniteDomain, FiniteStatic, GlmFamily, LipschitzFamily, Params,
};
use crate::loss::{regret_of, Label, LossValue, ProbValue};
use crate::predictors::{
    continuous_bayes, run_online, BayesMixture, ConstantPredictor, HessianSpec, NmlPredictor, OnlinePredictor,
    Transcript,
};
use crate::shtarkov::{block_design_features, minimax_value, SupOracle};

/// Version written in the `schema` column of the summary CSV.
pub const SUMMARY_SCHEMA: u32 = 1;
/// Default horizon cap of the exhaustive label adversary.
pub const DEFAULT_WORST_CASE_CAP: usize = 18;
/// Allowance on the Hessian bound for the discretized continuous prior.
pub const CONTINUOUS_GRID_ALLOWANCE: f64 = 0.1;
/// Floating-point tolerance on slack, for bounds met with equality.
pub const SLACK_TOLERANCE: f64 = 1e-9;

/// How labels are chosen against a predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryStrategy {
    /// Full label-tree search maximizing realized regret.
    ExactWorstCase { cap: usize },
    /// `y_t` maximizing the instantaneous loss, ties to 1.
    GreedyLabel,
    /// Independent Bernoulli(p) labels.
    Iid { p: f64 },
    /// `y_t = 1{h(x^t) >= 1/2}` for the member `h`.
    Realizable { expert: Params },
    /// Labels read from a transcript CSV.
    FromFile(PathBuf),
}

impl AdversaryStrategy {
    pub fn name(&self) -> String {
        match self {
            AdversaryStrategy::ExactWorstCase { .. } => "worst-case".into(),
            AdversaryStrategy::GreedyLabel => "greedy".into(),
            AdversaryStrategy::Iid { p } => format!("iid({p})"),
            AdversaryStrategy::Realizable { expert } => format!("realizable({expert})"),
            AdversaryStrategy::FromFile(p) => format!("file({})", p.display()),
        }
    }
}

/// Regret of a transcript against its attached hindsight optimum (the
/// certified lower bound on the infimum when one is available).
pub fn transcript_regret(tr: &Transcript) -> Result<f64> {
    let best = tr.best.as_ref().ok_or(Error::Empty("hindsight optimum on transcript"))?;
    Ok(regret_of(tr.cumulative_loss(), best.conservative_best()))
}

/// Outcome of [`worst_case_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub labels: Vec<Label>,
    pub regret: f64,
    /// Whether the full label tree was searched.
    pub exhaustive: bool,
}

/// Label sequence maximizing the realized regret of `predictor` on `xs`.
///
/// Searches all `2^T` sequences in lexicographic order (first maximizer
/// kept). Above `cap` it falls back to [`greedy_labels`] with a warning.
pub fn worst_case_labels(
    family: &ExpertFamily,
    predictor: &dyn OnlinePredictor,
    xs: &[Feature],
    cap: usize,
) -> Result<WorstCase> {
    if xs.len() > cap {
        log::warn!("horizon {} above the worst-case cap {cap}; using greedy labels", xs.len());
        let labels = greedy_labels(predictor, xs)?;
        let mut p = predictor.boxed_clone();
        let mut tr = run_online(p.as_mut(), xs, &labels)?;
        tr.best = Some(best_in_hindsight(family, xs, &labels, None)?);
        return Ok(WorstCase {
            regret: transcript_regret(&tr)?,
            labels,
            exhaustive: false,
        });
    }
    let mut best: Option<(f64, Vec<Label>)> = None;
    let mut labels = Vec::with_capacity(xs.len());
    search(family, predictor.boxed_clone(), xs, &mut labels, LossValue::ZERO, &mut best)?;
    let (regret, labels) = best.ok_or(Error::Empty("label tree"))?;
    Ok(WorstCase {
        labels,
        regret,
        exhaustive: true,
    })
}

fn search(
    family: &ExpertFamily,
    mut pred: Box<dyn OnlinePredictor>,
    xs: &[Feature],
    labels: &mut Vec<Label>,
    loss: LossValue,
    best: &mut Option<(f64, Vec<Label>)>,
) -> Result<()> {
    let t = labels.len();
    if t == xs.len() {
        let h = best_in_hindsight(family, xs, labels, None)?;
        let r = regret_of(loss, h.conservative_best());
        if best.as_ref().map_or(true, |(b, _)| r > *b) {
            *best = Some((r, labels.clone()));
        }
        return Ok(());
    }
    let yhat = pred.predict(&xs[t])?;
    for y in [Label::Zero, Label::One] {
        let step = pred.pending_loss(yhat, y);
        let mut next = pred.boxed_clone();
        next.update(y)?;
        labels.push(y);
        search(family, next, xs, labels, loss + step, best)?;
        labels.pop();
    }
    Ok(())
}

/// `y_t = 1` iff `yhat_t <= 1/2`, which maximizes `l(yhat_t, y_t)` with ties
/// going to 1. The predictor is cloned, not advanced.
pub fn greedy_labels(predictor: &dyn OnlinePredictor, xs: &[Feature]) -> Result<Vec<Label>> {
    let mut p = predictor.boxed_clone();
    let mut labels = Vec::with_capacity(xs.len());
    for x in xs {
        let y = greedy_label(p.predict(x)?);
        p.update(y)?;
        labels.push(y);
    }
    Ok(labels)
}

fn greedy_label(yhat: ProbValue) -> Label {
    Label::from_bit(yhat.get() <= 0.5)
}

/// Runs the online protocol with labels chosen by `adversary` and attaches
/// the hindsight optimum.
pub fn play(
    predictor: &mut dyn OnlinePredictor,
    family: &ExpertFamily,
    xs: &[Feature],
    adversary: &AdversaryStrategy,
    seed: u64,
) -> Result<Transcript> {
    let mut tr = match adversary {
        AdversaryStrategy::ExactWorstCase { cap } => {
            let wc = worst_case_labels(family, &*predictor, xs, *cap)?;
            run_online(predictor, xs, &wc.labels)?
        }
        AdversaryStrategy::GreedyLabel => {
            let mut tr = Transcript::default();
            for x in xs {
                let p = predictor.predict(x)?;
                let y = greedy_label(p);
                let loss = predictor.pending_loss(p, y);
                predictor.update(y)?;
                tr.push_scored(x.clone(), p, y, loss);
            }
            tr
        }
        AdversaryStrategy::Iid { p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidParameter(format!("label probability {p} outside [0,1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<Label> = xs.iter().map(|_| Label::from_bit(rng.gen_bool(*p))).collect();
            run_online(predictor, xs, &labels)?
        }
        AdversaryStrategy::Realizable { expert } => {
            let labels = (0..xs.len())
                .map(|t| Ok(Label::from_bit(family.eval(expert, &xs[..=t])?.get() >= 0.5)))
                .collect::<Result<Vec<_>>>()?;
            run_online(predictor, xs, &labels)?
        }
        AdversaryStrategy::FromFile(path) => {
            let file = Transcript::read_csv(std::fs::File::open(path)?)?;
            if file.len() != xs.len() {
                return Err(Error::LengthMismatch {
                    what: "label file vs design",
                    left: file.len(),
                    right: xs.len(),
                });
            }
            run_online(predictor, xs, &file.labels)?
        }
    };
    tr.best = Some(best_in_hindsight(family, xs, &tr.labels, None)?);
    Ok(tr)
}

fn default_radius() -> f64 {
    1.0
}

fn default_s() -> f64 {
    2.0
}

fn default_name() -> String {
    "bench".into()
}

/// Expert family of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// `logistic`, `constant-bernoulli`, `table`, `constants`,
    /// `all-functions`, `ds` or `hard-lipschitz`.
    pub kind: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_radius")]
    pub lipschitz: f64,
    /// Exponent of `D_s`.
    #[serde(default = "default_s")]
    pub s: f64,
    /// Tabular family file, relative to the configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Values for `constants` and `all-functions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Domain size for `constants` and `all-functions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<usize>,
    /// Separation scale of `hard-lipschitz`; defaults to `16 ln T / T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// Scale of a truncated mixture: a number, `"d/T"` or `"tuned"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Rule(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    /// `cover-bayes`, `bayes`, `continuous-bayes`, `nml`, `constant` or `msoa`.
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSpec>,
    /// `grid`, `rounding` or `msoa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<String>,
    /// Claimed Hessian bound for `continuous-bayes`; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<f64>,
    /// Output of `constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    /// `worst-case`, `greedy`, `iid`, `realizable` or `file`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// Parameter vector of the realizable member.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<Vec<f64>>,
    /// Index of the realizable member of a finite family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    /// `block`, `random-ball`, `basis`, `designated`, `domain-cycle` or
    /// `domain-random`; chosen from the family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
}

/// Axes crossed into cells; empty axes fall back to the base values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default, rename = "T")]
    pub t: Vec<usize>,
    #[serde(default)]
    pub adversary: Vec<String>,
    #[serde(default)]
    pub seed: Vec<u64>,
}

/// Benchmark configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub family: FamilySpec,
    pub predictor: PredictorSpec,
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub matrix: MatrixSpec,
    /// Directory against which relative paths are resolved.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// The crossed cells, in axis order `d`, `T`, `adversary`, `seed`.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let ds = if self.matrix.d.is_empty() { vec![self.d.unwrap_or(1)] } else { self.matrix.d.clone() };
        let ts = if self.matrix.t.is_empty() { vec![self.t.unwrap_or(32)] } else { self.matrix.t.clone() };
        let advs = if self.matrix.adversary.is_empty() {
            vec![self.adversary.kind.clone()]
        } else {
            self.matrix.adversary.clone()
        };
        let seeds = if self.matrix.seed.is_empty() { vec![self.seed] } else { self.matrix.seed.clone() };
        let mut out = Vec::new();
        for &d in &ds {
            for &t in &ts {
                for a in &advs {
                    for &seed in &seeds {
                        out.push(ExperimentConfig {
                            name: self.name.clone(),
                            d,
                            t,
                            seed,
                            family: self.family.clone(),
                            predictor: self.predictor.clone(),
                            adversary: AdversarySpec {
                                kind: a.clone(),
                                ..self.adversary.clone()
                            },
                            features: self.features.clone(),
                            base_dir: self.base_dir.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

/// One fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub family: FamilySpec,
    pub predictor: PredictorSpec,
    pub adversary: AdversarySpec,
    pub features: FeatureSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Result of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub digest: String,
    pub name: String,
    pub family: String,
    pub predictor: String,
    pub adversary: String,
    pub d: usize,
    pub t: usize,
    pub seed: u64,
    /// Members of the expert set the predictor mixes over, if any.
    pub members: Option<usize>,
    pub alpha: Option<f64>,
    /// `regret` (nats) or `errors` (M-SOA).
    pub metric: &'static str,
    pub learner_loss: f64,
    pub best_loss: f64,
    pub regret: f64,
    /// Upper bounds that apply to this cell.
    pub bounds: Vec<(String, f64)>,
    pub allowance: f64,
    /// Smallest `bound - regret` over `bounds`.
    pub slack: Option<f64>,
}

impl ReportRow {
    pub fn ok(&self) -> bool {
        self.slack.map_or(true, |s| s + self.allowance >= -SLACK_TOLERANCE)
    }
}

struct Built {
    family: ExpertFamily,
    xs: Vec<Feature>,
}

fn build_family_and_design(cfg: &ExperimentConfig) -> Result<Built> {
    let f = &cfg.family;
    let (d, t) = (cfg.d, cfg.t);
    let (family, default_design) = match f.kind.as_str() {
        "logistic" => (
            ExpertFamily::GeneralizedLinear(GlmFamily::logistic(d, f.radius, f.lipschitz)?),
            "block",
        ),
        "constant-bernoulli" => (ExpertFamily::LipschitzParametric(LipschitzFamily::constant_bernoulli()), "block"),
        "table" => {
            let path = f
                .table
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("family `table` needs `table`".into()))?;
            let fam = FamilyTable::read(cfg.resolve(path))?.into_family()?;
            (fam, "domain-cycle")
        }
        "constants" | "all-functions" => {
            let levels = f
                .levels
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("family `{}` needs `levels`", f.kind)))?;
            let domain = FiniteDomain::indexed(f.domain.unwrap_or(1))?;
            let fam = if f.kind == "constants" {
                FiniteStatic::constants(domain, levels)?
            } else {
                FiniteStatic::all_functions(domain, levels)?
            };
            (ExpertFamily::FiniteStatic(fam), "domain-cycle")
        }
        "ds" => (ExpertFamily::Ds(DsFamily::new(t, f.s)?), "basis"),
        "hard-lipschitz" => {
            let alpha = f.alpha.unwrap_or(16.0 * (t as f64).ln() / t as f64);
            let (fam, _) = build_hard_lipschitz_class(d, t, f.radius, f.lipschitz, alpha, cfg.seed)?;
            (fam, "designated")
        }
        other => return Err(Error::InvalidParameter(format!("unknown family kind {other:?}"))),
    };
    let design = cfg.features.design.as_deref().unwrap_or(default_design);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let xs = match design {
        "block" => {
            let dim = match &family {
                ExpertFamily::LipschitzParametric(l) => l.ball.dim,
                _ => d,
            };
            block_design_features(dim, t)?
        }
        "random-ball" => (0..t)
            .map(|_| loop {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
                    break Feature::new(v);
                }
            })
            .collect::<Result<_>>()?,
        "basis" => (0..t).map(|i| Feature::basis(t, i)).collect(),
        "designated" => match &family {
            ExpertFamily::HardLipschitz(h) => h.designated_features().to_vec(),
            _ => return Err(Error::InvalidParameter("`designated` design needs a hard-lipschitz family".into())),
        },
        "domain-cycle" | "domain-random" => {
            let domain: Vec<Feature> = match &family {
                ExpertFamily::FiniteStatic(s) => s.domain().features().to_vec(),
                ExpertFamily::FiniteSequential(s) => match s.design() {
                    Some((design, _)) => design.to_vec(),
                    None => return Err(Error::InvalidParameter("sequential family without a design".into())),
                },
                _ => return Err(Error::InvalidParameter(format!("`{design}` design needs a finite family"))),
            };
            if let ExpertFamily::FiniteSequential(_) = family {
                domain.into_iter().take(t).collect()
            } else if design == "domain-cycle" {
                (0..t).map(|i| domain[i % domain.len()].clone()).collect()
            } else {
                (0..t).map(|_| domain[rng.gen_range(0..domain.len())].clone()).collect()
            }
        }
        other => return Err(Error::InvalidParameter(format!("unknown feature design {other:?}"))),
    };
    Ok(Built { family, xs })
}

fn adversary_strategy(cfg: &ExperimentConfig, family: &ExpertFamily) -> Result<AdversaryStrategy> {
    let a = &cfg.adversary;
    Ok(match a.kind.as_str() {
        "worst-case" => AdversaryStrategy::ExactWorstCase {
            cap: a.cap.unwrap_or(DEFAULT_WORST_CASE_CAP),
        },
        "greedy" => AdversaryStrategy::GreedyLabel,
        "iid" => AdversaryStrategy::Iid { p: a.p.unwrap_or(0.5) },
        "realizable" => {
            let expert = match (&a.expert, a.expert_index) {
                (Some(w), _) => Params::Vector(w.clone()),
                (None, Some(i)) => Params::Index(i),
                (None, None) => match family.finite_len() {
                    Some(_) => Params::Index(0),
                    None => Params::Vector(vec![0.0; family.ball().map_or(1, |b| b.dim)]),
                },
            };
            AdversaryStrategy::Realizable { expert }
        }
        "file" => AdversaryStrategy::FromFile(cfg.resolve(
            a.file
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("adversary `file` needs `file`".into()))?,
        )),
        other => return Err(Error::InvalidParameter(format!("unknown adversary {other:?}"))),
    })
}

fn bound(kind: BoundKind, params: BoundParams) -> Result<(String, f64)> {
    Ok((kind.name().to_string(), evaluate_bound(&BoundSpec::new(kind, params))?))
}

struct PredictorPlan {
    predictor: Box<dyn OnlinePredictor>,
    members: Option<usize>,
    alpha: Option<f64>,
    bounds: Vec<(String, f64)>,
    allowance: f64,
}

fn lipschitz_params(family: &ExpertFamily) -> Option<(usize, f64, f64)> {
    match family {
        ExpertFamily::LipschitzParametric(f) => Some((f.ball.dim, f.ball.radius, f.lipschitz)),
        ExpertFamily::GeneralizedLinear(f) => Some((f.ball.dim, f.ball.radius, f.lipschitz)),
        ExpertFamily::HardLipschitz(f) => Some((f.dim, f.radius, f.lipschitz)),
        _ => None,
    }
}

fn resolve_alpha(spec: Option<&AlphaSpec>, family: &ExpertFamily, t: usize) -> Result<(f64, bool)> {
    let lip = lipschitz_params(family);
    match spec {
        Some(AlphaSpec::Value(a)) => Ok((*a, false)),
        Some(AlphaSpec::Rule(r)) if r == "tuned" => {
            let (d, radius, l) =
                lip.ok_or_else(|| Error::InvalidParameter("alpha `tuned` needs a Lipschitz family".into()))?;
            let best = tune_alpha(
                t as f64,
                |a| d as f64 * (2.0 * radius * l / a + 1.0).ln(),
                &default_alpha_grid(),
            )?;
            Ok((best.alpha, false))
        }
        Some(AlphaSpec::Rule(r)) if r == "d/T" => {
            let (d, _, _) = lip.ok_or_else(|| Error::InvalidParameter("alpha `d/T` needs a Lipschitz family".into()))?;
            Ok((d as f64 / t as f64, true))
        }
        None if lip.is_some() => Ok((lip.map_or(1, |l| l.0) as f64 / t as f64, true)),
        Some(AlphaSpec::Rule(r)) => Err(Error::InvalidParameter(format!("unknown alpha rule {r:?}"))),
        None => Err(Error::InvalidParameter("predictor needs `alpha`".into())),
    }
}

fn finite_expert_set(family: &ExpertFamily) -> Result<Arc<dyn ExpertSet>> {
    match family {
        ExpertFamily::FiniteStatic(f) => Ok(Arc::new(f.clone())),
        ExpertFamily::FiniteSequential(f) => Ok(Arc::new(f.clone())),
        other => Err(Error::InvalidParameter(format!(
            "`bayes` needs a finite family, got {}",
            other.kind_name()
        ))),
    }
}

fn sup_oracle(family: &ExpertFamily, xs: &[Feature]) -> Result<SupOracle> {
    match family {
        ExpertFamily::FiniteStatic(_) | ExpertFamily::FiniteSequential(_) | ExpertFamily::HardLipschitz(_) => {
            SupOracle::finite_max(family, xs)
        }
        ExpertFamily::Ds(f) => Ok(SupOracle::DsClosedForm { s: f.s }),
        ExpertFamily::LipschitzParametric(f) if f.name == LipschitzFamily::constant_bernoulli().name => {
            Ok(SupOracle::ConstantBernoulliMle)
        }
        other => Err(Error::InvalidParameter(format!(
            "no exact sup oracle for {} families",
            other.kind_name()
        ))),
    }
}

fn plan_predictor(cfg: &ExperimentConfig, family: &ExpertFamily, xs: &[Feature]) -> Result<PredictorPlan> {
    let t = xs.len();
    let p = &cfg.predictor;
    let plain = |predictor: Box<dyn OnlinePredictor>| PredictorPlan {
        predictor,
        members: None,
        alpha: None,
        bounds: Vec::new(),
        allowance: 0.0,
    };
    match p.algorithm.as_str() {
        "cover-bayes" => {
            let (alpha, d_over_t) = resolve_alpha(p.alpha.as_ref(), family, t)?;
            let cover: CoverSet = match (p.cover.as_deref(), family) {
                (None | Some("grid"), f) if lipschitz_params(f).is_some() => grid_cover(f, alpha, DEFAULT_COVER_CAP)?,
                (None | Some("rounding"), ExpertFamily::FiniteStatic(f)) => rounding_cover(f, alpha)?,
                (Some("msoa"), ExpertFamily::FiniteStatic(f)) => msoa_cover(f, alpha, t, DEFAULT_COVER_CAP)?,
                (c, f) => {
                    return Err(Error::InvalidParameter(format!(
                        "cover {c:?} not available for {} families",
                        f.kind_name()
                    )))
                }
            };
            let scale = cover.scale;
            let size = cover.len();
            let mut bounds = vec![bound(
                BoundKind::CoverUpper,
                BoundParams {
                    t: t as f64,
                    alpha: scale,
                    cover_size: size as f64,
                    ..Default::default()
                },
            )?];
            if let (true, Some((d, radius, lipschitz))) = (d_over_t, lipschitz_params(family)) {
                if t >= d {
                    bounds.push(bound(
                        BoundKind::LipschitzUpper,
                        BoundParams {
                            t: t as f64,
                            d: d as f64,
                            radius,
                            lipschitz,
                            ..Default::default()
                        },
                    )?);
                }
            }
            let mix = BayesMixture::new(Arc::new(cover), Some(scale))?.with_label("cover-bayes");
            Ok(PredictorPlan {
                predictor: Box::new(mix),
                members: Some(size),
                alpha: Some(scale),
                bounds,
                allowance: 0.0,
            })
        }
        "bayes" => {
            let set = finite_expert_set(family)?;
            let n = set.len();
            let alpha = match &p.alpha {
                Some(AlphaSpec::Value(a)) => Some(*a),
                None => None,
                Some(AlphaSpec::Rule(r)) => {
                    return Err(Error::InvalidParameter(format!("alpha rule {r:?} needs a Lipschitz family")))
                }
            };
            let bounds = match alpha {
                Some(a) => vec![bound(
                    BoundKind::CoverUpper,
                    BoundParams {
                        t: t as f64,
                        alpha: a,
                        cover_size: n as f64,
                        ..Default::default()
                    },
                )?],
                None => vec![("finite-upper".to_string(), (n as f64).ln())],
            };
            Ok(PredictorPlan {
                predictor: Box::new(BayesMixture::new(set, alpha)?),
                members: Some(n),
                alpha,
                bounds,
                allowance: 0.0,
            })
        }
        "continuous-bayes" => {
            let hessian = p.hessian.map_or(HessianSpec::Estimate, HessianSpec::Claimed);
            let (mix, info) = continuous_bayes(family, t, hessian, xs, cfg.seed)?;
            let (d, radius, _) = lipschitz_params(family)
                .ok_or_else(|| Error::InvalidParameter("continuous-bayes needs a parametric family".into()))?;
            let bounds = vec![bound(
                BoundKind::HessianUpper,
                BoundParams {
                    t: t as f64,
                    d: d as f64,
                    radius,
                    hessian: info.hessian_bound,
                    ..Default::default()
                },
            )?];
            Ok(PredictorPlan {
                predictor: Box::new(mix),
                members: Some(info.grid_points),
                alpha: None,
                bounds,
                allowance: CONTINUOUS_GRID_ALLOWANCE,
            })
        }
        "nml" => {
            let table = Arc::new(minimax_value(&sup_oracle(family, xs)?, xs)?);
            let ln_s = table.root().get();
            let mut plan = plain(Box::new(NmlPredictor::new(table, xs.to_vec())?));
            plan.bounds.push(("shtarkov".to_string(), ln_s));
            Ok(plan)
        }
        "constant" => Ok(plain(Box::new(ConstantPredictor::new(ProbValue::new(p.value.unwrap_or(0.5))?)))),
        other => Err(Error::InvalidParameter(format!("unknown predictor {other:?}"))),
    }
}

fn run_msoa_cell(cfg: &ExperimentConfig, built: &Built, digest: String) -> Result<ReportRow> {
    let ExpertFamily::FiniteStatic(fam) = &built.family else {
        return Err(Error::InvalidParameter("`msoa` needs a finite static family".into()));
    };
    let alpha = match cfg.predictor.alpha {
        Some(AlphaSpec::Value(a)) => a,
        _ => return Err(Error::InvalidParameter("`msoa` needs a numeric `alpha`".into())),
    };
    let disc = discretize(fam, alpha)?;
    let member = cfg.adversary.expert_index.unwrap_or(0);
    if cfg.adversary.kind != "realizable" || member >= fam.len() {
        return Err(Error::InvalidParameter(
            "`msoa` runs against a realizable adversary with a valid `expert_index`".into(),
        ));
    }
    let idx: Vec<usize> = built.xs.iter().map(|x| fam.domain().lookup(x)).collect::<Result<_>>()?;
    let ys: Vec<usize> = idx.iter().map(|&j| disc.table()[member][j]).collect();
    let run = msoa_run(&disc, &built.xs, &ys)?;
    let fat1 = fat1_number(&disc, usize::MAX)?.value as f64;
    let errors = run.errors as f64;
    Ok(ReportRow {
        digest,
        name: cfg.name.clone(),
        family: cfg.family.kind.clone(),
        predictor: "msoa".into(),
        adversary: format!("realizable({member})"),
        d: cfg.d,
        t: built.xs.len(),
        seed: cfg.seed,
        members: Some(fam.len()),
        alpha: Some(alpha),
        metric: "errors",
        learner_loss: errors,
        best_loss: 0.0,
        regret: errors,
        bounds: vec![("fat1".into(), fat1)],
        allowance: 0.0,
        slack: Some(fat1 - errors),
    })
}

/// Runs one cell. When `out_dir` is given the transcript is written to
/// `<out_dir>/<digest>.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ReportRow> {
    let digest = cfg.digest();
    let tag = |e: Error| Error::Inconsistent(format!("cell {digest}: {e}"));
    let built = build_family_and_design(cfg).map_err(tag)?;
    if cfg.predictor.algorithm == "msoa" {
        return run_msoa_cell(cfg, &built, digest.clone()).map_err(tag);
    }
    let adversary = adversary_strategy(cfg, &built.family).map_err(tag)?;
    let mut plan = plan_predictor(cfg, &built.family, &built.xs).map_err(tag)?;
    let tr = play(plan.predictor.as_mut(), &built.family, &built.xs, &adversary, cfg.seed).map_err(tag)?;
    if let Some(dir) = out_dir {
        tr.save_csv(dir.join(format!("{digest}.csv"))).map_err(tag)?;
    }
    let regret = transcript_regret(&tr).map_err(tag)?;
    let best = tr.best.as_ref().map_or(0.0, |b| b.conservative_best().get());
    let slack = plan
        .bounds
        .iter()
        .map(|(_, b)| b - regret)
        .min_by(f64::total_cmp);
    Ok(ReportRow {
        digest,
        name: cfg.name.clone(),
        family: cfg.family.kind.clone(),
        predictor: plan.predictor.name(),
        adversary: adversary.name(),
        d: cfg.d,
        t: built.xs.len(),
        seed: cfg.seed,
        members: plan.members,
        alpha: plan.alpha,
        metric: "regret",
        learner_loss: tr.cumulative_loss().get(),
        best_loss: best,
        regret,
        bounds: plan.bounds,
        allowance: plan.allowance,
        slack,
    })
}

/// Header of the summary CSV.
pub const SUMMARY_HEADER: [&str; 19] = [
    "schema",
    "digest",
    "name",
    "family",
    "predictor",
    "adversary",
    "d",
    "T",
    "seed",
    "members",
    "alpha",
    "metric",
    "learner_loss",
    "best_loss",
    "regret",
    "bounds",
    "allowance",
    "slack",
    "ok",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes rows as the summary CSV.
pub fn write_summary<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let bounds: Vec<String> = r.bounds.iter().map(|(k, v)| format!("{k}={v}")).collect();
        w.write_record([
            SUMMARY_SCHEMA.to_string(),
            r.digest.clone(),
            r.name.clone(),
            r.family.clone(),
            r.predictor.clone(),
            r.adversary.clone(),
            r.d.to_string(),
            r.t.to_string(),
            r.seed.to_string(),
            opt(r.members),
            opt(r.alpha),
            r.metric.to_string(),
            r.learner_loss.to_string(),
            r.best_loss.to_string(),
            r.regret.to_string(),
            bounds.join(";"),
            r.allowance.to_string(),
            opt(r.slack),
            r.ok().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a benchmark, in cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_summary(&self.rows, &mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Runs every cell of `config` in parallel and, when `out_dir` is given,
/// writes transcripts and `summary.csv` there.
pub fn bench(config: &BenchConfig, out_dir: Option<&Path>) -> Result<BenchReport> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let rows = config
        .cells()
        .par_iter()
        .map(|cell| run_experiment(cell, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let report = BenchReport { rows };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("summary.csv"), report.summary_csv()?)?;
    }
    Ok(report)
}
