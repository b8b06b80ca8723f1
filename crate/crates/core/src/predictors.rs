//! Online predictors: the Bayesian mixture over a finite expert set (with
//! optional smooth truncation), its discretized continuous-prior variant,
//! the fixed-design NML predictor and a constant baseline.
//!
//! Every predictor follows the protocol `predict(x_t)` then `update(y_t)`;
//! calling them out of order is rejected.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::experts::{ExpertFamily, ExpertSet, Feature, Hindsight, ParamGridSet};
use crate::loss::{log_loss, lse, raw_log_loss, Label, LossValue, ProbValue};
use crate::shtarkov::GameValueTable;

/// `(g + alpha) / (1 + 2 alpha)`.
pub fn smooth_truncate(g: ProbValue, alpha: f64) -> ProbValue {
    ProbValue::saturating(truncate_raw(g.get(), alpha))
}

#[inline]
pub(crate) fn truncate_raw(g: f64, alpha: f64) -> f64 {
    (g + alpha) / (1.0 + 2.0 * alpha)
}

/// A sequential predictor driven by the online protocol.
pub trait OnlinePredictor: Send {
    fn name(&self) -> String;

    /// Prediction for step `t` after seeing `x_t`.
    fn predict(&mut self, x: &Feature) -> Result<ProbValue>;

    /// Reveals `y_t`.
    fn update(&mut self, y: Label) -> Result<()>;

    /// Log loss on `y` of the pending prediction `yhat`, called between
    /// `predict` and `update`. Predictors that track probabilities in log
    /// domain override it to avoid the cancellation in `1 - yhat`.
    fn pending_loss(&self, yhat: ProbValue, y: Label) -> LossValue {
        log_loss(yhat, y)
    }

    fn boxed_clone(&self) -> Box<dyn OnlinePredictor>;
}

impl Clone for Box<dyn OnlinePredictor> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// One online run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub features: Vec<Feature>,
    pub predictions: Vec<ProbValue>,
    pub labels: Vec<Label>,
    pub step_losses: Vec<LossValue>,
    pub best: Option<Hindsight>,
}

impl Transcript {
    pub fn push(&mut self, x: Feature, yhat: ProbValue, y: Label) {
        self.push_scored(x, yhat, y, log_loss(yhat, y));
    }

    /// Appends a step whose loss was computed by the predictor.
    pub fn push_scored(&mut self, x: Feature, yhat: ProbValue, y: Label, loss: LossValue) {
        self.features.push(x);
        self.predictions.push(yhat);
        self.labels.push(y);
        self.step_losses.push(loss);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cumulative_loss(&self) -> LossValue {
        self.step_losses.iter().copied().sum()
    }

    /// Writes the columns `t, x, y, yhat, step_loss, cum_loss`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "yhat", "step_loss", "cum_loss"])?;
        let mut cum = LossValue::ZERO;
        for t in 0..self.len() {
            cum += self.step_losses[t];
            w.write_record([
                (t + 1).to_string(),
                self.features[t].to_string(),
                self.labels[t].to_string(),
                self.predictions[t].to_string(),
                self.step_losses[t].to_string(),
                cum.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a transcript written by [`Transcript::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut tr = Transcript::default();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse("short transcript row".into()));
            let x: Feature = field(1)?.parse()?;
            let y = Label::from_int(
                field(2)?
                    .parse::<i64>()
                    .map_err(|e| Error::Parse(format!("label: {e}")))?,
            )?;
            let p = ProbValue::new(
                field(3)?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("prediction: {e}")))?,
            )?;
            tr.push(x, p, y);
        }
        Ok(tr)
    }
}

/// Runs `predictor` on `(xs, ys)`.
pub fn run_online(predictor: &mut dyn OnlinePredictor, xs: &[Feature], ys: &[Label]) -> Result<Transcript> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            what: "features vs labels",
            left: xs.len(),
            right: ys.len(),
        });
    }
    let mut tr = Transcript::default();
    for (x, &y) in xs.iter().zip(ys) {
        let p = predictor.predict(x)?;
        let loss = predictor.pending_loss(p, y);
        predictor.update(y)?;
        tr.push_scored(x.clone(), p, y, loss);
    }
    Ok(tr)
}

/// Predicts the same probability every round.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor {
    pub value: ProbValue,
    pending: bool,
}

impl ConstantPredictor {
    pub fn new(value: ProbValue) -> Self {
        Self { value, pending: false }
    }
}

impl OnlinePredictor for ConstantPredictor {
    fn name(&self) -> String {
        format!("constant({})", self.value)
    }

    fn predict(&mut self, _x: &Feature) -> Result<ProbValue> {
        if self.pending {
            return Err(Error::Protocol("predict called twice without update"));
        }
        self.pending = true;
        Ok(self.value)
    }

    fn update(&mut self, _y: Label) -> Result<()> {
        if !self.pending {
            return Err(Error::Protocol("update called before predict"));
        }
        self.pending = false;
        Ok(())
    }

    fn boxed_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(*self)
    }
}

/// Bayesian mixture over a finite expert set, optionally with smooth
/// truncation of every expert's prediction.
///
/// The log-weight of expert `i` after `t` rounds is its log prior minus the
/// cumulative log loss of its (truncated, if `alpha` is set) predictions.
#[derive(Clone)]
pub struct BayesMixture {
    experts: Arc<dyn ExpertSet>,
    log_weights: Vec<f64>,
    alpha: Option<f64>,
    prefix: Vec<Feature>,
    pending: Option<Vec<f64>>,
    step: usize,
    label: String,
}

impl std::fmt::Debug for BayesMixture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BayesMixture")
            .field("experts", &self.log_weights.len())
            .field("alpha", &self.alpha)
            .field("step", &self.step)
            .finish()
    }
}

impl BayesMixture {
    /// Uniform prior.
    pub fn new(experts: Arc<dyn ExpertSet>, alpha: Option<f64>) -> Result<Self> {
        let n = experts.len();
        if n == 0 {
            return Err(Error::Empty("expert set"));
        }
        let lp = -(n as f64).ln();
        Self::with_log_prior(experts, vec![lp; n], alpha)
    }

    pub fn with_log_prior(experts: Arc<dyn ExpertSet>, log_prior: Vec<f64>, alpha: Option<f64>) -> Result<Self> {
        if log_prior.len() != experts.len() {
            return Err(Error::LengthMismatch {
                what: "prior vs experts",
                left: log_prior.len(),
                right: experts.len(),
            });
        }
        if let Some(a) = alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParameter(format!("truncation alpha {a} outside (0,1)")));
            }
        }
        if log_prior.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidParameter("log prior must be finite or -inf".into()));
        }
        let label = match alpha {
            Some(a) => format!("truncated-bayes(alpha={a})"),
            None => "bayes".to_string(),
        };
        Ok(Self {
            experts,
            log_weights: log_prior,
            alpha,
            prefix: Vec::new(),
            pending: None,
            step: 0,
            label,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Posterior-weighted mean of the (truncated) expert predictions.
    pub fn bayes_step(&mut self, x: &Feature) -> Result<ProbValue> {
        if self.pending.is_some() {
            return Err(Error::Protocol("predict called twice without update"));
        }
        let total = lse(self.log_weights.iter().copied());
        if total == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior);
        }
        self.prefix.push(x.clone());
        let mut preds = vec![0.0; self.log_weights.len()];
        if let Err(e) = self.experts.predict_all(&self.prefix, &mut preds) {
            self.prefix.pop();
            return Err(e);
        }
        if let Some(a) = self.alpha {
            for p in preds.iter_mut() {
                *p = truncate_raw(*p, a);
            }
        }
        let mut yhat = 0.0;
        for (lw, p) in self.log_weights.iter().zip(&preds) {
            if *lw > f64::NEG_INFINITY {
                yhat += (lw - total).exp() * p;
            }
        }
        self.pending = Some(preds);
        Ok(ProbValue::saturating(yhat))
    }

    /// Charges every expert its log loss on `y`.
    pub fn bayes_update(&mut self, y: Label) -> Result<()> {
        let preds = self
            .pending
            .take()
            .ok_or(Error::Protocol("update called before predict"))?;
        for (lw, p) in self.log_weights.iter_mut().zip(&preds) {
            *lw -= raw_log_loss(*p, y);
        }
        self.step += 1;
        Ok(())
    }
}

impl OnlinePredictor for BayesMixture {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict(&mut self, x: &Feature) -> Result<ProbValue> {
        self.bayes_step(x)
    }

    fn update(&mut self, y: Label) -> Result<()> {
        self.bayes_update(y)
    }

    fn boxed_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(self.clone())
    }
}

/// How the Hessian bound `C` of the log-likelihood is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HessianSpec {
    /// User-supplied bound, verified numerically.
    Claimed(f64),
    /// Largest curvature observed by the numerical verifier.
    Estimate,
}

/// Configuration of the discretized continuous-prior mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousBayesInfo {
    pub hessian_bound: f64,
    /// Radius of the enlargement, `sqrt(d / (C T))`.
    pub enlargement: f64,
    pub spacing: f64,
    pub grid_points: usize,
}

pub const CONTINUOUS_GRID_CAP: f64 = 1e7;
const HESSIAN_TOLERANCE: f64 = 1.01;

/// Largest `|u^T ∇² log f(w,x)^y (1-f(w,x))^{1-y} u|` over random unit
/// directions `u`, points `w` of the ball of radius `radius`, the supplied
/// features and both labels, by central second differences.
pub fn empirical_hessian_bound(
    family: &ExpertFamily,
    dim: usize,
    radius: f64,
    features: &[Feature],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Empty("features for the Hessian verifier"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-3;
    let loglik = |w: &[f64], x: &Feature, y: Label| -> Result<f64> {
        Ok(-raw_log_loss(family.eval_unchecked(w, x)?, y))
    };
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
        let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > radius {
            w.iter_mut().for_each(|v| *v *= radius / n);
        }
        let mut u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let un = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        u.iter_mut().for_each(|v| *v /= un);
        let x = &features[rng.gen_range(0..features.len())];
        let plus: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a - eps * b).collect();
        for y in [Label::Zero, Label::One] {
            let c = (loglik(&plus, x, y)? - 2.0 * loglik(&w, x, y)? + loglik(&minus, x, y)?) / (eps * eps);
            if c.is_finite() {
                worst = worst.max(c.abs());
            }
        }
    }
    Ok(worst)
}

/// Bayesian mixture with a uniform prior on a grid over the enlarged ball
/// `B_2^d(R + sqrt(d/(C T)))`.
///
/// The grid is the lattice of spacing `sqrt(d/(C T))/10` through the origin,
/// intersected with the enlarged ball.
pub fn continuous_bayes(
    family: &ExpertFamily,
    horizon: usize,
    hessian: HessianSpec,
    sample_features: &[Feature],
    seed: u64,
) -> Result<(BayesMixture, ContinuousBayesInfo)> {
    let ball = match family {
        ExpertFamily::LipschitzParametric(f) => f.ball,
        ExpertFamily::GeneralizedLinear(f) => f.ball,
        _ => {
            return Err(Error::InvalidParameter(
                "continuous Bayes needs a Lipschitz or generalized linear family".into(),
            ))
        }
    };
    if ball.norm_order != 2.0 {
        return Err(Error::InvalidParameter("continuous Bayes expects an l2 ball".into()));
    }
    let d = ball.dim;
    if d > 4 {
        return Err(Error::InvalidParameter(format!("dimension {d} above the continuous-prior guard 4")));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let radius = ball.radius;
    let empirical = empirical_hessian_bound(family, d, radius + 1.0, sample_features, 2000, seed)?;
    let c = match hessian {
        HessianSpec::Claimed(c) => {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("Hessian bound {c} must be positive")));
            }
            if empirical > c * HESSIAN_TOLERANCE {
                return Err(Error::HessianBound {
                    claimed: c,
                    empirical,
                });
            }
            c
        }
        HessianSpec::Estimate => empirical.max(1e-12),
    };
    let enlargement = (d as f64 / (c * horizon as f64)).sqrt();
    let outer = radius + enlargement;
    let spacing = enlargement / 10.0;
    let half = (outer / spacing).ceil() as i64;
    let side = (2 * half + 1) as f64;
    if side.powi(d as i32) > CONTINUOUS_GRID_CAP {
        return Err(Error::SizeCap {
            what: "continuous-prior grid",
            size: side.powi(d as i32),
            cap: CONTINUOUS_GRID_CAP,
        });
    }
    let mut points = Vec::new();
    let mut idx = vec![-half; d];
    'outer: loop {
        let w: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
        if w.iter().map(|v| v * v).sum::<f64>().sqrt() <= outer {
            points.push(w);
        }
        for k in 0..d {
            idx[k] += 1;
            if idx[k] <= half {
                continue 'outer;
            }
            idx[k] = -half;
        }
        break;
    }
    let info = ContinuousBayesInfo {
        hessian_bound: c,
        enlargement,
        spacing,
        grid_points: points.len(),
    };
    let set = ParamGridSet::new(family.clone(), points)?;
    let mix = BayesMixture::new(Arc::new(set), None)?.with_label("continuous-bayes");
    Ok((mix, info))
}

/// Fixed-design NML: step-`t` prediction is the conditional
/// `Q(y_t = 1 | y^{t-1})` of the normalized maximum-likelihood distribution.
#[derive(Debug, Clone)]
pub struct NmlPredictor {
    table: Arc<GameValueTable>,
    design: Vec<Feature>,
    node: usize,
    step: usize,
    pending: bool,
}

impl NmlPredictor {
    pub fn new(table: Arc<GameValueTable>, design: Vec<Feature>) -> Result<Self> {
        if table.horizon() != design.len() {
            return Err(Error::LengthMismatch {
                what: "game table horizon vs design",
                left: table.horizon(),
                right: design.len(),
            });
        }
        Ok(Self {
            table,
            design,
            node: 0,
            step: 0,
            pending: false,
        })
    }

    /// `Q(y_{t+1} = 1 | prefix)` for a label prefix encoded MSB first.
    pub fn conditional(table: &GameValueTable, depth: usize, node: usize) -> f64 {
        let v = table.value(depth, node);
        if v == f64::NEG_INFINITY {
            return 0.5;
        }
        (table.value(depth + 1, 2 * node + 1) - v).exp().clamp(0.0, 1.0)
    }
}

impl OnlinePredictor for NmlPredictor {
    fn name(&self) -> String {
        "nml".into()
    }

    fn predict(&mut self, x: &Feature) -> Result<ProbValue> {
        if self.pending {
            return Err(Error::Protocol("predict called twice without update"));
        }
        match self.design.get(self.step) {
            Some(d) if d == x => {}
            Some(_) => return Err(Error::FeatureOutsideDomain),
            None => return Err(Error::Protocol("NML horizon exhausted")),
        }
        self.pending = true;
        Ok(ProbValue::saturating(Self::conditional(&self.table, self.step, self.node)))
    }

    fn pending_loss(&self, yhat: ProbValue, y: Label) -> LossValue {
        let v = self.table.value(self.step, self.node);
        if v == f64::NEG_INFINITY {
            return log_loss(yhat, y);
        }
        let child = self.table.value(self.step + 1, 2 * self.node + y.as_u8() as usize);
        LossValue::new((v - child).max(0.0)).unwrap_or_else(|_| log_loss(yhat, y))
    }

    fn update(&mut self, y: Label) -> Result<()> {
        if !self.pending {
            return Err(Error::Protocol("update called before predict"));
        }
        self.pending = false;
        self.node = 2 * self.node + y.as_u8() as usize;
        self.step += 1;
        Ok(())
    }

    fn boxed_clone(&self) -> Box<dyn OnlinePredictor> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{FiniteDomain, FiniteStatic, GlmFamily};

    fn two_experts(a: f64, b: f64) -> Arc<dyn ExpertSet> {
        Arc::new(FiniteStatic::constants(FiniteDomain::indexed(1).unwrap(), &[a, b]).unwrap())
    }

    fn x0() -> Feature {
        Feature::scalar(0.0)
    }

    #[test]
    fn truncation_examples() {
        let p = |v| ProbValue::new(v).unwrap();
        assert_eq!(smooth_truncate(p(0.5), 0.3).get(), 0.5);
        assert!((smooth_truncate(p(0.0), 0.1).get() - 1.0 / 12.0).abs() < 1e-15);
        assert!((smooth_truncate(p(1.0), 0.25).get() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let mut m = BayesMixture::new(two_experts(0.2, 0.8), None).unwrap();
        assert!((m.predict(&x0()).unwrap().get() - 0.5).abs() < 1e-15);
        m.update(Label::One).unwrap();
        assert!((m.predict(&x0()).unwrap().get() - 0.68).abs() < 1e-12);

        let single: Arc<dyn ExpertSet> =
            Arc::new(FiniteStatic::constants(FiniteDomain::indexed(1).unwrap(), &[0.37]).unwrap());
        let mut s = BayesMixture::new(single, None).unwrap();
        for y in [Label::One, Label::Zero, Label::Zero] {
            assert_eq!(s.predict(&x0()).unwrap().get(), 0.37);
            s.update(y).unwrap();
        }
    }

    #[test]
    fn update_examples() {
        let mut m = BayesMixture::new(two_experts(1.0, 0.5), None).unwrap();
        let before = m.log_weights().to_vec();
        m.predict(&x0()).unwrap();
        m.update(Label::Zero).unwrap();
        assert_eq!(m.log_weights()[0], f64::NEG_INFINITY);
        assert!((before[1] - m.log_weights()[1] - 2f64.ln()).abs() < 1e-15);

        let mut t = BayesMixture::new(two_experts(1.0, 0.5), Some(0.1)).unwrap();
        let before = t.log_weights()[0];
        t.predict(&x0()).unwrap();
        t.update(Label::Zero).unwrap();
        assert!((before - t.log_weights()[0] - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn protocol_and_degenerate_posterior() {
        let mut m = BayesMixture::new(two_experts(1.0, 1.0), None).unwrap();
        assert!(matches!(m.update(Label::One), Err(Error::Protocol(_))));
        m.predict(&x0()).unwrap();
        assert!(matches!(m.predict(&x0()), Err(Error::Protocol(_))));
        m.update(Label::Zero).unwrap();
        assert_eq!(m.predict(&x0()), Err(Error::DegeneratePosterior));
    }

    #[test]
    fn weights_equal_recomputed_losses() {
        let values = [0.1, 0.45, 0.9, 1.0];
        let set: Arc<dyn ExpertSet> =
            Arc::new(FiniteStatic::constants(FiniteDomain::indexed(1).unwrap(), &values).unwrap());
        let alpha = 0.05;
        let mut m = BayesMixture::new(set, Some(alpha)).unwrap();
        let ys = [Label::One, Label::Zero, Label::One, Label::One, Label::Zero];
        for &y in &ys {
            m.predict(&x0()).unwrap();
            m.update(y).unwrap();
        }
        for (i, v) in values.iter().enumerate() {
            let g = truncate_raw(*v, alpha);
            let loss: f64 = ys.iter().map(|&y| raw_log_loss(g, y)).sum();
            assert!((m.log_weights()[i] - (-(4f64).ln() - loss)).abs() < 1e-12);
        }
    }

    #[test]
    fn transcript_csv_round_trip() {
        let mut m = ConstantPredictor::new(ProbValue::HALF);
        let xs = vec![Feature::new(vec![0.5, -1.0]).unwrap(); 3];
        let ys = vec![Label::One, Label::Zero, Label::One];
        let tr = run_online(&mut m, &xs, &ys).unwrap();
        assert!((tr.cumulative_loss().get() - 3.0 * 2f64.ln()).abs() < 1e-12);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,y,yhat,step_loss,cum_loss\n1,0.5;-1,1,0.5,"));
        let back = Transcript::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.labels, tr.labels);
        assert_eq!(back.step_losses, tr.step_losses);
    }

    #[test]
    fn continuous_bayes_first_prediction_symmetric() {
        let fam = ExpertFamily::GeneralizedLinear(GlmFamily::logistic(1, 1.0, 0.25).unwrap());
        let xs = vec![Feature::scalar(1.0)];
        let (mut m, info) = continuous_bayes(&fam, 100, HessianSpec::Claimed(0.25), &xs, 1).unwrap();
        assert!(info.grid_points > 10);
        assert!((m.predict(&xs[0]).unwrap().get() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn logistic_hessian_within_quarter_norm_squared() {
        let fam = ExpertFamily::GeneralizedLinear(GlmFamily::logistic(2, 1.0, 1.0).unwrap());
        let xs: Vec<Feature> = (0..20)
            .map(|t| Feature::new(vec![(t as f64).cos() * 1.5, (t as f64).sin() * 1.5]).unwrap())
            .collect();
        let c = empirical_hessian_bound(&fam, 2, 2.0, &xs, 4000, 9).unwrap();
        assert!(c <= 0.25 * 1.5 * 1.5 * 1.001);
        assert!(c > 0.1);
        let err = continuous_bayes(&fam, 100, HessianSpec::Claimed(0.1), &xs, 1).unwrap_err();
        assert!(matches!(err, Error::HessianBound { .. }));
    }
}
