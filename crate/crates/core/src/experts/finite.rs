//! Finite expert families over finite feature domains.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::{ExpertSet, Feature, SequentialFn};
use crate::error::{Error, Result};

/// Finite feature set with exact lookup.
#[derive(Debug, Clone)]
pub struct FiniteDomain {
    features: Vec<Feature>,
    index: HashMap<Vec<u64>, usize>,
}

impl FiniteDomain {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let first = features.first().ok_or(Error::Empty("finite domain"))?;
        let dim = first.dim();
        let mut index = HashMap::with_capacity(features.len());
        for (i, x) in features.iter().enumerate() {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.dim(),
                });
            }
            if index.insert(x.key(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate domain feature {x}")));
            }
        }
        Ok(Self { features, index })
    }

    /// The scalar features `0, 1, ..., n-1`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| Feature::scalar(i as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &Feature {
        &self.features[i]
    }

    pub fn lookup(&self, x: &Feature) -> Result<usize> {
        self.index.get(&x.key()).copied().ok_or(Error::FeatureOutsideDomain)
    }
}

/// Static experts given by their value tables on a finite domain.
#[derive(Debug, Clone)]
pub struct FiniteStatic {
    domain: FiniteDomain,
    /// `values[i][j]` is expert `i` at domain feature `j`.
    values: Vec<Vec<f64>>,
}

impl FiniteStatic {
    pub fn new(domain: FiniteDomain, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("expert family"));
        }
        for row in &values {
            if row.len() != domain.len() {
                return Err(Error::LengthMismatch {
                    what: "expert row vs domain",
                    left: row.len(),
                    right: domain.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidProbability(*v));
            }
        }
        Ok(Self { domain, values })
    }

    /// Constant experts `h ≡ c` over `domain`.
    pub fn constants(domain: FiniteDomain, levels: &[f64]) -> Result<Self> {
        let n = domain.len();
        Self::new(domain, levels.iter().map(|&c| vec![c; n]).collect())
    }

    /// Every function `domain -> levels`, in lexicographic order with the
    /// first domain point varying slowest.
    pub fn all_functions(domain: FiniteDomain, levels: &[f64]) -> Result<Self> {
        let n = domain.len();
        let k = levels.len();
        let count = (k as f64).powi(n as i32);
        if count > 1e6 {
            return Err(Error::SizeCap {
                what: "all functions on a finite domain",
                size: count,
                cap: 1e6,
            });
        }
        let count = count as usize;
        let mut rows = Vec::with_capacity(count);
        for mut code in 0..count {
            let mut row = vec![0.0; n];
            for j in (0..n).rev() {
                row[j] = levels[code % k];
                code /= k;
            }
            rows.push(row);
        }
        Self::new(domain, rows)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain(&self) -> &FiniteDomain {
        &self.domain
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize, x: &Feature) -> Result<f64> {
        let row = self
            .values
            .get(i)
            .ok_or_else(|| Error::InvalidParameter(format!("expert index {i} out of range")))?;
        Ok(row[self.domain.lookup(x)?])
    }

    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

impl ExpertSet for FiniteStatic {
    fn len(&self) -> usize {
        self.values.len()
    }

    fn predict_all(&self, prefix: &[Feature], out: &mut [f64]) -> Result<()> {
        let j = self.domain.lookup(prefix.last().ok_or(Error::Empty("feature prefix"))?)?;
        for (o, row) in out.iter_mut().zip(&self.values) {
            *o = row[j];
        }
        Ok(())
    }
}

#[derive(Clone)]
enum SequentialKind {
    Functions(Vec<SequentialFn>),
    /// Values along a fixed design: `rows[i][t]` is expert `i` at step `t+1`.
    Design {
        design: Vec<Feature>,
        rows: Vec<Vec<f64>>,
    },
}

/// Finite family of sequential experts.
#[derive(Clone)]
pub struct FiniteSequential {
    kind: SequentialKind,
}

impl FiniteSequential {
    pub fn from_functions(members: Vec<SequentialFn>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("expert family"));
        }
        Ok(Self {
            kind: SequentialKind::Functions(members),
        })
    }

    /// Wraps plain closures.
    pub fn from_closures<F>(members: Vec<F>) -> Result<Self>
    where
        F: Fn(&[Feature]) -> f64 + Send + Sync + 'static,
    {
        Self::from_functions(
            members
                .into_iter()
                .map(|f| Arc::new(f) as SequentialFn)
                .collect(),
        )
    }

    /// Experts defined only along `design`; evaluation on a prefix whose last
    /// feature departs from the design is rejected.
    pub fn from_design(design: Vec<Feature>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("expert family"));
        }
        for row in &rows {
            if row.len() != design.len() {
                return Err(Error::LengthMismatch {
                    what: "expert row vs design",
                    left: row.len(),
                    right: design.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidProbability(*v));
            }
        }
        Ok(Self {
            kind: SequentialKind::Design { design, rows },
        })
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            SequentialKind::Functions(f) => f.len(),
            SequentialKind::Design { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Design and rows for design-backed families.
    pub fn design(&self) -> Option<(&[Feature], &[Vec<f64>])> {
        match &self.kind {
            SequentialKind::Design { design, rows } => Some((design, rows)),
            SequentialKind::Functions(_) => None,
        }
    }

    pub fn value(&self, i: usize, prefix: &[Feature]) -> Result<f64> {
        if i >= self.len() {
            return Err(Error::InvalidParameter(format!("expert index {i} out of range")));
        }
        let last = prefix.last().ok_or(Error::Empty("feature prefix"))?;
        match &self.kind {
            SequentialKind::Functions(f) => Ok(f[i](prefix).clamp(0.0, 1.0)),
            SequentialKind::Design { design, rows } => {
                let t = prefix.len() - 1;
                match design.get(t) {
                    Some(x) if x == last => Ok(rows[i][t]),
                    _ => Err(Error::FeatureOutsideDomain),
                }
            }
        }
    }
}

impl fmt::Debug for FiniteSequential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            SequentialKind::Functions(_) => "functions",
            SequentialKind::Design { .. } => "design",
        };
        f.debug_struct("FiniteSequential")
            .field("kind", &kind)
            .field("len", &self.len())
            .finish()
    }
}

impl ExpertSet for FiniteSequential {
    fn len(&self) -> usize {
        FiniteSequential::len(self)
    }

    fn predict_all(&self, prefix: &[Feature], out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.value(i, prefix)?;
        }
        Ok(())
    }
}
