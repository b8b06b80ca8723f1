//! Link functions `f: R -> [0,1]` for generalized linear families.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum LinkMap {
    Logistic,
    /// Piecewise-linear interpolation through `(knots[i], values[i])`,
    /// constant beyond the outermost knots.
    Table { knots: Vec<f64>, values: Vec<f64> },
}

/// A link together with the interval-containment constants `(c1, c2)` used
/// by the block-design lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFunction {
    pub name: String,
    map: LinkMap,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinkFunction {
    /// `(1 + e^{-z})^{-1}` with `c1 = 1/2`, `c2 = 1/5`.
    pub fn logistic() -> Self {
        Self {
            name: "logistic".into(),
            map: LinkMap::Logistic,
            c1: Some(0.5),
            c2: Some(0.2),
        }
    }

    /// User-supplied link given by a table of `(z, f(z))` knots.
    pub fn from_table(
        name: impl Into<String>,
        knots: Vec<f64>,
        values: Vec<f64>,
        c1: Option<f64>,
        c2: Option<f64>,
    ) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidParameter(
                "link table needs at least two knots with one value each".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("link knots must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProbability(*v));
        }
        for c in [c1, c2].into_iter().flatten() {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::InvalidParameter(format!("link constant {c} outside (0,1)")));
            }
        }
        Ok(Self {
            name: name.into(),
            map: LinkMap::Table { knots, values },
            c1,
            c2,
        })
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self.map, LinkMap::Logistic)
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match &self.map {
            LinkMap::Logistic => sigmoid(z),
            LinkMap::Table { knots, values } => {
                let n = knots.len();
                if z <= knots[0] {
                    return values[0];
                }
                if z >= knots[n - 1] {
                    return values[n - 1];
                }
                let i = knots.partition_point(|&k| k <= z) - 1;
                let u = (z - knots[i]) / (knots[i + 1] - knots[i]);
                values[i] + u * (values[i + 1] - values[i])
            }
        }
    }

    /// Exact image `f([a, b])` as `(min, max)`.
    pub fn image(&self, a: f64, b: f64) -> (f64, f64) {
        match &self.map {
            LinkMap::Logistic => (sigmoid(a), sigmoid(b)),
            LinkMap::Table { knots, .. } => {
                let inner = knots.iter().copied().filter(|&k| k > a && k < b);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for z in [a, b].into_iter().chain(inner) {
                    let v = self.apply(z);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    /// Checks `[c1 - c2 d^{-r}, c1 + c2 d^{-r}] ⊂ f([-d^{-r}, d^{-r}])` and
    /// returns the target interval.
    pub fn check_containment(&self, d: usize, r: f64) -> Result<(f64, f64)> {
        let (c1, c2) = match (self.c1, self.c2) {
            (Some(c1), Some(c2)) => (c1, c2),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "link {} has no containment constants",
                    self.name
                )))
            }
        };
        let h = (d as f64).powf(-r);
        let (lo, hi) = (c1 - c2 * h, c1 + c2 * h);
        let (flo, fhi) = self.image(-h, h);
        if flo <= lo && hi <= fhi {
            Ok((lo, hi))
        } else {
            Err(Error::LinkContainment {
                link: self.name.clone(),
                d,
                r,
            })
        }
    }

    /// Whether `f` is nondecreasing on `n` evenly spaced points of `[lo, hi]`.
    pub fn is_monotone_on_grid(&self, lo: f64, hi: f64, n: usize) -> bool {
        let n = n.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        let mut prev = self.apply(lo);
        for i in 1..n {
            let v = self.apply(lo + step * i as f64);
            if v < prev {
                return false;
            }
            prev = v;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_containment_grid() {
        let f = LinkFunction::logistic();
        for d in 2..=64 {
            for r in [0.25, 0.5, 1.0] {
                f.check_containment(d, r).unwrap();
            }
        }
    }

    #[test]
    fn logistic_monotone_and_bounded() {
        let f = LinkFunction::logistic();
        assert!(f.is_monotone_on_grid(-50.0, 50.0, 10_001));
        assert_eq!(f.apply(0.0), 0.5);
        assert!(f.apply(-800.0) >= 0.0 && f.apply(800.0) <= 1.0);
        assert!((f.apply(3f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn table_link_interpolates_and_checks() {
        let f = LinkFunction::from_table(
            "ramp",
            vec![-1.0, 1.0],
            vec![0.0, 1.0],
            Some(0.5),
            Some(0.4),
        )
        .unwrap();
        assert!((f.apply(0.5) - 0.75).abs() < 1e-15);
        assert_eq!(f.apply(7.0), 1.0);
        // image of [-h,h] is [0.5-h/2, 0.5+h/2], which contains c2*h = 0.4h.
        f.check_containment(4, 0.5).unwrap();
        let flat = LinkFunction::from_table(
            "flat",
            vec![-1.0, 1.0],
            vec![0.45, 0.55],
            Some(0.5),
            Some(0.4),
        )
        .unwrap();
        assert!(matches!(
            flat.check_containment(2, 1.0),
            Err(Error::LinkContainment { .. })
        ));
        assert!(LinkFunction::from_table("bad", vec![0.0, 0.0], vec![0.1, 0.2], None, None).is_err());
    }
}
