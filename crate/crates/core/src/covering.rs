//! Global sequential covers, shattering numbers and the M-SOA construction.
//!
//! Subfamilies of a finite family are bit masks over member indices, so
//! shattering recursions memoize on `u128` keys and families are limited to
//! 128 members.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::experts::{
    lp_norm, ExpertFamily, ExpertSet, FamilyTable, Feature, FiniteDomain, FiniteStatic, ParamGridSet,
};
use crate::loss::ln_binomial_row;

/// Default cap on the number of cover members.
pub const DEFAULT_COVER_CAP: f64 = 1e7;
const TOL: f64 = 1e-12;

/// `ceil(x)` that ignores floating-point noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9).ceil()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverProvenance {
    /// Lattice of parameters of a Lipschitz family.
    Grid,
    /// Pointwise rounding of a finite static family to a value grid.
    Rounding,
    /// Modified M-SOA runs over a discretized finite family.
    Msoa,
}

#[derive(Debug, Clone)]
enum CoverMembers {
    Params(ParamGridSet),
    Table(FiniteStatic),
    Msoa(Arc<MsoaCover>),
}

/// Finite set of sequential functions with a declared scale.
#[derive(Debug, Clone)]
pub struct CoverSet {
    pub scale: f64,
    pub provenance: CoverProvenance,
    members: CoverMembers,
}

impl CoverSet {
    pub fn len(&self) -> usize {
        match &self.members {
            CoverMembers::Params(p) => p.len(),
            CoverMembers::Table(t) => t.len(),
            CoverMembers::Msoa(m) => m.members.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter points of a grid cover.
    pub fn grid_points(&self) -> Option<&[Vec<f64>]> {
        match &self.members {
            CoverMembers::Params(p) => Some(p.points()),
            _ => None,
        }
    }

    /// Static members in tabular form, or the members' values along `design`
    /// for sequential covers.
    pub fn to_table(&self, design: &[Feature]) -> Result<FamilyTable> {
        match &self.members {
            CoverMembers::Table(t) => Ok(FamilyTable::from_static(t)),
            _ => {
                let mut rows = vec![vec![0.0; design.len()]; self.len()];
                let mut buf = vec![0.0; self.len()];
                for t in 0..design.len() {
                    self.predict_all(&design[..=t], &mut buf)?;
                    for (row, v) in rows.iter_mut().zip(&buf) {
                        row[t] = *v;
                    }
                }
                Ok(FamilyTable {
                    mode: crate::experts::TableMode::Design,
                    features: design.to_vec(),
                    rows,
                })
            }
        }
    }
}

impl ExpertSet for CoverSet {
    fn len(&self) -> usize {
        CoverSet::len(self)
    }

    fn predict_all(&self, prefix: &[Feature], out: &mut [f64]) -> Result<()> {
        match &self.members {
            CoverMembers::Params(p) => p.predict_all(prefix, out),
            CoverMembers::Table(t) => t.predict_all(prefix, out),
            CoverMembers::Msoa(m) => m.predict_all(prefix, out),
        }
    }
}

fn param_ball_and_lipschitz(family: &ExpertFamily) -> Result<(crate::experts::ParamBall, f64)> {
    match family {
        ExpertFamily::LipschitzParametric(f) => Ok((f.ball, f.lipschitz)),
        ExpertFamily::GeneralizedLinear(f) => Ok((f.ball, f.lipschitz)),
        ExpertFamily::HardLipschitz(f) => Ok((f.ball(), f.lipschitz)),
        _ => Err(Error::InvalidParameter(format!(
            "grid cover needs a Lipschitz parametric family, got {}",
            family.kind_name()
        ))),
    }
}

/// `(2RL/alpha + 1)^d`.
pub fn grid_cover_size_bound(d: usize, radius: f64, lipschitz: f64, alpha: f64) -> f64 {
    (2.0 * radius * lipschitz / alpha + 1.0).powi(d as i32)
}

/// Lattice cover of the parameter ball at radius `alpha/L` in the ball's norm.
///
/// The lattice has `l_inf` spacing `2 eps / d^{1/s}` with `eps = alpha/L`, so
/// every point of the ball lies within `eps` of a lattice point; points
/// outside `B_s(R + eps)` are dropped. Both the origin-centred and the
/// half-shifted lattice are tried and the smaller kept.
pub fn grid_cover(family: &ExpertFamily, alpha: f64, cap: f64) -> Result<CoverSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
    }
    let (ball, lipschitz) = param_ball_and_lipschitz(family)?;
    let d = ball.dim;
    let s = ball.norm_order;
    let eps = alpha / lipschitz;
    let bound = grid_cover_size_bound(d, ball.radius, lipschitz, alpha);

    let points = if ball.radius <= eps {
        vec![vec![0.0; d]]
    } else {
        let root = if s.is_infinite() { 1.0 } else { (d as f64).powf(1.0 / s) };
        let h = 2.0 * eps / root;
        let outer = ball.radius + eps;
        let mut best: Option<Vec<Vec<f64>>> = None;
        for offset in [0.0, 0.5] {
            let lo = ((-outer) / h - offset).floor() as i64;
            let hi = (outer / h - offset).ceil() as i64;
            let side = (hi - lo + 1) as f64;
            if side.powi(d as i32) > cap.max(bound) * 4.0 + 1e3 {
                return Err(Error::SizeCap {
                    what: "grid cover lattice",
                    size: side.powi(d as i32),
                    cap,
                });
            }
            let mut pts = Vec::new();
            let mut idx = vec![lo; d];
            'outer: loop {
                let w: Vec<f64> = idx.iter().map(|&i| (i as f64 + offset) * h).collect();
                if lp_norm(&w, s) <= outer + TOL {
                    pts.push(w);
                }
                for k in 0..d {
                    idx[k] += 1;
                    if idx[k] <= hi {
                        continue 'outer;
                    }
                    idx[k] = lo;
                }
                break;
            }
            if best.as_ref().map_or(true, |b| pts.len() < b.len()) {
                best = Some(pts);
            }
        }
        best.unwrap_or_default()
    };
    if points.len() as f64 > cap {
        return Err(Error::SizeCap {
            what: "grid cover members",
            size: points.len() as f64,
            cap,
        });
    }
    if points.len() as f64 > bound {
        return Err(Error::Inconsistent(format!(
            "lattice cover has {} members, above (2RL/alpha+1)^d = {bound}",
            points.len()
        )));
    }
    Ok(CoverSet {
        scale: alpha,
        provenance: CoverProvenance::Grid,
        members: CoverMembers::Params(ParamGridSet::new(family.clone(), points)?),
    })
}

/// Global `alpha`-cover of a finite static family obtained by rounding each
/// value to the nearest multiple of `2 alpha` (clamped to `[0,1]`) and
/// removing duplicate members.
pub fn rounding_cover(family: &FiniteStatic, alpha: f64) -> Result<CoverSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
    }
    let step = 2.0 * alpha;
    let mut seen = HashMap::new();
    let mut rows = Vec::new();
    for row in family.rows() {
        let r: Vec<f64> = row
            .iter()
            .map(|&v| ((v / step).round() * step).clamp(0.0, 1.0))
            .collect();
        let key: Vec<u64> = r.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key, ()).is_none() {
            rows.push(r);
        }
    }
    Ok(CoverSet {
        scale: alpha,
        provenance: CoverProvenance::Rounding,
        members: CoverMembers::Table(FiniteStatic::new(family.domain().clone(), rows)?),
    })
}

/// Finite family with values snapped to the levels `z_k = (2k-1) alpha`,
/// `k = 1..K`. Level indices are 1-based.
#[derive(Debug, Clone)]
pub struct DiscretizedFamily {
    pub alpha: f64,
    pub levels: Vec<f64>,
    domain: FiniteDomain,
    /// `table[i][j]`: level index of member `i` at domain point `j`.
    table: Vec<Vec<usize>>,
}

impl DiscretizedFamily {
    /// `K = ceil(1/(2 alpha))`; the last level may exceed one.
    pub fn level_count(alpha: f64) -> usize {
        ceil_tol(1.0 / (2.0 * alpha)).max(1.0) as usize
    }

    pub fn new(alpha: f64, domain: FiniteDomain, table: Vec<Vec<usize>>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
        }
        let k = Self::level_count(alpha);
        for row in &table {
            if row.len() != domain.len() {
                return Err(Error::LengthMismatch {
                    what: "level row vs domain",
                    left: row.len(),
                    right: domain.len(),
                });
            }
            if row.iter().any(|&l| l == 0 || l > k) {
                return Err(Error::InvalidParameter(format!("level index outside 1..={k}")));
            }
        }
        let levels = (1..=k).map(|i| (2 * i - 1) as f64 * alpha).collect();
        Ok(Self {
            alpha,
            levels,
            domain,
            table,
        })
    }

    /// Every map `domain -> [K]`.
    pub fn all_functions(alpha: f64, domain: FiniteDomain) -> Result<Self> {
        let k = Self::level_count(alpha);
        let n = domain.len();
        let count = (k as f64).powi(n as i32);
        if count > 128.0 {
            return Err(Error::SizeCap {
                what: "discretized family members",
                size: count,
                cap: 128.0,
            });
        }
        let table = (0..count as usize)
            .map(|mut code| {
                let mut row = vec![0; n];
                for j in (0..n).rev() {
                    row[j] = code % k + 1;
                    code /= k;
                }
                row
            })
            .collect();
        Self::new(alpha, domain, table)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn domain(&self) -> &FiniteDomain {
        &self.domain
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn level_value(&self, k: usize) -> f64 {
        self.levels[k - 1]
    }

    /// Nearest level index of `v`, ties toward the lower index.
    pub fn nearest_level(&self, v: f64) -> usize {
        let mut best = (1, f64::INFINITY);
        for (i, z) in self.levels.iter().enumerate() {
            let d = (z - v).abs();
            if d < best.1 - TOL {
                best = (i + 1, d);
            }
        }
        best.0
    }

    fn full_mask(&self) -> u128 {
        full_mask(self.len())
    }
}

fn full_mask(n: usize) -> u128 {
    if n == 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

/// Snaps every member of `family` to its nearest level at scale `alpha`.
pub fn discretize(family: &FiniteStatic, alpha: f64) -> Result<DiscretizedFamily> {
    let probe = DiscretizedFamily::new(alpha, family.domain().clone(), Vec::new())?;
    let table = family
        .rows()
        .iter()
        .map(|row| row.iter().map(|&v| probe.nearest_level(v)).collect())
        .collect();
    DiscretizedFamily::new(alpha, family.domain().clone(), table)
}

/// Shattering number with a flag telling whether the depth cap was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShatterCount {
    pub value: i32,
    /// The true number is at least `value`.
    pub capped: bool,
}

/// Feature-labelled binary tree with witnesses, as a map from root paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ShatterTree {
    pub depth: usize,
    /// Path (bits from the root) to the domain index labelling that node.
    pub features: HashMap<Vec<bool>, usize>,
    /// Path to the witness: a real level, or a level index for discretized families.
    pub witnesses: HashMap<Vec<bool>, f64>,
}

/// Memoized shattering recursion over precomputed two-sided splits.
struct ShatterEngine {
    /// Per domain point: `(feature index, witness, low mask, high mask)`.
    splits: Vec<(usize, f64, u128, u128)>,
    cap: i32,
    memo: HashMap<u128, i32>,
}

impl ShatterEngine {
    fn from_real(values: &[Vec<f64>], domain_len: usize, alpha: f64, cap: i32) -> Result<Self> {
        if values.len() > 128 {
            return Err(Error::SizeCap {
                what: "family size for shattering",
                size: values.len() as f64,
                cap: 128.0,
            });
        }
        let mut splits = Vec::new();
        for j in 0..domain_len {
            let mut vals: Vec<f64> = values.iter().map(|r| r[j]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let mut seen = HashMap::new();
            for a in 0..vals.len() {
                for b in a + 1..vals.len() {
                    if vals[b] - vals[a] < 2.0 * alpha - TOL {
                        continue;
                    }
                    let s = (vals[a] + vals[b]) / 2.0;
                    let mut lo = 0u128;
                    let mut hi = 0u128;
                    for (i, r) in values.iter().enumerate() {
                        if r[j] <= s - alpha + TOL {
                            lo |= 1 << i;
                        } else if r[j] >= s + alpha - TOL {
                            hi |= 1 << i;
                        }
                    }
                    if seen.insert((lo, hi), ()).is_none() {
                        splits.push((j, s, lo, hi));
                    }
                }
            }
        }
        Ok(Self {
            splits,
            cap,
            memo: HashMap::new(),
        })
    }

    fn from_levels(fam: &DiscretizedFamily, cap: i32) -> Result<Self> {
        if fam.len() > 128 {
            return Err(Error::SizeCap {
                what: "family size for shattering",
                size: fam.len() as f64,
                cap: 128.0,
            });
        }
        let mut splits = Vec::new();
        for j in 0..fam.domain.len() {
            for s in 1..=fam.k() {
                let mut lo = 0u128;
                let mut hi = 0u128;
                for (i, row) in fam.table.iter().enumerate() {
                    if row[j] + 1 <= s {
                        lo |= 1 << i;
                    } else if row[j] >= s + 1 {
                        hi |= 1 << i;
                    }
                }
                if lo != 0 && hi != 0 {
                    splits.push((j, s as f64, lo, hi));
                }
            }
        }
        Ok(Self {
            splits,
            cap,
            memo: HashMap::new(),
        })
    }

    /// `min(FAT(S), cap)` with `FAT(empty) = -1`.
    fn fat(&mut self, set: u128) -> i32 {
        if set == 0 {
            return -1;
        }
        if let Some(&v) = self.memo.get(&set) {
            return v;
        }
        let mut best = 0;
        for i in 0..self.splits.len() {
            if best >= self.cap {
                break;
            }
            let (_, _, lo, hi) = self.splits[i];
            let (a, b) = (set & lo, set & hi);
            if a == 0 || b == 0 {
                continue;
            }
            let va = self.fat(a);
            if 1 + va <= best {
                continue;
            }
            let vb = self.fat(b);
            best = best.max(1 + va.min(vb));
        }
        let best = best.min(self.cap);
        self.memo.insert(set, best);
        best
    }

    fn count(&mut self, set: u128) -> ShatterCount {
        let value = self.fat(set);
        ShatterCount {
            value,
            capped: value >= self.cap,
        }
    }

    fn tree(&mut self, set: u128, depth: usize) -> ShatterTree {
        let mut tree = ShatterTree {
            depth,
            features: HashMap::new(),
            witnesses: HashMap::new(),
        };
        self.grow(set, depth, Vec::new(), &mut tree);
        tree
    }

    fn grow(&mut self, set: u128, depth: usize, path: Vec<bool>, tree: &mut ShatterTree) {
        if depth == 0 {
            return;
        }
        for i in 0..self.splits.len() {
            let (j, s, lo, hi) = self.splits[i];
            let (a, b) = (set & lo, set & hi);
            if a == 0 || b == 0 {
                continue;
            }
            if 1 + self.fat(a).min(self.fat(b)) >= depth as i32 {
                tree.features.insert(path.clone(), j);
                tree.witnesses.insert(path.clone(), s);
                let mut p0 = path.clone();
                p0.push(false);
                self.grow(a, depth - 1, p0, tree);
                let mut p1 = path;
                p1.push(true);
                self.grow(b, depth - 1, p1, tree);
                return;
            }
        }
    }
}

fn cap_i32(depth_cap: usize) -> i32 {
    depth_cap.min(i32::MAX as usize) as i32
}

/// Sequential `alpha`-fat-shattering number of a finite static family over
/// its domain, with `-1` for the empty family.
pub fn fat_shattering_number(family: &FiniteStatic, alpha: f64, depth_cap: usize) -> Result<ShatterCount> {
    let mut e = ShatterEngine::from_real(family.rows(), family.domain().len(), alpha, cap_i32(depth_cap))?;
    Ok(e.count(full_mask(family.len())))
}

/// Shattering number of the members selected by `mask` (possibly empty).
pub fn fat_shattering_number_of(
    family: &FiniteStatic,
    mask: u128,
    alpha: f64,
    depth_cap: usize,
) -> Result<ShatterCount> {
    let mut e = ShatterEngine::from_real(family.rows(), family.domain().len(), alpha, cap_i32(depth_cap))?;
    Ok(e.count(mask & full_mask(family.len())))
}

/// A witness tree of depth `fat_shattering_number` for `family`.
pub fn fat_shattering_tree(family: &FiniteStatic, alpha: f64, depth_cap: usize) -> Result<ShatterTree> {
    let mut e = ShatterEngine::from_real(family.rows(), family.domain().len(), alpha, cap_i32(depth_cap))?;
    let full = full_mask(family.len());
    let d = e.fat(full).max(0) as usize;
    Ok(e.tree(full, d))
}

/// Checks that every root-to-leaf path of `tree` is realized by some member
/// with margin `alpha` around the witnesses.
pub fn verify_shatter_tree(family: &FiniteStatic, tree: &ShatterTree, alpha: f64) -> bool {
    (0..1u64 << tree.depth).all(|bits| {
        let path: Vec<bool> = (0..tree.depth).map(|i| (bits >> (tree.depth - 1 - i)) & 1 == 1).collect();
        family.rows().iter().any(|row| {
            (0..tree.depth).all(|i| {
                let node = &path[..i];
                let (Some(&j), Some(&s)) = (tree.features.get(node), tree.witnesses.get(node)) else {
                    return false;
                };
                if path[i] {
                    row[j] >= s + alpha - TOL
                } else {
                    row[j] <= s - alpha + TOL
                }
            })
        })
    })
}

/// Discretized 1-shattering number.
pub fn fat1_number(family: &DiscretizedFamily, depth_cap: usize) -> Result<ShatterCount> {
    let mut e = ShatterEngine::from_levels(family, cap_i32(depth_cap))?;
    Ok(e.count(family.full_mask()))
}

/// Result of one M-SOA run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsoaRun {
    /// Level predictions in `1..=K`.
    pub predictions: Vec<usize>,
    pub errors: usize,
}

/// M-SOA state over a discretized family: running subfamily and a shared
/// shattering memo.
struct Msoa<'a> {
    fam: &'a DiscretizedFamily,
    engine: ShatterEngine,
}

impl<'a> Msoa<'a> {
    fn new(fam: &'a DiscretizedFamily) -> Result<Self> {
        Ok(Self {
            fam,
            engine: ShatterEngine::from_levels(fam, i32::MAX)?,
        })
    }

    fn consistent(&self, set: u128, j: usize, k: usize) -> u128 {
        let mut out = 0u128;
        for (i, row) in self.fam.table.iter().enumerate() {
            if set >> i & 1 == 1 && row[j] == k {
                out |= 1 << i;
            }
        }
        out
    }

    /// `argmax_k FAT_1(H*_{(x,k)})`, lowest `k` on ties.
    fn predict(&mut self, set: u128, j: usize) -> usize {
        let mut best = (1, i32::MIN);
        for k in 1..=self.fam.k() {
            let v = self.engine.fat(self.consistent(set, j, k));
            if v > best.1 {
                best = (k, v);
            }
        }
        best.0
    }
}

/// Runs M-SOA on `(xs, ys)`; `ys` are level indices.
pub fn msoa_run(family: &DiscretizedFamily, xs: &[Feature], ys: &[usize]) -> Result<MsoaRun> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            what: "features vs levels",
            left: xs.len(),
            right: ys.len(),
        });
    }
    let idx: Vec<usize> = xs.iter().map(|x| family.domain.lookup(x)).collect::<Result<_>>()?;
    let realizable = family
        .table
        .iter()
        .any(|row| idx.iter().zip(ys).all(|(&j, &y)| row[j] == y));
    let mut m = Msoa::new(family)?;
    let mut set = family.full_mask();
    let mut predictions = Vec::with_capacity(xs.len());
    let mut errors = 0;
    for (&j, &y) in idx.iter().zip(ys) {
        let p = m.predict(set, j);
        predictions.push(p);
        if p.abs_diff(y) >= 2 {
            errors += 1;
            set = m.consistent(set, j, y);
            if set == 0 && realizable {
                return Err(Error::Inconsistent(
                    "M-SOA running family emptied on a realizable sequence".into(),
                ));
            }
        }
    }
    Ok(MsoaRun { predictions, errors })
}

/// Cover built from modified M-SOA runs. Member `(I, k)` updates the running
/// subfamily to `H*_{(x_t, k_t)}` at the steps `t in I` and outputs `z_{k_t}`
/// there; elsewhere it outputs `z` of the M-SOA prediction.
pub struct MsoaCover {
    fam: DiscretizedFamily,
    /// Per member: sorted `(step, level)` pairs, steps 0-based.
    members: Vec<Vec<(usize, usize)>>,
    state: Mutex<MsoaCache>,
}

struct MsoaCache {
    engine: ShatterEngine,
    /// Prefix (as domain indices) to the running subfamily of every member
    /// after processing that prefix.
    sets: HashMap<Vec<usize>, Arc<Vec<u128>>>,
}

impl std::fmt::Debug for MsoaCover {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MsoaCover")
            .field("members", &self.members.len())
            .field("levels", &self.fam.k())
            .finish()
    }
}

impl MsoaCover {
    fn step(engine: &mut ShatterEngine, fam: &DiscretizedFamily, set: u128, j: usize, forced: Option<usize>) -> (usize, u128) {
        let consistent = |k: usize| {
            let mut out = 0u128;
            for (i, row) in fam.table.iter().enumerate() {
                if set >> i & 1 == 1 && row[j] == k {
                    out |= 1 << i;
                }
            }
            out
        };
        match forced {
            Some(k) => (k, consistent(k)),
            None => {
                let mut best = (1, i32::MIN);
                for k in 1..=fam.k() {
                    let v = engine.fat(consistent(k));
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                (best.0, set)
            }
        }
    }

    fn sets_after(&self, cache: &mut MsoaCache, idx: &[usize]) -> Arc<Vec<u128>> {
        if let Some(s) = cache.sets.get(idx) {
            return s.clone();
        }
        let prev = if idx.is_empty() {
            Arc::new(vec![self.fam.full_mask(); self.members.len()])
        } else {
            self.sets_after(cache, &idx[..idx.len() - 1])
        };
        let next = if idx.is_empty() {
            prev
        } else {
            let t = idx.len() - 1;
            let j = idx[t];
            let v: Vec<u128> = self
                .members
                .iter()
                .zip(prev.iter())
                .map(|(m, &set)| {
                    let forced = m.iter().find(|(s, _)| *s == t).map(|&(_, k)| k);
                    Self::step(&mut cache.engine, &self.fam, set, j, forced).1
                })
                .collect();
            Arc::new(v)
        };
        cache.sets.insert(idx.to_vec(), next.clone());
        next
    }

    fn predict_all(&self, prefix: &[Feature], out: &mut [f64]) -> Result<()> {
        if prefix.is_empty() {
            return Err(Error::Empty("feature prefix"));
        }
        let idx: Vec<usize> = prefix.iter().map(|x| self.fam.domain.lookup(x)).collect::<Result<_>>()?;
        let mut cache = self.state.lock().map_err(|_| Error::Inconsistent("cover cache poisoned".into()))?;
        let t = idx.len() - 1;
        let sets = self.sets_after(&mut cache, &idx[..t]);
        for ((o, m), &set) in out.iter_mut().zip(&self.members).zip(sets.iter()) {
            let forced = m.iter().find(|(s, _)| *s == t).map(|&(_, k)| k);
            let (k, _) = Self::step(&mut cache.engine, &self.fam, set, idx[t], forced);
            *o = self.fam.level_value(k).clamp(0.0, 1.0);
        }
        Ok(())
    }
}

/// `sum_{t=0}^{dfat} C(T,t) ceil(3/(2 alpha))^t`.
pub fn cover_size_bound(t: usize, alpha: f64, dfat: usize) -> f64 {
    ln_cover_size_bound(t, alpha, dfat).exp()
}

/// Natural log of [`cover_size_bound`].
pub fn ln_cover_size_bound(t: usize, alpha: f64, dfat: usize) -> f64 {
    let k = ceil_tol(3.0 / (2.0 * alpha)).max(1.0);
    let row = ln_binomial_row(t);
    let terms: Vec<f64> = (0..=dfat.min(t)).map(|i| row[i] + i as f64 * k.ln()).collect();
    crate::loss::lse(terms.iter().copied())
}

/// `sum_{t=0}^{d} C(T,t) K^t` for the M-SOA enumeration.
fn msoa_member_count(t: usize, k: usize, d: usize) -> f64 {
    let row = ln_binomial_row(t);
    let terms: Vec<f64> = (0..=d.min(t)).map(|i| row[i] + i as f64 * (k as f64).ln()).collect();
    crate::loss::lse(terms.iter().copied()).exp()
}

/// Global `3 alpha`-cover of a finite static family at horizon `T` from all
/// `(I, {k_t})` runs with `|I| <= FAT_1` of the family discretized at `alpha`.
pub fn msoa_cover(family: &FiniteStatic, alpha: f64, horizon: usize, cap: f64) -> Result<CoverSet> {
    let fam = discretize(family, alpha)?;
    msoa_cover_discretized(fam, horizon, cap)
}

pub fn msoa_cover_discretized(fam: DiscretizedFamily, horizon: usize, cap: f64) -> Result<CoverSet> {
    let d = fat1_number(&fam, usize::MAX)?.value.max(0) as usize;
    let k = fam.k();
    let size = msoa_member_count(horizon, k, d);
    if size > cap {
        return Err(Error::SizeCap {
            what: "M-SOA cover members",
            size,
            cap,
        });
    }
    let mut members = Vec::with_capacity(size.round() as usize);
    for steps in 0..=d.min(horizon) {
        let mut subset: Vec<usize> = (0..steps).collect();
        loop {
            let combos = k.pow(steps as u32);
            for mut code in 0..combos {
                let mut m = Vec::with_capacity(steps);
                for &s in &subset {
                    m.push((s, code % k + 1));
                    code /= k;
                }
                members.push(m);
            }
            // next subset in lexicographic order
            let mut i = steps;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if subset[i] < horizon - steps + i {
                    subset[i] += 1;
                    for j in i + 1..steps {
                        subset[j] = subset[j - 1] + 1;
                    }
                    i = usize::MAX;
                    break;
                }
            }
            if i != usize::MAX {
                break;
            }
        }
    }
    let scale = 3.0 * fam.alpha;
    let engine = ShatterEngine::from_levels(&fam, i32::MAX)?;
    Ok(CoverSet {
        scale,
        provenance: CoverProvenance::Msoa,
        members: CoverMembers::Msoa(Arc::new(MsoaCover {
            fam,
            members,
            state: Mutex::new(MsoaCache {
                engine,
                sets: HashMap::new(),
            }),
        })),
    })
}

/// Worst case over members `h` and the given sequences of
/// `min_g max_t |h(x_t) - g(x^t)|`.
pub fn cover_deviation(cover: &CoverSet, family: &FiniteStatic, sequences: &[Vec<Feature>]) -> Result<f64> {
    let n = cover.len();
    let mut worst = 0.0f64;
    let mut buf = vec![0.0; n];
    for xs in sequences {
        let mut dev = vec![vec![0.0f64; n]; family.len()];
        for t in 0..xs.len() {
            cover.predict_all(&xs[..=t], &mut buf)?;
            let j = family.domain().lookup(&xs[t])?;
            for (i, row) in dev.iter_mut().enumerate() {
                let v = family.value_at(i, j);
                for (g, d) in row.iter_mut().enumerate() {
                    *d = d.max((v - buf[g]).abs());
                }
            }
        }
        for row in dev {
            let best = row.into_iter().fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

/// Every sequence in `domain^T`.
pub fn all_sequences(domain: &FiniteDomain, horizon: usize) -> Vec<Vec<Feature>> {
    let n = domain.len();
    let count = n.pow(horizon as u32);
    (0..count)
        .map(|mut code| {
            let mut xs = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                xs.push(domain.feature(code % n).clone());
                code /= n;
            }
            xs
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{GlmFamily, LipschitzFamily};
    use proptest::prelude::*;

    fn dom(n: usize) -> FiniteDomain {
        FiniteDomain::indexed(n).unwrap()
    }

    #[test]
    fn fat_examples() {
        let ends = FiniteStatic::constants(dom(3), &[0.0, 1.0]).unwrap();
        assert_eq!(fat_shattering_number(&ends, 0.4, 10).unwrap().value, 1);
        let single = FiniteStatic::constants(dom(2), &[0.3]).unwrap();
        assert_eq!(fat_shattering_number(&single, 0.1, 10).unwrap().value, 0);
        assert_eq!(fat_shattering_number_of(&ends, 0, 0.4, 10).unwrap().value, -1);
    }

    #[test]
    fn fat1_examples() {
        let alpha = 1.0 / 6.0;
        assert_eq!(DiscretizedFamily::level_count(alpha), 3);
        let consts = DiscretizedFamily::new(alpha, dom(1), vec![vec![1], vec![2], vec![3]]).unwrap();
        assert_eq!(fat1_number(&consts, 10).unwrap().value, 1);
        let all = DiscretizedFamily::all_functions(alpha, dom(2)).unwrap();
        assert_eq!(all.len(), 9);
        assert_eq!(fat1_number(&all, 10).unwrap().value, 2);
        let capped = fat1_number(&all, 1).unwrap();
        assert_eq!(capped, ShatterCount { value: 1, capped: true });
        let empty = DiscretizedFamily::new(alpha, dom(1), vec![]).unwrap();
        assert_eq!(fat1_number(&empty, 10).unwrap().value, -1);
    }

    #[test]
    fn discretize_examples() {
        let f = FiniteStatic::new(dom(3), vec![vec![0.4, 0.75, 0.5]]).unwrap();
        let d = discretize(&f, 0.25).unwrap();
        assert_eq!(d.levels, vec![0.25, 0.75]);
        assert_eq!(d.table()[0], vec![1, 2, 1]);
    }

    #[test]
    fn msoa_examples() {
        let alpha = 1.0 / 6.0;
        let single = DiscretizedFamily::new(alpha, dom(2), vec![vec![2, 3]]).unwrap();
        let xs = vec![Feature::scalar(0.0), Feature::scalar(1.0), Feature::scalar(0.0)];
        assert_eq!(msoa_run(&single, &xs, &[2, 3, 2]).unwrap().errors, 0);

        let consts = DiscretizedFamily::new(alpha, dom(1), vec![vec![1], vec![2], vec![3]]).unwrap();
        let x1 = vec![Feature::scalar(0.0); 4];
        for k in 1..=3 {
            assert!(msoa_run(&consts, &x1, &[k; 4]).unwrap().errors <= 1);
        }
        let wild = msoa_run(&consts, &x1, &[1, 3, 1, 3]).unwrap();
        assert_eq!(wild.predictions.len(), 4);
    }

    #[test]
    fn msoa_cover_examples() {
        let single = FiniteStatic::constants(dom(2), &[0.5]).unwrap();
        assert_eq!(msoa_cover(&single, 0.25, 4, 1e6).unwrap().len(), 1);

        let alpha = 1.0 / 6.0;
        let consts = FiniteStatic::constants(dom(1), &[1.0 / 6.0, 0.5, 5.0 / 6.0]).unwrap();
        let cover = msoa_cover(&consts, alpha, 3, 1e6).unwrap();
        assert!(cover.len() <= 10);
        let seqs = all_sequences(consts.domain(), 3);
        assert!(cover_deviation(&cover, &consts, &seqs).unwrap() <= 3.0 * alpha + 1e-12);
        assert!(cover.len() as f64 <= ceil_tol(3.0 * 3.0 / (2.0 * 3.0 * alpha)).powi(2));
    }

    #[test]
    fn cover_size_bound_examples() {
        assert_eq!(cover_size_bound(10, 0.3, 0), 1.0);
        assert!((cover_size_bound(3, 0.75, 1) - 7.0).abs() < 1e-9);
        for t in 1..30 {
            for d in 0..4 {
                let a = 0.2;
                assert!(cover_size_bound(t, a, d) <= ceil_tol(3.0 * t as f64 / (2.0 * a)).powi(d as i32 + 1) + 1e-9);
            }
        }
    }

    #[test]
    fn grid_cover_examples() {
        let fam = ExpertFamily::GeneralizedLinear(GlmFamily::logistic(1, 1.0, 1.0).unwrap());
        let cover = grid_cover(&fam, 0.5, 1e7).unwrap();
        assert!(cover.len() <= 5);
        let wide = grid_cover(&fam, 0.99, 1e7).unwrap();
        assert!(wide.len() <= 3);
        let tiny = ExpertFamily::LipschitzParametric(LipschitzFamily::new(
            "tiny",
            crate::experts::ParamBall::l2(2, 0.1).unwrap(),
            1.0,
            Arc::new(|w: &[f64], _x: &Feature| 0.5 + w[0]),
        ));
        assert_eq!(grid_cover(&tiny, 0.5, 1e7).unwrap().len(), 1);
        assert!(matches!(grid_cover(&fam, 1e-4, 100.0), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn fat_tree_certificate_verifies() {
        let fam = FiniteStatic::all_functions(dom(2), &[0.0, 0.5, 1.0]).unwrap();
        let tree = fat_shattering_tree(&fam, 0.2, 10).unwrap();
        assert_eq!(tree.depth as i32, fat_shattering_number(&fam, 0.2, 10).unwrap().value);
        assert!(verify_shatter_tree(&fam, &tree, 0.2));
    }

    proptest! {
        #[test]
        fn grid_cover_covers_parameters(
            d in 1usize..3,
            alpha in 0.05f64..0.9,
            w in proptest::collection::vec(-1.0f64..1.0, 2),
            x in proptest::collection::vec(-1.0f64..1.0, 2),
        ) {
            let fam = GlmFamily::logistic(d, 1.0, 1.0).unwrap();
            let family = ExpertFamily::GeneralizedLinear(fam.clone());
            let cover = grid_cover(&family, alpha, 1e7).unwrap();
            prop_assert!(cover.len() as f64 <= grid_cover_size_bound(d, 1.0, 1.0, alpha));
            let mut w = w[..d].to_vec();
            fam.ball.project(&mut w);
            let x = Feature::new(x[..d].iter().map(|v| v / (d as f64).sqrt()).collect()).unwrap();
            let v = fam.eval_raw(&w, &x);
            let pts = cover.grid_points().unwrap();
            let nearest = pts.iter().map(|p| {
                let diff: Vec<f64> = p.iter().zip(&w).map(|(a, b)| a - b).collect();
                lp_norm(&diff, 2.0)
            }).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest <= alpha + 1e-12);
            let mut out = vec![0.0; cover.len()];
            cover.predict_all(&[x], &mut out).unwrap();
            prop_assert!(out.iter().any(|g| (g - v).abs() <= alpha + 1e-12));
        }

        #[test]
        fn fat1_below_fat(rows in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 2), 1..7),
                          alpha in 0.1f64..0.4) {
            let fam = FiniteStatic::new(dom(2), rows).unwrap();
            let f1 = fat1_number(&discretize(&fam, alpha).unwrap(), 10).unwrap().value;
            let f = fat_shattering_number(&fam, alpha, 10).unwrap().value;
            prop_assert!(f1 <= f);
        }

        #[test]
        fn rounding_cover_within_alpha(rows in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 3), 1..8),
                                       alpha in 0.01f64..0.5) {
            let fam = FiniteStatic::new(dom(3), rows).unwrap();
            let cover = rounding_cover(&fam, alpha).unwrap();
            prop_assert!(cover.len() <= fam.len());
            let seqs = all_sequences(fam.domain(), 2);
            prop_assert!(cover_deviation(&cover, &fam, &seqs).unwrap() <= alpha + 1e-12);
        }
    }
}
