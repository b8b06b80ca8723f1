//! Hard Lipschitz class: code vectors paired with packing points of the
//! parameter ball, extended to the whole ball by the McShane formula.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lp_norm, ExpertFamily, Feature, ParamBall};
use crate::error::{Error, Result};

/// Binary code vectors with pairwise Hamming distance at least `T/4`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook {
    vectors: Vec<Vec<bool>>,
    min_distance: usize,
}

pub const CODEBOOK_RETRY_CAP: usize = 10_000;

fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

impl CodeBook {
    /// Draws `count` uniform vectors of `length` bits, redrawing each
    /// candidate until it is at distance `>= length/4` from all accepted ones.
    pub fn generate(count: usize, length: usize, seed: u64) -> Result<Self> {
        if count == 0 || length == 0 {
            return Err(Error::InvalidParameter("codebook needs positive count and length".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors: Vec<Vec<bool>> = Vec::with_capacity(count);
        while vectors.len() < count {
            let mut accepted = false;
            for _ in 0..CODEBOOK_RETRY_CAP {
                let cand: Vec<bool> = (0..length).map(|_| rng.gen::<bool>()).collect();
                if vectors.iter().all(|v| 4 * hamming(v, &cand) >= length) {
                    vectors.push(cand);
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::CodebookInfeasible {
                    count,
                    length,
                    retries: CODEBOOK_RETRY_CAP,
                });
            }
        }
        Self::from_vectors(vectors)
    }

    /// Verifies the distance condition exhaustively.
    pub fn from_vectors(vectors: Vec<Vec<bool>>) -> Result<Self> {
        let length = vectors.first().map(Vec::len).ok_or(Error::Empty("codebook"))?;
        if vectors.iter().any(|v| v.len() != length) {
            return Err(Error::InvalidParameter("code vectors differ in length".into()));
        }
        let min_distance = Self::min_pairwise(&vectors);
        if 4 * min_distance < length {
            return Err(Error::Inconsistent(format!(
                "code vectors at distance {min_distance} < {length}/4"
            )));
        }
        Ok(Self {
            vectors,
            min_distance,
        })
    }

    fn min_pairwise(vectors: &[Vec<bool>]) -> usize {
        let mut best = usize::MAX;
        for i in 0..vectors.len() {
            for j in i + 1..vectors.len() {
                best = best.min(hamming(&vectors[i], &vectors[j]));
            }
        }
        if best == usize::MAX {
            vectors.first().map_or(0, Vec::len)
        } else {
            best
        }
    }

    /// Recomputes the minimum pairwise distance from scratch.
    pub fn verify(&self) -> usize {
        Self::min_pairwise(&self.vectors)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn length(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn min_distance(&self) -> usize {
        self.min_distance
    }

    pub fn vectors(&self) -> &[Vec<bool>] {
        &self.vectors
    }
}

/// The first `count` points of `spacing * Z^d` inside the Euclidean ball of
/// `radius`, ordered by norm and then lexicographically.
pub fn lattice_packing(dim: usize, radius: f64, spacing: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    if !(spacing > 0.0) || dim == 0 {
        return Err(Error::InvalidParameter("packing needs positive spacing and dimension".into()));
    }
    let m = (radius / spacing).floor() as i64;
    let side = (2 * m + 1) as f64;
    let total = side.powi(dim as i32);
    if total > 1e7 {
        return Err(Error::SizeCap {
            what: "lattice enumeration for packing",
            size: total,
            cap: 1e7,
        });
    }
    let mut pts: Vec<Vec<i64>> = Vec::new();
    let mut idx = vec![-m; dim];
    loop {
        let w: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
        if lp_norm(&w, 2.0) <= radius + ParamBall::SLACK {
            pts.push(idx.clone());
        }
        let mut k = 0;
        loop {
            if k == dim {
                let mut keyed: Vec<(i64, Vec<i64>)> =
                    pts.into_iter().map(|p| (p.iter().map(|i| i * i).sum(), p)).collect();
                keyed.sort();
                if keyed.len() < count {
                    return Err(Error::Inconsistent(format!(
                        "ball holds only {} lattice points, {count} requested",
                        keyed.len()
                    )));
                }
                return Ok(keyed
                    .into_iter()
                    .take(count)
                    .map(|(_, p)| p.iter().map(|&i| i as f64 * spacing).collect())
                    .collect());
            }
            idx[k] += 1;
            if idx[k] > m {
                idx[k] = -m;
                k += 1;
            } else {
                break;
            }
        }
    }
}

/// Lipschitz family that on the designated features `x_t = t e_1` takes the
/// code-vector values `{0, alpha}` at packing points and is extended to the
/// ball by `f(w, x_t) = max_j { u_j[t] - L ||w - w_j||_2 }`.
#[derive(Debug, Clone)]
pub struct HardLipschitz {
    pub dim: usize,
    pub radius: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    designated: Vec<Feature>,
    lookup: HashMap<Vec<u64>, usize>,
    packing: Vec<Vec<f64>>,
    table: Vec<Vec<f64>>,
}

impl HardLipschitz {
    pub fn ball(&self) -> ParamBall {
        ParamBall {
            dim: self.dim,
            radius: self.radius,
            norm_order: 2.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.designated.len()
    }

    pub fn designated_features(&self) -> &[Feature] {
        &self.designated
    }

    pub fn packing(&self) -> &[Vec<f64>] {
        &self.packing
    }

    /// Row `j`: values of member `j` on the designated features.
    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn members(&self) -> usize {
        self.packing.len()
    }

    pub fn eval_raw(&self, w: &[f64], x: &Feature) -> f64 {
        let Some(&t) = self.lookup.get(&x.key()) else {
            return 0.0;
        };
        let mut best = f64::NEG_INFINITY;
        for (p, row) in self.packing.iter().zip(&self.table) {
            let dist: f64 = w.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            best = best.max(row[t] - self.lipschitz * dist);
        }
        best.clamp(0.0, 1.0)
    }
}

/// Builds the hard class with `M = floor((LR/(2 alpha))^d)` members.
pub fn build_hard_lipschitz_class(
    dim: usize,
    horizon: usize,
    radius: f64,
    lipschitz: f64,
    alpha: f64,
    seed: u64,
) -> Result<(ExpertFamily, CodeBook)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1]")));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    ParamBall::l2(dim, radius)?;
    let m = (lipschitz * radius / (2.0 * alpha)).powi(dim as i32).floor();
    if m < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "(LR/(2 alpha))^d = {m} gives fewer than two members"
        )));
    }
    if m > 4096.0 {
        return Err(Error::SizeCap {
            what: "hard class members",
            size: m,
            cap: 4096.0,
        });
    }
    let m = m as usize;
    let codebook = CodeBook::generate(m, horizon, seed)?;
    let packing = lattice_packing(dim, radius, alpha / lipschitz, m)?;
    let table = codebook
        .vectors()
        .iter()
        .map(|v| v.iter().map(|&b| if b { alpha } else { 0.0 }).collect())
        .collect();
    let designated: Vec<Feature> = (1..=horizon)
        .map(|t| {
            let mut c = vec![0.0; dim];
            c[0] = t as f64;
            Feature(c)
        })
        .collect();
    let lookup = designated.iter().enumerate().map(|(t, x)| (x.key(), t)).collect();
    let family = HardLipschitz {
        dim,
        radius,
        lipschitz,
        alpha,
        designated,
        lookup,
        packing,
        table,
    };
    Ok((ExpertFamily::HardLipschitz(family), codebook))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn hard(f: &ExpertFamily) -> &HardLipschitz {
        match f {
            ExpertFamily::HardLipschitz(h) => h,
            _ => unreachable!(),
        }
    }

    #[test]
    fn small_class_example() {
        let (fam, book) = build_hard_lipschitz_class(1, 40, 1.0, 1.0, 0.25, 7).unwrap();
        assert_eq!(book.len(), 2);
        assert!(book.verify() >= 10);
        let h = hard(&fam);
        for (j, p) in h.packing().iter().enumerate() {
            for (t, x) in h.designated_features().iter().enumerate() {
                assert_eq!(h.eval_raw(p, x), h.table()[j][t]);
            }
        }
        assert_eq!(h.eval_raw(&[0.0], &Feature::scalar(0.5)), 0.0);
    }

    #[test]
    fn packing_is_separated() {
        let pts = lattice_packing(2, 1.0, 0.3, 9).unwrap();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d: Vec<f64> = pts[i].iter().zip(&pts[j]).map(|(a, b)| a - b).collect();
                assert!(lp_norm(&d, 2.0) >= 0.3 - 1e-12);
            }
        }
        assert!(lattice_packing(1, 1.0, 0.5, 6).is_err());
    }

    #[test]
    fn too_few_members_rejected() {
        assert!(build_hard_lipschitz_class(1, 10, 1.0, 1.0, 0.4, 0).is_err());
    }

    #[test]
    fn infeasible_codebook_is_named() {
        // Two-bit vectors at distance >= 1: at most four exist.
        let err = CodeBook::generate(5, 2, 1).unwrap_err();
        assert!(matches!(err, Error::CodebookInfeasible { count: 5, length: 2, .. }));
    }

    #[test]
    fn extension_is_lipschitz_on_many_triples() {
        let (fam, _) = build_hard_lipschitz_class(2, 16, 1.0, 2.0, 0.2, 3).unwrap();
        let h = hard(&fam);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ball = h.ball();
        for _ in 0..10_000 {
            let mut w1 = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let mut w2 = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            ball.project(&mut w1);
            ball.project(&mut w2);
            let x = &h.designated_features()[rng.gen_range(0..16)];
            let d: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
            let gap = (h.eval_raw(&w1, x) - h.eval_raw(&w2, x)).abs();
            assert!(gap <= 2.0 * lp_norm(&d, 2.0) + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn codebook_distance_invariant(seed in any::<u64>(), m in 2usize..6, t in 8usize..40) {
            let book = CodeBook::generate(m, t, seed).unwrap();
            prop_assert!(4 * book.verify() >= t);
            prop_assert_eq!(book.verify(), book.min_distance());
        }
    }
}
