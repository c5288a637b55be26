use std::sync::atomic::{AtomicBool, Ordering};

use super::feature::EmbeddedFeature;
use crate::error::{Error, Result};
use crate::nn::{gemm, Real};

static ZERO_NORM_WARNED: AtomicBool = AtomicBool::new(false);

fn warn_zero_norm() {
    if !ZERO_NORM_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("zero-norm descriptor: cosine similarity taken as 0");
    }
}

/// Unit vectors of `rows` descriptors of length `d` and their inverse
/// norms; zero vectors stay zero with inverse norm 0.
fn unit_rows<T: Real>(data: &[T], d: usize) -> (Vec<T>, Vec<T>) {
    let mut unit = data.to_vec();
    let mut inv = Vec::with_capacity(data.len() / d.max(1));
    for row in unit.chunks_exact_mut(d) {
        let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if n > T::zero() {
            let r = T::one() / n;
            row.iter_mut().for_each(|v| *v *= r);
            inv.push(r);
        } else {
            warn_zero_norm();
            inv.push(T::zero());
        }
    }
    (unit, inv)
}

/// `aᵀb / (|a| |b|)`, or 0 when either vector is zero.
pub fn cosine_sim<T: Real>(a: &[T], b: &[T]) -> T {
    let (mut ab, mut aa, mut bb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == T::zero() || bb == T::zero() {
        warn_zero_norm();
        return T::zero();
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Pooled local descriptors of every support shot of one class.
#[derive(Clone, Debug)]
pub struct ClassSupportPool<T> {
    pub d: usize,
    descriptors: Vec<T>,
    unit: Vec<T>,
    inv_norm: Vec<T>,
}

impl<T: Real> ClassSupportPool<T> {
    pub fn from_descriptors(d: usize, descriptors: Vec<T>) -> Result<Self> {
        if d == 0 || !descriptors.len().is_multiple_of(d) || descriptors.is_empty() {
            return Err(Error::dim("support pool", format!("non-empty multiple of {d}"), descriptors.len()));
        }
        let (unit, inv_norm) = unit_rows(&descriptors, d);
        Ok(Self {
            d,
            descriptors,
            unit,
            inv_norm,
        })
    }

    /// Concatenates the descriptors of `shots` in order, so pool entry
    /// `s*m + p` is descriptor `p` of shot `s`.
    pub fn from_features(shots: &[&EmbeddedFeature<T>]) -> Result<Self> {
        let d = shots.first().map(|f| f.d).unwrap_or(0);
        if shots.iter().any(|f| f.d != d) {
            return Err(Error::Config("support features disagree on descriptor length".into()));
        }
        Self::from_descriptors(d, shots.iter().flat_map(|f| f.data.iter().copied()).collect())
    }

    pub fn len(&self) -> usize {
        self.inv_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_norm.is_empty()
    }

    pub fn descriptor(&self, i: usize) -> &[T] {
        &self.descriptors[i * self.d..(i + 1) * self.d]
    }
}

/// Normalized descriptors of one query, reused across classes.
#[derive(Clone, Debug)]
pub struct QueryDescriptors<T> {
    pub d: usize,
    pub m: usize,
    unit: Vec<T>,
    inv_norm: Vec<T>,
}

impl<T: Real> QueryDescriptors<T> {
    pub fn new(f: &EmbeddedFeature<T>) -> Self {
        let (unit, inv_norm) = unit_rows(&f.data, f.d);
        Self {
            d: f.d,
            m: f.m(),
            unit,
            inv_norm,
        }
    }
}

/// Image-to-class score and the neighbours that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScore<T> {
    pub score: T,
    pub k: usize,
    /// `m * k` pool indices; row `p` lists descriptor `p`'s neighbours from
    /// most to least similar.
    pub neighbors: Vec<usize>,
}

impl<T> ClassScore<T> {
    pub fn neighbors_of(&self, p: usize) -> &[usize] {
        &self.neighbors[p * self.k..(p + 1) * self.k]
    }
}

/// Indices of the `k` largest entries of `row`, most similar first; equal
/// values rank the lower index first.
fn top_k<T: Real>(row: &[T], k: usize, idx: &mut Vec<usize>) {
    idx.clear();
    for (j, &v) in row.iter().enumerate() {
        if idx.len() == k && v <= row[idx[k - 1]] {
            continue;
        }
        let pos = idx.iter().position(|&i| v > row[i]).unwrap_or(idx.len());
        if idx.len() == k {
            idx.pop();
        }
        idx.insert(pos, j);
    }
}

/// `Σ_p Σ_{q ∈ kNN(p)} cos(x_p, pool_q)`: every query descriptor is matched
/// to its `k` most similar descriptors in the class pool.
pub fn class_score_with<T: Real>(q: &QueryDescriptors<T>, pool: &ClassSupportPool<T>, k: usize) -> Result<ClassScore<T>> {
    if q.d != pool.d {
        return Err(Error::dim("query descriptor", pool.d, q.d));
    }
    let n = pool.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} neighbours requested from a pool of {n} descriptors")));
    }
    let mut sims = vec![T::zero(); q.m * n];
    gemm(false, true, q.m, n, q.d, T::one(), &q.unit, &pool.unit, T::zero(), &mut sims);
    let mut neighbors = Vec::with_capacity(q.m * k);
    let mut score = T::zero();
    let mut idx = Vec::with_capacity(k + 1);
    for row in sims.chunks_exact(n) {
        top_k(row, k, &mut idx);
        for &j in &idx {
            score += row[j];
        }
        neighbors.extend_from_slice(&idx);
    }
    Ok(ClassScore { score, k, neighbors })
}

pub fn class_score<T: Real>(query: &EmbeddedFeature<T>, pool: &ClassSupportPool<T>, k: usize) -> Result<ClassScore<T>> {
    class_score_with(&QueryDescriptors::new(query), pool, k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification<T> {
    pub scores: Vec<T>,
    pub prediction: usize,
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax<T: Real>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn classify<T: Real>(query: &EmbeddedFeature<T>, pools: &[ClassSupportPool<T>], k: usize) -> Result<Classification<T>> {
    if pools.len() < 2 {
        return Err(Error::Config(format!("classification needs at least 2 classes, got {}", pools.len())));
    }
    let q = QueryDescriptors::new(query);
    let scores = pools
        .iter()
        .map(|p| Ok(class_score_with(&q, p, k)?.score))
        .collect::<Result<Vec<T>>>()?;
    Ok(Classification {
        prediction: argmax(&scores),
        scores,
    })
}

/// Maps a gradient with respect to unit vectors onto the raw vectors:
/// `dx = (dû - (dû·û) û) / |x|`.
fn through_normalization<T: Real>(unit: &[T], inv_norm: &[T], d: usize, dunit: &[T], out: &mut [T]) {
    for (((u, &r), g), o) in unit
        .chunks_exact(d)
        .zip(inv_norm)
        .zip(dunit.chunks_exact(d))
        .zip(out.chunks_exact_mut(d))
    {
        if r == T::zero() {
            continue;
        }
        let proj: T = u.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for c in 0..d {
            o[c] += r * (g[c] - proj * u[c]);
        }
    }
}

/// Accumulates `dscore * d(class score)` into the query and pool descriptor
/// gradients. Neighbour sets are held fixed (the selection is piecewise
/// constant).
pub struct KnnGrad<T> {
    dq_unit: Vec<T>,
    dpool_unit: Vec<Vec<T>>,
}

impl<T: Real> KnnGrad<T> {
    pub fn new(m: usize, d: usize, pools: &[ClassSupportPool<T>]) -> Self {
        Self {
            dq_unit: vec![T::zero(); m * d],
            dpool_unit: pools.iter().map(|p| vec![T::zero(); p.len() * p.d]).collect(),
        }
    }

    pub fn add_query(&mut self, q: &QueryDescriptors<T>, class: usize, pool: &ClassSupportPool<T>, score: &ClassScore<T>, dscore: T) {
        let d = q.d;
        let dpool = &mut self.dpool_unit[class];
        for p in 0..q.m {
            let qp = &q.unit[p * d..(p + 1) * d];
            for &j in score.neighbors_of(p) {
                let pj = &pool.unit[j * d..(j + 1) * d];
                let dq = &mut self.dq_unit[p * d..(p + 1) * d];
                for c in 0..d {
                    dq[c] += dscore * pj[c];
                }
                let dp = &mut dpool[j * d..(j + 1) * d];
                for c in 0..d {
                    dp[c] += dscore * qp[c];
                }
            }
        }
    }

    /// Gradient with respect to the raw query descriptors; resets the query
    /// accumulator.
    pub fn take_query(&mut self, q: &QueryDescriptors<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.dq_unit.len()];
        through_normalization(&q.unit, &q.inv_norm, q.d, &self.dq_unit, &mut out);
        self.dq_unit.iter_mut().for_each(|v| *v = T::zero());
        out
    }

    /// Gradient with respect to each class pool's raw descriptors.
    pub fn pool_grads(&self, pools: &[ClassSupportPool<T>]) -> Vec<Vec<T>> {
        pools
            .iter()
            .zip(&self.dpool_unit)
            .map(|(p, g)| {
                let mut out = vec![T::zero(); g.len()];
                through_normalization(&p.unit, &p.inv_norm, p.d, g, &mut out);
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn cosine_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(7, &mut rng);
        let y = random(7, &mut rng);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let scaled: Vec<f64> = x.iter().map(|v| 3.7 * v).collect();
        assert!((cosine_sim(&x, &x) - 1.0).abs() < 1e-15);
        assert!((cosine_sim(&x, &neg) + 1.0).abs() < 1e-15);
        assert!((cosine_sim(&scaled, &y) - cosine_sim(&x, &y)).abs() < 1e-15);
        assert_eq!(cosine_sim(&[0.0; 7], &y), 0.0);
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        let mut idx = Vec::new();
        top_k(&[0.5, 0.9, 0.5, 0.9, 0.1], 3, &mut idx);
        assert_eq!(idx, vec![1, 3, 0]);
    }

    #[test]
    fn full_k_sums_every_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = EmbeddedFeature::new(2, 2, 5, random(20, &mut rng)).unwrap();
        let pool = ClassSupportPool::from_descriptors(5, random(30, &mut rng)).unwrap();
        let s = class_score(&q, &pool, 6).unwrap();
        let expect: f64 = (0..4)
            .flat_map(|p| (0..6).map(move |j| (p, j)))
            .map(|(p, j)| cosine_sim(q.descriptor(p), pool.descriptor(j)))
            .sum();
        assert!((s.score - expect).abs() < 1e-12);
        assert!(class_score(&q, &pool, 7).is_err());
    }

    #[test]
    fn matching_descriptors_score_m_times_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = EmbeddedFeature::new(1, 3, 4, random(12, &mut rng)).unwrap();
        let mut pool = Vec::new();
        for _ in 0..2 {
            pool.extend_from_slice(&q.data);
        }
        let pool = ClassSupportPool::from_descriptors(4, pool).unwrap();
        let s = class_score(&q, &pool, 2).unwrap();
        assert!((s.score - 6.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pools_tie_to_class_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = EmbeddedFeature::new(2, 2, 3, random(12, &mut rng)).unwrap();
        let pool = ClassSupportPool::from_descriptors(3, random(18, &mut rng)).unwrap();
        let c = classify(&q, &[pool.clone(), pool.clone(), pool], 3).unwrap();
        assert_eq!(c.prediction, 0);
        assert!(c.scores.windows(2).all(|w| w[0] == w[1]));
    }
}
