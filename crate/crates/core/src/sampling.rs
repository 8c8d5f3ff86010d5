//! Keyframe selection from scan history.
//!
//! Two interchangeable strategies behind the [`Sampler`] trait, selected by
//! name at runtime: `segmental` (one random frame per equal temporal segment,
//! content-agnostic) and `semantic` (iteratively picks from the K candidates
//! with the lowest summed cosine similarity of view distributions against the
//! current view and the anchors chosen so far). Both are pure given an
//! explicit RNG stream, so samples are reproducible regardless of iteration
//! order.

use crate::pose::{within_thresholds, Pose6};
use crate::rng::SplitMix64;
use thiserror::Error;

pub const VIEW_COUNT: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("view distribution must have {VIEW_COUNT} components, got {0}")]
    BadDimension(usize),
    #[error("view distribution off the simplex (sum {sum}, min {min})")]
    NotSimplex { sum: f64, min: f64 },
    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,
    #[error("unknown sampler strategy {0:?} (expected one of {:?})", sampler_names())]
    UnknownStrategy(String),
    #[error("candidate pool is empty")]
    EmptyPool,
}

/// Probability vector over the ten standard views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewDistribution([f64; VIEW_COUNT]);

impl ViewDistribution {
    /// Validates simplex membership within 1e-9.
    pub fn new(values: [f64; VIEW_COUNT]) -> Result<Self, SamplingError> {
        let sum: f64 = values.iter().sum();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if (sum - 1.0).abs() > 1e-9 || min < -1e-9 {
            return Err(SamplingError::NotSimplex { sum, min });
        }
        Ok(ViewDistribution(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, SamplingError> {
        if values.len() != VIEW_COUNT {
            return Err(SamplingError::BadDimension(values.len()));
        }
        let mut arr = [0.0; VIEW_COUNT];
        arr.copy_from_slice(values);
        ViewDistribution::new(arr)
    }

    /// One-hot distribution on view `k`.
    pub fn one_hot(k: usize) -> Self {
        let mut arr = [0.0; VIEW_COUNT];
        arr[k] = 1.0;
        ViewDistribution(arr)
    }

    pub fn values(&self) -> &[f64; VIEW_COUNT] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Cosine similarity of two non-negative vectors; in [0, 1] for distributions.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SamplingError> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SamplingError::ZeroNorm);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

fn dist_cosine(a: &ViewDistribution, b: &ViewDistribution) -> f64 {
    // Valid distributions sum to 1, so their norm is bounded away from zero.
    cosine_similarity(a.values(), b.values()).expect("distributions have nonzero norm")
}

/// Redundancy of a candidate against the current view and already-selected
/// anchors: the sum of cosine similarities.
pub fn redundancy_score(
    candidate: &ViewDistribution,
    current: &ViewDistribution,
    selected: &[&ViewDistribution],
) -> f64 {
    let mut score = dist_cosine(candidate, current);
    for s in selected {
        score += dist_cosine(candidate, s);
    }
    score
}

/// One selectable frame of a scan's history.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub index: u32,
    pub pose: Pose6,
    pub dist: ViewDistribution,
}

/// Frames of one scan strictly before the current frame, post-exclusion,
/// ordered by ascending frame index.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub current_index: u32,
    pub entries: Vec<PoolEntry>,
}

impl CandidatePool {
    pub fn new(current_index: u32, entries: Vec<PoolEntry>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].index < w[1].index));
        debug_assert!(entries.iter().all(|e| e.index < current_index));
        CandidatePool {
            current_index,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Remove pool frames whose pose lies within BOTH thresholds of the target.
pub fn exclude_near_target(
    pool: &CandidatePool,
    target: &Pose6,
    trans_mm: f64,
    rot_deg: f64,
) -> CandidatePool {
    CandidatePool {
        current_index: pool.current_index,
        entries: pool
            .entries
            .iter()
            .filter(|e| !within_thresholds(&e.pose, target, trans_mm, rot_deg))
            .cloned()
            .collect(),
    }
}

/// Keyframe selection strategy. Returns at most `n` frame indices, sorted
/// ascending; when the pool holds `n` or fewer frames, every index is
/// returned (degenerate rule).
pub trait Sampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(
        &self,
        pool: &CandidatePool,
        current: &ViewDistribution,
        n: usize,
        rng: &mut SplitMix64,
    ) -> Vec<u32>;
}

pub fn sampler_names() -> &'static [&'static str] {
    &["segmental", "semantic"]
}

/// Look up a sampler by its registered name.
pub fn build_sampler(strategy: &str, k: usize) -> Result<Box<dyn Sampler>, SamplingError> {
    match strategy {
        "segmental" => Ok(Box::new(SegmentalSampler)),
        "semantic" => Ok(Box::new(SemanticSampler { k: k.max(1) })),
        other => Err(SamplingError::UnknownStrategy(other.to_string())),
    }
}

/// Content-agnostic baseline: split the pool into `n` contiguous segments of
/// near-equal size (earlier segments take the extra element) and draw one
/// frame uniformly from each.
pub struct SegmentalSampler;

impl Sampler for SegmentalSampler {
    fn name(&self) -> &'static str {
        "segmental"
    }

    fn sample(
        &self,
        pool: &CandidatePool,
        _current: &ViewDistribution,
        n: usize,
        rng: &mut SplitMix64,
    ) -> Vec<u32> {
        let p = pool.len();
        if n == 0 || p == 0 {
            return Vec::new();
        }
        if p <= n {
            return pool.entries.iter().map(|e| e.index).collect();
        }
        let base = p / n;
        let extra = p % n;
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        for seg in 0..n {
            let len = base + usize::from(seg < extra);
            let offset = rng.below(len as u64) as usize;
            out.push(pool.entries[start + offset].index);
            start += len;
        }
        out
    }
}

/// Semantic-aware strategy: iteratively score every unselected candidate by
/// [`redundancy_score`] against the current view plus the anchors already
/// chosen, keep the K lowest (ties broken by earlier frame index), and pick
/// one of those K uniformly at random.
pub struct SemanticSampler {
    pub k: usize,
}

impl SemanticSampler {
    /// Same process as [`Sampler::sample`] but returns indices in selection
    /// order rather than sorted, so each pick can be checked against the
    /// K-lowest set of its own step.
    pub fn sample_ordered(
        &self,
        pool: &CandidatePool,
        current: &ViewDistribution,
        n: usize,
        rng: &mut SplitMix64,
    ) -> Vec<u32> {
        let p = pool.len();
        if n == 0 || p == 0 {
            return Vec::new();
        }
        if p <= n {
            return pool.entries.iter().map(|e| e.index).collect();
        }
        // Running sums: scores[i] accumulates similarity to current plus each
        // selected anchor, so a selection step only adds one cosine per
        // candidate instead of rescoring the whole selected set.
        let mut scores: Vec<f64> = pool
            .entries
            .iter()
            .map(|e| dist_cosine(&e.dist, current))
            .collect();
        let mut taken = vec![false; p];
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut order: Vec<usize> = (0..p).filter(|&i| !taken[i]).collect();
            if order.is_empty() {
                break;
            }
            order.sort_by(|&a, &b| {
                scores[a]
                    .partial_cmp(&scores[b])
                    .unwrap()
                    .then(pool.entries[a].index.cmp(&pool.entries[b].index))
            });
            let k = self.k.min(order.len());
            let pick = order[rng.below(k as u64) as usize];
            taken[pick] = true;
            chosen.push(pick);
            let picked_dist = pool.entries[pick].dist;
            for (i, s) in scores.iter_mut().enumerate() {
                if !taken[i] {
                    *s += dist_cosine(&pool.entries[i].dist, &picked_dist);
                }
            }
        }
        chosen.iter().map(|&i| pool.entries[i].index).collect()
    }
}

impl Sampler for SemanticSampler {
    fn name(&self) -> &'static str {
        "semantic"
    }

    fn sample(
        &self,
        pool: &CandidatePool,
        current: &ViewDistribution,
        n: usize,
        rng: &mut SplitMix64,
    ) -> Vec<u32> {
        let mut out = self.sample_ordered(pool, current, n, rng);
        out.sort_unstable();
        out
    }
}
