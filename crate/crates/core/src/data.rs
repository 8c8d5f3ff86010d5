//! Dataset pipeline: corpus manifests, supervised sample construction with
//! leakage exclusion, subject-disjoint splits, deterministic batching, and
//! pose-based nearest-frame retrieval.

use crate::encoders::{EncoderError, FeatureProvider, ScanId};
use crate::models::{Anchor, AnchorSet, HeadInput};
use crate::pose::{relative_action, weighted_pose_distance, Action6, Pose6};
use crate::rng::SplitMix64;
use crate::sampling::{
    exclude_near_target, CandidatePool, PoolEntry, Sampler, VIEW_COUNT,
};
use crate::sim::{scan_io, ScanTrajectory, SimError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CORPUS_FORMAT: &str = "ustar-corpus/1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    BadManifest { path: String, message: String },
    #[error(transparent)]
    Scan(#[from] SimError),
    #[error(transparent)]
    Feature(#[from] EncoderError),
    #[error("corpus mixes feature dimensions: {a} and {b}")]
    MixedDims { a: usize, b: usize },
    #[error("unknown scan {0}")]
    UnknownScan(ScanId),
    #[error("validation fraction {0} must lie in (0, 1)")]
    BadFraction(f64),
    #[error("need at least 2 subjects to split, got {0}")]
    TooFewSubjects(usize),
    #[error("anchor index {index} is not below current frame {current}")]
    BadAnchorIndex { index: u32, current: u32 },
}

/// One corpus entry; paths are relative to the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub subject: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scans: Vec<ManifestEntry>,
    pub format: String,
}

impl Manifest {
    pub fn new(scans: Vec<ManifestEntry>) -> Self {
        Manifest {
            scans,
            format: CORPUS_FORMAT.to_string(),
        }
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.scans.iter().map(|e| e.subject).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), DataError> {
    let body = serde_json::to_string(manifest).expect("manifest is serializable");
    std::fs::write(path, body + "\n").map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DataError> {
    let body = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let manifest: Manifest = serde_json::from_str(&body).map_err(|e| DataError::BadManifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if manifest.format != CORPUS_FORMAT {
        return Err(DataError::BadManifest {
            path: path.display().to_string(),
            message: format!("unsupported format {:?}", manifest.format),
        });
    }
    Ok(manifest)
}

/// A fully loaded corpus; scans are immutable after load and double as the
/// frozen feature provider.
pub struct Corpus {
    pub manifest: Manifest,
    pub scans: Vec<ScanTrajectory>,
    index: HashMap<u64, usize>,
    dim: usize,
}

impl Corpus {
    pub fn load(manifest_path: &Path) -> Result<Self, DataError> {
        let manifest = read_manifest(manifest_path)?;
        let base: PathBuf = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let mut scans = Vec::with_capacity(manifest.scans.len());
        let mut index = HashMap::new();
        let mut dim = None;
        for entry in &manifest.scans {
            let scan = scan_io::read_scan(&base.join(&entry.path))?;
            match dim {
                None => dim = Some(scan.feature_dim),
                Some(d) if d != scan.feature_dim => {
                    return Err(DataError::MixedDims {
                        a: d,
                        b: scan.feature_dim,
                    })
                }
                _ => {}
            }
            index.insert(scan.scan.0, scans.len());
            scans.push(scan);
        }
        Ok(Corpus {
            manifest,
            scans,
            index,
            dim: dim.unwrap_or(0),
        })
    }

    pub fn scan(&self, id: ScanId) -> Result<&ScanTrajectory, DataError> {
        self.index
            .get(&id.0)
            .map(|&i| &self.scans[i])
            .ok_or(DataError::UnknownScan(id))
    }

    pub fn scans_of_subjects(&self, subjects: &[u32]) -> Vec<&ScanTrajectory> {
        self.scans
            .iter()
            .filter(|s| subjects.contains(&s.subject))
            .collect()
    }
}

impl FeatureProvider for Corpus {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lookup(&self, scan: ScanId, frame: usize) -> Result<&[f64], EncoderError> {
        let idx = self
            .index
            .get(&scan.0)
            .ok_or(EncoderError::UnknownScan(scan))?;
        let s = &self.scans[*idx];
        s.frames
            .get(frame)
            .map(|f| f.feat.as_slice())
            .ok_or(EncoderError::UnknownFrame { scan, frame })
    }
}

/// Train/validation subject partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let body = serde_json::to_string_pretty(self).expect("split is serializable");
        std::fs::write(path, body + "\n").map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let body = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&body).map_err(|e| DataError::BadManifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Deterministic subject-disjoint split. The validation side receives
/// `ceil(n * val_fraction)` subjects, clamped to [1, n-1], drawn by a seeded
/// shuffle of the sorted subject ids.
pub fn split_by_subject(
    manifest: &Manifest,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
        return Err(DataError::BadFraction(val_fraction));
    }
    let mut subjects = manifest.subjects();
    if subjects.len() < 2 {
        return Err(DataError::TooFewSubjects(subjects.len()));
    }
    let n = subjects.len();
    let n_val = ((n as f64 * val_fraction).ceil() as usize).clamp(1, n - 1);
    let mut rng = SplitMix64::from_parts(&[seed, 0x5b11]);
    rng.shuffle(&mut subjects);
    let mut val: Vec<u32> = subjects[..n_val].to_vec();
    let mut train: Vec<u32> = subjects[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(SplitSpec { train, val, seed })
}

/// Sample construction knobs.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// Graph size L; L-1 anchors are sampled per current frame.
    pub graph_size: usize,
    /// Frames before this index never become samples.
    pub min_history: usize,
    /// Keep every `frame_stride`-th eligible frame (desk-scale budget knob).
    pub frame_stride: usize,
    pub exclude_trans_mm: f64,
    pub exclude_rot_deg: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            graph_size: 8,
            min_history: 8,
            frame_stride: 1,
            exclude_trans_mm: 5.0,
            exclude_rot_deg: 5.0,
        }
    }
}

/// One supervised sample: a current frame, its post-exclusion candidate pool
/// (as indices), the sampled anchors, and per-view label actions.
#[derive(Debug, Clone)]
pub struct Sample {
    pub scan: ScanId,
    pub current: u32,
    pub pool: Vec<u32>,
    pub anchors: Vec<u32>,
    pub labels: [Action6; VIEW_COUNT],
    pub mask: [bool; VIEW_COUNT],
}

/// Build one sample per eligible current frame of the scan.
///
/// Eligibility: frame index >= min_history, index on the stride grid, and a
/// non-empty pool after excluding frames near any target pose (leakage rule).
/// Anchor draws use a stream keyed by (seed, scan, frame), so results do not
/// depend on iteration order.
pub fn build_samples(
    scan: &ScanTrajectory,
    cfg: &BuildConfig,
    sampler: &dyn Sampler,
    seed: u64,
) -> Vec<Sample> {
    // The exclusion set is shared by every sample of the scan: a frame is
    // excluded when it sits within both thresholds of ANY target pose.
    let base_pool = CandidatePool::new(
        scan.len() as u32,
        scan.frames
            .iter()
            .map(|f| PoolEntry {
                index: f.t,
                pose: f.pose,
                dist: f.viewdist,
            })
            .collect(),
    );
    let mut filtered = base_pool;
    for view in 0..VIEW_COUNT {
        filtered = exclude_near_target(
            &filtered,
            scan.target_pose(view),
            cfg.exclude_trans_mm,
            cfg.exclude_rot_deg,
        );
    }

    let mut samples = Vec::new();
    let n_anchors = cfg.graph_size.saturating_sub(1);
    for t_c in (cfg.min_history..scan.len()).step_by(cfg.frame_stride.max(1)) {
        let cut = filtered
            .entries
            .partition_point(|e| (e.index as usize) < t_c);
        if cut == 0 {
            continue; // no history available after exclusion
        }
        let pool = CandidatePool::new(t_c as u32, filtered.entries[..cut].to_vec());
        let current = &scan.frames[t_c];
        let mut rng = SplitMix64::from_parts(&[seed, scan.scan.0, t_c as u64]);
        let anchors = sampler.sample(&pool, &current.viewdist, n_anchors, &mut rng);
        let mut labels = [Action6::zero(); VIEW_COUNT];
        for (view, label) in labels.iter_mut().enumerate() {
            *label = relative_action(&current.pose, scan.target_pose(view));
        }
        samples.push(Sample {
            scan: scan.scan,
            current: t_c as u32,
            pool: pool.entries.iter().map(|e| e.index).collect(),
            anchors,
            labels,
            mask: [true; VIEW_COUNT],
        });
    }
    samples
}

/// Assemble the star-graph input for a current frame: each sampled keyframe's
/// feature paired with the relative action from the current frame to it.
pub fn build_anchor_set(
    scan: &ScanTrajectory,
    current: u32,
    sampled: &[u32],
    provider: &dyn FeatureProvider,
) -> Result<AnchorSet, DataError> {
    let current_pose = &scan.frames[current as usize].pose;
    let mut anchors = Vec::with_capacity(sampled.len());
    for &idx in sampled {
        if idx >= current {
            return Err(DataError::BadAnchorIndex {
                index: idx,
                current,
            });
        }
        anchors.push(Anchor {
            index: idx,
            feature: provider.lookup(scan.scan, idx as usize)?.to_vec(),
            action: relative_action(current_pose, &scan.frames[idx as usize].pose),
        });
    }
    Ok(AnchorSet {
        scan: scan.scan,
        current_index: current,
        current_feature: provider.lookup(scan.scan, current as usize)?.to_vec(),
        anchors,
    })
}

/// Full model input for a sample: the anchor set plus consecutive inter-frame
/// actions for the chain head (first token zero, last hop into the current
/// frame).
pub fn build_head_input(
    scan: &ScanTrajectory,
    sample: &Sample,
    provider: &dyn FeatureProvider,
) -> Result<HeadInput, DataError> {
    let set = build_anchor_set(scan, sample.current, &sample.anchors, provider)?;
    let mut chain_actions = Vec::with_capacity(set.anchors.len() + 1);
    chain_actions.push(Action6::zero());
    for w in sample.anchors.windows(2) {
        chain_actions.push(relative_action(
            &scan.frames[w[0] as usize].pose,
            &scan.frames[w[1] as usize].pose,
        ));
    }
    if let Some(&last) = sample.anchors.last() {
        chain_actions.push(relative_action(
            &scan.frames[last as usize].pose,
            &scan.frames[sample.current as usize].pose,
        ));
    }
    Ok(HeadInput { set, chain_actions })
}

/// Seeded per-epoch shuffle into batches; the final partial batch is kept.
pub fn batch_iter(n_samples: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = SplitMix64::from_parts(&[epoch_seed, 0xba7c4]);
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Index of the frame whose pose is closest to `pose` under the weighted
/// distance (mm + wrapped deg, equal weights); ties go to the earlier frame.
pub fn nearest_frame(scan: &ScanTrajectory, pose: &Pose6) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, f) in scan.frames.iter().enumerate() {
        let d = weighted_pose_distance(&f.pose, pose);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{apply_action, wrap_angle_deg};
    use crate::sampling::build_sampler;
    use crate::sim::{generate_anatomy, generate_trajectory, SimConfig};

    fn small_scan(seed: u64) -> ScanTrajectory {
        let config = SimConfig {
            feature_dim: 8,
            fourier_dim: 8,
            ..SimConfig::default()
        };
        let a = generate_anatomy(seed, 0, &config).unwrap();
        generate_trajectory(&a, &config, seed + 1, ScanId(seed)).unwrap()
    }

    #[test]
    fn labels_at_annotated_frames_are_zero() {
        let scan = small_scan(60);
        let cfg = BuildConfig::default();
        let sampler = build_sampler("segmental", 128).unwrap();
        let samples = build_samples(&scan, &cfg, sampler.as_ref(), 1);
        let mut checked = 0;
        for s in &samples {
            for view in 0..VIEW_COUNT {
                if scan.annotations[view] == s.current {
                    assert_eq!(s.labels[view], Action6::zero());
                    checked += 1;
                }
            }
        }
        // Most annotated frames are excluded from eligibility by stride or
        // pool rules, so just require the invariant to hold where it applies.
        let _ = checked;
    }

    #[test]
    fn graph_size_one_yields_no_anchors() {
        let scan = small_scan(61);
        let cfg = BuildConfig {
            graph_size: 1,
            frame_stride: 37,
            ..BuildConfig::default()
        };
        let sampler = build_sampler("semantic", 128).unwrap();
        let samples = build_samples(&scan, &cfg, sampler.as_ref(), 2);
        assert!(!samples.is_empty());
        assert!(samples.iter().all(|s| s.anchors.is_empty()));
    }

    #[test]
    fn labels_match_apply_action_reconstruction() {
        let scan = small_scan(62);
        let cfg = BuildConfig {
            frame_stride: 29,
            ..BuildConfig::default()
        };
        let sampler = build_sampler("segmental", 128).unwrap();
        for s in build_samples(&scan, &cfg, sampler.as_ref(), 3) {
            let current = &scan.frames[s.current as usize].pose;
            for view in 0..VIEW_COUNT {
                let reached = apply_action(current, &s.labels[view]);
                let target = scan.target_pose(view);
                for k in 0..3 {
                    assert!((reached.pos[k] - target.pos[k]).abs() < 1e-9);
                    assert!(wrap_angle_deg(reached.rot[k] - target.rot[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn anchors_are_subset_of_pool_and_below_current() {
        let scan = small_scan(63);
        let cfg = BuildConfig {
            frame_stride: 17,
            ..BuildConfig::default()
        };
        let sampler = build_sampler("semantic", 16).unwrap();
        for s in build_samples(&scan, &cfg, sampler.as_ref(), 4) {
            for a in &s.anchors {
                assert!(s.pool.contains(a), "anchor {a} not in pool");
                assert!(*a < s.current);
            }
        }
    }

    #[test]
    fn excluded_frames_never_become_anchors() {
        let scan = small_scan(64);
        let cfg = BuildConfig {
            frame_stride: 13,
            ..BuildConfig::default()
        };
        let sampler = build_sampler("segmental", 128).unwrap();
        for s in build_samples(&scan, &cfg, sampler.as_ref(), 5) {
            for &a in &s.anchors {
                let pose = &scan.frames[a as usize].pose;
                for view in 0..VIEW_COUNT {
                    assert!(
                        !crate::pose::within_thresholds(
                            pose,
                            scan.target_pose(view),
                            cfg.exclude_trans_mm,
                            cfg.exclude_rot_deg
                        ),
                        "anchor {a} lies within exclusion of view {view}"
                    );
                }
            }
        }
    }

    #[test]
    fn split_is_subject_disjoint_and_deterministic() {
        let entries: Vec<ManifestEntry> = (0..26)
            .flat_map(|s| {
                (0..2).map(move |k| ManifestEntry {
                    path: format!("scan_{s}_{k}.jsonl"),
                    subject: s,
                })
            })
            .collect();
        let manifest = Manifest::new(entries);
        let split = split_by_subject(&manifest, 0.23, 7).unwrap();
        assert_eq!(split.val.len(), 6, "ceil(26 * 0.23) = 6");
        assert_eq!(split.train.len(), 20);
        for v in &split.val {
            assert!(!split.train.contains(v));
        }
        let again = split_by_subject(&manifest, 0.23, 7).unwrap();
        assert_eq!(split, again);
        let different = split_by_subject(&manifest, 0.23, 8).unwrap();
        assert_ne!(split.val, different.val);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let manifest = Manifest::new(vec![ManifestEntry {
            path: "x.jsonl".into(),
            subject: 0,
        }]);
        assert!(matches!(
            split_by_subject(&manifest, 0.5, 1),
            Err(DataError::TooFewSubjects(1))
        ));
        let manifest2 = Manifest::new(
            (0..4)
                .map(|s| ManifestEntry {
                    path: format!("{s}.jsonl"),
                    subject: s,
                })
                .collect(),
        );
        assert!(matches!(
            split_by_subject(&manifest2, 0.0, 1),
            Err(DataError::BadFraction(_))
        ));
        assert!(matches!(
            split_by_subject(&manifest2, 1.0, 1),
            Err(DataError::BadFraction(_))
        ));
    }

    #[test]
    fn batches_cover_all_samples_with_partial_tail() {
        let batches = batch_iter(300, 128, 9);
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![128, 128, 44]);
        let mut all: Vec<usize> = batches.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..300).collect::<Vec<usize>>());
        assert_eq!(batch_iter(300, 128, 9), batch_iter(300, 128, 9));
        assert_ne!(batch_iter(300, 128, 9), batch_iter(300, 128, 10));
    }

    #[test]
    fn nearest_frame_returns_self_target_and_earliest_tie() {
        let scan = small_scan(65);
        let j = scan.len() / 2;
        assert_eq!(nearest_frame(&scan, &scan.frames[j].pose), j);
        for view in 0..VIEW_COUNT {
            let t = scan.annotations[view] as usize;
            // The target pose IS the annotated frame's pose, so it is the
            // unique minimizer at distance zero.
            assert_eq!(nearest_frame(&scan, scan.target_pose(view)), t);
        }
        // Tie rule: two identical frames resolve to the earlier index.
        let mut tie = small_scan(66);
        let pose = tie.frames[10].pose;
        tie.frames[20].pose = pose;
        assert_eq!(nearest_frame(&tie, &pose), 10);
    }

    #[test]
    fn corpus_provider_is_deterministic_and_errors_on_missing() {
        let dir = tempfile::tempdir().unwrap();
        let scan = small_scan(67);
        let scan_path = dir.path().join("s0.jsonl");
        scan_io::write_scan(&scan, &scan_path).unwrap();
        let manifest = Manifest::new(vec![ManifestEntry {
            path: "s0.jsonl".into(),
            subject: 0,
        }]);
        let manifest_path = dir.path().join("manifest.json");
        write_manifest(&manifest, &manifest_path).unwrap();
        let corpus = Corpus::load(&manifest_path).unwrap();
        assert_eq!(corpus.dim(), 8);
        let a = corpus.lookup(scan.scan, 5).unwrap().to_vec();
        let b = corpus.lookup(scan.scan, 5).unwrap().to_vec();
        assert_eq!(a, b);
        assert!(matches!(
            corpus.lookup(scan.scan, 10_000),
            Err(EncoderError::UnknownFrame { .. })
        ));
        assert!(matches!(
            corpus.lookup(ScanId(999), 0),
            Err(EncoderError::UnknownScan(_))
        ));
    }

    #[test]
    fn head_input_carries_definitional_actions() {
        let dir = tempfile::tempdir().unwrap();
        let scan = small_scan(68);
        scan_io::write_scan(&scan, &dir.path().join("s.jsonl")).unwrap();
        write_manifest(
            &Manifest::new(vec![ManifestEntry {
                path: "s.jsonl".into(),
                subject: 0,
            }]),
            &dir.path().join("m.json"),
        )
        .unwrap();
        let corpus = Corpus::load(&dir.path().join("m.json")).unwrap();
        let cfg = BuildConfig {
            frame_stride: 41,
            ..BuildConfig::default()
        };
        let sampler = build_sampler("segmental", 128).unwrap();
        let samples = build_samples(&scan, &cfg, sampler.as_ref(), 6);
        let sample = &samples[samples.len() / 2];
        let input = build_head_input(&scan, sample, &corpus).unwrap();
        assert_eq!(input.set.anchors.len(), sample.anchors.len());
        assert_eq!(input.chain_actions.len(), sample.anchors.len() + 1);
        let current_pose = &scan.frames[sample.current as usize].pose;
        for (anchor, &idx) in input.set.anchors.iter().zip(&sample.anchors) {
            let expect = relative_action(current_pose, &scan.frames[idx as usize].pose);
            assert_eq!(anchor.action, expect);
            assert_eq!(anchor.feature, scan.frames[idx as usize].feat);
        }
        assert_eq!(input.chain_actions[0], Action6::zero());
    }

    #[test]
    fn anchor_count_is_graph_size_minus_one() {
        let scan = small_scan(69);
        let cfg = BuildConfig {
            graph_size: 8,
            frame_stride: 101,
            ..BuildConfig::default()
        };
        let sampler = build_sampler("semantic", 128).unwrap();
        for s in build_samples(&scan, &cfg, sampler.as_ref(), 7) {
            if s.pool.len() >= 7 {
                assert_eq!(s.anchors.len(), 7);
            }
        }
    }
}
