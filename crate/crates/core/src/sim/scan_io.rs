//! Scan file format: UTF-8 JSON lines.
//!
//! Line 1 is a header object
//! `{"format":"ustar-scan/1","subject":..,"scan":..,"C":..,"annotations":{"0":t,..,"9":t}}`;
//! every following line is one frame
//! `{"t":..,"pos_mm":[..],"rot_deg":[..],"feat":[..],"viewdist":[..]}`.
//! Floats are printed with shortest round-trip-exact precision, so a
//! write/read/write cycle is byte-identical.

use super::{Frame, ScanTrajectory, SimError};
use crate::encoders::ScanId;
use crate::pose::Pose6;
use crate::sampling::{ViewDistribution, VIEW_COUNT};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const SCAN_FORMAT: &str = "ustar-scan/1";

#[derive(Serialize, Deserialize)]
struct RawHeader {
    format: String,
    subject: u32,
    scan: u64,
    #[serde(rename = "C")]
    c: usize,
    annotations: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    t: u32,
    pos_mm: [f64; 3],
    rot_deg: [f64; 3],
    feat: Vec<f64>,
    viewdist: Vec<f64>,
}

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> SimError {
    SimError::Malformed {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn write_scan(traj: &ScanTrajectory, path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = RawHeader {
        format: SCAN_FORMAT.to_string(),
        subject: traj.subject,
        scan: traj.scan.0,
        c: traj.feature_dim,
        annotations: traj
            .annotations
            .iter()
            .enumerate()
            .map(|(k, &t)| (k.to_string(), t))
            .collect(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| io_err(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    for f in &traj.frames {
        let raw = RawFrame {
            t: f.t,
            pos_mm: f.pose.pos,
            rot_deg: f.pose.rot,
            feat: f.feat.clone(),
            viewdist: f.viewdist.values().to_vec(),
        };
        serde_json::to_writer(&mut w, &raw).map_err(|e| io_err(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_scan(path: &Path) -> Result<ScanTrajectory, SimError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file"))?;
    let header_line = header_line.map_err(|e| io_err(path, e))?;
    let header: RawHeader = serde_json::from_str(&header_line)
        .map_err(|e| malformed(path, 1, format!("bad header: {e}")))?;
    if header.format != SCAN_FORMAT {
        return Err(malformed(
            path,
            1,
            format!("unsupported format {:?}", header.format),
        ));
    }
    let mut annotations = [u32::MAX; VIEW_COUNT];
    for (key, &t) in &header.annotations {
        let view: usize = key
            .parse()
            .map_err(|_| malformed(path, 1, format!("bad annotation key {key:?}")))?;
        if view >= VIEW_COUNT {
            return Err(malformed(path, 1, format!("annotation view {view} out of range")));
        }
        annotations[view] = t;
    }
    if annotations.contains(&u32::MAX) {
        return Err(malformed(path, 1, "annotations must cover views 0..=9"));
    }

    let mut frames: Vec<Frame> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawFrame = serde_json::from_str(&line)
            .map_err(|e| malformed(path, line_no, format!("bad frame: {e}")))?;
        if raw.feat.len() != header.c {
            return Err(malformed(
                path,
                line_no,
                format!("feature length {} != C={}", raw.feat.len(), header.c),
            ));
        }
        if raw.t as usize != frames.len() {
            return Err(malformed(
                path,
                line_no,
                format!("timestamp {} breaks the 0..n sequence", raw.t),
            ));
        }
        let viewdist = ViewDistribution::from_slice(&raw.viewdist)
            .map_err(|e| malformed(path, line_no, format!("bad view distribution: {e}")))?;
        let pose = Pose6 {
            pos: raw.pos_mm,
            rot: raw.rot_deg,
        };
        if !pose.is_finite() {
            return Err(malformed(path, line_no, "non-finite pose"));
        }
        frames.push(Frame {
            t: raw.t,
            pose,
            feat: raw.feat,
            viewdist,
        });
    }
    for (view, &t) in annotations.iter().enumerate() {
        if t as usize >= frames.len() {
            return Err(malformed(
                path,
                1,
                format!("annotation for view {view} points past frame {t}"),
            ));
        }
    }
    Ok(ScanTrajectory {
        subject: header.subject,
        scan: ScanId(header.scan),
        feature_dim: header.c,
        frames,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_anatomy, generate_trajectory, SimConfig};

    fn small_config() -> SimConfig {
        SimConfig {
            feature_dim: 8,
            fourier_dim: 8,
            ..SimConfig::default()
        }
    }

    #[test]
    fn write_read_round_trip_preserves_structure() {
        let config = small_config();
        let a = generate_anatomy(50, 0, &config).unwrap();
        let traj = generate_trajectory(&a, &config, 123, ScanId(9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.jsonl");
        write_scan(&traj, &path).unwrap();
        let back = read_scan(&path).unwrap();
        assert_eq!(back.subject, traj.subject);
        assert_eq!(back.scan, traj.scan);
        assert_eq!(back.annotations, traj.annotations);
        assert_eq!(back.len(), traj.len());
        for (a, b) in traj.frames.iter().zip(&back.frames) {
            assert_eq!(a.pose, b.pose);
            assert_eq!(a.feat, b.feat);
            assert_eq!(a.viewdist, b.viewdist);
        }
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let config = small_config();
        let a = generate_anatomy(51, 1, &config).unwrap();
        let traj = generate_trajectory(&a, &config, 321, ScanId(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        write_scan(&traj, &p1).unwrap();
        let back = read_scan(&p1).unwrap();
        write_scan(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupt_frame_line_reports_line_number() {
        let config = small_config();
        let a = generate_anatomy(52, 2, &config).unwrap();
        let traj = generate_trajectory(&a, &config, 11, ScanId(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.jsonl");
        write_scan(&traj, &path).unwrap();
        // Truncate the feature array on line 5 (frame 4).
        let content = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = content.lines().map(str::to_string).collect();
        lines[4] = lines[4].replacen("\"feat\":[", "\"feat\":[9.9,", 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_scan(&path) {
            Err(SimError::Malformed { line, message, .. }) => {
                assert_eq!(line, 5, "{message}");
                assert!(message.contains("feature length"), "{message}");
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn missing_annotation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.jsonl");
        std::fs::write(
            &path,
            r#"{"format":"ustar-scan/1","subject":0,"scan":0,"C":2,"annotations":{"0":0}}"#,
        )
        .unwrap();
        assert!(matches!(
            read_scan(&path),
            Err(SimError::Malformed { line: 1, .. })
        ));
    }
}
