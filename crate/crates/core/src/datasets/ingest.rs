//! Reader for the group-recording interchange format.
//!
//! One directory per group holds `group.json`:
//!
//! ```json
//! {"group_id": "g01", "sample_rate": 30.0, "split": "train", "participants": ["a", "b", "c"]}
//! ```
//!
//! and one `<participant>.jsonl` per member, one record per frame:
//!
//! ```json
//! {"frame": 0, "nose_x": 1.0, "nose_y": 2.0, "nose_z": 160.0,
//!  "face_normal_x": 1.0, "face_normal_y": 0.0, "face_normal_z": 0.0,
//!  "shoulder_x": 0.0, "shoulder_y": 2.0, "shoulder_z": 140.0,
//!  "body_normal_x": 1.0, "body_normal_y": 0.0, "body_normal_z": 0.0,
//!  "speaking": 1}
//! ```
//!
//! Locations are in centimeters with `+Z` up; normals need not be unit
//! length. Frames must be consecutive and identical across participants.
//! Unknown fields are rejected.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::BEHAVIOR_DIM;
use crate::datasets::{GroupTimeline, Split};
use crate::error::{Error, Result};
use crate::geometry::{hemisphere_align, normal_to_quaternion, Quaternion};

pub const MANIFEST_FILE: &str = "group.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupManifest {
    pub group_id: String,
    pub sample_rate: f64,
    pub split: Split,
    pub participants: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFrame {
    pub frame: i64,
    pub nose_x: f64,
    pub nose_y: f64,
    pub nose_z: f64,
    pub face_normal_x: f64,
    pub face_normal_y: f64,
    pub face_normal_z: f64,
    pub shoulder_x: f64,
    pub shoulder_y: f64,
    pub shoulder_z: f64,
    pub body_normal_x: f64,
    pub body_normal_y: f64,
    pub body_normal_z: f64,
    pub speaking: f64,
}

impl RawFrame {
    fn reals(&self) -> [f64; 13] {
        [
            self.nose_x,
            self.nose_y,
            self.nose_z,
            self.face_normal_x,
            self.face_normal_y,
            self.face_normal_z,
            self.shoulder_x,
            self.shoulder_y,
            self.shoulder_z,
            self.body_normal_x,
            self.body_normal_y,
            self.body_normal_z,
            self.speaking,
        ]
    }
}

fn ingest_err(path: &Path, frame: Option<i64>, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        frame,
        message: message.into(),
    }
}

pub fn read_manifest(dir: &Path) -> Result<GroupManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: GroupManifest =
        serde_json::from_str(&text).map_err(|e| ingest_err(&path, None, e.to_string()))?;
    if !(m.sample_rate > 0.0) {
        return Err(ingest_err(&path, None, "sample_rate must be positive"));
    }
    if m.participants.is_empty() {
        return Err(ingest_err(&path, None, "no participants listed"));
    }
    Ok(m)
}

pub fn read_participant(path: &Path) -> Result<Vec<RawFrame>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames: Vec<RawFrame> = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawFrame = serde_json::from_str(&line)
            .map_err(|e| ingest_err(path, None, format!("line {}: {e}", k + 1)))?;
        if rec.reals().iter().any(|v| !v.is_finite()) {
            return Err(ingest_err(path, Some(rec.frame), "non-finite value"));
        }
        if rec.speaking != 0.0 && rec.speaking != 1.0 {
            return Err(ingest_err(
                path,
                Some(rec.frame),
                format!("speaking must be 0 or 1, got {}", rec.speaking),
            ));
        }
        if let Some(prev) = frames.last() {
            if rec.frame != prev.frame + 1 {
                return Err(ingest_err(
                    path,
                    Some(rec.frame),
                    format!("frame follows {} (frames must be consecutive)", prev.frame),
                ));
            }
        }
        frames.push(rec);
    }
    Ok(frames)
}

/// Converts one participant's raw frames to 15-dim behavior rows.
pub fn to_behavior(path: &Path, frames: &[RawFrame]) -> Result<Vec<[f64; BEHAVIOR_DIM]>> {
    let quats = |sel: fn(&RawFrame) -> [f64; 3]| -> Result<Vec<Quaternion>> {
        let raw = frames
            .iter()
            .map(|f| {
                normal_to_quaternion(sel(f))
                    .map_err(|e| ingest_err(path, Some(f.frame), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(hemisphere_align(&raw))
    };
    let head = quats(|f| [f.face_normal_x, f.face_normal_y, f.face_normal_z])?;
    let body = quats(|f| [f.body_normal_x, f.body_normal_y, f.body_normal_z])?;
    Ok(frames
        .iter()
        .zip(head.iter().zip(&body))
        .map(|(f, (h, b))| {
            let h = h.to_array();
            let b = b.to_array();
            [
                f.nose_x,
                f.nose_y,
                f.nose_z,
                h[0],
                h[1],
                h[2],
                h[3],
                f.shoulder_x,
                f.shoulder_y,
                f.shoulder_z,
                b[0],
                b[1],
                b[2],
                b[3],
                f.speaking,
            ]
        })
        .collect())
}

/// Reads one group directory. A directory without participant frames gives
/// a timeline of zero frames.
pub fn ingest_group_recording(dir: &Path) -> Result<GroupTimeline> {
    let manifest = read_manifest(dir)?;
    let mut rows: Vec<Vec<[f64; BEHAVIOR_DIM]>> = Vec::new();
    let mut first_frames: Vec<(PathBuf, Option<(i64, usize)>)> = Vec::new();
    for p in &manifest.participants {
        let path = dir.join(format!("{p}.jsonl"));
        let frames = read_participant(&path)?;
        first_frames.push((
            path.clone(),
            frames.first().map(|f| (f.frame, frames.len())),
        ));
        rows.push(to_behavior(&path, &frames)?);
    }
    let reference = first_frames[0].1;
    for (path, span) in &first_frames {
        if *span != reference {
            return Err(ingest_err(
                path,
                span.map(|s| s.0),
                format!(
                    "frames {span:?} (start, count) differ from first participant {reference:?}"
                ),
            ));
        }
    }
    let (start_frame, n_frames) = reference.unwrap_or((0, 0));
    let n = manifest.participants.len();
    let mut values = Vec::with_capacity(n_frames * n * BEHAVIOR_DIM);
    for f in 0..n_frames {
        for r in &rows {
            values.extend_from_slice(&r[f]);
        }
    }
    Ok(GroupTimeline {
        group_id: manifest.group_id,
        split: manifest.split,
        sample_rate: manifest.sample_rate,
        start_frame,
        participants: manifest.participants,
        dim: BEHAVIOR_DIM,
        n_frames,
        values,
    })
}

/// Result of reading every group directory below a root.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub timelines: Vec<GroupTimeline>,
    pub warnings: Vec<String>,
}

/// Reads every subdirectory of `root` holding a group manifest, in name
/// order. Subdirectories without a manifest are skipped with a warning.
pub fn ingest_dataset(root: &Path) -> Result<IngestReport> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut report = IngestReport::default();
    for dir in dirs {
        if !dir.join(MANIFEST_FILE).exists() {
            report
                .warnings
                .push(format!("{}: no {MANIFEST_FILE}, skipped", dir.display()));
            continue;
        }
        let tl = ingest_group_recording(&dir)?;
        if tl.n_frames == 0 {
            report.warnings.push(format!(
                "{}: group {} has no frames",
                dir.display(),
                tl.group_id
            ));
        }
        report.timelines.push(tl);
    }
    Ok(report)
}

/// Keeps every `factor`-th frame so the timeline runs at `target_rate`.
pub fn resample(tl: &GroupTimeline, target_rate: f64) -> Result<GroupTimeline> {
    let ratio = tl.sample_rate / target_rate;
    let factor = ratio.round();
    if !(factor >= 1.0) || (ratio - factor).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "group {}: recording rate {} Hz is not an integer multiple of {} Hz",
            tl.group_id, tl.sample_rate, target_rate
        )));
    }
    let factor = factor as usize;
    let n = tl.participants.len();
    let frames: Vec<usize> = (0..tl.n_frames).step_by(factor).collect();
    let mut values = Vec::with_capacity(frames.len() * n * tl.dim);
    for &f in &frames {
        for p in 0..n {
            values.extend_from_slice(tl.frame(f, p));
        }
    }
    Ok(GroupTimeline {
        sample_rate: target_rate,
        n_frames: frames.len(),
        values,
        ..tl.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(f: i64, sign: f64, speaking: f64) -> RawFrame {
        RawFrame {
            frame: f,
            nose_x: 0.0,
            nose_y: 0.0,
            nose_z: 160.0,
            face_normal_x: 1.0,
            face_normal_y: 0.0,
            face_normal_z: 0.0,
            shoulder_x: 0.0,
            shoulder_y: 0.0,
            shoulder_z: 140.0,
            body_normal_x: 0.0,
            body_normal_y: sign,
            body_normal_z: 0.0,
            speaking,
        }
    }

    #[test]
    fn reference_normal_gives_identity() {
        let rows = to_behavior(Path::new("x"), &[frame(0, 1.0, 1.0)]).unwrap();
        assert_eq!(&rows[0][3..7], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rows[0][14], 1.0);
    }

    #[test]
    fn zero_normal_is_located() {
        let mut f = frame(7, 1.0, 0.0);
        f.face_normal_x = 0.0;
        match to_behavior(Path::new("p.jsonl"), &[f]) {
            Err(Error::Ingestion { frame, .. }) => assert_eq!(frame, Some(7)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
