//! Versioned line-delimited dataset files.
//!
//! The first line is a header record; the remaining lines are group
//! timelines and window indices, or synthetic sequences.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::glancing::GlancingSequence;
use crate::datasets::{
    GroupTimeline, Sample, Split, Standardization, WindowIndex, WindowingConfig,
};
use crate::error::{Error, Result};
use crate::models::FeatureLayout;

/// Version of the on-disk sample layout; checkpoints record it too.
pub const LAYOUT_VERSION: u32 = 1;
pub const FORMAT: &str = "social-processes-dataset";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Glancing,
    Windows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreHeader {
    pub format: String,
    pub layout_version: u32,
    pub kind: DatasetKind,
    pub layout: FeatureLayout,
    pub dim: usize,
    #[serde(default)]
    pub windowing: Option<WindowingConfig>,
    /// Statistics the stored values were standardized with.
    #[serde(default)]
    pub standardization: Option<Standardization>,
    /// Where the statistics came from (e.g. which split).
    #[serde(default)]
    pub stats_source: Option<String>,
    #[serde(default)]
    pub phase_step: Option<f64>,
    #[serde(default)]
    pub eval_context_seed: Option<u64>,
    /// Phase indices whose sequences form the fixed evaluation context.
    #[serde(default)]
    pub eval_context_phases: Option<Vec<usize>>,
}

impl StoreHeader {
    pub fn new(kind: DatasetKind, layout: FeatureLayout, dim: usize) -> Self {
        Self {
            format: FORMAT.into(),
            layout_version: LAYOUT_VERSION,
            kind,
            layout,
            dim,
            windowing: None,
            standardization: None,
            stats_source: None,
            phase_step: None,
            eval_context_seed: None,
            eval_context_phases: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(StoreHeader),
    Timeline(GroupTimeline),
    Window {
        timeline: usize,
        obs_start: usize,
        obs_len: usize,
        fut_start: usize,
        fut_len: usize,
    },
    Sequence(GlancingSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: StoreHeader,
    pub timelines: Vec<GroupTimeline>,
    /// `(timeline index, window)`.
    pub windows: Vec<(usize, WindowIndex)>,
    pub sequences: Vec<GlancingSequence>,
}

impl Dataset {
    pub fn glancing(sequences: Vec<GlancingSequence>) -> Self {
        Self {
            header: StoreHeader::new(DatasetKind::Glancing, FeatureLayout::Generic, 1),
            timelines: Vec::new(),
            windows: Vec::new(),
            sequences,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |r: &Record| -> Result<()> {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::ser(path, e))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))
        };
        put(&Record::Header(self.header.clone()))?;
        for t in &self.timelines {
            put(&Record::Timeline(t.clone()))?;
        }
        for (ti, wi) in &self.windows {
            put(&Record::Window {
                timeline: *ti,
                obs_start: wi.obs_start,
                obs_len: wi.obs_len,
                fut_start: wi.fut_start,
                fut_len: wi.fut_len,
            })?;
        }
        for s in &self.sequences {
            put(&Record::Sequence(s.clone()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let parse = |line: std::io::Result<String>, k: usize| -> Result<Record> {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::ser(path, format!("line {k}: {e}")))
        };
        let header = match lines.next() {
            Some(l) => match parse(l, 1)? {
                Record::Header(h) => h,
                _ => return Err(Error::ser(path, "first record is not a header")),
            },
            None => return Err(Error::ser(path, "empty dataset file")),
        };
        if header.format != FORMAT {
            return Err(Error::ser(
                path,
                format!("unknown format `{}`", header.format),
            ));
        }
        if header.layout_version != LAYOUT_VERSION {
            return Err(Error::LayoutVersion {
                expected: LAYOUT_VERSION,
                found: header.layout_version,
            });
        }
        let mut ds = Dataset {
            header,
            timelines: Vec::new(),
            windows: Vec::new(),
            sequences: Vec::new(),
        };
        for (k, line) in lines.enumerate() {
            match parse(line, k + 2)? {
                Record::Header(_) => {
                    return Err(Error::ser(path, format!("line {}: second header", k + 2)))
                }
                Record::Timeline(t) => ds.timelines.push(t),
                Record::Window {
                    timeline,
                    obs_start,
                    obs_len,
                    fut_start,
                    fut_len,
                } => {
                    let tl = ds.timelines.get(timeline).ok_or_else(|| {
                        Error::ser(path, format!("line {}: unknown timeline {timeline}", k + 2))
                    })?;
                    if fut_start + fut_len > tl.n_frames || obs_start + obs_len > fut_start {
                        return Err(Error::ser(
                            path,
                            format!("line {}: window outside timeline", k + 2),
                        ));
                    }
                    ds.windows.push((
                        timeline,
                        WindowIndex {
                            obs_start,
                            obs_len,
                            fut_start,
                            fut_len,
                        },
                    ))
                }
                Record::Sequence(s) => ds.sequences.push(s),
            }
        }
        Ok(ds)
    }

    /// Model-ready samples, optionally restricted to one split.
    pub fn samples(&self, split: Option<Split>) -> Vec<Sample> {
        let mut out = Vec::new();
        for s in &self.sequences {
            let id = out.len();
            out.push(s.to_sample(id));
        }
        for (ti, w) in &self.windows {
            let tl = &self.timelines[*ti];
            if split.is_some_and(|s| s != tl.split) {
                continue;
            }
            let id = out.len();
            out.push(tl.sample(id, w));
        }
        out
    }
}
