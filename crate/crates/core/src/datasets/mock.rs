//! Scripted multi-person data: conversation-like groups written in the
//! interchange format, and a small coupled-agents forecasting task.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::datasets::ingest::{GroupManifest, RawFrame, MANIFEST_FILE};
use crate::datasets::{Sample, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub train_groups: usize,
    pub test_groups: usize,
    pub participants: usize,
    pub seconds: f64,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            train_groups: 3,
            test_groups: 1,
            participants: 3,
            seconds: 60.0,
            sample_rate: 10.0,
            seed: 0,
        }
    }
}

fn yaw_to(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Frames of one scripted group: members stand in a circle, take turns
/// speaking, and listeners turn their heads towards the speaker with a lag.
pub fn scripted_group(
    n: usize,
    frames: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<RawFrame>> {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let radius = 80.0;
    let base: Vec<f64> = (0..n)
        .map(|k| TAU * k as f64 / n as f64 + rng.random_range(-0.2..0.2))
        .collect();
    let home: Vec<[f64; 2]> = base
        .iter()
        .map(|a| [radius * a.cos(), radius * a.sin()])
        .collect();
    let sway_phase: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    let mut speaker = rng.random_range(0..n);
    let mut turn_left = (rng.random_range(2.0..6.0) * rate) as usize;
    let mut addressee = (speaker + 1) % n;
    let mut head_yaw: Vec<f64> = (0..n).map(|k| yaw_to(home[k], [0.0, 0.0])).collect();
    let mut out: Vec<Vec<RawFrame>> = vec![Vec::with_capacity(frames); n];
    for f in 0..frames {
        let t = f as f64 / rate;
        if turn_left == 0 {
            let next = (speaker + rng.random_range(1..n.max(2))) % n;
            speaker = if n > 1 { next } else { 0 };
            turn_left = (rng.random_range(2.0..6.0) * rate) as usize;
        }
        turn_left -= 1;
        if n > 1 && f % (rate * 1.5).max(1.0) as usize == 0 {
            addressee = (speaker + rng.random_range(1..n)) % n;
        }
        let pos: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let s = 3.0 * (0.3 * t + sway_phase[k]).sin();
                [
                    home[k][0] + s * base[k].cos(),
                    home[k][1] + s * base[k].sin(),
                ]
            })
            .collect();
        for k in 0..n {
            let look = if n == 1 {
                yaw_to(pos[k], [0.0, 0.0])
            } else if k == speaker {
                yaw_to(pos[k], pos[addressee])
            } else {
                yaw_to(pos[k], pos[speaker])
            };
            head_yaw[k] += 0.2 * wrap(look - head_yaw[k]) + 0.01 * noise.sample(rng);
            let pitch = 0.05 * noise.sample(rng);
            let body_yaw = yaw_to(pos[k], [0.0, 0.0]) + 0.15 * (0.2 * t + sway_phase[k]).sin();
            let (hy, by) = (head_yaw[k], body_yaw);
            out[k].push(RawFrame {
                frame: f as i64,
                nose_x: pos[k][0] + 10.0 * hy.cos() + 0.3 * noise.sample(rng),
                nose_y: pos[k][1] + 10.0 * hy.sin() + 0.3 * noise.sample(rng),
                nose_z: 160.0 + 0.5 * noise.sample(rng),
                face_normal_x: hy.cos() * pitch.cos(),
                face_normal_y: hy.sin() * pitch.cos(),
                face_normal_z: pitch.sin(),
                shoulder_x: pos[k][0] + 0.3 * noise.sample(rng),
                shoulder_y: pos[k][1] + 0.3 * noise.sample(rng),
                shoulder_z: 140.0 + 0.5 * noise.sample(rng),
                body_normal_x: by.cos(),
                body_normal_y: by.sin(),
                body_normal_z: 0.0,
                speaking: if k == speaker { 1.0 } else { 0.0 },
            });
        }
    }
    out
}

fn write_group(dir: &Path, manifest: &GroupManifest, frames: &[Vec<RawFrame>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mpath = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::ser(&mpath, e))?;
    fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
    for (p, rows) in manifest.participants.iter().zip(frames) {
        let path = dir.join(format!("{p}.jsonl"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for r in rows {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::ser(&path, e))?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes scripted groups in the interchange format under `root`.
pub fn write_mock_dataset(root: &Path, cfg: &MockConfig) -> Result<Vec<String>> {
    if cfg.participants == 0 || !(cfg.sample_rate > 0.0) || !(cfg.seconds > 0.0) {
        return Err(Error::Config(
            "mock data needs participants, a positive rate and duration".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frames = (cfg.seconds * cfg.sample_rate).round() as usize;
    let mut ids = Vec::new();
    for g in 0..cfg.train_groups + cfg.test_groups {
        let split = if g < cfg.train_groups {
            Split::Train
        } else {
            Split::Test
        };
        let id = format!("group{:03}", g + 1);
        let manifest = GroupManifest {
            group_id: id.clone(),
            sample_rate: cfg.sample_rate,
            split,
            participants: (0..cfg.participants)
                .map(|p| format!("p{}", p + 1))
                .collect(),
        };
        let data = scripted_group(cfg.participants, frames, cfg.sample_rate, &mut rng);
        write_group(&root.join(&id), &manifest, &data)?;
        ids.push(id);
    }
    Ok(ids)
}

/// Three-person 1-d task where two followers repeat a leader's trajectory
/// `lag` steps later. A follower's near future is fixed by the leader's
/// recent past, so it is predictable only with access to partners.
pub fn coupled_agents(
    n_samples: usize,
    obs_len: usize,
    fut_len: usize,
    lag: usize,
    seed: u64,
    group_id: &str,
) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let total = obs_len + fut_len;
    (0..n_samples)
        .map(|id| {
            let len = total + lag;
            let mut lead = Vec::with_capacity(len);
            let (mut x, mut v): (f64, f64) =
                (rng.random_range(-0.5..0.5), rng.random_range(-0.1..0.1));
            for _ in 0..len {
                v = 0.8 * v + 0.08 * noise.sample(&mut rng);
                x = (x + v).clamp(-1.5, 1.5);
                lead.push(x);
            }
            let leader = rng.random_range(0..3);
            let mut observed = Vec::with_capacity(3 * obs_len);
            let mut future = Vec::with_capacity(3 * fut_len);
            for p in 0..3 {
                let series: Vec<f64> = (0..total)
                    .map(|t| {
                        if p == leader {
                            lead[t + lag]
                        } else {
                            lead[t] + 0.02 * noise.sample(&mut rng)
                        }
                    })
                    .collect();
                observed.extend_from_slice(&series[..obs_len]);
                future.extend_from_slice(&series[obs_len..]);
            }
            Sample {
                id,
                group_id: group_id.into(),
                obs_start: id as i64,
                offset: 1,
                n_participants: 3,
                obs_len,
                fut_len,
                dim: 1,
                group_frames: total,
                observed,
                future,
            }
        })
        .collect()
}
