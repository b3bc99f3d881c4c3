#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use social_processes::data::{BehaviorVector, SampleTensor};
use social_processes::geometry::{Pose, Quaternion};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_quat(r: &mut ChaCha8Rng) -> Quaternion {
    loop {
        let q = Quaternion::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        if q.norm() > 0.1 {
            return q.normalized().unwrap();
        }
    }
}

pub fn behavior_step(r: &mut ChaCha8Rng) -> [f64; 15] {
    let loc = |r: &mut ChaCha8Rng| {
        [
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(-0.5..0.5),
        ]
    };
    BehaviorVector {
        head: Pose::new(loc(r), unit_quat(r)),
        body: Pose::new(loc(r), unit_quat(r)),
        speaking: if r.random_bool(0.5) { 1.0 } else { 0.0 },
    }
    .flatten()
}

/// Random block of `n_samples` groups of `n` people.
pub fn random_block(
    r: &mut ChaCha8Rng,
    n_samples: usize,
    n: usize,
    obs_len: usize,
    fut_len: usize,
    dim: usize,
) -> SampleTensor {
    let mut x = SampleTensor::empty(n, obs_len, fut_len, dim);
    let step = |r: &mut ChaCha8Rng| -> Vec<f64> {
        if dim == 15 {
            behavior_step(r).to_vec()
        } else {
            (0..dim).map(|_| r.random_range(-1.5..1.5)).collect()
        }
    };
    for _ in 0..n_samples {
        for _ in 0..n * obs_len {
            let v = step(r);
            x.observed.extend(v);
        }
        for _ in 0..n * fut_len {
            let v = step(r);
            x.future.extend(v);
        }
        x.offsets.push(r.random_range(1..6));
        x.n_samples += 1;
    }
    x
}
