mod common;

use proptest::prelude::*;

use social_processes::data::{BehaviorVector, SampleTensor};
use social_processes::encoders::{encode_offset, SocialEncoder};
use social_processes::geometry::{hamilton_product, hemisphere_align, Quaternion};
use social_processes::models::{
    AttentionKind, EncoderKind, FeatureLayout, ForwardOptions, ModelConfig, Paths, ProcessModel,
};
use social_processes::nn::{ParamBuilder, ParamStore, Tape};
use social_processes::training::loss::kl_divergence;

use common::{random_block, rng, unit_quat};

fn encoder(kind: EncoderKind, pool_last_only: bool) -> (ParamStore, SocialEncoder) {
    let mut cfg = ModelConfig::tiny_social(kind, FeatureLayout::Behavior, 15);
    cfg.pool_last_only = pool_last_only;
    let mut store = ParamStore::new();
    let mut r = rng(3);
    let enc = SocialEncoder::new(&mut ParamBuilder::new(&mut store, &mut r), &cfg);
    (store, enc)
}

fn rows(t: &Tape, v: social_processes::nn::Var) -> Vec<Vec<f64>> {
    t.value(v).rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Copies participant `src` of every sample into an extra last participant.
fn with_duplicate(x: &SampleTensor, src: usize) -> SampleTensor {
    let n = x.n_participants;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.push(src);
    let mut out = SampleTensor::empty(n + 1, x.obs_len, x.fut_len, x.dim);
    for s in 0..x.n_samples {
        for &p in &perm {
            for t in 0..x.obs_len {
                out.observed.extend_from_slice(x.obs_at(s, p, t));
            }
        }
        for &p in &perm {
            for t in 0..x.fut_len {
                out.future.extend_from_slice(x.fut_at(s, p, t));
            }
        }
        out.offsets.push(x.offsets[s]);
        out.n_samples += 1;
    }
    out
}

#[test]
fn partner_pooling_is_permutation_invariant() {
    for kind in [EncoderKind::Gru, EncoderKind::Mlp] {
        for last_only in [false, true] {
            let (store, enc) = encoder(kind, last_only);
            let x = random_block(&mut rng(1), 3, 4, 3, 2, 15);
            let perm = [2, 0, 3, 1];
            let y = x.permute_participants(&perm);

            let mut t = Tape::new(&store);
            let a = enc.forward(&mut t, &x).unwrap();
            let b = enc.forward(&mut t, &y).unwrap();
            let (ea, eb) = (rows(&t, a.e), rows(&t, b.e));
            for s in 0..3 {
                for (new_i, &old_i) in perm.iter().enumerate() {
                    assert_eq!(
                        eb[s * 4 + new_i],
                        ea[s * 4 + old_i],
                        "{kind:?} last_only={last_only}"
                    );
                }
            }
        }
    }
}

#[test]
fn partner_pooling_ignores_duplicate_partners() {
    let (store, enc) = encoder(EncoderKind::Gru, false);
    let x = random_block(&mut rng(2), 2, 3, 3, 2, 15);
    let y = with_duplicate(&x, 2);
    let mut t = Tape::new(&store);
    let a = enc.forward(&mut t, &x).unwrap();
    let b = enc.forward(&mut t, &y).unwrap();
    let (pa, pb) = (rows(&t, a.e_partner), rows(&t, b.e_partner));
    for s in 0..2 {
        // participants 0 and 1 see partner 2 once or twice
        for i in 0..2 {
            assert_eq!(pb[s * 4 + i], pa[s * 3 + i]);
        }
    }
}

fn model(paths: Paths, attention: AttentionKind, kind: EncoderKind) -> ProcessModel {
    let mut cfg = ModelConfig::tiny_social(kind, FeatureLayout::Behavior, 15);
    cfg.paths = paths;
    cfg.attention = attention;
    ProcessModel::new(cfg, 11).unwrap()
}

#[test]
fn context_permutation_leaves_both_paths_unchanged() {
    let x = random_block(&mut rng(4), 6, 3, 3, 2, 15);
    let target = random_block(&mut rng(5), 2, 3, 3, 2, 15);
    let perm = [4, 1, 5, 0, 3, 2];
    let shuffled = x.select(&perm);
    for attention in [
        AttentionKind::None,
        AttentionKind::Dot,
        AttentionKind::Multihead,
    ] {
        for kind in [EncoderKind::Gru, EncoderKind::Mlp] {
            let m = model(Paths::LatentDet, attention, kind);
            let run = |c: &SampleTensor| {
                let mut t = Tape::new(&m.params);
                let out = m
                    .forward(&mut t, c, &target, &ForwardOptions::inference())
                    .unwrap();
                let r = out.r.map(|r| t.value(r).clone());
                (
                    t.value(out.prior.mean).clone(),
                    t.value(out.prior.std).clone(),
                    r,
                    t.value(out.mean).clone(),
                    t.value(out.std).clone(),
                )
            };
            assert_eq!(run(&x), run(&shuffled), "{attention:?} {kind:?}");
        }
    }
}

#[test]
fn kl_vanishes_when_context_equals_targets() {
    for kind in [EncoderKind::Gru, EncoderKind::Mlp] {
        let m = model(Paths::LatentDet, AttentionKind::None, kind);
        let x = random_block(&mut rng(6), 5, 3, 3, 2, 15);
        let mut t = Tape::new(&m.params);
        let opts = ForwardOptions::training(vec![0.3; 4], false);
        let out = m.forward(&mut t, &x, &x, &opts).unwrap();
        let q = out.posterior.unwrap();
        let kl = kl_divergence(&mut t, q, out.prior).unwrap();
        assert_eq!(t.scalar(kl), 0.0, "{kind:?}");
    }
}

#[test]
fn empty_context_gives_standard_normal_prior() {
    let m = model(Paths::LatentDet, AttentionKind::Multihead, EncoderKind::Gru);
    let target = random_block(&mut rng(7), 2, 3, 3, 2, 15);
    let empty = SampleTensor::empty(3, 3, 2, 15);
    let mut t = Tape::new(&m.params);
    let out = m
        .forward(&mut t, &empty, &target, &ForwardOptions::inference())
        .unwrap();
    assert!(t.value(out.prior.mean).iter().all(|&v| v == 0.0));
    assert!(t.value(out.prior.std).iter().all(|&v| v == 1.0));
    assert_eq!(t.value(out.prior.mean).len(), 4);
}

#[test]
fn offset_encoding_at_zero_gap() {
    for dim in [2, 8, 64] {
        let oe = encode_offset(0, dim).unwrap();
        for (k, v) in oe.iter().enumerate() {
            assert_eq!(*v, if k % 2 == 0 { 0.0 } else { 1.0 });
        }
    }
    assert!(encode_offset(0, 5).is_err());
}

/// Rotation matrix from a unit quaternion, standard closed form.
fn matrix(q: Quaternion) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q.to_array();
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Rodrigues' formula for a rotation of `angle` about unit `axis`.
fn rodrigues(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = axis;
    let (s, c) = angle.sin_cos();
    let k = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let kk: f64 = (0..3).map(|m| k[i][m] * k[m][j]).sum();
            r[i][j] = if i == j { 1.0 } else { 0.0 } + s * k[i][j] + (1.0 - c) * kk;
        }
    }
    r
}

fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|m| a[i][m] * b[m][j]).sum();
        }
    }
    r
}

fn assert_mat_close(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) {
    for i in 0..3 {
        for j in 0..3 {
            assert!((a[i][j] - b[i][j]).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn quaternion_algebra_matches_rotation_matrices() {
    let mut r = rng(8);
    for _ in 0..200 {
        let axis = {
            let q = unit_quat(&mut r);
            let n = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
            [q.x / n, q.y / n, q.z / n]
        };
        let angle = rand::Rng::random_range(&mut r, -3.0..3.0);
        let q = Quaternion::from_axis_angle(axis, angle).unwrap();
        assert_mat_close(matrix(q), rodrigues(axis, angle));

        let (a, b) = (unit_quat(&mut r), unit_quat(&mut r));
        assert_mat_close(
            matrix(hamilton_product(a, b)),
            mat_mul(matrix(a), matrix(b)),
        );

        let v = [0.3, -1.2, 0.7];
        let rotated = a.rotate(v);
        let m = matrix(a);
        for i in 0..3 {
            let expect: f64 = (0..3).map(|j| m[i][j] * v[j]).sum();
            assert!((rotated[i] - expect).abs() < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn hemisphere_alignment_makes_consecutive_dots_non_negative(
        raw in prop::collection::vec((prop::array::uniform4(-1.0f64..1.0), any::<bool>()), 1..40)
    ) {
        let seq: Vec<Quaternion> = raw
            .iter()
            .filter_map(|(a, flip)| {
                let q = Quaternion::from_array(*a).normalized().ok()?;
                Some(if *flip { -q } else { q })
            })
            .collect();
        let aligned = hemisphere_align(&seq);
        prop_assert_eq!(aligned.len(), seq.len());
        for (a, q) in aligned.iter().zip(&seq) {
            prop_assert!(*a == *q || *a == -*q);
        }
        for w in aligned.windows(2) {
            prop_assert!(w[0].dot(w[1]) >= 0.0);
        }
    }

    #[test]
    fn flatten_round_trips(v in prop::array::uniform15(-100.0f64..100.0)) {
        let b = BehaviorVector::unflatten(&v).unwrap();
        prop_assert_eq!(b.flatten(), v);
    }
}

#[test]
fn unflatten_rejects_wrong_length() {
    assert!(BehaviorVector::unflatten(&[0.0; 14]).is_err());
}
