//! Quaternion algebra and the pose transforms used for partner-relative cues
//! and orientation preprocessing.
//!
//! Quaternions are stored scalar-first, `(w, x, y, z)`. The vertical axis is
//! `+Z` and the orientation reference direction is `+X` in the ground plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as degenerate rather than renormalized.
pub const MIN_NORM: f64 = 1e-9;

/// Direction that maps to the identity orientation.
pub const REFERENCE_DIRECTION: [f64; 3] = [1.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about the (not necessarily unit) `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = norm3(axis);
        if n < MIN_NORM {
            return Err(Error::InvalidQuaternion("zero rotation axis".into()));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Self::new(
            c,
            s * axis[0] / n,
            s * axis[1] / n,
            s * axis[2] / n,
        ))
    }

    pub fn dot(self, other: Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if !(n >= MIN_NORM) {
            return Err(Error::InvalidQuaternion(format!(
                "norm {n:e} below {MIN_NORM:e}"
            )));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Rotates `v` by this quaternion, assumed unit.
    pub fn rotate(self, v: [f64; 3]) -> [f64; 3] {
        let p = Quaternion::new(0.0, v[0], v[1], v[2]);
        let r = hamilton_product(hamilton_product(self, p), self.conjugate());
        [r.x, r.y, r.z]
    }

    /// Canonical sign: non-negative `w`, ties broken by `x`, then `y`, then `z`.
    pub fn canonical_sign(self) -> Self {
        for c in self.to_array() {
            if c > 0.0 {
                return self;
            }
            if c < 0.0 {
                return -self;
            }
        }
        self
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        hamilton_product(self, rhs)
    }
}

/// A keypoint location (centimeters) with an orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub location: [f64; 3],
    pub orientation: Quaternion,
}

impl Pose {
    pub fn new(location: [f64; 3], orientation: Quaternion) -> Self {
        Self {
            location,
            orientation,
        }
    }
}

/// One partner's pose and speaking status expressed relative to the focal
/// participant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeCue {
    pub q_rel: Quaternion,
    pub l_rel: [f64; 3],
    pub s_rel: i8,
}

pub fn hamilton_product(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion {
        w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    }
}

/// Multiplicative inverse `conj(q) / |q|^2`.
pub fn quat_inverse(q: Quaternion) -> Result<Quaternion> {
    let n2 = q.norm_squared();
    if !(n2.sqrt() > MIN_NORM) {
        return Err(Error::InvalidQuaternion(format!(
            "cannot invert quaternion with norm {:e}",
            n2.sqrt()
        )));
    }
    Ok(q.conjugate().scale(1.0 / n2))
}

/// Partner pose and speaking status in the focal participant's frame:
/// `q_rel = q_i * q_j^-1`, `l_rel = l_j - l_i`, `s_rel = s_j - s_i`.
pub fn relative_cue(
    focal: &Pose,
    focal_speaking: bool,
    partner: &Pose,
    partner_speaking: bool,
) -> Result<RelativeCue> {
    let q_rel = hamilton_product(focal.orientation, quat_inverse(partner.orientation)?);
    let l_rel = [
        partner.location[0] - focal.location[0],
        partner.location[1] - focal.location[1],
        partner.location[2] - focal.location[2],
    ];
    Ok(RelativeCue {
        q_rel,
        l_rel,
        s_rel: partner_speaking as i8 - focal_speaking as i8,
    })
}

/// Shortest-arc rotation taking [`REFERENCE_DIRECTION`] onto `normal`.
///
/// Horizontal normals yield a rotation about the vertical axis; an exactly
/// opposite normal yields a half turn about `+Z`.
pub fn normal_to_quaternion(normal: [f64; 3]) -> Result<Quaternion> {
    let n = norm3(normal);
    if !(n > MIN_NORM) || !normal.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidOrientation(format!(
            "normal {normal:?} has norm {n:e}"
        )));
    }
    let b = [normal[0] / n, normal[1] / n, normal[2] / n];
    let a = REFERENCE_DIRECTION;
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    if 1.0 + d < 1e-12 {
        return Ok(Quaternion::new(0.0, 0.0, 0.0, 1.0));
    }
    let c = cross3(a, b);
    Quaternion::new(1.0 + d, c[0], c[1], c[2]).normalized()
}

/// Removes sign flips along a quaternion stream so that consecutive
/// entries lie in the same hemisphere.
pub fn hemisphere_align(seq: &[Quaternion]) -> Vec<Quaternion> {
    let mut out = Vec::with_capacity(seq.len());
    let mut prev: Option<Quaternion> = None;
    for &q in seq {
        let next = match prev {
            None => q.canonical_sign(),
            Some(p) if p.dot(q) < 0.0 => -q,
            Some(_) => q,
        };
        out.push(next);
        prev = Some(next);
    }
    out
}

/// Rotation angle between two orientations in degrees, in `[0, 180]`.
pub fn geodesic_angle_deg(a: Quaternion, b: Quaternion) -> Result<f64> {
    let d = a.normalized()?.dot(b.normalized()?).abs().min(1.0);
    Ok((2.0 * d.acos()).to_degrees())
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Mat3 = [[f64; 3]; 3];

    // Test oracle: rotation matrix of a unit quaternion.
    fn rotation_matrix(q: Quaternion) -> Mat3 {
        let q = q.normalized().unwrap();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
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

    fn matmul(a: Mat3, b: Mat3) -> Mat3 {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    }

    fn transpose(a: Mat3) -> Mat3 {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = a[j][i];
            }
        }
        t
    }

    fn max_abs_diff(a: Mat3, b: Mat3) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Quaternion {
        loop {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() > 0.1 {
                return q.normalized().unwrap();
            }
        }
    }

    fn approx_q(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        a.to_array()
            .iter()
            .zip(b.to_array())
            .all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hamilton_identity_and_k_squared() {
        let q = Quaternion::new(0.3, -0.2, 0.5, 0.1);
        assert_eq!(hamilton_product(Quaternion::IDENTITY, q), q);
        let k = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(hamilton_product(k, k), Quaternion::new(-1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn hamilton_matches_rotation_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let lhs = rotation_matrix(hamilton_product(a, b));
            let rhs = matmul(rotation_matrix(a), rotation_matrix(b));
            assert!(max_abs_diff(lhs, rhs) < 1e-6);
        }
    }

    #[test]
    fn hamilton_norm_is_multiplicative_and_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_unit(&mut rng).scale(rng.random_range(0.5..2.0));
            let b = random_unit(&mut rng).scale(rng.random_range(0.5..2.0));
            let c = random_unit(&mut rng);
            let ab = hamilton_product(a, b);
            assert!((ab.norm() - a.norm() * b.norm()).abs() < 1e-9);
            let l = hamilton_product(ab, c);
            let r = hamilton_product(a, hamilton_product(b, c));
            assert!(approx_q(l, r, 1e-6));
        }
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(
            quat_inverse(Quaternion::IDENTITY).unwrap(),
            Quaternion::IDENTITY
        );
        let two = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        let inv = quat_inverse(two).unwrap();
        assert!(approx_q(inv, Quaternion::new(0.5, 0.0, 0.0, 0.0), 1e-15));
        assert!(approx_q(
            hamilton_product(two, inv),
            Quaternion::IDENTITY,
            1e-12
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_unit(&mut rng);
            let inv = quat_inverse(q).unwrap();
            assert!(approx_q(inv, q.conjugate(), 1e-12));
            assert!(approx_q(
                hamilton_product(q, inv),
                Quaternion::IDENTITY,
                1e-6
            ));
        }
        assert!(matches!(
            quat_inverse(Quaternion::new(0.0, 1e-12, 0.0, 0.0)),
            Err(Error::InvalidQuaternion(_))
        ));
    }

    #[test]
    fn relative_cue_self_and_speaking() {
        let p = Pose::new([10.0, -3.0, 150.0], Quaternion::new(0.5, 0.5, 0.5, 0.5));
        let rc = relative_cue(&p, true, &p, true).unwrap();
        assert!(approx_q(rc.q_rel, Quaternion::IDENTITY, 0.0));
        assert_eq!(rc.l_rel, [0.0, 0.0, 0.0]);
        assert_eq!(rc.s_rel, 0);

        let q = Pose::new([0.0; 3], Quaternion::IDENTITY);
        assert_eq!(relative_cue(&q, false, &q, true).unwrap().s_rel, 1);
        assert_eq!(relative_cue(&q, true, &q, false).unwrap().s_rel, -1);
    }

    #[test]
    fn relative_cue_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let pi = Pose::new(
                [rng.random(), rng.random(), rng.random()],
                random_unit(&mut rng),
            );
            let pj = Pose::new(
                [rng.random(), rng.random(), rng.random()],
                random_unit(&mut rng),
            );
            let rc = relative_cue(&pi, false, &pj, false).unwrap();
            let expected = matmul(
                rotation_matrix(pi.orientation),
                transpose(rotation_matrix(pj.orientation)),
            );
            assert!(max_abs_diff(rotation_matrix(rc.q_rel), expected) < 1e-6);
            for k in 0..3 {
                assert_eq!(rc.l_rel[k], pj.location[k] - pi.location[k]);
            }
        }
    }

    #[test]
    fn normal_to_quaternion_cases() {
        assert!(approx_q(
            normal_to_quaternion(REFERENCE_DIRECTION).unwrap(),
            Quaternion::IDENTITY,
            1e-15
        ));
        let back = normal_to_quaternion([-2.0, 0.0, 0.0]).unwrap();
        assert_eq!(back, Quaternion::new(0.0, 0.0, 0.0, 1.0));
        let half_turn = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::PI).unwrap();
        assert!(geodesic_angle_deg(back, half_turn).unwrap() < 1e-4);
        let v = back.rotate(REFERENCE_DIRECTION);
        assert!((v[0] + 1.0).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2].abs() < 1e-12);

        assert!(matches!(
            normal_to_quaternion([0.0, 0.0, 0.0]),
            Err(Error::InvalidOrientation(_))
        ));
    }

    #[test]
    fn normal_to_quaternion_reproduces_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..500 {
            let mut n = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            if i % 2 == 0 {
                n[2] = 0.0;
            }
            let len = norm3(n);
            if len < 1e-3 {
                continue;
            }
            let q = normal_to_quaternion(n).unwrap();
            assert!((q.norm() - 1.0).abs() < 1e-6);
            let v = q.rotate(REFERENCE_DIRECTION);
            for k in 0..3 {
                assert!((v[k] - n[k] / len).abs() < 1e-6);
            }
            if n[2] == 0.0 {
                // horizontal normals rotate about the vertical axis only
                assert!(q.x.abs() < 1e-12 && q.y.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hemisphere_align_cases() {
        let q = Quaternion::new(0.8, 0.0, 0.0, 0.6);
        assert_eq!(hemisphere_align(&[q, q, q]), vec![q, q, q]);
        assert_eq!(hemisphere_align(&[q, -q, q]), vec![q, q, q]);
        assert_eq!(hemisphere_align(&[-q]), vec![q]);
        let tie = Quaternion::new(0.0, -1.0, 0.0, 0.0);
        assert_eq!(
            hemisphere_align(&[tie])[0],
            Quaternion::new(0.0, 1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn hemisphere_align_removes_injected_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let axis = [rng.random(), rng.random(), rng.random::<f64>() + 0.1];
            let seq: Vec<Quaternion> = (0..200)
                .map(|t| Quaternion::from_axis_angle(axis, 0.05 * t as f64).unwrap())
                .collect();
            let flipped: Vec<Quaternion> = seq
                .iter()
                .map(|&q| if rng.random_bool(0.4) { -q } else { q })
                .collect();
            let out = hemisphere_align(&flipped);
            assert!(out[0].w >= 0.0);
            for t in 1..out.len() {
                assert!(out[t].dot(out[t - 1]) >= 0.0);
            }
            for (a, b) in flipped.iter().zip(&out) {
                assert!(geodesic_angle_deg(*a, *b).unwrap() < 1e-4);
            }
        }
    }

    #[test]
    fn geodesic_angle_cases() {
        let q = Quaternion::new(0.2, 0.4, -0.1, 0.7).normalized().unwrap();
        assert!(geodesic_angle_deg(q, q).unwrap() < 1e-4);
        assert!(geodesic_angle_deg(q, -q).unwrap() < 1e-4);
        let quarter =
            Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        let r = rotation_matrix(quarter);
        let trace = r[0][0] + r[1][1] + r[2][2];
        let oracle = ((trace - 1.0) / 2.0).acos().to_degrees();
        let got = geodesic_angle_deg(Quaternion::IDENTITY, quarter).unwrap();
        assert!((got - oracle).abs() < 1e-4);
        assert!((got - 90.0).abs() < 1e-4);
    }

    #[test]
    fn geodesic_angle_symmetric_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..300 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let c = random_unit(&mut rng);
            let ab = geodesic_angle_deg(a, b).unwrap();
            let ba = geodesic_angle_deg(b, a).unwrap();
            assert!((ab - ba).abs() < 1e-9);
            assert!((0.0..=180.0).contains(&ab));
            let ac = geodesic_angle_deg(a, c).unwrap();
            let cb = geodesic_angle_deg(c, b).unwrap();
            assert!(ab <= ac + cb + 1e-4);
        }
    }
}
