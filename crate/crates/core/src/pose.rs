//! Exact 6-DOF pose algebra for probe navigation.
//!
//! A pose is a position in millimeters plus an orientation as Euler angles in
//! degrees. The Euler convention is extrinsic x-y-z throughout the crate:
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)`. Relative actions are expressed in the
//! source pose's local frame (the motion a probe at the source pose would
//! execute). All geometry is computed in f64 regardless of the learning core's
//! precision so that geometry error never aliases as model error.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not orthonormal (residual {residual:.3e} > 1e-4)")]
    NotOrthonormal { residual: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {pred} predictions vs {gt} ground-truth actions")]
    LengthMismatch { pred: usize, gt: usize },
}

/// Wrap an angle in degrees to [-180, 180).
pub fn wrap_angle_deg(x: f64) -> f64 {
    let w = (x + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can return exactly 360.0 for inputs like -1e-14.
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}

/// Absolute probe pose: position (mm) and extrinsic x-y-z Euler angles (deg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6 {
    pub pos: [f64; 3],
    pub rot: [f64; 3],
}

impl Pose6 {
    pub fn new(pos: [f64; 3], rot: [f64; 3]) -> Self {
        Pose6 { pos, rot }.normalized()
    }

    pub const fn identity() -> Self {
        Pose6 {
            pos: [0.0; 3],
            rot: [0.0; 3],
        }
    }

    /// Wrap each rotation component into [-180, 180).
    pub fn normalized(mut self) -> Self {
        for r in &mut self.rot {
            *r = wrap_angle_deg(*r);
        }
        self
    }

    pub fn rotation(&self) -> RotMat {
        euler_to_matrix(self.rot)
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(self.rot.iter()).all(|v| v.is_finite())
    }
}

/// Relative 6-DOF motion between two poses, in the source pose's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action6 {
    /// Translation in mm, expressed in the source pose's local frame.
    pub dpos: [f64; 3],
    /// Rotation as Euler angles in degrees, each in [-180, 180).
    pub drot: [f64; 3],
}

impl Action6 {
    pub const fn zero() -> Self {
        Action6 {
            dpos: [0.0; 3],
            drot: [0.0; 3],
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.dpos[0],
            self.dpos[1],
            self.dpos[2],
            self.drot[0],
            self.drot[1],
            self.drot[2],
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Action6 {
            dpos: [v[0], v[1], v[2]],
            drot: [v[3], v[4], v[5]],
        }
    }
}

/// 3x3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMat(pub [[f64; 3]; 3]);

impl RotMat {
    pub const fn identity() -> Self {
        RotMat([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn transpose(&self) -> RotMat {
        let m = &self.0;
        RotMat([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul(&self, other: &RotMat) -> RotMat {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        RotMat(out)
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Max elementwise residual of R*Rt - I.
    pub fn orthonormality_residual(&self) -> f64 {
        let rrt = self.mul(&self.transpose());
        let mut res: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                res = res.max((rrt.0[i][j] - target).abs());
            }
        }
        res
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Build the rotation matrix for extrinsic x-y-z Euler angles in degrees:
/// `R = Rz(rot[2]) * Ry(rot[1]) * Rx(rot[0])`.
pub fn euler_to_matrix(rot: [f64; 3]) -> RotMat {
    let (sa, ca) = rot[0].to_radians().sin_cos();
    let (sb, cb) = rot[1].to_radians().sin_cos();
    let (sg, cg) = rot[2].to_radians().sin_cos();
    RotMat([
        [cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa],
        [sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa],
        [-sb, cb * sa, cb * ca],
    ])
}

// Gimbal-lock trigger: |sin(pitch)| within this of 1, i.e. pitch within
// ~2.5e-6 degrees of +/-90 (the finest f64 can resolve through asin).
const LOCK_EPS: f64 = 1e-15;

/// Recover Euler angles (degrees) from a rotation matrix.
///
/// Pitch is returned in [-90, 90]; roll and yaw are wrapped to [-180, 180).
/// At gimbal lock (pitch = +/-90) the roll/yaw ambiguity is resolved by
/// forcing yaw = 0 and folding the remaining rotation into roll, which keeps
/// `euler_to_matrix(matrix_to_euler(r)) == r`.
pub fn matrix_to_euler(r: &RotMat) -> Result<[f64; 3], GeometryError> {
    let residual = r.orthonormality_residual();
    if residual > 1e-4 {
        return Err(GeometryError::NotOrthonormal { residual });
    }
    let m = &r.0;
    let s = (-m[2][0]).clamp(-1.0, 1.0);
    if s >= 1.0 - LOCK_EPS {
        // pitch = +90: only roll - yaw is determined; set yaw = 0.
        let roll = f64::atan2(m[0][1], m[0][2]).to_degrees();
        return Ok([wrap_angle_deg(roll), 90.0, 0.0]);
    }
    if s <= -1.0 + LOCK_EPS {
        // pitch = -90: only roll + yaw is determined; set yaw = 0.
        let roll = f64::atan2(-m[0][1], -m[0][2]).to_degrees();
        return Ok([wrap_angle_deg(roll), -90.0, 0.0]);
    }
    let pitch = s.asin().to_degrees();
    let roll = f64::atan2(m[2][1], m[2][2]).to_degrees();
    let yaw = f64::atan2(m[1][0], m[0][0]).to_degrees();
    Ok([wrap_angle_deg(roll), pitch, wrap_angle_deg(yaw)])
}

/// Relative action taking `from` to `to`, expressed in `from`'s local frame.
pub fn relative_action(from: &Pose6, to: &Pose6) -> Action6 {
    if from == to {
        return Action6::zero();
    }
    let r_from = from.rotation();
    let r_to = to.rotation();
    let delta = [
        to.pos[0] - from.pos[0],
        to.pos[1] - from.pos[1],
        to.pos[2] - from.pos[2],
    ];
    let dpos = r_from.transpose().apply(delta);
    let r_rel = r_from.transpose().mul(&r_to);
    // r_rel is a product of rotations; orthonormal by construction.
    let drot = matrix_to_euler(&r_rel).expect("rotation product is orthonormal");
    Action6 { dpos, drot }
}

/// Apply a local-frame action to a pose: the inverse of [`relative_action`].
pub fn apply_action(pose: &Pose6, action: &Action6) -> Pose6 {
    let r = pose.rotation();
    let moved = r.apply(action.dpos);
    let r_new = r.mul(&euler_to_matrix(action.drot));
    let rot = matrix_to_euler(&r_new).expect("rotation product is orthonormal");
    Pose6 {
        pos: [
            pose.pos[0] + moved[0],
            pose.pos[1] + moved[1],
            pose.pos[2] + moved[2],
        ],
        rot,
    }
}

/// Mean absolute error over predicted vs ground-truth actions.
///
/// Returns (translation MAE in mm, rotation MAE in wrapped degrees), each a
/// mean over samples and the three components.
pub fn action_mae(pred: &[Action6], gt: &[Action6]) -> Result<(f64, f64), GeometryError> {
    if pred.is_empty() {
        return Err(GeometryError::EmptyInput("action_mae"));
    }
    if pred.len() != gt.len() {
        return Err(GeometryError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let mut trans = 0.0;
    let mut rot = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for k in 0..3 {
            trans += (p.dpos[k] - g.dpos[k]).abs();
            rot += wrap_angle_deg(p.drot[k] - g.drot[k]).abs();
        }
    }
    let n = (pred.len() * 3) as f64;
    Ok((trans / n, rot / n))
}

/// Euclidean distance between pose positions, mm.
pub fn translation_distance(a: &Pose6, b: &Pose6) -> f64 {
    let d = [
        a.pos[0] - b.pos[0],
        a.pos[1] - b.pos[1],
        a.pos[2] - b.pos[2],
    ];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Geodesic angle between pose orientations, degrees in [0, 180].
pub fn rotation_distance_deg(a: &Pose6, b: &Pose6) -> f64 {
    let rel = a.rotation().transpose().mul(&b.rotation());
    let trace = rel.0[0][0] + rel.0[1][1] + rel.0[2][2];
    (((trace - 1.0) / 2.0).clamp(-1.0, 1.0)).acos().to_degrees()
}

/// Scalar pose distance: translation (mm) plus rotation angle (deg), equal weights.
pub fn weighted_pose_distance(a: &Pose6, b: &Pose6) -> f64 {
    translation_distance(a, b) + rotation_distance_deg(a, b)
}

/// True when `a` is within BOTH thresholds of `b`.
pub fn within_thresholds(a: &Pose6, b: &Pose6, trans_mm: f64, rot_deg: f64) -> bool {
    translation_distance(a, b) <= trans_mm && rotation_distance_deg(a, b) <= rot_deg
}
