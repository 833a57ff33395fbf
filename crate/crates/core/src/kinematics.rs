//! Single-tile kinematics for the three-legged parallel mechanism.
//!
//! Poses are `(delta, phi, r)`: yaw of the tilt direction, tilt of the plate
//! normal away from the base z axis, and the distance from the base centre to
//! the effector centre. The effector centre sits at `r * n` where
//! `n = (sin phi cos delta, sin phi sin delta, cos phi)` and the plate normal
//! is `n` as well.
//!
//! Each leg is a two-segment chain of total length `l`, hinged at the base on a
//! circle of radius `R`. The lower segment swings in the radial plane of its
//! base point; the upper segment reaches the plate attachment point, which
//! mirrors the base layout (radius `R`, azimuth `Phi_i`) in the plate frame.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid tile geometry: {0}")]
    InvalidGeometry(String),
    #[error("pose is infeasible: leg {leg} {reason}")]
    Infeasible { leg: usize, reason: &'static str },
    #[error("forward kinematics did not converge (residual {residual:.3e} mm)")]
    NoConvergence { residual: f64 },
}

/// Mechanism constants of one tile. Lengths in millimetres, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileGeometry {
    pub leg_length: f64,
    pub base_radius: f64,
    pub leg_azimuths: [f64; 3],
    pub theta_min: f64,
    pub theta_max: f64,
    pub effector_width: f64,
    pub effector_height: f64,
}

impl Default for TileGeometry {
    fn default() -> Self {
        Self {
            leg_length: 140.0,
            base_radius: 44.01,
            leg_azimuths: [PI / 3.0, PI, 5.0 * PI / 3.0],
            theta_min: 0.0,
            theta_max: 7.0 * PI / 18.0,
            effector_width: 150.0,
            effector_height: 5.0,
        }
    }
}

impl TileGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |msg: &str| Err(KinematicsError::InvalidGeometry(msg.to_string()));
        let finite = [
            self.leg_length,
            self.base_radius,
            self.theta_min,
            self.theta_max,
            self.effector_width,
            self.effector_height,
        ]
        .iter()
        .chain(self.leg_azimuths.iter())
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        if self.leg_length <= 0.0 || self.base_radius <= 0.0 || self.effector_width <= 0.0 {
            return bad("leg length, base radius and effector width must be positive");
        }
        if self.effector_height < 0.0 {
            return bad("effector height must be non-negative");
        }
        if !(0.0 <= self.theta_min && self.theta_min < self.theta_max && self.theta_max <= FRAC_PI_2)
        {
            return bad("joint limits must satisfy 0 <= theta_min < theta_max <= pi/2");
        }
        let az = self.leg_azimuths;
        if az.iter().any(|a| !(0.0..TAU).contains(a)) {
            return bad("leg azimuths must lie in [0, 2pi)");
        }
        if az[0] == az[1] || az[1] == az[2] || az[0] == az[2] {
            return bad("leg azimuths must be distinct");
        }
        Ok(())
    }

    /// Height reached when all three legs sit at the same angle.
    pub fn symmetric_height(&self, theta: f64) -> f64 {
        self.leg_length * theta.sin()
    }

    pub fn max_symmetric_height(&self) -> f64 {
        self.symmetric_height(self.theta_max)
    }

    fn base_point(&self, leg: usize) -> Vector3<f64> {
        let a = self.leg_azimuths[leg];
        Vector3::new(self.base_radius * a.cos(), self.base_radius * a.sin(), 0.0)
    }

    fn radial_dir(&self, leg: usize) -> Vector3<f64> {
        let a = self.leg_azimuths[leg];
        Vector3::new(a.cos(), a.sin(), 0.0)
    }

    /// Elbow (mid-leg joint) position for leg `leg` at motor angle `theta`.
    pub fn elbow(&self, leg: usize, theta: f64) -> Vector3<f64> {
        let half = 0.5 * self.leg_length;
        self.base_point(leg) + half * (-theta.cos() * self.radial_dir(leg) + theta.sin() * Vector3::z())
    }

    /// Plate attachment point of leg `leg`, expressed in the tile base frame.
    pub fn plate_point(&self, leg: usize, transform: &RigidTransform) -> Vector3<f64> {
        transform.apply(&self.base_point(leg))
    }

    fn in_limits(&self, theta: f64) -> bool {
        theta >= self.theta_min - ANGLE_EPS && theta <= self.theta_max + ANGLE_EPS
    }
}

const ANGLE_EPS: f64 = 1e-12;

/// Canonical angle in `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Effector pose in polar form. `delta` is kept in `[0, 2pi)` and forced to 0
/// when `phi == 0`, so every physical pose has one representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilePose {
    delta: f64,
    phi: f64,
    r: f64,
}

impl TilePose {
    pub fn new(delta: f64, phi: f64, r: f64) -> Self {
        let (delta, phi) = if phi < 0.0 { (delta + PI, -phi) } else { (delta, phi) };
        let delta = if phi == 0.0 { 0.0 } else { wrap_angle(delta) };
        Self { delta, phi, r }
    }

    /// Builds a pose without canonicalising `delta`.
    pub fn raw(delta: f64, phi: f64, r: f64) -> Self {
        Self { delta, phi, r }
    }

    /// Flat pose at height `r`.
    pub fn flat(r: f64) -> Self {
        Self::new(0.0, 0.0, r)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn with_r(&self, r: f64) -> Self {
        Self { r, ..*self }
    }

    pub fn is_finite(&self) -> bool {
        self.delta.is_finite() && self.phi.is_finite() && self.r.is_finite()
    }

    /// Unit direction from the base centre to the effector centre.
    pub fn direction(&self) -> Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        let (sd, cd) = self.delta.sin_cos();
        Vector3::new(sp * cd, sp * sd, cp)
    }

    /// Rotates the pose about the base z axis.
    pub fn rotated(&self, angle: f64) -> Self {
        Self::new(self.delta + angle, self.phi, self.r)
    }

    /// Mirror image across the base x axis (y -> -y).
    pub fn mirrored_y(&self) -> Self {
        Self::new(-self.delta, self.phi, self.r)
    }

    /// Recovers a pose from an effector-centre translation.
    pub fn from_translation(t: &Vector3<f64>) -> Self {
        let r = t.norm();
        let phi = (t.z / r).clamp(-1.0, 1.0).acos();
        let delta = if t.x == 0.0 && t.y == 0.0 { 0.0 } else { t.y.atan2(t.x) };
        Self::new(delta, phi, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegAngles(pub [f64; 3]);

impl LegAngles {
    pub fn uniform(theta: f64) -> Self {
        Self([theta; 3])
    }

    pub fn within(&self, geom: &TileGeometry) -> bool {
        self.0.iter().all(|&t| geom.in_limits(t))
    }

    pub fn max_abs_diff(&self, other: &LegAngles) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn rot_z(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn rot_y(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    }

    /// Extrinsic yaw-then-tilt product `Rz(delta) * Ry(phi)`. Its third column
    /// is the plate normal; the plate itself uses [`plate_rotation`], which
    /// has the same normal without the extra yaw about it.
    pub fn yaw_tilt(delta: f64, phi: f64) -> Matrix3<f64> {
        Self::rot_z(delta) * Self::rot_y(phi)
    }

    /// `Rz(delta) * Ry(phi) * Rz(-delta)`: tilt by `phi` about the horizontal
    /// axis perpendicular to the tilt direction.
    pub fn plate_rotation(delta: f64, phi: f64) -> Matrix3<f64> {
        let (sd, cd) = delta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let (kx, ky) = (-sd, cd);
        let v = 1.0 - cp;
        Matrix3::new(
            cp + kx * kx * v,
            kx * ky * v,
            ky * sp,
            kx * ky * v,
            cp + ky * ky * v,
            -kx * sp,
            -ky * sp,
            kx * sp,
            cp,
        )
    }

    /// Twist-free rotation carrying `z` onto the unit vector `n` (`n.z > -1`).
    pub fn rotation_to_normal(n: &Vector3<f64>) -> Matrix3<f64> {
        let c = n.z;
        let (vx, vy) = (-n.y, n.x);
        let f = 1.0 / (1.0 + c);
        Matrix3::new(
            1.0 - f * vy * vy,
            f * vx * vy,
            vy,
            f * vx * vy,
            1.0 - f * vx * vx,
            -vx,
            -vy,
            vx,
            c,
        )
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn is_proper_rotation(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

/// Four plate corners keyed by `(i, j)` in `{+1, -1}^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSet {
    corners: [Vector3<f64>; 4],
}

impl CornerSet {
    fn slot(i: i8, j: i8) -> usize {
        debug_assert!(i.abs() == 1 && j.abs() == 1);
        (if i > 0 { 0 } else { 2 }) + if j > 0 { 0 } else { 1 }
    }

    pub fn get(&self, i: i8, j: i8) -> Vector3<f64> {
        self.corners[Self::slot(i, j)]
    }

    pub fn iter(&self) -> impl Iterator<Item = ((i8, i8), Vector3<f64>)> + '_ {
        [(1, 1), (1, -1), (-1, 1), (-1, -1)]
            .into_iter()
            .map(move |(i, j)| ((i, j), self.get(i, j)))
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self { corners: self.corners.map(|c| c + offset) }
    }
}

/// Effector-centre translation `r * n`.
pub fn pose_to_translation(pose: &TilePose, _geom: &TileGeometry) -> Vector3<f64> {
    pose.r * pose.direction()
}

pub fn pose_to_transform(pose: &TilePose, geom: &TileGeometry) -> RigidTransform {
    RigidTransform {
        rotation: RigidTransform::plate_rotation(pose.delta, pose.phi),
        translation: pose_to_translation(pose, geom),
    }
}

pub fn end_effector_corners(pose: &TilePose, geom: &TileGeometry) -> CornerSet {
    corners_of(&pose_to_transform(pose, geom), geom)
}

pub fn corners_of(h: &RigidTransform, geom: &TileGeometry) -> CornerSet {
    let half = 0.5 * geom.effector_width;
    let c = |i: f64, j: f64| h.apply(&Vector3::new(i * half, j * half, geom.effector_height));
    CornerSet { corners: [c(1.0, 1.0), c(1.0, -1.0), c(-1.0, 1.0), c(-1.0, -1.0)] }
}

/// Solves `A cos t + B sin t = C` for the leg angle, returning the root inside
/// the joint limits (the smaller one if both are).
fn solve_leg(
    leg: usize,
    plate_point: &Vector3<f64>,
    geom: &TileGeometry,
) -> Result<f64, KinematicsError> {
    let w = plate_point - geom.base_point(leg);
    let a = -w.dot(&geom.radial_dir(leg));
    let b = w.z;
    let c = w.norm_squared() / geom.leg_length;
    let m = a.hypot(b);
    if m == 0.0 {
        return Err(KinematicsError::Infeasible { leg, reason: "is degenerate (plate point on base hinge)" });
    }
    let ratio = c / m;
    if ratio.abs() > 1.0 + 1e-12 {
        return Err(KinematicsError::Infeasible { leg, reason: "cannot reach its plate point" });
    }
    let base = b.atan2(a);
    let half = ratio.clamp(-1.0, 1.0).acos();
    let mut best: Option<f64> = None;
    for root in [base - half, base + half] {
        // bring into (-pi, pi]
        let t = root - TAU * ((root + PI) / TAU).floor();
        let t = if t <= -PI { t + TAU } else { t };
        if geom.in_limits(t) {
            let t = t.clamp(geom.theta_min, geom.theta_max);
            best = Some(best.map_or(t, |cur: f64| cur.min(t)));
        }
    }
    best.ok_or(KinematicsError::Infeasible { leg, reason: "has no solution inside the joint limits" })
}

pub fn inverse_kinematics(pose: &TilePose, geom: &TileGeometry) -> Result<LegAngles, KinematicsError> {
    let h = pose_to_transform(pose, geom);
    let mut out = [0.0; 3];
    for (leg, slot) in out.iter_mut().enumerate() {
        *slot = solve_leg(leg, &geom.plate_point(leg, &h), geom)?;
    }
    Ok(LegAngles(out))
}

pub fn is_feasible(pose: &TilePose, geom: &TileGeometry) -> bool {
    inverse_kinematics(pose, geom).is_ok()
}

/// Signed leg-closure residuals `|P_i - E_i| - l/2` in millimetres.
pub fn leg_residuals(h: &RigidTransform, angles: &LegAngles, geom: &TileGeometry) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (leg, slot) in out.iter_mut().enumerate() {
        let p = geom.plate_point(leg, h);
        *slot = (p - geom.elbow(leg, angles.0[leg])).norm() - 0.5 * geom.leg_length;
    }
    out
}

fn transform_from_translation(t: &Vector3<f64>) -> RigidTransform {
    let n = t.normalize();
    RigidTransform { rotation: RigidTransform::rotation_to_normal(&n), translation: *t }
}

pub const FK_MAX_ITERATIONS: usize = 100;
pub const FK_TOLERANCE: f64 = 1e-9;

/// Numeric forward kinematics: damped Gauss-Newton on the effector-centre
/// translation, which stays smooth through `phi = 0` where `delta` is not.
///
/// Several assemblies can close the same three legs; only a solution above
/// the base that inverse kinematics maps back onto `angles` is accepted. When the
/// symmetric-case seed lands elsewhere, seeds from a coarse pose lattice are
/// tried, closest in joint space first.
pub fn forward_kinematics(angles: &LegAngles, geom: &TileGeometry) -> Result<TilePose, KinematicsError> {
    let mut worst = f64::INFINITY;
    match fk_attempt(angles, geom, fk_seed(angles, geom)) {
        Ok(p) => return Ok(p),
        Err(r) => worst = worst.min(r),
    }
    for seed in lattice_seeds(angles, geom) {
        match fk_attempt(angles, geom, seed) {
            Ok(p) => return Ok(p),
            Err(r) => worst = worst.min(r),
        }
    }
    Err(KinematicsError::NoConvergence { residual: worst })
}

/// Forward kinematics started from a nearby pose, e.g. the previous sample
/// of a trajectory.
pub fn forward_kinematics_from(angles: &LegAngles, geom: &TileGeometry, near: &TilePose) -> Result<TilePose, KinematicsError> {
    let seed = near.r() * near.direction();
    fk_attempt(angles, geom, seed).or_else(|_| forward_kinematics(angles, geom))
}

/// Converged pose on the branch inverse kinematics selects, or the residual
/// reached otherwise.
fn fk_attempt(angles: &LegAngles, geom: &TileGeometry, seed: Vector3<f64>) -> Result<TilePose, f64> {
    let (t, res) = fk_solve(angles, geom, seed);
    if !res.is_finite() || res >= FK_TOLERANCE {
        return Err(res);
    }
    if t.z <= 0.0 {
        return Err(f64::INFINITY);
    }
    let pose = TilePose::from_translation(&t);
    let pose = if pose.phi() < 1e-12 { TilePose::flat(pose.r()) } else { pose };
    match inverse_kinematics(&pose, geom) {
        Ok(back) if back.max_abs_diff(angles) < 1e-6 => Ok(pose),
        _ => Err(f64::INFINITY),
    }
}

fn lattice_seeds(angles: &LegAngles, geom: &TileGeometry) -> Vec<Vector3<f64>> {
    let top = geom.max_symmetric_height();
    let mut seeds: Vec<(f64, Vector3<f64>)> = Vec::new();
    for id in 0..12 {
        let delta = TAU * id as f64 / 12.0;
        for ip in 1..=6 {
            let phi = 0.12 * ip as f64;
            for ir in 1..=6 {
                let pose = TilePose::new(delta, phi, top * ir as f64 / 6.5);
                if let Ok(a) = inverse_kinematics(&pose, geom) {
                    seeds.push((a.max_abs_diff(angles), pose.r() * pose.direction()));
                }
            }
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds.into_iter().map(|(_, s)| s).collect()
}

fn fk_solve(angles: &LegAngles, geom: &TileGeometry, seed: Vector3<f64>) -> (Vector3<f64>, f64) {
    let residual = |t: &Vector3<f64>| -> Vector3<f64> {
        Vector3::from(leg_residuals(&transform_from_translation(t), angles, geom))
    };

    let mut t = seed;
    let mut f = residual(&t);
    let mut lambda: f64 = 1e-6;
    for _ in 0..FK_MAX_ITERATIONS {
        if f.amax() < FK_TOLERANCE * 1e-2 {
            break;
        }
        let mut jac = Matrix3::zeros();
        let step = 1e-6;
        for k in 0..3 {
            let mut tp = t;
            let mut tm = t;
            tp[k] += step;
            tm[k] -= step;
            jac.set_column(k, &((residual(&tp) - residual(&tm)) / (2.0 * step)));
        }
        let jt = jac.transpose();
        let mut improved = false;
        for _ in 0..20 {
            let lhs: Matrix3<f64> = jt * jac + Matrix3::identity() * lambda;
            let Some(dx) = lhs.lu().solve(&(-jt * f)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = t + dx;
            let fc = residual(&cand);
            if cand.z > 0.0 && fc.norm() < f.norm() {
                t = cand;
                f = fc;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (t, f.amax())
}

/// Plane through the three "symmetric-case" plate points gives a tilt guess.
fn fk_seed(angles: &LegAngles, geom: &TileGeometry) -> Vector3<f64> {
    let pts: Vec<Vector3<f64>> = (0..3)
        .map(|i| {
            let b = geom.base_point(i);
            Vector3::new(b.x, b.y, geom.symmetric_height(angles.0[i]))
        })
        .collect();
    let mut n = (pts[1] - pts[0]).cross(&(pts[2] - pts[0]));
    if n.z < 0.0 {
        n = -n;
    }
    let n = n.normalize();
    let centroid = (pts[0] + pts[1] + pts[2]) / 3.0;
    let height = centroid.z.max(1e-3);
    let seed = height / n.z.max(0.2) * n;
    if seed.iter().all(|v| v.is_finite()) {
        seed
    } else {
        Vector3::new(0.0, 0.0, height)
    }
}
