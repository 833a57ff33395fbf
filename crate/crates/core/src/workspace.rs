//! Discretised single-tile workspaces and the constraints the shared flexible
//! layer puts on neighbouring tiles.
//!
//! Edge neighbours are joined along their facing edges; the larger of the two
//! distances between like-signed distal corners is `alpha` and must not
//! exceed the material length `L`. Diagonal neighbours are joined at their
//! nearest corners; that distance is `beta` and is bounded by `sqrt(2) L`.

use std::f64::consts::{PI, SQRT_2, TAU};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{end_effector_corners, is_feasible, CornerSet, TileGeometry, TilePose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkspaceError {
    #[error("pose grid axis `{0}` is empty or non-finite")]
    BadAxis(&'static str),
    #[error("offset ({0}, {1}) is not an edge or diagonal neighbour relation")]
    InvalidOffset(f64, f64),
    #[error("workspace contains no valid pose")]
    EmptyWorkspace,
    #[error("symmetry precondition violated: {0}")]
    Precondition(&'static str),
    #[error("invalid array configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("inter-tile distance range must be non-empty and ascending")]
    BadRange,
    #[error("receiving pose is infeasible")]
    InfeasibleReceivingPose,
    #[error("workspace has no pose on the inter-tile axis")]
    NoAxisPose,
}

/// Evenly spaced axis including both endpoints (a single sample sits at `min`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.min],
            n => {
                let step = (self.max - self.min) / (n - 1) as f64;
                (0..n)
                    .map(|k| if k + 1 == n { self.max } else { self.min + step * k as f64 })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGrid {
    deltas: Vec<f64>,
    phis: Vec<f64>,
    rs: Vec<f64>,
    /// `deltas[k] == 2 pi k / n` for the full turn.
    periodic_delta: bool,
}

impl PoseGrid {
    /// Grid with `delta_count` yaw samples covering the full turn from 0.
    pub fn regular(delta_count: usize, phi: AxisSpec, r: AxisSpec) -> Result<Self, WorkspaceError> {
        let deltas = (0..delta_count).map(|k| TAU * k as f64 / delta_count as f64).collect();
        let mut g = Self::from_axes(deltas, phi.values(), r.values())?;
        g.periodic_delta = true;
        Ok(g)
    }

    pub fn from_axes(deltas: Vec<f64>, phis: Vec<f64>, rs: Vec<f64>) -> Result<Self, WorkspaceError> {
        let ok = |v: &Vec<f64>| !v.is_empty() && v.iter().all(|x| x.is_finite());
        if !ok(&deltas) {
            return Err(WorkspaceError::BadAxis("delta"));
        }
        if !ok(&phis) || phis.iter().any(|&p| p < 0.0) {
            return Err(WorkspaceError::BadAxis("phi"));
        }
        if !ok(&rs) {
            return Err(WorkspaceError::BadAxis("r"));
        }
        Ok(Self { deltas, phis, rs, periodic_delta: false })
    }

    pub fn single(delta: f64, phi: f64, r: f64) -> Result<Self, WorkspaceError> {
        Self::from_axes(vec![delta], vec![phi], vec![r])
    }

    /// 64 yaw samples, 32 tilt samples on `[0, 7 pi / 18]`, 24 heights on `[10, 131.5]` mm.
    pub fn default_grid() -> Self {
        Self::regular(64, AxisSpec::new(0.0, 7.0 * PI / 18.0, 32), AxisSpec::new(10.0, 131.5, 24))
            .expect("default grid is valid")
    }

    pub fn len(&self) -> usize {
        self.deltas.len() * self.phis.len() * self.rs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn rs(&self) -> &[f64] {
        &self.rs
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic_delta
    }

    /// Flat index, yaw-major: `(id * n_phi + ip) * n_r + ir`.
    pub fn index(&self, id: usize, ip: usize, ir: usize) -> usize {
        (id * self.phis.len() + ip) * self.rs.len() + ir
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let nr = self.rs.len();
        let np = self.phis.len();
        (idx / (np * nr), (idx / nr) % np, idx % nr)
    }

    /// Pose at a grid point, with `delta` taken verbatim.
    pub fn raw_pose(&self, idx: usize) -> (f64, f64, f64) {
        let (id, ip, ir) = self.coords(idx);
        (self.deltas[id], self.phis[ip], self.rs[ir])
    }

    pub fn pose(&self, idx: usize) -> TilePose {
        let (d, p, r) = self.raw_pose(idx);
        TilePose::new(d, p, r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceSet {
    pub grid: PoseGrid,
    pub valid: Vec<bool>,
    pub radially_symmetric: bool,
}

impl WorkspaceSet {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid[idx]
    }

    pub fn is_subset_of(&self, other: &WorkspaceSet) -> bool {
        self.grid == other.grid && self.valid.iter().zip(&other.valid).all(|(a, b)| !*a || *b)
    }

    /// Distinct valid poses. All yaw samples at `phi == 0` collapse to one pose.
    pub fn distinct_poses(&self) -> DistinctPoses {
        let nd = self.grid.deltas.len();
        let mut poses = Vec::new();
        let mut coords = Vec::new();
        let mut of_grid = vec![None; self.grid.len()];
        for idx in 0..self.grid.len() {
            if !self.valid[idx] {
                continue;
            }
            let (id, ip, ir) = self.grid.coords(idx);
            if self.grid.phis[ip] == 0.0 && id > 0 {
                // share the slot of the first valid yaw sample of this ring
                let first = (0..nd).map(|k| self.grid.index(k, ip, ir)).find(|&i| of_grid[i].is_some());
                if let Some(first) = first {
                    of_grid[idx] = of_grid[first];
                    continue;
                }
            }
            of_grid[idx] = Some(poses.len());
            poses.push(self.grid.pose(idx));
            coords.push((id, ip, ir));
        }
        DistinctPoses { poses, coords, of_grid }
    }

    /// Builds a set over the same grid from per-distinct-pose flags.
    fn from_distinct(&self, distinct: &DistinctPoses, keep: &[bool]) -> WorkspaceSet {
        let valid = distinct.of_grid.iter().map(|slot| slot.is_some_and(|k| keep[k])).collect();
        WorkspaceSet { grid: self.grid.clone(), valid, radially_symmetric: self.radially_symmetric }
    }
}

#[derive(Debug, Clone)]
pub struct DistinctPoses {
    pub poses: Vec<TilePose>,
    /// Grid coordinates of the representative sample.
    pub coords: Vec<(usize, usize, usize)>,
    /// Distinct-pose slot for every grid index (None when invalid).
    pub of_grid: Vec<Option<usize>>,
}

impl DistinctPoses {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

pub fn enumerate_workspace(geom: &TileGeometry, grid: &PoseGrid) -> WorkspaceSet {
    let valid = (0..grid.len()).into_par_iter().map(|idx| is_feasible(&grid.pose(idx), geom)).collect();
    WorkspaceSet { grid: grid.clone(), valid, radially_symmetric: false }
}

/// Keeps a `(phi, r)` ring only if every sampled yaw is valid.
pub fn radially_symmetric_subset(ws: &WorkspaceSet) -> WorkspaceSet {
    let g = &ws.grid;
    let mut valid = vec![false; g.len()];
    for ip in 0..g.phis.len() {
        for ir in 0..g.rs.len() {
            let all = (0..g.deltas.len()).all(|id| ws.valid[g.index(id, ip, ir)]);
            if all {
                for id in 0..g.deltas.len() {
                    valid[g.index(id, ip, ir)] = true;
                }
            }
        }
    }
    WorkspaceSet { grid: g.clone(), valid, radially_symmetric: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Edge,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSeparation {
    Edge { alpha: f64 },
    Diagonal { beta: f64 },
}

impl PairSeparation {
    pub fn value(&self) -> f64 {
        match *self {
            PairSeparation::Edge { alpha } => alpha,
            PairSeparation::Diagonal { beta } => beta,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            PairSeparation::Edge { alpha } => Some(alpha),
            PairSeparation::Diagonal { .. } => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            PairSeparation::Diagonal { beta } => Some(beta),
            PairSeparation::Edge { .. } => None,
        }
    }

    pub fn relation(&self) -> Relation {
        match self {
            PairSeparation::Edge { .. } => Relation::Edge,
            PairSeparation::Diagonal { .. } => Relation::Diagonal,
        }
    }
}

/// Base-to-base displacement of tile b relative to tile a, classified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborOffset {
    pub sx: i8,
    pub sy: i8,
    pub distance: f64,
}

impl NeighborOffset {
    pub fn new(sx: i8, sy: i8, distance: f64) -> Self {
        debug_assert!(sx.abs() <= 1 && sy.abs() <= 1 && (sx, sy) != (0, 0));
        Self { sx, sy, distance }
    }

    pub fn classify(offset: Vector2<f64>) -> Result<Self, WorkspaceError> {
        let (x, y) = (offset.x, offset.y);
        let err = Err(WorkspaceError::InvalidOffset(x, y));
        if !x.is_finite() || !y.is_finite() {
            return err;
        }
        let s = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
        match (x == 0.0, y == 0.0) {
            (true, true) => err,
            (true, false) => Ok(Self::new(0, s(y), y.abs())),
            (false, true) => Ok(Self::new(s(x), 0, x.abs())),
            (false, false) if x.abs() == y.abs() => Ok(Self::new(s(x), s(y), x.abs())),
            _ => err,
        }
    }

    pub fn relation(&self) -> Relation {
        if self.sx != 0 && self.sy != 0 {
            Relation::Diagonal
        } else {
            Relation::Edge
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.sx as f64 * self.distance, self.sy as f64 * self.distance, 0.0)
    }

    pub fn all(distance: f64) -> [NeighborOffset; 8] {
        [
            Self::new(1, 0, distance),
            Self::new(1, 1, distance),
            Self::new(0, 1, distance),
            Self::new(-1, 1, distance),
            Self::new(-1, 0, distance),
            Self::new(-1, -1, distance),
            Self::new(0, -1, distance),
            Self::new(1, -1, distance),
        ]
    }

    /// Corner pairs `(corner of a, corner of b)` joined by the material.
    fn corner_pairs(&self) -> ([(i8, i8); 2], [(i8, i8); 2], usize) {
        match (self.sx, self.sy) {
            (sx, 0) => ([(sx, 1), (sx, -1)], [(-sx, 1), (-sx, -1)], 2),
            (0, sy) => ([(1, sy), (-1, sy)], [(1, -sy), (-1, -sy)], 2),
            (sx, sy) => ([(sx, sy), (sx, sy)], [(-sx, -sy), (-sx, -sy)], 1),
        }
    }
}

/// Squared separation between the joined corners of two placed tiles.
fn separation_sq(a: &CornerSet, b: &CornerSet, off: &NeighborOffset) -> f64 {
    let (ca, cb, n) = off.corner_pairs();
    let o = off.vector();
    let mut best: f64 = 0.0;
    for k in 0..n {
        let d = a.get(ca[k].0, ca[k].1) - (b.get(cb[k].0, cb[k].1) + o);
        best = best.max(d.norm_squared());
    }
    best
}

pub fn pair_separation(
    pose_a: &TilePose,
    pose_b: &TilePose,
    offset: Vector2<f64>,
    geom: &TileGeometry,
) -> Result<PairSeparation, WorkspaceError> {
    let off = NeighborOffset::classify(offset)?;
    let d = separation_sq(&end_effector_corners(pose_a, geom), &end_effector_corners(pose_b, geom), &off).sqrt();
    Ok(match off.relation() {
        Relation::Edge => PairSeparation::Edge { alpha: d },
        Relation::Diagonal => PairSeparation::Diagonal { beta: d },
    })
}

/// Grid layout and material of an array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    /// Centre-to-centre spacing `D` (mm).
    pub tile_distance: f64,
    /// Material length `L` between edge-adjacent effectors (mm).
    pub material_length: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { rows: 2, cols: 2, tile_distance: 261.0, material_length: 150.0 }
    }
}

impl ArrayConfig {
    pub fn square(n: usize, tile_distance: f64, material_length: f64) -> Self {
        Self { rows: n, cols: n, tile_distance, material_length }
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(WorkspaceError::InvalidConfig("rows and cols must be at least 1"));
        }
        if !(self.tile_distance > 0.0 && self.tile_distance.is_finite()) {
            return Err(WorkspaceError::InvalidConfig("inter-tile distance must be positive"));
        }
        if !(self.material_length > 0.0 && self.material_length.is_finite()) {
            return Err(WorkspaceError::InvalidConfig("material length must be positive"));
        }
        Ok(())
    }

    pub fn limit(&self, relation: Relation) -> f64 {
        match relation {
            Relation::Edge => self.material_length,
            Relation::Diagonal => SQRT_2 * self.material_length,
        }
    }
}

pub fn check_pair_valid(
    pose_a: &TilePose,
    pose_b: &TilePose,
    relation: Relation,
    config: &ArrayConfig,
    geom: &TileGeometry,
) -> bool {
    let d = config.tile_distance;
    let offset = match relation {
        Relation::Edge => Vector2::new(d, 0.0),
        Relation::Diagonal => Vector2::new(d, d),
    };
    let sep = pair_separation(pose_a, pose_b, offset, geom).expect("offset built from relation");
    sep.value() <= config.limit(relation)
}

/// Retained set plus the number of pair evaluations spent on it.
#[derive(Debug, Clone)]
pub struct SharedWorkspace {
    pub set: WorkspaceSet,
    pub pair_checks: u64,
    /// Number of distinct valid input poses.
    pub pose_count: usize,
}

struct PairContext {
    corners: Vec<CornerSet>,
    edge_sq: f64,
    diag_sq: f64,
}

impl PairContext {
    fn new(poses: &DistinctPoses, config: &ArrayConfig, geom: &TileGeometry) -> Self {
        let corners = poses.poses.iter().map(|p| end_effector_corners(p, geom)).collect();
        let e = config.limit(Relation::Edge);
        let d = config.limit(Relation::Diagonal);
        Self { corners, edge_sq: e * e, diag_sq: d * d }
    }

    fn fails(&self, a: usize, b: usize, off: &NeighborOffset) -> bool {
        let limit = match off.relation() {
            Relation::Edge => self.edge_sq,
            Relation::Diagonal => self.diag_sq,
        };
        separation_sq(&self.corners[a], &self.corners[b], off) > limit
    }
}

/// Exhaustive oracle: every pose against every pose for all eight neighbours.
pub fn shared_workspace_naive(ws: &WorkspaceSet, config: &ArrayConfig, geom: &TileGeometry) -> SharedWorkspace {
    let poses = ws.distinct_poses();
    let ctx = PairContext::new(&poses, config, geom);
    let offsets = NeighborOffset::all(config.tile_distance);
    let n = poses.len();
    let keep: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut ok = true;
            for off in &offsets {
                for q in 0..n {
                    // no early exit: the oracle evaluates every pair
                    ok &= !ctx.fails(p, q, off);
                }
            }
            ok
        })
        .collect();
    SharedWorkspace {
        set: ws.from_distinct(&poses, &keep),
        pair_checks: (8 * n * n) as u64,
        pose_count: n,
    }
}

/// Index maps of the yaw symmetries on the distinct-pose list.
struct SymmetryMaps {
    /// Rotation by `k` quarter turns, k = 0..4.
    quarter: Vec<Vec<usize>>,
    /// Mirror `delta -> -delta`.
    mirror: Vec<usize>,
}

impl SymmetryMaps {
    fn build(ws: &WorkspaceSet, poses: &DistinctPoses, need_quarter: bool) -> Result<Self, WorkspaceError> {
        let g = &ws.grid;
        if !g.is_periodic() {
            return Err(WorkspaceError::Precondition("yaw axis must be a regular full-turn grid"));
        }
        let nd = g.deltas.len();
        if need_quarter && nd % 4 != 0 {
            return Err(WorkspaceError::Precondition("yaw sample count must be divisible by 4"));
        }
        let lookup = |id: usize, ip: usize, ir: usize| -> Result<usize, WorkspaceError> {
            poses.of_grid[g.index(id % nd, ip, ir)]
                .ok_or(WorkspaceError::Precondition("workspace is not invariant under the array symmetry"))
        };
        let mut quarter = Vec::new();
        if need_quarter {
            for k in 0..4 {
                let shift = k * nd / 4;
                let map = poses
                    .coords
                    .iter()
                    .map(|&(id, ip, ir)| lookup(id + shift, ip, ir))
                    .collect::<Result<Vec<_>, _>>()?;
                quarter.push(map);
            }
        }
        let mirror = poses
            .coords
            .iter()
            .map(|&(id, ip, ir)| lookup(nd - id, ip, ir))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { quarter, mirror })
    }
}

/// Same retained set as [`shared_workspace_naive`] using the array symmetries.
///
/// Radially symmetric input: quarter-turn rotations map one edge and one
/// diagonal neighbour onto the other six, and swapping the two tiles combined
/// with a half turn pairs `(p, q)` with `(R q, R p)`, so only about `P^2`
/// pairs are evaluated. Otherwise the mirror across the x axis (shared by the
/// leg layout and the square array) is used: three neighbours in full, and
/// the two neighbours on the mirror line against half of the workspace,
/// about `4 P^2` pairs.
pub fn shared_workspace_symmetric(
    ws: &WorkspaceSet,
    config: &ArrayConfig,
    geom: &TileGeometry,
) -> Result<SharedWorkspace, WorkspaceError> {
    let poses = ws.distinct_poses();
    let ctx = PairContext::new(&poses, config, geom);
    let n = poses.len();
    let d = config.tile_distance;
    let maps = SymmetryMaps::build(ws, &poses, ws.radially_symmetric)?;

    let (bad, checks) = if ws.radially_symmetric {
        let half_turn = &maps.quarter[2];
        let mut bad = vec![false; n];
        let mut checks = 0u64;
        for off in [NeighborOffset::new(1, 0, d), NeighborOffset::new(1, 1, d)] {
            let (b, c) = involution_scan(&ctx, n, &off, half_turn);
            checks += c;
            for (p, is_bad) in b.into_iter().enumerate() {
                if is_bad {
                    for rot in &maps.quarter {
                        bad[rot[p]] = true;
                    }
                }
            }
        }
        (bad, checks)
    } else {
        let mut bad = vec![false; n];
        let mut checks = 0u64;
        let all: Vec<usize> = (0..n).collect();
        for off in [NeighborOffset::new(0, 1, d), NeighborOffset::new(1, 1, d), NeighborOffset::new(-1, 1, d)] {
            let (b, c) = scan(&ctx, n, &off, &all);
            checks += c;
            merge_with_mirror(&mut bad, &b, &maps.mirror);
        }
        let half: Vec<usize> = (0..n).filter(|&q| in_upper_half(&poses.poses[q])).collect();
        for off in [NeighborOffset::new(1, 0, d), NeighborOffset::new(-1, 0, d)] {
            let (b, c) = scan(&ctx, n, &off, &half);
            checks += c;
            merge_with_mirror(&mut bad, &b, &maps.mirror);
        }
        (bad, checks)
    };

    let keep: Vec<bool> = bad.iter().map(|b| !b).collect();
    Ok(SharedWorkspace { set: ws.from_distinct(&poses, &keep), pair_checks: checks, pose_count: n })
}

/// Closed upper half-plane of yaw, `delta` in `[0, pi]` (flat poses included).
fn in_upper_half(p: &TilePose) -> bool {
    p.phi() == 0.0 || p.delta() <= PI
}

fn merge_with_mirror(bad: &mut [bool], found: &[bool], mirror: &[usize]) {
    for (p, &b) in found.iter().enumerate() {
        if b {
            bad[p] = true;
            bad[mirror[p]] = true;
        }
    }
}

fn scan(ctx: &PairContext, n: usize, off: &NeighborOffset, partners: &[usize]) -> (Vec<bool>, u64) {
    let bad: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|p| partners.iter().any(|&q| ctx.fails(p, q, off)))
        .collect();
    // every pair is evaluated exactly once when nothing fails; count the worst case
    (bad, (n * partners.len()) as u64)
}

/// Evaluates one representative of each `{(p, q), (R q, R p)}` orbit, where
/// `R` is the half turn. A failing pair marks `p` and `R q`.
fn involution_scan(ctx: &PairContext, n: usize, off: &NeighborOffset, half_turn: &[usize]) -> (Vec<bool>, u64) {
    let rows: Vec<(Vec<usize>, u64)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut marks = Vec::new();
            let mut count = 0u64;
            let rp = half_turn[p];
            for q in 0..n {
                let rq = half_turn[q];
                if (p, q) > (rq, rp) {
                    continue;
                }
                count += 1;
                if ctx.fails(p, q, off) {
                    marks.push(p);
                    marks.push(rq);
                }
            }
            (marks, count)
        })
        .collect();
    let mut bad = vec![false; n];
    let mut checks = 0;
    for (marks, c) in rows {
        checks += c;
        for m in marks {
            bad[m] = true;
        }
    }
    (bad, checks)
}

/// Corner groups used by the maximum-separation search: one group per
/// `(phi, r)` ring, bounded by a sphere.
struct CornerCluster {
    points: Vec<Vector3<f64>>,
    centre: Vector3<f64>,
    radius: f64,
}

impl CornerCluster {
    fn new(points: Vec<Vector3<f64>>) -> Self {
        let centre = points.iter().fold(Vector3::zeros(), |a, p| a + p) / points.len() as f64;
        let radius = points.iter().map(|p| (p - centre).norm()).fold(0.0, f64::max);
        Self { points, centre, radius }
    }
}

fn clusters_for(poses: &DistinctPoses, corners: &[CornerSet], corner: (i8, i8)) -> Vec<CornerCluster> {
    let mut rings: std::collections::BTreeMap<(usize, usize), Vec<Vector3<f64>>> = Default::default();
    for (k, &(_, ip, ir)) in poses.coords.iter().enumerate() {
        rings.entry((ip, ir)).or_default().push(corners[k].get(corner.0, corner.1));
    }
    rings.into_values().map(CornerCluster::new).collect()
}

/// Exact `max |a - b - o|` over `a` in `left`, `b` in `right`, pruned by the
/// cluster bounding spheres.
fn max_cluster_distance(left: &[CornerCluster], right: &[CornerCluster], o: &Vector3<f64>) -> f64 {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(left.len() * right.len());
    for (i, a) in left.iter().enumerate() {
        for (j, b) in right.iter().enumerate() {
            let ub = (a.centre - b.centre - o).norm() + a.radius + b.radius;
            candidates.push((ub, i, j));
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best_sq: f64 = 0.0;
    for (ub, i, j) in candidates {
        if ub * ub <= best_sq {
            break;
        }
        for a in &left[i].points {
            let shifted = a - o;
            for b in &right[j].points {
                best_sq = best_sq.max((shifted - b).norm_squared());
            }
        }
    }
    best_sq.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationMaxima {
    pub alpha_max: f64,
    pub beta_max: f64,
}

/// Largest `alpha` over edge-adjacent and `beta` over diagonal pose pairs.
/// The radially symmetric case only needs one neighbour of each kind; any
/// other workspace is evaluated against all eight.
pub fn alpha_beta_max(ws: &WorkspaceSet, tile_distance: f64, geom: &TileGeometry) -> Result<SeparationMaxima, WorkspaceError> {
    let poses = ws.distinct_poses();
    if poses.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }
    let corners: Vec<CornerSet> = poses.poses.iter().map(|p| end_effector_corners(p, geom)).collect();
    let offsets: Vec<NeighborOffset> = if ws.radially_symmetric {
        vec![NeighborOffset::new(1, 0, tile_distance), NeighborOffset::new(1, 1, tile_distance)]
    } else {
        NeighborOffset::all(tile_distance).to_vec()
    };
    let mut out = SeparationMaxima { alpha_max: 0.0, beta_max: 0.0 };
    for off in offsets {
        let (ca, cb, n) = off.corner_pairs();
        let o = off.vector();
        for k in 0..n {
            let left = clusters_for(&poses, &corners, ca[k]);
            let right = clusters_for(&poses, &corners, cb[k]);
            let m = max_cluster_distance(&left, &right, &o);
            match off.relation() {
                Relation::Edge => out.alpha_max = out.alpha_max.max(m),
                Relation::Diagonal => out.beta_max = out.beta_max.max(m),
            }
        }
    }
    Ok(out)
}

/// `max(alpha_max, beta_max / sqrt 2)`: the shortest material that leaves the
/// neighbouring workspaces decoupled.
pub fn min_material_length(ws: &WorkspaceSet, tile_distance: f64, geom: &TileGeometry) -> Result<f64, WorkspaceError> {
    let m = alpha_beta_max(ws, tile_distance, geom)?;
    Ok(m.alpha_max.max(m.beta_max / SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub tile_distance: f64,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub min_length: f64,
}

pub fn sweep_material(ws: &WorkspaceSet, distances: &[f64], geom: &TileGeometry) -> Result<Vec<SweepRow>, WorkspaceError> {
    if distances.is_empty() || distances.windows(2).any(|w| w[1] <= w[0]) || distances.iter().any(|d| *d <= 0.0) {
        return Err(WorkspaceError::BadRange);
    }
    distances
        .iter()
        .map(|&d| {
            let m = alpha_beta_max(ws, d, geom)?;
            Ok(SweepRow {
                tile_distance: d,
                alpha_max: m.alpha_max,
                beta_max: m.beta_max,
                min_length: m.alpha_max.max(m.beta_max / SQRT_2),
            })
        })
        .collect()
}

/// `D` values from `start` to `stop` inclusive.
pub fn distance_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, WorkspaceError> {
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() || start <= 0.0 {
        return Err(WorkspaceError::BadRange);
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + step * k as f64).collect())
}

pub const DEFAULT_TAUT_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TautSolution {
    pub assist_pose: TilePose,
    pub alpha: f64,
    /// Inclination of the material between the facing-edge midpoints,
    /// positive when the assisting edge is higher.
    pub gamma: f64,
    pub taut: bool,
}

/// Evaluates an assisting tile at the origin against a receiving tile at
/// `(D, 0)`: returns `(alpha, gamma)`.
pub fn assist_geometry(assist: &TilePose, receiving: &TilePose, tile_distance: f64, geom: &TileGeometry) -> (f64, f64) {
    let a = end_effector_corners(assist, geom);
    let b = end_effector_corners(receiving, geom).translated(&Vector3::new(tile_distance, 0.0, 0.0));
    let alpha = (a.get(1, 1) - b.get(-1, 1)).norm().max((a.get(1, -1) - b.get(-1, -1)).norm());
    let ma = 0.5 * (a.get(1, 1) + a.get(1, -1));
    let mb = 0.5 * (b.get(-1, 1) + b.get(-1, -1));
    let horizontal = (mb.xy() - ma.xy()).norm();
    let gamma = (ma.z - mb.z).atan2(horizontal);
    (alpha, gamma)
}

fn on_axis(p: &TilePose) -> bool {
    let d = p.delta();
    p.phi() == 0.0 || d.abs() < 1e-9 || (d - PI).abs() < 1e-9 || (TAU - d).abs() < 1e-9
}

/// Picks the assisting pose (yaw on the inter-tile axis) that pulls the
/// material taut, `|alpha - L| <= tol`, with the steepest material. Without
/// any taut candidate the pose closest to `alpha = L` is returned, flagged.
pub fn taut_assist_pose(
    receiving: &TilePose,
    config: &ArrayConfig,
    ws: &WorkspaceSet,
    geom: &TileGeometry,
    tolerance: f64,
) -> Result<TautSolution, WorkspaceError> {
    if !is_feasible(receiving, geom) {
        return Err(WorkspaceError::InfeasibleReceivingPose);
    }
    let poses = ws.distinct_poses();
    let target = config.material_length;
    let mut best_taut: Option<TautSolution> = None;
    let mut closest: Option<TautSolution> = None;
    for p in poses.poses.iter().filter(|p| on_axis(p)) {
        let (alpha, gamma) = assist_geometry(p, receiving, config.tile_distance, geom);
        let cand = TautSolution { assist_pose: *p, alpha, gamma, taut: (alpha - target).abs() <= tolerance };
        if cand.taut {
            let better = best_taut.is_none_or(|b| {
                cand.gamma > b.gamma || (cand.gamma == b.gamma && (alpha - target).abs() < (b.alpha - target).abs())
            });
            if better {
                best_taut = Some(cand);
            }
        }
        let closer = closest.is_none_or(|b| {
            let (e, eb) = ((alpha - target).abs(), (b.alpha - target).abs());
            e < eb || (e == eb && cand.gamma > b.gamma)
        });
        if closer {
            closest = Some(cand);
        }
    }
    best_taut.or(closest).ok_or(WorkspaceError::NoAxisPose)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TautCurveRow {
    pub material_length: f64,
    pub r: f64,
    pub max_phi: Option<f64>,
    pub max_gamma: Option<f64>,
}

/// For each `L` and each sampled height, the largest tilt and material
/// inclination among taut on-axis assisting poses.
pub fn taut_curves(
    receiving: &TilePose,
    tile_distance: f64,
    lengths: &[f64],
    ws: &WorkspaceSet,
    geom: &TileGeometry,
    tolerance: f64,
) -> Vec<TautCurveRow> {
    let poses = ws.distinct_poses();
    let evaluated: Vec<(TilePose, f64, f64)> = poses
        .poses
        .iter()
        .filter(|p| on_axis(p))
        .map(|p| {
            let (a, g) = assist_geometry(p, receiving, tile_distance, geom);
            (*p, a, g)
        })
        .collect();
    let mut rows = Vec::new();
    for &l in lengths {
        for &r in ws.grid.rs() {
            let mut row = TautCurveRow { material_length: l, r, max_phi: None, max_gamma: None };
            for (p, _, g) in evaluated.iter().filter(|(p, a, _)| p.r() == r && (a - l).abs() <= tolerance) {
                row.max_phi = Some(row.max_phi.map_or(p.phi(), |m| m.max(p.phi())));
                row.max_gamma = Some(row.max_gamma.map_or(*g, |m| m.max(*g)));
            }
            rows.push(row);
        }
    }
    rows
}
