//! Region-driven state machine producing tile pose targets.
//!
//! Transitions between regions use a small table of reference poses written
//! for a 2x2 cell. Any concrete transition is obtained by mapping the
//! reference onto the local 2x2 cell with one of the eight symmetries of the
//! square (quarter turns `R(k pi / 2)`, optionally after the mirror
//! `x -> -x`). A quarter turn adds `pi / 2` to every yaw and moves slot
//! contents NW -> SW -> SE -> NE; the mirror maps `delta -> pi - delta` and
//! swaps east and west slots.
//!
//! Yaw convention: a plate with yaw `delta` has its low side towards
//! `(cos delta, sin delta)`, so objects slide in the yaw direction.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{is_feasible, TileGeometry, TilePose};
use crate::regions::{PathPlan, RegionId, RegionKind, RegionMap, TileIndex};
use crate::trajectory::TrajectoryLimits;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("no canonical transition from {0} to {1}")]
    UnknownTransition(RegionKind, RegionKind),
    #[error("quadrant index {0} is outside 0..=3")]
    BadQuadrant(usize),
    #[error("regions {0} and {1} do not share a 2x2 cell")]
    NoCommonCell(RegionId, RegionId),
}

/// Tile slots of a 2x2 cell, in table column order.
pub const SLOTS: [&str; 4] = ["NW", "NE", "SW", "SE"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    TileToInter,
    InterToTile,
    InterToCentre,
    CentreToInter,
}

impl Transition {
    pub const ALL: [Transition; 4] =
        [Transition::TileToInter, Transition::InterToTile, Transition::InterToCentre, Transition::CentreToInter];

    pub fn from_kinds(current: RegionKind, next: RegionKind) -> Result<Self, ControllerError> {
        use RegionKind::*;
        match (current, next) {
            (Tile, InterTile) => Ok(Transition::TileToInter),
            (InterTile, Tile) => Ok(Transition::InterToTile),
            (InterTile, Centre) => Ok(Transition::InterToCentre),
            (Centre, InterTile) => Ok(Transition::CentreToInter),
            _ => Err(ControllerError::UnknownTransition(current, next)),
        }
    }

    /// `(delta, phi, r)` for NW, NE, SW, SE exactly as tabulated.
    pub fn table_row(&self) -> [(f64, f64, f64); 4] {
        let tilt = 5.0 * PI / 36.0;
        match self {
            Transition::TileToInter => [(0.0, tilt, 90.0), (0.0, 0.0, 90.0), (0.0, 0.0, 90.0), (0.0, 0.0, 90.0)],
            Transition::InterToTile => [(0.0, 0.0, 10.0), (0.0, tilt, 90.0), (0.0, 0.0, 90.0), (0.0, 0.0, 90.0)],
            Transition::InterToCentre => [
                (3.0 * PI / 2.0, tilt, 90.0),
                (3.0 * PI / 2.0, tilt, 90.0),
                (PI / 2.0, tilt, 90.0),
                (PI / 2.0, tilt, 90.0),
            ],
            Transition::CentreToInter => [
                (0.0, 0.0, 10.0),
                (PI, 0.0, 10.0),
                (5.0 * PI / 4.0, PI / 12.0, 90.0),
                (7.0 * PI / 4.0, PI / 12.0, 90.0),
            ],
        }
    }

    /// The reference move the row performs, as doubled cell coordinates of
    /// the source and destination regions (tiles at `(+-1, +-1)`, strips at
    /// edge midpoints, the centre at the origin).
    fn reference_move(&self) -> ((i8, i8), (i8, i8)) {
        match self {
            // NW tilts its east side down: TILE_NW -> INTER_N
            Transition::TileToInter => ((-1, 1), (0, 1)),
            // NW lowered, NE raises its west edge: INTER_N -> TILE_NW
            Transition::InterToTile => ((0, 1), (-1, 1)),
            // all four tilt towards the cell centre: INTER_N -> CENTRE
            Transition::InterToCentre => ((0, 1), (0, 0)),
            // north pair lowered, south pair lifts its inner corners: CENTRE -> INTER_N
            Transition::CentreToInter => ((0, 0), (0, 1)),
        }
    }
}

/// Element of the symmetry group of the square: mirror `x -> -x` (if set)
/// followed by `k` counter-clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellSymmetry {
    pub k: u8,
    pub mirror: bool,
}

impl CellSymmetry {
    pub const IDENTITY: CellSymmetry = CellSymmetry { k: 0, mirror: false };

    pub fn all() -> impl Iterator<Item = CellSymmetry> {
        [false, true].into_iter().flat_map(|mirror| (0..4).map(move |k| CellSymmetry { k, mirror }))
    }

    /// Compact label: `k` for rotations, `k + 4` when mirrored.
    pub fn index(&self) -> u8 {
        self.k + if self.mirror { 4 } else { 0 }
    }

    fn apply_point(&self, p: (i8, i8)) -> (i8, i8) {
        let (mut x, mut y) = p;
        if self.mirror {
            x = -x;
        }
        for _ in 0..self.k {
            (x, y) = (-y, x);
        }
        (x, y)
    }

    pub fn apply_pose(&self, pose: &TilePose) -> TilePose {
        let d = if self.mirror { PI - pose.delta() } else { pose.delta() };
        TilePose::new(d + self.k as f64 * PI / 2.0, pose.phi(), pose.r())
    }
}

fn slot_position(slot: usize) -> (i8, i8) {
    [(-1, 1), (1, 1), (-1, -1), (1, -1)][slot]
}

fn slot_at(p: (i8, i8)) -> usize {
    match p {
        (-1, 1) => 0,
        (1, 1) => 1,
        (-1, -1) => 2,
        _ => 3,
    }
}

/// Table row mapped by `g`, indexed by destination slot.
pub fn canonical_poses_with(transition: Transition, g: CellSymmetry) -> [TilePose; 4] {
    let row = transition.table_row();
    let mut out = [TilePose::flat(90.0); 4];
    for (slot, &(d, p, r)) in row.iter().enumerate() {
        let dest = slot_at(g.apply_point(slot_position(slot)));
        out[dest] = g.apply_pose(&TilePose::new(d, p, r));
    }
    out
}

/// Table row for `current -> next` rotated by `k` quarter turns.
pub fn canonical_poses(current: RegionKind, next: RegionKind, k: usize) -> Result<[TilePose; 4], ControllerError> {
    if k > 3 {
        return Err(ControllerError::BadQuadrant(k));
    }
    let t = Transition::from_kinds(current, next)?;
    Ok(canonical_poses_with(t, CellSymmetry { k: k as u8, mirror: false }))
}

/// Where a concrete transition sits: the north-west tile of its 2x2 cell
/// (may lie outside the array) and the symmetry mapping the reference move
/// onto it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTransition {
    pub transition: Transition,
    pub cell: (i64, i64),
    pub symmetry: CellSymmetry,
}

fn candidate_cells(id: RegionId) -> Vec<(i64, i64)> {
    let t = |p: TileIndex| (p.0 as i64, p.1 as i64);
    match id {
        RegionId::Tile(p) => {
            let (r, c) = t(p);
            vec![(r - 1, c - 1), (r - 1, c), (r, c - 1), (r, c)]
        }
        RegionId::InterTile(a, b) => {
            let (r, c) = t(a);
            if a.0 == b.0 {
                vec![(r - 1, c), (r, c)]
            } else {
                vec![(r, c - 1), (r, c)]
            }
        }
        RegionId::Centre(p) => vec![t(p)],
    }
}

fn cell_position(id: RegionId, cell: (i64, i64)) -> (i8, i8) {
    let tile = |p: TileIndex| {
        let x = 2 * (p.1 as i64 - cell.1) - 1;
        let y = 1 - 2 * (p.0 as i64 - cell.0);
        (x, y)
    };
    let (x, y) = match id {
        RegionId::Tile(p) => tile(p),
        RegionId::InterTile(a, b) => {
            let (pa, pb) = (tile(a), tile(b));
            ((pa.0 + pb.0) / 2, (pa.1 + pb.1) / 2)
        }
        RegionId::Centre(_) => (0, 0),
    };
    (x as i8, y as i8)
}

pub fn local_transition(from: RegionId, to: RegionId, rows: usize, cols: usize) -> Result<LocalTransition, ControllerError> {
    let transition = Transition::from_kinds(from.kind(), to.kind())?;
    let to_cells = candidate_cells(to);
    let mut cells: Vec<(i64, i64)> = candidate_cells(from).into_iter().filter(|c| to_cells.contains(c)).collect();
    let inside = |c: &(i64, i64)| c.0 >= 0 && c.1 >= 0 && c.0 + 1 < rows as i64 && c.1 + 1 < cols as i64;
    cells.sort_by_key(|c| (!inside(c), *c));
    let cell = *cells.first().ok_or(ControllerError::NoCommonCell(from, to))?;
    let (pf, pt) = (cell_position(from, cell), cell_position(to, cell));
    let (rf, rt) = transition.reference_move();
    let symmetry = CellSymmetry::all()
        .find(|g| g.apply_point(rf) == pf && g.apply_point(rt) == pt)
        .ok_or(ControllerError::NoCommonCell(from, to))?;
    Ok(LocalTransition { transition, cell, symmetry })
}

/// Targets for every tile of the array (row-major): the mapped table row on
/// the cell, `neutral` elsewhere.
pub fn transition_targets(lt: &LocalTransition, rows: usize, cols: usize, neutral: TilePose) -> Vec<TilePose> {
    let poses = canonical_poses_with(lt.transition, lt.symmetry);
    let mut out = vec![neutral; rows * cols];
    for (slot, pose) in poses.iter().enumerate() {
        let (dr, dc) = [(0, 0), (0, 1), (1, 0), (1, 1)][slot];
        let (r, c) = (lt.cell.0 + dr, lt.cell.1 + dc);
        if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols {
            out[r as usize * cols + c as usize] = *pose;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    /// rad per mm
    pub kp: f64,
    /// rad per mm s
    pub ki: f64,
    /// rad s per mm
    pub kd: f64,
    /// Largest commanded tilt (rad).
    pub clamp: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 0.004, ki: 0.0005, kd: 0.002, clamp: 5.0 * PI / 36.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    integral: f64,
    last_error: Option<f64>,
}

impl PidState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

pub const CENTRING_HEIGHT: f64 = 90.0;

/// Tilt command pushing an object towards `centre`. The distance error is
/// fed through a PID; a negative output tilts the other way to brake.
pub fn centring_command(object: Vector2<f64>, centre: Vector2<f64>, gains: &PidGains, pid: &mut PidState, dt: f64) -> TilePose {
    let offset = centre - object;
    let error = offset.norm();
    let derivative = match pid.last_error {
        Some(prev) if dt > 0.0 => (error - prev) / dt,
        _ => 0.0,
    };
    pid.last_error = Some(error);
    let raw = gains.kp * error + gains.ki * (pid.integral + error * dt) + gains.kd * derivative;
    // integrate only while the output is not saturated
    if raw.abs() < gains.clamp {
        pid.integral += error * dt;
    }
    let u = gains.kp * error + gains.ki * pid.integral + gains.kd * derivative;
    if error == 0.0 {
        return TilePose::flat(CENTRING_HEIGHT);
    }
    let toward = offset.y.atan2(offset.x);
    let (delta, phi) = if u >= 0.0 { (toward, u) } else { (toward + PI, -u) };
    TilePose::new(delta, phi.min(gains.clamp), CENTRING_HEIGHT)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillationParams {
    /// Dwell in one region before oscillation starts (s).
    pub dwell: f64,
    /// mm
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
}

impl Default for OscillationParams {
    fn default() -> Self {
        Self { dwell: 5.0, amplitude: 10.0, frequency: 10.0 }
    }
}

/// Base pose with `r` modulated sinusoidally; heights the tile cannot reach
/// are pulled back to the nearest feasible one.
pub fn stuck_oscillation(base: &TilePose, t: f64, params: &OscillationParams, geom: &TileGeometry) -> TilePose {
    let r = base.r() + params.amplitude * (2.0 * PI * params.frequency * t).sin();
    let pose = base.with_r(r);
    if is_feasible(&pose, geom) || !is_feasible(base, geom) {
        return pose;
    }
    let (mut ok, mut bad) = (base.r(), r);
    for _ in 0..60 {
        let mid = 0.5 * (ok + bad);
        if is_feasible(&base.with_r(mid), geom) {
            ok = mid;
        } else {
            bad = mid;
        }
    }
    base.with_r(ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Transit,
    Centring,
    Oscillating,
    Hold,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Transit => "TRANSIT",
            Mode::Centring => "CENTRING",
            Mode::Oscillating => "OSCILLATING",
            Mode::Hold => "HOLD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub gains: PidGains,
    pub limits: TrajectoryLimits,
    pub oscillation: OscillationParams,
    /// An object within this distance of a tile centre counts as centred (mm).
    pub centring_radius: f64,
    /// How long it must stay there before the next transition starts (s).
    pub centring_hold: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            gains: PidGains::default(),
            limits: TrajectoryLimits::default(),
            oscillation: OscillationParams::default(),
            centring_radius: 15.0,
            centring_hold: 0.5,
        }
    }
}

pub fn neutral_pose() -> TilePose {
    TilePose::flat(90.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub region: RegionId,
    pub next_region: Option<RegionId>,
    pub region_elapsed: f64,
    pub kind: RegionKind,
    pub tiles_moving: Vec<bool>,
    pub mode: Mode,
    /// Symmetry index of the active transition.
    pub k: Option<u8>,
}

pub struct ControllerInput<'a> {
    pub t: f64,
    pub object: Vector2<f64>,
    /// Debounced region.
    pub region: RegionId,
    /// Time spent in `region`.
    pub dwell: f64,
    pub plan: &'a PathPlan,
    /// Where to park the object once it is on the goal tile.
    pub setpoint: Vector2<f64>,
    pub goal_reached: bool,
    pub tiles_moving: &'a [bool],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub targets: Vec<TilePose>,
    pub mode: Mode,
    /// Time since oscillation was triggered, while it is active.
    pub oscillation_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerLogRow {
    pub t: f64,
    pub mode: Mode,
    pub region: RegionId,
    pub next_region: Option<RegionId>,
    pub k: Option<u8>,
}

#[derive(Debug, Clone)]
pub struct Controller {
    pub params: ControllerParams,
    map: RegionMap,
    state: ControllerState,
    pid: PidState,
    centred_since: Option<f64>,
    transit_latched: bool,
    log: Vec<ControllerLogRow>,
}

impl Controller {
    pub fn new(params: ControllerParams, map: RegionMap, initial: RegionId) -> Self {
        let n = map.config.rows * map.config.cols;
        let state = ControllerState {
            region: initial,
            next_region: None,
            region_elapsed: 0.0,
            kind: initial.kind(),
            tiles_moving: vec![false; n],
            mode: Mode::Hold,
            k: None,
        };
        Self { params, map, state, pid: PidState::default(), centred_since: None, transit_latched: false, log: Vec::new() }
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn log(&self) -> &[ControllerLogRow] {
        &self.log
    }

    fn tile_count(&self) -> usize {
        self.map.config.rows * self.map.config.cols
    }

    fn neutral(&self) -> Vec<TilePose> {
        vec![neutral_pose(); self.tile_count()]
    }

    fn centring(&mut self, tile: TileIndex, object: Vector2<f64>, setpoint: Vector2<f64>, dt: f64) -> Vec<TilePose> {
        let mut targets = self.neutral();
        let pose = centring_command(object, setpoint, &self.params.gains, &mut self.pid, dt);
        targets[tile.0 * self.map.config.cols + tile.1] = pose;
        targets
    }

    fn transit(&mut self, from: RegionId, to: RegionId) -> (Vec<TilePose>, Option<u8>) {
        let (rows, cols) = (self.map.config.rows, self.map.config.cols);
        match local_transition(from, to, rows, cols) {
            Ok(lt) => (transition_targets(&lt, rows, cols, neutral_pose()), Some(lt.symmetry.index())),
            Err(_) => (self.neutral(), None),
        }
    }

    pub fn step(&mut self, input: &ControllerInput, dt: f64) -> ControllerOutput {
        if input.region != self.state.region {
            self.pid.reset();
            self.centred_since = None;
            self.transit_latched = false;
        }
        let next = input.plan.next();
        let mut k = None;
        let (targets, mut mode) = if input.goal_reached {
            (self.neutral(), Mode::Hold)
        } else {
            match (input.region, next) {
                (RegionId::Tile(tile), None) => (self.centring(tile, input.object, input.setpoint, dt), Mode::Centring),
                (RegionId::Tile(tile), Some(to)) => {
                    let centre = self.map.tile_centre(tile);
                    if !self.transit_latched {
                        if (input.object - centre).norm() <= self.params.centring_radius {
                            let since = *self.centred_since.get_or_insert(input.t);
                            if input.t - since >= self.params.centring_hold - 1e-9 {
                                self.transit_latched = true;
                            }
                        } else {
                            self.centred_since = None;
                        }
                    }
                    if self.transit_latched {
                        let (tg, kk) = self.transit(input.region, to);
                        k = kk;
                        (tg, Mode::Transit)
                    } else {
                        (self.centring(tile, input.object, centre, dt), Mode::Centring)
                    }
                }
                (_, Some(to)) => {
                    let (tg, kk) = self.transit(input.region, to);
                    k = kk;
                    (tg, Mode::Transit)
                }
                (_, None) => (self.neutral(), Mode::Hold),
            }
        };
        let osc = &self.params.oscillation;
        let oscillation_time = if mode != Mode::Hold && input.dwell > osc.dwell {
            mode = Mode::Oscillating;
            Some(input.dwell - osc.dwell)
        } else {
            None
        };

        let changed = self.log.is_empty()
            || self.state.mode != mode
            || self.state.region != input.region
            || self.state.next_region != next
            || self.state.k != k;
        self.state = ControllerState {
            region: input.region,
            next_region: next,
            region_elapsed: input.dwell,
            kind: input.region.kind(),
            tiles_moving: input.tiles_moving.to_vec(),
            mode,
            k,
        };
        if changed {
            self.log.push(ControllerLogRow { t: input.t, mode, region: input.region, next_region: next, k });
        }
        ControllerOutput { targets, mode, oscillation_time }
    }
}
