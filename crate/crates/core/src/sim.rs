//! Fixed-step simulation of one object carried by the array.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{stuck_oscillation, Controller, ControllerInput, ControllerLogRow, Mode};
use crate::kinematics::{forward_kinematics_from, inverse_kinematics, pose_to_transform, LegAngles, TileGeometry, TilePose};
use crate::regions::{build_graph, plan_path, replan_on_transition, segment_regions, DwellTracker, RegionError, RegionId, RegionMap};
use crate::scenario::{Goal, ScenarioConfig};
use crate::surface::{SurfaceError, SurfaceField};
use crate::trajectory::{plan_trajectory, TrajectoryLimits, TrajectoryPlan};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("invalid object: {0}")]
    InvalidObject(&'static str),
    #[error("start position ({0}, {1}) lies outside the array surface")]
    StartOutOfBounds(f64, f64),
    #[error("neutral pose is infeasible for this tile geometry")]
    InfeasibleNeutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Slider,
    Roller,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    /// Footprint radius (mm).
    pub radius: f64,
    pub mu_s: f64,
    pub mu_k: f64,
    /// Friction scale while the tiles vibrate.
    #[serde(default = "default_fv")]
    pub fv: f64,
}

fn default_fv() -> f64 {
    0.5
}

impl ObjectSpec {
    pub fn slider(mu_s: f64, mu_k: f64) -> Self {
        Self { kind: ObjectKind::Slider, radius: 20.0, mu_s, mu_k, fv: 0.5 }
    }

    pub fn roller() -> Self {
        Self { kind: ObjectKind::Roller, radius: 20.0, mu_s: 0.0, mu_k: 0.0, fv: 1.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.radius > 0.0) {
            return Err(SimError::InvalidObject("radius must be positive"));
        }
        if !(self.mu_s >= 0.0 && self.mu_k >= 0.0) {
            return Err(SimError::InvalidObject("friction coefficients must be non-negative"));
        }
        if self.mu_k > self.mu_s {
            return Err(SimError::InvalidObject("kinetic friction must not exceed static friction"));
        }
        if !(self.fv > 0.0 && self.fv <= 1.0) {
            return Err(SimError::InvalidObject("vibration factor must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// s
    pub dt: f64,
    /// mm/s^2
    pub gravity: f64,
    /// 1/s
    pub damping: f64,
    /// s
    pub debounce: f64,
    /// mm
    pub target_radius: f64,
    /// s
    pub target_hold: f64,
    /// Slope below which a roller is left alone.
    pub rolling_threshold: f64,
    /// Speeds below this count as rest (mm/s).
    pub rest_epsilon: f64,
    /// s
    pub timeout: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.001,
            gravity: 9810.0,
            damping: 2.0,
            debounce: 0.5,
            target_radius: 15.0,
            target_hold: 1.0,
            rolling_threshold: 0.01,
            rest_epsilon: 1e-6,
            timeout: 120.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    /// Debounced region.
    pub region: RegionId,
    pub dwell: f64,
}

impl ObjectState {
    pub fn at_rest(position: Vector2<f64>, map: &RegionMap) -> Result<Self, SimError> {
        let region = map.region_at(position).map_err(|_| SimError::StartOutOfBounds(position.x, position.y))?;
        Ok(Self { position, velocity: Vector2::zeros(), region, dwell: 0.0 })
    }
}

/// Advances the object by one step. Region bookkeeping is left to the caller.
pub fn step_object(state: &ObjectState, surface: &SurfaceField, spec: &ObjectSpec, params: &SimParams, vibrating: bool) -> ObjectState {
    let dt = params.dt;
    let g = params.gravity;
    let raw = surface.map.region_at(state.position).ok();
    let grad = surface.gradient_at(state.position, raw).unwrap_or_else(|_| Vector2::zeros());
    let tan = grad.norm();
    let cos = 1.0 / (1.0 + tan * tan).sqrt();
    let sin = tan * cos;
    let downhill = if tan > 0.0 { -grad / tan } else { Vector2::zeros() };
    let scale = if vibrating { spec.fv } else { 1.0 };
    let v = state.velocity;
    let speed = v.norm();
    let damped = v * (1.0 - params.damping * dt);

    let velocity = match spec.kind {
        ObjectKind::Slider => {
            if speed <= params.rest_epsilon && tan <= spec.mu_s * scale {
                Vector2::zeros()
            } else {
                let pred = damped + downhill * (g * sin * dt);
                let friction = spec.mu_k * scale * g * cos * dt;
                let n = pred.norm();
                if n <= friction {
                    Vector2::zeros()
                } else {
                    pred * (1.0 - friction / n)
                }
            }
        }
        ObjectKind::Roller => {
            if tan > params.rolling_threshold {
                damped + downhill * (5.0 / 7.0 * g * sin * dt)
            } else {
                damped
            }
        }
    };

    let mut position = state.position + velocity * dt;
    let mut velocity = velocity;
    let b = surface.map.bounds;
    if position.x < b.xmin || position.x > b.xmax {
        position.x = position.x.clamp(b.xmin, b.xmax);
        velocity.x = 0.0;
    }
    if position.y < b.ymin || position.y > b.ymax {
        position.y = position.y.clamp(b.ymin, b.ymax);
        velocity.y = 0.0;
    }
    ObjectState { position, velocity, ..*state }
}

/// Tracks how long a position has continuously stayed within the target radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetTracker {
    pub target: Vector2<f64>,
    pub radius: f64,
    pub hold: f64,
    since: Option<f64>,
}

impl TargetTracker {
    pub fn new(target: Vector2<f64>, params: &SimParams) -> Self {
        Self { target, radius: params.target_radius, hold: params.target_hold, since: None }
    }

    /// Feeds one sample; true once the hold time is met (closed thresholds).
    pub fn update(&mut self, t: f64, p: Vector2<f64>) -> bool {
        if (p - self.target).norm() <= self.radius {
            let since = *self.since.get_or_insert(t);
            t - since >= self.hold - 1e-9
        } else {
            self.since = None;
            false
        }
    }
}

/// True if the samples contain a stretch of at least `target_hold` seconds
/// spent within `target_radius` of `target`.
pub fn check_target_reached(samples: &[(f64, Vector2<f64>)], target: Vector2<f64>, params: &SimParams) -> bool {
    let mut tracker = TargetTracker::new(target, params);
    samples.iter().any(|(t, p)| tracker.update(*t, *p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub position: Vector2<f64>,
    pub region: RegionId,
    pub mode: Mode,
    pub poses: Vec<TilePose>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    /// Debounced regions in visiting order, without repeats.
    pub fn region_sequence(&self) -> Vec<RegionId> {
        let mut out: Vec<RegionId> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.region) {
                out.push(r.region);
            }
        }
        out
    }

    pub fn samples(&self) -> Vec<(f64, Vector2<f64>)> {
        self.rows.iter().map(|r| (r.t, r.position)).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W, tiles: usize, decimate: usize) -> Result<(), crate::export::ExportError> {
        use crate::export::fmt_num;
        let mut header = vec!["t_s".to_string(), "x_mm".into(), "y_mm".into(), "region_id".into(), "ctrl_state".into()];
        for k in 0..tiles {
            header.extend([format!("tile{k}_delta_rad"), format!("tile{k}_phi_rad"), format!("tile{k}_r_mm")]);
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let step = decimate.max(1);
        let rows = self.rows.iter().step_by(step).map(|r| {
            let mut row = vec![fmt_num(r.t), fmt_num(r.position.x), fmt_num(r.position.y), r.region.to_string(), r.mode.label().to_string()];
            for p in &r.poses {
                row.extend([fmt_num(p.delta()), fmt_num(p.phi()), fmt_num(p.r())]);
            }
            row
        });
        crate::export::write_records(out, &header, rows)
    }
}

pub fn write_controller_log<W: std::io::Write>(log: &[ControllerLogRow], out: W) -> Result<(), crate::export::ExportError> {
    use crate::export::fmt_num;
    let rows = log.iter().map(|r| {
        vec![
            fmt_num(r.t),
            r.mode.label().to_string(),
            r.region.to_string(),
            r.next_region.map(|n| n.to_string()).unwrap_or_default(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
        ]
    });
    crate::export::write_records(out, &["t_s", "mode", "region", "next_region", "k"], rows)
}

/// One tile's motors following rest-to-rest trajectories.
#[derive(Debug, Clone)]
struct TileActuator {
    angles: LegAngles,
    pose: TilePose,
    target: TilePose,
    plan: Option<(TrajectoryPlan, f64)>,
}

impl TileActuator {
    fn new(pose: TilePose, geom: &TileGeometry) -> Result<Self, SimError> {
        let angles = inverse_kinematics(&pose, geom).map_err(|_| SimError::InfeasibleNeutral)?;
        Ok(Self { angles, pose, target: pose, plan: None })
    }

    fn is_moving(&self) -> bool {
        self.plan.is_some()
    }

    /// Advances the motors to time `t`; a new target is adopted only once
    /// the running trajectory has finished.
    fn update(&mut self, t: f64, desired: TilePose, geom: &TileGeometry, limits: &TrajectoryLimits) {
        if let Some((plan, t0)) = &self.plan {
            if plan.is_finished(t - t0) {
                self.angles = plan.to;
                self.pose = self.target;
                self.plan = None;
            } else {
                self.angles = plan.sample(t - t0);
                if let Ok(p) = forward_kinematics_from(&self.angles, geom, &self.pose) {
                    self.pose = p;
                }
            }
        }
        if self.plan.is_none() && desired != self.target {
            if let Ok(goal) = inverse_kinematics(&desired, geom) {
                self.target = desired;
                if goal.max_abs_diff(&self.angles) > 1e-12 {
                    self.plan = Some((plan_trajectory(&self.angles, &goal, limits), t));
                } else {
                    self.pose = desired;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub start: Vector2<f64>,
    pub trace: SimTrace,
    pub controller_log: Vec<ControllerLogRow>,
    /// Completion time of each goal reached.
    pub goal_times: Vec<f64>,
    pub goal_count: usize,
    pub success: bool,
    pub timed_out: bool,
    /// Ticks on which some strip was stretched past its length.
    pub strained_ticks: usize,
}

/// Runs one start of a scenario to completion or timeout. Deterministic.
pub fn run_from(config: &ScenarioConfig, start: Vector2<f64>) -> Result<RunOutcome, SimError> {
    let geom = config.geometry();
    let array = config.array_config();
    let params = config.sim;
    let spec = config.object;
    spec.validate()?;
    let map = segment_regions(&array, &geom)?;
    let graph = build_graph(&map, &config.weight_overrides())?;
    let goals = config.goals();
    let n_tiles = array.rows * array.cols;

    let mut object = ObjectState::at_rest(start, &map)?;
    let mut tracker = DwellTracker::new(object.region, 0.0, params.debounce);
    let neutral = crate::controller::neutral_pose();
    let mut tiles: Vec<TileActuator> = (0..n_tiles).map(|_| TileActuator::new(neutral, &geom)).collect::<Result<_, _>>()?;
    let mut controller = Controller::new(config.controller, map.clone(), object.region);

    let goal_region = |g: &Goal| -> Result<RegionId, SimError> {
        Ok(match g {
            Goal::Point(p) => map.region_at(*p)?,
            Goal::Region(r) => *r,
        })
    };
    let mut goal_idx = 0;
    let mut plan = plan_path(&graph, object.region, goal_region(&goals[0])?)?;
    let mut target = match goals[0] {
        Goal::Point(p) => Some(TargetTracker::new(p, &params)),
        Goal::Region(_) => None,
    };

    let transforms = |poses: &[TilePose]| poses.iter().map(|p| pose_to_transform(p, &geom)).collect::<Vec<_>>();
    let mut current_poses: Vec<TilePose> = tiles.iter().map(|t| t.pose).collect();
    let mut surface = SurfaceField::from_transforms(&transforms(&current_poses), &array, &geom)?;

    let mut trace = SimTrace::default();
    let mut goal_times = Vec::new();
    let mut strained_ticks = 0;
    let mut success = false;
    let max_ticks = (params.timeout / params.dt).ceil() as u64;
    let mut tick: u64 = 0;
    loop {
        let t = tick as f64 * params.dt;
        let raw = map.region_at(object.position)?;
        let reported = tracker.update(raw, t);
        if reported != object.region {
            object.region = reported;
            plan = replan_on_transition(&plan, reported, &graph)?;
        }
        object.dwell = tracker.dwell(t);

        let reached = match (&mut target, &goals[goal_idx]) {
            (Some(tt), _) => tt.update(t, object.position),
            (None, Goal::Region(r)) => reported == *r,
            (None, Goal::Point(_)) => false,
        };
        if reached {
            goal_times.push(t);
            goal_idx += 1;
            if goal_idx == goals.len() {
                success = true;
            } else {
                plan = plan_path(&graph, reported, goal_region(&goals[goal_idx])?)?;
                target = match goals[goal_idx] {
                    Goal::Point(p) => Some(TargetTracker::new(p, &params)),
                    Goal::Region(_) => None,
                };
            }
        }

        let setpoint = match goals.get(goal_idx) {
            Some(Goal::Point(p)) => *p,
            Some(Goal::Region(r)) => map.get(*r).map(|r| r.centre()).unwrap_or(object.position),
            None => object.position,
        };
        let moving: Vec<bool> = tiles.iter().map(TileActuator::is_moving).collect();
        let out = controller.step(
            &ControllerInput {
                t,
                object: object.position,
                region: reported,
                dwell: object.dwell,
                plan: &plan,
                setpoint,
                goal_reached: success,
                tiles_moving: &moving,
            },
            params.dt,
        );

        for (tile, desired) in tiles.iter_mut().zip(&out.targets) {
            tile.update(t, *desired, &geom, &config.controller.limits);
        }
        let poses: Vec<TilePose> = tiles
            .iter()
            .map(|tile| match out.oscillation_time {
                Some(ot) => stuck_oscillation(&tile.pose, ot, &config.controller.oscillation, &geom),
                None => tile.pose,
            })
            .collect();
        if poses != current_poses {
            surface = SurfaceField::from_transforms(&transforms(&poses), &array, &geom)?;
            current_poses = poses;
        }
        if surface.is_strained() {
            strained_ticks += 1;
        }

        trace.rows.push(TraceRow { t, position: object.position, region: reported, mode: out.mode, poses: current_poses.clone() });
        if success || tick >= max_ticks {
            break;
        }
        object = step_object(&object, &surface, &spec, &params, out.oscillation_time.is_some());
        tick += 1;
    }

    Ok(RunOutcome {
        start,
        trace,
        controller_log: controller.log().to_vec(),
        goal_times,
        goal_count: goals.len(),
        success,
        timed_out: !success,
        strained_ticks,
    })
}

/// Runs every start listed in the scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<RunOutcome>, SimError> {
    config.starts.iter().map(|s| run_from(config, Vector2::new(s[0], s[1]))).collect()
}
