//! Scenario files (TOML) and the bundled experiment set.
//!
//! ```toml
//! name = "example"
//! starts = [[-130.5, 130.5]]
//!
//! [array]            # rows, cols, tile_distance (mm), material_length (mm), effector_height (mm, optional)
//! [geometry]         # optional TileGeometry overrides
//! [object]           # kind = "slider" | "roller", radius, mu_s, mu_k, fv
//! [goal]             # type = "target" (point), "waypoints" (points, loops) or "regions" (regions, loops)
//! [sim]              # dt, gravity, damping, debounce, target_radius, target_hold, timeout, ...
//! [controller]       # centring_radius, centring_hold, [controller.gains], [controller.limits], [controller.oscillation]
//! [[weights]]        # from = "CENTRE", to = "TILE", multiplier = 4.0
//! [topology]         # host, host_port, removed_links, power_chain
//! [output]           # trace, controller_log, region_map, decimate
//! ```

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{route_command, validate_power_chain, BusError, LinkTopology, Port, PowerViolation, TileAddress};
use crate::controller::ControllerParams;
use crate::kinematics::TileGeometry;
use crate::regions::{default_weight_overrides, RegionId, RegionKind, WeightOverrides};
use crate::sim::{ObjectSpec, SimParams};
use crate::workspace::ArrayConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Power(#[from] PowerViolation),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub rows: usize,
    pub cols: usize,
    pub tile_distance: f64,
    pub material_length: f64,
    pub effector_height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalSpec {
    Target {
        point: [f64; 2],
    },
    Waypoints {
        points: Vec<[f64; 2]>,
        #[serde(default = "one")]
        loops: usize,
    },
    Regions {
        regions: Vec<RegionId>,
        #[serde(default = "one")]
        loops: usize,
    },
}

fn one() -> usize {
    1
}

/// One step of a goal sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    /// Hold within the target radius for the hold time.
    Point(Vector2<f64>),
    /// Be reported (debounced) in the region.
    Region(RegionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverride {
    pub from: RegionKind,
    pub to: RegionKind,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub host: [usize; 2],
    pub host_port: Port,
    pub removed_links: Vec<[[usize; 2]; 2]>,
    pub power_chain: Vec<[usize; 2]>,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self { host: [0, 0], host_port: Port::Left, removed_links: Vec::new(), power_chain: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub trace: String,
    pub controller_log: String,
    pub region_map: String,
    /// Keep every n-th trace row.
    pub decimate: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trace: "trace.csv".into(),
            controller_log: "controller_log.csv".into(),
            region_map: "region_map.csv".into(),
            decimate: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub array: ArraySection,
    #[serde(default)]
    pub geometry: TileGeometry,
    pub object: ObjectSpec,
    pub starts: Vec<[f64; 2]>,
    pub goal: GoalSpec,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub controller: ControllerParams,
    /// Applied on top of the default multipliers.
    #[serde(default)]
    pub weights: Vec<WeightOverride>,
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

pub const BUNDLED: [(&str, &str); 4] = [
    ("puck_cycle", include_str!("../scenarios/puck_cycle.toml")),
    ("sphere_intertile_cycle", include_str!("../scenarios/sphere_intertile_cycle.toml")),
    ("cube_point_to_point", include_str!("../scenarios/cube_point_to_point.toml")),
    ("tetra_point_to_point", include_str!("../scenarios/tetra_point_to_point.toml")),
];

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn bundled(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name).ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))?;
        Self::parse(text)
    }

    pub fn geometry(&self) -> TileGeometry {
        let mut g = self.geometry;
        if let Some(h) = self.array.effector_height {
            g.effector_height = h;
        }
        g
    }

    pub fn array_config(&self) -> ArrayConfig {
        ArrayConfig {
            rows: self.array.rows,
            cols: self.array.cols,
            tile_distance: self.array.tile_distance,
            material_length: self.array.material_length,
        }
    }

    pub fn weight_overrides(&self) -> WeightOverrides {
        let mut w = default_weight_overrides();
        for o in &self.weights {
            w.insert((o.from, o.to), o.multiplier);
        }
        w
    }

    /// Goal sequence with loops unrolled.
    pub fn goals(&self) -> Vec<Goal> {
        match &self.goal {
            GoalSpec::Target { point } => vec![Goal::Point(Vector2::new(point[0], point[1]))],
            GoalSpec::Waypoints { points, loops } => (0..*loops)
                .flat_map(|_| points.iter().map(|p| Goal::Point(Vector2::new(p[0], p[1]))))
                .collect(),
            GoalSpec::Regions { regions, loops } => (0..*loops).flat_map(|_| regions.iter().map(|r| Goal::Region(*r))).collect(),
        }
    }

    pub fn topology(&self) -> Result<Option<LinkTopology>, ScenarioError> {
        let Some(spec) = &self.topology else { return Ok(None) };
        let addr = |p: [usize; 2]| TileAddress::new(p[0], p[1]);
        let mut t = LinkTopology::full(self.array.rows, self.array.cols);
        t.host = addr(spec.host);
        t.host_port = spec.host_port;
        for [a, b] in &spec.removed_links {
            t.remove_link(addr(*a), addr(*b))?;
        }
        t.power_chain = spec.power_chain.iter().map(|p| addr(*p)).collect();
        Ok(Some(t))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        let a = &self.array;
        if a.rows == 0 || a.cols == 0 {
            return bad("array.rows and array.cols must be at least 1");
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(a.tile_distance) || !positive(a.material_length) {
            return bad("array lengths must be positive");
        }
        if a.effector_height.is_some_and(|h| !(h >= 0.0)) {
            return bad("array.effector_height must be non-negative");
        }
        if let Err(e) = self.geometry().validate() {
            return Err(ScenarioError::Invalid(e.to_string()));
        }
        if a.tile_distance <= self.geometry().effector_width {
            return bad("array.tile_distance must exceed the effector width");
        }
        if let Err(e) = self.object.validate() {
            return Err(ScenarioError::Invalid(e.to_string()));
        }
        let s = &self.sim;
        if !positive(s.dt) || !positive(s.timeout) {
            return bad("sim.dt and sim.timeout must be positive");
        }
        if !positive(s.gravity) || s.damping < 0.0 || s.debounce < 0.0 || !positive(s.target_radius) || s.target_hold < 0.0 {
            return bad("sim parameters out of range");
        }
        if self.starts.is_empty() {
            return bad("at least one start position is required");
        }
        let goals = self.goals();
        if goals.is_empty() {
            return bad("goal sequence is empty");
        }
        for g in &goals {
            if let Goal::Region(r) = g {
                let (rr, cc) = match r {
                    RegionId::Tile(t) | RegionId::Centre(t) => *t,
                    RegionId::InterTile(_, b) => *b,
                };
                let centre_ok = !matches!(r, RegionId::Centre(_)) || (rr + 1 < a.rows && cc + 1 < a.cols);
                if rr >= a.rows || cc >= a.cols || !centre_ok {
                    return Err(ScenarioError::Invalid(format!("goal region {r} is not part of the array")));
                }
            }
        }
        if self.weights.iter().any(|w| !(w.multiplier >= 0.0)) {
            return bad("weight multipliers must be non-negative");
        }
        if self.output.decimate == 0 {
            return bad("output.decimate must be at least 1");
        }
        if let Some(t) = self.topology()? {
            validate_power_chain(&t)?;
            for r in 0..t.rows {
                for c in 0..t.cols {
                    route_command(&t, t.host, TileAddress::new(r, c))?;
                }
            }
        }
        Ok(())
    }
}
