//! Static segmentation of the array surface into tile, inter-tile and centre
//! regions, the weighted region graph and shortest-path planning over it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::TileGeometry;
use crate::workspace::ArrayConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("inter-tile distance {distance} mm must exceed the effector width {width} mm")]
    Degenerate { distance: f64, width: f64 },
    #[error("array must have at least one row and one column")]
    EmptyArray,
    #[error("point ({0}, {1}) lies outside the array surface")]
    OutOfBounds(f64, f64),
    #[error("negative weight multiplier {0}")]
    NegativeMultiplier(f64),
    #[error("region {0} is not part of the graph")]
    UnknownRegion(RegionId),
    #[error("region {to} is unreachable from {from}")]
    Unreachable { from: RegionId, to: RegionId },
    #[error("cannot parse region id `{0}`")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionKind {
    Tile,
    InterTile,
    Centre,
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionKind::Tile => "TILE",
            RegionKind::InterTile => "INTER_TILE",
            RegionKind::Centre => "CENTRE",
        })
    }
}

impl FromStr for RegionKind {
    type Err = RegionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TILE" => Ok(RegionKind::Tile),
            "INTER_TILE" | "INTER" => Ok(RegionKind::InterTile),
            "CENTRE" | "CENTER" => Ok(RegionKind::Centre),
            _ => Err(RegionError::Parse(s.to_string())),
        }
    }
}

/// Tile grid index, row 0 at the north edge, column 0 at the west edge.
pub type TileIndex = (usize, usize);

/// Region identity. The derived order (kind, then indices) is the
/// deterministic tie-break used throughout the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionId {
    Tile(TileIndex),
    /// Strip between two edge-adjacent tiles, `a < b`.
    InterTile(TileIndex, TileIndex),
    /// Gap between four tiles, named by its north-west tile.
    Centre(TileIndex),
}

impl RegionId {
    pub fn kind(&self) -> RegionKind {
        match self {
            RegionId::Tile(_) => RegionKind::Tile,
            RegionId::InterTile(..) => RegionKind::InterTile,
            RegionId::Centre(_) => RegionKind::Centre,
        }
    }

    pub fn inter(a: TileIndex, b: TileIndex) -> Self {
        if a <= b {
            RegionId::InterTile(a, b)
        } else {
            RegionId::InterTile(b, a)
        }
    }

    /// Resolves the compass names of a 2x2 array (`TILE_NW`, `INTER_N`,
    /// `CENTRE`, ...) as well as the generic index form.
    pub fn parse(s: &str) -> Result<Self, RegionError> {
        s.parse()
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionId::Tile((r, c)) => write!(f, "TILE_{r}_{c}"),
            RegionId::InterTile((r1, c1), (r2, c2)) => write!(f, "INTER_{r1}_{c1}_{r2}_{c2}"),
            RegionId::Centre((r, c)) => write!(f, "CENTRE_{r}_{c}"),
        }
    }
}

impl FromStr for RegionId {
    type Err = RegionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        let alias = match up.as_str() {
            "TILE_NW" => Some(RegionId::Tile((0, 0))),
            "TILE_NE" => Some(RegionId::Tile((0, 1))),
            "TILE_SW" => Some(RegionId::Tile((1, 0))),
            "TILE_SE" => Some(RegionId::Tile((1, 1))),
            "INTER_N" => Some(RegionId::InterTile((0, 0), (0, 1))),
            "INTER_S" => Some(RegionId::InterTile((1, 0), (1, 1))),
            "INTER_W" => Some(RegionId::InterTile((0, 0), (1, 0))),
            "INTER_E" => Some(RegionId::InterTile((0, 1), (1, 1))),
            "CENTRE" | "CENTER" => Some(RegionId::Centre((0, 0))),
            _ => None,
        };
        if let Some(id) = alias {
            return Ok(id);
        }
        let err = || RegionError::Parse(s.to_string());
        let mut parts = up.split('_');
        let head = parts.next().ok_or_else(err)?;
        let nums: Vec<usize> = parts.map(|p| p.parse().map_err(|_| err())).collect::<Result<_, _>>()?;
        match (head, nums.as_slice()) {
            ("TILE", [r, c]) => Ok(RegionId::Tile((*r, *c))),
            ("INTER", [r1, c1, r2, c2]) => {
                let (a, b) = ((*r1, *c1), (*r2, *c2));
                let adjacent = a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1;
                if adjacent {
                    Ok(RegionId::inter(a, b))
                } else {
                    Err(err())
                }
            }
            ("CENTRE" | "CENTER", [r, c]) => Ok(RegionId::Centre((*r, *c))),
            _ => Err(err()),
        }
    }
}

impl Serialize for RegionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn centred(c: Vector2<f64>, w: f64, h: f64) -> Self {
        Self { xmin: c.x - w / 2.0, ymin: c.y - h / 2.0, xmax: c.x + w / 2.0, ymax: c.y + h / 2.0 }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn centre(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    /// Closed containment.
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn clamp(&self, p: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(p.x.clamp(self.xmin, self.xmax), p.y.clamp(self.ymin, self.ymax))
    }

    /// True when the rectangles share a boundary segment of positive length.
    pub fn shares_edge(&self, o: &Rect) -> bool {
        const EPS: f64 = 1e-9;
        let x_overlap = self.xmax.min(o.xmax) - self.xmin.max(o.xmin);
        let y_overlap = self.ymax.min(o.ymax) - self.ymin.max(o.ymin);
        let touch_x = (self.xmax - o.xmin).abs() < EPS || (o.xmax - self.xmin).abs() < EPS;
        let touch_y = (self.ymax - o.ymin).abs() < EPS || (o.ymax - self.ymin).abs() < EPS;
        (touch_x && y_overlap > EPS) || (touch_y && x_overlap > EPS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub id: RegionId,
    pub rect: Rect,
}

impl Region {
    pub fn centre(&self) -> Vector2<f64> {
        self.rect.centre()
    }
}

/// Neutral base position of a tile.
pub fn tile_centre(config: &ArrayConfig, tile: TileIndex) -> Vector2<f64> {
    let d = config.tile_distance;
    Vector2::new(
        (tile.1 as f64 - (config.cols as f64 - 1.0) / 2.0) * d,
        ((config.rows as f64 - 1.0) / 2.0 - tile.0 as f64) * d,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub config: ArrayConfig,
    pub effector_width: f64,
    /// Sorted by id.
    pub regions: Vec<Region>,
    pub bounds: Rect,
}

pub fn segment_regions(config: &ArrayConfig, geom: &TileGeometry) -> Result<RegionMap, RegionError> {
    if config.rows == 0 || config.cols == 0 {
        return Err(RegionError::EmptyArray);
    }
    let (d, w) = (config.tile_distance, geom.effector_width);
    if !(d > w) {
        return Err(RegionError::Degenerate { distance: d, width: w });
    }
    let gap = d - w;
    let mut regions = Vec::new();
    for r in 0..config.rows {
        for c in 0..config.cols {
            let p = tile_centre(config, (r, c));
            regions.push(Region { id: RegionId::Tile((r, c)), rect: Rect::centred(p, w, w) });
            if c + 1 < config.cols {
                let m = 0.5 * (p + tile_centre(config, (r, c + 1)));
                regions.push(Region { id: RegionId::inter((r, c), (r, c + 1)), rect: Rect::centred(m, gap, w) });
            }
            if r + 1 < config.rows {
                let m = 0.5 * (p + tile_centre(config, (r + 1, c)));
                regions.push(Region { id: RegionId::inter((r, c), (r + 1, c)), rect: Rect::centred(m, w, gap) });
            }
            if r + 1 < config.rows && c + 1 < config.cols {
                let m = 0.5 * (p + tile_centre(config, (r + 1, c + 1)));
                regions.push(Region { id: RegionId::Centre((r, c)), rect: Rect::centred(m, gap, gap) });
            }
        }
    }
    regions.sort_by_key(|r| r.id);
    let nw = tile_centre(config, (0, 0));
    let se = tile_centre(config, (config.rows - 1, config.cols - 1));
    let bounds = Rect { xmin: nw.x - w / 2.0, ymin: se.y - w / 2.0, xmax: se.x + w / 2.0, ymax: nw.y + w / 2.0 };
    Ok(RegionMap { config: *config, effector_width: w, regions, bounds })
}

impl RegionMap {
    pub fn get(&self, id: RegionId) -> Option<&Region> {
        self.regions.binary_search_by_key(&id, |r| r.id).ok().map(|k| &self.regions[k])
    }

    pub fn count(&self, kind: RegionKind) -> usize {
        self.regions.iter().filter(|r| r.id.kind() == kind).count()
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        self.bounds.contains(p)
    }

    /// Raw containment; boundary points go to the smallest containing id.
    pub fn region_at(&self, p: Vector2<f64>) -> Result<RegionId, RegionError> {
        self.regions
            .iter()
            .find(|r| r.rect.contains(p))
            .map(|r| r.id)
            .ok_or(RegionError::OutOfBounds(p.x, p.y))
    }

    pub fn tile_centre(&self, tile: TileIndex) -> Vector2<f64> {
        tile_centre(&self.config, tile)
    }
}

/// Debounces raw region lookups: the reported region changes only after the
/// object has stayed in a new region for `debounce` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellTracker {
    reported: RegionId,
    entered_at: f64,
    candidate: Option<(RegionId, f64)>,
    debounce: f64,
}

impl DwellTracker {
    pub fn new(initial: RegionId, t: f64, debounce: f64) -> Self {
        Self { reported: initial, entered_at: t, candidate: None, debounce }
    }

    pub fn reported(&self) -> RegionId {
        self.reported
    }

    /// Time since the reported region last changed.
    pub fn dwell(&self, t: f64) -> f64 {
        t - self.entered_at
    }

    pub fn update(&mut self, raw: RegionId, t: f64) -> RegionId {
        const EPS: f64 = 1e-9;
        if raw == self.reported {
            self.candidate = None;
        } else {
            match self.candidate {
                Some((c, since)) if c == raw => {
                    if t - since >= self.debounce - EPS {
                        self.reported = raw;
                        self.entered_at = t;
                        self.candidate = None;
                    }
                }
                _ => self.candidate = Some((raw, t)),
            }
        }
        self.reported
    }
}

pub fn locate_region(p: Vector2<f64>, map: &RegionMap, tracker: &mut DwellTracker, t: f64) -> Result<RegionId, RegionError> {
    let raw = map.region_at(p)?;
    Ok(tracker.update(raw, t))
}

/// Directed multipliers keyed by (from kind, to kind); missing pairs weigh 1.
pub type WeightOverrides = BTreeMap<(RegionKind, RegionKind), f64>;

pub fn default_weight_overrides() -> WeightOverrides {
    BTreeMap::from([((RegionKind::Centre, RegionKind::Tile), 4.0)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    /// Sorted.
    pub nodes: Vec<RegionId>,
    /// Outgoing `(node index, weight)` lists.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl RegionGraph {
    /// Graph from explicit undirected edges carrying a weight per direction.
    pub fn from_edges(mut nodes: Vec<RegionId>, edges: &[(RegionId, RegionId, f64, f64)]) -> Result<Self, RegionError> {
        nodes.sort();
        nodes.dedup();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b, wab, wba) in edges {
            for w in [wab, wba] {
                if w < 0.0 || w.is_nan() {
                    return Err(RegionError::NegativeMultiplier(w));
                }
            }
            let ia = nodes.binary_search(&a).map_err(|_| RegionError::UnknownRegion(a))?;
            let ib = nodes.binary_search(&b).map_err(|_| RegionError::UnknownRegion(b))?;
            adjacency[ia].push((ib, wab));
            adjacency[ib].push((ia, wba));
        }
        for list in &mut adjacency {
            list.sort_by_key(|e| e.0);
        }
        Ok(Self { nodes, adjacency })
    }

    pub fn index(&self, id: RegionId) -> Result<usize, RegionError> {
        self.nodes.binary_search(&id).map_err(|_| RegionError::UnknownRegion(id))
    }

    pub fn weight(&self, from: RegionId, to: RegionId) -> Option<f64> {
        let (a, b) = (self.index(from).ok()?, self.index(to).ok()?);
        self.adjacency[a].iter().find(|e| e.0 == b).map(|e| e.1)
    }

    pub fn neighbours(&self, id: RegionId) -> Vec<RegionId> {
        match self.index(id) {
            Ok(k) => self.adjacency[k].iter().map(|e| self.nodes[e.0]).collect(),
            Err(_) => Vec::new(),
        }
    }
}

pub fn build_graph(map: &RegionMap, overrides: &WeightOverrides) -> Result<RegionGraph, RegionError> {
    if let Some(&m) = overrides.values().find(|m| **m < 0.0 || m.is_nan()) {
        return Err(RegionError::NegativeMultiplier(m));
    }
    let mult = |a: RegionKind, b: RegionKind| overrides.get(&(a, b)).copied().unwrap_or(1.0);
    let mut edges = Vec::new();
    for (i, a) in map.regions.iter().enumerate() {
        for b in &map.regions[i + 1..] {
            if a.rect.shares_edge(&b.rect) {
                let dist = (a.centre() - b.centre()).norm();
                let (ka, kb) = (a.id.kind(), b.id.kind());
                edges.push((a.id, b.id, dist * mult(ka, kb), dist * mult(kb, ka)));
            }
        }
    }
    RegionGraph::from_edges(map.regions.iter().map(|r| r.id).collect(), &edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    /// Current region first, goal last.
    pub regions: Vec<RegionId>,
    pub cost: f64,
}

impl PathPlan {
    pub fn current(&self) -> RegionId {
        self.regions[0]
    }

    pub fn goal(&self) -> RegionId {
        *self.regions.last().expect("plans are never empty")
    }

    pub fn next(&self) -> Option<RegionId> {
        self.regions.get(1).copied()
    }

    pub fn is_complete(&self) -> bool {
        self.regions.len() == 1
    }
}

/// Dijkstra with labels ordered by (cost, region sequence), so equal-cost
/// paths resolve to the lexicographically smallest sequence.
pub fn plan_path(graph: &RegionGraph, from: RegionId, to: RegionId) -> Result<PathPlan, RegionError> {
    let s = graph.index(from)?;
    let g = graph.index(to)?;
    let n = graph.nodes.len();
    let mut label: Vec<Option<(f64, Vec<RegionId>)>> = vec![None; n];
    let mut done = vec![false; n];
    label[s] = Some((0.0, vec![from]));
    loop {
        let mut pick: Option<usize> = None;
        for k in 0..n {
            if done[k] {
                continue;
            }
            if let Some(lk) = &label[k] {
                let better = match pick {
                    None => true,
                    Some(p) => {
                        let lp = label[p].as_ref().expect("picked nodes are labelled");
                        lk.0 < lp.0 || (lk.0 == lp.0 && lk.1 < lp.1)
                    }
                };
                if better {
                    pick = Some(k);
                }
            }
        }
        let Some(u) = pick else {
            return Err(RegionError::Unreachable { from, to });
        };
        done[u] = true;
        let (cost, path) = label[u].clone().expect("picked nodes are labelled");
        if u == g {
            return Ok(PathPlan { regions: path, cost });
        }
        for &(v, w) in &graph.adjacency[u] {
            if done[v] {
                continue;
            }
            let c = cost + w;
            let mut p = path.clone();
            p.push(graph.nodes[v]);
            let replace = match &label[v] {
                None => true,
                Some((cv, pv)) => c < *cv || (c == *cv && p < *pv),
            };
            if replace {
                label[v] = Some((c, p));
            }
        }
    }
}

/// Advances the plan when the object arrives where expected, re-plans from
/// the observed region otherwise.
pub fn replan_on_transition(plan: &PathPlan, observed: RegionId, graph: &RegionGraph) -> Result<PathPlan, RegionError> {
    if observed == plan.current() {
        return Ok(plan.clone());
    }
    if plan.next() == Some(observed) {
        let w = graph.weight(plan.current(), observed).unwrap_or(0.0);
        return Ok(PathPlan { regions: plan.regions[1..].to_vec(), cost: (plan.cost - w).max(0.0) });
    }
    plan_path(graph, observed, plan.goal())
}
