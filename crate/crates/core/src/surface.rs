//! Height field of the whole manipulation surface: rigid plates joined by
//! inextensible strips that sag when slack.
//!
//! Regions are the static rectangles of [`RegionMap`]. Over a tile region the
//! surface is the plate plane. Across an edge strip each ruling joins the two
//! plate planes at the strip boundaries; when the true 3D distance `d` between
//! the facing plate edges is shorter than the material length `Lm`, the ruling
//! hangs as a V with midpoint drop `sqrt(Lm^2 - d^2) / 2`. A centre region is
//! the bilinearly blended (Coons) patch of its four bounding strip profiles.

use std::f64::consts::SQRT_2;
use std::io::Write;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::kinematics::{corners_of, is_feasible, pose_to_transform, CornerSet, RigidTransform, TileGeometry, TilePose};
use crate::regions::{segment_regions, Region, RegionError, RegionId, RegionMap, TileIndex};
use crate::workspace::ArrayConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("expected {expected} tile poses, got {got}")]
    PoseCount { expected: usize, got: usize },
    #[error("pose of tile ({0}, {1}) is infeasible")]
    InfeasiblePose(usize, usize),
    #[error(transparent)]
    Region(#[from] RegionError),
}

/// Midpoint drop of an inextensible strip of length `material` spanning `chord`.
pub fn triangle_sag(material: f64, chord: f64) -> f64 {
    if chord >= material {
        0.0
    } else {
        0.5 * (material * material - chord * chord).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripState {
    Taut,
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripProfile {
    pub chord: f64,
    pub material_length: f64,
    pub state: StripState,
    pub sag: f64,
}

impl StripProfile {
    pub fn new(chord: f64, material_length: f64) -> Self {
        let state = if chord >= material_length { StripState::Taut } else { StripState::Slack };
        Self { chord, material_length, state, sag: triangle_sag(material_length, chord) }
    }
}

#[derive(Debug, Clone)]
struct Plate {
    /// Top-surface centre.
    centre: Vector3<f64>,
    normal: Vector3<f64>,
    /// Top-surface corners in world coordinates.
    corners: CornerSet,
}

impl Plate {
    fn height(&self, x: f64, y: f64) -> f64 {
        let n = &self.normal;
        self.centre.z - (n.x * (x - self.centre.x) + n.y * (y - self.centre.y)) / n.z
    }
}

/// Strip orientation: `East` strips join a tile to its eastern neighbour,
/// `South` strips to its southern neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    East,
    South,
}

#[derive(Debug, Clone)]
pub struct SurfaceField {
    pub config: ArrayConfig,
    pub geom: TileGeometry,
    pub map: RegionMap,
    pub poses: Vec<TilePose>,
    plates: Vec<Plate>,
    strained: Vec<RegionId>,
}

impl SurfaceField {
    /// Builds the field from row-major tile poses.
    pub fn build(poses: &[TilePose], config: &ArrayConfig, geom: &TileGeometry) -> Result<Self, SurfaceError> {
        let n = config.rows * config.cols;
        if poses.len() != n {
            return Err(SurfaceError::PoseCount { expected: n, got: poses.len() });
        }
        for (k, p) in poses.iter().enumerate() {
            if !is_feasible(p, geom) {
                return Err(SurfaceError::InfeasiblePose(k / config.cols, k % config.cols));
            }
        }
        let transforms: Vec<RigidTransform> = poses.iter().map(|p| pose_to_transform(p, geom)).collect();
        let mut field = Self::from_transforms(&transforms, config, geom)?;
        field.poses = poses.to_vec();
        Ok(field)
    }

    /// Builds the field from plate transforms relative to each tile base.
    pub fn from_transforms(transforms: &[RigidTransform], config: &ArrayConfig, geom: &TileGeometry) -> Result<Self, SurfaceError> {
        let n = config.rows * config.cols;
        if transforms.len() != n {
            return Err(SurfaceError::PoseCount { expected: n, got: transforms.len() });
        }
        let map = segment_regions(config, geom)?;
        let plates = transforms
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let base = map.tile_centre((k / config.cols, k % config.cols));
                let offset = Vector3::new(base.x, base.y, 0.0);
                let centre = h.apply(&Vector3::new(0.0, 0.0, geom.effector_height)) + offset;
                let normal = h.rotation * Vector3::z();
                Plate { centre, normal, corners: corners_of(h, geom).translated(&offset) }
            })
            .collect();
        let poses = transforms.iter().map(|h| TilePose::from_translation(&h.translation)).collect();
        let mut field = Self { config: *config, geom: *geom, map, poses, plates, strained: Vec::new() };
        field.strained = field.find_strained();
        Ok(field)
    }

    fn plate(&self, t: TileIndex) -> &Plate {
        &self.plates[t.0 * self.config.cols + t.1]
    }

    fn find_strained(&self) -> Vec<RegionId> {
        const EPS: f64 = 1e-9;
        let l = self.config.material_length;
        let mut out = Vec::new();
        for region in &self.map.regions {
            match region.id {
                RegionId::Tile(_) => {}
                RegionId::InterTile(a, b) => {
                    let axis = if a.0 == b.0 { Axis::East } else { Axis::South };
                    let (pa, pb) = (self.plate(a), self.plate(b));
                    let chords = match axis {
                        Axis::East => [(pa.corners.get(1, 1), pb.corners.get(-1, 1)), (pa.corners.get(1, -1), pb.corners.get(-1, -1))],
                        Axis::South => [(pa.corners.get(-1, -1), pb.corners.get(-1, 1)), (pa.corners.get(1, -1), pb.corners.get(1, 1))],
                    };
                    if chords.iter().any(|(p, q)| (p - q).norm() > l + EPS) {
                        out.push(region.id);
                    }
                }
                RegionId::Centre((r, c)) => {
                    let d1 = (self.plate((r, c)).corners.get(1, -1) - self.plate((r + 1, c + 1)).corners.get(-1, 1)).norm();
                    let d2 = (self.plate((r, c + 1)).corners.get(-1, -1) - self.plate((r + 1, c)).corners.get(1, 1)).norm();
                    if d1.max(d2) > SQRT_2 * l + EPS {
                        out.push(region.id);
                    }
                }
            }
        }
        out
    }

    /// True when some strip is stretched beyond its material length; such
    /// strips are drawn taut.
    pub fn is_strained(&self) -> bool {
        !self.strained.is_empty()
    }

    pub fn strained_regions(&self) -> &[RegionId] {
        &self.strained
    }

    pub fn bounds(&self) -> crate::regions::Rect {
        self.map.bounds
    }

    fn region(&self, id: RegionId) -> &Region {
        self.map.get(id).expect("region ids come from the map")
    }

    /// Strip geometry at a point: heights of the two boundaries, the parameter
    /// `s` across the strip and the chord of the ruling through the point.
    fn strip_terms(&self, a: TileIndex, b: TileIndex, p: Vector2<f64>) -> (f64, f64, f64, f64) {
        let rect = self.region(RegionId::inter(a, b)).rect;
        let (pa, pb) = (self.plate(a), self.plate(b));
        let w = self.geom.effector_width;
        if a.0 == b.0 {
            let s = (p.x - rect.xmin) / rect.width();
            let v = (p.y - rect.ymin) / w;
            let ea = pa.corners.get(1, -1).lerp(&pa.corners.get(1, 1), v);
            let eb = pb.corners.get(-1, -1).lerp(&pb.corners.get(-1, 1), v);
            (pa.height(rect.xmin, p.y), pb.height(rect.xmax, p.y), s, (ea - eb).norm())
        } else {
            let s = (rect.ymax - p.y) / rect.height();
            let v = (p.x - rect.xmin) / w;
            let ea = pa.corners.get(-1, -1).lerp(&pa.corners.get(1, -1), v);
            let eb = pb.corners.get(-1, 1).lerp(&pb.corners.get(1, 1), v);
            (pa.height(p.x, rect.ymax), pb.height(p.x, rect.ymin), s, (ea - eb).norm())
        }
    }

    fn strip_height(&self, a: TileIndex, b: TileIndex, p: Vector2<f64>) -> f64 {
        let (za, zb, s, chord) = self.strip_terms(a, b, p);
        let sag = triangle_sag(self.config.material_length, chord);
        za + s * (zb - za) - sag * (1.0 - (2.0 * s - 1.0).abs())
    }

    fn centre_height(&self, nw: TileIndex, p: Vector2<f64>) -> f64 {
        let (r, c) = nw;
        let rect = self.region(RegionId::Centre(nw)).rect;
        let (x0, x1, y0, y1) = (rect.xmin, rect.xmax, rect.ymax, rect.ymin);
        let u = (p.x - x0) / (x1 - x0);
        let w = (y0 - p.y) / (y0 - y1);
        let north = |x: f64| self.strip_height((r, c), (r, c + 1), Vector2::new(x, y0));
        let south = |x: f64| self.strip_height((r + 1, c), (r + 1, c + 1), Vector2::new(x, y1));
        let west = |y: f64| self.strip_height((r, c), (r + 1, c), Vector2::new(x0, y));
        let east = |y: f64| self.strip_height((r, c + 1), (r + 1, c + 1), Vector2::new(x1, y));
        let ruled = (1.0 - w) * north(p.x) + w * south(p.x) + (1.0 - u) * west(p.y) + u * east(p.y);
        let corners = (1.0 - u) * (1.0 - w) * north(x0) + u * (1.0 - w) * north(x1) + (1.0 - u) * w * south(x0) + u * w * south(x1);
        ruled - corners
    }

    /// Height from one region's formula; the formulas extend smoothly a
    /// little beyond their rectangles.
    pub fn height_in(&self, id: RegionId, p: Vector2<f64>) -> f64 {
        match id {
            RegionId::Tile(t) => self.plate(t).height(p.x, p.y),
            RegionId::InterTile(a, b) => self.strip_height(a, b, p),
            RegionId::Centre(nw) => self.centre_height(nw, p),
        }
    }

    pub fn height_at(&self, p: Vector2<f64>) -> Result<f64, SurfaceError> {
        let id = self.map.region_at(p)?;
        Ok(self.height_in(id, p))
    }

    /// Finite-difference slope with a 1 mm step, evaluated with the formula of
    /// `region` (or of the region containing `p`) and one-sided at that
    /// region's boundary.
    pub fn gradient_at(&self, p: Vector2<f64>, region: Option<RegionId>) -> Result<Vector2<f64>, SurfaceError> {
        const H: f64 = 1.0;
        let id = match region {
            Some(id) if self.map.get(id).is_some_and(|r| r.rect.contains(p)) => id,
            _ => self.map.region_at(p)?,
        };
        let rect = self.region(id).rect;
        let z = |q: Vector2<f64>| self.height_in(id, q);
        let diff = |lo: f64, hi: f64, v: f64, at: &dyn Fn(f64) -> Vector2<f64>| {
            if v - H >= lo && v + H <= hi {
                (z(at(v + H)) - z(at(v - H))) / (2.0 * H)
            } else if v + H <= hi {
                (z(at(v + H)) - z(at(v))) / H
            } else {
                (z(at(v)) - z(at(v - H))) / H
            }
        };
        let gx = diff(rect.xmin, rect.xmax, p.x, &|x| Vector2::new(x, p.y));
        let gy = diff(rect.ymin, rect.ymax, p.y, &|y| Vector2::new(p.x, y));
        Ok(Vector2::new(gx, gy))
    }

    /// Profile of an edge strip along its middle ruling.
    pub fn strip_profile(&self, id: RegionId) -> Option<StripProfile> {
        let RegionId::InterTile(a, b) = id else { return None };
        let centre = self.map.get(id)?.centre();
        let (_, _, _, chord) = self.strip_terms(a, b, centre);
        Some(StripProfile::new(chord, self.config.material_length))
    }

    /// Writes `x_mm,y_mm,z_mm` on a regular grid with the given spacing.
    pub fn write_csv<W: Write>(&self, out: W, spacing: f64) -> Result<(), crate::export::ExportError> {
        let b = self.map.bounds;
        let nx = ((b.width() / spacing).floor() as usize).max(1);
        let ny = ((b.height() / spacing).floor() as usize).max(1);
        let mut rows = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let p = Vector2::new(b.xmin + b.width() * i as f64 / nx as f64, b.ymin + b.height() * j as f64 / ny as f64);
                let z = self.height_at(p).expect("grid points lie inside the bounds");
                rows.push(vec![p.x, p.y, z]);
            }
        }
        crate::export::write_numeric(out, &["x_mm", "y_mm", "z_mm"], rows)
    }
}
