use std::f64::consts::{PI, TAU};

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use tilearray::bus::{route_command, LinkTopology, TileAddress};
use tilearray::kinematics::{forward_kinematics, inverse_kinematics, is_feasible, LegAngles, TileGeometry, TilePose};
use tilearray::regions::{segment_regions, DwellTracker, RegionId};
use tilearray::sim::{step_object, ObjectSpec, ObjectState, SimParams};
use tilearray::surface::SurfaceField;
use tilearray::trajectory::{plan_trajectory, TrajectoryLimits};
use tilearray::workspace::ArrayConfig;

fn translation(p: &TilePose) -> Vector3<f64> {
    p.direction() * p.r()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fk_inverts_ik(delta in 0.0..TAU, phi in 0.0..0.45f64, r in 40.0..140.0f64) {
        let geom = TileGeometry::default();
        let pose = TilePose::new(delta, phi, r);
        prop_assume!(is_feasible(&pose, &geom));
        let angles = inverse_kinematics(&pose, &geom).unwrap();
        let back = forward_kinematics(&angles, &geom).unwrap();
        prop_assert!((translation(&back) - translation(&pose)).norm() < 1e-6, "{pose:?} -> {back:?}");
    }

    #[test]
    fn canonical_pose_keeps_direction(delta in -20.0..20.0f64, phi in -1.5..1.5f64, r in 1.0..200.0f64) {
        let p = TilePose::new(delta, phi, r);
        prop_assert!((0.0..TAU).contains(&p.delta()));
        prop_assert!(p.phi() >= 0.0);
        let raw = Vector3::new(phi.sin() * delta.cos(), phi.sin() * delta.sin(), phi.cos());
        prop_assert!((p.direction() - raw).norm() < 1e-9);
        prop_assert_eq!(TilePose::new(p.delta(), p.phi(), p.r()), p);
    }

    #[test]
    fn trajectories_respect_limits(
        from in prop::array::uniform3(-1.5..1.5f64),
        to in prop::array::uniform3(-1.5..1.5f64),
        frac in 0.0..1.0f64,
    ) {
        let limits = TrajectoryLimits::default();
        let plan = plan_trajectory(&LegAngles(from), &LegAngles(to), &limits);
        prop_assert_eq!(plan.sample(0.0), LegAngles(from));
        prop_assert_eq!(plan.sample(plan.duration), LegAngles(to));
        let t = frac * plan.duration;
        for (v, a) in plan.velocity(t).iter().zip(plan.acceleration(t)) {
            prop_assert!(v.abs() <= limits.vel_max + 1e-9);
            prop_assert!(a.abs() <= limits.acc_max + 1e-9);
        }
        let dt = 1e-4;
        let (s0, s1) = (plan.sample(t), plan.sample((t + dt).min(plan.duration)));
        prop_assert!(s0.max_abs_diff(&s1) <= limits.vel_max * dt + 1e-9);
    }

    #[test]
    fn debounce_needs_a_full_stay(steps in prop::collection::vec((0usize..3, 1u32..400), 1..60)) {
        let ids = [RegionId::Tile((0, 0)), RegionId::Tile((0, 1)), RegionId::Centre((0, 0))];
        let debounce = 0.5;
        let mut tracker = DwellTracker::new(ids[0], 0.0, debounce);
        let mut t_ms = 0u32;
        let mut run: Option<(usize, u32)> = None;
        for (k, dur) in steps {
            for _ in 0..dur {
                t_ms += 10;
                let t = t_ms as f64 / 1000.0;
                let run_start = match run {
                    Some((id, s)) if id == k => s,
                    _ => t_ms,
                };
                run = Some((k, run_start));
                let before = tracker.reported();
                let after = tracker.update(ids[k], t);
                if after != before {
                    prop_assert_eq!(after, ids[k]);
                    prop_assert!(t_ms - run_start >= 500);
                }
            }
        }
    }

    #[test]
    fn intact_routes_are_manhattan(rows in 1usize..7, cols in 1usize..7, seed in any::<(usize, usize, usize, usize)>()) {
        let t = LinkTopology::full(rows, cols);
        let host = TileAddress::new(seed.0 % rows, seed.1 % cols);
        let target = TileAddress::new(seed.2 % rows, seed.3 % cols);
        let route = route_command(&t, host, target).unwrap();
        prop_assert_eq!(route.len(), host.row.abs_diff(target.row) + host.col.abs_diff(target.col));
        let mut at = host;
        for hop in route {
            prop_assert!(t.has_link(at, hop));
            at = hop;
        }
        prop_assert_eq!(at, target);
    }

    #[test]
    fn routes_only_use_present_links(cuts in prop::collection::vec((0usize..4, 0usize..4, any::<bool>()), 0..10), tr in 0usize..4, tc in 0usize..4) {
        let mut t = LinkTopology::full(4, 4);
        for (r, c, down) in cuts {
            let a = TileAddress::new(r, c);
            let b = if down { TileAddress::new(r + 1, c) } else { TileAddress::new(r, c + 1) };
            let _ = t.remove_link(a, b);
        }
        let target = TileAddress::new(tr, tc);
        if let Ok(route) = route_command(&t, t.host, target) {
            let mut at = t.host;
            for hop in route {
                prop_assert!(t.has_link(at, hop));
                at = hop;
            }
            prop_assert_eq!(at, target);
        }
    }

    #[test]
    fn every_point_has_one_home(rows in 1usize..5, cols in 1usize..5, u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let map = segment_regions(&ArrayConfig { rows, cols, tile_distance: 261.0, material_length: 150.0 }, &TileGeometry::default()).unwrap();
        let b = map.bounds;
        let p = Vector2::new(b.xmin + u * (b.xmax - b.xmin), b.ymin + v * (b.ymax - b.ymin));
        let id = map.region_at(p).unwrap();
        prop_assert!(map.get(id).unwrap().rect.contains(p));
    }

    #[test]
    fn slider_rests_on_level_tiles(tile in 0usize..4, dx in -40.0..40.0f64, dy in -40.0..40.0f64) {
        let geom = TileGeometry::default();
        let config = ArrayConfig::default();
        let poses = vec![TilePose::flat(100.0); 4];
        let surface = SurfaceField::build(&poses, &config, &geom).unwrap();
        let p = surface.map.tile_centre((tile / 2, tile % 2)) + Vector2::new(dx, dy);
        let state = ObjectState::at_rest(p, &surface.map).unwrap();
        let next = step_object(&state, &surface, &ObjectSpec::slider(0.35, 0.30), &SimParams::default(), false);
        prop_assert_eq!(next.position, p);
        prop_assert_eq!(next.velocity, Vector2::zeros());
    }

    #[test]
    fn quarter_turns_compose(delta in 0.0..TAU, phi in 0.01..1.0f64, k in 0u32..8) {
        let p = TilePose::new(delta, phi, 100.0);
        let mut q = p;
        for _ in 0..k {
            q = q.rotated(PI / 2.0);
        }
        let want = TilePose::new(delta + k as f64 * PI / 2.0, phi, 100.0);
        prop_assert!((translation(&q) - translation(&want)).norm() < 1e-9);
        prop_assert!((translation(&p.mirrored_y().mirrored_y()) - translation(&p)).norm() < 1e-9);
    }
}
