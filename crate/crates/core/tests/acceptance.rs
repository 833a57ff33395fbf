//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::{PI, SQRT_2, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tilearray::bus::{route_command, serpentine_chain, validate_power_chain, LinkTopology, PowerViolation, TileAddress};
use tilearray::controller::{canonical_poses, stuck_oscillation, Controller, ControllerInput, ControllerParams, Mode, OscillationParams};
use tilearray::kinematics::{forward_kinematics, inverse_kinematics, is_feasible, LegAngles, TileGeometry, TilePose};
use tilearray::regions::{
    build_graph, default_weight_overrides, plan_path, segment_regions, DwellTracker, RegionGraph, RegionId, RegionKind, RegionMap,
    WeightOverrides,
};
use tilearray::scenario::{Goal, ScenarioConfig};
use tilearray::sim::{check_target_reached, run_from, RunOutcome};
use tilearray::surface::SurfaceField;
use tilearray::trajectory::{plan_trajectory, TrajectoryLimits};
use tilearray::workspace::{
    distance_range, enumerate_workspace, pair_separation, radially_symmetric_subset, shared_workspace_naive,
    shared_workspace_symmetric, sweep_material, ArrayConfig, AxisSpec, PairSeparation, PoseGrid,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn position(p: &TilePose) -> Vector3<f64> {
    p.r() * p.direction()
}

fn ik_fk_roundtrip() -> Outcome {
    let g = TileGeometry::default();
    let mut rng = StdRng::seed_from_u64(11);
    let start = Instant::now();
    let (mut n, mut worst) = (0, 0.0f64);
    while n < 1000 {
        let pose = TilePose::new(rng.random_range(0.0..TAU), rng.random_range(0.0..0.75), rng.random_range(5.0..132.0));
        let Ok(angles) = inverse_kinematics(&pose, &g) else { continue };
        let back = forward_kinematics(&angles, &g).map_err(|e| format!("FK failed for {pose:?}: {e}"))?;
        worst = worst.max((position(&pose) - position(&back)).abs().max());
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-6, || format!("max coordinate error {worst:.3e} mm"))?;
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 poses, max coordinate error {worst:.2e} mm, {secs:.2} s"))
}

fn symmetric_case_law() -> Outcome {
    let g = TileGeometry::default();
    let theta_max = 7.0 * PI / 18.0;
    let mut worst = 0.0f64;
    for k in 0..50 {
        let theta = 0.02 + (theta_max - 0.02) * k as f64 / 49.0;
        let r = 140.0 * theta.sin();
        let ik = inverse_kinematics(&TilePose::flat(r), &g).map_err(|e| format!("IK at theta {theta}: {e}"))?;
        for a in ik.0 {
            worst = worst.max((a - theta).abs());
        }
        let fk = forward_kinematics(&LegAngles([theta; 3]), &g).map_err(|e| format!("FK at theta {theta}: {e}"))?;
        worst = worst.max((fk.r() - r).abs()).max(fk.phi());
    }
    ensure(worst <= 1e-9, || format!("worst deviation {worst:.3e}"))?;
    Ok(format!("50 samples, worst deviation {worst:.2e}"))
}

fn joint_limit() -> Outcome {
    let g = TileGeometry::default();
    let bound = 140.0 * (7.0 * PI / 18.0).sin();
    ensure((bound - 131.557).abs() < 5e-4, || format!("bound {bound}"))?;
    ensure(is_feasible(&TilePose::flat(bound - 1e-9), &g), || "pose just below the bound rejected".into())?;
    ensure(!is_feasible(&TilePose::flat(bound + 1e-9), &g), || "pose just above the bound accepted".into())?;
    let mut mismatches = 0;
    for k in 0..=4000 {
        let r = 100.0 + 0.01 * k as f64;
        if is_feasible(&TilePose::flat(r), &g) != (r <= bound) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} heights on the 0.01 mm sweep disagree with the bound"))?;
    Ok(format!("flat poses rejected exactly above {bound:.6} mm"))
}

fn three_fold_symmetry() -> Outcome {
    let g = TileGeometry::default();
    let ws = enumerate_workspace(&g, &PoseGrid::default_grid());
    let mut mismatches = 0;
    for idx in 0..ws.grid.len() {
        let (d, p, r) = ws.grid.raw_pose(idx);
        if ws.valid[idx] != is_feasible(&TilePose::new(d + 2.0 * PI / 3.0, p, r), &g) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} flags change under the 2pi/3 turn"))?;
    Ok(format!("{} grid poses, {} valid, no flag changes", ws.grid.len(), ws.valid_count()))
}

fn symmetry_reduction() -> Outcome {
    let g = TileGeometry::default();
    let start = Instant::now();
    let grid = PoseGrid::regular(20, AxisSpec::new(0.0, 7.0 * PI / 18.0, 10), AxisSpec::new(10.0, 131.5, 9)).unwrap();
    let full = enumerate_workspace(&g, &grid);
    let radial = radially_symmetric_subset(&full);
    let mut notes = Vec::new();
    // the listed configurations keep nothing on this grid, so one just below L_min is added
    let l_min = tilearray::workspace::min_material_length(&radial, 261.0, &g).map_err(|e| e.to_string())?;
    for (d, l) in [(261.0, 150.0), (261.0, 120.0), (300.0, 160.0), (261.0, l_min - 10.0)] {
        let c = ArrayConfig { tile_distance: d, material_length: l, ..ArrayConfig::default() };
        for ws in [&radial, &full] {
            let naive = shared_workspace_naive(ws, &c, &g);
            let sym = shared_workspace_symmetric(ws, &c, &g).map_err(|e| e.to_string())?;
            let p = naive.pose_count as f64;
            ensure(naive.set == sym.set, || format!("sets differ at D={d} L={l} radial={}", ws.radially_symmetric))?;
            ensure(naive.pair_checks as f64 >= 7.0 * p * p, || format!("naive used only {} checks", naive.pair_checks))?;
            if ws.radially_symmetric {
                let ratio = sym.pair_checks as f64 / (p * p);
                ensure(ratio <= 1.1, || format!("radial path used {ratio:.3} P^2 checks at D={d} L={l}"))?;
                notes.push(format!("({d},{l:.1}) P={} kept={} {ratio:.3}P^2", naive.pose_count, sym.set.distinct_poses().len()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("radial {}, {secs:.1} s", notes.join(", ")))
}

fn material_sweep_shape() -> Outcome {
    let g = TileGeometry::default();
    let ws = radially_symmetric_subset(&enumerate_workspace(&g, &PoseGrid::default_grid()));
    let rows = sweep_material(&ws, &distance_range(200.0, 320.0, 20.0).unwrap(), &g).map_err(|e| e.to_string())?;
    ensure(rows.len() == 7, || format!("{} rows", rows.len()))?;
    for w in rows.windows(2) {
        ensure(w[1].alpha_max > w[0].alpha_max, || format!("alpha_max not increasing at D={}", w[1].tile_distance))?;
        ensure(w[1].beta_max / SQRT_2 > w[0].beta_max / SQRT_2, || format!("beta_max not increasing at D={}", w[1].tile_distance))?;
    }
    for r in &rows {
        ensure(r.alpha_max >= r.beta_max / SQRT_2, || format!("alpha_max < beta_max/sqrt2 at D={}", r.tile_distance))?;
    }
    let (a, b) = (rows[0], rows[6]);
    Ok(format!(
        "alpha_max {:.1}..{:.1} mm, beta_max/sqrt2 {:.1}..{:.1} mm",
        a.alpha_max,
        b.alpha_max,
        a.beta_max / SQRT_2,
        b.beta_max / SQRT_2
    ))
}

fn flat_closed_forms() -> Outcome {
    let g = TileGeometry { effector_height: 0.0, ..TileGeometry::default() };
    let (d, w) = (261.0, 150.0);
    let (alpha_ref, beta_ref) = (d - w, SQRT_2 * (d - w));
    ensure((alpha_ref - 111.0).abs() < 1e-12 && (beta_ref - 156.978).abs() < 5e-4, || "closed forms".into())?;
    for r in [20.0, 90.0, 130.0] {
        let p = TilePose::flat(r);
        let a = pair_separation(&p, &p, Vector2::new(d, 0.0), &g).map_err(|e| e.to_string())?;
        let b = pair_separation(&p, &p, Vector2::new(d, d), &g).map_err(|e| e.to_string())?;
        let (PairSeparation::Edge { alpha }, PairSeparation::Diagonal { beta }) = (a, b) else {
            return Err("offsets classified wrongly".into());
        };
        ensure((alpha - alpha_ref).abs() <= 1e-9, || format!("alpha {alpha} at r={r}"))?;
        ensure((beta - beta_ref).abs() <= 1e-9, || format!("beta {beta} at r={r}"))?;
    }
    Ok(format!("alpha {alpha_ref:.6} mm, beta {beta_ref:.6} mm"))
}

fn table_fidelity() -> Outcome {
    use RegionKind::*;
    let t = 5.0 * PI / 36.0;
    let rows: [(RegionKind, RegionKind, [(f64, f64, f64); 4]); 4] = [
        (Tile, InterTile, [(0.0, t, 90.0), (0.0, 0.0, 90.0), (0.0, 0.0, 90.0), (0.0, 0.0, 90.0)]),
        (InterTile, Tile, [(0.0, 0.0, 10.0), (0.0, t, 90.0), (0.0, 0.0, 90.0), (0.0, 0.0, 90.0)]),
        (InterTile, Centre, [(3.0 * PI / 2.0, t, 90.0), (3.0 * PI / 2.0, t, 90.0), (PI / 2.0, t, 90.0), (PI / 2.0, t, 90.0)]),
        (Centre, InterTile, [(0.0, 0.0, 10.0), (PI, 0.0, 10.0), (5.0 * PI / 4.0, PI / 12.0, 90.0), (7.0 * PI / 4.0, PI / 12.0, 90.0)]),
    ];
    for (from, to, row) in rows {
        let got = canonical_poses(from, to, 0).map_err(|e| e.to_string())?;
        for (slot, (d, p, r)) in row.into_iter().enumerate() {
            let want = TilePose::new(d, p, r);
            ensure(got[slot] == want, || format!("{from}->{to} slot {slot}: {:?} != {want:?}", got[slot]))?;
        }
    }
    Ok("16 entries equal (yaw of untilted poses stored as 0)".into())
}

fn trajectory_limits() -> Outcome {
    let lim = TrajectoryLimits::default();
    let (vmax, amax) = (20.0 * PI / 9.0, 5.0 * PI / 6.0);
    ensure(lim.vel_max == vmax && lim.acc_max == amax, || "default limits".into())?;
    let mut rng = StdRng::seed_from_u64(7);
    let hi = 7.0 * PI / 18.0;
    let dt = 1e-3;
    let (mut peak_v, mut peak_a) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let from = LegAngles(std::array::from_fn(|_| rng.random_range(0.0..hi)));
        let to = LegAngles(std::array::from_fn(|_| rng.random_range(0.0..hi)));
        let plan = plan_trajectory(&from, &to, &lim);
        let steps = (plan.duration / dt).ceil() as usize + 2;
        let mut prev = plan.sample(0.0);
        ensure(prev == from, || "plan does not start at its origin".into())?;
        for k in 1..=steps {
            let t = k as f64 * dt;
            let s = plan.sample(t);
            for i in 0..3 {
                peak_v = peak_v.max(plan.velocity(t)[i].abs());
                peak_a = peak_a.max(plan.acceleration(t)[i].abs());
                ensure((s.0[i] - prev.0[i]).abs() <= vmax * dt + 1e-9, || format!("sampled step too large at t={t}"))?;
            }
            prev = s;
        }
        ensure(plan.sample(plan.duration) == to && prev == to, || "plan does not arrive exactly".into())?;
    }
    ensure(peak_v <= vmax + 1e-9, || format!("velocity {peak_v}"))?;
    ensure(peak_a <= amax + 1e-9, || format!("acceleration {peak_a}"))?;
    let quarter = plan_trajectory(&LegAngles([0.0; 3]), &LegAngles([PI / 2.0, 0.0, 0.0]), &lim);
    let closed = 2.0 * ((PI / 2.0) / amax).sqrt();
    ensure((quarter.duration - closed).abs() < 1e-12 && (quarter.duration - 1.549).abs() <= 1e-3, || {
        format!("quarter turn takes {}", quarter.duration)
    })?;
    Ok(format!("peak |v| {peak_v:.4} rad/s, peak |a| {peak_a:.4} rad/s^2, quarter turn {:.4} s", quarter.duration))
}

fn stuck_recovery() -> Outcome {
    let g = TileGeometry::default();
    let map = segment_regions(&ArrayConfig::default(), &g).unwrap();
    let graph = build_graph(&map, &default_weight_overrides()).unwrap();
    let here = RegionId::Tile((0, 0));
    let plan = plan_path(&graph, here, here).unwrap();
    let moving = [false; 4];
    let mode_at = |dwell: f64| {
        let mut c = Controller::new(ControllerParams::default(), map.clone(), here);
        let out = c.step(
            &ControllerInput {
                t: dwell,
                object: Vector2::new(-150.0, 130.5),
                region: here,
                dwell,
                plan: &plan,
                setpoint: Vector2::new(-130.5, 130.5),
                goal_reached: false,
                tiles_moving: &moving,
            },
            1e-3,
        );
        (out.mode, out.oscillation_time)
    };
    for dwell in [0.0, 2.5, 4.999, 5.0] {
        ensure(mode_at(dwell).0 != Mode::Oscillating, || format!("oscillating at dwell {dwell} s"))?;
    }
    let (mode, since) = mode_at(5.001);
    ensure(mode == Mode::Oscillating && since.is_some_and(|s| (s - 0.001).abs() < 1e-9), || "no oscillation at 5.001 s".into())?;

    let params = OscillationParams::default();
    let base = TilePose::new(0.0, 0.1, 90.0);
    let n = 1000;
    let series: Vec<f64> = (0..n).map(|k| stuck_oscillation(&base, k as f64 / 1000.0, &params, &g).r() - base.r()).collect();
    let (mut best_f, mut best_amp) = (0, 0.0f64);
    for f in 1..100 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, x) in series.iter().enumerate() {
            let w = TAU * f as f64 * k as f64 / n as f64;
            re += x * w.cos();
            im -= x * w.sin();
        }
        let amp = 2.0 * (re * re + im * im).sqrt() / n as f64;
        if amp > best_amp {
            best_f = f;
            best_amp = amp;
        }
    }
    ensure(best_f == 10, || format!("spectral peak at {best_f} Hz"))?;
    ensure((best_amp - 10.0).abs() < 1e-6, || format!("amplitude {best_amp}"))?;
    Ok(format!("engages after 5.0 s dwell; peak {best_f} Hz, amplitude {best_amp:.6} mm"))
}

fn region_accounting() -> Outcome {
    let g = TileGeometry::default();
    for n in 1..=4usize {
        let map = segment_regions(&ArrayConfig::square(n, 261.0, 150.0), &g).map_err(|e| e.to_string())?;
        let counts = (map.count(RegionKind::Tile), map.count(RegionKind::InterTile), map.count(RegionKind::Centre));
        let want = (n * n, 2 * n * (n - 1), (n - 1) * (n - 1));
        ensure(counts == want, || format!("N={n}: {counts:?} != {want:?}"))?;
    }
    let map = segment_regions(&ArrayConfig::default(), &g).unwrap();
    ensure(map.regions.len() == 9, || format!("{} regions", map.regions.len()))?;
    let (gap, w) = (261.0 - g.effector_width, g.effector_width);
    let north = map.get(RegionId::inter((0, 0), (0, 1))).ok_or("no INTER_N")?.rect;
    let west = map.get(RegionId::inter((0, 0), (1, 0))).ok_or("no INTER_W")?.rect;
    ensure((north.width() - gap).abs() < 1e-9 && (north.height() - w).abs() < 1e-9, || format!("INTER_N {north:?}"))?;
    ensure((west.width() - w).abs() < 1e-9 && (west.height() - gap).abs() < 1e-9, || format!("INTER_W {west:?}"))?;
    Ok(format!("N=1..4 counts match; inter-tile strips {gap}x{w} mm"))
}

/// Cheapest simple path from `from` to every node, by exhaustive search.
fn brute_force_costs(graph: &RegionGraph, from: usize) -> Vec<f64> {
    fn walk(graph: &RegionGraph, u: usize, cost: f64, seen: &mut Vec<bool>, best: &mut Vec<f64>) {
        best[u] = best[u].min(cost);
        for &(v, w) in &graph.adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                walk(graph, v, cost + w, seen, best);
                seen[v] = false;
            }
        }
    }
    let n = graph.nodes.len();
    let mut best = vec![f64::INFINITY; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    walk(graph, from, 0.0, &mut seen, &mut best);
    best
}

fn dijkstra_and_debounce() -> Outcome {
    let g = TileGeometry::default();
    let override_sets: Vec<WeightOverrides> = vec![
        default_weight_overrides(),
        BTreeMap::from([((RegionKind::InterTile, RegionKind::Tile), 3.0)]),
        BTreeMap::from([((RegionKind::Tile, RegionKind::InterTile), 0.5), ((RegionKind::Centre, RegionKind::InterTile), 2.5)]),
    ];
    let mut pairs = 0;
    for rows in 1..=3 {
        for cols in 1..=3 {
            let map = segment_regions(&ArrayConfig { rows, cols, ..ArrayConfig::default() }, &g).unwrap();
            for ov in &override_sets {
                let graph = build_graph(&map, ov).map_err(|e| e.to_string())?;
                for (i, &a) in graph.nodes.iter().enumerate() {
                    let best = brute_force_costs(&graph, i);
                    for (j, &b) in graph.nodes.iter().enumerate() {
                        let plan = plan_path(&graph, a, b).map_err(|e| e.to_string())?;
                        let walked: f64 = plan.regions.windows(2).map(|w| graph.weight(w[0], w[1]).unwrap_or(f64::NAN)).sum();
                        ensure((plan.cost - best[j]).abs() <= 1e-9 * best[j].max(1.0), || {
                            format!("{a}->{b} in {rows}x{cols}: {} vs {}", plan.cost, best[j])
                        })?;
                        ensure((walked - plan.cost).abs() <= 1e-9 * walked.max(1.0), || format!("{a}->{b}: path cost mismatch"))?;
                        pairs += 1;
                    }
                }
            }
        }
    }

    let (a, b) = (RegionId::Tile((0, 0)), RegionId::inter((0, 0), (0, 1)));
    let mut tracker = DwellTracker::new(a, 0.0, 0.5);
    // ends on a stretch in `a`, clearing any pending candidate
    for k in 0..3300 {
        let t = k as f64 * 1e-3;
        let raw = if (t / 0.3).floor() as i64 % 2 == 0 { a } else { b };
        ensure(tracker.update(raw, t) == a, || format!("label changed during 0.3 s alternation at t={t}"))?;
    }
    let entered = 3.3;
    let mut switched = None;
    for k in 0..1000 {
        let t = entered + k as f64 * 1e-3;
        if tracker.update(b, t) == b && switched.is_none() {
            switched = Some(t - entered);
        }
    }
    let after = switched.ok_or("never switched")?;
    ensure((after - 0.5).abs() < 1e-6, || format!("switched after {after} s"))?;
    Ok(format!("{pairs} planned pairs match exhaustive search; label switches after {after:.3} s"))
}

fn scenarios() -> Outcome {
    let mut notes = Vec::new();
    for name in ["puck_cycle", "sphere_intertile_cycle", "cube_point_to_point", "tetra_point_to_point"] {
        let cfg = ScenarioConfig::bundled(name).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let runs: Vec<RunOutcome> = cfg
            .starts
            .iter()
            .map(|s| run_from(&cfg, Vector2::new(s[0], s[1])))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 60.0, || format!("{name} took {secs:.1} s"))?;
        let again = run_from(&cfg, Vector2::new(cfg.starts[0][0], cfg.starts[0][1])).map_err(|e| e.to_string())?;
        ensure(again.trace == runs[0].trace, || format!("{name} is not deterministic"))?;
        let goals = cfg.goals();
        for run in &runs {
            ensure(run.success, || format!("{name} from {:?} timed out", run.start))?;
            let samples = run.trace.samples();
            let mut from = 0;
            for (goal, &t_done) in goals.iter().zip(&run.goal_times) {
                let upto = samples.iter().position(|(t, _)| *t >= t_done).map_or(samples.len(), |k| k + 1);
                if let Goal::Point(p) = goal {
                    ensure(check_target_reached(&samples[from..upto], *p, &cfg.sim), || {
                        format!("{name}: target {p:?} not held before {t_done}")
                    })?;
                }
                from = upto;
            }
            let seq = run.trace.region_sequence();
            match name {
                "puck_cycle" => {
                    let tiles: Vec<RegionId> = seq.iter().copied().filter(|r| r.kind() == RegionKind::Tile).collect();
                    let want = [(0, 0), (0, 1), (1, 1), (1, 0), (0, 0)].map(RegionId::Tile);
                    ensure(tiles == want, || format!("tile sequence {tiles:?}"))?;
                }
                "sphere_intertile_cycle" => {
                    ensure(seq.iter().all(|r| r.kind() != RegionKind::Tile), || format!("entered a tile: {seq:?}"))?;
                    let strips = seq.iter().filter(|r| r.kind() == RegionKind::InterTile).count();
                    ensure(strips >= 5, || format!("only {strips} strip visits"))?;
                }
                _ => {}
            }
        }
        if goals.len() == 1 {
            let mut starts: Vec<String> = cfg.starts.iter().map(|s| format!("{s:?}")).collect();
            starts.dedup();
            ensure(starts.len() >= 3, || format!("{name} has fewer than 3 distinct starts"))?;
        }
        let slowest = runs.iter().map(|r| r.goal_times.last().copied().unwrap_or(f64::NAN)).fold(0.0, f64::max);
        notes.push(format!("{name} {}x ok by {slowest:.1} s sim ({secs:.2} s wall)", runs.len()));
    }
    Ok(notes.join("; "))
}

/// Shared edge of two touching rectangles as a segment.
fn shared_edge(map: &RegionMap, a: RegionId, b: RegionId) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let (ra, rb) = (map.get(a)?.rect, map.get(b)?.rect);
    let eps = 1e-9;
    let (ylo, yhi) = (ra.ymin.max(rb.ymin), ra.ymax.min(rb.ymax));
    let (xlo, xhi) = (ra.xmin.max(rb.xmin), ra.xmax.min(rb.xmax));
    for x in [ra.xmax, ra.xmin] {
        if ((x - rb.xmin).abs() < eps || (x - rb.xmax).abs() < eps) && yhi - ylo > eps {
            return Some((Vector2::new(x, ylo), Vector2::new(x, yhi)));
        }
    }
    for y in [ra.ymax, ra.ymin] {
        if ((y - rb.ymin).abs() < eps || (y - rb.ymax).abs() < eps) && xhi - xlo > eps {
            return Some((Vector2::new(xlo, y), Vector2::new(xhi, y)));
        }
    }
    None
}

fn surface_properties() -> Outcome {
    let g = TileGeometry::default();
    let config = ArrayConfig::default();
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut points = 0;
    while points < 1000 {
        let mut poses = Vec::new();
        while poses.len() < 4 {
            let p = TilePose::new(rng.random_range(0.0..TAU), rng.random_range(0.0..0.5), rng.random_range(20.0..125.0));
            if is_feasible(&p, &g) {
                poses.push(p);
            }
        }
        let field = SurfaceField::build(&poses, &config, &g).map_err(|e| e.to_string())?;
        let ids: Vec<RegionId> = field.map.regions.iter().map(|r| r.id).collect();
        for &a in &ids {
            for &b in &ids {
                if a >= b {
                    continue;
                }
                let Some((p0, p1)) = shared_edge(&field.map, a, b) else { continue };
                for _ in 0..4 {
                    let p = p0 + (p1 - p0) * rng.random_range(0.0..=1.0);
                    worst = worst.max((field.height_in(a, p) - field.height_in(b, p)).abs());
                    points += 1;
                }
            }
        }
    }
    ensure(worst <= 1e-6, || format!("boundary jump {worst:.3e} mm"))?;

    let (l, d) = (150.0, 261.0 - g.effector_width);
    let sag_ref = (l * l - d * d).sqrt() / 2.0;
    let sag = tilearray::surface::triangle_sag(l, d);
    ensure((sag - sag_ref).abs() <= 1e-9, || format!("sag {sag} vs {sag_ref}"))?;
    let flat = SurfaceField::build(&[TilePose::flat(90.0); 4], &config, &g).map_err(|e| e.to_string())?;
    let mid = flat.height_at(Vector2::new(0.0, 130.5)).map_err(|e| e.to_string())?;
    let mid_ref = 90.0 + g.effector_height - sag_ref;
    ensure((mid - mid_ref).abs() <= 1e-9, || format!("strip midline {mid} vs {mid_ref}"))?;
    Ok(format!(
        "{points} boundary points, max jump {worst:.2e} mm; flat sag {sag:.6} mm (quoted 50.434 differs by {:.4} mm)",
        sag - 50.434
    ))
}

fn bfs_hops(t: &LinkTopology, from: TileAddress, to: TileAddress) -> Option<usize> {
    let mut dist = BTreeMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(a) = queue.pop_front() {
        if a == to {
            return dist.get(&a).copied();
        }
        let d = dist[&a];
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (r, c) = (a.row as i64 + dr, a.col as i64 + dc);
            if r < 0 || c < 0 {
                continue;
            }
            let b = TileAddress::new(r as usize, c as usize);
            if t.has_link(a, b) && !dist.contains_key(&b) {
                dist.insert(b, d + 1);
                queue.push_back(b);
            }
        }
    }
    None
}

fn tile_bus() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let (mut routes, mut unreachable) = (0, 0);
    for case in 0..100 {
        let mut t = LinkTopology::full(4, 4);
        if case % 2 == 1 {
            for r in 0..4 {
                for c in 0..4 {
                    if c + 1 < 4 && rng.random_bool(0.25) {
                        t.remove_link(TileAddress::new(r, c), TileAddress::new(r, c + 1)).unwrap();
                    }
                    if r + 1 < 4 && rng.random_bool(0.25) {
                        t.remove_link(TileAddress::new(r, c), TileAddress::new(r + 1, c)).unwrap();
                    }
                }
            }
        }
        let host = TileAddress::new(rng.random_range(0..4), rng.random_range(0..4));
        for r in 0..4 {
            for c in 0..4 {
                let target = TileAddress::new(r, c);
                match (route_command(&t, host, target), bfs_hops(&t, host, target)) {
                    (Ok(hops), Some(d)) => {
                        ensure(hops.len() == d, || format!("{host}->{target}: {} hops, shortest {d}", hops.len()))?;
                        let mut at = host;
                        for h in &hops {
                            ensure(t.has_link(at, *h), || format!("route {host}->{target} uses a missing link"))?;
                            at = *h;
                        }
                        routes += 1;
                    }
                    (Err(_), None) => unreachable += 1,
                    (got, want) => return Err(format!("{host}->{target}: {got:?} vs shortest {want:?}")),
                }
            }
        }
    }
    let mut t = LinkTopology::full(4, 4);
    t.power_chain = serpentine_chain(4, 4, 9);
    ensure(matches!(validate_power_chain(&t), Err(PowerViolation::TooLong { .. })), || "nine-tile chain accepted".into())?;
    t.power_chain = serpentine_chain(4, 4, 8);
    ensure(validate_power_chain(&t).is_ok(), || "eight-tile chain rejected".into())?;
    Ok(format!("{routes} routes shortest, {unreachable} unreachable agreed; 9-tile chain rejected"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("IK/FK roundtrip", ik_fk_roundtrip),
        ("symmetric-case law", symmetric_case_law),
        ("joint-limit fidelity", joint_limit),
        ("workspace 3-fold symmetry", three_fold_symmetry),
        ("symmetry reduction matches oracle", symmetry_reduction),
        ("separation sweep shape", material_sweep_shape),
        ("flat-geometry closed forms", flat_closed_forms),
        ("canonical pose table", table_fidelity),
        ("trajectory limits", trajectory_limits),
        ("stuck recovery", stuck_recovery),
        ("region accounting", region_accounting),
        ("planner optimality and debounce", dijkstra_and_debounce),
        ("end-to-end scenarios", scenarios),
        ("surface model properties", surface_properties),
        ("tile bus", tile_bus),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
