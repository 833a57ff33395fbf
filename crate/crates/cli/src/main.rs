use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;

use tilearray::export::{write_region_map, write_sweep, write_taut_curves, write_workspace};
use tilearray::kinematics::{TileGeometry, TilePose};
use tilearray::regions::{build_graph, default_weight_overrides, segment_regions};
use tilearray::scenario::{ScenarioConfig, ScenarioError, BUNDLED};
use tilearray::sim::{run_from, write_controller_log, SimError};
use tilearray::surface::{SurfaceError, SurfaceField};
use tilearray::workspace::{
    distance_range, enumerate_workspace, radially_symmetric_subset, sweep_material, taut_assist_pose, taut_curves, ArrayConfig,
    AxisSpec, PoseGrid, WorkspaceError, WorkspaceSet, DEFAULT_TAUT_TOLERANCE,
};

const OUTPUT_DIR_ENV: &str = "TILEARRAY_OUTPUT_DIR";

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "tilearray", version, about = "Workspace analysis, planning and simulation for tilting-tile arrays")]
struct Cli {
    /// Directory for output files given without a directory.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = ".")]
    output_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the workspace of a single tile.
    Workspace {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Keep only (phi, r) rings that are valid at every sampled yaw.
        #[arg(long)]
        radial: bool,
        #[arg(short, long, default_value = "workspace.csv")]
        output: PathBuf,
    },
    /// Largest edge and diagonal separations over a range of tile distances.
    SweepMaterial {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 200.0)]
        d_start: f64,
        #[arg(long, default_value_t = 320.0)]
        d_stop: f64,
        #[arg(long, default_value_t = 20.0)]
        d_step: f64,
        /// Use the full workspace instead of its radially symmetric subset.
        #[arg(long)]
        full: bool,
        #[arg(short, long, default_value = "sweep.csv")]
        output: PathBuf,
    },
    /// Assisting pose that pulls the material taut against a receiving tile.
    Taut {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Tile distance (mm).
        #[arg(long = "D", default_value_t = 261.0)]
        tile_distance: f64,
        /// Material length (mm).
        #[arg(long = "L", default_value_t = 150.0)]
        material_length: f64,
        /// Receiving pose as `delta,phi,r` (rad, rad, mm).
        #[arg(long, default_value = "0,0,90", value_parser = parse_pose)]
        receiving: TilePose,
        /// Allowed |alpha - L| (mm).
        #[arg(long, default_value_t = DEFAULT_TAUT_TOLERANCE)]
        tolerance: f64,
        /// Also write tilt and inclination curves over a range of L.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 120.0)]
        l_start: f64,
        #[arg(long, default_value_t = 200.0)]
        l_stop: f64,
        #[arg(long, default_value_t = 5.0)]
        l_step: f64,
    },
    /// Run a scenario file or a bundled scenario.
    Simulate {
        /// Path to a TOML scenario, or the name of a bundled one.
        scenario: Option<String>,
        /// List the bundled scenarios and exit.
        #[arg(long)]
        list: bool,
    },
    /// Region map of an array.
    Regions {
        #[command(flatten)]
        array: ArrayArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Also print the planning graph edges.
        #[arg(long)]
        graph: bool,
        #[arg(short, long, default_value = "region_map.csv")]
        output: PathBuf,
    },
    /// Height field of the surface for fixed tile poses.
    Surface {
        #[command(flatten)]
        array: ArrayArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Tile pose `delta,phi,r`, row-major; a single pose applies to every tile.
        #[arg(long = "pose", value_parser = parse_pose, default_value = "0,0,90")]
        poses: Vec<TilePose>,
        /// Grid spacing (mm).
        #[arg(long, default_value_t = 5.0)]
        spacing: f64,
        #[arg(short, long, default_value = "surface.csv")]
        output: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct GeometryArgs {
    /// Leg length (mm).
    #[arg(long)]
    leg_length: Option<f64>,
    /// Base attachment radius (mm).
    #[arg(long)]
    base_radius: Option<f64>,
    /// Upper leg angle (rad).
    #[arg(long)]
    theta_max: Option<f64>,
    /// End-effector side length (mm).
    #[arg(long)]
    effector_width: Option<f64>,
    /// End-effector thickness (mm).
    #[arg(long)]
    effector_height: Option<f64>,
}

impl GeometryArgs {
    fn build(&self) -> Result<TileGeometry, Failure> {
        let mut g = TileGeometry::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut g.leg_length, self.leg_length);
        set(&mut g.base_radius, self.base_radius);
        set(&mut g.theta_max, self.theta_max);
        set(&mut g.effector_width, self.effector_width);
        set(&mut g.effector_height, self.effector_height);
        g.validate().map_err(|e| Failure::Infeasible(e.into()))?;
        Ok(g)
    }
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Yaw samples over the full turn.
    #[arg(long, default_value_t = 64)]
    delta_count: usize,
    #[arg(long, default_value_t = 32)]
    phi_count: usize,
    /// Largest sampled tilt (rad).
    #[arg(long, default_value_t = 7.0 * std::f64::consts::PI / 18.0)]
    phi_max: f64,
    #[arg(long, default_value_t = 24)]
    r_count: usize,
    #[arg(long, default_value_t = 10.0)]
    r_min: f64,
    #[arg(long, default_value_t = 131.5)]
    r_max: f64,
    /// Evaluate a single pose `delta,phi,r` instead of a regular grid.
    #[arg(long, value_parser = parse_triple)]
    grid: Option<[f64; 3]>,
}

impl GridArgs {
    fn build(&self) -> Result<PoseGrid, Failure> {
        let g = match self.grid {
            Some([d, p, r]) => PoseGrid::single(d, p, r),
            None => PoseGrid::regular(
                self.delta_count,
                AxisSpec::new(0.0, self.phi_max, self.phi_count),
                AxisSpec::new(self.r_min, self.r_max, self.r_count),
            ),
        };
        g.map_err(|e| Failure::Usage(e.into()))
    }
}

#[derive(Args, Debug, Clone)]
struct ArrayArgs {
    #[arg(long, default_value_t = 2)]
    rows: usize,
    #[arg(long, default_value_t = 2)]
    cols: usize,
    /// Tile distance (mm).
    #[arg(long = "D", default_value_t = 261.0)]
    tile_distance: f64,
    /// Material length (mm).
    #[arg(long = "L", default_value_t = 150.0)]
    material_length: f64,
}

impl ArrayArgs {
    fn build(&self) -> Result<ArrayConfig, Failure> {
        let c = ArrayConfig { rows: self.rows, cols: self.cols, tile_distance: self.tile_distance, material_length: self.material_length };
        c.validate().map_err(|e| Failure::Usage(e.into()))?;
        Ok(c)
    }
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected three comma-separated numbers, got `{s}`"))
}

fn parse_pose(s: &str) -> Result<TilePose, String> {
    let [d, p, r] = parse_triple(s)?;
    if p < 0.0 {
        return Err("tilt must be non-negative".into());
    }
    Ok(TilePose::new(d, p, r))
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Timeout(String),
    Infeasible(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Timeout(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<WorkspaceError> for Failure {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::EmptyWorkspace | WorkspaceError::InfeasibleReceivingPose | WorkspaceError::NoAxisPose => {
                Failure::Infeasible(e.into())
            }
            _ => Failure::Usage(e.into()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InfeasibleNeutral | SimError::Surface(SurfaceError::InfeasiblePose(..)) => Failure::Infeasible(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() || path.parent().is_some_and(|p| !p.as_os_str().is_empty()) {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_with<F>(path: &Path, f: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), tilearray::export::ExportError>,
{
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn workspace_set(geom: &TileGeometry, grid: &PoseGrid, radial: bool) -> WorkspaceSet {
    let ws = enumerate_workspace(geom, grid);
    if radial {
        radially_symmetric_subset(&ws)
    } else {
        ws
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let dir = cli.output_dir;
    match cli.command {
        Command::Workspace { geometry, grid, radial, output } => {
            let geom = geometry.build()?;
            let ws = workspace_set(&geom, &grid.build()?, radial);
            let path = resolve(&dir, &output);
            write_with(&path, |w| write_workspace(&ws, w))?;
            say!("{} of {} poses valid, written to {}", ws.valid_count(), ws.grid.len(), path.display());
        }
        Command::SweepMaterial { geometry, grid, d_start, d_stop, d_step, full, output } => {
            let geom = geometry.build()?;
            let distances = distance_range(d_start, d_stop, d_step)?;
            let ws = workspace_set(&geom, &grid.build()?, !full);
            let rows = sweep_material(&ws, &distances, &geom)?;
            let path = resolve(&dir, &output);
            write_with(&path, |w| write_sweep(&rows, w))?;
            for r in &rows {
                say!("D {:.3}  alpha_max {:.3}  beta_max {:.3}  L_min {:.3}", r.tile_distance, r.alpha_max, r.beta_max, r.min_length);
            }
        }
        Command::Taut { geometry, grid, tile_distance, material_length, receiving, tolerance, curve, l_start, l_stop, l_step } => {
            let geom = geometry.build()?;
            let config = ArrayConfig { tile_distance, material_length, ..ArrayConfig::default() };
            config.validate()?;
            let ws = enumerate_workspace(&geom, &grid.build()?);
            let s = taut_assist_pose(&receiving, &config, &ws, &geom, tolerance)?;
            let p = s.assist_pose;
            say!("assist pose  delta {:.6} rad  phi {:.6} rad  r {:.3} mm", p.delta(), p.phi(), p.r());
            say!("alpha {:.3} mm  gamma {:.6} rad  taut {}", s.alpha, s.gamma, s.taut);
            if let Some(curve) = curve {
                let lengths = distance_range(l_start, l_stop, l_step)?;
                let rows = taut_curves(&receiving, tile_distance, &lengths, &ws, &geom, tolerance);
                let path = resolve(&dir, &curve);
                write_with(&path, |w| write_taut_curves(&rows, w))?;
                say!("curves written to {}", path.display());
            }
        }
        Command::Simulate { scenario, list, .. } => {
            if list {
                for (name, _) in BUNDLED {
                    say!("{name}");
                }
                return Ok(());
            }
            let name = scenario.ok_or_else(|| Failure::Usage(anyhow!("a scenario file or bundled name is required")))?;
            simulate(&name, &dir)?;
        }
        Command::Regions { array, geometry, graph, output } => {
            let config = array.build()?;
            let geom = geometry.build()?;
            let map = segment_regions(&config, &geom).map_err(|e| Failure::Infeasible(e.into()))?;
            let path = resolve(&dir, &output);
            write_with(&path, |w| write_region_map(&map, w))?;
            say!("{} regions written to {}", map.regions.len(), path.display());
            if graph {
                let g = build_graph(&map, &default_weight_overrides()).map_err(|e| Failure::Usage(e.into()))?;
                for (i, a) in g.nodes.iter().enumerate() {
                    for &(j, w) in &g.adjacency[i] {
                        say!("{a} -> {} {w:.3}", g.nodes[j]);
                    }
                }
            }
        }
        Command::Surface { array, geometry, poses, spacing, output } => {
            let config = array.build()?;
            let geom = geometry.build()?;
            if !(spacing > 0.0) {
                return Err(Failure::Usage(anyhow!("spacing must be positive")));
            }
            let n = config.rows * config.cols;
            let poses = if poses.len() == 1 { vec![poses[0]; n] } else { poses };
            let field = SurfaceField::build(&poses, &config, &geom).map_err(|e| match e {
                SurfaceError::InfeasiblePose(..) => Failure::Infeasible(e.into()),
                _ => Failure::Usage(e.into()),
            })?;
            let path = resolve(&dir, &output);
            write_with(&path, |w| field.write_csv(w, spacing))?;
            for id in field.strained_regions() {
                say!("strained: {id}");
            }
            say!("surface written to {}", path.display());
        }
    }
    Ok(())
}

fn load_scenario(name: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(name);
    let loaded = if path.exists() { ScenarioConfig::load(path) } else { ScenarioConfig::bundled(name) };
    loaded.map_err(|e| match e {
        ScenarioError::UnknownBundled(_) => Failure::Usage(anyhow!("`{name}` is neither a file nor a bundled scenario")),
        e => Failure::Usage(e.into()),
    })
}

fn simulate(name: &str, dir: &Path) -> Result<(), Failure> {
    let cfg = load_scenario(name)?;
    let out = &cfg.output;
    let tiles = cfg.array.rows * cfg.array.cols;
    let map = segment_regions(&cfg.array_config(), &cfg.geometry()).map_err(|e| Failure::Infeasible(e.into()))?;
    write_with(&resolve(dir, Path::new(&out.region_map)), |w| write_region_map(&map, w))?;
    let multi = cfg.starts.len() > 1;
    let numbered = |file: &str, k: usize| -> PathBuf {
        let p = Path::new(file);
        if !multi {
            return resolve(dir, p);
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let ext = p.extension().and_then(|s| s.to_str()).map(|e| format!(".{e}")).unwrap_or_default();
        resolve(dir, &p.with_file_name(format!("{stem}_start{k}{ext}")))
    };
    let mut failed = Vec::new();
    for (k, s) in cfg.starts.iter().enumerate() {
        let outcome = run_from(&cfg, Vector2::new(s[0], s[1]))?;
        write_with(&numbered(&out.trace, k), |w| outcome.trace.write_csv(w, tiles, out.decimate))?;
        write_with(&numbered(&out.controller_log, k), |w| write_controller_log(&outcome.controller_log, w))?;
        let end = outcome.trace.rows.last().map_or(0.0, |r| r.t);
        say!(
            "{} start ({}, {}): {} goals {}/{} at t = {:.3} s",
            cfg.name,
            s[0],
            s[1],
            if outcome.success { "done" } else { "timeout" },
            outcome.goal_times.len(),
            outcome.goal_count,
            end
        );
        if !outcome.success {
            failed.push(k);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Timeout(format!("{}: starts {failed:?} timed out", cfg.name)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            match f {
                Failure::Usage(e) | Failure::Infeasible(e) => {
                    let _ = writeln!(io::stderr(), "error: {e:#}");
                }
                Failure::Timeout(msg) => {
                    let _ = writeln!(io::stderr(), "error: {msg}");
                }
            }
            ExitCode::from(code)
        }
    }
}
