//! CSV writing shared by the analysis and simulation outputs.

use std::io::Write;

use thiserror::Error;

use crate::regions::RegionMap;
use crate::workspace::{SweepRow, TautCurveRow, WorkspaceSet};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed nine decimals: sub-micrometre resolution for millimetre quantities.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.9}")
}

pub fn write_records<W: Write, I>(out: W, header: &[&str], rows: I) -> Result<(), ExportError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_numeric<W: Write, I>(out: W, header: &[&str], rows: I) -> Result<(), ExportError>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    write_records(out, header, rows.into_iter().map(|r| r.into_iter().map(fmt_num).collect()))
}

/// One row per grid pose with its raw grid coordinates; `valid` is 0 or 1.
/// A radially symmetric set only lists its members.
pub fn write_workspace<W: Write>(ws: &WorkspaceSet, out: W) -> Result<(), ExportError> {
    let rows = (0..ws.grid.len()).filter(|&i| !ws.radially_symmetric || ws.valid[i]).map(|i| {
        let (d, p, r) = ws.grid.raw_pose(i);
        vec![fmt_num(d), fmt_num(p), fmt_num(r), u8::from(ws.valid[i]).to_string()]
    });
    write_records(out, &["delta_rad", "phi_rad", "r_mm", "valid"], rows)
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ExportError> {
    write_numeric(
        out,
        &["D_mm", "alpha_max_mm", "beta_max_mm", "L_min_mm"],
        rows.iter().map(|r| vec![r.tile_distance, r.alpha_max, r.beta_max, r.min_length]),
    )
}

/// Rows without any taut pose leave the tilt and inclination columns empty.
pub fn write_taut_curves<W: Write>(rows: &[TautCurveRow], out: W) -> Result<(), ExportError> {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    write_records(
        out,
        &["L_mm", "r_mm", "max_phi_rad", "max_gamma_rad"],
        rows.iter().map(|r| vec![fmt_num(r.material_length), fmt_num(r.r), opt(r.max_phi), opt(r.max_gamma)]),
    )
}

pub fn write_region_map<W: Write>(map: &RegionMap, out: W) -> Result<(), ExportError> {
    let rows = map.regions.iter().map(|r| {
        let c = r.centre();
        let b = &r.rect;
        let mut row = vec![r.id.to_string(), r.id.kind().to_string()];
        row.extend([b.xmin, b.ymin, b.xmax, b.ymax, c.x, c.y].map(fmt_num));
        row
    });
    write_records(out, &["region_id", "kind", "xmin", "ymin", "xmax", "ymax", "cx", "cy"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_rows() {
        let mut buf = Vec::new();
        write_numeric(&mut buf, &["a", "b"], vec![vec![1.0, -0.5], vec![1e-7, 2.0 / 3.0]]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "a,b\n1.000000000,-0.500000000\n0.000000100,0.666666667\n");
    }

    #[test]
    fn region_map_rows() {
        use crate::kinematics::TileGeometry;
        use crate::workspace::ArrayConfig;
        let map = crate::regions::segment_regions(&ArrayConfig::default(), &TileGeometry::default()).unwrap();
        let mut buf = Vec::new();
        write_region_map(&map, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "region_id,kind,xmin,ymin,xmax,ymax,cx,cy");
        assert_eq!(lines.len(), 10);
        assert!(lines.contains(&"TILE_0_0,TILE,-205.500000000,55.500000000,-55.500000000,205.500000000,-130.500000000,130.500000000"));
    }
}
