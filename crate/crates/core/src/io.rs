//! File formats: measurement CSV + JSON sidecar, image CSV, 16-bit PGM previews and
//! telemetry logs. Floating-point values are written with 17 significant digits so that
//! reading back reproduces every bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{PhysicsSpec, SliceSpec};
use crate::error::{check_len, Error, Result};
use crate::forward::ScatteringDataset;
use crate::geometry::{Grid, IncidentMode, Layout};
use crate::optim::TelemetryRow;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("{what}: cannot parse {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("{what}: non-finite value {s:?}")));
    }
    Ok(v)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Everything about a dataset except the measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub dim: usize,
    pub physics: PhysicsSpec,
    pub incident: IncidentMode,
    pub layout: Layout,
}

/// The sidecar that accompanies `path`: same stem, `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn header(dim: usize) -> Vec<&'static str> {
    if dim == 3 {
        vec!["tx", "rx", "rx_x", "rx_y", "rx_z", "re", "im"]
    } else {
        vec!["tx", "rx", "rx_x", "rx_y", "re", "im"]
    }
}

/// Writes one CSV row per active (transmitter, receiver) pair plus the JSON sidecar.
pub fn write_dataset(path: &Path, dataset: &ScatteringDataset, dim: usize) -> Result<()> {
    dataset.validate()?;
    if !(dim == 2 || dim == 3) {
        return Err(Error::InvalidArgument(format!("dimension {dim}")));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header(dim)).map_err(csv_err)?;
    for (p, y) in dataset.measurements.iter().enumerate() {
        for (&m, v) in dataset.layout.active_receivers(p).iter().zip(y) {
            let r = dataset.layout.receivers[m];
            let mut rec = vec![p.to_string(), m.to_string(), num(r[0]), num(r[1])];
            if dim == 3 {
                rec.push(num(r[2]));
            }
            rec.push(num(v.re));
            rec.push(num(v.im));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    let side = DatasetSidecar {
        dim,
        physics: PhysicsSpec::of(&dataset.physics),
        incident: dataset.incident,
        layout: dataset.layout.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]; rows must follow the sidecar layout exactly.
pub fn read_dataset(path: &Path) -> Result<(ScatteringDataset, usize)> {
    let side: DatasetSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let dim = side.dim;
    let layout = side.layout;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let head: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.to_string()).collect();
    if head != header(dim) {
        return Err(Error::Format(format!("unexpected header {head:?}")));
    }
    let mut expected = Vec::new();
    for p in 0..layout.num_transmitters() {
        for m in layout.active_receivers(p) {
            expected.push((p, m));
        }
    }
    let mut measurements: Vec<Vec<Complex64>> = vec![Vec::new(); layout.num_transmitters()];
    let mut count = 0;
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = row + 2;
        let &(p, m) = expected
            .get(row)
            .ok_or_else(|| Error::Format(format!("line {line}: more rows than active pairs")))?;
        let tx: usize = rec[0].parse().map_err(|_| Error::Format(format!("line {line}: bad tx")))?;
        let rx: usize = rec[1].parse().map_err(|_| Error::Format(format!("line {line}: bad rx")))?;
        if (tx, rx) != (p, m) {
            return Err(Error::Format(format!("line {line}: expected pair ({p}, {m}), got ({tx}, {rx})")));
        }
        let pos = layout.receivers[m];
        for a in 0..dim {
            if parse_f64(&rec[2 + a], "receiver coordinate")? != pos[a] {
                return Err(Error::Format(format!("line {line}: receiver position disagrees with sidecar")));
            }
        }
        let re = parse_f64(&rec[2 + dim], "re")?;
        let im = parse_f64(&rec[3 + dim], "im")?;
        measurements[p].push(Complex64::new(re, im));
        count += 1;
    }
    if count != expected.len() {
        return Err(Error::Format(format!("expected {} rows, found {count}", expected.len())));
    }
    let ds = ScatteringDataset {
        layout,
        physics: side.physics.build()?,
        incident: side.incident,
        measurements,
        noise: None,
    };
    ds.validate()?;
    Ok((ds, dim))
}

/// Row-major CSV: one line per `J` consecutive samples (x fastest).
pub fn write_image_csv(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    check_len(grid.len(), values.len())?;
    let mut out = String::with_capacity(values.len() * 24);
    for row in values.chunks(grid.side()) {
        let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_image_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in r.records() {
        for f in rec.map_err(csv_err)?.iter() {
            out.push(parse_f64(f, "image value")?);
        }
    }
    Ok(out)
}

/// Binary 16-bit PGM, min-max normalised; the range is recorded as `# min=… max=…`.
///
/// `values` is `width × height` in row-major order with row 0 at the bottom (image y up).
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    check_len(width * height, values.len())?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = hi - lo;
    let mut buf = Vec::with_capacity(64 + 2 * values.len());
    write!(buf, "P5\n# min={} max={}\n{width} {height}\n65535\n", num(lo), num(hi))?;
    for r in (0..height).rev() {
        for v in &values[r * width..(r + 1) * width] {
            let g = if span > 0.0 { ((v - lo) / span * 65535.0).round() as u16 } else { 0 };
            buf.extend_from_slice(&g.to_be_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

/// A decoded 16-bit PGM.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    /// Top row first, as stored.
    pub pixels: Vec<u16>,
    pub range: Option<(f64, f64)>,
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut range = None;
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(Error::Format("truncated PGM header".into()));
        }
        if bytes[i] == b'#' {
            let end = bytes[i..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| i + e);
            let comment = String::from_utf8_lossy(&bytes[i + 1..end]).to_string();
            let mut lo = None;
            let mut hi = None;
            for part in comment.split_whitespace() {
                if let Some(v) = part.strip_prefix("min=") {
                    lo = v.parse().ok();
                } else if let Some(v) = part.strip_prefix("max=") {
                    hi = v.parse().ok();
                }
            }
            if let (Some(a), Some(b)) = (lo, hi) {
                range = Some((a, b));
            }
            i = end;
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).to_string());
    }
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::Format("expected a 16-bit binary PGM".into()));
    }
    let width: usize = fields[1].parse().map_err(|_| Error::Format("bad width".into()))?;
    let height: usize = fields[2].parse().map_err(|_| Error::Format("bad height".into()))?;
    let data = &bytes[i + 1..];
    if data.len() != 2 * width * height {
        return Err(Error::Format("PGM size disagrees with header".into()));
    }
    let pixels = data.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(Pgm {
        width,
        height,
        pixels,
        range,
    })
}

/// Extracts the `J×J` plane normal to `axis` (0 = x, 1 = y, 2 = z) at `index`.
///
/// The in-plane axes keep their natural order: (y, z) for x-slices, (x, z) for y-slices,
/// (x, y) for z-slices, the first one running fastest.
pub fn slice(grid: &Grid, values: &[f64], axis: usize, index: usize) -> Result<Vec<f64>> {
    check_len(grid.len(), values.len())?;
    let j = grid.side();
    if grid.dim() != 3 || axis > 2 || index >= j {
        return Err(Error::InvalidArgument(format!("no slice {index} along axis {axis}")));
    }
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = Vec::with_capacity(j * j);
    for v in 0..j {
        for u in 0..j {
            let mut idx = [0; 3];
            idx[axis] = index;
            idx[a] = u;
            idx[b] = v;
            out.push(values[grid.ravel(idx)]);
        }
    }
    Ok(out)
}

/// Writes `<stem>.csv` and previews: `<stem>.pgm` in 2D, or one PGM per requested slice in
/// 3D named `<stem>_<plane>_<axis><index>.pgm`. Returns the files written.
pub fn write_image(dir: &Path, stem: &str, grid: &Grid, values: &[f64], slices: &SliceSpec) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![dir.join(format!("{stem}.csv"))];
    write_image_csv(&files[0], grid, values)?;
    let j = grid.side();
    if grid.dim() == 2 {
        let p = dir.join(format!("{stem}.pgm"));
        write_pgm(&p, j, j, values)?;
        files.push(p);
    } else {
        for (axis, pos, name) in [(0, slices.x, "yz_x"), (1, slices.y, "xz_y"), (2, slices.z, "xy_z")] {
            if let Some(c) = pos {
                let index = grid.axis_index(c);
                let p = dir.join(format!("{stem}_{name}{index}.pgm"));
                write_pgm(&p, j, j, &slice(grid, values, axis, index)?)?;
                files.push(p);
            }
        }
    }
    Ok(files)
}

pub const TELEMETRY_HEADER: &str = "k,F,D,TV,grad_map_norm,seconds";

/// `k, F, D, τ·TV, ‖G_γ‖, seconds` per iteration.
pub fn write_telemetry(path: &Path, rows: &[TelemetryRow]) -> Result<()> {
    let mut out = String::from(TELEMETRY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k,
            num(r.objective),
            num(r.data),
            num(r.regularization),
            num(r.grad_map_norm),
            num(r.seconds)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_telemetry(path: &Path) -> Result<Vec<TelemetryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let head: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.to_string()).collect();
    if head.join(",") != TELEMETRY_HEADER {
        return Err(Error::Format(format!("unexpected telemetry header {head:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(TelemetryRow {
                k: rec[0].parse().map_err(|_| Error::Format("bad k".into()))?,
                objective: parse_f64(&rec[1], "F")?,
                data: parse_f64(&rec[2], "D")?,
                regularization: parse_f64(&rec[3], "TV")?,
                grad_map_norm: parse_f64(&rec[4], "grad_map_norm")?,
                seconds: parse_f64(&rec[5], "seconds")?,
                step_norm: f64::NAN,
            })
        })
        .collect()
}

/// One line of a contrast sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub contrast: f64,
    pub method: crate::optim::Method,
    /// The relative regularisation weight that gave the best SNR.
    pub tau_rel: f64,
    pub snr_db: f64,
}

pub const SWEEP_HEADER: &str = "contrast,method,tau_rel,snr_db";

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", num(r.contrast), r.method, num(r.tau_rel), num(r.snr_db)));
    }
    fs::write(path, out)?;
    Ok(())
}
