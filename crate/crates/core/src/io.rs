//! CSV and JSON emission, plus readers for configurations and fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::cell::{GridField, GridSpec};
use crate::config_space::{Configuration, ParticleArray};
use crate::discounted::SweepRow;
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::measures::EmpiricalMeasure;

fn axis_names(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).map(move |j| format!("{prefix}{j}"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// One row per particle, header `x0,...,x{d-1}`.
pub fn write_configuration_csv(path: &Path, m: &Configuration) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(axis_names("x", m.dim()))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a particle array written by [`write_configuration_csv`] (any header names).
pub fn read_configuration_csv(path: &Path) -> Result<Configuration> {
    let mut r = csv::Reader::from_path(path)?;
    let d = r.headers()?.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("bad number '{t}' in {}", path.display()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != d {
            return Err(Error::shape(format!("{d} columns"), row.len()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} holds no particles", path.display())));
    }
    ParticleArray::from_rows(&rows)
}

/// Columns `t, particle, x0.., p0..`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    let d = traj.first().m.dim();
    let header: Vec<String> = ["t".to_string(), "particle".to_string()]
        .into_iter()
        .chain(axis_names("x", d))
        .chain(axis_names("p", d))
        .collect();
    w.write_record(&header)?;
    for (t, z) in traj.times.iter().zip(&traj.points) {
        for i in 0..z.m.n_particles() {
            let mut rec = vec![t.to_string(), i.to_string()];
            rec.extend(z.m.row(i).iter().map(|x| x.to_string()));
            rec.extend(z.p.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `epsilon, value, eps_times_value, grad_norm, el_residual, tail_lo, tail_hi`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["epsilon", "value", "eps_times_value", "grad_norm", "el_residual", "tail_lo", "tail_hi"])?;
    }
    w.flush()?;
    Ok(())
}

/// `# key = value` metadata lines, then columns `i0.., y0.., U` (one index and coordinate per grid axis).
pub fn write_field_csv(path: &Path, field: &GridField, h: f64, tol: f64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# hbar = {}", field.hbar)?;
    writeln!(out, "# n_particles = {}", field.spec.n_particles)?;
    writeln!(out, "# dim = {}", field.spec.dim)?;
    writeln!(out, "# nodes = {}", field.spec.nodes)?;
    writeln!(out, "# h = {h}")?;
    writeln!(out, "# tol = {tol}")?;
    let axes = field.axes();
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = axis_names("i", axes).chain(axis_names("y", axes)).chain(["U".to_string()]).collect();
    w.write_record(&header)?;
    for flat in 0..field.len() {
        let idx = field.multi_index(flat);
        let y = field.node_coords(flat);
        let rec: Vec<String> = idx
            .iter()
            .map(|i| i.to_string())
            .chain(y.iter().map(|x| x.to_string()))
            .chain([field.values[flat].to_string()])
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`]; returns it with the recorded `h` and `tol`.
pub fn read_field_csv(path: &Path) -> Result<(GridField, f64, f64)> {
    let mut meta = std::collections::BTreeMap::new();
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else { break };
        let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "metadata line without '='".into(),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad metadata value '{}'", v.trim()),
        })?;
        meta.insert(k.trim().to_string(), v);
    }
    let get = |k: &str| {
        meta.get(k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("field file lacks '{k}' metadata")))
    };
    let spec = GridSpec::new(get("n_particles")? as usize, get("dim")? as usize, get("nodes")? as usize)?;
    let mut field = GridField::zeros(spec);
    field.hbar = get("hbar")?;
    let axes = field.axes();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut seen = 0usize;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 * axes + 1 {
            return Err(Error::shape(format!("{} columns", 2 * axes + 1), rec.len()));
        }
        let idx = (0..axes)
            .map(|j| rec[j].parse::<usize>().ok().filter(|&i| i < spec.nodes))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| Error::invalid("bad node index in field file"))?;
        let u: f64 = rec[2 * axes].parse().map_err(|_| Error::invalid("bad field value"))?;
        let flat = field.flat_index(&idx);
        field.values[flat] = u;
        seen += 1;
    }
    if seen != field.len() {
        return Err(Error::shape(format!("{} nodes", field.len()), seen));
    }
    Ok((field, get("h")?, get("tol")?))
}

/// Columns `t, weight, particle, x0.., p0..`; `t` is empty for atoms without a time.
pub fn write_measure_csv(path: &Path, mu: &EmpiricalMeasure) -> Result<()> {
    let mut w = csv_writer(path)?;
    let d = mu.atoms[0].m.dim();
    let header: Vec<String> = ["t", "weight", "particle"]
        .into_iter()
        .map(String::from)
        .chain(axis_names("x", d))
        .chain(axis_names("p", d))
        .collect();
    w.write_record(&header)?;
    for (k, (z, wt)) in mu.atoms.iter().zip(&mu.weights).enumerate() {
        let t = mu.times.get(k).map(|t| t.to_string()).unwrap_or_default();
        for i in 0..z.m.n_particles() {
            let mut rec = vec![t.clone(), wt.to_string(), i.to_string()];
            rec.extend(z.m.row(i).iter().map(|x| x.to_string()));
            rec.extend(z.p.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
