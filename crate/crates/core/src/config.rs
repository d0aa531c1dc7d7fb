//! Run files: flat `key = value` lines plus optional potential sections.
//!
//! ```text
//! mode = cell
//! dim = 1
//! c = 2.0
//! V = cosine
//! nodes = 400
//!
//! [potential.W]
//! # k1, .., kd, a, b  for  a cos(2 pi k.x) + b sin(2 pi k.x)
//! 1, -0.1, 0.0
//! ```
//!
//! `V` and `W` accept the presets `free` (also `zero`) and `cosine`, or are
//! given as sections. A `model = path` entry loads `dim`, `c`, `V`, `W` and the
//! sections from a separate file instead. Everything after `#` is a comment.
//! Keys that no mode reads are rejected.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cell::{CellParams, GridSpec};
use crate::discounted::SweepTemplate;
use crate::error::{Error, Result};
use crate::flow::Scheme;
use crate::model::TonelliModel;
use crate::potential::{Mode as FourierMode, TrigPotential};

/// Reads a file, naming it in the error.
pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parsed key/value entries and numeric section rows, with line numbers.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
    sections: BTreeMap<String, Vec<(usize, Vec<f64>)>>,
    used: RefCell<BTreeSet<String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ConfigFile::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                    .trim();
                if name != "potential.V" && name != "potential.W" {
                    return Err(parse_err(line_no, format!("unknown section [{name}]")));
                }
                if out.sections.contains_key(name) {
                    return Err(parse_err(line_no, format!("section [{name}] given twice")));
                }
                out.sections.insert(name.to_string(), Vec::new());
                section = Some(name.to_string());
                continue;
            }
            if let Some(name) = &section {
                let row = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| parse_err(line_no, format!("bad number '{}'", t.trim()))))
                    .collect::<Result<Vec<f64>>>()?;
                out.sections.get_mut(name).expect("section exists").push((line_no, row));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(parse_err(line_no, "empty key"));
            }
            if out.entries.insert(key.to_string(), (line_no, value.trim().to_string())).is_some() {
                return Err(parse_err(line_no, format!("key '{key}' given twice")));
            }
        }
        Ok(out)
    }

    fn mark(&self, key: &str) {
        self.used.borrow_mut().insert(key.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.mark(key);
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|(_, v)| v.to_string())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<f64>().map_err(|_| parse_err(line, format!("{key}: expected a number, got '{v}'"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("{key}: expected a non-negative integer, got '{v}'"))),
        }
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| parse_err(line, format!("{key}: expected a non-negative integer, got '{v}'"))),
        }
    }

    pub fn vec_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| parse_err(line, format!("{key}: bad number '{}'", t.trim()))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn section(&self, name: &str) -> Option<&[(usize, Vec<f64>)]> {
        self.sections.get(name).map(|v| v.as_slice())
    }

    /// Rejects keys that were never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        if let Some((key, (line, _))) = self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            return Err(parse_err(*line, format!("unknown key '{key}' for this mode")));
        }
        Ok(())
    }
}

fn potential_from(file: &ConfigFile, name: &str, dim: usize) -> Result<TrigPotential> {
    let section = file.section(&format!("potential.{name}"));
    let preset = file.raw(name);
    match (preset, section) {
        (Some((line, _)), Some(_)) => Err(parse_err(line, format!("{name} given both as a preset and as a section"))),
        (Some((line, p)), None) => match p.to_ascii_lowercase().as_str() {
            "free" | "zero" | "none" => Ok(TrigPotential::zero(dim)),
            "cosine" => Ok(TrigPotential::cosine_well(dim)),
            other => Err(parse_err(line, format!("unknown preset {name} = {other}; expected free or cosine"))),
        },
        (None, Some(rows)) => {
            let mut modes = Vec::with_capacity(rows.len());
            for (line, row) in rows {
                if row.len() != dim + 2 {
                    return Err(parse_err(*line, format!("expected {} numbers (k1..k{dim}, a, b), got {}", dim + 2, row.len())));
                }
                let k = row[..dim]
                    .iter()
                    .map(|x| {
                        if x.fract() == 0.0 && x.abs() < 1e9 {
                            Ok(*x as i64)
                        } else {
                            Err(parse_err(*line, format!("wavevector entry {x} is not an integer")))
                        }
                    })
                    .collect::<Result<Vec<i64>>>()?;
                modes.push(FourierMode { k, a: row[dim], b: row[dim + 1] });
            }
            TrigPotential::new(dim, modes)
        }
        (None, None) => Ok(TrigPotential::zero(dim)),
    }
}

fn model_from(file: &ConfigFile) -> Result<TonelliModel> {
    let c = file.vec_f64("c")?;
    let dim = match (file.raw("dim"), &c) {
        (Some((line, v)), _) => v.parse::<usize>().map_err(|_| parse_err(line, format!("dim: expected a positive integer, got '{v}'")))?,
        (None, Some(c)) => c.len(),
        (None, None) => 1,
    };
    if dim == 0 {
        return Err(Error::invalid("dim must be positive"));
    }
    let c = c.unwrap_or_else(|| vec![0.0; dim]);
    if c.len() != dim {
        return Err(Error::shape(format!("c of length {dim}"), c.len()));
    }
    let v = potential_from(file, "V", dim)?;
    let w = potential_from(file, "W", dim)?;
    TonelliModel::new(v, w, c)
}

/// Reads a model file (`dim`, `c`, `V`, `W` and sections only).
pub fn load_model(path: &Path) -> Result<TonelliModel> {
    let text = read_text(path)?;
    let file = ConfigFile::parse(&text)?;
    let model = model_from(&file)?;
    file.finish()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Distweak,
    Flow,
    Discounted,
    Cell,
    Calibrate,
    Measure,
    Audit,
    OracleHbar,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "distweak" => Mode::Distweak,
            "flow" => Mode::Flow,
            "discounted" => Mode::Discounted,
            "cell" => Mode::Cell,
            "calibrate" => Mode::Calibrate,
            "measure" => Mode::Measure,
            "audit" => Mode::Audit,
            "oracle-hbar" => Mode::OracleHbar,
            other => return Err(Error::invalid(format!("unknown mode '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRun {
    pub grid: GridSpec,
    pub params: CellParams,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitRun {
    /// Random differentiable seeds for the characteristics.
    pub seeds: usize,
    pub t_forward: f64,
    pub t_backward: f64,
    pub t_relax: f64,
    pub flow_h: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Params {
    Distweak {
        a: Option<PathBuf>,
        b: Option<PathBuf>,
        n_particles: usize,
        pairs: usize,
    },
    Flow {
        n_particles: usize,
        initial: Option<PathBuf>,
        momentum: Option<PathBuf>,
        t_span: f64,
        h: f64,
        scheme: Scheme,
    },
    Discounted {
        n_particles: usize,
        initial: Option<PathBuf>,
        epsilons: Vec<f64>,
        template: SweepTemplate,
    },
    Cell {
        cell: CellRun,
    },
    Calibrate {
        cell: CellRun,
        orbit: OrbitRun,
    },
    Measure {
        cell: CellRun,
        orbit: OrbitRun,
        t_total: f64,
        thin: usize,
        t_test: f64,
        /// Number of random rest-point measures used as non-optimal comparisons.
        rest_points: usize,
    },
    Audit {
        n_probes: usize,
        radius: f64,
    },
    OracleHbar,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub model: TonelliModel,
    pub params: Params,
    pub seed: u64,
    pub source: PathBuf,
    pub text: String,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(format!("{name} = {x} must be positive")))
    }
}

fn at_least_one(name: &str, n: usize) -> Result<usize> {
    if n >= 1 {
        Ok(n)
    } else {
        Err(Error::invalid(format!("{name} must be at least 1")))
    }
}

fn path_opt(file: &ConfigFile, key: &str, base: &Path) -> Option<PathBuf> {
    file.string(key).map(|p| base.join(p))
}

fn cell_run(file: &ConfigFile, model: &TonelliModel) -> Result<CellRun> {
    let n = at_least_one("n_particles", file.usize_or("n_particles", 1)?)?;
    let grid = GridSpec::new(n, model.dim(), file.usize_or("nodes", 400)?)?;
    let mut params = CellParams::new(
        positive("h", file.f64_or("h", 0.02)?)?,
        positive("tol", file.f64_or("tol", 1e-9)?)?,
        at_least_one("max_iters", file.usize_or("max_iters", 100_000)?)?,
    );
    params.relaxation = file.f64_or("relaxation", params.relaxation)?;
    if !(params.relaxation > 0.0 && params.relaxation <= 1.0) {
        return Err(Error::invalid(format!("relaxation = {} must lie in (0, 1]", params.relaxation)));
    }
    Ok(CellRun { grid, params })
}

fn orbit_run(file: &ConfigFile) -> Result<OrbitRun> {
    let flow_h = positive("flow_h", file.f64_or("flow_h", 0.01)?)?;
    let orbit = OrbitRun {
        seeds: at_least_one("seeds", file.usize_or("seeds", 10)?)?,
        t_forward: file.f64_or("t_forward", 2.0)?,
        t_backward: file.f64_or("t_backward", 1.0)?,
        t_relax: positive("t_relax", file.f64_or("t_relax", 5.0)?)?,
        flow_h,
    };
    if !(orbit.t_forward >= 0.0) || !(orbit.t_backward >= 0.0) || orbit.t_forward + orbit.t_backward < flow_h {
        return Err(Error::invalid("t_forward and t_backward must be non-negative and span at least one step"));
    }
    if orbit.t_relax < flow_h {
        return Err(Error::invalid("t_relax must be at least flow_h"));
    }
    Ok(orbit)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::from_text(&text, path)
    }

    /// Parses and validates; relative paths are resolved against the run file's directory.
    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let base = source.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = ConfigFile::parse(text)?;
        let mode: Mode = file
            .string("mode")
            .ok_or_else(|| Error::invalid("missing 'mode'"))?
            .parse()?;
        let model = match path_opt(&file, "model", &base) {
            Some(p) => {
                for key in ["dim", "c", "V", "W"] {
                    if file.contains(key) {
                        return Err(Error::invalid(format!("'{key}' given together with a model file")));
                    }
                }
                if file.section("potential.V").is_some() || file.section("potential.W").is_some() {
                    return Err(Error::invalid("potential sections given together with a model file"));
                }
                load_model(&p)?
            }
            None => model_from(&file)?,
        };
        let seed = file.u64_opt("seed")?.unwrap_or(0);
        let params = match mode {
            Mode::Distweak => Params::Distweak {
                a: path_opt(&file, "a", &base),
                b: path_opt(&file, "b", &base),
                n_particles: at_least_one("n_particles", file.usize_or("n_particles", 4)?)?,
                pairs: at_least_one("pairs", file.usize_or("pairs", 1)?)?,
            },
            Mode::Flow => {
                let scheme = match file.string("scheme") {
                    Some(s) => s.parse()?,
                    None => Scheme::Verlet,
                };
                Params::Flow {
                    n_particles: at_least_one("n_particles", file.usize_or("n_particles", 1)?)?,
                    initial: path_opt(&file, "initial", &base),
                    momentum: path_opt(&file, "momentum", &base),
                    t_span: positive("t_span", file.f64_or("t_span", 10.0)?)?,
                    h: positive("h", file.f64_or("h", 0.01)?)?,
                    scheme,
                }
            }
            Mode::Discounted => {
                let epsilons = file.vec_f64("epsilons")?.unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
                for &e in &epsilons {
                    positive("epsilon", e)?;
                }
                let d = SweepTemplate::default();
                let template = SweepTemplate {
                    step: positive("step", file.f64_or("step", d.step)?)?,
                    scaled_tol: positive("scaled_tol", file.f64_or("scaled_tol", d.scaled_tol)?)?,
                    tol_grad: positive("tol_grad", file.f64_or("tol_grad", d.tol_grad)?)?,
                    max_iters: at_least_one("max_iters", file.usize_or("max_iters", d.max_iters)?)?,
                };
                Params::Discounted {
                    n_particles: at_least_one("n_particles", file.usize_or("n_particles", 1)?)?,
                    initial: path_opt(&file, "initial", &base),
                    epsilons,
                    template,
                }
            }
            Mode::Cell => Params::Cell {
                cell: cell_run(&file, &model)?,
            },
            Mode::Calibrate => Params::Calibrate {
                cell: cell_run(&file, &model)?,
                orbit: orbit_run(&file)?,
            },
            Mode::Measure => {
                let cell = cell_run(&file, &model)?;
                let orbit = orbit_run(&file)?;
                let t_total = positive("t_total", file.f64_or("t_total", 1000.0)?)?;
                if t_total < orbit.flow_h {
                    return Err(Error::invalid("t_total must be at least flow_h"));
                }
                Params::Measure {
                    cell,
                    orbit,
                    t_total,
                    thin: at_least_one("thin", file.usize_or("thin", 10)?)?,
                    t_test: positive("t_test", file.f64_or("t_test", 1.0)?)?,
                    rest_points: file.usize_or("rest_points", 5)?,
                }
            }
            Mode::Audit => Params::Audit {
                n_probes: at_least_one("n_probes", file.usize_or("n_probes", 10_000)?)?,
                radius: positive("radius", file.f64_or("radius", 1.0)?)?,
            },
            Mode::OracleHbar => {
                if model.dim() != 1 {
                    return Err(Error::UnsupportedModel(format!("oracle-hbar needs dim = 1, got {}", model.dim())));
                }
                Params::OracleHbar
            }
        };
        file.finish()?;
        Ok(Self {
            mode,
            model,
            params,
            seed,
            source: source.to_path_buf(),
            text: text.to_string(),
        })
    }
}
