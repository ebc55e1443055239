//! Experiment configuration, field snapshots and text exports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::isoflux::{CurrentKind, PolyCurrent, Segment};
use crate::meissner::ExternalField;
use crate::mesh::{ComplexField, Grid, GridSpec, Loc, Omega, ScalarField, VKind, VectorField};
use crate::minimize::MinimizeOptions;
use crate::pinning::{PinningKind, PinningProfile};

pub const MAGIC: &[u8; 4] = b"PGL3";
pub const FORMAT_VERSION: u32 = 1;

/// Applied-field descriptor as written in a config file.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Constant([f64; 3]),
    Azimuthal,
    Gradient,
    Sampled(PathBuf),
}

impl FieldSpec {
    pub fn resolve(&self, grid: &Grid) -> Result<ExternalField> {
        Ok(match self {
            FieldSpec::Constant(d) => ExternalField::Constant(*d),
            FieldSpec::Azimuthal => ExternalField::Azimuthal,
            FieldSpec::Gradient => ExternalField::Gradient,
            FieldSpec::Sampled(p) => match load_field(p)? {
                Field::Vector(v) if v.kind == VKind::Edge => {
                    if v.grid.spec() != grid.spec() {
                        return Err(Error::Config(format!("{}: snapshot grid differs from the run grid", p.display())));
                    }
                    ExternalField::Sampled(VectorField { grid: grid.clone(), ..v })
                }
                _ => return Err(Error::Config(format!("{}: expected an edge vector field", p.display()))),
            },
        })
    }

    pub fn parse(s: &str) -> Option<FieldSpec> {
        match s {
            "constant" | "z" => Some(FieldSpec::Constant([0.0, 0.0, 1.0])),
            "azimuthal" => Some(FieldSpec::Azimuthal),
            "gradient" => Some(FieldSpec::Gradient),
            _ => s.strip_prefix("file:").map(|p| FieldSpec::Sampled(PathBuf::from(p))),
        }
    }
}

/// Applied-field intensities, either explicit or in units of H_c1.
#[derive(Clone, Debug, PartialEq)]
pub enum HSchedule {
    List(Vec<f64>),
    Range { start: f64, step: f64, stop: f64, in_hc1: bool },
}

impl HSchedule {
    /// `start:step:stop`, with an optional `xHc1` suffix on `stop`.
    pub fn parse(s: &str) -> std::result::Result<HSchedule, String> {
        let s = s.trim();
        if !s.contains(':') {
            let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let v = v.map_err(|e| format!("bad h list `{s}`: {e}"))?;
            let out = HSchedule::List(v);
            out.validate()?;
            return Ok(out);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("h range `{s}` must be start:step:stop"));
        }
        let (stop, in_hc1) = match parts[2].strip_suffix("xHc1").or_else(|| parts[2].strip_suffix("xhc1")) {
            Some(x) => (x, true),
            None => (parts[2], false),
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad number `{x}` in `{s}`: {e}"));
        let out = HSchedule::Range { start: num(parts[0])?, step: num(parts[1])?, stop: num(stop)?, in_hc1 };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            HSchedule::List(v) => {
                if v.is_empty() {
                    return Err("empty h schedule".into());
                }
                if v.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
                    return Err("h values must be finite and nonnegative".into());
                }
                if v.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err("h schedule must be strictly ascending".into());
                }
            }
            HSchedule::Range { start, step, stop, .. } => {
                if !(*start >= 0.0 && *step > 0.0 && stop >= start && stop.is_finite()) {
                    return Err("h range needs 0 ≤ start ≤ stop and step > 0".into());
                }
            }
        }
        Ok(())
    }

    pub fn needs_hc1(&self) -> bool {
        matches!(self, HSchedule::Range { in_hc1: true, .. })
    }

    /// Number of h values.
    pub fn len(&self) -> usize {
        match self {
            HSchedule::List(v) => v.len(),
            HSchedule::Range { start, step, stop, .. } => ((stop - start) / step + 1e-9).floor() as usize + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self, hc1: f64) -> Vec<f64> {
        match self {
            HSchedule::List(v) => v.clone(),
            HSchedule::Range { start, step, in_hc1, .. } => {
                let unit = if *in_hc1 { hc1 } else { 1.0 };
                (0..self.len()).map(|k| (start + k as f64 * step) * unit).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub window: usize,
    pub gauge_every: usize,
    /// Cube side of the detection grid in units of h.
    pub delta_cells: f64,
    pub graph_resolution: usize,
    pub dual_norm_fields: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let m = MinimizeOptions::default();
        Tolerances {
            max_iter: m.max_iter,
            rel_tol: m.rel_tol,
            window: m.window,
            gauge_every: m.gauge_every,
            delta_cells: 5.0,
            graph_resolution: 1,
            dual_norm_fields: 500,
        }
    }
}

impl Tolerances {
    pub fn minimize(&self) -> MinimizeOptions {
        MinimizeOptions { max_iter: self.max_iter, rel_tol: self.rel_tol, window: self.window, gauge_every: self.gauge_every }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub pinning: PinningProfile,
    pub eps: Vec<f64>,
    pub field: FieldSpec,
    pub h: HSchedule,
    pub tol: Tolerances,
    pub seed: u64,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRun {
    pub eps: f64,
    /// Index into the h schedule.
    pub h_index: usize,
}

impl ExperimentConfig {
    /// Cross product of the ε list and the h schedule.
    pub fn plan(&self) -> Vec<PlannedRun> {
        self.eps.iter().flat_map(|&eps| (0..self.h.len()).map(move |h_index| PlannedRun { eps, h_index })).collect()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec::ball(1.0, 2.0, 24),
            pinning: PinningProfile::constant(1.0),
            eps: vec![0.1],
            field: FieldSpec::Constant([0.0, 0.0, 1.0]),
            h: HSchedule::List(vec![0.0]),
            tol: Tolerances::default(),
            seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

/// Line of `key` inside `[section]`, 1-based.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut cur = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(s) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            cur = s.trim().to_string();
            continue;
        }
        if cur == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Reader<'a> {
    text: &'a str,
    root: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn err(&mut self, section: &str, key: &str, msg: &str) {
        let at = match key_line(self.text, section, key) {
            Some(l) => format!("line {l}: "),
            None => String::new(),
        };
        self.errors.push(format!("{at}{section}.{key}: {msg}"));
    }

    fn get(&self, section: &str, key: &str) -> Option<&'a Value> {
        self.root.get(section)?.as_table()?.get(key)
    }

    fn float(&mut self, section: &str, key: &str) -> Option<f64> {
        match self.get(section, key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(section, key, "expected a number");
                None
            }
        }
    }

    fn positive(&mut self, section: &str, key: &str) -> Option<f64> {
        let x = self.float(section, key)?;
        if !(x > 0.0 && x.is_finite()) {
            self.err(section, key, &format!("must be positive, got {x}"));
            return None;
        }
        Some(x)
    }

    fn uint(&mut self, section: &str, key: &str) -> Option<u64> {
        match self.get(section, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.err(section, key, "expected a nonnegative integer");
                None
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<String> {
        match self.get(section, key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.err(section, key, "expected a string");
                None
            }
        }
    }

    fn floats(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        match self.get(section, key)? {
            Value::Array(a) => {
                let v: Option<Vec<f64>> = a
                    .iter()
                    .map(|x| match x {
                        Value::Float(f) => Some(*f),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                if v.is_none() {
                    self.err(section, key, "expected an array of numbers");
                }
                v
            }
            Value::Float(f) => Some(vec![*f]),
            Value::Integer(i) => Some(vec![*i as f64]),
            _ => {
                self.err(section, key, "expected a number or an array of numbers");
                None
            }
        }
    }

    fn vec3(&mut self, section: &str, key: &str) -> Option<[f64; 3]> {
        let v = self.floats(section, key)?;
        if v.len() != 3 {
            self.err(section, key, "expected three numbers");
            return None;
        }
        Some([v[0], v[1], v[2]])
    }

    fn points(&mut self, section: &str, key: &str) -> Option<Vec<[f64; 3]>> {
        let Some(Value::Array(a)) = self.get(section, key) else {
            if self.get(section, key).is_some() {
                self.err(section, key, "expected an array of [x, y, z]");
            }
            return None;
        };
        let mut out = Vec::new();
        for p in a {
            let q: Option<Vec<f64>> = p.as_array().map(|r| r.iter().filter_map(|x| x.as_float().or(x.as_integer().map(|i| i as f64))).collect());
            match q {
                Some(q) if q.len() == 3 => out.push([q[0], q[1], q[2]]),
                _ => {
                    self.err(section, key, "expected an array of [x, y, z]");
                    return None;
                }
            }
        }
        Some(out)
    }
}

const SECTIONS: [(&str, &[&str]); 7] = [
    ("grid", &["n", "domain", "radius", "center", "margin", "min", "max", "box_min", "box_max"]),
    ("pinning", &["kind", "b", "boundary_margin", "centers", "radii", "period", "cell", "seed", "x0"]),
    ("model", &["eps"]),
    ("field", &["kind", "direction", "file"]),
    ("schedule", &["h"]),
    ("solver", &["max_iter", "rel_tol", "window", "gauge_every", "delta_cells", "graph_resolution", "dual_norm_fields"]),
    ("run", &["seed", "output"]),
];

/// Parse a TOML experiment file; paths inside it are relative to the file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut r = Reader { text, root: &root, errors: Vec::new() };
    let mut cfg = ExperimentConfig::default();

    for (name, v) in &root {
        match SECTIONS.iter().find(|(s, _)| s == name) {
            None => r.errors.push(format!("unknown section [{name}]")),
            Some((_, keys)) => {
                if let Some(t) = v.as_table() {
                    for k in t.keys() {
                        if !keys.contains(&k.as_str()) {
                            r.err(name, k, "unknown key");
                        }
                    }
                } else {
                    r.errors.push(format!("{name} must be a section"));
                }
            }
        }
    }

    // grid
    let n = match r.get("grid", "n") {
        Some(Value::Integer(i)) if *i >= 4 => [*i as usize; 3],
        Some(Value::Array(_)) => match r.floats("grid", "n") {
            Some(v) if v.len() == 3 && v.iter().all(|x| *x >= 4.0 && x.fract() == 0.0) => [v[0] as usize, v[1] as usize, v[2] as usize],
            _ => {
                r.err("grid", "n", "expected three integers ≥ 4");
                cfg.grid.n
            }
        },
        Some(_) => {
            r.err("grid", "n", "expected an integer ≥ 4");
            cfg.grid.n
        }
        None => cfg.grid.n,
    };
    let domain = r.string("grid", "domain").unwrap_or_else(|| "ball".into());
    let margin = r.positive("grid", "margin").unwrap_or(2.0);
    if margin <= 1.0 {
        r.err("grid", "margin", "box must be larger than the sample");
    }
    match domain.as_str() {
        "ball" => {
            let radius = r.positive("grid", "radius").unwrap_or(1.0);
            let c = r.vec3("grid", "center").unwrap_or([0.0; 3]);
            let half = radius * margin;
            cfg.grid = GridSpec {
                box_min: [c[0] - half, c[1] - half, c[2] - half],
                box_max: [c[0] + half, c[1] + half, c[2] + half],
                n,
                omega: Omega::Ball { center: c, radius },
            };
        }
        "box" => {
            let min = r.vec3("grid", "min").unwrap_or([-1.0; 3]);
            let max = r.vec3("grid", "max").unwrap_or([1.0; 3]);
            if (0..3).any(|a| !(max[a] > min[a])) {
                r.err("grid", "max", "must exceed min componentwise");
            }
            let mid = [0, 1, 2].map(|a| 0.5 * (min[a] + max[a]));
            let half = [0, 1, 2].map(|a| 0.5 * (max[a] - min[a]) * margin);
            let bmin = r.vec3("grid", "box_min").unwrap_or([0, 1, 2].map(|a| mid[a] - half[a]));
            let bmax = r.vec3("grid", "box_max").unwrap_or([0, 1, 2].map(|a| mid[a] + half[a]));
            cfg.grid = GridSpec { box_min: bmin, box_max: bmax, n, omega: Omega::Box { min, max } };
        }
        other => r.err("grid", "domain", &format!("unknown domain `{other}` (ball | box)")),
    }

    // pinning
    let b = r.float("pinning", "b").unwrap_or(1.0);
    if !(b > 0.0 && b <= 1.0) {
        r.err("pinning", "b", &format!("must lie in (0, 1], got {b}"));
    }
    let boundary_margin = r.float("pinning", "boundary_margin").unwrap_or(0.0);
    if boundary_margin < 0.0 {
        r.err("pinning", "boundary_margin", "must be nonnegative");
    }
    let kind = match r.string("pinning", "kind").as_deref().unwrap_or("constant") {
        "constant" => Some(PinningKind::Constant),
        "inclusions" => {
            let centers = r.points("pinning", "centers").unwrap_or_default();
            let radii = r.floats("pinning", "radii").unwrap_or_default();
            if centers.len() != radii.len() {
                r.err("pinning", "radii", "needs one radius per center");
            }
            Some(PinningKind::Inclusions { centers, radii })
        }
        "periodic" => r.positive("pinning", "period").map(|period| PinningKind::Periodic { period }),
        "checkerboard" => r.positive("pinning", "cell").map(|cell| PinningKind::RandomCheckerboard {
            cell,
            seed: r.uint("pinning", "seed").unwrap_or(0),
        }),
        "slab" => Some(PinningKind::SlabStep { x0: r.float("pinning", "x0").unwrap_or(0.0) }),
        other => {
            r.err("pinning", "kind", &format!("unknown kind `{other}`"));
            None
        }
    };
    if let Some(kind) = kind {
        cfg.pinning = PinningProfile { kind, b, boundary_margin };
    }

    // model
    if let Some(eps) = r.floats("model", "eps") {
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            r.err("model", "eps", "must be positive");
        } else {
            cfg.eps = eps;
        }
    }

    // field
    match r.string("field", "kind").as_deref().unwrap_or("constant") {
        "constant" => cfg.field = FieldSpec::Constant(r.vec3("field", "direction").unwrap_or([0.0, 0.0, 1.0])),
        "azimuthal" => cfg.field = FieldSpec::Azimuthal,
        "gradient" => cfg.field = FieldSpec::Gradient,
        "sampled" => match r.string("field", "file") {
            Some(f) => {
                let p = base.join(f);
                if !p.exists() {
                    r.err("field", "file", &format!("{} does not exist", p.display()));
                }
                cfg.field = FieldSpec::Sampled(p);
            }
            None => r.errors.push("field.file: required for sampled fields".into()),
        },
        other => r.err("field", "kind", &format!("unknown kind `{other}`")),
    }

    // schedule
    match r.get("schedule", "h") {
        Some(Value::String(s)) => match HSchedule::parse(s) {
            Ok(h) => cfg.h = h,
            Err(e) => r.err("schedule", "h", &e),
        },
        Some(_) => {
            if let Some(v) = r.floats("schedule", "h") {
                let h = HSchedule::List(v);
                match h.validate() {
                    Ok(()) => cfg.h = h,
                    Err(e) => r.err("schedule", "h", &e),
                }
            }
        }
        None => {}
    }

    // solver
    let t = &mut cfg.tol;
    if let Some(x) = r.uint("solver", "max_iter") {
        t.max_iter = x as usize;
    }
    if let Some(x) = r.positive("solver", "rel_tol") {
        t.rel_tol = x;
    }
    if let Some(x) = r.uint("solver", "window") {
        t.window = (x as usize).max(1);
    }
    if let Some(x) = r.uint("solver", "gauge_every") {
        t.gauge_every = x as usize;
    }
    if let Some(x) = r.positive("solver", "delta_cells") {
        if x < 4.0 {
            r.err("solver", "delta_cells", "detection cubes need at least 4 cells per side");
        }
        t.delta_cells = x;
    }
    if let Some(x) = r.uint("solver", "graph_resolution") {
        t.graph_resolution = (x as usize).max(1);
    }
    if let Some(x) = r.uint("solver", "dual_norm_fields") {
        t.dual_norm_fields = x as usize;
    }

    // run
    if let Some(s) = r.uint("run", "seed") {
        cfg.seed = s;
    }
    if let Some(o) = r.string("run", "output") {
        cfg.output = base.join(o);
    }

    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(r.errors.join("\n")))
    }
}

/// Any field that can be written to a snapshot.
#[derive(Clone, Debug)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
    Complex(ComplexField),
}

impl Field {
    pub fn grid(&self) -> &Grid {
        match self {
            Field::Scalar(f) => &f.grid,
            Field::Vector(f) => &f.grid,
            Field::Complex(f) => &f.grid,
        }
    }

    fn kind_tag(&self) -> u8 {
        match self {
            Field::Scalar(f) if f.loc == Loc::Cell => 0,
            Field::Scalar(_) => 1,
            Field::Vector(f) if f.kind == VKind::Face => 2,
            Field::Vector(_) => 3,
            Field::Complex(_) => 4,
        }
    }

    fn components(&self) -> Vec<Vec<f64>> {
        match self {
            Field::Scalar(f) => vec![f.v.clone()],
            Field::Vector(f) => f.c.to_vec(),
            Field::Complex(f) => vec![f.v.iter().map(|z| z.re).collect(), f.v.iter().map(|z| z.im).collect()],
        }
    }

    /// Bitwise equality of grid and values.
    pub fn bit_eq(&self, other: &Field) -> bool {
        self.kind_tag() == other.kind_tag()
            && self.grid().spec() == other.grid().spec()
            && self
                .components()
                .iter()
                .zip(other.components().iter())
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.b.len() {
            return Err(Error::Format("truncated snapshot".into()));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn write_spec(out: &mut Vec<u8>, s: &GridSpec) {
    put_f64s(out, &s.box_min);
    put_f64s(out, &s.box_max);
    for n in s.n {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    match &s.omega {
        Omega::Ball { center, radius } => {
            out.push(0);
            put_f64s(out, center);
            put_f64s(out, &[*radius]);
        }
        Omega::Box { min, max } => {
            out.push(1);
            put_f64s(out, min);
            put_f64s(out, max);
        }
        Omega::Samples(v) => {
            out.push(2);
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            put_f64s(out, v);
        }
    }
}

fn read_spec(c: &mut Cursor) -> Result<GridSpec> {
    let box_min = [c.f64()?, c.f64()?, c.f64()?];
    let box_max = [c.f64()?, c.f64()?, c.f64()?];
    let mut n = [0usize; 3];
    for x in n.iter_mut() {
        *x = usize::try_from(c.u64()?).map_err(|_| Error::Format("grid size overflow".into()))?;
    }
    if n.iter().any(|&k| k == 0 || k > 1 << 12) {
        return Err(Error::Format(format!("implausible grid size {n:?}")));
    }
    let omega = match c.u8()? {
        0 => Omega::Ball { center: [c.f64()?, c.f64()?, c.f64()?], radius: c.f64()? },
        1 => Omega::Box { min: [c.f64()?, c.f64()?, c.f64()?], max: [c.f64()?, c.f64()?, c.f64()?] },
        2 => {
            let len = c.u64()? as usize;
            if len != n[0] * n[1] * n[2] {
                return Err(Error::Format("sampled Ω has the wrong length".into()));
            }
            Omega::Samples(c.f64s(len)?)
        }
        t => return Err(Error::Format(format!("unknown Ω tag {t}"))),
    };
    Ok(GridSpec { box_min, box_max, n, omega })
}

/// Snapshot bytes: magic, version, grid spec, kind, components, payload length, payload, CRC-32 of payload.
pub fn encode_field(f: &Field) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    write_spec(&mut out, f.grid().spec());
    out.push(f.kind_tag());
    let comps = f.components();
    out.extend_from_slice(&(comps.len() as u32).to_le_bytes());
    let mut payload = Vec::with_capacity(comps.iter().map(|c| 8 * c.len()).sum());
    for c in &comps {
        put_f64s(&mut payload, c);
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    let crc = crc32fast::hash(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let mut c = Cursor { b: bytes, at: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("not a PGL3 snapshot".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("snapshot format version {version}, this reader handles {FORMAT_VERSION}")));
    }
    let spec = read_spec(&mut c)?;
    let kind = c.u8()?;
    let ncomp = c.u32()? as usize;
    let plen = c.u64()? as usize;
    let payload = c.take(plen)?;
    let crc = c.u32()?;
    if c.at != bytes.len() {
        return Err(Error::Format("trailing bytes after snapshot".into()));
    }
    if crc32fast::hash(payload) != crc {
        return Err(Error::Format("snapshot checksum mismatch".into()));
    }
    let grid = Grid::new(spec).map_err(|e| Error::Format(format!("snapshot grid: {e}")))?;
    let lens: Vec<usize> = match kind {
        0 => vec![grid.len(Loc::Cell)],
        1 => vec![grid.len(Loc::Node)],
        2 => (0..3).map(|a| grid.len(Loc::Face(a))).collect(),
        3 => (0..3).map(|a| grid.len(Loc::Edge(a))).collect(),
        4 => vec![grid.len(Loc::Cell); 2],
        t => return Err(Error::Format(format!("unknown field kind {t}"))),
    };
    if ncomp != lens.len() || plen != 8 * lens.iter().sum::<usize>() {
        return Err(Error::Format("payload length does not match the header".into()));
    }
    let mut p = Cursor { b: payload, at: 0 };
    let comps: Vec<Vec<f64>> = lens.iter().map(|&n| p.f64s(n)).collect::<Result<_>>()?;
    Ok(match kind {
        0 | 1 => Field::Scalar(ScalarField { grid, loc: if kind == 0 { Loc::Cell } else { Loc::Node }, v: comps[0].clone() }),
        2 | 3 => {
            let [x, y, z]: [Vec<f64>; 3] = comps.try_into().unwrap();
            Field::Vector(VectorField { grid, kind: if kind == 2 { VKind::Face } else { VKind::Edge }, c: [x, y, z] })
        }
        _ => Field::Complex(ComplexField { grid, v: comps[0].iter().zip(&comps[1]).map(|(&re, &im)| Complex64::new(re, im)).collect() }),
    })
}

pub fn save_field(path: &Path, f: &Field) -> Result<()> {
    std::fs::write(path, encode_field(f))?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<Field> {
    decode_field(&std::fs::read(path)?)
}

/// One `x0 y0 z0 x1 y1 z1 mult` line per segment; round-trips bitwise.
pub fn write_current(c: &PolyCurrent) -> String {
    let mut s = String::new();
    for g in &c.segments {
        let _ = writeln!(s, "{:?} {:?} {:?} {:?} {:?} {:?} {}", g.a[0], g.a[1], g.a[2], g.b[0], g.b[1], g.b[2], g.mult);
    }
    s
}

pub fn read_current(text: &str) -> Result<PolyCurrent> {
    let mut segments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let w: Vec<&str> = t.split_whitespace().collect();
        let bad = || Error::Format(format!("current line {}: expected `x0 y0 z0 x1 y1 z1 mult`", i + 1));
        if w.len() != 7 {
            return Err(bad());
        }
        let x: Vec<f64> = w[..6].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let mult = w[6].parse::<i64>().map_err(|_| bad())?;
        segments.push(Segment { a: [x[0], x[1], x[2]], b: [x[3], x[4], x[5]], mult });
    }
    let closed = {
        let c = PolyCurrent { segments: segments.clone(), kind: CurrentKind::Loop };
        c.boundary().is_empty()
    };
    Ok(PolyCurrent { segments, kind: if closed { CurrentKind::Loop } else { CurrentKind::Mixed } })
}

/// Cell data in the legacy VTK structured-points layout.
pub fn vtk_cells(grid: &Grid, fields: &[(&str, &[f64])]) -> String {
    let s = grid.spec();
    let h = grid.h();
    let n = s.n;
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\npgl3 cell data\nASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", n[0] + 1, n[1] + 1, n[2] + 1);
    let _ = writeln!(out, "ORIGIN {:?} {:?} {:?}", s.box_min[0], s.box_min[1], s.box_min[2]);
    let _ = writeln!(out, "SPACING {:?} {:?} {:?}", h[0], h[1], h[2]);
    let _ = writeln!(out, "CELL_DATA {}", n[0] * n[1] * n[2]);
    for (name, v) in fields {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in v.iter() {
            let _ = writeln!(out, "{x:?}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(GridSpec::ball(1.0, 2.0, 8)).unwrap()
    }

    #[test]
    fn shipped_config_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/pinned_ball.toml");
        let cfg = parse_config(&path).unwrap();
        assert_eq!(cfg.eps, vec![0.1, 0.05]);
        assert_eq!(cfg.grid.n, [32; 3]);
        assert!(cfg.h.needs_hc1());
        assert_eq!(cfg.plan().len(), 2 * 13);
        Grid::new(cfg.grid).unwrap();
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config_str("[model]\neps = 0.05\n", Path::new(".")).unwrap();
        assert_eq!(c.eps, vec![0.05]);
        assert_eq!(c.grid, GridSpec::ball(1.0, 2.0, 24));
        assert_eq!(c.tol, Tolerances::default());
    }

    #[test]
    fn negative_eps_names_key_and_line() {
        let e = parse_config_str("[grid]\nn = 16\n\n[model]\neps = -0.1\n", Path::new(".")).unwrap_err();
        let s = e.to_string();
        assert!(s.contains("line 5") && s.contains("model.eps"), "{s}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn errors_are_aggregated() {
        let e = parse_config_str("[model]\neps = 0\n[pinning]\nb = 2.0\nfoo = 1\n", Path::new(".")).unwrap_err().to_string();
        assert_eq!(e.lines().count(), 3, "{e}");
    }

    #[test]
    fn cross_product_plan() {
        let c = parse_config_str("[model]\neps = [0.1, 0.05]\n[schedule]\nh = \"0:0.5:2\"\n", Path::new(".")).unwrap();
        assert_eq!(c.h.len(), 5);
        assert_eq!(c.plan().len(), 10);
    }

    #[test]
    fn hc1_schedule() {
        let h = HSchedule::parse("0:0.1:3xHc1").unwrap();
        assert!(h.needs_hc1());
        let v = h.values(2.0);
        assert_eq!(v.len(), 31);
        assert!((v[30] - 6.0).abs() < 1e-12);
        assert!(HSchedule::parse("1,0.5").is_err());
        assert!(HSchedule::parse("0:-1:3").is_err());
    }

    #[test]
    fn missing_sampled_file_is_reported() {
        let e = parse_config_str("[field]\nkind = \"sampled\"\nfile = \"nope.pgl3\"\n", Path::new("/nonexistent")).unwrap_err();
        assert!(e.to_string().contains("line 3"));
    }

    #[test]
    fn snapshot_round_trip_all_kinds() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fields = vec![
            Field::Scalar(ScalarField::from_fn(&g, Loc::Cell, |_| rng.gen())),
            Field::Scalar(ScalarField::from_fn(&g, Loc::Node, |p| p[0].sin())),
            Field::Vector(VectorField::from_fn(&g, VKind::Face, |p| [p[0], f64::MIN_POSITIVE, -0.0])),
            Field::Vector(VectorField::from_fn(&g, VKind::Edge, |p| [p[2], p[1], 1e300])),
            Field::Complex(ComplexField::from_fn(&g, |p| Complex64::new(p[0], -p[1]))),
        ];
        for f in &fields {
            let back = decode_field(&encode_field(f)).unwrap();
            assert!(f.bit_eq(&back));
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let g = grid();
        let f = Field::Scalar(ScalarField::from_fn(&g, Loc::Cell, |p| p[1]));
        let mut b = encode_field(&f);
        let k = b.len() - 20;
        b[k] ^= 0x10;
        assert!(matches!(decode_field(&b), Err(Error::Format(m)) if m.contains("checksum")));
        b[k] ^= 0x10;
        b.truncate(b.len() - 9);
        assert!(matches!(decode_field(&b), Err(Error::Format(_))));
    }

    #[test]
    fn newer_version_is_rejected() {
        let g = grid();
        let mut b = encode_field(&Field::Scalar(ScalarField::zeros(&g, Loc::Cell)));
        b[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let e = decode_field(&b).unwrap_err().to_string();
        assert!(e.contains("version"), "{e}");
    }

    #[test]
    fn current_text_round_trip() {
        let c = PolyCurrent::new(
            vec![
                Segment { a: [0.1, 0.2, 1.0 / 3.0], b: [0.5, -0.25, 1e-17], mult: 2 },
                Segment { a: [0.5, -0.25, 1e-17], b: [0.1, 0.2, 1.0 / 3.0], mult: -1 },
            ],
            CurrentKind::Mixed,
        );
        let back = read_current(&write_current(&c)).unwrap();
        assert_eq!(back.segments, c.segments);
        assert!(read_current("1 2 3\n").is_err());
    }
}
