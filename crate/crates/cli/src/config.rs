//! Run configuration.
//!
//! The grammar is line based:
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Values are JSON (`64`, `1e-3`, `"hyperplane"`, `[0.0, 0.5]`, `true`); a
//! value that is not valid JSON is taken as a bare string. Keys before the
//! first section header belong to the unnamed top-level section. Manifests
//! are written in the same grammar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gapdiff::geometry::MAX_SNOWFLAKE_DEPTH;
use gapdiff::measure::{DEFAULT_QUAD_ORDER, MAX_QUAD_ORDER};
use gapdiff::operator::DEFAULT_DENSE_THRESHOLD;
use gapdiff::{MassKind, Point, Rect};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: Value,
    pub line: usize,
}

/// Parsed but unvalidated document: `section -> key -> entry`, in file order
/// of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    sections: Vec<(String, BTreeMap<String, Entry>)>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut doc = Document::default();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| CliError::config(line, trimmed, "unterminated section header"))?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(CliError::config(line, trimmed, "empty section name"));
                }
                current = name.to_string();
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| CliError::config(line, trimmed, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::config(line, trimmed, "missing key"));
            }
            let value = value.trim();
            let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
            let section = doc.section_mut(&current);
            if section.contains_key(key) {
                return Err(CliError::config(line, &qualified(&current, key), "duplicate key"));
            }
            section.insert(key.to_string(), Entry { value, line });
        }
        Ok(doc)
    }

    fn section_mut(&mut self, name: &str) -> &mut BTreeMap<String, Entry> {
        let pos = match self.sections.iter().position(|(n, _)| n == name) {
            Some(p) => p,
            None => {
                self.sections.push((name.to_string(), BTreeMap::new()));
                self.sections.len() - 1
            }
        };
        &mut self.sections[pos].1
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections
            .iter()
            .find(|(n, _)| n == section)
            .and_then(|(_, s)| s.get(key))
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &Entry)> {
        self.sections
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(k, e)| (s.as_str(), k.as_str(), e)))
    }

    /// Adds a value; used when building manifests.
    pub fn set(&mut self, section: &str, key: &str, value: Value) {
        self.section_mut(section).insert(key.to_string(), Entry { value, line: 0 });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if !name.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{name}]");
            }
            for (k, e) in entries {
                let _ = writeln!(out, "{k} = {}", e.value);
            }
        }
        out
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupportConfig {
    Full,
    Hyperplane,
    Snowflake { depth: usize, center: Point, side: f64 },
    PolygonFile(PathBuf),
    SegmentsFile(PathBuf),
}

/// Initial datum for the evolve task.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldChoice {
    One,
    /// First eigenvector (lumped mass), unit M-norm.
    Ground,
    /// Indicator of the support dof nearest to a point.
    Indicator(Point),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Eigen {
        k: usize,
        mass: MassKind,
    },
    Evolve {
        f0: FieldChoice,
        t_end: f64,
        dt: f64,
        /// Write a snapshot every this many steps (the final state always).
        every: usize,
    },
    Walk {
        start: Point,
        times: Vec<f64>,
        n_paths: usize,
        /// Number of individual paths exported as CSV.
        export_paths: usize,
    },
    Verify {
        trials: usize,
        t_end: f64,
        dt: f64,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Eigen { .. } => "eigen",
            Task::Evolve { .. } => "evolve",
            Task::Walk { .. } => "walk",
            Task::Verify { .. } => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: Rect,
    pub support: SupportConfig,
    pub density: f64,
    pub n_cells: usize,
    pub quad_order: usize,
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub dense_threshold: usize,
    pub eig_tol: f64,
    pub task: Task,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Write fields on every mesh vertex (harmonically extended).
    pub extend: bool,
    pub output: PathBuf,
    /// The parsed document, echoed into the manifest.
    pub source: Document,
}

impl RunConfig {
    /// Resolves relative geometry file paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.support {
            SupportConfig::PolygonFile(p) | SupportConfig::SegmentsFile(p) if p.is_relative() => {
                *p = base.join(&*p);
            }
            _ => {}
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("domain", &["xmin", "xmax", "ymin", "ymax"]),
    ("support", &["kind", "depth", "side", "center", "file", "density"]),
    ("mesh", &["n_cells", "quad_order"]),
    ("solver", &["tol", "max_iter", "dense_threshold", "eig_tol"]),
    (
        "task",
        &[
            "kind", "k", "mass", "f0", "point", "t_end", "dt", "every", "start", "t", "n_paths",
            "export_paths", "trials",
        ],
    ),
    ("run", &["seed", "threads", "extend", "output"]),
];

struct Reader<'a> {
    doc: &'a Document,
}

impl Reader<'_> {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.doc.get(section, key)
    }

    fn missing(section: &str, key: &str) -> CliError {
        CliError::Config {
            line: None,
            key: qualified(section, key),
            message: "missing required field".into(),
        }
    }

    fn bad(e: &Entry, section: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::config(e.line, &qualified(section, key), message)
    }

    fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => match e.value.as_f64() {
                Some(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(Self::bad(e, section, key, "expected a finite number")),
            },
        }
    }

    fn f64_req(&self, section: &str, key: &str) -> Result<f64, CliError> {
        self.f64_opt(section, key)?.ok_or_else(|| Self::missing(section, key))
    }

    fn u64_opt(&self, section: &str, key: &str) -> Result<Option<u64>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .as_u64()
                .map(Some)
                .ok_or_else(|| Self::bad(e, section, key, "expected a nonnegative integer")),
        }
    }

    fn usize_opt(&self, section: &str, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.u64_opt(section, key)?.map(|v| v as usize))
    }

    fn usize_req(&self, section: &str, key: &str) -> Result<usize, CliError> {
        self.usize_opt(section, key)?.ok_or_else(|| Self::missing(section, key))
    }

    fn str_opt(&self, section: &str, key: &str) -> Result<Option<&str>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .as_str()
                .map(Some)
                .ok_or_else(|| Self::bad(e, section, key, "expected a string")),
        }
    }

    fn str_req(&self, section: &str, key: &str) -> Result<&str, CliError> {
        self.str_opt(section, key)?.ok_or_else(|| Self::missing(section, key))
    }

    fn bool_opt(&self, section: &str, key: &str) -> Result<Option<bool>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .as_bool()
                .map(Some)
                .ok_or_else(|| Self::bad(e, section, key, "expected true or false")),
        }
    }

    fn point_opt(&self, section: &str, key: &str) -> Result<Option<Point>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => match e.value.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>()) {
                Some(Some(v)) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => Ok(Some(Point::new(v[0], v[1]))),
                _ => Err(Self::bad(e, section, key, "expected a point [x, y]")),
            },
        }
    }

    fn times(&self, section: &str, key: &str) -> Result<Vec<f64>, CliError> {
        let e = self.entry(section, key).ok_or_else(|| Self::missing(section, key))?;
        let list = match &e.value {
            Value::Array(a) => a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>(),
            v => v.as_f64().map(|x| vec![x]),
        };
        match list {
            Some(v) if !v.is_empty() && v.iter().all(|t| t.is_finite() && *t >= 0.0) => Ok(v),
            _ => Err(Self::bad(e, section, key, "expected a nonnegative time or a list of them")),
        }
    }

    fn range_error(&self, section: &str, key: &str, message: impl Into<String>) -> CliError {
        let line = self.entry(section, key).map(|e| e.line);
        CliError::Config {
            line,
            key: qualified(section, key),
            message: message.into(),
        }
    }
}

fn check_known(doc: &Document) -> Result<(), CliError> {
    for (section, key, e) in doc.entries() {
        let known = KNOWN
            .iter()
            .find(|(s, _)| *s == section)
            .is_some_and(|(_, keys)| keys.contains(&key));
        if !known {
            return Err(CliError::config(e.line, &qualified(section, key), "unknown key"));
        }
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let doc = Document::parse(text)?;
    check_known(&doc)?;
    let r = Reader { doc: &doc };

    let domain = Rect::new(
        r.f64_req("domain", "xmin")?,
        r.f64_req("domain", "xmax")?,
        r.f64_req("domain", "ymin")?,
        r.f64_req("domain", "ymax")?,
    )
    .map_err(|e| r.range_error("domain", "xmax", e.to_string()))?;

    let support = match r.str_req("support", "kind")? {
        "full" => SupportConfig::Full,
        "hyperplane" => SupportConfig::Hyperplane,
        "snowflake" => {
            let depth = r.usize_req("support", "depth")?;
            if depth > MAX_SNOWFLAKE_DEPTH {
                return Err(r.range_error(
                    "support",
                    "depth",
                    format!("depth {depth} out of range (at most {MAX_SNOWFLAKE_DEPTH})"),
                ));
            }
            let side = r.f64_opt("support", "side")?.unwrap_or(1.0);
            if side <= 0.0 {
                return Err(r.range_error("support", "side", "side must be positive"));
            }
            let center = r.point_opt("support", "center")?.unwrap_or(Point::new(
                0.5 * (domain.xmin + domain.xmax),
                0.5 * (domain.ymin + domain.ymax),
            ));
            SupportConfig::Snowflake { depth, center, side }
        }
        "polygon" => SupportConfig::PolygonFile(r.str_req("support", "file")?.into()),
        "segments" => SupportConfig::SegmentsFile(r.str_req("support", "file")?.into()),
        other => {
            return Err(r.range_error(
                "support",
                "kind",
                format!("unknown support `{other}` (full, hyperplane, snowflake, polygon, segments)"),
            ))
        }
    };
    let density = r.f64_opt("support", "density")?.unwrap_or(1.0);
    if density <= 0.0 {
        return Err(r.range_error("support", "density", "density must be positive"));
    }
    if support == SupportConfig::Full && density != 1.0 {
        return Err(r.range_error("support", "density", "full support has unit density"));
    }

    let n_cells = r.usize_req("mesh", "n_cells")?;
    if n_cells == 0 {
        return Err(r.range_error("mesh", "n_cells", "n_cells must be at least 1"));
    }
    let quad_order = r.usize_opt("mesh", "quad_order")?.unwrap_or(DEFAULT_QUAD_ORDER);
    if !(1..=MAX_QUAD_ORDER).contains(&quad_order) {
        return Err(r.range_error(
            "mesh",
            "quad_order",
            format!("quad_order must be in 1..={MAX_QUAD_ORDER}"),
        ));
    }

    let tol = r.f64_opt("solver", "tol")?.unwrap_or(1e-12);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(r.range_error("solver", "tol", "tol must lie in (0, 1)"));
    }
    let max_iter = r.usize_opt("solver", "max_iter")?;
    if max_iter == Some(0) {
        return Err(r.range_error("solver", "max_iter", "max_iter must be at least 1"));
    }
    let dense_threshold = r.usize_opt("solver", "dense_threshold")?.unwrap_or(DEFAULT_DENSE_THRESHOLD);
    let eig_tol = r.f64_opt("solver", "eig_tol")?.unwrap_or(gapdiff::eigen::DEFAULT_EIG_TOL);
    if !(eig_tol > 0.0 && eig_tol < 1.0) {
        return Err(r.range_error("solver", "eig_tol", "eig_tol must lie in (0, 1)"));
    }

    let positive = |key: &str| -> Result<f64, CliError> {
        let v = r.f64_req("task", key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(r.range_error("task", key, format!("{key} must be positive")))
        }
    };
    let nonnegative = |key: &str| -> Result<f64, CliError> {
        let v = r.f64_req("task", key)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(r.range_error("task", key, format!("{key} must be nonnegative")))
        }
    };
    let task = match r.str_req("task", "kind")? {
        "eigen" => {
            let k = r.usize_req("task", "k")?;
            if k == 0 {
                return Err(r.range_error("task", "k", "k must be at least 1"));
            }
            let mass = match r.str_opt("task", "mass")?.unwrap_or("lumped") {
                "lumped" => MassKind::Lumped,
                "consistent" => MassKind::Consistent,
                other => {
                    return Err(r.range_error("task", "mass", format!("unknown mass `{other}` (lumped, consistent)")))
                }
            };
            Task::Eigen { k, mass }
        }
        "evolve" => {
            let f0 = match r.str_opt("task", "f0")?.unwrap_or("one") {
                "one" => FieldChoice::One,
                "ground" => FieldChoice::Ground,
                "indicator" => FieldChoice::Indicator(
                    r.point_opt("task", "point")?
                        .ok_or_else(|| Reader::missing("task", "point"))?,
                ),
                other => {
                    return Err(r.range_error(
                        "task",
                        "f0",
                        format!("unknown initial field `{other}` (one, ground, indicator)"),
                    ))
                }
            };
            let every = r.usize_opt("task", "every")?.unwrap_or(1);
            if every == 0 {
                return Err(r.range_error("task", "every", "every must be at least 1"));
            }
            Task::Evolve {
                f0,
                t_end: nonnegative("t_end")?,
                dt: positive("dt")?,
                every,
            }
        }
        "walk" => {
            let n_paths = r.usize_req("task", "n_paths")?;
            if n_paths == 0 {
                return Err(r.range_error("task", "n_paths", "n_paths must be at least 1"));
            }
            Task::Walk {
                start: r.point_opt("task", "start")?.ok_or_else(|| Reader::missing("task", "start"))?,
                times: r.times("task", "t")?,
                n_paths,
                export_paths: r.usize_opt("task", "export_paths")?.unwrap_or(0),
            }
        }
        "verify" => Task::Verify {
            trials: r.usize_req("task", "trials")?,
            t_end: nonnegative("t_end")?,
            dt: positive("dt")?,
        },
        other => {
            return Err(r.range_error(
                "task",
                "kind",
                format!("unknown task `{other}` (eigen, evolve, walk, verify)"),
            ))
        }
    };

    let threads = r.usize_opt("run", "threads")?;
    if threads == Some(0) {
        return Err(r.range_error("run", "threads", "threads must be at least 1"));
    }
    Ok(RunConfig {
        domain,
        support,
        density,
        n_cells,
        quad_order,
        tol,
        max_iter,
        dense_threshold,
        eig_tol,
        task,
        seed: r.u64_opt("run", "seed")?.unwrap_or(0),
        threads,
        extend: r.bool_opt("run", "extend")?.unwrap_or(false),
        output: r.str_opt("run", "output")?.unwrap_or("out").into(),
        source: doc.clone(),
    })
}
