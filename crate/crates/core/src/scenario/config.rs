//! Scenario configuration: `key = value` pairs under `[section]` headers,
//! parsed with the TOML grammar and validated with line-numbered errors.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;
use toml::{Table, Value};

use crate::grid::{Mode, PhaseGrid};
use crate::model::{self, HybridHamiltonian, ModelParams};

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub mode: Mode,
    pub nq: usize,
    pub np: usize,
    /// Quantum grid size (continuum) or number of levels (finite-dimensional).
    pub nx: usize,
    pub lq: f64,
    pub lp: f64,
    pub lx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hbar: f64,
    pub m: f64,
    pub big_m: f64,
    pub lambda: f64,
    pub potential: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// von Mises × Gaussian times a spinor (levels) or a von Mises bump in x.
    GaussianProduct,
    /// von Mises × Gaussian times a modulated plane wave in x (continuum only).
    PlaneWaveProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub q0: f64,
    pub p0: f64,
    pub kappa: f64,
    pub sigma_p: f64,
    pub winding_q: i64,
    pub theta: f64,
    pub phi: f64,
    pub x0: f64,
    pub kappa_x: f64,
    pub winding_x: i64,
    pub modulation: f64,
    /// Weight of the maximally mixed state in the closure's initial ρ̂.
    pub mixing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Wave,
    Closure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    /// Momentum-map pairing residual for a fixed observable (finite-dimensional).
    Pairing,
    /// Advected Poincaré loop and trajectory dumps (continuum).
    Loop,
}

impl Diagnostic {
    pub fn name(&self) -> &'static str {
        match self {
            Diagnostic::Pairing => "pairing",
            Diagnostic::Loop => "loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: RunKind,
    /// Closure runs only: evolve u as well.
    pub general: bool,
    pub dt: f64,
    pub steps: usize,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    pub diagnostics: Vec<Diagnostic>,
    pub node_threshold: f64,
    pub boundary_mass_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: String,
    pub snapshots: bool,
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

const SECTIONS: [(&str, &[&str]); 5] = [
    (
        "grid",
        &["mode", "nq", "np", "nx", "n_levels", "lq", "lp", "lx"],
    ),
    ("model", &["hbar", "m", "M", "lambda", "potential"]),
    (
        "initial",
        &[
            "kind",
            "q0",
            "p0",
            "kappa",
            "sigma_p",
            "winding_q",
            "theta",
            "phi",
            "x0",
            "kappa_x",
            "winding_x",
            "modulation",
            "mixing",
        ],
    ),
    (
        "run",
        &[
            "kind",
            "variant",
            "dt",
            "steps",
            "snapshot_every",
            "diagnostics",
            "node_threshold",
            "boundary_mass_threshold",
        ],
    ),
    ("output", &["directory", "snapshots", "csv"]),
];

const REQUIRED_SECTIONS: [&str; 3] = ["grid", "model", "run"];

/// Line numbers of section headers and keys, recovered from the raw text.
struct Lines {
    sections: HashMap<String, usize>,
    keys: HashMap<(String, String), usize>,
}

impl Lines {
    fn scan(text: &str) -> Self {
        let mut sections = HashMap::new();
        let mut keys = HashMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('[') {
                if let Some(name) = rest.split(']').next() {
                    current = name.trim().to_string();
                    sections.entry(current.clone()).or_insert(i + 1);
                }
            } else if let Some((key, _)) = line.split_once('=') {
                let key = key.trim().trim_matches('"').to_string();
                if !key.is_empty() && !key.starts_with('#') {
                    keys.entry((current.clone(), key)).or_insert(i + 1);
                }
            }
        }
        Lines { sections, keys }
    }

    fn section(&self, s: &str) -> usize {
        self.sections.get(s).copied().unwrap_or(0)
    }

    fn key(&self, s: &str, k: &str) -> usize {
        self.keys
            .get(&(s.to_string(), k.to_string()))
            .copied()
            .unwrap_or_else(|| self.section(s))
    }
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    lines: &'a Lines,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn line(&self, key: &str) -> usize {
        self.lines.key(self.name, key)
    }

    fn mismatch(&self, key: &str, want: &str, v: &Value) -> ConfigError {
        err(
            self.line(key),
            format!(
                "{}.{key}: expected {want}, found {}",
                self.name,
                v.type_str()
            ),
        )
    }

    fn missing(&self, key: &str) -> ConfigError {
        err(
            self.lines.section(self.name),
            format!("{}.{key}: required key is missing", self.name),
        )
    }

    fn float_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(self.mismatch(key, "a number", v)),
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float_opt(key)?.unwrap_or(default))
    }

    fn float_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.float_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn int_opt(&self, key: &str) -> Result<Option<i64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(v) => Err(self.mismatch(key, "an integer", v)),
        }
    }

    fn int(&self, key: &str, default: i64) -> Result<i64, ConfigError> {
        Ok(self.int_opt(key)?.unwrap_or(default))
    }

    fn count(&self, key: &str, default: Option<usize>) -> Result<usize, ConfigError> {
        let v = match (self.int_opt(key)?, default) {
            (Some(v), _) => v,
            (None, Some(d)) => return Ok(d),
            (None, None) => return Err(self.missing(key)),
        };
        usize::try_from(v).map_err(|_| {
            err(
                self.line(key),
                format!("{}.{key}: must be non-negative, got {v}", self.name),
            )
        })
    }

    fn string(&self, key: &str, default: Option<&str>) -> Result<String, ConfigError> {
        match (self.get(key), default) {
            (Some(Value::String(s)), _) => Ok(s.clone()),
            (Some(v), _) => Err(self.mismatch(key, "a string", v)),
            (None, Some(d)) => Ok(d.to_string()),
            (None, None) => Err(self.missing(key)),
        }
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(self.mismatch(key, "a boolean", v)),
        }
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(err(
                self.line(key),
                format!("{}.{key}: must be positive, got {v}", self.name),
            ))
        }
    }
}

fn parse_grid(s: &Section) -> Result<GridConfig, ConfigError> {
    let mode = match s.string("mode", None)?.as_str() {
        "continuum" => Mode::Continuum,
        "finite" => Mode::FiniteDim,
        other => {
            return Err(err(
                s.line("mode"),
                format!("grid.mode: unknown mode {other:?} (expected \"continuum\" or \"finite\")"),
            ))
        }
    };
    let nq = s.count("nq", None)?;
    let np = s.count("np", None)?;
    for (key, n) in [("nq", nq), ("np", np)] {
        if n < 4 || n % 2 != 0 {
            return Err(err(
                s.line(key),
                format!("grid.{key}: must be an even integer >= 4, got {n}"),
            ));
        }
    }
    let (nx, lx) = match mode {
        Mode::Continuum => {
            if s.get("n_levels").is_some() {
                return Err(err(
                    s.line("n_levels"),
                    "grid.n_levels: only valid for mode = \"finite\"",
                ));
            }
            let nx = s.count("nx", None)?;
            if nx < 4 || nx % 2 != 0 {
                return Err(err(
                    s.line("nx"),
                    format!("grid.nx: must be an even integer >= 4, got {nx}"),
                ));
            }
            (
                nx,
                s.positive("lx", s.float("lx", 2.0 * std::f64::consts::PI)?)?,
            )
        }
        Mode::FiniteDim => {
            for key in ["nx", "lx"] {
                if s.get(key).is_some() {
                    return Err(err(
                        s.line(key),
                        format!("grid.{key}: only valid for mode = \"continuum\""),
                    ));
                }
            }
            let n = s.count("n_levels", None)?;
            if n == 0 {
                return Err(err(s.line("n_levels"), "grid.n_levels: must be at least 1"));
            }
            (n, 1.0)
        }
    };
    Ok(GridConfig {
        mode,
        nq,
        np,
        nx,
        lq: s.positive("lq", s.float("lq", 2.0 * std::f64::consts::PI)?)?,
        lp: s.positive("lp", s.float_req("lp")?)?,
        lx,
    })
}

fn parse_model(s: &Section, mode: Mode) -> Result<ModelConfig, ConfigError> {
    let potential = s.string("potential", None)?;
    let known = matches!(
        (potential.as_str(), mode),
        ("uncoupled" | "pendulum_bilinear", _) | ("analytic_alpha", Mode::FiniteDim)
    );
    if !known {
        return Err(err(
            s.line("potential"),
            format!(
                "model.potential: unknown potential {potential:?} for this grid mode (known: {})",
                model::BUILTIN_POTENTIALS.join(", ")
            ),
        ));
    }
    let m = s.float("m", 1.0)?;
    if !(m > 0.0) {
        return Err(err(
            s.line("m"),
            format!("model.m: must be positive or inf, got {m}"),
        ));
    }
    let hbar = s.positive("hbar", s.float("hbar", 1.0)?)?;
    let big_m = s.positive("M", s.float("M", 1.0)?)?;
    for (key, v) in [("hbar", hbar), ("M", big_m)] {
        if !v.is_finite() {
            return Err(err(s.line(key), format!("model.{key}: must be finite")));
        }
    }
    let lambda = s.float("lambda", 0.1)?;
    if !lambda.is_finite() {
        return Err(err(s.line("lambda"), "model.lambda: must be finite"));
    }
    Ok(ModelConfig {
        hbar,
        m,
        big_m,
        lambda,
        potential,
    })
}

fn parse_initial(s: &Section, mode: Mode) -> Result<InitialConfig, ConfigError> {
    let kind = match s.string("kind", Some("gaussian_product"))?.as_str() {
        "gaussian_product" => InitialKind::GaussianProduct,
        "plane_wave_product" => InitialKind::PlaneWaveProduct,
        other => {
            return Err(err(
                s.line("kind"),
                format!(
                    "initial.kind: unknown initial state {other:?} (known: gaussian_product, plane_wave_product)"
                ),
            ))
        }
    };
    if kind == InitialKind::PlaneWaveProduct && mode == Mode::FiniteDim {
        return Err(err(
            s.line("kind"),
            "initial.kind: plane_wave_product needs mode = \"continuum\"",
        ));
    }
    let c = InitialConfig {
        kind,
        q0: s.float("q0", 0.0)?,
        p0: s.float("p0", 0.0)?,
        kappa: s.float("kappa", 2.0)?,
        sigma_p: s.positive("sigma_p", s.float("sigma_p", 0.5)?)?,
        winding_q: s.int("winding_q", 0)?,
        theta: s.float("theta", 1.0)?,
        phi: s.float("phi", 0.3)?,
        x0: s.float("x0", 0.0)?,
        kappa_x: s.float("kappa_x", 1.0)?,
        winding_x: s.int("winding_x", 1)?,
        modulation: s.float("modulation", 0.3)?,
        mixing: s.float("mixing", 0.3)?,
    };
    if c.kappa < 0.0 {
        return Err(err(s.line("kappa"), "initial.kappa: must be non-negative"));
    }
    if !(0.0..=1.0).contains(&c.mixing) {
        return Err(err(s.line("mixing"), "initial.mixing: must lie in [0, 1]"));
    }
    Ok(c)
}

fn parse_run(s: &Section, mode: Mode) -> Result<RunConfig, ConfigError> {
    let kind = match s.string("kind", Some("wave"))?.as_str() {
        "wave" => RunKind::Wave,
        "closure" => RunKind::Closure,
        other => {
            return Err(err(
                s.line("kind"),
                format!("run.kind: unknown run kind {other:?} (expected wave or closure)"),
            ))
        }
    };
    if kind == RunKind::Closure && mode != Mode::FiniteDim {
        return Err(err(
            s.line("kind"),
            "run.kind: closure runs need mode = \"finite\"",
        ));
    }
    let general = match s.string("variant", Some("reduced"))?.as_str() {
        "reduced" => false,
        "general" => true,
        other => {
            return Err(err(
                s.line("variant"),
                format!("run.variant: unknown variant {other:?} (expected reduced or general)"),
            ))
        }
    };
    let mut diagnostics = Vec::new();
    for name in s.string("diagnostics", Some(""))?.split(',').map(str::trim) {
        let d = match name {
            "" => continue,
            "pairing" => Diagnostic::Pairing,
            "loop" => Diagnostic::Loop,
            other => {
                return Err(err(
                    s.line("diagnostics"),
                    format!("run.diagnostics: unknown diagnostic {other:?} (known: pairing, loop)"),
                ))
            }
        };
        let ok = match (d, mode, kind) {
            (_, _, RunKind::Closure) => false,
            (Diagnostic::Pairing, Mode::FiniteDim, _) => true,
            (Diagnostic::Loop, Mode::Continuum, _) => true,
            _ => false,
        };
        if !ok {
            return Err(err(
                s.line("diagnostics"),
                format!("run.diagnostics: {name} is not available for this grid mode and run kind"),
            ));
        }
        if !diagnostics.contains(&d) {
            diagnostics.push(d);
        }
    }
    let snapshot_every = s.count("snapshot_every", Some(0))?;
    if diagnostics.contains(&Diagnostic::Loop) && snapshot_every == 0 {
        return Err(err(
            s.line("snapshot_every"),
            "run.snapshot_every: the loop diagnostic needs snapshots",
        ));
    }
    Ok(RunConfig {
        kind,
        general,
        dt: s.positive("dt", s.float_req("dt")?)?,
        steps: s.count("steps", None)?,
        snapshot_every,
        diagnostics,
        node_threshold: s.positive("node_threshold", s.float("node_threshold", 1e-10)?)?,
        boundary_mass_threshold: s.positive(
            "boundary_mass_threshold",
            s.float("boundary_mass_threshold", 1e-6)?,
        )?,
    })
}

fn parse_output(s: &Section) -> Result<OutputConfig, ConfigError> {
    Ok(OutputConfig {
        directory: s.string("directory", Some("out"))?,
        snapshots: s.boolean("snapshots", true)?,
        csv: s.boolean("csv", true)?,
    })
}

/// Parses and validates a scenario; the first problem is reported with its line.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        err(line, e.message().to_string())
    })?;
    let lines = Lines::scan(text);
    for (name, value) in &table {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
            return Err(err(
                lines.key("", name).max(lines.section(name)),
                format!("unknown section or key {name:?}"),
            ));
        };
        let Value::Table(t) = value else {
            return Err(err(
                lines.key("", name),
                format!("{name} must be a [section]"),
            ));
        };
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(err(
                    lines.key(name, key),
                    format!("{name}.{key}: unknown key"),
                ));
            }
        }
    }
    for name in REQUIRED_SECTIONS {
        if !table.contains_key(name) {
            return Err(err(0, format!("missing required section [{name}]")));
        }
    }
    let section = |name: &'static str| Section {
        name,
        table: table.get(name).and_then(Value::as_table),
        lines: &lines,
    };
    let grid = parse_grid(&section("grid"))?;
    Ok(ScenarioConfig {
        model: parse_model(&section("model"), grid.mode)?,
        initial: parse_initial(&section("initial"), grid.mode)?,
        run: parse_run(&section("run"), grid.mode)?,
        output: parse_output(&section("output"))?,
        grid,
    })
}

fn float_literal(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        // `{:?}` prints the shortest representation that round-trips.
        format!("{v:?}")
    }
}

fn quoted(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

impl ScenarioConfig {
    /// Serializes every field explicitly; `parse_config(&c.to_config_string())`
    /// returns `c`.
    pub fn to_config_string(&self) -> String {
        let mut o = String::new();
        let g = &self.grid;
        let _ = writeln!(o, "[grid]");
        match g.mode {
            Mode::Continuum => {
                let _ = writeln!(o, "mode = \"continuum\"");
                let _ = writeln!(o, "nq = {}\nnp = {}\nnx = {}", g.nq, g.np, g.nx);
                let _ = writeln!(
                    o,
                    "lq = {}\nlp = {}\nlx = {}",
                    float_literal(g.lq),
                    float_literal(g.lp),
                    float_literal(g.lx)
                );
            }
            Mode::FiniteDim => {
                let _ = writeln!(o, "mode = \"finite\"");
                let _ = writeln!(o, "nq = {}\nnp = {}\nn_levels = {}", g.nq, g.np, g.nx);
                let _ = writeln!(
                    o,
                    "lq = {}\nlp = {}",
                    float_literal(g.lq),
                    float_literal(g.lp)
                );
            }
        }
        let m = &self.model;
        let _ = writeln!(o, "\n[model]");
        let _ = writeln!(
            o,
            "hbar = {}\nm = {}\nM = {}\nlambda = {}\npotential = {}",
            float_literal(m.hbar),
            float_literal(m.m),
            float_literal(m.big_m),
            float_literal(m.lambda),
            quoted(&m.potential)
        );
        let i = &self.initial;
        let kind = match i.kind {
            InitialKind::GaussianProduct => "gaussian_product",
            InitialKind::PlaneWaveProduct => "plane_wave_product",
        };
        let _ = writeln!(o, "\n[initial]\nkind = {}", quoted(kind));
        for (k, v) in [
            ("q0", i.q0),
            ("p0", i.p0),
            ("kappa", i.kappa),
            ("sigma_p", i.sigma_p),
            ("theta", i.theta),
            ("phi", i.phi),
            ("x0", i.x0),
            ("kappa_x", i.kappa_x),
            ("modulation", i.modulation),
            ("mixing", i.mixing),
        ] {
            let _ = writeln!(o, "{k} = {}", float_literal(v));
        }
        let _ = writeln!(
            o,
            "winding_q = {}\nwinding_x = {}",
            i.winding_q, i.winding_x
        );
        let r = &self.run;
        let _ = writeln!(o, "\n[run]");
        let _ = writeln!(
            o,
            "kind = {}\nvariant = {}",
            quoted(match r.kind {
                RunKind::Wave => "wave",
                RunKind::Closure => "closure",
            }),
            quoted(if r.general { "general" } else { "reduced" })
        );
        let diags: Vec<&str> = r.diagnostics.iter().map(Diagnostic::name).collect();
        let _ = writeln!(
            o,
            "dt = {}\nsteps = {}\nsnapshot_every = {}\ndiagnostics = {}\nnode_threshold = {}\nboundary_mass_threshold = {}",
            float_literal(r.dt),
            r.steps,
            r.snapshot_every,
            quoted(&diags.join(",")),
            float_literal(r.node_threshold),
            float_literal(r.boundary_mass_threshold)
        );
        let out = &self.output;
        let _ = writeln!(
            o,
            "\n[output]\ndirectory = {}\nsnapshots = {}\ncsv = {}",
            quoted(&out.directory),
            out.snapshots,
            out.csv
        );
        o
    }

    pub fn phase_grid(&self) -> crate::Result<PhaseGrid> {
        let g = &self.grid;
        match g.mode {
            Mode::Continuum => PhaseGrid::continuum(g.nq, g.np, g.nx, g.lq, g.lp, g.lx),
            Mode::FiniteDim => PhaseGrid::finite_dim(g.nq, g.np, g.nx, g.lq, g.lp),
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            hbar: self.model.hbar,
            m: self.model.m,
            big_m: self.model.big_m,
            lambda: self.model.lambda,
        }
    }

    pub fn hamiltonian(&self, grid: &PhaseGrid) -> crate::Result<HybridHamiltonian> {
        model::builtin(&self.model.potential, grid, self.params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nmode = \"finite\"\nnq = 8\nnp = 8\nn_levels = 2\nlp = 8.0\n\n[model]\npotential = \"analytic_alpha\"\n\n[run]\ndt = 1e-3\nsteps = 10\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.nx, 2);
        assert_eq!(c.model.hbar, 1.0);
        assert_eq!(c.run.kind, RunKind::Wave);
        assert_eq!(c.output.directory, "out");
    }

    #[test]
    fn negative_size_names_key_and_line() {
        let text = MINIMAL.replace("nq = 8", "nq = -4");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("grid.nq"), "{}", e.message);
    }

    #[test]
    fn unknown_key_is_reported() {
        let text = MINIMAL.replace("steps = 10", "steps = 10\nstepz = 3");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.line, 14);
        assert!(e.message.contains("stepz"));
    }

    #[test]
    fn roundtrip() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_config_string()).unwrap(), c);
    }
}
