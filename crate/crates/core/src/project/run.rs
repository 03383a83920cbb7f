//! The `validate`, `build`, `classify`, `solve` and `report` pipelines.
//!
//! Output is deterministic for fixed inputs and options: every map is ordered
//! and parallel stages collect in index order.

use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::graph::{Rank, Template};
use crate::hyperreal::HyperError;
use crate::index_set::IndexSet;
use crate::network::{verify_laws, NetworkError};
use crate::oracle::{FilterOracle, Membership};
use crate::ultrapower::{BuildOptions, GraphFamily, NsLayer, UltraError, Ultrapower};

use super::{parse, seq_text, Project, Query, SetupError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const PARSE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const UNDECIDABLE: i32 = 4;
    pub const SOLVER: i32 = 5;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Build,
    Classify,
    Solve,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Build => "build",
            Command::Classify => "classify",
            Command::Solve => "solve",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Horizon of diagonal sequences, solves and law checks.
    pub horizon: u64,
    pub tol: f64,
    pub mu_max: u32,
    /// Pins applied after the project's own.
    pub pins: Vec<(IndexSet, Membership)>,
    pub format: Format,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            horizon: 64,
            tol: 1e-9,
            mu_max: crate::graph::DEFAULT_MU_MAX,
            pins: Vec::new(),
            format: Format::Text,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Text and JSON renderings of one pipeline stage, with its exit code.
struct Section {
    code: i32,
    text: String,
    json: Value,
    errors: Vec<String>,
}

impl Section {
    fn new(json: Value) -> Self {
        Section {
            code: exit::OK,
            text: String::new(),
            json,
            errors: Vec::new(),
        }
    }

    fn fail(&mut self, code: i32, message: String) {
        if self.code == exit::OK {
            self.code = code;
        }
        self.errors.push(message);
    }
}

fn ultra_code(e: &UltraError) -> i32 {
    match e {
        UltraError::Undecidable { .. } => exit::UNDECIDABLE,
        _ => exit::VALIDATION,
    }
}

fn network_code(e: &NetworkError) -> i32 {
    match e {
        NetworkError::Ultra(u) => ultra_code(u),
        NetworkError::AtIndex { source, .. } => network_code(source),
        NetworkError::Hyper(HyperError::Oracle(_)) => exit::UNDECIDABLE,
        NetworkError::BranchMismatch(_)
        | NetworkError::MissingResistance(_)
        | NetworkError::UnknownBranch(_)
        | NetworkError::UnknownNode { .. }
        | NetworkError::SelfLoop(_) => exit::VALIDATION,
        _ => exit::SOLVER,
    }
}

fn setup_code(e: &SetupError) -> i32 {
    match e {
        SetupError::Network(n) => network_code(n),
        _ => exit::VALIDATION,
    }
}

/// Parses `text` and runs `command` on it.
pub fn run_text(command: Command, text: &str, opts: &RunOptions) -> Outcome {
    match parse(text) {
        Ok(project) => run(command, &project, opts),
        Err(e) => Outcome {
            code: exit::PARSE,
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

pub fn run(command: Command, project: &Project, opts: &RunOptions) -> Outcome {
    let mut sections: Vec<(&str, Section)> = Vec::new();
    let validation = validate(project, opts);
    let valid = validation.code == exit::OK;
    let show_validation = matches!(command, Command::Validate | Command::Report) || !valid;
    if show_validation {
        sections.push(("validate", validation));
    }
    if valid && command != Command::Validate {
        let (oracle, family) = match context(project, opts) {
            Ok(c) => c,
            Err(s) => {
                sections.push(("setup", s));
                return finish(command, sections, opts);
            }
        };
        let up = Ultrapower::new(family.clone(), oracle.clone());
        if matches!(command, Command::Build | Command::Report) {
            sections.push(("build", build(project, &up, opts)));
        }
        if matches!(command, Command::Classify) || (command == Command::Report && !project.queries.is_empty()) {
            sections.push(("classify", classify(project, &up)));
        }
        if matches!(command, Command::Solve) || (command == Command::Report && project.network.is_some()) {
            sections.push(("solve", solve(project, family, oracle, opts)));
        }
    }
    finish(command, sections, opts)
}

fn finish(command: Command, sections: Vec<(&str, Section)>, opts: &RunOptions) -> Outcome {
    let code = sections
        .iter()
        .map(|(_, s)| s.code)
        .find(|&c| c != exit::OK)
        .unwrap_or(exit::OK);
    let mut stderr = String::new();
    for (_, s) in &sections {
        for e in &s.errors {
            let _ = writeln!(stderr, "error: {e}");
        }
    }
    let stdout = match opts.format {
        Format::Text => sections.iter().map(|(_, s)| s.text.as_str()).collect::<Vec<_>>().join("\n"),
        Format::Json => {
            let mut obj = serde_json::Map::new();
            obj.insert("command".into(), json!(command.name()));
            obj.insert("exit_code".into(), json!(code));
            for (name, s) in &sections {
                obj.insert((*name).into(), s.json.clone());
            }
            let mut out = serde_json::to_string_pretty(&Value::Object(obj)).expect("serialisable");
            out.push('\n');
            out
        }
    };
    Outcome { code, stdout, stderr }
}

fn context(project: &Project, opts: &RunOptions) -> Result<(Arc<FilterOracle>, GraphFamily), Section> {
    let fail = |e: SetupError| {
        let mut s = Section::new(json!({ "error": e.to_string() }));
        let _ = writeln!(s.text, "setup failed: {e}");
        s.fail(setup_code(&e), e.to_string());
        s
    };
    let oracle = project.shared_oracle(&opts.pins).map_err(|e| fail(e.into()))?;
    let family = project.family().map_err(fail)?;
    Ok((oracle, family))
}

fn validate(project: &Project, opts: &RunOptions) -> Section {
    let mut s = Section::new(Value::Null);
    let mut graphs = Vec::new();
    for g in &project.graphs {
        let report = g.validate(opts.mu_max);
        let _ = write!(s.text, "{report}");
        if !report.passed() {
            s.fail(
                exit::VALIDATION,
                format!("graph {} violates {} axiom(s)", g.name(), report.violations.len()),
            );
        }
        graphs.push(json!({
            "graph": g.name(),
            "rank": g.rank(),
            "passed": report.passed(),
            "violations": report.violations,
            "notes": report.notes,
        }));
    }
    let mut checks = Vec::new();
    let mut check = |s: &mut Section, what: &str, r: Result<(), SetupError>| {
        let (verdict, detail) = match &r {
            Ok(()) => ("pass".to_string(), String::new()),
            Err(e) => ("FAIL".to_string(), e.to_string()),
        };
        if detail.is_empty() {
            let _ = writeln!(s.text, "{what}: {verdict}");
        } else {
            let _ = writeln!(s.text, "{what}: {verdict}: {detail}");
        }
        if let Err(e) = r {
            s.fail(setup_code(&e), format!("{what}: {e}"));
        }
        checks.push(json!({ "check": what, "passed": detail.is_empty(), "detail": detail }));
    };
    check(&mut s, "oracle", project.oracle(&opts.pins).map(|_| ()).map_err(Into::into));
    let family = project.family();
    check(&mut s, "family", family.as_ref().map(|_| ()).map_err(Clone::clone));
    if project.network.is_some() {
        if let Ok(f) = family {
            check(&mut s, "network", project.ns_network(f).map(|_| ()));
        }
    }
    s.json = json!({ "graphs": graphs, "checks": checks, "passed": s.code == exit::OK });
    s
}

fn layer_window(family: &GraphFamily) -> u32 {
    family
        .prototypes()
        .iter()
        .filter_map(|g| g.as_template().map(|Template::Tower { window, .. }| window as u32))
        .min()
        .unwrap_or(4)
}

fn layer_text(out: &mut String, title: &str, layer: &NsLayer) {
    let _ = writeln!(out, "{title}: {} node(s)", layer.nodes.len());
    for (k, node) in layer.nodes.iter().enumerate() {
        let members: Vec<String> = node
            .members
            .iter()
            .map(|(e, c)| format!("{} ({c})", e.descriptor()))
            .collect();
        let _ = writeln!(out, "  node {k}: {}", members.join(", "));
    }
}

fn layer_json(layer: &NsLayer) -> Value {
    let nodes: Vec<Value> = layer
        .nodes
        .iter()
        .map(|n| {
            let members: Vec<Value> = n
                .members
                .iter()
                .map(|(e, c)| json!({ "extremity": e.descriptor(), "classification": c.to_string() }))
                .collect();
            json!({
                "members": members,
                "tips": n.tips.len(),
                "exceptional": n.exceptional_member().map(|(e, _)| e.descriptor()),
            })
        })
        .collect();
    json!({ "level": layer.level, "nodes": nodes, "audit": layer.audit.decisions() })
}

fn build(project: &Project, up: &Ultrapower, opts: &RunOptions) -> Section {
    let family = up.family();
    let mut s = Section::new(Value::Null);
    let names: Vec<&str> = family.prototypes().iter().map(|g| g.name()).collect();
    let _ = writeln!(
        s.text,
        "family: {} prototype(s) [{}], rank {}, assignment {}",
        names.len(),
        names.join(", "),
        family.rank(),
        seq_text(family.assignment()).replace("prototype", "index")
    );
    let options = BuildOptions {
        horizon: opts.horizon,
        window: layer_window(family),
        extra: project.query_extremities(),
    };
    let graph = match up.build_ns_graph(options) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(s.text, "build failed: {e}");
            s.json = json!({ "error": e.to_string() });
            s.fail(ultra_code(&e), e.to_string());
            return s;
        }
    };
    let zero: Vec<String> = graph.zero_nodes.iter().map(|x| format!("[{x}]")).collect();
    let branches: Vec<String> = graph.branches.iter().map(|x| format!("[{x}]")).collect();
    let _ = writeln!(s.text, "*X^0: {}", zero.join(" "));
    let _ = writeln!(s.text, "*B: {}", branches.join(" "));
    let mut layers_json = Vec::new();
    let layers = match graph.layers() {
        Ok(l) => l,
        Err(e) => {
            let _ = writeln!(s.text, "build failed: {e}");
            s.json = json!({ "error": e.to_string() });
            s.fail(ultra_code(&e), e.to_string());
            return s;
        }
    };
    for layer in &layers {
        if layer.level == Rank::Omega && graph.rank() == Rank::Omega {
            let _ = writeln!(s.text, "*X^ω⃗: not constructed");
        }
        layer_text(&mut s.text, &format!("*X^{}", layer.level), layer);
        layers_json.push(layer_json(layer));
    }
    if graph.rank() == Rank::ArrowOmega {
        let _ = writeln!(s.text, "*X^ω⃗: not constructed");
    }
    if !matches!(graph.rank(), Rank::Natural(_)) {
        let _ = writeln!(s.text, "natural layers listed: 1..={}", graph.listed_levels().len());
    }
    for layer in &layers {
        if layer.audit.decisions().is_empty() {
            continue;
        }
        let _ = writeln!(s.text, "audit *X^{}:", layer.level);
        for d in layer.audit.decisions() {
            let _ = writeln!(s.text, "  {d}");
        }
    }
    s.json = json!({
        "prototypes": names,
        "rank": family.rank(),
        "zero_nodes": graph.zero_nodes,
        "branches": graph.branches,
        "layers": layers_json,
        "arrow_omega_layer": if matches!(graph.rank(), Rank::Natural(_)) { Value::Null } else { json!("not constructed") },
    });
    s
}

fn classify(project: &Project, up: &Ultrapower) -> Section {
    let mut s = Section::new(Value::Null);
    let mut results = Vec::new();
    if project.queries.is_empty() {
        let _ = writeln!(s.text, "no queries");
    }
    for q in &project.queries {
        match q {
            Query::Classify(name) => {
                let e = project.extremity(name).expect("resolved at parse time");
                match up.classify(&e) {
                    Ok((c, audit)) => {
                        let _ = writeln!(s.text, "classify {e} at level {}: {c}", e.level);
                        for d in &audit {
                            let _ = writeln!(s.text, "  audit: {d}");
                        }
                        results.push(json!({
                            "query": "classify",
                            "extremity": e.to_string(),
                            "level": e.level,
                            "verdict": c.to_string(),
                            "audit": audit,
                        }));
                    }
                    Err(err) => {
                        let _ = writeln!(s.text, "classify {e} at level {}: {err}", e.level);
                        s.fail(ultra_code(&err), format!("classify {name}: {err}"));
                        results.push(json!({ "query": "classify", "extremity": e.to_string(), "error": err.to_string() }));
                    }
                }
            }
            Query::Shorted(a, b) => {
                let e = project.extremity(a).expect("resolved at parse time");
                let f = project.extremity(b).expect("resolved at parse time");
                let result = if e.level != f.level {
                    Err(UltraError::Family(format!(
                        "{a} is at level {} but {b} is at level {}",
                        e.level, f.level
                    )))
                } else {
                    up.ns_shorted(&e, &f)
                };
                match result {
                    Ok((v, d)) => {
                        let _ = writeln!(s.text, "shorted {e} {f}: {v}");
                        if let Some(d) = &d {
                            let _ = writeln!(s.text, "  audit: {d}");
                        } else {
                            let _ = writeln!(s.text, "  audit: reflexive");
                        }
                        results.push(json!({
                            "query": "shorted",
                            "pair": [e.to_string(), f.to_string()],
                            "verdict": v,
                            "audit": d.into_iter().collect::<Vec<_>>(),
                        }));
                    }
                    Err(err) => {
                        let _ = writeln!(s.text, "shorted {e} {f}: {err}");
                        s.fail(ultra_code(&err), format!("shorted {a} {b}: {err}"));
                        results.push(json!({ "query": "shorted", "pair": [a, b], "error": err.to_string() }));
                    }
                }
            }
        }
    }
    s.json = json!(results);
    s
}

fn solve(project: &Project, family: GraphFamily, oracle: Arc<FilterOracle>, opts: &RunOptions) -> Section {
    let mut s = Section::new(Value::Null);
    let fail = |s: &mut Section, code: i32, msg: String| {
        let _ = writeln!(s.text, "solve failed: {msg}");
        s.json = json!({ "error": msg });
        s.fail(code, msg);
    };
    let net = match project.ns_network(family) {
        Ok(n) => n,
        Err(e) => {
            fail(&mut s, setup_code(&e), e.to_string());
            return s;
        }
    };
    let op = match net.operating_point(oracle, opts.horizon) {
        Ok(op) => op,
        Err(e) => {
            fail(&mut s, network_code(&e), e.to_string());
            return s;
        }
    };
    match op.horizon() {
        Some(h) => {
            let _ = writeln!(s.text, "operating point: indices 0..={h} solved");
        }
        None => {
            let _ = writeln!(s.text, "operating point: eventually periodic, exact for every n");
        }
    }
    let header = ["branch", "resistance", "source", "current", "voltage"];
    let mut rows: Vec<[String; 5]> = Vec::new();
    let mut branches_json = Vec::new();
    for b in net.branches().keys() {
        let (i, v) = (&op.currents[b], &op.voltages[b]);
        rows.push([
            b.to_string(),
            seq_text(net.resistance(b)),
            seq_text(&net.source(b)),
            i.render(),
            v.render(),
        ]);
        branches_json.push(json!({
            "branch": b,
            "resistance": seq_text(net.resistance(b)),
            "source": seq_text(&net.source(b)),
            "current": { "descriptor": i.rep().to_string(), "magnitude": i.classify_magnitude(), "standard_part": i.standard_part().ok() },
            "voltage": { "descriptor": v.rep().to_string(), "magnitude": v.classify_magnitude(), "standard_part": v.standard_part().ok() },
        }));
    }
    let width = |k: usize| {
        rows.iter()
            .map(|r| r[k].chars().count())
            .chain([header[k].len()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..5).map(width).collect();
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (k, c) in cells.iter().enumerate() {
            if k + 1 == cells.len() {
                out.push_str(c);
            } else {
                out.push_str(c);
                out.push_str(&" ".repeat(widths[k] - c.chars().count() + 2));
            }
        }
        out
    };
    let _ = writeln!(s.text, "{}", line(&header.map(String::from)));
    for r in &rows {
        let _ = writeln!(s.text, "{}", line(r));
    }
    match verify_laws(&op, opts.horizon, opts.tol) {
        Ok(report) => {
            let _ = write!(s.text, "{report}");
            if !report.passed() {
                s.fail(exit::SOLVER, format!("{} law residual(s) above tolerance", report.failures.len()));
            }
            s.json = json!({ "branches": branches_json, "laws": report });
        }
        Err(e) => fail(&mut s, network_code(&e), e.to_string()),
    }
    s
}
