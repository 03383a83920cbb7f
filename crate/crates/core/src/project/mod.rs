//! The textual project format: oracle configuration, prototype graphs, the
//! family assignment, network data and queries in one file.
//!
//! [`parse`] turns text into a resolved [`Project`]; `Display` writes the
//! canonical text back, so `parse(&p.to_string()) == Ok(p)`. The grammar is
//! documented in `docs/project-format.md`.

mod parse;
pub mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{Ident, Rank, StandardGraph, Template};
use crate::index_set::IndexSet;
use crate::network::{NetworkError, NsNetwork};
use crate::oracle::{FilterOracle, Membership, OracleError};
use crate::seq::{SeqDescriptor, SeqValue, Traits};
use crate::ultrapower::{ExtremitySeq, GraphFamily, NsExtremity, UltraError};

pub use parse::{parse, parse_index_set, parse_pin_spec, parse_seq};

/// A parse failure with its 1-based location.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ProjectError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unresolved {kind} `{name}`")]
    UnresolvedReference {
        line: usize,
        col: usize,
        kind: &'static str,
        name: String,
    },
    #[error("{line}:{col}: duplicate {kind} `{name}` (first declared on line {first_line})")]
    DuplicateId {
        line: usize,
        col: usize,
        kind: &'static str,
        name: String,
        first_line: usize,
    },
}

impl ProjectError {
    pub fn line(&self) -> usize {
        match self {
            ProjectError::Syntax { line, .. }
            | ProjectError::UnresolvedReference { line, .. }
            | ProjectError::DuplicateId { line, .. } => *line,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleConfig {
    /// `(modulus, residue)` overrides of the residue tower.
    pub tower: Vec<(u64, u64)>,
    pub pins: Vec<(IndexSet, Membership)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyDecl {
    /// Declared rank, checked against the prototypes.
    pub rank: Option<Rank>,
    /// Graph name of each index.
    pub assign: SeqDescriptor<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkDecl {
    pub resistances: BTreeMap<Ident, SeqDescriptor<f64>>,
    pub sources: BTreeMap<Ident, SeqDescriptor<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremityDecl {
    pub name: String,
    pub level: Rank,
    pub rep: ExtremitySeq,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Classify(String),
    Shorted(String, String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Project {
    pub oracle: OracleConfig,
    pub graphs: Vec<StandardGraph>,
    pub family: Option<FamilyDecl>,
    pub network: Option<NetworkDecl>,
    pub extremities: Vec<ExtremityDecl>,
    pub queries: Vec<Query>,
}

/// Failures while turning a parsed project into library objects.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum SetupError {
    #[error("oracle configuration: {0}")]
    Oracle(#[from] OracleError),
    #[error("family: {0}")]
    Family(#[from] UltraError),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Missing(String),
}

impl Project {
    /// The configured oracle with `extra` pins applied after the file's.
    pub fn oracle(&self, extra: &[(IndexSet, Membership)]) -> Result<FilterOracle, OracleError> {
        let mut oracle = FilterOracle::with_tower(&self.oracle.tower)?;
        for (set, verdict) in self.oracle.pins.iter().chain(extra) {
            oracle.pin(set.clone(), *verdict)?;
        }
        Ok(oracle)
    }

    pub fn graph(&self, name: &str) -> Option<&StandardGraph> {
        self.graphs.iter().find(|g| g.name() == name)
    }

    /// The family block, or the constant family of the only graph.
    pub fn family(&self) -> Result<GraphFamily, SetupError> {
        let Some(decl) = &self.family else {
            return match self.graphs.as_slice() {
                [g] => Ok(GraphFamily::constant(g.clone())),
                _ => Err(SetupError::Missing(
                    "no family block and more than one graph".into(),
                )),
            };
        };
        // Prototypes are the graphs the assignment names, in file order.
        let used: Vec<&String> = match decl.assign.as_periodic() {
            Some(p) => p.prefix().iter().chain(p.cycle().iter()).collect(),
            None => return Err(SetupError::Missing("assignment must be eventually periodic".into())),
        };
        let prototypes: Vec<&StandardGraph> = self
            .graphs
            .iter()
            .filter(|g| used.iter().any(|u| u.as_str() == g.name()))
            .collect();
        let names: Vec<String> = prototypes.iter().map(|g| g.name().to_string()).collect();
        let assignment = decl.assign.map("prototype", move |name: &String| {
            names.iter().position(|n| n == name).expect("resolved at parse time") as u64
        });
        let family = GraphFamily::new(prototypes.into_iter().cloned().collect(), assignment)?;
        if let Some(rank) = decl.rank {
            if rank != family.rank() {
                return Err(UltraError::Family(format!(
                    "declared rank {rank} but prototypes have rank {}",
                    family.rank()
                ))
                .into());
            }
        }
        Ok(family)
    }

    pub fn ns_network(&self, family: GraphFamily) -> Result<NsNetwork, SetupError> {
        let decl = self
            .network
            .as_ref()
            .ok_or_else(|| SetupError::Missing("project has no network block".into()))?;
        Ok(NsNetwork::new(family, decl.resistances.clone(), decl.sources.clone())?)
    }

    pub fn extremity(&self, name: &str) -> Option<NsExtremity> {
        self.extremities
            .iter()
            .find(|e| e.name == name)
            .map(|e| NsExtremity::named(&e.name, e.rep.clone(), e.level))
    }

    pub fn query_extremities(&self) -> Vec<NsExtremity> {
        self.extremities
            .iter()
            .map(|e| NsExtremity::named(&e.name, e.rep.clone(), e.level))
            .collect()
    }

    /// Shared handle on the configured oracle.
    pub fn shared_oracle(&self, extra: &[(IndexSet, Membership)]) -> Result<Arc<FilterOracle>, OracleError> {
        self.oracle(extra).map(Arc::new)
    }
}

/// Canonical text of a descriptor: `pre=[..] cycle=[..]` or
/// `gen=<key> nmax=<N> [traits=..] [limit=..]`.
pub fn seq_text<V: SeqValue>(s: &SeqDescriptor<V>) -> String {
    match s {
        SeqDescriptor::Periodic(_) => s.to_string(),
        SeqDescriptor::Generated(g) => {
            let mut out = format!("gen={} nmax={}", g.key(), g.horizon());
            out.push_str(&traits_text(g.traits()));
            out
        }
    }
}

fn traits_text(t: &Traits) -> String {
    let mut out = String::new();
    let names = t.to_string();
    if !names.is_empty() {
        out.push_str(&format!(" traits={names}"));
    }
    if let Some(l) = t.limit {
        out.push_str(&format!(" limit={l}"));
    }
    out
}

fn extremity_text(rep: &ExtremitySeq) -> String {
    match rep {
        ExtremitySeq::Listed(s) => seq_text(s),
        ExtremitySeq::Indexed { stem, index } => format!("indexed {stem} {}", seq_text(index)),
    }
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for Project {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.oracle != OracleConfig::default() {
            writeln!(f, "oracle {{")?;
            for (m, r) in &self.oracle.tower {
                writeln!(f, "  tower {m} {r}")?;
            }
            for (set, v) in &self.oracle.pins {
                writeln!(f, "  pin {} {v}", set.to_descriptor())?;
            }
            writeln!(f, "}}")?;
        }
        for g in &self.graphs {
            match (g.as_finite(), g.as_template()) {
                (Some(fg), _) => {
                    writeln!(f, "graph {} rank {} {{", g.name(), g.rank().keyword())?;
                    if !fg.zero_nodes.is_empty() {
                        writeln!(f, "  zero {}", join(&fg.zero_nodes))?;
                    }
                    for (b, (t, h)) in &fg.branches {
                        writeln!(f, "  branch {b} {t} {h}")?;
                    }
                    for (r, tips) in &fg.tips {
                        if !tips.is_empty() {
                            writeln!(f, "  tips {r} {}", join(tips))?;
                        }
                    }
                    for (r, nodes) in &fg.nodes {
                        for n in nodes {
                            write!(f, "  node {r} {} tips {}", n.id, join(&n.tips))?;
                            if let Some(x) = &n.exceptional {
                                write!(f, " exceptional {x}")?;
                            }
                            writeln!(f)?;
                        }
                    }
                    writeln!(f, "}}")?;
                }
                (None, Some(Template::Tower { window, .. })) => {
                    writeln!(
                        f,
                        "graph {} template tower rank {} window {window}",
                        g.name(),
                        g.rank().keyword()
                    )?;
                }
                (None, None) => unreachable!("graphs are finite or templates"),
            }
        }
        if let Some(fam) = &self.family {
            writeln!(f, "family {{")?;
            if let Some(r) = fam.rank {
                writeln!(f, "  rank {}", r.keyword())?;
            }
            writeln!(f, "  assign {}", seq_text(&fam.assign))?;
            writeln!(f, "}}")?;
        }
        if let Some(net) = &self.network {
            writeln!(f, "network {{")?;
            for (b, s) in &net.resistances {
                writeln!(f, "  resistance {b} {}", seq_text(s))?;
            }
            for (b, s) in &net.sources {
                writeln!(f, "  source {b} {}", seq_text(s))?;
            }
            writeln!(f, "}}")?;
        }
        if !self.extremities.is_empty() || !self.queries.is_empty() {
            writeln!(f, "queries {{")?;
            for e in &self.extremities {
                writeln!(
                    f,
                    "  extremity {} level {} {}",
                    e.name,
                    e.level.keyword(),
                    extremity_text(&e.rep)
                )?;
            }
            for q in &self.queries {
                match q {
                    Query::Classify(a) => writeln!(f, "  classify {a}")?,
                    Query::Shorted(a, b) => writeln!(f, "  shorted {a} {b}")?,
                }
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "graph g rank 1 {\n  zero a b\n  branch r a b\n  tips 0 t u\n  node 1 m tips t u\n}\n";

    #[test]
    fn minimal_project_parses() {
        let p = parse(MINIMAL).unwrap();
        assert_eq!(p.graphs.len(), 1);
        assert!(p.family().unwrap().is_constant());
        assert!(p.graphs[0].validate(4).passed());
    }

    #[test]
    fn undeclared_tip_reports_its_line() {
        let text = MINIMAL.replace("tips t u\n}", "tips t v\n}");
        let err = parse(&text).unwrap_err();
        assert!(matches!(&err, ProjectError::UnresolvedReference { kind: "tip", name, .. } if name == "v"));
        assert_eq!(err.line(), 5);
    }

    #[test]
    fn duplicates_and_unknown_keys_are_rejected() {
        let dup = MINIMAL.replace("tips 0 t u", "tips 0 t t");
        assert!(matches!(parse(&dup), Err(ProjectError::DuplicateId { line: 4, first_line: 4, .. })));
        let twice = format!("{MINIMAL}{}", MINIMAL);
        assert!(matches!(parse(&twice), Err(ProjectError::DuplicateId { kind: "graph", line: 7, .. })));
        let unknown = MINIMAL.replace("zero a b", "zero a b\n  colour red");
        let err = parse(&unknown).unwrap_err();
        assert!(matches!(err, ProjectError::Syntax { line: 3, .. }), "{err}");
        assert!(matches!(parse("widgets {\n}\n"), Err(ProjectError::Syntax { line: 1, col: 1, .. })));
    }

    #[test]
    fn dangling_cross_references() {
        let text = format!("{MINIMAL}network {{\n  resistance q cycle=[1]\n}}\n");
        assert!(matches!(
            parse(&text),
            Err(ProjectError::UnresolvedReference { kind: "branch", line: 8, .. })
        ));
        let text = format!("{MINIMAL}family {{\n  assign cycle=[g, h]\n}}\n");
        assert!(matches!(
            parse(&text),
            Err(ProjectError::UnresolvedReference { kind: "graph", line: 8, .. })
        ));
        let text = format!("{MINIMAL}queries {{\n  classify nope\n}}\n");
        assert!(matches!(
            parse(&text),
            Err(ProjectError::UnresolvedReference { kind: "extremity", .. })
        ));
    }

    #[test]
    fn round_trip_is_structural() {
        let text = "oracle {\n  tower 2 1\n  pin mod(3,2) in\n}\n\
            graph tower template tower rank omega window 3\n\
            queries {\n  extremity d level omega indexed x gen=affine(2,1) nmax=32 traits=injective,unbounded\n  extremity b level 2 pre=[x[0]] cycle=[x[1], x[2]]\n  classify d\n  shorted d b\n}\n";
        let p = parse(text).unwrap();
        let again = parse(&p.to_string()).unwrap();
        assert_eq!(p, again);
        assert_eq!(p.to_string(), again.to_string());
    }

    #[test]
    fn standalone_entry_points() {
        assert_eq!(parse_index_set("evens").unwrap(), IndexSet::evens());
        assert_eq!(parse_pin_spec("odds=in").unwrap(), (IndexSet::odds(), Membership::In));
        assert!(parse_pin_spec("odds=maybe").is_err());
        let s = parse_seq("gen=reciprocal(1,2) nmax=64 limit=0").unwrap();
        assert_eq!(s.value_at(2).unwrap(), 0.25);
        assert!(parse_seq("gen=identity nmax=99999999").is_err());
    }
}
