//! Standard transfinite graphs of ranks `0..=μ`, `ω⃗` and `ω`.
//!
//! A graph is `{X^0, B, X^1, …, X^μ}`: 0-nodes joined by branches, and for
//! each rank `ρ ≥ 1` a set of ρ-nodes, each holding one or more (ρ−1)-tips and
//! at most one exceptional node of lower rank. Tips are primitive identifiers.
//! Graphs of rank `ω⃗` and `ω` are given by a template generating every layer.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::seq::SeqValue;

/// Default largest natural rank accepted by validation.
pub const DEFAULT_MU_MAX: u32 = 4;

/// Node, branch or tip identifier: `stem` or `stem[index]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ident {
    stem: Arc<str>,
    index: Option<u64>,
}

impl Ident {
    pub fn new(stem: &str) -> Self {
        Ident {
            stem: stem.into(),
            index: None,
        }
    }

    pub fn indexed(stem: &str, index: u64) -> Self {
        Ident {
            stem: stem.into(),
            index: Some(index),
        }
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }

    pub fn index(&self) -> Option<u64> {
        self.index
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{i}]", self.stem),
            None => f.write_str(&self.stem),
        }
    }
}

impl Serialize for Ident {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid identifier `{0}`")]
pub struct IdentError(pub String);

pub fn is_stem(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl FromStr for Ident {
    type Err = IdentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IdentError(s.to_string());
        match s.split_once('[') {
            None if is_stem(s) => Ok(Ident::new(s)),
            None => Err(bad()),
            Some((stem, rest)) => {
                let digits = rest.strip_suffix(']').ok_or_else(bad)?;
                if !is_stem(stem) || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                Ok(Ident::indexed(stem, digits.parse().map_err(|_| bad())?))
            }
        }
    }
}

impl SeqValue for Ident {}

/// Graph, node or tip rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rank {
    Natural(u32),
    ArrowOmega,
    Omega,
}

impl Rank {
    fn ordinal(self) -> (u8, u32) {
        match self {
            Rank::Natural(k) => (0, k),
            Rank::ArrowOmega => (1, 0),
            Rank::Omega => (2, 0),
        }
    }

    pub fn natural(self) -> Option<u32> {
        match self {
            Rank::Natural(k) => Some(k),
            _ => None,
        }
    }

    /// Rank of the tips a node of this rank holds.
    pub fn tip_rank(self) -> Option<Rank> {
        match self {
            Rank::Natural(0) => None,
            Rank::Natural(k) => Some(Rank::Natural(k - 1)),
            Rank::ArrowOmega => None,
            Rank::Omega => Some(Rank::ArrowOmega),
        }
    }

    /// Text accepted by the project format.
    pub fn keyword(self) -> String {
        match self {
            Rank::Natural(k) => k.to_string(),
            Rank::ArrowOmega => "arrow-omega".into(),
            Rank::Omega => "omega".into(),
        }
    }
}

impl PartialOrd for Rank {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rank {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ordinal().cmp(&other.ordinal())
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Natural(k) => write!(f, "{k}"),
            Rank::ArrowOmega => f.write_str("ω⃗"),
            Rank::Omega => f.write_str("ω"),
        }
    }
}

impl Serialize for Rank {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.keyword())
    }
}

impl FromStr for Rank {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omega" | "ω" => Ok(Rank::Omega),
            "arrow-omega" | "ω⃗" => Ok(Rank::ArrowOmega),
            digits => digits
                .parse()
                .map(Rank::Natural)
                .map_err(|_| format!("invalid rank `{s}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("rank {requested} exceeds the graph rank {rank}")]
    RankTooHigh { requested: Rank, rank: Rank },
    #[error("`{id}` is not an extremity at level {level}")]
    NotAnExtremity { id: Ident, level: Rank },
    #[error("no nodes exist at level {0}")]
    NoNodes(Rank),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StandardNode {
    pub id: Ident,
    pub rank: Rank,
    pub tips: BTreeSet<Ident>,
    pub exceptional: Option<Ident>,
}

/// What an extremity is inside its node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ExtremityKind {
    /// A tip of the given rank.
    Tip(Rank),
    /// The exceptional element, a node of the given rank.
    Exceptional(Rank),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Extremity {
    pub id: Ident,
    pub kind: ExtremityKind,
    /// The node of the level that contains this extremity.
    pub owner: Ident,
}

/// A graph of natural rank with every layer listed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FiniteGraph {
    pub zero_nodes: BTreeSet<Ident>,
    pub branches: BTreeMap<Ident, (Ident, Ident)>,
    /// Declared tips by rank.
    pub tips: BTreeMap<u32, BTreeSet<Ident>>,
    /// Nodes of rank `ρ ≥ 1`, in declaration order.
    pub nodes: BTreeMap<u32, Vec<StandardNode>>,
}

/// Uniform layer generators for ranks `ω⃗` and `ω`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Template {
    /// 0-nodes `x[0]`, `u[0]`, `u[1]` joined in a triangle by `p[0..3]`; for
    /// each `μ ≥ 1` one μ-node `x[μ]` holding the (μ−1)-tips `ta[μ−1]` and
    /// `tb[μ−1]`; when `omega`, ω-nodes `y[j]` holding the ω⃗-tip `w[j]` and
    /// the exceptional node `x[j]`. Infinite layers are listed up to `window`.
    Tower { omega: bool, window: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Body {
    Finite(FiniteGraph),
    Template(Template),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StandardGraph {
    name: String,
    rank: Rank,
    body: Body,
}

impl StandardGraph {
    /// A finite-layer graph. Use [`StandardGraph::validate`] before relying on
    /// the node axioms.
    pub fn finite(name: &str, rank: u32, graph: FiniteGraph) -> Self {
        StandardGraph {
            name: name.to_string(),
            rank: Rank::Natural(rank),
            body: Body::Finite(graph),
        }
    }

    pub fn template(name: &str, template: Template) -> Self {
        let Template::Tower { omega, .. } = template;
        StandardGraph {
            name: name.to_string(),
            rank: if omega { Rank::Omega } else { Rank::ArrowOmega },
            body: Body::Template(template),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn as_finite(&self) -> Option<&FiniteGraph> {
        match &self.body {
            Body::Finite(g) => Some(g),
            Body::Template(_) => None,
        }
    }

    pub fn as_template(&self) -> Option<Template> {
        match &self.body {
            Body::Template(t) => Some(*t),
            Body::Finite(_) => None,
        }
    }

    pub fn is_template(&self) -> bool {
        self.as_template().is_some()
    }

    pub fn zero_nodes(&self) -> BTreeSet<Ident> {
        match &self.body {
            Body::Finite(g) => g.zero_nodes.clone(),
            Body::Template(_) => ["x[0]", "u[0]", "u[1]"].iter().map(|s| s.parse().unwrap()).collect(),
        }
    }

    pub fn branches(&self) -> BTreeMap<Ident, (Ident, Ident)> {
        match &self.body {
            Body::Finite(g) => g.branches.clone(),
            Body::Template(_) => {
                let id = |s: &str| s.parse::<Ident>().unwrap();
                [("p[0]", "x[0]", "u[0]"), ("p[1]", "u[0]", "u[1]"), ("p[2]", "u[1]", "x[0]")]
                    .iter()
                    .map(|(b, x, y)| (id(b), (id(x), id(y))))
                    .collect()
            }
        }
    }

    /// The nodes at `level` (`ρ ≥ 1` or `ω`). Template ω-layers are listed
    /// through the template window.
    pub fn nodes_at(&self, level: Rank) -> Result<Vec<StandardNode>, GraphError> {
        if level > self.rank {
            return Err(GraphError::RankTooHigh {
                requested: level,
                rank: self.rank,
            });
        }
        match (&self.body, level) {
            (_, Rank::Natural(0)) | (_, Rank::ArrowOmega) => Err(GraphError::NoNodes(level)),
            (Body::Finite(g), Rank::Natural(k)) => Ok(g.nodes.get(&k).cloned().unwrap_or_default()),
            (Body::Finite(_), Rank::Omega) => unreachable!("finite graphs have natural rank"),
            (Body::Template(_), Rank::Natural(k)) => Ok(vec![tower_node(k)]),
            (Body::Template(Template::Tower { window, .. }), Rank::Omega) => {
                Ok((0..*window).map(omega_node).collect())
            }
        }
    }

    /// Every extremity at `level`: the (level−1)-tips (ω⃗-tips at `ω`) and the
    /// exceptional elements of the level's nodes.
    pub fn extremities(&self, level: Rank) -> Result<Vec<Extremity>, GraphError> {
        let nodes = self.nodes_at(level)?;
        let tip_rank = level.tip_rank().expect("node levels have tips");
        let mut out = Vec::new();
        for node in nodes {
            for t in &node.tips {
                out.push(Extremity {
                    id: t.clone(),
                    kind: ExtremityKind::Tip(tip_rank),
                    owner: node.id.clone(),
                });
            }
            let exceptional = node.exceptional.as_ref().and_then(|x| Some((x, self.node_rank(x)?)));
            if let Some((x, rank)) = exceptional {
                out.push(Extremity {
                    id: x.clone(),
                    kind: ExtremityKind::Exceptional(rank),
                    owner: node.id.clone(),
                });
            }
        }
        Ok(out)
    }

    /// Resolves `id` as an extremity at `level`, if it is one.
    pub fn extremity(&self, level: Rank, id: &Ident) -> Option<Extremity> {
        match &self.body {
            Body::Finite(_) => self
                .extremities(level)
                .ok()?
                .into_iter()
                .find(|e| &e.id == id),
            Body::Template(t) => template_extremity(*t, level, id),
        }
    }

    /// Rank of a node identifier, if it names a node.
    pub fn node_rank(&self, id: &Ident) -> Option<Rank> {
        match &self.body {
            Body::Finite(g) => {
                if g.zero_nodes.contains(id) {
                    return Some(Rank::Natural(0));
                }
                g.nodes
                    .iter()
                    .find(|(_, ns)| ns.iter().any(|n| &n.id == id))
                    .map(|(&k, _)| Rank::Natural(k))
            }
            Body::Template(Template::Tower { omega, .. }) => match (id.stem(), id.index()) {
                ("x", Some(k)) => u32::try_from(k).ok().map(Rank::Natural),
                ("u", Some(0 | 1)) => Some(Rank::Natural(0)),
                ("y", Some(_)) if *omega => Some(Rank::Omega),
                _ => None,
            },
        }
    }

    /// Whether `e` and `f` lie in the same node at `level`.
    pub fn shorted_std(&self, e: &Ident, f: &Ident, level: Rank) -> Result<bool, GraphError> {
        let get = |id: &Ident| {
            self.extremity(level, id).ok_or_else(|| GraphError::NotAnExtremity {
                id: id.clone(),
                level,
            })
        };
        let (a, b) = (get(e)?, get(f)?);
        Ok(e == f || a.owner == b.owner)
    }

    /// The ρ-graph `{X^0, B, …, X^ρ}`.
    pub fn truncate(&self, rank: Rank) -> Result<StandardGraph, GraphError> {
        if rank > self.rank {
            return Err(GraphError::RankTooHigh {
                requested: rank,
                rank: self.rank,
            });
        }
        if rank == self.rank {
            return Ok(self.clone());
        }
        let name = format!("{}|{}", self.name, rank.keyword());
        match (&self.body, rank) {
            (Body::Template(Template::Tower { window, .. }), Rank::ArrowOmega) => Ok(StandardGraph {
                name,
                rank,
                body: Body::Template(Template::Tower {
                    omega: false,
                    window: *window,
                }),
            }),
            (_, Rank::Natural(k)) => {
                let mut g = FiniteGraph {
                    zero_nodes: self.zero_nodes(),
                    branches: self.branches(),
                    ..FiniteGraph::default()
                };
                for r in 1..=k {
                    let layer = self.nodes_at(Rank::Natural(r))?;
                    let tips: BTreeSet<Ident> =
                        layer.iter().flat_map(|n| n.tips.iter().cloned()).collect();
                    g.tips.insert(r - 1, tips);
                    g.nodes.insert(r, layer);
                }
                Ok(StandardGraph {
                    name,
                    rank,
                    body: Body::Finite(g),
                })
            }
            _ => unreachable!("ranks below ω⃗ are natural"),
        }
    }

    /// Checks the graph axioms. Violations are data, not errors.
    pub fn validate(&self, mu_max: u32) -> ValidationReport {
        let mut report = ValidationReport {
            graph: self.name.clone(),
            violations: Vec::new(),
            notes: vec!["tip path consistency is not checked".to_string()],
        };
        let g = match &self.body {
            Body::Template(_) => {
                report.notes.push("layers generated by the tower template".into());
                return report;
            }
            Body::Finite(g) => g,
        };
        let mut fail = |rule: &'static str, witness: String| {
            report.violations.push(Violation { rule, witness });
        };
        let rank = self.rank.natural().expect("finite graphs have natural rank");
        if rank > mu_max {
            fail("rank bound", format!("rank {rank} exceeds μ_max = {mu_max}"));
        }
        for (b, (x, y)) in &g.branches {
            for end in [x, y] {
                if !g.zero_nodes.contains(end) {
                    fail("branch endpoint", format!("branch {b} ends at `{end}`, not a 0-node"));
                }
            }
            if x == y {
                fail("branch endpoint", format!("branch {b} is a self-loop at {x}"));
            }
        }
        for r in 1..=rank {
            if g.nodes.get(&r).is_none_or(|ns| ns.is_empty()) {
                fail("rank layering", format!("X^{r} is empty"));
            }
        }
        for (&r, layer) in &g.nodes {
            if r == 0 || r > rank {
                for n in layer {
                    fail("rank layering", format!("node {} has rank {r} outside 1..={rank}", n.id));
                }
            }
        }
        let mut owner: BTreeMap<(u32, &Ident), &Ident> = BTreeMap::new();
        let mut z_owner: BTreeMap<&Ident, &Ident> = BTreeMap::new();
        for (&r, layer) in &g.nodes {
            let declared = g.tips.get(&(r - 1));
            for n in layer {
                if n.tips.is_empty() {
                    fail("node without (μ−1)-tip", format!("{r}-node {} holds no {}-tip", n.id, r - 1));
                }
                for t in &n.tips {
                    if !declared.is_some_and(|d| d.contains(t)) {
                        fail("tip partition", format!("{r}-node {} holds undeclared {}-tip {t}", n.id, r - 1));
                    }
                    if let Some(prev) = owner.insert((r - 1, t), &n.id) {
                        fail("tip partition", format!("{}-tip {t} is in both {prev} and {}", r - 1, n.id));
                    }
                }
                if let Some(x) = &n.exceptional {
                    match self.node_rank(x) {
                        Some(Rank::Natural(a)) if a < r => {}
                        Some(a) => fail(
                            "exceptional rank",
                            format!("{r}-node {} has exceptional {x} of rank {a}", n.id),
                        ),
                        None => fail("exceptional rank", format!("{r}-node {} has unknown exceptional {x}", n.id)),
                    }
                    if let Some(prev) = z_owner.insert(x, &n.id) {
                        fail("Z-disjointness", format!("{x} is exceptional in both {prev} and {}", n.id));
                    }
                }
            }
        }
        for (&r, tips) in &g.tips {
            for t in tips {
                if r < rank && !owner.contains_key(&(r, t)) {
                    fail("tip partition", format!("{r}-tip {t} belongs to no {}-node", r + 1));
                }
            }
        }
        report
    }
}

fn tower_node(k: u32) -> StandardNode {
    StandardNode {
        id: Ident::indexed("x", k as u64),
        rank: Rank::Natural(k),
        tips: [Ident::indexed("ta", k as u64 - 1), Ident::indexed("tb", k as u64 - 1)]
            .into_iter()
            .collect(),
        exceptional: None,
    }
}

fn omega_node(j: u64) -> StandardNode {
    StandardNode {
        id: Ident::indexed("y", j),
        rank: Rank::Omega,
        tips: [Ident::indexed("w", j)].into_iter().collect(),
        exceptional: Some(Ident::indexed("x", j)),
    }
}

fn template_extremity(t: Template, level: Rank, id: &Ident) -> Option<Extremity> {
    let Template::Tower { omega, .. } = t;
    let i = id.index()?;
    match (level, id.stem()) {
        (Rank::Natural(k), "ta" | "tb") if k >= 1 && i + 1 == k as u64 => Some(Extremity {
            id: id.clone(),
            kind: ExtremityKind::Tip(Rank::Natural(k - 1)),
            owner: Ident::indexed("x", k as u64),
        }),
        (Rank::Omega, "w") if omega => Some(Extremity {
            id: id.clone(),
            kind: ExtremityKind::Tip(Rank::ArrowOmega),
            owner: Ident::indexed("y", i),
        }),
        (Rank::Omega, "x") if omega => Some(Extremity {
            id: id.clone(),
            kind: ExtremityKind::Exceptional(Rank::Natural(u32::try_from(i).ok()?)),
            owner: Ident::indexed("y", i),
        }),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub graph: String,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "pass" } else { "FAIL" };
        writeln!(f, "graph {}: {verdict}", self.graph)?;
        for v in &self.violations {
            writeln!(f, "  violation [{}] {}", v.rule, v.witness)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

/// Convenience builder for hand-written finite graphs.
#[derive(Default)]
pub struct GraphBuilder {
    graph: FiniteGraph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zero_nodes<'a>(mut self, ids: impl IntoIterator<Item = &'a str>) -> Self {
        self.graph.zero_nodes.extend(ids.into_iter().map(ident));
        self
    }

    pub fn branch(mut self, id: &str, a: &str, b: &str) -> Self {
        self.graph.branches.insert(ident(id), (ident(a), ident(b)));
        self
    }

    pub fn tips<'a>(mut self, rank: u32, ids: impl IntoIterator<Item = &'a str>) -> Self {
        self.graph.tips.entry(rank).or_default().extend(ids.into_iter().map(ident));
        self
    }

    pub fn node<'a>(
        mut self,
        rank: u32,
        id: &str,
        tips: impl IntoIterator<Item = &'a str>,
        exceptional: Option<&str>,
    ) -> Self {
        self.graph.nodes.entry(rank).or_default().push(StandardNode {
            id: ident(id),
            rank: Rank::Natural(rank),
            tips: tips.into_iter().map(ident).collect(),
            exceptional: exceptional.map(ident),
        });
        self
    }

    pub fn build(self, name: &str, rank: u32) -> StandardGraph {
        StandardGraph::finite(name, rank, self.graph)
    }
}

fn ident(s: &str) -> Ident {
    s.parse().unwrap_or_else(|e| panic!("{e}"))
}
