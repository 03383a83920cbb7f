//! Nonstandard extremities, nodes and graphs as classes of sequences modulo
//! the filter oracle.
//!
//! A [`GraphFamily`] fixes `⟨G_n⟩`. An [`NsExtremity`] is a sequence `⟨e_n⟩`
//! with each `e_n` an extremity of `G_n` at a common level. Classification,
//! shorting and equality all reduce to index sets decided by the oracle, and
//! every such decision is recorded in the audit trail.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{ExtremityKind, GraphError, Ident, Rank, StandardGraph};
use crate::hyperreal::{HyperError, Hypernatural, NatClass};
use crate::index_set::IndexSet;
use crate::oracle::{FilterOracle, Membership};
use crate::periodic::{Frame, MAX_FRAME};
use crate::seq::{generators, SeqDescriptor, SeqError, Traits};

/// Indices checked pointwise by the transitivity audit.
pub const AUDIT_HORIZON: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UltraError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error("invalid family: {0}")]
    Family(String),
    #[error("{ext} is not an extremity of G_{n} at level {level}")]
    NotAnExtremity { ext: String, n: u64, level: Rank },
    #[error("{question}: {source}")]
    Undecidable { question: String, source: HyperError },
    #[error("invariant breach at level {level}: {detail}")]
    InvariantBreach { level: Rank, detail: String },
    #[error("nonstandard ω⃗-nodes are not constructed")]
    NoArrowOmegaNodes,
}

impl UltraError {
    fn undecidable(question: impl Into<String>, source: impl Into<HyperError>) -> Self {
        UltraError::Undecidable {
            question: question.into(),
            source: source.into(),
        }
    }
}

/// `⟨G_n⟩`: prototypes of a common rank and the prototype index of each `n`.
#[derive(Clone, Debug)]
pub struct GraphFamily {
    prototypes: Vec<Arc<StandardGraph>>,
    assignment: SeqDescriptor<u64>,
    rank: Rank,
}

impl GraphFamily {
    pub fn new(prototypes: Vec<StandardGraph>, assignment: SeqDescriptor<u64>) -> Result<Self, UltraError> {
        let first = prototypes
            .first()
            .ok_or_else(|| UltraError::Family("no prototypes".into()))?;
        let rank = first.rank();
        if let Some(g) = prototypes.iter().find(|g| g.rank() != rank) {
            return Err(UltraError::Family(format!(
                "prototype {} has rank {} but {} has rank {rank}",
                g.name(),
                g.rank(),
                first.name()
            )));
        }
        let family = GraphFamily {
            prototypes: prototypes.into_iter().map(Arc::new).collect(),
            assignment,
            rank,
        };
        if let Some(&bad) = family.used().iter().find(|&&i| i as usize >= family.prototypes.len()) {
            return Err(UltraError::Family(format!(
                "assignment uses prototype {bad} of {}",
                family.prototypes.len()
            )));
        }
        Ok(family)
    }

    /// The constant family `G_n = g`.
    pub fn constant(g: StandardGraph) -> Self {
        GraphFamily::new(vec![g], SeqDescriptor::constant(0)).expect("one prototype")
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn prototypes(&self) -> &[Arc<StandardGraph>] {
        &self.prototypes
    }

    pub fn assignment(&self) -> &SeqDescriptor<u64> {
        &self.assignment
    }

    /// Prototype indices the assignment takes.
    pub fn used(&self) -> BTreeSet<u64> {
        match self.assignment.as_periodic() {
            Some(p) => p.prefix().iter().chain(p.cycle()).copied().collect(),
            None => self.assignment.values(self.assignment.horizon()).into_iter().collect(),
        }
    }

    pub fn graph_at(&self, n: u64) -> Result<&StandardGraph, UltraError> {
        let i = self.assignment.value_at(n)?;
        Ok(&self.prototypes[i as usize])
    }

    /// Whether every prototype in use is a layer template.
    pub fn is_template(&self) -> bool {
        self.used()
            .iter()
            .all(|&i| self.prototypes[i as usize].is_template())
    }

    pub fn is_constant(&self) -> bool {
        self.assignment.as_constant().is_some()
    }

    /// `⟨G_n^ρ⟩`.
    pub fn truncate(&self, rank: Rank) -> Result<GraphFamily, UltraError> {
        let prototypes = self
            .prototypes
            .iter()
            .map(|g| g.truncate(rank))
            .collect::<Result<Vec<_>, _>>()?;
        GraphFamily::new(prototypes, self.assignment.clone())
    }

    /// Identifiers `f(G)` common to every prototype in use.
    fn common<T: Ord + Clone>(&self, mut f: impl FnMut(&StandardGraph) -> BTreeSet<T>) -> BTreeSet<T> {
        let mut sets = self.used().into_iter().map(|i| f(&self.prototypes[i as usize]));
        let first = sets.next().unwrap_or_default();
        sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
    }
}

/// `⟨e_n⟩` as identifiers.
#[derive(Clone, Debug, PartialEq)]
pub enum ExtremitySeq {
    Listed(SeqDescriptor<Ident>),
    /// `e_n = stem[index_n]`.
    Indexed { stem: Arc<str>, index: SeqDescriptor<u64> },
}

impl ExtremitySeq {
    pub fn constant(id: Ident) -> Self {
        ExtremitySeq::Listed(SeqDescriptor::constant(id))
    }

    /// `stem[n]` for `n ≤ horizon`, with injectivity declared.
    pub fn diagonal(stem: &str, horizon: u64) -> Self {
        let traits = Traits {
            injective: true,
            unbounded: true,
            monotone: true,
            limit: None,
        };
        ExtremitySeq::Indexed {
            stem: stem.into(),
            index: generators::identity(horizon, traits),
        }
    }

    pub fn value_at(&self, n: u64) -> Result<Ident, SeqError> {
        match self {
            ExtremitySeq::Listed(s) => s.value_at(n),
            ExtremitySeq::Indexed { stem, index } => Ok(Ident::indexed(stem, index.value_at(n)?)),
        }
    }

    fn frame(&self) -> Option<Frame> {
        match self {
            ExtremitySeq::Listed(s) => s.frame(),
            ExtremitySeq::Indexed { index, .. } => index.frame(),
        }
    }

    fn horizon(&self) -> u64 {
        match self {
            ExtremitySeq::Listed(s) => s.horizon(),
            ExtremitySeq::Indexed { index, .. } => index.horizon(),
        }
    }

    /// The index sequence under `stem`; values with another stem map to
    /// `u64::MAX`, which no index sequence takes.
    fn indices_under(&self, stem: &str) -> SeqDescriptor<u64> {
        match self {
            ExtremitySeq::Indexed { stem: s, index } if &**s == stem => index.clone(),
            ExtremitySeq::Indexed { .. } => SeqDescriptor::constant(u64::MAX),
            ExtremitySeq::Listed(s) => {
                let stem = stem.to_string();
                s.map("index", move |id: &Ident| match id.index() {
                    Some(i) if id.stem() == stem => i,
                    _ => u64::MAX,
                })
            }
        }
    }

    /// The stem, when every value shares it.
    fn uniform_stem(&self) -> Option<String> {
        match self {
            ExtremitySeq::Indexed { stem, .. } => Some(stem.to_string()),
            ExtremitySeq::Listed(s) => {
                let p = s.as_periodic()?;
                let mut stems = p.prefix().iter().chain(p.cycle()).map(|i| i.stem());
                let first = stems.next()?;
                stems.all(|x| x == first).then(|| first.to_string())
            }
        }
    }
}

impl fmt::Display for ExtremitySeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtremitySeq::Listed(s) => match s.as_constant() {
                Some(id) => write!(f, "{id}"),
                None => write!(f, "{s}"),
            },
            ExtremitySeq::Indexed { stem, index } => match index {
                SeqDescriptor::Generated(g) => write!(f, "{stem}[{}]", g.label()),
                p => write!(f, "{stem}[{p}]"),
            },
        }
    }
}

/// `[e_n]` at a level.
#[derive(Clone, Debug, PartialEq)]
pub struct NsExtremity {
    pub name: Option<String>,
    pub rep: ExtremitySeq,
    pub level: Rank,
}

impl NsExtremity {
    pub fn new(rep: ExtremitySeq, level: Rank) -> Self {
        NsExtremity { name: None, rep, level }
    }

    pub fn named(name: &str, rep: ExtremitySeq, level: Rank) -> Self {
        NsExtremity {
            name: Some(name.to_string()),
            rep,
            level,
        }
    }

    pub fn constant(id: Ident, level: Rank) -> Self {
        NsExtremity::new(ExtremitySeq::constant(id), level)
    }

    /// `[e_n]` text used in reports.
    pub fn descriptor(&self) -> String {
        format!("[{}]", self.rep)
    }
}

impl fmt::Display for NsExtremity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(name) => write!(f, "{name}={}", self.descriptor()),
            None => f.write_str(&self.descriptor()),
        }
    }
}

/// Rank of a nonstandard exceptional element.
#[derive(Clone, Debug)]
pub enum NsRank {
    Standard(Rank),
    Hyper(Hypernatural),
}

impl NsRank {
    pub fn is_standard(&self) -> bool {
        matches!(self, NsRank::Standard(_))
    }
}

impl PartialEq for NsRank {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (NsRank::Standard(a), NsRank::Standard(b)) => a == b,
            (NsRank::Hyper(a), NsRank::Hyper(b)) => a.rep() == b.rep(),
            _ => false,
        }
    }
}

impl fmt::Display for NsRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NsRank::Standard(r) => write!(f, "{r}"),
            NsRank::Hyper(h) => write!(f, "{h} (nonstandard)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classification {
    /// A nonstandard tip of the given rank (`ω⃗` at level `ω`).
    NsTip(Rank),
    NsExceptional(NsRank),
}

impl Classification {
    pub fn is_tip(&self) -> bool {
        matches!(self, Classification::NsTip(_))
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::NsTip(r) => write!(f, "tip, rank {r}"),
            Classification::NsExceptional(r) => write!(f, "exceptional, rank {r}"),
        }
    }
}

/// One oracle decision, or a certified standardness verdict, that shaped a
/// result.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub question: String,
    pub set: String,
    pub verdict: String,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} → {}", self.question, self.set, self.verdict)
    }
}

/// Appends decisions, keeping the first occurrence of each question.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Audit(Vec<Decision>);

impl Audit {
    pub fn push(&mut self, d: Decision) {
        if !self.0.iter().any(|x| x.question == d.question) {
            self.0.push(d);
        }
    }

    pub fn extend(&mut self, ds: impl IntoIterator<Item = Decision>) {
        for d in ds {
            self.push(d);
        }
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.0
    }
}

/// A nonstandard node: one shorting class of the universe.
#[derive(Clone, Debug, PartialEq)]
pub struct NsNode {
    pub rank: Rank,
    pub members: Vec<(NsExtremity, Classification)>,
    /// Positions of the tip members.
    pub tips: Vec<usize>,
    pub exceptional: Option<usize>,
}

impl NsNode {
    pub fn exceptional_member(&self) -> Option<&(NsExtremity, Classification)> {
        self.exceptional.map(|i| &self.members[i])
    }
}

/// `*X^ρ` over a finite universe, with its audit trail.
#[derive(Clone, Debug, PartialEq)]
pub struct NsLayer {
    pub level: Rank,
    pub nodes: Vec<NsNode>,
    pub audit: Audit,
    /// Pairs of universe classes with their shorting sets; used by audits.
    pub shorting: Vec<(usize, usize, IndexSet)>,
    /// Universe after merging equal classes.
    pub classes: Vec<NsExtremity>,
}

impl NsLayer {
    /// Member descriptors, classifications and exceptional ranks, without
    /// audit data.
    pub fn signature(&self) -> Vec<(Vec<String>, Option<String>)> {
        self.nodes
            .iter()
            .map(|n| {
                let members = n
                    .members
                    .iter()
                    .map(|(e, c)| format!("{} {c}", e.descriptor()))
                    .collect();
                let exc = n.exceptional_member().map(|(e, _)| e.descriptor());
                (members, exc)
            })
            .collect()
    }
}

/// Settings for building nonstandard graphs.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Horizon of generated diagonal sequences.
    pub horizon: u64,
    /// Natural layers materialised for reports of rank `ω⃗` and `ω`.
    pub window: u32,
    /// Query extremities added to the default universe of their level.
    pub extra: Vec<NsExtremity>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            horizon: 64,
            window: 4,
            extra: Vec::new(),
        }
    }
}

/// A family together with the fixed oracle.
#[derive(Clone, Debug)]
pub struct Ultrapower {
    family: Arc<GraphFamily>,
    oracle: Arc<FilterOracle>,
}

impl Ultrapower {
    pub fn new(family: GraphFamily, oracle: Arc<FilterOracle>) -> Self {
        Ultrapower {
            family: Arc::new(family),
            oracle,
        }
    }

    pub fn family(&self) -> &GraphFamily {
        &self.family
    }

    pub fn oracle(&self) -> &Arc<FilterOracle> {
        &self.oracle
    }

    fn decide(&self, question: String, set: &IndexSet) -> Result<(Membership, Decision), UltraError> {
        let verdict = self
            .oracle
            .decide(set)
            .map_err(|e| UltraError::undecidable(question.clone(), e))?;
        let decision = Decision {
            question,
            set: set.to_descriptor(),
            verdict: verdict.to_string(),
        };
        Ok((verdict, decision))
    }

    /// `{n : pred(n)}` over the joint frame of the assignment and `seqs`.
    /// Periodic inputs give an exact set; otherwise the set is sampled up to
    /// the smallest horizon, with `refinement` when known.
    fn joint_set(
        &self,
        seqs: &[&ExtremitySeq],
        refinement: Option<IndexSet>,
        pred: impl Fn(u64) -> Result<bool, UltraError>,
    ) -> Result<IndexSet, UltraError> {
        let frames: Option<Vec<Frame>> = std::iter::once(self.family.assignment.frame())
            .chain(seqs.iter().map(|s| s.frame()))
            .collect();
        if let Some(frame) = frames.and_then(Frame::merge_all) {
            let bits = (0..frame.len()).map(&pred).collect::<Result<Vec<_>, _>>()?;
            let (prefix, cycle) = bits.split_at(frame.prefix as usize);
            return Ok(IndexSet::periodic(prefix.to_vec(), cycle.to_vec()));
        }
        let horizon = std::iter::once(self.family.assignment.horizon())
            .chain(seqs.iter().map(|s| s.horizon()))
            .min()
            .unwrap_or(u64::MAX)
            .min(MAX_FRAME - 1);
        let bits = (0..=horizon).map(&pred).collect::<Result<Vec<_>, _>>()?;
        Ok(IndexSet::sampled_with(bits, refinement))
    }

    fn resolve(&self, e: &NsExtremity, n: u64) -> Result<crate::graph::Extremity, UltraError> {
        let id = e.rep.value_at(n)?;
        self.family
            .graph_at(n)?
            .extremity(e.level, &id)
            .ok_or_else(|| UltraError::NotAnExtremity {
                ext: format!("{id} (from {})", e.descriptor()),
                n,
                level: e.level,
            })
    }

    /// Template families at level `ω` resolve extremities by stem: `w[j]` is
    /// an ω⃗-tip and `x[j]` the exceptional node of rank `j`, both in `y[j]`.
    fn template_rule(&self, e: &NsExtremity) -> Option<String> {
        (self.family.is_template() && e.level == Rank::Omega)
            .then(|| e.rep.uniform_stem())
            .flatten()
            .filter(|s| s == "w" || s == "x")
    }

    /// `{n : e_n = f_n}`.
    pub fn equality_set(&self, e: &NsExtremity, f: &NsExtremity) -> Result<IndexSet, UltraError> {
        if let (Some(a), Some(b)) = (e.rep.uniform_stem(), f.rep.uniform_stem()) {
            if a != b {
                return Ok(IndexSet::empty());
            }
        }
        Ok(match (&e.rep, &f.rep) {
            (ExtremitySeq::Listed(a), ExtremitySeq::Listed(b)) => a.agreement_set(b),
            (ExtremitySeq::Indexed { stem, index }, other) | (other, ExtremitySeq::Indexed { stem, index }) => {
                index.agreement_set(&other.indices_under(stem))
            }
        })
    }

    /// Class equality `[e_n] = [f_n]`.
    pub fn ns_equal(&self, e: &NsExtremity, f: &NsExtremity) -> Result<(bool, Decision), UltraError> {
        let set = self.equality_set(e, f)?;
        let (v, d) = self.decide(format!("{} = {}", e.descriptor(), f.descriptor()), &set)?;
        Ok((v.is_in(), d))
    }

    /// `N_t`: indices where `e_n` is a tip.
    pub fn tip_set(&self, e: &NsExtremity) -> Result<IndexSet, UltraError> {
        let refinement = self.template_rule(e).map(|stem| {
            if stem == "w" {
                IndexSet::all()
            } else {
                IndexSet::empty()
            }
        });
        self.joint_set(&[&e.rep], refinement, |n| {
            Ok(matches!(self.resolve(e, n)?.kind, ExtremityKind::Tip(_)))
        })
    }

    /// `N_ef`: indices where `e_n ≍ f_n`.
    pub fn shorting_set(&self, e: &NsExtremity, f: &NsExtremity) -> Result<IndexSet, UltraError> {
        if let (Some(_), Some(_)) = (self.template_rule(e), self.template_rule(f)) {
            // Both owners are y[index].
            let a = e.rep.indices_under(&e.rep.uniform_stem().unwrap());
            let b = f.rep.indices_under(&f.rep.uniform_stem().unwrap());
            return Ok(a.agreement_set(&b));
        }
        self.joint_set(&[&e.rep, &f.rep], None, |n| {
            Ok(self.resolve(e, n)?.owner == self.resolve(f, n)?.owner)
        })
    }

    /// `e ≍ f` modulo the oracle; reflexive by convention.
    pub fn ns_shorted(&self, e: &NsExtremity, f: &NsExtremity) -> Result<(bool, Option<Decision>), UltraError> {
        if e.rep == f.rep {
            return Ok((true, None));
        }
        let set = self.shorting_set(e, f)?;
        let (v, d) = self.decide(format!("N({} ≍ {})", e.descriptor(), f.descriptor()), &set)?;
        Ok((v.is_in(), Some(d)))
    }

    /// Tip or exceptional element, and for the latter its rank.
    pub fn classify(&self, e: &NsExtremity) -> Result<(Classification, Vec<Decision>), UltraError> {
        let mut audit = Vec::new();
        let tips = self.tip_set(e)?;
        let (v, d) = self.decide(format!("N_t{}", e.descriptor()), &tips)?;
        audit.push(d);
        if v.is_in() {
            let rank = e.level.tip_rank().expect("node levels have tips");
            return Ok((Classification::NsTip(rank), audit));
        }
        let ranks = self.rank_sequence(e)?;
        if let Some(p) = ranks.as_periodic() {
            // Finitely many ranks: F(ρ) for each, plus N_t to cover ℕ.
            let values: BTreeSet<u64> = p
                .prefix()
                .iter()
                .chain(p.cycle())
                .copied()
                .filter(|&r| r != u64::MAX)
                .collect();
            let mut parts: Vec<IndexSet> = values
                .iter()
                .map(|&r| ranks.agreement_set(&SeqDescriptor::constant(r)))
                .collect();
            for (r, part) in values.iter().zip(&parts) {
                let (_, d) = self.decide(format!("F({r}){}", e.descriptor()), part)?;
                audit.push(d);
            }
            parts.push(tips);
            let chosen = self
                .oracle
                .select_from_partition(&parts)
                .map_err(|err| UltraError::undecidable(format!("rank of {}", e.descriptor()), err))?;
            let rank = *values.iter().nth(chosen).ok_or_else(|| UltraError::InvariantBreach {
                level: e.level,
                detail: format!("{} selected N_t after deciding it out", e.descriptor()),
            })?;
            return Ok((
                Classification::NsExceptional(NsRank::Standard(Rank::Natural(rank as u32))),
                audit,
            ));
        }
        let hyper = Hypernatural::new(ranks, self.oracle.clone());
        let question = format!("rank{} standard", e.descriptor());
        let class = hyper
            .classify()
            .map_err(|err| UltraError::undecidable(question.clone(), err))?;
        let (rank, verdict) = match class {
            NatClass::Standard(v) => (NsRank::Standard(Rank::Natural(v as u32)), format!("standard {v}")),
            NatClass::Nonstandard => (NsRank::Hyper(hyper.clone()), "nonstandard".to_string()),
        };
        audit.push(Decision {
            question,
            set: hyper.to_string(),
            verdict,
        });
        Ok((Classification::NsExceptional(rank), audit))
    }

    /// `μ_n`, the rank of `e_n` where it is exceptional (`u64::MAX` where it
    /// is a tip).
    fn rank_sequence(&self, e: &NsExtremity) -> Result<SeqDescriptor<u64>, UltraError> {
        if self.template_rule(e).as_deref() == Some("x") {
            return Ok(e.rep.indices_under("x"));
        }
        let rank_at = |n: u64| -> Result<u64, UltraError> {
            Ok(match self.resolve(e, n)?.kind {
                ExtremityKind::Tip(_) => u64::MAX,
                ExtremityKind::Exceptional(Rank::Natural(k)) => k as u64,
                ExtremityKind::Exceptional(r) => {
                    return Err(UltraError::InvariantBreach {
                        level: e.level,
                        detail: format!("exceptional element of rank {r}"),
                    })
                }
            })
        };
        let frames: Option<Vec<Frame>> = [self.family.assignment.frame(), e.rep.frame()].into_iter().collect();
        if let Some(frame) = frames.and_then(Frame::merge_all) {
            let vals = (0..frame.len()).map(rank_at).collect::<Result<Vec<_>, _>>()?;
            let (prefix, cycle) = vals.split_at(frame.prefix as usize);
            return Ok(SeqDescriptor::periodic(prefix.to_vec(), cycle.to_vec()));
        }
        let horizon = self.family.assignment.horizon().min(e.rep.horizon()).min(MAX_FRAME - 1);
        let vals = (0..=horizon).map(rank_at).collect::<Result<Vec<_>, _>>()?;
        Ok(SeqDescriptor::generated(format!("rank{}", e.descriptor()), horizon, move |n| vals[n as usize]).build())
    }

    /// Constant sequences of identifiers that are extremities at `level` in
    /// every prototype in use; at `ω` on template families also the diagonal
    /// classes `[w[n]]` and `[x[n]]`.
    pub fn default_universe(&self, level: Rank, horizon: u64) -> Result<Vec<NsExtremity>, UltraError> {
        if level == Rank::ArrowOmega {
            return Err(UltraError::NoArrowOmegaNodes);
        }
        let mut ids: Vec<Ident> = Vec::new();
        let mut failure = None;
        let common = self.family.common(|g| match g.extremities(level) {
            Ok(ex) => ex.into_iter().map(|e| e.id).collect(),
            Err(err) => {
                failure.get_or_insert(err);
                BTreeSet::new()
            }
        });
        if let Some(err) = failure {
            return Err(err.into());
        }
        // Keep the prototype's node order rather than sorted order.
        let first = self.family.used().into_iter().next().expect("nonempty");
        for e in self.family.prototypes[first as usize].extremities(level)? {
            if common.contains(&e.id) && !ids.contains(&e.id) {
                ids.push(e.id);
            }
        }
        let mut universe: Vec<NsExtremity> = ids.into_iter().map(|id| NsExtremity::constant(id, level)).collect();
        if level == Rank::Omega && self.family.is_template() {
            for stem in ["w", "x"] {
                universe.push(NsExtremity::new(ExtremitySeq::diagonal(stem, horizon), level));
            }
        }
        Ok(universe)
    }

    /// Partitions `universe` into nonstandard nodes at `level`.
    pub fn build_ns_nodes(&self, level: Rank, universe: &[NsExtremity]) -> Result<NsLayer, UltraError> {
        if level == Rank::ArrowOmega {
            return Err(UltraError::NoArrowOmegaNodes);
        }
        if let Some(e) = universe.iter().find(|e| e.level != level) {
            return Err(UltraError::Family(format!("{e} is at level {}, not {level}", e.level)));
        }
        let mut audit = Audit::default();
        // Merge representatives of the same class.
        let mut classes: Vec<NsExtremity> = Vec::new();
        for e in universe {
            let mut dup = false;
            for c in &classes {
                if c.rep == e.rep {
                    dup = true;
                    break;
                }
                let (eq, d) = self.ns_equal(c, e)?;
                audit.push(d);
                if eq {
                    dup = true;
                    break;
                }
            }
            if !dup {
                classes.push(e.clone());
            }
        }
        let classified: Vec<(Classification, Vec<Decision>)> = classes
            .par_iter()
            .map(|e| self.classify(e))
            .collect::<Result<_, _>>()?;
        let m = classes.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        let decided: Vec<(usize, usize, IndexSet, bool, Decision)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let set = self.shorting_set(&classes[i], &classes[j])?;
                let question = format!("N({} ≍ {})", classes[i].descriptor(), classes[j].descriptor());
                let (v, d) = self.decide(question, &set)?;
                Ok((i, j, set, v.is_in(), d))
            })
            .collect::<Result<_, UltraError>>()?;
        for (_, ds) in &classified {
            audit.extend(ds.iter().cloned());
        }
        let mut shorted = vec![vec![false; m]; m];
        for i in 0..m {
            shorted[i][i] = true;
        }
        let mut uf = UnionFind::new(m);
        for (i, j, _, s, d) in &decided {
            audit.push(d.clone());
            shorted[*i][*j] = *s;
            shorted[*j][*i] = *s;
            if *s {
                uf.union(*i, *j);
            }
        }
        let sets: HashMap<(usize, usize), &IndexSet> =
            decided.iter().map(|(i, j, set, _, _)| ((*i, *j), set)).collect();
        audit_transitivity(level, &classes, &shorted, &sets)?;

        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..m {
            groups.entry(uf.find(i)).or_default().push(i);
        }
        let mut nodes: Vec<NsNode> = groups
            .into_values()
            .map(|members| build_node(level, &classes, &classified, &shorted, members))
            .collect::<Result<_, _>>()?;
        nodes.sort_by_key(|n| n.members[0].0.descriptor());
        let shorting = decided.into_iter().map(|(i, j, set, _, _)| (i, j, set)).collect();
        Ok(NsLayer {
            level,
            nodes,
            audit,
            shorting,
            classes,
        })
    }

    /// `*G^ν` for the family's rank `ν`.
    pub fn build_ns_graph(&self, options: BuildOptions) -> Result<NsGraph, UltraError> {
        let family = &self.family;
        let zero_nodes = family.common(|g| g.zero_nodes()).into_iter().collect();
        let branches = family
            .common(|g| g.branches().into_keys().collect())
            .into_iter()
            .collect();
        let graph = NsGraph {
            up: self.clone(),
            options,
            zero_nodes,
            branches,
            layers: Mutex::new(BTreeMap::new()),
            omega: None,
        };
        let mut graph = graph;
        match family.rank {
            Rank::Natural(nu) => {
                let built: Vec<(u32, NsLayer)> = (1..=nu)
                    .into_par_iter()
                    .map(|mu| Ok((mu, graph.build_layer(Rank::Natural(mu))?)))
                    .collect::<Result<_, UltraError>>()?;
                let mut cache = graph.layers.lock().expect("unpoisoned");
                for (mu, layer) in built {
                    cache.insert(mu, Arc::new(layer));
                }
            }
            Rank::ArrowOmega => {}
            Rank::Omega => graph.omega = Some(Arc::new(graph.build_layer(Rank::Omega)?)),
        }
        Ok(graph)
    }
}

fn build_node(
    level: Rank,
    classes: &[NsExtremity],
    classified: &[(Classification, Vec<Decision>)],
    shorted: &[Vec<bool>],
    members: Vec<usize>,
) -> Result<NsNode, UltraError> {
    let breach = |detail: String| UltraError::InvariantBreach { level, detail };
    let tips: Vec<usize> = (0..members.len())
        .filter(|&k| classified[members[k]].0.is_tip())
        .collect();
    let exceptional: Vec<usize> = (0..members.len())
        .filter(|&k| !classified[members[k]].0.is_tip())
        .collect();
    let names = || {
        members
            .iter()
            .map(|&i| classes[i].descriptor())
            .collect::<Vec<_>>()
            .join(", ")
    };
    if tips.is_empty() {
        return Err(breach(format!("node {{{}}} has no nonstandard tip", names())));
    }
    if exceptional.len() > 1 {
        return Err(breach(format!(
            "node {{{}}} has {} exceptional elements",
            names(),
            exceptional.len()
        )));
    }
    if let Some(&x) = exceptional.first() {
        if !tips.iter().any(|&t| shorted[members[x]][members[t]]) {
            return Err(breach(format!(
                "exceptional {} is shorted to no tip",
                classes[members[x]].descriptor()
            )));
        }
    }
    Ok(NsNode {
        rank: level,
        members: members
            .iter()
            .map(|&i| (classes[i].clone(), classified[i].0.clone()))
            .collect(),
        tips,
        exceptional: exceptional.first().copied(),
    })
}

/// Decision-level and pointwise checks of `N_ef ∩ N_fg ⊆ N_eg`.
fn audit_transitivity(
    level: Rank,
    classes: &[NsExtremity],
    shorted: &[Vec<bool>],
    sets: &HashMap<(usize, usize), &IndexSet>,
) -> Result<(), UltraError> {
    let m = classes.len();
    let set = |i: usize, j: usize| -> Option<&IndexSet> {
        if i == j {
            None
        } else {
            Some(sets[&(i.min(j), i.max(j))])
        }
    };
    let at = |i: usize, j: usize, n: u64| -> Option<bool> {
        match set(i, j) {
            None => Some(true),
            Some(s) => s.contains(n),
        }
    };
    for e in 0..m {
        for f in 0..m {
            for g in 0..m {
                if e == f || f == g || e == g {
                    continue;
                }
                if shorted[e][f] && shorted[f][g] && !shorted[e][g] {
                    return Err(UltraError::InvariantBreach {
                        level,
                        detail: format!(
                            "{} ≍ {} ≍ {} but not {0} ≍ {2}",
                            classes[e].descriptor(),
                            classes[f].descriptor(),
                            classes[g].descriptor()
                        ),
                    });
                }
                for n in 0..=AUDIT_HORIZON {
                    if let (Some(true), Some(true), Some(false)) = (at(e, f, n), at(f, g, n), at(e, g, n)) {
                        return Err(UltraError::InvariantBreach {
                            level,
                            detail: format!(
                                "n = {n}: {} ≍ {} ≍ {} pointwise but not {0} ≍ {2}",
                                classes[e].descriptor(),
                                classes[f].descriptor(),
                                classes[g].descriptor()
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Unions by smaller root so class representatives are deterministic.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// `*G^ν = {*X^0, *B, *X^1, …}` with natural layers built on demand for
/// ranks `ω⃗` and `ω`, and `*X^ω` for rank `ω`.
#[derive(Debug)]
pub struct NsGraph {
    up: Ultrapower,
    options: BuildOptions,
    /// Constant classes of 0-nodes common to every prototype in use.
    pub zero_nodes: Vec<Ident>,
    /// Constant classes of branches common to every prototype in use.
    pub branches: Vec<Ident>,
    layers: Mutex<BTreeMap<u32, Arc<NsLayer>>>,
    omega: Option<Arc<NsLayer>>,
}

impl NsGraph {
    pub fn rank(&self) -> Rank {
        self.up.family.rank
    }

    fn build_layer(&self, level: Rank) -> Result<NsLayer, UltraError> {
        let mut universe = self.up.default_universe(level, self.options.horizon)?;
        universe.extend(self.options.extra.iter().filter(|e| e.level == level).cloned());
        self.up.build_ns_nodes(level, &universe)
    }

    /// `*X^μ` for natural `μ ≥ 1`, built and cached on first use.
    pub fn layer(&self, mu: u32) -> Result<Arc<NsLayer>, UltraError> {
        let level = Rank::Natural(mu);
        if mu == 0 || level > self.rank() {
            return Err(GraphError::RankTooHigh {
                requested: level,
                rank: self.rank(),
            }
            .into());
        }
        if let Some(l) = self.layers.lock().expect("unpoisoned").get(&mu) {
            return Ok(l.clone());
        }
        let built = Arc::new(self.build_layer(level)?);
        let mut cache = self.layers.lock().expect("unpoisoned");
        Ok(cache.entry(mu).or_insert(built).clone())
    }

    /// `*X^ω`, present only for rank `ω`.
    pub fn omega_layer(&self) -> Option<&NsLayer> {
        self.omega.as_deref()
    }

    /// Nonstandard ω⃗-nodes are never constructed.
    pub fn arrow_omega_layer(&self) -> Result<(), UltraError> {
        Err(UltraError::NoArrowOmegaNodes)
    }

    /// Natural layers shown in reports: all of them for natural rank, the
    /// first `window` otherwise.
    pub fn listed_levels(&self) -> Vec<u32> {
        match self.rank() {
            Rank::Natural(nu) => (1..=nu).collect(),
            _ => (1..=self.options.window).collect(),
        }
    }

    /// Every listed layer, `*X^ω` last.
    pub fn layers(&self) -> Result<Vec<Arc<NsLayer>>, UltraError> {
        let mut out: Vec<Arc<NsLayer>> = self
            .listed_levels()
            .into_iter()
            .map(|mu| self.layer(mu))
            .collect::<Result<_, _>>()?;
        out.extend(self.omega.clone());
        Ok(out)
    }
}
