//! Resistive networks on the 0-graph: per-index nodal solves, hyperreal
//! operating points, and componentwise checks of Ohm's law, Kirchhoff's laws
//! and Tellegen's equation.
//!
//! Every branch is oriented from its first to its second endpoint and carries
//! a resistance in series with a voltage source (Thevenin form), so that
//! `v_b = r_b·i_b − e_b` with `v_b` the potential drop along the orientation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::closed_form::{ClassForms, ClosedForm, Poly};
use crate::graph::{Ident, StandardGraph};
use crate::hyperreal::{ArithOp, HyperError, Hyperreal};
use crate::oracle::FilterOracle;
use crate::periodic::{Frame, MAX_FRAME};
use crate::seq::{SeqDescriptor, SeqError};
use crate::ultrapower::{GraphFamily, UltraError};

/// Condition estimates above this make a solve fail.
pub const MAX_CONDITION: f64 = 1e13;

/// Largest interpolation degree attempted for exact current formulas.
const MAX_CERTIFICATE_DEGREE: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no branches")]
    EmptyNetwork,
    #[error("branch {branch} has resistance {value}; resistances must be positive")]
    NonPositiveResistance { branch: Ident, value: f64 },
    #[error("branch {0} has no resistance")]
    MissingResistance(Ident),
    #[error("{0} is not a branch")]
    UnknownBranch(Ident),
    #[error("branch {branch} has endpoint {node}, which is not a 0-node")]
    UnknownNode { branch: Ident, node: Ident },
    #[error("branch {0} is a self-loop")]
    SelfLoop(Ident),
    #[error("ill-conditioned nodal system (condition estimate {condition:.3e})")]
    NumericalFailure { condition: f64 },
    #[error("at n = {n}: {source}")]
    AtIndex { n: u64, source: Box<NetworkError> },
    #[error("prototypes disagree on branches: {0}")]
    BranchMismatch(String),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Ultra(#[from] UltraError),
    #[error(transparent)]
    Hyper(#[from] HyperError),
}

impl NetworkError {
    fn at(self, n: u64) -> Self {
        NetworkError::AtIndex { n, source: Box::new(self) }
    }
}

/// A loop of branches with traversal signs (`+1` along the orientation).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Loop {
    pub branches: Vec<(Ident, i8)>,
}

impl fmt::Display for Loop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .branches
            .iter()
            .map(|(b, s)| format!("{}{b}", if *s > 0 { "+" } else { "-" }))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// A finite network: 0-nodes, oriented branches, resistances and sources.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardNetwork {
    nodes: BTreeSet<Ident>,
    branches: BTreeMap<Ident, (Ident, Ident)>,
    resistance: BTreeMap<Ident, f64>,
    source: BTreeMap<Ident, f64>,
}

impl StandardNetwork {
    /// The network on `graph`'s 0-graph. Branches without a source get 0 V.
    pub fn new(
        graph: &StandardGraph,
        resistance: BTreeMap<Ident, f64>,
        source: BTreeMap<Ident, f64>,
    ) -> Result<Self, NetworkError> {
        StandardNetwork::from_parts(graph.zero_nodes(), graph.branches(), resistance, source)
    }

    pub fn from_parts(
        nodes: BTreeSet<Ident>,
        branches: BTreeMap<Ident, (Ident, Ident)>,
        resistance: BTreeMap<Ident, f64>,
        source: BTreeMap<Ident, f64>,
    ) -> Result<Self, NetworkError> {
        for (b, (t, h)) in &branches {
            for node in [t, h] {
                if !nodes.contains(node) {
                    return Err(NetworkError::UnknownNode {
                        branch: b.clone(),
                        node: node.clone(),
                    });
                }
            }
            if t == h {
                return Err(NetworkError::SelfLoop(b.clone()));
            }
            match resistance.get(b) {
                None => return Err(NetworkError::MissingResistance(b.clone())),
                Some(&r) if !(r > 0.0 && r.is_finite()) => {
                    return Err(NetworkError::NonPositiveResistance {
                        branch: b.clone(),
                        value: r,
                    })
                }
                _ => {}
            }
        }
        if let Some(b) = resistance.keys().chain(source.keys()).find(|b| !branches.contains_key(*b)) {
            return Err(NetworkError::UnknownBranch(b.clone()));
        }
        Ok(StandardNetwork {
            nodes,
            branches,
            resistance,
            source,
        })
    }

    pub fn nodes(&self) -> &BTreeSet<Ident> {
        &self.nodes
    }

    pub fn branches(&self) -> &BTreeMap<Ident, (Ident, Ident)> {
        &self.branches
    }

    pub fn resistance(&self, b: &Ident) -> f64 {
        self.resistance[b]
    }

    pub fn source(&self, b: &Ident) -> f64 {
        self.source.get(b).copied().unwrap_or(0.0)
    }

    /// One loop per branch outside a BFS spanning forest (nodes and
    /// neighbours visited in identifier order).
    pub fn fundamental_loops(&self) -> Vec<Loop> {
        fundamental_loops(&self.nodes, &self.branches)
    }

    pub fn solve(&self) -> Result<StandardSolution, NetworkError> {
        solve_standard(self)
    }
}

/// Node potentials, branch currents and branch voltages of one network.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardSolution {
    pub potentials: BTreeMap<Ident, f64>,
    pub currents: BTreeMap<Ident, f64>,
    pub voltages: BTreeMap<Ident, f64>,
    /// Squared ratio of the extreme diagonal entries of the Cholesky factor.
    pub condition: f64,
}

/// Nodal analysis with the smallest node of each component as reference.
pub fn solve_standard(net: &StandardNetwork) -> Result<StandardSolution, NetworkError> {
    if net.branches.is_empty() {
        return Err(NetworkError::EmptyNetwork);
    }
    let order: Vec<&Ident> = net.nodes.iter().collect();
    let index: BTreeMap<&Ident, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut comp = Dsu::new(order.len());
    for (t, h) in net.branches.values() {
        comp.union(index[t], index[h]);
    }
    // Unknown slot of each non-reference node.
    let mut slot = vec![None; order.len()];
    let mut unknowns = 0;
    for i in 0..order.len() {
        if comp.find(i) != i {
            slot[i] = Some(unknowns);
            unknowns += 1;
        }
    }
    let mut lap = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut rhs = DVector::<f64>::zeros(unknowns);
    for (b, (t, h)) in &net.branches {
        let g = 1.0 / net.resistance(b);
        let e = net.source(b);
        let (st, sh) = (slot[index[t]], slot[index[h]]);
        if let Some(a) = st {
            lap[(a, a)] += g;
            rhs[a] -= g * e;
        }
        if let Some(c) = sh {
            lap[(c, c)] += g;
            rhs[c] += g * e;
        }
        if let (Some(a), Some(c)) = (st, sh) {
            lap[(a, c)] -= g;
            lap[(c, a)] -= g;
        }
    }
    let (phi, condition) = if unknowns == 0 {
        (DVector::zeros(0), 1.0)
    } else {
        let chol = lap
            .cholesky()
            .ok_or(NetworkError::NumericalFailure { condition: f64::INFINITY })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let condition = (hi / lo).powi(2);
        if !(condition <= MAX_CONDITION) {
            return Err(NetworkError::NumericalFailure { condition });
        }
        (chol.solve(&rhs), condition)
    };
    let potential = |i: usize| slot[i].map_or(0.0, |s| phi[s]);
    let potentials: BTreeMap<Ident, f64> = order
        .iter()
        .enumerate()
        .map(|(i, n)| ((*n).clone(), potential(i)))
        .collect();
    // Branches on no loop carry no current; skip the rounding noise.
    let looped: BTreeSet<Ident> = net
        .fundamental_loops()
        .into_iter()
        .flat_map(|l| l.branches.into_iter().map(|(b, _)| b))
        .collect();
    let mut currents = BTreeMap::new();
    let mut voltages = BTreeMap::new();
    for (b, (t, h)) in &net.branches {
        let (r, e) = (net.resistance(b), net.source(b));
        let i = if looped.contains(b) {
            (potentials[t] - potentials[h] + e) / r
        } else {
            0.0
        };
        currents.insert(b.clone(), i);
        voltages.insert(b.clone(), r * i - e);
    }
    Ok(StandardSolution {
        potentials,
        currents,
        voltages,
        condition,
    })
}

fn fundamental_loops(nodes: &BTreeSet<Ident>, branches: &BTreeMap<Ident, (Ident, Ident)>) -> Vec<Loop> {
    let mut adj: BTreeMap<&Ident, Vec<(&Ident, &Ident)>> = BTreeMap::new();
    for (b, (t, h)) in branches {
        adj.entry(t).or_default().push((h, b));
        adj.entry(h).or_default().push((t, b));
    }
    for list in adj.values_mut() {
        list.sort();
    }
    // parent[x] = (parent node, tree branch), depth[x]
    let mut parent: BTreeMap<&Ident, (&Ident, &Ident)> = BTreeMap::new();
    let mut depth: BTreeMap<&Ident, usize> = BTreeMap::new();
    let mut tree: BTreeSet<&Ident> = BTreeSet::new();
    for root in nodes {
        if depth.contains_key(root) {
            continue;
        }
        depth.insert(root, 0);
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for &(y, b) in adj.get(x).into_iter().flatten() {
                if !depth.contains_key(y) {
                    depth.insert(y, depth[x] + 1);
                    parent.insert(y, (x, b));
                    tree.insert(b);
                    queue.push_back(y);
                }
            }
        }
    }
    // Sign of traversing tree branch `b` from `x` to its parent.
    let up_sign = |x: &Ident, b: &Ident| if &branches[b].0 == x { 1 } else { -1 };
    let mut loops = Vec::new();
    for (b, (t, h)) in branches {
        if tree.contains(b) {
            continue;
        }
        // t → h along b, then h up to the common ancestor and down to t.
        let mut up = Vec::new();
        let mut down = Vec::new();
        let (mut x, mut y) = (h, t);
        while x != y {
            if depth[x] >= depth[y] {
                let (p, tb) = parent[x];
                up.push((tb.clone(), up_sign(x, tb)));
                x = p;
            } else {
                let (p, tb) = parent[y];
                down.push((tb.clone(), -up_sign(y, tb)));
                y = p;
            }
        }
        let mut branches_in_loop = vec![(b.clone(), 1)];
        branches_in_loop.extend(up);
        branches_in_loop.extend(down.into_iter().rev());
        loops.push(Loop {
            branches: branches_in_loop,
        });
    }
    loops
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// The smaller root wins, so each component's root is its smallest node.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// `*N`: a graph family with hyperreal resistances and sources per branch.
#[derive(Clone, Debug)]
pub struct NsNetwork {
    family: Arc<GraphFamily>,
    branches: BTreeMap<Ident, (Ident, Ident)>,
    resistances: BTreeMap<Ident, SeqDescriptor<f64>>,
    sources: BTreeMap<Ident, SeqDescriptor<f64>>,
}

impl NsNetwork {
    /// Every prototype in use must have the same branches. Branches without
    /// a source descriptor get the zero sequence.
    pub fn new(
        family: GraphFamily,
        resistances: BTreeMap<Ident, SeqDescriptor<f64>>,
        sources: BTreeMap<Ident, SeqDescriptor<f64>>,
    ) -> Result<Self, NetworkError> {
        let used: Vec<u64> = family.used().into_iter().collect();
        let first = &family.prototypes()[used[0] as usize];
        let branches = first.branches();
        for &i in &used[1..] {
            let g = &family.prototypes()[i as usize];
            if g.branches() != branches {
                return Err(NetworkError::BranchMismatch(format!(
                    "{} and {}",
                    first.name(),
                    g.name()
                )));
            }
        }
        if branches.is_empty() {
            return Err(NetworkError::EmptyNetwork);
        }
        for b in branches.keys() {
            if !resistances.contains_key(b) {
                return Err(NetworkError::MissingResistance(b.clone()));
            }
        }
        if let Some(b) = resistances.keys().chain(sources.keys()).find(|b| !branches.contains_key(*b)) {
            return Err(NetworkError::UnknownBranch(b.clone()));
        }
        Ok(NsNetwork {
            family: Arc::new(family),
            branches,
            resistances,
            sources,
        })
    }

    pub fn family(&self) -> &GraphFamily {
        &self.family
    }

    pub fn branches(&self) -> &BTreeMap<Ident, (Ident, Ident)> {
        &self.branches
    }

    pub fn resistance(&self, b: &Ident) -> &SeqDescriptor<f64> {
        &self.resistances[b]
    }

    /// `e_b`, the zero sequence when absent.
    pub fn source(&self, b: &Ident) -> SeqDescriptor<f64> {
        self.sources
            .get(b)
            .cloned()
            .unwrap_or_else(|| SeqDescriptor::constant(0.0))
    }

    fn inputs(&self) -> impl Iterator<Item = SeqDescriptor<f64>> + '_ {
        self.branches
            .keys()
            .flat_map(move |b| [self.resistance(b).clone(), self.source(b)])
    }

    /// Largest index at which every descriptor can be evaluated.
    pub fn horizon(&self) -> u64 {
        self.inputs()
            .map(|s| s.horizon())
            .chain([self.family.assignment().horizon()])
            .min()
            .unwrap_or(u64::MAX)
    }

    /// The joint frame when the assignment and all data are eventually
    /// periodic.
    fn frame(&self) -> Option<Frame> {
        let frames: Option<Vec<Frame>> = self
            .inputs()
            .map(|s| s.frame())
            .chain([self.family.assignment().frame()])
            .collect();
        frames.and_then(Frame::merge_all)
    }

    /// The standard network `N_n`.
    pub fn instantiate(&self, n: u64) -> Result<StandardNetwork, NetworkError> {
        let graph = self.family.graph_at(n)?;
        let mut r = BTreeMap::new();
        let mut e = BTreeMap::new();
        for b in self.branches.keys() {
            r.insert(b.clone(), self.resistance(b).value_at(n)?);
            e.insert(b.clone(), self.source(b).value_at(n)?);
        }
        StandardNetwork::new(graph, r, e)
    }

    pub fn solve_at(&self, n: u64) -> Result<StandardSolution, NetworkError> {
        self.instantiate(n)
            .and_then(|net| solve_standard(&net))
            .map_err(|e| e.at(n))
    }

    /// The same network with every source multiplied by `c`.
    pub fn scaled_sources(&self, c: f64) -> NsNetwork {
        let mut out = self.clone();
        out.sources = self
            .branches
            .keys()
            .map(|b| (b.clone(), self.source(b).map(&format!("{c}·"), move |x| c * x)))
            .collect();
        out
    }

    /// Loops of the common branch set.
    pub fn fundamental_loops(&self) -> Vec<Loop> {
        let nodes = self
            .branches
            .values()
            .flat_map(|(t, h)| [t.clone(), h.clone()])
            .collect();
        fundamental_loops(&nodes, &self.branches)
    }

    fn key(&self) -> String {
        let data: Vec<String> = self
            .branches
            .keys()
            .map(|b| format!("{b}:{}/{}", self.resistance(b).key(), self.source(b).key()))
            .collect();
        format!("{};{}", self.family.assignment().key(), data.join(","))
    }

    /// Hyperreal currents and voltages. Eventually periodic data are solved
    /// over one joint frame and give eventually periodic classes; otherwise
    /// every index up to `min(horizon, self.horizon())` is solved.
    pub fn operating_point(&self, oracle: Arc<FilterOracle>, horizon: u64) -> Result<OperatingPoint, NetworkError> {
        let (solved, frame) = match self.frame() {
            Some(f) => (f.len() - 1, Some(f)),
            None => (self.horizon().min(horizon).min(MAX_FRAME - 1), None),
        };
        let solutions: Vec<StandardSolution> = (0..=solved)
            .into_par_iter()
            .map(|n| self.solve_at(n))
            .collect::<Result<_, _>>()?;
        let solutions = Arc::new(solutions);
        let certificates = if frame.is_none() {
            current_certificates(self)
        } else {
            BTreeMap::new()
        };
        let net_key = self.key();
        let mut currents = BTreeMap::new();
        let mut voltages = BTreeMap::new();
        for b in self.branches.keys() {
            let values: Vec<f64> = solutions.iter().map(|s| s.currents[b]).collect();
            let rep = match frame {
                Some(f) => {
                    let (pre, cyc) = values.split_at(f.prefix as usize);
                    SeqDescriptor::periodic(pre.to_vec(), cyc.to_vec())
                }
                None => {
                    let cf = certificates.get(b).cloned();
                    let label = match cf.as_ref().map(|c| (c, c.collapsed())) {
                        Some((_, Some(single))) => single.to_string(),
                        Some((c, None)) => c.to_string(),
                        None => format!("i[{b}]"),
                    };
                    let values = Arc::new(values);
                    let mut builder = SeqDescriptor::generated(label, solved, move |n| values[n as usize])
                        .key(format!("current({b};{net_key})"));
                    if let Some(cf) = cf {
                        builder = builder.classes(cf);
                    }
                    builder.build()
                }
            };
            let i = Hyperreal::new(rep, oracle.clone());
            let r = Hyperreal::new(self.resistance(b).clone(), oracle.clone());
            let e = Hyperreal::new(self.source(b), oracle.clone());
            let v = r.arith(&i, ArithOp::Mul)?.arith(&e, ArithOp::Sub)?;
            currents.insert(b.clone(), i);
            voltages.insert(b.clone(), v);
        }
        Ok(OperatingPoint {
            network: self.clone(),
            oracle,
            currents,
            voltages,
            solutions,
            frame,
        })
    }
}

/// `i_b` and `v_b` for every branch, with the per-index solutions they were
/// assembled from.
#[derive(Clone, Debug)]
pub struct OperatingPoint {
    network: NsNetwork,
    oracle: Arc<FilterOracle>,
    pub currents: BTreeMap<Ident, Hyperreal>,
    pub voltages: BTreeMap<Ident, Hyperreal>,
    solutions: Arc<Vec<StandardSolution>>,
    frame: Option<Frame>,
}

impl OperatingPoint {
    pub fn network(&self) -> &NsNetwork {
        &self.network
    }

    pub fn oracle(&self) -> &Arc<FilterOracle> {
        &self.oracle
    }

    /// Largest index the classes can be evaluated at; `None` when they are
    /// eventually periodic.
    pub fn horizon(&self) -> Option<u64> {
        match self.frame {
            Some(_) => None,
            None => Some(self.solutions.len() as u64 - 1),
        }
    }

    /// The cached solution of `N_n`.
    pub fn solution(&self, n: u64) -> Option<&StandardSolution> {
        let k = match self.frame {
            Some(f) if n >= f.prefix => f.prefix + (n - f.prefix) % f.period,
            _ => n,
        };
        self.solutions.get(k as usize)
    }

    pub fn resistance(&self, b: &Ident) -> Hyperreal {
        Hyperreal::new(self.network.resistance(b).clone(), self.oracle.clone())
    }

    pub fn source(&self, b: &Ident) -> Hyperreal {
        Hyperreal::new(self.network.source(b), self.oracle.clone())
    }

    /// A copy with `delta` added to every representative value of `i_b`.
    /// Used to check that law verification catches faults.
    pub fn with_current_offset(&self, b: &Ident, delta: f64) -> OperatingPoint {
        let mut out = self.clone();
        if let Some(i) = out.currents.get_mut(b) {
            let rep = i.rep().map(&format!("{delta}+"), move |x| x + delta);
            *i = Hyperreal::new(rep, self.oracle.clone());
        }
        out
    }
}

/// Exact rational currents when every resistance and source is polynomial
/// on each residue class of a common period (constants, polynomial closed
/// forms and eventually periodic rational data). Along one class the mesh
/// equations `Z(n)·J = E(n)` have `det Z` of degree at most `L·d_r` and
/// `i_b·det Z` of degree at most `L·d_r + d_e`, so both are interpolated from
/// that many samples plus one and confirmed at one further index of the class.
fn current_certificates(net: &NsNetwork) -> BTreeMap<Ident, ClassForms> {
    let classes = |s: &SeqDescriptor<f64>| -> Option<ClassForms> {
        s.class_forms().filter(|c| c.forms().iter().all(ClosedForm::is_polynomial))
    };
    let mut r = BTreeMap::new();
    let mut e = BTreeMap::new();
    for b in net.branches.keys() {
        let (Some(rb), Some(eb)) = (classes(net.resistance(b)), classes(&net.source(b))) else {
            return BTreeMap::new();
        };
        r.insert(b.clone(), rb);
        e.insert(b.clone(), eb);
    }
    let all = || r.values().chain(e.values());
    let offset = all().map(ClassForms::offset).max().unwrap_or(0);
    let period = all().map(ClassForms::period).fold(1, num_integer::lcm);
    let align = |m: &BTreeMap<Ident, ClassForms>| -> Option<BTreeMap<Ident, ClassForms>> {
        m.iter().map(|(b, c)| Some((b.clone(), c.aligned(offset, period)?))).collect()
    };
    let (Some(r), Some(e)) = (align(&r), align(&e)) else {
        return BTreeMap::new();
    };
    let degree = |c: &ClassForms| c.forms().iter().map(|f| f.num().degree().unwrap_or(0)).max().unwrap_or(0);
    let dr = r.values().map(degree).max().unwrap_or(0);
    let de = e.values().map(degree).max().unwrap_or(0);
    let loops = net.fundamental_loops();
    let d = loops.len() * dr + de;
    if d > MAX_CERTIFICATE_DEGREE {
        return BTreeMap::new();
    }
    let sample = |n: u64| -> Option<(BigRational, BTreeMap<Ident, BigRational>)> {
        let rv: BTreeMap<&Ident, BigRational> = r.iter().map(|(b, c)| Some((b, c.eval(n)?))).collect::<Option<_>>()?;
        let ev: BTreeMap<&Ident, BigRational> = e.iter().map(|(b, c)| Some((b, c.eval(n)?))).collect::<Option<_>>()?;
        mesh_exact(&loops, net.branches.keys(), &rv, &ev)
    };
    let x = |n: u64| BigRational::from_integer(n.into());
    // Closed forms of every branch current on the class `offset + k + period·m`.
    let class = |k: u64| -> Option<BTreeMap<Ident, ClosedForm>> {
        let points = (0..=d as u64 + 1)
            .map(|m| {
                let n = offset + k + period * m;
                sample(n).map(|(det, num)| (n, det, num))
            })
            .collect::<Option<Vec<_>>>()?;
        let (fit, check) = points.split_at(d + 1);
        let den = Poly::interpolate(&fit.iter().map(|(n, det, _)| (x(*n), det.clone())).collect::<Vec<_>>());
        let (cn, cdet, cnum) = &check[0];
        if den.eval_at(*cn) != *cdet {
            return None;
        }
        net.branches
            .keys()
            .map(|b| {
                let num = Poly::interpolate(&fit.iter().map(|(n, _, nums)| (x(*n), nums[b].clone())).collect::<Vec<_>>());
                if num.eval_at(*cn) != cnum[b] {
                    return None;
                }
                Some((b.clone(), ClosedForm::new(num, den.clone(), offset)?))
            })
            .collect()
    };
    let Some(per_class) = (0..period).map(class).collect::<Option<Vec<_>>>() else {
        return BTreeMap::new();
    };
    let mut out = BTreeMap::new();
    for b in net.branches.keys() {
        let forms = per_class.iter().map(|c| c[b].clone()).collect();
        match ClassForms::new(offset, forms) {
            Some(c) => out.insert(b.clone(), c),
            None => return BTreeMap::new(),
        };
    }
    out
}

/// `det Z` and `i_b·det Z` for every branch, by exact elimination.
fn mesh_exact<'a>(
    loops: &[Loop],
    branches: impl Iterator<Item = &'a Ident>,
    r: &BTreeMap<&Ident, BigRational>,
    e: &BTreeMap<&Ident, BigRational>,
) -> Option<(BigRational, BTreeMap<Ident, BigRational>)> {
    let l = loops.len();
    let sign = |lp: &Loop, b: &Ident| -> i8 {
        lp.branches.iter().filter(|(x, _)| x == b).map(|(_, s)| *s).sum()
    };
    let all: Vec<&Ident> = branches.collect();
    let signs: Vec<Vec<i8>> = loops.iter().map(|lp| all.iter().map(|b| sign(lp, b)).collect()).collect();
    let mut a = vec![vec![BigRational::zero(); l + 1]; l];
    for j in 0..l {
        for k in 0..l {
            for (bi, b) in all.iter().enumerate() {
                let s = signs[j][bi] * signs[k][bi];
                if s != 0 {
                    a[j][k] += &r[b] * BigRational::from_integer(s.into());
                }
            }
        }
        for (bi, b) in all.iter().enumerate() {
            if signs[j][bi] != 0 {
                a[j][l] += &e[b] * BigRational::from_integer(signs[j][bi].into());
            }
        }
    }
    let mut det = BigRational::one();
    for col in 0..l {
        let pivot = (col..l).find(|&row| !a[row][col].is_zero())?;
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= &a[col][col];
        for row in 0..l {
            if row != col && !a[row][col].is_zero() {
                let f = &a[row][col] / &a[col][col];
                for c in col..=l {
                    let delta = &f * &a[col][c];
                    a[row][c] -= delta;
                }
            }
        }
    }
    let mesh: Vec<BigRational> = (0..l).map(|j| &a[j][l] / &a[j][j]).collect();
    let currents = all
        .iter()
        .enumerate()
        .map(|(bi, b)| {
            let i: BigRational = (0..l)
                .filter(|&j| signs[j][bi] != 0)
                .map(|j| &mesh[j] * BigRational::from_integer(signs[j][bi].into()))
                .fold(BigRational::zero(), |acc, x| acc + x);
            ((*b).clone(), i * &det)
        })
        .collect();
    Some((det, currents))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Law {
    #[serde(rename = "KCL")]
    Kcl,
    #[serde(rename = "KVL")]
    Kvl,
    #[serde(rename = "Ohm")]
    Ohm,
    #[serde(rename = "Tellegen")]
    Tellegen,
}

impl Law {
    pub const ALL: [Law; 4] = [Law::Kcl, Law::Kvl, Law::Ohm, Law::Tellegen];
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Law::Kcl => "KCL",
            Law::Kvl => "KVL",
            Law::Ohm => "Ohm",
            Law::Tellegen => "Tellegen",
        })
    }
}

/// A scaled residual above tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub law: Law,
    pub n: u64,
    /// Node, loop or branch where the law fails; empty for Tellegen.
    pub at: String,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawReport {
    /// Indices `0..=horizon` were checked.
    pub horizon: u64,
    /// Set when the requested horizon exceeded the operating point's.
    pub clipped_from: Option<u64>,
    pub tol: f64,
    pub max_residual: BTreeMap<Law, f64>,
    pub failures: Vec<Witness>,
}

impl LawReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn passed_law(&self, law: Law) -> bool {
        !self.failures.iter().any(|w| w.law == law)
    }
}

impl fmt::Display for LawReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "laws checked for n = 0..={} at tol {:e}", self.horizon, self.tol)?;
        if let Some(h) = self.clipped_from {
            write!(f, " (requested {h})")?;
        }
        writeln!(f)?;
        for law in Law::ALL {
            let verdict = if self.passed_law(law) { "pass" } else { "FAIL" };
            writeln!(
                f,
                "  {:<9} max residual {:.3e}  {verdict}",
                law.to_string(),
                self.max_residual.get(&law).copied().unwrap_or(0.0)
            )?;
        }
        const SHOWN: usize = 10;
        for w in self.failures.iter().take(SHOWN) {
            writeln!(f, "  witness: {} n={} {} residual {:.3e}", w.law, w.n, w.at, w.residual)?;
        }
        if self.failures.len() > SHOWN {
            writeln!(f, "  ... {} more witnesses", self.failures.len() - SHOWN)?;
        }
        Ok(())
    }
}

/// KCL at every 0-node, KVL around every fundamental loop, Ohm per branch and
/// Tellegen per index, for `n ≤ horizon`. Residuals are scaled by the largest
/// magnitude involved (at least 1).
pub fn verify_laws(op: &OperatingPoint, horizon: u64, tol: f64) -> Result<LawReport, NetworkError> {
    let net = &op.network;
    let limit = op.horizon().map_or(horizon, |h| h.min(horizon));
    let loops = net.fundamental_loops();
    let per_index: Vec<Vec<Witness>> = (0..=limit)
        .into_par_iter()
        .map(|n| residuals_at(op, &loops, n))
        .collect::<Result<_, _>>()?;
    let mut max_residual: BTreeMap<Law, f64> = Law::ALL.iter().map(|&l| (l, 0.0)).collect();
    let mut failures = Vec::new();
    for w in per_index.into_iter().flatten() {
        let m = max_residual.get_mut(&w.law).expect("all laws");
        *m = m.max(w.residual);
        if !(w.residual <= tol) {
            failures.push(w);
        }
    }
    Ok(LawReport {
        horizon: limit,
        clipped_from: (limit < horizon).then_some(horizon),
        tol,
        max_residual,
        failures,
    })
}

/// Every residual at index `n`, as witnesses.
fn residuals_at(op: &OperatingPoint, loops: &[Loop], n: u64) -> Result<Vec<Witness>, NetworkError> {
    let net = &op.network;
    let nodes = net.family.graph_at(n)?.zero_nodes();
    let mut i = BTreeMap::new();
    let mut v = BTreeMap::new();
    for b in net.branches.keys() {
        i.insert(b, op.currents[b].rep().value_at(n)?);
        v.insert(b, op.voltages[b].rep().value_at(n)?);
    }
    let mut out = Vec::new();
    let witness = |law, at: String, residual| Witness { law, n, at, residual };
    for node in &nodes {
        let (mut sum, mut scale) = (0.0, 1.0f64);
        for (b, (t, h)) in &net.branches {
            if t == node {
                sum += i[b];
            } else if h == node {
                sum -= i[b];
            } else {
                continue;
            }
            scale = scale.max(i[b].abs());
        }
        out.push(witness(Law::Kcl, node.to_string(), sum.abs() / scale));
    }
    for lp in loops {
        let sum: f64 = lp.branches.iter().map(|(b, s)| *s as f64 * v[b]).sum();
        let scale = lp.branches.iter().fold(1.0f64, |m, (b, _)| m.max(v[b].abs()));
        out.push(witness(Law::Kvl, lp.to_string(), sum.abs() / scale));
    }
    for b in net.branches.keys() {
        let r = net.resistance(b).value_at(n)?;
        let e = net.source(b).value_at(n)?;
        let ri = r * i[b];
        let scale = 1.0f64.max(v[b].abs()).max(ri.abs()).max(e.abs());
        out.push(witness(Law::Ohm, b.to_string(), (v[b] - (ri - e)).abs() / scale));
    }
    let power: f64 = net.branches.keys().map(|b| v[b] * i[b]).sum();
    let scale = net.branches.keys().map(|b| (v[b] * i[b]).abs()).sum::<f64>().max(1.0);
    out.push(witness(Law::Tellegen, String::new(), power.abs() / scale));
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::hyperreal::Magnitude;
    use crate::seq::{generators, Traits};

    fn id(s: &str) -> Ident {
        s.parse().unwrap()
    }

    fn net(nodes: &[&str], branches: &[(&str, &str, &str, f64, f64)]) -> StandardNetwork {
        StandardNetwork::from_parts(
            nodes.iter().map(|n| id(n)).collect(),
            branches.iter().map(|(b, t, h, _, _)| (id(b), (id(t), id(h)))).collect(),
            branches.iter().map(|(b, _, _, r, _)| (id(b), *r)).collect(),
            branches.iter().map(|(b, _, _, _, e)| (id(b), *e)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn series_loop() {
        let n = net(&["a", "b"], &[("p", "a", "b", 1.0, 3.0), ("q", "b", "a", 2.0, 0.0)]);
        let s = n.solve().unwrap();
        assert!((s.currents[&id("p")] - 1.0).abs() < 1e-12);
        assert!((s.currents[&id("q")] - 1.0).abs() < 1e-12);
        assert!((s.voltages[&id("q")] - 2.0).abs() < 1e-12);
        assert!((s.voltages[&id("p")] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sources_give_zero() {
        let n = net(
            &["a", "b", "c"],
            &[("p", "a", "b", 1.0, 0.0), ("q", "b", "c", 2.0, 0.0), ("s", "c", "a", 5.0, 0.0)],
        );
        let s = n.solve().unwrap();
        assert!(s.currents.values().chain(s.voltages.values()).all(|&x| x == 0.0));
    }

    #[test]
    fn parallel_pair() {
        // One loop: 2 V over 1 Ω + 1 Ω, so 1 A circulating.
        let n = net(&["a", "b"], &[("p", "a", "b", 1.0, 2.0), ("q", "a", "b", 1.0, 0.0)]);
        let s = n.solve().unwrap();
        assert!((s.currents[&id("p")] - 1.0).abs() < 1e-12);
        assert!((s.currents[&id("q")] + 1.0).abs() < 1e-12);
        assert_eq!(n.fundamental_loops().len(), 1);
    }

    #[test]
    fn errors() {
        let empty = StandardNetwork::from_parts(
            [id("a")].into(),
            BTreeMap::new(),
            BTreeMap::new(),
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(empty.solve(), Err(NetworkError::EmptyNetwork));
        let bad = StandardNetwork::from_parts(
            [id("a"), id("b")].into(),
            [(id("p"), (id("a"), id("b")))].into(),
            [(id("p"), 0.0)].into(),
            BTreeMap::new(),
        );
        assert!(matches!(bad, Err(NetworkError::NonPositiveResistance { .. })));
        let stiff = net(&["a", "b", "c"], &[("p", "a", "b", 1e-9, 1.0), ("q", "b", "c", 1e9, 0.0)]);
        assert!(matches!(stiff.solve(), Err(NetworkError::NumericalFailure { .. })));
    }

    #[test]
    fn disconnected_components() {
        let n = net(
            &["a", "b", "c", "d"],
            &[("p", "a", "b", 1.0, 1.0), ("q", "b", "a", 1.0, 0.0), ("s", "c", "d", 3.0, 6.0)],
        );
        let s = n.solve().unwrap();
        assert!((s.currents[&id("p")] - 0.5).abs() < 1e-12);
        assert!(s.currents[&id("s")].abs() < 1e-12);
        assert_eq!(s.potentials[&id("c")], 0.0);
    }

    fn divider(horizon: u64) -> NsNetwork {
        let g = GraphBuilder::new()
            .zero_nodes(["a", "b"])
            .branch("b1", "a", "b")
            .branch("b2", "b", "a")
            .build("divider", 0);
        let traits = Traits {
            unbounded: true,
            monotone: true,
            ..Traits::default()
        };
        NsNetwork::new(
            GraphFamily::constant(g),
            [
                (id("b1"), SeqDescriptor::constant(1.0)),
                (id("b2"), generators::affine(1.0, 1.0, horizon, traits)),
            ]
            .into(),
            [(id("b1"), SeqDescriptor::constant(1.0))].into(),
        )
        .unwrap()
    }

    #[test]
    fn divider_current_is_infinitesimal() {
        let op = divider(64).operating_point(Arc::new(FilterOracle::new()), 64).unwrap();
        let i = &op.currents[&id("b1")];
        for n in 0..=64u64 {
            let got = i.rep().value_at(n).unwrap();
            assert!((got - 1.0 / (n as f64 + 2.0)).abs() < 1e-14);
        }
        assert_eq!(i.classify_magnitude(), Magnitude::Infinitesimal);
        assert_eq!(i.standard_part().unwrap(), 0.0);
        assert_eq!(i.render(), "⟨1/(n + 2)⟩ :: infinitesimal, st=0");
        let report = verify_laws(&op, 64, 1e-9).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn ohm_identity_holds_as_classes() {
        let op = divider(64).operating_point(Arc::new(FilterOracle::new()), 64).unwrap();
        for b in op.network().branches().keys() {
            let rhs = op
                .resistance(b)
                .mul(&op.currents[b])
                .unwrap()
                .sub(&op.source(b))
                .unwrap();
            assert!(op.voltages[b].hr_eq(&rhs).unwrap());
        }
    }

    #[test]
    fn perturbed_current_fails_kcl_at_endpoints() {
        let op = divider(16).operating_point(Arc::new(FilterOracle::new()), 16).unwrap();
        let bad = op.with_current_offset(&id("b1"), 0.1);
        let report = verify_laws(&bad, 16, 1e-9).unwrap();
        assert!(!report.passed_law(Law::Kcl));
        let at: BTreeSet<&str> = report
            .failures
            .iter()
            .filter(|w| w.law == Law::Kcl)
            .map(|w| w.at.as_str())
            .collect();
        assert_eq!(at, ["a", "b"].into());
    }

    #[test]
    fn verification_clips_to_the_solved_horizon() {
        let op = divider(10).operating_point(Arc::new(FilterOracle::new()), 64).unwrap();
        let report = verify_laws(&op, 64, 1e-9).unwrap();
        assert_eq!(report.horizon, 10);
        assert_eq!(report.clipped_from, Some(64));
    }

    #[test]
    fn periodic_data_stay_periodic() {
        let g = GraphBuilder::new()
            .zero_nodes(["a", "b"])
            .branch("p", "a", "b")
            .branch("q", "b", "a")
            .build("pair", 0);
        let net = NsNetwork::new(
            GraphFamily::constant(g),
            [
                (id("p"), SeqDescriptor::constant(1.0)),
                (id("q"), SeqDescriptor::cycle(vec![1.0, 3.0])),
            ]
            .into(),
            [(id("p"), SeqDescriptor::constant(2.0))].into(),
        )
        .unwrap();
        let op = net.operating_point(Arc::new(FilterOracle::new()), 64).unwrap();
        let p = op.currents[&id("p")].rep().as_periodic().unwrap();
        assert!(p.prefix().is_empty());
        assert_eq!(p.cycle().len(), 2);
        assert!((p.cycle()[0] - 1.0).abs() < 1e-12 && (p.cycle()[1] - 0.5).abs() < 1e-12);
        assert_eq!(op.horizon(), None);
        assert!(verify_laws(&op, 64, 1e-12).unwrap().passed());
        // c_2 = 0 selects the value 1.
        assert_eq!(op.currents[&id("p")].standard_part().ok(), None);
        assert!(op.currents[&id("p")]
            .hr_eq(&Hyperreal::constant(1.0, op.oracle().clone()))
            .unwrap());
    }

    #[test]
    fn scaling_sources_scales_currents() {
        let net = divider(32);
        let oracle = Arc::new(FilterOracle::new());
        let op = net.operating_point(oracle.clone(), 32).unwrap();
        let op3 = net.scaled_sources(3.0).operating_point(oracle, 32).unwrap();
        for n in 0..=32 {
            let a = op.currents[&id("b2")].rep().value_at(n).unwrap();
            let b = op3.currents[&id("b2")].rep().value_at(n).unwrap();
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn mismatched_prototypes_are_rejected() {
        let g1 = GraphBuilder::new().zero_nodes(["a", "b"]).branch("p", "a", "b").build("g1", 0);
        let g2 = GraphBuilder::new().zero_nodes(["a", "b"]).branch("q", "a", "b").build("g2", 0);
        let fam = GraphFamily::new(vec![g1, g2], SeqDescriptor::cycle(vec![0, 1])).unwrap();
        let err = NsNetwork::new(fam, [(id("p"), SeqDescriptor::constant(1.0))].into(), BTreeMap::new());
        assert!(matches!(err, Err(NetworkError::BranchMismatch(_))));
    }

    #[test]
    fn periodic_data_give_per_class_certificates() {
        // One loop: r = 1 + (2n+1) + {1 | 3}, e = 6 + {1 | 0} by parity.
        let g = GraphBuilder::new()
            .zero_nodes(["a", "b", "c"])
            .branch("p", "a", "b")
            .branch("q", "b", "c")
            .branch("s", "c", "a")
            .build("ring", 0);
        let net = NsNetwork::new(
            GraphFamily::constant(g),
            [
                (id("p"), SeqDescriptor::constant(1.0)),
                (id("q"), generators::affine(2.0, 1.0, 64, Traits::default())),
                (id("s"), SeqDescriptor::cycle(vec![3.0, 1.0])),
            ]
            .into(),
            [
                (id("p"), SeqDescriptor::constant(6.0)),
                (id("s"), SeqDescriptor::cycle(vec![0.0, 1.0])),
            ]
            .into(),
        )
        .unwrap();
        let op = net.operating_point(Arc::new(FilterOracle::new()), 64).unwrap();
        let i = &op.currents[&id("q")];
        assert_eq!(i.rep().to_string(), "{3/(n + (5/2)) | (7/2)/(n + (3/2))}");
        for n in 0..=64u64 {
            let want = if n % 2 == 0 { 6.0 / (2.0 * n as f64 + 5.0) } else { 7.0 / (2.0 * n as f64 + 3.0) };
            assert!((i.rep().value_at(n).unwrap() - want).abs() < 1e-14, "n = {n}");
        }
        assert_eq!(i.classify_magnitude(), Magnitude::Infinitesimal);
        assert_eq!(i.standard_part().unwrap(), 0.0);
        // v_q = (2n+1)·i_q tends to 3 on even n and 7/2 on odd n: finite, no
        // single limit.
        let v = &op.voltages[&id("q")];
        assert_eq!(v.classify_magnitude(), Magnitude::Finite);
        assert!(v.standard_part().is_err());
    }
}
