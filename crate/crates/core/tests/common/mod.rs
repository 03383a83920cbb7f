//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsgraph::graph::{FiniteGraph, GraphBuilder, StandardNode, Template};
use nsgraph::seq::SeqDescriptor;
use nsgraph::ultrapower::GraphFamily;
use nsgraph::{FilterOracle, Ident, IndexSet, Membership, Rank, StandardGraph};

pub fn id(s: &str) -> Ident {
    s.parse().unwrap()
}

pub fn oracle() -> Arc<FilterOracle> {
    Arc::new(FilterOracle::new())
}

pub fn pinned(set: IndexSet, v: Membership) -> Arc<FilterOracle> {
    Arc::new(FilterOracle::new().pinned(set, v).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random graph of natural rank `rank` that passes validation: a cycle of
/// 0-nodes with chords, and at each level a random partition of 2–5 tips
/// into nodes, some of which take an unused lower node as exceptional.
pub fn layered(name: &str, rank: u32, seed: u64) -> StandardGraph {
    let mut r = rng(seed);
    let mut g = FiniteGraph::default();
    let k = r.random_range(3..=6);
    let zero: Vec<Ident> = (0..k).map(|i| Ident::indexed("v", i)).collect();
    g.zero_nodes.extend(zero.iter().cloned());
    let mut nb = 0;
    for i in 0..k as usize {
        g.branches.insert(Ident::indexed("b", nb), (zero[i].clone(), zero[(i + 1) % k as usize].clone()));
        nb += 1;
    }
    for _ in 0..r.random_range(0..=4) {
        let a = r.random_range(0..k as usize);
        let b = (a + r.random_range(1..k as usize)) % k as usize;
        g.branches.insert(Ident::indexed("b", nb), (zero[a].clone(), zero[b].clone()));
        nb += 1;
    }
    let mut lower: Vec<Ident> = zero.clone();
    for level in 1..=rank {
        let tips: Vec<Ident> = (0..r.random_range(2..=5u64))
            .map(|i| Ident::new(&format!("t{}x{i}", level - 1)))
            .collect();
        g.tips.insert(level - 1, tips.iter().cloned().collect());
        let groups = r.random_range(1..=tips.len());
        let mut parts: Vec<BTreeSet<Ident>> = vec![BTreeSet::new(); groups];
        for (i, t) in tips.iter().enumerate() {
            let j = if i < groups { i } else { r.random_range(0..groups) };
            parts[j].insert(t.clone());
        }
        let mut nodes = Vec::new();
        for (j, part) in parts.into_iter().enumerate() {
            let exceptional = if !lower.is_empty() && r.random_bool(0.5) {
                let x = r.random_range(0..lower.len());
                Some(lower.swap_remove(x))
            } else {
                None
            };
            nodes.push(StandardNode {
                id: Ident::new(&format!("n{level}x{j}")),
                rank: Rank::Natural(level),
                tips: part,
                exceptional,
            });
        }
        lower.extend(nodes.iter().map(|n| n.id.clone()));
        g.nodes.insert(level, nodes);
    }
    StandardGraph::finite(name, rank, g)
}

/// Rank-3 prototypes whose `top` node has the exceptional element `z`, a
/// 1-node in `g1` and a 2-node in `g2`.
pub fn alternating(k: u32) -> StandardGraph {
    let b = GraphBuilder::new()
        .zero_nodes(["a", "b"])
        .branch("r", "a", "b")
        .tips(0, ["t0", "t1"])
        .tips(1, ["s0", "s1"])
        .tips(2, ["q0", "q1"]);
    let b = if k == 1 {
        b.node(1, "z", ["t0", "t1"], None).node(2, "m2", ["s0", "s1"], None)
    } else {
        b.node(1, "m1", ["t0", "t1"], None).node(2, "z", ["s0", "s1"], None)
    };
    b.node(3, "top", ["q0", "q1"], Some("z")).build(&format!("g{k}"), 3)
}

pub fn alternating_family() -> GraphFamily {
    GraphFamily::new(vec![alternating(1), alternating(2)], SeqDescriptor::cycle(vec![0, 1])).unwrap()
}

pub fn omega_tower() -> StandardGraph {
    StandardGraph::template("tower", Template::Tower { omega: true, window: 4 })
}

/// Rank-1 prototypes over the tips `t0..t{k}` with random node partitions.
pub fn random_rank1(seed: u64, tips: usize) -> StandardGraph {
    let mut r = rng(seed);
    let names: Vec<String> = (0..tips).map(|i| format!("t{i}")).collect();
    let groups = r.random_range(1..=tips);
    let mut order: Vec<usize> = (0..tips).collect();
    order.shuffle(&mut r);
    let mut parts: Vec<Vec<&str>> = vec![Vec::new(); groups];
    for (i, &t) in order.iter().enumerate() {
        let j = if i < groups { i } else { r.random_range(0..groups) };
        parts[j].push(&names[t]);
    }
    let mut b = GraphBuilder::new()
        .zero_nodes(["a", "b"])
        .branch("r", "a", "b")
        .tips(0, names.iter().map(String::as_str));
    for (j, part) in parts.iter().enumerate() {
        b = b.node(1, &format!("m{j}"), part.iter().copied(), None);
    }
    b.build(&format!("p{seed}"), 1)
}

/// A random eventually periodic index set with period at most `max_period`.
pub fn random_set(r: &mut impl Rng, max_period: usize) -> IndexSet {
    let pre = r.random_range(0..=4);
    let period = r.random_range(1..=max_period);
    IndexSet::periodic(
        (0..pre).map(|_| r.random_bool(0.5)).collect(),
        (0..period).map(|_| r.random_bool(0.5)).collect(),
    )
}

/// A random network as node count, `(tail, head)` pairs, resistances and
/// sources.
pub struct RandomNet {
    pub nodes: usize,
    pub branches: Vec<(usize, usize)>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
}

pub fn random_network(r: &mut impl Rng, max_branches: usize) -> RandomNet {
    let nodes = r.random_range(2..=7);
    let count = r.random_range(1..=max_branches);
    let branches = (0..count)
        .map(|_| {
            let a = r.random_range(0..nodes);
            let b = (a + r.random_range(1..nodes)) % nodes;
            (a, b)
        })
        .collect();
    let rv = (0..count).map(|_| r.random_range(0.1..10.0)).collect();
    let ev = (0..count)
        .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random_range(-5.0..5.0) })
        .collect();
    RandomNet { nodes, branches, r: rv, e: ev }
}

impl RandomNet {
    /// Current scale for relative comparisons: the largest reference current
    /// or, when every current vanishes, the largest `|e_b| / r_b`.
    pub fn scale(&self, currents: &[f64]) -> f64 {
        let ratio = self.e.iter().zip(&self.r).map(|(e, r)| (e / r).abs());
        currents.iter().map(|i| i.abs()).chain(ratio).fold(f64::MIN_POSITIVE, f64::max)
    }

    pub fn node(i: usize) -> Ident {
        Ident::indexed("v", i as u64)
    }

    pub fn branch(i: usize) -> Ident {
        Ident::indexed("b", i as u64)
    }

    pub fn standard(&self) -> nsgraph::network::StandardNetwork {
        let nodes = (0..self.nodes).map(Self::node).collect();
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (Self::branch(i), (Self::node(a), Self::node(b))))
            .collect();
        let r = self.r.iter().enumerate().map(|(i, &x)| (Self::branch(i), x)).collect();
        let e = self.e.iter().enumerate().map(|(i, &x)| (Self::branch(i), x)).collect();
        nsgraph::network::StandardNetwork::from_parts(nodes, branches, r, e).unwrap()
    }
}

/// Branch currents by loop analysis: a depth-first spanning forest, one loop
/// per chord, `Z·J = E` solved by Gaussian elimination with partial pivoting.
/// Sources drive current from tail to head.
pub fn brute_mesh(nodes: usize, branches: &[(usize, usize)], r: &[f64], e: &[f64]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); nodes];
    for (k, &(a, b)) in branches.iter().enumerate() {
        adj[a].push((b, k));
        adj[b].push((a, k));
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; nodes];
    let mut seen = vec![false; nodes];
    let mut tree = vec![false; branches.len()];
    for root in 0..nodes {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            for &(y, k) in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    tree[k] = true;
                    parent[y] = Some((x, k));
                    stack.push(y);
                }
            }
        }
    }
    // Sign of stepping from `x` to its parent along the tree branch.
    let up = |x: usize| -> (usize, usize, f64) {
        let (p, k) = parent[x].expect("not a root");
        (p, k, if branches[k] == (x, p) { 1.0 } else { -1.0 })
    };
    let mut loops: Vec<Vec<f64>> = Vec::new();
    for (k, &(a, b)) in branches.iter().enumerate() {
        if tree[k] {
            continue;
        }
        // Chord a → b, tree path b → meet, then meet → a.
        let mut s = vec![0.0; branches.len()];
        s[k] += 1.0;
        let mut above_a = BTreeSet::new();
        let mut x = a;
        above_a.insert(x);
        while parent[x].is_some() {
            x = up(x).0;
            above_a.insert(x);
        }
        let mut x = b;
        while !above_a.contains(&x) {
            let (p, k2, sign) = up(x);
            s[k2] += sign;
            x = p;
        }
        let meet = x;
        let mut x = a;
        while x != meet {
            let (p, k2, sign) = up(x);
            s[k2] -= sign;
            x = p;
        }
        loops.push(s);
    }
    let l = loops.len();
    let mut z = vec![vec![0.0; l + 1]; l];
    for j in 0..l {
        for m in 0..l {
            z[j][m] = (0..branches.len()).map(|k| loops[j][k] * loops[m][k] * r[k]).sum();
        }
        z[j][l] = (0..branches.len()).map(|k| loops[j][k] * e[k]).sum();
    }
    for col in 0..l {
        let piv = (col..l)
            .max_by(|&a, &b| z[a][col].abs().partial_cmp(&z[b][col].abs()).unwrap())
            .unwrap();
        z.swap(col, piv);
        for row in 0..l {
            if row != col {
                let f = z[row][col] / z[col][col];
                for c in col..=l {
                    z[row][c] -= f * z[col][c];
                }
            }
        }
    }
    let j: Vec<f64> = (0..l).map(|i| z[i][l] / z[i][i]).collect();
    (0..branches.len())
        .map(|k| (0..l).map(|m| loops[m][k] * j[m]).sum())
        .collect()
}

/// `(project, command, exit code)` runs with golden reports under
/// `projects/golden/`.
pub const CASES: &[(&str, &str, i32)] = &[
    ("alternating", "validate", 0),
    ("alternating", "build", 0),
    ("alternating", "classify", 0),
    ("alternating", "report", 0),
    ("divider", "validate", 0),
    ("divider", "solve", 0),
    ("divider", "report", 0),
    ("omega_tower", "classify", 0),
    ("omega_tower", "build", 0),
    ("two_graphs", "validate", 0),
    ("ladder2", "validate", 0),
    ("ladder2", "report", 0),
    ("two_graphs", "report", 0),
    ("faults/undeclared_tip", "validate", 2),
    ("faults/shared_tip", "validate", 3),
    ("faults/shared_tip", "build", 3),
    ("faults/sampled_query", "classify", 4),
    ("faults/stiff", "solve", 5),
    ("alternating", "solve", 3),
];
