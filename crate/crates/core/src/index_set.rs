//! Subsets of ℕ drawn from a decidable algebra.
//!
//! Finite, cofinite and eventually periodic sets are exact and closed under
//! the Boolean operations. Sampled sets only know membership up to a horizon;
//! they may carry an exact refinement when the sequences that produced them
//! have enough structure to pin the set down.

use std::collections::BTreeSet;
use std::fmt;

use crate::periodic::{self, Frame, MAX_FRAME};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IndexSet {
    /// Exactly the listed naturals.
    Finite(BTreeSet<u64>),
    /// Every natural except the listed ones.
    Cofinite(BTreeSet<u64>),
    /// Neither finite nor cofinite, in canonical form.
    Periodic(PeriodicSet),
    /// Membership known only for `n ≤ horizon`.
    Sampled(SampledSet),
}

/// Canonical `prefix · cycle^ω` membership word. The cycle is never constant;
/// such sets are normalised to [`IndexSet::Finite`] or [`IndexSet::Cofinite`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PeriodicSet {
    prefix: Vec<bool>,
    cycle: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SampledSet {
    bits: Vec<bool>,
    refinement: Option<Box<IndexSet>>,
}

impl PeriodicSet {
    pub fn prefix(&self) -> &[bool] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[bool] {
        &self.cycle
    }
}

impl SampledSet {
    pub fn horizon(&self) -> u64 {
        self.bits.len() as u64 - 1
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn refinement(&self) -> Option<&IndexSet> {
        self.refinement.as_deref()
    }
}

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet::Finite(BTreeSet::new())
    }

    /// All of ℕ.
    pub fn all() -> Self {
        IndexSet::Cofinite(BTreeSet::new())
    }

    pub fn finite(members: impl IntoIterator<Item = u64>) -> Self {
        IndexSet::Finite(members.into_iter().collect())
    }

    pub fn cofinite(excluded: impl IntoIterator<Item = u64>) -> Self {
        IndexSet::Cofinite(excluded.into_iter().collect())
    }

    /// `{n : n ≡ residue (mod modulus)}`.
    pub fn residue(modulus: u64, residue: u64) -> Self {
        assert!(modulus >= 1 && residue < modulus, "residue must lie in 0..modulus");
        let cycle = (0..modulus).map(|r| r == residue).collect();
        IndexSet::periodic(Vec::new(), cycle)
    }

    pub fn evens() -> Self {
        IndexSet::residue(2, 0)
    }

    pub fn odds() -> Self {
        IndexSet::residue(2, 1)
    }

    /// Normalising constructor for `prefix · cycle^ω`.
    pub fn periodic(prefix: Vec<bool>, cycle: Vec<bool>) -> Self {
        let (prefix, cycle) = periodic::canonicalize(prefix, cycle);
        if cycle.len() == 1 {
            let listed = prefix
                .iter()
                .enumerate()
                .filter(|&(_, &b)| b != cycle[0])
                .map(|(n, _)| n as u64);
            if cycle[0] {
                IndexSet::Cofinite(listed.collect())
            } else {
                IndexSet::Finite(listed.collect())
            }
        } else {
            IndexSet::Periodic(PeriodicSet { prefix, cycle })
        }
    }

    /// A window `0..=bits.len()-1` with no exact knowledge beyond it.
    pub fn sampled(bits: Vec<bool>) -> Self {
        IndexSet::sampled_with(bits, None)
    }

    pub fn sampled_with(bits: Vec<bool>, refinement: Option<IndexSet>) -> Self {
        assert!(!bits.is_empty(), "sampled window must contain n = 0");
        let refinement = refinement.and_then(|r| r.into_exact()).map(Box::new);
        IndexSet::Sampled(SampledSet { bits, refinement })
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, IndexSet::Sampled(_))
    }

    /// The exact set this denotes, if known.
    pub fn exact(&self) -> Option<&IndexSet> {
        match self {
            IndexSet::Sampled(s) => s.refinement(),
            other => Some(other),
        }
    }

    fn into_exact(self) -> Option<IndexSet> {
        match self {
            IndexSet::Sampled(s) => s.refinement.map(|b| *b),
            other => Some(other),
        }
    }

    /// Exact membership, or `None` past a sampled horizon without refinement.
    pub fn contains(&self, n: u64) -> Option<bool> {
        match self {
            IndexSet::Finite(s) => Some(s.contains(&n)),
            IndexSet::Cofinite(s) => Some(!s.contains(&n)),
            IndexSet::Periodic(p) => Some(periodic::at(&p.prefix, &p.cycle, n)),
            IndexSet::Sampled(s) => match s.bits.get(n as usize) {
                Some(&b) => Some(b),
                None => s.refinement().and_then(|r| r.contains(n)),
            },
        }
    }

    /// `(prefix, cycle)` membership words for exact sets.
    fn words(&self) -> Option<(Vec<bool>, Vec<bool>)> {
        match self {
            IndexSet::Finite(s) | IndexSet::Cofinite(s) => {
                let inside = matches!(self, IndexSet::Finite(_));
                let len = s.iter().next_back().map_or(0, |m| m + 1) as usize;
                let mut prefix = vec![!inside; len];
                for &m in s {
                    prefix[m as usize] = inside;
                }
                Some((prefix, vec![!inside]))
            }
            IndexSet::Periodic(p) => Some((p.prefix.clone(), p.cycle.clone())),
            IndexSet::Sampled(_) => None,
        }
    }

    /// Membership of all sufficiently large `n` for finite/cofinite sets.
    fn tail(&self) -> Option<bool> {
        match self {
            IndexSet::Finite(_) => Some(false),
            IndexSet::Cofinite(_) => Some(true),
            _ => None,
        }
    }

    fn frame(&self) -> Option<Frame> {
        match self {
            IndexSet::Finite(s) | IndexSet::Cofinite(s) => {
                Some(Frame::new(s.iter().next_back().map_or(0, |m| m + 1) as usize, 1))
            }
            IndexSet::Periodic(p) => Some(Frame::new(p.prefix.len(), p.cycle.len())),
            IndexSet::Sampled(_) => None,
        }
    }

    pub fn horizon(&self) -> Option<u64> {
        match self {
            IndexSet::Sampled(s) => Some(s.horizon()),
            _ => None,
        }
    }

    pub fn complement(&self) -> IndexSet {
        match self {
            IndexSet::Finite(s) => IndexSet::Cofinite(s.clone()),
            IndexSet::Cofinite(s) => IndexSet::Finite(s.clone()),
            IndexSet::Periodic(p) => IndexSet::Periodic(PeriodicSet {
                prefix: p.prefix.iter().map(|b| !b).collect(),
                cycle: p.cycle.iter().map(|b| !b).collect(),
            }),
            IndexSet::Sampled(s) => IndexSet::Sampled(SampledSet {
                bits: s.bits.iter().map(|b| !b).collect(),
                refinement: s.refinement().map(|r| Box::new(r.complement())),
            }),
        }
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &IndexSet) -> IndexSet {
        self.combine(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        self.combine(other, |a, b| a && !b)
    }

    fn combine(&self, other: &IndexSet, op: impl Fn(bool, bool) -> bool + Copy) -> IndexSet {
        if let (Some(ta), Some(tb)) = (self.tail(), other.tail()) {
            // Finite/cofinite pairs: only the listed points can be exceptions.
            let tail = op(ta, tb);
            let listed = |s: &IndexSet| match s {
                IndexSet::Finite(m) | IndexSet::Cofinite(m) => m.clone(),
                _ => unreachable!(),
            };
            let exceptions = listed(self)
                .union(&listed(other))
                .copied()
                .filter(|&n| op(self.contains(n).unwrap(), other.contains(n).unwrap()) != tail)
                .collect();
            return if tail {
                IndexSet::Cofinite(exceptions)
            } else {
                IndexSet::Finite(exceptions)
            };
        }
        if let (Some(fa), Some(fb)) = (self.frame(), other.frame()) {
            return match fa.merge(fb) {
                Some(frame) => {
                    let (pa, ca) = self.words().expect("exact");
                    let (pb, cb) = other.words().expect("exact");
                    let bits: Vec<bool> = (0..frame.len())
                        .map(|n| op(periodic::at(&pa, &ca, n), periodic::at(&pb, &cb, n)))
                        .collect();
                    let (prefix, cycle) = bits.split_at(frame.prefix as usize);
                    IndexSet::periodic(prefix.to_vec(), cycle.to_vec())
                }
                // Too large to materialise: keep a window, admit ignorance.
                None => IndexSet::sampled(
                    (0..MAX_FRAME)
                        .map(|n| op(self.contains(n).unwrap(), other.contains(n).unwrap()))
                        .collect(),
                ),
            };
        }
        let horizon = [self.horizon(), other.horizon()]
            .into_iter()
            .flatten()
            .min()
            .expect("one side is sampled");
        let bits = (0..=horizon)
            .map(|n| op(self.contains(n).unwrap(), other.contains(n).unwrap()))
            .collect();
        let refinement = match (self.exact(), other.exact()) {
            (Some(a), Some(b)) => Some(a.combine(b, op)),
            _ => None,
        };
        IndexSet::sampled_with(bits, refinement)
    }

    /// `Some(true)` when the exact set is empty.
    pub fn is_empty(&self) -> Option<bool> {
        match self.exact()? {
            IndexSet::Finite(s) => Some(s.is_empty()),
            _ => Some(false),
        }
    }

    pub fn is_infinite(&self) -> Option<bool> {
        Some(!matches!(self.exact()?, IndexSet::Finite(_)))
    }

    pub fn is_subset(&self, other: &IndexSet) -> Option<bool> {
        self.exact()?.difference(other.exact()?).is_empty()
    }

    /// Period `P` and the residues `r < P` whose classes lie in the set beyond
    /// its preperiod. These are exactly the data an ultrafilter trace on the
    /// eventually periodic algebra looks at.
    pub fn eventual_residues(&self) -> Option<(u64, Vec<u64>)> {
        match self.exact()? {
            IndexSet::Finite(_) => Some((1, Vec::new())),
            IndexSet::Cofinite(_) => Some((1, vec![0])),
            IndexSet::Periodic(p) => {
                let period = p.cycle.len() as u64;
                let pl = p.prefix.len() as u64;
                let residues = (0..period)
                    .filter(|&r| p.cycle[((r + period - pl % period) % period) as usize])
                    .collect();
                Some((period, residues))
            }
            IndexSet::Sampled(_) => None,
        }
    }

    /// Parseable set-descriptor text, e.g. `evens`, `mod(3,1)`,
    /// `finite(0,1,2)` or `periodic(pre=01,cycle=110)`.
    pub fn to_descriptor(&self) -> String {
        fn list(s: &BTreeSet<u64>) -> String {
            s.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        }
        fn word(bits: &[bool]) -> String {
            bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
        }
        match self {
            IndexSet::Finite(s) if s.is_empty() => "none".to_string(),
            IndexSet::Cofinite(s) if s.is_empty() => "all".to_string(),
            IndexSet::Finite(s) => format!("finite({})", list(s)),
            IndexSet::Cofinite(s) => format!("cofinite({})", list(s)),
            IndexSet::Periodic(p) => {
                let ones: Vec<usize> = (0..p.cycle.len()).filter(|&i| p.cycle[i]).collect();
                if p.prefix.is_empty() && ones.len() == 1 {
                    match (p.cycle.len(), ones[0]) {
                        (2, 0) => "evens".to_string(),
                        (2, 1) => "odds".to_string(),
                        (m, r) => format!("mod({m},{r})"),
                    }
                } else if p.prefix.is_empty() {
                    format!("periodic(cycle={})", word(&p.cycle))
                } else {
                    format!("periodic(pre={},cycle={})", word(&p.prefix), word(&p.cycle))
                }
            }
            IndexSet::Sampled(s) => {
                let members = s.bits.iter().filter(|&&b| b).count();
                match s.refinement() {
                    Some(r) => format!(
                        "sampled(h={},members={}){}",
                        s.horizon(),
                        members,
                        format_args!("~{}", r.to_descriptor())
                    ),
                    None => format!("sampled(h={},members={})", s.horizon(), members),
                }
            }
        }
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_descriptor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalises_constant_cycles() {
        assert_eq!(IndexSet::periodic(vec![true, false], vec![false]), IndexSet::finite([0]));
        assert_eq!(IndexSet::periodic(vec![false], vec![true, true]), IndexSet::cofinite([0]));
        assert_eq!(
            IndexSet::periodic(vec![true, false, true, false], vec![true, false]),
            IndexSet::evens()
        );
    }

    #[test]
    fn boolean_ops_use_common_frame() {
        let m3 = IndexSet::residue(3, 0);
        let both = IndexSet::evens().intersection(&m3);
        assert_eq!(both, IndexSet::residue(6, 0));
        assert_eq!(IndexSet::evens().union(&IndexSet::odds()), IndexSet::all());
        assert_eq!(IndexSet::evens().complement(), IndexSet::odds());
        let tail = IndexSet::cofinite([0, 1, 2]).intersection(&IndexSet::odds());
        assert_eq!(tail.contains(1), Some(false));
        assert_eq!(tail.contains(3), Some(true));
    }

    #[test]
    fn subset_and_finiteness() {
        assert_eq!(IndexSet::residue(4, 2).is_subset(&IndexSet::evens()), Some(true));
        assert_eq!(IndexSet::evens().is_subset(&IndexSet::residue(4, 2)), Some(false));
        assert_eq!(IndexSet::finite([1, 5]).is_infinite(), Some(false));
        assert_eq!(IndexSet::odds().is_infinite(), Some(true));
    }

    #[test]
    fn eventual_residues_respect_prefix_offset() {
        // prefix of length 1, cycle [1,0]: members are 1,3,5,... → odd residue.
        let s = IndexSet::periodic(vec![false], vec![true, false]);
        assert_eq!(s, IndexSet::odds());
        let s = IndexSet::periodic(vec![true], vec![false, false, true]);
        // n ≥ 1: n ∈ S iff (n-1) mod 3 == 2 iff n ≡ 0 mod 3
        assert_eq!(s.eventual_residues(), Some((3, vec![0])));
    }

    #[test]
    fn sampled_sets_keep_refinements() {
        let s = IndexSet::sampled_with(vec![false, true, false], Some(IndexSet::finite([1])));
        assert_eq!(s.contains(1), Some(true));
        assert_eq!(s.contains(100), Some(false));
        assert_eq!(s.complement().exact(), Some(&IndexSet::cofinite([1])));
        let raw = IndexSet::sampled(vec![true, true]);
        assert_eq!(raw.contains(5), None);
        assert_eq!(raw.union(&IndexSet::all()).exact(), None);
        assert_eq!(raw.is_infinite(), None);
    }

    #[test]
    fn descriptor_text() {
        assert_eq!(IndexSet::evens().to_descriptor(), "evens");
        assert_eq!(IndexSet::residue(3, 1).to_descriptor(), "mod(3,1)");
        assert_eq!(IndexSet::finite([0, 2]).to_descriptor(), "finite(0,2)");
        assert_eq!(IndexSet::all().to_descriptor(), "all");
        let p = IndexSet::periodic(vec![false, false], vec![true, true, false]);
        assert_eq!(p.to_descriptor(), "periodic(pre=0,cycle=011)");
    }
}
