//! A concrete stand-in for a fixed nonprincipal ultrafilter on ℕ.
//!
//! On the Boolean algebra of eventually periodic sets (modulo finite sets),
//! nonprincipal ultrafilter traces correspond to profinite integers: a
//! compatible choice of residue `c_m` for every modulus `m`. A set with period
//! `P` is large iff the residue class `c_P (mod P)` eventually lies inside it.
//! The default tower is `c_m = 0`; overrides and pins move the chosen point.

use std::fmt;

use num_integer::Integer;
use serde::Serialize;
use thiserror::Error;

use crate::index_set::IndexSet;

/// Largest modulus the pin constraint solver enumerates.
pub const MAX_MODULUS: u64 = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Membership {
    In,
    Out,
}

impl Membership {
    pub fn from_bool(inside: bool) -> Self {
        if inside {
            Membership::In
        } else {
            Membership::Out
        }
    }

    pub fn is_in(self) -> bool {
        self == Membership::In
    }

    pub fn flip(self) -> Self {
        Membership::from_bool(!self.is_in())
    }
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::In => "in",
            Membership::Out => "out",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("undecidable: {0} is sampled with no pin and no exact refinement")]
    Undecidable(String),
    #[error("inconsistent pin {set}={verdict}: {reason}")]
    InconsistentPin {
        set: String,
        verdict: Membership,
        reason: String,
    },
    #[error("incompatible residue tower: {0}")]
    IncompatibleTower(String),
    #[error("not a partition: {0}")]
    NotAPartition(String),
    #[error("residue constraints need modulus {0}, above the supported {MAX_MODULUS}")]
    TooLarge(u128),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pin {
    pub set: IndexSet,
    pub verdict: Membership,
}

/// `x ≡ residue (mod modulus)`: the finite part of the chosen profinite point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Point {
    modulus: u64,
    residue: u64,
}

/// Residue classes mod `modulus` allowed by one pin.
#[derive(Clone, Debug)]
struct Constraint {
    modulus: u64,
    allowed: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct FilterOracle {
    tower: Vec<(u64, u64)>,
    pins: Vec<Pin>,
    constraints: Vec<Constraint>,
    point: Point,
}

impl Default for FilterOracle {
    fn default() -> Self {
        FilterOracle {
            tower: Vec::new(),
            pins: Vec::new(),
            constraints: Vec::new(),
            point: Point {
                modulus: 1,
                residue: 0,
            },
        }
    }
}

impl PartialEq for FilterOracle {
    fn eq(&self, other: &Self) -> bool {
        self.tower == other.tower && self.pins == other.pins
    }
}

impl FilterOracle {
    /// The default oracle: `c_m = 0` for every modulus.
    pub fn new() -> Self {
        Self::default()
    }

    /// An oracle whose tower satisfies `c_m ≡ r (mod m)` for each override.
    pub fn with_tower(overrides: &[(u64, u64)]) -> Result<Self, OracleError> {
        for (i, &(m, r)) in overrides.iter().enumerate() {
            if m == 0 || r >= m {
                return Err(OracleError::IncompatibleTower(format!(
                    "residue {r} is not in 0..{m}"
                )));
            }
            for &(m2, r2) in &overrides[..i] {
                let g = m.gcd(&m2);
                if r % g != r2 % g {
                    return Err(OracleError::IncompatibleTower(format!(
                        "{r} mod {m} and {r2} mod {m2} disagree mod {g}"
                    )));
                }
            }
        }
        let mut oracle = FilterOracle {
            tower: overrides.to_vec(),
            ..Self::default()
        };
        oracle.point = oracle.solve(&[])?;
        Ok(oracle)
    }

    pub fn tower_overrides(&self) -> &[(u64, u64)] {
        &self.tower
    }

    pub fn pins(&self) -> &[Pin] {
        &self.pins
    }

    /// The tower residue `c_m`.
    ///
    /// Built prime power by prime power from the chosen residue `R mod M`:
    /// for `p^k ∥ m`, `c_m ≡ R (mod p^min(k, v_p(M)))` with the higher
    /// `p`-adic digits zero. The choices are compatible across divisibility.
    pub fn tower_residue(&self, m: u64) -> u64 {
        assert!(m >= 1, "modulus must be positive");
        let Point { modulus, residue } = self.point;
        let mut acc_mod: u128 = 1;
        let mut acc_res: u128 = 0;
        for (p, k) in factorize(m) {
            let pk = (p as u128).pow(k);
            let j = valuation(modulus, p).min(k);
            let r = residue as u128 % (p as u128).pow(j);
            // CRT: combine x ≡ acc_res (mod acc_mod) with x ≡ r (mod pk).
            let inv = mod_inverse(acc_mod % pk, pk);
            let t = ((r + pk - acc_res % pk) % pk) * inv % pk;
            acc_res += acc_mod * t;
            acc_mod *= pk;
        }
        acc_res as u64
    }

    /// Decides whether `set` belongs to the ultrafilter.
    pub fn decide(&self, set: &IndexSet) -> Result<Membership, OracleError> {
        if let IndexSet::Sampled(s) = set {
            for pin in &self.pins {
                if let IndexSet::Sampled(p) = &pin.set {
                    if p.bits() == s.bits() {
                        return Ok(pin.verdict);
                    }
                    if p.bits().len() == s.bits().len()
                        && p.bits().iter().zip(s.bits()).all(|(a, b)| a != b)
                    {
                        return Ok(pin.verdict.flip());
                    }
                }
            }
        }
        let exact = set
            .exact()
            .ok_or_else(|| OracleError::Undecidable(set.to_descriptor()))?;
        let (period, residues) = exact.eventual_residues().expect("exact sets have residues");
        let c = self.tower_residue(period);
        Ok(Membership::from_bool(residues.contains(&c)))
    }

    /// Adds a user override. Exact sets become residue constraints on the
    /// tower; sampled sets without refinement are recorded as assumptions.
    pub fn pin(&mut self, set: IndexSet, verdict: Membership) -> Result<(), OracleError> {
        let reject = |reason: &str| OracleError::InconsistentPin {
            set: set.to_descriptor(),
            verdict,
            reason: reason.to_string(),
        };
        match set.exact() {
            Some(exact) => {
                let large = match verdict {
                    Membership::In => exact.clone(),
                    Membership::Out => exact.complement(),
                };
                if large.is_infinite() != Some(true) {
                    return Err(reject(match verdict {
                        Membership::In => "a finite set cannot be large",
                        Membership::Out => "a cofinite set cannot be small",
                    }));
                }
                let (modulus, residues) = large.eventual_residues().expect("exact");
                let mut allowed = vec![false; modulus as usize];
                for r in residues {
                    allowed[r as usize] = true;
                }
                let constraint = Constraint { modulus, allowed };
                let point = self.solve(std::slice::from_ref(&constraint)).map_err(|e| match e {
                    OracleError::InconsistentPin { .. } => reject(
                        "the pinned-in sets and cofinite sets lose the finite intersection property",
                    ),
                    other => other,
                })?;
                self.constraints.push(constraint);
                self.point = point;
            }
            None => {
                let IndexSet::Sampled(s) = &set else { unreachable!() };
                for pin in &self.pins {
                    let IndexSet::Sampled(p) = &pin.set else { continue };
                    let h = p.bits().len().min(s.bits().len());
                    let large = |bits: &[bool], v: Membership| -> Vec<bool> {
                        bits[..h].iter().map(|&b| b == v.is_in()).collect()
                    };
                    let a = large(s.bits(), verdict);
                    let b = large(p.bits(), pin.verdict);
                    if !a.iter().zip(&b).any(|(&x, &y)| x && y) {
                        return Err(reject("disjoint from an existing pin on the sampled window"));
                    }
                }
            }
        }
        self.pins.push(Pin { set, verdict });
        Ok(())
    }

    /// Consuming form of [`FilterOracle::pin`].
    pub fn pinned(mut self, set: IndexSet, verdict: Membership) -> Result<Self, OracleError> {
        self.pin(set, verdict)?;
        Ok(self)
    }

    /// Chooses the residue mod the lcm of all moduli that satisfies every pin
    /// constraint (hard), then as many tower overrides as possible in order,
    /// then is smallest.
    fn solve(&self, extra: &[Constraint]) -> Result<Point, OracleError> {
        let hard: Vec<&Constraint> = self.constraints.iter().chain(extra).collect();
        let modulus = hard
            .iter()
            .map(|c| c.modulus)
            .chain(self.tower.iter().map(|&(m, _)| m))
            .try_fold(1u128, |acc, m| {
                let l = acc.lcm(&(m as u128));
                (l <= MAX_MODULUS as u128).then_some(l).ok_or(OracleError::TooLarge(l))
            })? as u64;
        let mut candidates: Vec<u64> = (0..modulus)
            .filter(|&r| hard.iter().all(|c| c.allowed[(r % c.modulus) as usize]))
            .collect();
        if candidates.is_empty() {
            return Err(OracleError::InconsistentPin {
                set: String::new(),
                verdict: Membership::In,
                reason: "no residue satisfies every pin".into(),
            });
        }
        for &(m, r) in &self.tower {
            let kept: Vec<u64> = candidates.iter().copied().filter(|x| x % m == r).collect();
            if !kept.is_empty() {
                candidates = kept;
            }
        }
        Ok(Point {
            modulus,
            residue: candidates[0],
        })
    }

    /// Index of the unique part decided In.
    pub fn select_from_partition(&self, parts: &[IndexSet]) -> Result<usize, OracleError> {
        if parts.is_empty() {
            return Err(OracleError::NotAPartition("no parts".into()));
        }
        let exact: Vec<&IndexSet> = parts
            .iter()
            .map(|p| p.exact().ok_or_else(|| OracleError::Undecidable(p.to_descriptor())))
            .collect::<Result<_, _>>()?;
        for i in 0..exact.len() {
            for j in 0..i {
                if exact[i].intersection(exact[j]).is_empty() != Some(true) {
                    return Err(OracleError::NotAPartition(format!("parts {j} and {i} overlap")));
                }
            }
        }
        let union = exact.iter().fold(IndexSet::empty(), |acc, p| acc.union(p));
        if union.complement().is_infinite() != Some(false) {
            return Err(OracleError::NotAPartition("the union is not cofinite".into()));
        }
        let chosen: Vec<usize> = exact
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match self.decide(p) {
                Ok(Membership::In) => Some(Ok(i)),
                Ok(Membership::Out) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_, _>>()?;
        match chosen.as_slice() {
            [one] => Ok(*one),
            _ => Err(OracleError::NotAPartition(format!(
                "{} parts decided in",
                chosen.len()
            ))),
        }
    }
}

fn factorize(mut m: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= m {
        if m.is_multiple_of(p) {
            let mut k = 0;
            while m.is_multiple_of(p) {
                m /= p;
                k += 1;
            }
            out.push((p, k));
        }
        p += 1;
    }
    if m > 1 {
        out.push((m, 1));
    }
    out
}

fn valuation(mut m: u64, p: u64) -> u32 {
    let mut k = 0;
    while m.is_multiple_of(p) {
        m /= p;
        k += 1;
    }
    k
}

fn mod_inverse(a: u128, m: u128) -> u128 {
    if m == 1 {
        return 0;
    }
    let ext = (a as i128).extended_gcd(&(m as i128));
    debug_assert_eq!(ext.gcd, 1);
    ext.x.rem_euclid(m as i128) as u128
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_sets_are_small_cofinite_sets_large() {
        let o = FilterOracle::new();
        assert_eq!(o.decide(&IndexSet::finite(0..10)).unwrap(), Membership::Out);
        assert_eq!(o.decide(&IndexSet::all()).unwrap(), Membership::In);
        assert_eq!(o.decide(&IndexSet::cofinite([0, 7])).unwrap(), Membership::In);
    }

    #[test]
    fn default_tower_prefers_multiples() {
        let o = FilterOracle::new();
        assert_eq!(o.decide(&IndexSet::evens()).unwrap(), Membership::In);
        assert_eq!(o.decide(&IndexSet::odds()).unwrap(), Membership::Out);
        // A prefix does not change the eventual residue.
        let shifted = IndexSet::periodic(vec![true, true, true], vec![false, true]);
        assert_eq!(o.decide(&shifted).unwrap(), Membership::In);
        assert_eq!(shifted.contains(3), Some(false));
        assert_eq!(shifted.contains(4), Some(true));
    }

    #[test]
    fn pin_odds_flips_evens() {
        let o = FilterOracle::new().pinned(IndexSet::odds(), Membership::In).unwrap();
        assert_eq!(o.decide(&IndexSet::evens()).unwrap(), Membership::Out);
        // Refinements of odds stay coherent: exactly one of 1,3 mod 4 is large.
        let a = o.decide(&IndexSet::residue(4, 1)).unwrap();
        let b = o.decide(&IndexSet::residue(4, 3)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn inconsistent_pins_are_rejected() {
        let mut o = FilterOracle::new();
        assert!(matches!(
            o.pin(IndexSet::finite([0, 1, 2]), Membership::In),
            Err(OracleError::InconsistentPin { .. })
        ));
        o.pin(IndexSet::evens(), Membership::In).unwrap();
        assert!(matches!(
            o.pin(IndexSet::odds(), Membership::In),
            Err(OracleError::InconsistentPin { .. })
        ));
        assert!(matches!(
            o.pin(IndexSet::all(), Membership::Out),
            Err(OracleError::InconsistentPin { .. })
        ));
        // The rejected pins left the oracle untouched.
        assert_eq!(o.pins().len(), 1);
        assert_eq!(o.decide(&IndexSet::evens()).unwrap(), Membership::In);
    }

    #[test]
    fn tower_overrides_are_compatible() {
        let o = FilterOracle::with_tower(&[(2, 1), (3, 2)]).unwrap();
        assert_eq!(o.tower_residue(2), 1);
        assert_eq!(o.tower_residue(3), 2);
        assert_eq!(o.tower_residue(6), 5);
        assert_eq!(o.tower_residue(4) % 2, 1);
        assert_eq!(o.tower_residue(5), 0);
        for m in 1..=60u64 {
            for d in 1..=m {
                if m % d == 0 {
                    assert_eq!(o.tower_residue(m) % d, o.tower_residue(d), "m={m} d={d}");
                }
            }
        }
        assert!(FilterOracle::with_tower(&[(2, 1), (4, 2)]).is_err());
    }

    #[test]
    fn sampled_sets_need_pins_or_refinements() {
        let mut o = FilterOracle::new();
        let s = IndexSet::sampled(vec![true, false, true]);
        assert!(matches!(o.decide(&s), Err(OracleError::Undecidable(_))));
        o.pin(s.clone(), Membership::In).unwrap();
        assert_eq!(o.decide(&s).unwrap(), Membership::In);
        assert_eq!(o.decide(&s.complement()).unwrap(), Membership::Out);
        let refined = IndexSet::sampled_with(vec![false; 4], Some(IndexSet::finite([9])));
        assert_eq!(o.decide(&refined).unwrap(), Membership::Out);
    }

    #[test]
    fn partitions() {
        let o = FilterOracle::new();
        assert_eq!(o.select_from_partition(&[IndexSet::evens(), IndexSet::odds()]).unwrap(), 0);
        assert_eq!(o.select_from_partition(&[IndexSet::all()]).unwrap(), 0);
        let thirds: Vec<_> = (0..3).map(|r| IndexSet::residue(3, r)).collect();
        assert_eq!(o.select_from_partition(&thirds).unwrap(), 0);
        assert!(matches!(
            o.select_from_partition(&[IndexSet::evens(), IndexSet::residue(4, 0)]),
            Err(OracleError::NotAPartition(_))
        ));
        assert!(matches!(
            o.select_from_partition(&[IndexSet::residue(3, 0), IndexSet::residue(3, 1)]),
            Err(OracleError::NotAPartition(_))
        ));
        let pinned = o.pinned(IndexSet::residue(3, 2), Membership::In).unwrap();
        assert_eq!(pinned.select_from_partition(&thirds).unwrap(), 2);
    }
}
