//! Hyperreals and hypernaturals: sequences modulo the filter oracle.

use std::fmt;
use std::sync::Arc;

use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::closed_form::{self, ClassForms, ClosedForm, Op};
use crate::index_set::IndexSet;
use crate::oracle::{FilterOracle, Membership, OracleError};
use crate::seq::{SeqDescriptor, SeqValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("division by the zero class")]
    DivisionByZeroClass,
    #[error("no convergence certificate for {0}")]
    NoCertificate(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Infinitesimal,
    Finite,
    Infinite,
    Unknown,
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Magnitude::Infinitesimal => "infinitesimal",
            Magnitude::Finite => "finite",
            Magnitude::Infinite => "infinite",
            Magnitude::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div if b == 0.0 => 0.0,
            ArithOp::Div => a / b,
        }
    }

    fn closed(self) -> Op {
        match self {
            ArithOp::Add => Op::Add,
            ArithOp::Sub => Op::Sub,
            ArithOp::Mul => Op::Mul,
            ArithOp::Div => Op::Div,
        }
    }
}

/// `[x_n]` modulo the oracle.
#[derive(Clone, Debug)]
pub struct Hyperreal {
    rep: SeqDescriptor<f64>,
    oracle: Arc<FilterOracle>,
}

impl Hyperreal {
    pub fn new(rep: SeqDescriptor<f64>, oracle: Arc<FilterOracle>) -> Self {
        Hyperreal { rep, oracle }
    }

    pub fn constant(c: f64, oracle: Arc<FilterOracle>) -> Self {
        Hyperreal::new(SeqDescriptor::constant(c), oracle)
    }

    pub fn rep(&self) -> &SeqDescriptor<f64> {
        &self.rep
    }

    pub fn oracle(&self) -> &Arc<FilterOracle> {
        &self.oracle
    }

    /// The agreement set with `other` and the oracle's verdict on it.
    pub fn eq_decision(&self, other: &Hyperreal) -> Result<(IndexSet, Membership), HyperError> {
        let set = self.rep.agreement_set(&other.rep);
        let verdict = self.oracle.decide(&set)?;
        Ok((set, verdict))
    }

    /// Class equality.
    pub fn hr_eq(&self, other: &Hyperreal) -> Result<bool, HyperError> {
        Ok(self.eq_decision(other)?.1.is_in())
    }

    /// Class order: `{n : x_n < y_n}` decides In.
    pub fn lt(&self, other: &Hyperreal) -> Result<bool, HyperError> {
        let set = self.rep.less_than_set(&other.rep);
        Ok(self.oracle.decide(&set)?.is_in())
    }

    /// Pointwise arithmetic. Division by a zero representative value yields
    /// zero at that index; dividing by the zero class is an error.
    pub fn arith(&self, other: &Hyperreal, op: ArithOp) -> Result<Hyperreal, HyperError> {
        if op == ArithOp::Div {
            let zero = SeqDescriptor::constant(0.0);
            if self.oracle.decide(&other.rep.agreement_set(&zero))?.is_in() {
                return Err(HyperError::DivisionByZeroClass);
            }
        }
        let neutral = match op {
            ArithOp::Add | ArithOp::Sub => 0.0,
            ArithOp::Mul | ArithOp::Div => 1.0,
        };
        if other.rep.as_constant() == Some(&neutral) {
            return Ok(self.clone());
        }
        if op != ArithOp::Sub && op != ArithOp::Div {
            let neutral_left = if op == ArithOp::Add { 0.0 } else { 1.0 };
            if self.rep.as_constant() == Some(&neutral_left) {
                return Ok(Hyperreal::new(other.rep.clone(), self.oracle.clone()));
            }
        }
        let closed = match (self.rep.closed_form(), other.rep.closed_form()) {
            (Some(a), Some(b)) => a.arith(&b, op.closed()),
            _ => None,
        };
        let classes = match closed {
            Some(_) => None,
            None => match (self.rep.class_forms(), other.rep.class_forms()) {
                (Some(a), Some(b)) => a.arith(&b, op.closed()),
                _ => None,
            },
        };
        let rep = self
            .rep
            .zip_with(&other.rep, op.symbol(), closed, move |&a, &b| op.apply(a, b))
            .with_classes(classes);
        Ok(Hyperreal::new(rep, self.oracle.clone()))
    }

    pub fn add(&self, other: &Hyperreal) -> Result<Hyperreal, HyperError> {
        self.arith(other, ArithOp::Add)
    }

    pub fn sub(&self, other: &Hyperreal) -> Result<Hyperreal, HyperError> {
        self.arith(other, ArithOp::Sub)
    }

    pub fn mul(&self, other: &Hyperreal) -> Result<Hyperreal, HyperError> {
        self.arith(other, ArithOp::Mul)
    }

    pub fn div(&self, other: &Hyperreal) -> Result<Hyperreal, HyperError> {
        self.arith(other, ArithOp::Div)
    }

    pub fn classify_magnitude(&self) -> Magnitude {
        match &self.rep {
            SeqDescriptor::Periodic(_) => {
                match self.hr_eq(&Hyperreal::constant(0.0, self.oracle.clone())) {
                    Ok(true) => Magnitude::Infinitesimal,
                    Ok(false) => Magnitude::Finite,
                    Err(_) => Magnitude::Unknown,
                }
            }
            SeqDescriptor::Generated(g) => {
                let growth = |cf: &ClosedForm| match cf.growth() {
                    None => Magnitude::Infinitesimal,
                    Some(d) if d < 0 => Magnitude::Infinitesimal,
                    Some(0) => Magnitude::Finite,
                    Some(_) => Magnitude::Infinite,
                };
                if let Some(cf) = g.closed_form() {
                    return growth(cf);
                }
                if let Some(classes) = g.class_forms() {
                    return match self.selected_class(classes) {
                        Ok(cf) => growth(cf),
                        Err(_) => Magnitude::Unknown,
                    };
                }
                let Ok(report) = self.rep.trait_check() else {
                    return Magnitude::Unknown;
                };
                let verified = |name| report.verified.contains(&name);
                match g.traits().limit {
                    Some(l) if l == 0.0 && verified("limit") && verified("monotone") => {
                        Magnitude::Infinitesimal
                    }
                    Some(_) if verified("limit") => Magnitude::Finite,
                    _ if verified("unbounded") && verified("monotone") => Magnitude::Infinite,
                    _ => Magnitude::Unknown,
                }
            }
        }
    }

    /// The standard part, given a convergence certificate: an eventually
    /// constant representative, a closed form with a finite limit, or a
    /// declared limit with monotonicity verified to the horizon.
    pub fn standard_part(&self) -> Result<f64, HyperError> {
        let no = || HyperError::NoCertificate(self.rep.to_string());
        match &self.rep {
            SeqDescriptor::Periodic(p) if p.cycle().len() == 1 => Ok(p.cycle()[0]),
            SeqDescriptor::Periodic(_) => Err(no()),
            SeqDescriptor::Generated(g) => {
                if let Some(cf) = g.closed_form() {
                    return cf.limit().and_then(|q| q.to_f64()).ok_or_else(no);
                }
                if let Some(classes) = g.class_forms() {
                    return classes.common_limit().and_then(|q| q.to_f64()).ok_or_else(no);
                }
                let limit = g.traits().limit.ok_or_else(no)?;
                let report = self.rep.trait_check().map_err(|_| no())?;
                if report.verified.contains(&"limit") && report.verified.contains(&"monotone") {
                    Ok(limit)
                } else {
                    Err(no())
                }
            }
        }
    }

    /// The form of the residue class the oracle selects.
    fn selected_class<'a>(&self, classes: &'a ClassForms) -> Result<&'a ClosedForm, HyperError> {
        let mut parts: Vec<IndexSet> = (0..classes.period()).map(|k| classes.class_set(k)).collect();
        if classes.offset() > 0 {
            parts.push(IndexSet::finite(0..classes.offset()));
        }
        let k = self.oracle.select_from_partition(&parts)?;
        classes
            .forms()
            .get(k)
            .ok_or_else(|| HyperError::NoCertificate(self.rep.to_string()))
    }

    /// `⟨descriptor⟩ :: class[, st=v]`.
    pub fn render(&self) -> String {
        let mut out = format!("⟨{}⟩ :: {}", self.rep, self.classify_magnitude());
        if let Ok(st) = self.standard_part() {
            out.push_str(&format!(", st={}", fmt_real(st)));
        }
        out
    }
}

impl fmt::Display for Hyperreal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Shortest round-tripping decimal, with `-0` printed as `0`.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Whether a hypernatural equals a constant class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NatClass {
    Standard(u64),
    Nonstandard,
}

/// `[μ_n]` modulo the oracle.
#[derive(Clone, Debug)]
pub struct Hypernatural {
    rep: SeqDescriptor<u64>,
    oracle: Arc<FilterOracle>,
}

impl Hypernatural {
    pub fn new(rep: SeqDescriptor<u64>, oracle: Arc<FilterOracle>) -> Self {
        Hypernatural { rep, oracle }
    }

    pub fn constant(k: u64, oracle: Arc<FilterOracle>) -> Self {
        Hypernatural::new(SeqDescriptor::constant(k), oracle)
    }

    pub fn rep(&self) -> &SeqDescriptor<u64> {
        &self.rep
    }

    pub fn hn_eq(&self, other: &Hypernatural) -> Result<bool, HyperError> {
        Ok(self.oracle.decide(&self.rep.agreement_set(&other.rep))?.is_in())
    }

    /// Standard with its value, or nonstandard (exceeding every constant).
    ///
    /// Periodic representatives are standard: the oracle selects the value
    /// taken on its chosen residue class. A generated representative is
    /// nonstandard when its closed form grows, or when it was verified
    /// injective, or unbounded and monotone, up to its horizon.
    pub fn classify(&self) -> Result<NatClass, HyperError> {
        match &self.rep {
            SeqDescriptor::Periodic(p) => {
                let mut candidates: Vec<u64> = p.cycle().to_vec();
                candidates.dedup();
                for v in candidates {
                    if self.hn_eq(&Hypernatural::constant(v, self.oracle.clone()))? {
                        return Ok(NatClass::Standard(v));
                    }
                }
                unreachable!("a periodic sequence equals one of its cycle values on a large set")
            }
            SeqDescriptor::Generated(g) => {
                if let Some(cf) = g.closed_form() {
                    return match cf.growth() {
                        Some(d) if d > 0 => Ok(NatClass::Nonstandard),
                        Some(0) => cf
                            .limit()
                            .and_then(|q| q.to_u64())
                            .map(NatClass::Standard)
                            .ok_or_else(|| HyperError::NoCertificate(g.label().to_string())),
                        _ => Ok(NatClass::Standard(0)),
                    };
                }
                let report = self
                    .rep
                    .trait_check()
                    .map_err(|_| HyperError::NoCertificate(g.label().to_string()))?;
                let verified = |name| report.verified.contains(&name);
                if verified("injective") || (verified("unbounded") && verified("monotone")) {
                    Ok(NatClass::Nonstandard)
                } else {
                    Err(HyperError::Oracle(OracleError::Undecidable(format!(
                        "standardness of {}",
                        g.label()
                    ))))
                }
            }
        }
    }

    pub fn is_standard(&self) -> Result<bool, HyperError> {
        Ok(matches!(self.classify()?, NatClass::Standard(_)))
    }
}

impl fmt::Display for Hypernatural {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rep {
            SeqDescriptor::Generated(g) => write!(f, "[{}]", g.label()),
            p => write!(f, "[{p}]"),
        }
    }
}

/// Standard part of an exact closed form, for reports.
pub fn closed_limit(cf: &closed_form::ClosedForm) -> Option<f64> {
    cf.limit().and_then(|q| q.to_f64())
}

impl<V: SeqValue> SeqDescriptor<V> {
    /// Lifts a numeric descriptor into the hyperreals.
    pub fn as_hyperreal(&self, oracle: Arc<FilterOracle>) -> Option<Hyperreal> {
        let convert = |v: &V| v.to_f64();
        let rep = match self {
            SeqDescriptor::Periodic(p) => SeqDescriptor::periodic(
                p.prefix().iter().map(convert).collect::<Option<_>>()?,
                p.cycle().iter().map(convert).collect::<Option<_>>()?,
            ),
            SeqDescriptor::Generated(g) => {
                let src = self.clone();
                let mut b = SeqDescriptor::generated(g.label(), g.horizon(), move |n| {
                    src.value_at(n).ok().and_then(|v| v.to_f64()).unwrap_or(f64::NAN)
                })
                .key(g.key())
                .traits(g.traits().clone());
                if let Some(cf) = g.closed_form() {
                    b = b.closed_form(cf.clone());
                }
                b.build()
            }
        };
        Some(Hyperreal::new(rep, oracle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::generators;
    use crate::seq::Traits;

    fn o() -> Arc<FilterOracle> {
        Arc::new(FilterOracle::new())
    }

    #[test]
    fn equality_examples() {
        let c = Hyperreal::constant(3.5, o());
        assert!(c.hr_eq(&c.clone()).unwrap());
        assert!(!Hyperreal::constant(1.0, o()).hr_eq(&Hyperreal::constant(2.0, o())).unwrap());
        let alt = Hyperreal::new(SeqDescriptor::cycle(vec![1.0, 2.0]), o());
        // default tower selects the even residue, where the cycle is 1
        assert!(alt.hr_eq(&Hyperreal::constant(1.0, o())).unwrap());
        let pinned = Arc::new(FilterOracle::new().pinned(IndexSet::odds(), Membership::In).unwrap());
        let alt = Hyperreal::new(SeqDescriptor::cycle(vec![1.0, 2.0]), pinned.clone());
        assert!(alt.hr_eq(&Hyperreal::constant(2.0, pinned)).unwrap());
    }

    #[test]
    fn reciprocal_times_linear() {
        let inv = Hyperreal::new(generators::reciprocal(1.0, 1.0, 64, Traits::default()), o());
        let lin = Hyperreal::new(generators::affine(1.0, 1.0, 64, Traits::default()), o());
        let prod = inv.mul(&lin).unwrap();
        for n in 0..=64 {
            assert!((prod.rep().value_at(n).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(prod.hr_eq(&Hyperreal::constant(1.0, o())).unwrap());
        let zero = Hyperreal::constant(0.0, o());
        assert_eq!(prod.add(&zero).unwrap().rep(), prod.rep());
        let six = Hyperreal::constant(2.0, o()).mul(&Hyperreal::constant(3.0, o())).unwrap();
        assert_eq!(six.rep(), &SeqDescriptor::constant(6.0));
        assert_eq!(
            Hyperreal::constant(1.0, o()).div(&zero).unwrap_err(),
            HyperError::DivisionByZeroClass
        );
    }

    #[test]
    fn magnitude_and_standard_part() {
        let inv = Hyperreal::new(generators::reciprocal(1.0, 1.0, 64, Traits::default()), o());
        assert_eq!(inv.classify_magnitude(), Magnitude::Infinitesimal);
        assert_eq!(inv.standard_part().unwrap(), 0.0);
        assert_eq!(inv.render(), "⟨1/(n+1)⟩ :: infinitesimal, st=0");
        let seven = Hyperreal::constant(7.0, o());
        assert_eq!(seven.classify_magnitude(), Magnitude::Finite);
        assert_eq!(seven.standard_part().unwrap(), 7.0);
        let t = Traits { unbounded: true, monotone: true, ..Traits::default() };
        let n = SeqDescriptor::generated("n", 64, |n| n as f64).traits(t).build();
        assert_eq!(Hyperreal::new(n, o()).classify_magnitude(), Magnitude::Infinite);
        let t = Traits { limit: Some(1.0), monotone: true, ..Traits::default() };
        let near_one = SeqDescriptor::generated("1 + 1/(n+1)", 64, |n| 1.0 + 1.0 / (n as f64 + 1.0))
            .traits(t)
            .build();
        assert_eq!(Hyperreal::new(near_one, o()).standard_part().unwrap(), 1.0);
        let wobble = SeqDescriptor::generated("(-1)^n", 64, |n| if n % 2 == 0 { 1.0 } else { -1.0 }).build();
        assert!(matches!(
            Hyperreal::new(wobble, o()).standard_part(),
            Err(HyperError::NoCertificate(_))
        ));
    }

    #[test]
    fn hypernatural_classes() {
        let t = Traits { unbounded: true, injective: true, ..Traits::default() };
        let n = Hypernatural::new(generators::identity(64, t), o());
        assert_eq!(n.classify().unwrap(), NatClass::Nonstandard);
        let alt = Hypernatural::new(SeqDescriptor::cycle(vec![1, 2]), o());
        assert_eq!(alt.classify().unwrap(), NatClass::Standard(1));
        let plain = SeqDescriptor::generated("mystery", 8, |n| n % 3).build();
        assert!(Hypernatural::new(plain, o()).classify().is_err());
    }

    #[test]
    fn order_on_constants() {
        assert!(Hyperreal::constant(1.0, o()).lt(&Hyperreal::constant(2.0, o())).unwrap());
        assert!(!Hyperreal::constant(2.0, o()).lt(&Hyperreal::constant(2.0, o())).unwrap());
    }
}
