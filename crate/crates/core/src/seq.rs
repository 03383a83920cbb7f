//! Finite descriptors of infinite sequences indexed by `n ∈ ℕ`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::closed_form::{self, Agreement, ClassForms, ClosedForm, Poly};
use crate::index_set::IndexSet;
use crate::periodic::{self, Frame, MAX_FRAME};

/// Values a sequence may take.
pub trait SeqValue: Clone + PartialEq + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Exact rational value, for numeric types.
    fn to_rational(&self) -> Option<BigRational> {
        None
    }

    fn to_f64(&self) -> Option<f64> {
        None
    }
}

/// Numeric values the named generators can produce.
pub trait Numeric: SeqValue {
    fn from_f64(x: f64) -> Self;
}

impl SeqValue for f64 {
    fn to_rational(&self) -> Option<BigRational> {
        BigRational::from_float(*self)
    }

    fn to_f64(&self) -> Option<f64> {
        Some(*self)
    }
}

impl SeqValue for String {}

impl Numeric for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl SeqValue for u64 {
    fn to_rational(&self) -> Option<BigRational> {
        Some(BigRational::from_integer((*self).into()))
    }

    fn to_f64(&self) -> Option<f64> {
        Some(*self as f64)
    }
}

impl Numeric for u64 {
    fn from_f64(x: f64) -> Self {
        x.round().max(0.0) as u64
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeqError {
    #[error("index {n} is beyond the horizon {horizon} of {label}")]
    BeyondHorizon { label: String, n: u64, horizon: u64 },
    #[error("declared trait `{name}` fails at n = {witness}: {detail}")]
    TraitViolated {
        name: &'static str,
        witness: u64,
        detail: String,
    },
}

/// Declared properties of a generated sequence. They are trusted after a
/// spot check up to the horizon.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Traits {
    /// Injective beyond some index.
    pub injective: bool,
    pub unbounded: bool,
    pub monotone: bool,
    /// Declared limit.
    pub limit: Option<f64>,
}

impl Traits {
    pub fn is_empty(&self) -> bool {
        *self == Traits::default()
    }
}

impl fmt::Display for Traits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.injective, "injective"),
            (self.unbounded, "unbounded"),
            (self.monotone, "monotone"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        f.write_str(&names.join(","))
    }
}

/// Canonical `prefix · cycle^ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSeq<V> {
    prefix: Vec<V>,
    cycle: Vec<V>,
}

impl<V: SeqValue> PeriodicSeq<V> {
    pub fn prefix(&self) -> &[V] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[V] {
        &self.cycle
    }

    fn frame(&self) -> Frame {
        Frame::new(self.prefix.len(), self.cycle.len())
    }
}

pub type Evaluator<V> = Arc<dyn Fn(u64) -> V + Send + Sync>;

/// A sequence given by an evaluator valid for `n ≤ horizon`.
#[derive(Clone)]
pub struct Generated<V> {
    label: Arc<str>,
    key: Arc<str>,
    eval: Evaluator<V>,
    traits: Traits,
    horizon: u64,
    closed: Option<ClosedForm>,
    classes: Option<ClassForms>,
}

impl<V> Generated<V> {
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Structural identity: equal keys denote the same function of `n`.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn traits(&self) -> &Traits {
        &self.traits
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn closed_form(&self) -> Option<&ClosedForm> {
        self.closed.as_ref()
    }

    /// Closed forms per residue class, when no single one is known.
    pub fn class_forms(&self) -> Option<&ClassForms> {
        self.classes.as_ref()
    }
}

impl<V> fmt::Debug for Generated<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generated")
            .field("label", &self.label)
            .field("key", &self.key)
            .field("traits", &self.traits)
            .field("horizon", &self.horizon)
            .field("closed", &self.closed.as_ref().map(|c| c.to_string()))
            .field("classes", &self.classes.as_ref().map(|c| c.to_string()))
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum SeqDescriptor<V> {
    Periodic(PeriodicSeq<V>),
    Generated(Generated<V>),
}

impl<V: SeqValue> PartialEq for SeqDescriptor<V> {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SeqDescriptor::Periodic(a), SeqDescriptor::Periodic(b)) => a == b,
            (SeqDescriptor::Generated(a), SeqDescriptor::Generated(b)) => {
                a.key == b.key && a.horizon == b.horizon && a.traits == b.traits
            }
            _ => false,
        }
    }
}

/// Builder for generated descriptors.
pub struct GeneratedBuilder<V> {
    inner: Generated<V>,
}

impl<V: SeqValue> GeneratedBuilder<V> {
    pub fn traits(mut self, traits: Traits) -> Self {
        self.inner.traits = traits;
        self
    }

    pub fn closed_form(mut self, cf: ClosedForm) -> Self {
        self.inner.closed = Some(cf);
        self
    }

    /// Attaches per-class forms; a single shared form becomes the closed form.
    pub fn classes(mut self, cf: ClassForms) -> Self {
        match cf.collapsed() {
            Some(single) => self.inner.closed = Some(single.clone().from_index(cf.offset())),
            None => self.inner.classes = Some(cf),
        }
        self
    }

    pub fn key(mut self, key: impl Into<Arc<str>>) -> Self {
        self.inner.key = key.into();
        self
    }

    pub fn build(self) -> SeqDescriptor<V> {
        SeqDescriptor::Generated(self.inner)
    }
}

impl<V: SeqValue> SeqDescriptor<V> {
    pub fn constant(v: V) -> Self {
        Self::periodic(Vec::new(), vec![v])
    }

    pub fn cycle(cycle: Vec<V>) -> Self {
        Self::periodic(Vec::new(), cycle)
    }

    /// Canonicalising constructor. Panics on an empty cycle.
    pub fn periodic(prefix: Vec<V>, cycle: Vec<V>) -> Self {
        let (prefix, cycle) = periodic::canonicalize(prefix, cycle);
        SeqDescriptor::Periodic(PeriodicSeq { prefix, cycle })
    }

    /// A generated sequence whose key is its label.
    pub fn generated(
        label: impl Into<Arc<str>>,
        horizon: u64,
        eval: impl Fn(u64) -> V + Send + Sync + 'static,
    ) -> GeneratedBuilder<V> {
        let label = label.into();
        GeneratedBuilder {
            inner: Generated {
                key: label.clone(),
                label,
                eval: Arc::new(eval),
                traits: Traits::default(),
                horizon,
                closed: None,
                classes: None,
            },
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, SeqDescriptor::Periodic(_))
    }

    pub fn as_periodic(&self) -> Option<&PeriodicSeq<V>> {
        match self {
            SeqDescriptor::Periodic(p) => Some(p),
            SeqDescriptor::Generated(_) => None,
        }
    }

    pub fn as_generated(&self) -> Option<&Generated<V>> {
        match self {
            SeqDescriptor::Generated(g) => Some(g),
            SeqDescriptor::Periodic(_) => None,
        }
    }

    /// The constant value, if the sequence is constant.
    pub fn as_constant(&self) -> Option<&V> {
        match self {
            SeqDescriptor::Periodic(p) if p.prefix.is_empty() && p.cycle.len() == 1 => {
                Some(&p.cycle[0])
            }
            _ => None,
        }
    }

    /// Prefix length and period for periodic descriptors.
    pub(crate) fn frame(&self) -> Option<Frame> {
        self.as_periodic().map(PeriodicSeq::frame)
    }

    /// Last index for which `value_at` succeeds (`u64::MAX` when unbounded).
    pub fn horizon(&self) -> u64 {
        match self {
            SeqDescriptor::Periodic(_) => u64::MAX,
            SeqDescriptor::Generated(g) => g.horizon,
        }
    }

    pub fn value_at(&self, n: u64) -> Result<V, SeqError> {
        match self {
            SeqDescriptor::Periodic(p) => Ok(periodic::at(&p.prefix, &p.cycle, n)),
            SeqDescriptor::Generated(g) if n <= g.horizon => Ok((g.eval)(n)),
            SeqDescriptor::Generated(g) => Err(SeqError::BeyondHorizon {
                label: g.label.to_string(),
                n,
                horizon: g.horizon,
            }),
        }
    }

    /// Values at `0..=horizon`, clamped to the descriptor's own horizon.
    pub fn values(&self, horizon: u64) -> Vec<V> {
        (0..=horizon.min(self.horizon()))
            .map(|n| self.value_at(n).expect("within horizon"))
            .collect()
    }

    /// A rational closed form valid eventually, when known.
    pub fn closed_form(&self) -> Option<ClosedForm> {
        match self {
            SeqDescriptor::Periodic(p) if p.cycle.len() == 1 => Some(
                ClosedForm::constant(p.cycle[0].to_rational()?).from_index(p.prefix.len() as u64),
            ),
            SeqDescriptor::Periodic(_) => None,
            SeqDescriptor::Generated(g) => g.closed.clone(),
        }
    }

    /// Closed forms per residue class: the cycle of a periodic descriptor
    /// with rational values, or a generated descriptor's forms.
    pub fn class_forms(&self) -> Option<ClassForms> {
        match self {
            SeqDescriptor::Periodic(p) => {
                let forms = p
                    .cycle
                    .iter()
                    .map(|v| v.to_rational().map(ClosedForm::constant))
                    .collect::<Option<Vec<_>>>()?;
                ClassForms::new(p.prefix.len() as u64, forms)
            }
            SeqDescriptor::Generated(g) => g
                .classes
                .clone()
                .or_else(|| g.closed.clone().map(ClassForms::single)),
        }
    }

    /// Attaches per-class forms to a generated descriptor; periodic ones are
    /// returned unchanged.
    pub fn with_classes(self, cf: Option<ClassForms>) -> Self {
        match (self, cf) {
            (SeqDescriptor::Generated(g), Some(cf)) if g.closed.is_none() => {
                GeneratedBuilder { inner: g }.classes(cf).build()
            }
            (s, _) => s,
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    /// The set `{n : a_n = b_n}`.
    ///
    /// Two periodic operands give an exact set. A generated operand gives a
    /// sampled set over the common horizon, refined exactly when both sides
    /// share a structural key or have rational closed forms.
    pub fn agreement_set(&self, other: &SeqDescriptor<V>) -> IndexSet {
        self.pointwise_set(other, |a, b| a == b, Relation::Equal)
    }

    fn pointwise_set(
        &self,
        other: &SeqDescriptor<V>,
        pred: impl Fn(&V, &V) -> bool,
        relation: Relation,
    ) -> IndexSet {
        if let (SeqDescriptor::Periodic(a), SeqDescriptor::Periodic(b)) = (self, other) {
            return match a.frame().merge(b.frame()) {
                Some(frame) => {
                    let bits: Vec<bool> = (0..frame.len())
                        .map(|n| {
                            pred(
                                &periodic::at(&a.prefix, &a.cycle, n),
                                &periodic::at(&b.prefix, &b.cycle, n),
                            )
                        })
                        .collect();
                    let (prefix, cycle) = bits.split_at(frame.prefix as usize);
                    IndexSet::periodic(prefix.to_vec(), cycle.to_vec())
                }
                None => IndexSet::sampled(
                    (0..MAX_FRAME)
                        .map(|n| pred(&self.value_at(n).unwrap(), &other.value_at(n).unwrap()))
                        .collect(),
                ),
            };
        }
        let horizon = self.horizon().min(other.horizon());
        let bits: Vec<bool> = (0..=horizon)
            .map(|n| pred(&self.value_at(n).unwrap(), &other.value_at(n).unwrap()))
            .collect();
        let refinement = self.refine(other, &bits, relation);
        IndexSet::sampled_with(bits, refinement)
    }

    fn refine(&self, other: &SeqDescriptor<V>, bits: &[bool], relation: Relation) -> Option<IndexSet> {
        if let (SeqDescriptor::Generated(a), SeqDescriptor::Generated(b)) = (self, other) {
            if a.key == b.key {
                return Some(match relation {
                    Relation::Equal => IndexSet::all(),
                    Relation::Less => IndexSet::empty(),
                });
            }
        }
        let observed = bits.len() as u64;
        // A periodic operand is split into residue classes on which it is
        // constant; the generated side must then have a closed form.
        let (gen_cf, other_side, flipped) = match (self.closed_form(), other.closed_form()) {
            (Some(a), Some(b)) => {
                return refine_closed(&a, &ClassValues::Constant(b), bits, relation, false);
            }
            (Some(a), None) => (a, other, false),
            (None, Some(b)) => (b, self, true),
            (None, None) => return None,
        };
        let p = other_side.as_periodic()?;
        let values = p
            .cycle
            .iter()
            .map(|v| v.to_rational())
            .collect::<Option<Vec<_>>>()?;
        let classes = ClassValues::Periodic {
            offset: p.prefix.len() as u64,
            values,
        };
        debug_assert!(observed > 0);
        refine_closed(&gen_cf, &classes, bits, relation, flipped)
    }

    /// `{n : a_n < b_n}` for numeric sequences, refined like
    /// [`SeqDescriptor::agreement_set`].
    pub fn less_than_set(&self, other: &SeqDescriptor<V>) -> IndexSet {
        self.pointwise_set(
            other,
            |a, b| match (a.to_f64(), b.to_f64()) {
                (Some(x), Some(y)) => x < y,
                _ => false,
            },
            Relation::Less,
        )
    }

    /// Pointwise image under `f`.
    pub fn map<W: SeqValue>(
        &self,
        op: &str,
        f: impl Fn(&V) -> W + Send + Sync + 'static,
    ) -> SeqDescriptor<W> {
        match self {
            SeqDescriptor::Periodic(p) => SeqDescriptor::periodic(
                p.prefix.iter().map(&f).collect(),
                p.cycle.iter().map(&f).collect(),
            ),
            SeqDescriptor::Generated(g) => {
                let eval = g.eval.clone();
                SeqDescriptor::generated(format!("{op}({})", g.label), g.horizon, move |n| {
                    f(&eval(n))
                })
                .key(format!("{op}({})", g.key))
                .build()
            }
        }
    }

    /// Pointwise combination. Periodic operands stay periodic (over the
    /// common frame); otherwise the result is generated with the smaller
    /// horizon and a key composed from both keys.
    pub fn zip_with<W: SeqValue, U: SeqValue>(
        &self,
        other: &SeqDescriptor<W>,
        op: &str,
        closed: Option<ClosedForm>,
        f: impl Fn(&V, &W) -> U + Send + Sync + 'static,
    ) -> SeqDescriptor<U> {
        if let (SeqDescriptor::Periodic(a), SeqDescriptor::Periodic(b)) = (self, other) {
            if let Some(frame) = a.frame().merge(Frame::new(b.prefix.len(), b.cycle.len())) {
                let vals: Vec<U> = (0..frame.len())
                    .map(|n| {
                        f(
                            &periodic::at(&a.prefix, &a.cycle, n),
                            &periodic::at(&b.prefix, &b.cycle, n),
                        )
                    })
                    .collect();
                let (prefix, cycle) = vals.split_at(frame.prefix as usize);
                return SeqDescriptor::periodic(prefix.to_vec(), cycle.to_vec());
            }
        }
        let horizon = self.horizon().min(other.horizon());
        let label = format!("{} {op} {}", self.label_atom(), other.label_atom());
        let key = format!("({} {op} {})", self.key(), other.key());
        let (a, b) = (self.clone(), other.clone());
        let mut builder = SeqDescriptor::generated(label, horizon, move |n| {
            f(&a.value_at(n).expect("within horizon"), &b.value_at(n).expect("within horizon"))
        })
        .key(key);
        if let Some(cf) = closed {
            builder = builder.closed_form(cf);
        }
        builder.build()
    }

    fn label_atom(&self) -> String {
        match self {
            SeqDescriptor::Periodic(_) => match self.as_constant() {
                Some(v) => v.to_string(),
                None => format!("[{self}]"),
            },
            SeqDescriptor::Generated(g) if g.label.contains([' ', '+', '-', '*', '/']) => {
                format!("({})", g.label)
            }
            SeqDescriptor::Generated(g) => g.label.to_string(),
        }
    }

    /// Structural key used to recognise identical generated functions.
    pub fn key(&self) -> String {
        match self {
            SeqDescriptor::Periodic(_) => format!("[{self}]"),
            SeqDescriptor::Generated(g) => g.key.to_string(),
        }
    }

    /// Checks declared traits exhaustively up to the horizon.
    pub fn trait_check(&self) -> Result<TraitReport<V>, SeqError> {
        match self {
            SeqDescriptor::Periodic(p) => {
                let mut values: Vec<V> = Vec::new();
                for v in p.prefix.iter().chain(&p.cycle) {
                    if !values.contains(v) {
                        values.push(v.clone());
                    }
                }
                let mut recurring: Vec<V> = Vec::new();
                for v in &p.cycle {
                    if !recurring.contains(v) {
                        recurring.push(v.clone());
                    }
                }
                Ok(TraitReport {
                    finite_values: Some(recurring),
                    verified: Vec::new(),
                    horizon: None,
                })
            }
            SeqDescriptor::Generated(g) => check_generated(g).map(|verified| TraitReport {
                finite_values: None,
                verified,
                horizon: Some(g.horizon),
            }),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Relation {
    Equal,
    Less,
}

enum ClassValues {
    Constant(ClosedForm),
    /// Value `values[(n - offset) mod P]` for `n ≥ offset`.
    Periodic { offset: u64, values: Vec<BigRational> },
}

/// Exact version of a sampled comparison between a closed form and either
/// another closed form or a sequence that is constant on residue classes.
/// Returns `None` when the settling index lies beyond the sampled window.
fn refine_closed(
    cf: &ClosedForm,
    other: &ClassValues,
    bits: &[bool],
    relation: Relation,
    flipped: bool,
) -> Option<IndexSet> {
    let targets: Vec<ClosedForm> = match other {
        ClassValues::Constant(c) => vec![c.clone()],
        ClassValues::Periodic { values, .. } => {
            values.iter().cloned().map(ClosedForm::constant).collect()
        }
    };
    let (offset, period) = match other {
        ClassValues::Constant(_) => (0, 1),
        ClassValues::Periodic { offset, values } => (*offset, values.len() as u64),
    };
    // For each class: eventual verdict and the index after which it holds.
    let mut tail = Vec::with_capacity(targets.len());
    let mut settle = offset;
    for t in &targets {
        let (verdict, from) = match relation {
            Relation::Equal => match cf.agreement(t)? {
                Agreement::Cofinite { from } => (true, from),
                Agreement::Finite { from, roots } => {
                    (false, roots.last().map_or(from, |r| (r + 1).max(from)))
                }
            },
            Relation::Less => {
                let (ord, from) = cf.eventual_cmp(t)?;
                let less = if flipped {
                    ord == std::cmp::Ordering::Greater
                } else {
                    ord == std::cmp::Ordering::Less
                };
                (less, from + 1)
            }
        };
        tail.push(verdict);
        settle = settle.max(from);
    }
    if settle > bits.len() as u64 {
        return None;
    }
    let start = settle as usize;
    let prefix = bits[..start].to_vec();
    let cycle = (0..period)
        .map(|i| tail[((settle + i - offset) % period) as usize])
        .collect();
    Some(IndexSet::periodic(prefix, cycle))
}

fn check_generated<V: SeqValue>(g: &Generated<V>) -> Result<Vec<&'static str>, SeqError> {
    let values: Vec<V> = (0..=g.horizon).map(|n| (g.eval)(n)).collect();
    let t = &g.traits;
    let mut verified = Vec::new();
    let numeric = |name: &'static str| -> Result<Vec<f64>, SeqError> {
        values
            .iter()
            .enumerate()
            .map(|(n, v)| {
                v.to_f64().ok_or(SeqError::TraitViolated {
                    name,
                    witness: n as u64,
                    detail: format!("value {v} is not numeric"),
                })
            })
            .collect()
    };
    if t.injective {
        let mut seen: HashMap<String, u64> = HashMap::new();
        for (n, v) in values.iter().enumerate() {
            if let Some(m) = seen.insert(format!("{v:?}"), n as u64) {
                return Err(SeqError::TraitViolated {
                    name: "injective",
                    witness: n as u64,
                    detail: format!("repeats the value {v} taken at n = {m}"),
                });
            }
        }
        verified.push("injective");
    }
    if t.monotone {
        let xs = numeric("monotone")?;
        let up = xs.windows(2).all(|w| w[0] <= w[1]);
        let down = xs.windows(2).all(|w| w[0] >= w[1]);
        if !up && !down {
            let witness = (1..xs.len())
                .find(|&i| {
                    let inc = xs.windows(2).take(i).any(|w| w[0] < w[1]);
                    let dec = xs.windows(2).take(i).any(|w| w[0] > w[1]);
                    inc && dec
                })
                .unwrap_or(xs.len() - 1);
            return Err(SeqError::TraitViolated {
                name: "monotone",
                witness: witness as u64,
                detail: "changes direction".into(),
            });
        }
        verified.push("monotone");
    }
    if t.unbounded {
        let xs = numeric("unbounded")?;
        let half = xs.len() / 2;
        let early = xs[..=half].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let late = xs[half..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if xs.len() < 2 || late <= early {
            return Err(SeqError::TraitViolated {
                name: "unbounded",
                witness: g.horizon,
                detail: format!("never exceeds {early} after n = {half}"),
            });
        }
        verified.push("unbounded");
    }
    if let Some(limit) = t.limit {
        let xs = numeric("limit")?;
        let dist: Vec<f64> = xs.iter().map(|x| (x - limit).abs()).collect();
        if let Some(i) = (1..dist.len()).find(|&i| dist[i] > dist[i - 1]) {
            return Err(SeqError::TraitViolated {
                name: "limit",
                witness: i as u64,
                detail: format!("moves away from {limit}"),
            });
        }
        verified.push("limit");
    }
    Ok(verified)
}

/// Outcome of [`SeqDescriptor::trait_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct TraitReport<V> {
    /// For periodic descriptors: the values taken infinitely often.
    pub finite_values: Option<Vec<V>>,
    /// Declared traits that held up to the horizon.
    pub verified: Vec<&'static str>,
    pub horizon: Option<u64>,
}

impl<V: SeqValue> fmt::Display for TraitReport<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.finite_values, self.horizon) {
            (Some(vals), _) => {
                let list: Vec<String> = vals.iter().map(ToString::to_string).collect();
                write!(f, "finitely many values {{{}}}", list.join(","))
            }
            (None, Some(h)) if self.verified.is_empty() => write!(f, "no declared traits (n ≤ {h})"),
            (None, Some(h)) => write!(f, "{} verified for n ≤ {h}", self.verified.join(",")),
            (None, None) => f.write_str("unchecked"),
        }
    }
}

impl<V: SeqValue> fmt::Display for SeqDescriptor<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqDescriptor::Periodic(p) => {
                let list = |vs: &[V]| vs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
                if p.prefix.is_empty() {
                    write!(f, "cycle=[{}]", list(&p.cycle))
                } else {
                    write!(f, "pre=[{}] cycle=[{}]", list(&p.prefix), list(&p.cycle))
                }
            }
            SeqDescriptor::Generated(g) => f.write_str(&g.label),
        }
    }
}

/// The named generators of the project format.
pub mod generators {
    use super::*;

    fn q(x: f64) -> BigRational {
        closed_form::rational(x).unwrap_or_else(BigRational::zero)
    }

    /// `n ↦ n`.
    pub fn identity<V: Numeric>(horizon: u64, traits: Traits) -> SeqDescriptor<V> {
        SeqDescriptor::generated("n", horizon, |n| V::from_f64(n as f64))
            .key("identity")
            .traits(traits)
            .closed_form(ClosedForm::polynomial(Poly::affine(q(1.0), q(0.0))))
            .build()
    }

    /// `n ↦ k`.
    pub fn constant<V: Numeric>(k: f64, horizon: u64, traits: Traits) -> SeqDescriptor<V> {
        SeqDescriptor::generated(format!("{k}"), horizon, move |_| V::from_f64(k))
            .key(format!("constant({k})"))
            .traits(traits)
            .closed_form(ClosedForm::constant(q(k)))
            .build()
    }

    /// Compact `a·n + b` text, e.g. `n+1`, `2n-3`, `n`.
    pub fn affine_label(a: f64, b: f64) -> String {
        let lead = match a {
            1.0 => "n".to_string(),
            -1.0 => "-n".to_string(),
            a => format!("{a}n"),
        };
        match b {
            b if a == 0.0 => format!("{b}"),
            0.0 => lead,
            b if b < 0.0 => format!("{lead}-{}", -b),
            b => format!("{lead}+{b}"),
        }
    }

    /// `n ↦ a·n + b`.
    pub fn affine<V: Numeric>(a: f64, b: f64, horizon: u64, traits: Traits) -> SeqDescriptor<V> {
        SeqDescriptor::generated(affine_label(a, b), horizon, move |n| V::from_f64(a * n as f64 + b))
            .key(format!("affine({a},{b})"))
            .traits(traits)
            .closed_form(ClosedForm::polynomial(Poly::affine(q(a), q(b))))
            .build()
    }

    /// `n ↦ 1/(a·n + b)`, zero where the denominator vanishes.
    pub fn reciprocal(a: f64, b: f64, horizon: u64, traits: Traits) -> SeqDescriptor<f64> {
        let mut builder = SeqDescriptor::generated(format!("1/({})", affine_label(a, b)), horizon, move |n| {
            let d = a * n as f64 + b;
            if d == 0.0 {
                0.0
            } else {
                1.0 / d
            }
        })
        .key(format!("reciprocal({a},{b})"))
        .traits(traits);
        let one = ClosedForm::constant(q(1.0));
        if let Some(cf) = one.arith(
            &ClosedForm::polynomial(Poly::affine(q(a), q(b))),
            closed_form::Op::Div,
        ) {
            builder = builder.closed_form(cf);
        }
        builder.build()
    }
}

/// Value of a closed form at `n` as `f64`, when in range.
pub fn closed_value(cf: &ClosedForm, n: u64) -> Option<f64> {
    cf.eval(n).and_then(|q| q.to_f64())
}
