//! Exact rational functions of the index `n`.
//!
//! A [`ClosedForm`] certifies that a generated sequence equals `P(n)/Q(n)` for
//! all `n ≥ valid_from`. Agreement sets, order, magnitude and standard parts of
//! such sequences can then be decided exactly instead of from samples.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::index_set::IndexSet;

/// Largest natural root the exact root search is willing to scan for.
pub const ROOT_SCAN_LIMIT: u64 = 1_000_000;

/// Polynomial in `n` with rational coefficients, lowest degree first and no
/// trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Poly(Vec<BigRational>);

impl Poly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly(coeffs)
    }

    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn constant(c: BigRational) -> Self {
        Poly::new(vec![c])
    }

    /// `a·n + b`.
    pub fn affine(a: BigRational, b: BigRational) -> Self {
        Poly::new(vec![b, a])
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    pub fn leading(&self) -> BigRational {
        self.0.last().cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn eval(&self, n: &BigRational) -> BigRational {
        self.0
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * n + c)
    }

    pub fn eval_at(&self, n: u64) -> BigRational {
        self.eval(&BigRational::from_integer(n.into()))
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        let zero = BigRational::zero();
        Poly::new(
            (0..len)
                .map(|i| self.0.get(i).unwrap_or(&zero) + other.0.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|c| -c).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// Newton-form interpolation through `(x_i, y_i)` with distinct `x_i`.
    pub fn interpolate(points: &[(BigRational, BigRational)]) -> Poly {
        let k = points.len();
        let mut dd: Vec<BigRational> = points.iter().map(|(_, y)| y.clone()).collect();
        for level in 1..k {
            for i in (level..k).rev() {
                let dx = &points[i].0 - &points[i - level].0;
                dd[i] = (&dd[i] - &dd[i - 1]) / dx;
            }
        }
        let mut poly = Poly::zero();
        for i in (0..k).rev() {
            let factor = Poly::affine(BigRational::one(), -points[i].0.clone());
            poly = poly.mul(&factor).add(&Poly::constant(dd[i].clone()));
        }
        poly
    }

    /// Integer polynomial with the same roots (coefficients scaled by the lcm
    /// of the denominators).
    fn integral(&self) -> Vec<BigInt> {
        let l = self
            .0
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        self.0
            .iter()
            .map(|c| (c * BigRational::from_integer(l.clone())).to_integer())
            .collect()
    }

    /// Cauchy bound: every real root has absolute value below it. `None` for
    /// the zero polynomial.
    pub fn root_bound(&self) -> Option<BigInt> {
        let d = self.degree()?;
        let lead = self.0[d].abs();
        let max = self.0[..d]
            .iter()
            .map(|c| (c / &lead).abs())
            .max()
            .unwrap_or_else(BigRational::zero);
        Some((max + BigRational::one()).ceil().to_integer())
    }

    /// All natural roots, or `None` when the polynomial is zero or the root
    /// bound exceeds [`ROOT_SCAN_LIMIT`].
    pub fn natural_roots(&self) -> Option<Vec<u64>> {
        let bound = self.root_bound()?.to_u64().filter(|&b| b <= ROOT_SCAN_LIMIT)?;
        let coeffs = self.integral();
        let zero_at = |n: u64| {
            let n = BigInt::from(n);
            coeffs
                .iter()
                .rev()
                .fold(BigInt::zero(), |acc, c| acc * &n + c)
                .is_zero()
        };
        Some((0..=bound).filter(|&n| zero_at(n)).collect())
    }

    /// Sign of `P(n)` for all sufficiently large `n`.
    pub fn eventual_sign(&self) -> Ordering {
        match self.leading().numer().sign() {
            Sign::Minus => Ordering::Less,
            Sign::NoSign => Ordering::Equal,
            Sign::Plus => Ordering::Greater,
        }
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (i, c) in self.0.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let (sign, mag) = if c.is_negative() { ("-", -c) } else { ("+", c.clone()) };
            if first {
                if sign == "-" {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let mag_text = if mag.is_integer() {
                mag.numer().to_string()
            } else {
                format!("({mag})")
            };
            match (i, mag.is_one()) {
                (0, _) => f.write_str(&mag_text)?,
                (_, true) => f.write_str("n")?,
                (_, false) => write!(f, "{mag_text}n")?,
            }
            if i > 1 {
                write!(f, "^{i}")?;
            }
        }
        Ok(())
    }
}

/// `num(n) / den(n)` for every `n ≥ valid_from`, with `den(n) ≠ 0` there.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClosedForm {
    num: Poly,
    den: Poly,
    valid_from: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl ClosedForm {
    /// Returns `None` when `den` is identically zero or its natural roots
    /// cannot be bounded.
    pub fn new(num: Poly, den: Poly, valid_from: u64) -> Option<Self> {
        if den.is_zero() {
            return None;
        }
        let last_pole = den.natural_roots()?.into_iter().max();
        let valid_from = match last_pole {
            Some(r) if r >= valid_from => r + 1,
            _ => valid_from,
        };
        Some(ClosedForm { num, den, valid_from }.reduced())
    }

    pub fn polynomial(p: Poly) -> Self {
        ClosedForm {
            num: p,
            den: Poly::constant(BigRational::one()),
            valid_from: 0,
        }
    }

    pub fn constant(c: BigRational) -> Self {
        ClosedForm::polynomial(Poly::constant(c))
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn valid_from(&self) -> u64 {
        self.valid_from
    }

    /// Moves the start of validity later.
    pub fn from_index(mut self, n: u64) -> Self {
        self.valid_from = self.valid_from.max(n);
        self
    }

    /// Normalises a constant denominator to 1 and the denominator's leading
    /// coefficient to 1 otherwise.
    fn reduced(mut self) -> Self {
        let lead = self.den.leading();
        if !lead.is_one() {
            let inv = Poly::constant(lead.recip());
            self.num = self.num.mul(&inv);
            self.den = self.den.mul(&inv);
        }
        self
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.degree() == Some(0)
    }

    pub fn eval(&self, n: u64) -> Option<BigRational> {
        (n >= self.valid_from).then(|| self.num.eval_at(n) / self.den.eval_at(n))
    }

    pub fn arith(&self, other: &ClosedForm, op: Op) -> Option<ClosedForm> {
        let start = self.valid_from.max(other.valid_from);
        let (num, den) = match op {
            Op::Add | Op::Sub => {
                let a = self.num.mul(&other.den);
                let b = other.num.mul(&self.den);
                let num = if op == Op::Add { a.add(&b) } else { a.sub(&b) };
                (num, self.den.mul(&other.den))
            }
            Op::Mul => (self.num.mul(&other.num), self.den.mul(&other.den)),
            Op::Div => {
                // Pointwise division by a zero value yields zero, so the
                // formula only takes over after the divisor's last zero.
                let zeros = other.num.natural_roots()?;
                let start = zeros.into_iter().map(|z| z + 1).fold(start, u64::max);
                let cf = ClosedForm::new(self.num.mul(&other.den), self.den.mul(&other.num), start)?;
                return Some(cf);
            }
        };
        ClosedForm::new(num, den, start)
    }

    /// `self − other` as a single numerator over a denominator whose sign is
    /// eventually constant.
    fn difference_numerator(&self, other: &ClosedForm) -> Poly {
        self.num.mul(&other.den).sub(&other.num.mul(&self.den))
    }

    /// Sorted `n ≥ valid_from` (of both forms) at which the values agree, or
    /// `Agreement::Cofinite` when they agree from there on. `None` when the
    /// root scan is out of reach.
    pub fn agreement(&self, other: &ClosedForm) -> Option<Agreement> {
        let start = self.valid_from.max(other.valid_from);
        let d = self.difference_numerator(other);
        if d.is_zero() {
            return Some(Agreement::Cofinite { from: start });
        }
        let roots = d.natural_roots()?.into_iter().filter(|&r| r >= start).collect();
        Some(Agreement::Finite { from: start, roots })
    }

    /// Eventual comparison of `self` against `other`, with an index past which
    /// the comparison never changes.
    pub fn eventual_cmp(&self, other: &ClosedForm) -> Option<(Ordering, u64)> {
        let start = self.valid_from.max(other.valid_from);
        let d = self.difference_numerator(other);
        let den = self.den.mul(&other.den);
        let sign = match (d.eventual_sign(), den.eventual_sign()) {
            (Ordering::Equal, _) => Ordering::Equal,
            (a, Ordering::Greater) => a,
            (a, _) => a.reverse(),
        };
        let past = |p: &Poly| -> Option<u64> {
            match p.root_bound() {
                None => Some(0),
                Some(b) => b.to_u64().filter(|&b| b <= ROOT_SCAN_LIMIT),
            }
        };
        let settled = past(&d)?.max(past(&den)?).max(start);
        Some((sign, settled))
    }

    /// `lim num/den` when finite.
    pub fn limit(&self) -> Option<BigRational> {
        let dn = self.num.degree();
        let dd = self.den.degree().expect("nonzero denominator");
        match dn {
            None => Some(BigRational::zero()),
            Some(k) if k < dd => Some(BigRational::zero()),
            Some(k) if k == dd => Some(self.num.leading() / self.den.leading()),
            Some(_) => None,
        }
    }

    /// Degree of the numerator minus degree of the denominator.
    pub fn growth(&self) -> Option<i64> {
        Some(self.num.degree()? as i64 - self.den.degree()? as i64)
    }
}

/// Largest period of a [`ClassForms`].
pub const MAX_CLASSES: u64 = 64;

/// One closed form per residue class: for `n ≥ offset` the sequence equals
/// `forms[(n − offset) mod period]` at `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClassForms {
    offset: u64,
    forms: Vec<ClosedForm>,
}

impl ClassForms {
    /// Pushes the offset past every form's start of validity. `None` for an
    /// empty list or a period above [`MAX_CLASSES`].
    pub fn new(offset: u64, forms: Vec<ClosedForm>) -> Option<Self> {
        if forms.is_empty() || forms.len() as u64 > MAX_CLASSES {
            return None;
        }
        let p = forms.len() as u64;
        let start = forms.iter().map(|f| f.valid_from).max().unwrap_or(0);
        let mut out = ClassForms { offset, forms };
        if start > offset {
            out = out.aligned(offset + (start - offset).div_ceil(p) * p, p)?;
        }
        Some(out)
    }

    pub fn single(cf: ClosedForm) -> Self {
        ClassForms {
            offset: cf.valid_from,
            forms: vec![cf],
        }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn period(&self) -> u64 {
        self.forms.len() as u64
    }

    pub fn forms(&self) -> &[ClosedForm] {
        &self.forms
    }

    /// The form of the class containing `n`, for `n ≥ offset`.
    pub fn form_at(&self, n: u64) -> Option<&ClosedForm> {
        (n >= self.offset).then(|| &self.forms[((n - self.offset) % self.period()) as usize])
    }

    pub fn eval(&self, n: u64) -> Option<BigRational> {
        self.form_at(n)?.eval(n)
    }

    /// The same sequence over a later offset and a multiple of the period.
    pub fn aligned(&self, offset: u64, period: u64) -> Option<Self> {
        if offset < self.offset || !period.is_multiple_of(self.period()) || period > MAX_CLASSES {
            return None;
        }
        let forms = (0..period)
            .map(|k| self.form_at(offset + k).expect("past offset").clone().from_index(offset))
            .collect();
        Some(ClassForms { offset, forms })
    }

    /// The single form when every class has the same one.
    pub fn collapsed(&self) -> Option<&ClosedForm> {
        let first = &self.forms[0];
        self.forms
            .iter()
            .all(|f| f.num == first.num && f.den == first.den)
            .then_some(first)
    }

    pub fn arith(&self, other: &ClassForms, op: Op) -> Option<ClassForms> {
        let offset = self.offset.max(other.offset);
        let period = self.period().lcm(&other.period());
        let (a, b) = (self.aligned(offset, period)?, other.aligned(offset, period)?);
        let forms = a
            .forms
            .iter()
            .zip(&b.forms)
            .map(|(x, y)| x.arith(y, op))
            .collect::<Option<Vec<_>>>()?;
        ClassForms::new(offset, forms)
    }

    /// `{n ≥ offset : n ≡ offset + k (mod period)}`.
    pub fn class_set(&self, k: u64) -> IndexSet {
        let p = self.period() as usize;
        let cycle = (0..p).map(|j| j == k as usize).collect();
        IndexSet::periodic(vec![false; self.offset as usize], cycle)
    }

    /// The limit shared by every class, when each has the same finite one.
    pub fn common_limit(&self) -> Option<BigRational> {
        let mut limits = self.forms.iter().map(ClosedForm::limit);
        let first = limits.next()??;
        limits.all(|l| l.as_ref() == Some(&first)).then_some(first)
    }
}

impl fmt::Display for ClassForms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.forms.iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", parts.join(" | "))
    }
}

/// Where two closed forms agree beyond their common start of validity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Agreement {
    Cofinite { from: u64 },
    Finite { from: u64, roots: Vec<u64> },
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.degree() == Some(0) && self.den.leading().is_one() {
            write!(f, "{}", self.num)
        } else {
            let wrap = |p: &Poly| {
                if p.0.iter().filter(|c| !c.is_zero()).count() > 1 {
                    format!("({p})")
                } else {
                    p.to_string()
                }
            };
            write!(f, "{}/{}", wrap(&self.num), wrap(&self.den))
        }
    }
}

pub fn rational(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn p(cs: &[i64]) -> Poly {
        Poly::new(cs.iter().map(|&c| q(c, 1)).collect())
    }

    #[test]
    fn polynomial_arithmetic() {
        let a = p(&[1, 1]);
        let b = p(&[-1, 1]);
        assert_eq!(a.mul(&b), p(&[-1, 0, 1]));
        assert_eq!(a.sub(&a), Poly::zero());
        assert_eq!(a.mul(&b).eval_at(5), q(24, 1));
        assert_eq!(p(&[-1, 0, 1]).to_string(), "n^2 - 1");
    }

    #[test]
    fn interpolation_recovers_polynomial() {
        let target = p(&[3, -2, 0, 5]);
        let pts: Vec<_> = (0..4u64)
            .map(|n| (q(n as i64, 1), target.eval_at(n)))
            .collect();
        assert_eq!(Poly::interpolate(&pts), target);
    }

    #[test]
    fn natural_roots() {
        // (n-3)(n-10)(2n+1)
        let poly = p(&[-3, 1]).mul(&p(&[-10, 1])).mul(&p(&[1, 2]));
        assert_eq!(poly.natural_roots(), Some(vec![3, 10]));
        assert_eq!(p(&[0, 1]).natural_roots(), Some(vec![0]));
        assert_eq!(p(&[-10_000_000, 1]).natural_roots(), None);
    }

    #[test]
    fn reciprocal_times_linear_is_one() {
        let inv = ClosedForm::new(p(&[1]), p(&[1, 1]), 0).unwrap();
        let lin = ClosedForm::polynomial(p(&[1, 1]));
        let prod = inv.arith(&lin, Op::Mul).unwrap();
        assert_eq!(
            prod.agreement(&ClosedForm::constant(q(1, 1))),
            Some(Agreement::Cofinite { from: 0 })
        );
        assert_eq!(inv.limit(), Some(q(0, 1)));
        assert_eq!(inv.growth(), Some(-1));
    }

    #[test]
    fn poles_move_validity() {
        let cf = ClosedForm::new(p(&[1]), p(&[-4, 1]), 0).unwrap();
        assert_eq!(cf.valid_from(), 5);
        let div = ClosedForm::polynomial(p(&[1]))
            .arith(&ClosedForm::polynomial(p(&[-2, 1])), Op::Div)
            .unwrap();
        assert_eq!(div.valid_from(), 3);
    }

    #[test]
    fn eventual_order() {
        let n = ClosedForm::polynomial(p(&[0, 1]));
        let five = ClosedForm::constant(q(5, 1));
        let (ord, past) = n.eventual_cmp(&five).unwrap();
        assert_eq!(ord, Ordering::Greater);
        assert!(past >= 5);
        let neg_den = ClosedForm::new(p(&[1]), p(&[-1, -1]), 0).unwrap();
        let (ord, _) = neg_den.eventual_cmp(&ClosedForm::constant(q(0, 1))).unwrap();
        assert_eq!(ord, Ordering::Less);
    }

    #[test]
    fn class_forms_align_and_combine() {
        // 1/(n+1) on even n, n on odd n, from n = 2.
        let a = ClassForms::new(
            2,
            vec![ClosedForm::new(p(&[1]), p(&[1, 1]), 0).unwrap(), ClosedForm::polynomial(p(&[0, 1]))],
        )
        .unwrap();
        assert_eq!(a.eval(4), Some(q(1, 5)));
        assert_eq!(a.eval(5), Some(q(5, 1)));
        assert_eq!(a.eval(1), None);
        let c = ClassForms::new(0, vec![ClosedForm::constant(q(1, 1)), ClosedForm::constant(q(2, 1)), ClosedForm::constant(q(3, 1))]).unwrap();
        let sum = a.arith(&c, Op::Add).unwrap();
        assert_eq!(sum.offset(), 2);
        assert_eq!(sum.period(), 6);
        for n in 2..40 {
            assert_eq!(sum.eval(n), Some(a.eval(n).unwrap() + c.eval(n).unwrap()), "n = {n}");
        }
        assert!(a.common_limit().is_none());
        let both_zero = ClassForms::new(0, vec![ClosedForm::new(p(&[1]), p(&[1, 1]), 0).unwrap(), ClosedForm::new(p(&[3]), p(&[0, 1]), 1).unwrap()]).unwrap();
        assert_eq!(both_zero.offset(), 2);
        assert_eq!(both_zero.common_limit(), Some(q(0, 1)));
        assert_eq!(both_zero.class_set(1).to_descriptor(), "periodic(pre=00,cycle=01)");
        let same = ClassForms::new(0, vec![ClosedForm::constant(q(1, 1)); 2]).unwrap();
        assert_eq!(same.collapsed(), Some(&ClosedForm::constant(q(1, 1))));
    }
}
