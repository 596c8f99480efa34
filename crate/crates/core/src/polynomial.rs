//! Sparse multivariate polynomials with exact big-integer coefficients.
//!
//! Exponent vectors are dense `Vec<u32>` of length `nvars`; terms live in a
//! `BTreeMap`, so iteration (and the text dump) is in lexicographic order of
//! the exponent vector. Zero coefficients are never stored.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exponent of `x_1^{e_1} ... x_M^{e_M}`.
pub type ExponentVector = Vec<u32>;

/// Default cap on intermediate term counts in [`SparsePoly::pow`].
pub const DEFAULT_MAX_TERMS: usize = 4_000_000;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SparsePoly {
    nvars: usize,
    terms: BTreeMap<ExponentVector, BigInt>,
}

impl SparsePoly {
    pub fn zero(nvars: usize) -> Self {
        SparsePoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, BigInt::one())
    }

    pub fn constant(nvars: usize, c: impl Into<BigInt>) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c.into());
        p
    }

    /// The variable `x_r`, 1-based.
    pub fn var(nvars: usize, r: usize) -> Result<Self> {
        if r == 0 || r > nvars {
            return Err(Error::Index { index: r, nvars });
        }
        let mut e = vec![0; nvars];
        e[r - 1] = 1;
        Ok(Self::monomial(e, BigInt::one()))
    }

    pub fn monomial(exponents: ExponentVector, c: impl Into<BigInt>) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, c.into());
        p
    }

    /// Builds a polynomial from `(coefficient, exponents)` pairs, merging like terms.
    pub fn from_terms<I, C>(nvars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, ExponentVector)>,
        C: Into<BigInt>,
    {
        let mut p = Self::zero(nvars);
        for (c, e) in terms {
            if e.len() != nvars {
                return Err(Error::Dimension {
                    expected: nvars,
                    got: e.len(),
                });
            }
            p.add_term(e, c.into());
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in lexicographic exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (&ExponentVector, &BigInt)> {
        self.terms.iter()
    }

    fn add_term(&mut self, e: ExponentVector, c: BigInt) {
        debug_assert_eq!(e.len(), self.nvars);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: other.nvars,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&-other)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &BigInt) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, a) in &self.terms {
            out.add_term(e.clone(), a * c);
        }
        out
    }

    /// `self^n` by binary exponentiation; `self^0 = 1`.
    pub fn pow(&self, n: u32) -> Self {
        self.checked_pow(n, DEFAULT_MAX_TERMS)
            .expect("polynomial power exceeded the default term cap")
    }

    /// Like [`pow`](Self::pow) but fails with a resource error once any
    /// intermediate product would exceed `max_terms` terms.
    pub fn checked_pow(&self, n: u32, max_terms: usize) -> Result<Self> {
        let mut result = Self::one(self.nvars);
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                guard(&result, &base, max_terms)?;
                result = result.try_mul(&base)?;
            }
            n >>= 1;
            if n > 0 {
                guard(&base, &base, max_terms)?;
                base = base.try_mul(&base)?;
            }
        }
        Ok(result)
    }

    /// Exact coefficient of `x^e`, zero when absent.
    pub fn coeff(&self, e: &[u32]) -> Result<BigInt> {
        if e.len() != self.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: e.len(),
            });
        }
        Ok(self.terms.get(e).cloned().unwrap_or_default())
    }

    /// Formal partial derivative with respect to `x_r`, 1-based.
    pub fn partial_derivative(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.nvars {
            return Err(Error::Index {
                index: r,
                nvars: self.nvars,
            });
        }
        let idx = r - 1;
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[idx] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[idx] -= 1;
            out.add_term(d, c * BigInt::from(e[idx]));
        }
        Ok(out)
    }

    /// Re-embeds into `nvars >= self.nvars` variables by appending zero exponents.
    pub fn embed(&self, nvars: usize) -> Result<Self> {
        if nvars < self.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: nvars,
            });
        }
        let mut out = Self::zero(nvars);
        for (e, c) in &self.terms {
            let mut d = e.clone();
            d.resize(nvars, 0);
            out.add_term(d, c.clone());
        }
        Ok(out)
    }

    /// Drops every term whose exponent exceeds `bound` in some coordinate.
    pub fn truncate(&self, bound: &[u32]) -> Result<Self> {
        if bound.len() != self.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: bound.len(),
            });
        }
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e.iter().zip(bound).all(|(a, b)| a <= b))
            .map(|(e, c)| (e.clone(), c.clone()))
            .collect();
        Ok(SparsePoly {
            nvars: self.nvars,
            terms,
        })
    }

    /// Substitutes `x_r -> sign(r) * x_r`.
    pub fn flip_signs(&self, negate: impl Fn(usize) -> bool) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let odd: u32 = e
                .iter()
                .enumerate()
                .filter(|(i, _)| negate(i + 1))
                .map(|(_, &a)| a)
                .sum();
            let c = if odd % 2 == 1 { -c } else { c.clone() };
            out.add_term(e.clone(), c);
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn eval_rational(&self, x: &[BigRational]) -> Result<BigRational> {
        if x.len() != self.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: x.len(),
            });
        }
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = BigRational::from_integer(c.clone());
            for (xi, &a) in x.iter().zip(e) {
                t *= num_traits::pow(xi.clone(), a as usize);
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Floating-point evaluation by direct term summation.
    pub fn eval_f64(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| {
                let c = c.to_f64().unwrap_or(f64::NAN);
                e.iter()
                    .zip(x)
                    .fold(c, |acc, (&a, &xi)| acc * xi.powi(a as i32))
            })
            .sum())
    }

    pub fn has_nonnegative_coefficients(&self) -> bool {
        self.terms.values().all(|c| !c.is_negative())
    }

    /// Text dump: one `coefficient<TAB>e_1,...,e_M` line per term, LF-terminated.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.terms {
            s.push_str(&c.to_string());
            s.push('\t');
            let exps: Vec<String> = e.iter().map(u32::to_string).collect();
            s.push_str(&exps.join(","));
            s.push('\n');
        }
        s
    }

    /// Parses the dump format back into a polynomial in `nvars` variables.
    pub fn parse_dump(nvars: usize, text: &str) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (c, e) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("line {}: missing tab", lineno + 1)))?;
            let c: BigInt = c
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad coefficient", lineno + 1)))?;
            let e: ExponentVector = e
                .split(',')
                .map(|s| s.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("line {}: bad exponent", lineno + 1)))?;
            if e.len() != nvars {
                return Err(Error::Dimension {
                    expected: nvars,
                    got: e.len(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    /// Parses expressions such as `1 + 6*x1^2 + x1^4` or `2x1x2 - x3`.
    ///
    /// Variables are `x1..xM`; `nvars` is the largest index seen unless a
    /// larger value is supplied.
    pub fn parse_expr(text: &str, min_nvars: usize) -> Result<Self> {
        let raw = parse_terms(text)?;
        let nvars = raw
            .iter()
            .flat_map(|(_, vars)| vars.iter().map(|(v, _)| *v))
            .max()
            .unwrap_or(0)
            .max(min_nvars);
        if nvars == 0 {
            return Err(Error::Parse("expression has no variables".into()));
        }
        let mut p = Self::zero(nvars);
        for (c, vars) in raw {
            let mut e = vec![0u32; nvars];
            for (v, a) in vars {
                e[v - 1] += a;
            }
            p.add_term(e, c);
        }
        Ok(p)
    }
}

fn guard(a: &SparsePoly, b: &SparsePoly, max_terms: usize) -> Result<()> {
    // Product term count is bounded above by the product of the factors' counts.
    let bound = a.len().saturating_mul(b.len());
    if bound > max_terms {
        // The bound is loose; only refuse when the dense degree box is also too big.
        let boxed: usize = (0..a.nvars)
            .map(|i| {
                let da = a.terms.keys().map(|e| e[i]).max().unwrap_or(0) as usize;
                let db = b.terms.keys().map(|e| e[i]).max().unwrap_or(0) as usize;
                da + db + 1
            })
            .try_fold(1usize, |acc, d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if boxed > max_terms {
            return Err(Error::Resource(format!(
                "polynomial product may reach {} terms (cap {max_terms})",
                bound.min(boxed)
            )));
        }
    }
    Ok(())
}

type RawTerm = (BigInt, Vec<(usize, u32)>);

fn parse_terms(text: &str) -> Result<Vec<RawTerm>> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::Parse("empty expression".into()));
    }
    let bytes = s.as_bytes();
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let mut sign = BigInt::one();
        if bytes[pos] == b'+' || bytes[pos] == b'-' {
            if bytes[pos] == b'-' {
                sign = -sign;
            }
            pos += 1;
        } else if pos != 0 {
            return Err(Error::Parse(format!("expected '+' or '-' at offset {pos}")));
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'+' && bytes[pos] != b'-' {
            pos += 1;
        }
        let term = &s[start..pos];
        if term.is_empty() {
            return Err(Error::Parse(format!("empty term at offset {start}")));
        }
        let (c, vars) = parse_monomial(term)?;
        out.push((sign * c, vars));
    }
    Ok(out)
}

fn parse_monomial(term: &str) -> Result<RawTerm> {
    let bad = || Error::Parse(format!("cannot parse term '{term}'"));
    let mut coeff = BigInt::one();
    let mut vars = Vec::new();
    let mut rest = term;
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        coeff = rest[..digits].parse().map_err(|_| bad())?;
        rest = &rest[digits..];
    }
    while !rest.is_empty() {
        rest = rest.strip_prefix('*').unwrap_or(rest);
        rest = rest.strip_prefix('x').ok_or_else(bad)?;
        let n = rest.chars().take_while(char::is_ascii_digit).count();
        if n == 0 {
            return Err(bad());
        }
        let v: usize = rest[..n].parse().map_err(|_| bad())?;
        if v == 0 {
            return Err(bad());
        }
        rest = &rest[n..];
        let mut a = 1u32;
        if let Some(r) = rest.strip_prefix('^') {
            let n = r.chars().take_while(char::is_ascii_digit).count();
            if n == 0 {
                return Err(bad());
            }
            a = r[..n].parse().map_err(|_| bad())?;
            rest = &r[n..];
        }
        vars.push((v, a));
    }
    Ok((coeff, vars))
}

impl fmt::Debug for SparsePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SparsePoly[{}]{{", self.nvars)?;
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}*x^{e:?}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for SparsePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mag = c.abs();
            let is_const = e.iter().all(|&a| a == 0);
            if !mag.is_one() || is_const {
                write!(f, "{mag}")?;
            }
            let mut first = mag.is_one();
            for (r, &a) in e.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                if !first {
                    write!(f, "*")?;
                }
                first = false;
                write!(f, "x{}", r + 1)?;
                if a > 1 {
                    write!(f, "^{a}")?;
                }
            }
        }
        Ok(())
    }
}

impl Neg for &SparsePoly {
    type Output = SparsePoly;
    fn neg(self) -> SparsePoly {
        SparsePoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }
}

// Operator forms panic on dimension mismatch; use the `try_` methods to handle it.
impl Add for &SparsePoly {
    type Output = SparsePoly;
    fn add(self, rhs: &SparsePoly) -> SparsePoly {
        self.try_add(rhs)
            .expect("dimension mismatch in polynomial add")
    }
}

impl Sub for &SparsePoly {
    type Output = SparsePoly;
    fn sub(self, rhs: &SparsePoly) -> SparsePoly {
        self.try_sub(rhs)
            .expect("dimension mismatch in polynomial sub")
    }
}

impl Mul for &SparsePoly {
    type Output = SparsePoly;
    fn mul(self, rhs: &SparsePoly) -> SparsePoly {
        self.try_mul(rhs)
            .expect("dimension mismatch in polynomial mul")
    }
}

/// Natural log of a positive big integer, accurate to double precision.
pub fn ln_bigint(n: &BigInt) -> f64 {
    assert!(n.is_positive(), "ln of non-positive integer");
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().expect("64-bit prefix");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}
