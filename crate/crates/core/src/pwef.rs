//! Degree-M pseudoweight enumerating function of the length-k single
//! parity-check code.
//!
//! `B(x) = ½[P(x)^k + Q(x)^k] − T(x)` with `P = 1 + Σ x_r`,
//! `Q = 1 + Σ (−1)^r x_r` and the exclusion term `T` built recursively in the
//! cover degree. The exact constructors return [`SparsePoly`] values; the
//! [`ClosedFormPwef`] evaluator works in signed-log form and never expands the
//! k-th powers, so it stays usable for large k.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::polynomial::{ExponentVector, SparsePoly};

pub const MAX_COVER_DEGREE: usize = 8;
pub const MAX_CHECK_DEGREE: u64 = 1_000_000;

/// Below this magnitude `|Q(x)|` is treated as exactly zero.
pub const Q_VANISH: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct PwefSpec {
    /// Cover degree M.
    pub m: usize,
    /// SPC code length k.
    pub k: u64,
}

impl PwefSpec {
    pub fn new(m: usize, k: u64) -> Result<Self> {
        if m == 0 || m > MAX_COVER_DEGREE {
            return Err(Error::domain(format!(
                "cover degree M must be in 1..={MAX_COVER_DEGREE}, got {m}"
            )));
        }
        if !(2..=MAX_CHECK_DEGREE).contains(&k) {
            return Err(Error::domain(format!(
                "check degree k must be in 2..={MAX_CHECK_DEGREE}, got {k}"
            )));
        }
        Ok(PwefSpec { m, k })
    }
}

/// Multinomial `k! / ((k − Σu)! Π u_r!)`, zero when `Σu > k`.
pub fn multinomial(k: u64, parts: &[u32]) -> BigInt {
    let total: u64 = parts.iter().map(|&p| p as u64).sum();
    if total > k {
        return BigInt::zero();
    }
    let mut num = BigInt::one();
    for i in 0..total {
        num *= k - i;
    }
    let mut den = BigInt::one();
    for &p in parts {
        for i in 2..=p as u64 {
            den *= i;
        }
    }
    num / den
}

/// `1 + x_1 + ... + x_M`.
pub fn build_p(spec: PwefSpec) -> SparsePoly {
    linear_form(spec.m, |_| 1)
}

/// `1 − x_1 + x_2 − x_3 + ...`.
pub fn build_q(spec: PwefSpec) -> SparsePoly {
    linear_form(spec.m, |r| if r % 2 == 1 { -1 } else { 1 })
}

fn linear_form(m: usize, sign: impl Fn(usize) -> i64) -> SparsePoly {
    let mut terms = vec![(1i64, vec![0u32; m])];
    for r in 1..=m {
        let mut e = vec![0u32; m];
        e[r - 1] = 1;
        terms.push((sign(r), e));
    }
    SparsePoly::from_terms(m, terms).expect("exponents have length m")
}

/// The index set `U^{d}`: vectors `v ∈ Z^d_{≥0}` with `Σ r v_r < d + 1` and
/// `Σ_{r odd} v_r + (d + 1)` even.
fn exclusion_set(d: usize) -> Vec<Vec<u32>> {
    let top = d + 1;
    let mut out = Vec::new();
    let mut v = vec![0u32; d];
    fn rec(r: usize, budget: usize, v: &mut Vec<u32>, top: usize, out: &mut Vec<Vec<u32>>) {
        if r > v.len() {
            let odd: u32 = v.iter().step_by(2).sum();
            if (odd as usize + top).is_multiple_of(2) {
                out.push(v.clone());
            }
            return;
        }
        let mut n = 0u32;
        while (n as usize) * r <= budget {
            v[r - 1] = n;
            rec(r + 1, budget - n as usize * r, v, top, out);
            n += 1;
        }
        v[r - 1] = 0;
    }
    // Σ r v_r ≤ top − 1
    rec(1, top - 1, &mut v, top, &mut out);
    out
}

/// Exclusion term `T^{(M)}`, built by the recursion over cover degree with `T^{(1)} = 0`.
pub fn build_t(spec: PwefSpec) -> SparsePoly {
    let m = spec.m;
    let mut t = SparsePoly::zero(m);
    for c in 2..=m {
        for v in exclusion_set(c - 1) {
            let mut parts = v.clone();
            parts.push(1);
            let coeff = multinomial(spec.k, &parts);
            if coeff.is_zero() {
                continue;
            }
            let mut e = vec![0u32; m];
            e[..c - 1].copy_from_slice(&v);
            e[c - 1] = 1;
            t = &t + &SparsePoly::monomial(e, coeff);
        }
    }
    t
}

/// Exact `B^{(M)}` by expansion. Fails with a resource error when the powers
/// would be too large to expand.
pub fn build_b(spec: PwefSpec) -> Result<SparsePoly> {
    let k: u32 = spec
        .k
        .try_into()
        .map_err(|_| Error::Resource(format!("k = {} too large to expand", spec.k)))?;
    let cap = crate::polynomial::DEFAULT_MAX_TERMS;
    let pk = build_p(spec).checked_pow(k, cap)?;
    let qk = build_q(spec).checked_pow(k, cap)?;
    let sum = pk.try_add(&qk)?;
    let two = BigInt::from(2);
    let half = SparsePoly::from_terms(
        spec.m,
        sum.terms().map(|(e, c)| {
            debug_assert!((c % &two).is_zero());
            (c / &two, e.clone())
        }),
    )?;
    half.try_sub(&build_t(spec))
}

/// Whether `u` is the type of some degree-M pseudocodeword of the SPC code.
pub fn membership_s(u: &[u32], spec: PwefSpec) -> bool {
    debug_assert_eq!(u.len(), spec.m);
    let total: u64 = u.iter().map(|&a| a as u64).sum();
    if total > spec.k {
        return false;
    }
    let odd: u64 = u.iter().step_by(2).map(|&a| a as u64).sum();
    if odd % 2 == 1 {
        return false;
    }
    // Largest index c with u_c ≠ 0; only u_c = 1 can violate the cone condition.
    match u.iter().rposition(|&a| a != 0) {
        None => true,
        Some(idx) if u[idx] == 1 => {
            let c = idx as u64 + 1;
            let below: u64 = u[..idx]
                .iter()
                .enumerate()
                .map(|(i, &a)| (i as u64 + 1) * a as u64)
                .sum();
            c <= below
        }
        Some(_) => true,
    }
}

/// All types in the S-set with `Σu ≤ k`, paired with their multinomial counts.
pub fn s_set(spec: PwefSpec) -> Vec<(ExponentVector, BigInt)> {
    let mut out = Vec::new();
    let mut u = vec![0u32; spec.m];
    fn rec(
        r: usize,
        left: u64,
        u: &mut Vec<u32>,
        spec: PwefSpec,
        out: &mut Vec<(ExponentVector, BigInt)>,
    ) {
        if r == u.len() {
            if membership_s(u, spec) {
                out.push((u.clone(), multinomial(spec.k, u)));
            }
            return;
        }
        for a in 0..=left {
            u[r] = a as u32;
            rec(r + 1, left - a, u, spec, out);
        }
        u[r] = 0;
    }
    rec(0, spec.k, &mut u, spec, &mut out);
    out
}

/// A real number stored as a sign and the natural log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogValue {
    pub sign: i8,
    /// `ln |value|`; meaningless when `sign == 0`.
    pub log_magnitude: f64,
}

impl SignedLogValue {
    pub const ZERO: SignedLogValue = SignedLogValue {
        sign: 0,
        log_magnitude: f64::NEG_INFINITY,
    };

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            SignedLogValue {
                sign: if v > 0.0 { 1 } else { -1 },
                log_magnitude: v.abs().ln(),
            }
        }
    }

    pub fn positive_from_log(log_magnitude: f64) -> Self {
        SignedLogValue {
            sign: 1,
            log_magnitude,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => s as f64 * self.log_magnitude.exp(),
        }
    }

    pub fn neg(self) -> Self {
        SignedLogValue {
            sign: -self.sign,
            ..self
        }
    }

    pub fn add(self, other: Self) -> Self {
        if self.sign == 0 {
            return other;
        }
        if other.sign == 0 {
            return self;
        }
        let (big, small) = if self.log_magnitude >= other.log_magnitude {
            (self, other)
        } else {
            (other, self)
        };
        let d = small.log_magnitude - big.log_magnitude;
        if big.sign == small.sign {
            SignedLogValue {
                sign: big.sign,
                log_magnitude: big.log_magnitude + d.exp().ln_1p(),
            }
        } else if d == 0.0 {
            Self::ZERO
        } else {
            SignedLogValue {
                sign: big.sign,
                log_magnitude: big.log_magnitude + (-d.exp()).ln_1p(),
            }
        }
    }

    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }
}

/// Signed-log evaluation result, with a flag raised when the `Q^k` term was
/// dropped because `|Q(x)|` underflowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwefEval {
    pub value: SignedLogValue,
    pub q_vanished: bool,
}

/// Closed-form evaluator of `B^{(M)}` and its partial derivatives.
#[derive(Debug, Clone)]
pub struct ClosedFormPwef {
    spec: PwefSpec,
    t_terms: Vec<(f64, ExponentVector)>,
    dt_terms: Vec<Vec<(f64, ExponentVector)>>,
}

fn f64_terms(p: &SparsePoly) -> Vec<(f64, ExponentVector)> {
    p.terms()
        .map(|(e, c)| (c.to_f64().unwrap_or(f64::INFINITY), e.clone()))
        .collect()
}

fn eval_terms(terms: &[(f64, ExponentVector)], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|(c, e)| {
            e.iter()
                .zip(x)
                .fold(*c, |acc, (&a, &xi)| acc * xi.powi(a as i32))
        })
        .sum()
}

impl ClosedFormPwef {
    pub fn new(spec: PwefSpec) -> Self {
        let t = build_t(spec);
        let dt_terms = (1..=spec.m)
            .map(|r| f64_terms(&t.partial_derivative(r).expect("index in range")))
            .collect();
        ClosedFormPwef {
            spec,
            t_terms: f64_terms(&t),
            dt_terms,
        }
    }

    pub fn spec(&self) -> PwefSpec {
        self.spec
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.m {
            return Err(Error::Dimension {
                expected: self.spec.m,
                got: x.len(),
            });
        }
        if let Some(bad) = x.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain(format!(
                "evaluation point must be strictly positive, found {bad}"
            )));
        }
        Ok(())
    }

    /// `½[(P^n) + s (Q^n)]` in signed-log form, `s = ±1`.
    fn power_pair(&self, x: &[f64], n: u64, q_sign: i8) -> (SignedLogValue, bool) {
        let ln_p = x.iter().sum::<f64>().ln_1p();
        let q: f64 = 1.0
            + x.iter()
                .enumerate()
                .map(|(i, &v)| if i % 2 == 0 { -v } else { v })
                .sum::<f64>();
        let nf = n as f64;
        let half = std::f64::consts::LN_2;
        let p_term = SignedLogValue::positive_from_log(nf * ln_p - half);
        if q.abs() < Q_VANISH {
            return (p_term, true);
        }
        let mut sign = if q < 0.0 && n % 2 == 1 { -1 } else { 1 };
        sign *= q_sign;
        let q_term = SignedLogValue {
            sign,
            log_magnitude: nf * q.abs().ln() - half,
        };
        (p_term.add(q_term), false)
    }

    pub fn eval_b_flagged(&self, x: &[f64]) -> Result<PwefEval> {
        self.check_point(x)?;
        let (pair, q_vanished) = self.power_pair(x, self.spec.k, 1);
        let t = SignedLogValue::from_f64(eval_terms(&self.t_terms, x));
        Ok(PwefEval {
            value: pair.sub(t),
            q_vanished,
        })
    }

    pub fn eval_b(&self, x: &[f64]) -> Result<SignedLogValue> {
        Ok(self.eval_b_flagged(x)?.value)
    }

    pub fn eval_db_flagged(&self, x: &[f64], r: usize) -> Result<PwefEval> {
        self.check_point(x)?;
        if r == 0 || r > self.spec.m {
            return Err(Error::Index {
                index: r,
                nvars: self.spec.m,
            });
        }
        let q_sign = if r % 2 == 1 { -1 } else { 1 };
        let (pair, q_vanished) = self.power_pair(x, self.spec.k - 1, q_sign);
        let scaled = SignedLogValue {
            log_magnitude: pair.log_magnitude + (self.spec.k as f64).ln(),
            ..pair
        };
        let dt = SignedLogValue::from_f64(eval_terms(&self.dt_terms[r - 1], x));
        Ok(PwefEval {
            value: scaled.sub(dt),
            q_vanished,
        })
    }

    pub fn eval_db(&self, x: &[f64], r: usize) -> Result<SignedLogValue> {
        Ok(self.eval_db_flagged(x, r)?.value)
    }
}

/// Signed-log value of `B^{(M)}(x)`.
pub fn eval_b(spec: PwefSpec, x: &[f64]) -> Result<SignedLogValue> {
    ClosedFormPwef::new(spec).eval_b(x)
}

/// Signed-log value of `∂B^{(M)}/∂x_r` at `x`, `r` 1-based.
pub fn eval_db(spec: PwefSpec, x: &[f64], r: usize) -> Result<SignedLogValue> {
    ClosedFormPwef::new(spec).eval_db(x, r)
}
