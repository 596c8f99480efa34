//! Brute-force ground truth on small instances.
//!
//! Degree-M pseudocodewords are enumerated two independent ways: as integer
//! points of the fundamental cone with even check sums, and as projections of
//! the codewords of every M-cover. Their types are compared with the S-set
//! conditions and with the expanded PWEF.

mod lemma;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pwef::{build_b, multinomial, s_set, PwefSpec};

pub use lemma::{verify_lemma_asymptotics, LemmaReport, LemmaRow};

/// Largest `(M+1)^n` scanned by [`enumerate_pseudocodewords`].
pub const MAX_CONE_SCAN: u128 = 10_000_000;
/// Largest `(M!)^E · 2^{Mn}` scanned by [`enumerate_cover_codewords`].
pub const MAX_COVER_WORK: u128 = 100_000_000;

pub type Pseudocodeword = Vec<u32>;

/// Binary parity-check matrix stored by row supports `I_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParityCheckMatrix {
    n: usize,
    rows: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// From a dense 0/1 matrix.
    pub fn new(entries: &[Vec<u8>]) -> Result<Self> {
        let n = entries.first().map_or(0, |r| r.len());
        if n == 0 {
            return Err(Error::domain(
                "parity-check matrix must have at least one column",
            ));
        }
        let mut rows = Vec::with_capacity(entries.len());
        for (j, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::domain(format!("row {j} has a non-binary entry")));
            }
            rows.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &b)| b == 1)
                    .map(|(i, _)| i)
                    .collect(),
            );
        }
        Self::from_supports(n, rows)
    }

    pub fn from_supports(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (j, r) in rows.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::domain(format!("row {j} is empty")));
            }
            if let Some(&i) = r.iter().find(|&&i| i >= n) {
                return Err(Error::Index { index: i, nvars: n });
            }
        }
        Ok(ParityCheckMatrix { n, rows })
    }

    /// The single parity-check code of length `k`.
    pub fn spc(k: usize) -> Self {
        ParityCheckMatrix {
            n: k,
            rows: vec![(0..k).collect()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    /// Number of edges of the Tanner graph.
    pub fn edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// All codewords, by brute force over `2^n` words.
    pub fn codewords(&self) -> Result<BTreeSet<Pseudocodeword>> {
        enumerate_pseudocodewords(self, 1, Execution::Sequential)
    }
}

/// `(Σ z_i)² / Σ z_i²`.
pub fn awgn_pseudoweight(z: &[u32]) -> Result<f64> {
    let s1: f64 = z.iter().map(|&v| v as f64).sum();
    let s2: f64 = z.iter().map(|&v| (v as f64) * (v as f64)).sum();
    if s2 == 0.0 {
        return Err(Error::UndefinedWeight);
    }
    Ok(s1 * s1 / s2)
}

/// Every check neighbor is at most the sum of the other neighbors.
pub fn in_fundamental_cone(z: &[u32], h: &ParityCheckMatrix) -> bool {
    h.rows.iter().all(|row| {
        let total: u64 = row.iter().map(|&i| z[i] as u64).sum();
        row.iter().all(|&i| 2 * z[i] as u64 <= total)
    })
}

/// Cone membership plus even check sums.
pub fn is_pseudocodeword(z: &[u32], h: &ParityCheckMatrix) -> bool {
    z.len() == h.n
        && in_fundamental_cone(z, h)
        && h.rows
            .iter()
            .all(|row| row.iter().map(|&i| z[i] as u64).sum::<u64>() % 2 == 0)
}

/// `u_r = |{i : z_i = r}|`.
pub fn type_of(z: &[u32], m: usize) -> Result<Vec<u32>> {
    let mut u = vec![0u32; m];
    for &v in z {
        if v as usize > m {
            return Err(Error::domain(format!(
                "entry {v} exceeds the cover degree {m}"
            )));
        }
        if v > 0 {
            u[v as usize - 1] += 1;
        }
    }
    Ok(u)
}

/// Multiplicity of each type in a set of pseudocodewords.
pub fn type_counts(set: &BTreeSet<Pseudocodeword>, m: usize) -> Result<BTreeMap<Vec<u32>, BigInt>> {
    let mut out: BTreeMap<Vec<u32>, BigInt> = BTreeMap::new();
    for z in set {
        *out.entry(type_of(z, m)?).or_insert_with(BigInt::zero) += 1;
    }
    Ok(out)
}

fn checked_pow(base: u128, exp: usize) -> Option<u128> {
    (0..exp).try_fold(1u128, |acc, _| acc.checked_mul(base))
}

fn chunks(total: u128, pieces: u128) -> Vec<(u128, u128)> {
    let pieces = pieces.clamp(1, total.max(1));
    let size = total.div_ceil(pieces);
    (0..pieces)
        .map(|c| (c * size, ((c + 1) * size).min(total)))
        .filter(|(a, b)| a < b)
        .collect()
}

/// All `z ∈ {0..M}^n` that are pseudocodewords of `h`.
pub fn enumerate_pseudocodewords(
    h: &ParityCheckMatrix,
    m: usize,
    exec: Execution,
) -> Result<BTreeSet<Pseudocodeword>> {
    if m == 0 {
        return Err(Error::domain("cover degree must be >= 1"));
    }
    let base = m as u128 + 1;
    let total = checked_pow(base, h.n)
        .filter(|&t| t <= MAX_CONE_SCAN)
        .ok_or_else(|| {
            Error::Resource(format!(
                "(M+1)^n = {}^{} exceeds {MAX_CONE_SCAN}",
                base, h.n
            ))
        })?;
    let parts = exec.map(&chunks(total, 64), |&(lo, hi)| {
        let mut found = Vec::new();
        let mut z = vec![0u32; h.n];
        for idx in lo..hi {
            let mut rest = idx;
            for slot in z.iter_mut() {
                *slot = (rest % base) as u32;
                rest /= base;
            }
            if is_pseudocodeword(&z, h) {
                found.push(z.clone());
            }
        }
        found
    });
    Ok(parts.into_iter().flatten().collect())
}

/// All permutations of `0..m` in lexicographic order.
fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                go(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// Projections of the codewords of every M-cover of `h`.
///
/// Each base edge `(j, i)` carries a permutation `π`; copy `a` of check `j`
/// is joined to copy `π(a)` of variable `i`. With `fix_first_edge` the first
/// edge of every check is pinned to the identity, which relabels the copies
/// of each check and leaves the projected set unchanged.
pub fn enumerate_cover_codewords(
    h: &ParityCheckMatrix,
    m: usize,
    fix_first_edge: bool,
    exec: Execution,
) -> Result<BTreeSet<Pseudocodeword>> {
    if m == 0 {
        return Err(Error::domain("cover degree must be >= 1"));
    }
    let bits = m * h.n;
    if bits > 63 {
        return Err(Error::Resource(format!(
            "M·n = {bits} lifted variables exceed 63"
        )));
    }
    let perms = permutations(m);
    let edges: Vec<(usize, usize, bool)> = h
        .rows
        .iter()
        .enumerate()
        .flat_map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(move |(p, &i)| (j, i, fix_first_edge && p == 0))
        })
        .collect();
    let free: Vec<usize> = (0..edges.len()).filter(|&e| !edges[e].2).collect();
    let covers = checked_pow(perms.len() as u128, free.len());
    let work = covers.and_then(|c| c.checked_mul(1u128 << bits));
    let covers = match (covers, work) {
        (Some(c), Some(w)) if w <= MAX_COVER_WORK => c,
        _ => {
            return Err(Error::Resource(format!(
                "(M!)^E · 2^(Mn) with M = {m}, E = {}, n = {} exceeds {MAX_COVER_WORK}",
                free.len(),
                h.n
            )))
        }
    };

    let parts = exec.map(&chunks(covers, 64), |&(lo, hi)| {
        let mut found = BTreeSet::new();
        let mut choice = vec![0usize; edges.len()];
        for idx in lo..hi {
            let mut rest = idx;
            for &e in &free {
                choice[e] = (rest % perms.len() as u128) as usize;
                rest /= perms.len() as u128;
            }
            // Lifted check (j, a) as a bitmask over lifted variables (i, r) ↦ i·M + r.
            let mut masks = vec![0u64; h.m() * m];
            for (e, &(j, i, _)) in edges.iter().enumerate() {
                let pi = &perms[choice[e]];
                for a in 0..m {
                    masks[j * m + a] |= 1u64 << (i * m + pi[a]);
                }
            }
            for word in 0u64..(1u64 << bits) {
                if masks.iter().all(|mask| (word & mask).count_ones() % 2 == 0) {
                    let z: Pseudocodeword = (0..h.n)
                        .map(|i| ((word >> (i * m)) & ((1u64 << m) - 1)).count_ones())
                        .collect();
                    found.insert(z);
                }
            }
        }
        found
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Comparison of two methods on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub instance: serde_json::Value,
    pub method_a: String,
    pub method_b: String,
    pub agree: bool,
    pub mismatches: Vec<serde_json::Value>,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Type counts of the cone enumeration of SPC(k) against `C(k; u)·1[u ∈ S]`
/// and against the coefficients of the expanded `B^{(M)}`.
pub fn verify_s_set(spec: PwefSpec, exec: Execution) -> Result<VerifyReport> {
    let h = ParityCheckMatrix::spc(spec.k as usize);
    let counts = type_counts(&enumerate_pseudocodewords(&h, spec.m, exec)?, spec.m)?;
    let predicted: BTreeMap<Vec<u32>, BigInt> = s_set(spec).into_iter().collect();
    let b = build_b(spec)?;
    let expanded: BTreeMap<Vec<u32>, BigInt> =
        b.terms().map(|(e, c)| (e.clone(), c.clone())).collect();

    let keys: BTreeSet<&Vec<u32>> = counts
        .keys()
        .chain(predicted.keys())
        .chain(expanded.keys())
        .collect();
    let zero = BigInt::zero();
    let mismatches: Vec<serde_json::Value> = keys
        .into_iter()
        .filter_map(|u| {
            let a = counts.get(u).unwrap_or(&zero);
            let s = predicted.get(u).unwrap_or(&zero);
            let e = expanded.get(u).unwrap_or(&zero);
            (a != s || s != e).then(|| {
                serde_json::json!({
                    "u": u,
                    "enumerated": a.to_string(),
                    "s_set": s.to_string(),
                    "pwef_coefficient": e.to_string(),
                })
            })
        })
        .collect();
    Ok(VerifyReport {
        instance: serde_json::json!({ "code": "spc", "k": spec.k, "M": spec.m }),
        method_a: "cone+parity enumeration, type multiplicities".into(),
        method_b: "S-set conditions with multinomial counts, and expanded PWEF coefficients".into(),
        agree: mismatches.is_empty(),
        mismatches,
    })
}

/// Projected M-cover codewords of SPC(k) against the cone+parity set.
pub fn verify_cover(spec: PwefSpec, fix_first_edge: bool, exec: Execution) -> Result<VerifyReport> {
    let h = ParityCheckMatrix::spc(spec.k as usize);
    let lifted = enumerate_cover_codewords(&h, spec.m, fix_first_edge, exec)?;
    let cone = enumerate_pseudocodewords(&h, spec.m, exec)?;
    let mut mismatches: Vec<serde_json::Value> = lifted
        .difference(&cone)
        .map(|z| serde_json::json!({ "z": z, "only_in": "cover" }))
        .collect();
    mismatches.extend(
        cone.difference(&lifted)
            .map(|z| serde_json::json!({ "z": z, "only_in": "cone" })),
    );
    Ok(VerifyReport {
        instance: serde_json::json!({
            "code": "spc",
            "k": spec.k,
            "M": spec.m,
            "fix_first_edge": fix_first_edge,
        }),
        method_a: "M-cover lifting, projected codewords".into(),
        method_b: "cone+parity enumeration".into(),
        agree: mismatches.is_empty(),
        mismatches,
    })
}

/// `Σ_u C(k; u)` over the S-set, i.e. the number of pseudocodewords of SPC(k)
/// with entries at most M.
pub fn s_set_total(spec: PwefSpec) -> BigInt {
    s_set(spec)
        .into_iter()
        .fold(BigInt::zero(), |acc, (_, c)| acc + c)
}

/// `C(k; u)` for a full type vector, or zero when `Σu > k`.
pub fn type_multiplicity(k: u64, u: &[u32]) -> BigInt {
    if u.iter().map(|&v| v as u64).sum::<u64>() > k {
        return BigInt::zero();
    }
    if u.is_empty() {
        return BigInt::one();
    }
    multinomial(k, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(words: &[&[u32]]) -> BTreeSet<Pseudocodeword> {
        words.iter().map(|w| w.to_vec()).collect()
    }

    #[test]
    fn pseudoweight_examples() {
        assert_eq!(awgn_pseudoweight(&[1, 1, 0]).unwrap(), 2.0);
        assert_eq!(awgn_pseudoweight(&[2, 2]).unwrap(), 2.0);
        assert!((awgn_pseudoweight(&[2, 1, 1]).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(awgn_pseudoweight(&[0, 0]), Err(Error::UndefinedWeight));
    }

    #[test]
    fn cone_and_parity_examples() {
        let h = ParityCheckMatrix::spc(3);
        assert!(in_fundamental_cone(&[1, 1, 0], &h));
        assert!(!in_fundamental_cone(&[2, 1, 0], &h));
        assert!(in_fundamental_cone(&[2, 1, 1], &h));
        assert!(!is_pseudocodeword(&[1, 1, 1], &h));
        assert!(is_pseudocodeword(&[2, 1, 1], &h));
        assert!(is_pseudocodeword(&[0, 0, 0], &h));
        let h6 = ParityCheckMatrix::spc(6);
        assert!(in_fundamental_cone(&[1, 1, 0, 0, 0, 0], &h6));
    }

    #[test]
    fn type_examples() {
        assert_eq!(type_of(&[2, 1, 1], 2).unwrap(), vec![2, 1]);
        assert_eq!(type_of(&[0, 0], 2).unwrap(), vec![0, 0]);
        assert_eq!(type_of(&[1, 1, 0, 2], 3).unwrap(), vec![2, 1, 0]);
        assert!(type_of(&[3], 2).is_err());
    }

    #[test]
    fn spc3_degree_one_is_even_weight() {
        let h = ParityCheckMatrix::spc(3);
        let got = enumerate_pseudocodewords(&h, 1, Execution::Sequential).unwrap();
        assert_eq!(got, set(&[&[0, 0, 0], &[1, 1, 0], &[1, 0, 1], &[0, 1, 1]]));
    }

    #[test]
    fn spc2_degree_two() {
        let h = ParityCheckMatrix::spc(2);
        let want = set(&[&[0, 0], &[1, 1], &[2, 2]]);
        assert_eq!(
            enumerate_pseudocodewords(&h, 2, Execution::Sequential).unwrap(),
            want
        );
        assert_eq!(
            enumerate_cover_codewords(&h, 2, false, Execution::Sequential).unwrap(),
            want
        );
    }

    #[test]
    fn cover_and_cone_differ_only_at_all_twos_for_spc3() {
        // (2,2,2) lies in the cone with even sum, but every check copy of a
        // 2-cover would see three ones; it first appears in a 4-cover.
        let h = ParityCheckMatrix::spc(3);
        let cone = enumerate_pseudocodewords(&h, 2, Execution::Sequential).unwrap();
        for fix in [false, true] {
            let lifted = enumerate_cover_codewords(&h, 2, fix, Execution::Parallel).unwrap();
            let extra: Vec<_> = cone.difference(&lifted).cloned().collect();
            assert_eq!(extra, vec![vec![2, 2, 2]]);
            assert!(lifted.is_subset(&cone));
        }
        let four = enumerate_cover_codewords(&h, 4, true, Execution::Parallel).unwrap();
        assert!(four.contains(&vec![2, 2, 2]));
        let report =
            verify_cover(PwefSpec::new(2, 3).unwrap(), false, Execution::Sequential).unwrap();
        assert!(!report.agree);
        assert_eq!(report.mismatches.len(), 1);
    }

    #[test]
    fn degree_one_cover_is_the_code() {
        let h = ParityCheckMatrix::new(&[vec![1, 1, 0, 1], vec![0, 1, 1, 1]]).unwrap();
        assert_eq!(
            enumerate_cover_codewords(&h, 1, false, Execution::Sequential).unwrap(),
            h.codewords().unwrap()
        );
    }

    #[test]
    fn s_set_agreement_small() {
        for k in 2..=5 {
            for m in 1..=3 {
                let r = verify_s_set(PwefSpec::new(m, k).unwrap(), Execution::Parallel).unwrap();
                assert!(r.agree, "k={k} m={m}: {:?}", r.mismatches);
            }
        }
    }

    #[test]
    fn resource_guards() {
        let big = ParityCheckMatrix::spc(30);
        assert!(matches!(
            enumerate_pseudocodewords(&big, 3, Execution::Sequential),
            Err(Error::Resource(_))
        ));
        assert!(matches!(
            enumerate_cover_codewords(&ParityCheckMatrix::spc(6), 3, false, Execution::Sequential),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn matrix_validation() {
        assert!(ParityCheckMatrix::new(&[vec![1, 2]]).is_err());
        assert!(ParityCheckMatrix::new(&[vec![0, 0]]).is_err());
        assert!(ParityCheckMatrix::new(&[vec![1, 0], vec![1]]).is_err());
        assert!(ParityCheckMatrix::from_supports(3, vec![vec![0, 5]]).is_err());
        let h = ParityCheckMatrix::new(&[vec![1, 0, 1]]).unwrap();
        assert_eq!(h.row(0), &[0, 2]);
        assert_eq!(h.edges(), 2);
    }

    #[test]
    fn s_set_total_counts() {
        // SPC(3), M = 2: zero, three (1,1,0), three (2,2,0), (2,2,2) and three (2,1,1).
        assert_eq!(s_set_total(PwefSpec::new(2, 3).unwrap()), BigInt::from(11));
        assert_eq!(type_multiplicity(3, &[2, 1]), BigInt::from(3));
        assert_eq!(type_multiplicity(3, &[3, 1]), BigInt::zero());
    }

    fn random_matrix() -> impl Strategy<Value = ParityCheckMatrix> {
        (2usize..=8, 1usize..=4).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::vec(0u8..=1, n), m)
                .prop_filter_map("rows must be nonempty", |rows| {
                    ParityCheckMatrix::new(&rows).ok()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn degree_one_pseudocodewords_are_codewords(h in random_matrix()) {
            let pcw = enumerate_pseudocodewords(&h, 1, Execution::Sequential).unwrap();
            for z in &pcw {
                prop_assert!(h.rows.iter().all(|r| r.iter().map(|&i| z[i]).sum::<u32>() % 2 == 0));
            }
            let all = (0u32..(1 << h.n)).filter(|w| {
                h.rows.iter().all(|r| r.iter().map(|&i| (w >> i) & 1).sum::<u32>() % 2 == 0)
            }).count();
            prop_assert_eq!(pcw.len(), all);
        }

        #[test]
        fn pseudoweight_scale_invariant_and_bounded(z in proptest::collection::vec(0u32..=4, 1..10), c in 1u32..6) {
            prop_assume!(z.iter().any(|&v| v > 0));
            let w = awgn_pseudoweight(&z).unwrap();
            let scaled: Vec<u32> = z.iter().map(|v| v * c).collect();
            prop_assert!((awgn_pseudoweight(&scaled).unwrap() - w).abs() <= 1e-12 * w);
            prop_assert!(w >= 1.0 - 1e-12 && w <= z.len() as f64 + 1e-12);
        }
    }
}
