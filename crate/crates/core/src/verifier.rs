//! Machine checks for a built scheme.
//!
//! Entropies of linear functions of i.i.d. uniform symbols are ranks of their
//! coefficient matrices, in `log_q` units per piece-column. Security is the
//! conditional mutual information between the full transcript and the
//! gradients given their sum, evaluated through ranks; a brute-force
//! enumeration oracle validates the rank method on tiny fields.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::exactmat::{FieldMatrix, MatrixError};
use crate::field::FieldModulus;
use crate::keyspace::{binom, subsets, KeyGroupIndex};
use crate::scheme::{gradient_columns, SchemeArtifact};

/// Largest `q^vars` the brute-force oracle will enumerate.
pub const BRUTEFORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("enumeration of {0} assignments exceeds the limit of 10^6")]
    TooLarge(u128),
    #[error("observable has {found} columns, expected {expected}")]
    VariableCount { expected: usize, found: usize },
    #[error("a probability is not a power of 1/q, so the entropy is not rational")]
    NotExact,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// A linear function `coeff * V` of the independent uniform variables `V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearObservable {
    pub coeff: FieldMatrix,
}

impl LinearObservable {
    pub fn new(coeff: FieldMatrix) -> Self {
        LinearObservable { coeff }
    }

    pub fn variables(&self) -> usize {
        self.coeff.cols()
    }

    /// Every transmitted symbol: all `r*N` rows of `C F`.
    pub fn transcript(scheme: &SchemeArtifact) -> Self {
        LinearObservable::new(scheme.transmission_coefficients())
    }

    /// `G = [I_{nK} | 0]`: the gradient pieces themselves.
    pub fn gradients(scheme: &SchemeArtifact) -> Self {
        let q = scheme.params.modulus;
        let g = scheme.gradient_column_count();
        let keys = scheme.dims.key_columns();
        LinearObservable::new(
            FieldMatrix::hstack(&[
                &FieldMatrix::identity(q, g),
                &FieldMatrix::zeros(q, g, keys),
            ])
            .expect("row counts agree"),
        )
    }

    /// `[F1 | 0]`: the piece sums `sum_k g_{k,i}`.
    pub fn sum(scheme: &SchemeArtifact) -> Self {
        LinearObservable::new(scheme.demand.matrix().row_range(0, scheme.dims.n))
    }

    /// The joint observable `[self; other]`.
    pub fn join(&self, other: &LinearObservable) -> Result<Self, MatrixError> {
        Ok(LinearObservable::new(FieldMatrix::vstack(&[
            &self.coeff,
            &other.coeff,
        ])?))
    }
}

/// `H(obs)` in `log_q` units: the rank of its coefficients.
pub fn rank_entropy(obs: &LinearObservable) -> BigRational {
    BigRational::from_integer(BigInt::from(obs.coeff.rank()))
}

/// `I(X; Y | Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z)`, by ranks.
pub fn conditional_mi(
    x: &LinearObservable,
    y: &LinearObservable,
    z: &LinearObservable,
) -> Result<BigRational, MatrixError> {
    let xz = x.join(z)?;
    let yz = y.join(z)?;
    let xyz = x.join(&yz)?;
    Ok(rank_entropy(&xz) + rank_entropy(&yz) - rank_entropy(&xyz) - rank_entropy(z))
}

/// `I(X_1..X_N; g_1..g_K | sum_k g_k)` per piece-column.
///
/// Equal to `[rank([A; Ssum]) - rank(Ssum)] - [rank([A; G]) - rank(G)]`.
/// Both brackets are evaluated as `rank(A * B)` with `B` a basis of the
/// right kernel of the conditioning matrix: for `G` that is the key columns of
/// `A`; for `Ssum` it is the key columns plus, per piece, the differences of
/// gradient columns within that piece.
pub fn conditional_mi_rank(scheme: &SchemeArtifact) -> BigRational {
    let a = scheme.transmission_coefficients();
    mi_from_coefficients(scheme, &a)
}

fn mi_from_coefficients(scheme: &SchemeArtifact, a: &FieldMatrix) -> BigRational {
    let q = scheme.params.modulus;
    let k_count = scheme.params.datasets;
    let gcols = scheme.gradient_column_count();
    let a_keys = a.col_range(gcols, a.cols());
    let mut diffs = FieldMatrix::zeros(q, a.rows(), scheme.dims.n * (k_count - 1));
    for i in 0..scheme.dims.n {
        let last = k_count - 1 + i * k_count;
        for k in 0..k_count - 1 {
            let col = k + i * k_count;
            let out = k + i * (k_count - 1);
            for row in 0..a.rows() {
                diffs.set(row, out, q.sub(a.get(row, col), a.get(row, last)));
            }
        }
    }
    let given_sum = FieldMatrix::hstack(&[&diffs, &a_keys])
        .expect("row counts agree")
        .rank();
    let given_gradients = a_keys.rank();
    BigRational::from_integer(BigInt::from(given_sum) - BigInt::from(given_gradients))
}

/// The same quantity computed literally from the four stacked ranks.
pub fn conditional_mi_direct(scheme: &SchemeArtifact) -> BigRational {
    conditional_mi(
        &LinearObservable::transcript(scheme),
        &LinearObservable::gradients(scheme),
        &LinearObservable::sum(scheme),
    )
    .expect("observables share the variable space")
}

fn check_oracle_size(q: FieldModulus, vars: usize) -> Result<u128, OracleError> {
    let mut total: u128 = 1;
    for _ in 0..vars {
        total = total.saturating_mul(q.q() as u128);
        if total > BRUTEFORCE_LIMIT {
            return Err(OracleError::TooLarge(total));
        }
    }
    Ok(total)
}

/// Shannon entropy (base `q`) of each observable by exhaustive enumeration of
/// all `q^vars` assignments.
///
/// Exact only when every outcome probability is `q^{-e}`, which holds for
/// linear maps of uniform variables; anything else is `NotExact`.
pub fn entropy_bruteforce(
    observables: &[LinearObservable],
    q: FieldModulus,
    vars: usize,
) -> Result<Vec<BigRational>, OracleError> {
    let total = check_oracle_size(q, vars)?;
    for obs in observables {
        if obs.variables() != vars {
            return Err(OracleError::VariableCount {
                expected: vars,
                found: obs.variables(),
            });
        }
    }
    let mut counts: Vec<HashMap<Vec<u64>, u64>> = vec![HashMap::new(); observables.len()];
    let mut assignment = vec![0u64; vars];
    for _ in 0..total {
        for (obs, table) in observables.iter().zip(counts.iter_mut()) {
            let c = &obs.coeff;
            let out: Vec<u64> = (0..c.rows())
                .map(|r| {
                    c.row(r)
                        .iter()
                        .zip(&assignment)
                        .fold(0, |acc, (&a, &x)| q.mul_add(acc, a, x))
                })
                .collect();
            *table.entry(out).or_insert(0) += 1;
        }
        // odometer increment in base q
        for digit in assignment.iter_mut() {
            *digit += 1;
            if *digit < q.q() {
                break;
            }
            *digit = 0;
        }
    }
    counts
        .iter()
        .map(|table| exact_entropy(table.values().copied(), total as u64, q.q(), vars))
        .collect()
}

/// `-sum p log_q p` with `p = c / q^vars`; exact when each `c` is a power of
/// `q`, since then `-p log_q p = p * (vars - log_q c)`.
fn exact_entropy(
    counts: impl Iterator<Item = u64>,
    total: u64,
    q: u64,
    vars: usize,
) -> Result<BigRational, OracleError> {
    let mut h = BigRational::zero();
    for c in counts {
        let e = exact_log(c, q).ok_or(OracleError::NotExact)?;
        let p = BigRational::new(BigInt::from(c), BigInt::from(total));
        h += p * BigRational::from_integer(BigInt::from(vars as i64 - e as i64));
    }
    Ok(h)
}

fn exact_log(mut c: u64, q: u64) -> Option<u32> {
    let mut e = 0;
    while c > 1 {
        if !c.is_multiple_of(q) {
            return None;
        }
        c /= q;
        e += 1;
    }
    (c == 1).then_some(e)
}

/// `I(X; Y | Z)` from brute-force entropies.
pub fn conditional_mi_bruteforce(
    x: &LinearObservable,
    y: &LinearObservable,
    z: &LinearObservable,
    q: FieldModulus,
) -> Result<BigRational, OracleError> {
    let xz = x.join(z)?;
    let yz = y.join(z)?;
    let xyz = x.join(&yz)?;
    let h = entropy_bruteforce(&[xz, yz, xyz, z.clone()], q, x.variables())?;
    Ok(&h[0] + &h[1] - &h[2] - &h[3])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodabilityReport {
    pub subsets_checked: usize,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_subset: Option<Vec<usize>>,
}

/// Every `C_U` over `Nr`-subsets in lexicographic order must be invertible;
/// stops at the first failure.
pub fn verify_decodability(scheme: &SchemeArtifact) -> DecodabilityReport {
    let d = scheme.coding.matrix().cols();
    let mut checked = 0;
    for u in subsets(scheme.params.servers, scheme.params.responders) {
        checked += 1;
        let c_u = scheme.coding.stacked(&u);
        if c_u.rows() != d || c_u.rank() != d {
            return DecodabilityReport {
                subsets_checked: checked,
                pass: false,
                failing_subset: Some(u),
            };
        }
    }
    DecodabilityReport {
        subsets_checked: checked,
        pass: true,
        failing_subset: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Gradient { dataset: usize },
    Key { group: usize },
}

/// A nonzero coefficient of server `server` on a column it may not use.
/// `column` is 1-based in the column layout of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EncodabilityViolation {
    pub server: usize,
    pub column: usize,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodabilityReport {
    pub violations: Vec<EncodabilityViolation>,
}

impl EncodabilityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_encodability(scheme: &SchemeArtifact) -> EncodabilityReport {
    encodability_of(scheme, &scheme.transmission_coefficients())
}

fn encodability_of(scheme: &SchemeArtifact, p: &FieldMatrix) -> EncodabilityReport {
    let params = &scheme.params;
    let dims = &scheme.dims;
    let gcols = scheme.gradient_column_count();
    let groups = KeyGroupIndex::new(params.servers, params.group_size).expect("params validated");
    let mut violations = Vec::new();
    for server in 1..=params.servers {
        let rows = scheme.coding.rows_of(&[server]);
        let mut forbidden: Vec<(usize, ColumnKind)> = Vec::new();
        for k in 1..=params.datasets {
            if !scheme.assignment.holds(server, k) {
                for col in gradient_columns(k, params.datasets, dims.n) {
                    forbidden.push((col, ColumnKind::Gradient { dataset: k }));
                }
            }
        }
        for v in 1..=dims.key_groups {
            if !groups.contains(v, server) {
                for j in 0..dims.alpha {
                    forbidden.push((
                        gcols + v - 1 + j * dims.key_groups,
                        ColumnKind::Key { group: v },
                    ));
                }
            }
        }
        forbidden.sort_unstable_by_key(|&(c, _)| c);
        for (col, kind) in forbidden {
            if rows.iter().any(|&r| p.get(r, col) != 0) {
                violations.push(EncodabilityViolation {
                    server,
                    column: col + 1,
                    kind,
                });
            }
        }
    }
    EncodabilityReport { violations }
}

fn serialize_rational<S: Serializer>(value: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&value.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecurityReport {
    #[serde(serialize_with = "serialize_rational")]
    pub mi_value: BigRational,
}

impl SecurityReport {
    pub fn pass(&self) -> bool {
        self.mi_value.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DimsReport {
    pub identity_holds: bool,
}

/// Pass/fail of every check, with witnesses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub decodability: DecodabilityReport,
    pub encodability: EncodabilityReport,
    pub security: SecurityReport,
    pub dims: DimsReport,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.decodability.pass
            && self.encodability.pass()
            && self.security.pass()
            && self.dims.identity_holds
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Runs decodability, encodability, security and the dimension identity.
pub fn certify(scheme: &SchemeArtifact) -> Certificate {
    let p = scheme.transmission_coefficients();
    let dims = &scheme.dims;
    let shapes_ok = scheme.coding.matrix().shape()
        == (
            dims.r * scheme.params.servers,
            dims.r * scheme.params.responders,
        )
        && scheme.demand.matrix().shape() == (dims.f_rows, dims.f_cols);
    Certificate {
        decodability: verify_decodability(scheme),
        encodability: encodability_of(scheme, &p),
        security: SecurityReport {
            mi_value: mi_from_coefficients(scheme, &p),
        },
        dims: DimsReport {
            identity_holds: shapes_ok && dims.identity_holds(scheme.params.responders),
        },
    }
}

/// Whether every transmission is determined by those of any `Nr` servers:
/// `rank(A) = rank(A_U)` for every responder set `U`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeterminismReport {
    pub rank_all: usize,
    pub subsets_checked: usize,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_subset: Option<Vec<usize>>,
}

pub fn verify_transcript_determinism(scheme: &SchemeArtifact) -> DeterminismReport {
    let a = scheme.transmission_coefficients();
    let rank_all = a.rank();
    let mut checked = 0;
    for u in subsets(scheme.params.servers, scheme.params.responders) {
        checked += 1;
        if a.select_rows(&scheme.coding.rows_of(&u)).rank() != rank_all {
            return DeterminismReport {
                rank_all,
                subsets_checked: checked,
                holds: false,
                failing_subset: Some(u),
            };
        }
    }
    DeterminismReport {
        rank_all,
        subsets_checked: checked,
        holds: true,
        failing_subset: None,
    }
}

/// `H(X_all)` by rank against the `n` sum symbols plus `alpha*C(N,S)` key
/// symbols that bound it. A strict inequality is reported, never failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntropyChainReport {
    pub transcript_rank: usize,
    pub bound: usize,
    pub tight: bool,
}

pub fn replay_entropy_chain(scheme: &SchemeArtifact) -> EntropyChainReport {
    let transcript_rank = scheme.transmission_coefficients().rank();
    let bound = scheme.dims.n + scheme.dims.key_columns();
    EntropyChainReport {
        transcript_rank,
        bound,
        tight: transcript_rank == bound,
    }
}

/// `f(x) = alpha (C(N,S) - C(N-x,S)) / x` over `x in [N-M]` and
/// `g(x) = (n + alpha (C(N,S) - C(N-x,S))) / x` over `x in [Nr]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotonicityReport {
    pub f: Vec<BigRational>,
    pub g: Vec<BigRational>,
    pub r: BigRational,
    pub f_strictly_decreasing: bool,
    pub g_nonincreasing: bool,
    pub f_endpoint_is_r: bool,
    pub g_endpoint_is_r: bool,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.f_strictly_decreasing
            && self.g_nonincreasing
            && self.f_endpoint_is_r
            && self.g_endpoint_is_r
    }
}

/// Requires a feasible `(N, Nr, M, S)`; `K` plays no role.
pub fn verify_monotonicity(
    servers: usize,
    responders: usize,
    replication: usize,
    group_size: usize,
) -> MonotonicityReport {
    let big = |v: u64| BigInt::from(v);
    let total = big(binom(servers, group_size));
    let alpha = BigInt::from(servers - replication);
    let r = &total - big(binom(replication, group_size));
    let n = &r * BigInt::from(responders) - &total * &alpha;
    let reach = |x: usize| &total - big(binom(servers - x, group_size));
    let f: Vec<BigRational> = (1..=servers - replication)
        .map(|x| BigRational::new(&alpha * reach(x), BigInt::from(x)))
        .collect();
    let g: Vec<BigRational> = (1..=responders)
        .map(|x| BigRational::new(&n + &alpha * reach(x), BigInt::from(x)))
        .collect();
    let r = BigRational::from_integer(r);
    MonotonicityReport {
        f_strictly_decreasing: f.windows(2).all(|w| w[1] < w[0]),
        g_nonincreasing: g.windows(2).all(|w| w[1] <= w[0]),
        f_endpoint_is_r: f.last().is_none_or(|v| *v == r),
        g_endpoint_is_r: g.last() == Some(&r),
        f,
        g,
        r,
    }
}

/// Tampered copies of a scheme; each must fail certification.
pub mod tamper {
    use super::*;
    use crate::scheme::{CodingMatrix, DemandMatrix};

    /// Zeroes 0-based row `row` of `C`.
    pub fn zero_coding_row(scheme: &SchemeArtifact, row: usize) -> SchemeArtifact {
        let mut c = scheme.coding.matrix().clone();
        for col in 0..c.cols() {
            c.set(row, col, 0);
        }
        with_coding(scheme, c)
    }

    /// Adds `delta` to one entry of `C`.
    pub fn perturb_coding(
        scheme: &SchemeArtifact,
        row: usize,
        col: usize,
        delta: u64,
    ) -> SchemeArtifact {
        let mut c = scheme.coding.matrix().clone();
        let q = c.modulus();
        c.set(row, col, q.add(c.get(row, col), q.reduce(delta)));
        with_coding(scheme, c)
    }

    /// Adds `delta` to one entry of `F2`.
    pub fn perturb_f2(
        scheme: &SchemeArtifact,
        row: usize,
        col: usize,
        delta: u64,
    ) -> SchemeArtifact {
        let mut f2 = scheme.demand.f2.clone();
        let q = f2.modulus();
        f2.set(row, col, q.add(f2.get(row, col), q.reduce(delta)));
        let demand = DemandMatrix::assemble(scheme.demand.f1.clone(), f2, scheme.demand.f3.clone())
            .expect("shapes unchanged");
        SchemeArtifact {
            demand,
            ..scheme.clone()
        }
    }

    /// `F3` with its last row zeroed: rank `alpha*C(N,S) - 1`.
    pub fn rank_deficient_f3(scheme: &SchemeArtifact) -> SchemeArtifact {
        let mut f3 = scheme.demand.f3.clone();
        let last = f3.rows() - 1;
        for col in 0..f3.cols() {
            f3.set(last, col, 0);
        }
        let demand = scheme.demand.with_key_block(f3).expect("shapes unchanged");
        SchemeArtifact {
            demand,
            ..scheme.clone()
        }
    }

    fn with_coding(scheme: &SchemeArtifact, c: FieldMatrix) -> SchemeArtifact {
        SchemeArtifact {
            coding: CodingMatrix::from_matrix(c, scheme.dims.r, scheme.dims.n),
            ..scheme.clone()
        }
    }
}

/// 0-based rows of `C` belonging to servers that lack `dataset`.
pub fn non_holder_rows(scheme: &SchemeArtifact, dataset: usize) -> BTreeSet<usize> {
    let outside = scheme
        .assignment
        .non_holders(dataset, scheme.params.servers);
    scheme.coding.rows_of(&outside).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SeededRng;
    use crate::scheme::{build_scheme, DataAssignment, SchemeParams};
    use num_traits::One;
    use proptest::prelude::*;

    fn q(v: u64) -> FieldModulus {
        FieldModulus::new(v).unwrap()
    }

    fn rat(v: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    fn example() -> SchemeArtifact {
        let p = SchemeParams::new(3, 3, 3, 2, 2, FieldModulus::default()).unwrap();
        let a = DataAssignment::new(vec![vec![2, 3], vec![1, 2], vec![1, 2]]);
        build_scheme(&p, Some(a), 7).unwrap()
    }

    fn scheme(k: usize, n: usize, nr: usize, m: usize, s: usize, seed: u64) -> SchemeArtifact {
        let p = SchemeParams::new(k, n, nr, m, s, FieldModulus::default()).unwrap();
        build_scheme(&p, None, seed).unwrap()
    }

    #[test]
    fn rank_entropy_examples() {
        let f = q(7);
        assert_eq!(
            rank_entropy(&LinearObservable::new(FieldMatrix::identity(f, 4))),
            rat(4)
        );
        let m = FieldMatrix::from_rows(f, &[vec![1, 1], vec![2, 2]]);
        assert_eq!(rank_entropy(&LinearObservable::new(m)), rat(1));
        assert_eq!(
            rank_entropy(&LinearObservable::new(FieldMatrix::zeros(f, 3, 2))),
            rat(0)
        );
    }

    #[test]
    fn bruteforce_examples() {
        let f2 = q(2);
        let xor = LinearObservable::new(FieldMatrix::from_rows(f2, &[vec![1, 1]]));
        assert_eq!(entropy_bruteforce(&[xor], f2, 2).unwrap(), vec![rat(1)]);
        let f3 = q(3);
        let id = LinearObservable::new(FieldMatrix::identity(f3, 2));
        assert_eq!(entropy_bruteforce(&[id], f3, 2).unwrap(), vec![rat(2)]);

        let mut rng = SeededRng::new(3);
        let m = LinearObservable::new(FieldMatrix::random(f2, 3, 4, &mut rng));
        let h = entropy_bruteforce(std::slice::from_ref(&m), f2, 4).unwrap();
        assert_eq!(h[0], rank_entropy(&m));
    }

    #[test]
    fn bruteforce_limits() {
        let big = LinearObservable::new(FieldMatrix::identity(q(11), 6));
        assert!(matches!(
            entropy_bruteforce(&[big], q(11), 6),
            Err(OracleError::TooLarge(_))
        ));
        let wrong = LinearObservable::new(FieldMatrix::identity(q(2), 3));
        assert_eq!(
            entropy_bruteforce(&[wrong], q(2), 2),
            Err(OracleError::VariableCount {
                expected: 2,
                found: 3
            })
        );
        // q^vars = 2^19 is enumerable
        let edge = LinearObservable::new(FieldMatrix::zeros(q(2), 1, 19));
        assert_eq!(entropy_bruteforce(&[edge], q(2), 19).unwrap(), vec![rat(0)]);
    }

    #[test]
    fn non_uniform_counts_are_not_exact() {
        assert!(exact_entropy([1u64, 3].into_iter(), 4, 2, 2).is_err());
        assert_eq!(
            exact_entropy([2u64, 2].into_iter(), 4, 2, 2).unwrap(),
            rat(1)
        );
        assert_eq!(exact_log(9, 3), Some(2));
        assert_eq!(exact_log(6, 3), None);
    }

    #[test]
    fn bruteforce_conditional_mi() {
        // I(x1; x1+x2 | x2) = 1 bit, I(x1; x2 | 0) = 0
        let f = q(2);
        let x1 = LinearObservable::new(FieldMatrix::from_rows(f, &[vec![1, 0]]));
        let x2 = LinearObservable::new(FieldMatrix::from_rows(f, &[vec![0, 1]]));
        let s = LinearObservable::new(FieldMatrix::from_rows(f, &[vec![1, 1]]));
        let none = LinearObservable::new(FieldMatrix::zeros(f, 1, 2));
        assert_eq!(conditional_mi_bruteforce(&x1, &s, &x2, f).unwrap(), rat(1));
        assert_eq!(
            conditional_mi_bruteforce(&x1, &x2, &none, f).unwrap(),
            rat(0)
        );
        assert_eq!(conditional_mi(&x1, &s, &x2).unwrap(), rat(1));
    }

    #[test]
    fn example_certificate() {
        let s = example();
        let cert = certify(&s);
        assert!(cert.passed(), "{cert:?}");
        assert_eq!(cert.decodability.subsets_checked, 1);
        assert_eq!(cert.security.mi_value, rat(0));
        let json: serde_json::Value = serde_json::from_str(&cert.to_json_string()).unwrap();
        assert_eq!(json["decodability"]["subsets_checked"], 1);
        assert_eq!(json["decodability"]["pass"], true);
        assert_eq!(
            json["encodability"]["violations"].as_array().unwrap().len(),
            0
        );
        assert_eq!(json["security"]["mi_value"], "0");
        assert_eq!(json["dims"]["identity_holds"], true);

        // server 1 rows times G_1 columns vanish
        let p = s.transmission_coefficients();
        for row in 0..2 {
            for col in gradient_columns(1, 3, 3) {
                assert_eq!(p.get(row, col), 0);
            }
        }
    }

    #[test]
    fn certificate_survives_round_trip() {
        let s = scheme(4, 5, 4, 3, 3, 11);
        let back = SchemeArtifact::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(certify(&s), certify(&back));
    }

    #[test]
    fn straggling_scheme_checks_every_subset() {
        let s = scheme(4, 5, 4, 3, 3, 11);
        let d = verify_decodability(&s);
        assert_eq!((d.subsets_checked, d.pass), (5, true));
        assert!(certify(&s).passed());
    }

    #[test]
    fn full_group_has_no_key_constraints() {
        let s = scheme(2, 4, 4, 2, 4, 5);
        let rep = verify_encodability(&s);
        assert!(rep.pass());
        // tamper with a key column: still allowed since every server holds the key
        let t = tamper::perturb_coding(&s, 0, s.dims.n, 1);
        assert!(verify_encodability(&t)
            .violations
            .iter()
            .all(|v| matches!(v.kind, ColumnKind::Gradient { .. })));
    }

    #[test]
    fn rank_shortcut_matches_definition() {
        let mut schemes = vec![
            example(),
            scheme(4, 5, 4, 3, 3, 11),
            scheme(1, 3, 3, 2, 3, 0),
        ];
        schemes.push(tamper::rank_deficient_f3(&schemes[1]));
        schemes.push(tamper::perturb_f2(&schemes[0], 0, 0, 5));
        for s in &schemes {
            assert_eq!(conditional_mi_rank(s), conditional_mi_direct(s));
        }
    }

    #[test]
    fn zeroed_row_breaks_decodability() {
        let s = example();
        let t = tamper::zero_coding_row(&s, 0);
        let cert = certify(&t);
        assert!(!cert.passed());
        assert_eq!(cert.decodability.failing_subset, Some(vec![1, 2, 3]));

        let s = scheme(4, 5, 4, 3, 3, 11);
        let t = tamper::zero_coding_row(&s, s.dims.r * 4);
        let d = verify_decodability(&t);
        assert!(!d.pass);
        // server 5 first appears in {1,2,3,5}, the second subset
        assert_eq!(d.failing_subset, Some(vec![1, 2, 3, 5]));
        assert_eq!(d.subsets_checked, 2);
    }

    #[test]
    fn corrupted_f2_is_caught_at_its_column() {
        let s = example();
        // dataset 1 is missing at server 1; pick the key row server 1 can use
        let rows = non_holder_rows(&s, 1);
        let c_q = s.coding.key_block();
        let key_row = (0..c_q.cols())
            .find(|&j| rows.iter().any(|&r| c_q.get(r, j) != 0))
            .unwrap();
        let t = tamper::perturb_f2(&s, key_row, 0, 1);
        let rep = verify_encodability(&t);
        assert!(rep.violations.contains(&EncodabilityViolation {
            server: 1,
            column: 1,
            kind: ColumnKind::Gradient { dataset: 1 },
        }));
    }

    #[test]
    fn corrupted_c_is_caught() {
        let s = example();
        let t = tamper::perturb_coding(&s, 0, 0, 1);
        assert!(!verify_encodability(&t).pass());
        assert!(!certify(&t).passed());
    }

    #[test]
    fn rank_deficient_f3_leaks() {
        for s in [
            example(),
            scheme(4, 5, 4, 3, 3, 11),
            scheme(2, 4, 3, 2, 3, 2),
        ] {
            let t = tamper::rank_deficient_f3(&s);
            assert!(
                conditional_mi_rank(&t) >= BigRational::one(),
                "{:?}",
                s.params
            );
            assert!(!certify(&t).passed());
        }
    }

    #[test]
    fn single_dataset_never_leaks() {
        let s = scheme(1, 4, 3, 2, 3, 9);
        assert_eq!(conditional_mi_rank(&s), rat(0));
        assert_eq!(conditional_mi_rank(&tamper::rank_deficient_f3(&s)), rat(0));
    }

    #[test]
    fn determinism_and_chain() {
        for s in [
            example(),
            scheme(4, 5, 4, 3, 3, 11),
            scheme(3, 6, 4, 3, 4, 1),
        ] {
            let det = verify_transcript_determinism(&s);
            assert!(det.holds, "{det:?}");
            assert_eq!(
                det.subsets_checked as u64,
                binom(s.params.servers, s.params.responders)
            );
            let chain = replay_entropy_chain(&s);
            assert!(chain.transcript_rank <= chain.bound);
            assert!(chain.tight, "{chain:?}");
        }
    }

    #[test]
    fn key_space_left_kernel_stays_in_sum_space() {
        for s in [
            example(),
            scheme(4, 5, 4, 3, 3, 11),
            scheme(3, 6, 4, 3, 4, 1),
        ] {
            let gcols = s.gradient_column_count();
            let a = s.transmission_coefficients();
            let a_g = a.col_range(0, gcols);
            let kernel = s.coding.key_block().left_nullspace();
            let f1 = &s.demand.f1;
            let mut rng = SeededRng::new(17);
            for _ in 0..5 {
                let mix = FieldMatrix::random(s.params.modulus, 1, kernel.rows(), &mut rng);
                let v = mix.mul(&kernel).unwrap();
                let lhs = v.mul(&a_g).unwrap();
                let rhs = v.mul(&s.coding.gradient_block()).unwrap().mul(f1).unwrap();
                assert_eq!(lhs, rhs);
                assert_eq!(FieldMatrix::vstack(&[f1, &lhs]).unwrap().rank(), f1.rank());
            }
        }
    }

    #[test]
    fn monotonicity_examples() {
        let rep = verify_monotonicity(3, 3, 2, 2);
        assert_eq!(rep.f, vec![rat(2)]);
        assert_eq!(rep.g, vec![rat(5), rat(3), rat(2)]);
        assert_eq!(rep.r, rat(2));
        assert!(rep.passed());

        let rep = verify_monotonicity(14, 12, 8, 6);
        assert_eq!(rep.f.len(), 6);
        assert!(rep.f_strictly_decreasing);
        assert!(rep.passed());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rank_agrees_with_enumeration(
            prime in prop::sample::select(vec![2u64, 3]),
            rows in 1usize..4,
            vars in 1usize..6,
            seed in any::<u64>(),
        ) {
            let f = q(prime);
            let obs = LinearObservable::new(FieldMatrix::random(f, rows, vars, &mut SeededRng::new(seed)));
            let h = entropy_bruteforce(std::slice::from_ref(&obs), f, vars).unwrap();
            prop_assert_eq!(&h[0], &rank_entropy(&obs));
        }

        #[test]
        fn mi_agrees_with_enumeration(seed in any::<u64>(), vars in 2usize..5) {
            let f = q(3);
            let mut rng = SeededRng::new(seed);
            let mut draw = |rows| LinearObservable::new(FieldMatrix::random(f, rows, vars, &mut rng));
            let (x, y, z) = (draw(2), draw(1), draw(1));
            prop_assert_eq!(conditional_mi_bruteforce(&x, &y, &z, f).unwrap(), conditional_mi(&x, &y, &z).unwrap());
        }
    }
}
