//! One round of the protocol: sample gradients and keys, lay them out as `W`,
//! compute every `X_n = C_n F W`, and decode the sum from a responder set.

use std::collections::HashMap;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exactmat::{FieldMatrix, MatrixError};
use crate::field::SeededRng;
use crate::keyspace::binom;
use crate::scheme::SchemeArtifact;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("gradient length {length} is not divisible by the piece count {pieces}")]
    BadLength { length: usize, pieces: usize },
    #[error("expected {expected} responders, got {found}")]
    WrongSubsetSize { expected: usize, found: usize },
    #[error("responder set is invalid: {0:?}")]
    BadResponders(Vec<usize>),
    #[error("responder matrix is singular")]
    Singular,
    #[error("round does not match the scheme: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Gradients and keys for one round, as raw residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundState {
    pub gradients: Vec<Vec<u64>>,
    pub keys: Vec<Vec<u64>>,
    pub length: usize,
    pub piece_len: usize,
}

/// Everything uniform and independent; keys carry `L (N-M) / n` symbols.
pub fn sample_round(
    scheme: &SchemeArtifact,
    length: usize,
    rng: &mut SeededRng,
) -> Result<RoundState, EngineError> {
    let pieces = scheme.dims.n;
    if !length.is_multiple_of(pieces) {
        return Err(EngineError::BadLength { length, pieces });
    }
    let q = scheme.params.modulus;
    let piece_len = length / pieces;
    let key_len = piece_len * scheme.dims.alpha;
    let gradients = (0..scheme.params.datasets)
        .map(|_| rng.residues(q, length))
        .collect();
    let keys = (0..scheme.dims.key_groups)
        .map(|_| rng.residues(q, key_len))
        .collect();
    Ok(RoundState {
        gradients,
        keys,
        length,
        piece_len,
    })
}

impl RoundState {
    /// `sum_k g_k`, computed directly.
    pub fn direct_sum(&self, scheme: &SchemeArtifact) -> Vec<u64> {
        let q = scheme.params.modulus;
        let mut sum = vec![0; self.length];
        for g in &self.gradients {
            for (s, &v) in sum.iter_mut().zip(g) {
                *s = q.add(*s, v);
            }
        }
        sum
    }
}

/// `W`: one row per gradient or key piece, `piece_len` columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageVector {
    pub w: FieldMatrix,
    datasets: usize,
    pieces: usize,
    key_groups: usize,
    alpha: usize,
}

/// Gradient piece `(k, i)` goes to row `k + (i-1)K`; key piece `(v, j)` to
/// row `nK + v + (j-1)C(N,S)` (1-based).
pub fn build_w(round: &RoundState, scheme: &SchemeArtifact) -> Result<MessageVector, EngineError> {
    let dims = &scheme.dims;
    let k_count = scheme.params.datasets;
    if round.gradients.len() != k_count || round.keys.len() != dims.key_groups {
        return Err(EngineError::Mismatch("gradient or key count".into()));
    }
    let l = round.piece_len;
    let mut w = FieldMatrix::zeros(scheme.params.modulus, dims.f_cols, l);
    for (k, g) in round.gradients.iter().enumerate() {
        for i in 0..dims.n {
            for t in 0..l {
                w.set(k + i * k_count, t, g[i * l + t]);
            }
        }
    }
    let base = dims.n * k_count;
    for (v, key) in round.keys.iter().enumerate() {
        for j in 0..dims.alpha {
            for t in 0..l {
                w.set(base + v + j * dims.key_groups, t, key[j * l + t]);
            }
        }
    }
    Ok(MessageVector {
        w,
        datasets: k_count,
        pieces: dims.n,
        key_groups: dims.key_groups,
        alpha: dims.alpha,
    })
}

impl MessageVector {
    /// Reassembles `g_k` (1-based) from its pieces.
    pub fn gradient(&self, dataset: usize) -> Vec<u64> {
        (0..self.pieces)
            .flat_map(|i| self.w.row(dataset - 1 + i * self.datasets).to_vec())
            .collect()
    }

    /// Reassembles key `v` (1-based) from its pieces.
    pub fn key(&self, group: usize) -> Vec<u64> {
        let base = self.pieces * self.datasets;
        (0..self.alpha)
            .flat_map(|j| self.w.row(base + group - 1 + j * self.key_groups).to_vec())
            .collect()
    }
}

/// Per-server messages `X_n` (`r x piece_len` each).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub messages: Vec<FieldMatrix>,
    pub piece_len: usize,
}

impl Transcript {
    /// Symbols sent by each server.
    pub fn message_sizes(&self) -> Vec<usize> {
        self.messages.iter().map(|m| m.rows() * m.cols()).collect()
    }

    /// `max_n |X_n| / L` as an unreduced pair `(symbols, L)`.
    pub fn max_load(&self, length: usize) -> (usize, usize) {
        (self.message_sizes().into_iter().max().unwrap_or(0), length)
    }
}

pub fn encode(scheme: &SchemeArtifact, w: &MessageVector) -> Result<Transcript, EngineError> {
    split_messages(scheme, &scheme.transmission_coefficients(), w)
}

fn split_messages(
    scheme: &SchemeArtifact,
    coefficients: &FieldMatrix,
    w: &MessageVector,
) -> Result<Transcript, EngineError> {
    let all = coefficients.mul(&w.w)?;
    let r = scheme.dims.r;
    let messages = (0..scheme.params.servers)
        .map(|s| all.row_range(s * r, (s + 1) * r))
        .collect();
    Ok(Transcript {
        messages,
        piece_len: w.w.cols(),
    })
}

/// `X_n` computed from `W` with every row the server may not see zeroed.
pub fn encode_locally(
    scheme: &SchemeArtifact,
    w: &MessageVector,
    server: usize,
) -> Result<FieldMatrix, EngineError> {
    let mut visible = w.w.clone();
    for row in 0..visible.rows() {
        if !scheme.visible_to(server, row) {
            for t in 0..visible.cols() {
                visible.set(row, t, 0);
            }
        }
    }
    let block = scheme.coding.server_block(server);
    Ok(block.mul(scheme.demand.matrix())?.mul(&visible)?)
}

fn check_responders(
    scheme: &SchemeArtifact,
    responders: &[usize],
) -> Result<Vec<usize>, EngineError> {
    let expected = scheme.params.responders;
    if responders.len() != expected {
        return Err(EngineError::WrongSubsetSize {
            expected,
            found: responders.len(),
        });
    }
    let mut sorted = responders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != responders.len()
        || sorted.iter().any(|&s| s == 0 || s > scheme.params.servers)
    {
        return Err(EngineError::BadResponders(responders.to_vec()));
    }
    Ok(sorted)
}

/// First `n` rows of `C_U^{-1}`: the part of the inverse that yields the
/// piece sums.
fn decoding_rows(scheme: &SchemeArtifact, sorted: &[usize]) -> Result<FieldMatrix, EngineError> {
    let inv = scheme
        .coding
        .stacked(sorted)
        .invert()
        .map_err(|e| match e {
            MatrixError::Singular => EngineError::Singular,
            other => other.into(),
        })?;
    Ok(inv.row_range(0, scheme.dims.n))
}

fn apply(
    scheme: &SchemeArtifact,
    rows: &FieldMatrix,
    transcript: &Transcript,
    sorted: &[usize],
) -> Result<Vec<u64>, EngineError> {
    let parts: Vec<&FieldMatrix> = sorted
        .iter()
        .map(|&s| &transcript.messages[s - 1])
        .collect();
    let x_u = FieldMatrix::vstack(&parts)?;
    let piece_sums = rows.mul(&x_u)?;
    debug_assert_eq!(piece_sums.rows(), scheme.dims.n);
    Ok(piece_sums.data().to_vec())
}

/// Recovers `sum_k g_k` from the messages of `responders`.
pub fn decode(
    scheme: &SchemeArtifact,
    transcript: &Transcript,
    responders: &[usize],
) -> Result<Vec<u64>, EngineError> {
    let sorted = check_responders(scheme, responders)?;
    let rows = decoding_rows(scheme, &sorted)?;
    apply(scheme, &rows, transcript, &sorted)
}

/// Reusable encoder/decoder for many rounds against one scheme: `C F` is
/// computed once and each responder matrix is inverted at most once.
pub struct Simulator<'a> {
    scheme: &'a SchemeArtifact,
    coefficients: FieldMatrix,
    cache: HashMap<Vec<usize>, FieldMatrix>,
}

impl<'a> Simulator<'a> {
    pub fn new(scheme: &'a SchemeArtifact) -> Self {
        Simulator {
            scheme,
            coefficients: scheme.transmission_coefficients(),
            cache: HashMap::new(),
        }
    }

    pub fn encode(&self, w: &MessageVector) -> Result<Transcript, EngineError> {
        split_messages(self.scheme, &self.coefficients, w)
    }

    pub fn decode(
        &mut self,
        transcript: &Transcript,
        responders: &[usize],
    ) -> Result<Vec<u64>, EngineError> {
        let sorted = check_responders(self.scheme, responders)?;
        if !self.cache.contains_key(&sorted) {
            let rows = decoding_rows(self.scheme, &sorted)?;
            self.cache.insert(sorted.clone(), rows);
        }
        apply(self.scheme, &self.cache[&sorted], transcript, &sorted)
    }

    /// Samples, encodes and decodes one round. Without explicit responders
    /// the set rotates through all `Nr`-subsets.
    pub fn run_round(
        &mut self,
        length: usize,
        round: usize,
        responders: Option<&[usize]>,
        rng: &mut SeededRng,
    ) -> Result<RoundReport, EngineError> {
        let scheme = self.scheme;
        let state = sample_round(scheme, length, rng)?;
        let w = build_w(&state, scheme)?;
        let transcript = self.encode(&w)?;
        let responders = match responders {
            Some(r) => r.to_vec(),
            None => rotating_responders(scheme, round),
        };
        let decoded = self.decode(&transcript, &responders)?;
        let direct = state.direct_sum(scheme);
        Ok(RoundReport {
            round,
            responders,
            message_sizes: transcript.message_sizes(),
            gradient_length: length,
            decoded_sum_hash: sum_digest(&decoded),
            direct_sum_hash: sum_digest(&direct),
            matches: decoded == direct,
        })
    }
}

/// Hex SHA-256 of the symbols as little-endian `u64`s.
pub fn sum_digest(symbols: &[u64]) -> String {
    let mut h = Sha256::new();
    for s in symbols {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub responders: Vec<usize>,
    pub message_sizes: Vec<usize>,
    pub gradient_length: usize,
    pub decoded_sum_hash: String,
    pub direct_sum_hash: String,
    #[serde(rename = "match")]
    pub matches: bool,
}

/// The `round`-th responder set when rotating through all `Nr`-subsets in
/// lexicographic order.
pub fn rotating_responders(scheme: &SchemeArtifact, round: usize) -> Vec<usize> {
    let n = scheme.params.servers;
    let nr = scheme.params.responders;
    let total = binom(n, nr) as usize;
    unrank_subset(n, nr, round % total)
}

/// The `rank`-th (0-based, lexicographic) `size`-subset of `[n]`.
fn unrank_subset(n: usize, size: usize, mut rank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(size);
    let mut next = 1;
    for remaining in (1..=size).rev() {
        loop {
            // subsets starting with `next` given what is already chosen
            let with_next = binom(n - next, remaining - 1) as usize;
            if rank < with_next {
                out.push(next);
                next += 1;
                break;
            }
            rank -= with_next;
            next += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldModulus;
    use crate::keyspace::subsets;
    use crate::scheme::{build_scheme, DataAssignment, SchemeParams};

    fn example() -> SchemeArtifact {
        let p = SchemeParams::new(3, 3, 3, 2, 2, FieldModulus::default()).unwrap();
        let a = DataAssignment::new(vec![vec![2, 3], vec![1, 2], vec![1, 2]]);
        build_scheme(&p, Some(a), 7).unwrap()
    }

    fn straggling() -> SchemeArtifact {
        let p = SchemeParams::new(4, 5, 4, 3, 3, FieldModulus::default()).unwrap();
        build_scheme(&p, None, 11).unwrap()
    }

    #[test]
    fn round_shapes() {
        let s = example();
        let mut rng = SeededRng::new(1);
        let r = sample_round(&s, 3, &mut rng).unwrap();
        assert_eq!(r.gradients.len(), 3);
        assert!(r.gradients.iter().all(|g| g.len() == 3));
        assert_eq!(r.keys.len(), 3);
        assert!(r.keys.iter().all(|k| k.len() == 1));

        let empty = sample_round(&s, 0, &mut rng).unwrap();
        assert!(empty.gradients.iter().all(Vec::is_empty));
        assert_eq!(
            sample_round(&s, 7, &mut rng),
            Err(EngineError::BadLength {
                length: 7,
                pieces: 3
            })
        );
    }

    #[test]
    fn w_layout() {
        let s = example();
        let r = sample_round(&s, 3, &mut SeededRng::new(2)).unwrap();
        let w = build_w(&r, &s).unwrap();
        assert_eq!(w.w.rows(), 12);
        // g_{2,3} sits at 1-based row 2 + (3-1)*3 = 8
        assert_eq!(w.w.get(7, 0), r.gradients[1][2]);
        for k in 1..=3 {
            assert_eq!(w.gradient(k), r.gradients[k - 1]);
        }
        for v in 1..=3 {
            assert_eq!(w.key(v), r.keys[v - 1]);
            assert_eq!(w.w.get(8 + v, 0), r.keys[v - 1][0]);
        }
    }

    #[test]
    fn single_piece_layout() {
        let p = SchemeParams::new(1, 3, 3, 2, 3, FieldModulus::default()).unwrap();
        let s = build_scheme(&p, None, 0).unwrap();
        assert_eq!(s.dims.n, 2);
        let r = sample_round(&s, 4, &mut SeededRng::new(3)).unwrap();
        let w = build_w(&r, &s).unwrap();
        assert_eq!(w.gradient(1), r.gradients[0]);
    }

    #[test]
    fn zero_w_gives_zero_messages() {
        let s = example();
        let w = MessageVector {
            w: FieldMatrix::zeros(s.params.modulus, s.dims.f_cols, 2),
            datasets: 3,
            pieces: 3,
            key_groups: 3,
            alpha: 1,
        };
        let t = encode(&s, &w).unwrap();
        assert!(t.messages.iter().all(FieldMatrix::is_zero));
    }

    #[test]
    fn example_cost_is_two_thirds() {
        let s = example();
        let r = sample_round(&s, 3, &mut SeededRng::new(4)).unwrap();
        let t = encode(&s, &build_w(&r, &s).unwrap()).unwrap();
        assert_eq!(t.message_sizes(), vec![2, 2, 2]);
        assert_eq!(t.max_load(3), (2, 3));
    }

    #[test]
    fn locality() {
        for s in [example(), straggling()] {
            let len = s.dims.n * 2;
            let r = sample_round(&s, len, &mut SeededRng::new(5)).unwrap();
            let w = build_w(&r, &s).unwrap();
            let t = encode(&s, &w).unwrap();
            for server in 1..=s.params.servers {
                assert_eq!(
                    encode_locally(&s, &w, server).unwrap(),
                    t.messages[server - 1]
                );
            }
        }
    }

    #[test]
    fn decodes_from_every_subset() {
        for s in [example(), straggling()] {
            let mut rng = SeededRng::new(6);
            let r = sample_round(&s, s.dims.n * 4, &mut rng).unwrap();
            let t = encode(&s, &build_w(&r, &s).unwrap()).unwrap();
            let direct = r.direct_sum(&s);
            for u in subsets(s.params.servers, s.params.responders) {
                assert_eq!(decode(&s, &t, &u).unwrap(), direct, "U = {u:?}");
            }
        }
    }

    #[test]
    fn keys_cancel_on_zero_gradients() {
        let s = straggling();
        let mut r = sample_round(&s, s.dims.n, &mut SeededRng::new(9)).unwrap();
        for g in &mut r.gradients {
            g.iter_mut().for_each(|v| *v = 0);
        }
        let t = encode(&s, &build_w(&r, &s).unwrap()).unwrap();
        assert!(decode(&s, &t, &[1, 2, 4, 5])
            .unwrap()
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn responder_errors() {
        let s = example();
        let r = sample_round(&s, 3, &mut SeededRng::new(1)).unwrap();
        let t = encode(&s, &build_w(&r, &s).unwrap()).unwrap();
        assert_eq!(
            decode(&s, &t, &[1, 2]),
            Err(EngineError::WrongSubsetSize {
                expected: 3,
                found: 2
            })
        );
        assert!(matches!(
            decode(&s, &t, &[1, 1, 2]),
            Err(EngineError::BadResponders(_))
        ));
        assert!(matches!(
            decode(&s, &t, &[1, 2, 4]),
            Err(EngineError::BadResponders(_))
        ));
    }

    #[test]
    fn unranking_matches_enumeration() {
        for n in 1..=7 {
            for k in 1..=n {
                let all = subsets(n, k);
                for (i, u) in all.iter().enumerate() {
                    assert_eq!(&unrank_subset(n, k, i), u);
                }
            }
        }
    }

    #[test]
    fn simulated_rounds_match() {
        let s = straggling();
        let mut sim = Simulator::new(&s);
        let mut rng = SeededRng::new(10);
        for round in 0..12 {
            let rep = sim.run_round(s.dims.n * 2, round, None, &mut rng).unwrap();
            assert!(rep.matches);
            assert_eq!(rep.decoded_sum_hash, rep.direct_sum_hash);
            assert_eq!(rep.responders, rotating_responders(&s, round));
        }
        let rep = sim.run_round(0, 0, None, &mut rng).unwrap();
        assert!(rep.matches);
        assert!(matches!(
            sim.run_round(s.dims.n, 0, Some(&[1, 2]), &mut rng),
            Err(EngineError::WrongSubsetSize { .. })
        ));
    }
}
