//! Scheme parameters, data assignment, and construction of the coding matrix
//! `C` and demand matrix `F = [F1 0; F2 F3]`.
//!
//! Column layout of `F` (and row layout of the message vector `W`), 1-based:
//! gradient piece `(k, i)` at `k + (i-1)K` for `k in [K]`, `i in [n]`, then key
//! piece `(v, j)` at `nK + v + (j-1)C(N,S)` for key `v` and piece `j in [alpha]`.
//!
//! `C` has `r` rows per server and `r*Nr` columns. Its first `n` columns
//! (`C_G`) are unconstrained; the remaining `alpha*C(N,S)` columns (`C_Q`)
//! multiply `[F2 F3]` and are zero wherever the server lacks the key.
//!
//! Construction samples `C` under that zero pattern, certifies every rank
//! condition exactly, and resamples from a derived seed on failure.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactmat::{assemble_blocks, FieldMatrix, MatrixError};
use crate::field::{make_field, FieldError, FieldModulus, SeededRng};
use crate::keyspace::{binom, subsets, KeyGroupIndex};

pub const FORMAT_VERSION: u32 = 1;

/// Fresh samples of `C` tried before giving up.
pub const RETRY_LIMIT: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(Infeasibility),
    #[error("invalid data assignment: {0:?}")]
    BadAssignment(Vec<AssignmentViolation>),
    #[error("no valid coding matrix after {0} attempts; the field is too small")]
    ConstructionFailed(usize),
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    /// `S < N - Nr + 2`: some key would reach at most one responder.
    GroupSizeTooSmall,
    /// The piece count `n` (denominator of the cost) is not positive.
    NonPositivePieces,
    /// `r = C(N,S) - C(M,S)` is zero.
    NoMessages,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::GroupSizeTooSmall => write!(f, "feasibility S >= N-Nr+2 violated"),
            Infeasibility::NonPositivePieces => {
                write!(
                    f,
                    "denominator (C(N,S)-C(M,S))*Nr - C(N,S)*(N-M) is not positive"
                )
            }
            Infeasibility::NoMessages => write!(f, "C(N,S) - C(M,S) is zero"),
        }
    }
}

/// `(K, N, Nr, M, S)` plus the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeParams {
    pub datasets: usize,
    pub servers: usize,
    pub responders: usize,
    pub replication: usize,
    pub group_size: usize,
    pub modulus: FieldModulus,
}

impl SchemeParams {
    /// Checks the range constraints; feasibility is checked by
    /// [`derive_dims`].
    pub fn new(
        datasets: usize,
        servers: usize,
        responders: usize,
        replication: usize,
        group_size: usize,
        modulus: FieldModulus,
    ) -> Result<Self, SchemeError> {
        let bad = |what: &str| Err(SchemeError::InvalidParams(what.to_string()));
        if datasets == 0 {
            return bad("K must be at least 1");
        }
        if servers == 0 {
            return bad("N must be at least 1");
        }
        if !(1..=servers).contains(&replication) {
            return bad("M must lie in [1, N]");
        }
        if !(1..=servers).contains(&responders) {
            return bad("Nr must lie in [1, N]");
        }
        if !(1..=servers).contains(&group_size) {
            return bad("S must lie in [1, N]");
        }
        Ok(SchemeParams {
            datasets,
            servers,
            responders,
            replication,
            group_size,
            modulus,
        })
    }

    pub fn key_groups(&self) -> usize {
        binom(self.servers, self.group_size) as usize
    }
}

/// Dimensions implied by the achievable cost `R = r / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedDims {
    /// Messages (rows of `C`) per server.
    pub r: usize,
    /// Pieces per gradient.
    pub n: usize,
    /// Pieces per key, `N - M`.
    pub alpha: usize,
    /// Number of keys, `C(N,S)`.
    pub key_groups: usize,
    pub f_rows: usize,
    pub f_cols: usize,
}

impl DerivedDims {
    pub fn key_columns(&self) -> usize {
        self.alpha * self.key_groups
    }

    /// `r * Nr = n + alpha * C(N,S)`.
    pub fn identity_holds(&self, responders: usize) -> bool {
        self.r * responders == self.n + self.alpha * self.key_groups
    }
}

pub fn derive_dims(params: &SchemeParams) -> Result<DerivedDims, SchemeError> {
    let (n_srv, nr, m, s) = (
        params.servers,
        params.responders,
        params.replication,
        params.group_size,
    );
    if s + nr < n_srv + 2 {
        return Err(SchemeError::Infeasible(Infeasibility::GroupSizeTooSmall));
    }
    let total = binom(n_srv, s) as i128;
    let r = total - binom(m, s) as i128;
    if r <= 0 {
        return Err(SchemeError::Infeasible(Infeasibility::NoMessages));
    }
    let alpha = (n_srv - m) as i128;
    let n = r * nr as i128 - total * alpha;
    if n <= 0 {
        return Err(SchemeError::Infeasible(Infeasibility::NonPositivePieces));
    }
    let (r, n, alpha, key_groups) = (r as usize, n as usize, alpha as usize, total as usize);
    Ok(DerivedDims {
        r,
        n,
        alpha,
        key_groups,
        f_rows: n + alpha * key_groups,
        f_cols: n * params.datasets + alpha * key_groups,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub group_size_ok: bool,
    pub pieces_positive: bool,
    /// Smallest `x in [N-M]` with `alpha * Omega_x < r * x`.
    pub encodability_witness: Option<usize>,
    /// Smallest `x in [Nr]` with `n + alpha * Omega_x < r * x`.
    pub decodability_witness: Option<usize>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.group_size_ok
            && self.pieces_positive
            && self.encodability_witness.is_none()
            && self.decodability_witness.is_none()
    }
}

pub fn check_feasibility(params: &SchemeParams) -> FeasibilityReport {
    let (n_srv, nr, m, s) = (
        params.servers,
        params.responders,
        params.replication,
        params.group_size,
    );
    let group_size_ok = s + nr >= n_srv + 2;
    let total = binom(n_srv, s) as i128;
    let r = total - binom(m, s) as i128;
    let alpha = (n_srv - m) as i128;
    let n = r * nr as i128 - total * alpha;
    let omega = |x: usize| total - binom(n_srv - x, s) as i128;
    let encodability_witness = (1..=n_srv - m).find(|&x| alpha * omega(x) < r * x as i128);
    let decodability_witness = (1..=nr).find(|&x| n + alpha * omega(x) < r * x as i128);
    FeasibilityReport {
        group_size_ok,
        pieces_positive: n > 0 && r > 0,
        encodability_witness,
        decodability_witness,
    }
}

/// Which servers hold which datasets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataAssignment {
    dataset_servers: Vec<BTreeSet<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AssignmentViolation {
    NoDatasets,
    DatasetCount {
        expected: usize,
        found: usize,
    },
    Underreplicated {
        dataset: usize,
        copies: usize,
        required: usize,
    },
    ServerOutOfRange {
        dataset: usize,
        server: usize,
    },
}

impl DataAssignment {
    /// Takes `D_1..D_K` as lists of 1-based server labels.
    pub fn new(dataset_servers: Vec<Vec<usize>>) -> Self {
        DataAssignment {
            dataset_servers: dataset_servers
                .into_iter()
                .map(|d| d.into_iter().collect())
                .collect(),
        }
    }

    pub fn datasets(&self) -> usize {
        self.dataset_servers.len()
    }

    /// `D_k` for 1-based `k`.
    pub fn servers_of(&self, dataset: usize) -> &BTreeSet<usize> {
        &self.dataset_servers[dataset - 1]
    }

    /// Servers not holding dataset `k`, in increasing order.
    pub fn non_holders(&self, dataset: usize, servers: usize) -> Vec<usize> {
        let d = self.servers_of(dataset);
        (1..=servers).filter(|s| !d.contains(s)).collect()
    }

    /// `Z_1..Z_N`.
    pub fn server_datasets(&self, servers: usize) -> Vec<BTreeSet<usize>> {
        let mut z = vec![BTreeSet::new(); servers];
        for (k, d) in self.dataset_servers.iter().enumerate() {
            for &s in d {
                if (1..=servers).contains(&s) {
                    z[s - 1].insert(k + 1);
                }
            }
        }
        z
    }

    pub fn holds(&self, server: usize, dataset: usize) -> bool {
        self.servers_of(dataset).contains(&server)
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        self.dataset_servers
            .iter()
            .map(|d| d.iter().copied().collect())
            .collect()
    }
}

/// `D_k = {((k-1+j) mod N) + 1 : j in [0, M-1]}`.
pub fn cyclic_assignment(params: &SchemeParams) -> DataAssignment {
    let n = params.servers;
    DataAssignment::new(
        (1..=params.datasets)
            .map(|k| {
                (0..params.replication)
                    .map(|j| (k - 1 + j) % n + 1)
                    .collect()
            })
            .collect(),
    )
}

/// Each dataset lands on a uniformly random set of between `M` and `N`
/// servers.
pub fn random_assignment(params: &SchemeParams, rng: &mut SeededRng) -> DataAssignment {
    let n = params.servers;
    DataAssignment::new(
        (0..params.datasets)
            .map(|_| {
                let size = params.replication + rng.below(n - params.replication + 1);
                rand::seq::index::sample(rng.inner_mut(), n, size)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect()
            })
            .collect(),
    )
}

pub fn validate_assignment(
    params: &SchemeParams,
    assignment: &DataAssignment,
) -> Vec<AssignmentViolation> {
    let mut out = Vec::new();
    if assignment.datasets() == 0 {
        out.push(AssignmentViolation::NoDatasets);
        return out;
    }
    if assignment.datasets() != params.datasets {
        out.push(AssignmentViolation::DatasetCount {
            expected: params.datasets,
            found: assignment.datasets(),
        });
    }
    for (k, d) in assignment.dataset_servers.iter().enumerate() {
        for &s in d {
            if s == 0 || s > params.servers {
                out.push(AssignmentViolation::ServerOutOfRange {
                    dataset: k + 1,
                    server: s,
                });
            }
        }
        if d.len() < params.replication {
            out.push(AssignmentViolation::Underreplicated {
                dataset: k + 1,
                copies: d.len(),
                required: params.replication,
            });
        }
    }
    out
}

/// Field size above which the random construction succeeds with positive
/// probability: `r * max_k |non-holders of k| * K + r * Nr * C(N, Nr)`.
pub fn recommended_min_modulus(
    params: &SchemeParams,
    dims: &DerivedDims,
    assignment: &DataAssignment,
) -> u128 {
    let worst = (1..=assignment.datasets())
        .map(|k| params.servers - assignment.servers_of(k).len())
        .max()
        .unwrap_or(0) as u128;
    let r = dims.r as u128;
    r * worst * params.datasets as u128
        + r * params.responders as u128 * binom(params.servers, params.responders) as u128
}

/// Stacked per-server encoders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingMatrix {
    matrix: FieldMatrix,
    r: usize,
    n: usize,
}

impl CodingMatrix {
    pub fn from_matrix(matrix: FieldMatrix, r: usize, n: usize) -> Self {
        CodingMatrix { matrix, r, n }
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.matrix
    }

    pub fn messages_per_server(&self) -> usize {
        self.r
    }

    /// 0-based rows of `C` belonging to the listed 1-based servers.
    pub fn rows_of(&self, servers: &[usize]) -> Vec<usize> {
        servers
            .iter()
            .flat_map(|&s| (s - 1) * self.r..s * self.r)
            .collect()
    }

    /// `C_n`, an `r x r*Nr` block.
    pub fn server_block(&self, server: usize) -> FieldMatrix {
        self.matrix
            .row_range((server - 1) * self.r, server * self.r)
    }

    /// `C_U`, the blocks of `servers` stacked in the given order.
    pub fn stacked(&self, servers: &[usize]) -> FieldMatrix {
        self.matrix.select_rows(&self.rows_of(servers))
    }

    /// `C_G`.
    pub fn gradient_block(&self) -> FieldMatrix {
        self.matrix.col_range(0, self.n)
    }

    /// `C_Q`.
    pub fn key_block(&self) -> FieldMatrix {
        self.matrix.col_range(self.n, self.matrix.cols())
    }
}

/// `F = [F1 0; F2 F3]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandMatrix {
    pub f1: FieldMatrix,
    pub f2: FieldMatrix,
    pub f3: FieldMatrix,
    full: FieldMatrix,
}

impl DemandMatrix {
    pub fn assemble(
        f1: FieldMatrix,
        f2: FieldMatrix,
        f3: FieldMatrix,
    ) -> Result<Self, SchemeError> {
        let zero = FieldMatrix::zeros(f1.modulus(), f1.rows(), f3.cols());
        let full = assemble_blocks(&[vec![&f1, &zero], vec![&f2, &f3]])?;
        Ok(DemandMatrix { f1, f2, f3, full })
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.full
    }

    /// The same demand with a different key block in place of `F3`.
    pub fn with_key_block(&self, f3: FieldMatrix) -> Result<Self, SchemeError> {
        DemandMatrix::assemble(self.f1.clone(), self.f2.clone(), f3)
    }

    /// Splits an assembled `F` back into its blocks, checking the zero block.
    pub fn split(
        full: FieldMatrix,
        dims: &DerivedDims,
        datasets: usize,
    ) -> Result<Self, SchemeError> {
        let gcols = dims.n * datasets;
        if full.shape() != (dims.f_rows, dims.f_cols) {
            return Err(SchemeError::Malformed(format!(
                "F is {}x{}, expected {}x{}",
                full.rows(),
                full.cols(),
                dims.f_rows,
                dims.f_cols
            )));
        }
        let top = full.row_range(0, dims.n);
        let bottom = full.row_range(dims.n, dims.f_rows);
        if !top.col_range(gcols, dims.f_cols).is_zero() {
            return Err(SchemeError::Malformed(
                "upper-right block of F is not zero".into(),
            ));
        }
        Ok(DemandMatrix {
            f1: top.col_range(0, gcols),
            f2: bottom.col_range(0, gcols),
            f3: bottom.col_range(gcols, dims.f_cols),
            full,
        })
    }
}

/// 0-based columns `G_k = {k + (i-1)K : i in [n]}` (converted from 1-based).
pub fn gradient_columns(dataset: usize, datasets: usize, pieces: usize) -> Vec<usize> {
    (0..pieces).map(|i| dataset - 1 + i * datasets).collect()
}

/// `F1`: row `i` has ones at `{k + (i-1)K : k in [K]}`.
pub fn sum_demand_block(modulus: FieldModulus, pieces: usize, datasets: usize) -> FieldMatrix {
    let mut f1 = FieldMatrix::zeros(modulus, pieces, pieces * datasets);
    for i in 0..pieces {
        for k in 0..datasets {
            f1.set(i, k + i * datasets, 1);
        }
    }
    f1
}

/// Draws one candidate `C` under the key-availability zero pattern.
fn sample_coding_matrix(
    params: &SchemeParams,
    dims: &DerivedDims,
    groups: &KeyGroupIndex,
    rng: &mut SeededRng,
) -> FieldMatrix {
    let q = params.modulus;
    let cols = dims.r * params.responders;
    let mut c = FieldMatrix::zeros(q, dims.r * params.servers, cols);
    for server in 1..=params.servers {
        for row in (server - 1) * dims.r..server * dims.r {
            for col in 0..dims.n {
                c.set(row, col, rng.residue(q));
            }
            for j in 0..dims.alpha {
                for v in 1..=dims.key_groups {
                    if groups.contains(v, server) {
                        let col = dims.n + (v - 1) + j * dims.key_groups;
                        c.set(row, col, rng.residue(q));
                    }
                }
            }
        }
    }
    c
}

/// Exact certification of a candidate `C`: every `C_U` invertible and every
/// `C_Q(non-holders of k, .)` of full row rank.
fn coding_matrix_certifies(
    params: &SchemeParams,
    coding: &CodingMatrix,
    assignment: &DataAssignment,
) -> bool {
    let d = coding.matrix().cols();
    for u in subsets(params.servers, params.responders) {
        if coding.stacked(&u).rank() != d {
            return false;
        }
    }
    let key_block = coding.key_block();
    let mut seen = BTreeSet::new();
    for k in 1..=params.datasets {
        let outside = assignment.non_holders(k, params.servers);
        if outside.is_empty() || !seen.insert(outside.clone()) {
            continue;
        }
        let sub = key_block.select_rows(&coding.rows_of(&outside));
        if sub.rank() != sub.rows() {
            return false;
        }
    }
    true
}

/// Samples and certifies `C`; returns it with the number of failed attempts.
pub fn build_coding_matrix(
    params: &SchemeParams,
    dims: &DerivedDims,
    assignment: &DataAssignment,
    rng: &SeededRng,
) -> Result<(CodingMatrix, usize), SchemeError> {
    let report = check_feasibility(params);
    if !report.passed() {
        return Err(SchemeError::Infeasible(if !report.group_size_ok {
            Infeasibility::GroupSizeTooSmall
        } else {
            Infeasibility::NonPositivePieces
        }));
    }
    let groups = KeyGroupIndex::new(params.servers, params.group_size)
        .map_err(|e| SchemeError::InvalidParams(e.to_string()))?;
    for attempt in 0..RETRY_LIMIT {
        let mut attempt_rng = rng.child(&format!("coding-matrix/{attempt}"));
        let c = sample_coding_matrix(params, dims, &groups, &mut attempt_rng);
        let coding = CodingMatrix::from_matrix(c, dims.r, dims.n);
        if coding_matrix_certifies(params, &coding, assignment) {
            return Ok((coding, attempt));
        }
    }
    Err(SchemeError::ConstructionFailed(RETRY_LIMIT))
}

/// Solves for `F2` so that every non-holder of `g_k` cancels it:
/// `C_Q(Dbar_k) F2(., G_k) = -C_G(Dbar_k) F1(., G_k)`.
pub fn build_demand_matrix(
    params: &SchemeParams,
    dims: &DerivedDims,
    assignment: &DataAssignment,
    coding: &CodingMatrix,
) -> Result<DemandMatrix, SchemeError> {
    let q = params.modulus;
    let f1 = sum_demand_block(q, dims.n, params.datasets);
    let f3 = FieldMatrix::identity(q, dims.key_columns());
    let mut f2 = FieldMatrix::zeros(q, dims.key_columns(), dims.n * params.datasets);
    let c_g = coding.gradient_block();
    let c_q = coding.key_block();
    for k in 1..=params.datasets {
        let outside = assignment.non_holders(k, params.servers);
        if outside.is_empty() {
            continue;
        }
        let rows = coding.rows_of(&outside);
        let g_k = gradient_columns(k, params.datasets, dims.n);
        let rhs = c_g.select_rows(&rows).mul(&f1.select_cols(&g_k))?.neg();
        let x = c_q
            .select_rows(&rows)
            .solve_linear(&rhs)
            .map_err(|e| match e {
                MatrixError::Unsolvable => SchemeError::Internal(format!(
                    "F2 system for dataset {k} is unsolvable despite certified C"
                )),
                other => other.into(),
            })?;
        for (xi, &col) in g_k.iter().enumerate() {
            for row in 0..x.rows() {
                f2.set(row, col, x.get(row, xi));
            }
        }
    }
    DemandMatrix::assemble(f1, f2, f3)
}

/// A constructed scheme with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeArtifact {
    pub params: SchemeParams,
    pub dims: DerivedDims,
    pub assignment: DataAssignment,
    pub coding: CodingMatrix,
    pub demand: DemandMatrix,
    pub seed: u64,
    pub retries_used: usize,
}

/// Runs the full construction. Deterministic in `(params, assignment, seed)`.
pub fn build_scheme(
    params: &SchemeParams,
    assignment: Option<DataAssignment>,
    seed: u64,
) -> Result<SchemeArtifact, SchemeError> {
    let dims = derive_dims(params)?;
    let assignment = assignment.unwrap_or_else(|| cyclic_assignment(params));
    let violations = validate_assignment(params, &assignment);
    if !violations.is_empty() {
        return Err(SchemeError::BadAssignment(violations));
    }
    let rng = SeededRng::new(seed);
    let (coding, retries_used) = build_coding_matrix(params, &dims, &assignment, &rng)?;
    let demand = build_demand_matrix(params, &dims, &assignment, &coding)?;
    Ok(SchemeArtifact {
        params: *params,
        dims,
        assignment,
        coding,
        demand,
        seed,
        retries_used,
    })
}

impl SchemeArtifact {
    /// `C F`, the coefficients of every transmitted symbol over `W`.
    pub fn transmission_coefficients(&self) -> FieldMatrix {
        self.coding
            .matrix()
            .mul(self.demand.matrix())
            .expect("C and F dimensions agree by construction")
    }

    pub fn gradient_column_count(&self) -> usize {
        self.dims.n * self.params.datasets
    }

    /// Whether server `server` may use row `w_row` (0-based) of `W`.
    pub fn visible_to(&self, server: usize, w_row: usize) -> bool {
        let gcols = self.gradient_column_count();
        if w_row < gcols {
            let k = w_row % self.params.datasets + 1;
            self.assignment.holds(server, k)
        } else {
            let v = (w_row - gcols) % self.dims.key_groups;
            let groups = KeyGroupIndex::new(self.params.servers, self.params.group_size)
                .expect("params validated");
            groups.contains(v + 1, server)
        }
    }

    pub fn to_json(&self) -> ArtifactJson {
        ArtifactJson {
            header: ArtifactHeader {
                format_version: FORMAT_VERSION,
                k: self.params.datasets,
                n: self.params.servers,
                nr: self.params.responders,
                m: self.params.replication,
                s: self.params.group_size,
                q: self.params.modulus.q().to_string(),
                seed: self.seed,
                retries_used: self.retries_used,
            },
            assignment: AssignmentJson {
                d: self.assignment.to_lists(),
            },
            c: self.coding.matrix().clone(),
            f: self.demand.matrix().clone(),
        }
    }

    pub fn from_json(json: ArtifactJson) -> Result<Self, SchemeError> {
        let h = &json.header;
        if h.format_version != FORMAT_VERSION {
            return Err(SchemeError::Malformed(format!(
                "unsupported format version {}",
                h.format_version
            )));
        }
        let q: u64 =
            h.q.parse()
                .map_err(|_| SchemeError::Malformed(format!("bad modulus {:?}", h.q)))?;
        let modulus = make_field(q)?;
        for (name, m) in [("C", &json.c), ("F", &json.f)] {
            if m.modulus() != modulus {
                return Err(SchemeError::Malformed(format!(
                    "matrix {name} is over GF({}) but the header says GF({q})",
                    m.modulus().q()
                )));
            }
        }
        let params = SchemeParams::new(h.k, h.n, h.nr, h.m, h.s, modulus)?;
        let dims = derive_dims(&params)?;
        let assignment = DataAssignment::new(json.assignment.d.clone());
        let violations = validate_assignment(&params, &assignment);
        if !violations.is_empty() {
            return Err(SchemeError::BadAssignment(violations));
        }
        if json.c.shape() != (dims.r * params.servers, dims.r * params.responders) {
            return Err(SchemeError::Malformed(format!(
                "C is {}x{}, expected {}x{}",
                json.c.rows(),
                json.c.cols(),
                dims.r * params.servers,
                dims.r * params.responders
            )));
        }
        let demand = DemandMatrix::split(json.f, &dims, params.datasets)?;
        Ok(SchemeArtifact {
            params,
            dims,
            assignment,
            coding: CodingMatrix::from_matrix(json.c, dims.r, dims.n),
            demand,
            seed: h.seed,
            retries_used: h.retries_used,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("artifact serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchemeError> {
        let json: ArtifactJson =
            serde_json::from_str(text).map_err(|e| SchemeError::Malformed(e.to_string()))?;
        SchemeArtifact::from_json(json)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nr")]
    pub nr: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub q: String,
    pub seed: u64,
    pub retries_used: usize,
}

/// Assignment file format: `{"D": [[2,3],[1,2],[1,2]]}`, 1-based servers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentJson {
    #[serde(rename = "D")]
    pub d: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactJson {
    pub header: ArtifactHeader,
    pub assignment: AssignmentJson,
    #[serde(rename = "C")]
    pub c: FieldMatrix,
    #[serde(rename = "F")]
    pub f: FieldMatrix,
}
