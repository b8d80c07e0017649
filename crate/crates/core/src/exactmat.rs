//! Dense matrices over GF(q) with exact elimination.
//!
//! Everything here is exact: ranks, solves and inverses are computed by
//! Gaussian elimination with first-nonzero pivoting, so results are
//! deterministic functions of the input.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{make_field, FieldElement, FieldError, FieldModulus, SeededRng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear system is inconsistent")]
    Unsolvable,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("moduli differ: {0} vs {1}")]
    ModulusMismatch(u64, u64),
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
    modulus: FieldModulus,
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "FieldMatrix {}x{} over {:?} [",
            self.rows, self.cols, self.modulus
        )?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl FieldMatrix {
    pub fn zeros(modulus: FieldModulus, rows: usize, cols: usize) -> Self {
        FieldMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
            modulus,
        }
    }

    pub fn identity(modulus: FieldModulus, n: usize) -> Self {
        let mut m = Self::zeros(modulus, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1 % modulus.q();
        }
        m
    }

    /// Builds a matrix from row-major residues, reducing each entry.
    pub fn from_vec(
        modulus: FieldModulus,
        rows: usize,
        cols: usize,
        data: Vec<u64>,
    ) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let data = data.into_iter().map(|v| modulus.reduce(v)).collect();
        Ok(FieldMatrix {
            rows,
            cols,
            data,
            modulus,
        })
    }

    /// Convenience constructor from nested rows; panics on ragged input.
    pub fn from_rows(modulus: FieldModulus, rows: &[Vec<u64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(modulus, rows.len(), cols, data).expect("shape checked")
    }

    pub fn random(modulus: FieldModulus, rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        FieldMatrix {
            rows,
            cols,
            data: rng.residues(modulus, rows * cols),
            modulus,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn modulus(&self) -> FieldModulus {
        self.modulus
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r},{c}) out of bounds"
        );
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: u64) {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r},{c}) out of bounds"
        );
        self.data[r * self.cols + c] = self.modulus.reduce(value);
    }

    pub fn element(&self, r: usize, c: usize) -> FieldElement {
        self.modulus.elem(self.get(r, c))
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut t = Self::zeros(self.modulus, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    fn check_modulus(&self, other: &FieldMatrix) -> Result<(), MatrixError> {
        if self.modulus != other.modulus {
            return Err(MatrixError::ModulusMismatch(
                self.modulus.q(),
                other.modulus.q(),
            ));
        }
        Ok(())
    }

    pub fn mul(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, MatrixError> {
        self.check_modulus(rhs)?;
        if self.cols != rhs.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let f = self.modulus;
        let mut out = Self::zeros(f, self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o = f.mul_add(*o, a, b);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, MatrixError> {
        self.check_modulus(rhs)?;
        if self.shape() != rhs.shape() {
            return Err(MatrixError::DimensionMismatch("add".into()));
        }
        let f = self.modulus;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f.add(a, b))
            .collect();
        Ok(FieldMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
            modulus: f,
        })
    }

    pub fn neg(&self) -> FieldMatrix {
        let f = self.modulus;
        let data = self.data.iter().map(|&a| f.neg(a)).collect();
        FieldMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
            modulus: f,
        }
    }

    /// Rows in the given order (0-based indices).
    pub fn select_rows(&self, rows: &[usize]) -> FieldMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FieldMatrix {
            rows: rows.len(),
            cols: self.cols,
            data,
            modulus: self.modulus,
        }
    }

    /// Columns in the given order (0-based indices).
    pub fn select_cols(&self, cols: &[usize]) -> FieldMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        FieldMatrix {
            rows: self.rows,
            cols: cols.len(),
            data,
            modulus: self.modulus,
        }
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> FieldMatrix {
        self.select_rows(rows).select_cols(cols)
    }

    /// Contiguous column range `[start, end)`.
    pub fn col_range(&self, start: usize, end: usize) -> FieldMatrix {
        let cols: Vec<usize> = (start..end).collect();
        self.select_cols(&cols)
    }

    /// Contiguous row range `[start, end)`.
    pub fn row_range(&self, start: usize, end: usize) -> FieldMatrix {
        FieldMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
            modulus: self.modulus,
        }
    }

    pub fn vstack(parts: &[&FieldMatrix]) -> Result<FieldMatrix, MatrixError> {
        assemble_blocks(&parts.iter().map(|p| vec![*p]).collect::<Vec<_>>())
    }

    pub fn hstack(parts: &[&FieldMatrix]) -> Result<FieldMatrix, MatrixError> {
        assemble_blocks(&[parts.to_vec()])
    }

    /// In-place elimination. With `reduced` the result is the reduced row
    /// echelon form, otherwise only rows below each pivot are cleared.
    /// Only the first `limit_cols` columns are searched for pivots.
    /// Returns the pivot columns in order.
    fn eliminate(&mut self, reduced: bool, limit_cols: usize) -> Vec<usize> {
        let f = self.modulus;
        let cols = self.cols;
        let mut pivots = Vec::new();
        let mut prow = 0;
        for col in 0..limit_cols.min(cols) {
            if prow == self.rows {
                break;
            }
            let Some(found) = (prow..self.rows).find(|&r| self.data[r * cols + col] != 0) else {
                continue;
            };
            if found != prow {
                for c in col..cols {
                    self.data.swap(found * cols + c, prow * cols + c);
                }
            }
            let inv = f
                .inv(self.data[prow * cols + col])
                .expect("pivot is nonzero");
            for v in &mut self.data[prow * cols + col..(prow + 1) * cols] {
                *v = f.mul(*v, inv);
            }
            let (head, tail) = self.data.split_at_mut(prow * cols);
            let (pivot_row, below) = tail.split_at_mut(cols);
            let pivot_row = &pivot_row[col..];
            let clear = |row: &mut [u64]| {
                let factor = row[col];
                if factor != 0 {
                    let neg = f.neg(factor);
                    for (v, &p) in row[col..].iter_mut().zip(pivot_row) {
                        *v = f.mul_add(*v, neg, p);
                    }
                }
            };
            below.chunks_exact_mut(cols).for_each(clear);
            if reduced {
                head.chunks_exact_mut(cols).for_each(clear);
            }
            pivots.push(col);
            prow += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        if self.rows > self.cols {
            // eliminating the wide orientation touches fewer entries
            return self.transpose().rank();
        }
        let mut m = self.clone();
        m.eliminate(false, m.cols).len()
    }

    /// Reduced row echelon form and its pivot columns.
    pub fn rref(&self) -> (FieldMatrix, Vec<usize>) {
        let mut m = self.clone();
        let pivots = m.eliminate(true, m.cols);
        (m, pivots)
    }

    /// Canonical solution of `self * X = rhs` with free variables set to zero.
    pub fn solve_linear(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, MatrixError> {
        self.check_modulus(rhs)?;
        if self.rows != rhs.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "system has {} rows but right-hand side has {}",
                self.rows, rhs.rows
            )));
        }
        let mut aug = FieldMatrix::hstack(&[self, rhs])?;
        let n = self.cols;
        let pivots = aug.eliminate(true, n);
        // consistency: every row past the pivots must vanish on the rhs part
        for r in pivots.len()..aug.rows {
            if aug.row(r)[n..].iter().any(|&v| v != 0) {
                return Err(MatrixError::Unsolvable);
            }
        }
        let mut x = FieldMatrix::zeros(self.modulus, n, rhs.cols);
        for (i, &p) in pivots.iter().enumerate() {
            let src = &aug.row(i)[n..];
            x.data[p * rhs.cols..(p + 1) * rhs.cols].copy_from_slice(src);
        }
        Ok(x)
    }

    pub fn invert(&self) -> Result<FieldMatrix, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare(self.rows, self.cols));
        }
        let n = self.rows;
        let mut aug = FieldMatrix::hstack(&[self, &FieldMatrix::identity(self.modulus, n)])?;
        let pivots = aug.eliminate(true, n);
        if pivots.len() < n {
            return Err(MatrixError::Singular);
        }
        Ok(aug.col_range(n, 2 * n))
    }

    /// Basis (as rows) of `{v : v * self = 0}`.
    pub fn left_nullspace(&self) -> FieldMatrix {
        self.transpose().right_nullspace().transpose()
    }

    /// Basis (as columns) of `{x : self * x = 0}`.
    pub fn right_nullspace(&self) -> FieldMatrix {
        let (r, pivots) = self.rref();
        let f = self.modulus;
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = FieldMatrix::zeros(f, self.cols, free.len());
        for (j, &fc) in free.iter().enumerate() {
            basis.data[fc * free.len() + j] = 1 % f.q();
            for (i, &p) in pivots.iter().enumerate() {
                basis.data[p * free.len() + j] = f.neg(r.get(i, fc));
            }
        }
        basis
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson {
            rows: self.rows,
            cols: self.cols,
            q: self.modulus.q().to_string(),
            data: self.data.iter().map(u64::to_string).collect(),
        }
    }

    pub fn from_json(json: &MatrixJson) -> Result<FieldMatrix, MatrixError> {
        let q: u64 = json
            .q
            .parse()
            .map_err(|_| MatrixError::Malformed(format!("bad modulus {:?}", json.q)))?;
        let modulus = make_field(q)?;
        if json.data.len() != json.rows * json.cols {
            return Err(MatrixError::Malformed(format!(
                "{} entries for a {}x{} matrix",
                json.data.len(),
                json.rows,
                json.cols
            )));
        }
        let mut data = Vec::with_capacity(json.data.len());
        for s in &json.data {
            let v: u64 = s
                .parse()
                .map_err(|_| MatrixError::Malformed(format!("bad entry {s:?}")))?;
            if v >= q {
                return Err(MatrixError::Malformed(format!(
                    "entry {v} not reduced mod {q}"
                )));
            }
            data.push(v);
        }
        Ok(FieldMatrix {
            rows: json.rows,
            cols: json.cols,
            data,
            modulus,
        })
    }
}

/// Serialized form: row-major decimal strings plus the modulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub q: String,
    pub data: Vec<String>,
}

impl Serialize for FieldMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let json = MatrixJson::deserialize(d)?;
        FieldMatrix::from_json(&json).map_err(serde::de::Error::custom)
    }
}

pub fn rank(a: &FieldMatrix) -> usize {
    a.rank()
}

pub fn solve_linear(a: &FieldMatrix, b: &FieldMatrix) -> Result<FieldMatrix, MatrixError> {
    a.solve_linear(b)
}

pub fn invert(a: &FieldMatrix) -> Result<FieldMatrix, MatrixError> {
    a.invert()
}

/// Concatenates a grid of blocks. Each block row must share a row count and
/// each block column a column count.
pub fn assemble_blocks(layout: &[Vec<&FieldMatrix>]) -> Result<FieldMatrix, MatrixError> {
    let first = layout
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| MatrixError::DimensionMismatch("empty block layout".into()))?;
    let modulus = first.modulus;
    let widths: Vec<usize> = layout[0].iter().map(|b| b.cols).collect();
    let total_cols: usize = widths.iter().sum();
    let mut data = Vec::new();
    let mut total_rows = 0;
    for (bi, block_row) in layout.iter().enumerate() {
        if block_row.len() != widths.len() {
            return Err(MatrixError::DimensionMismatch(format!(
                "block row {bi} has {} blocks, expected {}",
                block_row.len(),
                widths.len()
            )));
        }
        let height = block_row[0].rows;
        for (bj, block) in block_row.iter().enumerate() {
            if block.modulus != modulus {
                return Err(MatrixError::ModulusMismatch(modulus.q(), block.modulus.q()));
            }
            if block.rows != height || block.cols != widths[bj] {
                return Err(MatrixError::DimensionMismatch(format!(
                    "block ({bi},{bj}) is {}x{}, expected {height}x{}",
                    block.rows, block.cols, widths[bj]
                )));
            }
        }
        for r in 0..height {
            for block in block_row {
                data.extend_from_slice(block.row(r));
            }
        }
        total_rows += height;
    }
    Ok(FieldMatrix {
        rows: total_rows,
        cols: total_cols,
        data,
        modulus,
    })
}
