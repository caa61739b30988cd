//! Coordinate-format sparse matrices and the assemblers that turn raw,
//! duplicate-laden triplet streams into them.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CooError {
    #[error("entry ({row}, {col}) outside {nrows}x{ncols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Deduplicated COO matrix, sorted row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CooMatrix {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        CooMatrix {
            nrows,
            ncols,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Sum duplicates and sort. Explicit zeros are kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, CooError> {
        let (rows, cols, vals): (Vec<_>, Vec<_>, Vec<_>) = triplets.into_iter().fold(
            (Vec::new(), Vec::new(), Vec::new()),
            |(mut r, mut c, mut v), (i, j, x)| {
                r.push(i);
                c.push(j);
                v.push(x);
                (r, c, v)
            },
        );
        let asm = CooAssembler::general(nrows, ncols, &rows, &cols)?;
        Ok(asm.assemble(&vals))
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn pattern(&self) -> (Vec<usize>, Vec<usize>) {
        (self.rows.clone(), self.cols.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows * self.ncols];
        for (r, c, v) in self.iter() {
            out[r * self.ncols + c] += v;
        }
        out
    }

    /// Dense symmetric matrix from a lower-triangle COO.
    pub fn lower_to_dense_symmetric(&self) -> Vec<f64> {
        let n = self.ncols;
        let mut out = vec![0.0; self.nrows * n];
        for (r, c, v) in self.iter() {
            out[r * n + c] = v;
            out[c * n + r] = v;
        }
        out
    }
}

/// Precomputed map from raw triplet positions to deduplicated slots.
///
/// Built once from the raw index stream (which depends only on structure);
/// each numeric evaluation then scatters raw values into the slots.
#[derive(Clone, Debug)]
pub struct CooAssembler {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    slot: Vec<usize>,
    scale: Vec<f64>,
}

impl CooAssembler {
    /// Assembler for an unsymmetric matrix.
    pub fn general(
        nrows: usize,
        ncols: usize,
        raw_rows: &[usize],
        raw_cols: &[usize],
    ) -> Result<Self, CooError> {
        let scale = vec![1.0; raw_rows.len()];
        Self::build(nrows, ncols, raw_rows.to_vec(), raw_cols.to_vec(), scale)
    }

    /// Assembler for a symmetric `n x n` matrix given as half-Hessian
    /// triplets (`S = T + T^T`). Output is the lower triangle: off-diagonal
    /// entries are folded to `(max, min)`, diagonal entries are doubled.
    pub fn lower_symmetric(
        n: usize,
        raw_rows: &[usize],
        raw_cols: &[usize],
    ) -> Result<Self, CooError> {
        let mut rows = Vec::with_capacity(raw_rows.len());
        let mut cols = Vec::with_capacity(raw_rows.len());
        let mut scale = Vec::with_capacity(raw_rows.len());
        for (&r, &c) in raw_rows.iter().zip(raw_cols) {
            rows.push(r.max(c));
            cols.push(r.min(c));
            scale.push(if r == c { 2.0 } else { 1.0 });
        }
        Self::build(n, n, rows, cols, scale)
    }

    fn build(
        nrows: usize,
        ncols: usize,
        rows: Vec<usize>,
        cols: Vec<usize>,
        scale: Vec<f64>,
    ) -> Result<Self, CooError> {
        assert_eq!(rows.len(), cols.len());
        for (&r, &c) in rows.iter().zip(&cols) {
            if r >= nrows || c >= ncols {
                return Err(CooError::OutOfRange {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_unstable_by_key(|&k| (rows[k], cols[k]));
        let mut slot = vec![0; rows.len()];
        let mut out_rows: Vec<usize> = Vec::new();
        let mut out_cols: Vec<usize> = Vec::new();
        for &k in &order {
            let key = (rows[k], cols[k]);
            if out_rows.last().copied() != Some(key.0) || out_cols.last().copied() != Some(key.1) {
                out_rows.push(key.0);
                out_cols.push(key.1);
            }
            slot[k] = out_rows.len() - 1;
        }
        Ok(CooAssembler {
            nrows,
            ncols,
            rows: out_rows,
            cols: out_cols,
            slot,
            scale,
        })
    }

    /// Number of raw entries the assembler expects.
    pub fn raw_len(&self) -> usize {
        self.slot.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Scatter-add raw values into `out` (length `nnz`).
    pub fn accumulate(&self, raw: &[f64], out: &mut [f64]) {
        assert_eq!(raw.len(), self.slot.len(), "raw value stream length");
        assert_eq!(out.len(), self.rows.len());
        for ((&s, &w), &v) in self.slot.iter().zip(&self.scale).zip(raw) {
            out[s] += w * v;
        }
    }

    pub fn assemble(&self, raw: &[f64]) -> CooMatrix {
        let mut vals = vec![0.0; self.rows.len()];
        self.accumulate(raw, &mut vals);
        CooMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            vals,
        }
    }

    pub fn pattern(&self) -> (Vec<usize>, Vec<usize>) {
        (self.rows.clone(), self.cols.clone())
    }
}

/// Sparse vector with sorted unique indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    pub len: usize,
    pub idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (&i, &v) in self.idx.iter().zip(&self.vals) {
            out[i] += v;
        }
        out
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.idx.binary_search(&i) {
            Ok(k) => self.vals[k],
            Err(_) => 0.0,
        }
    }
}

/// [`CooAssembler`] specialised to vectors.
#[derive(Clone, Debug)]
pub struct VectorAssembler {
    inner: CooAssembler,
}

impl VectorAssembler {
    pub fn new(len: usize, raw_idx: &[usize]) -> Result<Self, CooError> {
        let zeros = vec![0; raw_idx.len()];
        Ok(VectorAssembler {
            inner: CooAssembler::general(len, 1, raw_idx, &zeros)?,
        })
    }

    pub fn raw_len(&self) -> usize {
        self.inner.raw_len()
    }

    pub fn indices(&self) -> &[usize] {
        self.inner.rows()
    }

    pub fn assemble(&self, raw: &[f64]) -> SparseVector {
        let m = self.inner.assemble(raw);
        SparseVector {
            len: m.nrows,
            idx: m.rows,
            vals: m.vals,
        }
    }
}

/// Fold half-Hessian triplets into a deduplicated lower-triangle matrix.
pub fn symmetrize_lower(
    n: usize,
    rows: &[usize],
    cols: &[usize],
    vals: &[f64],
) -> Result<CooMatrix, CooError> {
    if rows.len() != vals.len() || cols.len() != vals.len() {
        return Err(CooError::LengthMismatch {
            expected: rows.len(),
            got: vals.len(),
        });
    }
    Ok(CooAssembler::lower_symmetric(n, rows, cols)?.assemble(vals))
}
