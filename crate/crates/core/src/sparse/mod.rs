//! Compressed-row sparse matrices and the linear solvers used by every
//! discrete system in the crate.

mod market;
mod solve;

pub use market::write_matrix_market;
pub use solve::{
    solve, LinearSolverConfig, LuFactor, Preconditioner, SolveError, SolveMethod, SolveStats,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AssemblyError {
    #[error("triplet ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
}

/// Accumulates `(row, col, value)` contributions; duplicates are summed on
/// finalisation in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Appends another builder's entries shifted by `(row0, col0)`.
    pub fn add_block(&mut self, row0: usize, col0: usize, block: &TripletBuilder) {
        self.entries.extend(
            block
                .entries
                .iter()
                .map(|&(r, c, v)| (r + row0, c + col0, v)),
        );
    }

    /// Appends the transpose of `block`, scaled, at `(row0, col0)`.
    pub fn add_block_transposed(
        &mut self,
        row0: usize,
        col0: usize,
        block: &TripletBuilder,
        scale: f64,
    ) {
        self.entries.extend(
            block
                .entries
                .iter()
                .map(|&(r, c, v)| (c + row0, r + col0, scale * v)),
        );
    }

    pub fn add_block_scaled(
        &mut self,
        row0: usize,
        col0: usize,
        block: &TripletBuilder,
        scale: f64,
    ) {
        self.entries.extend(
            block
                .entries
                .iter()
                .map(|&(r, c, v)| (r + row0, c + col0, scale * v)),
        );
    }

    /// Replaces every row flagged in `constrained` by an identity row.
    pub fn constrain_rows(&mut self, constrained: &[bool]) {
        self.entries
            .retain(|&(r, _, _)| !constrained.get(r).copied().unwrap_or(false));
        for (r, &c) in constrained.iter().enumerate() {
            if c {
                self.entries.push((r, r, 1.0));
            }
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn build(&self) -> Result<CsrMatrix, AssemblyError> {
        assemble(self.nrows, self.ncols, self.entries.iter().copied())
    }
}

/// Builds a CSR matrix from a triplet stream, summing duplicates.
pub fn assemble(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> Result<CsrMatrix, AssemblyError> {
    let entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
    let mut start = vec![0usize; nrows + 1];
    for &(row, col, _) in &entries {
        if row >= nrows || col >= ncols {
            return Err(AssemblyError::OutOfRange {
                row,
                col,
                nrows,
                ncols,
            });
        }
        start[row + 1] += 1;
    }
    for i in 0..nrows {
        start[i + 1] += start[i];
    }
    // bucket by row, then stable-sort each row: duplicates are summed in
    // insertion order
    let mut bucket = vec![(0usize, 0.0f64); entries.len()];
    let mut fill = start.clone();
    for &(r, c, v) in &entries {
        bucket[fill[r]] = (c, v);
        fill[r] += 1;
    }
    let mut row_ptr = vec![0usize; nrows + 1];
    let mut col_idx = Vec::with_capacity(entries.len());
    let mut values: Vec<f64> = Vec::with_capacity(entries.len());
    for r in 0..nrows {
        let row = &mut bucket[start[r]..start[r + 1]];
        row.sort_by_key(|&(c, _)| c);
        let mut last = None;
        for &(c, v) in row.iter() {
            if last == Some(c) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                last = Some(c);
            }
        }
        row_ptr[r + 1] = col_idx.len();
    }
    Ok(CsrMatrix {
        nrows,
        ncols,
        row_ptr,
        col_idx,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trip = (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        assemble(self.ncols, self.nrows, trip).expect("transpose indices are in range")
    }

    /// `true` if column indices are strictly increasing in every row.
    pub fn is_canonical(&self) -> bool {
        (0..self.nrows).all(|i| {
            self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
                .windows(2)
                .all(|w| w[0] < w[1])
        })
    }

    /// `diag(r) A diag(c)`
    pub fn scaled(&self, r: &[f64], c: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= r[i] * c[self.col_idx[k]];
            }
        }
        out
    }

    pub(crate) fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        let trip: Vec<_> = (0..self.nrows)
            .flat_map(|i| {
                self.row(i)
                    .map(move |(j, v)| faer::sparse::Triplet::new(i, j, v))
            })
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .expect("canonical CSR converts")
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖b - A x‖₂`
pub fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    ax.iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt()
}
