//! Dense matrices, observation sets and the numerical primitives shared by
//! every solver: the sampling operator, singular value soft-thresholding and
//! minimum-norm least squares on a row subset.
//!
//! Storage is dense and row-major. SVDs are delegated to `faer`; everything
//! downstream compares reconstructions rather than raw factors, so the sign
//! ambiguity of singular vectors never leaks out of this module.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::from_row_major(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(i).iter().take(8) {
                write!(f, "{v:>12.5e} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major entries, rejecting empty shapes,
    /// length mismatches and non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n1 = rows.len();
        let n2 = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n2) {
            return Err(Error::shape("ragged rows"));
        }
        DenseMatrix::from_row_major(n1, n2, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Square diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        DenseMatrix::from_fn(
            diag.len(),
            diag.len(),
            |i, j| if i == j { diag[i] } else { 0.0 },
        )
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Column submatrix `X[:, indices]`, in the order given.
    pub fn select_columns(&self, indices: &[usize]) -> Result<DenseMatrix> {
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(Error::shape(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        Ok(DenseMatrix::from_fn(self.rows, indices.len(), |i, k| {
            self.get(i, indices[k])
        }))
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        matmul(
            out.as_faer_mut(),
            Accum::Replace,
            self.as_faer(),
            rhs.as_faer(),
            1.0,
            faer::get_global_parallelism(),
        );
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn thin_svd(&self) -> Result<SvdFactors> {
        let svd = self
            .as_faer()
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let k = s.nrows();
        Ok(SvdFactors {
            u: DenseMatrix::from_fn(self.rows, k, |i, j| u[(i, j)]),
            sigma: (0..k).map(|i| s[i]).collect(),
            v: DenseMatrix::from_fn(self.cols, k, |i, j| v[(i, j)]),
        })
    }

    /// Singular values in non-increasing order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        self.as_faer()
            .singular_values()
            .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(self.singular_values()?.first().copied().unwrap_or(0.0))
    }

    pub fn nuclear_norm(&self) -> Result<f64> {
        Ok(self.singular_values()?.iter().sum())
    }

    /// Number of singular values above `rel_tol * sigma_1`.
    pub fn rank(&self, rel_tol: f64) -> Result<usize> {
        let s = self.singular_values()?;
        let cutoff = rel_tol * s.first().copied().unwrap_or(0.0);
        Ok(s.iter().filter(|&&v| v > cutoff).count())
    }

    pub(crate) fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn as_faer_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_row_major_slice_mut(&mut self.data, self.rows, self.cols)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn zip_with(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;

    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        zip_with(self, rhs, |x, y| x + y)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;

    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        zip_with(self, rhs, |x, y| x - y)
    }
}

impl Mul<f64> for &DenseMatrix {
    type Output = DenseMatrix;

    fn mul(self, rhs: f64) -> DenseMatrix {
        self.map(|v| v * rhs)
    }
}

/// Thin SVD `U diag(sigma) V^T` with `sigma` non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> SvdFactors {
        let k = k.min(self.len());
        SvdFactors {
            u: DenseMatrix::from_fn(self.u.rows(), k, |i, j| self.u.get(i, j)),
            sigma: self.sigma[..k].to_vec(),
            v: DenseMatrix::from_fn(self.v.rows(), k, |i, j| self.v.get(i, j)),
        }
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        rebuild(self.u.as_faer(), &self.sigma, self.v.as_faer())
    }
}

/// `U diag(sigma) V^T` for the columns of `u`/`v` matching `sigma`.
fn rebuild(u: MatRef<'_, f64>, sigma: &[f64], v: MatRef<'_, f64>) -> DenseMatrix {
    let k = sigma.len();
    let mut out = DenseMatrix::zeros(u.nrows(), v.nrows());
    if k == 0 {
        return out;
    }
    let us = Mat::<f64>::from_fn(u.nrows(), k, |i, j| u[(i, j)] * sigma[j]);
    matmul(
        out.as_faer_mut(),
        Accum::Replace,
        us.as_ref(),
        v.get(.., ..k).transpose(),
        1.0,
        faer::get_global_parallelism(),
    );
    out
}

/// Set of observed cells of an `rows x cols` matrix, kept sorted by
/// `(row, col)` with no duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    pairs: Vec<(usize, usize)>,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= rows || j >= cols) {
            return Err(Error::shape(format!(
                "index ({i}, {j}) out of range for {rows}x{cols}"
            )));
        }
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::domain(format!("duplicate observation {:?}", w[0])));
        }
        Ok(ObservationSet { rows, cols, pairs })
    }

    /// Caller guarantees sorted, unique, in-range pairs.
    pub(crate) fn from_sorted_unchecked(
        rows: usize,
        cols: usize,
        pairs: Vec<(usize, usize)>,
    ) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        ObservationSet { rows, cols, pairs }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let pairs = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .collect();
        ObservationSet { rows, cols, pairs }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        ObservationSet {
            rows,
            cols,
            pairs: Vec::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.binary_search(&(i, j)).is_ok()
    }

    /// Fraction of cells observed.
    pub fn density(&self) -> f64 {
        self.pairs.len() as f64 / (self.rows * self.cols) as f64
    }

    pub fn is_subset_of(&self, other: &ObservationSet) -> bool {
        self.shape() == other.shape() && self.pairs.iter().all(|&(i, j)| other.contains(i, j))
    }

    /// Compressed per-column layout: for each column the ascending list of
    /// observed rows.
    pub fn by_column(&self) -> ColumnIndex {
        let mut col_ptr = vec![0usize; self.cols + 1];
        for &(_, j) in &self.pairs {
            col_ptr[j + 1] += 1;
        }
        for j in 0..self.cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; self.pairs.len()];
        for &(i, j) in &self.pairs {
            row_idx[next[j]] = i;
            next[j] += 1;
        }
        ColumnIndex { col_ptr, row_idx }
    }

    /// Observations falling in `columns`, re-indexed to positions within
    /// `columns`.
    pub fn restrict_columns(&self, columns: &[usize]) -> Result<ObservationSet> {
        let mut position = vec![usize::MAX; self.cols];
        for (k, &j) in columns.iter().enumerate() {
            if j >= self.cols {
                return Err(Error::shape(format!(
                    "column {j} out of range for {} columns",
                    self.cols
                )));
            }
            if position[j] != usize::MAX {
                return Err(Error::domain(format!("column {j} selected twice")));
            }
            position[j] = k;
        }
        let pairs = self
            .pairs
            .iter()
            .filter(|&&(_, j)| position[j] != usize::MAX)
            .map(|&(i, j)| (i, position[j]))
            .collect();
        ObservationSet::new(self.rows, columns.len(), pairs)
    }
}

/// Per-column view of an [`ObservationSet`].
#[derive(Clone, Debug)]
pub struct ColumnIndex {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl ColumnIndex {
    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn rows_in(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }
}

/// Partially observed matrix. Values outside the mask are stored as zero and
/// ignored by every consumer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedMatrix {
    values: DenseMatrix,
    mask: ObservationSet,
}

impl MaskedMatrix {
    /// Pairs `values` with `mask`, zeroing every unobserved cell.
    pub fn new(values: DenseMatrix, mask: ObservationSet) -> Result<Self> {
        let values = project_observed(&values, &mask)?;
        Ok(MaskedMatrix { values, mask })
    }

    pub fn fully_observed(values: DenseMatrix) -> Self {
        let mask = ObservationSet::full(values.rows(), values.cols());
        MaskedMatrix { values, mask }
    }

    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mask = ObservationSet::new(
            rows,
            cols,
            triplets.iter().map(|&(i, j, _)| (i, j)).collect(),
        )?;
        let mut data = vec![0.0; rows * cols];
        for &(i, j, v) in triplets {
            data[i * cols + j] = v;
        }
        let values = DenseMatrix::from_row_major(rows, cols, data)?;
        Ok(MaskedMatrix { values, mask })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn mask(&self) -> &ObservationSet {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn density(&self) -> f64 {
        self.mask.density()
    }

    /// Observed `(row, col, value)` triplets in mask order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mask.iter().map(|(i, j)| (i, j, self.values.get(i, j)))
    }

    pub fn restrict_columns(&self, columns: &[usize]) -> Result<MaskedMatrix> {
        let mask = self.mask.restrict_columns(columns)?;
        let values = self.values.select_columns(columns)?;
        Ok(MaskedMatrix { values, mask })
    }

    /// Same values seen through a smaller mask.
    pub fn restrict_to(&self, subset: &ObservationSet) -> Result<MaskedMatrix> {
        if !subset.is_subset_of(&self.mask) {
            return Err(Error::domain("mask is not a subset of the observed cells"));
        }
        MaskedMatrix::new(self.values.clone(), subset.clone())
    }
}

/// The sampling operator: keeps entries on `mask`, zeroes everything else.
pub fn project_observed(x: &DenseMatrix, mask: &ObservationSet) -> Result<DenseMatrix> {
    if x.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "mask is {:?} but matrix is {:?}",
            mask.shape(),
            x.shape()
        )));
    }
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for (i, j) in mask.iter() {
        out[(i, j)] = x.get(i, j);
    }
    Ok(out)
}

/// Output of one soft-thresholding step with the statistics solvers need.
pub(crate) struct Shrunk {
    pub matrix: DenseMatrix,
    pub rank: usize,
    pub nuclear_norm: f64,
}

pub(crate) fn svt_parts(x: &DenseMatrix, tau: f64) -> Result<Shrunk> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!(
            "threshold must be finite and non-negative, got {tau}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::domain("svt input has non-finite entries"));
    }
    let svd = x
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let shrunk: Vec<f64> = (0..s.nrows())
        .map(|i| s[i] - tau)
        .take_while(|&v| v > 0.0)
        .collect();
    Ok(Shrunk {
        matrix: rebuild(svd.U(), &shrunk, svd.V()),
        rank: shrunk.len(),
        nuclear_norm: shrunk.iter().sum(),
    })
}

/// Singular value soft-thresholding: `U max(S - tau, 0) V^T`.
pub fn svt(x: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    svt_parts(x, tau).map(|s| s.matrix)
}

/// Minimum-norm solution of `a[rows, :] z ~ b` through a truncated
/// pseudoinverse. Singular values at or below `eps * max(|rows|, d) * sigma_1`
/// are treated as zero.
///
/// Returns [`Error::Unconstrained`] when `rows` is empty.
pub fn masked_least_squares(a: &DenseMatrix, rows: &[usize], b: &[f64]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Unconstrained);
    }
    if rows.len() != b.len() {
        return Err(Error::shape(format!(
            "{} rows but {} targets",
            rows.len(),
            b.len()
        )));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= a.rows()) {
        return Err(Error::shape(format!(
            "row {bad} out of range for {} rows",
            a.rows()
        )));
    }
    let sub = Mat::<f64>::from_fn(rows.len(), a.cols(), |k, j| a.get(rows[k], j));
    min_norm_solve(sub.as_ref(), b)
}

pub(crate) fn min_norm_solve(a: MatRef<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    truncated_solve(a, b, a.nrows().max(a.ncols()))
}

/// Minimum-norm least squares dropping singular values at or below
/// `eps * rcond_dim * sigma_1`.
pub(crate) fn truncated_solve(a: MatRef<'_, f64>, b: &[f64], rcond_dim: usize) -> Result<Vec<f64>> {
    let (m, d) = (a.nrows(), a.ncols());
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut z = vec![0.0; d];
    if s.nrows() == 0 {
        return Ok(z);
    }
    let cutoff = f64::EPSILON * rcond_dim as f64 * s[0];
    for k in 0..s.nrows() {
        if !(s[k] > cutoff) {
            break;
        }
        let coeff = (0..m).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s[k];
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += coeff * v[(j, k)];
        }
    }
    Ok(z)
}
