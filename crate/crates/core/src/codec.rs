//! Real-valued systematic MDS codes over matrix row blocks, and the group
//! code built from one independent MDS code per worker group.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Allocation, GroupSystem};
use crate::scalar::Scalar;
use crate::stream::{self, Domain};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Entries uniform in `[-1, 1)`, reproducible from `seed`.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng =
            stream::substream(seed, Domain::Workload, ((rows as u64) << 32) ^ cols as u64);
        Self::from_fn(rows, cols, |_, _| T::of(rng.random_range(-1.0..1.0)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `start..start + count` as a new matrix.
    pub fn row_block(&self, start: usize, count: usize) -> Self {
        Self {
            rows: count,
            cols: self.cols,
            data: self.data[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }

    /// Matrix formed by the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d = *d + a * b;
                }
            }
        }
        Ok(out)
    }

    /// Stacks equally wide blocks vertically.
    pub fn vstack(blocks: &[Self]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::ShapeMismatch(
                "vstack of blocks with different widths".into(),
            ));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// `||self - reference||_F / ||reference||_F`.
    pub fn relative_error(&self, reference: &Self) -> T {
        let diff: T = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let norm = reference.frobenius_norm();
        if norm == T::zero() {
            diff.sqrt()
        } else {
            diff.sqrt() / norm
        }
    }
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
    swaps: usize,
}

impl<T: Scalar> Lu<T> {
    /// Fails with `SingularSubmatrix` when a pivot falls below
    /// `n * eps * max|a|`.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::ShapeMismatch(format!(
                "LU of a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let scale = lu.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let threshold = T::of_usize(n.max(1)) * T::epsilon() * scale;
        for col in 0..n {
            let (p, pivot_abs) =
                (col..n)
                    .map(|r| (r, lu[r * n + col].abs()))
                    .fold(
                        (col, -T::one()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if !(pivot_abs > threshold) {
                return Err(Error::SingularSubmatrix);
            }
            if p != col {
                for c in 0..n {
                    lu.swap(p * n + c, col * n + c);
                }
                perm.swap(p, col);
                swaps += 1;
            }
            let pivot = lu[col * n + col];
            for r in col + 1..n {
                let f = lu[r * n + col] / pivot;
                lu[r * n + col] = f;
                if f != T::zero() {
                    for c in col + 1..n {
                        lu[r * n + c] = lu[r * n + c] - f * lu[col * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, swaps })
    }

    pub fn determinant(&self) -> T {
        let diag = (0..self.n).fold(T::one(), |d, i| d * self.lu[i * self.n + i]);
        if self.swaps.is_multiple_of(2) {
            diag
        } else {
            -diag
        }
    }

    /// Solves `A X = B` for every column of `b` at once.
    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.n;
        if b.rows != n {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has {} rows, need {n}",
                b.rows
            )));
        }
        let w = b.cols;
        let mut x = b.select_rows(&self.perm);
        for r in 0..n {
            for k in 0..r {
                let f = self.lu[r * n + k];
                if f == T::zero() {
                    continue;
                }
                for c in 0..w {
                    let v = x.data[r * w + c] - f * x.data[k * w + c];
                    x.data[r * w + c] = v;
                }
            }
        }
        for r in (0..n).rev() {
            for k in r + 1..n {
                let f = self.lu[r * n + k];
                if f == T::zero() {
                    continue;
                }
                for c in 0..w {
                    let v = x.data[r * w + c] - f * x.data[k * w + c];
                    x.data[r * w + c] = v;
                }
            }
            let d = self.lu[r * n + r];
            for c in 0..w {
                x.data[r * w + c] = x.data[r * w + c] / d;
            }
        }
        Ok(x)
    }
}

/// Parity construction of a systematic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// I.i.d. standard normal parity rows. Every square submatrix is
    /// nonsingular with probability one, and stays well conditioned at the
    /// sizes the simulator uses (k in the hundreds).
    Gaussian,
    /// Cauchy rows `1 / (x_r - y_c)` with interlaced nodes `x_r = r + 1/2`,
    /// `y_c = c`. Provably MDS, but the conditioning of its minors grows
    /// exponentially, so keep it to small codes (k of about 10 or less).
    Cauchy,
}

/// `n x k` generator of a systematic real MDS code: identity on top,
/// `n - k` parity rows below.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<T> {
    entries: Matrix<T>,
    systematic: bool,
}

/// Random k-subsets factored at construction to catch a degenerate draw.
const CONSTRUCTION_CHECKS: usize = 8;
const MAX_REDRAWS: u64 = 16;

impl<T: Scalar> GeneratorMatrix<T> {
    pub fn n(&self) -> usize {
        self.entries.rows
    }

    pub fn k(&self) -> usize {
        self.entries.cols
    }

    pub fn is_systematic(&self) -> bool {
        self.systematic
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn row(&self, r: usize) -> &[T] {
        self.entries.row(r)
    }

    /// Rows `rows` of the generator as a square matrix.
    pub fn submatrix(&self, rows: &[usize]) -> Matrix<T> {
        self.entries.select_rows(rows)
    }

    /// Coded block `r`: `sum_c G[r, c] * source[c]`.
    pub fn encode_row(&self, r: usize, source: &[Matrix<T>]) -> Result<Matrix<T>> {
        if source.len() != self.k() {
            return Err(Error::ShapeMismatch(format!(
                "{} source blocks for a code of dimension {}",
                source.len(),
                self.k()
            )));
        }
        if self.systematic && r < self.k() {
            return Ok(source[r].clone());
        }
        let (rows, cols) = (source[0].rows, source[0].cols);
        let mut out = Matrix::zeros(rows, cols);
        for (&g, block) in self.row(r).iter().zip(source) {
            if block.rows != rows || block.cols != cols {
                return Err(Error::ShapeMismatch("source blocks differ in shape".into()));
            }
            for (o, &v) in out.data.iter_mut().zip(&block.data) {
                *o = *o + g * v;
            }
        }
        Ok(out)
    }

    /// All `n` coded blocks.
    pub fn encode(&self, source: &[Matrix<T>]) -> Result<Vec<Matrix<T>>> {
        (0..self.n()).map(|r| self.encode_row(r, source)).collect()
    }
}

/// Systematic `(n, k)` generator with seeded Gaussian parity.
pub fn mds_generator<T: Scalar>(n: usize, k: usize, seed: u64) -> Result<GeneratorMatrix<T>> {
    generator_with(n, k, seed, Parity::Gaussian)
}

/// Systematic `(n, k)` generator with the chosen parity construction.
pub fn generator_with<T: Scalar>(
    n: usize,
    k: usize,
    seed: u64,
    parity: Parity,
) -> Result<GeneratorMatrix<T>> {
    if k == 0 || k > n {
        return Err(Error::InvalidDims { n, k });
    }
    let base_stream = ((n as u64) << 32) ^ k as u64;
    for attempt in 0..MAX_REDRAWS {
        let mut rng = stream::substream(
            seed,
            Domain::Generator,
            base_stream.wrapping_add(attempt << 48),
        );
        let entries = Matrix::from_fn(n, k, |r, c| {
            if r < k {
                if r == c {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                match parity {
                    Parity::Gaussian => T::of(rng.sample::<f64, _>(StandardNormal)),
                    Parity::Cauchy => {
                        let x = (r - k) as f64 + 0.5;
                        T::of(1.0 / (x - c as f64))
                    }
                }
            }
        });
        let generator = GeneratorMatrix {
            entries,
            systematic: true,
        };
        if n == k || parity == Parity::Cauchy || passes_spot_checks(&generator, &mut rng) {
            return Ok(generator);
        }
    }
    Err(Error::SingularSubmatrix)
}

fn passes_spot_checks<T: Scalar>(g: &GeneratorMatrix<T>, rng: &mut impl Rng) -> bool {
    let mut rows: Vec<usize> = (0..g.n()).collect();
    (0..CONSTRUCTION_CHECKS).all(|_| {
        // Partial Fisher-Yates: the first k entries form a uniform k-subset.
        for i in 0..g.k() {
            let j = rng.random_range(i..g.n());
            rows.swap(i, j);
        }
        Lu::factor(&g.submatrix(&rows[..g.k()])).is_ok()
    })
}

/// Recovers the `k` source payloads from coded results.
///
/// Uses exactly the first `k` results with distinct row indices, in the
/// order given (arrival order). Payloads are flattened block products and
/// must share one length.
pub fn decode_from_subset<T: Scalar>(
    results: &[(usize, Vec<T>)],
    generator: &GeneratorMatrix<T>,
) -> Result<Vec<Vec<T>>> {
    let k = generator.k();
    let mut rows = Vec::with_capacity(k);
    let mut picked = Vec::with_capacity(k);
    for (idx, (row, _)) in results.iter().enumerate() {
        if rows.len() == k {
            break;
        }
        if *row >= generator.n() {
            return Err(Error::ShapeMismatch(format!(
                "row index {row} outside a code of length {}",
                generator.n()
            )));
        }
        if !rows.contains(row) {
            rows.push(*row);
            picked.push(idx);
        }
    }
    if rows.len() < k {
        return Err(Error::InsufficientResults {
            needed: k,
            got: rows.len(),
        });
    }
    let width = results[picked[0]].1.len();
    if picked.iter().any(|&i| results[i].1.len() != width) {
        return Err(Error::ShapeMismatch(
            "result payloads differ in length".into(),
        ));
    }

    if generator.systematic && rows.iter().all(|&r| r < k) {
        let mut out = vec![Vec::new(); k];
        for (&r, &i) in rows.iter().zip(&picked) {
            out[r] = results[i].1.clone();
        }
        return Ok(out);
    }

    let lu = Lu::factor(&generator.submatrix(&rows))?;
    let mut rhs = Vec::with_capacity(k * width);
    for &i in &picked {
        rhs.extend_from_slice(&results[i].1);
    }
    let solved = lu.solve(&Matrix::from_vec(k, width, rhs)?)?;
    Ok((0..k).map(|r| solved.row(r).to_vec()).collect())
}

/// One group's share of a group code.
#[derive(Debug, Clone)]
pub struct GroupCode<T> {
    /// `None` for a group that received no tasks.
    pub generator: Option<GeneratorMatrix<T>>,
    /// One coded block per worker of the group (empty for idle groups).
    pub blocks: Vec<Matrix<T>>,
    /// Indices of the source row blocks `A_r` this group encodes.
    pub source_blocks: Range<usize>,
}

/// Coded blocks stored by every worker of a group-coded job.
#[derive(Debug, Clone)]
pub struct CodedAssignment<T> {
    pub groups: Vec<GroupCode<T>>,
    /// Rows per source block, `m / k_total`.
    pub block_rows: usize,
    /// Columns of `A`.
    pub cols: usize,
    pub k_total: usize,
}

impl<T: Scalar> CodedAssignment<T> {
    pub fn quota(&self, group: usize) -> usize {
        self.groups[group].source_blocks.len()
    }

    /// Block stored by worker `worker` of `group`.
    pub fn block(&self, group: usize, worker: usize) -> Option<&Matrix<T>> {
        self.groups[group].blocks.get(worker)
    }

    pub fn total_rows(&self) -> usize {
        self.block_rows * self.k_total
    }
}

/// Splits `a` into `k_total` row blocks, gives consecutive chunks of `k_i`
/// blocks to group `i`, and encodes each chunk with its own `(n_i, k_i)` code.
pub fn group_encode<T: Scalar>(
    a: &Matrix<T>,
    system: &GroupSystem<T>,
    alloc: &Allocation,
    seed: u64,
) -> Result<CodedAssignment<T>> {
    alloc.check_against(system)?;
    let k_total = alloc.k_total();
    if !a.rows.is_multiple_of(k_total) || a.rows == 0 {
        return Err(Error::IndivisibleRows {
            rows: a.rows,
            k: k_total,
        });
    }
    let block_rows = a.rows / k_total;
    let mut next = 0;
    let mut groups = Vec::with_capacity(system.num_groups());
    for g in 0..system.num_groups() {
        let k_i = alloc.get(g);
        let source_blocks = next..next + k_i;
        next += k_i;
        if k_i == 0 {
            groups.push(GroupCode {
                generator: None,
                blocks: Vec::new(),
                source_blocks,
            });
            continue;
        }
        let source: Vec<Matrix<T>> = source_blocks
            .clone()
            .map(|r| a.row_block(r * block_rows, block_rows))
            .collect();
        let generator = mds_generator(system.size(g), k_i, seed.wrapping_add(g as u64))?;
        let blocks = generator.encode(&source)?;
        groups.push(GroupCode {
            generator: Some(generator),
            blocks,
            source_blocks,
        });
    }
    Ok(CodedAssignment {
        groups,
        block_rows,
        cols: a.cols,
        k_total,
    })
}

fn decode_group<T: Scalar>(
    group: usize,
    results: &[(usize, Vec<T>)],
    assignment: &CodedAssignment<T>,
) -> Result<Vec<Vec<T>>> {
    let code = &assignment.groups[group];
    let Some(generator) = &code.generator else {
        return Ok(Vec::new());
    };
    decode_from_subset(results, generator).map_err(|e| match e {
        Error::InsufficientResults { needed, got } => Error::GroupShortfall { group, got, needed },
        other => other,
    })
}

fn assemble<T: Scalar>(
    decoded: Vec<Vec<Vec<T>>>,
    assignment: &CodedAssignment<T>,
) -> Result<Matrix<T>> {
    let payload = decoded.iter().flatten().map(Vec::len).next().unwrap_or(0);
    if payload % assignment.block_rows != 0 {
        return Err(Error::ShapeMismatch(
            "payload is not a whole number of block rows".into(),
        ));
    }
    let width = payload / assignment.block_rows;
    let mut data = Vec::with_capacity(assignment.total_rows() * width);
    for block in decoded.into_iter().flatten() {
        if block.len() != payload {
            return Err(Error::ShapeMismatch(
                "result payloads differ in length".into(),
            ));
        }
        data.extend(block);
    }
    Matrix::from_vec(assignment.total_rows(), width, data)
}

fn check_group_count<T: Scalar, R>(per_group: &[R], assignment: &CodedAssignment<T>) -> Result<()> {
    if per_group.len() != assignment.groups.len() {
        return Err(Error::ShapeMismatch(format!(
            "results for {} groups, code has {}",
            per_group.len(),
            assignment.groups.len()
        )));
    }
    Ok(())
}

/// Decodes every group independently and concatenates the source products
/// in original row order.
pub fn group_decode<T: Scalar>(
    per_group_results: &[Vec<(usize, Vec<T>)>],
    assignment: &CodedAssignment<T>,
) -> Result<Matrix<T>> {
    check_group_count(per_group_results, assignment)?;
    let decoded = per_group_results
        .iter()
        .enumerate()
        .map(|(g, r)| decode_group(g, r, assignment))
        .collect::<Result<Vec<_>>>()?;
    assemble(decoded, assignment)
}

/// [`group_decode`] with the per-group solves run concurrently. The output is
/// identical to the sequential version.
pub fn group_decode_parallel<T: Scalar>(
    per_group_results: &[Vec<(usize, Vec<T>)>],
    assignment: &CodedAssignment<T>,
) -> Result<Matrix<T>> {
    check_group_count(per_group_results, assignment)?;
    let decoded = per_group_results
        .par_iter()
        .enumerate()
        .map(|(g, r)| decode_group(g, r, assignment))
        .collect::<Result<Vec<_>>>()?;
    assemble(decoded, assignment)
}

pub(crate) fn decode_single_group<T: Scalar>(
    group: usize,
    results: &[(usize, Vec<T>)],
    assignment: &CodedAssignment<T>,
) -> Result<Vec<Vec<T>>> {
    decode_group(group, results, assignment)
}

pub(crate) fn assemble_groups<T: Scalar>(
    decoded: Vec<Vec<Vec<T>>>,
    assignment: &CodedAssignment<T>,
) -> Result<Matrix<T>> {
    assemble(decoded, assignment)
}
