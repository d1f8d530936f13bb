//! Cosine similarity kernels, database standardization, the dense
//! intra-database similarity matrix and K-argmax candidate selection.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::DescriptorSet;
use crate::error::{EprError, Result};

/// Largest database accepted by [`intra_db_matrix`] (the matrix is dense).
pub const MAX_DB_SIZE: usize = 20_000;

/// Columns with a standard deviation below this are only mean-centered.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Dot product with a fixed summation order.
///
/// Four interleaved partial sums; the order depends only on the length, so
/// `dot(a, b)` and `dot(b, a)` agree bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cosine similarity from a dot product and both squared norms, clamped
/// to [-1, 1].
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, sq_norm_a: f64, sq_norm_b: f64) -> f64 {
    (dot / (sq_norm_a * sq_norm_b).sqrt()).clamp(-1.0, 1.0)
}

pub(crate) fn squared_norms(set: &DescriptorSet) -> Vec<f64> {
    set.rows().map(|r| dot(r, r)).collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EprError::Domain(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EprError::Domain("non-finite input".into()));
    }
    let (na, nb) = (dot(a, a), dot(b, b));
    if na == 0.0 || nb == 0.0 {
        return Err(EprError::Domain("zero-norm input".into()));
    }
    Ok(cosine_from_parts(dot(a, b), na, nb))
}

/// Per-dimension z-scoring over the rows of `db`, with population
/// statistics (divide by N).
pub fn standardize(db: &DescriptorSet) -> Result<DescriptorSet> {
    let n = db.count();
    if n < 2 {
        return Err(EprError::Domain(format!(
            "standardization needs at least 2 rows, got {n}"
        )));
    }
    let dim = db.dim();
    let mut mean = vec![0.0; dim];
    for row in db.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut var = vec![0.0; dim];
    for row in db.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let std = (s / n as f64).sqrt();
            if std < DEGENERATE_STD {
                1.0
            } else {
                std
            }
        })
        .collect();

    let mut out = Vec::with_capacity(n * dim);
    for row in db.rows() {
        out.extend(
            row.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s),
        );
    }
    DescriptorSet::new(db.role(), dim, out)
}

/// Dense symmetric matrix of cosine similarities among database rows.
///
/// Stored as `f32`; the diagonal is exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct IntraDbSimilarities {
    size: usize,
    values: Vec<f32>,
}

impl IntraDbSimilarities {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        f64::from(self.values[i * self.size + j])
    }

    /// Row `i`; equal to column `i` by symmetry.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    /// Entries strictly above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.size;
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend(self.row(i)[i + 1..].iter().map(|&v| f64::from(v)));
        }
        out
    }
}

/// Computes S^DB over `db`, optionally standardizing the rows first.
pub fn intra_db_matrix(
    db: &DescriptorSet,
    use_standardization: bool,
) -> Result<IntraDbSimilarities> {
    let n = db.count();
    if n > MAX_DB_SIZE {
        return Err(EprError::Domain(format!(
            "database of {n} descriptors exceeds the dense limit of {MAX_DB_SIZE}"
        )));
    }
    let standardized;
    let rows = if use_standardization {
        standardized = standardize(db)?;
        &standardized
    } else {
        db
    };
    let norms = squared_norms(rows);
    if let Some(i) = norms.iter().position(|&s| s == 0.0 || !s.is_finite()) {
        return Err(EprError::Domain(format!(
            "row {i} has zero norm after preprocessing"
        )));
    }

    let mut values = vec![0.0f32; n * n];
    values
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, out)| {
            let a = rows.row(i);
            for j in i..n {
                out[j] = cosine_from_parts(dot(a, rows.row(j)), norms[i], norms[j]) as f32;
            }
        });
    for i in 1..n {
        for j in 0..i {
            values[i * n + j] = values[j * n + i];
        }
    }
    Ok(IntraDbSimilarities { size: n, values })
}

/// Distinct database indices in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateSet {
    indices: Vec<usize>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.indices
    }
}

/// Ranking order: larger value first, then smaller index.
fn rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Indices of the `k` largest values among the entries present in
/// `values` (a sparse `(index, value)` map), best first. Ties go to the
/// smaller index.
pub fn k_argmax(values: &[(usize, f64)], k: usize) -> CandidateSet {
    let mut entries = values.to_vec();
    if k == 0 {
        entries.clear();
    } else if entries.len() > k {
        entries.select_nth_unstable_by(k - 1, rank);
        entries.truncate(k);
    }
    entries.sort_unstable_by(rank);
    CandidateSet {
        indices: entries.into_iter().map(|(i, _)| i).collect(),
    }
}

/// All database indices whose similarity to `c` is at least `theta`, in
/// ascending order.
pub fn intra_db_neighbors(sdb: &IntraDbSimilarities, c: usize, theta: f64) -> CandidateSet {
    CandidateSet {
        indices: sdb
            .row(c)
            .iter()
            .enumerate()
            .filter(|(_, &s)| f64::from(s) >= theta)
            .map(|(j, _)| j)
            .collect(),
    }
}
