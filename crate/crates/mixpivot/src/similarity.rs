//! Posterior co-clustering estimates from allocation draws.
//!
//! The similarity between units `i` and `j` is the fraction of retained
//! iterations in which they share a component. Entries are accumulated
//! as integer counts and divided by the iteration count once, so every
//! entry is exactly `k / H` for some integer `k` and the matrix is
//! invariant under per-iteration label permutations by construction.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::chain::MixtureChain;
use crate::chainfile::fmt_real;
use crate::error::{Error, Result};

/// Symmetric matrix of pairwise co-clustering probabilities with a unit
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    draws: usize,
    c: Vec<f64>,
}

impl SimilarityMatrix {
    /// Wraps a full row-major `n x n` matrix, validating symmetry, a
    /// unit diagonal, and entries within `[0, 1]`.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "similarity matrix expects {} values for n = {}, got {}",
                n * n,
                n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "similarity diagonal entry {} is not 1",
                    i + 1
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "similarity entry ({}, {}) = {v} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                if values[j * n + i] != v {
                    return Err(Error::InvalidArgument(format!(
                        "similarity entries ({}, {}) and ({}, {}) differ",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { n, draws: 0, c: values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of draws the estimate was computed from (0 for matrices
    /// supplied directly via [`SimilarityMatrix::from_values`]).
    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.c[i * self.n..(i + 1) * self.n]
    }

    /// Pairwise dissimilarities `1 - c` with a zero diagonal.
    pub fn dissimilarity(&self) -> Dissimilarity {
        let mut values = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    values[i * self.n + j] = 1.0 - self.at(i, j);
                }
            }
        }
        Dissimilarity { n: self.n, values }
    }

    /// Writes the matrix as `n` headerless comma-separated rows using
    /// lossless real formatting.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_csv(path, self.n, self.n, &self.c)
    }
}

/// Symmetric dissimilarity matrix with a zero diagonal, entries in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissimilarity {
    n: usize,
    values: Vec<f64>,
}

impl Dissimilarity {
    /// Wraps a full row-major matrix, validating symmetry, a zero
    /// diagonal, and entries within `[0, 1]`.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "dissimilarity matrix expects {} values for n = {}, got {}",
                n * n,
                n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "dissimilarity diagonal entry {} is not 0",
                    i + 1
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "dissimilarity entry ({}, {}) = {v} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                if values[j * n + i] != v {
                    return Err(Error::InvalidArgument(format!(
                        "dissimilarity entries ({}, {}) and ({}, {}) differ",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(Dissimilarity { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Estimates the co-clustering probability of every pair of units as the
/// fraction of iterations allocating them to the same component.
pub fn estimate_similarity(chain: &MixtureChain) -> SimilarityMatrix {
    let n = chain.n();
    let h = chain.h();
    // Packed upper triangle: pair (i, j) with i < j lives at
    // row_start(i) + (j - i - 1), where row i holds n - 1 - i entries.
    let row_start = |i: usize| i * (2 * n - i - 1) / 2;
    let mut counts = vec![0u32; n * (n - 1) / 2];
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); chain.g()];
    for hh in 0..h {
        for b in &mut buckets {
            b.clear();
        }
        for (i, &label) in chain.z_row(hh).iter().enumerate() {
            buckets[label as usize - 1].push(i as u32);
        }
        for members in &buckets {
            for (a, &i) in members.iter().enumerate() {
                let i = i as usize;
                let start = row_start(i);
                for &j in &members[a + 1..] {
                    counts[start + (j as usize - i - 1)] += 1;
                }
            }
        }
    }

    let mut c = vec![0.0; n * n];
    for i in 0..n {
        c[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let value = counts[row_start(i) + j - i - 1] as f64 / h as f64;
            c[i * n + j] = value;
            c[j * n + i] = value;
        }
    }
    SimilarityMatrix { n, draws: h, c }
}

/// How group-occupation probabilities are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divisor {
    /// Divide occupation counts by the chain's own iteration count.
    ChainLength,
    /// Divide by the size of the iteration subset, so rows sum to one.
    SubsetSize,
    /// Divide by an explicit total, e.g. the pre-filter chain length.
    Fixed(usize),
}

/// Per-unit group-occupation probabilities, `n x G` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProbs {
    n: usize,
    groups: usize,
    q: Vec<f64>,
}

impl GroupProbs {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn at(&self, i: usize, g: usize) -> f64 {
        self.q[i * self.groups + g]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.groups..(i + 1) * self.groups]
    }

    /// Writes the matrix as `n` headerless comma-separated rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_csv(path, self.n, self.groups, &self.q)
    }
}

/// Estimates, for each unit and component, the fraction of the selected
/// iterations allocating the unit to that component. `iterations` holds
/// strictly increasing 1-based iteration numbers.
pub fn estimate_group_probs(
    chain: &MixtureChain,
    iterations: &[usize],
    divisor: Divisor,
) -> Result<GroupProbs> {
    if iterations.is_empty() {
        return Err(Error::InvalidArgument(
            "group probabilities need a non-empty iteration set".into(),
        ));
    }
    let mut prev = 0usize;
    for &h in iterations {
        if h <= prev || h > chain.h() {
            return Err(Error::InvalidArgument(format!(
                "iteration numbers must be strictly increasing within 1..={}, got {}",
                chain.h(),
                h
            )));
        }
        prev = h;
    }
    let denom = match divisor {
        Divisor::ChainLength => chain.h(),
        Divisor::SubsetSize => iterations.len(),
        Divisor::Fixed(total) => {
            if total < iterations.len() {
                return Err(Error::InvalidArgument(format!(
                    "fixed divisor {} is smaller than the iteration subset ({})",
                    total,
                    iterations.len()
                )));
            }
            total
        }
    };

    let n = chain.n();
    let g = chain.g();
    let mut counts = vec![0u32; n * g];
    for &h1 in iterations {
        for (i, &label) in chain.z_row(h1 - 1).iter().enumerate() {
            counts[i * g + (label as usize - 1)] += 1;
        }
    }
    let q = counts.iter().map(|&k| k as f64 / denom as f64).collect();
    Ok(GroupProbs { n, groups: g, q })
}

/// All iteration numbers of a chain, for whole-chain estimates.
pub fn full_iteration_set(chain: &MixtureChain) -> Vec<usize> {
    (1..=chain.h()).collect()
}

fn write_matrix_csv(path: impl AsRef<Path>, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for r in 0..rows {
        let mut line = String::new();
        for c in 0..cols {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&fmt_real(values[r * cols + c]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
