//! Probability vectors, row-stochastic matrices, and state-space partitions.
//!
//! Everything downstream (models, simulation, EM) is built on the three
//! types here. Validation is centralized: once a `ProbVector` or
//! `StochasticMatrix` exists, its entries are non-negative and each
//! distribution sums to 1 within [`PROB_SUM_TOL`], so numeric kernels can
//! skip defensive checks.
//!
//! Internally all indices are 0-based; error messages use 1-based labels to
//! match data files.

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Tolerance on `|row sum - 1|` maintained by every validated distribution.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Ingest tolerance: rows read from files may be off by this much and are
/// renormalized.
pub const INGEST_TOL: f64 = 1e-8;

/// Rows already within this distance of sum 1 are kept bit-identical instead
/// of being renormalized, so load/store cycles are stable. Must be at least
/// [`PROB_SUM_TOL`]: rows produced by normalizing machine arithmetic can sit
/// a few ulps away from an exact sum of 1, and renormalizing them again
/// would perturb stored values by one ulp on reload.
const RENORM_SKIP: f64 = PROB_SUM_TOL;

/// Smallest raw draw used by the random generators; keeps random
/// distributions strictly positive.
pub const MIN_RANDOM_ENTRY: f64 = 1e-3;

/// Defaults for power iteration in [`StochasticMatrix::stationary_distribution`].
pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 100_000;

// ---------------------------------------------------------------------------
// ProbVector
// ---------------------------------------------------------------------------

/// A probability distribution over a finite state set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    entries: Vec<f64>,
}

impl ProbVector {
    /// Validate `entries` as a distribution, renormalizing when the sum is
    /// within `tol` of 1 (and keeping it untouched when it is already within
    /// [`PROB_SUM_TOL`]). Rejects negative entries and sums outside `tol`.
    pub fn new(entries: Vec<f64>, tol: f64) -> Result<Self> {
        Self::validated_row(entries, 1, tol)
    }

    /// Like [`ProbVector::new`] but reports `row` (1-based) in errors; used
    /// by matrix validation.
    fn validated_row(mut entries: Vec<f64>, row: usize, tol: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::DimensionMismatch {
                field: "probability vector".into(),
                detail: "length 0".into(),
            });
        }
        for (j, &v) in entries.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeEntry {
                    row,
                    col: j + 1,
                    value: v,
                });
            }
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::RowSumViolation { row, sum, tol });
        }
        if (sum - 1.0).abs() > RENORM_SKIP {
            for v in &mut entries {
                *v /= sum;
            }
        }
        Ok(ProbVector { entries })
    }

    /// Uniform distribution over `n` states.
    pub fn uniform(n: usize) -> Self {
        ProbVector {
            entries: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on state `i`.
    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut entries = vec![0.0; n];
        entries[i] = 1.0;
        ProbVector { entries }
    }

    /// Wrap entries that are nonnegative and sum to 1 by construction
    /// (e.g. counts divided by their own total), skipping validation so
    /// the values pass through bit-identically.
    pub(crate) fn from_normalized(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|&v| v >= 0.0));
        debug_assert!((entries.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        ProbVector { entries }
    }

    /// Strictly positive random distribution: `n` uniform draws from
    /// `[MIN_RANDOM_ENTRY, 1)`, normalized.
    pub fn random(n: usize, rng: &mut RandomSource) -> Self {
        let raw: Vec<f64> = (0..n)
            .map(|_| MIN_RANDOM_ENTRY + (1.0 - MIN_RANDOM_ENTRY) * rng.next_f64())
            .collect();
        let sum: f64 = raw.iter().sum();
        ProbVector {
            entries: raw.into_iter().map(|v| v / sum).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Sample a state index: the first `i` whose cumulative probability
    /// exceeds one uniform draw. Consumes exactly one draw. If rounding
    /// leaves the draw above the final cumulative sum, falls back to the
    /// last state with positive probability, so zero-probability states are
    /// never produced.
    pub fn sample(&self, rng: &mut RandomSource) -> usize {
        let u = rng.next_f64();
        let mut cum = 0.0;
        for (i, &p) in self.entries.iter().enumerate() {
            cum += p;
            if u < cum {
                return i;
            }
        }
        self.entries
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("probability vector has at least one positive entry")
    }
}

// ---------------------------------------------------------------------------
// StochasticMatrix
// ---------------------------------------------------------------------------

/// A row-stochastic matrix: each row is a [`ProbVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: Vec<ProbVector>,
    cols: usize,
}

impl StochasticMatrix {
    /// Validate a full grid of entries; rows are renormalized under the same
    /// policy as [`ProbVector::new`].
    pub fn from_rows(grid: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::DimensionMismatch {
                field: "stochastic matrix".into(),
                detail: "0 rows".into(),
            });
        }
        let cols = grid[0].len();
        let mut rows = Vec::with_capacity(grid.len());
        for (i, row) in grid.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    field: "stochastic matrix".into(),
                    detail: format!("row {} has length {}, expected {}", i + 1, row.len(), cols),
                });
            }
            rows.push(ProbVector::validated_row(row, i + 1, tol)?);
        }
        Ok(StochasticMatrix { rows, cols })
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix {
            rows: (0..n).map(|i| ProbVector::point_mass(n, i)).collect(),
            cols: n,
        }
    }

    pub fn uniform(n: usize, m: usize) -> Self {
        StochasticMatrix {
            rows: (0..n).map(|_| ProbVector::uniform(m)).collect(),
            cols: m,
        }
    }

    /// Strictly positive random matrix with independent random rows.
    pub fn random(n: usize, m: usize, rng: &mut RandomSource) -> Self {
        StochasticMatrix {
            rows: (0..n).map(|_| ProbVector::random(m, rng)).collect(),
            cols: m,
        }
    }

    /// Random matrix whose support is exactly `support`: positive random
    /// entries where `support[i][j]` is true, exact zeros elsewhere. Each
    /// row of `support` must contain at least one true cell.
    pub fn random_with_support(support: &[Vec<bool>], rng: &mut RandomSource) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::DimensionMismatch {
                field: "support".into(),
                detail: "0 rows".into(),
            });
        }
        let cols = support[0].len();
        let mut rows = Vec::with_capacity(support.len());
        for (i, mask) in support.iter().enumerate() {
            if mask.len() != cols {
                return Err(Error::DimensionMismatch {
                    field: "support".into(),
                    detail: format!("row {} has length {}, expected {}", i + 1, mask.len(), cols),
                });
            }
            if !mask.iter().any(|&b| b) {
                return Err(Error::DimensionMismatch {
                    field: "support".into(),
                    detail: format!("row {} has no admissible transition", i + 1),
                });
            }
            let mut row = vec![0.0; cols];
            let mut sum = 0.0;
            for (j, &open) in mask.iter().enumerate() {
                if open {
                    let v = MIN_RANDOM_ENTRY + (1.0 - MIN_RANDOM_ENTRY) * rng.next_f64();
                    row[j] = v;
                    sum += v;
                }
            }
            for v in &mut row {
                *v /= sum;
            }
            rows.push(ProbVector {
                entries: row,
            });
        }
        Ok(StochasticMatrix { rows, cols })
    }

    /// Pair of random matrices on the same support whose rows with two or
    /// more admissible transitions all differ by at least `min_row_tv` in
    /// total variation. Used as mixture components in experiments: pages
    /// that nearly coincide make the which-page-generated-this posterior
    /// uninformative, so estimates of the mixing weight become arbitrarily
    /// noisy no matter how good the estimator is. Redraws both matrices
    /// until the separation holds (dozens of draws at most for moderate
    /// thresholds; a threshold near the maximal TV of 1 will spin forever).
    pub fn random_separated_pair(
        support: &[Vec<bool>],
        min_row_tv: f64,
        rng: &mut RandomSource,
    ) -> Result<(Self, Self)> {
        loop {
            let a = Self::random_with_support(support, rng)?;
            let b = Self::random_with_support(support, rng)?;
            let separated = support.iter().enumerate().all(|(i, mask)| {
                mask.iter().filter(|&&open| open).count() < 2
                    || tv_distance(a.row(i), b.row(i)).unwrap() >= min_row_tv
            });
            if separated {
                return Ok((a, b));
            }
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows.len() == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].get(j)
    }

    pub fn row(&self, i: usize) -> &ProbVector {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &ProbVector> {
        self.rows.iter()
    }

    /// Build from already-validated rows (internal fast path for the M-step,
    /// where rows are normalized by construction).
    pub(crate) fn from_prob_rows(rows: Vec<ProbVector>) -> Self {
        let cols = rows[0].len();
        debug_assert!(rows.iter().all(|r| r.len() == cols));
        StochasticMatrix { rows, cols }
    }

    /// Stationary distribution by power iteration from the uniform vector.
    ///
    /// Requires a square matrix with exactly one closed communicating class,
    /// so the stationary distribution is unique; otherwise returns
    /// [`Error::AmbiguousStationary`]. Periodic chains whose phase averages
    /// do not settle surface as [`Error::NotConverged`]. On success,
    /// `|psi A - psi|` is of the order of `tol`.
    pub fn stationary_distribution(&self, tol: f64, max_iter: usize) -> Result<ProbVector> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                field: "stationary distribution".into(),
                detail: format!("matrix is {}x{}, expected square", self.num_rows(), self.cols),
            });
        }
        let classes = self.count_closed_classes();
        if classes != 1 {
            return Err(Error::AmbiguousStationary {
                closed_classes: classes,
            });
        }
        let n = self.num_rows();
        let mut psi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..max_iter {
            for v in next.iter_mut() {
                *v = 0.0;
            }
            for i in 0..n {
                let w = psi[i];
                if w == 0.0 {
                    continue;
                }
                let row = self.rows[i].entries();
                for j in 0..n {
                    next[j] += w * row[j];
                }
            }
            // Renormalize to stop rounding drift from accumulating over
            // long iterations.
            let sum: f64 = next.iter().sum();
            for v in next.iter_mut() {
                *v /= sum;
            }
            let diff: f64 = psi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut psi, &mut next);
            if diff < tol {
                return ProbVector::new(psi, 1e-9);
            }
        }
        Err(Error::NotConverged { max_iter })
    }

    /// Stationary distribution with the crate-default tolerance and budget.
    pub fn stationary(&self) -> Result<ProbVector> {
        self.stationary_distribution(STATIONARY_TOL, STATIONARY_MAX_ITER)
    }

    /// Number of closed communicating classes of the directed graph induced
    /// by positive entries. The stationary distribution is unique iff this
    /// is 1.
    fn count_closed_classes(&self) -> usize {
        let n = self.num_rows();
        // Transitive closure over the positive-entry graph.
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            reach[i][i] = true;
            for j in 0..n {
                if self.get(i, j) > 0.0 {
                    reach[i][j] = true;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        // A state is in a closed class iff everything it reaches reaches it
        // back. Count classes by their minimal member.
        let mut classes = 0;
        for i in 0..n {
            let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
            if closed {
                let minimal = (0..i).all(|j| !(reach[i][j] && reach[j][i]));
                if minimal {
                    classes += 1;
                }
            }
        }
        classes
    }
}

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Total variation distance between two distributions on the same state set:
/// half the L1 distance. Always in `[0, 1]`.
pub fn tv_distance(f: &ProbVector, g: &ProbVector) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    let l1: f64 = f
        .entries()
        .iter()
        .zip(g.entries())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * l1)
}

/// Total variation distance between the stationary distributions of two
/// transition matrices. Errors from either stationary computation
/// (ambiguity, non-convergence) propagate.
pub fn stationary_tv_distance(est: &StochasticMatrix, truth: &StochasticMatrix) -> Result<f64> {
    check_same_square(est, truth)?;
    let psi_est = est.stationary()?;
    let psi_true = truth.stationary()?;
    tv_distance(&psi_est, &psi_true)
}

/// Row-wise total variation distance between two transition matrices,
/// weighted by the stationary distribution of `truth`: rows that the true
/// chain rarely occupies contribute proportionally little.
pub fn expected_row_tv_distance(est: &StochasticMatrix, truth: &StochasticMatrix) -> Result<f64> {
    check_same_square(est, truth)?;
    let psi_true = truth.stationary()?;
    weighted_row_tv_distance(est, truth, &psi_true)
}

/// Row-wise total variation distance under an explicit row-weight
/// distribution; the uniform-weight fallback used when `truth` has no
/// computable stationary distribution.
pub fn weighted_row_tv_distance(
    est: &StochasticMatrix,
    truth: &StochasticMatrix,
    weights: &ProbVector,
) -> Result<f64> {
    check_same_square(est, truth)?;
    if weights.len() != truth.num_rows() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: truth.num_rows(),
        });
    }
    let mut total = 0.0;
    for i in 0..truth.num_rows() {
        let w = weights.get(i);
        if w == 0.0 {
            continue;
        }
        total += w * tv_distance(est.row(i), truth.row(i))?;
    }
    Ok(total)
}

fn check_same_square(a: &StochasticMatrix, b: &StochasticMatrix) -> Result<()> {
    if !a.is_square() || !b.is_square() || a.num_rows() != b.num_rows() {
        return Err(Error::DimensionMismatch {
            field: "matrix distance".into(),
            detail: format!(
                "matrices are {}x{} and {}x{}, expected equal square shapes",
                a.num_rows(),
                a.num_cols(),
                b.num_rows(),
                b.num_cols()
            ),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

/// An ordered partition of the state set `{0, .., n-1}` into non-empty
/// blocks. Block order is significant: block `l` selects transition page `l`
/// of whatever chain the partition modulates.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl Partition {
    /// Build from explicit blocks over `n` states. Blocks must be non-empty,
    /// disjoint, and jointly cover `{0, .., n-1}`; states within a block are
    /// stored sorted.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        let mut membership = vec![usize::MAX; n];
        let mut sorted_blocks = Vec::with_capacity(blocks.len());
        for (l, mut block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {} is empty", l + 1)));
            }
            block.sort_unstable();
            for &s in &block {
                if s >= n {
                    return Err(Error::InvalidPartition(format!(
                        "state {} out of range 1..={}",
                        s + 1,
                        n
                    )));
                }
                if membership[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "state {} appears in more than one block",
                        s + 1
                    )));
                }
                membership[s] = l;
            }
            sorted_blocks.push(block);
        }
        if let Some(s) = membership.iter().position(|&m| m == usize::MAX) {
            return Err(Error::InvalidPartition(format!(
                "state {} is not covered by any block",
                s + 1
            )));
        }
        Ok(Partition {
            blocks: sorted_blocks,
            membership,
        })
    }

    /// The trivial partition `{{0, .., n-1}}`; with one block the modulated
    /// chain ignores the state of the other chain entirely.
    pub fn single_block(n: usize) -> Self {
        Partition {
            blocks: vec![(0..n).collect()],
            membership: vec![0; n],
        }
    }

    /// Random partition of `{0, .., n-1}` into exactly `p` non-empty blocks:
    /// uniform block assignment, redrawn until every block is hit.
    pub fn random(n: usize, p: usize, rng: &mut RandomSource) -> Result<Self> {
        if p == 0 || p > n {
            return Err(Error::InvalidPartition(format!(
                "cannot split {} states into {} non-empty blocks",
                n, p
            )));
        }
        loop {
            let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); p];
            for s in 0..n {
                let l = ((rng.next_f64() * p as f64) as usize).min(p - 1);
                blocks[l].push(s);
            }
            if blocks.iter().all(|b| !b.is_empty()) {
                return Partition::from_blocks(n, blocks);
            }
        }
    }

    /// Number of states partitioned.
    pub fn num_elements(&self) -> usize {
        self.membership.len()
    }

    /// Number of blocks (the partition's order).
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Index of the block containing state `s`.
    pub fn block_of(&self, s: usize) -> usize {
        self.membership[s]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
