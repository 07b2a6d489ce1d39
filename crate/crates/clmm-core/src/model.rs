//! The closed-loop Markov-modulated Markov chain model.
//!
//! A model couples two finite chains. The visible chain has one transition
//! page per latent state; at each step the current latent state picks the
//! page the visible chain moves by. The latent chain in turn has one
//! transition page per block of a partition of the visible states, and the
//! block containing the current visible state picks the page the latent
//! chain moves by. With a single-block partition the feedback disappears
//! and the model degenerates to an ordinary Markov-modulated chain.
//!
//! The joint process `(latent, visible)` is itself Markov on the product
//! space, which yields an exact reformulation as a hidden Markov model
//! ([`ClMmmc::lift_to_hmm`]) whose emissions deterministically reveal the
//! visible component. The lift is the model-count baseline and a likelihood
//! cross-check; it is never used for estimation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::stochastic::{Partition, ProbVector, StochasticMatrix, INGEST_TOL};

/// Upper bound on the latent state count for exhaustive label alignment.
pub const MAX_LATENT_FOR_ALIGNMENT: usize = 8;

// ---------------------------------------------------------------------------
// ClMmmc
// ---------------------------------------------------------------------------

/// A validated closed-loop Markov-modulated Markov chain.
///
/// Dimensions: `R` visible states, `S` latent states, `p` partition blocks.
/// The model stores `S` visible pages of shape `R x R`, `p` latent pages of
/// shape `S x S`, the two initial distributions, and the partition of the
/// visible state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClMmmc {
    pi_visible: ProbVector,
    pi_latent: ProbVector,
    visible_pages: Vec<StochasticMatrix>,
    latent_pages: Vec<StochasticMatrix>,
    partition: Partition,
}

impl ClMmmc {
    /// Assemble and validate a model. Every dimension is cross-checked and
    /// errors name the offending piece.
    pub fn new(
        pi_visible: ProbVector,
        pi_latent: ProbVector,
        visible_pages: Vec<StochasticMatrix>,
        latent_pages: Vec<StochasticMatrix>,
        partition: Partition,
    ) -> Result<Self> {
        let r = pi_visible.len();
        let s = pi_latent.len();
        if visible_pages.len() != s {
            return Err(Error::DimensionMismatch {
                field: "visible_pages".into(),
                detail: format!("{} pages, expected one per latent state ({})", visible_pages.len(), s),
            });
        }
        for (i, page) in visible_pages.iter().enumerate() {
            if !page.is_square() || page.num_rows() != r {
                return Err(Error::DimensionMismatch {
                    field: format!("visible page {}", i + 1),
                    detail: format!("{}x{}, expected {r}x{r}", page.num_rows(), page.num_cols()),
                });
            }
        }
        if partition.num_elements() != r {
            return Err(Error::DimensionMismatch {
                field: "partition".into(),
                detail: format!("partitions {} states, expected {r}", partition.num_elements()),
            });
        }
        let p = partition.num_blocks();
        if latent_pages.len() != p {
            return Err(Error::DimensionMismatch {
                field: "latent_pages".into(),
                detail: format!("{} pages, expected one per partition block ({p})", latent_pages.len()),
            });
        }
        for (l, page) in latent_pages.iter().enumerate() {
            if !page.is_square() || page.num_rows() != s {
                return Err(Error::DimensionMismatch {
                    field: format!("latent page {}", l + 1),
                    detail: format!("{}x{}, expected {s}x{s}", page.num_rows(), page.num_cols()),
                });
            }
        }
        Ok(ClMmmc {
            pi_visible,
            pi_latent,
            visible_pages,
            latent_pages,
            partition,
        })
    }

    /// Fully random, strictly positive model with the given dimensions and
    /// partition. Used for synthetic truths and EM starting points.
    pub fn random(
        num_visible: usize,
        num_latent: usize,
        partition: Partition,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        let pi_visible = ProbVector::random(num_visible, rng);
        let pi_latent = ProbVector::random(num_latent, rng);
        let visible_pages = (0..num_latent)
            .map(|_| StochasticMatrix::random(num_visible, num_visible, rng))
            .collect();
        let latent_pages = (0..partition.num_blocks())
            .map(|_| StochasticMatrix::random(num_latent, num_latent, rng))
            .collect();
        ClMmmc::new(pi_visible, pi_latent, visible_pages, latent_pages, partition)
    }

    pub fn num_visible(&self) -> usize {
        self.pi_visible.len()
    }

    pub fn num_latent(&self) -> usize {
        self.pi_latent.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn pi_visible(&self) -> &ProbVector {
        &self.pi_visible
    }

    pub fn pi_latent(&self) -> &ProbVector {
        &self.pi_latent
    }

    /// Transition page the visible chain follows while the latent chain is
    /// in state `latent`.
    pub fn visible_page(&self, latent: usize) -> &StochasticMatrix {
        &self.visible_pages[latent]
    }

    /// Transition page the latent chain follows for partition block `block`.
    pub fn latent_page(&self, block: usize) -> &StochasticMatrix {
        &self.latent_pages[block]
    }

    /// Latent page selected when the visible chain sits in state `visible`.
    pub fn latent_page_for(&self, visible: usize) -> &StochasticMatrix {
        &self.latent_pages[self.partition.block_of(visible)]
    }

    pub fn visible_pages(&self) -> &[StochasticMatrix] {
        &self.visible_pages
    }

    pub fn latent_pages(&self) -> &[StochasticMatrix] {
        &self.latent_pages
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// One-step probability of the joint move
    /// `(latent_from, visible_from) -> (latent_to, visible_to)`: the visible
    /// factor uses the page of `latent_from`, the latent factor uses the
    /// page of the block containing `visible_from`.
    pub fn joint_transition_prob(
        &self,
        latent_from: usize,
        visible_from: usize,
        latent_to: usize,
        visible_to: usize,
    ) -> Result<f64> {
        let (r, s) = (self.num_visible(), self.num_latent());
        for (name, value, bound) in [
            ("latent_from", latent_from, s),
            ("latent_to", latent_to, s),
            ("visible_from", visible_from, r),
            ("visible_to", visible_to, r),
        ] {
            if value >= bound {
                return Err(Error::IndexOutOfRange {
                    what: format!("{name} = {} with {bound} states", value + 1),
                });
            }
        }
        let visible_factor = self.visible_pages[latent_from].get(visible_from, visible_to);
        let latent_factor = self.latent_page_for(visible_from).get(latent_from, latent_to);
        Ok(visible_factor * latent_factor)
    }

    /// Free-parameter counts `(this model, equivalent lifted HMM)`.
    ///
    /// Each latent page row carries `S - 1` free entries and there are
    /// `p * S` such rows minus one row's worth absorbed by the latent
    /// initial distribution; symmetrically for the visible side. The lifted
    /// HMM on `R * S` product states pays for a full transition matrix, its
    /// initial distribution, and nothing for the deterministic emissions.
    pub fn parameter_count(&self) -> (usize, usize) {
        let r = self.num_visible();
        let s = self.num_latent();
        let p = self.num_blocks();
        let own = (p * s - 1) * (s - 1) + (s * r - 1) * (r - 1);
        let n = r * s;
        let lifted = n * n - n + (n - 1);
        (own, lifted)
    }

    /// Relabel the latent states: state `i` of the returned model is state
    /// `perm[i]` of this one. Permutes the latent initial distribution, the
    /// visible page order, and both axes of every latent page. The law of
    /// the visible chain is unchanged.
    pub fn permute_latent(&self, perm: &[usize]) -> Result<ClMmmc> {
        let s = self.num_latent();
        if perm.len() != s {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: s,
            });
        }
        let mut seen = vec![false; s];
        for &q in perm {
            if q >= s || seen[q] {
                return Err(Error::InvalidConfig(format!(
                    "not a permutation of 1..={s}: {:?}",
                    perm.iter().map(|v| v + 1).collect::<Vec<_>>()
                )));
            }
            seen[q] = true;
        }
        let pi_latent = ProbVector::new(
            perm.iter().map(|&q| self.pi_latent.get(q)).collect(),
            1e-9,
        )?;
        let visible_pages = perm.iter().map(|&q| self.visible_pages[q].clone()).collect();
        let latent_pages = self
            .latent_pages
            .iter()
            .map(|page| {
                let grid = perm
                    .iter()
                    .map(|&qi| perm.iter().map(|&qj| page.get(qi, qj)).collect())
                    .collect();
                StochasticMatrix::from_rows(grid, 1e-9)
            })
            .collect::<Result<Vec<_>>>()?;
        ClMmmc::new(
            self.pi_visible.clone(),
            pi_latent,
            visible_pages,
            latent_pages,
            self.partition.clone(),
        )
    }

    /// Exact reformulation as a hidden Markov model on the product state
    /// space. Product state `q` encodes `(latent, visible)` via
    /// [`flat_state_index`]; the emission of `q` is its visible component
    /// with probability one.
    pub fn lift_to_hmm(&self) -> HmmLift {
        let r = self.num_visible();
        let s = self.num_latent();
        let n = r * s;
        let mut initial = Vec::with_capacity(n);
        let mut transition = Vec::with_capacity(n);
        let mut emission = Vec::with_capacity(n);
        for q in 0..n {
            let (i, m) = split_state_index(q, r);
            initial.push(self.pi_latent.get(i) * self.pi_visible.get(m));
            let latent_page = self.latent_page_for(m);
            let visible_row = self.visible_pages[i].row(m);
            let mut w_row = vec![0.0; n];
            for (qp, w) in w_row.iter_mut().enumerate() {
                let (j, np) = split_state_index(qp, r);
                *w = latent_page.get(i, j) * visible_row.get(np);
            }
            transition.push(w_row);
            let mut b_row = vec![0.0; r];
            b_row[m] = 1.0;
            emission.push(b_row);
        }
        HmmLift {
            initial: ProbVector::new(initial, 1e-9).expect("product of distributions sums to 1"),
            transition: StochasticMatrix::from_rows(transition, 1e-9)
                .expect("lifted rows are products of stochastic rows"),
            emission: StochasticMatrix::from_rows(emission, INGEST_TOL)
                .expect("one-hot emission rows"),
        }
    }
}

/// Index of the product state `(latent, visible)` in the lifted HMM:
/// `latent * num_visible + visible`.
pub fn flat_state_index(latent: usize, visible: usize, num_visible: usize) -> usize {
    latent * num_visible + visible
}

/// Inverse of [`flat_state_index`]: recover `(latent, visible)` from a
/// product state index.
pub fn split_state_index(q: usize, num_visible: usize) -> (usize, usize) {
    (q / num_visible, q % num_visible)
}

// ---------------------------------------------------------------------------
// FreezeMask
// ---------------------------------------------------------------------------

/// Which parts of a model EM must copy through unchanged: individual
/// visible pages, individual latent pages, and/or the latent initial
/// distribution. The visible initial distribution is always determined by
/// the data and cannot be frozen.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreezeMask {
    pub visible_pages: BTreeSet<usize>,
    pub latent_pages: BTreeSet<usize>,
    pub pi_latent: bool,
}

impl FreezeMask {
    /// Freeze nothing.
    pub fn none() -> Self {
        FreezeMask::default()
    }

    pub fn is_empty(&self) -> bool {
        !self.pi_latent && self.visible_pages.is_empty() && self.latent_pages.is_empty()
    }

    /// Check all page indices exist in `model`.
    pub fn validate_for(&self, model: &ClMmmc) -> Result<()> {
        if let Some(&i) = self.visible_pages.iter().find(|&&i| i >= model.num_latent()) {
            return Err(Error::IndexOutOfRange {
                what: format!(
                    "frozen visible page {} with {} pages",
                    i + 1,
                    model.num_latent()
                ),
            });
        }
        if let Some(&l) = self.latent_pages.iter().find(|&&l| l >= model.num_blocks()) {
            return Err(Error::IndexOutOfRange {
                what: format!(
                    "frozen latent page {} with {} pages",
                    l + 1,
                    model.num_blocks()
                ),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// HmmLift
// ---------------------------------------------------------------------------

/// Ordinary hidden Markov model produced by [`ClMmmc::lift_to_hmm`]:
/// initial distribution and transition matrix on the product states, plus a
/// deterministic emission matrix onto the visible states.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmLift {
    pub initial: ProbVector,
    pub transition: StochasticMatrix,
    pub emission: StochasticMatrix,
}

impl HmmLift {
    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.emission.num_cols()
    }

    /// Log-likelihood of an observation sequence under the lifted HMM by
    /// the textbook scaled forward pass. Returns `-inf` for an impossible
    /// sequence. This recursion runs on the product space and knows nothing
    /// about the two-chain structure, which is what makes it an independent
    /// cross-check of the structured recursions.
    pub fn log_likelihood(&self, observations: &[usize]) -> f64 {
        let n = self.num_states();
        if observations.is_empty() {
            return 0.0;
        }
        for &o in observations {
            if o >= self.num_symbols() {
                return f64::NEG_INFINITY;
            }
        }
        let mut alpha: Vec<f64> = (0..n)
            .map(|q| self.initial.get(q) * self.emission.get(q, observations[0]))
            .collect();
        let mut log_lik = 0.0;
        let norm: f64 = alpha.iter().sum();
        if norm == 0.0 {
            return f64::NEG_INFINITY;
        }
        for a in alpha.iter_mut() {
            *a /= norm;
        }
        log_lik += norm.ln();
        for &obs in &observations[1..] {
            let mut next = vec![0.0; n];
            for q in 0..n {
                let a = alpha[q];
                if a == 0.0 {
                    continue;
                }
                let row = self.transition.row(q).entries();
                for (qp, x) in next.iter_mut().enumerate() {
                    *x += a * row[qp];
                }
            }
            for (qp, x) in next.iter_mut().enumerate() {
                *x *= self.emission.get(qp, obs);
            }
            let norm: f64 = next.iter().sum();
            if norm == 0.0 {
                return f64::NEG_INFINITY;
            }
            for x in next.iter_mut() {
                *x /= norm;
            }
            log_lik += norm.ln();
            alpha = next;
        }
        log_lik
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::PROB_SUM_TOL;

    fn two_state_model() -> ClMmmc {
        // R = 2, S = 2, p = 2 with gamma = {{0}, {1}}.
        let pi_visible = ProbVector::new(vec![0.6, 0.4], PROB_SUM_TOL).unwrap();
        let pi_latent = ProbVector::new(vec![0.3, 0.7], PROB_SUM_TOL).unwrap();
        let visible_pages = vec![
            StochasticMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]], INGEST_TOL).unwrap(),
            StochasticMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.7, 0.3]], INGEST_TOL).unwrap(),
        ];
        let latent_pages = vec![
            StochasticMatrix::from_rows(vec![vec![0.8, 0.2], vec![0.4, 0.6]], INGEST_TOL).unwrap(),
            StochasticMatrix::from_rows(vec![vec![0.1, 0.9], vec![0.6, 0.4]], INGEST_TOL).unwrap(),
        ];
        let partition = Partition::from_blocks(2, vec![vec![0], vec![1]]).unwrap();
        ClMmmc::new(pi_visible, pi_latent, visible_pages, latent_pages, partition).unwrap()
    }

    #[test]
    fn wrong_page_count_is_rejected() {
        let m = two_state_model();
        let err = ClMmmc::new(
            m.pi_visible().clone(),
            m.pi_latent().clone(),
            vec![m.visible_page(0).clone()], // one page for two latent states
            m.latent_pages().to_vec(),
            m.partition().clone(),
        )
        .unwrap_err();
        match err {
            Error::DimensionMismatch { field, .. } => assert_eq!(field, "visible_pages"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_page_shape_is_rejected() {
        let m = two_state_model();
        let err = ClMmmc::new(
            m.pi_visible().clone(),
            m.pi_latent().clone(),
            m.visible_pages().to_vec(),
            vec![
                m.latent_page(0).clone(),
                StochasticMatrix::identity(3), // 3x3 latent page for S = 2
            ],
            m.partition().clone(),
        )
        .unwrap_err();
        match err {
            Error::DimensionMismatch { field, .. } => assert_eq!(field, "latent page 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn joint_transition_prob_multiplies_the_right_entries() {
        let m = two_state_model();
        // From (latent 0, visible 0) to (latent 1, visible 1): visible page 0
        // entry (0,1) = 0.1 times latent page of block(0) = page 0 entry
        // (0,1) = 0.2.
        let p = m.joint_transition_prob(0, 0, 1, 1).unwrap();
        assert!((p - 0.1 * 0.2).abs() < 1e-15);
        // Out-of-range latent index.
        assert!(m.joint_transition_prob(2, 0, 0, 0).is_err());
    }

    #[test]
    fn joint_transition_rows_sum_to_one() {
        let m = two_state_model();
        for latent_from in 0..2 {
            for visible_from in 0..2 {
                let mut total = 0.0;
                for latent_to in 0..2 {
                    for visible_to in 0..2 {
                        total += m
                            .joint_transition_prob(latent_from, visible_from, latent_to, visible_to)
                            .unwrap();
                    }
                }
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_count_known_cases() {
        let mut rng = RandomSource::new(1);
        // R = 8, S = 2, single block: (2-1)(2-1) + (16-1)(8-1) = 106.
        let m = ClMmmc::random(8, 2, Partition::single_block(8), &mut rng).unwrap();
        assert_eq!(m.parameter_count().0, 106);

        // R = 1, S = 1: zero free parameters on both sides.
        let m = ClMmmc::random(1, 1, Partition::single_block(1), &mut rng).unwrap();
        assert_eq!(m.parameter_count(), (0, 0));

        // R = 6, S = 2, p = 2: 3 + 55 = 58 own vs 143 lifted.
        let partition = Partition::from_blocks(6, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let m = ClMmmc::random(6, 2, partition, &mut rng).unwrap();
        assert_eq!(m.parameter_count(), (58, 143));
    }

    #[test]
    fn parameter_count_is_never_larger_than_lifted() {
        let mut rng = RandomSource::new(5);
        for (r, s, p) in [(2, 2, 1), (3, 2, 2), (4, 3, 2), (5, 2, 3), (6, 4, 1)] {
            let partition = Partition::random(r, p, &mut rng).unwrap();
            let m = ClMmmc::random(r, s, partition, &mut rng).unwrap();
            let (own, lifted) = m.parameter_count();
            assert!(own <= lifted, "({r},{s},{p}): {own} > {lifted}");
        }
    }

    #[test]
    fn flat_index_round_trips() {
        let r = 3;
        for latent in 0..4 {
            for visible in 0..r {
                let q = flat_state_index(latent, visible, r);
                assert_eq!(split_state_index(q, r), (latent, visible));
            }
        }
        // Spot value: with R = 3, (latent 1, visible 2) sits at q = 5.
        assert_eq!(flat_state_index(1, 2, 3), 5);
    }

    #[test]
    fn lift_dimensions_and_stochasticity() {
        let m = two_state_model();
        let lift = m.lift_to_hmm();
        assert_eq!(lift.num_states(), 4);
        assert_eq!(lift.num_symbols(), 2);
        let total: f64 = lift.initial.entries().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for q in 0..4 {
            let row_sum: f64 = lift.transition.row(q).entries().iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            // Emissions are one-hot on the visible component.
            let (_, visible) = split_state_index(q, 2);
            assert_eq!(lift.emission.get(q, visible), 1.0);
        }
    }

    #[test]
    fn lift_entries_match_joint_transitions() {
        let m = two_state_model();
        let lift = m.lift_to_hmm();
        for q in 0..4 {
            let (i, mm) = split_state_index(q, 2);
            for qp in 0..4 {
                let (j, np) = split_state_index(qp, 2);
                let expected = m.joint_transition_prob(i, mm, j, np).unwrap();
                assert!((lift.transition.get(q, qp) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lift_of_single_latent_state_is_the_visible_page() {
        let mut rng = RandomSource::new(9);
        let m = ClMmmc::random(4, 1, Partition::single_block(4), &mut rng).unwrap();
        let lift = m.lift_to_hmm();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(
                    lift.transition.get(i, j).to_bits(),
                    m.visible_page(0).get(i, j).to_bits()
                );
            }
        }
    }

    #[test]
    fn permute_latent_round_trips_and_validates() {
        let m = two_state_model();
        let swapped = m.permute_latent(&[1, 0]).unwrap();
        assert_eq!(swapped.pi_latent().get(0), m.pi_latent().get(1));
        assert_eq!(swapped.visible_page(0), m.visible_page(1));
        assert_eq!(
            swapped.latent_page(0).get(0, 1),
            m.latent_page(0).get(1, 0)
        );
        let back = swapped.permute_latent(&[1, 0]).unwrap();
        assert_eq!(back, m);
        // Identity permutation is a no-op.
        assert_eq!(m.permute_latent(&[0, 1]).unwrap(), m);
        assert!(m.permute_latent(&[0, 0]).is_err());
        assert!(m.permute_latent(&[0]).is_err());
    }

    #[test]
    fn freeze_mask_validation() {
        let m = two_state_model();
        let mut mask = FreezeMask::none();
        assert!(mask.is_empty());
        mask.visible_pages.insert(1);
        mask.latent_pages.insert(0);
        mask.pi_latent = true;
        assert!(mask.validate_for(&m).is_ok());
        mask.visible_pages.insert(2);
        assert!(mask.validate_for(&m).is_err());
    }

    #[test]
    fn lifted_likelihood_of_impossible_sequence_is_neg_infinity() {
        let mut rng = RandomSource::new(21);
        // Deterministic cycle 0 -> 1 -> 0 as the single visible page.
        let cycle =
            StochasticMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]], INGEST_TOL).unwrap();
        let m = ClMmmc::new(
            ProbVector::point_mass(2, 0),
            ProbVector::random(1, &mut rng),
            vec![cycle],
            vec![StochasticMatrix::identity(1)],
            Partition::single_block(2),
        )
        .unwrap();
        let lift = m.lift_to_hmm();
        assert_eq!(lift.log_likelihood(&[0, 1, 0]), 0.0); // probability 1
        assert_eq!(lift.log_likelihood(&[0, 0]), f64::NEG_INFINITY);
        assert_eq!(lift.log_likelihood(&[1, 0, 1]), f64::NEG_INFINITY); // wrong start
    }
}
