//! Comparing an estimated model against ground truth.
//!
//! Latent labels carry no meaning — relabeling the latent states of a
//! model leaves the law of the visible chain unchanged — so comparison
//! starts by searching for the relabeling of the estimate that best lines
//! its visible pages up with the truth. Distances are then reported per
//! page in two flavors: total variation between stationary distributions
//! (coarse; blind to dynamics with matching equilibria), and the
//! expectation under the true page's stationary distribution of the
//! row-wise total variation (finer; weights each row by how often the true
//! chain actually sits in that row's state).

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::estimate::log_likelihood;
use crate::model::{ClMmmc, MAX_LATENT_FOR_ALIGNMENT};
use crate::simulate::Trajectory;
use crate::stochastic::{tv_distance, weighted_row_tv_distance, ProbVector, StochasticMatrix};

/// Distances for one page of the estimate against the same page of the
/// truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PageDistances {
    /// Total variation between the two stationary distributions; `None`
    /// when either page has no unique one (reducible or periodic pages).
    pub stationary_tv: Option<f64>,
    /// Stationary-weighted row-wise total variation. Falls back to uniform
    /// row weights when the true page has no stationary distribution.
    pub expected_row_tv: f64,
    /// True when `expected_row_tv` used the uniform fallback.
    pub uniform_weights: bool,
}

/// How to read a recommender-engagement probability out of the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrMode {
    /// A component of the stationary distribution of one latent page
    /// (the reading for a long concatenated trajectory, where reaching the
    /// switching states over and over drives the latent chain to its
    /// equilibrium).
    StationaryOfPage { page: usize, latent_state: usize },
    /// A component of the latent initial distribution (the reading for
    /// per-trip data, where each trip makes the engagement draw at time
    /// zero).
    InitialDistribution { latent_state: usize },
}

/// Full comparison report. Page indices refer to the aligned estimate,
/// i.e. they match the truth's labels.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Latent relabeling applied to the estimate: aligned state `i` was
    /// estimate state `permutation[i]`.
    pub permutation: Vec<usize>,
    pub visible_pages: Vec<PageDistances>,
    pub latent_pages: Vec<PageDistances>,
    pub loglik_est: f64,
    pub loglik_true: f64,
    /// `loglik_est - loglik_true` on the holdout data. Positive values
    /// mean the estimate explains the data better than the generator.
    pub loglik_gap: f64,
    pub p_r_estimate: Option<f64>,
}

fn check_comparable(est: &ClMmmc, truth: &ClMmmc) -> Result<()> {
    if est.num_visible() != truth.num_visible() {
        return Err(Error::DimensionMismatch {
            field: "visible states".into(),
            detail: format!("{} vs {}", est.num_visible(), truth.num_visible()),
        });
    }
    if est.num_latent() != truth.num_latent() {
        return Err(Error::DimensionMismatch {
            field: "latent states".into(),
            detail: format!("{} vs {}", est.num_latent(), truth.num_latent()),
        });
    }
    if est.partition() != truth.partition() {
        return Err(Error::DimensionMismatch {
            field: "partition".into(),
            detail: "models partition the visible states differently".into(),
        });
    }
    Ok(())
}

/// Stationary distribution, or `None` when the page has no unique one.
/// Structural failures still propagate.
fn stationary_or_none(page: &StochasticMatrix) -> Result<Option<ProbVector>> {
    match page.stationary() {
        Ok(psi) => Ok(Some(psi)),
        Err(Error::AmbiguousStationary { .. }) | Err(Error::NotConverged { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Both distances for a single pair of pages, degrading gracefully when a
/// stationary distribution does not exist.
pub fn page_distances(est: &StochasticMatrix, truth: &StochasticMatrix) -> Result<PageDistances> {
    let psi_true = stationary_or_none(truth)?;
    let (expected_row_tv, uniform_weights) = match &psi_true {
        Some(psi) => (weighted_row_tv_distance(est, truth, psi)?, false),
        None => {
            let uniform = ProbVector::uniform(truth.num_rows());
            (weighted_row_tv_distance(est, truth, &uniform)?, true)
        }
    };
    let stationary_tv = match &psi_true {
        Some(psi) => stationary_or_none(est)?
            .map(|psi_est| tv_distance(&psi_est, psi))
            .transpose()?,
        None => None,
    };
    Ok(PageDistances {
        stationary_tv,
        expected_row_tv,
        uniform_weights,
    })
}

/// Find the latent relabeling of `est` that minimizes the total
/// row-weighted visible-page distance to `truth`, and return it together
/// with the relabeled estimate. Exhaustive over all permutations, first
/// minimum in lexicographic order wins.
pub fn align_latent_labels(est: &ClMmmc, truth: &ClMmmc) -> Result<(Vec<usize>, ClMmmc)> {
    check_comparable(est, truth)?;
    let s = est.num_latent();
    if s > MAX_LATENT_FOR_ALIGNMENT {
        return Err(Error::TooManyLatentStates {
            num_latent: s,
            limit: MAX_LATENT_FOR_ALIGNMENT,
        });
    }

    // Pairwise page distances, with truth stationaries computed once.
    let mut cost = vec![vec![0.0; s]; s];
    for b in 0..s {
        let weights = match stationary_or_none(truth.visible_page(b))? {
            Some(psi) => psi,
            None => ProbVector::uniform(truth.num_visible()),
        };
        for a in 0..s {
            cost[a][b] =
                weighted_row_tv_distance(est.visible_page(a), truth.visible_page(b), &weights)?;
        }
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..s).permutations(s) {
        let total: f64 = perm.iter().enumerate().map(|(b, &a)| cost[a][b]).sum();
        if best.as_ref().is_none_or(|(_, c)| total < *c) {
            best = Some((perm, total));
        }
    }
    let (perm, _) = best.unwrap();
    let aligned = est.permute_latent(&perm)?;
    Ok((perm, aligned))
}

/// Align the estimate to the truth, score both on the holdout data, and
/// report per-page distances plus, if requested, the engagement estimate.
pub fn evaluate_estimate(
    est: &ClMmmc,
    truth: &ClMmmc,
    holdout: &[Trajectory],
    pr_mode: Option<PrMode>,
) -> Result<EvalReport> {
    let (permutation, aligned) = align_latent_labels(est, truth)?;

    let mut visible_pages = Vec::with_capacity(aligned.num_latent());
    for i in 0..aligned.num_latent() {
        visible_pages.push(page_distances(
            aligned.visible_page(i),
            truth.visible_page(i),
        )?);
    }
    let mut latent_pages = Vec::with_capacity(aligned.num_blocks());
    for l in 0..aligned.num_blocks() {
        latent_pages.push(page_distances(aligned.latent_page(l), truth.latent_page(l))?);
    }

    let loglik_est = log_likelihood(&aligned, holdout)?;
    let loglik_true = log_likelihood(truth, holdout)?;

    let p_r_estimate = match pr_mode {
        None => None,
        Some(PrMode::StationaryOfPage { page, latent_state }) => {
            if page >= aligned.num_blocks() {
                return Err(Error::IndexOutOfRange {
                    what: format!("latent page {} of {}", page + 1, aligned.num_blocks()),
                });
            }
            if latent_state >= aligned.num_latent() {
                return Err(Error::IndexOutOfRange {
                    what: format!("latent state {} of {}", latent_state + 1, aligned.num_latent()),
                });
            }
            // A missing stationary distribution is an error here, not a
            // soft marker: the caller asked for this exact number.
            Some(aligned.latent_page(page).stationary()?.get(latent_state))
        }
        Some(PrMode::InitialDistribution { latent_state }) => {
            if latent_state >= aligned.num_latent() {
                return Err(Error::IndexOutOfRange {
                    what: format!("latent state {} of {}", latent_state + 1, aligned.num_latent()),
                });
            }
            Some(aligned.pi_latent().get(latent_state))
        }
    };

    Ok(EvalReport {
        permutation,
        visible_pages,
        latent_pages,
        loglik_est,
        loglik_true,
        loglik_gap: loglik_est - loglik_true,
        p_r_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use crate::simulate::sample_trajectory;
    use crate::stochastic::{expected_row_tv_distance, Partition, INGEST_TOL};

    fn random_model(r: usize, s: usize, p: usize, seed: u64) -> ClMmmc {
        let mut rng = RandomSource::new(seed);
        let partition = Partition::random(r, p, &mut rng).unwrap();
        ClMmmc::random(r, s, partition, &mut rng).unwrap()
    }

    #[test]
    fn aligning_a_model_with_itself_is_the_identity() {
        let model = random_model(4, 3, 2, 1);
        let (perm, aligned) = align_latent_labels(&model, &model).unwrap();
        assert_eq!(perm, vec![0, 1, 2]);
        for i in 0..3 {
            assert_eq!(aligned.visible_page(i), model.visible_page(i));
        }
    }

    #[test]
    fn alignment_undoes_a_label_swap() {
        let truth = random_model(4, 2, 2, 2);
        let est = truth.permute_latent(&[1, 0]).unwrap();
        let (perm, aligned) = align_latent_labels(&est, &truth).unwrap();
        assert_eq!(perm, vec![1, 0]);
        for i in 0..2 {
            let page_est = aligned.visible_page(i);
            let page_true = truth.visible_page(i);
            assert_eq!(page_est, page_true);
        }
        // The relabeled latent pages match too, up to rounding in the
        // permutation plumbing.
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let a = aligned.latent_page(l).get(i, j);
                    let b = truth.latent_page(l).get(i, j);
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn alignment_matches_an_independent_exhaustive_search() {
        // Re-derive the answer with literal permutation lists and the
        // public distance function.
        let all_perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for seed in 10..20 {
            let truth = random_model(3, 3, 1, seed);
            let est = random_model(3, 3, 1, seed + 100);
            let mut expected: Option<(Vec<usize>, f64)> = None;
            for perm in all_perms {
                let candidate = est.permute_latent(&perm).unwrap();
                let total: f64 = (0..3)
                    .map(|i| {
                        expected_row_tv_distance(
                            candidate.visible_page(i),
                            truth.visible_page(i),
                        )
                        .unwrap()
                    })
                    .sum();
                if expected.as_ref().is_none_or(|(_, c)| total < *c) {
                    expected = Some((perm.to_vec(), total));
                }
            }
            let (perm, _) = align_latent_labels(&est, &truth).unwrap();
            assert_eq!(perm, expected.unwrap().0, "seed {seed}");
        }
    }

    #[test]
    fn alignment_is_idempotent() {
        for seed in 30..35 {
            let truth = random_model(4, 3, 2, seed);
            let est = {
                let mut rng = RandomSource::new(seed + 50);
                ClMmmc::random(4, 3, truth.partition().clone(), &mut rng).unwrap()
            };
            let (_, aligned) = align_latent_labels(&est, &truth).unwrap();
            let (perm_again, _) = align_latent_labels(&aligned, &truth).unwrap();
            assert_eq!(perm_again, vec![0, 1, 2], "seed {seed}");
        }
    }

    #[test]
    fn alignment_rejects_too_many_latent_states() {
        let truth = random_model(2, 9, 1, 40);
        let est = random_model(2, 9, 1, 41);
        assert!(matches!(
            align_latent_labels(&est, &truth),
            Err(Error::TooManyLatentStates { num_latent: 9, .. })
        ));
    }

    #[test]
    fn alignment_rejects_mismatched_shapes() {
        let truth = random_model(3, 2, 1, 45);
        let est = random_model(4, 2, 1, 46);
        assert!(align_latent_labels(&est, &truth).is_err());
        let est = random_model(3, 3, 1, 47);
        assert!(align_latent_labels(&est, &truth).is_err());
    }

    #[test]
    fn self_evaluation_is_all_zeros() {
        let model = random_model(4, 2, 2, 50);
        let data = vec![
            sample_trajectory(&model, 40, &mut RandomSource::new(51)),
            sample_trajectory(&model, 25, &mut RandomSource::new(52)),
        ];
        let report = evaluate_estimate(&model, &model, &data, None).unwrap();
        assert_eq!(report.permutation, vec![0, 1]);
        assert_eq!(report.loglik_gap, 0.0);
        for page in report.visible_pages.iter().chain(&report.latent_pages) {
            assert_eq!(page.expected_row_tv, 0.0);
            assert_eq!(page.stationary_tv, Some(0.0));
            assert!(!page.uniform_weights);
        }
    }

    #[test]
    fn distances_match_hand_computed_values() {
        // True page [[0.9, 0.1], [0.5, 0.5]] has stationary [5/6, 1/6];
        // estimate page is uniform with stationary [1/2, 1/2].
        //   stationary distance: (|1/2 - 5/6| + |1/2 - 1/6|) / 2 = 1/3
        //   row-weighted distance: 5/6 * 0.4 + 1/6 * 0 = 1/3
        let make = |page: Vec<Vec<f64>>| {
            ClMmmc::new(
                ProbVector::uniform(2),
                ProbVector::point_mass(1, 0),
                vec![StochasticMatrix::from_rows(page, INGEST_TOL).unwrap()],
                vec![StochasticMatrix::identity(1)],
                Partition::single_block(2),
            )
            .unwrap()
        };
        let est = make(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let truth = make(vec![vec![0.9, 0.1], vec![0.5, 0.5]]);
        let report = evaluate_estimate(&est, &truth, &[], None).unwrap();
        let page = &report.visible_pages[0];
        assert!((page.stationary_tv.unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!((page.expected_row_tv - 1.0 / 3.0).abs() < 1e-10);
        assert!(!page.uniform_weights);
        assert_eq!(report.loglik_gap, 0.0);
    }

    #[test]
    fn reducible_true_page_degrades_to_uniform_weights() {
        let make = |page: StochasticMatrix| {
            ClMmmc::new(
                ProbVector::uniform(2),
                ProbVector::point_mass(1, 0),
                vec![page],
                vec![StochasticMatrix::identity(1)],
                Partition::single_block(2),
            )
            .unwrap()
        };
        let est = make(StochasticMatrix::from_rows(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            INGEST_TOL,
        )
        .unwrap());
        let truth = make(StochasticMatrix::identity(2));
        let report = evaluate_estimate(&est, &truth, &[], None).unwrap();
        let page = &report.visible_pages[0];
        assert!(page.uniform_weights);
        assert_eq!(page.stationary_tv, None);
        // Uniform weights: (0.1 + 0.2) / 2.
        assert!((page.expected_row_tv - 0.15).abs() < 1e-12);
    }

    #[test]
    fn distances_are_invariant_under_joint_relabeling() {
        let truth = random_model(4, 3, 2, 60);
        let est = {
            let mut rng = RandomSource::new(61);
            ClMmmc::random(4, 3, truth.partition().clone(), &mut rng).unwrap()
        };
        let data = vec![sample_trajectory(&truth, 30, &mut RandomSource::new(62))];
        let report = evaluate_estimate(&est, &truth, &data, None).unwrap();

        let perm = [2usize, 0, 1];
        let report_perm = evaluate_estimate(
            &est.permute_latent(&perm).unwrap(),
            &truth.permute_latent(&perm).unwrap(),
            &data,
            None,
        )
        .unwrap();

        let total = |r: &EvalReport| -> f64 {
            r.visible_pages.iter().map(|p| p.expected_row_tv).sum::<f64>()
                + r.latent_pages.iter().map(|p| p.expected_row_tv).sum::<f64>()
        };
        assert!((total(&report) - total(&report_perm)).abs() < 1e-12);
        assert!((report.loglik_est - report_perm.loglik_est).abs() < 1e-12);
        assert!((report.loglik_gap - report_perm.loglik_gap).abs() < 1e-12);
    }

    #[test]
    fn engagement_probability_readings() {
        // Latent switch page with identical rows (0.7, 0.3): its
        // stationary distribution is exactly that row.
        let switch = StochasticMatrix::from_rows(
            vec![vec![0.7, 0.3], vec![0.7, 0.3]],
            INGEST_TOL,
        )
        .unwrap();
        let mut rng = RandomSource::new(70);
        let model = ClMmmc::new(
            ProbVector::uniform(2),
            ProbVector::new(vec![0.6, 0.4], 1e-9).unwrap(),
            vec![
                StochasticMatrix::random(2, 2, &mut rng),
                StochasticMatrix::random(2, 2, &mut rng),
            ],
            vec![switch],
            Partition::single_block(2),
        )
        .unwrap();

        let report = evaluate_estimate(
            &model,
            &model,
            &[],
            Some(PrMode::StationaryOfPage {
                page: 0,
                latent_state: 1,
            }),
        )
        .unwrap();
        assert!((report.p_r_estimate.unwrap() - 0.3).abs() < 1e-9);

        let report = evaluate_estimate(
            &model,
            &model,
            &[],
            Some(PrMode::InitialDistribution { latent_state: 1 }),
        )
        .unwrap();
        assert_eq!(report.p_r_estimate, Some(0.4));

        assert!(matches!(
            evaluate_estimate(
                &model,
                &model,
                &[],
                Some(PrMode::InitialDistribution { latent_state: 2 }),
            ),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            evaluate_estimate(
                &model,
                &model,
                &[],
                Some(PrMode::StationaryOfPage { page: 1, latent_state: 0 }),
            ),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
