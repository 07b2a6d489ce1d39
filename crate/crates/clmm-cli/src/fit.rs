use clmm_core::estimate::{em_run, EmConfig, EmReport};
use clmm_core::simulate::Trajectory;
use clmm_core::stochastic::{Partition, StochasticMatrix};
use clmm_core::{ClMmmc, RandomSource};

use crate::error::{CliError, CliResult};

/// All restarts of one fit, in start order, plus the index of the winner.
pub struct FitOutcome {
    pub reports: Vec<EmReport>,
    pub start_seeds: Vec<u64>,
    pub best: usize,
}

impl FitOutcome {
    pub fn best_report(&self) -> &EmReport {
        &self.reports[self.best]
    }
}

/// Run `starts` EM fits from independent random initial models and keep the
/// best final log-likelihood (first start wins ties). Known pages are
/// substituted into every initial model; freezing them is the caller's job
/// via `config.freeze`. Starts run on the worker pool; the outcome is
/// independent of scheduling because starts are seeded and compared in
/// index order.
#[allow(clippy::too_many_arguments)]
pub fn multi_start_fit(
    data: &[Trajectory],
    num_visible: usize,
    num_latent: usize,
    partition: &Partition,
    known_visible: &[(usize, StochasticMatrix)],
    known_latent: &[(usize, StochasticMatrix)],
    config: &EmConfig,
    starts: usize,
    seeds: &RandomSource,
) -> CliResult<FitOutcome> {
    if starts == 0 {
        return Err(CliError::Usage("--starts must be at least 1".into()));
    }
    let start_seeds: Vec<u64> = (0..starts as u64).map(|i| seeds.child_seed(i)).collect();
    let results: Vec<clmm_core::Result<EmReport>> = {
        use rayon::prelude::*;
        start_seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = RandomSource::new(seed);
                let raw = ClMmmc::random(num_visible, num_latent, partition.clone(), &mut rng)?;
                let mut visible = raw.visible_pages().to_vec();
                for (index, page) in known_visible {
                    visible[*index] = page.clone();
                }
                let mut latent = raw.latent_pages().to_vec();
                for (index, page) in known_latent {
                    latent[*index] = page.clone();
                }
                let start = ClMmmc::new(
                    raw.pi_visible().clone(),
                    raw.pi_latent().clone(),
                    visible,
                    latent,
                    partition.clone(),
                )?;
                em_run(&start, data, config)
            })
            .collect()
    };

    let mut reports = Vec::with_capacity(starts);
    for result in results {
        reports.push(result?);
    }
    let best = reports
        .iter()
        .enumerate()
        .max_by(|a, b| {
            let (la, lb) = (final_loglik(a.1), final_loglik(b.1));
            la.total_cmp(&lb).then(b.0.cmp(&a.0)) // ties: lowest index
        })
        .expect("at least one start")
        .0;
    Ok(FitOutcome {
        reports,
        start_seeds,
        best,
    })
}

pub fn final_loglik(report: &EmReport) -> f64 {
    *report.loglik_trace.last().expect("nonempty trace")
}
