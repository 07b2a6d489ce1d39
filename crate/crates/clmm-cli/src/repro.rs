use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use clmm_core::estimate::EmConfig;
use clmm_core::evaluate::{evaluate_estimate, EvalReport, PrMode};
use clmm_core::simulate::{
    build_driver_scenario, concatenate_trips, default_driver_graph, default_max_trip_len,
    sample_trajectory, sample_trips, LatentCoupling, Trajectory,
};
use clmm_core::stochastic::{Partition, StochasticMatrix};
use clmm_core::{ClMmmc, RandomSource};

use crate::args::{Experiment, ReproArgs};
use crate::error::{CliError, CliResult};
use crate::fit::multi_start_fit;
use crate::manifest::RunManifest;

/// Separation required between the two random trip pages; nearly identical
/// pages would make the engagement probability unidentifiable from short
/// trips no matter how much data is available.
const PAGE_SEPARATION: f64 = 0.15;
const DEFAULT_STEPS: usize = 5000;
const HISTOGRAM_BINS: usize = 20;

pub fn run(args: &ReproArgs) -> CliResult<()> {
    check_scale(args)?;
    fs::create_dir_all(&args.output)?;
    let manifest = RunManifest::start("repro", args, args.seed);
    let master = RandomSource::new(args.seed);

    let driver = matches!(
        args.experiment,
        Experiment::DriverConcat | Experiment::DriverMulti
    );
    if driver && args.steps.is_some() {
        return Err(CliError::Usage(
            "--steps applies to the synthetic experiments only".into(),
        ));
    }
    if !driver && args.trips.is_some() {
        return Err(CliError::Usage(
            "--trips applies to the driver experiments only".into(),
        ));
    }

    let rows = match args.experiment {
        Experiment::SyntheticOpen => synthetic(args, &master, 6, false, false)?,
        Experiment::SyntheticClosed => synthetic(args, &master, 6, true, false)?,
        Experiment::SyntheticKnown => synthetic(args, &master, 8, false, true)?,
        Experiment::DriverConcat => driver_experiment(args, &master, true)?,
        Experiment::DriverMulti => driver_experiment(args, &master, false)?,
    };

    let outputs = write_tables(&args.output, &rows)?;
    manifest.finish(&outputs, &args.output.join("manifest.json"))
}

fn check_scale(args: &ReproArgs) -> CliResult<()> {
    let bounds = [
        ("--instances", args.instances, 1, 200),
        ("--steps", args.steps.unwrap_or(DEFAULT_STEPS), 10, 20_000),
        ("--trips", args.trips.unwrap_or(80), 1, 1000),
        ("--starts", args.starts, 1, 20),
    ];
    for (flag, value, lo, hi) in bounds {
        if value < lo || value > hi {
            return Err(CliError::Usage(format!(
                "{flag} must be between {lo} and {hi}, got {value}"
            )));
        }
    }
    Ok(())
}

struct InstanceRow {
    instance: usize,
    seed: u64,
    report: EvalReport,
}

/// Random ground truth, one long trajectory, full or page-2-frozen fit.
fn synthetic(
    args: &ReproArgs,
    master: &RandomSource,
    num_visible: usize,
    closed: bool,
    known_page: bool,
) -> CliResult<Vec<InstanceRow>> {
    let steps = args.steps.unwrap_or(DEFAULT_STEPS);
    run_instances(args.instances, |k| {
        let seed = master.child_seed(2 * k as u64);
        let mut rng = RandomSource::new(seed);
        let partition = if closed {
            Partition::random(num_visible, 2, &mut rng)?
        } else {
            Partition::single_block(num_visible)
        };
        let truth = ClMmmc::random(num_visible, 2, partition.clone(), &mut rng)?;
        let data = vec![sample_trajectory(&truth, steps, &mut rng)];

        let mut config = EmConfig::single_trajectory();
        let mut known_visible = Vec::new();
        if known_page {
            config.freeze.visible_pages.insert(1);
            known_visible.push((1, truth.visible_page(1).clone()));
        }
        let outcome = multi_start_fit(
            &data,
            num_visible,
            2,
            &partition,
            &known_visible,
            &[],
            &config,
            args.starts,
            &RandomSource::new(master.child_seed(2 * k as u64 + 1)),
        )?;
        let report = evaluate_estimate(&outcome.best_report().model, &truth, &data, None)?;
        Ok(InstanceRow {
            instance: k + 1,
            seed,
            report,
        })
    })
}

/// Trip datasets from the bundled graph. Concatenated mode fits the
/// switch-on-return feedback model to one long trajectory and reads the
/// engagement probability from the stationary distribution of the switch
/// page; separate mode fits all trips jointly with a constant latent state
/// per trip and reads it from the latent initial distribution. Both know
/// the recommender page and the structural latent pages.
fn driver_experiment(
    args: &ReproArgs,
    master: &RandomSource,
    concatenated: bool,
) -> CliResult<Vec<InstanceRow>> {
    let num_trips = args.trips.unwrap_or(if concatenated { 200 } else { 80 });
    let (num_states, edges, origin, terminals) = default_driver_graph();
    let mut support = vec![vec![false; num_states]; num_states];
    for &(a, b) in &edges {
        support[a][b] = true;
    }
    let (driver, recommender) = StochasticMatrix::random_separated_pair(
        &support,
        PAGE_SEPARATION,
        &mut RandomSource::new(master.child_seed(1)),
    )?;
    let coupling = if concatenated {
        LatentCoupling::SwitchOnReturn
    } else {
        LatentCoupling::PerTrip
    };
    let (scenario, truth) = build_driver_scenario(
        num_states,
        &edges,
        origin,
        &terminals,
        driver,
        recommender,
        0.3,
        coupling,
    )?;

    run_instances(args.instances, |k| {
        let seed = master.child_seed(2 * k as u64 + 100);
        let mut rng = RandomSource::new(seed);
        let trips = sample_trips(
            &scenario,
            &truth,
            num_trips,
            default_max_trip_len(num_states),
            &mut rng,
        )?;
        let (data, config, known_latent, pr_mode) = driver_fit_setup(&trips, concatenated)?;
        let outcome = multi_start_fit(
            &data,
            num_states,
            2,
            truth.partition(),
            &[(1, truth.visible_page(1).clone())],
            &known_latent,
            &config,
            args.starts,
            &RandomSource::new(master.child_seed(2 * k as u64 + 101)),
        )?;
        let report =
            evaluate_estimate(&outcome.best_report().model, &truth, &data, Some(pr_mode))?;
        Ok(InstanceRow {
            instance: k + 1,
            seed,
            report,
        })
    })
}

type DriverFit = (
    Vec<Trajectory>,
    EmConfig,
    Vec<(usize, StochasticMatrix)>,
    PrMode,
);

fn driver_fit_setup(trips: &[Trajectory], concatenated: bool) -> CliResult<DriverFit> {
    // Page index 1 (the recommender) is frozen by the caller in both modes.
    if concatenated {
        let mut config = EmConfig::single_trajectory();
        config.freeze.visible_pages.insert(1);
        // Block 0 holds the terminals and carries the free switch page;
        // block 1 must keep the identity so the page cannot change mid-trip.
        config.freeze.latent_pages.insert(1);
        Ok((
            vec![concatenate_trips(trips)?],
            config,
            vec![(1, StochasticMatrix::identity(2))],
            PrMode::StationaryOfPage {
                page: 0,
                latent_state: 1,
            },
        ))
    } else {
        let mut config = EmConfig::multi_trajectory();
        config.freeze.visible_pages.insert(1);
        // The single latent page must stay the identity: the page is drawn
        // once per trip and held for the whole trip.
        config.freeze.latent_pages.insert(0);
        Ok((
            trips.to_vec(),
            config,
            vec![(0, StochasticMatrix::identity(2))],
            PrMode::InitialDistribution { latent_state: 1 },
        ))
    }
}

fn run_instances(
    instances: usize,
    body: impl Fn(usize) -> CliResult<InstanceRow> + Sync + Send,
) -> CliResult<Vec<InstanceRow>> {
    let results: Vec<CliResult<InstanceRow>> = (0..instances).into_par_iter().map(body).collect();
    let mut rows = Vec::with_capacity(instances);
    for result in results {
        rows.push(result?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// One named column of per-instance values; missing entries stay empty in
/// the CSV and are skipped by the summaries.
struct Column {
    name: String,
    values: Vec<Option<f64>>,
}

fn columns(rows: &[InstanceRow]) -> Vec<Column> {
    let first = &rows[0].report;
    let mut columns = vec![
        Column {
            name: "ll_true".into(),
            values: rows.iter().map(|r| Some(r.report.loglik_true)).collect(),
        },
        Column {
            name: "ll_est".into(),
            values: rows.iter().map(|r| Some(r.report.loglik_est)).collect(),
        },
        Column {
            name: "ll_gap".into(),
            values: rows.iter().map(|r| Some(r.report.loglik_gap)).collect(),
        },
    ];
    for page in 0..first.visible_pages.len() {
        columns.push(Column {
            name: format!("ar{}_dist_stat", page + 1),
            values: rows
                .iter()
                .map(|r| r.report.visible_pages[page].stationary_tv)
                .collect(),
        });
        columns.push(Column {
            name: format!("ar{}_dist_exp", page + 1),
            values: rows
                .iter()
                .map(|r| Some(r.report.visible_pages[page].expected_row_tv))
                .collect(),
        });
    }
    for page in 0..first.latent_pages.len() {
        columns.push(Column {
            name: format!("as{}_dist_stat", page + 1),
            values: rows
                .iter()
                .map(|r| r.report.latent_pages[page].stationary_tv)
                .collect(),
        });
        columns.push(Column {
            name: format!("as{}_dist_exp", page + 1),
            values: rows
                .iter()
                .map(|r| Some(r.report.latent_pages[page].expected_row_tv))
                .collect(),
        });
    }
    columns.push(Column {
        name: "p_r".into(),
        values: rows.iter().map(|r| r.report.p_r_estimate).collect(),
    });
    columns
}

fn write_tables(dir: &std::path::Path, rows: &[InstanceRow]) -> CliResult<Vec<PathBuf>> {
    let columns = columns(rows);
    let mut outputs = Vec::new();

    let runs_path = dir.join("runs.csv");
    let mut runs = String::from("instance,seed");
    for column in &columns {
        runs.push(',');
        runs.push_str(&column.name);
    }
    runs.push('\n');
    for (i, row) in rows.iter().enumerate() {
        runs.push_str(&format!("{},{}", row.instance, row.seed));
        for column in &columns {
            runs.push(',');
            if let Some(v) = column.values[i] {
                runs.push_str(&fmt(v));
            }
        }
        runs.push('\n');
    }
    fs::write(&runs_path, runs)?;
    outputs.push(runs_path);

    let summary_path = dir.join("summary.csv");
    let mut summary = String::from("metric,count,mean,std,min,q1,median,q3,max\n");
    for column in &columns {
        let mut present: Vec<f64> = column.values.iter().flatten().copied().collect();
        if present.is_empty() {
            continue;
        }
        present.sort_by(f64::total_cmp);
        let n = present.len();
        let mean = present.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            column.name,
            n,
            fmt(mean),
            fmt(std),
            fmt(present[0]),
            fmt(quantile(&present, 0.25)),
            fmt(quantile(&present, 0.5)),
            fmt(quantile(&present, 0.75)),
            fmt(present[n - 1]),
        ));
    }
    fs::write(&summary_path, summary)?;
    outputs.push(summary_path);

    for column in &columns {
        if !matches!(
            column.name.as_str(),
            "ll_gap" | "ar1_dist_stat" | "ar1_dist_exp" | "p_r"
        ) {
            continue;
        }
        let present: Vec<f64> = column.values.iter().flatten().copied().collect();
        if present.is_empty() {
            continue;
        }
        let path = dir.join(format!("hist_{}.csv", column.name));
        fs::write(&path, histogram(&present))?;
        outputs.push(path);
    }
    Ok(outputs)
}

/// Quantile by linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let position = q * (sorted.len() - 1) as f64;
    let below = position.floor() as usize;
    let above = position.ceil() as usize;
    sorted[below] + (sorted[above] - sorted[below]) * (position - below as f64)
}

fn histogram(values: &[f64]) -> String {
    let mut text = String::from("bin_low,bin_high,count\n");
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        text.push_str(&format!("{},{},{}\n", fmt(min), fmt(max), values.len()));
        return text;
    }
    let width = (max - min) / HISTOGRAM_BINS as f64;
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in values {
        let bin = (((v - min) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    for (bin, count) in counts.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{}\n",
            fmt(min + bin as f64 * width),
            fmt(min + (bin + 1) as f64 * width),
            count
        ));
    }
    text
}

/// 17 significant digits: enough to reproduce the double exactly.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}
