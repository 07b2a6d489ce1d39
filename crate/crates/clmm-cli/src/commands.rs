use std::fs;
use std::path::{Path, PathBuf};

use clmm_core::estimate::{log_likelihood, EmConfig};
use clmm_core::evaluate::{evaluate_estimate, PrMode};
use clmm_core::io::{
    eval_report_to_json, parse_partition_spec, read_model, read_scenario, read_trajectories,
    write_hmm, write_model, write_trajectories,
};
use clmm_core::simulate::{default_max_trip_len, sample_trajectory, sample_trips};
use clmm_core::stochastic::{Partition, StochasticMatrix, INGEST_TOL};
use clmm_core::RandomSource;

use crate::args::{EstimateArgs, EvaluateArgs, LiftArgs, SimulateArgs};
use crate::error::{CliError, CliResult};
use crate::fit::{final_loglik, multi_start_fit, FitOutcome};
use crate::manifest::{manifest_path_for, RunManifest};

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("simulate", args, args.seed);
    let mut rng = RandomSource::new(args.seed);
    let trajectories = match (&args.model, &args.scenario) {
        (Some(path), None) => {
            let steps = args
                .steps
                .ok_or_else(|| CliError::Usage("--model requires --steps".into()))?;
            if args.trips.is_some() {
                return Err(CliError::Usage("--trips requires --scenario".into()));
            }
            manifest.add_input(path)?;
            let model = read_model(path)?;
            vec![sample_trajectory(&model, steps, &mut rng)]
        }
        (None, Some(path)) => {
            let trips = args
                .trips
                .ok_or_else(|| CliError::Usage("--scenario requires --trips".into()))?;
            if args.steps.is_some() {
                return Err(CliError::Usage("--steps requires --model".into()));
            }
            manifest.add_input(path)?;
            let (scenario, model) = read_scenario(path)?.instantiate(&mut rng)?;
            let max_len = default_max_trip_len(scenario.num_states());
            sample_trips(&scenario, &model, trips, max_len, &mut rng)?
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --model and --scenario is required".into(),
            ))
        }
    };
    write_trajectories(&args.output, &trajectories)?;
    manifest.finish(
        std::slice::from_ref(&args.output),
        &manifest_path_for(&args.output),
    )
}

pub fn estimate(args: &EstimateArgs) -> CliResult<()> {
    if args.num_visible == 0 || args.num_latent == 0 {
        return Err(CliError::Usage("--R and --S must be at least 1".into()));
    }
    let mut manifest = RunManifest::start("estimate", args, args.seed);
    manifest.add_input(&args.data)?;
    let data = read_trajectories(&args.data)?;
    let partition = match &args.gamma {
        Some(spec) => parse_partition_spec(spec, args.num_visible)?,
        None => Partition::single_block(args.num_visible),
    };

    let single = data.len() == 1;
    let mut config = if single {
        EmConfig::single_trajectory()
    } else {
        EmConfig::multi_trajectory()
    };
    config.max_iters = args.max_iters;
    config.loglik_tol = args.tol;
    if let Some(choice) = args.unreached {
        config.unreached = choice.into();
    }

    let (known_visible, known_latent) = parse_known_pages(
        &args.known,
        args.num_visible,
        args.num_latent,
        partition.num_blocks(),
        &mut manifest,
    )?;
    for (index, _) in &known_visible {
        config.freeze.visible_pages.insert(*index);
    }
    for (index, _) in &known_latent {
        config.freeze.latent_pages.insert(*index);
    }

    let outcome = multi_start_fit(
        &data,
        args.num_visible,
        args.num_latent,
        &partition,
        &known_visible,
        &known_latent,
        &config,
        args.starts,
        &RandomSource::new(args.seed),
    )?;

    write_model(&args.output, &outcome.best_report().model)?;
    let report_path = sibling_path(&args.output, ".report.json");
    fs::write(&report_path, render_fit_report(&outcome, single, &partition))?;
    manifest.finish(
        &[args.output.clone(), report_path],
        &manifest_path_for(&args.output),
    )
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("evaluate", args, 0);
    manifest.add_input(&args.est)?;
    manifest.add_input(&args.truth)?;
    manifest.add_input(&args.holdout)?;
    let est = read_model(&args.est)?;
    let truth = read_model(&args.truth)?;
    let holdout = read_trajectories(&args.holdout)?;

    let pr_mode = match (&args.pr_stationary, args.pr_initial) {
        (Some(spec), None) => {
            let (page, latent_state) = parse_pr_stationary(spec)?;
            Some(PrMode::StationaryOfPage { page, latent_state })
        }
        (None, Some(state)) => {
            let latent_state = to_zero_based(state, "--pr-initial state")?;
            Some(PrMode::InitialDistribution { latent_state })
        }
        (None, None) => None,
        _ => unreachable!("clap rejects the combination"),
    };

    let report = evaluate_estimate(&est, &truth, &holdout, pr_mode)?;
    fs::write(&args.output, eval_report_to_json(&report) + "\n")?;
    manifest.finish(
        std::slice::from_ref(&args.output),
        &manifest_path_for(&args.output),
    )
}

pub fn lift(args: &LiftArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("lift", args, 0);
    manifest.add_input(&args.model)?;
    let model = read_model(&args.model)?;
    let lifted = model.lift_to_hmm();
    write_hmm(
        &args.output,
        &lifted,
        model.num_visible(),
        model.num_latent(),
    )?;

    if let Some(path) = &args.verify {
        manifest.add_input(path)?;
        let trajectories = read_trajectories(path)?;
        let direct = log_likelihood(&model, &trajectories)?;
        let via_lift: f64 = trajectories
            .iter()
            .map(|t| lifted.log_likelihood(t.states()))
            .sum();
        let gap = (direct - via_lift).abs() / direct.abs().max(1.0);
        println!("model log-likelihood:  {direct}");
        println!("lifted log-likelihood: {via_lift}");
        println!("relative gap: {gap:e}");
        if gap > 1e-10 {
            return Err(CliError::VerifyFailed { gap, tol: 1e-10 });
        }
    }
    manifest.finish(
        std::slice::from_ref(&args.output),
        &manifest_path_for(&args.output),
    )
}

/// Pages pinned by `--known`, as (0-based page index, matrix) pairs.
type KnownPages = Vec<(usize, StochasticMatrix)>;

/// Parse `--known` specs like `AR:2=page.json`, reading each page file (a
/// JSON array of rows) and checking its shape. Returned indices are
/// 0-based.
fn parse_known_pages(
    specs: &[String],
    num_visible: usize,
    num_latent: usize,
    num_blocks: usize,
    manifest: &mut RunManifest,
) -> CliResult<(KnownPages, KnownPages)> {
    let mut visible = Vec::new();
    let mut latent = Vec::new();
    for spec in specs {
        let (lhs, path) = spec.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--known must look like AR:2=page.json, got {spec:?}"))
        })?;
        let (kind, index_text) = lhs.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("--known must look like AR:2=page.json, got {spec:?}"))
        })?;
        let index: usize = index_text.parse().map_err(|_| {
            CliError::Usage(format!("--known page index must be a number, got {index_text:?}"))
        })?;
        let index = to_zero_based(index, "--known page index")?;

        let (count, side, out) = match kind {
            "AR" => (num_latent, num_visible, &mut visible),
            "AS" => (num_blocks, num_latent, &mut latent),
            other => {
                return Err(CliError::Usage(format!(
                    "--known kind must be AR or AS, got {other:?}"
                )))
            }
        };
        if index >= count {
            return Err(CliError::Usage(format!(
                "--known {kind} page {} out of range: only {count} such pages",
                index + 1
            )));
        }

        let path = PathBuf::from(path);
        manifest.add_input(&path)?;
        let grid: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(&path)?)?;
        let page = StochasticMatrix::from_rows(grid, INGEST_TOL)?;
        if page.num_rows() != side || page.num_cols() != side {
            return Err(CliError::Usage(format!(
                "--known {kind} page must be {side}x{side}, got {}x{}",
                page.num_rows(),
                page.num_cols()
            )));
        }
        if out.iter().any(|(i, _)| *i == index) {
            return Err(CliError::Usage(format!(
                "--known repeats {kind} page {}",
                index + 1
            )));
        }
        out.push((index, page));
    }
    Ok((visible, latent))
}

fn parse_pr_stationary(spec: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = spec.split(',').collect();
    let parse = |text: &str| -> CliResult<usize> {
        text.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--pr-stationary must be PAGE,STATE, got {spec:?}")))
    };
    match parts.as_slice() {
        [page, state] => Ok((
            to_zero_based(parse(page)?, "--pr-stationary page")?,
            to_zero_based(parse(state)?, "--pr-stationary state")?,
        )),
        _ => Err(CliError::Usage(format!(
            "--pr-stationary must be PAGE,STATE, got {spec:?}"
        ))),
    }
}

fn to_zero_based(value: usize, what: &str) -> CliResult<usize> {
    value
        .checked_sub(1)
        .ok_or_else(|| CliError::Usage(format!("{what} is 1-based and must be positive")))
}

fn sibling_path(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_os_string();
    let mut name = stem;
    name.push(suffix);
    output.with_file_name(name)
}

fn render_fit_report(outcome: &FitOutcome, single: bool, partition: &Partition) -> String {
    #[derive(serde::Serialize)]
    struct StartReport<'a> {
        seed: u64,
        converged: bool,
        iterations: usize,
        final_loglik: f64,
        loglik_trace: &'a [f64],
    }
    #[derive(serde::Serialize)]
    struct FitReport<'a> {
        mode: &'static str,
        gamma: Vec<Vec<usize>>,
        best_start: usize,
        starts: Vec<StartReport<'a>>,
    }
    let starts = outcome
        .reports
        .iter()
        .zip(&outcome.start_seeds)
        .map(|(report, &seed)| StartReport {
            seed,
            converged: report.converged,
            iterations: report.iterations,
            final_loglik: final_loglik(report),
            loglik_trace: &report.loglik_trace,
        })
        .collect();
    let report = FitReport {
        mode: if single { "single" } else { "multi" },
        gamma: partition
            .blocks()
            .iter()
            .map(|block| block.iter().map(|s| s + 1).collect())
            .collect(),
        best_start: outcome.best + 1,
        starts,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    text
}
