//! File formats: model JSON, trajectory text, scenario JSON, lifted-HMM
//! JSON, evaluation-report JSON, and the partition mini-language.
//!
//! Everything on disk is 1-based — state indices in trajectory files,
//! partition blocks in model files, graph nodes in scenario files — while
//! the whole in-memory API is 0-based. The conversion happens here and
//! only here.
//!
//! Numbers are written with enough digits to reparse to the exact same
//! `f64`, so a load/store cycle is bit-stable (validation skips
//! renormalization for rows that are already exactly consistent).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::EvalReport;
use crate::model::{ClMmmc, HmmLift};
use crate::rng::RandomSource;
use crate::simulate::{build_driver_scenario, LatentCoupling, Trajectory, TripScenario};
use crate::stochastic::{Partition, ProbVector, StochasticMatrix, INGEST_TOL};

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(rename = "R")]
    num_visible: usize,
    #[serde(rename = "S")]
    num_latent: usize,
    #[serde(rename = "p")]
    num_blocks: usize,
    #[serde(rename = "piR")]
    pi_visible: Vec<f64>,
    #[serde(rename = "piS")]
    pi_latent: Vec<f64>,
    #[serde(rename = "AR")]
    visible_pages: Vec<Vec<f64>>,
    #[serde(rename = "AS")]
    latent_pages: Vec<Vec<f64>>,
    gamma: Vec<Vec<usize>>,
}

fn flatten(page: &StochasticMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(page.num_rows() * page.num_cols());
    for i in 0..page.num_rows() {
        out.extend_from_slice(page.row(i).entries());
    }
    out
}

fn unflatten(flat: &[f64], rows: usize, cols: usize, what: &str) -> Result<StochasticMatrix> {
    if flat.len() != rows * cols {
        return Err(Error::InvalidFormat(format!(
            "{what}: expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            flat.len()
        )));
    }
    let grid = (0..rows)
        .map(|i| flat[i * cols..(i + 1) * cols].to_vec())
        .collect();
    StochasticMatrix::from_rows(grid, INGEST_TOL)
}

pub fn model_to_json(model: &ClMmmc) -> String {
    let file = ModelFile {
        num_visible: model.num_visible(),
        num_latent: model.num_latent(),
        num_blocks: model.num_blocks(),
        pi_visible: model.pi_visible().entries().to_vec(),
        pi_latent: model.pi_latent().entries().to_vec(),
        visible_pages: model.visible_pages().iter().map(flatten).collect(),
        latent_pages: model.latent_pages().iter().map(flatten).collect(),
        gamma: model
            .partition()
            .blocks()
            .iter()
            .map(|block| block.iter().map(|&s| s + 1).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

pub fn model_from_json(text: &str) -> Result<ClMmmc> {
    let file: ModelFile = serde_json::from_str(text)?;
    let (r, s, p) = (file.num_visible, file.num_latent, file.num_blocks);
    if file.visible_pages.len() != s {
        return Err(Error::InvalidFormat(format!(
            "AR: expected S = {s} pages, got {}",
            file.visible_pages.len()
        )));
    }
    if file.latent_pages.len() != p {
        return Err(Error::InvalidFormat(format!(
            "AS: expected p = {p} pages, got {}",
            file.latent_pages.len()
        )));
    }
    if file.gamma.len() != p {
        return Err(Error::InvalidFormat(format!(
            "gamma: expected p = {p} blocks, got {}",
            file.gamma.len()
        )));
    }
    let pi_visible = ProbVector::new(file.pi_visible, INGEST_TOL)?;
    let pi_latent = ProbVector::new(file.pi_latent, INGEST_TOL)?;
    let visible_pages = file
        .visible_pages
        .iter()
        .enumerate()
        .map(|(i, flat)| unflatten(flat, r, r, &format!("AR page {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let latent_pages = file
        .latent_pages
        .iter()
        .enumerate()
        .map(|(l, flat)| unflatten(flat, s, s, &format!("AS page {}", l + 1)))
        .collect::<Result<Vec<_>>>()?;
    let blocks = file
        .gamma
        .iter()
        .map(|block| {
            block
                .iter()
                .map(|&v| {
                    if v == 0 {
                        Err(Error::InvalidFormat(
                            "gamma: state indices are 1-based, found 0".into(),
                        ))
                    } else {
                        Ok(v - 1)
                    }
                })
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let partition = Partition::from_blocks(r, blocks)?;
    ClMmmc::new(pi_visible, pi_latent, visible_pages, latent_pages, partition)
}

pub fn write_model(path: impl AsRef<Path>, model: &ClMmmc) -> Result<()> {
    fs::write(path, model_to_json(model) + "\n")?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ClMmmc> {
    model_from_json(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------

pub fn trajectories_to_text(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    for traj in trajs {
        let line = traj
            .states()
            .iter()
            .map(|&s| (s + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn trajectories_from_text(text: &str) -> Result<Vec<Trajectory>> {
    let mut trajs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let states = line
            .split_whitespace()
            .map(|token| {
                let v: usize = token.parse().map_err(|_| {
                    Error::InvalidFormat(format!(
                        "line {}: expected a state index, found {token:?}",
                        lineno + 1
                    ))
                })?;
                if v == 0 {
                    return Err(Error::InvalidFormat(format!(
                        "line {}: state indices are 1-based, found 0",
                        lineno + 1
                    )));
                }
                Ok(v - 1)
            })
            .collect::<Result<Vec<usize>>>()?;
        trajs.push(Trajectory::from_states(states)?);
    }
    Ok(trajs)
}

pub fn write_trajectories(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    fs::write(path, trajectories_to_text(trajs))?;
    Ok(())
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    trajectories_from_text(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Partition mini-language
// ---------------------------------------------------------------------------

/// Parse a partition like `"8,9|1-7"`: blocks separated by `|`, each block
/// a comma-separated list of 1-based states or inclusive ranges `a-b`.
/// Block order is preserved — it determines latent-page indices.
pub fn parse_partition_spec(spec: &str, num_states: usize) -> Result<Partition> {
    let mut blocks = Vec::new();
    for part in spec.split('|') {
        let mut block = Vec::new();
        for token in part.split(',') {
            let token = token.trim();
            if token.is_empty() {
                return Err(Error::InvalidFormat(format!(
                    "partition {spec:?}: empty entry"
                )));
            }
            if let Some((lo, hi)) = token.split_once('-') {
                let lo: usize = lo.trim().parse().map_err(|_| bad_partition(spec, token))?;
                let hi: usize = hi.trim().parse().map_err(|_| bad_partition(spec, token))?;
                if lo == 0 || hi < lo {
                    return Err(bad_partition(spec, token));
                }
                block.extend(lo - 1..hi);
            } else {
                let v: usize = token.parse().map_err(|_| bad_partition(spec, token))?;
                if v == 0 {
                    return Err(bad_partition(spec, token));
                }
                block.push(v - 1);
            }
        }
        blocks.push(block);
    }
    Partition::from_blocks(num_states, blocks)
}

fn bad_partition(spec: &str, token: &str) -> Error {
    Error::InvalidFormat(format!(
        "partition {spec:?}: bad entry {token:?} (want 1-based states or ranges like 1-7)"
    ))
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingSpec {
    #[default]
    SwitchOnReturn,
    PerTrip,
}

impl From<CouplingSpec> for LatentCoupling {
    fn from(spec: CouplingSpec) -> Self {
        match spec {
            CouplingSpec::SwitchOnReturn => LatentCoupling::SwitchOnReturn,
            CouplingSpec::PerTrip => LatentCoupling::PerTrip,
        }
    }
}

/// On-disk description of a trip-generation scenario. Node indices are
/// 1-based. `driver` and `recommender` are optional flat row-major
/// matrices; pages left out are drawn at random over the graph's support
/// when the scenario is instantiated (driver first, then recommender).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub num_states: usize,
    pub adjacency: Vec<[usize; 2]>,
    pub origin: usize,
    pub terminals: Vec<usize>,
    pub p_r: f64,
    #[serde(default)]
    pub coupling: CouplingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommender: Option<Vec<f64>>,
}

impl ScenarioFile {
    /// The built-in road graph with no explicit pages.
    pub fn default_graph(p_r: f64, coupling: CouplingSpec) -> Self {
        let (num_states, edges, origin, terminals) = crate::simulate::default_driver_graph();
        ScenarioFile {
            num_states,
            adjacency: edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            origin: origin + 1,
            terminals: terminals.iter().map(|&t| t + 1).collect(),
            p_r,
            coupling,
            driver: None,
            recommender: None,
        }
    }

    /// Instantiate: build the trip scenario and its generating model,
    /// drawing any unspecified page at random over the graph's support.
    pub fn instantiate(&self, rng: &mut RandomSource) -> Result<(TripScenario, ClMmmc)> {
        let n = self.num_states;
        let to_zero_based = |v: usize, what: &str| -> Result<usize> {
            if v == 0 || v > n {
                Err(Error::InvalidFormat(format!(
                    "{what}: node {v} out of range 1..={n}"
                )))
            } else {
                Ok(v - 1)
            }
        };
        let mut edges = Vec::with_capacity(self.adjacency.len());
        for &[a, b] in &self.adjacency {
            edges.push((to_zero_based(a, "adjacency")?, to_zero_based(b, "adjacency")?));
        }
        let origin = to_zero_based(self.origin, "origin")?;
        let terminals = self
            .terminals
            .iter()
            .map(|&t| to_zero_based(t, "terminals"))
            .collect::<Result<Vec<_>>>()?;

        let mut support = vec![vec![false; n]; n];
        for &(a, b) in &edges {
            support[a][b] = true;
        }
        let driver = match &self.driver {
            Some(flat) => unflatten(flat, n, n, "driver")?,
            None => StochasticMatrix::random_with_support(&support, rng)?,
        };
        let recommender = match &self.recommender {
            Some(flat) => unflatten(flat, n, n, "recommender")?,
            None => StochasticMatrix::random_with_support(&support, rng)?,
        };
        build_driver_scenario(
            n,
            &edges,
            origin,
            &terminals,
            driver,
            recommender,
            self.p_r,
            self.coupling.into(),
        )
    }
}

pub fn scenario_to_json(scenario: &ScenarioFile) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serialization cannot fail")
}

pub fn scenario_from_json(text: &str) -> Result<ScenarioFile> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    scenario_from_json(&fs::read_to_string(path)?)
}

pub fn write_scenario(path: impl AsRef<Path>, scenario: &ScenarioFile) -> Result<()> {
    fs::write(path, scenario_to_json(scenario) + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Lifted-HMM files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct HmmFile {
    #[serde(rename = "R")]
    num_visible: usize,
    #[serde(rename = "S")]
    num_latent: usize,
    pi: Vec<f64>,
    #[serde(rename = "W")]
    transition: Vec<f64>,
    #[serde(rename = "B")]
    emission: Vec<f64>,
}

pub fn hmm_to_json(lift: &HmmLift, num_visible: usize, num_latent: usize) -> String {
    let file = HmmFile {
        num_visible,
        num_latent,
        pi: lift.initial.entries().to_vec(),
        transition: flatten(&lift.transition),
        emission: flatten(&lift.emission),
    };
    serde_json::to_string_pretty(&file).expect("HMM serialization cannot fail")
}

pub fn hmm_from_json(text: &str) -> Result<HmmLift> {
    let file: HmmFile = serde_json::from_str(text)?;
    let n = file.num_visible * file.num_latent;
    if file.pi.len() != n {
        return Err(Error::InvalidFormat(format!(
            "pi: expected R*S = {n} entries, got {}",
            file.pi.len()
        )));
    }
    Ok(HmmLift {
        initial: ProbVector::new(file.pi, INGEST_TOL)?,
        transition: unflatten(&file.transition, n, n, "W")?,
        emission: unflatten(&file.emission, n, file.num_visible, "B")?,
    })
}

pub fn write_hmm(path: impl AsRef<Path>, lift: &HmmLift, num_visible: usize, num_latent: usize) -> Result<()> {
    fs::write(path, hmm_to_json(lift, num_visible, num_latent) + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EvalReportFile<'a> {
    permutation: Vec<usize>,
    visible_pages: Vec<PageDistancesFile>,
    latent_pages: Vec<PageDistancesFile>,
    loglik_est: f64,
    loglik_true: f64,
    loglik_gap: f64,
    p_r_estimate: &'a Option<f64>,
}

#[derive(Serialize)]
struct PageDistancesFile {
    stationary_tv: Option<f64>,
    expected_row_tv: f64,
    uniform_weights: bool,
}

/// Serialize an [`EvalReport`]; the permutation is written 1-based.
pub fn eval_report_to_json(report: &EvalReport) -> String {
    let pages = |src: &Vec<crate::evaluate::PageDistances>| {
        src.iter()
            .map(|p| PageDistancesFile {
                stationary_tv: p.stationary_tv,
                expected_row_tv: p.expected_row_tv,
                uniform_weights: p.uniform_weights,
            })
            .collect()
    };
    let file = EvalReportFile {
        permutation: report.permutation.iter().map(|&v| v + 1).collect(),
        visible_pages: pages(&report.visible_pages),
        latent_pages: pages(&report.latent_pages),
        loglik_est: report.loglik_est,
        loglik_true: report.loglik_true,
        loglik_gap: report.loglik_gap,
        p_r_estimate: &report.p_r_estimate,
    };
    serde_json::to_string_pretty(&file).expect("report serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::evaluate_estimate;
    use crate::simulate::sample_trajectory;

    fn random_model(r: usize, s: usize, p: usize, seed: u64) -> ClMmmc {
        let mut rng = RandomSource::new(seed);
        let partition = Partition::random(r, p, &mut rng).unwrap();
        ClMmmc::random(r, s, partition, &mut rng).unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        for seed in 0..5 {
            let model = random_model(4, 3, 2, seed);
            let parsed = model_from_json(&model_to_json(&model)).unwrap();
            assert_eq!(parsed.num_visible(), 4);
            assert_eq!(parsed.partition(), model.partition());
            for m in 0..4 {
                assert_eq!(
                    parsed.pi_visible().get(m).to_bits(),
                    model.pi_visible().get(m).to_bits()
                );
            }
            for i in 0..3 {
                assert_eq!(
                    parsed.pi_latent().get(i).to_bits(),
                    model.pi_latent().get(i).to_bits()
                );
                for m in 0..4 {
                    for n in 0..4 {
                        assert_eq!(
                            parsed.visible_page(i).get(m, n).to_bits(),
                            model.visible_page(i).get(m, n).to_bits()
                        );
                    }
                }
            }
            for l in 0..2 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(
                            parsed.latent_page(l).get(i, j).to_bits(),
                            model.latent_page(l).get(i, j).to_bits()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn model_json_shape() {
        let model = random_model(3, 2, 2, 9);
        let value: serde_json::Value = serde_json::from_str(&model_to_json(&model)).unwrap();
        assert_eq!(value["R"], 3);
        assert_eq!(value["S"], 2);
        assert_eq!(value["p"], 2);
        assert_eq!(value["AR"].as_array().unwrap().len(), 2);
        assert_eq!(value["AR"][0].as_array().unwrap().len(), 9);
        assert_eq!(value["AS"][0].as_array().unwrap().len(), 4);
        // All partition entries are 1-based.
        for block in value["gamma"].as_array().unwrap() {
            for v in block.as_array().unwrap() {
                assert!(v.as_u64().unwrap() >= 1);
            }
        }
    }

    #[test]
    fn model_parsing_rejects_malformed_files() {
        let model = random_model(3, 2, 1, 10);
        let good = model_to_json(&model);

        let mut value: serde_json::Value = serde_json::from_str(&good).unwrap();
        value["AR"].as_array_mut().unwrap().pop();
        assert!(model_from_json(&value.to_string()).is_err());

        let mut value: serde_json::Value = serde_json::from_str(&good).unwrap();
        value["gamma"][0][0] = 0.into();
        assert!(model_from_json(&value.to_string()).is_err());

        let mut value: serde_json::Value = serde_json::from_str(&good).unwrap();
        value["AR"][0][0] = 0.9.into();
        assert!(matches!(
            model_from_json(&value.to_string()),
            Err(Error::RowSumViolation { .. })
        ));

        assert!(model_from_json("not json").is_err());
    }

    #[test]
    fn trajectory_files_are_one_based() {
        let trajs = vec![
            Trajectory::from_states(vec![0, 1, 2]).unwrap(),
            Trajectory::from_states(vec![2, 2]).unwrap(),
        ];
        let text = trajectories_to_text(&trajs);
        assert_eq!(text, "1 2 3\n3 3\n");
        let back = trajectories_from_text(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].states(), &[0, 1, 2]);
        assert_eq!(back[1].states(), &[2, 2]);
    }

    #[test]
    fn trajectory_parsing_edge_cases() {
        // Blank lines are skipped, arbitrary whitespace tolerated.
        let back = trajectories_from_text("\n  1\t2  \n\n3 1\n").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].states(), &[0, 1]);
        // 0 violates the 1-based contract.
        assert!(matches!(
            trajectories_from_text("1 0 2\n"),
            Err(Error::InvalidFormat(_))
        ));
        assert!(trajectories_from_text("1 x\n").is_err());
        assert!(trajectories_from_text("").unwrap().is_empty());
    }

    #[test]
    fn partition_spec_parsing() {
        let partition = parse_partition_spec("8,9|1-7", 9).unwrap();
        assert_eq!(partition.num_blocks(), 2);
        assert_eq!(partition.blocks()[0], vec![7, 8]);
        assert_eq!(partition.blocks()[1], vec![0, 1, 2, 3, 4, 5, 6]);
        for s in 0..7 {
            assert_eq!(partition.block_of(s), 1);
        }
        assert_eq!(partition.block_of(7), 0);

        let single = parse_partition_spec("1-4", 4).unwrap();
        assert_eq!(single, Partition::single_block(4));

        let mixed = parse_partition_spec("1,3-4|2", 4).unwrap();
        assert_eq!(mixed.blocks()[0], vec![0, 2, 3]);

        assert!(parse_partition_spec("1-3|3", 3).is_err()); // overlap
        assert!(parse_partition_spec("1-2", 3).is_err()); // missing state
        assert!(parse_partition_spec("3-1", 3).is_err()); // reversed range
        assert!(parse_partition_spec("0-2", 3).is_err()); // 0 is not a state
        assert!(parse_partition_spec("1-2|x", 3).is_err());
        assert!(parse_partition_spec("1-2||3", 3).is_err());
    }

    #[test]
    fn scenario_round_trip_and_instantiation() {
        let file = ScenarioFile::default_graph(0.3, CouplingSpec::SwitchOnReturn);
        let parsed = scenario_from_json(&scenario_to_json(&file)).unwrap();
        assert_eq!(parsed.num_states, file.num_states);
        assert_eq!(parsed.adjacency, file.adjacency);
        assert_eq!(parsed.coupling, CouplingSpec::SwitchOnReturn);

        let mut rng = RandomSource::new(5);
        let (scenario, model) = parsed.instantiate(&mut rng).unwrap();
        assert_eq!(scenario.p_r(), 0.3);
        assert_eq!(model.num_latent(), 2);
        // Same seed, same instantiation.
        let (_, model_again) = parsed.instantiate(&mut RandomSource::new(5)).unwrap();
        for m in 0..9 {
            for n in 0..9 {
                assert_eq!(
                    model.visible_page(0).get(m, n).to_bits(),
                    model_again.visible_page(0).get(m, n).to_bits()
                );
            }
        }
    }

    #[test]
    fn scenario_coupling_defaults_and_explicit_pages() {
        // Coupling field may be omitted entirely.
        let file = ScenarioFile::default_graph(0.2, CouplingSpec::PerTrip);
        let mut value: serde_json::Value =
            serde_json::from_str(&scenario_to_json(&file)).unwrap();
        assert_eq!(value["coupling"], "per-trip");
        value.as_object_mut().unwrap().remove("coupling");
        let parsed = scenario_from_json(&value.to_string()).unwrap();
        assert_eq!(parsed.coupling, CouplingSpec::SwitchOnReturn);

        // An explicit page passes through bit-exactly.
        let mut rng = RandomSource::new(6);
        let (scenario, model) = file.instantiate(&mut rng).unwrap();
        let driver_flat = flatten(model.visible_page(scenario.driver_page()));
        let mut with_page = file.clone();
        with_page.driver = Some(driver_flat.clone());
        let (scenario2, model2) = with_page.instantiate(&mut RandomSource::new(7)).unwrap();
        assert_eq!(
            flatten(model2.visible_page(scenario2.driver_page())),
            driver_flat
        );

        // A page with mass outside the graph is rejected.
        let mut bad = file;
        bad.driver = Some(vec![1.0 / 9.0; 81]);
        assert!(matches!(
            bad.instantiate(&mut RandomSource::new(8)),
            Err(Error::AdjacencyViolation { .. })
        ));
    }

    #[test]
    fn scenario_rejects_out_of_range_nodes() {
        let mut file = ScenarioFile::default_graph(0.3, CouplingSpec::SwitchOnReturn);
        file.adjacency.push([1, 10]);
        assert!(file.instantiate(&mut RandomSource::new(9)).is_err());
    }

    #[test]
    fn hmm_round_trip_is_bit_exact() {
        let model = random_model(3, 2, 2, 20);
        let lift = model.lift_to_hmm();
        let text = hmm_to_json(&lift, 3, 2);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["W"].as_array().unwrap().len(), 36);
        assert_eq!(value["B"].as_array().unwrap().len(), 18);
        let back = hmm_from_json(&text).unwrap();
        assert_eq!(back.num_states(), 6);
        for q in 0..6 {
            assert_eq!(
                back.initial.get(q).to_bits(),
                lift.initial.get(q).to_bits()
            );
            for q2 in 0..6 {
                assert_eq!(
                    back.transition.get(q, q2).to_bits(),
                    lift.transition.get(q, q2).to_bits()
                );
            }
        }
    }

    #[test]
    fn eval_report_serialization_is_one_based() {
        let truth = random_model(3, 2, 1, 30);
        let est = truth.permute_latent(&[1, 0]).unwrap();
        let data = vec![sample_trajectory(&truth, 12, &mut RandomSource::new(31))];
        let report = evaluate_estimate(&est, &truth, &data, None).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&eval_report_to_json(&report)).unwrap();
        assert_eq!(value["permutation"][0], 2);
        assert_eq!(value["permutation"][1], 1);
        assert_eq!(value["visible_pages"].as_array().unwrap().len(), 2);
        assert!(value["p_r_estimate"].is_null());
        assert!(value["loglik_gap"].is_number());
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let model = random_model(3, 2, 2, 40);
        let model_path = dir.path().join("model.json");
        write_model(&model_path, &model).unwrap();
        let back = read_model(&model_path).unwrap();
        assert_eq!(back.visible_page(0), model.visible_page(0));

        let trajs = vec![sample_trajectory(&model, 9, &mut RandomSource::new(41))];
        let traj_path = dir.path().join("data.txt");
        write_trajectories(&traj_path, &trajs).unwrap();
        assert_eq!(read_trajectories(&traj_path).unwrap()[0].states(), trajs[0].states());

        let scenario = ScenarioFile::default_graph(0.25, CouplingSpec::PerTrip);
        let scenario_path = dir.path().join("scenario.json");
        write_scenario(&scenario_path, &scenario).unwrap();
        assert_eq!(read_scenario(&scenario_path).unwrap().p_r, 0.25);
    }
}
