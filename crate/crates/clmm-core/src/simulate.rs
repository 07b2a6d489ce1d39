//! Sampling from a model: plain trajectories and origin/terminal trips.
//!
//! Draw order is pinned so that simulation is bit-reproducible: initial
//! visible state, then initial latent state, and at every later step the
//! visible successor before the latent successor. Both successors condition
//! only on the previous pair, so the order does not change the law, just
//! the mapping from seed to sample path.
//!
//! The trip machinery models a recurring walk on a directed graph: each
//! trip starts at a fixed origin, walks until it hits a terminal state, and
//! is then augmented with a bookkeeping return arc back to the origin so
//! trips can be concatenated into one long chain without gluing artifacts.
//! Which transition matrix steers a trip is a Bernoulli choice per trip: an
//! autonomous "driver" page with probability `1 - p_r` and a "recommender"
//! page with probability `p_r`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::ClMmmc;
use crate::rng::RandomSource;
use crate::stochastic::{Partition, ProbVector, StochasticMatrix};

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// A non-empty sequence of visible states. A trajectory with `T` transitions
/// holds `T + 1` states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    states: Vec<usize>,
}

impl Trajectory {
    pub fn from_states(states: Vec<usize>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidFormat("empty trajectory".into()));
        }
        Ok(Trajectory { states })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Number of states, i.e. transitions + 1.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    /// Number of transitions.
    pub fn num_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn first(&self) -> usize {
        self.states[0]
    }

    pub fn last(&self) -> usize {
        *self.states.last().unwrap()
    }
}

/// A sampled pair of aligned latent and visible paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointTrajectory {
    pub visible: Trajectory,
    pub latent: Vec<usize>,
}

/// Sample `steps` joint transitions, returning `steps + 1` aligned states
/// of both chains.
pub fn sample_joint_trajectory(
    model: &ClMmmc,
    steps: usize,
    rng: &mut RandomSource,
) -> JointTrajectory {
    let mut visible = Vec::with_capacity(steps + 1);
    let mut latent = Vec::with_capacity(steps + 1);
    visible.push(model.pi_visible().sample(rng));
    latent.push(model.pi_latent().sample(rng));
    for t in 1..=steps {
        let (prev_latent, prev_visible) = (latent[t - 1], visible[t - 1]);
        visible.push(model.visible_page(prev_latent).row(prev_visible).sample(rng));
        latent.push(model.latent_page_for(prev_visible).row(prev_latent).sample(rng));
    }
    JointTrajectory {
        visible: Trajectory { states: visible },
        latent,
    }
}

/// Sample `steps` transitions and keep only the visible path.
pub fn sample_trajectory(model: &ClMmmc, steps: usize, rng: &mut RandomSource) -> Trajectory {
    sample_joint_trajectory(model, steps, rng).visible
}

// ---------------------------------------------------------------------------
// Trip scenarios
// ---------------------------------------------------------------------------

/// A directed graph with an origin and a set of terminal states, plus the
/// per-trip recommendation probability. Terminal states carry exactly one
/// outgoing arc, the bookkeeping return to the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TripScenario {
    support: Vec<Vec<bool>>,
    origin: usize,
    terminals: BTreeSet<usize>,
    p_r: f64,
    driver_page: usize,
    recommender_page: usize,
}

impl TripScenario {
    /// Validate a scenario. `edges` are `(from, to)` pairs over
    /// `{0, .., num_states-1}`. Requirements:
    ///
    /// * the origin is not a terminal and there is at least one terminal;
    /// * each terminal's only outgoing edge is the return arc to the origin;
    /// * every non-terminal state has an outgoing edge;
    /// * from every state reachable from the origin, some terminal remains
    ///   reachable (so trips end with probability one under any strictly
    ///   positive edge weighting);
    /// * `p_r` lies in `[0, 1]` and the two page indices differ.
    pub fn new(
        num_states: usize,
        edges: &[(usize, usize)],
        origin: usize,
        terminals: &[usize],
        p_r: f64,
        driver_page: usize,
        recommender_page: usize,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::InvalidScenario("no states".into()));
        }
        if origin >= num_states {
            return Err(Error::InvalidScenario(format!(
                "origin {} out of range 1..={}",
                origin + 1,
                num_states
            )));
        }
        if terminals.is_empty() {
            return Err(Error::InvalidScenario("no terminal states".into()));
        }
        let terminal_set: BTreeSet<usize> = terminals.iter().copied().collect();
        if let Some(&t) = terminal_set.iter().find(|&&t| t >= num_states) {
            return Err(Error::InvalidScenario(format!(
                "terminal {} out of range 1..={}",
                t + 1,
                num_states
            )));
        }
        if terminal_set.contains(&origin) {
            return Err(Error::InvalidScenario(format!(
                "origin {} cannot be a terminal",
                origin + 1
            )));
        }
        if !(0.0..=1.0).contains(&p_r) {
            return Err(Error::InvalidScenario(format!(
                "recommendation probability {p_r} outside [0, 1]"
            )));
        }
        if driver_page == recommender_page {
            return Err(Error::InvalidScenario(
                "driver and recommender must use distinct pages".into(),
            ));
        }
        let mut support = vec![vec![false; num_states]; num_states];
        for &(from, to) in edges {
            if from >= num_states || to >= num_states {
                return Err(Error::InvalidScenario(format!(
                    "edge {} -> {} out of range 1..={}",
                    from + 1,
                    to + 1,
                    num_states
                )));
            }
            support[from][to] = true;
        }
        for &t in &terminal_set {
            for to in 0..num_states {
                if support[t][to] && to != origin {
                    return Err(Error::InvalidScenario(format!(
                        "terminal {} has outgoing edge to {}, only the return arc to {} is allowed",
                        t + 1,
                        to + 1,
                        origin + 1
                    )));
                }
            }
            if !support[t][origin] {
                return Err(Error::InvalidScenario(format!(
                    "terminal {} is missing the return arc to {}",
                    t + 1,
                    origin + 1
                )));
            }
        }
        for s in 0..num_states {
            if !terminal_set.contains(&s) && !support[s].iter().any(|&b| b) {
                return Err(Error::InvalidScenario(format!(
                    "state {} has no outgoing edge",
                    s + 1
                )));
            }
        }
        // Walk forward from the origin; every reachable non-terminal state
        // must still be able to reach a terminal.
        let reachable = reachable_from(&support, origin);
        for (s, &reached) in reachable.iter().enumerate() {
            if reached && !terminal_set.contains(&s) {
                let onward = reachable_from(&support, s);
                if !terminal_set.iter().any(|&t| onward[t]) {
                    return Err(Error::InvalidScenario(format!(
                        "state {} is reachable from the origin but cannot reach a terminal",
                        s + 1
                    )));
                }
            }
        }
        Ok(TripScenario {
            support,
            origin,
            terminals: terminal_set,
            p_r,
            driver_page,
            recommender_page,
        })
    }

    pub fn num_states(&self) -> usize {
        self.support.len()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminals.iter().copied()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals.contains(&s)
    }

    pub fn p_r(&self) -> f64 {
        self.p_r
    }

    pub fn driver_page(&self) -> usize {
        self.driver_page
    }

    pub fn recommender_page(&self) -> usize {
        self.recommender_page
    }

    /// Adjacency mask: `support()[i][j]` is true iff the edge `i -> j`
    /// exists. The right input for
    /// [`StochasticMatrix::random_with_support`].
    pub fn support(&self) -> &[Vec<bool>] {
        &self.support
    }

    /// Check that a transition matrix lives on this graph: positive
    /// probability only on edges.
    pub fn check_matrix(&self, m: &StochasticMatrix) -> Result<()> {
        let n = self.num_states();
        if !m.is_square() || m.num_rows() != n {
            return Err(Error::DimensionMismatch {
                field: "scenario matrix".into(),
                detail: format!("{}x{}, expected {n}x{n}", m.num_rows(), m.num_cols()),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j);
                if v > 0.0 && !self.support[i][j] {
                    return Err(Error::AdjacencyViolation {
                        from: i + 1,
                        to: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

fn reachable_from(support: &[Vec<bool>], start: usize) -> Vec<bool> {
    let n = support.len();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for (t, &edge) in support[s].iter().enumerate() {
            if edge && !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Default trip length cap: `10 * num_states` transitions.
pub fn default_max_trip_len(num_states: usize) -> usize {
    10 * num_states
}

/// Sample `num_trips` trips. Each trip draws one Bernoulli(`p_r`) choice of
/// page (recommender on success), then walks from the origin by that page's
/// rows until a terminal is hit, and is augmented with the return arc, so
/// every returned trajectory reads `origin, .., terminal, origin`. The
/// augmentation consumes no random draws. Trips exceeding `max_len`
/// transitions before the terminal abort with [`Error::TripTooLong`].
pub fn sample_trips(
    scenario: &TripScenario,
    model: &ClMmmc,
    num_trips: usize,
    max_len: usize,
    rng: &mut RandomSource,
) -> Result<Vec<Trajectory>> {
    let pages = check_scenario_model(scenario, model)?;
    let mut trips = Vec::with_capacity(num_trips);
    for _ in 0..num_trips {
        let page = if rng.next_f64() < scenario.p_r() {
            pages.1
        } else {
            pages.0
        };
        trips.push(sample_one_trip(scenario, model.visible_page(page), max_len, rng)?);
    }
    Ok(trips)
}

fn check_scenario_model(scenario: &TripScenario, model: &ClMmmc) -> Result<(usize, usize)> {
    if model.num_visible() != scenario.num_states() {
        return Err(Error::DimensionMismatch {
            field: "scenario model".into(),
            detail: format!(
                "model has {} visible states, scenario has {}",
                model.num_visible(),
                scenario.num_states()
            ),
        });
    }
    let (d, r) = (scenario.driver_page(), scenario.recommender_page());
    if d >= model.num_latent() || r >= model.num_latent() {
        return Err(Error::IndexOutOfRange {
            what: format!(
                "scenario pages {} and {} with {} visible pages",
                d + 1,
                r + 1,
                model.num_latent()
            ),
        });
    }
    scenario.check_matrix(model.visible_page(d))?;
    scenario.check_matrix(model.visible_page(r))?;
    Ok((d, r))
}

fn sample_one_trip(
    scenario: &TripScenario,
    page: &StochasticMatrix,
    max_len: usize,
    rng: &mut RandomSource,
) -> Result<Trajectory> {
    let mut states = vec![scenario.origin()];
    let mut current = scenario.origin();
    let mut steps = 0;
    while !scenario.is_terminal(current) {
        if steps == max_len {
            return Err(Error::TripTooLong { max_len });
        }
        current = page.row(current).sample(rng);
        states.push(current);
        steps += 1;
    }
    states.push(scenario.origin());
    Ok(Trajectory { states })
}

/// Concatenate trips into one trajectory, dropping the duplicated junction
/// state between consecutive trips. Each trip must start where the previous
/// one ended.
pub fn concatenate_trips(trips: &[Trajectory]) -> Result<Trajectory> {
    let first = trips
        .first()
        .ok_or_else(|| Error::InvalidFormat("no trips to concatenate".into()))?;
    let mut states = first.states().to_vec();
    for (d, trip) in trips.iter().enumerate().skip(1) {
        let end = *states.last().unwrap();
        if trip.first() != end {
            return Err(Error::JunctionMismatch {
                trip: d,
                end: end + 1,
                next: d + 1,
                start: trip.first() + 1,
            });
        }
        states.extend_from_slice(&trip.states()[1..]);
    }
    Ok(Trajectory { states })
}

// ---------------------------------------------------------------------------
// Driver scenario builder
// ---------------------------------------------------------------------------

/// How the per-trip page choice is encoded in the latent chain of the built
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentCoupling {
    /// The latent chain redraws the page on the return arc: the partition
    /// separates terminals from the rest, the terminal block's latent page
    /// has identical rows `(1 - p_r, p_r)`, and the non-terminal block's
    /// page is the identity. One long concatenated trajectory of trips then
    /// has exactly the law of this model, feedback loop included.
    SwitchOnReturn,
    /// The latent state is constant per trajectory (identity latent page,
    /// single block) and the page choice sits in the latent initial
    /// distribution `(1 - p_r, p_r)`. Matches treating each trip as its own
    /// trajectory in multi-trajectory estimation.
    PerTrip,
}

/// Assemble the two-page trip model for a graph: latent state 1 drives by
/// `driver_matrix`, latent state 2 by `recommender_matrix`, and the latent
/// chain encodes the Bernoulli(`p_r`) page choice per `coupling`. Both
/// matrices must live on the graph's edges. Also returns the validated
/// scenario (driver page 1, recommender page 2).
#[allow(clippy::too_many_arguments)]
pub fn build_driver_scenario(
    num_states: usize,
    edges: &[(usize, usize)],
    origin: usize,
    terminals: &[usize],
    driver_matrix: StochasticMatrix,
    recommender_matrix: StochasticMatrix,
    p_r: f64,
    coupling: LatentCoupling,
) -> Result<(TripScenario, ClMmmc)> {
    let scenario = TripScenario::new(num_states, edges, origin, terminals, p_r, 0, 1)?;
    scenario.check_matrix(&driver_matrix)?;
    scenario.check_matrix(&recommender_matrix)?;

    let switch_row = vec![1.0 - p_r, p_r];
    let pi_latent = ProbVector::new(switch_row.clone(), 1e-9)?;
    let (partition, latent_pages) = match coupling {
        LatentCoupling::SwitchOnReturn => {
            let terminal_block: Vec<usize> = scenario.terminals().collect();
            let rest: Vec<usize> = (0..num_states)
                .filter(|s| !scenario.is_terminal(*s))
                .collect();
            let partition = Partition::from_blocks(num_states, vec![terminal_block, rest])?;
            let switch_page =
                StochasticMatrix::from_rows(vec![switch_row.clone(), switch_row], 1e-9)?;
            (partition, vec![switch_page, StochasticMatrix::identity(2)])
        }
        LatentCoupling::PerTrip => (
            Partition::single_block(num_states),
            vec![StochasticMatrix::identity(2)],
        ),
    };
    let model = ClMmmc::new(
        ProbVector::point_mass(num_states, origin),
        pi_latent,
        vec![driver_matrix, recommender_matrix],
        latent_pages,
        partition,
    )?;
    Ok((scenario, model))
}

/// The bundled 9-node demonstration graph: origin 1, terminals 8 and 9,
/// layered routes of unequal length (including the short route 1-2-8), so
/// every page on it is aperiodic and has a unique stationary distribution.
/// Returned as `(num_states, edges, origin, terminals)`, 0-based.
pub fn default_driver_graph() -> (usize, Vec<(usize, usize)>, usize, Vec<usize>) {
    let edges = vec![
        (0, 1),
        (0, 6),
        (1, 2),
        (1, 7),
        (6, 2),
        (6, 3),
        (2, 4),
        (2, 5),
        (3, 4),
        (3, 5),
        (4, 7),
        (4, 8),
        (5, 7),
        (5, 8),
        (7, 0),
        (8, 0),
    ];
    (9, edges, 0, vec![7, 8])
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
