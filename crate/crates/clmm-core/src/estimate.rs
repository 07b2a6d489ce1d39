//! Likelihood evaluation and EM estimation.
//!
//! All recursions run over the latent chain only: conditioning on the
//! observed visible path turns the latent process into a time-inhomogeneous
//! chain whose step matrices are read off the model, so likelihood costs
//! `O(T * S^2)` instead of anything exponential.
//!
//! Three independent likelihood routes are provided — direct enumeration
//! over latent sequences, the unscaled forward recursion, and the scaled
//! forward recursion — plus a fourth in [`crate::model::HmmLift`]. They
//! exist to check each other; production code uses the scaled route.
//!
//! Scaling convention: the forward vectors are normalized to sum to 1 at
//! every step and the per-step normalizers are stored. The backward vectors
//! are scaled recursively with those same normalizers (terminal vector
//! `1/d_T`, each earlier step divided by the normalizer of the index being
//! produced). With that pairing, the transition-posterior slices built in
//! [`compute_xi`] sum to 1 analytically, and the explicit renormalization
//! only mops up rounding — no cumulative products are ever formed.

use crate::error::{Error, Result};
use crate::model::{ClMmmc, FreezeMask};
use crate::simulate::Trajectory;
use crate::stochastic::{ProbVector, StochasticMatrix};

/// Enumeration guard for [`brute_force_likelihood`]: at most this many
/// latent sequences.
pub const ENUMERATION_LIMIT: f64 = 1e7;

// ---------------------------------------------------------------------------
// Cached forward/backward quantities
// ---------------------------------------------------------------------------

/// Scaled forward/backward pass over one trajectory.
#[derive(Debug, Clone)]
pub struct FbCache {
    alpha_hat: Vec<Vec<f64>>,
    beta_hat: Vec<Vec<f64>>,
    step_norms: Vec<f64>,
    log_likelihood: f64,
}

impl FbCache {
    /// Scaled forward vector at time `t`; sums to 1.
    pub fn alpha_hat(&self, t: usize) -> &[f64] {
        &self.alpha_hat[t]
    }

    /// Scaled backward vector at time `t`.
    pub fn beta_hat(&self, t: usize) -> &[f64] {
        &self.beta_hat[t]
    }

    /// Per-step normalizers `d_0, .., d_T`; their log-sum is the
    /// log-likelihood.
    pub fn step_norms(&self) -> &[f64] {
        &self.step_norms
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Number of time points, transitions + 1.
    pub fn len(&self) -> usize {
        self.step_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least the initial time point exists
    }
}

/// Posterior probability of each latent transition `(i, j)` across one time
/// step, given the whole visible trajectory. Entries sum to 1.
#[derive(Debug, Clone)]
pub struct XiSlice {
    probs: Vec<f64>,
    num_latent: usize,
}

impl XiSlice {
    pub fn num_latent(&self) -> usize {
        self.num_latent
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.num_latent + j]
    }

    /// Posterior mass of being in latent state `i` before the step.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.probs[i * self.num_latent..(i + 1) * self.num_latent]
            .iter()
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Configuration and reporting
// ---------------------------------------------------------------------------

/// What to do when some visible state is never transitioned from in the
/// data, leaving its estimator rows with empty sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnreachedPolicy {
    /// Fail, naming the unreached states.
    Error,
    /// Keep the current model's rows for those states (non-destructive;
    /// makes fixed points stay fixed points).
    KeepRow,
    /// Replace those rows with uniform distributions.
    Uniform,
}

/// EM knobs. `loglik_tol` is the absolute improvement threshold.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iters: usize,
    pub loglik_tol: f64,
    pub freeze: FreezeMask,
    pub unreached: UnreachedPolicy,
}

impl EmConfig {
    /// Defaults for fitting one long trajectory: 500 iterations, tolerance
    /// 1e-8, nothing frozen, unreached states are an error.
    pub fn single_trajectory() -> Self {
        EmConfig {
            max_iters: 500,
            loglik_tol: 1e-8,
            freeze: FreezeMask::none(),
            unreached: UnreachedPolicy::Error,
        }
    }

    /// Defaults for fitting many trajectories; unreached states keep their
    /// current rows instead of failing.
    pub fn multi_trajectory() -> Self {
        EmConfig {
            unreached: UnreachedPolicy::KeepRow,
            ..EmConfig::single_trajectory()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.loglik_tol <= 0.0 || !self.loglik_tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "loglik_tol must be a positive finite number, got {}",
                self.loglik_tol
            )));
        }
        Ok(())
    }
}

/// Outcome of an EM run. `loglik_trace[k]` is the log-likelihood of the
/// model after `k` update steps; `model` is the last one, `iterations` the
/// number of update steps applied.
#[derive(Debug, Clone)]
pub struct EmReport {
    pub model: ClMmmc,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Likelihood routes
// ---------------------------------------------------------------------------

fn check_trajectory(model: &ClMmmc, traj: &Trajectory) -> Result<()> {
    if let Some(&s) = traj.states().iter().find(|&&s| s >= model.num_visible()) {
        return Err(Error::IndexOutOfRange {
            what: format!(
                "trajectory state {} with {} visible states",
                s + 1,
                model.num_visible()
            ),
        });
    }
    Ok(())
}

/// Joint probability of the visible path and one full latent assignment:
/// the product of the two initial masses and, per step, the visible factor
/// under the old latent state times the latent factor under the old visible
/// state.
fn joint_sequence_prob(model: &ClMmmc, traj: &Trajectory, latent: &[usize]) -> f64 {
    let states = traj.states();
    let mut p = model.pi_visible().get(states[0]) * model.pi_latent().get(latent[0]);
    for t in 1..states.len() {
        if p == 0.0 {
            return 0.0;
        }
        p *= model.visible_page(latent[t - 1]).get(states[t - 1], states[t])
            * model.latent_page_for(states[t - 1]).get(latent[t - 1], latent[t]);
    }
    p
}

/// Likelihood by exhaustive summation over all `S^(T+1)` latent
/// assignments. The oracle for every fast path; guarded by
/// [`ENUMERATION_LIMIT`].
pub fn brute_force_likelihood(model: &ClMmmc, traj: &Trajectory) -> Result<f64> {
    check_trajectory(model, traj)?;
    let s = model.num_latent();
    let len = traj.len();
    let count = (s as f64).powi(len as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            size: count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut latent = vec![0usize; len];
    let mut total = 0.0;
    loop {
        total += joint_sequence_prob(model, traj, &latent);
        // Odometer increment in base S.
        let mut pos = 0;
        loop {
            if pos == len {
                return Ok(total);
            }
            latent[pos] += 1;
            if latent[pos] < s {
                break;
            }
            latent[pos] = 0;
            pos += 1;
        }
    }
}

/// Per-latent-state visible factors for the step `from -> to`: entry `i` is
/// the `(from, to)` element of visible page `i`.
fn visible_slice(model: &ClMmmc, from: usize, to: usize, out: &mut [f64]) {
    for (i, v) in out.iter_mut().enumerate() {
        *v = model.visible_page(i).get(from, to);
    }
}

/// Unscaled forward recursion. Returns the forward vectors (time 0 to `T`)
/// and the likelihood, the sum of the final vector. Underflows for long
/// trajectories; kept as a cross-check path.
pub fn forward_unscaled(model: &ClMmmc, traj: &Trajectory) -> Result<(Vec<Vec<f64>>, f64)> {
    check_trajectory(model, traj)?;
    let s = model.num_latent();
    let states = traj.states();
    let mut alphas = Vec::with_capacity(states.len());
    let first_mass = model.pi_visible().get(states[0]);
    alphas.push(
        model
            .pi_latent()
            .entries()
            .iter()
            .map(|&pi| pi * first_mass)
            .collect::<Vec<f64>>(),
    );
    let mut vis = vec![0.0; s];
    for t in 1..states.len() {
        let (from, to) = (states[t - 1], states[t]);
        visible_slice(model, from, to, &mut vis);
        let latent_page = model.latent_page_for(from);
        let prev = &alphas[t - 1];
        let mut next = vec![0.0; s];
        for i in 0..s {
            let w = prev[i] * vis[i];
            if w == 0.0 {
                continue;
            }
            let row = latent_page.row(i).entries();
            for (j, x) in next.iter_mut().enumerate() {
                *x += w * row[j];
            }
        }
        alphas.push(next);
    }
    let likelihood = alphas.last().unwrap().iter().sum();
    Ok((alphas, likelihood))
}

/// Unscaled backward recursion: the terminal vector is all ones, and each
/// earlier vector weights the latent page's rows by the successor vector
/// and multiplies in the step's visible factors.
pub fn backward_unscaled(model: &ClMmmc, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    check_trajectory(model, traj)?;
    let s = model.num_latent();
    let states = traj.states();
    let mut betas = vec![vec![1.0; s]; states.len()];
    let mut vis = vec![0.0; s];
    for t in (1..states.len()).rev() {
        let (from, to) = (states[t - 1], states[t]);
        visible_slice(model, from, to, &mut vis);
        let latent_page = model.latent_page_for(from);
        let (head, tail) = betas.split_at_mut(t);
        let prev = &mut head[t - 1];
        let next = &tail[0];
        for i in 0..s {
            let row = latent_page.row(i).entries();
            let inner: f64 = row.iter().zip(next.iter()).map(|(a, b)| a * b).sum();
            prev[i] = inner * vis[i];
        }
    }
    Ok(betas)
}

/// Scaled forward/backward pass; see the module docs for the convention.
/// Fails with [`Error::ZeroLikelihood`] at the first step whose total
/// probability is zero.
pub fn forward_backward_scaled(model: &ClMmmc, traj: &Trajectory) -> Result<FbCache> {
    check_trajectory(model, traj)?;
    let s = model.num_latent();
    let states = traj.states();
    let len = states.len();

    let mut alpha_hat = Vec::with_capacity(len);
    let mut step_norms = Vec::with_capacity(len);

    // Time 0: the unnormalized vector is the latent initial distribution
    // times the visible initial mass, so the normalizer is that mass.
    let d0 = model.pi_visible().get(states[0]);
    if d0 == 0.0 {
        return Err(Error::ZeroLikelihood { step: 0 });
    }
    alpha_hat.push(model.pi_latent().entries().to_vec());
    step_norms.push(d0);
    let mut log_likelihood = d0.ln();

    let mut vis = vec![0.0; s];
    for t in 1..len {
        let (from, to) = (states[t - 1], states[t]);
        visible_slice(model, from, to, &mut vis);
        let latent_page = model.latent_page_for(from);
        let prev = &alpha_hat[t - 1];
        let mut next = vec![0.0; s];
        for i in 0..s {
            let w = prev[i] * vis[i];
            if w == 0.0 {
                continue;
            }
            let row = latent_page.row(i).entries();
            for (j, x) in next.iter_mut().enumerate() {
                *x += w * row[j];
            }
        }
        let norm: f64 = next.iter().sum();
        if norm == 0.0 {
            return Err(Error::ZeroLikelihood { step: t });
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        alpha_hat.push(next);
        step_norms.push(norm);
        log_likelihood += norm.ln();
    }

    // Backward, reusing the forward normalizers: terminal vector 1/d_T,
    // each earlier vector divided by the normalizer at its own index.
    let mut beta_hat = vec![Vec::new(); len];
    beta_hat[len - 1] = vec![1.0 / step_norms[len - 1]; s];
    for t in (1..len).rev() {
        let (from, to) = (states[t - 1], states[t]);
        visible_slice(model, from, to, &mut vis);
        let latent_page = model.latent_page_for(from);
        let next = &beta_hat[t];
        let mut prev = vec![0.0; s];
        let d = step_norms[t - 1];
        for i in 0..s {
            let row = latent_page.row(i).entries();
            let inner: f64 = row.iter().zip(next.iter()).map(|(a, b)| a * b).sum();
            prev[i] = inner * vis[i] / d;
        }
        beta_hat[t - 1] = prev;
    }

    Ok(FbCache {
        alpha_hat,
        beta_hat,
        step_norms,
        log_likelihood,
    })
}

/// Posterior latent-transition slices for steps `1..=T`, computed from a
/// scaled pass. Each slice is built from forward vector, visible factors,
/// latent page, and backward vector, then normalized to kill rounding
/// drift; analytically it already sums to 1.
pub fn compute_xi(cache: &FbCache, model: &ClMmmc, traj: &Trajectory) -> Vec<XiSlice> {
    let s = model.num_latent();
    let states = traj.states();
    debug_assert_eq!(cache.len(), states.len());
    let mut slices = Vec::with_capacity(states.len().saturating_sub(1));
    let mut vis = vec![0.0; s];
    for t in 1..states.len() {
        let (from, to) = (states[t - 1], states[t]);
        visible_slice(model, from, to, &mut vis);
        let latent_page = model.latent_page_for(from);
        let alpha = cache.alpha_hat(t - 1);
        let beta = cache.beta_hat(t);
        let mut probs = vec![0.0; s * s];
        for i in 0..s {
            let w = alpha[i] * vis[i];
            if w == 0.0 {
                continue;
            }
            let row = latent_page.row(i).entries();
            for j in 0..s {
                probs[i * s + j] = w * row[j] * beta[j];
            }
        }
        let total: f64 = probs.iter().sum();
        for v in probs.iter_mut() {
            *v /= total;
        }
        slices.push(XiSlice {
            probs,
            num_latent: s,
        });
    }
    slices
}

/// Total log-likelihood of the data: the sum over trajectories of each
/// scaled forward pass. Impossible data yields the `-inf` sentinel rather
/// than an error; structural problems (state out of range) still fail.
pub fn log_likelihood(model: &ClMmmc, data: &[Trajectory]) -> Result<f64> {
    let mut total = 0.0;
    for traj in data {
        match forward_backward_scaled(model, traj) {
            Ok(cache) => total += cache.log_likelihood(),
            Err(Error::ZeroLikelihood { .. }) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Auxiliary lower-bound function
// ---------------------------------------------------------------------------

/// The EM auxiliary function `Q(mu, mu_prime)`: the expectation, under
/// `mu`'s posterior over latent sequences and scaled by `mu`'s likelihood,
/// of the log joint probability that `mu_prime` assigns to the data and the
/// latent sequence. Computed from `mu`'s transition posteriors, never by
/// enumeration.
///
/// Conventions: terms with zero posterior weight contribute nothing even if
/// `mu_prime` has a zero there; a zero in `mu_prime` carrying positive
/// weight makes the result `-inf`; if `mu` assigns the data probability
/// zero the result is 0.
pub fn auxiliary_q(mu: &ClMmmc, mu_prime: &ClMmmc, traj: &Trajectory) -> Result<f64> {
    if mu.num_visible() != mu_prime.num_visible()
        || mu.num_latent() != mu_prime.num_latent()
        || mu.partition() != mu_prime.partition()
    {
        return Err(Error::DimensionMismatch {
            field: "auxiliary function".into(),
            detail: "models must share visible/latent dimensions and partition".into(),
        });
    }
    let cache = match forward_backward_scaled(mu, traj) {
        Ok(cache) => cache,
        Err(Error::ZeroLikelihood { .. }) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let xi = compute_xi(&cache, mu, traj);
    let states = traj.states();
    let s = mu.num_latent();

    // Weighted sum of logs; `None` marks the -inf sentinel.
    let mut acc = 0.0;
    let mut add = |weight: f64, param: f64| -> bool {
        if weight == 0.0 {
            true
        } else if param == 0.0 {
            false
        } else {
            acc += weight * param.ln();
            true
        }
    };

    let mut finite = add(1.0, mu_prime.pi_visible().get(states[0]));
    if finite && !xi.is_empty() {
        for i in 0..s {
            if !add(xi[0].row_sum(i), mu_prime.pi_latent().get(i)) {
                finite = false;
                break;
            }
        }
    }
    if finite {
        'steps: for t in 1..states.len() {
            let (from, to) = (states[t - 1], states[t]);
            let latent_page = mu_prime.latent_page_for(from);
            let slice = &xi[t - 1];
            for i in 0..s {
                let row_weight = slice.row_sum(i);
                if !add(row_weight, mu_prime.visible_page(i).get(from, to)) {
                    finite = false;
                    break 'steps;
                }
                for j in 0..s {
                    if !add(slice.get(i, j), latent_page.get(i, j)) {
                        finite = false;
                        break 'steps;
                    }
                }
            }
        }
    }
    if !finite {
        return Ok(f64::NEG_INFINITY);
    }
    // Scale by mu's likelihood. exp underflows to 0 for very long
    // trajectories, which is also where the true value is below f64 range.
    Ok(cache.log_likelihood().exp() * acc)
}

// ---------------------------------------------------------------------------
// Re-estimation
// ---------------------------------------------------------------------------

/// One EM update from a single trajectory: posterior-weighted transition
/// counts, row-normalized. The visible initial distribution becomes the
/// point mass on the observed first state. Frozen parts are copied through
/// bit-identically; exact zeros in the input stay exact zeros.
pub fn reestimate_single(
    model: &ClMmmc,
    traj: &Trajectory,
    freeze: &FreezeMask,
    unreached: UnreachedPolicy,
) -> Result<ClMmmc> {
    Ok(reestimate_single_with_loglik(model, traj, freeze, unreached)?.0)
}

fn reestimate_single_with_loglik(
    model: &ClMmmc,
    traj: &Trajectory,
    freeze: &FreezeMask,
    unreached: UnreachedPolicy,
) -> Result<(ClMmmc, f64)> {
    freeze.validate_for(model)?;
    if traj.len() < 2 {
        return Err(Error::InvalidConfig(
            "estimation needs at least 2 states per trajectory".into(),
        ));
    }
    let cache = forward_backward_scaled(model, traj)?;
    let xi = compute_xi(&cache, model, traj);
    let (r, s, p) = (model.num_visible(), model.num_latent(), model.num_blocks());
    let states = traj.states();

    // Posterior-weighted counts: per visible page, per latent page, and
    // per-state visit counts of "transitioned from".
    let mut visible_num = vec![vec![0.0; r * r]; s];
    let mut latent_num = vec![vec![0.0; s * s]; p];
    let mut from_count = vec![0usize; r];
    for t in 1..states.len() {
        let (from, to) = (states[t - 1], states[t]);
        let block = model.partition().block_of(from);
        from_count[from] += 1;
        let slice = &xi[t - 1];
        for i in 0..s {
            visible_num[i][from * r + to] += slice.row_sum(i);
            for j in 0..s {
                latent_num[block][i * s + j] += slice.get(i, j);
            }
        }
    }

    check_unreached(&from_count, unreached)?;

    let pi_visible = ProbVector::point_mass(r, states[0]);
    let pi_latent = if freeze.pi_latent {
        model.pi_latent().clone()
    } else {
        ProbVector::from_normalized((0..s).map(|i| xi[0].row_sum(i)).collect())
    };

    let mut visible_pages = Vec::with_capacity(s);
    for i in 0..s {
        if freeze.visible_pages.contains(&i) {
            visible_pages.push(model.visible_page(i).clone());
            continue;
        }
        let mut rows = Vec::with_capacity(r);
        for m in 0..r {
            if from_count[m] == 0 {
                rows.push(fallback_row(model.visible_page(i).row(m), r, unreached));
                continue;
            }
            let num = &visible_num[i][m * r..(m + 1) * r];
            let den: f64 = num.iter().sum();
            if den == 0.0 {
                // State m was visited, but latent state i carries no
                // posterior mass there; any row maximizes, keep the
                // current one.
                rows.push(model.visible_page(i).row(m).clone());
            } else {
                rows.push(ProbVector::from_normalized(
                    num.iter().map(|&v| v / den).collect(),
                ));
            }
        }
        visible_pages.push(StochasticMatrix::from_prob_rows(rows));
    }

    let mut latent_pages = Vec::with_capacity(p);
    for l in 0..p {
        if freeze.latent_pages.contains(&l) {
            latent_pages.push(model.latent_page(l).clone());
            continue;
        }
        let block_reached = model.partition().blocks()[l]
            .iter()
            .any(|&m| from_count[m] > 0);
        let mut rows = Vec::with_capacity(s);
        for i in 0..s {
            if !block_reached {
                rows.push(fallback_row(model.latent_page(l).row(i), s, unreached));
                continue;
            }
            let num = &latent_num[l][i * s..(i + 1) * s];
            let den: f64 = num.iter().sum();
            if den == 0.0 {
                rows.push(model.latent_page(l).row(i).clone());
            } else {
                rows.push(ProbVector::from_normalized(
                    num.iter().map(|&v| v / den).collect(),
                ));
            }
        }
        latent_pages.push(StochasticMatrix::from_prob_rows(rows));
    }

    let updated = ClMmmc::new(
        pi_visible,
        pi_latent,
        visible_pages,
        latent_pages,
        model.partition().clone(),
    )?;
    Ok((updated, cache.log_likelihood()))
}

/// One EM update from several trajectories. The visible initial
/// distribution becomes the empirical frequency of first states (a pure
/// data statistic, the same at every iteration); everything else
/// accumulates the per-trajectory posterior counts over all trajectories in
/// ascending order, then row-normalizes. With a single trajectory this
/// coincides with [`reestimate_single`].
pub fn reestimate_multi(
    model: &ClMmmc,
    trajs: &[Trajectory],
    freeze: &FreezeMask,
    unreached: UnreachedPolicy,
) -> Result<ClMmmc> {
    Ok(reestimate_multi_with_loglik(model, trajs, freeze, unreached)?.0)
}

fn reestimate_multi_with_loglik(
    model: &ClMmmc,
    trajs: &[Trajectory],
    freeze: &FreezeMask,
    unreached: UnreachedPolicy,
) -> Result<(ClMmmc, f64)> {
    freeze.validate_for(model)?;
    if trajs.is_empty() {
        return Err(Error::InvalidConfig("no trajectories".into()));
    }
    for (d, traj) in trajs.iter().enumerate() {
        if traj.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "trajectory {} has fewer than 2 states",
                d + 1
            )));
        }
    }
    let (r, s, p) = (model.num_visible(), model.num_latent(), model.num_blocks());
    let count = trajs.len() as f64;

    let mut initial_count = vec![0usize; r];
    let mut pi_latent_num = vec![0.0; s];
    let mut visible_num = vec![vec![0.0; r * r]; s];
    let mut latent_num = vec![vec![0.0; s * s]; p];
    let mut from_count = vec![0usize; r];
    let mut total_loglik = 0.0;

    for traj in trajs {
        let states = traj.states();
        initial_count[states[0]] += 1;
        let cache = forward_backward_scaled(model, traj)?;
        total_loglik += cache.log_likelihood();
        let xi = compute_xi(&cache, model, traj);
        for i in 0..s {
            pi_latent_num[i] += xi[0].row_sum(i);
        }
        for t in 1..states.len() {
            let (from, to) = (states[t - 1], states[t]);
            let block = model.partition().block_of(from);
            from_count[from] += 1;
            let slice = &xi[t - 1];
            for i in 0..s {
                visible_num[i][from * r + to] += slice.row_sum(i);
                for j in 0..s {
                    latent_num[block][i * s + j] += slice.get(i, j);
                }
            }
        }
    }

    check_unreached(&from_count, unreached)?;

    let pi_visible = ProbVector::from_normalized(
        initial_count.iter().map(|&c| c as f64 / count).collect(),
    );
    let pi_latent = if freeze.pi_latent {
        model.pi_latent().clone()
    } else {
        ProbVector::from_normalized(pi_latent_num.iter().map(|&v| v / count).collect())
    };

    let mut visible_pages = Vec::with_capacity(s);
    for i in 0..s {
        if freeze.visible_pages.contains(&i) {
            visible_pages.push(model.visible_page(i).clone());
            continue;
        }
        let mut rows = Vec::with_capacity(r);
        for m in 0..r {
            if from_count[m] == 0 {
                rows.push(fallback_row(model.visible_page(i).row(m), r, unreached));
                continue;
            }
            let num = &visible_num[i][m * r..(m + 1) * r];
            let den: f64 = num.iter().sum();
            if den == 0.0 {
                rows.push(model.visible_page(i).row(m).clone());
            } else {
                rows.push(ProbVector::from_normalized(
                    num.iter().map(|&v| v / den).collect(),
                ));
            }
        }
        visible_pages.push(StochasticMatrix::from_prob_rows(rows));
    }

    let mut latent_pages = Vec::with_capacity(p);
    for l in 0..p {
        if freeze.latent_pages.contains(&l) {
            latent_pages.push(model.latent_page(l).clone());
            continue;
        }
        let block_reached = model.partition().blocks()[l]
            .iter()
            .any(|&m| from_count[m] > 0);
        let mut rows = Vec::with_capacity(s);
        for i in 0..s {
            if !block_reached {
                rows.push(fallback_row(model.latent_page(l).row(i), s, unreached));
                continue;
            }
            let num = &latent_num[l][i * s..(i + 1) * s];
            let den: f64 = num.iter().sum();
            if den == 0.0 {
                rows.push(model.latent_page(l).row(i).clone());
            } else {
                rows.push(ProbVector::from_normalized(
                    num.iter().map(|&v| v / den).collect(),
                ));
            }
        }
        latent_pages.push(StochasticMatrix::from_prob_rows(rows));
    }

    let updated = ClMmmc::new(
        pi_visible,
        pi_latent,
        visible_pages,
        latent_pages,
        model.partition().clone(),
    )?;
    Ok((updated, total_loglik))
}

fn check_unreached(from_count: &[usize], unreached: UnreachedPolicy) -> Result<()> {
    if unreached == UnreachedPolicy::Error {
        let missing: Vec<usize> = from_count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(m, _)| m + 1)
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnreachedStates { states: missing });
        }
    }
    Ok(())
}

fn fallback_row(current: &ProbVector, dim: usize, unreached: UnreachedPolicy) -> ProbVector {
    match unreached {
        // Error was already raised in check_unreached.
        UnreachedPolicy::Error | UnreachedPolicy::KeepRow => current.clone(),
        UnreachedPolicy::Uniform => ProbVector::uniform(dim),
    }
}

// ---------------------------------------------------------------------------
// EM driver
// ---------------------------------------------------------------------------

/// Run EM to convergence. With exactly one trajectory the single-trajectory
/// update is used; otherwise the multi-trajectory update. Stops when the
/// absolute log-likelihood improvement drops below `config.loglik_tol` or
/// after `config.max_iters` update steps.
pub fn em_run(initial: &ClMmmc, data: &[Trajectory], config: &EmConfig) -> Result<EmReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("no trajectories".into()));
    }
    for traj in data {
        check_trajectory(initial, traj)?;
    }

    let mut model = initial.clone();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        // One E+M pass also yields the current model's log-likelihood.
        let (next, loglik) = if data.len() == 1 {
            reestimate_single_with_loglik(&model, &data[0], &config.freeze, config.unreached)?
        } else {
            reestimate_multi_with_loglik(&model, data, &config.freeze, config.unreached)?
        };
        trace.push(loglik);
        if trace.len() >= 2 {
            let improvement = trace[trace.len() - 1] - trace[trace.len() - 2];
            if improvement < config.loglik_tol {
                converged = true;
                break;
            }
        }
        if iterations == config.max_iters {
            break;
        }
        model = next;
        iterations += 1;
    }
    Ok(EmReport {
        model,
        loglik_trace: trace,
        converged,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
