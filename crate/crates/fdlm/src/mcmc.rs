//! Metropolis-within-Gibbs posterior sampling for the four kernel
//! parameters, plus chain diagnostics and posterior band extraction.
//!
//! The sampler alternates, in a fixed order: a full state-trajectory draw
//! (backward sampling given the current parameters), a conjugate
//! inverse-gamma update for each sigma-squared, and a random-walk Metropolis
//! step on each log-beta. One master RNG drives the whole run, so a seed
//! pins every draw.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{FdlmError, Result};
use crate::kalman::{filter_model, FfbsSampler};
use crate::kernel::{gram_matrix, safe_cholesky, Grid, OuParams};
use crate::statespace::{DiscreteModel, FdlmSpec, FunctionalSeries};

const LN_2PI: f64 = 1.8378770664093453;

/// Hyperparameters: inverse-gamma (shape, rate) on each sigma-squared and a
/// Gaussian on each log-beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub ig_shape_v: f64,
    pub ig_rate_v: f64,
    pub ig_shape_w: f64,
    pub ig_rate_w: f64,
    pub logbeta_mean_v: f64,
    pub logbeta_sd_v: f64,
    pub logbeta_mean_w: f64,
    pub logbeta_sd_w: f64,
}

impl Default for PriorSpec {
    /// Weak defaults: IG(2, 1e-4) keeps the prior mean near typical
    /// log-scale noise magnitudes without swamping the likelihood, and the
    /// wide Gaussian on log-beta is effectively flat over plausible
    /// correlation lengths while staying proper.
    fn default() -> Self {
        Self {
            ig_shape_v: 2.0,
            ig_rate_v: 1e-4,
            ig_shape_w: 2.0,
            ig_rate_w: 1e-4,
            logbeta_mean_v: 0.0,
            logbeta_sd_v: 10.0,
            logbeta_mean_w: 0.0,
            logbeta_sd_w: 10.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ig_shape_v", self.ig_shape_v),
            ("ig_rate_v", self.ig_rate_v),
            ("ig_shape_w", self.ig_shape_w),
            ("ig_rate_w", self.ig_rate_w),
            ("logbeta_sd_v", self.logbeta_sd_v),
            ("logbeta_sd_w", self.logbeta_sd_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FdlmError::InvalidConfig(format!(
                    "prior field {name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("logbeta_mean_v", self.logbeta_mean_v),
            ("logbeta_mean_w", self.logbeta_mean_w),
        ] {
            if !v.is_finite() {
                return Err(FdlmError::InvalidConfig(format!(
                    "prior field {name} must be finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Run-length and tuning knobs for one chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Random-walk standard deviation on log beta_V.
    pub mh_step_v: f64,
    /// Random-walk standard deviation on log beta_W.
    pub mh_step_w: f64,
    pub seed: u64,
    /// Keep the sampled state trajectories (needed for posterior bands).
    pub save_states: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 2_000,
            thin: 1,
            mh_step_v: 0.1,
            mh_step_w: 0.1,
            seed: 0,
            save_states: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(FdlmError::InvalidConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(FdlmError::InvalidConfig("thin must be at least 1".into()));
        }
        for (name, v) in [("mh_step_v", self.mh_step_v), ("mh_step_w", self.mh_step_w)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FdlmError::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Number of draws that survive burn-in and thinning.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Names of the four sampled parameters, in draw-column order.
pub const PARAMETER_NAMES: [&str; 4] = ["sigma2_v", "log_beta_v", "sigma2_w", "log_beta_w"];

/// Output of one chain: kept draws (columns in [`PARAMETER_NAMES`] order),
/// Metropolis acceptance rates for the two log-beta updates, and optionally
/// the sampled state trajectories.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub draws: DMatrix<f64>,
    /// (beta_V acceptance, beta_W acceptance), over all iterations.
    pub acceptance_rates: (f64, f64),
    /// One `(T + 1) x p` trajectory per kept draw when `save_states` was on.
    pub state_draws: Option<Vec<DMatrix<f64>>>,
}

/// Observation residuals `y_t - F x_t` for `t = 1..=T`, one row per time.
/// `states` has `T + 1` rows (trajectory including time 0).
pub fn observation_residuals(
    f: &DMatrix<f64>,
    curves: &DMatrix<f64>,
    states: &DMatrix<f64>,
) -> DMatrix<f64> {
    let t_len = curves.nrows();
    let mut out = DMatrix::zeros(t_len, curves.ncols());
    for t in 0..t_len {
        let x = states.row(t + 1).transpose();
        let signal = f * x;
        let resid = curves.row(t).transpose() - signal;
        out.row_mut(t).copy_from(&resid.transpose());
    }
    out
}

/// State increments `x_t - G x_{t-1}` for `t = 1..=T`, one row per time.
pub fn state_increments(g: &DMatrix<f64>, states: &DMatrix<f64>) -> DMatrix<f64> {
    let t_len = states.nrows() - 1;
    let p = states.ncols();
    let mut out = DMatrix::zeros(t_len, p);
    for t in 0..t_len {
        let prev = states.row(t).transpose();
        let inc = states.row(t + 1).transpose() - g * prev;
        out.row_mut(t).copy_from(&inc.transpose());
    }
    out
}

/// The inverse-gamma full conditional of sigma-squared given residuals and a
/// fixed beta, as a (shape, rate) pair.
///
/// With residual covariance `(sigma^2 / (2 beta)) K(beta)` where
/// `K(beta)_{ij} = exp(-beta |u_i - u_j|)`, the Gaussian likelihood is
/// proportional to `(sigma^2)^{-T d / 2} exp(-(beta / sigma^2) sum_t e_t^T
/// K^{-1} e_t)`, so an IG(a, b) prior updates to
/// IG(a + T d / 2, b + beta * sum_t e_t^T K^{-1} e_t).
pub fn sigma2_full_conditional(
    residuals: &DMatrix<f64>,
    beta: f64,
    grid: &Grid,
    prior_shape: f64,
    prior_rate: f64,
) -> Result<(f64, f64)> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(FdlmError::InvalidParameter(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    if !(prior_shape.is_finite() && prior_shape > 0.0)
        || !(prior_rate.is_finite() && prior_rate > 0.0)
    {
        return Err(FdlmError::InvalidParameter(
            "inverse-gamma shape and rate must be positive".into(),
        ));
    }
    let t_len = residuals.nrows();
    if t_len == 0 {
        return Ok((prior_shape, prior_rate));
    }
    let d = grid.len();
    if residuals.ncols() != d {
        return Err(FdlmError::DimensionMismatch(format!(
            "residuals have {} columns but the grid has {d} points",
            residuals.ncols()
        )));
    }

    // Correlation-shaped kernel matrix: unit diagonal, exponential decay.
    let pts = grid.points();
    let mut k = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (-beta * (pts[i] - pts[j]).abs()).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let chol = safe_cholesky(&k)?;
    let mut quad = 0.0;
    for t in 0..t_len {
        let e = residuals.row(t).transpose();
        quad += e.dot(&chol.solve_vector(&e));
    }

    Ok((
        prior_shape + (t_len * d) as f64 / 2.0,
        prior_rate + beta * quad,
    ))
}

fn draw_inverse_gamma(shape: f64, rate: f64, rng: &mut impl Rng) -> Result<f64> {
    // If X ~ Gamma(shape, scale = 1/rate) then 1/X is inverse-gamma with
    // the given rate.
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| FdlmError::InvalidParameter(format!("inverse-gamma({shape}, {rate}): {e}")))?;
    Ok(1.0 / gamma.sample(rng))
}

/// One conjugate draw of sigma-squared. Deterministic in `seed`.
pub fn gibbs_sigma2(
    residuals: &DMatrix<f64>,
    beta: f64,
    grid: &Grid,
    prior_shape: f64,
    prior_rate: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gibbs_sigma2_rng(residuals, beta, grid, prior_shape, prior_rate, &mut rng)
}

pub(crate) fn gibbs_sigma2_rng(
    residuals: &DMatrix<f64>,
    beta: f64,
    grid: &Grid,
    prior_shape: f64,
    prior_rate: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (shape, rate) = sigma2_full_conditional(residuals, beta, grid, prior_shape, prior_rate)?;
    draw_inverse_gamma(shape, rate, rng)
}

/// Unnormalized log posterior of log-beta given sigma-squared and residuals:
/// the Gaussian log-likelihood of the residual rows under
/// `OuParams(sigma2, exp(logbeta))` plus the Gaussian log prior on log-beta.
///
/// Public so stationarity tests can evaluate the exact target the Metropolis
/// step uses.
pub fn logbeta_log_target(
    logbeta: f64,
    sigma2: f64,
    residuals: &DMatrix<f64>,
    grid: &Grid,
    prior_mean: f64,
    prior_sd: f64,
) -> Result<f64> {
    let beta = logbeta.exp();
    let params = OuParams::new(sigma2, beta)?;
    let d = grid.len();
    if residuals.nrows() > 0 && residuals.ncols() != d {
        return Err(FdlmError::DimensionMismatch(format!(
            "residuals have {} columns but the grid has {d} points",
            residuals.ncols()
        )));
    }
    let gram = gram_matrix(&params, grid);
    let chol = safe_cholesky(&gram)?;
    let log_det = chol.log_det();
    let mut loglik = 0.0;
    for t in 0..residuals.nrows() {
        let e = residuals.row(t).transpose();
        loglik += -0.5 * (d as f64 * LN_2PI + log_det + e.dot(&chol.solve_vector(&e)));
    }
    let z = (logbeta - prior_mean) / prior_sd;
    let log_prior = -0.5 * z * z - prior_sd.ln() - 0.5 * LN_2PI;
    Ok(loglik + log_prior)
}

/// One random-walk Metropolis step on log-beta. Returns the (possibly
/// unchanged) value and whether the proposal was accepted. A proposal whose
/// covariance fails to factor even with jitter is rejected rather than
/// aborting the chain.
#[allow(clippy::too_many_arguments)]
pub fn mh_logbeta(
    current_logbeta: f64,
    sigma2: f64,
    residuals: &DMatrix<f64>,
    grid: &Grid,
    prior_mean: f64,
    prior_sd: f64,
    step: f64,
    seed: u64,
) -> Result<(f64, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mh_logbeta_rng(
        current_logbeta,
        sigma2,
        residuals,
        grid,
        prior_mean,
        prior_sd,
        step,
        &mut rng,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mh_logbeta_rng(
    current_logbeta: f64,
    sigma2: f64,
    residuals: &DMatrix<f64>,
    grid: &Grid,
    prior_mean: f64,
    prior_sd: f64,
    step: f64,
    rng: &mut impl Rng,
) -> Result<(f64, bool)> {
    if !(step.is_finite() && step > 0.0) {
        return Err(FdlmError::InvalidParameter(format!(
            "proposal step must be positive and finite, got {step}"
        )));
    }
    let current_target = logbeta_log_target(
        current_logbeta,
        sigma2,
        residuals,
        grid,
        prior_mean,
        prior_sd,
    )?;
    let normal = Normal::new(0.0, step)
        .map_err(|e| FdlmError::InvalidParameter(format!("proposal step {step}: {e}")))?;
    let proposal = current_logbeta + normal.sample(rng);
    // A proposal that cannot be evaluated (overflowing exp, singular Gram
    // matrix) is treated as having zero posterior mass.
    let proposal_target =
        match logbeta_log_target(proposal, sigma2, residuals, grid, prior_mean, prior_sd) {
            Ok(t) => t,
            Err(_) => return Ok((current_logbeta, false)),
        };
    let log_ratio = proposal_target - current_target;
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        Ok((proposal, true))
    } else {
        Ok((current_logbeta, false))
    }
}

/// Run one chain of the systematic-scan sampler.
///
/// `spec` fixes the grids, the operators, and the initial-state kernel; its
/// `v` and `w` entries serve as the chain's starting point for the four
/// sampled parameters. Scan order per iteration: state trajectory, sigma2_V,
/// log beta_V, sigma2_W, log beta_W.
pub fn run_sampler(
    spec: &FdlmSpec,
    data: &FunctionalSeries,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(FdlmError::InvalidParameter(
            "cannot sample from an empty series".into(),
        ));
    }
    if data.grid != spec.obs_grid {
        return Err(FdlmError::GridMismatch(
            "data grid differs from the model's observation grid".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let template = DiscreteModel::from_spec(spec);

    let mut sigma2_v = spec.v.sigma2;
    let mut logbeta_v = spec.v.beta.ln();
    let mut sigma2_w = spec.w.sigma2;
    let mut logbeta_w = spec.w.beta.ln();

    let kept = cfg.kept();
    let mut draws = DMatrix::zeros(kept, 4);
    let mut state_draws = if cfg.save_states {
        Some(Vec::with_capacity(kept))
    } else {
        None
    };
    let mut accept_v = 0usize;
    let mut accept_w = 0usize;
    let mut kept_row = 0usize;

    let abort = |iteration: usize, step: &'static str, source: FdlmError| FdlmError::SamplerAbort {
        iteration,
        step,
        source: Box::new(source),
    };

    for it in 0..cfg.iterations {
        // Rebuild the two sampled covariance blocks at the current
        // parameter values; everything else in the model is fixed.
        let mut model = template.clone();
        let v_params = OuParams::new(sigma2_v, logbeta_v.exp())
            .map_err(|e| abort(it, "observation kernel", e))?;
        let w_params =
            OuParams::new(sigma2_w, logbeta_w.exp()).map_err(|e| abort(it, "state kernel", e))?;
        model.v = gram_matrix(&v_params, &spec.obs_grid);
        model.w = gram_matrix(&w_params, &spec.state_grid);

        // 1. State trajectory given parameters.
        let output = filter_model(&model, &data.curves).map_err(|e| abort(it, "filter", e))?;
        let sampler =
            FfbsSampler::new(&model, &output).map_err(|e| abort(it, "backward sampler", e))?;
        let states = sampler.draw(&mut rng);

        // 2. sigma2_V from observation residuals.
        let resid_v = observation_residuals(&model.f, &data.curves, &states);
        sigma2_v = gibbs_sigma2_rng(
            &resid_v,
            logbeta_v.exp(),
            &spec.obs_grid,
            prior.ig_shape_v,
            prior.ig_rate_v,
            &mut rng,
        )
        .map_err(|e| abort(it, "sigma2_v update", e))?;

        // 3. log beta_V.
        let (lb_v, acc_v) = mh_logbeta_rng(
            logbeta_v,
            sigma2_v,
            &resid_v,
            &spec.obs_grid,
            prior.logbeta_mean_v,
            prior.logbeta_sd_v,
            cfg.mh_step_v,
            &mut rng,
        )
        .map_err(|e| abort(it, "beta_v update", e))?;
        logbeta_v = lb_v;
        accept_v += acc_v as usize;

        // 4. sigma2_W from state increments.
        let resid_w = state_increments(&model.g, &states);
        sigma2_w = gibbs_sigma2_rng(
            &resid_w,
            logbeta_w.exp(),
            &spec.state_grid,
            prior.ig_shape_w,
            prior.ig_rate_w,
            &mut rng,
        )
        .map_err(|e| abort(it, "sigma2_w update", e))?;

        // 5. log beta_W.
        let (lb_w, acc_w) = mh_logbeta_rng(
            logbeta_w,
            sigma2_w,
            &resid_w,
            &spec.state_grid,
            prior.logbeta_mean_w,
            prior.logbeta_sd_w,
            cfg.mh_step_w,
            &mut rng,
        )
        .map_err(|e| abort(it, "beta_w update", e))?;
        logbeta_w = lb_w;
        accept_w += acc_w as usize;

        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            draws[(kept_row, 0)] = sigma2_v;
            draws[(kept_row, 1)] = logbeta_v;
            draws[(kept_row, 2)] = sigma2_w;
            draws[(kept_row, 3)] = logbeta_w;
            kept_row += 1;
            if let Some(saved) = &mut state_draws {
                saved.push(states);
            }
        }
    }
    debug_assert_eq!(kept_row, kept);

    let n = cfg.iterations as f64;
    Ok(PosteriorDraws {
        draws,
        acceptance_rates: (accept_v as f64 / n, accept_w as f64 / n),
        state_draws,
    })
}

/// Minimum chain length for the autocorrelation-based error estimate.
pub const MIN_CHAIN_LEN: usize = 100;

/// Sokal's windowed estimate of the integrated autocorrelation time and the
/// resulting Monte Carlo standard error of the chain mean.
///
/// `tau = 1 + 2 sum_{k=1}^{M} rho_k` with the window `M` chosen as the
/// smallest value satisfying `M >= 6 tau(M)`; the error estimate is
/// `sd * sqrt(tau / N)`.
pub fn sokal_mcse(chain: &[f64]) -> Result<(f64, f64)> {
    let n = chain.len();
    if n > 0 && chain.iter().all(|&x| x == chain[0]) {
        return Err(FdlmError::DegenerateChain(format!(
            "all {n} values equal {}",
            chain.first().copied().unwrap_or(f64::NAN)
        )));
    }
    if n < MIN_CHAIN_LEN {
        return Err(FdlmError::ChainTooShort {
            len: n,
            min: MIN_CHAIN_LEN,
        });
    }

    let nf = n as f64;
    let mean = chain.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = chain.iter().map(|&x| x - mean).collect();
    let c0 = centered.iter().map(|&x| x * x).sum::<f64>() / nf;
    if c0 == 0.0 {
        return Err(FdlmError::DegenerateChain("zero variance".into()));
    }

    // Grow the window one lag at a time until it exceeds six estimated
    // autocorrelation times; past that point additional lags add mostly
    // noise. The window is capped at n - 1 by the loop itself.
    let window_constant = 6.0;
    let mut tau = 1.0;
    for m in 1..n {
        let mut ck = 0.0;
        for t in 0..(n - m) {
            ck += centered[t] * centered[t + m];
        }
        ck /= nf;
        tau += 2.0 * ck / c0;
        if (m as f64) >= window_constant * tau {
            break;
        }
    }

    let mcse = c0.sqrt() * (tau / nf).sqrt();
    Ok((mcse, tau))
}

/// Summary of one sampled parameter.
#[derive(Debug, Clone)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    /// Monte Carlo standard error; absent when the chain is degenerate or
    /// too short for the estimator.
    pub mcse: Option<f64>,
    pub tau_int: Option<f64>,
    pub q05: f64,
    pub q95: f64,
    pub degenerate: bool,
}

/// Per-parameter chain summaries, in [`PARAMETER_NAMES`] order.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub n: usize,
    pub parameters: Vec<ParameterSummary>,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Posterior means, error estimates, and 90% intervals for the four
/// parameters.
pub fn summarize(draws: &PosteriorDraws) -> Result<ChainSummary> {
    let n = draws.draws.nrows();
    if n == 0 {
        return Err(FdlmError::EmptyDraws);
    }
    let mut parameters = Vec::with_capacity(4);
    for (col, name) in PARAMETER_NAMES.iter().enumerate() {
        let chain: Vec<f64> = (0..n).map(|r| draws.draws[(r, col)]).collect();
        let mean = chain.iter().sum::<f64>() / n as f64;
        let degenerate = chain.iter().all(|&x| x == chain[0]);
        let (mcse, tau_int) = if degenerate {
            (None, None)
        } else {
            match sokal_mcse(&chain) {
                Ok((m, t)) => (Some(m), Some(t)),
                // A short chain still deserves a mean and quantiles.
                Err(FdlmError::ChainTooShort { .. }) => (None, None),
                Err(e) => return Err(e),
            }
        };
        let mut sorted = chain;
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        parameters.push(ParameterSummary {
            name: (*name).to_string(),
            mean,
            mcse,
            tau_int,
            q05: quantile(&sorted, 0.05),
            q95: quantile(&sorted, 0.95),
            degenerate,
        });
    }
    Ok(ChainSummary { n, parameters })
}

/// Pointwise posterior quantile surfaces of the sampled state trajectories.
#[derive(Debug, Clone)]
pub struct Bands {
    pub lower: DMatrix<f64>,
    pub median: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

/// Pointwise `(1 - level) / 2` and `1 - (1 - level) / 2` quantiles (plus the
/// median) of the kept state draws, per time and grid point.
pub fn posterior_bands(state_draws: &[DMatrix<f64>], level: f64) -> Result<Bands> {
    if state_draws.is_empty() {
        return Err(FdlmError::MissingStateDraws);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(FdlmError::InvalidParameter(format!(
            "band level must be in (0, 1), got {level}"
        )));
    }
    let shape = state_draws[0].shape();
    for (i, m) in state_draws.iter().enumerate() {
        if m.shape() != shape {
            return Err(FdlmError::DimensionMismatch(format!(
                "state draw {i} has shape {:?}, expected {shape:?}",
                m.shape()
            )));
        }
    }
    let (rows, cols) = shape;
    let q_lo = (1.0 - level) / 2.0;
    let q_hi = 1.0 - q_lo;
    let mut lower = DMatrix::zeros(rows, cols);
    let mut median = DMatrix::zeros(rows, cols);
    let mut upper = DMatrix::zeros(rows, cols);
    let mut cell = Vec::with_capacity(state_draws.len());
    for r in 0..rows {
        for c in 0..cols {
            cell.clear();
            cell.extend(state_draws.iter().map(|m| m[(r, c)]));
            cell.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            lower[(r, c)] = quantile(&cell, q_lo);
            median[(r, c)] = quantile(&cell, 0.5);
            upper[(r, c)] = quantile(&cell, q_hi);
        }
    }
    Ok(Bands {
        lower,
        median,
        upper,
    })
}

/// A rough starting kernel for data whose noise scale is unknown: unit
/// mean-reversion and a diffusion variance matched to the pooled variance of
/// first differences across time (fallback 1 when the data are constant).
pub fn initial_kernel_guess(data: &FunctionalSeries) -> OuParams {
    let t_len = data.len();
    let d = data.grid.len();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut count = 0usize;
    for t in 1..t_len {
        for j in 0..d {
            let diff = data.curves[(t, j)] - data.curves[(t - 1, j)];
            sum += diff;
            sumsq += diff * diff;
            count += 1;
        }
    }
    let sigma2 = if count > 1 {
        let mean = sum / count as f64;
        let var = sumsq / count as f64 - mean * mean;
        if var > 0.0 {
            var
        } else {
            1.0
        }
    } else {
        1.0
    };
    // With beta = 1 the marginal variance is sigma2 / 2 — half the
    // difference variance, splitting it between two consecutive times.
    OuParams::new(sigma2, 1.0).expect("positive by construction")
}
