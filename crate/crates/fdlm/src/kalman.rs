//! Kalman filtering, fixed-interval smoothing, backward sampling, and
//! forecasting for the discretized model.
//!
//! All innovation-covariance solves go through the guarded Cholesky in
//! [`crate::kernel`]; the inverse is never formed explicitly. Covariance
//! recursions are re-symmetrized at every step so roundoff cannot
//! accumulate into asymmetry.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FdlmError, Result};
use crate::kernel::safe_cholesky;
use crate::statespace::{draw_mvn, DiscreteModel, FdlmSpec, FunctionalSeries};

const LN_2PI: f64 = 1.8378770664093453;

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// One filtering step: the predictive and filtered moments at a single time,
/// plus that time's log-likelihood contribution.
#[derive(Debug, Clone)]
pub struct FilterStep {
    /// One-step-ahead state mean.
    pub state_pred_mean: DVector<f64>,
    /// One-step-ahead state covariance.
    pub state_pred_cov: DMatrix<f64>,
    /// One-step-ahead observation mean.
    pub obs_pred_mean: DVector<f64>,
    /// One-step-ahead observation covariance (the innovation covariance).
    pub obs_pred_cov: DMatrix<f64>,
    /// State mean after conditioning on the observation.
    pub filtered_mean: DVector<f64>,
    /// State covariance after conditioning on the observation.
    pub filtered_cov: DMatrix<f64>,
    /// This observation's contribution to the log-likelihood.
    pub loglik_increment: f64,
}

/// The full filtering pass: one step per observation, times `1..=T`.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub steps: Vec<FilterStep>,
    pub log_likelihood: f64,
}

/// Smoothed state moments at one time point.
#[derive(Debug, Clone)]
pub struct SmoothStep {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Run the Kalman filter on a series observed on the spec's observation
/// grid.
pub fn filter(spec: &FdlmSpec, data: &FunctionalSeries) -> Result<FilterOutput> {
    if data.grid != spec.obs_grid {
        return Err(FdlmError::GridMismatch(
            "data grid differs from the model's observation grid".into(),
        ));
    }
    let model = DiscreteModel::from_spec(spec);
    filter_model(&model, &data.curves)
}

/// Filter against a discretized model directly. `curves` has one row per
/// time point.
pub fn filter_model(model: &DiscreteModel, curves: &DMatrix<f64>) -> Result<FilterOutput> {
    let d = model.obs_dim();
    if curves.ncols() != d {
        return Err(FdlmError::DimensionMismatch(format!(
            "observations have {} columns, model expects {d}",
            curves.ncols()
        )));
    }

    let t_len = curves.nrows();
    let mut steps = Vec::with_capacity(t_len);
    let mut log_likelihood = 0.0;
    let mut mean = model.m0.clone();
    let mut cov = model.c0.clone();

    for t in 0..t_len {
        // Propagate through the evolution operator.
        let state_pred_mean = if model.g_is_identity {
            mean.clone()
        } else {
            &model.g * &mean
        };
        let mut state_pred_cov = if model.g_is_identity {
            &cov + &model.w
        } else {
            &model.g * &cov * model.g.transpose() + &model.w
        };
        symmetrize(&mut state_pred_cov);

        // Predict the observation.
        let obs_pred_mean = if model.f_is_identity {
            state_pred_mean.clone()
        } else {
            &model.f * &state_pred_mean
        };
        // cross = F R, the observation/state cross block; reused for both
        // the state update and the covariance update.
        let cross = if model.f_is_identity {
            state_pred_cov.clone()
        } else {
            &model.f * &state_pred_cov
        };
        let mut obs_pred_cov = if model.f_is_identity {
            &cross + &model.v
        } else {
            &cross * model.f.transpose() + &model.v
        };
        symmetrize(&mut obs_pred_cov);

        let chol = safe_cholesky(&obs_pred_cov)?;
        let innovation = curves.row(t).transpose() - &obs_pred_mean;
        let solved_innovation = chol.solve_vector(&innovation);
        let solved_cross = chol.solve_matrix(&cross);

        let filtered_mean = &state_pred_mean + cross.transpose() * &solved_innovation;
        let mut filtered_cov = &state_pred_cov - cross.transpose() * &solved_cross;
        symmetrize(&mut filtered_cov);

        let loglik_increment =
            -0.5 * (d as f64 * LN_2PI + chol.log_det() + innovation.dot(&solved_innovation));
        log_likelihood += loglik_increment;

        mean = filtered_mean.clone();
        cov = filtered_cov.clone();
        steps.push(FilterStep {
            state_pred_mean,
            state_pred_cov,
            obs_pred_mean,
            obs_pred_cov,
            filtered_mean,
            filtered_cov,
            loglik_increment,
        });
    }

    Ok(FilterOutput {
        steps,
        log_likelihood,
    })
}

/// Fixed-interval smoothing against a spec.
pub fn smooth(spec: &FdlmSpec, output: &FilterOutput) -> Result<Vec<SmoothStep>> {
    smooth_model(&DiscreteModel::from_spec(spec), output)
}

/// Fixed-interval smoothing. Returns moments for times `0..=T`: index 0 is
/// the initial state conditioned on everything observed.
pub fn smooth_model(model: &DiscreteModel, output: &FilterOutput) -> Result<Vec<SmoothStep>> {
    let t_len = output.steps.len();
    let mut out = vec![
        SmoothStep {
            mean: DVector::zeros(model.state_dim()),
            cov: DMatrix::zeros(model.state_dim(), model.state_dim()),
        };
        t_len + 1
    ];

    if t_len == 0 {
        out[0] = SmoothStep {
            mean: model.m0.clone(),
            cov: model.c0.clone(),
        };
        return Ok(out);
    }

    let last = &output.steps[t_len - 1];
    out[t_len] = SmoothStep {
        mean: last.filtered_mean.clone(),
        cov: last.filtered_cov.clone(),
    };

    for t in (0..t_len).rev() {
        // Filtered moments at time t: step t-1 of the output, or the prior
        // for t = 0.
        let (mean_t, cov_t) = if t == 0 {
            (&model.m0, &model.c0)
        } else {
            let s = &output.steps[t - 1];
            (&s.filtered_mean, &s.filtered_cov)
        };
        let next = &output.steps[t];
        let gain = backward_gain(model, cov_t, &next.state_pred_cov)?;
        let mean = mean_t + &gain * (&out[t + 1].mean - &next.state_pred_mean);
        let mut cov = cov_t - &gain * (&next.state_pred_cov - &out[t + 1].cov) * gain.transpose();
        symmetrize(&mut cov);
        out[t] = SmoothStep { mean, cov };
    }
    Ok(out)
}

/// The smoothing gain `C_t G^T R_{t+1}^{-1}`, computed by solving against
/// the predictive covariance rather than inverting it.
fn backward_gain(
    model: &DiscreteModel,
    filtered_cov: &DMatrix<f64>,
    pred_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let chol = safe_cholesky(pred_cov)?;
    let gc = if model.g_is_identity {
        filtered_cov.clone()
    } else {
        &model.g * filtered_cov
    };
    // R^{-1} (G C) is the transpose of the gain.
    Ok(chol.solve_matrix(&gc).transpose())
}

struct BackwardStep {
    filtered_mean: DVector<f64>,
    gain: DMatrix<f64>,
    pred_mean: DVector<f64>,
    noise_chol: DMatrix<f64>,
}

/// Backward sampler for full state trajectories given the filtering pass.
///
/// Construction does all the per-time linear algebra once; each
/// [`draw`](FfbsSampler::draw) then only needs Gaussian draws and
/// matrix-vector products, which is what makes trajectory sampling inside a
/// long MCMC run affordable.
pub struct FfbsSampler {
    backward: Vec<BackwardStep>,
    last_mean: DVector<f64>,
    last_chol: DMatrix<f64>,
    state_dim: usize,
}

impl FfbsSampler {
    pub fn new(model: &DiscreteModel, output: &FilterOutput) -> Result<Self> {
        let t_len = output.steps.len();
        let p = model.state_dim();
        let (last_mean, last_chol) = if t_len == 0 {
            (model.m0.clone(), safe_cholesky(&model.c0)?.lower())
        } else {
            let last = &output.steps[t_len - 1];
            (
                last.filtered_mean.clone(),
                safe_cholesky(&last.filtered_cov)?.lower(),
            )
        };

        let mut backward = Vec::with_capacity(t_len);
        // Steps are stored for t = T-1 down to 0.
        for t in (0..t_len).rev() {
            let (mean_t, cov_t) = if t == 0 {
                (&model.m0, &model.c0)
            } else {
                let s = &output.steps[t - 1];
                (&s.filtered_mean, &s.filtered_cov)
            };
            let next = &output.steps[t];
            let gain = backward_gain(model, cov_t, &next.state_pred_cov)?;
            let gc = if model.g_is_identity {
                cov_t.clone()
            } else {
                &model.g * cov_t
            };
            let mut noise_cov = cov_t - &gain * gc;
            symmetrize(&mut noise_cov);
            let noise_chol = safe_cholesky(&noise_cov)?.lower();
            backward.push(BackwardStep {
                filtered_mean: mean_t.clone(),
                gain,
                pred_mean: next.state_pred_mean.clone(),
                noise_chol,
            });
        }

        Ok(Self {
            backward,
            last_mean,
            last_chol,
            state_dim: p,
        })
    }

    /// Sample one trajectory `x_0..=x_T`; row `t` of the result is the state
    /// at time `t`.
    pub fn draw(&self, rng: &mut impl Rng) -> DMatrix<f64> {
        let t_len = self.backward.len();
        let mut states = DMatrix::zeros(t_len + 1, self.state_dim);
        let mut x = draw_mvn(&self.last_mean, &self.last_chol, rng);
        states.row_mut(t_len).copy_from(&x.transpose());
        for (k, step) in self.backward.iter().enumerate() {
            let t = t_len - 1 - k;
            let mean = &step.filtered_mean + &step.gain * (&x - &step.pred_mean);
            x = draw_mvn(&mean, &step.noise_chol, rng);
            states.row_mut(t).copy_from(&x.transpose());
        }
        states
    }
}

/// One-shot trajectory draw: filter output in, a sampled `(T + 1) x p` state
/// path out. Deterministic in `seed`.
pub fn ffbs(spec: &FdlmSpec, output: &FilterOutput, seed: u64) -> Result<DMatrix<f64>> {
    let model = DiscreteModel::from_spec(spec);
    let sampler = FfbsSampler::new(&model, output)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(&mut rng))
}

/// Observation-space forecast at one future time.
#[derive(Debug, Clone)]
pub struct ForecastStep {
    pub obs_mean: DVector<f64>,
    pub obs_cov: DMatrix<f64>,
}

/// Forecast `horizon` steps past the last filtered time: propagate the state
/// moments with no further conditioning and map each step through the
/// observation operator.
pub fn forecast(spec: &FdlmSpec, last: &FilterStep, horizon: usize) -> Result<Vec<ForecastStep>> {
    forecast_model(&DiscreteModel::from_spec(spec), last, horizon)
}

/// Forecast from a discretized model and the last filtering step.
pub fn forecast_model(
    model: &DiscreteModel,
    last: &FilterStep,
    horizon: usize,
) -> Result<Vec<ForecastStep>> {
    if last.filtered_mean.len() != model.state_dim() {
        return Err(FdlmError::DimensionMismatch(format!(
            "filter step has state dimension {}, model has {}",
            last.filtered_mean.len(),
            model.state_dim()
        )));
    }
    let mut mean = last.filtered_mean.clone();
    let mut cov = last.filtered_cov.clone();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        mean = if model.g_is_identity {
            mean
        } else {
            &model.g * &mean
        };
        cov = if model.g_is_identity {
            &cov + &model.w
        } else {
            &model.g * &cov * model.g.transpose() + &model.w
        };
        symmetrize(&mut cov);
        let obs_mean = if model.f_is_identity {
            mean.clone()
        } else {
            &model.f * &mean
        };
        let mut obs_cov = if model.f_is_identity {
            &cov + &model.v
        } else {
            &model.f * &cov * model.f.transpose() + &model.v
        };
        symmetrize(&mut obs_cov);
        out.push(ForecastStep { obs_mean, obs_cov });
    }
    Ok(out)
}
