//! Brute-force joint-Gaussian reference for small models.
//!
//! For a linear-Gaussian state-space model, states and observations are
//! jointly Gaussian, so every quantity the filter, smoother, or forecaster
//! produces can be read off one explicit joint distribution by conditioning.
//! That is hopelessly slow beyond toy sizes (the guard below refuses
//! anything big), but it is an independent ground truth: it shares no code
//! path with the recursive implementations it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::error::{FdlmError, Result};
use crate::kernel::safe_cholesky;
use crate::statespace::{DiscreteModel, FdlmSpec};

const LN_2PI: f64 = 1.8378770664093453;

/// Largest joint dimension the oracle will build.
pub const MAX_JOINT_DIM: usize = 200;

/// Whether a coordinate of the joint distribution is a latent state or an
/// observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    State,
    Obs,
}

/// Identifies one scalar coordinate: which variable, at which time, at which
/// grid point. States exist for times `0..=T`, observations for `1..=T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLabel {
    pub kind: VarKind,
    pub time: usize,
    pub grid_index: usize,
}

/// An explicit multivariate Gaussian over labelled coordinates.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub labels: Vec<VarLabel>,
}

impl JointGaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, labels: Vec<VarLabel>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(FdlmError::DimensionMismatch(format!(
                "covariance is {}x{} for mean of length {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if labels.len() != n {
            return Err(FdlmError::DimensionMismatch(format!(
                "{} labels for {n} coordinates",
                labels.len()
            )));
        }
        Ok(Self { mean, cov, labels })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Position of a labelled coordinate, if present.
    pub fn coordinate(&self, kind: VarKind, time: usize, grid_index: usize) -> Option<usize> {
        let want = VarLabel {
            kind,
            time,
            grid_index,
        };
        self.labels.iter().position(|&l| l == want)
    }

    /// The marginal over a subset of coordinates, in the given order.
    pub fn marginal(&self, indices: &[usize]) -> Result<JointGaussian> {
        for &i in indices {
            if i >= self.dim() {
                return Err(FdlmError::DimensionMismatch(format!(
                    "coordinate {i} out of range for dimension {}",
                    self.dim()
                )));
            }
        }
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(indices.len(), indices.len(), |r, c| {
            self.cov[(indices[r], indices[c])]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        JointGaussian::new(mean, cov, labels)
    }

    /// Log density at a point.
    pub fn logpdf(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(FdlmError::DimensionMismatch(format!(
                "point has length {}, distribution has dimension {}",
                z.len(),
                self.dim()
            )));
        }
        let chol = safe_cholesky(&self.cov)?;
        let centered = z - &self.mean;
        let solved = chol.solve_vector(&centered);
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + chol.log_det() + centered.dot(&solved)))
    }
}

/// Build the exact joint distribution of `(X_0..X_T, Y_1..Y_T)` for a spec.
pub fn build_joint(spec: &FdlmSpec, t_len: usize) -> Result<JointGaussian> {
    build_joint_model(&DiscreteModel::from_spec(spec), t_len)
}

/// Build the joint distribution from a discretized model.
///
/// The construction is by linear composition: with the stacked source vector
/// `xi = (X_0, w_1..w_T, v_1..v_T)` — independent blocks with covariances
/// `C0`, `W`, and `V` — every state and observation is a known linear map of
/// `xi`, so the joint covariance is `M Sigma_xi M^T` for an explicitly
/// assembled `M`. No filtering recursion is involved anywhere.
pub fn build_joint_model(model: &DiscreteModel, t_len: usize) -> Result<JointGaussian> {
    let p = model.state_dim();
    let d = model.obs_dim();
    let joint_dim = (t_len + 1) * p + t_len * d;
    if joint_dim > MAX_JOINT_DIM {
        return Err(FdlmError::SizeGuard(format!(
            "joint dimension {joint_dim} exceeds the oracle limit {MAX_JOINT_DIM}"
        )));
    }

    let source_dim = p + t_len * p + t_len * d;

    // Mean of xi: m0 followed by zeros.
    let mut source_mean = DVector::zeros(source_dim);
    source_mean.rows_mut(0, p).copy_from(&model.m0);

    // Block-diagonal covariance of xi.
    let mut source_cov = DMatrix::zeros(source_dim, source_dim);
    source_cov.view_mut((0, 0), (p, p)).copy_from(&model.c0);
    for t in 0..t_len {
        let off = p + t * p;
        source_cov.view_mut((off, off), (p, p)).copy_from(&model.w);
    }
    let v_base = p + t_len * p;
    for t in 0..t_len {
        let off = v_base + t * d;
        source_cov.view_mut((off, off), (d, d)).copy_from(&model.v);
    }

    // Rows of M for X_t, built iteratively: X_0 reads xi directly, and
    // X_t = G X_{t-1} + w_t.
    let mut m = DMatrix::zeros(joint_dim, source_dim);
    let mut labels = Vec::with_capacity(joint_dim);
    let mut state_block = DMatrix::zeros(p, source_dim);
    state_block
        .view_mut((0, 0), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    m.view_mut((0, 0), (p, source_dim)).copy_from(&state_block);
    for i in 0..p {
        labels.push(VarLabel {
            kind: VarKind::State,
            time: 0,
            grid_index: i,
        });
    }
    for t in 1..=t_len {
        state_block = if model.g_is_identity {
            state_block
        } else {
            &model.g * state_block
        };
        let w_off = p + (t - 1) * p;
        for i in 0..p {
            state_block[(i, w_off + i)] += 1.0;
        }
        m.view_mut((t * p, 0), (p, source_dim))
            .copy_from(&state_block);
        for i in 0..p {
            labels.push(VarLabel {
                kind: VarKind::State,
                time: t,
                grid_index: i,
            });
        }
        // The matching observation row block: Y_t = F X_t + v_t.
        let mut obs_block = if model.f_is_identity {
            state_block.clone()
        } else {
            &model.f * &state_block
        };
        let v_off = v_base + (t - 1) * d;
        for j in 0..d {
            obs_block[(j, v_off + j)] += 1.0;
        }
        m.view_mut(((t_len + 1) * p + (t - 1) * d, 0), (d, source_dim))
            .copy_from(&obs_block);
    }
    for t in 1..=t_len {
        for j in 0..d {
            labels.push(VarLabel {
                kind: VarKind::Obs,
                time: t,
                grid_index: j,
            });
        }
    }

    let mean = &m * source_mean;
    let mut cov = &m * source_cov * m.transpose();
    // The product is symmetric in exact arithmetic; make it so in floats.
    for i in 0..joint_dim {
        for j in (i + 1)..joint_dim {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }

    JointGaussian::new(mean, cov, labels)
}

/// Condition a joint Gaussian on exact values for a subset of coordinates.
/// Returns the conditional distribution of the remaining coordinates, labels
/// preserved in their original order. Conditioning on nothing returns the
/// distribution unchanged.
pub fn condition(
    joint: &JointGaussian,
    observed: &[usize],
    values: &[f64],
) -> Result<JointGaussian> {
    if observed.len() != values.len() {
        return Err(FdlmError::DimensionMismatch(format!(
            "{} observed indices with {} values",
            observed.len(),
            values.len()
        )));
    }
    if observed.is_empty() {
        return Ok(joint.clone());
    }
    let n = joint.dim();
    let mut seen = vec![false; n];
    for &i in observed {
        if i >= n {
            return Err(FdlmError::DimensionMismatch(format!(
                "observed coordinate {i} out of range for dimension {n}"
            )));
        }
        if seen[i] {
            return Err(FdlmError::InvalidParameter(format!(
                "coordinate {i} observed twice"
            )));
        }
        seen[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();

    let nb = observed.len();
    let na = keep.len();
    let cov_bb = DMatrix::from_fn(nb, nb, |r, c| joint.cov[(observed[r], observed[c])]);
    let cov_ab = DMatrix::from_fn(na, nb, |r, c| joint.cov[(keep[r], observed[c])]);
    let mean_b = DVector::from_iterator(nb, observed.iter().map(|&i| joint.mean[i]));
    let mean_a = DVector::from_iterator(na, keep.iter().map(|&i| joint.mean[i]));
    let cov_aa = DMatrix::from_fn(na, na, |r, c| joint.cov[(keep[r], keep[c])]);

    let chol = safe_cholesky(&cov_bb)?;
    let resid = DVector::from_column_slice(values) - mean_b;
    let mean = mean_a + &cov_ab * chol.solve_vector(&resid);
    let mut cov = cov_aa - &cov_ab * chol.solve_matrix(&cov_ab.transpose());
    for i in 0..na {
        for j in (i + 1)..na {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    let labels = keep.iter().map(|&i| joint.labels[i]).collect();
    JointGaussian::new(mean, cov, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Grid, OuParams};
    use crate::statespace::local_level_spec;
    use approx::assert_abs_diff_eq;

    fn scalar_model() -> DiscreteModel {
        DiscreteModel::from_parts(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_joint_covariance_by_hand() {
        // (X0, X1, Y1) with unit prior and noise variances:
        // var X0 = 1, var X1 = 2, var Y1 = 3, cov(X0, X1) = cov(X0, Y1) = 1,
        // cov(X1, Y1) = 2.
        let jg = build_joint_model(&scalar_model(), 1).unwrap();
        assert_eq!(jg.dim(), 3);
        let expect = [[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 3.0]];
        for i in 0..3 {
            assert_abs_diff_eq!(jg.mean[i], 0.0);
            for j in 0..3 {
                assert_abs_diff_eq!(jg.cov[(i, j)], expect[i][j], epsilon = 1e-14);
            }
        }
        assert_eq!(jg.coordinate(VarKind::State, 0, 0), Some(0));
        assert_eq!(jg.coordinate(VarKind::State, 1, 0), Some(1));
        assert_eq!(jg.coordinate(VarKind::Obs, 1, 0), Some(2));
        assert_eq!(jg.coordinate(VarKind::Obs, 0, 0), None);
    }

    #[test]
    fn conditioning_reproduces_the_hand_filter_and_smoother() {
        // Condition (X0, X1) on Y1 = 2: X1 | Y1 is the filtered state
        // N(4/3, 2/3) and X0 | Y1 the smoothed initial state N(2/3, 2/3).
        let jg = build_joint_model(&scalar_model(), 1).unwrap();
        let y1 = jg.coordinate(VarKind::Obs, 1, 0).unwrap();
        let cond = condition(&jg, &[y1], &[2.0]).unwrap();
        assert_eq!(cond.dim(), 2);
        let x0 = cond.coordinate(VarKind::State, 0, 0).unwrap();
        let x1 = cond.coordinate(VarKind::State, 1, 0).unwrap();
        assert_abs_diff_eq!(cond.mean[x1], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cond.cov[(x1, x1)], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cond.mean[x0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cond.cov[(x0, x0)], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn conditioning_on_nothing_is_identity() {
        let jg = build_joint_model(&scalar_model(), 2).unwrap();
        let same = condition(&jg, &[], &[]).unwrap();
        assert_eq!(same.mean, jg.mean);
        assert_eq!(same.cov, jg.cov);
    }

    #[test]
    fn conditioning_is_order_independent() {
        // Conditioning on Y1 then Y2 must equal conditioning on both at
        // once.
        let jg = build_joint_model(&scalar_model(), 2).unwrap();
        let y1 = jg.coordinate(VarKind::Obs, 1, 0).unwrap();
        let y2 = jg.coordinate(VarKind::Obs, 2, 0).unwrap();
        let both = condition(&jg, &[y1, y2], &[1.5, -0.5]).unwrap();

        let first = condition(&jg, &[y1], &[1.5]).unwrap();
        let y2_again = first.coordinate(VarKind::Obs, 2, 0).unwrap();
        let sequential = condition(&first, &[y2_again], &[-0.5]).unwrap();

        assert_eq!(both.labels, sequential.labels);
        for i in 0..both.dim() {
            assert_abs_diff_eq!(both.mean[i], sequential.mean[i], epsilon = 1e-10);
            for j in 0..both.dim() {
                assert_abs_diff_eq!(both.cov[(i, j)], sequential.cov[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn scalar_pair_conditional_variance_shrinks_by_correlation() {
        // For a bivariate normal with correlation rho, conditioning on one
        // coordinate leaves variance (1 - rho^2) times the marginal.
        let jg = build_joint_model(&scalar_model(), 1).unwrap();
        let x1 = jg.coordinate(VarKind::State, 1, 0).unwrap();
        let y1 = jg.coordinate(VarKind::Obs, 1, 0).unwrap();
        let pair = jg.marginal(&[x1, y1]).unwrap();
        let rho2 = pair.cov[(0, 1)] * pair.cov[(0, 1)] / (pair.cov[(0, 0)] * pair.cov[(1, 1)]);
        let cond = condition(&pair, &[1], &[0.7]).unwrap();
        assert_abs_diff_eq!(
            cond.cov[(0, 0)],
            (1.0 - rho2) * pair.cov[(0, 0)],
            epsilon = 1e-12
        );
    }

    #[test]
    fn marginal_of_the_initial_state_is_the_prior() {
        let model = scalar_model();
        let jg = build_joint_model(&model, 2).unwrap();
        let x0 = jg.coordinate(VarKind::State, 0, 0).unwrap();
        let marg = jg.marginal(&[x0]).unwrap();
        assert_abs_diff_eq!(marg.mean[0], model.m0[0]);
        assert_abs_diff_eq!(marg.cov[(0, 0)], model.c0[(0, 0)]);
    }

    #[test]
    fn conditioning_validates_inputs() {
        let jg = build_joint_model(&scalar_model(), 1).unwrap();
        assert!(condition(&jg, &[0], &[]).is_err());
        assert!(condition(&jg, &[9], &[0.0]).is_err());
        assert!(condition(&jg, &[1, 1], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn logpdf_matches_the_scalar_density() {
        // The marginal of Y1 is N(0, 3).
        let jg = build_joint_model(&scalar_model(), 1).unwrap();
        let y1 = jg.coordinate(VarKind::Obs, 1, 0).unwrap();
        let marg = jg.marginal(&[y1]).unwrap();
        let at_mean = marg.logpdf(&DVector::from_element(1, 0.0)).unwrap();
        assert_abs_diff_eq!(
            at_mean,
            -0.5 * (2.0 * std::f64::consts::PI * 3.0).ln(),
            epsilon = 1e-14
        );
        let at_two = marg.logpdf(&DVector::from_element(1, 2.0)).unwrap();
        assert_abs_diff_eq!(at_two, at_mean - 0.5 * 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn size_guard_refuses_large_problems() {
        // Scalar model, T = 200: dimension 402 > 200.
        assert!(matches!(
            build_joint_model(&scalar_model(), 200),
            Err(FdlmError::SizeGuard(_))
        ));
    }

    #[test]
    fn joint_agrees_with_simulation_moments() {
        // Sample many trajectories and compare empirical second moments of
        // (X0, X1, X2, Y1, Y2) with the oracle covariance. This ties the
        // generator and the oracle to the same distribution without either
        // touching the other's code.
        let grid = Grid::uniform(1).unwrap();
        let spec = local_level_spec(
            grid,
            OuParams::new(2.0, 1.0).unwrap(),
            OuParams::new(1.0, 0.5).unwrap(),
            OuParams::new(0.6, 1.0).unwrap(),
            DVector::zeros(1),
        )
        .unwrap();
        let jg = build_joint(&spec, 2).unwrap();
        assert_eq!(jg.dim(), 5);

        let n = 30_000;
        let mut sum = DVector::zeros(5);
        let mut outer = DMatrix::zeros(5, 5);
        for seed in 0..n {
            let path = crate::statespace::simulate(&spec, 2, seed as u64).unwrap();
            let z = DVector::from_vec(vec![
                path.states.curves[(0, 0)],
                path.states.curves[(1, 0)],
                path.states.curves[(2, 0)],
                path.observations.curves[(0, 0)],
                path.observations.curves[(1, 0)],
            ]);
            sum += &z;
            outer += &z * z.transpose();
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        for i in 0..5 {
            assert_abs_diff_eq!(mean[i], jg.mean[i], epsilon = 0.05);
            for j in 0..5 {
                assert_abs_diff_eq!(cov[(i, j)], jg.cov[(i, j)], epsilon = 0.12);
            }
        }
    }
}
