//! Model specification and simulation for functional dynamic linear models
//! on grids.
//!
//! A model is specified in continuous terms — OU kernels for the initial
//! state, the state innovations, and the observation noise, plus
//! observation/evolution operators — and then discretized on a pair of grids
//! into plain matrices that the filter, the smoother, and the sampler
//! consume.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FdlmError, Result};
use crate::kernel::{gram_matrix, safe_cholesky, Grid, OuParams};

/// A time series of curves sampled on a common grid: row `t` of `curves`
/// holds the curve observed at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    pub grid: Grid,
    pub curves: DMatrix<f64>,
    /// Optional per-row labels (e.g. calendar dates) carried along from
    /// ingestion; purely descriptive.
    pub time_labels: Option<Vec<String>>,
}

impl FunctionalSeries {
    pub fn new(grid: Grid, curves: DMatrix<f64>, time_labels: Option<Vec<String>>) -> Result<Self> {
        if curves.ncols() != grid.len() {
            return Err(FdlmError::DimensionMismatch(format!(
                "curves have {} columns but the grid has {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if curves.iter().any(|v| !v.is_finite()) {
            return Err(FdlmError::InvalidParameter(
                "curves contain a non-finite value".into(),
            ));
        }
        if let Some(labels) = &time_labels {
            if labels.len() != curves.nrows() {
                return Err(FdlmError::DimensionMismatch(format!(
                    "{} time labels for {} curves",
                    labels.len(),
                    curves.nrows()
                )));
            }
        }
        Ok(Self {
            grid,
            curves,
            time_labels,
        })
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.curves.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.nrows() == 0
    }

    /// The curve at time index `t` as a column vector.
    pub fn curve(&self, t: usize) -> DVector<f64> {
        self.curves.row(t).transpose()
    }
}

/// Full specification of a functional DLM: grids, observation and evolution
/// operators, and the three OU kernels (initial state, state innovation,
/// observation noise).
#[derive(Debug, Clone)]
pub struct FdlmSpec {
    pub state_grid: Grid,
    pub obs_grid: Grid,
    /// Observation operator, `obs_grid.len() x state_grid.len()`.
    pub f: DMatrix<f64>,
    /// Evolution operator, square on the state grid.
    pub g: DMatrix<f64>,
    /// Initial state mean on the state grid.
    pub m0: DVector<f64>,
    /// Initial state covariance kernel.
    pub c0: OuParams,
    /// State innovation kernel.
    pub w: OuParams,
    /// Observation noise kernel.
    pub v: OuParams,
}

impl FdlmSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_grid: Grid,
        obs_grid: Grid,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        m0: DVector<f64>,
        c0: OuParams,
        w: OuParams,
        v: OuParams,
    ) -> Result<Self> {
        let p = state_grid.len();
        let d = obs_grid.len();
        if f.nrows() != d || f.ncols() != p {
            return Err(FdlmError::DimensionMismatch(format!(
                "observation operator is {}x{}, expected {d}x{p}",
                f.nrows(),
                f.ncols()
            )));
        }
        if g.nrows() != p || g.ncols() != p {
            return Err(FdlmError::DimensionMismatch(format!(
                "evolution operator is {}x{}, expected {p}x{p}",
                g.nrows(),
                g.ncols()
            )));
        }
        if m0.len() != p {
            return Err(FdlmError::DimensionMismatch(format!(
                "initial mean has length {}, expected {p}",
                m0.len()
            )));
        }
        Ok(Self {
            state_grid,
            obs_grid,
            f,
            g,
            m0,
            c0,
            w,
            v,
        })
    }

    /// State dimension (number of state-grid points).
    pub fn state_dim(&self) -> usize {
        self.state_grid.len()
    }

    /// Observation dimension (number of observation-grid points).
    pub fn obs_dim(&self) -> usize {
        self.obs_grid.len()
    }
}

/// The local-level model: state and observation share one grid, both
/// operators are the identity, and the state follows a random walk.
pub fn local_level_spec(
    grid: Grid,
    c0: OuParams,
    w: OuParams,
    v: OuParams,
    m0: DVector<f64>,
) -> Result<FdlmSpec> {
    let d = grid.len();
    FdlmSpec::new(
        grid.clone(),
        grid,
        DMatrix::identity(d, d),
        DMatrix::identity(d, d),
        m0,
        c0,
        w,
        v,
    )
}

fn is_identity(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            if m[(i, j)] != want {
                return false;
            }
        }
    }
    true
}

/// A model reduced to matrices on the grids: the form the filter and the
/// sampler actually work with.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub c0: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub(crate) f_is_identity: bool,
    pub(crate) g_is_identity: bool,
}

impl DiscreteModel {
    /// Discretize a spec: Gram matrices of the three kernels on their grids.
    pub fn from_spec(spec: &FdlmSpec) -> Self {
        let c0 = gram_matrix(&spec.c0, &spec.state_grid);
        let w = gram_matrix(&spec.w, &spec.state_grid);
        let v = gram_matrix(&spec.v, &spec.obs_grid);
        Self::from_parts(spec.f.clone(), spec.g.clone(), spec.m0.clone(), c0, w, v)
            .expect("spec dimensions were already validated")
    }

    /// Assemble a model from raw matrices. This is the hook for tests and
    /// for covariances that do not come from an OU kernel.
    pub fn from_parts(
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        m0: DVector<f64>,
        c0: DMatrix<f64>,
        w: DMatrix<f64>,
        v: DMatrix<f64>,
    ) -> Result<Self> {
        let p = g.nrows();
        let d = f.nrows();
        if g.ncols() != p {
            return Err(FdlmError::DimensionMismatch(format!(
                "evolution operator is {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        if f.ncols() != p {
            return Err(FdlmError::DimensionMismatch(format!(
                "observation operator has {} columns for state dimension {p}",
                f.ncols()
            )));
        }
        if m0.len() != p {
            return Err(FdlmError::DimensionMismatch(format!(
                "initial mean has length {}, expected {p}",
                m0.len()
            )));
        }
        for (name, m, n) in [("c0", &c0, p), ("w", &w, p), ("v", &v, d)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(FdlmError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let f_is_identity = is_identity(&f);
        let g_is_identity = is_identity(&g);
        Ok(Self {
            f,
            g,
            m0,
            c0,
            w,
            v,
            f_is_identity,
            g_is_identity,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.f.nrows()
    }
}

/// Restriction of observations onto a dyadic subgrid by exact point
/// selection. Construction fails unless every dyadic point at the requested
/// level is literally present in the source grid — restriction never
/// interpolates.
#[derive(Debug, Clone)]
pub struct DyadicOperator {
    level: u32,
    grid: Grid,
    indices: Vec<usize>,
}

impl DyadicOperator {
    pub fn new(source_grid: &Grid, level: u32) -> Result<Self> {
        let grid = Grid::dyadic(level)?;
        let mut indices = Vec::with_capacity(grid.len());
        for &q in grid.points() {
            match source_grid.index_of(q) {
                Some(i) => indices.push(i),
                None => {
                    return Err(FdlmError::GridMismatch(format!(
                        "dyadic point {q} (level {level}) is not a source grid point"
                    )))
                }
            }
        }
        Ok(Self {
            level,
            grid,
            indices,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// The dyadic grid this operator restricts onto.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Indices into the source grid, in dyadic order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Restrict a curve on the source grid to the dyadic points.
    pub fn apply_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| x[i]))
    }

    /// Restrict a whole series: values are selected, never changed, and the
    /// result lives on the dyadic grid.
    pub fn apply(&self, series: &FunctionalSeries) -> Result<FunctionalSeries> {
        if series.grid.len() <= *self.indices.iter().max().unwrap_or(&0) {
            return Err(FdlmError::GridMismatch(
                "series grid is smaller than the restriction's source grid".into(),
            ));
        }
        let t_len = series.len();
        let curves = DMatrix::from_fn(t_len, self.indices.len(), |t, j| {
            series.curves[(t, self.indices[j])]
        });
        FunctionalSeries::new(self.grid.clone(), curves, series.time_labels.clone())
    }

    /// Restrict a spec's observation side: keep the state untouched, select
    /// the matching rows of the observation operator, and move the
    /// observation grid (hence the noise Gram matrix) onto the dyadic
    /// points.
    pub fn restrict_spec(&self, spec: &FdlmSpec) -> Result<FdlmSpec> {
        // The operator must have been built against this spec's obs grid.
        for (&q, &i) in self.grid.points().iter().zip(&self.indices) {
            if spec.obs_grid.points().get(i) != Some(&q) {
                return Err(FdlmError::GridMismatch(format!(
                    "restriction was built for a different grid (point {q})"
                )));
            }
        }
        let f = DMatrix::from_fn(self.indices.len(), spec.state_dim(), |r, c| {
            spec.f[(self.indices[r], c)]
        });
        FdlmSpec::new(
            spec.state_grid.clone(),
            self.grid.clone(),
            f,
            spec.g.clone(),
            spec.m0.clone(),
            spec.c0,
            spec.w,
            spec.v,
        )
    }
}

/// Linearly interpolate a series onto a new grid. Target points must lie
/// inside the source grid's range — this routine interpolates, it never
/// extrapolates. Exact matches copy the value unchanged.
pub fn resample_linear(series: &FunctionalSeries, target: &Grid) -> Result<FunctionalSeries> {
    let src = series.grid.points();
    let lo = src[0];
    let hi = src[src.len() - 1];
    // For each target point, the bracketing source interval and weight.
    let mut plan = Vec::with_capacity(target.len());
    for &t in target.points() {
        if t < lo || t > hi {
            return Err(FdlmError::GridMismatch(format!(
                "target point {t} is outside the source range [{lo}, {hi}]"
            )));
        }
        // partition_point gives the first index with src[i] > t.
        let hi_idx = src.partition_point(|&p| p <= t);
        if src[hi_idx - 1] == t {
            plan.push((hi_idx - 1, hi_idx - 1, 0.0));
        } else {
            let a = hi_idx - 1;
            let b = hi_idx;
            let w = (t - src[a]) / (src[b] - src[a]);
            plan.push((a, b, w));
        }
    }
    let curves = DMatrix::from_fn(series.len(), target.len(), |t, j| {
        let (a, b, w) = plan[j];
        if a == b {
            series.curves[(t, a)]
        } else {
            (1.0 - w) * series.curves[(t, a)] + w * series.curves[(t, b)]
        }
    });
    FunctionalSeries::new(target.clone(), curves, series.time_labels.clone())
}

/// Draw `mean + L z` with `z` standard normal, using a precomputed lower
/// Cholesky factor.
pub(crate) fn draw_mvn(
    mean: &DVector<f64>,
    chol_lower: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let n = mean.len();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    mean + chol_lower * z
}

/// A simulated trajectory: latent states (times `0..=T`) and the
/// observations they generated (times `1..=T`).
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    /// `T + 1` rows on the state grid; row 0 is the initial state.
    pub states: FunctionalSeries,
    pub observations: FunctionalSeries,
}

/// Simulate `t_len` observations from the model. Deterministic in `seed`.
///
/// Draws happen in a fixed order — initial state, then for each time the
/// state innovation followed by the observation noise — so trajectories are
/// reproducible across runs and platforms.
pub fn simulate(spec: &FdlmSpec, t_len: usize, seed: u64) -> Result<SimulatedPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_rng(spec, t_len, &mut rng)
}

pub(crate) fn simulate_rng(
    spec: &FdlmSpec,
    t_len: usize,
    rng: &mut impl Rng,
) -> Result<SimulatedPath> {
    let model = DiscreteModel::from_spec(spec);
    let p = model.state_dim();
    let d = model.obs_dim();
    let l_c0 = safe_cholesky(&model.c0)?.lower();
    let l_w = safe_cholesky(&model.w)?.lower();
    let l_v = safe_cholesky(&model.v)?.lower();

    let mut states = DMatrix::zeros(t_len + 1, p);
    let mut obs = DMatrix::zeros(t_len, d);

    let mut x = draw_mvn(&model.m0, &l_c0, rng);
    states.row_mut(0).copy_from(&x.transpose());
    let zero_p = DVector::zeros(p);
    let zero_d = DVector::zeros(d);
    for t in 0..t_len {
        let drift = if model.g_is_identity {
            x.clone()
        } else {
            &model.g * &x
        };
        x = drift + draw_mvn(&zero_p, &l_w, rng);
        states.row_mut(t + 1).copy_from(&x.transpose());
        let signal = if model.f_is_identity {
            x.clone()
        } else {
            &model.f * &x
        };
        let y = signal + draw_mvn(&zero_d, &l_v, rng);
        obs.row_mut(t).copy_from(&y.transpose());
    }

    Ok(SimulatedPath {
        states: FunctionalSeries::new(spec.state_grid.clone(), states, None)?,
        observations: FunctionalSeries::new(spec.obs_grid.clone(), obs, None)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_spec(d: usize) -> FdlmSpec {
        let grid = Grid::uniform(d).unwrap();
        local_level_spec(
            grid,
            OuParams::new(2.0, 1.0).unwrap(),
            OuParams::new(0.5, 1.0).unwrap(),
            OuParams::new(0.3, 2.0).unwrap(),
            DVector::zeros(d),
        )
        .unwrap()
    }

    #[test]
    fn local_level_uses_identity_operators() {
        let spec = small_spec(4);
        assert!(is_identity(&spec.f));
        assert!(is_identity(&spec.g));
        let model = DiscreteModel::from_spec(&spec);
        assert!(model.f_is_identity);
        assert!(model.g_is_identity);
        assert_eq!(model.c0.nrows(), 4);
        assert_abs_diff_eq!(model.c0[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(model.w[(1, 1)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(model.v[(2, 2)], 0.075, epsilon = 1e-15);
    }

    #[test]
    fn single_point_grid_degenerates_to_a_scalar_model() {
        let spec = small_spec(1);
        assert_eq!(spec.state_dim(), 1);
        let model = DiscreteModel::from_spec(&spec);
        assert_eq!(model.c0.shape(), (1, 1));
        assert_abs_diff_eq!(model.c0[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spec_validates_dimensions() {
        let grid = Grid::uniform(3).unwrap();
        let c0 = OuParams::new(1.0, 1.0).unwrap();
        let bad_f = FdlmSpec::new(
            grid.clone(),
            grid.clone(),
            DMatrix::identity(2, 3),
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            c0,
            c0,
            c0,
        );
        assert!(matches!(bad_f, Err(FdlmError::DimensionMismatch(_))));
        let bad_m0 = FdlmSpec::new(
            grid.clone(),
            grid.clone(),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
            DVector::zeros(2),
            c0,
            c0,
            c0,
        );
        assert!(matches!(bad_m0, Err(FdlmError::DimensionMismatch(_))));
    }

    #[test]
    fn from_parts_checks_covariance_shapes() {
        let r = DiscreteModel::from_parts(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DMatrix::identity(3, 3),
            DMatrix::identity(2, 2),
        );
        assert!(matches!(r, Err(FdlmError::DimensionMismatch(_))));
    }

    #[test]
    fn series_rejects_bad_shapes_and_values() {
        let grid = Grid::uniform(3).unwrap();
        assert!(FunctionalSeries::new(grid.clone(), DMatrix::zeros(5, 2), None).is_err());
        let labels = Some(vec!["a".to_string()]);
        assert!(FunctionalSeries::new(grid.clone(), DMatrix::zeros(2, 3), labels).is_err());
        let mut curves = DMatrix::zeros(1, 3);
        curves[(0, 1)] = f64::NAN;
        assert!(FunctionalSeries::new(grid, curves, None).is_err());
    }

    #[test]
    fn simulate_shapes_and_determinism() {
        let spec = small_spec(5);
        let a = simulate(&spec, 7, 42).unwrap();
        assert_eq!(a.states.len(), 8);
        assert_eq!(a.states.grid, spec.state_grid);
        assert_eq!(a.observations.len(), 7);
        assert_eq!(a.observations.grid, spec.obs_grid);

        let b = simulate(&spec, 7, 42).unwrap();
        assert_eq!(a.states.curves, b.states.curves);
        assert_eq!(a.observations.curves, b.observations.curves);

        let c = simulate(&spec, 7, 43).unwrap();
        assert_ne!(a.states.curves, c.states.curves);
    }

    #[test]
    fn near_zero_innovation_freezes_the_random_walk() {
        let grid = Grid::uniform(3).unwrap();
        let spec = local_level_spec(
            grid,
            OuParams::new(2.0, 1.0).unwrap(),
            OuParams::new(1e-20, 1.0).unwrap(),
            OuParams::new(0.3, 1.0).unwrap(),
            DVector::zeros(3),
        )
        .unwrap();
        let path = simulate(&spec, 50, 1).unwrap();
        let mut max_increment: f64 = 0.0;
        for t in 1..=50 {
            for j in 0..3 {
                let inc = (path.states.curves[(t, j)] - path.states.curves[(t - 1, j)]).abs();
                max_increment = max_increment.max(inc);
            }
        }
        assert!(max_increment < 1e-8, "max increment {max_increment}");
    }

    #[test]
    fn observation_noise_variance_matches_the_kernel() {
        // With d = 1, Y_t - X_t is iid N(0, sigma2 / (2 beta)); the sample
        // variance over T = 5000 draws should land within 5%.
        let grid = Grid::uniform(1).unwrap();
        let v = OuParams::new(0.8, 2.0).unwrap();
        let spec = local_level_spec(
            grid,
            OuParams::new(2.0, 1.0).unwrap(),
            OuParams::new(0.5, 1.0).unwrap(),
            v,
            DVector::zeros(1),
        )
        .unwrap();
        let t_len = 5000;
        let path = simulate(&spec, t_len, 7).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for t in 0..t_len {
            let resid = path.observations.curves[(t, 0)] - path.states.curves[(t + 1, 0)];
            sum += resid;
            sumsq += resid * resid;
        }
        let mean = sum / t_len as f64;
        let var = sumsq / t_len as f64 - mean * mean;
        let truth = v.marginal_variance();
        assert!(
            (var - truth).abs() / truth < 0.05,
            "sample variance {var}, kernel variance {truth}"
        );
    }

    #[test]
    fn simulated_initial_state_has_the_right_moments() {
        // Average many independent X0 draws; the sample mean should approach
        // m0 and the sample variance the kernel's marginal variance.
        let grid = Grid::uniform(3).unwrap();
        let m0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let spec = local_level_spec(
            grid,
            OuParams::new(2.0, 1.0).unwrap(),
            OuParams::new(0.1, 1.0).unwrap(),
            OuParams::new(0.1, 1.0).unwrap(),
            m0.clone(),
        )
        .unwrap();
        let n = 4000;
        let mut mean = DVector::zeros(3);
        let mut sq = DVector::zeros(3);
        for seed in 0..n {
            let path = simulate(&spec, 0, seed as u64).unwrap();
            let x0 = path.states.curve(0);
            mean += &x0;
            sq += x0.component_mul(&x0);
        }
        mean /= n as f64;
        sq /= n as f64;
        for i in 0..3 {
            assert_abs_diff_eq!(mean[i], m0[i], epsilon = 0.08);
            let var = sq[i] - mean[i] * mean[i];
            assert_abs_diff_eq!(var, 1.0, epsilon = 0.1);
        }
    }

    #[test]
    fn dyadic_operator_selects_exactly() {
        // A 33-point uniform grid contains every dyadic grid up to level 5.
        let grid = Grid::uniform(33).unwrap();
        for level in 1..=5u32 {
            let op = DyadicOperator::new(&grid, level).unwrap();
            assert_eq!(op.grid().len(), 1 << level);
            for (&q, &i) in op.grid().points().iter().zip(op.indices()) {
                assert_eq!(grid.points()[i], q);
            }
        }
        // Level 6 needs 1/64, which a 33-point grid does not contain.
        assert!(matches!(
            DyadicOperator::new(&grid, 6),
            Err(FdlmError::GridMismatch(_))
        ));
    }

    #[test]
    fn level_one_restriction_on_a_quarter_grid() {
        let grid = Grid::new(vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let op = DyadicOperator::new(&grid, 1).unwrap();
        assert_eq!(op.grid().points(), &[0.5, 1.0]);
        assert_eq!(op.indices(), &[1, 3]);
    }

    #[test]
    fn restriction_onto_the_whole_grid_is_the_identity() {
        let grid = Grid::dyadic(3).unwrap();
        let op = DyadicOperator::new(&grid, 3).unwrap();
        let curves = DMatrix::from_fn(2, 8, |t, j| (t * 8 + j) as f64);
        let series = FunctionalSeries::new(grid, curves.clone(), None).unwrap();
        let out = op.apply(&series).unwrap();
        assert_eq!(out.curves, curves);
    }

    #[test]
    fn nested_restrictions_compose() {
        // Restricting to level n+1 and then to level n must equal
        // restricting to level n directly.
        let grid = Grid::uniform(33).unwrap();
        let curves = DMatrix::from_fn(3, 33, |t, j| ((t + 1) * (j + 2)) as f64 * 0.1);
        let series = FunctionalSeries::new(grid.clone(), curves, None).unwrap();
        for level in 1..=4u32 {
            let fine = DyadicOperator::new(&grid, level + 1).unwrap();
            let restricted = fine.apply(&series).unwrap();
            let coarse_of_fine = DyadicOperator::new(fine.grid(), level)
                .unwrap()
                .apply(&restricted)
                .unwrap();
            let direct = DyadicOperator::new(&grid, level)
                .unwrap()
                .apply(&series)
                .unwrap();
            assert_eq!(coarse_of_fine.curves, direct.curves);
        }
    }

    #[test]
    fn dyadic_operator_restricts_series_and_spec() {
        let grid = Grid::uniform(5).unwrap();
        let spec = small_spec(5);
        let op = DyadicOperator::new(&grid, 1).unwrap();
        assert_eq!(op.grid().points(), &[0.5, 1.0]);
        assert_eq!(op.indices(), &[2, 4]);

        let curves = DMatrix::from_row_slice(
            2,
            5,
            &[
                0.0, 1.0, 2.0, 3.0, 4.0, //
                5.0, 6.0, 7.0, 8.0, 9.0,
            ],
        );
        let series = FunctionalSeries::new(grid, curves, None).unwrap();
        let restricted = op.apply(&series).unwrap();
        assert_eq!(
            restricted.curves,
            DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 7.0, 9.0])
        );

        let sub = op.restrict_spec(&spec).unwrap();
        assert_eq!(sub.obs_dim(), 2);
        assert_eq!(sub.state_dim(), 5);
        // Selected rows of the identity pick out coordinates 2 and 4.
        assert_eq!(sub.f[(0, 2)], 1.0);
        assert_eq!(sub.f[(1, 4)], 1.0);
        assert_eq!(sub.f.row(0).sum(), 1.0);
        // Observation noise is re-discretized on the subgrid, consistent
        // with selecting from the full Gram matrix.
        let full = DiscreteModel::from_spec(&spec);
        let small = DiscreteModel::from_spec(&sub);
        for (a, &i) in op.indices().iter().enumerate() {
            for (b, &j) in op.indices().iter().enumerate() {
                assert_abs_diff_eq!(small.v[(a, b)], full.v[(i, j)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn resample_copies_exact_points_and_interpolates_between() {
        let grid = Grid::uniform(3).unwrap(); // 0, 0.5, 1
        let curves = DMatrix::from_row_slice(1, 3, &[2.0, 4.0, 8.0]);
        let series = FunctionalSeries::new(grid, curves, None).unwrap();

        let same = resample_linear(&series, &series.grid).unwrap();
        assert_eq!(same.curves, series.curves);

        let target = Grid::new(vec![0.25, 0.5, 0.75]).unwrap();
        let out = resample_linear(&series, &target).unwrap();
        assert_abs_diff_eq!(out.curves[(0, 0)], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.curves[(0, 1)], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.curves[(0, 2)], 6.0, epsilon = 1e-15);
    }

    #[test]
    fn resample_refuses_extrapolation() {
        let grid = Grid::new(vec![0.25, 0.75]).unwrap();
        let series =
            FunctionalSeries::new(grid, DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), None).unwrap();
        let target = Grid::new(vec![0.1]).unwrap();
        assert!(matches!(
            resample_linear(&series, &target),
            Err(FdlmError::GridMismatch(_))
        ));
    }
}
