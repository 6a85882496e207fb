//! Ornstein-Uhlenbeck covariance kernels, evaluation grids, and guarded
//! Cholesky factorization.
//!
//! Everything downstream (state-space construction, filtering, posterior
//! sampling) works with Gram matrices of the stationary OU kernel
//! `gamma(u, v) = sigma^2 / (2 beta) * exp(-beta |u - v|)` evaluated on a
//! finite grid in `[0, 1]`. This module owns that kernel, the grid type, and
//! the jittered Cholesky used everywhere a covariance must be factored.

use nalgebra::{DMatrix, DVector};

use crate::error::{FdlmError, Result};

/// Parameters of a stationary Ornstein-Uhlenbeck covariance kernel.
///
/// `sigma2` is the diffusion variance and `beta` the mean-reversion rate; the
/// stationary marginal variance is `sigma2 / (2 beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub sigma2: f64,
    pub beta: f64,
}

impl OuParams {
    pub fn new(sigma2: f64, beta: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(FdlmError::InvalidParameter(format!(
                "sigma2 must be positive and finite, got {sigma2}"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(FdlmError::InvalidParameter(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        Ok(Self { sigma2, beta })
    }

    /// Stationary variance `sigma2 / (2 beta)` — the kernel on the diagonal.
    pub fn marginal_variance(&self) -> f64 {
        self.sigma2 / (2.0 * self.beta)
    }
}

/// Evaluate the OU kernel at a pair of points.
pub fn ou_kernel(params: &OuParams, u: f64, v: f64) -> f64 {
    params.marginal_variance() * (-params.beta * (u - v).abs()).exp()
}

/// A strictly increasing finite grid of evaluation points in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Build a grid from explicit points; they must be finite, lie in
    /// `[0, 1]`, and increase strictly.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(FdlmError::InvalidParameter(
                "grid must contain at least one point".into(),
            ));
        }
        for (i, &p) in points.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(FdlmError::InvalidParameter(format!(
                    "grid point {i} = {p} is outside [0, 1]"
                )));
            }
            if i > 0 && points[i - 1] >= p {
                return Err(FdlmError::InvalidParameter(format!(
                    "grid points must be strictly increasing; points[{}] = {} >= points[{}] = {}",
                    i - 1,
                    points[i - 1],
                    i,
                    p
                )));
            }
        }
        Ok(Self { points })
    }

    /// `d` equally spaced points `(j - 1) / (d - 1)` for `j = 1..=d`; a
    /// single-point grid sits at 0.
    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(FdlmError::InvalidParameter(
                "uniform grid needs at least one point".into(),
            ));
        }
        if d == 1 {
            return Grid::new(vec![0.0]);
        }
        let pts = (0..d).map(|j| j as f64 / (d - 1) as f64).collect();
        Grid::new(pts)
    }

    /// The dyadic grid at resolution `level`: points `k / 2^level` for
    /// `k = 1..=2^level`. Each level's points are a subset of the next.
    pub fn dyadic(level: u32) -> Result<Self> {
        if level > 20 {
            return Err(FdlmError::InvalidParameter(format!(
                "dyadic level {level} is unreasonably fine"
            )));
        }
        let n = 1usize << level;
        let pts = (1..=n).map(|k| k as f64 / n as f64).collect();
        Grid::new(pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Position of `point` in the grid under exact floating-point equality,
    /// or `None`. Deliberately exact: subgrid selection must never
    /// interpolate silently.
    pub fn index_of(&self, point: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == point)
    }
}

/// A finite signed measure supported on finitely many points, stored as
/// `(location, weight)` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(FdlmError::InvalidParameter(
                "measure must have at least one atom".into(),
            ));
        }
        for (i, &(loc, w)) in atoms.iter().enumerate() {
            if !loc.is_finite() || !(0.0..=1.0).contains(&loc) {
                return Err(FdlmError::InvalidParameter(format!(
                    "atom {i} location {loc} is outside [0, 1]"
                )));
            }
            if !w.is_finite() {
                return Err(FdlmError::InvalidParameter(format!(
                    "atom {i} weight {w} is not finite"
                )));
            }
        }
        Ok(Self { atoms })
    }

    /// Unit point mass at `loc`.
    pub fn dirac(loc: f64) -> Result<Self> {
        Self::new(vec![(loc, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
}

/// Gram matrix of the kernel on a grid: entry `(i, j)` is
/// `gamma(points[i], points[j])`. Symmetric with constant diagonal equal to
/// the marginal variance.
pub fn gram_matrix(params: &OuParams, grid: &Grid) -> DMatrix<f64> {
    let pts = grid.points();
    let d = pts.len();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        // Fill the upper triangle and mirror so the result is exactly
        // symmetric, bit for bit.
        for j in i..d {
            let v = ou_kernel(params, pts[i], pts[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// The kernel's bilinear form on a pair of discrete measures:
/// `sum_i sum_j w_i v_j gamma(u_i, v_j)`.
pub fn covariance_functional(
    params: &OuParams,
    eta: &DiscreteMeasure,
    tau: &DiscreteMeasure,
) -> f64 {
    let mut acc = 0.0;
    for &(u, w) in eta.atoms() {
        for &(v, x) in tau.atoms() {
            acc += w * x * ou_kernel(params, u, v);
        }
    }
    acc
}

/// Evaluate `integral gamma(u, t) eta(du)` at each point of `grid` — the
/// kernel image of a measure, as a vector on the grid.
pub fn kernel_image(params: &OuParams, eta: &DiscreteMeasure, grid: &Grid) -> DVector<f64> {
    let pts = grid.points();
    DVector::from_iterator(
        pts.len(),
        pts.iter().map(|&t| {
            eta.atoms()
                .iter()
                .map(|&(u, w)| w * ou_kernel(params, u, t))
                .sum::<f64>()
        }),
    )
}

/// Relative jitter levels tried, in order, when a covariance fails to
/// factor. Each is multiplied by the mean diagonal of the matrix; the first
/// level that yields a successful Cholesky wins.
pub const DEFAULT_JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// A successful Cholesky factorization together with the diagonal jitter
/// (absolute, already scaled) that was needed to obtain it.
pub struct SafeCholesky {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    jitter: f64,
}

impl SafeCholesky {
    /// The absolute jitter added to the diagonal; zero when the matrix
    /// factored cleanly.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor `L` with `L L^T = A + jitter I`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `log det (A + jitter I)`, from the factor's diagonal.
    pub fn log_det(&self) -> f64 {
        self.chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|&d| d.ln())
            .sum::<f64>()
            * 2.0
    }
}

/// Factor a symmetric positive semi-definite matrix, escalating through the
/// default jitter ladder.
pub fn safe_cholesky(m: &DMatrix<f64>) -> Result<SafeCholesky> {
    safe_cholesky_with(m, &DEFAULT_JITTER_LADDER)
}

/// Factor with an explicit ladder of relative jitter levels. Levels are
/// scaled by the mean diagonal (or 1 if the diagonal is non-positive on
/// average) and tried in order; the applied absolute jitter is reported on
/// the result.
pub fn safe_cholesky_with(m: &DMatrix<f64>, ladder: &[f64]) -> Result<SafeCholesky> {
    if m.nrows() != m.ncols() {
        return Err(FdlmError::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let mean_diag = m.diagonal().iter().sum::<f64>() / n as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };

    for &level in ladder {
        let jitter = level * scale;
        let candidate = if jitter == 0.0 {
            m.clone()
        } else {
            let mut c = m.clone();
            for i in 0..n {
                c[(i, i)] += jitter;
            }
            c
        };
        if let Some(chol) = nalgebra::Cholesky::new(candidate) {
            return Ok(SafeCholesky { chol, jitter });
        }
    }
    Err(FdlmError::SingularOperator(format!(
        "{n}x{n} matrix failed Cholesky at all jitter levels (max relative {:.1e})",
        ladder.last().copied().unwrap_or(0.0)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_on_diagonal_is_marginal_variance() {
        let p = OuParams::new(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(ou_kernel(&p, 0.3, 0.3), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.marginal_variance(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_at_unit_distance() {
        // sigma2 = 2, beta = 1: gamma(0, 1) = exp(-1).
        let p = OuParams::new(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            ou_kernel(&p, 0.0, 1.0),
            0.36787944117144233,
            epsilon = 1e-16
        );
        // sigma2 = 1, beta = 1 halves it.
        let q = OuParams::new(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            ou_kernel(&q, 0.0, 1.0),
            0.18393972058572117,
            epsilon = 1e-16
        );
    }

    #[test]
    fn kernel_is_symmetric_and_decays() {
        let p = OuParams::new(1.7, 2.3).unwrap();
        for &(u, v) in &[(0.1, 0.9), (0.25, 0.3), (0.0, 0.5)] {
            assert_abs_diff_eq!(ou_kernel(&p, u, v), ou_kernel(&p, v, u), epsilon = 1e-16);
        }
        assert!(ou_kernel(&p, 0.0, 0.9) < ou_kernel(&p, 0.0, 0.1));
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(OuParams::new(0.0, 1.0).is_err());
        assert!(OuParams::new(-1.0, 1.0).is_err());
        assert!(OuParams::new(1.0, 0.0).is_err());
        assert!(OuParams::new(1.0, -2.0).is_err());
        assert!(OuParams::new(f64::NAN, 1.0).is_err());
        assert!(OuParams::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn uniform_grid_endpoints_and_spacing() {
        let g = Grid::uniform(5).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g1 = Grid::uniform(1).unwrap();
        assert_eq!(g1.points(), &[0.0]);
    }

    #[test]
    fn grid_rejects_disorder_and_range() {
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![0.5, 0.2]).is_err());
        assert!(Grid::new(vec![-0.1, 0.5]).is_err());
        assert!(Grid::new(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn dyadic_grids_nest() {
        // Every level-n point must appear, exactly, in level n+1.
        for level in 1..=5u32 {
            let coarse = Grid::dyadic(level).unwrap();
            let fine = Grid::dyadic(level + 1).unwrap();
            assert_eq!(coarse.len(), 1 << level);
            assert_abs_diff_eq!(coarse.points()[coarse.len() - 1], 1.0);
            for &p in coarse.points() {
                assert!(
                    fine.index_of(p).is_some(),
                    "point {p} missing at level {}",
                    level + 1
                );
            }
        }
        // Dyadic grids start at 2^-n, not 0.
        let g = Grid::dyadic(3).unwrap();
        assert_eq!(g.points()[0], 0.125);
        assert!(g.index_of(0.0).is_none());
    }

    #[test]
    fn index_of_is_exact() {
        let g = Grid::uniform(5).unwrap();
        assert_eq!(g.index_of(0.5), Some(2));
        assert_eq!(g.index_of(0.5 + 1e-12), None);
    }

    #[test]
    fn gram_matrix_matches_kernel() {
        let p = OuParams::new(2.0, 1.0).unwrap();
        let g = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let m = gram_matrix(&p, &g);
        assert_eq!(m.nrows(), 3);
        for i in 0..3 {
            assert_abs_diff_eq!(m[(i, i)], 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(m[(0, 2)], 0.36787944117144233, epsilon = 1e-16);
        assert_eq!(m[(0, 1)], m[(1, 0)]);
        // 3x3 OU Gram matrices are positive definite.
        assert!(nalgebra::Cholesky::new(m).is_some());
    }

    #[test]
    fn gram_matrix_is_bitwise_symmetric() {
        let p = OuParams::new(1.3, 0.7).unwrap();
        let g = Grid::uniform(17).unwrap();
        let m = gram_matrix(&p, &g);
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn covariance_functional_on_diracs_is_the_kernel() {
        let p = OuParams::new(2.0, 1.0).unwrap();
        let eta = DiscreteMeasure::dirac(0.0).unwrap();
        let tau = DiscreteMeasure::dirac(1.0).unwrap();
        assert_abs_diff_eq!(
            covariance_functional(&p, &eta, &tau),
            0.36787944117144233,
            epsilon = 1e-16
        );
    }

    #[test]
    fn covariance_functional_weighted_pair() {
        // eta = delta_0 + delta_1, tau = delta_0 + delta_1, sigma2 = 2,
        // beta = 1: value is 2 + 2 exp(-1).
        let p = OuParams::new(2.0, 1.0).unwrap();
        let eta = DiscreteMeasure::new(vec![(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let v = covariance_functional(&p, &eta, &eta);
        assert_abs_diff_eq!(v, 2.0 + 2.0 * 0.36787944117144233, epsilon = 1e-15);
        // And with opposite signs the cross terms cancel against the
        // diagonal: 2 - 2 exp(-1).
        let sgn = DiscreteMeasure::new(vec![(0.0, 1.0), (1.0, -1.0)]).unwrap();
        assert_abs_diff_eq!(
            covariance_functional(&p, &sgn, &sgn),
            1.2642411176571153,
            epsilon = 1e-15
        );
        // Self-pairing of any measure is nonnegative (the kernel is positive
        // semi-definite).
        assert!(covariance_functional(&p, &sgn, &sgn) >= 0.0);
    }

    #[test]
    fn covariance_functional_is_bilinear() {
        let p = OuParams::new(1.5, 0.8).unwrap();
        let a = DiscreteMeasure::new(vec![(0.1, 2.0), (0.7, -1.0)]).unwrap();
        let b = DiscreteMeasure::new(vec![(0.4, 0.5)]).unwrap();
        let scaled = DiscreteMeasure::new(vec![(0.1, 6.0), (0.7, -3.0)]).unwrap();
        assert_abs_diff_eq!(
            covariance_functional(&p, &scaled, &b),
            3.0 * covariance_functional(&p, &a, &b),
            epsilon = 1e-14
        );
    }

    #[test]
    fn kernel_image_matches_gram_column() {
        // The image of a Dirac at a grid point is the corresponding Gram
        // column.
        let p = OuParams::new(2.0, 1.3).unwrap();
        let g = Grid::uniform(9).unwrap();
        let m = gram_matrix(&p, &g);
        let eta = DiscreteMeasure::dirac(g.points()[3]).unwrap();
        let img = kernel_image(&p, &eta, &g);
        for i in 0..g.len() {
            assert_abs_diff_eq!(img[i], m[(i, 3)], epsilon = 1e-15);
        }
    }

    #[test]
    fn safe_cholesky_clean_matrix_needs_no_jitter() {
        let p = OuParams::new(2.0, 1.0).unwrap();
        let g = Grid::uniform(8).unwrap();
        let m = gram_matrix(&p, &g);
        let c = safe_cholesky(&m).unwrap();
        assert_eq!(c.jitter(), 0.0);
        let l = c.lower();
        let rebuilt = &l * l.transpose();
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!(rebuilt[(i, j)], m[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn safe_cholesky_solves_and_log_det() {
        let p = OuParams::new(1.0, 2.0).unwrap();
        let g = Grid::uniform(6).unwrap();
        let m = gram_matrix(&p, &g);
        let c = safe_cholesky(&m).unwrap();
        let b = DVector::from_fn(6, |i, _| (i as f64 + 1.0) * 0.3);
        let x = c.solve_vector(&b);
        let back = &m * &x;
        for i in 0..6 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-10);
        }
        // log det via LU agrees with the factor-based value.
        let lu = m.clone().lu();
        let det = lu.determinant();
        assert_abs_diff_eq!(c.log_det(), det.ln(), epsilon = 1e-10);
    }

    #[test]
    fn safe_cholesky_rescues_rank_deficiency() {
        // A rank-1 PSD matrix: xx^T. Plain Cholesky fails; the ladder must
        // find a level that factors, and report a positive jitter.
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &x * x.transpose();
        assert!(nalgebra::Cholesky::new(m.clone()).is_none());
        let c = safe_cholesky(&m).unwrap();
        assert!(c.jitter() > 0.0);
        // Jitter stays within the ladder's top rung times the mean diagonal.
        let mean_diag = m.diagonal().iter().sum::<f64>() / 3.0;
        assert!(c.jitter() <= 1e-6 * mean_diag * (1.0 + 1e-12));
    }

    #[test]
    fn safe_cholesky_gives_up_on_indefinite() {
        // Indefinite matrices stay indefinite under tiny diagonal jitter.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match safe_cholesky(&m) {
            Err(FdlmError::SingularOperator(_)) => {}
            Err(other) => panic!("expected SingularOperator, got {other}"),
            Ok(_) => panic!("indefinite matrix factored"),
        }
    }

    #[test]
    fn safe_cholesky_rejects_non_square() {
        let m = DMatrix::zeros(2, 3);
        assert!(matches!(
            safe_cholesky(&m),
            Err(FdlmError::DimensionMismatch(_))
        ));
    }
}
