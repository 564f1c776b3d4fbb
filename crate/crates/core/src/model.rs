//! Shared domain types: grids, trajectories, singular triplets, and the
//! design-to-field parametrization used by every other module.

use ndarray::{Array1, Array2};

use crate::error::{McfiError, Result};

/// Spatial dimension of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    One,
    Two,
}

/// Uniform structured grid on `[-1, 1]` (times `[-1, 1]` in 2D).
#[derive(Debug, Clone)]
pub struct Grid {
    pub dim: Dim,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    /// 1D grid with `n` uniformly spaced nodes on `[-1, 1]`.
    pub fn line(n: usize) -> Self {
        assert!(n >= 3, "grid needs at least 3 nodes");
        Grid {
            dim: Dim::One,
            nx: n,
            ny: 1,
            dx: 2.0 / (n - 1) as f64,
            dy: 0.0,
        }
    }

    /// 2D grid with `nx` by `ny` uniformly spaced nodes on `[-1, 1]^2`.
    pub fn rect(nx: usize, ny: usize) -> Self {
        assert!(nx >= 3 && ny >= 3, "grid needs at least 3 nodes per direction");
        Grid {
            dim: Dim::Two,
            nx,
            ny,
            dx: 2.0 / (nx - 1) as f64,
            dy: 2.0 / (ny - 1) as f64,
        }
    }

    /// Number of grid nodes (scalar fields have this length).
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    /// Length of a state vector: one component per node in 1D, the stacked
    /// `(u, v)` pair in 2D.
    pub fn state_len(&self) -> usize {
        match self.dim {
            Dim::One => self.nx,
            Dim::Two => 2 * self.n_nodes(),
        }
    }

    pub fn x(&self, ix: usize) -> f64 {
        -1.0 + ix as f64 * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        -1.0 + iy as f64 * self.dy
    }

    /// Flat node index; rows are y-major (`iy` outer, `ix` inner).
    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }
}

/// Forward-Euler trajectory: the initial state, the `n_t` stored snapshots
/// `u^(1) .. u^(n_t)`, and the step sizes that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: Array1<f64>,
    pub snapshots: Vec<Array1<f64>>,
    pub dts: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.snapshots.len()
    }

    /// State at time level `k`, with `k = 0` the initial condition.
    pub fn state(&self, k: usize) -> &Array1<f64> {
        if k == 0 {
            &self.initial
        } else {
            &self.snapshots[k - 1]
        }
    }

    pub fn final_time(&self) -> f64 {
        self.dts.iter().sum()
    }

    /// Snapshot matrix with columns `u^(1) .. u^(n_t)` (initial state excluded).
    pub fn snapshot_matrix(&self) -> Array2<f64> {
        let n_s = self.initial.len();
        let n_t = self.snapshots.len();
        let mut m = Array2::zeros((n_s, n_t));
        for (j, s) in self.snapshots.iter().enumerate() {
            m.column_mut(j).assign(s);
        }
        m
    }
}

/// One POD mode: left singular vector, singular value, temporal coefficients.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    /// Spatial mode `phi`, unit norm.
    pub mode: Array1<f64>,
    /// Singular value, non-negative.
    pub sigma: f64,
    /// Temporal coefficients `v`, unit norm.
    pub coeffs: Array1<f64>,
    /// Zero-based mode index (0 = most energetic).
    pub index: usize,
}

/// Map from a low-dimensional design vector to the nodal advection
/// multiplier `alpha`.
#[derive(Debug, Clone)]
pub enum DesignSpec {
    /// `alpha(x) = baseline + sum_j x_j exp(-((x - c_j)/width)^2)` on a 1D grid.
    GaussianBumps1d {
        centers: Vec<f64>,
        width: f64,
        baseline: f64,
        lower: f64,
        upper: f64,
    },
    /// Horizontal strips of constant `alpha` covering `y in [band_lo, band_hi]`,
    /// indexed bottom to top; nodes outside the band keep `outside`.
    Strips2d {
        count: usize,
        band_lo: f64,
        band_hi: f64,
        outside: f64,
        lower: f64,
        upper: f64,
    },
}

impl DesignSpec {
    /// The four-bump parametrization used by the 1D study.
    pub fn gaussian_bumps_1d() -> Self {
        DesignSpec::GaussianBumps1d {
            centers: vec![-0.70, -0.15, 0.40, 0.75],
            width: 0.25,
            baseline: 0.1,
            lower: -0.35,
            upper: 0.35,
        }
    }

    /// One hundred strips on `y in [-0.8, 0.8]` used by the 2D study.
    pub fn strips_2d() -> Self {
        DesignSpec::Strips2d {
            count: 100,
            band_lo: -0.8,
            band_hi: 0.8,
            outside: 1.0,
            lower: 0.1,
            upper: 4.0,
        }
    }

    pub fn n_vars(&self) -> usize {
        match self {
            DesignSpec::GaussianBumps1d { centers, .. } => centers.len(),
            DesignSpec::Strips2d { count, .. } => *count,
        }
    }

    /// Componentwise `(lower, upper)` bounds.
    pub fn bounds(&self) -> (Array1<f64>, Array1<f64>) {
        let n = self.n_vars();
        let (lo, hi) = match self {
            DesignSpec::GaussianBumps1d { lower, upper, .. } => (*lower, *upper),
            DesignSpec::Strips2d { lower, upper, .. } => (*lower, *upper),
        };
        (Array1::from_elem(n, lo), Array1::from_elem(n, hi))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_vars() {
            return Err(McfiError::Dimension(format!(
                "design vector has length {len}, spec expects {}",
                self.n_vars()
            )));
        }
        Ok(())
    }

    /// Strip index owning coordinate `y`, or `None` outside the band.
    /// A node exactly on a strip boundary belongs to the lower strip.
    pub fn strip_of(&self, y: f64) -> Option<usize> {
        match self {
            DesignSpec::Strips2d {
                count,
                band_lo,
                band_hi,
                ..
            } => {
                let height = (band_hi - band_lo) / *count as f64;
                // Snap to the boundary when y sits within rounding of one.
                let s = (y - band_lo) / height;
                let eps = 1e-9;
                if s < -eps || s > *count as f64 + eps {
                    return None;
                }
                let nearest = s.round();
                let idx = if (s - nearest).abs() <= eps {
                    // On a boundary: take the strip below, clamped at the band floor.
                    (nearest as isize - 1).max(0) as usize
                } else {
                    s.floor() as usize
                };
                Some(idx.min(count - 1))
            }
            DesignSpec::GaussianBumps1d { .. } => None,
        }
    }

    /// Evaluate the nodal `alpha` field for design vector `x`.
    ///
    /// Returns a field of one value per grid node (`nx` in 1D, `nx*ny` in 2D).
    /// Evaluation is permitted outside the declared bounds.
    pub fn alpha_field(&self, x: &Array1<f64>, grid: &Grid) -> Result<Array1<f64>> {
        self.check_len(x.len())?;
        match self {
            DesignSpec::GaussianBumps1d {
                centers,
                width,
                baseline,
                ..
            } => {
                let mut alpha = Array1::from_elem(grid.nx, *baseline);
                for i in 0..grid.nx {
                    let xi = grid.x(i);
                    let mut a = *baseline;
                    for (j, c) in centers.iter().enumerate() {
                        let t = (xi - c) / width;
                        a += x[j] * (-t * t).exp();
                    }
                    alpha[i] = a;
                }
                Ok(alpha)
            }
            DesignSpec::Strips2d { outside, .. } => {
                let mut alpha = Array1::from_elem(grid.n_nodes(), *outside);
                for iy in 0..grid.ny {
                    let value = match self.strip_of(grid.y(iy)) {
                        Some(j) => x[j],
                        None => *outside,
                    };
                    for ix in 0..grid.nx {
                        alpha[grid.node(ix, iy)] = value;
                    }
                }
                Ok(alpha)
            }
        }
    }

    /// Apply the transpose of the design-to-field linearization to a nodal
    /// gradient: `out_j = sum_i (d alpha_i / d x_j) g_i`.
    pub fn basis_transpose_apply(&self, nodal: &Array1<f64>, grid: &Grid) -> Result<Array1<f64>> {
        if nodal.len() != grid.n_nodes() {
            return Err(McfiError::Dimension(format!(
                "nodal gradient has length {}, grid has {} nodes",
                nodal.len(),
                grid.n_nodes()
            )));
        }
        let mut out = Array1::zeros(self.n_vars());
        match self {
            DesignSpec::GaussianBumps1d { centers, width, .. } => {
                for i in 0..grid.nx {
                    let xi = grid.x(i);
                    let g = nodal[i];
                    for (j, c) in centers.iter().enumerate() {
                        let t = (xi - c) / width;
                        out[j] += (-t * t).exp() * g;
                    }
                }
            }
            DesignSpec::Strips2d { .. } => {
                for iy in 0..grid.ny {
                    if let Some(j) = self.strip_of(grid.y(iy)) {
                        for ix in 0..grid.nx {
                            out[j] += nodal[grid.node(ix, iy)];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn grid_spacing_matches_extent() {
        let g = Grid::line(161);
        assert_eq!(g.dx, 2.0 / 160.0);
        let g2 = Grid::rect(201, 201);
        assert_eq!(g2.dx, 0.01);
        assert_eq!(g2.dy, 0.01);
        assert_eq!(g2.state_len(), 2 * 201 * 201);
    }

    #[test]
    fn alpha_zero_controls_is_baseline() {
        let spec = DesignSpec::gaussian_bumps_1d();
        let grid = Grid::line(161);
        let alpha = spec.alpha_field(&Array1::zeros(4), &grid).unwrap();
        assert!(alpha.iter().all(|&a| (a - 0.1).abs() < 1e-15));
    }

    #[test]
    fn alpha_four_term_sum_matches_direct_evaluation() {
        let spec = DesignSpec::gaussian_bumps_1d();
        let grid = Grid::line(161);
        let x = array![0.25, -0.15, 0.05, 0.15];
        let alpha = spec.alpha_field(&x, &grid).unwrap();
        // Independent evaluation of the closed-form sum at x = -0.70 (node 24).
        let xi: f64 = -0.70;
        let centers = [-0.70, -0.15, 0.40, 0.75];
        let mut expect = 0.1;
        for (xj, c) in x.iter().zip(centers.iter()) {
            expect += xj * (-((xi - c) / 0.25_f64).powi(2)).exp();
        }
        let i = (0..grid.nx).find(|&i| (grid.x(i) - xi).abs() < 1e-12).unwrap();
        assert!((alpha[i] - expect).abs() < 1e-15, "{} vs {}", alpha[i], expect);
        // The bump at -0.70 contributes exactly 0.25 on top of baseline there.
        assert!((alpha[i] - (0.1 + 0.25)).abs() < 0.02);
    }

    #[test]
    fn alpha_strips_all_ones_is_uniform() {
        let spec = DesignSpec::strips_2d();
        let grid = Grid::rect(51, 51);
        let alpha = spec.alpha_field(&Array1::ones(100), &grid).unwrap();
        assert!(alpha.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn strip_assignment_boundary_goes_to_lower_strip() {
        let spec = DesignSpec::strips_2d();
        // Strip height is 0.016; y = -0.8 + 5*0.016 = -0.72 lies exactly on the
        // boundary between strips 4 and 5.
        assert_eq!(spec.strip_of(-0.72), Some(4));
        assert_eq!(spec.strip_of(-0.8), Some(0));
        assert_eq!(spec.strip_of(0.8), Some(99));
        assert_eq!(spec.strip_of(0.81), None);
        assert_eq!(spec.strip_of(-0.81), None);
        // Mid-strip points.
        assert_eq!(spec.strip_of(-0.8 + 0.5 * 0.016), Some(0));
        assert_eq!(spec.strip_of(0.8 - 0.5 * 0.016), Some(99));
    }

    #[test]
    fn strips_cover_all_rows_on_the_paper_grid() {
        let spec = DesignSpec::strips_2d();
        let grid = Grid::rect(201, 201);
        let mut counts = vec![0usize; 100];
        for iy in 0..grid.ny {
            if let Some(j) = spec.strip_of(grid.y(iy)) {
                counts[j] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c >= 1), "empty strip: {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 161); // rows with |y| <= 0.8
    }

    #[test]
    fn basis_transpose_zero_gradient() {
        let spec = DesignSpec::gaussian_bumps_1d();
        let grid = Grid::line(41);
        let out = spec.basis_transpose_apply(&Array1::zeros(41), &grid).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_transpose_first_bump_gives_inner_products() {
        let spec = DesignSpec::gaussian_bumps_1d();
        let grid = Grid::line(161);
        let centers = [-0.70_f64, -0.15, 0.40, 0.75];
        let b1: Array1<f64> = (0..grid.nx)
            .map(|i| (-((grid.x(i) - centers[0]) / 0.25_f64).powi(2)).exp())
            .collect();
        let out = spec.basis_transpose_apply(&b1, &grid).unwrap();
        for j in 0..4 {
            let bj: Array1<f64> = (0..grid.nx)
                .map(|i| (-((grid.x(i) - centers[j]) / 0.25_f64).powi(2)).exp())
                .collect();
            let expect = b1.dot(&bj);
            assert!(
                (out[j] - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "component {j}: {} vs {}",
                out[j],
                expect
            );
        }
    }

    #[test]
    fn basis_transpose_strip_indicator_counts_nodes() {
        let spec = DesignSpec::strips_2d();
        let grid = Grid::rect(201, 201);
        let mut g = Array1::zeros(grid.n_nodes());
        let mut count = 0.0;
        for iy in 0..grid.ny {
            if spec.strip_of(grid.y(iy)) == Some(7) {
                for ix in 0..grid.nx {
                    g[grid.node(ix, iy)] = 1.0;
                    count += 1.0;
                }
            }
        }
        let out = spec.basis_transpose_apply(&g, &grid).unwrap();
        for j in 0..100 {
            let expect = if j == 7 { count } else { 0.0 };
            assert_eq!(out[j], expect, "strip {j}");
        }
    }

    #[test]
    fn design_vector_length_mismatch_is_an_error() {
        let spec = DesignSpec::gaussian_bumps_1d();
        let grid = Grid::line(41);
        assert!(matches!(
            spec.alpha_field(&Array1::zeros(3), &grid),
            Err(McfiError::Dimension(_))
        ));
    }

    #[test]
    fn alpha_is_linear_in_the_1d_controls() {
        let spec = DesignSpec::gaussian_bumps_1d();
        let grid = Grid::line(81);
        let x = array![0.1, -0.2, 0.3, 0.0];
        let base = spec.alpha_field(&x, &grid).unwrap();
        for j in 0..4 {
            let delta = 0.37;
            let mut xp = x.clone();
            xp[j] += delta;
            let bumped = spec.alpha_field(&xp, &grid).unwrap();
            for i in 0..grid.nx {
                let centers = [-0.70, -0.15, 0.40, 0.75];
                let bj = (-((grid.x(i) - centers[j]) / 0.25_f64).powi(2)).exp();
                assert!(((bumped[i] - base[i]) - delta * bj).abs() < 1e-14);
            }
        }
    }

    proptest! {
        // <alpha(x + dx) - alpha(x), g> == <dx, B^T g> for both parametrizations.
        #[test]
        fn transpose_is_adjoint_of_linearization_1d(
            xs in proptest::collection::vec(-0.5f64..0.5, 4),
            dxs in proptest::collection::vec(-0.5f64..0.5, 4),
            seed in 0u64..1000,
        ) {
            let spec = DesignSpec::gaussian_bumps_1d();
            let grid = Grid::line(41);
            let x = Array1::from_vec(xs);
            let dx = Array1::from_vec(dxs);
            let g: Array1<f64> = (0..grid.nx)
                .map(|i| ((i as f64 + 1.3) * (seed as f64 + 0.7)).sin())
                .collect();
            let a0 = spec.alpha_field(&x, &grid).unwrap();
            let a1 = spec.alpha_field(&(&x + &dx), &grid).unwrap();
            let lhs = (&a1 - &a0).dot(&g);
            let rhs = dx.dot(&spec.basis_transpose_apply(&g, &grid).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
        }

        #[test]
        fn transpose_is_adjoint_of_linearization_2d(seed in 0u64..500) {
            let spec = DesignSpec::strips_2d();
            let grid = Grid::rect(21, 41);
            let n = spec.n_vars();
            let x: Array1<f64> = (0..n).map(|j| 1.0 + 0.5 * ((j as f64) * 0.31).sin()).collect();
            let dx: Array1<f64> = (0..n).map(|j| ((j as f64 + seed as f64) * 0.17).cos()).collect();
            let g: Array1<f64> = (0..grid.n_nodes())
                .map(|i| ((i as f64) * 0.013 + seed as f64).sin())
                .collect();
            let a0 = spec.alpha_field(&x, &grid).unwrap();
            let a1 = spec.alpha_field(&(&x + &dx), &grid).unwrap();
            let lhs = (&a1 - &a0).dot(&g);
            let rhs = dx.dot(&spec.basis_transpose_apply(&g, &grid).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
        }
    }
}
