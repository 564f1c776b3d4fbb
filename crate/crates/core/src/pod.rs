//! Snapshot centering, SVD-based POD extraction, sign handling, and the
//! POD residual.

use ndarray::{Array1, Array2};
use ndarray_linalg::{JobSvd, Norm, SVDDC};

use crate::error::{McfiError, Result};
use crate::model::{SingularTriplet, Trajectory};

/// Relative singular-value gap below which adjoint sensitivities become
/// unreliable.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Zero-mean snapshot matrix and the removed temporal mean.
#[derive(Debug, Clone)]
pub struct CenteredSnapshots {
    /// `n_s x n_t` matrix; each row sums to zero.
    pub matrix: Array2<f64>,
    /// Temporal mean of the raw snapshots, length `n_s`.
    pub mean: Array1<f64>,
}

impl CenteredSnapshots {
    pub fn n_state(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Remove the temporal mean from every spatial row of the snapshot matrix.
/// Columns are `u^(1) .. u^(n_t)`; the initial condition is excluded.
pub fn center(trajectory: &Trajectory) -> Result<CenteredSnapshots> {
    let n_t = trajectory.n_steps();
    if n_t < 2 {
        return Err(McfiError::Degenerate(format!(
            "centering needs at least 2 snapshots, got {n_t}"
        )));
    }
    let mut matrix = trajectory.snapshot_matrix();
    let mean = matrix.mean_axis(ndarray::Axis(1)).expect("n_t >= 2");
    for mut col in matrix.columns_mut() {
        col -= &mean;
    }
    Ok(CenteredSnapshots { matrix, mean })
}

/// Leading POD modes, most energetic first.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub triplets: Vec<SingularTriplet>,
    /// Set when the gap between the last retained singular value and its
    /// successor falls below [`DEGENERACY_GAP`] relative to `sigma_1`;
    /// derivative information close to a repeated singular value is suspect.
    pub near_degenerate: bool,
}

/// Compute the `m` leading singular triplets of the centered snapshot matrix
/// by a thin SVD. Each triplet is given a canonical intrinsic sign: the
/// largest-magnitude entry of the spatial mode is positive.
pub fn compute_modes(centered: &CenteredSnapshots, m: usize) -> Result<ModeSet> {
    let (n_s, n_t) = (centered.n_state(), centered.n_snapshots());
    let rank_cap = n_s.min(n_t);
    if m == 0 || m > rank_cap {
        return Err(McfiError::Config(format!(
            "mode count {m} outside 1..={rank_cap}"
        )));
    }
    let (u, s, vt) = centered.matrix.svddc(JobSvd::Some)?;
    let u = u.ok_or_else(|| McfiError::Numerical("SVD returned no left vectors".into()))?;
    let vt = vt.ok_or_else(|| McfiError::Numerical("SVD returned no right vectors".into()))?;

    let mut triplets = Vec::with_capacity(m);
    for i in 0..m {
        let mut mode = u.column(i).to_owned();
        let mut coeffs = vt.row(i).to_owned();
        // Canonical sign: flip so the largest-magnitude entry of the mode is
        // positive, which makes output reproducible across SVD backends.
        let pivot = mode
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(k, _)| k)
            .unwrap_or(0);
        if mode[pivot] < 0.0 {
            mode.mapv_inplace(|v| -v);
            coeffs.mapv_inplace(|v| -v);
        }
        triplets.push(SingularTriplet {
            mode,
            sigma: s[i],
            coeffs,
            index: i,
        });
    }

    let sigma_1 = s[0];
    let next = if m < rank_cap { s[m] } else { 0.0 };
    let near_degenerate = (s[m - 1] - next) <= DEGENERACY_GAP * sigma_1
        || triplets
            .windows(2)
            .any(|w| (w[0].sigma - w[1].sigma) <= DEGENERACY_GAP * sigma_1);
    Ok(ModeSet {
        triplets,
        near_degenerate,
    })
}

/// Flip `(phi, v)` jointly so that `<phi, reference>` is positive. The joint
/// flip preserves the POD residual exactly.
pub fn align_sign(triplet: &SingularTriplet, reference: &Array1<f64>) -> Result<SingularTriplet> {
    if reference.len() != triplet.mode.len() {
        return Err(McfiError::Dimension(format!(
            "reference has length {}, mode has {}",
            reference.len(),
            triplet.mode.len()
        )));
    }
    let inner = triplet.mode.dot(reference);
    if inner == 0.0 {
        return Err(McfiError::AmbiguousAlignment);
    }
    if inner > 0.0 {
        Ok(triplet.clone())
    } else {
        Ok(SingularTriplet {
            mode: triplet.mode.mapv(|v| -v),
            sigma: triplet.sigma,
            coeffs: triplet.coeffs.mapv(|v| -v),
            index: triplet.index,
        })
    }
}

/// Stacked POD residual `[U~ v - sigma phi; U~^T phi - sigma v; phi^T phi - 1]`.
pub fn pod_residual(triplet: &SingularTriplet, centered: &CenteredSnapshots) -> Array1<f64> {
    let (n_s, n_t) = (centered.n_state(), centered.n_snapshots());
    let mut r = Array1::zeros(n_s + n_t + 1);
    let ra = centered.matrix.dot(&triplet.coeffs) - triplet.sigma * &triplet.mode;
    let rb = centered.matrix.t().dot(&triplet.mode) - triplet.sigma * &triplet.coeffs;
    r.slice_mut(ndarray::s![0..n_s]).assign(&ra);
    r.slice_mut(ndarray::s![n_s..n_s + n_t]).assign(&rb);
    r[n_s + n_t] = triplet.mode.dot(&triplet.mode) - 1.0;
    r
}

/// Max-norm residual of the triplet relative to `sigma_1`; used by invariant
/// checks.
pub fn triplet_residual_norm(triplet: &SingularTriplet, centered: &CenteredSnapshots) -> f64 {
    pod_residual(triplet, centered).norm_l2()
}
