//! Modal adjoint solves, modal forcing with the centering projection, the
//! single backward-in-time sweep, and total-gradient assembly.
//!
//! The gradient of a modal objective is assembled in four moves: initialize
//! the unsteady right-hand side from the state partials, solve one small
//! bordered adjoint system per mode and subtract its forcing, run one
//! backward sweep through the trajectory, and contract the sweep against the
//! design Jacobian. However many modes the objective tracks, the expensive
//! unsteady sweep happens once.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Norm, Solve};
use rayon::prelude::*;

use crate::burgers::{design_jacobian_transpose_product, jacobian_transpose_product, SolverConfig};
use crate::error::{McfiError, Result};
use crate::model::{DesignSpec, Grid, SingularTriplet, Trajectory};
use crate::objectives::{self, ObjectiveSpec, StatePartial};
use crate::pod::CenteredSnapshots;

/// Post-solve residual tolerance for the modal adjoint, relative to the
/// system scale.
pub const MODAL_RESIDUAL_TOL: f64 = 1e-10;

/// Adjoint variables of one POD residual block.
#[derive(Debug, Clone)]
pub struct ModalAdjoint {
    pub psi_mode: Array1<f64>,
    pub psi_coeffs: Array1<f64>,
    pub psi_sigma: f64,
    pub index: usize,
}

/// Adjoint of the forward-Euler state stack, one column per stored snapshot
/// (`psi_b,1 .. psi_b,n_t`).
#[derive(Debug, Clone)]
pub struct UnsteadyAdjoint {
    pub columns: Vec<Array1<f64>>,
}

/// Right-hand side of one modal adjoint solve: the objective partials with
/// respect to `(phi_i, v_i, sigma_i)`.
pub struct ModalRhs<'a> {
    pub d_mode: &'a Array1<f64>,
    pub d_coeffs: &'a Array1<f64>,
    pub d_sigma: f64,
}

/// Gram matrix of the centered snapshots, shared by every modal solve on the
/// same trajectory.
pub fn snapshot_gram(centered: &CenteredSnapshots) -> Array2<f64> {
    centered.matrix.t().dot(&centered.matrix)
}

/// Solve the transposed bordered modal system
///
/// ```text
/// -sigma psi_phi + U~ psi_v + 2 phi psi_sigma = b_phi
///  U~^T psi_phi  - sigma psi_v                = b_v
/// -phi^T psi_phi - v^T psi_v                  = b_sigma
/// ```
///
/// by eliminating `psi_phi` and solving the reduced dense
/// `(n_t + 1) x (n_t + 1)` system in `(psi_v, psi_sigma)`. The raw
/// `U~^T U~ - sigma^2 I` block is singular along `v`; the bordered
/// row/column restores invertibility, so the coupled system is solved as a
/// whole rather than by inverting the singular block.
pub fn solve_modal_adjoint(
    triplet: &SingularTriplet,
    centered: &CenteredSnapshots,
    rhs: ModalRhs<'_>,
) -> Result<ModalAdjoint> {
    let gram = snapshot_gram(centered);
    solve_modal_adjoint_with_gram(triplet, centered, &gram, rhs)
}

/// [`solve_modal_adjoint`] with a precomputed Gram matrix.
pub fn solve_modal_adjoint_with_gram(
    triplet: &SingularTriplet,
    centered: &CenteredSnapshots,
    gram: &Array2<f64>,
    rhs: ModalRhs<'_>,
) -> Result<ModalAdjoint> {
    let (n_s, n_t) = (centered.n_state(), centered.n_snapshots());
    if triplet.mode.len() != n_s || triplet.coeffs.len() != n_t {
        return Err(McfiError::Dimension(
            "triplet does not match snapshot matrix".into(),
        ));
    }
    if rhs.d_mode.len() != n_s || rhs.d_coeffs.len() != n_t {
        return Err(McfiError::Dimension("modal rhs has wrong lengths".into()));
    }
    let sigma = triplet.sigma;
    let frob = gram.diag().sum().max(0.0).sqrt();
    if sigma <= f64::EPSILON * frob.max(1.0) {
        return Err(McfiError::SingularSystem { sigma });
    }

    let (phi, v) = (&triplet.mode, &triplet.coeffs);
    let mut m = Array2::zeros((n_t + 1, n_t + 1));
    m.slice_mut(s![0..n_t, 0..n_t]).assign(gram);
    for j in 0..n_t {
        m[[j, j]] -= sigma * sigma;
        m[[j, n_t]] = 2.0 * sigma * v[j];
        m[[n_t, j]] = -2.0 * sigma * v[j];
    }
    m[[n_t, n_t]] = -2.0;

    let ut_bphi = centered.matrix.t().dot(rhs.d_mode);
    let mut b = Array1::zeros(n_t + 1);
    b.slice_mut(s![0..n_t])
        .assign(&(sigma * rhs.d_coeffs + &ut_bphi));
    b[n_t] = sigma * rhs.d_sigma - phi.dot(rhs.d_mode);

    let sol = m
        .solve(&b)
        .map_err(|e| McfiError::Numerical(format!("modal adjoint solve failed: {e}")))?;
    let psi_coeffs = sol.slice(s![0..n_t]).to_owned();
    let psi_sigma = sol[n_t];
    let psi_mode = (centered.matrix.dot(&psi_coeffs) + 2.0 * psi_sigma * phi - rhs.d_mode) / sigma;

    let psi = ModalAdjoint {
        psi_mode,
        psi_coeffs,
        psi_sigma,
        index: triplet.index,
    };

    // Residual of the full (n_s + n_t + 1) transposed system.
    let r1 = centered.matrix.dot(&psi.psi_coeffs) + 2.0 * psi.psi_sigma * phi
        - sigma * &psi.psi_mode
        - rhs.d_mode;
    let r2 = centered.matrix.t().dot(&psi.psi_mode) - sigma * &psi.psi_coeffs - rhs.d_coeffs;
    let r3 = -phi.dot(&psi.psi_mode) - v.dot(&psi.psi_coeffs) - rhs.d_sigma;
    let res = (r1.norm_l2().powi(2) + r2.norm_l2().powi(2) + r3 * r3).sqrt();
    let psi_norm =
        (psi.psi_mode.norm_l2().powi(2) + psi.psi_coeffs.norm_l2().powi(2) + psi.psi_sigma.powi(2))
            .sqrt();
    let rhs_norm =
        (rhs.d_mode.norm_l2().powi(2) + rhs.d_coeffs.norm_l2().powi(2) + rhs.d_sigma.powi(2))
            .sqrt();
    let scale = rhs_norm + (sigma + frob) * psi_norm;
    if res > MODAL_RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(McfiError::Numerical(format!(
            "modal adjoint residual {res:.3e} exceeds {MODAL_RESIDUAL_TOL:.0e} x scale {scale:.3e} \
             (near-degenerate singular value?)"
        )));
    }
    Ok(psi)
}

/// Modal forcing `(d r_POD / d U)^T psi`: the rank-two matrix
/// `psi_phi v^T + phi psi_v^T` pushed through the centering projection by
/// subtracting its row-wise temporal mean.
pub fn modal_forcing(triplet: &SingularTriplet, psi: &ModalAdjoint) -> Array2<f64> {
    let n_s = triplet.mode.len();
    let n_t = triplet.coeffs.len();
    let v_mean = triplet.coeffs.sum() / n_t as f64;
    let pv_mean = psi.psi_coeffs.sum() / n_t as f64;
    let mut f = Array2::zeros((n_s, n_t));
    for i in 0..n_s {
        let (a, b) = (psi.psi_mode[i], triplet.mode[i]);
        for j in 0..n_t {
            f[[i, j]] = a * (triplet.coeffs[j] - v_mean) + b * (psi.psi_coeffs[j] - pv_mean);
        }
    }
    f
}

/// Backward recursion for the transposed block-bidiagonal system of the
/// forward-Euler stack:
///
/// ```text
/// psi_{n_t} = g_{n_t}
/// psi_k     = g_k + (I + dt_k J^T(u^(k))) psi_{k+1},   k = n_t-1 .. 1
/// ```
///
/// where `dt_k` is the step that advanced `u^(k)` to `u^(k+1)`.
pub fn solve_unsteady_adjoint(
    trajectory: &Trajectory,
    alpha: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    g: &Array2<f64>,
) -> Result<UnsteadyAdjoint> {
    let n_t = trajectory.n_steps();
    let n_s = trajectory.initial.len();
    if g.nrows() != n_s || g.ncols() != n_t {
        return Err(McfiError::Dimension(format!(
            "adjoint rhs is {}x{}, expected {n_s}x{n_t}",
            g.nrows(),
            g.ncols()
        )));
    }
    let mut columns = vec![Array1::zeros(0); n_t];
    let mut next = g.column(n_t - 1).to_owned();
    columns[n_t - 1] = next.clone();
    for k in (1..n_t).rev() {
        // Level k lives in column k-1; J^T is evaluated at snapshot u^(k).
        let jt = jacobian_transpose_product(trajectory.state(k), alpha, grid, config, &next)?;
        let cur = &g.column(k - 1) + &next + trajectory.dts[k] * &jt;
        if !cur.iter().all(|x| x.is_finite()) {
            return Err(McfiError::Numerical(format!(
                "unsteady adjoint overflowed at level {k}"
            )));
        }
        columns[k - 1] = cur.clone();
        next = cur;
    }
    Ok(UnsteadyAdjoint { columns })
}

/// Execute the full gradient evaluation for a modal objective:
/// `df/dx = df/dx_direct - psi^T (d r_uns / d x)` with the adjoint obtained
/// from one backward sweep forced by the accumulated modal contributions.
///
/// `triplets` must be the sign-aligned modes consistent with how the
/// objective was evaluated, and `trajectory` the forward solution at `x`.
#[allow(clippy::too_many_arguments)]
pub fn total_gradient(
    spec: &DesignSpec,
    x: &Array1<f64>,
    trajectory: &Trajectory,
    centered: &CenteredSnapshots,
    triplets: &[SingularTriplet],
    objective: &ObjectiveSpec,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Array1<f64>> {
    let (n_s, n_t) = (centered.n_state(), centered.n_snapshots());
    let partials = objectives::partials(objective, centered, triplets)?;

    let mut g = match &partials.state {
        StatePartial::Zero => Array2::zeros((n_s, n_t)),
        p => p.to_matrix(n_s, n_t),
    };

    if !partials.modal.is_empty() {
        let gram = snapshot_gram(centered);
        // Each modal system is independent; solve them in parallel and fold
        // the forcings back in a fixed order.
        let adjoints: Vec<Result<ModalAdjoint>> = partials
            .modal
            .par_iter()
            .enumerate()
            .map(|(i, mp)| {
                solve_modal_adjoint_with_gram(
                    &triplets[i],
                    centered,
                    &gram,
                    ModalRhs {
                        d_mode: &mp.d_mode,
                        d_coeffs: &mp.d_coeffs,
                        d_sigma: mp.d_sigma,
                    },
                )
            })
            .collect();
        for (i, psi) in adjoints.into_iter().enumerate() {
            let psi = psi?;
            let forcing = modal_forcing(&triplets[i], &psi);
            g -= &forcing;
        }
    }

    let alpha = spec.alpha_field(x, grid)?;
    let psi_b = solve_unsteady_adjoint(trajectory, &alpha, grid, config, &g)?;

    // df/dx = sum_k dt_{k-1} B^T [ (d r_s / d alpha)^T |_{u^(k-1)} psi_b,k ].
    let mut nodal = Array1::zeros(grid.n_nodes());
    for k in 1..=n_t {
        let contrib = design_jacobian_transpose_product(
            trajectory.state(k - 1),
            grid,
            config,
            &psi_b.columns[k - 1],
        )?;
        nodal.scaled_add(trajectory.dts[k - 1], &contrib);
    }
    spec.basis_transpose_apply(&nodal, grid)
}

/// Stacked right-hand-side matrix `g` (state partials minus modal forcings)
/// exposed for verification.
pub fn assemble_unsteady_rhs(
    centered: &CenteredSnapshots,
    triplets: &[SingularTriplet],
    objective: &ObjectiveSpec,
) -> Result<Array2<f64>> {
    let (n_s, n_t) = (centered.n_state(), centered.n_snapshots());
    let partials = objectives::partials(objective, centered, triplets)?;
    let mut g = partials.state.to_matrix(n_s, n_t);
    if !partials.modal.is_empty() {
        let gram = snapshot_gram(centered);
        for (i, mp) in partials.modal.iter().enumerate() {
            let psi = solve_modal_adjoint_with_gram(
                &triplets[i],
                centered,
                &gram,
                ModalRhs {
                    d_mode: &mp.d_mode,
                    d_coeffs: &mp.d_coeffs,
                    d_sigma: mp.d_sigma,
                },
            )?;
            g -= &modal_forcing(&triplets[i], &psi);
        }
    }
    Ok(g)
}
