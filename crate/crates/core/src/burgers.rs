//! Discrete spatial residual, forward-Euler marching, and Jacobian-transpose
//! contractions for the modified viscous Burgers equation in 1D and 2D.
//!
//! The advection term `-alpha (u . grad) u` uses a smooth upwind blend of
//! backward and forward differences, `omega = (1 + tanh(beta w)) / 2`, so the
//! whole discrete map stays differentiable. Diffusion is central. Boundary
//! nodes carry zero residual and therefore stay frozen at their initial
//! values.

use ndarray::Array1;

use crate::error::{McfiError, Result};
use crate::model::{DesignSpec, Dim, Grid, Trajectory};

/// Time-integration and discretization constants.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Viscosity.
    pub nu: f64,
    /// Steepness of the tanh upwind selector.
    pub beta: f64,
    /// CFL number. In 1D the step is fixed from the initial condition,
    /// `dt = cfl * dx / max|u0|`; in 2D it adapts every step as
    /// `dt = cfl * min(dx, dy) / (max|u| + max|v| + 1e-8)`.
    pub cfl: f64,
    /// Final time; the last step is truncated to land on it exactly.
    pub t_end: f64,
}

impl SolverConfig {
    /// 1D baseline: 161 nodes, `nu = 5e-4`, fixed step sized to reach
    /// `t_end = 2.5` in 496 steps (`dt ~ 5.0e-3`).
    pub fn burgers_1d() -> Self {
        SolverConfig {
            nu: 5e-4,
            beta: 20.0,
            cfl: 0.5,
            t_end: 2.5,
        }
    }

    /// 2D baseline: `nu = 1e-4`, adaptive CFL 0.4 marching to `t_end = 1.0`.
    pub fn burgers_2d() -> Self {
        SolverConfig {
            nu: 1e-4,
            beta: 20.0,
            cfl: 0.4,
            t_end: 1.0,
        }
    }
}

/// Smooth upwind weight `(1 + tanh(beta w)) / 2`, in `(0, 1)`.
#[inline]
pub fn smooth_selector(w: f64, beta: f64) -> f64 {
    0.5 * (1.0 + (beta * w).tanh())
}

/// Derivative of [`smooth_selector`] with respect to `w`.
#[inline]
fn selector_derivative(w: f64, beta: f64) -> f64 {
    let t = (beta * w).tanh();
    0.5 * beta * (1.0 - t * t)
}

/// Initial condition for the given grid: two Gaussian pulses over a
/// sinusoidal background in 1D; two opposing Gaussian packets, normalized to
/// unit maximum, with zero transverse velocity in 2D.
pub fn initial_condition(grid: &Grid) -> Array1<f64> {
    match grid.dim {
        Dim::One => (0..grid.nx)
            .map(|i| {
                let x = grid.x(i);
                (-(x + 0.7) * (x + 0.7) / 0.05).exp()
                    - 0.8 * (-(x - 0.7) * (x - 0.7) / 0.05).exp()
                    + 0.25 * (2.0 * std::f64::consts::PI * x).sin()
            })
            .collect(),
        Dim::Two => {
            let n = grid.n_nodes();
            let mut state = Array1::zeros(2 * n);
            let (xl, yl, xr, yr, r1, r2) = (-0.9, 0.1, 0.9, -0.1, 0.7_f64, 0.7_f64);
            let mut max_abs = 0.0_f64;
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    let (x, y) = (grid.x(ix), grid.y(iy));
                    let u = 4.0 * (-((x - xl).powi(2) + (y - yl).powi(2)) / (r1 * r1)).exp()
                        - 4.0 * (-((x - xr).powi(2) + (y - yr).powi(2)) / (r2 * r2)).exp();
                    state[grid.node(ix, iy)] = u;
                    max_abs = max_abs.max(u.abs());
                }
            }
            for k in 0..n {
                state[k] /= max_abs;
            }
            state
        }
    }
}

/// Spatial residual `r_s(u)` at every node; boundary rows are zero.
pub fn spatial_residual(
    state: &Array1<f64>,
    alpha: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Array1<f64>> {
    check_state(state, grid)?;
    if !state.iter().all(|v| v.is_finite()) {
        return Err(McfiError::Numerical("non-finite state".into()));
    }
    let mut r = Array1::zeros(state.len());
    match grid.dim {
        Dim::One => {
            let dx = grid.dx;
            let nu = config.nu;
            for i in 1..grid.nx - 1 {
                let (um, uc, up) = (state[i - 1], state[i], state[i + 1]);
                let w = smooth_selector(uc, config.beta);
                let ux = w * (uc - um) / dx + (1.0 - w) * (up - uc) / dx;
                let diff = nu * (up - 2.0 * uc + um) / (dx * dx);
                r[i] = -alpha[i] * uc * ux + diff;
            }
        }
        Dim::Two => {
            let n = grid.n_nodes();
            let (dx, dy, nu) = (grid.dx, grid.dy, config.nu);
            for iy in 1..grid.ny - 1 {
                for ix in 1..grid.nx - 1 {
                    let c = grid.node(ix, iy);
                    let (w_, e, s, nn) = (c - 1, c + 1, c - grid.nx, c + grid.nx);
                    let (uc, vc) = (state[c], state[n + c]);
                    let wx = smooth_selector(uc, config.beta);
                    let wy = smooth_selector(vc, config.beta);

                    let ux = wx * (uc - state[w_]) / dx + (1.0 - wx) * (state[e] - uc) / dx;
                    let uy = wy * (uc - state[s]) / dy + (1.0 - wy) * (state[nn] - uc) / dy;
                    let vx = wx * (vc - state[n + w_]) / dx
                        + (1.0 - wx) * (state[n + e] - vc) / dx;
                    let vy = wy * (vc - state[n + s]) / dy
                        + (1.0 - wy) * (state[n + nn] - vc) / dy;

                    let lap_u = (state[e] - 2.0 * uc + state[w_]) / (dx * dx)
                        + (state[nn] - 2.0 * uc + state[s]) / (dy * dy);
                    let lap_v = (state[n + e] - 2.0 * vc + state[n + w_]) / (dx * dx)
                        + (state[n + nn] - 2.0 * vc + state[n + s]) / (dy * dy);

                    r[c] = -alpha[c] * (uc * ux + vc * uy) + nu * lap_u;
                    r[n + c] = -alpha[c] * (uc * vx + vc * vy) + nu * lap_v;
                }
            }
        }
    }
    Ok(r)
}

fn check_state(state: &Array1<f64>, grid: &Grid) -> Result<()> {
    if state.len() != grid.state_len() {
        return Err(McfiError::Dimension(format!(
            "state has length {}, grid expects {}",
            state.len(),
            grid.state_len()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: &Array1<f64>, grid: &Grid) -> Result<()> {
    if alpha.len() != grid.n_nodes() {
        return Err(McfiError::Dimension(format!(
            "alpha field has length {}, grid has {} nodes",
            alpha.len(),
            grid.n_nodes()
        )));
    }
    Ok(())
}

fn step_size(state: &Array1<f64>, grid: &Grid, config: &SolverConfig) -> f64 {
    match grid.dim {
        Dim::One => {
            let max_u = state.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            config.cfl * grid.dx / max_u
        }
        Dim::Two => {
            let n = grid.n_nodes();
            let max_u = state.iter().take(n).fold(0.0_f64, |m, &v| m.max(v.abs()));
            let max_v = state.iter().skip(n).fold(0.0_f64, |m, &v| m.max(v.abs()));
            config.cfl * grid.dx.min(grid.dy) / (max_u + max_v + 1e-8)
        }
    }
}

enum DtPolicy<'a> {
    /// 1D: one step size fixed from the initial state; 2D: recomputed from
    /// the current state every step. The final step truncates onto `t_end`.
    FromConfig,
    /// Replay a prescribed sequence (finite-difference re-runs share the
    /// baseline steps so that perturbed and baseline pipelines stay
    /// differentiably comparable).
    Prescribed(&'a [f64]),
}

fn march(
    alpha: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    ic: &Array1<f64>,
    policy: DtPolicy,
) -> Result<Trajectory> {
    check_state(ic, grid)?;
    check_alpha(alpha, grid)?;
    let mut state = ic.clone();
    let mut snapshots = Vec::new();
    let mut dts = Vec::new();
    match policy {
        DtPolicy::Prescribed(steps) => {
            for (k, &dt) in steps.iter().enumerate() {
                let r = spatial_residual(&state, alpha, grid, config)?;
                state = &state + &(dt * &r);
                if !state.iter().all(|v| v.is_finite()) {
                    return Err(McfiError::Divergence { step: k + 1 });
                }
                snapshots.push(state.clone());
                dts.push(dt);
            }
        }
        DtPolicy::FromConfig => {
            let fixed = match grid.dim {
                Dim::One => Some(step_size(ic, grid, config)),
                Dim::Two => None,
            };
            let mut t = 0.0;
            let mut k = 0usize;
            while t < config.t_end * (1.0 - 1e-12) {
                let mut dt = fixed.unwrap_or_else(|| step_size(&state, grid, config));
                if t + dt > config.t_end {
                    dt = config.t_end - t;
                }
                let r = spatial_residual(&state, alpha, grid, config)?;
                state = &state + &(dt * &r);
                k += 1;
                if !state.iter().all(|v| v.is_finite()) {
                    return Err(McfiError::Divergence { step: k });
                }
                snapshots.push(state.clone());
                dts.push(dt);
                t += dt;
            }
        }
    }
    Ok(Trajectory {
        initial: ic.clone(),
        snapshots,
        dts,
    })
}

/// March the state forward under the design `x`, recording every snapshot and
/// the step sizes used.
pub fn simulate(
    spec: &DesignSpec,
    x: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    ic: &Array1<f64>,
) -> Result<Trajectory> {
    let alpha = spec.alpha_field(x, grid)?;
    march(&alpha, grid, config, ic, DtPolicy::FromConfig)
}

/// March with a prescribed step sequence instead of the CFL policy.
pub fn simulate_with_dts(
    spec: &DesignSpec,
    x: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    ic: &Array1<f64>,
    dts: &[f64],
) -> Result<Trajectory> {
    let alpha = spec.alpha_field(x, grid)?;
    march(&alpha, grid, config, ic, DtPolicy::Prescribed(dts))
}

/// `(d r_s / d u)^T y` at the given state, including the tanh selector
/// derivatives. Boundary residual rows contribute nothing.
pub fn jacobian_transpose_product(
    state: &Array1<f64>,
    alpha: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    y: &Array1<f64>,
) -> Result<Array1<f64>> {
    check_state(state, grid)?;
    check_state(y, grid)?;
    check_alpha(alpha, grid)?;
    let mut out = Array1::zeros(state.len());
    let beta = config.beta;
    match grid.dim {
        Dim::One => {
            let dx = grid.dx;
            let nu = config.nu;
            let d2 = nu / (dx * dx);
            for i in 1..grid.nx - 1 {
                let yi = y[i];
                if yi == 0.0 {
                    continue;
                }
                let (um, uc, up) = (state[i - 1], state[i], state[i + 1]);
                let w = smooth_selector(uc, beta);
                let dw = selector_derivative(uc, beta);
                let dm = (uc - um) / dx;
                let dp = (up - uc) / dx;
                let ux = w * dm + (1.0 - w) * dp;
                let a = alpha[i];
                // d r_i / d u_{i-1}, u_i, u_{i+1}
                let j_m = -a * uc * (-w / dx) + d2;
                let dux_duc = (2.0 * w - 1.0) / dx + dw * (dm - dp);
                let j_c = -a * (ux + uc * dux_duc) - 2.0 * d2;
                let j_p = -a * uc * ((1.0 - w) / dx) + d2;
                out[i - 1] += j_m * yi;
                out[i] += j_c * yi;
                out[i + 1] += j_p * yi;
            }
        }
        Dim::Two => {
            let n = grid.n_nodes();
            let (dx, dy, nu) = (grid.dx, grid.dy, config.nu);
            let (d2x, d2y) = (nu / (dx * dx), nu / (dy * dy));
            for iy in 1..grid.ny - 1 {
                for ix in 1..grid.nx - 1 {
                    let c = grid.node(ix, iy);
                    let (yu, yv) = (y[c], y[n + c]);
                    if yu == 0.0 && yv == 0.0 {
                        continue;
                    }
                    let (w_, e, s, nn) = (c - 1, c + 1, c - grid.nx, c + grid.nx);
                    let (uc, vc) = (state[c], state[n + c]);
                    let wx = smooth_selector(uc, beta);
                    let wy = smooth_selector(vc, beta);
                    let dwx = selector_derivative(uc, beta);
                    let dwy = selector_derivative(vc, beta);
                    let a = alpha[c];

                    let dmx_u = (uc - state[w_]) / dx;
                    let dpx_u = (state[e] - uc) / dx;
                    let dmy_u = (uc - state[s]) / dy;
                    let dpy_u = (state[nn] - uc) / dy;
                    let dmx_v = (vc - state[n + w_]) / dx;
                    let dpx_v = (state[n + e] - vc) / dx;
                    let dmy_v = (vc - state[n + s]) / dy;
                    let dpy_v = (state[n + nn] - vc) / dy;

                    let ux = wx * dmx_u + (1.0 - wx) * dpx_u;
                    let uy = wy * dmy_u + (1.0 - wy) * dpy_u;
                    let vx = wx * dmx_v + (1.0 - wx) * dpx_v;
                    let vy = wy * dmy_v + (1.0 - wy) * dpy_v;

                    // r_u row: derivatives with respect to the u stencil.
                    let ru_uw = -a * uc * (-wx / dx) + d2x;
                    let ru_ue = -a * uc * ((1.0 - wx) / dx) + d2x;
                    let ru_us = -a * vc * (-wy / dy) + d2y;
                    let ru_un = -a * vc * ((1.0 - wy) / dy) + d2y;
                    let dux_duc = (2.0 * wx - 1.0) / dx + dwx * (dmx_u - dpx_u);
                    let duy_duc = (2.0 * wy - 1.0) / dy;
                    let ru_uc = -a * (ux + uc * dux_duc + vc * duy_duc) - 2.0 * (d2x + d2y);
                    // r_u row: derivative with respect to v at the center
                    // (advection multiplier and the y-selector).
                    let ru_vc = -a * (uy + vc * dwy * (dmy_u - dpy_u));

                    // r_v row: derivatives with respect to the v stencil.
                    let rv_vw = -a * uc * (-wx / dx) + d2x;
                    let rv_ve = -a * uc * ((1.0 - wx) / dx) + d2x;
                    let rv_vs = -a * vc * (-wy / dy) + d2y;
                    let rv_vn = -a * vc * ((1.0 - wy) / dy) + d2y;
                    let dvy_dvc = (2.0 * wy - 1.0) / dy + dwy * (dmy_v - dpy_v);
                    let dvx_dvc = (2.0 * wx - 1.0) / dx;
                    let rv_vc = -a * (vy + vc * dvy_dvc + uc * dvx_dvc) - 2.0 * (d2x + d2y);
                    // r_v row: derivative with respect to u at the center.
                    let rv_uc = -a * (vx + uc * dwx * (dmx_v - dpx_v));

                    out[w_] += ru_uw * yu;
                    out[e] += ru_ue * yu;
                    out[s] += ru_us * yu;
                    out[nn] += ru_un * yu;
                    out[c] += ru_uc * yu + rv_uc * yv;
                    out[n + c] += ru_vc * yu + rv_vc * yv;
                    out[n + w_] += rv_vw * yv;
                    out[n + e] += rv_ve * yv;
                    out[n + s] += rv_vs * yv;
                    out[n + nn] += rv_vn * yv;
                }
            }
        }
    }
    Ok(out)
}

/// `(d r_s / d alpha)^T y`: the nodal field whose entry at node `k` is minus
/// the advection bracket there weighted by the adjoint component(s).
pub fn design_jacobian_transpose_product(
    state: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    y: &Array1<f64>,
) -> Result<Array1<f64>> {
    check_state(state, grid)?;
    check_state(y, grid)?;
    let mut out = Array1::zeros(grid.n_nodes());
    match grid.dim {
        Dim::One => {
            let dx = grid.dx;
            for i in 1..grid.nx - 1 {
                let (um, uc, up) = (state[i - 1], state[i], state[i + 1]);
                let w = smooth_selector(uc, config.beta);
                let ux = w * (uc - um) / dx + (1.0 - w) * (up - uc) / dx;
                out[i] = -uc * ux * y[i];
            }
        }
        Dim::Two => {
            let n = grid.n_nodes();
            let (dx, dy) = (grid.dx, grid.dy);
            for iy in 1..grid.ny - 1 {
                for ix in 1..grid.nx - 1 {
                    let c = grid.node(ix, iy);
                    let (w_, e, s, nn) = (c - 1, c + 1, c - grid.nx, c + grid.nx);
                    let (uc, vc) = (state[c], state[n + c]);
                    let wx = smooth_selector(uc, config.beta);
                    let wy = smooth_selector(vc, config.beta);
                    let ux = wx * (uc - state[w_]) / dx + (1.0 - wx) * (state[e] - uc) / dx;
                    let uy = wy * (uc - state[s]) / dy + (1.0 - wy) * (state[nn] - uc) / dy;
                    let vx = wx * (vc - state[n + w_]) / dx
                        + (1.0 - wx) * (state[n + e] - vc) / dx;
                    let vy = wy * (vc - state[n + s]) / dy
                        + (1.0 - wy) * (state[n + nn] - vc) / dy;
                    out[c] = -((uc * ux + vc * uy) * y[c] + (uc * vx + vc * vy) * y[n + c]);
                }
            }
        }
    }
    Ok(out)
}
