//! Finite-difference gradient oracle and linearization checks; produces the
//! adjoint-versus-FD comparison reports.

use std::time::Instant;

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::burgers::{
    design_jacobian_transpose_product, jacobian_transpose_product, spatial_residual, SolverConfig,
};
use crate::error::Result;
use crate::model::Grid;
use crate::objectives::ObjectiveSpec;
use crate::pipeline::Problem;

/// Default forward-difference step.
pub const DEFAULT_H_FD: f64 = 1e-6;

/// One row of a gradient-check report.
#[derive(Debug, Clone)]
pub struct GradCheckRow {
    /// Zero-based design component.
    pub index: usize,
    /// One-based label matching the reference tables (`alpha_c_36`...).
    pub label: String,
    pub adjoint: f64,
    pub fd: f64,
    pub abs_diff: f64,
    /// `|diff| / |fd|`; absent when the FD value is exactly zero.
    pub rel_err: Option<f64>,
    /// Cleared when the perturbed simulation failed.
    pub valid: bool,
}

/// Adjoint-versus-FD comparison with timing metadata.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub h_fd: f64,
    pub objective: String,
    /// Wall time of one full objective evaluation (forward solve + POD).
    pub forward_seconds: f64,
    /// Wall time of the adjoint gradient (forward pipeline + backward sweep).
    pub adjoint_seconds: f64,
    /// Wall time of all FD perturbations together.
    pub fd_seconds: f64,
}

impl GradCheckReport {
    /// Largest relative error over valid rows (absolute difference where the
    /// FD value is zero).
    pub fn max_rel_err(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.valid)
            .map(|r| r.rel_err.unwrap_or(r.abs_diff))
            .fold(0.0, f64::max)
    }

    /// Serialize as CSV. `comment` lines are prefixed with `#`.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut out = String::new();
        for line in comment.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!(
            "# h_fd={} objective={} forward_s={:.3} adjoint_s={:.3} fd_s={:.3}\n",
            self.h_fd, self.objective, self.forward_seconds, self.adjoint_seconds, self.fd_seconds
        ));
        out.push_str("component,adjoint,fd,abs_diff,rel_err\n");
        for r in &self.rows {
            let rel = r.rel_err.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label, r.adjoint, r.fd, r.abs_diff, rel
            ));
        }
        out
    }
}

/// Which design components a check covers.
#[derive(Debug, Clone)]
pub enum Components {
    All,
    /// Zero-based indices.
    Sampled(Vec<usize>),
}

impl Components {
    fn resolve(&self, n: usize) -> Vec<usize> {
        match self {
            Components::All => (0..n).collect(),
            Components::Sampled(list) => list.clone(),
        }
    }
}

/// Forward-difference gradient of the scalar function `f` (exact for linear
/// functionals up to rounding).
pub fn fd_gradient_fn<F>(f: F, x: &Array1<f64>, h: f64) -> Result<Array1<f64>>
where
    F: Fn(&Array1<f64>) -> Result<f64>,
{
    let f0 = f(x)?;
    let mut g = Array1::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        g[i] = (f(&xp)? - f0) / h;
    }
    Ok(g)
}

/// Forward-difference gradient of the full pipeline objective. Every
/// perturbed run reuses the baseline step sequence, and perturbed modes are
/// aligned against the same targets as the baseline.
pub fn fd_gradient(
    problem: &Problem,
    x: &Array1<f64>,
    objective: &ObjectiveSpec,
    h: f64,
) -> Result<Array1<f64>> {
    let components = Components::All.resolve(x.len());
    let values = fd_components(problem, x, objective, h, &components)?;
    let mut g = Array1::zeros(x.len());
    for (i, v) in components.into_iter().zip(values) {
        g[i] = v?;
    }
    Ok(g)
}

/// FD values for selected components; failed perturbations are reported per
/// component. Components are evaluated in parallel.
fn fd_components(
    problem: &Problem,
    x: &Array1<f64>,
    objective: &ObjectiveSpec,
    h: f64,
    components: &[usize],
) -> Result<Vec<Result<f64>>> {
    let baseline = problem.pipeline_at(x, objective)?;
    let f0 = crate::objectives::evaluate(objective, &baseline.centered, &baseline.triplets)?;
    let dts = baseline.trajectory.dts.clone();
    Ok(components
        .par_iter()
        .map(|&i| {
            let mut xp = x.clone();
            xp[i] += h;
            problem
                .objective_value_with_dts(&xp, objective, &dts)
                .map(|fp| (fp - f0) / h)
        })
        .collect())
}

/// Build the adjoint-versus-FD report.
pub fn grad_check(
    problem: &Problem,
    x: &Array1<f64>,
    objective: &ObjectiveSpec,
    h: f64,
    components: Components,
) -> Result<GradCheckReport> {
    let t0 = Instant::now();
    let _f = problem.objective_value(x, objective)?;
    let forward_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (_, adjoint) = problem.objective_and_gradient(x, objective)?;
    let adjoint_seconds = t1.elapsed().as_secs_f64();

    let list = components.resolve(x.len());
    let t2 = Instant::now();
    let fd_values = fd_components(problem, x, objective, h, &list)?;
    let fd_seconds = t2.elapsed().as_secs_f64();

    let rows = list
        .iter()
        .zip(fd_values)
        .map(|(&i, fd)| build_row(i, adjoint[i], fd))
        .collect();
    Ok(GradCheckReport {
        rows,
        h_fd: h,
        objective: objective.kind.name().to_string(),
        forward_seconds,
        adjoint_seconds,
        fd_seconds,
    })
}

fn build_row(index: usize, adjoint: f64, fd: Result<f64>) -> GradCheckRow {
    let label = format!("alpha_c_{}", index + 1);
    match fd {
        Ok(fd) => {
            let abs_diff = (adjoint - fd).abs();
            let rel_err = if fd != 0.0 { Some(abs_diff / fd.abs()) } else { None };
            GradCheckRow {
                index,
                label,
                adjoint,
                fd,
                abs_diff,
                rel_err,
                valid: true,
            }
        }
        Err(_) => GradCheckRow {
            index,
            label,
            adjoint,
            fd: f64::NAN,
            abs_diff: f64::NAN,
            rel_err: None,
            valid: false,
        },
    }
}

/// Outcome of the randomized dot-product linearization check.
#[derive(Debug, Clone)]
pub struct LinearizationReport {
    pub worst_rel_err: f64,
    pub trials: usize,
    /// Trials whose direction or adjoint vector was degenerate (skipped).
    pub skipped: usize,
}

impl LinearizationReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst_rel_err <= tol
    }
}

/// Randomized dot-product tests `<J v, y> = <v, J^T y>` for both transpose
/// products, with `J v` from central differences of the spatial residual.
pub fn linearization_check(
    state: &Array1<f64>,
    alpha: &Array1<f64>,
    grid: &Grid,
    config: &SolverConfig,
    trials: usize,
    seed: u64,
) -> Result<LinearizationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = state.len();
    let n = alpha.len();
    let h = 1e-7;
    let mut worst = 0.0_f64;
    let mut skipped = 0usize;
    for _ in 0..trials {
        let v: Array1<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Array1<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().all(|&a| a == 0.0) || y.iter().all(|&a| a == 0.0) {
            skipped += 1;
            continue;
        }
        // State Jacobian.
        let rp = spatial_residual(&(state + &(h * &v)), alpha, grid, config)?;
        let rm = spatial_residual(&(state - &(h * &v)), alpha, grid, config)?;
        let jv = (&rp - &rm) / (2.0 * h);
        let jty = jacobian_transpose_product(state, alpha, grid, config, &y)?;
        let (lhs, rhs) = (jv.dot(&y), v.dot(&jty));
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-12));

        // Design Jacobian.
        let w: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ap = alpha + &(h * &w);
        let am = alpha - &(h * &w);
        let rp = spatial_residual(state, &ap, grid, config)?;
        let rm = spatial_residual(state, &am, grid, config)?;
        let jw = (&rp - &rm) / (2.0 * h);
        let dty = design_jacobian_transpose_product(state, grid, config, &y)?;
        let (lhs, rhs) = (jw.dot(&y), w.dot(&dty));
        let denom = rhs.abs().max(1e-12);
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    Ok(LinearizationReport {
        worst_rel_err: worst,
        trials,
        skipped,
    })
}
