//! Bound-constrained limited-memory quasi-Newton minimization with Armijo
//! backtracking, plus iteration-history capture.

use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{McfiError, Result};
use crate::objectives::ObjectiveSpec;
use crate::pipeline::Problem;

/// Anything the optimizer can minimize.
pub trait Minimizable {
    fn value(&self, x: &Array1<f64>) -> Result<f64>;
    fn value_and_gradient(&self, x: &Array1<f64>) -> Result<(f64, Array1<f64>)>;
}

/// The mode-matching inverse problem: a forward problem plus an objective.
pub struct InverseProblem<'a> {
    pub problem: &'a Problem,
    pub objective: &'a ObjectiveSpec,
}

impl Minimizable for InverseProblem<'_> {
    fn value(&self, x: &Array1<f64>) -> Result<f64> {
        self.problem.objective_value(x, self.objective)
    }

    fn value_and_gradient(&self, x: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        self.problem.objective_and_gradient(x, self.objective)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Stop when the projected gradient infinity norm falls below this.
    pub grad_tol: f64,
    /// Stop when the objective value falls below this.
    pub obj_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking factor in (0, 1).
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iters: 200,
            grad_tol: 1e-10,
            obj_tol: 1e-12,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailure,
    /// The norm-type objective hit its non-differentiable point with the
    /// value already below tolerance: converged onto the target.
    SingularPointConverged,
    Failed(String),
}

impl StopReason {
    pub fn converged(&self) -> bool {
        matches!(
            self,
            StopReason::GradientTolerance
                | StopReason::ObjectiveTolerance
                | StopReason::SingularPointConverged
        )
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::GradientTolerance => write!(f, "gradient_tolerance"),
            StopReason::ObjectiveTolerance => write!(f, "objective_tolerance"),
            StopReason::MaxIterations => write!(f, "max_iterations"),
            StopReason::LineSearchFailure => write!(f, "line_search_failure"),
            StopReason::SingularPointConverged => write!(f, "singular_point_converged"),
            StopReason::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub step: f64,
    pub x: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizeHistory {
    pub iterations: Vec<IterationRecord>,
    pub reason: StopReason,
}

impl OptimizeHistory {
    pub fn final_f(&self) -> f64 {
        self.iterations.last().map(|r| r.f).unwrap_or(f64::NAN)
    }

    /// Serialize as CSV: `iter,f,grad_inf_norm,step,x_0..x_{n-1}`.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut out = String::new();
        for line in comment.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("# termination={}\n", self.reason));
        let n = self.iterations.first().map(|r| r.x.len()).unwrap_or(0);
        out.push_str("iter,f,grad_inf_norm,step");
        for j in 0..n {
            out.push_str(&format!(",x_{j}"));
        }
        out.push('\n');
        for r in &self.iterations {
            out.push_str(&format!("{},{},{},{}", r.iter, r.f, r.grad_inf_norm, r.step));
            for v in r.x.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn project(x: &Array1<f64>, lo: &Array1<f64>, hi: &Array1<f64>) -> Array1<f64> {
    Array1::from_iter(
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&v, (&l, &h))| v.clamp(l, h)),
    )
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, &a| m.max(a.abs()))
}

/// Infinity norm of the projected gradient `x - P(x - g)`.
fn projected_gradient_norm(
    x: &Array1<f64>,
    g: &Array1<f64>,
    lo: &Array1<f64>,
    hi: &Array1<f64>,
) -> f64 {
    let moved = project(&(x - g), lo, hi);
    inf_norm(&(x - &moved))
}

/// Active-set fingerprint used to reset curvature memory when it changes.
fn active_set(x: &Array1<f64>, lo: &Array1<f64>, hi: &Array1<f64>) -> Vec<i8> {
    x.iter()
        .zip(lo.iter().zip(hi.iter()))
        .map(|(&v, (&l, &h))| {
            if v <= l {
                -1
            } else if v >= h {
                1
            } else {
                0
            }
        })
        .collect()
}

/// Two-loop L-BFGS direction `-H g` from the stored pairs.
fn lbfgs_direction(
    g: &Array1<f64>,
    pairs: &VecDeque<(Array1<f64>, Array1<f64>)>,
) -> Array1<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / y.dot(s);
        let a = rho * s.dot(&q);
        q = &q - &(a * y);
        alphas.push((a, rho));
    }
    let gamma = pairs
        .back()
        .map(|(s, y)| s.dot(y) / y.dot(y))
        .unwrap_or(1.0);
    let mut z = gamma * &q;
    for ((s, y), (a, rho)) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&z);
        z = &z + &((a - b) * s);
    }
    -z
}

/// Projected limited-memory quasi-Newton descent with Armijo backtracking.
/// Every iterate satisfies the bounds exactly; accepted objective values are
/// non-increasing.
pub fn minimize<M: Minimizable>(
    target: &M,
    x0: &Array1<f64>,
    lower: &Array1<f64>,
    upper: &Array1<f64>,
    options: &OptimizeOptions,
) -> Result<(Array1<f64>, OptimizeHistory)> {
    if lower.len() != x0.len() || upper.len() != x0.len() {
        return Err(McfiError::Dimension("bounds do not match x0".into()));
    }
    if lower.iter().zip(upper.iter()).any(|(l, h)| l > h) {
        return Err(McfiError::Config("lower bound exceeds upper bound".into()));
    }
    let mut x = project(x0, lower, upper);
    if x.iter().zip(x0.iter()).any(|(a, b)| a != b) {
        log::warn!("initial design projected into bounds");
    }

    let mut history = OptimizeHistory {
        iterations: Vec::new(),
        reason: StopReason::MaxIterations,
    };
    let mut record = |it: usize, f: f64, g: f64, step: f64, x: &Array1<f64>| {
        history.iterations.push(IterationRecord {
            iter: it,
            f,
            grad_inf_norm: g,
            step,
            x: x.clone(),
        });
    };

    let (mut f, mut g) = match target.value_and_gradient(&x) {
        Ok(fg) => fg,
        Err(McfiError::NonDifferentiable { value, .. }) if value <= options.obj_tol => {
            record(0, value, 0.0, 0.0, &x);
            history.reason = StopReason::SingularPointConverged;
            return Ok((x, history));
        }
        Err(e) => return Err(e),
    };
    let mut pg = projected_gradient_norm(&x, &g, lower, upper);
    record(0, f, pg, 0.0, &x);

    let mut pairs: VecDeque<(Array1<f64>, Array1<f64>)> = VecDeque::new();
    let mut active = active_set(&x, lower, upper);

    for it in 1..=options.max_iters {
        if f <= options.obj_tol {
            history.reason = StopReason::ObjectiveTolerance;
            return Ok((x, history));
        }
        if pg <= options.grad_tol {
            history.reason = StopReason::GradientTolerance;
            return Ok((x, history));
        }

        let mut dir = lbfgs_direction(&g, &pairs);
        if dir.dot(&g) >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            pairs.clear();
            dir = -g.clone();
        }

        // Armijo backtracking on the projected path.
        let mut step = 1.0_f64;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let candidate = project(&(&x + &(step * &dir)), lower, upper);
            let dx = &candidate - &x;
            if inf_norm(&dx) == 0.0 {
                break;
            }
            let predicted = g.dot(&dx);
            match target.value(&candidate) {
                Ok(fc) if fc <= f + options.armijo_c * predicted.min(0.0) && fc <= f => {
                    accepted = Some((candidate, fc, step));
                    break;
                }
                Ok(_) => {}
                // A diverged forward solve just shrinks the step.
                Err(McfiError::Divergence { .. }) => {}
                Err(McfiError::NonDifferentiable { value, .. })
                    if value <= options.obj_tol =>
                {
                    record(it, value, pg, step, &candidate);
                    history.reason = StopReason::SingularPointConverged;
                    return Ok((candidate, history));
                }
                Err(e) => {
                    history.reason = StopReason::Failed(e.to_string());
                    return Ok((x, history));
                }
            }
            step *= options.backtrack;
        }

        let Some((x_new, f_new, used_step)) = accepted else {
            history.reason = StopReason::LineSearchFailure;
            return Ok((x, history));
        };

        let (f_next, g_next) = match target.value_and_gradient(&x_new) {
            Ok(fg) => fg,
            Err(McfiError::NonDifferentiable { value, .. }) if value <= options.obj_tol => {
                record(it, value, pg, used_step, &x_new);
                history.reason = StopReason::SingularPointConverged;
                return Ok((x_new, history));
            }
            Err(e) => {
                history.reason = StopReason::Failed(e.to_string());
                return Ok((x, history));
            }
        };
        debug_assert!((f_next - f_new).abs() <= 1e-12 * f_new.abs().max(1.0));

        let s = &x_new - &x;
        let yv = &g_next - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.dot(&s).sqrt() * yv.dot(&yv).sqrt() {
            pairs.push_back((s, yv));
            if pairs.len() > options.memory {
                pairs.pop_front();
            }
        }
        let new_active = active_set(&x_new, lower, upper);
        if new_active != active {
            pairs.clear();
            active = new_active;
        }

        x = x_new;
        f = f_next;
        g = g_next;
        pg = projected_gradient_norm(&x, &g, lower, upper);
        record(it, f, pg, used_step, &x);
    }
    history.reason = if f <= options.obj_tol {
        StopReason::ObjectiveTolerance
    } else {
        StopReason::MaxIterations
    };
    Ok((x, history))
}
