//! Problem bundles and the evaluation pipeline shared by verification,
//! optimization, and the command-line front end:
//! simulate -> center -> POD -> sign alignment -> objective.

use ndarray::Array1;

use crate::adjoint;
use crate::burgers::{self, SolverConfig};
use crate::error::Result;
use crate::model::{DesignSpec, Grid, SingularTriplet, Trajectory};
use crate::objectives::{self, ObjectiveSpec, Targets};
use crate::pod::{self, CenteredSnapshots};

/// A forward problem: grid, solver settings, design parametrization, and the
/// initial state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub config: SolverConfig,
    pub design: DesignSpec,
    pub initial: Array1<f64>,
}

/// Everything the pipeline produces at one design point.
pub struct PipelineState {
    pub trajectory: Trajectory,
    pub centered: CenteredSnapshots,
    /// Sign-aligned triplets, ready for objective evaluation and the adjoint.
    pub triplets: Vec<SingularTriplet>,
    /// Echo of the POD degeneracy flag.
    pub near_degenerate: bool,
}

impl Problem {
    /// The 1D verification setup: 161 nodes, Gaussian-bump controls.
    pub fn burgers_1d() -> Self {
        let grid = Grid::line(161);
        let initial = burgers::initial_condition(&grid);
        Problem {
            grid,
            config: SolverConfig::burgers_1d(),
            design: DesignSpec::gaussian_bumps_1d(),
            initial,
        }
    }

    /// A reduced 1D setup for cheap tests.
    pub fn burgers_1d_sized(n: usize, t_end: f64) -> Self {
        let grid = Grid::line(n);
        let initial = burgers::initial_condition(&grid);
        let mut config = SolverConfig::burgers_1d();
        config.t_end = t_end;
        Problem {
            grid,
            config,
            design: DesignSpec::gaussian_bumps_1d(),
            initial,
        }
    }

    /// The 2D setup on an `n x n` grid (201 reproduces the reference study;
    /// 51 is the reduced verification variant).
    pub fn burgers_2d(n: usize) -> Self {
        let grid = Grid::rect(n, n);
        let initial = burgers::initial_condition(&grid);
        Problem {
            grid,
            config: SolverConfig::burgers_2d(),
            design: DesignSpec::strips_2d(),
            initial,
        }
    }

    pub fn simulate(&self, x: &Array1<f64>) -> Result<Trajectory> {
        burgers::simulate(&self.design, x, &self.grid, &self.config, &self.initial)
    }

    pub fn simulate_with_dts(&self, x: &Array1<f64>, dts: &[f64]) -> Result<Trajectory> {
        burgers::simulate_with_dts(&self.design, x, &self.grid, &self.config, &self.initial, dts)
    }

    /// Generate mode/singular-value/mean targets from a reference design.
    /// Target modes carry the canonical intrinsic sign.
    pub fn make_targets(&self, x_star: &Array1<f64>, m: usize) -> Result<Targets> {
        let trajectory = self.simulate(x_star)?;
        let centered = pod::center(&trajectory)?;
        let modes = pod::compute_modes(&centered, m)?;
        Ok(Targets {
            modes: modes.triplets.iter().map(|t| t.mode.clone()).collect(),
            sigmas: modes.triplets.iter().map(|t| t.sigma).collect(),
            mean: Some(centered.mean),
        })
    }

    fn finish_pipeline(
        &self,
        trajectory: Trajectory,
        objective: &ObjectiveSpec,
    ) -> Result<PipelineState> {
        let centered = pod::center(&trajectory)?;
        let needed = objective.required_modes();
        let (mut triplets, near_degenerate) = if needed == 0 {
            (Vec::new(), false)
        } else {
            let modes = pod::compute_modes(&centered, needed)?;
            (modes.triplets, modes.near_degenerate)
        };
        if near_degenerate {
            log::warn!(
                "singular-value gap below {:.0e}; modal sensitivities may be inaccurate",
                pod::DEGENERACY_GAP
            );
        }
        // Align each mode against its target before the loss sees it.
        for (i, t) in triplets.iter_mut().enumerate() {
            if let Some(reference) = objective.targets.modes.get(i) {
                *t = pod::align_sign(t, reference)?;
            }
        }
        Ok(PipelineState {
            trajectory,
            centered,
            triplets,
            near_degenerate,
        })
    }

    /// Run the full pipeline at `x`.
    pub fn pipeline_at(&self, x: &Array1<f64>, objective: &ObjectiveSpec) -> Result<PipelineState> {
        self.finish_pipeline(self.simulate(x)?, objective)
    }

    /// Run the pipeline at `x` reusing a prescribed step sequence.
    pub fn pipeline_with_dts(
        &self,
        x: &Array1<f64>,
        objective: &ObjectiveSpec,
        dts: &[f64],
    ) -> Result<PipelineState> {
        self.finish_pipeline(self.simulate_with_dts(x, dts)?, objective)
    }

    /// Objective value at `x`.
    pub fn objective_value(&self, x: &Array1<f64>, objective: &ObjectiveSpec) -> Result<f64> {
        let state = self.pipeline_at(x, objective)?;
        objectives::evaluate(objective, &state.centered, &state.triplets)
    }

    /// Objective value at `x` with frozen steps.
    pub fn objective_value_with_dts(
        &self,
        x: &Array1<f64>,
        objective: &ObjectiveSpec,
        dts: &[f64],
    ) -> Result<f64> {
        let state = self.pipeline_with_dts(x, objective, dts)?;
        objectives::evaluate(objective, &state.centered, &state.triplets)
    }

    /// Objective value and adjoint gradient from one forward solve and one
    /// backward sweep.
    pub fn objective_and_gradient(
        &self,
        x: &Array1<f64>,
        objective: &ObjectiveSpec,
    ) -> Result<(f64, Array1<f64>)> {
        let state = self.pipeline_at(x, objective)?;
        let f = objectives::evaluate(objective, &state.centered, &state.triplets)?;
        let grad = adjoint::total_gradient(
            &self.design,
            x,
            &state.trajectory,
            &state.centered,
            &state.triplets,
            objective,
            &self.grid,
            &self.config,
        )?;
        Ok((f, grad))
    }

    /// Gradient only, reusing an existing pipeline state at `x`.
    pub fn gradient_from_state(
        &self,
        x: &Array1<f64>,
        state: &PipelineState,
        objective: &ObjectiveSpec,
    ) -> Result<Array1<f64>> {
        adjoint::total_gradient(
            &self.design,
            x,
            &state.trajectory,
            &state.centered,
            &state.triplets,
            objective,
            &self.grid,
            &self.config,
        )
    }
}

/// Initial ramp profile for the 2D strip controls: 1 at the band edges,
/// peaking at 2 on the centerline.
pub fn ramp_profile(y: f64) -> f64 {
    if y.abs() > 0.8 {
        1.0
    } else if y <= 0.0 {
        1.0 + (y + 0.8) / 0.8
    } else {
        1.0 + (0.8 - y) / 0.8
    }
}

/// Target multi-peak profile (before smoothing), symmetric in `y`.
pub fn multi_peak_profile(y: f64) -> f64 {
    let t = y.abs();
    if t > 0.8 {
        1.0
    } else if t < 0.16 {
        1.0 + (3.0 - 1.0) / 0.16 * t
    } else if t < 0.32 {
        3.0 - (3.0 - 0.6) / 0.16 * (t - 0.16)
    } else if t < 0.48 {
        0.6 + (2.0 - 0.6) / 0.16 * (t - 0.32)
    } else if t < 0.64 {
        2.0 - (2.0 - 0.6) / 0.16 * (t - 0.48)
    } else {
        0.6 + (1.0 - 0.6) / 0.16 * (t - 0.64)
    }
}

fn strip_centers(spec: &DesignSpec) -> Vec<f64> {
    match spec {
        DesignSpec::Strips2d {
            count,
            band_lo,
            band_hi,
            ..
        } => {
            let h = (band_hi - band_lo) / *count as f64;
            (0..*count).map(|j| band_lo + (j as f64 + 0.5) * h).collect()
        }
        _ => Vec::new(),
    }
}

/// Sample a profile at the strip centers.
pub fn strip_values_from_profile(spec: &DesignSpec, profile: impl Fn(f64) -> f64) -> Array1<f64> {
    strip_centers(spec).into_iter().map(profile).collect()
}

/// Smooth strip values with a discrete Gaussian over strip indices
/// (`sigma` about three strips, i.e. 0.048 in y), clamping at the band edges.
pub fn smooth_strip_values(values: &Array1<f64>, sigma_strips: f64) -> Array1<f64> {
    let n = values.len() as isize;
    let radius = (3.0 * sigma_strips).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma_strips * sigma_strips)).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    Array1::from_iter((0..n).map(|j| {
        let mut acc = 0.0;
        for (w, k) in weights.iter().zip(-radius..=radius) {
            let idx = (j + k).clamp(0, n - 1) as usize;
            acc += w * values[idx];
        }
        acc / wsum
    }))
}

/// Ramp strip values used as the 2D initial design.
pub fn ramp_strip_values(spec: &DesignSpec) -> Array1<f64> {
    strip_values_from_profile(spec, ramp_profile)
}

/// Smoothed multi-peak strip values used as the 2D target design.
pub fn multi_peak_strip_values(spec: &DesignSpec) -> Array1<f64> {
    let raw = strip_values_from_profile(spec, multi_peak_profile);
    smooth_strip_values(&raw, 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::ObjectiveKind;
    use ndarray::array;

    #[test]
    fn profile_reference_values() {
        assert_eq!(multi_peak_profile(0.16), 3.0);
        assert_eq!(multi_peak_profile(0.0), 1.0);
        assert_eq!(multi_peak_profile(0.9), 1.0);
        assert!((multi_peak_profile(0.32) - 0.6).abs() < 1e-12);
        assert!((multi_peak_profile(0.48) - 2.0).abs() < 1e-12);
        assert!((multi_peak_profile(0.64) - 0.6).abs() < 1e-12);
        assert!((multi_peak_profile(0.8) - 1.0).abs() < 1e-12);
        assert_eq!(ramp_profile(0.0), 2.0);
        assert_eq!(ramp_profile(-0.8), 1.0);
        assert_eq!(ramp_profile(0.85), 1.0);
        // Symmetry.
        for y in [0.1, 0.33, 0.57, 0.79] {
            assert_eq!(multi_peak_profile(y), multi_peak_profile(-y));
            assert!((ramp_profile(y) - ramp_profile(-y)).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_preserves_constants_and_mass_range() {
        let spec = DesignSpec::strips_2d();
        let flat = Array1::from_elem(100, 1.7);
        let s = smooth_strip_values(&flat, 3.0);
        assert!(s.iter().all(|&v| (v - 1.7).abs() < 1e-12));

        let target = multi_peak_strip_values(&spec);
        let raw = strip_values_from_profile(&spec, multi_peak_profile);
        let max_raw = raw.iter().fold(f64::MIN, |m, &v| m.max(v));
        let min_raw = raw.iter().fold(f64::MAX, |m, &v| m.min(v));
        assert!(target.iter().all(|&v| v <= max_raw + 1e-12 && v >= min_raw - 1e-12));
        // Peak is attenuated but still prominent.
        let max_s = target.iter().fold(f64::MIN, |m, &v| m.max(v));
        assert!(max_s > 2.0 && max_s < 3.0);
    }

    #[test]
    fn constant_alpha_target_matches_plain_forward_mode() {
        // Target generated from an all-ones strip design equals the leading
        // mode of a plain forward run with uniform alpha.
        let problem = Problem::burgers_2d(17);
        let x = Array1::ones(100);
        let targets = problem.make_targets(&x, 1).unwrap();
        let objective = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets.clone());
        let f = problem.objective_value(&x, &objective).unwrap();
        assert!(f <= 1e-18, "self-target objective {f}");
    }

    #[test]
    fn frozen_dts_reproduce_the_same_pipeline() {
        let problem = Problem::burgers_1d_sized(41, 0.3);
        let x = array![0.1, -0.05, 0.0, 0.2];
        let targets = problem.make_targets(&array![0.25, -0.15, 0.05, 0.15], 1).unwrap();
        let objective = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets);
        let baseline = problem.pipeline_at(&x, &objective).unwrap();
        let f0 = problem.objective_value(&x, &objective).unwrap();
        let f1 = problem
            .objective_value_with_dts(&x, &objective, &baseline.trajectory.dts)
            .unwrap();
        assert_eq!(f0, f1);
    }
}
