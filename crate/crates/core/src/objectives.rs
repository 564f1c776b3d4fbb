//! Objective functions over modal and mean-flow quantities, together with
//! their exact partial derivatives.
//!
//! Callers must sign-align each computed triplet against its target mode
//! before evaluating; see [`crate::pipeline`].

use ndarray::{Array1, Array2};
use ndarray_linalg::Norm;

use crate::error::{McfiError, Result};
use crate::model::SingularTriplet;
use crate::pod::CenteredSnapshots;

/// Distance below which the norm-type losses stop being differentiable.
pub const NORM_SINGULARITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `f = 1/2 ||phi_1 - phi_1*||^2`
    QuadraticMode,
    /// `f = ||phi_1 - phi_1*||`
    ModeNorm,
    /// `f = ||phi_1 - phi_1*|| + (sigma_1 - sigma_1*)^2`
    ModeNormPlusEnergy,
    /// `f = sum_i ||phi_i - phi_i*|| + (sigma_i - sigma_i*)^2`
    MultiMode,
    /// `f = ||u_bar - u_bar*||^2`
    MeanFlow,
    /// `f = ||u_bar - u_bar*||^2 + lambda sum_i ||phi_i - phi_i*||^2`
    MeanFlowPlusModes,
    /// `f = -sigma_1 / sigma_2`
    SpectralGap,
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::QuadraticMode => "quadratic_mode",
            ObjectiveKind::ModeNorm => "mode_norm",
            ObjectiveKind::ModeNormPlusEnergy => "mode_norm_energy",
            ObjectiveKind::MultiMode => "multi_mode",
            ObjectiveKind::MeanFlow => "mean_flow",
            ObjectiveKind::MeanFlowPlusModes => "mean_flow_modes",
            ObjectiveKind::SpectralGap => "spectral_gap",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "quadratic_mode" => ObjectiveKind::QuadraticMode,
            "mode_norm" => ObjectiveKind::ModeNorm,
            "mode_norm_energy" => ObjectiveKind::ModeNormPlusEnergy,
            "multi_mode" => ObjectiveKind::MultiMode,
            "mean_flow" => ObjectiveKind::MeanFlow,
            "mean_flow_modes" => ObjectiveKind::MeanFlowPlusModes,
            "spectral_gap" => ObjectiveKind::SpectralGap,
            other => {
                return Err(McfiError::Config(format!("unknown objective kind '{other}'")))
            }
        })
    }
}

/// Target data extracted from a reference run (or measurements).
#[derive(Debug, Clone, Default)]
pub struct Targets {
    /// Unit-norm target modes, one per tracked mode.
    pub modes: Vec<Array1<f64>>,
    /// Target singular values, aligned with `modes`.
    pub sigmas: Vec<f64>,
    /// Target temporal mean, for the mean-flow objectives.
    pub mean: Option<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Number of modes entering the loss (fixed to the kind's needs where the
    /// formula dictates it; `MultiMode`/`MeanFlowPlusModes` use it directly).
    pub mode_count: usize,
    /// Weight of the mode term in `MeanFlowPlusModes`.
    pub lambda: f64,
    pub targets: Targets,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, mode_count: usize, targets: Targets) -> Self {
        ObjectiveSpec {
            kind,
            mode_count,
            lambda: 1.0,
            targets,
        }
    }

    /// Number of computed POD modes the evaluation needs.
    pub fn required_modes(&self) -> usize {
        match self.kind {
            ObjectiveKind::QuadraticMode | ObjectiveKind::ModeNorm => 1,
            ObjectiveKind::ModeNormPlusEnergy => 1,
            ObjectiveKind::MultiMode | ObjectiveKind::MeanFlowPlusModes => self.mode_count,
            ObjectiveKind::MeanFlow => 0,
            ObjectiveKind::SpectralGap => 2,
        }
    }

    /// Number of target (mode, sigma) pairs the evaluation needs.
    fn required_targets(&self) -> usize {
        match self.kind {
            ObjectiveKind::QuadraticMode | ObjectiveKind::ModeNorm => 1,
            ObjectiveKind::ModeNormPlusEnergy => 1,
            ObjectiveKind::MultiMode | ObjectiveKind::MeanFlowPlusModes => self.mode_count,
            ObjectiveKind::MeanFlow | ObjectiveKind::SpectralGap => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = self.required_targets();
        if self.targets.modes.len() < need {
            return Err(McfiError::Config(format!(
                "objective {} needs {need} target mode(s), got {}",
                self.kind.name(),
                self.targets.modes.len()
            )));
        }
        for (i, m) in self.targets.modes.iter().take(need).enumerate() {
            let n = m.norm_l2();
            if (n - 1.0).abs() > 1e-10 {
                return Err(McfiError::Config(format!(
                    "target mode {i} is not unit norm (|.| = {n})"
                )));
            }
        }
        let needs_sigma = matches!(
            self.kind,
            ObjectiveKind::ModeNormPlusEnergy | ObjectiveKind::MultiMode
        );
        if needs_sigma && self.targets.sigmas.len() < need {
            return Err(McfiError::Config(format!(
                "objective {} needs {need} target singular value(s), got {}",
                self.kind.name(),
                self.targets.sigmas.len()
            )));
        }
        if matches!(
            self.kind,
            ObjectiveKind::MeanFlow | ObjectiveKind::MeanFlowPlusModes
        ) && self.targets.mean.is_none()
        {
            return Err(McfiError::Config("mean-flow objective needs a target mean".into()));
        }
        if self.lambda < 0.0 {
            return Err(McfiError::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Partial derivative of the objective with respect to the stacked snapshot
/// states.
#[derive(Debug, Clone)]
pub enum StatePartial {
    /// Objective does not depend on the states directly (only through the
    /// POD residual constraint).
    Zero,
    /// The same column repeated for every snapshot (mean-flow objectives).
    UniformColumns(Array1<f64>),
}

impl StatePartial {
    /// Materialize as a dense `n_s x n_t` matrix.
    pub fn to_matrix(&self, n_s: usize, n_t: usize) -> Array2<f64> {
        match self {
            StatePartial::Zero => Array2::zeros((n_s, n_t)),
            StatePartial::UniformColumns(col) => {
                let mut g = Array2::zeros((n_s, n_t));
                for mut c in g.columns_mut() {
                    c.assign(col);
                }
                g
            }
        }
    }
}

/// Partial derivatives with respect to one singular triplet.
#[derive(Debug, Clone)]
pub struct ModalPartial {
    pub d_mode: Array1<f64>,
    pub d_coeffs: Array1<f64>,
    pub d_sigma: f64,
}

/// All partials consumed by the adjoint gradient assembly. The direct design
/// partial is zero for every objective here.
#[derive(Debug, Clone)]
pub struct Partials {
    pub state: StatePartial,
    pub modal: Vec<ModalPartial>,
}

fn check_modes(spec: &ObjectiveSpec, triplets: &[SingularTriplet]) -> Result<()> {
    spec.validate()?;
    if triplets.len() < spec.required_modes() {
        return Err(McfiError::Config(format!(
            "objective {} needs {} computed mode(s), got {}",
            spec.kind.name(),
            spec.required_modes(),
            triplets.len()
        )));
    }
    Ok(())
}

/// Evaluate the objective. `triplets` must already be sign-aligned against
/// the targets.
pub fn evaluate(
    spec: &ObjectiveSpec,
    centered: &CenteredSnapshots,
    triplets: &[SingularTriplet],
) -> Result<f64> {
    check_modes(spec, triplets)?;
    let t = &spec.targets;
    Ok(match spec.kind {
        ObjectiveKind::QuadraticMode => {
            let d = &triplets[0].mode - &t.modes[0];
            0.5 * d.dot(&d)
        }
        ObjectiveKind::ModeNorm => (&triplets[0].mode - &t.modes[0]).norm_l2(),
        ObjectiveKind::ModeNormPlusEnergy => {
            let d = (&triplets[0].mode - &t.modes[0]).norm_l2();
            d + (triplets[0].sigma - t.sigmas[0]).powi(2)
        }
        ObjectiveKind::MultiMode => (0..spec.mode_count)
            .map(|i| {
                (&triplets[i].mode - &t.modes[i]).norm_l2()
                    + (triplets[i].sigma - t.sigmas[i]).powi(2)
            })
            .sum(),
        ObjectiveKind::MeanFlow => {
            let d = &centered.mean - t.mean.as_ref().expect("validated");
            d.dot(&d)
        }
        ObjectiveKind::MeanFlowPlusModes => {
            let d = &centered.mean - t.mean.as_ref().expect("validated");
            let modes: f64 = (0..spec.mode_count)
                .map(|i| {
                    let dm = &triplets[i].mode - &t.modes[i];
                    dm.dot(&dm)
                })
                .sum();
            d.dot(&d) + spec.lambda * modes
        }
        ObjectiveKind::SpectralGap => -triplets[0].sigma / triplets[1].sigma,
    })
}

/// Exact analytic partials of [`evaluate`] at the given point.
pub fn partials(
    spec: &ObjectiveSpec,
    centered: &CenteredSnapshots,
    triplets: &[SingularTriplet],
) -> Result<Partials> {
    check_modes(spec, triplets)?;
    let t = &spec.targets;
    let zero_modal = |tr: &SingularTriplet| ModalPartial {
        d_mode: Array1::zeros(tr.mode.len()),
        d_coeffs: Array1::zeros(tr.coeffs.len()),
        d_sigma: 0.0,
    };
    let norm_partial = |i: usize| -> Result<ModalPartial> {
        let d = &triplets[i].mode - &t.modes[i];
        let n = d.norm_l2();
        if n <= NORM_SINGULARITY {
            let value = evaluate(spec, centered, triplets)?;
            return Err(McfiError::NonDifferentiable { value, distance: n });
        }
        Ok(ModalPartial {
            d_mode: &d / n,
            d_coeffs: Array1::zeros(triplets[i].coeffs.len()),
            d_sigma: 0.0,
        })
    };

    let out = match spec.kind {
        ObjectiveKind::QuadraticMode => Partials {
            state: StatePartial::Zero,
            modal: vec![ModalPartial {
                d_mode: &triplets[0].mode - &t.modes[0],
                d_coeffs: Array1::zeros(triplets[0].coeffs.len()),
                d_sigma: 0.0,
            }],
        },
        ObjectiveKind::ModeNorm => Partials {
            state: StatePartial::Zero,
            modal: vec![norm_partial(0)?],
        },
        ObjectiveKind::ModeNormPlusEnergy => {
            let mut p = norm_partial(0)?;
            p.d_sigma = 2.0 * (triplets[0].sigma - t.sigmas[0]);
            Partials {
                state: StatePartial::Zero,
                modal: vec![p],
            }
        }
        ObjectiveKind::MultiMode => {
            let mut modal = Vec::with_capacity(spec.mode_count);
            for i in 0..spec.mode_count {
                let mut p = norm_partial(i)?;
                p.d_sigma = 2.0 * (triplets[i].sigma - t.sigmas[i]);
                modal.push(p);
            }
            Partials {
                state: StatePartial::Zero,
                modal,
            }
        }
        ObjectiveKind::MeanFlow => {
            let d = &centered.mean - t.mean.as_ref().expect("validated");
            let n_t = centered.n_snapshots() as f64;
            Partials {
                state: StatePartial::UniformColumns(2.0 / n_t * &d),
                modal: Vec::new(),
            }
        }
        ObjectiveKind::MeanFlowPlusModes => {
            let d = &centered.mean - t.mean.as_ref().expect("validated");
            let n_t = centered.n_snapshots() as f64;
            let modal = (0..spec.mode_count)
                .map(|i| ModalPartial {
                    d_mode: 2.0 * spec.lambda * &(&triplets[i].mode - &t.modes[i]),
                    d_coeffs: Array1::zeros(triplets[i].coeffs.len()),
                    d_sigma: 0.0,
                })
                .collect();
            Partials {
                state: StatePartial::UniformColumns(2.0 / n_t * &d),
                modal,
            }
        }
        ObjectiveKind::SpectralGap => {
            let (s1, s2) = (triplets[0].sigma, triplets[1].sigma);
            let mut m0 = zero_modal(&triplets[0]);
            m0.d_sigma = -1.0 / s2;
            let mut m1 = zero_modal(&triplets[1]);
            m1.d_sigma = s1 / (s2 * s2);
            Partials {
                state: StatePartial::Zero,
                modal: vec![m0, m1],
            }
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit(v: Array1<f64>) -> Array1<f64> {
        let n = v.norm_l2();
        v / n
    }

    fn toy_setup(m: usize) -> (CenteredSnapshots, Vec<SingularTriplet>, Targets) {
        // Hand-built orthonormal modes on a 4-node state, 3 snapshots.
        let phi1 = unit(array![1.0, 1.0, 0.0, 0.0]);
        let phi2 = unit(array![0.0, 0.0, 1.0, -1.0]);
        let v1 = unit(array![1.0, 0.0, 1.0]);
        let v2 = unit(array![0.0, 1.0, 0.0]);
        let (s1, s2) = (3.0, 2.0);
        let mut matrix = Array2::zeros((4, 3));
        for i in 0..4 {
            for j in 0..3 {
                matrix[[i, j]] = s1 * phi1[i] * v1[j] + s2 * phi2[i] * v2[j];
            }
        }
        let centered = CenteredSnapshots {
            matrix,
            mean: array![0.1, -0.2, 0.3, 0.0],
        };
        let triplets = vec![
            SingularTriplet { mode: phi1.clone(), sigma: s1, coeffs: v1, index: 0 },
            SingularTriplet { mode: phi2.clone(), sigma: s2, coeffs: v2, index: 1 },
        ];
        let targets = Targets {
            modes: vec![unit(array![1.0, 0.9, 0.1, 0.0]), unit(array![0.1, 0.0, 1.0, -0.9])]
                .into_iter()
                .take(m)
                .collect(),
            sigmas: vec![2.5, 1.5].into_iter().take(m).collect(),
            mean: Some(array![0.0, 0.0, 0.5, 0.1]),
        };
        (centered, triplets, targets)
    }

    use ndarray::Array2;

    #[test]
    fn zero_loss_at_matching_mode() {
        let (centered, triplets, _) = toy_setup(0);
        let targets = Targets {
            modes: vec![triplets[0].mode.clone()],
            sigmas: vec![triplets[0].sigma],
            mean: None,
        };
        let f1 = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets.clone());
        assert_eq!(evaluate(&f1, &centered, &triplets).unwrap(), 0.0);
        let f2 = ObjectiveSpec::new(ObjectiveKind::ModeNorm, 1, targets);
        assert_eq!(evaluate(&f2, &centered, &triplets).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_mode_is_nonnegative_and_zero_only_at_target() {
        let (centered, triplets, targets) = toy_setup(1);
        let spec = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets);
        let f = evaluate(&spec, &centered, &triplets).unwrap();
        assert!(f > 0.0);
    }

    #[test]
    fn spectral_gap_value_and_partials() {
        let (centered, triplets, mut targets) = toy_setup(0);
        targets.modes.clear();
        let spec = ObjectiveSpec::new(ObjectiveKind::SpectralGap, 2, targets);
        // sigma = (3, 2): f = -1.5, df/ds1 = -1/2, df/ds2 = 3/4.
        let f = evaluate(&spec, &centered, &triplets).unwrap();
        assert_eq!(f, -1.5);
        let p = partials(&spec, &centered, &triplets).unwrap();
        assert_eq!(p.modal[0].d_sigma, -0.5);
        assert_eq!(p.modal[1].d_sigma, 0.75);
        // sigma_1 = 2 sigma_2 gives exactly -2.
        let mut tr = triplets.clone();
        tr[0].sigma = 4.0;
        assert_eq!(evaluate(&spec, &centered, &tr).unwrap(), -2.0);
    }

    #[test]
    fn quadratic_partials_vanish_at_target() {
        let (centered, triplets, _) = toy_setup(0);
        let targets = Targets {
            modes: vec![triplets[0].mode.clone()],
            sigmas: vec![triplets[0].sigma],
            mean: None,
        };
        let spec = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets);
        let p = partials(&spec, &centered, &triplets).unwrap();
        assert!(p.modal[0].d_mode.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mode_norm_singularity_is_an_error() {
        let (centered, triplets, _) = toy_setup(0);
        let targets = Targets {
            modes: vec![triplets[0].mode.clone()],
            sigmas: vec![triplets[0].sigma],
            mean: None,
        };
        let spec = ObjectiveSpec::new(ObjectiveKind::ModeNorm, 1, targets);
        match partials(&spec, &centered, &triplets) {
            Err(McfiError::NonDifferentiable { value, .. }) => assert_eq!(value, 0.0),
            other => panic!("expected NonDifferentiable, got {other:?}"),
        }
    }

    /// Central finite difference of `evaluate` under a perturbation of the
    /// triplets (trajectory frozen), the oracle for `partials`.
    fn fd_directional(
        spec: &ObjectiveSpec,
        centered: &CenteredSnapshots,
        triplets: &[SingularTriplet],
        d_modes: &[Array1<f64>],
        d_sigmas: &[f64],
        h: f64,
    ) -> f64 {
        let perturb = |sign: f64| -> f64 {
            let moved: Vec<SingularTriplet> = triplets
                .iter()
                .enumerate()
                .map(|(i, t)| SingularTriplet {
                    mode: &t.mode + &(sign * h * &d_modes[i]),
                    sigma: t.sigma + sign * h * d_sigmas[i],
                    coeffs: t.coeffs.clone(),
                    index: t.index,
                })
                .collect();
            evaluate(spec, centered, &moved).unwrap()
        };
        (perturb(1.0) - perturb(-1.0)) / (2.0 * h)
    }

    #[test]
    fn partials_match_directional_fd() {
        for kind in [
            ObjectiveKind::QuadraticMode,
            ObjectiveKind::ModeNorm,
            ObjectiveKind::ModeNormPlusEnergy,
            ObjectiveKind::MultiMode,
            ObjectiveKind::SpectralGap,
        ] {
            let m = match kind {
                ObjectiveKind::MultiMode => 2,
                _ => 1,
            };
            let (centered, triplets, targets) = toy_setup(2);
            let spec = ObjectiveSpec::new(kind, m, targets);
            let p = partials(&spec, &centered, &triplets).unwrap();
            let d_modes: Vec<Array1<f64>> = (0..2)
                .map(|i| {
                    (0..4)
                        .map(|k| ((k + 2 * i) as f64 * 0.7 + 0.3).sin())
                        .collect()
                })
                .collect();
            let d_sigmas = [0.37, -0.21];
            let fd = fd_directional(&spec, &centered, &triplets, &d_modes, &d_sigmas, 1e-7);
            let mut analytic = 0.0;
            for (i, mp) in p.modal.iter().enumerate() {
                analytic += mp.d_mode.dot(&d_modes[i]) + mp.d_sigma * d_sigmas[i];
            }
            let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
            assert!(rel <= 1e-6, "{}: analytic {analytic} vs fd {fd}", spec.kind.name());
        }
    }

    #[test]
    fn mean_flow_value_and_partials() {
        let (centered, triplets, targets) = toy_setup(1);
        let spec = ObjectiveSpec::new(ObjectiveKind::MeanFlow, 0, targets.clone());
        let d = &centered.mean - targets.mean.as_ref().unwrap();
        assert!((evaluate(&spec, &centered, &triplets).unwrap() - d.dot(&d)).abs() < 1e-15);
        let p = partials(&spec, &centered, &triplets).unwrap();
        match p.state {
            StatePartial::UniformColumns(col) => {
                let n_t = centered.n_snapshots() as f64;
                for i in 0..col.len() {
                    assert!((col[i] - 2.0 / n_t * d[i]).abs() < 1e-15);
                }
            }
            _ => panic!("mean flow must produce uniform state partials"),
        }
        assert!(p.modal.is_empty());
    }

    #[test]
    fn mean_flow_plus_modes_combines_terms() {
        let (centered, triplets, targets) = toy_setup(2);
        let mut spec = ObjectiveSpec::new(ObjectiveKind::MeanFlowPlusModes, 2, targets.clone());
        spec.lambda = 0.7;
        let d = &centered.mean - targets.mean.as_ref().unwrap();
        let mut expect = d.dot(&d);
        for i in 0..2 {
            let dm = &triplets[i].mode - &targets.modes[i];
            expect += 0.7 * dm.dot(&dm);
        }
        let f = evaluate(&spec, &centered, &triplets).unwrap();
        assert!((f - expect).abs() < 1e-14);
        let p = partials(&spec, &centered, &triplets).unwrap();
        assert_eq!(p.modal.len(), 2);
        let dm0 = &triplets[0].mode - &targets.modes[0];
        for k in 0..4 {
            assert!((p.modal[0].d_mode[k] - 2.0 * 0.7 * dm0[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn missing_targets_are_config_errors() {
        let (centered, triplets, _) = toy_setup(0);
        let spec = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, Targets::default());
        assert!(matches!(
            evaluate(&spec, &centered, &triplets),
            Err(McfiError::Config(_))
        ));
    }

    #[test]
    fn evaluation_is_invariant_under_joint_flip_after_alignment() {
        // Alignment applied before the loss makes the pipeline insensitive to
        // the SVD's sign choice.
        let (centered, triplets, targets) = toy_setup(1);
        let spec = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets.clone());
        let aligned = crate::pod::align_sign(&triplets[0], &targets.modes[0]).unwrap();
        let f0 = evaluate(&spec, &centered, &[aligned]).unwrap();
        let flipped = SingularTriplet {
            mode: triplets[0].mode.mapv(|v| -v),
            sigma: triplets[0].sigma,
            coeffs: triplets[0].coeffs.mapv(|v| -v),
            index: 0,
        };
        let re_aligned = crate::pod::align_sign(&flipped, &targets.modes[0]).unwrap();
        let f1 = evaluate(&spec, &centered, &[re_aligned]).unwrap();
        assert_eq!(f0, f1);
    }
}
