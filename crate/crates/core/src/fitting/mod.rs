//! Two-stage fitting of per-frame anchor transforms to observed point
//! clouds.
//!
//! Stage 1 fits every frame independently with reconstruction and cycle
//! losses. Stage 2 couples the frames to the kinematic chain through the
//! anchor-consistency loss and learns per-link length residuals.

mod losses;
mod objectives;
mod optim;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anchors::{build_associations, AnchorSet, Association};
use crate::chain::{apply_residuals, KinematicChain, LinkResiduals};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::metrics::bbox_diagonal;
use crate::se3::{RigidTransform, Rotation, Vec3};

pub use losses::{
    anchor_consistency_loss, anchor_consistency_loss_grad, cycle_consistency_loss,
    cycle_consistency_loss_grad, reconstruction_loss, reconstruction_loss_grad,
    residual_anchor_loss_grad, transport_joints, ResidualFrame, TransformGrad,
};
pub use objectives::{AnchorObjective, CycleObjective, ReconstructionObjective, ResidualObjective};
pub use optim::{
    descend, numeric_gradient_check, retract_transforms, Descent, GradientCheck, LossTerms,
    Objective,
};

use losses::{ReconstructionTerm, RECON_SMOOTHING};
use objectives::{ChainCoupling, FrameObjective};
use optim::backtracking_step;

/// One observed frame: deformed-space points and the frame's root pose.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub time_index: usize,
    pub target_points: Vec<Vec3>,
    pub root_pose: RigidTransform,
}

impl FrameObservation {
    pub fn new(time_index: usize, target_points: Vec<Vec3>) -> Self {
        FrameObservation {
            time_index,
            target_points,
            root_pose: RigidTransform::identity(),
        }
    }

    /// True when the targets span a volume (at least four non-coplanar
    /// points). Fits on flat targets run but are poorly constrained.
    pub fn is_well_posed(&self) -> bool {
        let p = &self.target_points;
        if p.len() < 4 {
            return false;
        }
        let scale = bbox_diagonal(p).max(f64::MIN_POSITIVE);
        let centroid: Vec3 = p.iter().sum::<Vec3>() / p.len() as f64;
        let cov = p.iter().fold(nalgebra::Matrix3::zeros(), |acc, x| {
            let d = (x - centroid) / scale;
            acc + d * d.transpose()
        });
        cov.symmetric_eigenvalues().min() > 1e-12
    }
}

/// Per-anchor transforms of one frame, root pose excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedFrameTransforms {
    pub time_index: usize,
    pub per_anchor: Vec<RigidTransform>,
}

impl UnconstrainedFrameTransforms {
    pub fn identity(time_index: usize, anchors: usize) -> Self {
        UnconstrainedFrameTransforms {
            time_index,
            per_anchor: vec![RigidTransform::identity(); anchors],
        }
    }

    /// `(axis-angle, translation)` per anchor.
    pub fn parameters(&self) -> Vec<(Vec3, Vec3)> {
        self.per_anchor
            .iter()
            .map(|t| (t.rotation.to_rotation_vector(), t.translation))
            .collect()
    }

    pub fn from_parameters(time_index: usize, params: &[(Vec3, Vec3)]) -> Self {
        UnconstrainedFrameTransforms {
            time_index,
            per_anchor: params
                .iter()
                .map(|(w, t)| RigidTransform::new(Rotation::from_rotation_vector(w), *t))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub recon: f64,
    pub cycle: f64,
    pub anchors: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            cycle: 0.1,
            anchors: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    pub step_size: f64,
    /// Overrides the anchor set's temperature when present.
    pub tau: Option<f64>,
    /// Residual clip bound; `0.1 ×` the shortest link when absent.
    pub gamma: Option<f64>,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Relative loss decrease below which an iteration counts as converged.
    pub convergence_tol: f64,
    /// When false, stage 2 keeps the input link lengths.
    pub optimize_link_lengths: bool,
    /// Target points drawn per frame for the cycle loss.
    pub cycle_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            stage1_iterations: 400,
            stage2_iterations: 800,
            step_size: 1e-2,
            tau: None,
            gamma: None,
            loss_weights: LossWeights::default(),
            seed: 0,
            convergence_tol: 1e-8,
            optimize_link_lengths: true,
            cycle_samples: 256,
        }
    }
}

/// Temperature used when an anchors file does not provide one.
pub fn default_temperature(template: &[Vec3]) -> f64 {
    (0.2 * bbox_diagonal(template)).powi(2)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        positive("step_size", self.step_size)?;
        positive("convergence_tol", self.convergence_tol)?;
        if let Some(t) = self.tau {
            positive("tau", t)?;
        }
        if let Some(g) = self.gamma {
            positive("gamma", g)?;
        }
        let w = self.loss_weights;
        let ws = [w.recon, w.cycle, w.anchors];
        if ws.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig(
                "loss weights must be nonnegative".into(),
            ));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidConfig(
                "loss weights must not all be zero".into(),
            ));
        }
        Ok(())
    }

    fn anchors(&self, anchors: &AnchorSet) -> Result<AnchorSet> {
        match self.tau {
            Some(t) => anchors.with_temperature(t),
            None => Ok(anchors.clone()),
        }
    }

    /// The configured clip bound or its default for `chain`.
    pub fn gamma_for(&self, chain: &KinematicChain) -> Option<f64> {
        self.gamma
            .or_else(|| chain.min_link_length().map(|l| 0.1 * l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub stage: Stage,
    /// Frame time index for stage 1; stage-2 rows sum over frames.
    pub frame: Option<usize>,
    pub iteration: usize,
    pub terms: LossTerms,
}

/// Tab-separated loss table with a header row.
pub fn write_loss_trace(records: &[LossRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "stage\tframe\titeration\trecon\tcycle\tanchors\ttotal")?;
    for r in records {
        let stage = match r.stage {
            Stage::One => 1,
            Stage::Two => 2,
        };
        let frame = r.frame.map_or_else(|| "all".to_string(), |f| f.to_string());
        let t = r.terms;
        writeln!(
            out,
            "{stage}\t{frame}\t{}\t{:e}\t{:e}\t{:e}\t{:e}",
            r.iteration, t.recon, t.cycle, t.anchors, t.total
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub frames: Vec<UnconstrainedFrameTransforms>,
    pub trace: Vec<LossRecord>,
}

#[derive(Debug, Clone)]
pub struct Stage2Result {
    /// Canonical chain with the fitted residuals applied.
    pub chain: KinematicChain,
    pub residuals: LinkResiduals,
    pub frames: Vec<UnconstrainedFrameTransforms>,
    /// Rebuilt on the updated chain.
    pub associations: Vec<Association>,
    pub trace: Vec<LossRecord>,
}

/// Deterministic subsample of a frame's targets for the cycle loss.
fn cycle_samples(frame: &FrameObservation, config: &FitConfig) -> Vec<Vec3> {
    let n = frame.target_points.len();
    let k = config.cycle_samples.min(n);
    if k == n {
        return frame.target_points.clone();
    }
    let seed = config.seed ^ (frame.time_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| frame.target_points[i]).collect()
}

fn check_frames(frames: &[FrameObservation]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::invalid("fitting needs at least one frame"));
    }
    for f in frames {
        if f.target_points.is_empty() {
            return Err(Error::invalid(format!(
                "frame {} has no target points",
                f.time_index
            )));
        }
        if !f.is_well_posed() {
            log::warn!(
                "frame {}: targets are degenerate (fewer than four non-coplanar points)",
                f.time_index
            );
        }
    }
    Ok(())
}

fn frame_objective<'a>(
    template: &'a Mesh,
    anchors: &'a AnchorSet,
    frame: &'a FrameObservation,
    config: &FitConfig,
    coupling: Option<ChainCoupling<'a>>,
) -> Result<FrameObjective<'a>> {
    Ok(FrameObjective {
        recon: ReconstructionTerm::new(template, anchors, frame)?.smoothed(RECON_SMOOTHING),
        samples: cycle_samples(frame, config),
        anchors,
        root: frame.root_pose,
        weights: config.loss_weights,
        coupling,
    })
}

/// Fits each frame's transforms from identity with reconstruction and
/// cycle losses. Frames run in parallel; results do not depend on the
/// schedule.
pub fn fit_stage1(
    template: &Mesh,
    anchors: &AnchorSet,
    frames: &[FrameObservation],
    config: &FitConfig,
) -> Result<Stage1Result> {
    config.validate()?;
    check_frames(frames)?;
    let anchors = config.anchors(anchors)?;
    let mut config = config.clone();
    config.loss_weights.anchors = 0.0;
    if config.loss_weights.recon == 0.0 && config.loss_weights.cycle == 0.0 {
        return Err(Error::InvalidConfig(
            "stage 1 needs a reconstruction or cycle weight".into(),
        ));
    }
    let fits: Vec<Descent<Vec<RigidTransform>>> = frames
        .par_iter()
        .map(|frame| {
            let objective = frame_objective(template, &anchors, frame, &config, None)?;
            descend(
                &objective,
                vec![RigidTransform::identity(); anchors.len()],
                config.stage1_iterations,
                config.step_size,
                config.convergence_tol,
                "stage 1",
            )
        })
        .collect::<Result<_>>()?;
    let mut trace = Vec::new();
    let mut out = Vec::new();
    for (frame, fit) in frames.iter().zip(fits) {
        trace.extend(fit.trace.iter().enumerate().map(|(i, terms)| LossRecord {
            stage: Stage::One,
            frame: Some(frame.time_index),
            iteration: i,
            terms: *terms,
        }));
        out.push(UnconstrainedFrameTransforms {
            time_index: frame.time_index,
            per_anchor: fit.point,
        });
    }
    Ok(Stage1Result { frames: out, trace })
}

fn sum_terms<'a>(terms: impl Iterator<Item = &'a LossTerms>) -> LossTerms {
    terms.fold(LossTerms::default(), |acc, t| LossTerms {
        recon: acc.recon + t.recon,
        cycle: acc.cycle + t.cycle,
        anchors: acc.anchors + t.anchors,
        total: acc.total + t.total,
    })
}

/// Chain-aware refinement.
///
/// Each iteration rebuilds the residual-updated chain and its associations,
/// takes one line-searched step on every frame's transforms (the anchor
/// term pushes the chain through the frame, repairs link lengths and
/// compares anchors), then one step on the link residuals. The residuals are
/// frozen and the associations rebuilt once more at the end.
pub fn fit_stage2(
    template: &Mesh,
    chain: &KinematicChain,
    anchors: &AnchorSet,
    stage1: &Stage1Result,
    frames: &[FrameObservation],
    config: &FitConfig,
) -> Result<Stage2Result> {
    config.validate()?;
    check_frames(frames)?;
    if stage1.frames.len() != frames.len() {
        return Err(Error::invalid(format!(
            "{} stage-1 results for {} frames",
            stage1.frames.len(),
            frames.len()
        )));
    }
    let anchors = config.anchors(anchors)?;
    if let Some(f) = stage1
        .frames
        .iter()
        .find(|f| f.per_anchor.len() != anchors.len())
    {
        return Err(Error::invalid(format!(
            "frame {} has {} transforms for {} anchors",
            f.time_index,
            f.per_anchor.len(),
            anchors.len()
        )));
    }
    let gamma = config.gamma_for(chain).unwrap_or(1.0);
    let mut residuals = LinkResiduals::zeros(chain, gamma);
    // Surfaces an invalid clip bound before any work.
    apply_residuals(chain, &residuals)?;

    let weights = config.loss_weights;
    let mut transforms: Vec<Vec<RigidTransform>> =
        stage1.frames.iter().map(|f| f.per_anchor.clone()).collect();
    let mut frame_steps = vec![config.step_size; frames.len()];
    let mut residual_step = config.step_size;
    let mut trace = Vec::new();
    for iteration in 0..config.stage2_iterations {
        let updated = apply_residuals(chain, &residuals)?;
        let associations = build_associations(&updated, &anchors);
        let steps: Vec<(Vec<RigidTransform>, LossTerms, LossTerms, f64)> = frames
            .par_iter()
            .zip(transforms.par_iter())
            .zip(frame_steps.par_iter())
            .map(|((frame, t), step)| {
                let coupling = ChainCoupling {
                    chain: &updated,
                    associations: &associations,
                };
                let objective = frame_objective(template, &anchors, frame, config, Some(coupling))?;
                let (terms, gradient) = objective.value_and_gradient(t)?;
                if !terms.total.is_finite() {
                    return Err(Error::FitDiverged {
                        stage: "stage 2",
                        iteration,
                    });
                }
                Ok(
                    match backtracking_step(
                        &objective,
                        t,
                        terms.total,
                        &gradient,
                        2.0 * step,
                        "stage 2",
                        iteration,
                    )? {
                        Some(s) => (s.point, terms, s.terms, s.step),
                        None => (t.clone(), terms, terms, *step),
                    },
                )
            })
            .collect::<Result<_>>()?;
        let before = sum_terms(steps.iter().map(|s| &s.1));
        if iteration == 0 {
            trace.push(LossRecord {
                stage: Stage::Two,
                frame: None,
                iteration,
                terms: before,
            });
        }
        let mut after = sum_terms(steps.iter().map(|s| &s.2));
        for (k, (t, _, _, s)) in steps.into_iter().enumerate() {
            transforms[k] = t;
            frame_steps[k] = s;
        }

        if config.optimize_link_lengths && weights.anchors > 0.0 && !chain.links().is_empty() {
            let objective = ResidualObjective {
                chain,
                anchors: &anchors,
                frames: &transforms,
                gamma,
                weight: weights.anchors,
            };
            let (terms, gradient) = objective.value_and_gradient(&residuals.raw)?;
            let step = backtracking_step(
                &objective,
                &residuals.raw,
                terms.total,
                &gradient,
                2.0 * residual_step,
                "stage 2",
                iteration,
            )?;
            if let Some(s) = step {
                residuals.raw = s.point;
                residual_step = s.step;
                after.total += s.terms.total - terms.total;
                after.anchors = s.terms.anchors;
            }
        }
        trace.push(LossRecord {
            stage: Stage::Two,
            frame: None,
            iteration: iteration + 1,
            terms: after,
        });
        if before.total - after.total
            <= config.convergence_tol * after.total.abs().max(f64::MIN_POSITIVE)
        {
            break;
        }
    }

    let updated = apply_residuals(chain, &residuals)?;
    let associations = build_associations(&updated, &anchors);
    Ok(Stage2Result {
        chain: updated,
        residuals,
        frames: frames
            .iter()
            .zip(transforms)
            .map(|(f, t)| UnconstrainedFrameTransforms {
                time_index: f.time_index,
                per_anchor: t,
            })
            .collect(),
        associations,
        trace,
    })
}
