//! Gradient descent with backtracking line search, and a finite-difference
//! gradient checker.

use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Rotation, Vec3};

use super::losses::TransformGrad;

/// Loss terms of one evaluation. `total` is the weighted sum that is
/// minimized; the other fields are unweighted and exist for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub recon: f64,
    pub cycle: f64,
    pub anchors: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn scalar(total: f64) -> Self {
        LossTerms {
            total,
            ..Default::default()
        }
    }
}

/// A loss over points of a manifold with a tangent-space retraction.
pub trait Objective {
    type Point: Clone;

    /// Tangent dimension at any point.
    fn dim(&self, point: &Self::Point) -> usize;
    fn retract(&self, point: &Self::Point, delta: &[f64]) -> Self::Point;
    fn value(&self, point: &Self::Point) -> Result<LossTerms>;
    fn value_and_gradient(&self, point: &Self::Point) -> Result<(LossTerms, Vec<f64>)>;
}

/// Moves each transform by one `[δ, dt]` block of six: the rotation is
/// perturbed on the right about the anchor's canonical position `c`, the
/// translation in world space. `T' = Trans(dt) ∘ T ∘ Rot_c(exp([δ]×))`.
///
/// Rotating about the anchor rather than the canonical origin keeps the
/// rotation and translation coordinates of far-away anchors decoupled.
pub fn retract_transforms(
    transforms: &[RigidTransform],
    centers: &[Vec3],
    delta: &[f64],
) -> Vec<RigidTransform> {
    assert_eq!(delta.len(), 6 * transforms.len(), "tangent size mismatch");
    assert_eq!(centers.len(), transforms.len(), "one center per transform");
    transforms
        .iter()
        .zip(centers)
        .zip(delta.chunks_exact(6))
        .map(|((t, c), d)| {
            let r = t.rotation * Rotation::from_rotation_vector(&Vec3::new(d[0], d[1], d[2]));
            let shift = t.rotation.apply(c) - r.apply(c);
            RigidTransform::new(r, t.translation + shift + Vec3::new(d[3], d[4], d[5]))
        })
        .collect()
}

/// Converts origin-based gradients (rotation perturbed about the canonical
/// origin) to the coordinates of [`retract_transforms`].
pub(crate) fn centered_gradient(
    grads: &[TransformGrad],
    transforms: &[RigidTransform],
    centers: &[Vec3],
) -> Vec<f64> {
    grads
        .iter()
        .zip(transforms)
        .zip(centers)
        .flat_map(|((g, t), c)| {
            let rot = g.rotation - c.cross(&t.rotation.transpose().apply(&g.translation));
            [
                rot.x,
                rot.y,
                rot.z,
                g.translation.x,
                g.translation.y,
                g.translation.z,
            ]
        })
        .collect()
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Outcome of one backtracking step.
pub(crate) struct Step<P> {
    pub point: P,
    pub terms: LossTerms,
    /// Accepted step length.
    pub step: f64,
}

fn norm2(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum()
}

/// Halves `trial` until the Armijo condition holds. Returns `None` when the
/// gradient vanishes or no trial is accepted; candidates with non-finite
/// loss count as rejected, and if every candidate was non-finite the fit is
/// reported as diverged.
pub(crate) fn backtracking_step<O: Objective>(
    objective: &O,
    point: &O::Point,
    current: f64,
    gradient: &[f64],
    trial: f64,
    stage: &'static str,
    iteration: usize,
) -> Result<Option<Step<O::Point>>> {
    let g2 = norm2(gradient);
    if g2 == 0.0 {
        return Ok(None);
    }
    if !g2.is_finite() {
        return Err(Error::FitDiverged { stage, iteration });
    }
    let mut step = trial;
    let mut any_finite = false;
    for _ in 0..MAX_HALVINGS {
        let delta: Vec<f64> = gradient.iter().map(|g| -step * g).collect();
        let candidate = objective.retract(point, &delta);
        let terms = objective.value(&candidate)?;
        if terms.total.is_finite() {
            any_finite = true;
            if terms.total <= current - ARMIJO * step * g2 {
                return Ok(Some(Step {
                    point: candidate,
                    terms,
                    step,
                }));
            }
        }
        step *= 0.5;
    }
    if any_finite {
        Ok(None)
    } else {
        Err(Error::FitDiverged { stage, iteration })
    }
}

/// Result of [`descend`]. `trace[0]` is the starting loss; every later
/// entry belongs to an accepted step.
#[derive(Debug, Clone)]
pub struct Descent<P> {
    pub point: P,
    pub trace: Vec<LossTerms>,
}

/// Plain gradient descent. Each iteration starts its line search at twice
/// the previously accepted step and stops when the relative decrease drops
/// below `tol`, the gradient vanishes, or the line search fails.
pub fn descend<O: Objective>(
    objective: &O,
    start: O::Point,
    iterations: usize,
    initial_step: f64,
    tol: f64,
    stage: &'static str,
) -> Result<Descent<O::Point>> {
    let mut point = start;
    let (mut terms, mut gradient) = objective.value_and_gradient(&point)?;
    if !terms.total.is_finite() {
        return Err(Error::FitDiverged {
            stage,
            iteration: 0,
        });
    }
    let mut trace = vec![terms];
    let mut trial = initial_step;
    for iteration in 1..=iterations {
        let Some(step) = backtracking_step(
            objective,
            &point,
            terms.total,
            &gradient,
            trial,
            stage,
            iteration,
        )?
        else {
            break;
        };
        let decrease = terms.total - step.terms.total;
        point = step.point;
        terms = step.terms;
        trace.push(terms);
        trial = 2.0 * step.step;
        if decrease <= tol * terms.total.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let (t, g) = objective.value_and_gradient(&point)?;
        if !t.total.is_finite() {
            return Err(Error::FitDiverged { stage, iteration });
        }
        gradient = g;
    }
    Ok(Descent { point, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares the analytic gradient against central differences along each
/// tangent coordinate.
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, s)` with
/// `s = 1e-6 · max(1, ‖a‖∞)`, so coordinates whose true derivative is zero
/// are judged against the overall gradient scale.
pub fn numeric_gradient_check<O: Objective>(
    objective: &O,
    point: &O::Point,
    epsilon: f64,
) -> Result<GradientCheck> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let (_, analytic) = objective.value_and_gradient(point)?;
    let n = objective.dim(point);
    let mut numeric = Vec::with_capacity(n);
    let mut delta = vec![0.0; n];
    for i in 0..n {
        delta[i] = epsilon;
        let plus = objective.value(&objective.retract(point, &delta))?.total;
        delta[i] = -epsilon;
        let minus = objective.value(&objective.retract(point, &delta))?.total;
        delta[i] = 0.0;
        numeric.push((plus - minus) / (2.0 * epsilon));
    }
    let scale = 1e-6 * analytic.iter().fold(1.0_f64, |m, a| m.max(a.abs()));
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(scale))
        .fold(0.0, f64::max);
    Ok(GradientCheck {
        analytic,
        numeric,
        max_relative_error,
    })
}
