//! Loss terms and their analytic gradients.
//!
//! Gradients are taken with respect to a tangent perturbation of each anchor
//! transform: `R ← R·exp([δ]×)`, `t ← t + dt`, stored as `[δ, dt]` per
//! anchor (six numbers).

use crate::anchors::build_associations;
use crate::anchors::{anchor_positions, AnchorSet, Association};
use crate::chain::{apply_residuals, recover_chain, KinematicChain, LinkResiduals};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::metrics::{bbox_diagonal, chamfer_from_nearest, PointGrid};
use crate::se3::{RigidTransform, Vec3};
use crate::skinning::{blend, forward_skin_weights, softmax_weights};

use super::FrameObservation;

/// Gradient with respect to one anchor transform.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransformGrad {
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl TransformGrad {
    fn add_scaled(&mut self, other: &TransformGrad, s: f64) {
        self.rotation += other.rotation * s;
        self.translation += other.translation * s;
    }
}

pub(crate) fn accumulate(into: &mut [TransformGrad], from: &[TransformGrad], weight: f64) {
    for (a, b) in into.iter_mut().zip(from) {
        a.add_scaled(b, weight);
    }
}

/// Huber form of a distance: `d²/2η` inside `η`, `d − η/2` beyond, so it
/// is zero at zero and its slope is continuous.
fn smoothed_distance(d: f64, eta: f64) -> f64 {
    if d >= eta {
        d - eta / 2.0
    } else {
        d * d / (2.0 * eta)
    }
}

/// Gradient of [`smoothed_distance`] with respect to the offset `v`.
fn smoothed_unit(v: Vec3, eta: f64) -> Vec3 {
    let n = v.norm();
    if n >= eta && n > 0.0 {
        v / n
    } else if eta > 0.0 {
        v / eta
    } else {
        Vec3::zeros()
    }
}

/// Smoothing radius used by the fitting objectives, relative to the target
/// bounding-box diagonal.
pub(crate) const RECON_SMOOTHING: f64 = 1e-2;

fn check_transforms(anchors: &AnchorSet, transforms: &[RigidTransform]) -> Result<()> {
    if anchors.len() != transforms.len() {
        return Err(Error::invalid(format!(
            "{} anchors vs {} frame transforms",
            anchors.len(),
            transforms.len()
        )));
    }
    Ok(())
}

/// Template mesh with its forward weights cached, matched against one
/// frame's target cloud.
///
/// By default the value is the exact Chamfer distance. With
/// [`smoothed`](Self::smoothed), pairs closer than the radius count
/// quadratically instead: otherwise vertices sitting almost exactly on a
/// target each pull with a full unit vector that flips as they cross it,
/// and descent stalls with tiny steps.
pub struct ReconstructionTerm<'a> {
    template: &'a Mesh,
    weights: Vec<Vec<f64>>,
    targets: &'a [Vec3],
    target_grid: PointGrid<'a>,
    root: RigidTransform,
    smoothing: f64,
}

impl<'a> ReconstructionTerm<'a> {
    pub fn new(
        template: &'a Mesh,
        anchors: &AnchorSet,
        frame: &'a FrameObservation,
    ) -> Result<Self> {
        if frame.target_points.is_empty() {
            return Err(Error::invalid(format!(
                "frame {} has no target points",
                frame.time_index
            )));
        }
        if template.vertices.is_empty() {
            return Err(Error::invalid("template mesh has no vertices"));
        }
        let weights = template
            .vertices
            .iter()
            .map(|x| forward_skin_weights(x, anchors).into_vec())
            .collect();
        Ok(ReconstructionTerm {
            template,
            weights,
            targets: &frame.target_points,
            target_grid: PointGrid::new(&frame.target_points),
            root: frame.root_pose,
            smoothing: 0.0,
        })
    }

    /// Rounds off the distance below `radius`, a fraction of the target
    /// bounding-box diagonal.
    pub fn smoothed(mut self, radius: f64) -> Self {
        self.smoothing = radius * bbox_diagonal(self.targets);
        self
    }

    fn combine(&self, vt: &[(usize, f64)], tv: &[(usize, f64)]) -> f64 {
        if self.smoothing == 0.0 {
            return chamfer_from_nearest(vt, tv);
        }
        let mean = |pairs: &[(usize, f64)]| {
            pairs
                .iter()
                .map(|(_, d2)| smoothed_distance(d2.sqrt(), self.smoothing))
                .sum::<f64>()
                / pairs.len() as f64
        };
        0.5 * (mean(vt) + mean(tv))
    }

    fn deformed(&self, transforms: &[RigidTransform]) -> Vec<Vec3> {
        self.template
            .vertices
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| self.root.apply_point(&blend(x, w, transforms)))
            .collect()
    }

    pub fn value(&self, transforms: &[RigidTransform]) -> f64 {
        let v = self.deformed(transforms);
        let vt = self.target_grid.nearest_all(&v);
        let tv = PointGrid::new(&v).nearest_all(self.targets);
        self.combine(&vt, &tv)
    }

    pub fn value_and_gradient(&self, transforms: &[RigidTransform]) -> (f64, Vec<TransformGrad>) {
        let v = self.deformed(transforms);
        let vt = self.target_grid.nearest_all(&v);
        let tv = PointGrid::new(&v).nearest_all(self.targets);
        let value = self.combine(&vt, &tv);

        let (nv, nt) = (v.len() as f64, self.targets.len() as f64);
        let mut g_v = vec![Vec3::zeros(); v.len()];
        for (i, (j, _)) in vt.iter().enumerate() {
            g_v[i] += smoothed_unit(v[i] - self.targets[*j], self.smoothing) * (0.5 / nv);
        }
        for (j, (i, _)) in tv.iter().enumerate() {
            g_v[*i] += smoothed_unit(v[*i] - self.targets[j], self.smoothing) * (0.5 / nt);
        }
        let root_t = self.root.rotation.transpose();
        let rot_t: Vec<_> = transforms.iter().map(|t| t.rotation.transpose()).collect();
        let mut grads = vec![TransformGrad::default(); transforms.len()];
        for ((x, w), g) in self.template.vertices.iter().zip(&self.weights).zip(&g_v) {
            if *g == Vec3::zeros() {
                continue;
            }
            let g_blend = root_t.apply(g);
            for (a, wa) in w.iter().enumerate() {
                grads[a].translation += g_blend * *wa;
                grads[a].rotation += x.cross(&rot_t[a].apply(&g_blend)) * *wa;
            }
        }
        (value, grads)
    }
}

/// Symmetric Chamfer distance between the skinned template and the frame's
/// target points.
pub fn reconstruction_loss(
    template: &Mesh,
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    frame: &FrameObservation,
) -> Result<f64> {
    check_transforms(anchors, transforms)?;
    Ok(ReconstructionTerm::new(template, anchors, frame)?.value(transforms))
}

pub fn reconstruction_loss_grad(
    template: &Mesh,
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    frame: &FrameObservation,
) -> Result<(f64, Vec<TransformGrad>)> {
    check_transforms(anchors, transforms)?;
    Ok(ReconstructionTerm::new(template, anchors, frame)?.value_and_gradient(transforms))
}

/// Mean squared forward(backward(x)) − x over deformed-space samples.
pub fn cycle_consistency_loss(
    samples: &[Vec3],
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    root: &RigidTransform,
) -> Result<f64> {
    Ok(cycle_consistency_loss_grad(samples, anchors, transforms, root)?.0)
}

pub fn cycle_consistency_loss_grad(
    samples: &[Vec3],
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    root: &RigidTransform,
) -> Result<(f64, Vec<TransformGrad>)> {
    check_transforms(anchors, transforms)?;
    if samples.is_empty() {
        return Err(Error::invalid(
            "cycle consistency needs at least one sample",
        ));
    }
    let tau = anchors.temperature();
    let a = anchors.positions();
    let n = a.len();
    // Work in root-free coordinates: C is rigid, so distances to C·T·a equal
    // distances to T·a after applying C⁻¹.
    let root_inv = root.inverse();
    let moved: Vec<Vec3> = a
        .iter()
        .zip(transforms)
        .map(|(a, t)| t.apply_point(a))
        .collect();
    let inv: Vec<RigidTransform> = transforms.iter().map(RigidTransform::inverse).collect();
    let mut grads = vec![TransformGrad::default(); n];
    let mut total = 0.0;
    let scale = 1.0 / samples.len() as f64;

    for s in samples {
        let y = root_inv.apply_point(s);
        let wb = softmax_weights(&y, &moved, tau).into_vec();
        let z: Vec<Vec3> = inv.iter().map(|t| t.apply_point(&y)).collect();
        let x: Vec3 = wb.iter().zip(&z).map(|(w, z)| z * *w).sum();
        let wf = softmax_weights(&x, a, tau).into_vec();
        let q: Vec<Vec3> = transforms.iter().map(|t| t.apply_point(&x)).collect();
        let xp: Vec3 = wf.iter().zip(&q).map(|(w, q)| q * *w).sum();
        let r = xp - y;
        total += r.norm_squared() * scale;

        // backward pass
        let g_xp = r * (2.0 * scale);
        let mut g_x = Vec3::zeros();
        let g_wf: Vec<f64> = q.iter().map(|q| q.dot(&g_xp)).collect();
        let mean_f: f64 = wf.iter().zip(&g_wf).map(|(w, g)| w * g).sum();
        for j in 0..n {
            let g_q = g_xp * wf[j];
            grads[j].translation += g_q;
            grads[j].rotation += x.cross(&transforms[j].rotation.transpose().apply(&g_q));
            g_x += transforms[j].rotation.transpose().apply(&g_q);
            let g_logit = wf[j] * (g_wf[j] - mean_f);
            g_x += (x - a[j]) * (-2.0 / tau * g_logit);
        }
        let g_wb: Vec<f64> = z.iter().map(|z| z.dot(&g_x)).collect();
        let mean_b: f64 = wb.iter().zip(&g_wb).map(|(w, g)| w * g).sum();
        for i in 0..n {
            let g_z = g_x * wb[i];
            // z = Rᵀ(y − t)
            grads[i].translation -= transforms[i].rotation.apply(&g_z);
            grads[i].rotation += g_z.cross(&z[i]);
            let g_logit = wb[i] * (g_wb[i] - mean_b);
            // logit = −‖y − u‖²/τ with u = R a + t
            let g_u = (y - moved[i]) * (2.0 / tau * g_logit);
            grads[i].translation += g_u;
            grads[i].rotation += a[i].cross(&transforms[i].rotation.transpose().apply(&g_u));
        }
    }
    Ok((total, grads))
}

/// `Σ_i ‖ã_i − T̂_i a_i‖²` with `ã` placed on the given revised joints.
pub fn anchor_consistency_loss(
    chain: &KinematicChain,
    anchors: &AnchorSet,
    associations: &[Association],
    revised_joints: &[Vec3],
    twists: &[f64],
    transforms: &[RigidTransform],
) -> Result<f64> {
    Ok(anchor_consistency_loss_grad(
        chain,
        anchors,
        associations,
        revised_joints,
        twists,
        transforms,
    )?
    .0)
}

/// Gradient with respect to the frame transforms; the revised joints are
/// inputs and are held fixed.
pub fn anchor_consistency_loss_grad(
    chain: &KinematicChain,
    anchors: &AnchorSet,
    associations: &[Association],
    revised_joints: &[Vec3],
    twists: &[f64],
    transforms: &[RigidTransform],
) -> Result<(f64, Vec<TransformGrad>)> {
    check_transforms(anchors, transforms)?;
    let revised = revised_anchor_targets(chain, anchors, associations, revised_joints, twists)?;
    let mut total = 0.0;
    let grads = anchors
        .positions()
        .iter()
        .zip(transforms)
        .zip(&revised)
        .map(|((a, t), target)| {
            let r = target - t.apply_point(a);
            total += r.norm_squared();
            let g_u = -r * 2.0;
            TransformGrad {
                rotation: a.cross(&t.rotation.transpose().apply(&g_u)),
                translation: g_u,
            }
        })
        .collect();
    Ok((total, grads))
}

/// Revised anchor positions; a chain without links leaves anchors in place.
pub(crate) fn revised_anchor_targets(
    chain: &KinematicChain,
    anchors: &AnchorSet,
    associations: &[Association],
    revised_joints: &[Vec3],
    twists: &[f64],
) -> Result<Vec<Vec3>> {
    if chain.links().is_empty() {
        return Ok(anchors.positions().to_vec());
    }
    if associations.len() != anchors.len() {
        return Err(Error::invalid(format!(
            "{} associations for {} anchors",
            associations.len(),
            anchors.len()
        )));
    }
    anchor_positions(chain, associations, revised_joints, twists)
}

/// Canonical joints pushed through the anchor blend: `C · Σ w_i T̂_i · p`.
pub fn transport_joints(
    chain: &KinematicChain,
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    root: &RigidTransform,
) -> Result<Vec<Vec3>> {
    check_transforms(anchors, transforms)?;
    Ok(chain
        .joints()
        .iter()
        .map(|j| {
            let w = forward_skin_weights(&j.position, anchors);
            root.apply_point(&blend(&j.position, w.as_slice(), transforms))
        })
        .collect())
}

/// One frame's input to the link-residual gradient: free joints (held
/// fixed) and the frame's anchor transforms.
pub struct ResidualFrame<'a> {
    pub free_joints: &'a [Vec3],
    pub transforms: &'a [RigidTransform],
}

/// Anchor consistency summed over frames as a function of the link
/// residuals, with the chain lengths updated from the residuals and the
/// associations rebuilt on the updated chain. Returns the value and the
/// gradient with respect to the raw residuals.
pub fn residual_anchor_loss_grad(
    chain: &KinematicChain,
    residuals: &LinkResiduals,
    anchors: &AnchorSet,
    frames: &[ResidualFrame<'_>],
) -> Result<(f64, Vec<f64>)> {
    let updated = apply_residuals(chain, residuals)?;
    let assoc = build_associations(&updated, anchors);
    let slopes: Vec<f64> = residuals
        .raw
        .iter()
        .map(|r| residuals.gamma * (1.0 - r.tanh().powi(2)))
        .collect();
    let dirs: Vec<Vec3> = (0..updated.links().len())
        .map(|l| updated.link_vector(l).normalize())
        .collect();
    let paths: Vec<Vec<usize>> = (0..updated.len()).map(|s| updated.path_links(s)).collect();
    let zeros = vec![0.0; updated.len()];

    let mut total = 0.0;
    let mut grad = vec![0.0; residuals.raw.len()];
    for frame in frames {
        check_transforms(anchors, frame.transforms)?;
        let revised = recover_chain(&updated, frame.free_joints)?.positions;
        let targets = revised_anchor_targets(&updated, anchors, &assoc, &revised, &zeros)?;
        for as_ in &assoc {
            let a = anchors.positions()[as_.anchor];
            let t = &frame.transforms[as_.anchor];
            let r = targets[as_.anchor] - t.apply_point(&a);
            total += r.norm_squared();

            let link = updated.links()[as_.link];
            let (j, k) = (link.parent, link.child);
            let length = updated.link_length(as_.link);
            let e = dirs[as_.link];
            let pj = updated.position(j);
            let u = (revised[k] - revised[j]) / length;
            let proj = (a - pj).dot(&e);
            let w = a - pj - e * as_.alpha;
            let beta = w.norm();
            let q = e.cross(&w);
            let denom = beta + e.dot(&w);
            let qqu = q.cross(&q.cross(&u));
            // Links that can move the anchor: the path to its parent joint
            // and, for anchors clamped at the child end, its own link.
            let mut touched = paths[j].clone();
            if proj >= length {
                touched.push(as_.link);
            }
            for l in touched {
                let s = slopes[l];
                let on_path = l != as_.link;
                let dpj = if on_path { dirs[l] * s } else { Vec3::zeros() };
                let dpj_deformed = if on_path {
                    let lk = updated.links()[l];
                    (revised[lk.child] - revised[lk.parent]) / updated.link_length(l) * s
                } else {
                    Vec3::zeros()
                };
                let dalpha = if proj <= 0.0 {
                    0.0
                } else if proj >= length {
                    if on_path {
                        0.0
                    } else {
                        s
                    }
                } else {
                    -dpj.dot(&e)
                };
                let mut d = dpj_deformed + u * dalpha;
                if beta > 1e-12 && denom > 1e-12 {
                    let dw = -dpj - e * dalpha;
                    let dbeta = w.dot(&dw) / beta;
                    let dq = e.cross(&dw);
                    let ddenom = dbeta + e.dot(&dw);
                    let dqqu = dq.cross(&q.cross(&u)) + q.cross(&dq.cross(&u));
                    d += u * dbeta + dq.cross(&u) + dqqu / denom - qqu * (ddenom / (denom * denom));
                }
                grad[l] += 2.0 * r.dot(&d);
            }
        }
    }
    Ok((total, grad))
}
