//! Losses wrapped as [`Objective`]s over anchor transforms or link residuals.

use crate::anchors::{build_associations, AnchorSet, Association};
use crate::chain::{apply_residuals, recover_chain, KinematicChain, LinkResiduals};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::se3::{RigidTransform, Vec3};
use crate::skinning::forward_skin_weights;

use super::losses::{
    accumulate, anchor_consistency_loss_grad, cycle_consistency_loss_grad,
    residual_anchor_loss_grad, revised_anchor_targets, transport_joints, ReconstructionTerm,
    ResidualFrame, TransformGrad,
};
use super::optim::{centered_gradient, retract_transforms, LossTerms, Objective};
use super::{FrameObservation, LossWeights};

macro_rules! transform_objective {
    ($ty:ty) => {
        impl Objective for $ty {
            type Point = Vec<RigidTransform>;

            fn dim(&self, point: &Vec<RigidTransform>) -> usize {
                6 * point.len()
            }

            fn retract(&self, point: &Vec<RigidTransform>, delta: &[f64]) -> Vec<RigidTransform> {
                retract_transforms(point, self.centers(), delta)
            }

            fn value(&self, point: &Vec<RigidTransform>) -> Result<LossTerms> {
                self.terms(point)
            }

            fn value_and_gradient(
                &self,
                point: &Vec<RigidTransform>,
            ) -> Result<(LossTerms, Vec<f64>)> {
                let (terms, grads) = self.terms_and_grads(point)?;
                Ok((terms, centered_gradient(&grads, point, self.centers())))
            }
        }
    };
}

/// Chamfer reconstruction loss of one frame.
pub struct ReconstructionObjective<'a> {
    term: ReconstructionTerm<'a>,
    centers: Vec<Vec3>,
}

impl<'a> ReconstructionObjective<'a> {
    pub fn new(
        template: &'a Mesh,
        anchors: &AnchorSet,
        frame: &'a FrameObservation,
    ) -> Result<Self> {
        Ok(ReconstructionObjective {
            term: ReconstructionTerm::new(template, anchors, frame)?,
            centers: anchors.positions().to_vec(),
        })
    }

    /// See [`ReconstructionTerm::smoothed`].
    pub fn smoothed(mut self, radius: f64) -> Self {
        self.term = self.term.smoothed(radius);
        self
    }

    fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    fn terms(&self, t: &[RigidTransform]) -> Result<LossTerms> {
        let v = self.term.value(t);
        Ok(LossTerms {
            recon: v,
            total: v,
            ..Default::default()
        })
    }

    fn terms_and_grads(&self, t: &[RigidTransform]) -> Result<(LossTerms, Vec<TransformGrad>)> {
        let (v, g) = self.term.value_and_gradient(t);
        Ok((
            LossTerms {
                recon: v,
                total: v,
                ..Default::default()
            },
            g,
        ))
    }
}
transform_objective!(ReconstructionObjective<'_>);

/// Cycle-consistency loss over fixed deformed-space samples.
pub struct CycleObjective<'a> {
    pub samples: &'a [Vec3],
    pub anchors: &'a AnchorSet,
    pub root: RigidTransform,
}

impl CycleObjective<'_> {
    fn centers(&self) -> &[Vec3] {
        self.anchors.positions()
    }

    fn terms(&self, t: &[RigidTransform]) -> Result<LossTerms> {
        Ok(self.terms_and_grads(t)?.0)
    }

    fn terms_and_grads(&self, t: &[RigidTransform]) -> Result<(LossTerms, Vec<TransformGrad>)> {
        let (v, g) = cycle_consistency_loss_grad(self.samples, self.anchors, t, &self.root)?;
        Ok((
            LossTerms {
                cycle: v,
                total: v,
                ..Default::default()
            },
            g,
        ))
    }
}
transform_objective!(CycleObjective<'_>);

/// Anchor-consistency loss against fixed revised joints.
pub struct AnchorObjective<'a> {
    pub chain: &'a KinematicChain,
    pub anchors: &'a AnchorSet,
    pub associations: &'a [Association],
    pub revised_joints: &'a [Vec3],
    pub twists: &'a [f64],
}

impl AnchorObjective<'_> {
    fn centers(&self) -> &[Vec3] {
        self.anchors.positions()
    }

    fn terms(&self, t: &[RigidTransform]) -> Result<LossTerms> {
        Ok(self.terms_and_grads(t)?.0)
    }

    fn terms_and_grads(&self, t: &[RigidTransform]) -> Result<(LossTerms, Vec<TransformGrad>)> {
        let (v, g) = anchor_consistency_loss_grad(
            self.chain,
            self.anchors,
            self.associations,
            self.revised_joints,
            self.twists,
            t,
        )?;
        Ok((
            LossTerms {
                anchors: v,
                total: v,
                ..Default::default()
            },
            g,
        ))
    }
}
transform_objective!(AnchorObjective<'_>);

/// Chain state the anchor term is measured against during stage 2.
pub(crate) struct ChainCoupling<'a> {
    pub chain: &'a KinematicChain,
    pub associations: &'a [Association],
}

/// Anchor loss of one frame with the chain pushed through the frame's own
/// transforms, unconstrained joints repaired and anchors re-placed. The
/// gradient follows both paths: through `T̂_i a_i` directly and through the
/// repaired joints the targets are placed on.
pub(crate) fn coupled_anchor_loss(
    coupling: &ChainCoupling<'_>,
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
) -> Result<(f64, Vec<TransformGrad>)> {
    let chain = coupling.chain;
    let free = transport_joints(chain, anchors, transforms, &RigidTransform::identity())?;
    let revised = recover_chain(chain, &free)?.positions;
    let twists = vec![0.0; chain.len()];
    let mut targets =
        revised_anchor_targets(chain, anchors, coupling.associations, &revised, &twists)?;
    if chain.links().is_empty() {
        // Anchors stay rigid with the root joint.
        let shift = revised[chain.root()] - chain.position(chain.root());
        for t in &mut targets {
            *t += shift;
        }
    }
    let (total, mut grads) = squared_gap(anchors, &targets, transforms);
    let target_grads: Vec<Vec3> = targets
        .iter()
        .zip(anchors.positions())
        .zip(transforms)
        .map(|((target, a), t)| (target - t.apply_point(a)) * 2.0)
        .collect();
    repair_gradient(coupling, anchors, transforms, &free, &target_grads, &mut grads);
    Ok((total, grads))
}

/// Chains `dL/dã` back through anchor placement, chain recovery and joint
/// transport onto the transforms.
fn repair_gradient(
    coupling: &ChainCoupling<'_>,
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    free: &[Vec3],
    target_grads: &[Vec3],
    grads: &mut [TransformGrad],
) {
    let chain = coupling.chain;
    let mut g_revised = vec![Vec3::zeros(); chain.len()];
    if chain.links().is_empty() {
        g_revised[chain.root()] = target_grads.iter().sum();
    }
    // ã = p_j + (α I + β G)(p_k − p_j) / L
    for a in coupling.associations {
        let g = target_grads[a.anchor];
        let link = chain.links()[a.link];
        let mt_g = (g * a.alpha + a.g.transpose().apply(&g) * a.beta) / chain.link_length(a.link);
        g_revised[link.child] += mt_g;
        g_revised[link.parent] += g - mt_g;
    }
    // p_k = p_j + L · normalize(f_k − f_j), children before parents.
    let mut g_free = vec![Vec3::zeros(); chain.len()];
    for &k in chain.hierarchical_order().iter().rev() {
        let g = g_revised[k];
        let Some(l) = chain.incoming_link(k) else {
            g_free[k] += g;
            continue;
        };
        let j = chain.links()[l].parent;
        g_revised[j] += g;
        let length = chain.link_length(l);
        let u = free[k] - free[j];
        let n = u.norm();
        if n < 1e-12 * length {
            continue;
        }
        let e = u / n;
        let g_u = (g - e * e.dot(&g)) * (length / n);
        g_free[k] += g_u;
        g_free[j] -= g_u;
    }
    // f_s = Σ_i w_i(p_s) T_i p_s
    for (joint, g) in chain.joints().iter().zip(&g_free) {
        if *g == Vec3::zeros() {
            continue;
        }
        let p = joint.position;
        let w = forward_skin_weights(&p, anchors);
        for ((grad, t), w) in grads.iter_mut().zip(transforms).zip(w.as_slice()) {
            grad.translation += g * *w;
            grad.rotation += p.cross(&t.rotation.transpose().apply(g)) * *w;
        }
    }
}

fn squared_gap(
    anchors: &AnchorSet,
    targets: &[Vec3],
    transforms: &[RigidTransform],
) -> (f64, Vec<TransformGrad>) {
    let mut total = 0.0;
    let grads = anchors
        .positions()
        .iter()
        .zip(transforms)
        .zip(targets)
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
    (total, grads)
}

/// Weighted per-frame objective of both fitting stages; stage 2 adds the
/// chain-coupled anchor term.
pub(crate) struct FrameObjective<'a> {
    pub recon: ReconstructionTerm<'a>,
    pub samples: Vec<Vec3>,
    pub anchors: &'a AnchorSet,
    pub root: RigidTransform,
    pub weights: LossWeights,
    pub coupling: Option<ChainCoupling<'a>>,
}

impl FrameObjective<'_> {
    fn centers(&self) -> &[Vec3] {
        self.anchors.positions()
    }

    fn terms(&self, t: &[RigidTransform]) -> Result<LossTerms> {
        let w = self.weights;
        let recon = if w.recon > 0.0 {
            self.recon.value(t)
        } else {
            0.0
        };
        let cycle = if w.cycle > 0.0 && !self.samples.is_empty() {
            cycle_consistency_loss_grad(&self.samples, self.anchors, t, &self.root)?.0
        } else {
            0.0
        };
        let anchors = match &self.coupling {
            Some(c) if w.anchors > 0.0 => coupled_anchor_loss(c, self.anchors, t)?.0,
            _ => 0.0,
        };
        Ok(LossTerms {
            recon,
            cycle,
            anchors,
            total: w.recon * recon + w.cycle * cycle + w.anchors * anchors,
        })
    }

    fn terms_and_grads(&self, t: &[RigidTransform]) -> Result<(LossTerms, Vec<TransformGrad>)> {
        let w = self.weights;
        let mut grads = vec![TransformGrad::default(); t.len()];
        let mut terms = LossTerms::default();
        if w.recon > 0.0 {
            let (v, g) = self.recon.value_and_gradient(t);
            terms.recon = v;
            accumulate(&mut grads, &g, w.recon);
        }
        if w.cycle > 0.0 && !self.samples.is_empty() {
            let (v, g) = cycle_consistency_loss_grad(&self.samples, self.anchors, t, &self.root)?;
            terms.cycle = v;
            accumulate(&mut grads, &g, w.cycle);
        }
        if let Some(c) = self.coupling.as_ref().filter(|_| w.anchors > 0.0) {
            let (v, g) = coupled_anchor_loss(c, self.anchors, t)?;
            terms.anchors = v;
            accumulate(&mut grads, &g, w.anchors);
        }
        terms.total = w.recon * terms.recon + w.cycle * terms.cycle + w.anchors * terms.anchors;
        Ok((terms, grads))
    }
}
transform_objective!(FrameObjective<'_>);

/// Weighted anchor loss summed over frames as a function of the raw link
/// residuals. The gradient holds each frame's unconstrained joints fixed.
pub struct ResidualObjective<'a> {
    pub chain: &'a KinematicChain,
    pub anchors: &'a AnchorSet,
    pub frames: &'a [Vec<RigidTransform>],
    pub gamma: f64,
    pub weight: f64,
}

impl ResidualObjective<'_> {
    fn residuals(&self, raw: &[f64]) -> LinkResiduals {
        LinkResiduals {
            raw: raw.to_vec(),
            gamma: self.gamma,
        }
    }
}

impl Objective for ResidualObjective<'_> {
    type Point = Vec<f64>;

    fn dim(&self, point: &Vec<f64>) -> usize {
        point.len()
    }

    fn retract(&self, point: &Vec<f64>, delta: &[f64]) -> Vec<f64> {
        point.iter().zip(delta).map(|(p, d)| p + d).collect()
    }

    fn value(&self, point: &Vec<f64>) -> Result<LossTerms> {
        let updated = apply_residuals(self.chain, &self.residuals(point))?;
        let associations = build_associations(&updated, self.anchors);
        let coupling = ChainCoupling {
            chain: &updated,
            associations: &associations,
        };
        let mut anchors = 0.0;
        for t in self.frames {
            anchors += coupled_anchor_loss(&coupling, self.anchors, t)?.0;
        }
        Ok(LossTerms {
            anchors,
            total: self.weight * anchors,
            ..Default::default()
        })
    }

    fn value_and_gradient(&self, point: &Vec<f64>) -> Result<(LossTerms, Vec<f64>)> {
        let residuals = self.residuals(point);
        let updated = apply_residuals(self.chain, &residuals)?;
        let free: Vec<Vec<Vec3>> = self
            .frames
            .iter()
            .map(|t| transport_joints(&updated, self.anchors, t, &RigidTransform::identity()))
            .collect::<Result<_>>()?;
        let frames: Vec<ResidualFrame<'_>> = free
            .iter()
            .zip(self.frames)
            .map(|(f, t)| ResidualFrame {
                free_joints: f,
                transforms: t,
            })
            .collect();
        let (anchors, grad) =
            residual_anchor_loss_grad(self.chain, &residuals, self.anchors, &frames)?;
        Ok((
            LossTerms {
                anchors,
                total: self.weight * anchors,
                ..Default::default()
            },
            grad.iter().map(|g| g * self.weight).collect(),
        ))
    }
}
