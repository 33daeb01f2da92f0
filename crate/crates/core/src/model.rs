//! A loaded model (template, chain, anchors) and the re-posing pipeline.

use crate::anchors::{
    anchor_positions, build_associations, revised_anchor_transforms, AnchorSet, Association,
};
use crate::chain::{forward_kinematics, KinematicChain, Pose};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::se3::{RigidTransform, Vec3};
use crate::skinning::deform_mesh;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub mesh: Mesh,
    pub chain: KinematicChain,
    pub anchors: AnchorSet,
    pub associations: Vec<Association>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reposed {
    pub mesh: Mesh,
    /// Deformed joints by slot.
    pub joints: Vec<Vec3>,
    pub anchors: Vec<Vec3>,
    /// Translation-only anchor transforms, root pose excluded.
    pub transforms: Vec<RigidTransform>,
}

impl ModelBundle {
    pub fn new(mesh: Mesh, chain: KinematicChain, anchors: AnchorSet) -> Result<Self> {
        mesh.check()?;
        let associations = build_associations(&chain, &anchors);
        Ok(ModelBundle {
            mesh,
            chain,
            anchors,
            associations,
        })
    }

    /// Forward kinematics, anchor placement and skinning for one pose.
    ///
    /// Anchors are placed with the root pose removed and the root applied
    /// last, so a rigid root motion moves the whole result rigidly.
    pub fn repose(&self, pose: &Pose) -> Result<Reposed> {
        let local = Pose {
            root: RigidTransform::identity(),
            ..pose.clone()
        };
        let fk = forward_kinematics(&self.chain, &local)?;
        let canonical = self.anchors.positions();
        let moved = if self.associations.is_empty() {
            canonical.to_vec()
        } else {
            anchor_positions(&self.chain, &self.associations, &fk.positions, &pose.twists)?
        };
        let transforms = revised_anchor_transforms(canonical, &moved)?;
        let mesh = deform_mesh(&self.mesh, &self.anchors, &transforms, &pose.root)?;
        Ok(Reposed {
            mesh,
            joints: fk
                .positions
                .iter()
                .map(|p| pose.root.apply_point(p))
                .collect(),
            anchors: moved.iter().map(|p| pose.root.apply_point(p)).collect(),
            transforms,
        })
    }
}
