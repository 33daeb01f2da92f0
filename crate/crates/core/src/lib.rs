//! Kinematic-chain driven deformation: rigid transforms, chains and their
//! repair, anchor-based blend skinning, fitting to point clouds, metrics
//! and file formats.

pub mod anchors;
pub mod chain;
pub mod error;
pub mod fitting;
pub mod fixtures;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod se3;
pub mod skinning;

pub use anchors::{
    anchor_positions, build_associations, revised_anchor_transforms, AnchorSet, Association,
};
pub use chain::{
    apply_residuals, forward_kinematics, hierarchical_order, recover_chain, validate_chain,
    Diagnostic, ForwardKinematics, Joint, KinematicChain, Link, LinkResiduals, Pose,
    RecoveredChain,
};
pub use error::{Error, Result};
pub use fitting::{
    fit_stage1, fit_stage2, FitConfig, FrameObservation, LossWeights, UnconstrainedFrameTransforms,
};
pub use mesh::Mesh;
pub use metrics::{chamfer_distance, evaluate, f_score, MetricReport};
pub use model::{ModelBundle, Reposed};
pub use se3::{axis_angle_rotation, rotation_between, RigidTransform, Rotation, Vec3};
pub use skinning::{
    backward_deform_point, deform_mesh, deform_point, forward_skin_weights, SkinningWeights,
};
