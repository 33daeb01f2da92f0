//! Distance-based blend skinning over deformation anchors.

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::se3::{RigidTransform, Vec3};

/// Normalized, nonnegative per-anchor blend weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningWeights(Vec<f64>);

impl SkinningWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `softmax(−‖x − c_i‖² / τ)` over `centers`.
pub fn softmax_weights(x: &Vec3, centers: &[Vec3], temperature: f64) -> SkinningWeights {
    let logits: Vec<f64> = centers
        .iter()
        .map(|c| -(x - c).norm_squared() / temperature)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    SkinningWeights(w)
}

/// Forward weights of a canonical point.
pub fn forward_skin_weights(x: &Vec3, anchors: &AnchorSet) -> SkinningWeights {
    softmax_weights(x, anchors.positions(), anchors.temperature())
}

/// `Σ w_i (R_i x + t_i)`: the weighted sum of homogeneous matrices applied to
/// `x`. The blend is not re-orthonormalized.
pub(crate) fn blend(x: &Vec3, weights: &[f64], transforms: &[RigidTransform]) -> Vec3 {
    weights
        .iter()
        .zip(transforms)
        .fold(Vec3::zeros(), |acc, (w, t)| acc + t.apply_point(x) * *w)
}

fn check_counts(weights: usize, transforms: usize) -> Result<()> {
    if weights != transforms {
        return Err(Error::invalid(format!(
            "{weights} skinning weights vs {transforms} anchor transforms"
        )));
    }
    Ok(())
}

/// Canonical point to deformed space: `C · (Σ w_i T_i) · x`.
pub fn deform_point(
    x: &Vec3,
    weights: &SkinningWeights,
    transforms: &[RigidTransform],
    root: &RigidTransform,
) -> Result<Vec3> {
    check_counts(weights.len(), transforms.len())?;
    Ok(root.apply_point(&blend(x, weights.as_slice(), transforms)))
}

/// Deformed point back to canonical space: `(Σ w_i T_i⁻¹) · C⁻¹ · x_t`, with
/// weights taken against the deformed anchors (root pose included).
pub fn backward_deform_point(
    x_t: &Vec3,
    deformed_anchors: &[Vec3],
    transforms: &[RigidTransform],
    root: &RigidTransform,
    temperature: f64,
) -> Result<Vec3> {
    check_counts(deformed_anchors.len(), transforms.len())?;
    let w = softmax_weights(x_t, deformed_anchors, temperature);
    let y = root.inverse().apply_point(x_t);
    Ok(w.as_slice()
        .iter()
        .zip(transforms)
        .fold(Vec3::zeros(), |acc, (w, t)| {
            acc + t.inverse().apply_point(&y) * *w
        }))
}

/// Skins every vertex; faces are kept.
pub fn deform_mesh(
    mesh: &Mesh,
    anchors: &AnchorSet,
    transforms: &[RigidTransform],
    root: &RigidTransform,
) -> Result<Mesh> {
    check_counts(anchors.len(), transforms.len())?;
    let vertices = mesh
        .vertices
        .iter()
        .map(|x| {
            let w = forward_skin_weights(x, anchors);
            root.apply_point(&blend(x, w.as_slice(), transforms))
        })
        .collect();
    Ok(Mesh {
        vertices,
        faces: mesh.faces.clone(),
    })
}
