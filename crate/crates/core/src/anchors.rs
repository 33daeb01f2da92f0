//! Deformation anchors and their association with chain links.
//!
//! Every anchor is tied to its closest link by three parameters computed in
//! canonical space: the distance `alpha` from the parent joint to the foot
//! point `m` on the link, the offset length `beta = ‖a − m‖`, and the
//! rotation `g` taking the link direction onto the offset direction. Those
//! parameters place the anchor relative to the link in any configuration of
//! the chain.

use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::se3::{axis_angle_rotation, rotation_between, RigidTransform, Rotation, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    positions: Vec<Vec3>,
    temperature: f64,
}

impl AnchorSet {
    pub fn new(positions: Vec<Vec3>, temperature: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("at least one anchor is required"));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("anchor positions must be finite"));
        }
        Ok(AnchorSet {
            positions,
            temperature,
        })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        AnchorSet::new(self.positions.clone(), temperature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub anchor: usize,
    /// Index into [`KinematicChain::links`].
    pub link: usize,
    pub parent_id: usize,
    pub child_id: usize,
    pub alpha: f64,
    pub beta: f64,
    pub g: Rotation,
    /// Canonical anchor position, returned unchanged by
    /// [`anchor_positions`] while its link is undeformed.
    pub canonical: Vec3,
}

/// Closest point to `a` on the closed segment `p`–`q`, and its distance from
/// `p` along the segment.
pub(crate) fn closest_on_segment(a: &Vec3, p: &Vec3, q: &Vec3) -> (Vec3, f64) {
    let d = q - p;
    let len2 = d.norm_squared();
    let t = ((a - p).dot(&d) / len2).clamp(0.0, 1.0);
    (p + d * t, t * len2.sqrt())
}

/// Offset rotation for an anchor with foot point `m` on a link with unit
/// direction `e`. Identity when the anchor sits on the link.
pub(crate) fn offset_rotation(e: &Vec3, offset: &Vec3) -> Rotation {
    if offset.norm() == 0.0 {
        Rotation::identity()
    } else {
        rotation_between(e, offset).expect("nonzero inputs")
    }
}

/// Ties every anchor to its closest link (ties go to the lower link index).
///
/// A chain without links yields no associations; its anchors stay rigidly
/// attached to the root.
pub fn build_associations(chain: &KinematicChain, anchors: &AnchorSet) -> Vec<Association> {
    if chain.links().is_empty() {
        return Vec::new();
    }
    anchors
        .positions()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut best: Option<(usize, f64, Vec3, f64)> = None;
            for (l, link) in chain.links().iter().enumerate() {
                let p = chain.position(link.parent);
                let q = chain.position(link.child);
                let (m, alpha) = closest_on_segment(a, &p, &q);
                let dist2 = (a - m).norm_squared();
                if best.is_none_or(|b| dist2 < b.1) {
                    best = Some((l, dist2, m, alpha));
                }
            }
            let (l, _, m, alpha) = best.unwrap();
            let link = chain.links()[l];
            let e = chain.link_vector(l).normalize();
            let offset = a - m;
            Association {
                anchor: i,
                link: l,
                parent_id: chain.id_of(link.parent),
                child_id: chain.id_of(link.child),
                alpha,
                beta: offset.norm(),
                g: offset_rotation(&e, &offset),
                canonical: *a,
            }
        })
        .collect()
}

fn check_association(chain: &KinematicChain, a: &Association) -> Result<(usize, usize)> {
    let link = chain
        .links()
        .get(a.link)
        .ok_or_else(|| Error::invalid(format!("association references missing link {}", a.link)))?;
    if chain.id_of(link.parent) != a.parent_id || chain.id_of(link.child) != a.child_id {
        return Err(Error::invalid(format!(
            "association for anchor {} names link {}->{} which is not link {} of the chain",
            a.anchor, a.parent_id, a.child_id, a.link
        )));
    }
    Ok((link.parent, link.child))
}

/// Anchor positions implied by a (length-preserving) joint configuration.
///
/// `deformed_joints` and `twists` are indexed by slot; the twist of a link
/// is stored at its child joint and rotates the anchor offset about the
/// deformed link direction.
pub fn anchor_positions(
    chain: &KinematicChain,
    associations: &[Association],
    deformed_joints: &[Vec3],
    twists: &[f64],
) -> Result<Vec<Vec3>> {
    if deformed_joints.len() != chain.len() || twists.len() != chain.len() {
        return Err(Error::invalid(format!(
            "expected {} deformed joints and twists, got {} and {}",
            chain.len(),
            deformed_joints.len(),
            twists.len()
        )));
    }
    associations
        .iter()
        .map(|a| {
            let (j, k) = check_association(chain, a)?;
            let twist = twists[k];
            if twist == 0.0
                && deformed_joints[j] == chain.position(j)
                && deformed_joints[k] == chain.position(k)
            {
                return Ok(a.canonical);
            }
            let d = (deformed_joints[k] - deformed_joints[j]) / chain.link_length(a.link);
            let mut offset = a.g.apply(&d) * a.beta;
            if twist != 0.0 {
                offset = axis_angle_rotation(&d, twist)?.apply(&offset);
            }
            Ok(deformed_joints[j] + d * a.alpha + offset)
        })
        .collect()
}

/// Translation-only transforms moving each canonical anchor to its deformed
/// position.
pub fn revised_anchor_transforms(
    canonical: &[Vec3],
    deformed: &[Vec3],
) -> Result<Vec<RigidTransform>> {
    if canonical.len() != deformed.len() {
        return Err(Error::invalid(format!(
            "{} canonical anchors vs {} deformed anchors",
            canonical.len(),
            deformed.len()
        )));
    }
    Ok(canonical
        .iter()
        .zip(deformed)
        .map(|(a, b)| RigidTransform::from_translation(b - a))
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::chain::{forward_kinematics, Joint, Pose};
    use crate::fixtures::{random_anchors, random_chain};

    fn one_link(p: [f64; 3], q: [f64; 3]) -> KinematicChain {
        KinematicChain::new(vec![
            Joint::new(0, None, Vec3::from(p)),
            Joint::new(1, Some(0), Vec3::from(q)),
        ])
        .unwrap()
    }

    #[test]
    fn anchor_on_link_interior() {
        let chain = one_link([0.0; 3], [0.0, 0.0, 2.0]);
        let anchors = AnchorSet::new(vec![Vec3::new(0.0, 0.0, 1.25)], 1.0).unwrap();
        let a = &build_associations(&chain, &anchors)[0];
        assert_eq!(a.beta, 0.0);
        assert_eq!(a.g, Rotation::identity());
        assert_abs_diff_eq!(a.alpha, 1.25, epsilon = 1e-15);
    }

    #[test]
    fn vertical_link_projection() {
        let chain = one_link([0.0; 3], [0.0, 0.0, 2.0]);
        let anchors = AnchorSet::new(vec![Vec3::new(1.0, 0.0, 0.5)], 1.0).unwrap();
        let a = &build_associations(&chain, &anchors)[0];
        assert_abs_diff_eq!(a.alpha, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.beta, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.g.apply(&Vec3::z()), Vec3::x(), epsilon = 1e-12);
    }

    #[test]
    fn equidistant_anchor_goes_to_lower_link() {
        // Root in the middle with two links along ±x; anchor straight above.
        let chain = KinematicChain::new(vec![
            Joint::new(0, None, Vec3::zeros()),
            Joint::new(1, Some(0), Vec3::x()),
            Joint::new(2, Some(0), -Vec3::x()),
        ])
        .unwrap();
        let anchors = AnchorSet::new(vec![Vec3::new(0.0, 1.0, 0.0)], 1.0).unwrap();
        let a = &build_associations(&chain, &anchors)[0];
        assert_eq!((a.link, a.parent_id, a.child_id), (0, 0, 1));
    }

    #[test]
    fn anchor_before_parent_end_uses_link_direction() {
        let chain = one_link([0.0; 3], [1.0, 0.0, 0.0]);
        let anchors = AnchorSet::new(vec![Vec3::new(-1.0, 1.0, 0.0)], 1.0).unwrap();
        let assoc = build_associations(&chain, &anchors);
        assert_eq!(assoc[0].alpha, 0.0);
        let back = anchor_positions(&chain, &assoc, &chain.positions(), &[0.0; 2]).unwrap();
        assert_abs_diff_eq!(back[0], anchors.positions()[0], epsilon = 1e-12);
    }

    #[test]
    fn rotated_link_moves_offset() {
        // Link along +x, anchor at (0.5, 1, 0): alpha 0.5, beta 1, g = +90° about z.
        let chain = one_link([0.0; 3], [1.0, 0.0, 0.0]);
        let anchors = AnchorSet::new(vec![Vec3::new(0.5, 1.0, 0.0)], 1.0).unwrap();
        let assoc = build_associations(&chain, &anchors);
        let mut pose = Pose::identity(&chain);
        pose.joint_rotations[0] = Vec3::z() * FRAC_PI_2;
        let fk = forward_kinematics(&chain, &pose).unwrap();
        let moved = anchor_positions(&chain, &assoc, &fk.positions, &[0.0; 2]).unwrap();
        // d = +y, g·d = -x: anchor at 0.5·y - x
        assert_abs_diff_eq!(moved[0], Vec3::new(-1.0, 0.5, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn half_turn_twist_reflects_anchor() {
        let chain = one_link([0.0; 3], [1.0, 0.0, 0.0]);
        let anchors = AnchorSet::new(vec![Vec3::new(0.5, 0.3, 0.4)], 1.0).unwrap();
        let assoc = build_associations(&chain, &anchors);
        let twisted = anchor_positions(&chain, &assoc, &chain.positions(), &[0.0, PI]).unwrap();
        assert_abs_diff_eq!(twisted[0], Vec3::new(0.5, -0.3, -0.4), epsilon = 1e-12);
    }

    #[test]
    fn revised_transforms_are_translations() {
        let a = vec![Vec3::new(1.0, 1.0, 1.0), Vec3::zeros()];
        let b = vec![a[0] + Vec3::new(1.0, 2.0, 3.0), a[1]];
        let t = revised_anchor_transforms(&a, &b).unwrap();
        assert_eq!(t[0].translation, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(t[1], RigidTransform::identity());
        assert!(revised_anchor_transforms(&a, &b[..1]).is_err());
    }

    #[test]
    fn mismatched_association_is_rejected() {
        let chain = one_link([0.0; 3], [1.0, 0.0, 0.0]);
        let anchors = AnchorSet::new(vec![Vec3::new(0.5, 1.0, 0.0)], 1.0).unwrap();
        let mut assoc = build_associations(&chain, &anchors);
        assoc[0].child_id = 7;
        assert!(anchor_positions(&chain, &assoc, &chain.positions(), &[0.0; 2]).is_err());
        assert!(anchor_positions(&chain, &assoc, &chain.positions(), &[0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn association_invariants(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chain = random_chain(&mut rng, 8);
            let anchors = random_anchors(&mut rng, &chain, 12);
            let assoc = build_associations(&chain, &anchors);
            let canonical = anchor_positions(&chain, &assoc, &chain.positions(), &vec![0.0; chain.len()]).unwrap();
            prop_assert_eq!(&canonical[..], anchors.positions());
            for a in &assoc {
                prop_assert!(a.alpha >= 0.0 && a.alpha <= chain.link_length(a.link) + 1e-12);
                if a.beta > 1e-9 {
                    let link = chain.links()[a.link];
                    let p = chain.position(link.parent);
                    let e = chain.link_vector(a.link).normalize();
                    let m = p + e * a.alpha;
                    let n = (anchors.positions()[a.anchor] - m).normalize();
                    prop_assert!((a.g.apply(&e) - n).norm() < 1e-9);
                }
            }
            let mut pose = Pose::identity(&chain);
            for r in pose.joint_rotations.iter_mut() {
                *r = Vec3::from_fn(|_, _| rng.random_range(-1.5..1.5));
            }
            let twists: Vec<f64> = (0..chain.len())
                .map(|s| if s == chain.root() { 0.0 } else { rng.random_range(-3.0..3.0) })
                .collect();
            let fk = forward_kinematics(&chain, &pose).unwrap();
            let moved = anchor_positions(&chain, &assoc, &fk.positions, &twists).unwrap();
            for a in &assoc {
                let link = chain.links()[a.link];
                let pj = fk.positions[link.parent];
                let d = (fk.positions[link.child] - pj) / chain.link_length(a.link);
                let leg = (moved[a.anchor] - (pj + d * a.alpha)).norm();
                prop_assert!((leg - a.beta).abs() < 1e-9);
            }
        }
    }
}
