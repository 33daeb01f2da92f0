//! Deterministic synthetic inputs for tests, examples and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::anchors::AnchorSet;
use crate::chain::{Joint, KinematicChain, Pose};
use crate::mesh::Mesh;
use crate::se3::Vec3;

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random tree of `n` joints with shuffled ids and link lengths in
/// `[0.3, 1.5)`.
pub fn random_chain(rng: &mut impl Rng, n: usize) -> KinematicChain {
    assert!(n > 0, "a chain needs at least one joint");
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut positions = vec![Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))];
    let mut joints = vec![Joint::new(ids[0], None, positions[0])];
    for k in 1..n {
        let parent = rng.random_range(0..k);
        let p = positions[parent] + random_unit(rng) * rng.random_range(0.3..1.5);
        positions.push(p);
        joints.push(Joint::new(ids[k], Some(ids[parent]), p));
    }
    joints.shuffle(rng);
    KinematicChain::new(joints).expect("random chain is valid")
}

/// `n` anchors scattered around random links, temperature 0.5.
pub fn random_anchors(rng: &mut impl Rng, chain: &KinematicChain, n: usize) -> AnchorSet {
    let positions = (0..n)
        .map(|_| {
            if chain.links().is_empty() {
                return chain.position(0) + random_unit(rng) * rng.random_range(0.0..0.5);
            }
            let l = rng.random_range(0..chain.links().len());
            let link = chain.links()[l];
            let p = chain.position(link.parent);
            let t = rng.random_range(-0.1..1.1);
            p + chain.link_vector(l) * t + random_unit(rng) * rng.random_range(0.0..0.5)
        })
        .collect();
    AnchorSet::new(positions, 0.5).expect("random anchors are valid")
}

/// Open tube of `rings × segments` vertices around the x axis from `x0` to `x1`.
pub fn cylinder(radius: f64, x0: f64, x1: f64, rings: usize, segments: usize) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = Vec::with_capacity(rings * segments);
    for r in 0..rings {
        let x = x0 + (x1 - x0) * r as f64 / (rings - 1) as f64;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Vec3::new(x, radius * phi.cos(), radius * phi.sin()));
        }
    }
    let mut faces = Vec::with_capacity(2 * (rings - 1) * segments);
    for r in 0..rings - 1 {
        for s in 0..segments {
            let a = r * segments + s;
            let b = r * segments + (s + 1) % segments;
            let (c, d) = (a + segments, b + segments);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    Mesh::new(vertices, faces).expect("cylinder is valid")
}

/// Template, chain and anchors of the bending-tube example.
#[derive(Debug, Clone)]
pub struct ElbowFixture {
    pub mesh: Mesh,
    pub chain: KinematicChain,
    pub anchors: AnchorSet,
}

/// Two unit links along +x inside a 600-vertex tube of radius 0.2. Three
/// anchors sit on the joints and three slightly off the axis between them.
/// The temperature is small enough that vertices follow their nearest
/// anchor almost rigidly, so the generating transforms have zero anchor
/// loss.
pub fn elbow_fixture() -> ElbowFixture {
    let chain = KinematicChain::new(vec![
        Joint::new(0, None, Vec3::zeros()),
        Joint::new(1, Some(0), Vec3::x()),
        Joint::new(2, Some(1), Vec3::new(2.0, 0.0, 0.0)),
    ])
    .expect("elbow chain is valid");
    let mesh = cylinder(0.2, 0.0, 2.0, 30, 20);
    let anchors = vec![
        Vec3::zeros(),
        Vec3::new(0.5, 0.08, 0.0),
        Vec3::x(),
        Vec3::new(1.35, 0.0, 0.08),
        Vec3::new(1.7, 0.08, 0.0),
        Vec3::new(2.0, 0.0, 0.0),
    ];
    ElbowFixture {
        mesh,
        anchors: AnchorSet::new(anchors, ELBOW_TEMPERATURE).expect("elbow anchors are valid"),
        chain,
    }
}

/// Skinning temperature of [`elbow_fixture`].
pub const ELBOW_TEMPERATURE: f64 = 0.02;

/// Pose bending the elbow joint (id 1) by `degrees` about +z.
pub fn elbow_pose(chain: &KinematicChain, degrees: f64) -> Pose {
    let mut pose = Pose::identity(chain);
    let slot = chain.slot_of(1).expect("elbow joint");
    pose.joint_rotations[slot] = Vec3::z() * degrees.to_radians();
    pose
}

/// Copy of `chain` with one link scaled by `factor`; the child's subtree
/// moves with it.
pub fn scale_link(chain: &KinematicChain, link: usize, factor: f64) -> KinematicChain {
    let l = chain.links()[link];
    let shift = chain.link_vector(link) * (factor - 1.0);
    let mut positions = chain.positions();
    positions[l.child] += shift;
    for d in chain.descendants(l.child) {
        positions[d] += shift;
    }
    chain
        .with_positions(&positions)
        .expect("scaled chain is valid")
}

/// Target frames produced by re-posing `bundle` at each elbow bend.
pub fn elbow_frames(
    bundle: &crate::model::ModelBundle,
    degrees: &[f64],
) -> Vec<crate::fitting::FrameObservation> {
    degrees
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let reposed = bundle
                .repose(&elbow_pose(&bundle.chain, *d))
                .expect("elbow pose is valid");
            crate::fitting::FrameObservation::new(i, reposed.mesh.vertices)
        })
        .collect()
}
