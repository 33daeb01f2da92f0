//! Kinematic chains: tree structure, forward kinematics, recovery of a
//! length-preserving chain from free joint positions, and residual link
//! length updates.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Rotation, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub id: usize,
    pub parent: Option<usize>,
    pub position: Vec3,
}

impl Joint {
    pub fn new(id: usize, parent: Option<usize>, position: Vec3) -> Self {
        Joint {
            id,
            parent,
            position,
        }
    }
}

/// A structural problem with a set of joints. Joints are named by id.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    Empty,
    NoRoot,
    MultipleRoots(Vec<usize>),
    DuplicateId(usize),
    UnknownParent { joint: usize, parent: usize },
    Cycle(usize),
    ZeroLengthLink { parent: usize, child: usize },
    NonFinitePosition(usize),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Empty => write!(f, "chain has no joints"),
            Diagnostic::NoRoot => write!(f, "no root joint (every joint has a parent)"),
            Diagnostic::MultipleRoots(ids) => write!(f, "multiple roots: joints {ids:?}"),
            Diagnostic::DuplicateId(id) => write!(f, "duplicate joint id {id}"),
            Diagnostic::UnknownParent { joint, parent } => {
                write!(f, "joint {joint} references unknown parent {parent}")
            }
            Diagnostic::Cycle(id) => write!(f, "cycle through joint {id}"),
            Diagnostic::ZeroLengthLink { parent, child } => {
                write!(f, "zero-length link {parent} -> {child}")
            }
            Diagnostic::NonFinitePosition(id) => write!(f, "joint {id} has a non-finite position"),
        }
    }
}

/// Reports every tree violation in `joints`. Empty iff the joints form a
/// valid chain.
pub fn validate_chain(joints: &[Joint]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if joints.is_empty() {
        out.push(Diagnostic::Empty);
        return out;
    }
    let mut by_id: HashMap<usize, &Joint> = HashMap::new();
    for j in joints {
        if by_id.insert(j.id, j).is_some() {
            out.push(Diagnostic::DuplicateId(j.id));
        }
        if !j.position.iter().all(|c| c.is_finite()) {
            out.push(Diagnostic::NonFinitePosition(j.id));
        }
    }
    let mut roots: Vec<usize> = joints
        .iter()
        .filter(|j| j.parent.is_none())
        .map(|j| j.id)
        .collect();
    roots.sort_unstable();
    match roots.len() {
        0 => out.push(Diagnostic::NoRoot),
        1 => {}
        _ => out.push(Diagnostic::MultipleRoots(roots)),
    }
    for j in joints {
        let Some(p) = j.parent else { continue };
        match by_id.get(&p) {
            None => out.push(Diagnostic::UnknownParent {
                joint: j.id,
                parent: p,
            }),
            Some(pj) => {
                if (j.position - pj.position).norm() == 0.0 {
                    out.push(Diagnostic::ZeroLengthLink {
                        parent: p,
                        child: j.id,
                    });
                }
            }
        }
    }
    // Cycles: walk parent pointers; a walk longer than the joint count loops.
    let mut reported = Vec::new();
    for j in joints {
        let mut cur = j.parent;
        let mut steps = 0;
        while let Some(p) = cur {
            if p == j.id || steps > joints.len() {
                break;
            }
            cur = by_id.get(&p).and_then(|pj| pj.parent);
            steps += 1;
        }
        if cur == Some(j.id) {
            let mut members = vec![j.id];
            let mut c = j.parent;
            while let Some(p) = c {
                if p == j.id {
                    break;
                }
                members.push(p);
                c = by_id.get(&p).and_then(|pj| pj.parent);
            }
            let smallest = *members.iter().min().unwrap();
            if !reported.contains(&smallest) {
                reported.push(smallest);
                out.push(Diagnostic::Cycle(smallest));
            }
        }
    }
    out
}

/// A directed link between two joints, both given as slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub parent: usize,
    pub child: usize,
}

/// A validated tree of joints.
///
/// Joints are stored sorted by id; a joint's position in that order is its
/// *slot*. Every per-joint array in this crate is indexed by slot, and every
/// per-link array by the index into [`KinematicChain::links`], which are
/// ordered lexicographically by `(parent id, child id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
    links: Vec<Link>,
    incoming: Vec<Option<usize>>,
    root: usize,
}

impl KinematicChain {
    pub fn new(mut joints: Vec<Joint>) -> Result<Self> {
        let diagnostics = validate_chain(&joints);
        if !diagnostics.is_empty() {
            return Err(Error::InvalidChain(diagnostics));
        }
        joints.sort_by_key(|j| j.id);
        let slot: HashMap<usize, usize> =
            joints.iter().enumerate().map(|(s, j)| (j.id, s)).collect();
        let parents: Vec<Option<usize>> =
            joints.iter().map(|j| j.parent.map(|p| slot[&p])).collect();
        let mut children = vec![Vec::new(); joints.len()];
        for (s, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(s);
            }
        }
        let root = parents.iter().position(Option::is_none).unwrap();

        let mut order = Vec::with_capacity(joints.len());
        let mut queue = VecDeque::from([root]);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            queue.extend(children[s].iter().copied());
        }

        let mut links: Vec<Link> = parents
            .iter()
            .enumerate()
            .filter_map(|(c, p)| {
                p.map(|p| Link {
                    parent: p,
                    child: c,
                })
            })
            .collect();
        links.sort_by_key(|l| (l.parent, l.child));
        let mut incoming = vec![None; joints.len()];
        for (i, l) in links.iter().enumerate() {
            incoming[l.child] = Some(i);
        }

        Ok(KinematicChain {
            joints,
            parents,
            children,
            order,
            links,
            incoming,
            root,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn slot_of(&self, id: usize) -> Option<usize> {
        self.joints.binary_search_by_key(&id, |j| j.id).ok()
    }

    pub fn id_of(&self, slot: usize) -> usize {
        self.joints[slot].id
    }

    pub fn parent(&self, slot: usize) -> Option<usize> {
        self.parents[slot]
    }

    pub fn children(&self, slot: usize) -> &[usize] {
        &self.children[slot]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Index of the link ending at `slot`; `None` for the root.
    pub fn incoming_link(&self, slot: usize) -> Option<usize> {
        self.incoming[slot]
    }

    pub fn position(&self, slot: usize) -> Vec3 {
        self.joints[slot].position
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.joints.iter().map(|j| j.position).collect()
    }

    pub fn link_vector(&self, link: usize) -> Vec3 {
        let l = self.links[link];
        self.position(l.child) - self.position(l.parent)
    }

    pub fn link_length(&self, link: usize) -> f64 {
        self.link_vector(link).norm()
    }

    pub fn link_lengths(&self) -> Vec<f64> {
        (0..self.links.len()).map(|l| self.link_length(l)).collect()
    }

    pub fn min_link_length(&self) -> Option<f64> {
        self.link_lengths().into_iter().reduce(f64::min)
    }

    /// Slots in hierarchical order: root first, every joint after its parent.
    pub fn hierarchical_order(&self) -> &[usize] {
        &self.order
    }

    /// Strict descendants of `slot`, in hierarchical order.
    pub fn descendants(&self, slot: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children[slot].iter().rev().copied().collect();
        while let Some(s) = stack.pop() {
            out.push(s);
            stack.extend(self.children[s].iter().rev().copied());
        }
        out
    }

    /// Links on the path from the root down to `slot`, root side first.
    pub fn path_links(&self, slot: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = slot;
        while let Some(l) = self.incoming[cur] {
            out.push(l);
            cur = self.links[l].parent;
        }
        out.reverse();
        out
    }

    /// The same topology with new joint positions (one per slot).
    pub fn with_positions(&self, positions: &[Vec3]) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} joint positions, got {}",
                self.len(),
                positions.len()
            )));
        }
        let joints = self
            .joints
            .iter()
            .zip(positions)
            .map(|(j, p)| Joint::new(j.id, j.parent, *p))
            .collect();
        KinematicChain::new(joints)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_chain(&self.joints)
    }
}

/// Joint ids in hierarchical order.
pub fn hierarchical_order(chain: &KinematicChain) -> Vec<usize> {
    chain
        .hierarchical_order()
        .iter()
        .map(|&s| chain.id_of(s))
        .collect()
}

/// A configuration of a chain.
///
/// `joint_rotations[s]` is an axis-angle vector rotating the subtree below
/// slot `s` about the joint's own canonical position. `twists[s]` is the
/// axial rotation of the link ending at slot `s` (the root entry must stay
/// zero). `root` is applied outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub root: RigidTransform,
    pub joint_rotations: Vec<Vec3>,
    pub twists: Vec<f64>,
}

impl Pose {
    pub fn identity(chain: &KinematicChain) -> Self {
        Pose {
            root: RigidTransform::identity(),
            joint_rotations: vec![Vec3::zeros(); chain.len()],
            twists: vec![0.0; chain.len()],
        }
    }

    fn check(&self, chain: &KinematicChain) -> Result<()> {
        if self.joint_rotations.len() != chain.len() || self.twists.len() != chain.len() {
            return Err(Error::invalid(format!(
                "pose has {} rotations and {} twists for a chain of {} joints",
                self.joint_rotations.len(),
                self.twists.len(),
                chain.len()
            )));
        }
        if self.twists[chain.root()] != 0.0 {
            return Err(Error::invalid(
                "the root joint has no incoming link to twist",
            ));
        }
        let finite = self.root.is_finite()
            && self
                .joint_rotations
                .iter()
                .all(|r| r.iter().all(|c| c.is_finite()))
            && self.twists.iter().all(|t| t.is_finite());
        if !finite {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardKinematics {
    /// Canonical-to-deformed map of each joint's frame, root pose included.
    pub transforms: Vec<RigidTransform>,
    /// Deformed joint positions.
    pub positions: Vec<Vec3>,
}

pub fn forward_kinematics(chain: &KinematicChain, pose: &Pose) -> Result<ForwardKinematics> {
    pose.check(chain)?;
    let n = chain.len();
    let mut local = vec![RigidTransform::identity(); n];
    for &s in chain.hierarchical_order() {
        let own = RigidTransform::rotation_about(
            Rotation::from_rotation_vector(&pose.joint_rotations[s]),
            &chain.position(s),
        );
        local[s] = match chain.parent(s) {
            Some(p) => local[p].compose(&own),
            None => own,
        };
    }
    let transforms: Vec<RigidTransform> = local.iter().map(|t| pose.root.compose(t)).collect();
    let positions = (0..n)
        .map(|s| transforms[s].apply_point(&chain.position(s)))
        .collect();
    Ok(ForwardKinematics {
        transforms,
        positions,
    })
}

/// Output of [`recover_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredChain {
    pub positions: Vec<Vec3>,
    /// Links whose free endpoints coincided; their canonical offset was reused.
    pub degenerate_links: Vec<usize>,
}

/// Rebuilds a connected chain with canonical link lengths from free joint
/// positions.
///
/// Visits joints in hierarchical order; each child is placed at canonical
/// distance from its (already revised) parent along the free direction, and
/// the correction is carried down to all of its descendants. The root keeps
/// its free position.
pub fn recover_chain(chain: &KinematicChain, unconstrained: &[Vec3]) -> Result<RecoveredChain> {
    if unconstrained.len() != chain.len() {
        return Err(Error::invalid(format!(
            "expected {} unconstrained joints, got {}",
            chain.len(),
            unconstrained.len()
        )));
    }
    let mut free = unconstrained.to_vec();
    let mut revised = vec![Vec3::zeros(); chain.len()];
    let mut degenerate_links = Vec::new();
    revised[chain.root()] = free[chain.root()];
    for &j in chain.hierarchical_order() {
        for &k in chain.children(j) {
            let canonical = chain.position(k) - chain.position(j);
            let length = canonical.norm();
            // `free[k]` already carries every correction made above `k`, so
            // this is the original free link vector.
            let free_link = free[k] - revised[j];
            let free_length = free_link.norm();
            revised[k] = if free_length < 1e-12 * length {
                let link = chain.incoming_link(k).unwrap();
                log::warn!(
                    "recover_chain: free joints {} and {} coincide; reusing canonical offset",
                    chain.id_of(j),
                    chain.id_of(k)
                );
                degenerate_links.push(link);
                revised[j] + canonical
            } else {
                revised[j] + free_link * (length / free_length)
            };
            let shift = revised[k] - free[k];
            for d in chain.descendants(k) {
                free[d] += shift;
            }
        }
    }
    Ok(RecoveredChain {
        positions: revised,
        degenerate_links,
    })
}

/// Raw per-link length residuals and their clip bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkResiduals {
    pub raw: Vec<f64>,
    pub gamma: f64,
}

impl LinkResiduals {
    pub fn zeros(chain: &KinematicChain, gamma: f64) -> Self {
        LinkResiduals {
            raw: vec![0.0; chain.links().len()],
            gamma,
        }
    }

    /// `γ·tanh(r)` per link, strictly inside `(−γ, γ)`.
    pub fn clipped(&self) -> Vec<f64> {
        self.raw.iter().map(|r| self.gamma * r.tanh()).collect()
    }
}

/// Lengthens or shortens every link by its clipped residual, keeping link
/// directions and carrying each change down to the link's descendants.
pub fn apply_residuals(
    chain: &KinematicChain,
    residuals: &LinkResiduals,
) -> Result<KinematicChain> {
    if residuals.raw.len() != chain.links().len() {
        return Err(Error::invalid(format!(
            "expected {} link residuals, got {}",
            chain.links().len(),
            residuals.raw.len()
        )));
    }
    if residuals.raw.iter().any(|r| r.is_nan()) {
        return Err(Error::invalid("link residuals contain NaN"));
    }
    let gamma = residuals.gamma;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if let Some(min) = chain.min_link_length() {
        if gamma >= min {
            return Err(Error::InvalidConfig(format!(
                "gamma {gamma} must be below the shortest link length {min}"
            )));
        }
    }
    let clipped = residuals.clipped();
    let mut current = chain.positions();
    let mut revised = current.clone();
    for &j in chain.hierarchical_order() {
        for &k in chain.children(j) {
            let link = chain.incoming_link(k).unwrap();
            let canonical = current[k] - revised[j];
            let length = chain.link_length(link);
            let scale = (length + clipped[link]) / length;
            revised[k] = revised[j] + canonical * scale;
            let shift = revised[k] - current[k];
            for d in chain.descendants(k) {
                current[d] += shift;
            }
        }
    }
    chain.with_positions(&revised)
}
