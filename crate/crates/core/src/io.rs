//! File formats: OBJ meshes and point clouds, JSON chains, poses, anchors,
//! fit configurations and results, and the model document served to the
//! pose editor.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anchors::{AnchorSet, Association};
use crate::chain::{Joint, KinematicChain, Pose};
use crate::error::{Error, Result};
use crate::fitting::{
    default_temperature, FitConfig, FrameObservation, LossWeights, UnconstrainedFrameTransforms,
};
use crate::mesh::Mesh;
use crate::model::{ModelBundle, Reposed};
use crate::se3::{RigidTransform, Rotation, Vec3};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(path, &read(path)?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

// ---------------------------------------------------------------- OBJ

/// Parses the `v` and `f` statements of an OBJ file. Other statements are
/// skipped. Faces with more than three corners are fan-triangulated.
pub fn parse_obj(path: &Path, text: &str) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut fanned = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .map(|p| {
                        p.parse::<f64>()
                            .map_err(|e| err(line_no, format!("bad coordinate {p:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 && coords.len() != 4 {
                    return Err(err(
                        line_no,
                        format!("vertex needs 3 coordinates, got {}", coords.len()),
                    ));
                }
                if !coords.iter().all(|c| c.is_finite()) {
                    return Err(err(line_no, "vertex coordinates must be finite".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = parts
                    .map(|p| {
                        let first = p.split('/').next().unwrap_or("");
                        first
                            .parse::<i64>()
                            .map_err(|e| err(line_no, format!("bad face index {p:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err(
                        line_no,
                        format!("face needs at least 3 vertices, got {}", idx.len()),
                    ));
                }
                if idx.len() > 3 {
                    fanned += 1;
                }
                polygons.push((line_no, idx));
            }
            _ => {}
        }
    }
    if fanned > 0 {
        log::warn!(
            "{}: fan-triangulated {fanned} polygonal faces",
            path.display()
        );
    }
    let mut faces = Vec::new();
    for (line_no, idx) in polygons {
        let resolved: Vec<usize> = idx
            .iter()
            .map(|&k| {
                if k < 1 || k as usize > vertices.len() {
                    Err(err(
                        line_no,
                        format!("face index {k} outside 1..={}", vertices.len()),
                    ))
                } else {
                    Ok(k as usize - 1)
                }
            })
            .collect::<Result<_>>()?;
        for w in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[w], resolved[w + 1]]);
        }
    }
    Mesh::new(vertices, faces)
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    parse_obj(path, &read(path)?)
}

/// OBJ text with shortest round-trip number formatting.
pub fn mesh_to_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    write(path, &mesh_to_obj(mesh))
}

// -------------------------------------------------------------- chain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub id: usize,
    pub parent: Option<usize>,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    pub joints: Vec<JointDoc>,
}

impl ChainDoc {
    pub fn from_chain(chain: &KinematicChain) -> Self {
        ChainDoc {
            joints: chain
                .joints()
                .iter()
                .map(|j| JointDoc {
                    id: j.id,
                    parent: j.parent,
                    position: arr(&j.position),
                })
                .collect(),
        }
    }

    pub fn to_chain(&self) -> Result<KinematicChain> {
        KinematicChain::new(
            self.joints
                .iter()
                .map(|j| Joint::new(j.id, j.parent, v3(j.position)))
                .collect(),
        )
    }
}

pub fn parse_chain(path: &Path, text: &str) -> Result<KinematicChain> {
    parse_json::<ChainDoc>(path, text)?.to_chain()
}

pub fn load_chain(path: &Path) -> Result<KinematicChain> {
    parse_chain(path, &read(path)?)
}

pub fn chain_to_json(chain: &KinematicChain) -> String {
    to_json(&ChainDoc::from_chain(chain))
}

pub fn save_chain(chain: &KinematicChain, path: &Path) -> Result<()> {
    write(path, &chain_to_json(chain))
}

// --------------------------------------------------------------- pose

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootDoc {
    #[serde(default)]
    pub rotation_axis_angle: [f64; 3],
    #[serde(default)]
    pub translation: [f64; 3],
}

impl RootDoc {
    pub fn from_transform(t: &RigidTransform) -> Self {
        RootDoc {
            rotation_axis_angle: arr(&t.rotation.to_rotation_vector()),
            translation: arr(&t.translation),
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform> {
        let w = v3(self.rotation_axis_angle);
        let t = v3(self.translation);
        if !w.iter().chain(t.iter()).all(|c| c.is_finite()) {
            return Err(Error::invalid("root pose must be finite"));
        }
        Ok(RigidTransform::new(Rotation::from_rotation_vector(&w), t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJointDoc {
    pub id: usize,
    #[serde(default)]
    pub rotation_axis_angle: [f64; 3],
    #[serde(default)]
    pub twist: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDoc {
    #[serde(default)]
    pub root: RootDoc,
    #[serde(default)]
    pub joints: Vec<PoseJointDoc>,
}

impl PoseDoc {
    /// Every joint in id order.
    pub fn from_pose(chain: &KinematicChain, pose: &Pose) -> Self {
        PoseDoc {
            root: RootDoc::from_transform(&pose.root),
            joints: (0..chain.len())
                .map(|s| PoseJointDoc {
                    id: chain.id_of(s),
                    rotation_axis_angle: arr(&pose.joint_rotations[s]),
                    twist: pose.twists[s],
                })
                .collect(),
        }
    }

    /// Joints missing from the document keep identity rotation and zero
    /// twist.
    pub fn to_pose(&self, chain: &KinematicChain) -> Result<Pose> {
        let mut pose = Pose::identity(chain);
        pose.root = self.root.to_transform()?;
        let mut seen = vec![false; chain.len()];
        for j in &self.joints {
            let slot = chain.slot_of(j.id).ok_or_else(|| {
                Error::invalid(format!("pose references unknown joint id {}", j.id))
            })?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::invalid(format!(
                    "pose lists joint id {} twice",
                    j.id
                )));
            }
            let r = v3(j.rotation_axis_angle);
            if !r.iter().all(|c| c.is_finite()) || !j.twist.is_finite() {
                return Err(Error::invalid(format!(
                    "joint {} has a non-finite rotation or twist",
                    j.id
                )));
            }
            if slot == chain.root() && j.twist != 0.0 {
                return Err(Error::invalid(format!(
                    "root joint {} cannot be twisted",
                    j.id
                )));
            }
            pose.joint_rotations[slot] = r;
            pose.twists[slot] = j.twist;
        }
        Ok(pose)
    }
}

pub fn parse_pose(path: &Path, text: &str, chain: &KinematicChain) -> Result<Pose> {
    parse_json::<PoseDoc>(path, text)?.to_pose(chain)
}

pub fn load_pose(path: &Path, chain: &KinematicChain) -> Result<Pose> {
    parse_pose(path, &read(path)?, chain)
}

pub fn pose_to_json(chain: &KinematicChain, pose: &Pose) -> String {
    to_json(&PoseDoc::from_pose(chain, pose))
}

pub fn save_pose(chain: &KinematicChain, pose: &Pose, path: &Path) -> Result<()> {
    write(path, &pose_to_json(chain, pose))
}

// ------------------------------------------------------------ anchors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorsDoc {
    pub anchors: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl AnchorsDoc {
    pub fn from_anchors(anchors: &AnchorSet) -> Self {
        AnchorsDoc {
            anchors: anchors.positions().iter().map(arr).collect(),
            temperature: Some(anchors.temperature()),
        }
    }

    pub fn to_anchors(&self, default_temperature: f64) -> Result<AnchorSet> {
        if self.anchors.is_empty() {
            return Err(Error::invalid("anchors file lists no anchors"));
        }
        let temperature = match self.temperature {
            Some(t) => t,
            None => {
                log::info!("anchors: no temperature given, using default {default_temperature}");
                default_temperature
            }
        };
        AnchorSet::new(self.anchors.iter().copied().map(v3).collect(), temperature)
    }
}

/// Loads anchors; `default_temperature` applies when the file has none
/// (see [`default_temperature`]).
pub fn load_anchors(path: &Path, default_temperature: f64) -> Result<AnchorSet> {
    read_json::<AnchorsDoc>(path)?.to_anchors(default_temperature)
}

pub fn save_anchors(anchors: &AnchorSet, path: &Path) -> Result<()> {
    write(path, &to_json(&AnchorsDoc::from_anchors(anchors)))
}

// ------------------------------------------------------------- frames

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootPosesDoc {
    pub root_poses: Vec<RootDoc>,
}

pub const ROOT_POSES_FILE: &str = "root_poses.json";

/// One frame per `.obj` file in `dir`, in file-name order. Vertices are the
/// target points. An optional `root_poses.json` supplies one root pose per
/// frame.
pub fn load_frames(dir: &Path) -> Result<Vec<FrameObservation>> {
    let io_err = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()).map_err(io_err))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .obj frames in {}",
            dir.display()
        )));
    }
    let roots_path = dir.join(ROOT_POSES_FILE);
    let roots: Vec<RigidTransform> = if roots_path.exists() {
        let doc: RootPosesDoc = read_json(&roots_path)?;
        if doc.root_poses.len() != files.len() {
            return Err(Error::invalid(format!(
                "{} lists {} root poses for {} frames",
                roots_path.display(),
                doc.root_poses.len(),
                files.len()
            )));
        }
        doc.root_poses
            .iter()
            .map(RootDoc::to_transform)
            .collect::<Result<_>>()?
    } else {
        vec![RigidTransform::identity(); files.len()]
    };
    files
        .iter()
        .zip(roots)
        .enumerate()
        .map(|(i, (f, root))| {
            Ok(FrameObservation {
                time_index: i,
                target_points: load_mesh(f)?.vertices,
                root_pose: root,
            })
        })
        .collect()
}

/// Writes frames as `frame_NNNN.obj` point clouds plus `root_poses.json`.
pub fn save_frames(frames: &[FrameObservation], dir: &Path) -> Result<()> {
    for (i, f) in frames.iter().enumerate() {
        let cloud = Mesh::from_points(f.target_points.clone());
        save_mesh(&cloud, &dir.join(format!("frame_{i:04}.obj")))?;
    }
    let doc = RootPosesDoc {
        root_poses: frames
            .iter()
            .map(|f| RootDoc::from_transform(&f.root_pose))
            .collect(),
    };
    write(&dir.join(ROOT_POSES_FILE), &to_json(&doc))
}

// ------------------------------------------------------------- config

fn default_of<T>(f: impl FnOnce(FitConfig) -> T) -> T {
    f(FitConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default = "d_stage1")]
    pub stage1_iterations: usize,
    #[serde(default = "d_stage2")]
    pub stage2_iterations: usize,
    #[serde(default = "d_step")]
    pub step_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `[recon, cycle, anchors]`.
    #[serde(default = "d_weights")]
    pub loss_weights: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_tol")]
    pub convergence_tol: f64,
    #[serde(default = "d_optimize")]
    pub optimize_link_lengths: bool,
    #[serde(default = "d_samples")]
    pub cycle_samples: usize,
}

fn d_stage1() -> usize {
    default_of(|c| c.stage1_iterations)
}
fn d_stage2() -> usize {
    default_of(|c| c.stage2_iterations)
}
fn d_step() -> f64 {
    default_of(|c| c.step_size)
}
fn d_weights() -> [f64; 3] {
    default_of(|c| {
        [
            c.loss_weights.recon,
            c.loss_weights.cycle,
            c.loss_weights.anchors,
        ]
    })
}
fn d_tol() -> f64 {
    default_of(|c| c.convergence_tol)
}
fn d_optimize() -> bool {
    default_of(|c| c.optimize_link_lengths)
}
fn d_samples() -> usize {
    default_of(|c| c.cycle_samples)
}

impl ConfigDoc {
    pub fn from_config(c: &FitConfig) -> Self {
        let w = c.loss_weights;
        ConfigDoc {
            stage1_iterations: c.stage1_iterations,
            stage2_iterations: c.stage2_iterations,
            step_size: c.step_size,
            tau: c.tau,
            gamma: c.gamma,
            loss_weights: [w.recon, w.cycle, w.anchors],
            seed: c.seed,
            convergence_tol: c.convergence_tol,
            optimize_link_lengths: c.optimize_link_lengths,
            cycle_samples: c.cycle_samples,
        }
    }

    pub fn to_config(&self) -> Result<FitConfig> {
        let [recon, cycle, anchors] = self.loss_weights;
        let config = FitConfig {
            stage1_iterations: self.stage1_iterations,
            stage2_iterations: self.stage2_iterations,
            step_size: self.step_size,
            tau: self.tau,
            gamma: self.gamma,
            loss_weights: LossWeights {
                recon,
                cycle,
                anchors,
            },
            seed: self.seed,
            convergence_tol: self.convergence_tol,
            optimize_link_lengths: self.optimize_link_lengths,
            cycle_samples: self.cycle_samples,
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn parse_config(path: &Path, text: &str) -> Result<FitConfig> {
    parse_json::<ConfigDoc>(path, text)?.to_config()
}

pub fn load_config(path: &Path) -> Result<FitConfig> {
    parse_config(path, &read(path)?)
}

pub fn save_config(config: &FitConfig, path: &Path) -> Result<()> {
    write(path, &to_json(&ConfigDoc::from_config(config)))
}

// -------------------------------------------------------- fit results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameTransformsDoc {
    pub time_index: usize,
    pub anchors: Vec<RootDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformsDoc {
    pub frames: Vec<FrameTransformsDoc>,
    /// Raw per-link residuals, in chain link order.
    pub link_residuals: Vec<f64>,
    pub gamma: f64,
}

impl TransformsDoc {
    pub fn new(
        frames: &[UnconstrainedFrameTransforms],
        link_residuals: &[f64],
        gamma: f64,
    ) -> Self {
        TransformsDoc {
            frames: frames
                .iter()
                .map(|f| FrameTransformsDoc {
                    time_index: f.time_index,
                    anchors: f.per_anchor.iter().map(RootDoc::from_transform).collect(),
                })
                .collect(),
            link_residuals: link_residuals.to_vec(),
            gamma,
        }
    }

    pub fn to_frames(&self) -> Result<Vec<UnconstrainedFrameTransforms>> {
        self.frames
            .iter()
            .map(|f| {
                Ok(UnconstrainedFrameTransforms {
                    time_index: f.time_index,
                    per_anchor: f
                        .anchors
                        .iter()
                        .map(RootDoc::to_transform)
                        .collect::<Result<_>>()?,
                })
            })
            .collect()
    }
}

pub fn save_transforms(doc: &TransformsDoc, path: &Path) -> Result<()> {
    write(path, &to_json(doc))
}

pub fn load_transforms(path: &Path) -> Result<TransformsDoc> {
    read_json(path)
}

// ------------------------------------------------- unconstrained joints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPositionDoc {
    pub id: usize,
    pub position: [f64; 3],
}

/// `{"joints":[{"id":..,"position":[x,y,z]}]}`, one entry per chain joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPositionsDoc {
    pub joints: Vec<JointPositionDoc>,
}

impl JointPositionsDoc {
    /// Positions by slot.
    pub fn from_positions(chain: &KinematicChain, positions: &[Vec3]) -> Self {
        JointPositionsDoc {
            joints: positions
                .iter()
                .enumerate()
                .map(|(s, p)| JointPositionDoc {
                    id: chain.id_of(s),
                    position: arr(p),
                })
                .collect(),
        }
    }

    /// Positions by slot; every chain joint must appear exactly once.
    pub fn to_positions(&self, chain: &KinematicChain) -> Result<Vec<Vec3>> {
        let mut out: Vec<Option<Vec3>> = vec![None; chain.len()];
        for j in &self.joints {
            let slot = chain
                .slot_of(j.id)
                .ok_or_else(|| Error::invalid(format!("unknown joint id {}", j.id)))?;
            if out[slot].replace(v3(j.position)).is_some() {
                return Err(Error::invalid(format!("joint id {} listed twice", j.id)));
            }
        }
        out.iter()
            .enumerate()
            .map(|(s, p)| {
                p.ok_or_else(|| Error::invalid(format!("joint id {} missing", chain.id_of(s))))
            })
            .collect()
    }
}

pub fn load_joint_positions(path: &Path, chain: &KinematicChain) -> Result<Vec<Vec3>> {
    read_json::<JointPositionsDoc>(path)?.to_positions(chain)
}

pub fn save_joint_positions(chain: &KinematicChain, positions: &[Vec3], path: &Path) -> Result<()> {
    write(
        path,
        &to_json(&JointPositionsDoc::from_positions(chain, positions)),
    )
}

// -------------------------------------------------------- model bundle

pub const MESH_FILE: &str = "mesh.obj";
pub const CHAIN_FILE: &str = "chain.json";
pub const ANCHORS_FILE: &str = "anchors.json";

/// Loads `mesh.obj`, `chain.json` and `anchors.json` from a model directory.
pub fn load_model(dir: &Path) -> Result<ModelBundle> {
    let mesh = load_mesh(&dir.join(MESH_FILE))?;
    let chain = load_chain(&dir.join(CHAIN_FILE))?;
    let anchors = load_anchors(&dir.join(ANCHORS_FILE), default_temperature(&mesh.vertices))?;
    ModelBundle::new(mesh, chain, anchors)
}

pub fn save_model(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    save_mesh(&bundle.mesh, &dir.join(MESH_FILE))?;
    save_chain(&bundle.chain, &dir.join(CHAIN_FILE))?;
    save_anchors(&bundle.anchors, &dir.join(ANCHORS_FILE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationDoc {
    pub anchor: usize,
    pub parent: usize,
    pub child: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Row-major 3×3 rotation.
    pub g: [[f64; 3]; 3],
}

impl AssociationDoc {
    pub fn from_association(a: &Association) -> Self {
        let m = a.g.matrix();
        AssociationDoc {
            anchor: a.anchor,
            parent: a.parent_id,
            child: a.child_id,
            alpha: a.alpha,
            beta: a.beta,
            g: [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDoc {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

/// Everything the pose editor needs to draw a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub chain: ChainDoc,
    pub anchors: AnchorsDoc,
    pub associations: Vec<AssociationDoc>,
    pub mesh: MeshDoc,
}

impl ModelDoc {
    pub fn from_bundle(b: &ModelBundle) -> Self {
        ModelDoc {
            chain: ChainDoc::from_chain(&b.chain),
            anchors: AnchorsDoc::from_anchors(&b.anchors),
            associations: b
                .associations
                .iter()
                .map(AssociationDoc::from_association)
                .collect(),
            mesh: MeshDoc {
                vertices: b.mesh.vertices.iter().map(arr).collect(),
                faces: b.mesh.faces.clone(),
            },
        }
    }
}

pub fn model_to_json(b: &ModelBundle) -> String {
    serde_json::to_string(&ModelDoc::from_bundle(b)).expect("documents serialize")
}

/// Re-posing result: vertices, joints (by slot, i.e. id order) and anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReposeDoc {
    pub vertices: Vec<[f64; 3]>,
    pub joints: Vec<[f64; 3]>,
    pub anchors: Vec<[f64; 3]>,
}

impl ReposeDoc {
    pub fn from_reposed(r: &Reposed) -> Self {
        ReposeDoc {
            vertices: r.mesh.vertices.iter().map(arr).collect(),
            joints: r.joints.iter().map(arr).collect(),
            anchors: r.anchors.iter().map(arr).collect(),
        }
    }
}

pub fn repose_to_json(r: &Reposed) -> String {
    serde_json::to_string(&ReposeDoc::from_reposed(r)).expect("documents serialize")
}

/// Joint ids mapped to slots, for callers that address joints by id.
pub fn slot_map(chain: &KinematicChain) -> HashMap<usize, usize> {
    (0..chain.len()).map(|s| (chain.id_of(s), s)).collect()
}
