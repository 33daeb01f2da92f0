use std::fs;
use std::path::Path;

use kinechain_core::chain::Pose;
use kinechain_core::fitting::{FitConfig, FrameObservation, LossWeights, UnconstrainedFrameTransforms};
use kinechain_core::fixtures::{elbow_fixture, random_anchors, random_chain};
use kinechain_core::io::*;
use kinechain_core::mesh::Mesh;
use kinechain_core::model::ModelBundle;
use kinechain_core::se3::{RigidTransform, Rotation, Vec3};
use kinechain_core::{Diagnostic, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn rand_vec(rng: &mut impl Rng, s: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-s..s))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn obj_single_triangle() {
    let mesh = parse_obj(
        Path::new("tri.obj"),
        "# a triangle\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n",
    )
    .unwrap();
    assert_eq!(mesh.vertices.len(), 3);
    assert_eq!(mesh.faces, vec![[0, 1, 2]]);
}

#[test]
fn obj_quads_are_fanned() {
    let mesh = parse_obj(
        Path::new("quad.obj"),
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
    )
    .unwrap();
    assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
}

#[test]
fn obj_errors_name_the_line() {
    for (text, line) in [
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 2 3\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", 4),
        ("v 0 0\n", 1),
        ("v 0 0 0\nv 0 x 0\n", 2),
        ("v 0 0 0\nv 1 0 0\nf 1 2\n", 3),
    ] {
        match parse_obj(Path::new("bad.obj"), text) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn mesh_round_trip_is_exact() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vertices: Vec<Vec3> = (0..50).map(|_| rand_vec(&mut rng, 10.0)).collect();
    let faces = (0..40)
        .map(|_| {
            let a = rng.random_range(0..50);
            [a, (a + 1) % 50, (a + 7) % 50]
        })
        .collect();
    let mesh = Mesh::new(vertices, faces).unwrap();
    let path = dir.path().join("m.obj");
    save_mesh(&mesh, &path).unwrap();
    assert_eq!(load_mesh(&path).unwrap(), mesh);
}

#[test]
fn chain_round_trip_preserves_the_document() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let chain = random_chain(&mut rng, 9);
    let path = dir.path().join("chain.json");
    save_chain(&chain, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let back = load_chain(&path).unwrap();
    assert_eq!(back, chain);
    assert_eq!(chain_to_json(&back), text);
}

#[test]
fn serial_chain_from_file() {
    let chain = parse_chain(
        Path::new("c.json"),
        r#"{"joints":[{"id":0,"parent":null,"position":[0,0,0]},{"id":1,"parent":0,"position":[0,0,1]}]}"#,
    )
    .unwrap();
    assert_eq!(chain.len(), 2);
    assert_eq!(chain.links().len(), 1);
}

#[test]
fn invalid_chains_are_diagnosed() {
    let two_roots = r#"{"joints":[{"id":0,"parent":null,"position":[0,0,0]},{"id":1,"parent":null,"position":[1,0,0]}]}"#;
    match parse_chain(Path::new("c.json"), two_roots) {
        Err(Error::InvalidChain(d)) => assert_eq!(d, vec![Diagnostic::MultipleRoots(vec![0, 1])]),
        other => panic!("{other:?}"),
    }
    let cycle = r#"{"joints":[{"id":0,"parent":null,"position":[0,0,0]},{"id":1,"parent":2,"position":[1,0,0]},{"id":2,"parent":1,"position":[2,0,0]}]}"#;
    match parse_chain(Path::new("c.json"), cycle) {
        Err(Error::InvalidChain(d)) => assert!(d.contains(&Diagnostic::Cycle(1)), "{d:?}"),
        other => panic!("{other:?}"),
    }
    let duplicate = r#"{"joints":[{"id":0,"parent":null,"position":[0,0,0]},{"id":0,"parent":0,"position":[1,0,0]}]}"#;
    let err = parse_chain(Path::new("c.json"), duplicate).unwrap_err();
    assert!(err.to_string().contains("duplicate joint id 0"), "{err}");
}

#[test]
fn pose_round_trip_is_bitwise() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let chain = random_chain(&mut rng, 6);
    let mut pose = Pose::identity(&chain);
    pose.root = RigidTransform::from_translation(rand_vec(&mut rng, 2.0));
    for s in 0..chain.len() {
        pose.joint_rotations[s] = rand_vec(&mut rng, 1.0) / 3.0;
        if s != chain.root() {
            pose.twists[s] = rng.random_range(-3.0..3.0);
        }
    }
    let path = dir.path().join("pose.json");
    save_pose(&chain, &pose, &path).unwrap();
    assert_eq!(load_pose(&path, &chain).unwrap(), pose);
}

#[test]
fn pose_defaults_and_unknown_ids() {
    let chain = elbow_fixture().chain;
    let empty = parse_pose(
        Path::new("p.json"),
        r#"{"root":{"rotation_axis_angle":[0,0,0],"translation":[0,0,0]},"joints":[]}"#,
        &chain,
    )
    .unwrap();
    assert_eq!(empty, Pose::identity(&chain));
    let unknown = parse_pose(
        Path::new("p.json"),
        r#"{"root":{"rotation_axis_angle":[0,0,0],"translation":[0,0,0]},"joints":[{"id":99,"rotation_axis_angle":[0,0,1],"twist":0}]}"#,
        &chain,
    )
    .unwrap_err();
    assert!(unknown.to_string().contains("99"), "{unknown}");
}

#[test]
fn anchors_round_trip_and_default_temperature() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let chain = random_chain(&mut rng, 4);
    let anchors = random_anchors(&mut rng, &chain, 10);
    let path = dir.path().join("anchors.json");
    save_anchors(&anchors, &path).unwrap();
    let back = load_anchors(&path, 1.0).unwrap();
    assert_eq!(back, anchors);
    assert_eq!(back.len(), 10);

    write(&path, r#"{"anchors":[[0,0,0],[1,0,0]]}"#);
    assert_eq!(load_anchors(&path, 0.25).unwrap().temperature(), 0.25);
    write(&path, r#"{"anchors":[]}"#);
    assert!(load_anchors(&path, 0.25).is_err());
    write(&path, r#"{"anchors":[[0,0,0]],"temperature":0}"#);
    assert!(load_anchors(&path, 0.25).is_err());
}

#[test]
fn frames_load_in_file_name_order() {
    let dir = tempdir().unwrap();
    let frames: Vec<FrameObservation> = (0..3)
        .map(|i| FrameObservation {
            time_index: i,
            target_points: vec![Vec3::new(i as f64, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.5)],
            root_pose: RigidTransform::new(
                Rotation::from_rotation_vector(&Vec3::new(0.0, 0.1 * i as f64, 0.0)),
                Vec3::new(0.0, 0.0, i as f64),
            ),
        })
        .collect();
    save_frames(&frames, dir.path()).unwrap();
    let back = load_frames(dir.path()).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in back.iter().zip(&frames) {
        assert_eq!(a.time_index, b.time_index);
        assert_eq!(a.target_points, b.target_points);
        assert!((a.root_pose.translation - b.root_pose.translation).norm() < 1e-15);
        assert!((a.root_pose.rotation.matrix() - b.root_pose.rotation.matrix()).norm() < 1e-15);
    }

    fs::remove_file(dir.path().join(ROOT_POSES_FILE)).unwrap();
    let plain = load_frames(dir.path()).unwrap();
    assert!(plain.iter().all(|f| f.root_pose == RigidTransform::identity()));
}

#[test]
fn config_defaults_and_round_trip() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("config.json");
    write(&path, "{}");
    assert_eq!(load_config(&path).unwrap(), FitConfig::default());

    let config = FitConfig {
        stage1_iterations: 12,
        tau: Some(0.3),
        gamma: Some(0.05),
        loss_weights: LossWeights {
            recon: 2.0,
            cycle: 0.0,
            anchors: 0.5,
        },
        seed: 99,
        optimize_link_lengths: false,
        ..FitConfig::default()
    };
    save_config(&config, &path).unwrap();
    assert_eq!(load_config(&path).unwrap(), config);

    for bad in [
        r#"{"tau": -1}"#,
        r#"{"gamma": 0}"#,
        r#"{"loss_weights": [0, 0, 0]}"#,
        r#"{"step_size": 0}"#,
        r#"{"unknown_field": 1}"#,
    ] {
        write(&path, bad);
        assert!(load_config(&path).is_err(), "{bad}");
    }
}

#[test]
fn transforms_round_trip() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frames: Vec<UnconstrainedFrameTransforms> = (0..2)
        .map(|t| UnconstrainedFrameTransforms {
            time_index: t,
            per_anchor: (0..3)
                .map(|_| {
                    RigidTransform::new(
                        Rotation::from_rotation_vector(&rand_vec(&mut rng, 1.0)),
                        rand_vec(&mut rng, 1.0),
                    )
                })
                .collect(),
        })
        .collect();
    let doc = TransformsDoc::new(&frames, &[0.1, -0.2], 0.05);
    let path = dir.path().join("t.json");
    save_transforms(&doc, &path).unwrap();
    let back = load_transforms(&path).unwrap();
    assert_eq!(back, doc);
    for (a, b) in back.to_frames().unwrap().iter().zip(&frames) {
        for (x, y) in a.per_anchor.iter().zip(&b.per_anchor) {
            assert!((x.rotation.matrix() - y.rotation.matrix()).norm() < 1e-12);
            assert_eq!(x.translation, y.translation);
        }
    }
}

#[test]
fn joint_positions_round_trip() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let chain = random_chain(&mut rng, 7);
    let positions: Vec<Vec3> = (0..7).map(|_| rand_vec(&mut rng, 3.0)).collect();
    let path = dir.path().join("j.json");
    save_joint_positions(&chain, &positions, &path).unwrap();
    assert_eq!(load_joint_positions(&path, &chain).unwrap(), positions);
}

#[test]
fn model_directory_round_trip() {
    let dir = tempdir().unwrap();
    let fx = elbow_fixture();
    let bundle = ModelBundle::new(fx.mesh, fx.chain, fx.anchors).unwrap();
    save_model(&bundle, dir.path()).unwrap();
    for f in [MESH_FILE, CHAIN_FILE, ANCHORS_FILE] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let back = load_model(dir.path()).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(model_to_json(&back), model_to_json(&bundle));
}
