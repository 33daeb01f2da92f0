use kinechain_core::anchors::AnchorSet;
use kinechain_core::chain::Pose;
use kinechain_core::fitting::{
    fit_stage1, fit_stage2, reconstruction_loss, write_loss_trace, FitConfig, FrameObservation,
    LossRecord, Stage, Stage1Result, UnconstrainedFrameTransforms,
};
use kinechain_core::fixtures::{elbow_fixture, elbow_frames, elbow_pose};
use kinechain_core::mesh::Mesh;
use kinechain_core::metrics::{bbox_diagonal, chamfer_distance};
use kinechain_core::model::ModelBundle;
use kinechain_core::se3::{RigidTransform, Rotation, Vec3};
use kinechain_core::skinning::deform_mesh;
use kinechain_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blob(seed: u64, n: usize) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mesh::from_points(
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.25..0.25),
                )
            })
            .collect(),
    )
}

fn blob_anchors() -> AnchorSet {
    AnchorSet::new(
        vec![
            Vec3::new(-0.6, 0.0, 0.0),
            Vec3::new(0.0, 0.2, 0.0),
            Vec3::new(0.6, 0.0, 0.1),
        ],
        0.2,
    )
    .unwrap()
}

fn assert_non_increasing(records: &[&LossRecord]) {
    for w in records.windows(2) {
        assert!(
            w[1].terms.total <= w[0].terms.total,
            "loss rose from {} to {} at iteration {}",
            w[0].terms.total,
            w[1].terms.total,
            w[1].iteration
        );
    }
}

#[test]
fn identity_frames_are_already_fitted() {
    let mesh = blob(1, 120);
    let anchors = blob_anchors();
    let frame = FrameObservation::new(0, mesh.vertices.clone());
    let result = fit_stage1(&mesh, &anchors, &[frame], &FitConfig::default()).unwrap();
    assert!(result.trace[0].terms.total < 1e-20, "{:?}", result.trace[0]);
    for t in &result.frames[0].per_anchor {
        assert!((t.rotation.matrix() - Rotation::identity().matrix()).norm() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }
}

#[test]
fn global_rigid_motion_is_reproduced() {
    let mesh = blob(2, 200);
    let anchors = blob_anchors();
    let motion = RigidTransform::new(
        Rotation::from_rotation_vector(&Vec3::new(0.1, -0.2, 0.25)),
        Vec3::new(0.15, -0.1, 0.05),
    );
    let targets: Vec<Vec3> = mesh.vertices.iter().map(|v| motion.apply_point(v)).collect();
    let frame = FrameObservation::new(0, targets);
    let config = FitConfig {
        stage1_iterations: 1500,
        ..FitConfig::default()
    };
    let result = fit_stage1(&mesh, &anchors, std::slice::from_ref(&frame), &config).unwrap();
    let fitted = deform_mesh(
        &mesh,
        &anchors,
        &result.frames[0].per_anchor,
        &RigidTransform::identity(),
    )
    .unwrap();
    let cd = chamfer_distance(&fitted.vertices, &frame.target_points).unwrap();
    assert!(
        cd < 1e-3 * bbox_diagonal(&frame.target_points),
        "chamfer {cd}"
    );
    let frame_rows: Vec<&LossRecord> = result.trace.iter().collect();
    assert_non_increasing(&frame_rows);
}

#[test]
fn reconstruction_loss_is_the_chamfer_distance() {
    let mesh = blob(3, 80);
    let anchors = blob_anchors();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let transforms: Vec<RigidTransform> = (0..anchors.len())
        .map(|_| {
            RigidTransform::new(
                Rotation::from_rotation_vector(&Vec3::new(0.0, 0.0, rng.random_range(-0.3..0.3))),
                Vec3::new(rng.random_range(-0.2..0.2), 0.0, 0.0),
            )
        })
        .collect();
    let frame = FrameObservation::new(0, blob(4, 60).vertices);
    let deformed = deform_mesh(&mesh, &anchors, &transforms, &RigidTransform::identity()).unwrap();
    assert_eq!(
        reconstruction_loss(&mesh, &anchors, &transforms, &frame).unwrap(),
        chamfer_distance(&deformed.vertices, &frame.target_points).unwrap()
    );

    let shift = Vec3::new(0.01, 0.0, 0.0);
    let dense = FrameObservation::new(
        0,
        deformed.vertices.iter().map(|v| v + shift).collect(),
    );
    let d = reconstruction_loss(&mesh, &anchors, &transforms, &dense).unwrap();
    assert!((d - shift.norm()).abs() < 1e-12, "{d}");
}

#[test]
fn stage1_traces_decrease_per_frame() {
    let fx = elbow_fixture();
    let bundle = ModelBundle::new(fx.mesh.clone(), fx.chain.clone(), fx.anchors.clone()).unwrap();
    let frames = elbow_frames(&bundle, &[20.0, 40.0]);
    let config = FitConfig {
        stage1_iterations: 60,
        ..FitConfig::default()
    };
    let result = fit_stage1(&fx.mesh, &fx.anchors, &frames, &config).unwrap();
    for f in &frames {
        let rows: Vec<&LossRecord> = result
            .trace
            .iter()
            .filter(|r| r.frame == Some(f.time_index))
            .collect();
        assert!(rows.iter().all(|r| r.stage == Stage::One));
        assert_eq!(rows[0].iteration, 0);
        assert_non_increasing(&rows);
    }
}

fn consistent_stage1(bundle: &ModelBundle, poses: &[Pose]) -> (Vec<FrameObservation>, Stage1Result) {
    let mut frames = Vec::new();
    let mut fitted = Vec::new();
    for (t, pose) in poses.iter().enumerate() {
        let r = bundle.repose(pose).unwrap();
        frames.push(FrameObservation {
            time_index: t,
            target_points: r.mesh.vertices,
            root_pose: pose.root,
        });
        fitted.push(UnconstrainedFrameTransforms {
            time_index: t,
            per_anchor: r.transforms,
        });
    }
    (
        frames,
        Stage1Result {
            frames: fitted,
            trace: Vec::new(),
        },
    )
}

#[test]
fn chain_consistent_start_has_no_anchor_loss() {
    let fx = elbow_fixture();
    // Sharp enough that each joint moves with the anchor sitting on it.
    let anchors = fx.anchors.with_temperature(0.002).unwrap();
    let bundle = ModelBundle::new(fx.mesh.clone(), fx.chain.clone(), anchors.clone()).unwrap();
    let mut turned = elbow_pose(&fx.chain, 35.0);
    turned.root = RigidTransform::new(
        Rotation::from_rotation_vector(&Vec3::new(0.3, 0.2, -0.4)),
        Vec3::new(0.5, -1.0, 2.0),
    );
    let poses = [
        elbow_pose(&fx.chain, 0.0),
        elbow_pose(&fx.chain, 25.0),
        turned,
    ];
    let (frames, stage1) = consistent_stage1(&bundle, &poses);
    let config = FitConfig {
        stage2_iterations: 5,
        ..FitConfig::default()
    };
    let result = fit_stage2(&fx.mesh, &fx.chain, &anchors, &stage1, &frames, &config).unwrap();
    assert!(result.trace[0].terms.anchors < 1e-9, "{:?}", result.trace[0].terms);
    assert!(result.residuals.clipped().iter().all(|r| r.abs() < 1e-6));
    assert_non_increasing(&result.trace.iter().collect::<Vec<_>>());
}

#[test]
fn link_lengths_stay_fixed_when_disabled() {
    let fx = elbow_fixture();
    let bundle = ModelBundle::new(fx.mesh.clone(), fx.chain.clone(), fx.anchors.clone()).unwrap();
    let frames = elbow_frames(&bundle, &[30.0]);
    let config = FitConfig {
        stage1_iterations: 40,
        stage2_iterations: 10,
        optimize_link_lengths: false,
        ..FitConfig::default()
    };
    let s1 = fit_stage1(&fx.mesh, &fx.anchors, &frames, &config).unwrap();
    let short = kinechain_core::fixtures::scale_link(&fx.chain, 0, 0.9);
    let s2 = fit_stage2(&fx.mesh, &short, &fx.anchors, &s1, &frames, &config).unwrap();
    assert_eq!(s2.chain, short);
    assert!(s2.residuals.raw.iter().all(|r| *r == 0.0));
}

#[test]
fn gamma_must_stay_below_shortest_link() {
    let fx = elbow_fixture();
    let bundle = ModelBundle::new(fx.mesh.clone(), fx.chain.clone(), fx.anchors.clone()).unwrap();
    let poses = [elbow_pose(&fx.chain, 10.0)];
    let (frames, stage1) = consistent_stage1(&bundle, &poses);
    let config = FitConfig {
        gamma: Some(1.0),
        ..FitConfig::default()
    };
    let err = fit_stage2(&fx.mesh, &fx.chain, &fx.anchors, &stage1, &frames, &config).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
}

#[test]
fn fits_are_deterministic_and_schedule_independent() {
    let fx = elbow_fixture();
    let bundle = ModelBundle::new(fx.mesh.clone(), fx.chain.clone(), fx.anchors.clone()).unwrap();
    let frames = elbow_frames(&bundle, &[15.0, 45.0]);
    let config = FitConfig {
        stage1_iterations: 30,
        stage2_iterations: 10,
        seed: 7,
        ..FitConfig::default()
    };
    let run = || {
        let s1 = fit_stage1(&fx.mesh, &fx.anchors, &frames, &config).unwrap();
        let s2 = fit_stage2(&fx.mesh, &fx.chain, &fx.anchors, &s1, &frames, &config).unwrap();
        let mut trace = Vec::new();
        write_loss_trace(&s1.trace, &mut trace).unwrap();
        write_loss_trace(&s2.trace, &mut trace).unwrap();
        (s2.frames, s2.chain, trace)
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let a = single.install(run);
    let b = single.install(run);
    let c = run();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn loss_trace_is_a_tab_separated_table() {
    let mesh = blob(5, 40);
    let anchors = blob_anchors();
    let frame = FrameObservation::new(3, blob(6, 40).vertices);
    let config = FitConfig {
        stage1_iterations: 3,
        ..FitConfig::default()
    };
    let result = fit_stage1(&mesh, &anchors, &[frame], &config).unwrap();
    let mut out = Vec::new();
    write_loss_trace(&result.trace, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "stage\tframe\titeration\trecon\tcycle\tanchors\ttotal"
    );
    let first: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(&first[..3], ["1", "3", "0"]);
    assert_eq!(text.lines().count(), 1 + result.trace.len());
}

#[test]
fn empty_targets_are_rejected() {
    let mesh = blob(7, 10);
    let frame = FrameObservation::new(0, Vec::new());
    let err = fit_stage1(&mesh, &blob_anchors(), &[frame], &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}
