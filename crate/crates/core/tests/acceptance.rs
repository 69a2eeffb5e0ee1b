//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2x6, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bitvo::descriptor::{compute_orientation, describe_patch, hamming, BinaryPatch7, Descriptor44};
use bitvo::eval::{align_umeyama_sim3, associate, compute_ate, orientation_rmse_deg, Trajectory, DEFAULT_MAX_DT};
use bitvo::geometry::{CameraIntrinsics, PixelPoint, Point3, RigidTransform};
use bitvo::io::read_tum;
use bitvo::sim::{default_scene, NoiseModel, SequenceGenerator, TrajectoryKind, TrajectoryModel};
use bitvo::vo::essential::{estimate_essential_ransac, recover_pose, RansacParams};
use bitvo::vo::pose::{estimate_pose, pose_jacobian, reprojection_residual, PoseConfig};
use bitvo::vo::{
    should_insert_keyframe, structure_only_ba, BaConfig, Keyframe, KeyframeCheck, Map, Observation, TrackingState,
    VisualOdometry, VoConfig,
};

type Verdict = (bool, String);

/// Rotates patch content a quarter turn clockwise, written out per pixel.
fn quarter_turn(p: BinaryPatch7) -> BinaryPatch7 {
    let mut out = BinaryPatch7::new(0);
    for dy in -3..=3 {
        for dx in -3..=3 {
            if p.get(dx, dy) {
                out.set(dy, -dx, true);
            }
        }
    }
    out
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut tested, mut identical) = (0u32, 0u32);
    while tested < 100_000 {
        let patch = BinaryPatch7::new(rng.random());
        if compute_orientation(patch).is_err() {
            continue;
        }
        tested += 1;
        let d = describe_patch(patch);
        let r90 = quarter_turn(patch);
        let r180 = quarter_turn(r90);
        let r270 = quarter_turn(r180);
        if [r90, r180, r270].iter().all(|r| describe_patch(*r) == d) {
            identical += 1;
        }
    }
    let elapsed = start.elapsed();
    (
        identical == tested && elapsed < Duration::from_secs(5),
        format!("{identical}/{tested} identical in {:.2} s (limit 5 s)", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mask = (1u64 << 44) - 1;
    let mut mismatches = 0;
    for _ in 0..100_000 {
        let (a, b) = (rng.random::<u64>() & mask, rng.random::<u64>() & mask);
        let naive = (0..44).filter(|i| (a >> i) & 1 != (b >> i) & 1).count() as u32;
        if hamming(Descriptor44(a), Descriptor44(b)) != naive {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{mismatches} mismatches over 100000 pairs"))
}

fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
    RigidTransform::new(
        UnitQuaternion::from_euler_angles(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-3.0..3.0)),
        Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)),
    )
}

/// World point seen by `pose` at a random pixel and depth.
fn point_in_view(rng: &mut ChaCha8Rng, pose: &RigidTransform, k: &CameraIntrinsics) -> (Point3, PixelPoint) {
    let px = PixelPoint::new(rng.random_range(5.0..250.0), rng.random_range(5.0..250.0));
    let depth = rng.random_range(1.5..5.0);
    let p_c = Point3::new((px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy, 1.0) * depth;
    (pose.inverse().transform_point(&p_c), px)
}

fn criterion_3() -> Verdict {
    let k = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pose = random_pose(&mut rng);
        let (p, u) = point_in_view(&mut rng, &pose, &k);
        let u = PixelPoint::new(u.u + rng.random_range(-5.0..5.0), u.v + rng.random_range(-5.0..5.0));
        let analytic = pose_jacobian(&pose, &k, &p);
        let mut numeric = Matrix2x6::zeros();
        for c in 0..6 {
            let mut d = Vector6::zeros();
            d[c] = h;
            let plus = reprojection_residual(&pose.retract(&d), &k, &p, &u);
            d[c] = -h;
            let minus = reprojection_residual(&pose.retract(&d), &k, &p, &u);
            numeric.set_column(c, &((plus - minus) / (2.0 * h)));
        }
        worst = worst.max((analytic - numeric).norm() / numeric.norm());
    }
    (worst < 1e-4, format!("max relative error {worst:.2e} over 1000 samples (limit 1e-4)"))
}

fn criterion_4() -> Verdict {
    let k = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pose_a = RigidTransform::identity();
    let dir = Vector3::new(1.0, 0.2, 0.1).normalize();
    let pose_b = RigidTransform::new(UnitQuaternion::from_euler_angles(0.02, -0.05, 0.03), dir * 0.3);
    let mut corr = Vec::new();
    while corr.len() < 100 {
        let (p, ua) = point_in_view(&mut rng, &pose_a, &k);
        if let Ok(ub) = k.project(&pose_b.transform_point(&p)) {
            if k.contains(&ub) {
                corr.push((ua, ub));
            }
        }
    }
    let est = estimate_essential_ransac(&corr, &k, &RansacParams::default()).expect("essential");
    let inliers: Vec<_> = corr.iter().zip(&est.inliers).filter(|(_, &b)| b).map(|(c, _)| *c).collect();
    let rel = recover_pose(&est.essential, &inliers, &k).expect("pose");
    // pose_a is the identity, so the truth is pose_b itself.
    let rot_err = rel.rotation_distance(&pose_b).to_degrees();
    let t_err = rel.translation.normalize().dot(&pose_b.translation.normalize()).clamp(-1.0, 1.0).acos().to_degrees();
    (
        rot_err < 0.1 && t_err < 0.1,
        format!("rotation error {rot_err:.2e} deg, translation direction error {t_err:.2e} deg (limit 0.1)"),
    )
}

fn criterion_5() -> Verdict {
    let k = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = random_pose(&mut rng);
    let matches: Vec<_> = (0..150).map(|_| point_in_view(&mut rng, &truth, &k)).collect();
    let axis = Vector3::new(0.6, -0.3, 0.74).normalize();
    let offset = Vector3::new(-0.2, 0.9, 0.4).normalize() * 0.02;
    let init = RigidTransform::new(
        UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 2f64.to_radians()) * truth.rotation,
        truth.translation + offset,
    );
    let est = estimate_pose(&matches, &init, &k, &PoseConfig::default()).expect("pose");
    let q_err = {
        let (a, b) = (est.pose.rotation.quaternion().coords, truth.rotation.quaternion().coords);
        2.0 * (a - b).norm().min((a + b).norm())
    };
    let t_err = (est.pose.translation - truth.translation).norm();
    (
        q_err < 1e-5 && t_err < 1e-5 && est.iterations <= 10,
        format!("rotation error {q_err:.1e} rad, translation error {t_err:.1e} m, {} LM iterations", est.iterations),
    )
}

struct SequenceRun {
    initialized_at: Option<u64>,
    lost_after_init: u64,
    estimate: Trajectory,
    ground_truth: Trajectory,
}

fn run_sequence(kind: TrajectoryKind, duration: f64, seed: u64) -> SequenceRun {
    let scene = default_scene(seed);
    let k = CameraIntrinsics::default();
    let generator = SequenceGenerator::new(
        &scene,
        TrajectoryModel::default_for(kind),
        k,
        NoiseModel::default(),
        300,
        duration,
        seed,
    )
    .expect("sequence");
    let ground_truth = generator.ground_truth_trajectory();
    let mut vo = VisualOdometry::new(k, VoConfig::default());
    let mut estimate = Trajectory::new();
    let mut lost_after_init = 0;
    for frame in generator {
        let r = vo.process(&frame);
        if r.state == TrackingState::Lost {
            lost_after_init += 1;
        }
        if let Some(pose) = r.pose {
            estimate.push(frame.timestamp_secs(), pose.inverse()).expect("increasing time");
        }
    }
    SequenceRun {
        initialized_at: vo.stats().initialized_at,
        lost_after_init,
        estimate,
        ground_truth,
    }
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let run = run_sequence(TrajectoryKind::Circle, 20.0, 1);
    let elapsed = start.elapsed();
    let Some(init) = run.initialized_at else {
        return (false, "never initialized".into());
    };
    let pairs = associate(&run.estimate, &run.ground_truth, DEFAULT_MAX_DT).expect("overlap");
    let alignment = align_umeyama_sim3(&pairs).expect("alignment");
    let ate = compute_ate(&pairs, &alignment);
    let ratio = ate.rmse / ate.length;
    (
        run.lost_after_init == 0 && ratio < 0.01 && elapsed < Duration::from_secs(120),
        format!(
            "initialized at frame {init}, {} lost frames, ATE {:.4} m over {:.2} m = {:.3}% (limit 1%), {:.1} s (limit 120 s)",
            run.lost_after_init,
            ate.rmse,
            ate.length,
            100.0 * ratio,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Verdict {
    let run = run_sequence(TrajectoryKind::Shake, 12.0, 1);
    let Some(init) = run.initialized_at else {
        return (false, "never initialized".into());
    };
    let pairs = associate(&run.estimate, &run.ground_truth, DEFAULT_MAX_DT).expect("overlap");
    // The shake starts after three seconds; the trajectory must cover it.
    let covers_shake = pairs.iter().any(|p| p.timestamp > 4.0);
    let alignment = align_umeyama_sim3(&pairs).expect("alignment");
    let rmse = orientation_rmse_deg(&pairs, &alignment);
    (
        covers_shake && rmse.iter().all(|e| *e < 2.0),
        format!(
            "initialized at frame {init}, per-axis orientation RMSE [{:.3}, {:.3}, {:.3}] deg (limit 2)",
            rmse[0], rmse[1], rmse[2]
        ),
    )
}

fn criterion_8() -> Verdict {
    let cfg = VoConfig::default();
    let depth = 2.0;
    // Level 0 fails, level 1 sits on the boundary, level 2 passes.
    let gaps = [199u64, 200, 201];
    let tracked = [49usize, 50, 51];
    let distances = [0.23, 0.24, 0.25];
    let mut agree = 0;
    for (gi, &gap) in gaps.iter().enumerate() {
        for (ti, &t) in tracked.iter().enumerate() {
            for (di, &d) in distances.iter().enumerate() {
                // Gap and count are inclusive bounds, distance is strict.
                let oracle = gi >= 1 && ti >= 1 && di == 2;
                let check = KeyframeCheck {
                    frames_since_last: gap,
                    tracked: t,
                    min_keyframe_distance: d,
                    median_depth: depth,
                };
                if should_insert_keyframe(&check, &cfg) == oracle {
                    agree += 1;
                }
            }
        }
    }
    (agree == 27, format!("{agree}/27 cases agree with the oracle"))
}

fn ba_fixture() -> (Map, Vec<Point3>, CameraIntrinsics) {
    let k = CameraIntrinsics::default();
    let mut map = Map::new();
    let poses = [
        RigidTransform::identity(),
        RigidTransform::new(UnitQuaternion::from_euler_angles(0.01, 0.04, 0.0), Vector3::new(-0.25, 0.02, 0.0)),
        RigidTransform::new(UnitQuaternion::from_euler_angles(-0.02, -0.03, 0.01), Vector3::new(0.2, -0.15, 0.05)),
    ];
    for pose in poses {
        map.add_keyframe(Keyframe {
            id: 0,
            pose,
            features: Vec::new(),
            track_ids: Vec::new(),
            frame_index: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut truth = Vec::new();
    for _ in 0..12 {
        let p = Point3::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7), rng.random_range(2.0..3.5));
        let obs = poses
            .iter()
            .enumerate()
            .map(|(i, pose)| Observation {
                keyframe_id: i as u64,
                pixel: k.project(&pose.transform_point(&p)).expect("in front"),
                descriptor: Descriptor44(0),
            })
            .collect();
        map.add_point(p, obs);
        truth.push(p);
    }
    (map, truth, k)
}

fn criterion_9() -> Verdict {
    let cfg = BaConfig::default();
    let (mut map, truth, k) = ba_fixture();
    let ids: Vec<u64> = map.points().map(|p| p.id).collect();
    map.point_mut(ids[3]).expect("point").position += Vector3::new(0.08, -0.05, 0.1);
    let pruned = structure_only_ba(&mut map, &k, &cfg);
    let restored = map.point(ids[3]).map(|p| (p.position - truth[3]).norm());
    let displaced_ok = pruned == 0 && restored.is_some_and(|e| e < 1e-6);

    let (mut map, _, k) = ba_fixture();
    let victim = ids[7];
    let point = map.point_mut(victim).expect("point");
    let mut bad = point.observations()[2];
    bad.pixel = PixelPoint::new(bad.pixel.u - 25.0, bad.pixel.v + 10.0);
    point.add_observation(bad);
    let pruned_corrupt = structure_only_ba(&mut map, &k, &cfg);
    let survivors: Vec<u64> = map.points().map(|p| p.id).collect();
    let expected: Vec<u64> = ids.iter().copied().filter(|&id| id != victim).collect();
    let corrupt_ok = pruned_corrupt == 1 && survivors == expected;
    (
        displaced_ok && corrupt_ok,
        format!(
            "displaced point error {:.1e} m (limit 1e-6); corrupted fixture pruned {pruned_corrupt} point(s), victim removed: {}",
            restored.unwrap_or(f64::NAN),
            !survivors.contains(&victim)
        ),
    )
}

fn bitvo(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_bitvo")).args(args).output().expect("spawn bitvo");
    assert!(out.status.success(), "bitvo {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn report_value(stdout: &[u8], key: &str) -> Option<f64> {
    String::from_utf8_lossy(stdout)
        .lines()
        .find_map(|l| l.strip_prefix(key)?.trim_start().strip_prefix('=')?.trim().parse().ok())
}

/// Criteria 10 and 11 share two simulate+run invocations.
fn cli_criteria(dir: &Path) -> (Verdict, Verdict) {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut fps = Vec::new();
    for tag in ["a", "b"] {
        let (data, gt, est) = (p(&format!("{tag}.bin")), p(&format!("{tag}_gt.txt")), p(&format!("{tag}_est.txt")));
        bitvo(&["simulate", "--seed", "1", "--trajectory", "circle", "--duration", "20", "--out", &data, "--gt", &gt]);
        let run = bitvo(&["run", "--dataset", &data, "--out", &est]);
        fps.push(report_value(&run.stdout, "fps").expect("fps in report"));
    }
    let read = |name: &str| std::fs::read(dir.join(name)).expect("output file");
    let same_data = read("a.bin") == read("b.bin");
    let same_traj = read("a_est.txt") == read("b_est.txt");
    let lines = read_tum(&dir.join("a_est.txt")).map(|t| t.len()).unwrap_or(0);
    let throughput = (fps[0] >= 300.0, format!("{:.0} frames/s mean over 6000 frames (limit 300)", fps[0]));
    let determinism = (
        same_data && same_traj && lines > 0,
        format!("datasets identical: {same_data}, trajectories identical: {same_traj} ({lines} poses)"),
    );
    (throughput, determinism)
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cli: Option<(Verdict, Verdict)> = None;
    let mut cli_once = |pick: fn(&(Verdict, Verdict)) -> Verdict| -> Verdict {
        let pair = cli.get_or_insert_with(|| cli_criteria(dir.path()));
        pick(pair)
    };

    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let verdict = catch_unwind(AssertUnwindSafe(|| f())).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        println!("criterion {id:>2} {} {name}: {}", if verdict.0 { "PASS" } else { "FAIL" }, verdict.1);
        results.push((id, name, verdict));
    };

    record(1, "descriptor rotation invariance", &mut criterion_1);
    record(2, "hamming distance oracle", &mut criterion_2);
    record(3, "reprojection jacobian", &mut criterion_3);
    record(4, "essential matrix recovery", &mut criterion_4);
    record(5, "pose estimation", &mut criterion_5);
    record(6, "circle end-to-end", &mut criterion_6);
    record(7, "rapid shake orientation", &mut criterion_7);
    record(8, "keyframe predicate truth table", &mut criterion_8);
    record(9, "structure-only bundle adjustment", &mut criterion_9);
    record(10, "throughput", &mut || cli_once(|p| p.0.clone()));
    record(11, "determinism", &mut || cli_once(|p| p.1.clone()));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
