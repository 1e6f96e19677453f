use std::sync::LazyLock;

use proptest::prelude::*;

use policy_inspect::backend::BackendConfig;
use policy_inspect::campaign::{run_campaign, spawn_for, CampaignConfig, TrialRecord};
use policy_inspect::config::Fixtures;
use policy_inspect::parse::{parse, Approach, ComposerStep, MoveOffset, ParseResult, Program, RotationAxis};
use policy_inspect::sim::{execute, goal_met, GoalSpec, SimConfig, Vec3};
use policy_inspect::stats::aggregate;

const NAMES: [&str; 8] = ["block", "cube", "target", "knob", "wine_bottle", "cap", "tomato1", "light_bulb"];

fn name() -> impl Strategy<Value = String> {
    proptest::sample::select(&NAMES[..]).prop_map(String::from)
}

/// Whole or half units, which print exactly.
fn amount(lo: i32, hi: i32) -> impl Strategy<Value = f64> {
    (lo * 2..hi * 2).prop_map(|h| h as f64 / 2.0)
}

fn step() -> impl Strategy<Value = ComposerStep> {
    let offset = prop_oneof![
        Just(MoveOffset::Center),
        Just(MoveOffset::Top),
        amount(1, 200).prop_map(MoveOffset::Above),
    ];
    let approach = prop_oneof![Just(None), Just(Some(Approach::Above)), Just(Some(Approach::Side)), Just(Some(Approach::Front))];
    let axis = prop_oneof![Just(RotationAxis::X), Just(RotationAxis::Y), Just(RotationAxis::Z)];
    prop_oneof![
        (name(), offset).prop_map(|(target, offset)| ComposerStep::MoveTo { target, offset }),
        (name(), approach).prop_map(|(target, approach)| ComposerStep::Grasp { target, approach }),
        Just(ComposerStep::OpenGripper),
        Just(ComposerStep::CloseGripper),
        (amount(-360, 360), axis).prop_map(|(degrees, axis)| ComposerStep::Rotate { degrees, axis }),
        Just(ComposerStep::ResetPose),
    ]
}

fn program() -> impl Strategy<Value = Program> {
    // Context names are distinct; repeats are rejected as malformed.
    let context = proptest::sample::subsequence(NAMES.to_vec(), 0..4).prop_map(|v| v.into_iter().map(String::from).collect());
    (context, proptest::collection::vec(step(), 1..10)).prop_map(|(context, steps)| Program { context, steps })
}

/// Steps that only touch objects present in the Grasp scene.
fn grasp_scene_step() -> impl Strategy<Value = ComposerStep> {
    let obj = proptest::sample::select(&["block", "cube"][..]).prop_map(String::from);
    let approach = prop_oneof![Just(None), Just(Some(Approach::Side)), Just(Some(Approach::Front))];
    prop_oneof![
        (obj.clone(), amount(0, 40)).prop_map(|(target, d)| ComposerStep::MoveTo { target, offset: MoveOffset::Above(d) }),
        (obj.clone(), approach).prop_map(|(target, approach)| ComposerStep::Grasp { target, approach }),
        Just(ComposerStep::OpenGripper),
        Just(ComposerStep::CloseGripper),
        (amount(-180, 180)).prop_map(|degrees| ComposerStep::Rotate { degrees, axis: RotationAxis::Z }),
        Just(ComposerStep::ResetPose),
    ]
}

static FX: LazyLock<Fixtures> = LazyLock::new(Fixtures::builtin);

static RECORDS: LazyLock<Vec<TrialRecord>> = LazyLock::new(|| {
    let mut cfg = CampaignConfig::new(
        vec!["Grasp".into(), "PutRubbishInBin".into()],
        vec![BackendConfig::mock("m1", "default"), BackendConfig::mock("m2", "weak")],
    );
    cfg.trials_per_cell = 6;
    run_campaign(&cfg, &FX, &mut std::io::sink()).unwrap()
});

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_programs_parse_back(p in program()) {
        let text = p.to_string();
        match parse(&text) {
            ParseResult::Program(q) => prop_assert_eq!(q, p, "{}", text),
            other => prop_assert!(false, "{text} parsed as {other:?}"),
        }
    }

    #[test]
    fn ee_goal_widens_with_tolerance(seed in 0u64..500, d in (-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64), t in 0.1..30.0f64, extra in 0.0..30.0f64) {
        let mut w = spawn_for(&FX, "Movement", seed).unwrap();
        w.ee_pose.translation.vector = w.objects["target"].center() + Vec3::new(d.0, d.1, d.2);
        let narrow = GoalSpec::EeAt { object: "target".into(), tolerance: t };
        let wide = GoalSpec::EeAt { object: "target".into(), tolerance: t + extra };
        prop_assert!(!goal_met(&narrow, &w) || goal_met(&wide, &w));
    }

    #[test]
    fn rotation_goal_widens_with_tolerance(seed in 0u64..500, turn in -200.0..200.0f64, t in 0.0..20.0f64, extra in 0.0..20.0f64) {
        let mut w = spawn_for(&FX, "Rotation", seed).unwrap();
        let knob = w.objects.get_mut("knob").unwrap();
        knob.pose.rotation = nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), turn.to_radians()) * knob.pose.rotation;
        let goal = |tol| GoalSpec::Rotated { object: "knob".into(), axis: [0.0, 0.0, 1.0], degrees: 90.0, tolerance_deg: tol, gripper_open: true };
        prop_assert!(!goal_met(&goal(t), &w) || goal_met(&goal(t + extra), &w));
    }

    #[test]
    fn held_objects_move_rigidly(seed in 0u64..200, steps in proptest::collection::vec(grasp_scene_step(), 1..12)) {
        let cfg = SimConfig::default().with_unreachable_fraction(0.0);
        let world = spawn_for(&FX, "Grasp", seed).unwrap();
        let prog = Program { context: vec![], steps };
        let res = execute(&prog, &world, &cfg).unwrap();
        for pair in res.trace.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if let (Some(ha), Some(hb), Some(pa), Some(pb)) = (&a.held, &b.held, &a.held_pose, &b.held_pose) {
                if ha == hb {
                    let ra = a.ee.inverse() * pa;
                    let rb = b.ee.inverse() * pb;
                    prop_assert!((ra.translation.vector - rb.translation.vector).norm() < 1e-6);
                    prop_assert!(ra.rotation.angle_to(&rb.rotation) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn orientations_stay_unit(seed in 0u64..200, steps in proptest::collection::vec(grasp_scene_step(), 1..24)) {
        let cfg = SimConfig::default().with_unreachable_fraction(0.0);
        let world = spawn_for(&FX, "Grasp", seed).unwrap();
        let res = execute(&Program { context: vec![], steps }, &world, &cfg).unwrap();
        for f in &res.trace {
            prop_assert!((f.ee.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
            if let Some(h) = &f.held_pose {
                prop_assert!((h.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
            }
        }
        for o in res.final_state.objects.values() {
            prop_assert!((o.pose.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn aggregate_ignores_record_order(shuffled in Just(RECORDS.clone()).prop_shuffle()) {
        prop_assert_eq!(aggregate(&shuffled), aggregate(RECORDS.iter()));
    }
}
