//! The eight primary acceptance criteria. Each test prints one
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{Translation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use policy_inspect::backend::BackendConfig;
use policy_inspect::campaign::{evaluate, run_campaign, spawn_for, CampaignConfig, TrialRecord};
use policy_inspect::check::{classify, GroundTruth, OrderVerdict, Violation};
use policy_inspect::config::Fixtures;
use policy_inspect::corpus::{generate, read_corpus, to_jsonl, SHIPPED_CORPUS};
use policy_inspect::model::{
    complexity_of, Evidence, EvidenceKind, GranularityLevel, TrialOutcome, UnreliableBehavior,
};
use policy_inspect::parse::{parse, ParseResult, Program};
use policy_inspect::sim::{goal_met, BadposeKind, GoalSpec, Gripper, SimOutcome, Vec3, WorldState, TOP_CLEARANCE};
use policy_inspect::stats::{aggregate, paired_comparison, reconcile_fixture, CountTable, RateTable};

const RECONCILE_MIN_FRACTION: f64 = 0.95;
const RECONCILE_MAX_SECS: f64 = 1.0;
const CORPUS_MIN_ENTRIES: usize = 200;
const CORPUS_MAX_SECS: f64 = 5.0;
const MONOTONICITY_MAX_SECS: f64 = 60.0;
const FEEDBACK_MIN_TRIALS_PER_ARM: usize = 500;
const FEEDBACK_MIN_GAIN: f64 = 0.30;
const FEEDBACK_ALPHA: f64 = 0.01;
const FUZZ_CASES: usize = 100_000;

fn report(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn within(start: Instant, secs: f64) -> bool {
    start.elapsed() < Duration::from_secs_f64(secs)
}

#[test]
fn criterion_1_fixture_reconciliation() {
    let start = Instant::now();
    let r = reconcile_fixture(&CountTable::builtin(), &RateTable::builtin()).unwrap();
    let hand_checked = [
        ("Grasp", GranularityLevel::A),
        ("Grasp", GranularityLevel::C),
        ("Movement", GranularityLevel::A),
        ("Rotation", GranularityLevel::A),
        ("OpenWineBottle", GranularityLevel::A),
    ];
    let exact = hand_checked.iter().all(|(t, l)| r.get(t, *l, "GPT-3.5-turbo").is_some_and(|d| d.delta == 0.0));
    let fast = within(start, RECONCILE_MAX_SECS);
    let pass = r.fraction_within() >= RECONCILE_MIN_FRACTION && exact && fast;
    report(
        1,
        pass,
        &format!(
            "{}/{} cells within 0.01 ({:.1}%), hand-checked cells exact: {exact}, {:?}",
            r.within_tolerance,
            r.cells.len(),
            100.0 * r.fraction_within(),
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_classifier_exactness() {
    let start = Instant::now();
    let fx = Fixtures::builtin();
    let corpus = read_corpus(SHIPPED_CORPUS).unwrap();
    assert_eq!(to_jsonl(&generate(&fx)), SHIPPED_CORPUS, "shipped corpus is stale; rerun the generate_corpus example");

    let mut covered: BTreeMap<(String, UnreliableBehavior), usize> = BTreeMap::new();
    let mut wrong = Vec::new();
    for e in &corpus {
        *covered.entry((e.task.clone(), e.label)).or_default() += 1;
        let world = spawn_for(&fx, &e.task, e.seed).unwrap();
        let first = evaluate(&fx, &e.task, e.level, &world, &e.text).unwrap().outcome;
        let again = evaluate(&fx, &e.task, e.level, &world, &e.text).unwrap().outcome;
        if first.behavior() != Some(e.label) || first != again {
            wrong.push(format!("{}: got {:?}", e.id, first));
        }
    }
    let full_coverage = covered.len() == fx.tasks.tasks().len() * UnreliableBehavior::ALL.len();
    let pass = corpus.len() >= CORPUS_MIN_ENTRIES && full_coverage && wrong.is_empty() && within(start, CORPUS_MAX_SECS);
    report(
        2,
        pass,
        &format!(
            "{} entries, {}/{} correct, {} task x behavior pairs, {:?}",
            corpus.len(),
            corpus.len() - wrong.len(),
            corpus.len(),
            covered.len(),
            start.elapsed()
        ),
    );
    assert!(wrong.is_empty(), "{wrong:#?}");
    assert!(pass);
}

/// The finite classifier input table, judged by a table written out
/// independently of `classify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Expect {
    Success,
    Special,
    Fail(UnreliableBehavior),
    MissingInput,
}

fn oracle(parse: usize, order: usize, sim: usize, g: u8, out_of_reach: bool) -> Expect {
    use UnreliableBehavior::*;
    match parse {
        1 => return Expect::Fail(Nonsense),
        2 if g == 4 && out_of_reach => return Expect::Special,
        2 => return Expect::Fail(Nonsense),
        _ => {}
    }
    match order {
        0 => return Expect::MissingInput,
        2 => return Expect::Fail(Disorder),
        _ => {}
    }
    match sim {
        0 => Expect::MissingInput,
        1 => Expect::Success,
        2 => Expect::Fail(Badpose),
        3 => Expect::Fail(Infeasible),
        _ => Expect::Fail(Badpose),
    }
}

#[test]
fn criterion_3_dispatch_table_totality() {
    let parses = [
        ParseResult::Program(Program { context: vec![], steps: vec![] }),
        ParseResult::NonsenseRejection(Evidence::new(EvidenceKind::ImportStatement, None, "import")),
        ParseResult::Refusal { text: "I cannot reach it".into() },
    ];
    let orders = [
        None,
        Some(OrderVerdict::Ok),
        Some(OrderVerdict::DisorderViolation(Violation::Missing { pattern: "rotate".parse().unwrap() })),
    ];
    let sims = [
        None,
        Some(SimOutcome::Completed { goal_met: true }),
        Some(SimOutcome::Completed { goal_met: false }),
        Some(SimOutcome::InfeasibleHalt { waypoint: [0.0, 0.0, 90.0], step_index: 0 }),
        Some(SimOutcome::BadposeEvent { object: "o".into(), kind: BadposeKind::Misaligned, step_index: 0 }),
        Some(SimOutcome::BadposeEvent { object: "o".into(), kind: BadposeKind::Displaced, step_index: 0 }),
        Some(SimOutcome::BadposeEvent { object: "o".into(), kind: BadposeKind::Damaged, step_index: 0 }),
    ];
    let mut reached: BTreeMap<Expect, usize> = BTreeMap::new();
    let mut mismatches = Vec::new();
    let mut cells = 0;
    for (pi, p) in parses.iter().enumerate() {
        for (oi, o) in orders.iter().enumerate() {
            for (si, s) in sims.iter().enumerate() {
                for g in 2..=4u8 {
                    for out in [false, true] {
                        cells += 1;
                        let truth = GroundTruth::from_out_of_workspace(out);
                        let label = |r: Result<TrialOutcome, _>| match r {
                            Ok(TrialOutcome::Success) => Expect::Success,
                            Ok(TrialOutcome::SpecialSuccess { .. }) => Expect::Special,
                            Ok(TrialOutcome::Failure { behavior, .. }) => Expect::Fail(behavior),
                            Err(_) => Expect::MissingInput,
                        };
                        let got = label(classify(p, o.as_ref(), s.as_ref(), g, truth));
                        let again_same = got == label(classify(p, o.as_ref(), s.as_ref(), g, truth));
                        let want = oracle(pi, oi, si, g, out);
                        if got != want || !again_same {
                            mismatches.push(format!("parse {pi} order {oi} sim {si} g {g} out {out}: {got:?} vs {want:?}"));
                        }
                        *reached.entry(got).or_default() += 1;
                    }
                }
            }
        }
    }
    let all_outputs = reached.len() == 7; // success, special, four behaviors, missing input
    let pass = mismatches.is_empty() && all_outputs;
    report(3, pass, &format!("{cells} input cells, {} mismatches, {} distinct outputs reached", mismatches.len(), reached.len()));
    assert!(mismatches.is_empty(), "{mismatches:#?}");
    assert!(all_outputs, "{reached:?}");
}

fn rates(records: &[TrialRecord]) -> BTreeMap<(String, GranularityLevel), f64> {
    aggregate(records).into_iter().map(|s| ((s.cell.task.clone(), s.cell.level), s.success_rate().unwrap())).collect()
}

#[test]
fn criterion_4_complexity_and_granularity_monotonicity() {
    let start = Instant::now();
    let fx = Fixtures::builtin();
    let tasks: Vec<String> = fx.tasks.names().map(String::from).collect();
    let mut cfg = CampaignConfig::new(tasks.clone(), vec![BackendConfig::mock("mock-default", "default")]);
    cfg.trials_per_cell = 50;
    cfg.feedback_enabled = false;
    cfg.base_seed = 2024;
    cfg.concurrency = 4;
    let records = run_campaign(&cfg, &fx, &mut std::io::sink()).unwrap();
    let r = rates(&records);

    let mut problems = Vec::new();
    for level in GranularityLevel::ALL {
        let mut by_c: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        for t in fx.tasks.tasks() {
            by_c.entry(complexity_of(t)).or_default().push(r[&(t.name.clone(), level)]);
        }
        let means: Vec<(u8, f64)> = by_c.iter().map(|(c, v)| (*c, v.iter().sum::<f64>() / v.len() as f64)).collect();
        println!("  level {level}: mean success by complexity {means:?}");
        if means.windows(2).any(|w| w[1].1 > w[0].1) {
            problems.push(format!("level {level} not non-increasing in complexity: {means:?}"));
        }
    }
    for t in &tasks {
        let v: Vec<f64> = GranularityLevel::ALL.iter().map(|l| r[&(t.clone(), *l)]).collect();
        if v.windows(2).any(|w| w[1] < w[0]) {
            problems.push(format!("{t} not non-decreasing in level: {v:?}"));
        }
    }
    let fast = within(start, MONOTONICITY_MAX_SECS);
    let pass = records.len() == 1200 && problems.is_empty() && fast;
    report(4, pass, &format!("{} trials, {} rank violations, {:?}", records.len(), problems.len(), start.elapsed()));
    assert!(problems.is_empty(), "{problems:#?}");
    assert!(pass);
}

#[test]
fn criterion_5_feedback_improvement() {
    let fx = Fixtures::builtin();
    let tasks: Vec<String> = fx.tasks.names().map(String::from).collect();
    let mut cfg = CampaignConfig::new(tasks, vec![BackendConfig::mock("mock-weak", "weak")]);
    cfg.trials_per_cell = 50;
    cfg.base_seed = 35;
    cfg.concurrency = 4;
    cfg.feedback_enabled = false;
    let without = run_campaign(&cfg, &fx, &mut std::io::sink()).unwrap();
    cfg.feedback_enabled = true;
    cfg.max_feedback_rounds = 1;
    let with = run_campaign(&cfg, &fx, &mut std::io::sink()).unwrap();
    let s = paired_comparison(&without, &with).unwrap();
    for t in &s.tasks {
        println!(
            "  {:<20} without {:.2} with {:.2} delta {:+.2} (improved {}, worsened {}, p_worse {:.3})",
            t.task, t.base_rate, t.treated_rate, t.delta, t.improved, t.worsened, t.p_worse
        );
    }
    let best = s.tasks.iter().map(|t| t.delta).fold(f64::MIN, f64::max);
    let never_worse = s.tasks.iter().all(|t| t.delta >= 0.0 && t.p_worse > FEEDBACK_ALPHA);
    let arm = without.len().min(with.len());
    let pass = arm >= FEEDBACK_MIN_TRIALS_PER_ARM && best >= FEEDBACK_MIN_GAIN && never_worse && s.unmatched == 0;
    report(5, pass, &format!("{arm} trials per arm, best task gain {best:+.2}, no task worse: {never_worse}"));
    assert!(pass);
}

/// Independent goal predicates over a discretized final state.
fn oracle_goal(goal: &GoalSpec, w: &WorldState, spawn: &WorldState) -> bool {
    let c = |n: &str| w.objects[n].pose.translation.vector;
    let c0 = |n: &str| spawn.objects[n].pose.translation.vector;
    let held = |n: &str| matches!(&w.gripper, Gripper::Closed { held: Some(h) } if h == n);
    let open = matches!(w.gripper, Gripper::Open);
    match goal {
        GoalSpec::HeldLifted { object, min_rise } => held(object) && c(object).z - c0(object).z >= *min_rise,
        GoalSpec::EeAt { object, tolerance } => {
            let o = &w.objects[object];
            // Height of the world-aligned box around the rotated object.
            let r = o.pose.rotation.to_rotation_matrix();
            let half_z: f64 = (0..3).map(|j| r[(2, j)].abs() * o.extents[j]).sum();
            let top = o.pose.translation.vector + Vec3::new(0.0, 0.0, half_z + TOP_CLEARANCE);
            let d = w.ee_pose.translation.vector - top;
            d.x * d.x + d.y * d.y + d.z * d.z <= tolerance * tolerance
        }
        GoalSpec::Rotated { object, axis, degrees, tolerance_deg, gripper_open } => {
            // The enumeration only rotates about the goal axis or a
            // perpendicular one; the angle is recovered from the quaternion.
            let q = w.objects[object].pose.rotation * spawn.objects[object].pose.rotation.inverse();
            let a = Vec3::from(*axis).normalize();
            let (s, cw) = (q.imag().dot(&a), q.scalar());
            let angle = 2.0 * s.atan2(cw).to_degrees();
            (angle - degrees).abs() <= *tolerance_deg && (!gripper_open || open)
        }
        GoalSpec::Inside { object, zone, planar, gripper_open } => {
            let (p, z, h) = (c(object), c(zone), w.objects[zone].extents);
            let xy = (p.x - z.x).abs() <= h.x && (p.y - z.y).abs() <= h.y;
            xy && (*planar || (p.z - z.z).abs() <= h.z) && (!gripper_open || open)
        }
        GoalSpec::Removed { object, min_rise } => {
            let freed = w.objects[object].anchor.as_ref().is_none_or(|a| a.released);
            freed && c(object).z - c0(object).z >= *min_rise
        }
    }
}

#[test]
fn criterion_6_goal_oracle_equivalence() {
    let fx = Fixtures::builtin();
    let steps = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    let mut positives = 0usize;
    for task in fx.tasks.tasks() {
        let spawn = spawn_for(&fx, &task.name, 5).unwrap();
        let goal = spawn.goal.clone();
        let object = goal.objects()[0].to_string();
        let anchor = spawn.objects[&object].anchor.is_some();
        let (axis, perp) = match &goal {
            GoalSpec::Rotated { axis, .. } => {
                let a = Vec3::from(*axis).normalize();
                let p = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                (a, p)
            }
            _ => (Vec3::z(), Vec3::x()),
        };
        // Grid spacing per goal kind, so the 5x5x5 lattice straddles the
        // goal boundary.
        let (unit, base) = match &goal {
            GoalSpec::HeldLifted { min_rise, .. } | GoalSpec::Removed { min_rise, .. } => {
                (Vec3::new(3.0, 3.0, min_rise / 2.0), spawn.objects[&object].pose.translation.vector + Vec3::new(0.0, 0.0, *min_rise))
            }
            GoalSpec::EeAt { tolerance, .. } => {
                let o = &spawn.objects[&object];
                (Vec3::repeat(tolerance * 0.75), o.pose.translation.vector + Vec3::new(0.0, 0.0, o.extents.z + TOP_CLEARANCE))
            }
            GoalSpec::Inside { zone, .. } => {
                let z = &spawn.objects[zone];
                (z.extents * 0.7, z.pose.translation.vector)
            }
            GoalSpec::Rotated { .. } => (Vec3::repeat(1.0), spawn.objects[&object].pose.translation.vector),
        };
        let grippers = [Gripper::Open, Gripper::Closed { held: Some(object.clone()) }, Gripper::Closed { held: None }];
        let angles: [f64; 5] = [0.0, 45.0, 87.0, 90.0, 180.0];
        for i in steps {
            for j in steps {
                for k in steps {
                    let p = base + Vec3::new(i * unit.x, j * unit.y, k * unit.z);
                    for g in &grippers {
                        for (ai, deg) in angles.iter().enumerate() {
                            for about_perp in [false, true] {
                                for released in [false, true] {
                                    if !anchor && released {
                                        continue;
                                    }
                                    let mut w = spawn.clone();
                                    w.gripper = g.clone();
                                    let ax = if about_perp { perp } else { axis };
                                    let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(ax), deg.to_radians());
                                    {
                                        let o = w.objects.get_mut(&object).unwrap();
                                        if matches!(goal, GoalSpec::EeAt { .. }) {
                                            w.ee_pose.translation = Translation3::from(p);
                                        } else {
                                            o.pose.translation = Translation3::from(p);
                                        }
                                        let o = w.objects.get_mut(&object).unwrap();
                                        o.pose.rotation = rot * o.pose.rotation;
                                        if let Some(a) = o.anchor.as_mut() {
                                            a.released = released;
                                        }
                                    }
                                    let want = oracle_goal(&goal, &w, &spawn);
                                    let got = goal_met(&goal, &w);
                                    checked += 1;
                                    positives += want as usize;
                                    if want != got {
                                        mismatches.push(format!(
                                            "{} ({i},{j},{k}) {g:?} angle#{ai} perp {about_perp} released {released}: got {got}",
                                            task.name
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let pass = mismatches.is_empty() && positives > 0 && positives < checked;
    report(6, pass, &format!("{checked} enumerated states over 8 tasks, {positives} goal states, {} mismatches", mismatches.len()));
    assert!(mismatches.is_empty(), "{:#?}", &mismatches[..mismatches.len().min(20)]);
    assert!(pass);
}

fn strip_timing(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            let r: TrialRecord = serde_json::from_str(l).unwrap();
            serde_json::to_string(&r.without_timing()).unwrap()
        })
        .collect()
}

#[test]
fn criterion_7_determinism() {
    let fx = Fixtures::builtin();
    let tasks: Vec<String> = fx.tasks.names().map(String::from).collect();
    let mut cfg = CampaignConfig::new(
        tasks,
        vec![BackendConfig::mock("mock-default", "default"), BackendConfig::mock("mock-weak", "weak")],
    );
    cfg.trials_per_cell = 10;
    cfg.base_seed = 99;
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (n, conc) in [(0, 1), (1, 4)] {
        cfg.concurrency = conc;
        let path = dir.path().join(format!("run{n}.jsonl"));
        let mut f = std::fs::File::create(&path).unwrap();
        run_campaign(&cfg, &fx, &mut f).unwrap();
        files.push(std::fs::read_to_string(&path).unwrap());
    }
    let a = strip_timing(&files[0]);
    let b = strip_timing(&files[1]);
    let pass = a == b && a.len() == 480;
    report(7, pass, &format!("{} records per run, identical modulo timing: {}", a.len(), a == b));
    assert!(pass);
}

#[test]
fn criterion_8_parser_totality() {
    let fx = Fixtures::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tokens = [
        "composer(", ")", "grasp the ", "move to ", "units above", "rotate the gripper by ", "degrees", "open gripper",
        "import ", "context: \"objects = [", "'a'", "]\"", "\n", "```", "\"planner\" generated code", "cannot", "reach",
        " ", "#", "block", "-", "90", "from the side", "back to default pose",
    ];
    let mut counts = [0usize; 3];
    for i in 0..FUZZ_CASES {
        let bytes: Vec<u8> = if i % 2 == 0 {
            let n = rng.random_range(0..120);
            (0..n).map(|_| rng.random()).collect()
        } else {
            let n = rng.random_range(0..16);
            (0..n).flat_map(|_| tokens[rng.random_range(0..tokens.len())].bytes()).collect()
        };
        let text = String::from_utf8_lossy(&bytes);
        match parse(&text) {
            ParseResult::Program(p) => {
                assert!(!p.steps.is_empty(), "program without steps from {text:?}");
                counts[0] += 1
            }
            ParseResult::NonsenseRejection(_) => counts[1] += 1,
            ParseResult::Refusal { .. } => counts[2] += 1,
        }
    }
    let mut round_trips = 0;
    for t in fx.tasks.names() {
        let ParseResult::Program(p) = parse(&fx.programs.get(t).unwrap().golden) else { panic!("{t} golden") };
        let ParseResult::Program(q) = parse(&p.to_string()) else { panic!("{t} printed") };
        assert_eq!(p, q, "{t}");
        round_trips += 1;
    }
    let pass = counts.iter().sum::<usize>() == FUZZ_CASES && round_trips == 8;
    report(8, pass, &format!("{FUZZ_CASES} inputs -> program {}, nonsense {}, refusal {}; {round_trips} golden round-trips", counts[0], counts[1], counts[2]));
    assert!(pass);
}
