use policy_inspect::check::{check_referents, classify, validate_order, ConstraintLibrary, GroundTruth, OrderVerdict};
use policy_inspect::model::{TaskRegistry, TrialOutcome, UnreliableBehavior};
use policy_inspect::parse::{parse, ParseResult};
use policy_inspect::programs::ProgramLibrary;
use policy_inspect::sim::{execute, SceneLibrary, SimConfig, SimOutcome};

fn outcome(task: &str, text: &str, seed: u64, cfg: &SimConfig) -> (TrialOutcome, Option<SimOutcome>) {
    let reg = TaskRegistry::builtin();
    let t = reg.get(task).unwrap();
    let world = SceneLibrary::builtin().spawn(&t.scene, seed, cfg).unwrap();
    let truth = GroundTruth::from_out_of_workspace(world.target_out_of_workspace());
    let pr = parse(text);
    let ParseResult::Program(p) = &pr else {
        return (classify(&pr, None, None, 2, truth).unwrap(), None);
    };
    let lib = ConstraintLibrary::builtin();
    let mut v = validate_order(p, lib.get(&t.ordering).unwrap(), &t.ordering).unwrap();
    if v == OrderVerdict::Ok {
        v = check_referents(p, world.objects.keys().map(String::as_str));
    }
    if v != OrderVerdict::Ok {
        return (classify(&pr, Some(&v), None, 2, truth).unwrap(), None);
    }
    let sim = execute(p, &world, cfg).unwrap();
    (classify(&pr, Some(&v), Some(&sim.outcome), 2, truth).unwrap(), Some(sim.outcome))
}

#[test]
fn golden_programs_succeed_when_reachable() {
    let cfg = SimConfig::default().with_unreachable_fraction(0.0);
    let progs = ProgramLibrary::builtin();
    for task in TaskRegistry::builtin().names() {
        for seed in 0..120 {
            let (o, sim) = outcome(task, &progs.get(task).unwrap().golden, seed, &cfg);
            assert_eq!(o, TrialOutcome::Success, "{task} seed {seed}: {sim:?}");
        }
    }
}

#[test]
fn golden_programs_halt_when_out_of_reach() {
    let cfg = SimConfig::default().with_unreachable_fraction(1.0);
    let progs = ProgramLibrary::builtin();
    for task in TaskRegistry::builtin().names() {
        for seed in 0..120 {
            let (o, sim) = outcome(task, &progs.get(task).unwrap().golden, seed, &cfg);
            assert_eq!(o.behavior(), Some(UnreliableBehavior::Infeasible), "{task} seed {seed}: {sim:?}");
        }
    }
}

#[test]
fn canned_faults_show_their_behavior() {
    let cfg = SimConfig::default().with_unreachable_fraction(0.0);
    let progs = ProgramLibrary::builtin();
    for task in TaskRegistry::builtin().names() {
        for b in UnreliableBehavior::ALL {
            for seed in 0..120 {
                let (o, sim) = outcome(task, progs.get(task).unwrap().fault(b), seed, &cfg);
                assert_eq!(o.behavior(), Some(b), "{task} {b} seed {seed}: {o:?} {sim:?}");
            }
        }
    }
}
