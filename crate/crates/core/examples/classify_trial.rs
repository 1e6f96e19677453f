//! Classifies the shipped faulty programs of one task against a reachable
//! scene, showing one completion per unreliable behavior.
//!
//! cargo run --example classify_trial -- [task]

use policy_inspect::campaign::{evaluate, spawn_for};
use policy_inspect::config::Fixtures;
use policy_inspect::model::{GranularityLevel, UnreliableBehavior};

fn main() {
    let task = std::env::args().nth(1).unwrap_or_else(|| "Rotation".into());
    let fx = Fixtures::builtin();
    let seed = (0..).find(|s| !spawn_for(&fx, &task, *s).unwrap().target_out_of_workspace()).unwrap();
    let world = spawn_for(&fx, &task, seed).unwrap();
    let canned = fx.programs.get(&task).expect("known task");

    let mut cases = vec![("golden".to_string(), canned.golden.clone())];
    cases.extend(UnreliableBehavior::ALL.iter().map(|b| (format!("{b} fault"), canned.fault(*b).to_string())));
    for (name, text) in cases {
        let e = evaluate(&fx, &task, GranularityLevel::A, &world, &text).unwrap();
        println!("{name:<18} -> {}", serde_json::to_string(&e.outcome).unwrap());
    }
}
