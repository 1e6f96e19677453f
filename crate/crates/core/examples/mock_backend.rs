//! Queries the deterministic mock backend with a rendered prompt, for both
//! shipped presets, and prints what each completion classifies as.
//!
//! cargo run --example mock_backend

use policy_inspect::backend::{BackendConfig, CompletionContext};
use policy_inspect::campaign::{evaluate, spawn_for};
use policy_inspect::config::Fixtures;
use policy_inspect::model::GranularityLevel;
use policy_inspect::prompting::build_prompt;

fn main() {
    let fx = Fixtures::builtin();
    let task = fx.tasks.get("OpenWineBottle").unwrap();
    let level = GranularityLevel::P;
    let bundle = build_prompt(&fx.templates.render(task, level, &fx.sim.workspace).unwrap(), &fx.demo).unwrap();
    for preset in ["default", "weak"] {
        let backend = BackendConfig::mock(&format!("mock-{preset}"), preset).build().unwrap();
        let mut tally = std::collections::BTreeMap::new();
        for seed in 0..40u64 {
            let world = spawn_for(&fx, &task.name, seed).unwrap();
            let perception = world.perceive();
            let c = backend.complete(&bundle, &CompletionContext { seed, perception: &perception }).unwrap();
            let outcome = evaluate(&fx, &task.name, level, &world, &c.text).unwrap().outcome;
            let key = outcome.behavior().map_or("success".to_string(), |b| b.to_string());
            *tally.entry(key).or_insert(0) += 1;
        }
        println!("{}: {tally:?}", backend.model_name());
    }
}
