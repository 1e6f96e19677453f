//! Builds the initial prompt for one instruction and the feedback prompt
//! that follows a Disorder failure.
//!
//! cargo run --example build_prompt

use policy_inspect::config::Fixtures;
use policy_inspect::model::{GranularityLevel, UnreliableBehavior};
use policy_inspect::parse::RawCompletion;
use policy_inspect::prompting::{build_feedback_prompt, build_prompt};

fn main() {
    let fx = Fixtures::builtin();
    let task = fx.tasks.get("Grasp").unwrap();
    let ins = fx.templates.render(task, GranularityLevel::C, &fx.sim.workspace).unwrap();
    let bundle = build_prompt(&ins, &fx.demo).unwrap();
    for m in &bundle.messages {
        let head: String = m.content.chars().take(100).collect();
        println!("[{:?}] {head}...", m.role);
    }
    println!("last user message: {}", bundle.last_user());
    println!("digest {}", bundle.digest());

    let failed = RawCompletion::new(fx.programs.get("Grasp").unwrap().fault(UnreliableBehavior::Disorder), "example", 0);
    let fb = build_feedback_prompt(&failed, UnreliableBehavior::Disorder, &ins, &fx.demo, &fx.behaviors);
    println!("\nfeedback message:\n{}", fb.last_user());
}
