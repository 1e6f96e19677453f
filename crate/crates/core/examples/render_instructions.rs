//! Renders every task at the three granularity levels.
//!
//! cargo run --example render_instructions

use policy_inspect::config::Fixtures;
use policy_inspect::model::granularity_of;

fn main() {
    let fx = Fixtures::builtin();
    for task in fx.tasks.tasks() {
        println!("{}", task.name);
        for (level, ins) in fx.templates.render_all(task, &fx.sim.workspace).unwrap() {
            println!("  {level} (granularity {}): {}", granularity_of(&ins), ins.text);
        }
    }
}
