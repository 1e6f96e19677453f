//! Spawns a seeded scene and executes the task's reference program,
//! printing the trace and the simulator outcome.
//!
//! cargo run --example simulate_scene -- [task] [seed]

use policy_inspect::campaign::spawn_for;
use policy_inspect::config::Fixtures;
use policy_inspect::parse::{parse, ParseResult};
use policy_inspect::sim::execute;

fn main() {
    let mut args = std::env::args().skip(1);
    let task = args.next().unwrap_or_else(|| "PutRubbishInBin".into());
    let seed: u64 = args.next().map_or(3, |s| s.parse().expect("seed is an integer"));

    let fx = Fixtures::builtin();
    let world = spawn_for(&fx, &task, seed).expect("known task");
    println!("scene {} seed {seed}, digest {}", world.scene, &world.digest()[..16]);
    for o in world.objects.values() {
        println!("  {:<10} at {:?}", o.name, o.center().as_slice());
    }
    println!("  target out of workspace: {}", world.target_out_of_workspace());

    let ParseResult::Program(prog) = parse(&fx.programs.get(&task).unwrap().golden) else { unreachable!() };
    let res = execute(&prog, &world, &fx.sim).expect("targets exist in the scene");
    for f in &res.trace {
        let p = f.ee.translation.vector;
        println!(
            "step {:>2} ee ({:7.2}, {:7.2}, {:7.2}) open {:<5} held {:?}",
            f.step_index, p.x, p.y, p.z, f.gripper_open, f.held
        );
    }
    println!("outcome: {:?}", res.outcome);
}
