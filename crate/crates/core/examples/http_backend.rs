//! Sends one prompt to an OpenAI-compatible endpoint.
//!
//! Needs `POLICY_INSPECT_URL`, `POLICY_INSPECT_MODEL` and `OPENAI_API_KEY`;
//! exits quietly when any is missing.
//!
//! cargo run --example http_backend

use policy_inspect::backend::{BackendConfig, CompletionContext};
use policy_inspect::config::Fixtures;
use policy_inspect::model::GranularityLevel;
use policy_inspect::parse::parse;
use policy_inspect::prompting::build_prompt;

fn main() {
    let (Ok(url), Ok(model), Ok(_)) =
        (std::env::var("POLICY_INSPECT_URL"), std::env::var("POLICY_INSPECT_MODEL"), std::env::var("OPENAI_API_KEY"))
    else {
        println!("set POLICY_INSPECT_URL, POLICY_INSPECT_MODEL and OPENAI_API_KEY to run this example");
        return;
    };
    let fx = Fixtures::builtin();
    let task = fx.tasks.get("Grasp").unwrap();
    let bundle = build_prompt(&fx.templates.render(task, GranularityLevel::A, &fx.sim.workspace).unwrap(), &fx.demo).unwrap();
    let backend = BackendConfig::http(&model, &url, "OPENAI_API_KEY").build().expect("valid backend config");
    match backend.complete(&bundle, &CompletionContext { seed: 0, perception: &[] }) {
        Ok(c) => {
            println!("{} ms\n{}", c.latency_ms, c.text);
            println!("parsed: {:?}", parse(&c.text));
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
