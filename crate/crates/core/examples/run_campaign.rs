//! Runs a small campaign against the mock backend and writes the records
//! to a JSON-lines file.
//!
//! cargo run --example run_campaign -- [out.jsonl]

use std::fs::File;
use std::io::BufWriter;

use policy_inspect::backend::BackendConfig;
use policy_inspect::campaign::{run_campaign, CampaignConfig};
use policy_inspect::config::Fixtures;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "campaign.jsonl".into());
    let fx = Fixtures::builtin();
    let mut cfg = CampaignConfig::new(
        vec!["Grasp".into(), "ChangeClock".into()],
        vec![BackendConfig::mock("mock-default", "default")],
    );
    cfg.trials_per_cell = 20;
    cfg.base_seed = 1;
    cfg.concurrency = 2;
    let mut sink = BufWriter::new(File::create(&out).expect("output file"));
    let records = run_campaign(&cfg, &fx, &mut sink).expect("campaign runs");
    let retried = records.iter().filter(|r| r.feedback_rounds_used > 0).count();
    let ok = records.iter().filter(|r| r.outcome().is_some_and(|o| o.is_success())).count();
    println!("{} trials, {ok} successes, {retried} used feedback, written to {out}", records.len());
}
