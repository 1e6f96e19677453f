//! Runs the same trials without and with one feedback round and prints
//! the paired per-task comparison.
//!
//! cargo run --example feedback_comparison

use policy_inspect::backend::BackendConfig;
use policy_inspect::campaign::{run_campaign, CampaignConfig};
use policy_inspect::config::Fixtures;
use policy_inspect::stats::{aggregate, emit_report, paired_comparison, ReportFormat};

fn main() {
    let fx = Fixtures::builtin();
    let tasks: Vec<String> = fx.tasks.names().map(String::from).collect();
    let mut cfg = CampaignConfig::new(tasks, vec![BackendConfig::mock("mock-weak", "weak")]);
    cfg.trials_per_cell = 30;
    cfg.concurrency = 4;
    cfg.feedback_enabled = false;
    let without = run_campaign(&cfg, &fx, &mut std::io::sink()).unwrap();
    cfg.feedback_enabled = true;
    let with = run_campaign(&cfg, &fx, &mut std::io::sink()).unwrap();
    let paired = paired_comparison(&without, &with).unwrap();
    let md = emit_report(&aggregate(&with), Some(&paired), ReportFormat::Md).unwrap();
    print!("{}", md.split("## Without vs with feedback").nth(1).map(|s| format!("## Without vs with feedback{s}")).unwrap());
}
