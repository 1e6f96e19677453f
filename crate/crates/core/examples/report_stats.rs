//! Aggregates records into per-cell statistics and prints the Markdown
//! report. Reads a record file when given one, otherwise runs a small
//! mock campaign first.
//!
//! cargo run --example report_stats -- [records.jsonl]

use std::io::BufReader;

use policy_inspect::backend::BackendConfig;
use policy_inspect::campaign::{read_records, run_campaign, CampaignConfig};
use policy_inspect::config::Fixtures;
use policy_inspect::stats::{aggregate, behavior_proportions, emit_report, ReportFormat};

fn main() {
    let records = match std::env::args().nth(1) {
        Some(path) => read_records(BufReader::new(std::fs::File::open(path).expect("record file"))).expect("valid records"),
        None => {
            let fx = Fixtures::builtin();
            let mut cfg = CampaignConfig::new(vec!["Movement".into(), "LightBulbOut".into()], vec![BackendConfig::mock("mock-weak", "weak")]);
            cfg.trials_per_cell = 20;
            run_campaign(&cfg, &fx, &mut std::io::sink()).unwrap()
        }
    };
    let stats = aggregate(&records);
    print!("{}", emit_report(&stats, None, ReportFormat::Md).unwrap());
    if let Some(s) = stats.iter().find(|s| s.failures() > 0) {
        println!("\nbehavior shares in {}/{}: {:?}", s.cell.task, s.cell.level, behavior_proportions(s).unwrap());
    }
}
