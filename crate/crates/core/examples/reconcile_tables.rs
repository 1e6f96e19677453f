//! Cross-checks the shipped failure-count table against the shipped
//! success-rate table and lists the flagged cells.
//!
//! cargo run --example reconcile_tables

use policy_inspect::stats::{reconcile_fixture, CountTable, RateTable};

fn main() {
    let report = reconcile_fixture(&CountTable::builtin(), &RateTable::builtin()).unwrap();
    println!(
        "{} of {} cells within {:.2} ({:.1}%)",
        report.within_tolerance,
        report.cells.len(),
        report.tolerance,
        100.0 * report.fraction_within()
    );
    for d in report.cells.iter().filter(|d| d.flagged) {
        println!(
            "  {}/{}/{}: {} failures -> {:.2}, published {:.2}, delta {:+.2}",
            d.cell.task, d.cell.level, d.cell.model, d.failures, d.computed, d.published, d.delta
        );
    }
}
