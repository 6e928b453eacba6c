//! A small property-suite run with per-suite counts and a CSV report.
use coherence_lab::harness::{self, ReportFormat, Suite, SuiteConfig};

fn main() -> coherence_lab::error::Result<()> {
    let cfg = SuiteConfig::new(vec![Suite::S1, Suite::S6, Suite::S10], 5, 42);
    let report = harness::run_suite(&cfg)?;
    for (suite, c) in &report.summary {
        println!("{suite}: {} items, {} verified, {} falsified", c.items, c.verified, c.falsified);
    }
    let path = std::env::temp_dir().join("coherence-lab-suite.csv");
    harness::emit_report(&report, ReportFormat::Csv, &path)?;
    println!("csv report: {}", path.display());
    Ok(())
}
