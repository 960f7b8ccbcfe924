//! Drives a whole experiment bundle through the harness: parse a config,
//! run every arm x seed job, and read back the aggregated summary. The
//! same entry point backs the `seqmem run` command.
//!
//! Run with: cargo run --example harness_run

use seqmem::config::RunConfig;
use seqmem::harness;

const CONFIG: &str = r#"
experiment = "e2"
backend = "discrete"
seeds = [1, 2]

[protocol]
learn_epochs = 2
rehearsal_epochs = 4
"#;

fn main() -> seqmem::Result<()> {
    let cfg = RunConfig::from_toml_str(CONFIG)?;
    let out_dir = std::env::temp_dir().join("seqmem_harness_run_example");
    let report = harness::run(&cfg, &out_dir)?;

    let summary = &report.summary;
    println!(
        "experiment {} on {:?} backend, threshold {}, partial: {}\n",
        summary.experiment, summary.backend, summary.threshold, summary.partial
    );
    for (arm, agg) in &summary.arms {
        println!(
            "arm {arm}: {}/{} seeds reached threshold, mean final accuracy {:?}",
            agg.seeds_reaching_threshold,
            agg.seeds.len(),
            agg.mean_final_accuracy
        );
        for seed in &agg.seeds {
            println!(
                "  seed {}: epochs_to_threshold {:?}, final {:?}",
                seed.seed, seed.summary.epochs_to_threshold, seed.summary.final_accuracy
            );
        }
    }

    let mut files: Vec<_> = std::fs::read_dir(&report.out_dir)?
        .map(|e| Ok(e?.file_name().to_string_lossy().into_owned()))
        .collect::<seqmem::Result<_>>()?;
    files.sort();
    println!("\nwrote {} files to {}:", files.len(), report.out_dir.display());
    for f in &files {
        println!("  {f}");
    }
    Ok(())
}
