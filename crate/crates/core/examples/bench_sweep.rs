//! A reduced sweep: one task, two seeds, one ratio and one class, written
//! to a temporary directory; prints the generated report.
//!
//!     cargo run --release --example bench_sweep

use speech_unlearn::bench::cmd_bench;
use speech_unlearn::config::parse_config;

fn main() {
    let out = std::env::temp_dir().join("speech-unlearn-bench-sweep");
    let mut cfg = parse_config("tasks = speaker\nseeds = 0, 1\nforget_ratios = 0.05\nforget_classes = 2\nsuperloss = true\n")
        .unwrap();
    cfg.out = out.clone();
    let summary = cmd_bench(&cfg).unwrap();
    println!("{} rows ({} failed) in {}\n", summary.rows.len(), summary.failed(), out.display());
    print!("{}", std::fs::read_to_string(out.join("report.md")).unwrap());
}
